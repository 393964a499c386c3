//! Terrain height grids.
//!
//! A [`HeightField`] stores node elevations on a regular grid. The surface
//! between nodes is the piecewise-planar triangulation obtained by splitting
//! every cell along its south-west to north-east diagonal, so sampling,
//! normals and contact detection all see the same geometry.
//!
//! Storage follows the raster convention used by elevation files: row-major,
//! row 0 is the northern (largest `y`) edge and column 0 the western edge.

mod dem;
mod generate;
mod local_map;

pub use dem::{load_dem, parse_dem};
pub use generate::{
    add_ellipsoids, gaussian_bump, generate_perlin, make_slope, stamp_ellipsoids, EllipsoidGroup,
    PerlinParams, Region, SemiEllipsoid, TerrainRecipe, MAX_PROCEDURAL_RANGE,
};
pub use local_map::{
    local_height_map, LocalMap, LOCAL_MAP_AHEAD, LOCAL_MAP_BEHIND, LOCAL_MAP_COLS,
    LOCAL_MAP_HALF_WIDTH, LOCAL_MAP_HEIGHT_SCALE, LOCAL_MAP_ROWS,
};

use nalgebra::Vector3;

use crate::error::{config_err, Error, Result};

/// Slack allowed on bounds checks so queries exactly on the border pass.
const BOUNDS_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    nx: usize,
    ny: usize,
    width: f64,
    depth: f64,
    x_min: f64,
    y_min: f64,
    heights: Vec<f64>,
}

/// Interpolated height and the normal of the containing triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub height: f64,
    pub normal: Vector3<f64>,
}

/// One planar element of the triangulated surface, vertices in world space.
#[derive(Debug, Clone, Copy)]
pub struct Triangle {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub c: Vector3<f64>,
}

impl HeightField {
    /// Builds a field from raster-ordered heights (row 0 = north).
    pub fn new(
        nx: usize,
        ny: usize,
        width: f64,
        depth: f64,
        origin: (f64, f64),
        heights: Vec<f64>,
    ) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(config_err(format!(
                "height field needs at least 2x2 nodes, got {nx}x{ny}"
            )));
        }
        if !(width > 0.0 && depth > 0.0 && width.is_finite() && depth.is_finite()) {
            return Err(config_err(format!(
                "height field extent must be positive, got {width} x {depth}"
            )));
        }
        if heights.len() != nx * ny {
            return Err(Error::Shape(format!(
                "expected {} heights for a {nx}x{ny} grid, got {}",
                nx * ny,
                heights.len()
            )));
        }
        if let Some(i) = heights.iter().position(|h| !h.is_finite()) {
            return Err(config_err(format!("non-finite height at index {i}")));
        }
        Ok(Self {
            nx,
            ny,
            width,
            depth,
            x_min: origin.0,
            y_min: origin.1,
            heights,
        })
    }

    /// Square field of `resolution`×`resolution` nodes covering `size`×`size`
    /// metres centred on the origin, with heights from `f(x, y)`.
    pub fn from_fn(size: f64, resolution: usize, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        if resolution < 2 {
            return Err(config_err(format!(
                "resolution must be at least 2, got {resolution}"
            )));
        }
        if !(size > 0.0 && size.is_finite()) {
            return Err(config_err(format!("terrain size must be positive, got {size}")));
        }
        let half = size / 2.0;
        let step = size / (resolution - 1) as f64;
        let mut heights = Vec::with_capacity(resolution * resolution);
        for row in 0..resolution {
            let y = half - row as f64 * step;
            for col in 0..resolution {
                let x = -half + col as f64 * step;
                heights.push(f(x, y));
            }
        }
        Self::new(resolution, resolution, size, size, (-half, -half), heights)
    }

    pub fn flat(size: f64, resolution: usize) -> Result<Self> {
        Self::from_fn(size, resolution, |_, _| 0.0)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    pub fn dx(&self) -> f64 {
        self.width / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        self.depth / (self.ny - 1) as f64
    }

    /// (x_min, y_min, x_max, y_max)
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        (
            self.x_min,
            self.y_min,
            self.x_min + self.width,
            self.y_min + self.depth,
        )
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x_min + self.width / 2.0, self.y_min + self.depth / 2.0)
    }

    /// Raster-ordered heights (row 0 = north).
    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub(crate) fn heights_mut(&mut self) -> &mut [f64] {
        &mut self.heights
    }

    pub fn node_height(&self, col: usize, row: usize) -> f64 {
        self.heights[row * self.nx + col]
    }

    pub fn node_position(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.x_min + col as f64 * self.dx(),
            self.y_min + self.depth - row as f64 * self.dy(),
        )
    }

    pub fn min_height(&self) -> f64 {
        self.heights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_height(&self) -> f64 {
        self.heights.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn height_range(&self) -> f64 {
        self.max_height() - self.min_height()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (x0, y0, x1, y1) = self.bounds();
        x >= x0 - BOUNDS_EPS && x <= x1 + BOUNDS_EPS && y >= y0 - BOUNDS_EPS && y <= y1 + BOUNDS_EPS
    }

    /// Same field translated so its centre lies on the origin.
    pub fn recentered(mut self) -> Self {
        self.x_min = -self.width / 2.0;
        self.y_min = -self.depth / 2.0;
        self
    }

    /// Locates `(x, y)` as cell indices plus local coordinates `(u, v)` in
    /// `[0, 1]`, `u` eastward and `v` northward from the south-west corner.
    fn locate(&self, x: f64, y: f64) -> (usize, usize, f64, f64) {
        let fx = ((x - self.x_min) / self.dx()).clamp(0.0, (self.nx - 1) as f64);
        // Rows count southward from the northern edge.
        let fy = ((self.y_min + self.depth - y) / self.dy()).clamp(0.0, (self.ny - 1) as f64);
        let col = (fx.floor() as usize).min(self.nx - 2);
        let row = (fy.floor() as usize).min(self.ny - 2);
        let u = fx - col as f64;
        // v measured from the southern edge of the cell (row + 1).
        let v = 1.0 - (fy - row as f64);
        (col, row, u, v)
    }

    /// Corner heights of a cell: (south-west, south-east, north-west, north-east).
    fn corners(&self, col: usize, row: usize) -> (f64, f64, f64, f64) {
        let north = row * self.nx + col;
        let south = (row + 1) * self.nx + col;
        (
            self.heights[south],
            self.heights[south + 1],
            self.heights[north],
            self.heights[north + 1],
        )
    }

    fn interpolate(&self, x: f64, y: f64) -> SurfaceSample {
        let (col, row, u, v) = self.locate(x, y);
        let (sw, se, nw, ne) = self.corners(col, row);
        let (dx, dy) = (self.dx(), self.dy());
        // South-east triangle holds u >= v, north-west triangle the rest.
        let (height, gx, gy) = if u >= v {
            (
                sw + u * (se - sw) + v * (ne - se),
                (se - sw) / dx,
                (ne - se) / dy,
            )
        } else {
            (
                sw + v * (nw - sw) + u * (ne - nw),
                (ne - nw) / dx,
                (nw - sw) / dy,
            )
        };
        SurfaceSample {
            height,
            normal: Vector3::new(-gx, -gy, 1.0).normalize(),
        }
    }

    /// Height and triangle normal at `(x, y)`; errors outside the field.
    pub fn sample(&self, x: f64, y: f64) -> Result<SurfaceSample> {
        if !self.contains(x, y) || !x.is_finite() || !y.is_finite() {
            return Err(Error::OutOfRange { x, y });
        }
        Ok(self.interpolate(x, y))
    }

    pub fn sample_height(&self, x: f64, y: f64) -> Result<f64> {
        self.sample(x, y).map(|s| s.height)
    }

    /// Like [`sample`](Self::sample) but clamps the query onto the field, so
    /// points beyond the border take the nearest edge height.
    pub fn sample_clamped(&self, x: f64, y: f64) -> SurfaceSample {
        let (x0, y0, x1, y1) = self.bounds();
        let x = if x.is_finite() { x.clamp(x0, x1) } else { x0 };
        let y = if y.is_finite() { y.clamp(y0, y1) } else { y0 };
        self.interpolate(x, y)
    }

    /// Cell index range whose footprint intersects the rectangle, clipped to
    /// the grid. `None` when the rectangle misses the field.
    pub fn cells_overlapping(
        &self,
        x_lo: f64,
        x_hi: f64,
        y_lo: f64,
        y_hi: f64,
    ) -> Option<(usize, usize, usize, usize)> {
        let (bx0, by0, bx1, by1) = self.bounds();
        if x_hi < bx0 || x_lo > bx1 || y_hi < by0 || y_lo > by1 {
            return None;
        }
        let to_col = |x: f64| ((x - self.x_min) / self.dx()).floor();
        let to_row = |y: f64| ((self.y_min + self.depth - y) / self.dy()).floor();
        let max_col = (self.nx - 2) as f64;
        let max_row = (self.ny - 2) as f64;
        let c0 = to_col(x_lo).clamp(0.0, max_col) as usize;
        let c1 = to_col(x_hi).clamp(0.0, max_col) as usize;
        let r0 = to_row(y_hi).clamp(0.0, max_row) as usize;
        let r1 = to_row(y_lo).clamp(0.0, max_row) as usize;
        Some((c0, c1, r0, r1))
    }

    /// Vertical extent of a cell's four corners.
    pub fn cell_height_range(&self, col: usize, row: usize) -> (f64, f64) {
        let (sw, se, nw, ne) = self.corners(col, row);
        (sw.min(se).min(nw).min(ne), sw.max(se).max(nw).max(ne))
    }

    /// The two triangles of a cell (south-east first).
    pub fn cell_triangles(&self, col: usize, row: usize) -> [Triangle; 2] {
        let (sw, se, nw, ne) = self.corners(col, row);
        let (x0, y1) = self.node_position(col, row);
        let (x1, y0) = self.node_position(col + 1, row + 1);
        let p_sw = Vector3::new(x0, y0, sw);
        let p_se = Vector3::new(x1, y0, se);
        let p_nw = Vector3::new(x0, y1, nw);
        let p_ne = Vector3::new(x1, y1, ne);
        [
            Triangle {
                a: p_sw,
                b: p_se,
                c: p_ne,
            },
            Triangle {
                a: p_sw,
                b: p_ne,
                c: p_nw,
            },
        ]
    }
}
