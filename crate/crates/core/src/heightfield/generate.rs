//! Procedural terrain construction.

use std::path::PathBuf;

use noise::{Fbm, MultiFractal, NoiseFn, Perlin};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HeightField;
use crate::error::{config_err, Result};

/// Cap on max − min elevation for procedurally generated fields.
pub const MAX_PROCEDURAL_RANGE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerlinParams {
    /// Peak noise amplitude in metres, before range limiting.
    pub amplitude: f64,
    /// Base spatial frequency in 1/m.
    pub frequency: f64,
    pub octaves: usize,
}

impl Default for PerlinParams {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            frequency: 0.05,
            octaves: 4,
        }
    }
}

/// Fractal Perlin terrain on a square field centred on the origin.
///
/// Heights are `amplitude * fbm(x, y)`; when the resulting range exceeds
/// [`MAX_PROCEDURAL_RANGE`] the whole field is rescaled to fit.
pub fn generate_perlin(
    seed: u64,
    params: &PerlinParams,
    size: f64,
    resolution: usize,
) -> Result<HeightField> {
    if params.amplitude < 0.0 || !params.amplitude.is_finite() {
        return Err(config_err(format!(
            "Perlin amplitude must be non-negative, got {}",
            params.amplitude
        )));
    }
    if !(params.frequency > 0.0 && params.frequency.is_finite()) {
        return Err(config_err(format!(
            "Perlin frequency must be positive, got {}",
            params.frequency
        )));
    }
    if params.octaves == 0 || params.octaves > Fbm::<Perlin>::MAX_OCTAVES {
        return Err(config_err(format!(
            "Perlin octaves must be in 1..={}, got {}",
            Fbm::<Perlin>::MAX_OCTAVES,
            params.octaves
        )));
    }
    let folded = (seed ^ (seed >> 32)) as u32;
    let fbm = Fbm::<Perlin>::new(folded)
        .set_octaves(params.octaves)
        .set_frequency(params.frequency);
    let amplitude = params.amplitude;
    let mut hf = HeightField::from_fn(size, resolution, |x, y| {
        if amplitude == 0.0 {
            0.0
        } else {
            amplitude * fbm.get([x, y])
        }
    })?;
    limit_range(&mut hf, MAX_PROCEDURAL_RANGE);
    Ok(hf)
}

/// Scales heights about zero so that max − min ≤ `cap`.
fn limit_range(hf: &mut HeightField, cap: f64) {
    let range = hf.height_range();
    if range > cap {
        // Shave a few ulps so rounding cannot push the range back over.
        let scale = cap / range * (1.0 - 1e-12);
        for h in hf.heights_mut() {
            *h *= scale;
        }
    }
}

/// Planar incline rising along +x with gradient `tan(angle)`.
pub fn make_slope(angle_deg: f64, size: f64, resolution: usize) -> Result<HeightField> {
    if !(0.0..90.0).contains(&angle_deg) {
        return Err(config_err(format!(
            "slope angle must lie in [0, 90) degrees, got {angle_deg}"
        )));
    }
    let gradient = angle_deg.to_radians().tan();
    HeightField::from_fn(size, resolution, |x, _| gradient * x)
}

/// Rotationally symmetric Gaussian bump centred on the origin.
pub fn gaussian_bump(height: f64, sigma: f64, size: f64, resolution: usize) -> Result<HeightField> {
    if height < 0.0 || !height.is_finite() {
        return Err(config_err(format!("bump height must be non-negative, got {height}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(config_err(format!("bump sigma must be positive, got {sigma}")));
    }
    let two_var = 2.0 * sigma * sigma;
    HeightField::from_fn(size, resolution, |x, y| {
        height * (-(x * x + y * y) / two_var).exp()
    })
}

/// Oriented rectangle in the horizontal plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub center: (f64, f64),
    /// Half extent along the rectangle's own x axis.
    pub half_length: f64,
    /// Half extent along the rectangle's own y axis.
    pub half_width: f64,
    /// Rotation of the rectangle's x axis from world +x, radians.
    pub angle: f64,
}

impl Region {
    pub fn axis_aligned(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            center: ((x0 + x1) / 2.0, (y0 + y1) / 2.0),
            half_length: (x1 - x0).abs() / 2.0,
            half_width: (y1 - y0).abs() / 2.0,
            angle: 0.0,
        }
    }

    /// Rectangle spanning the segment from `start` to `end`, `width` wide.
    pub fn corridor(start: (f64, f64), end: (f64, f64), width: f64) -> Self {
        let (dx, dy) = (end.0 - start.0, end.1 - start.1);
        Self {
            center: ((start.0 + end.0) / 2.0, (start.1 + end.1) / 2.0),
            half_length: dx.hypot(dy) / 2.0,
            half_width: width / 2.0,
            angle: dy.atan2(dx),
        }
    }

    pub fn to_world(&self, u: f64, v: f64) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        (self.center.0 + c * u - s * v, self.center.1 + s * u + c * v)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        u.abs() <= self.half_length + 1e-9 && v.abs() <= self.half_width + 1e-9
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        let (l, w) = (self.half_length, self.half_width);
        [
            self.to_world(-l, -w),
            self.to_world(l, -w),
            self.to_world(l, w),
            self.to_world(-l, w),
        ]
    }
}

/// Half of an ellipsoid resting on the terrain, used as a boulder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemiEllipsoid {
    pub center: (f64, f64),
    /// Horizontal semi-axes (half the footprint extents), metres.
    pub semi_axes: (f64, f64),
    /// Yaw of the first semi-axis, radians.
    pub yaw: f64,
    /// Apex height above `base`.
    pub height: f64,
    /// Elevation of the footprint plane.
    pub base: f64,
}

impl SemiEllipsoid {
    pub fn surface(&self, x: f64, y: f64) -> Option<f64> {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let u = (c * dx + s * dy) / self.semi_axes.0;
        let v = (-s * dx + c * dy) / self.semi_axes.1;
        let q = u * u + v * v;
        (q < 1.0).then(|| self.base + self.height * (1.0 - q).sqrt())
    }
}

/// Composes boulders into `hf` by pointwise maximum.
pub fn stamp_ellipsoids(hf: &HeightField, ellipsoids: &[SemiEllipsoid]) -> HeightField {
    let mut out = hf.clone();
    let (nx, ny) = (hf.nx(), hf.ny());
    for e in ellipsoids {
        let reach = e.semi_axes.0.max(e.semi_axes.1);
        let Some((c0, c1, r0, r1)) = hf.cells_overlapping(
            e.center.0 - reach,
            e.center.0 + reach,
            e.center.1 - reach,
            e.center.1 + reach,
        ) else {
            continue;
        };
        for row in r0..=(r1 + 1).min(ny - 1) {
            for col in c0..=(c1 + 1).min(nx - 1) {
                let (x, y) = hf.node_position(col, row);
                if let Some(z) = e.surface(x, y) {
                    let h = &mut out.heights_mut()[row * nx + col];
                    *h = h.max(z);
                }
            }
        }
    }
    out
}

/// Number and size distribution of one family of boulders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipsoidGroup {
    pub count: usize,
    /// Full footprint extent per axis, metres.
    pub size_range: (f64, f64),
    pub height_range: (f64, f64),
}

impl EllipsoidGroup {
    /// Large boulders: footprints in [0.5, 3.5] m, heights in [0.25, 1.75] m.
    pub fn boulders(count: usize) -> Self {
        Self {
            count,
            size_range: (0.5, 3.5),
            height_range: (0.25, 1.75),
        }
    }

    pub fn sample(
        &self,
        rng: &mut impl Rng,
        region: &Region,
        base: &HeightField,
    ) -> Result<Vec<SemiEllipsoid>> {
        let (s0, s1) = self.size_range;
        let (h0, h1) = self.height_range;
        if !(s0 > 0.0 && s1 >= s0 && h0 >= 0.0 && h1 >= h0) {
            return Err(config_err(format!(
                "invalid ellipsoid ranges: size {:?}, height {:?}",
                self.size_range, self.height_range
            )));
        }
        for (x, y) in region.corners() {
            if !base.contains(x, y) {
                return Err(config_err(format!(
                    "ellipsoid region corner ({x:.2}, {y:.2}) lies outside the terrain"
                )));
            }
        }
        let mut out = Vec::with_capacity(self.count);
        for _ in 0..self.count {
            let u = rng.random_range(-1.0..=1.0) * region.half_length;
            let v = rng.random_range(-1.0..=1.0) * region.half_width;
            let center = region.to_world(u, v);
            let a = rng.random_range(s0..=s1) / 2.0;
            let b = rng.random_range(s0..=s1) / 2.0;
            let yaw = rng.random_range(0.0..std::f64::consts::PI);
            let height = rng.random_range(h0..=h1);
            let base_h = base.sample_clamped(center.0, center.1).height;
            out.push(SemiEllipsoid {
                center,
                semi_axes: (a, b),
                yaw,
                height,
                base: base_h,
            });
        }
        Ok(out)
    }
}

/// Adds `n` random semi-ellipsoids with apexes inside `region`.
pub fn add_ellipsoids(
    hf: &HeightField,
    n: usize,
    rng_seed: u64,
    region: &Region,
    size_range: (f64, f64),
    height_range: (f64, f64),
) -> Result<HeightField> {
    let group = EllipsoidGroup {
        count: n,
        size_range,
        height_range,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let ellipsoids = group.sample(&mut rng, region, hf)?;
    Ok(stamp_ellipsoids(hf, &ellipsoids))
}

/// Serializable description of how to build a terrain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerrainRecipe {
    Flat {
        size: f64,
        resolution: usize,
    },
    Perlin {
        seed: u64,
        #[serde(flatten)]
        params: PerlinParams,
        size: f64,
        resolution: usize,
    },
    Slope {
        angle_deg: f64,
        size: f64,
        resolution: usize,
    },
    GaussianBump {
        height: f64,
        sigma: f64,
        size: f64,
        resolution: usize,
    },
    /// Elevation grid file, recentred on the origin.
    Dem {
        path: PathBuf,
    },
}

impl TerrainRecipe {
    pub fn build(&self) -> Result<HeightField> {
        match self {
            Self::Flat { size, resolution } => HeightField::flat(*size, *resolution),
            Self::Perlin {
                seed,
                params,
                size,
                resolution,
            } => generate_perlin(*seed, params, *size, *resolution),
            Self::Slope {
                angle_deg,
                size,
                resolution,
            } => make_slope(*angle_deg, *size, *resolution),
            Self::GaussianBump {
                height,
                sigma,
                size,
                resolution,
            } => gaussian_bump(*height, *sigma, *size, *resolution),
            Self::Dem { path } => Ok(super::load_dem(path)?.recentered()),
        }
    }

    /// Same recipe with a different noise seed (no-op for deterministic shapes).
    pub fn with_seed(&self, new_seed: u64) -> Self {
        match self {
            Self::Perlin {
                params,
                size,
                resolution,
                ..
            } => Self::Perlin {
                seed: new_seed,
                params: *params,
                size: *size,
                resolution: *resolution,
            },
            other => other.clone(),
        }
    }
}
