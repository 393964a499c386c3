//! Vehicle-centric height patch used as the exteroceptive observation.

use super::HeightField;

pub const LOCAL_MAP_ROWS: usize = 30;
pub const LOCAL_MAP_COLS: usize = 20;
/// Patch reach ahead of the reference frame, metres.
pub const LOCAL_MAP_AHEAD: f64 = 10.0;
/// Patch reach behind the reference frame, metres.
pub const LOCAL_MAP_BEHIND: f64 = 5.0;
/// Half of the lateral extent, metres.
pub const LOCAL_MAP_HALF_WIDTH: f64 = 5.0;
/// Relative heights in `[-H, H]` map affinely onto `[0, 1]`.
pub const LOCAL_MAP_HEIGHT_SCALE: f64 = 5.0;

/// 30×20 grid of normalised relative heights, row-major. Row 0 is the
/// farthest-ahead line of samples, column 0 the leftmost.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMap {
    pub values: Vec<f64>,
    /// (x, y, heading) of the frame the patch was extracted in.
    pub pose: (f64, f64, f64),
    pub reference_height: f64,
}

impl LocalMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * LOCAL_MAP_COLS + col]
    }

    /// Sample location of a cell in the vehicle frame (forward, left).
    pub fn cell_offset(row: usize, col: usize) -> (f64, f64) {
        let dl = (LOCAL_MAP_AHEAD + LOCAL_MAP_BEHIND) / LOCAL_MAP_ROWS as f64;
        let dw = 2.0 * LOCAL_MAP_HALF_WIDTH / LOCAL_MAP_COLS as f64;
        (
            LOCAL_MAP_AHEAD - (row as f64 + 0.5) * dl,
            LOCAL_MAP_HALF_WIDTH - (col as f64 + 0.5) * dw,
        )
    }
}

/// Samples the terrain on the patch that follows the vehicle's position and
/// heading. Heights are taken relative to `reference_height` and normalised.
pub fn local_height_map(hf: &HeightField, pose: (f64, f64, f64), reference_height: f64) -> LocalMap {
    let (x0, y0, heading) = pose;
    let (s, c) = heading.sin_cos();
    let mut values = Vec::with_capacity(LOCAL_MAP_ROWS * LOCAL_MAP_COLS);
    for row in 0..LOCAL_MAP_ROWS {
        for col in 0..LOCAL_MAP_COLS {
            let (fwd, left) = LocalMap::cell_offset(row, col);
            let x = x0 + c * fwd - s * left;
            let y = y0 + s * fwd + c * left;
            let h = hf.sample_clamped(x, y).height;
            let rel = h - reference_height;
            values.push(((rel + LOCAL_MAP_HEIGHT_SCALE) / (2.0 * LOCAL_MAP_HEIGHT_SCALE)).clamp(0.0, 1.0));
        }
    }
    LocalMap {
        values,
        pose,
        reference_height,
    }
}
