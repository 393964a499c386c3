//! Sphere against triangulated height field.

use nalgebra::Vector3;

use super::body::BodyId;
use crate::heightfield::{HeightField, Triangle};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPoint {
    pub body: BodyId,
    /// Index into the body's collider list.
    pub collider: usize,
    /// Closest point on the terrain surface.
    pub position: Vector3<f64>,
    /// Unit normal pointing from the terrain into the sphere.
    pub normal: Vector3<f64>,
    pub depth: f64,
    /// Normal force over the last step, N (≥ 0).
    pub normal_force: f64,
    /// Tangential (friction) force over the last step, N.
    pub tangent_force: Vector3<f64>,
}

/// Geometric part of a contact, before forces are known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereHit {
    pub position: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub depth: f64,
}

/// Closest point on a triangle to `p` (Ericson, Real-Time Collision Detection 5.1.5).
pub fn closest_point_on_triangle(p: &Vector3<f64>, t: &Triangle) -> Vector3<f64> {
    let (a, b, c) = (t.a, t.b, t.c);
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Deepest intersection of a sphere with the terrain surface, merging all
/// triangle hits into one contact. `None` when the sphere is separated.
pub fn sphere_terrain(hf: &HeightField, center: &Vector3<f64>, radius: f64) -> Option<SphereHit> {
    let (x0, y0, x1, y1) = hf.bounds();
    if center.x < x0 || center.x > x1 || center.y < y0 || center.y > y1 {
        // Beyond the field the ground continues as a level plane at the edge height.
        let h = hf.sample_clamped(center.x, center.y).height;
        let depth = radius - (center.z - h);
        return (depth > 0.0).then(|| SphereHit {
            position: Vector3::new(center.x, center.y, h),
            normal: Vector3::z(),
            depth,
        });
    }

    // A centre below the surface would give an inverted normal; push out
    // along the local surface normal instead.
    let surface = hf.sample_clamped(center.x, center.y);
    if center.z < surface.height {
        let n = surface.normal;
        let depth = (surface.height - center.z) * n.z + radius;
        return Some(SphereHit {
            position: Vector3::new(center.x, center.y, surface.height),
            normal: n,
            depth,
        });
    }

    let (c0, c1, r0, r1) = hf.cells_overlapping(
        center.x - radius,
        center.x + radius,
        center.y - radius,
        center.y + radius,
    )?;
    let r2 = radius * radius;
    let mut best: Option<(f64, Vector3<f64>)> = None;
    for row in r0..=r1 {
        for col in c0..=c1 {
            let (zmin, zmax) = hf.cell_height_range(col, row);
            let (cx0, cy1) = hf.node_position(col, row);
            let (cx1, cy0) = hf.node_position(col + 1, row + 1);
            let ddx = (cx0 - center.x).max(0.0).max(center.x - cx1);
            let ddy = (cy0 - center.y).max(0.0).max(center.y - cy1);
            let ddz = (zmin - center.z).max(0.0).max(center.z - zmax);
            let box_d2 = ddx * ddx + ddy * ddy + ddz * ddz;
            if box_d2 >= r2 || best.is_some_and(|(d2, _)| box_d2 >= d2) {
                continue;
            }
            for tri in hf.cell_triangles(col, row) {
                let q = closest_point_on_triangle(center, &tri);
                let d2 = (center - q).norm_squared();
                if d2 < r2 && best.is_none_or(|(bd2, _)| d2 < bd2) {
                    best = Some((d2, q));
                }
            }
        }
    }
    let (d2, q) = best?;
    let d = d2.sqrt();
    let normal = if d > 1e-12 {
        (center - q) / d
    } else {
        surface.normal
    };
    Some(SphereHit {
        position: q,
        normal,
        depth: radius - d,
    })
}
