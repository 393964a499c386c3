//! Velocity-level constraint solver.
//!
//! Bilateral joint rows are solved exactly as one block through a Cholesky
//! factorisation of `J M⁻¹ Jᵀ`. Bounded rows (motors, limits, contacts and
//! friction) are then iterated with projected Gauss-Seidel, each using its
//! response projected onto the joint-consistent velocity space, so bounded
//! impulses never break the joints.

use nalgebra::{Matrix3, Vector3};

pub(crate) type V3 = Vector3<f64>;

/// Inverse mass properties of every body, plus the stacked velocity vector
/// `[v₀, ω₀, v₁, ω₁, …]`.
pub(crate) struct System {
    pub inv_mass: Vec<f64>,
    pub inv_inertia: Vec<Matrix3<f64>>,
    pub u: Vec<f64>,
}

impl System {
    pub fn dim(&self) -> usize {
        self.u.len()
    }

    pub fn linear(&self, body: usize) -> V3 {
        V3::from_column_slice(&self.u[6 * body..6 * body + 3])
    }

    pub fn angular(&self, body: usize) -> V3 {
        V3::from_column_slice(&self.u[6 * body + 3..6 * body + 6])
    }
}

/// Sparse constraint Jacobian touching one or two bodies.
#[derive(Debug, Clone)]
pub(crate) struct Jacobian {
    pub a: usize,
    pub lin_a: V3,
    pub ang_a: V3,
    pub b: Option<usize>,
    pub lin_b: V3,
    pub ang_b: V3,
}

impl Jacobian {
    pub fn single(a: usize, lin: V3, ang: V3) -> Self {
        Self {
            a,
            lin_a: lin,
            ang_a: ang,
            b: None,
            lin_b: V3::zeros(),
            ang_b: V3::zeros(),
        }
    }

    pub fn pair(a: usize, lin_a: V3, ang_a: V3, b: usize, lin_b: V3, ang_b: V3) -> Self {
        Self {
            a,
            lin_a,
            ang_a,
            b: Some(b),
            lin_b,
            ang_b,
        }
    }

    /// Relative rotation of `b` with respect to `a` about `axis`.
    pub fn angular(a: usize, b: usize, axis: V3) -> Self {
        Self::pair(a, V3::zeros(), -axis, b, V3::zeros(), axis)
    }

    pub fn velocity(&self, u: &[f64]) -> f64 {
        let dot = |i: usize, lin: &V3, ang: &V3| {
            let s = &u[6 * i..6 * i + 6];
            lin.x * s[0] + lin.y * s[1] + lin.z * s[2] + ang.x * s[3] + ang.y * s[4] + ang.z * s[5]
        };
        let mut jv = dot(self.a, &self.lin_a, &self.ang_a);
        if let Some(b) = self.b {
            jv += dot(b, &self.lin_b, &self.ang_b);
        }
        jv
    }

    /// `out += scale · M⁻¹ Jᵀ`.
    pub fn add_response(&self, sys: &System, scale: f64, out: &mut [f64]) {
        let mut add = |i: usize, lin: &V3, ang: &V3| {
            let l = lin * (sys.inv_mass[i] * scale);
            let w = sys.inv_inertia[i] * ang * scale;
            let s = &mut out[6 * i..6 * i + 6];
            for k in 0..3 {
                s[k] += l[k];
                s[3 + k] += w[k];
            }
        };
        add(self.a, &self.lin_a, &self.ang_a);
        if let Some(b) = self.b {
            add(b, &self.lin_b, &self.ang_b);
        }
    }
}

/// `M⁻¹ Jᵀ` of one row, kept sparse.
#[derive(Debug, Clone)]
struct Response {
    a: usize,
    lin_a: V3,
    ang_a: V3,
    b: Option<usize>,
    lin_b: V3,
    ang_b: V3,
}

impl Response {
    fn new(sys: &System, j: &Jacobian) -> Self {
        let (lin_b, ang_b) = match j.b {
            Some(b) => (j.lin_b * sys.inv_mass[b], sys.inv_inertia[b] * j.ang_b),
            None => (V3::zeros(), V3::zeros()),
        };
        Self {
            a: j.a,
            lin_a: j.lin_a * sys.inv_mass[j.a],
            ang_a: sys.inv_inertia[j.a] * j.ang_a,
            b: j.b,
            lin_b,
            ang_b,
        }
    }

    fn add_to(&self, scale: f64, out: &mut [f64]) {
        let mut add = |i: usize, lin: &V3, ang: &V3| {
            let s = &mut out[6 * i..6 * i + 6];
            for k in 0..3 {
                s[k] += lin[k] * scale;
                s[3 + k] += ang[k] * scale;
            }
        };
        add(self.a, &self.lin_a, &self.ang_a);
        if let Some(b) = self.b {
            add(b, &self.lin_b, &self.ang_b);
        }
    }

    fn as_jacobian(&self) -> Jacobian {
        Jacobian {
            a: self.a,
            lin_a: self.lin_a,
            ang_a: self.ang_a,
            b: self.b,
            lin_b: self.lin_b,
            ang_b: self.ang_b,
        }
    }
}

/// Cholesky factor that skips structural zeros. With rows ordered leaves
/// first along the joint tree the factor has no fill-in.
struct SparseCholesky {
    n: usize,
    /// Row-major lower triangle.
    l: Vec<f64>,
    /// Off-diagonal non-zero columns of each row.
    nz: Vec<Vec<usize>>,
}

impl SparseCholesky {
    /// Up-looking factorisation: the pattern of each row of `L` is found
    /// by walking the elimination tree from the row's non-zeros in `K`.
    fn new(k: &[f64], n: usize) -> Option<Self> {
        const NONE: usize = usize::MAX;
        let mut l = vec![0.0; n * n];
        let mut nz: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut parent = vec![NONE; n];
        let mut mark = vec![NONE; n];
        let mut pattern = Vec::new();
        for i in 0..n {
            pattern.clear();
            mark[i] = i;
            for j in 0..i {
                if k[i * n + j] == 0.0 {
                    continue;
                }
                let mut p = j;
                while mark[p] != i {
                    mark[p] = i;
                    pattern.push(p);
                    p = parent[p];
                    if p == NONE {
                        break;
                    }
                }
            }
            pattern.sort_unstable();
            let mut diag = k[i * n + i];
            for &j in &pattern {
                let mut s = k[i * n + j];
                for &c in &nz[j] {
                    s -= l[i * n + c] * l[j * n + c];
                }
                let v = s / l[j * n + j];
                l[i * n + j] = v;
                diag -= v * v;
                nz[i].push(j);
                if parent[j] == NONE {
                    parent[j] = i;
                }
            }
            if !(diag > 0.0) {
                return None;
            }
            l[i * n + i] = diag.sqrt();
        }
        Some(Self { n, l, nz })
    }

    /// Solves `L Lᵀ X = B` in place for row-major `B` with `cols` columns.
    fn solve(&self, b: &mut [f64], cols: usize) {
        let n = self.n;
        for i in 0..n {
            for &k in &self.nz[i] {
                let f = self.l[i * n + k];
                let (head, tail) = b.split_at_mut(i * cols);
                let src = &head[k * cols..(k + 1) * cols];
                for (x, s) in tail[..cols].iter_mut().zip(src) {
                    *x -= f * s;
                }
            }
            let d = 1.0 / self.l[i * n + i];
            b[i * cols..(i + 1) * cols].iter_mut().for_each(|x| *x *= d);
        }
        for i in (0..n).rev() {
            let d = 1.0 / self.l[i * n + i];
            b[i * cols..(i + 1) * cols].iter_mut().for_each(|x| *x *= d);
            for &k in &self.nz[i] {
                let f = self.l[i * n + k];
                let (head, tail) = b.split_at_mut(i * cols);
                let src = &tail[..cols];
                for (x, s) in head[k * cols..(k + 1) * cols].iter_mut().zip(src) {
                    *x -= f * s;
                }
            }
        }
    }
}

/// All bilateral rows of one step, solved together.
pub(crate) struct JointBlock {
    rows: Vec<Jacobian>,
    rhs: Vec<f64>,
    responses: Vec<Response>,
    factor: Option<SparseCholesky>,
}

impl JointBlock {
    pub fn new(sys: &System, rows: Vec<Jacobian>, rhs: Vec<f64>) -> Self {
        let m = rows.len();
        let responses: Vec<Response> = rows.iter().map(|r| Response::new(sys, r)).collect();
        let mut k = vec![0.0; m * m];
        for j in 0..m {
            let rj = &responses[j];
            for i in j..m {
                let ri = &rows[i];
                let touches = |b: usize| b == rj.a || Some(b) == rj.b;
                if !touches(ri.a) && !ri.b.is_some_and(touches) {
                    continue;
                }
                let v = pair_dot(ri, &rj.as_jacobian());
                k[i * m + j] = v;
                k[j * m + i] = v;
            }
        }
        // Light regularisation keeps redundant rows (e.g. two welded
        // anchors) factorisable; it is raised only if factorisation fails.
        let scale = (0..m).map(|i| k[i * m + i]).fold(0.0, f64::max).max(1e-12);
        let mut factor = None;
        let mut added = 0.0;
        for reg in [1e-10, 1e-6, 1e-3] {
            if m == 0 {
                break;
            }
            for i in 0..m {
                k[i * m + i] += (reg - added) * scale;
            }
            added = reg;
            factor = SparseCholesky::new(&k, m);
            if factor.is_some() {
                break;
            }
        }
        Self {
            rows,
            rhs,
            responses,
            factor,
        }
    }

    /// Makes the system velocity satisfy every joint row exactly.
    pub fn enforce(&self, u: &mut [f64]) {
        let Some(factor) = &self.factor else { return };
        let mut r: Vec<f64> = self.rows.iter().zip(&self.rhs).map(|(row, t)| t - row.velocity(u)).collect();
        factor.solve(&mut r, 1);
        for (resp, y) in self.responses.iter().zip(&r) {
            resp.add_to(*y, u);
        }
    }

    /// Removes from each velocity change the part that would violate the
    /// joints.
    pub fn project_all(&self, columns: &mut [Vec<f64>]) {
        let Some(factor) = &self.factor else { return };
        let cols = columns.len();
        if cols == 0 {
            return;
        }
        let m = self.rows.len();
        let mut c = vec![0.0; m * cols];
        for (i, row) in self.rows.iter().enumerate() {
            for (j, col) in columns.iter().enumerate() {
                c[i * cols + j] = row.velocity(col);
            }
        }
        factor.solve(&mut c, cols);
        for (i, resp) in self.responses.iter().enumerate() {
            for (j, col) in columns.iter_mut().enumerate() {
                let y = c[i * cols + j];
                if y != 0.0 {
                    resp.add_to(-y, col);
                }
            }
        }
    }
}

/// `J_i · w` where `w` is another row's sparse response.
fn pair_dot(j: &Jacobian, w: &Jacobian) -> f64 {
    let part = |body: usize, lin: &V3, ang: &V3| {
        let mut s = 0.0;
        if body == w.a {
            s += lin.dot(&w.lin_a) + ang.dot(&w.ang_a);
        }
        if Some(body) == w.b {
            s += lin.dot(&w.lin_b) + ang.dot(&w.ang_b);
        }
        s
    };
    let mut s = part(j.a, &j.lin_a, &j.ang_a);
    if let Some(b) = j.b {
        s += part(b, &j.lin_b, &j.ang_b);
    }
    s
}

/// Bounds and target of a row before its response is known.
pub(crate) struct RowSpec {
    pub jac: Jacobian,
    pub rhs: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Scalar row `J u ≥/= rhs` with accumulated impulse clamped to `[lo, hi]`.
#[derive(Debug, Clone)]
pub(crate) struct Row {
    pub jac: Jacobian,
    response: Vec<f64>,
    inv_k: f64,
    pub rhs: f64,
    pub lo: f64,
    pub hi: f64,
    pub impulse: f64,
}

impl Row {
    /// Builds all rows at once so the joint projection runs as one
    /// matrix solve.
    pub fn batch(sys: &System, block: &JointBlock, specs: Vec<RowSpec>) -> Vec<Row> {
        let mut columns: Vec<Vec<f64>> = specs
            .iter()
            .map(|spec| {
                let mut col = vec![0.0; sys.dim()];
                spec.jac.add_response(sys, 1.0, &mut col);
                col
            })
            .collect();
        block.project_all(&mut columns);
        specs
            .into_iter()
            .zip(columns)
            .map(|(spec, response)| {
                let k = spec.jac.velocity(&response);
                Row {
                    jac: spec.jac,
                    response,
                    inv_k: if k > 1e-12 { 1.0 / k } else { 0.0 },
                    rhs: spec.rhs,
                    lo: spec.lo,
                    hi: spec.hi,
                    impulse: 0.0,
                }
            })
            .collect()
    }

    fn apply(&self, u: &mut [f64], delta: f64) {
        for (x, r) in u.iter_mut().zip(&self.response) {
            *x += r * delta;
        }
    }

    fn raw_delta(&self, u: &[f64]) -> f64 {
        (self.rhs - self.jac.velocity(u)) * self.inv_k
    }

    pub fn solve(&mut self, u: &mut [f64]) {
        let new = (self.impulse + self.raw_delta(u)).clamp(self.lo, self.hi);
        let applied = new - self.impulse;
        self.impulse = new;
        if applied != 0.0 {
            self.apply(u, applied);
        }
    }

    pub fn warm_start(&mut self, u: &mut [f64], impulse: f64) {
        let impulse = impulse.clamp(self.lo, self.hi);
        if impulse != 0.0 {
            self.impulse = impulse;
            self.apply(u, impulse);
        }
    }
}

/// Normal row plus two tangential rows sharing an isotropic Coulomb cone.
#[derive(Debug, Clone)]
pub(crate) struct ContactRows {
    pub normal: Row,
    pub t1: Row,
    pub t2: Row,
    pub mu: f64,
}

impl ContactRows {
    /// Solves both tangential directions against the current normal impulse,
    /// box-clamping each and then projecting the pair onto the friction disc.
    pub fn solve_friction(&mut self, u: &mut [f64]) {
        let bound = self.mu * self.normal.impulse;
        let d1 = self.t1.raw_delta(u);
        let d2 = self.t2.raw_delta(u);
        let mut f1 = (self.t1.impulse + d1).clamp(-bound, bound);
        let mut f2 = (self.t2.impulse + d2).clamp(-bound, bound);
        let mag = f1.hypot(f2);
        if mag > bound && mag > 0.0 {
            let s = bound / mag;
            f1 *= s;
            f2 *= s;
        }
        let (a1, a2) = (f1 - self.t1.impulse, f2 - self.t2.impulse);
        self.t1.impulse = f1;
        self.t2.impulse = f2;
        if a1 != 0.0 {
            self.t1.apply(u, a1);
        }
        if a2 != 0.0 {
            self.t2.apply(u, a2);
        }
    }

    pub fn warm_start(&mut self, u: &mut [f64], normal: f64, tangent: &V3) {
        self.normal.warm_start(u, normal);
        let bound = self.mu * self.normal.impulse;
        let mut f1 = tangent.dot(&self.t1.jac.lin_a);
        let mut f2 = tangent.dot(&self.t2.jac.lin_a);
        let mag = f1.hypot(f2);
        if mag > bound && mag > 0.0 {
            f1 *= bound / mag;
            f2 *= bound / mag;
        }
        self.t1.warm_start(u, f1);
        self.t2.warm_start(u, f2);
    }
}
