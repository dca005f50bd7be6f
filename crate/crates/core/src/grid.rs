//! Graded radial grids, weighted quadrature and profile algebra.
//!
//! All integrals over ℝ^N of radial integrands reduce to
//! `ω_{N-1} ∫_0^∞ r^{N-1} f(r) dr` with `ω_{N-1} = 2π^{N/2}/Γ(N/2)`.
//! Profiles carry node values of `u` and `u'`; between nodes they are the
//! C¹ cubic Hermite interpolant, and every norm or potential integral is a
//! composite 4-point Gauss-Legendre rule on that interpolant. Derivatives are
//! stored, never differenced: the shooting integrator supplies `u'` natively
//! and analytic profiles are sampled with their exact derivative, which keeps
//! `|u'|^e` accurate for large exponents.
//!
//! Grids pack 25% of the cells geometrically into `[0, 1]` (width ratio 1.05)
//! to resolve the startup layer at the origin and spread the rest uniformly
//! out to `r_max`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

/// Geometric cell-width ratio of the graded region.
const GRADING_RATIO: f64 = 1.05;

/// 4-point Gauss-Legendre abscissae and weights on [-1, 1].
const GAUSS_X: [f64; 4] = [
    -0.8611363115940526,
    -0.3399810435848563,
    0.3399810435848563,
    0.8611363115940526,
];
const GAUSS_W: [f64; 4] = [
    0.3478548451374538,
    0.6521451548625461,
    0.6521451548625461,
    0.3478548451374538,
];

#[derive(Debug, Clone, PartialEq)]
pub enum GridError {
    BadGrid(String),
    BadProfile(String),
}

impl fmt::Display for GridError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridError::BadGrid(m) => write!(f, "bad grid: {m}"),
            GridError::BadProfile(m) => write!(f, "bad profile: {m}"),
        }
    }
}

impl std::error::Error for GridError {}

/// `Γ(n/2)` for integer `n ≥ 1`.
fn gamma_half(n: u32) -> f64 {
    if n.is_multiple_of(2) {
        // Γ(m) = (m-1)!
        (1..n / 2).map(|i| i as f64).product()
    } else {
        let mut g = PI.sqrt();
        let mut x = 0.5;
        while x + 1.0 <= n as f64 / 2.0 {
            g *= x;
            x += 1.0;
        }
        g
    }
}

/// Surface area of the unit sphere in ℝ^N.
pub fn sphere_area(n_dim: u32) -> f64 {
    2.0 * PI.powf(n_dim as f64 / 2.0) / gamma_half(n_dim)
}

/// A radial grid `0 = r_0 < r_1 < ... < r_M = r_max` with precomputed
/// weighted quadrature points.
#[derive(Debug, Clone)]
pub struct RadialGrid {
    n_dim: u32,
    nodes: Vec<f64>,
    sphere_area: f64,
    /// Gauss points per cell, flattened (4 per cell).
    quad_r: Vec<f64>,
    /// Gauss weight times `r^{N-1}` times the cell half-width.
    quad_w: Vec<f64>,
}

impl RadialGrid {
    /// Graded grid with `m` cells: `m/4` geometric cells on `[0, 1]`,
    /// the remainder uniform on `[1, r_max]`. Requires `m ≥ 64`, `r_max > 1`.
    pub fn graded(n_dim: u32, r_max: f64, m: usize) -> Result<Self, GridError> {
        if n_dim < 3 {
            return Err(GridError::BadGrid(format!("need N >= 3, got {n_dim}")));
        }
        if m < 64 {
            return Err(GridError::BadGrid(format!("need at least 64 cells, got {m}")));
        }
        if !(r_max > 1.0) || !r_max.is_finite() {
            return Err(GridError::BadGrid(format!("need r_max > 1, got {r_max}")));
        }
        let m_geo = m / 4;
        let mut nodes = Vec::with_capacity(m + 1);
        nodes.push(0.0);
        // Cell widths w0 * ratio^i summing to 1 over the geometric region.
        let w0 = (GRADING_RATIO - 1.0) / (GRADING_RATIO.powi(m_geo as i32) - 1.0);
        let mut w = w0;
        let mut r = 0.0;
        for _ in 0..m_geo - 1 {
            r += w;
            nodes.push(r);
            w *= GRADING_RATIO;
        }
        nodes.push(1.0);
        let m_uni = m - m_geo;
        let h = (r_max - 1.0) / m_uni as f64;
        for i in 1..m_uni {
            nodes.push(1.0 + i as f64 * h);
        }
        nodes.push(r_max);
        Self::from_nodes(n_dim, nodes)
    }

    /// Grid from explicit nodes (deserialization, truncation).
    pub fn from_nodes(n_dim: u32, nodes: Vec<f64>) -> Result<Self, GridError> {
        if n_dim < 3 {
            return Err(GridError::BadGrid(format!("need N >= 3, got {n_dim}")));
        }
        if nodes.len() < 5 {
            return Err(GridError::BadGrid("need at least 4 cells".into()));
        }
        if nodes[0] != 0.0 {
            return Err(GridError::BadGrid("first node must be 0".into()));
        }
        for w in nodes.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(GridError::BadGrid(format!(
                    "nodes must increase strictly, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        let ncells = nodes.len() - 1;
        let mut quad_r = Vec::with_capacity(4 * ncells);
        let mut quad_w = Vec::with_capacity(4 * ncells);
        let pow = n_dim as i32 - 1;
        for c in 0..ncells {
            let (a, b) = (nodes[c], nodes[c + 1]);
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            for g in 0..4 {
                let r = mid + half * GAUSS_X[g];
                quad_r.push(r);
                quad_w.push(GAUSS_W[g] * half * r.powi(pow));
            }
        }
        Ok(RadialGrid {
            n_dim,
            sphere_area: sphere_area(n_dim),
            nodes,
            quad_r,
            quad_w,
        })
    }

    pub fn n_dim(&self) -> u32 {
        self.n_dim
    }

    pub fn sphere_area(&self) -> f64 {
        self.sphere_area
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn r_max(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Nodes strictly below `r_end`, then `r_end` itself as the final node.
    pub fn truncated(&self, r_end: f64) -> Result<RadialGrid, GridError> {
        if !(r_end > 0.0) {
            return Err(GridError::BadGrid(format!("need r_end > 0, got {r_end}")));
        }
        let mut nodes: Vec<f64> = self
            .nodes
            .iter()
            .copied()
            .take_while(|&r| r < r_end * (1.0 - 1e-14))
            .collect();
        nodes.push(r_end);
        Self::from_nodes(self.n_dim, nodes)
    }
}

/// Cubic Hermite value and derivative on `[a, b]`.
#[inline]
fn hermite(a: f64, b: f64, ua: f64, ub: f64, da: f64, db: f64, x: f64) -> (f64, f64) {
    let h = b - a;
    let s = (x - a) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let v = (2.0 * s3 - 3.0 * s2 + 1.0) * ua
        + (s3 - 2.0 * s2 + s) * h * da
        + (-2.0 * s3 + 3.0 * s2) * ub
        + (s3 - s2) * h * db;
    let d = (6.0 * s2 - 6.0 * s) * (ua - ub) / h
        + (3.0 * s2 - 4.0 * s + 1.0) * da
        + (3.0 * s2 - 2.0 * s) * db;
    (v, d)
}

/// Power-law tail fit `|u(r)| ≈ c r^{-kappa}` over the outermost decade.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TailFit {
    pub c: f64,
    pub kappa: f64,
}

/// A radial function on a grid: node values of `u` and `u'`, plus eagerly
/// cached gradient seminorms for the exponents requested at construction.
///
/// Immutable after construction; all evaluation methods are pure.
#[derive(Debug, Clone)]
pub struct Profile {
    grid: RadialGrid,
    u: Vec<f64>,
    du: Vec<f64>,
    /// u at the grid's Gauss points.
    qu: Vec<f64>,
    /// u' at the grid's Gauss points.
    qdu: Vec<f64>,
    /// (exponent, ‖∇u‖_e) pairs cached at construction.
    cached_grad: Vec<(f64, f64)>,
}

impl Profile {
    pub fn new(grid: RadialGrid, u: Vec<f64>, du: Vec<f64>) -> Result<Self, GridError> {
        if u.len() != grid.nodes.len() || du.len() != grid.nodes.len() {
            return Err(GridError::BadProfile(format!(
                "value arrays must match the {} grid nodes, got {} and {}",
                grid.nodes.len(),
                u.len(),
                du.len()
            )));
        }
        if u.iter().chain(du.iter()).any(|v| !v.is_finite()) {
            return Err(GridError::BadProfile("non-finite profile value".into()));
        }
        let ncells = grid.cells();
        let mut qu = Vec::with_capacity(4 * ncells);
        let mut qdu = Vec::with_capacity(4 * ncells);
        for c in 0..ncells {
            let (a, b) = (grid.nodes[c], grid.nodes[c + 1]);
            for g in 0..4 {
                let x = grid.quad_r[4 * c + g];
                let (v, d) = hermite(a, b, u[c], u[c + 1], du[c], du[c + 1], x);
                qu.push(v);
                qdu.push(d);
            }
        }
        Ok(Profile {
            grid,
            u,
            du,
            qu,
            qdu,
            cached_grad: Vec::new(),
        })
    }

    /// Sample an analytic radial function and its exact derivative.
    pub fn from_fn(
        grid: RadialGrid,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64) -> f64,
    ) -> Result<Self, GridError> {
        let u: Vec<f64> = grid.nodes.iter().map(|&r| f(r)).collect();
        let du: Vec<f64> = grid.nodes.iter().map(|&r| df(r)).collect();
        Self::new(grid, u, du)
    }

    /// Eagerly cache `‖∇u‖_e` for a set of exponents (typically the
    /// operator's flux exponents).
    pub fn with_cached_exponents(mut self, exponents: &[f64]) -> Self {
        self.cached_grad = exponents
            .iter()
            .map(|&e| (e, self.compute_grad_norm(e)))
            .collect();
        self
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn du(&self) -> &[f64] {
        &self.du
    }

    pub fn u0(&self) -> f64 {
        self.u[0]
    }

    pub fn r_end(&self) -> f64 {
        self.grid.r_max()
    }

    /// Value of `u` at the end of the computed domain.
    pub fn terminal_u(&self) -> f64 {
        *self.u.last().unwrap()
    }

    pub fn terminal_du(&self) -> f64 {
        *self.du.last().unwrap()
    }

    /// Hermite evaluation of `(u, u')` at an arbitrary radius.
    pub fn value_at(&self, r: f64) -> (f64, f64) {
        let n = &self.grid.nodes;
        if r <= 0.0 {
            return (self.u[0], self.du[0]);
        }
        if r >= *n.last().unwrap() {
            return (*self.u.last().unwrap(), *self.du.last().unwrap());
        }
        let c = match n.binary_search_by(|x| x.partial_cmp(&r).unwrap()) {
            Ok(i) => return (self.u[i], self.du[i]),
            Err(i) => i - 1,
        };
        hermite(
            n[c],
            n[c + 1],
            self.u[c],
            self.u[c + 1],
            self.du[c],
            self.du[c + 1],
            r,
        )
    }

    fn compute_grad_norm(&self, e: f64) -> f64 {
        let mut s = 0.0;
        for (w, d) in self.grid.quad_w.iter().zip(&self.qdu) {
            s += w * d.abs().powf(e);
        }
        (self.grid.sphere_area * s).powf(1.0 / e)
    }

    /// `‖∇u‖_e = (ω_{N-1} ∫ r^{N-1} |u'|^e dr)^{1/e}`.
    pub fn grad_norm(&self, e: f64) -> f64 {
        for &(ce, v) in &self.cached_grad {
            if ce == e {
                return v;
            }
        }
        self.compute_grad_norm(e)
    }

    /// `‖u‖_r = (ω_{N-1} ∫ r^{N-1} |u|^r dr)^{1/r}`.
    pub fn lebesgue_norm(&self, r_exp: f64) -> f64 {
        let mut s = 0.0;
        for (w, v) in self.grid.quad_w.iter().zip(&self.qu) {
            s += w * v.abs().powf(r_exp);
        }
        (self.grid.sphere_area * s).powf(1.0 / r_exp)
    }

    /// `ω_{N-1} ∫ r^{N-1} f(u(r)) dr`.
    pub fn integral_of(&self, f: impl Fn(f64) -> f64) -> f64 {
        let mut s = 0.0;
        for (w, v) in self.grid.quad_w.iter().zip(&self.qu) {
            s += w * f(*v);
        }
        self.grid.sphere_area * s
    }

    /// Cumulative `∫_0^{r_i} s^{N-1} f(u(s)) ds` at every node (no sphere
    /// factor); used by the flux-conservation check.
    pub fn cumulative_integral(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let ncells = self.grid.cells();
        let mut out = Vec::with_capacity(ncells + 1);
        let mut acc = 0.0;
        out.push(0.0);
        for c in 0..ncells {
            for g in 0..4 {
                let i = 4 * c + g;
                acc += self.grid.quad_w[i] * f(self.qu[i]);
            }
            out.push(acc);
        }
        out
    }

    /// Interpolation-inequality ratio
    /// `‖u‖_r^r / (‖u‖_{p*}^{θp*} ‖u‖_{q*}^{(1-θ)q*})` with
    /// `r = θp* + (1-θ)q*`. Hölder gives ratio ≤ 1 with constant one, and the
    /// discrete rule preserves this because all quadrature weights are
    /// positive.
    pub fn interpolation_check(&self, p_star: f64, q_star: f64, r_exp: f64) -> f64 {
        assert!(
            p_star <= r_exp && r_exp <= q_star && p_star < q_star,
            "need p* <= r <= q*"
        );
        let theta = (q_star - r_exp) / (q_star - p_star);
        let num = self.lebesgue_norm(r_exp).powf(r_exp);
        let den = self.lebesgue_norm(p_star).powf(theta * p_star)
            * self.lebesgue_norm(q_star).powf((1.0 - theta) * q_star);
        num / den
    }

    /// Power-law fit of `|u|` over the outermost decade `[r_end/10, r_end]`.
    /// Returns `None` when fewer than 8 strictly positive samples exist.
    pub fn tail_fit(&self) -> Option<TailFit> {
        let r_end = self.r_end();
        let lo = r_end / 10.0;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (i, &r) in self.grid.nodes.iter().enumerate() {
            if r >= lo && self.u[i] > 0.0 {
                xs.push(r.ln());
                ys.push(self.u[i].ln());
            }
        }
        if xs.len() < 8 {
            return None;
        }
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        if sxx == 0.0 {
            return None;
        }
        let slope = sxy / sxx;
        let kappa = -slope;
        let c = (my - slope * mx).exp();
        Some(TailFit { c, kappa })
    }

    /// Estimated truncated-tail contribution to `‖∇u‖_e^e`, extrapolating
    /// the fitted power law past `r_end`. Infinite when the fitted decay is
    /// too slow for the integral to converge.
    pub fn grad_tail_estimate(&self, e: f64) -> f64 {
        let Some(fit) = self.tail_fit() else {
            return 0.0;
        };
        let n = self.grid.n_dim as f64;
        let rate = e * (fit.kappa + 1.0) - n;
        if rate <= 0.0 {
            return f64::INFINITY;
        }
        let amp = (fit.c * fit.kappa).powf(e);
        self.grid.sphere_area * amp * self.r_end().powf(-rate) / rate
    }

    /// Largest `r^{(N-e)/e} |u(r)| / ‖∇u‖_e` over nodes with `r ≥ r_lo`
    /// (the radial decay-bound functional).
    pub fn decay_statistic(&self, e: f64, r_lo: f64) -> f64 {
        let gn = self.grad_norm(e);
        if gn == 0.0 {
            return 0.0;
        }
        let expo = (self.grid.n_dim as f64 - e) / e;
        let mut sup: f64 = 0.0;
        for (&r, &v) in self.grid.nodes.iter().zip(&self.u) {
            if r >= r_lo {
                sup = sup.max(r.powf(expo) * v.abs() / gn);
            }
        }
        sup
    }
}

/// Serialized profile: grid, values, and the cached norms, tagged with
/// hashes of the operator and nonlinearity that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub meta: ProfileMeta,
    pub n_dim: u32,
    pub r_max: f64,
    pub m: usize,
    pub u0: f64,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub norms: Vec<NormEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileMeta {
    pub operator: String,
    pub nonlinearity: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormEntry {
    pub e: f64,
    pub grad: f64,
    /// Estimated truncated-tail contribution to `‖∇u‖_e^e` beyond the grid,
    /// extrapolating the fitted power law; `None` when the fitted decay is
    /// too slow for the extension to converge.
    #[serde(default)]
    pub tail_estimate: Option<f64>,
}

impl ProfileRecord {
    pub fn from_profile(p: &Profile, operator_hash: &str, nonlinearity_hash: &str) -> Self {
        ProfileRecord {
            meta: ProfileMeta {
                operator: operator_hash.to_string(),
                nonlinearity: nonlinearity_hash.to_string(),
            },
            n_dim: p.grid.n_dim,
            r_max: p.grid.r_max(),
            m: p.grid.cells(),
            u0: p.u0(),
            r: p.grid.nodes.clone(),
            u: p.u.clone(),
            du: p.du.clone(),
            norms: p
                .cached_grad
                .iter()
                .map(|&(e, grad)| {
                    let tail = p.grad_tail_estimate(e);
                    NormEntry {
                        e,
                        grad,
                        tail_estimate: tail.is_finite().then_some(tail),
                    }
                })
                .collect(),
        }
    }

    pub fn into_profile(self) -> Result<Profile, GridError> {
        let grid = RadialGrid::from_nodes(self.n_dim, self.r)?;
        let exps: Vec<f64> = self.norms.iter().map(|n| n.e).collect();
        Ok(Profile::new(grid, self.u, self.du)?.with_cached_exponents(&exps))
    }
}

/// Write a `r,u,du` CSV table for a profile.
pub fn write_profile_csv<W: std::io::Write>(w: &mut W, p: &Profile) -> std::io::Result<()> {
    writeln!(w, "r,u,du")?;
    for i in 0..p.u.len() {
        writeln!(w, "{:.17e},{:.17e},{:.17e}", p.grid.nodes[i], p.u[i], p.du[i])?;
    }
    Ok(())
}
