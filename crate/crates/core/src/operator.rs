//! Divergence-form quasilinear operators and their scalar flux.
//!
//! Both operator families handled here act on radial functions through a
//! scalar, odd, strictly increasing flux map
//!
//! ```text
//! Φ(w) = Σ_e c_e |w|^{e-2} w,
//! ```
//!
//! where the `(c_e, e)` pairs are `(1, p), (β, q)` for the (p,q)-Laplacian
//! `-Δ_p - βΔ_q`, and `(a_j, 2j)` for the Born-Infeld chain
//! `-Σ_j a_j Δ_{2j}` with `a_j = (2j-3)!!/(j-1)! · β^{j-1}`. In radial
//! variables the operator applied to `u` is `-r^{1-N} (r^{N-1} Φ(u'))'`, so
//! the whole PDE reduces to a first-order system for `(u, F)` with
//! `F = r^{N-1} Φ(u')`.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Largest admissible Born-Infeld chain order.
pub const MAX_CHAIN_ORDER: u32 = 64;

/// Errors from operator construction and exponent queries.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorError {
    /// Exponents violate `1 < p < q`, `p < N` or `β > 0`.
    InvalidParameters(String),
    /// Chain order out of range or coefficient overflow.
    InvalidChain(String),
}

impl fmt::Display for OperatorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorError::InvalidParameters(msg) => write!(f, "invalid operator: {msg}"),
            OperatorError::InvalidChain(msg) => write!(f, "invalid chain: {msg}"),
        }
    }
}

impl std::error::Error for OperatorError {}

/// The divergence-form operator of the equation `-Δ_p u - βΔ_q u = g(u)`
/// or of its Born-Infeld chain generalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OperatorSpec {
    /// `-Δ_p - βΔ_q` on ℝ^N. `beta = 0` only through [`OperatorSpec::scalar_field`].
    Pq { p: f64, q: f64, beta: f64, n_dim: u32 },
    /// `-Σ_{j=1..k} a_j Δ_{2j}` with the Taylor coefficients of `(1-x)^{-1/2}`.
    BiChain {
        k: u32,
        beta: f64,
        n_dim: u32,
        coefficients: Vec<f64>,
    },
}

impl OperatorSpec {
    /// A validated (p,q)-Laplacian pair: `1 < p < q`, `p < N`, `β > 0`, `N ≥ 3`.
    pub fn pq(p: f64, q: f64, beta: f64, n_dim: u32) -> Result<Self, OperatorError> {
        if !(p > 1.0 && q > p) {
            return Err(OperatorError::InvalidParameters(format!(
                "need 1 < p < q, got p = {p}, q = {q}"
            )));
        }
        if n_dim < 3 {
            return Err(OperatorError::InvalidParameters(format!(
                "need N >= 3, got N = {n_dim}"
            )));
        }
        if p >= n_dim as f64 {
            return Err(OperatorError::InvalidParameters(format!(
                "need p < N, got p = {p}, N = {n_dim}"
            )));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(OperatorError::InvalidParameters(format!(
                "need beta > 0, got beta = {beta} (use scalar_field for the beta = 0 mode)"
            )));
        }
        Ok(OperatorSpec::Pq { p, q, beta, n_dim })
    }

    /// Degenerate `β = 0` mode: the single p-Laplacian scalar field equation
    /// `-Δ_p u = g(u)`. Used for cross-validation against classical ground
    /// states; the q-term is absent from the flux.
    pub fn scalar_field(p: f64, n_dim: u32) -> Result<Self, OperatorError> {
        if !(p > 1.0) || n_dim < 3 || p >= n_dim as f64 {
            return Err(OperatorError::InvalidParameters(format!(
                "need 1 < p < N with N >= 3, got p = {p}, N = {n_dim}"
            )));
        }
        Ok(OperatorSpec::Pq {
            p,
            q: p + 1.0,
            beta: 0.0,
            n_dim,
        })
    }

    /// A validated Born-Infeld chain of order `k`.
    ///
    /// Requires `2k ≥ N` so that the gradient-norm space embeds into every
    /// Lebesgue space above the critical exponent. The stricter classical
    /// constraint `k ≥ N/(N-2)` is reported by the hypothesis validator
    /// rather than enforced here.
    pub fn bi_chain(k: u32, beta: f64, n_dim: u32) -> Result<Self, OperatorError> {
        if n_dim < 3 {
            return Err(OperatorError::InvalidParameters(format!(
                "need N >= 3, got N = {n_dim}"
            )));
        }
        if 2 * k < n_dim {
            return Err(OperatorError::InvalidChain(format!(
                "need 2k >= N, got k = {k}, N = {n_dim}"
            )));
        }
        let coefficients = bi_chain_coefficients(k, beta)?;
        Ok(OperatorSpec::BiChain {
            k,
            beta,
            n_dim,
            coefficients,
        })
    }

    /// Ambient dimension N.
    pub fn n_dim(&self) -> u32 {
        match self {
            OperatorSpec::Pq { n_dim, .. } | OperatorSpec::BiChain { n_dim, .. } => *n_dim,
        }
    }

    /// The flux terms `(c_e, e)`, lowest exponent first. The `β = 0` mode
    /// drops the q-term entirely.
    pub fn terms(&self) -> Vec<FluxTerm> {
        match self {
            OperatorSpec::Pq { p, q, beta, .. } => {
                let mut t = vec![FluxTerm::new(1.0, *p)];
                if *beta > 0.0 {
                    t.push(FluxTerm::new(*beta, *q));
                }
                t
            }
            OperatorSpec::BiChain { coefficients, .. } => coefficients
                .iter()
                .enumerate()
                .map(|(i, &a)| FluxTerm::new(a, 2.0 * (i as f64 + 1.0)))
                .collect(),
        }
    }

    /// Smallest flux exponent; governs the decay rate at infinity.
    pub fn min_exponent(&self) -> f64 {
        match self {
            OperatorSpec::Pq { p, .. } => *p,
            OperatorSpec::BiChain { .. } => 2.0,
        }
    }

    /// The scalar flux map as a reusable evaluator.
    pub fn flux_fn(&self) -> FluxFunction {
        FluxFunction::new(self.terms())
    }

    /// `Φ(w)`; convenience wrapper over [`FluxFunction::eval`].
    pub fn flux(&self, w: f64) -> f64 {
        self.flux_fn().eval(w)
    }

    /// The unique `w` with `Φ(w) = y`; wrapper over [`FluxFunction::invert`].
    pub fn invert_flux(&self, y: f64) -> f64 {
        self.flux_fn().invert(y)
    }

    /// Sobolev-critical exponents attached to the operator.
    ///
    /// `p* = pN/(N-p)` always (the smallest exponent is below N by
    /// construction). `q* = qN/(N-q)` when the top exponent `q` is below N;
    /// otherwise the caller must supply some `q* > max{q, p*}`.
    pub fn critical_exponents(&self) -> Result<CriticalExponents, OperatorError> {
        let n = self.n_dim() as f64;
        let (p, q) = match self {
            OperatorSpec::Pq { p, q, beta, .. } => (*p, if *beta > 0.0 { *q } else { *p }),
            OperatorSpec::BiChain { k, .. } => (2.0, 2.0 * *k as f64),
        };
        if p >= n {
            return Err(OperatorError::InvalidParameters(format!(
                "critical exponent undefined: p = {p} >= N = {n}"
            )));
        }
        let p_star = p * n / (n - p);
        let q_star = if q < n {
            QStarRule::Computed(q * n / (n - q))
        } else {
            QStarRule::UserSupplied {
                min: q.max(p_star),
            }
        };
        Ok(CriticalExponents { p_star, q_star })
    }
}

/// Critical exponents of the gradient-norm space of an operator.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalExponents {
    pub p_star: f64,
    pub q_star: QStarRule,
}

/// How the upper critical exponent is determined.
#[derive(Debug, Clone, PartialEq)]
pub enum QStarRule {
    /// `q < N`: `q* = qN/(N-q)`.
    Computed(f64),
    /// `q ≥ N`: every finite exponent embeds; the user must fix some
    /// `q* > min` for growth checks.
    UserSupplied { min: f64 },
}

/// Chain coefficients `a_j = (2j-3)!!/(j-1)! · β^{j-1}`, `j = 1..k`,
/// with the convention `(-1)!! = 1`.
///
/// Computed by the stable recurrence `a_{j+1} = a_j · β (2j-1)/j`, `a_1 = 1`.
pub fn bi_chain_coefficients(k: u32, beta: f64) -> Result<Vec<f64>, OperatorError> {
    if k == 0 || k > MAX_CHAIN_ORDER {
        return Err(OperatorError::InvalidChain(format!(
            "chain order must be in 1..={MAX_CHAIN_ORDER}, got {k}"
        )));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(OperatorError::InvalidChain(format!(
            "need beta > 0, got {beta}"
        )));
    }
    let mut a = Vec::with_capacity(k as usize);
    a.push(1.0);
    for j in 1..k as u64 {
        let next = a[j as usize - 1] * beta * (2 * j - 1) as f64 / j as f64;
        if !next.is_finite() {
            return Err(OperatorError::InvalidChain(format!(
                "coefficient overflow at j = {} for beta = {beta}",
                j + 1
            )));
        }
        a.push(next);
    }
    Ok(a)
}

/// One flux term `c |w|^{e-2} w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxTerm {
    pub coef: f64,
    pub exponent: f64,
    /// `e - 2` when it is a small even integer, enabling the `powi` path.
    int_pow: Option<i32>,
}

impl FluxTerm {
    pub fn new(coef: f64, exponent: f64) -> Self {
        let em2 = exponent - 2.0;
        let int_pow = if em2.fract() == 0.0 && (0.0..=126.0).contains(&em2) && em2 % 2.0 == 0.0 {
            Some(em2 as i32)
        } else {
            None
        };
        FluxTerm {
            coef,
            exponent,
            int_pow,
        }
    }

    #[inline]
    fn eval(&self, w: f64) -> f64 {
        if w == 0.0 {
            return 0.0;
        }
        match self.int_pow {
            Some(m) => self.coef * w.powi(m) * w,
            None => self.coef * w.abs().powf(self.exponent - 2.0) * w,
        }
    }

    #[inline]
    fn eval_prime(&self, w: f64) -> f64 {
        let aw = w.abs();
        if aw == 0.0 {
            // Degenerate for e > 2, singular for e < 2; callers safeguard.
            return if self.exponent == 2.0 { self.coef } else { 0.0 };
        }
        self.coef * (self.exponent - 1.0) * aw.powf(self.exponent - 2.0)
    }
}

/// The scalar odd strictly increasing map `Φ(w) = Σ c_e |w|^{e-2} w`
/// induced by an [`OperatorSpec`], with its exact inverse.
#[derive(Debug, Clone)]
pub struct FluxFunction {
    terms: Vec<FluxTerm>,
}

impl FluxFunction {
    pub fn new(terms: Vec<FluxTerm>) -> Self {
        assert!(!terms.is_empty(), "flux needs at least one term");
        FluxFunction { terms }
    }

    pub fn terms(&self) -> &[FluxTerm] {
        &self.terms
    }

    /// `Φ(w)`.
    #[inline]
    pub fn eval(&self, w: f64) -> f64 {
        let mut s = 0.0;
        for t in &self.terms {
            s += t.eval(w);
        }
        s
    }

    /// `Φ'(w)` for `w ≠ 0`.
    #[inline]
    pub fn eval_prime(&self, w: f64) -> f64 {
        let mut s = 0.0;
        for t in &self.terms {
            s += t.eval_prime(w);
        }
        s
    }

    /// Legendre energy density `Ψ(w) = Σ c_e (e-1)/e |w|^e`.
    ///
    /// Along radial trajectories `E(r) = Ψ(u'(r)) + G(u(r))` is
    /// non-increasing, which drives trajectory classification, and
    /// `r^N E(r)` is the exact boundary defect of the Pohozaev identity
    /// truncated to a ball of radius r.
    #[inline]
    pub fn energy_density(&self, w: f64) -> f64 {
        let aw = w.abs();
        if aw == 0.0 {
            return 0.0;
        }
        let mut s = 0.0;
        for t in &self.terms {
            s += t.coef * (t.exponent - 1.0) / t.exponent * aw.powf(t.exponent);
        }
        s
    }

    /// The unique `w` with `Φ(w) = y`, to `|Φ(w) - y| ≤ 1e-14 (1 + |y|)`.
    ///
    /// Solves on `|y|` and restores the sign. Safeguarded Newton on the
    /// bracket `[0, min_e (y/c_e)^{1/(e-1)}]`, which survives the derivative
    /// blow-up at `w = 0` for exponents below 2. NaN input propagates.
    pub fn invert(&self, y: f64) -> f64 {
        if y == 0.0 {
            return 0.0;
        }
        if y.is_nan() {
            return f64::NAN;
        }
        let ay = y.abs();
        // Tightest single-term bracket: Φ(hi) >= c_e hi^{e-1} = |y|.
        let mut hi = f64::INFINITY;
        for t in &self.terms {
            if t.coef > 0.0 {
                let b = (ay / t.coef).powf(1.0 / (t.exponent - 1.0));
                if b < hi {
                    hi = b;
                }
            }
        }
        debug_assert!(hi.is_finite());
        let mut lo = 0.0_f64;
        let tol = 1e-14 * (1.0 + ay);
        let mut w = hi;
        for _ in 0..128 {
            let f = self.eval(w) - ay;
            if f.abs() <= tol {
                return w.copysign(y);
            }
            if f > 0.0 {
                hi = w;
            } else {
                lo = w;
            }
            let d = self.eval_prime(w);
            let mut next = if d > 0.0 { w - f / d } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if next == w {
                break;
            }
            w = next;
        }
        w.copysign(y)
    }
}
