//! Action functionals, dilation paths and mountain-pass diagnostics.
//!
//! The action of a radial profile under an operator with flux terms
//! `(c_e, e)` is
//!
//! ```text
//! I(u) = Σ_e (c_e/e) ‖∇u‖_e^e - ∫ G(u) dx,
//! ```
//!
//! and the perturbed family replaces `G` by `G₂ - λG₁` for `λ ∈ [λ₀, 1]`.
//! Dilations `u(·/t)` scale each gradient term by `t^{N-e}` and each
//! potential term by `t^N`, so the whole curve `t ↦ I_λ(u(·/t))` evaluates in
//! closed form from the cached norms of the seed. Once
//! `λ₀ ∫G₁(z) - ∫G₂(z) > 0` the `t^N` coefficient is negative for every
//! `λ ≥ λ₀` and the curve eventually turns negative, which makes the dilation
//! path admissible for the mountain-pass level; the maximum along it is an
//! upper bound for that level, reported together with a small-sphere
//! positivity probe.

use crate::grid::{GridError, Profile, RadialGrid};
use crate::nonlinearity::{Decomposition, NonlinearitySpec};
use crate::operator::OperatorSpec;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone)]
pub enum VariationalError {
    /// The seed profile does not satisfy `∫ G(z) dx > 0`.
    SeedRejected { integral: f64 },
    InvalidLambda(String),
    Grid(GridError),
}

impl fmt::Display for VariationalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VariationalError::SeedRejected { integral } => {
                write!(f, "seed rejected: integral of G over the seed is {integral}")
            }
            VariationalError::InvalidLambda(m) => write!(f, "invalid lambda: {m}"),
            VariationalError::Grid(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for VariationalError {}

impl From<GridError> for VariationalError {
    fn from(e: GridError) -> Self {
        VariationalError::Grid(e)
    }
}

/// `I(u) = Σ (c_e/e)‖∇u‖_e^e - ∫G(u)`.
pub fn action(profile: &Profile, spec: &NonlinearitySpec, op: &OperatorSpec) -> f64 {
    let mut v = 0.0;
    for t in op.terms() {
        v += t.coef / t.exponent * profile.grad_norm(t.exponent).powf(t.exponent);
    }
    v - profile.integral_of(|s| spec.big_g(s))
}

/// The identity-side action `(1/N) Σ c_e ‖∇u‖_e^e`, equal to `I(u)` on exact
/// decaying solutions by the Pohozaev identity.
pub fn action_identity(profile: &Profile, op: &OperatorSpec) -> f64 {
    let mut v = 0.0;
    for t in op.terms() {
        v += t.coef * profile.grad_norm(t.exponent).powf(t.exponent);
    }
    v / op.n_dim() as f64
}

/// Parameters of the perturbed functional `I_λ`, carrying the seed-derived
/// floor `λ₀` below which the dilation path loses admissibility.
pub struct FunctionalParams<'a> {
    pub lambda: f64,
    pub lambda_floor: f64,
    pub decomp: &'a Decomposition,
    pub op: &'a OperatorSpec,
}

impl<'a> FunctionalParams<'a> {
    /// Compute `λ₀` from the seed with a 10% safety margin into the gap
    /// between `∫G₂/∫G₁` and 1, then validate `λ₀ ≤ λ ≤ 1`.
    pub fn for_seed(
        decomp: &'a Decomposition,
        op: &'a OperatorSpec,
        seed: &Profile,
        lambda: f64,
    ) -> Result<Self, VariationalError> {
        let floor = lambda_floor(decomp, seed)?;
        if !(lambda >= floor && lambda <= 1.0) {
            return Err(VariationalError::InvalidLambda(format!(
                "lambda = {lambda} outside [{floor}, 1]"
            )));
        }
        Ok(FunctionalParams {
            lambda,
            lambda_floor: floor,
            decomp,
            op,
        })
    }
}

/// Smallest admissible `λ₀ ∈ (0, 1)` for a seed: any `λ ≥ λ₀` satisfies
/// `λ ∫G₁(z) - ∫G₂(z) > 0`. Requires `∫G(z) > 0`.
pub fn lambda_floor(decomp: &Decomposition, seed: &Profile) -> Result<f64, VariationalError> {
    let b1 = seed.integral_of(|s| decomp.big_g1(s));
    let b2 = seed.integral_of(|s| decomp.big_g2(s));
    let g_int = b1 - b2;
    if !(g_int > 0.0) || !(b1 > 0.0) {
        return Err(VariationalError::SeedRejected { integral: g_int });
    }
    let ratio = b2 / b1;
    Ok(ratio + 0.1 * (1.0 - ratio))
}

/// `I_λ(u) = Σ (c_e/e)‖∇u‖_e^e + ∫G₂(u) - λ∫G₁(u)`.
pub fn action_lambda(profile: &Profile, params: &FunctionalParams<'_>) -> f64 {
    let mut v = 0.0;
    for t in params.op.terms() {
        v += t.coef / t.exponent * profile.grad_norm(t.exponent).powf(t.exponent);
    }
    v + profile.integral_of(|s| params.decomp.big_g2(s))
        - params.lambda * profile.integral_of(|s| params.decomp.big_g1(s))
}

/// The dilation curve `t ↦ I_λ(z(·/t))` sampled on a grid, with the first
/// `τ` at which the curve is negative.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathReport {
    pub t: Vec<f64>,
    pub value: Vec<f64>,
    pub max_value: f64,
    pub t_at_max: f64,
    /// `I_λ(z(·/τ))`, always negative: dilating to `τ` makes the path
    /// admissible.
    pub endpoint_value: f64,
    pub tau: f64,
}

/// Closed-form evaluator of `t ↦ I_λ(z(·/t))` from the seed's cached data.
struct DilationEval {
    /// `(exponent, c_e/e · ‖∇z‖_e^e)` pairs.
    grad: Vec<(f64, f64)>,
    /// `∫G₂(z) - λ∫G₁(z)`, the coefficient of `t^N`.
    potential: f64,
    n: f64,
}

impl DilationEval {
    fn new(z: &Profile, params: &FunctionalParams<'_>) -> Self {
        let grad = params
            .op
            .terms()
            .iter()
            .map(|t| {
                (
                    t.exponent,
                    t.coef / t.exponent * z.grad_norm(t.exponent).powf(t.exponent),
                )
            })
            .collect();
        let potential = z.integral_of(|s| params.decomp.big_g2(s))
            - params.lambda * z.integral_of(|s| params.decomp.big_g1(s));
        DilationEval {
            grad,
            potential,
            n: params.op.n_dim() as f64,
        }
    }

    fn eval(&self, t: f64) -> f64 {
        let mut v = t.powf(self.n) * self.potential;
        for &(e, a) in &self.grad {
            v += t.powf(self.n - e) * a;
        }
        v
    }
}

/// Evaluate the dilation curve of a seed `z` with `∫G(z) > 0` over `t_grid`,
/// locate its maximum, and find `τ` with `I_λ(z(·/τ)) < 0`.
pub fn dilation_curve(
    z: &Profile,
    params: &FunctionalParams<'_>,
    t_grid: &[f64],
) -> Result<PathReport, VariationalError> {
    let g_int = z.integral_of(|s| params.decomp.big_g1(s) - params.decomp.big_g2(s));
    if !(g_int > 0.0) {
        return Err(VariationalError::SeedRejected { integral: g_int });
    }
    let eval = DilationEval::new(z, params);
    let mut t = Vec::with_capacity(t_grid.len());
    let mut value = Vec::with_capacity(t_grid.len());
    let mut max_value = f64::NEG_INFINITY;
    let mut t_at_max = 0.0;
    for &ti in t_grid {
        let v = eval.eval(ti);
        if v > max_value {
            max_value = v;
            t_at_max = ti;
        }
        t.push(ti);
        value.push(v);
    }
    // The t^N coefficient is negative for lambda >= lambda_floor, so doubling
    // must reach negativity.
    let mut tau = t_grid.iter().cloned().fold(1.0_f64, f64::max);
    let mut endpoint = eval.eval(tau);
    let mut guard = 0;
    while endpoint >= 0.0 && guard < 200 {
        tau *= 2.0;
        endpoint = eval.eval(tau);
        guard += 1;
    }
    if endpoint >= 0.0 {
        return Err(VariationalError::InvalidLambda(format!(
            "dilation curve never turns negative (lambda = {}, floor = {})",
            params.lambda, params.lambda_floor
        )));
    }
    Ok(PathReport {
        t,
        value,
        max_value,
        t_at_max,
        endpoint_value: endpoint,
        tau,
    })
}

/// Mountain-pass level diagnostics: an upper bound from the dilation path and
/// a small-sphere positivity probe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelEstimate {
    /// Max of `I_λ` along the admissible dilation path; an upper bound for
    /// the mountain-pass level (never claimed equal to it).
    pub upper_bound: f64,
    pub t_at_max: f64,
    pub tau: f64,
    /// `(ρ, I_λ(ρ z / ‖z‖))` for a grid of small sphere radii; positive
    /// values witness the mountain-pass geometry near the origin.
    pub sphere_probe: Vec<(f64, f64)>,
}

/// Default probe radii: geometric between `1e-3` and `0.1` times the seed's
/// gradient-norm size.
fn default_probe_radii(seed_norm: f64) -> Vec<f64> {
    (0..8)
        .map(|i| seed_norm * 1e-3 * 10.0_f64.powf(2.0 * i as f64 / 7.0))
        .collect()
}

/// Upper bound on the mountain-pass level from the admissible two-piece path
/// through `z`, plus the small-sphere probe.
///
/// The path ramps the amplitude `0 → z(·/σ)` at fixed dilation `σ = τ/2` and
/// then dilates from `σ` to `τ`; the ramp keeps the curve finite near the
/// origin even when a flux exponent exceeds N (pure dilation would blow up
/// like `t^{N-e}` there). `τ` is fixed at the floor value `λ = λ₀`, so the
/// same path stays admissible — and the level estimate monotone — for every
/// `λ ≥ λ₀`.
pub fn mountain_pass_level(
    z: &Profile,
    params: &FunctionalParams<'_>,
    probe_radii: Option<&[f64]>,
) -> Result<LevelEstimate, VariationalError> {
    // Locate tau at the weakest admissible lambda.
    let floor_params = FunctionalParams {
        lambda: params.lambda_floor,
        lambda_floor: params.lambda_floor,
        decomp: params.decomp,
        op: params.op,
    };
    let coarse: Vec<f64> = (1..=16).map(|i| i as f64 / 4.0).collect();
    let tau = dilation_curve(z, &floor_params, &coarse)?.tau;
    let n = params.op.n_dim() as f64;
    let sigma = 0.5 * tau;

    // Piece 1: amplitude ramp c ∈ (0, 1] on the sigma-dilated seed. Gradient
    // terms scale in closed form; the potential needs quadrature per c.
    let sigma_n = sigma.powf(n);
    let mut max_value = 0.0_f64;
    let mut t_at_max = 0.0;
    for i in 1..=64 {
        let c = i as f64 / 64.0;
        let mut v = 0.0;
        for t in params.op.terms() {
            let scaled = sigma.powf((n - t.exponent) / t.exponent) * z.grad_norm(t.exponent);
            v += t.coef / t.exponent * (c * scaled).powf(t.exponent);
        }
        v += sigma_n * z.integral_of(|s| params.decomp.big_g2(c * s));
        v -= params.lambda * sigma_n * z.integral_of(|s| params.decomp.big_g1(c * s));
        if v > max_value {
            max_value = v;
            t_at_max = sigma;
        }
    }
    // Piece 2: dilation from sigma to tau, closed form.
    let eval = DilationEval::new(z, params);
    for i in 0..=192 {
        let t = sigma + (tau - sigma) * i as f64 / 192.0;
        let v = eval.eval(t);
        if v > max_value {
            max_value = v;
            t_at_max = t;
        }
    }

    // Sphere probe: amplitude-rescaled copies c·z with ‖c·z‖ = ρ in the
    // gradient-sum norm.
    let mut seed_norm = 0.0;
    for t in params.op.terms() {
        seed_norm += z.grad_norm(t.exponent);
    }
    let radii_store;
    let radii = match probe_radii {
        Some(r) => r,
        None => {
            radii_store = default_probe_radii(seed_norm);
            &radii_store
        }
    };
    let mut sphere_probe = Vec::with_capacity(radii.len());
    for &rho in radii {
        let c = rho / seed_norm;
        let mut v = 0.0;
        for t in params.op.terms() {
            v += t.coef / t.exponent * (c * z.grad_norm(t.exponent)).powf(t.exponent);
        }
        v += z.integral_of(|s| params.decomp.big_g2(c * s));
        v -= params.lambda * z.integral_of(|s| params.decomp.big_g1(c * s));
        sphere_probe.push((rho, v));
    }
    Ok(LevelEstimate {
        upper_bound: max_value,
        t_at_max,
        tau,
        sphere_probe,
    })
}

/// The standard compactly supported seed: a plateau at height `ζ` on
/// `[0, R]` with a linear ramp to zero on `[R, R+1]`, with `R` grown until
/// `∫ G(z) dx > 0`. The plateau contributes `~R^N G(ζ) > 0` against the
/// `O(R^{N-1})` ramp, so the growth terminates for admissible nonlinearities.
pub fn default_seed(
    spec: &NonlinearitySpec,
    n_dim: u32,
    resolution: usize,
) -> Result<Profile, VariationalError> {
    let zeta = spec.zeta;
    for radius_pow in 0..6 {
        let plateau: f64 = (1 << radius_pow) as f64;
        let r_max = (plateau + 1.0) * 2.0;
        let grid = RadialGrid::graded(n_dim, r_max.max(2.0), resolution.max(64))?;
        let z = Profile::from_fn(
            grid,
            |r| {
                if r <= plateau {
                    zeta
                } else if r < plateau + 1.0 {
                    zeta * (plateau + 1.0 - r)
                } else {
                    0.0
                }
            },
            |r| {
                if r > plateau && r < plateau + 1.0 {
                    -zeta
                } else {
                    0.0
                }
            },
        )?;
        if z.integral_of(|s| spec.big_g(s)) > 0.0 {
            return Ok(z);
        }
    }
    Err(VariationalError::SeedRejected {
        integral: f64::NEG_INFINITY,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::{GForm, MassRegime};

    fn setup() -> (OperatorSpec, NonlinearitySpec) {
        let op = OperatorSpec::pq(2.0, 4.0, 1.0, 3).unwrap();
        let spec = NonlinearitySpec::new(
            GForm::PurePower { alpha: 7.0 },
            1.0,
            MassRegime::ZeroMass,
            &op,
            Some(8.0),
        )
        .unwrap()
        .truncate();
        (op, spec)
    }

    fn gaussian(op: &OperatorSpec) -> Profile {
        let grid = RadialGrid::graded(3, 20.0, 1024).unwrap();
        let exps: Vec<f64> = op.terms().iter().map(|t| t.exponent).collect();
        Profile::from_fn(grid, |r| (-r * r).exp(), |r| -2.0 * r * (-r * r).exp())
            .unwrap()
            .with_cached_exponents(&exps)
    }

    #[test]
    fn action_of_zero_is_zero() {
        let (op, spec) = setup();
        let grid = RadialGrid::graded(3, 20.0, 128).unwrap();
        let z = Profile::from_fn(grid, |_| 0.0, |_| 0.0).unwrap();
        assert_eq!(action(&z, &spec, &op), 0.0);
    }

    #[test]
    fn action_gaussian_matches_norm_assembly() {
        // Independent assembly from the same quadratures:
        // I = (1/2)‖∇u‖₂² + (1/4)‖∇u‖₄⁴ - (1/7)‖u‖₇⁷ for g = s⁶, β = 1.
        let (op, spec) = setup();
        let u = gaussian(&op);
        let direct = 0.5 * u.grad_norm(2.0).powi(2) + 0.25 * u.grad_norm(4.0).powi(4)
            - u.lebesgue_norm(7.0).powi(7) / 7.0;
        let got = action(&u, &spec, &op);
        assert!(
            (got - direct).abs() <= 1e-12 * (1.0 + direct.abs()),
            "{got} vs {direct}"
        );
    }

    #[test]
    fn action_lambda_one_equals_action() {
        let (op, spec) = setup();
        let d = spec.decompose().unwrap();
        let u = gaussian(&op);
        let params = FunctionalParams {
            lambda: 1.0,
            lambda_floor: 0.1,
            decomp: &d,
            op: &op,
        };
        let a = action(&u, &spec, &op);
        let al = action_lambda(&u, &params);
        assert!(
            (a - al).abs() <= 1e-9 * (1.0 + a.abs()),
            "lambda=1 consistency: {a} vs {al}"
        );
    }

    #[test]
    fn action_lambda_affine_with_g1_slope() {
        let (op, spec) = setup();
        let d = spec.decompose().unwrap();
        let u = gaussian(&op);
        let b1 = u.integral_of(|s| d.big_g1(s));
        let mk = |lambda| FunctionalParams {
            lambda,
            lambda_floor: 0.1,
            decomp: &d,
            op: &op,
        };
        let v1 = action_lambda(&u, &mk(0.4));
        let v2 = action_lambda(&u, &mk(0.9));
        let slope = (v2 - v1) / 0.5;
        assert!(
            (slope + b1).abs() <= 1e-9 * (1.0 + b1.abs()),
            "slope {slope} vs -{b1}"
        );
        assert!(v2 <= v1); // nonincreasing in lambda pointwise
    }

    #[test]
    fn dilation_curve_identity_at_t1_and_negativity() {
        let (op, spec) = setup();
        let d = spec.decompose().unwrap();
        let z = default_seed(&spec, 3, 512).unwrap();
        let params = FunctionalParams::for_seed(&d, &op, &z, 1.0).unwrap();
        let report = dilation_curve(&z, &params, &[0.5, 1.0, 2.0]).unwrap();
        let at_1 = report.value[1];
        let direct = action_lambda(&z, &params);
        assert!(
            (at_1 - direct).abs() <= 1e-9 * (1.0 + direct.abs()),
            "t = 1: {at_1} vs {direct}"
        );
        assert!(report.endpoint_value < 0.0);
        assert!(report.tau >= 1.0);
    }

    #[test]
    fn dilation_derivative_matches_finite_differences() {
        let (op, spec) = setup();
        let d = spec.decompose().unwrap();
        let z = default_seed(&spec, 3, 512).unwrap();
        let params = FunctionalParams::for_seed(&d, &op, &z, 0.95).unwrap();
        let eval = DilationEval::new(&z, &params);
        let n = 3.0;
        for &t in &[0.8, 1.3, 2.2] {
            let h = 1e-6 * t;
            let fd = (eval.eval(t + h) - eval.eval(t - h)) / (2.0 * h);
            let mut closed = n * t.powf(n - 1.0) * eval.potential;
            for &(e, a) in &eval.grad {
                closed += (n - e) * t.powf(n - e - 1.0) * a;
            }
            assert!(
                (fd - closed).abs() <= 1e-6 * (1.0 + closed.abs()),
                "t = {t}: fd {fd} vs closed {closed}"
            );
        }
    }

    #[test]
    fn dilation_closed_form_matches_resampled_profiles() {
        // Cross-validation of the grid dilation laws: the closed-form value
        // of I_λ(z(·/t)) against a literally resampled profile.
        let (op, spec) = setup();
        let d = spec.decompose().unwrap();
        let z = gaussian(&op);
        let params = FunctionalParams::for_seed(&d, &op, &z, 1.0).unwrap();
        let eval = DilationEval::new(&z, &params);
        for &t in &[0.5, 2.0, 5.0] {
            let grid = RadialGrid::graded(3, 20.0_f64.max(5.0 * t * 2.0), 2048).unwrap();
            let zd = Profile::from_fn(
                grid,
                |r| (-(r / t) * (r / t)).exp(),
                |r| -2.0 * (r / t) * (-(r / t) * (r / t)).exp() / t,
            )
            .unwrap();
            let resampled = action_lambda(&zd, &params);
            let closed = eval.eval(t);
            assert!(
                (resampled - closed).abs() <= 1e-5 * (1.0 + closed.abs()),
                "t = {t}: resampled {resampled} vs closed {closed}"
            );
        }
    }

    #[test]
    fn zero_seed_rejected() {
        let (op, spec) = setup();
        let d = spec.decompose().unwrap();
        let grid = RadialGrid::graded(3, 20.0, 128).unwrap();
        let z = Profile::from_fn(grid, |_| 0.0, |_| 0.0).unwrap();
        let params = FunctionalParams {
            lambda: 1.0,
            lambda_floor: 0.5,
            decomp: &d,
            op: &op,
        };
        assert!(matches!(
            dilation_curve(&z, &params, &[1.0]),
            Err(VariationalError::SeedRejected { .. })
        ));
        assert!(matches!(
            FunctionalParams::for_seed(&d, &op, &z, 1.0),
            Err(VariationalError::SeedRejected { .. })
        ));
    }

    #[test]
    fn mountain_pass_probe_positive_and_level_monotone() {
        let (op, spec) = setup();
        let d = spec.decompose().unwrap();
        let z = default_seed(&spec, 3, 512).unwrap();
        let floor = lambda_floor(&d, &z).unwrap();
        assert!(floor > 0.0 && floor < 1.0);
        let mut prev = f64::INFINITY;
        for &lambda in &[floor, 0.5 * (floor + 1.0), 1.0] {
            let params = FunctionalParams::for_seed(&d, &op, &z, lambda).unwrap();
            let level = mountain_pass_level(&z, &params, None).unwrap();
            assert!(level.upper_bound > 0.0);
            for &(rho, v) in level.sphere_probe.iter().take(4) {
                assert!(v > 0.0, "probe at rho = {rho} gave {v}");
            }
            // Level estimate nonincreasing in lambda (fixed seed).
            assert!(level.upper_bound <= prev * (1.0 + 1e-12));
            prev = level.upper_bound;
        }
    }
}
