//! Radial shooting: integrate the flux-form ODE, classify trajectories, and
//! locate ground states by bisection on `u(0)`.
//!
//! With `F(r) = r^{N-1} Φ(u'(r))` the equation becomes the first-order system
//!
//! ```text
//! u'(r) = Φ⁻¹(F(r) / r^{N-1}),      F'(r) = -r^{N-1} g(u(r)),
//! ```
//!
//! integrated by an adaptive Dormand-Prince 5(4) scheme from a series startup
//! at `δ` (the flux form is singular at the origin: `Φ(u') = -g(u(0)) r/N +
//! O(r³)` there). Events — a zero crossing of `u`, or a turning point where
//! `F` passes from negative to positive with `u > 0` — are localized by
//! sign-change refinement on the step's Hermite interpolant.
//!
//! Trajectory sides: a shot either crosses zero (the high side of the
//! bracket) or stays positive (rebound, decay, or a slow non-integrable tail
//! — the low side). Bisection drives the bracket width to tolerance with
//! decay thresholds disabled so that every midpoint classifies cleanly.
//! Exponentially decaying candidates are then reshot with thresholds on; for
//! algebraic (zero-mass) tails the bisection limit carries a horizon bias,
//! so the bracket boundary is re-bisected at halved horizons, required to
//! contract, Richardson-extrapolated, and only then reshot — transients near
//! scale-invariant separatrices fail the contraction test and their brackets
//! are dropped. Along any trajectory the energy `E(r) = Ψ(u') + G(u)` is
//! nonincreasing, which is why shots started where `G(u(0)) ≤ 0` can never
//! decay; scans over positive-mass nonlinearities clamp their lower bound
//! accordingly.

use crate::grid::{GridError, Profile, RadialGrid};
use crate::nonlinearity::{NonlinearityError, NonlinearitySpec};
use crate::operator::{FluxFunction, OperatorSpec};
use crate::variational;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Classification of one shooting trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ShotOutcome {
    /// `u` reached zero at `r_cross`.
    Crossing { r_cross: f64 },
    /// `u' = 0` with `u > 0` and increasing tendency at `r_turn`.
    Rebound { r_turn: f64 },
    /// The trajectory qualifies as decaying: either both thresholds were met
    /// or the tail fitted a fast enough power law out to the horizon.
    Decay {
        tail_exponent: Option<f64>,
        terminal_u: f64,
        terminal_du: f64,
    },
    /// No clean classification; `ended_positive` records which side of a
    /// bracket the shot supports.
    Inconclusive { reason: String, ended_positive: bool },
}

impl ShotOutcome {
    /// Undershoot side: the trajectory never reached zero.
    pub fn is_low_side(&self) -> bool {
        match self {
            ShotOutcome::Rebound { .. } | ShotOutcome::Decay { .. } => true,
            ShotOutcome::Inconclusive { ended_positive, .. } => *ended_positive,
            ShotOutcome::Crossing { .. } => false,
        }
    }

    pub fn is_high_side(&self) -> bool {
        matches!(self, ShotOutcome::Crossing { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            ShotOutcome::Crossing { .. } => "crossing",
            ShotOutcome::Rebound { .. } => "rebound",
            ShotOutcome::Decay { .. } => "decay",
            ShotOutcome::Inconclusive { .. } => "inconclusive",
        }
    }

    pub fn event_radius(&self) -> Option<f64> {
        match self {
            ShotOutcome::Crossing { r_cross } => Some(*r_cross),
            ShotOutcome::Rebound { r_turn } => Some(*r_turn),
            _ => None,
        }
    }
}

/// Integrator, classification and scan parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShootingConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Integration horizon and norm-grid extent.
    pub r_max: f64,
    /// Cells of the output grid.
    pub resolution: usize,
    /// Decay exit when `|u| < decay_u_rel·u(0)` and `|u'| < decay_du_rel·u(0)`.
    pub decay_u_rel: f64,
    pub decay_du_rel: f64,
    /// Minimum fitted tail exponent accepted as decay at the horizon;
    /// defaults to 75% of the harmonic-like rate `(N-p)/(p-1)` of the
    /// smallest flux exponent.
    pub decay_exponent_floor: Option<f64>,
    /// Bisection tolerance on `u(0)`, relative to `max(1, u0)`.
    pub bisect_tol: f64,
    /// Maximum relative drift of the bisection limit when the horizon is
    /// halved, for a tail-fit candidate to count as a genuine decay. True
    /// solutions are horizon-stable to integrator accuracy; transients near
    /// scale-invariant separatrices drift by orders of magnitude more.
    pub horizon_stability_tol: f64,
    pub scan_lo: f64,
    pub scan_hi: f64,
    pub scan_count: usize,
    pub max_steps: usize,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        ShootingConfig {
            rtol: 1e-10,
            atol: 1e-12,
            r_max: 50.0,
            resolution: 4096,
            // Exponentially unstable trajectories depart around
            // u ~ bisect_tol·e^{r}; 1e-6 keeps the threshold radius safely
            // inside the tracked range at double-precision bracket widths.
            decay_u_rel: 1e-6,
            decay_du_rel: 1e-6,
            decay_exponent_floor: None,
            bisect_tol: 1e-12,
            horizon_stability_tol: 1e-3,
            scan_lo: 0.1,
            scan_hi: 50.0,
            scan_count: 60,
            max_steps: 400_000,
        }
    }
}

impl ShootingConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.rtol > 0.0 && self.atol > 0.0 && self.bisect_tol > 0.0) {
            return Err(SolveError::Domain("tolerances must be positive".into()));
        }
        if !(self.scan_lo > 0.0 && self.scan_hi > self.scan_lo && self.scan_count >= 2) {
            return Err(SolveError::Domain(format!(
                "need 0 < scan_lo < scan_hi and at least 2 scan points, got [{}, {}] x {}",
                self.scan_lo, self.scan_hi, self.scan_count
            )));
        }
        if !(self.r_max > 1.0) || self.resolution < 64 {
            return Err(SolveError::Domain(format!(
                "need r_max > 1 and resolution >= 64, got {} and {}",
                self.r_max, self.resolution
            )));
        }
        Ok(())
    }

    fn startup_offset(&self) -> f64 {
        1e-6 * (self.r_max / self.resolution as f64).max(1.0)
    }

    fn tail_floor(&self, op: &OperatorSpec) -> f64 {
        self.decay_exponent_floor.unwrap_or_else(|| {
            let p = op.min_exponent();
            0.75 * (op.n_dim() as f64 - p) / (p - 1.0)
        })
    }
}

/// One scan or bisection record, as streamed to the progress sink.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanRow {
    pub phase: ScanPhase,
    pub u0: f64,
    pub outcome: String,
    pub event_radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanPhase {
    Scan,
    Bisect,
}

#[derive(Debug)]
pub enum SolveError {
    Domain(String),
    /// No (positive-side, crossing) bracket in the scan range. Expected for
    /// nonexistence regimes; carries the scan table.
    NoBracket { scan: Vec<ScanRow> },
    Stalled { reason: String },
    Grid(GridError),
    Nonlinearity(NonlinearityError),
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::Domain(m) => write!(f, "domain error: {m}"),
            SolveError::NoBracket { scan } => {
                write!(f, "no shooting bracket found over {} scanned values", scan.len())
            }
            SolveError::Stalled { reason } => write!(f, "solver stalled: {reason}"),
            SolveError::Grid(e) => write!(f, "{e}"),
            SolveError::Nonlinearity(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for SolveError {}

impl From<GridError> for SolveError {
    fn from(e: GridError) -> Self {
        SolveError::Grid(e)
    }
}

// ---------------------------------------------------------------------------
// Integrator
// ---------------------------------------------------------------------------

/// Dormand-Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 6] = [
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// 5th-order weights (row 7 of A) and the embedded 4th-order weights.
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[derive(Clone, Copy, Debug)]
struct State {
    u: f64,
    f: f64,
}

struct Rhs<'a> {
    flux: &'a FluxFunction,
    spec: &'a NonlinearitySpec,
    n_pow: i32,
}

impl Rhs<'_> {
    #[inline]
    fn eval(&self, r: f64, y: State) -> (f64, f64) {
        let rp = r.powi(self.n_pow);
        let du = self.flux.invert(y.f / rp);
        let df = -rp * self.spec.g(y.u);
        (du, df)
    }
}

/// One accepted integration node: state and derivatives.
#[derive(Clone, Copy, Debug)]
struct TraceNode {
    r: f64,
    u: f64,
    f: f64,
    du: f64,
    df: f64,
}

/// Hermite value of u (or F) within a step from trace nodes `a`, `b`.
#[inline]
fn step_hermite(a: &TraceNode, b: &TraceNode, r: f64, field_f: bool) -> f64 {
    let h = b.r - a.r;
    let s = (r - a.r) / h;
    let (ya, yb, da, db) = if field_f {
        (a.f, b.f, a.df, b.df)
    } else {
        (a.u, b.u, a.du, b.du)
    };
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * ya
        + (s3 - 2.0 * s2 + s) * h * da
        + (-2.0 * s3 + 3.0 * s2) * yb
        + (s3 - s2) * h * db
}

fn refine_event(a: &TraceNode, b: &TraceNode, field_f: bool) -> f64 {
    let (mut lo, mut hi) = (a.r, b.r);
    let flo = step_hermite(a, b, lo, field_f);
    if flo == 0.0 {
        return lo;
    }
    let sign_lo = flo.signum();
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-12 * mid.max(1e-10) {
            return mid;
        }
        let fm = step_hermite(a, b, mid, field_f);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

struct ShotResult {
    outcome: ShotOutcome,
    trace: Vec<TraceNode>,
    /// Tail-fit evidence for shots that stayed positive to the horizon.
    horizon_fit: Option<HorizonFit>,
}

#[derive(Clone, Copy, Debug)]
struct HorizonFit {
    kappa: f64,
    /// Fit clears the exponent floor with a stable slope across half-windows.
    accept: bool,
}

/// Integrate a single trajectory. `decay_exit` enables the threshold-based
/// early decay stop (disabled during bisection so that midpoints classify by
/// crossing vs. ended-positive only).
fn raw_shot(
    u0: f64,
    spec: &NonlinearitySpec,
    op: &OperatorSpec,
    flux: &FluxFunction,
    cfg: &ShootingConfig,
    decay_exit: bool,
    keep_trace: bool,
) -> Result<ShotResult, SolveError> {
    if !(u0 > 0.0) || !u0.is_finite() {
        return Err(SolveError::Domain(format!("need u0 > 0, got {u0}")));
    }
    let n = op.n_dim();
    let n_f = n as f64;
    let rhs = Rhs {
        flux,
        spec,
        n_pow: n as i32 - 1,
    };
    let delta = cfg.startup_offset();
    let g0 = spec.g(u0);
    let mut y = State {
        u: series_u(flux, g0, n_f, u0, delta),
        f: -g0 * delta.powi(n as i32) / n_f,
    };
    let mut r = delta;
    let eps_u = cfg.decay_u_rel * u0;
    let eps_du = cfg.decay_du_rel * u0;

    let mut trace: Vec<TraceNode> = Vec::with_capacity(if keep_trace { 4096 } else { 2 });
    let (mut du, mut df) = rhs.eval(r, y);
    let mut node = TraceNode {
        r,
        u: y.u,
        f: y.f,
        du,
        df,
    };
    trace.push(node);

    let mut h = 1e-3_f64.min((cfg.r_max - delta) / 16.0);
    let mut steps = 0usize;
    let mut tail_window: Vec<(f64, f64)> = Vec::new(); // (r, u) once r >= r_max/10
    let mut horizon_fit: Option<HorizonFit> = None;

    let outcome = loop {
        steps += 1;
        if steps > cfg.max_steps {
            break ShotOutcome::Inconclusive {
                reason: "step budget exhausted".into(),
                ended_positive: y.u > 0.0,
            };
        }
        if h < 1e-13 * r.max(1.0) || !h.is_finite() {
            break ShotOutcome::Inconclusive {
                reason: "step size collapse".into(),
                ended_positive: y.u > 0.0,
            };
        }
        // Step cap: scan shots only need enough tail samples for the fit;
        // profile-producing shots are capped near the output-grid pitch so
        // the cubic dense output stays below quadrature accuracy.
        let h_cap = if keep_trace {
            2.0 * cfg.r_max / cfg.resolution as f64
        } else {
            cfg.r_max / 64.0
        };
        if h > h_cap {
            h = h_cap;
        }
        if r + h > cfg.r_max {
            h = cfg.r_max - r;
        }

        // One Dormand-Prince step with FSAL.
        let mut k = [[0.0f64; 2]; 7];
        k[0] = [du, df];
        let mut failed_eval = false;
        for stage in 1..7 {
            let mut su = 0.0;
            let mut sf = 0.0;
            for j in 0..stage {
                su += DP_A[stage - 1][j] * k[j][0];
                sf += DP_A[stage - 1][j] * k[j][1];
            }
            let ys = State {
                u: y.u + h * su,
                f: y.f + h * sf,
            };
            let (ku, kf) = rhs.eval(r + DP_C[stage] * h, ys);
            if !ku.is_finite() || !kf.is_finite() {
                failed_eval = true;
                break;
            }
            k[stage] = [ku, kf];
        }
        if failed_eval {
            h *= 0.25;
            continue;
        }
        let mut y5 = [y.u, y.f];
        let mut y4 = [y.u, y.f];
        for j in 0..7 {
            y5[0] += h * DP_B5[j] * k[j][0];
            y5[1] += h * DP_B5[j] * k[j][1];
            y4[0] += h * DP_B4[j] * k[j][0];
            y4[1] += h * DP_B4[j] * k[j][1];
        }
        let sc_u = cfg.atol + cfg.rtol * y.u.abs().max(y5[0].abs()).max(u0);
        let sc_f = cfg.atol + cfg.rtol * y.f.abs().max(y5[1].abs());
        let err =
            (0.5 * (((y5[0] - y4[0]) / sc_u).powi(2) + ((y5[1] - y4[1]) / sc_f).powi(2))).sqrt();
        if !err.is_finite() {
            h *= 0.25;
            continue;
        }
        if err > 1.0 {
            h *= (0.9 * err.powf(-0.2)).max(0.2);
            continue;
        }

        let r_new = r + h;
        let y_new = State { u: y5[0], f: y5[1] };
        // FSAL: stage 7 is the derivative at the accepted point.
        let (du_new, df_new) = (k[6][0], k[6][1]);
        let node_new = TraceNode {
            r: r_new,
            u: y_new.u,
            f: y_new.f,
            du: du_new,
            df: df_new,
        };

        // Crossing event.
        if y_new.u <= 0.0 {
            let r_cross = if y_new.u == 0.0 {
                r_new
            } else {
                refine_event(&node, &node_new, false)
            };
            let f_c = step_hermite(&node, &node_new, r_cross, true);
            let rp = r_cross.powi(n as i32 - 1);
            trace.push(TraceNode {
                r: r_cross,
                u: 0.0,
                f: f_c,
                du: flux.invert(f_c / rp),
                df: 0.0,
            });
            break ShotOutcome::Crossing { r_cross };
        }
        // Turning event: F from negative to nonnegative with u > 0.
        if node.f < 0.0 && node_new.f >= 0.0 {
            let r_turn = refine_event(&node, &node_new, true);
            let u_t = step_hermite(&node, &node_new, r_turn, false);
            if u_t > 0.0 {
                trace.push(TraceNode {
                    r: r_turn,
                    u: u_t,
                    f: 0.0,
                    du: 0.0,
                    df: -r_turn.powi(n as i32 - 1) * spec.g(u_t),
                });
                break ShotOutcome::Rebound { r_turn };
            }
        }

        if keep_trace {
            trace.push(node_new);
        } else {
            trace.clear();
            trace.push(node_new);
        }
        if r_new >= cfg.r_max / 10.0 {
            tail_window.push((r_new, y_new.u));
        }
        node = node_new;
        y = y_new;
        r = r_new;
        du = du_new;
        df = df_new;

        // Threshold decay exit.
        if decay_exit && y.u.abs() < eps_u && du.abs() < eps_du {
            break ShotOutcome::Decay {
                tail_exponent: fit_tail(&tail_window),
                terminal_u: y.u,
                terminal_du: du,
            };
        }

        if r >= cfg.r_max {
            let p = op.min_exponent();
            let kappa_fast = (n_f - p) / (p - 1.0);
            let (outcome, fit) =
                classify_at_horizon(&tail_window, y.u, cfg.tail_floor(op), kappa_fast, u0);
            horizon_fit = fit;
            break outcome;
        }

        h *= (0.9 * err.max(1e-10).powf(-0.2)).min(5.0);
    };

    Ok(ShotResult {
        outcome,
        trace,
        horizon_fit,
    })
}

/// Startup series value `u(r) = u0 + ∫_0^r Φ⁻¹(-g(u0) s/N) ds` by two
/// 4-point Gauss panels.
fn series_u(flux: &FluxFunction, g0: f64, n: f64, u0: f64, r: f64) -> f64 {
    const GX: [f64; 4] = [
        -0.8611363115940526,
        -0.3399810435848563,
        0.3399810435848563,
        0.8611363115940526,
    ];
    const GW: [f64; 4] = [
        0.3478548451374538,
        0.6521451548625461,
        0.6521451548625461,
        0.3478548451374538,
    ];
    let mut acc = 0.0;
    for panel in 0..2 {
        let (a, b) = (r * panel as f64 / 2.0, r * (panel as f64 + 1.0) / 2.0);
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        for i in 0..4 {
            let s = mid + half * GX[i];
            acc += GW[i] * half * flux.invert(-g0 * s / n);
        }
    }
    u0 + acc
}

fn fit_tail(window: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = window
        .iter()
        .filter(|&&(_, u)| u > 0.0)
        .map(|&(r, u)| (r.ln(), u.ln()))
        .collect();
    if pts.len() < 8 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(-sxy / sxx)
}

/// Classify a trajectory that reached the horizon still positive. Decay is
/// never concluded from the tail fit alone (transients near scale-invariant
/// separatrices can mimic a clean power tail over any fixed window); the fit
/// is returned as evidence and the solver upgrades bisected candidates after
/// a horizon-stability check.
fn classify_at_horizon(
    window: &[(f64, f64)],
    u_end: f64,
    floor: f64,
    kappa_fast: f64,
    u0: f64,
) -> (ShotOutcome, Option<HorizonFit>) {
    if u_end <= 0.0 {
        return (
            ShotOutcome::Inconclusive {
                reason: "nonpositive at horizon".into(),
                ended_positive: false,
            },
            None,
        );
    }
    let monotone = window.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12 * u0);
    if !monotone {
        return (
            ShotOutcome::Inconclusive {
                reason: "tail not monotone".into(),
                ended_positive: true,
            },
            None,
        );
    }
    // Fit the decay exponent on the two halves of the outermost decade
    // separately: a genuine power tail gives the same slope on both, while a
    // transient passing through the window drifts between them. Clearly
    // super-fast (exponential-like) tails pass regardless of drift.
    let r_end = window.last().map(|p| p.0).unwrap_or(0.0);
    let split = r_end / 10.0_f64.sqrt();
    let first: Vec<(f64, f64)> = window.iter().copied().filter(|p| p.0 < split).collect();
    let second: Vec<(f64, f64)> = window.iter().copied().filter(|p| p.0 >= split).collect();
    let (k1, k2, k_all) = (fit_tail(&first), fit_tail(&second), fit_tail(window));
    match (k1, k2, k_all) {
        (Some(k1), Some(k2), Some(k)) => {
            let stable = (k1 - k2).abs() <= 0.25 * kappa_fast || k1.min(k2) >= 1.5 * kappa_fast;
            let accept = k1 >= floor && k2 >= floor && stable;
            (
                ShotOutcome::Inconclusive {
                    reason: format!(
                        "positive at horizon: fitted tail exponent {k1:.3} -> {k2:.3} \
                         (floor {floor:.3}{})",
                        if accept { ", decay-compatible" } else { "" }
                    ),
                    ended_positive: true,
                },
                Some(HorizonFit { kappa: k, accept }),
            )
        }
        _ => (
            ShotOutcome::Inconclusive {
                reason: "tail too short to fit".into(),
                ended_positive: true,
            },
            None,
        ),
    }
}

// ---------------------------------------------------------------------------
// Profile assembly
// ---------------------------------------------------------------------------

fn build_profile(
    shot: &ShotResult,
    u0: f64,
    spec: &NonlinearitySpec,
    op: &OperatorSpec,
    flux: &FluxFunction,
    cfg: &ShootingConfig,
) -> Result<Profile, SolveError> {
    let trace = &shot.trace;
    if trace.len() < 2 {
        return Err(SolveError::Stalled {
            reason: "trajectory trace too short".into(),
        });
    }
    let r_end = trace.last().unwrap().r;
    let full = RadialGrid::graded(op.n_dim(), cfg.r_max, cfg.resolution)?;
    let grid = if r_end < cfg.r_max {
        full.truncated(r_end)?
    } else {
        full
    };
    let n_pow = op.n_dim() as i32 - 1;
    let n_f = op.n_dim() as f64;
    let g0 = spec.g(u0);
    let delta = trace[0].r;

    let nodes = grid.nodes().to_vec();
    let mut u = Vec::with_capacity(nodes.len());
    let mut du = Vec::with_capacity(nodes.len());
    let mut idx = 0usize;
    for &rn in &nodes {
        if rn == 0.0 {
            u.push(u0);
            du.push(0.0);
        } else if rn <= delta {
            u.push(series_u(flux, g0, n_f, u0, rn));
            du.push(flux.invert(-g0 * rn / n_f));
        } else {
            while idx + 2 < trace.len() && trace[idx + 1].r < rn {
                idx += 1;
            }
            let (a, b) = (&trace[idx], &trace[idx + 1]);
            if rn >= b.r {
                u.push(b.u);
                du.push(b.du);
            } else {
                let uv = step_hermite(a, b, rn, false);
                let fv = step_hermite(a, b, rn, true);
                u.push(uv);
                du.push(flux.invert(fv / rn.powi(n_pow)));
            }
        }
    }
    let exps: Vec<f64> = op.terms().iter().map(|t| t.exponent).collect();
    Ok(Profile::new(grid, u, du)?.with_cached_exponents(&exps))
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// Integrate one trajectory from `u(0) = u0` and classify it.
pub fn integrate_shot(
    u0: f64,
    spec: &NonlinearitySpec,
    op: &OperatorSpec,
    cfg: &ShootingConfig,
) -> Result<(Profile, ShotOutcome), SolveError> {
    cfg.validate()?;
    let flux = op.flux_fn();
    let shot = raw_shot(u0, spec, op, &flux, cfg, true, true)?;
    let profile = build_profile(&shot, u0, spec, op, &flux, cfg)?;
    Ok((profile, shot.outcome))
}

/// A located ground-state candidate.
#[derive(Debug)]
pub struct GroundState {
    pub profile: Profile,
    pub u0: f64,
    /// Action `I(u)` assembled by quadrature.
    pub action: f64,
    /// `(1/N) Σ c_e ‖∇u‖_e^e`, the identity-side action used for candidate
    /// comparison.
    pub action_identity: f64,
    pub outcome: ShotOutcome,
    pub bracket: (f64, f64),
    pub scan: Vec<ScanRow>,
    pub candidates: Vec<CandidateSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub u0: f64,
    pub action: f64,
    pub action_identity: f64,
    pub outcome: String,
    pub bracket: (f64, f64),
}

/// Geometric scan over `u(0)`, streaming rows to the sink. For positive-mass
/// nonlinearities the lower bound is clamped to the smallest `s` with
/// `G(s) > 0`.
pub fn scan(
    spec: &NonlinearitySpec,
    op: &OperatorSpec,
    cfg: &ShootingConfig,
    sink: &mut dyn FnMut(&ScanRow),
) -> Result<Vec<(f64, ShotOutcome)>, SolveError> {
    cfg.validate()?;
    let flux = op.flux_fn();
    let mut lo = cfg.scan_lo;
    if matches!(
        spec.regime,
        crate::nonlinearity::MassRegime::PositiveMass { .. }
    ) {
        if let Some(floor) = spec.positive_potential_floor() {
            lo = lo.max(floor * (1.0 + 1e-9));
        }
    }
    if lo >= cfg.scan_hi {
        return Err(SolveError::Domain(format!(
            "scan range empty after positivity clamp: [{lo}, {}]",
            cfg.scan_hi
        )));
    }
    let n = cfg.scan_count;
    let ratio = (cfg.scan_hi / lo).powf(1.0 / (n - 1) as f64);
    let mut rows = Vec::with_capacity(n);
    let mut u0 = lo;
    for _ in 0..n {
        let shot = raw_shot(u0, spec, op, &flux, cfg, true, false)?;
        sink(&ScanRow {
            phase: ScanPhase::Scan,
            u0,
            outcome: shot.outcome.label().to_string(),
            event_radius: shot.outcome.event_radius(),
        });
        rows.push((u0, shot.outcome));
        u0 *= ratio;
    }
    Ok(rows)
}

/// Bisect one bracket to tolerance. Midpoints classify by crossing vs.
/// ended-positive; a hard-inconclusive midpoint retries at tighter tolerance.
fn bisect_bracket(
    spec: &NonlinearitySpec,
    op: &OperatorSpec,
    flux: &FluxFunction,
    cfg: &ShootingConfig,
    mut u_pos: f64,
    mut u_cross: f64,
    sink: &mut dyn FnMut(&ScanRow),
) -> Result<(f64, (f64, f64)), SolveError> {
    let tol = cfg.bisect_tol * u_pos.max(u_cross).max(1.0);
    let mut guard = 0usize;
    while (u_cross - u_pos).abs() > tol {
        guard += 1;
        if guard > 200 {
            return Err(SolveError::Stalled {
                reason: "bisection exceeded 200 iterations".into(),
            });
        }
        let mid = 0.5 * (u_pos + u_cross);
        let mut outcome = raw_shot(mid, spec, op, flux, cfg, false, false)?.outcome;
        if let ShotOutcome::Inconclusive { reason, .. } = &outcome {
            if reason.contains("collapse") || reason.contains("budget") {
                let mut tighter = cfg.clone();
                tighter.rtol = cfg.rtol * 1e-2;
                tighter.atol = cfg.atol * 1e-2;
                outcome = raw_shot(mid, spec, op, flux, &tighter, false, false)?.outcome;
            }
        }
        sink(&ScanRow {
            phase: ScanPhase::Bisect,
            u0: mid,
            outcome: outcome.label().to_string(),
            event_radius: outcome.event_radius(),
        });
        if outcome.is_high_side() {
            u_cross = mid;
        } else if outcome.is_low_side() {
            u_pos = mid;
        } else {
            return Err(SolveError::Stalled {
                reason: format!("unclassifiable midpoint at u0 = {mid}"),
            });
        }
    }
    Ok((0.5 * (u_pos + u_cross), (u_pos, u_cross)))
}


/// Bisect the bracket at a reduced horizon; the crossing endpoint may no
/// longer cross within it and is widened geometrically first. Returns the
/// boundary value, or `None` when no crossing is reachable.
fn bisect_reduced(
    spec: &NonlinearitySpec,
    op: &OperatorSpec,
    flux: &FluxFunction,
    cfg: &ShootingConfig,
    u_pos: f64,
    mut u_cross: f64,
) -> Option<f64> {
    let step = (u_cross / u_pos).max(1.1);
    let mut tries = 0;
    loop {
        let shot = raw_shot(u_cross, spec, op, flux, cfg, false, false).ok()?;
        if shot.outcome.is_high_side() {
            break;
        }
        u_cross *= step;
        tries += 1;
        if tries > 8 {
            return None;
        }
    }
    bisect_bracket(spec, op, flux, cfg, u_pos, u_cross, &mut |_| {})
        .ok()
        .map(|(u0, _)| u0)
}

fn solve_brackets(
    spec: &NonlinearitySpec,
    op: &OperatorSpec,
    cfg: &ShootingConfig,
    max_brackets: Option<usize>,
    sink: &mut dyn FnMut(&ScanRow),
) -> Result<GroundState, SolveError> {
    if spec.s0.is_none() {
        return Err(SolveError::Domain(
            "nonlinearity must be truncated before solving".into(),
        ));
    }
    let flux = op.flux_fn();
    let mut scan_rows_store: Vec<ScanRow> = Vec::new();
    let rows = {
        let mut tee = |row: &ScanRow| {
            scan_rows_store.push(row.clone());
            sink(row);
        };
        scan(spec, op, cfg, &mut tee)?
    };

    // Adjacent (positive-side, crossing) pairs in either orientation.
    let mut brackets: Vec<(f64, f64)> = Vec::new();
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.1.is_low_side() && b.1.is_high_side() {
            brackets.push((a.0, b.0));
        } else if a.1.is_high_side() && b.1.is_low_side() {
            brackets.push((b.0, a.0));
        }
    }
    if brackets.is_empty() {
        return Err(SolveError::NoBracket {
            scan: scan_rows_store,
        });
    }
    if let Some(limit) = max_brackets {
        brackets.truncate(limit);
    }

    struct Candidate {
        u0: f64,
        profile: Profile,
        outcome: ShotOutcome,
        action: f64,
        action_identity: f64,
        bracket: (f64, f64),
    }
    let mut candidates: Vec<Candidate> = Vec::new();
    for (u_pos, u_cross) in brackets {
        let (u0_star, bracket) = {
            let mut tee = |row: &ScanRow| {
                scan_rows_store.push(row.clone());
                sink(row);
            };
            bisect_bracket(spec, op, &flux, cfg, u_pos, u_cross, &mut tee)?
        };
        // Final shot with decay thresholds on; fall back to the positive-side
        // endpoint if the midpoint fails to classify as decay.
        let mut chosen: Option<(f64, ShotResult)> = None;
        for u_try in [u0_star, bracket.0] {
            let shot = raw_shot(u_try, spec, op, &flux, cfg, true, true)?;
            let is_decay = matches!(shot.outcome, ShotOutcome::Decay { .. });
            match &chosen {
                None => chosen = Some((u_try, shot)),
                Some((_, prev)) => {
                    let metric = |s: &ShotResult| {
                        let t = s.trace.last().unwrap();
                        t.u.abs() + t.du.abs()
                    };
                    if metric(&shot) < metric(prev) {
                        chosen = Some((u_try, shot));
                    }
                }
            }
            if is_decay {
                break;
            }
        }
        let (mut u0_final, mut shot) = chosen.unwrap();
        let mut outcome = shot.outcome.clone();
        if !matches!(outcome, ShotOutcome::Decay { .. }) {
            // Algebraically decaying candidates never meet the thresholds
            // inside the horizon, and the raw bisection limit u0*(R) sits a
            // horizon-width away from the true shooting value — its
            // trajectory dives or flattens right at the horizon. Measure the
            // drift against the halved horizon, require it to contract
            // (genuine solutions converge roughly harmonically, rho ≈ 0.5;
            // critical-exponent artifacts drift at rho near 1), and reshoot
            // at boundary values backed off by the extrapolated width.
            let mut tries: Vec<f64> = Vec::new();
            let mut cfg_half = cfg.clone();
            cfg_half.r_max = (cfg.r_max * 0.5).max(2.0);
            if let Some(u0_half) = bisect_reduced(spec, op, &flux, &cfg_half, u_pos, u_cross) {
                let d2 = u0_half - u0_star;
                let converged = d2.abs() <= cfg.horizon_stability_tol * u0_star;
                let mut rho = None;
                if d2.abs() > 10.0 * cfg.bisect_tol * u0_star.max(1.0) {
                    let mut cfg_q = cfg.clone();
                    cfg_q.r_max = (cfg.r_max * 0.25).max(2.0);
                    if let Some(u0_q) = bisect_reduced(spec, op, &flux, &cfg_q, u_pos, u_cross)
                    {
                        let d1 = u0_q - u0_half;
                        if d1.abs() > 0.0 && d2 / d1 > 0.0 {
                            rho = Some(d2 / d1);
                        }
                    }
                }
                let contracting = matches!(rho, Some(r) if r <= 0.75);
                if converged || contracting {
                    if let Some(r) = rho {
                        if r <= 0.75 {
                            tries.push(u0_star - d2 * r / (1.0 - r));
                        }
                    }
                    // First-order backoff (exact for rho = 1/2), then the
                    // raw boundary itself.
                    tries.push(u0_star - d2);
                    tries.push(u0_star);
                }
            }
            for u0_try in tries {
                let reshot = raw_shot(u0_try, spec, op, &flux, cfg, true, true)?;
                let fit_ok = reshot.horizon_fit.is_some_and(|f| f.accept);
                let threshold_decay = matches!(reshot.outcome, ShotOutcome::Decay { .. });
                if fit_ok || threshold_decay {
                    let t = reshot.trace.last().unwrap();
                    outcome = ShotOutcome::Decay {
                        tail_exponent: reshot
                            .horizon_fit
                            .map(|f| f.kappa)
                            .or(match reshot.outcome {
                                ShotOutcome::Decay { tail_exponent, .. } => tail_exponent,
                                _ => None,
                            }),
                        terminal_u: t.u,
                        terminal_du: t.du,
                    };
                    u0_final = u0_try;
                    shot = reshot;
                    break;
                }
            }
        }
        // Admit the candidate only when it decays, or rebounded after
        // tracking the connecting trajectory deep into the tail (near-miss
        // fallback for over-tight thresholds). Horizon-edge artifacts are
        // dropped here.
        let terminal = shot.trace.last().unwrap();
        let near_miss = matches!(outcome, ShotOutcome::Rebound { .. })
            && terminal.u.abs() + terminal.du.abs() < 1e-4 * u0_final;
        if !matches!(outcome, ShotOutcome::Decay { .. }) && !near_miss {
            continue;
        }
        let profile = build_profile(&shot, u0_final, spec, op, &flux, cfg)?;
        let action = variational::action(&profile, spec, op);
        let action_identity = variational::action_identity(&profile, op);
        candidates.push(Candidate {
            u0: u0_final,
            profile,
            outcome,
            action,
            action_identity,
            bracket,
        });
    }
    if candidates.is_empty() {
        return Err(SolveError::NoBracket {
            scan: scan_rows_store,
        });
    }

    // Minimal action wins; ties within 1e-6 relative go to the smaller u0.
    let mut best_idx = 0;
    for i in 1..candidates.len() {
        let (a, b) = (&candidates[i], &candidates[best_idx]);
        let scale = a
            .action_identity
            .abs()
            .max(b.action_identity.abs())
            .max(1e-300);
        if a.action_identity < b.action_identity - 1e-6 * scale
            || ((a.action_identity - b.action_identity).abs() <= 1e-6 * scale && a.u0 < b.u0)
        {
            best_idx = i;
        }
    }
    let summaries: Vec<CandidateSummary> = candidates
        .iter()
        .map(|c| CandidateSummary {
            u0: c.u0,
            action: c.action,
            action_identity: c.action_identity,
            outcome: c.outcome.label().to_string(),
            bracket: c.bracket,
        })
        .collect();
    let chosen = candidates.swap_remove(best_idx);
    Ok(GroundState {
        profile: chosen.profile,
        u0: chosen.u0,
        action: chosen.action,
        action_identity: chosen.action_identity,
        outcome: chosen.outcome,
        bracket: chosen.bracket,
        scan: scan_rows_store,
        candidates: summaries,
    })
}

/// Locate a ground state from the first scan bracket.
pub fn find_ground_state(
    spec: &NonlinearitySpec,
    op: &OperatorSpec,
    cfg: &ShootingConfig,
) -> Result<GroundState, SolveError> {
    solve_brackets(spec, op, cfg, Some(1), &mut |_| {})
}

/// As [`find_ground_state`] but streaming scan and bisection rows.
pub fn find_ground_state_observed(
    spec: &NonlinearitySpec,
    op: &OperatorSpec,
    cfg: &ShootingConfig,
    sink: &mut dyn FnMut(&ScanRow),
) -> Result<GroundState, SolveError> {
    solve_brackets(spec, op, cfg, Some(1), sink)
}

/// Bisect every bracket in the scan and return the candidate with minimal
/// action (all candidates reported).
pub fn multi_start_ground_state(
    spec: &NonlinearitySpec,
    op: &OperatorSpec,
    cfg: &ShootingConfig,
) -> Result<GroundState, SolveError> {
    solve_brackets(spec, op, cfg, None, &mut |_| {})
}

/// As [`multi_start_ground_state`] with a progress sink.
pub fn multi_start_observed(
    spec: &NonlinearitySpec,
    op: &OperatorSpec,
    cfg: &ShootingConfig,
    sink: &mut dyn FnMut(&ScanRow),
) -> Result<GroundState, SolveError> {
    solve_brackets(spec, op, cfg, None, sink)
}
