//! Nonlinearity classes: hypothesis checks, truncation and decomposition.
//!
//! The nonlinear term `g` is given either as one of the builtin families
//! (pure powers, the cubic-minus-linear classic, min-of-powers, differences
//! of powers, polynomials) or as an arbitrary closure. Builtins are lowered
//! to piecewise sums of power terms `c s^e` on `s ≥ 0`, which stay closed
//! under everything this module does — truncation at the first zero `s₀`
//! above `ζ`, the positive-part split `g = g₁ - g₂`, the positive-mass shift
//! `g₁ = (g + m_ℓ s^{ℓ-1})₊` — so their primitives `G`, `G₁`, `G₂` are exact.
//! Custom closures fall back to adaptive Gauss-Kronrod quadrature with a
//! memoized cumulative table.
//!
//! Growth hypotheses (supercritical near zero or a negative mass limit,
//! subcritical near infinity, `G(ζ) > 0`) are checked by sampling on
//! geometric grids and reported as evidence, never as proof.

use crate::operator::{OperatorSpec, QStarRule};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::{Arc, RwLock};

#[derive(Debug, Clone)]
pub enum NonlinearityError {
    InvalidSpec(String),
    /// `g` returned a non-finite value at the given point.
    Evaluation { s: f64 },
    /// Adaptive quadrature failed to converge on an interval.
    QuadratureNonConvergence { lo: f64, hi: f64 },
}

impl fmt::Display for NonlinearityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NonlinearityError::InvalidSpec(m) => write!(f, "invalid nonlinearity: {m}"),
            NonlinearityError::Evaluation { s } => {
                write!(f, "non-finite nonlinearity value at s = {s}")
            }
            NonlinearityError::QuadratureNonConvergence { lo, hi } => {
                write!(f, "quadrature did not converge on [{lo}, {hi}]")
            }
        }
    }
}

impl std::error::Error for NonlinearityError {}

// ---------------------------------------------------------------------------
// Power-sum curves
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
struct PowerTerm {
    c: f64,
    e: f64,
}

#[inline]
fn eval_terms(terms: &[PowerTerm], s: f64) -> f64 {
    let mut v = 0.0;
    for t in terms {
        v += t.c * s.powf(t.e);
    }
    v
}

/// A contiguous piece `[lo, hi)` carrying a sum of power terms (empty terms
/// mean the zero function there).
#[derive(Debug, Clone)]
struct Segment {
    lo: f64,
    hi: f64,
    terms: Vec<PowerTerm>,
}

/// Piecewise power-sum covering `[0, ∞)`.
#[derive(Debug, Clone)]
pub(crate) struct PiecewisePowers {
    segs: Vec<Segment>,
}

impl PiecewisePowers {
    fn from_terms(terms: Vec<PowerTerm>) -> Self {
        PiecewisePowers {
            segs: vec![Segment {
                lo: 0.0,
                hi: f64::INFINITY,
                terms,
            }],
        }
    }

    fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        for seg in &self.segs {
            if s < seg.hi || (seg.hi.is_infinite() && s >= seg.lo) {
                return eval_terms(&seg.terms, s);
            }
        }
        0.0
    }

    fn split_at(&mut self, s: f64) {
        if !(s > 0.0) || !s.is_finite() {
            return;
        }
        let mut out = Vec::with_capacity(self.segs.len() + 1);
        for seg in self.segs.drain(..) {
            if seg.lo < s && s < seg.hi {
                out.push(Segment {
                    lo: seg.lo,
                    hi: s,
                    terms: seg.terms.clone(),
                });
                out.push(Segment {
                    lo: s,
                    hi: seg.hi,
                    terms: seg.terms,
                });
            } else {
                out.push(seg);
            }
        }
        self.segs = out;
    }

    fn truncate_at(&mut self, s0: f64) {
        if !s0.is_finite() {
            return;
        }
        self.split_at(s0);
        for seg in &mut self.segs {
            if seg.lo >= s0 {
                seg.terms.clear();
            }
        }
    }

    fn plus_power(&self, c: f64, e: f64) -> Self {
        let mut out = self.clone();
        for seg in &mut out.segs {
            seg.terms.push(PowerTerm { c, e });
        }
        out
    }

    /// Pointwise difference, merging breakpoints.
    fn sub(&self, other: &Self) -> Self {
        let mut bounds: Vec<f64> = self
            .segs
            .iter()
            .chain(&other.segs)
            .flat_map(|s| [s.lo, s.hi])
            .filter(|b| b.is_finite())
            .collect();
        bounds.push(0.0);
        bounds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        bounds.dedup_by(|a, b| (*a - *b).abs() <= f64::EPSILON * a.abs().max(1.0));
        let mut segs = Vec::new();
        for w in bounds.windows(2) {
            segs.push(self.segment_terms_minus(other, w[0], w[1]));
        }
        let last = *bounds.last().unwrap();
        segs.push(self.segment_terms_minus(other, last, f64::INFINITY));
        PiecewisePowers { segs }
    }

    fn segment_terms_minus(&self, other: &Self, lo: f64, hi: f64) -> Segment {
        let probe = if hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            lo.max(0.5) * 2.0
        };
        let mut terms = Vec::new();
        for seg in &self.segs {
            if probe >= seg.lo && probe < seg.hi {
                terms.extend_from_slice(&seg.terms);
            }
        }
        for seg in &other.segs {
            if probe >= seg.lo && probe < seg.hi {
                terms.extend(seg.terms.iter().map(|t| PowerTerm { c: -t.c, e: t.e }));
            }
        }
        // Cancel equal exponents exactly; avoids catastrophic cancellation
        // when evaluating g2 = g1 - g at large s.
        Segment {
            lo,
            hi,
            terms: combine_terms(terms),
        }
    }

    /// Positive part, splitting segments at the sign changes of the term sum.
    fn positive_part(&self) -> Self {
        let mut segs = Vec::new();
        for seg in &self.segs {
            let roots = positive_roots(&seg.terms, seg.lo, seg.hi);
            let mut cuts = vec![seg.lo];
            cuts.extend(roots);
            cuts.push(seg.hi);
            for w in cuts.windows(2) {
                let (a, b) = (w[0], w[1]);
                if !(b > a) {
                    continue;
                }
                let probe = if b.is_finite() {
                    0.5 * (a + b)
                } else {
                    a.max(0.5) * 2.0
                };
                let keep = eval_terms(&seg.terms, probe) > 0.0;
                segs.push(Segment {
                    lo: a,
                    hi: b,
                    terms: if keep { seg.terms.clone() } else { Vec::new() },
                });
            }
        }
        PiecewisePowers { segs }
    }

    fn primitive(&self) -> PiecewisePrimitive {
        let mut segs = Vec::new();
        let mut offset = 0.0;
        for seg in &self.segs {
            segs.push(PrimSegment {
                lo: seg.lo,
                hi: seg.hi,
                offset,
                terms: seg.terms.clone(),
            });
            if seg.hi.is_finite() {
                offset += seg_integral(&seg.terms, seg.lo, seg.hi);
            }
        }
        PiecewisePrimitive { segs }
    }
}

fn combine_terms(terms: Vec<PowerTerm>) -> Vec<PowerTerm> {
    let mut combined: Vec<PowerTerm> = Vec::with_capacity(terms.len());
    for t in terms {
        if let Some(u) = combined.iter_mut().find(|u| u.e == t.e) {
            u.c += t.c;
        } else {
            combined.push(t);
        }
    }
    combined.retain(|t| t.c != 0.0);
    combined
}

fn seg_integral(terms: &[PowerTerm], lo: f64, hi: f64) -> f64 {
    terms
        .iter()
        .map(|t| t.c / (t.e + 1.0) * (hi.powf(t.e + 1.0) - lo.powf(t.e + 1.0)))
        .sum()
}

/// Sign changes of a power sum inside `(lo, hi)`, by a candidate scan around
/// the pairwise balance radii refined by bisection. Touching zeros without a
/// sign change are not detected.
fn positive_roots(terms: &[PowerTerm], lo: f64, hi: f64) -> Vec<f64> {
    // Combine equal exponents first.
    let mut combined: Vec<PowerTerm> = Vec::new();
    for t in terms {
        if let Some(u) = combined.iter_mut().find(|u| u.e == t.e) {
            u.c += t.c;
        } else {
            combined.push(*t);
        }
    }
    combined.retain(|t| t.c != 0.0);
    if combined.len() < 2 {
        return Vec::new();
    }
    let any_pos = combined.iter().any(|t| t.c > 0.0);
    let any_neg = combined.iter().any(|t| t.c < 0.0);
    if !(any_pos && any_neg) {
        return Vec::new();
    }
    // Radii where opposite-signed term pairs balance.
    let mut radii = Vec::new();
    for (i, a) in combined.iter().enumerate() {
        for b in combined.iter().skip(i + 1) {
            if a.c * b.c < 0.0 && a.e != b.e {
                let r = (a.c.abs() / b.c.abs()).powf(1.0 / (b.e - a.e));
                if r.is_finite() && r > 0.0 {
                    radii.push(r);
                }
            }
        }
    }
    let r_hi = radii.iter().cloned().fold(0.0_f64, f64::max);
    let scan_lo = lo.max(1e-12);
    let mut scan_hi = if hi.is_finite() {
        hi
    } else {
        (4.0 * r_hi).max(8.0 * scan_lo).max(8.0)
    };
    // On an unbounded piece the dominant exponent fixes the sign at infinity;
    // expand until the sampled sign agrees with it.
    if !hi.is_finite() {
        let dom = combined
            .iter()
            .cloned()
            .fold(PowerTerm { c: 0.0, e: -1.0 }, |acc, t| {
                if t.e > acc.e {
                    t
                } else {
                    acc
                }
            });
        let mut guard = 0;
        while eval_terms(&combined, scan_hi).signum() != dom.c.signum() && guard < 60 {
            scan_hi *= 2.0;
            guard += 1;
        }
    }
    if !(scan_hi > scan_lo) {
        return Vec::new();
    }
    // Geometric scan plus the balance radii as extra candidates.
    let mut pts: Vec<f64> = Vec::with_capacity(160);
    let ratio = (scan_hi / scan_lo).powf(1.0 / 127.0);
    let mut x = scan_lo;
    for _ in 0..128 {
        pts.push(x);
        x *= ratio;
    }
    for &r in &radii {
        for f in [0.5, 1.0, 2.0] {
            let v = r * f;
            if v > scan_lo && v < scan_hi {
                pts.push(v);
            }
        }
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut roots = Vec::new();
    let mut prev = pts[0];
    let mut fprev = eval_terms(&combined, prev);
    for &p in &pts[1..] {
        let fp = eval_terms(&combined, p);
        if fprev != 0.0 && fp != 0.0 && fprev.signum() != fp.signum() {
            roots.push(bisect_root(|s| eval_terms(&combined, s), prev, p));
        }
        prev = p;
        fprev = fp;
    }
    roots.retain(|&r| r > lo && r < hi);
    roots
}

fn bisect_root(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a) <= 1e-13 * m.abs().max(1e-300) {
            return m;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fa.signum() == fm.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone)]
struct PrimSegment {
    lo: f64,
    hi: f64,
    offset: f64,
    terms: Vec<PowerTerm>,
}

/// Exact primitive of a piecewise power-sum.
#[derive(Debug, Clone)]
pub struct PiecewisePrimitive {
    segs: Vec<PrimSegment>,
}

impl PiecewisePrimitive {
    fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        for seg in &self.segs {
            if s < seg.hi || (seg.hi.is_infinite() && s >= seg.lo) {
                return seg.offset + seg_integral(&seg.terms, seg.lo, s);
            }
        }
        self.segs.last().map_or(0.0, |seg| seg.offset)
    }
}

// ---------------------------------------------------------------------------
// Adaptive Gauss-Kronrod fallback
// ---------------------------------------------------------------------------

const GK_NODES: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.000000000000000,
];
const GK_WK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const GK_WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut k = 0.0;
    let mut g = 0.0;
    for (i, &x) in GK_NODES.iter().enumerate() {
        let (f1, f2) = (f(mid - half * x), f(mid + half * x));
        let pair = if x == 0.0 { f1 } else { f1 + f2 };
        k += GK_WK[i] * pair;
        if i % 2 == 1 {
            g += GK_WG[i / 2] * pair;
        }
    }
    (k * half, (k - g).abs() * half)
}

fn adaptive_gk(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
    scale: f64,
    depth: u32,
) -> Result<f64, NonlinearityError> {
    let (val, err) = gk15(f, a, b);
    if !val.is_finite() {
        return Err(NonlinearityError::Evaluation { s: 0.5 * (a + b) });
    }
    if err <= rel_tol * scale.max(val.abs()) || err == 0.0 {
        return Ok(val);
    }
    if depth == 0 {
        return Err(NonlinearityError::QuadratureNonConvergence { lo: a, hi: b });
    }
    let mid = 0.5 * (a + b);
    Ok(adaptive_gk(f, a, mid, rel_tol, scale, depth - 1)?
        + adaptive_gk(f, mid, b, rel_tol, scale, depth - 1)?)
}

/// Memoized cumulative integral `∫_0^s f` for closures, with panel table
/// extension synchronized behind a lock.
pub struct QuadTable {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    rel_tol: f64,
    max_depth: u32,
    /// (panel end, cumulative integral up to it), ascending from 0.
    panels: RwLock<Vec<(f64, f64)>>,
}

impl fmt::Debug for QuadTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "QuadTable(rel_tol = {})", self.rel_tol)
    }
}

impl QuadTable {
    fn new(f: Arc<dyn Fn(f64) -> f64 + Send + Sync>, rel_tol: f64, max_depth: u32) -> Self {
        QuadTable {
            f,
            rel_tol,
            max_depth,
            panels: RwLock::new(Vec::new()),
        }
    }

    fn extend_to(&self, s: f64) -> Result<(), NonlinearityError> {
        let mut panels = self.panels.write().unwrap();
        let (mut hi, mut cum) = panels.last().copied().unwrap_or((0.0, 0.0));
        while hi < s {
            let next = if hi == 0.0 { 1.0_f64.min(s.max(1e-3)) } else { hi * 2.0 };
            let quad = adaptive_gk(
                self.f.as_ref(),
                hi,
                next,
                self.rel_tol,
                cum.abs(),
                self.max_depth,
            )?;
            cum += quad;
            hi = next;
            panels.push((hi, cum));
        }
        Ok(())
    }

    fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        if self.panels.read().unwrap().last().is_none_or(|&(hi, _)| hi < s) {
            // Best-effort extension; primitives() validates convergence up
            // front over the declared domain.
            let _ = self.extend_to(s);
        }
        let panels = self.panels.read().unwrap();
        let idx = panels.partition_point(|&(hi, _)| hi <= s);
        let (lo, base) = if idx == 0 { (0.0, 0.0) } else { panels[idx - 1] };
        if lo == s {
            return base;
        }
        let partial =
            adaptive_gk(self.f.as_ref(), lo, s, self.rel_tol, base.abs(), self.max_depth)
                .unwrap_or_else(|_| gk15(self.f.as_ref(), lo, s).0);
        base + partial
    }
}

// ---------------------------------------------------------------------------
// Curves and primitives
// ---------------------------------------------------------------------------

/// A scalar curve on `s ≥ 0` (zero for `s ≤ 0`): exact power-sum or closure.
#[derive(Clone)]
pub(crate) enum Curve {
    Powers(PiecewisePowers),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Curve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Curve::Powers(p) => write!(f, "Curve::Powers({} segments)", p.segs.len()),
            Curve::Custom(_) => write!(f, "Curve::Custom"),
        }
    }
}

impl Curve {
    pub fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match self {
            Curve::Powers(p) => p.eval(s),
            Curve::Custom(f) => f(s),
        }
    }

    fn truncated(&self, s0: f64) -> Curve {
        if !s0.is_finite() {
            return self.clone();
        }
        match self {
            Curve::Powers(p) => {
                let mut q = p.clone();
                q.truncate_at(s0);
                Curve::Powers(q)
            }
            Curve::Custom(f) => {
                let f = f.clone();
                Curve::Custom(Arc::new(move |s| if s > s0 { 0.0 } else { f(s) }))
            }
        }
    }

    fn positive_part(&self) -> Curve {
        match self {
            Curve::Powers(p) => Curve::Powers(p.positive_part()),
            Curve::Custom(f) => {
                let f = f.clone();
                Curve::Custom(Arc::new(move |s| f(s).max(0.0)))
            }
        }
    }

    fn plus_power_positive_part(&self, c: f64, e: f64) -> Curve {
        match self {
            Curve::Powers(p) => Curve::Powers(p.plus_power(c, e).positive_part()),
            Curve::Custom(f) => {
                let f = f.clone();
                Curve::Custom(Arc::new(move |s| (f(s) + c * s.powf(e)).max(0.0)))
            }
        }
    }

    fn minus(&self, other: &Curve) -> Curve {
        match (self, other) {
            (Curve::Powers(a), Curve::Powers(b)) => Curve::Powers(a.sub(b)),
            _ => {
                let (a, b) = (self.clone(), other.clone());
                Curve::Custom(Arc::new(move |s| a.eval(s) - b.eval(s)))
            }
        }
    }

    fn primitive(&self, rel_tol: f64, max_depth: u32) -> Primitive {
        match self {
            Curve::Powers(p) => Primitive::Exact(p.primitive()),
            Curve::Custom(f) => {
                Primitive::Quadrature(Arc::new(QuadTable::new(f.clone(), rel_tol, max_depth)))
            }
        }
    }
}

/// A primitive evaluator `s ↦ ∫_0^s f`: exact for power sums, memoized
/// adaptive quadrature otherwise. Relative quadrature error is kept at or
/// below 1e-10 of the accumulated integral.
#[derive(Debug, Clone)]
pub enum Primitive {
    Exact(PiecewisePrimitive),
    Quadrature(Arc<QuadTable>),
}

impl Primitive {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Primitive::Exact(p) => p.eval(s),
            Primitive::Quadrature(t) => t.eval(s),
        }
    }

    /// Pre-validate quadrature convergence over `[0, s_max]`.
    pub fn ensure_domain(&self, s_max: f64) -> Result<(), NonlinearityError> {
        match self {
            Primitive::Exact(_) => Ok(()),
            Primitive::Quadrature(t) => t.extend_to(s_max),
        }
    }
}

// ---------------------------------------------------------------------------
// Specs
// ---------------------------------------------------------------------------

/// Behavior of `g` near zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MassRegime {
    /// `g(s)/s^{ℓ-1} → 0` as `s → 0+` for the admissible exponent range.
    ZeroMass,
    /// `g(s)/s^{ℓ-1} → -m_ℓ < 0` for some `ℓ ∈ [p, p*)`.
    PositiveMass { ell: f64, m_ell: f64 },
}

/// The form of the nonlinear term; the four named builtins plus polynomials
/// and arbitrary closures.
#[derive(Clone)]
pub enum GForm {
    /// `g(s) = s^{α-1}`.
    PurePower { alpha: f64 },
    /// `g(s) = -s + s³`.
    CubicMinusLinear,
    /// `g(s) = min(s^{q*-1}, s^{ℓ-1})` with `ℓ < q*`.
    MinPower { l: f64, q_star: f64 },
    /// `g(s) = K s^{ℓ₁-1} - s^{ℓ₂-1}` with `K > 0`.
    TwoPower { l1: f64, l2: f64, k: f64 },
    /// `g(s) = Σ coeffs[i] s^i` (constant coefficient must vanish).
    Polynomial { coeffs: Vec<f64> },
    /// Arbitrary continuous `g` on `s > 0`; primitives use quadrature.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for GForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&descriptor_of(self))
    }
}

fn descriptor_of(form: &GForm) -> String {
    match form {
        GForm::PurePower { alpha } => format!("pure_power(alpha={alpha})"),
        GForm::CubicMinusLinear => "cubic_minus_linear".to_string(),
        GForm::MinPower { l, q_star } => format!("min_power(l={l},qstar={q_star})"),
        GForm::TwoPower { l1, l2, k } => format!("two_power(l1={l1},l2={l2},K={k})"),
        GForm::Polynomial { coeffs } => format!("polynomial({coeffs:?})"),
        GForm::Custom(_) => "custom".to_string(),
    }
}

fn lower(form: &GForm) -> Result<Curve, NonlinearityError> {
    let terms = match form {
        GForm::PurePower { alpha } => {
            if !(*alpha > 1.0) {
                return Err(NonlinearityError::InvalidSpec(format!(
                    "pure power needs alpha > 1, got {alpha}"
                )));
            }
            vec![PowerTerm {
                c: 1.0,
                e: alpha - 1.0,
            }]
        }
        GForm::CubicMinusLinear => vec![
            PowerTerm { c: -1.0, e: 1.0 },
            PowerTerm { c: 1.0, e: 3.0 },
        ],
        GForm::MinPower { l, q_star } => {
            if !(*l > 1.0 && q_star > l) {
                return Err(NonlinearityError::InvalidSpec(format!(
                    "min_power needs 1 < l < q*, got l = {l}, q* = {q_star}"
                )));
            }
            // s^{q*-1} <= s^{l-1} exactly on [0, 1].
            let mut pw = PiecewisePowers::from_terms(vec![PowerTerm {
                c: 1.0,
                e: q_star - 1.0,
            }]);
            pw.split_at(1.0);
            pw.segs[1].terms = vec![PowerTerm { c: 1.0, e: l - 1.0 }];
            return Ok(Curve::Powers(pw));
        }
        GForm::TwoPower { l1, l2, k } => {
            if !(*k > 0.0 && *l1 > 1.0 && *l2 > 1.0 && l1 != l2) {
                return Err(NonlinearityError::InvalidSpec(format!(
                    "two_power needs K > 0 and distinct exponents > 1, got K = {k}, l1 = {l1}, l2 = {l2}"
                )));
            }
            vec![
                PowerTerm { c: *k, e: l1 - 1.0 },
                PowerTerm { c: -1.0, e: l2 - 1.0 },
            ]
        }
        GForm::Polynomial { coeffs } => {
            if coeffs.first().copied().unwrap_or(0.0) != 0.0 {
                return Err(NonlinearityError::InvalidSpec(
                    "polynomial constant term must be zero (g(0) = 0)".into(),
                ));
            }
            coeffs
                .iter()
                .enumerate()
                .filter(|(_, &c)| c != 0.0)
                .map(|(i, &c)| PowerTerm { c, e: i as f64 })
                .collect()
        }
        GForm::Custom(f) => return Ok(Curve::Custom(f.clone())),
    };
    Ok(Curve::Powers(PiecewisePowers::from_terms(terms)))
}

/// Relative tolerance for fallback quadrature primitives.
const PRIMITIVE_REL_TOL: f64 = 1e-11;
const PRIMITIVE_MAX_DEPTH: u32 = 48;

/// A validated nonlinearity bound to an operator's critical exponents.
#[derive(Debug, Clone)]
pub struct NonlinearitySpec {
    form: GForm,
    curve: Curve,
    big_g: Primitive,
    pub zeta: f64,
    pub regime: MassRegime,
    pub p_star: f64,
    pub q_star: f64,
    /// Truncation point: `None` before [`NonlinearitySpec::truncate`],
    /// possibly `+∞` after.
    pub s0: Option<f64>,
    pub pure_power_alpha: Option<f64>,
    /// Upper end of the `s₀` zero scan.
    pub s0_scan_max: f64,
}

impl NonlinearitySpec {
    /// Build and validate a spec against an operator. `q_star_override` is
    /// required when the operator's top exponent reaches the dimension
    /// (including every Born-Infeld chain) and rejected otherwise.
    pub fn new(
        form: GForm,
        zeta: f64,
        regime: MassRegime,
        op: &OperatorSpec,
        q_star_override: Option<f64>,
    ) -> Result<Self, NonlinearityError> {
        if !(zeta > 0.0) || !zeta.is_finite() {
            return Err(NonlinearityError::InvalidSpec(format!(
                "need zeta > 0, got {zeta}"
            )));
        }
        let crit = op
            .critical_exponents()
            .map_err(|e| NonlinearityError::InvalidSpec(e.to_string()))?;
        let q_star = match (crit.q_star, q_star_override) {
            (QStarRule::Computed(v), None) => v,
            (QStarRule::Computed(v), Some(o)) => {
                if (o - v).abs() > 1e-12 * v {
                    return Err(NonlinearityError::InvalidSpec(format!(
                        "q* is determined by the formula ({v}) below the dimension; got override {o}"
                    )));
                }
                v
            }
            (QStarRule::UserSupplied { min }, Some(o)) => {
                if !(o > min) {
                    return Err(NonlinearityError::InvalidSpec(format!(
                        "q* must exceed max(q, p*) = {min}, got {o}"
                    )));
                }
                o
            }
            (QStarRule::UserSupplied { min }, None) => {
                return Err(NonlinearityError::InvalidSpec(format!(
                    "operator exponent reaches the dimension: supply q* > {min}"
                )));
            }
        };
        if let MassRegime::PositiveMass { ell, m_ell } = regime {
            let p = op.min_exponent();
            if !(ell >= p && ell < crit.p_star) {
                return Err(NonlinearityError::InvalidSpec(format!(
                    "positive mass needs ell in [p, p*) = [{p}, {}), got {ell}",
                    crit.p_star
                )));
            }
            if !(m_ell > 0.0) {
                return Err(NonlinearityError::InvalidSpec(format!(
                    "positive mass needs m > 0, got {m_ell}"
                )));
            }
        }
        let curve = lower(&form)?;
        let big_g = curve.primitive(PRIMITIVE_REL_TOL, PRIMITIVE_MAX_DEPTH);
        let pure_power_alpha = match &form {
            GForm::PurePower { alpha } => Some(*alpha),
            _ => None,
        };
        Ok(NonlinearitySpec {
            form,
            curve,
            big_g,
            zeta,
            regime,
            p_star: crit.p_star,
            q_star,
            s0: None,
            pure_power_alpha,
            s0_scan_max: 1e3 * zeta,
        })
    }

    pub fn with_s0_scan_max(mut self, s_max: f64) -> Self {
        self.s0_scan_max = s_max;
        self
    }

    /// `g(s)` (truncated once [`NonlinearitySpec::truncate`] has run).
    pub fn g(&self, s: f64) -> f64 {
        self.curve.eval(s)
    }

    /// `G(s) = ∫_0^s g`.
    pub fn big_g(&self, s: f64) -> f64 {
        self.big_g.eval(s)
    }

    /// Stable identifier for artifact metadata.
    pub fn descriptor(&self) -> String {
        format!(
            "{}|zeta={}|{:?}|p_star={}|q_star={}|s0={:?}",
            descriptor_of(&self.form),
            self.zeta,
            self.regime,
            self.p_star,
            self.q_star,
            self.s0
        )
    }

    /// Locate `s₀ = min{s ≥ ζ : g(s) = 0}` by a geometric sign-change scan
    /// refined by bisection (relative tolerance 1e-12), and zero out `g`
    /// beyond it. No zero up to the scan bound means `s₀ = +∞`.
    pub fn truncate(mut self) -> Self {
        let s0 = self.locate_s0();
        if s0.is_finite() {
            self.curve = self.curve.truncated(s0);
            self.big_g = self.curve.primitive(PRIMITIVE_REL_TOL, PRIMITIVE_MAX_DEPTH);
        }
        self.s0 = Some(s0);
        self
    }

    fn locate_s0(&self) -> f64 {
        let g = |s: f64| self.curve.eval(s);
        let gz = g(self.zeta);
        if gz == 0.0 {
            return self.zeta;
        }
        let n = 512;
        let ratio = (self.s0_scan_max / self.zeta).powf(1.0 / n as f64);
        let mut prev = self.zeta;
        let mut fprev = gz;
        let mut x = self.zeta;
        for _ in 0..n {
            x *= ratio;
            let fx = g(x);
            if fx == 0.0 {
                return x;
            }
            if fx.signum() != fprev.signum() {
                let root = bisect_root(g, prev, x);
                return root;
            }
            prev = x;
            fprev = fx;
        }
        f64::INFINITY
    }

    /// Split `g = g₁ - g₂` with both parts nonnegative: `g₁ = g₊` in the
    /// zero-mass regime, `g₁ = (g + m_ℓ s^{ℓ-1})₊` in the positive-mass one.
    pub fn decompose(&self) -> Result<Decomposition, NonlinearityError> {
        if self.s0.is_none() {
            return Err(NonlinearityError::InvalidSpec(
                "decompose requires a truncated spec".into(),
            ));
        }
        let g1 = match self.regime {
            MassRegime::ZeroMass => self.curve.positive_part(),
            MassRegime::PositiveMass { ell, m_ell } => {
                self.curve.plus_power_positive_part(m_ell, ell - 1.0)
            }
        };
        let g2 = g1.minus(&self.curve);
        let big_g1 = g1.primitive(PRIMITIVE_REL_TOL, PRIMITIVE_MAX_DEPTH);
        let big_g2 = g2.primitive(PRIMITIVE_REL_TOL, PRIMITIVE_MAX_DEPTH);
        Ok(Decomposition {
            g1,
            g2,
            big_g1,
            big_g2,
        })
    }

    /// Primitive evaluators `(G, G₁, G₂)`, validated over `[0, domain]`.
    pub fn primitives(&self, domain: f64) -> Result<Primitives, NonlinearityError> {
        let d = self.decompose()?;
        self.big_g.ensure_domain(domain)?;
        d.big_g1.ensure_domain(domain)?;
        d.big_g2.ensure_domain(domain)?;
        Ok(Primitives {
            big_g: self.big_g.clone(),
            big_g1: d.big_g1,
            big_g2: d.big_g2,
        })
    }

    /// Smallest `s` with `G(s) > 0`, if any, located on a fine grid over
    /// `(0, ζ]`; `G(ζ) > 0` guarantees one exists for admissible specs.
    /// Shots started in the `G ≤ 0` well cannot decay, so scans clamp here.
    pub fn positive_potential_floor(&self) -> Option<f64> {
        if self.big_g(self.zeta) <= 0.0 {
            return None;
        }
        let n = 2048;
        let mut lo = 0.0;
        let mut hi = self.zeta;
        // First grid point with G > 0, then bisect the boundary.
        let mut found = false;
        for i in 1..=n {
            let s = self.zeta * i as f64 / n as f64;
            if self.big_g(s) > 0.0 {
                hi = s;
                lo = self.zeta * (i - 1) as f64 / n as f64;
                found = true;
                break;
            }
        }
        if !found {
            return Some(self.zeta);
        }
        if lo == 0.0 {
            return Some(hi);
        }
        Some(bisect_root(|s| self.big_g(s), lo, hi))
    }

    /// Sampled evidence for the standing hypotheses; see
    /// [`NonlinearitySpec::validate_assumptions_with`].
    pub fn validate_assumptions(
        &self,
        op: &OperatorSpec,
    ) -> Result<AssumptionReport, NonlinearityError> {
        self.validate_assumptions_with(op, &ValidationGrids::default())
    }

    /// Check the growth and sign hypotheses on sampling grids. Verdicts are
    /// evidence only: finite sampling cannot prove a limsup.
    pub fn validate_assumptions_with(
        &self,
        op: &OperatorSpec,
        grids: &ValidationGrids,
    ) -> Result<AssumptionReport, NonlinearityError> {
        let mut entries = Vec::new();
        let p = op.min_exponent();

        // Continuity / finiteness on both grids.
        let mut all_finite = true;
        let mut bad_s = 0.0;
        for &s in grids
            .zero_grid()
            .iter()
            .chain(grids.infinity_grid().iter())
        {
            let v = self.g(s);
            if !v.is_finite() {
                all_finite = false;
                bad_s = s;
                break;
            }
        }
        if !all_finite {
            return Err(NonlinearityError::Evaluation { s: bad_s });
        }
        entries.push(HypothesisCheck {
            id: "continuity".into(),
            verdict: Verdict::Holds,
            detail: "finite at all sampled points; continuity checked by sampling only".into(),
        });
        entries.push(HypothesisCheck {
            id: "vanishes_nonpositive".into(),
            verdict: Verdict::Holds,
            detail: "g(s) = 0 for s <= 0 is enforced by the evaluator".into(),
        });

        // Behavior near zero.
        match self.regime {
            MassRegime::ZeroMass => {
                // Endpoint exponents p and p* only; intermediate exponents
                // follow by interpolation of the two ratios.
                let mut worst: f64 = f64::NEG_INFINITY;
                let mut details = Vec::new();
                for &e in &[p, self.p_star] {
                    let s = grids.s_zero.0;
                    let ratio = self.g(s) / s.powf(e - 1.0);
                    worst = worst.max(ratio);
                    details.push(format!("g(s)/s^{{{:.4}-1}} = {ratio:.3e} at s = {s:.1e}", e));
                }
                entries.push(HypothesisCheck {
                    id: "growth_at_zero".into(),
                    verdict: if worst <= grids.ratio_tol {
                        Verdict::Holds
                    } else {
                        Verdict::Violated
                    },
                    detail: format!(
                        "{} (endpoints p, p* sampled; intermediate exponents interpolate)",
                        details.join("; ")
                    ),
                });
            }
            MassRegime::PositiveMass { ell, m_ell } => {
                let s = grids.s_zero.0;
                let ratio = self.g(s) / s.powf(ell - 1.0);
                let ok = ratio.is_finite() && (ratio + m_ell).abs() <= grids.mass_rel_tol * m_ell;
                entries.push(HypothesisCheck {
                    id: "mass_at_zero".into(),
                    verdict: if ok { Verdict::Holds } else { Verdict::Violated },
                    detail: format!(
                        "g(s)/s^{{ell-1}} = {ratio:.6e} at s = {s:.1e}, expected -> -{m_ell}"
                    ),
                });
            }
        }

        // Subcritical growth at infinity against q*.
        {
            let s = grids.s_inf.1;
            let ratio = self.g(s) / s.powf(self.q_star - 1.0);
            entries.push(HypothesisCheck {
                id: "growth_at_infinity".into(),
                verdict: if ratio <= grids.ratio_tol {
                    Verdict::Holds
                } else {
                    Verdict::Violated
                },
                detail: format!(
                    "g(s)/s^{{q*-1}} = {ratio:.3e} at s = {s:.1e} with q* = {}",
                    self.q_star
                ),
            });
        }

        // Potential positive somewhere: G(zeta) > 0 by quadrature.
        {
            let gz = self.big_g(self.zeta);
            entries.push(HypothesisCheck {
                id: "potential_positive".into(),
                verdict: if gz > 0.0 {
                    Verdict::Holds
                } else {
                    Verdict::Violated
                },
                detail: format!("G(zeta) = {gz:.6e} at zeta = {}", self.zeta),
            });
        }

        // Operator-side conditions.
        match op {
            OperatorSpec::Pq { p, q, beta, n_dim } => {
                let ok = *p < *q && *p < *n_dim as f64 && *beta >= 0.0;
                entries.push(HypothesisCheck {
                    id: "operator_consistency".into(),
                    verdict: if ok { Verdict::Holds } else { Verdict::Violated },
                    detail: format!("p = {p}, q = {q}, beta = {beta}, N = {n_dim}"),
                });
            }
            OperatorSpec::BiChain { k, n_dim, .. } => {
                let n = *n_dim as f64;
                let strict = *k as f64 >= (n / 2.0).max(n / (n - 2.0));
                entries.push(HypothesisCheck {
                    id: "chain_order".into(),
                    verdict: if strict { Verdict::Holds } else { Verdict::Violated },
                    detail: format!(
                        "k = {k}, N = {n_dim}: classical sufficient condition k >= max(N/2, N/(N-2)); \
                         the solver requires only 2k >= N and proceeds regardless"
                    ),
                });
                entries.push(HypothesisCheck {
                    id: "upper_exponent_vs_chain".into(),
                    verdict: if self.q_star > 2.0 * *k as f64 {
                        Verdict::Holds
                    } else {
                        Verdict::Violated
                    },
                    detail: format!("need an upper exponent above 2k = {}, q* = {}", 2 * k, self.q_star),
                });
            }
        }

        Ok(AssumptionReport {
            entries,
            sampled_evidence: true,
        })
    }
}

/// `(G, G₁, G₂)` primitive evaluators.
#[derive(Debug, Clone)]
pub struct Primitives {
    pub big_g: Primitive,
    pub big_g1: Primitive,
    pub big_g2: Primitive,
}

/// The nonnegative split `g = g₁ - g₂` with exact or quadrature primitives.
#[derive(Debug, Clone)]
pub struct Decomposition {
    g1: Curve,
    g2: Curve,
    big_g1: Primitive,
    big_g2: Primitive,
}

impl Decomposition {
    pub fn g1(&self, s: f64) -> f64 {
        self.g1.eval(s)
    }

    pub fn g2(&self, s: f64) -> f64 {
        self.g2.eval(s)
    }

    pub fn big_g1(&self, s: f64) -> f64 {
        self.big_g1.eval(s)
    }

    pub fn big_g2(&self, s: f64) -> f64 {
        self.big_g2.eval(s)
    }
}

/// Sampling grids and thresholds for hypothesis checks.
#[derive(Debug, Clone)]
pub struct ValidationGrids {
    /// Geometric grid near zero: (lo, hi, count).
    pub s_zero: (f64, f64, usize),
    /// Geometric grid near infinity.
    pub s_inf: (f64, f64, usize),
    /// Acceptance threshold for ratios whose limsup must be <= 0.
    pub ratio_tol: f64,
    /// Relative tolerance on the mass limit.
    pub mass_rel_tol: f64,
}

impl Default for ValidationGrids {
    fn default() -> Self {
        ValidationGrids {
            s_zero: (1e-8, 1e-2, 25),
            s_inf: (1e2, 1e8, 25),
            ratio_tol: 1e-3,
            mass_rel_tol: 0.05,
        }
    }
}

impl ValidationGrids {
    fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        let ratio = (hi / lo).powf(1.0 / (n - 1) as f64);
        let mut v = Vec::with_capacity(n);
        let mut x = lo;
        for _ in 0..n {
            v.push(x);
            x *= ratio;
        }
        v
    }

    fn zero_grid(&self) -> Vec<f64> {
        Self::geometric(self.s_zero.0, self.s_zero.1, self.s_zero.2)
    }

    fn infinity_grid(&self) -> Vec<f64> {
        Self::geometric(self.s_inf.0, self.s_inf.1, self.s_inf.2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Holds,
    Violated,
    NotApplicable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub id: String,
    pub verdict: Verdict,
    pub detail: String,
}

/// Per-hypothesis verdicts from finite sampling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub entries: Vec<HypothesisCheck>,
    /// Always true: these are sampled checks, not proofs.
    pub sampled_evidence: bool,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.entries.iter().all(|e| e.verdict != Verdict::Violated)
    }

    pub fn get(&self, id: &str) -> Option<&HypothesisCheck> {
        self.entries.iter().find(|e| e.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op_pq241() -> OperatorSpec {
        OperatorSpec::pq(2.0, 4.0, 1.0, 3).unwrap()
    }

    fn op_classic() -> OperatorSpec {
        OperatorSpec::scalar_field(2.0, 3).unwrap()
    }

    fn pure_power7() -> NonlinearitySpec {
        NonlinearitySpec::new(
            GForm::PurePower { alpha: 7.0 },
            1.0,
            MassRegime::ZeroMass,
            &op_pq241(),
            Some(8.0),
        )
        .unwrap()
    }

    fn cubic_classic() -> NonlinearitySpec {
        NonlinearitySpec::new(
            GForm::CubicMinusLinear,
            2.0,
            MassRegime::PositiveMass {
                ell: 2.0,
                m_ell: 1.0,
            },
            &op_classic(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn validate_pure_power_all_pass() {
        let spec = pure_power7();
        let rep = spec.validate_assumptions(&op_pq241()).unwrap();
        assert!(rep.sampled_evidence);
        assert!(rep.all_hold(), "{rep:#?}");
    }

    #[test]
    fn validate_positive_mass_limit() {
        let spec = cubic_classic();
        let rep = spec.validate_assumptions(&op_classic()).unwrap();
        let m = rep.get("mass_at_zero").unwrap();
        assert_eq!(m.verdict, Verdict::Holds, "{m:?}");
    }

    #[test]
    fn validate_linear_fails_supercriticality() {
        // g(s) = s in the zero-mass regime: g(s)/s^{p*-1} = s^{-4} blows up.
        let spec = NonlinearitySpec::new(
            GForm::Polynomial {
                coeffs: vec![0.0, 1.0],
            },
            1.0,
            MassRegime::ZeroMass,
            &op_classic(),
            None,
        )
        .unwrap();
        let rep = spec.validate_assumptions(&op_classic()).unwrap();
        assert_eq!(rep.get("growth_at_zero").unwrap().verdict, Verdict::Violated);
    }

    #[test]
    fn validate_nan_is_evaluation_error() {
        let spec = NonlinearitySpec::new(
            GForm::Custom(Arc::new(|s| if s > 1.0 { f64::NAN } else { s * s })),
            0.5,
            MassRegime::ZeroMass,
            &op_pq241(),
            Some(8.0),
        )
        .unwrap();
        match spec.validate_assumptions(&op_pq241()) {
            Err(NonlinearityError::Evaluation { s }) => assert!(s > 1.0),
            other => panic!("expected evaluation error, got {other:?}"),
        }
    }

    #[test]
    fn truncate_pure_power_never_vanishes() {
        let spec = pure_power7().truncate();
        assert_eq!(spec.s0, Some(f64::INFINITY));
        assert!(spec.g(10.0) > 0.0);
    }

    #[test]
    fn truncate_cubic_zeros_below_zeta() {
        // Zeros of -s + s³ sit at s = 1, below zeta = 2: s₀ = +∞.
        let spec = cubic_classic().truncate();
        assert_eq!(spec.s0, Some(f64::INFINITY));
    }

    #[test]
    fn truncate_finds_root_above_zeta() {
        // g(s) = s³(2 - s) = 2s³ - s⁴ with zeta = 1 has s₀ = 2.
        let spec = NonlinearitySpec::new(
            GForm::Polynomial {
                coeffs: vec![0.0, 0.0, 0.0, 2.0, -1.0],
            },
            1.0,
            MassRegime::ZeroMass,
            &op_classic(),
            None,
        )
        .unwrap()
        .truncate();
        let s0 = spec.s0.unwrap();
        assert!((s0 - 2.0).abs() < 1e-10, "s0 = {s0}");
        assert_eq!(spec.g(2.5), 0.0);
        assert!((spec.g(1.5) - (2.0 * 1.5f64.powi(3) - 1.5f64.powi(4))).abs() < 1e-12);
        // Truncation never destroys G(zeta) > 0 since s0 >= zeta.
        assert!(spec.big_g(spec.zeta) > 0.0);
    }

    #[test]
    fn decompose_zero_mass_nonnegative_power() {
        let spec = pure_power7().truncate();
        let d = spec.decompose().unwrap();
        for s in [0.1, 0.7, 2.0, 9.0] {
            assert!((d.g1(s) - s.powi(6)).abs() <= 1e-12 * s.powi(6));
            assert_eq!(d.g2(s), 0.0);
        }
    }

    #[test]
    fn decompose_zero_mass_nonpositive_power() {
        // g(s) = -s⁵: g₁ = 0, g₂ = s⁵.
        let spec = NonlinearitySpec::new(
            GForm::Polynomial {
                coeffs: vec![0.0, 0.0, 0.0, 0.0, 0.0, -1.0],
            },
            1.0,
            MassRegime::ZeroMass,
            &op_classic(),
            None,
        )
        .unwrap()
        .truncate();
        let d = spec.decompose().unwrap();
        for s in [0.3, 1.0, 4.0] {
            assert_eq!(d.g1(s), 0.0);
            assert!((d.g2(s) - s.powi(5)).abs() <= 1e-12 * s.powi(5));
        }
    }

    #[test]
    fn decompose_positive_mass_cubic() {
        // (g + m s)_+ = s³ pointwise for g = -s + s³, m = 1, ell = 2.
        let spec = cubic_classic().truncate();
        let d = spec.decompose().unwrap();
        for s in [0.2, 0.9, 1.7, 3.0] {
            assert!(
                (d.g1(s) - s.powi(3)).abs() <= 1e-12 * s.powi(3).max(1.0),
                "g1({s}) = {}",
                d.g1(s)
            );
            assert!((d.g2(s) - s).abs() <= 1e-12 * s);
        }
    }

    #[test]
    fn decomposition_consistency_and_lower_bounds() {
        // Consistency g₁ - g₂ = g on a dense sample, plus the positive-mass
        // lower bounds g₂ >= m s^{ℓ-1}, G₂ >= (m/ℓ)s^ℓ.
        let spec = cubic_classic().truncate();
        let d = spec.decompose().unwrap();
        let s_hi: f64 = 1e3;
        for i in 0..10_000 {
            let s = s_hi * (i as f64 + 0.5) / 10_000.0;
            let g = spec.g(s);
            assert!(
                (d.g1(s) - d.g2(s) - g).abs() <= 1e-9 * (1.0 + g.abs()),
                "consistency at s = {s}"
            );
            assert!(d.g1(s) >= 0.0 && d.g2(s) >= 0.0);
            assert!(d.g2(s) >= s - 1e-12 * (1.0 + s));
            assert!(d.big_g2(s) >= 0.5 * s * s - 1e-9 * (1.0 + s * s));
            assert!(d.big_g2(s) >= -1e-15);
        }
    }

    #[test]
    fn zero_mass_g1_growth_bound_with_calibrated_constant() {
        let spec = pure_power7().truncate();
        let d = spec.decompose().unwrap();
        let (ps, qs) = (spec.p_star, spec.q_star);
        // Calibrate C on one grid, verify on another.
        let mut c: f64 = 0.0;
        for i in 1..400 {
            let s = 10.0 * i as f64 / 400.0;
            c = c.max(d.big_g1(s) / (s.powf(ps) + s.powf(qs)));
        }
        c *= 1.01;
        for i in 1..1000 {
            let s = 10.0 * (i as f64 + 0.37) / 1000.0;
            let v = d.big_g1(s);
            assert!(v >= 0.0);
            assert!(v <= c * (s.powf(ps) + s.powf(qs)) + 1e-12);
        }
    }

    #[test]
    fn primitives_closed_forms() {
        // G(s) = s⁷/7 for the pure power.
        let spec = pure_power7().truncate();
        let prim = spec.primitives(20.0).unwrap();
        for s in [0.5, 1.0, 3.0] {
            assert!((prim.big_g.eval(s) - s.powi(7) / 7.0).abs() <= 1e-13 * s.powi(7).max(1.0));
        }
        assert_eq!(prim.big_g.eval(0.0), 0.0);
        // G(2) = -2 + 4 = 2 for the cubic, so zeta = 2 is admissible.
        let spec = cubic_classic();
        assert!((spec.big_g(2.0) - 2.0).abs() < 1e-12);
        assert_eq!(spec.big_g(0.0), 0.0);
    }

    #[test]
    fn custom_primitive_matches_exact() {
        let spec = NonlinearitySpec::new(
            GForm::Custom(Arc::new(|s: f64| s.powi(6))),
            1.0,
            MassRegime::ZeroMass,
            &op_pq241(),
            Some(8.0),
        )
        .unwrap()
        .truncate();
        let prim = spec.primitives(16.0).unwrap();
        for s in [0.3_f64, 1.0, 2.5, 7.0, 15.0] {
            let exact = s.powi(7) / 7.0;
            assert!(
                (prim.big_g.eval(s) - exact).abs() <= 1e-10 * exact.max(1.0),
                "G({s}) = {} vs {exact}",
                prim.big_g.eval(s)
            );
        }
    }

    #[test]
    fn quadrature_nonconvergence_reports_interval() {
        // A strong integrable singularity at s = 1 exhausts the subdivision
        // depth at the requested relative tolerance.
        let spec = NonlinearitySpec::new(
            GForm::Custom(Arc::new(|s: f64| (s - 1.0).abs().powf(-0.95).min(1e300))),
            0.5,
            MassRegime::ZeroMass,
            &op_pq241(),
            Some(8.0),
        )
        .unwrap()
        .truncate();
        match spec.primitives(4.0) {
            Err(NonlinearityError::QuadratureNonConvergence { lo, hi }) => {
                assert!(lo < 1.0 + 1e-6 && hi > 1.0 - 1e-6, "[{lo}, {hi}]");
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn truncation_zeroes_tail_everywhere() {
        let spec = NonlinearitySpec::new(
            GForm::TwoPower {
                l1: 4.0,
                l2: 6.0,
                k: 2.0,
            },
            0.5,
            MassRegime::ZeroMass,
            &op_pq241(),
            Some(8.0),
        )
        .unwrap()
        .truncate();
        // 2 s³ - s⁵ = 0 at s = √2.
        let s0 = spec.s0.unwrap();
        assert!((s0 - 2.0_f64.sqrt()).abs() < 1e-10);
        for i in 0..200 {
            let s = s0 + 0.01 + i as f64 * 0.5;
            assert_eq!(spec.g(s), 0.0);
        }
    }

    #[test]
    fn min_power_branches() {
        let spec = NonlinearitySpec::new(
            GForm::MinPower {
                l: 6.5,
                q_star: 8.0,
            },
            1.0,
            MassRegime::ZeroMass,
            &op_pq241(),
            Some(8.0),
        )
        .unwrap();
        assert!((spec.g(0.5) - 0.5f64.powf(7.0)).abs() < 1e-15);
        assert!((spec.g(2.0) - 2.0f64.powf(5.5)).abs() < 1e-12);
        for s in [0.2_f64, 0.9, 1.1, 3.0] {
            let expect = s.powf(7.0).min(s.powf(5.5));
            assert!((spec.g(s) - expect).abs() <= 1e-12 * expect);
        }
    }

    #[test]
    fn qstar_rules_enforced() {
        // q >= N requires an override above max(q, p*).
        assert!(NonlinearitySpec::new(
            GForm::PurePower { alpha: 7.0 },
            1.0,
            MassRegime::ZeroMass,
            &op_pq241(),
            None,
        )
        .is_err());
        assert!(NonlinearitySpec::new(
            GForm::PurePower { alpha: 7.0 },
            1.0,
            MassRegime::ZeroMass,
            &op_pq241(),
            Some(5.0),
        )
        .is_err());
        // q < N computes q* and rejects a conflicting override.
        let op = OperatorSpec::pq(2.0, 3.0, 1.0, 5).unwrap();
        assert!(NonlinearitySpec::new(
            GForm::PurePower { alpha: 4.0 },
            1.0,
            MassRegime::ZeroMass,
            &op,
            Some(9.0),
        )
        .is_err());
        let s = NonlinearitySpec::new(
            GForm::PurePower { alpha: 4.0 },
            1.0,
            MassRegime::ZeroMass,
            &op,
            None,
        )
        .unwrap();
        assert!((s.q_star - 7.5).abs() < 1e-12);
    }

    #[test]
    fn positive_potential_floor_cubic() {
        // G = -s²/2 + s⁴/4 > 0 exactly above √2.
        let spec = cubic_classic().truncate();
        let floor = spec.positive_potential_floor().unwrap();
        assert!((floor - 2.0_f64.sqrt()).abs() < 1e-3, "floor = {floor}");
    }
}
