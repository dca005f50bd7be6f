//! TOML problem descriptions: operator block, nonlinearity block, grids,
//! solver and certificate tolerances, and optional sweep ranges.
//!
//! ```toml
//! [operator]
//! kind = "bi"        # "pq" | "bi"
//! k = 2
//! beta = 1.0
//! n = 3
//! qstar = 8.0
//!
//! [nonlinearity]
//! kind = "pure_power"
//! alpha = 7.0
//! zeta = 1.0
//!
//! [grid]
//! r_max = 800.0
//! resolution = 4096
//! ```
//!
//! Every tolerance and grid knob is surfaced with its library default.

use crate::certificates::Tolerances;
use crate::nonlinearity::{GForm, MassRegime, NonlinearityError, NonlinearitySpec};
use crate::operator::{OperatorError, OperatorSpec};
use crate::shooting::ShootingConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    /// TOML syntax or schema problem; the message carries line/column.
    Parse(String),
    /// Structurally valid TOML with inadmissible values.
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "config io error: {e}"),
            ConfigError::Parse(m) => write!(f, "config parse error: {m}"),
            ConfigError::Invalid(m) => write!(f, "invalid config: {m}"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl From<OperatorError> for ConfigError {
    fn from(e: OperatorError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

impl From<NonlinearityError> for ConfigError {
    fn from(e: NonlinearityError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub operator: OperatorConfig,
    pub nonlinearity: NonlinearityConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub shooting: ShootingSection,
    #[serde(default)]
    pub certificates: CertificateSection,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub kind: String,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub k: Option<u32>,
    #[serde(default = "one")]
    pub beta: f64,
    pub n: u32,
    pub qstar: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityConfig {
    pub kind: String,
    pub alpha: Option<f64>,
    #[serde(default = "one")]
    pub zeta: f64,
    #[serde(default = "zero_mass")]
    pub mass: String,
    pub ell: Option<f64>,
    pub m_ell: Option<f64>,
    pub l: Option<f64>,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    #[serde(rename = "K")]
    pub big_k: Option<f64>,
    pub coeffs: Option<Vec<f64>>,
    pub qstar: Option<f64>,
}

fn zero_mass() -> String {
    "zero".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub r_max: f64,
    pub resolution: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            r_max: 50.0,
            resolution: 4096,
        }
    }
}

/// Optional overrides of [`ShootingConfig`] fields.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShootingSection {
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub decay_u_rel: Option<f64>,
    pub decay_du_rel: Option<f64>,
    pub decay_exponent_floor: Option<f64>,
    pub bisect_tol: Option<f64>,
    pub horizon_stability_tol: Option<f64>,
    pub scan_lo: Option<f64>,
    pub scan_hi: Option<f64>,
    pub scan_count: Option<usize>,
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSection {
    pub pohozaev: Option<f64>,
    pub nehari: Option<f64>,
    pub action_relation: Option<f64>,
    pub decay_stability: Option<f64>,
    pub positivity_tail_rel: Option<f64>,
    pub max_tail_defect: Option<f64>,
}

/// Cartesian sweep ranges; absent dimensions default to the base value.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub alpha: Option<Vec<f64>>,
    pub k: Option<Vec<u32>>,
    pub beta: Option<Vec<f64>>,
    pub n: Option<Vec<u32>>,
    pub resolution: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    pub format: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: "out".to_string(),
            format: "csv".to_string(),
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Config, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
        Self::from_toml_str(&text)
    }

    pub fn operator(&self) -> Result<OperatorSpec, ConfigError> {
        let o = &self.operator;
        match o.kind.as_str() {
            "pq" => {
                let p = o
                    .p
                    .ok_or_else(|| ConfigError::Invalid("operator.p required for kind pq".into()))?;
                if o.beta == 0.0 {
                    Ok(OperatorSpec::scalar_field(p, o.n)?)
                } else {
                    let q = o.q.ok_or_else(|| {
                        ConfigError::Invalid("operator.q required for kind pq".into())
                    })?;
                    Ok(OperatorSpec::pq(p, q, o.beta, o.n)?)
                }
            }
            "bi" => {
                let k = o
                    .k
                    .ok_or_else(|| ConfigError::Invalid("operator.k required for kind bi".into()))?;
                Ok(OperatorSpec::bi_chain(k, o.beta, o.n)?)
            }
            other => Err(ConfigError::Invalid(format!(
                "operator.kind must be \"pq\" or \"bi\", got \"{other}\""
            ))),
        }
    }

    pub fn nonlinearity(&self, op: &OperatorSpec) -> Result<NonlinearitySpec, ConfigError> {
        let nl = &self.nonlinearity;
        let form = match nl.kind.as_str() {
            "pure_power" => GForm::PurePower {
                alpha: nl.alpha.ok_or_else(|| {
                    ConfigError::Invalid("nonlinearity.alpha required for pure_power".into())
                })?,
            },
            "cubic_minus_linear" => GForm::CubicMinusLinear,
            "min_power" => GForm::MinPower {
                l: nl.l.ok_or_else(|| {
                    ConfigError::Invalid("nonlinearity.l required for min_power".into())
                })?,
                q_star: nl.qstar.or(self.operator.qstar).ok_or_else(|| {
                    ConfigError::Invalid("nonlinearity.qstar required for min_power".into())
                })?,
            },
            "two_power" => GForm::TwoPower {
                l1: nl.l1.ok_or_else(|| {
                    ConfigError::Invalid("nonlinearity.l1 required for two_power".into())
                })?,
                l2: nl.l2.ok_or_else(|| {
                    ConfigError::Invalid("nonlinearity.l2 required for two_power".into())
                })?,
                k: nl.big_k.unwrap_or(1.0),
            },
            "polynomial" => GForm::Polynomial {
                coeffs: nl.coeffs.clone().ok_or_else(|| {
                    ConfigError::Invalid("nonlinearity.coeffs required for polynomial".into())
                })?,
            },
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown nonlinearity.kind \"{other}\""
                )))
            }
        };
        let regime = match nl.mass.as_str() {
            "zero" => MassRegime::ZeroMass,
            "positive" => MassRegime::PositiveMass {
                ell: nl.ell.ok_or_else(|| {
                    ConfigError::Invalid("nonlinearity.ell required for positive mass".into())
                })?,
                m_ell: nl.m_ell.ok_or_else(|| {
                    ConfigError::Invalid("nonlinearity.m_ell required for positive mass".into())
                })?,
            },
            other => {
                return Err(ConfigError::Invalid(format!(
                    "nonlinearity.mass must be \"zero\" or \"positive\", got \"{other}\""
                )))
            }
        };
        let qstar = nl.qstar.or(self.operator.qstar);
        Ok(NonlinearitySpec::new(form, nl.zeta, regime, op, qstar)?)
    }

    pub fn shooting_config(&self) -> ShootingConfig {
        let mut cfg = ShootingConfig {
            r_max: self.grid.r_max,
            resolution: self.grid.resolution,
            ..ShootingConfig::default()
        };
        let s = &self.shooting;
        if let Some(v) = s.rtol {
            cfg.rtol = v;
        }
        if let Some(v) = s.atol {
            cfg.atol = v;
        }
        if let Some(v) = s.decay_u_rel {
            cfg.decay_u_rel = v;
        }
        if let Some(v) = s.decay_du_rel {
            cfg.decay_du_rel = v;
        }
        if s.decay_exponent_floor.is_some() {
            cfg.decay_exponent_floor = s.decay_exponent_floor;
        }
        if let Some(v) = s.bisect_tol {
            cfg.bisect_tol = v;
        }
        if let Some(v) = s.horizon_stability_tol {
            cfg.horizon_stability_tol = v;
        }
        if let Some(v) = s.scan_lo {
            cfg.scan_lo = v;
        }
        if let Some(v) = s.scan_hi {
            cfg.scan_hi = v;
        }
        if let Some(v) = s.scan_count {
            cfg.scan_count = v;
        }
        if let Some(v) = s.max_steps {
            cfg.max_steps = v;
        }
        cfg
    }

    pub fn tolerances(&self) -> Tolerances {
        let mut tol = Tolerances::default();
        let c = &self.certificates;
        if let Some(v) = c.pohozaev {
            tol.pohozaev = v;
        }
        if let Some(v) = c.nehari {
            tol.nehari = v;
        }
        if let Some(v) = c.action_relation {
            tol.action_relation = v;
        }
        if let Some(v) = c.decay_stability {
            tol.decay_stability = v;
        }
        if let Some(v) = c.positivity_tail_rel {
            tol.positivity_tail_rel = v;
        }
        if let Some(v) = c.max_tail_defect {
            tol.max_tail_defect = v;
        }
        tol
    }

    /// Expand the sweep section into per-cell configs, Cartesian order
    /// (alpha outermost, resolution innermost). Empty when any range is
    /// explicitly empty.
    pub fn sweep_cells(&self) -> Result<Vec<SweepCell>, ConfigError> {
        let sweep = match &self.sweep {
            Some(s) => s.clone(),
            None => {
                return Err(ConfigError::Invalid(
                    "config has no [sweep] section".into(),
                ))
            }
        };
        let alpha_given = sweep.alpha.is_some();
        if alpha_given && self.nonlinearity.kind != "pure_power" {
            return Err(ConfigError::Invalid(
                "sweep.alpha requires a pure_power nonlinearity".into(),
            ));
        }
        let alphas = sweep
            .alpha
            .unwrap_or_else(|| vec![self.nonlinearity.alpha.unwrap_or(f64::NAN)]);
        let ks = sweep.k.unwrap_or_else(|| vec![self.operator.k.unwrap_or(0)]);
        let betas = sweep.beta.unwrap_or_else(|| vec![self.operator.beta]);
        let ns = sweep.n.unwrap_or_else(|| vec![self.operator.n]);
        let resolutions = sweep
            .resolution
            .unwrap_or_else(|| vec![self.grid.resolution]);
        let mut cells = Vec::new();
        for &alpha in &alphas {
            for &k in &ks {
                for &beta in &betas {
                    for &n in &ns {
                        for &resolution in &resolutions {
                            let mut cfg = self.clone();
                            cfg.sweep = None;
                            if alpha_given {
                                cfg.nonlinearity.alpha = Some(alpha);
                            }
                            if cfg.operator.kind == "bi" {
                                cfg.operator.k = Some(k);
                            }
                            cfg.operator.beta = beta;
                            cfg.operator.n = n;
                            cfg.grid.resolution = resolution;
                            cells.push(SweepCell {
                                alpha,
                                k,
                                beta,
                                n,
                                resolution,
                                config: cfg,
                            });
                        }
                    }
                }
            }
        }
        Ok(cells)
    }
}

/// One cell of a parameter sweep.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub alpha: f64,
    pub k: u32,
    pub beta: f64,
    pub n: u32,
    pub resolution: usize,
    pub config: Config,
}

/// Stable content hash for artifact metadata.
pub fn hash_descriptor(descriptor: &str) -> String {
    let mut h = Sha256::new();
    h.update(descriptor.as_bytes());
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of an operator spec (canonical JSON).
pub fn operator_hash(op: &OperatorSpec) -> String {
    hash_descriptor(&serde_json::to_string(op).expect("operator serializes"))
}

/// Hash of a nonlinearity spec (its descriptor string; custom closures hash
/// by their declared parameters only).
pub fn nonlinearity_hash(spec: &NonlinearitySpec) -> String {
    hash_descriptor(&spec.descriptor())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BI7: &str = r#"
[operator]
kind = "bi"
k = 2
beta = 1.0
n = 3
qstar = 8.0

[nonlinearity]
kind = "pure_power"
alpha = 7.0
zeta = 1.0

[grid]
r_max = 800.0
resolution = 4096

[shooting]
scan_lo = 0.1
scan_hi = 50.0
scan_count = 60
"#;

    #[test]
    fn parse_bi_config() {
        let cfg = Config::from_toml_str(BI7).unwrap();
        let op = cfg.operator().unwrap();
        assert_eq!(op.n_dim(), 3);
        let spec = cfg.nonlinearity(&op).unwrap();
        assert_eq!(spec.pure_power_alpha, Some(7.0));
        assert_eq!(spec.q_star, 8.0);
        let sc = cfg.shooting_config();
        assert_eq!(sc.scan_count, 60);
        assert_eq!(sc.r_max, 800.0);
        assert_eq!(sc.resolution, 4096);
    }

    #[test]
    fn parse_classic_config() {
        let text = r#"
[operator]
kind = "pq"
p = 2.0
beta = 0.0
n = 3

[nonlinearity]
kind = "cubic_minus_linear"
zeta = 2.0
mass = "positive"
ell = 2.0
m_ell = 1.0
"#;
        let cfg = Config::from_toml_str(text).unwrap();
        let op = cfg.operator().unwrap();
        assert_eq!(op.terms().len(), 1);
        let spec = cfg.nonlinearity(&op).unwrap();
        assert!(matches!(spec.regime, MassRegime::PositiveMass { .. }));
    }

    #[test]
    fn malformed_toml_reports_location() {
        let err = Config::from_toml_str("[operator\nkind = 3").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn missing_field_is_diagnosed() {
        let text = r#"
[operator]
kind = "pq"
n = 3

[nonlinearity]
kind = "pure_power"
alpha = 7.0
"#;
        let cfg = Config::from_toml_str(text).unwrap();
        let err = cfg.operator().unwrap_err();
        assert!(err.to_string().contains("operator.p"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let bad = BI7.replace("zeta = 1.0", "zeta = 1.0\nbogus_knob = 1");
        assert!(Config::from_toml_str(&bad).is_err());
    }

    #[test]
    fn sweep_cells_cartesian() {
        let text = format!("{BI7}\n[sweep]\nk = [2, 3, 4]\n");
        let cfg = Config::from_toml_str(&text).unwrap();
        let cells = cfg.sweep_cells().unwrap();
        assert_eq!(cells.len(), 3);
        assert_eq!(cells[0].k, 2);
        assert_eq!(cells[2].k, 4);
        let op = cells[2].config.operator().unwrap();
        assert!(matches!(op, OperatorSpec::BiChain { k: 4, .. }));
    }

    #[test]
    fn empty_sweep_range_is_empty() {
        let text = format!("{BI7}\n[sweep]\nk = []\n");
        let cfg = Config::from_toml_str(&text).unwrap();
        assert!(cfg.sweep_cells().unwrap().is_empty());
    }

    #[test]
    fn hashes_are_stable() {
        let cfg = Config::from_toml_str(BI7).unwrap();
        let op = cfg.operator().unwrap();
        let spec = cfg.nonlinearity(&op).unwrap().truncate();
        let h1 = operator_hash(&op);
        let h2 = operator_hash(&op);
        assert_eq!(h1, h2);
        assert_eq!(h1.len(), 64);
        assert_ne!(h1, nonlinearity_hash(&spec));
    }
}
