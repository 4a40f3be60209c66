//! Experiment configuration files (TOML).
//!
//! ```toml
//! label = "neb3"
//!
//! [model]
//! side = 100
//! b = 1.8
//! p = 0.0                          # punishment, optional
//! initial_coop_probability = 0.5   # optional
//! exact_initial_count = false      # optional
//!
//! [scheme]
//! kind = "neb"        # none | pop | neb | neb_i | neb_ii
//! n_c = 3
//! theta = 5.3
//! # pop: p_c = 0.85 (fraction of Z) or p_c_count = 8500
//! # neb_i / neb_ii: eps = 0.1
//!
//! [rule]
//! kind = "deterministic"   # or "fermi" with k = 0.3, mu = 0.0
//!
//! [protocol]
//! generations = 200
//! measure_window = 50
//! replicates = 50
//! base_seed = 1
//! early_stop = true
//! parallel_lattice = false
//!
//! [sweep]                 # only read by `sweep`
//! theta_values = [4.5, 5.5]
//! threshold_values = [0.5, 1.0]
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Everything except `model.side`, `model.b`, `scheme.kind` and the scheme's
//! own numbers has a default. Scheme numbers are only required by commands
//! that run a single scheme, so a sweep file may leave them out.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dynamics::UpdateRule;
use crate::engine::{RunConfig, DEFAULT_GENERATIONS, DEFAULT_MEASURE_WINDOW};
use crate::error::ConfigError;
use crate::game::PayoffParams;
use crate::interference::InterferenceScheme;
use crate::sweep::{SchemeKind, SweepSpec};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    label: Option<String>,
    model: Option<RawModel>,
    scheme: Option<RawScheme>,
    rule: Option<RawRule>,
    protocol: Option<RawProtocol>,
    sweep: Option<RawSweep>,
    output: Option<RawOutput>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    side: Option<usize>,
    b: Option<f64>,
    p: Option<f64>,
    initial_coop_probability: Option<f64>,
    exact_initial_count: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScheme {
    kind: Option<String>,
    theta: Option<f64>,
    p_c: Option<f64>,
    p_c_count: Option<usize>,
    n_c: Option<i64>,
    eps: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    kind: Option<String>,
    k: Option<f64>,
    mu: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProtocol {
    generations: Option<usize>,
    measure_window: Option<usize>,
    replicates: Option<usize>,
    base_seed: Option<u64>,
    early_stop: Option<bool>,
    parallel_lattice: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    theta_values: Option<Vec<f64>>,
    threshold_values: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
}

/// Scheme section as written, before the numbers are checked for completeness.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SchemeFields {
    pub kind: String,
    pub theta: Option<f64>,
    /// Always a fraction of Z; `p_c_count` is converted on load.
    pub p_c: Option<f64>,
    pub n_c: Option<u8>,
    pub eps: Option<f64>,
}

impl SchemeFields {
    pub fn scheme(&self) -> Result<InterferenceScheme, ConfigError> {
        let theta = || self.theta.ok_or_else(|| ConfigError::missing("scheme.theta"));
        let eps = || self.eps.ok_or_else(|| ConfigError::missing("scheme.eps"));
        let scheme = match self.kind.as_str() {
            "none" => InterferenceScheme::None,
            "pop" => InterferenceScheme::Pop {
                p_c: self.p_c.ok_or_else(|| ConfigError::missing("scheme.p_c"))?,
                theta: theta()?,
            },
            "neb" => InterferenceScheme::Neb {
                n_c: self.n_c.ok_or_else(|| ConfigError::missing("scheme.n_c"))?,
                theta: theta()?,
            },
            "neb_i" => InterferenceScheme::NebI { eps: eps()? },
            "neb_ii" => InterferenceScheme::NebIi { eps: eps()? },
            other => {
                return Err(ConfigError::new(
                    "scheme.kind",
                    format!("unknown kind `{other}`"),
                ))
            }
        };
        scheme.validate().map_err(|e| {
            let field = match e {
                crate::interference::SchemeError::Theta(_) => "scheme.theta",
                crate::interference::SchemeError::Eps(_) => "scheme.eps",
                crate::interference::SchemeError::PopFraction(_) => "scheme.p_c",
                crate::interference::SchemeError::NebThreshold(_) => "scheme.n_c",
            };
            ConfigError::new(field, e)
        })?;
        Ok(scheme)
    }

    pub fn sweep_kind(&self) -> Result<SchemeKind, ConfigError> {
        match self.kind.as_str() {
            "pop" => Ok(SchemeKind::Pop),
            "neb" => Ok(SchemeKind::Neb),
            "neb_i" => Ok(SchemeKind::NebI),
            "neb_ii" => Ok(SchemeKind::NebIi),
            other => Err(ConfigError::new(
                "scheme.kind",
                format!("`{other}` cannot be swept"),
            )),
        }
    }
}

/// A validated experiment file.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub label: String,
    pub side: usize,
    pub payoff: PayoffParams,
    pub initial_coop_probability: f64,
    pub exact_initial_count: bool,
    pub scheme: SchemeFields,
    pub rule: UpdateRule,
    pub generations: usize,
    pub measure_window: usize,
    pub replicates: usize,
    pub base_seed: u64,
    pub early_stop: bool,
    pub parallel_lattice: bool,
    pub theta_values: Option<Vec<f64>>,
    pub threshold_values: Option<Vec<f64>>,
    pub output_dir: PathBuf,
}

fn required<T>(v: Option<T>, field: &str) -> Result<T, ConfigError> {
    v.ok_or_else(|| ConfigError::missing(field))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            ConfigError::new("<document>", e.message().to_string())
        })?;
        let model = required(raw.model, "model")?;
        let side = required(model.side, "model.side")?;
        crate::grid::check_side(side).map_err(|e| ConfigError::new("model.side", e))?;
        let b = required(model.b, "model.b")?;
        let payoff = PayoffParams::new(b, model.p.unwrap_or(0.0)).map_err(|e| {
            let field = match e {
                crate::game::PayoffError::Temptation(_) => "model.b",
                crate::game::PayoffError::Punishment(_) => "model.p",
            };
            ConfigError::new(field, e)
        })?;
        let initial_coop_probability = model.initial_coop_probability.unwrap_or(0.5);
        if !(0.0..=1.0).contains(&initial_coop_probability) {
            return Err(ConfigError::new(
                "model.initial_coop_probability",
                "must lie in [0, 1]",
            ));
        }

        let raw_scheme = required(raw.scheme, "scheme")?;
        let kind = required(raw_scheme.kind, "scheme.kind")?;
        let z = side * side;
        let p_c = match (raw_scheme.p_c, raw_scheme.p_c_count) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::new(
                    "scheme.p_c_count",
                    "give either p_c or p_c_count, not both",
                ))
            }
            (Some(f), None) => Some(f),
            (None, Some(count)) => {
                if count > z {
                    return Err(ConfigError::new(
                        "scheme.p_c_count",
                        format!("{count} exceeds population size {z}"),
                    ));
                }
                Some(count as f64 / z as f64)
            }
            (None, None) => None,
        };
        let n_c = raw_scheme
            .n_c
            .map(|n| {
                u8::try_from(n)
                    .ok()
                    .filter(|n| *n <= 4)
                    .ok_or_else(|| ConfigError::new("scheme.n_c", format!("{n} is not in 0..=4")))
            })
            .transpose()?;
        let scheme = SchemeFields {
            kind,
            theta: raw_scheme.theta,
            p_c,
            n_c,
            eps: raw_scheme.eps,
        };
        if !["none", "pop", "neb", "neb_i", "neb_ii"].contains(&scheme.kind.as_str()) {
            return Err(ConfigError::new(
                "scheme.kind",
                format!("unknown kind `{}`", scheme.kind),
            ));
        }
        // range-check whatever numbers are present
        if let Some(t) = scheme.theta {
            if !(t.is_finite() && t > 0.0) {
                return Err(ConfigError::new("scheme.theta", format!("theta = {t} must be > 0")));
            }
        }
        if let Some(e) = scheme.eps {
            if !(e.is_finite() && e > 0.0) {
                return Err(ConfigError::new("scheme.eps", format!("eps = {e} must be > 0")));
            }
        }
        if let Some(p) = scheme.p_c {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::new("scheme.p_c", format!("p_c = {p} must lie in [0, 1]")));
            }
        }

        let raw_rule = raw.rule.unwrap_or_default();
        let rule = match raw_rule.kind.as_deref().unwrap_or("deterministic") {
            "deterministic" => {
                if raw_rule.k.is_some() || raw_rule.mu.is_some() {
                    return Err(ConfigError::new(
                        "rule.kind",
                        "k and mu only apply to the fermi rule",
                    ));
                }
                UpdateRule::Deterministic
            }
            "fermi" => {
                let k = required(raw_rule.k, "rule.k")?;
                let mu = raw_rule.mu.unwrap_or(0.0);
                UpdateRule::fermi(k, mu).map_err(|e| {
                    let field = match e {
                        crate::dynamics::DynamicsError::Mutation(_) => "rule.mu",
                        _ => "rule.k",
                    };
                    ConfigError::new(field, e)
                })?
            }
            other => {
                return Err(ConfigError::new(
                    "rule.kind",
                    format!("unknown rule `{other}`"),
                ))
            }
        };

        let protocol = raw.protocol.unwrap_or_default();
        let generations = protocol.generations.unwrap_or(DEFAULT_GENERATIONS);
        if generations == 0 {
            return Err(ConfigError::new("protocol.generations", "must be >= 1"));
        }
        let measure_window = protocol.measure_window.unwrap_or(DEFAULT_MEASURE_WINDOW);
        if measure_window == 0 {
            return Err(ConfigError::new("protocol.measure_window", "must be >= 1"));
        }
        let replicates = protocol.replicates.unwrap_or(1);
        if replicates == 0 {
            return Err(ConfigError::new("protocol.replicates", "must be >= 1"));
        }

        let sweep = raw.sweep.unwrap_or_default();
        let config = ExperimentConfig {
            label: raw.label.unwrap_or_else(|| "experiment".to_string()),
            side,
            payoff,
            initial_coop_probability,
            exact_initial_count: model.exact_initial_count.unwrap_or(false),
            scheme,
            rule,
            generations,
            measure_window,
            replicates,
            base_seed: protocol.base_seed.unwrap_or(0),
            early_stop: protocol.early_stop.unwrap_or(true),
            parallel_lattice: protocol.parallel_lattice.unwrap_or(false),
            theta_values: sweep.theta_values,
            threshold_values: sweep.threshold_values,
            output_dir: PathBuf::from(
                raw.output
                    .and_then(|o| o.dir)
                    .unwrap_or_else(|| "out".to_string()),
            ),
        };
        if config.label.is_empty()
            || !config
                .label
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return Err(ConfigError::new(
                "label",
                "use letters, digits, '-', '_' or '.' only",
            ));
        }
        Ok(config)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigFileError> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_toml(&text)?)
    }

    fn template(&self, scheme: InterferenceScheme) -> RunConfig {
        RunConfig {
            side: self.side,
            payoff: self.payoff,
            scheme,
            rule: self.rule,
            generations: self.generations,
            measure_window: self.measure_window,
            seed: self.base_seed,
            initial_coop_probability: self.initial_coop_probability,
            exact_initial_count: self.exact_initial_count,
            early_stop: self.early_stop,
            parallel_lattice: self.parallel_lattice,
        }
    }

    /// Single-scheme run configuration; fails naming the first missing
    /// scheme field.
    pub fn run_config(&self) -> Result<RunConfig, ConfigError> {
        let cfg = self.template(self.scheme.scheme()?);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec, ConfigError> {
        let kind = self.scheme.sweep_kind()?;
        let thresholds = self
            .threshold_values
            .clone()
            .ok_or_else(|| ConfigError::missing("sweep.threshold_values"))?;
        let thetas = match (kind.uses_theta(), &self.theta_values) {
            (true, None) => return Err(ConfigError::missing("sweep.theta_values")),
            (_, Some(t)) => t.clone(),
            (false, None) => Vec::new(),
        };
        let spec = SweepSpec {
            base: self.template(InterferenceScheme::None),
            scheme_kind: kind,
            theta_values: thetas,
            threshold_values: thresholds,
            replicates: self.replicates,
            base_seed: self.base_seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Effective configuration with every default written out.
    pub fn to_toml(&self) -> String {
        self.emit(true)
    }

    fn emit(&self, with_output: bool) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            label: &'a str,
            model: Model,
            scheme: Scheme<'a>,
            rule: Rule<'a>,
            protocol: Protocol,
            #[serde(skip_serializing_if = "Option::is_none")]
            sweep: Option<Sweep<'a>>,
            #[serde(skip_serializing_if = "Option::is_none")]
            output: Option<Output>,
        }
        #[derive(Serialize)]
        struct Model {
            side: usize,
            b: f64,
            p: f64,
            initial_coop_probability: f64,
            exact_initial_count: bool,
        }
        #[derive(Serialize)]
        struct Scheme<'a> {
            kind: &'a str,
            #[serde(skip_serializing_if = "Option::is_none")]
            theta: Option<f64>,
            #[serde(skip_serializing_if = "Option::is_none")]
            p_c: Option<f64>,
            #[serde(skip_serializing_if = "Option::is_none")]
            n_c: Option<u8>,
            #[serde(skip_serializing_if = "Option::is_none")]
            eps: Option<f64>,
        }
        #[derive(Serialize)]
        struct Rule<'a> {
            kind: &'a str,
            #[serde(skip_serializing_if = "Option::is_none")]
            k: Option<f64>,
            #[serde(skip_serializing_if = "Option::is_none")]
            mu: Option<f64>,
        }
        #[derive(Serialize)]
        struct Protocol {
            generations: usize,
            measure_window: usize,
            replicates: usize,
            base_seed: u64,
            early_stop: bool,
            parallel_lattice: bool,
        }
        #[derive(Serialize)]
        struct Sweep<'a> {
            #[serde(skip_serializing_if = "Option::is_none")]
            theta_values: Option<&'a [f64]>,
            #[serde(skip_serializing_if = "Option::is_none")]
            threshold_values: Option<&'a [f64]>,
        }
        #[derive(Serialize)]
        struct Output {
            dir: String,
        }

        let (rule_kind, k, mu) = match self.rule {
            UpdateRule::Deterministic => ("deterministic", None, None),
            UpdateRule::Fermi { k, mu } => ("fermi", Some(k), Some(mu)),
        };
        let sweep = (self.theta_values.is_some() || self.threshold_values.is_some()).then_some(Sweep {
            theta_values: self.theta_values.as_deref(),
            threshold_values: self.threshold_values.as_deref(),
        });
        let doc = Doc {
            label: &self.label,
            model: Model {
                side: self.side,
                b: self.payoff.temptation(),
                p: self.payoff.punishment(),
                initial_coop_probability: self.initial_coop_probability,
                exact_initial_count: self.exact_initial_count,
            },
            scheme: Scheme {
                kind: &self.scheme.kind,
                theta: self.scheme.theta,
                p_c: self.scheme.p_c,
                n_c: self.scheme.n_c,
                eps: self.scheme.eps,
            },
            rule: Rule { kind: rule_kind, k, mu },
            protocol: Protocol {
                generations: self.generations,
                measure_window: self.measure_window,
                replicates: self.replicates,
                base_seed: self.base_seed,
                early_stop: self.early_stop,
                parallel_lattice: self.parallel_lattice,
            },
            sweep,
            output: with_output.then(|| Output {
                dir: self.output_dir.to_string_lossy().into_owned(),
            }),
        };
        toml::to_string(&doc).expect("plain data serialises")
    }

    /// 16 hex digits of FNV-1a over the effective config without the output
    /// section, so the same experiment maps to the same run directory
    /// wherever it is written.
    pub fn digest(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in self.emit(false).bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }

    /// `<output_dir>/<label>-<digest>`.
    pub fn run_dir(&self) -> PathBuf {
        self.output_dir
            .join(format!("{}-{}", self.label, self.digest()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigFileError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid config: {0}")]
    Invalid(#[from] ConfigError),
}
