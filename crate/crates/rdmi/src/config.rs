//! TOML run configuration: a preset plus explicit overrides.
//!
//! ```toml
//! preset = "setting2"
//! seed = 7
//! output_dir = "out"
//!
//! [params]
//! theta_experimental = -2.0
//! withdrawal_hazard = 0.005
//!
//! [imputation]
//! m = 50
//! mar_conditioning = "baseline-only"
//!
//! [plan]
//! replicates = 1000
//! methods = ["B", "C"]
//! truth_datasets = 20000
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use rdmi_core::datagen::{BaselineDistribution, ConfigError, GenParams, Preset};
use rdmi_core::harness::SimPlan;
use rdmi_core::imputation::{ImputationConfig, MarConditioning, Method};
use rdmi_core::model::VisitGrid;
use rdmi_core::survival::SurvivalKind;
use serde::Deserialize;

/// Overrides for individual generative-model constants.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    pub n_per_arm: Option<usize>,
    pub grid: Option<VisitGrid>,
    pub theta_control: Option<f64>,
    pub theta_experimental: Option<f64>,
    pub beta0: Option<f64>,
    pub beta1: Option<f64>,
    pub baseline: Option<BaselineDistribution>,
    pub baseline_mean: Option<f64>,
    pub kappa: Option<f64>,
    pub sigma_s2: Option<f64>,
    pub sigma_e2: Option<f64>,
    pub alpha0: Option<f64>,
    pub alpha1: Option<f64>,
    pub dropout_offsets_control: Option<Vec<f64>>,
    pub dropout_offsets_experimental: Option<Vec<f64>>,
    pub withdrawal_hazard: Option<f64>,
    pub washout_weeks: Option<f64>,
    pub p_miss_completer: Option<f64>,
    pub p_miss_retained_dropout: Option<f64>,
    pub plausible_outcome_bound: Option<f64>,
}

macro_rules! overlay {
    ($src:expr, $dst:expr, $($field:ident),+ $(,)?) => {
        $(if let Some(v) = $src.$field.clone() { $dst.$field = v; })+
    };
}

impl ParamOverrides {
    pub fn apply(&self, params: &mut GenParams) {
        overlay!(
            self,
            params,
            n_per_arm,
            grid,
            theta_control,
            theta_experimental,
            beta0,
            beta1,
            baseline,
            baseline_mean,
            kappa,
            sigma_s2,
            sigma_e2,
            alpha0,
            alpha1,
            dropout_offsets_control,
            dropout_offsets_experimental,
            withdrawal_hazard,
            washout_weeks,
            p_miss_completer,
            p_miss_retained_dropout,
            plausible_outcome_bound,
        );
        // a new baseline distribution moves its mean unless pinned explicitly
        if self.baseline.is_some() && self.baseline_mean.is_none() {
            params.baseline_mean = params.baseline.mean();
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImputationSection {
    pub m: Option<usize>,
    pub survival_kind: Option<SurvivalKind>,
    pub min_donor_pool: Option<usize>,
    pub mar_conditioning: Option<MarConditioning>,
    pub forced_gate_probability: Option<f64>,
    pub level: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub replicates: Option<usize>,
    pub methods: Option<Vec<Method>>,
    pub truth_datasets: Option<usize>,
    pub truth_seed: Option<u64>,
    pub workers: Option<usize>,
}

/// A parsed configuration document.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<Preset>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub params: ParamOverrides,
    #[serde(default)]
    pub imputation: ImputationSection,
    #[serde(default)]
    pub plan: PlanSection,
}

/// A configuration problem, located in the source document when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigDiagnostic {
    pub file: Option<PathBuf>,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.file {
            Some(p) => write!(f, "{}", p.display())?,
            None => f.write_str("<config>")?,
        }
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
            if let Some(col) = self.column {
                write!(f, ":{col}")?;
            }
        }
        f.write_str(": ")?;
        if let Some(key) = &self.key {
            write!(f, "`{key}`: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigDiagnostic {}

fn line_col(source: &str, offset: usize) -> (usize, usize) {
    let before = &source[..offset.min(source.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
    (line, col)
}

/// Line of `key = ...` inside `[section]` (or at top level when `section` is empty).
fn find_key_line(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        if current == section {
            if let Some(rest) = line.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

/// Document text kept for locating keys in validation errors.
#[derive(Debug, Clone, Default)]
pub struct ConfigSource {
    pub path: Option<PathBuf>,
    pub text: String,
}

impl ConfigSource {
    fn diagnostic(&self, section: &str, key: &str, message: String) -> ConfigDiagnostic {
        let qualified = if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        ConfigDiagnostic {
            file: self.path.clone(),
            line: find_key_line(&self.text, section, key),
            column: None,
            key: Some(qualified),
            message,
        }
    }
}

pub fn parse_config(text: &str, path: Option<&Path>) -> Result<(RunConfig, ConfigSource), ConfigDiagnostic> {
    let source = ConfigSource {
        path: path.map(Path::to_path_buf),
        text: text.to_string(),
    };
    match toml::from_str::<RunConfig>(text) {
        Ok(cfg) => Ok((cfg, source)),
        Err(e) => {
            let (line, column) = match e.span() {
                Some(span) => {
                    let (l, c) = line_col(text, span.start);
                    (Some(l), Some(c))
                }
                None => (None, None),
            };
            Err(ConfigDiagnostic {
                file: source.path,
                line,
                column,
                key: None,
                message: e.message().trim().to_string(),
            })
        }
    }
}

pub fn load_config(path: &Path) -> Result<(RunConfig, ConfigSource), ConfigDiagnostic> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigDiagnostic {
        file: Some(path.to_path_buf()),
        line: None,
        column: None,
        key: None,
        message: format!("cannot read: {e}"),
    })?;
    parse_config(&text, Some(path))
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub preset: Option<Preset>,
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub methods: Option<Vec<Method>>,
    pub m: Option<usize>,
    pub truth_datasets: Option<usize>,
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

/// Everything needed to run a command, fully resolved and validated.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub preset: Preset,
    pub plan: SimPlan,
    pub output_dir: Option<PathBuf>,
}

pub const DEFAULT_SEED: u64 = 20_240_601;

impl RunConfig {
    /// Merges preset, file and command line, then validates.
    pub fn resolve(&self, source: &ConfigSource, cli: &CliOverrides) -> Result<Resolved, ConfigDiagnostic> {
        let preset = cli.preset.or(self.preset).unwrap_or(Preset::Setting1);
        let mut params = GenParams::preset(preset);
        self.params.apply(&mut params);
        params.validate().map_err(|e| match e {
            ConfigError::Invalid { name, reason } => source.diagnostic("params", name, reason),
            other => source.diagnostic("", "preset", other.to_string()),
        })?;

        let mut plan = SimPlan::new(params);
        plan.master_seed = cli.seed.or(self.seed).unwrap_or(DEFAULT_SEED);
        let defaults = ImputationConfig::default();
        let section = &self.imputation;
        plan.imputation = ImputationConfig {
            method: defaults.method,
            m: cli.m.or(section.m).unwrap_or(defaults.m),
            seed: 0,
            survival_kind: section.survival_kind.unwrap_or(defaults.survival_kind),
            min_donor_pool: section.min_donor_pool.unwrap_or(defaults.min_donor_pool),
            mar_conditioning: section.mar_conditioning.unwrap_or(defaults.mar_conditioning),
            forced_gate_probability: section.forced_gate_probability,
        };
        if let Err(e) = plan.imputation.validate() {
            let key = match () {
                _ if plan.imputation.m < 2 => "m",
                _ if plan.imputation.min_donor_pool < 2 => "min_donor_pool",
                _ => "forced_gate_probability",
            };
            return Err(source.diagnostic("imputation", key, e.to_string()));
        }
        if let Some(level) = section.level {
            if !(level > 0.0 && level < 1.0) {
                return Err(source.diagnostic("imputation", "level", "must lie strictly between 0 and 1".into()));
            }
            plan.level = level;
        }

        let p = &self.plan;
        plan.n_replicates = cli.replicates.or(p.replicates).unwrap_or(plan.n_replicates);
        if plan.n_replicates == 0 {
            return Err(source.diagnostic("plan", "replicates", "must be at least 1".into()));
        }
        if let Some(methods) = cli.methods.clone().or_else(|| p.methods.clone()) {
            let mut unique = methods;
            unique.sort();
            unique.dedup();
            if unique.is_empty() {
                return Err(source.diagnostic("plan", "methods", "at least one method is required".into()));
            }
            plan.methods = unique;
        }
        plan.truth_datasets = cli.truth_datasets.or(p.truth_datasets).unwrap_or(plan.truth_datasets);
        if plan.truth_datasets == 0 {
            return Err(source.diagnostic("plan", "truth_datasets", "must be at least 1".into()));
        }
        plan.truth_seed = p.truth_seed;
        plan.workers = cli.workers.or(p.workers);
        if plan.workers == Some(0) {
            return Err(source.diagnostic("plan", "workers", "must be at least 1".into()));
        }
        let output_dir = cli.output_dir.clone().or_else(|| self.output_dir.clone());
        Ok(Resolved {
            preset,
            plan,
            output_dir,
        })
    }
}

/// Parses `A,B,C`.
pub fn parse_methods(s: &str) -> Result<Vec<Method>, String> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(str::parse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(text: &str) -> Result<Resolved, ConfigDiagnostic> {
        let (cfg, src) = parse_config(text, None)?;
        cfg.resolve(&src, &CliOverrides::default())
    }

    #[test]
    fn preset_and_overrides() {
        let r = resolve(
            "preset = \"setting2\"\nseed = 3\n[params]\nkappa = 0.2\n[plan]\nmethods = [\"C\", \"B\", \"C\"]\n",
        )
        .unwrap();
        assert_eq!(r.preset, Preset::Setting2);
        assert_eq!(r.plan.params.kappa, 0.2);
        assert_eq!(r.plan.params.withdrawal_hazard, 0.005);
        assert_eq!(r.plan.methods, vec![Method::B, Method::C]);
        assert_eq!(r.plan.master_seed, 3);
    }

    #[test]
    fn unknown_key_is_located() {
        let err = resolve("preset = \"setting1\"\n[params]\nkapa = 0.2\n").unwrap_err();
        assert_eq!(err.line, Some(3));
        assert!(err.message.contains("kapa"), "{}", err.message);
    }

    #[test]
    fn invalid_value_names_its_key() {
        let err = resolve("[params]\nn_per_arm = 10\n\nkappa = -1.0\n").unwrap_err();
        assert_eq!(err.key.as_deref(), Some("params.kappa"));
        assert_eq!(err.line, Some(4));
        let err = resolve("[imputation]\nm = 1\n").unwrap_err();
        assert_eq!(err.key.as_deref(), Some("imputation.m"));
        assert_eq!(err.line, Some(2));
    }

    #[test]
    fn command_line_wins() {
        let (cfg, src) = parse_config("seed = 1\n[plan]\nreplicates = 10\n", None).unwrap();
        let cli = CliOverrides {
            seed: Some(9),
            replicates: Some(2),
            ..Default::default()
        };
        let r = cfg.resolve(&src, &cli).unwrap();
        assert_eq!(r.plan.master_seed, 9);
        assert_eq!(r.plan.n_replicates, 2);
    }

    #[test]
    fn baseline_override_moves_centering() {
        let r =
            resolve("[params]\nbaseline = { shape_a = 2.0, shape_b = 2.0, location = 6.0, scale = 4.0 }\n").unwrap();
        assert_eq!(r.plan.params.baseline_mean, 8.0);
    }

    #[test]
    fn method_lists() {
        assert_eq!(parse_methods("B,C"), Ok(vec![Method::B, Method::C]));
        assert!(parse_methods("A,Q").is_err());
    }
}
