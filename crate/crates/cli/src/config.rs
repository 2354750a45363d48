//! Flat `key = value` run configuration. One assignment per line, `#` starts
//! a comment, unknown or repeated keys are errors that carry the line number.

use std::fmt;
use std::path::PathBuf;

use dac_core::analysis::AnalysisConfig;
use dac_core::losses::{MmdKind, Scheme};
use dac_core::model::SourceTrainConfig;
use dac_core::trainer::AdaptConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Moons,
    Blobs,
}

impl DataKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DataKind::Moons => "moons",
            DataKind::Blobs => "blobs",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "moons" => Some(DataKind::Moons),
            "blobs" => Some(DataKind::Blobs),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataParams {
    pub kind: DataKind,
    pub n: usize,
    pub noise: f64,
    pub rotation: f64,
    pub classes: usize,
    pub dim: usize,
    pub spread: f64,
    /// Empty means no shift.
    pub shift: Vec<f64>,
}

impl Default for DataParams {
    fn default() -> Self {
        DataParams {
            kind: DataKind::Moons,
            n: 2000,
            noise: 0.1,
            rotation: 0.0,
            classes: 3,
            dim: 2,
            spread: 0.5,
            shift: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub adapt: AdaptConfig,
    pub source: SourceTrainConfig,
    pub data: DataParams,
    pub n_aug: usize,
    pub n_pairs: usize,
    pub source_csv: Option<PathBuf>,
    pub target_csv: Option<PathBuf>,
    pub source_model: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub dump_features: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let analysis = AnalysisConfig::default();
        RunConfig {
            adapt: AdaptConfig::default(),
            source: SourceTrainConfig::default(),
            data: DataParams::default(),
            n_aug: analysis.n_aug,
            n_pairs: analysis.n_pairs,
            source_csv: None,
            target_csv: None,
            source_model: None,
            out_dir: None,
            dump_features: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse {:?}", v))
}

fn real(v: &str) -> Result<f64, String> {
    let x: f64 = num(v)?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("{:?} is not a finite number", v))
    }
}

fn flag(v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got {:?}", v)),
    }
}

fn path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn list(v: &str) -> Result<Vec<f64>, String> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| real(s.trim())).collect()
}

impl RunConfig {
    /// Every key with its current value, in documentation order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let a = &self.adapt;
        let s = &self.source;
        let d = &self.data;
        let p = &a.policy;
        vec![
            ("seed", a.seed.to_string()),
            ("epochs", a.epochs.to_string()),
            ("batch_size", a.batch_size.to_string()),
            ("lr0", a.lr0.to_string()),
            ("lr_factor", a.lr_factor.to_string()),
            ("lr_exponent", a.lr_exponent.to_string()),
            (
                "lr_drop_epoch",
                a.lr_drop_epoch.map(|e| e.to_string()).unwrap_or_else(|| "none".into()),
            ),
            ("momentum_sgd", a.momentum_sgd.to_string()),
            ("weight_decay", a.weight_decay.to_string()),
            ("tau_c", a.tau_c.to_string()),
            ("alpha", a.alpha.to_string()),
            ("beta", a.beta.to_string()),
            ("k", a.k.to_string()),
            ("bank_momentum", a.bank_momentum.to_string()),
            ("tau", a.tau.to_string()),
            ("omega", a.omega.to_string()),
            ("omega_ramp", a.omega_ramp.to_string()),
            ("scheme", a.scheme.as_str().into()),
            ("mmd_kind", a.mmd_kind.as_str().into()),
            ("init_fraction", a.init_fraction.to_string()),
            ("renormalize_bank", a.renormalize_bank.to_string()),
            ("renormalize_centroids", a.renormalize_centroids.to_string()),
            ("sigma_weak", p.sigma_weak.to_string()),
            ("sigma_strong", p.sigma_strong.to_string()),
            ("dropout_prob", p.dropout_prob.to_string()),
            ("scale_jitter", p.scale_jitter.to_string()),
            ("radius_r", p.radius_r.to_string()),
            ("hidden", s.hidden.to_string()),
            ("bottleneck", s.bottleneck.to_string()),
            ("source_epochs", s.epochs.to_string()),
            ("source_lr", s.lr.to_string()),
            ("source_momentum", s.momentum.to_string()),
            ("source_weight_decay", s.weight_decay.to_string()),
            ("source_batch_size", s.batch_size.to_string()),
            ("label_smoothing", s.label_smoothing.to_string()),
            ("holdout_fraction", s.holdout_fraction.to_string()),
            ("source_accuracy_floor", s.accuracy_floor.to_string()),
            ("data_kind", d.kind.as_str().into()),
            ("data_n", d.n.to_string()),
            ("data_noise", d.noise.to_string()),
            ("data_rotation", d.rotation.to_string()),
            ("data_classes", d.classes.to_string()),
            ("data_dim", d.dim.to_string()),
            ("data_spread", d.spread.to_string()),
            (
                "data_shift",
                d.shift.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
            ),
            ("n_aug", self.n_aug.to_string()),
            ("n_pairs", self.n_pairs.to_string()),
            ("source_csv", show_path(&self.source_csv)),
            ("target_csv", show_path(&self.target_csv)),
            ("source_model", show_path(&self.source_model)),
            ("out_dir", show_path(&self.out_dir)),
            ("dump_features", self.dump_features.to_string()),
        ]
    }

    pub fn keys() -> Vec<&'static str> {
        RunConfig::default().entries().into_iter().map(|(k, _)| k).collect()
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let a = &mut self.adapt;
        let s = &mut self.source;
        let d = &mut self.data;
        match key {
            "seed" => a.seed = num(v)?,
            "epochs" => a.epochs = num(v)?,
            "batch_size" => a.batch_size = num(v)?,
            "lr0" => a.lr0 = real(v)?,
            "lr_factor" => a.lr_factor = real(v)?,
            "lr_exponent" => a.lr_exponent = real(v)?,
            "lr_drop_epoch" => a.lr_drop_epoch = if v == "none" { None } else { Some(num(v)?) },
            "momentum_sgd" => a.momentum_sgd = real(v)?,
            "weight_decay" => a.weight_decay = real(v)?,
            "tau_c" => a.tau_c = real(v)?,
            "alpha" => a.alpha = real(v)?,
            "beta" => a.beta = real(v)?,
            "k" => a.k = num(v)?,
            "bank_momentum" => a.bank_momentum = real(v)?,
            "tau" => a.tau = real(v)?,
            "omega" => a.omega = real(v)?,
            "omega_ramp" => a.omega_ramp = real(v)?,
            "scheme" => a.scheme = Scheme::parse(v).ok_or_else(|| format!("unknown scheme {:?}", v))?,
            "mmd_kind" => a.mmd_kind = MmdKind::parse(v).ok_or_else(|| format!("unknown mmd_kind {:?}", v))?,
            "init_fraction" => a.init_fraction = real(v)?,
            "renormalize_bank" => a.renormalize_bank = flag(v)?,
            "renormalize_centroids" => a.renormalize_centroids = flag(v)?,
            "sigma_weak" => a.policy.sigma_weak = real(v)?,
            "sigma_strong" => a.policy.sigma_strong = real(v)?,
            "dropout_prob" => a.policy.dropout_prob = real(v)?,
            "scale_jitter" => a.policy.scale_jitter = real(v)?,
            "radius_r" => a.policy.radius_r = real(v)?,
            "hidden" => s.hidden = num(v)?,
            "bottleneck" => s.bottleneck = num(v)?,
            "source_epochs" => s.epochs = num(v)?,
            "source_lr" => s.lr = real(v)?,
            "source_momentum" => s.momentum = real(v)?,
            "source_weight_decay" => s.weight_decay = real(v)?,
            "source_batch_size" => s.batch_size = num(v)?,
            "label_smoothing" => s.label_smoothing = real(v)?,
            "holdout_fraction" => s.holdout_fraction = real(v)?,
            "source_accuracy_floor" => s.accuracy_floor = real(v)?,
            "data_kind" => d.kind = DataKind::parse(v).ok_or_else(|| format!("unknown data_kind {:?}", v))?,
            "data_n" => d.n = num(v)?,
            "data_noise" => d.noise = real(v)?,
            "data_rotation" => d.rotation = real(v)?,
            "data_classes" => d.classes = num(v)?,
            "data_dim" => d.dim = num(v)?,
            "data_spread" => d.spread = real(v)?,
            "data_shift" => d.shift = list(v)?,
            "n_aug" => self.n_aug = num(v)?,
            "n_pairs" => self.n_pairs = num(v)?,
            "source_csv" => self.source_csv = path(v),
            "target_csv" => self.target_csv = path(v),
            "source_model" => self.source_model = path(v),
            "out_dir" => self.out_dir = path(v),
            "dump_features" => self.dump_features = flag(v)?,
            _ => return Err(format!("unknown key {:?}", key)),
        }
        Ok(())
    }

    /// Applies the assignments in `text` on top of the defaults.
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let err = |message: String| ConfigError { line, message };
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {:?}", body)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(err(format!("key {:?} assigned twice", key)));
            }
            cfg.set(key, value.trim()).map_err(err)?;
        }
        Ok(cfg)
    }

    /// Every key, one per line; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        }
        s
    }

    pub fn analysis(&self) -> AnalysisConfig {
        AnalysisConfig {
            n_aug: self.n_aug,
            n_pairs: self.n_pairs,
            seed: self.adapt.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn edited_config_round_trips() {
        let text = "# comment\nlr0 = 0.003 # trailing\nscheme=scheme_t\nlr_drop_epoch = 7\ndata_shift = 1.5,-2\ntarget_csv = a/b.csv\nradius_r = 0.1\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.adapt.lr0, 0.003);
        assert_eq!(cfg.adapt.scheme, Scheme::SchemeT);
        assert_eq!(cfg.adapt.lr_drop_epoch, Some(7));
        assert_eq!(cfg.data.shift, vec![1.5, -2.0]);
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_reports_line() {
        let e = RunConfig::parse("seed = 1\n\nbogus = 3\n").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.message.contains("bogus"));
    }

    #[test]
    fn bad_value_and_missing_equals_report_line() {
        assert_eq!(RunConfig::parse("tau = fast\n").unwrap_err().line, 1);
        assert_eq!(RunConfig::parse("seed = 1\nepochs\n").unwrap_err().line, 2);
        assert_eq!(RunConfig::parse("tau = inf\n").unwrap_err().line, 1);
    }

    #[test]
    fn duplicate_key_is_rejected() {
        assert_eq!(RunConfig::parse("k = 3\nk = 4\n").unwrap_err().line, 2);
    }

    #[test]
    fn key_list_has_no_duplicates() {
        let keys = RunConfig::keys();
        let set: std::collections::HashSet<_> = keys.iter().collect();
        assert_eq!(set.len(), keys.len());
    }
}
