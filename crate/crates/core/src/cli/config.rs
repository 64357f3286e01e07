//! Run configuration: built-in hyperparameter profiles, JSON files and
//! flag overrides, merged in that order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg_store::SyntheticSpec;
use crate::model::{ModelConfig, ModelKind};
use crate::trainer::{dura_defaults, TrainConfig};

/// Benchmark whose grid-search results seed the defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Profile {
    #[serde(rename = "wn18rr")]
    Wn18rr,
    #[serde(rename = "fb15k-237")]
    Fb15k237,
    #[serde(rename = "yago3-10-dr")]
    Yago310Dr,
}

impl Profile {
    pub const ALL: [Profile; 3] = [Profile::Wn18rr, Profile::Fb15k237, Profile::Yago310Dr];

    pub fn name(self) -> &'static str {
        match self {
            Profile::Wn18rr => "wn18rr",
            Profile::Fb15k237 => "fb15k-237",
            Profile::Yago310Dr => "yago3-10-dr",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        Profile::ALL
            .into_iter()
            .find(|p| p.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown profile '{s}'")))
    }
}

/// Grid-searched `(λ, γ, batch size)` and dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileEntry {
    pub reg_weight: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub dim: usize,
}

/// Published settings; `constrained = false` selects the UniBi rows trained
/// without constraints.
pub fn profile_entry(profile: Profile, kind: ModelKind, constrained: bool) -> ProfileEntry {
    use ModelKind::*;
    use Profile::*;
    let (reg_weight, gamma, batch_size) = match (kind, constrained, profile) {
        (UniBiO2 | UniBiO3, false, Wn18rr) => (1e-1, 1.0, 100),
        (UniBiO2 | UniBiO3, false, Fb15k237) => (5e-2, 1.0, 1000),
        (UniBiO2 | UniBiO3, false, Yago310Dr) => (5e-2, 1.0, 1000),
        (Cp, _, Wn18rr) => (1e-1, 1.0, 100),
        (Cp, _, Fb15k237) => (5e-2, 1.0, 100),
        (Cp, _, Yago310Dr) => (5e-3, 1.0, 1000),
        (ComplEx, _, Wn18rr) => (1e-1, 1.0, 100),
        (ComplEx, _, Fb15k237) => (5e-2, 1.0, 100),
        (ComplEx, _, Yago310Dr) => (1e-2, 1.0, 1000),
        (Rescal, _, Wn18rr) => (1e-1, 1.0, 1000),
        (Rescal, _, Fb15k237) => (5e-2, 1.0, 1000),
        (Rescal, _, Yago310Dr) => (5e-2, 1.0, 1000),
        (UniBiO2, true, Wn18rr) => (2.0, 20.0, 100),
        (UniBiO2, true, Fb15k237) => (2.0, 25.0, 1000),
        (UniBiO2, true, Yago310Dr) => (1.5, 30.0, 1000),
        (UniBiO3, true, Wn18rr) => (2.0, 15.0, 100),
        (UniBiO3, true, Fb15k237) => (1.5, 20.0, 1000),
        (UniBiO3, true, Yago310Dr) => (1.5, 30.0, 1000),
    };
    let dim = if kind == Rescal && profile == Wn18rr {
        256
    } else {
        500
    };
    ProfileEntry {
        reg_weight,
        gamma,
        batch_size,
        dim,
    }
}

/// Contents of a `--config` JSON file; every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data_dir: Option<PathBuf>,
    pub synthetic: Option<SyntheticSpec>,
    pub out: Option<PathBuf>,
    pub profile: Option<Profile>,
    pub model: Option<ModelKind>,
    pub dim: Option<usize>,
    pub entity_constraint: Option<bool>,
    pub relation_constraint: Option<bool>,
    pub gamma: Option<f64>,
    pub reg_weight: Option<f64>,
    pub dura_weights: Option<[f64; 4]>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub eval_every: Option<usize>,
    pub patience: Option<usize>,
    pub seed: Option<u64>,
    pub identity_fraction: Option<f64>,
    pub identity_copies: Option<usize>,
    /// Identity experiment: run all four constraint settings plus RESCAL
    /// instead of just both-on and both-off.
    pub ablations: Option<bool>,
    pub threads: Option<usize>,
    pub bound_samples: Option<usize>,
    pub matrix_samples: Option<usize>,
    pub checkpoint: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Values given on the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlagOverrides {
    pub data_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub profile: Option<String>,
    pub model: Option<String>,
    pub dim: Option<usize>,
    pub gamma: Option<f64>,
    pub reg: Option<f64>,
    pub no_ec: bool,
    pub no_rc: bool,
    pub identity_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub epochs: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Dir(PathBuf),
    Synthetic(SyntheticSpec),
}

/// Fully merged and validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Option<DataSource>,
    pub out: PathBuf,
    pub profile: Profile,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seed: u64,
    /// `None` leaves the dataset untouched for training; the identity
    /// experiment then injects into every entity.
    pub identity_fraction: Option<f64>,
    pub identity_copies: usize,
    pub ablations: bool,
    pub threads: Option<usize>,
    pub bound_samples: usize,
    pub matrix_samples: usize,
    pub checkpoint: Option<PathBuf>,
    pub force: bool,
    explicit: ExplicitTrain,
}

/// Training values set by the user rather than a profile, kept so ablation
/// runs can re-derive profile values for other model settings.
#[derive(Debug, Clone, Default, PartialEq)]
struct ExplicitTrain {
    gamma: Option<f64>,
    reg_weight: Option<f64>,
    batch_size: Option<usize>,
    dura_weights: Option<[f64; 4]>,
}

pub const DEFAULT_OUT: &str = "unibi-out";
pub const CHECKPOINT_FILE: &str = "model.ckpt";

impl RunConfig {
    /// Merge profile defaults, then the JSON file, then flags.
    pub fn resolve(file: FileConfig, flags: FlagOverrides) -> Result<Self> {
        let profile = match flags.profile.as_deref() {
            Some(p) => Profile::parse(p)?,
            None => file.profile.unwrap_or(Profile::Wn18rr),
        };
        let kind = match flags.model.as_deref() {
            Some(m) => m.parse()?,
            None => file.model.unwrap_or(ModelKind::UniBiO2),
        };
        let default_on = kind.is_unibi();
        let ec = !flags.no_ec && file.entity_constraint.unwrap_or(default_on);
        let rc = !flags.no_rc && file.relation_constraint.unwrap_or(default_on);
        let entry = profile_entry(profile, kind, ec || rc || !kind.is_unibi());

        let dim = flags.dim.or(file.dim).unwrap_or(entry.dim);
        let model = ModelConfig {
            kind,
            dim,
            entity_constraint: ec,
            relation_constraint: rc,
        };
        model.validate()?;

        let seed = flags.seed.or(file.seed).unwrap_or(0);
        let explicit = ExplicitTrain {
            gamma: flags.gamma.or(file.gamma),
            reg_weight: flags.reg.or(file.reg_weight),
            batch_size: file.batch_size,
            dura_weights: file.dura_weights,
        };
        let train = TrainConfig {
            gamma: explicit.gamma.unwrap_or(entry.gamma),
            reg_weight: explicit.reg_weight.unwrap_or(entry.reg_weight),
            dura_weights: explicit.dura_weights.unwrap_or(dura_defaults(kind)),
            learning_rate: file.learning_rate.unwrap_or(1e-3),
            batch_size: explicit.batch_size.unwrap_or(entry.batch_size),
            max_epochs: flags.epochs.or(file.max_epochs).unwrap_or(200),
            eval_every: file.eval_every.unwrap_or(5),
            patience: file.patience.unwrap_or(10),
            seed,
            ..TrainConfig::default()
        };
        train.validate()?;

        let data = match (flags.data_dir.or(file.data_dir), file.synthetic) {
            (Some(dir), _) => Some(DataSource::Dir(dir)),
            (None, Some(spec)) => Some(DataSource::Synthetic(spec)),
            (None, None) => None,
        };
        let identity_fraction = flags.identity_fraction.or(file.identity_fraction);
        if identity_fraction.is_some_and(|f| !(f > 0.0 && f <= 1.0)) {
            return Err(Error::Config("identity fraction must lie in (0, 1]".into()));
        }
        let identity_copies = file.identity_copies.unwrap_or(1);
        if !(1..=2).contains(&identity_copies) {
            return Err(Error::Config("identity_copies must be 1 or 2".into()));
        }
        let threads = flags.threads.or(file.threads);
        if threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        Ok(Self {
            data,
            out: flags
                .out
                .or(file.out)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            profile,
            model,
            train,
            seed,
            identity_fraction,
            identity_copies,
            ablations: file.ablations.unwrap_or(false),
            threads,
            bound_samples: file.bound_samples.unwrap_or(10_000),
            matrix_samples: file.matrix_samples.unwrap_or(500),
            checkpoint: flags.checkpoint.or(file.checkpoint),
            force: flags.force,
            explicit,
        })
    }

    /// Training settings for another model setting under the same profile:
    /// user-set values carry over, the rest come from the profile row.
    pub fn train_for(&self, model: &ModelConfig) -> Result<TrainConfig> {
        let constrained =
            model.entity_constraint || model.relation_constraint || !model.kind.is_unibi();
        let entry = profile_entry(self.profile, model.kind, constrained);
        let cfg = TrainConfig {
            gamma: self.explicit.gamma.unwrap_or(entry.gamma),
            reg_weight: self.explicit.reg_weight.unwrap_or(entry.reg_weight),
            batch_size: self.explicit.batch_size.unwrap_or(entry.batch_size),
            dura_weights: self
                .explicit
                .dura_weights
                .unwrap_or(dura_defaults(model.kind)),
            ..self.train.clone()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.out.join(CHECKPOINT_FILE))
    }

    pub fn data(&self) -> Result<&DataSource> {
        self.data.as_ref().ok_or_else(|| {
            Error::Config("no dataset: pass --data-dir or a synthetic section".into())
        })
    }
}
