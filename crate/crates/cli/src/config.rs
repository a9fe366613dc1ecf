//! Run configuration: a TOML file whose sections mirror the engine's
//! configuration types, layered over a built-in profile.
//!
//! Resolution order for every key: the file, then the profile, then the
//! engine default. Section seeds fall back to the top-level `seed`.

use std::path::Path;

use clap::ValueEnum;
use mtaf_core::metric_train::TrainConfig;
use mtaf_core::synthgen::{ring, CameraEdge, WorldConfig};
use mtaf_core::Frame;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Duke,
    Cityflow,
}

/// Windows and sampling ranges of a profile, in frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProfileWindows {
    pub tracklet_len: Frame,
    pub sct_window: Frame,
    pub mct_window: Frame,
    pub tau_s: Frame,
    pub tau_m: Frame,
}

impl Profile {
    pub fn windows(self) -> ProfileWindows {
        match self {
            Profile::Duke => ProfileWindows {
                tracklet_len: 40,
                sct_window: 600,
                mct_window: 2400,
                tau_s: 600,
                tau_m: 2400,
            },
            Profile::Cityflow => ProfileWindows {
                tracklet_len: 10,
                sct_window: 150,
                mct_window: 500,
                tau_s: 150,
                tau_m: 500,
            },
        }
    }
}

pub const DEFAULT_PROFILE: Profile = Profile::Cityflow;
pub const DEFAULT_CALIBRATION_PAIRS: usize = 1_000_000;

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSection {
    pub cameras: Option<u32>,
    /// Travel range of the default ring; ignored when `edges` is given.
    pub travel: Option<(Frame, Frame)>,
    /// `[a, b, travel_min, travel_max]` per undirected link.
    pub edges: Option<Vec<(u32, u32, Frame, Frame)>>,
    pub n_targets: Option<usize>,
    pub dwell_range: Option<(Frame, Frame)>,
    pub visits_range: Option<(u32, u32)>,
    pub spawn_horizon: Option<Frame>,
    pub feature_dim: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub sigma: Option<f64>,
    pub gamma: Option<f64>,
    pub illumination_period: Option<Frame>,
    pub drift_scale: Option<Frame>,
    pub dropout: Option<f64>,
    pub seed: Option<u64>,
    pub split: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerSection {
    pub tracklet_len: Option<Frame>,
    pub sct_window: Option<Frame>,
    pub mct_window: Option<Frame>,
    pub stride_ratio: Option<f64>,
    pub exact_solver_cap: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub tau_s: Option<Frame>,
    pub tau_m: Option<Frame>,
    pub pair_count: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub lr_max: Option<f64>,
    pub lr_min: Option<f64>,
    pub batch_size: Option<usize>,
    pub temperature: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub max_pairs: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScopesSection {
    pub max_pairs: Option<usize>,
    pub bins: Option<usize>,
    pub seed: Option<u64>,
}

/// The configuration file as written.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub profile: Option<Profile>,
    #[serde(default)]
    pub world: WorldSection,
    #[serde(default)]
    pub tracker: TrackerSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub calibration: CalibrationSection,
    #[serde(default)]
    pub scopes: ScopesSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string().trim_end().to_string()))
    }

    /// A missing or unreadable file is a configuration error.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerSettings {
    pub tracklet_len: Frame,
    pub sct_window: Frame,
    pub mct_window: Frame,
    pub stride_ratio: f64,
    pub exact_solver_cap: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerSettings {
    pub tau_s: Frame,
    pub tau_m: Frame,
    pub pair_count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub config: TrainConfig,
    pub temperature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSettings {
    pub max_pairs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub profile: Profile,
    pub seed: u64,
    pub world: WorldConfig,
    pub tracker: TrackerSettings,
    pub sampler: SamplerSettings,
    pub train: TrainSettings,
    pub calibration: PairSettings,
    pub scopes: PairSettings,
    pub bins: usize,
}

pub const DEFAULT_PAIR_COUNT: usize = 4000;
pub const DEFAULT_SCOPE_PAIRS: usize = 20_000;
pub const DEFAULT_BINS: usize = 40;

impl Settings {
    /// Applies profile and defaults; command-line `seed` and `profile` win over the file.
    pub fn resolve(cfg: &RunConfig, seed: Option<u64>, profile: Option<Profile>) -> CliResult<Self> {
        let profile = profile.or(cfg.profile).unwrap_or(DEFAULT_PROFILE);
        let windows = profile.windows();
        let seed = seed.or(cfg.seed).unwrap_or(0);

        let t = &cfg.tracker;
        let tracker = TrackerSettings {
            tracklet_len: t.tracklet_len.unwrap_or(windows.tracklet_len),
            sct_window: t.sct_window.unwrap_or(windows.sct_window),
            mct_window: t.mct_window.unwrap_or(windows.mct_window),
            stride_ratio: t.stride_ratio.unwrap_or(0.5),
            exact_solver_cap: t.exact_solver_cap.unwrap_or(mtaf_core::association::DEFAULT_EXACT_CAP),
            seed: t.seed.unwrap_or(seed),
        };

        let w = &cfg.world;
        let d = WorldConfig::default();
        let cameras = w.cameras.unwrap_or(d.cameras);
        let edges = match &w.edges {
            Some(list) => list
                .iter()
                .map(|&(a, b, lo, hi)| CameraEdge { a, b, travel: (lo, hi) })
                .collect(),
            None => ring(cameras, w.travel.unwrap_or((50, 150))),
        };
        let world = WorldConfig {
            cameras,
            edges,
            n_targets: w.n_targets.unwrap_or(d.n_targets),
            dwell_range: w.dwell_range.unwrap_or(d.dwell_range),
            visits_range: w.visits_range.unwrap_or(d.visits_range),
            spawn_horizon: w.spawn_horizon.unwrap_or(d.spawn_horizon),
            feature_dim: w.feature_dim.unwrap_or(d.feature_dim),
            alpha: w.alpha.unwrap_or(d.alpha),
            beta: w.beta.unwrap_or(d.beta),
            sigma: w.sigma.unwrap_or(d.sigma),
            gamma: w.gamma.unwrap_or(d.gamma),
            illumination_period: w.illumination_period.unwrap_or(d.illumination_period),
            drift_scale: w.drift_scale.unwrap_or(tracker.mct_window),
            dropout: w.dropout.unwrap_or(d.dropout),
            seed: w.seed.unwrap_or(seed),
            split: w.split.unwrap_or(0),
        };

        let s = &cfg.sampler;
        let sampler = SamplerSettings {
            tau_s: s.tau_s.unwrap_or(windows.tau_s),
            tau_m: s.tau_m.unwrap_or(windows.tau_m),
            pair_count: s.pair_count.unwrap_or(DEFAULT_PAIR_COUNT),
            seed: s.seed.unwrap_or(seed),
        };

        let tr = &cfg.train;
        let td = TrainConfig::default();
        let train = TrainSettings {
            config: TrainConfig {
                epochs: tr.epochs.unwrap_or(td.epochs),
                lr_max: tr.lr_max.unwrap_or(td.lr_max),
                lr_min: tr.lr_min.unwrap_or(td.lr_min),
                batch_size: tr.batch_size.unwrap_or(td.batch_size),
                seed: tr.seed.unwrap_or(seed),
                record_history: false,
            },
            temperature: tr.temperature.unwrap_or(mtaf_core::DEFAULT_TEMPERATURE),
        };

        let settings = Settings {
            profile,
            seed,
            world,
            tracker,
            sampler,
            train,
            calibration: PairSettings {
                max_pairs: cfg.calibration.max_pairs.unwrap_or(DEFAULT_CALIBRATION_PAIRS),
                seed: cfg.calibration.seed.unwrap_or(seed),
            },
            scopes: PairSettings {
                max_pairs: cfg.scopes.max_pairs.unwrap_or(DEFAULT_SCOPE_PAIRS),
                seed: cfg.scopes.seed.unwrap_or(seed),
            },
            bins: cfg.scopes.bins.unwrap_or(DEFAULT_BINS),
        };
        settings.validate()?;
        Ok(settings)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.world.validate()?;
        self.train.config.validate()?;
        let t = &self.tracker;
        if t.tracklet_len <= 0 || t.sct_window < t.tracklet_len || t.mct_window < t.sct_window {
            return Err(CliError::config(
                "tracker: need 0 < tracklet_len <= sct_window <= mct_window",
            ));
        }
        if !(t.stride_ratio > 0.0 && t.stride_ratio <= 1.0) {
            return Err(CliError::config("tracker.stride_ratio: must lie in (0, 1]"));
        }
        if self.sampler.tau_s <= 0 || self.sampler.tau_m <= 0 {
            return Err(CliError::config("sampler: tau_s and tau_m must be positive"));
        }
        if self.sampler.pair_count == 0 || self.sampler.pair_count % 2 != 0 {
            return Err(CliError::config("sampler.pair_count: must be a positive even number"));
        }
        if !(self.train.temperature > 0.0) {
            return Err(CliError::config("train.temperature: must be positive"));
        }
        if self.calibration.max_pairs == 0 || self.scopes.max_pairs == 0 {
            return Err(CliError::config("max_pairs: must be positive"));
        }
        if self.bins < 2 {
            return Err(CliError::config("scopes.bins: must be at least 2"));
        }
        Ok(())
    }
}
