//! Run configuration: presets merged under user TOML.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineConfig, BaselineKind, BETA_PRESETS};
use crate::chordset::{DatasetConfig, DatasetPreset};
use crate::error::{Error, Result};
use crate::slotcore::{MaskNorm, ModelConfig};
use crate::trainer::TrainConfig;

/// Which kind of model a run trains or evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Musicslots,
    Baseline,
    /// Ground truth echoed back as slots; only meaningful for `eval`.
    GtEcho,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    pub splits: Vec<String>,
    pub threshold_db: f64,
    /// Seed of the slot-noise stream used at evaluation.
    pub noise_seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { splits: vec!["val".into(), "test".into()], threshold_db: crate::dsp::DEFAULT_MASK_THRESHOLD_DB, noise_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VizSettings {
    pub split: String,
    pub examples: Vec<usize>,
    /// Pixels per spectrogram cell.
    pub scale: u32,
}

impl Default for VizSettings {
    fn default() -> Self {
        Self { split: "test".into(), examples: vec![0], scale: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_dir: Option<PathBuf>,
    pub seeds: Vec<u64>,
    /// Built dataset directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// Pretrained run directory or checkpoint for `probe`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backbone: Option<PathBuf>,
    pub model: ModelConfig,
    pub baseline: BaselineConfig,
    pub train: TrainConfig,
    /// Optimization settings for read-out probes and the supervised CNN.
    pub probe: TrainConfig,
    pub build: DatasetConfig,
    pub eval: EvalSettings,
    pub viz: VizSettings,
    /// Run seeds concurrently instead of one after another.
    pub parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: None,
            family: Family::Musicslots,
            run_dir: None,
            seeds: vec![0],
            dataset: None,
            backbone: None,
            model: ModelConfig::default(),
            baseline: BaselineConfig::default(),
            train: TrainConfig::slots(),
            probe: TrainConfig::probe(),
            build: DatasetConfig::default(),
            eval: EvalSettings::default(),
            viz: VizSettings::default(),
            parallel: false,
        }
    }
}

/// Rows of the architectural ablation, in reporting order.
pub const ABLATION_LADDER: [(&str, &str); 5] = [
    ("Default", "ablate-default"),
    ("Default + stride (1, 2)", "ablate-stride"),
    ("Default - softmax mask", "ablate-no-softmax"),
    ("Default + implicit diff", "ablate-implicit"),
    ("MusicSlots", "musicslots-none"),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preset {
    Slots(MaskNorm),
    /// Ablation baseline: stride (1, 1), softmax masks, no implicit step,
    /// with optional single changes.
    Ablation { stride: (usize, usize), mask: MaskNorm, implicit: bool },
    Ae,
    Vae(f64),
    SupervisedCnn,
    GtEcho,
    Dataset(DatasetPreset),
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let ablation = |stride, mask, implicit| Preset::Ablation { stride, mask, implicit };
        Ok(match s {
            "musicslots-soft" => Preset::Slots(MaskNorm::Softmax),
            "musicslots-sigm" => Preset::Slots(MaskNorm::Sigmoid),
            "musicslots-none" => Preset::Slots(MaskNorm::None),
            "ablate-default" => ablation((1, 1), MaskNorm::Softmax, false),
            "ablate-stride" => ablation((1, 2), MaskNorm::Softmax, false),
            "ablate-no-softmax" => ablation((1, 1), MaskNorm::None, false),
            "ablate-implicit" => ablation((1, 1), MaskNorm::Softmax, true),
            "ae" => Preset::Ae,
            "vae" => Preset::Vae(1.0),
            "supervised-cnn" => Preset::SupervisedCnn,
            "gt-echo" => Preset::GtEcho,
            other => {
                if let Some(beta) = other.strip_prefix("vae:") {
                    let b: f64 = beta.parse().map_err(|_| Error::config(format!("bad beta in preset '{other}'")))?;
                    if !BETA_PRESETS.contains(&b) {
                        log::warn!("beta {b} is outside the standard grid {BETA_PRESETS:?}");
                    }
                    Preset::Vae(b)
                } else if let Ok(d) = DatasetPreset::from_str(other) {
                    Preset::Dataset(d)
                } else {
                    return Err(Error::config(format!(
                        "unknown preset '{other}' (known: musicslots-soft, musicslots-sigm, musicslots-none, ae, vae, vae:<beta>, \
                         supervised-cnn, gt-echo, ablate-default, ablate-stride, ablate-no-softmax, ablate-implicit, \
                         jsb-single, jsb-multi, jazznet-single, jazznet-multi)"
                    )));
                }
            }
        })
    }
}

impl Preset {
    pub fn apply(self, cfg: &mut RunConfig) {
        match self {
            Preset::Slots(mask) => {
                cfg.family = Family::Musicslots;
                cfg.model = ModelConfig { mask_norm: mask, ..ModelConfig::default() };
                cfg.train = TrainConfig::slots();
            }
            Preset::Ablation { stride, mask, implicit } => {
                cfg.family = Family::Musicslots;
                cfg.model = ModelConfig { encoder_stride: stride, mask_norm: mask, implicit_diff: implicit, ..ModelConfig::default() };
                cfg.train = TrainConfig::slots();
            }
            Preset::Ae => {
                cfg.family = Family::Baseline;
                cfg.baseline = BaselineConfig::ae();
                cfg.train = TrainConfig::autoencoder();
            }
            Preset::Vae(beta) => {
                cfg.family = Family::Baseline;
                cfg.baseline = BaselineConfig::vae(beta);
                cfg.train = TrainConfig::autoencoder();
            }
            Preset::SupervisedCnn => {
                cfg.family = Family::Baseline;
                cfg.baseline = BaselineConfig { kind: BaselineKind::SupervisedCnn, ..BaselineConfig::default() };
                cfg.train = TrainConfig::probe();
            }
            Preset::GtEcho => cfg.family = Family::GtEcho,
            Preset::Dataset(d) => cfg.build = d.config(),
        }
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl RunConfig {
    /// Builds a configuration from optional TOML text and an optional preset
    /// name. The preset (from the argument, else the `preset` key) supplies
    /// defaults; keys in the text override them. Unknown keys are rejected.
    pub fn resolve(text: Option<&str>, preset: Option<&str>) -> Result<Self> {
        let user: toml::Table = match text {
            Some(t) => toml::from_str(t).map_err(|e| Error::config(format!("config: {e}")))?,
            None => toml::Table::new(),
        };
        let name = preset
            .map(str::to_string)
            .or_else(|| user.get("preset").and_then(|v| v.as_str()).map(str::to_string));
        let mut base = RunConfig::default();
        if let Some(n) = &name {
            Preset::from_str(n)?.apply(&mut base);
            base.preset = Some(n.clone());
        }
        let mut table = toml::Table::try_from(&base).map_err(|e| Error::config(format!("config: {e}")))?;
        merge(&mut table, user);
        if let Some(n) = &name {
            table.insert("preset".into(), toml::Value::String(n.clone()));
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: Option<&std::path::Path>, preset: Option<&str>) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::resolve(Some(&text), preset)
            }
            None => Self::resolve(None, preset),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::config("seeds must be distinct"));
        }
        self.model.validate()?;
        self.train.validate()?;
        self.probe.validate()?;
        self.build.validate()?;
        if self.family == Family::Baseline {
            let mut b = self.baseline.clone();
            // filled from the dataset's label space at run time
            if b.kind == BaselineKind::SupervisedCnn && b.output_size == 0 {
                b.output_size = 1;
            }
            b.validate()?;
        }
        for s in &self.eval.splits {
            crate::chordset::SplitName::from_str(s)?;
        }
        if self.viz.scale == 0 {
            return Err(Error::config("viz.scale must be positive"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("config: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_set_the_right_knobs() {
        let c = RunConfig::resolve(None, Some("musicslots-sigm")).unwrap();
        assert_eq!(c.model.mask_norm, MaskNorm::Sigmoid);
        assert_eq!(c.train.warmup_steps, 10_000);
        let c = RunConfig::resolve(None, Some("ablate-default")).unwrap();
        assert_eq!(c.model.encoder_stride, (1, 1));
        assert!(!c.model.implicit_diff);
        let c = RunConfig::resolve(None, Some("vae:0.5")).unwrap();
        assert_eq!(c.family, Family::Baseline);
        assert_eq!(c.baseline.beta, 0.5);
        assert_eq!(c.train.decay_steps, Some(100_000));
        let c = RunConfig::resolve(None, Some("jazznet-multi")).unwrap();
        assert_eq!(c.build.assignments_per_chord, crate::chordset::AssignmentBudget::All);
        assert!(RunConfig::resolve(None, Some("resnet")).is_err());
        assert_eq!(ABLATION_LADDER.len(), 5);
        for (_, p) in ABLATION_LADDER {
            assert!(matches!(Preset::from_str(p).unwrap(), Preset::Slots(_) | Preset::Ablation { .. }));
        }
    }

    #[test]
    fn user_keys_override_preset() {
        let text = "preset = \"musicslots-none\"\nseeds = [1, 2]\n[train]\nsteps = 10\n[model]\nnum_slots = 5\n";
        let c = RunConfig::resolve(Some(text), None).unwrap();
        assert_eq!(c.model.mask_norm, MaskNorm::None);
        assert_eq!(c.model.num_slots, 5);
        assert_eq!(c.train.steps, 10);
        assert_eq!(c.train.max_lr, 1e-4);
        assert_eq!(c.seeds, vec![1, 2]);
        // an explicit preset argument wins over the key
        let c = RunConfig::resolve(Some(text), Some("musicslots-soft")).unwrap();
        assert_eq!(c.model.mask_norm, MaskNorm::Softmax);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["bogus = 1\n", "[model]\nslots = 3\n", "[train]\nlearning_rate = 0.1\n", "[build]\nratio = 1\n"] {
            let e = RunConfig::resolve(Some(text), None).unwrap_err();
            assert!(matches!(e, Error::Config(_)), "{text}: {e}");
        }
        assert!(RunConfig::resolve(Some("seeds = []\n"), None).is_err());
        assert!(RunConfig::resolve(Some("[model]\niterations = 0\n"), None).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::resolve(None, Some("jsb-multi")).unwrap();
        let back = RunConfig::resolve(Some(&c.to_toml().unwrap()), None).unwrap();
        assert_eq!(back, c);
    }
}
