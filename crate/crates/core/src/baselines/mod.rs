//! Non-slot baselines: autoencoder, VAE and the supervised CNN.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::chordset::ExampleRecord;
use crate::error::{Error, Result};
use crate::evalkit::{ChordPrediction, Decomposer, Decomposition, Probe};
use crate::slotcore::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, KEY_CONFIG, KEY_KIND};
use crate::slotcore::nn::{sigmoid, Conv2d, ConvTranspose2d, Linear, ParamStore};
use crate::slotcore::stack_chords;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Ae,
    Vae,
    SupervisedCnn,
}

pub const BETA_PRESETS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub latent_dim: usize,
    /// KL weight; VAE only.
    pub beta: f64,
    pub input_shape: (usize, usize),
    pub layers: usize,
    pub channels: usize,
    /// Hidden width of the supervised head.
    pub hidden: usize,
    /// Multi-hot width of the supervised head, `N_inst * N_pitch`.
    pub output_size: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            kind: BaselineKind::Ae,
            latent_dim: 128,
            beta: 1.0,
            input_shape: (128, 32),
            layers: 4,
            channels: 128,
            hidden: 128,
            output_size: 0,
        }
    }
}

impl BaselineConfig {
    pub fn ae() -> Self {
        Self::default()
    }

    pub fn vae(beta: f64) -> Self {
        Self { kind: BaselineKind::Vae, beta, ..Self::default() }
    }

    pub fn supervised(output_size: usize) -> Self {
        Self { kind: BaselineKind::SupervisedCnn, output_size, ..Self::default() }
    }

    /// Spatial extent after the encoder.
    pub fn bottleneck(&self) -> (usize, usize) {
        let f = 1usize << self.layers;
        (self.input_shape.0 / f, self.input_shape.1 / f)
    }

    pub fn flat_dim(&self) -> usize {
        let (h, w) = self.bottleneck();
        h * w * self.channels
    }

    pub fn validate(&self) -> Result<()> {
        let f = 1usize << self.layers;
        let (h, w) = self.input_shape;
        if self.layers == 0 || h % f != 0 || w % f != 0 || h < f || w < f {
            return Err(Error::config(format!("input {h}x{w} is not divisible by 2^{}", self.layers)));
        }
        if self.latent_dim == 0 || self.channels == 0 || self.hidden == 0 {
            return Err(Error::config("layer widths must be positive"));
        }
        match self.kind {
            BaselineKind::Vae if !(self.beta > 0.0) => Err(Error::config("beta must be positive for a VAE")),
            BaselineKind::SupervisedCnn if self.output_size == 0 => {
                Err(Error::config("supervised CNN needs a positive output_size"))
            }
            _ => Ok(()),
        }
    }
}

/// Stride-2 convolution stack followed by a channel-major flatten.
#[derive(Debug, Clone)]
pub struct ConvEncoder {
    convs: Vec<Conv2d>,
}

impl ConvEncoder {
    pub fn new(ps: &mut ParamStore, cfg: &BaselineConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut convs = Vec::new();
        let mut c_in = 1;
        for i in 0..cfg.layers {
            convs.push(Conv2d::new(ps, &format!("encoder.conv{i}"), c_in, cfg.channels, 5, (2, 2), 2, rng)?);
            c_in = cfg.channels;
        }
        Ok(Self { convs })
    }

    /// `[B, 1, H, W]` → `[B, C * h * w]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for c in &self.convs {
            h = c.forward(&h)?.relu()?;
        }
        Ok(h.flatten_from(1)?)
    }
}

/// Mirror of [`ConvEncoder`]: linear, reshape, stride-2 transposed
/// convolutions, then two stride-1 layers down to one channel.
#[derive(Debug, Clone)]
pub struct DeconvDecoder {
    fc: Linear,
    ups: Vec<ConvTranspose2d>,
    refine: Conv2d,
    out: Conv2d,
    channels: usize,
    grid: (usize, usize),
}

impl DeconvDecoder {
    pub fn new(ps: &mut ParamStore, cfg: &BaselineConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let ups = (0..cfg.layers)
            .map(|i| ConvTranspose2d::new(ps, &format!("decoder.up{i}"), cfg.channels, cfg.channels, 5, 2, 2, 1, rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            fc: Linear::new(ps, "decoder.fc", cfg.latent_dim, cfg.flat_dim(), true, rng)?,
            ups,
            refine: Conv2d::new(ps, "decoder.refine", cfg.channels, cfg.channels, 5, (1, 1), 2, rng)?,
            out: Conv2d::new(ps, "decoder.out", cfg.channels, 1, 3, (1, 1), 1, rng)?,
            channels: cfg.channels,
            grid: cfg.bottleneck(),
        })
    }

    /// `[B, latent]` → `[B, H, W]`.
    pub fn forward(&self, z: &Tensor) -> Result<Tensor> {
        let b = z.dim(0)?;
        let mut h = self.fc.forward(z)?.reshape((b, self.channels, self.grid.0, self.grid.1))?;
        for up in &self.ups {
            h = up.forward(&h)?.relu()?;
        }
        h = self.refine.forward(&h)?.relu()?;
        Ok(self.out.forward(&h)?.squeeze(1)?)
    }
}

#[derive(Debug, Clone)]
enum Head {
    Ae { to_latent: Linear, decoder: DeconvDecoder },
    Vae { to_mu: Linear, to_logvar: Linear, decoder: DeconvDecoder },
    Supervised { hidden: Linear, out: Linear },
}

#[derive(Debug, Clone)]
pub struct BaselineOutput {
    /// `[B, H, W]` reconstruction (autoencoders).
    pub recon: Option<Tensor>,
    /// `[B, latent]`: the code for the AE, the posterior mean for the VAE.
    pub mu: Tensor,
    pub logvar: Option<Tensor>,
    /// Sampled code (VAE) or `mu`.
    pub z: Tensor,
    /// `[B, N_inst * N_pitch]` pre-sigmoid scores (supervised CNN).
    pub logits: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct Baseline {
    pub config: BaselineConfig,
    pub params: ParamStore,
    encoder: ConvEncoder,
    head: Head,
}

impl Baseline {
    pub const KIND: &'static str = "baseline";

    pub fn new(config: BaselineConfig, dtype: DType, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamStore::new(dtype);
        let encoder = ConvEncoder::new(&mut ps, &config, &mut rng)?;
        let flat = config.flat_dim();
        let head = match config.kind {
            BaselineKind::Ae => Head::Ae {
                to_latent: Linear::new(&mut ps, "latent", flat, config.latent_dim, true, &mut rng)?,
                decoder: DeconvDecoder::new(&mut ps, &config, &mut rng)?,
            },
            BaselineKind::Vae => Head::Vae {
                to_mu: Linear::new(&mut ps, "mu", flat, config.latent_dim, true, &mut rng)?,
                to_logvar: Linear::new(&mut ps, "logvar", flat, config.latent_dim, true, &mut rng)?,
                decoder: DeconvDecoder::new(&mut ps, &config, &mut rng)?,
            },
            BaselineKind::SupervisedCnn => Head::Supervised {
                hidden: Linear::new(&mut ps, "head.hidden", flat, config.hidden, true, &mut rng)?,
                out: Linear::new(&mut ps, "head.out", config.hidden, config.output_size, true, &mut rng)?,
            },
        };
        Ok(Self { config, params: ps, encoder, head })
    }

    pub fn dtype(&self) -> DType {
        self.params.dtype()
    }

    fn check_input(&self, x: &Tensor) -> Result<Tensor> {
        let (h, w) = self.config.input_shape;
        let x = if x.rank() == 3 { x.unsqueeze(1)? } else { x.clone() };
        match x.dims() {
            [_, 1, xh, xw] if (*xh, *xw) == (h, w) => Ok(x.to_dtype(self.dtype())?),
            d => Err(Error::Shape { expected: format!("[B, 1, {h}, {w}]"), actual: format!("{d:?}") }),
        }
    }

    /// Noise for the reparameterization, `[B, latent]`.
    pub fn sample_noise(&self, batch: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        let n = batch * self.config.latent_dim;
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        Ok(Tensor::from_vec(v, (batch, self.config.latent_dim), &Device::Cpu)?.to_dtype(self.dtype())?)
    }

    /// With `noise = None` the VAE decodes its posterior mean.
    pub fn forward_with_noise(&self, x: &Tensor, noise: Option<&Tensor>) -> Result<BaselineOutput> {
        let x = self.check_input(x)?;
        let flat = self.encoder.forward(&x)?;
        Ok(match &self.head {
            Head::Ae { to_latent, decoder } => {
                let z = to_latent.forward(&flat)?;
                BaselineOutput { recon: Some(decoder.forward(&z)?), mu: z.clone(), logvar: None, z, logits: None }
            }
            Head::Vae { to_mu, to_logvar, decoder } => {
                let mu = to_mu.forward(&flat)?;
                let logvar = to_logvar.forward(&flat)?;
                let z = match noise {
                    Some(eps) => (&mu + (logvar.clone() * 0.5)?.exp()?.mul(eps)?)?,
                    None => mu.clone(),
                };
                BaselineOutput { recon: Some(decoder.forward(&z)?), mu, logvar: Some(logvar), z, logits: None }
            }
            Head::Supervised { hidden, out } => {
                let h = hidden.forward(&flat)?.relu()?;
                let logits = out.forward(&h)?;
                BaselineOutput { recon: None, mu: h.clone(), logvar: None, z: h, logits: Some(logits) }
            }
        })
    }

    pub fn forward(&self, x: &Tensor, rng: &mut ChaCha8Rng) -> Result<BaselineOutput> {
        let noise = match self.config.kind {
            BaselineKind::Vae => Some(self.sample_noise(x.dim(0)?, rng)?),
            _ => None,
        };
        self.forward_with_noise(x, noise.as_ref())
    }

    /// Training objective. `targets` is the `[B, N_inst * N_pitch]` multi-hot
    /// matrix for the supervised CNN and ignored otherwise.
    pub fn loss(&self, out: &BaselineOutput, x: &Tensor, targets: Option<&Tensor>) -> Result<Tensor> {
        match self.config.kind {
            BaselineKind::Ae => {
                let recon = out.recon.as_ref().expect("autoencoder output");
                crate::slotcore::reconstruction_loss(recon, x)
            }
            BaselineKind::Vae => {
                let recon = out.recon.as_ref().expect("autoencoder output");
                let logvar = out.logvar.as_ref().expect("vae output");
                elbo_loss(x, recon, &out.mu, logvar, self.config.beta)
            }
            BaselineKind::SupervisedCnn => {
                let t = targets.ok_or_else(|| Error::invalid("supervised CNN needs multi-hot targets"))?;
                bce_with_logits(out.logits.as_ref().expect("supervised output"), t)
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut m = HashMap::new();
        m.insert(KEY_KIND.into(), Self::KIND.into());
        m.insert(KEY_CONFIG.into(), serde_json::to_string(&self.config)?);
        save_checkpoint(path, &self.params.tensors(), m)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind()? != Self::KIND {
            return Err(Error::invalid(format!("checkpoint holds a '{}' model", ck.kind()?)));
        }
        let config: BaselineConfig = serde_json::from_str(ck.meta(KEY_CONFIG)?)?;
        let dtype = ck.tensors.values().next().map(|t| t.dtype()).unwrap_or(DType::F32);
        let m = Self::new(config, dtype, 0)?;
        m.params.load(&ck.tensors)?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&load_checkpoint(path)?)
    }
}

/// `0.5 * sum(mu^2 + exp(logvar) - 1 - logvar)` per example, averaged over the batch.
pub fn kl_divergence(mu: &Tensor, logvar: &Tensor) -> Result<Tensor> {
    let per = ((mu.sqr()? + logvar.exp()?)? - 1.0)?.sub(logvar)?;
    Ok((per.sum(1)? * 0.5)?.mean_all()?)
}

pub fn elbo_loss(x: &Tensor, recon: &Tensor, mu: &Tensor, logvar: &Tensor, beta: f64) -> Result<Tensor> {
    let rec = crate::slotcore::reconstruction_loss(recon, x)?;
    let kl = kl_divergence(mu, logvar)?;
    let kl_value = kl.to_dtype(DType::F64)?.to_vec0::<f64>()?;
    if !kl_value.is_finite() {
        return Err(Error::Numerical { step: 0, message: format!("non-finite KL term {kl_value}") });
    }
    Ok((rec + (kl * beta)?)?)
}

/// Mean binary cross-entropy on logits, `max(l,0) - l*y + log(1 + exp(-|l|))`.
pub fn bce_with_logits(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    if logits.dims() != targets.dims() {
        return Err(Error::Shape { expected: format!("{:?}", logits.dims()), actual: format!("{:?}", targets.dims()) });
    }
    let y = targets.to_dtype(logits.dtype())?;
    let pos = logits.relu()?;
    let soft = ((logits.abs()?.neg()?.exp()? + 1.0)?).log()?;
    Ok(((pos - logits.mul(&y)?)? + soft)?.mean_all()?)
}

/// Evaluation wrapper exposing the chord latent, or the sigmoid scores for
/// the supervised CNN.
pub struct BaselineDecomposer {
    pub model: Baseline,
    pub label: String,
    pub chunk: usize,
    rng: Mutex<ChaCha8Rng>,
}

impl BaselineDecomposer {
    pub fn new(model: Baseline, label: impl Into<String>, seed: u64) -> Self {
        Self { model, label: label.into(), chunk: 16, rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)) }
    }
}

impl Decomposer for BaselineDecomposer {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn decompose(&self, batch: &[ExampleRecord]) -> Result<Vec<Decomposition>> {
        let _guard = self.rng.lock().expect("rng lock");
        let mut out = Vec::with_capacity(batch.len());
        for part in batch.chunks(self.chunk.max(1)) {
            let x = stack_chords(part, self.model.dtype())?;
            // probes read the posterior mean, so no noise is drawn
            let o = self.model.forward_with_noise(&x, None)?;
            let latent = match &o.logits {
                Some(l) => sigmoid(l)?,
                None => o.mu.clone(),
            };
            for row in latent.to_dtype(DType::F32)?.to_vec2::<f32>()? {
                out.push(Decomposition { slot_specs_db: Vec::new(), slot_vectors: Vec::new(), latent: Some(row) });
            }
        }
        Ok(out)
    }
}

/// Reads the latent directly as multi-hot probabilities (supervised CNN).
pub struct DirectMultiHot;

impl Probe for DirectMultiHot {
    fn predict(&self, d: &Decomposition, _matched: &[usize]) -> Result<ChordPrediction> {
        d.latent
            .clone()
            .map(ChordPrediction::MultiHot)
            .ok_or_else(|| Error::invalid("decomposition has no latent"))
    }
}
