use candle_core::{DType, Device, Tensor, D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::nn::{log10, sigmoid, softmax_last, sorted_sum_last, Conv2d, ConvTranspose2d, GruCell, LayerNorm, Linear, Mlp, ParamStore};
use crate::dsp::{DEFAULT_DB_FLOOR, POWER_EPS};
use crate::error::{Error, Result};

/// How decoder mask logits become compositing weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskNorm {
    /// Softmax across slots per cell.
    Softmax,
    /// Independent logistic per slot and cell.
    Sigmoid,
    /// No masks: slot powers are summed directly.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub num_slots: usize,
    pub iterations: usize,
    pub slot_dim: usize,
    pub feature_dim: usize,
    pub mlp_hidden: usize,
    pub in_channels: usize,
    /// `(freq, time)` input extent.
    pub input_shape: (usize, usize),
    pub encoder_layers: usize,
    pub encoder_channels: usize,
    /// `(freq, time)` stride of every encoder convolution.
    pub encoder_stride: (usize, usize),
    pub decoder_channels: usize,
    /// Number of stride-2 transposed convolutions in the decoder.
    pub decoder_upsamples: usize,
    pub mask_norm: MaskNorm,
    pub implicit_diff: bool,
    pub attn_eps: f64,
    pub ln_eps: f64,
    pub power_eps: f64,
    pub db_floor: f64,
    pub reference_power: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_slots: 7,
            iterations: 3,
            slot_dim: 128,
            feature_dim: 128,
            mlp_hidden: 128,
            in_channels: 1,
            input_shape: (128, 32),
            encoder_layers: 4,
            encoder_channels: 128,
            encoder_stride: (1, 2),
            decoder_channels: 128,
            decoder_upsamples: 4,
            mask_norm: MaskNorm::Softmax,
            implicit_diff: true,
            attn_eps: 1e-8,
            ln_eps: 1e-5,
            power_eps: POWER_EPS,
            db_floor: DEFAULT_DB_FLOOR,
            reference_power: 1.0,
        }
    }
}

impl ModelConfig {
    /// The smallest configuration used for gradient checks.
    pub fn tiny() -> Self {
        Self {
            num_slots: 2,
            iterations: 2,
            slot_dim: 8,
            feature_dim: 8,
            mlp_hidden: 8,
            input_shape: (8, 8),
            encoder_layers: 2,
            encoder_channels: 4,
            decoder_channels: 4,
            decoder_upsamples: 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::config(m));
        if self.num_slots == 0 {
            return err("num_slots must be positive".into());
        }
        if self.iterations == 0 {
            return err("iterations must be at least 1".into());
        }
        if self.in_channels != 1 {
            return err("only single-channel spectrograms are supported".into());
        }
        if [self.slot_dim, self.feature_dim, self.mlp_hidden, self.encoder_channels, self.decoder_channels].contains(&0) {
            return err("layer widths must be positive".into());
        }
        let (h, w) = self.input_shape;
        let (sh, sw) = self.encoder_stride;
        if sh == 0 || sw == 0 {
            return err("encoder strides must be positive".into());
        }
        let (fh, fw) = self.feature_grid();
        if fh * sh.pow(self.encoder_layers as u32) != h || fw * sw.pow(self.encoder_layers as u32) != w || fh == 0 || fw == 0 {
            return err(format!(
                "input {h}x{w} is not divisible by stride {sh}x{sw} over {} layers",
                self.encoder_layers
            ));
        }
        let up = 1usize << self.decoder_upsamples;
        if h % up != 0 || w % up != 0 || h / up == 0 || w / up == 0 {
            return err(format!("input {h}x{w} is not divisible by decoder upsampling {up}"));
        }
        if !(self.reference_power > 0.0) {
            return err("reference_power must be positive".into());
        }
        Ok(())
    }

    /// Encoder output extent.
    pub fn feature_grid(&self) -> (usize, usize) {
        let (h, w) = self.input_shape;
        let n = self.encoder_layers as u32;
        (h / self.encoder_stride.0.pow(n), w / self.encoder_stride.1.pow(n))
    }

    pub fn num_features(&self) -> usize {
        let (h, w) = self.feature_grid();
        h * w
    }

    /// Decoder broadcast extent.
    pub fn decoder_grid(&self) -> (usize, usize) {
        let up = 1usize << self.decoder_upsamples;
        (self.input_shape.0 / up, self.input_shape.1 / up)
    }
}

/// `[H, W, 4]` linear ramps toward each of the four borders. An axis of
/// extent 1 contributes zeros.
pub fn build_pos_grid(h: usize, w: usize) -> Vec<f64> {
    let ramp = |i: usize, n: usize| if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
    let mut out = Vec::with_capacity(h * w * 4);
    for y in 0..h {
        for x in 0..w {
            let (fy, fx) = (ramp(y, h), ramp(x, w));
            let (ry, rx) = if h > 1 { (fy, 1.0 - fy) } else { (0.0, 0.0) };
            let (cx, qx) = if w > 1 { (fx, 1.0 - fx) } else { (0.0, 0.0) };
            out.extend_from_slice(&[ry, cx, rx, qx]);
        }
    }
    out
}

/// Learned projection of the positional grid, added to a `[B, C, H, W]` map.
#[derive(Debug, Clone)]
pub struct PositionEmbedding {
    grid: Tensor,
    proj: Linear,
    h: usize,
    w: usize,
}

impl PositionEmbedding {
    pub fn new(ps: &mut ParamStore, name: &str, h: usize, w: usize, channels: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let grid = Tensor::from_vec(build_pos_grid(h, w), (h * w, 4), ps.device())?.to_dtype(ps.dtype())?;
        Ok(Self { grid, proj: Linear::new(ps, name, 4, channels, true, rng)?, h, w })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let c = x.dim(1)?;
        let emb = self.proj.forward(&self.grid)?.t()?.reshape((1, c, self.h, self.w))?;
        Ok(x.broadcast_add(&emb)?)
    }
}

#[derive(Debug, Clone)]
pub struct Encoder {
    convs: Vec<Conv2d>,
    pos: PositionEmbedding,
    norm: LayerNorm,
    mlp: Mlp,
}

impl Encoder {
    pub fn new(ps: &mut ParamStore, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut convs = Vec::new();
        let mut c_in = cfg.in_channels;
        for i in 0..cfg.encoder_layers {
            let c_out = if i + 1 == cfg.encoder_layers { cfg.feature_dim } else { cfg.encoder_channels };
            convs.push(Conv2d::new(ps, &format!("encoder.conv{i}"), c_in, c_out, 5, cfg.encoder_stride, 2, rng)?);
            c_in = c_out;
        }
        let (h, w) = cfg.feature_grid();
        Ok(Self {
            convs,
            pos: PositionEmbedding::new(ps, "encoder.pos", h, w, cfg.feature_dim, rng)?,
            norm: LayerNorm::new(ps, "encoder.norm", cfg.feature_dim, cfg.ln_eps)?,
            mlp: Mlp::new(ps, "encoder.mlp", cfg.feature_dim, cfg.feature_dim, cfg.feature_dim, rng)?,
        })
    }

    /// `[B, 1, H, W]` → `[B, N, D_f]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for c in &self.convs {
            h = c.forward(&h)?.relu()?;
        }
        let h = self.pos.forward(&h)?;
        let (b, c, fh, fw) = h.dims4()?;
        let flat = h.reshape((b, c, fh * fw))?.transpose(1, 2)?.contiguous()?;
        self.mlp.forward(&self.norm.forward(&flat)?)
    }
}

#[derive(Debug, Clone)]
pub struct SlotAttention {
    pub mu: candle_core::Var,
    pub log_sigma: candle_core::Var,
    norm_inputs: LayerNorm,
    norm_slots: LayerNorm,
    norm_mlp: LayerNorm,
    to_q: Linear,
    to_k: Linear,
    to_v: Linear,
    gru: GruCell,
    mlp: Mlp,
    num_slots: usize,
    slot_dim: usize,
    eps: f64,
}

impl SlotAttention {
    pub fn new(ps: &mut ParamStore, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let (k, d) = (cfg.num_slots, cfg.slot_dim);
        let bound = (6.0 / (1 + d) as f64).sqrt();
        Ok(Self {
            mu: ps.uniform("slots.mu", &[k, d], bound, rng)?,
            log_sigma: ps.uniform("slots.log_sigma", &[k, d], bound, rng)?,
            norm_inputs: LayerNorm::new(ps, "slots.norm_inputs", cfg.feature_dim, cfg.ln_eps)?,
            norm_slots: LayerNorm::new(ps, "slots.norm_slots", d, cfg.ln_eps)?,
            norm_mlp: LayerNorm::new(ps, "slots.norm_mlp", d, cfg.ln_eps)?,
            to_q: Linear::new(ps, "slots.to_q", d, d, false, rng)?,
            to_k: Linear::new(ps, "slots.to_k", cfg.feature_dim, d, false, rng)?,
            to_v: Linear::new(ps, "slots.to_v", cfg.feature_dim, d, false, rng)?,
            gru: GruCell::new(ps, "slots.gru", d, d, rng)?,
            mlp: Mlp::new(ps, "slots.mlp", d, cfg.mlp_hidden, d, rng)?,
            num_slots: k,
            slot_dim: d,
            eps: cfg.attn_eps,
        })
    }

    /// `mu + exp(log_sigma) * noise`, noise `[B, K, D_s]`.
    pub fn init_slots(&self, noise: &Tensor) -> Result<Tensor> {
        let sigma = self.log_sigma.as_tensor().exp()?;
        Ok(noise.broadcast_mul(&sigma)?.broadcast_add(self.mu.as_tensor())?)
    }

    /// One refinement step. Returns new slots `[B, K, D]` and the attention
    /// `[B, K, N]` (normalized over slots).
    pub fn step(&self, slots: &Tensor, keys: &Tensor, values: &Tensor) -> Result<(Tensor, Tensor)> {
        let (b, k, d) = slots.dims3()?;
        let n = keys.dim(1)?;
        let q = self.to_q.forward_rowwise(&self.norm_slots.forward(slots)?)?;
        // one product per (batch, slot) keeps every slot's arithmetic identical
        let q = q.reshape((b, k, d, 1))?;
        let kk = keys.unsqueeze(1)?.broadcast_as((b, k, n, d))?.contiguous()?;
        let logits = (kk.broadcast_matmul(&q)?.squeeze(3)? * (1.0 / (d as f64).sqrt()))?; // [B, K, N]
        let attn = softmax_last(&logits.transpose(1, 2)?.contiguous()?)?.transpose(1, 2)?.contiguous()?;
        let weights = attn.broadcast_div(&(attn.sum_keepdim(D::Minus1)? + self.eps)?)?;
        let vv = values.unsqueeze(1)?.broadcast_as((b, k, n, d))?.contiguous()?;
        let updates = weights.unsqueeze(2)?.broadcast_matmul(&vv)?.squeeze(2)?; // [B, K, D]
        let slots = self.gru.forward(&updates, slots)?;
        let slots = (&slots + self.mlp.forward_rowwise(&self.norm_mlp.forward(&slots)?)?)?;
        Ok((slots, attn))
    }

    /// Runs `iterations` steps; with `implicit` one more step is taken from the
    /// detached result so that gradients only flow through that last step.
    pub fn forward(&self, features: &Tensor, noise: &Tensor, iterations: usize, implicit: bool) -> Result<(Tensor, Tensor)> {
        let inputs = self.norm_inputs.forward(features)?;
        let keys = self.to_k.forward(&inputs)?;
        let values = self.to_v.forward(&inputs)?;
        let mut slots = self.init_slots(noise)?;
        let mut attn = None;
        for _ in 0..iterations {
            let (s, a) = self.step(&slots, &keys, &values)?;
            slots = s;
            attn = Some(a);
        }
        if implicit {
            let (s, a) = self.step(&slots.detach(), &keys, &values)?;
            slots = s;
            attn = Some(a);
        }
        Ok((slots, attn.expect("at least one iteration")))
    }

    pub fn num_slots(&self) -> usize {
        self.num_slots
    }

    pub fn slot_dim(&self) -> usize {
        self.slot_dim
    }
}

#[derive(Debug, Clone)]
pub struct Decoder {
    pos: PositionEmbedding,
    ups: Vec<ConvTranspose2d>,
    refine: Conv2d,
    out: Conv2d,
    grid: (usize, usize),
}

impl Decoder {
    pub fn new(ps: &mut ParamStore, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let grid = cfg.decoder_grid();
        let mut ups = Vec::new();
        let mut c_in = cfg.slot_dim;
        for i in 0..cfg.decoder_upsamples {
            ups.push(ConvTranspose2d::new(ps, &format!("decoder.up{i}"), c_in, cfg.decoder_channels, 5, 2, 2, 1, rng)?);
            c_in = cfg.decoder_channels;
        }
        Ok(Self {
            pos: PositionEmbedding::new(ps, "decoder.pos", grid.0, grid.1, cfg.slot_dim, rng)?,
            ups,
            // a stride-1 transposed convolution is a convolution with a flipped kernel
            refine: Conv2d::new(ps, "decoder.refine", c_in, cfg.decoder_channels, 5, (1, 1), 2, rng)?,
            out: Conv2d::new(ps, "decoder.out", cfg.decoder_channels, cfg.in_channels + 1, 3, (1, 1), 1, rng)?,
            grid,
        })
    }

    /// `[M, D_s]` slots → (`[M, H, W]` dB, `[M, H, W]` mask logits).
    pub fn forward(&self, slots: &Tensor) -> Result<(Tensor, Tensor)> {
        let (m, d) = slots.dims2()?;
        let (gh, gw) = self.grid;
        let mut h = slots.reshape((m, d, 1, 1))?.broadcast_as((m, d, gh, gw))?.contiguous()?;
        h = self.pos.forward(&h)?;
        for up in &self.ups {
            h = up.forward(&h)?.relu()?;
        }
        h = self.refine.forward(&h)?.relu()?;
        let out = self.out.forward(&h)?;
        Ok((out.narrow(1, 0, 1)?.squeeze(1)?, out.narrow(1, 1, 1)?.squeeze(1)?))
    }
}

/// Everything a forward pass produces. Spatial tensors are `[B, K, H, W]`
/// unless noted.
#[derive(Debug, Clone)]
pub struct ModelOutput {
    /// `[B, H, W]`.
    pub pred_chord_db: Tensor,
    pub slot_specs_db: Tensor,
    pub mask_logits: Tensor,
    pub masks_norm: Tensor,
    /// `[B, K, D_s]`.
    pub slots: Tensor,
    /// `[B, K, N]`, from the final refinement step.
    pub attention: Tensor,
}

/// Combines slot spectrograms in the power domain.
///
/// `specs_db` and `logits` are `[B, K, H, W]`. Returns
/// (`[B, H, W]` prediction in dB, `[B, K, H, W]` normalized masks).
pub fn composite(specs_db: &Tensor, logits: &Tensor, mode: MaskNorm, cfg: &ModelConfig) -> Result<(Tensor, Tensor)> {
    let masks = match mode {
        MaskNorm::Softmax => {
            softmax_last(&logits.permute((0, 2, 3, 1))?.contiguous()?)?.permute((0, 3, 1, 2))?.contiguous()?
        }
        MaskNorm::Sigmoid => sigmoid(logits)?,
        MaskNorm::None => specs_db.ones_like()?,
    };
    let power = db_to_power_t(specs_db)?;
    let weighted = (power * &masks)?;
    let total = sorted_sum_last(&weighted.permute((0, 2, 3, 1))?.contiguous()?)?.squeeze(3)?;
    let pred = power_to_db_t(&total, cfg)?;
    Ok((pred, masks))
}

pub fn db_to_power_t(db: &Tensor) -> Result<Tensor> {
    Ok((db * (std::f64::consts::LN_10 / 10.0))?.exp()?)
}

/// `10 log10(max(p, eps) / ref)`, clamped at the floor.
pub fn power_to_db_t(p: &Tensor, cfg: &ModelConfig) -> Result<Tensor> {
    let guarded = p.maximum(cfg.power_eps)?;
    let db = (log10(&(guarded / cfg.reference_power)?)? * 10.0)?;
    Ok(db.maximum(cfg.db_floor)?)
}

/// The slot model: encoder, slot attention, broadcast decoder and compositing.
#[derive(Debug, Clone)]
pub struct MusicSlots {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub encoder: Encoder,
    pub slot_attention: SlotAttention,
    pub decoder: Decoder,
}

impl MusicSlots {
    pub fn new(config: ModelConfig, dtype: DType, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamStore::new(dtype);
        let encoder = Encoder::new(&mut ps, &config, &mut rng)?;
        let slot_attention = SlotAttention::new(&mut ps, &config, &mut rng)?;
        let decoder = Decoder::new(&mut ps, &config, &mut rng)?;
        Ok(Self { config, params: ps, encoder, slot_attention, decoder })
    }

    pub fn dtype(&self) -> DType {
        self.params.dtype()
    }

    pub fn device(&self) -> &Device {
        self.params.device()
    }

    /// Standard-normal slot noise `[B, K, D_s]`, drawn batch-major.
    pub fn sample_noise(&self, batch: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        let n = batch * self.config.num_slots * self.config.slot_dim;
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        Ok(Tensor::from_vec(v, (batch, self.config.num_slots, self.config.slot_dim), self.device())?.to_dtype(self.dtype())?)
    }

    /// `x`: `[B, H, W]` or `[B, 1, H, W]` dB spectrograms.
    pub fn forward_with_noise(&self, x: &Tensor, noise: &Tensor) -> Result<ModelOutput> {
        let x = self.check_input(x)?;
        let b = x.dim(0)?;
        let (h, w) = self.config.input_shape;
        let k = self.config.num_slots;
        let features = self.encoder.forward(&x)?;
        let (slots, attention) =
            self.slot_attention
                .forward(&features, noise, self.config.iterations, self.config.implicit_diff)?;
        let (specs, logits) = self.decoder.forward(&slots.reshape((b * k, self.config.slot_dim))?)?;
        let specs = specs.reshape((b, k, h, w))?;
        let logits = logits.reshape((b, k, h, w))?;
        let (pred, masks) = composite(&specs, &logits, self.config.mask_norm, &self.config)?;
        Ok(ModelOutput {
            pred_chord_db: pred,
            slot_specs_db: specs,
            mask_logits: logits,
            masks_norm: masks,
            slots,
            attention,
        })
    }

    pub fn forward(&self, x: &Tensor, rng: &mut ChaCha8Rng) -> Result<ModelOutput> {
        let b = x.dim(0)?;
        let noise = self.sample_noise(b, rng)?;
        self.forward_with_noise(x, &noise)
    }

    fn check_input(&self, x: &Tensor) -> Result<Tensor> {
        let (h, w) = self.config.input_shape;
        let x = match x.rank() {
            3 => x.unsqueeze(1)?,
            4 => x.clone(),
            r => return Err(Error::Shape { expected: "[B, 1, H, W]".into(), actual: format!("rank {r}") }),
        };
        let (_, c, xh, xw) = x.dims4()?;
        if (c, xh, xw) != (1, h, w) {
            return Err(Error::Shape { expected: format!("[B, 1, {h}, {w}]"), actual: format!("{:?}", x.dims()) });
        }
        Ok(x.to_dtype(self.dtype())?)
    }

    /// Per-slot contribution to the composite, `10 log10(p_k * m_k)` clamped
    /// at the floor. With no masks this is the slot spectrogram itself.
    pub fn slot_contributions_db(&self, out: &ModelOutput) -> Result<Tensor> {
        let p = (db_to_power_t(&out.slot_specs_db)? * &out.masks_norm)?;
        power_to_db_t(&p, &self.config)
    }
}

/// Mean squared error over every cell.
pub fn reconstruction_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    let target = target.reshape(pred.dims())?.to_dtype(pred.dtype())?;
    Ok((pred - target)?.sqr()?.mean_all()?)
}
