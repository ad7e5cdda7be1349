//! Reverse-transition models p^{t-1}(x_{t-1}|x_t, c).
//!
//! Two implementations share one surface: an exact tabular autoregressive
//! model (cheap, enumerable, used by the oracles) and a trainable
//! encoder-decoder sequence model whose encoder reads the coarser grid
//! bidirectionally while the decoder generates the finer grid left to
//! right, cross-attending to the encoder output.

pub mod decode;
pub mod seq2seq;
pub mod tabular;

pub use decode::DecodeState;
pub use seq2seq::{Seq2SeqDenoiser, TapeBinding};
pub use tabular::TabularAR;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::Tensor;
use crate::vq::TokenGrid;

/// Architecture of a [`Seq2SeqDenoiser`].
///
/// `ff_enc`/`ff_dec` are the feed-forward hidden widths. With
/// `ff_enc = ff_dec + 2·width` an encoder layer has exactly the same
/// parameter count (and per-token cost) as a decoder layer, which makes
/// equal-parameter layer-ratio studies possible.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DenoiserConfig {
    /// Token vocabulary (codebook size).
    pub k: usize,
    /// Sequence length N = h·w.
    pub n: usize,
    /// Condition vocabulary size; 0 for unconditional models.
    pub cond_vocab: usize,
    /// Number of condition tokens prepended to the source.
    pub cond_len: usize,
    pub width: usize,
    pub heads: usize,
    pub n_enc: usize,
    pub n_dec: usize,
    pub ff_enc: usize,
    pub ff_dec: usize,
}

impl DenoiserConfig {
    /// Unconditional config with the conventional 4x feed-forward width.
    pub fn basic(k: usize, n: usize, width: usize, heads: usize, n_enc: usize, n_dec: usize) -> Self {
        DenoiserConfig {
            k,
            n,
            cond_vocab: 0,
            cond_len: 0,
            width,
            heads,
            n_enc,
            n_dec,
            ff_enc: 4 * width,
            ff_dec: 4 * width,
        }
    }

    /// Like [`basic`](Self::basic) but with encoder layers widened so that
    /// every layer (encoder or decoder) carries identical parameters:
    /// configs with the same `n_enc + n_dec` then have equal totals.
    pub fn layer_balanced(
        k: usize,
        n: usize,
        width: usize,
        heads: usize,
        n_enc: usize,
        n_dec: usize,
    ) -> Self {
        let mut cfg = Self::basic(k, n, width, heads, n_enc, n_dec);
        cfg.ff_enc = cfg.ff_dec + 2 * width;
        cfg
    }

    pub fn with_condition(mut self, cond_vocab: usize, cond_len: usize) -> Self {
        self.cond_vocab = cond_vocab;
        self.cond_len = cond_len;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::config(format!("vocabulary K={} must be >= 2", self.k)));
        }
        if self.n == 0 {
            return Err(Error::config("sequence length must be positive"));
        }
        if self.width == 0 || self.heads == 0 || self.width % self.heads != 0 {
            return Err(Error::config(format!(
                "width {} must be a positive multiple of heads {}",
                self.width, self.heads
            )));
        }
        if self.n_dec < 1 {
            return Err(Error::config("at least one decoder layer is required"));
        }
        if (self.cond_vocab == 0) != (self.cond_len == 0) {
            return Err(Error::config(
                "condition vocabulary and condition length must be zero together",
            ));
        }
        Ok(())
    }

    /// Source sequence length including prepended condition tokens.
    pub fn src_len(&self) -> usize {
        self.cond_len + self.n
    }

    /// Begin-of-sequence token id in the target vocabulary.
    pub fn bos(&self) -> usize {
        self.k
    }
}

/// Scale temperature into a categorical, `t = 0` meaning greedy argmax
/// (ties to the lowest index).
pub fn apply_temperature(probs: &[f64], temperature: f64) -> Vec<f64> {
    if temperature <= 0.0 {
        let mut best = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = i;
            }
        }
        let mut out = vec![0.0; probs.len()];
        out[best] = 1.0;
        return out;
    }
    if (temperature - 1.0).abs() < 1e-15 {
        return probs.to_vec();
    }
    let powed: Vec<f64> = probs.iter().map(|&p| p.max(0.0).powf(1.0 / temperature)).collect();
    let sum: f64 = powed.iter().sum();
    if sum <= 0.0 {
        return vec![1.0 / probs.len() as f64; probs.len()];
    }
    powed.iter().map(|&p| p / sum).collect()
}

/// A reverse model for one scale: exact tabular or neural.
pub enum ScaleModel {
    Tabular(TabularAR),
    Neural(Seq2SeqDenoiser),
}

impl ScaleModel {
    pub fn k(&self) -> usize {
        match self {
            ScaleModel::Tabular(m) => m.k,
            ScaleModel::Neural(m) => m.config.k,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            ScaleModel::Tabular(m) => m.n,
            ScaleModel::Neural(m) => m.config.n,
        }
    }

    /// Sample a full grid left to right. `force[i] = Some(tok)` pins the
    /// output at position i to `tok`, which then feeds later steps' context
    /// exactly like a sampled token.
    pub fn sample_forced(
        &self,
        source: &TokenGrid,
        cond: Option<usize>,
        temperature: f64,
        force: Option<&[Option<usize>]>,
        rng: &mut impl Rng,
    ) -> Result<TokenGrid> {
        if let Some(f) = force {
            if f.len() != self.n() {
                return Err(Error::dim(format!(
                    "force vector length {} vs N={}",
                    f.len(),
                    self.n()
                )));
            }
        }
        let n = self.n();
        let mut out: Vec<usize> = Vec::with_capacity(n);
        match self {
            ScaleModel::Tabular(m) => {
                for i in 0..n {
                    let tok = match force.and_then(|f| f[i]) {
                        Some(t) => t,
                        None => {
                            let probs = m.step_probs(source, cond, &out)?;
                            let probs = apply_temperature(&probs, temperature);
                            crate::diffusion::sample_categorical(&probs, rng)
                        }
                    };
                    out.push(tok);
                }
            }
            ScaleModel::Neural(m) => {
                let mut state = DecodeState::new(m, source, cond)?;
                let mut prev = m.config.bos();
                for i in 0..n {
                    let logits = state.next_logits(prev)?;
                    let tok = match force.and_then(|f| f[i]) {
                        Some(t) => t,
                        None => {
                            let probs = softmax_logits(&logits);
                            let probs = apply_temperature(&probs, temperature);
                            crate::diffusion::sample_categorical(&probs, rng)
                        }
                    };
                    out.push(tok);
                    prev = tok;
                }
            }
        }
        Ok(TokenGrid::from_tokens_unchecked(source.h, source.w, out))
    }

    pub fn sample(
        &self,
        source: &TokenGrid,
        cond: Option<usize>,
        temperature: f64,
        rng: &mut impl Rng,
    ) -> Result<TokenGrid> {
        self.sample_forced(source, cond, temperature, None, rng)
    }

    /// Teacher-forced log-probabilities, one row per position.
    pub fn log_probs(
        &self,
        source: &TokenGrid,
        cond: Option<usize>,
        target: &[usize],
    ) -> Result<Tensor> {
        match self {
            ScaleModel::Tabular(m) => m.log_probs(source, cond, target),
            ScaleModel::Neural(m) => {
                let logits = m.forward_logits(source, cond, &m.shift_target(target)?)?;
                crate::numeric::tensor::log_softmax_rows(&logits)
            }
        }
    }

    /// Σᵢ −log p(targetᵢ | target_{<i}, source, cond), in nats.
    pub fn nll(&self, source: &TokenGrid, cond: Option<usize>, target: &[usize]) -> Result<f64> {
        let lp = self.log_probs(source, cond, target)?;
        let (_, k) = lp.dims2()?;
        let mut total = 0.0;
        for (i, &t) in target.iter().enumerate() {
            if t >= k {
                return Err(Error::Index(format!("nll: target {} >= K={}", t, k)));
            }
            total -= lp.data()[i * k + t];
        }
        Ok(total)
    }
}

pub(crate) fn softmax_logits(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}
