//! Trainable encoder-decoder sequence model for one reverse transition.
//!
//! Pre-norm transformer: the encoder reads the coarser grid (plus any
//! prepended condition tokens) with unmasked self-attention; the decoder
//! generates the finer grid under a causal mask, cross-attending to the
//! encoder output. The output projection starts at zero so an untrained
//! model is exactly uniform over the vocabulary.
//!
//! There is a single forward implementation, written against the tape.
//! Inference paths run it with constant leaves (no gradients); training
//! attaches parameters as trainable leaves. The incremental decoder in
//! [`decode`](super::decode) is a separate cached implementation verified
//! against this one to 1e-9.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numeric::{NodeId, Tape, Tensor};
use crate::vq::TokenGrid;

use super::DenoiserConfig;

const CKPT_MAGIC: &[u8; 8] = b"GCSEQ001";
pub(crate) const LN_EPS: f64 = 1e-6;
pub(crate) const MASK_NEG: f64 = -1e30;
const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug)]
pub(crate) struct AttnIdx {
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct FfIdx {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LnIdx {
    pub gamma: usize,
    pub beta: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct EncLayerIdx {
    pub ln1: LnIdx,
    pub attn: AttnIdx,
    pub ln2: LnIdx,
    pub ff: FfIdx,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct DecLayerIdx {
    pub ln1: LnIdx,
    pub self_attn: AttnIdx,
    pub ln2: LnIdx,
    pub cross_attn: AttnIdx,
    pub ln3: LnIdx,
    pub ff: FfIdx,
}

/// Indices of every named parameter inside the flat parameter vector.
/// The vector order is the checkpoint declaration order.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub src_tok: usize,
    pub tgt_tok: usize,
    pub src_pos: usize,
    pub tgt_pos: usize,
    pub enc: Vec<EncLayerIdx>,
    pub enc_ln: LnIdx,
    pub dec: Vec<DecLayerIdx>,
    pub dec_ln: LnIdx,
    pub out_w: usize,
    pub out_b: usize,
}

#[derive(Clone, Copy)]
enum Init {
    Normal,
    Ones,
    Zeros,
}

struct LayoutBuilder {
    shapes: Vec<(Vec<usize>, Init)>,
}

impl LayoutBuilder {
    fn push(&mut self, shape: Vec<usize>, init: Init) -> usize {
        self.shapes.push((shape, init));
        self.shapes.len() - 1
    }

    fn ln(&mut self, w: usize) -> LnIdx {
        LnIdx { gamma: self.push(vec![w], Init::Ones), beta: self.push(vec![w], Init::Zeros) }
    }

    fn attn(&mut self, w: usize) -> AttnIdx {
        AttnIdx {
            wq: self.push(vec![w, w], Init::Normal),
            wk: self.push(vec![w, w], Init::Normal),
            wv: self.push(vec![w, w], Init::Normal),
            wo: self.push(vec![w, w], Init::Normal),
        }
    }

    fn ff(&mut self, w: usize, hidden: usize) -> FfIdx {
        FfIdx {
            w1: self.push(vec![w, hidden], Init::Normal),
            b1: self.push(vec![hidden], Init::Zeros),
            w2: self.push(vec![hidden, w], Init::Normal),
            b2: self.push(vec![w], Init::Zeros),
        }
    }
}

fn build_layout(cfg: &DenoiserConfig) -> (Layout, Vec<(Vec<usize>, Init)>) {
    let w = cfg.width;
    let mut b = LayoutBuilder { shapes: Vec::new() };
    let src_tok = b.push(vec![cfg.k + cfg.cond_vocab, w], Init::Normal);
    let tgt_tok = b.push(vec![cfg.k + 1, w], Init::Normal);
    let src_pos = b.push(vec![cfg.src_len(), w], Init::Normal);
    let tgt_pos = b.push(vec![cfg.n, w], Init::Normal);
    let enc = (0..cfg.n_enc)
        .map(|_| EncLayerIdx {
            ln1: b.ln(w),
            attn: b.attn(w),
            ln2: b.ln(w),
            ff: b.ff(w, cfg.ff_enc),
        })
        .collect();
    let enc_ln = b.ln(w);
    let dec = (0..cfg.n_dec)
        .map(|_| DecLayerIdx {
            ln1: b.ln(w),
            self_attn: b.attn(w),
            ln2: b.ln(w),
            cross_attn: b.attn(w),
            ln3: b.ln(w),
            ff: b.ff(w, cfg.ff_dec),
        })
        .collect();
    let dec_ln = b.ln(w);
    let out_w = b.push(vec![w, cfg.k], Init::Zeros);
    let out_b = b.push(vec![cfg.k], Init::Zeros);
    let layout = Layout {
        src_tok,
        tgt_tok,
        src_pos,
        tgt_pos,
        enc,
        enc_ln,
        dec,
        dec_ln,
        out_w,
        out_b,
    };
    (layout, b.shapes)
}

/// Total parameter count for a config.
pub fn param_count(cfg: &DenoiserConfig) -> usize {
    let (_, shapes) = build_layout(cfg);
    shapes.iter().map(|(s, _)| s.iter().product::<usize>()).sum()
}

/// Encoder-decoder reverse model with learned absolute positions.
pub struct Seq2SeqDenoiser {
    pub config: DenoiserConfig,
    pub(crate) layout: Layout,
    params: Vec<Tensor>,
}

/// Parameter nodes attached to a tape, in declaration order.
pub struct TapeBinding {
    pub ids: Vec<NodeId>,
}

impl Seq2SeqDenoiser {
    /// Fresh model: small random embeddings/projections, zero output head
    /// (so initial predictions are exactly uniform).
    pub fn new(config: DenoiserConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (layout, shapes) = build_layout(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = shapes
            .iter()
            .map(|(shape, init)| match init {
                Init::Normal => Tensor::randn(shape, INIT_STD, &mut rng),
                Init::Ones => Tensor::ones(shape),
                Init::Zeros => Tensor::zeros(shape),
            })
            .collect();
        Ok(Seq2SeqDenoiser { config, layout, params })
    }

    /// Fresh model with a randomized output head as well; used by probes
    /// and gradient checks that need non-degenerate logits everywhere.
    pub fn new_random_head(config: DenoiserConfig, seed: u64) -> Result<Self> {
        let mut model = Self::new(config, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x517c_c1b7_2722_0a95);
        let w = model.layout.out_w;
        let b = model.layout.out_b;
        model.params[w] = Tensor::randn(model.params[w].shape(), INIT_STD, &mut rng);
        model.params[b] = Tensor::randn(model.params[b].shape(), INIT_STD, &mut rng);
        Ok(model)
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.numel()).sum()
    }

    pub(crate) fn param(&self, idx: usize) -> &Tensor {
        &self.params[idx]
    }

    pub(crate) fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Attach all parameters as trainable leaves.
    pub fn attach(&self, tape: &mut Tape) -> TapeBinding {
        TapeBinding { ids: self.params.iter().map(|p| tape.param(p.clone())).collect() }
    }

    /// Attach all parameters as constants (inference through the tape).
    pub fn attach_const(&self, tape: &mut Tape) -> TapeBinding {
        TapeBinding { ids: self.params.iter().map(|p| tape.constant(p.clone())).collect() }
    }

    /// Source token ids with condition tokens prepended (offset by K).
    pub fn source_ids(&self, source: &TokenGrid, cond: Option<usize>) -> Result<Vec<usize>> {
        let cfg = &self.config;
        if source.len() != cfg.n {
            return Err(Error::dim(format!(
                "source grid has {} tokens, model expects N={}",
                source.len(),
                cfg.n
            )));
        }
        let mut ids = Vec::with_capacity(cfg.src_len());
        match (cfg.cond_len, cond) {
            (0, None) => {}
            (0, Some(_)) => {
                return Err(Error::Usage("condition given to an unconditional model".into()))
            }
            (_, None) => {
                return Err(Error::Usage("conditional model requires a condition".into()))
            }
            (len, Some(c)) => {
                if c >= cfg.cond_vocab {
                    return Err(Error::Index(format!(
                        "condition {} >= vocabulary {}",
                        c, cfg.cond_vocab
                    )));
                }
                ids.extend(std::iter::repeat(cfg.k + c).take(len));
            }
        }
        for &t in source.tokens() {
            if t >= cfg.k {
                return Err(Error::Index(format!("source token {} >= K={}", t, cfg.k)));
            }
            ids.push(t);
        }
        Ok(ids)
    }

    /// Right-shift a target sequence: BOS followed by all but the last token.
    pub fn shift_target(&self, target: &[usize]) -> Result<Vec<usize>> {
        if target.len() != self.config.n {
            return Err(Error::dim(format!(
                "target has {} tokens, model expects N={}",
                target.len(),
                self.config.n
            )));
        }
        let mut shifted = Vec::with_capacity(self.config.n);
        shifted.push(self.config.bos());
        shifted.extend_from_slice(&target[..self.config.n - 1]);
        Ok(shifted)
    }

    fn multi_head_attention(
        &self,
        tape: &mut Tape,
        q_in: NodeId,
        kv_in: NodeId,
        idx: &AttnIdx,
        b: &TapeBinding,
        causal: bool,
    ) -> Result<NodeId> {
        let cfg = &self.config;
        let heads = cfg.heads;
        let d = cfg.width / heads;
        let inv_sqrt_d = 1.0 / (d as f64).sqrt();

        let q = tape.matmul(q_in, b.ids[idx.wq])?;
        let k = tape.matmul(kv_in, b.ids[idx.wk])?;
        let v = tape.matmul(kv_in, b.ids[idx.wv])?;

        let mask = if causal {
            let rows = tape.value(q).shape()[0];
            let cols = tape.value(k).shape()[0];
            let mut m = Tensor::zeros(&[rows, cols]);
            for i in 0..rows {
                for j in 0..cols {
                    if j > i {
                        m.data_mut()[i * cols + j] = MASK_NEG;
                    }
                }
            }
            Some(tape.constant(m))
        } else {
            None
        };

        let mut head_outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = tape.slice_cols(q, h * d, d)?;
            let kh = tape.slice_cols(k, h * d, d)?;
            let vh = tape.slice_cols(v, h * d, d)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let scaled = tape.scale(scores, inv_sqrt_d);
            let masked = match mask {
                Some(m) => tape.add(scaled, m)?,
                None => scaled,
            };
            let attn = tape.softmax_rows(masked)?;
            head_outs.push(tape.matmul(attn, vh)?);
        }
        let ctx = tape.concat_cols(&head_outs)?;
        tape.matmul(ctx, b.ids[idx.wo])
    }

    fn layer_norm(
        &self,
        tape: &mut Tape,
        x: NodeId,
        idx: &LnIdx,
        b: &TapeBinding,
    ) -> Result<NodeId> {
        let normed = tape.layer_norm_rows(x, LN_EPS)?;
        let scaled = tape.mul_row(normed, b.ids[idx.gamma])?;
        tape.add_row(scaled, b.ids[idx.beta])
    }

    fn feed_forward(
        &self,
        tape: &mut Tape,
        x: NodeId,
        idx: &FfIdx,
        b: &TapeBinding,
    ) -> Result<NodeId> {
        let h = tape.matmul(x, b.ids[idx.w1])?;
        let h = tape.add_row(h, b.ids[idx.b1])?;
        let h = tape.gelu(h);
        let h = tape.matmul(h, b.ids[idx.w2])?;
        tape.add_row(h, b.ids[idx.b2])
    }

    /// Encoder half: embeds the source ids and runs the bidirectional
    /// stack, ending with the final encoder layer norm.
    pub fn encode_on_tape(
        &self,
        tape: &mut Tape,
        b: &TapeBinding,
        src_ids: &[usize],
    ) -> Result<NodeId> {
        if src_ids.len() != self.config.src_len() {
            return Err(Error::dim(format!(
                "encoder input of {} ids, expected {}",
                src_ids.len(),
                self.config.src_len()
            )));
        }
        let emb = tape.gather_rows(b.ids[self.layout.src_tok], src_ids)?;
        let mut x = tape.add(emb, b.ids[self.layout.src_pos])?;
        for layer in &self.layout.enc {
            let normed = self.layer_norm(tape, x, &layer.ln1, b)?;
            let attn = self.multi_head_attention(tape, normed, normed, &layer.attn, b, false)?;
            x = tape.add(x, attn)?;
            let normed = self.layer_norm(tape, x, &layer.ln2, b)?;
            let ff = self.feed_forward(tape, normed, &layer.ff, b)?;
            x = tape.add(x, ff)?;
        }
        self.layer_norm(tape, x, &self.layout.enc_ln, b)
    }

    /// Decoder half: causal self-attention over the shifted target plus
    /// cross-attention into `enc_out`; returns N×K logits.
    pub fn decode_on_tape(
        &self,
        tape: &mut Tape,
        b: &TapeBinding,
        enc_out: NodeId,
        target_shifted: &[usize],
    ) -> Result<NodeId> {
        let cfg = &self.config;
        if target_shifted.len() != cfg.n {
            return Err(Error::dim(format!(
                "decoder input of {} ids, expected N={}",
                target_shifted.len(),
                cfg.n
            )));
        }
        if target_shifted.iter().any(|&t| t > cfg.k) {
            return Err(Error::Index(format!("decoder input token above BOS id {}", cfg.k)));
        }
        let emb = tape.gather_rows(b.ids[self.layout.tgt_tok], target_shifted)?;
        let mut x = tape.add(emb, b.ids[self.layout.tgt_pos])?;
        for layer in &self.layout.dec {
            let normed = self.layer_norm(tape, x, &layer.ln1, b)?;
            let attn =
                self.multi_head_attention(tape, normed, normed, &layer.self_attn, b, true)?;
            x = tape.add(x, attn)?;
            let normed = self.layer_norm(tape, x, &layer.ln2, b)?;
            let cross =
                self.multi_head_attention(tape, normed, enc_out, &layer.cross_attn, b, false)?;
            x = tape.add(x, cross)?;
            let normed = self.layer_norm(tape, x, &layer.ln3, b)?;
            let ff = self.feed_forward(tape, normed, &layer.ff, b)?;
            x = tape.add(x, ff)?;
        }
        let x = self.layer_norm(tape, x, &self.layout.dec_ln, b)?;
        let logits = tape.matmul(x, b.ids[self.layout.out_w])?;
        tape.add_row(logits, b.ids[self.layout.out_b])
    }

    /// Full teacher-forced forward on an existing tape.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        b: &TapeBinding,
        source: &TokenGrid,
        cond: Option<usize>,
        target_shifted: &[usize],
    ) -> Result<NodeId> {
        let src_ids = self.source_ids(source, cond)?;
        let enc = self.encode_on_tape(tape, b, &src_ids)?;
        self.decode_on_tape(tape, b, enc, target_shifted)
    }

    /// Teacher-forced logits without gradients. `logits[i]` parameterizes
    /// p(x^i | x^{<i}, source, cond).
    pub fn forward_logits(
        &self,
        source: &TokenGrid,
        cond: Option<usize>,
        target_shifted: &[usize],
    ) -> Result<Tensor> {
        let mut tape = Tape::new();
        let b = self.attach_const(&mut tape);
        let out = self.forward_on_tape(&mut tape, &b, source, cond, target_shifted)?;
        Ok(tape.value(out).clone())
    }

    /// Encoder output as a plain tensor (run once, reuse across steps).
    pub fn encode_source(&self, source: &TokenGrid, cond: Option<usize>) -> Result<Tensor> {
        let src_ids = self.source_ids(source, cond)?;
        let mut tape = Tape::new();
        let b = self.attach_const(&mut tape);
        let out = self.encode_on_tape(&mut tape, &b, &src_ids)?;
        Ok(tape.value(out).clone())
    }

    /// Decoder-only forward against a precomputed encoder output.
    pub fn decode_logits(&self, enc_out: &Tensor, target_shifted: &[usize]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let b = self.attach_const(&mut tape);
        let enc = tape.constant(enc_out.clone());
        let out = self.decode_on_tape(&mut tape, &b, enc, target_shifted)?;
        Ok(tape.value(out).clone())
    }

    pub fn write_checkpoint(&self, path: &Path) -> Result<()> {
        let cfg = &self.config;
        let mut buf = Vec::new();
        buf.extend_from_slice(CKPT_MAGIC);
        for v in [
            cfg.k,
            cfg.n,
            cfg.cond_vocab,
            cfg.cond_len,
            cfg.width,
            cfg.heads,
            cfg.n_enc,
            cfg.n_dec,
            cfg.ff_enc,
            cfg.ff_dec,
        ] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for p in &self.params {
            for &v in p.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn read_checkpoint(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let fail = |msg: String| Error::format(path.display().to_string(), msg);
        if bytes.len() < 48 || &bytes[..8] != CKPT_MAGIC {
            return Err(fail("bad checkpoint magic".into()));
        }
        let u32_at =
            |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
        let cfg = DenoiserConfig {
            k: u32_at(8),
            n: u32_at(12),
            cond_vocab: u32_at(16),
            cond_len: u32_at(20),
            width: u32_at(24),
            heads: u32_at(28),
            n_enc: u32_at(32),
            n_dec: u32_at(36),
            ff_enc: u32_at(40),
            ff_dec: u32_at(44),
        };
        cfg.validate().map_err(|e| fail(format!("invalid config: {}", e)))?;
        let (layout, shapes) = build_layout(&cfg);
        let total: usize = shapes.iter().map(|(s, _)| s.iter().product::<usize>()).sum();
        let need = 48 + total * 8;
        if bytes.len() != need {
            return Err(fail(format!("expected {} bytes, got {}", need, bytes.len())));
        }
        let mut off = 48;
        let mut params = Vec::with_capacity(shapes.len());
        for (shape, _) in &shapes {
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                data.push(f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
                off += 8;
            }
            params.push(Tensor::new(shape.clone(), data).expect("shape matches data"));
        }
        Ok(Seq2SeqDenoiser { config: cfg, layout, params })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_cfg() -> DenoiserConfig {
        DenoiserConfig::basic(5, 8, 16, 4, 1, 1)
    }

    fn random_grid(cfg: &DenoiserConfig, seed: u64) -> TokenGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TokenGrid::uniform(1, cfg.n, cfg.k, &mut rng)
    }

    #[test]
    fn zero_head_gives_exactly_uniform_softmax() {
        let cfg = small_cfg();
        let model = Seq2SeqDenoiser::new(cfg, 3).unwrap();
        let src = random_grid(&cfg, 0);
        let tgt = model.shift_target(&vec![0; cfg.n]).unwrap();
        let logits = model.forward_logits(&src, None, &tgt).unwrap();
        assert!(logits.data().iter().all(|&v| v == 0.0));
        let probs = logits.softmax(1).unwrap();
        for &p in probs.data() {
            assert!((p - 1.0 / cfg.k as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn causal_mask_blocks_future_target_positions() {
        let cfg = small_cfg();
        let model = Seq2SeqDenoiser::new_random_head(cfg, 5).unwrap();
        let src = random_grid(&cfg, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let target: Vec<usize> = (0..cfg.n).map(|_| rng.random_range(0..cfg.k)).collect();
        let base = model.forward_logits(&src, None, &model.shift_target(&target).unwrap()).unwrap();
        // Perturb the target at position j; logits at i < j must be bit-identical.
        for j in 1..cfg.n {
            let mut perturbed = target.clone();
            perturbed[j] = (perturbed[j] + 1) % cfg.k;
            let shifted = model.shift_target(&perturbed).unwrap();
            let out = model.forward_logits(&src, None, &shifted).unwrap();
            for i in 0..=j {
                for v in 0..cfg.k {
                    assert_eq!(
                        base.data()[i * cfg.k + v],
                        out.data()[i * cfg.k + v],
                        "logits[{}] changed by target perturbation at {}",
                        i,
                        j
                    );
                }
            }
        }
    }

    #[test]
    fn encoder_sees_source_positions_after_i() {
        let cfg = small_cfg();
        let model = Seq2SeqDenoiser::new_random_head(cfg, 6).unwrap();
        let src = random_grid(&cfg, 3);
        let target = vec![0; cfg.n];
        let shifted = model.shift_target(&target).unwrap();
        let base = model.forward_logits(&src, None, &shifted).unwrap();
        // Perturbing the LAST source position must reach logits[0].
        let mut tokens = src.tokens().to_vec();
        let last = tokens.len() - 1;
        tokens[last] = (tokens[last] + 1) % cfg.k;
        let perturbed = TokenGrid::from_tokens_unchecked(src.h, src.w, tokens);
        let out = model.forward_logits(&perturbed, None, &shifted).unwrap();
        let changed = (0..cfg.k).any(|v| base.data()[v] != out.data()[v]);
        assert!(changed, "logits[0] insensitive to a later source position");
    }

    #[test]
    fn conditional_ids_and_errors() {
        let cfg = small_cfg().with_condition(4, 1);
        let model = Seq2SeqDenoiser::new(cfg, 0).unwrap();
        let src = random_grid(&cfg, 7);
        assert!(model.source_ids(&src, None).is_err());
        assert!(model.source_ids(&src, Some(9)).is_err());
        let ids = model.source_ids(&src, Some(2)).unwrap();
        assert_eq!(ids.len(), cfg.n + 1);
        assert_eq!(ids[0], cfg.k + 2);
        // Unconditional model rejects a condition.
        let uncond = Seq2SeqDenoiser::new(small_cfg(), 0).unwrap();
        assert!(uncond.source_ids(&src, Some(0)).is_err());
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg().with_condition(3, 1);
        let model = Seq2SeqDenoiser::new_random_head(cfg, 11).unwrap();
        let path = dir.path().join("m.ckpt");
        model.write_checkpoint(&path).unwrap();
        let back = Seq2SeqDenoiser::read_checkpoint(&path).unwrap();
        assert_eq!(model.config, back.config);
        assert_eq!(model.params.len(), back.params.len());
        for (a, b) in model.params.iter().zip(back.params.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn same_seed_same_params() {
        let cfg = small_cfg();
        let a = Seq2SeqDenoiser::new(cfg, 42).unwrap();
        let b = Seq2SeqDenoiser::new(cfg, 42).unwrap();
        for (x, y) in a.params.iter().zip(b.params.iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn layer_balanced_configs_have_equal_params_at_equal_total_layers() {
        let a = DenoiserConfig::layer_balanced(8, 64, 32, 4, 6, 2);
        let b = DenoiserConfig::layer_balanced(8, 64, 32, 4, 0, 8);
        assert_eq!(param_count(&a), param_count(&b));
        let c = DenoiserConfig::layer_balanced(8, 64, 32, 4, 4, 4);
        assert_eq!(param_count(&a), param_count(&c));
    }
}
