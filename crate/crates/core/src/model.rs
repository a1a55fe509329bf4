//! Toy decoder-only transformer with low-rank adapters on the query and value
//! projections.
//!
//! Linear weights are stored `[d_out × d_in]` and applied as `x · Wᵀ`. All
//! parameters live in one ordered [`ParamStore`]; names decide whether a tensor
//! belongs to the backbone, the adapters, or the audio projection.

use std::path::Path;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::audio::{project_on_tape, AudioError, FrontendConfig};
use crate::numerics::{AttentionSpec, LossReduction, NumericsError, Tape, Tensor, Var, IGNORE_INDEX};
use crate::persistence::{self, CheckpointData, PersistenceError};
use crate::sequence::{embedding_picks, Source, TokenSequence};
use crate::tokenizer::{TokenizerError, Vocabulary, EOS_ID};

pub type ParamStore = IndexMap<String, Tensor>;

const INIT_STD: f64 = 0.02;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("sequence length {len} exceeds max_seq_len {max}")]
    SeqLen { len: usize, max: usize },
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("sequence references {expected} audio blocks but {found} were supplied")]
    AudioCount { expected: usize, found: usize },
    #[error("checkpoint does not match the model: {0}")]
    Checkpoint(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Sequence(#[from] crate::sequence::SequenceError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Persistence(#[from] PersistenceError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub lora_rank: usize,
    pub lora_alpha: f64,
    pub norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 0,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 128,
            max_seq_len: 128,
            lora_rank: 8,
            lora_alpha: 16.0,
            norm_eps: 1e-6,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("max_seq_len", self.max_seq_len),
            ("lora_rank", self.lora_rank),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(ModelError::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(self.lora_alpha > 0.0) || !(self.norm_eps > 0.0) {
            return Err(ModelError::Config("lora_alpha and norm_eps must be positive".into()));
        }
        Ok(())
    }
}

/// Low-rank update `ΔW = (α/r)·B·A` for a `[d_out × d_in]` weight.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    /// `[r × d_in]`
    pub a: Tensor,
    /// `[d_out × r]`
    pub b: Tensor,
    pub alpha: f64,
}

impl LoraAdapter {
    pub fn rank(&self) -> usize {
        self.a.shape()[0]
    }

    pub fn scale(&self) -> f64 {
        self.alpha / self.rank() as f64
    }
}

/// `x·Wᵀ + (α/r)·x·Aᵀ·Bᵀ`.
pub fn lora_apply(x: &Tensor, base_w: &Tensor, adapter: &LoraAdapter) -> Result<Tensor, ModelError> {
    let mut tape = Tape::new();
    let (xv, wv) = (tape.leaf(x), tape.leaf(base_w));
    let (av, bv) = (tape.leaf(&adapter.a), tape.leaf(&adapter.b));
    let out = lora_linear(&mut tape, xv, wv, Some((av, bv, adapter.scale())))?;
    Ok(tape.to_tensor(out))
}

/// The adapter's contribution alone: `(α/r)·x·Aᵀ·Bᵀ`.
pub fn lora_delta(x: &Tensor, adapter: &LoraAdapter) -> Result<Tensor, ModelError> {
    let mut tape = Tape::new();
    let xv = tape.leaf(x);
    let (av, bv) = (tape.leaf(&adapter.a), tape.leaf(&adapter.b));
    let out = adapter_delta(&mut tape, xv, av, bv, adapter.scale())?;
    Ok(tape.to_tensor(out))
}

fn linear(tape: &mut Tape, x: Var, w: Var) -> Result<Var, NumericsError> {
    let wt = tape.transpose(w)?;
    tape.matmul(x, wt)
}

fn adapter_delta(tape: &mut Tape, x: Var, a: Var, b: Var, scale: f64) -> Result<Var, NumericsError> {
    let xa = linear(tape, x, a)?;
    let xab = linear(tape, xa, b)?;
    Ok(tape.scale(xab, scale))
}

fn lora_linear(tape: &mut Tape, x: Var, w: Var, adapter: Option<(Var, Var, f64)>) -> Result<Var, NumericsError> {
    let base = linear(tape, x, w)?;
    match adapter {
        Some((a, b, scale)) => {
            let delta = adapter_delta(tape, x, a, b, scale)?;
            tape.add(base, delta)
        }
        None => Ok(base),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adapters {
    Attached,
    Detached,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Backbone,
    Adapter,
    Projection,
}

pub fn param_group(name: &str) -> ParamGroup {
    if name.starts_with("audio_proj.") {
        ParamGroup::Projection
    } else if name.contains(".lora_") {
        ParamGroup::Adapter
    } else {
        ParamGroup::Backbone
    }
}

/// One training or inference item: a built sequence plus the pooled
/// `K × d_audio` features for each audio block it references.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub seq: TokenSequence,
    pub audio: Vec<Tensor>,
}

/// Parameters bound as tape leaves for one forward pass.
pub struct Bound {
    vars: IndexMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Var {
        self.vars[name]
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointConfig {
    model: ModelConfig,
    frontend: FrontendConfig,
    vocab: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    frontend: FrontendConfig,
    vocab: Vocabulary,
    params: ParamStore,
}

impl Model {
    /// Seeded init: Gaussian σ=0.02 everywhere except norm gains (1), biases
    /// and adapter `B` matrices (0).
    pub fn new(mut config: ModelConfig, frontend: FrontendConfig, vocab: Vocabulary, seed: u64) -> Result<Self, ModelError> {
        config.vocab_size = vocab.len();
        config.validate()?;
        frontend.validate()?;
        if frontend.d_model != config.d_model {
            return Err(ModelError::Config(format!(
                "frontend d_model {} differs from model d_model {}",
                frontend.d_model, config.d_model
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut params = ParamStore::new();
        for (name, shape, init) in layout(&config, &frontend) {
            let n = shape.iter().product();
            let data = match init {
                Init::Normal => (0..n).map(|_| normal.sample(&mut rng)).collect(),
                Init::Ones => vec![1.0; n],
                Init::Zeros => vec![0.0; n],
            };
            let t = Tensor::new(shape, data)?.with_requires_grad(true);
            params.insert(name, t);
        }
        Ok(Self {
            config,
            frontend,
            vocab,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn frontend(&self) -> &FrontendConfig {
        &self.frontend
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    /// Marks each parameter group trainable or frozen. Freezing drops any grad.
    pub fn set_trainable(&mut self, backbone: bool, projection: bool) {
        for (name, t) in self.params.iter_mut() {
            let on = match param_group(name) {
                ParamGroup::Backbone => backbone,
                ParamGroup::Adapter => true,
                ParamGroup::Projection => projection,
            };
            t.set_requires_grad(on);
        }
    }

    pub fn adapter(&self, layer: usize, which: char) -> Option<LoraAdapter> {
        let prefix = format!("layers.{layer}.attn.lora_{which}");
        Some(LoraAdapter {
            a: self.params.get(&format!("{prefix}.a"))?.clone(),
            b: self.params.get(&format!("{prefix}.b"))?.clone(),
            alpha: self.config.lora_alpha,
        })
    }

    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self.params.iter().map(|(n, t)| (n.clone(), tape.leaf(t))).collect(),
        }
    }

    /// Applies the decoder to pre-assembled input rows. `x` holds
    /// `rows / seq_len` sequences of length `seq_len` back to back.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        p: &Bound,
        x: Var,
        seq_len: usize,
        key_mask: Option<Vec<bool>>,
        adapters: Adapters,
    ) -> Result<Var, ModelError> {
        if seq_len > self.config.max_seq_len {
            return Err(ModelError::SeqLen {
                len: seq_len,
                max: self.config.max_seq_len,
            });
        }
        let rows = tape.shape(x)[0];
        let picks: Vec<(usize, usize)> = (0..rows).map(|r| (0, r % seq_len)).collect();
        let pos = tape.gather_rows(&[p.var("pos_embed")], &picks)?;
        let mut h = tape.add(x, pos)?;
        let spec = AttentionSpec {
            heads: self.config.n_heads,
            seq_len,
            key_mask,
        };
        let scale = self.config.lora_alpha / self.config.lora_rank as f64;
        let eps = self.config.norm_eps;
        for l in 0..self.config.n_layers {
            let name = |s: &str| format!("layers.{l}.{s}");
            let adapter = |which: &str| match adapters {
                Adapters::Attached => Some((
                    p.var(&name(&format!("attn.lora_{which}.a"))),
                    p.var(&name(&format!("attn.lora_{which}.b"))),
                    scale,
                )),
                Adapters::Detached => None,
            };
            let a = tape.rmsnorm(h, p.var(&name("norm1")), eps)?;
            let q = lora_linear(tape, a, p.var(&name("attn.wq")), adapter("q"))?;
            let k = linear(tape, a, p.var(&name("attn.wk")))?;
            let v = lora_linear(tape, a, p.var(&name("attn.wv")), adapter("v"))?;
            let att = tape.causal_attention(q, k, v, &spec)?;
            let o = linear(tape, att, p.var(&name("attn.wo")))?;
            h = tape.add(h, o)?;
            let m = tape.rmsnorm(h, p.var(&name("norm2")), eps)?;
            let f = linear(tape, m, p.var(&name("mlp.w1")))?;
            let f = tape.add_row(f, p.var(&name("mlp.b1")))?;
            let f = tape.silu(f);
            let f = linear(tape, f, p.var(&name("mlp.w2")))?;
            let f = tape.add_row(f, p.var(&name("mlp.b2")))?;
            h = tape.add(h, f)?;
        }
        let h = tape.rmsnorm(h, p.var("norm_f"), eps)?;
        Ok(linear(tape, h, p.var("lm_head"))?)
    }

    /// Logits `[N × V]` for a single sequence of input rows `[N × d_model]`.
    pub fn forward(&self, inputs: &Tensor, adapters: Adapters) -> Result<Tensor, ModelError> {
        let (n, _) = inputs.dims2()?;
        let mut tape = Tape::new();
        let p = self.bind(&mut tape);
        let x = tape.leaf(inputs);
        let out = self.forward_on_tape(&mut tape, &p, x, n, None, adapters)?;
        Ok(tape.to_tensor(out))
    }

    /// Projects audio, splices embeddings, pads every sequence to the longest
    /// (pad rows use the EOS embedding, are key-masked and carry no target)
    /// and runs the decoder. Returns logits for `B·N` rows, the targets, and `N`.
    pub fn batch_logits(
        &self,
        tape: &mut Tape,
        p: &Bound,
        batch: &[Example],
        adapters: Adapters,
    ) -> Result<(Var, Vec<i64>, usize), ModelError> {
        let n = batch.iter().map(|e| e.seq.len()).max().ok_or(ModelError::EmptyBatch)?;
        if n > self.config.max_seq_len {
            return Err(ModelError::SeqLen {
                len: n,
                max: self.config.max_seq_len,
            });
        }
        let mut sources = vec![p.var("tok_embed")];
        let mut picks = Vec::with_capacity(batch.len() * n);
        let mut targets = Vec::with_capacity(batch.len() * n);
        let mut mask = Vec::with_capacity(batch.len() * n);
        for ex in batch {
            let blocks = ex.seq.block_count();
            if blocks != ex.audio.len() {
                return Err(ModelError::AudioCount {
                    expected: blocks,
                    found: ex.audio.len(),
                });
            }
            let base = sources.len() - 1;
            for h in &ex.audio {
                let hv = tape.leaf(h);
                let z = project_on_tape(tape, hv, p.var("audio_proj.weight"), p.var("audio_proj.bias"))?;
                sources.push(z);
            }
            let slots = vec![self.frontend.audio_slot_count; blocks];
            for (src, row) in embedding_picks(&ex.seq, self.config.vocab_size, &slots)? {
                picks.push(if src == 0 { (0, row) } else { (base + src, row) });
            }
            for pos in ex.seq.positions() {
                targets.push(if pos.is_audio() { IGNORE_INDEX } else { pos.label });
                mask.push(true);
            }
            for _ in ex.seq.len()..n {
                picks.push((0, EOS_ID as usize));
                targets.push(IGNORE_INDEX);
                mask.push(false);
            }
        }
        let x = tape.gather_rows(&sources, &picks)?;
        let padded = mask.iter().any(|m| !m);
        let logits = self.forward_on_tape(tape, p, x, n, padded.then_some(mask), adapters)?;
        Ok((logits, targets, n))
    }

    /// Masked next-token loss over a batch; gradients are accumulated into
    /// every trainable parameter.
    pub fn loss_and_grads(&mut self, batch: &[Example], reduction: LossReduction) -> Result<f64, ModelError> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape);
        let (logits, targets, _) = self.batch_logits(&mut tape, &p, batch, Adapters::Attached)?;
        let loss = tape.cross_entropy(logits, &targets, IGNORE_INDEX, reduction)?;
        let value = tape.scalar(loss)?;
        let grads = tape.backward(loss)?;
        for (name, var) in &p.vars {
            if let Some(g) = grads.get(*var) {
                self.params[name].accumulate_grad(g);
            }
        }
        Ok(value)
    }

    /// Loss without touching gradients.
    pub fn loss(&self, batch: &[Example], reduction: LossReduction) -> Result<f64, ModelError> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape);
        let (logits, targets, _) = self.batch_logits(&mut tape, &p, batch, Adapters::Attached)?;
        let loss = tape.cross_entropy(logits, &targets, IGNORE_INDEX, reduction)?;
        Ok(tape.scalar(loss)?)
    }

    pub fn logits(&self, example: &Example, adapters: Adapters) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape);
        let (logits, _, _) = self.batch_logits(&mut tape, &p, std::slice::from_ref(example), adapters)?;
        Ok(tape.to_tensor(logits))
    }

    /// Decodes up to `max_new` tokens after `prompt`. Temperature 0 is greedy;
    /// otherwise tokens are sampled from the tempered softmax with a ChaCha
    /// stream seeded by `seed`. EOS ends decoding and is not emitted.
    pub fn generate(&self, prompt: &Example, max_new: usize, temperature: f64, seed: u64) -> Result<String, ModelError> {
        if !(temperature >= 0.0) {
            return Err(ModelError::Config(format!("temperature must be non-negative, got {temperature}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ex = prompt.clone();
        let mut out = Vec::new();
        for _ in 0..max_new {
            if ex.seq.len() >= self.config.max_seq_len {
                break;
            }
            let logits = self.logits(&ex, Adapters::Attached)?;
            let last = logits.row(ex.seq.len() - 1);
            let next = if temperature == 0.0 {
                argmax(last)
            } else {
                sample(last, temperature, &mut rng)
            } as u32;
            if next == EOS_ID {
                break;
            }
            out.push(next);
            ex.seq.push_text(next, Source::Answer);
        }
        Ok(self.vocab.decode(&out)?)
    }

    pub fn to_checkpoint(&self) -> CheckpointData {
        let cfg = CheckpointConfig {
            model: self.config,
            frontend: self.frontend,
            vocab: self.vocab.tokens().to_vec(),
        };
        CheckpointData {
            config_json: serde_json::to_string(&cfg).expect("config serializes"),
            tensors: self
                .params
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::new(t.shape().to_vec(), t.data().to_vec()).expect("same shape")))
                .collect(),
        }
    }

    pub fn from_checkpoint(data: CheckpointData) -> Result<Self, ModelError> {
        let cfg: CheckpointConfig =
            serde_json::from_str(&data.config_json).map_err(|e| ModelError::Checkpoint(format!("config block: {e}")))?;
        let vocab = Vocabulary::from_tokens(cfg.vocab)?;
        if vocab.len() != cfg.model.vocab_size {
            return Err(ModelError::Checkpoint(format!(
                "vocab has {} tokens, config says {}",
                vocab.len(),
                cfg.model.vocab_size
            )));
        }
        cfg.model.validate()?;
        let expected = layout(&cfg.model, &cfg.frontend);
        if expected.len() != data.tensors.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                data.tensors.len()
            )));
        }
        let mut params = ParamStore::new();
        for ((name, shape, _), (found, t)) in expected.into_iter().zip(data.tensors) {
            if name != found || shape != t.shape() {
                return Err(ModelError::Checkpoint(format!(
                    "expected {name} {shape:?}, found {found} {:?}",
                    t.shape()
                )));
            }
            params.insert(name, t.with_requires_grad(true));
        }
        Ok(Self {
            config: cfg.model,
            frontend: cfg.frontend,
            vocab,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        Ok(persistence::write_checkpoint(path, &self.to_checkpoint())?)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_checkpoint(persistence::read_checkpoint(path)?)
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn sample(row: &[f64], temperature: f64, rng: &mut ChaCha8Rng) -> usize {
    let scaled: Vec<f64> = row.iter().map(|v| v / temperature).collect();
    let probs = crate::numerics::softmax_rows(&scaled, scaled.len());
    let mut r: f64 = rng.random();
    for (i, p) in probs.iter().enumerate() {
        r -= p;
        if r < 0.0 {
            return i;
        }
    }
    probs.len() - 1
}

enum Init {
    Normal,
    Ones,
    Zeros,
}

fn layout(c: &ModelConfig, f: &FrontendConfig) -> Vec<(String, Vec<usize>, Init)> {
    let (d, r, ff) = (c.d_model, c.lora_rank, c.d_ff);
    let mut out = vec![
        ("tok_embed".to_string(), vec![c.vocab_size, d], Init::Normal),
        ("pos_embed".to_string(), vec![c.max_seq_len, d], Init::Normal),
    ];
    for l in 0..c.n_layers {
        let n = |s: &str| format!("layers.{l}.{s}");
        out.extend([
            (n("norm1"), vec![d], Init::Ones),
            (n("attn.wq"), vec![d, d], Init::Normal),
            (n("attn.wk"), vec![d, d], Init::Normal),
            (n("attn.wv"), vec![d, d], Init::Normal),
            (n("attn.wo"), vec![d, d], Init::Normal),
            (n("attn.lora_q.a"), vec![r, d], Init::Normal),
            (n("attn.lora_q.b"), vec![d, r], Init::Zeros),
            (n("attn.lora_v.a"), vec![r, d], Init::Normal),
            (n("attn.lora_v.b"), vec![d, r], Init::Zeros),
            (n("norm2"), vec![d], Init::Ones),
            (n("mlp.w1"), vec![ff, d], Init::Normal),
            (n("mlp.b1"), vec![ff], Init::Zeros),
            (n("mlp.w2"), vec![d, ff], Init::Normal),
            (n("mlp.b2"), vec![d], Init::Zeros),
        ]);
    }
    out.extend([
        ("norm_f".to_string(), vec![d], Init::Ones),
        ("lm_head".to_string(), vec![c.vocab_size, d], Init::Normal),
        ("audio_proj.weight".to_string(), vec![f.d_audio, d], Init::Normal),
        ("audio_proj.bias".to_string(), vec![d], Init::Zeros),
    ]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::{build_interleaved, BuildOptions};
    use crate::tokenizer::AUDIO_ID;

    fn tiny() -> Model {
        let vocab = Vocabulary::build(&["is it similar to a dog yes no"], 64).unwrap();
        let cfg = ModelConfig {
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            max_seq_len: 24,
            lora_rank: 2,
            ..ModelConfig::default()
        };
        let fe = FrontendConfig {
            audio_slot_count: 2,
            d_audio: 3,
            d_model: 8,
        };
        Model::new(cfg, fe, vocab, 11).unwrap()
    }

    fn example(m: &Model) -> Example {
        let v = m.vocab();
        let mut ids = v.encode("is");
        ids.push(AUDIO_ID);
        ids.extend(v.encode("similar to a dog"));
        let seq = build_interleaved(&ids, &v.encode("yes"), &BuildOptions::wrapped(2)).unwrap();
        let audio = Tensor::new(vec![2, 3], vec![0.5, -1.0, 0.25, 1.0, 0.0, -0.5]).unwrap();
        Example { seq, audio: vec![audio] }
    }

    fn random_inputs(n: usize, d: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(vec![n, d], (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn config_validation() {
        let bad = ModelConfig {
            vocab_size: 10,
            d_model: 10,
            n_heads: 3,
            ..ModelConfig::default()
        };
        assert!(matches!(bad.validate(), Err(ModelError::Config(_))));
    }

    #[test]
    fn causality_keeps_earlier_rows_bit_identical() {
        let m = tiny();
        let x = random_inputs(6, 8, 1);
        let base = m.forward(&x, Adapters::Attached).unwrap();
        let mut y = x.clone();
        y.data_mut()[4 * 8..5 * 8].iter_mut().for_each(|v| *v += 3.0);
        let moved = m.forward(&y, Adapters::Attached).unwrap();
        assert_eq!(&base.data()[..4 * m.config().vocab_size], &moved.data()[..4 * m.config().vocab_size]);
        assert_ne!(base.row(4), moved.row(4));
    }

    #[test]
    fn zero_init_adapters_are_identity() {
        let m = tiny();
        let x = random_inputs(5, 8, 2);
        assert_eq!(
            m.forward(&x, Adapters::Attached).unwrap(),
            m.forward(&x, Adapters::Detached).unwrap()
        );
    }

    #[test]
    fn single_position_forward() {
        let m = tiny();
        let out = m.forward(&random_inputs(1, 8, 3), Adapters::Attached).unwrap();
        assert_eq!(out.shape(), &[1, m.config().vocab_size]);
        assert!(out.all_finite());
    }

    #[test]
    fn too_long_is_rejected() {
        let m = tiny();
        let err = m.forward(&random_inputs(25, 8, 4), Adapters::Attached).unwrap_err();
        assert!(matches!(err, ModelError::SeqLen { len: 25, max: 24 }));
    }

    #[test]
    fn lora_rank_one_matches_outer_product() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5]]).unwrap();
        let w = Tensor::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.5], vec![1.0, 1.0]]).unwrap();
        let ad = LoraAdapter {
            a: Tensor::from_rows(&[vec![2.0, -1.0]]).unwrap(),
            b: Tensor::from_rows(&[vec![1.0], vec![0.0], vec![3.0]]).unwrap(),
            alpha: 2.0,
        };
        let out = lora_apply(&x, &w, &ad).unwrap();
        // row i, col o: x_i·w_o + 2 · (a·x_i) · b_o
        for i in 0..2 {
            let xa = 2.0 * x.row(i)[0] - x.row(i)[1];
            for o in 0..3 {
                let base = x.row(i)[0] * w.row(o)[0] + x.row(i)[1] * w.row(o)[1];
                let expect = base + 2.0 * xa * ad.b.row(o)[0];
                assert!((out.row(i)[o] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lora_zero_b_and_alpha_linearity() {
        let x = random_inputs(3, 4, 5);
        let w = random_inputs(5, 4, 6);
        let mut ad = LoraAdapter {
            a: random_inputs(2, 4, 7),
            b: Tensor::zeros(vec![5, 2]),
            alpha: 16.0,
        };
        let base = crate::numerics::matmul(&x, &transpose(&w)).unwrap();
        assert_eq!(lora_apply(&x, &w, &ad).unwrap(), base);
        ad.b = random_inputs(5, 2, 8);
        let d1 = lora_delta(&x, &ad).unwrap();
        ad.alpha *= 2.0;
        let d2 = lora_delta(&x, &ad).unwrap();
        for (a, b) in d1.data().iter().zip(d2.data()) {
            assert_eq!(2.0 * a, *b);
        }
    }

    fn transpose(t: &Tensor) -> Tensor {
        let (r, c) = t.dims2().unwrap();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = t.row(i)[j];
            }
        }
        Tensor::new(vec![c, r], out).unwrap()
    }

    #[test]
    fn frozen_backbone_gets_no_grads() {
        let mut m = tiny();
        m.set_trainable(false, true);
        let ex = example(&m);
        m.loss_and_grads(&[ex], LossReduction::Mean).unwrap();
        for (name, t) in m.params() {
            match param_group(name) {
                ParamGroup::Backbone => assert!(t.grad().is_none(), "{name}"),
                _ => assert!(t.grad().is_some(), "{name}"),
            }
        }
        m.set_trainable(false, false);
        assert!(m.param("audio_proj.weight").unwrap().grad().is_none());
    }

    #[test]
    fn padding_does_not_change_per_item_loss() {
        let m = tiny();
        let long = example(&m);
        let v = m.vocab();
        let mut ids = vec![AUDIO_ID];
        ids.extend(v.encode("dog"));
        let short = Example {
            seq: build_interleaved(&ids, &v.encode("no"), &BuildOptions::wrapped(2)).unwrap(),
            audio: long.audio.clone(),
        };
        let alone = m.loss(std::slice::from_ref(&short), LossReduction::Sum).unwrap();
        let both = m.loss(&[long.clone(), short], LossReduction::Sum).unwrap();
        let long_alone = m.loss(&[long], LossReduction::Sum).unwrap();
        assert!((both - alone - long_alone).abs() < 1e-9);
    }

    #[test]
    fn generation_is_reproducible() {
        let m = tiny();
        let mut p = example(&m);
        p.seq = build_interleaved(&[AUDIO_ID], &[], &BuildOptions::for_generation(2)).unwrap();
        let g = m.generate(&p, 5, 0.0, 1).unwrap();
        assert_eq!(g, m.generate(&p, 5, 0.0, 2).unwrap());
        assert_eq!(m.generate(&p, 5, 1.0, 9).unwrap(), m.generate(&p, 5, 1.0, 9).unwrap());
        assert_eq!(m.generate(&p, 0, 0.0, 1).unwrap(), "");
        assert!(m.generate(&p, 1, -1.0, 1).is_err());
    }

    #[test]
    fn checkpoint_round_trip_gives_identical_logits() {
        let m = tiny();
        let ex = example(&m);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        m.save(&path).unwrap();
        let back = Model::load(&path).unwrap();
        assert_eq!(
            m.logits(&ex, Adapters::Attached).unwrap(),
            back.logits(&ex, Adapters::Attached).unwrap()
        );
    }

    #[test]
    fn checkpoint_shape_mismatch_is_reported() {
        let m = tiny();
        let mut data = m.to_checkpoint();
        data.tensors[0].1 = Tensor::zeros(vec![1, 1]);
        assert!(matches!(Model::from_checkpoint(data), Err(ModelError::Checkpoint(_))));
    }
}
