#![allow(dead_code)]

use audioweave::numerics::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Finite-difference step used by every gradient check.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for relative error so coordinates whose true gradient is
/// ~0 are judged on absolute error at that scale.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>, scale: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
    Tensor::new(shape, data).unwrap().with_requires_grad(true)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Evaluates `f` on a fresh tape and returns the scalar output.
pub fn eval<F>(f: &F, inputs: &[Tensor]) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let out = f(&mut tape, &vars);
    tape.scalar(out).unwrap()
}

/// Central-difference gradient of `f` for every coordinate of every input.
pub fn numeric_gradients<F>(f: &F, inputs: &[Tensor]) -> Vec<Vec<f64>>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut work = inputs.to_vec();
    let mut out = Vec::new();
    for i in 0..work.len() {
        let mut g = Vec::with_capacity(work[i].len());
        for j in 0..work[i].len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + FD_STEP;
            let plus = eval(f, &work);
            work[i].data_mut()[j] = orig - FD_STEP;
            let minus = eval(f, &work);
            work[i].data_mut()[j] = orig;
            g.push((plus - minus) / (2.0 * FD_STEP));
        }
        out.push(g);
    }
    out
}

pub fn analytic_gradients<F>(f: &F, inputs: &[Tensor]) -> Vec<Vec<f64>>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let out = f(&mut tape, &vars);
    let grads = tape.backward(out).unwrap();
    vars.iter()
        .zip(inputs)
        .map(|(v, t)| grads.get(*v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect()
}

/// Largest relative error between analytic and finite-difference gradients.
pub fn max_gradient_error<F>(f: &F, inputs: &[Tensor]) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let a = analytic_gradients(f, inputs);
    let n = numeric_gradients(f, inputs);
    a.iter()
        .flatten()
        .zip(n.iter().flatten())
        .map(|(a, n)| rel_error(*a, *n))
        .fold(0.0, f64::max)
}

/// Contracts an arbitrary-shaped output to a scalar with a fixed random
/// weighting so every output coordinate influences the check.
pub fn weighted_sum(tape: &mut Tape, x: Var, seed: u64) -> Var {
    let shape = tape.shape(x).to_vec();
    let mut r = rng(seed);
    let n: usize = shape.iter().product();
    let w = tape
        .constant(shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect())
        .unwrap();
    let p = tape.mul(x, w).unwrap();
    tape.sum(p)
}

/// Triple-loop reference product with the same left-to-right accumulation.
pub fn naive_matmul(a: &Tensor, b: &Tensor) -> Vec<f64> {
    let (m, k) = a.dims2().unwrap();
    let (_, n) = b.dims2().unwrap();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a.data()[i * k + p] * b.data()[p * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// Direct per-row `-log softmax` oracle for masked cross-entropy (mean over kept rows).
pub fn naive_masked_ce(logits: &[f64], vocab: usize, targets: &[i64], ignore: i64) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for (row, &t) in logits.chunks(vocab).zip(targets) {
        if t == ignore {
            continue;
        }
        let denom: f64 = row.iter().map(|x| x.exp()).sum();
        total += -(row[t as usize].exp() / denom).ln();
        count += 1;
    }
    total / count as f64
}

use audioweave::audio::FrontendConfig;
use audioweave::model::{Example, Model, ModelConfig};
use audioweave::sequence::{build_interleaved, BuildOptions};
use audioweave::tokenizer::{Vocabulary, AUDIO_ID};

/// Four specials followed by `words` filler tokens.
pub fn filler_vocab(words: usize) -> Vocabulary {
    let mut tokens: Vec<String> = ["<bos>", "<eos>", "<unk>", "[AUDIO]"].iter().map(|s| s.to_string()).collect();
    tokens.extend((0..words).map(|i| format!("w{i}")));
    Vocabulary::from_tokens(tokens).unwrap()
}

pub fn small_frontend() -> FrontendConfig {
    FrontendConfig {
        audio_slot_count: 3,
        d_audio: 4,
        d_model: 16,
    }
}

/// Two-layer, 16-wide decoder over a filler vocabulary.
pub fn small_model(words: usize, seed: u64) -> Model {
    let cfg = ModelConfig {
        d_model: 16,
        n_layers: 2,
        n_heads: 2,
        d_ff: 32,
        max_seq_len: 64,
        ..ModelConfig::default()
    };
    Model::new(cfg, small_frontend(), filler_vocab(words), seed).unwrap()
}

/// Random interleaved example: prompt of 1..=6 filler ids with one
/// placeholder at a random spot, answer of 0..=4 ids, random audio features.
pub fn random_example(r: &mut ChaCha8Rng, vocab_size: usize, frontend: &FrontendConfig) -> Example {
    let word = |r: &mut ChaCha8Rng| r.random_range(4..vocab_size as u32);
    let mut prompt: Vec<u32> = (0..r.random_range(1..=6)).map(|_| word(r)).collect();
    let at = r.random_range(0..=prompt.len());
    prompt.insert(at, AUDIO_ID);
    let answer: Vec<u32> = (0..r.random_range(0..=4)).map(|_| word(r)).collect();
    let k = frontend.audio_slot_count;
    let seq = build_interleaved(&prompt, &answer, &BuildOptions::wrapped(k)).unwrap();
    let feats = (0..k * frontend.d_audio).map(|_| r.random_range(-1.0..1.0)).collect();
    Example {
        seq,
        audio: vec![Tensor::new(vec![k, frontend.d_audio], feats).unwrap()],
    }
}

/// Gives every LoRA `B` factor random values so adapter paths carry gradient.
pub fn randomize_adapters(model: &mut Model, r: &mut ChaCha8Rng) {
    for (name, t) in model.params_mut().iter_mut() {
        if name.contains(".lora_") && name.ends_with(".b") {
            t.data_mut().iter_mut().for_each(|v| *v = r.random_range(-0.5..0.5));
        }
    }
}

/// Worst relative error over `samples` seeded parameter coordinates between
/// accumulated analytic gradients and central differences of the batch loss.
pub fn model_gradient_error(model: &mut Model, batch: &[Example], samples: usize, seed: u64) -> f64 {
    use audioweave::numerics::LossReduction;
    let mut r = rng(seed);
    model.params_mut().values_mut().for_each(|t| t.zero_grad());
    model.loss_and_grads(batch, LossReduction::Mean).unwrap();
    let names: Vec<String> = model.params().keys().cloned().collect();
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let name = &names[r.random_range(0..names.len())];
        let j = r.random_range(0..model.params()[name].len());
        let analytic = model.params()[name].grad().map_or(0.0, |g| g[j]);
        let orig = model.params()[name].data()[j];
        model.params_mut()[name].data_mut()[j] = orig + FD_STEP;
        let plus = model.loss(batch, LossReduction::Mean).unwrap();
        model.params_mut()[name].data_mut()[j] = orig - FD_STEP;
        let minus = model.loss(batch, LossReduction::Mean).unwrap();
        model.params_mut()[name].data_mut()[j] = orig;
        worst = worst.max(rel_error(analytic, (plus - minus) / (2.0 * FD_STEP)));
    }
    worst
}
