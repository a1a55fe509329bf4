//! Mixed text/audio input sequences and their next-token supervision.
//!
//! Two constructions are supported. The prepended layout puts one audio block
//! before all prompt text; the interleaved layout expands each `[AUDIO]`
//! placeholder id in place into `K` audio positions. An optional BOS token is
//! always the first position in both, so an interleaved prompt whose
//! placeholder leads is position-for-position identical to the prepended
//! layout of the same prompt with the placeholder removed.

use serde::{Deserialize, Serialize};

use crate::audio::AudioEmbeddingBlock;
use crate::numerics::{NumericsError, Tape, Tensor, Var, IGNORE_INDEX};
use crate::tokenizer::{AUDIO_ID, BOS_ID, EOS_ID};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SequenceError {
    #[error("prompt for the prepended layout contains an audio placeholder at index {0}")]
    PlaceholderInNonInterleaved(usize),
    #[error("interleaved prompt has no audio placeholder")]
    MissingPlaceholder,
    #[error("interleaved prompt has {found} audio placeholders, at most {allowed} allowed")]
    ExtraPlaceholder { found: usize, allowed: usize },
    #[error("{what} index {index} out of range (limit {limit})")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PositionKind {
    Text,
    Audio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Prompt,
    Answer,
    Audio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Position {
    pub kind: PositionKind,
    pub token_id: Option<u32>,
    pub audio_slot: Option<usize>,
    /// Which audio block (placeholder occurrence) an audio position reads from.
    pub block: Option<usize>,
    pub label: i64,
    pub source: Source,
}

impl Position {
    fn text(id: u32, source: Source) -> Self {
        Self {
            kind: PositionKind::Text,
            token_id: Some(id),
            audio_slot: None,
            block: None,
            label: IGNORE_INDEX,
            source,
        }
    }

    fn audio(block: usize, slot: usize) -> Self {
        Self {
            kind: PositionKind::Audio,
            token_id: None,
            audio_slot: Some(slot),
            block: Some(block),
            label: IGNORE_INDEX,
            source: Source::Audio,
        }
    }

    pub fn is_audio(&self) -> bool {
        self.kind == PositionKind::Audio
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    positions: Vec<Position>,
}

impl TokenSequence {
    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    /// Mutable access for callers that need to tamper with stored labels
    /// (e.g. to show that audio labels never reach the loss).
    pub fn positions_mut(&mut self) -> &mut [Position] {
        &mut self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn labels(&self) -> Vec<i64> {
        self.positions.iter().map(|p| p.label).collect()
    }

    pub fn text_ids(&self) -> Vec<u32> {
        self.positions.iter().filter_map(|p| p.token_id).collect()
    }

    pub fn audio_count(&self) -> usize {
        self.positions.iter().filter(|p| p.is_audio()).count()
    }

    /// Number of distinct audio blocks referenced.
    pub fn block_count(&self) -> usize {
        self.positions.iter().filter_map(|p| p.block).max().map_or(0, |b| b + 1)
    }

    /// Appends a generated text token (used while decoding).
    pub fn push_text(&mut self, id: u32, source: Source) {
        self.positions.push(Position::text(id, source));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildOptions {
    /// `K`: audio positions per placeholder.
    pub audio_slots: usize,
    pub bos: Option<u32>,
    pub eos: Option<u32>,
    pub placeholder_id: u32,
    pub max_placeholders: usize,
    /// Supervise only positions whose target is an answer token.
    pub mask_prompt_text: bool,
    pub ignore_index: i64,
}

impl BuildOptions {
    /// Bare construction: no BOS/EOS wrapping.
    pub fn bare(audio_slots: usize) -> Self {
        Self {
            audio_slots,
            bos: None,
            eos: None,
            placeholder_id: AUDIO_ID,
            max_placeholders: 1,
            mask_prompt_text: false,
            ignore_index: IGNORE_INDEX,
        }
    }

    /// BOS-prefixed, EOS-terminated construction used for training items.
    pub fn wrapped(audio_slots: usize) -> Self {
        Self {
            bos: Some(BOS_ID),
            eos: Some(EOS_ID),
            ..Self::bare(audio_slots)
        }
    }

    /// BOS-prefixed and open-ended, for decoding an answer.
    pub fn for_generation(audio_slots: usize) -> Self {
        Self {
            bos: Some(BOS_ID),
            ..Self::bare(audio_slots)
        }
    }
}

fn finish(mut positions: Vec<Position>, answer_ids: &[u32], opts: &BuildOptions) -> TokenSequence {
    positions.extend(answer_ids.iter().map(|&id| Position::text(id, Source::Answer)));
    if let Some(eos) = opts.eos {
        positions.push(Position::text(eos, Source::Answer));
    }
    let mut seq = TokenSequence { positions };
    let labels = supervision_labels(&seq, opts.mask_prompt_text, opts.ignore_index);
    for (p, l) in seq.positions.iter_mut().zip(labels) {
        p.label = l;
    }
    seq
}

fn bos(opts: &BuildOptions) -> Vec<Position> {
    opts.bos.map(|b| Position::text(b, Source::Prompt)).into_iter().collect()
}

/// `[BOS] ++ K audio ++ prompt ++ answer ++ [EOS]`.
pub fn build_noninterleaved(
    prompt_ids: &[u32],
    answer_ids: &[u32],
    opts: &BuildOptions,
) -> Result<TokenSequence, SequenceError> {
    if let Some(i) = prompt_ids.iter().position(|&id| id == opts.placeholder_id) {
        return Err(SequenceError::PlaceholderInNonInterleaved(i));
    }
    let mut positions = bos(opts);
    positions.extend((0..opts.audio_slots).map(|s| Position::audio(0, s)));
    positions.extend(prompt_ids.iter().map(|&id| Position::text(id, Source::Prompt)));
    Ok(finish(positions, answer_ids, opts))
}

/// `[BOS] ++ prompt ++ answer ++ [EOS]` with every placeholder expanded in
/// place to `K` audio positions; occurrence `i` reads audio block `i`.
pub fn build_interleaved(
    prompt_ids: &[u32],
    answer_ids: &[u32],
    opts: &BuildOptions,
) -> Result<TokenSequence, SequenceError> {
    let found = prompt_ids.iter().filter(|&&id| id == opts.placeholder_id).count();
    if found == 0 {
        return Err(SequenceError::MissingPlaceholder);
    }
    if found > opts.max_placeholders {
        return Err(SequenceError::ExtraPlaceholder {
            found,
            allowed: opts.max_placeholders,
        });
    }
    let mut positions = bos(opts);
    let mut block = 0;
    for &id in prompt_ids {
        if id == opts.placeholder_id {
            positions.extend((0..opts.audio_slots).map(|s| Position::audio(block, s)));
            block += 1;
        } else {
            positions.push(Position::text(id, Source::Prompt));
        }
    }
    Ok(finish(positions, answer_ids, opts))
}

/// Next-token targets. A position is supervised only when it is text and the
/// following position is text; with `mask_prompt_text` the following position
/// must also be an answer token. Everything else gets `ignore_index`.
///
/// Labels are derived from position kinds, never read back from stored labels.
pub fn supervision_labels(seq: &TokenSequence, mask_prompt_text: bool, ignore_index: i64) -> Vec<i64> {
    let p = &seq.positions;
    (0..p.len())
        .map(|n| {
            let Some(next) = p.get(n + 1) else {
                return ignore_index;
            };
            if p[n].is_audio() || next.is_audio() || (mask_prompt_text && next.source != Source::Answer) {
                return ignore_index;
            }
            next.token_id.map_or(ignore_index, i64::from)
        })
        .collect()
}

/// Row picks into `[embed_table, block_0, block_1, ...]` for [`Tape::gather_rows`].
pub fn embedding_picks(
    seq: &TokenSequence,
    vocab_size: usize,
    block_slots: &[usize],
) -> Result<Vec<(usize, usize)>, SequenceError> {
    seq.positions
        .iter()
        .map(|p| match (p.kind, p.token_id, p.block, p.audio_slot) {
            (PositionKind::Text, Some(id), _, _) => {
                let id = id as usize;
                if id >= vocab_size {
                    return Err(SequenceError::Index {
                        what: "token id",
                        index: id,
                        limit: vocab_size,
                    });
                }
                Ok((0, id))
            }
            (PositionKind::Audio, _, Some(b), Some(s)) => {
                let slots = *block_slots.get(b).ok_or(SequenceError::Index {
                    what: "audio block",
                    index: b,
                    limit: block_slots.len(),
                })?;
                if s >= slots {
                    return Err(SequenceError::Index {
                        what: "audio slot",
                        index: s,
                        limit: slots,
                    });
                }
                Ok((b + 1, s))
            }
            _ => unreachable!("positions are only built by constructors that set their fields"),
        })
        .collect()
}

/// Row `n` is the token embedding for text positions and the referenced block
/// slot for audio positions. Gradients flow to both sources.
pub fn assemble_on_tape(
    tape: &mut Tape,
    seq: &TokenSequence,
    embed_table: Var,
    blocks: &[Var],
) -> Result<Var, SequenceError> {
    let vocab = tape.shape(embed_table)[0];
    let slots: Vec<usize> = blocks.iter().map(|b| tape.shape(*b)[0]).collect();
    let picks = embedding_picks(seq, vocab, &slots)?;
    let mut sources = vec![embed_table];
    sources.extend_from_slice(blocks);
    Ok(tape.gather_rows(&sources, &picks)?)
}

pub fn assemble_embeddings(
    seq: &TokenSequence,
    embed_table: &Tensor,
    blocks: &[AudioEmbeddingBlock],
) -> Result<Tensor, SequenceError> {
    let mut tape = Tape::new();
    let table = tape.leaf(embed_table);
    let block_vars: Vec<Var> = blocks.iter().map(|b| tape.leaf(b.slots())).collect();
    let out = assemble_on_tape(&mut tape, seq, table, &block_vars)?;
    Ok(tape.to_tensor(out))
}
