//! Byte-level tokenizer: one token per UTF-8 byte, plus a padding id.
//!
//! Byte tokenization needs no learned vocabulary, handles any input string,
//! and makes token counting exact (tokens = bytes), which the throughput
//! benchmark relies on. The padding id sits outside the byte range; models
//! with larger embedding tables (e.g. subword-sized vocabularies) simply
//! leave the upper ids unused.

use serde::{Deserialize, Serialize};

pub const BYTE_VOCAB: usize = 256;

/// Which end of an over-long token sequence survives truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationSide {
    /// Keep the final tokens (question-as-suffix prompts).
    KeepTail,
    /// Keep the initial tokens (question-as-prefix prompts).
    KeepHead,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteTokenizer {
    pub vocab_size: usize,
    pub pad_id: u32,
}

impl ByteTokenizer {
    /// Tokenizer for a model with `vocab_size` embeddings; the last id pads.
    pub fn for_vocab(vocab_size: usize) -> Self {
        debug_assert!(vocab_size > BYTE_VOCAB);
        ByteTokenizer {
            vocab_size,
            pad_id: (vocab_size - 1) as u32,
        }
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        text.bytes().map(u32::from).collect()
    }

    /// Encode and cut to `max_len` tokens from the chosen side.
    pub fn encode_truncated(&self, text: &str, max_len: usize, side: TruncationSide) -> Vec<u32> {
        let ids = self.encode(text);
        if ids.len() <= max_len {
            return ids;
        }
        match side {
            TruncationSide::KeepTail => ids[ids.len() - max_len..].to_vec(),
            TruncationSide::KeepHead => ids[..max_len].to_vec(),
        }
    }

    /// Exact token count for `text` (= its UTF-8 byte length).
    pub fn count(&self, text: &str) -> usize {
        text.len()
    }

    /// Lossy inverse of [`encode`], for debugging output.
    pub fn decode(&self, ids: &[u32]) -> String {
        let bytes: Vec<u8> = ids
            .iter()
            .filter(|&&id| id < BYTE_VOCAB as u32)
            .map(|&id| id as u8)
            .collect();
        String::from_utf8_lossy(&bytes).into_owned()
    }
}
