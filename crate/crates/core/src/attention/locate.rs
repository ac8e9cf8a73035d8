use std::fmt;

use super::Tokenizer;
use crate::dataset::{ExampleSentence, Pattern};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedExample {
    pub example_id: u64,
    pub tokens: Vec<String>,
    pub source_pos: usize,
    pub target_pos: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Focus {
    Hyponym,
    Hypernym,
}

/// Why an example cannot be used for extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rejection {
    /// The token at the expected position is not the focus word, which
    /// happens when a word is broken into subwords.
    SplitToken {
        focus: Focus,
        expected: String,
        found: String,
    },
    OutOfRange {
        focus: Focus,
        index: isize,
        len: usize,
    },
}

impl Rejection {
    pub fn reason(&self) -> &'static str {
        match self {
            Rejection::SplitToken { .. } => "split-token",
            Rejection::OutOfRange { .. } => "out-of-range",
        }
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::SplitToken {
                focus,
                expected,
                found,
            } => write!(f, "split-token: {focus:?} expected {expected:?}, found {found:?}"),
            Rejection::OutOfRange { focus, index, len } => {
                write!(f, "out-of-range: {focus:?} index {index} in {len} tokens")
            }
        }
    }
}

/// Resolves a signed index against `len` tokens; negative counts from the
/// end with -1 the last token.
pub fn resolve_index(index: isize, len: usize) -> Option<usize> {
    let resolved = if index < 0 {
        len as isize + index
    } else {
        index
    };
    (0..len as isize).contains(&resolved).then_some(resolved as usize)
}

/// Tokenizes the sentence and checks that both focus words sit, whole, at
/// the pattern's positions.
pub fn tokenize_and_locate(
    example: &ExampleSentence,
    pattern: &Pattern,
    tokenizer: &dyn Tokenizer,
) -> Result<TokenizedExample, Rejection> {
    let tokens = tokenizer.tokenize(&example.text);
    let locate = |focus: Focus, index: isize, expected: &str| {
        let pos = resolve_index(index, tokens.len()).ok_or(Rejection::OutOfRange {
            focus,
            index,
            len: tokens.len(),
        })?;
        if tokens[pos].to_lowercase() == expected.to_lowercase() {
            Ok(pos)
        } else {
            Err(Rejection::SplitToken {
                focus,
                expected: expected.to_string(),
                found: tokens[pos].clone(),
            })
        }
    };
    let source_pos = locate(Focus::Hyponym, pattern.source_index, &example.hyponym)?;
    let target_pos = locate(Focus::Hypernym, pattern.target_index, &example.hypernym)?;
    Ok(TokenizedExample {
        example_id: example.id,
        tokens,
        source_pos,
        target_pos,
    })
}
