use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

use super::AttentionError;

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const UNK: &str = "[UNK]";

/// Turns a sentence into subword strings, begin and end markers included.
pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;

    /// Stable description that changes whenever tokenization could.
    fn identity(&self) -> String;
}

fn is_punctuation(c: char) -> bool {
    // ASCII symbol ranges count as punctuation, as in the BERT basic tokenizer.
    if c.is_ascii() {
        return c.is_ascii_punctuation();
    }
    !(c.is_alphanumeric() || c.is_whitespace() || c.is_control())
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x4E00..=0x9FFF | 0x3400..=0x4DBF | 0x20000..=0x2A6DF | 0x2A700..=0x2B73F
        | 0x2B740..=0x2B81F | 0x2B820..=0x2CEAF | 0xF900..=0xFAFF | 0x2F800..=0x2FA1F)
}

/// BERT "basic" pre-tokenization: whitespace cleanup, optional lowercasing
/// with accent stripping, CJK and punctuation isolation.
pub fn basic_tokenize(text: &str, lowercase: bool) -> Vec<String> {
    let mut spaced = String::with_capacity(text.len() + 8);
    for c in text.chars() {
        if c == '\0' || c == '\u{fffd}' || (c.is_control() && !c.is_whitespace()) {
            continue;
        }
        if is_cjk(c) {
            spaced.push(' ');
            spaced.push(c);
            spaced.push(' ');
        } else if c.is_whitespace() {
            spaced.push(' ');
        } else {
            spaced.push(c);
        }
    }

    let mut out = Vec::new();
    for word in spaced.split_whitespace() {
        let word: String = if lowercase {
            word.to_lowercase()
                .nfd()
                .filter(|c| !unicode_normalization::char::is_combining_mark(*c))
                .collect()
        } else {
            word.to_string()
        };
        let mut current = String::new();
        for c in word.chars() {
            if is_punctuation(c) {
                if !current.is_empty() {
                    out.push(std::mem::take(&mut current));
                }
                out.push(c.to_string());
            } else {
                current.push(c);
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
    out
}

/// Greedy longest-match-first WordPiece over a BERT `vocab.txt`.
#[derive(Debug, Clone)]
pub struct WordPieceTokenizer {
    vocab: HashMap<String, u32>,
    lowercase: bool,
    max_chars_per_word: usize,
    identity: String,
}

impl WordPieceTokenizer {
    pub fn from_vocab_file(path: impl AsRef<Path>, lowercase: bool) -> Result<Self, AttentionError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| AttentionError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_vocab_text(&text, lowercase))
    }

    /// One token per line; the line number is the token id.
    pub fn from_vocab_text(text: &str, lowercase: bool) -> Self {
        let vocab: HashMap<String, u32> = text
            .lines()
            .enumerate()
            .map(|(i, t)| (t.trim_end_matches('\r').to_string(), i as u32))
            .collect();
        let digest = Sha256::digest(text.as_bytes());
        let identity = format!(
            "wordpiece:{}:{}:{}",
            if lowercase { "uncased" } else { "cased" },
            vocab.len(),
            digest[..6].iter().map(|b| format!("{b:02x}")).collect::<String>()
        );
        WordPieceTokenizer {
            vocab,
            lowercase,
            max_chars_per_word: 100,
            identity,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn token_id(&self, token: &str) -> Option<u32> {
        self.vocab.get(token).copied()
    }

    /// Ids for already tokenized strings; unknown strings map to `[UNK]`.
    pub fn convert_tokens_to_ids(&self, tokens: &[String]) -> Vec<u32> {
        let unk = self.vocab.get(UNK).copied().unwrap_or(0);
        tokens
            .iter()
            .map(|t| self.vocab.get(t).copied().unwrap_or(unk))
            .collect()
    }

    fn wordpiece(&self, word: &str, out: &mut Vec<String>) {
        let chars: Vec<char> = word.chars().collect();
        if chars.len() > self.max_chars_per_word {
            out.push(UNK.to_string());
            return;
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                let mut piece: String = chars[start..end].iter().collect();
                if start > 0 {
                    piece.insert_str(0, "##");
                }
                if self.vocab.contains_key(&piece) {
                    found = Some(piece);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(p) => {
                    pieces.push(p);
                    start = end;
                }
                None => {
                    out.push(UNK.to_string());
                    return;
                }
            }
        }
        out.extend(pieces);
    }
}

impl Tokenizer for WordPieceTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = vec![CLS.to_string()];
        for word in basic_tokenize(text, self.lowercase) {
            self.wordpiece(&word, &mut out);
        }
        out.push(SEP.to_string());
        out
    }

    fn identity(&self) -> String {
        self.identity.clone()
    }
}

/// Lowercasing whitespace/punctuation tokenizer with an explicit table of
/// words that split into subwords.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubTokenizer {
    splits: BTreeMap<String, Vec<String>>,
}

impl Default for StubTokenizer {
    /// Splits that bert-base-uncased applies to the reference sentences.
    fn default() -> Self {
        StubTokenizer::with_splits([
            ("harmonicas", &["harmonica", "##s"][..]),
            ("grasshoppers", &["grass", "##hopper", "##s"][..]),
            ("harpoons", &["harp", "##oons"][..]),
            ("gophers", &["go", "##pher", "##s"][..]),
        ])
    }
}

impl StubTokenizer {
    pub fn with_splits<'a>(splits: impl IntoIterator<Item = (&'a str, &'a [&'a str])>) -> Self {
        StubTokenizer {
            splits: splits
                .into_iter()
                .map(|(w, ps)| (w.to_lowercase(), ps.iter().map(|p| p.to_string()).collect()))
                .collect(),
        }
    }

    /// No split words at all.
    pub fn whole_words() -> Self {
        StubTokenizer {
            splits: BTreeMap::new(),
        }
    }

    pub fn add_split(&mut self, word: &str, pieces: &[&str]) {
        self.splits.insert(
            word.to_lowercase(),
            pieces.iter().map(|p| p.to_string()).collect(),
        );
    }
}

impl Tokenizer for StubTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut out = vec![CLS.to_string()];
        for word in basic_tokenize(text, true) {
            match self.splits.get(&word) {
                Some(pieces) => out.extend(pieces.iter().cloned()),
                None => out.push(word),
            }
        }
        out.push(SEP.to_string());
        out
    }

    fn identity(&self) -> String {
        let table: Vec<String> = self
            .splits
            .iter()
            .map(|(w, ps)| format!("{w}={}", ps.join("+")))
            .collect();
        format!("stub-tokenizer[{}]", table.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(t: &dyn Tokenizer, s: &str) -> Vec<String> {
        t.tokenize(s)
    }

    #[test]
    fn basic_splits_punctuation() {
        assert_eq!(
            basic_tokenize("The pear, which was it.", true),
            vec!["the", "pear", ",", "which", "was", "it", "."]
        );
        assert_eq!(basic_tokenize("Café\tNaïve", true), vec!["cafe", "naive"]);
        assert_eq!(basic_tokenize("Café", false), vec!["Café"]);
    }

    #[test]
    fn wordpiece_greedy() {
        let vocab = "[PAD]\n[UNK]\n[CLS]\n[SEP]\nharmonica\n##s\nare\nmusical\ninstruments\n.\ngrass\n##hopper\n";
        let wp = WordPieceTokenizer::from_vocab_text(vocab, true);
        assert_eq!(
            toks(&wp, "harmonicas are musical instruments."),
            vec!["[CLS]", "harmonica", "##s", "are", "musical", "instruments", ".", "[SEP]"]
        );
        assert_eq!(
            toks(&wp, "grasshoppers are zebras."),
            vec!["[CLS]", "grass", "##hopper", "##s", "are", "[UNK]", ".", "[SEP]"]
        );
        assert_eq!(wp.convert_tokens_to_ids(&["are".into(), "nope".into()]), vec![6, 1]);
        assert!(wp.identity().starts_with("wordpiece:uncased:12:"));
    }

    #[test]
    fn stub_split_table() {
        let stub = StubTokenizer::default();
        assert_eq!(
            toks(&stub, "gophers are animals."),
            vec!["[CLS]", "go", "##pher", "##s", "are", "animals", ".", "[SEP]"]
        );
        assert_eq!(
            toks(&stub, "clocks are watches."),
            vec!["[CLS]", "clocks", "are", "watches", ".", "[SEP]"]
        );
        assert_ne!(stub.identity(), StubTokenizer::whole_words().identity());
    }
}
