use super::{DatasetError, ExampleSentence, NounPair};

/// One sentence frame with its focus-token positions.
///
/// `template` is the canonical text; `[hypo]`/`[hyper]` mark the slots and a
/// trailing `s` on a slot is the plural marker as printed. Inflection itself
/// is driven by `hypo_plural`/`hyper_plural`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pattern {
    pub id: u8,
    pub template: &'static str,
    pub hypo_plural: bool,
    pub hyper_plural: bool,
    pub needs_determiner: bool,
    /// Token index of the hyponym, counted with the begin marker at 0.
    pub source_index: isize,
    /// Token index of the hypernym; negative counts from the end, -1 being
    /// the end marker.
    pub target_index: isize,
}

pub const PATTERNS: [Pattern; 5] = [
    Pattern {
        id: 1,
        template: "[hypo]s are [hyper]s.",
        hypo_plural: true,
        hyper_plural: true,
        needs_determiner: false,
        source_index: 1,
        target_index: -3,
    },
    Pattern {
        id: 2,
        template: "That [hypo] is [a(n)] [hyper].",
        hypo_plural: false,
        hyper_plural: false,
        needs_determiner: true,
        source_index: 2,
        target_index: -3,
    },
    Pattern {
        id: 3,
        template: "I like [hypo]s and other [hyper]s.",
        hypo_plural: true,
        hyper_plural: true,
        needs_determiner: false,
        source_index: 3,
        target_index: -3,
    },
    Pattern {
        id: 4,
        template: "The [hypo], which was the largest [hyper] among them, stood out.",
        hypo_plural: false,
        hyper_plural: false,
        needs_determiner: false,
        source_index: 2,
        target_index: -8,
    },
    // The reference sentences for this frame keep the hypernym singular
    // ("...because they are fruit.") although the template prints "[hyper]s".
    Pattern {
        id: 5,
        template: "I like [hypo]s, particularly because they are [hyper]s.",
        hypo_plural: true,
        hyper_plural: false,
        needs_determiner: false,
        source_index: 3,
        target_index: -3,
    },
];

pub fn pattern(id: u8) -> Option<&'static Pattern> {
    PATTERNS.iter().find(|p| p.id == id)
}

/// Naive plural: always append "s".
pub fn pluralize(word: &str) -> String {
    format!("{word}s")
}

pub fn indefinite_article(word: &str) -> &'static str {
    match word.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u' | 'A' | 'E' | 'I' | 'O' | 'U') => "an",
        _ => "a",
    }
}

fn is_single_token(word: &str) -> bool {
    !word.is_empty() && !word.contains(|c: char| c.is_whitespace() || c == '_')
}

impl Pattern {
    pub fn hyponym_surface(&self, raw: &str) -> String {
        inflect(raw, self.hypo_plural)
    }

    pub fn hypernym_surface(&self, raw: &str) -> String {
        inflect(raw, self.hyper_plural)
    }

    /// Fills the slots with `pair` and returns the finished sentence.
    pub fn instantiate(&self, pair: &NounPair, id: u64) -> Result<ExampleSentence, DatasetError> {
        for word in [&pair.hyponym_raw, &pair.hypernym_raw] {
            if !is_single_token(word) {
                return Err(DatasetError::MultiWordFiller(word.clone()));
            }
        }
        let hyponym = self.hyponym_surface(&pair.hyponym_raw);
        let hypernym = self.hypernym_surface(&pair.hypernym_raw);

        let mut text = String::with_capacity(self.template.len() + 16);
        let mut rest = self.template;
        while let Some(start) = rest.find('[') {
            text.push_str(&rest[..start]);
            let tail = &rest[start..];
            let end = tail
                .find(']')
                .expect("pattern templates have balanced brackets");
            let slot = &tail[..=end];
            let mut after = &tail[end + 1..];
            match slot {
                "[hypo]" => {
                    text.push_str(&hyponym);
                    after = after.strip_prefix('s').unwrap_or(after);
                }
                "[hyper]" => {
                    text.push_str(&hypernym);
                    after = after.strip_prefix('s').unwrap_or(after);
                }
                "[a(n)]" => text.push_str(indefinite_article(&hypernym)),
                other => unreachable!("unknown slot {other}"),
            }
            rest = after;
        }
        text.push_str(rest);

        Ok(ExampleSentence {
            id,
            pattern: self.id,
            text,
            hyponym,
            hypernym,
            hyponym_raw: pair.hyponym_raw.clone(),
            hypernym_raw: pair.hypernym_raw.clone(),
            set_label: pair.set_label,
        })
    }
}

fn inflect(raw: &str, plural: bool) -> String {
    if plural {
        pluralize(raw)
    } else {
        raw.to_string()
    }
}

/// Convenience wrapper over [`Pattern::instantiate`].
pub fn instantiate_pattern(
    pattern: &Pattern,
    pair: &NounPair,
    id: u64,
) -> Result<ExampleSentence, DatasetError> {
    pattern.instantiate(pair, id)
}
