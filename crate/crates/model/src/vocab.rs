//! Word-level vocabulary over the closed report grammar.
//!
//! Words are whitespace-delimited and case-sensitive; `.`, `,`, `:` and `;`
//! split off as their own tokens and line breaks become `<nl>`. Special
//! tokens are matched atomically anywhere in the text.

use std::collections::HashMap;

use petct_core::grammar::grammar_words;
use serde::{Deserialize, Serialize};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const NEWLINE: &str = "<nl>";
pub const PUNCTUATION: [&str; 4] = [".", ",", ":", ";"];

pub const CT_OPEN: &str = "<ct>";
pub const CT_CLOSE: &str = "</ct>";
pub const PET_OPEN: &str = "<pet>";
pub const PET_CLOSE: &str = "</pet>";
pub const TEMPLATE_OPEN: &str = "<template>";
pub const TEMPLATE_CLOSE: &str = "</template>";
pub const END_OF_REPORT: &str = "[end-of-report]";

pub const SPECIAL_TOKENS: [&str; 7] = [
    CT_OPEN,
    CT_CLOSE,
    PET_OPEN,
    PET_CLOSE,
    TEMPLATE_OPEN,
    TEMPLATE_CLOSE,
    END_OF_REPORT,
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    /// Ids at or above this index are registered special tokens.
    base_len: usize,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

fn is_punct(c: char) -> bool {
    matches!(c, '.' | ',' | ':' | ';')
}

/// Splits plain text (no special tokens) into word and punctuation pieces.
fn word_pieces(text: &str, out: &mut Vec<String>) {
    for (i, line) in text.split('\n').enumerate() {
        if i > 0 {
            out.push(NEWLINE.to_string());
        }
        for chunk in line.split_whitespace() {
            let mut word = String::new();
            for c in chunk.chars() {
                if is_punct(c) {
                    if !word.is_empty() {
                        out.push(std::mem::take(&mut word));
                    }
                    out.push(c.to_string());
                } else {
                    word.push(c);
                }
            }
            if !word.is_empty() {
                out.push(word);
            }
        }
    }
}

impl Vocab {
    /// Base vocabulary: reserved tokens, punctuation, then the sorted words of
    /// the report grammar and of `extra_text`.
    pub fn build(extra_text: &[&str]) -> Vocab {
        let mut words: Vec<String> = grammar_words().into_iter().map(str::to_string).collect();
        let mut pieces = Vec::new();
        for t in extra_text {
            word_pieces(t, &mut pieces);
        }
        words.extend(pieces);
        words.retain(|w| !PUNCTUATION.contains(&w.as_str()) && w != NEWLINE);
        words.sort();
        words.dedup();
        let mut tokens: Vec<String> = [PAD, UNK, NEWLINE].iter().map(|s| s.to_string()).collect();
        tokens.extend(PUNCTUATION.iter().map(|s| s.to_string()));
        tokens.extend(words);
        let base_len = tokens.len();
        let mut v = Vocab { tokens, base_len, index: HashMap::new() };
        v.reindex();
        v
    }

    fn reindex(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn restore(mut self) -> Vocab {
        self.reindex();
        self
    }

    /// Appends the special tokens; a second call changes nothing.
    pub fn register_special_tokens(&mut self) {
        for s in SPECIAL_TOKENS {
            if !self.index.contains_key(s) {
                self.tokens.push(s.to_string());
            }
        }
        self.reindex();
    }

    pub fn with_special_tokens(mut self) -> Vocab {
        self.register_special_tokens();
        self
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn base_len(&self) -> usize {
        self.base_len
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn unk(&self) -> u32 {
        self.id(UNK).expect("reserved token")
    }

    pub fn special(&self, token: &str) -> u32 {
        self.id(token).unwrap_or_else(|| panic!("special token {token} is not registered"))
    }

    pub fn is_special(&self, id: u32) -> bool {
        (id as usize) >= self.base_len
    }

    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        let specials: Vec<&str> = self.tokens[self.base_len..].iter().map(String::as_str).collect();
        let mut out = Vec::new();
        let mut rest = text;
        loop {
            let next = specials
                .iter()
                .filter_map(|s| rest.find(s).map(|at| (at, *s)))
                .min_by_key(|&(at, s)| (at, std::cmp::Reverse(s.len())));
            let (head, found) = match next {
                Some((at, s)) => (&rest[..at], Some(s)),
                None => (rest, None),
            };
            let mut pieces = Vec::new();
            word_pieces(head, &mut pieces);
            out.extend(pieces.iter().map(|p| self.id(p).unwrap_or_else(|| self.unk())));
            match found {
                Some(s) => {
                    out.push(self.special(s));
                    rest = &rest[head.len() + s.len()..];
                }
                None => break,
            }
        }
        out
    }

    pub fn detokenize(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        let mut line_start = true;
        for &id in ids {
            let t = self.token(id).unwrap_or(UNK);
            if t == NEWLINE {
                out.push('\n');
                line_start = true;
                continue;
            }
            if !(line_start || PUNCTUATION.contains(&t)) {
                out.push(' ');
            }
            out.push_str(t);
            line_start = false;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use petct_core::labels::ReportLabels;
    use petct_core::ontology::{Density, RegionId, Uptake};
    use petct_core::report::TemplateDictionary;
    use petct_core::synth::render_findings;
    use petct_core::labels::RegionLabel;
    use petct_core::prep::Gender;
    use proptest::prelude::*;

    fn vocab() -> Vocab {
        Vocab::build(&[include_str!("../assets/instruction.txt")]).with_special_tokens()
    }

    #[test]
    fn stop_token_is_atomic() {
        let v = vocab();
        assert_eq!(v.tokenize("[end-of-report]"), vec![v.special(END_OF_REPORT)]);
        let ids = v.tokenize("<ct>liver</ct>");
        assert_eq!(ids, vec![v.special(CT_OPEN), v.id("liver").unwrap(), v.special(CT_CLOSE)]);
    }

    #[test]
    fn registration_is_idempotent() {
        let mut v = vocab();
        let before = v.clone();
        v.register_special_tokens();
        assert_eq!(v, before);
        assert_eq!(v.len(), v.base_len() + SPECIAL_TOKENS.len());
    }

    #[test]
    fn unknown_words_map_to_unk() {
        let v = vocab();
        assert_eq!(v.tokenize("zebra"), vec![v.unk()]);
    }

    proptest! {
        #[test]
        fn rendered_reports_round_trip(seed in any::<u64>(), center in 1u8..=5, male in any::<bool>()) {
            let v = vocab();
            let mut labels = ReportLabels::default();
            let mut s = seed;
            for _ in 0..4 {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let r = RegionId::from_index((s >> 33) as usize % 24);
                let u = Uptake::ALL[(s >> 40) as usize % 5];
                let d = Density::ALL[(s >> 50) as usize % 8];
                labels.set(r, RegionLabel::new(u, d));
            }
            let g = if male { Gender::Male } else { Gender::Female };
            let tpl = TemplateDictionary::fixtures().lookup(center, g).unwrap().to_string();
            let text = render_findings(&labels, &tpl);
            let ids = v.tokenize(&text);
            prop_assert!(!ids.contains(&v.unk()));
            prop_assert_eq!(v.detokenize(&ids), text);
        }
    }
}
