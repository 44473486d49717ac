use std::collections::HashSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentMode {
    Whitespace,
    Cjk,
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2FA1F
        | 0x3000..=0x303F | 0xFF00..=0xFFEF)
}

/// Forward maximum-matching segmenter over a fixed word list.
#[derive(Clone, Debug, Default)]
pub struct DictSegmenter {
    words: HashSet<String>,
    max_chars: usize,
}

impl DictSegmenter {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(words: I) -> Self {
        let words: HashSet<String> = words.into_iter().map(Into::into).collect();
        let max_chars = words.iter().map(|w| w.chars().count()).max().unwrap_or(0);
        DictSegmenter { words, max_chars }
    }

    /// Splits a run of CJK characters; characters not covered by any word
    /// become single-character tokens.
    pub fn segment(&self, run: &[char], out: &mut Vec<String>) {
        let mut i = 0;
        while i < run.len() {
            let longest = (2..=self.max_chars.min(run.len() - i))
                .rev()
                .find(|&n| self.words.contains(&run[i..i + n].iter().collect::<String>()))
                .unwrap_or(1);
            out.push(run[i..i + longest].iter().collect());
            i += longest;
        }
    }
}

/// Tokens for NLG scoring. Whitespace mode splits on Unicode whitespace.
/// CJK mode also splits CJK runs with `dict`, or per character without one.
pub fn segment_tokens(text: &str, mode: SegmentMode, dict: Option<&DictSegmenter>) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        if mode == SegmentMode::Whitespace {
            out.push(word.to_string());
            continue;
        }
        let chars: Vec<char> = word.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let cjk = is_cjk(chars[i]);
            let j = (i..chars.len()).find(|&j| is_cjk(chars[j]) != cjk).unwrap_or(chars.len());
            if cjk {
                match dict {
                    Some(d) => d.segment(&chars[i..j], &mut out),
                    None => out.extend(chars[i..j].iter().map(|c| c.to_string())),
                }
            } else {
                out.push(chars[i..j].iter().collect());
            }
            i = j;
        }
    }
    out
}
