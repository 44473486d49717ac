use std::sync::OnceLock;

use regex::{Captures, Regex};

/// Single characters replaced before tokenization. Every replacement is no
/// longer in UTF-8 bytes than the character it replaces.
const SUBSTITUTIONS: &[(char, &str)] = &[
    ('\t', " "),
    ('\u{00A0}', " "),
    ('\u{3000}', " "),
    ('\u{200B}', ""),
    ('\u{FEFF}', ""),
    ('\u{2013}', "-"),
    ('\u{2014}', "-"),
    ('\u{2212}', "-"),
    ('\u{2018}', "'"),
    ('\u{2019}', "'"),
    ('\u{201C}', "\""),
    ('\u{201D}', "\""),
    ('\u{2026}', "..."),
    ('\u{00D7}', "x"),
    ('\u{00B1}', "+-"),
    ('\u{00B7}', "."),
    ('\u{2192}', "->"),
    ('\u{2264}', "<="),
    ('\u{2265}', ">="),
    ('\u{FF08}', "("),
    ('\u{FF09}', ")"),
    ('\u{FF0C}', ","),
    ('\u{FF1A}', ":"),
    ('\u{FF1B}', ";"),
    ('\u{3010}', "["),
    ('\u{3011}', "]"),
    ('\u{2160}', "1"),
    ('\u{2161}', "2"),
    ('\u{2162}', "3"),
    ('\u{2163}', "4"),
    ('\u{2164}', "5"),
    ('\u{2165}', "6"),
    ('\u{2166}', "7"),
    ('\u{2167}', "8"),
    ('\u{2168}', "9"),
    ('\u{2169}', "10"),
    ('\u{216A}', "11"),
    ('\u{216B}', "12"),
];

fn substitute(c: char) -> Option<&'static str> {
    SUBSTITUTIONS.iter().find(|(k, _)| *k == c).map(|(_, v)| *v)
}

fn roman_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // bare "X" is left alone: it doubles as the dimension separator ("2 X 3 cm")
    RE.get_or_init(|| Regex::new(r"\b(XII|XI|IX|VIII|VII|VI|IV|V|III|II|I)\b").unwrap())
}

fn roman_value(s: &str) -> &'static str {
    match s {
        "I" => "1",
        "II" => "2",
        "III" => "3",
        "IV" => "4",
        "V" => "5",
        "VI" => "6",
        "VII" => "7",
        "VIII" => "8",
        "IX" => "9",
        "XI" => "11",
        "XII" => "12",
        _ => unreachable!("regex only matches I..XII"),
    }
}

/// Symbol substitution, collapse of space runs longer than two, and
/// conversion of standalone Roman numerals to Arabic digits.
pub fn normalize_report_text(raw: &str) -> String {
    let mut subst = String::with_capacity(raw.len());
    for c in raw.chars() {
        match substitute(c) {
            Some(r) => subst.push_str(r),
            None => subst.push(c),
        }
    }

    let mut collapsed = String::with_capacity(subst.len());
    let mut run = 0usize;
    let flush = |out: &mut String, run: usize| match run {
        0 => {}
        1 | 2 => out.extend(std::iter::repeat(' ').take(run)),
        _ => out.push(' '),
    };
    for c in subst.chars() {
        if c == ' ' {
            run += 1;
        } else {
            flush(&mut collapsed, run);
            run = 0;
            collapsed.push(c);
        }
    }
    flush(&mut collapsed, run);

    roman_re()
        .replace_all(&collapsed, |c: &Captures| roman_value(&c[1]))
        .into_owned()
}
