//! Structured extraction from free-text model replies.
//!
//! Parsers are lenient by default: they tolerate the decoration models add
//! around the requested answer (labels, quotes, trailing punctuation,
//! markdown emphasis). [`ParseMode::Strict`] accepts only the canonical
//! shape and reports anything else as [`ParseError::Decorated`].
//!
//! Precedence rules:
//! - categories: the trailing `L` or `L|L|...` block of the last non-empty
//!   line; each letter must stand alone (not glued to a word).
//! - routes: the last standalone `U` or `W` token wins; abbreviations such as
//!   `U.S.` do not count. Without any letter token the phrases "user query"
//!   and "web search"/"web retrieval" are used, last one wins.
//! - scores: the first numeral in `[0, 1]`. Fractions `a/b` and percentages
//!   are evaluated; numerals glued to letters (`H1N1`, `3rd`) are ignored.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    snap_score, CategoryError, MissingInfoCategory, Route, RouteKind, RouteSource, ScoreError,
    VeracityScore,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    #[default]
    Lenient,
    Strict,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("no category letters at the end of the reply")]
    NoCategoryFound,
    #[error(transparent)]
    InvalidCategoryLetter(#[from] CategoryError),
    #[error("reply carries category letters but no question")]
    MissingQuestion,
    #[error("no 'U' or 'W' routing token in the reply")]
    NoRouteFound,
    #[error("no numeric score in the reply")]
    NoScoreFound,
    #[error(transparent)]
    OutOfRange(#[from] ScoreError),
    #[error("reply is not in canonical form")]
    Decorated,
}

/// A clarifying question and the categories it targets, most critical first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryReply {
    pub question: String,
    pub categories: Vec<MissingInfoCategory>,
}

impl CategoryReply {
    pub fn primary(&self) -> MissingInfoCategory {
        self.categories[0]
    }

    /// Canonical reply text: the question, a space, then `L|L|...`.
    pub fn to_reply(&self) -> String {
        let mut out = self.question.clone();
        out.push(' ');
        out.push_str(&letters_block(&self.categories));
        out
    }
}

fn letters_block(categories: &[MissingInfoCategory]) -> String {
    let mut out = String::new();
    for (i, c) in categories.iter().enumerate() {
        if i > 0 {
            out.push('|');
        }
        out.push(c.letter());
    }
    out
}

pub fn parse_category_reply(text: &str) -> Result<CategoryReply, ParseError> {
    parse_category_reply_with(text, ParseMode::Lenient)
}

const TRAILING_DECORATION: &[char] = &[' ', '\t', '.', '*', ')', ']', '"', '\'', '`', '_', '|'];
const SEPARATOR_DECORATION: &[char] =
    &[' ', '\t', '-', '\u{2013}', '\u{2014}', ':', '(', '[', '*', '|', ',', '_', '`', '\n', '\r'];
const CATEGORY_LABELS: &[&str] = &[
    "category letters",
    "category letter",
    "category letter(s)",
    "categories",
    "category",
    "letters",
    "letter",
];
const QUESTION_LABELS: &[&str] = &["clarifying question:", "question:"];

pub fn parse_category_reply_with(text: &str, mode: ParseMode) -> Result<CategoryReply, ParseError> {
    let (line_start, line) = last_nonempty_line(text).ok_or(ParseError::NoCategoryFound)?;
    let core = match mode {
        ParseMode::Lenient => line.trim_end_matches(TRAILING_DECORATION),
        ParseMode::Strict => line.trim_end(),
    };

    let mut letters = Vec::new();
    let mut block_start = core.len();
    let mut pos = core.len();
    loop {
        let seg = core[..pos].trim_end();
        let Some(c) = seg.chars().last() else { break };
        if !c.is_ascii_uppercase() {
            break;
        }
        let before = &seg[..seg.len() - 1];
        if before.chars().last().is_some_and(char::is_alphanumeric) {
            break;
        }
        letters.push(c);
        block_start = before.len();
        let rest = core[..block_start].trim_end();
        match rest.strip_suffix('|') {
            Some(r) => pos = r.len(),
            None => break,
        }
    }
    if letters.is_empty() {
        return Err(ParseError::NoCategoryFound);
    }
    letters.reverse();
    let mut categories = Vec::with_capacity(letters.len());
    for letter in letters {
        let cat = MissingInfoCategory::from_letter(letter)?;
        if !categories.contains(&cat) {
            categories.push(cat);
        }
    }

    let question = clean_question(&text[..line_start + block_start]);
    if question.is_empty() {
        return Err(ParseError::MissingQuestion);
    }
    let reply = CategoryReply { question: String::from(question), categories };

    if mode == ParseMode::Strict {
        let trimmed = text.trim();
        let block = letters_block(&reply.categories);
        let canonical_space = [reply.question.as_str(), " ", &block].concat();
        let canonical_line = [reply.question.as_str(), "\n", &block].concat();
        if trimmed != canonical_space && trimmed != canonical_line {
            return Err(ParseError::Decorated);
        }
    }
    Ok(reply)
}

fn last_nonempty_line(text: &str) -> Option<(usize, &str)> {
    let mut found = None;
    let mut offset = 0;
    for line in text.split('\n') {
        if !line.trim().is_empty() {
            found = Some((offset, line));
        }
        offset += line.len() + 1;
    }
    found
}

fn clean_question(raw: &str) -> &str {
    let mut q = raw;
    loop {
        let before = q.len();
        q = q.trim_end_matches(SEPARATOR_DECORATION);
        for label in CATEGORY_LABELS {
            if let Some(stripped) = strip_suffix_ignore_case(q, label) {
                if !stripped.chars().last().is_some_and(char::is_alphanumeric) {
                    q = stripped;
                    break;
                }
            }
        }
        if q.len() == before {
            break;
        }
    }
    q = q.trim();
    for label in QUESTION_LABELS {
        if let Some(stripped) = strip_prefix_ignore_case(q, label) {
            q = stripped.trim_start();
            break;
        }
    }
    if q.len() >= 2 && q.starts_with('"') && q.ends_with('"') {
        q = q[1..q.len() - 1].trim();
    }
    q
}

fn strip_suffix_ignore_case<'a>(s: &'a str, suffix: &str) -> Option<&'a str> {
    let cut = s.len().checked_sub(suffix.len())?;
    if s.is_char_boundary(cut) && s[cut..].eq_ignore_ascii_case(suffix) {
        Some(&s[..cut])
    } else {
        None
    }
}

fn strip_prefix_ignore_case<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    if s.len() >= prefix.len()
        && s.is_char_boundary(prefix.len())
        && s[..prefix.len()].eq_ignore_ascii_case(prefix)
    {
        Some(&s[prefix.len()..])
    } else {
        None
    }
}

pub fn parse_route_reply(text: &str) -> Result<Route, ParseError> {
    parse_route_reply_with(text, ParseMode::Lenient)
}

pub fn parse_route_reply_with(text: &str, mode: ParseMode) -> Result<Route, ParseError> {
    let llm = |kind| Route::new(kind, RouteSource::LlmRouter);
    let trimmed = text.trim();
    if mode == ParseMode::Strict {
        return match trimmed {
            "U" => Ok(llm(RouteKind::UserQuery)),
            "W" => Ok(llm(RouteKind::WebRetrieval)),
            _ => Err(ParseError::Decorated),
        };
    }

    let bare = trimmed.trim_matches(|c: char| !c.is_alphanumeric());
    if bare.eq_ignore_ascii_case("u") {
        return Ok(llm(RouteKind::UserQuery));
    }
    if bare.eq_ignore_ascii_case("w") {
        return Ok(llm(RouteKind::WebRetrieval));
    }

    let mut last = None;
    for (start, token) in alnum_tokens(text) {
        let kind = match token {
            "U" => RouteKind::UserQuery,
            "W" => RouteKind::WebRetrieval,
            _ => continue,
        };
        if is_abbreviation(text, start) {
            continue;
        }
        last = Some(kind);
    }
    if let Some(kind) = last {
        return Ok(llm(kind));
    }

    let lower = text.to_lowercase();
    let user = lower.rfind("user query");
    let web = [lower.rfind("web search"), lower.rfind("web retrieval")].into_iter().flatten().max();
    match (user, web) {
        (Some(u), Some(w)) if u > w => Ok(llm(RouteKind::UserQuery)),
        (Some(_), None) => Ok(llm(RouteKind::UserQuery)),
        (_, Some(_)) => Ok(llm(RouteKind::WebRetrieval)),
        (None, None) => Err(ParseError::NoRouteFound),
    }
}

fn alnum_tokens(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut idx = 0;
    core::iter::from_fn(move || {
        let rest = &text[idx..];
        let start_rel = rest.find(char::is_alphanumeric)?;
        let start = idx + start_rel;
        let len = text[start..].find(|c: char| !c.is_alphanumeric()).unwrap_or(text.len() - start);
        idx = start + len;
        Some((start, &text[start..start + len]))
    })
}

// Single letter directly joined by '.' to another letter, as in "U.S." or "W.H.O".
fn is_abbreviation(text: &str, start: usize) -> bool {
    let after = &text[start + 1..];
    let mut it = after.chars();
    if it.next() == Some('.') && it.next().is_some_and(char::is_alphabetic) {
        return true;
    }
    let before = &text[..start];
    let mut rev = before.chars().rev();
    rev.next() == Some('.') && rev.next().is_some_and(char::is_alphabetic)
}

pub fn parse_score_reply(text: &str) -> Result<VeracityScore, ParseError> {
    parse_score_reply_with(text, ParseMode::Lenient)
}

pub fn parse_score_reply_with(text: &str, mode: ParseMode) -> Result<VeracityScore, ParseError> {
    let value = match mode {
        ParseMode::Strict => {
            let t = text.trim();
            let plain = !t.is_empty()
                && t.chars().all(|c| c.is_ascii_digit() || c == '.')
                && t.chars().filter(|&c| c == '.').count() <= 1
                && !t.ends_with('.');
            if !plain {
                return Err(ParseError::Decorated);
            }
            t.parse::<f64>().map_err(|_| ParseError::Decorated)?
        }
        ParseMode::Lenient => {
            let numerals = numerals(text);
            match numerals.iter().find(|v| (0.0..=1.0).contains(*v)) {
                Some(v) => *v,
                None => match numerals.first() {
                    Some(v) => return Err(ScoreError::OutOfRange(*v).into()),
                    None => return Err(ParseError::NoScoreFound),
                },
            }
        }
    };
    let mut score = snap_score(value)?;
    score.reply_text = String::from(text);
    Ok(score)
}

fn numerals(text: &str) -> Vec<f64> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let starts_number = bytes[i].is_ascii_digit()
            || (bytes[i] == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit));
        if !starts_number || (i > 0 && glued(text, i)) {
            i += 1;
            continue;
        }
        let (mut value, mut end) = scan_decimal(bytes, i);
        if bytes.get(end) == Some(&b'/') && bytes.get(end + 1).is_some_and(u8::is_ascii_digit) {
            let (denominator, dend) = scan_decimal(bytes, end + 1);
            end = dend;
            if denominator != 0.0 {
                value /= denominator;
            }
        } else if bytes.get(end) == Some(&b'%') {
            value /= 100.0;
            end += 1;
        }
        let trailing_glued = text[end..].chars().next().is_some_and(char::is_alphanumeric);
        let negative = i > 0 && bytes[i - 1] == b'-' && (i < 2 || !glued(text, i - 1));
        if !trailing_glued {
            out.push(if negative { -value } else { value });
        }
        i = end.max(i + 1);
    }
    out
}

// Whether the character before byte `i` is a letter, digit or '.', which
// would make a numeral starting at `i` part of a larger token.
fn glued(text: &str, i: usize) -> bool {
    text[..i].chars().last().is_some_and(|c| c.is_alphanumeric() || c == '.')
}

fn scan_decimal(bytes: &[u8], start: usize) -> (f64, usize) {
    let mut end = start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end < bytes.len() && bytes[end] == b'.' && bytes.get(end + 1).is_some_and(u8::is_ascii_digit)
    {
        end += 1;
        while end < bytes.len() && bytes[end].is_ascii_digit() {
            end += 1;
        }
    }
    // The slice is ASCII digits with at most one interior '.', which always parses.
    let value = core::str::from_utf8(&bytes[start..end])
        .ok()
        .and_then(|s| s.parse::<f64>().ok())
        .unwrap_or(f64::NAN);
    (value, end)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ScoreLevel;
    use MissingInfoCategory::*;

    #[test]
    fn category_examples() {
        let r = parse_category_reply("Which nurse are you referring to? A").unwrap();
        assert_eq!(r.question, "Which nurse are you referring to?");
        assert_eq!(r.categories, [A]);
        let r = parse_category_reply("Can you provide the image? E|F").unwrap();
        assert_eq!(r.categories, [E, F]);
        assert_eq!(r.primary(), E);
        assert_eq!(parse_category_reply("I cannot determine this."), Err(ParseError::NoCategoryFound));
        assert_eq!(
            parse_category_reply("Which one? D"),
            Err(ParseError::InvalidCategoryLetter(CategoryError::InvalidLetter('D')))
        );
    }

    #[test]
    fn category_decorations() {
        let r = parse_category_reply("Question: Which nurse?\nCategory: A.").unwrap();
        assert_eq!(r.question, "Which nurse?");
        assert_eq!(r.categories, [A]);
        let r = parse_category_reply("\"Which city?\" (B)").unwrap();
        assert_eq!(r.question, "Which city?");
        let r = parse_category_reply("When was this said? F | C").unwrap();
        assert_eq!(r.categories, [F, C]);
        assert_eq!(parse_category_reply("A"), Err(ParseError::MissingQuestion));
        assert_eq!(parse_category_reply("Where in the USA"), Err(ParseError::NoCategoryFound));
    }

    #[test]
    fn category_strict() {
        assert!(parse_category_reply_with("Which nurse? A", ParseMode::Strict).is_ok());
        assert!(parse_category_reply_with("Which nurse?\nE|F", ParseMode::Strict).is_ok());
        assert_eq!(
            parse_category_reply_with("Which nurse? Category: A", ParseMode::Strict),
            Err(ParseError::Decorated)
        );
        assert_eq!(
            parse_category_reply_with("Which nurse? A.", ParseMode::Strict),
            Err(ParseError::NoCategoryFound)
        );
    }

    #[test]
    fn route_examples() {
        assert_eq!(parse_route_reply("U").unwrap().kind, RouteKind::UserQuery);
        assert_eq!(parse_route_reply("W").unwrap().kind, RouteKind::WebRetrieval);
        assert_eq!(parse_route_reply("The answer is: U").unwrap().kind, RouteKind::UserQuery);
        assert_eq!(
            parse_route_reply("W, since the U.S. law is public").unwrap().kind,
            RouteKind::WebRetrieval
        );
        assert_eq!(parse_route_reply("Not W but U").unwrap().kind, RouteKind::UserQuery);
        assert_eq!(parse_route_reply("I am unsure."), Err(ParseError::NoRouteFound));
        assert_eq!(parse_route_reply("u").unwrap().source, RouteSource::LlmRouter);
        assert_eq!(parse_route_reply_with("U.", ParseMode::Strict), Err(ParseError::Decorated));
    }

    #[test]
    fn score_examples() {
        assert_eq!(parse_score_reply("0.5").unwrap().snapped, ScoreLevel::Abstain);
        assert_eq!(parse_score_reply("Score: 1").unwrap().snapped, ScoreLevel::True);
        assert_eq!(parse_score_reply(".5").unwrap().snapped, ScoreLevel::Abstain);
        assert_eq!(parse_score_reply("It is false."), Err(ParseError::NoScoreFound));
        assert_eq!(parse_score_reply("5"), Err(ParseError::OutOfRange(ScoreError::OutOfRange(5.0))));
        assert_eq!(parse_score_reply("COVID-19 claim: 0").unwrap().snapped, ScoreLevel::False);
        assert_eq!(parse_score_reply("-0.5"), Err(ParseError::OutOfRange(ScoreError::OutOfRange(-0.5))));
        assert_eq!(parse_score_reply("1/2").unwrap().snapped, ScoreLevel::Abstain);
        assert_eq!(parse_score_reply("Score: 0.").unwrap().raw, Some(0.0));
        let s = parse_score_reply("Rating: 1.0\n").unwrap();
        assert_eq!(s.reply_text, "Rating: 1.0\n");
        assert_eq!(parse_score_reply_with("Score: 1", ParseMode::Strict), Err(ParseError::Decorated));
        assert_eq!(parse_score_reply_with("0.5", ParseMode::Strict).unwrap().raw, Some(0.5));
    }
}
