use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Minimum findings length kept by [`filter_report`].
pub const MIN_FINDINGS_TOKENS: usize = 10;
/// Minimum impression length kept by [`filter_report`].
pub const MIN_IMPRESSION_TOKENS: usize = 2;

/// One radiology report: background, findings (source) and impression
/// (target), each already tokenized.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub id: String,
    pub body_part: String,
    pub background: Vec<String>,
    pub findings: Vec<String>,
    pub impression: Vec<String>,
}

impl Report {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("reports always serialize")
    }
}

/// Lowercases, splits on whitespace and detaches punctuation into separate
/// tokens. A period between two digits stays inside the number.
pub fn tokenize(text: &str) -> Vec<String> {
    const PUNCT: &[char] = &[
        '.', ',', ';', ':', '!', '?', '(', ')', '[', ']', '{', '}', '"',
    ];
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().flat_map(char::to_lowercase).collect();
        let mut cur = String::new();
        for (i, &c) in chars.iter().enumerate() {
            let numeric_dot = c == '.'
                && i > 0
                && chars[i - 1].is_ascii_digit()
                && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
            if PUNCT.contains(&c) && !numeric_dot {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(c.to_string());
            } else {
                cur.push(c);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

/// Why a parsed report was excluded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum DropReason {
    FindingsTooShort,
    ImpressionTooShort,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropReason::FindingsTooShort => "FindingsTooShort",
            DropReason::ImpressionTooShort => "ImpressionTooShort",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterDecision {
    Keep,
    Drop(DropReason),
}

/// Length rules: findings of at least 10 tokens, impression of at least 2.
pub fn filter_report(r: &Report) -> FilterDecision {
    if r.findings.len() < MIN_FINDINGS_TOKENS {
        FilterDecision::Drop(DropReason::FindingsTooShort)
    } else if r.impression.len() < MIN_IMPRESSION_TOKENS {
        FilterDecision::Drop(DropReason::ImpressionTooShort)
    } else {
        FilterDecision::Keep
    }
}

// Object entries in source order, duplicates preserved.
struct Entries(Vec<(String, Value)>);

impl<'de> Deserialize<'de> for Entries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Entries;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Entries, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, Value>()? {
                    out.push((k, v));
                }
                Ok(Entries(out))
            }
        }
        d.deserialize_map(V)
    }
}

enum Section {
    Missing,
    One(Vec<String>),
    Many,
}

fn section_tokens(v: &Value) -> std::result::Result<Section, String> {
    match v {
        Value::Null => Ok(Section::Missing),
        Value::String(s) => Ok(Section::One(tokenize(s))),
        Value::Array(items) if items.iter().all(Value::is_string) => Ok(Section::One(
            items
                .iter()
                .map(|t| t.as_str().unwrap_or_default().to_string())
                .collect(),
        )),
        // An array of sections: several candidates for one slot.
        Value::Array(items) if items.iter().all(|i| i.is_array() || i.is_string()) => {
            match items.len() {
                0 => Ok(Section::Missing),
                1 => section_tokens(&items[0]),
                _ => Ok(Section::Many),
            }
        }
        other => Err(format!("unexpected section value {other}")),
    }
}

/// Parses one corpus record.
///
/// Section fields may be a string (tokenized here), an array of tokens, or
/// an array of several sections. Absent, null or empty sections are
/// `MissingSection`; a section given more than once (repeated key or several
/// candidates) is `AmbiguousSections`. Structural JSON problems are
/// `MalformedRecord` tagged with `line`.
pub fn parse_report(raw: &str, line: usize) -> Result<Report> {
    let malformed = |message: String| Error::MalformedRecord { line, message };
    let entries: Entries =
        serde_json::from_str(raw).map_err(|e| malformed(e.to_string()))?;

    let mut id = None;
    let mut body_part = None;
    let mut sections: [(&str, Vec<Section>); 3] = [
        ("background", Vec::new()),
        ("findings", Vec::new()),
        ("impression", Vec::new()),
    ];
    for (key, value) in &entries.0 {
        match key.as_str() {
            "id" => id = value.as_str().map(str::to_string),
            "body_part" => body_part = value.as_str().map(str::to_lowercase),
            k => {
                if let Some((_, slot)) = sections.iter_mut().find(|(name, _)| *name == k) {
                    slot.push(section_tokens(value).map_err(malformed)?);
                }
            }
        }
    }
    let id = id.ok_or_else(|| malformed("missing string field \"id\"".into()))?;
    let body_part =
        body_part.ok_or_else(|| malformed("missing string field \"body_part\"".into()))?;

    let mut resolved: Vec<Vec<String>> = Vec::with_capacity(3);
    // Ambiguity is reported before absence so a record with two findings and
    // no impression is classified by its findings problem.
    for (name, found) in &sections {
        let present: Vec<&Section> = found
            .iter()
            .filter(|s| !matches!(s, Section::Missing))
            .collect();
        if present.len() > 1 || present.iter().any(|s| matches!(s, Section::Many)) {
            return Err(Error::AmbiguousSections((*name).to_string()));
        }
    }
    for (name, found) in sections {
        let tokens = found.into_iter().find_map(|s| match s {
            Section::One(t) if !t.is_empty() => Some(t),
            _ => None,
        });
        match tokens {
            Some(t) => resolved.push(t),
            None => return Err(Error::MissingSection(name.to_string())),
        }
    }
    let impression = resolved.pop().unwrap_or_default();
    let findings = resolved.pop().unwrap_or_default();
    let background = resolved.pop().unwrap_or_default();
    Ok(Report {
        id,
        body_part,
        background,
        findings,
        impression,
    })
}
