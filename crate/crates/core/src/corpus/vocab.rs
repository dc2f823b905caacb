use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::Report;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const SOS: usize = 2;
pub const EOS: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<sos>", "<eos>"];

pub const DEFAULT_MAX_SIZE: usize = 50_000;
pub const DEFAULT_MIN_COUNT: usize = 1;

/// Token/id mapping with four fixed reserved entries at ids 0..4.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Reserved entries followed by `tokens` in order. Duplicates and
    /// reserved strings in `tokens` are skipped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut seen: std::collections::HashSet<String> = all.iter().cloned().collect();
        for t in tokens {
            let t = t.into();
            if seen.insert(t.clone()) {
                all.push(t);
            }
        }
        Self::from(all)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of `token`, or [`UNK`] when absent.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// 64-bit FNV-1a over the token list, used to detect mismatched models
    /// and corpora.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in &self.tokens {
            for b in t.bytes().chain(std::iter::once(b'\n')) {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    /// One token per line; line number is the id.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        for t in &self.tokens {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut tokens = Vec::new();
        for line in r.lines() {
            let line = line.map_err(|e| Error::io("<vocabulary>", e))?;
            tokens.push(line);
        }
        if tokens.len() < RESERVED.len() || tokens[..4] != RESERVED {
            return Err(Error::MalformedVocab(
                "file must start with the four reserved tokens".into(),
            ));
        }
        let v = Self::from(tokens);
        if v.index.len() != v.tokens.len() {
            return Err(Error::MalformedVocab("duplicate token".into()));
        }
        Ok(v)
    }
}

/// The parameters a vocabulary was built with, so it can be rebuilt from
/// the same training split and compared.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabSpec {
    pub max_size: usize,
    pub min_count: usize,
}

impl Default for VocabSpec {
    fn default() -> Self {
        Self {
            max_size: DEFAULT_MAX_SIZE,
            min_count: DEFAULT_MIN_COUNT,
        }
    }
}

impl VocabSpec {
    pub fn build(&self, reports: &[Report]) -> Vocabulary {
        build_vocab(reports, self.max_size, self.min_count)
    }
}

/// Frequency-ranked vocabulary over all three sections.
///
/// `max_size` includes the four reserved entries. Tokens seen fewer than
/// `min_count` times are left out; equal counts are ordered
/// lexicographically.
pub fn build_vocab(reports: &[Report], max_size: usize, min_count: usize) -> Vocabulary {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in reports {
        for t in r.background.iter().chain(&r.findings).chain(&r.impression) {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_count && !RESERVED.contains(t))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let room = max_size.saturating_sub(RESERVED.len());
    Vocabulary::from_tokens(ranked.into_iter().take(room).map(|(t, _)| t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn report(findings: &[&str]) -> Report {
        Report {
            id: "r".into(),
            body_part: "ankle".into(),
            background: vec![],
            findings: findings.iter().map(|s| s.to_string()).collect(),
            impression: vec![],
        }
    }

    #[test]
    fn reserved_ids_are_fixed() {
        let v = build_vocab(&[report(&["a"])], 100, 1);
        assert_eq!(v.token(PAD), Some("<pad>"));
        assert_eq!(v.token(UNK), Some("<unk>"));
        assert_eq!(v.token(SOS), Some("<sos>"));
        assert_eq!(v.token(EOS), Some("<eos>"));
    }

    #[test]
    fn min_count_excludes_rare_tokens() {
        let r = report(&["ankle"; 5]);
        let v = build_vocab(&[r], 100, 6);
        assert_eq!(v.id("ankle"), UNK);
        assert_eq!(v.len(), 4);
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = build_vocab(&[report(&["zeta", "alpha", "zeta", "alpha", "mid"])], 100, 1);
        assert!(v.id("alpha") < v.id("zeta"));
        assert!(v.id("zeta") < v.id("mid"));
    }

    #[test]
    fn no_headroom_leaves_only_reserved() {
        let v = build_vocab(&[report(&["a", "b"])], 4, 1);
        assert_eq!(v.len(), 4);
        let v = build_vocab(&[report(&["a", "b", "b"])], 5, 1);
        assert_eq!(v.tokens()[4], "b");
    }

    #[test]
    fn file_round_trip_and_validation() {
        let v = Vocabulary::from_tokens(["ankle", "knee"]);
        let mut buf = Vec::new();
        v.write_to(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "<pad>\n<unk>\n<sos>\n<eos>\nankle\nknee\n"
        );
        assert_eq!(Vocabulary::read_from(&buf[..]).unwrap(), v);
        assert!(Vocabulary::read_from(&b"ankle\n"[..]).is_err());
    }

    proptest! {
        #[test]
        fn token_id_round_trip(words in prop::collection::vec("[a-z]{1,6}", 1..60)) {
            let words: Vec<&str> = words.iter().map(String::as_str).collect();
            let v = build_vocab(&[report(&words)], 1000, 1);
            for id in RESERVED.len()..v.len() {
                prop_assert_eq!(v.id(v.token(id).unwrap()), id);
            }
        }
    }
}
