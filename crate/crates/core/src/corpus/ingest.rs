use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{filter_report, parse_report, DropReason, FilterDecision, Report};
use crate::error::{Error, Result};

/// Why a record did not make it into the filtered corpus.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Exclusion {
    MissingSection(String),
    AmbiguousSections(String),
    Filtered(DropReason),
}

impl Exclusion {
    pub fn label(&self) -> String {
        match self {
            Exclusion::MissingSection(s) => format!("MissingSection({s})"),
            Exclusion::AmbiguousSections(s) => format!("AmbiguousSections({s})"),
            Exclusion::Filtered(r) => r.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LedgerEntry {
    pub line: usize,
    pub id: Option<String>,
    pub excluded: Option<Exclusion>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IngestOutcome {
    pub kept: Vec<Report>,
    pub ledger: Vec<LedgerEntry>,
}

impl IngestOutcome {
    pub fn dropped_by_reason(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for e in &self.ledger {
            if let Some(x) = &e.excluded {
                *out.entry(x.label()).or_default() += 1;
            }
        }
        out
    }

    pub fn kept_by_body_part(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for r in &self.kept {
            *out.entry(r.body_part.clone()).or_default() += 1;
        }
        out
    }
}

/// Parses and filters raw records, one JSON object per line.
///
/// Blank lines are skipped. Records with missing or ambiguous sections and
/// records failing the length rules are excluded and logged; a line that is
/// not a well-formed record aborts with `MalformedRecord`.
pub fn ingest(reader: impl BufRead) -> Result<IngestOutcome> {
    let mut out = IngestOutcome::default();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(format!("<input line {lineno}>"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, excluded) = match parse_report(&line, lineno) {
            Ok(r) => match filter_report(&r) {
                FilterDecision::Keep => {
                    let id = r.id.clone();
                    out.kept.push(r);
                    (Some(id), None)
                }
                FilterDecision::Drop(reason) => (Some(r.id), Some(Exclusion::Filtered(reason))),
            },
            Err(Error::MissingSection(s)) => (record_id(&line), Some(Exclusion::MissingSection(s))),
            Err(Error::AmbiguousSections(s)) => {
                (record_id(&line), Some(Exclusion::AmbiguousSections(s)))
            }
            Err(e) => return Err(e),
        };
        out.ledger.push(LedgerEntry {
            line: lineno,
            id,
            excluded,
        });
    }
    Ok(out)
}

fn record_id(line: &str) -> Option<String> {
    serde_json::from_str::<serde_json::Value>(line)
        .ok()?
        .get("id")?
        .as_str()
        .map(str::to_string)
}

/// Keeps at most `cap` reports per body part, chosen by a seeded shuffle.
/// Surviving reports keep their original relative order.
pub fn cap_body_parts(reports: Vec<Report>, cap: usize, seed: u64) -> Vec<Report> {
    let mut by_part: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in reports.iter().enumerate() {
        by_part.entry(r.body_part.as_str()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; reports.len()];
    for idx in by_part.values_mut() {
        if idx.len() > cap {
            idx.shuffle(&mut rng);
            idx.truncate(cap);
        }
        for &i in idx.iter() {
            keep[i] = true;
        }
    }
    reports
        .into_iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then_some(r))
        .collect()
}

/// Reads a canonical corpus file.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Report>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus_from(BufReader::new(file))
}

pub fn read_corpus_from(reader: impl BufRead) -> Result<Vec<Report>> {
    let mut out = Vec::new();
    let mut ids = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<corpus>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: Report = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(prev) = ids.insert(r.id.clone(), i + 1) {
            return Err(Error::MalformedRecord {
                line: i + 1,
                message: format!("duplicate id {:?} (first at line {prev})", r.id),
            });
        }
        out.push(r);
    }
    Ok(out)
}

pub fn write_corpus(path: impl AsRef<Path>, reports: &[Report]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_corpus_to(&mut w, reports).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_corpus_to(mut w: impl Write, reports: &[Report]) -> std::io::Result<()> {
    for r in reports {
        writeln!(w, "{}", r.to_json_line())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, findings: usize, impression: usize) -> String {
        let f: Vec<String> = (0..findings).map(|i| format!("f{i}")).collect();
        let m: Vec<String> = (0..impression).map(|i| format!("m{i}")).collect();
        serde_json::json!({"id": id, "body_part": "ankle", "background": ["left"],
            "findings": f, "impression": m})
        .to_string()
    }

    #[test]
    fn three_valid_one_short() {
        let input = [line("a", 12, 3), line("b", 9, 3), line("c", 10, 2), line("d", 20, 4)].join("\n");
        let out = ingest(input.as_bytes()).unwrap();
        assert_eq!(out.kept.len(), 3);
        assert_eq!(out.dropped_by_reason()["FindingsTooShort"], 1);
        assert_eq!(out.kept_by_body_part()["ankle"], 3);
    }

    #[test]
    fn malformed_line_aborts_with_line_number() {
        let input = format!("{}\n{{oops\n", line("a", 12, 3));
        assert!(matches!(
            ingest(input.as_bytes()),
            Err(Error::MalformedRecord { line: 2, .. })
        ));
    }

    #[test]
    fn empty_input_keeps_nothing() {
        let out = ingest(&b""[..]).unwrap();
        assert!(out.kept.is_empty() && out.ledger.is_empty());
    }

    #[test]
    fn cap_limits_each_body_part() {
        let mut rs = crate::corpus::generate_synthetic_corpus(200, 1);
        rs.sort_by(|a, b| a.id.cmp(&b.id));
        let capped = cap_body_parts(rs.clone(), 5, 9);
        let counts = IngestOutcome { kept: capped.clone(), ledger: vec![] }.kept_by_body_part();
        assert!(counts.values().all(|&c| c == 5));
        assert!(capped.windows(2).all(|w| w[0].id < w[1].id));
        assert_eq!(cap_body_parts(rs.clone(), 1000, 9), rs);
    }

    #[test]
    fn corpus_round_trip() {
        let rs = crate::corpus::generate_synthetic_corpus(5, 2);
        let mut buf = Vec::new();
        write_corpus_to(&mut buf, &rs).unwrap();
        assert_eq!(read_corpus_from(&buf[..]).unwrap(), rs);
    }
}
