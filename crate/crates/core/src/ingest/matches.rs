//! Match files: a one-line header, then `pair_a pair_b x1 y1 x2 y2` per row.

use std::fmt::Write as _;
use std::path::Path;

use super::{format_g17, read_text, write_text, IngestError, Result};
use crate::epipolar::{Correspondence, MatchSet};

pub const MATCHES_HEADER: &str = "pair_a pair_b x1 y1 x2 y2";

/// Parses match rows from text. Rows are grouped by pair in order of first
/// appearance; row order within a pair is kept and duplicates are not removed.
pub fn parse_matches(path: &Path, text: &str) -> Result<Vec<MatchSet>> {
    let mut groups: Vec<((usize, usize), Vec<Correspondence>)> = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let ln = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 6 {
            return Err(IngestError::parse(path, ln, format!("expected 6 fields, got {}", tok.len())));
        }
        let idx = |k: usize| {
            tok[k]
                .parse::<usize>()
                .map_err(|_| IngestError::parse(path, ln, format!("bad frame index {:?}", tok[k])))
        };
        let coord = |k: usize| match tok[k].parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(IngestError::parse(path, ln, format!("bad coordinate {:?}", tok[k]))),
        };
        let pair = (idx(0)?, idx(1)?);
        if pair.0 == pair.1 {
            return Err(IngestError::parse(path, ln, format!("pair ({}, {}) matches a frame to itself", pair.0, pair.1)));
        }
        let c = Correspondence::new(coord(2)?, coord(3)?, coord(4)?, coord(5)?);
        match groups.iter_mut().find(|(p, _)| *p == pair) {
            Some((_, v)) => v.push(c),
            None => groups.push((pair, vec![c])),
        }
    }
    groups
        .into_iter()
        .map(|(pair, m)| MatchSet::new(pair, m).map_err(|e| IngestError::InvalidInput(e.to_string())))
        .collect()
}

pub fn read_matches(path: &Path) -> Result<Vec<MatchSet>> {
    parse_matches(path, &read_text(path)?)
}

pub fn matches_text(sets: &[MatchSet]) -> String {
    let mut s = format!("{MATCHES_HEADER}\n");
    for ms in sets {
        for m in &ms.matches {
            let _ = writeln!(
                s,
                "{} {} {} {} {} {}",
                ms.pair.0,
                ms.pair.1,
                format_g17(m.x1),
                format_g17(m.y1),
                format_g17(m.x2),
                format_g17(m.y2)
            );
        }
    }
    s
}

pub fn write_matches(sets: &[MatchSet], path: &Path) -> Result<()> {
    write_text(path, &matches_text(sets))
}
