use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{EntitySpan, Sentence};
use crate::error::{Error, Result};
use crate::labels::OUTSIDE;

/// Surface strings (as token sequences) mapped to the entity types a knowledge
/// base lists for them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Gazetteer {
    entries: BTreeMap<Vec<String>, BTreeSet<String>>,
    longest: usize,
}

impl Gazetteer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `surface` (split on whitespace) with one more type. Repeated entries merge.
    pub fn insert(&mut self, surface: &str, entity_type: &str) -> Result<()> {
        let tokens: Vec<String> = surface.split_whitespace().map(str::to_string).collect();
        if tokens.is_empty() {
            return Err(Error::InvalidArgument("gazetteer surface is empty".into()));
        }
        let entity_type = entity_type.trim();
        if entity_type.is_empty() || entity_type == OUTSIDE {
            return Err(Error::InvalidArgument(format!(
                "gazetteer type {entity_type:?} for {surface:?} is not an entity type"
            )));
        }
        self.longest = self.longest.max(tokens.len());
        self.entries
            .entry(tokens)
            .or_default()
            .insert(entity_type.to_string());
        Ok(())
    }

    /// Parses `surface<TAB>type` lines. Blank lines are skipped.
    pub fn read<R: BufRead>(reader: R, origin: &str) -> Result<Self> {
        let mut gaz = Self::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |reason: String| Error::Parse {
                origin: origin.to_string(),
                line: idx + 1,
                reason,
            };
            let (surface, ty) = line
                .split_once('\t')
                .ok_or_else(|| parse_err(format!("expected `surface<TAB>type`, got {line:?}")))?;
            gaz.insert(surface, ty)
                .map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(gaz)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), &path.display().to_string())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn types_of(&self, surface: &[String]) -> Option<&BTreeSet<String>> {
        self.entries.get(surface)
    }

    pub fn max_entry_len(&self) -> usize {
        self.longest
    }
}

/// Context-free dictionary matching: exact and case-sensitive, scanning left to
/// right and taking the longest entry that starts at each position. Matches
/// never overlap. A surface listed under several types gets the
/// lexicographically smallest one.
pub fn match_gazetteer(sentence: &Sentence, gaz: &Gazetteer) -> Vec<EntitySpan> {
    let tokens = &sentence.tokens;
    let n = tokens.len();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < n {
        let longest = gaz.max_entry_len().min(n - i);
        let hit = (1..=longest).rev().find_map(|len| {
            gaz.types_of(&tokens[i..i + len])
                .and_then(|types| types.first())
                .map(|ty| (len, ty))
        });
        match hit {
            Some((len, ty)) => {
                spans.push(EntitySpan::new(i + 1, i + len, ty.clone()));
                i += len;
            }
            None => i += 1,
        }
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaz(entries: &[(&str, &str)]) -> Gazetteer {
        let mut g = Gazetteer::new();
        for (s, t) in entries {
            g.insert(s, t).unwrap();
        }
        g
    }

    #[test]
    fn ambiguous_surface_takes_smallest_type() {
        let g = gaz(&[("Washington", "PER"), ("Washington", "LOC")]);
        let s = Sentence::new(["Washington", "went", "home"]);
        assert_eq!(match_gazetteer(&s, &g), vec![EntitySpan::new(1, 1, "LOC")]);
    }

    #[test]
    fn empty_gazetteer_matches_nothing() {
        let s = Sentence::new(["Washington"]);
        assert!(match_gazetteer(&s, &Gazetteer::new()).is_empty());
    }

    #[test]
    fn longest_match_wins() {
        let g = gaz(&[("New York", "LOC"), ("New York City", "LOC")]);
        let s = Sentence::new(["New", "York", "City"]);
        assert_eq!(match_gazetteer(&s, &g), vec![EntitySpan::new(1, 3, "LOC")]);
    }

    /// Exhaustive oracle: among all entries starting at the scan position, the
    /// longest one is chosen; scanning then resumes after it.
    fn oracle(tokens: &[String], g: &Gazetteer) -> Vec<EntitySpan> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let mut best: Option<(usize, String)> = None;
            for j in i..tokens.len() {
                if let Some(types) = g.types_of(&tokens[i..=j]) {
                    let ty = types.iter().min().unwrap().clone();
                    if best.as_ref().is_none_or(|(len, _)| j + 1 - i > *len) {
                        best = Some((j + 1 - i, ty));
                    }
                }
            }
            match best {
                Some((len, ty)) => {
                    out.push(EntitySpan::new(i + 1, i + len, ty));
                    i += len;
                }
                None => i += 1,
            }
        }
        out
    }

    #[test]
    fn matches_exhaustive_oracle_and_never_overlaps() {
        use rand::{Rng, SeedableRng};
        let vocab = ["a", "b", "c", "d"];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let mut g = Gazetteer::new();
            for _ in 0..rng.gen_range(0..6) {
                let len = rng.gen_range(1..4);
                let surface: Vec<&str> = (0..len).map(|_| vocab[rng.gen_range(0..4)]).collect();
                let ty = ["X", "Y", "Z"][rng.gen_range(0..3)];
                g.insert(&surface.join(" "), ty).unwrap();
            }
            let n = rng.gen_range(1..12);
            let s = Sentence::new((0..n).map(|_| vocab[rng.gen_range(0..4)]));
            let got = match_gazetteer(&s, &g);
            assert_eq!(got, oracle(&s.tokens, &g));
            assert_eq!(got, match_gazetteer(&s, &g));
            for pair in got.windows(2) {
                assert!(pair[0].end < pair[1].start);
            }
        }
    }

    #[test]
    fn matching_is_case_sensitive() {
        let g = gaz(&[("Apple", "ORG")]);
        assert!(match_gazetteer(&Sentence::new(["apple"]), &g).is_empty());
    }

    #[test]
    fn reads_tab_separated_and_merges_duplicates() {
        let text = "Washington\tPER\nWashington\tLOC\nNew York\tLOC\n\nWashington\tPER\n";
        let g = Gazetteer::read(text.as_bytes(), "gaz").unwrap();
        assert_eq!(g.len(), 2);
        let types: Vec<&str> = g
            .types_of(&["Washington".to_string()])
            .unwrap()
            .iter()
            .map(String::as_str)
            .collect();
        assert_eq!(types, ["LOC", "PER"]);
        assert_eq!(g.max_entry_len(), 2);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(matches!(
            Gazetteer::read("Paris LOC\n".as_bytes(), "gaz"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(Gazetteer::read("\tLOC\n".as_bytes(), "gaz").is_err());
        assert!(Gazetteer::read("Paris\t\n".as_bytes(), "gaz").is_err());
    }
}
