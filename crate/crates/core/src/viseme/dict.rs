use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 13 viseme symbols.
pub const VISEMES: [char; 13] = ['P', 'T', '-', 'L', 'F', 'I', 'E', 'A', 'O', 'U', 'R', 'S', 'G'];

/// Marks a missing neighbour at a word boundary.
pub const EMPTY: char = '#';

const DEFAULT_TABLE: [(&str, char); 13] = [
    ("b m p", 'P'),
    ("d n s t", 'T'),
    ("@ N g h k x", '-'),
    ("l", 'L'),
    ("f v", 'F'),
    ("I i j", 'I'),
    ("E e", 'E'),
    ("a", 'A'),
    ("& O Q o", 'O'),
    ("U Y u y", 'U'),
    ("r", 'R'),
    ("z", 'S'),
    ("S", 'G'),
];

/// Phoneme (CELEX notation) to viseme mapping.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VisemeDict {
    map: BTreeMap<String, char>,
}

impl Default for VisemeDict {
    fn default() -> Self {
        let map = DEFAULT_TABLE
            .iter()
            .flat_map(|(phonemes, v)| phonemes.split_whitespace().map(move |p| (p.to_string(), *v)))
            .collect();
        Self { map }
    }
}

impl VisemeDict {
    pub fn new(map: BTreeMap<String, char>) -> Result<Self> {
        if let Some((p, v)) = map.iter().find(|(_, v)| !VISEMES.contains(v)) {
            return Err(Error::Invalid(format!("phoneme '{p}' maps to unknown viseme '{v}'")));
        }
        Ok(Self { map })
    }

    pub fn get(&self, phoneme: &str) -> Option<char> {
        self.map.get(phoneme).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn to_json(&self) -> String {
        let raw: BTreeMap<&str, String> = self.map.iter().map(|(p, v)| (p.as_str(), v.to_string())).collect();
        serde_json::to_string_pretty(&raw).expect("dictionary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, String> =
            serde_json::from_str(text).map_err(|e| Error::Invalid(format!("viseme dictionary: {e}")))?;
        let mut map = BTreeMap::new();
        for (p, v) in raw {
            let mut chars = v.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => {
                    map.insert(p, c);
                }
                _ => return Err(Error::Invalid(format!("phoneme '{p}' maps to '{v}', not a single symbol"))),
            }
        }
        Self::new(map)
    }

    /// Visemes of each word of a whitespace-separated phoneme string. A `|`
    /// or `#` token separates words. Error positions count tokens from 0.
    pub fn words(&self, query: &str) -> Result<Vec<Vec<char>>> {
        let mut words = vec![Vec::new()];
        for (position, token) in query.split_whitespace().enumerate() {
            if token == "|" || token == "#" {
                words.push(Vec::new());
                continue;
            }
            let v = self.get(token).ok_or_else(|| Error::UnknownPhoneme {
                phoneme: token.to_string(),
                position,
            })?;
            words.last_mut().unwrap().push(v);
        }
        words.retain(|w| !w.is_empty());
        Ok(words)
    }

    /// Extended labels for a phoneme query, one per viseme.
    pub fn phonemes_to_extended(&self, query: &str) -> Result<Vec<ExtendedLabel>> {
        Ok(self.words(query)?.iter().flat_map(|w| extend_word(w)).collect())
    }
}

/// Wraps a word's viseme sequence with its neighbours and the empty marker
/// at both ends.
pub fn extend_word(visemes: &[char]) -> Vec<ExtendedLabel> {
    (0..visemes.len())
        .map(|i| ExtendedLabel {
            prev: if i == 0 { EMPTY } else { visemes[i - 1] },
            cur: visemes[i],
            next: visemes.get(i + 1).copied().unwrap_or(EMPTY),
        })
        .collect()
}

/// Previous, current and next viseme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExtendedLabel {
    pub prev: char,
    pub cur: char,
    pub next: char,
}

impl ExtendedLabel {
    pub fn new(prev: char, cur: char, next: char) -> Result<Self> {
        let ok = |c: char, allow_empty: bool| VISEMES.contains(&c) || (allow_empty && c == EMPTY);
        if !ok(prev, true) || !ok(cur, false) || !ok(next, true) {
            return Err(Error::Invalid(format!("'{prev}{cur}{next}' is not an extended viseme label")));
        }
        Ok(Self { prev, cur, next })
    }

    /// Context entries that agree with `query` (0 to 2).
    pub fn context_score(&self, query: &ExtendedLabel) -> u8 {
        u8::from(self.prev == query.prev) + u8::from(self.next == query.next)
    }
}

impl fmt::Display for ExtendedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.prev, self.cur, self.next)
    }
}

impl FromStr for ExtendedLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let c: Vec<char> = s.chars().collect();
        if c.len() != 3 {
            return Err(Error::Invalid(format!("'{s}' is not a three-symbol label")));
        }
        Self::new(c[0], c[1], c[2])
    }
}

impl Serialize for ExtendedLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ExtendedLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
