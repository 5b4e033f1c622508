use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;

use super::db::{MotionSample, SampleDb};
use crate::error::{Error, Result};
use crate::formats::{self, Reader, Writer};

const MAGIC: &[u8; 4] = b"VSTT";
const VERSION: u32 = 1;

pub const DEFAULT_WINDOW: usize = 4;
pub const DEFAULT_SEARCH: usize = 3;

/// Best junction between two samples. `tail` is the last frame of the
/// window in the first sample, `head` the first frame of the window in the
/// second.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub cost: f64,
    pub tail: usize,
    pub head: usize,
}

/// Window length actually used for a pair.
pub fn effective_window(window: usize, a: &MotionSample, b: &MotionSample) -> usize {
    window.min(a.frames()).min(b.frames())
}

/// Mean squared latent difference between `a`'s window ending at `tail`
/// and `b`'s window starting at `head`.
pub fn alignment_cost(a: &MotionSample, b: &MotionSample, tail: usize, head: usize, window: usize) -> f64 {
    let d = a.dim();
    let first = tail + 1 - window;
    let mut sum = 0.0;
    for w in 0..window {
        for (x, y) in a.frame(first + w).iter().zip(b.frame(head + w)) {
            sum += (x - y) * (x - y);
        }
    }
    sum / (window * d) as f64
}

/// Searches tails among the last `search` frames of `a` and heads among the
/// first `search` frames of `b`. Ties go to the smallest (tail, head).
pub fn transition_cost(a: &MotionSample, b: &MotionSample, window: usize, search: usize) -> Result<Transition> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "samples {} and {} have d = {} and {}",
            a.id,
            b.id,
            a.dim(),
            b.dim()
        )));
    }
    if window == 0 || search == 0 {
        return Err(Error::Invalid("transition window and search range must be positive".into()));
    }
    let w = effective_window(window, a, b);
    let (la, lb) = (a.frames(), b.frames());
    let tail_lo = (w - 1).max(la.saturating_sub(search));
    let head_hi = (search - 1).min(lb - w);
    let mut best = Transition {
        cost: f64::INFINITY,
        tail: 0,
        head: 0,
    };
    for tail in tail_lo..la {
        for head in 0..=head_hi {
            let cost = alignment_cost(a, b, tail, head, w);
            if cost < best.cost {
                best = Transition { cost, tail, head };
            }
        }
    }
    Ok(best)
}

/// Transitions for every ordered pair of samples in a database.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionTable {
    window: usize,
    entries: BTreeMap<(u32, u32), Transition>,
}

impl TransitionTable {
    pub fn build(db: &SampleDb, window: usize, search: usize) -> Result<Self> {
        if db.is_empty() {
            return Err(Error::Invalid("cannot build transitions for an empty database".into()));
        }
        let samples = db.samples();
        let n = samples.len();
        let entries = (0..n * n)
            .into_par_iter()
            .map(|k| {
                let (a, b) = (&samples[k / n], &samples[k % n]);
                transition_cost(a, b, window, search).map(|t| ((a.id, b.id), t))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .collect();
        Ok(Self { window, entries })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, a: u32, b: u32) -> Result<&Transition> {
        self.entries.get(&(a, b)).ok_or(Error::MissingTransition { a, b })
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, &Transition)> {
        self.entries.iter().map(|(&(a, b), t)| (a, b, t))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        w.u32(self.entries.len() as u32);
        w.u32(self.window as u32);
        for (&(a, b), t) in &self.entries {
            w.u32(a);
            w.u32(b);
            w.f32(t.cost as f32);
            w.u16(t.tail as u16);
            w.u16(t.head as u16);
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "VSTT");
        r.magic(MAGIC)?;
        r.version(VERSION)?;
        let count = r.u32("pair count")?;
        let window = r.u32("window")? as usize;
        if window == 0 {
            return Err(r.error("window is zero"));
        }
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let at = r.offset();
            let a = r.u32("sample a")?;
            let b = r.u32("sample b")?;
            let cost = r.f32("cost")?;
            if !(cost.is_finite() && cost >= 0.0) {
                return Err(Error::format(format!("VSTT: pair ({a}, {b}) has cost {cost}"), at as u64));
            }
            let tail = r.u16("tail offset")? as usize;
            let head = r.u16("head offset")? as usize;
            let t = Transition {
                cost: f64::from(cost),
                tail,
                head,
            };
            if entries.insert((a, b), t).is_some() {
                return Err(Error::format(format!("VSTT: duplicate pair ({a}, {b})"), at as u64));
            }
        }
        r.finish()?;
        let ids: BTreeSet<u32> = entries.keys().map(|&(a, _)| a).collect();
        if ids.len() * ids.len() != entries.len() || entries.keys().any(|(_, b)| !ids.contains(b)) {
            return Err(Error::format("VSTT: table does not cover every ordered pair", r.offset() as u64));
        }
        Ok(Self { window, entries })
    }

    /// Checks that the table covers `db` and its offsets fit the samples.
    pub fn check(&self, db: &SampleDb) -> Result<()> {
        if self.entries.len() != db.len() * db.len() {
            return Err(Error::Invalid(format!(
                "transition table has {} pairs, database needs {}",
                self.entries.len(),
                db.len() * db.len()
            )));
        }
        for a in db.samples() {
            for b in db.samples() {
                let t = self.get(a.id, b.id)?;
                let w = effective_window(self.window, a, b);
                if t.tail + 1 < w || t.tail >= a.frames() || t.head + w > b.frames() {
                    return Err(Error::Invalid(format!("transition ({}, {}) offsets out of bounds", a.id, b.id)));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&formats::read_file(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        formats::write_file(path, &self.to_bytes())
    }
}
