use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dict::ExtendedLabel;
use crate::error::{Error, Result};
use crate::formats::{self, Reader, Writer};

const MAGIC: &[u8; 4] = b"VSDB";
const VERSION: u32 = 1;

/// Where a sample was cut from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSource {
    pub take: String,
    /// Half-open frame range in the take.
    pub start: usize,
    pub end: usize,
}

/// A labelled latent sequence, `frames × d` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionSample {
    pub id: u32,
    pub label: ExtendedLabel,
    latents: Vec<f64>,
    d: usize,
    pub source: Option<SampleSource>,
}

impl MotionSample {
    pub fn new(id: u32, label: ExtendedLabel, latents: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 || latents.len() % d != 0 {
            return Err(Error::DimensionMismatch(format!(
                "sample {id}: {} values is not a multiple of d = {d}",
                latents.len()
            )));
        }
        if latents.len() / d < 2 {
            return Err(Error::Invalid(format!("sample {id} has fewer than 2 frames")));
        }
        Ok(Self {
            id,
            label,
            latents,
            d,
            source: None,
        })
    }

    pub fn with_source(mut self, source: SampleSource) -> Self {
        self.source = Some(source);
        self
    }

    pub fn frames(&self) -> usize {
        self.latents.len() / self.d
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn latents(&self) -> &[f64] {
        &self.latents
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.latents[i * self.d..(i + 1) * self.d]
    }
}

/// One annotated segment of a take. `end` is exclusive.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub label: ExtendedLabel,
    pub start: usize,
    pub end: usize,
}

/// A captured take: latent frames plus its annotation.
#[derive(Clone, Debug)]
pub struct Take {
    pub name: String,
    pub latents: Vec<f64>,
    pub annotations: Vec<Annotation>,
}

/// Immutable collection of motion samples sharing one latent dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleDb {
    d: usize,
    samples: Vec<MotionSample>,
}

/// Candidate samples for one query position.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidates {
    pub ids: Vec<u32>,
    pub unary: Vec<f64>,
}

impl SampleDb {
    pub fn new(d: usize, samples: Vec<MotionSample>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for s in &samples {
            if s.d != d {
                return Err(Error::DimensionMismatch(format!("sample {} has d = {}, database d = {d}", s.id, s.d)));
            }
            if !seen.insert(s.id) {
                return Err(Error::Invalid(format!("duplicate sample id {}", s.id)));
            }
        }
        Ok(Self { d, samples })
    }

    /// Cuts every annotated segment out of its take, widened by `margin`
    /// frames on both sides (clipped to the take) so neighbouring samples
    /// overlap. Ids follow take and annotation order.
    pub fn from_takes(d: usize, takes: &[Take], margin: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Invalid("latent dimension must be positive".into()));
        }
        let mut samples = Vec::new();
        for take in takes {
            if take.latents.len() % d != 0 {
                return Err(Error::DimensionMismatch(format!(
                    "take '{}' has {} values, not a multiple of d = {d}",
                    take.name,
                    take.latents.len()
                )));
            }
            let frames = take.latents.len() / d;
            for a in &take.annotations {
                if a.start >= a.end || a.end > frames {
                    return Err(Error::Invalid(format!(
                        "take '{}': annotation {} [{}, {}) outside {frames} frames",
                        take.name, a.label, a.start, a.end
                    )));
                }
                let start = a.start.saturating_sub(margin);
                let end = (a.end + margin).min(frames);
                let id = samples.len() as u32;
                let sample = MotionSample::new(id, a.label, take.latents[start * d..end * d].to_vec(), d)?.with_source(
                    SampleSource {
                        take: take.name.clone(),
                        start,
                        end,
                    },
                );
                samples.push(sample);
            }
        }
        Self::new(d, samples)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[MotionSample] {
        &self.samples
    }

    pub fn get(&self, id: u32) -> Option<&MotionSample> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// Samples of the best-matching context class for `query`, sorted by id.
    /// Unary cost is the number of mismatched context entries.
    pub fn candidates(&self, query: &ExtendedLabel) -> Result<Candidates> {
        let scored: Vec<(u32, u8)> = self
            .samples
            .iter()
            .filter(|s| s.label.cur == query.cur)
            .map(|s| (s.id, s.label.context_score(query)))
            .collect();
        let best = scored
            .iter()
            .map(|&(_, score)| score)
            .max()
            .ok_or(Error::Unsatisfiable { symbol: query.cur })?;
        let mut chosen: Vec<(u32, u8)> = scored.into_iter().filter(|&(_, s)| s == best).collect();
        chosen.sort_unstable();
        Ok(Candidates {
            ids: chosen.iter().map(|&(id, _)| id).collect(),
            unary: chosen.iter().map(|&(_, s)| f64::from(2 - s)).collect(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        w.u32(self.d as u32);
        w.u32(self.samples.len() as u32);
        for s in &self.samples {
            w.u32(s.id);
            for c in [s.label.prev, s.label.cur, s.label.next] {
                w.string(c.encode_utf8(&mut [0; 4]));
            }
            w.u32(s.frames() as u32);
            w.f32_array(&s.latents);
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "VSDB");
        r.magic(MAGIC)?;
        r.version(VERSION)?;
        let d = r.u32("latent dimension")? as usize;
        if d == 0 {
            return Err(r.error("latent dimension is zero"));
        }
        let count = r.u32("sample count")?;
        let mut samples = Vec::new();
        let mut seen = BTreeSet::new();
        for _ in 0..count {
            let at = r.offset();
            let id = r.u32("sample id")?;
            let mut symbols = ['#'; 3];
            for s in &mut symbols {
                let text = r.string("label symbol")?;
                let mut chars = text.chars();
                *s = match (chars.next(), chars.next()) {
                    (Some(c), None) => c,
                    _ => return Err(r.error(format_args!("label symbol '{text}' is not one character"))),
                };
            }
            let label = ExtendedLabel::new(symbols[0], symbols[1], symbols[2]).map_err(|e| r.error(e))?;
            let frames = r.u32("frame count")? as usize;
            if frames < 2 {
                return Err(r.error(format_args!("sample {id} has {frames} frames")));
            }
            let count = frames
                .checked_mul(d)
                .ok_or_else(|| r.error("sample size overflows"))?;
            let latents = r.f32_array(count, "latents")?;
            if !seen.insert(id) {
                return Err(Error::format(format!("VSDB: duplicate sample id {id}"), at as u64));
            }
            samples.push(MotionSample::new(id, label, latents, d)?);
        }
        r.finish()?;
        Self::new(d, samples)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&formats::read_file(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        formats::write_file(path, &self.to_bytes())
    }
}
