//! One-dimensional stability simulation.
//!
//! Two Gaussian sources emit one scalar descriptor each per frame, in
//! alternating order. The engine learns them from an empty memory. The
//! distinctive identity is the one most often given to source A once the run
//! has settled; its exemplars, pooled over the settled frames, form the
//! learned histogram that is compared with each source density.
use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as NormalDist};

use crate::engine::{Engine, EngineConfig};
use crate::error::{Error, Result};
use crate::matcher::Observation;
use crate::memory::{IdentityId, ItemKey};

/// Histogram range margin beyond the two source means.
const RANGE_MARGIN: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub distinctive: Source,
    /// The second source has the distinctive mean plus an offset.
    pub other_std: f64,
    pub offsets: Vec<f64>,
    pub iterations: u64,
    pub bin_width: f64,
    /// Leading fraction of iterations excluded from the learned histogram.
    pub settle_fraction: f64,
    pub seed: u64,
    pub rho_bar: f64,
    pub alpha: f64,
    pub e_bar: f64,
    pub capacity: usize,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        let engine = EngineConfig::default();
        Self {
            distinctive: Source { mean: 0.0, std: 1.0 },
            other_std: 1.0,
            offsets: vec![6.0, 3.0, 1.5],
            iterations: 1000,
            bin_width: 0.5,
            settle_fraction: 0.5,
            seed: 0,
            rho_bar: engine.rho_bar,
            alpha: engine.alpha,
            e_bar: engine.e_bar,
            capacity: engine.capacity,
        }
    }
}

impl StabilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.distinctive.std > 0.0 && self.other_std > 0.0) {
            return Err(Error::Config("source deviations must be positive".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return Err(Error::Config("bin_width must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.settle_fraction) {
            return Err(Error::Config("settle_fraction must lie in [0, 1)".into()));
        }
        if self.offsets.iter().any(|o| !o.is_finite()) {
            return Err(Error::Config("offsets must be finite".into()));
        }
        self.engine_config().validate()
    }

    fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            rho_bar: self.rho_bar,
            alpha: self.alpha,
            e_bar: self.e_bar,
            capacity: self.capacity,
            dim: 1,
            normalize: false,
            seed: self.seed,
            ..EngineConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub bin_width: f64,
    /// Normalized mass per bin.
    pub mass: Vec<f64>,
    /// Mass outside `[lo, lo + bins * bin_width)`.
    pub outside: f64,
    pub samples: usize,
}

impl Histogram {
    pub fn from_samples(samples: &[f64], lo: f64, hi: f64, bin_width: f64) -> Self {
        let bins = ((hi - lo) / bin_width).ceil().max(1.0) as usize;
        let mut counts = vec![0usize; bins];
        let mut outside = 0usize;
        for &x in samples {
            let b = ((x - lo) / bin_width).floor();
            if b >= 0.0 && (b as usize) < bins {
                counts[b as usize] += 1;
            } else {
                outside += 1;
            }
        }
        let n = samples.len().max(1) as f64;
        Self {
            lo,
            bin_width,
            mass: counts.into_iter().map(|c| c as f64 / n).collect(),
            outside: outside as f64 / n,
            samples: samples.len(),
        }
    }

    pub fn edges(&self, bin: usize) -> (f64, f64) {
        let a = self.lo + bin as f64 * self.bin_width;
        (a, a + self.bin_width)
    }

    /// L1 distance to the binned mass of a normal density, tails included.
    pub fn l1_to_normal(&self, source: Source) -> f64 {
        let dist = NormalDist::new(source.mean, source.std).expect("positive deviation");
        let mut inside = 0.0;
        let mut l1 = 0.0;
        for (b, &m) in self.mass.iter().enumerate() {
            let (a, z) = self.edges(b);
            let p = dist.cdf(z) - dist.cdf(a);
            inside += p;
            l1 += (m - p).abs();
        }
        l1 + (self.outside - (1.0 - inside)).abs()
    }

    /// L1 distance of a flat histogram over the same bins to `source`.
    pub fn uniform_l1_to_normal(&self, source: Source) -> f64 {
        let flat = Histogram {
            mass: vec![1.0 / self.mass.len() as f64; self.mass.len()],
            outside: 0.0,
            ..self.clone()
        };
        flat.l1_to_normal(source)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EligibilityTrace {
    pub key: ItemKey,
    pub identity: IdentityId,
    /// `(frame, eligibility)` after insertion and after each decay.
    pub points: Vec<(u64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRun {
    pub offset: f64,
    pub distinctive_id: IdentityId,
    pub other_id: Option<IdentityId>,
    pub histogram: Histogram,
    pub l1_distinctive: f64,
    pub l1_other: f64,
    pub l1_uniform: f64,
    /// Observations given the home identity of the other source.
    pub cross_assignments: u64,
    /// Observations left unassigned or given any third identity.
    pub stray_assignments: u64,
    pub identities_created: u64,
    pub memory_size: usize,
    pub traces: Vec<EligibilityTrace>,
}

impl StabilityRun {
    pub fn passes(&self) -> bool {
        self.l1_distinctive < self.l1_other && self.l1_distinctive < self.l1_uniform
    }
}

/// Most frequent identity, ignoring `exclude`; ties go to the smaller id.
fn majority(ids: impl Iterator<Item = IdentityId>, exclude: Option<IdentityId>) -> Option<IdentityId> {
    let mut counts: BTreeMap<IdentityId, u64> = BTreeMap::new();
    for id in ids.filter(|id| Some(*id) != exclude) {
        *counts.entry(id).or_default() += 1;
    }
    let mut best: Option<(IdentityId, u64)> = None;
    for (id, n) in counts {
        if best.is_none_or(|(_, b)| n > b) {
            best = Some((id, n));
        }
    }
    best.map(|(id, _)| id)
}

/// Runs one offset setting.
pub fn simulate_offset(cfg: &StabilityConfig, offset: f64, stream: u64) -> Result<StabilityRun> {
    cfg.validate()?;
    let a = cfg.distinctive;
    let b = Source {
        mean: a.mean + offset,
        std: cfg.other_std,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let na = Normal::new(a.mean, a.std).expect("validated");
    let nb = Normal::new(b.mean, b.std).expect("validated");

    let mut engine = Engine::new(cfg.engine_config())?;
    let settle = (cfg.iterations as f64 * cfg.settle_fraction) as u64;
    let mut traces: BTreeMap<ItemKey, EligibilityTrace> = BTreeMap::new();
    // Per frame: identity given to each source's observation.
    let mut ledger: Vec<[Option<IdentityId>; 2]> = Vec::with_capacity(cfg.iterations as usize);
    // Memory content over the settled frames.
    let mut pooled: Vec<(IdentityId, f64)> = Vec::new();
    let mut created = 0u64;

    for f in 0..cfg.iterations {
        let xa = na.sample(&mut rng);
        let xb = nb.sample(&mut rng);
        let a_first = f % 2 == 0;
        let (first, second) = if a_first { (xa, xb) } else { (xb, xa) };
        let obs = [
            Observation {
                det: format!("{f}:0"),
                descriptor: vec![first],
                bbox: None,
                gt: None,
            },
            Observation {
                det: format!("{f}:1"),
                descriptor: vec![second],
                bbox: None,
                gt: None,
            },
        ];
        let key_before = engine.store().next_key();
        let r = engine.process_frame(f, &obs)?;
        created += r.new_ids.len() as u64;
        let (ia, ib) = if a_first { (0, 1) } else { (1, 0) };
        ledger.push([r.assignments[ia].id, r.assignments[ib].id]);

        for t in engine.last_touches() {
            if let Some(tr) = traces.get_mut(&t.key) {
                tr.points.push((f, t.eligibility));
            }
        }
        for k in key_before.0..engine.store().next_key().0 {
            if let Some(m) = engine.store().meta(ItemKey(k)) {
                traces.insert(
                    m.key,
                    EligibilityTrace {
                        key: m.key,
                        identity: m.identity,
                        points: vec![(f, m.eligibility)],
                    },
                );
            }
        }
        if f >= settle {
            let store = engine.store();
            pooled.extend(
                store
                    .metas()
                    .iter()
                    .enumerate()
                    .map(|(slot, m)| (m.identity, store.descriptor_at(slot)[0])),
            );
        }
    }

    let settled = &ledger[settle as usize..];
    let distinctive_id = majority(settled.iter().filter_map(|l| l[0]), None)
        .ok_or_else(|| Error::Evaluation("source A was never assigned after settling".into()))?;
    let other_id = majority(settled.iter().filter_map(|l| l[1]), Some(distinctive_id));
    let home = [Some(distinctive_id), other_id];
    let mut cross = 0u64;
    let mut stray = 0u64;
    for l in &ledger {
        for s in 0..2 {
            if l[s].is_some() && l[s] == home[s] {
                continue;
            }
            if l[s].is_some() && l[s] == home[1 - s] {
                cross += 1;
            } else {
                stray += 1;
            }
        }
    }
    let samples: Vec<f64> = pooled
        .iter()
        .filter(|(id, _)| *id == distinctive_id)
        .map(|(_, x)| *x)
        .collect();
    let lo = a.mean.min(b.mean) - RANGE_MARGIN;
    let hi = a.mean.max(b.mean) + RANGE_MARGIN;
    let histogram = Histogram::from_samples(&samples, lo, hi, cfg.bin_width);
    Ok(StabilityRun {
        offset,
        distinctive_id,
        other_id,
        l1_distinctive: histogram.l1_to_normal(a),
        l1_other: histogram.l1_to_normal(b),
        l1_uniform: histogram.uniform_l1_to_normal(a),
        histogram,
        cross_assignments: cross,
        stray_assignments: stray,
        identities_created: created,
        memory_size: engine.store().len(),
        traces: traces.into_values().collect(),
    })
}

/// Runs every configured offset.
pub fn stability_sim(cfg: &StabilityConfig) -> Result<Vec<StabilityRun>> {
    cfg.offsets
        .iter()
        .enumerate()
        .map(|(i, &o)| simulate_offset(cfg, o, i as u64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_mass_and_l1() {
        let h = Histogram::from_samples(&[0.1, 0.2, 0.7, 9.0], 0.0, 1.0, 0.5);
        assert_eq!(h.mass, vec![0.5, 0.25]);
        assert_eq!(h.outside, 0.25);
        let src = Source { mean: 0.5, std: 1.0 };
        let dist = NormalDist::new(0.5, 1.0).unwrap();
        let p0 = dist.cdf(0.5) - dist.cdf(0.0);
        let p1 = dist.cdf(1.0) - dist.cdf(0.5);
        let want = (0.5 - p0).abs() + (0.25 - p1).abs() + (0.25 - (1.0 - p0 - p1)).abs();
        assert!((h.l1_to_normal(src) - want).abs() < 1e-12);
    }

    #[test]
    fn exact_density_has_zero_l1() {
        let src = Source { mean: 0.0, std: 1.0 };
        let dist = NormalDist::new(0.0, 1.0).unwrap();
        let mut h = Histogram::from_samples(&[], -2.0, 2.0, 0.5);
        let mut inside = 0.0;
        for b in 0..h.mass.len() {
            let (a, z) = h.edges(b);
            h.mass[b] = dist.cdf(z) - dist.cdf(a);
            inside += h.mass[b];
        }
        h.outside = 1.0 - inside;
        assert!(h.l1_to_normal(src) < 1e-12);
    }

    #[test]
    fn separated_sources_never_cross() {
        let cfg = StabilityConfig {
            iterations: 300,
            ..StabilityConfig::default()
        };
        let run = simulate_offset(&cfg, 6.0, 0).unwrap();
        assert_eq!(run.cross_assignments, 0);
        assert_eq!(run.distinctive_id, IdentityId(0));
    }

    #[test]
    fn traces_never_increase() {
        let cfg = StabilityConfig {
            iterations: 200,
            ..StabilityConfig::default()
        };
        let run = simulate_offset(&cfg, 1.5, 0).unwrap();
        assert!(!run.traces.is_empty());
        for t in &run.traces {
            assert_eq!(t.points[0].1, 1.0);
            for w in t.points.windows(2) {
                assert!(w[1].1 < w[0].1, "key {} {:?}", t.key, w);
            }
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let cfg = StabilityConfig {
            iterations: 100,
            offsets: vec![3.0],
            ..StabilityConfig::default()
        };
        assert_eq!(stability_sim(&cfg).unwrap(), stability_sim(&cfg).unwrap());
    }
}
