//! Throughput measurement of the full per-frame update.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::engine::{Engine, EngineConfig};
use crate::error::{Error, Result};
use crate::matcher::Observation;
use crate::memory::{IdentityId, MemoryStore};

/// Stored exemplars per synthetic identity in the prefilled memory.
const ITEMS_PER_IDENTITY: usize = 100;
const NOISE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub memory: usize,
    pub observations: usize,
    pub dim: usize,
    pub frames: u64,
    pub runs: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            memory: 50_000,
            observations: 10,
            dim: 256,
            frames: 20,
            runs: 5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub threads: usize,
    pub fps_runs: Vec<f64>,
    pub median_fps: f64,
}

fn unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn near(rng: &mut impl Rng, mean: &[f64]) -> Vec<f64> {
    let s = NOISE / (mean.len() as f64).sqrt();
    mean.iter()
        .map(|m| {
            let z: f64 = StandardNormal.sample(rng);
            m + s * z
        })
        .collect()
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Builds an engine whose memory is filled to capacity.
pub fn prefilled_engine(cfg: &BenchConfig, rng: &mut impl Rng) -> Result<(Engine, Vec<Vec<f64>>)> {
    let engine_cfg = EngineConfig {
        capacity: cfg.memory,
        seed: cfg.seed,
        ..EngineConfig::default()
    }
    .with_dim(cfg.dim);
    let identities = (cfg.memory / ITEMS_PER_IDENTITY).max(1);
    let means: Vec<Vec<f64>> = (0..identities).map(|_| unit(rng, cfg.dim)).collect();
    let mut store = MemoryStore::new(engine_cfg.store_config())?;
    for i in 0..cfg.memory {
        let id = i % identities;
        store.insert(&near(rng, &means[id]), IdentityId(id as u64))?;
    }
    Ok((Engine::from_store(engine_cfg, store)?, means))
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.memory == 0 || cfg.observations == 0 || cfg.dim == 0 || cfg.frames == 0 || cfg.runs == 0 {
        return Err(Error::Config("bench sizes must all be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (base, means) = prefilled_engine(cfg, &mut rng)?;
    let frames: Vec<Vec<Observation>> = (0..cfg.frames)
        .map(|f| {
            (0..cfg.observations)
                .map(|k| {
                    let id = rng.gen_range(0..means.len());
                    Observation {
                        det: format!("{f}:{k}"),
                        descriptor: near(&mut rng, &means[id]),
                        bbox: None,
                        gt: None,
                    }
                })
                .collect()
        })
        .collect();
    let mut fps_runs = Vec::with_capacity(cfg.runs);
    for _ in 0..cfg.runs {
        let mut engine = base.clone();
        let start = Instant::now();
        for (f, obs) in frames.iter().enumerate() {
            engine.process_frame(f as u64, obs)?;
        }
        fps_runs.push(cfg.frames as f64 / start.elapsed().as_secs_f64());
    }
    Ok(BenchReport {
        config: cfg.clone(),
        threads: rayon::current_num_threads(),
        median_fps: median(&fps_runs),
        fps_runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn small_bench_runs() {
        let cfg = BenchConfig {
            memory: 500,
            observations: 3,
            dim: 8,
            frames: 4,
            runs: 3,
            seed: 1,
        };
        let r = run_bench(&cfg).unwrap();
        assert_eq!(r.fps_runs.len(), 3);
        assert!(r.median_fps > 0.0);
    }
}
