//! Seeded synthetic detection streams.
//!
//! Every identity owns a unit mean direction. A detection of a present
//! identity is the mean plus isotropic Gaussian noise of total scale `sigma`,
//! renormalized. Identities enter late, leave and come back on a schedule
//! drawn from the seed; identity 0 stays in view throughout.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::format::{DetectionRecord, FrameRecord, StreamHeader};
use crate::error::{Error, Result};
use crate::geometry::BBox;

const MEAN_ATTEMPTS: usize = 10_000;
const BOX_SIZE: f64 = 80.0;
const BOX_PITCH: f64 = 160.0;
const BOX_JITTER: f64 = 2.0;
const GRID_COLUMNS: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleParams {
    /// Keep identity 0 present in every frame.
    pub anchor: bool,
    /// Fraction of non-anchor identities whose first entry is delayed.
    pub late_fraction: f64,
    /// Latest first entry, as a fraction of the stream length.
    pub late_horizon: f64,
    pub present_min: u64,
    pub present_max: u64,
    pub absent_min: u64,
    pub absent_max: u64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            anchor: true,
            late_fraction: 0.5,
            late_horizon: 0.3,
            present_min: 80,
            present_max: 300,
            absent_min: 20,
            absent_max: 150,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub identities: usize,
    pub dimension: usize,
    /// Angular noise in radians.
    pub sigma: f64,
    pub frames: u64,
    pub min_separation_deg: f64,
    pub miss_rate: f64,
    /// Expected clutter detections per present identity and frame.
    pub clutter_rate: f64,
    pub boxes: bool,
    pub schedule: ScheduleParams,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            identities: 5,
            dimension: 64,
            sigma: 0.1,
            frames: 2000,
            min_separation_deg: 60.0,
            miss_rate: 0.02,
            clutter_rate: 0.01,
            boxes: true,
            schedule: ScheduleParams::default(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.identities == 0 {
            return bad("identities must be positive");
        }
        if self.dimension == 0 {
            return bad("dimension must be positive");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be a non-negative real");
        }
        if !(0.0..180.0).contains(&self.min_separation_deg) {
            return bad("min_separation_deg must lie in [0, 180)");
        }
        for (name, p) in [
            ("miss_rate", self.miss_rate),
            ("clutter_rate", self.clutter_rate),
            ("late_fraction", self.schedule.late_fraction),
            ("late_horizon", self.schedule.late_horizon),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        let s = &self.schedule;
        if s.present_min == 0 || s.present_min > s.present_max || s.absent_min > s.absent_max {
            return bad("schedule segment bounds are inconsistent");
        }
        Ok(())
    }
}

/// Half-open frame interval `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub start: u64,
    pub end: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthStream {
    pub header: StreamHeader,
    pub frames: Vec<FrameRecord>,
    pub means: Vec<Vec<f64>>,
    pub presence: Vec<Vec<Interval>>,
    pub min_separation_deg: f64,
}

pub fn label(identity: usize) -> String {
    format!("id{identity}")
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn angle_deg(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Rejection-samples unit means that are pairwise at least
/// `min_separation_deg` apart.
pub fn sample_means(cfg: &SynthConfig) -> Result<Vec<Vec<f64>>> {
    let mut rng = stream_rng(cfg.seed, 0);
    if cfg.dimension == 1 && cfg.identities > 2 {
        return Err(Error::Config(
            "at most two separated identities exist in one dimension".into(),
        ));
    }
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(cfg.identities);
    let mut attempts = 0;
    while means.len() < cfg.identities {
        attempts += 1;
        if attempts > MEAN_ATTEMPTS * cfg.identities {
            return Err(Error::Config(format!(
                "cannot place {} identities {}° apart in dimension {}",
                cfg.identities, cfg.min_separation_deg, cfg.dimension
            )));
        }
        let v = random_unit(&mut rng, cfg.dimension);
        if means.iter().all(|m| angle_deg(m, &v) >= cfg.min_separation_deg) {
            means.push(v);
        }
    }
    Ok(means)
}

fn min_pairwise_angle(means: &[Vec<f64>]) -> f64 {
    let mut best = 180.0f64;
    for i in 0..means.len() {
        for j in i + 1..means.len() {
            best = best.min(angle_deg(&means[i], &means[j]));
        }
    }
    best
}

/// Presence intervals per identity.
pub fn plan_presence(cfg: &SynthConfig) -> Vec<Vec<Interval>> {
    let mut rng = stream_rng(cfg.seed, 1);
    let s = &cfg.schedule;
    let horizon = ((cfg.frames as f64) * s.late_horizon) as u64;
    (0..cfg.identities)
        .map(|id| {
            if id == 0 && s.anchor {
                return vec![Interval {
                    start: 0,
                    end: cfg.frames,
                }];
            }
            let mut t = if horizon > 0 && rng.gen_bool(s.late_fraction) {
                rng.gen_range(1..=horizon)
            } else {
                0
            };
            let mut out = Vec::new();
            while t < cfg.frames {
                let len = rng.gen_range(s.present_min..=s.present_max);
                let end = (t + len).min(cfg.frames);
                out.push(Interval { start: t, end });
                t = end + rng.gen_range(s.absent_min..=s.absent_max);
            }
            out
        })
        .collect()
}

fn present(intervals: &[Interval], frame: u64) -> bool {
    intervals.iter().any(|iv| iv.start <= frame && frame < iv.end)
}

fn perturb(rng: &mut impl Rng, mean: &[f64], sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return mean.to_vec();
    }
    let noise = Normal::new(0.0, sigma / (mean.len() as f64).sqrt()).expect("finite scale");
    let v: Vec<f64> = mean.iter().map(|m| m + noise.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

fn slot_box(rng: &mut impl Rng, identity: usize) -> BBox {
    let col = (identity % GRID_COLUMNS) as f64;
    let row = (identity / GRID_COLUMNS) as f64;
    let mut j = || rng.gen_range(-BOX_JITTER..=BOX_JITTER);
    let x = BOX_PITCH * col + 40.0 + j();
    let y = BOX_PITCH * row + 40.0 + j();
    BBox::new(x, y, BOX_SIZE + j(), BOX_SIZE + j()).expect("positive box")
}

fn clutter_box(rng: &mut impl Rng) -> BBox {
    let x = rng.gen_range(0.0..1200.0);
    let y = rng.gen_range(0.0..800.0);
    let w = rng.gen_range(20.0..60.0);
    BBox::new(x, y, w, w).expect("positive box")
}

/// Generates a stream. The result is a pure function of the configuration.
pub fn synth_stream(cfg: &SynthConfig) -> Result<SynthStream> {
    cfg.validate()?;
    let means = sample_means(cfg)?;
    let presence = plan_presence(cfg);
    let mut rng = stream_rng(cfg.seed, 2);
    let mut frames = Vec::with_capacity(cfg.frames as usize);
    for f in 0..cfg.frames {
        let mut dets: Vec<DetectionRecord> = Vec::new();
        for (id, mean) in means.iter().enumerate() {
            if !present(&presence[id], f) {
                continue;
            }
            let missed = rng.gen_bool(cfg.miss_rate);
            let clutter = rng.gen_bool(cfg.clutter_rate);
            if !missed {
                dets.push(DetectionRecord {
                    det: String::new(),
                    bbox: cfg.boxes.then(|| slot_box(&mut rng, id)),
                    desc: perturb(&mut rng, mean, cfg.sigma),
                    gt: Some(label(id)),
                });
            }
            if clutter {
                dets.push(DetectionRecord {
                    det: String::new(),
                    bbox: cfg.boxes.then(|| clutter_box(&mut rng)),
                    desc: random_unit(&mut rng, cfg.dimension),
                    gt: None,
                });
            }
        }
        dets.shuffle(&mut rng);
        for (k, d) in dets.iter_mut().enumerate() {
            d.det = format!("{f}:{k}");
        }
        frames.push(FrameRecord {
            frame: f,
            detections: dets,
        });
    }
    Ok(SynthStream {
        header: StreamHeader::new(cfg.dimension),
        frames,
        min_separation_deg: min_pairwise_angle(&means),
        means,
        presence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::format::write_stream_to;

    fn small() -> SynthConfig {
        SynthConfig {
            frames: 300,
            ..SynthConfig::default()
        }
    }

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }

    #[test]
    fn noiseless_descriptors_equal_their_mean() {
        let cfg = SynthConfig {
            sigma: 0.0,
            miss_rate: 0.0,
            clutter_rate: 0.0,
            ..small()
        };
        let s = synth_stream(&cfg).unwrap();
        for f in &s.frames {
            for d in &f.detections {
                let id: usize = d.gt.as_ref().unwrap()[2..].parse().unwrap();
                assert_eq!(d.desc, s.means[id]);
            }
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let write = |cfg: &SynthConfig| {
            let s = synth_stream(cfg).unwrap();
            let mut buf = Vec::new();
            write_stream_to(&mut buf, &s.header, &s.frames).unwrap();
            buf
        };
        let a = write(&small());
        assert_eq!(a, write(&small()));
        assert_ne!(a, write(&SynthConfig { seed: 1, ..small() }));
    }

    #[test]
    fn identities_separate_cleanly() {
        let s = synth_stream(&small()).unwrap();
        assert!(s.min_separation_deg >= 60.0);
        let mut by_id: Vec<Vec<&[f64]>> = vec![Vec::new(); 5];
        for f in &s.frames {
            for d in &f.detections {
                if let Some(gt) = &d.gt {
                    let id: usize = gt[2..].parse().unwrap();
                    if by_id[id].len() < 40 {
                        by_id[id].push(&d.desc);
                    }
                }
            }
        }
        let mut within = 0.0f64;
        let mut between = f64::INFINITY;
        for (i, a) in by_id.iter().enumerate() {
            for (j, b) in by_id.iter().enumerate() {
                for x in a {
                    for y in b {
                        let d = dist(x, y);
                        if i == j {
                            within = within.max(d);
                        } else {
                            between = between.min(d);
                        }
                    }
                }
            }
        }
        assert!(within < between, "within {within} between {between}");
    }

    #[test]
    fn schedule_has_exits_and_late_entries() {
        let cfg = SynthConfig::default();
        let p = plan_presence(&cfg);
        assert_eq!(p[0], vec![Interval { start: 0, end: 2000 }]);
        assert!(p[1..].iter().any(|iv| iv.len() > 1));
        assert!(p[1..].iter().any(|iv| iv[0].start > 0));
        for iv in p.iter().flatten() {
            assert!(iv.start < iv.end && iv.end <= cfg.frames);
        }
    }

    #[test]
    fn noise_rates_are_roughly_honoured() {
        let s = synth_stream(&SynthConfig {
            miss_rate: 0.1,
            clutter_rate: 0.1,
            frames: 1000,
            ..SynthConfig::default()
        })
        .unwrap();
        let expected: u64 = s
            .presence
            .iter()
            .flatten()
            .map(|iv| iv.end - iv.start)
            .sum();
        let labelled = s.frames.iter().flat_map(|f| &f.detections).filter(|d| d.gt.is_some()).count();
        let clutter = s.frames.iter().flat_map(|f| &f.detections).filter(|d| d.gt.is_none()).count();
        let miss = 1.0 - labelled as f64 / expected as f64;
        let clut = clutter as f64 / expected as f64;
        assert!((miss - 0.1).abs() < 0.02, "{miss}");
        assert!((clut - 0.1).abs() < 0.02, "{clut}");
    }

    #[test]
    fn impossible_separation_is_a_config_error() {
        let cfg = SynthConfig {
            dimension: 1,
            identities: 3,
            ..small()
        };
        assert!(matches!(synth_stream(&cfg), Err(Error::Config(_))));
        let cfg = SynthConfig {
            dimension: 2,
            identities: 7,
            ..small()
        };
        assert!(matches!(synth_stream(&cfg), Err(Error::Config(_))));
        let two = SynthConfig {
            dimension: 1,
            identities: 2,
            ..small()
        };
        assert!(synth_stream(&two).is_ok());
    }
}
