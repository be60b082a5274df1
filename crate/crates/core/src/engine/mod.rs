//! Frame-by-frame identity assignment on top of the exemplar memory.

mod config;
mod resolve;
mod track;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::matcher::{self, Observation};
use crate::memory::{prepare_descriptor, IdentityId, ItemKey, MemoryStore};

pub use config::{EngineConfig, DEFAULT_ALPHA, DEFAULT_E_BAR, DEFAULT_RHO_BAR};
pub use resolve::{enforce_uniqueness, resolve_ambiguity, Claim};
pub use track::{TrackState, TrackStatus};

const ETA_MIN: f64 = f64::MIN_POSITIVE;
const ETA_MAX: f64 = 1.0 - f64::EPSILON;

/// Eligibility decay factor `((d1 / d2) / rho_bar) ^ alpha`, clamped to the
/// open unit interval. A zero `d2` (exact duplicate) is treated as ratio 0.
pub fn compute_eta(d1: f64, d2: f64, rho_bar: f64, alpha: f64) -> f64 {
    let ratio = if d2 > 0.0 { d1 / d2 } else { 0.0 };
    let eta = (ratio / rho_bar).powf(alpha);
    if eta.is_nan() {
        return ETA_MIN;
    }
    eta.clamp(ETA_MIN, ETA_MAX)
}

/// Outcome for one observation of a frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub obs: usize,
    pub det: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
    pub id: Option<IdentityId>,
    pub status: Option<TrackStatus>,
    /// Exemplars that voted for the assigned identity.
    pub support: usize,
    pub mean_d1: Option<f64>,
}

/// Everything that happened while processing one frame.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub frame: u64,
    pub assignments: Vec<Assignment>,
    pub new_ids: Vec<IdentityId>,
    pub confirmed_ids: Vec<IdentityId>,
    pub discarded_ids: Vec<IdentityId>,
    /// Exemplars dropped because their eligibility fell below the threshold.
    pub removed: Vec<ItemKey>,
    /// Provisional exemplars of discarded identities.
    pub rolled_back: Vec<ItemKey>,
    /// Exemplars evicted on overflow.
    pub evicted: Vec<ItemKey>,
    pub memory_size: usize,
    pub max_eta: Option<f64>,
}

/// Eligibility update applied to one exemplar.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Touch {
    pub key: ItemKey,
    pub eta: f64,
    pub eligibility: f64,
    pub removed: bool,
}

#[derive(Clone, Debug)]
pub struct Engine {
    config: EngineConfig,
    store: MemoryStore,
    tracks: BTreeMap<IdentityId, TrackState>,
    last_frame: Option<u64>,
    touches: Vec<Touch>,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self> {
        config.validate()?;
        let store = MemoryStore::new(config.store_config())?;
        Ok(Self {
            config,
            store,
            tracks: BTreeMap::new(),
            last_frame: None,
            touches: Vec::new(),
        })
    }

    /// Resumes from an existing memory; every stored identity is treated as
    /// confirmed.
    pub fn from_store(config: EngineConfig, store: MemoryStore) -> Result<Self> {
        config.validate()?;
        if store.dimension() != config.dim {
            return Err(Error::Dimension {
                expected: config.dim,
                found: store.dimension(),
            });
        }
        let tracks = store
            .metas()
            .iter()
            .map(|m| (m.identity, TrackState::restored(m.identity)))
            .collect();
        Ok(Self {
            config,
            store,
            tracks,
            last_frame: None,
            touches: Vec::new(),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn store(&self) -> &MemoryStore {
        &self.store
    }

    pub fn tracks(&self) -> &BTreeMap<IdentityId, TrackState> {
        &self.tracks
    }

    pub fn track(&self, id: IdentityId) -> Option<&TrackState> {
        self.tracks.get(&id)
    }

    /// Eligibility updates applied during the most recent frame, by key.
    pub fn last_touches(&self) -> &[Touch] {
        &self.touches
    }

    /// Processes one frame: match, resolve, learn, then forget.
    ///
    /// Assignments are computed from the memory as it stood before this frame.
    pub fn process_frame(&mut self, frame: u64, observations: &[Observation]) -> Result<FrameResult> {
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(Error::Sequencing { last, got: frame });
            }
        }
        let dim = self.config.dim;
        let mut block = Vec::with_capacity(observations.len() * dim);
        for obs in observations {
            block.extend(prepare_descriptor(&obs.descriptor, dim, self.config.normalize)?);
        }
        self.last_frame = Some(frame);
        self.touches.clear();

        let mut result = FrameResult {
            frame,
            ..FrameResult::default()
        };
        self.expire_tracks(frame, &mut result);

        let bootstrap = self.store.is_empty();
        let groups = matcher::renn_match_block(&self.store, &block, &self.config.match_params())?;
        let (claims, _) = enforce_uniqueness(resolve_ambiguity(&groups));

        let mut touched: HashSet<ItemKey> = HashSet::new();
        let mut decays: Vec<(ItemKey, f64)> = claims
            .iter()
            .flat_map(|c| c.support.iter().map(|r| (r.item_key, r.eta)))
            .collect();
        decays.sort_by_key(|(k, _)| *k);
        result.max_eta = decays.iter().map(|(_, e)| *e).reduce(f64::max);
        result.removed = self.store.decay_and_touch(&decays)?;
        let removed: HashSet<ItemKey> = result.removed.iter().copied().collect();
        for &(key, eta) in &decays {
            touched.insert(key);
            self.touches.push(Touch {
                key,
                eta,
                eligibility: self.store.meta(key).map_or(0.0, |m| m.eligibility),
                removed: removed.contains(&key),
            });
        }

        let mut assignments: Vec<Assignment> = observations
            .iter()
            .enumerate()
            .map(|(obs, o)| Assignment {
                obs,
                det: o.det.clone(),
                bbox: o.bbox,
                id: None,
                status: None,
                support: 0,
                mean_d1: None,
            })
            .collect();

        let mut recognized = false;
        for claim in &claims {
            let desc = &block[claim.obs_index * dim..(claim.obs_index + 1) * dim];
            let inserted = self.store.insert(desc, claim.identity)?;
            touched.insert(inserted.key);
            result.evicted.extend(inserted.evicted);

            let track = self
                .tracks
                .entry(claim.identity)
                .or_insert_with(|| TrackState::restored(claim.identity));
            if track.status.is_pending() {
                track.provisional.push(inserted.key);
            }
            if track.on_assigned(frame, self.config.confirm_consecutive, self.config.confirm_window) {
                result.confirmed_ids.push(claim.identity);
            }
            recognized |= track.status.is_known();

            let a = &mut assignments[claim.obs_index];
            a.id = Some(claim.identity);
            a.status = Some(track.status);
            a.support = claim.support.len();
            a.mean_d1 = Some(claim.mean_d1);
        }

        if bootstrap || recognized {
            for a in assignments.iter_mut().filter(|a| a.id.is_none()) {
                let id = self.store.allocate_identity();
                let desc = &block[a.obs * dim..(a.obs + 1) * dim];
                let inserted = self.store.insert(desc, id)?;
                touched.insert(inserted.key);
                result.evicted.extend(inserted.evicted);
                let mut track = TrackState::candidate(id, frame);
                track.provisional.push(inserted.key);
                track.on_assigned(frame, self.config.confirm_consecutive, self.config.confirm_window);
                a.id = Some(id);
                a.status = Some(track.status);
                self.tracks.insert(id, track);
                result.new_ids.push(id);
            }
        }

        self.store.age_unmatched(&touched);
        result.removed.extend(self.store.sweep());
        result.evicted.extend(self.store.evict_overflow());
        result.memory_size = self.store.len();
        result.assignments = assignments;
        Ok(result)
    }

    fn expire_tracks(&mut self, frame: u64, result: &mut FrameResult) {
        for track in self.tracks.values_mut() {
            if !track.expired(frame) {
                continue;
            }
            track.status = TrackStatus::Discarded;
            track.deadline = None;
            for key in track.provisional.drain(..) {
                if self.store.remove(key) {
                    result.rolled_back.push(key);
                }
            }
            result.discarded_ids.push(track.identity);
        }
    }
}
