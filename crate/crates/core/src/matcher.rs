//! Reverse nearest neighbour matching.
//!
//! Roles are inverted with respect to the usual descriptor query: every
//! stored exemplar looks up its nearest and second-nearest observation in the
//! current frame. A match is accepted when `d1 / d2` is below the ratio
//! threshold, and accepted matches are grouped by their nearest observation,
//! so one observation can collect many redundant exemplars.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::engine::compute_eta;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::memory::{IdentityId, ItemKey, MemoryStore};

/// Rows per parallel work unit of the distance kernel.
const ROW_BLOCK: usize = 128;

/// One detection of the current frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// Detection key, used to join results back to ground truth.
    pub det: String,
    pub descriptor: Vec<f64>,
    pub bbox: Option<BBox>,
    /// Ground-truth identity, carried for evaluation only.
    pub gt: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchParams {
    pub rho_bar: f64,
    pub alpha: f64,
    /// Absolute distance gate used when the frame holds a single observation.
    pub tau_abs: f64,
}

/// An accepted memory-to-frame match.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchRecord {
    pub item_key: ItemKey,
    pub identity: IdentityId,
    /// Index of the nearest observation.
    pub obs_index: usize,
    /// Index of the second-nearest observation; `None` for fallback matches.
    pub second_index: Option<usize>,
    pub d1: f64,
    pub d2: f64,
    pub ratio: f64,
    pub eta: f64,
    /// Accepted through the single-observation distance gate.
    pub fallback: bool,
}

/// Accepted matches grouped by nearest observation. Records within a group
/// are ordered by item key.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatchGroups {
    pub groups: BTreeMap<usize, Vec<MatchRecord>>,
}

impl MatchGroups {
    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn get(&self, obs_index: usize) -> &[MatchRecord] {
        self.groups.get(&obs_index).map_or(&[], Vec::as_slice)
    }

    pub fn records(&self) -> impl Iterator<Item = &MatchRecord> {
        self.groups.values().flatten()
    }

    pub fn record_count(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }
}

/// Row-major distance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            let t = x[k] - y[k];
            acc[k] += t * t;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        let t = x - y;
        tail += t * t;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Euclidean distances between every memory row and every frame row.
///
/// Each entry is accumulated by one sequential loop, so the result does not
/// depend on how rows are split across threads.
pub fn pairwise_distances(
    memory: &[f64],
    frame: &[f64],
    dimension: usize,
) -> Result<DistanceMatrix> {
    if dimension == 0 || !memory.len().is_multiple_of(dimension) {
        return Err(Error::Dimension {
            expected: dimension,
            found: memory.len(),
        });
    }
    if !frame.len().is_multiple_of(dimension) {
        return Err(Error::Dimension {
            expected: dimension,
            found: frame.len(),
        });
    }
    let rows = memory.len() / dimension;
    let cols = frame.len() / dimension;
    let mut data = vec![0.0; rows * cols];
    if cols == 0 {
        return Ok(DistanceMatrix { rows, cols, data });
    }
    data.par_chunks_mut(ROW_BLOCK * cols)
        .zip(memory.par_chunks(ROW_BLOCK * dimension))
        .for_each(|(out, mem)| {
            for (out_row, m) in out.chunks_exact_mut(cols).zip(mem.chunks_exact(dimension)) {
                for (o, f) in out_row.iter_mut().zip(frame.chunks_exact(dimension)) {
                    *o = squared_distance(m, f).sqrt();
                }
            }
        });
    Ok(DistanceMatrix { rows, cols, data })
}

/// Nearest and second-nearest observation of one memory row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbours {
    pub first: (usize, f64),
    pub second: Option<(usize, f64)>,
}

/// Two smallest entries of a row; equal distances go to the lower index.
pub fn two_nearest(row: &[f64]) -> Option<Neighbours> {
    let mut first: Option<(usize, f64)> = None;
    let mut second: Option<(usize, f64)> = None;
    for (j, &d) in row.iter().enumerate() {
        match first {
            None => first = Some((j, d)),
            Some((_, bd)) if d < bd => {
                second = first;
                first = Some((j, d));
            }
            _ => {
                if second.is_none_or(|(_, sd)| d < sd) {
                    second = Some((j, d));
                }
            }
        }
    }
    first.map(|first| Neighbours { first, second })
}

/// Flattens observation descriptors into a row-major block.
pub fn frame_block(frame: &[Observation], dimension: usize) -> Result<Vec<f64>> {
    let mut block = Vec::with_capacity(frame.len() * dimension);
    for obs in frame {
        if obs.descriptor.len() != dimension {
            return Err(Error::Dimension {
                expected: dimension,
                found: obs.descriptor.len(),
            });
        }
        block.extend_from_slice(&obs.descriptor);
    }
    Ok(block)
}

/// Matches every stored exemplar against the frame.
pub fn renn_match(
    store: &MemoryStore,
    frame: &[Observation],
    params: &MatchParams,
) -> Result<MatchGroups> {
    let block = frame_block(frame, store.dimension())?;
    renn_match_block(store, &block, params)
}

pub(crate) fn renn_match_block(
    store: &MemoryStore,
    block: &[f64],
    params: &MatchParams,
) -> Result<MatchGroups> {
    let mut groups = MatchGroups::default();
    if store.is_empty() || block.is_empty() {
        return Ok(groups);
    }
    let dist = pairwise_distances(store.descriptors(), block, store.dimension())?;
    let single = dist.cols == 1;
    for (slot, meta) in store.metas().iter().enumerate() {
        let Some(nb) = two_nearest(dist.row(slot)) else {
            continue;
        };
        let (obs_index, d1) = nb.first;
        let record = match nb.second {
            Some((second, d2)) => {
                let ratio = if d2 > 0.0 { d1 / d2 } else { 0.0 };
                if !(ratio < params.rho_bar) {
                    continue;
                }
                MatchRecord {
                    item_key: meta.key,
                    identity: meta.identity,
                    obs_index,
                    second_index: Some(second),
                    d1,
                    d2,
                    ratio,
                    eta: compute_eta(d1, d2, params.rho_bar, params.alpha),
                    fallback: false,
                }
            }
            None => {
                debug_assert!(single);
                if !(d1 < params.tau_abs) {
                    continue;
                }
                MatchRecord {
                    item_key: meta.key,
                    identity: meta.identity,
                    obs_index,
                    second_index: None,
                    d1,
                    d2: params.tau_abs,
                    ratio: d1 / params.tau_abs,
                    eta: compute_eta(d1, params.tau_abs, params.rho_bar, params.alpha),
                    fallback: true,
                }
            }
        };
        groups.groups.entry(obs_index).or_default().push(record);
    }
    for records in groups.groups.values_mut() {
        records.sort_by_key(|r| r.item_key);
    }
    Ok(groups)
}

/// Observations with no accepted match: the new-identity candidates.
pub fn unmatched_observations(frame_len: usize, groups: &MatchGroups) -> Vec<usize> {
    (0..frame_len)
        .filter(|j| groups.get(*j).is_empty())
        .collect()
}
