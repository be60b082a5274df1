//! Tracking evaluation: correspondence, MOTA, MOTP, identity switches and
//! weighted cluster purity.

mod purity;
mod report;

use std::collections::{HashMap, HashSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

pub use purity::{weighted_purity, ClusterPurity, PurityReport};
pub use report::{evaluate, EvalReport};

pub const IOU_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GtMode {
    /// Join predictions and ground truth on the detection key.
    #[default]
    Key,
    /// Greedy best-overlap matching of boxes.
    Iou,
}

impl std::str::FromStr for GtMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "key" => Ok(GtMode::Key),
            "iou" => Ok(GtMode::Iou),
            other => Err(Error::Config(format!("unknown gt mode `{other}`"))),
        }
    }
}

/// One prediction or ground-truth entry of a frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Tagged<T> {
    pub det: String,
    pub bbox: Option<BBox>,
    pub tag: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pair {
    pub pred: usize,
    pub gt: usize,
    pub iou: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Correspondence {
    pub pairs: Vec<Pair>,
    pub false_negatives: usize,
    pub false_positives: usize,
}

/// Matches one frame's predictions to its ground truth.
pub fn correspond<P, G>(preds: &[Tagged<P>], gts: &[Tagged<G>], mode: GtMode) -> Result<Correspondence> {
    let pairs = match mode {
        GtMode::Key => key_join(preds, gts)?,
        GtMode::Iou => greedy_iou(preds, gts)?,
    };
    Ok(Correspondence {
        false_negatives: gts.len() - pairs.len(),
        false_positives: preds.len() - pairs.len(),
        pairs,
    })
}

fn overlap(a: Option<BBox>, b: Option<BBox>) -> Option<f64> {
    Some(a?.iou(&b?))
}

fn key_join<P, G>(preds: &[Tagged<P>], gts: &[Tagged<G>]) -> Result<Vec<Pair>> {
    if preds.iter().any(|p| p.det.is_empty()) || gts.iter().any(|g| g.det.is_empty()) {
        return Err(Error::Evaluation("key join needs a detection key on every entry".into()));
    }
    let mut index: HashMap<&str, usize> = HashMap::with_capacity(gts.len());
    for (i, g) in gts.iter().enumerate() {
        if index.insert(g.det.as_str(), i).is_some() {
            return Err(Error::Evaluation(format!("detection key `{}` repeats in a frame", g.det)));
        }
    }
    let mut seen = HashSet::new();
    let mut pairs = Vec::new();
    for (p, pred) in preds.iter().enumerate() {
        if !seen.insert(pred.det.as_str()) {
            return Err(Error::Evaluation(format!("detection key `{}` repeats in a frame", pred.det)));
        }
        if let Some(&g) = index.get(pred.det.as_str()) {
            pairs.push(Pair {
                pred: p,
                gt: g,
                iou: overlap(pred.bbox, gts[g].bbox),
            });
        }
    }
    Ok(pairs)
}

fn greedy_iou<P, G>(preds: &[Tagged<P>], gts: &[Tagged<G>]) -> Result<Vec<Pair>> {
    let boxes = |b: Option<BBox>| b.ok_or_else(|| Error::Evaluation("iou matching needs a box on every entry".into()));
    let pb: Vec<BBox> = preds.iter().map(|p| boxes(p.bbox)).collect::<Result<_>>()?;
    let gb: Vec<BBox> = gts.iter().map(|g| boxes(g.bbox)).collect::<Result<_>>()?;
    let mut cand = Vec::new();
    for (g, gbox) in gb.iter().enumerate() {
        for (p, pbox) in pb.iter().enumerate() {
            let iou = pbox.iou(gbox);
            if iou >= IOU_THRESHOLD {
                cand.push((iou, g, p));
            }
        }
    }
    cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_used = vec![false; preds.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for (iou, g, p) in cand {
        if !pred_used[p] && !gt_used[g] {
            pred_used[p] = true;
            gt_used[g] = true;
            pairs.push(Pair { pred: p, gt: g, iou: Some(iou) });
        }
    }
    pairs.sort_by_key(|p| p.pred);
    Ok(pairs)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameCounts {
    pub gt: u64,
    pub false_negatives: u64,
    pub false_positives: u64,
    pub id_switches: u64,
    pub matches: u64,
}

impl std::ops::AddAssign for FrameCounts {
    fn add_assign(&mut self, o: Self) {
        self.gt += o.gt;
        self.false_negatives += o.false_negatives;
        self.false_positives += o.false_positives;
        self.id_switches += o.id_switches;
        self.matches += o.matches;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub frames: Vec<FrameCounts>,
    pub total: FrameCounts,
}

impl EvalCounts {
    pub fn push(&mut self, c: FrameCounts) {
        self.total += c;
        self.frames.push(c);
    }
}

impl FromIterator<FrameCounts> for EvalCounts {
    fn from_iter<I: IntoIterator<Item = FrameCounts>>(iter: I) -> Self {
        let mut out = EvalCounts::default();
        for c in iter {
            out.push(c);
        }
        out
    }
}

/// `1 - (FN + FP + IDS) / GT` over all frames.
pub fn mota(counts: &EvalCounts) -> Result<f64> {
    let t = counts.total;
    if t.gt == 0 {
        return Err(Error::UndefinedMetric("MOTA needs at least one ground-truth object"));
    }
    Ok(1.0 - (t.false_negatives + t.false_positives + t.id_switches) as f64 / t.gt as f64)
}

/// Mean IoU of matched pairs, in percent.
pub fn motp(ious: &[f64]) -> Result<f64> {
    if ious.is_empty() {
        return Err(Error::UndefinedMetric("MOTP needs at least one matched pair with boxes"));
    }
    Ok(100.0 * ious.iter().sum::<f64>() / ious.len() as f64)
}

/// Counts, per frame, predicted identities whose matched ground-truth label
/// differs from the one they were last matched to.
#[derive(Clone, Debug)]
pub struct IdSwitchCounter<P, G> {
    last: HashMap<P, G>,
}

impl<P, G> Default for IdSwitchCounter<P, G> {
    fn default() -> Self {
        Self { last: HashMap::new() }
    }
}

impl<P: Eq + Hash + Clone, G: PartialEq + Clone> IdSwitchCounter<P, G> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update<'a>(&mut self, matched: impl IntoIterator<Item = (&'a P, &'a G)>) -> u64
    where
        P: 'a,
        G: 'a,
    {
        let mut switches = 0;
        for (p, g) in matched {
            match self.last.get_mut(p) {
                Some(prev) if prev != g => {
                    switches += 1;
                    *prev = g.clone();
                }
                Some(_) => {}
                None => {
                    self.last.insert(p.clone(), g.clone());
                }
            }
        }
        switches
    }
}

/// Identity switches per frame for a history of `(predicted, gt)` matches.
pub fn id_switches<P: Eq + Hash + Clone, G: PartialEq + Clone>(history: &[Vec<(P, G)>]) -> Vec<u64> {
    let mut counter = IdSwitchCounter::new();
    history
        .iter()
        .map(|frame| counter.update(frame.iter().map(|(p, g)| (p, g))))
        .collect()
}
