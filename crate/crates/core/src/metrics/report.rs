use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{correspond, motp, mota, weighted_purity, EvalCounts, FrameCounts, GtMode, IdSwitchCounter, PurityReport, Tagged};
use crate::engine::FrameResult;
use crate::error::{Error, Result};
use crate::memory::IdentityId;
use crate::streams::FrameRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: u64,
    pub gt: u64,
    pub false_negatives: u64,
    pub false_positives: u64,
    pub id_switches: u64,
    pub matches: u64,
    pub mota: Option<f64>,
    pub motp: Option<f64>,
    pub purity: PurityReport,
    #[serde(skip)]
    pub counts: EvalCounts,
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>, digits: usize| v.map_or("undefined".to_string(), |x| format!("{x:.digits$}"));
        let mut s = String::new();
        let _ = writeln!(s, "frames           {}", self.frames);
        let _ = writeln!(s, "gt               {}", self.gt);
        let _ = writeln!(s, "false_negatives  {}", self.false_negatives);
        let _ = writeln!(s, "false_positives  {}", self.false_positives);
        let _ = writeln!(s, "id_switches      {}", self.id_switches);
        let _ = writeln!(s, "mota             {}", opt(self.mota, 4));
        let _ = writeln!(s, "motp             {}", opt(self.motp, 2));
        let _ = writeln!(s, "purity           {}", opt(self.purity.weighted, 4));
        let _ = writeln!(s, "clusters         {}", self.purity.clusters.len());
        let _ = writeln!(s);
        let _ = writeln!(s, "{:>8} {:>8} {:>12} {:>8}", "cluster", "size", "majority", "purity");
        for c in &self.purity.clusters {
            let _ = writeln!(s, "{:>8} {:>8} {:>12} {:>8.4}", c.cluster, c.size, c.majority, c.purity);
        }
        s
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Scores engine results against the labelled stream they were produced
/// from. Every assignment counts as a prediction, whatever its track status.
pub fn evaluate(stream: &[FrameRecord], results: &[FrameResult], mode: GtMode) -> Result<EvalReport> {
    if stream.len() != results.len() {
        return Err(Error::Evaluation(format!(
            "{} stream frames but {} result frames",
            stream.len(),
            results.len()
        )));
    }
    let mut counts = EvalCounts::default();
    let mut switches: IdSwitchCounter<IdentityId, String> = IdSwitchCounter::new();
    let mut ious = Vec::new();
    let mut clustered: Vec<(IdentityId, String)> = Vec::new();
    for (rec, res) in stream.iter().zip(results) {
        if rec.frame != res.frame {
            return Err(Error::Evaluation(format!(
                "stream frame {} paired with result frame {}",
                rec.frame, res.frame
            )));
        }
        let gts: Vec<Tagged<&str>> = rec
            .detections
            .iter()
            .filter_map(|d| {
                d.gt.as_deref().map(|g| Tagged {
                    det: d.det.clone(),
                    bbox: d.bbox,
                    tag: g,
                })
            })
            .collect();
        let preds: Vec<Tagged<IdentityId>> = res
            .assignments
            .iter()
            .filter_map(|a| {
                a.id.map(|id| Tagged {
                    det: a.det.clone(),
                    bbox: a.bbox,
                    tag: id,
                })
            })
            .collect();
        let c = correspond(&preds, &gts, mode)?;
        let matched: Vec<(IdentityId, String)> = c
            .pairs
            .iter()
            .map(|p| (preds[p.pred].tag, gts[p.gt].tag.to_string()))
            .collect();
        let ids = switches.update(matched.iter().map(|(p, g)| (p, g)));
        ious.extend(c.pairs.iter().filter_map(|p| p.iou));
        counts.push(FrameCounts {
            gt: gts.len() as u64,
            false_negatives: c.false_negatives as u64,
            false_positives: c.false_positives as u64,
            id_switches: ids,
            matches: c.pairs.len() as u64,
        });
        clustered.extend(matched);
    }
    let t = counts.total;
    Ok(EvalReport {
        frames: stream.len() as u64,
        gt: t.gt,
        false_negatives: t.false_negatives,
        false_positives: t.false_positives,
        id_switches: t.id_switches,
        matches: t.matches,
        mota: mota(&counts).ok(),
        motp: motp(&ious).ok(),
        purity: weighted_purity(clustered),
        counts,
    })
}
