//! Per-frame conflict resolution between identities.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::matcher::{MatchGroups, MatchRecord};
use crate::memory::IdentityId;

/// The identity an observation is assigned to, with the records that voted
/// for it.
#[derive(Clone, Debug, PartialEq)]
pub struct Claim {
    pub obs_index: usize,
    pub identity: IdentityId,
    pub support: Vec<MatchRecord>,
    pub mean_d1: f64,
    /// Records that voted for other identities on the same observation.
    pub outvoted: usize,
}

impl Claim {
    fn precedence(&self, other: &Claim) -> Ordering {
        other
            .support
            .len()
            .cmp(&self.support.len())
            .then(self.mean_d1.total_cmp(&other.mean_d1))
    }
}

fn mean_d1(records: &[MatchRecord]) -> f64 {
    records.iter().map(|r| r.d1).sum::<f64>() / records.len() as f64
}

/// Picks one identity per matched observation: the one with the most
/// matched exemplars, then the smaller mean `d1`, then the smaller id.
pub fn resolve_ambiguity(groups: &MatchGroups) -> Vec<Claim> {
    let mut claims = Vec::with_capacity(groups.groups.len());
    for (&obs_index, records) in &groups.groups {
        let mut by_id: BTreeMap<IdentityId, Vec<MatchRecord>> = BTreeMap::new();
        for r in records {
            by_id.entry(r.identity).or_default().push(*r);
        }
        let total = records.len();
        let best = by_id
            .into_iter()
            .map(|(identity, support)| Claim {
                obs_index,
                identity,
                mean_d1: mean_d1(&support),
                support,
                outvoted: 0,
            })
            // `min_by` keeps the first minimum, i.e. the smaller identity.
            .min_by(|a, b| a.precedence(b));
        if let Some(mut claim) = best {
            claim.outvoted = total - claim.support.len();
            claims.push(claim);
        }
    }
    claims
}

/// Keeps at most one observation per identity. Returns the surviving claims
/// (ordered by observation) and the observations that lost their identity.
pub fn enforce_uniqueness(claims: Vec<Claim>) -> (Vec<Claim>, Vec<usize>) {
    let mut by_id: BTreeMap<IdentityId, Vec<Claim>> = BTreeMap::new();
    for c in claims {
        by_id.entry(c.identity).or_default().push(c);
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (_, mut contenders) in by_id {
        contenders.sort_by(|a, b| a.precedence(b).then(a.obs_index.cmp(&b.obs_index)));
        let mut it = contenders.into_iter();
        kept.extend(it.next());
        dropped.extend(it.map(|c| c.obs_index));
    }
    kept.sort_by_key(|c| c.obs_index);
    dropped.sort_unstable();
    (kept, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::ItemKey;

    fn rec(key: u64, id: u64, obs: usize, d1: f64) -> MatchRecord {
        MatchRecord {
            item_key: ItemKey(key),
            identity: IdentityId(id),
            obs_index: obs,
            second_index: Some(obs + 1),
            d1,
            d2: 1.0,
            ratio: d1,
            eta: 0.99,
            fallback: false,
        }
    }

    fn groups(records: Vec<MatchRecord>) -> MatchGroups {
        let mut g = MatchGroups::default();
        for r in records {
            g.groups.entry(r.obs_index).or_default().push(r);
        }
        g
    }

    #[test]
    fn majority_identity_wins() {
        // Three exemplars of id 1 against one of id 2, all on observation 0.
        let g = groups(vec![
            rec(0, 1, 0, 0.3),
            rec(1, 1, 0, 0.4),
            rec(2, 1, 0, 0.5),
            rec(3, 2, 0, 0.1),
        ]);
        let claims = resolve_ambiguity(&g);
        assert_eq!(claims.len(), 1);
        assert_eq!(claims[0].identity, IdentityId(1));
        assert_eq!(claims[0].support.len(), 3);
        assert_eq!(claims[0].outvoted, 1);
    }

    #[test]
    fn single_identity_group_keeps_all_support() {
        let g = groups(vec![rec(0, 4, 0, 0.3), rec(1, 4, 0, 0.2)]);
        let claims = resolve_ambiguity(&g);
        assert_eq!(claims[0].identity, IdentityId(4));
        assert_eq!(claims[0].support.len(), 2);
        assert_eq!(claims[0].outvoted, 0);
    }

    #[test]
    fn vote_ties_enumerated() {
        // Two identities with two votes each; every assignment of d1 values
        // from a small grid. Expected winner computed directly.
        let grid = [0.1, 0.2, 0.3];
        for &a0 in &grid {
            for &a1 in &grid {
                for &b0 in &grid {
                    for &b1 in &grid {
                        let g = groups(vec![
                            rec(0, 7, 0, a0),
                            rec(1, 3, 0, b0),
                            rec(2, 7, 0, a1),
                            rec(3, 3, 0, b1),
                        ]);
                        let mean7 = (a0 + a1) / 2.0;
                        let mean3 = (b0 + b1) / 2.0;
                        let want = if mean7 < mean3 { 7 } else { 3 };
                        let got = resolve_ambiguity(&g)[0].identity;
                        assert_eq!(got, IdentityId(want), "{a0} {a1} {b0} {b1}");
                    }
                }
            }
        }
    }

    fn claim(obs: usize, id: u64, votes: usize, d1: f64) -> Claim {
        let support: Vec<MatchRecord> = (0..votes).map(|k| rec(k as u64, id, obs, d1)).collect();
        Claim {
            obs_index: obs,
            identity: IdentityId(id),
            mean_d1: d1,
            support,
            outvoted: 0,
        }
    }

    #[test]
    fn duplicate_identity_goes_to_the_stronger_observation() {
        let (kept, dropped) = enforce_uniqueness(vec![claim(0, 5, 1, 0.2), claim(1, 5, 4, 0.3)]);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].obs_index, 1);
        assert_eq!(dropped, vec![0]);
    }

    #[test]
    fn no_duplicates_is_identity() {
        let claims = vec![claim(0, 1, 2, 0.2), claim(1, 2, 1, 0.3)];
        let (kept, dropped) = enforce_uniqueness(claims.clone());
        assert_eq!(kept, claims);
        assert!(dropped.is_empty());
    }

    #[test]
    fn three_way_duplicates_enumerated() {
        // Every combination of vote count and mean d1 over three observations.
        let cells: Vec<(usize, f64)> = [1usize, 2]
            .iter()
            .flat_map(|&v| [0.1, 0.2].map(move |d| (v, d)))
            .collect();
        for c0 in &cells {
            for c1 in &cells {
                for c2 in &cells {
                    let cs = [c0, c1, c2];
                    let claims: Vec<Claim> =
                        cs.iter().enumerate().map(|(i, (v, d))| claim(i, 9, *v, *d)).collect();
                    let (kept, dropped) = enforce_uniqueness(claims);
                    assert_eq!(kept.len(), 1);
                    assert_eq!(dropped.len(), 2);
                    let want = (0..3)
                        .min_by(|&a, &b| {
                            let (va, da) = cs[a];
                            let (vb, db) = cs[b];
                            vb.cmp(va).then(da.partial_cmp(db).unwrap()).then(a.cmp(&b))
                        })
                        .unwrap();
                    assert_eq!(kept[0].obs_index, want, "{cs:?}");
                }
            }
        }
    }
}
