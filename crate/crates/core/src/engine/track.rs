use serde::{Deserialize, Serialize};

use crate::memory::{IdentityId, ItemKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Candidate,
    Tentative,
    Confirmed,
    Discarded,
}

impl TrackStatus {
    /// Tentative and confirmed identities count as recognized.
    pub fn is_known(self) -> bool {
        matches!(self, TrackStatus::Tentative | TrackStatus::Confirmed)
    }

    pub fn is_pending(self) -> bool {
        matches!(self, TrackStatus::Candidate | TrackStatus::Tentative)
    }
}

/// Lifecycle of one identity.
///
/// A fresh identity starts as a candidate and must be assigned again in the
/// very next frame; after `confirm_consecutive` consecutive assigned frames it
/// becomes tentative and must then be assigned at least once within
/// `confirm_window` frames to be confirmed. A pending identity that misses its
/// deadline is discarded together with its provisional exemplars.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackState {
    pub identity: IdentityId,
    pub status: TrackStatus,
    pub first_seen: u64,
    pub last_assigned: Option<u64>,
    pub consecutive: u32,
    pub assigned_frames: u64,
    /// Last frame at which a pending identity may still be assigned.
    pub deadline: Option<u64>,
    /// Exemplars inserted while pending; removed on discard.
    pub provisional: Vec<ItemKey>,
}

impl TrackState {
    pub fn candidate(identity: IdentityId, frame: u64) -> Self {
        Self {
            identity,
            status: TrackStatus::Candidate,
            first_seen: frame,
            last_assigned: None,
            consecutive: 0,
            assigned_frames: 0,
            deadline: None,
            provisional: Vec::new(),
        }
    }

    /// Identity restored from a memory snapshot.
    pub fn restored(identity: IdentityId) -> Self {
        Self {
            status: TrackStatus::Confirmed,
            ..Self::candidate(identity, 0)
        }
    }

    /// Records an assignment at `frame`. Returns true if this confirmed the
    /// identity.
    pub fn on_assigned(&mut self, frame: u64, confirm_consecutive: u32, confirm_window: u64) -> bool {
        let follows = self
            .last_assigned
            .is_some_and(|last| last + 1 == frame);
        self.consecutive = if follows { self.consecutive + 1 } else { 1 };
        self.last_assigned = Some(frame);
        self.assigned_frames += 1;
        match self.status {
            TrackStatus::Candidate => {
                if self.consecutive >= confirm_consecutive {
                    self.status = TrackStatus::Tentative;
                    self.deadline = Some(frame + confirm_window);
                } else {
                    self.deadline = Some(frame + 1);
                }
                false
            }
            TrackStatus::Tentative => {
                self.status = TrackStatus::Confirmed;
                self.deadline = None;
                self.provisional.clear();
                true
            }
            TrackStatus::Confirmed | TrackStatus::Discarded => false,
        }
    }

    pub fn expired(&self, frame: u64) -> bool {
        self.status.is_pending() && self.deadline.is_some_and(|d| d < frame)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidate_to_confirmed() {
        let mut t = TrackState::candidate(IdentityId(0), 10);
        t.on_assigned(10, 2, 3);
        assert_eq!(t.status, TrackStatus::Candidate);
        assert_eq!(t.deadline, Some(11));
        assert!(!t.expired(11));
        assert!(t.expired(12));

        t.on_assigned(11, 2, 3);
        assert_eq!(t.status, TrackStatus::Tentative);
        assert_eq!(t.deadline, Some(14));
        assert!(!t.expired(14));
        assert!(t.expired(15));

        assert!(t.on_assigned(13, 2, 3));
        assert_eq!(t.status, TrackStatus::Confirmed);
        assert!(!t.expired(100));
        assert_eq!(t.assigned_frames, 3);
    }

    #[test]
    fn single_frame_promotion_when_configured() {
        let mut t = TrackState::candidate(IdentityId(0), 0);
        t.on_assigned(0, 1, 3);
        assert_eq!(t.status, TrackStatus::Tentative);
        assert_eq!(t.deadline, Some(3));
    }
}
