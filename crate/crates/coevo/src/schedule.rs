//! Stagewise co-evolution schedule: which role's trajectories may enter a
//! training batch at step `t`.
//!
//! The stagewise policy alternates fixed-length phases of `K` steps:
//! `(α_D, α_E) = (0, 1)` when `⌊t/K⌋` is even (Executor stage) and `(1, 0)`
//! when odd (Designer stage). The coupled, executor-only, and designer-only
//! variants hold their masks constant.

use serde::{Deserialize, Serialize};

use crate::policy::Role;
use crate::rollout::TrajectoryRecord;

/// Default phase length.
pub const DEFAULT_STAGE_LENGTH: u64 = 30;

/// Which activation schedule a run follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchedulePolicy {
    Stagewise { k: u64 },
    Coupled,
    ExecutorOnly,
    DesignerOnly,
}

impl SchedulePolicy {
    pub fn stagewise(k: u64) -> Result<Self, ScheduleError> {
        if k == 0 {
            return Err(ScheduleError::ZeroStageLength);
        }
        Ok(SchedulePolicy::Stagewise { k })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SchedulePolicy::Stagewise { .. } => "stagewise",
            SchedulePolicy::Coupled => "coupled",
            SchedulePolicy::ExecutorOnly => "executor_only",
            SchedulePolicy::DesignerOnly => "designer_only",
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("stagewise schedule requires K ≥ 1")]
    ZeroStageLength,
}

/// Per-step activation pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageMask {
    pub step: u64,
    pub alpha_designer: u8,
    pub alpha_executor: u8,
}

impl StageMask {
    /// The role whose α is 1, when exactly one is active.
    pub fn active_role(&self) -> Option<Role> {
        match (self.alpha_designer, self.alpha_executor) {
            (1, 0) => Some(Role::Designer),
            (0, 1) => Some(Role::Executor),
            _ => None,
        }
    }

    pub fn alpha_for(&self, role: Role) -> u8 {
        match role {
            Role::Designer => self.alpha_designer,
            Role::Executor => self.alpha_executor,
        }
    }
}

/// Activation pair at training step `t` under a schedule policy.
pub fn stage_mask(t: u64, policy: SchedulePolicy) -> StageMask {
    let (alpha_designer, alpha_executor) = match policy {
        SchedulePolicy::Stagewise { k } => {
            let k = k.max(1);
            if (t / k) % 2 == 0 {
                (0, 1) // Executor stage
            } else {
                (1, 0) // Designer stage
            }
        }
        SchedulePolicy::Coupled => (1, 1),
        SchedulePolicy::ExecutorOnly => (0, 1),
        SchedulePolicy::DesignerOnly => (1, 0),
    };
    StageMask { step: t, alpha_designer, alpha_executor }
}

/// Keep only records whose role is active under the mask, stamping each
/// survivor's `stage_weight` with its α. Inactive-role records are excluded.
pub fn filter_batch(records: Vec<TrajectoryRecord>, mask: StageMask) -> Vec<TrajectoryRecord> {
    records
        .into_iter()
        .filter_map(|mut record| {
            let alpha = mask.alpha_for(record.role);
            if alpha == 0 {
                return None;
            }
            record.stage_weight = Some(f64::from(alpha));
            Some(record)
        })
        .collect()
}
