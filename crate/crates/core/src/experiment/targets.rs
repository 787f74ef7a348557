use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TargetVariant;
use super::job_seed;
use crate::engine::TargetSpec;
use crate::model::{Observation, Stimulus};

/// The target chosen for one observation, in a form that can be recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AssignedTarget {
    Caption {
        text: String,
        /// Observation the caption was taken from.
        source_session: String,
        source_image: String,
    },
    VisualCleanImage,
}

impl AssignedTarget {
    pub fn to_spec(&self, clean: &Stimulus) -> TargetSpec {
        match self {
            AssignedTarget::Caption { text, .. } => TargetSpec::CaptionText(text.clone()),
            AssignedTarget::VisualCleanImage => TargetSpec::VisualCleanImage(clean.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub session_id: String,
    pub image_id: String,
    pub target: AssignedTarget,
}

/// An observation left without a target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedAssignment {
    pub session_id: String,
    pub image_id: String,
    pub reason: String,
}

fn caption_from(o: &Observation) -> AssignedTarget {
    AssignedTarget::Caption {
        text: o.caption.clone(),
        source_session: o.session_id.clone(),
        source_image: o.image_id.clone(),
    }
}

/// Picks a target for every observation.
///
/// The mismatched variants draw uniformly among the candidate captions with
/// an RNG seeded from `seed`, the variant and the observation, so a choice
/// does not depend on the order or number of other observations.
pub fn assign_targets(obs: &[Observation], variant: TargetVariant, seed: u64) -> (Vec<Assignment>, Vec<SkippedAssignment>) {
    let mut assigned = Vec::with_capacity(obs.len());
    let mut skipped = Vec::new();
    for o in obs {
        let candidates: Vec<&Observation> = match variant {
            TargetVariant::CorrectCaption => vec![o],
            TargetVariant::DifferentCaptionSameImage => obs
                .iter()
                .filter(|c| c.image_id == o.image_id && c.session_id != o.session_id)
                .collect(),
            TargetVariant::DifferentCaptionDifferentImage => obs.iter().filter(|c| c.image_id != o.image_id).collect(),
            TargetVariant::VisuallyGuided => {
                assigned.push(Assignment {
                    session_id: o.session_id.clone(),
                    image_id: o.image_id.clone(),
                    target: AssignedTarget::VisualCleanImage,
                });
                continue;
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(job_seed(seed, variant.as_str(), &o.image_id, &o.session_id));
        match candidates.choose(&mut rng) {
            Some(c) => assigned.push(Assignment {
                session_id: o.session_id.clone(),
                image_id: o.image_id.clone(),
                target: caption_from(c),
            }),
            None => skipped.push(SkippedAssignment {
                session_id: o.session_id.clone(),
                image_id: o.image_id.clone(),
                reason: format!("no candidate caption for {}", variant.as_str()),
            }),
        }
    }
    (assigned, skipped)
}
