//! Training-set census. One image is one frame's full slice stack.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensusStage {
    pub stage: String,
    pub subjects: usize,
    pub images: usize,
    pub labelled_subjects: usize,
    pub labelled_images: usize,
    pub pseudo_subjects: usize,
    pub pseudo_images: usize,
    /// Case ids contributing to this stage, sorted.
    pub case_ids: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub stages: Vec<CensusStage>,
}

impl Census {
    pub fn stage(&self, name: &str) -> Option<&CensusStage> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn all_case_ids(&self) -> impl Iterator<Item = &str> {
        self.stages.iter().flat_map(|s| s.case_ids.iter().map(String::as_str))
    }
}

/// Counts for one training set: `labelled` subjects at `frames_per_subject`
/// plus `pseudo` subjects at `frames_added_per_case`.
pub fn stage_counts(
    stage: &str,
    labelled: usize,
    frames_per_subject: usize,
    pseudo: usize,
    frames_added_per_case: usize,
) -> CensusStage {
    CensusStage {
        stage: stage.to_owned(),
        subjects: labelled + pseudo,
        images: labelled * frames_per_subject + pseudo * frames_added_per_case,
        labelled_subjects: labelled,
        labelled_images: labelled * frames_per_subject,
        pseudo_subjects: pseudo,
        pseudo_images: pseudo * frames_added_per_case,
        case_ids: Vec::new(),
    }
}

/// Scale of a study for census arithmetic alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensusPreset {
    pub labelled_pool: usize,
    pub frames_per_subject: usize,
    pub k: usize,
    pub frames_added_per_case: usize,
}

impl CensusPreset {
    /// Short-axis reference study: 500 labelled subjects at ED and ES, 30
    /// selected cases of 50 frames each.
    pub const REFERENCE_SAX: CensusPreset =
        CensusPreset { labelled_pool: 500, frames_per_subject: 2, k: 30, frames_added_per_case: 50 };

    /// The full / half / self-training stages.
    pub fn census(&self) -> Result<Census> {
        if self.labelled_pool < 2 {
            return Err(Error::invalid("labelled_pool", "must hold at least 2 subjects"));
        }
        let half = self.labelled_pool / 2;
        Ok(Census {
            stages: vec![
                stage_counts("full", self.labelled_pool, self.frames_per_subject, 0, 0),
                stage_counts("half", half, self.frames_per_subject, 0, 0),
                stage_counts("ssl", half, self.frames_per_subject, self.k, self.frames_added_per_case),
            ],
        })
    }
}
