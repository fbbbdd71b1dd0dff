use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::binary::BinaryModel;
use super::remote::RemoteBackend;
use super::ClassifyError;
use crate::corpus::normalize_text;
use crate::ingest::{IssueRecord, RuleSet};
use crate::quality::{QualityAttribute, QualitySet};

pub const DEFAULT_THRESHOLD: f64 = 0.9;

/// Anything that maps texts to scores in [0, 1].
pub trait Scorer: Send + Sync {
    fn score_texts(&self, texts: &[String]) -> Result<Vec<f64>, ClassifyError>;
}

impl Scorer for BinaryModel {
    fn score_texts(&self, texts: &[String]) -> Result<Vec<f64>, ClassifyError> {
        Ok(texts.iter().map(|t| self.score(t)).collect())
    }
}

/// A member served by a remote backend under `model_name`.
pub struct RemoteScorer {
    pub backend: Arc<RemoteBackend>,
    pub model_name: String,
}

impl Scorer for RemoteScorer {
    fn score_texts(&self, texts: &[String]) -> Result<Vec<f64>, ClassifyError> {
        Ok(self.backend.predict(&self.model_name, texts)?)
    }
}

/// Seven per-quality scorers combined under a confidence threshold.
pub struct EnsembleModel {
    members: Vec<Box<dyn Scorer>>,
    threshold: f64,
}

impl std::fmt::Debug for EnsembleModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnsembleModel")
            .field("members", &self.members.len())
            .field("threshold", &self.threshold)
            .finish()
    }
}

fn check_threshold(threshold: f64) -> Result<(), ClassifyError> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(ClassifyError::InvalidThreshold(threshold))
    }
}

impl EnsembleModel {
    pub fn new(
        mut members: BTreeMap<QualityAttribute, Box<dyn Scorer>>,
        threshold: f64,
    ) -> Result<Self, ClassifyError> {
        check_threshold(threshold)?;
        let mut ordered = Vec::with_capacity(7);
        for q in QualityAttribute::ALL {
            ordered.push(members.remove(&q).ok_or(ClassifyError::IncompleteEnsemble(q))?);
        }
        Ok(EnsembleModel {
            members: ordered,
            threshold,
        })
    }

    /// Builds from trained models, keyed by each model's quality.
    pub fn from_models(models: Vec<BinaryModel>, threshold: f64) -> Result<Self, ClassifyError> {
        let members = models
            .into_iter()
            .map(|m| (m.quality, Box::new(m) as Box<dyn Scorer>))
            .collect();
        Self::new(members, threshold)
    }

    /// Every member served by `backend` under the quality's wire name.
    pub fn remote(backend: Arc<RemoteBackend>, threshold: f64) -> Result<Self, ClassifyError> {
        let members = QualityAttribute::ALL
            .into_iter()
            .map(|q| {
                let scorer = RemoteScorer {
                    backend: Arc::clone(&backend),
                    model_name: q.name().to_string(),
                };
                (q, Box::new(scorer) as Box<dyn Scorer>)
            })
            .collect();
        Self::new(members, threshold)
    }

    /// Loads `{quality}.qtag` for every quality from `dir`.
    pub fn load_dir(dir: &Path, threshold: f64) -> Result<Self, ClassifyError> {
        let models = QualityAttribute::ALL
            .iter()
            .map(|q| {
                let path = dir.join(format!("{}.qtag", q.name()));
                let file = std::fs::File::open(&path).map_err(|e| {
                    std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
                })?;
                let model = BinaryModel::read_from(std::io::BufReader::new(file))?;
                if model.quality != *q {
                    return Err(ClassifyError::Format(format!(
                        "{} holds a '{}' model",
                        path.display(),
                        model.quality
                    )));
                }
                Ok(model)
            })
            .collect::<Result<Vec<_>, ClassifyError>>()?;
        Self::from_models(models, threshold)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn member(&self, q: QualityAttribute) -> &dyn Scorer {
        self.members[q.index()].as_ref()
    }
}

/// Predicted qualities for one issue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagSet {
    pub issue_id: String,
    pub scores: BTreeMap<QualityAttribute, f64>,
    pub predicted: QualitySet,
    pub forced: QualitySet,
    /// Members whose backend failed; they contribute no score.
    #[serde(default, skip_serializing_if = "no_failures")]
    pub failed: QualitySet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn no_failures(set: &QualitySet) -> bool {
    set.is_empty()
}

impl TagSet {
    /// `predicted = {q : score ≥ threshold} ∪ forced`.
    pub fn from_scores(
        issue_id: impl Into<String>,
        scores: BTreeMap<QualityAttribute, f64>,
        forced: QualitySet,
        threshold: f64,
    ) -> Self {
        let predicted = scores
            .iter()
            .filter(|(_, &s)| s >= threshold)
            .map(|(&q, _)| q)
            .collect::<QualitySet>()
            .union(forced);
        TagSet {
            issue_id: issue_id.into(),
            scores,
            predicted,
            forced,
            failed: QualitySet::EMPTY,
            error: None,
        }
    }

    pub fn is_error(&self) -> bool {
        !self.failed.is_empty()
    }
}

/// Tags one issue: scrub/force rules, seven scores, threshold, union with
/// forced tags.
pub fn tag_issue(ensemble: &EnsembleModel, record: &IssueRecord, rules: &RuleSet) -> TagSet {
    tag_batch(ensemble, std::slice::from_ref(record), rules)
        .pop()
        .expect("one record in, one tag set out")
}

/// Tags many issues, scoring each member over the whole batch.
pub fn tag_batch(ensemble: &EnsembleModel, records: &[IssueRecord], rules: &RuleSet) -> Vec<TagSet> {
    let (texts, forced): (Vec<String>, Vec<QualitySet>) = records
        .iter()
        .map(|r| {
            let (rewritten, forced) = rules.apply(r);
            (normalize_text(&rewritten.text()), forced)
        })
        .unzip();

    let member_scores: Vec<Result<Vec<f64>, ClassifyError>> = ensemble
        .members
        .par_iter()
        .map(|m| m.score_texts(&texts))
        .collect();

    let mut failed = QualitySet::EMPTY;
    let mut messages = Vec::new();
    for (q, result) in QualityAttribute::ALL.iter().zip(&member_scores) {
        if let Err(e) = result {
            failed.insert(*q);
            messages.push(format!("{q}: {e}"));
        }
    }
    let error = (!messages.is_empty()).then(|| messages.join("; "));

    records
        .iter()
        .enumerate()
        .map(|(i, record)| {
            let scores = QualityAttribute::ALL
                .iter()
                .zip(&member_scores)
                .filter_map(|(q, r)| r.as_ref().ok().map(|s| (*q, s[i])))
                .collect();
            let mut tags = TagSet::from_scores(record.id.clone(), scores, forced[i], ensemble.threshold);
            tags.failed = failed;
            tags.error = error.clone();
            tags
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::remote::RemoteError;
    use crate::ingest::LabelRule;
    use proptest::prelude::*;
    use QualityAttribute::*;

    struct Fixed(f64);

    impl Scorer for Fixed {
        fn score_texts(&self, texts: &[String]) -> Result<Vec<f64>, ClassifyError> {
            Ok(vec![self.0; texts.len()])
        }
    }

    struct Down;

    impl Scorer for Down {
        fn score_texts(&self, _: &[String]) -> Result<Vec<f64>, ClassifyError> {
            Err(RemoteError::Unreachable("connection refused".into()).into())
        }
    }

    fn ensemble(scores: [f64; 7], threshold: f64) -> EnsembleModel {
        let members = QualityAttribute::ALL
            .into_iter()
            .zip(scores)
            .map(|(q, s)| (q, Box::new(Fixed(s)) as Box<dyn Scorer>))
            .collect();
        EnsembleModel::new(members, threshold).unwrap()
    }

    fn record(body: &str) -> IssueRecord {
        IssueRecord {
            id: "42".into(),
            repo: "a/b".into(),
            title: "title".into(),
            body: body.into(),
            labels: vec![],
            created_at: "2020-01-01T00:00:00Z".parse().unwrap(),
            repo_language: None,
        }
    }

    #[test]
    fn threshold_picks_confident_members() {
        let e = ensemble([0.3, 0.95, 0.1, 0.2, 0.3, 0.0, 0.25], 0.9);
        let tags = tag_issue(&e, &record("x"), &RuleSet::new(&[]).unwrap());
        assert_eq!(tags.predicted, [Security].into_iter().collect());
        assert_eq!(tags.scores.len(), 7);
    }

    #[test]
    fn just_below_threshold_is_empty() {
        let e = ensemble([0.89; 7], 0.9);
        let tags = tag_issue(&e, &record("x"), &RuleSet::new(&[]).unwrap());
        assert!(tags.predicted.is_empty());
        let e = ensemble([0.9; 7], 0.9);
        assert_eq!(tag_issue(&e, &record("x"), &RuleSet::new(&[]).unwrap()).predicted, QualitySet::FULL);
    }

    #[test]
    fn forced_tag_survives_low_scores() {
        let e = ensemble([0.1; 7], 0.9);
        let rules = RuleSet::new(&[LabelRule::force("snyk", Security)]).unwrap();
        let tags = tag_issue(&e, &record("Snyk alert"), &rules);
        assert_eq!(tags.predicted, [Security].into_iter().collect());
        assert_eq!(tags.forced, tags.predicted);
    }

    #[test]
    fn failed_member_is_reported() {
        let mut members: BTreeMap<QualityAttribute, Box<dyn Scorer>> = QualityAttribute::ALL
            .into_iter()
            .map(|q| (q, Box::new(Fixed(0.95)) as Box<dyn Scorer>))
            .collect();
        members.insert(Usability, Box::new(Down));
        let e = EnsembleModel::new(members, 0.9).unwrap();
        let tags = tag_issue(&e, &record("x"), &RuleSet::new(&[]).unwrap());
        assert!(tags.is_error());
        assert_eq!(tags.failed, [Usability].into_iter().collect());
        assert!(!tags.predicted.contains(Usability));
        assert_eq!(tags.predicted.len(), 6);
        assert!(tags.error.unwrap().contains("usability"));
    }

    #[test]
    fn incomplete_ensemble_rejected() {
        let mut members: BTreeMap<QualityAttribute, Box<dyn Scorer>> = BTreeMap::new();
        members.insert(Security, Box::new(Fixed(0.5)));
        assert!(matches!(
            EnsembleModel::new(members, 0.9),
            Err(ClassifyError::IncompleteEnsemble(Maintainability))
        ));
        let members = QualityAttribute::ALL
            .into_iter()
            .map(|q| (q, Box::new(Fixed(0.5)) as Box<dyn Scorer>))
            .collect();
        assert!(matches!(EnsembleModel::new(members, 1.0), Err(ClassifyError::InvalidThreshold(_))));
    }

    proptest! {
        #[test]
        fn predicted_is_thresholded_union(scores in proptest::array::uniform7(0.0f64..=1.0), t in 0.01f64..0.99, forced_bits in 0u8..128) {
            let forced = QualitySet::from_bits(forced_bits);
            let map: BTreeMap<_, _> = QualityAttribute::ALL.into_iter().zip(scores).collect();
            let tags = TagSet::from_scores("x", map.clone(), forced, t);
            for q in QualityAttribute::ALL {
                prop_assert_eq!(tags.predicted.contains(q), map[&q] >= t || forced.contains(q));
            }
        }
    }
}
