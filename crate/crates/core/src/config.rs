//! End-to-end training configuration and the pipeline it drives.

use crate::classmodel::ClassModel;
use crate::corpus::{filter_top_nouns, PairCorpus};
use crate::engine::{anneal, AnnealConfig, AnnealRun, Observer, StopCondition};
use crate::error::{Error, Result};
use crate::simplex::{conditionals, noun_marginal, prior_registry};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub anneal: AnnealConfig,
    pub stop: StopCondition,
    /// Cluster only the `k` most frequent nouns.
    pub top_k_nouns: Option<usize>,
    /// Fraction of tokens kept for training when splitting.
    pub train_fraction: f64,
    /// Name of a registered noun prior strategy.
    pub noun_prior: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            anneal: AnnealConfig::default(),
            stop: StopCondition::default(),
            top_k_nouns: None,
            train_fraction: 0.9,
            noun_prior: "empirical".into(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.anneal.validate()?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Range(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.top_k_nouns == Some(0) {
            return Err(Error::Range("top_k_nouns must be at least 1".into()));
        }
        if self.stop.target_clusters == Some(0) {
            return Err(Error::Range("target_clusters must be at least 1".into()));
        }
        if !(self.stop.beta_max > 0.0) {
            return Err(Error::Range(format!("beta_max must be positive, got {}", self.stop.beta_max)));
        }
        prior_registry().get(&self.noun_prior)?;
        Ok(())
    }
}

/// A finished training run and the model frozen at each snapshot.
#[derive(Debug, Clone)]
pub struct Training {
    /// The corpus actually clustered, after noun filtering and compaction.
    pub corpus: PairCorpus,
    pub run: AnnealRun,
    /// One model per snapshot in ascending size.
    pub models: Vec<ClassModel>,
}

/// Filters, clusters and freezes `corpus`. A stalled run is returned as a
/// value so callers can keep its snapshots.
pub fn train(corpus: &PairCorpus, config: &RunConfig, observer: Observer<'_>) -> Result<Training> {
    config.validate()?;
    let corpus = match config.top_k_nouns {
        Some(k) => filter_top_nouns(corpus, k)?,
        None => corpus.compact(),
    };
    let prior = noun_marginal(&corpus, prior_registry().get(&config.noun_prior)?)?;
    let conds = conditionals(&corpus);
    let run = anneal(&conds.dists, &prior, &config.anneal, config.stop, observer)?;
    let models = ClassModel::from_hierarchy(&run.hierarchy, &corpus, &conds, &config.noun_prior)?;
    Ok(Training { corpus, run, models })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::AnnealStatus;
    use crate::synth::two_groups;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            RunConfig {
                train_fraction: 1.0,
                ..RunConfig::default()
            },
            RunConfig {
                top_k_nouns: Some(0),
                ..RunConfig::default()
            },
            RunConfig {
                noun_prior: "zipf".into(),
                ..RunConfig::default()
            },
            RunConfig {
                stop: StopCondition {
                    target_clusters: Some(0),
                    ..StopCondition::default()
                },
                ..RunConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn trains_two_groups() {
        let corpus = two_groups(4, 3, 100, 5);
        let cfg = RunConfig {
            stop: StopCondition {
                target_clusters: Some(2),
                ..StopCondition::default()
            },
            top_k_nouns: Some(6),
            ..RunConfig::default()
        };
        let t = train(&corpus, &cfg, &mut |_| {}).unwrap();
        assert_eq!(t.run.status, AnnealStatus::Completed);
        assert_eq!(t.corpus.nouns().len(), 6);
        let sizes: Vec<usize> = t.models.iter().map(|m| m.num_clusters()).collect();
        assert_eq!(sizes, vec![1, 2]);
    }
}
