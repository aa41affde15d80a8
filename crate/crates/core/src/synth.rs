//! Seeded synthetic verb–noun corpora with planted cluster structure.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::Rng;

use crate::corpus::PairCorpus;
use crate::seeded_rng;

/// Nouns in latent classes, each class with its own verb distribution.
#[derive(Debug, Clone)]
pub struct LatentClasses {
    pub classes: usize,
    pub nouns: usize,
    pub verbs: usize,
    /// Token counts per noun are drawn uniformly from this inclusive range.
    pub tokens_per_noun: (u64, u64),
    /// Fraction of each class distribution spread uniformly over all verbs.
    pub background: f64,
    pub seed: u64,
}

impl LatentClasses {
    /// Class of noun `i`.
    pub fn class_of(&self, noun: usize) -> usize {
        noun % self.classes
    }

    pub fn noun_name(&self, noun: usize) -> String {
        format!("n{noun:04}")
    }

    pub fn verb_name(&self, verb: usize) -> String {
        format!("v{verb:03}")
    }

    /// Class verb distributions. Each class concentrates on a random subset
    /// of about a quarter of the verbs.
    pub fn class_distributions(&self) -> Vec<Vec<f64>> {
        let mut rng = seeded_rng(self.seed ^ 0x5eed_c1a5);
        (0..self.classes)
            .map(|_| {
                let mut w: Vec<f64> = (0..self.verbs)
                    .map(|_| {
                        if rng.random_bool(0.25) {
                            rng.random_range(0.5..2.0)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                if w.iter().all(|&x| x == 0.0) {
                    w[rng.random_range(0..self.verbs)] = 1.0;
                }
                let s: f64 = w.iter().sum();
                w.iter()
                    .map(|&x| (1.0 - self.background) * x / s + self.background / self.verbs as f64)
                    .collect()
            })
            .collect()
    }

    pub fn generate(&self) -> PairCorpus {
        let classes = self.class_distributions();
        let samplers: Vec<WeightedIndex<f64>> = classes
            .iter()
            .map(|w| WeightedIndex::new(w).expect("class weights are positive"))
            .collect();
        let mut rng = seeded_rng(self.seed);
        let mut corpus = PairCorpus::new();
        for n in 0..self.nouns {
            let tokens = rng.random_range(self.tokens_per_noun.0..=self.tokens_per_noun.1);
            let sampler = &samplers[self.class_of(n)];
            let mut counts = vec![0u64; self.verbs];
            for _ in 0..tokens {
                counts[sampler.sample(&mut rng)] += 1;
            }
            let noun = self.noun_name(n);
            for (v, &c) in counts.iter().enumerate() {
                corpus.add(&self.verb_name(v), &noun, c);
            }
        }
        corpus
    }
}

/// Two groups of nouns over disjoint verb sets. Nouns `a00..` use verbs
/// `x00..`, nouns `b00..` use verbs `y00..`.
pub fn two_groups(nouns_per_group: usize, verbs_per_group: usize, tokens_per_noun: u64, seed: u64) -> PairCorpus {
    let mut rng = seeded_rng(seed);
    let mut corpus = PairCorpus::new();
    for (group, verb_prefix) in [("a", "x"), ("b", "y")] {
        let base: Vec<f64> = (0..verbs_per_group).map(|_| rng.random_range(0.5..2.0)).collect();
        let sampler = WeightedIndex::new(&base).expect("positive weights");
        for i in 0..nouns_per_group {
            let mut counts = vec![0u64; verbs_per_group];
            for _ in 0..tokens_per_noun {
                counts[sampler.sample(&mut rng)] += 1;
            }
            let noun = format!("{group}{i:02}");
            for (v, &c) in counts.iter().enumerate() {
                corpus.add(&format!("{verb_prefix}{v:02}"), &noun, c);
            }
        }
    }
    corpus
}
