//! Frozen clusterings used as class-based co-occurrence models.

use crate::corpus::{PairCorpus, Vocab};
use crate::engine::{gibbs_row, ClusterState, Hierarchy, HierarchyNode, Matrix};
use crate::error::{Error, Result};
use crate::simplex::{kl_dense, sparsify, Conditionals, Distribution};

/// Asymmetric class model `p̂_n(v) = sum_c p(c|n) p_c(v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassModel {
    pub(crate) beta: f64,
    pub(crate) verbs: Vocab,
    /// Clustered nouns, in membership row order.
    pub(crate) nouns: Vocab,
    pub(crate) cluster_ids: Vec<usize>,
    pub(crate) priors: Vec<f64>,
    pub(crate) centroids: Vec<Distribution>,
    pub(crate) memberships: Matrix,
    pub(crate) distortions: Matrix,
    pub(crate) hierarchy: Vec<HierarchyNode>,
    pub(crate) noun_prior: String,
}

impl ClassModel {
    /// Freezes `state`, trained on `conds` drawn from `corpus`.
    pub fn from_state(
        state: &ClusterState,
        corpus: &PairCorpus,
        conds: &Conditionals,
        hierarchy: &[HierarchyNode],
        noun_prior: &str,
    ) -> Result<Self> {
        if conds.len() != state.num_nouns() {
            return Err(Error::Dimension {
                left: conds.len(),
                right: state.num_nouns(),
            });
        }
        let nouns = Vocab::from_symbols(conds.nouns.iter().map(|&n| corpus.nouns().symbol(n)))?;
        Ok(Self {
            beta: state.beta(),
            verbs: corpus.verbs().clone(),
            nouns,
            cluster_ids: state.cluster_ids(),
            priors: state.priors().to_vec(),
            centroids: state.centroids().to_vec(),
            memberships: state.memberships().clone(),
            distortions: state.distortions().clone(),
            hierarchy: hierarchy.to_vec(),
            noun_prior: noun_prior.to_string(),
        })
    }

    /// One model per snapshot of `hierarchy`, in snapshot order.
    pub fn from_hierarchy(
        hierarchy: &Hierarchy,
        corpus: &PairCorpus,
        conds: &Conditionals,
        noun_prior: &str,
    ) -> Result<Vec<Self>> {
        hierarchy
            .snapshots
            .iter()
            .map(|s| Self::from_state(&s.state, corpus, conds, &hierarchy.nodes_until(s.beta), noun_prior))
            .collect()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn num_clusters(&self) -> usize {
        self.centroids.len()
    }

    pub fn verbs(&self) -> &Vocab {
        &self.verbs
    }

    pub fn nouns(&self) -> &Vocab {
        &self.nouns
    }

    pub fn cluster_ids(&self) -> &[usize] {
        &self.cluster_ids
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn centroids(&self) -> &[Distribution] {
        &self.centroids
    }

    pub fn memberships(&self) -> &Matrix {
        &self.memberships
    }

    pub fn distortions(&self) -> &Matrix {
        &self.distortions
    }

    pub fn hierarchy(&self) -> &[HierarchyNode] {
        &self.hierarchy
    }

    pub fn noun_prior_mode(&self) -> &str {
        &self.noun_prior
    }

    /// Column index of the cluster with hierarchy id `id`.
    pub fn cluster_index(&self, id: usize) -> Result<usize> {
        self.cluster_ids
            .iter()
            .position(|&c| c == id)
            .ok_or_else(|| Error::NotFound(format!("cluster {id}")))
    }

    /// Verbs with positive mass in some centroid.
    pub fn verb_support(&self) -> Vec<bool> {
        let mut seen = vec![false; self.verbs.len()];
        for c in &self.centroids {
            for &(v, _) in c.entries() {
                seen[v as usize] = true;
            }
        }
        seen
    }

    /// Mixture of centroids under a membership row.
    pub fn mixture(&self, row: &[f64]) -> Distribution {
        let mut acc = vec![0.0; self.verbs.len()];
        for (cent, &q) in self.centroids.iter().zip(row) {
            if q > 0.0 {
                for &(v, p) in cent.entries() {
                    acc[v as usize] += q * p;
                }
            }
        }
        sparsify(acc)
    }

    /// Estimated verb distribution of a clustered noun.
    pub fn predict(&self, noun: usize) -> Result<Distribution> {
        if noun >= self.memberships.rows() {
            return Err(Error::NotFound(format!("noun ordinal {noun}")));
        }
        Ok(self.mixture(self.memberships.row(noun)))
    }

    pub fn predict_noun(&self, noun: &str) -> Result<Distribution> {
        let n = self
            .nouns
            .get(noun)
            .ok_or_else(|| Error::NotFound(format!("noun {noun:?}")))?;
        self.predict(n as usize)
    }

    /// Memberships of an unclustered noun against the frozen centroids, at
    /// the model's beta.
    pub fn fold_in(&self, p: &Distribution) -> Result<Vec<f64>> {
        if p.dim() != self.verbs.len() {
            return Err(Error::Dimension {
                left: p.dim(),
                right: self.verbs.len(),
            });
        }
        let dists: Vec<f64> = self
            .centroids
            .iter()
            .map(|c| kl_dense(p, c))
            .collect();
        if dists.iter().all(|d| d.is_infinite()) {
            let support = self.verb_support();
            let mut verbs: Vec<String> = p
                .entries()
                .iter()
                .filter(|&&(v, _)| !support[v as usize])
                .map(|&(v, _)| self.verbs.symbol(v).to_string())
                .collect();
            if verbs.is_empty() {
                verbs = p
                    .entries()
                    .iter()
                    .map(|&(v, _)| self.verbs.symbol(v).to_string())
                    .collect();
            }
            return Err(Error::OutOfSupport { verbs });
        }
        let mut row = vec![0.0; self.num_clusters()];
        gibbs_row(&dists, self.beta, &mut row);
        Ok(row)
    }

    /// Restricts `p` to the verbs some centroid covers and renormalizes.
    /// Returns the clipped distribution and the mass removed.
    pub fn clip_unseen(&self, p: &Distribution) -> Result<(Distribution, f64)> {
        let support = self.verb_support();
        let kept: Vec<(u32, f64)> = p
            .entries()
            .iter()
            .copied()
            .filter(|&(v, _)| (v as usize) < support.len() && support[v as usize])
            .collect();
        let mass: f64 = kept.iter().map(|&(_, q)| q).sum();
        if kept.is_empty() {
            return Err(Error::OutOfSupport {
                verbs: p
                    .entries()
                    .iter()
                    .map(|&(v, _)| self.verbs.symbols().get(v as usize).cloned().unwrap_or_default())
                    .collect(),
            });
        }
        let entries = kept.into_iter().map(|(v, q)| (v, q / mass)).collect();
        Ok((Distribution::from_sparse(self.verbs.len(), entries)?, 1.0 - mass))
    }

    /// Builds a distribution over the model's verbs from named weights.
    /// Unknown verbs are an error unless `clip` is set, in which case they
    /// and verbs outside every centroid are dropped.
    pub fn distribution_from_named(&self, weights: &[(String, f64)], clip: bool) -> Result<Distribution> {
        let mut dense = vec![0.0; self.verbs.len()];
        let mut unknown = Vec::new();
        for (verb, w) in weights {
            if !(*w >= 0.0 && w.is_finite()) {
                return Err(Error::Range(format!("weight {w} for verb {verb:?}")));
            }
            match self.verbs.get(verb) {
                Some(v) => dense[v as usize] += w,
                None => unknown.push(verb.clone()),
            }
        }
        if !unknown.is_empty() && !clip {
            return Err(Error::OutOfSupport { verbs: unknown });
        }
        let p = Distribution::from_dense(&dense)
            .map_err(|_| Error::EmptyInput("distribution has no mass on known verbs".into()))?;
        if clip {
            Ok(self.clip_unseen(&p)?.0)
        } else {
            Ok(p)
        }
    }

    /// The `k` clustered nouns closest to a centroid, by `d(n,c)` in nats.
    /// Ties are broken by noun string.
    pub fn nearest_words(&self, cluster_id: usize, k: usize) -> Result<Vec<(String, f64)>> {
        if k == 0 {
            return Err(Error::Range("k must be at least 1".into()));
        }
        let c = self.cluster_index(cluster_id)?;
        let mut ranked: Vec<(&str, f64)> = (0..self.memberships.rows())
            .map(|n| (self.nouns.symbol(n as u32), self.distortions.get(n, c)))
            .collect();
        ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
        Ok(ranked
            .into_iter()
            .take(k)
            .map(|(n, d)| (n.to_string(), d))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ingest_pairs;
    use crate::engine::{anneal, AnnealConfig, StopCondition};
    use crate::simplex::{conditionals, kl, noun_marginal, EmpiricalPrior};
    use crate::synth::two_groups;

    /// A two-cluster model over verbs a, b with hand-set parameters.
    fn hand_model(memberships: Vec<f64>, centroids: Vec<Vec<f64>>, beta: f64) -> ClassModel {
        let k = centroids.len();
        let n = memberships.len() / k;
        ClassModel {
            beta,
            verbs: Vocab::from_symbols(["a", "b"]).unwrap(),
            nouns: Vocab::from_symbols((0..n).map(|i| format!("n{i}"))).unwrap(),
            cluster_ids: (0..k).collect(),
            priors: vec![1.0 / k as f64; k],
            centroids: centroids.iter().map(|c| Distribution::from_dense(c).unwrap()).collect(),
            memberships: Matrix::from_rows(n, k, memberships),
            distortions: Matrix::zeros(n, k),
            hierarchy: vec![],
            noun_prior: "empirical".into(),
        }
    }

    #[test]
    fn predict_examples() {
        let m = hand_model(vec![1.0, 0.0], vec![vec![0.3, 0.7], vec![0.9, 0.1]], 1.0);
        assert_eq!(m.predict(0).unwrap().to_dense(), vec![0.3, 0.7]);
        let m = hand_model(vec![0.5, 0.5], vec![vec![1.0, 0.0], vec![0.0, 1.0]], 1.0);
        assert_eq!(m.predict(0).unwrap().to_dense(), vec![0.5, 0.5]);
        assert!(matches!(m.predict(3), Err(Error::NotFound(_))));
        assert!(matches!(m.predict_noun("zz"), Err(Error::NotFound(_))));
    }

    #[test]
    fn single_cluster_predicts_global_average() {
        let corpus = ingest_pairs("a\tx\t3\nb\tx\t1\na\ty\t1\nb\ty\t5\n".as_bytes()).unwrap();
        let conds = conditionals(&corpus);
        let prior = noun_marginal(&corpus, &EmpiricalPrior).unwrap();
        let state = crate::engine::init_state(&conds.dists, &prior, 1.0).unwrap();
        let model = ClassModel::from_state(&state, &corpus, &conds, &[], "empirical").unwrap();
        let global = [4.0 / 10.0, 6.0 / 10.0];
        for n in 0..2 {
            let p = model.predict(n).unwrap().to_dense();
            for v in 0..2 {
                assert!((p[v] - global[v]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn fold_in_examples() {
        let m = hand_model(vec![1.0, 0.0], vec![vec![0.9, 0.1], vec![0.1, 0.9]], 5.0);
        let own = m.centroids[0].clone();
        let row = m.fold_in(&own).unwrap();
        assert!(row[0] > row[1]);

        let mid = Distribution::from_dense(&[0.5, 0.5]).unwrap();
        let row = m.fold_in(&mid).unwrap();
        assert!((row[0] - 0.5).abs() < 1e-12);

        let cold = hand_model(vec![1.0, 0.0], vec![vec![0.9, 0.1], vec![0.1, 0.9]], 1e-12);
        let row = cold.fold_in(&own).unwrap();
        assert!((row[0] - 0.5).abs() < 1e-9 && (row[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn fold_in_rejects_uncovered_verbs() {
        let m = hand_model(vec![1.0, 0.0], vec![vec![1.0, 0.0], vec![1.0, 0.0]], 1.0);
        let p = Distribution::from_dense(&[0.5, 0.5]).unwrap();
        match m.fold_in(&p) {
            Err(Error::OutOfSupport { verbs }) => assert_eq!(verbs, vec!["b".to_string()]),
            other => panic!("{other:?}"),
        }
        let (clipped, dropped) = m.clip_unseen(&p).unwrap();
        assert_eq!(clipped.to_dense(), vec![1.0, 0.0]);
        assert!((dropped - 0.5).abs() < 1e-15);
    }

    #[test]
    fn named_distribution_handles_unknown_verbs() {
        let m = hand_model(vec![1.0, 0.0], vec![vec![0.5, 0.5], vec![0.5, 0.5]], 1.0);
        let named = vec![("a".to_string(), 3.0), ("zz".to_string(), 1.0)];
        assert!(matches!(
            m.distribution_from_named(&named, false),
            Err(Error::OutOfSupport { .. })
        ));
        let p = m.distribution_from_named(&named, true).unwrap();
        assert_eq!(p.to_dense(), vec![1.0, 0.0]);
    }

    fn trained_two_group() -> (ClassModel, Conditionals) {
        let corpus = two_groups(6, 4, 150, 17);
        let conds = conditionals(&corpus);
        let prior = noun_marginal(&corpus, &EmpiricalPrior).unwrap();
        let stop = StopCondition {
            target_clusters: Some(2),
            ..StopCondition::default()
        };
        let run = anneal(&conds.dists, &prior, &AnnealConfig::default(), stop, &mut |_| {}).unwrap();
        let snap = run.hierarchy.snapshots.last().unwrap();
        let model = ClassModel::from_state(&snap.state, &corpus, &conds, &run.hierarchy.nodes, "empirical").unwrap();
        (model, conds)
    }

    #[test]
    fn nearest_words_stay_in_group() {
        let (model, _) = trained_two_group();
        assert_eq!(model.num_clusters(), 2);
        for &id in model.cluster_ids() {
            let top = model.nearest_words(id, 4).unwrap();
            let prefix = &top[0].0[..1];
            assert!(top.iter().all(|(n, _)| n.starts_with(prefix)), "{top:?}");
            assert!(top.windows(2).all(|w| w[0].1 <= w[1].1));
        }
        let all = model.nearest_words(model.cluster_ids()[0], 100).unwrap();
        assert_eq!(all.len(), 12);
        assert!(matches!(model.nearest_words(999, 3), Err(Error::NotFound(_))));
        assert!(model.nearest_words(model.cluster_ids()[0], 0).is_err());
    }

    #[test]
    fn nearest_word_at_zero_distance() {
        let corpus = ingest_pairs("a\tx\t1\nb\tx\t1\n".as_bytes()).unwrap();
        let conds = conditionals(&corpus);
        let prior = noun_marginal(&corpus, &EmpiricalPrior).unwrap();
        let state = crate::engine::init_state(&conds.dists, &prior, 1.0).unwrap();
        let model = ClassModel::from_state(&state, &corpus, &conds, &[], "empirical").unwrap();
        assert_eq!(model.nearest_words(0, 5).unwrap(), vec![("x".to_string(), 0.0)]);
    }

    #[test]
    fn fold_in_reproduces_stored_rows() {
        let (model, conds) = trained_two_group();
        for (n, p) in conds.dists.iter().enumerate() {
            let row = model.fold_in(p).unwrap();
            for (c, q) in row.iter().enumerate() {
                assert!((q - model.memberships.get(n, c)).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn predictions_are_distributions_with_full_support() {
        let (model, conds) = trained_two_group();
        let support = model.verb_support();
        assert!(support.iter().all(|&s| s));
        let uniform = Distribution::from_dense(&vec![1.0; model.verbs.len()]).unwrap();
        for n in 0..conds.len() {
            let p = model.predict(n).unwrap();
            assert!((p.mass() - 1.0).abs() <= 1e-9);
            assert!(kl(&uniform, &p).unwrap().is_finite());
        }
    }
}
