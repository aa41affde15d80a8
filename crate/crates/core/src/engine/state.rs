use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::simplex::{dense_logs, entry_logs, kl_from_logs, sparsify, weighted_average, Distribution, NounPrior};

/// Clusters whose prior falls below this are treated as dead.
pub const DEAD_PRIOR: f64 = 1e-12;

/// Dense row-major matrix, rows are nouns and columns clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |r| self.get(r, c))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Rebuilds the matrix from a per-row mapping of column sources.
    fn remap_columns(&self, cols: usize, f: impl Fn(&[f64], &mut [f64])) -> Matrix {
        let mut out = Matrix::zeros(self.rows, cols);
        if cols > 0 {
            for (src, dst) in self.data.chunks(self.cols.max(1)).zip(out.data.chunks_mut(cols)) {
                f(src, dst);
            }
        }
        out
    }
}

/// Pending-twin bookkeeping attached to a cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterTag {
    /// Hierarchy node this cluster represents, or for a pending twin, the
    /// node it was copied from.
    pub node: usize,
    /// `Some(0)` or `Some(1)` while the cluster is one half of an unresolved
    /// twin pair.
    pub twin: Option<u8>,
}

/// The clustering `C_beta` at one inverse temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub(crate) beta: f64,
    pub(crate) centroids: Vec<Distribution>,
    pub(crate) priors: Vec<f64>,
    pub(crate) memberships: Matrix,
    pub(crate) noun_prior: NounPrior,
    pub(crate) distortions: Matrix,
    pub(crate) log_zn: Vec<f64>,
    pub(crate) tags: Vec<ClusterTag>,
    pub(crate) next_node: usize,
}

impl ClusterState {
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn num_clusters(&self) -> usize {
        self.centroids.len()
    }

    pub fn num_nouns(&self) -> usize {
        self.memberships.rows()
    }

    pub fn centroids(&self) -> &[Distribution] {
        &self.centroids
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    /// `p(c|n)`, one row per noun.
    pub fn memberships(&self) -> &Matrix {
        &self.memberships
    }

    /// `d(n,c)` in nats. Entries are `+inf` only where the membership is 0.
    pub fn distortions(&self) -> &Matrix {
        &self.distortions
    }

    pub fn noun_prior(&self) -> &NounPrior {
        &self.noun_prior
    }

    pub fn log_partitions(&self) -> &[f64] {
        &self.log_zn
    }

    pub fn tags(&self) -> &[ClusterTag] {
        &self.tags
    }

    /// Hierarchy node id of each cluster.
    pub fn cluster_ids(&self) -> Vec<usize> {
        self.tags.iter().map(|t| t.node).collect()
    }

    /// Sets the inverse temperature and re-derives memberships.
    pub fn set_beta(&mut self, beta: f64) {
        self.beta = beta;
        update_memberships(self);
    }

    /// `p(n|c)` by Bayes inversion of the memberships.
    pub fn noun_given_cluster(&self, c: usize) -> Vec<f64> {
        let pn = self.noun_prior.weights();
        let mass = cluster_mass(&self.memberships, pn, c);
        (0..self.num_nouns())
            .map(|n| pn[n] * self.memberships.get(n, c) / mass)
            .collect()
    }

    /// Index of the largest membership for each noun; ties go to the lower index.
    pub fn hard_assignment(&self) -> Vec<usize> {
        (0..self.num_nouns())
            .map(|n| {
                let row = self.memberships.row(n);
                let mut best = 0;
                for (c, &q) in row.iter().enumerate() {
                    if q > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }

    pub(crate) fn set_centroids(&mut self, centroids: Vec<Distribution>, conds: &[Distribution]) -> Result<()> {
        self.centroids = centroids;
        self.distortions = distortion_matrix(self, conds)?;
        Ok(())
    }

    /// Keeps only the listed clusters, in order.
    pub(crate) fn retain_clusters(&mut self, keep: &[usize]) {
        self.centroids = keep.iter().map(|&c| self.centroids[c].clone()).collect();
        self.priors = keep.iter().map(|&c| self.priors[c]).collect();
        self.tags = keep.iter().map(|&c| self.tags[c]).collect();
        let k = keep.len();
        self.memberships = self.memberships.remap_columns(k, |src, dst| {
            for (d, &c) in dst.iter_mut().zip(keep) {
                *d = src[c];
            }
        });
        self.distortions = self.distortions.remap_columns(k, |src, dst| {
            for (d, &c) in dst.iter_mut().zip(keep) {
                *d = src[c];
            }
        });
    }

    /// Folds column `from` into column `into` and removes `from`.
    pub(crate) fn merge_columns(&mut self, into: usize, from: usize, centroid: Distribution) {
        self.centroids[into] = centroid;
        self.priors[into] += self.priors[from];
        let k = self.num_clusters();
        self.memberships = self.memberships.remap_columns(k, |src, dst| {
            dst.copy_from_slice(src);
            dst[into] += src[from];
        });
        let keep: Vec<usize> = (0..k).filter(|&c| c != from).collect();
        self.retain_clusters(&keep);
    }

    pub(crate) fn replace_clusters(
        &mut self,
        centroids: Vec<Distribution>,
        priors: Vec<f64>,
        tags: Vec<ClusterTag>,
        conds: &[Distribution],
    ) -> Result<()> {
        let k = centroids.len();
        self.priors = priors;
        self.tags = tags;
        self.memberships = Matrix::zeros(self.num_nouns(), k);
        self.set_centroids(centroids, conds)?;
        update_memberships(self);
        Ok(())
    }
}

fn cluster_mass(memberships: &Matrix, pn: &[f64], c: usize) -> f64 {
    memberships
        .column(c)
        .zip(pn)
        .map(|(q, &p)| p * q)
        .sum()
}

/// A single cluster whose centroid is the `p(n)`-weighted average of all
/// noun distributions.
pub fn init_state(conds: &[Distribution], noun_prior: &NounPrior, beta: f64) -> Result<ClusterState> {
    if conds.is_empty() {
        return Err(Error::EmptyInput("no nouns to cluster".into()));
    }
    if conds.len() != noun_prior.len() {
        return Err(Error::Dimension {
            left: conds.len(),
            right: noun_prior.len(),
        });
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Range(format!("beta must be positive, got {beta}")));
    }
    let centroid = weighted_average(conds, noun_prior.weights())?;
    let n = conds.len();
    let mut state = ClusterState {
        beta,
        centroids: vec![centroid],
        priors: vec![1.0],
        memberships: Matrix::from_rows(n, 1, vec![1.0; n]),
        noun_prior: noun_prior.clone(),
        distortions: Matrix::zeros(n, 1),
        log_zn: vec![0.0; n],
        tags: vec![ClusterTag { node: 0, twin: None }],
        next_node: 1,
    };
    state.distortions = distortion_matrix(&state, conds)?;
    update_memberships(&mut state);
    Ok(state)
}

/// `d(n,c) = D(p_n || p_c)` for every noun and cluster.
///
/// A noun may lie outside the support of a centroid it has zero membership
/// in; that entry is `+inf`. A noun outside every centroid's support is a
/// consistency failure.
pub fn distortion_matrix(state: &ClusterState, conds: &[Distribution]) -> Result<Matrix> {
    let k = state.centroids.len();
    let log_q: Vec<Vec<f64>> = state.centroids.iter().map(dense_logs).collect();
    let data: Vec<f64> = conds
        .par_iter()
        .flat_map_iter(|p| {
            let lp = entry_logs(p);
            log_q.iter().map(move |lq| kl_from_logs(p, &lp, lq)).collect::<Vec<_>>()
        })
        .collect();
    let out = Matrix::from_rows(conds.len(), k, data);
    for n in 0..out.rows() {
        if out.row(n).iter().all(|d| d.is_infinite()) {
            return Err(Error::Consistency(format!(
                "noun row {n} lies outside the support of every centroid"
            )));
        }
    }
    Ok(out)
}

/// Maximum-entropy memberships `p(c|n) = exp(-beta d(n,c)) / Z_n` for
/// distortions `row`, with `ln Z_n`. Shifted by the row minimum for stability.
pub fn gibbs_row(row: &[f64], beta: f64, out: &mut [f64]) -> f64 {
    let shift = row
        .iter()
        .map(|&d| beta * d)
        .fold(f64::INFINITY, f64::min);
    let mut z = 0.0;
    for (o, &d) in out.iter_mut().zip(row) {
        let w = (-(beta * d - shift)).exp();
        *o = w;
        z += w;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
    -shift + z.ln()
}

/// Memberships and `ln Z_n` for frozen distortions at `beta`.
pub(crate) fn gibbs_memberships(distortions: &Matrix, beta: f64) -> (Matrix, Vec<f64>) {
    let k = distortions.cols();
    let mut data = vec![0.0; distortions.rows() * k];
    let log_zn: Vec<f64> = data
        .par_chunks_mut(k.max(1))
        .enumerate()
        .map(|(n, out)| gibbs_row(distortions.row(n), beta, out))
        .collect();
    (Matrix::from_rows(distortions.rows(), k, data), log_zn)
}

/// Recomputes `p(c|n)` from the cached distortions, then `p(c)`.
pub fn update_memberships(state: &mut ClusterState) {
    let (m, log_zn) = gibbs_memberships(&state.distortions, state.beta);
    state.memberships = m;
    state.log_zn = log_zn;
    let pn = state.noun_prior.weights();
    state.priors = (0..state.num_clusters())
        .map(|c| cluster_mass(&state.memberships, pn, c))
        .collect();
}

/// Centroids `p(v|c) = sum_n p(n|c) p(v|n)` for the current memberships.
pub(crate) fn compute_centroids(state: &ClusterState, conds: &[Distribution]) -> Result<Vec<Distribution>> {
    if let Some((c, &prior)) = state
        .priors
        .iter()
        .enumerate()
        .find(|(_, &p)| !(p >= DEAD_PRIOR))
    {
        return Err(Error::DeadCluster { cluster: c, prior });
    }
    let dim = conds.first().map_or(0, Distribution::dim);
    let pn = state.noun_prior.weights();
    let centroids = (0..state.num_clusters())
        .into_par_iter()
        .map(|c| {
            let mass = cluster_mass(&state.memberships, pn, c);
            let mut acc = vec![0.0; dim];
            for (n, p) in conds.iter().enumerate() {
                let w = pn[n] * state.memberships.get(n, c) / mass;
                if w > 0.0 {
                    for &(v, pv) in p.entries() {
                        acc[v as usize] += w * pv;
                    }
                }
            }
            sparsify(acc)
        })
        .collect();
    Ok(centroids)
}

/// Re-estimates every centroid and refreshes the distortion cache.
pub fn update_centroids(state: &mut ClusterState, conds: &[Distribution]) -> Result<()> {
    let centroids = compute_centroids(state, conds)?;
    state.set_centroids(centroids, conds)
}

/// Largest entrywise gap between the stored centroids and the centroid
/// equation evaluated at the current memberships.
pub fn centroid_residual(state: &ClusterState, conds: &[Distribution]) -> Result<f64> {
    let fresh = compute_centroids(state, conds)?;
    Ok(max_entry_gap(&state.centroids, &fresh))
}

pub(crate) fn max_entry_gap(a: &[Distribution], b: &[Distribution]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            x.to_dense()
                .iter()
                .zip(y.to_dense())
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Thermodynamic summary of a state.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineDiagnostics {
    /// `-(1/beta) sum_n p(n) ln Z_n`.
    pub free_energy: f64,
    /// `sum_n p(n) sum_c p(c|n) d(n,c)`.
    pub avg_distortion: f64,
    /// `-sum_n p(n) sum_c p(c|n) ln p(c|n)`.
    pub membership_entropy: f64,
    pub log_zn: Vec<f64>,
    /// `ln sum_n exp(-beta d(n,c))`, diagnostic only.
    pub log_zc: Vec<f64>,
}

impl EngineDiagnostics {
    /// `<D> - H/beta`, equal to the free energy at the maximum-entropy memberships.
    pub fn distortion_minus_entropy(&self, beta: f64) -> f64 {
        self.avg_distortion - self.membership_entropy / beta
    }
}

fn distortion_and_entropy(memberships: &Matrix, distortions: &Matrix, pn: &[f64]) -> (f64, f64) {
    let mut d_avg = 0.0;
    let mut h = 0.0;
    for (n, &w) in pn.iter().enumerate() {
        let mut dn = 0.0;
        let mut hn = 0.0;
        for (&q, &d) in memberships.row(n).iter().zip(distortions.row(n)) {
            if q > 0.0 {
                dn += q * d;
                hn -= q * q.ln();
            }
        }
        d_avg += w * dn;
        h += w * hn;
    }
    (d_avg, h)
}

/// `<D> - H/beta` for the memberships as stored, whether or not they are
/// in exponential form. Both half-steps of [`super::converge`] minimize it.
pub fn free_energy_functional(state: &ClusterState) -> f64 {
    let (d, h) = distortion_and_entropy(
        &state.memberships,
        &state.distortions,
        state.noun_prior.weights(),
    );
    d - h / state.beta
}

fn diagnostics(
    memberships: &Matrix,
    distortions: &Matrix,
    log_zn: &[f64],
    pn: &[f64],
    beta: f64,
) -> EngineDiagnostics {
    let (avg_distortion, membership_entropy) = distortion_and_entropy(memberships, distortions, pn);
    let free_energy = -pn.iter().zip(log_zn).map(|(&w, &z)| w * z).sum::<f64>() / beta;
    let log_zc = (0..distortions.cols())
        .map(|c| {
            let shift = distortions
                .column(c)
                .map(|d| beta * d)
                .fold(f64::INFINITY, f64::min);
            let s: f64 = distortions.column(c).map(|d| (-(beta * d - shift)).exp()).sum();
            -shift + s.ln()
        })
        .collect();
    EngineDiagnostics {
        free_energy,
        avg_distortion,
        membership_entropy,
        log_zn: log_zn.to_vec(),
        log_zc,
    }
}

/// Diagnostics of a state whose memberships are in exponential form.
pub fn free_energy(state: &ClusterState) -> EngineDiagnostics {
    diagnostics(
        &state.memberships,
        &state.distortions,
        &state.log_zn,
        state.noun_prior.weights(),
        state.beta,
    )
}

/// Diagnostics at `beta` with the centroids and distortions of `state` held
/// fixed and memberships re-derived.
pub fn frozen_free_energy(state: &ClusterState, beta: f64) -> EngineDiagnostics {
    let (m, log_zn) = gibbs_memberships(&state.distortions, beta);
    diagnostics(&m, &state.distortions, &log_zn, state.noun_prior.weights(), beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn d(p: &[f64]) -> Distribution {
        Distribution::from_dense(p).unwrap()
    }

    fn two_point() -> Vec<Distribution> {
        vec![d(&[1.0, 0.0]), d(&[0.0, 1.0])]
    }

    /// A state with given centroids and memberships derived at `beta`.
    fn state_with(conds: &[Distribution], prior: NounPrior, centroids: Vec<Distribution>, beta: f64) -> ClusterState {
        let mut s = init_state(conds, &prior, beta).unwrap();
        let k = centroids.len();
        let tags = (0..k).map(|i| ClusterTag { node: i, twin: None }).collect();
        s.replace_clusters(centroids, vec![1.0 / k as f64; k], tags, conds).unwrap();
        s
    }

    #[test]
    fn init_examples() {
        let conds = two_point();
        let s = init_state(&conds, &NounPrior::uniform(2).unwrap(), 1.0).unwrap();
        assert_eq!(s.centroids[0].to_dense(), vec![0.5, 0.5]);
        assert_eq!(s.memberships.as_slice(), &[1.0, 1.0]);
        assert_eq!(s.priors, vec![1.0]);

        let one = vec![d(&[0.2, 0.8])];
        let s = init_state(&one, &NounPrior::uniform(1).unwrap(), 1.0).unwrap();
        assert_eq!(s.centroids[0], one[0]);

        let s = init_state(&conds, &NounPrior::new(vec![0.75, 0.25]).unwrap(), 1.0).unwrap();
        assert_eq!(s.centroids[0].to_dense(), vec![0.75, 0.25]);

        assert!(matches!(
            init_state(&[], &NounPrior::uniform(1).unwrap(), 1.0),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn distortion_examples() {
        let conds = vec![d(&[0.5, 0.5]), d(&[1.0, 0.0]), d(&[0.75, 0.25])];
        let s = init_state(&conds, &NounPrior::uniform(3).unwrap(), 1.0).unwrap();
        let s = state_with(&conds, s.noun_prior.clone(), vec![d(&[0.5, 0.5])], 1.0);
        let m = distortion_matrix(&s, &conds).unwrap();
        assert_eq!(m.get(0, 0), 0.0);
        assert!((m.get(1, 0) - LN_2).abs() < 1e-15);
        assert!((m.get(2, 0) - 0.130_812_035_941_137_2).abs() < 1e-12);
    }

    #[test]
    fn distortion_outside_every_support_is_fatal() {
        let conds = two_point();
        let mut s = init_state(&conds, &NounPrior::uniform(2).unwrap(), 1.0).unwrap();
        s.centroids = vec![d(&[1.0, 0.0])];
        assert!(matches!(distortion_matrix(&s, &conds), Err(Error::Consistency(_))));
    }

    #[test]
    fn membership_examples() {
        let conds = two_point();
        let s = init_state(&conds, &NounPrior::uniform(2).unwrap(), 1.0).unwrap();
        assert!(s.memberships.as_slice().iter().all(|&q| q == 1.0));

        let mut out = [0.0; 2];
        gibbs_row(&[0.0, LN_2], 1.0, &mut out);
        assert!((out[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((out[1] - 1.0 / 3.0).abs() < 1e-15);

        let s = state_with(&conds, NounPrior::uniform(2).unwrap(), vec![d(&[0.9, 0.1]), d(&[0.2, 0.8])], 1e-12);
        for q in s.memberships.as_slice() {
            assert!((q - 0.5).abs() < 1e-11);
        }
    }

    #[test]
    fn centroid_examples() {
        let conds = two_point();
        let prior = NounPrior::uniform(2).unwrap();
        let mut s = init_state(&conds, &prior, 1.0).unwrap();
        // p(n|c) = (1, 0): the cluster only holds the first noun
        s.memberships = Matrix::from_rows(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        s.centroids = vec![s.centroids[0].clone(), s.centroids[0].clone()];
        s.priors = vec![0.5, 0.5];
        s.tags.push(ClusterTag { node: 1, twin: None });
        let cs = compute_centroids(&s, &conds).unwrap();
        assert_eq!(cs[0].to_dense(), vec![1.0, 0.0]);

        let s = init_state(&conds, &prior, 1.0).unwrap();
        assert_eq!(compute_centroids(&s, &conds).unwrap()[0].to_dense(), vec![0.5, 0.5]);

        let s = init_state(&conds, &NounPrior::new(vec![0.75, 0.25]).unwrap(), 1.0).unwrap();
        assert_eq!(compute_centroids(&s, &conds).unwrap()[0].to_dense(), vec![0.75, 0.25]);
    }

    #[test]
    fn dead_cluster_detected() {
        let conds = two_point();
        let mut s = init_state(&conds, &NounPrior::uniform(2).unwrap(), 1.0).unwrap();
        s.priors = vec![1e-13];
        assert!(matches!(update_centroids(&mut s, &conds), Err(Error::DeadCluster { .. })));
    }

    #[test]
    fn free_energy_single_cluster() {
        let conds = two_point();
        let s = init_state(&conds, &NounPrior::uniform(2).unwrap(), 1.0).unwrap();
        let diag = free_energy(&s);
        assert_eq!(diag.membership_entropy, 0.0);
        assert!((diag.avg_distortion - LN_2).abs() < 1e-15);
        assert!((diag.free_energy - LN_2).abs() < 1e-15);
    }

    #[test]
    fn free_energy_zero_distortion() {
        let conds = vec![d(&[0.5, 0.5]), d(&[0.5, 0.5])];
        let prior = NounPrior::uniform(2).unwrap();
        let k = 3;
        let s = state_with(&conds, prior, vec![d(&[0.5, 0.5]); k], 1.0);
        let diag = free_energy(&s);
        assert_eq!(diag.avg_distortion, 0.0);
        assert!((diag.membership_entropy - (k as f64).ln()).abs() < 1e-15);
        assert!((diag.free_energy + (k as f64).ln()).abs() < 1e-15);
    }

    #[test]
    fn free_energy_identity_holds() {
        let conds = vec![d(&[0.5, 0.3, 0.2]), d(&[0.1, 0.1, 0.8]), d(&[0.3, 0.6, 0.1])];
        let prior = NounPrior::new(vec![0.5, 0.2, 0.3]).unwrap();
        let s = state_with(
            &conds,
            prior,
            vec![d(&[0.4, 0.4, 0.2]), d(&[0.2, 0.2, 0.6])],
            2.5,
        );
        let diag = free_energy(&s);
        assert!((diag.free_energy - diag.distortion_minus_entropy(2.5)).abs() < 1e-12);
        assert!((free_energy_functional(&s) - diag.free_energy).abs() < 1e-12);
    }
}
