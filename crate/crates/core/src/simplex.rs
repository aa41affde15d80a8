//! Sparse probability distributions and the divergences between them.
//!
//! All quantities are in nats. Conversion to bits happens only where values
//! are reported, see [`nats_to_bits`].

use crate::corpus::PairCorpus;
use crate::error::{Error, Result};
use crate::registry::Registry;

/// Tolerance on the total mass of a distribution or weight vector.
pub const MASS_TOL: f64 = 1e-9;

pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

/// A probability distribution over `0..dim`, storing only positive entries
/// in ascending ordinal order.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    entries: Vec<(u32, f64)>,
    dim: usize,
}

impl Distribution {
    /// Builds a distribution from sorted, strictly positive entries.
    pub fn from_sparse(dim: usize, entries: Vec<(u32, f64)>) -> Result<Self> {
        let mut prev: Option<u32> = None;
        let mut sum = 0.0;
        for &(x, p) in &entries {
            if (x as usize) >= dim {
                return Err(Error::Dimension {
                    left: x as usize,
                    right: dim,
                });
            }
            if prev.is_some_and(|q| q >= x) {
                return Err(Error::Range(format!("ordinal {x} out of order")));
            }
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::Range(format!("probability {p} at ordinal {x}")));
            }
            prev = Some(x);
            sum += p;
        }
        if (sum - 1.0).abs() > MASS_TOL {
            return Err(Error::Normalization { sum });
        }
        Ok(Self { entries, dim })
    }

    /// Normalizes nonnegative weights. Zero weights are dropped.
    pub fn from_dense(weights: &[f64]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Range("weights must be nonnegative with positive sum".into()));
        }
        let entries = weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, &w)| (i as u32, w / sum))
            .collect();
        Ok(Self {
            entries,
            dim: weights.len(),
        })
    }

    /// Relative frequencies of sparse counts, sorted by ordinal.
    pub fn from_counts(dim: usize, counts: &[(u32, u64)]) -> Result<Self> {
        let total: u64 = counts.iter().map(|&(_, c)| c).sum();
        if total == 0 {
            return Err(Error::EmptyInput("all counts are zero".into()));
        }
        let mut entries: Vec<(u32, f64)> = counts
            .iter()
            .filter(|&&(_, c)| c > 0)
            .map(|&(x, c)| (x, c as f64 / total as f64))
            .collect();
        entries.sort_by_key(|&(x, _)| x);
        Self::from_sparse(dim, entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, x: u32) -> f64 {
        match self.entries.binary_search_by_key(&x, |&(y, _)| y) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0.0,
        }
    }

    pub fn contains(&self, x: u32) -> bool {
        self.entries.binary_search_by_key(&x, |&(y, _)| y).is_ok()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(x, p) in &self.entries {
            out[x as usize] = p;
        }
        out
    }

    pub fn mass(&self) -> f64 {
        self.entries.iter().map(|&(_, p)| p).sum()
    }

    /// Total-variation distance, half the L1 distance.
    pub fn total_variation(&self, other: &Distribution) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j) = (0, 0);
        let mut l1 = 0.0;
        loop {
            match (a.get(i), b.get(j)) {
                (Some(&(x, p)), Some(&(y, q))) => {
                    if x == y {
                        l1 += (p - q).abs();
                        i += 1;
                        j += 1;
                    } else if x < y {
                        l1 += p;
                        i += 1;
                    } else {
                        l1 += q;
                        j += 1;
                    }
                }
                (Some(&(_, p)), None) => {
                    l1 += p;
                    i += 1;
                }
                (None, Some(&(_, q))) => {
                    l1 += q;
                    j += 1;
                }
                (None, None) => break,
            }
        }
        0.5 * l1
    }
}

/// `D(p || q) = sum_x p(x) ln(p(x)/q(x))` in nats.
///
/// Fails when `p` has mass where `q` has none.
pub fn kl(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.dim != q.dim {
        return Err(Error::Dimension {
            left: p.dim,
            right: q.dim,
        });
    }
    let qe = &q.entries;
    let mut j = 0;
    let mut acc = 0.0;
    for &(x, px) in &p.entries {
        while j < qe.len() && qe[j].0 < x {
            j += 1;
        }
        match qe.get(j) {
            Some(&(y, qx)) if y == x => acc += px * (px / qx).ln(),
            _ => return Err(Error::UndefinedDivergence { ordinal: x }),
        }
    }
    Ok(acc.max(0.0))
}

/// `ln p(x)` for each stored entry of `p`, in entry order.
pub(crate) fn entry_logs(p: &Distribution) -> Vec<f64> {
    p.entries.iter().map(|&(_, px)| px.ln()).collect()
}

/// Dense `ln q(x)`, `-inf` where `q(x) = 0`.
pub(crate) fn dense_logs(q: &Distribution) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; q.dim];
    for &(x, qx) in &q.entries {
        out[x as usize] = qx.ln();
    }
    out
}

/// `D(p || q)` from precomputed logarithms, `+inf` outside the support of `q`.
/// Equal inputs give exactly zero.
pub(crate) fn kl_from_logs(p: &Distribution, p_logs: &[f64], log_q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&(x, px), &lp) in p.entries.iter().zip(p_logs) {
        let lq = log_q[x as usize];
        if lq == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        acc += px * (lp - lq);
    }
    acc.max(0.0)
}

/// Like [`kl`] against a dense `q`, returning `+inf` outside its support.
pub(crate) fn kl_dense(p: &Distribution, q: &Distribution) -> f64 {
    kl_from_logs(p, &entry_logs(p), &dense_logs(q))
}

/// `sum_i w_i p_i`; the result's support is the union of the supports with
/// positive weight.
pub fn weighted_average(dists: &[Distribution], weights: &[f64]) -> Result<Distribution> {
    if dists.len() != weights.len() {
        return Err(Error::Dimension {
            left: dists.len(),
            right: weights.len(),
        });
    }
    let Some(first) = dists.first() else {
        return Err(Error::EmptyInput("no distributions to average".into()));
    };
    let dim = first.dim;
    if let Some(d) = dists.iter().find(|d| d.dim != dim) {
        return Err(Error::Dimension {
            left: dim,
            right: d.dim,
        });
    }
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::Range("negative weight".into()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > MASS_TOL {
        return Err(Error::Normalization { sum });
    }
    let mut acc = vec![0.0; dim];
    for (d, &w) in dists.iter().zip(weights) {
        if w > 0.0 {
            for &(x, p) in &d.entries {
                acc[x as usize] += w * p;
            }
        }
    }
    Ok(sparsify(acc))
}

/// Drops zero entries of an already normalized dense vector.
pub(crate) fn sparsify(dense: Vec<f64>) -> Distribution {
    let dim = dense.len();
    let entries = dense
        .into_iter()
        .enumerate()
        .filter(|(_, p)| *p > 0.0)
        .map(|(i, p)| (i as u32, p))
        .collect();
    Distribution { entries, dim }
}

/// Per-noun verb distributions `p_n(v) = f(v,n) / sum_v f(v,n)`.
#[derive(Debug, Clone)]
pub struct Conditionals {
    /// Noun ordinal in the source corpus for each row.
    pub nouns: Vec<u32>,
    pub dists: Vec<Distribution>,
    /// Nouns in the vocabulary with no counts.
    pub skipped: Vec<u32>,
}

impl Conditionals {
    pub fn len(&self) -> usize {
        self.dists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dists.is_empty()
    }
}

pub fn conditionals(corpus: &PairCorpus) -> Conditionals {
    let dim = corpus.verbs().len();
    let mut out = Conditionals {
        nouns: Vec::new(),
        dists: Vec::new(),
        skipped: Vec::new(),
    };
    for (n, row) in corpus.by_noun().into_iter().enumerate() {
        if row.is_empty() {
            out.skipped.push(n as u32);
            continue;
        }
        let dist = Distribution::from_counts(dim, &row).expect("nonempty row normalizes");
        out.nouns.push(n as u32);
        out.dists.push(dist);
    }
    out
}

/// Dense weights `p(n)` aligned with the rows of a [`Conditionals`].
#[derive(Debug, Clone, PartialEq)]
pub struct NounPrior {
    weights: Vec<f64>,
}

impl NounPrior {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyInput("noun prior has no entries".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::Range("negative noun weight".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > MASS_TOL {
            return Err(Error::Normalization { sum });
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// How `p(n)` is derived from noun totals.
pub trait PriorStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    /// `totals` holds the token count of every noun that has one.
    fn weights(&self, totals: &[u64]) -> Vec<f64>;
}

/// `p(n)` proportional to the noun's token count.
pub struct EmpiricalPrior;

impl PriorStrategy for EmpiricalPrior {
    fn name(&self) -> &'static str {
        "empirical"
    }

    fn weights(&self, totals: &[u64]) -> Vec<f64> {
        let sum: u64 = totals.iter().sum();
        totals.iter().map(|&t| t as f64 / sum as f64).collect()
    }
}

/// Every noun weighs the same.
pub struct UniformPrior;

impl PriorStrategy for UniformPrior {
    fn name(&self) -> &'static str {
        "uniform"
    }

    fn weights(&self, totals: &[u64]) -> Vec<f64> {
        vec![1.0 / totals.len() as f64; totals.len()]
    }
}

pub fn prior_registry() -> Registry<dyn PriorStrategy> {
    let mut reg: Registry<dyn PriorStrategy> = Registry::new("noun prior");
    reg.register("empirical", Box::new(EmpiricalPrior));
    reg.register("uniform", Box::new(UniformPrior));
    reg
}

/// `p(n)` over the nouns with counts, in the row order of [`conditionals`].
pub fn noun_marginal(corpus: &PairCorpus, strategy: &dyn PriorStrategy) -> Result<NounPrior> {
    let totals: Vec<u64> = corpus.noun_totals().into_iter().filter(|&t| t > 0).collect();
    if totals.is_empty() {
        return Err(Error::EmptyInput("corpus has no pairs".into()));
    }
    NounPrior::new(strategy.weights(&totals))
}
