//! Held-out relative entropy and the deleted-pair verb decision task.

mod metrics;

pub use metrics::{metric_registry, write_tsv, DecisionMetric, Metric, RelativeEntropyMetric};

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use crate::classmodel::ClassModel;
use crate::corpus::{DeletionSet, PairCorpus, Vocab};
use crate::error::{Error, Result};
use crate::simplex::{kl, nats_to_bits, Distribution};

/// A noun's held-out verb distribution expressed over a model's verbs.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedNoun {
    pub noun: String,
    /// Membership row of the noun if the model clustered it.
    pub clustered: Option<usize>,
    pub dist: Distribution,
    /// Mass on verbs the model has no centroid support for, removed before
    /// renormalizing.
    pub dropped_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Projection {
    pub nouns: Vec<ProjectedNoun>,
    /// Nouns whose mass fell entirely on unsupported verbs.
    pub skipped: Vec<String>,
}

/// Maps the conditional distributions of `corpus` onto the verbs of `model`.
/// Verbs the model cannot predict are dropped and the rest renormalized.
pub fn project(model: &ClassModel, corpus: &PairCorpus) -> Projection {
    let support = model.verb_support();
    let verb_map: Vec<Option<u32>> = corpus
        .verbs()
        .symbols()
        .iter()
        .map(|v| model.verbs().get(v).filter(|&m| support[m as usize]))
        .collect();
    let mut out = Projection::default();
    for (n, row) in corpus.by_noun().into_iter().enumerate() {
        if row.is_empty() {
            continue;
        }
        let noun = corpus.nouns().symbol(n as u32).to_string();
        let total: u64 = row.iter().map(|&(_, c)| c).sum();
        let kept: Vec<(u32, u64)> = row
            .iter()
            .filter_map(|&(v, c)| verb_map[v as usize].map(|m| (m, c)))
            .collect();
        let kept_total: u64 = kept.iter().map(|&(_, c)| c).sum();
        if kept_total == 0 {
            out.skipped.push(noun);
            continue;
        }
        let dist = Distribution::from_counts(model.verbs().len(), &kept).expect("positive counts");
        out.nouns.push(ProjectedNoun {
            clustered: model.nouns().get(&noun).map(|r| r as usize),
            noun,
            dist,
            dropped_mass: 1.0 - kept_total as f64 / total as f64,
        });
    }
    out
}

/// Relative entropy of a held-out set to a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ReSummary {
    /// Unweighted mean over evaluated nouns of `D(t_n || p̂_n)`, in bits.
    pub mean_bits: f64,
    pub sum_bits: f64,
    pub evaluated: usize,
    /// Evaluated nouns that were not clustered and were folded in.
    pub folded: usize,
    pub skipped: usize,
    pub dropped_mass: Vec<(String, f64)>,
}

/// `D(t_n || p̂_n)` for each projected noun, in nats. Nouns the model did
/// not cluster are folded in.
pub fn noun_relative_entropies(model: &ClassModel, projection: &Projection) -> Result<Vec<f64>> {
    projection
        .nouns
        .iter()
        .map(|pn| {
            let pred = match pn.clustered {
                Some(row) => model.predict(row)?,
                None => model.mixture(&model.fold_in(&pn.dist)?),
            };
            Ok(match kl(&pn.dist, &pred) {
                Ok(x) => x,
                Err(Error::UndefinedDivergence { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            })
        })
        .collect()
}

/// Mean held-out relative entropy of the nouns in `held_out`, in bits.
pub fn heldout_re(model: &ClassModel, held_out: &PairCorpus) -> Result<ReSummary> {
    let projection = project(model, held_out);
    if projection.nouns.is_empty() {
        return Err(Error::EmptyInput("no held-out nouns to evaluate".into()));
    }
    let values = noun_relative_entropies(model, &projection)?;
    let sum_bits = nats_to_bits(values.iter().sum());
    Ok(ReSummary {
        mean_bits: sum_bits / values.len() as f64,
        sum_bits,
        evaluated: values.len(),
        folded: projection.nouns.iter().filter(|p| p.clustered.is_none()).count(),
        skipped: projection.skipped.len(),
        dropped_mass: projection
            .nouns
            .iter()
            .filter(|p| p.dropped_mass > 0.0)
            .map(|p| (p.noun.clone(), p.dropped_mass))
            .collect(),
    })
}

/// A `(v, n, v')` comparison with the answer taken from the undeleted data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecisionTriple {
    pub verb: u32,
    pub noun: u32,
    pub alt_verb: u32,
    /// `+1` when `v` was more frequent with `n` than `v'`, else `-1`.
    pub reference_sign: i8,
    /// Marginal verb frequencies point the other way.
    pub exceptional: bool,
}

/// Decision triples with the vocabularies their ordinals refer to.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TripleSet {
    pub verbs: Vocab,
    pub nouns: Vocab,
    pub triples: Vec<DecisionTriple>,
}

impl TripleSet {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn exceptional_count(&self) -> usize {
        self.triples.iter().filter(|t| t.exceptional).count()
    }
}

fn sign(x: i128) -> i8 {
    x.signum() as i8
}

/// For each deleted `(v, n)`, pairs `v` with every `v'` seen with `n` at
/// least twice or at most half as often. Marginal verb frequencies used for
/// the exceptional flag are those of the corpus after deletion, which is
/// what a one-cluster model trained on it reproduces.
pub fn build_decision_triples(original: &PairCorpus, deleted: &DeletionSet) -> Result<TripleSet> {
    let mut marginals: Vec<i128> = original.verb_totals().into_iter().map(i128::from).collect();
    for &(v, n) in &deleted.pairs {
        let f = original.count(v, n);
        if f == 0 {
            let verb = original.verbs().symbols().get(v as usize).map_or("?", |s| s);
            let noun = original.nouns().symbols().get(n as usize).map_or("?", |s| s);
            return Err(Error::NotFound(format!("pair ({verb}, {noun})")));
        }
        marginals[v as usize] -= i128::from(f);
    }
    let by_noun = original.by_noun();
    let mut triples = Vec::new();
    for &(v, n) in &deleted.pairs {
        let f = i128::from(original.count(v, n));
        for &(alt, c) in &by_noun[n as usize] {
            let g = i128::from(c);
            if alt == v || !(g >= 2 * f || 2 * g <= f) {
                continue;
            }
            let reference_sign = sign(f - g);
            let marginal_sign = sign(marginals[v as usize] - marginals[alt as usize]);
            triples.push(DecisionTriple {
                verb: v,
                noun: n,
                alt_verb: alt,
                reference_sign,
                exceptional: marginal_sign != 0 && marginal_sign != reference_sign,
            });
        }
    }
    Ok(TripleSet {
        verbs: original.verbs().clone(),
        nouns: original.nouns().clone(),
        triples,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionErrors {
    pub error_all: f64,
    /// `None` when no exceptional triple was scored.
    pub error_exceptional: Option<f64>,
    pub scored: usize,
    pub scored_exceptional: usize,
    /// Triples where the model gives both verbs zero probability.
    pub skipped: usize,
}

/// Fraction of triples where the sign of `ln p̂_n(v) - ln p̂_n(v')` differs
/// from the reference. A zero on exactly one side counts as an error.
pub fn decision_error(model: &ClassModel, set: &TripleSet) -> Result<DecisionErrors> {
    if set.is_empty() {
        return Err(Error::EmptyInput("no decision triples".into()));
    }
    let verb_id = |v: u32| -> Result<u32> {
        let name = set.verbs.symbol(v);
        model
            .verbs()
            .get(name)
            .ok_or_else(|| Error::VocabMismatch(format!("verb {name:?} not in model")))
    };
    let mut cache: HashMap<u32, Distribution> = HashMap::new();
    let (mut wrong, mut scored, mut wrong_exc, mut scored_exc, mut skipped) = (0, 0, 0, 0, 0);
    for t in &set.triples {
        let pred = match cache.entry(t.noun) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => {
                let name = set.nouns.symbol(t.noun);
                let row = model
                    .nouns()
                    .get(name)
                    .ok_or_else(|| Error::VocabMismatch(format!("noun {name:?} not clustered by model")))?;
                e.insert(model.predict(row as usize)?)
            }
        };
        let a = pred.get(verb_id(t.verb)?);
        let b = pred.get(verb_id(t.alt_verb)?);
        if a == 0.0 && b == 0.0 {
            skipped += 1;
            continue;
        }
        let disagrees = if a == 0.0 || b == 0.0 {
            true
        } else {
            let s = (a.ln() - b.ln()).signum();
            let s = if a == b { 0 } else { s as i8 };
            s != t.reference_sign
        };
        scored += 1;
        wrong += usize::from(disagrees);
        if t.exceptional {
            scored_exc += 1;
            wrong_exc += usize::from(disagrees);
        }
    }
    if scored == 0 {
        return Err(Error::EmptyInput("model scores none of the triples".into()));
    }
    Ok(DecisionErrors {
        error_all: wrong as f64 / scored as f64,
        error_exceptional: (scored_exc > 0).then(|| wrong_exc as f64 / scored_exc as f64),
        scored,
        scored_exceptional: scored_exc,
        skipped,
    })
}

/// Held-out data for a sweep. Any field may be absent.
#[derive(Debug, Clone, Copy, Default)]
pub struct SweepInputs<'a> {
    pub train: Option<&'a PairCorpus>,
    pub test: Option<&'a PairCorpus>,
    /// Held-out pairs for nouns outside the clustered set.
    pub new: Option<&'a PairCorpus>,
    pub triples: Option<&'a TripleSet>,
}

/// One row of a model-size sweep. Entropies are mean bits per noun.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model_size: usize,
    pub beta: f64,
    pub train_re: Option<f64>,
    pub test_re: Option<f64>,
    pub new_re: Option<f64>,
    pub train_re_sum: Option<f64>,
    pub test_re_sum: Option<f64>,
    pub new_re_sum: Option<f64>,
    pub decision_error_all: Option<f64>,
    pub decision_error_exceptional: Option<f64>,
    pub n_triples: usize,
}

impl EvalReport {
    pub fn new(model: &ClassModel) -> Self {
        Self {
            model_size: model.num_clusters(),
            beta: model.beta(),
            train_re: None,
            test_re: None,
            new_re: None,
            train_re_sum: None,
            test_re_sum: None,
            new_re_sum: None,
            decision_error_all: None,
            decision_error_exceptional: None,
            n_triples: 0,
        }
    }
}

/// Evaluates every model with every metric, in ascending model size.
pub fn sweep(models: &[ClassModel], inputs: &SweepInputs<'_>, metrics: &[&dyn Metric]) -> Result<Vec<EvalReport>> {
    if models.is_empty() {
        return Err(Error::EmptyInput("no models to evaluate".into()));
    }
    let mut order: Vec<&ClassModel> = models.iter().collect();
    order.sort_by_key(|m| m.num_clusters());
    order
        .into_iter()
        .map(|model| {
            let mut report = EvalReport::new(model);
            for metric in metrics {
                metric.evaluate(model, inputs, &mut report)?;
            }
            Ok(report)
        })
        .collect()
}
