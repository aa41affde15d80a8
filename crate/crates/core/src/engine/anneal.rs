use log::{debug, info, warn};
use rand::Rng;

use super::state::{
    compute_centroids, free_energy, free_energy_functional, init_state, max_entry_gap,
    update_memberships, ClusterState, ClusterTag, DEAD_PRIOR,
};
use crate::error::{Error, Result};
use crate::seeded_rng;
use crate::simplex::{sparsify, Distribution, NounPrior};

/// Annealing schedule and numerical tolerances.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnealConfig {
    pub beta_init: f64,
    /// Factor applied to beta when no cluster splits.
    pub beta_growth: f64,
    /// Relative size of the multiplicative twin perturbation.
    pub perturbation_eps: f64,
    /// Twins closer than this in total variation after convergence merge back.
    pub twin_merge_tol: f64,
    /// Convergence when `|dF| < convergence_tol * |F| + 1e-12`.
    pub convergence_tol: f64,
    /// Convergence also requires centroid moves below this.
    pub residual_tol: f64,
    pub max_iters: usize,
    pub max_clusters: usize,
    pub seed: u64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        let eps = 1e-3;
        Self {
            beta_init: 0.1,
            beta_growth: 1.1,
            perturbation_eps: eps,
            twin_merge_tol: 10.0 * eps,
            convergence_tol: 1e-9,
            residual_tol: 1e-10,
            max_iters: 500,
            max_clusters: 64,
            seed: 0,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Range(format!("{name} must be positive, got {x}")))
            }
        };
        positive("beta_init", self.beta_init)?;
        positive("twin_merge_tol", self.twin_merge_tol)?;
        positive("convergence_tol", self.convergence_tol)?;
        positive("residual_tol", self.residual_tol)?;
        if !(self.beta_growth > 1.0 && self.beta_growth.is_finite()) {
            return Err(Error::Range(format!(
                "beta_growth must exceed 1, got {}",
                self.beta_growth
            )));
        }
        if !(0.0..1.0).contains(&self.perturbation_eps) {
            return Err(Error::Range(format!(
                "perturbation_eps must lie in [0, 1), got {}",
                self.perturbation_eps
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Range("max_iters must be at least 1".into()));
        }
        if self.max_clusters == 0 {
            return Err(Error::Range("max_clusters must be at least 1".into()));
        }
        Ok(())
    }
}

/// When [`anneal`] stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopCondition {
    pub target_clusters: Option<usize>,
    pub beta_max: f64,
}

impl Default for StopCondition {
    fn default() -> Self {
        Self {
            target_clusters: None,
            beta_max: 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Centroids,
    Memberships,
}

/// One half-step of the alternating minimization, reported to observers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub kind: StepKind,
    pub beta: f64,
    pub clusters: usize,
    /// `<D> - H/beta` before and after the step.
    pub before: f64,
    pub after: f64,
    /// `|F - (<D> - H/beta)|` after a membership step.
    pub identity_gap: Option<f64>,
}

/// Callback invoked after every half-step. Pass `&mut |_| {}` to ignore.
pub type Observer<'a> = &'a mut dyn FnMut(&StepRecord);

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeReport {
    pub iterations: usize,
    pub converged: bool,
    /// Largest centroid move in the last iteration.
    pub residual: f64,
    pub dropped: usize,
}

/// Drops clusters whose prior fell below [`DEAD_PRIOR`]. Returns how many.
fn drop_dead(state: &mut ClusterState) -> usize {
    let keep: Vec<usize> = (0..state.num_clusters())
        .filter(|&c| state.priors[c] >= DEAD_PRIOR)
        .collect();
    let dropped = state.num_clusters() - keep.len();
    if dropped > 0 {
        warn!("dropping {dropped} dead cluster(s) at beta {}", state.beta);
        state.retain_clusters(&keep);
    }
    dropped
}

/// Alternates centroid and membership updates at fixed beta.
pub fn converge(
    state: &mut ClusterState,
    conds: &[Distribution],
    config: &AnnealConfig,
    observer: Observer<'_>,
) -> Result<ConvergeReport> {
    let mut emit = |rec: StepRecord| observer(&rec);
    let mut dropped = 0;
    let mut f_prev = free_energy_functional(state);
    let mut residual = f64::INFINITY;
    for iter in 1..=config.max_iters {
        let centroids = match compute_centroids(state, conds) {
            Ok(c) => c,
            Err(Error::DeadCluster { .. }) => {
                dropped += drop_dead(state);
                if state.num_clusters() == 0 {
                    return Err(Error::Consistency("every cluster died".into()));
                }
                f_prev = free_energy_functional(state);
                compute_centroids(state, conds)?
            }
            Err(e) => return Err(e),
        };
        residual = max_entry_gap(&state.centroids, &centroids);
        state.set_centroids(centroids, conds)?;
        let f_mid = free_energy_functional(state);
        emit(StepRecord {
            kind: StepKind::Centroids,
            beta: state.beta,
            clusters: state.num_clusters(),
            before: f_prev,
            after: f_mid,
            identity_gap: None,
        });

        update_memberships(state);
        let diag = free_energy(state);
        let f_new = free_energy_functional(state);
        emit(StepRecord {
            kind: StepKind::Memberships,
            beta: state.beta,
            clusters: state.num_clusters(),
            before: f_mid,
            after: f_new,
            identity_gap: Some((diag.free_energy - diag.distortion_minus_entropy(state.beta)).abs()),
        });

        let tol = config.convergence_tol * f_new.abs() + 1e-12;
        if (f_new - f_prev).abs() < tol && residual <= config.residual_tol {
            return Ok(ConvergeReport {
                iterations: iter,
                converged: true,
                residual,
                dropped,
            });
        }
        f_prev = f_new;
    }
    debug!(
        "no convergence within {} iterations at beta {} (residual {residual:e})",
        config.max_iters, state.beta
    );
    Ok(ConvergeReport {
        iterations: config.max_iters,
        converged: false,
        residual,
        dropped,
    })
}

fn perturb<R: Rng>(centroid: &Distribution, eps: f64, rng: &mut R) -> Distribution {
    let mut dense = vec![0.0; centroid.dim()];
    let mut sum = 0.0;
    for &(v, p) in centroid.entries() {
        let u: f64 = rng.random_range(-1.0..=1.0);
        let x = p * (1.0 + eps * u);
        dense[v as usize] = x;
        sum += x;
    }
    for x in &mut dense {
        *x /= sum;
    }
    sparsify(dense)
}

/// Duplicates leaf clusters into perturbed twin pairs. When doubling would
/// exceed `max_clusters`, only the clusters with the largest priors are
/// twinned.
pub fn spawn_twins<R: Rng>(
    state: &mut ClusterState,
    conds: &[Distribution],
    config: &AnnealConfig,
    rng: &mut R,
) -> Result<usize> {
    let k = state.num_clusters();
    let room = config.max_clusters.saturating_sub(k).min(k);
    if room == 0 {
        return Ok(0);
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| state.priors[b].total_cmp(&state.priors[a]).then(a.cmp(&b)));
    let mut chosen = vec![false; k];
    for &c in &order[..room] {
        chosen[c] = true;
    }

    let mut centroids = Vec::with_capacity(k + room);
    let mut priors = Vec::with_capacity(k + room);
    let mut tags = Vec::with_capacity(k + room);
    for c in 0..k {
        let node = state.tags[c].node;
        if chosen[c] {
            for slot in 0..2u8 {
                centroids.push(perturb(&state.centroids[c], config.perturbation_eps, rng));
                priors.push(state.priors[c] / 2.0);
                tags.push(ClusterTag {
                    node,
                    twin: Some(slot),
                });
            }
        } else {
            centroids.push(state.centroids[c].clone());
            priors.push(state.priors[c]);
            tags.push(ClusterTag { node, twin: None });
        }
    }
    state.replace_clusters(centroids, priors, tags, conds)?;
    Ok(room)
}

/// A leaf cluster whose twins diverged into two daughters.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitEvent {
    pub parent: usize,
    pub daughters: [usize; 2],
    pub beta: f64,
    /// Total-variation distance between the daughter centroids.
    pub separation: f64,
}

/// Merges twin pairs that converged back together and turns the rest into
/// daughters with fresh node ids.
pub fn resolve_twins(
    state: &mut ClusterState,
    conds: &[Distribution],
    config: &AnnealConfig,
) -> Result<Vec<SplitEvent>> {
    let mut events = Vec::new();
    let mut merged_any = false;
    loop {
        // first unresolved twin, with its partner if it survived
        let Some(a) = state.tags.iter().position(|t| t.twin.is_some()) else {
            break;
        };
        let node = state.tags[a].node;
        let partner = (a + 1..state.num_clusters())
            .find(|&c| state.tags[c].node == node && state.tags[c].twin.is_some());
        let Some(b) = partner else {
            state.tags[a].twin = None;
            continue;
        };
        let tv = state.centroids[a].total_variation(&state.centroids[b]);
        if tv < config.twin_merge_tol {
            let (pa, pb) = (state.priors[a], state.priors[b]);
            let mut dense = vec![0.0; state.centroids[a].dim()];
            for (cent, w) in [(&state.centroids[a], pa), (&state.centroids[b], pb)] {
                for &(v, p) in cent.entries() {
                    dense[v as usize] += w * p / (pa + pb);
                }
            }
            state.merge_columns(a, b, sparsify(dense));
            state.tags[a].twin = None;
            merged_any = true;
        } else {
            let daughters = [state.next_node, state.next_node + 1];
            state.next_node += 2;
            state.tags[a] = ClusterTag {
                node: daughters[0],
                twin: None,
            };
            state.tags[b] = ClusterTag {
                node: daughters[1],
                twin: None,
            };
            events.push(SplitEvent {
                parent: node,
                daughters,
                beta: state.beta,
                separation: tv,
            });
        }
    }
    if merged_any {
        let centroids = state.centroids.clone();
        state.set_centroids(centroids, conds)?;
        update_memberships(state);
    }
    Ok(events)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub birth_beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub beta: f64,
    pub state: ClusterState,
}

/// Tree of clusters produced by annealing, with the leaf clustering at the
/// start and after every critical beta.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Hierarchy {
    pub nodes: Vec<HierarchyNode>,
    pub snapshots: Vec<Snapshot>,
}

impl Hierarchy {
    /// Nodes born at or before `beta`.
    pub fn nodes_until(&self, beta: f64) -> Vec<HierarchyNode> {
        self.nodes
            .iter()
            .filter(|n| n.birth_beta <= beta)
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnnealStatus {
    Completed,
    /// Beta passed its ceiling before the stop condition was met.
    Stalled { beta: f64 },
}

#[derive(Debug, Clone)]
pub struct AnnealRun {
    pub hierarchy: Hierarchy,
    pub final_state: ClusterState,
    pub status: AnnealStatus,
}

impl AnnealRun {
    pub fn into_result(self) -> Result<Self> {
        match self.status {
            AnnealStatus::Completed => Ok(self),
            AnnealStatus::Stalled { beta } => Err(Error::Stalled {
                beta,
                clusters: self.final_state.num_clusters(),
            }),
        }
    }
}

/// Deterministic annealing: starting from one cluster at low beta, repeatedly
/// twins every leaf, reconverges, and raises beta geometrically until some
/// twins diverge.
pub fn anneal(
    conds: &[Distribution],
    noun_prior: &NounPrior,
    config: &AnnealConfig,
    stop: StopCondition,
    observer: Observer<'_>,
) -> Result<AnnealRun> {
    config.validate()?;
    let mut rng = seeded_rng(config.seed);
    let mut state = init_state(conds, noun_prior, config.beta_init)?;
    converge(&mut state, conds, config, &mut *observer)?;

    let mut hierarchy = Hierarchy {
        nodes: vec![HierarchyNode {
            id: 0,
            parent: None,
            birth_beta: state.beta,
        }],
        snapshots: vec![Snapshot {
            beta: state.beta,
            state: state.clone(),
        }],
    };

    let status = loop {
        let k = state.num_clusters();
        if stop.target_clusters.is_some_and(|t| k >= t) || k >= config.max_clusters {
            break AnnealStatus::Completed;
        }
        if state.beta > stop.beta_max {
            if stop.target_clusters.is_none() && hierarchy.snapshots.len() > 1 {
                break AnnealStatus::Completed;
            }
            break AnnealStatus::Stalled { beta: state.beta };
        }

        spawn_twins(&mut state, conds, config, &mut rng)?;
        let report = converge(&mut state, conds, config, &mut *observer)?;
        let events = resolve_twins(&mut state, conds, config)?;
        if events.is_empty() {
            let beta = state.beta * config.beta_growth;
            state.set_beta(beta);
            continue;
        }
        if report.dropped > 0 {
            debug!("{} cluster(s) dropped at beta {}", report.dropped, state.beta);
        }
        converge(&mut state, conds, config, &mut *observer)?;
        for e in &events {
            for &d in &e.daughters {
                hierarchy.nodes.push(HierarchyNode {
                    id: d,
                    parent: Some(e.parent),
                    birth_beta: e.beta,
                });
            }
        }
        let diag = free_energy(&state);
        info!(
            "beta {:.6} clusters {} F {:.6} D {:.6} H {:.6}",
            state.beta,
            state.num_clusters(),
            diag.free_energy,
            diag.avg_distortion,
            diag.membership_entropy
        );
        hierarchy.snapshots.push(Snapshot {
            beta: state.beta,
            state: state.clone(),
        });
    };

    Ok(AnnealRun {
        hierarchy,
        final_state: state,
        status,
    })
}
