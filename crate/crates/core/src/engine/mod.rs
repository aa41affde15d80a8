//! Deterministic annealing with KL distortion.
//!
//! At fixed inverse temperature `beta` the engine alternates two exact
//! minimizations of the free energy `F = <D> - H/beta`: centroids become the
//! `p(n|c)`-weighted averages of the noun distributions, and memberships take
//! the exponential form `p(c|n) ∝ exp(-beta d(n,c))`. Raising `beta` makes
//! clusters unstable; a split is detected by twinning each leaf with a
//! slightly perturbed copy and checking whether the copies drift apart.

mod anneal;
mod state;

pub use anneal::{
    anneal, converge, resolve_twins, spawn_twins, AnnealConfig, AnnealRun, AnnealStatus,
    ConvergeReport, Hierarchy, HierarchyNode, Observer, Snapshot, SplitEvent, StepKind,
    StepRecord, StopCondition,
};
pub use state::{
    centroid_residual, distortion_matrix, free_energy, gibbs_row, free_energy_functional, frozen_free_energy,
    init_state, update_centroids, update_memberships, ClusterState, ClusterTag, EngineDiagnostics,
    Matrix, DEAD_PRIOR,
};
