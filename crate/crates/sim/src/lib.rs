//! Desk-scale checks for graph-augmented retrieval: seeded synthetic Python
//! repositories with planted targets, scripted search loops run with and
//! without graph expansion, and an alignment-versus-rebuild benchmark.

pub mod bench;
pub mod edit;
pub mod generate;
pub mod regime;

pub use bench::{bench_align, BenchRow};
pub use edit::{apply_edit_script, EditOp};
pub use generate::{generate_repo, EdgeDensity, Planted, SymbolRange, SyntheticRepo, SyntheticRepoSpec};
pub use regime::{
    run_regimes, simulate_seed, steps_to_recall, token_cost_check, CostReport, RecallUtility, Regime,
    RunTrace, ScriptedPolicy, SimReport, StepRecord, TheoryChecks, Utility,
};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("infeasible spec: {0}")]
    InfeasibleSpec(String),
    #[error(transparent)]
    Core(#[from] repograph::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("bad query {0:?}: {1}")]
    Query(String, regex::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
