//! Compression laws for pruned language models.
//!
//! A compression law relates the performance of a compressed model to its
//! base performance `L0`, the compression ratio `r` and the recovery
//! fine-tuning data size `D`:
//!
//! ```text
//! L = L0^alpha * (1 + r)^beta * (1 + 1/(D + eps))^gamma
//! ```
//!
//! The crate fits such laws by log-space least squares ([`regress`]),
//! evaluates them ([`lawcore`]), answers recovery questions ([`recovery`]),
//! plans budget-constrained compression ([`planner`]), generates synthetic
//! data with known ground truth ([`synth`]) and reads/writes the CSV and JSON
//! formats used by the `compresslaw` binary ([`io`], [`cli`]).

pub mod cli;
pub mod error;
pub mod io;
pub mod lawcore;
pub mod planner;
pub mod recovery;
pub mod regress;
pub mod synth;

pub use error::{Error, Result};
pub use lawcore::{
    check_feasibility, evaluate, evaluate_ablation_d, evaluate_ablation_r, evaluate_runtime,
    CompressionLaw, FeasibilityReport, Law, LawForm, MetricKind, RuntimeLaw,
};
pub use planner::{plan, predict_speedup, required_ratio, CandidateModel, PlanRequest, PlanResult};
pub use recovery::{
    classify_regime, critical_ratio, min_rft_size, recoverable, MinRft, RecoveryAnalysis,
    RecoveryQuery, Regime,
};
pub use regress::{build_design, fit_law, ols_fit, ExperimentRecord, FitForm, FitStatistics};
pub use synth::{generate, SyntheticConfig};
