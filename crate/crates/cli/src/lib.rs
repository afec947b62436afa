pub mod compare;
pub mod run;
pub mod spec;
mod stages;

pub use compare::{converge_compare, weak_star_test, ConvergenceTable, TestFn, WeakStarRow};
pub use run::{output_dir, run, Flag, RunReport, StageReport, StageStatus, StageTiming};
pub use spec::{Budgets, DiagnosticParams, ExperimentSpec, GraphParams, Preset, SchrodingerParams};
pub use stages::burago::e1_oracle;
