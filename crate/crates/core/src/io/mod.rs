//! Configuration files, field files and the run drivers behind the command line.

mod config;
mod field_file;
mod run;

pub use config::{
    load_config, vortex, BoundSpec, ConstraintSpec, ControlSpec, FieldProfile, GridSpec, HypothesisCheck,
    InitialSpec, MaterialSpec, OutputSpec, RunConfig, Setup, SolverSpec, TargetSpec, TimeSpec,
};
pub use field_file::{
    decode, encode, read_field, read_scalar_on, read_vector_on, write_field, FieldData, MAGIC,
};
pub use run::{
    run_kernel_info, run_optimize, run_simulate, run_validate, write_error_record, KernelInfo,
    OptimizeSummary, SimulateSummary, DIAGNOSTICS_HEADER,
};
