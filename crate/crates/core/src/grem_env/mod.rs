//! GREM-type random environments: heavy-tailed depths, fine-tuned volumes,
//! the exponential coupling with the limit and environment dumps.

mod build;
mod coupling;
mod dump;
mod tail;

pub use build::{build_grem_env, GremEnv, GremOptions, LeafStorage, DEFAULT_KEEP, DEFAULT_MEMORY_CAP, EXACT_REMAINDER};
pub use coupling::{coupled_envs, coupled_envs_with_field, CoupledEnvPair, CoupledLimit, ExpField, FieldStream};
pub use dump::{EnvDump, MAGIC as DUMP_MAGIC, VERSION as DUMP_VERSION};
pub use tail::{
    fine_tune_volumes, order_relabel, sample_tau, scaling_constant, validate_specs, TailFamily, TailFn, TailSpec,
    INVERSE_TOL,
};
