//! Decisiveness-based model checking for stochastic transition systems and
//! cycle-reset stochastic hybrid systems.

pub mod abstraction;
pub mod dsl;
pub mod fixtures;
pub mod linsets;
pub mod rational;
pub mod reachability;
pub mod shs;
pub mod sts;
pub mod twocounter;

pub use dsl::{parse_model, print_model, ModelDoc, ParseError};
pub use linsets::{AffineMap, FloatSet, LinAtom, LinSet, LinSetError, Polyhedron, Rel};
pub use rational::{parse_rat, Rat};
pub use shs::{
    Assign, Block, CycleCheck, DelaySpec, Diagnostic, Edge, InitPart, InitShape, Location, ModelError, ResetSpec,
    SampleError, Sampler, Shs, State, StrongKind, Target,
};
pub use abstraction::{
    build_abstraction, check_coarsest, check_stable, initial_partition, refine, AbstractionError, AbstractionMc,
    Partition, RefineOutcome, DEFAULT_STEP_CAP,
};
pub use reachability::{qual_reach, quant_reach, QualReport, QuantParams, QuantReport, ReachError, Verdict};
pub use sts::{estimate_reach, FiniteMc, McError, Sts};
pub use twocounter::{encode, run_2cm, Machine, MachineError, Variant};
