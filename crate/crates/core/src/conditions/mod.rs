//! Compilers from a behaviour to a cone feasibility program, the positivity
//! separation oracle and witness constructions.

pub mod compile;
pub mod program;
pub mod witness;

pub use compile::{
    compile, compile_jpm, compile_jqm, compile_q1, compile_q1ab, compile_spjqm, compile_spjqmb,
    compile_spjqmb_with, orthogonal_context_cells, q1ab_offsets, SpjqmbMode,
};
pub use program::{tags, tri_index, tri_len, tri_pair, Condition, ConeKind, ConeProgram, Equality, LazyFamily};
pub use witness::{
    extend_q1ab_witness, jqm_separation, subset_form, DecoherenceMatrix, GramWitness, ProjectorOrder, Separation,
    SeparationOptions,
};
