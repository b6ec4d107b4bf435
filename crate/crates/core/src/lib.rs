//! Custom instruction discovery for RV64IM processors.
//!
//! The pipeline turns a program image into a small set of fused custom
//! instructions: decode, recover basic blocks and per-block data-flow graphs,
//! profile, enumerate convex subgraphs, group them by canonical form, select
//! classes under a clock-period oracle and emit processor-model fragments.

pub mod bitset;
pub mod canon;
pub mod cost;
pub mod cfg;
pub mod config;
pub mod dfg;
pub mod emit;
pub mod encoding;
pub mod enumerate;
pub mod image;
pub mod isa;
pub mod pipeline;
pub mod profile;
pub mod select;
pub mod sim;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/program-graphs.md")]
    mod program_graphs {}
    #[doc = include_str!("../../../book/src/enumeration.md")]
    mod enumeration {}
    #[doc = include_str!("../../../book/src/classes.md")]
    mod classes {}
    #[doc = include_str!("../../../book/src/selection.md")]
    mod selection {}
    #[doc = include_str!("../../../book/src/model-output.md")]
    mod model_output {}
    #[doc = include_str!("../../../book/src/external-oracle.md")]
    mod external_oracle {}
}
