//! Probabilistic PCF with a stack-machine operational semantics, a
//! denotational semantics in probabilistic coherence spaces, expected
//! execution times computed as derivatives, and denotational distances.

pub mod adequacy;
pub mod figure;
pub mod generate;
pub mod machine;
pub mod pcs;
pub mod semantics;
pub mod syntax;
pub mod translate;
