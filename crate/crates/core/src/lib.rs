//! A coverage-guided greybox fuzzer whose classic mutation stages are paired
//! with an asynchronous channel to an external structure-aware mutator.
//!
//! * [`coverage`], [`corpus`], [`mutation`], [`executor`] and [`engine`] make
//!   up the fuzzing loop.
//! * [`channel`] carries seeds to the mutator and candidates back.
//! * [`hexcodec`] turns payloads into hex text and prompts; [`dataset`] builds
//!   fine-tuning pairs from campaign output.
//! * [`stub`] is the deterministic reference mutator.

pub mod channel;
pub mod corpus;
pub mod coverage;
pub mod dataset;
pub mod engine;
pub mod executor;
pub mod hexcodec;
pub mod mutation;
pub mod parallel;
pub mod stub;
pub mod sweep;
