//! Static analyzer for bad-partitioning vulnerabilities in TEE applications.
//!
//! TEE applications split into normal-world client code (CA) and in-TEE
//! trusted-application code (TA) that exchange data through three kinds of
//! cross-world parameters: inputs, outputs, and registered shared memory.
//! This crate parses both sides, classifies those parameters, builds a
//! data-flow graph per parameter, and checks three rules over the graphs:
//!
//! * **BP-R1** — in-TEE data reaches an output parameter unencrypted.
//! * **BP-R2** — cross-world input feeds a memory copy or array access with
//!   no dominating bounds check.
//! * **BP-R3** — shared memory is used directly or aliased by shallow copy
//!   inside the TA.
//!
//! The `bench` module loads the bundled corpus and scores findings against
//! per-case ground truth.

pub mod bench;
pub mod dataflow;
pub mod driver;
pub mod frontend;
pub mod loc;
pub mod report;
pub mod rules;
pub mod tee;
