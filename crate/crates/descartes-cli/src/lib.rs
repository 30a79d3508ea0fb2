//! Library side of the command-line front end: run-spec parsing, the
//! simulate/verify batteries, inverse-route orchestration, and the stable
//! CSV/JSON exporters. The `descartes` binary is a thin wrapper over these.

pub mod inverse_cmd;
pub mod plan;
pub mod report;
pub mod run;
