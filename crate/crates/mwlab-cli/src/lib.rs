//! Experiment runner over [`mwlab_core`].
//!
//! Every subcommand of the `mwlab` binary reads one TOML config, runs a
//! deterministic experiment, and writes two files into the output directory:
//! a CSV report (header row naming the columns, `.` decimals, `\n` line
//! ends) and a JSON sidecar echoing the config, the seed, and the package
//! version. Re-running a config reproduces both files byte for byte.
//!
//! * [`config`] — the TOML schema and builders onto core objects.
//! * [`fieldio`] — plain-text exchange formats for coefficient fields and
//!   grid functions, plus seeded mode generators.
//! * [`report`] — the CSV table and sidecar writers.
//! * [`run`] — one entry point per subcommand.

pub mod config;
pub mod fieldio;
pub mod report;
pub mod run;
