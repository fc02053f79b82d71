//! One entry point per subcommand.
//!
//! Each command deserializes its typed config out of the raw TOML value,
//! runs the experiment, and writes `<command>.csv` plus `<command>.json`
//! into the output directory. Setup problems (bad keys, impossible
//! parameters) abort with a nonzero exit; numeric failures inside a row
//! stream land in that row's `status` column instead.

mod sequences;
mod transform;
mod weights;

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;

use mwlab_core::dyadic::CubeIndex;

use crate::report::{write_sidecar, Table};

pub fn dispatch(command: &str, raw: &toml::Value, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    match command {
        "constants" => weights::constants(raw, out),
        "dimension" => weights::dimension(raw, out),
        "reduce" => weights::reduce(raw, out),
        "rhi" => weights::rhi(raw, out),
        "badset" => weights::badset(raw, out),
        "doubling" => weights::doubling(raw, out),
        "seqnorm" => sequences::seqnorm(raw, out),
        "equiv" => sequences::equiv(raw, out),
        "adop-thresholds" => sequences::adop_thresholds(raw, out),
        "adop-probe" => sequences::adop_probe(raw, out),
        "adop-sharpness" => sequences::adop_sharpness(raw, out),
        "calderon" => transform::calderon(raw, out),
        "sampling" => transform::sampling(raw, out),
        "generic-sampling" => transform::generic_sampling(raw, out),
        other => bail!("unknown command {other}"),
    }
}

fn typed<C: DeserializeOwned>(raw: &toml::Value) -> Result<C> {
    raw.clone().try_into().map_err(|e| anyhow::anyhow!("config: {e}"))
}

fn finish(out: &Path, command: &str, table: &Table, seed: u64, raw: &toml::Value) -> Result<()> {
    table.write(&out.join(format!("{command}.csv")))?;
    write_sidecar(&out.join(format!("{command}.json")), command, seed, raw)?;
    Ok(())
}

/// Cube position as fixed CSV cells (j, k1, k2, k3); unused axes stay empty.
fn cube_cells(q: &CubeIndex) -> Vec<String> {
    let mut cells = vec![q.j().to_string()];
    for ax in 0..3 {
        cells.push(q.k().get(ax).map(|k| k.to_string()).unwrap_or_default());
    }
    cells
}

fn empty_cube_cells() -> Vec<String> {
    vec![String::new(); 4]
}
