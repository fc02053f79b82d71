//! Filter-bank commands: calderon, sampling, generic-sampling.

use std::path::Path;

use anyhow::{bail, Context, Result};

use mwlab_core::phitransform::{
    adjointness_defect, analyze, build_lp_family, calderon_check, generic_sampling_reconstruct,
    lattice_sampling_check, random_resolved, SamplePoints,
};

use crate::config::{CalderonConfig, GenericSamplingConfig, SamplingConfig};
use crate::fieldio::write_grid;
use crate::report::{flag, num, Table};

use super::{finish, typed};

fn log2_size(size: usize) -> Result<i32> {
    if size < 2 || !size.is_power_of_two() {
        bail!("size must be a power of two, at least 2");
    }
    Ok(size.trailing_zeros() as i32)
}

pub(super) fn calderon(raw: &toml::Value, out: &Path) -> Result<()> {
    let cfg: CalderonConfig = typed(raw)?;
    let j_max = match cfg.j_max {
        Some(j) => j,
        None => log2_size(cfg.size)?,
    };
    let fam = build_lp_family(cfg.size, cfg.n, j_max).context("filter family")?;
    let mut table = Table::new(["trial", "calderon_error", "adjointness_defect", "status"]);
    for trial in 0..cfg.count {
        let base = cfg.seed + 2 * trial as u64;
        let mut row = vec![trial.to_string()];
        let run = || -> Result<(f64, f64)> {
            let f = random_resolved(&fam, cfg.m, base)?;
            let g = random_resolved(&fam, cfg.m, base + 1)?;
            let round_trip = calderon_check(&f, &fam)?;
            let t = analyze(&f, &fam)?;
            let pairing = adjointness_defect(&t, &g, &fam)?;
            Ok((round_trip, pairing))
        };
        match run() {
            Ok((round_trip, pairing)) => {
                row.extend([num(round_trip), num(pairing), "ok".into()])
            }
            Err(e) => {
                row.extend(["nan".into(), "nan".into(), flag(e)]);
            }
        }
        table.push(row);
    }
    finish(out, "calderon", &table, cfg.seed, raw)
}

pub(super) fn sampling(raw: &toml::Value, out: &Path) -> Result<()> {
    let cfg: SamplingConfig = typed(raw)?;
    let band_j = cfg.band_j.unwrap_or(cfg.j);
    let fam = build_lp_family(cfg.size, cfg.n, band_j).context("filter family")?;
    let y = cfg.y.clone().unwrap_or_else(|| vec![0.0; cfg.n]);
    let mut table = Table::new(["trial", "max_error", "status"]);
    for trial in 0..cfg.count {
        let mut row = vec![trial.to_string()];
        let run = || -> Result<f64> {
            let f = random_resolved(&fam, cfg.m, cfg.seed + trial as u64)?;
            Ok(lattice_sampling_check(&f, &fam, cfg.j, cfg.alpha, &y)?)
        };
        match run() {
            Ok(err) => row.extend([num(err), "ok".into()]),
            Err(e) => row.extend(["nan".into(), flag(e)]),
        }
        table.push(row);
    }
    finish(out, "sampling", &table, cfg.seed, raw)
}

pub(super) fn generic_sampling(raw: &toml::Value, out: &Path) -> Result<()> {
    let cfg: GenericSamplingConfig = typed(raw)?;
    let band_j = cfg.band_j.unwrap_or(cfg.j);
    let fam = build_lp_family(cfg.size, cfg.n, band_j).context("filter family")?;
    let points = || match cfg.points.as_str() {
        "centers" => Ok(SamplePoints::Centers),
        "corners" => Ok(SamplePoints::Corners),
        "random" => Ok(SamplePoints::Random(cfg.seed)),
        other => Err(anyhow::anyhow!(
            "points \"{other}\" is not one of centers, corners, random"
        )),
    };
    points()?;
    let f = random_resolved(&fam, cfg.m, cfg.seed).context("band-limited function")?;
    let mut table = Table::new([
        "depth",
        "reconstruction_error",
        "contraction",
        "neumann_terms",
        "status",
    ]);
    let deepest = cfg.depths.iter().copied().max();
    for &depth in &cfg.depths {
        let mut row = vec![depth.to_string()];
        match generic_sampling_reconstruct(&f, &fam, cfg.j, depth, cfg.decay_m, points()?) {
            Ok(rep) => {
                row.extend([
                    num(rep.reconstruction.max_abs_diff(&f)),
                    num(rep.contraction),
                    rep.neumann_terms.to_string(),
                    "ok".into(),
                ]);
                if cfg.write_reconstruction && Some(depth) == deepest {
                    write_grid(&out.join("reconstruction.csv"), &rep.reconstruction)?;
                }
            }
            Err(e) => {
                row.extend(["nan".into(), "nan".into(), "nan".into(), flag(e)]);
            }
        }
        table.push(row);
    }
    finish(out, "generic-sampling", &table, cfg.seed, raw)
}
