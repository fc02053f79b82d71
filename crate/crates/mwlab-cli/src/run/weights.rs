//! Weight-side commands: constants, dimension, reduce, rhi, badset,
//! doubling.

use std::path::Path;

use anyhow::Result;

use mwlab_core::diagnostics::{
    bad_set_fraction, constants_report, default_base_cubes, dimension_estimate,
    reverse_holder_check, strong_doubling_check,
};

use crate::config::{
    reducing_family, BadsetConfig, ConstantsConfig, DimensionConfig, DoublingConfig, ReduceConfig,
    RhiConfig,
};
use crate::report::{flag, num, Table};

use super::{cube_cells, empty_cube_cells, finish, typed};

pub(super) fn constants(raw: &toml::Value, out: &Path) -> Result<()> {
    let cfg: ConstantsConfig = typed(raw)?;
    let w = cfg.weight.build()?;
    let window = cfg.window.build(w.n())?;
    let quad = cfg.quadrature.build()?;
    let mut table = Table::new([
        "ap",
        "apinfty",
        "fujii_sc",
        "fujii_vec",
        "ap_divergent",
        "apinfty_divergent",
        "vec_over_sc",
        "sc_over_apinfty",
        "status",
    ]);
    match constants_report(&w, cfg.p, &window, cfg.grid_depth, &quad) {
        Ok(r) => table.push(vec![
            num(r.ap),
            num(r.apinfty),
            num(r.fujii_sc),
            num(r.fujii_vec),
            r.ap_divergent.to_string(),
            r.apinfty_divergent.to_string(),
            num(r.vec_over_sc),
            num(r.sc_over_apinfty),
            "ok".into(),
        ]),
        Err(e) => {
            let mut row = vec!["nan".to_string(); 8];
            row.push(flag(e));
            table.push(row);
        }
    }
    finish(out, "constants", &table, cfg.seed, raw)
}

pub(super) fn dimension(raw: &toml::Value, out: &Path) -> Result<()> {
    let cfg: DimensionConfig = typed(raw)?;
    let w = cfg.weight.build()?;
    let quad = cfg.quadrature.build()?;
    let base = default_base_cubes(w.n());
    let mut table = Table::new([
        "j",
        "k1",
        "k2",
        "k3",
        "lambda",
        "lower",
        "upper",
        "d_lower_est",
        "d_upper_est",
        "d1",
        "d2",
        "lower_residual",
        "upper_residual",
        "status",
    ]);
    match dimension_estimate(&w, cfg.p, &base, &cfg.lambda, &quad) {
        Ok(r) => {
            for row in &r.table {
                let mut cells = cube_cells(&row.cube);
                cells.extend([
                    num(row.lambda),
                    num(row.lower),
                    num(row.upper),
                    num(r.d_lower_est),
                    num(r.d_upper_est),
                    num(r.d1),
                    num(r.d2),
                    num(r.lower_residual),
                    num(r.upper_residual),
                    "ok".into(),
                ]);
                table.push(cells);
            }
        }
        Err(e) => {
            let mut cells = empty_cube_cells();
            cells.extend(vec!["nan".to_string(); 9]);
            cells.push(flag(e));
            table.push(cells);
        }
    }
    finish(out, "dimension", &table, cfg.seed, raw)
}

pub(super) fn reduce(raw: &toml::Value, out: &Path) -> Result<()> {
    let cfg: ReduceConfig = typed(raw)?;
    let fam = reducing_family(&cfg.weight, cfg.p, &cfg.method, &cfg.quadrature)?;
    let window = cfg.window.build(fam.weight().n())?;
    let m = fam.weight().m();
    let mut columns: Vec<String> =
        ["j", "k1", "k2", "k3", "c_lo", "c_hi", "ratio"].map(String::from).into();
    for row in 0..m {
        for col in 0..m {
            columns.push(format!("a_{row}{col}_re"));
            columns.push(format!("a_{row}{col}_im"));
        }
    }
    columns.push("status".into());
    let width = columns.len();
    let mut table = Table::new(columns);
    for q in window.cubes() {
        let mut cells = cube_cells(&q);
        match fam.verify(&q).and_then(|cert| Ok((cert, fam.operator(&q)?))) {
            Ok((cert, a)) => {
                cells.extend([num(cert.c_lo), num(cert.c_hi), num(cert.ratio())]);
                let mat = a.matrix();
                for row in 0..m {
                    for col in 0..m {
                        let v = mat[(row, col)];
                        cells.push(num(v.re));
                        cells.push(num(v.im));
                    }
                }
                cells.push("ok".into());
            }
            Err(e) => {
                while cells.len() < width - 1 {
                    cells.push("nan".into());
                }
                cells.push(flag(e));
            }
        }
        table.push(cells);
    }
    finish(out, "reduce", &table, cfg.seed, raw)
}

pub(super) fn rhi(raw: &toml::Value, out: &Path) -> Result<()> {
    let cfg: RhiConfig = typed(raw)?;
    let w = cfg.weight.build()?;
    let window = cfg.window.build(w.n())?;
    let quad = cfg.quadrature.build()?;
    let mut table = Table::new([
        "r",
        "ratio",
        "worst_ratio",
        "worst_r",
        "worst_j",
        "worst_k1",
        "worst_k2",
        "worst_k3",
        "status",
    ]);
    match reverse_holder_check(&w, cfg.p, &window, &cfg.r, &quad) {
        Ok(rep) => {
            let worst =
                rep.worst_cube.as_ref().map(cube_cells).unwrap_or_else(empty_cube_cells);
            for &(r, ratio) in &rep.per_r {
                let mut cells = vec![num(r), num(ratio), num(rep.worst_ratio), num(rep.worst_r)];
                cells.extend(worst.iter().cloned());
                cells.push("ok".into());
                table.push(cells);
            }
        }
        Err(e) => {
            let mut cells = vec!["nan".to_string(); 4];
            cells.extend(empty_cube_cells());
            cells.push(flag(e));
            table.push(cells);
        }
    }
    finish(out, "rhi", &table, cfg.seed, raw)
}

pub(super) fn badset(raw: &toml::Value, out: &Path) -> Result<()> {
    let cfg: BadsetConfig = typed(raw)?;
    let fam = reducing_family(&cfg.weight, cfg.p, &cfg.method, &cfg.quadrature)?;
    let q = cfg.cube.build()?;
    if q.n() != fam.weight().n() {
        anyhow::bail!("cube.k length ({}) must match weight.n ({})", q.n(), fam.weight().n());
    }
    let mut table = Table::new(["m", "fraction", "m_times_fraction", "status"]);
    match bad_set_fraction(&fam, &q, &cfg.m_grid) {
        Ok(points) => {
            for pt in points {
                table.push(vec![
                    num(pt.m),
                    num(pt.fraction),
                    num(pt.m_times_fraction),
                    "ok".into(),
                ]);
            }
        }
        Err(e) => table.push(vec!["nan".into(), "nan".into(), "nan".into(), flag(e)]),
    }
    finish(out, "badset", &table, cfg.seed, raw)
}

pub(super) fn doubling(raw: &toml::Value, out: &Path) -> Result<()> {
    let cfg: DoublingConfig = typed(raw)?;
    let fam = reducing_family(&cfg.weight, cfg.p, &cfg.method, &cfg.quadrature)?;
    let window = cfg.window.build(fam.weight().n())?;
    let mut table = Table::new([
        "worst_general",
        "worst_same_level",
        "worst_nested",
        "doubled_general",
        "growth",
        "worst_pair",
        "status",
    ]);
    match strong_doubling_check(&fam, cfg.d1, cfg.d2, &window) {
        Ok(r) => {
            let pos = |q: &mwlab_core::dyadic::CubeIndex| {
                let k: Vec<String> = q.k().iter().map(|v| v.to_string()).collect();
                format!("{}:{}", q.j(), k.join(","))
            };
            let pair = r
                .worst_pair
                .as_ref()
                .map(|(a, b)| format!("{}|{}", pos(a), pos(b)))
                .unwrap_or_default();
            table.push(vec![
                num(r.worst_general),
                num(r.worst_same_level),
                num(r.worst_nested),
                num(r.doubled_general),
                num(r.doubled_general / r.worst_general),
                pair,
                "ok".into(),
            ]);
        }
        Err(e) => {
            let mut row = vec!["nan".to_string(); 5];
            row.push(String::new());
            row.push(flag(e));
            table.push(row);
        }
    }
    finish(out, "doubling", &table, cfg.seed, raw)
}
