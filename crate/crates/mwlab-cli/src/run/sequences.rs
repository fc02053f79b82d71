//! Sequence-side commands: seqnorm, equiv, adop-thresholds, adop-probe,
//! adop-sharpness.

use std::path::Path;

use anyhow::{bail, Context, Result};

use mwlab_core::adop::{
    boundedness_probe, probe_batch, sharpness_probe, thresholds, Classification,
};
use mwlab_core::dyadic::CubeWindow;
use mwlab_core::phitransform::{build_lp_family, function_norm};
use mwlab_core::seqspaces::{pointwise_vs_averaged, seq_norm, Weighting};
use mwlab_core::SequenceField;

use crate::config::{
    kernel_from, reducing_family, EquivConfig, OwnedWeighting, ProbeConfig, QValue,
    SeqnormConfig, SharpnessConfig, ThresholdsConfig,
};
use crate::fieldio::{evaluate_modes, random_modes, read_field};
use crate::report::{flag, num, Table};

use super::{finish, typed};

fn q_cell(q: &QValue) -> String {
    match q {
        QValue::Number(v) => num(*v),
        QValue::Word(w) => w.clone(),
    }
}

fn class_cell(c: &Classification) -> String {
    match c {
        Classification::Convergent => "convergent".into(),
        Classification::Divergent => "divergent".into(),
        Classification::Inconclusive => "inconclusive".into(),
    }
}

pub(super) fn seqnorm(raw: &toml::Value, out: &Path) -> Result<()> {
    let cfg: SeqnormConfig = typed(raw)?;
    let sp = cfg.space.build()?;
    let window = cfg.window.build(cfg.n)?;
    let t = match cfg.field.source.as_str() {
        "random" => SequenceField::random(window, cfg.field.m, cfg.field.fill, cfg.seed)
            .context("field section")?,
        "file" => {
            let path = cfg.field.path.as_ref().context("field.path is required for source = \"file\"")?;
            read_field(Path::new(path), window, cfg.field.m)?
        }
        other => bail!("field.source \"{other}\" is not \"random\" or \"file\""),
    };
    let p = cfg.p.unwrap_or(cfg.space.p);
    let weighting = OwnedWeighting::build(
        &cfg.weighting,
        cfg.weight.as_ref(),
        cfg.n,
        p,
        &cfg.method,
        &cfg.quadrature,
    )?;
    let mut table = Table::new([
        "family",
        "s",
        "tau",
        "p",
        "q",
        "weighting",
        "m",
        "cubes",
        "norm",
        "status",
    ]);
    let mut row = vec![
        cfg.space.family.to_uppercase(),
        num(cfg.space.s),
        num(cfg.space.tau),
        num(cfg.space.p),
        q_cell(&cfg.space.q),
        cfg.weighting.clone(),
        cfg.field.m.to_string(),
        t.len().to_string(),
    ];
    match seq_norm(&t, &sp, &weighting.view()) {
        Ok(v) => row.extend([num(v), "ok".into()]),
        Err(e) => row.extend(["nan".into(), flag(e)]),
    }
    table.push(row);
    finish(out, "seqnorm", &table, cfg.seed, raw)
}

pub(super) fn equiv(raw: &toml::Value, out: &Path) -> Result<()> {
    let cfg: EquivConfig = typed(raw)?;
    let sp = cfg.space.build()?;
    let p = cfg.p.unwrap_or(cfg.space.p);
    let fam = reducing_family(&cfg.weight, p, &cfg.method, &cfg.quadrature)?;
    let quad = cfg.quadrature.build()?;
    match cfg.level.as_str() {
        "sequence" => {
            let window = cfg
                .window
                .as_ref()
                .context("a [window] section is required for level = \"sequence\"")?
                .build(cfg.weight.n)?;
            let fields: Vec<SequenceField> = (0..cfg.count)
                .map(|i| SequenceField::random(window, cfg.m, cfg.fill, cfg.seed + i as u64))
                .collect::<Result<_, _>>()
                .context("field batch")?;
            let mut table = Table::new([
                "level",
                "fields",
                "ratio_min",
                "ratio_max",
                "doubled_ratio_min",
                "doubled_ratio_max",
                "band_drift",
                "status",
            ]);
            let mut row = vec!["sequence".to_string(), cfg.count.to_string()];
            match pointwise_vs_averaged(&fields, &sp, &fam, &quad) {
                Ok(r) => row.extend([
                    num(r.ratio_min),
                    num(r.ratio_max),
                    num(r.doubled_ratio_min),
                    num(r.doubled_ratio_max),
                    num(r.band_drift),
                    "ok".into(),
                ]),
                Err(e) => {
                    row.extend(vec!["nan".to_string(); 5]);
                    row.push(flag(e));
                }
            }
            table.push(row);
            finish(out, "equiv", &table, cfg.seed, raw)
        }
        "function" => {
            let sizes =
                cfg.sizes.clone().context("sizes is required for level = \"function\"")?;
            let j_max = cfg.j_max.context("j_max is required for level = \"function\"")?;
            let n = cfg.weight.n;
            let w = cfg.weight.build()?;
            let families = sizes
                .iter()
                .map(|&size| build_lp_family(size, n, j_max))
                .collect::<Result<Vec<_>, _>>()
                .context("grid sizes")?;
            let mut table =
                Table::new(["trial", "size", "pointwise", "averaged", "ratio", "status"]);
            for trial in 0..cfg.count {
                let modes = random_modes(
                    n,
                    cfg.m,
                    2f64.powi(j_max),
                    cfg.n_modes,
                    cfg.seed + trial as u64,
                );
                for (lp, &size) in families.iter().zip(&sizes) {
                    let mut row = vec![trial.to_string(), size.to_string()];
                    let norms = evaluate_modes(n, size, &modes).and_then(|f| {
                        let np = function_norm(&f, lp, &sp, &Weighting::Pointwise(&w, quad))?;
                        let na = function_norm(&f, lp, &sp, &Weighting::Averaged(&fam))?;
                        Ok((np, na))
                    });
                    match norms {
                        Ok((np, na)) => {
                            row.extend([num(np), num(na), num(np / na), "ok".into()])
                        }
                        Err(e) => {
                            row.extend(vec!["nan".to_string(); 3]);
                            row.push(flag(e));
                        }
                    }
                    table.push(row);
                }
            }
            finish(out, "equiv", &table, cfg.seed, raw)
        }
        other => bail!("level \"{other}\" is not \"sequence\" or \"function\""),
    }
}

pub(super) fn adop_thresholds(raw: &toml::Value, out: &Path) -> Result<()> {
    let cfg: ThresholdsConfig = typed(raw)?;
    let sp = cfg.space.build()?;
    let th = thresholds(&sp, cfg.n, cfg.d1, cfg.d2).context("adop-thresholds")?;
    let mut table = Table::new([
        "family",
        "s",
        "tau",
        "p",
        "q",
        "n",
        "d1",
        "d2",
        "d_threshold",
        "e_threshold",
        "f_threshold",
        "status",
    ]);
    table.push(vec![
        cfg.space.family.to_uppercase(),
        num(cfg.space.s),
        num(cfg.space.tau),
        num(cfg.space.p),
        q_cell(&cfg.space.q),
        cfg.n.to_string(),
        num(cfg.d1),
        num(cfg.d2),
        num(th.d),
        num(th.e),
        num(th.f),
        "ok".into(),
    ]);
    finish(out, "adop-thresholds", &table, cfg.seed, raw)
}

pub(super) fn adop_probe(raw: &toml::Value, out: &Path) -> Result<()> {
    let cfg: ProbeConfig = typed(raw)?;
    let sp = cfg.space.build()?;
    let kernel = kernel_from(cfg.kernel.as_ref(), cfg.margin, &sp, cfg.n, cfg.d1, cfg.d2)?;
    let p = cfg.p.unwrap_or(cfg.space.p);
    let weighting = OwnedWeighting::build(
        &cfg.weighting,
        cfg.weight.as_ref(),
        cfg.n,
        p,
        &cfg.method,
        &cfg.quadrature,
    )?;
    let pr = &cfg.probe;
    let home = CubeWindow::new(cfg.n, pr.home_j_min, pr.home_j_max, pr.radius, !pr.homogeneous)
        .context("probe section")?;
    let schedule = pr
        .schedule_j_max
        .iter()
        .map(|&top| CubeWindow::new(cfg.n, pr.home_j_min, top, pr.radius, !pr.homogeneous))
        .collect::<Result<Vec<_>, _>>()
        .context("probe.schedule_j_max")?;
    let fields = probe_batch(&home, pr.m, pr.count, cfg.seed).context("probe batch")?;
    let mut table = Table::new([
        "window_cubes",
        "ratio",
        "kernel_d",
        "kernel_e",
        "kernel_f",
        "max_step_growth",
        "bounded_consistent",
        "status",
    ]);
    match boundedness_probe(&kernel, &sp, &weighting.view(), &fields, &schedule) {
        Ok(rep) => {
            for row in &rep.rows {
                table.push(vec![
                    row.window_cubes.to_string(),
                    num(row.ratio),
                    num(kernel.d),
                    num(kernel.e),
                    num(kernel.f),
                    num(rep.max_step_growth),
                    rep.bounded_consistent.to_string(),
                    "ok".into(),
                ]);
            }
        }
        Err(e) => {
            let mut row = vec!["nan".to_string(); 7];
            row.push(flag(e));
            table.push(row);
        }
    }
    finish(out, "adop-probe", &table, cfg.seed, raw)
}

pub(super) fn adop_sharpness(raw: &toml::Value, out: &Path) -> Result<()> {
    let cfg: SharpnessConfig = typed(raw)?;
    let sp = cfg.space.build()?;
    let kernel = kernel_from(cfg.kernel.as_ref(), cfg.margin, &sp, cfg.n, cfg.d1, cfg.d2)?;
    let mut table =
        Table::new(["series", "exponent", "cutoff", "partial_sum", "classification", "status"]);
    match sharpness_probe(&sp, cfg.n, cfg.d2, &kernel, cfg.k_max) {
        Ok(rep) => {
            for &(cutoff, sum) in &rep.d_partial {
                table.push(vec![
                    "d_sum".into(),
                    num(rep.d_exponent),
                    cutoff.to_string(),
                    num(sum),
                    class_cell(&rep.d_class),
                    "ok".into(),
                ]);
            }
            for &(cutoff, sum) in &rep.f_partial {
                table.push(vec![
                    "f_sum".into(),
                    num(rep.f_exponent),
                    cutoff.to_string(),
                    num(sum),
                    class_cell(&rep.f_class),
                    "ok".into(),
                ]);
            }
        }
        Err(e) => {
            let mut row = vec!["nan".to_string(); 5];
            row.push(flag(e));
            table.push(row);
        }
    }
    finish(out, "adop-sharpness", &table, cfg.seed, raw)
}
