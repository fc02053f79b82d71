//! Plain-text exchange for coefficient fields and grid functions, plus the
//! seeded generators the experiment commands share.
//!
//! Sequence fields are line-oriented, one record per cube:
//!
//! ```text
//! j k_1 .. k_n re_1 im_1 .. re_m im_m
//! ```
//!
//! with `#` starting a comment. The window is not stored; a reader homes the
//! records into the window it is given and rejects cubes outside it.
//!
//! Grid functions are CSV with columns `n,size,m,node,component,re,im`; the
//! dimensions repeat per row and must agree across the file, and every
//! (node, component) slot must appear exactly once.

use std::path::Path;

use anyhow::{bail, Context, Result};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use mwlab_core::dyadic::{CubeIndex, CubeWindow};
use mwlab_core::{GridFunction, SequenceField};

pub fn write_field(path: &Path, t: &SequenceField) -> Result<()> {
    let n = t.window().n();
    let mut out = String::new();
    out.push_str(&format!("# coefficient field: j k_1..k_{n} re_1 im_1 .. re_m im_m\n"));
    for (cube, v) in t.iter() {
        out.push_str(&format!("{}", cube.j()));
        for &ki in cube.k() {
            out.push_str(&format!(" {ki}"));
        }
        for c in v {
            out.push_str(&format!(" {} {}", crate::report::num(c.re), crate::report::num(c.im)));
        }
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_field(path: &Path, window: CubeWindow, m: usize) -> Result<SequenceField> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let n = window.n();
    let want = 1 + n + 2 * m;
    let mut t = SequenceField::new(window, m).context("field window")?;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != want {
            bail!("{}:{lineno}: expected {want} fields, got {}", path.display(), tok.len());
        }
        let j: i32 = tok[0]
            .parse()
            .with_context(|| format!("{}:{lineno}: bad level", path.display()))?;
        let mut k = Vec::with_capacity(n);
        for tk in &tok[1..1 + n] {
            k.push(
                tk.parse::<i64>()
                    .with_context(|| format!("{}:{lineno}: bad position", path.display()))?,
            );
        }
        let mut v = Vec::with_capacity(m);
        for pair in tok[1 + n..].chunks(2) {
            let re: f64 = pair[0]
                .parse()
                .with_context(|| format!("{}:{lineno}: bad value", path.display()))?;
            let im: f64 = pair[1]
                .parse()
                .with_context(|| format!("{}:{lineno}: bad value", path.display()))?;
            v.push(Complex::new(re, im));
        }
        let cube = CubeIndex::new(j, &k)
            .with_context(|| format!("{}:{lineno}: bad cube", path.display()))?;
        t.insert(cube, v).with_context(|| format!("{}:{lineno}", path.display()))?;
    }
    Ok(t)
}

pub fn write_grid(path: &Path, f: &GridFunction) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["n", "size", "m", "node", "component", "re", "im"])?;
    let (n, size, m) = (f.n().to_string(), f.size().to_string(), f.m().to_string());
    for node in 0..f.nodes() {
        for c in 0..f.m() {
            let v = f.value(node)[c];
            w.write_record([
                n.clone(),
                size.clone(),
                m.clone(),
                node.to_string(),
                c.to_string(),
                crate::report::num(v.re),
                crate::report::num(v.im),
            ])?;
        }
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_grid(path: &Path) -> Result<GridFunction> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut f: Option<GridFunction> = None;
    let mut seen = 0usize;
    for (idx, rec) in rd.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: record {}", path.display(), idx + 1))?;
        if rec.len() != 7 {
            bail!("{}: record {} has {} fields, expected 7", path.display(), idx + 1, rec.len());
        }
        let cell = |i: usize| -> &str { rec.get(i).unwrap_or("") };
        let n: usize = cell(0).parse().context("bad n")?;
        let size: usize = cell(1).parse().context("bad size")?;
        let m: usize = cell(2).parse().context("bad m")?;
        let g = match &mut f {
            Some(g) => {
                if g.n() != n || g.size() != size || g.m() != m {
                    bail!("{}: record {} changes the grid shape", path.display(), idx + 1);
                }
                g
            }
            None => f.insert(GridFunction::zeros(n, size, m).context("grid shape")?),
        };
        let node: usize = cell(3).parse().context("bad node")?;
        let comp: usize = cell(4).parse().context("bad component")?;
        if node >= g.nodes() || comp >= m {
            bail!("{}: record {} is out of range", path.display(), idx + 1);
        }
        let re: f64 = cell(5).parse().context("bad re")?;
        let im: f64 = cell(6).parse().context("bad im")?;
        g.value_mut(node)[comp] = Complex::new(re, im);
        seen += 1;
    }
    let f = f.context("empty grid file")?;
    if seen != f.nodes() * f.m() {
        bail!("{}: {} records for {} slots", path.display(), seen, f.nodes() * f.m());
    }
    Ok(f)
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Per-component lattice modes in the closed ball `|2 pi k| <= radius_xi`
/// with Gaussian coefficients. Evaluated directly, so the same function can
/// be sampled on any grid that resolves the modes.
pub fn random_modes(
    n: usize,
    m: usize,
    radius_xi: f64,
    count: usize,
    seed: u64,
) -> Vec<Vec<(Vec<i64>, Complex<f64>)>> {
    let two_pi = std::f64::consts::TAU;
    let reach = (radius_xi / two_pi).floor() as i64;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..m)
        .map(|_| {
            (0..count)
                .map(|_| {
                    let k: Vec<i64> = loop {
                        let cand: Vec<i64> =
                            (0..n).map(|_| rng.gen_range(-reach..=reach)).collect();
                        let r2: f64 = cand.iter().map(|&ki| (ki * ki) as f64).sum();
                        if two_pi * r2.sqrt() <= radius_xi {
                            break cand;
                        }
                    };
                    (k, Complex::new(gaussian(&mut rng), gaussian(&mut rng)))
                })
                .collect()
        })
        .collect()
}

/// Evaluates mode sums on the grid. Every mode must satisfy `2 |k_i| < size`
/// so the grid sees it as itself and not an alias.
pub fn evaluate_modes(
    n: usize,
    size: usize,
    modes: &[Vec<(Vec<i64>, Complex<f64>)>],
) -> Result<GridFunction> {
    let mut f = GridFunction::zeros(n, size, modes.len()).context("grid shape")?;
    for comp in modes {
        for (k, _) in comp {
            if k.len() != n {
                bail!("mode dimension {} does not match n = {n}", k.len());
            }
            if k.iter().any(|&ki| 2 * ki.unsigned_abs() as usize >= size) {
                bail!("mode {k:?} aliases on a grid of {size} nodes per axis");
            }
        }
    }
    let two_pi = std::f64::consts::TAU;
    for node in 0..f.nodes() {
        let x = f.node_position(node);
        for (c, comp) in modes.iter().enumerate() {
            let mut acc = Complex::new(0.0, 0.0);
            for (k, coef) in comp {
                let phase: f64 =
                    k.iter().zip(&x).map(|(&ki, &xi)| ki as f64 * xi).sum::<f64>() * two_pi;
                acc += coef * Complex::new(phase.cos(), phase.sin());
            }
            f.value_mut(node)[c] = acc;
        }
    }
    Ok(f)
}
