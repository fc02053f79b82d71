//! Band-limited Littlewood-Paley machinery on a periodic grid.
//!
//! Everything lives on the torus `[0,1)^n` sampled at `N = 2^L` nodes per
//! axis. Convolution with a window is a frequency multiplier, so the
//! partition of unity, the reproducing identities, and the sampling formulas
//! hold exactly on the resolved band; the only error left is rounding.
//!
//! The window pair is built from one smooth cutoff `chi` (1 on `r <= 1`,
//! 0 on `r >= 2`) via the square-root telescope
//!
//! ```text
//!   bigphi_hat(xi)^2 = chi(|xi|),    phi_hat(xi)^2 = chi(|xi|) - chi(2|xi|),
//! ```
//!
//! so the level sums collapse: `bigphi_hat^2 + sum_{j=1..J} phi_hat(2^-j .)^2
//! = chi(2^-J |xi|)`, which is exactly 1 once `|xi| <= 2^J`. The synthesis
//! pair is the same window pair, making the transform tight.
//!
//! Frequencies are `xi = 2 pi m` for integer lattice modes `m`; level `j`
//! occupies `2^{j-1} <= |xi| <= 2^{j+1}`, so the deepest usable level needs
//! `2^{j_max+1} <= pi N` and cube/grid alignment needs `j_max <= log2 N`.
//! Coefficient lattices at level `j` use torus positions `k in [0, 2^j)^n`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use rustfft::{FftNum, FftPlanner};
use serde::Serialize;
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

use crate::dyadic::{CubeIndex, CubeWindow, DyadicError};
use crate::linalg::{vec_norm, HermitianPd, LinalgError};
use crate::scalar::Real;
use crate::seqspaces::{
    combine_levels, Exponent, Family, SeqError, SequenceField, SpaceParams, Weighting,
};
use crate::weights::{
    gram_sqrt, BoxDomain, ReducingFamily, ReducingMethod, WeightError,
};
use crate::Cplx;

#[derive(Debug, Error)]
pub enum PhiError {
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("grid of {size} nodes per axis cannot resolve level {j_max}")]
    Unresolved { size: usize, j_max: i32 },
    #[error("grid/lattice mismatch: {0}")]
    Misaligned(String),
    #[error("spectrum leaks outside the admissible band at level {level}")]
    SpectrumLeak { level: i32 },
    #[error("residual operator norm {norm} is not a contraction; increase depth")]
    NotContractive { norm: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Seq(#[from] SeqError),
    #[error(transparent)]
    Dyadic(#[from] DyadicError),
    #[error(transparent)]
    Weight(#[from] WeightError),
}

type Result<V> = std::result::Result<V, PhiError>;

/// Complex vector-valued samples on the uniform torus grid.
///
/// Node `i = (i_1, ..., i_n)` sits at `x = i / N`; storage is row-major in
/// the last axis with `m` interleaved components per node.
#[derive(Debug, Clone)]
pub struct GridFunction<T> {
    n: usize,
    size: usize,
    m: usize,
    data: Vec<Cplx<T>>,
}

impl<T: Real> GridFunction<T> {
    pub fn zeros(n: usize, size: usize, m: usize) -> Result<Self> {
        check_grid_shape(n, size)?;
        if m == 0 {
            return Err(PhiError::BadParam("m must be positive".into()));
        }
        let nodes = size.pow(n as u32);
        Ok(Self { n, size, m, data: vec![Cplx::new(T::zero(), T::zero()); nodes * m] })
    }

    /// Seeded complex Gaussian samples, independent per node and component.
    pub fn random(n: usize, size: usize, m: usize, seed: u64) -> Result<Self> {
        let mut f = Self::zeros(n, size, m)?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        for v in f.data.iter_mut() {
            *v = Cplx::new(T::of(gaussian(&mut rng)), T::of(gaussian(&mut rng)));
        }
        Ok(f)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn nodes(&self) -> usize {
        self.size.pow(self.n as u32)
    }

    pub fn value(&self, node: usize) -> &[Cplx<T>] {
        &self.data[node * self.m..(node + 1) * self.m]
    }

    pub fn value_mut(&mut self, node: usize) -> &mut [Cplx<T>] {
        &mut self.data[node * self.m..(node + 1) * self.m]
    }

    /// Coordinates of the node in `[0,1)^n`.
    pub fn node_position(&self, node: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n);
        let mut rest = node;
        for _ in 0..self.n {
            let i = rest % self.size;
            rest /= self.size;
            out.push(T::of(i as f64) / T::of(self.size as f64));
        }
        out
    }

    /// `L^2(torus)` norm: the grid quadrature is exact for resolved content.
    pub fn l2_norm(&self) -> T {
        let cell = T::of(self.nodes() as f64);
        (self.data.iter().map(|v| v.norm_sqr()).fold(T::zero(), |a, b| a + b) / cell).sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.data.len(), other.data.len(), "shape mismatch");
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(T::zero(), |acc, v| acc.max(v))
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn check_grid_shape(n: usize, size: usize) -> Result<()> {
    if n == 0 || n > 2 {
        return Err(PhiError::BadParam(format!("n = {n} not in {{1, 2}}")));
    }
    if size < 2 || !size.is_power_of_two() {
        return Err(PhiError::BadParam(format!("grid size {size} must be a power of two >= 2")));
    }
    Ok(())
}

/// `exp(-1/u)` for positive `u`, else 0: the flat-at-zero smooth gate.
fn smooth_gate<T: Real>(u: T) -> T {
    if u > T::zero() {
        (-u.recip()).exp()
    } else {
        T::zero()
    }
}

/// Smooth monotone step: 0 for `t <= 0`, 1 for `t >= 1`.
fn smooth_step<T: Real>(t: T) -> T {
    let a = smooth_gate(t);
    let b = smooth_gate(T::one() - t);
    if a == T::zero() {
        T::zero()
    } else {
        a / (a + b)
    }
}

/// Radial cutoff: 1 on `r <= 1`, 0 on `r >= 2`, smooth in between.
pub fn chi<T: Real>(r: T) -> T {
    smooth_step(T::of(2.0) - r)
}

/// The coarse window symbol at radius `r = |xi|`.
pub fn bigphi_hat<T: Real>(r: T) -> T {
    chi(r).max(T::zero()).sqrt()
}

/// The annular window symbol at radius `r = |xi|`; real and nonnegative with
/// support in `1/2 <= r <= 2`.
pub fn phi_hat<T: Real>(r: T) -> T {
    (chi(r) - chi(T::of(2.0) * r)).max(T::zero()).sqrt()
}

/// Littlewood-Paley window family bound to one grid shape.
///
/// `symbol[j]` holds the level-`j` analysis multiplier on the grid's
/// frequency lattice (level 0 is the coarse window). The synthesis family is
/// the same by the tight square-root construction, and all symbols are real,
/// so analysis with the conjugate-reflected window uses the same tables.
pub struct LpFamily<T> {
    n: usize,
    size: usize,
    j_max: i32,
    symbol: Vec<Vec<T>>,
}

impl<T: Real> LpFamily<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    /// Analysis/synthesis symbol of level `j` at flat frequency index `idx`.
    pub fn symbol(&self, j: i32, idx: usize) -> T {
        self.symbol[j as usize][idx]
    }

    /// Whether the mode is inside the resolved band `|xi| <= 2^{j_max}`.
    pub fn resolved(&self, idx: usize) -> bool {
        let two_pi = T::of(2.0) * T::PI();
        let r = two_pi * freq_radius::<T>(self.n, self.size, idx);
        r <= T::of(2.0_f64.powi(self.j_max))
    }

    /// Largest pointwise defect of the telescoped partition of unity over
    /// the resolved band.
    pub fn partition_defect(&self) -> T {
        let nodes = self.size.pow(self.n as u32);
        let mut worst = T::zero();
        for idx in 0..nodes {
            if !self.resolved(idx) {
                continue;
            }
            let mut sum = T::zero();
            for tab in &self.symbol {
                sum = sum + tab[idx] * tab[idx];
            }
            worst = worst.max((sum - T::one()).abs());
        }
        worst
    }
}

/// Signed frequency of the flat index along each axis, in lattice units.
fn freq_vector(n: usize, size: usize, idx: usize) -> Vec<i64> {
    let mut out = Vec::with_capacity(n);
    let mut rest = idx;
    for _ in 0..n {
        let i = (rest % size) as i64;
        rest /= size;
        out.push(if i <= (size as i64) / 2 { i } else { i - size as i64 });
    }
    out
}

fn freq_radius<T: Real>(n: usize, size: usize, idx: usize) -> T {
    let f = freq_vector(n, size, idx);
    f.iter().map(|&v| T::of(v as f64) * T::of(v as f64)).fold(T::zero(), |a, b| a + b).sqrt()
}

/// Builds the window family for an `n`-dimensional grid of `size` nodes per
/// axis with levels `0..=j_max`.
pub fn build_lp_family<T: Real>(size: usize, n: usize, j_max: i32) -> Result<LpFamily<T>> {
    check_grid_shape(n, size)?;
    let log2_size = size.trailing_zeros() as i32;
    if j_max < 0 || j_max > log2_size {
        return Err(PhiError::Unresolved { size, j_max });
    }
    // Band support of the deepest level must stay below the grid Nyquist.
    if 2.0_f64.powi(j_max + 1) > std::f64::consts::PI * size as f64 {
        return Err(PhiError::Unresolved { size, j_max });
    }
    let nodes = size.pow(n as u32);
    let two_pi = T::of(2.0) * T::PI();
    let symbol: Vec<Vec<T>> = (0..=j_max)
        .map(|j| {
            let scale = T::of(2.0_f64.powi(-j));
            (0..nodes)
                .map(|idx| {
                    let r = scale * two_pi * freq_radius::<T>(n, size, idx);
                    if j == 0 {
                        bigphi_hat(r)
                    } else {
                        phi_hat(r)
                    }
                })
                .collect()
        })
        .collect();
    Ok(LpFamily { n, size, j_max, symbol })
}

/// In-place FFT over every axis of a flat `n`-dimensional array.
fn fft_nd<T: Real + FftNum>(data: &mut [Cplx<T>], n: usize, size: usize, inverse: bool) {
    let mut planner = FftPlanner::<T>::new();
    let fft = if inverse { planner.plan_fft_inverse(size) } else { planner.plan_fft_forward(size) };
    match n {
        1 => fft.process(data),
        2 => {
            for row in data.chunks_exact_mut(size) {
                fft.process(row);
            }
            let mut col = vec![Cplx::new(T::zero(), T::zero()); size];
            for c in 0..size {
                for (r, slot) in col.iter_mut().enumerate() {
                    *slot = data[r * size + c];
                }
                fft.process(&mut col);
                for (r, v) in col.iter().enumerate() {
                    data[r * size + c] = *v;
                }
            }
        }
        _ => unreachable!("grid dimension checked on construction"),
    }
}

/// Fourier coefficients `c_m` of one component, normalized so that
/// `f(x) = sum_m c_m exp(2 pi i m . x)`.
fn forward_coeffs<T: Real + FftNum>(f: &GridFunction<T>, component: usize) -> Vec<Cplx<T>> {
    let nodes = f.nodes();
    let mut buf: Vec<Cplx<T>> = (0..nodes).map(|i| f.value(i)[component]).collect();
    fft_nd(&mut buf, f.n, f.size, false);
    let scale = T::of(nodes as f64).recip();
    for v in buf.iter_mut() {
        *v = Cplx::new(v.re * scale, v.im * scale);
    }
    buf
}

fn inverse_into<T: Real + FftNum>(
    coeffs: Vec<Cplx<T>>,
    out: &mut GridFunction<T>,
    component: usize,
) {
    let mut buf = coeffs;
    fft_nd(&mut buf, out.n, out.size, true);
    for (i, v) in buf.into_iter().enumerate() {
        out.value_mut(i)[component] = v;
    }
}

fn check_family_match<T: Real>(f: &GridFunction<T>, fam: &LpFamily<T>) -> Result<()> {
    if f.n != fam.n || f.size != fam.size {
        return Err(PhiError::Misaligned(format!(
            "grid {}^{} does not match family grid {}^{}",
            f.size, f.n, fam.size, fam.n
        )));
    }
    Ok(())
}

/// Convolution `phi_j * f` as an exact frequency multiplier (level 0 uses
/// the coarse window).
pub fn band_filter<T: Real + FftNum>(
    f: &GridFunction<T>,
    fam: &LpFamily<T>,
    j: i32,
) -> Result<GridFunction<T>> {
    check_family_match(f, fam)?;
    if j < 0 || j > fam.j_max {
        return Err(PhiError::BadParam(format!("level {j} outside 0..={}", fam.j_max)));
    }
    let mut out = GridFunction::zeros(f.n, f.size, f.m)?;
    for c in 0..f.m {
        let mut coeffs = forward_coeffs(f, c);
        for (idx, v) in coeffs.iter_mut().enumerate() {
            let s = fam.symbol(j, idx);
            *v = Cplx::new(v.re * s, v.im * s);
        }
        inverse_into(coeffs, &mut out, c);
    }
    Ok(out)
}

/// Zeroes every mode outside the resolved band `|xi| <= 2^{j_max}`.
pub fn project_resolved<T: Real + FftNum>(
    f: &GridFunction<T>,
    fam: &LpFamily<T>,
) -> Result<GridFunction<T>> {
    check_family_match(f, fam)?;
    let mut out = GridFunction::zeros(f.n, f.size, f.m)?;
    for c in 0..f.m {
        let mut coeffs = forward_coeffs(f, c);
        for (idx, v) in coeffs.iter_mut().enumerate() {
            if !fam.resolved(idx) {
                *v = Cplx::new(T::zero(), T::zero());
            }
        }
        inverse_into(coeffs, &mut out, c);
    }
    Ok(out)
}

/// Seeded random function with spectrum restricted to the resolved band.
pub fn random_resolved<T: Real + FftNum>(
    fam: &LpFamily<T>,
    m: usize,
    seed: u64,
) -> Result<GridFunction<T>> {
    let f = GridFunction::random(fam.n, fam.size, m, seed)?;
    project_resolved(&f, fam)
}

/// Errors unless the component spectra vanish (to rounding) outside
/// `|xi| <= bound_xi`.
fn check_band<T: Real + FftNum>(f: &GridFunction<T>, bound_xi: T, level: i32) -> Result<()> {
    let two_pi = T::of(2.0) * T::PI();
    let tol = T::of(1e-10);
    for c in 0..f.m {
        let coeffs = forward_coeffs(f, c);
        for (idx, v) in coeffs.iter().enumerate() {
            let r = two_pi * freq_radius::<T>(f.n, f.size, idx);
            if r > bound_xi && v.norm() > tol {
                return Err(PhiError::SpectrumLeak { level });
            }
        }
    }
    Ok(())
}

/// Torus coefficient window for grid transforms: unsigned positions
/// `k in [0, 2^j)^n` at levels `0..=j_max`, all inside the level-0 cube.
pub fn torus_window(n: usize, j_max: i32) -> Result<CubeWindow> {
    Ok(CubeWindow::new(n, 0, j_max, 1, true)?)
}

/// Alias-folds normalized coefficients times a level symbol onto the level's
/// lattice spectrum, returning the `2^{jn}`-point table whose inverse DFT is
/// the filtered function sampled on the lattice.
fn fold_to_lattice<T: Real>(
    coeffs: &[Cplx<T>],
    fam: &LpFamily<T>,
    j: i32,
    component_symbols: &[T],
) -> Vec<Cplx<T>> {
    let lat = 1usize << j;
    let lat_nodes = lat.pow(fam.n as u32);
    let mut folded = vec![Cplx::new(T::zero(), T::zero()); lat_nodes];
    let size = fam.size;
    for (idx, v) in coeffs.iter().enumerate() {
        let s = component_symbols[idx];
        if s == T::zero() {
            continue;
        }
        // Flat index of (m mod 2^j) per axis.
        let mut rest = idx;
        let mut target = 0usize;
        let mut stride = 1usize;
        for _ in 0..fam.n {
            let i = rest % size;
            rest /= size;
            target += (i % lat) * stride;
            stride *= lat;
        }
        folded[target] += Cplx::new(v.re * s, v.im * s);
    }
    folded
}

/// The analysis transform: coefficient `t_Q = |Q|^{1/2} (phi~_j * f)(x_Q)`
/// for every torus cube at levels `0..=j_max`, with `phi~` the
/// conjugate-reflected window (the same symbol table, since symbols are
/// real).
pub fn analyze<T: Real + FftNum>(
    f: &GridFunction<T>,
    fam: &LpFamily<T>,
) -> Result<SequenceField<T>> {
    check_family_match(f, fam)?;
    let window = torus_window(f.n, fam.j_max)?;
    let mut field = SequenceField::new(window, f.m)?;
    let coeffs: Vec<Vec<Cplx<T>>> = (0..f.m).map(|c| forward_coeffs(f, c)).collect();
    for j in 0..=fam.j_max {
        let lat = 1usize << j;
        let lat_nodes = lat.pow(f.n as u32);
        let half_vol = T::of(2.0_f64.powi(-j * f.n as i32)).sqrt();
        // Lattice samples of the filtered component via alias folding: the
        // inverse DFT of the folded spectrum is exact because sampling a
        // trigonometric polynomial only sees frequencies mod the lattice.
        let mut per_component: Vec<Vec<Cplx<T>>> = Vec::with_capacity(f.m);
        for c in 0..f.m {
            let mut folded = fold_to_lattice(&coeffs[c], fam, j, &fam.symbol[j as usize]);
            fft_nd(&mut folded, f.n, lat, true);
            per_component.push(folded);
        }
        for node in 0..lat_nodes {
            let mut val = Vec::with_capacity(f.m);
            for comp in &per_component {
                let v = comp[node];
                val.push(Cplx::new(v.re * half_vol, v.im * half_vol));
            }
            let mut k = Vec::with_capacity(f.n);
            let mut rest = node;
            for _ in 0..f.n {
                k.push((rest % lat) as i64);
                rest /= lat;
            }
            field.insert(CubeIndex::new(j, &k)?, val)?;
        }
    }
    Ok(field)
}

/// The synthesis transform: `sum_Q t_Q psi_Q` accumulated spectrally, one
/// small DFT per level plus a single inverse transform.
pub fn synthesize<T: Real + FftNum>(
    t: &SequenceField<T>,
    fam: &LpFamily<T>,
) -> Result<GridFunction<T>> {
    if t.window().n() != fam.n {
        return Err(PhiError::Misaligned("field dimension differs from family".into()));
    }
    let m = t.m();
    let size = fam.size;
    let nodes = size.pow(fam.n as u32);
    // Group entries by level, wrapping positions onto the torus lattice.
    let mut levels: BTreeMap<i32, Vec<Vec<Cplx<T>>>> = BTreeMap::new();
    for (q, val) in t.iter() {
        let j = q.j();
        if j < 0 || j > fam.j_max {
            return Err(PhiError::Misaligned(format!(
                "level {j} outside the family range 0..={}",
                fam.j_max
            )));
        }
        let lat = 1i64 << j;
        let lat_nodes = (lat as usize).pow(fam.n as u32);
        let slot = levels.entry(j).or_insert_with(|| {
            vec![vec![Cplx::new(T::zero(), T::zero()); lat_nodes]; m]
        });
        let mut node = 0usize;
        let mut stride = 1usize;
        let mut fresh = false;
        for d in 0..fam.n {
            let k = q.k()[d].rem_euclid(lat);
            node += (k as usize) * stride;
            stride *= lat as usize;
        }
        for (c, comp) in slot.iter_mut().enumerate() {
            if comp[node] != Cplx::new(T::zero(), T::zero()) {
                fresh = true;
            }
            comp[node] = val[c];
        }
        if fresh {
            return Err(PhiError::Misaligned(
                "two coefficients wrap to the same torus position".into(),
            ));
        }
    }
    let mut spectrum = vec![vec![Cplx::new(T::zero(), T::zero()); nodes]; m];
    for (j, lattices) in levels {
        let lat = 1usize << j;
        let half_vol = T::of(2.0_f64.powi(-j * fam.n as i32)).sqrt();
        for (c, lattice) in lattices.into_iter().enumerate() {
            let mut small = lattice;
            fft_nd(&mut small, fam.n, lat, false);
            // Contribution of the level to mode m: |Q|^{1/2} psi^(2^-j xi)
            // times the lattice DFT at m mod 2^j.
            for idx in 0..nodes {
                let s = fam.symbol(j, idx) * half_vol;
                if s == T::zero() {
                    continue;
                }
                let mut rest = idx;
                let mut src = 0usize;
                let mut stride = 1usize;
                for _ in 0..fam.n {
                    let i = rest % size;
                    rest /= size;
                    src += (i % lat) * stride;
                    stride *= lat;
                }
                let v = small[src];
                spectrum[c][idx] += Cplx::new(v.re * s, v.im * s);
            }
        }
    }
    let mut out = GridFunction::zeros(fam.n, size, m)?;
    for (c, coeffs) in spectrum.into_iter().enumerate() {
        inverse_into(coeffs, &mut out, c);
    }
    Ok(out)
}

/// Relative grid `l^2` error of the composition `synthesize(analyze(f))`
/// against `f`; zero to rounding for resolved-band input.
pub fn calderon_check<T: Real + FftNum>(f: &GridFunction<T>, fam: &LpFamily<T>) -> Result<T> {
    let t = analyze(f, fam)?;
    let back = synthesize(&t, fam)?;
    let denom = f.l2_norm();
    if denom == T::zero() {
        return Ok(T::zero());
    }
    let mut diff = back;
    for i in 0..diff.nodes() {
        for c in 0..diff.m() {
            diff.value_mut(i)[c] -= f.value(i)[c];
        }
    }
    Ok(diff.l2_norm() / denom)
}

/// Absolute defect of `<T_psi t, g> = <t, S_phi g>` for one pair.
pub fn adjointness_defect<T: Real + FftNum>(
    t: &SequenceField<T>,
    g: &GridFunction<T>,
    fam: &LpFamily<T>,
) -> Result<T> {
    let lhs_fun = synthesize(t, fam)?;
    if lhs_fun.n != g.n || lhs_fun.size != g.size || lhs_fun.m != g.m {
        return Err(PhiError::Misaligned("grid shapes differ".into()));
    }
    let cell = T::of(g.nodes() as f64).recip();
    let mut lhs = Cplx::new(T::zero(), T::zero());
    for i in 0..g.nodes() {
        for c in 0..g.m {
            lhs += lhs_fun.value(i)[c] * g.value(i)[c].conj();
        }
    }
    lhs = Cplx::new(lhs.re * cell, lhs.im * cell);
    let sg = analyze(g, fam)?;
    let mut rhs = Cplx::new(T::zero(), T::zero());
    for (q, val) in t.iter() {
        if let Some(gval) = sg.get(q) {
            for c in 0..g.m {
                rhs += val[c] * gval[c].conj();
            }
        }
    }
    Ok((lhs - rhs).norm())
}

/// Smooth reconstruction symbol for the shifted-lattice sampling identity:
/// 1 on `|xi| <= alpha`, support inside `|xi| <= pi`, vanishing at the edge.
fn gamma_hat<T: Real>(r: T, alpha: T) -> T {
    let pi = T::PI();
    if r <= alpha {
        return T::one();
    }
    if r >= pi {
        return T::zero();
    }
    T::one() - smooth_step((r - alpha) / (pi - alpha))
}

/// Verifies the shifted-lattice sampling identity at level `j`: every grid
/// node of `f` is reconstructed from samples at `x_R + y` over the level-`j`
/// lattice. Returns the worst node error.
pub fn lattice_sampling_check<T: Real + FftNum>(
    f: &GridFunction<T>,
    fam: &LpFamily<T>,
    j: i32,
    alpha: T,
    y: &[T],
) -> Result<T> {
    check_family_match(f, fam)?;
    let log2_size = fam.size.trailing_zeros() as i32;
    if j < 0 || j > log2_size {
        return Err(PhiError::BadParam(format!("level {j} outside 0..={log2_size}")));
    }
    if !(alpha > T::zero()) || alpha >= T::PI() {
        return Err(PhiError::BadParam("alpha must lie in (0, pi)".into()));
    }
    if y.len() != f.n {
        return Err(PhiError::BadParam("offset dimension mismatch".into()));
    }
    let band = alpha * T::of(2.0_f64.powi(j));
    check_band(f, band, j)?;
    let two_pi = T::of(2.0) * T::PI();
    let lat = 1usize << j;
    let lat_nodes = lat.pow(f.n as u32);
    let scale = T::of(2.0_f64.powi(-j));
    let nodes = f.nodes();
    let inv_lat_vol = T::of(2.0_f64.powi(-j * f.n as i32));
    let mut worst = T::zero();
    for c in 0..f.m {
        let coeffs = forward_coeffs(f, c);
        // Modes with nonzero coefficient, for direct off-grid evaluation.
        let active: Vec<(Vec<i64>, Cplx<T>)> = coeffs
            .iter()
            .enumerate()
            .filter(|(_, v)| v.norm() > T::zero())
            .map(|(idx, v)| (freq_vector(f.n, f.size, idx), *v))
            .collect();
        // Shifted window table gamma_j(x - y) on the grid.
        let mut gcoef: Vec<Cplx<T>> = (0..nodes)
            .map(|idx| {
                let g = gamma_hat(scale * two_pi * freq_radius::<T>(f.n, f.size, idx), alpha);
                if g == T::zero() {
                    return Cplx::new(T::zero(), T::zero());
                }
                let mv = freq_vector(f.n, f.size, idx);
                let phase: T = mv
                    .iter()
                    .zip(y.iter())
                    .map(|(&mi, &yi)| T::of(mi as f64) * yi)
                    .fold(T::zero(), |a, b| a + b);
                let ang = -two_pi * phase;
                Cplx::new(g * ang.cos(), g * ang.sin())
            })
            .collect();
        fft_nd(&mut gcoef, f.n, f.size, true);
        // Samples f(x_R + y) evaluated spectrally.
        let samples: Vec<Cplx<T>> = (0..lat_nodes)
            .map(|node| {
                let mut rest = node;
                let mut pos = Vec::with_capacity(f.n);
                for _ in 0..f.n {
                    let k = rest % lat;
                    rest /= lat;
                    pos.push(T::of(k as f64) * scale);
                }
                let mut acc = Cplx::new(T::zero(), T::zero());
                for (mv, cv) in &active {
                    let phase: T = mv
                        .iter()
                        .zip(pos.iter().zip(y.iter()))
                        .map(|(&mi, (&xi, &yi))| T::of(mi as f64) * (xi + yi))
                        .fold(T::zero(), |a, b| a + b);
                    let ang = two_pi * phase;
                    acc += cv * Cplx::new(ang.cos(), ang.sin());
                }
                acc
            })
            .collect();
        // Reconstruction on the grid: a lattice-spaced cyclic convolution.
        let step = f.size / lat;
        let recon: Vec<Cplx<T>> = (0..nodes)
            .into_par_iter()
            .map(|gi| {
                let mut gpos = Vec::with_capacity(f.n);
                let mut rest = gi;
                for _ in 0..f.n {
                    gpos.push(rest % f.size);
                    rest /= f.size;
                }
                let mut acc = Cplx::new(T::zero(), T::zero());
                for (node, s) in samples.iter().enumerate() {
                    let mut rest = node;
                    let mut tidx = 0usize;
                    let mut stride = 1usize;
                    for d in 0..f.n {
                        let k = rest % lat;
                        rest /= lat;
                        let off = (gpos[d] + f.size - (k * step) % f.size) % f.size;
                        tidx += off * stride;
                        stride *= f.size;
                    }
                    acc += s * gcoef[tidx];
                }
                Cplx::new(acc.re * inv_lat_vol, acc.im * inv_lat_vol)
            })
            .collect();
        for (i, r) in recon.iter().enumerate() {
            worst = worst.max((r - f.value(i)[c]).norm());
        }
    }
    Ok(worst)
}

/// Where the generic-sampling points sit inside their fine cubes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SamplePoints {
    Centers,
    Corners,
    Random(u64),
}

/// Outcome of the generic-sampling reconstruction.
pub struct GenericSamplingReport<T> {
    pub reconstruction: GridFunction<T>,
    /// Measured sup-norm of the residual operator on the grid.
    pub contraction: T,
    /// Neumann terms summed before the tail dropped below the cutoff.
    pub neumann_terms: usize,
}

/// Reconstructs a level-`j` band-limited function from one sample per cube
/// of the lattice `depth` levels finer, inverting the residual operator by
/// Neumann summation. The sample points are arbitrary inside their cubes;
/// the measured contraction norm decays like `2^{-depth}`.
pub fn generic_sampling_reconstruct<T: Real + FftNum>(
    f: &GridFunction<T>,
    fam: &LpFamily<T>,
    j: i32,
    depth: u32,
    decay_m: T,
    points: SamplePoints,
) -> Result<GenericSamplingReport<T>> {
    check_family_match(f, fam)?;
    let log2_size = fam.size.trailing_zeros() as i32;
    if j < 0 || j + (depth as i32) > log2_size || j + 1 > log2_size {
        return Err(PhiError::Unresolved { size: fam.size, j_max: j + depth as i32 });
    }
    if depth == 0 {
        return Err(PhiError::BadParam("depth must be at least 1".into()));
    }
    if !(decay_m > T::of(f.n as f64)) {
        return Err(PhiError::BadParam(format!(
            "decay exponent must exceed the dimension {}",
            f.n
        )));
    }
    let alpha = T::of(2.0);
    let band = alpha * T::of(2.0_f64.powi(j));
    check_band(f, band, j)?;

    let n = f.n;
    let size = f.size;
    let nodes = f.nodes();
    let two_pi = T::of(2.0) * T::PI();
    let jf = j + depth as i32;
    let fine = 1usize << jf;
    let fine_nodes = fine.pow(n as u32);
    let fine_side = T::of(2.0_f64.powi(-jf));
    let scale = T::of(2.0_f64.powi(-j));

    // Window modes: gamma_j on the grid frequency lattice.
    let gcoef: Vec<T> = (0..nodes)
        .map(|idx| gamma_hat(scale * two_pi * freq_radius::<T>(n, size, idx), alpha))
        .collect();
    let active: Vec<(usize, Vec<i64>, T)> = gcoef
        .iter()
        .enumerate()
        .filter(|(_, &g)| g != T::zero())
        .map(|(idx, &g)| (idx, freq_vector(n, size, idx), g))
        .collect();

    // Sample points, one per fine cube.
    let mut rng = ChaCha12Rng::seed_from_u64(match points {
        SamplePoints::Random(seed) => seed,
        _ => 0,
    });
    let fine_pos = |node: usize| -> Vec<T> {
        let mut rest = node;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(T::of((rest % fine) as f64) * fine_side);
            rest /= fine;
        }
        out
    };
    let sample_pts: Vec<Vec<T>> = (0..fine_nodes)
        .map(|node| {
            let corner = fine_pos(node);
            match points {
                SamplePoints::Corners => corner,
                SamplePoints::Centers => {
                    corner.into_iter().map(|v| v + fine_side * T::of(0.5)).collect()
                }
                SamplePoints::Random(_) => corner
                    .into_iter()
                    .map(|v| v + fine_side * T::of(rng.gen_range(0.0..1.0)))
                    .collect(),
            }
        })
        .collect();

    // Closed-form cube integrals: I_R(x) = integral_R gamma_j(x - y) dy,
    // assembled spectrally with exact per-mode box factors.
    let box_factor = |mv: &[i64], corner: &[T]| -> Cplx<T> {
        let mut acc = Cplx::new(T::one(), T::zero());
        for d in 0..n {
            let mf = T::of(mv[d] as f64);
            let fac = if mv[d] == 0 {
                Cplx::new(fine_side, T::zero())
            } else {
                // integral_a^{a+h} e^{-2 pi i m y} dy
                let w = two_pi * mf;
                let a0 = -w * corner[d];
                let a1 = -w * (corner[d] + fine_side);
                let e0 = Cplx::new(a0.cos(), a0.sin());
                let e1 = Cplx::new(a1.cos(), a1.sin());
                (e0 - e1) / Cplx::new(T::zero(), w)
            };
            acc *= fac;
        }
        acc
    };
    // i_mat[x][R]: grid x fine matrix of cube integrals.
    let i_mat: Vec<Vec<Cplx<T>>> = (0..nodes)
        .into_par_iter()
        .map(|gi| {
            let mut rest = gi;
            let mut x = Vec::with_capacity(n);
            for _ in 0..n {
                x.push(T::of((rest % size) as f64) / T::of(size as f64));
                rest /= size;
            }
            (0..fine_nodes)
                .map(|node| {
                    let corner = fine_pos(node);
                    let mut acc = Cplx::new(T::zero(), T::zero());
                    for (_, mv, g) in &active {
                        let phase: T = mv
                            .iter()
                            .zip(x.iter())
                            .map(|(&mi, &xi)| T::of(mi as f64) * xi)
                            .fold(T::zero(), |a, b| a + b);
                        let ang = two_pi * phase;
                        acc += Cplx::new(*g * ang.cos(), *g * ang.sin()) * box_factor(mv, &corner);
                    }
                    acc
                })
                .collect()
        })
        .collect();
    // b_mat[R][z]: window evaluated at y_R - z for grid nodes z.
    let b_mat: Vec<Vec<Cplx<T>>> = (0..fine_nodes)
        .into_par_iter()
        .map(|node| {
            let yr = &sample_pts[node];
            (0..nodes)
                .map(|zi| {
                    let mut rest = zi;
                    let mut acc = Cplx::new(T::zero(), T::zero());
                    let mut z = Vec::with_capacity(n);
                    for _ in 0..n {
                        z.push(T::of((rest % size) as f64) / T::of(size as f64));
                        rest /= size;
                    }
                    for (_, mv, g) in &active {
                        let phase: T = mv
                            .iter()
                            .zip(yr.iter().zip(z.iter()))
                            .map(|(&mi, (&yi, &zi))| T::of(mi as f64) * (yi - zi))
                            .fold(T::zero(), |a, b| a + b);
                        let ang = two_pi * phase;
                        acc += Cplx::new(*g * ang.cos(), *g * ang.sin());
                    }
                    acc
                })
                .collect()
        })
        .collect();
    // Residual kernel rho(x, z) = (gamma_j * gamma_j)(x - z) - sum_R I_R(x)
    // gamma_j(y_R - z); the first term is the full-torus part of the split.
    let gg_table: Vec<Cplx<T>> = {
        let mut sq: Vec<Cplx<T>> = gcoef.iter().map(|&g| Cplx::new(g * g, T::zero())).collect();
        fft_nd(&mut sq, n, size, true);
        sq
    };
    let rho: Vec<Vec<Cplx<T>>> = (0..nodes)
        .into_par_iter()
        .map(|xi| {
            (0..nodes)
                .map(|zi| {
                    let mut diff = 0usize;
                    let mut stride = 1usize;
                    let mut rx = xi;
                    let mut rz = zi;
                    for _ in 0..n {
                        let a = rx % size;
                        let b = rz % size;
                        rx /= size;
                        rz /= size;
                        diff += ((a + size - b) % size) * stride;
                        stride *= size;
                    }
                    let mut v = gg_table[diff];
                    for (node, row) in b_mat.iter().enumerate() {
                        v -= i_mat[xi][node] * row[zi];
                    }
                    v
                })
                .collect()
        })
        .collect();
    let cell = T::of(nodes as f64).recip();
    let contraction = rho
        .iter()
        .map(|row| row.iter().map(|v| v.norm()).fold(T::zero(), |a, b| a + b) * cell)
        .fold(T::zero(), |a, b| a.max(b));
    if !(contraction < T::one()) {
        return Err(PhiError::NotContractive { norm: contraction.as_f64() });
    }

    let mut out = GridFunction::zeros(n, size, f.m)?;
    let mut neumann_terms = 0usize;
    for c in 0..f.m {
        let coeffs = forward_coeffs(f, c);
        let fmodes: Vec<(Vec<i64>, Cplx<T>)> = coeffs
            .iter()
            .enumerate()
            .filter(|(_, v)| v.norm() > T::zero())
            .map(|(idx, v)| (freq_vector(n, size, idx), *v))
            .collect();
        let fvals: Vec<Cplx<T>> = sample_pts
            .par_iter()
            .map(|pt| {
                let mut acc = Cplx::new(T::zero(), T::zero());
                for (mv, cv) in &fmodes {
                    let phase: T = mv
                        .iter()
                        .zip(pt.iter())
                        .map(|(&mi, &xi)| T::of(mi as f64) * xi)
                        .fold(T::zero(), |a, b| a + b);
                    let ang = two_pi * phase;
                    acc += cv * Cplx::new(ang.cos(), ang.sin());
                }
                acc
            })
            .collect();
        // First term of the split, then Neumann inversion of (I - R).
        let t0: Vec<Cplx<T>> = i_mat
            .par_iter()
            .map(|row| {
                let mut acc = Cplx::new(T::zero(), T::zero());
                for (node, iv) in row.iter().enumerate() {
                    acc += iv * fvals[node];
                }
                acc
            })
            .collect();
        let sup0 = t0.iter().map(|v| v.norm()).fold(T::zero(), |a, b| a.max(b));
        let cutoff = T::of(1e-12) * sup0.max(T::one());
        let mut total = t0.clone();
        let mut term = t0;
        for _ in 0..1000 {
            let next: Vec<Cplx<T>> = rho
                .par_iter()
                .map(|row| {
                    let mut acc = Cplx::new(T::zero(), T::zero());
                    for (zi, rv) in row.iter().enumerate() {
                        acc += rv * term[zi];
                    }
                    Cplx::new(acc.re * cell, acc.im * cell)
                })
                .collect();
            term = next;
            neumann_terms += 1;
            let sup = term.iter().map(|v| v.norm()).fold(T::zero(), |a, b| a.max(b));
            for (tot, tv) in total.iter_mut().zip(term.iter()) {
                *tot += *tv;
            }
            if sup < cutoff {
                break;
            }
        }
        for (i, v) in total.into_iter().enumerate() {
            out.value_mut(i)[c] = v;
        }
    }
    Ok(GenericSamplingReport { reconstruction: out, contraction, neumann_terms })
}

/// Torus representative of a grid coordinate in `[-1/2, 1/2)`.
fn signed_rep<T: Real>(x: T) -> T {
    if x >= T::of(0.5) {
        x - T::one()
    } else {
        x
    }
}

/// Reducing operator of the level-`j` torus cube holding `x_signed`, from
/// the family's weight. Levels `j >= 1` are plain dyadic cubes of the
/// centered representative; the level-0 cube is the whole torus, reduced
/// over the signed box (the quadrature splits at the singular hyperplane).
fn torus_operator<T: Real>(
    fam: &ReducingFamily<T>,
    j: i32,
    x_signed: &[T],
    n: usize,
) -> Result<Arc<HermitianPd<T>>> {
    if j >= 1 {
        let mut k = Vec::with_capacity(n);
        for &xi in x_signed {
            k.push((xi * T::of(2.0_f64.powi(j))).floor().as_f64() as i64);
        }
        return Ok(fam.operator(&CubeIndex::new(j, &k)?)?);
    }
    let m = fam.weight().m();
    let p = fam.p();
    let dom = BoxDomain::new(vec![T::of(-0.5); n], vec![T::of(0.5); n])?;
    if m == 1 {
        // Exact scalar reduction: the p-th root of the averaged weight.
        let samples = fam.weight().sample_power(T::one(), &dom, fam.quad())?;
        let one = [Cplx::new(T::one(), T::zero())];
        let prepared = samples.prepare_vector(&one);
        let mut acc = T::zero();
        for i in 0..samples.len() {
            acc = acc + samples.node_weight(i) * samples.apply_norm(i, &prepared);
        }
        let v = (acc / samples.measure()).powf(p.recip());
        return Ok(Arc::new(HermitianPd::scalar(v)?));
    }
    match fam.method() {
        ReducingMethod::Gram2 => {
            let samples = fam.weight().sample_power(T::of(2.0) / p, &dom, fam.quad())?;
            Ok(Arc::new(gram_sqrt(&samples)?))
        }
        ReducingMethod::John => Err(PhiError::BadParam(
            "averaged function norms with m > 1 need the Gram-square method".into(),
        )),
    }
}

/// Function-space norm of the filtered level stack: the `LA^tau_{p,q}` norm
/// of `{2^{js} |weighted (phi_j * f)|}_{j=0..j_max}` with integrals as grid
/// sums over cell centers and the supremum over all torus cubes `P`.
///
/// Weight matrices are evaluated at the centered torus representative of
/// each node; cell centers avoid the weight's singular point. The averaged
/// variant applies the reducing operator of the level-`j` cube containing
/// the node.
pub fn function_norm<T: Real + FftNum>(
    f: &GridFunction<T>,
    fam: &LpFamily<T>,
    sp: &SpaceParams<T>,
    weighting: &Weighting<'_, T>,
) -> Result<T> {
    check_family_match(f, fam)?;
    let n = f.n;
    let size = f.size;
    let nodes = f.nodes();
    let m = f.m;
    let levels = (fam.j_max + 1) as usize;
    let two_pi = T::of(2.0) * T::PI();
    // Filtered stack at cell centers: one forward transform, then a phased
    // inverse per level (the half-cell shift is exact for band content).
    let mut stack: Vec<Vec<Vec<Cplx<T>>>> = vec![Vec::with_capacity(levels); m];
    for c in 0..m {
        let coeffs = forward_coeffs(f, c);
        for j in 0..=fam.j_max {
            let shifted: Vec<Cplx<T>> = coeffs
                .iter()
                .enumerate()
                .map(|(idx, v)| {
                    let s = fam.symbol(j, idx);
                    if s == T::zero() {
                        return Cplx::new(T::zero(), T::zero());
                    }
                    let mv = freq_vector(n, size, idx);
                    let phase: T = mv
                        .iter()
                        .map(|&mi| T::of(mi as f64) * T::of(0.5) / T::of(size as f64))
                        .fold(T::zero(), |a, b| a + b);
                    let ang = two_pi * phase;
                    v * Cplx::new(s * ang.cos(), s * ang.sin())
                })
                .collect();
            let mut buf = shifted;
            fft_nd(&mut buf, n, size, true);
            stack[c].push(buf);
        }
    }
    // Per-node positions: unsigned for cube membership, signed for weights.
    let positions: Vec<(Vec<T>, Vec<T>)> = (0..nodes)
        .map(|i| {
            let mut rest = i;
            let mut unsigned = Vec::with_capacity(n);
            let mut signed = Vec::with_capacity(n);
            for _ in 0..n {
                let ix = rest % size;
                rest /= size;
                let x = (T::of(ix as f64) + T::of(0.5)) / T::of(size as f64);
                unsigned.push(x);
                signed.push(signed_rep(x));
            }
            (unsigned, signed)
        })
        .collect();
    // Weighted magnitudes per level and node, including the 2^{js} factor.
    let mut mag: Vec<Vec<T>> = Vec::with_capacity(levels);
    for j in 0..=fam.j_max {
        let factor = (T::of(j as f64) * sp.s).exp2();
        let row: Vec<T> = (0..nodes)
            .into_par_iter()
            .map(|i| -> Result<T> {
                let v: Vec<Cplx<T>> = (0..m).map(|c| stack[c][j as usize][i]).collect();
                let weighted = match weighting {
                    Weighting::Unweighted => vec_norm(&v),
                    Weighting::Pointwise(w, _) => {
                        let a = w.eval(&positions[i].1)?.power(sp.p.recip());
                        vec_norm(&a.matrix().mul_vec(&v))
                    }
                    Weighting::Averaged(red) => {
                        let a = torus_operator(red, j, &positions[i].1, n)?;
                        vec_norm(&a.matrix().mul_vec(&v))
                    }
                };
                Ok(factor * weighted)
            })
            .collect::<Result<Vec<T>>>()?;
        mag.push(row);
    }
    // Supremum over torus cubes P. For tau = 0 the level-0 cube (the whole
    // torus) dominates: it has the weakest cutoff and the largest region.
    let jp_hi = if sp.tau == T::zero() { 0 } else { fam.j_max };
    let cell = T::of(nodes as f64).recip();
    let mut best = T::zero();
    for jp in 0..=jp_hi {
        let lat = 1usize << jp;
        let p_count = lat.pow(n as u32);
        let prefactor = (T::of((jp * n as i32) as f64) * sp.tau).exp2();
        let p_of_node = |i: usize| -> usize {
            let mut acc = 0usize;
            let mut stride = 1usize;
            for d in 0..n {
                let kd = (positions[i].0[d] * T::of(lat as f64)).floor().as_f64() as usize;
                acc += kd.min(lat - 1) * stride;
                stride *= lat;
            }
            acc
        };
        match sp.family {
            Family::B => {
                let mut masses: Vec<BTreeMap<i32, T>> = vec![BTreeMap::new(); p_count];
                for j in jp..=fam.j_max {
                    let row = &mag[j as usize];
                    for i in 0..nodes {
                        let v = row[i];
                        if v == T::zero() {
                            continue;
                        }
                        let slot =
                            masses[p_of_node(i)].entry(j).or_insert_with(T::zero);
                        *slot = *slot + v.powf(sp.p) * cell;
                    }
                }
                for per_p in &masses {
                    let la = combine_levels(per_p.values().copied(), sp);
                    best = best.max(prefactor * la);
                }
            }
            Family::F => {
                let mut masses: Vec<T> = vec![T::zero(); p_count];
                for i in 0..nodes {
                    let mut acc = T::zero();
                    for j in jp..=fam.j_max {
                        let v = mag[j as usize][i];
                        if v == T::zero() {
                            continue;
                        }
                        match sp.q {
                            Exponent::Finite(qv) => acc = acc + v.powf(qv),
                            Exponent::Infinite => acc = acc.max(v),
                        }
                    }
                    if acc == T::zero() {
                        continue;
                    }
                    let stacked = match sp.q {
                        Exponent::Finite(qv) => acc.powf(sp.p / qv),
                        Exponent::Infinite => acc.powf(sp.p),
                    };
                    masses[p_of_node(i)] = masses[p_of_node(i)] + stacked * cell;
                }
                for &mass in &masses {
                    best = best.max(prefactor * mass.powf(sp.p.recip()));
                }
            }
        }
    }
    Ok(best)
}

/// Uniform bound surrogate for the filtered levels of a unit-norm function:
/// the largest sup-norm among `phi_j * f` over the stack.
pub fn level_sup_bound<T: Real + FftNum>(
    f: &GridFunction<T>,
    fam: &LpFamily<T>,
) -> Result<T> {
    let mut worst = T::zero();
    for j in 0..=fam.j_max {
        let g = band_filter(f, fam, j)?;
        for i in 0..g.nodes() {
            worst = worst.max(vec_norm(g.value(i)));
        }
    }
    Ok(worst)
}
