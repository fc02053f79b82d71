//! Almost-diagonal kernels on dyadic coefficient fields.
//!
//! The reference kernel is
//!
//! ```text
//! b(Q, R) = [1 + |x_Q - x_R| / (l(Q) v l(R))]^{-D} * { (l(Q)/l(R))^E  if l(Q) <= l(R)
//!                                                    { (l(R)/l(Q))^F  if l(R) <  l(Q)
//! ```
//!
//! with `x_Q` the lower corner and `l(Q)` the side length. A matrix dominated
//! entrywise by a constant multiple of `b` is bounded on the weighted
//! sequence spaces of [`crate::seqspaces`] once `(D, E, F)` clear the
//! thresholds computed by [`thresholds`], which combine the smoothness
//! parameters with the weight's lower and upper dimension exponents.
//!
//! Boundedness and its failure cannot be certified on a finite lattice, so
//! the probes here report growth behavior instead: [`boundedness_probe`]
//! tracks empirical norm ratios across a widening window schedule, and
//! [`sharpness_probe`] evaluates the extremal partial sums whose divergence
//! witnesses a violated threshold, classifying each by its increment decay.

use crate::dyadic::{CubeIndex, CubeWindow, DyadicError};
use crate::scalar::Real;
use crate::seqspaces::{two_pow, Criticality, SeqError, SequenceField, SpaceParams, Weighting};
use crate::seqspaces::seq_norm_over;
use crate::Cplx;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Errors from kernel evaluation and probes.
#[derive(Debug, Error)]
pub enum AdopError {
    /// Incompatible dimensions or windows.
    #[error("mismatch: {0}")]
    Mismatch(String),
    /// Parameter outside its admissible domain.
    #[error("bad parameter: {0}")]
    BadParam(String),
    /// Sequence-space failure.
    #[error(transparent)]
    Seq(#[from] SeqError),
    /// Lattice failure.
    #[error(transparent)]
    Dyadic(#[from] DyadicError),
}

type Result<V> = std::result::Result<V, AdopError>;

/// Exponent triple of the reference almost-diagonal kernel.
///
/// Any real triple is representable; whether it clears the boundedness
/// thresholds is a separate check ([`admissible`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdKernel<T> {
    /// Decay rate in the normalized distance factor.
    pub d: T,
    /// Scale exponent when the target cube is the finer one.
    pub e: T,
    /// Scale exponent when the source cube is the finer one.
    pub f: T,
}

impl<T: Real> AdKernel<T> {
    /// Kernel with the `E` and `F` roles swapped; evaluates to the transpose:
    /// `swapped.eval(Q, R) == self.eval(R, Q)`.
    pub fn transposed(&self) -> Self {
        AdKernel {
            d: self.d,
            e: self.f,
            f: self.e,
        }
    }
}

/// Evaluates the reference kernel at a cube pair.
pub fn kernel_eval<T: Real>(k: &AdKernel<T>, q: &CubeIndex, r: &CubeIndex) -> Result<T> {
    if q.n() != r.n() {
        return Err(AdopError::Mismatch(format!(
            "cube dimensions {} vs {}",
            q.n(),
            r.n()
        )));
    }
    Ok(kernel_value(k, q, r))
}

fn kernel_value<T: Real>(k: &AdKernel<T>, q: &CubeIndex, r: &CubeIndex) -> T {
    let xq = q.lower_corner::<T>();
    let xr = r.lower_corner::<T>();
    let mut dist2 = T::zero();
    for (a, b) in xq.iter().zip(xr.iter()) {
        let d = *a - *b;
        dist2 = dist2 + d * d;
    }
    let coarse_side = two_pow(-q.j().min(r.j()), T::one());
    let base = T::one() + dist2.sqrt() / coarse_side;
    let scale = if q.j() >= r.j() {
        // l(Q) <= l(R): ratio l(Q)/l(R) = 2^{-(jq - jr)}.
        two_pow(r.j() - q.j(), k.e)
    } else {
        two_pow(q.j() - r.j(), k.f)
    };
    base.powf(-k.d) * scale
}

/// Applies the kernel matrix to a finitely supported field: the output entry
/// at every window cube `Q` is the absolutely convergent sum
/// `sum_R b(Q, R) t_R` over the support of `t`. Entries that vanish exactly
/// are dropped.
pub fn apply<T: Real>(k: &AdKernel<T>, t: &SequenceField<T>) -> Result<SequenceField<T>> {
    let window = *t.window();
    let m = t.m();
    let support: Vec<(CubeIndex, Vec<Cplx<T>>)> =
        t.iter().map(|(q, v)| (*q, v.to_vec())).collect();
    let rows: Vec<(CubeIndex, Vec<Cplx<T>>)> = window
        .cubes()
        .into_par_iter()
        .filter_map(|q| {
            let mut acc = vec![Cplx::new(T::zero(), T::zero()); m];
            for (r, v) in &support {
                let b = kernel_value(k, &q, r);
                for (a, x) in acc.iter_mut().zip(v.iter()) {
                    *a = *a + *x * b;
                }
            }
            if acc.iter().all(|c| c.norm_sqr() == T::zero()) {
                None
            } else {
                Some((q, acc))
            }
        })
        .collect();
    let mut out = SequenceField::new(window, m)?;
    for (q, v) in rows {
        out.insert(q, v)?;
    }
    Ok(out)
}

/// Strict lower bounds on `(D, E, F)` for boundedness on a weighted space
/// whose weight has dimension exponents `(d1, d2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds<T> {
    /// Bound on the distance decay `D`.
    pub d: T,
    /// Bound on the fine-target scale exponent `E`.
    pub e: T,
    /// Bound on the fine-source scale exponent `F`.
    pub f: T,
}

/// Computes the boundedness thresholds for the given space parameters and
/// weight dimension exponents: `D* = J~`, `E* = n/2 + s~`,
/// `F* = J~ - n/2 - s~`.
pub fn thresholds<T: Real>(
    sp: &SpaceParams<T>,
    n: usize,
    d1: T,
    d2: T,
) -> Result<Thresholds<T>> {
    if n == 0 {
        return Err(AdopError::BadParam("dimension must be positive".into()));
    }
    if !(d1 >= T::zero() && d1 < T::of(n as f64)) || !(d2 >= T::zero()) {
        return Err(AdopError::BadParam(format!(
            "dimension exponents d1 in [0, n), d2 >= 0 required, got ({d1:?}, {d2:?})"
        )));
    }
    let jt = sp.j_tilde(n, d1, d2);
    let st = sp.s_tilde(n, d1);
    let half_n = T::of(n as f64) / T::of(2.0);
    Ok(Thresholds {
        d: jt,
        e: half_n + st,
        f: jt - half_n - st,
    })
}

/// Whether the kernel strictly clears every threshold.
pub fn admissible<T: Real>(k: &AdKernel<T>, th: &Thresholds<T>) -> bool {
    k.d > th.d && k.e > th.e && k.f > th.f
}

/// Kernel sitting a fixed margin above the thresholds.
pub fn margin_kernel<T: Real>(th: &Thresholds<T>, margin: T) -> AdKernel<T> {
    AdKernel {
        d: th.d + margin,
        e: th.e + margin,
        f: th.f + margin,
    }
}

/// Maximum norm-ratio growth per window doubling that still counts as
/// bounded-consistent.
pub const GROWTH_TOL: f64 = 1.05;

/// One window of the boundedness probe.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundednessRow<T> {
    /// Number of cubes in the window.
    pub window_cubes: usize,
    /// Worst ratio `|B t| / |t|` over the batch on this window.
    pub ratio: T,
}

/// Empirical boundedness report over a widening window schedule.
#[derive(Debug, Clone, Serialize)]
pub struct BoundednessReport<T> {
    /// One row per window, in schedule order.
    pub rows: Vec<BoundednessRow<T>>,
    /// Largest consecutive ratio quotient.
    pub max_step_growth: T,
    /// Whether every step stayed within [`GROWTH_TOL`].
    pub bounded_consistent: bool,
}

/// Measures the worst empirical norm ratio of the kernel over a batch of
/// fields, re-homed onto each window of a growing schedule. Every window
/// must contain the support of every field. Fields with zero norm are
/// skipped; at least one must survive.
pub fn boundedness_probe<T: Real>(
    k: &AdKernel<T>,
    sp: &SpaceParams<T>,
    weighting: &Weighting<'_, T>,
    fields: &[SequenceField<T>],
    schedule: &[CubeWindow],
) -> Result<BoundednessReport<T>> {
    if schedule.is_empty() || fields.is_empty() {
        return Err(AdopError::BadParam(
            "need at least one window and one field".into(),
        ));
    }
    let mut rows = Vec::with_capacity(schedule.len());
    for window in schedule {
        let mut worst = T::zero();
        let mut seen = false;
        for t in fields {
            let mut homed = SequenceField::new(*window, t.m())?;
            for (q, v) in t.iter() {
                homed.insert(*q, v.to_vec())?;
            }
            let denom = seq_norm_over(&homed, sp, weighting, window)?;
            if denom == T::zero() {
                continue;
            }
            let image = apply(k, &homed)?;
            let numer = seq_norm_over(&image, sp, weighting, window)?;
            let ratio = numer / denom;
            if ratio > worst {
                worst = ratio;
            }
            seen = true;
        }
        if !seen {
            return Err(AdopError::BadParam("all probe fields have zero norm".into()));
        }
        rows.push(BoundednessRow {
            window_cubes: window.len(),
            ratio: worst,
        });
    }
    let mut max_growth = T::one();
    for pair in rows.windows(2) {
        let g = pair[1].ratio / pair[0].ratio;
        if g > max_growth {
            max_growth = g;
        }
    }
    Ok(BoundednessReport {
        rows,
        max_step_growth: max_growth,
        bounded_consistent: max_growth <= T::of(GROWTH_TOL),
    })
}

/// Standard probe batch: one unit single-cube field at the center and at the
/// extreme corner of every level, plus seeded random fields.
pub fn probe_batch<T: Real>(
    window: &CubeWindow,
    m: usize,
    random_count: usize,
    seed: u64,
) -> Result<Vec<SequenceField<T>>> {
    let n = window.n();
    let mut unit = vec![Cplx::new(T::zero(), T::zero()); m];
    unit[0] = Cplx::new(T::one(), T::zero());
    let mut out = Vec::new();
    for j in window.j_min()..=window.j_max() {
        let r = window.radius_at(j);
        for corner in [vec![0i64; n], vec![r; n]] {
            let mut t = SequenceField::new(*window, m)?;
            t.insert(CubeIndex::new(j, &corner)?, unit.clone())?;
            out.push(t);
        }
    }
    for i in 0..random_count {
        let t = SequenceField::random(*window, m, 0.1, seed.wrapping_add(i as u64))?;
        if !t.is_empty() {
            out.push(t);
        }
    }
    Ok(out)
}

/// Growth classification of a positive series from its partial sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    /// Increments decay fast enough to be summable.
    Convergent,
    /// Log-linear or faster growth.
    Divergent,
    /// Too close to the boundary to call.
    Inconclusive,
}

/// Classifies partial sums taken at doubling cutoffs.
///
/// Convergent when the tail increments vanish exactly, when the last doubling
/// adds less than 1% of the total, or when the per-doubling increments decay
/// with fitted log2-slope at most -0.075. Divergent when the fitted slope is
/// at least -0.025 (constant increments are a logarithmic sum; growing ones a
/// power or geometric sum). The gap between the two slopes is reported as
/// inconclusive. Calibrated so that `sum k^{-a}` is divergent for `a <= 1`
/// and convergent for `a >= 1.1` at cutoffs up to `2^16`.
pub fn classify_partial_sums<T: Real>(sums: &[(u64, T)]) -> Classification {
    if sums.len() < 4 {
        return Classification::Inconclusive;
    }
    let last = sums[sums.len() - 1].1;
    if !last.is_finite() {
        return Classification::Divergent;
    }
    let incs: Vec<T> = sums.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let tail = &incs[incs.len() / 2..];
    if tail.iter().all(|v| *v == T::zero()) {
        return Classification::Convergent;
    }
    if last > T::zero() && incs[incs.len() - 1] / last < T::of(0.01) {
        return Classification::Convergent;
    }
    let pts: Vec<(T, T)> = tail
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > T::zero())
        .map(|(i, v)| (T::of(i as f64), v.log2()))
        .collect();
    if pts.len() < 3 {
        return Classification::Inconclusive;
    }
    let slope = ls_slope(&pts);
    if slope <= T::of(-0.075) {
        Classification::Convergent
    } else if slope >= T::of(-0.025) {
        Classification::Divergent
    } else {
        Classification::Inconclusive
    }
}

fn ls_slope<T: Real>(pts: &[(T, T)]) -> T {
    let m = T::of(pts.len() as f64);
    let mut sx = T::zero();
    let mut sy = T::zero();
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for (x, y) in pts {
        sx = sx + *x;
        sy = sy + *y;
        sxx = sxx + *x * *x;
        sxy = sxy + *x * *y;
    }
    (m * sxy - sx * sy) / (m * sxx - sx * sx)
}

/// Partial sums of the p-series `sum_{k=1}^{K} k^{-alpha}` at doubling
/// cutoffs `4, 8, ..., k_max`; the calibration target for
/// [`classify_partial_sums`].
pub fn p_series_partial_sums<T: Real>(alpha: T, k_max: u64) -> Vec<(u64, T)> {
    let mut out = Vec::new();
    let mut sum = T::zero();
    let mut k = 0u64;
    let mut cutoff = 4u64;
    while cutoff <= k_max {
        while k < cutoff {
            k += 1;
            sum = sum + T::of(k as f64).powf(-alpha);
        }
        out.push((cutoff, sum));
        cutoff *= 2;
    }
    out
}

/// Exponent distance below which a growth verdict is withheld.
pub const BORDERLINE_GAP: f64 = 0.05;

/// Sharpness report: the two extremal partial-sum families and their growth
/// classifications.
#[derive(Debug, Clone, Serialize)]
pub struct SharpnessReport<T> {
    /// Lattice-sum exponent `D p - d2`; the sum diverges iff it is `<= n`.
    pub d_exponent: T,
    /// Partial sums of `sum (1 + |x_Q|)^{-(D p - d2)}` over level-0 cubes
    /// with `|k|_inf` up to each cutoff.
    pub d_partial: Vec<(u64, T)>,
    /// Verdict for the lattice sum.
    pub d_class: Classification,
    /// Geometric rate `F + n/2 + s - n/p - d2/p`; the level sum diverges iff
    /// it is `<= 0`.
    pub f_exponent: T,
    /// Partial sums of `sum_{j=-K'}^{-1} 2^{j p rate} * (k-sum)`.
    pub f_partial: Vec<(u64, T)>,
    /// Verdict for the level sum.
    pub f_class: Classification,
}

/// Evaluates the extremal sums that witness threshold sharpness for the
/// weight `|x|^{d2} I`, whose reducing operators are comparable to
/// `2^{-j d2/p} (1 + |k|)^{d2/p} I`. The image of a unit coefficient at the
/// origin cube has weighted level-0 mass `sum (1 + |x_Q|)^{-(D p - d2)}` and
/// coarse-level mass controlled by a geometric series with rate
/// `F + n/2 + s - n/p - d2/p`; both are tabulated at doubling cutoffs and
/// classified. Exponents within [`BORDERLINE_GAP`] of their boundary are
/// labeled inconclusive.
pub fn sharpness_probe<T: Real>(
    sp: &SpaceParams<T>,
    n: usize,
    d2: T,
    k: &AdKernel<T>,
    k_max: u64,
) -> Result<SharpnessReport<T>> {
    if n == 0 || n > 3 {
        return Err(AdopError::BadParam("dimension must be 1..=3".into()));
    }
    if !(d2 >= T::zero()) {
        return Err(AdopError::BadParam("d2 must be nonnegative".into()));
    }
    let lattice_points = (2.0 * k_max as f64 + 1.0).powi(n as i32);
    if !(4..=u64::MAX / 4).contains(&k_max) || lattice_points > 2.5e10 {
        return Err(AdopError::BadParam(format!(
            "lattice cutoff {k_max} out of range for n = {n}"
        )));
    }
    let alpha = k.d * sp.p - d2;
    let d_partial = lattice_partial_sums(n, alpha, k_max);
    let d_class = if (alpha - T::of(n as f64)).abs() < T::of(BORDERLINE_GAP) {
        Classification::Inconclusive
    } else {
        classify_partial_sums(&d_partial)
    };
    let half_n = T::of(n as f64) / T::of(2.0);
    let rate = k.f + half_n + sp.s - T::of(n as f64) / sp.p - d2 / sp.p;
    let ksum = d_partial.last().map(|v| v.1).unwrap_or_else(T::one);
    let mut f_partial = Vec::new();
    let mut sum = T::zero();
    let mut j = 0u64;
    let mut cutoff = 4u64;
    while cutoff <= 256 {
        while j < cutoff {
            j += 1;
            sum = sum + (T::of(-(j as f64)) * sp.p * rate).exp2() * ksum;
        }
        f_partial.push((cutoff, sum));
        cutoff *= 2;
    }
    let f_class = if rate.abs() < T::of(BORDERLINE_GAP) {
        Classification::Inconclusive
    } else {
        classify_partial_sums(&f_partial)
    };
    Ok(SharpnessReport {
        d_exponent: alpha,
        d_partial,
        d_class,
        f_exponent: rate,
        f_partial,
        f_class,
    })
}

/// Partial sums of `sum (1 + |k|)^{-alpha}` over `k` in the integer lattice
/// with `|k|_inf <= K`, at doubling cutoffs `4, 8, ..., k_max`. Accumulated
/// per sup-norm shell so every cutoff is exact.
fn lattice_partial_sums<T: Real>(n: usize, alpha: T, k_max: u64) -> Vec<(u64, T)> {
    let km = k_max as i64;
    let shell_sums: Vec<T> = (0..=km)
        .into_par_iter()
        .map(|r| {
            let mut acc = T::zero();
            let mut point = vec![-r; n];
            loop {
                if point.iter().map(|c| c.abs()).max().unwrap() == r {
                    let mut d2 = T::zero();
                    for c in &point {
                        let x = T::of(*c as f64);
                        d2 = d2 + x * x;
                    }
                    acc = acc + (T::one() + d2.sqrt()).powf(-alpha);
                }
                let mut axis = 0;
                loop {
                    if axis == n {
                        return acc;
                    }
                    point[axis] += 1;
                    if point[axis] <= r {
                        break;
                    }
                    point[axis] = -r;
                    axis += 1;
                }
            }
        })
        .collect();
    let mut out = Vec::new();
    let mut cutoff = 4u64;
    let mut sum = T::zero();
    let mut r = 0usize;
    while cutoff <= k_max {
        while r <= cutoff as usize {
            sum = sum + shell_sums[r];
            r += 1;
        }
        out.push((cutoff, sum));
        cutoff *= 2;
    }
    out
}

/// One cutoff of a same-level kernel row sum.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RowSumRow<T> {
    /// Sup-norm radius of included source cubes.
    pub radius: u64,
    /// Row sum at this radius.
    pub sum: T,
}

/// Row sums `sum_R b(Q, R)` over source cubes at the anchor's own level with
/// `|k_R - k_Q|_inf` up to each radius. For same-level pairs the kernel
/// depends only on the index offset, so the sums are independent of the
/// anchor and its level; for `D > n` they plateau as the radius grows.
pub fn same_level_row_sums<T: Real>(
    k: &AdKernel<T>,
    anchor: &CubeIndex,
    radii: &[u64],
) -> Result<Vec<RowSumRow<T>>> {
    let n = anchor.n();
    let mut sorted = radii.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.is_empty() || *sorted.last().unwrap() > 1 << 20 {
        return Err(AdopError::BadParam("bad radius schedule".into()));
    }
    let max_r = *sorted.last().unwrap() as i64;
    if ((2 * max_r + 1) as f64).powi(n as i32) > 2.5e10 {
        return Err(AdopError::BadParam("radius too large for dimension".into()));
    }
    let shell_sums: Vec<T> = (0..=max_r)
        .into_par_iter()
        .map(|r| {
            let mut acc = T::zero();
            let mut offset = vec![-r; n];
            loop {
                if offset.iter().map(|c| c.abs()).max().unwrap() == r {
                    let mut kk = Vec::with_capacity(n);
                    for (a, d) in anchor.k().iter().zip(offset.iter()) {
                        kk.push(a + d);
                    }
                    let cube = CubeIndex::new(anchor.j(), &kk).expect("valid index");
                    acc = acc + kernel_value(k, anchor, &cube);
                }
                let mut axis = 0;
                loop {
                    if axis == n {
                        return acc;
                    }
                    offset[axis] += 1;
                    if offset[axis] <= r {
                        break;
                    }
                    offset[axis] = -r;
                    axis += 1;
                }
            }
        })
        .collect();
    let mut out = Vec::new();
    let mut sum = T::zero();
    let mut r = 0usize;
    for cutoff in sorted {
        while r <= cutoff as usize {
            sum = sum + shell_sums[r];
            r += 1;
        }
        out.push(RowSumRow {
            radius: cutoff,
            sum,
        });
    }
    Ok(out)
}

/// Entrywise domination check for a composed kernel pair.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CompositionReport<T> {
    /// Number of checked cube pairs.
    pub pairs: usize,
    /// Smallest constant with `(B1 B2)(Q, R) <= C * bound(Q, R)` when the
    /// inner sum runs over the doubled window.
    pub fitted_constant: T,
    /// Same constant with the inner sum over the twice-doubled window.
    pub doubled_constant: T,
    /// Whether widening the inner sum moved the constant by at most 5%.
    pub stable: bool,
}

/// Composes two kernels over a finite window and fits the smallest constant
/// dominating the composition by the bound kernel, then re-fits with the
/// inner summation window widened once more. Both inner sums start from the
/// doubled window: the base window misses the coarse cubes covering its most
/// separated pairs, and adding those jumps the constant once; past the first
/// widening the tails are geometric, so a stable constant is evidence that
/// the composition is again almost diagonal with the bound's exponents.
pub fn composition_check<T: Real>(
    k1: &AdKernel<T>,
    k2: &AdKernel<T>,
    bound: &AdKernel<T>,
    window: &CubeWindow,
) -> Result<CompositionReport<T>> {
    let cubes = window.cubes();
    let pairs = cubes.len() * cubes.len();
    if pairs > 10_000 {
        return Err(AdopError::BadParam(format!(
            "window has {pairs} cube pairs; at most 10000 allowed"
        )));
    }
    let inner1: Vec<CubeIndex> = window.doubled()?.cubes();
    let inner2: Vec<CubeIndex> = window.doubled()?.doubled()?.cubes();
    let fit = |mids: &[CubeIndex]| -> T {
        cubes
            .par_iter()
            .map(|q| {
                let mut worst = T::zero();
                for r in &cubes {
                    let mut composed = T::zero();
                    for p in mids {
                        composed = composed + kernel_value(k1, q, p) * kernel_value(k2, p, r);
                    }
                    let c = composed / kernel_value(bound, q, r);
                    if c > worst {
                        worst = c;
                    }
                }
                worst
            })
            .reduce(T::zero, |a, b| if a > b { a } else { b })
    };
    let fitted = fit(&inner1);
    let doubled = fit(&inner2);
    Ok(CompositionReport {
        pairs,
        fitted_constant: fitted,
        doubled_constant: doubled,
        stable: doubled <= fitted * T::of(1.05),
    })
}

/// Convenience re-derivation of the space's integrability exponent used in
/// reports.
pub fn space_j<T: Real>(sp: &SpaceParams<T>, n: usize) -> T {
    sp.j_exponent(n)
}

/// Criticality of the space; exposed for report sidecars.
pub fn space_criticality<T: Real>(sp: &SpaceParams<T>) -> Criticality {
    sp.criticality()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqspaces::{Exponent, Family};
    use crate::weights::{MatrixWeight, ReducingMethod};
    use crate::{Quadrature, ReducingFamily};
    use std::sync::Arc;

    fn kernel(d: f64, e: f64, f: f64) -> AdKernel<f64> {
        AdKernel { d, e, f }
    }

    fn sp(
        family: Family,
        s: f64,
        tau: f64,
        p: f64,
        q: Exponent<f64>,
    ) -> SpaceParams<f64> {
        SpaceParams::new(family, s, tau, p, q, true).unwrap()
    }

    fn cube(j: i32, k: &[i64]) -> CubeIndex {
        CubeIndex::new(j, k).unwrap()
    }

    #[test]
    fn kernel_closed_forms() {
        let k = kernel(1.7, 0.9, 1.3);
        // Same cube: both factors are 1.
        let q = cube(0, &[0]);
        assert_eq!(kernel_eval(&k, &q, &q).unwrap(), 1.0);
        // Unit cubes at distance 1: only the distance factor acts.
        let r = cube(0, &[1]);
        let got = kernel_eval(&k, &q, &r).unwrap();
        assert!((got - 2f64.powf(-1.7)).abs() < 1e-15);
        // Shared corner, target half the size: only the E factor acts.
        let fine = cube(1, &[0]);
        let got = kernel_eval(&k, &fine, &q).unwrap();
        assert!((got - 2f64.powf(-0.9)).abs() < 1e-15);
        // Source finer: the F factor acts.
        let got = kernel_eval(&k, &q, &fine).unwrap();
        assert!((got - 2f64.powf(-1.3)).abs() < 1e-15);
    }

    #[test]
    fn transpose_swaps_scale_exponents() {
        let k = kernel(2.1, 0.7, 1.9);
        let kt = k.transposed();
        let cubes = [
            cube(0, &[0, 0]),
            cube(1, &[3, -2]),
            cube(-2, &[1, 0]),
            cube(3, &[-9, 14]),
        ];
        for q in &cubes {
            for r in &cubes {
                let a = kernel_eval(&kt, q, r).unwrap();
                let b = kernel_eval(&k, r, q).unwrap();
                assert_eq!(a, b, "transpose mismatch at {q:?}, {r:?}");
            }
        }
    }

    #[test]
    fn kernel_bounded_by_one_for_nonnegative_exponents() {
        let k = kernel(1.2, 0.4, 0.0);
        for (jq, kq, jr, kr) in [
            (0, 5i64, 0, -3i64),
            (2, 1, -1, 0),
            (-3, 7, 4, -11),
            (1, 0, 1, 0),
        ] {
            let v = kernel_eval(&k, &cube(jq, &[kq]), &cube(jr, &[kr])).unwrap();
            assert!(v > 0.0 && v <= 1.0, "value {v}");
        }
    }

    #[test]
    fn apply_single_source_reproduces_kernel_row() {
        let win = CubeWindow::new(1, -1, 2, 1, false).unwrap();
        let q0 = cube(0, &[0]);
        let mut t = SequenceField::new(win, 2).unwrap();
        t.insert(q0, vec![Cplx::new(0.3, -0.4), Cplx::new(1.0, 2.0)])
            .unwrap();
        let k = kernel(1.4, 0.8, 1.1);
        let image = apply(&k, &t).unwrap();
        for q in win.cubes() {
            let b = kernel_eval(&k, &q, &q0).unwrap();
            let got = image.get(&q).expect("dense row");
            assert!((got[0] - Cplx::new(0.3, -0.4) * b).norm() < 1e-15);
            assert!((got[1] - Cplx::new(1.0, 2.0) * b).norm() < 1e-15);
        }
    }

    #[test]
    fn huge_decay_is_near_diagonal() {
        let win = CubeWindow::new(1, 0, 2, 2, false).unwrap();
        // Same-level support: every off-diagonal entry carries at least the
        // factor 2^{-50}.
        let mut t = SequenceField::new(win, 1).unwrap();
        for k in -2i64..=2 {
            t.insert(cube(1, &[k]), vec![Cplx::new(0.5 + k as f64, 1.0)])
                .unwrap();
        }
        let image = apply(&kernel(50.0, 50.0, 50.0), &t).unwrap();
        let mut diff2 = 0.0f64;
        let mut norm2 = 0.0f64;
        for q in win.cubes() {
            let orig = t
                .get(&q)
                .map(|v| v.to_vec())
                .unwrap_or_else(|| vec![Cplx::new(0.0, 0.0)]);
            let img = image
                .get(&q)
                .map(|v| v.to_vec())
                .unwrap_or_else(|| vec![Cplx::new(0.0, 0.0)]);
            diff2 += (img[0] - orig[0]).norm_sqr();
            norm2 += orig[0].norm_sqr();
        }
        assert!(diff2.sqrt() <= 1e-6 * norm2.sqrt());
    }

    #[test]
    fn row_sums_are_anchor_invariant_and_plateau() {
        let radii = [16u64, 32, 64, 128, 256, 512, 1024];
        let k = kernel(2.0, 2.0, 2.0);
        let base = same_level_row_sums(&k, &cube(0, &[0]), &radii).unwrap();
        for anchor in [cube(0, &[5]), cube(-1, &[0]), cube(-3, &[-7])] {
            let other = same_level_row_sums(&k, &anchor, &radii).unwrap();
            for (a, b) in base.iter().zip(other.iter()) {
                assert_eq!(a.sum, b.sum, "anchor dependence at radius {}", a.radius);
            }
        }
        let last = base[base.len() - 1].sum;
        let prev = base[base.len() - 2].sum;
        assert!((last - prev) / last < 0.01, "no plateau: {prev} -> {last}");
        // Slow decay keeps growing: D = 0.8 < n = 1.
        let slow = same_level_row_sums(&kernel(0.8, 2.0, 2.0), &cube(0, &[0]), &radii).unwrap();
        let last = slow[slow.len() - 1].sum;
        let prev = slow[slow.len() - 2].sum;
        assert!((last - prev) / last > 0.05, "unexpected plateau");
    }

    #[test]
    fn threshold_hand_values() {
        // Unweighted L2-type space on the line.
        let th = thresholds(&sp(Family::B, 0.0, 0.0, 2.0, Exponent::Finite(2.0)), 1, 0.0, 0.0)
            .unwrap();
        assert_eq!((th.d, th.e, th.f), (1.0, 0.5, 0.5));
        // Upper dimension 1 shifts D and F by 1/p = 1.
        let th = thresholds(&sp(Family::B, 0.0, 0.0, 1.0, Exponent::Finite(1.0)), 1, 0.0, 1.0)
            .unwrap();
        assert_eq!((th.d, th.e, th.f), (2.0, 0.5, 1.5));
        // Supercritical example collapses back to the unweighted line values.
        let th = thresholds(&sp(Family::B, 0.0, 1.0, 1.0, Exponent::Finite(2.0)), 1, 0.0, 0.0)
            .unwrap();
        assert_eq!((th.d, th.e, th.f), (1.0, 0.5, 0.5));
        // Parameter domain is enforced.
        assert!(thresholds(&sp(Family::B, 0.0, 0.0, 2.0, Exponent::Finite(2.0)), 1, 1.0, 0.0)
            .is_err());
        assert!(thresholds(&sp(Family::B, 0.0, 0.0, 2.0, Exponent::Finite(2.0)), 1, 0.0, -0.1)
            .is_err());
    }

    #[test]
    fn classifier_calibrated_on_p_series() {
        for alpha in [0.5, 0.8, 1.0] {
            let sums = p_series_partial_sums(alpha, 1 << 16);
            assert_eq!(
                classify_partial_sums(&sums),
                Classification::Divergent,
                "alpha {alpha}"
            );
        }
        for alpha in [1.1, 1.5, 2.0, 3.0] {
            let sums = p_series_partial_sums(alpha, 1 << 16);
            assert_eq!(
                classify_partial_sums(&sums),
                Classification::Convergent,
                "alpha {alpha}"
            );
        }
    }

    #[test]
    fn sharpness_d_sum_margins() {
        let params = sp(Family::B, 0.0, 0.0, 1.0, Exponent::Finite(1.0));
        // alpha = D p - d2 with p = 1, d2 = 0.
        let report =
            sharpness_probe(&params, 1, 0.0, &kernel(0.9, 5.0, 5.0), 1 << 16).unwrap();
        assert_eq!(report.d_class, Classification::Divergent);
        let report =
            sharpness_probe(&params, 1, 0.0, &kernel(1.1, 5.0, 5.0), 1 << 16).unwrap();
        assert_eq!(report.d_class, Classification::Convergent);
        // Harmonic borderline: the exponent sits on the boundary, increments
        // are near-constant (logarithmic growth), and the verdict is
        // withheld.
        let report =
            sharpness_probe(&params, 1, 0.0, &kernel(1.0, 5.0, 5.0), 1 << 16).unwrap();
        assert_eq!(report.d_class, Classification::Inconclusive);
        let incs: Vec<f64> = report
            .d_partial
            .windows(2)
            .map(|w| w[1].1 - w[0].1)
            .collect();
        for pair in incs.windows(2).skip(incs.len() / 2) {
            let ratio = pair[1] / pair[0];
            assert!((0.8..1.2).contains(&ratio), "not log-like: {ratio}");
        }
    }

    #[test]
    fn sharpness_d_sum_with_weight_exponent() {
        // d2 = 1, p = 2: alpha = 2 D - 1 crosses n = 1 at D = 1.
        let params = sp(Family::B, 0.0, 0.0, 2.0, Exponent::Finite(2.0));
        let report =
            sharpness_probe(&params, 1, 1.0, &kernel(0.9, 5.0, 5.0), 1 << 16).unwrap();
        assert!((report.d_exponent - 0.8).abs() < 1e-12);
        assert_eq!(report.d_class, Classification::Divergent);
        let report =
            sharpness_probe(&params, 1, 1.0, &kernel(1.1, 5.0, 5.0), 1 << 16).unwrap();
        assert!((report.d_exponent - 1.2).abs() < 1e-12);
        assert_eq!(report.d_class, Classification::Convergent);
    }

    #[test]
    fn sharpness_f_sum_geometric_rates() {
        // rate = F + 1/2 - 1 with n = 1, p = 1, s = 0, d2 = 0.
        let params = sp(Family::B, 0.0, 0.0, 1.0, Exponent::Finite(1.0));
        let report =
            sharpness_probe(&params, 1, 0.0, &kernel(1.5, 5.0, 0.25), 1 << 12).unwrap();
        assert!((report.f_exponent + 0.25).abs() < 1e-12);
        assert_eq!(report.f_class, Classification::Divergent);
        let report =
            sharpness_probe(&params, 1, 0.0, &kernel(1.5, 5.0, 0.8), 1 << 12).unwrap();
        assert!((report.f_exponent - 0.3).abs() < 1e-12);
        assert_eq!(report.f_class, Classification::Convergent);
        let report =
            sharpness_probe(&params, 1, 0.0, &kernel(1.5, 5.0, 0.51), 1 << 12).unwrap();
        assert_eq!(report.f_class, Classification::Inconclusive);
    }

    #[test]
    fn composition_constant_is_stable_for_admissible_kernels() {
        let win = CubeWindow::new(1, -2, 2, 1, false).unwrap();
        // Margin 1 over the unweighted L2-line thresholds (1, 1/2, 1/2);
        // wide margins keep the inner tails geometric with ratio ~ 1/4 so
        // the two fits land close.
        let th = thresholds(&sp(Family::B, 0.0, 0.0, 2.0, Exponent::Finite(2.0)), 1, 0.0, 0.0)
            .unwrap();
        let k = margin_kernel(&th, 1.0);
        assert!(admissible(&k, &th));
        let report = composition_check(&k, &k, &k, &win).unwrap();
        assert!(report.pairs <= 10_000);
        assert!(report.fitted_constant.is_finite() && report.fitted_constant > 0.0);
        assert!(
            report.stable,
            "constant moved {} -> {}",
            report.fitted_constant, report.doubled_constant
        );
    }

    #[test]
    fn probe_identity_limit_has_unit_ratio() {
        let base = CubeWindow::new(1, -1, 2, 1, false).unwrap();
        let schedule = [base, base.doubled().unwrap()];
        let fields = probe_batch::<f64>(&base, 1, 4, 99).unwrap();
        let params = sp(Family::B, 0.0, 0.0, 2.0, Exponent::Finite(2.0));
        let report = boundedness_probe(
            &kernel(30.0, 30.0, 30.0),
            &params,
            &Weighting::Unweighted,
            &fields,
            &schedule,
        )
        .unwrap();
        for row in &report.rows {
            assert!((row.ratio - 1.0).abs() < 1e-6, "ratio {}", row.ratio);
        }
        assert!(report.bounded_consistent);
    }

    #[test]
    fn probe_flags_growth_below_threshold() {
        let base = CubeWindow::new(1, 0, 0, 8, false).unwrap();
        let schedule = [
            base,
            base.doubled().unwrap(),
            base.doubled().unwrap().doubled().unwrap(),
        ];
        let q0 = cube(0, &[0]);
        let mut t = SequenceField::new(base, 1).unwrap();
        t.insert(q0, vec![Cplx::new(1.0, 0.0)]).unwrap();
        // Threshold for the unweighted (1,1) space is D* = 1; D = 0.8 leaks
        // mass like radius^{0.2}, about 15% per doubling.
        let params = sp(Family::B, 0.0, 0.0, 1.0, Exponent::Finite(1.0));
        let report = boundedness_probe(
            &kernel(0.8, 5.0, 5.0),
            &params,
            &Weighting::Unweighted,
            &[t],
            &schedule,
        )
        .unwrap();
        assert!(!report.bounded_consistent);
        assert!(report.max_step_growth > 1.05);
    }

    #[test]
    fn probe_margin_kernel_is_bounded_consistent_with_weight() {
        // Margin 0.1 converges too slowly in the spatial direction to settle
        // within any affordable radius, so the schedule holds the physical
        // extent fixed and doubles cube count by deepening the fine levels;
        // with q = 2 each added level carries 2^{-0.2} of the previous one
        // regardless of p, and the tail shows up as decaying step growth.
        let home = CubeWindow::new(1, -1, 2, 2, false).unwrap();
        let schedule: Vec<CubeWindow> = (8..=10)
            .map(|g| CubeWindow::new(1, -1, g, 2, false).unwrap())
            .collect();
        let w = MatrixWeight::<f64>::anisotropic_product(1, 1, vec![1.0]).unwrap();
        let fam = ReducingFamily::new(
            Arc::new(w),
            1.0,
            ReducingMethod::Gram2,
            Quadrature::gauss(3, 2, 10),
        )
        .unwrap();
        let params = sp(Family::B, 0.0, 0.0, 1.0, Exponent::Finite(2.0));
        let th = thresholds(&params, 1, 0.0, 1.0).unwrap();
        let k = margin_kernel(&th, 0.1);
        assert!(admissible(&k, &th));
        let fields = probe_batch::<f64>(&home, 1, 6, 17).unwrap();
        let report = boundedness_probe(
            &k,
            &params,
            &Weighting::Averaged(&fam),
            &fields,
            &schedule,
        )
        .unwrap();
        assert!(
            report.bounded_consistent,
            "growth {} rows {:?}",
            report.max_step_growth, report.rows
        );
        // The step growth itself decays, the signature of a converging tail.
        let g1 = report.rows[1].ratio / report.rows[0].ratio;
        let g2 = report.rows[2].ratio / report.rows[1].ratio;
        assert!(g2 < g1, "non-decaying growth {g1} -> {g2}");
    }
}
