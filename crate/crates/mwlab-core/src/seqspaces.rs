//! Sequence fields over dyadic windows and their Besov-type (`B`) and
//! Triebel-Lizorkin-type (`F`) norms in three weightings: pointwise matrix
//! weight, per-cube reducing operators, and unweighted. Also the level-wise
//! maximal sequence, the `B`/`F` embedding check, and the pointwise-versus-
//! averaged equivalence experiment.
//!
//! Norm semantics: a field assigns a complex `m`-vector to finitely many
//! cubes. Its level function at level `j` is piecewise constant on level-`j`
//! cubes with value `t_Q |Q|^{-1/2}`, and the norm aggregates
//! `2^{js} |weighted level function|` in `L^p`/`l^q` with a `|P|^{-tau}`
//! supremum over window cubes `P`, levels restricted to `j >= j_P`
//! (`j >= max(j_P, 0)` in the inhomogeneous convention). Unweighted and
//! operator-averaged flavors integrate piecewise-constant functions exactly;
//! the pointwise flavor shares one quadrature node set per finest-level cell
//! across all levels.

use crate::dyadic::{CubeIndex, CubeWindow, DyadicError};
use crate::linalg::vec_norm;
use crate::scalar::Real;
use crate::weights::{MatrixWeight, Quadrature, ReducingFamily, WeightError};
use crate::Cplx;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeqError {
    #[error("window contains no cubes")]
    EmptyWindow,
    #[error("parameter error: {0}")]
    BadParam(String),
    #[error("shape mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Dyadic(#[from] DyadicError),
}

type Result<T> = std::result::Result<T, SeqError>;

// ---------------------------------------------------------------------------
// Space parameters
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Family {
    B,
    F,
}

/// A positive exponent that may be infinite (the `q` slot).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Exponent<T> {
    Finite(T),
    Infinite,
}

impl<T: Real> Exponent<T> {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Exponent::Infinite)
    }

    /// `min{1, self}` as a finite number (infinity drops out).
    fn min_one(&self) -> T {
        match *self {
            Exponent::Finite(v) => v.min(T::one()),
            Exponent::Infinite => T::one(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Criticality {
    Supercritical,
    Critical,
    Subcritical,
}

/// Smoothness/integrability parameters of one `B`/`F`-type space.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpaceParams<T> {
    pub family: Family,
    pub s: T,
    pub tau: T,
    pub p: T,
    pub q: Exponent<T>,
    /// Inhomogeneous spaces restrict levels to `j >= 0`.
    pub homogeneous: bool,
}

impl<T: Real> SpaceParams<T> {
    pub fn new(
        family: Family,
        s: T,
        tau: T,
        p: T,
        q: Exponent<T>,
        homogeneous: bool,
    ) -> Result<Self> {
        if !s.is_finite() {
            return Err(SeqError::BadParam("s must be finite".into()));
        }
        if !(tau >= T::zero()) || !tau.is_finite() {
            return Err(SeqError::BadParam("tau must be finite and >= 0".into()));
        }
        if !(p > T::zero()) || !p.is_finite() {
            return Err(SeqError::BadParam("p must be positive and finite".into()));
        }
        if let Exponent::Finite(qv) = q {
            if !(qv > T::zero()) || !qv.is_finite() {
                return Err(SeqError::BadParam("q must be positive".into()));
            }
        }
        Ok(Self { family, s, tau, p, q, homogeneous })
    }

    /// `J = n / min{1, p}` for `B`, `n / min{1, p, q}` for `F`.
    pub fn j_exponent(&self, n: usize) -> T {
        let nn = T::of(n as f64);
        let denom = match self.family {
            Family::B => self.p.min(T::one()),
            Family::F => self.p.min(T::one()).min(self.q.min_one()),
        };
        nn / denom
    }

    /// Supercritical: `tau > 1/p` or `(tau, q) = (1/p, infinity)`. Critical:
    /// `tau = 1/p` with finite `q`, `F` family only. Everything else is
    /// subcritical.
    pub fn criticality(&self) -> Criticality {
        let inv_p = T::one() / self.p;
        if self.tau > inv_p || (self.tau == inv_p && self.q.is_infinite()) {
            return Criticality::Supercritical;
        }
        if self.tau == inv_p && matches!(self.family, Family::F) {
            return Criticality::Critical;
        }
        Criticality::Subcritical
    }

    /// The criticality-adjusted `J`: `n` supercritical, `n / min{1, q}`
    /// critical, `J` subcritical.
    pub fn j_tau(&self, n: usize) -> T {
        let nn = T::of(n as f64);
        match self.criticality() {
            Criticality::Supercritical => nn,
            Criticality::Critical => nn / self.q.min_one(),
            Criticality::Subcritical => self.j_exponent(n),
        }
    }

    /// `tau_hat = (tau - 1/p + d1/(np))_+`.
    pub fn tau_hat(&self, n: usize, d1: T) -> T {
        let nn = T::of(n as f64);
        (self.tau - T::one() / self.p + d1 / (nn * self.p)).max(T::zero())
    }

    /// `s_tilde = s + n * tau_hat`.
    pub fn s_tilde(&self, n: usize, d1: T) -> T {
        self.s + T::of(n as f64) * self.tau_hat(n, d1)
    }

    /// `J_tilde = J_tau + min{n tau_hat, d1/p} + d2/p`.
    pub fn j_tilde(&self, n: usize, d1: T, d2: T) -> T {
        let nt = T::of(n as f64) * self.tau_hat(n, d1);
        self.j_tau(n) + nt.min(d1 / self.p) + d2 / self.p
    }
}

// ---------------------------------------------------------------------------
// Sequence fields
// ---------------------------------------------------------------------------

/// Finitely supported map from window cubes to complex `m`-vectors.
#[derive(Debug, Clone)]
pub struct SequenceField<T> {
    window: CubeWindow,
    m: usize,
    values: BTreeMap<CubeIndex, Vec<Cplx<T>>>,
}

impl<T: Real> SequenceField<T> {
    pub fn new(window: CubeWindow, m: usize) -> Result<Self> {
        if m == 0 || m > crate::linalg::MAX_MATRIX_DIM {
            return Err(SeqError::BadParam(format!("vector dimension {m} out of range")));
        }
        Ok(Self { window, m, values: BTreeMap::new() })
    }

    pub fn window(&self) -> &CubeWindow {
        &self.window
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn insert(&mut self, cube: CubeIndex, value: Vec<Cplx<T>>) -> Result<()> {
        if !self.window.contains(&cube) {
            return Err(SeqError::Mismatch(format!("cube {cube:?} outside the field window")));
        }
        if value.len() != self.m {
            return Err(SeqError::Mismatch(format!(
                "value has {} components, field has {}",
                value.len(),
                self.m
            )));
        }
        if value.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(SeqError::BadParam("non-finite component".into()));
        }
        self.values.insert(cube, value);
        Ok(())
    }

    pub fn get(&self, cube: &CubeIndex) -> Option<&[Cplx<T>]> {
        self.values.get(cube).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CubeIndex, &[Cplx<T>])> {
        self.values.iter().map(|(q, v)| (q, v.as_slice()))
    }

    pub fn scaled(&self, c: T) -> Self {
        let values = self
            .values
            .iter()
            .map(|(q, v)| (*q, v.iter().map(|&z| z * c).collect()))
            .collect();
        Self { window: self.window, m: self.m, values }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        if self.window != other.window || self.m != other.m {
            return Err(SeqError::Mismatch("field shapes differ".into()));
        }
        let mut out = self.clone();
        for (q, v) in &other.values {
            let slot = out
                .values
                .entry(*q)
                .or_insert_with(|| vec![Cplx::new(T::zero(), T::zero()); self.m]);
            for (a, &b) in slot.iter_mut().zip(v) {
                *a += b;
            }
        }
        Ok(out)
    }

    /// Scalar field of Euclidean magnitudes (input to `maximal_sequence`).
    pub fn scalarized(&self) -> Self {
        let values = self
            .values
            .iter()
            .map(|(q, v)| (*q, vec![Cplx::new(vec_norm(v), T::zero())]))
            .collect();
        Self { window: self.window, m: 1, values }
    }

    /// Seeded random field: each window cube is occupied independently with
    /// probability `fill` and receives i.i.d. standard complex Gaussian
    /// components (Box-Muller).
    pub fn random(window: CubeWindow, m: usize, fill: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fill) {
            return Err(SeqError::BadParam("fill must be in [0, 1]".into()));
        }
        let mut field = Self::new(window, m)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for cube in window.cubes() {
            if rng.gen::<f64>() >= fill {
                continue;
            }
            let v: Vec<Cplx<T>> = (0..m)
                .map(|_| Cplx::new(T::of(gaussian(&mut rng)), T::of(gaussian(&mut rng))))
                .collect();
            field.values.insert(cube, v);
        }
        Ok(field)
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

// ---------------------------------------------------------------------------
// Norm evaluation
// ---------------------------------------------------------------------------

/// Which weight touches the level functions inside the norm.
pub enum Weighting<'a, T: Real> {
    Unweighted,
    /// `|A_Q t_Q|` with the cube's reducing operator.
    Averaged(&'a ReducingFamily<T>),
    /// `|W^{1/p}(x) t_Q|` sampled on the finest-level quadrature grid.
    Pointwise(&'a MatrixWeight<T>, Quadrature),
}

/// `2^{j e}`.
pub(crate) fn two_pow<T: Real>(j: i32, e: T) -> T {
    (T::of(j as f64) * e).exp2()
}

/// One piecewise-constant piece of a level function: geometric support cube,
/// the logical level it belongs to, and the constant value on it.
struct LevelCell<T> {
    cube: CubeIndex,
    logical_j: i32,
    value: T,
}

pub fn seq_norm<T: Real>(
    t: &SequenceField<T>,
    sp: &SpaceParams<T>,
    weighting: &Weighting<'_, T>,
) -> Result<T> {
    seq_norm_over(t, sp, weighting, t.window())
}

/// Norm with the `P`-supremum ranging over an explicit window (stability
/// probes re-evaluate on a doubled window without touching the field).
pub fn seq_norm_over<T: Real>(
    t: &SequenceField<T>,
    sp: &SpaceParams<T>,
    weighting: &Weighting<'_, T>,
    p_window: &CubeWindow,
) -> Result<T> {
    if p_window.n() != t.window().n() {
        return Err(SeqError::Mismatch("P-window dimension differs from field".into()));
    }
    match weighting {
        Weighting::Pointwise(w, quad) => {
            if w.m() != t.m() {
                return Err(SeqError::Mismatch("weight size differs from field".into()));
            }
            if w.n() != t.window().n() {
                return Err(SeqError::Mismatch("weight dimension differs from field".into()));
            }
            la_norm_pointwise(t, sp, w, quad, p_window)
        }
        _ => {
            let cells = scalar_cells(t, sp, weighting)?;
            la_norm_cells(&cells, sp, p_window)
        }
    }
}

/// Unweighted norm with every indicator `1_Q` replaced by the indicator of
/// `Q`'s first child (a fixed selection of measure `2^{-n}|Q|`).
pub fn seq_norm_shrunken<T: Real>(t: &SequenceField<T>, sp: &SpaceParams<T>) -> Result<T> {
    seq_norm_shrunken_over(t, sp, t.window())
}

pub fn seq_norm_shrunken_over<T: Real>(
    t: &SequenceField<T>,
    sp: &SpaceParams<T>,
    p_window: &CubeWindow,
) -> Result<T> {
    let n = t.window().n();
    let mut cells = Vec::with_capacity(t.len());
    for (q, v) in t.iter() {
        let child = q.children(1)?[0];
        cells.push(LevelCell {
            cube: child,
            logical_j: q.j(),
            value: two_pow(q.j(), sp.s + T::of(n as f64) * T::of(0.5)) * vec_norm(v),
        });
    }
    la_norm_cells(&cells, sp, p_window)
}

fn scalar_cells<T: Real>(
    t: &SequenceField<T>,
    sp: &SpaceParams<T>,
    weighting: &Weighting<'_, T>,
) -> Result<Vec<LevelCell<T>>> {
    let n = t.window().n();
    let half_n = T::of(n as f64) * T::of(0.5);
    let mut cells = Vec::with_capacity(t.len());
    for (q, v) in t.iter() {
        let g = match weighting {
            Weighting::Unweighted => vec_norm(v),
            Weighting::Averaged(fam) => {
                if fam.weight().m() != t.m() {
                    return Err(SeqError::Mismatch("family size differs from field".into()));
                }
                let a = fam.operator(q)?;
                vec_norm(&a.matrix().mul_vec(v))
            }
            Weighting::Pointwise(..) => unreachable!("pointwise has its own path"),
        };
        cells.push(LevelCell { cube: *q, logical_j: q.j(), value: two_pow(q.j(), sp.s + half_n) * g });
    }
    Ok(cells)
}

/// P levels the supremum has to visit. For `tau = 0` the prefactor is 1 and
/// both level sums are monotone under cube inclusion (a bigger P sees a
/// weaker cutoff and a larger region of every nonnegative level function),
/// while every window cube lies inside a window cube of the coarsest level;
/// the supremum is therefore attained there.
fn p_levels(sp_tau_zero: bool, p_window: &CubeWindow) -> std::ops::RangeInclusive<i32> {
    if sp_tau_zero {
        p_window.j_min()..=p_window.j_min()
    } else {
        p_window.j_min()..=p_window.j_max()
    }
}

/// Exact `LA^tau_{p,q}` of a stack of piecewise-constant level functions.
fn la_norm_cells<T: Real>(
    cells: &[LevelCell<T>],
    sp: &SpaceParams<T>,
    p_window: &CubeWindow,
) -> Result<T> {
    if p_window.len() == 0 {
        return Err(SeqError::EmptyWindow);
    }
    let n = p_window.n();
    let levels = p_levels(sp.tau == T::zero(), p_window);
    let mut best = T::zero();
    match sp.family {
        Family::B => {
            // One pass per P level: bucket each cell's L^p mass under its
            // ancestor at that level. Cubes without mass contribute zero to
            // the supremum and are never materialized.
            for jp in levels {
                let cutoff = if sp.homogeneous { jp } else { jp.max(0) };
                let mut rosters: BTreeMap<CubeIndex, BTreeMap<i32, T>> = BTreeMap::new();
                for c in cells {
                    if c.logical_j < cutoff || c.cube.j() < jp {
                        continue;
                    }
                    let anc = c.cube.ancestor((c.cube.j() - jp) as u32)?;
                    if !p_window.contains(&anc) {
                        continue;
                    }
                    let add = c.value.powf(sp.p) * c.cube.volume();
                    let slot = rosters
                        .entry(anc)
                        .or_default()
                        .entry(c.logical_j)
                        .or_insert_with(T::zero);
                    *slot = *slot + add;
                }
                let prefactor = two_pow(jp * n as i32, sp.tau);
                for masses in rosters.values() {
                    let la = combine_levels(masses.values().copied(), sp);
                    best = best.max(prefactor * la);
                }
            }
        }
        Family::F => {
            // Geometric cube -> its (logical level, value) entries.
            let mut by_cube: BTreeMap<CubeIndex, Vec<(i32, T)>> = BTreeMap::new();
            for c in cells {
                by_cube.entry(c.cube).or_default().push((c.logical_j, c.value));
            }
            // Ancestors-or-self of every valued cube, down to the coarsest P
            // level: the descent from any P stays inside this set.
            let mut active: BTreeSet<CubeIndex> = BTreeSet::new();
            for cube in by_cube.keys() {
                let mut cur = *cube;
                loop {
                    active.insert(cur);
                    if cur.j() <= p_window.j_min() {
                        break;
                    }
                    cur = cur.parent()?;
                }
            }
            for jp in levels {
                let cutoff = if sp.homogeneous { jp } else { jp.max(0) };
                let prefactor = two_pow(jp * n as i32, sp.tau);
                for pw in active.range(level_range(jp, n)) {
                    if !p_window.contains(pw) {
                        continue;
                    }
                    let integral = lf_descend(pw, T::zero(), &by_cube, &active, cutoff, sp)?;
                    best = best.max(prefactor * integral.powf(T::one() / sp.p));
                }
            }
        }
    }
    Ok(best)
}

/// Key range covering exactly the level-`jp` cubes in the `(j, k)` ordering.
fn level_range(jp: i32, n: usize) -> impl std::ops::RangeBounds<CubeIndex> {
    let lo = CubeIndex::new(jp, &vec![i64::MIN + 1; n]).expect("valid bound");
    let hi = CubeIndex::new(jp, &vec![i64::MAX - 1; n]).expect("valid bound");
    lo..=hi
}

/// `l^q` of per-level `L^p` norms given the `L^p` masses (p-th powers).
pub(crate) fn combine_levels<T: Real>(masses: impl Iterator<Item = T>, sp: &SpaceParams<T>) -> T {
    match sp.q {
        Exponent::Finite(qv) => {
            let mut acc = T::zero();
            for s in masses {
                acc = acc + s.powf(qv / sp.p);
            }
            acc.powf(T::one() / qv)
        }
        Exponent::Infinite => {
            let mut best = T::zero();
            for s in masses {
                best = best.max(s.powf(T::one() / sp.p));
            }
            best
        }
    }
}

/// Integral of `(sum_j F_j^q)^{p/q}` (or `(sup_j F_j)^p`) over `cube`, where
/// `acc` carries the contributions of coarser levels along the descent.
fn lf_descend<T: Real>(
    cube: &CubeIndex,
    acc: T,
    by_cube: &BTreeMap<CubeIndex, Vec<(i32, T)>>,
    active: &BTreeSet<CubeIndex>,
    cutoff: i32,
    sp: &SpaceParams<T>,
) -> Result<T> {
    let mut acc = acc;
    if let Some(entries) = by_cube.get(cube) {
        for &(lj, v) in entries {
            if lj >= cutoff {
                acc = match sp.q {
                    Exponent::Finite(qv) => acc + v.powf(qv),
                    Exponent::Infinite => acc.max(v),
                };
            }
        }
    }
    let mut total = T::zero();
    let mut lump = cube.volume::<T>();
    for kid in cube.children(1)? {
        if active.contains(&kid) {
            lump = lump - kid.volume::<T>();
            total = total + lf_descend(&kid, acc, by_cube, active, cutoff, sp)?;
        }
    }
    if acc > T::zero() && lump > T::zero() {
        let g = match sp.q {
            Exponent::Finite(qv) => acc.powf(sp.p / qv),
            Exponent::Infinite => acc.powf(sp.p),
        };
        total = total + g * lump;
    }
    Ok(total)
}

/// Pointwise-weighted norm: one quadrature node set per finest-level cell,
/// shared by all levels through ancestor lookup.
fn la_norm_pointwise<T: Real>(
    t: &SequenceField<T>,
    sp: &SpaceParams<T>,
    w: &MatrixWeight<T>,
    quad: &Quadrature,
    p_window: &CubeWindow,
) -> Result<T> {
    let p_cubes = if sp.tau == T::zero() {
        p_window.cubes_at_level(p_window.j_min())
    } else {
        p_window.cubes()
    };
    if p_cubes.is_empty() {
        return Err(SeqError::EmptyWindow);
    }
    if t.is_empty() {
        return Ok(T::zero());
    }
    let n = t.window().n();
    let half_n = T::of(n as f64) * T::of(0.5);
    let j_hi = t.iter().map(|(q, _)| q.j()).max().expect("nonempty");
    let j_lo = t.iter().map(|(q, _)| q.j()).min().expect("nonempty");
    if j_hi - j_lo > 12 {
        return Err(SeqError::BadParam("support spans more than 12 levels".into()));
    }
    // Finest cells under the support, deduplicated (supports may nest).
    let mut finest: BTreeSet<CubeIndex> = BTreeSet::new();
    for (q, _) in t.iter() {
        for c in q.children((j_hi - q.j()) as u32)? {
            finest.insert(c);
        }
    }
    struct CellData<T> {
        cube: CubeIndex,
        node_wts: Vec<T>,
        // (logical level, per-node weighted magnitude).
        levels: Vec<(i32, Vec<T>)>,
    }
    let finest: Vec<CubeIndex> = finest.into_iter().collect();
    let cells: Vec<CellData<T>> = finest
        .par_iter()
        .map(|cell| -> Result<CellData<T>> {
            let dom = crate::weights::BoxDomain::from_cube(cell);
            let samples = w.sample_power(T::one() / sp.p, &dom, quad)?;
            let mut levels = Vec::new();
            for d in 0..=(j_hi - j_lo) as u32 {
                let anc = cell.ancestor(d)?;
                if let Some(vec) = t.get(&anc) {
                    let prep = samples.prepare_vector(vec);
                    let factor = two_pow(anc.j(), sp.s + half_n);
                    let f: Vec<T> = (0..samples.len())
                        .map(|i| factor * samples.apply_norm(i, &prep))
                        .collect();
                    levels.push((anc.j(), f));
                }
            }
            let node_wts = (0..samples.len()).map(|i| samples.node_weight(i)).collect();
            Ok(CellData { cube: *cell, node_wts, levels })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best = T::zero();
    for pw in &p_cubes {
        let cutoff = if sp.homogeneous { pw.j() } else { pw.j().max(0) };
        let inside: Vec<&CellData<T>> =
            cells.iter().filter(|c| pw.contains_cube(&c.cube)).collect();
        let la = match sp.family {
            Family::B => {
                let mut masses: BTreeMap<i32, T> = BTreeMap::new();
                for c in &inside {
                    for (lj, f) in &c.levels {
                        if *lj < cutoff {
                            continue;
                        }
                        let mut s = T::zero();
                        for (i, &fi) in f.iter().enumerate() {
                            s = s + c.node_wts[i] * fi.powf(sp.p);
                        }
                        let slot = masses.entry(*lj).or_insert_with(T::zero);
                        *slot = *slot + s;
                    }
                }
                combine_levels(masses.values().copied(), sp)
            }
            Family::F => {
                let mut integral = T::zero();
                for c in &inside {
                    for i in 0..c.node_wts.len() {
                        let mut acc = T::zero();
                        for (lj, f) in &c.levels {
                            if *lj < cutoff {
                                continue;
                            }
                            acc = match sp.q {
                                Exponent::Finite(qv) => acc + f[i].powf(qv),
                                Exponent::Infinite => acc.max(f[i]),
                            };
                        }
                        if acc > T::zero() {
                            let g = match sp.q {
                                Exponent::Finite(qv) => acc.powf(sp.p / qv),
                                Exponent::Infinite => acc.powf(sp.p),
                            };
                            integral = integral + c.node_wts[i] * g;
                        }
                    }
                }
                integral.powf(T::one() / sp.p)
            }
        };
        best = best.max(two_pow(pw.j() * n as i32, sp.tau) * la);
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Maximal sequence
// ---------------------------------------------------------------------------

/// Level-wise maximal sequence of a scalar field:
/// `(t*)_Q = [sum_{R: l(R)=l(Q)} |t_R|^r (1 + l(R)^{-1} |x_R - x_Q|)^{-lambda}]^{1/r}`
/// over the field's window, with `lambda > n` for summability.
pub fn maximal_sequence<T: Real>(
    t: &SequenceField<T>,
    r: T,
    lambda: T,
) -> Result<SequenceField<T>> {
    if t.m() != 1 {
        return Err(SeqError::Mismatch("maximal sequence needs a scalarized field".into()));
    }
    let n = t.window().n();
    if !(r > T::zero()) || !(lambda > T::of(n as f64)) {
        return Err(SeqError::BadParam("need r > 0 and lambda > n".into()));
    }
    let mut by_level: BTreeMap<i32, Vec<(Vec<T>, T)>> = BTreeMap::new();
    for (q, v) in t.iter() {
        let mag = vec_norm(v);
        if mag > T::zero() {
            by_level.entry(q.j()).or_default().push((q.lower_corner(), mag.powf(r)));
        }
    }
    let mut out = SequenceField::new(*t.window(), 1)?;
    for (&j, entries) in &by_level {
        let inv_side = two_pow(j, T::one());
        for q in t.window().cubes_at_level(j) {
            let xq: Vec<T> = q.lower_corner();
            let mut sum = T::zero();
            for (xr, rpow) in entries {
                let dist = xr
                    .iter()
                    .zip(&xq)
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum::<T>()
                    .sqrt();
                sum = sum + *rpow * (T::one() + inv_side * dist).powf(-lambda);
            }
            if sum > T::zero() {
                out.insert(q, vec![Cplx::new(sum.powf(T::one() / r), T::zero())])?;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Embedding and equivalence experiments
// ---------------------------------------------------------------------------

/// The two-sided `B`/`F` comparison at `tau = 0`:
/// `b`-norm at `max(p,q)` <= `f`-norm at `q` <= `b`-norm at `min(p,q)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EmbeddingReport<T> {
    pub b_qmax: T,
    pub f: T,
    pub b_qmin: T,
    pub holds: bool,
}

pub const EMBEDDING_SLACK: f64 = 1e-12;

pub fn embedding_check<T: Real>(
    t: &SequenceField<T>,
    s: T,
    p: T,
    q: Exponent<T>,
    weighting: &Weighting<'_, T>,
) -> Result<EmbeddingReport<T>> {
    let (q_up, q_down) = match q {
        Exponent::Infinite => (Exponent::Infinite, Exponent::Finite(p)),
        Exponent::Finite(qv) => {
            (Exponent::Finite(p.max(qv)), Exponent::Finite(p.min(qv)))
        }
    };
    let zero = T::zero();
    let sp_b_up = SpaceParams::new(Family::B, s, zero, p, q_up, true)?;
    let sp_f = SpaceParams::new(Family::F, s, zero, p, q, true)?;
    let sp_b_down = SpaceParams::new(Family::B, s, zero, p, q_down, true)?;
    let b_qmax = seq_norm(t, &sp_b_up, weighting)?;
    let f = seq_norm(t, &sp_f, weighting)?;
    let b_qmin = seq_norm(t, &sp_b_down, weighting)?;
    let slack = T::of(1.0 + EMBEDDING_SLACK);
    let holds = b_qmax <= f * slack && f <= b_qmin * slack;
    Ok(EmbeddingReport { b_qmax, f, b_qmin, holds })
}

/// Ratio band of the pointwise-weighted norm against the reducing-operator
/// norm over a batch of fields, re-evaluated on the doubled `P`-window.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EquivalenceReport<T> {
    pub ratio_min: T,
    pub ratio_max: T,
    pub doubled_ratio_min: T,
    pub doubled_ratio_max: T,
    /// Max relative movement of the band ends under window doubling.
    pub band_drift: T,
}

pub fn pointwise_vs_averaged<T: Real>(
    fields: &[SequenceField<T>],
    sp: &SpaceParams<T>,
    fam: &ReducingFamily<T>,
    quad: &Quadrature,
) -> Result<EquivalenceReport<T>> {
    if fields.is_empty() {
        return Err(SeqError::BadParam("need at least one field".into()));
    }
    let w = fam.weight().as_ref();
    let ratios: Vec<(T, T)> = fields
        .par_iter()
        .map(|t| -> Result<Option<(T, T)>> {
            let doubled = t.window().doubled()?;
            let np = seq_norm(t, sp, &Weighting::Pointwise(w, *quad))?;
            let na = seq_norm(t, sp, &Weighting::Averaged(fam))?;
            if !(na > T::zero()) {
                return Ok(None);
            }
            let np2 = seq_norm_over(t, sp, &Weighting::Pointwise(w, *quad), &doubled)?;
            let na2 = seq_norm_over(t, sp, &Weighting::Averaged(fam), &doubled)?;
            Ok(Some((np / na, np2 / na2)))
        })
        .collect::<Result<Vec<Option<(T, T)>>>>()?
        .into_iter()
        .flatten()
        .collect();
    if ratios.is_empty() {
        return Err(SeqError::BadParam("all fields were zero".into()));
    }
    let fold = |vals: &[(T, T)], pick: fn(&(T, T)) -> T| -> (T, T) {
        let mut lo = T::infinity();
        let mut hi = T::zero();
        for v in vals {
            let x = pick(v);
            lo = lo.min(x);
            hi = hi.max(x);
        }
        (lo, hi)
    };
    let (ratio_min, ratio_max) = fold(&ratios, |v| v.0);
    let (doubled_ratio_min, doubled_ratio_max) = fold(&ratios, |v| v.1);
    let drift_lo = ((doubled_ratio_min - ratio_min) / ratio_min).abs();
    let drift_hi = ((doubled_ratio_max - ratio_max) / ratio_max).abs();
    Ok(EquivalenceReport {
        ratio_min,
        ratio_max,
        doubled_ratio_min,
        doubled_ratio_max,
        band_drift: drift_lo.max(drift_hi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::ReducingMethod;
    use std::sync::Arc;

    // Brute-force oracle, written before the sparse evaluator and kept
    // independent of it: every P is tiled uniformly by finest-level cells and
    // the definitional formula is summed directly (level values looked up
    // through plain ancestor arithmetic). The sparse evaluator must agree to
    // float accuracy on every field it is given.
    fn oracle_norm(t: &SequenceField<f64>, sp: &SpaceParams<f64>, p_window: &CubeWindow) -> f64 {
        let n = t.window().n();
        let mut heights: BTreeMap<CubeIndex, f64> = BTreeMap::new();
        for (q, v) in t.iter() {
            let g = vec_norm(v);
            heights.insert(*q, 2f64.powf(q.j() as f64 * (sp.s + n as f64 / 2.0)) * g);
        }
        let j_hi = match t.iter().map(|(q, _)| q.j()).max() {
            Some(j) => j,
            None => return 0.0,
        };
        let mut best = 0.0f64;
        for pw in p_window.cubes() {
            let cutoff = if sp.homogeneous { pw.j() } else { pw.j().max(0) };
            if cutoff > j_hi {
                continue;
            }
            let depth = (j_hi - pw.j()) as u32;
            let cells = pw.children(depth).unwrap();
            let vol = 2f64.powi(-(j_hi * n as i32));
            let la = match sp.family {
                Family::B => {
                    let mut acc = 0.0f64;
                    let mut sup = 0.0f64;
                    for j in cutoff..=j_hi {
                        let up = (j_hi - j) as u32;
                        let mut s = 0.0;
                        for c in &cells {
                            if let Some(h) = heights.get(&c.ancestor(up).unwrap()) {
                                s += h.powf(sp.p) * vol;
                            }
                        }
                        match sp.q {
                            Exponent::Finite(qv) => acc += s.powf(qv / sp.p),
                            Exponent::Infinite => sup = sup.max(s.powf(1.0 / sp.p)),
                        }
                    }
                    match sp.q {
                        Exponent::Finite(qv) => acc.powf(1.0 / qv),
                        Exponent::Infinite => sup,
                    }
                }
                Family::F => {
                    let mut integral = 0.0f64;
                    for c in &cells {
                        let mut acc = 0.0f64;
                        for j in cutoff..=j_hi {
                            if let Some(h) = heights.get(&c.ancestor((j_hi - j) as u32).unwrap())
                            {
                                match sp.q {
                                    Exponent::Finite(qv) => acc += h.powf(qv),
                                    Exponent::Infinite => acc = acc.max(*h),
                                }
                            }
                        }
                        if acc > 0.0 {
                            let g = match sp.q {
                                Exponent::Finite(qv) => acc.powf(sp.p / qv),
                                Exponent::Infinite => acc.powf(sp.p),
                            };
                            integral += g * vol;
                        }
                    }
                    integral.powf(1.0 / sp.p)
                }
            };
            best = best.max(2f64.powf((pw.j() * n as i32) as f64 * sp.tau) * la);
        }
        best
    }

    fn sp(family: Family, s: f64, tau: f64, p: f64, q: Exponent<f64>) -> SpaceParams<f64> {
        SpaceParams::new(family, s, tau, p, q, true).unwrap()
    }

    fn unit_field(window: CubeWindow) -> SequenceField<f64> {
        let mut t = SequenceField::new(window, 1).unwrap();
        t.insert(
            CubeIndex::new(0, &[0]).unwrap(),
            vec![Cplx::new(1.0, 0.0)],
        )
        .unwrap();
        t
    }

    #[test]
    fn zero_field_has_zero_norm() {
        let win = CubeWindow::new(1, -1, 2, 1, false).unwrap();
        let t = SequenceField::<f64>::new(win, 2).unwrap();
        for family in [Family::B, Family::F] {
            let v = seq_norm(&t, &sp(family, 0.3, 0.2, 1.5, Exponent::Finite(2.0)), &Weighting::Unweighted)
                .unwrap();
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn unit_cube_norm_is_one_for_all_parameters() {
        let win = CubeWindow::new(1, 0, 1, 1, false).unwrap();
        let t = unit_field(win);
        for family in [Family::B, Family::F] {
            for p in [0.5, 2.0] {
                for q in [Exponent::Finite(1.0), Exponent::Infinite] {
                    for s in [0.0, -0.7] {
                        for tau in [0.0, 0.3] {
                            let v = seq_norm(&t, &sp(family, s, tau, p, q), &Weighting::Unweighted)
                                .unwrap();
                            assert!((v - 1.0).abs() < 1e-12, "norm {v}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn two_cube_hand_value() {
        // Values e1 and 2 e1 on the two halves of [0,1): level function is
        // sqrt(2) and 2 sqrt(2), so the L2 norm over [0,1) is sqrt(5).
        let win = CubeWindow::new(1, 0, 1, 2, false).unwrap();
        let mut t = SequenceField::new(win, 1).unwrap();
        t.insert(CubeIndex::new(1, &[0]).unwrap(), vec![Cplx::new(1.0, 0.0)]).unwrap();
        t.insert(CubeIndex::new(1, &[1]).unwrap(), vec![Cplx::new(2.0, 0.0)]).unwrap();
        let params = sp(Family::B, 0.0, 0.0, 2.0, Exponent::Finite(2.0));
        let direct = seq_norm(&t, &params, &Weighting::Unweighted).unwrap();
        let oracle = oracle_norm(&t, &params, &win);
        assert!((direct - 5f64.sqrt()).abs() < 1e-12, "norm {direct}");
        assert!((oracle - 5f64.sqrt()).abs() < 1e-12, "oracle {oracle}");
    }

    #[test]
    fn evaluator_matches_bruteforce_oracle_1d() {
        let win = CubeWindow::new(1, -2, 3, 2, false).unwrap();
        let params = [
            sp(Family::B, 0.0, 0.0, 2.0, Exponent::Finite(2.0)),
            sp(Family::B, -0.5, 0.3, 1.0, Exponent::Finite(2.0)),
            sp(Family::F, 0.5, 0.0, 0.5, Exponent::Finite(3.0)),
            sp(Family::F, 0.0, 0.25, 2.0, Exponent::Finite(1.0)),
            sp(Family::B, 0.0, 0.1, 0.5, Exponent::Infinite),
            sp(Family::F, -0.3, 0.0, 1.0, Exponent::Infinite),
        ];
        for m in [1usize, 2] {
            for seed in 0..4u64 {
                let t = SequenceField::<f64>::random(win, m, 0.08, 11 + seed).unwrap();
                for pr in &params {
                    let direct = seq_norm(&t, pr, &Weighting::Unweighted).unwrap();
                    let oracle = oracle_norm(&t, pr, &win);
                    assert!(
                        (direct - oracle).abs() <= 1e-9 * oracle.max(1.0),
                        "m {m} seed {seed} {pr:?}: {direct} vs {oracle}"
                    );
                }
            }
        }
    }

    #[test]
    fn evaluator_matches_bruteforce_oracle_2d() {
        let win = CubeWindow::new(2, -1, 2, 1, false).unwrap();
        let params = [
            sp(Family::B, 0.2, 0.0, 1.0, Exponent::Finite(2.0)),
            sp(Family::F, 0.0, 0.2, 2.0, Exponent::Finite(0.5)),
            sp(Family::F, 0.0, 0.0, 0.5, Exponent::Infinite),
        ];
        for seed in 0..3u64 {
            let t = SequenceField::<f64>::random(win, 2, 0.05, 31 + seed).unwrap();
            for pr in &params {
                let direct = seq_norm(&t, pr, &Weighting::Unweighted).unwrap();
                let oracle = oracle_norm(&t, pr, &win);
                assert!(
                    (direct - oracle).abs() <= 1e-9 * oracle.max(1.0),
                    "seed {seed} {pr:?}: {direct} vs {oracle}"
                );
            }
        }
    }

    #[test]
    fn inhomogeneous_cutoff_matches_oracle() {
        // Support lives at j >= 0; the P-window reaches coarser cubes, whose
        // level cutoff clamps at 0 in the inhomogeneous convention.
        let support = CubeWindow::new(1, 0, 3, 2, true).unwrap();
        let p_win = CubeWindow::new(1, -2, 1, 2, false).unwrap();
        let t = SequenceField::<f64>::random(support, 1, 0.1, 5).unwrap();
        assert!(!t.is_empty());
        for family in [Family::B, Family::F] {
            let mut pr = sp(family, -0.2, 0.15, 1.5, Exponent::Finite(2.0));
            pr.homogeneous = false;
            let direct = seq_norm_over(&t, &pr, &Weighting::Unweighted, &p_win).unwrap();
            let oracle = oracle_norm(&t, &pr, &p_win);
            assert!(
                (direct - oracle).abs() <= 1e-9 * oracle.max(1.0),
                "{direct} vs {oracle}"
            );
        }
    }

    #[test]
    fn averaged_identity_equals_unweighted() {
        let win = CubeWindow::new(1, -1, 2, 1, false).unwrap();
        let idw = MatrixWeight::<f64>::identity(1, 2).unwrap();
        let fam = ReducingFamily::new(
            Arc::new(idw),
            2.0,
            ReducingMethod::Gram2,
            Quadrature::gauss(3, 2, 8),
        )
        .unwrap();
        let t = SequenceField::<f64>::random(win, 2, 0.2, 77).unwrap();
        for family in [Family::B, Family::F] {
            let pr = sp(family, 0.1, 0.2, 1.0, Exponent::Finite(3.0));
            let a = seq_norm(&t, &pr, &Weighting::Averaged(&fam)).unwrap();
            let u = seq_norm(&t, &pr, &Weighting::Unweighted).unwrap();
            assert!((a - u).abs() <= 1e-9 * u.max(1.0), "{a} vs {u}");
        }
    }

    #[test]
    fn pointwise_identity_equals_unweighted() {
        let win = CubeWindow::new(1, 0, 2, 1, false).unwrap();
        let w = MatrixWeight::<f64>::identity(1, 2).unwrap();
        let quad = Quadrature::gauss(3, 2, 0);
        let t = SequenceField::<f64>::random(win, 2, 0.25, 13).unwrap();
        for family in [Family::B, Family::F] {
            let pr = sp(family, -0.4, 0.0, 2.0, Exponent::Finite(2.0));
            let pv = seq_norm(&t, &pr, &Weighting::Pointwise(&w, quad)).unwrap();
            let uv = seq_norm(&t, &pr, &Weighting::Unweighted).unwrap();
            assert!((pv - uv).abs() <= 1e-9 * uv.max(1.0), "{pv} vs {uv}");
        }
    }

    #[test]
    fn homogeneity_and_r_triangle_hold() {
        let win = CubeWindow::new(1, 0, 2, 1, false).unwrap();
        let mut checked = 0usize;
        for seed in 0..250u64 {
            let t = SequenceField::<f64>::random(win, 1, 0.3, 1000 + seed).unwrap();
            let u = SequenceField::<f64>::random(win, 1, 0.3, 5000 + seed).unwrap();
            let fam_pick = if seed % 2 == 0 { Family::B } else { Family::F };
            let p = [0.5, 1.0, 2.0][(seed % 3) as usize];
            let q = [Exponent::Finite(0.7), Exponent::Finite(2.0), Exponent::Infinite]
                [(seed % 3) as usize];
            let pr = sp(fam_pick, 0.1, 0.0, p, q);
            let nt = seq_norm(&t, &pr, &Weighting::Unweighted).unwrap();
            let scaled = seq_norm(&t.scaled(2.5), &pr, &Weighting::Unweighted).unwrap();
            assert!((scaled - 2.5 * nt).abs() <= 1e-9 * nt.max(1.0));
            let nu = seq_norm(&u, &pr, &Weighting::Unweighted).unwrap();
            let nsum = seq_norm(&t.try_add(&u).unwrap(), &pr, &Weighting::Unweighted).unwrap();
            let rho = match q {
                Exponent::Finite(qv) => 1f64.min(p).min(qv),
                Exponent::Infinite => 1f64.min(p),
            };
            assert!(
                nsum.powf(rho) <= nt.powf(rho) + nu.powf(rho) + 1e-9,
                "r-triangle failed: {nsum} vs ({nt}, {nu}) at rho {rho}"
            );
            checked += 1;
        }
        assert_eq!(checked, 250);
    }

    #[test]
    fn tau_monotone_for_big_cube_suprema() {
        // Support inside the unit cube; P ranges over cubes with |P| >= 1
        // containing it, where the |P|^{-tau} prefactor is non-increasing
        // in tau.
        let support = CubeWindow::new(1, 0, 3, 1, true).unwrap();
        let p_win = CubeWindow::new(1, -3, 0, 2, false).unwrap();
        let p0 = CubeIndex::new(0, &[0]).unwrap();
        let mut t = SequenceField::<f64>::new(support, 1).unwrap();
        let raw = SequenceField::<f64>::random(support, 1, 0.4, 99).unwrap();
        for (q, v) in raw.iter() {
            if p0.contains_cube(q) {
                t.insert(*q, v.to_vec()).unwrap();
            }
        }
        assert!(!t.is_empty());
        for family in [Family::B, Family::F] {
            let mut prev = f64::INFINITY;
            for tau in [0.0, 0.25, 0.5, 1.0] {
                let mut pr = sp(family, 0.0, tau, 1.5, Exponent::Finite(2.0));
                pr.homogeneous = false;
                let v = seq_norm_over(&t, &pr, &Weighting::Unweighted, &p_win).unwrap();
                assert!(v <= prev * (1.0 + 1e-12), "tau {tau}: {v} > {prev}");
                prev = v;
            }
        }
    }

    #[test]
    fn maximal_sequence_single_entry_closed_form() {
        let win = CubeWindow::new(1, 0, 0, 4, false).unwrap();
        let t = unit_field(win);
        let r = 1.5;
        let lambda = 2.5;
        let star = maximal_sequence(&t, r, lambda).unwrap();
        for k in -4i64..=4 {
            let q = CubeIndex::new(0, &[k]).unwrap();
            let got = vec_norm(star.get(&q).unwrap());
            let expect = (1.0 + k.abs() as f64).powf(-lambda / r);
            assert!((got - expect).abs() < 1e-12, "k {k}: {got} vs {expect}");
        }
    }

    #[test]
    fn maximal_sequence_dominates_field() {
        let win = CubeWindow::new(2, 0, 2, 1, false).unwrap();
        let t = SequenceField::<f64>::random(win, 3, 0.15, 21).unwrap().scalarized();
        let star = maximal_sequence(&t, 0.8, 2.5).unwrap();
        for (q, v) in t.iter() {
            let tv = vec_norm(v);
            let sv = vec_norm(star.get(q).expect("support preserved"));
            assert!(sv >= tv * (1.0 - 1e-12), "{sv} < {tv}");
        }
    }

    #[test]
    fn maximal_norm_comparable_to_averaged_norm() {
        // The unweighted norm of {|A_Q t_Q|} equals the averaged norm of t;
        // the maximal sequence dominates it and stays comparable, with a
        // window-stable ratio band.
        let win = CubeWindow::new(1, 0, 2, 1, false).unwrap();
        let w = MatrixWeight::<f64>::anisotropic_product(1, 1, vec![0.5]).unwrap();
        let fam = ReducingFamily::new(
            Arc::new(w),
            2.0,
            ReducingMethod::Gram2,
            Quadrature::gauss(3, 2, 10),
        )
        .unwrap();
        let pr = sp(Family::B, 0.0, 0.0, 2.0, Exponent::Finite(2.0));
        let doubled = win.doubled().unwrap();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        let (mut lo2, mut hi2) = (f64::INFINITY, 0.0f64);
        for seed in 0..20u64 {
            let t = SequenceField::<f64>::random(win, 1, 0.3, 300 + seed).unwrap();
            if t.is_empty() {
                continue;
            }
            let mut reduced = SequenceField::<f64>::new(win, 1).unwrap();
            for (q, v) in t.iter() {
                let a = fam.operator(q).unwrap();
                let mag = vec_norm(&a.matrix().mul_vec(v));
                reduced.insert(*q, vec![Cplx::new(mag, 0.0)]).unwrap();
            }
            let star = maximal_sequence(&reduced, 2.0, 2.2).unwrap();
            let averaged = seq_norm(&t, &pr, &Weighting::Averaged(&fam)).unwrap();
            let maximal = seq_norm(&star, &pr, &Weighting::Unweighted).unwrap();
            let ratio = maximal / averaged;
            assert!(ratio >= 1.0 - 1e-12, "maximal norm must dominate: {ratio}");
            lo = lo.min(ratio);
            hi = hi.max(ratio);
            let averaged2 =
                seq_norm_over(&t, &pr, &Weighting::Averaged(&fam), &doubled).unwrap();
            let maximal2 =
                seq_norm_over(&star, &pr, &Weighting::Unweighted, &doubled).unwrap();
            let r2 = maximal2 / averaged2;
            lo2 = lo2.min(r2);
            hi2 = hi2.max(r2);
        }
        assert!(hi / lo < 10.0, "band [{lo}, {hi}] too wide");
        assert!((lo2 - lo).abs() <= 0.1 * lo && (hi2 - hi).abs() <= 0.1 * hi);
    }

    #[test]
    fn embedding_equalities_and_random_fields() {
        let win = CubeWindow::new(1, 0, 2, 1, false).unwrap();
        // p = q collapses all three norms.
        let t = SequenceField::<f64>::random(win, 1, 0.3, 42).unwrap();
        let rep = embedding_check(&t, 0.2, 1.5, Exponent::Finite(1.5), &Weighting::Unweighted)
            .unwrap();
        assert!(rep.holds);
        assert!((rep.b_qmax - rep.f).abs() <= 1e-12 * rep.f.max(1.0));
        assert!((rep.b_qmin - rep.f).abs() <= 1e-12 * rep.f.max(1.0));
        // Single cube: all equal regardless of (p, q).
        let single = unit_field(win);
        let rep = embedding_check(&single, 0.0, 0.7, Exponent::Finite(3.0), &Weighting::Unweighted)
            .unwrap();
        assert!(rep.holds && (rep.b_qmax - rep.b_qmin).abs() < 1e-12);
        // Random fields, both inequalities, including q = infinity.
        for seed in 0..50u64 {
            for (p, q) in [
                (1.0, Exponent::Finite(2.0)),
                (2.0, Exponent::Finite(1.0)),
                (0.5, Exponent::Finite(3.0)),
                (1.0, Exponent::Infinite),
            ] {
                let t = SequenceField::<f64>::random(win, 2, 0.25, 7000 + seed).unwrap();
                let rep =
                    embedding_check(&t, -0.1, p, q, &Weighting::Unweighted).unwrap();
                assert!(
                    rep.holds,
                    "embedding failed at seed {seed}, p {p}: {rep:?}"
                );
            }
        }
    }

    #[test]
    fn shrunken_indicators_scale_b_norms_exactly() {
        let win = CubeWindow::new(2, 0, 2, 1, false).unwrap();
        let delta = 0.25f64; // 2^{-n}, n = 2
        for seed in 0..6u64 {
            let t = SequenceField::<f64>::random(win, 1, 0.2, 600 + seed).unwrap();
            if t.is_empty() {
                continue;
            }
            for p in [0.5, 1.0, 2.0] {
                let pr = sp(Family::B, 0.1, 0.2, p, Exponent::Finite(2.0));
                let full = seq_norm(&t, &pr, &Weighting::Unweighted).unwrap();
                let shrunk = seq_norm_shrunken(&t, &pr).unwrap();
                let expect = delta.powf(1.0 / p) * full;
                assert!(
                    (shrunk - expect).abs() <= 1e-9 * full,
                    "p {p}: {shrunk} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn shrunken_indicators_keep_f_norms_in_band() {
        let win = CubeWindow::new(1, 0, 3, 1, false).unwrap();
        let doubled = win.doubled().unwrap();
        for seed in 0..6u64 {
            let t = SequenceField::<f64>::random(win, 1, 0.3, 900 + seed).unwrap();
            if t.is_empty() {
                continue;
            }
            let pr = sp(Family::F, 0.0, 0.0, 1.0, Exponent::Finite(2.0));
            let full = seq_norm(&t, &pr, &Weighting::Unweighted).unwrap();
            let shrunk = seq_norm_shrunken(&t, &pr).unwrap();
            let ratio = shrunk / full;
            assert!(ratio <= 1.0 + 1e-12 && ratio > 0.0, "ratio {ratio}");
            let full2 = seq_norm_over(&t, &pr, &Weighting::Unweighted, &doubled).unwrap();
            let shrunk2 = seq_norm_shrunken_over(&t, &pr, &doubled).unwrap();
            let ratio2 = shrunk2 / full2;
            assert!((ratio2 - ratio).abs() <= 0.05 * ratio, "{ratio} -> {ratio2}");
        }
    }

    #[test]
    fn criticality_classification() {
        use Criticality::*;
        let cases = [
            (Family::B, 0.6, 2.0, Exponent::Finite(2.0), Supercritical),
            (Family::F, 0.5, 2.0, Exponent::Infinite, Supercritical),
            (Family::B, 0.5, 2.0, Exponent::Infinite, Supercritical),
            (Family::F, 0.5, 2.0, Exponent::Finite(3.0), Critical),
            (Family::B, 0.5, 2.0, Exponent::Finite(3.0), Subcritical),
            (Family::F, 0.3, 2.0, Exponent::Finite(3.0), Subcritical),
            (Family::B, 0.0, 0.5, Exponent::Finite(1.0), Subcritical),
        ];
        for (family, tau, p, q, expect) in cases {
            let pr = SpaceParams::new(family, 0.0, tau, p, q, true).unwrap();
            assert_eq!(pr.criticality(), expect, "{family:?} tau {tau} p {p}");
        }
    }

    #[test]
    fn derived_exponents_match_hand_values() {
        // (n, space, d1, d2) -> (J_tilde, n/2 + s_tilde, J_tilde - n/2 - s_tilde)
        // checked later against the threshold builder; here the raw pieces.
        let b22 = sp(Family::B, 0.0, 0.0, 2.0, Exponent::Finite(2.0));
        assert_eq!(b22.j_exponent(1), 1.0);
        assert_eq!(b22.j_tau(1), 1.0);
        assert_eq!(b22.tau_hat(1, 0.0), 0.0);
        assert_eq!(b22.j_tilde(1, 0.0, 0.0), 1.0);

        let b11 = sp(Family::B, 0.0, 0.0, 1.0, Exponent::Finite(1.0));
        assert_eq!(b11.j_tilde(1, 0.0, 1.0), 2.0);
        assert_eq!(b11.s_tilde(1, 0.0), 0.0);

        let b12 = sp(Family::B, 0.0, 1.0, 1.0, Exponent::Finite(2.0));
        assert_eq!(b12.criticality(), Criticality::Subcritical);
        assert_eq!(b12.j_tilde(1, 0.0, 0.0), 1.0);

        let f_q = sp(Family::F, 0.0, 0.0, 2.0, Exponent::Finite(0.5));
        assert_eq!(f_q.j_exponent(2), 4.0);
    }

    #[test]
    fn j_tilde_identity_cross_check() {
        // J_tilde - n/2 - s_tilde == J_tau + d2/p - n/2 - s - n(tau - 1/p)_+
        // for every parameter combination (piecewise algebra of the minimum).
        let taus: [f64; 4] = [0.0, 0.3, 0.5, 0.9];
        let ps: [f64; 3] = [0.5, 1.0, 2.0];
        let d1s: [f64; 3] = [0.0, 0.4, 1.5];
        let d2s: [f64; 2] = [0.0, 1.0];
        for family in [Family::B, Family::F] {
            for &tau in &taus {
                for &p in &ps {
                    for &d1 in &d1s {
                        for &d2 in &d2s {
                            for q in [Exponent::Finite(1.5), Exponent::Infinite] {
                                let pr = SpaceParams::new(family, 0.25, tau, p, q, true).unwrap();
                                let n = 2usize;
                                let lhs = pr.j_tilde(n, d1, d2) - 1.0 - pr.s_tilde(n, d1);
                                let rhs = pr.j_tau(n) + d2 / p
                                    - 1.0
                                    - 0.25
                                    - 2.0 * (tau - 1.0 / p).max(0.0);
                                assert!(
                                    (lhs - rhs).abs() < 1e-12,
                                    "mismatch at {family:?} tau {tau} p {p} d1 {d1}"
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn random_fields_are_seed_deterministic() {
        let win = CubeWindow::new(2, 0, 1, 1, false).unwrap();
        let a = SequenceField::<f64>::random(win, 2, 0.5, 123).unwrap();
        let b = SequenceField::<f64>::random(win, 2, 0.5, 123).unwrap();
        assert_eq!(a.len(), b.len());
        for ((qa, va), (qb, vb)) in a.iter().zip(b.iter()) {
            assert_eq!(qa, qb);
            assert_eq!(va, vb);
        }
        let c = SequenceField::<f64>::random(win, 2, 0.5, 124).unwrap();
        assert!(c.len() != a.len() || c.iter().zip(a.iter()).any(|((_, x), (_, y))| x != y));
    }
}
