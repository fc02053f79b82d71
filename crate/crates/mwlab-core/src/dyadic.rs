//! Exact dyadic cube lattices on `R^n`, `n <= 3`.
//!
//! A dyadic cube at level `j` and position `k in Z^n` is the half-open box
//! `2^{-j}([0,1)^n + k)`; larger `j` means smaller cubes. Levels and positions
//! are stored as integers, so containment, tiling, and corner coordinates are
//! exact; floating-point enters only when a corner is converted to a scalar.

use crate::scalar::Real;
use serde::Serialize;
use thiserror::Error;

/// Maximum spatial dimension supported by the lattice types.
pub const MAX_DIM: usize = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DyadicError {
    #[error("dimension {0} outside 1..={MAX_DIM}")]
    BadDimension(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("integer overflow at level shift {0}")]
    Overflow(i32),
    #[error("cube edge must be positive and finite")]
    BadEdge,
    #[error("window levels empty: j_min {0} > j_max {1}")]
    EmptyWindow(i32, i32),
}

/// Index of one dyadic cube: the box `2^{-j}([0,1)^n + k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CubeIndex {
    j: i32,
    k: [i64; MAX_DIM],
    n: u8,
}

impl CubeIndex {
    pub fn new(j: i32, k: &[i64]) -> Result<Self, DyadicError> {
        if k.is_empty() || k.len() > MAX_DIM {
            return Err(DyadicError::BadDimension(k.len()));
        }
        let mut kk = [0i64; MAX_DIM];
        kk[..k.len()].copy_from_slice(k);
        Ok(Self { j, k: kk, n: k.len() as u8 })
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    /// Level; the cube side is `2^{-j}`.
    pub fn j(&self) -> i32 {
        self.j
    }

    pub fn k(&self) -> &[i64] {
        &self.k[..self.n as usize]
    }

    /// Side length `2^{-j}`.
    pub fn side<T: Real>(&self) -> T {
        exp2::<T>(-self.j)
    }

    /// Volume `2^{-jn}`.
    pub fn volume<T: Real>(&self) -> T {
        exp2::<T>(-self.j * self.n as i32)
    }

    /// Lower corner `2^{-j} k`.
    pub fn lower_corner<T: Real>(&self) -> Vec<T> {
        let s = self.side::<T>();
        self.k().iter().map(|&ki| T::of(ki as f64) * s).collect()
    }

    /// Center `2^{-j}(k + 1/2)`.
    pub fn center<T: Real>(&self) -> Vec<T> {
        let s = self.side::<T>();
        let half = T::of(0.5);
        self.k()
            .iter()
            .map(|&ki| (T::of(ki as f64) + half) * s)
            .collect()
    }

    /// Axis intervals `[2^{-j} k_i, 2^{-j}(k_i + 1))`.
    pub fn axis_intervals<T: Real>(&self) -> Vec<(T, T)> {
        let s = self.side::<T>();
        self.k()
            .iter()
            .map(|&ki| (T::of(ki as f64) * s, T::of(ki as f64 + 1.0) * s))
            .collect()
    }

    /// Half-open membership test for a point.
    pub fn contains_point<T: Real>(&self, x: &[T]) -> bool {
        x.len() == self.n()
            && self
                .axis_intervals::<T>()
                .iter()
                .zip(x)
                .all(|(&(lo, hi), &xi)| lo <= xi && xi < hi)
    }

    /// Ancestor `levels` steps up; errors on position overflow.
    pub fn ancestor(&self, levels: u32) -> Result<Self, DyadicError> {
        if levels >= 63 {
            return Err(DyadicError::Overflow(self.j));
        }
        let mut k = self.k;
        for ki in k.iter_mut().take(self.n()) {
            // Arithmetic shift floors toward -inf, matching cube nesting for
            // negative positions.
            *ki >>= levels;
        }
        let j = self.j.checked_sub(levels as i32).ok_or(DyadicError::Overflow(self.j))?;
        Ok(Self { j, k, n: self.n })
    }

    pub fn parent(&self) -> Result<Self, DyadicError> {
        self.ancestor(1)
    }

    /// The `2^{n*depth}` level-`j+depth` cubes tiling `self`, in lexicographic
    /// position order.
    pub fn children(&self, depth: u32) -> Result<Vec<Self>, DyadicError> {
        if depth >= 20 {
            return Err(DyadicError::Overflow(self.j));
        }
        let j = self.j.checked_add(depth as i32).ok_or(DyadicError::Overflow(self.j))?;
        let side = 1i64 << depth;
        let mut base = [0i64; MAX_DIM];
        for (b, &ki) in base.iter_mut().zip(self.k()) {
            *b = ki.checked_mul(side).ok_or(DyadicError::Overflow(j))?;
        }
        let n = self.n();
        let mut out = Vec::with_capacity((side as usize).pow(n as u32));
        let mut off = [0i64; MAX_DIM];
        loop {
            let mut k = base;
            for i in 0..n {
                k[i] += off[i];
            }
            out.push(Self { j, k, n: self.n });
            // Odometer over the last axis fastest = lexicographic order.
            let mut axis = n;
            loop {
                if axis == 0 {
                    return Ok(out);
                }
                axis -= 1;
                off[axis] += 1;
                if off[axis] < side {
                    break;
                }
                off[axis] = 0;
            }
        }
    }

    /// Exact nesting test: does `self` contain `other`?
    pub fn contains_cube(&self, other: &Self) -> bool {
        if self.n != other.n || other.j < self.j {
            return false;
        }
        let shift = other.j - self.j;
        if shift >= 63 {
            return false;
        }
        self.k()
            .iter()
            .zip(other.k())
            .all(|(&kp, &kc)| (kc >> shift) == kp)
    }

    /// Exact intersection test (dyadic cubes intersect iff one contains the
    /// other).
    pub fn intersects(&self, other: &Self) -> bool {
        self.contains_cube(other) || other.contains_cube(self)
    }
}

fn exp2<T: Real>(e: i32) -> T {
    T::of(2.0).powi(e)
}

/// Finite window of cubes: levels `j_min..=j_max`, positions `|k|_inf <=
/// spatial_radius * 2^{j - j_min}`, so every level spans roughly the same
/// spatial box. With `inhomogeneous` set, levels are clamped to `j >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CubeWindow {
    n: u8,
    j_min: i32,
    j_max: i32,
    spatial_radius: i64,
    inhomogeneous: bool,
}

impl CubeWindow {
    pub fn new(
        n: usize,
        j_min: i32,
        j_max: i32,
        spatial_radius: i64,
        inhomogeneous: bool,
    ) -> Result<Self, DyadicError> {
        if n == 0 || n > MAX_DIM {
            return Err(DyadicError::BadDimension(n));
        }
        let j_min = if inhomogeneous { j_min.max(0) } else { j_min };
        if j_min > j_max || spatial_radius < 0 {
            return Err(DyadicError::EmptyWindow(j_min, j_max));
        }
        if j_max - j_min >= 40 {
            return Err(DyadicError::Overflow(j_max));
        }
        Ok(Self { n: n as u8, j_min, j_max, spatial_radius, inhomogeneous })
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn j_min(&self) -> i32 {
        self.j_min
    }

    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    pub fn spatial_radius(&self) -> i64 {
        self.spatial_radius
    }

    pub fn is_inhomogeneous(&self) -> bool {
        self.inhomogeneous
    }

    /// Position bound at level `j`: `spatial_radius * 2^{j - j_min}`.
    pub fn radius_at(&self, j: i32) -> i64 {
        self.spatial_radius << (j - self.j_min).max(0)
    }

    pub fn contains(&self, q: &CubeIndex) -> bool {
        q.n() == self.n()
            && q.j() >= self.j_min
            && q.j() <= self.j_max
            && q.k().iter().all(|&ki| ki.abs() <= self.radius_at(q.j()))
    }

    /// Deterministic enumeration: levels ascending, positions lexicographic.
    pub fn cubes(&self) -> Vec<CubeIndex> {
        let mut out = Vec::new();
        for j in self.j_min..=self.j_max {
            self.push_level(j, &mut out);
        }
        out
    }

    /// Level-`j` slice of the window, lexicographic.
    pub fn cubes_at_level(&self, j: i32) -> Vec<CubeIndex> {
        let mut out = Vec::new();
        if (self.j_min..=self.j_max).contains(&j) {
            self.push_level(j, &mut out);
        }
        out
    }

    fn push_level(&self, j: i32, out: &mut Vec<CubeIndex>) {
        let r = self.radius_at(j);
        let n = self.n();
        let mut k = [0i64; MAX_DIM];
        for i in 0..n {
            k[i] = -r;
        }
        loop {
            out.push(CubeIndex { j, k, n: self.n });
            let mut axis = n;
            loop {
                if axis == 0 {
                    return;
                }
                axis -= 1;
                k[axis] += 1;
                if k[axis] <= r {
                    break;
                }
                k[axis] = -r;
            }
        }
    }

    pub fn len(&self) -> usize {
        (self.j_min..=self.j_max)
            .map(|j| (2 * self.radius_at(j) + 1).pow(self.n as u32) as usize)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// One doubling step for stability probes: one coarser level, one finer
    /// level, doubled spatial radius. Inhomogeneous windows stay clamped at
    /// `j >= 0`.
    pub fn doubled(&self) -> Result<Self, DyadicError> {
        Self::new(
            self.n(),
            self.j_min - 1,
            self.j_max + 1,
            self.spatial_radius * 2,
            self.inhomogeneous,
        )
    }
}

/// One cube of a shifted dyadic system: `2^{-j}([0,1)^n + k + (-1)^j gamma)`
/// with `gamma in {0, 1/3, 2/3}^n`. Corners are exact rationals with
/// denominator `3 * 2^j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ShiftedCube {
    j: i32,
    k: [i64; MAX_DIM],
    gamma_thirds: [u8; MAX_DIM],
    n: u8,
}

impl ShiftedCube {
    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn j(&self) -> i32 {
        self.j
    }

    pub fn k(&self) -> &[i64] {
        &self.k[..self.n as usize]
    }

    /// Shift numerators over 3: entries in `{0, 1, 2}`.
    pub fn gamma_thirds(&self) -> &[u8] {
        &self.gamma_thirds[..self.n as usize]
    }

    pub fn side<T: Real>(&self) -> T {
        exp2::<T>(-self.j)
    }

    /// Exact corner numerators over the common denominator `3 * 2^j`: the
    /// lower corner on axis `i` is `(3 k_i + sign * gamma_i) / (3 * 2^j)` with
    /// `sign = (-1)^j`.
    pub fn corner_numerators(&self) -> Vec<i64> {
        let sign = if self.j.rem_euclid(2) == 0 { 1 } else { -1 };
        self.k()
            .iter()
            .zip(self.gamma_thirds())
            .map(|(&ki, &g)| 3 * ki + sign * g as i64)
            .collect()
    }

    pub fn lower_corner<T: Real>(&self) -> Vec<T> {
        let denom = T::of(3.0) * exp2::<T>(self.j);
        self.corner_numerators()
            .iter()
            .map(|&num| T::of(num as f64) / denom)
            .collect()
    }

    /// Half-open containment of an arbitrary box given by corner and edge.
    pub fn contains_box<T: Real>(&self, corner: &[T], edge: T) -> bool {
        let lo = self.lower_corner::<T>();
        let s = self.side::<T>();
        corner
            .iter()
            .zip(&lo)
            .all(|(&ci, &li)| li <= ci && ci + edge <= li + s)
    }
}

/// Finds a shifted-system cube containing the box `[corner, corner + edge)^n`
/// with side in `(1.5 * edge, 3 * edge]`.
///
/// The side is the unique power of two in that ratio-2 interval; on each axis
/// one of the three shifts `{0, 1/3, 2/3}` admits a lattice cell containing
/// the interval, and the smallest such shift is chosen, so the result is
/// deterministic.
pub fn covering_shifted_cube<T: Real>(
    corner: &[T],
    edge: T,
) -> Result<ShiftedCube, DyadicError> {
    let n = corner.len();
    if n == 0 || n > MAX_DIM {
        return Err(DyadicError::BadDimension(n));
    }
    if !(edge > T::zero()) || !edge.is_finite() {
        return Err(DyadicError::BadEdge);
    }
    let three_e = T::of(3.0) * edge;
    // Largest power of two <= 3 * edge, with a correction loop so that float
    // log rounding cannot pick the wrong side.
    let mut m = three_e.log2().floor().to_i32().ok_or(DyadicError::BadEdge)?;
    while exp2::<T>(m) > three_e {
        m -= 1;
    }
    while exp2::<T>(m + 1) <= three_e {
        m += 1;
    }
    let j = -m;
    if j.abs() > 500 {
        return Err(DyadicError::Overflow(j));
    }
    let side = exp2::<T>(m);
    let sign: i64 = if j.rem_euclid(2) == 0 { 1 } else { -1 };
    let third = T::one() / T::of(3.0);

    let mut k = [0i64; MAX_DIM];
    let mut gamma = [0u8; MAX_DIM];
    for axis in 0..n {
        let a = corner[axis];
        let mut found = false;
        for g in 0u8..3 {
            let shift = T::of(sign as f64) * T::of(g as f64) * third;
            // Lattice cell index: floor(a / side - shift).
            let t = a / side - shift;
            let kf = t.floor();
            let ki = match kf.to_i64() {
                Some(v) => v,
                None => return Err(DyadicError::Overflow(j)),
            };
            let lo = (T::of(ki as f64) + shift) * side;
            let hi = (T::of(ki as f64 + 1.0) + shift) * side;
            if lo <= a && a + edge <= hi {
                k[axis] = ki;
                gamma[axis] = g;
                found = true;
                break;
            }
        }
        if !found {
            // Cannot happen mathematically (three shifts 1/3 apart against a
            // gap of at least 1/3); guards float-boundary ties.
            return Err(DyadicError::BadEdge);
        }
    }
    Ok(ShiftedCube { j, k, gamma_thirds: gamma, n: n as u8 })
}
