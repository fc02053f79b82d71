//! Matrix weights `W : R^n -> HermitianPD(m)`, singular-aware tensor
//! quadrature, and per-cube reducing operators.
//!
//! A reducing operator for a cube `Q` is a positive matrix `A_Q` with
//! `|A_Q z|` comparable to `rho_Q(z) = (avg_Q |W^{1/p}(x) z|^p dx)^{1/p}`
//! uniformly in the direction `z`, with constants depending only on the
//! matrix size. Two constructions are provided: a Gram average
//! `(avg_Q W^{2/p})^{1/2}` (exact for `p = 2`) and the shape matrix of the
//! minimum-volume ellipsoid enclosing sampled boundary points of the
//! `rho_Q` unit ball. Every operator can be certified a posteriori on a
//! fresh direction set.

use crate::dyadic::{CubeIndex, DyadicError, MAX_DIM};
use crate::linalg::{CMatrix, HermitianPd, LinalgError};
use crate::scalar::Real;
use crate::Cplx;
use serde::Serialize;
use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};
use thiserror::Error;

/// Exponent floor for built-in power-type weights. Below this the layered
/// quadrature loses too much mass near the singular hyperplane to certify
/// anything.
pub const MIN_EXPONENT: f64 = -0.9;

#[derive(Debug, Error)]
pub enum WeightError {
    #[error("weight evaluated on its singular set")]
    SingularPoint,
    #[error("exponent {0} not above {MIN_EXPONENT}")]
    BadExponent(f64),
    #[error("parameter error: {0}")]
    BadParam(String),
    #[error("matrix supplied for U is not unitary (defect {0:e})")]
    NotUnitary(f64),
    #[error("quadrature did not converge (relative change {0:e})")]
    NonConvergent(f64),
    #[error("ellipsoid fit did not converge within the iteration cap")]
    MveeNoConvergence,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Dyadic(#[from] DyadicError),
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

/// Per-cell 1D rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scheme {
    Midpoint,
    /// Gauss-Legendre with 1..=5 points per cell.
    Gauss(u8),
}

/// Tensor-product quadrature over axis-aligned boxes.
///
/// Each axis interval is cut into `refinement` uniform cells; when
/// `singular_layers > 0` and the interval touches or straddles `x = 0`, the
/// cell adjacent to `0` is replaced by that many dyadic layers shrinking
/// toward the hyperplane (the innermost sliver keeps its cell rule, so nodes
/// never land on the singularity).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Quadrature {
    pub scheme: Scheme,
    pub refinement: u32,
    pub singular_layers: u32,
}

impl Quadrature {
    pub fn new(scheme: Scheme, refinement: u32, singular_layers: u32) -> Result<Self, WeightError> {
        if refinement == 0 {
            return Err(WeightError::BadParam("refinement must be >= 1".into()));
        }
        if let Scheme::Gauss(g) = scheme {
            if !(1..=5).contains(&g) {
                return Err(WeightError::BadParam(format!("Gauss order {g} outside 1..=5")));
            }
        }
        if singular_layers > 60 {
            return Err(WeightError::BadParam("singular_layers too large".into()));
        }
        Ok(Self { scheme, refinement, singular_layers })
    }

    pub fn midpoint(refinement: u32, singular_layers: u32) -> Self {
        Self::new(Scheme::Midpoint, refinement, singular_layers).expect("valid")
    }

    pub fn gauss(order: u8, refinement: u32, singular_layers: u32) -> Self {
        Self::new(Scheme::Gauss(order), refinement, singular_layers).expect("valid")
    }

    /// Same rule with doubled uniform refinement (convergence probes).
    pub fn refined(&self) -> Self {
        Self { refinement: self.refinement * 2, ..*self }
    }

    fn cell_rule<T: Real>(&self) -> Vec<(T, T)> {
        // Nodes and weights on [-1, 1].
        let g: &[(f64, f64)] = match self.scheme {
            Scheme::Midpoint | Scheme::Gauss(1) => &[(0.0, 2.0)],
            Scheme::Gauss(2) => &[
                (-0.577_350_269_189_625_76, 1.0),
                (0.577_350_269_189_625_76, 1.0),
            ],
            Scheme::Gauss(3) => &[
                (-0.774_596_669_241_483_38, 5.0 / 9.0),
                (0.0, 8.0 / 9.0),
                (0.774_596_669_241_483_38, 5.0 / 9.0),
            ],
            Scheme::Gauss(4) => &[
                (-0.861_136_311_594_052_58, 0.347_854_845_137_453_86),
                (-0.339_981_043_584_856_26, 0.652_145_154_862_546_14),
                (0.339_981_043_584_856_26, 0.652_145_154_862_546_14),
                (0.861_136_311_594_052_58, 0.347_854_845_137_453_86),
            ],
            Scheme::Gauss(5) => &[
                (-0.906_179_845_938_663_99, 0.236_926_885_056_189_09),
                (-0.538_469_310_105_683_09, 0.478_628_670_499_366_47),
                (0.0, 0.568_888_888_888_888_89),
                (0.538_469_310_105_683_09, 0.478_628_670_499_366_47),
                (0.906_179_845_938_663_99, 0.236_926_885_056_189_09),
            ],
            Scheme::Gauss(_) => unreachable!("validated at construction"),
        };
        g.iter().map(|&(x, w)| (T::of(x), T::of(w))).collect()
    }

    /// 1D nodes and weights over `[lo, hi)`. Weights sum to the length.
    pub fn axis_nodes<T: Real>(&self, lo: T, hi: T) -> Vec<(T, T)> {
        assert!(lo < hi && lo.is_finite() && hi.is_finite(), "bad interval");
        let rule = self.cell_rule::<T>();
        let mut out = Vec::new();
        let zero = T::zero();
        let mut pieces: Vec<(T, T)> = Vec::with_capacity(2);
        if self.singular_layers > 0 && lo < zero && zero < hi {
            pieces.push((lo, zero));
            pieces.push((zero, hi));
        } else {
            pieces.push((lo, hi));
        }
        let span = hi - lo;
        for (a, b) in pieces {
            if b - a <= span * T::of(1e-14) {
                continue;
            }
            self.piece_nodes(a, b, &rule, &mut out);
        }
        out
    }

    fn piece_nodes<T: Real>(&self, a: T, b: T, rule: &[(T, T)], out: &mut Vec<(T, T)>) {
        let zero = T::zero();
        let layered_lo = self.singular_layers > 0 && a == zero;
        let layered_hi = self.singular_layers > 0 && b == zero;
        let r = self.refinement as usize;
        let h = (b - a) / T::of(r as f64);
        let mut cells: Vec<(T, T)> = Vec::new();
        for i in 0..r {
            let c0 = a + h * T::of(i as f64);
            let c1 = if i + 1 == r { b } else { a + h * T::of(i as f64 + 1.0) };
            if i == 0 && layered_lo {
                // Dyadic layers shrinking toward a = 0.
                let mut top = c1;
                for _ in 0..self.singular_layers {
                    let bot = top * T::of(0.5);
                    cells.push((bot, top));
                    top = bot;
                }
                cells.push((zero, top));
            } else if i + 1 == r && layered_hi {
                let mut bot = c0;
                for _ in 0..self.singular_layers {
                    let t = bot * T::of(0.5);
                    cells.push((bot, t));
                    bot = t;
                }
                cells.push((bot, zero));
            } else {
                cells.push((c0, c1));
            }
        }
        for (c0, c1) in cells {
            let mid = (c0 + c1) * T::of(0.5);
            let half = (c1 - c0) * T::of(0.5);
            for &(xi, wi) in rule {
                out.push((mid + half * xi, half * wi));
            }
        }
    }
}

/// Axis-aligned box domain (half-open in each axis).
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain<T> {
    lo: Vec<T>,
    hi: Vec<T>,
}

impl<T: Real> BoxDomain<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>) -> Result<Self, WeightError> {
        if lo.is_empty() || lo.len() > MAX_DIM || lo.len() != hi.len() {
            return Err(WeightError::BadParam("box dimension mismatch".into()));
        }
        if lo.iter().zip(&hi).any(|(&a, &b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(WeightError::BadParam("box must have positive edges".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn from_cube(q: &CubeIndex) -> Self {
        let iv = q.axis_intervals::<T>();
        Self {
            lo: iv.iter().map(|&(a, _)| a).collect(),
            hi: iv.iter().map(|&(_, b)| b).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.lo.len()
    }

    pub fn axis(&self, i: usize) -> (T, T) {
        (self.lo[i], self.hi[i])
    }

    pub fn measure(&self) -> T {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&a, &b)| b - a)
            .fold(T::one(), |acc, len| acc * len)
    }

    /// Concentric dilate by `lambda >= 1`.
    pub fn concentric_dilate(&self, lambda: T) -> Self {
        let half = T::of(0.5);
        let lo = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(&a, &b)| (a + b) * half - (b - a) * half * lambda)
            .collect();
        let hi = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(&a, &b)| (a + b) * half + (b - a) * half * lambda)
            .collect();
        Self { lo, hi }
    }
}

/// Streams all tensor nodes of per-axis rules through a closure: `f(x, w)`.
pub fn tensor_for_each<T: Real>(axes: &[Vec<(T, T)>], mut f: impl FnMut(&[T], T)) {
    let n = axes.len();
    assert!(n >= 1 && n <= MAX_DIM);
    let mut idx = [0usize; MAX_DIM];
    let mut x = [T::zero(); MAX_DIM];
    loop {
        let mut w = T::one();
        for i in 0..n {
            let (xi, wi) = axes[i][idx[i]];
            x[i] = xi;
            w = w * wi;
        }
        f(&x[..n], w);
        let mut ax = n;
        loop {
            if ax == 0 {
                return;
            }
            ax -= 1;
            idx[ax] += 1;
            if idx[ax] < axes[ax].len() {
                break;
            }
            idx[ax] = 0;
        }
    }
}

// ---------------------------------------------------------------------------
// Matrix weights
// ---------------------------------------------------------------------------

pub type CustomWeightFn<T> =
    Arc<dyn Fn(&[T]) -> Result<CMatrix<T>, WeightError> + Send + Sync>;

#[derive(Clone)]
pub enum WeightKind<T> {
    /// `W = I_m`.
    Identity,
    /// `W = |x|^d I_m` (Euclidean norm).
    PowerIsotropic { d: T },
    /// `W = prod_i |x_i|^{a_i} I_m`.
    AnisotropicProduct { a: Vec<T> },
    /// `W = U diag(|x|^{a_1}, ..., |x|^{a_m}) U^*` with a fixed unitary `U`.
    ConjugatedDiagonal { a: Vec<T>, u: CMatrix<T> },
    /// Arbitrary pointwise Hermitian-PD sampler.
    Custom(CustomWeightFn<T>),
}

impl<T> std::fmt::Debug for WeightKind<T>
where
    T: std::fmt::Debug,
{
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WeightKind::Identity => write!(f, "Identity"),
            WeightKind::PowerIsotropic { d } => write!(f, "PowerIsotropic({d:?})"),
            WeightKind::AnisotropicProduct { a } => write!(f, "AnisotropicProduct({a:?})"),
            WeightKind::ConjugatedDiagonal { a, .. } => write!(f, "ConjugatedDiagonal({a:?})"),
            WeightKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Matrix weight on `R^n` with values in the Hermitian PD matrices of size
/// `m`. Built-in kinds are singular only on coordinate hyperplanes (or the
/// origin), and expose scalar/diagonal fast paths the quadrature exploits.
#[derive(Debug, Clone)]
pub struct MatrixWeight<T> {
    n: usize,
    m: usize,
    kind: WeightKind<T>,
}

impl<T: Real> MatrixWeight<T> {
    pub fn identity(n: usize, m: usize) -> Result<Self, WeightError> {
        Self::validate_dims(n, m)?;
        Ok(Self { n, m, kind: WeightKind::Identity })
    }

    pub fn power_isotropic(n: usize, m: usize, d: T) -> Result<Self, WeightError> {
        Self::validate_dims(n, m)?;
        Self::validate_exponent(d)?;
        Ok(Self { n, m, kind: WeightKind::PowerIsotropic { d } })
    }

    pub fn anisotropic_product(n: usize, m: usize, a: Vec<T>) -> Result<Self, WeightError> {
        Self::validate_dims(n, m)?;
        if a.len() != n {
            return Err(WeightError::BadParam(format!(
                "anisotropic exponent count {} != n {}",
                a.len(),
                n
            )));
        }
        for &ai in &a {
            Self::validate_exponent(ai)?;
        }
        Ok(Self { n, m, kind: WeightKind::AnisotropicProduct { a } })
    }

    pub fn conjugated_diagonal(
        n: usize,
        a: Vec<T>,
        u: CMatrix<T>,
    ) -> Result<Self, WeightError> {
        let m = a.len();
        Self::validate_dims(n, m)?;
        if u.dim() != m {
            return Err(WeightError::BadParam("U size must match exponent count".into()));
        }
        for &ai in &a {
            Self::validate_exponent(ai)?;
        }
        let defect = u
            .adjoint()
            .mul(&u)
            .sub(&CMatrix::identity(m))
            .frobenius_norm();
        if defect > T::of(1e-10) {
            return Err(WeightError::NotUnitary(defect.as_f64()));
        }
        Ok(Self { n, m, kind: WeightKind::ConjugatedDiagonal { a, u } })
    }

    pub fn custom(n: usize, m: usize, f: CustomWeightFn<T>) -> Result<Self, WeightError> {
        Self::validate_dims(n, m)?;
        Ok(Self { n, m, kind: WeightKind::Custom(f) })
    }

    fn validate_dims(n: usize, m: usize) -> Result<(), WeightError> {
        if n == 0 || n > MAX_DIM {
            return Err(WeightError::BadParam(format!("n {n} outside 1..={MAX_DIM}")));
        }
        if m == 0 || m > crate::linalg::MAX_MATRIX_DIM {
            return Err(WeightError::BadParam(format!("m {m} too large")));
        }
        Ok(())
    }

    fn validate_exponent(a: T) -> Result<(), WeightError> {
        if !(a.as_f64() > MIN_EXPONENT) || !a.is_finite() {
            return Err(WeightError::BadExponent(a.as_f64()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn kind(&self) -> &WeightKind<T> {
        &self.kind
    }

    /// True when `W(x)` is a scalar multiple of the identity everywhere.
    pub fn is_scalar_kind(&self) -> bool {
        matches!(
            self.kind,
            WeightKind::Identity
                | WeightKind::PowerIsotropic { .. }
                | WeightKind::AnisotropicProduct { .. }
        )
    }

    fn scalar_at(&self, x: &[T]) -> Result<T, WeightError> {
        let v = match &self.kind {
            WeightKind::Identity => T::one(),
            WeightKind::PowerIsotropic { d } => {
                if d.is_zero() {
                    T::one()
                } else {
                    let r = x.iter().map(|&xi| xi * xi).sum::<T>().sqrt();
                    r.powf(*d)
                }
            }
            WeightKind::AnisotropicProduct { a } => {
                let mut acc = T::one();
                for (&xi, &ai) in x.iter().zip(a) {
                    if !ai.is_zero() {
                        acc = acc * xi.abs().powf(ai);
                    }
                }
                acc
            }
            _ => unreachable!("scalar_at on non-scalar kind"),
        };
        if v > T::zero() && v.is_finite() {
            Ok(v)
        } else {
            Err(WeightError::SingularPoint)
        }
    }

    fn radial_diag_at(&self, x: &[T], a: &[T]) -> Result<Vec<T>, WeightError> {
        let r = x.iter().map(|&xi| xi * xi).sum::<T>().sqrt();
        let mut out = Vec::with_capacity(a.len());
        for &ai in a {
            let v = if ai.is_zero() { T::one() } else { r.powf(ai) };
            if !(v > T::zero()) || !v.is_finite() {
                return Err(WeightError::SingularPoint);
            }
            out.push(v);
        }
        Ok(out)
    }

    /// Pointwise value as a verified Hermitian PD matrix.
    pub fn eval(&self, x: &[T]) -> Result<HermitianPd<T>, WeightError> {
        assert_eq!(x.len(), self.n);
        match &self.kind {
            WeightKind::Identity
            | WeightKind::PowerIsotropic { .. }
            | WeightKind::AnisotropicProduct { .. } => {
                let w = self.scalar_at(x)?;
                Ok(HermitianPd::new(CMatrix::identity(self.m).scale(w))?)
            }
            WeightKind::ConjugatedDiagonal { a, u } => {
                let d = self.radial_diag_at(x, a)?;
                let mat = u.mul(&CMatrix::diag(&d)).mul(&u.adjoint());
                Ok(HermitianPd::new(mat)?)
            }
            WeightKind::Custom(f) => {
                let mat = f(x)?;
                if mat.dim() != self.m {
                    return Err(WeightError::BadParam("custom weight size mismatch".into()));
                }
                Ok(HermitianPd::new(mat)?)
            }
        }
    }

    /// Samples `W^alpha` on the tensor quadrature nodes of `dom`.
    pub fn sample_power(
        &self,
        alpha: T,
        dom: &BoxDomain<T>,
        quad: &Quadrature,
    ) -> Result<PowerSamples<T>, WeightError> {
        assert_eq!(dom.n(), self.n);
        let axes: Vec<Vec<(T, T)>> = (0..self.n)
            .map(|i| {
                let (lo, hi) = dom.axis(i);
                quad.axis_nodes(lo, hi)
            })
            .collect();
        let count: usize = axes.iter().map(Vec::len).product();
        let mut xs = Vec::with_capacity(count * self.n);
        let mut wts = Vec::with_capacity(count);
        let mut err: Option<WeightError> = None;
        let mut measure = T::zero();
        let data = match &self.kind {
            WeightKind::Identity
            | WeightKind::PowerIsotropic { .. }
            | WeightKind::AnisotropicProduct { .. } => {
                let mut vals = Vec::with_capacity(count);
                tensor_for_each(&axes, |x, w| {
                    if err.is_some() {
                        return;
                    }
                    match self.scalar_at(x) {
                        Ok(v) => {
                            vals.push(v.powf(alpha));
                            xs.extend_from_slice(x);
                            wts.push(w);
                            measure = measure + w;
                        }
                        Err(e) => err = Some(e),
                    }
                });
                SampleData::Scalar(vals)
            }
            WeightKind::ConjugatedDiagonal { a, u } => {
                let mut d = Vec::with_capacity(count * self.m);
                tensor_for_each(&axes, |x, w| {
                    if err.is_some() {
                        return;
                    }
                    match self.radial_diag_at(x, a) {
                        Ok(vals) => {
                            d.extend(vals.iter().map(|&v| v.powf(alpha)));
                            xs.extend_from_slice(x);
                            wts.push(w);
                            measure = measure + w;
                        }
                        Err(e) => err = Some(e),
                    }
                });
                SampleData::Diag { u: u.clone(), d }
            }
            WeightKind::Custom(_) => {
                let mut mats = Vec::with_capacity(count);
                tensor_for_each(&axes, |x, w| {
                    if err.is_some() {
                        return;
                    }
                    match self.eval(x) {
                        Ok(h) => {
                            mats.push(h.power(alpha).matrix().clone());
                            xs.extend_from_slice(x);
                            wts.push(w);
                            measure = measure + w;
                        }
                        Err(e) => err = Some(e),
                    }
                });
                SampleData::Full(mats)
            }
        };
        if let Some(e) = err {
            return Err(e);
        }
        Ok(PowerSamples {
            n: self.n,
            m: self.m,
            alpha,
            xs,
            weights: wts,
            measure,
            data,
        })
    }
}

#[derive(Debug, Clone)]
enum SampleData<T> {
    Scalar(Vec<T>),
    Diag { u: CMatrix<T>, d: Vec<T> },
    Full(Vec<CMatrix<T>>),
}

/// `W^alpha` sampled on a quadrature node set, in the cheapest faithful
/// representation for the weight kind.
#[derive(Debug, Clone)]
pub struct PowerSamples<T> {
    n: usize,
    m: usize,
    alpha: T,
    xs: Vec<T>,
    weights: Vec<T>,
    measure: T,
    data: SampleData<T>,
}

impl<T: Real> PowerSamples<T> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn node_weight(&self, i: usize) -> T {
        self.weights[i]
    }

    pub fn node_x(&self, i: usize) -> &[T] {
        &self.xs[i * self.n..(i + 1) * self.n]
    }

    /// Total measure (sum of node weights).
    pub fn measure(&self) -> T {
        self.measure
    }

    /// Scalar sample values when the weight is a scalar kind.
    pub fn scalar_values(&self) -> Option<&[T]> {
        match &self.data {
            SampleData::Scalar(v) => Some(v),
            _ => None,
        }
    }

    /// Rotates a vector into the diagonalizing basis once, so per-node
    /// applications are cheap.
    pub fn prepare_vector(&self, z: &[Cplx<T>]) -> Vec<Cplx<T>> {
        match &self.data {
            SampleData::Diag { u, .. } => u.adjoint().mul_vec(z),
            _ => z.to_vec(),
        }
    }

    /// `|W^alpha(x_i) z|` with `z` pre-rotated by [`Self::prepare_vector`].
    pub fn apply_norm(&self, i: usize, prepared: &[Cplx<T>]) -> T {
        match &self.data {
            SampleData::Scalar(v) => {
                v[i] * prepared.iter().map(|c| c.norm_sqr()).sum::<T>().sqrt()
            }
            SampleData::Diag { d, .. } => {
                let row = &d[i * self.m..(i + 1) * self.m];
                row.iter()
                    .zip(prepared)
                    .map(|(&di, c)| di * di * c.norm_sqr())
                    .sum::<T>()
                    .sqrt()
            }
            SampleData::Full(mats) => crate::linalg::vec_norm(&mats[i].mul_vec(prepared)),
        }
    }

    /// `||W^alpha(x_i)||` (operator norm of the sampled power).
    pub fn op_norm_at(&self, i: usize) -> T {
        match &self.data {
            SampleData::Scalar(v) => v[i],
            SampleData::Diag { d, .. } => {
                let row = &d[i * self.m..(i + 1) * self.m];
                row.iter().fold(T::zero(), |acc, &x| acc.max(x))
            }
            SampleData::Full(mats) => mats[i].op_norm(),
        }
    }

    /// Materializes the sampled power as a matrix.
    pub fn matrix_at(&self, i: usize) -> CMatrix<T> {
        match &self.data {
            SampleData::Scalar(v) => CMatrix::identity(self.m).scale(v[i]),
            SampleData::Diag { u, d } => {
                let row = &d[i * self.m..(i + 1) * self.m];
                u.mul(&CMatrix::diag(row)).mul(&u.adjoint())
            }
            SampleData::Full(mats) => mats[i].clone(),
        }
    }

    /// `||W^alpha(x_i) W^beta(y_j)||^p` for two sample sets of the same
    /// weight; exploits the common eigenbasis of built-in kinds.
    pub fn pair_op_norm_pow(&self, i: usize, other: &Self, j: usize, p: T) -> T {
        match (&self.data, &other.data) {
            (SampleData::Scalar(a), SampleData::Scalar(b)) => (a[i] * b[j]).powf(p),
            (SampleData::Diag { d: da, .. }, SampleData::Diag { d: db, .. }) => {
                let ra = &da[i * self.m..(i + 1) * self.m];
                let rb = &db[j * self.m..(j + 1) * self.m];
                let mx = ra
                    .iter()
                    .zip(rb)
                    .map(|(&x, &y)| x * y)
                    .fold(T::zero(), |acc, v| acc.max(v));
                mx.powf(p)
            }
            _ => {
                let prod = self.matrix_at(i).mul(&other.matrix_at(j));
                prod.op_norm().powf(p)
            }
        }
    }

    /// Weighted average of a per-node function.
    pub fn average(&self, mut f: impl FnMut(usize) -> T) -> T {
        let mut acc = T::zero();
        for i in 0..self.len() {
            acc = acc + self.weights[i] * f(i);
        }
        acc / self.measure
    }
}

/// The direction functional `rho_Q(z) = (avg_Q |W^{1/p} z|^p)^{1/p}` with its
/// node samples precomputed.
pub struct RhoFunctional<T> {
    samples: PowerSamples<T>,
    p: T,
    scalar_c: Option<T>,
}

impl<T: Real> RhoFunctional<T> {
    pub fn new(
        weight: &MatrixWeight<T>,
        p: T,
        dom: &BoxDomain<T>,
        quad: &Quadrature,
    ) -> Result<Self, WeightError> {
        if !(p > T::zero()) {
            return Err(WeightError::BadParam("p must be positive".into()));
        }
        let samples = weight.sample_power(T::one() / p, dom, quad)?;
        let scalar_c = samples.scalar_values().map(|vals| {
            let mut acc = T::zero();
            for (i, &v) in vals.iter().enumerate() {
                acc = acc + samples.node_weight(i) * v.powf(p);
            }
            (acc / samples.measure()).powf(T::one() / p)
        });
        Ok(Self { samples, p, scalar_c })
    }

    pub fn samples(&self) -> &PowerSamples<T> {
        &self.samples
    }

    pub fn rho(&self, z: &[Cplx<T>]) -> T {
        if let Some(c) = self.scalar_c {
            return c * crate::linalg::vec_norm(z);
        }
        let prep = self.samples.prepare_vector(z);
        let mut acc = T::zero();
        for i in 0..self.samples.len() {
            acc = acc
                + self.samples.node_weight(i) * self.samples.apply_norm(i, &prep).powf(self.p);
        }
        (acc / self.samples.measure()).powf(T::one() / self.p)
    }
}

// ---------------------------------------------------------------------------
// Reducing operators
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReducingMethod {
    /// `(avg_Q W^{2/p})^{1/2}`; exact at `p = 2`. At `p` far from 2 the
    /// direction certificate can exceed the John bound on weights whose
    /// eigenvalue profiles differ strongly between eigendirections.
    Gram2,
    /// Shape-matrix square root of the minimum-volume ellipsoid enclosing
    /// sampled boundary points of the `rho_Q` unit ball.
    John,
}

/// Direction-sampled comparability certificate: bounds on
/// `rho_Q(z) / |A_Q z|` over a fresh direction set.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Certificate<T> {
    pub c_lo: T,
    pub c_hi: T,
    pub directions: usize,
}

impl<T: Real> Certificate<T> {
    pub fn ratio(&self) -> T {
        self.c_hi / self.c_lo
    }
}

/// Khachiyan tolerance on the normalized dual objective.
pub const MVEE_TOL: f64 = 1e-8;
/// Khachiyan iteration cap.
pub const MVEE_MAX_ITERS: usize = 400_000;

/// Per-cube reducing-operator family with a concurrent idempotent cache.
pub struct ReducingFamily<T> {
    weight: Arc<MatrixWeight<T>>,
    p: T,
    method: ReducingMethod,
    quad: Quadrature,
    cache: RwLock<BTreeMap<CubeIndex, Arc<HermitianPd<T>>>>,
}

impl<T: Real> ReducingFamily<T> {
    pub fn new(
        weight: Arc<MatrixWeight<T>>,
        p: T,
        method: ReducingMethod,
        quad: Quadrature,
    ) -> Result<Self, WeightError> {
        if !(p > T::zero()) || !p.is_finite() {
            return Err(WeightError::BadParam("p must be positive and finite".into()));
        }
        Ok(Self { weight, p, method, quad, cache: RwLock::new(BTreeMap::new()) })
    }

    pub fn weight(&self) -> &Arc<MatrixWeight<T>> {
        &self.weight
    }

    pub fn p(&self) -> T {
        self.p
    }

    pub fn method(&self) -> ReducingMethod {
        self.method
    }

    pub fn quad(&self) -> &Quadrature {
        &self.quad
    }

    /// The reducing operator `A_Q`, cached per cube. Concurrent callers may
    /// race on the computation; the first inserted value wins and all callers
    /// observe it.
    pub fn operator(&self, q: &CubeIndex) -> Result<Arc<HermitianPd<T>>, WeightError> {
        if let Some(a) = self.cache.read().expect("cache lock").get(q) {
            return Ok(a.clone());
        }
        let computed = Arc::new(self.compute(q)?);
        let mut guard = self.cache.write().expect("cache lock");
        Ok(guard.entry(*q).or_insert(computed).clone())
    }

    fn compute(&self, q: &CubeIndex) -> Result<HermitianPd<T>, WeightError> {
        let dom = BoxDomain::from_cube(q);
        let m = self.weight.m();
        let rho = RhoFunctional::new(&self.weight, self.p, &dom, &self.quad)?;
        if m == 1 {
            // Both methods reduce to the exact scalar value rho_Q(1).
            let one = [Cplx::new(T::one(), T::zero())];
            let v = rho.rho(&one);
            return Ok(HermitianPd::scalar(v)?);
        }
        match self.method {
            ReducingMethod::Gram2 => {
                let samples =
                    self.weight.sample_power(T::of(2.0) / self.p, &dom, &self.quad)?;
                gram_sqrt(&samples)
            }
            ReducingMethod::John => {
                if let Some(c) = rho.scalar_c {
                    // Scalar-kind unit ball is a Euclidean ball of radius 1/c.
                    return Ok(HermitianPd::new(CMatrix::identity(m).scale(c))?);
                }
                let dirs = fit_directions::<T>(m, matches!(self.weight.kind(), WeightKind::Custom(_)));
                let mut pts = Vec::with_capacity(dirs.len());
                for z in &dirs {
                    let r = rho.rho(z);
                    if !(r > T::zero()) || !r.is_finite() {
                        return Err(WeightError::SingularPoint);
                    }
                    let inv = T::one() / r;
                    pts.push(z.iter().map(|&c| c * inv).collect::<Vec<_>>());
                }
                let s = khachiyan_centered(&pts, m)?;
                let scaled = HermitianPd::new(s.scale(T::of(m as f64)))?;
                Ok(scaled.power(T::of(-0.5)))
            }
        }
    }

    /// Certifies `A_Q` on a fresh deterministic direction set: returns the
    /// range of `rho_Q(z) / |A_Q z|`.
    pub fn verify(&self, q: &CubeIndex) -> Result<Certificate<T>, WeightError> {
        let a = self.operator(q)?;
        let dom = BoxDomain::from_cube(q);
        let rho = RhoFunctional::new(&self.weight, self.p, &dom, &self.quad)?;
        let dirs = verify_directions::<T>(self.weight.m());
        let mut c_lo = T::infinity();
        let mut c_hi = T::zero();
        for z in &dirs {
            let num = rho.rho(z);
            let den = crate::linalg::vec_norm(&a.matrix().mul_vec(z));
            if !(den > T::zero()) {
                return Err(WeightError::SingularPoint);
            }
            let r = num / den;
            c_lo = c_lo.min(r);
            c_hi = c_hi.max(r);
        }
        Ok(Certificate { c_lo, c_hi, directions: dirs.len() })
    }

    /// Snapshot of the cached cubes in deterministic order.
    pub fn cached_cubes(&self) -> Vec<CubeIndex> {
        self.cache.read().expect("cache lock").keys().copied().collect()
    }
}

pub(crate) fn gram_sqrt<T: Real>(samples: &PowerSamples<T>) -> Result<HermitianPd<T>, WeightError> {
    let m = samples.m();
    match &samples.data {
        SampleData::Scalar(v) => {
            let mut acc = T::zero();
            for (i, &val) in v.iter().enumerate() {
                acc = acc + samples.node_weight(i) * val;
            }
            let c = (acc / samples.measure()).sqrt();
            Ok(HermitianPd::new(CMatrix::identity(m).scale(c))?)
        }
        SampleData::Diag { u, d } => {
            let mut acc = vec![T::zero(); m];
            for i in 0..samples.len() {
                let w = samples.node_weight(i);
                for (t, a) in acc.iter_mut().enumerate() {
                    *a = *a + w * d[i * m + t];
                }
            }
            let diag: Vec<T> =
                acc.iter().map(|&a| (a / samples.measure()).sqrt()).collect();
            let mat = u.mul(&CMatrix::diag(&diag)).mul(&u.adjoint());
            Ok(HermitianPd::new(mat)?)
        }
        SampleData::Full(mats) => {
            let mut acc = CMatrix::zeros(m);
            for (i, mat) in mats.iter().enumerate() {
                acc = acc.add(&mat.scale(samples.node_weight(i)));
            }
            let avg = acc.scale(T::one() / samples.measure());
            Ok(HermitianPd::new(avg)?.sqrt())
        }
    }
}

/// Deterministic fit directions on the unit sphere. For complex custom
/// weights a phased copy of each direction is added so the circled hull sees
/// the complex structure.
fn fit_directions<T: Real>(m: usize, complex_phases: bool) -> Vec<Vec<Cplx<T>>> {
    let real_dirs = sphere_directions::<T>(m, match m {
        2 => 64,
        3 => 128,
        _ => 32 * m * m,
    }, 0);
    with_phases(real_dirs, complex_phases)
}

/// Deterministic direction set for diagnostics probes: `scale * m^2` points
/// (at least 8) at the requested generator variant, optionally phase-doubled.
pub(crate) fn probe_directions<T: Real>(
    m: usize,
    scale: usize,
    variant: usize,
    phases: bool,
) -> Vec<Vec<Cplx<T>>> {
    let count = (scale * m * m).max(8);
    with_phases(sphere_directions::<T>(m, count, variant), phases)
}

/// Fresh deterministic direction set for certificates (offset generator, so
/// it never coincides with the fit set).
fn verify_directions<T: Real>(m: usize) -> Vec<Vec<Cplx<T>>> {
    let count = match m {
        1 => 1,
        2 => 48,
        3 => 96,
        _ => (16 * m * m).max(32),
    };
    with_phases(sphere_directions::<T>(m, count, 1), m > 1)
}

fn with_phases<T: Real>(dirs: Vec<Vec<Cplx<T>>>, add: bool) -> Vec<Vec<Cplx<T>>> {
    if !add {
        return dirs;
    }
    let mut out = Vec::with_capacity(dirs.len() * 2);
    for d in dirs {
        let mut phased = d.clone();
        for (t, c) in phased.iter_mut().enumerate() {
            if t % 2 == 1 {
                *c = Cplx::new(-c.im, c.re); // multiply by i
            }
        }
        out.push(d);
        out.push(phased);
    }
    out
}

/// Low-discrepancy unit vectors in `R^m`: equispaced angles for `m = 2`, a
/// Fibonacci hemisphere for `m = 3`, Halton points otherwise. `variant`
/// offsets the generator so disjoint sets can be drawn.
fn sphere_directions<T: Real>(m: usize, count: usize, variant: usize) -> Vec<Vec<Cplx<T>>> {
    let zero = T::zero();
    let mk = |v: Vec<T>| -> Vec<Cplx<T>> { v.into_iter().map(|x| Cplx::new(x, zero)).collect() };
    match m {
        1 => vec![mk(vec![T::one()])],
        2 => {
            let offset = 0.5 + 0.31 * variant as f64;
            (0..count)
                .map(|t| {
                    let th = std::f64::consts::PI * (t as f64 + offset) / count as f64;
                    mk(vec![T::of(th.cos()), T::of(th.sin())])
                })
                .collect()
        }
        3 => {
            let golden = (1.0 + 5f64.sqrt()) / 2.0;
            let offset = 0.5 + 0.37 * variant as f64;
            (0..count)
                .map(|t| {
                    let u = (t as f64 + offset) / count as f64; // (0,1): hemisphere
                    let r = (1.0 - u * u).max(0.0).sqrt();
                    let th = 2.0 * std::f64::consts::PI * (t as f64 + offset) / golden;
                    mk(vec![T::of(r * th.cos()), T::of(r * th.sin()), T::of(u)])
                })
                .collect()
        }
        _ => {
            const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
            let mut out = Vec::with_capacity(count);
            let mut t = 1 + 57 * variant as u64;
            while out.len() < count {
                let mut v: Vec<f64> =
                    (0..m).map(|i| 2.0 * halton(t, PRIMES[i]) - 1.0).collect();
                t += 1;
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm < 0.1 {
                    continue;
                }
                for x in &mut v {
                    *x /= norm;
                }
                out.push(mk(v.into_iter().map(T::of).collect()));
            }
            out
        }
    }
}

fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

/// Khachiyan-style iteration for the minimum-volume origin-centered
/// ellipsoid of a circled point cloud: maximizes `log det S(u)` over weights
/// `u` on the simplex, `S(u) = sum_i u_i v_i v_i^*`. Uses Wolfe-Atwood away
/// steps (plain vertex steps have an `O(1/k)` tail and cannot reach the
/// tolerance within the cap). Returns `S` at the stopping point; the
/// ellipsoid is `{z : z^* (m S)^{-1} z <= 1}` and containment holds up to
/// `1 + MVEE_TOL`.
fn khachiyan_centered<T: Real>(
    pts: &[Vec<Cplx<T>>],
    m: usize,
) -> Result<CMatrix<T>, WeightError> {
    let k = pts.len();
    assert!(k >= m);
    let mf = T::of(m as f64);
    let tol = T::of(MVEE_TOL);
    let mut u = vec![T::one() / T::of(k as f64); k];
    let build = |u: &[T]| -> CMatrix<T> {
        let mut s = CMatrix::zeros(m);
        for (i, v) in pts.iter().enumerate() {
            if u[i] > T::zero() {
                s = s.add_scaled_outer(u[i], v);
            }
        }
        s
    };
    let mut inv = HermitianPd::new(build(&u))?.inverse().matrix().clone();
    for iter in 0..MVEE_MAX_ITERS {
        // Dual values w_i = v_i^* S^{-1} v_i; their u-average is m.
        let mut w_plus = T::zero();
        let mut k_plus = 0usize;
        let mut w_minus = T::infinity();
        let mut k_minus = 0usize;
        for (i, v) in pts.iter().enumerate() {
            let w = inv.quadratic_form(v);
            if w > w_plus {
                w_plus = w;
                k_plus = i;
            }
            if u[i] > T::zero() && w < w_minus {
                w_minus = w;
                k_minus = i;
            }
        }
        if w_plus <= mf * (T::one() + tol) {
            return Ok(build(&u));
        }
        // Line search along u' = (1 - tau) u + tau e_kappa maximizes
        // (m-1) log(1-tau) + log(1 + tau (w-1)) at tau = (w-m)/(m(w-1)).
        // For the worst inside point that optimum is negative (away step),
        // clamped so u stays on the simplex.
        let away = w_plus - mf < mf - w_minus;
        let (kappa, w_k) = if away { (k_minus, w_minus) } else { (k_plus, w_plus) };
        let mut tau = (w_k - mf) / (mf * (w_k - T::one()));
        if away {
            let cap = -u[kappa] / (T::one() - u[kappa]);
            tau = tau.max(cap);
        }
        if tau.abs() < T::of(1e-16) {
            return Ok(build(&u));
        }
        for ui in u.iter_mut() {
            *ui = *ui * (T::one() - tau);
        }
        u[kappa] = (u[kappa] + tau).max(T::zero());
        let denom = (T::one() - tau) + tau * w_k;
        if (iter + 1) % 256 == 0 || denom <= T::of(1e-12) {
            // Periodic fresh factorization to wash out update drift.
            inv = HermitianPd::new(build(&u))?.inverse().matrix().clone();
        } else {
            // Sherman-Morrison update of S^{-1} after
            // S <- (1 - tau) S + tau v v^*.
            let v = &pts[kappa];
            let iv = inv.mul_vec(v);
            let beta = tau / denom;
            let scale = T::one() / (T::one() - tau);
            inv = CMatrix::from_fn(m, |r, c| {
                (inv[(r, c)] - iv[r] * iv[c].conj() * beta) * scale
            });
        }
    }
    Err(WeightError::MveeNoConvergence)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Closed-form oracles, frozen before the implementations:
    //   int_0^1 x dx            = 1/2
    //   int_0^1 x^2 dx          = 1/3        (Gauss-2 integrates it exactly)
    //   int_0^1 sqrt(x) dx      = 2/3
    //   int_0^1 x^{-1/2} dx     = 2
    //   int_{-1}^1 |x|^{-1/2}   = 4
    //   (avg_{[0,1]} x)^{1/1}   = 1/2        (reducing, m=1, p=1, w=|x|)
    //   (avg_{[0,1]} x^{1/2})^{1/2} = (2/3)^{1/2}  (reducing, m=1, p=2)
    //   diag(1,16)^{1/2}        = diag(1,4)  (gram2 at p=2, constant weight)

    fn integrate(quad: &Quadrature, lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        quad.axis_nodes(lo, hi).iter().map(|&(x, w)| w * f(x)).sum()
    }

    #[test]
    fn midpoint_is_exact_for_linear() {
        let q = Quadrature::midpoint(4, 0);
        let v = integrate(&q, 0.0, 1.0, |x| x);
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gauss2_is_exact_for_cubics() {
        let q = Quadrature::gauss(2, 3, 0);
        assert!((integrate(&q, 0.0, 1.0, |x| x * x) - 1.0 / 3.0).abs() < 1e-14);
        assert!((integrate(&q, 0.0, 1.0, |x| x * x * x) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn layered_rule_handles_sqrt_singularity() {
        let q = Quadrature::gauss(5, 8, 20);
        assert!((integrate(&q, 0.0, 1.0, |x| x.sqrt()) - 2.0 / 3.0).abs() < 1e-7);
        assert!((integrate(&q, 0.0, 1.0, |x| 1.0 / x.sqrt()) - 2.0).abs() < 1e-3);
        // Straddling interval splits at zero and layers both sides.
        assert!(
            (integrate(&q, -1.0, 1.0, |x| 1.0 / x.abs().sqrt()) - 4.0).abs() < 2e-3
        );
    }

    #[test]
    fn node_weights_sum_to_measure() {
        for quad in [Quadrature::midpoint(3, 0), Quadrature::gauss(4, 5, 20)] {
            let nodes = quad.axis_nodes(-0.75f64, 2.5);
            let total: f64 = nodes.iter().map(|&(_, w)| w).sum();
            assert!((total - 3.25).abs() < 1e-12);
            assert!(nodes.iter().all(|&(x, _)| x != 0.0));
        }
    }

    #[test]
    fn anisotropic_weight_evaluates_pointwise() {
        let w = MatrixWeight::<f64>::anisotropic_product(2, 2, vec![0.5, 1.5]).unwrap();
        let h = w.eval(&[0.25, 4.0]).unwrap();
        // 0.25^{1/2} * 4^{3/2} = 0.5 * 8 = 4.
        assert!((h.op_norm() - 4.0).abs() < 1e-12);
        assert!(w.eval(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn conjugated_diagonal_has_expected_spectrum() {
        let th = std::f64::consts::FRAC_PI_4;
        let u = CMatrix::<f64>::from_real_rows(&[&[th.cos(), -th.sin()], &[th.sin(), th.cos()]]);
        let w = MatrixWeight::conjugated_diagonal(1, vec![0.0, 1.0], u).unwrap();
        let h = w.eval(&[2.0]).unwrap();
        let eig = h.eigenvalues();
        assert!((eig[0] - 1.0).abs() < 1e-12 && (eig[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn exponent_gate_rejects_below_floor() {
        assert!(MatrixWeight::<f64>::anisotropic_product(1, 1, vec![-0.95]).is_err());
        assert!(MatrixWeight::<f64>::power_isotropic(2, 1, -0.91).is_err());
    }

    fn fam(
        w: MatrixWeight<f64>,
        p: f64,
        method: ReducingMethod,
    ) -> ReducingFamily<f64> {
        ReducingFamily::new(Arc::new(w), p, method, Quadrature::gauss(5, 8, 20)).unwrap()
    }

    #[test]
    fn scalar_reducing_matches_closed_forms() {
        let q = CubeIndex::new(0, &[0]).unwrap();
        for method in [ReducingMethod::Gram2, ReducingMethod::John] {
            let f = fam(
                MatrixWeight::anisotropic_product(1, 1, vec![1.0]).unwrap(),
                1.0,
                method,
            );
            let a = f.operator(&q).unwrap();
            assert!((a.op_norm() - 0.5).abs() < 1e-6, "{method:?}");

            let f = fam(
                MatrixWeight::anisotropic_product(1, 1, vec![0.5]).unwrap(),
                2.0,
                method,
            );
            let a = f.operator(&q).unwrap();
            assert!((a.op_norm() - (2.0f64 / 3.0).sqrt()).abs() < 1e-6, "{method:?}");
        }
    }

    #[test]
    fn gram2_constant_weight_closed_form() {
        let w = MatrixWeight::custom(
            1,
            2,
            Arc::new(|_x: &[f64]| Ok(CMatrix::diag(&[1.0, 16.0]))),
        )
        .unwrap();
        let f = fam(w, 2.0, ReducingMethod::Gram2);
        let q = CubeIndex::new(0, &[0]).unwrap();
        let a = f.operator(&q).unwrap();
        let expect = CMatrix::diag(&[1.0, 4.0]);
        assert!(a.matrix().sub(&expect).frobenius_norm() < 1e-10);
    }

    #[test]
    fn john_on_identity_is_identity() {
        let f = fam(MatrixWeight::identity(1, 2).unwrap(), 1.0, ReducingMethod::John);
        let q = CubeIndex::new(0, &[0]).unwrap();
        let a = f.operator(&q).unwrap();
        assert!(a.matrix().sub(&CMatrix::identity(2)).frobenius_norm() < 1e-8);
        let cert = f.verify(&q).unwrap();
        assert!(cert.ratio() < 1.0 + 1e-8);
    }

    #[test]
    fn john_certificate_within_john_bound() {
        let th = std::f64::consts::FRAC_PI_4;
        let u = CMatrix::<f64>::from_real_rows(&[&[th.cos(), -th.sin()], &[th.sin(), th.cos()]]);
        let w = MatrixWeight::conjugated_diagonal(1, vec![0.0, 1.0], u).unwrap();
        for p in [0.5, 1.0, 2.0, 3.0] {
            let f = fam(w.clone(), p, ReducingMethod::John);
            for k in [0i64, 1, -3] {
                let q = CubeIndex::new(1, &[k]).unwrap();
                let cert = f.verify(&q).unwrap();
                assert!(
                    cert.ratio() <= 2f64.sqrt() * 1.1,
                    "p={p} k={k} ratio={}",
                    cert.ratio()
                );
                assert!(cert.c_lo > 0.5, "lower bound sane");
            }
        }
    }

    #[test]
    fn gram2_certificate_is_tight_at_p2() {
        let th = 0.3f64;
        let u = CMatrix::<f64>::from_real_rows(&[&[th.cos(), -th.sin()], &[th.sin(), th.cos()]]);
        let w = MatrixWeight::conjugated_diagonal(2, vec![0.5, 1.5], u).unwrap();
        let f = fam(w, 2.0, ReducingMethod::Gram2);
        let q = CubeIndex::new(0, &[0, 0]).unwrap();
        let cert = f.verify(&q).unwrap();
        assert!((cert.c_lo - 1.0).abs() < 1e-9 && (cert.c_hi - 1.0).abs() < 1e-9);
    }

    #[test]
    fn scaling_covariance() {
        // Replacing W by c^p W scales A_Q by c exactly.
        let c = 1.7f64;
        let p = 1.3f64;
        let base = MatrixWeight::anisotropic_product(1, 2, vec![0.5]).unwrap();
        let scaled = MatrixWeight::custom(
            1,
            2,
            Arc::new(move |x: &[f64]| {
                Ok(CMatrix::identity(2).scale(x[0].abs().sqrt() * c.powf(1.3)))
            }),
        )
        .unwrap();
        let q = CubeIndex::new(2, &[3]).unwrap();
        for method in [ReducingMethod::Gram2, ReducingMethod::John] {
            let a0 = fam(base.clone(), p, method).operator(&q).unwrap();
            let a1 = fam(scaled.clone(), p, method).operator(&q).unwrap();
            let rel = a1.matrix().sub(&a0.matrix().scale(c)).frobenius_norm()
                / a0.matrix().scale(c).frobenius_norm();
            assert!(rel < 1e-9, "{method:?} rel={rel}");
        }
    }

    #[test]
    fn cache_returns_same_operator() {
        let f = fam(
            MatrixWeight::anisotropic_product(1, 1, vec![0.5]).unwrap(),
            2.0,
            ReducingMethod::Gram2,
        );
        let q = CubeIndex::new(0, &[0]).unwrap();
        let a = f.operator(&q).unwrap();
        let b = f.operator(&q).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(f.cached_cubes(), vec![q]);
    }
}
