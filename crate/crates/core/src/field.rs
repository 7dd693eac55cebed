//! Grid-sampled scalar, one-form, and symmetric 2-tensor fields with
//! pointwise arithmetic and periodic centered differences.

use crate::error::{Error, Result};
use crate::grid::{sym_index, GridSpec};

pub(crate) mod par {
    use std::sync::atomic::{AtomicUsize, Ordering};

    static THREADS: AtomicUsize = AtomicUsize::new(1);

    /// Set the worker count for data-parallel kernels. Reductions always run
    /// sequentially, so results do not depend on this value.
    pub fn set_threads(k: usize) {
        THREADS.store(k.max(1), Ordering::Relaxed);
    }

    pub fn threads() -> usize {
        THREADS.load(Ordering::Relaxed)
    }

    /// Apply `f` to disjoint chunks of `out`; `f` receives the chunk's start
    /// offset. Runs on scoped threads when a worker count > 1 is configured.
    pub fn for_chunks(out: &mut [f64], f: impl Fn(usize, &mut [f64]) + Sync) {
        let k = threads();
        const MIN_CHUNK: usize = 1 << 14;
        if k <= 1 || out.len() < 2 * MIN_CHUNK {
            f(0, out);
            return;
        }
        let chunk = out.len().div_ceil(k).max(MIN_CHUNK);
        std::thread::scope(|s| {
            for (ci, slice) in out.chunks_mut(chunk).enumerate() {
                let f = &f;
                s.spawn(move || f(ci * chunk, slice));
            }
        });
    }
}

/// One IEEE-754 double per grid point, lexicographic order (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    spec: GridSpec,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(spec: &GridSpec) -> Self {
        Self {
            spec: spec.clone(),
            data: vec![0.0; spec.num_points()],
        }
    }

    pub fn constant(spec: &GridSpec, v: f64) -> Self {
        Self {
            spec: spec.clone(),
            data: vec![v; spec.num_points()],
        }
    }

    /// Sample `f` at every grid point.
    pub fn from_fn(spec: &GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut x = vec![0.0; spec.n()];
        let data = (0..spec.num_points())
            .map(|p| {
                spec.point(p, &mut x);
                f(&x)
            })
            .collect();
        Self {
            spec: spec.clone(),
            data,
        }
    }

    pub fn from_data(spec: &GridSpec, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), spec.num_points(), "payload length mismatch");
        Self {
            spec: spec.clone(),
            data,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Centered second-order periodic difference along `axis`.
    ///
    /// Exact on constants; on a sampled Fourier mode `e^{ikx}` it multiplies
    /// by the modified wavenumber `i sin(k h)/h`.
    pub fn derivative(&self, axis: usize) -> ScalarField {
        assert!(axis < self.spec.n(), "axis {axis} out of range");
        let m = self.spec.dims()[axis];
        let stride = self.spec.stride(axis);
        let inv2h = 0.5 / self.spec.spacing(axis);
        let data = &self.data;
        let mut out = ScalarField::zeros(&self.spec);
        par::for_chunks(out.data_mut(), |start, slice| {
            let mut i = start % stride;
            let mut j = (start / stride) % m;
            for (off, o) in slice.iter_mut().enumerate() {
                let p = start + off;
                let up = if j + 1 == m {
                    p + stride - m * stride
                } else {
                    p + stride
                };
                let dn = if j == 0 {
                    p + (m - 1) * stride
                } else {
                    p - stride
                };
                *o = (data[up] - data[dn]) * inv2h;
                i += 1;
                if i == stride {
                    i = 0;
                    j += 1;
                    if j == m {
                        j = 0;
                    }
                }
            }
        });
        out
    }

    /// `self += alpha * x` pointwise.
    pub fn axpy(&mut self, alpha: f64, x: &ScalarField) {
        assert_eq!(self.spec, x.spec, "grid mismatch");
        for (a, b) in self.data.iter_mut().zip(&x.data) {
            *a += alpha * b;
        }
    }

    pub fn add(&self, rhs: &ScalarField) -> ScalarField {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }

    pub fn sub(&self, rhs: &ScalarField) -> ScalarField {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }

    /// Pointwise product.
    pub fn mul(&self, rhs: &ScalarField) -> ScalarField {
        assert_eq!(self.spec, rhs.spec, "grid mismatch");
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&rhs.data) {
            *a *= b;
        }
        out
    }

    pub fn mul_in_place(&mut self, rhs: &ScalarField) {
        assert_eq!(self.spec, rhs.spec, "grid mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a *= b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.data {
            *a *= alpha;
        }
    }

    pub fn scaled(&self, alpha: f64) -> ScalarField {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    /// Pointwise power. Integer exponents work for any base; fractional
    /// exponents require a strictly positive field.
    pub fn powf(&self, e: f64) -> Result<ScalarField> {
        if e.fract() == 0.0 && e.abs() <= 1024.0 {
            return Ok(self.powi(e as i32));
        }
        let min = self.min_value();
        if min <= 0.0 {
            return Err(Error::FractionalPowerOfNonPositive { min });
        }
        let mut out = self.clone();
        for a in &mut out.data {
            *a = a.powf(e);
        }
        Ok(out)
    }

    pub fn powi(&self, e: i32) -> ScalarField {
        let mut out = self.clone();
        for a in &mut out.data {
            *a = a.powi(e);
        }
        out
    }

    /// Pointwise square root, clamping tiny negative rounding to zero.
    pub fn sqrt(&self) -> ScalarField {
        let mut out = self.clone();
        for a in &mut out.data {
            *a = a.max(0.0).sqrt();
        }
        out
    }

    pub fn recip(&self) -> ScalarField {
        let mut out = self.clone();
        for a in &mut out.data {
            *a = 1.0 / *a;
        }
        out
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Plain sequential sum of all values (bit-deterministic).
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_positive(&self, what: &str) -> Result<()> {
        let min = self.min_value();
        if min <= 0.0 || !min.is_finite() {
            return Err(Error::NonPositiveField {
                what: what.into(),
                min,
            });
        }
        Ok(())
    }
}

/// Covariant 1-form field; `n` scalar component arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct OneForm {
    spec: GridSpec,
    comps: Vec<ScalarField>,
}

impl OneForm {
    pub fn zeros(spec: &GridSpec) -> Self {
        Self {
            spec: spec.clone(),
            comps: (0..spec.n()).map(|_| ScalarField::zeros(spec)).collect(),
        }
    }

    pub fn from_components(comps: Vec<ScalarField>) -> Self {
        assert!(!comps.is_empty());
        let spec = comps[0].spec().clone();
        assert_eq!(comps.len(), spec.n(), "component count mismatch");
        for c in &comps {
            assert_eq!(c.spec(), &spec, "grid mismatch");
        }
        Self { spec, comps }
    }

    pub fn constant(spec: &GridSpec, values: &[f64]) -> Self {
        assert_eq!(values.len(), spec.n());
        Self {
            spec: spec.clone(),
            comps: values.iter().map(|&v| ScalarField::constant(spec, v)).collect(),
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn comp(&self, a: usize) -> &ScalarField {
        &self.comps[a]
    }

    pub fn comp_mut(&mut self, a: usize) -> &mut ScalarField {
        &mut self.comps[a]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.comps
    }

    pub fn axpy(&mut self, alpha: f64, x: &OneForm) {
        assert_eq!(self.spec, x.spec, "grid mismatch");
        for (a, b) in self.comps.iter_mut().zip(&x.comps) {
            a.axpy(alpha, b);
        }
    }

    pub fn add(&self, rhs: &OneForm) -> OneForm {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }

    pub fn sub(&self, rhs: &OneForm) -> OneForm {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }

    pub fn scale(&mut self, alpha: f64) {
        for c in &mut self.comps {
            c.scale(alpha);
        }
    }

    pub fn scaled(&self, alpha: f64) -> OneForm {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    /// Multiply every component pointwise by `w`.
    pub fn mul_scalar(&self, w: &ScalarField) -> OneForm {
        OneForm::from_components(self.comps.iter().map(|c| c.mul(w)).collect())
    }

    pub fn sup_norm(&self) -> f64 {
        self.comps.iter().fold(0.0, |m, c| m.max(c.sup_norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.is_finite())
    }
}

/// Covariant symmetric 2-tensor field storing the lower triangle
/// (`n(n+1)/2` component arrays, see [`sym_index`]).
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensor2 {
    spec: GridSpec,
    comps: Vec<ScalarField>,
}

impl SymTensor2 {
    pub fn zeros(spec: &GridSpec) -> Self {
        Self {
            spec: spec.clone(),
            comps: (0..spec.sym_len())
                .map(|_| ScalarField::zeros(spec))
                .collect(),
        }
    }

    pub fn from_components(spec: &GridSpec, comps: Vec<ScalarField>) -> Self {
        assert_eq!(comps.len(), spec.sym_len(), "component count mismatch");
        for c in &comps {
            assert_eq!(c.spec(), spec, "grid mismatch");
        }
        Self {
            spec: spec.clone(),
            comps,
        }
    }

    /// Constant tensor from a full `n x n` row-major matrix; must be symmetric.
    pub fn from_constant_matrix(spec: &GridSpec, mat: &[f64]) -> Self {
        let n = spec.n();
        assert_eq!(mat.len(), n * n, "matrix size mismatch");
        for i in 0..n {
            for j in 0..i {
                assert!(
                    (mat[i * n + j] - mat[j * n + i]).abs() <= 1e-14 * mat[i * n + j].abs().max(1.0),
                    "matrix must be symmetric"
                );
            }
        }
        let mut t = Self::zeros(spec);
        for i in 0..n {
            for j in 0..=i {
                *t.comp_mut(i, j) = ScalarField::constant(spec, mat[i * n + j]);
            }
        }
        t
    }

    pub fn identity(spec: &GridSpec) -> Self {
        let mut t = Self::zeros(spec);
        for i in 0..spec.n() {
            *t.comp_mut(i, i) = ScalarField::constant(spec, 1.0);
        }
        t
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn comp(&self, i: usize, j: usize) -> &ScalarField {
        &self.comps[sym_index(i, j)]
    }

    pub fn comp_mut(&mut self, i: usize, j: usize) -> &mut ScalarField {
        &mut self.comps[sym_index(i, j)]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.comps
    }

    pub fn components_mut(&mut self) -> &mut [ScalarField] {
        &mut self.comps
    }

    pub fn axpy(&mut self, alpha: f64, x: &SymTensor2) {
        assert_eq!(self.spec, x.spec, "grid mismatch");
        for (a, b) in self.comps.iter_mut().zip(&x.comps) {
            a.axpy(alpha, b);
        }
    }

    pub fn add(&self, rhs: &SymTensor2) -> SymTensor2 {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }

    pub fn sub(&self, rhs: &SymTensor2) -> SymTensor2 {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }

    pub fn scale(&mut self, alpha: f64) {
        for c in &mut self.comps {
            c.scale(alpha);
        }
    }

    pub fn scaled(&self, alpha: f64) -> SymTensor2 {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    /// Multiply every component pointwise by `w`.
    pub fn mul_scalar(&self, w: &ScalarField) -> SymTensor2 {
        SymTensor2::from_components(&self.spec, self.comps.iter().map(|c| c.mul(w)).collect())
    }

    pub fn sup_norm(&self) -> f64 {
        self.comps.iter().fold(0.0, |m, c| m.max(c.sup_norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.is_finite())
    }
}
