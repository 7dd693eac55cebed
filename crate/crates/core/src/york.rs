//! Kernel of the conformal Killing operator, weighted projections, the
//! Fredholm compatibility check, linear vector solves, and the transverse
//! decomposition.

use crate::calculus::{codifferential, conformal_killing_op, gradient, integrate, weighted_inner};
use crate::cg::{conjugate_gradient, default_max_iter, CgOptions};
use crate::error::{Error, Result};
use crate::field::{OneForm, ScalarField, SymTensor2};
use crate::metric::Metric;
use crate::operators::{adjoint_divergence, relative_trace, WeightedVectorLaplacian};

/// How the kernel basis was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelDetection {
    /// Constant 1-forms annihilated exactly by the discrete stencil.
    ExactConstants,
    /// Smallest-eigenpair scan (inverse iteration plus Rayleigh-Ritz).
    Scan,
    /// Supplied by the caller.
    Provided,
}

/// Spanning set of the (numerical) kernel of the conformal Killing operator.
#[derive(Debug, Clone)]
pub struct KernelBasis {
    elements: Vec<OneForm>,
    residuals: Vec<f64>,
    detection: KernelDetection,
}

impl KernelBasis {
    pub fn empty() -> Self {
        Self {
            elements: Vec::new(),
            residuals: Vec::new(),
            detection: KernelDetection::Provided,
        }
    }

    pub fn from_elements(g: &Metric, elements: Vec<OneForm>) -> Self {
        let residuals = elements
            .iter()
            .map(|x| conformal_killing_op(g, x).sup_norm())
            .collect();
        Self {
            elements,
            residuals,
            detection: KernelDetection::Provided,
        }
    }

    pub fn elements(&self) -> &[OneForm] {
        &self.elements
    }

    pub fn dim(&self) -> usize {
        self.elements.len()
    }

    /// Sup-norm of `L X` per element; zero (to rounding) for the exact path.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn detection(&self) -> KernelDetection {
        self.detection
    }

    /// Orthogonal projector onto the span for the weighted product with
    /// pointwise weight `m1` (which must include the cell volume).
    pub fn projector_with_weight<'a>(
        &'a self,
        g: &'a Metric,
        m1: ScalarField,
    ) -> Result<WeightedProjector<'a>> {
        WeightedProjector::new(g, &self.elements, m1)
    }

    /// Projector for the `(.,.)_{g,phi}` product.
    pub fn projector<'a>(
        &'a self,
        g: &'a Metric,
        phi: &ScalarField,
    ) -> Result<WeightedProjector<'a>> {
        phi.check_positive("projection weight phi")?;
        let pn = phi.powf(g.spec().critical_exponent())?;
        let m1 = g.sqrt_det().scaled(g.spec().cell_volume()).mul(&pn);
        self.projector_with_weight(g, m1)
    }
}

/// Projection onto a kernel span, orthogonal for a weighted inner product.
pub struct WeightedProjector<'a> {
    g: &'a Metric,
    basis: &'a [OneForm],
    m1: ScalarField,
    chol: Vec<f64>,
}

impl<'a> WeightedProjector<'a> {
    fn new(g: &'a Metric, basis: &'a [OneForm], m1: ScalarField) -> Result<Self> {
        let k = basis.len();
        let mut gram = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..=i {
                let v = inner_weighted(g, &m1, &basis[i], &basis[j]);
                gram[i * k + j] = v;
                gram[j * k + i] = v;
            }
        }
        if !cholesky_factor(&mut gram, k) {
            return Err(Error::SingularGram);
        }
        Ok(Self {
            g,
            basis,
            m1,
            chol: gram,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn inner(&self, x: &OneForm, y: &OneForm) -> f64 {
        inner_weighted(self.g, &self.m1, x, y)
    }

    fn coefficients(&self, x: &OneForm) -> Vec<f64> {
        let k = self.basis.len();
        let mut b: Vec<f64> = (0..k).map(|i| self.inner(x, &self.basis[i])).collect();
        cholesky_solve(&self.chol, &mut b, k);
        b
    }

    pub fn project(&self, x: &OneForm) -> OneForm {
        let mut out = OneForm::zeros(x.spec());
        for (c, b) in self.coefficients(x).iter().zip(self.basis) {
            out.axpy(*c, b);
        }
        out
    }

    /// Subtract the projection in place; returns the weighted norm of the
    /// removed part.
    pub fn remove(&self, x: &mut OneForm) -> f64 {
        if self.basis.is_empty() {
            return 0.0;
        }
        let p = self.project(x);
        x.axpy(-1.0, &p);
        self.inner(&p, &p).max(0.0).sqrt()
    }
}

fn inner_weighted(g: &Metric, m1: &ScalarField, x: &OneForm, y: &OneForm) -> f64 {
    let f = crate::calculus::inner_oneform(g, x, y);
    let mut acc = 0.0;
    for (v, m) in f.data().iter().zip(m1.data()) {
        acc += v * m;
    }
    acc
}

/// Detect a spanning set of the kernel of `L_g`.
///
/// Constant 1-forms are accepted directly when the stencil annihilates them
/// to within `kernel_tol`; otherwise a deterministic inverse-iteration scan
/// looks for an eigenvalue cluster at the bottom of the spectrum separated
/// from the rest by a large gap. An ambiguous plateau is reported as an
/// error with the observed Ritz values.
pub fn kernel_basis(g: &Metric, kernel_tol: f64) -> Result<KernelBasis> {
    let spec = g.spec();
    let n = spec.n();
    let mut constants = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    let mut all_exact = true;
    for a in 0..n {
        let mut e = vec![0.0; n];
        e[a] = 1.0;
        let x = OneForm::constant(spec, &e);
        let r = conformal_killing_op(g, &x).sup_norm();
        if r > kernel_tol {
            all_exact = false;
        }
        constants.push(x);
        residuals.push(r);
    }
    if all_exact {
        return Ok(KernelBasis {
            elements: constants,
            residuals,
            detection: KernelDetection::ExactConstants,
        });
    }
    kernel_scan(g, kernel_tol)
}

fn kernel_scan(g: &Metric, kernel_tol: f64) -> Result<KernelBasis> {
    let spec = g.spec();
    let n = spec.n();
    let q = n + 2;
    let op = WeightedVectorLaplacian::unit(g);

    // deterministic probe block: the constants plus two smooth fields
    let mut block: Vec<OneForm> = Vec::with_capacity(q);
    for a in 0..n {
        let mut e = vec![0.0; n];
        e[a] = 1.0;
        block.push(OneForm::constant(spec, &e));
    }
    for s in 0..2 {
        let shift = 0.57 + 0.91 * s as f64;
        let comps = (0..n)
            .map(|a| {
                ScalarField::from_fn(spec, |x| {
                    (x[a % n] + shift).sin() + 0.37 * (x[(a + 1) % n] * 2.0 + shift).cos()
                })
            })
            .collect();
        block.push(OneForm::from_components(comps));
    }
    orthonormalize(&mut block, |a, b| op.inner(a, b));

    // operator scale from a few power iterations on a smooth probe
    let mut probe = block[n].clone();
    let mut lambda_scale = 1.0;
    for _ in 0..5 {
        let ap = op.apply(&probe);
        let nrm = op.inner(&ap, &ap).max(0.0).sqrt();
        lambda_scale = op.inner(&ap, &probe) / op.inner(&probe, &probe).max(1e-300);
        if nrm == 0.0 {
            break;
        }
        probe = ap;
        probe.scale(1.0 / nrm);
    }
    let lambda_scale = lambda_scale.abs().max(1e-300);

    // inverse iteration with loose inner solves
    for _ in 0..2 {
        for v in block.iter_mut() {
            let mut opts = CgOptions::new(1e-8, 150);
            opts.lenient = true;
            if let Ok((sol, _)) = conjugate_gradient(|w| op.apply(w), |a, b| op.inner(a, b), v, &opts)
            {
                *v = sol;
            }
        }
        orthonormalize(&mut block, |a, b| op.inner(a, b));
    }

    // Rayleigh-Ritz on the block
    let mut t = vec![0.0; q * q];
    let applied: Vec<OneForm> = block.iter().map(|v| op.apply(v)).collect();
    for i in 0..q {
        for j in 0..=i {
            let v = op.inner(&applied[i], &block[j]);
            t[i * q + j] = v;
            t[j * q + i] = v;
        }
    }
    let (evals, evecs) = jacobi_eigen(&t, q);

    let small_tol = (1e-4 * lambda_scale).max(kernel_tol);
    let mut idx: Vec<usize> = (0..q).collect();
    idx.sort_by(|&a, &b| evals[a].abs().partial_cmp(&evals[b].abs()).unwrap());
    let mut dim = 0;
    for &i in &idx {
        if evals[i].abs() <= small_tol {
            dim += 1;
        } else {
            break;
        }
    }
    if dim == 0 {
        return Ok(KernelBasis {
            elements: Vec::new(),
            residuals: Vec::new(),
            detection: KernelDetection::Scan,
        });
    }
    if dim >= q {
        return Err(Error::KernelDetection(format!(
            "all {q} probe directions look null (Ritz values {evals:?})"
        )));
    }
    let lo = evals[idx[dim - 1]].abs().max(1e-300);
    let hi = evals[idx[dim]].abs();
    if hi / lo < 50.0 {
        return Err(Error::KernelDetection(format!(
            "no clear spectral gap: Ritz values {:?}",
            idx.iter().map(|&i| evals[i]).collect::<Vec<_>>()
        )));
    }

    let mut elements = Vec::with_capacity(dim);
    let mut residuals = Vec::with_capacity(dim);
    for d in 0..dim {
        let col = idx[d];
        let mut u = OneForm::zeros(spec);
        for (j, v) in block.iter().enumerate() {
            u.axpy(evecs[j * q + col], v);
        }
        let nrm = op.inner(&u, &u).max(0.0).sqrt();
        if nrm > 0.0 {
            u.scale(1.0 / nrm);
        }
        residuals.push(conformal_killing_op(g, &u).sup_norm());
        elements.push(u);
    }
    Ok(KernelBasis {
        elements,
        residuals,
        detection: KernelDetection::Scan,
    })
}

fn orthonormalize(block: &mut Vec<OneForm>, inner: impl Fn(&OneForm, &OneForm) -> f64) {
    let mut kept: Vec<OneForm> = Vec::with_capacity(block.len());
    for v in block.drain(..) {
        let mut v = v;
        for _ in 0..2 {
            for u in &kept {
                let c = inner(&v, u);
                v.axpy(-c, u);
            }
        }
        let nrm = inner(&v, &v).max(0.0).sqrt();
        if nrm > 1e-12 {
            v.scale(1.0 / nrm);
            kept.push(v);
        }
    }
    *block = kept;
}

/// Evaluate the Fredholm compatibility integrals per kernel element:
/// the pair `(integral <X, dtau>_g phi^N dmu, integral tau d*(phi^N X) dmu)`.
/// The two routes agree at second order.
pub fn orthogonality_defect(
    g: &Metric,
    phi: &ScalarField,
    tau: &ScalarField,
    kb: &KernelBasis,
) -> Result<Vec<(f64, f64)>> {
    phi.check_positive("weight phi")?;
    let dtau = gradient(tau);
    let pn = phi.powf(g.spec().critical_exponent())?;
    let mut out = Vec::with_capacity(kb.dim());
    for x in kb.elements() {
        let direct = weighted_inner(g, phi, x, &dtau)?;
        let weighted = x.mul_scalar(&pn);
        let cod = codifferential(g, &weighted);
        let dual = integrate(g, &tau.mul(&cod));
        out.push((direct, dual));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    /// Require the right-hand side to satisfy the compatibility condition;
    /// fail otherwise.
    Strict,
    /// Project the right-hand side off the kernel before solving.
    Projected,
}

#[derive(Debug, Clone)]
pub struct VectorSolveInfo {
    pub iterations: usize,
    pub rel_residual: f64,
    /// Weighted norm of the component removed from the right-hand side
    /// (projected mode).
    pub projection_magnitude: f64,
    /// Compatibility integrals per kernel element, before any projection.
    pub defects: Vec<f64>,
}

/// Solve `op W = rhs` by deflated conjugate gradients; the solution is
/// returned orthogonal to the kernel span in the operator's inner product.
pub fn solve_vector(
    op: &WeightedVectorLaplacian,
    rhs: &OneForm,
    kb: &KernelBasis,
    mode: SolveMode,
    tol: f64,
) -> Result<(OneForm, VectorSolveInfo)> {
    solve_vector_from(op, rhs, kb, mode, tol, None, false)
}

/// As [`solve_vector`] with an optional initial guess and diagonal-weight
/// preconditioning.
pub fn solve_vector_from(
    op: &WeightedVectorLaplacian,
    rhs: &OneForm,
    kb: &KernelBasis,
    mode: SolveMode,
    tol: f64,
    x0: Option<OneForm>,
    precondition: bool,
) -> Result<(OneForm, VectorSolveInfo)> {
    let g = op.metric();
    let proj = kb.projector_with_weight(g, op.m1_weight().clone())?;
    let rhs_norm = proj.inner(rhs, rhs).max(0.0).sqrt();
    let defects: Vec<f64> = kb
        .elements()
        .iter()
        .map(|b| proj.inner(rhs, b))
        .collect();

    if let SolveMode::Strict = mode {
        let mut bad = Vec::new();
        for (b, d) in kb.elements().iter().zip(&defects) {
            let bn = proj.inner(b, b).max(0.0).sqrt();
            if d.abs() > tol.max(1e-14) * rhs_norm.max(1e-300) * bn.max(1.0) {
                bad.push(*d);
            }
        }
        if !bad.is_empty() {
            return Err(Error::IncompatibleRhs { defects });
        }
    }

    let mut b = rhs.clone();
    let projection_magnitude = proj.remove(&mut b);

    let unknowns = g.spec().num_points() * g.spec().n();
    let mut opts = CgOptions::new(tol, default_max_iter(unknowns));
    opts.constrain = Some(Box::new(move |v: &mut OneForm| {
        proj.remove(v);
    }));
    opts.x0 = x0;
    let weight = op.weight_ratio();
    if precondition {
        let inv = weight.recip();
        opts.precondition = Some(Box::new(move |r: &OneForm| r.mul_scalar(&inv)));
    }
    let (w, outcome) = conjugate_gradient(|v| op.apply(v), |a, b| op.inner(a, b), &b, &opts)?;

    Ok((
        w,
        VectorSolveInfo {
            iterations: outcome.iterations,
            rel_residual: outcome.rel_residual,
            projection_magnitude,
            defects,
        },
    ))
}

/// Transverse-traceless split `h = sigma + L_g W` of a trace-free symmetric
/// tensor: `W` solves the normal equation driven by the transpose divergence,
/// `sigma` is defined by subtraction, and `W` is returned orthogonal to the
/// kernel in `(.,.)_{g,1}`.
pub fn york_decompose(
    g: &Metric,
    h: &SymTensor2,
    tol: f64,
) -> Result<(SymTensor2, OneForm)> {
    let kb = kernel_basis(g, 1e-8)?;
    york_decompose_with(g, h, &kb, tol, None).map(|(s, w, _)| (s, w))
}

/// As [`york_decompose`] with a caller-provided kernel basis and optional
/// initial guess; also returns the solve diagnostics.
pub fn york_decompose_with(
    g: &Metric,
    h: &SymTensor2,
    kb: &KernelBasis,
    tol: f64,
    w0: Option<OneForm>,
) -> Result<(SymTensor2, OneForm, VectorSolveInfo)> {
    let tr = relative_trace(g, h);
    if tr > 1e-8 {
        return Err(Error::TraceViolation {
            trace_rel: tr,
            tol: 1e-8,
        });
    }
    let op = WeightedVectorLaplacian::unit(g);
    let rhs = adjoint_divergence(g, h);
    let (w, info) = solve_vector_from(&op, &rhs, kb, SolveMode::Projected, tol, w0, false)?;
    let mut sigma = h.clone();
    sigma.axpy(-1.0, &conformal_killing_op(g, &w));
    Ok((sigma, w, info))
}

fn cholesky_factor(a: &mut [f64], k: usize) -> bool {
    for j in 0..k {
        let mut d = a[j * k + j];
        for m in 0..j {
            d -= a[j * k + m] * a[j * k + m];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let l = d.sqrt();
        a[j * k + j] = l;
        for i in j + 1..k {
            let mut s = a[i * k + j];
            for m in 0..j {
                s -= a[i * k + m] * a[j * k + m];
            }
            a[i * k + j] = s / l;
        }
    }
    true
}

fn cholesky_solve(l: &[f64], b: &mut [f64], k: usize) {
    for i in 0..k {
        let mut s = b[i];
        for j in 0..i {
            s -= l[i * k + j] * b[j];
        }
        b[i] = s / l[i * k + i];
    }
    for i in (0..k).rev() {
        let mut s = b[i];
        for j in i + 1..k {
            s -= l[j * k + i] * b[j];
        }
        b[i] = s / l[i * k + i];
    }
}

/// Cyclic Jacobi eigensolver for a small symmetric matrix (row-major).
/// Returns eigenvalues and the matrix of eigenvectors (columns).
fn jacobi_eigen(a: &[f64], q: usize) -> (Vec<f64>, Vec<f64>) {
    let mut m = a.to_vec();
    let mut v = vec![0.0; q * q];
    for i in 0..q {
        v[i * q + i] = 1.0;
    }
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..q {
            for j in i + 1..q {
                off += m[i * q + j] * m[i * q + j];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..q {
            for r in p + 1..q {
                let apr = m[p * q + r];
                if apr.abs() < 1e-300 {
                    continue;
                }
                let app = m[p * q + p];
                let arr = m[r * q + r];
                let theta = 0.5 * (arr - app) / apr;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..q {
                    let mkp = m[k * q + p];
                    let mkr = m[k * q + r];
                    m[k * q + p] = c * mkp - s * mkr;
                    m[k * q + r] = s * mkp + c * mkr;
                }
                for k in 0..q {
                    let mpk = m[p * q + k];
                    let mrk = m[r * q + k];
                    m[p * q + k] = c * mpk - s * mrk;
                    m[r * q + k] = s * mpk + c * mrk;
                }
                for k in 0..q {
                    let vkp = v[k * q + p];
                    let vkr = v[k * q + r];
                    v[k * q + p] = c * vkp - s * vkr;
                    v[k * q + r] = s * vkp + c * vkr;
                }
            }
        }
    }
    let evals = (0..q).map(|i| m[i * q + i]).collect();
    (evals, v)
}
