//! Riemannian metrics on the grid with derived connection and curvature data.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::field::{OneForm, ScalarField, SymTensor2};
use crate::grid::GridSpec;

/// Christoffel symbols of the second kind, `Gamma^k_{ij}`, symmetric in the
/// lower pair. Stored as `n` blocks of `n(n+1)/2` scalar fields.
#[derive(Debug, Clone)]
pub struct Christoffel {
    n: usize,
    comps: Vec<ScalarField>,
}

impl Christoffel {
    pub fn comp(&self, k: usize, i: usize, j: usize) -> &ScalarField {
        let s = self.n * (self.n + 1) / 2;
        &self.comps[k * s + crate::grid::sym_index(i, j)]
    }

    pub fn sup_norm(&self) -> f64 {
        self.comps.iter().fold(0.0, |m, c| m.max(c.sup_norm()))
    }
}

/// A pointwise symmetric positive definite metric with cached derived data.
///
/// The metric is immutable after construction; the inverse and volume element
/// are computed alongside the positivity check, while the connection and
/// curvature are filled on first use. Safe to share across threads.
#[derive(Debug)]
pub struct Metric {
    g: SymTensor2,
    inv: SymTensor2,
    sqrt_det: ScalarField,
    christoffel: OnceLock<Christoffel>,
    gamma_trace: OnceLock<OneForm>,
    scalar_curv: OnceLock<ScalarField>,
}

impl Metric {
    /// Validate pointwise positive definiteness (Cholesky succeeds at every
    /// grid point) and precompute the inverse and `sqrt(det g)`.
    pub fn new(g: SymTensor2) -> Result<Self> {
        let spec = g.spec().clone();
        let n = spec.n();
        let points = spec.num_points();
        let mut inv = SymTensor2::zeros(&spec);
        let mut sqrt_det = ScalarField::zeros(&spec);

        let mut a = vec![0.0; n * n];
        let mut linv = vec![0.0; n * n];
        for p in 0..points {
            for i in 0..n {
                for j in 0..=i {
                    let v = g.comp(i, j).data()[p];
                    a[i * n + j] = v;
                    a[j * n + i] = v;
                }
            }
            let det_sqrt = cholesky_in_place(&mut a, n)
                .ok_or(Error::NotPositiveDefinite { index: p })?;
            sqrt_det.data_mut()[p] = det_sqrt;
            invert_lower(&a, &mut linv, n);
            // inv(g) = L^{-T} L^{-1}
            for i in 0..n {
                for j in 0..=i {
                    let mut s = 0.0;
                    for k in i..n {
                        s += linv[k * n + i] * linv[k * n + j];
                    }
                    inv.comp_mut(i, j).data_mut()[p] = s;
                }
            }
        }
        Ok(Self {
            g,
            inv,
            sqrt_det,
            christoffel: OnceLock::new(),
            gamma_trace: OnceLock::new(),
            scalar_curv: OnceLock::new(),
        })
    }

    /// Euclidean reference metric `g_ij = delta_ij`.
    pub fn flat(spec: &GridSpec) -> Self {
        Self::new(SymTensor2::identity(spec)).expect("identity metric is positive definite")
    }

    pub fn spec(&self) -> &GridSpec {
        self.g.spec()
    }

    pub fn components(&self) -> &SymTensor2 {
        &self.g
    }

    pub fn inverse(&self) -> &SymTensor2 {
        &self.inv
    }

    pub fn sqrt_det(&self) -> &ScalarField {
        &self.sqrt_det
    }

    /// `Gamma^k_{ij} = 1/2 g^{kl} (d_i g_{jl} + d_j g_{il} - d_l g_{ij})`.
    pub fn christoffel(&self) -> &Christoffel {
        self.christoffel.get_or_init(|| {
            let spec = self.spec();
            let n = spec.n();
            let s = spec.sym_len();
            // dg[a][sym(i,j)] = D_a g_ij
            let dg: Vec<Vec<ScalarField>> = (0..n)
                .map(|a| self.g.components().iter().map(|c| c.derivative(a)).collect())
                .collect();
            let mut comps = Vec::with_capacity(n * s);
            for k in 0..n {
                for i in 0..n {
                    for j in 0..=i {
                        let mut acc = ScalarField::zeros(spec);
                        for l in 0..n {
                            let mut term = dg[i][crate::grid::sym_index(j, l)].clone();
                            term.axpy(1.0, &dg[j][crate::grid::sym_index(i, l)]);
                            term.axpy(-1.0, &dg[l][crate::grid::sym_index(i, j)]);
                            term.mul_in_place(self.inv.comp(k, l));
                            acc.axpy(0.5, &term);
                        }
                        comps.push(acc);
                    }
                }
            }
            Christoffel { n, comps }
        })
    }

    /// Contracted symbols `gamma^m = g^{kl} Gamma^m_{kl}`.
    pub fn gamma_trace(&self) -> &OneForm {
        self.gamma_trace.get_or_init(|| {
            let spec = self.spec();
            let n = spec.n();
            let gamma = self.christoffel();
            let mut comps = Vec::with_capacity(n);
            for m in 0..n {
                let mut acc = ScalarField::zeros(spec);
                for k in 0..n {
                    for l in 0..n {
                        let mut t = gamma.comp(m, k, l).clone();
                        t.mul_in_place(self.inv.comp(k, l));
                        acc.axpy(1.0, &t);
                    }
                }
                comps.push(acc);
            }
            OneForm::from_components(comps)
        })
    }

    /// Ricci tensor from the coordinate formula
    /// `R_ij = d_k Gamma^k_{ij} - d_j Gamma^k_{ki} + Gamma^k_{kl} Gamma^l_{ij}
    ///  - Gamma^k_{jl} Gamma^l_{ki}`.
    pub fn ricci(&self) -> SymTensor2 {
        let spec = self.spec();
        let n = spec.n();
        let gamma = self.christoffel();
        // contracted lower symbol c_i = Gamma^k_{ki}
        let contracted: Vec<ScalarField> = (0..n)
            .map(|i| {
                let mut acc = ScalarField::zeros(spec);
                for k in 0..n {
                    acc.axpy(1.0, gamma.comp(k, k, i));
                }
                acc
            })
            .collect();
        let mut out = SymTensor2::zeros(spec);
        for i in 0..n {
            for j in 0..=i {
                let mut acc = ScalarField::zeros(spec);
                for k in 0..n {
                    acc.axpy(1.0, &gamma.comp(k, i, j).derivative(k));
                }
                acc.axpy(-1.0, &contracted[i].derivative(j));
                for k in 0..n {
                    for l in 0..n {
                        let mut t = gamma.comp(k, k, l).clone();
                        t.mul_in_place(gamma.comp(l, i, j));
                        acc.axpy(1.0, &t);
                        let mut u = gamma.comp(k, j, l).clone();
                        u.mul_in_place(gamma.comp(l, k, i));
                        acc.axpy(-1.0, &u);
                    }
                }
                *out.comp_mut(i, j) = acc;
            }
        }
        out
    }

    /// Scalar curvature `R = g^{ij} R_ij` (cached).
    pub fn scalar_curvature(&self) -> &ScalarField {
        self.scalar_curv.get_or_init(|| {
            let ric = self.ricci();
            crate::calculus::trace(self, &ric)
        })
    }
}

/// In-place Cholesky of a full row-major `n x n` matrix; lower factor is left
/// in the lower triangle. Returns `prod(diag L) = sqrt(det)` or `None` when a
/// pivot fails.
fn cholesky_in_place(a: &mut [f64], n: usize) -> Option<f64> {
    let mut det_sqrt = 1.0;
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let l = d.sqrt();
        a[j * n + j] = l;
        det_sqrt *= l;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / l;
        }
    }
    Some(det_sqrt)
}

/// Invert the lower-triangular factor stored in `l` into `out`.
fn invert_lower(l: &[f64], out: &mut [f64], n: usize) {
    for v in out.iter_mut() {
        *v = 0.0;
    }
    for i in 0..n {
        out[i * n + i] = 1.0 / l[i * n + i];
        for j in 0..i {
            let mut s = 0.0;
            for k in j..i {
                s += l[i * n + k] * out[k * n + j];
            }
            out[i * n + j] = -s / l[i * n + i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use std::f64::consts::PI;

    fn spec() -> GridSpec {
        GridSpec::cube(3, 16, 2.0 * PI).unwrap()
    }

    #[test]
    fn flat_metric_basics() {
        let g = Metric::flat(&spec());
        assert_eq!(g.sqrt_det().min_value(), 1.0);
        assert_eq!(g.sqrt_det().max_value(), 1.0);
        assert_eq!(g.christoffel().sup_norm(), 0.0);
        assert_eq!(g.scalar_curvature().sup_norm(), 0.0);
        assert_eq!(g.ricci().sup_norm(), 0.0);
    }

    #[test]
    fn constant_diagonal_metric_has_zero_connection() {
        let s = spec();
        let t = SymTensor2::from_constant_matrix(&s, &[4.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let g = Metric::new(t).unwrap();
        assert_eq!(g.christoffel().sup_norm(), 0.0);
        assert_eq!(g.sqrt_det().max_value(), 2.0);
        // inverse of diag(4,1,1)
        assert!((g.inverse().comp(0, 0).max_value() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn inverse_times_metric_is_identity() {
        let s = spec();
        let varphi = ScalarField::from_fn(&s, |x| 1.0 + 0.1 * x[0].sin() * x[1].cos());
        let scale = varphi.powf(4.0).unwrap();
        let mut t = SymTensor2::identity(&s).mul_scalar(&scale);
        *t.comp_mut(1, 0) = ScalarField::from_fn(&s, |x| 0.05 * x[2].sin());
        let g = Metric::new(t).unwrap();
        let n = 3;
        for i in 0..n {
            for j in 0..n {
                let mut acc = ScalarField::zeros(&s);
                for k in 0..n {
                    let mut p = g.inverse().comp(i, k).clone();
                    p.mul_in_place(g.components().comp(k, j));
                    acc.axpy(1.0, &p);
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                let err = acc.data().iter().fold(0.0f64, |m, v| m.max((v - expect).abs()));
                assert!(err < 1e-12, "entry ({i},{j}) err {err}");
            }
        }
    }

    #[test]
    fn indefinite_metric_is_rejected() {
        let s = spec();
        let mut t = SymTensor2::identity(&s);
        // poison one point
        t.comp_mut(0, 0).data_mut()[5] = -1.0;
        match Metric::new(t) {
            Err(Error::NotPositiveDefinite { index }) => assert_eq!(index, 5),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn conformal_christoffel_closed_form() {
        // g = phi^{N-2} delta: Gamma^k_ij = d^k_i d_j u + d^k_j d_i u - d_ij d^k u
        // with u = ln phi^{(N-2)/2}; compare against analytic derivatives of u.
        let mut errs = Vec::new();
        for m in [12usize, 16, 24] {
            let s = GridSpec::cube(3, m, 2.0 * PI).unwrap();
            let phi = ScalarField::from_fn(&s, |x| 1.0 + 0.1 * x[0].sin());
            let g = Metric::new(SymTensor2::identity(&s).mul_scalar(&phi.powf(4.0).unwrap())).unwrap();
            // u = 2 ln phi (N - 2 = 4), du_0 = 0.2 cos x0 / phi
            let du0 = ScalarField::from_fn(&s, |x| 2.0 * 0.1 * x[0].cos() / (1.0 + 0.1 * x[0].sin()));
            let gamma = g.christoffel();
            // Gamma^0_{00} = du_0, Gamma^1_{10} = du_0, Gamma^0_{11} = -du_0
            let mut e: f64 = 0.0;
            e = e.max(gamma.comp(0, 0, 0).sub(&du0).sup_norm());
            e = e.max(gamma.comp(1, 1, 0).sub(&du0).sup_norm());
            e = e.max(gamma.comp(0, 1, 1).add(&du0).sup_norm());
            errs.push((s.spacing(0), e));
        }
        for w in errs.windows(2) {
            let order = (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln();
            assert!(order > 1.9, "observed order {order}");
        }
    }
}
