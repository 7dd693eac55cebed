//! Metric-dependent tensor calculus on grid fields.

use crate::error::Result;
use crate::field::{OneForm, ScalarField, SymTensor2};
use crate::metric::Metric;

/// Raise the index of a 1-form: `X^i = g^{ij} X_j`. The result is stored in a
/// [`OneForm`] holding contravariant components.
pub fn raise_index(g: &Metric, x: &OneForm) -> OneForm {
    let n = g.spec().n();
    let mut comps = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = ScalarField::zeros(g.spec());
        for j in 0..n {
            let mut t = g.inverse().comp(i, j).clone();
            t.mul_in_place(x.comp(j));
            acc.axpy(1.0, &t);
        }
        comps.push(acc);
    }
    OneForm::from_components(comps)
}

/// Lower the index of a contravariant vector: `X_i = g_{ij} X^j`.
pub fn lower_index(g: &Metric, x: &OneForm) -> OneForm {
    let n = g.spec().n();
    let mut comps = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = ScalarField::zeros(g.spec());
        for j in 0..n {
            let mut t = g.components().comp(i, j).clone();
            t.mul_in_place(x.comp(j));
            acc.axpy(1.0, &t);
        }
        comps.push(acc);
    }
    OneForm::from_components(comps)
}

/// Raise both indices of a symmetric 2-tensor: `h^{ij} = g^{ia} g^{jb} h_{ab}`.
pub fn raise_both(g: &Metric, h: &SymTensor2) -> SymTensor2 {
    let n = g.spec().n();
    let mut out = SymTensor2::zeros(g.spec());
    // mixed intermediate m^i_b = g^{ia} h_{ab}
    let mut mixed = vec![ScalarField::zeros(g.spec()); n * n];
    for i in 0..n {
        for b in 0..n {
            let mut acc = ScalarField::zeros(g.spec());
            for a in 0..n {
                let mut t = g.inverse().comp(i, a).clone();
                t.mul_in_place(h.comp(a, b));
                acc.axpy(1.0, &t);
            }
            mixed[i * n + b] = acc;
        }
    }
    for i in 0..n {
        for j in 0..=i {
            let mut acc = ScalarField::zeros(g.spec());
            for b in 0..n {
                let mut t = g.inverse().comp(j, b).clone();
                t.mul_in_place(&mixed[i * n + b]);
                acc.axpy(1.0, &t);
            }
            *out.comp_mut(i, j) = acc;
        }
    }
    out
}

/// Pointwise metric pairing of 1-forms, `<X,Y>_g = g^{ij} X_i Y_j`.
pub fn inner_oneform(g: &Metric, x: &OneForm, y: &OneForm) -> ScalarField {
    let raised = raise_index(g, x);
    let mut acc = ScalarField::zeros(g.spec());
    for a in 0..g.spec().n() {
        let mut t = raised.comp(a).clone();
        t.mul_in_place(y.comp(a));
        acc.axpy(1.0, &t);
    }
    acc
}

/// Pointwise full contraction `<h,k>_g = g^{ia} g^{jb} h_{ij} k_{ab}`.
pub fn inner_t2(g: &Metric, h: &SymTensor2, k: &SymTensor2) -> ScalarField {
    let n = g.spec().n();
    let raised = raise_both(g, h);
    let mut acc = ScalarField::zeros(g.spec());
    for i in 0..n {
        for j in 0..=i {
            let w = if i == j { 1.0 } else { 2.0 };
            let mut t = raised.comp(i, j).clone();
            t.mul_in_place(k.comp(i, j));
            acc.axpy(w, &t);
        }
    }
    acc
}

/// Pointwise tensor norm `|h|_g = sqrt(<h,h>_g)`.
pub fn tensor_norm(g: &Metric, h: &SymTensor2) -> ScalarField {
    inner_t2(g, h, h).sqrt()
}

/// Pointwise trace `Tr_g h = g^{ij} h_{ij}`.
pub fn trace(g: &Metric, h: &SymTensor2) -> ScalarField {
    let n = g.spec().n();
    let mut acc = ScalarField::zeros(g.spec());
    for i in 0..n {
        for j in 0..n {
            let mut t = g.inverse().comp(i, j).clone();
            t.mul_in_place(h.comp(i, j));
            acc.axpy(1.0, &t);
        }
    }
    acc
}

/// Trace-free part `h - (Tr_g h / n) g`.
pub fn trace_free_part(g: &Metric, h: &SymTensor2) -> SymTensor2 {
    let n = g.spec().n() as f64;
    let tr = trace(g, h).scaled(1.0 / n);
    let mut out = h.clone();
    out.axpy(-1.0, &g.components().mul_scalar(&tr));
    out
}

/// Exterior derivative of a scalar, `(df)_a = d_a f`.
pub fn gradient(f: &ScalarField) -> OneForm {
    OneForm::from_components((0..f.spec().n()).map(|a| f.derivative(a)).collect())
}

/// Divergence of a symmetric 2-tensor, `(div_g h)_i = -nabla^k h_{ki}`.
pub fn divergence(g: &Metric, h: &SymTensor2) -> OneForm {
    let n = g.spec().n();
    let gamma = g.christoffel();
    // dh[l][sym(k,i)] = D_l h_{ki}
    let dh: Vec<Vec<ScalarField>> = (0..n)
        .map(|l| h.components().iter().map(|c| c.derivative(l)).collect())
        .collect();
    let mut comps = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = ScalarField::zeros(g.spec());
        for k in 0..n {
            for l in 0..n {
                // nabla_l h_{ki} = d_l h_{ki} - Gamma^m_{lk} h_{mi} - Gamma^m_{li} h_{km}
                let mut t = dh[l][crate::grid::sym_index(k, i)].clone();
                for m in 0..n {
                    let mut u = gamma.comp(m, l, k).clone();
                    u.mul_in_place(h.comp(m, i));
                    t.axpy(-1.0, &u);
                    let mut v = gamma.comp(m, l, i).clone();
                    v.mul_in_place(h.comp(k, m));
                    t.axpy(-1.0, &v);
                }
                t.mul_in_place(g.inverse().comp(k, l));
                acc.axpy(-1.0, &t);
            }
        }
        comps.push(acc);
    }
    OneForm::from_components(comps)
}

/// Conformal Killing operator
/// `(L W)_{ij} = nabla_i W_j + nabla_j W_i - (2/n) g_ij nabla^k W_k`.
///
/// The result is trace-free to rounding by construction.
pub fn conformal_killing_op(g: &Metric, w: &OneForm) -> SymTensor2 {
    let n = g.spec().n();
    let gamma = g.christoffel();
    // dw[a][b] = D_a W_b
    let dw: Vec<ScalarField> = (0..n * n)
        .map(|ab| w.comp(ab % n).derivative(ab / n))
        .collect();
    // theta = g^{ab} D_a W_b - gamma^m W_m  (= nabla^k W_k)
    let mut theta = ScalarField::zeros(g.spec());
    for a in 0..n {
        for b in 0..n {
            let mut t = g.inverse().comp(a, b).clone();
            t.mul_in_place(&dw[a * n + b]);
            theta.axpy(1.0, &t);
        }
    }
    for m in 0..n {
        let mut t = g.gamma_trace().comp(m).clone();
        t.mul_in_place(w.comp(m));
        theta.axpy(-1.0, &t);
    }

    let scale = -2.0 / n as f64;
    let mut out = SymTensor2::zeros(g.spec());
    for i in 0..n {
        for j in 0..=i {
            let mut acc = dw[i * n + j].add(&dw[j * n + i]);
            for k in 0..n {
                let mut t = gamma.comp(k, i, j).clone();
                t.mul_in_place(w.comp(k));
                acc.axpy(-2.0, &t);
            }
            let mut tr = g.components().comp(i, j).clone();
            tr.mul_in_place(&theta);
            acc.axpy(scale, &tr);
            *out.comp_mut(i, j) = acc;
        }
    }
    out
}

/// Codifferential of a 1-form, `d* X = -nabla^k X_k`.
pub fn codifferential(g: &Metric, x: &OneForm) -> ScalarField {
    let n = g.spec().n();
    let mut acc = ScalarField::zeros(g.spec());
    for k in 0..n {
        for l in 0..n {
            let mut t = g.inverse().comp(k, l).clone();
            t.mul_in_place(&x.comp(l).derivative(k));
            acc.axpy(-1.0, &t);
        }
    }
    for m in 0..n {
        let mut t = g.gamma_trace().comp(m).clone();
        t.mul_in_place(x.comp(m));
        acc.axpy(1.0, &t);
    }
    acc
}

/// Riemann sum `integral f dmu_g = sum f sqrt(det g) prod h_i`.
pub fn integrate(g: &Metric, f: &ScalarField) -> f64 {
    assert_eq!(g.spec(), f.spec(), "grid mismatch");
    let cell = g.spec().cell_volume();
    let mut acc = 0.0;
    for (v, s) in f.data().iter().zip(g.sqrt_det().data()) {
        acc += v * s;
    }
    acc * cell
}

/// Weighted pairing `(X,Y)_{g,phi} = integral <X,Y>_g phi^N dmu_g`.
pub fn weighted_inner(g: &Metric, phi: &ScalarField, x: &OneForm, y: &OneForm) -> Result<f64> {
    phi.check_positive("weight phi")?;
    let pn = phi.powf(g.spec().critical_exponent())?;
    Ok(integrate(g, &inner_oneform(g, x, y).mul(&pn)))
}

pub fn l2_norm_scalar(g: &Metric, f: &ScalarField) -> f64 {
    integrate(g, &f.mul(f)).max(0.0).sqrt()
}

pub fn l2_norm_oneform(g: &Metric, x: &OneForm) -> f64 {
    integrate(g, &inner_oneform(g, x, x)).max(0.0).sqrt()
}

pub fn l2_norm_t2(g: &Metric, h: &SymTensor2) -> f64 {
    integrate(g, &inner_t2(g, h, h)).max(0.0).sqrt()
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
    fn divergence_of_constant_tensor_is_zero_on_flat() {
        let s = spec();
        let g = Metric::flat(&s);
        let sigma =
            SymTensor2::from_constant_matrix(&s, &[2.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0]);
        assert_eq!(divergence(&g, &sigma).sup_norm(), 0.0);
    }

    #[test]
    fn divergence_of_pure_trace_is_minus_gradient() {
        let s = spec();
        let g = Metric::flat(&s);
        let f = ScalarField::from_fn(&s, |x| x[0].sin() + 0.5 * (x[1] * 2.0).cos());
        let h = SymTensor2::identity(&s).mul_scalar(&f);
        let div = divergence(&g, &h);
        let grad = gradient(&f);
        for a in 0..3 {
            let err = div.comp(a).add(grad.comp(a)).sup_norm();
            assert!(err < 1e-13, "axis {a}: {err}");
        }
    }

    #[test]
    fn divergence_matches_loop_oracle_on_flat() {
        let s = spec();
        let g = Metric::flat(&s);
        let mut h = SymTensor2::zeros(&s);
        for i in 0..3 {
            for j in 0..=i {
                *h.comp_mut(i, j) = ScalarField::from_fn(&s, |x| {
                    ((i as f64 + 1.0) * x[0] + (j as f64) * x[1]).sin() + (x[2] * (1 + j) as f64).cos()
                });
            }
        }
        let div = divergence(&g, &h);
        for i in 0..3 {
            // independent oracle: -(sum_k D_k h_{ki})
            let mut oracle = ScalarField::zeros(&s);
            for k in 0..3 {
                oracle.axpy(-1.0, &h.comp(k, i).derivative(k));
            }
            let err = div.comp(i).sub(&oracle).sup_norm();
            assert!(err < 1e-12, "component {i}: {err}");
        }
    }

    #[test]
    fn conformal_killing_of_constants_vanishes() {
        let s = spec();
        let g = Metric::flat(&s);
        let w = OneForm::constant(&s, &[1.0, -2.0, 0.5]);
        assert_eq!(conformal_killing_op(&g, &w).sup_norm(), 0.0);
    }

    #[test]
    fn conformal_killing_single_mode_oracle() {
        // W = (sin x0, 0, 0): diagonal (4/3, -2/3, -2/3) cos x0 times the
        // centered-stencil symbol sin(h)/h.
        let s = spec();
        let g = Metric::flat(&s);
        let w = OneForm::from_components(vec![
            ScalarField::from_fn(&s, |x| x[0].sin()),
            ScalarField::zeros(&s),
            ScalarField::zeros(&s),
        ]);
        let lw = conformal_killing_op(&g, &w);
        let h = s.spacing(0);
        let fac = h.sin() / h;
        let expect = |c: f64| ScalarField::from_fn(&s, |x| c * fac * x[0].cos());
        assert!(lw.comp(0, 0).sub(&expect(4.0 / 3.0)).sup_norm() < 1e-13);
        assert!(lw.comp(1, 1).sub(&expect(-2.0 / 3.0)).sup_norm() < 1e-13);
        assert!(lw.comp(2, 2).sub(&expect(-2.0 / 3.0)).sup_norm() < 1e-13);
        assert_eq!(lw.comp(1, 0).sup_norm(), 0.0);
    }

    #[test]
    fn conformal_killing_is_trace_free() {
        let s = spec();
        let varphi = ScalarField::from_fn(&s, |x| 1.0 + 0.15 * x[0].sin() * (2.0 * x[2]).cos());
        let g = Metric::new(SymTensor2::identity(&s).mul_scalar(&varphi.powf(4.0).unwrap())).unwrap();
        let w = OneForm::from_components(vec![
            ScalarField::from_fn(&s, |x| x[1].sin()),
            ScalarField::from_fn(&s, |x| (x[0] + x[2]).cos()),
            ScalarField::from_fn(&s, |x| 0.3 * (2.0 * x[1]).sin()),
        ]);
        let lw = conformal_killing_op(&g, &w);
        let tr = trace(&g, &lw);
        assert!(tr.sup_norm() < 1e-12 * lw.sup_norm().max(1.0), "trace {}", tr.sup_norm());
    }

    #[test]
    fn integrate_constants_and_modes() {
        let s = spec();
        let g = Metric::flat(&s);
        let vol = (2.0 * PI).powi(3);
        let one = ScalarField::constant(&s, 1.0);
        assert!((integrate(&g, &one) - vol).abs() < 1e-9 * vol);
        let m = ScalarField::from_fn(&s, |x| x[0].sin());
        assert!(integrate(&g, &m).abs() < 1e-12 * vol);
    }

    #[test]
    fn weighted_inner_constant_oracle() {
        // phi = 2, X = Y = e1: 2^6 * (2 pi)^3
        let s = spec();
        let g = Metric::flat(&s);
        let phi = ScalarField::constant(&s, 2.0);
        let x = OneForm::constant(&s, &[1.0, 0.0, 0.0]);
        let got = weighted_inner(&g, &phi, &x, &x).unwrap();
        let expect = 64.0 * (2.0 * PI).powi(3);
        assert!((got - expect).abs() < 1e-9 * expect, "{got} vs {expect}");
    }

    #[test]
    fn tensor_norm_oracles() {
        let s = spec();
        let g = Metric::flat(&s);
        assert!((inner_t2(&g, &SymTensor2::identity(&s), &SymTensor2::identity(&s)).max_value()
            - 3.0)
            .abs()
            < 1e-14);
        let sigma =
            SymTensor2::from_constant_matrix(&s, &[2.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0]);
        let nrm2 = inner_t2(&g, &sigma, &sigma);
        assert!((nrm2.max_value() - 6.0).abs() < 1e-14);
        assert!((nrm2.min_value() - 6.0).abs() < 1e-14);
    }
}
