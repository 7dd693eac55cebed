//! Linearizations of the combined parameterization operator at unit
//! conformal factor, assembled as the exact Frechet derivatives of the
//! discrete operator so that central finite differences of the nonlinear map
//! match to the differencing error alone.

use crate::calculus::{
    conformal_killing_op, divergence, gradient, inner_t2, raise_index,
};
use crate::error::Result;
use crate::field::{OneForm, ScalarField, SymTensor2};
use crate::metric::Metric;
use crate::operators::{rough_laplacian, WeightedVectorLaplacian};

/// First-row scalar operator
/// `P_{g,sigma,W} = (4/(n-2)) ((n-1) nabla*nabla - R + n |sigma|^2
///  + n <sigma, L W>)` applied to `psi`.
fn row_one_scalar(
    g: &Metric,
    sigma: &SymTensor2,
    lw: &SymTensor2,
    psi: &ScalarField,
) -> ScalarField {
    let n = g.spec().n();
    let nf = n as f64;
    let pref = 4.0 / (nf - 2.0);
    let mut out = rough_laplacian(g, psi).scaled(pref * (nf - 1.0));
    out.axpy(-pref, &g.scalar_curvature().mul(psi));
    out.axpy(pref * nf, &inner_t2(g, sigma, sigma).mul(psi));
    out.axpy(pref * nf, &inner_t2(g, sigma, lw).mul(psi));
    out
}

/// `-N (L W)(grad psi, .)`: contraction of the longitudinal tensor with the
/// raised gradient in the first slot — realized as the exact derivative of
/// the transpose-assembled weighted Laplacian.
fn row_two_coupling(
    op_unit: &WeightedVectorLaplacian,
    w: &OneForm,
    psi: &ScalarField,
) -> OneForm {
    op_unit.phi_derivative(w, psi)
}

/// Linearization of `(phi^{1-N} P_{g,omega} phi, Delta_{g,phi} W,
/// phi^{-N} div sigma)` at `(1, W, sigma)` applied to `(psi, V, h)`.
pub fn linearized_p_b(
    g: &Metric,
    base_w: &OneForm,
    base_sigma: &SymTensor2,
    psi: &ScalarField,
    v: &OneForm,
    h: &SymTensor2,
) -> Result<(ScalarField, OneForm, OneForm)> {
    let lw = conformal_killing_op(g, base_w);
    let mut k = base_sigma.clone();
    k.axpy(1.0, &lw);

    let mut row1 = row_one_scalar(g, base_sigma, &lw, psi);
    row1.axpy(-2.0, &inner_t2(g, &k, &conformal_killing_op(g, v)));
    row1.axpy(-2.0, &inner_t2(g, &k, h));

    let op_unit = WeightedVectorLaplacian::unit(g);
    let mut row2 = row_two_coupling(&op_unit, base_w, psi);
    row2.axpy(1.0, &op_unit.apply(v));

    let row3 = divergence(g, h);
    Ok((row1, row2, row3))
}

/// Linearization of the split-variable triple `(phi^{1-N} P_{g,varpi} phi,
/// Delta_{g,phi} W, Delta_{g,phi} Y)` at `(1, W, Y)` with the trace-free
/// source held fixed, applied to `(psi, V_w, V_y)`.
pub fn linearized_p_b2(
    g: &Metric,
    base_w: &OneForm,
    base_sigma0: &SymTensor2,
    base_y: &OneForm,
    psi: &ScalarField,
    v_w: &OneForm,
    v_y: &OneForm,
) -> Result<(ScalarField, OneForm, OneForm)> {
    let wy = base_w.add(base_y);
    let lwy = conformal_killing_op(g, &wy);
    let mut k = base_sigma0.clone();
    k.axpy(1.0, &lwy);

    let mut row1 = row_one_scalar(g, base_sigma0, &lwy, psi);
    row1.axpy(-2.0, &inner_t2(g, &k, &conformal_killing_op(g, v_w)));
    row1.axpy(-2.0, &inner_t2(g, &k, &conformal_killing_op(g, v_y)));

    let op_unit = WeightedVectorLaplacian::unit(g);
    let mut row2 = row_two_coupling(&op_unit, base_w, psi);
    row2.axpy(1.0, &op_unit.apply(v_w));
    let mut row3 = row_two_coupling(&op_unit, base_y, psi);
    row3.axpy(1.0, &op_unit.apply(v_y));

    Ok((row1, row2, row3))
}

/// Reference discretization of `-N (L W)(grad psi, .)`; used by tests to pin
/// the continuum limit of the exact-derivative coupling.
pub fn gradient_coupling_reference(
    g: &Metric,
    w: &OneForm,
    psi: &ScalarField,
) -> OneForm {
    let n = g.spec().n();
    let nn = g.spec().critical_exponent();
    let lw = conformal_killing_op(g, w);
    let grad_up = raise_index(g, &gradient(psi));
    let mut comps = Vec::with_capacity(n);
    for b in 0..n {
        let mut acc = ScalarField::zeros(g.spec());
        for a in 0..n {
            let mut t = lw.comp(a, b).clone();
            t.mul_in_place(grad_up.comp(a));
            acc.axpy(-nn, &t);
        }
        comps.push(acc);
    }
    OneForm::from_components(comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::operators::{p_system, p_system_split};
    use std::f64::consts::PI;

    fn spec() -> GridSpec {
        GridSpec::cube(3, 12, 2.0 * PI).unwrap()
    }

    fn base(s: &GridSpec) -> (SymTensor2, OneForm) {
        let sigma = SymTensor2::from_constant_matrix(
            s,
            &[0.2, 0.05, 0.0, 0.05, -0.1, 0.02, 0.0, 0.02, -0.1],
        );
        let w = OneForm::from_components(vec![
            ScalarField::from_fn(s, |x| 0.3 * x[0].sin() + 0.1 * x[1].cos()),
            ScalarField::from_fn(s, |x| 0.2 * (x[2] + 0.3).sin()),
            ScalarField::from_fn(s, |x| 0.15 * (x[0] + x[1]).cos()),
        ]);
        (sigma, w)
    }

    fn inputs(s: &GridSpec) -> (ScalarField, OneForm, SymTensor2) {
        let psi = ScalarField::from_fn(s, |x| 0.4 * x[1].sin() + 0.2 * (x[0] * 2.0).cos());
        let v = OneForm::from_components(vec![
            ScalarField::from_fn(s, |x| 0.25 * x[2].cos()),
            ScalarField::from_fn(s, |x| 0.15 * (x[0] + x[2]).sin()),
            ScalarField::from_fn(s, |x| 0.1 * x[1].cos()),
        ]);
        let h = SymTensor2::from_constant_matrix(
            s,
            &[0.1, 0.0, 0.02, 0.0, -0.05, 0.0, 0.02, 0.0, -0.05],
        );
        (psi, v, h)
    }

    #[test]
    fn zero_input_maps_to_zero() {
        let s = spec();
        let g = Metric::flat(&s);
        let (sigma, w) = base(&s);
        let (r1, r2, r3) = linearized_p_b(
            &g,
            &w,
            &sigma,
            &ScalarField::zeros(&s),
            &OneForm::zeros(&s),
            &SymTensor2::zeros(&s),
        )
        .unwrap();
        assert_eq!(r1.sup_norm(), 0.0);
        assert_eq!(r2.sup_norm(), 0.0);
        assert_eq!(r3.sup_norm(), 0.0);
    }

    #[test]
    fn pure_scalar_input_at_zero_base_is_yamabe_like() {
        let s = spec();
        let g = Metric::flat(&s);
        let psi = ScalarField::from_fn(&s, |x| x[0].sin());
        let (r1, _, _) = linearized_p_b(
            &g,
            &OneForm::zeros(&s),
            &SymTensor2::zeros(&s),
            &psi,
            &OneForm::zeros(&s),
            &SymTensor2::zeros(&s),
        )
        .unwrap();
        // (4/(n-2))(n-1) nabla*nabla psi = 8 nabla*nabla psi for n = 3
        let expect = rough_laplacian(&g, &psi).scaled(8.0);
        assert!(r1.sub(&expect).sup_norm() < 1e-12);
    }

    #[test]
    fn matches_central_differences_of_the_nonlinear_map() {
        let s = spec();
        let g = Metric::flat(&s);
        let (sigma, w) = base(&s);
        let (psi, v, h) = inputs(&s);
        let t = 1e-5;

        let plus = {
            let phi = ScalarField::constant(&s, 1.0).add(&psi.scaled(t));
            let mut wt = w.clone();
            wt.axpy(t, &v);
            let mut st = sigma.clone();
            st.axpy(t, &h);
            p_system(&g, &phi, &wt, &st).unwrap()
        };
        let minus = {
            let phi = ScalarField::constant(&s, 1.0).add(&psi.scaled(-t));
            let mut wt = w.clone();
            wt.axpy(-t, &v);
            let mut st = sigma.clone();
            st.axpy(-t, &h);
            p_system(&g, &phi, &wt, &st).unwrap()
        };
        let fd1 = plus.0.sub(&minus.0).scaled(0.5 / t);
        let fd2 = plus.1.sub(&minus.1).scaled(0.5 / t);
        let fd3 = plus.2.sub(&minus.2).scaled(0.5 / t);

        let (r1, r2, r3) = linearized_p_b(&g, &w, &sigma, &psi, &v, &h).unwrap();
        assert!(fd1.sub(&r1).sup_norm() < 1e-6, "row1 {}", fd1.sub(&r1).sup_norm());
        assert!(fd2.sub(&r2).sup_norm() < 1e-6, "row2 {}", fd2.sub(&r2).sup_norm());
        assert!(fd3.sub(&r3).sup_norm() < 1e-6, "row3 {}", fd3.sub(&r3).sup_norm());
    }

    #[test]
    fn split_variant_matches_central_differences() {
        let s = spec();
        let g = Metric::flat(&s);
        let (sigma0, w) = base(&s);
        let y = OneForm::from_components(vec![
            ScalarField::from_fn(&s, |x| 0.1 * (x[1] + 0.2).sin()),
            ScalarField::from_fn(&s, |x| 0.2 * x[0].cos()),
            ScalarField::from_fn(&s, |x| 0.05 * (x[2] * 2.0).sin()),
        ]);
        let (psi, v_w, _) = inputs(&s);
        let v_y = OneForm::from_components(vec![
            ScalarField::from_fn(&s, |x| 0.12 * x[2].sin()),
            ScalarField::from_fn(&s, |x| 0.08 * (x[1] * 2.0).cos()),
            ScalarField::from_fn(&s, |x| 0.06 * x[0].sin()),
        ]);
        let t = 1e-5;
        let eval = |dt: f64| {
            let phi = ScalarField::constant(&s, 1.0).add(&psi.scaled(dt));
            let mut wt = w.clone();
            wt.axpy(dt, &v_w);
            let mut yt = y.clone();
            yt.axpy(dt, &v_y);
            p_system_split(&g, &phi, &wt, &yt, &sigma0).unwrap()
        };
        let plus = eval(t);
        let minus = eval(-t);
        let fd1 = plus.0.sub(&minus.0).scaled(0.5 / t);
        let fd2 = plus.1.sub(&minus.1).scaled(0.5 / t);
        let fd3 = plus.2.sub(&minus.2).scaled(0.5 / t);
        let (r1, r2, r3) = linearized_p_b2(&g, &w, &sigma0, &y, &psi, &v_w, &v_y).unwrap();
        assert!(fd1.sub(&r1).sup_norm() < 1e-6, "row1 {}", fd1.sub(&r1).sup_norm());
        assert!(fd2.sub(&r2).sup_norm() < 1e-6, "row2 {}", fd2.sub(&r2).sup_norm());
        assert!(fd3.sub(&r3).sup_norm() < 1e-6, "row3 {}", fd3.sub(&r3).sup_norm());
    }

    #[test]
    fn coupling_term_converges_to_reference_form() {
        let mut errs = Vec::new();
        for m in [16usize, 24, 32] {
            let s = GridSpec::cube(3, m, 2.0 * PI).unwrap();
            let mut smp = crate::analytic::FieldSampler::new(3);
            let g = Metric::flat(&s);
            let w = smp.separated_oneform(&s, 0, 0.3);
            let psi = smp.axis_mode_poly(2, 0.0, 0.4).eval(&s);
            let op = WeightedVectorLaplacian::unit(&g);
            let exact = op.phi_derivative(&w, &psi);
            let reference = gradient_coupling_reference(&g, &w, &psi);
            errs.push((
                s.max_spacing(),
                crate::calculus::l2_norm_oneform(&g, &exact.sub(&reference)),
            ));
        }
        let order = crate::analytic::fit_order(&errs);
        assert!(order > 1.9, "observed order {order}");
    }
}
