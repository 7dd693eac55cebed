//! Damped Newton solution of the nonlinear scalar equation
//! `c_n nabla*nabla phi + R phi - q0 phi^{-N-1} - q1 phi^{-1} - q2 phi^{N-1}
//!  = ((1-n)/n) tau^2 phi^{N-1}`,
//! where the coefficient fields `(q0, q1, q2)` encode how the longitudinal
//! scale enters the momentum-density norm for each parameterization.

use crate::calculus::{conformal_killing_op, inner_t2, integrate, l2_norm_scalar, tensor_norm};
use crate::cg::{conjugate_gradient, default_max_iter, CgOptions};
use crate::error::{Error, Result};
use crate::field::{OneForm, ScalarField, SymTensor2};
use crate::metric::Metric;
use crate::operators::{conformal_coefficient, rough_laplacian};
use crate::solvers::VarphiRule;

#[derive(Debug, Clone)]
pub struct NewtonConfig {
    pub tol: f64,
    pub cg_tol: f64,
    pub max_iterations: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            cg_tol: 1e-10,
            max_iterations: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonInfo {
    pub iterations: usize,
    pub rel_residual: f64,
    pub history: Vec<f64>,
}

/// Power-law coefficients of the momentum-density terms.
pub(crate) struct OmegaCoefficients {
    pub q0: ScalarField,
    pub q1: ScalarField,
    pub q2: ScalarField,
}

/// Expand `omega^2 phi^{-N-1}` into `q0 phi^{-N-1} + q1 phi^{-1} + q2 phi^{N-1}`
/// for the given scale rule.
pub(crate) fn omega_coefficients(
    g: &Metric,
    sigma: &SymTensor2,
    w: &OneForm,
    rule: &VarphiRule,
) -> Result<OmegaCoefficients> {
    let spec = g.spec();
    let lw = conformal_killing_op(g, w);
    let zero = ScalarField::zeros(spec);
    Ok(match rule {
        VarphiRule::One => {
            let mut k = sigma.clone();
            k.axpy(1.0, &lw);
            OmegaCoefficients {
                q0: inner_t2(g, &k, &k),
                q1: zero.clone(),
                q2: zero,
            }
        }
        VarphiRule::Fixed(varphi) => {
            varphi.check_positive("fixed scale varphi")?;
            let vn = varphi.powf(spec.critical_exponent())?;
            let mut k = lw.mul_scalar(&vn);
            k.axpy(1.0, sigma);
            OmegaCoefficients {
                q0: inner_t2(g, &k, &k),
                q1: zero.clone(),
                q2: zero,
            }
        }
        VarphiRule::Phi => OmegaCoefficients {
            q0: inner_t2(g, sigma, sigma),
            q1: inner_t2(g, sigma, &lw).scaled(2.0),
            q2: inner_t2(g, &lw, &lw),
        },
        VarphiRule::FScaled { f, c } => {
            let fv = f.eval_field(&tensor_norm(g, &lw));
            let u = fv.mul(&fv).scaled(*c);
            u.check_positive("f-scaled rule factor")
                .map_err(|e| Error::RuleEvaluation(e.to_string()))?;
            OmegaCoefficients {
                q0: inner_t2(g, sigma, sigma),
                q1: inner_t2(g, sigma, &lw).scaled(2.0).mul(&u),
                q2: inner_t2(g, &lw, &lw).mul(&u.mul(&u)),
            }
        }
    })
}

/// Constant solution of the flat-data algebraic balance
/// `s^2 phi^{-N-1} = ((n-1)/n) tau^2 phi^{N-1}`, when both sides are active.
pub fn constant_root(n: usize, sigma_norm2: f64, tau2: f64) -> Option<f64> {
    if sigma_norm2 <= 0.0 || tau2 <= 0.0 {
        return None;
    }
    let nf = n as f64;
    let nn = 2.0 * nf / (nf - 2.0);
    Some((nf * sigma_norm2 / ((nf - 1.0) * tau2)).powf(1.0 / (2.0 * nn)))
}

/// Solve the scalar equation by damped Newton iteration with positivity
/// safeguarding. `rule` selects which powers of the unknown the momentum
/// terms carry; `sigma`/`w` supply the coefficient fields.
pub fn solve_lichnerowicz(
    g: &Metric,
    tau: &ScalarField,
    sigma: &SymTensor2,
    w: &OneForm,
    rule: &VarphiRule,
    phi_init: &ScalarField,
    cfg: &NewtonConfig,
) -> Result<(ScalarField, NewtonInfo)> {
    phi_init.check_positive("initial conformal factor")?;
    let spec = g.spec();
    let n = spec.n() as f64;
    let nn = spec.critical_exponent();
    let cn = conformal_coefficient(spec.n());
    let coeffs = omega_coefficients(g, sigma, w, rule)?;
    let tau2 = tau.mul(tau).scaled((n - 1.0) / n);
    let r = g.scalar_curvature();

    // flat-sign obstruction: with no tau^2 or positive-power terms the
    // integral of the equation cannot vanish for any positive field
    if tau2.sup_norm() == 0.0
        && coeffs.q1.sup_norm() == 0.0
        && coeffs.q2.sup_norm() == 0.0
        && coeffs.q0.sup_norm() > 0.0
        && r.max_value() <= 1e-14
    {
        return Err(Error::NoPositiveSolution(
            "tau is identically zero while |sigma + scale LW|^2 is not: integrating the \
             equation over the torus gives a strictly negative mean for every positive \
             conformal factor, so Newton cannot converge"
                .into(),
        ));
    }

    let residual = |phi: &ScalarField| -> Result<(ScalarField, f64)> {
        let p_m = phi.powf(-nn - 1.0)?;
        let p_inv = phi.powf(-1.0)?;
        let p_p = phi.powf(nn - 1.0)?;
        let mut f = rough_laplacian(g, phi).scaled(cn);
        f.axpy(1.0, &r.mul(phi));
        f.axpy(-1.0, &coeffs.q0.mul(&p_m));
        f.axpy(-1.0, &coeffs.q1.mul(&p_inv));
        f.axpy(-1.0, &coeffs.q2.mul(&p_p));
        f.axpy(1.0, &tau2.mul(&p_p));
        let scale = l2_norm_scalar(g, &coeffs.q0.mul(&p_m))
            + l2_norm_scalar(g, &coeffs.q1.mul(&p_inv))
            + l2_norm_scalar(g, &coeffs.q2.add(&tau2).mul(&p_p))
            + l2_norm_scalar(g, &r.mul(phi));
        Ok((f, scale.max(1e-300)))
    };

    let mut phi = phi_init.clone();
    let (mut f, mut scale) = residual(&phi)?;
    let mut res = l2_norm_scalar(g, &f) / scale;
    let mut history = vec![res];
    if res <= cfg.tol {
        return Ok((
            phi,
            NewtonInfo {
                iterations: 0,
                rel_residual: res,
                history,
            },
        ));
    }

    for it in 0..cfg.max_iterations {
        // diagonal of the derivative
        let mut diag = r.clone();
        diag.axpy(nn + 1.0, &coeffs.q0.mul(&phi.powf(-nn - 2.0)?));
        diag.axpy(1.0, &coeffs.q1.mul(&phi.powf(-2.0)?));
        let mut t = tau2.clone();
        t.axpy(-1.0, &coeffs.q2);
        diag.axpy(nn - 1.0, &t.mul(&phi.powf(nn - 2.0)?));

        let inner = |a: &ScalarField, b: &ScalarField| integrate(g, &a.mul(b));
        let inner_tol = cfg.cg_tol.max((0.1 * res).min(1e-2));
        let max_iter = default_max_iter(spec.num_points());

        let mut delta = None;
        let mut shift = 0.0;
        for attempt in 0..4 {
            let sh = shift;
            let apply = |v: &ScalarField| {
                let mut out = rough_laplacian(g, v).scaled(cn);
                out.axpy(1.0, &diag.mul(v));
                if sh > 0.0 {
                    out.axpy(sh, v);
                }
                out
            };
            match conjugate_gradient(apply, inner, &f, &CgOptions::new(inner_tol, max_iter)) {
                Ok((d, _)) => {
                    delta = Some(d);
                    break;
                }
                Err(_) if attempt < 3 => {
                    // indefinite diagonal: retry with a Levenberg-style shift
                    let dscale = diag.sup_norm().max(1.0);
                    shift = if shift == 0.0 { 1e-4 * dscale } else { shift * 100.0 };
                }
                Err(e) => return Err(e),
            }
        }
        let delta = delta.expect("newton step");

        // damped update with positivity safeguard
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut cand = phi.clone();
            cand.axpy(-lambda, &delta);
            if cand.min_value() > 0.0 {
                let (fc, sc) = residual(&cand)?;
                let rc = l2_norm_scalar(g, &fc) / sc;
                if rc <= (1.0 - 1e-4 * lambda) * res || rc <= cfg.tol {
                    phi = cand;
                    f = fc;
                    scale = sc;
                    res = rc;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        let _ = scale;
        if !accepted {
            let mut cand = phi.clone();
            cand.axpy(-1e-12, &delta);
            if cand.min_value() <= 0.0 {
                return Err(Error::PositivityLoss { iterations: it + 1 });
            }
            return Err(Error::NewtonDiverged {
                iterations: it + 1,
                rel_residual: res,
            });
        }
        history.push(res);
        if res <= cfg.tol {
            return Ok((
                phi,
                NewtonInfo {
                    iterations: it + 1,
                    rel_residual: res,
                    history,
                },
            ));
        }
    }
    Err(Error::NewtonDiverged {
        iterations: cfg.max_iterations,
        rel_residual: res,
    })
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
    fn cmc_constant_data_hits_algebraic_root() {
        let s = spec();
        let g = Metric::flat(&s);
        let sigma = SymTensor2::from_constant_matrix(
            &s,
            &[0.2, 0.0, 0.0, 0.0, -0.1, 0.0, 0.0, 0.0, -0.1],
        );
        let tau = ScalarField::constant(&s, 0.5);
        let w = OneForm::zeros(&s);
        let expect = constant_root(3, 0.06, 0.25).unwrap();
        // (3 * 0.06 / (2 * 0.25))^{1/12}
        assert!((expect - 0.36f64.powf(1.0 / 12.0)).abs() < 1e-15);
        let init = ScalarField::constant(&s, 1.0);
        let (phi, info) = solve_lichnerowicz(
            &g,
            &tau,
            &sigma,
            &w,
            &VarphiRule::One,
            &init,
            &NewtonConfig::default(),
        )
        .unwrap();
        assert!(info.rel_residual <= 1e-10);
        assert!(
            (phi.max_value() - expect).abs() < 1e-10 * expect,
            "{} vs {expect}",
            phi.max_value()
        );
        assert!((phi.min_value() - expect).abs() < 1e-10 * expect);
    }

    #[test]
    fn zero_data_returns_initial_field() {
        let s = spec();
        let g = Metric::flat(&s);
        let tau = ScalarField::zeros(&s);
        let sigma = SymTensor2::zeros(&s);
        let w = OneForm::zeros(&s);
        let init = ScalarField::constant(&s, 1.7);
        let (phi, info) = solve_lichnerowicz(
            &g,
            &tau,
            &sigma,
            &w,
            &VarphiRule::One,
            &init,
            &NewtonConfig::default(),
        )
        .unwrap();
        assert_eq!(info.iterations, 0);
        assert_eq!(phi, init);
    }

    #[test]
    fn zero_tau_nonzero_sigma_has_no_solution() {
        let s = spec();
        let g = Metric::flat(&s);
        let tau = ScalarField::zeros(&s);
        let sigma = SymTensor2::from_constant_matrix(
            &s,
            &[2.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0],
        );
        let w = OneForm::zeros(&s);
        let init = ScalarField::constant(&s, 1.0);
        match solve_lichnerowicz(
            &g,
            &tau,
            &sigma,
            &w,
            &VarphiRule::One,
            &init,
            &NewtonConfig::default(),
        ) {
            Err(Error::NoPositiveSolution(_)) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn near_cmc_smooth_solve_converges() {
        let s = spec();
        let g = Metric::flat(&s);
        let tau = ScalarField::from_fn(&s, |x| 0.5 * (1.0 + 0.05 * x[0].sin()));
        let sigma = SymTensor2::from_constant_matrix(
            &s,
            &[0.2, 0.0, 0.0, 0.0, -0.1, 0.0, 0.0, 0.0, -0.1],
        );
        let w = OneForm::zeros(&s);
        let init = ScalarField::constant(&s, 1.0);
        let (phi, info) = solve_lichnerowicz(
            &g,
            &tau,
            &sigma,
            &w,
            &VarphiRule::Phi,
            &init,
            &NewtonConfig::default(),
        )
        .unwrap();
        assert!(info.rel_residual <= 1e-10);
        assert!(phi.min_value() > 0.5 && phi.max_value() < 1.5);
        // residuals contract fast once in the basin
        assert!(info.iterations <= 12, "took {}", info.iterations);
    }
}
