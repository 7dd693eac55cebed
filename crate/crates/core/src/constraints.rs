//! Assembly of candidate initial data from each parameterization and
//! evaluation of the constraint residuals — the ground truth for every
//! solver. Curvature and divergence here go through the generic geometry
//! path so the check stays independent of the solvers' own operators.

use crate::calculus::{
    conformal_killing_op, divergence, gradient, inner_t2, integrate, l2_norm_oneform,
    l2_norm_scalar, trace,
};
use crate::conformal::conformal_transform;
use crate::error::{Error, Result};
use crate::field::{OneForm, ScalarField, SymTensor2};
use crate::metric::Metric;

/// A candidate vacuum data set `(ghat, Khat)`.
#[derive(Debug)]
pub struct InitialData {
    pub metric: Metric,
    pub second_fundamental: SymTensor2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualNorms {
    pub l2: f64,
    pub sup: f64,
}

/// Shared assembler: `ghat = phi^{N-2} g`,
/// `Khat = (tau/n) ghat + phi^{-2} (sigma + scale_n * L_g W)`.
pub fn assemble_scaled(
    g: &Metric,
    phi: &ScalarField,
    w: &OneForm,
    sigma: &SymTensor2,
    tau: &ScalarField,
    scale_n: &ScalarField,
) -> Result<InitialData> {
    phi.check_positive("conformal factor phi")?;
    let n = g.spec().n() as f64;
    let ghat = conformal_transform(g, phi)?;
    let mut long = conformal_killing_op(g, w).mul_scalar(scale_n);
    long.axpy(1.0, sigma);
    let mut k = long.mul_scalar(&phi.powf(-2.0)?);
    let tr = tau.scaled(1.0 / n);
    k.axpy(1.0, &ghat.components().mul_scalar(&tr));
    Ok(InitialData {
        metric: ghat,
        second_fundamental: k,
    })
}

/// Classical conformal-TT parameterization:
/// `Khat = (tau/n) ghat + phi^{-2} (sigma + L_g W)`.
pub fn assemble_a(
    g: &Metric,
    phi: &ScalarField,
    w: &OneForm,
    sigma: &SymTensor2,
    tau: &ScalarField,
) -> Result<InitialData> {
    let one = ScalarField::constant(g.spec(), 1.0);
    assemble_scaled(g, phi, w, sigma, tau, &one)
}

/// Physical-TT parameterization:
/// `Khat = (tau/n) ghat + phi^{-2} (sigma + phi^N L_g W)`.
pub fn assemble_b(
    g: &Metric,
    phi: &ScalarField,
    w: &OneForm,
    sigma: &SymTensor2,
    tau: &ScalarField,
) -> Result<InitialData> {
    let pn = phi.powf(g.spec().critical_exponent())?;
    assemble_scaled(g, phi, w, sigma, tau, &pn)
}

/// Split-source parameterization:
/// `Khat = [ (tau/n) ghat + ] phi^{-2} (sigma0 + phi^N L_g X)`.
///
/// The mean-curvature trace term is optional; without it, `Tr Khat` is zero
/// rather than `tau`, which the trace test below exhibits.
pub fn assemble_p3(
    g: &Metric,
    phi: &ScalarField,
    x: &OneForm,
    sigma0: &SymTensor2,
    tau: &ScalarField,
    include_trace_term: bool,
) -> Result<InitialData> {
    let tr_rel = crate::operators::relative_trace(g, sigma0);
    if tr_rel > 1e-8 {
        return Err(Error::TraceViolation {
            trace_rel: tr_rel,
            tol: 1e-8,
        });
    }
    let pn = phi.powf(g.spec().critical_exponent())?;
    let tau_eff = if include_trace_term {
        tau.clone()
    } else {
        ScalarField::zeros(g.spec())
    };
    assemble_scaled(g, phi, x, sigma0, &tau_eff, &pn)
}

/// Hamiltonian and momentum residuals
/// `H = R - |K|^2 + (Tr K)^2`, `M = div K + d(Tr K)`.
pub fn constraint_residual(data: &InitialData) -> (ScalarField, OneForm) {
    let g = &data.metric;
    let k = &data.second_fundamental;
    let tr = trace(g, k);
    let mut h = g.scalar_curvature().clone();
    h.axpy(-1.0, &inner_t2(g, k, k));
    h.axpy(1.0, &tr.mul(&tr));
    let mut m = divergence(g, k);
    m.axpy(1.0, &gradient(&tr));
    (h, m)
}

/// Residual fields plus their `L^2(dmu_ghat)` and sup norms.
pub fn residual_norms(data: &InitialData) -> (ResidualNorms, ResidualNorms) {
    let (h, m) = constraint_residual(data);
    (
        ResidualNorms {
            l2: l2_norm_scalar(&data.metric, &h),
            sup: h.sup_norm(),
        },
        ResidualNorms {
            l2: l2_norm_oneform(&data.metric, &m),
            sup: m.sup_norm(),
        },
    )
}

/// The split residuals of the decomposed constraint system:
/// `(R - |sigma_hat + L W_hat|^2 - ((1-n)/n) tau^2,
///   div (L W_hat) - ((1-n)/n) d tau,
///   div sigma_hat)`, everything taken with respect to `ghat`.
pub fn constraint_residual_split(
    ghat: &Metric,
    sigma_hat: &SymTensor2,
    w_hat: &OneForm,
    tau: &ScalarField,
) -> (ScalarField, OneForm, OneForm) {
    let n = ghat.spec().n() as f64;
    let c = (1.0 - n) / n;
    let lw = conformal_killing_op(ghat, w_hat);
    let mut k = sigma_hat.clone();
    k.axpy(1.0, &lw);
    let mut r1 = ghat.scalar_curvature().clone();
    r1.axpy(-1.0, &inner_t2(ghat, &k, &k));
    r1.axpy(-c, &tau.mul(tau));
    let mut r2 = divergence(ghat, &lw);
    r2.axpy(-c, &gradient(tau));
    let r3 = divergence(ghat, sigma_hat);
    (r1, r2, r3)
}

/// Mean over the grid of `|sigma|^2_g`, used to seed constant initial
/// guesses.
pub fn mean_momentum_density(g: &Metric, sigma: &SymTensor2) -> f64 {
    let f = inner_t2(g, sigma, sigma);
    integrate(g, &f) / integrate(g, &ScalarField::constant(g.spec(), 1.0))
}
