//! Coupled fixed-point drivers for the conformal-method systems and the
//! parameterization-matching converter.
//!
//! All four pipelines share one Picard loop: solve the vector equation with
//! the scale frozen at the current scalar iterate, refresh the momentum
//! density, solve the scalar equation, relax, repeat. The classical pipeline
//! is literally the general one with the unit scale rule.

use std::time::Instant;

use crate::calculus::{conformal_killing_op, divergence, gradient, integrate, l2_norm_oneform, l2_norm_t2, tensor_norm};
use crate::constraints::{
    assemble_p3, assemble_scaled, mean_momentum_density, residual_norms, InitialData,
};
use crate::error::{Error, Result};
use crate::field::{OneForm, ScalarField, SymTensor2};
use crate::grid::GridSpec;
use crate::lichnerowicz::{constant_root, solve_lichnerowicz, NewtonConfig};
use crate::metric::Metric;
use crate::operators::{adjoint_divergence, relative_trace, WeightedVectorLaplacian};
use crate::york::{kernel_basis, solve_vector_from, york_decompose, SolveMode};

/// Named positive profile for the generalized scale rules.
#[derive(Debug, Clone, PartialEq)]
pub enum PositiveFn {
    /// `F(s) = a + b s`, `a > 0`, `b >= 0`.
    Affine { a: f64, b: f64 },
    /// `F(s) = exp(-(s/width)^2)`, `width > 0`.
    Gaussian { width: f64 },
}

impl PositiveFn {
    pub fn validate(&self) -> Result<()> {
        match self {
            PositiveFn::Affine { a, b } => {
                if !(*a > 0.0) || *b < 0.0 {
                    return Err(Error::RuleEvaluation(format!(
                        "affine profile needs a > 0, b >= 0 (got a={a}, b={b})"
                    )));
                }
            }
            PositiveFn::Gaussian { width } => {
                if !(*width > 0.0) {
                    return Err(Error::RuleEvaluation(format!(
                        "gaussian profile needs width > 0 (got {width})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            PositiveFn::Affine { a, b } => a + b * s,
            PositiveFn::Gaussian { width } => (-(s / width) * (s / width)).exp(),
        }
    }

    pub fn eval_field(&self, s: &ScalarField) -> ScalarField {
        let mut out = s.clone();
        for v in out.data_mut() {
            *v = self.eval(*v);
        }
        out
    }
}

/// Choice of the longitudinal scale `varphi` in the generalized
/// parameterization `Khat = (tau/n) ghat + phi^{-2}(sigma + varphi^N L W)`.
#[derive(Debug, Clone)]
pub enum VarphiRule {
    /// `varphi = 1`: the classical conformal-TT pipeline.
    One,
    /// `varphi = phi`: the physical-TT pipeline.
    Phi,
    /// A fixed positive field (conformal thin-sandwich style).
    Fixed(ScalarField),
    /// `varphi^N = c F(|L W|_g)^2 phi^N`.
    FScaled { f: PositiveFn, c: f64 },
}

impl VarphiRule {
    pub fn validate(&self) -> Result<()> {
        match self {
            VarphiRule::One | VarphiRule::Phi => Ok(()),
            VarphiRule::Fixed(v) => v
                .check_positive("fixed scale rule field")
                .map_err(|e| Error::RuleEvaluation(e.to_string())),
            VarphiRule::FScaled { f, c } => {
                f.validate()?;
                if !(*c > 0.0) {
                    return Err(Error::RuleEvaluation(format!(
                        "f-scaled rule needs c > 0 (got {c})"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            VarphiRule::One => "one".into(),
            VarphiRule::Phi => "phi".into(),
            VarphiRule::Fixed(_) => "fixed".into(),
            VarphiRule::FScaled { .. } => "f_scaled".into(),
        }
    }

    /// The field `varphi^N` entering the vector step, with the scalar iterate
    /// frozen at `psi` and the previous vector iterate supplying `|L W|`.
    fn scale_n(
        &self,
        g: &Metric,
        psi: &ScalarField,
        w_prev: &OneForm,
    ) -> Result<ScalarField> {
        let nn = g.spec().critical_exponent();
        match self {
            VarphiRule::One => Ok(ScalarField::constant(g.spec(), 1.0)),
            VarphiRule::Phi => psi.powf(nn),
            VarphiRule::Fixed(v) => v.powf(nn),
            VarphiRule::FScaled { f, c } => {
                let lw = tensor_norm(g, &conformal_killing_op(g, w_prev));
                let fv = f.eval_field(&lw);
                let u = fv.mul(&fv).scaled(*c);
                u.check_positive("f-scaled rule factor")
                    .map_err(|e| Error::RuleEvaluation(e.to_string()))?;
                Ok(u.mul(&psi.powf(nn)?))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub outer_tol: f64,
    pub cg_tol: f64,
    pub newton_tol: f64,
    pub kernel_tol: f64,
    pub mode: SolveMode,
    /// Under-relaxation weight in `(0, 1]`.
    pub theta: f64,
    pub max_outer: usize,
    pub max_newton: usize,
    /// Include the mean-curvature trace term in the split-source assembler.
    pub trace_term: bool,
    /// Enable the diagonal-weight preconditioner in vector solves.
    pub precondition: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            outer_tol: 1e-8,
            cg_tol: 1e-10,
            newton_tol: 1e-10,
            kernel_tol: 1e-8,
            mode: SolveMode::Projected,
            theta: 1.0,
            max_outer: 200,
            max_newton: 50,
            trace_term: true,
            precondition: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    pub lich_res: f64,
    pub vec_res: f64,
    pub dphi_rel: f64,
    pub ham_l2: f64,
    pub mom_l2: f64,
    /// Weighted norm of the kernel component projected off the vector
    /// right-hand side this iteration.
    pub projection: f64,
}

#[derive(Debug)]
pub struct SolveReport {
    pub method: String,
    pub outer_iterations: usize,
    pub history: Vec<IterationRecord>,
    pub phi: ScalarField,
    /// The vector unknown (`W`, or `X` for the split-source system).
    pub vector: OneForm,
    pub data: InitialData,
    pub ham_l2: f64,
    pub ham_sup: f64,
    pub mom_l2: f64,
    pub mom_sup: f64,
    pub wall_seconds: f64,
    pub non_monotone: bool,
    pub trivial_family: bool,
    /// Relative trace and scaled divergence of the supplied source tensor.
    pub tt_trace_rel: f64,
    pub tt_div_rel: f64,
}

enum MethodKind<'a> {
    General(&'a VarphiRule),
    WeightedB,
    SplitSource,
}

/// Classical conformal-TT pipeline; identical to [`solve_general`] with the
/// unit rule.
pub fn solve_method_a(
    g: &Metric,
    sigma_tt: &SymTensor2,
    tau: &ScalarField,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    drive(g, sigma_tt, tau, MethodKind::General(&VarphiRule::One), cfg, "a")
}

/// Physical-TT pipeline with the weighted vector Laplacian rebuilt each
/// outer iteration.
pub fn solve_method_b(
    g: &Metric,
    sigma_tt: &SymTensor2,
    tau: &ScalarField,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    drive(g, sigma_tt, tau, MethodKind::WeightedB, cfg, "b")
}

/// Split-source pipeline: the source tensor need only be trace-free; its
/// divergence is absorbed by the vector unknown.
pub fn solve_s3(
    g: &Metric,
    sigma0_tracefree: &SymTensor2,
    tau: &ScalarField,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    drive(g, sigma0_tracefree, tau, MethodKind::SplitSource, cfg, "s3")
}

/// Generalized pipeline parameterized by the scale rule.
pub fn solve_general(
    g: &Metric,
    sigma_tt: &SymTensor2,
    tau: &ScalarField,
    rule: &VarphiRule,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    rule.validate()?;
    let label = format!("general({})", rule.label());
    drive(g, sigma_tt, tau, MethodKind::General(rule), cfg, &label)
}

fn drive(
    g: &Metric,
    sigma: &SymTensor2,
    tau: &ScalarField,
    kind: MethodKind,
    cfg: &SolveConfig,
    label: &str,
) -> Result<SolveReport> {
    let t0 = Instant::now();
    let spec: &GridSpec = g.spec();
    let n = spec.n() as f64;
    let nn = spec.critical_exponent();
    let c = (1.0 - n) / n;

    let tt_trace_rel = relative_trace(g, sigma);
    if tt_trace_rel > 1e-8 {
        return Err(Error::TraceViolation {
            trace_rel: tt_trace_rel,
            tol: 1e-8,
        });
    }
    // transversality is a soft check: exact for constant sources on flat
    // grids, second-order for conformally transformed ones
    let sig_l2 = l2_norm_t2(g, sigma).max(1e-300);
    let len_scale = spec.lengths().iter().cloned().fold(0.0, f64::max)
        / (2.0 * std::f64::consts::PI);
    let tt_div_rel = match kind {
        MethodKind::SplitSource => 0.0,
        _ => l2_norm_oneform(g, &divergence(g, sigma)) * len_scale / sig_l2,
    };
    if !matches!(kind, MethodKind::SplitSource) && tt_div_rel > 0.5 {
        return Err(Error::TraceViolation {
            trace_rel: tt_div_rel,
            tol: 0.5,
        });
    }

    let kb = kernel_basis(g, cfg.kernel_tol)?;
    let trivial_family = tau.sup_norm() == 0.0 && sigma.sup_norm() == 0.0;

    let vol = integrate(g, &ScalarField::constant(spec, 1.0));
    let s2_mean = mean_momentum_density(g, sigma);
    let t2_mean = integrate(g, &tau.mul(tau)) / vol;
    let phi0 = constant_root(spec.n(), s2_mean, t2_mean).unwrap_or(1.0);
    let mut psi = ScalarField::constant(spec, phi0);
    let mut w = OneForm::zeros(spec);
    let dtau = gradient(tau);

    let newton_cfg = NewtonConfig {
        tol: cfg.newton_tol,
        cg_tol: cfg.cg_tol,
        max_iterations: cfg.max_newton,
    };
    let phi_rule = VarphiRule::Phi;

    let mut history: Vec<IterationRecord> = Vec::new();
    let mut last_data: Option<InitialData> = None;
    let mut converged = false;
    let mut last_change = f64::INFINITY;

    for it in 1..=cfg.max_outer {
        // vector step with the scalar iterate frozen
        let (w_new, vinfo) = match &kind {
            MethodKind::General(rule) => {
                let scale_n = rule.scale_n(g, &psi, &w)?;
                let op = WeightedVectorLaplacian::scaled_n(g, &scale_n)?;
                let rhs = dtau.mul_scalar(&psi.powf(nn)?).scaled(c);
                solve_vector_from(
                    &op,
                    &rhs,
                    &kb,
                    cfg.mode,
                    cfg.cg_tol,
                    Some(w.clone()),
                    cfg.precondition,
                )?
            }
            MethodKind::WeightedB => {
                let op = WeightedVectorLaplacian::new(g, &psi)?;
                let rhs = dtau.scaled(c);
                solve_vector_from(
                    &op,
                    &rhs,
                    &kb,
                    cfg.mode,
                    cfg.cg_tol,
                    Some(w.clone()),
                    cfg.precondition,
                )?
            }
            MethodKind::SplitSource => {
                let op = WeightedVectorLaplacian::new(g, &psi)?;
                let mut rhs = dtau.scaled(c);
                let div0 = adjoint_divergence(g, sigma);
                rhs.axpy(-1.0, &div0.mul_scalar(&psi.powf(-nn)?));
                solve_vector_from(
                    &op,
                    &rhs,
                    &kb,
                    cfg.mode,
                    cfg.cg_tol,
                    Some(w.clone()),
                    cfg.precondition,
                )?
            }
        };
        w = w_new;

        // scalar step with the refreshed momentum density
        let scale_rule: &VarphiRule = match &kind {
            MethodKind::General(rule) => rule,
            MethodKind::WeightedB | MethodKind::SplitSource => &phi_rule,
        };
        let (phi_next, ninfo) = solve_lichnerowicz(g, tau, sigma, &w, scale_rule, &psi, &newton_cfg)?;

        let dphi = phi_next.sub(&psi).sup_norm() / psi.sup_norm().max(1e-300);
        let mut psi_next = psi.clone();
        psi_next.axpy(cfg.theta, &phi_next.sub(&psi));

        let data = match &kind {
            MethodKind::General(rule) => {
                let scale_n = rule.scale_n(g, &psi_next, &w)?;
                assemble_scaled(g, &psi_next, &w, sigma, tau, &scale_n)?
            }
            MethodKind::WeightedB => {
                let pn = psi_next.powf(nn)?;
                assemble_scaled(g, &psi_next, &w, sigma, tau, &pn)?
            }
            MethodKind::SplitSource => {
                assemble_p3(g, &psi_next, &w, sigma, tau, cfg.trace_term)?
            }
        };
        let (hn, mn) = residual_norms(&data);
        history.push(IterationRecord {
            iter: it,
            lich_res: ninfo.rel_residual,
            vec_res: vinfo.rel_residual,
            dphi_rel: dphi,
            ham_l2: hn.l2,
            mom_l2: mn.l2,
            projection: vinfo.projection_magnitude,
        });
        last_data = Some(data);
        psi = psi_next;
        last_change = dphi;
        if dphi <= cfg.outer_tol {
            converged = true;
            break;
        }
    }

    if !converged {
        return Err(Error::OuterNoConvergence {
            iterations: cfg.max_outer,
            last_change,
        });
    }

    let data = last_data.expect("at least one iteration ran");
    let (hn, mn) = residual_norms(&data);
    let non_monotone = history
        .windows(2)
        .skip(1)
        .any(|w| w[1].dphi_rel > 1.2 * w[0].dphi_rel.max(1e-14));
    Ok(SolveReport {
        method: label.to_string(),
        outer_iterations: history.len(),
        history,
        phi: psi,
        vector: w,
        data,
        ham_l2: hn.l2,
        ham_sup: hn.sup,
        mom_l2: mn.l2,
        mom_sup: mn.sup,
        wall_seconds: t0.elapsed().as_secs_f64(),
        non_monotone,
        trivial_family,
        tt_trace_rel,
        tt_div_rel,
    })
}

/// Convert a longitudinal part between parameterizations: the transverse
/// split of `varphi^N L_g W` as `sigma' + L_g V`. Re-assembling through the
/// classical parameterization with `(V, sigma + sigma')` reproduces the same
/// data the scaled parameterization built from `(W, sigma)`.
pub fn match_parameterizations(
    g: &Metric,
    _phi: &ScalarField,
    w: &OneForm,
    varphi: &ScalarField,
    tol: f64,
) -> Result<(SymTensor2, OneForm)> {
    varphi.check_positive("matching scale varphi")?;
    let vn = varphi.powf(g.spec().critical_exponent())?;
    let target = conformal_killing_op(g, w).mul_scalar(&vn);
    york_decompose(g, &target, tol)
}
