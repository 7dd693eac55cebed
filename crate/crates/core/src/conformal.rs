//! Conformal rescaling of metrics and fields.

use crate::error::Result;
use crate::field::{OneForm, ScalarField, SymTensor2};
use crate::metric::Metric;

/// Exponent triple `(a, b, c)` of a conformally covariant operator: with
/// `gt = varphi^c g`, the operator satisfies
/// `varphi^b P_gt(varphi^a e) = P_g(e)` slot by slot.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceWeights {
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    pub metric: f64,
}

impl CovarianceWeights {
    pub fn new(input: Vec<f64>, output: Vec<f64>, metric: f64) -> Self {
        Self {
            input,
            output,
            metric,
        }
    }
}

/// `gt = varphi^{N-2} g`; all derived data recomputed for the new metric.
pub fn conformal_transform(g: &Metric, varphi: &ScalarField) -> Result<Metric> {
    varphi.check_positive("conformal factor")?;
    let e = g.spec().critical_exponent() - 2.0;
    let scale = varphi.powf(e)?;
    Metric::new(g.components().mul_scalar(&scale))
}

/// Pointwise conformal weighting `varphi^a * field`.
pub trait ApplyWeight: Sized {
    fn apply_weight(&self, varphi: &ScalarField, a: f64) -> Result<Self>;
}

impl ApplyWeight for ScalarField {
    fn apply_weight(&self, varphi: &ScalarField, a: f64) -> Result<Self> {
        if a == 0.0 {
            return Ok(self.clone());
        }
        Ok(self.mul(&varphi.powf(a)?))
    }
}

impl ApplyWeight for OneForm {
    fn apply_weight(&self, varphi: &ScalarField, a: f64) -> Result<Self> {
        if a == 0.0 {
            return Ok(self.clone());
        }
        Ok(self.mul_scalar(&varphi.powf(a)?))
    }
}

impl ApplyWeight for SymTensor2 {
    fn apply_weight(&self, varphi: &ScalarField, a: f64) -> Result<Self> {
        if a == 0.0 {
            return Ok(self.clone());
        }
        Ok(self.mul_scalar(&varphi.powf(a)?))
    }
}
