//! Conjugate gradients in a caller-supplied inner product, with optional
//! deflation and Jacobi-style preconditioning.

use crate::error::{Error, Result};
use crate::field::{OneForm, ScalarField};

/// Minimal vector-space interface for the Krylov loop.
pub trait KrylovVector: Clone {
    fn axpy_v(&mut self, a: f64, x: &Self);
    fn scale_v(&mut self, a: f64);
    fn zero_like(&self) -> Self;
}

impl KrylovVector for ScalarField {
    fn axpy_v(&mut self, a: f64, x: &Self) {
        self.axpy(a, x);
    }
    fn scale_v(&mut self, a: f64) {
        self.scale(a);
    }
    fn zero_like(&self) -> Self {
        ScalarField::zeros(self.spec())
    }
}

impl KrylovVector for OneForm {
    fn axpy_v(&mut self, a: f64, x: &Self) {
        self.axpy(a, x);
    }
    fn scale_v(&mut self, a: f64) {
        self.scale(a);
    }
    fn zero_like(&self) -> Self {
        OneForm::zeros(self.spec())
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub iterations: usize,
    pub rel_residual: f64,
}

pub struct CgOptions<'a, V> {
    pub tol: f64,
    pub max_iter: usize,
    /// Applied to the right-hand side, the initial residual, and every
    /// iterate; used to keep the solve inside a deflation subspace.
    #[allow(clippy::type_complexity)]
    pub constrain: Option<Box<dyn Fn(&mut V) + 'a>>,
    /// Pointwise SPD preconditioner application `z = M^{-1} r`.
    #[allow(clippy::type_complexity)]
    pub precondition: Option<Box<dyn Fn(&V) -> V + 'a>>,
    pub x0: Option<V>,
    /// Return the best iterate instead of an error on stagnation or
    /// iteration exhaustion (used by the eigenvalue scan).
    pub lenient: bool,
}

impl<'a, V> CgOptions<'a, V> {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        Self {
            tol,
            max_iter,
            constrain: None,
            precondition: None,
            x0: None,
            lenient: false,
        }
    }
}

/// Solve `A x = b` for a self-adjoint positive semi-definite `A` in the given
/// inner product. Returns the best iterate found.
///
/// Convergence is relative: `sqrt((r,r)) <= tol * sqrt((b,b))` after the
/// constraint map has been applied to `b`. Stagnation over a 50-iteration
/// window is reported as an error carrying the reached residual.
pub fn conjugate_gradient<V: KrylovVector>(
    apply: impl Fn(&V) -> V,
    inner: impl Fn(&V, &V) -> f64,
    b: &V,
    opts: &CgOptions<V>,
) -> Result<(V, CgOutcome)> {
    let mut rhs = b.clone();
    if let Some(c) = &opts.constrain {
        c(&mut rhs);
    }
    let b_norm = inner(&rhs, &rhs).max(0.0).sqrt();
    if b_norm == 0.0 {
        return Ok((
            b.zero_like(),
            CgOutcome {
                iterations: 0,
                rel_residual: 0.0,
            },
        ));
    }
    let mut x = match &opts.x0 {
        Some(v) => {
            let mut v = v.clone();
            if let Some(c) = &opts.constrain {
                c(&mut v);
            }
            v
        }
        None => b.zero_like(),
    };

    let mut r = rhs;
    if opts.x0.is_some() {
        let mut ax = apply(&x);
        if let Some(c) = &opts.constrain {
            c(&mut ax);
        }
        r.axpy_v(-1.0, &ax);
    }
    let mut z = match &opts.precondition {
        Some(m) => m(&r),
        None => r.clone(),
    };
    if let Some(c) = &opts.constrain {
        c(&mut z);
    }
    let mut p = z.clone();
    let mut rz = inner(&r, &z);

    let mut best = x.clone();
    let mut best_res = inner(&r, &r).max(0.0).sqrt() / b_norm;
    let mut last_improved = 0usize;
    if best_res <= opts.tol {
        return Ok((
            x,
            CgOutcome {
                iterations: 0,
                rel_residual: best_res,
            },
        ));
    }

    for it in 0..opts.max_iter {
        let mut ap = apply(&p);
        if let Some(c) = &opts.constrain {
            c(&mut ap);
        }
        let pap = inner(&p, &ap);
        if !(pap > 0.0) || !pap.is_finite() {
            if opts.lenient {
                return Ok((
                    best,
                    CgOutcome {
                        iterations: it,
                        rel_residual: best_res,
                    },
                ));
            }
            // operator left the positive cone; report what we reached
            return Err(Error::CgStagnation {
                iterations: it,
                rel_residual: best_res,
            });
        }
        let alpha = rz / pap;
        x.axpy_v(alpha, &p);
        r.axpy_v(-alpha, &ap);
        if let Some(c) = &opts.constrain {
            c(&mut x);
            c(&mut r);
        }
        let res = inner(&r, &r).max(0.0).sqrt() / b_norm;
        if res < best_res {
            best_res = res;
            best = x.clone();
            last_improved = it;
        }
        if res <= opts.tol {
            return Ok((
                x,
                CgOutcome {
                    iterations: it + 1,
                    rel_residual: res,
                },
            ));
        }
        if it - last_improved > 50 {
            if opts.lenient {
                return Ok((
                    best,
                    CgOutcome {
                        iterations: it + 1,
                        rel_residual: best_res,
                    },
                ));
            }
            return Err(Error::CgStagnation {
                iterations: it + 1,
                rel_residual: best_res,
            });
        }
        z = match &opts.precondition {
            Some(m) => m(&r),
            None => r.clone(),
        };
        if let Some(c) = &opts.constrain {
            c(&mut z);
        }
        let rz_new = inner(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        let mut pn = z.clone();
        pn.axpy_v(beta, &p);
        p = pn;
    }
    if opts.lenient {
        return Ok((
            best,
            CgOutcome {
                iterations: opts.max_iter,
                rel_residual: best_res,
            },
        ));
    }
    Err(Error::CgNoConvergence {
        iterations: opts.max_iter,
        rel_residual: best_res,
    })
}

/// Default iteration cap, `10 sqrt(total unknowns)`.
pub fn default_max_iter(unknowns: usize) -> usize {
    (10.0 * (unknowns as f64).sqrt()).ceil() as usize
}
