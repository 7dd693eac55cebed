use cforge_core::analytic::{FieldSampler, TrigPoly, Wave};
use cforge_core::calculus::*;
use cforge_core::conformal::*;
use cforge_core::field::OneForm;
use cforge_core::operators::*;
use cforge_core::*;

fn order3(e: &[f64; 3], h: &[f64; 3]) -> f64 {
    let n = 3.0;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..3 {
        let x = h[i].ln();
        let y = e[i].ln();
        sx += x; sy += y; sxx += x * x; sxy += x * y;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

// random field whose modes live on one axis only
fn axis_field(smp: &mut FieldSampler, axis: usize, off: f64, amp: f64) -> TrigPoly {
    let mut p = TrigPoly::constant(off);
    let a = amp * (2.0 * smp.uniform() - 1.0);
    let b = amp * (2.0 * smp.uniform() - 1.0);
    p.add(&TrigPoly::mode(axis, 1, a, 0.0, Wave::Sin));
    p.add(&TrigPoly::mode(axis, 1, b, 0.0, Wave::Cos));
    p
}

fn delta_cov_err(m: usize, seed: u64) -> f64 {
    let s = GridSpec::cube(3, m, 2.0 * std::f64::consts::PI).unwrap();
    let mut smp = FieldSampler::new(seed);
    let g = Metric::flat(&s);
    let nn = 6.0;
    let varphi = axis_field(&mut smp, 0, 1.0, 0.12).eval(&s);
    let gt = conformal_transform(&g, &varphi).unwrap();
    let w_of = OneForm::from_components(vec![
        axis_field(&mut smp, 1, 0.0, 0.3).eval(&s),
        axis_field(&mut smp, 2, 0.0, 0.3).eval(&s),
        axis_field(&mut smp, 1, 0.0, 0.3).eval(&s),
    ]);
    let phi = axis_field(&mut smp, 2, 1.0, 0.15).eval(&s);
    let phit = phi.apply_weight(&varphi, -1.0).unwrap();
    let wt = w_of.apply_weight(&varphi, nn - 2.0).unwrap();
    let lhs = WeightedVectorLaplacian::new(&gt, &phit).unwrap().apply(&wt);
    let rhs = WeightedVectorLaplacian::new(&g, &phi).unwrap().apply(&w_of);
    l2_norm_oneform(&g, &lhs.sub(&rhs))
}

fn main() {
    let hs = [
        2.0 * std::f64::consts::PI / 16.0,
        2.0 * std::f64::consts::PI / 24.0,
        2.0 * std::f64::consts::PI / 32.0,
    ];
    for seed in 0..6u64 {
        let mut e = [0.0; 3];
        for (i, m) in [16usize, 24, 32].iter().enumerate() {
            e[i] = delta_cov_err(*m, seed);
        }
        println!("seed {seed}: errs {:.3e} {:.3e} {:.3e} order {:.3}", e[0], e[1], e[2], order3(&e, &hs));
    }
}
