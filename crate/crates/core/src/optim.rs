//! RMSProp and Adam over any [`ParamSet`], plus global-norm clipping.

use crate::error::{Error, Result};
use crate::model::ParamSet;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Algorithm {
    /// Plain RMSProp: `v ← ρv + (1-ρ)g²`, `θ ← θ - lr·g/(√v + ε)`. No momentum.
    RmsProp { decay: f64 },
    /// Bias-corrected Adam.
    Adam { beta1: f64, beta2: f64 },
}

#[derive(Clone, Debug)]
pub struct Optimizer {
    pub algo: Algorithm,
    pub lr: f64,
    pub eps: f64,
    step: u64,
    /// Squared-gradient EMA (RMSProp) or second moment (Adam), per tensor.
    second: Vec<Vec<f64>>,
    /// First moment, Adam only.
    first: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn rmsprop(lr: f64, decay: f64) -> Self {
        Self::new(Algorithm::RmsProp { decay }, lr)
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(Algorithm::Adam { beta1: 0.9, beta2: 0.999 }, lr)
    }

    pub fn new(algo: Algorithm, lr: f64) -> Self {
        Optimizer { algo, lr, eps: 1e-8, step: 0, second: Vec::new(), first: Vec::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    fn ensure_state<P: ParamSet>(&mut self, params: &P) -> Result<()> {
        let sizes: Vec<usize> = params.views().iter().map(|v| v.data.len()).collect();
        if self.second.is_empty() {
            self.second = sizes.iter().map(|&n| vec![0.0; n]).collect();
            if matches!(self.algo, Algorithm::Adam { .. }) {
                self.first = sizes.iter().map(|&n| vec![0.0; n]).collect();
            }
        } else if self.second.iter().map(Vec::len).ne(sizes.iter().copied()) {
            return Err(Error::shape("optimizer state does not match the parameter set"));
        }
        Ok(())
    }

    pub fn step<P: ParamSet>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let gv = grads.views();
        if gv.iter().map(|v| v.data.len()).ne(params.views().iter().map(|v| v.data.len())) {
            return Err(Error::shape("gradient set does not match the parameter set"));
        }
        self.ensure_state(params)?;
        self.step += 1;
        let (lr, eps) = (self.lr, self.eps);
        match self.algo {
            Algorithm::RmsProp { decay } => {
                for ((theta, g), v) in params.slices_mut().into_iter().zip(&gv).zip(self.second.iter_mut()) {
                    for ((p, &g), v) in theta.iter_mut().zip(g.data).zip(v.iter_mut()) {
                        *v = decay * *v + (1.0 - decay) * g * g;
                        *p -= lr * g / (v.sqrt() + eps);
                    }
                }
            }
            Algorithm::Adam { beta1, beta2 } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let it = params.slices_mut().into_iter().zip(&gv).zip(self.first.iter_mut().zip(self.second.iter_mut()));
                for ((theta, g), (m, v)) in it {
                    for (((p, &g), m), v) in theta.iter_mut().zip(g.data).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        let m_hat = *m / c1;
                        let v_hat = *v / c2;
                        *p -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

/// L2 norm of all gradient entries taken together.
pub fn global_grad_norm<P: ParamSet>(grads: &P) -> f64 {
    grads.views().iter().flat_map(|v| v.data.iter()).map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescales `grads` so their global norm is `max_norm`, only if it exceeds it.
/// Returns the norm before clipping.
pub fn clip_to<P: ParamSet>(grads: &mut P, max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "clip norm must be positive");
    let norm = global_grad_norm(grads);
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.slices_mut() {
            g.iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamView;

    #[derive(Clone, Debug, PartialEq)]
    struct Flat(Vec<Vec<f64>>);

    impl ParamSet for Flat {
        fn views(&self) -> Vec<ParamView<'_>> {
            self.0
                .iter()
                .enumerate()
                .map(|(i, v)| ParamView { name: format!("p{i}"), shape: vec![v.len()], data: v })
                .collect()
        }
        fn slices_mut(&mut self) -> Vec<&mut [f64]> {
            self.0.iter_mut().map(|v| v.as_mut_slice()).collect()
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        for mut opt in [Optimizer::rmsprop(1e-3, 0.9), Optimizer::adam(1e-3)] {
            let mut p = Flat(vec![vec![1.0, -2.0], vec![3.0]]);
            let g = p.zeros_like();
            opt.step(&mut p, &g).unwrap();
            assert_eq!(p, Flat(vec![vec![1.0, -2.0], vec![3.0]]));
        }
    }

    #[test]
    fn rmsprop_first_step() {
        let mut p = Flat(vec![vec![0.0]]);
        let mut opt = Optimizer::rmsprop(0.001, 0.9);
        opt.step(&mut p, &Flat(vec![vec![1.0]])).unwrap();
        let want = -0.001 * 1.0 / (0.1f64.sqrt() + 1e-8);
        assert!((p.0[0][0] - want).abs() < 1e-18);
    }

    #[test]
    fn rmsprop_step_tends_to_lr_under_constant_gradient() {
        let mut p = Flat(vec![vec![0.0, 0.0]]);
        let mut opt = Optimizer::rmsprop(0.001, 0.9);
        let g = Flat(vec![vec![3.0, -0.25]]);
        for _ in 0..500 {
            opt.step(&mut p, &g).unwrap();
        }
        let before = p.clone();
        opt.step(&mut p, &g).unwrap();
        assert!(((before.0[0][0] - p.0[0][0]) - 0.001).abs() < 1e-9);
        assert!(((p.0[0][1] - before.0[0][1]) - 0.001).abs() < 1e-9);
    }

    #[test]
    fn adam_first_step_is_lr() {
        let mut p = Flat(vec![vec![0.5, 0.5, 0.5]]);
        let mut opt = Optimizer::adam(0.001);
        opt.step(&mut p, &Flat(vec![vec![1.0, -4.0, 1e-3]])).unwrap();
        assert!((p.0[0][0] - (0.5 - 0.001)).abs() < 1e-10);
        assert!(p.0[0][1] > 0.5);
        assert!(p.0[0][2] < 0.5);
    }

    #[test]
    fn both_decrease_a_quadratic() {
        // L = (θ - 3)², from θ = 0.
        for mut opt in [Optimizer::rmsprop(0.01, 0.9), Optimizer::adam(0.01)] {
            let mut p = Flat(vec![vec![0.0]]);
            let mut prev = 9.0;
            for _ in 0..100 {
                let g = Flat(vec![vec![2.0 * (p.0[0][0] - 3.0)]]);
                opt.step(&mut p, &g).unwrap();
                let loss = (p.0[0][0] - 3.0).powi(2);
                assert!(loss < prev);
                prev = loss;
            }
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut opt = Optimizer::adam(0.1);
        let mut p = Flat(vec![vec![0.0, 1.0]]);
        assert!(opt.step(&mut p, &Flat(vec![vec![0.0]])).is_err());
        opt.step(&mut p, &Flat(vec![vec![0.0, 0.0]])).unwrap();
        let mut q = Flat(vec![vec![0.0, 1.0, 2.0]]);
        assert!(opt.step(&mut q, &Flat(vec![vec![0.0; 3]])).is_err());
    }

    #[test]
    fn clipping() {
        let mut g = Flat(vec![vec![3.0], vec![4.0]]);
        assert_eq!(global_grad_norm(&g), 5.0);
        clip_to(&mut g, 1.0);
        assert!((g.0[0][0] - 0.6).abs() < 1e-15 && (g.0[1][0] - 0.8).abs() < 1e-15);
        assert!((global_grad_norm(&g) - 1.0).abs() < 1e-12);

        let mut small = Flat(vec![vec![0.1, -0.2]]);
        let bits: Vec<u64> = small.0[0].iter().map(|x| x.to_bits()).collect();
        clip_to(&mut small, 1.0);
        assert_eq!(small.0[0].iter().map(|x| x.to_bits()).collect::<Vec<_>>(), bits);
    }
}
