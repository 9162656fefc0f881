use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::network::{Gradients, Network};
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
}

impl OptimConfig {
    pub fn adam(learning_rate: f64, batch_size: usize) -> Self {
        Self {
            algorithm: Algorithm::Adam,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size,
        }
    }

    pub fn sgd(learning_rate: f64, batch_size: usize) -> Self {
        Self { algorithm: Algorithm::Sgd, learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, batch_size }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Numeric("learning rate must be > 0".into()));
        }
        if !(0.0 < self.beta1 && self.beta1 < 1.0 && 0.0 < self.beta2 && self.beta2 < 1.0) {
            return Err(Error::Numeric("betas must lie in (0,1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Numeric("epsilon must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Numeric("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// SGD / Adam update state over a network's parameter tensors.
pub struct Optimizer {
    config: OptimConfig,
    step: u64,
    first_moment: Vec<Vec<Tensor>>,
    second_moment: Vec<Vec<Tensor>>,
}

impl Optimizer {
    pub fn new(config: OptimConfig, net: &Network) -> Result<Self> {
        config.validate()?;
        let zeros = || -> Vec<Vec<Tensor>> {
            net.params()
                .iter()
                .map(|ts| ts.iter().map(|t| Tensor::zeros(t.shape.clone())).collect())
                .collect()
        };
        Ok(Self { config, step: 0, first_moment: zeros(), second_moment: zeros() })
    }

    /// Apply one update in place. Rejects non-finite gradients.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        for ts in &grads.0 {
            for t in ts {
                if !t.all_finite() {
                    return Err(Error::Numeric("non-finite gradient".into()));
                }
            }
        }
        self.step += 1;
        let lr = self.config.learning_rate;
        match self.config.algorithm {
            Algorithm::Sgd => {
                for (pts, gts) in net.params_mut().iter_mut().zip(&grads.0) {
                    for (p, g) in pts.iter_mut().zip(gts) {
                        for (pv, gv) in p.data.iter_mut().zip(&g.data) {
                            *pv -= lr * gv;
                        }
                    }
                }
            }
            Algorithm::Adam => {
                let (b1, b2, eps) = (self.config.beta1, self.config.beta2, self.config.epsilon);
                let bias1 = 1.0 - b1.powi(self.step as i32);
                let bias2 = 1.0 - b2.powi(self.step as i32);
                for ((pts, gts), (mts, vts)) in net
                    .params_mut()
                    .iter_mut()
                    .zip(&grads.0)
                    .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
                {
                    for ((p, g), (m, v)) in pts.iter_mut().zip(gts).zip(mts.iter_mut().zip(vts.iter_mut())) {
                        for i in 0..p.data.len() {
                            let gv = g.data[i];
                            m.data[i] = b1 * m.data[i] + (1.0 - b1) * gv;
                            v.data[i] = b2 * v.data[i] + (1.0 - b2) * gv * gv;
                            let m_hat = m.data[i] / bias1;
                            let v_hat = v.data[i] / bias2;
                            p.data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::layer::{LayerSpec, NetworkSpec};
    use approx::assert_abs_diff_eq;

    fn scalar_net(theta: f64) -> Network {
        let spec = NetworkSpec::new(vec![1], vec![LayerSpec::Dense { input: 1, output: 1 }]);
        let mut net = Network::init(spec, 0).unwrap();
        net.params_mut()[0][0].data[0] = theta;
        net.params_mut()[0][1].data[0] = 0.0;
        net
    }

    fn grad_of(net: &Network, wg: f64) -> Gradients {
        let mut g = Gradients::zeros_like(net);
        g.0[0][0].data[0] = wg;
        g
    }

    #[test]
    fn sgd_scalar_step() {
        let mut net = scalar_net(0.0);
        let mut opt = Optimizer::new(OptimConfig::sgd(0.1, 1), &net).unwrap();
        opt.step(&mut net, &grad_of(&net, 1.0)).unwrap();
        assert_abs_diff_eq!(net.params()[0][0].data[0], -0.1, epsilon = 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_sgd_params_unchanged() {
        let mut net = scalar_net(0.7);
        let mut opt = Optimizer::new(OptimConfig::sgd(0.5, 1), &net).unwrap();
        opt.step(&mut net, &grad_of(&net, 0.0)).unwrap();
        assert_eq!(net.params()[0][0].data[0], 0.7);

        let mut net = scalar_net(0.7);
        let mut opt = Optimizer::new(OptimConfig::adam(0.5, 1), &net).unwrap();
        opt.step(&mut net, &grad_of(&net, 0.0)).unwrap();
        // adam with zero gradient moves at most lr * 0 / eps = 0
        assert_abs_diff_eq!(net.params()[0][0].data[0], 0.7, epsilon = 1e-12);
    }

    #[test]
    fn adam_first_step_is_learning_rate_sized() {
        // bias-corrected first step: |delta| = lr * |g| / (|g| + eps) ~ lr
        for &c in &[3.0, -0.001, 42.0] {
            let mut net = scalar_net(0.0);
            let mut opt = Optimizer::new(OptimConfig::adam(0.01, 1), &net).unwrap();
            opt.step(&mut net, &grad_of(&net, c)).unwrap();
            let delta = net.params()[0][0].data[0];
            assert_abs_diff_eq!(delta.abs(), 0.01, epsilon = 1e-5);
            assert_eq!(delta.signum(), -c.signum());
        }
    }

    #[test]
    fn non_finite_gradient_is_numeric_error() {
        let mut net = scalar_net(0.0);
        let mut opt = Optimizer::new(OptimConfig::sgd(0.1, 1), &net).unwrap();
        assert!(opt.step(&mut net, &grad_of(&net, f64::NAN)).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        let net = scalar_net(0.0);
        let mut bad = OptimConfig::adam(0.1, 1);
        bad.beta1 = 1.0;
        assert!(Optimizer::new(bad, &net).is_err());
        let mut bad = OptimConfig::adam(0.1, 1);
        bad.learning_rate = 0.0;
        assert!(Optimizer::new(bad, &net).is_err());
        let mut bad = OptimConfig::adam(0.1, 1);
        bad.batch_size = 0;
        assert!(Optimizer::new(bad, &net).is_err());
    }
}
