use super::{Gradient, Mlp};
use crate::{Error, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl Adam {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }

    /// One update of `net` in place. Rejects non-finite gradients without
    /// touching the network or the moments.
    pub fn step(&self, net: &mut Mlp, grad: &Gradient, state: &mut AdamState) -> Result<()> {
        if !grad.is_congruent(net) || !state.m.is_congruent(net) {
            return Err(Error::invalid("gradient or optimizer state does not match the network"));
        }
        if !grad.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        state.t += 1;
        let t = state.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (l, layer) in net.layers_mut().iter_mut().enumerate() {
            let params = [(&mut layer.weights, 0usize), (&mut layer.biases, 1usize)];
            for (p, kind) in params {
                let (g, m, v) = if kind == 0 {
                    (&grad.weights[l], &mut state.m.weights[l], &mut state.v.weights[l])
                } else {
                    (&grad.biases[l], &mut state.m.biases[l], &mut state.v.biases[l])
                };
                for i in 0..p.len() {
                    m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                    v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                }
            }
        }
        Ok(())
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Gradient,
    pub v: Gradient,
    pub t: u64,
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        Self { m: Gradient::zeros_like(net), v: Gradient::zeros_like(net), t: 0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::{Layer, MlpSpec};

    fn scalar_net(w: f64) -> Mlp {
        Mlp::from_layers(vec![Layer { n_in: 1, n_out: 1, weights: vec![w], biases: vec![0.0] }]).unwrap()
    }

    fn scalar_grad(g: f64) -> Gradient {
        Gradient { weights: vec![vec![g]], biases: vec![vec![0.0]] }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut rng = crate::rng_from_seed(2);
        let mut net = Mlp::new(MlpSpec::critic(), &mut rng).unwrap();
        let before = net.clone();
        let mut st = AdamState::new(&net);
        Adam::default().step(&mut net, &Gradient::zeros_like(&before), &mut st).unwrap();
        assert_eq!(net, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn unit_gradient_step() {
        let mut net = scalar_net(0.5);
        let mut st = AdamState::new(&net);
        Adam::with_lr(1e-3).step(&mut net, &scalar_grad(1.0), &mut st).unwrap();
        // m̂ = 1, v̂ = 1 → Δ = lr / (1 + eps).
        let expected = 0.5 - 1e-3 / (1.0 + 1e-8);
        assert!((net.layers()[0].weights[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn two_steps_match_reference() {
        let (lr, b1, b2, eps) = (1e-3, 0.9, 0.999, 1e-8);
        let grads = [0.3, -1.7];
        let (mut p, mut m, mut v) = (0.25f64, 0.0f64, 0.0f64);
        for (t, g) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            p -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        }
        let mut net = scalar_net(0.25);
        let mut st = AdamState::new(&net);
        for g in grads {
            Adam::with_lr(lr).step(&mut net, &scalar_grad(g), &mut st).unwrap();
        }
        assert!((net.layers()[0].weights[0] - p).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut net = scalar_net(0.5);
        let mut st = AdamState::new(&net);
        let err = Adam::default().step(&mut net, &scalar_grad(f64::NAN), &mut st);
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!(st.t, 0);
        assert_eq!(net.layers()[0].weights[0], 0.5);
    }
}
