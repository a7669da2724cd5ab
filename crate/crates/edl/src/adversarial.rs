//! Fast Gradient Sign Method attacks.
//!
//! White-box only: the gradient is taken through the attacked model's
//! own parameters, using the loss the model was trained with (the
//! evidential total loss with the regularizer fully annealed in, or
//! cross-entropy for the softmax baseline).

use crate::error::{Error, Result};
use crate::losses::{loss_grad_wrt_evidence, LossConfig};
use crate::network::{Head, NetworkParams};
use crate::numerics::Tensor;
use serde::{Deserialize, Serialize};

/// Which loss the input gradient is taken of.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientLoss {
    /// Evidential training loss with λ = 1 (fully annealed).
    Evidential(LossConfig),
    /// Cross-entropy, for softmax models.
    CrossEntropy,
}

/// Attack schedule: perturbation magnitudes in input units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub epsilons: Vec<f64>,
    pub loss_for_gradient: GradientLoss,
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::Config("empty epsilon list".into()));
        }
        for &e in &self.epsilons {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Config(format!("epsilon {e} outside [0,1]")));
            }
        }
        if self.epsilons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("epsilons must be strictly ascending".into()));
        }
        if let GradientLoss::Evidential(cfg) = &self.loss_for_gradient {
            cfg.validate()?;
        }
        Ok(())
    }
}

/// sign with sign(0) = 0, so untouched pixels stay untouched.
fn grad_sign(g: f64) -> f64 {
    if g > 0.0 {
        1.0
    } else if g < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Perturb a batch against the model: x' = clip(x + ε·sign(∂L/∂x), 0, 1).
///
/// `y` is one-hot. The loss kind must match the model head; mixing a
/// cross-entropy gradient with an evidence head (or vice versa) is a
/// config error, because only the model's own training loss is a
/// white-box attack.
pub fn fgsm(
    params: &NetworkParams,
    x: &Tensor,
    y: &Tensor,
    loss: &GradientLoss,
    epsilon: f64,
) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Domain(format!("epsilon {epsilon} outside [0,1]")));
    }
    let (n, d) = x.dims2();
    let (ny, k) = y.dims2();
    if ny != n || k != params.class_count() || d != params.input_dim() {
        return Err(Error::Shape(format!(
            "batch {n}×{d} with labels {ny}×{k} vs network {}→{}",
            params.input_dim(),
            params.class_count()
        )));
    }
    if x.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Domain("inputs must lie in [0,1]".into()));
    }

    let trace = params.forward(x.clone())?;
    let grad_output = match (loss, params.head()) {
        (GradientLoss::Evidential(cfg), Head::Evidence) => {
            // epoch index = anneal_epochs puts λ at exactly 1.
            loss_grad_wrt_evidence(cfg, &trace.output, y, cfg.anneal_epochs)?
        }
        (GradientLoss::CrossEntropy, Head::Softmax) => {
            let mut grad = Tensor::zeros(&[n, k]);
            let inv_n = 1.0 / n as f64;
            for i in 0..n {
                let p = trace.output.row(i);
                let yr = y.row(i);
                let g = grad.row_mut(i);
                for j in 0..k {
                    if yr[j] != 0.0 {
                        g[j] = -yr[j] / p[j].max(1e-300) * inv_n;
                    }
                }
            }
            grad
        }
        (l, h) => {
            return Err(Error::Config(format!(
                "gradient loss {l:?} does not match model head {h:?}"
            )))
        }
    };
    let (_, input_grads) = params.backward(&trace, &grad_output)?;
    input_grads.validate_finite("fgsm input gradient")?;

    let mut adv = x.clone();
    for (v, &g) in adv.data_mut().iter_mut().zip(input_grads.data()) {
        *v = (*v + epsilon * grad_sign(g)).clamp(0.0, 1.0);
    }
    Ok(adv)
}
