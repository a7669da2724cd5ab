//! Mini-batch training with Adam.
//!
//! The evidence head trains on an evidential loss (the gradient enters
//! the network through ∂L/∂evidence); the softmax head is the baseline
//! and trains on cross-entropy. Both heads take the same L2 decay on
//! weights. All randomness (init, shuffling) flows from the caller's
//! generator, so one seed reproduces a training run bit for bit.

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::losses::{annealing_coefficient, loss_grad_wrt_evidence, total_loss, LossBreakdown, LossConfig};
use crate::network::{Head, NetworkParams, ParamGrads};
use crate::numerics::{Rng, Tensor};
use crate::opinions::entropy_of_slice;
use serde::{Deserialize, Serialize};

/// Full training recipe. `seed` is what command-line runs record and
/// seed their generator from; `train` itself draws from the generator
/// it is handed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon_adam: f64,
    /// L2 coefficient on weights (never biases), both heads. For the
    /// evidence head this doubles as the revival force for samples the
    /// output ReLU has gated off: decay shrinks their logits' weight
    /// terms toward zero while the biases hold positive, so gated
    /// pre-activations drift back above zero and re-enter training.
    pub weight_decay: f64,
    pub seed: u64,
    pub loss: LossConfig,
    pub head: Head,
    pub hidden_sizes: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon_adam: 1e-8,
            weight_decay: 1e-4,
            seed: 0,
            loss: LossConfig::default(),
            head: Head::Evidence,
            hidden_sizes: vec![64, 64],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(Error::Config("epochs and batch_size must be ≥ 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("betas must lie in [0,1)".into()));
        }
        if !(self.epsilon_adam > 0.0) {
            return Err(Error::Config("epsilon_adam must be positive".into()));
        }
        if self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layers must be non-empty".into()));
        }
        self.loss.validate()
    }
}

/// One row per completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Mean uncertainty mass over the training pass (evidence head) or
    /// mean normalized entropy (softmax head, which has no u).
    pub mean_uncertainty: f64,
}

/// Caller-facing record of a run. Wall-clock time lives here (not in
/// any CSV), so measurement artifacts stay byte-identical across
/// reruns of the same seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochReport>,
    pub wall_clock_seconds: f64,
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, per parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m_w: Vec<Tensor>,
    v_w: Vec<Tensor>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &NetworkParams) -> Self {
        AdamState {
            m_w: params.weights().iter().map(|w| Tensor::zeros(w.shape())).collect(),
            v_w: params.weights().iter().map(|w| Tensor::zeros(w.shape())).collect(),
            m_b: params.biases().iter().map(|b| vec![0.0; b.len()]).collect(),
            v_b: params.biases().iter().map(|b| vec![0.0; b.len()]).collect(),
            step: 0,
        }
    }
}

fn adam_update(
    theta: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    hyper: &AdamHyper,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..theta.len() {
        let g = grad[i];
        m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
        v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        theta[i] -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon);
    }
}

/// One bias-corrected Adam step over every parameter.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &ParamGrads,
    state: &mut AdamState,
    hyper: &AdamHyper,
) -> Result<()> {
    if grads.weights.len() != params.layer_count() {
        return Err(Error::Shape(format!(
            "{} gradient layers vs {} parameter layers",
            grads.weights.len(),
            params.layer_count()
        )));
    }
    state.step += 1;
    let bc1 = 1.0 - hyper.beta1.powi(state.step as i32);
    let bc2 = 1.0 - hyper.beta2.powi(state.step as i32);
    for layer in 0..grads.weights.len() {
        if grads.weights[layer].shape() != params.weights()[layer].shape() {
            return Err(Error::Shape(format!(
                "weight gradient shape mismatch in layer {layer}"
            )));
        }
        adam_update(
            params.weights_mut()[layer].data_mut(),
            grads.weights[layer].data(),
            state.m_w[layer].data_mut(),
            state.v_w[layer].data_mut(),
            hyper,
            bc1,
            bc2,
        );
        adam_update(
            &mut params.biases_mut()[layer],
            &grads.biases[layer],
            &mut state.m_b[layer],
            &mut state.v_b[layer],
            hyper,
            bc1,
            bc2,
        );
    }
    Ok(())
}

/// Per-sample predictions: class probabilities plus, for the evidence
/// head, Dirichlet parameters and uncertainty mass.
#[derive(Debug, Clone)]
pub struct Prediction {
    /// Expected probabilities p̂ = α/S (evidence) or softmax rows.
    pub probs: Tensor,
    /// α = e + 1 rows; evidence head only.
    pub alpha: Option<Tensor>,
    /// u = K/S per sample; evidence head only.
    pub uncertainty: Option<Vec<f64>>,
}

/// Lowest-index argmax.
pub fn predicted_class(probs_row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs_row.iter().enumerate().skip(1) {
        if p > probs_row[best] {
            best = i;
        }
    }
    best
}

const PREDICT_CHUNK: usize = 512;

/// Run the network over a batch in chunks, mapping outputs to
/// probabilities (and opinions, for the evidence head).
pub fn predict(params: &NetworkParams, x: &Tensor) -> Result<Prediction> {
    let (n, d) = x.dims2();
    if d != params.input_dim() {
        return Err(Error::Shape(format!(
            "input has {d} features, network expects {}",
            params.input_dim()
        )));
    }
    let k = params.class_count();
    let mut probs = Tensor::zeros(&[n, k]);
    let mut alpha = match params.head() {
        Head::Evidence => Some(Tensor::zeros(&[n, k])),
        Head::Softmax => None,
    };
    let mut uncertainty = match params.head() {
        Head::Evidence => Some(vec![0.0; n]),
        Head::Softmax => None,
    };
    let mut start = 0;
    while start < n {
        let end = (start + PREDICT_CHUNK).min(n);
        let rows: Vec<usize> = (start..end).collect();
        let mut chunk = Tensor::zeros(&[rows.len(), d]);
        for (r, &i) in rows.iter().enumerate() {
            chunk.row_mut(r).copy_from_slice(x.row(i));
        }
        let trace = params.forward(chunk)?;
        for (r, i) in (start..end).enumerate() {
            let out = trace.output.row(r);
            match params.head() {
                Head::Evidence => {
                    let s: f64 = out.iter().map(|&e| e + 1.0).sum();
                    for (j, &e) in out.iter().enumerate() {
                        let a = e + 1.0;
                        alpha.as_mut().unwrap().row_mut(i)[j] = a;
                        probs.row_mut(i)[j] = a / s;
                    }
                    uncertainty.as_mut().unwrap()[i] = k as f64 / s;
                }
                Head::Softmax => probs.row_mut(i).copy_from_slice(out),
            }
        }
        start = end;
    }
    Ok(Prediction {
        probs,
        alpha,
        uncertainty,
    })
}

/// Fraction of samples whose predicted class matches the label.
pub fn accuracy(params: &NetworkParams, ds: &LabeledDataset) -> Result<f64> {
    let pred = predict(params, &ds.features)?;
    let mut correct = 0usize;
    for i in 0..ds.len() {
        if predicted_class(pred.probs.row(i)) == ds.labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / ds.len() as f64)
}

/// Train a fresh network on `train_set`, reporting per-epoch metrics on
/// both splits. Aborts with a diagnostic if the loss goes non-finite.
pub fn train(
    config: &TrainConfig,
    train_set: &LabeledDataset,
    test_set: &LabeledDataset,
    rng: &mut Rng,
) -> Result<(NetworkParams, TrainReport)> {
    config.validate()?;
    if train_set.feature_dim() != test_set.feature_dim() {
        return Err(Error::Shape(format!(
            "train features {} vs test features {}",
            train_set.feature_dim(),
            test_set.feature_dim()
        )));
    }
    if train_set.class_count != test_set.class_count {
        return Err(Error::Shape(format!(
            "train classes {} vs test classes {}",
            train_set.class_count, test_set.class_count
        )));
    }
    let started = std::time::Instant::now();
    let k = train_set.class_count;
    let mut sizes = vec![train_set.feature_dim()];
    sizes.extend_from_slice(&config.hidden_sizes);
    sizes.push(k);
    let mut params = NetworkParams::init(&sizes, config.head, rng)?;
    let mut adam = AdamState::new(&params);
    let hyper = AdamHyper {
        learning_rate: config.learning_rate,
        beta1: config.beta1,
        beta2: config.beta2,
        epsilon: config.epsilon_adam,
    };

    let n = train_set.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut reports = Vec::with_capacity(config.epochs);
    for t in 0..config.epochs {
        rng.shuffle(&mut indices);
        let mut loss_sum = LossBreakdown {
            total: 0.0,
            data_term: 0.0,
            err_term: 0.0,
            var_term: 0.0,
            kl_term: 0.0,
            lambda_t: annealing_coefficient(t, config.loss.anneal_epochs),
        };
        let mut correct = 0usize;
        let mut u_sum = 0.0;
        for chunk in indices.chunks(config.batch_size) {
            let x = train_set.feature_rows(chunk);
            let y = train_set.one_hot_rows(chunk);
            let b = chunk.len() as f64;
            let trace = params.forward(x)?;

            for (r, &i) in chunk.iter().enumerate() {
                let out = trace.output.row(r);
                if predicted_class(out) == train_set.labels[i] {
                    correct += 1;
                }
                match config.head {
                    Head::Evidence => {
                        let s: f64 = out.iter().map(|&e| e + 1.0).sum();
                        u_sum += k as f64 / s;
                    }
                    Head::Softmax => u_sum += entropy_of_slice(out) / (k as f64).ln(),
                }
            }

            let mut grads = match config.head {
                Head::Evidence => {
                    let evidence = &trace.output;
                    let alpha = evidence.map(|e| e + 1.0);
                    let breakdown = total_loss(&config.loss, &alpha, &y, t)?;
                    loss_sum.total += breakdown.total * b;
                    loss_sum.data_term += breakdown.data_term * b;
                    loss_sum.err_term += breakdown.err_term * b;
                    loss_sum.var_term += breakdown.var_term * b;
                    loss_sum.kl_term += breakdown.kl_term * b;
                    let grad_e = loss_grad_wrt_evidence(&config.loss, evidence, &y, t)?;
                    let (grads, _) = params.backward(&trace, &grad_e)?;
                    grads
                }
                Head::Softmax => {
                    let (ce, grad_p) = cross_entropy_and_grad(&trace.output, &y)?;
                    loss_sum.total += ce * b;
                    loss_sum.data_term += ce * b;
                    let (grads, _) = params.backward(&trace, &grad_p)?;
                    grads
                }
            };
            for (gw, w) in grads.weights.iter_mut().zip(params.weights()) {
                for (g, &wv) in gw.data_mut().iter_mut().zip(w.data()) {
                    *g += config.weight_decay * wv;
                }
            }
            adam_step(&mut params, &grads, &mut adam, &hyper)?;
        }
        let inv_n = 1.0 / n as f64;
        loss_sum.total *= inv_n;
        loss_sum.data_term *= inv_n;
        loss_sum.err_term *= inv_n;
        loss_sum.var_term *= inv_n;
        loss_sum.kl_term *= inv_n;
        if !loss_sum.total.is_finite() {
            return Err(Error::NonFinite(format!(
                "epoch {t}: training loss is {}; aborting",
                loss_sum.total
            )));
        }
        reports.push(EpochReport {
            epoch: t,
            loss: loss_sum,
            train_accuracy: correct as f64 / n as f64,
            test_accuracy: accuracy(&params, test_set)?,
            mean_uncertainty: u_sum / n as f64,
        });
    }
    Ok((
        params,
        TrainReport {
            epochs: reports,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        },
    ))
}

/// Mean cross-entropy of softmax rows and its gradient with respect to
/// the probabilities (the head Jacobian turns it into p − y per logit).
fn cross_entropy_and_grad(probs: &Tensor, y: &Tensor) -> Result<(f64, Tensor)> {
    let (n, k) = probs.dims2();
    let mut ce = 0.0;
    let mut grad = Tensor::zeros(&[n, k]);
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        let p = probs.row(i);
        let yr = y.row(i);
        let g = grad.row_mut(i);
        for j in 0..k {
            if yr[j] != 0.0 {
                // Softmax outputs cannot underflow to 0 for logits this
                // side of ±700, but guard the log anyway.
                let pj = p[j].max(1e-300);
                ce -= yr[j] * pj.ln() * inv_n;
                g[j] = -yr[j] / pj * inv_n;
            }
        }
    }
    if !ce.is_finite() {
        return Err(Error::NonFinite(format!("cross-entropy is {ce}; aborting")));
    }
    Ok((ce, grad))
}
