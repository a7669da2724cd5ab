//! Evidential losses over Dirichlet parameters.
//!
//! Three interchangeable data terms, each the expectation of a
//! classification loss under the predicted Dirichlet:
//!
//! * `Type2Ml`: negative log marginal likelihood, Σ y_j (ln S − ln α_j)
//! * `DigammaRisk`: Bayes risk of log loss, Σ y_j (ψ(S) − ψ(α_j))
//! * `SseRisk`: Bayes risk of squared error, which splits exactly into
//!   a prediction-error term and a variance term
//!
//! plus the misleading-evidence regularizer: the true-class parameter is
//! masked to 1 and the remainder is pulled toward the uniform Dirichlet
//! by KL divergence, annealed in over the first `anneal_epochs` epochs.
//!
//! Gradients are analytic (through α = e + 1) and are checked against
//! central finite differences in the test suites.

use crate::error::{Error, Result};
use crate::numerics::{digamma_raw, log_gamma_raw, trigamma_raw, Tensor};
use crate::opinions::DirichletParams;
use serde::{Deserialize, Serialize};

/// Which data term to train with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    Type2Ml,
    DigammaRisk,
    SseRisk,
}

/// Loss selection plus regularizer schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub variant: LossVariant,
    pub kl_enabled: bool,
    pub anneal_epochs: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            variant: LossVariant::SseRisk,
            kl_enabled: true,
            anneal_epochs: 10,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.anneal_epochs < 1 {
            return Err(Error::Config("anneal_epochs must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Inputs with one-hot labels.
#[derive(Debug, Clone)]
pub struct LabeledBatch {
    pub x: Tensor,
    pub y: Tensor,
}

impl LabeledBatch {
    pub fn new(x: Tensor, y: Tensor) -> Result<Self> {
        let (n, _) = x.dims2();
        let (ny, k) = y.dims2();
        if n != ny {
            return Err(Error::Shape(format!(
                "batch has {n} inputs but {ny} label rows"
            )));
        }
        for i in 0..ny {
            validate_one_hot(y.row(i)).map_err(|e| {
                Error::Shape(format!("label row {i}: {e}"))
            })?;
        }
        if k < 2 {
            return Err(Error::Shape(format!("need at least 2 classes, got {k}")));
        }
        Ok(LabeledBatch { x, y })
    }
}

/// Per-batch loss report: mean-per-sample values of every component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub data_term: f64,
    pub err_term: f64,
    pub var_term: f64,
    pub kl_term: f64,
    pub lambda_t: f64,
}

fn validate_one_hot(y: &[f64]) -> Result<usize> {
    let mut hot = None;
    for (k, &v) in y.iter().enumerate() {
        if v == 1.0 {
            if hot.is_some() {
                return Err(Error::Domain("more than one hot entry".into()));
            }
            hot = Some(k);
        } else if v != 0.0 {
            return Err(Error::Domain(format!("entry {k} is {v}, not 0 or 1")));
        }
    }
    hot.ok_or_else(|| Error::Domain("no hot entry".into()))
}

fn check_dims(params: &DirichletParams, y: &[f64]) -> Result<usize> {
    if params.class_count() != y.len() {
        return Err(Error::Shape(format!(
            "alpha has {} classes, y has {}",
            params.class_count(),
            y.len()
        )));
    }
    validate_one_hot(y)
}

/// Negative log marginal likelihood: Σ y_j (ln S − ln α_j).
pub fn loss_type2_ml(params: &DirichletParams, y: &[f64]) -> Result<f64> {
    check_dims(params, y)?;
    Ok(ml_row(params.alpha(), params.strength(), y))
}

/// Bayes risk of log loss: Σ y_j (ψ(S) − ψ(α_j)).
pub fn loss_digamma(params: &DirichletParams, y: &[f64]) -> Result<f64> {
    check_dims(params, y)?;
    Ok(digamma_row(params.alpha(), params.strength(), y))
}

/// Bayes risk of squared error, decomposed into error and variance.
pub fn loss_sse(params: &DirichletParams, y: &[f64]) -> Result<LossBreakdown> {
    check_dims(params, y)?;
    let (err, var) = sse_row(params.alpha(), params.strength(), y);
    Ok(LossBreakdown {
        total: err + var,
        data_term: err + var,
        err_term: err,
        var_term: var,
        kl_term: 0.0,
        lambda_t: 0.0,
    })
}

/// Replace the true-class parameter with 1, keeping the misleading rest.
pub fn mask_misleading(params: &DirichletParams, y: &[f64]) -> Result<DirichletParams> {
    check_dims(params, y)?;
    let alpha: Vec<f64> = params
        .alpha()
        .iter()
        .zip(y)
        .map(|(&a, &yk)| yk + (1.0 - yk) * a)
        .collect();
    DirichletParams::new(alpha)
}

/// KL(D(α̃) ‖ D(1,…,1)); zero iff α̃ is the all-ones vector.
pub fn kl_to_uniform(params: &DirichletParams) -> f64 {
    kl_row(params.alpha(), params.strength())
}

/// λ_t = min(1, t / anneal_epochs); epoch indices are 0-based.
pub fn annealing_coefficient(epoch_t: usize, anneal_epochs: usize) -> f64 {
    assert!(anneal_epochs >= 1, "anneal_epochs must be ≥ 1");
    (epoch_t as f64 / anneal_epochs as f64).min(1.0)
}

fn ml_row(alpha: &[f64], s: f64, y: &[f64]) -> f64 {
    let ln_s = s.ln();
    alpha
        .iter()
        .zip(y)
        .map(|(&a, &yk)| if yk != 0.0 { yk * (ln_s - a.ln()) } else { 0.0 })
        .sum()
}

fn digamma_row(alpha: &[f64], s: f64, y: &[f64]) -> f64 {
    let psi_s = digamma_raw(s);
    alpha
        .iter()
        .zip(y)
        .map(|(&a, &yk)| {
            if yk != 0.0 {
                yk * (psi_s - digamma_raw(a))
            } else {
                0.0
            }
        })
        .sum()
}

fn sse_row(alpha: &[f64], s: f64, y: &[f64]) -> (f64, f64) {
    let denom = s * s * (s + 1.0);
    let mut err = 0.0;
    let mut var = 0.0;
    for (&a, &yk) in alpha.iter().zip(y) {
        let d = yk - a / s;
        err += d * d;
        var += a * (s - a) / denom;
    }
    (err, var)
}

/// KL for an already-masked row; inputs satisfy α̃_k ≥ 1.
fn kl_row(alpha_tilde: &[f64], s_tilde: f64) -> f64 {
    let k = alpha_tilde.len() as f64;
    let psi_s = digamma_raw(s_tilde);
    let mut kl = log_gamma_raw(s_tilde) - log_gamma_raw(k);
    for &a in alpha_tilde {
        kl -= log_gamma_raw(a);
        kl += (a - 1.0) * (digamma_raw(a) - psi_s);
    }
    kl.max(0.0)
}

/// Masked KL computed without materializing α̃.
fn kl_masked_row(alpha: &[f64], y: &[f64], scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(alpha.iter().zip(y).map(|(&a, &yk)| yk + (1.0 - yk) * a));
    let s: f64 = scratch.iter().sum();
    kl_row(scratch, s)
}

fn validate_alpha_rows(alpha: &Tensor) -> Result<()> {
    for (i, &a) in alpha.data().iter().enumerate() {
        if !a.is_finite() || a < 1.0 {
            return Err(Error::Domain(format!(
                "alpha entry {i} must be finite and ≥ 1, got {a}"
            )));
        }
    }
    Ok(())
}

fn validate_batch_dims(alpha: &Tensor, y: &Tensor) -> Result<(usize, usize)> {
    let (n, k) = alpha.dims2();
    let (ny, ky) = y.dims2();
    if n != ny || k != ky {
        return Err(Error::Shape(format!(
            "alpha batch {n}×{k} vs label batch {ny}×{ky}"
        )));
    }
    if n == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    for i in 0..n {
        validate_one_hot(y.row(i))
            .map_err(|e| Error::Shape(format!("label row {i}: {e}")))?;
    }
    Ok((n, k))
}

/// Mean-per-sample loss of a batch of Dirichlet parameter rows.
pub fn total_loss(
    config: &LossConfig,
    alpha_batch: &Tensor,
    y_batch: &Tensor,
    epoch_t: usize,
) -> Result<LossBreakdown> {
    config.validate()?;
    let (n, _) = validate_batch_dims(alpha_batch, y_batch)?;
    validate_alpha_rows(alpha_batch)?;
    let lambda_t = annealing_coefficient(epoch_t, config.anneal_epochs);

    let mut data = 0.0;
    let mut err = 0.0;
    let mut var = 0.0;
    let mut kl = 0.0;
    let mut scratch = Vec::new();
    for i in 0..n {
        let alpha = alpha_batch.row(i);
        let y = y_batch.row(i);
        let s: f64 = alpha.iter().sum();
        match config.variant {
            LossVariant::Type2Ml => data += ml_row(alpha, s, y),
            LossVariant::DigammaRisk => data += digamma_row(alpha, s, y),
            LossVariant::SseRisk => {
                let (e, v) = sse_row(alpha, s, y);
                err += e;
                var += v;
                data += e + v;
            }
        }
        if config.kl_enabled {
            kl += kl_masked_row(alpha, y, &mut scratch);
        }
    }
    let inv_n = 1.0 / n as f64;
    let breakdown = LossBreakdown {
        total: (data + lambda_t * kl) * inv_n,
        data_term: data * inv_n,
        err_term: err * inv_n,
        var_term: var * inv_n,
        kl_term: kl * inv_n,
        lambda_t,
    };
    if !breakdown.total.is_finite() {
        return Err(Error::NonFinite(format!(
            "loss is {}; aborting",
            breakdown.total
        )));
    }
    Ok(breakdown)
}

/// ∂(mean total loss)/∂e for a batch of evidence rows (α = e + 1).
pub fn loss_grad_wrt_evidence(
    config: &LossConfig,
    evidence_batch: &Tensor,
    y_batch: &Tensor,
    epoch_t: usize,
) -> Result<Tensor> {
    config.validate()?;
    let (n, k) = validate_batch_dims(evidence_batch, y_batch)?;
    for (i, &e) in evidence_batch.data().iter().enumerate() {
        if !e.is_finite() || e < 0.0 {
            return Err(Error::Domain(format!(
                "evidence entry {i} must be finite and non-negative, got {e}"
            )));
        }
    }
    let lambda_t = annealing_coefficient(epoch_t, config.anneal_epochs);
    let inv_n = 1.0 / n as f64;

    let mut grad = Tensor::zeros(&[n, k]);
    let mut alpha = vec![0.0; k];
    for i in 0..n {
        let e_row = evidence_batch.row(i);
        let y = y_batch.row(i);
        for (a, &e) in alpha.iter_mut().zip(e_row) {
            *a = e + 1.0;
        }
        let s: f64 = alpha.iter().sum();
        let g = grad.row_mut(i);
        match config.variant {
            LossVariant::Type2Ml => {
                let inv_s = 1.0 / s;
                for j in 0..k {
                    g[j] = inv_s - y[j] / alpha[j];
                }
            }
            LossVariant::DigammaRisk => {
                let tri_s = trigamma_raw(s);
                for j in 0..k {
                    g[j] = tri_s
                        - if y[j] != 0.0 {
                            y[j] * trigamma_raw(alpha[j])
                        } else {
                            0.0
                        };
                }
            }
            LossVariant::SseRisk => {
                // err = Σ (y − p)², p = α/S, so
                // ∂err/∂α_k = (2/S)[(p_k − y_k) − Σ_j (p_j − y_j) p_j].
                let mut cross = 0.0;
                for j in 0..k {
                    let p = alpha[j] / s;
                    cross += (p - y[j]) * p;
                }
                // var = (S² − Σα²)/(S²(S+1)) as numerator/denominator.
                let q: f64 = alpha.iter().map(|a| a * a).sum();
                let num = s * s - q;
                let den = s * s * (s + 1.0);
                let dden = 3.0 * s * s + 2.0 * s;
                for j in 0..k {
                    let p = alpha[j] / s;
                    let derr = 2.0 / s * ((p - y[j]) - cross);
                    let dnum = 2.0 * (s - alpha[j]);
                    let dvar = (dnum * den - num * dden) / (den * den);
                    g[j] = derr + dvar;
                }
            }
        }
        if config.kl_enabled && lambda_t > 0.0 {
            // α̃_j = y_j + (1−y_j)α_j; d α̃_j / d α_j = 1 − y_j.
            let s_tilde: f64 = alpha
                .iter()
                .zip(y)
                .map(|(&a, &yk)| yk + (1.0 - yk) * a)
                .sum();
            let tri_s = trigamma_raw(s_tilde);
            let excess = (s_tilde - k as f64) * tri_s;
            for j in 0..k {
                if y[j] == 0.0 {
                    let a_t = alpha[j];
                    g[j] += lambda_t * ((a_t - 1.0) * trigamma_raw(a_t) - excess);
                }
            }
        }
        for v in g.iter_mut() {
            *v *= inv_n;
        }
    }
    grad.validate_finite("loss gradient")?;
    Ok(grad)
}

/// True-class variance term is strictly below the true-class error term.
pub fn check_prop1(params: &DirichletParams, y: &[f64]) -> Result<bool> {
    let j = check_dims(params, y)?;
    let s = params.strength();
    let a = params.alpha()[j];
    let err_j = (1.0 - a / s) * (1.0 - a / s);
    let var_j = a * (s - a) / (s * s * (s + 1.0));
    Ok(var_j < err_j)
}

/// Adding evidence ν to the true class moves the error term the right way:
/// down for ν > 0, up for ν < 0.
pub fn check_prop2(params: &DirichletParams, y: &[f64], nu: f64) -> Result<bool> {
    let j = check_dims(params, y)?;
    if nu == 0.0 || !nu.is_finite() {
        return Err(Error::Domain(format!("nu must be finite and nonzero, got {nu}")));
    }
    if params.alpha()[j] + nu < 1.0 {
        return Err(Error::Domain(format!(
            "alpha_j + nu = {} must stay ≥ 1",
            params.alpha()[j] + nu
        )));
    }
    let before = err_of(params.alpha(), params.strength(), y);
    let mut alpha = params.alpha().to_vec();
    alpha[j] += nu;
    let after = err_of(&alpha, params.strength() + nu, y);
    Ok(if nu > 0.0 { after < before } else { after > before })
}

/// Removing δ from the largest wrong-class parameter lowers the error
/// term, provided the removal premise holds: the shrunken class still
/// dominates every other wrong class.
pub fn check_prop3(params: &DirichletParams, y: &[f64], delta: f64) -> Result<bool> {
    let j = check_dims(params, y)?;
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Domain(format!("delta must be positive, got {delta}")));
    }
    let alpha = params.alpha();
    let k = alpha.len();
    let mut l = None;
    for (m, &a) in alpha.iter().enumerate() {
        if m == j {
            continue;
        }
        match l {
            None => l = Some(m),
            Some(cur) if a > alpha[cur] => l = Some(m),
            _ => {}
        }
    }
    let l = l.expect("K ≥ 2 guarantees a wrong class");
    for (m, &a) in alpha.iter().enumerate() {
        if m != j && m != l && a >= alpha[l] {
            return Err(Error::Domain(
                "largest wrong-class parameter is not strictly greatest".into(),
            ));
        }
    }
    if alpha[l] - delta < 1.0 {
        return Err(Error::Domain(format!(
            "alpha_l - delta = {} must stay ≥ 1",
            alpha[l] - delta
        )));
    }
    let s = params.strength();
    let s_new = s - delta;
    // Premise: p̂_l > p̃_l and p̃_l ≥ p̃_k for every other wrong class.
    let p_l_before = alpha[l] / s;
    let p_l_after = (alpha[l] - delta) / s_new;
    if !(p_l_before > p_l_after) {
        return Err(Error::Domain("removal premise violated: p̂_l ≤ p̃_l".into()));
    }
    for (m, &a) in alpha.iter().enumerate() {
        if m != j && m != l && p_l_after < a / s_new {
            return Err(Error::Domain(
                "removal premise violated: shrunken class no longer dominates".into(),
            ));
        }
    }
    let before = err_of(alpha, s, y);
    let mut reduced = alpha.to_vec();
    reduced[l] -= delta;
    let _ = k;
    let after = err_of(&reduced, s_new, y);
    Ok(after < before)
}

fn err_of(alpha: &[f64], s: f64, y: &[f64]) -> f64 {
    alpha
        .iter()
        .zip(y)
        .map(|(&a, &yk)| {
            let d = yk - a / s;
            d * d
        })
        .sum()
}
