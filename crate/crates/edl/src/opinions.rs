//! Subjective-logic opinions backed by Dirichlet distributions.
//!
//! Evidence per class maps to a Dirichlet over class probabilities:
//! α_k = e_k + 1 with strength S = Σ α_k. Belief mass b_k = e_k / S and
//! uncertainty mass u = K / S partition unit mass (Σ b_k + u = 1), and
//! the Dirichlet mean p̂_k = α_k / S is the point prediction. The
//! log-pdf and sampler exist so test oracles can integrate against the
//! same distribution the losses integrate against analytically.

use crate::error::{Error, Result};
use crate::numerics::{log_gamma_raw, Rng};

const SIMPLEX_TOL: f64 = 1e-12;

/// Non-negative evidence per class, K ≥ 2.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceVector {
    e: Vec<f64>,
}

impl EvidenceVector {
    pub fn new(e: Vec<f64>) -> Result<Self> {
        if e.len() < 2 {
            return Err(Error::Shape(format!(
                "evidence needs at least 2 classes, got {}",
                e.len()
            )));
        }
        for (k, &v) in e.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Domain(format!(
                    "evidence for class {k} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(EvidenceVector { e })
    }

    pub fn values(&self) -> &[f64] {
        &self.e
    }

    pub fn class_count(&self) -> usize {
        self.e.len()
    }
}

/// Dirichlet parameters α with cached strength S = Σ α_k.
///
/// Every α_k ≥ 1 by construction (α = e + 1 with e ≥ 0), which keeps
/// the KL regularizer and the gamma sampler on their safe domains.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams {
    alpha: Vec<f64>,
    strength: f64,
}

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::Shape(format!(
                "Dirichlet needs at least 2 classes, got {}",
                alpha.len()
            )));
        }
        for (k, &a) in alpha.iter().enumerate() {
            if !a.is_finite() || a < 1.0 {
                return Err(Error::Domain(format!(
                    "alpha for class {k} must be finite and ≥ 1, got {a}"
                )));
            }
        }
        let strength = alpha.iter().sum();
        Ok(DirichletParams { alpha, strength })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn class_count(&self) -> usize {
        self.alpha.len()
    }

    /// Dirichlet mean p̂_k = α_k / S.
    pub fn expected_probability(&self) -> ProbabilityVector {
        ProbabilityVector {
            p: self.alpha.iter().map(|a| a / self.strength).collect(),
        }
    }
}

/// Belief masses, uncertainty mass, and expected probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Opinion {
    pub b: Vec<f64>,
    pub u: f64,
    pub p_hat: Vec<f64>,
}

/// A point on the unit simplex (entries in [0,1], summing to 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    p: Vec<f64>,
}

impl ProbabilityVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::Shape("empty probability vector".into()));
        }
        let mut sum = 0.0;
        for (k, &v) in p.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!(
                    "probability for class {k} must lie in [0,1], got {v}"
                )));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Domain(format!(
                "probabilities sum to {sum}, expected 1 within {SIMPLEX_TOL}"
            )));
        }
        Ok(ProbabilityVector { p })
    }

    pub fn values(&self) -> &[f64] {
        &self.p
    }

    pub fn class_count(&self) -> usize {
        self.p.len()
    }
}

/// Map evidence to the full opinion: b_k = e_k/S, u = K/S, p̂ = α/S.
pub fn opinion_from_evidence(e: &EvidenceVector) -> Opinion {
    let k = e.class_count() as f64;
    let strength: f64 = e.values().iter().map(|v| v + 1.0).sum();
    Opinion {
        b: e.values().iter().map(|v| v / strength).collect(),
        u: k / strength,
        p_hat: e.values().iter().map(|v| (v + 1.0) / strength).collect(),
    }
}

/// α_k = e_k + 1.
pub fn dirichlet_from_evidence(e: &EvidenceVector) -> DirichletParams {
    let alpha: Vec<f64> = e.values().iter().map(|v| v + 1.0).collect();
    let strength = alpha.iter().sum();
    DirichletParams { alpha, strength }
}

/// ln D(p | α) for p strictly inside the simplex.
pub fn dirichlet_log_pdf(params: &DirichletParams, p: &ProbabilityVector) -> Result<f64> {
    if params.class_count() != p.class_count() {
        return Err(Error::Shape(format!(
            "alpha has {} classes, p has {}",
            params.class_count(),
            p.class_count()
        )));
    }
    let mut log_b = -log_gamma_raw(params.strength());
    let mut dot = 0.0;
    for (&a, &pk) in params.alpha().iter().zip(p.values()) {
        if pk <= 0.0 {
            return Err(Error::Domain(format!(
                "log-pdf needs p strictly interior to the simplex, got {pk}"
            )));
        }
        log_b += log_gamma_raw(a);
        dot += (a - 1.0) * pk.ln();
    }
    Ok(dot - log_b)
}

/// Draw from Dirichlet(α) by normalizing unit-rate gamma variates.
pub fn dirichlet_sample(params: &DirichletParams, rng: &mut Rng) -> ProbabilityVector {
    let mut draws: Vec<f64> = params
        .alpha()
        .iter()
        .map(|&a| gamma_sample(a, rng))
        .collect();
    let sum: f64 = draws.iter().sum();
    for d in &mut draws {
        *d /= sum;
    }
    ProbabilityVector { p: draws }
}

/// Marsaglia–Tsang gamma variate, shape ≥ 1 (guaranteed by α_k ≥ 1).
fn gamma_sample(shape: f64, rng: &mut Rng) -> f64 {
    debug_assert!(shape >= 1.0);
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = rng.normal();
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u = rng.next_f64();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if u > 0.0 && u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Shannon entropy −Σ p ln p in nats, with 0·ln 0 = 0.
pub fn entropy(p: &ProbabilityVector) -> f64 {
    entropy_of_slice(p.values())
}

/// Entropy of a raw probability slice; callers guarantee simplex-ness.
pub fn entropy_of_slice(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &v in p {
        if v > 0.0 {
            h -= v * v.ln();
        }
    }
    h.max(0.0)
}
