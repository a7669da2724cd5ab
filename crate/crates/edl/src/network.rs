//! Dense feed-forward classifier with reverse-mode gradients.
//!
//! Hidden layers are dense + ReLU. The output head is either `Evidence`
//! (ReLU, non-negative outputs feeding the Dirichlet machinery) or
//! `Softmax` (the weight-decay baseline). `backward` propagates a
//! loss gradient taken with respect to the head output back to every
//! parameter and to the input batch; the input gradient is what the
//! adversarial module perturbs.

use crate::error::{Error, Result};
use crate::numerics::{softmax_in_place, Rng, Tensor};
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const CHECKPOINT_MAGIC: &[u8; 4] = b"EDLC";
const CHECKPOINT_VERSION: u32 = 1;

/// Output-layer kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Evidence,
    Softmax,
}

/// Weights, biases, layer sizes, and head kind.
///
/// Weight matrix i has shape [sizes[i] × sizes[i+1]]; biases match the
/// output side. All parameters stay finite through training (enforced
/// by the non-finite-loss abort upstream).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    sizes: Vec<usize>,
    head: Head,
    weights: Vec<Tensor>,
    biases: Vec<Vec<f64>>,
}

/// Everything forward computed, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Tensor,
    /// Pre-activation z_i per layer; the last entry holds the logits.
    pub pre_activations: Vec<Tensor>,
    /// Hidden activations ReLU(z_i), one per non-final layer.
    pub activations: Vec<Tensor>,
    /// Head output: evidence (ReLU of logits) or softmax probabilities.
    pub output: Tensor,
}

/// Gradients in the same shapes as `NetworkParams`.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Vec<f64>>,
}

impl NetworkParams {
    /// He-uniform initialization: w ~ U(−√(6/fan_in), √(6/fan_in)),
    /// biases zero. The evidence head's output biases start at +1.0
    /// instead (α ≈ 2, one pseudo-count per class): a logit that is
    /// negative for every sample has zero gradient through the output
    /// ReLU, so a head born or driven all-negative early would never
    /// train. Deterministic given the generator state.
    pub fn init(sizes: &[usize], head: Head, rng: &mut Rng) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Config(format!(
                "need input and output sizes, got {sizes:?}"
            )));
        }
        if *sizes.last().unwrap() < 2 {
            return Err(Error::Config(format!(
                "output layer needs ≥ 2 classes, got {}",
                sizes.last().unwrap()
            )));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config(format!("zero-width layer in {sizes:?}")));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let layers = sizes.len() - 1;
        for (i, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            let data: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.uniform(-limit, limit))
                .collect();
            weights.push(Tensor::from_vec(&[fan_in, fan_out], data)?);
            let b0 = if i + 1 == layers && head == Head::Evidence {
                1.0
            } else {
                0.0
            };
            biases.push(vec![b0; fan_out]);
        }
        Ok(NetworkParams {
            sizes: sizes.to_vec(),
            head,
            weights,
            biases,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn class_count(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Tensor] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Tensor] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    /// Run the network on a batch, keeping the full trace.
    pub fn forward(&self, x: Tensor) -> Result<ForwardTrace> {
        let (_, d) = x.dims2();
        if d != self.sizes[0] {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                d, self.sizes[0]
            )));
        }
        let layers = self.weights.len();
        let mut pre_activations = Vec::with_capacity(layers);
        let mut activations = Vec::with_capacity(layers.saturating_sub(1));
        let mut a = x.clone();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = a.matmul(w);
            z.add_row_vector(b);
            pre_activations.push(z.clone());
            if i + 1 < layers {
                let h = z.map(|v| v.max(0.0));
                activations.push(h.clone());
                a = h;
            } else {
                a = z;
            }
        }
        let output = match self.head {
            Head::Evidence => a.map(|v| v.max(0.0)),
            Head::Softmax => {
                let (n, _) = a.dims2();
                let mut p = a;
                for i in 0..n {
                    softmax_in_place(p.row_mut(i));
                }
                p
            }
        };
        Ok(ForwardTrace {
            input: x,
            pre_activations,
            activations,
            output,
        })
    }

    /// Backpropagate ∂L/∂output through the head and every layer.
    ///
    /// ReLU subgradient at exactly 0 is 0. Returns parameter gradients
    /// and ∂L/∂x for the batch.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        loss_grad_wrt_output: &Tensor,
    ) -> Result<(ParamGrads, Tensor)> {
        let logits = trace
            .pre_activations
            .last()
            .ok_or_else(|| Error::Shape("empty trace".into()))?;
        if loss_grad_wrt_output.shape() != logits.shape() {
            return Err(Error::Shape(format!(
                "output grad shape {:?} vs logits {:?}",
                loss_grad_wrt_output.shape(),
                logits.shape()
            )));
        }
        let layers = self.weights.len();
        let mut dz = match self.head {
            Head::Evidence => {
                let mut dz = loss_grad_wrt_output.clone();
                for (g, &z) in dz.data_mut().iter_mut().zip(logits.data()) {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                }
                dz
            }
            Head::Softmax => {
                // dz_i = p_i (g_i − Σ_j g_j p_j) per row.
                let (n, k) = trace.output.dims2();
                let mut dz = Tensor::zeros(&[n, k]);
                for i in 0..n {
                    let p = trace.output.row(i);
                    let g = loss_grad_wrt_output.row(i);
                    let dot: f64 = p.iter().zip(g).map(|(&pv, &gv)| pv * gv).sum();
                    for (o, (&pv, &gv)) in dz.row_mut(i).iter_mut().zip(p.iter().zip(g)) {
                        *o = pv * (gv - dot);
                    }
                }
                dz
            }
        };

        let mut weight_grads = vec![Tensor::zeros(&[0, 0]); layers];
        let mut bias_grads = vec![Vec::new(); layers];
        let mut input_grads = Tensor::zeros(&[0, 0]);
        for i in (0..layers).rev() {
            let a_prev = if i == 0 {
                &trace.input
            } else {
                &trace.activations[i - 1]
            };
            weight_grads[i] = a_prev.transpose_matmul(&dz);
            bias_grads[i] = dz.column_sums();
            let da_prev = dz.matmul_transpose_rhs(&self.weights[i]);
            if i == 0 {
                input_grads = da_prev;
            } else {
                dz = da_prev;
                for (g, &z) in dz
                    .data_mut()
                    .iter_mut()
                    .zip(trace.pre_activations[i - 1].data())
                {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
        }
        Ok((
            ParamGrads {
                weights: weight_grads,
                biases: bias_grads,
            },
            input_grads,
        ))
    }

    /// Serialize to the versioned little-endian checkpoint format.
    ///
    /// Layout: magic "EDLC", version u32, head byte (0 evidence,
    /// 1 softmax), layer-size count u32, sizes u32 each, then per layer
    /// the row-major weight matrix and the bias vector as f64 values.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&[match self.head {
            Head::Evidence => 0u8,
            Head::Softmax => 1u8,
        }])?;
        w.write_all(&(self.sizes.len() as u32).to_le_bytes())?;
        for &s in &self.sizes {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        for (weights, biases) in self.weights.iter().zip(&self.biases) {
            for &v in weights.data() {
                w.write_all(&v.to_le_bytes())?;
            }
            for &v in biases {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Config(format!(
                "{}: not a checkpoint (bad magic {magic:02x?})",
                path.display()
            )));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "{}: unsupported checkpoint version {version}",
                path.display()
            )));
        }
        let mut head_byte = [0u8; 1];
        r.read_exact(&mut head_byte)?;
        let head = match head_byte[0] {
            0 => Head::Evidence,
            1 => Head::Softmax,
            b => {
                return Err(Error::Config(format!(
                    "{}: unknown head byte {b}",
                    path.display()
                )))
            }
        };
        let n_sizes = read_u32(&mut r)? as usize;
        if !(2..=64).contains(&n_sizes) {
            return Err(Error::Config(format!(
                "{}: implausible layer count {n_sizes}",
                path.display()
            )));
        }
        let mut sizes = Vec::with_capacity(n_sizes);
        for _ in 0..n_sizes {
            sizes.push(read_u32(&mut r)? as usize);
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let mut data = vec![0.0; fan_in * fan_out];
            for v in &mut data {
                *v = read_f64(&mut r)?;
            }
            weights.push(Tensor::from_vec(&[fan_in, fan_out], data)?);
            let mut b = vec![0.0; fan_out];
            for v in &mut b {
                *v = read_f64(&mut r)?;
            }
            biases.push(b);
        }
        Ok(NetworkParams {
            sizes,
            head,
            weights,
            biases,
        })
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn zero_network_outputs() {
        let mut rng = Rng::new(1);
        let mut params = NetworkParams::init(&[4, 10], Head::Evidence, &mut rng).unwrap();
        for w in params.weights_mut() {
            for v in w.data_mut() {
                *v = 0.0;
            }
        }
        for b in params.biases_mut() {
            b.fill(0.0);
        }
        let x = Tensor::from_vec(&[2, 4], vec![0.3; 8]).unwrap();
        let trace = params.forward(x.clone()).unwrap();
        assert!(trace.output.data().iter().all(|&v| v == 0.0));

        let mut params = NetworkParams::init(&[4, 10], Head::Softmax, &mut rng).unwrap();
        for w in params.weights_mut() {
            for v in w.data_mut() {
                *v = 0.0;
            }
        }
        let trace = params.forward(x).unwrap();
        assert!(trace.output.data().iter().all(|&v| (v - 0.1).abs() <= 1e-15));
    }

    #[test]
    fn hand_computed_single_layer() {
        let mut rng = Rng::new(2);
        let mut params = NetworkParams::init(&[2, 2], Head::Evidence, &mut rng).unwrap();
        params.weights_mut()[0] = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        params.biases_mut()[0].fill(0.0);
        let x = Tensor::from_vec(&[1, 2], vec![3.0, -1.0]).unwrap();
        let trace = params.forward(x).unwrap();
        assert_eq!(trace.output.data(), &[3.0, 0.0]);
    }

    #[test]
    fn evidence_head_is_nonnegative() {
        let mut rng = Rng::new(3);
        for _ in 0..20 {
            let params = NetworkParams::init(&[5, 8, 4], Head::Evidence, &mut rng).unwrap();
            let x = Tensor::from_vec(&[3, 5], (0..15).map(|_| rng.uniform(-2.0, 2.0)).collect())
                .unwrap();
            let trace = params.forward(x).unwrap();
            assert!(trace.output.data().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = NetworkParams::init(&[784, 64, 64, 10], Head::Evidence, &mut Rng::new(7)).unwrap();
        let b = NetworkParams::init(&[784, 64, 64, 10], Head::Evidence, &mut Rng::new(7)).unwrap();
        assert_eq!(a, b);

        let p = NetworkParams::init(&[2, 4, 2], Head::Evidence, &mut Rng::new(9)).unwrap();
        let limit = (6.0f64 / 2.0).sqrt();
        assert!(p.weights()[0].data().iter().all(|&v| v.abs() <= limit));
        assert!(p.biases()[0].iter().all(|&v| v == 0.0));
        assert!(p.biases()[1].iter().all(|&v| v == 1.0));

        let p = NetworkParams::init(&[2, 4, 2], Head::Softmax, &mut Rng::new(9)).unwrap();
        assert!(p.biases()[1].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_weight_mean_is_centered() {
        // U(−L, L) has variance L²/3; the mean of n draws has SE L/√(3n).
        let p = NetworkParams::init(&[784, 64], Head::Evidence, &mut Rng::new(11)).unwrap();
        let data = p.weights()[0].data();
        let n = data.len() as f64;
        let limit = (6.0f64 / 784.0).sqrt();
        let mean = data.iter().sum::<f64>() / n;
        let se = limit / (3.0 * n).sqrt();
        assert!(mean.abs() <= 3.0 * se, "mean {mean} vs se {se}");
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = Rng::new(4);
        let params = NetworkParams::init(&[6, 5, 3], Head::Softmax, &mut rng).unwrap();
        let x = Tensor::from_vec(&[2, 6], (0..12).map(|i| i as f64 / 7.0).collect()).unwrap();
        let a = params.forward(x.clone()).unwrap();
        let b = params.forward(x).unwrap();
        assert_eq!(a.output.data(), b.output.data());
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grads() {
        let mut rng = Rng::new(5);
        let params = NetworkParams::init(&[4, 6, 3], Head::Evidence, &mut rng).unwrap();
        let x = Tensor::from_vec(&[2, 4], (0..8).map(|_| rng.uniform(0.0, 1.0)).collect()).unwrap();
        let trace = params.forward(x).unwrap();
        let zero = Tensor::zeros(&[2, 3]);
        let (grads, dx) = params.backward(&trace, &zero).unwrap();
        assert!(grads.weights.iter().all(|w| w.data().iter().all(|&v| v == 0.0)));
        assert!(grads.biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
        assert!(dx.data().iter().all(|&v| v == 0.0));
    }

    /// Scalar objective J = Σ c ⊙ output, with fixed random c, so that
    /// ∂J/∂output = c and the chain can be checked by finite differences.
    fn fd_gradient_check(sizes: &[usize], head: Head, seed: u64) {
        let mut rng = Rng::new(seed);
        let h = 1e-5;
        // Resample until no pre-activation sits near a ReLU kink that a
        // ±h probe could cross.
        let (params, x, c) = loop {
            let params = NetworkParams::init(sizes, head, &mut rng).unwrap();
            let n = 3;
            let x = Tensor::from_vec(
                &[n, sizes[0]],
                (0..n * sizes[0]).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            )
            .unwrap();
            let trace = params.forward(x.clone()).unwrap();
            let margin = trace
                .pre_activations
                .iter()
                .flat_map(|t| t.data())
                .fold(f64::INFINITY, |m, &z| m.min(z.abs()));
            if margin > 1e-3 {
                let k = *sizes.last().unwrap();
                let c = Tensor::from_vec(
                    &[n, k],
                    (0..n * k).map(|_| rng.uniform(-1.0, 1.0)).collect(),
                )
                .unwrap();
                break (params, x, c);
            }
        };
        let objective = |p: &NetworkParams, input: &Tensor| -> f64 {
            let t = p.forward(input.clone()).unwrap();
            t.output
                .data()
                .iter()
                .zip(c.data())
                .map(|(&o, &cv)| o * cv)
                .sum()
        };
        let trace = params.forward(x.clone()).unwrap();
        let (grads, input_grads) = params.backward(&trace, &c).unwrap();

        let check = |analytic: f64, fd: f64, what: &str| {
            let tol = 1e-5 * analytic.abs().max(fd.abs()).max(1.0);
            assert!(
                (analytic - fd).abs() <= tol,
                "{what}: analytic {analytic} vs fd {fd} (sizes {sizes:?}, head {head:?})"
            );
        };

        for layer in 0..params.layer_count() {
            for idx in 0..params.weights()[layer].len() {
                let mut plus = params.clone();
                plus.weights_mut()[layer].data_mut()[idx] += h;
                let mut minus = params.clone();
                minus.weights_mut()[layer].data_mut()[idx] -= h;
                let fd = (objective(&plus, &x) - objective(&minus, &x)) / (2.0 * h);
                check(grads.weights[layer].data()[idx], fd, "weight");
            }
            for idx in 0..params.biases()[layer].len() {
                let mut plus = params.clone();
                plus.biases_mut()[layer][idx] += h;
                let mut minus = params.clone();
                minus.biases_mut()[layer][idx] -= h;
                let fd = (objective(&plus, &x) - objective(&minus, &x)) / (2.0 * h);
                check(grads.biases[layer][idx], fd, "bias");
            }
        }
        for idx in 0..x.len() {
            let mut plus = x.clone();
            plus.data_mut()[idx] += h;
            let mut minus = x.clone();
            minus.data_mut()[idx] -= h;
            let fd = (objective(&params, &plus) - objective(&params, &minus)) / (2.0 * h);
            check(input_grads.data()[idx], fd, "input");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let shapes: [&[usize]; 5] = [
            &[2, 2],
            &[3, 5, 2],
            &[4, 8, 3],
            &[5, 16, 8, 4],
            &[6, 4, 4, 10],
        ];
        let mut seed = 100;
        for sizes in shapes {
            for head in [Head::Evidence, Head::Softmax] {
                for _ in 0..2 {
                    fd_gradient_check(sizes, head, seed);
                    seed += 1;
                }
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bin");
        let mut rng = Rng::new(6);
        for head in [Head::Evidence, Head::Softmax] {
            let params = NetworkParams::init(&[7, 5, 3], head, &mut rng).unwrap();
            params.save(&path).unwrap();
            let loaded = NetworkParams::load(&path).unwrap();
            assert_eq!(params, loaded);
        }
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(NetworkParams::load(&path).is_err());
        std::fs::write(&path, b"ED").unwrap();
        assert!(NetworkParams::load(&path).is_err());
    }
}
