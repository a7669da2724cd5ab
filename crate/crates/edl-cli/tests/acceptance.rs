//! Release gate. Each numbered criterion prints one PASS/FAIL line with
//! the measured values; the test fails at the end if any line failed.
//!
//! Needs the MNIST IDX files; set EDL_MNIST_DIR to their directory or
//! keep them in data/mnist at the repository root.

use edl::adversarial::{fgsm, GradientLoss};
use edl::data::{filter_classes, load_idx, LabeledDataset};
use edl::evaluation::rotate_image;
use edl::losses::{
    check_prop1, check_prop2, check_prop3, kl_to_uniform, loss_digamma, loss_grad_wrt_evidence,
    loss_sse, loss_type2_ml, mask_misleading, total_loss, LossConfig, LossVariant,
};
use edl::network::{Head, NetworkParams};
use edl::numerics::{digamma, log_gamma, Rng, Tensor};
use edl::opinions::{dirichlet_log_pdf, dirichlet_sample, entropy_of_slice, DirichletParams};
use edl::training::{predict, predicted_class, train, TrainConfig};
use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

#[derive(Default)]
struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn check(&mut self, idx: usize, name: &str, pass: bool, detail: String) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("criterion {idx:2} [{verdict}] {name}: {detail}");
        if !pass {
            self.failures.push(format!("criterion {idx} ({name}): {detail}"));
        }
    }
}

fn one_hot(k: usize, j: usize) -> Vec<f64> {
    let mut y = vec![0.0; k];
    y[j] = 1.0;
    y
}

fn rand_class(rng: &mut Rng, k: usize) -> usize {
    (rng.next_f64() * k as f64) as usize % k
}

fn random_alpha(rng: &mut Rng, k: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..k).map(|_| rng.uniform(lo, hi)).collect()
}

/// |a − b| scaled by max(|a|, |b|, 1): relative for O(1)-or-larger
/// values, absolute below that.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

// ---------------------------------------------------------------- 1

fn criterion_1(gate: &mut Gate, rng: &mut Rng) {
    let start = Instant::now();
    let cases_per_prop = 10_000;
    let mut failures = 0usize;
    let mut total = 0usize;
    for &k in &[2usize, 3, 10] {
        for _ in 0..cases_per_prop {
            let j = rand_class(rng, k);
            let y = one_hot(k, j);

            let alpha = DirichletParams::new(random_alpha(rng, k, 1.0, 30.0)).unwrap();
            total += 1;
            if !check_prop1(&alpha, &y).unwrap() {
                failures += 1;
            }

            let alpha = DirichletParams::new(random_alpha(rng, k, 1.0, 30.0)).unwrap();
            let mag = rng.uniform(0.1, 5.0);
            // The negative branch backs off from the alpha_j + nu >= 1
            // premise boundary so rounding cannot cross it.
            let nu = if rng.next_f64() < 0.5 || alpha.alpha()[j] - 1.0 < 0.1 {
                mag
            } else {
                -0.99 * mag.min(alpha.alpha()[j] - 1.0)
            };
            total += 1;
            if !check_prop2(&alpha, &y, nu).unwrap() {
                failures += 1;
            }

            // prop 3 premise: one wrong class strictly dominates the rest,
            // keeps alpha ≥ 1 after removal, and still dominates after
            // removal; delta therefore stays inside the dominance margin.
            let mut a = random_alpha(rng, k, 1.0, 30.0);
            let l = loop {
                let l = rand_class(rng, k);
                if l != j {
                    break l;
                }
            };
            let wrong_max = a
                .iter()
                .enumerate()
                .filter(|(m, _)| *m != j && *m != l)
                .map(|(_, &v)| v)
                .fold(1.0f64, f64::max);
            let margin = rng.uniform(0.5, 5.0);
            a[l] = wrong_max + margin;
            let delta = margin * rng.uniform(0.1, 0.9);
            let alpha = DirichletParams::new(a).unwrap();
            total += 1;
            if !check_prop3(&alpha, &y, delta).unwrap() {
                failures += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    gate.check(
        1,
        "proposition suites",
        failures == 0 && secs < 10.0,
        format!("{failures}/{total} failures over K in {{2,3,10}}, {secs:.2}s (bound 10s)"),
    );
}

// ---------------------------------------------------------------- 2

fn criterion_2(gate: &mut Gate, rng: &mut Rng) {
    let start = Instant::now();
    const SAMPLES: usize = 1_000_000;
    let ks = [2usize, 3, 10];
    let mut worst: (f64, &str) = (0.0, "none");
    let mut pass = true;
    for case in 0..100 {
        let k = ks[case % ks.len()];
        let j = rand_class(rng, k);
        let y = one_hot(k, j);
        let alpha = DirichletParams::new(random_alpha(rng, k, 1.0, 10.0)).unwrap();

        // One pass collects all three per-sample statistics.
        let (mut sum_sse, mut sq_sse) = (0.0f64, 0.0f64);
        let (mut sum_dig, mut sq_dig) = (0.0f64, 0.0f64);
        let (mut sum_ml, mut sq_ml) = (0.0f64, 0.0f64);
        for _ in 0..SAMPLES {
            let p = dirichlet_sample(&alpha, rng);
            let p = p.values();
            let sse: f64 = p
                .iter()
                .zip(&y)
                .map(|(&pj, &yj)| (yj - pj) * (yj - pj))
                .sum();
            let dig = -p[j].max(1e-300).ln();
            let ml = p[j];
            sum_sse += sse;
            sq_sse += sse * sse;
            sum_dig += dig;
            sq_dig += dig * dig;
            sum_ml += ml;
            sq_ml += ml * ml;
        }
        let n = SAMPLES as f64;
        let se = |sum: f64, sq: f64| ((sq / n - (sum / n) * (sum / n)).max(0.0) / n).sqrt();

        let closed_sse = loss_sse(&alpha, &y).unwrap().data_term;
        let dev = (closed_sse - sum_sse / n).abs() / se(sum_sse, sq_sse).max(1e-12);
        if dev > worst.0 {
            worst = (dev, "sse");
        }
        pass &= dev <= 3.0;

        let closed_dig = loss_digamma(&alpha, &y).unwrap();
        let dev = (closed_dig - sum_dig / n).abs() / se(sum_dig, sq_dig).max(1e-12);
        if dev > worst.0 {
            worst = (dev, "digamma");
        }
        pass &= dev <= 3.0;

        // E[Π p^y] = E[p_j]; the loss is −ln of it. Delta method turns
        // the mean's standard error into one for −ln(mean).
        let m = sum_ml / n;
        let closed_ml = loss_type2_ml(&alpha, &y).unwrap();
        let dev = (closed_ml - (-m.ln())).abs() / (se(sum_ml, sq_ml) / m).max(1e-12);
        if dev > worst.0 {
            worst = (dev, "ml");
        }
        pass &= dev <= 3.0;
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 300.0;
    gate.check(
        2,
        "loss Monte-Carlo oracles",
        pass,
        format!(
            "100 cases x {SAMPLES} samples, worst deviation {:.2} SE ({}), {secs:.1}s (bound 300s)",
            worst.0, worst.1
        ),
    );
}

// ---------------------------------------------------------------- 3

fn criterion_3(gate: &mut Gate, rng: &mut Rng) {
    const SAMPLES: usize = 200_000;
    let ks = [2usize, 3, 10];
    let mut worst = 0.0f64;
    let mut pass = true;
    for case in 0..50 {
        let k = ks[case % ks.len()];
        let j = rand_class(rng, k);
        let y = one_hot(k, j);
        let alpha = DirichletParams::new(random_alpha(rng, k, 1.0, 20.0)).unwrap();
        let masked = mask_misleading(&alpha, &y).unwrap();
        let uniform = DirichletParams::new(vec![1.0; k]).unwrap();

        let mut sum = 0.0f64;
        let mut sq = 0.0f64;
        for _ in 0..SAMPLES {
            let p = dirichlet_sample(&masked, rng);
            let t = dirichlet_log_pdf(&masked, &p).unwrap() - dirichlet_log_pdf(&uniform, &p).unwrap();
            sum += t;
            sq += t * t;
        }
        let n = SAMPLES as f64;
        let se = ((sq / n - (sum / n) * (sum / n)).max(0.0) / n).sqrt();
        let dev = (kl_to_uniform(&masked) - sum / n).abs() / se.max(1e-12);
        worst = worst.max(dev);
        pass &= dev <= 3.0;
    }
    let at_one = (2..=10)
        .map(|k| kl_to_uniform(&DirichletParams::new(vec![1.0; k]).unwrap()).abs())
        .fold(0.0f64, f64::max);
    pass &= at_one <= 1e-12;
    gate.check(
        3,
        "KL Monte-Carlo oracle",
        pass,
        format!("50 cases, worst deviation {worst:.2} SE; |KL at alpha=1| = {at_one:.1e}"),
    );
}

// ---------------------------------------------------------------- 4

fn variant_of(i: usize) -> LossVariant {
    match i % 3 {
        0 => LossVariant::Type2Ml,
        1 => LossVariant::DigammaRisk,
        _ => LossVariant::SseRisk,
    }
}

fn criterion_4(gate: &mut Gate, rng: &mut Rng) {
    // Loss gradient w.r.t. evidence against central differences.
    let mut worst_loss = 0.0f64;
    for case in 0..120 {
        let k = [2usize, 3, 10][case % 3];
        let n = 1 + case % 3;
        let config = LossConfig {
            variant: variant_of(case / 3),
            kl_enabled: case % 2 == 0,
            anneal_epochs: 10,
        };
        let epoch = case % 16;
        let e: Vec<f64> = (0..n * k).map(|_| rng.uniform(0.1, 8.0)).collect();
        let mut y = vec![0.0; n * k];
        for i in 0..n {
            y[i * k + rand_class(rng, k)] = 1.0;
        }
        let e = Tensor::from_vec(&[n, k], e).unwrap();
        let y = Tensor::from_vec(&[n, k], y).unwrap();
        let grad = loss_grad_wrt_evidence(&config, &e, &y, epoch).unwrap();

        let loss_at = |e: &Tensor| -> f64 {
            let alpha = e.map(|v| v + 1.0);
            total_loss(&config, &alpha, &y, epoch).unwrap().total
        };
        let h = 1e-5;
        let mut e_pert = e.clone();
        for i in 0..n * k {
            let orig = e.data()[i];
            e_pert.data_mut()[i] = orig + h;
            let up = loss_at(&e_pert);
            e_pert.data_mut()[i] = orig - h;
            let down = loss_at(&e_pert);
            e_pert.data_mut()[i] = orig;
            worst_loss = worst_loss.max(rel_err(grad.data()[i], (up - down) / (2.0 * h)));
        }
    }

    // Full backward pass against central differences, both heads.
    let mut worst_net = 0.0f64;
    for case in 0..100 {
        let head = if case % 2 == 0 { Head::Evidence } else { Head::Softmax };
        let sizes = [
            vec![2usize, 4, 2],
            vec![3, 5, 3],
            vec![5, 4, 3, 2],
            vec![4, 6, 3],
        ][case % 4]
            .clone();
        let n = 1 + case % 3;
        let k = *sizes.last().unwrap();
        let d = sizes[0];
        let config = LossConfig {
            variant: variant_of(case),
            kl_enabled: true,
            anneal_epochs: 10,
        };
        let epoch = 3 + case % 10;

        // Reject draws with a pre-activation near 0: the step across the
        // ReLU kink would invalidate the finite difference.
        let (mut params, x, y) = loop {
            let params = NetworkParams::init(&sizes, head, rng).unwrap();
            let x: Vec<f64> = (0..n * d).map(|_| rng.uniform(0.0, 1.0)).collect();
            let x = Tensor::from_vec(&[n, d], x).unwrap();
            let mut y = vec![0.0; n * k];
            for i in 0..n {
                y[i * k + rand_class(rng, k)] = 1.0;
            }
            let y = Tensor::from_vec(&[n, k], y).unwrap();
            let trace = params.forward(x.clone()).unwrap();
            let layers = trace.pre_activations.len();
            let near_kink = trace
                .pre_activations
                .iter()
                .take(if head == Head::Evidence { layers } else { layers - 1 })
                .any(|z| z.data().iter().any(|v| v.abs() < 1e-4));
            if !near_kink {
                break (params, x, y);
            }
        };

        let objective = |params: &NetworkParams| -> f64 {
            let trace = params.forward(x.clone()).unwrap();
            match head {
                Head::Evidence => {
                    let alpha = trace.output.map(|v| v + 1.0);
                    total_loss(&config, &alpha, &y, epoch).unwrap().total
                }
                Head::Softmax => {
                    let (n, k) = trace.output.dims2();
                    let mut total = 0.0;
                    for i in 0..n {
                        for j in 0..k {
                            if y.row(i)[j] == 1.0 {
                                total -= trace.output.row(i)[j].max(1e-300).ln();
                            }
                        }
                    }
                    total / n as f64
                }
            }
        };

        let trace = params.forward(x.clone()).unwrap();
        let upstream = match head {
            Head::Evidence => loss_grad_wrt_evidence(&config, &trace.output, &y, epoch).unwrap(),
            Head::Softmax => {
                let (n, k) = trace.output.dims2();
                let mut g = Tensor::zeros(&[n, k]);
                for i in 0..n {
                    for j in 0..k {
                        if y.row(i)[j] == 1.0 {
                            g.row_mut(i)[j] =
                                -1.0 / trace.output.row(i)[j].max(1e-300) / n as f64;
                        }
                    }
                }
                g
            }
        };
        let (grads, _) = params.backward(&trace, &upstream).unwrap();

        let h = 1e-5;
        for l in 0..sizes.len() - 1 {
            for i in 0..grads.weights[l].data().len() {
                let orig = params.weights()[l].data()[i];
                params.weights_mut()[l].data_mut()[i] = orig + h;
                let up = objective(&params);
                params.weights_mut()[l].data_mut()[i] = orig - h;
                let down = objective(&params);
                params.weights_mut()[l].data_mut()[i] = orig;
                worst_net =
                    worst_net.max(rel_err(grads.weights[l].data()[i], (up - down) / (2.0 * h)));
            }
            for i in 0..grads.biases[l].len() {
                let orig = params.biases()[l][i];
                params.biases_mut()[l][i] = orig + h;
                let up = objective(&params);
                params.biases_mut()[l][i] = orig - h;
                let down = objective(&params);
                params.biases_mut()[l][i] = orig;
                worst_net = worst_net.max(rel_err(grads.biases[l][i], (up - down) / (2.0 * h)));
            }
        }
    }

    gate.check(
        4,
        "gradient checks",
        worst_loss <= 1e-6 && worst_net <= 1e-5,
        format!(
            "loss grad worst {worst_loss:.2e} (bound 1e-6, 120 configs); backward worst {worst_net:.2e} (bound 1e-5, 100 configs)"
        ),
    );
}

// ------------------------------------------------------- 5 through 9

fn mnist() -> (LabeledDataset, LabeledDataset) {
    let dir = std::env::var_os("EDL_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
        });
    let train = load_idx(
        &dir.join("train-images-idx3-ubyte.gz"),
        &dir.join("train-labels-idx1-ubyte.gz"),
    )
    .expect("MNIST training split (set EDL_MNIST_DIR)");
    let test = load_idx(
        &dir.join("t10k-images-idx3-ubyte.gz"),
        &dir.join("t10k-labels-idx1-ubyte.gz"),
    )
    .expect("MNIST test split (set EDL_MNIST_DIR)");
    (train, test)
}

fn row_entropies(probs: &Tensor) -> Vec<f64> {
    let (n, k) = probs.dims2();
    let cap = (k as f64).ln();
    (0..n)
        .map(|i| entropy_of_slice(probs.row(i)).min(cap))
        .collect()
}

/// FGSM accuracy and %-max-entropy per epsilon, attacking in batches.
fn attack_sweep(
    params: &NetworkParams,
    ds: &LabeledDataset,
    loss: &GradientLoss,
    epsilons: &[f64],
) -> Vec<(f64, f64)> {
    const CHUNK: usize = 2048;
    let (n, d) = (ds.len(), ds.feature_dim());
    let cap = (params.class_count() as f64).ln();
    epsilons
        .iter()
        .map(|&eps| {
            let mut adv = Tensor::zeros(&[n, d]);
            let mut start = 0;
            while start < n {
                let end = (start + CHUNK).min(n);
                let idx: Vec<usize> = (start..end).collect();
                let chunk = fgsm(
                    params,
                    &ds.feature_rows(&idx),
                    &ds.one_hot_rows(&idx),
                    loss,
                    eps,
                )
                .unwrap();
                for (row, i) in (start..end).enumerate() {
                    adv.row_mut(i).copy_from_slice(chunk.row(row));
                }
                start = end;
            }
            let pred = predict(params, &adv).unwrap();
            let correct = (0..n)
                .filter(|&i| predicted_class(pred.probs.row(i)) == ds.labels[i])
                .count();
            let pct_max_entropy = mean(&row_entropies(&pred.probs)) / cap;
            (correct as f64 / n as f64, pct_max_entropy)
        })
        .collect()
}

// ---------------------------------------------------------------- 10

fn run_cli(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_edl"))
        .args(args)
        .output()
        .expect("spawn edl");
    assert!(
        out.status.success(),
        "edl {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn criterion_10(gate: &mut Gate) {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let synth = "k=3,per_class=60,dim=9,separation=6";
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();

    for run in ["a", "b"] {
        run_cli(&[
            "train", "--synth", synth, "--epochs", "12", "--lr", "0.02", "--hidden", "16",
            "--seed", "7", "--out", &p(&format!("run_{run}")),
        ]);
        run_cli(&[
            "train", "--synth", synth, "--classes", "0-1", "--epochs", "12", "--lr", "0.02",
            "--hidden", "16", "--seed", "7", "--out", &p(&format!("run01_{run}")),
        ]);
        let ckpt = p(&format!("run_{run}/checkpoint.bin"));
        run_cli(&[
            "eval", "test", "--checkpoint", &ckpt, "--synth", synth, "--seed", "7",
            "--out", &p(&format!("test_{run}")),
        ]);
        run_cli(&[
            "eval", "rotate", "--checkpoint", &ckpt, "--synth", synth, "--seed", "7",
            "--index", "3", "--out", &p(&format!("rot_{run}")),
        ]);
        run_cli(&[
            "eval", "adversarial", "--checkpoint", &ckpt, "--synth", synth, "--seed", "7",
            "--eps", "0:0.4:0.2", "--out", &p(&format!("adv_{run}")),
        ]);
        run_cli(&[
            "eval", "ood", "--checkpoint", &p(&format!("run01_{run}/checkpoint.bin")),
            "--synth", synth, "--seed", "7", "--ood-classes", "2",
            "--out", &p(&format!("ood_{run}")),
        ]);
    }

    // report.json carries wall-clock seconds, so only the checkpoint
    // and every CSV artifact are expected byte-identical.
    let pairs = [
        ("run_a/checkpoint.bin", "run_b/checkpoint.bin"),
        ("run01_a/checkpoint.bin", "run01_b/checkpoint.bin"),
        ("test_a/records.csv", "test_b/records.csv"),
        ("test_a/threshold_accuracy.csv", "test_b/threshold_accuracy.csv"),
        ("test_a/entropy_cdf.csv", "test_b/entropy_cdf.csv"),
        ("rot_a/rotation.csv", "rot_b/rotation.csv"),
        ("adv_a/adversarial.csv", "adv_b/adversarial.csv"),
        ("adv_a/records.csv", "adv_b/records.csv"),
        ("ood_a/records_in.csv", "ood_b/records_in.csv"),
        ("ood_a/records_ood.csv", "ood_b/records_ood.csv"),
        ("ood_a/entropy_cdf_in.csv", "ood_b/entropy_cdf_in.csv"),
        ("ood_a/entropy_cdf_ood.csv", "ood_b/entropy_cdf_ood.csv"),
    ];
    let mut differing = Vec::new();
    for (a, b) in pairs {
        if std::fs::read(dir.join(a)).unwrap() != std::fs::read(dir.join(b)).unwrap() {
            differing.push(a);
        }
    }
    gate.check(
        10,
        "CLI determinism",
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} artifacts byte-identical across reruns", pairs.len())
        } else {
            format!("reruns differ: {differing:?}")
        },
    );
}

// ---------------------------------------------------------------- 11

fn criterion_11(gate: &mut Gate, rng: &mut Rng) {
    let points = 10_000;
    let mut worst_lg = 0.0f64;
    let mut worst_dg = 0.0f64;
    for _ in 0..points {
        let x = rng.uniform(1e-4, 100.0);
        let lg = (log_gamma(x + 1.0).unwrap() - log_gamma(x).unwrap() - x.ln()).abs();
        let dg = (digamma(x + 1.0).unwrap() - digamma(x).unwrap() - 1.0 / x).abs();
        worst_lg = worst_lg.max(lg);
        worst_dg = worst_dg.max(dg);
    }
    gate.check(
        11,
        "special-function recurrences",
        worst_lg <= 1e-10 && worst_dg <= 1e-10,
        format!(
            "{points} points in (0, 100]: worst |log_gamma identity| {worst_lg:.1e}, worst |digamma identity| {worst_dg:.1e} (bound 1e-10)"
        ),
    );
}

// ------------------------------------------------------------- gate

#[test]
fn acceptance() {
    let mut gate = Gate::default();
    let mut rng = Rng::new(20_250_818);

    criterion_1(&mut gate, &mut rng);
    criterion_2(&mut gate, &mut rng);
    criterion_3(&mut gate, &mut rng);
    criterion_4(&mut gate, &mut rng);

    let (mnist_train, mnist_test) = mnist();

    // 5: full-MNIST evidential model at defaults.
    let config = TrainConfig::default();
    let started = Instant::now();
    let (edl_full, report) = train(
        &config,
        &mnist_train,
        &mnist_test,
        &mut Rng::new(config.seed),
    )
    .unwrap();
    let train_secs = started.elapsed().as_secs_f64();
    let test_acc = report.epochs.last().unwrap().test_accuracy;
    gate.check(
        5,
        "MNIST accuracy",
        test_acc >= 0.97 && train_secs <= 1800.0,
        format!("test accuracy {:.4} (bound 0.970), trained in {train_secs:.0}s (bound 1800s)", test_acc),
    );

    // 6: confident-subset accuracy on the same model.
    let pred = predict(&edl_full, &mnist_test.features).unwrap();
    let u = pred.uncertainty.as_ref().expect("evidence head has u");
    let n = mnist_test.len();
    let overall = (0..n)
        .filter(|&i| predicted_class(pred.probs.row(i)) == mnist_test.labels[i])
        .count() as f64
        / n as f64;
    let confident: Vec<usize> = (0..n).filter(|&i| u[i] <= 0.2).collect();
    let confident_acc = if confident.is_empty() {
        0.0
    } else {
        confident
            .iter()
            .filter(|&&i| predicted_class(pred.probs.row(i)) == mnist_test.labels[i])
            .count() as f64
            / confident.len() as f64
    };
    gate.check(
        6,
        "low-uncertainty accuracy",
        !confident.is_empty() && confident_acc >= 0.99 && confident_acc > overall,
        format!(
            "accuracy {:.4} over {} samples with u <= 0.2 (bounds: >= 0.99 and > overall {:.4})",
            confident_acc,
            confident.len(),
            overall
        ),
    );

    // 7: OOD separation, digits 0-4 in-distribution vs 5-9.
    let keep: Vec<usize> = (0..5).collect();
    let ood_classes: Vec<usize> = (5..10).collect();
    let train04 = filter_classes(&mnist_train, &keep, true).unwrap();
    let test04 = filter_classes(&mnist_test, &keep, true).unwrap();
    let test59 = filter_classes(&mnist_test, &ood_classes, false).unwrap();
    let (edl04, _) = train(&config, &train04, &test04, &mut Rng::new(config.seed)).unwrap();
    let soft_config = TrainConfig {
        head: Head::Softmax,
        ..TrainConfig::default()
    };
    let (soft04, _) = train(&soft_config, &train04, &test04, &mut Rng::new(config.seed)).unwrap();

    let in_entropy = mean(&row_entropies(
        &predict(&edl04, &test04.features).unwrap().probs,
    ));
    let edl_ood_entropies = row_entropies(&predict(&edl04, &test59.features).unwrap().probs);
    let soft_ood_entropies = row_entropies(&predict(&soft04, &test59.features).unwrap().probs);
    let ood_entropy = mean(&edl_ood_entropies);
    let threshold = 0.5 * 5f64.ln();
    let frac = |es: &[f64]| es.iter().filter(|&&e| e >= threshold).count() as f64 / es.len() as f64;
    let edl_frac = frac(&edl_ood_entropies);
    let soft_frac = frac(&soft_ood_entropies);
    gate.check(
        7,
        "OOD separation",
        ood_entropy >= in_entropy + 0.5 && edl_frac > soft_frac,
        format!(
            "mean entropy {ood_entropy:.3} OOD vs {in_entropy:.3} in-dist (gap bound 0.5); high-entropy fraction {edl_frac:.3} evidential vs {soft_frac:.3} softmax"
        ),
    );

    // 8: uncertainty grows under 90-degree rotation of digit 1.
    let mut checked = 0usize;
    let mut grew = 0usize;
    for i in 0..n {
        if checked == 10 {
            break;
        }
        if mnist_test.labels[i] != 1 || predicted_class(pred.probs.row(i)) != 1 {
            continue;
        }
        let u0 = u[i];
        let rotated = rotate_image(mnist_test.features.row(i), 28, 90.0);
        let x = Tensor::from_vec(&[1, 784], rotated).unwrap();
        let p90 = predict(&edl_full, &x).unwrap();
        let u90 = p90.uncertainty.as_ref().unwrap()[0];
        checked += 1;
        if u90 - u0 >= 0.2 {
            grew += 1;
        }
    }
    gate.check(
        8,
        "rotation uncertainty",
        checked == 10 && grew >= 8,
        format!("u(90) - u(0) >= 0.2 for {grew}/{checked} correctly-classified 1s (bound 8/10)"),
    );

    // 9: FGSM sweep, evidential model vs softmax baseline.
    let (soft_full, _) = train(
        &soft_config,
        &mnist_train,
        &mnist_test,
        &mut Rng::new(soft_config.seed),
    )
    .unwrap();
    let epsilons: Vec<f64> = (0..=8).map(|i| i as f64 * 0.1).collect();
    let edl_sweep = attack_sweep(
        &edl_full,
        &mnist_test,
        &GradientLoss::Evidential(LossConfig::default()),
        &epsilons,
    );
    let soft_sweep = attack_sweep(&soft_full, &mnist_test, &GradientLoss::CrossEntropy, &epsilons);
    let monotone = edl_sweep.windows(2).all(|w| w[1].0 <= w[0].0 + 0.02);
    let entropy_rise = edl_sweep[8].1 - edl_sweep[0].1;
    let dominates = (4..=8).all(|i| edl_sweep[i].1 >= soft_sweep[i].1);
    gate.check(
        9,
        "FGSM sweep",
        monotone && entropy_rise >= 0.3 && dominates,
        format!(
            "accuracy {:.3} -> {:.3} (non-increasing within 0.02: {monotone}); %-max-entropy rise {entropy_rise:.3} (bound 0.3); evidential >= softmax entropy at eps >= 0.4: {dominates}",
            edl_sweep[0].0, edl_sweep[8].0
        ),
    );

    criterion_10(&mut gate);
    criterion_11(&mut gate, &mut rng);

    assert!(
        gate.failures.is_empty(),
        "acceptance failures:\n{}",
        gate.failures.join("\n")
    );
}
