//! Subcommand bodies. Every command writes its artifacts into `--out`
//! and finishes with a `manifest.json`. All CSVs, SVGs, and
//! checkpoints are byte-reproducible; timing stays out of them (the
//! manifest carries timestamps, the training report wall-clock time).

use crate::cli::{
    EvalAdvArgs, EvalCommon, EvalOodArgs, EvalRotateArgs, EvalTestArgs, HeadArg, LossArg,
    TrainArgs,
};
use crate::util::{
    parse_classes, parse_grid, parse_synth_spec, sha256_file, unix_now, write_manifest,
    RunManifest,
};
use edl::adversarial::{fgsm, AttackConfig, GradientLoss};
use edl::data::{filter_classes, load_idx, synth_gaussians, LabeledDataset};
use edl::evaluation::{
    curve_csv, curves_svg, entropy_cdf, max_entropy_ratio, ood_experiment, records_csv,
    records_from_prediction, rotation_csv, rotation_sweep, threshold_accuracy_curve, CurveSeries,
    ExperimentRecord, UncertaintyScore,
};
use edl::losses::{LossConfig, LossVariant};
use edl::network::{Head, NetworkParams};
use edl::numerics::{Rng, Tensor};
use edl::training::{predict, train, TrainConfig};
use edl::{Error, Result};
use serde_json::json;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// FGSM batch size; bounds the forward/backward working set.
const ATTACK_CHUNK: usize = 2048;

fn both<'a>(
    images: &'a Option<PathBuf>,
    labels: &'a Option<PathBuf>,
    what: &str,
) -> Result<(&'a Path, &'a Path)> {
    match (images, labels) {
        (Some(i), Some(l)) => Ok((i, l)),
        _ => Err(Error::Config(format!(
            "{what} are required together (or use --synth)"
        ))),
    }
}

fn loss_variant(arg: LossArg) -> LossVariant {
    match arg {
        LossArg::Ml => LossVariant::Type2Ml,
        LossArg::Digamma => LossVariant::DigammaRisk,
        LossArg::Sse => LossVariant::SseRisk,
    }
}

/// Train/test pair from `--synth` or the two IDX pairs, then the
/// optional `--classes` filter (relabeling to 0..n in listed order).
fn train_datasets(args: &TrainArgs) -> Result<(LabeledDataset, LabeledDataset)> {
    let (mut train_set, mut test_set) = if let Some(spec_str) = &args.synth {
        let spec = parse_synth_spec(spec_str)?;
        let train = synth_gaussians(spec.k, spec.per_class, spec.dim, spec.separation, args.seed)?;
        let test = synth_gaussians(
            spec.k,
            spec.test_per_class,
            spec.dim,
            spec.separation,
            args.seed.wrapping_add(1),
        )?;
        (train, test)
    } else {
        let (ti, tl) = both(&args.data_images, &args.data_labels, "--data-images/--data-labels")?;
        let (vi, vl) = both(&args.test_images, &args.test_labels, "--test-images/--test-labels")?;
        (load_idx(ti, tl)?, load_idx(vi, vl)?)
    };
    if let Some(classes) = &args.classes {
        let keep = parse_classes(classes)?;
        train_set = filter_classes(&train_set, &keep, true)?;
        test_set = filter_classes(&test_set, &keep, true)?;
    }
    Ok((train_set, test_set))
}

pub fn cmd_train(args: &TrainArgs, argv: &[String]) -> Result<()> {
    let started = unix_now();
    let head = match args.head {
        HeadArg::Edl => Head::Evidence,
        HeadArg::Softmax => Head::Softmax,
    };
    if head == Head::Softmax && args.loss.is_some() {
        return Err(Error::Config(
            "--loss applies to --head edl only; the softmax baseline always trains on cross-entropy"
                .into(),
        ));
    }
    let config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        weight_decay: args.weight_decay,
        seed: args.seed,
        loss: LossConfig {
            variant: loss_variant(args.loss.unwrap_or(LossArg::Sse)),
            kl_enabled: !args.no_kl,
            anneal_epochs: args.anneal_epochs,
        },
        head,
        hidden_sizes: args.hidden.clone(),
        ..TrainConfig::default()
    };
    let (train_set, test_set) = train_datasets(args)?;
    let mut rng = Rng::new(args.seed);
    let (params, report) = train(&config, &train_set, &test_set, &mut rng)?;

    fs::create_dir_all(&args.out)?;
    let checkpoint_path = args.out.join("checkpoint.bin");
    params.save(&checkpoint_path)?;
    let report_json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Config(format!("report serialization: {e}")))?;
    fs::write(args.out.join("report.json"), report_json + "\n")?;

    write_manifest(
        &args.out,
        &RunManifest {
            command: argv.to_vec(),
            config: json!({
                "train_config": config,
                "train_data": train_set.provenance,
                "test_data": test_set.provenance,
            }),
            seed: args.seed,
            checkpoint_sha256: sha256_file(&checkpoint_path)?,
            created_unix: started,
            finished_unix: unix_now(),
        },
    )?;

    let last = report.epochs.last().expect("validated: epochs >= 1");
    println!(
        "trained {} epochs in {:.1}s: train acc {:.4}, test acc {:.4}, mean uncertainty {:.4}",
        report.epochs.len(),
        report.wall_clock_seconds,
        last.train_accuracy,
        last.test_accuracy,
        last.mean_uncertainty
    );
    println!("wrote {}", checkpoint_path.display());
    Ok(())
}

/// Evaluation data from `--synth` (regenerating the training run's
/// held-out split: same spec, seed+1, test_per_class rows per class) or
/// one IDX pair, plus the optional `--classes` filter.
fn eval_dataset(common: &EvalCommon) -> Result<LabeledDataset> {
    let mut ds = if let Some(spec_str) = &common.synth {
        let spec = parse_synth_spec(spec_str)?;
        synth_gaussians(
            spec.k,
            spec.test_per_class,
            spec.dim,
            spec.separation,
            common.seed.wrapping_add(1),
        )?
    } else {
        let (i, l) = both(&common.data_images, &common.data_labels, "--data-images/--data-labels")?;
        load_idx(i, l)?
    };
    if let Some(classes) = &common.classes {
        ds = filter_classes(&ds, &parse_classes(classes)?, true)?;
    }
    Ok(ds)
}

fn ensure_matches(params: &NetworkParams, ds: &LabeledDataset) -> Result<()> {
    if ds.feature_dim() != params.input_dim() {
        return Err(Error::Config(format!(
            "data features have dim {} but the checkpoint expects {}",
            ds.feature_dim(),
            params.input_dim()
        )));
    }
    if ds.class_count != params.class_count() {
        return Err(Error::Config(format!(
            "data has {} classes but the checkpoint expects {}",
            ds.class_count,
            params.class_count()
        )));
    }
    Ok(())
}

fn label_accuracy(records: &[ExperimentRecord]) -> f64 {
    let correct = records
        .iter()
        .filter(|r| Some(r.pred_label) == r.true_label)
        .count();
    correct as f64 / records.len() as f64
}

fn mean_entropy(records: &[ExperimentRecord]) -> f64 {
    records.iter().map(|r| r.entropy).sum::<f64>() / records.len() as f64
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn cmd_eval_test(args: &EvalTestArgs, argv: &[String]) -> Result<()> {
    let started = unix_now();
    let common = &args.common;
    let params = NetworkParams::load(&common.checkpoint)?;
    let sha = sha256_file(&common.checkpoint)?;
    let ds = eval_dataset(common)?;
    ensure_matches(&params, &ds)?;
    let provenance = format!("checkpoint sha256={sha} data={}", ds.provenance);

    let pred = predict(&params, &ds.features)?;
    let records = records_from_prediction(&pred, Some(&ds.labels))?;
    let thresholds = parse_grid(&args.thresholds)?;
    let (score, series_name) = match params.head() {
        Head::Evidence => (UncertaintyScore::EvidentialU, "u <= threshold"),
        Head::Softmax => (
            UncertaintyScore::NormalizedEntropy,
            "normalized entropy <= threshold",
        ),
    };
    let acc_curve = threshold_accuracy_curve(&records, &thresholds, score, series_name)?;
    let cdf = entropy_cdf(&records, "test")?;

    fs::create_dir_all(&common.out)?;
    fs::write(common.out.join("records.csv"), records_csv(&records, &provenance)?)?;
    fs::write(
        common.out.join("threshold_accuracy.csv"),
        curve_csv(&acc_curve, &provenance),
    )?;
    fs::write(
        common.out.join("threshold_accuracy.svg"),
        curves_svg(&[&acc_curve], "accuracy vs uncertainty threshold")?,
    )?;
    fs::write(common.out.join("entropy_cdf.csv"), curve_csv(&cdf, &provenance))?;
    fs::write(
        common.out.join("entropy_cdf.svg"),
        curves_svg(&[&cdf], "empirical entropy CDF")?,
    )?;
    write_manifest(
        &common.out,
        &RunManifest {
            command: argv.to_vec(),
            config: json!({
                "protocol": "test",
                "thresholds": args.thresholds,
                "data": ds.provenance,
            }),
            seed: common.seed,
            checkpoint_sha256: sha,
            created_unix: started,
            finished_unix: unix_now(),
        },
    )?;
    println!(
        "evaluated {} samples: accuracy {:.4}, mean entropy {:.4} nats",
        records.len(),
        label_accuracy(&records),
        mean_entropy(&records)
    );
    Ok(())
}

pub fn cmd_eval_ood(args: &EvalOodArgs, argv: &[String]) -> Result<()> {
    let started = unix_now();
    let common = &args.common;
    let params = NetworkParams::load(&common.checkpoint)?;
    let sha = sha256_file(&common.checkpoint)?;

    let (in_set, ood_set) = match (&args.ood_classes, &args.ood_images, &args.ood_labels) {
        (Some(spec), None, None) => {
            if common.classes.is_some() {
                return Err(Error::Config(
                    "--classes cannot be combined with --ood-classes; the in-distribution set is the complement".into(),
                ));
            }
            let pool = eval_dataset(common)?;
            let ood_keep = parse_classes(spec)?;
            for &c in &ood_keep {
                if c >= pool.class_count {
                    return Err(Error::Config(format!(
                        "ood class {c} out of range for {} classes",
                        pool.class_count
                    )));
                }
            }
            let in_keep: Vec<usize> = (0..pool.class_count)
                .filter(|c| !ood_keep.contains(c))
                .collect();
            if in_keep.is_empty() {
                return Err(Error::Config(
                    "every class marked OOD; nothing left in-distribution".into(),
                ));
            }
            // OOD rows keep their raw labels (unused); the complement is
            // relabeled ascending, matching a training run whose
            // --classes listed those classes in ascending order.
            let ood = filter_classes(&pool, &ood_keep, false)?;
            let in_set = filter_classes(&pool, &in_keep, true)?;
            (in_set, ood)
        }
        (None, Some(im), Some(lb)) => (eval_dataset(common)?, load_idx(im, lb)?),
        (None, None, None) => Err(Error::Config(
            "need --ood-classes or --ood-images/--ood-labels".into(),
        ))?,
        _ => Err(Error::Config(
            "--ood-images/--ood-labels go together and exclude --ood-classes".into(),
        ))?,
    };
    ensure_matches(&params, &in_set)?;
    if ood_set.feature_dim() != params.input_dim() {
        return Err(Error::Config(format!(
            "ood features have dim {} but the checkpoint expects {}",
            ood_set.feature_dim(),
            params.input_dim()
        )));
    }

    let in_pred = predict(&params, &in_set.features)?;
    let in_records = records_from_prediction(&in_pred, Some(&in_set.labels))?;
    let in_cdf = entropy_cdf(&in_records, "in_distribution")?;
    let (ood_records, ood_cdf) = ood_experiment(&params, &ood_set)?;

    let in_provenance = format!("checkpoint sha256={sha} data={}", in_set.provenance);
    let ood_provenance = format!("checkpoint sha256={sha} data={}", ood_set.provenance);
    fs::create_dir_all(&common.out)?;
    fs::write(
        common.out.join("records_in.csv"),
        records_csv(&in_records, &in_provenance)?,
    )?;
    fs::write(
        common.out.join("records_ood.csv"),
        records_csv(&ood_records, &ood_provenance)?,
    )?;
    fs::write(
        common.out.join("entropy_cdf_in.csv"),
        curve_csv(&in_cdf, &in_provenance),
    )?;
    fs::write(
        common.out.join("entropy_cdf_ood.csv"),
        curve_csv(&ood_cdf, &ood_provenance),
    )?;
    fs::write(
        common.out.join("entropy_cdf.svg"),
        curves_svg(&[&in_cdf, &ood_cdf], "entropy CDF: in-distribution vs OOD")?,
    )?;
    let gap = mean_entropy(&ood_records) - mean_entropy(&in_records);
    write_manifest(
        &common.out,
        &RunManifest {
            command: argv.to_vec(),
            config: json!({
                "protocol": "ood",
                "in_data": in_set.provenance,
                "ood_data": ood_set.provenance,
                "mean_entropy_gap_nats": gap,
            }),
            seed: common.seed,
            checkpoint_sha256: sha,
            created_unix: started,
            finished_unix: unix_now(),
        },
    )?;
    println!(
        "in-distribution: {} samples, accuracy {:.4}, mean entropy {:.4} nats",
        in_records.len(),
        label_accuracy(&in_records),
        mean_entropy(&in_records)
    );
    println!(
        "ood: {} samples, mean entropy {:.4} nats (gap {:.4})",
        ood_records.len(),
        mean_entropy(&ood_records),
        gap
    );
    Ok(())
}

pub fn cmd_eval_rotate(args: &EvalRotateArgs, argv: &[String]) -> Result<()> {
    let started = unix_now();
    let common = &args.common;
    let params = NetworkParams::load(&common.checkpoint)?;
    let sha = sha256_file(&common.checkpoint)?;
    let ds = eval_dataset(common)?;
    if ds.feature_dim() != params.input_dim() {
        return Err(Error::Config(format!(
            "data features have dim {} but the checkpoint expects {}",
            ds.feature_dim(),
            params.input_dim()
        )));
    }
    if args.index >= ds.len() {
        return Err(Error::Config(format!(
            "--index {} out of range for {} samples",
            args.index,
            ds.len()
        )));
    }
    let image = ds.features.row(args.index).to_vec();
    let angles = parse_grid(&args.angles)?;
    let points = rotation_sweep(&params, &image, &angles)?;
    let provenance = format!(
        "checkpoint sha256={sha} data={} index={} label={}",
        ds.provenance, args.index, ds.labels[args.index]
    );

    let k = params.class_count();
    let mut series = Vec::with_capacity(k + 1);
    for j in 0..k {
        series.push(CurveSeries::new(
            format!("p_hat_{j}"),
            "rotation (degrees)",
            "probability / u",
            points.iter().map(|p| (p.angle, Some(p.p_hat[j]))).collect(),
        )?);
    }
    if points.iter().all(|p| p.u.is_some()) {
        series.push(CurveSeries::new(
            "u",
            "rotation (degrees)",
            "probability / u",
            points.iter().map(|p| (p.angle, p.u)).collect(),
        )?);
    }
    let refs: Vec<&CurveSeries> = series.iter().collect();

    fs::create_dir_all(&common.out)?;
    fs::write(
        common.out.join("rotation.csv"),
        rotation_csv(&points, &provenance)?,
    )?;
    fs::write(
        common.out.join("rotation.svg"),
        curves_svg(&refs, "prediction under rotation")?,
    )?;
    write_manifest(
        &common.out,
        &RunManifest {
            command: argv.to_vec(),
            config: json!({
                "protocol": "rotate",
                "index": args.index,
                "true_label": ds.labels[args.index],
                "angles": args.angles,
                "data": ds.provenance,
            }),
            seed: common.seed,
            checkpoint_sha256: sha,
            created_unix: started,
            finished_unix: unix_now(),
        },
    )?;
    let first = points.first().expect("validated: angles non-empty");
    let last = points.last().expect("validated: angles non-empty");
    println!(
        "rotated sample {} (label {}) through {} angles: pred {} at {}°, pred {} at {}°",
        args.index,
        ds.labels[args.index],
        points.len(),
        first.pred_label,
        first.angle,
        last.pred_label,
        last.angle
    );
    if let (Some(u0), Some(u1)) = (first.u, last.u) {
        println!("u: {:.4} at {}°, {:.4} at {}°", u0, first.angle, u1, last.angle);
    }
    Ok(())
}

/// FGSM over the whole dataset in fixed-size batches.
fn attack_in_chunks(
    params: &NetworkParams,
    ds: &LabeledDataset,
    loss: &GradientLoss,
    epsilon: f64,
) -> Result<Tensor> {
    let (n, d) = (ds.len(), ds.feature_dim());
    let mut out = Tensor::zeros(&[n, d]);
    let mut start = 0;
    while start < n {
        let end = (start + ATTACK_CHUNK).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let adv = fgsm(
            params,
            &ds.feature_rows(&idx),
            &ds.one_hot_rows(&idx),
            loss,
            epsilon,
        )?;
        for (row, i) in (start..end).enumerate() {
            out.row_mut(i).copy_from_slice(adv.row(row));
        }
        start = end;
    }
    Ok(out)
}

pub fn cmd_eval_adversarial(args: &EvalAdvArgs, argv: &[String]) -> Result<()> {
    let started = unix_now();
    let common = &args.common;
    let params = NetworkParams::load(&common.checkpoint)?;
    let sha = sha256_file(&common.checkpoint)?;
    let ds = eval_dataset(common)?;
    ensure_matches(&params, &ds)?;

    let loss_for_gradient = match params.head() {
        Head::Evidence => GradientLoss::Evidential(LossConfig {
            variant: loss_variant(args.loss.unwrap_or(LossArg::Sse)),
            kl_enabled: true,
            anneal_epochs: args.anneal_epochs,
        }),
        Head::Softmax => {
            if args.loss.is_some() {
                return Err(Error::Config(
                    "--loss applies to evidential checkpoints; softmax attacks use cross-entropy"
                        .into(),
                ));
            }
            GradientLoss::CrossEntropy
        }
    };
    let attack = AttackConfig {
        epsilons: parse_grid(&args.eps)?,
        loss_for_gradient,
    };
    attack.validate()?;
    let provenance = format!("checkpoint sha256={sha} data={}", ds.provenance);

    let mut rows: Vec<(f64, f64, f64, Option<f64>)> = Vec::with_capacity(attack.epsilons.len());
    let mut last_records = Vec::new();
    for &eps in &attack.epsilons {
        let adv = attack_in_chunks(&params, &ds, &attack.loss_for_gradient, eps)?;
        let pred = predict(&params, &adv)?;
        let records = records_from_prediction(&pred, Some(&ds.labels))?;
        let mean_u = pred
            .uncertainty
            .as_ref()
            .map(|u| u.iter().sum::<f64>() / u.len() as f64);
        rows.push((
            eps,
            label_accuracy(&records),
            max_entropy_ratio(&records)?,
            mean_u,
        ));
        last_records = records;
    }

    let mut csv = String::new();
    let _ = writeln!(csv, "# {provenance}");
    let _ = writeln!(csv, "epsilon,accuracy,max_entropy_ratio,mean_u");
    for &(eps, acc, ratio, mean_u) in &rows {
        let _ = writeln!(csv, "{eps},{acc},{ratio},{}", fmt_opt(mean_u));
    }

    let acc_series = CurveSeries::new(
        "accuracy",
        "epsilon",
        "fraction",
        rows.iter().map(|r| (r.0, Some(r.1))).collect(),
    )?;
    let ratio_series = CurveSeries::new(
        "max_entropy_ratio",
        "epsilon",
        "fraction",
        rows.iter().map(|r| (r.0, Some(r.2))).collect(),
    )?;
    let u_series = if rows.iter().all(|r| r.3.is_some()) {
        Some(CurveSeries::new(
            "mean_u",
            "epsilon",
            "fraction",
            rows.iter().map(|r| (r.0, r.3)).collect(),
        )?)
    } else {
        None
    };
    let mut refs = vec![&acc_series, &ratio_series];
    if let Some(s) = &u_series {
        refs.push(s);
    }

    let max_eps = *attack.epsilons.last().expect("validated: non-empty");
    fs::create_dir_all(&common.out)?;
    fs::write(common.out.join("adversarial.csv"), csv)?;
    fs::write(
        common.out.join("adversarial.svg"),
        curves_svg(&refs, "FGSM perturbation sweep")?,
    )?;
    fs::write(
        common.out.join("records.csv"),
        records_csv(
            &last_records,
            &format!("{provenance} epsilon={max_eps}"),
        )?,
    )?;
    write_manifest(
        &common.out,
        &RunManifest {
            command: argv.to_vec(),
            config: json!({
                "protocol": "adversarial",
                "eps": args.eps,
                "loss_for_gradient": attack.loss_for_gradient,
                "data": ds.provenance,
            }),
            seed: common.seed,
            checkpoint_sha256: sha,
            created_unix: started,
            finished_unix: unix_now(),
        },
    )?;

    let first = rows.first().expect("validated: non-empty");
    let last = rows.last().expect("validated: non-empty");
    println!(
        "fgsm over {} epsilons: accuracy {:.4} at eps={}, {:.4} at eps={}",
        rows.len(),
        first.1,
        first.0,
        last.1,
        last.0
    );
    println!(
        "max-entropy ratio {:.4} -> {:.4}{}",
        first.2,
        last.2,
        last.3
            .map(|u| format!(", mean u {:.4} -> {:.4}", first.3.unwrap_or(f64::NAN), u))
            .unwrap_or_default()
    );
    Ok(())
}
