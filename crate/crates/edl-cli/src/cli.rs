//! Flag definitions. Behavior lives in `commands`.

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "edl", version, about = "Train and probe evidential classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Train a classifier; writes checkpoint.bin, report.json, manifest.json.
    Train(TrainArgs),
    /// Probe a trained checkpoint.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
pub enum HeadArg {
    /// Evidence head: ReLU outputs, Dirichlet opinion, uncertainty mass u.
    Edl,
    /// Softmax head trained on cross-entropy (the baseline).
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
pub enum LossArg {
    /// Negative log marginal likelihood.
    Ml,
    /// Expected cross-entropy under the Dirichlet (digamma form).
    Digamma,
    /// Expected sum of squares (the default).
    Sse,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// IDX image file for the training split (.gz accepted).
    #[arg(long, requires = "data_labels")]
    pub data_images: Option<PathBuf>,
    /// IDX label file for the training split.
    #[arg(long, requires = "data_images")]
    pub data_labels: Option<PathBuf>,
    /// IDX image file for the held-out split.
    #[arg(long, requires = "test_labels")]
    pub test_images: Option<PathBuf>,
    /// IDX label file for the held-out split.
    #[arg(long, requires = "test_images")]
    pub test_labels: Option<PathBuf>,
    /// Synthetic Gaussian blobs instead of IDX files, e.g.
    /// "k=3,per_class=200,dim=4,separation=4,test_per_class=40" (all keys
    /// optional; test_per_class defaults to per_class/5).
    #[arg(
        long,
        conflicts_with_all = ["data_images", "data_labels", "test_images", "test_labels"]
    )]
    pub synth: Option<String>,
    /// Keep only these classes, relabeled to 0..n in listed order
    /// (e.g. "0-4" or "0,2,7").
    #[arg(long)]
    pub classes: Option<String>,
    #[arg(long, value_enum, default_value_t = HeadArg::Edl)]
    pub head: HeadArg,
    /// Evidential loss (edl head only).
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Epochs over which the evidential regularizer anneals 0 to 1.
    #[arg(long, default_value_t = 10)]
    pub anneal_epochs: usize,
    /// Disable the misleading-evidence regularizer.
    #[arg(long)]
    pub no_kl: bool,
    /// L2 weight decay (softmax baseline only).
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_values_t = vec![64usize, 64])]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(subcommand)]
    pub protocol: EvalCmd,
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    /// Accuracy, uncertainty-threshold curve, and entropy CDF on labeled data.
    Test(EvalTestArgs),
    /// Entropy CDFs on in-distribution vs out-of-distribution inputs.
    Ood(EvalOodArgs),
    /// Rotate one image and track prediction and uncertainty per angle.
    Rotate(EvalRotateArgs),
    /// FGSM perturbation sweep over a grid of epsilons.
    Adversarial(EvalAdvArgs),
}

#[derive(Debug, Args)]
pub struct EvalCommon {
    /// Checkpoint written by `edl train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// IDX image file to evaluate on.
    #[arg(long, requires = "data_labels")]
    pub data_images: Option<PathBuf>,
    /// IDX label file to evaluate on.
    #[arg(long, requires = "data_images")]
    pub data_labels: Option<PathBuf>,
    /// Regenerate synthetic evaluation data; pass the training run's --synth
    /// spec and --seed to get its held-out split.
    #[arg(long, conflicts_with_all = ["data_images", "data_labels"])]
    pub synth: Option<String>,
    /// Keep only these classes, relabeled to 0..n in listed order.
    #[arg(long)]
    pub classes: Option<String>,
    /// Only used to regenerate --synth data.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalTestArgs {
    #[command(flatten)]
    pub common: EvalCommon,
    /// Uncertainty thresholds, "start:stop:step" or one number.
    #[arg(long, default_value = "0:1:0.05")]
    pub thresholds: String,
}

#[derive(Debug, Args)]
pub struct EvalOodArgs {
    #[command(flatten)]
    pub common: EvalCommon,
    /// Treat these classes of the evaluation data as OOD; the complement,
    /// relabeled ascending, is the in-distribution set.
    #[arg(long, conflicts_with_all = ["ood_images", "ood_labels"])]
    pub ood_classes: Option<String>,
    /// IDX image file of OOD inputs.
    #[arg(long, requires = "ood_labels")]
    pub ood_images: Option<PathBuf>,
    /// IDX label file paired with --ood-images (labels are ignored).
    #[arg(long, requires = "ood_images")]
    pub ood_labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalRotateArgs {
    #[command(flatten)]
    pub common: EvalCommon,
    /// Which sample to rotate.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Rotation angles in degrees, "start:stop:step" or one number.
    #[arg(long, default_value = "0:180:10")]
    pub angles: String,
}

#[derive(Debug, Args)]
pub struct EvalAdvArgs {
    #[command(flatten)]
    pub common: EvalCommon,
    /// Perturbation magnitudes, "start:stop:step" or one number.
    #[arg(long, default_value = "0:0.8:0.1")]
    pub eps: String,
    /// Loss whose input gradient drives the attack (evidential checkpoints
    /// only; softmax checkpoints always use cross-entropy).
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    /// Anneal horizon of the attacked loss; the attack itself runs fully
    /// annealed.
    #[arg(long, default_value_t = 10)]
    pub anneal_epochs: usize,
}
