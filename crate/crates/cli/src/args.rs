//! Command-line surface. Override flags are optional so that an unset flag
//! leaves the config file's value in place; each help line states the
//! built-in default.

use std::path::PathBuf;

use azclip::loss::MarginMode;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "azclip",
    version,
    about = "Dual-encoder image-text retrieval over precomputed embeddings",
    long_about = "Dual-encoder image-text retrieval over precomputed embeddings.\n\n\
                  Queries are embedding vectors, not natural-language text: captions must be \
                  encoded by an external text encoder before they reach this tool."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic paired dataset
    Synth(SynthArgs),
    /// Validate a caption manifest against image and text embedding files
    Ingest(IngestArgs),
    /// Train the projection heads
    Train(TrainArgs),
    /// Project image embeddings into a retrieval index
    Index(IndexArgs),
    /// Retrieve the top-k images for one text embedding
    Query(QueryArgs),
    /// Score ranked retrieval against relevance judgments
    Eval(EvalArgs),
    /// Print the effective configuration as JSON
    PrintConfig(PrintConfigArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// JSON run configuration; flags override its values
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for data synthesis, initialization and shuffling [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DataOverrides {
    /// Images to synthesize [default: 200]
    #[arg(long)]
    pub n_images: Option<usize>,
    /// Captions per image [default: 5]
    #[arg(long)]
    pub captions_per_image: Option<usize>,
    /// Dimension of the shared synthetic latent [default: 16]
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Image feature dimension [default: 64]
    #[arg(long)]
    pub img_dim: Option<usize>,
    /// Text feature dimension [default: 48]
    #[arg(long)]
    pub txt_dim: Option<usize>,
    /// Standard deviation of feature noise [default: 0.05]
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Fraction of images in the validation split [default: 0.1]
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Fraction of images in the test split [default: 0.1]
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Seed for the synthetic feature maps, if different from --seed [default: none]
    #[arg(long)]
    pub map_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AugmentOverrides {
    /// Standard deviation of training-image jitter [default: 0]
    #[arg(long)]
    pub augment_sigma: Option<f64>,
    /// Jittered copies per training image, 0 disables [default: 0]
    #[arg(long)]
    pub augment_copies: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MarginModeArg {
    Literal,
    HardNegative,
}

impl From<MarginModeArg> for MarginMode {
    fn from(m: MarginModeArg) -> Self {
        match m {
            MarginModeArg::Literal => MarginMode::Literal,
            MarginModeArg::HardNegative => MarginMode::HardNegative,
        }
    }
}

#[derive(Debug, Args)]
pub struct ModelOverrides {
    /// Shared embedding dimension [default: 32]
    #[arg(long)]
    pub shared_dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LossOverrides {
    /// Weight of the margin penalty [default: 1]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Margin m [default: 0.2]
    #[arg(long)]
    pub margin: Option<f64>,
    /// Temperature dividing cosine similarities [default: 1]
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Margin penalty form [default: literal]
    #[arg(long, value_enum)]
    pub margin_mode: Option<MarginModeArg>,
    /// Average image-to-text and text-to-image cross-entropy [default: false]
    #[arg(long)]
    pub symmetric: Option<bool>,
}

#[derive(Debug, Args)]
pub struct TrainOverrides {
    /// Training epochs [default: 30]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Pairs per batch [default: 64]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Peak learning rate [default: 0.001]
    #[arg(long)]
    pub lr_max: Option<f64>,
    /// Final learning rate of the cosine decay [default: 0]
    #[arg(long)]
    pub lr_min: Option<f64>,
    /// Linear warmup steps [default: 50]
    #[arg(long)]
    pub warmup_steps: Option<u64>,
    /// Decoupled weight decay [default: 0.01]
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// AdamW first-moment decay [default: 0.9]
    #[arg(long)]
    pub beta1: Option<f64>,
    /// AdamW second-moment decay [default: 0.999]
    #[arg(long)]
    pub beta2: Option<f64>,
    /// AdamW epsilon [default: 1e-8]
    #[arg(long)]
    pub eps: Option<f64>,
    /// Drop the final short batch of each epoch [default: true]
    #[arg(long)]
    pub drop_last: Option<bool>,
}

#[derive(Debug, Args)]
pub struct EvalOverrides {
    /// Label of the model column in the results table [default: dual-encoder]
    #[arg(long)]
    pub model_name: Option<String>,
    /// Label of the dataset column, defaults to the text file's stem [default: none]
    #[arg(long)]
    pub dataset_name: Option<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub data: DataOverrides,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Caption manifest, one JSON record per line
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    /// Image embedding file
    #[arg(long, value_name = "FILE")]
    pub images: PathBuf,
    /// Text embedding file, row r holding the caption on manifest line r
    #[arg(long, value_name = "FILE")]
    pub texts: PathBuf,
    /// Required captions per image [default: 5]
    #[arg(long)]
    pub captions_per_image: Option<usize>,
    /// Accept images whose caption count differs from --captions-per-image
    #[arg(long)]
    pub allow_ragged: bool,
    /// Output directory for the dataset summary and judgments
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Directory holding images.azeb, texts.azeb and manifest.jsonl
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Output directory for the checkpoint, log and report
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub augment: AugmentOverrides,
    #[command(flatten)]
    pub model: ModelOverrides,
    #[command(flatten)]
    pub loss: LossOverrides,
    #[command(flatten)]
    pub train: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Trained checkpoint
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Image embedding file
    #[arg(long, value_name = "FILE")]
    pub images: PathBuf,
    /// Index file to write
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Index file built by `index`
    #[arg(long, value_name = "FILE")]
    pub index: PathBuf,
    /// Checkpoint the index was built from
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Text embedding as an inline JSON array, e.g. '[0.1, -0.3, ...]'
    #[arg(long, conflicts_with = "texts")]
    pub vector: Option<String>,
    /// Text embedding file to take the query row from
    #[arg(long, value_name = "FILE", requires = "row_ref")]
    pub texts: Option<PathBuf>,
    /// Zero-based row in --texts
    #[arg(long, group = "row_ref")]
    pub row: Option<usize>,
    /// Text id in --texts
    #[arg(long, group = "row_ref", conflicts_with = "row")]
    pub text_id: Option<String>,
    /// Hits to return [default: 10]
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Index file built by `index`
    #[arg(long, value_name = "FILE")]
    pub index: PathBuf,
    /// Checkpoint the index was built from
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Text embedding file holding every judged query
    #[arg(long, value_name = "FILE")]
    pub texts: PathBuf,
    /// Relevance judgments, one JSON record per line
    #[arg(long, value_name = "FILE")]
    pub judgments: PathBuf,
    /// Metrics report to write
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[command(flatten)]
    pub eval: EvalOverrides,
}

#[derive(Debug, Args)]
pub struct PrintConfigArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub data: DataOverrides,
    #[command(flatten)]
    pub augment: AugmentOverrides,
    #[command(flatten)]
    pub model: ModelOverrides,
    #[command(flatten)]
    pub loss: LossOverrides,
    #[command(flatten)]
    pub train: TrainOverrides,
    #[command(flatten)]
    pub eval: EvalOverrides,
}

fn set<T: Clone>(slot: &mut T, value: &Option<T>) {
    if let Some(v) = value {
        *slot = v.clone();
    }
}

impl ConfigArg {
    pub fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.seed, &self.seed);
    }
}

impl DataOverrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let d = &mut cfg.data;
        set(&mut d.n_images, &self.n_images);
        set(&mut d.captions_per_image, &self.captions_per_image);
        set(&mut d.latent_dim, &self.latent_dim);
        set(&mut d.img_dim, &self.img_dim);
        set(&mut d.txt_dim, &self.txt_dim);
        set(&mut d.noise_sigma, &self.noise_sigma);
        set(&mut d.val_fraction, &self.val_fraction);
        set(&mut d.test_fraction, &self.test_fraction);
        if self.map_seed.is_some() {
            d.map_seed = self.map_seed;
        }
    }
}

impl AugmentOverrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.data.augment_sigma, &self.augment_sigma);
        set(&mut cfg.data.augment_copies, &self.augment_copies);
    }
}

impl ModelOverrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.model.shared_dim, &self.shared_dim);
    }
}

impl LossOverrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let l = &mut cfg.loss;
        set(&mut l.lambda, &self.lambda);
        set(&mut l.margin, &self.margin);
        set(&mut l.temperature, &self.temperature);
        set(&mut l.symmetric, &self.symmetric);
        if let Some(m) = self.margin_mode {
            l.margin_mode = m.into();
        }
    }
}

impl TrainOverrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let t = &mut cfg.train;
        set(&mut t.epochs, &self.epochs);
        set(&mut t.batch_size, &self.batch_size);
        set(&mut t.lr_max, &self.lr_max);
        set(&mut t.lr_min, &self.lr_min);
        set(&mut t.warmup_steps, &self.warmup_steps);
        set(&mut t.weight_decay, &self.weight_decay);
        set(&mut t.beta1, &self.beta1);
        set(&mut t.beta2, &self.beta2);
        set(&mut t.eps, &self.eps);
        set(&mut t.drop_last, &self.drop_last);
    }
}

impl EvalOverrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.eval.model_name, &self.model_name);
        if self.dataset_name.is_some() {
            cfg.eval.dataset_name = self.dataset_name.clone();
        }
    }
}
