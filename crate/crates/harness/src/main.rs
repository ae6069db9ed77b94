use advaudio_core::attack::{derive_seed, run_attack, sample_target, AttackConfig, AttackMethod};
use advaudio_core::audio::{label_index, save_wav, split_dataset, DatasetManifest, Split, Waveform, LABELS, N_CLASSES};
use advaudio_core::dsp::{fit_normalization, FrontendConfig};
use advaudio_core::metrics::white_noise_baseline;
use advaudio_core::model::{fit_with_callback, load_checkpoint, save_checkpoint, Architecture, Classifier, ClassifierModel, LabeledClip, TrainConfig};
use advaudio_harness::{
    emit_report, init_thread_pool, load_clips, make_synthetic_dataset, read_report, run_all_to_target, run_grid_search, sha256_file,
    ExperimentSpec, Grid,
};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "advaudio", version, about = "Adversarial attacks on a mel-spectrogram instrument classifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter a raw label CSV to single-label rows of the 12 classes and write a train/validation split.
    Prepare(PrepareArgs),
    /// Generate the synthetic 12-instrument dataset with a split.
    Synth(SynthArgs),
    /// Train the classifier and write a checkpoint.
    Train(TrainArgs),
    /// Run one attack configuration over the validation clips.
    Attack(AttackArgs),
    /// Grid search over attack hyperparameters with multi-seed repetition.
    Grid(GridArgs),
    /// Targeted attacks toward one class on every validation clip.
    TargetAll(TargetAllArgs),
    /// Accuracy after adding white noise at a fixed SNR.
    NoiseBaseline(NoiseArgs),
    /// Re-render Markdown and confusion files from a report JSON.
    Report(ReportArgs),
}

#[derive(Args)]
struct PrepareArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 50)]
    n_per_class: usize,
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchChoice {
    Full,
    Desk,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    audio_dir: PathBuf,
    /// Split JSON; defaults to split.json next to the manifest. Without one, every row is used.
    #[arg(long)]
    split: Option<PathBuf>,
}

impl DataArgs {
    fn split(&self) -> Result<Option<Split>> {
        let path = self.split.clone().unwrap_or_else(|| self.manifest.with_file_name("split.json"));
        if path.exists() {
            Ok(Some(Split::read_json(&path)?))
        } else if self.split.is_some() {
            bail!("split file {} not found", path.display())
        } else {
            Ok(None)
        }
    }

    fn manifest(&self) -> Result<DatasetManifest> {
        DatasetManifest::read_csv(&self.manifest).with_context(|| format!("reading {}", self.manifest.display()))
    }

    fn validation(&self) -> Result<Vec<LabeledClip>> {
        let m = self.manifest()?;
        let split = self.split()?;
        load_clips(&m, &self.audio_dir, split.as_ref().map(|s| s.validation.as_slice()))
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = ArchChoice::Full)]
    arch: ArchChoice,
    #[arg(long, default_value_t = 150)]
    epochs: usize,
    #[arg(long, default_value_t = 90)]
    decay_epoch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ClassifierArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

impl ClassifierArgs {
    fn load(&self) -> Result<(Classifier, String)> {
        let ck = load_checkpoint(&self.checkpoint).with_context(|| format!("loading {}", self.checkpoint.display()))?;
        Ok((Classifier::new(ck.model, ck.frontend)?, sha256_file(&self.checkpoint)?))
    }
}

#[derive(Args)]
struct GridValues {
    #[arg(long, value_parser = parse_method)]
    method: AttackMethod,
    #[arg(long = "lambda")]
    lambda: Vec<f64>,
    #[arg(long = "epsilon")]
    epsilon: Vec<f64>,
    #[arg(long = "eta")]
    eta: Vec<f64>,
    #[arg(long = "alpha")]
    alpha: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
}

impl GridValues {
    fn grid(&self) -> Grid {
        let d = Grid::default();
        let or = |v: &Vec<f64>, def: Vec<f64>| if v.is_empty() { def } else { v.clone() };
        Grid { lambda: or(&self.lambda, d.lambda), epsilon: or(&self.epsilon, d.epsilon), eta: or(&self.eta, d.eta), alpha: or(&self.alpha, d.alpha) }
    }
}

fn parse_method(s: &str) -> Result<AttackMethod, String> {
    s.parse().map_err(|e: advaudio_core::attack::AttackError| e.to_string())
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    clf: ClassifierArgs,
    #[command(flatten)]
    values: GridValues,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    target_seed: u64,
    /// Also write `{clip_id}.{method}.adv.wav` for each successful attack.
    #[arg(long)]
    save_wavs: bool,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    clf: ClassifierArgs,
    #[command(flatten)]
    values: GridValues,
    #[arg(long, default_value_t = 5)]
    runs: u64,
    /// First run seed; runs use consecutive seeds.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    target_seed: u64,
    #[arg(long = "min-success-frac")]
    min_success_frac: Vec<f64>,
}

impl GridArgs {
    fn spec(&self, dataset: String, sha: String) -> ExperimentSpec {
        let mut spec = ExperimentSpec::new(self.values.method, self.values.grid());
        spec.max_iters = self.values.max_iters;
        spec.seeds = (self.seed..self.seed + self.runs).collect();
        if !self.min_success_frac.is_empty() {
            spec.min_success_fracs = self.min_success_frac.clone();
        }
        spec.target_seed = self.target_seed;
        spec.dataset = dataset;
        spec.checkpoint_sha256 = Some(sha);
        spec
    }
}

#[derive(Args)]
struct TargetAllArgs {
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value = "Accordion")]
    target: String,
}

#[derive(Args)]
struct NoiseArgs {
    #[command(flatten)]
    clf: ClassifierArgs,
    #[arg(long)]
    snr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

fn train_count(n: usize, frac: f64) -> Result<usize> {
    if !(frac > 0.0 && frac < 1.0) {
        bail!("train fraction must be in (0, 1)");
    }
    Ok(((n as f64 * frac).round() as usize).clamp(1, n.saturating_sub(1)))
}

fn prepare(a: &PrepareArgs) -> Result<()> {
    let m = DatasetManifest::read_csv_filtered(&a.manifest)?;
    if m.is_empty() {
        bail!("no single-label rows of the 12 classes in {}", a.manifest.display());
    }
    std::fs::create_dir_all(&a.out_dir)?;
    let split = split_dataset(&m, train_count(m.len(), a.train_frac)?, a.seed)?;
    m.write_csv(a.out_dir.join("manifest.csv"))?;
    split.write_json(a.out_dir.join("split.json"))?;
    tracing::info!(rows = m.len(), train = split.train.len(), validation = split.validation.len(), "prepared");
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let m = make_synthetic_dataset(a.n_per_class, a.seed, &a.out_dir)?;
    let split = split_dataset(&m, train_count(m.len(), a.train_frac)?, a.seed)?;
    split.write_json(a.out_dir.join("split.json"))?;
    tracing::info!(files = m.len(), dir = %a.out_dir.display(), "synthetic dataset written");
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let m = a.data.manifest()?;
    let split = a.data.split()?.context("training needs a split (run prepare or synth first)")?;
    let train = load_clips(&m, &a.data.audio_dir, Some(&split.train))?;
    let val = load_clips(&m, &a.data.audio_dir, Some(&split.validation))?;
    let base = FrontendConfig::default();
    let waves: Vec<Waveform> = train.iter().map(|c| c.waveform.clone()).collect();
    let (mean, std) = fit_normalization(&waves, &base)?;
    let frontend = base.with_stats(mean, std);
    let arch = match a.arch {
        ArchChoice::Full => Architecture::default(),
        ArchChoice::Desk => Architecture::desk(),
    };
    let cfg = TrainConfig { epochs: a.epochs, decay_epoch: a.decay_epoch.min(a.epochs), seed: a.seed, ..TrainConfig::default() };
    std::fs::create_dir_all(&a.out_dir)?;
    let mut log = std::fs::File::create(a.out_dir.join("train_log.jsonl"))?;
    let mut io_err = None;
    let (model, _) = fit_with_callback(ClassifierModel::new(arch, a.seed), &train, Some(&val), &cfg, &frontend, |e| {
        tracing::info!(epoch = e.epoch, loss = e.train_loss, train_acc = e.train_accuracy, val_acc = ?e.val_accuracy, "epoch");
        if let Err(err) = serde_json::to_writer(&mut log, e).map_err(anyhow::Error::from).and_then(|_| Ok(writeln!(log)?)) {
            io_err.get_or_insert(err);
        }
    })?;
    if let Some(e) = io_err {
        return Err(e.context("writing training log"));
    }
    let path = a.out_dir.join("model.ckpt");
    save_checkpoint(&path, &model, &frontend)?;
    tracing::info!(checkpoint = %path.display(), "saved");
    Ok(())
}

fn attack(a: &AttackArgs) -> Result<()> {
    let (clf, _) = a.clf.load()?;
    let data = a.clf.data.validation()?;
    let g = a.values.grid();
    let points = g.points(a.values.method, a.values.max_iters);
    if points.len() != 1 {
        bail!("attack takes exactly one value per hyperparameter; use `grid` for sweeps");
    }
    let cfg = points[0];
    std::fs::create_dir_all(&a.clf.out_dir)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(a.clf.out_dir.join(format!("results.{}.jsonl", cfg.method)))?);
    let (mut ok, mut n) = (0usize, 0usize);
    for clip in &data {
        let x = clip.waveform.samples();
        let target = if cfg.method.is_targeted() {
            let p = clf.predict_samples(x)?;
            Some(sample_target(p.class_index, N_CLASSES, &clip.id, a.target_seed))
        } else {
            None
        };
        let r = run_attack(&clf, x, clip.label, target, &AttackConfig { seed: derive_seed(a.seed, &clip.id), ..cfg })?;
        serde_json::to_writer(&mut out, &serde_json::json!({ "id": clip.id, "result": r }))?;
        writeln!(out)?;
        n += 1;
        if r.success {
            ok += 1;
            if a.save_wavs {
                let adv = clip.waveform.perturbed(&r.delta)?;
                save_wav(&adv, a.clf.out_dir.join(format!("{}.{}.adv.wav", clip.id, cfg.method)))?;
            }
        }
    }
    out.flush()?;
    tracing::info!(successes = ok, samples = n, "attack finished");
    Ok(())
}

fn grid(a: &GridArgs) -> Result<()> {
    let (clf, sha) = a.clf.load()?;
    let data = a.clf.data.validation()?;
    let spec = a.spec(a.clf.data.manifest.display().to_string(), sha);
    let report = run_grid_search(&spec, &clf, &data)?;
    for f in emit_report(&report, &a.clf.out_dir)? {
        tracing::info!(file = %f.display(), "wrote");
    }
    Ok(())
}

fn target_all(a: &TargetAllArgs) -> Result<()> {
    let target = label_index(&a.target).with_context(|| format!("unknown label {:?}; expected one of {LABELS:?}", a.target))?;
    let (clf, sha) = a.grid.clf.load()?;
    let data = a.grid.clf.data.validation()?;
    let spec = a.grid.spec(a.grid.clf.data.manifest.display().to_string(), sha);
    let report = run_all_to_target(&spec, &clf, &data, target)?;
    for f in emit_report(&report, &a.grid.clf.out_dir)? {
        tracing::info!(file = %f.display(), "wrote");
    }
    Ok(())
}

fn noise(a: &NoiseArgs) -> Result<()> {
    let (clf, _) = a.clf.load()?;
    let data = a.clf.data.validation()?;
    let b = white_noise_baseline(&clf, &data, a.snr, a.seed)?;
    std::fs::create_dir_all(&a.clf.out_dir)?;
    let path = a.clf.out_dir.join("noise_baseline.json");
    std::fs::write(&path, serde_json::to_string_pretty(&b)?)?;
    tracing::info!(accuracy = b.accuracy, skipped = b.skipped.len(), "noise baseline written to {}", path.display());
    Ok(())
}

fn rerender(a: &ReportArgs) -> Result<()> {
    let report = read_report(Path::new(&a.input))?;
    emit_report(&report, &a.out_dir)?;
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    init_thread_pool()?;
    match Cli::parse().command {
        Command::Prepare(a) => prepare(&a),
        Command::Synth(a) => synth(&a),
        Command::Train(a) => train(&a),
        Command::Attack(a) => attack(&a),
        Command::Grid(a) => grid(&a),
        Command::TargetAll(a) => target_all(&a),
        Command::NoiseBaseline(a) => noise(&a),
        Command::Report(a) => rerender(&a),
    }
}
