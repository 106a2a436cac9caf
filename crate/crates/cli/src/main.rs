use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use spikehar::config::{KvConfig, PipelineConfig};
use spikehar::encoder::read_spikes;
use spikehar::ingest::{load_csv, resample, slice_windows, write_csv, CHANNEL_NAMES};
use spikehar::pipeline::{self, recgym, synth};
use spikehar::profiler::{baseline_rows, render_csv, render_text, EnergyModel};
use spikehar::snn::{classify, read_model, run_dense, run_event_driven, write_model};
use spikehar::trainer::{train, Sample};

#[derive(Parser, Debug)]
#[command(name = "spikehar", version, about = "Spiking activity recognition from wearable sensor data")]
struct Cli {
    /// key=value config file; SPIKEHAR_<KEY> variables and flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic multi-subject dataset
    Synth(SynthArgs),
    /// Resample recordings and report their windows
    Ingest(DataArgs),
    /// Encode recordings into spike files
    Encode(DataArgs),
    /// Train a model on encoded windows
    Train(TrainArgs),
    /// Classify spike files with a model
    Infer(InferArgs),
    /// Count operations and estimate energy, latency and EDP
    Profile(ProfileArgs),
    /// Ingest, encode, cross-validate, train and profile in one run
    Pipeline(DataArgs),
    /// Convert a RecGym CSV into per-session recordings
    Recgym(RecgymArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 4)]
    subjects: usize,
    /// Windows per class per subject
    #[arg(long, default_value_t = 20)]
    windows: usize,
    #[arg(long, default_value_t = 1.0)]
    window_s: f64,
    #[arg(long, default_value_t = 100.0)]
    rate_hz: f64,
    #[arg(long, default_value_t = 2e-5)]
    noise: f64,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Directory of recording CSVs
    #[arg(long)]
    data: Option<PathBuf>,
    /// Source sample rate, overriding file headers
    #[arg(long)]
    rate_hz: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Surrogate {
    Exp,
    Rect,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Directory produced by `encode`
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Target count of the true class, as a fraction of the window length
    #[arg(long)]
    loss_true: Option<f64>,
    /// Target count of the other classes, as a fraction of the window length
    #[arg(long)]
    loss_false: Option<f64>,
    #[arg(long, value_enum)]
    surrogate: Option<Surrogate>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Keep delays fixed at zero
    #[arg(long)]
    no_delays: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Backend {
    Event,
    Dense,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    /// A `.spk` file or a directory produced by `encode`
    #[arg(long)]
    spikes: PathBuf,
    #[arg(long, value_enum, default_value_t = Backend::Event)]
    backend: Backend,
}

#[derive(Args, Debug)]
struct ProfileArgs {
    #[arg(long)]
    model: PathBuf,
    /// A `.spk` file or a directory produced by `encode`
    #[arg(long)]
    spikes: PathBuf,
    /// key=value file with e_sop, e_update, p_static (all default to 0)
    #[arg(long)]
    energy_config: Option<PathBuf>,
    /// Add the 1 ms per-timestep host injection wait to the latency
    #[arg(long)]
    injection_stall: bool,
}

#[derive(Args, Debug)]
struct RecgymArgs {
    /// The RecGym CSV file
    #[arg(long)]
    data: PathBuf,
    /// Sample rate of the file; it is not stored in the data
    #[arg(long)]
    rate_hz: f64,
    #[arg(long, default_value = "wrist")]
    position: String,
}

fn build_config(cli: &Cli, overrides: &[(&str, String)]) -> Result<PipelineConfig> {
    let mut kv = match &cli.config {
        Some(path) => KvConfig::load(path)?,
        None => KvConfig::default(),
    };
    kv.apply_env(std::env::vars());
    if let Some(seed) = cli.seed {
        kv.set("seed", seed);
    }
    if let Some(out) = &cli.out {
        kv.set("out_dir", out.display());
    }
    for (k, v) in overrides {
        kv.set(k, v);
    }
    Ok(PipelineConfig::from_kv(&kv)?)
}

fn data_overrides(args: &DataArgs) -> Vec<(&'static str, String)> {
    let mut o = Vec::new();
    if let Some(d) = &args.data {
        o.push(("data_dir", d.display().to_string()));
    }
    if let Some(r) = args.rate_hz {
        o.push(("source_rate_hz", r.to_string()));
    }
    o
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Single `.spk` files get their stem as id and no label.
fn load_spikes(path: &Path) -> Result<Vec<(Sample, bool)>> {
    if path.is_dir() {
        return Ok(pipeline::read_encoded(path)?.into_iter().map(|s| (s, true)).collect());
    }
    let spikes = read_spikes(path)?;
    let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
    Ok(vec![(Sample { id, subject: String::new(), label: 0, spikes }, false)])
}

fn cmd_synth(cli: &Cli, args: &SynthArgs) -> Result<()> {
    let cfg = build_config(cli, &[])?;
    let spec = synth::SyntheticSpec {
        class_count: args.classes,
        subjects: args.subjects,
        windows_per_class: args.windows,
        window_s: args.window_s,
        rate_hz: args.rate_hz,
        noise: args.noise,
        seed: cfg.seed,
        ..synth::SyntheticSpec::default()
    };
    let data = synth::generate(&spec)?;
    synth::write_dataset(&data, &cfg.out_dir)?;
    println!(
        "wrote {} recordings ({} windows) to {}",
        data.recordings.len(),
        spec.class_count * spec.subjects * spec.windows_per_class,
        cfg.out_dir.display()
    );
    Ok(())
}

fn cmd_ingest(cli: &Cli, args: &DataArgs) -> Result<()> {
    let cfg = build_config(cli, &data_overrides(args))?;
    create_dir(&cfg.out_dir)?;
    let mut files: Vec<PathBuf> = fs::read_dir(&cfg.data_dir)
        .with_context(|| format!("reading {}", cfg.data_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv") && !p.ends_with(synth::GENERATOR_FILE))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("ingest: no .csv recordings in {}", cfg.data_dir.display());
    }
    let mut listing = String::from("id,subject,label,start\n");
    for path in files {
        let rec = resample(&load_csv(&path, &CHANNEL_NAMES, cfg.source_rate_hz)?, &cfg.resample)?;
        let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        write_csv(&rec, &cfg.out_dir.join(format!("{stem}.csv")))?;
        let windows = slice_windows(&rec, &cfg.window)?;
        println!("{stem}: {} samples at {} Hz, {} windows", rec.len(), rec.sample_rate_hz, windows.len());
        for (i, w) in windows.iter().enumerate() {
            listing.push_str(&format!("{stem}-{i:05},{},{},{}\n", rec.subject_id, w.label, w.start));
        }
    }
    write_file(&cfg.out_dir.join("windows.csv"), listing)
}

fn cmd_encode(cli: &Cli, args: &DataArgs) -> Result<()> {
    let cfg = build_config(cli, &data_overrides(args))?;
    let records = pipeline::ingest_dir(&cfg).map_err(|e| e.in_stage("ingest"))?;
    let samples = pipeline::encode_records(&records, &pipeline::bank_map(&cfg)?)?;
    let dir = cfg.out_dir.join(pipeline::SPIKES_DIR);
    pipeline::write_encoded(&samples, &dir)?;
    let spikes: usize = samples.iter().map(|s| s.spikes.count_ones()).sum();
    println!("encoded {} windows ({spikes} spikes) into {}", samples.len(), dir.display());
    Ok(())
}

fn cmd_train(cli: &Cli, args: &TrainArgs) -> Result<()> {
    let mut o = Vec::new();
    if let Some(v) = args.epochs {
        o.push(("epochs", v.to_string()));
    }
    if let Some(v) = args.lr {
        o.push(("lr", v.to_string()));
    }
    if let Some(v) = args.loss_true {
        o.push(("loss_true", v.to_string()));
    }
    if let Some(v) = args.loss_false {
        o.push(("loss_false", v.to_string()));
    }
    if let Some(v) = args.surrogate {
        o.push(("surrogate", format!("{v:?}").to_lowercase()));
    }
    if let Some(v) = args.alpha {
        o.push(("alpha", v.to_string()));
    }
    if args.no_delays {
        o.push(("train_delays", "false".into()));
    }
    let cfg = build_config(cli, &o)?;
    let samples = pipeline::read_encoded(&args.data)?;
    let classes = pipeline::class_count(&cfg, &samples)?;
    let init = pipeline::initial_network(&cfg, classes)?;
    let mut loss = pipeline::loss_spec(&cfg, samples[0].spikes.timesteps(), classes);
    if cfg.weight_classes {
        let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
        loss.class_weights = spikehar::trainer::class_weights(&labels, classes);
    }
    let outcome = train(&init, &samples, &cfg.train, &cfg.surrogate, &loss)?;
    let model = outcome.network.to_model()?;
    create_dir(&cfg.out_dir)?;
    write_model(&model, &cfg.out_dir.join(pipeline::MODEL_FILE))?;
    let mut curve = String::from("epoch,loss\n");
    for (e, l) in outcome.loss_curve.iter().enumerate() {
        curve.push_str(&format!("{e},{l}\n"));
    }
    write_file(&cfg.out_dir.join(pipeline::LOSS_FILE), curve)?;
    let accuracy = spikehar::trainer::evaluate(&model, &samples)?;
    println!(
        "trained {} epochs on {} windows; final loss {:.4}, train accuracy {:.4}",
        cfg.train.epochs,
        samples.len(),
        outcome.loss_curve.last().copied().unwrap_or(f64::NAN),
        accuracy
    );
    Ok(())
}

fn cmd_infer(cli: &Cli, args: &InferArgs) -> Result<()> {
    let cfg = build_config(cli, &[])?;
    let model = read_model(&args.model)?;
    let samples = load_spikes(&args.spikes)?;
    let mut table = String::from("id,predicted,label\n");
    let mut labelled = 0usize;
    let mut correct = 0usize;
    for (s, has_label) in &samples {
        let run = match args.backend {
            Backend::Event => run_event_driven(&model, &s.spikes)?,
            Backend::Dense => run_dense(&model, &s.spikes)?,
        };
        let predicted = classify(&run.counts)?;
        if *has_label {
            labelled += 1;
            correct += (predicted == s.label) as usize;
            table.push_str(&format!("{},{predicted},{}\n", s.id, s.label));
        } else {
            table.push_str(&format!("{},{predicted},\n", s.id));
        }
        println!("{}: class {predicted} (counts {:?})", s.id, run.counts);
    }
    if labelled > 0 {
        println!("accuracy {:.4} over {labelled} windows", correct as f64 / labelled as f64);
        create_dir(&cfg.out_dir)?;
        write_file(&cfg.out_dir.join("predictions.csv"), table)?;
    }
    Ok(())
}

fn cmd_profile(cli: &Cli, args: &ProfileArgs) -> Result<()> {
    let mut cfg = build_config(cli, &[])?;
    let model = read_model(&args.model)?;
    let timestep_s = model.lif.timestep_ms * 1e-3;
    cfg.energy = match &args.energy_config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            EnergyModel { timestep_s, ..EnergyModel::parse(&text)? }
        }
        None => EnergyModel { timestep_s, ..EnergyModel::default() },
    };
    cfg.injection_stall = args.injection_stall;
    let samples: Vec<Sample> = load_spikes(&args.spikes)?.into_iter().map(|(s, _)| s).collect();
    let labelled = args.spikes.is_dir();
    let mut report = pipeline::profile_samples(&cfg, &model, &samples)?;
    if !labelled {
        report.accuracy = 0.0;
    }
    let mut rows = baseline_rows();
    rows.push(report.row(&cfg.hardware_label, "SNN"));
    create_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join(pipeline::REPORT_CSV), render_csv(&rows))?;
    let text = render_text(&rows);
    write_file(&cfg.out_dir.join(pipeline::REPORT_TXT), &text)?;
    let c = &report.counters;
    println!("synaptic operations: {}", c.sops);
    println!("neuron updates: {} (dense equivalent {})", c.neuron_updates, c.dense_neuron_updates);
    println!("spikes per layer: {:?}", c.spikes_per_layer);
    println!("modeled latency per window: {} ms (not a hardware measurement)", report.latency_s * 1e3);
    println!();
    print!("{text}");
    Ok(())
}

fn cmd_pipeline(cli: &Cli, args: &DataArgs) -> Result<()> {
    let cfg = build_config(cli, &data_overrides(args))?;
    let started = std::time::Instant::now();
    let summary = pipeline::run_pipeline(&cfg)?;
    for f in &summary.cross_validation.folds {
        println!("fold {}: accuracy {:.4}", f.subject, f.accuracy);
    }
    println!(
        "mean leave-one-user-out accuracy {:.4} over {} windows, {} classes",
        summary.cross_validation.mean_accuracy, summary.windows, summary.classes
    );
    println!("outputs in {}", summary.out_dir.display());
    println!("wall-clock {:.1} s", started.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_recgym(cli: &Cli, args: &RecgymArgs) -> Result<()> {
    let cfg = build_config(cli, &[])?;
    let data = recgym::load_recgym(&args.data, &args.position, args.rate_hz)?;
    create_dir(&cfg.out_dir)?;
    for rec in &data.recordings {
        write_csv(rec, &cfg.out_dir.join(format!("{}.csv", rec.session_id)))?;
    }
    let mut classes = String::from("label,workout\n");
    for (i, c) in data.classes.iter().enumerate() {
        classes.push_str(&format!("{i},{c}\n"));
    }
    write_file(&cfg.out_dir.join("classes.csv"), classes)?;
    println!(
        "wrote {} recordings, {} classes to {}",
        data.recordings.len(),
        data.classes.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("configuring worker pool")?;
    }
    match &cli.command {
        Command::Synth(a) => cmd_synth(&cli, a),
        Command::Ingest(a) => cmd_ingest(&cli, a),
        Command::Encode(a) => cmd_encode(&cli, a),
        Command::Train(a) => cmd_train(&cli, a),
        Command::Infer(a) => cmd_infer(&cli, a),
        Command::Profile(a) => cmd_profile(&cli, a),
        Command::Pipeline(a) => cmd_pipeline(&cli, a),
        Command::Recgym(a) => cmd_recgym(&cli, a),
    }
}
