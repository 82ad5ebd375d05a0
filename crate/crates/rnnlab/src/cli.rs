//! Command-line entry point: dataset generation, training, the two
//! predictors, the dynamics diagnostics and the scripted experiments.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags, invalid
//! configuration), 2 on runtime failures (unreadable files, failed runs).

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use crate::cells::{init_params, load_model, save_model, CellKind, ModelBundle};
use crate::dynamics::{
    contraction_report, contraction_to_csv, diagnostics_csv, epsilon_gap, fit_decay,
    noise_linearity_check, shifted_difference, tail_half, traced_moving_window, StateSpace,
};
use crate::error::{Error, Result};
use crate::experiments::{
    decay_experiment, model_hash, quality_sweep, reshuffle_experiment,
    speedup_bench, EvalSetup,
};
use crate::predict::{fast_predict, moving_window_predict, prediction_to_csv, PredictionResult};
use crate::signal::{
    add_noise, build_dataset, dataset_from_csv, dataset_to_csv, sample_series, series_from_csv,
    DatasetSpec, NoiseKind, Sequence, WaveKind,
};
use crate::training::{train, TrainConfig};

#[derive(Parser)]
#[command(
    name = "rnnlab",
    version,
    about = "Small-RNN time-series laboratory: train cells on noisy waves, predict with the moving-window or reduced-map algorithm, and analyse the state dynamics"
)]
struct Cli {
    /// Cap the worker threads used by parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a training dataset CSV of noisy wave segments.
    GenData(GenDataArgs),
    /// Train a cell on a dataset CSV and write the model file.
    Train(TrainArgs),
    /// Moving-window prediction (m*p cell steps).
    Predict(PredictArgs),
    /// Reduced-map prediction (m+p-1 cell steps).
    FastPredict(PredictArgs),
    /// Shifted-difference, epsilon-gap and noise-linearity diagnostics.
    Diagnose(DiagnoseArgs),
    /// Jacobian-chain contraction analysis (basic cell).
    Contract(ContractArgs),
    /// Wall-clock speedup benchmark of the two predictors.
    Bench(BenchArgs),
    /// Input-decay and window-reshuffle robustness experiments.
    Robust(RobustArgs),
    /// Train across cell kinds and neuron counts, scoring prediction quality.
    QualitySweep(QualitySweepArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Output dataset CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Segments per selected wave.
    #[arg(long, default_value_t = 6000)]
    segments: usize,
    #[arg(long, default_value_t = 5)]
    length_min: usize,
    #[arg(long, default_value_t = 150)]
    length_max: usize,
    /// Noise amplitude a.
    #[arg(long, default_value_t = 0.15)]
    noise: f64,
    #[arg(long, default_value = "gaussian")]
    noise_kind: NoiseKind,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long)]
    seed: u64,
    /// Comma-separated subset of {sine, triangle}.
    #[arg(long, default_value = "sine,triangle", value_delimiter = ',')]
    waves: Vec<WaveKind>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset CSV (from gen-data).
    #[arg(long)]
    data: PathBuf,
    /// Cell kind: basic, gated or lstm.
    #[arg(long)]
    cell: CellKind,
    /// Neuron count n.
    #[arg(long)]
    neurons: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    /// Validation fraction.
    #[arg(long, default_value_t = 0.2)]
    val: f64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    /// Optional global gradient-norm clip.
    #[arg(long)]
    clip: Option<f64>,
    /// Seed for initialization, the split and the epoch shuffles.
    #[arg(long)]
    seed: u64,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Optional loss-history CSV.
    #[arg(long)]
    history: Option<PathBuf>,
}

/// Input window source: either a series CSV or a generated noisy wave.
#[derive(Args)]
struct InputArgs {
    /// Input series CSV.
    #[arg(long, conflicts_with_all = ["wave", "window"])]
    input: Option<PathBuf>,
    /// Generate the window from this wave instead of reading a file.
    #[arg(long, requires = "window")]
    wave: Option<WaveKind>,
    /// Window length m (with --wave).
    #[arg(long)]
    window: Option<usize>,
    /// Noise amplitude a (with --wave).
    #[arg(long, default_value_t = 0.15)]
    noise: f64,
    /// Window start time (with --wave).
    #[arg(long, default_value_t = 0.0)]
    t0: f64,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Noise seed; mandatory when generating a noisy window.
    #[arg(long)]
    seed: Option<u64>,
}

impl InputArgs {
    fn load(&self) -> Result<Sequence> {
        match (&self.input, self.wave) {
            (Some(path), None) => series_from_csv(&std::fs::read_to_string(path)?),
            (None, Some(wave)) => {
                let m = self.window.expect("clap enforces --window with --wave");
                let clean = sample_series(wave, self.t0, m, self.dt)?;
                if self.noise > 0.0 {
                    let seed = self.seed.ok_or_else(|| {
                        Error::config("--seed is mandatory when generating a noisy window")
                    })?;
                    add_noise(&clean, self.noise, seed)
                } else {
                    Ok(clean)
                }
            }
            _ => Err(Error::config("provide exactly one of --input or --wave/--window")),
        }
    }

    /// Clean continuation for reference columns, when the wave is known.
    fn reference(&self, input: &Sequence, horizon: usize) -> Result<Option<Sequence>> {
        match self.wave {
            Some(wave) => {
                let start = input.t0() + input.len() as f64 * input.dt();
                Ok(Some(sample_series(wave, start, horizon, input.dt())?))
            }
            None => Ok(None),
        }
    }
}

#[derive(Args)]
struct PredictArgs {
    /// Model file (from train).
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    /// Number of points to predict (p).
    #[arg(long)]
    horizon: usize,
    /// Output prediction CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "sine")]
    wave: WaveKind,
    #[arg(long, default_value_t = 75)]
    window: usize,
    #[arg(long, default_value_t = 100)]
    horizon: usize,
    /// Noise amplitudes for the shifted-difference runs.
    #[arg(long, default_value = "0,0.15,0.9", value_delimiter = ',')]
    amplitudes: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    t0: f64,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long)]
    seed: u64,
    /// Directory for the diagnostic CSVs.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ContractArgs {
    /// Basic-cell model file.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "sine")]
    wave: WaveKind,
    #[arg(long, default_value_t = 75)]
    window: usize,
    #[arg(long, default_value_t = 20)]
    horizon: usize,
    #[arg(long, default_value_t = 0.15)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    t0: f64,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 50)]
    window: usize,
    #[arg(long, default_value_t = 50)]
    horizon: usize,
    #[arg(long, default_value_t = 9)]
    reps: usize,
    #[arg(long, default_value = "sine")]
    wave: WaveKind,
    #[arg(long, default_value_t = 0.15)]
    noise: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RobustArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "sine")]
    wave: WaveKind,
    /// Exponential input-decay rates.
    #[arg(long, default_value = "0,0.002,0.005,0.008", value_delimiter = ',')]
    rates: Vec<f64>,
    /// Window reshuffle fractions.
    #[arg(long, default_value = "0.05,0.1,0.2,0.4", value_delimiter = ',')]
    fractions: Vec<f64>,
    #[arg(long, default_value_t = 75)]
    window: usize,
    #[arg(long, default_value_t = 100)]
    horizon: usize,
    #[arg(long, default_value_t = 0.15)]
    noise: f64,
    /// Base seed; run k uses seed + k.
    #[arg(long)]
    seed: u64,
    /// Number of seeded runs per grid point.
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct QualitySweepArgs {
    #[arg(long, default_value = "basic,gated,lstm", value_delimiter = ',')]
    cells: Vec<CellKind>,
    #[arg(long, default_value = "5,10,20", value_delimiter = ',')]
    neurons: Vec<usize>,
    /// Segments per wave for the training set.
    #[arg(long, default_value_t = 6000)]
    segments: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value = "sine")]
    eval_wave: WaveKind,
    #[arg(long, default_value_t = 75)]
    eval_window: usize,
    #[arg(long, default_value_t = 100)]
    eval_horizon: usize,
    #[arg(long, default_value_t = 0.15)]
    noise: f64,
    /// Base seed; run k trains with seed + k.
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Parses the arguments and runs the selected command, mapping errors to the
/// exit-code contract.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    if let Some(threads) = cli.threads {
        // ignore failure: the global pool can only be configured once
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match run(cli.command) {
        Ok(()) => 0,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData(args) => gen_data(args),
        Command::Train(args) => run_train(args),
        Command::Predict(args) => run_predict(args, false),
        Command::FastPredict(args) => run_predict(args, true),
        Command::Diagnose(args) => run_diagnose(args),
        Command::Contract(args) => run_contract(args),
        Command::Bench(args) => run_bench(args),
        Command::Robust(args) => run_robust(args),
        Command::QualitySweep(args) => run_quality_sweep(args),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, contents)?;
    Ok(())
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    let spec = DatasetSpec {
        segments_per_wave: args.segments,
        length_min: args.length_min,
        length_max: args.length_max,
        noise_amplitude: args.noise,
        noise: args.noise_kind,
        dt: args.dt,
        seed: args.seed,
        waves: args.waves,
    };
    let dataset = build_dataset(&spec)?;
    write_file(&args.out, &dataset_to_csv(&dataset)?)?;
    println!(
        "wrote {} examples ({}) to {}",
        dataset.examples.len(),
        spec.hash(),
        args.out.display()
    );
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<()> {
    let cfg = TrainConfig {
        epochs: args.epochs,
        validation_fraction: args.val,
        learning_rate: args.lr,
        batch_size: args.batch,
        grad_clip: args.clip,
        seed: args.seed,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    let dataset = dataset_from_csv(&std::fs::read_to_string(&args.data)?)?;
    let model = init_params(args.cell, args.neurons, 1, args.seed);
    let (trained, history) = train(&model, &dataset, &cfg)?;
    save_model(&trained, &args.out)?;
    if let Some(path) = &args.history {
        write_file(path, &history.to_csv())?;
    }
    let final_val = history.val_loss.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained {} n={} for {} epochs; final validation loss {final_val:.6}; model {} -> {}",
        args.cell,
        args.neurons,
        args.epochs,
        model_hash(&trained),
        args.out.display()
    );
    Ok(())
}

fn load_and_check(path: &Path) -> Result<ModelBundle> {
    let model = load_model(path)?;
    model.validate()?;
    Ok(model)
}

fn run_predict(args: PredictArgs, fast: bool) -> Result<()> {
    let model = load_and_check(&args.model)?;
    let input = args.input.load()?;
    let result: PredictionResult = if fast {
        fast_predict(&model, &input, args.horizon)?
    } else {
        moving_window_predict(&model, &input, args.horizon)?
    };
    let reference = args.input.reference(&input, args.horizon)?;
    write_file(&args.out, &prediction_to_csv(&result, reference.as_ref())?)?;
    println!(
        "{} prediction: {} points in {} cell steps -> {}",
        if fast { "fast" } else { "moving-window" },
        args.horizon,
        result.recursion_count,
        args.out.display()
    );
    Ok(())
}

fn amplitude_label(a: f64) -> String {
    format!("{a}").replace('.', "_")
}

fn run_diagnose(args: DiagnoseArgs) -> Result<()> {
    let model = load_and_check(&args.model)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let clean = sample_series(args.wave, args.t0, args.window, args.dt)?;

    for &a in &args.amplitudes {
        if a < 0.0 {
            return Err(Error::config("amplitudes must be >= 0"));
        }
        let input = if a > 0.0 { add_noise(&clean, a, args.seed)? } else { clean.clone() };
        let traced = traced_moving_window(&model, &input, args.horizon)?;

        let spaces: &[StateSpace] = if model.kind == CellKind::Lstm {
            &[StateSpace::Hidden, StateSpace::Cell]
        } else {
            &[StateSpace::Hidden]
        };
        for &space in spaces {
            let series = shifted_difference(&traced.traces, 1, space)?;
            let fit = fit_decay(&series, tail_half(series.values.len())).ok();
            let meta = [
                ("series", "shifted_difference".to_string()),
                ("j", "1".to_string()),
                ("space", space.to_string()),
                ("a", a.to_string()),
                ("model", model_hash(&model)),
            ];
            let csv = diagnostics_csv(&meta, &series.values, fit.as_ref());
            write_file(
                &args.out_dir.join(format!("delta_{}_a{}.csv", space, amplitude_label(a))),
                &csv,
            )?;
        }

        let eps = epsilon_gap(&traced.traces)?;
        let meta = [
            ("series", "epsilon_gap".to_string()),
            ("a", a.to_string()),
            ("model", model_hash(&model)),
        ];
        write_file(
            &args.out_dir.join(format!("epsilon_a{}.csv", amplitude_label(a))),
            &diagnostics_csv(&meta, &eps.values, None),
        )?;
    }

    let report = noise_linearity_check(&model, &clean, &[1e-3, 1e-4], args.seed)?;
    let mut csv = format!(
        "# series=noise_linearity spread={}\na,r\n",
        crate::signal::fmt_f64(report.max_relative_spread)
    );
    for (a, r) in report.amplitudes.iter().zip(&report.ratios) {
        csv.push_str(&format!(
            "{},{}\n",
            crate::signal::fmt_f64(*a),
            crate::signal::fmt_f64(*r)
        ));
    }
    write_file(&args.out_dir.join("linearity.csv"), &csv)?;
    println!("diagnostics written to {}", args.out_dir.display());
    Ok(())
}

fn run_contract(args: ContractArgs) -> Result<()> {
    let model = load_and_check(&args.model)?;
    let clean = sample_series(args.wave, args.t0, args.window, args.dt)?;
    let input = if args.noise > 0.0 { add_noise(&clean, args.noise, args.seed)? } else { clean };
    let report = contraction_report(&model, &input, args.horizon)?;
    write_file(&args.out, &contraction_to_csv(&report))?;
    println!(
        "contraction: fraction {:.3}, identity residual {:.2e} -> {}",
        report.fraction_contracting,
        report.identity_residual,
        args.out.display()
    );
    Ok(())
}

fn run_bench(args: BenchArgs) -> Result<()> {
    let model = load_and_check(&args.model)?;
    let report = speedup_bench(
        &model,
        args.window,
        args.horizon,
        args.reps,
        args.wave,
        args.noise,
        args.seed,
    )?;
    report.write(&args.out_dir, "bench")?;
    println!(
        "speedup: measured kappa {} (theoretical {}), reports in {}",
        report.parameter("kappa_measured").unwrap_or("?"),
        report.parameter("kappa_theoretical").unwrap_or("?"),
        args.out_dir.display()
    );
    Ok(())
}

fn run_robust(args: RobustArgs) -> Result<()> {
    let model = load_and_check(&args.model)?;
    let seeds: Vec<u64> = (0..args.runs as u64).map(|k| args.seed + k).collect();
    let decay = decay_experiment(
        &model,
        args.wave,
        &args.rates,
        args.window,
        args.horizon,
        args.noise,
        &seeds,
    )?;
    decay.write(&args.out_dir, "decay")?;
    let reshuffle = reshuffle_experiment(
        &model,
        args.wave,
        &args.fractions,
        args.window,
        args.horizon,
        args.noise,
        &seeds,
    )?;
    reshuffle.write(&args.out_dir, "reshuffle")?;
    println!("robustness reports in {}", args.out_dir.display());
    Ok(())
}

fn run_quality_sweep(args: QualitySweepArgs) -> Result<()> {
    let spec = DatasetSpec {
        segments_per_wave: args.segments,
        noise_amplitude: args.noise,
        seed: args.seed,
        ..DatasetSpec::default()
    };
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch,
        learning_rate: args.lr,
        ..TrainConfig::default()
    };
    let eval = EvalSetup {
        noise_seed: args.seed ^ 0xe7a1,
        ..EvalSetup::new(args.eval_wave, args.eval_window, args.eval_horizon, args.noise)
    };
    let seeds: Vec<u64> = (0..args.runs as u64).map(|k| args.seed + k).collect();
    let report = quality_sweep(&args.cells, &args.neurons, &spec, &cfg, &eval, &seeds)?;
    report.write(&args.out_dir, "quality_sweep")?;
    println!("quality sweep reports in {}", args.out_dir.display());
    Ok(())
}
