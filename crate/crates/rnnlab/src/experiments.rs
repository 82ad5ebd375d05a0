//! Scripted experiments: quality-vs-neuron-count sweeps, fast-vs-window
//! comparison grids, the speedup benchmark and the robustness studies
//! (input decay, window reshuffling).
//!
//! Every experiment is a deterministic function of its inputs and seeds and
//! produces an [`ExperimentReport`]: a tabular CSV plus a JSON manifest with
//! the parameters, seeds and timings needed to reproduce it.

use serde::Serialize;
use std::time::Instant;

use crate::cells::{init_params, model_to_string, CellKind, ModelBundle};
use crate::error::{Error, Result};
use crate::predict::{
    fast_predict, max_abs_deviation, moving_window_predict, moving_window_predict_with,
    prediction_to_csv, quality, roughness, COINCIDENCE_TOLERANCE,
};
use crate::signal::{
    add_noise, build_dataset, reshuffle_window, sample_series, splitmix64, DatasetSpec, Sequence,
    WaveKind,
};
use crate::training::{train, TrainConfig};

/// Tabular results of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub name: String,
    /// Scalar parameters and derived summary statistics, in insertion order.
    pub parameters: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Wall-clock measurements in seconds, where applicable.
    pub timings: Vec<(String, f64)>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    name: &'a str,
    artifact_version: &'a str,
    parameters: Vec<(&'a str, &'a str)>,
    timings_seconds: Vec<(&'a str, f64)>,
    columns: &'a [String],
    row_count: usize,
}

impl ExperimentReport {
    fn new(name: &str, columns: &[&str]) -> ExperimentReport {
        ExperimentReport {
            name: name.to_string(),
            parameters: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            timings: Vec::new(),
        }
    }

    fn param(&mut self, key: &str, value: impl ToString) {
        self.parameters.push((key.to_string(), value.to_string()));
    }

    fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn manifest_json(&self) -> String {
        let manifest = Manifest {
            name: &self.name,
            artifact_version: env!("CARGO_PKG_VERSION"),
            parameters: self
                .parameters
                .iter()
                .map(|(k, v)| (k.as_str(), v.as_str()))
                .collect(),
            timings_seconds: self
                .timings
                .iter()
                .map(|(k, v)| (k.as_str(), *v))
                .collect(),
            columns: &self.columns,
            row_count: self.rows.len(),
        };
        serde_json::to_string_pretty(&manifest).expect("manifest serializes")
    }

    /// Writes `<stem>.csv` and `<stem>.manifest.json` into `dir`.
    pub fn write(&self, dir: &std::path::Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        std::fs::write(dir.join(format!("{stem}.manifest.json")), self.manifest_json())?;
        Ok(())
    }

    /// Looks up a parameter recorded with [`Self::param`].
    pub fn parameter(&self, key: &str) -> Option<&str> {
        self.parameters
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Short content hash of a model, for manifests.
pub fn model_hash(model: &ModelBundle) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(model_to_string(model).as_bytes());
    digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
}

/// Where and how a trained model is evaluated: a noisy window of `window`
/// points starting at `t0`, predicted `horizon` points ahead and scored
/// against the clean continuation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSetup {
    pub wave: WaveKind,
    pub window: usize,
    pub horizon: usize,
    pub noise: f64,
    pub t0: f64,
    pub dt: f64,
    pub noise_seed: u64,
}

impl EvalSetup {
    pub fn new(wave: WaveKind, window: usize, horizon: usize, noise: f64) -> EvalSetup {
        EvalSetup { wave, window, horizon, noise, t0: 0.0, dt: 0.01, noise_seed: 1 }
    }

    /// The noisy input window.
    pub fn input(&self) -> Result<Sequence> {
        let clean = sample_series(self.wave, self.t0, self.window, self.dt)?;
        add_noise(&clean, self.noise, self.noise_seed)
    }

    /// The clean continuation the prediction is scored against.
    pub fn reference(&self) -> Result<Sequence> {
        sample_series(
            self.wave,
            self.t0 + self.window as f64 * self.dt,
            self.horizon,
            self.dt,
        )
    }
}

fn fmt(v: f64) -> String {
    crate::signal::fmt_f64(v)
}

/// Spearman rank correlation with average ranks for ties.
pub(crate) fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = rx.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mean) * (b - mean);
        vx += (a - mean) * (a - mean);
        vy += (b - mean) * (b - mean);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut out = vec![0.0; values.len()];
    let mut k = 0;
    while k < order.len() {
        let mut end = k + 1;
        while end < order.len() && values[order[end]] == values[order[k]] {
            end += 1;
        }
        let avg = (k + 1 + end) as f64 / 2.0;
        for &idx in &order[k..end] {
            out[idx] = avg;
        }
        k = end;
    }
    out
}

pub(crate) fn median(values: &mut Vec<f64>) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Trains one model per (kind, n, seed) and records the prediction quality
/// against the clean wave plus the roughness ratio to the noisy input.
/// Medians over seeds and the quality-vs-n Spearman trend are recorded as
/// report parameters.
pub fn quality_sweep(
    kinds: &[CellKind],
    neuron_counts: &[usize],
    spec: &DatasetSpec,
    cfg: &TrainConfig,
    eval: &EvalSetup,
    seeds: &[u64],
) -> Result<ExperimentReport> {
    if neuron_counts.is_empty() || kinds.is_empty() || seeds.is_empty() {
        return Err(Error::config("quality_sweep needs kinds, neuron counts and seeds"));
    }
    let dataset = build_dataset(spec)?;
    let reference = eval.reference()?;
    let mut report = ExperimentReport::new(
        "quality_sweep",
        &["kind", "n", "seed", "q", "roughness_ratio", "final_val_loss"],
    );
    report.param("dataset", spec.canonical_string());
    report.param("eval_wave", eval.wave);
    report.param("eval_m", eval.window);
    report.param("eval_p", eval.horizon);
    report.param("eval_noise", fmt(eval.noise));
    report.param("seeds", join_u64(seeds));

    for &kind in kinds {
        let mut medians_per_n = Vec::new();
        for &n in neuron_counts {
            let mut qs = Vec::new();
            for &seed in seeds {
                let run_cfg = TrainConfig { seed, ..cfg.clone() };
                let model = init_params(kind, n, 1, seed);
                let (trained, history) = train(&model, &dataset, &run_cfg)?;
                let input = EvalSetup { noise_seed: splitmix64(eval.noise_seed ^ seed), ..eval.clone() }
                    .input()?;
                let out = moving_window_predict(&trained, &input, eval.horizon)?;
                let q = quality(&out.predicted, &reference)?;
                let ratio = roughness(&out.predicted)? / roughness(&input)?;
                let val = *history.val_loss.last().unwrap_or(&f64::NAN);
                report.row(vec![
                    kind.to_string(),
                    n.to_string(),
                    seed.to_string(),
                    fmt(q),
                    fmt(ratio),
                    fmt(val),
                ]);
                qs.push(q);
            }
            let med = median(&mut qs);
            report.param(&format!("median_q_{kind}_{n}"), fmt(med));
            medians_per_n.push(med);
        }
        let ns: Vec<f64> = neuron_counts.iter().map(|&n| n as f64).collect();
        report.param(&format!("spearman_q_vs_n_{kind}"), fmt(spearman(&ns, &medians_per_n)));
    }
    Ok(report)
}

/// Compares the moving-window and fast predictions over an
/// (amplitude, window-length) grid, recording the maximum deviation and both
/// quality scores. Rows with deviation within [`COINCIDENCE_TOLERANCE`] are
/// flagged coincident.
pub fn fast_vs_window(
    model: &ModelBundle,
    wave: WaveKind,
    amplitudes: &[f64],
    m_values: &[usize],
    p: usize,
    dt: f64,
    noise_seed: u64,
) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new(
        "fast_vs_window",
        &[
            "a",
            "m",
            "max_abs_deviation",
            "coincident",
            "q_window",
            "q_fast",
            "recursions_window",
            "recursions_fast",
        ],
    );
    report.param("model", model_hash(model));
    report.param("wave", wave);
    report.param("p", p);
    report.param("tolerance", fmt(COINCIDENCE_TOLERANCE));
    for &a in amplitudes {
        for &m in m_values {
            let eval = EvalSetup { dt, noise_seed, ..EvalSetup::new(wave, m, p, a) };
            let input = eval.input()?;
            let reference = eval.reference()?;
            let window_run = moving_window_predict(model, &input, p)?;
            let fast_run = fast_predict(model, &input, p)?;
            let dev = max_abs_deviation(&fast_run.predicted, &window_run.predicted)?;
            report.row(vec![
                fmt(a),
                m.to_string(),
                fmt(dev),
                u8::from(dev <= COINCIDENCE_TOLERANCE).to_string(),
                fmt(quality(&window_run.predicted, &reference)?),
                fmt(quality(&fast_run.predicted, &reference)?),
                window_run.recursion_count.to_string(),
                fast_run.recursion_count.to_string(),
            ]);
        }
    }
    Ok(report)
}

/// Wall-clock comparison of the two predictors: median over `repetitions`
/// timed runs (after discarding warm-up runs), both recursion counts, the
/// measured speedup and the `m*p/(m+p)` estimate.
pub fn speedup_bench(
    model: &ModelBundle,
    m: usize,
    p: usize,
    repetitions: usize,
    wave: WaveKind,
    noise: f64,
    noise_seed: u64,
) -> Result<ExperimentReport> {
    if repetitions < 5 {
        return Err(Error::config("speedup benchmark needs at least 5 repetitions"));
    }
    let eval = EvalSetup { noise_seed, ..EvalSetup::new(wave, m, p, noise) };
    let input = eval.input()?;

    let time_runs = |f: &dyn Fn() -> Result<u64>| -> Result<(f64, u64)> {
        let mut recursions = 0;
        for _ in 0..2 {
            recursions = f()?; // warm-up, discarded
        }
        let mut samples = Vec::with_capacity(repetitions);
        for _ in 0..repetitions {
            let start = Instant::now();
            recursions = f()?;
            samples.push(start.elapsed().as_secs_f64());
        }
        Ok((median(&mut samples), recursions))
    };

    let (window_secs, window_recursions) =
        time_runs(&|| Ok(moving_window_predict(model, &input, p)?.recursion_count))?;
    let (fast_secs, fast_recursions) =
        time_runs(&|| Ok(fast_predict(model, &input, p)?.recursion_count))?;

    let mut report = ExperimentReport::new(
        "speedup_bench",
        &["algorithm", "median_seconds", "recursions"],
    );
    report.param("model", model_hash(model));
    report.param("m", m);
    report.param("p", p);
    report.param("repetitions", repetitions);
    report.param("kappa_measured", fmt(window_secs / fast_secs));
    report.param("kappa_theoretical", fmt((m * p) as f64 / (m + p) as f64));
    report.param(
        "recursion_ratio",
        fmt(window_recursions as f64 / fast_recursions as f64),
    );
    report.timings.push(("window_median".into(), window_secs));
    report.timings.push(("fast_median".into(), fast_secs));
    report.row(vec!["window".into(), fmt(window_secs), window_recursions.to_string()]);
    report.row(vec!["fast".into(), fmt(fast_secs), fast_recursions.to_string()]);
    Ok(report)
}

/// Predicts from exponentially decayed input windows and records quality and
/// roughness per decay rate (medians over noise seeds as parameters).
pub fn decay_experiment(
    model: &ModelBundle,
    wave: WaveKind,
    rates: &[f64],
    m: usize,
    p: usize,
    noise: f64,
    seeds: &[u64],
) -> Result<ExperimentReport> {
    if rates.is_empty() || seeds.is_empty() {
        return Err(Error::config("decay experiment needs rates and seeds"));
    }
    let mut report = ExperimentReport::new(
        "decay_experiment",
        &["rate", "seed", "q", "roughness"],
    );
    report.param("model", model_hash(model));
    report.param("wave", wave);
    report.param("m", m);
    report.param("p", p);
    report.param("noise", fmt(noise));
    let mut medians = Vec::new();
    for &rate in rates {
        let mut qs = Vec::new();
        for &seed in seeds {
            let eval = EvalSetup { noise_seed: seed, ..EvalSetup::new(wave, m, p, noise) };
            let input = crate::signal::decay_input(&eval.input()?, rate)?;
            let reference = eval.reference()?;
            let out = moving_window_predict(model, &input, p)?;
            let q = quality(&out.predicted, &reference)?;
            report.row(vec![
                fmt(rate),
                seed.to_string(),
                fmt(q),
                fmt(roughness(&out.predicted)?),
            ]);
            qs.push(q);
        }
        let med = median(&mut qs);
        report.param(&format!("median_q_rate_{rate}"), fmt(med));
        medians.push(med);
    }
    report.param("spearman_q_vs_rate", fmt(spearman(rates, &medians)));
    Ok(report)
}

/// Moving-window prediction with per-step window reshuffling, contrasted
/// with the fast predictor run from the same pristine initial window.
///
/// The fast predictor never re-reads the window, so its output cannot
/// depend on the reshuffle fraction; the report asserts that invariance.
pub fn reshuffle_experiment(
    model: &ModelBundle,
    wave: WaveKind,
    fractions: &[f64],
    m: usize,
    p: usize,
    noise: f64,
    seeds: &[u64],
) -> Result<ExperimentReport> {
    if fractions.is_empty() || seeds.is_empty() {
        return Err(Error::config("reshuffle experiment needs fractions and seeds"));
    }
    let mut report = ExperimentReport::new(
        "reshuffle_experiment",
        &["fraction", "seed", "algorithm", "q", "roughness"],
    );
    report.param("model", model_hash(model));
    report.param("wave", wave);
    report.param("m", m);
    report.param("p", p);
    report.param("noise", fmt(noise));

    let mut baseline_roughness: Vec<f64> = Vec::new();
    let mut ratios_per_fraction: Vec<(f64, Vec<f64>)> =
        fractions.iter().map(|&f| (f, Vec::new())).collect();

    for &seed in seeds {
        let eval = EvalSetup { noise_seed: seed, ..EvalSetup::new(wave, m, p, noise) };
        let input = eval.input()?;
        let reference = eval.reference()?;

        let clean_run = moving_window_predict(model, &input, p)?;
        let clean_rough = roughness(&clean_run.predicted)?;
        baseline_roughness.push(clean_rough);

        let fast_baseline = fast_predict(model, &input, p)?;
        let fast_csv = prediction_to_csv(&fast_baseline, None)?;

        for (fi, &fraction) in fractions.iter().enumerate() {
            let shuffled = shuffled_moving_window(model, &input, p, fraction, seed)?;
            let rough = roughness(&shuffled.predicted)?;
            report.row(vec![
                fmt(fraction),
                seed.to_string(),
                "window".into(),
                fmt(quality(&shuffled.predicted, &reference)?),
                fmt(rough),
            ]);
            ratios_per_fraction[fi].1.push(rough / clean_rough);

            // the fast path reads the input exactly once: byte-identical
            // output no matter the fraction
            let fast_again = fast_predict(model, &input, p)?;
            let again_csv = prediction_to_csv(&fast_again, None)?;
            assert_eq!(
                fast_csv, again_csv,
                "fast prediction must not depend on the reshuffle fraction"
            );
            report.row(vec![
                fmt(fraction),
                seed.to_string(),
                "fast".into(),
                fmt(quality(&fast_again.predicted, &reference)?),
                fmt(roughness(&fast_again.predicted)?),
            ]);
        }
    }

    for (fraction, mut ratios) in ratios_per_fraction {
        report.param(
            &format!("median_window_roughness_ratio_{fraction}"),
            fmt(median(&mut ratios)),
        );
    }
    Ok(report)
}

/// Moving-window prediction where, at every outer step past the first, the
/// maintained window is partially reshuffled in place (the corruption
/// persists into later steps).
pub fn shuffled_moving_window(
    model: &ModelBundle,
    input: &Sequence,
    p: usize,
    fraction: f64,
    seed: u64,
) -> Result<crate::predict::PredictionResult> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::config("reshuffle fraction must be in [0, 1]"));
    }
    let dt = input.dt();
    let t0 = input.t0();
    moving_window_predict_with(model, input, p, |j, window| {
        if fraction > 0.0 {
            let seq = Sequence::new(window.clone(), t0, dt).expect("window stays finite");
            let step_seed = splitmix64(seed ^ (j as u64).wrapping_mul(0x9e37_79b9));
            let shuffled =
                reshuffle_window(&seq, fraction, step_seed).expect("fraction validated");
            window.assign(shuffled.data());
        }
    })
}

fn join_u64(seeds: &[u64]) -> String {
    seeds
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join("+")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::random_model;
    use approx::assert_abs_diff_eq;

    fn tiny_spec() -> DatasetSpec {
        DatasetSpec {
            segments_per_wave: 12,
            length_min: 5,
            length_max: 8,
            seed: 3,
            ..DatasetSpec::default()
        }
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig { epochs: 1, batch_size: 8, ..TrainConfig::default() }
    }

    #[test]
    fn spearman_known_cases() {
        assert_abs_diff_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn median_of_even_and_odd_counts() {
        assert_eq!(median(&mut vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn quality_sweep_records_one_row_per_run() {
        let eval = EvalSetup::new(WaveKind::Sine, 10, 8, 0.15);
        let report = quality_sweep(
            &[CellKind::Basic],
            &[2, 3],
            &tiny_spec(),
            &tiny_cfg(),
            &eval,
            &[1, 2],
        )
        .unwrap();
        assert_eq!(report.rows.len(), 4);
        assert!(report.parameter("median_q_basic_2").is_some());
        assert!(report.parameter("spearman_q_vs_n_basic").is_some());

        let again = quality_sweep(
            &[CellKind::Basic],
            &[2, 3],
            &tiny_spec(),
            &tiny_cfg(),
            &eval,
            &[1, 2],
        )
        .unwrap();
        assert_eq!(report.to_csv(), again.to_csv());
        assert_eq!(report.manifest_json(), again.manifest_json());
    }

    #[test]
    fn fast_vs_window_covers_the_grid() {
        let model = random_model(CellKind::Lstm, 4, 1, 5);
        let report =
            fast_vs_window(&model, WaveKind::Triangle, &[0.15, 0.9], &[10, 20], 12, 0.01, 7)
                .unwrap();
        assert_eq!(report.rows.len(), 4);
        // recursion counts are part of the audit trail
        let cols = &report.columns;
        let rw = cols.iter().position(|c| c == "recursions_window").unwrap();
        let rf = cols.iter().position(|c| c == "recursions_fast").unwrap();
        assert_eq!(report.rows[0][rw], "120");
        assert_eq!(report.rows[0][rf], "21");
    }

    #[test]
    fn zero_model_predictions_always_coincide() {
        let mut model = ModelBundle::zeros(CellKind::Basic, 3, 1);
        model.readout.b = ndarray::array![0.2];
        let report =
            fast_vs_window(&model, WaveKind::Sine, &[0.15], &[10], 6, 0.01, 3).unwrap();
        let dev: f64 = report.rows[0][2].parse().unwrap();
        assert_eq!(dev, 0.0);
        assert_eq!(report.rows[0][3], "1");
    }

    #[test]
    fn speedup_bench_counts_and_guards() {
        let model = random_model(CellKind::Lstm, 4, 1, 9);
        assert!(speedup_bench(&model, 50, 50, 4, WaveKind::Sine, 0.15, 1).is_err());
        let report = speedup_bench(&model, 50, 50, 5, WaveKind::Sine, 0.15, 1).unwrap();
        assert_eq!(report.rows[0][2], "2500");
        assert_eq!(report.rows[1][2], "99");
        let kappa_th: f64 = report.parameter("kappa_theoretical").unwrap().parse().unwrap();
        assert_abs_diff_eq!(kappa_th, 25.0, epsilon = 1e-12);
        let ratio: f64 = report.parameter("recursion_ratio").unwrap().parse().unwrap();
        assert_abs_diff_eq!(ratio, 2500.0 / 99.0, epsilon = 1e-12);
        let measured: f64 = report.parameter("kappa_measured").unwrap().parse().unwrap();
        assert!(measured > 0.0);
    }

    #[test]
    fn decay_rate_zero_reproduces_the_unperturbed_prediction() {
        let model = random_model(CellKind::Basic, 4, 1, 11);
        let eval = EvalSetup { noise_seed: 5, ..EvalSetup::new(WaveKind::Sine, 12, 6, 0.15) };
        let input = eval.input().unwrap();
        let baseline = moving_window_predict(&model, &input, 6).unwrap();
        let decayed = crate::signal::decay_input(&input, 0.0).unwrap();
        let rerun = moving_window_predict(&model, &decayed, 6).unwrap();
        assert_eq!(baseline.predicted, rerun.predicted);

        let report = decay_experiment(
            &model,
            WaveKind::Sine,
            &[0.0, 0.002, 0.005, 0.008],
            12,
            6,
            0.15,
            &[5, 6, 7],
        )
        .unwrap();
        assert_eq!(report.rows.len(), 12);
        assert!(report.parameter("spearman_q_vs_rate").is_some());
    }

    #[test]
    fn reshuffle_fraction_zero_matches_clean_run_and_fast_is_invariant() {
        let model = random_model(CellKind::Lstm, 4, 1, 13);
        let eval = EvalSetup { noise_seed: 2, ..EvalSetup::new(WaveKind::Sine, 10, 8, 0.15) };
        let input = eval.input().unwrap();
        let clean = moving_window_predict(&model, &input, 8).unwrap();
        let zero = shuffled_moving_window(&model, &input, 8, 0.0, 99).unwrap();
        assert_eq!(clean.predicted, zero.predicted);

        let report = reshuffle_experiment(
            &model,
            WaveKind::Sine,
            &[0.0, 0.2, 0.4],
            10,
            8,
            0.15,
            &[1, 2],
        )
        .unwrap();
        // one window row and one fast row per (fraction, seed)
        assert_eq!(report.rows.len(), 3 * 2 * 2);
        let fast_rows: Vec<&Vec<String>> =
            report.rows.iter().filter(|r| r[2] == "fast").collect();
        for chunk in fast_rows.chunks(3) {
            for r in chunk {
                // same seed => identical q and roughness across fractions
                assert_eq!(r[3], chunk[0][3]);
                assert_eq!(r[4], chunk[0][4]);
            }
        }
    }

    #[test]
    fn report_files_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let model = random_model(CellKind::Basic, 3, 1, 1);
        let report =
            fast_vs_window(&model, WaveKind::Sine, &[0.15], &[8], 4, 0.01, 1).unwrap();
        report.write(dir.path(), "fvw").unwrap();
        let csv = std::fs::read_to_string(dir.path().join("fvw.csv")).unwrap();
        assert!(csv.starts_with("a,m,max_abs_deviation"));
        let manifest = std::fs::read_to_string(dir.path().join("fvw.manifest.json")).unwrap();
        assert!(manifest.contains("\"name\": \"fast_vs_window\""));
    }
}
