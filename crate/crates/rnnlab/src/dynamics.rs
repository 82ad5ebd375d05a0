//! Numerical verification of the state dynamics behind the fast predictor:
//! noise-propagation linearity, shifted-difference decay, the next-to-last /
//! last state gap, the basic-cell Jacobian chain and the contraction
//! analysis in the eigenbasis of `A^T A`.
//!
//! All norms are Euclidean.

use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt;
use std::ops::Range;

use crate::cells::{readout, run_final, run_trace, BasicParams, CellParams, ModelBundle, StateTrace};
use crate::error::{Error, Result};
use crate::linalg::sym_eigen;
use crate::predict::{advance_window, PredictionResult};
use crate::signal::Sequence;

/// Which state sequence a diagnostic runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateSpace {
    Hidden,
    /// LSTM cell states.
    Cell,
}

impl fmt::Display for StateSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateSpace::Hidden => write!(f, "hidden"),
            StateSpace::Cell => write!(f, "cell"),
        }
    }
}

/// Moving-window prediction plus the full state trace of every outer step.
#[derive(Debug, Clone)]
pub struct TracedPrediction {
    pub result: PredictionResult,
    /// One trace per prediction step, each of the window length.
    pub traces: Vec<StateTrace>,
}

/// Same computation as the moving-window predictor, recording the full
/// hidden (and cell) state sequence of every outer step.
pub fn traced_moving_window(model: &ModelBundle, x: &Sequence, p: usize) -> Result<TracedPrediction> {
    model.validate()?;
    if x.dim() != model.d {
        return Err(Error::dim("input dimension does not match the model"));
    }
    if p == 0 {
        return Err(Error::config("prediction horizon must be >= 1"));
    }
    let m = x.len();
    let mut window = x.data().clone();
    let mut traces = Vec::with_capacity(p);
    let mut points = Vec::with_capacity(p * model.d);
    let mut finals = Vec::with_capacity(p);
    let mut prediction = Array1::zeros(model.d);
    for j in 1..=p {
        if j >= 2 {
            advance_window(&mut window, prediction.view());
        }
        let trace = run_trace(&model.cell, &window);
        let s = trace.final_state().clone();
        prediction = readout(&model.readout, s.view());
        points.extend(prediction.iter());
        finals.push(s);
        traces.push(trace);
    }
    let data = Array2::from_shape_vec((p, model.d), points).expect("shape");
    let predicted = Sequence::new(data, x.t0() + m as f64 * x.dt(), x.dt())?;
    Ok(TracedPrediction {
        result: PredictionResult {
            predicted,
            final_states: Some(finals),
            recursion_count: (m * p) as u64,
        },
        traces,
    })
}

/// Norms of the shifted differences between consecutive prediction rounds.
///
/// Entry `i` (0-based, `i = 0..m-1`) is the distance between state `i+1` of
/// round `j` and state `i` of round `j+1`; the initial state of round `j+1`
/// is the zero vector, so entry 0 is just the norm of round `j`'s first
/// state.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedDiffSeries {
    pub values: Vec<f64>,
    pub step_index: usize,
    pub space: StateSpace,
}

fn space_states<'a>(trace: &'a StateTrace, space: StateSpace) -> Result<&'a [Array1<f64>]> {
    match space {
        StateSpace::Hidden => Ok(&trace.states),
        StateSpace::Cell => trace
            .cell_states
            .as_deref()
            .ok_or_else(|| Error::config("cell-state diagnostics need an LSTM trace")),
    }
}

/// The shifted differences as vectors (entry `i` holds `s^j_{i+1} - s^{j+1}_i`).
pub fn shifted_difference_vectors(
    traces: &[StateTrace],
    j: usize,
    space: StateSpace,
) -> Result<Vec<Array1<f64>>> {
    if j == 0 || j + 1 > traces.len() {
        return Err(Error::config(format!(
            "step index j={j} needs traces j and j+1 (have {})",
            traces.len()
        )));
    }
    let cur = space_states(&traces[j - 1], space)?;
    let next = space_states(&traces[j], space)?;
    if cur.len() != next.len() || cur.is_empty() {
        return Err(Error::dim("traces have inconsistent lengths"));
    }
    let n = cur[0].len();
    let zero = Array1::zeros(n);
    Ok((0..cur.len())
        .map(|i| {
            let prev_round = if i == 0 { &zero } else { &next[i - 1] };
            &cur[i] - prev_round
        })
        .collect())
}

/// Norm series of [`shifted_difference_vectors`].
pub fn shifted_difference(
    traces: &[StateTrace],
    j: usize,
    space: StateSpace,
) -> Result<ShiftedDiffSeries> {
    let vectors = shifted_difference_vectors(traces, j, space)?;
    Ok(ShiftedDiffSeries {
        values: vectors.iter().map(|v| norm(v.view())).collect(),
        step_index: j,
        space,
    })
}

fn norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// Log-linear least-squares fit of a positive series.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    /// Per-step decay rate (negated slope of the log fit).
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: Range<usize>,
}

/// Index range covering the tail half of a series of length `len`.
pub fn tail_half(len: usize) -> Range<usize> {
    len / 2..len
}

/// Least-squares line through `(i, ln values[i])` over `window`;
/// `rate = -slope`. Every value in the window must be positive.
pub fn fit_log_linear(values: &[f64], window: Range<usize>) -> Result<DecayFit> {
    if window.start >= window.end || window.end > values.len() {
        return Err(Error::config(format!(
            "fit window {window:?} out of bounds for series of length {}",
            values.len()
        )));
    }
    if window.len() < 2 {
        return Err(Error::config("fit window needs at least 2 points"));
    }
    let pts: Vec<(f64, f64)> = window
        .clone()
        .map(|i| {
            let v = values[i];
            if v > 0.0 {
                Ok((i as f64, v.ln()))
            } else {
                Err(Error::config(format!("non-positive value {v} at index {i}")))
            }
        })
        .collect::<Result<_>>()?;
    let n = pts.len() as f64;
    let mean_x = pts.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y = pts.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mean_x) * (x - mean_x)).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_tot: f64 = pts.iter().map(|(_, y)| (y - mean_y) * (y - mean_y)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|(x, y)| {
            let fit = intercept + slope * x;
            (y - fit) * (y - fit)
        })
        .sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(DecayFit { rate: -slope, intercept, r_squared, window })
}

/// [`fit_log_linear`] on a shifted-difference series.
pub fn fit_decay(series: &ShiftedDiffSeries, window: Range<usize>) -> Result<DecayFit> {
    fit_log_linear(&series.values, window)
}

/// Gaps between the next-to-last state of round `j+1` and the last state of
/// round `j`, for `j = 1..p-1`. Their smallness is what makes the reduced
/// map accurate.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSeries {
    pub values: Vec<f64>,
}

pub fn epsilon_gap(traces: &[StateTrace]) -> Result<EpsilonSeries> {
    if traces.len() < 2 {
        return Err(Error::config("epsilon gap needs at least 2 traces"));
    }
    let m = traces[0].len();
    if m < 2 {
        return Err(Error::config("epsilon gap needs windows of length >= 2"));
    }
    let values = (1..traces.len())
        .map(|j| {
            let last_prev = &traces[j - 1].states[m - 1];
            let next_to_last = &traces[j].states[m - 2];
            norm((next_to_last - last_prev).view())
        })
        .collect();
    Ok(EpsilonSeries { values })
}

/// First-order noise response of the final state, per amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseLinearityReport {
    pub amplitudes: Vec<f64>,
    /// `r(a) = ||s_m(a) - s_m(0)|| / a` for a frozen noise draw.
    pub ratios: Vec<f64>,
    /// `(max r - min r) / max r`; small when the first-order term dominates.
    pub max_relative_spread: f64,
}

/// Core of the linearity check, generic over the final-state map so a linear
/// test double can stand in for a model.
pub fn linearity_ratios(
    final_state: impl Fn(&Array2<f64>) -> Array1<f64>,
    clean: &Array2<f64>,
    amplitudes: &[f64],
    seed: u64,
) -> Result<NoiseLinearityReport> {
    if amplitudes.is_empty() {
        return Err(Error::config("need at least one amplitude"));
    }
    if amplitudes.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::config("amplitudes must be strictly positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Array2::from_shape_fn(clean.dim(), |_| StandardNormal.sample(&mut rng));
    let base = final_state(clean);
    let ratios: Vec<f64> = amplitudes
        .iter()
        .map(|&a| {
            let perturbed = clean + &(a * &noise);
            norm((final_state(&perturbed) - &base).view()) / a
        })
        .collect();
    let max = ratios.iter().fold(0.0f64, |m, &r| m.max(r));
    let min = ratios.iter().fold(f64::INFINITY, |m, &r| m.min(r));
    let max_relative_spread = if max == 0.0 { 0.0 } else { (max - min) / max };
    Ok(NoiseLinearityReport { amplitudes: amplitudes.to_vec(), ratios, max_relative_spread })
}

/// Checks that the final state responds linearly to small input noise: for a
/// frozen noise realization, `r(a)` should be nearly independent of `a`.
pub fn noise_linearity_check(
    model: &ModelBundle,
    x_clean: &Sequence,
    amplitudes: &[f64],
    seed: u64,
) -> Result<NoiseLinearityReport> {
    model.validate()?;
    if x_clean.dim() != model.d {
        return Err(Error::dim("input dimension does not match the model"));
    }
    linearity_ratios(
        |data| run_final(&model.cell, data).0,
        x_clean.data(),
        amplitudes,
        seed,
    )
}

/// Step-to-step Jacobian of the basic cell w.r.t. the previous state,
/// evaluated from the *next* state: `diag(1 - s^2) · w_s`. Panics if a
/// state component leaves `[-1, 1]`.
pub fn basic_jacobian(p: &BasicParams, s_next: ArrayView1<f64>) -> Array2<f64> {
    assert_eq!(s_next.len(), p.input.w_s.nrows(), "basic_jacobian: state length mismatch");
    assert!(
        s_next.iter().all(|v| v.abs() <= 1.0 + 1e-12),
        "basic_jacobian: state outside [-1, 1]"
    );
    let mut out = p.input.w_s.clone();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let factor = 1.0 - s_next[i] * s_next[i];
        row.mapv_inplace(|v| v * factor);
    }
    out
}

/// `||A·a||^2` both directly and through the eigenbasis of `U = A^T A`
/// (`sum_k lambda_k w_k^2` with `w_k = e_k · a`). Returns
/// `(direct, via_eigenbasis, eigenvalues, weights)`.
pub fn eigen_norm_identity(
    jac: &Array2<f64>,
    delta_prev: &Array1<f64>,
) -> (f64, f64, Vec<f64>, Vec<f64>) {
    let u = jac.t().dot(jac);
    let eig = sym_eigen(&u);
    let weights: Vec<f64> = (0..u.nrows())
        .map(|k| eig.vectors.column(k).dot(delta_prev))
        .collect();
    let eigen_sq: f64 = eig
        .values
        .iter()
        .zip(&weights)
        .map(|(l, w)| l * w * w)
        .sum();
    let mapped = jac.dot(delta_prev);
    let direct_sq = mapped.dot(&mapped);
    (direct_sq, eigen_sq, eig.values.to_vec(), weights)
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.max(b);
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// One analysed transition of the shifted-difference chain.
#[derive(Debug, Clone)]
pub struct ContractionStep {
    /// Outer prediction step `j`.
    pub step: usize,
    /// Transition index `i` within the window.
    pub index: usize,
    pub jacobian: Array2<f64>,
    pub eigenvalues: Vec<f64>,
    /// Expansion weights of the previous shifted difference in the
    /// eigenbasis of `A^T A`.
    pub weights: Vec<f64>,
    /// Measured `||delta_{i-1}||` and `||delta_i||`.
    pub norm_prev: f64,
    pub norm_curr: f64,
    /// `||A·delta_{i-1}||^2` computed directly and via the eigenbasis.
    pub mapped_sq: f64,
    pub eigen_sq: f64,
}

impl ContractionStep {
    pub fn contracting(&self) -> bool {
        self.norm_curr < self.norm_prev
    }
}

/// Contraction analysis of a traced run (basic cell only).
#[derive(Debug, Clone)]
pub struct ContractionReport {
    pub steps: Vec<ContractionStep>,
    /// Share of transitions with a strictly decreasing measured norm.
    pub fraction_contracting: f64,
    /// Worst relative gap between the direct and eigenbasis norms.
    pub identity_residual: f64,
}

/// Runs a traced prediction and analyses every shifted-difference transition
/// through the Jacobian chain and the eigenbasis identity.
pub fn contraction_report(model: &ModelBundle, x: &Sequence, p: usize) -> Result<ContractionReport> {
    let CellParams::Basic(params) = &model.cell else {
        return Err(Error::config("contraction analysis applies to the basic cell only"));
    };
    if x.len() < 2 {
        return Err(Error::config("contraction analysis needs a window of length >= 2"));
    }
    if p < 2 {
        return Err(Error::config("contraction analysis needs at least 2 prediction steps"));
    }
    let traced = traced_moving_window(model, x, p)?;
    let m = x.len();
    let mut steps = Vec::with_capacity((p - 1) * (m - 1));
    let mut contracting = 0usize;
    let mut identity_residual = 0.0f64;
    for j in 1..traced.traces.len() {
        let deltas = shifted_difference_vectors(&traced.traces, j, StateSpace::Hidden)?;
        for i in 1..m {
            let s_next = &traced.traces[j - 1].states[i];
            let jac = basic_jacobian(params, s_next.view());
            let (mapped_sq, eigen_sq, eigenvalues, weights) =
                eigen_norm_identity(&jac, &deltas[i - 1]);
            identity_residual = identity_residual.max(relative_gap(mapped_sq, eigen_sq));
            let step = ContractionStep {
                step: j,
                index: i,
                jacobian: jac,
                eigenvalues,
                weights,
                norm_prev: norm(deltas[i - 1].view()),
                norm_curr: norm(deltas[i].view()),
                mapped_sq,
                eigen_sq,
            };
            if step.contracting() {
                contracting += 1;
            }
            steps.push(step);
        }
    }
    let fraction_contracting = contracting as f64 / steps.len() as f64;
    Ok(ContractionReport { steps, fraction_contracting, identity_residual })
}

/// CSV for one diagnostic series: `#` metadata lines, `i,value` rows, and an
/// optional decay-fit comment footer.
pub fn diagnostics_csv(meta: &[(&str, String)], values: &[f64], fit: Option<&DecayFit>) -> String {
    let mut out = String::from("# ");
    out.push_str(
        &meta
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" "),
    );
    out.push('\n');
    out.push_str("i,value\n");
    for (i, v) in values.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i, crate::signal::fmt_f64(*v)));
    }
    if let Some(fit) = fit {
        out.push_str(&format!(
            "# fit window={}..{} rate={} intercept={} r2={}\n",
            fit.window.start,
            fit.window.end,
            crate::signal::fmt_f64(fit.rate),
            crate::signal::fmt_f64(fit.intercept),
            crate::signal::fmt_f64(fit.r_squared)
        ));
    }
    out
}

/// CSV for a contraction report (scalar columns only; Jacobians and
/// eigenvectors stay in memory).
pub fn contraction_to_csv(report: &ContractionReport) -> String {
    let mut out = format!(
        "# fraction_contracting={} identity_residual={}\n",
        crate::signal::fmt_f64(report.fraction_contracting),
        crate::signal::fmt_f64(report.identity_residual)
    );
    out.push_str("j,i,norm_prev,norm_curr,contracting,mapped_sq,eigen_sq,lambda_max\n");
    for s in &report.steps {
        let lambda_max = s.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l));
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.step,
            s.index,
            crate::signal::fmt_f64(s.norm_prev),
            crate::signal::fmt_f64(s.norm_curr),
            u8::from(s.contracting()),
            crate::signal::fmt_f64(s.mapped_sq),
            crate::signal::fmt_f64(s.eigen_sq),
            crate::signal::fmt_f64(lambda_max)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::{basic_step, random_model, run_sequence, CellKind, Gate};
    use crate::predict::moving_window_predict;
    use crate::signal::{add_noise, sample_series, WaveKind};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn traced_run_matches_plain_predictor_bit_for_bit() {
        let model = random_model(CellKind::Lstm, 5, 1, 41);
        let clean = sample_series(WaveKind::Triangle, 0.0, 20, 0.01).unwrap();
        let x = add_noise(&clean, 0.15, 3).unwrap();
        let traced = traced_moving_window(&model, &x, 8).unwrap();
        let plain = moving_window_predict(&model, &x, 8).unwrap();
        assert_eq!(traced.result.predicted, plain.predicted);
        assert_eq!(traced.result.recursion_count, plain.recursion_count);

        assert_eq!(traced.traces.len(), 8);
        assert!(traced.traces.iter().all(|t| t.len() == 20));

        let direct = run_sequence(&model, &x).unwrap();
        assert_eq!(traced.traces[0], direct);
    }

    fn synthetic_traces(n: usize, m: usize, shift_exact: bool) -> Vec<StateTrace> {
        // trace 2 equals trace 1 shifted one step left (plus a fresh tail)
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut states1: Vec<Array1<f64>> = Vec::with_capacity(m);
        states1.push(Array1::zeros(n));
        for _ in 1..m {
            states1.push(Array1::from_shape_fn(n, |_| rng.gen_range(-0.9..0.9)));
        }
        let mut states2: Vec<Array1<f64>> = states1[1..].to_vec();
        states2.push(Array1::from_shape_fn(n, |_| rng.gen_range(-0.9..0.9)));
        if !shift_exact {
            for s in states2.iter_mut() {
                s.mapv_inplace(|v| v + 1e-3);
            }
        }
        vec![
            StateTrace { states: states1, cell_states: None },
            StateTrace { states: states2, cell_states: None },
        ]
    }

    #[test]
    fn shifted_difference_of_exactly_shifted_traces_is_zero() {
        let traces = synthetic_traces(3, 10, true);
        let series = shifted_difference(&traces, 1, StateSpace::Hidden).unwrap();
        assert_eq!(series.values.len(), 10);
        assert!(series.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_shifted_difference_is_first_state_norm() {
        let model = random_model(CellKind::Basic, 4, 1, 19);
        let x = sample_series(WaveKind::Sine, 0.0, 15, 0.01).unwrap();
        let traced = traced_moving_window(&model, &x, 3).unwrap();
        let series = shifted_difference(&traced.traces, 1, StateSpace::Hidden).unwrap();
        let s1 = &traced.traces[0].states[0];
        assert_abs_diff_eq!(series.values[0], s1.dot(s1).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn cell_space_requires_lstm() {
        let traces = synthetic_traces(3, 6, true);
        assert!(shifted_difference(&traces, 1, StateSpace::Cell).is_err());
        assert!(shifted_difference(&traces, 2, StateSpace::Hidden).is_err());
        assert!(shifted_difference(&traces, 0, StateSpace::Hidden).is_err());
    }

    #[test]
    fn fit_recovers_exact_exponential() {
        let values: Vec<f64> = (0..40).map(|i| 2.5 * (-0.3 * i as f64).exp()).collect();
        let series = ShiftedDiffSeries { values, step_index: 1, space: StateSpace::Hidden };
        let fit = fit_decay(&series, 0..40).unwrap();
        assert_abs_diff_eq!(fit.rate, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.intercept, 2.5f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_on_constant_series_has_zero_rate() {
        let fit = fit_log_linear(&[0.7; 12], 0..12).unwrap();
        assert_abs_diff_eq!(fit.rate, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn fit_rejects_bad_windows_and_nonpositive_values() {
        assert!(fit_log_linear(&[1.0, 2.0], 0..3).is_err());
        assert!(fit_log_linear(&[1.0, 0.0, 2.0], 0..3).is_err());
        assert!(fit_log_linear(&[1.0, -1.0], 0..2).is_err());
        assert!(fit_log_linear(&[1.0, 2.0, 3.0], 1..2).is_err());
    }

    #[test]
    fn tail_half_covers_the_back() {
        assert_eq!(tail_half(75), 37..75);
        assert_eq!(tail_half(4), 2..4);
    }

    #[test]
    fn epsilon_gap_of_exactly_shifted_traces_is_zero() {
        let traces = synthetic_traces(3, 10, true);
        let eps = epsilon_gap(&traces).unwrap();
        assert_eq!(eps.values.len(), 1);
        assert_abs_diff_eq!(eps.values[0], 0.0, epsilon = 1e-15);

        let single = &traces[..1];
        assert!(epsilon_gap(single).is_err());
    }

    #[test]
    fn linear_test_double_has_exactly_constant_ratio() {
        // final state of a linear recursion: s_i = 0.5 s_{i-1} + w x_i
        let w = array![0.7, -0.3];
        let final_state = |data: &Array2<f64>| {
            let mut s = array![0.0, 0.0];
            for row in data.rows() {
                s = 0.5 * &s + &(&w * row[0]);
            }
            s
        };
        let clean = Array2::from_shape_fn((20, 1), |(i, _)| (i as f64 * 0.1).sin());
        let report =
            linearity_ratios(final_state, &clean, &[1e-2, 1e-3, 1e-4], 7).unwrap();
        assert!(report.max_relative_spread < 1e-10, "spread {}", report.max_relative_spread);
    }

    #[test]
    fn zero_amplitude_is_excluded_by_the_guard() {
        let model = random_model(CellKind::Basic, 3, 1, 2);
        let x = sample_series(WaveKind::Sine, 0.0, 10, 0.01).unwrap();
        assert!(noise_linearity_check(&model, &x, &[0.0, 1e-3], 9).is_err());
        assert!(noise_linearity_check(&model, &x, &[], 9).is_err());
    }

    #[test]
    fn jacobian_at_zero_state_is_the_recurrent_matrix() {
        let p = BasicParams {
            input: Gate {
                w_x: array![[0.3], [0.1]],
                w_s: array![[0.5, -0.2], [0.7, 0.4]],
                b: array![0.0, 0.0],
            },
        };
        let jac = basic_jacobian(&p, array![0.0, 0.0].view());
        assert_eq!(jac, p.input.w_s);

        let saturated = basic_jacobian(&p, array![1.0, -1.0].view());
        assert!(saturated.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let model = random_model(CellKind::Basic, 5, 1, 77);
        let CellParams::Basic(p) = &model.cell else { panic!() };
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let s_prev = Array1::from_shape_fn(5, |_| rng.gen_range(-0.9..0.9));
            let x = array![rng.gen_range(-1.0..1.0)];
            let s_next = basic_step(p, x.view(), s_prev.view());
            let jac = basic_jacobian(p, s_next.view());

            let h = 1e-6;
            for k in 0..5 {
                let mut plus = s_prev.clone();
                plus[k] += h;
                let mut minus = s_prev.clone();
                minus[k] -= h;
                let col = (basic_step(p, x.view(), plus.view())
                    - basic_step(p, x.view(), minus.view()))
                    / (2.0 * h);
                for row in 0..5 {
                    let rel = (jac[[row, k]] - col[row]).abs() / col[row].abs().max(1e-8);
                    assert!(rel < 1e-6, "row {row} col {k}: {} vs {}", jac[[row, k]], col[row]);
                }
            }
        }
    }

    #[test]
    fn eigen_identity_is_exact_algebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2usize, 5, 10, 20] {
            for _ in 0..10 {
                let jac = Array2::from_shape_fn((n, n), |_| rng.gen_range(-1.0..1.0));
                let a = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
                let (direct, eigen, values, weights) = eigen_norm_identity(&jac, &a);
                assert_eq!(values.len(), n);
                assert_eq!(weights.len(), n);
                assert!(values.iter().all(|&l| l >= -1e-10));
                assert!(relative_gap(direct, eigen) <= 1e-8, "{direct} vs {eigen}");
            }
        }
    }

    #[test]
    fn half_identity_recurrence_contracts_every_step() {
        let mut model = ModelBundle::zeros(CellKind::Basic, 4, 1);
        let CellParams::Basic(p) = &mut model.cell else { panic!() };
        p.input.w_x = array![[0.8], [-0.5], [0.3], [0.6]];
        p.input.w_s = 0.5 * Array2::eye(4);
        model.readout.w = Array2::from_shape_fn((1, 4), |(_, j)| 0.2 + 0.1 * j as f64);
        // start away from the sine's zero so the first state is nonzero
        let x = sample_series(WaveKind::Sine, 0.13, 12, 0.01).unwrap();
        let report = contraction_report(&model, &x, 3).unwrap();
        assert_eq!(report.steps.len(), 2 * 11);
        assert_eq!(report.fraction_contracting, 1.0);
        assert!(report.identity_residual <= 1e-8);
    }

    #[test]
    fn contraction_rejects_non_basic_models() {
        let model = random_model(CellKind::Lstm, 3, 1, 4);
        let x = sample_series(WaveKind::Sine, 0.0, 10, 0.01).unwrap();
        assert!(contraction_report(&model, &x, 3).is_err());
    }

    #[test]
    fn jacobian_chain_reproduces_the_measured_difference() {
        // mildly contractive seeded model: the series has to enter the
        // first-order regime without decaying all the way to exact zeros
        let mut model = random_model(CellKind::Basic, 6, 1, 15);
        {
            let CellParams::Basic(p) = &mut model.cell else { panic!() };
            p.input.w_s *= 0.8;
        }
        let clean = sample_series(WaveKind::Sine, 0.0, 16, 0.01).unwrap();
        let x = add_noise(&clean, 0.15, 8).unwrap();
        let traced = traced_moving_window(&model, &x, 2).unwrap();
        let deltas = shifted_difference_vectors(&traced.traces, 1, StateSpace::Hidden).unwrap();
        let norms: Vec<f64> = deltas.iter().map(|d| norm(d.view())).collect();

        let m = x.len();
        let i0 = (0..m)
            .find(|&i| norms[i..].iter().all(|&v| v < 0.1))
            .expect("series enters the first-order regime");
        assert!(i0 < m - 5, "need a nontrivial chain, i0={i0}");
        assert!(norms[m - 1] > 1e-12, "series decayed to the float floor");

        let CellParams::Basic(p) = &model.cell else { panic!() };
        let mut v = deltas[i0].clone();
        for i in i0 + 1..m {
            let jac = basic_jacobian(p, traced.traces[0].states[i].view());
            v = jac.dot(&v);
        }
        let predicted = norm(v.view());
        let measured = norms[m - 1];
        let rel = (predicted - measured).abs() / measured;
        assert!(rel < 0.1, "chain prediction {predicted} vs measured {measured} (rel {rel})");
    }

    #[test]
    fn diagnostics_csv_layout() {
        let values = vec![1.0, 0.5, 0.25];
        let fit = fit_log_linear(&values, 0..3).unwrap();
        let csv = diagnostics_csv(
            &[("j", "1".into()), ("space", "hidden".into()), ("a", "0.15".into())],
            &values,
            Some(&fit),
        );
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# j=1 space=hidden a=0.15");
        assert_eq!(lines[1], "i,value");
        assert!(lines[2].starts_with("0,"));
        assert!(lines.last().unwrap().starts_with("# fit window=0..3 rate="));
    }
}
