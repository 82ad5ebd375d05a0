//! The two prediction algorithms and the quality/smoothness metrics.
//!
//! Moving-window prediction is a double recursion: each predicted point is
//! appended to the window (the oldest point drops out) and the cell is
//! re-run over the whole window from zero state, costing `m * p` cell steps.
//! The fast predictor runs the cell once over the input and then iterates an
//! input-free reduced map on the final state, costing `m + p - 1` steps. The
//! reduced map folds the readout back into each gate: feeding the cell its
//! own prediction `x = W·s + b` is an affine function of `s`, so the input
//! weights collapse into the recurrent ones.

use ndarray::{Array1, Array2, ArrayView1};

use crate::cells::{
    readout, run_final, sigmoid, CellKind, CellParams,
    ModelBundle,
};
use crate::error::{Error, Result};
use crate::signal::Sequence;

/// Max-abs-deviation threshold (in signal units) under which the fast and
/// moving-window predictions are reported as coinciding.
pub const COINCIDENCE_TOLERANCE: f64 = 0.05;

/// Output of either predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionResult {
    /// The `p` predicted points, starting one step after the input window.
    pub predicted: Sequence,
    /// Final hidden state per prediction step. The moving-window predictor
    /// keeps them (they are the per-step summaries the diagnostics need);
    /// the fast predictor stores only the current state and leaves this
    /// empty, so its memory stays O(n) regardless of the horizon.
    pub final_states: Option<Vec<Array1<f64>>>,
    /// Number of single cell-step applications performed.
    pub recursion_count: u64,
}

fn check_predict_args(model: &ModelBundle, x: &Sequence, p: usize) -> Result<()> {
    model.validate()?;
    if x.dim() != model.d {
        return Err(Error::dim(format!(
            "input dimension {} does not match model dimension {}",
            x.dim(),
            model.d
        )));
    }
    if p == 0 {
        return Err(Error::config("prediction horizon must be >= 1"));
    }
    Ok(())
}

fn predicted_sequence(model: &ModelBundle, x: &Sequence, points: Vec<f64>, p: usize) -> Sequence {
    let data = Array2::from_shape_vec((p, model.d), points).expect("shape");
    Sequence::new(data, x.t0() + x.len() as f64 * x.dt(), x.dt())
        .expect("predictions of a valid model are finite")
}

/// Shifts the window one step left and appends the prediction as the last
/// point.
pub(crate) fn advance_window(window: &mut Array2<f64>, prediction: ArrayView1<f64>) {
    let m = window.nrows();
    for i in 0..m - 1 {
        let next = window.row(i + 1).to_owned();
        window.row_mut(i).assign(&next);
    }
    window.row_mut(m - 1).assign(&prediction);
}

/// Moving-window prediction with a window hook: before each re-run of the
/// recurrence at outer steps `j >= 2`, `tweak(j, window)` may perturb the
/// maintained window in place (the robustness experiments inject reshuffling
/// here). The first step always reads the pristine input.
pub fn moving_window_predict_with(
    model: &ModelBundle,
    x: &Sequence,
    p: usize,
    mut tweak: impl FnMut(usize, &mut Array2<f64>),
) -> Result<PredictionResult> {
    check_predict_args(model, x, p)?;
    let m = x.len();
    let mut window = x.data().clone();
    let mut points = Vec::with_capacity(p * model.d);
    let mut finals = Vec::with_capacity(p);
    let mut prediction = Array1::zeros(model.d);
    for j in 1..=p {
        if j >= 2 {
            advance_window(&mut window, prediction.view());
            tweak(j, &mut window);
        }
        let (s, _) = run_final(&model.cell, &window);
        prediction = readout(&model.readout, s.view());
        points.extend(prediction.iter());
        finals.push(s);
    }
    Ok(PredictionResult {
        predicted: predicted_sequence(model, x, points, p),
        final_states: Some(finals),
        recursion_count: (m * p) as u64,
    })
}

/// The classical moving-window predictor (`m * p` cell steps).
pub fn moving_window_predict(model: &ModelBundle, x: &Sequence, p: usize) -> Result<PredictionResult> {
    moving_window_predict_with(model, x, p, |_, _| {})
}

/// Input-free per-gate parameters of the reduced map `G(s) = F(W·s + b, s)`.
///
/// For a gate whose pre-activation is `w_x·x + w_s·s + b_g`, substituting
/// `x = W·s + b` collapses it to `(w_x·W + w_s)·s + (w_x·b + b_g)`. The
/// gated cell's memory gate is the one exception: its reset gate multiplies
/// only the recurrent term, so the input lift `w_x·W` has to stay outside
/// the reset product and cannot be folded into a single matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum ReducedParams {
    Basic {
        w: Array2<f64>,
        b: Array1<f64>,
    },
    Gated {
        input: ReducedGate,
        reset: ReducedGate,
        /// Input lift of the memory gate, `w_x·W`, applied outside the reset
        /// product.
        memory_direct: Array2<f64>,
        /// Recurrent memory weights `w_s`, still scaled by the reset gate.
        memory_gated: Array2<f64>,
        memory_b: Array1<f64>,
    },
    Lstm {
        input: ReducedGate,
        forget: ReducedGate,
        memory: ReducedGate,
        output: ReducedGate,
    },
}

/// One collapsed gate: `w = w_x·W + w_s` (n x n), `b = w_x·b_readout + b_g`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedGate {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl ReducedParams {
    pub fn kind(&self) -> CellKind {
        match self {
            ReducedParams::Basic { .. } => CellKind::Basic,
            ReducedParams::Gated { .. } => CellKind::Gated,
            ReducedParams::Lstm { .. } => CellKind::Lstm,
        }
    }
}

fn reduce_gate(gate: &crate::cells::Gate, r: &crate::cells::ReadoutParams) -> ReducedGate {
    ReducedGate { w: gate.w_x.dot(&r.w) + &gate.w_s, b: gate.w_x.dot(&r.b) + &gate.b }
}

/// Folds the readout into every gate of the model's cell.
pub fn reduce_model(model: &ModelBundle) -> ReducedParams {
    let r = &model.readout;
    match &model.cell {
        CellParams::Basic(p) => {
            let g = reduce_gate(&p.input, r);
            ReducedParams::Basic { w: g.w, b: g.b }
        }
        CellParams::Gated(p) => ReducedParams::Gated {
            input: reduce_gate(&p.input, r),
            reset: reduce_gate(&p.reset, r),
            memory_direct: p.memory.w_x.dot(&r.w),
            memory_gated: p.memory.w_s.clone(),
            memory_b: p.memory.w_x.dot(&r.b) + &p.memory.b,
        },
        CellParams::Lstm(p) => ReducedParams::Lstm {
            input: reduce_gate(&p.input, r),
            forget: reduce_gate(&p.forget, r),
            memory: reduce_gate(&p.memory, r),
            output: reduce_gate(&p.output, r),
        },
    }
}

/// One application of the reduced map; `c_prev` is required exactly for the
/// LSTM kind. Panics on misuse, like the single-step cell functions.
pub fn reduced_step(
    rp: &ReducedParams,
    s_prev: ArrayView1<f64>,
    c_prev: Option<ArrayView1<f64>>,
) -> (Array1<f64>, Option<Array1<f64>>) {
    match rp {
        ReducedParams::Basic { w, b } => {
            let s = (w.dot(&s_prev) + b).mapv_into(f64::tanh);
            (s, None)
        }
        ReducedParams::Gated { input, reset, memory_direct, memory_gated, memory_b } => {
            let i = (input.w.dot(&s_prev) + &input.b).mapv_into(sigmoid);
            let r = (reset.w.dot(&s_prev) + &reset.b).mapv_into(sigmoid);
            let mut zm = memory_direct.dot(&s_prev);
            zm += &(&r * &memory_gated.dot(&s_prev));
            zm += memory_b;
            let mg = zm.mapv_into(f64::tanh);
            let s = (1.0 - &i) * &mg + &i * &s_prev;
            (s, None)
        }
        ReducedParams::Lstm { input, forget, memory, output } => {
            let c_prev = c_prev.expect("reduced_step: LSTM needs the previous cell state");
            let o = (output.w.dot(&s_prev) + &output.b).mapv_into(sigmoid);
            let i = (input.w.dot(&s_prev) + &input.b).mapv_into(sigmoid);
            let f = (forget.w.dot(&s_prev) + &forget.b).mapv_into(sigmoid);
            let mg = (memory.w.dot(&s_prev) + &memory.b).mapv_into(f64::tanh);
            let c = &f * &c_prev + &i * &mg;
            let s = &o * &c.mapv(f64::tanh);
            (s, Some(c))
        }
    }
}

/// The fast predictor: one pass over the input, then `p - 1` applications of
/// the reduced map (`m + p - 1` cell steps in total).
pub fn fast_predict(model: &ModelBundle, x: &Sequence, p: usize) -> Result<PredictionResult> {
    check_predict_args(model, x, p)?;
    let m = x.len();
    let rp = reduce_model(model);
    let (mut s, mut c) = run_final(&model.cell, x.data());
    let mut points = Vec::with_capacity(p * model.d);
    points.extend(readout(&model.readout, s.view()).iter());
    for _ in 2..=p {
        let (s2, c2) = reduced_step(&rp, s.view(), c.as_ref().map(|v| v.view()));
        s = s2;
        c = c2;
        points.extend(readout(&model.readout, s.view()).iter());
    }
    Ok(PredictionResult {
        predicted: predicted_sequence(model, x, points, p),
        final_states: None,
        recursion_count: (m + p - 1) as u64,
    })
}

/// Reciprocal mean squared deviation between two equal-length sequences.
/// Identical sequences map to `f64::INFINITY`.
pub fn quality(predicted: &Sequence, reference: &Sequence) -> Result<f64> {
    if predicted.len() != reference.len() || predicted.dim() != reference.dim() {
        return Err(Error::dim(format!(
            "quality needs equal shapes, got {}x{} vs {}x{}",
            predicted.len(),
            predicted.dim(),
            reference.len(),
            reference.dim()
        )));
    }
    let p = predicted.len() as f64;
    let sum: f64 = predicted
        .data()
        .rows()
        .into_iter()
        .zip(reference.data().rows())
        .map(|(a, b)| {
            let diff = &a.to_owned() - &b;
            diff.dot(&diff)
        })
        .sum();
    if sum == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(p / sum)
}

/// Mean squared second difference; the quantitative proxy for smoothness.
pub fn roughness(x: &Sequence) -> Result<f64> {
    let p = x.len();
    if p < 3 {
        return Err(Error::config("roughness needs at least 3 points"));
    }
    let data = x.data();
    let sum: f64 = (1..p - 1)
        .map(|i| {
            let second = &data.row(i + 1).to_owned() - &(2.0 * &data.row(i)) + &data.row(i - 1);
            second.dot(&second)
        })
        .sum();
    Ok(sum / (p - 2) as f64)
}

/// Largest absolute componentwise deviation between two equal-shape
/// sequences.
pub fn max_abs_deviation(a: &Sequence, b: &Sequence) -> Result<f64> {
    if a.len() != b.len() || a.dim() != b.dim() {
        return Err(Error::dim("max_abs_deviation needs equal shapes"));
    }
    Ok(a.data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// Prediction CSV: `step,t,predicted_1..predicted_d[,reference_1..reference_d]`.
pub fn prediction_to_csv(result: &PredictionResult, reference: Option<&Sequence>) -> Result<String> {
    let pred = &result.predicted;
    let d = pred.dim();
    if let Some(r) = reference {
        if r.len() != pred.len() || r.dim() != d {
            return Err(Error::dim("reference shape does not match the prediction"));
        }
    }
    let mut header = String::from("step,t");
    for k in 1..=d {
        header.push_str(&format!(",predicted_{k}"));
    }
    if reference.is_some() {
        for k in 1..=d {
            header.push_str(&format!(",reference_{k}"));
        }
    }
    let mut out = header;
    out.push('\n');
    for i in 0..pred.len() {
        out.push_str(&format!("{},{}", i + 1, crate::signal::fmt_f64(pred.time(i))));
        for v in pred.point(i) {
            out.push(',');
            out.push_str(&crate::signal::fmt_f64(*v));
        }
        if let Some(r) = reference {
            for v in r.point(i) {
                out.push(',');
                out.push_str(&crate::signal::fmt_f64(*v));
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// Window contents at outer step `j` (1-based), reconstructed from the input
/// and the predictions so far: the last `m - j + 1` input points followed by
/// the first `j - 1` predictions (all predicted points once `j > m`).
#[cfg(test)]
pub(crate) fn expected_window(x: &Sequence, predictions: &[Array1<f64>], j: usize) -> Array2<f64> {
    let m = x.len();
    let d = x.dim();
    let mut rows: Vec<ArrayView1<f64>> = Vec::with_capacity(m);
    if j <= m {
        for i in (j - 1)..m {
            rows.push(x.data().row(i));
        }
        for pred in &predictions[..j - 1] {
            rows.push(pred.view());
        }
    } else {
        for pred in &predictions[j - 1 - m..j - 1] {
            rows.push(pred.view());
        }
    }
    let mut out = Array2::zeros((m, d));
    for (i, row) in rows.into_iter().enumerate() {
        out.row_mut(i).assign(&row);
    }
    out
}
