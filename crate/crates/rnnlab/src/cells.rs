//! Exact forward dynamics of the three recurrent cells (basic, gated, LSTM),
//! the linear readout, parameter initialization and model persistence.
//!
//! Single-step functions treat shape mismatches as programming errors and
//! panic; sequence-level entry points validate their inputs and return
//! `Result`. All arithmetic is f64: the dynamics diagnostics downstream need
//! ~1e-12 of headroom.

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::signal::Sequence;

/// The recurrent cell families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Basic,
    Gated,
    Lstm,
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellKind::Basic => write!(f, "basic"),
            CellKind::Gated => write!(f, "gated"),
            CellKind::Lstm => write!(f, "lstm"),
        }
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(CellKind::Basic),
            "gated" => Ok(CellKind::Gated),
            "lstm" => Ok(CellKind::Lstm),
            other => Err(Error::parse(format!("unknown cell kind `{other}`"))),
        }
    }
}

/// One gate's affine parameters: pre-activation is `w_x·x + w_s·s + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    /// n x d input weights.
    pub w_x: Array2<f64>,
    /// n x n recurrent weights.
    pub w_s: Array2<f64>,
    /// n-vector bias.
    pub b: Array1<f64>,
}

impl Gate {
    fn zeros(n: usize, d: usize) -> Gate {
        Gate { w_x: Array2::zeros((n, d)), w_s: Array2::zeros((n, n)), b: Array1::zeros(n) }
    }

    fn dims_ok(&self, n: usize, d: usize) -> bool {
        self.w_x.dim() == (n, d) && self.w_s.dim() == (n, n) && self.b.len() == n
    }

    fn affine(&self, x: ArrayView1<f64>, s: ArrayView1<f64>) -> Array1<f64> {
        let mut z = self.w_x.dot(&x);
        z += &self.w_s.dot(&s);
        z += &self.b;
        z
    }
}

/// Basic cell: `s_i = tanh(w_x·x_i + w_s·s_{i-1} + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasicParams {
    pub input: Gate,
}

/// Gated cell with input, reset and memory gates; the update interpolates
/// `s_i = (1 - i_i) ⊗ m_i + i_i ⊗ s_{i-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedParams {
    pub input: Gate,
    pub reset: Gate,
    pub memory: Gate,
}

/// LSTM cell with input, forget, memory and output gates plus a cell state.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input: Gate,
    pub forget: Gate,
    pub memory: Gate,
    pub output: Gate,
}

/// Cell parameters, tagged by kind.
#[derive(Debug, Clone, PartialEq)]
pub enum CellParams {
    Basic(BasicParams),
    Gated(GatedParams),
    Lstm(LstmParams),
}

impl CellParams {
    pub fn kind(&self) -> CellKind {
        match self {
            CellParams::Basic(_) => CellKind::Basic,
            CellParams::Gated(_) => CellKind::Gated,
            CellParams::Lstm(_) => CellKind::Lstm,
        }
    }

    /// Gates in canonical order with their short names
    /// (basic: i; gated: i, r, m; LSTM: i, f, m, o).
    pub fn gates(&self) -> Vec<(&'static str, &Gate)> {
        match self {
            CellParams::Basic(p) => vec![("i", &p.input)],
            CellParams::Gated(p) => vec![("i", &p.input), ("r", &p.reset), ("m", &p.memory)],
            CellParams::Lstm(p) => vec![
                ("i", &p.input),
                ("f", &p.forget),
                ("m", &p.memory),
                ("o", &p.output),
            ],
        }
    }

    pub fn gates_mut(&mut self) -> Vec<(&'static str, &mut Gate)> {
        match self {
            CellParams::Basic(p) => vec![("i", &mut p.input)],
            CellParams::Gated(p) => {
                vec![("i", &mut p.input), ("r", &mut p.reset), ("m", &mut p.memory)]
            }
            CellParams::Lstm(p) => vec![
                ("i", &mut p.input),
                ("f", &mut p.forget),
                ("m", &mut p.memory),
                ("o", &mut p.output),
            ],
        }
    }

    pub fn zeros(kind: CellKind, n: usize, d: usize) -> CellParams {
        let g = || Gate::zeros(n, d);
        match kind {
            CellKind::Basic => CellParams::Basic(BasicParams { input: g() }),
            CellKind::Gated => {
                CellParams::Gated(GatedParams { input: g(), reset: g(), memory: g() })
            }
            CellKind::Lstm => CellParams::Lstm(LstmParams {
                input: g(),
                forget: g(),
                memory: g(),
                output: g(),
            }),
        }
    }

    fn dims_ok(&self, n: usize, d: usize) -> bool {
        self.gates().iter().all(|(_, g)| g.dims_ok(n, d))
    }
}

/// Linear readout `x̄ = w·s + b` with `w` of shape d x n.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutParams {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl ReadoutParams {
    pub fn zeros(n: usize, d: usize) -> ReadoutParams {
        ReadoutParams { w: Array2::zeros((d, n)), b: Array1::zeros(d) }
    }
}

/// Training provenance carried by a model file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelMeta {
    pub seed: u64,
    pub epochs: usize,
    pub dataset_hash: String,
}

/// A complete model: cell parameters plus linear readout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub kind: CellKind,
    pub n: usize,
    pub d: usize,
    pub cell: CellParams,
    pub readout: ReadoutParams,
    pub meta: ModelMeta,
}

/// Hidden states (and, for LSTM, cell states) of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrace {
    /// s_1..s_m (s_0 = 0 is implicit).
    pub states: Vec<Array1<f64>>,
    /// c_1..c_m, present only for LSTM.
    pub cell_states: Option<Vec<Array1<f64>>>,
}

impl StateTrace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn final_state(&self) -> &Array1<f64> {
        self.states.last().expect("trace is nonempty")
    }

    pub fn final_cell_state(&self) -> Option<&Array1<f64>> {
        self.cell_states.as_ref().map(|c| c.last().expect("trace is nonempty"))
    }

    /// Hidden-state boundedness: every component in [-1, 1] (up to rounding).
    pub fn states_bounded(&self) -> bool {
        self.states
            .iter()
            .all(|s| s.iter().all(|v| v.abs() <= 1.0 + 1e-12))
    }
}

/// Numerically stable logistic sigmoid.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One basic-cell step: componentwise tanh of the affine pre-activation.
pub fn basic_step(p: &BasicParams, x: ArrayView1<f64>, s_prev: ArrayView1<f64>) -> Array1<f64> {
    let n = s_prev.len();
    assert!(p.input.dims_ok(n, x.len()), "basic_step: parameter/input shape mismatch");
    p.input.affine(x, s_prev).mapv_into(f64::tanh)
}

/// Intermediate gate activations of one gated-cell step (kept for BPTT).
#[derive(Debug, Clone)]
pub struct GatedStepCache {
    pub i: Array1<f64>,
    pub r: Array1<f64>,
    pub m: Array1<f64>,
    /// Recurrent part of the memory pre-activation, `w_s·s_{i-1}`, before
    /// the reset gate multiplies it.
    pub u: Array1<f64>,
}

/// One gated-cell step, returning the new state and its gate cache.
pub fn gated_step_cached(
    p: &GatedParams,
    x: ArrayView1<f64>,
    s_prev: ArrayView1<f64>,
) -> (Array1<f64>, GatedStepCache) {
    let n = s_prev.len();
    let d = x.len();
    assert!(
        p.input.dims_ok(n, d) && p.reset.dims_ok(n, d) && p.memory.dims_ok(n, d),
        "gated_step: parameter/input shape mismatch"
    );
    let i = p.input.affine(x, s_prev).mapv_into(sigmoid);
    let r = p.reset.affine(x, s_prev).mapv_into(sigmoid);
    let u = p.memory.w_s.dot(&s_prev);
    let mut zm = p.memory.w_x.dot(&x);
    zm += &(&r * &u);
    zm += &p.memory.b;
    let m = zm.mapv_into(f64::tanh);
    let s = (1.0 - &i) * &m + &i * &s_prev;
    (s, GatedStepCache { i, r, m, u })
}

/// One gated-cell step.
pub fn gated_step(p: &GatedParams, x: ArrayView1<f64>, s_prev: ArrayView1<f64>) -> Array1<f64> {
    gated_step_cached(p, x, s_prev).0
}

/// Intermediate gate activations of one LSTM step (kept for BPTT).
#[derive(Debug, Clone)]
pub struct LstmStepCache {
    pub o: Array1<f64>,
    pub i: Array1<f64>,
    pub f: Array1<f64>,
    pub m: Array1<f64>,
    pub tanh_c: Array1<f64>,
}

/// One LSTM step, returning the new (state, cell state) and the gate cache.
pub fn lstm_step_cached(
    p: &LstmParams,
    x: ArrayView1<f64>,
    s_prev: ArrayView1<f64>,
    c_prev: ArrayView1<f64>,
) -> (Array1<f64>, Array1<f64>, LstmStepCache) {
    let n = s_prev.len();
    let d = x.len();
    assert!(
        c_prev.len() == n
            && p.input.dims_ok(n, d)
            && p.forget.dims_ok(n, d)
            && p.memory.dims_ok(n, d)
            && p.output.dims_ok(n, d),
        "lstm_step: parameter/input shape mismatch"
    );
    let o = p.output.affine(x, s_prev).mapv_into(sigmoid);
    let i = p.input.affine(x, s_prev).mapv_into(sigmoid);
    let f = p.forget.affine(x, s_prev).mapv_into(sigmoid);
    let m = p.memory.affine(x, s_prev).mapv_into(f64::tanh);
    let c = &f * &c_prev + &i * &m;
    let tanh_c = c.mapv(f64::tanh);
    let s = &o * &tanh_c;
    (s, c, LstmStepCache { o, i, f, m, tanh_c })
}

/// One LSTM step.
pub fn lstm_step(
    p: &LstmParams,
    x: ArrayView1<f64>,
    s_prev: ArrayView1<f64>,
    c_prev: ArrayView1<f64>,
) -> (Array1<f64>, Array1<f64>) {
    let (s, c, _) = lstm_step_cached(p, x, s_prev, c_prev);
    (s, c)
}

/// Runs the cell over the rows of `data` from zero initial state, returning
/// only the final hidden state (and cell state for LSTM).
pub(crate) fn run_final(cell: &CellParams, data: &Array2<f64>) -> (Array1<f64>, Option<Array1<f64>>) {
    let n = match cell.gates().first() {
        Some((_, g)) => g.b.len(),
        None => unreachable!(),
    };
    match cell {
        CellParams::Basic(p) => {
            let mut s = Array1::zeros(n);
            for x in data.rows() {
                s = basic_step(p, x, s.view());
            }
            (s, None)
        }
        CellParams::Gated(p) => {
            let mut s = Array1::zeros(n);
            for x in data.rows() {
                s = gated_step(p, x, s.view());
            }
            (s, None)
        }
        CellParams::Lstm(p) => {
            let mut s = Array1::zeros(n);
            let mut c = Array1::zeros(n);
            for x in data.rows() {
                let (s2, c2) = lstm_step(p, x, s.view(), c.view());
                s = s2;
                c = c2;
            }
            (s, Some(c))
        }
    }
}

/// Like [`run_final`] but recording the full trace.
pub(crate) fn run_trace(cell: &CellParams, data: &Array2<f64>) -> StateTrace {
    let n = cell.gates()[0].1.b.len();
    let m = data.nrows();
    match cell {
        CellParams::Basic(p) => {
            let mut s = Array1::zeros(n);
            let mut states = Vec::with_capacity(m);
            for x in data.rows() {
                s = basic_step(p, x, s.view());
                states.push(s.clone());
            }
            StateTrace { states, cell_states: None }
        }
        CellParams::Gated(p) => {
            let mut s = Array1::zeros(n);
            let mut states = Vec::with_capacity(m);
            for x in data.rows() {
                s = gated_step(p, x, s.view());
                states.push(s.clone());
            }
            StateTrace { states, cell_states: None }
        }
        CellParams::Lstm(p) => {
            let mut s = Array1::zeros(n);
            let mut c = Array1::zeros(n);
            let mut states = Vec::with_capacity(m);
            let mut cells = Vec::with_capacity(m);
            for x in data.rows() {
                let (s2, c2) = lstm_step(p, x, s.view(), c.view());
                s = s2;
                c = c2;
                states.push(s.clone());
                cells.push(c.clone());
            }
            StateTrace { states, cell_states: Some(cells) }
        }
    }
}

/// Applies the model's cell over a whole sequence from zero initial state.
pub fn run_sequence(model: &ModelBundle, x: &Sequence) -> Result<StateTrace> {
    if x.dim() != model.d {
        return Err(Error::dim(format!(
            "input dimension {} does not match model dimension {}",
            x.dim(),
            model.d
        )));
    }
    let trace = run_trace(&model.cell, x.data());
    debug_assert!(trace.states_bounded());
    Ok(trace)
}

/// Linear readout `w·s + b`.
pub fn readout(r: &ReadoutParams, s: ArrayView1<f64>) -> Array1<f64> {
    assert_eq!(r.w.ncols(), s.len(), "readout: state length mismatch");
    r.w.dot(&s) + &r.b
}

impl ModelBundle {
    /// Validates internal shape consistency.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::config("model needs n >= 1 and d >= 1"));
        }
        if self.cell.kind() != self.kind {
            return Err(Error::config("cell parameter variant does not match kind"));
        }
        if !self.cell.dims_ok(self.n, self.d) {
            return Err(Error::dim("cell parameter shapes inconsistent with (n, d)"));
        }
        if self.readout.w.dim() != (self.d, self.n) || self.readout.b.len() != self.d {
            return Err(Error::dim("readout shapes inconsistent with (n, d)"));
        }
        let finite = self
            .tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::config("model contains non-finite parameters"));
        }
        Ok(())
    }

    /// All-zero model of the given shape.
    pub fn zeros(kind: CellKind, n: usize, d: usize) -> ModelBundle {
        ModelBundle {
            kind,
            n,
            d,
            cell: CellParams::zeros(kind, n, d),
            readout: ReadoutParams::zeros(n, d),
            meta: ModelMeta::default(),
        }
    }

    /// Named tensors in canonical order: per gate `W_{g}x`, `W_{g}s`, `b_{g}`,
    /// then the readout `W`, `b`. Vectors are reported as 1 x n matrices.
    pub fn tensors(&self) -> Vec<(String, Array2<f64>)> {
        let mut out = Vec::new();
        for (g, gate) in self.cell.gates() {
            out.push((format!("W_{g}x"), gate.w_x.clone()));
            out.push((format!("W_{g}s"), gate.w_s.clone()));
            out.push((format!("b_{g}"), row_matrix(&gate.b)));
        }
        out.push(("W".to_string(), self.readout.w.clone()));
        out.push(("b".to_string(), row_matrix(&self.readout.b)));
        out
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.flatten().len()
    }

    /// Flattens all parameters into one vector (canonical tensor order,
    /// row-major within each tensor).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (_, gate) in self.cell.gates() {
            out.extend(gate.w_x.iter());
            out.extend(gate.w_s.iter());
            out.extend(gate.b.iter());
        }
        out.extend(self.readout.w.iter());
        out.extend(self.readout.b.iter());
        out
    }

    /// Writes a flat parameter vector (as produced by [`Self::flatten`])
    /// back into the model.
    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut pos = 0;
        let mut take = |tensor: &mut [f64]| {
            tensor.copy_from_slice(&flat[pos..pos + tensor.len()]);
            pos += tensor.len();
        };
        for (_, gate) in self.cell.gates_mut() {
            take(gate.w_x.as_slice_mut().expect("contiguous"));
            take(gate.w_s.as_slice_mut().expect("contiguous"));
            take(gate.b.as_slice_mut().expect("contiguous"));
        }
        take(self.readout.w.as_slice_mut().expect("contiguous"));
        take(self.readout.b.as_slice_mut().expect("contiguous"));
        assert_eq!(pos, flat.len(), "flat parameter vector has wrong length");
    }

    /// A copy of this model with parameters replaced by `flat`.
    pub fn with_flat(&self, flat: &[f64]) -> ModelBundle {
        let mut out = self.clone();
        out.assign_flat(flat);
        out
    }
}

fn row_matrix(v: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("shape")
}

/// Fresh model, deterministic in `seed`: input and readout weights drawn
/// uniformly from ±1/sqrt(fan-in), recurrent matrices random orthogonal,
/// biases zero except the LSTM forget gate (bias 1, so early training does
/// not flush the cell state). Orthogonal recurrence and the forget-bias
/// offset measurably improve how well trained models track a wave under
/// recursive prediction.
pub fn init_params(kind: CellKind, n: usize, d: usize, seed: u64) -> ModelBundle {
    assert!(n >= 1 && d >= 1, "init_params needs n >= 1 and d >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = ModelBundle::zeros(kind, n, d);
    let x_scale = 1.0 / (d as f64).sqrt();
    let s_scale = 1.0 / (n as f64).sqrt();
    for (_, gate) in model.cell.gates_mut() {
        fill_uniform(&mut gate.w_x, x_scale, &mut rng);
        gate.w_s = crate::linalg::random_orthogonal(n, &mut rng);
    }
    if let CellParams::Lstm(p) = &mut model.cell {
        p.forget.b.fill(1.0);
    }
    fill_uniform(&mut model.readout.w, s_scale, &mut rng);
    model.meta = ModelMeta { seed, epochs: 0, dataset_hash: String::new() };
    model
}

fn fill_uniform(m: &mut Array2<f64>, scale: f64, rng: &mut ChaCha8Rng) {
    for v in m.iter_mut() {
        *v = rng.gen_range(-scale..scale);
    }
}

// --- model persistence ----------------------------------------------------
//
// Versioned plain-text format:
//
//   rnnmodel v1 kind=<basic|gated|lstm> n=<n> d=<d>
//   # meta seed=<u64> epochs=<usize> dataset=<hex>
//   <name> <rows> <cols>
//   <row-major values, one matrix row per line, 17 significant digits>
//   ...
//
// 17 significant digits are lossless for f64, so load -> save -> load is
// bit-exact.

/// Serializes a model to the plain-text format.
pub fn model_to_string(model: &ModelBundle) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "rnnmodel v1 kind={} n={} d={}\n",
        model.kind, model.n, model.d
    ));
    out.push_str(&format!(
        "# meta seed={} epochs={} dataset={}\n",
        model.meta.seed, model.meta.epochs, model.meta.dataset_hash
    ));
    for (name, tensor) in model.tensors() {
        out.push_str(&format!("{} {} {}\n", name, tensor.nrows(), tensor.ncols()));
        for row in tensor.rows() {
            let line: Vec<String> = row.iter().map(|v| crate::signal::fmt_f64(*v)).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    out
}

/// Parses a model from the plain-text format.
pub fn model_from_str(text: &str) -> Result<ModelBundle> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::parse("empty model file"))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("rnnmodel") || parts.next() != Some("v1") {
        return Err(Error::parse("model file must start with `rnnmodel v1`"));
    }
    let mut kind = None;
    let mut n = None;
    let mut d = None;
    for field in parts {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::parse(format!("bad header field `{field}`")))?;
        match key {
            "kind" => kind = Some(value.parse::<CellKind>()?),
            "n" => n = Some(parse_usize(value)?),
            "d" => d = Some(parse_usize(value)?),
            other => return Err(Error::parse(format!("unknown header key `{other}`"))),
        }
    }
    let kind = kind.ok_or_else(|| Error::parse("header is missing `kind`"))?;
    let n = n.ok_or_else(|| Error::parse("header is missing `n`"))?;
    let d = d.ok_or_else(|| Error::parse("header is missing `d`"))?;
    if n == 0 || d == 0 {
        return Err(Error::parse("model needs n >= 1 and d >= 1"));
    }

    let mut meta = ModelMeta::default();
    let mut blocks: Vec<(String, Array2<f64>)> = Vec::new();
    let mut pending: Option<(String, usize, usize, Vec<f64>)> = None;
    for raw in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(body) = rest.trim_start().strip_prefix("meta ") {
                for field in body.split_whitespace() {
                    if let Some((key, value)) = field.split_once('=') {
                        match key {
                            "seed" => meta.seed = parse_u64(value)?,
                            "epochs" => meta.epochs = parse_usize(value)?,
                            "dataset" => meta.dataset_hash = value.to_string(),
                            _ => {}
                        }
                    }
                }
            }
            continue;
        }
        let looks_like_header = pending
            .as_ref()
            .map(|(_, r, c, vals)| vals.len() >= r * c)
            .unwrap_or(true);
        if looks_like_header {
            if let Some(block) = finish_block(&mut pending)? {
                blocks.push(block);
            }
            let mut it = line.split_whitespace();
            let name = it.next().ok_or_else(|| Error::parse("missing tensor name"))?;
            let rows = parse_usize(it.next().ok_or_else(|| Error::parse("missing rows"))?)?;
            let cols = parse_usize(it.next().ok_or_else(|| Error::parse("missing cols"))?)?;
            if it.next().is_some() {
                return Err(Error::parse(format!("trailing fields in tensor header `{line}`")));
            }
            pending = Some((name.to_string(), rows, cols, Vec::with_capacity(rows * cols)));
        } else {
            let (_, _, _, vals) = pending.as_mut().expect("pending block");
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| Error::parse(format!("bad value `{tok}`")))?;
                if !v.is_finite() {
                    return Err(Error::parse(format!("non-finite parameter `{tok}`")));
                }
                vals.push(v);
            }
        }
    }
    if let Some(block) = finish_block(&mut pending)? {
        blocks.push(block);
    }

    let mut model = ModelBundle::zeros(kind, n, d);
    model.meta = meta;
    let expected = model.tensors();
    if blocks.len() != expected.len() {
        return Err(Error::parse(format!(
            "expected {} tensor blocks for kind={}, found {}",
            expected.len(),
            kind,
            blocks.len()
        )));
    }
    for ((name, tensor), (want_name, want)) in blocks.into_iter().zip(expected) {
        if name != want_name {
            return Err(Error::parse(format!(
                "unexpected tensor `{name}` (expected `{want_name}`)"
            )));
        }
        if tensor.dim() != want.dim() {
            return Err(Error::parse(format!(
                "tensor `{name}` has shape {:?}, expected {:?}",
                tensor.dim(),
                want.dim()
            )));
        }
        assign_named(&mut model, &name, &tensor);
    }
    model.validate()?;
    Ok(model)
}

fn finish_block(
    pending: &mut Option<(String, usize, usize, Vec<f64>)>,
) -> Result<Option<(String, Array2<f64>)>> {
    match pending.take() {
        None => Ok(None),
        Some((name, rows, cols, vals)) => {
            if vals.len() != rows * cols {
                return Err(Error::parse(format!(
                    "tensor `{name}` declares {}x{} = {} values, found {}",
                    rows,
                    cols,
                    rows * cols,
                    vals.len()
                )));
            }
            let m = Array2::from_shape_vec((rows, cols), vals)
                .map_err(|e| Error::parse(e.to_string()))?;
            Ok(Some((name, m)))
        }
    }
}

fn assign_named(model: &mut ModelBundle, name: &str, tensor: &Array2<f64>) {
    if name == "W" {
        model.readout.w.assign(tensor);
        return;
    }
    if name == "b" {
        model.readout.b.assign(&tensor.row(0));
        return;
    }
    for (g, gate) in model.cell.gates_mut() {
        if name == format!("W_{g}x") {
            gate.w_x.assign(tensor);
            return;
        }
        if name == format!("W_{g}s") {
            gate.w_s.assign(tensor);
            return;
        }
        if name == format!("b_{g}") {
            gate.b.assign(&tensor.row(0));
            return;
        }
    }
    unreachable!("tensor name `{name}` was validated against the expected list");
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse().map_err(|_| Error::parse(format!("bad integer `{s}`")))
}

fn parse_u64(s: &str) -> Result<u64> {
    s.parse().map_err(|_| Error::parse(format!("bad integer `{s}`")))
}

/// Writes a model file.
pub fn save_model(model: &ModelBundle, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, model_to_string(model))?;
    Ok(())
}

/// Reads a model file.
pub fn load_model(path: &std::path::Path) -> Result<ModelBundle> {
    let text = std::fs::read_to_string(path)?;
    model_from_str(&text)
}

/// Model with every tensor (biases included) drawn uniformly; init_params
/// zeroes biases, which is a poor point for gradient and step oracles.
#[cfg(test)]
pub(crate) fn random_model(kind: CellKind, n: usize, d: usize, seed: u64) -> ModelBundle {
    let mut model = init_params(kind, n, d, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    let mut fill = |v: &mut Array1<f64>| {
        for x in v.iter_mut() {
            *x = rng.gen_range(-0.4..0.4);
        }
    };
    for (_, gate) in model.cell.gates_mut() {
        fill(&mut gate.b);
    }
    fill(&mut model.readout.b);
    model
}
