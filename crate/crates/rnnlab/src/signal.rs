//! Signal generation: deterministic waves, noise injection, dataset
//! construction and the input perturbations used by the robustness studies.
//!
//! Everything here is a pure function of its inputs and a seed. Per-example
//! randomness is derived from `(seed, wave, example index)` with a splitmix
//! hash, so dataset construction is order-independent and parallelizable.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One full period of both waves, in dimensionless time units.
pub const WAVE_PERIOD: f64 = 1.0;

/// The two periodic test signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WaveKind {
    Sine,
    Triangle,
}

impl WaveKind {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            WaveKind::Sine => sine_wave(t),
            WaveKind::Triangle => triangle_wave(t),
        }
    }

    pub const ALL: [WaveKind; 2] = [WaveKind::Sine, WaveKind::Triangle];
}

impl fmt::Display for WaveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WaveKind::Sine => write!(f, "sine"),
            WaveKind::Triangle => write!(f, "triangle"),
        }
    }
}

impl FromStr for WaveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sine" => Ok(WaveKind::Sine),
            "triangle" => Ok(WaveKind::Triangle),
            other => Err(Error::parse(format!("unknown wave kind `{other}`"))),
        }
    }
}

/// `sin(2*pi*t)`, in `[-1, 1]`.
pub fn sine_wave(t: f64) -> f64 {
    (2.0 * std::f64::consts::PI * t).sin()
}

/// Shifted triangle wave `1/2 + asin(sin(2*pi*t))/pi`, in `[0, 1]`.
pub fn triangle_wave(t: f64) -> f64 {
    let s = (2.0 * std::f64::consts::PI * t).sin();
    0.5 + s.clamp(-1.0, 1.0).asin() / std::f64::consts::PI
}

/// An ordered multidimensional time series with uniform step.
///
/// Point `i` (0-based) sits at time `t0 + i * dt`. Rows of `data` are
/// points, columns are components.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    data: Array2<f64>,
    t0: f64,
    dt: f64,
}

impl Sequence {
    /// Builds a sequence, validating length >= 1, dt > 0 and finiteness.
    pub fn new(data: Array2<f64>, t0: f64, dt: f64) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::config("sequence must have at least one point and one component"));
        }
        if !(dt > 0.0) || !t0.is_finite() {
            return Err(Error::config(format!("invalid time grid: t0={t0}, dt={dt}")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("sequence contains non-finite values"));
        }
        Ok(Sequence { data, t0, dt })
    }

    /// One-dimensional sequence from a slice of values.
    pub fn from_values(values: &[f64], t0: f64, dt: f64) -> Result<Self> {
        let data = Array2::from_shape_vec((values.len(), 1), values.to_vec())
            .map_err(|e| Error::config(e.to_string()))?;
        Sequence::new(data, t0, dt)
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // length >= 1 by construction
    }

    /// Spatial dimension `d`.
    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Time of point `i` (0-based).
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    /// Flat copy of a 1-D sequence's values.
    pub fn values(&self) -> Vec<f64> {
        self.data.iter().copied().collect()
    }

    /// Same grid, new payload of identical shape.
    pub(crate) fn with_data(&self, data: Array2<f64>) -> Sequence {
        debug_assert_eq!(data.dim(), self.data.dim());
        Sequence { data, t0: self.t0, dt: self.dt }
    }
}

/// Samples `count` points of `wave` starting at `t0` with step `dt` (d = 1).
pub fn sample_series(wave: WaveKind, t0: f64, count: usize, dt: f64) -> Result<Sequence> {
    if count == 0 {
        return Err(Error::config("sample_series needs count >= 1"));
    }
    if !(dt > 0.0) {
        return Err(Error::config("sample_series needs dt > 0"));
    }
    let values: Vec<f64> = (0..count).map(|i| wave.eval(t0 + i as f64 * dt)).collect();
    Sequence::from_values(&values, t0, dt)
}

/// Noise distribution for [`add_noise_dist`]; amplitude `a` means standard
/// deviation `a` for Gaussian and support `[-a, a]` for uniform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseKind {
    #[default]
    Gaussian,
    Uniform,
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseKind::Gaussian => write!(f, "gaussian"),
            NoiseKind::Uniform => write!(f, "uniform"),
        }
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(NoiseKind::Gaussian),
            "uniform" => Ok(NoiseKind::Uniform),
            other => Err(Error::parse(format!("unknown noise kind `{other}`"))),
        }
    }
}

/// Perturbs every component of every point by `amplitude` times an
/// independent standard-normal draw from a generator seeded by `seed`.
pub fn add_noise(s: &Sequence, amplitude: f64, seed: u64) -> Result<Sequence> {
    add_noise_dist(s, amplitude, NoiseKind::Gaussian, seed)
}

/// [`add_noise`] with an explicit noise distribution.
pub fn add_noise_dist(s: &Sequence, amplitude: f64, kind: NoiseKind, seed: u64) -> Result<Sequence> {
    if !(amplitude >= 0.0) {
        return Err(Error::config("noise amplitude must be >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = s.data().map(|&v| v + amplitude * noise_draw(&mut rng, kind));
    Ok(s.with_data(data))
}

fn noise_draw(rng: &mut ChaCha8Rng, kind: NoiseKind) -> f64 {
    match kind {
        NoiseKind::Gaussian => rng.sample(StandardNormal),
        NoiseKind::Uniform => rng.gen_range(-1.0..=1.0),
    }
}

/// Scales point `i` (0-based) by `exp(-rate * i)`, componentwise.
pub fn decay_input(s: &Sequence, rate: f64) -> Result<Sequence> {
    if !(rate >= 0.0) {
        return Err(Error::config("decay rate must be >= 0"));
    }
    let mut data = s.data().clone();
    for (i, mut row) in data.rows_mut().into_iter().enumerate() {
        let factor = (-rate * i as f64).exp();
        row.mapv_inplace(|v| v * factor);
    }
    Ok(s.with_data(data))
}

/// Picks `floor(fraction * len)` positions uniformly without replacement and
/// randomly permutes their contents among themselves. The multiset of points
/// is preserved; determinism comes from `seed`.
pub fn reshuffle_window(s: &Sequence, fraction: f64, seed: u64) -> Result<Sequence> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::config("reshuffle fraction must be in [0, 1]"));
    }
    let m = s.len();
    let k = (fraction * m as f64).floor() as usize;
    if k < 2 {
        // permuting zero or one element is the identity
        return Ok(s.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = rand::seq::index::sample(&mut rng, m, k).into_vec();
    let mut order = positions.clone();
    order.shuffle(&mut rng);

    let mut data = s.data().clone();
    let source: Vec<Array1<f64>> = order.iter().map(|&p| s.point(p).to_owned()).collect();
    for (&dst, src) in positions.iter().zip(source.iter()) {
        data.row_mut(dst).assign(src);
    }
    Ok(s.with_data(data))
}

/// Parameters of the merged training set.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub segments_per_wave: usize,
    pub length_min: usize,
    pub length_max: usize,
    pub noise_amplitude: f64,
    pub noise: NoiseKind,
    pub dt: f64,
    pub seed: u64,
    pub waves: Vec<WaveKind>,
}

impl Default for DatasetSpec {
    /// The reference setup: 6000 variable-length segments per wave,
    /// lengths 5..=150, Gaussian noise a = 0.15, dt = 0.01, both waves.
    fn default() -> Self {
        DatasetSpec {
            segments_per_wave: 6000,
            length_min: 5,
            length_max: 150,
            noise_amplitude: 0.15,
            noise: NoiseKind::Gaussian,
            dt: 0.01,
            seed: 0,
            waves: vec![WaveKind::Sine, WaveKind::Triangle],
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.segments_per_wave == 0 {
            return Err(Error::config("segments_per_wave must be >= 1"));
        }
        if self.length_min < 5 || self.length_min > self.length_max {
            return Err(Error::config(format!(
                "segment lengths must satisfy 5 <= length_min <= length_max, got {}..{}",
                self.length_min, self.length_max
            )));
        }
        if !(self.noise_amplitude >= 0.0) {
            return Err(Error::config("noise_amplitude must be >= 0"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::config("dt must be > 0"));
        }
        if self.waves.is_empty() {
            return Err(Error::config("at least one wave kind required"));
        }
        Ok(())
    }

    /// Canonical one-line description; also the CSV metadata header payload.
    pub fn canonical_string(&self) -> String {
        let waves = self
            .waves
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join("+");
        format!(
            "segments_per_wave={} length_min={} length_max={} noise_amplitude={} noise={} dt={} seed={} waves={}",
            self.segments_per_wave,
            self.length_min,
            self.length_max,
            fmt_f64(self.noise_amplitude),
            self.noise,
            fmt_f64(self.dt),
            self.seed,
            waves
        )
    }

    /// Short content hash used for provenance in model metadata.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_string().as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    fn from_canonical(line: &str) -> Result<DatasetSpec> {
        let mut spec = DatasetSpec::default();
        for field in line.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("bad spec field `{field}`")))?;
            match key {
                "segments_per_wave" => spec.segments_per_wave = parse_num(value)?,
                "length_min" => spec.length_min = parse_num(value)?,
                "length_max" => spec.length_max = parse_num(value)?,
                "noise_amplitude" => spec.noise_amplitude = parse_f64(value)?,
                "noise" => spec.noise = value.parse()?,
                "dt" => spec.dt = parse_f64(value)?,
                "seed" => spec.seed = parse_num(value)?,
                "waves" => {
                    spec.waves = value
                        .split('+')
                        .map(WaveKind::from_str)
                        .collect::<Result<Vec<_>>>()?;
                }
                other => return Err(Error::parse(format!("unknown spec key `{other}`"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// One training pair plus its generation provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Sequence,
    /// The (noisy) wave value at the time point right after the input.
    pub target: Array1<f64>,
    pub wave: WaveKind,
    pub t0: f64,
    /// Derived per-example seed; fully determines this example's randomness.
    pub seed: u64,
}

/// A merged set of variable-length segments with one-step-ahead targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub spec: DatasetSpec,
}

/// Builds the training set: `segments_per_wave` segments per selected wave,
/// lengths uniform in `[length_min, length_max]`, start times uniform over
/// one period, targets at the next step, noise on inputs and targets.
pub fn build_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let jobs: Vec<(WaveKind, usize)> = spec
        .waves
        .iter()
        .flat_map(|&w| (0..spec.segments_per_wave).map(move |i| (w, i)))
        .collect();
    let examples: Vec<Example> = jobs
        .par_iter()
        .map(|&(wave, idx)| build_example(spec, wave, idx))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { examples, spec: spec.clone() })
}

fn build_example(spec: &DatasetSpec, wave: WaveKind, idx: usize) -> Result<Example> {
    let wave_tag = match wave {
        WaveKind::Sine => 1u64,
        WaveKind::Triangle => 2u64,
    };
    let seed = splitmix64(spec.seed ^ splitmix64(wave_tag.wrapping_shl(32) | idx as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rng.gen_range(spec.length_min..=spec.length_max);
    let t0 = rng.gen_range(0.0..WAVE_PERIOD);
    let a = spec.noise_amplitude;
    let mut values = Vec::with_capacity(len + 1);
    for i in 0..=len {
        let clean = wave.eval(t0 + i as f64 * spec.dt);
        values.push(clean + a * noise_draw(&mut rng, spec.noise));
    }
    let target = Array1::from_elem(1, values[len]);
    let input = Sequence::from_values(&values[..len], t0, spec.dt)?;
    Ok(Example { input, target, wave, t0, seed })
}

/// splitmix64 finalizer; stable across platforms.
pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// --- dataset CSV ---------------------------------------------------------
//
// One row per example: `wave,len,t0,seed,target,x1..xlen` (d = 1). The first
// line is a `# spec ...` comment carrying the DatasetSpec so the file round-
// trips on its own. Floats are written with 17 significant digits, which is
// lossless for f64.

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::parse(format!("bad float `{s}`")))?;
    if !v.is_finite() {
        return Err(Error::parse(format!("non-finite value `{s}`")));
    }
    Ok(v)
}

fn parse_num<T: FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(format!("bad integer `{s}`")))
}

/// Serializes a dataset (d = 1 only) to CSV.
pub fn dataset_to_csv(ds: &Dataset) -> Result<String> {
    let mut out = String::new();
    out.push_str(&format!("# spec {}\n", ds.spec.canonical_string()));
    for ex in &ds.examples {
        if ex.input.dim() != 1 || ex.target.len() != 1 {
            return Err(Error::dim("dataset CSV export supports d = 1 only"));
        }
        out.push_str(&format!(
            "{},{},{},{},{}",
            ex.wave,
            ex.input.len(),
            fmt_f64(ex.t0),
            ex.seed,
            fmt_f64(ex.target[0])
        ));
        for v in ex.input.values() {
            out.push(',');
            out.push_str(&fmt_f64(v));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Serializes one sequence: a `# series t0=<v> dt=<v>` header line, then one
/// comma-separated row of components per point.
pub fn series_to_csv(s: &Sequence) -> String {
    let mut out = format!("# series t0={} dt={}\n", fmt_f64(s.t0()), fmt_f64(s.dt()));
    for row in s.data().rows() {
        let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Parses a sequence written by [`series_to_csv`].
pub fn series_from_csv(text: &str) -> Result<Sequence> {
    let mut t0 = None;
    let mut dt = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(body) = rest.trim_start().strip_prefix("series ") {
                for field in body.split_whitespace() {
                    match field.split_once('=') {
                        Some(("t0", v)) => t0 = Some(parse_f64(v)?),
                        Some(("dt", v)) => dt = Some(parse_f64(v)?),
                        _ => return Err(Error::parse(format!("bad series field `{field}`"))),
                    }
                }
            }
            continue;
        }
        let row = line
            .split(',')
            .map(parse_f64)
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse("series rows have inconsistent dimensions"));
            }
        }
        rows.push(row);
    }
    let t0 = t0.ok_or_else(|| Error::parse("series CSV is missing the `# series` header"))?;
    let dt = dt.ok_or_else(|| Error::parse("series CSV is missing `dt`"))?;
    if rows.is_empty() {
        return Err(Error::parse("series CSV has no data rows"));
    }
    let d = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let data = Array2::from_shape_vec((flat.len() / d, d), flat)
        .map_err(|e| Error::parse(e.to_string()))?;
    Sequence::new(data, t0, dt)
}

/// Parses a dataset written by [`dataset_to_csv`].
pub fn dataset_from_csv(text: &str) -> Result<Dataset> {
    let mut spec: Option<DatasetSpec> = None;
    let mut examples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim_start();
            if let Some(body) = rest.strip_prefix("spec ") {
                spec = Some(DatasetSpec::from_canonical(body)?);
            }
            continue;
        }
        let spec = spec
            .as_ref()
            .ok_or_else(|| Error::parse("dataset CSV is missing the `# spec` header"))?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 6 {
            return Err(Error::parse(format!("line {}: too few columns", lineno + 1)));
        }
        let wave: WaveKind = fields[0].parse()?;
        let len: usize = parse_num(fields[1])?;
        let t0 = parse_f64(fields[2])?;
        let seed: u64 = parse_num(fields[3])?;
        let target = parse_f64(fields[4])?;
        if fields.len() != 5 + len {
            return Err(Error::parse(format!(
                "line {}: expected {} input values, found {}",
                lineno + 1,
                len,
                fields.len() - 5
            )));
        }
        let values = fields[5..]
            .iter()
            .map(|s| parse_f64(s))
            .collect::<Result<Vec<f64>>>()?;
        examples.push(Example {
            input: Sequence::from_values(&values, t0, spec.dt)?,
            target: Array1::from_elem(1, target),
            wave,
            t0,
            seed,
        });
    }
    let spec = spec.ok_or_else(|| Error::parse("dataset CSV is missing the `# spec` header"))?;
    Ok(Dataset { examples, spec })
}
