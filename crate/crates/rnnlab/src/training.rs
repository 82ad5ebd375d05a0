//! Loss, exact gradients via backpropagation through time, Adam updates and
//! the epoch loop, plus a central-finite-difference gradient oracle.
//!
//! The training objective is the mean squared one-step prediction error:
//! the network reads a segment and predicts the (noisy) value at the next
//! time point. Variable-length segments are grouped into equal-length
//! batches, so the recurrence never needs padding or masking.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cells::{
    basic_step, gated_step_cached, lstm_step_cached, readout, run_final, CellParams, GatedStepCache, LstmStepCache, ModelBundle, ModelMeta, ReadoutParams,
};
use crate::error::{Error, Result};
use crate::signal::{splitmix64, Dataset, Sequence};

/// One training pair: an input segment and its one-step-ahead target.
pub type TrainPair<'a> = (&'a Sequence, &'a Array1<f64>);

/// Optimizer and loop configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub validation_fraction: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Optional global L2 gradient-norm clip; off by default.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            validation_fraction: 0.2,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            seed: 0,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::config("validation_fraction must be in (0, 1)"));
        }
        if !(self.learning_rate > 0.0 && self.epsilon > 0.0) {
            return Err(Error::config("learning_rate and epsilon must be positive"));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(Error::config("beta1 and beta2 must be in (0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if let Some(clip) = self.grad_clip {
            if !(clip > 0.0) {
                return Err(Error::config("grad_clip must be positive when set"));
            }
        }
        Ok(())
    }
}

/// Adam moment accumulators over the flattened parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(param_count: usize) -> AdamState {
        AdamState { m: vec![0.0; param_count], v: vec![0.0; param_count], step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Per-epoch training and validation losses.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

impl TrainHistory {
    /// CSV export: `epoch,train_loss,val_loss`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for (i, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                i + 1,
                crate::signal::fmt_f64(*t),
                crate::signal::fmt_f64(*v)
            ));
        }
        out
    }
}

/// Gradient of the loss w.r.t. every parameter tensor; shapes mirror the
/// model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub cell: CellParams,
    pub readout: ReadoutParams,
}

impl GradientBundle {
    pub fn zeros_like(model: &ModelBundle) -> GradientBundle {
        GradientBundle {
            cell: CellParams::zeros(model.kind, model.n, model.d),
            readout: ReadoutParams::zeros(model.n, model.d),
        }
    }

    /// Same canonical order as [`ModelBundle::flatten`].
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

    fn add_assign(&mut self, other: &GradientBundle) {
        for ((_, g), (_, o)) in self.cell.gates_mut().into_iter().zip(other.cell.gates()) {
            g.w_x += &o.w_x;
            g.w_s += &o.w_s;
            g.b += &o.b;
        }
        self.readout.w += &other.readout.w;
        self.readout.b += &other.readout.b;
    }

    fn scale(&mut self, factor: f64) {
        for (_, g) in self.cell.gates_mut() {
            g.w_x *= factor;
            g.w_s *= factor;
            g.b *= factor;
        }
        self.readout.w *= factor;
        self.readout.b *= factor;
    }

    /// Largest absolute component, across all tensors.
    pub fn max_abs(&self) -> f64 {
        self.flatten().iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

fn check_batch(model: &ModelBundle, batch: &[TrainPair]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::config("batch must be nonempty"));
    }
    for (x, t) in batch {
        if x.dim() != model.d || t.len() != model.d {
            return Err(Error::dim(format!(
                "batch pair has input dim {} / target dim {}, model expects {}",
                x.dim(),
                t.len(),
                model.d
            )));
        }
    }
    Ok(())
}

/// Mean over the batch of the squared Euclidean one-step prediction error.
pub fn loss(model: &ModelBundle, batch: &[TrainPair]) -> Result<f64> {
    check_batch(model, batch)?;
    let total: f64 = batch
        .iter()
        .map(|(x, t)| {
            let (s, _) = run_final(&model.cell, x.data());
            let resid = readout(&model.readout, s.view()) - *t;
            resid.dot(&resid)
        })
        .sum();
    Ok(total / batch.len() as f64)
}

fn add_outer(w: &mut Array2<f64>, u: &Array1<f64>, v: ArrayView1<f64>) {
    for (i, mut row) in w.rows_mut().into_iter().enumerate() {
        row.scaled_add(u[i], &v);
    }
}

/// Loss and gradients of one example; exact reverse-mode differentiation
/// through the cell recurrence and the readout.
fn example_grad(model: &ModelBundle, x: &Sequence, target: &Array1<f64>) -> (GradientBundle, f64) {
    let data = x.data();
    let m = data.nrows();
    let n = model.n;
    let zero_state = Array1::<f64>::zeros(n);
    let mut grad = GradientBundle::zeros_like(model);

    // forward, keeping what the backward pass needs
    let mut states: Vec<Array1<f64>> = Vec::with_capacity(m);
    let mut gated_caches: Vec<GatedStepCache> = Vec::new();
    let mut lstm_caches: Vec<LstmStepCache> = Vec::new();
    let mut cell_states: Vec<Array1<f64>> = Vec::new();
    match &model.cell {
        CellParams::Basic(p) => {
            let mut s = zero_state.clone();
            for row in data.rows() {
                s = basic_step(p, row, s.view());
                states.push(s.clone());
            }
        }
        CellParams::Gated(p) => {
            let mut s = zero_state.clone();
            gated_caches.reserve(m);
            for row in data.rows() {
                let (s2, cache) = gated_step_cached(p, row, s.view());
                s = s2;
                states.push(s.clone());
                gated_caches.push(cache);
            }
        }
        CellParams::Lstm(p) => {
            let mut s = zero_state.clone();
            let mut c = zero_state.clone();
            lstm_caches.reserve(m);
            cell_states.reserve(m);
            for row in data.rows() {
                let (s2, c2, cache) = lstm_step_cached(p, row, s.view(), c.view());
                s = s2;
                c = c2;
                states.push(s.clone());
                cell_states.push(c.clone());
                lstm_caches.push(cache);
            }
        }
    }

    // readout head: L = ||W s_m + b - target||^2
    let s_m = states.last().expect("nonempty input");
    let resid = readout(&model.readout, s_m.view()) - target;
    let loss = resid.dot(&resid);
    let e = 2.0 * &resid;
    add_outer(&mut grad.readout.w, &e, s_m.view());
    grad.readout.b += &e;
    let mut ds = model.readout.w.t().dot(&e);

    // backward through time
    let prev_state = |i: usize| -> ArrayView1<f64> {
        if i == 0 {
            zero_state.view()
        } else {
            states[i - 1].view()
        }
    };
    match (&model.cell, &mut grad.cell) {
        (CellParams::Basic(p), CellParams::Basic(g)) => {
            for i in (0..m).rev() {
                let mut dz = states[i].mapv(|v| 1.0 - v * v);
                dz *= &ds;
                add_outer(&mut g.input.w_x, &dz, data.row(i));
                add_outer(&mut g.input.w_s, &dz, prev_state(i));
                g.input.b += &dz;
                ds = p.input.w_s.t().dot(&dz);
            }
        }
        (CellParams::Gated(p), CellParams::Gated(g)) => {
            for i in (0..m).rev() {
                let ch = &gated_caches[i];
                let sp = prev_state(i);
                let di = (&sp.to_owned() - &ch.m) * &ds;
                let dm = ch.i.mapv(|v| 1.0 - v) * &ds;
                let mut ds_prev = &ch.i * &ds;

                let mut dzm = ch.m.mapv(|v| 1.0 - v * v);
                dzm *= &dm;
                add_outer(&mut g.memory.w_x, &dzm, data.row(i));
                g.memory.b += &dzm;
                let dr = &dzm * &ch.u;
                let du = &dzm * &ch.r;
                add_outer(&mut g.memory.w_s, &du, sp);
                ds_prev += &p.memory.w_s.t().dot(&du);

                let mut dzr = ch.r.mapv(|v| v * (1.0 - v));
                dzr *= &dr;
                add_outer(&mut g.reset.w_x, &dzr, data.row(i));
                add_outer(&mut g.reset.w_s, &dzr, sp);
                g.reset.b += &dzr;
                ds_prev += &p.reset.w_s.t().dot(&dzr);

                let mut dzi = ch.i.mapv(|v| v * (1.0 - v));
                dzi *= &di;
                add_outer(&mut g.input.w_x, &dzi, data.row(i));
                add_outer(&mut g.input.w_s, &dzi, sp);
                g.input.b += &dzi;
                ds_prev += &p.input.w_s.t().dot(&dzi);

                ds = ds_prev;
            }
        }
        (CellParams::Lstm(p), CellParams::Lstm(g)) => {
            let mut dc = Array1::<f64>::zeros(n);
            for i in (0..m).rev() {
                let ch = &lstm_caches[i];
                let sp = prev_state(i);
                let c_prev = if i == 0 { zero_state.view() } else { cell_states[i - 1].view() };

                let d_o = &ch.tanh_c * &ds;
                let mut dct = ch.tanh_c.mapv(|v| 1.0 - v * v);
                dct *= &ch.o;
                dct *= &ds;
                dct += &dc;
                let df = &c_prev.to_owned() * &dct;
                let di = &ch.m * &dct;
                let dm = &ch.i * &dct;
                dc = &ch.f * &dct;

                let mut ds_prev = Array1::<f64>::zeros(n);
                let mut backprop_gate =
                    |gate: &crate::cells::Gate,
                     ggate: &mut crate::cells::Gate,
                     dz: Array1<f64>| {
                        add_outer(&mut ggate.w_x, &dz, data.row(i));
                        add_outer(&mut ggate.w_s, &dz, sp);
                        ggate.b += &dz;
                        ds_prev += &gate.w_s.t().dot(&dz);
                    };
                let mut dzo = ch.o.mapv(|v| v * (1.0 - v));
                dzo *= &d_o;
                backprop_gate(&p.output, &mut g.output, dzo);
                let mut dzi = ch.i.mapv(|v| v * (1.0 - v));
                dzi *= &di;
                backprop_gate(&p.input, &mut g.input, dzi);
                let mut dzf = ch.f.mapv(|v| v * (1.0 - v));
                dzf *= &df;
                backprop_gate(&p.forget, &mut g.forget, dzf);
                let mut dzm = ch.m.mapv(|v| 1.0 - v * v);
                dzm *= &dm;
                backprop_gate(&p.memory, &mut g.memory, dzm);

                ds = ds_prev;
            }
        }
        _ => unreachable!("gradient bundle always mirrors the model kind"),
    }

    (grad, loss)
}

/// Batch-mean gradients plus the batch-mean loss from the same forward
/// passes. Per-example passes run in parallel; the reduction is a fixed
/// sequential fold over the batch order, so results do not depend on the
/// number of threads.
pub fn gradients_with_loss(
    model: &ModelBundle,
    batch: &[TrainPair],
) -> Result<(GradientBundle, f64)> {
    check_batch(model, batch)?;
    let per: Vec<(GradientBundle, f64)> = batch
        .par_iter()
        .map(|(x, t)| example_grad(model, x, t))
        .collect();
    let mut total = GradientBundle::zeros_like(model);
    let mut loss_sum = 0.0;
    for (g, l) in &per {
        total.add_assign(g);
        loss_sum += l;
    }
    let inv = 1.0 / batch.len() as f64;
    total.scale(inv);
    Ok((total, loss_sum * inv))
}

/// Gradient of [`loss`] w.r.t. every parameter tensor.
pub fn gradients(model: &ModelBundle, batch: &[TrainPair]) -> Result<GradientBundle> {
    gradients_with_loss(model, batch).map(|(g, _)| g)
}

/// Central finite differences of `f` at `x` with step `h`, one coordinate
/// at a time.
pub fn central_difference<F>(f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    (0..x.len())
        .into_par_iter()
        .map(|k| {
            let mut xs = x.to_vec();
            xs[k] = x[k] + h;
            let fp = f(&xs);
            xs[k] = x[k] - h;
            let fm = f(&xs);
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Central-finite-difference estimate of the loss gradient; the independent
/// oracle for [`gradients`].
pub fn finite_diff_grad(
    model: &ModelBundle,
    batch: &[TrainPair],
    step: f64,
) -> Result<GradientBundle> {
    if !(step > 0.0) {
        return Err(Error::config("finite-difference step must be positive"));
    }
    check_batch(model, batch)?;
    let base = model.flatten();
    let f = |flat: &[f64]| {
        let probe = model.with_flat(flat);
        loss(&probe, batch).expect("batch already validated")
    };
    let flat_grad = central_difference(f, &base, step);
    let mut out = GradientBundle::zeros_like(model);
    assign_flat_grad(&mut out, &flat_grad);
    Ok(out)
}

fn assign_flat_grad(grad: &mut GradientBundle, flat: &[f64]) {
    let mut pos = 0;
    let mut take = |tensor: &mut [f64]| {
        tensor.copy_from_slice(&flat[pos..pos + tensor.len()]);
        pos += tensor.len();
    };
    for (_, gate) in grad.cell.gates_mut() {
        take(gate.w_x.as_slice_mut().expect("contiguous"));
        take(gate.w_s.as_slice_mut().expect("contiguous"));
        take(gate.b.as_slice_mut().expect("contiguous"));
    }
    take(grad.readout.w.as_slice_mut().expect("contiguous"));
    take(grad.readout.b.as_slice_mut().expect("contiguous"));
    assert_eq!(pos, flat.len());
}

/// One bias-corrected Adam step, in place. Zero gradients leave the
/// parameters unchanged (the step counter still advances).
pub fn adam_update(state: &mut AdamState, params: &mut [f64], grads: &[f64], cfg: &TrainConfig) {
    assert_eq!(params.len(), state.m.len(), "adam_update: parameter count mismatch");
    assert_eq!(grads.len(), state.m.len(), "adam_update: gradient count mismatch");
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);
    for k in 0..params.len() {
        let g = grads[k];
        state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
        state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[k] / bc1;
        let v_hat = state.v[k] / bc2;
        params[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// Deterministic train/validation index split: a seeded permutation of
/// `0..n`, validation first. The validation part holds at least one example.
pub(crate) fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x517d_e11b));
    order.shuffle(&mut rng);
    let val_count = ((fraction * n as f64).floor() as usize).clamp(1, n.saturating_sub(1));
    let val = order[..val_count].to_vec();
    let train = order[val_count..].to_vec();
    (train, val)
}

/// Groups (already shuffled) example indices into equal-length batches of at
/// most `batch_size`, then shuffles the batch order.
pub(crate) fn make_batches(
    lengths: &[usize],
    indices: &[usize],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let mut order = indices.to_vec();
    order.shuffle(rng);
    order.sort_by_key(|&i| lengths[i]); // stable: keeps shuffled order within a length
    let mut batches = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    for idx in order {
        let fits = current.len() < batch_size
            && current.first().map_or(true, |&f| lengths[f] == lengths[idx]);
        if !fits {
            batches.push(std::mem::take(&mut current));
        }
        current.push(idx);
    }
    if !current.is_empty() {
        batches.push(current);
    }
    batches.shuffle(rng);
    batches
}

/// Trains `model` on `data`: deterministic split, per-epoch seeded shuffle,
/// equal-length batches, Adam updates. Returns the trained bundle and the
/// per-epoch loss history.
pub fn train(
    model: &ModelBundle,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(ModelBundle, TrainHistory)> {
    cfg.validate()?;
    model.validate()?;
    if data.examples.is_empty() {
        return Err(Error::config("dataset is empty"));
    }
    if cfg.epochs == 0 {
        return Ok((model.clone(), TrainHistory::default()));
    }
    if data.examples.len() < 2 {
        return Err(Error::config("need at least 2 examples to hold out validation data"));
    }
    for ex in &data.examples {
        if ex.input.dim() != model.d || ex.target.len() != model.d {
            return Err(Error::dim("dataset dimension does not match the model"));
        }
    }

    let lengths: Vec<usize> = data.examples.iter().map(|e| e.input.len()).collect();
    let (train_idx, val_idx) =
        split_indices(data.examples.len(), cfg.validation_fraction, cfg.seed);
    let val_pairs: Vec<TrainPair> = val_idx
        .iter()
        .map(|&i| (&data.examples[i].input, &data.examples[i].target))
        .collect();

    let mut work = model.clone();
    let mut flat = work.flatten();
    let mut adam = AdamState::new(flat.len());
    let mut history = TrainHistory::default();

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed ^ (epoch as u64 + 1)));
        let batches = make_batches(&lengths, &train_idx, cfg.batch_size, &mut rng);
        let mut loss_sum = 0.0;
        let mut count = 0usize;
        for batch in &batches {
            let pairs: Vec<TrainPair> = batch
                .iter()
                .map(|&i| (&data.examples[i].input, &data.examples[i].target))
                .collect();
            let (grad, batch_loss) = gradients_with_loss(&work, &pairs)?;
            loss_sum += batch_loss * pairs.len() as f64;
            count += pairs.len();
            let mut gflat = grad.flatten();
            if let Some(clip) = cfg.grad_clip {
                let norm = gflat.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > clip {
                    let scale = clip / norm;
                    gflat.iter_mut().for_each(|g| *g *= scale);
                }
            }
            adam_update(&mut adam, &mut flat, &gflat, cfg);
            work.assign_flat(&flat);
        }
        history.train_loss.push(loss_sum / count as f64);
        history.val_loss.push(loss(&work, &val_pairs)?);
    }

    work.meta = ModelMeta {
        seed: cfg.seed,
        epochs: cfg.epochs,
        dataset_hash: data.spec.hash(),
    };
    Ok((work, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::{init_params, CellKind};
    use crate::signal::{DatasetSpec, Example, WaveKind};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;

    fn pairs_of(examples: &[Example]) -> Vec<TrainPair> {
        examples.iter().map(|e| (&e.input, &e.target)).collect()
    }

    fn random_batch(seed: u64, m: usize, count: usize) -> Vec<(Sequence, Array1<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let vals: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let x = Sequence::from_values(&vals, 0.0, 0.01).unwrap();
                let t = array![rng.gen_range(-1.0..1.0)];
                (x, t)
            })
            .collect()
    }

    #[test]
    fn loss_exact_fit_is_zero() {
        let mut model = ModelBundle::zeros(CellKind::Basic, 3, 1);
        model.readout.b = array![0.4];
        let x = Sequence::from_values(&[0.1, 0.2, 0.3], 0.0, 0.01).unwrap();
        let t = array![0.4];
        let batch = [(&x, &t)];
        assert_eq!(loss(&model, &batch).unwrap(), 0.0);
    }

    #[test]
    fn loss_hand_arithmetic_and_mean_property() {
        let mut model = ModelBundle::zeros(CellKind::Basic, 3, 1);
        model.readout.b = array![0.3];
        let x = Sequence::from_values(&[0.5, -0.5], 0.0, 0.01).unwrap();
        let t = array![0.0];
        let single = [(&x, &t)];
        assert_abs_diff_eq!(loss(&model, &single).unwrap(), 0.09, epsilon = 1e-15);

        let doubled = [(&x, &t), (&x, &t)];
        assert_abs_diff_eq!(
            loss(&model, &single).unwrap(),
            loss(&model, &doubled).unwrap(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn loss_rejects_empty_and_mismatched_batches() {
        let model = ModelBundle::zeros(CellKind::Basic, 3, 1);
        assert!(loss(&model, &[]).is_err());
        let x = Sequence::new(ndarray::Array2::zeros((4, 2)), 0.0, 0.01).unwrap();
        let t = array![0.0, 0.0];
        assert!(loss(&model, &[(&x, &t)]).is_err());
    }

    #[test]
    fn gradient_zero_at_exact_fit() {
        let mut model = ModelBundle::zeros(CellKind::Basic, 3, 1);
        model.readout.b = array![0.7];
        let batch_data = random_batch(5, 4, 3);
        let targets: Vec<Array1<f64>> = batch_data.iter().map(|_| array![0.7]).collect();
        let batch: Vec<TrainPair> = batch_data
            .iter()
            .zip(&targets)
            .map(|((x, _), t)| (x, t))
            .collect();
        let g = gradients(&model, &batch).unwrap();
        assert_eq!(g.readout.b[0], 0.0);
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn gradient_of_duplicated_batch_is_unchanged() {
        let model = crate::cells::random_model(CellKind::Gated, 3, 1, 21);
        let data = random_batch(9, 5, 2);
        let batch: Vec<TrainPair> = data.iter().map(|(x, t)| (x, t)).collect();
        let doubled: Vec<TrainPair> = batch.iter().chain(batch.iter()).cloned().collect();
        let a = gradients(&model, &batch).unwrap();
        let b = gradients(&model, &doubled).unwrap();
        for (x, y) in a.flatten().iter().zip(b.flatten()) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-14);
        }
    }

    /// The central numerical property of the whole training module:
    /// BPTT matches central finite differences for every cell kind.
    #[test]
    fn bptt_matches_finite_differences() {
        for kind in [CellKind::Basic, CellKind::Gated, CellKind::Lstm] {
            for case in 0..20 {
                let seed = 1000 + case;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let n = rng.gen_range(1..=5);
                let model = crate::cells::random_model(kind, n, 1, seed);
                let data = random_batch(seed ^ 0xdead, 5, 3);
                let batch: Vec<TrainPair> = data.iter().map(|(x, t)| (x, t)).collect();

                let analytic = gradients(&model, &batch).unwrap().flatten();
                let numeric = finite_diff_grad(&model, &batch, 1e-5).unwrap().flatten();
                let mut worst = 0.0f64;
                for (a, b) in analytic.iter().zip(&numeric) {
                    let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
                    worst = worst.max(rel);
                }
                assert!(
                    worst < 1e-4,
                    "kind={kind} case={case}: max relative gradient error {worst}"
                );
            }
        }
    }

    #[test]
    fn central_difference_exact_on_quadratic() {
        let f = |x: &[f64]| 3.0 * x[0] * x[0] + 2.0 * x[0] + 1.0;
        let g = central_difference(f, &[1.5], 1e-3);
        // derivative 6x + 2 = 11; central differences are exact on quadratics
        assert_abs_diff_eq!(g[0], 11.0, epsilon = 1e-9);
    }

    #[test]
    fn central_difference_halving_step_quarters_error() {
        let f = |x: &[f64]| x[0].powi(3);
        // exact derivative at 1 is 3; truncation error is h^2 * f'''/6 = h^2
        let e1 = (central_difference(f, &[1.0], 1e-1)[0] - 3.0).abs();
        let e2 = (central_difference(f, &[1.0], 5e-2)[0] - 3.0).abs();
        let ratio = e1 / e2;
        assert!((3.8..4.2).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let cfg = TrainConfig::default();
        let mut state = AdamState::new(3);
        let mut params = vec![0.5, -0.25, 1.0];
        let before = params.clone();
        adam_update(&mut state, &mut params, &[0.0, 0.0, 0.0], &cfg);
        assert_eq!(params, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn adam_first_step_is_signed_learning_rate() {
        let cfg = TrainConfig::default();
        let mut state = AdamState::new(2);
        let mut params = vec![0.0, 0.0];
        adam_update(&mut state, &mut params, &[0.3, -4.0], &cfg);
        // bias correction makes m_hat/sqrt(v_hat) = sign(g) exactly at t=1
        assert_abs_diff_eq!(params[0], -cfg.learning_rate, epsilon = 1e-6);
        assert_abs_diff_eq!(params[1], cfg.learning_rate, epsilon = 1e-6);
    }

    #[test]
    fn adam_converges_on_convex_quadratic() {
        let cfg = TrainConfig { learning_rate: 8e-3, ..TrainConfig::default() };
        let mut state = AdamState::new(1);
        let mut params = vec![1.0];
        let mut losses = Vec::new();
        for _ in 0..100 {
            let g = 2.0 * params[0];
            losses.push(params[0] * params[0]);
            adam_update(&mut state, &mut params, &[g], &cfg);
        }
        assert!(params[0].abs() < 0.5, "final {}", params[0]);
        for k in 10..losses.len() {
            assert!(losses[k] <= losses[k - 1] + 1e-12, "not monotone at {k}");
        }
    }

    fn constant_dataset(value: f64, count: usize) -> Dataset {
        let spec = DatasetSpec {
            segments_per_wave: count,
            length_min: 5,
            length_max: 7,
            noise_amplitude: 0.0,
            seed: 1,
            waves: vec![WaveKind::Sine],
            ..DatasetSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let examples = (0..count)
            .map(|i| {
                let len = rng.gen_range(5..=7);
                let input = Sequence::from_values(&vec![value; len], 0.0, 0.01).unwrap();
                Example {
                    input,
                    target: array![value],
                    wave: WaveKind::Sine,
                    t0: 0.0,
                    seed: i as u64,
                }
            })
            .collect();
        Dataset { examples, spec }
    }

    #[test]
    fn zero_epochs_returns_model_unchanged() {
        let model = init_params(CellKind::Basic, 3, 1, 4);
        let data = constant_dataset(0.5, 10);
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let (out, history) = train(&model, &data, &cfg).unwrap();
        assert_eq!(out, model);
        assert!(history.train_loss.is_empty() && history.val_loss.is_empty());
    }

    #[test]
    fn training_fits_a_noiseless_constant_signal() {
        let model = init_params(CellKind::Basic, 4, 1, 2);
        let data = constant_dataset(0.5, 96);
        let cfg = TrainConfig {
            epochs: 250,
            learning_rate: 5e-3,
            batch_size: 16,
            seed: 3,
            ..TrainConfig::default()
        };
        let (_, history) = train(&model, &data, &cfg).unwrap();
        let last = *history.val_loss.last().unwrap();
        assert!(last < 1e-4, "validation loss {last}");
    }

    #[test]
    fn training_is_bit_deterministic() {
        let model = init_params(CellKind::Lstm, 3, 1, 8);
        let spec = DatasetSpec {
            segments_per_wave: 20,
            length_min: 5,
            length_max: 10,
            seed: 5,
            ..DatasetSpec::default()
        };
        let data = crate::signal::build_dataset(&spec).unwrap();
        let cfg = TrainConfig { epochs: 3, seed: 17, ..TrainConfig::default() };
        let (m1, h1) = train(&model, &data, &cfg).unwrap();
        let (m2, h2) = train(&model, &data, &cfg).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(m1, m2);
    }

    #[test]
    fn split_is_disjoint_and_covers_everything() {
        let (train, val) = split_indices(103, 0.2, 7);
        assert_eq!(val.len(), 20);
        assert_eq!(train.len() + val.len(), 103);
        let mut all: Vec<usize> = train.iter().chain(val.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
    }

    #[test]
    fn batches_are_equal_length_and_cover_the_split() {
        let lengths: Vec<usize> = (0..40).map(|i| 5 + (i % 4)).collect();
        let indices: Vec<usize> = (0..40).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let batches = make_batches(&lengths, &indices, 8, &mut rng);
        let mut seen: Vec<usize> = batches.iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, indices);
        for b in &batches {
            assert!(b.len() <= 8 && !b.is_empty());
            assert!(b.iter().all(|&i| lengths[i] == lengths[b[0]]));
        }
    }

    #[test]
    fn history_csv_shape() {
        let h = TrainHistory { train_loss: vec![0.5, 0.25], val_loss: vec![0.6, 0.3] };
        let csv = h.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "epoch,train_loss,val_loss");
        assert!(lines[1].starts_with("1,"));
    }

    #[test]
    fn pairs_helper_is_consistent() {
        let data = constant_dataset(0.2, 4);
        let pairs = pairs_of(&data.examples);
        assert_eq!(pairs.len(), 4);
    }
}
