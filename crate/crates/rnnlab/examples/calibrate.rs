//! Scratch calibration harness: trains one model variant and prints
//! recursive prediction quality. Not part of the test suite.
//!
//! Usage: calibrate <segments> <epochs> <n> <lr> <variant: b|o|of> <seed...>

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rnnlab::cells::{init_params, CellKind, CellParams, ModelBundle};
use rnnlab::experiments::EvalSetup;
use rnnlab::predict::{fast_predict, moving_window_predict, max_abs_deviation, quality};
use rnnlab::signal::{build_dataset, DatasetSpec, WaveKind};
use rnnlab::training::{train, TrainConfig};

fn orthogonalize(m: &mut Array2<f64>, rng: &mut ChaCha8Rng) {
    let n = m.nrows();
    let mut cols: Vec<Array1<f64>> = (0..n)
        .map(|_| Array1::from_shape_fn(n, |_| rng.sample(StandardNormal)))
        .collect();
    for k in 0..n {
        for j in 0..k {
            let proj = cols[k].dot(&cols[j]);
            let prev = cols[j].clone();
            cols[k].scaled_add(-proj, &prev);
        }
        let norm = cols[k].dot(&cols[k]).sqrt();
        cols[k] /= norm;
    }
    for (j, col) in cols.iter().enumerate() {
        m.column_mut(j).assign(col);
    }
}

fn variant(kind: CellKind, n: usize, seed: u64, ortho: bool, forget_bias: f64) -> ModelBundle {
    let mut model = init_params(kind, n, 1, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0817);
    if ortho {
        for (_, gate) in model.cell.gates_mut() {
            orthogonalize(&mut gate.w_s, &mut rng);
        }
    }
    if let CellParams::Lstm(p) = &mut model.cell {
        p.forget.b.fill(forget_bias);
    }
    model
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let segments: usize = args[1].parse().unwrap();
    let epochs: usize = args[2].parse().unwrap();
    let n: usize = args[3].parse().unwrap();
    let lr: f64 = args[4].parse().unwrap();
    let var = args[5].as_str();
    let seeds: Vec<u64> = args[6..].iter().map(|s| s.parse().unwrap()).collect();

    let spec = DatasetSpec { segments_per_wave: segments, seed: 42, ..DatasetSpec::default() };
    let dataset = build_dataset(&spec).unwrap();
    println!("dataset: {} examples; variant={var} n={n} epochs={epochs} lr={lr}", dataset.examples.len());

    for &seed in &seeds {
        let (ortho, fb) = match var {
            "b" => (false, 0.0),
            "o" => (true, 0.0),
            "of" => (true, 1.0),
            _ => panic!("variant must be b|o|of"),
        };
        let cfg = TrainConfig { epochs, learning_rate: lr, seed, ..TrainConfig::default() };
        let model = variant(CellKind::Lstm, n, seed, ortho, fb);
        let start = std::time::Instant::now();
        let (trained, history) = train(&model, &dataset, &cfg).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let val = history.val_loss.last().unwrap();

        let mut line = format!("seed={seed} val={val:.4} [{secs:.0}s] ");
        for wave in [WaveKind::Sine, WaveKind::Triangle] {
            let mut qs = Vec::new();
            let mut devs = Vec::new();
            for noise_seed in [100u64, 101, 102] {
                let eval = EvalSetup { noise_seed, ..EvalSetup::new(wave, 75, 100, 0.15) };
                let input = eval.input().unwrap();
                let reference = eval.reference().unwrap();
                let mw = moving_window_predict(&trained, &input, 100).unwrap();
                let fp = fast_predict(&trained, &input, 100).unwrap();
                qs.push(quality(&mw.predicted, &reference).unwrap());
                devs.push(max_abs_deviation(&fp.predicted, &mw.predicted).unwrap());
            }
            qs.sort_by(f64::total_cmp);
            devs.sort_by(f64::total_cmp);
            line.push_str(&format!("{wave}: Qmed={:.1} dev_max={:.3}  ", qs[1], devs[2]));
        }
        println!("{line}");
    }
}
