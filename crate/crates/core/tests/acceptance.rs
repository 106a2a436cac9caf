//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spikehar::config::PipelineConfig;
use spikehar::encoder::{
    build_bank, default_banks, encode_channel, encode_window, Polarity, SpikeEvent, SpikeTensor, ThresholdBank,
    ThresholdScheme, SIGNALS,
};
use spikehar::pipeline::synth::{generate, write_dataset, SyntheticSpec};
use spikehar::pipeline::{run_pipeline, FOLDS_FILE, MODEL_FILE, REPORT_CSV};
use spikehar::profiler::{baseline_rows, format_edp, loihi_reference_row};
use spikehar::snn::{
    decay, layer_chain, quantize_layer, run_dense, run_event_driven, validate_model, LayerSpec, LifParams,
    NetworkModel,
};
use spikehar::trainer::{
    backward, forward_with_trace, loss_count, LossSpec, RealNetwork, SpikeMode, SurrogateShape, SurrogateSpec,
};

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(detail: String, elapsed: Duration, limit_s: u64) -> Check {
    let secs = elapsed.as_secs_f64();
    ensure(secs < limit_s as f64, format!("{detail}; {secs:.2} s (limit {limit_s} s)"))
}

fn literal_encoding(signal: &[f64], bank: &ThresholdBank) -> Vec<SpikeEvent> {
    let mut out = Vec::new();
    for t in 1..signal.len() {
        let d = signal[t] - signal[t - 1];
        for (i, &eps) in bank.thresholds().iter().enumerate() {
            let polarity = if d > eps {
                Polarity::Positive
            } else if d < -eps {
                Polarity::Negative
            } else {
                continue;
            };
            out.push(SpikeEvent { timestep: (t - 1) as u32, channel: i as u32, polarity });
        }
    }
    out.sort();
    out
}

fn encoder_oracle() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    let mut events = 0;
    for i in 0..1000 {
        let scheme = if i % 2 == 0 { ThresholdScheme::Geometric } else { ThresholdScheme::Arithmetic };
        let bank = build_bank(5e-5, scheme, 5).unwrap();
        let scale = rng.random_range(1e-5..2e-3);
        let mut signal = Vec::with_capacity(2000);
        let mut x = rng.random_range(-1.0..1.0);
        for _ in 0..2000 {
            x += rng.random_range(-scale..scale);
            signal.push(x);
        }
        let mut got = encode_channel(&signal, &bank).unwrap();
        got.sort();
        let want = literal_encoding(&signal, &bank);
        events += want.len();
        mismatches += (got != want) as usize;
    }
    let detail = ensure(mismatches == 0, format!("{mismatches} mismatching signals, {events} events"))?;
    within(detail, started.elapsed(), 30)
}

fn encoder_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let banks = default_banks(ThresholdScheme::Geometric, 5).unwrap();
    let mut violations = 0;
    for _ in 0..10_000 {
        let len = rng.random_range(2..60);
        let scale = rng.random_range(1e-5..2e-3);
        let window = Array2::from_shape_fn((len, SIGNALS), |_| rng.random_range(-scale..scale));
        let x = encode_window(window.view(), &banks).unwrap();
        for s in 0..SIGNALS {
            for t in 0..x.timesteps() {
                for k in 0..5 {
                    let (pos, neg) = (x.get(s, k, 0, t), x.get(s, k, 1, t));
                    violations += (pos && neg) as usize;
                    if k > 0 {
                        violations += (pos && !x.get(s, k - 1, 0, t)) as usize;
                        violations += (neg && !x.get(s, k - 1, 1, t)) as usize;
                    }
                }
            }
        }
    }
    ensure(violations == 0, format!("{violations} violations"))
}

fn threshold_banks() -> Check {
    let geometric = build_bank(0.00005, ThresholdScheme::Geometric, 5).unwrap();
    let arithmetic = build_bank(0.00005, ThresholdScheme::Arithmetic, 5).unwrap();
    let want_arith: Vec<f64> = (0..5).map(|i| 0.00005 * (i + 1) as f64).collect();
    ensure(
        geometric.thresholds() == [0.00005, 0.0001, 0.0002, 0.0004, 0.0008] && arithmetic.thresholds() == want_arith,
        format!("geometric {:?}, arithmetic {:?}", geometric.thresholds(), arithmetic.thresholds()),
    )
}

fn shape_chain() -> Check {
    let specs = layer_chain("32C64C128D12D", (7, 5, 2)).map_err(|e| e.to_string())?;
    let model = NetworkModel::from_arch("32C64C128D12D", (7, 5, 2), LifParams::default()).map_err(|e| e.to_string())?;
    validate_model(&model).map_err(|e| e.to_string())?;
    let flatten = specs[2].input_size();
    let output = specs[3].output_size();
    ensure(flatten == 2240 && output == 12, format!("flatten {flatten}, output {output}"))
}

fn random_model(rng: &mut ChaCha8Rng) -> NetworkModel {
    let input = (rng.random_range(1..=7), rng.random_range(1..=5), 2);
    let arch = loop {
        let mut arch = String::new();
        let mut conv = true;
        for _ in 0..rng.random_range(1..=4) {
            if conv && rng.random_bool(0.4) {
                arch.push_str(&format!("{}C", rng.random_range(1..=4)));
            } else {
                arch.push_str(&format!("{}D", rng.random_range(2..=40)));
                conv = false;
            }
        }
        let specs = layer_chain(&arch, input).unwrap();
        if specs.iter().map(LayerSpec::output_size).sum::<usize>() <= 500 {
            break arch;
        }
    };
    let lif = LifParams {
        decay_u: rng.random_range(256..=4096),
        decay_v: rng.random_range(0..=4096),
        v_threshold: rng.random_range(1..=3000),
        refractory_steps: rng.random_range(0..4),
        timestep_ms: 1.0,
    };
    let mut m = NetworkModel::from_arch(&arch, input, lif).unwrap();
    for l in &mut m.layers {
        l.weights.iter_mut().for_each(|w| *w = rng.random_range(-90..=127));
        let max_delay = rng.random_range(0..=62);
        l.delays.iter_mut().for_each(|d| *d = rng.random_range(0..=max_delay));
        l.exponent = rng.random_range(0..=3);
    }
    m
}

fn backend_equivalence() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut differing = 0;
    let mut spikes = 0;
    for _ in 0..100 {
        let m = random_model(&mut rng);
        let steps = rng.random_range(1..=200);
        let (h, w, _) = m.input;
        let mut x = SpikeTensor::zeros(h, w, steps);
        let p = rng.random_range(0.0..0.4);
        for t in 0..steps {
            for cell in 0..h * w {
                if rng.random_bool(p) {
                    x.set_input(2 * cell + rng.random_range(0..2), t).unwrap();
                }
            }
        }
        match (run_dense(&m, &x), run_event_driven(&m, &x)) {
            (Ok(d), Ok(e)) => {
                differing += (d.rasters != e.rasters || d.counts != e.counts) as usize;
                spikes += d.rasters.iter().map(|r| r.spike_count()).sum::<usize>();
            }
            (Err(a), Err(b)) => differing += (a.to_string() != b.to_string()) as usize,
            _ => differing += 1,
        }
    }
    let detail = ensure(differing == 0, format!("{differing} differing instances, {spikes} spikes compared"))?;
    within(detail, started.elapsed(), 120)
}

fn decay_arithmetic() -> Check {
    let mut u = 4096i64;
    let mut seq = vec![u];
    for _ in 0..7 {
        u = decay(u, 1024);
        seq.push(u);
    }
    let mut expected = vec![4096i64];
    for _ in 0..7 {
        expected.push((expected.last().unwrap() * 3).div_euclid(4));
    }
    ensure(seq == expected && seq[..4] == [4096, 3072, 2304, 1728], format!("{seq:?}"))
}

fn gradient_check() -> Check {
    let soft = SurrogateSpec { shape: SurrogateShape::ExponentialPdf, alpha: 0.5, mode: SpikeMode::Soft };
    let h = 1e-5;
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let lif = LifParams { v_threshold: 16, ..LifParams::default() };
        let mut net = RealNetwork::random((1, 2, 2), layer_chain("3D2D", (1, 2, 2)).unwrap(), lif, 1.5, rng.random());
        for d in net.delays.iter_mut().flatten() {
            *d = rng.random_range(0..4) as f64 + rng.random_range(0.2..0.8);
        }
        let steps = rng.random_range(10..=20);
        let mut x = SpikeTensor::zeros(1, 2, steps);
        for t in 0..steps {
            for cell in 0..2 {
                if rng.random_bool(0.3) {
                    x.set_input(2 * cell + rng.random_range(0..2), t).unwrap();
                }
            }
        }
        let label = rng.random_range(0..2);
        let loss = LossSpec { target_true: 4.0, target_false: 0.5, class_weights: vec![1.0, 1.3] };
        let eval = |n: &RealNetwork| loss_count(&forward_with_trace(n, &x, &soft).unwrap().counts, label, &loss).unwrap();

        let trace = forward_with_trace(&net, &x, &soft).unwrap();
        let analytic = backward(&net, &trace, label, &soft, &loss).unwrap().1.flatten();
        let mut numeric = Vec::with_capacity(analytic.len());
        for p in 0..analytic.len() {
            let nudged = |delta: f64| {
                let mut n = net.clone();
                let param = n.weights.iter_mut().flatten().chain(n.delays.iter_mut().flatten()).nth(p).unwrap();
                *param += delta;
                eval(&n)
            };
            numeric.push((nudged(h) - nudged(-h)) / (2.0 * h));
        }
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let scale = norm(&analytic).max(norm(&numeric));
        if scale < 1e-6 {
            return Err(format!("instance {seed} has a vanishing gradient"));
        }
        worst = worst.max(norm(&diff) / scale);
    }
    ensure(worst < 1e-4, format!("20 instances, worst relative error {worst:.2e} (limit 1e-4)"))
}

fn pipeline_config(data: &Path, out: &Path) -> PipelineConfig {
    PipelineConfig { data_dir: data.into(), out_dir: out.into(), ..PipelineConfig::default() }
}

fn desk_scale_learning(data: &Path, out: &Path) -> Check {
    let started = Instant::now();
    write_dataset(&generate(&SyntheticSpec::default()).unwrap(), data).map_err(|e| e.to_string())?;
    let cfg = pipeline_config(data, out);
    let summary = run_pipeline(&cfg).map_err(|e| e.to_string())?;
    let acc = summary.cross_validation.mean_accuracy;
    let detail = ensure(
        acc >= 0.95 && cfg.train.epochs <= 200,
        format!("mean LOUO accuracy {acc:.4} over {} windows, {} epochs", summary.windows, cfg.train.epochs),
    )?;
    within(detail, started.elapsed(), 300)
}

fn edp_accounting() -> Check {
    let mut rows = baseline_rows();
    rows.insert(0, loihi_reference_row());
    let published = [0.66, 1.31, 168.5];
    let mut detail = Vec::new();
    let mut ok = true;
    for (row, want) in rows.iter().zip(published) {
        let got = row.edp_ujs();
        let printed = format_edp(got);
        ok &= (got - want).abs() / want < 5e-3 && printed == format_edp(want);
        detail.push(format!("{} {got} -> {printed}", row.hardware));
    }
    ensure(ok, detail.join(", "))
}

fn quantization_bound() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut violations = 0;
    let mut weights_checked = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..500);
        let scale = 2f64.powi(rng.random_range(-10..12));
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
        let q = quantize_layer(&weights, i32::MIN).map_err(|e| e.to_string())?;
        let bound = 2f64.powi(q.exponent - 1);
        for (w, back) in weights.iter().zip(q.dequantize()) {
            violations += ((w - back).abs() > bound) as usize;
            weights_checked += 1;
        }
    }
    ensure(violations == 0, format!("{violations} violations over {weights_checked} weights"))
}

fn determinism(data: &Path, first: &Path, second: &Path) -> Check {
    run_pipeline(&pipeline_config(data, second)).map_err(|e| e.to_string())?;
    let mut differing = Vec::new();
    for f in [MODEL_FILE, REPORT_CSV, FOLDS_FILE] {
        let a = fs::read(first.join(f)).map_err(|e| format!("{f}: {e}"))?;
        let b = fs::read(second.join(f)).map_err(|e| format!("{f}: {e}"))?;
        if a != b {
            differing.push(f);
        }
    }
    ensure(differing.is_empty(), format!("differing files: {differing:?}"))
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let first = tmp.path().join("run1");
    let second = tmp.path().join("run2");

    let criteria: Vec<Criterion> = vec![
        ("encoder matches the literal rule", Box::new(encoder_oracle)),
        ("encoder exclusion and nesting", Box::new(encoder_invariants)),
        ("threshold banks", Box::new(threshold_banks)),
        ("reference architecture shape chain", Box::new(shape_chain)),
        ("event-driven and dense backends agree", Box::new(backend_equivalence)),
        ("integer decay sequence", Box::new(decay_arithmetic)),
        ("surrogate gradient check", Box::new(gradient_check)),
        ("desk-scale learning", Box::new(|| desk_scale_learning(&data, &first))),
        ("EDP accounting", Box::new(edp_accounting)),
        ("quantization bound", Box::new(quantization_bound)),
        ("deterministic pipeline outputs", Box::new(|| determinism(&data, &first, &second))),
    ];

    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        match result {
            Ok(detail) => println!("criterion {:2} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:2} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
