//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wayfind_core::describer::{describe, DescriberConfig};
use wayfind_core::distance::{
    calibrate_focal_length, estimate_distance, CameraModel, Direction, Heading, HeightRegistry, RangedObject,
};
use wayfind_core::finetune::{grad_check, EarlyStopMonitor, LabeledSample, ModelShape, StopDecision, TinyTwoHeadModel};
use wayfind_core::perception::{BBox, Detection};
use wayfind_core::pipeline::{percentile, NoopObserver, Pipeline, PipelineConfig, RunSummary};
use wayfind_core::quantization::{
    dequantize, quantize_per_channel, quantize_tensor, round_trip_sse, size_report, LayerSpec, QuantizedTensor, Scales,
    Tensor,
};
use wayfind_core::scheduler::{FrameScheduler, SchedulerConfig, Shutdown, SimulatedClock, SyntheticSource};
use wayfind_core::tts::{build_request, normalize_text, HttpTtsTransport, Prosody, TtsDispatcher, TtsError, Utterance};
use wayfind_server::stubs::StubTts;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn distance_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let camera_dims = (4000, 4000);
    let (mut worst_est, mut worst_cal) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let big_h: f64 = rng.random_range(0.05..5.0);
        let f: f64 = rng.random_range(50.0..5000.0);
        let y1: f64 = rng.random_range(0.0..1000.0);
        let y2: f64 = y1 + rng.random_range(1.0..2000.0);
        let bbox = BBox::new(10.0, y1, 20.0, y2);
        let mut reg = HeightRegistry::empty();
        reg.insert("object", big_h).unwrap();
        let camera = CameraModel::new(f, camera_dims.0, camera_dims.1).unwrap();
        let d = estimate_distance(&bbox, "object", &reg, &camera).unwrap();
        let direct = big_h * f / (y2 - y1);
        worst_est = worst_est.max(rel(d, direct));
        let f_back = calibrate_focal_length(big_h, d, &bbox).unwrap();
        worst_cal = worst_cal.max(rel(f_back, f));
    }
    let elapsed = start.elapsed();
    verdict(
        worst_est <= 1e-12 && worst_cal <= 1e-9 && elapsed < Duration::from_secs(1),
        format!("1000 triples, max rel err estimate {worst_est:.2e} (<=1e-12), calibrate round trip {worst_cal:.2e} (<=1e-9), {elapsed:.2?} (<1s)"),
    )
}

fn max_error_vs_half_step(original: &Tensor, qt: &QuantizedTensor, cols: usize) -> f64 {
    // largest |w - deq| minus half the governing scale; must stay <= 1e-12
    let deq = dequantize(qt);
    original
        .data
        .iter()
        .zip(&deq.data)
        .enumerate()
        .map(|(i, (w, r))| {
            let s = match &qt.params.scales {
                Scales::PerTensor(s) => *s,
                Scales::PerChannel { scales, .. } => scales[i / cols],
            };
            (w - r).abs() - s / 2.0
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn quantization_round_trip() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let bits = [2u32, 4, 8];
    let total = 100_000;
    let mut worst_margin = f64::NEG_INFINITY;
    let mut pc_worse = [0usize; 3];
    let mut per_bits = [0usize; 3];
    for t in 0..total {
        let bi = t % 3;
        let n = bits[bi];
        let rows = rng.random_range(1..=6);
        let cols = rng.random_range(1..=12);
        let data: Vec<f64> = (0..rows)
            .flat_map(|_| {
                let row_scale: f64 = 10f64.powf(rng.random_range(-2.0..1.0));
                (0..cols)
                    .map(|_| rng.random_range(-1.0..1.0) * row_scale)
                    .collect::<Vec<_>>()
            })
            .collect();
        let tensor = Tensor::new(vec![rows, cols], data).unwrap();
        let pt = quantize_tensor(&tensor, n).unwrap();
        let pc = quantize_per_channel(&tensor, 0, n).unwrap();
        worst_margin = worst_margin
            .max(max_error_vs_half_step(&tensor, &pt, cols))
            .max(max_error_vs_half_step(&tensor, &pc, cols));
        per_bits[bi] += 1;
        if round_trip_sse(&tensor, &pc) > round_trip_sse(&tensor, &pt) {
            pc_worse[bi] += 1;
        }
    }
    let elapsed = start.elapsed();
    let bound_ok = worst_margin <= 1e-12;
    let order_ok = pc_worse.iter().all(|&c| c == 0);
    verdict(
        bound_ok && order_ok && elapsed < Duration::from_secs(30),
        format!(
            "{total} tensors: max(|w-deq(q(w))| - s/2) = {worst_margin:.2e} (<=1e-12: {bound_ok}); per-channel SSE above per-tensor on {}/{} (n=2), {}/{} (n=4), {}/{} (n=8) matrices (required 0: {order_ok}); {elapsed:.2?} (<30s)",
            pc_worse[0], per_bits[0], pc_worse[1], per_bits[1], pc_worse[2], per_bits[2]
        ),
    )
}

fn size_estimator() -> Verdict {
    let layer = |count: u64| LayerSpec {
        name: "weights".into(),
        element_count: count,
        source_bits: 32,
        scale_count: 1,
    };
    let mut ratios = Vec::new();
    for count in [10_000u64, 12_345, 100_000, 1_000_000, 123_456_789] {
        ratios.push(size_report(&[layer(count)], 4).unwrap().ratio);
    }
    let ratios_ok = ratios.iter().all(|r| (7.5..=8.0).contains(r));
    let gb = 1e9;
    let elements = (3.3 * gb / 4.0) as u64;
    let big = size_report(&[layer(elements)], 4).unwrap();
    let after_gb = big.total_after as f64 / gb;
    let big_ok = (after_gb - 0.4125).abs() < 0.001;
    let reference_gb = 0.6;
    verdict(
        ratios_ok && big_ok,
        format!(
            "32->4 bit ratios {:?} within [7.5, 8.0]: {ratios_ok}; 3.3 GB fp32 payload -> {after_gb:.4} GB at 4 bits \
             (reported reference size {reference_gb} GB is {:.3} GB larger than the analytic payload; scale overhead is 4 bytes, \
             so the gap is outside what weight quantization accounts for)",
            ratios.iter().map(|r| (r * 1e4).round() / 1e4).collect::<Vec<_>>(),
            reference_gb - after_gb
        ),
    )
}

fn gradient_check() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let shape = ModelShape::new(rng.random_range(1..=3), rng.random_range(1..=3));
        let model = TinyTwoHeadModel::init(shape, rng.random());
        let batch: Vec<LabeledSample> = (0..8)
            .map(|_| LabeledSample {
                x: (0..shape.inputs).map(|_| rng.random_range(-1.0..1.0)).collect(),
                y: rng.random_range(0..=1),
                d: rng.random_range(0.5..8.0),
            })
            .collect();
        let lambda = rng.random_range(0.0..3.0);
        let alpha = rng.random_range(0.0..0.1);
        worst = worst.max(grad_check(&model, &batch, lambda, alpha, 1e-5).unwrap());
    }
    let elapsed = start.elapsed();
    verdict(
        worst < 1e-5 && elapsed < Duration::from_secs(10),
        format!("100 instances, max relative error {worst:.2e} (<1e-5), {elapsed:.2?} (<10s)"),
    )
}

fn monitor_stop_index(losses: &[f64], patience: usize) -> Option<usize> {
    let mut m = EarlyStopMonitor::new(patience, 1e-9);
    losses.iter().position(|&l| m.step(l).unwrap() == StopDecision::Stop)
}

// Direct reading of the rule: at epoch i, count epochs since the last loss
// that beat every earlier loss by more than min_delta; stop once that count
// exceeds patience.
fn brute_force_stop_index(losses: &[f64], patience: usize) -> Option<usize> {
    (0..losses.len()).find(|&i| {
        let last_improvement = (0..=i)
            .rev()
            .find(|&j| losses[..j].iter().all(|&earlier| losses[j] < earlier - 1e-9))
            .expect("epoch 0 always improves");
        i - last_improvement > patience
    })
}

fn early_stopping() -> Verdict {
    let scripted = monitor_stop_index(&[1.0, 0.9, 0.95, 0.96, 0.97], 2);
    let mut checked = 0usize;
    let mut mismatches = 0usize;
    // every sequence of length <= 8 built from down / flat / up steps
    for len in 1..=8usize {
        let steps = len - 1;
        for code in 0..3usize.pow(steps as u32) {
            let mut seq = vec![1.0f64];
            let mut c = code;
            for _ in 0..steps {
                let delta = [-0.1, 0.0, 0.1][c % 3];
                c /= 3;
                seq.push(seq.last().unwrap() + delta);
            }
            for patience in 0..=len {
                checked += 1;
                if monitor_stop_index(&seq, patience) != brute_force_stop_index(&seq, patience) {
                    mismatches += 1;
                }
            }
        }
    }
    verdict(
        scripted == Some(4) && mismatches == 0,
        format!("scripted sequence stops at index {scripted:?} (expected 4); {checked} sequence/patience pairs, {mismatches} disagreements with brute force"),
    )
}

fn describer_golden() -> Verdict {
    let obj = |label: &str, x: f64, d: f64| RangedObject {
        detection: Detection::new(label, 0.9, BBox::new(x, 100.0, x + 40.0, 400.0)),
        distance_m: d,
        direction: Direction::Center,
        heading: Heading::Toward,
    };
    let objects = vec![
        obj("woman", 600.0, 1.36),
        obj("woman", 610.0, 1.40),
        obj("woman", 620.0, 1.45),
        obj("woman", 630.0, 1.50),
        obj("man", 640.0, 1.38),
    ];
    let text = describe(&objects, &DescriberConfig::default()).text;
    let spoken = normalize_text(&text).unwrap();
    let want_text = "4 women and 1 man, at 1.36 meters away, are headed towards you.";
    let want_spoken = "four women and one man, at one point three six meters away, are headed towards you.";
    verdict(
        text == want_text && spoken == want_spoken,
        format!("rendered {text:?}; normalized {spoken:?}"),
    )
}

fn scheduler_timing() -> Verdict {
    let mut sched = FrameScheduler::new(SchedulerConfig::default()).unwrap();
    let mut source = SyntheticSource::new(1_000, 2.0, 640, 480).unwrap();
    let clock = SimulatedClock::new(0);
    let mut bad = Vec::new();
    for k in 0..10u64 {
        let batch = sched.next_batch(&mut source, &clock).unwrap();
        let ts: Vec<u64> = batch.frames.iter().map(|f| f.timestamp_ms).collect();
        let want = vec![5000 * k, 5000 * k + 500, 5000 * k + 1000];
        if ts != want || batch.cycle_start_ms != 5000 * k || batch.cycle_index != k {
            bad.push((k, ts));
        }
    }
    verdict(
        bad.is_empty() && sched.dropped_cycles() == 0,
        format!(
            "10 simulated cycles, {} off-schedule, {} dropped",
            bad.len(),
            sched.dropped_cycles()
        ),
    )
}

fn end_to_end(rt: &tokio::runtime::Runtime) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut script = serde_json::Map::new();
    let det =
        |h: f64| serde_json::json!({"label": "person", "confidence": 0.9, "bbox": [600.0, 100.0, 650.0, 100.0 + h]});
    for (i, h) in [
        (0u64, 300.0),
        (1, 320.0),
        (2, 345.0),
        (10, 300.0),
        (11, 300.0),
        (12, 300.0),
    ] {
        script.insert(i.to_string(), serde_json::json!([det(h)]));
    }
    std::fs::write(
        dir.path().join("script.json"),
        serde_json::Value::Object(script).to_string(),
    )
    .unwrap();

    let stub = StubTts::new(1);
    let server = rt
        .block_on(wayfind_server::spawn("127.0.0.1:0", stub.router()))
        .unwrap();
    let mut cfg = PipelineConfig::from_json(
        r#"{"perception": {"mock_script": "script.json"}, "source": {"fps": 2.0, "synthetic_frames": 30}}"#,
        dir.path(),
    )
    .unwrap();
    cfg.tts.endpoint = Some(server.url());

    let run = || -> RunSummary {
        let p = Pipeline::from_config(&cfg).unwrap();
        let mut src = SyntheticSource::new(cfg.source.synthetic_frames, cfg.source.fps, 1280, 720).unwrap();
        p.run(&mut src, &SimulatedClock::new(0), &Shutdown::new(), &mut NoopObserver)
            .unwrap()
    };
    let first = run();
    let second = run();
    rt.block_on(server.shutdown()).unwrap();

    let overheads: Vec<f64> = first
        .metrics
        .iter()
        .filter(|m| !m.dropped)
        .map(|m| m.overhead_ms())
        .collect();
    let p95 = percentile(&overheads, 95.0);
    let identical = first.transcript == second.transcript;
    let spoken = stub.received().len();
    verdict(
        first.cycles == 5 && p95 < 50.0 && identical,
        format!(
            "cycles completed {} (required 5); overhead p95 {p95:.3} ms (<50 ms); transcripts identical: {identical}; stub TTS requests {spoken}",
            first.cycles
        ),
    )
}

fn tts_contract(rt: &tokio::runtime::Runtime) -> Verdict {
    let p = Prosody::default();
    let rejected = build_request("hello", 34, &p) == Err(TtsError::SpeakerOutOfRange(34));
    let a = build_request("hello there", 7, &p).unwrap();
    let b = build_request("hello there", 7, &p).unwrap();
    let expected =
        r#"{"text": "hello there", "speaker_id": 7, "prosody": {"pitch": 0.0, "rate": 1.0, "amplitude": 1.0}}"#;
    let stable = a == b && a == expected;

    let stub = StubTts::new(200);
    let server = rt
        .block_on(wayfind_server::spawn("127.0.0.1:0", stub.router()))
        .unwrap();
    let dispatcher = TtsDispatcher::spawn(Box::new(HttpTtsTransport::new(&server.url())));
    let utt = |t: &str| Utterance::new(t.into(), 0, p, 0).unwrap();
    dispatcher.enqueue(utt("first utterance now"));
    let started = Instant::now();
    while dispatcher.stats().sent < 1 && started.elapsed() < Duration::from_secs(5) {
        std::thread::sleep(Duration::from_millis(1));
    }
    dispatcher.enqueue(utt("second utterance"));
    std::thread::sleep(Duration::from_millis(1));
    dispatcher.enqueue(utt("third utterance"));
    let stats = dispatcher.finish(Duration::from_secs(5));
    let wire = stub.received();
    rt.block_on(server.shutdown()).unwrap();
    let burst_ok = wire.len() == 2 && wire[1].contains("third utterance");
    verdict(
        rejected && stable && burst_ok,
        format!(
            "speaker 34 rejected: {rejected}; canonical bytes stable: {stable}; 3-utterance burst -> {} wire requests (expected 2), {} replaced",
            wire.len(),
            stats.replaced
        ),
    )
}

type Check<'a> = Box<dyn Fn() -> Verdict + 'a>;

fn main() -> ExitCode {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .unwrap();
    let criteria: Vec<(&str, Check<'_>)> = vec![
        ("distance oracle", Box::new(distance_oracle)),
        ("quantization round trip", Box::new(quantization_round_trip)),
        ("size estimator", Box::new(size_estimator)),
        ("gradient check", Box::new(gradient_check)),
        ("early stopping", Box::new(early_stopping)),
        ("describer golden", Box::new(describer_golden)),
        ("scheduler timing", Box::new(scheduler_timing)),
        ("end-to-end dry run", Box::new(|| end_to_end(&rt))),
        ("tts contract", Box::new(|| tts_contract(&rt))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!(
            "{} [{}] {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            i + 1,
            v.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
