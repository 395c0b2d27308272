//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned
//! below. Runs without the libtest harness so each line reports measured
//! values; the process exits non-zero if any criterion fails.
//!
//! `cargo test --release -p tapnet --test acceptance -- 3 5` runs a subset.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tapnet::data::synth::synthesize_snippet;
use tapnet::data::{
    read_dataset, shift_feature, synthesize, synthesize_stream, write_dataset, DatasetHeader,
    Sample, SynthConfig,
};
use tapnet::features::{build_feature, ANCHOR_INDEX, SEGMENT_LEN};
use tapnet::gating::{
    gate_signal, group_impulses, Extremum, ExtremumKind, GateConfig, DEFAULT_T_V_US,
};
use tapnet::model::{Capacity, ModelGraph, TapNetConfig, Task};
use tapnet::nn::layers::{BatchNorm, Conv1d, Dense};
use tapnet::nn::{Gradients, Layer, Mode, ParamStore, Tensor};
use tapnet::pipeline::{detect_events, DetectorConfig};
use tapnet::signal::CHANNELS;
use tapnet::train::sweep::{
    budget_to_reach, plateau_point, sweep, write_rows_csv, Experiment, SweepConfig,
};
use tapnet::train::{
    evaluate, location_mae, prepare, split_taps, targets, train, ConfusionMatrix, LossWeights,
    TrainPlan,
};
use tapnet::Error;

const GRAD_H: f64 = 1e-4;
const GRAD_TOL: f64 = 1e-3;
const GRAD_MIN_SCALARS: usize = 100;
const GRAD_BUDGET: Duration = Duration::from_secs(60);
const PARAM_TOLERANCE: f64 = 0.20;
const ALIGN_TAPS: u64 = 1000;
const GATE_TAPS: u64 = 1000;
const PARTITION_CASES: usize = 10_000;
const F1_MATRICES: usize = 50;
const SMOKE_F1: f64 = 0.95;
const SMOKE_MAE: f64 = 0.15;
const SMOKE_BUDGET: Duration = Duration::from_secs(600);
const LARGE_GAP: f64 = 0.03;
const PLATEAU_TOLERANCE: f64 = 0.02;
const LATENCY_MS: f64 = 10.0;
const ROUND_TRIP_SAMPLES: usize = 10_000;

type Outcome = (bool, String);

fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Largest relative error between `analytic` and central differences of
/// `loss` over the sampled `(param, index)` scalars.
fn check_params(
    store: &mut ParamStore,
    picks: &[(tapnet::nn::ParamId, usize)],
    analytic: &Gradients,
    loss: &dyn Fn(&ParamStore) -> f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for &(id, i) in picks {
        let a = analytic.get(id).map_or(0.0, |g| g.data()[i]);
        let x = store.get(id).data()[i];
        store.get_mut(id).data_mut()[i] = x + GRAD_H;
        let up = loss(store);
        store.get_mut(id).data_mut()[i] = x - GRAD_H;
        let down = loss(store);
        store.get_mut(id).data_mut()[i] = x;
        worst = worst.max(relative_error(a, (up - down) / (2.0 * GRAD_H)));
    }
    worst
}

/// Every trainable tensor at least once, then uniform picks up to `total`.
fn sample_scalars(
    store: &ParamStore,
    total: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(tapnet::nn::ParamId, usize)> {
    let ids: Vec<_> = store.trainable_ids().collect();
    let mut picks: Vec<_> = ids
        .iter()
        .map(|&id| (id, rng.gen_range(0..store.get(id).len())))
        .collect();
    while picks.len() < total {
        let id = ids[rng.gen_range(0..ids.len())];
        picks.push((id, rng.gen_range(0..store.get(id).len())));
    }
    picks
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    // Kept away from zero so no ReLU input sits on its kink.
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(0.1..1.5);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Loss `sum(w * layer(x))`; checks parameter and input gradients.
fn check_layer(
    store: &mut ParamStore,
    layer: &Layer,
    x: Tensor,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> (f64, usize) {
    let (y, cache) = layer.forward(store, x.clone(), mode).unwrap();
    let w = random_tensor(y.shape(), rng);
    let mut grads = Gradients::for_store(store);
    let dx = layer.backward(store, cache, w.clone(), &mut grads).unwrap();
    let loss_at = |s: &ParamStore, x: &Tensor| -> f64 {
        let (y, _) = layer.forward(s, x.clone(), mode).unwrap();
        y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
    };
    let picks = if store.trainable_ids().next().is_some() {
        sample_scalars(store, GRAD_MIN_SCALARS, rng)
    } else {
        Vec::new()
    };
    let mut worst = check_params(store, &picks, &grads, &|s| loss_at(s, &x));
    let mut checked = picks.len();
    let input_picks: Vec<usize> = (0..GRAD_MIN_SCALARS.min(x.len()))
        .map(|_| rng.gen_range(0..x.len()))
        .collect();
    for &i in &input_picks {
        let mut up = x.clone();
        up.data_mut()[i] += GRAD_H;
        let mut down = x.clone();
        down.data_mut()[i] -= GRAD_H;
        let n = (loss_at(store, &up) - loss_at(store, &down)) / (2.0 * GRAD_H);
        worst = worst.max(relative_error(dx.data()[i], n));
    }
    checked += input_picks.len();
    (worst, checked)
}

fn taps_config(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        tap_fraction: 1.0,
        ..SynthConfig::default()
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut details = Vec::new();
    let mut ok = true;

    let samples = synthesize(&taps_config(11), 4).unwrap();
    let batch: Vec<&Sample> = samples.iter().collect();
    for capacity in [Capacity::Small, Capacity::Large] {
        let mut graph = ModelGraph::build(TapNetConfig::mimo(capacity), 5).unwrap();
        // Zero-initialized biases put many quiet-region activations within
        // h of a ReLU kink, where central differences are meaningless. The
        // check runs at a generic point instead.
        let shifts: Vec<_> = graph
            .store()
            .trainable_ids()
            .filter(|&id| {
                let name = &graph.store().param(id).name;
                name.ends_with(".bias") || name.ends_with(".beta")
            })
            .collect();
        for id in shifts {
            let len = graph.store().get(id).len();
            let t = random_tensor(&[len], &mut rng);
            let v: Vec<f64> = t.data().iter().map(|x| x / 3.0).collect();
            graph.store_mut().get_mut(id).data_mut().copy_from_slice(&v);
        }
        let input = prepare(&graph, &batch).unwrap();
        let t = targets(&batch, &Task::ALL, &LossWeights::default()).unwrap();
        let analytic = graph
            .loss_and_gradients(&input, &t, Mode::Train)
            .unwrap()
            .gradients;
        // A scalar whose one-sided differences disagree has a ReLU kink
        // within h; central differences say nothing there, so it is
        // skipped and counted. The filter never looks at the analytic value.
        let ids: Vec<_> = graph.store().trainable_ids().collect();
        let (mut checked, mut kinked, mut worst) = (0, 0, 0.0f64);
        let mut attempt = 0;
        while checked < 2 * GRAD_MIN_SCALARS && attempt < 20 * GRAD_MIN_SCALARS {
            // Every tensor first, then uniform picks.
            let id = if attempt < ids.len() {
                ids[attempt]
            } else {
                ids[rng.gen_range(0..ids.len())]
            };
            attempt += 1;
            let i = rng.gen_range(0..graph.store().get(id).len());
            let a = analytic.get(id).map_or(0.0, |g| g.data()[i]);
            let x = graph.store().get(id).data()[i];
            let mut at = |v: f64| {
                graph.store_mut().get_mut(id).data_mut()[i] = v;
                graph.loss(&input, &t, Mode::Train).unwrap()
            };
            let (up, mid, down) = (at(x + GRAD_H), at(x), at(x - GRAD_H));
            graph.store_mut().get_mut(id).data_mut()[i] = x;
            if relative_error((up - mid) / GRAD_H, (mid - down) / GRAD_H) > GRAD_TOL {
                kinked += 1;
                continue;
            }
            checked += 1;
            worst = worst.max(relative_error(a, (up - down) / (2.0 * GRAD_H)));
        }
        ok &= worst < GRAD_TOL && checked >= GRAD_MIN_SCALARS;
        details.push(
            format!(
                "mimo-{capacity:?} {checked} scalars max {worst:.1e} ({kinked} kinked skipped)"
            )
            .to_lowercase(),
        );
    }

    let mut store = ParamStore::new();
    let conv = Layer::Conv1d(Conv1d::new(&mut store, "c", 3, 4, 5, 2, 0, &mut rng));
    let (w, n) = check_layer(
        &mut store,
        &conv,
        random_tensor(&[4, 20, 3], &mut rng),
        Mode::Train,
        &mut rng,
    );
    ok &= w < GRAD_TOL;
    details.push(format!("conv1d {n} max {w:.1e}"));

    let mut store = ParamStore::new();
    let dense = Layer::Dense(Dense::new(&mut store, "d", 12, 6, &mut rng));
    let (w, n) = check_layer(
        &mut store,
        &dense,
        random_tensor(&[4, 12], &mut rng),
        Mode::Train,
        &mut rng,
    );
    ok &= w < GRAD_TOL;
    details.push(format!("dense {n} max {w:.1e}"));

    let mut store = ParamStore::new();
    let bn = BatchNorm::new(&mut store, "bn", 3);
    for id in [bn.gamma, bn.beta] {
        let v = random_tensor(&[3], &mut rng);
        *store.get_mut(id) = v;
    }
    let bn = Layer::BatchNorm(bn);
    let (w, n) = check_layer(
        &mut store,
        &bn,
        random_tensor(&[4, 10, 3], &mut rng),
        Mode::Train,
        &mut rng,
    );
    ok &= w < GRAD_TOL;
    details.push(format!("batchnorm {n} max {w:.1e}"));

    for (name, layer, shape) in [
        ("relu", Layer::Relu, vec![4, 10, 3]),
        ("sigmoid", Layer::Sigmoid, vec![4, 10, 3]),
        ("flatten", Layer::Flatten, vec![4, 10, 3]),
    ] {
        let mut store = ParamStore::new();
        let (w, n) = check_layer(
            &mut store,
            &layer,
            random_tensor(&shape, &mut rng),
            Mode::Train,
            &mut rng,
        );
        ok &= w < GRAD_TOL;
        details.push(format!("{name} {n} max {w:.1e}"));
    }

    let elapsed = start.elapsed();
    ok &= elapsed < GRAD_BUDGET;
    (
        ok,
        format!(
            "{}; {:.1}s (tol {GRAD_TOL:.0e}, h {GRAD_H:.0e})",
            details.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut ok = true;
    let mut details = Vec::new();
    for (name, config, published) in [
        (
            "one-channel large",
            TapNetConfig::one_channel(Capacity::Large),
            163_000.0,
        ),
        (
            "one-channel small",
            TapNetConfig::one_channel(Capacity::Small),
            11_000.0,
        ),
        (
            "six-channel large",
            TapNetConfig::six_channel(Capacity::Large),
            144_000.0,
        ),
        (
            "six-channel small",
            TapNetConfig::six_channel(Capacity::Small),
            9_000.0,
        ),
    ] {
        let n = ModelGraph::build(config, 0).unwrap().count_params() as f64;
        let dev = n / published - 1.0;
        ok &= dev.abs() <= PARAM_TOLERANCE;
        details.push(format!("{name} {n} ({:+.1}%)", 100.0 * dev));
    }
    (
        ok,
        format!(
            "{} (tol ±{:.0}%)",
            details.join(", "),
            100.0 * PARAM_TOLERANCE
        ),
    )
}

fn fixed_gate(config: &SynthConfig) -> GateConfig {
    GateConfig::fixed(config.gate_threshold, config.gate_threshold)
}

fn criterion_3() -> Outcome {
    let config = taps_config(3);
    let (mut anchored, mut equivariant) = (0, 0);
    for i in 0..ALIGN_TAPS {
        let snippet = synthesize_snippet(&config, i).unwrap();
        let (f, _) = build_feature(&snippet.frames, snippet.anchor).unwrap();
        if f.values()[ANCHOR_INDEX] == snippet.frames[snippet.anchor].d_az() {
            anchored += 1;
        }
        // Re-cutting the window k samples earlier equals shifting by k,
        // except where the shift zero-fills.
        let exact = (-5isize..=5).all(|k| {
            let rebuilt = build_feature(&snippet.frames, (snippet.anchor as isize - k) as usize)
                .unwrap()
                .0;
            let shifted = shift_feature(&f, k);
            (0..CHANNELS).all(|c| {
                (0..SEGMENT_LEN).all(|t| {
                    let from = t as isize - k;
                    let vacated = !(0..SEGMENT_LEN as isize).contains(&from);
                    let j = c * SEGMENT_LEN + t;
                    if vacated {
                        shifted.values()[j] == 0.0
                    } else {
                        shifted.values()[j] == rebuilt.values()[j]
                    }
                })
            })
        });
        equivariant += exact as u64;
    }
    let ok = anchored == ALIGN_TAPS && equivariant == ALIGN_TAPS;
    (
        ok,
        format!(
            "anchor value at index {ANCHOR_INDEX}: {anchored}/{ALIGN_TAPS}, exact shift equivariance (|k| <= 5): {equivariant}/{ALIGN_TAPS}"
        ),
    )
}

/// Random time-ordered extrema; about half the gaps straddle `t_v`.
fn random_extrema(rng: &mut ChaCha8Rng) -> Vec<Extremum> {
    let n = rng.gen_range(0..40);
    let mut t = rng.gen_range(-1_000_000..1_000_000i64);
    (0..n)
        .map(|index| {
            t += rng.gen_range(1..2 * DEFAULT_T_V_US);
            Extremum {
                index,
                timestamp_us: t,
                value: rng.gen_range(-5.0..5.0),
                kind: if rng.gen_bool(0.5) {
                    ExtremumKind::Peak
                } else {
                    ExtremumKind::Valley
                },
            }
        })
        .collect()
}

fn criterion_4() -> Outcome {
    let config = taps_config(4);
    let gate = fixed_gate(&config);
    // Only taps whose observed anchor peak reaches twice the threshold
    // count; sensor noise pulls a few just below the generated amplitude.
    let (mut eligible, mut passed) = (0, 0);
    for i in 0..GATE_TAPS {
        let snippet = synthesize_snippet(&config, i).unwrap();
        let z: Vec<(i64, f64)> = snippet
            .frames
            .iter()
            .map(|f| (f.timestamp_us, f.d_az()))
            .collect();
        if z[snippet.anchor].1 < 2.0 * config.gate_threshold {
            continue;
        }
        eligible += 1;
        passed += gate_signal(&z, &gate).passed() as u64;
    }

    // Sub-threshold motion and pure sensor noise, both as snippets and as
    // continuous streams through the detector.
    let quiet = SynthConfig {
        seed: 44,
        tap_fraction: 0.0,
        nontap_weights: [0.0, 0.0, 0.0, 0.0, 0.5, 0.5],
        ..SynthConfig::default()
    };
    let quiet_passed = (0..GATE_TAPS)
        .filter(|&i| {
            let s = synthesize_snippet(&quiet, i).unwrap();
            let z: Vec<(i64, f64)> = s
                .frames
                .iter()
                .map(|f| (f.timestamp_us, f.d_az()))
                .collect();
            gate_signal(&z, &gate).passed()
        })
        .count();
    let (frames, _) = synthesize_stream(&quiet, 200, 0.5).unwrap();
    let fixed_events = detect_events(
        &frames,
        &DetectorConfig {
            gate: gate.clone(),
            ..DetectorConfig::default()
        },
    )
    .unwrap()
    .len();
    let adaptive_events = detect_events(&frames, &DetectorConfig::default())
        .unwrap()
        .len();

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut partitions = 0;
    for _ in 0..PARTITION_CASES {
        let extrema = random_extrema(&mut rng);
        let groups = group_impulses(&extrema, DEFAULT_T_V_US);
        let flat: Vec<Extremum> = groups
            .iter()
            .flat_map(|g| g.extrema.iter().copied())
            .collect();
        let inside = groups.iter().all(|g| {
            !g.extrema.is_empty()
                && g.extrema
                    .windows(2)
                    .all(|w| w[1].timestamp_us - w[0].timestamp_us < DEFAULT_T_V_US)
        });
        let between = groups
            .windows(2)
            .all(|w| w[1].start_us() - w[0].end_us() >= DEFAULT_T_V_US);
        partitions += (flat == extrema && inside && between) as usize;
    }

    let ok = passed == eligible
        && eligible >= GATE_TAPS * 9 / 10
        && quiet_passed == 0
        && fixed_events == 0
        && adaptive_events == 0
        && partitions == PARTITION_CASES;
    (
        ok,
        format!(
            "taps at >= 2x threshold passed {passed}/{eligible} (of {GATE_TAPS} drawn), sub-threshold/noise snippets passed {quiet_passed}/{GATE_TAPS}, stream events fixed {fixed_events} adaptive {adaptive_events}, partitions {partitions}/{PARTITION_CASES}"
        ),
    )
}

/// Weighted F1 straight from the definition, with rows as truth.
fn brute_force_f1(m: &[Vec<u64>]) -> f64 {
    let k = m.len();
    let total: u64 = m.iter().flatten().sum();
    let mut sum = 0.0;
    for c in 0..k {
        let tp = m[c][c] as f64;
        let fp: f64 = (0..k).filter(|&r| r != c).map(|r| m[r][c] as f64).sum();
        let fn_: f64 = (0..k).filter(|&p| p != c).map(|p| m[c][p] as f64).sum();
        let support = tp + fn_;
        let f1 = if tp == 0.0 {
            0.0
        } else {
            2.0 * tp / (2.0 * tp + fp + fn_)
        };
        sum += f1 * support;
    }
    sum / total as f64
}

fn criterion_5() -> Outcome {
    let opposite = location_mae(&[[0.0, 0.0]], &[[1.0, 1.0]], 1.0, 1.0).unwrap();
    let center = location_mae(&[[0.0, 0.0]], &[[0.5, 0.5]], 1.0, 1.0).unwrap();
    // Pixel coordinates on a 1080 x 2340 screen normalize to the same values.
    let pixels = location_mae(&[[0.0, 2340.0]], &[[1080.0, 0.0]], 1080.0, 2340.0).unwrap();
    let corners = format!("{opposite:.4}") == "1.4142"
        && format!("{center:.4}") == "0.7071"
        && format!("{pixels:.4}") == "1.4142";

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..F1_MATRICES {
        let k = rng.gen_range(2..=6);
        let mut rows: Vec<Vec<u64>> = (0..k)
            .map(|_| {
                (0..k)
                    .map(|_| {
                        if rng.gen_bool(0.3) {
                            0
                        } else {
                            rng.gen_range(0..20)
                        }
                    })
                    .collect()
            })
            .collect();
        rows[0][0] += 1;
        let m = ConfusionMatrix::from_rows(&rows).unwrap();
        worst = worst.max((m.weighted_f1().unwrap() - brute_force_f1(&rows)).abs());
    }
    let ok = corners && worst <= 1e-12;
    (
        ok,
        format!(
            "corners {opposite:.4}, corner-center {center:.4}, pixels {pixels:.4}; weighted F1 max |diff| {worst:.1e} over {F1_MATRICES} matrices"
        ),
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut taps = synthesize(&taps_config(60), 5000).unwrap();
    let nontaps = synthesize(
        &SynthConfig {
            seed: 61,
            tap_fraction: 0.0,
            ..SynthConfig::default()
        },
        1000,
    )
    .unwrap();
    let held_out = synthesize(
        &SynthConfig {
            seed: 62,
            ..SynthConfig::default()
        },
        1500,
    )
    .unwrap();
    let plan = TrainPlan::default();
    let mut graph = ModelGraph::build(TapNetConfig::mimo(Capacity::Small), plan.seed).unwrap();
    let outcome = train(&mut graph, &taps, &nontaps, &plan).unwrap();
    taps.clear();
    let report = evaluate(&graph, &held_out).unwrap();
    let elapsed = start.elapsed();
    let f1 = |t: &str| report.f1(t).unwrap_or(0.0);
    let mae = report.location_mae().unwrap_or(f64::INFINITY);
    let cycles = outcome.history.cycles;
    let ok = ["event", "direction", "finger"]
        .iter()
        .all(|t| f1(t) >= SMOKE_F1)
        && mae <= SMOKE_MAE
        && cycles <= plan.max_cycles
        && elapsed < SMOKE_BUDGET;
    (
        ok,
        format!(
            "held-out F1 event {:.3} direction {:.3} finger {:.3} (>= {SMOKE_F1}), MAE {mae:.3} (<= {SMOKE_MAE}), {cycles} cycles, {:.0}s",
            f1("event"),
            f1("direction"),
            f1("finger"),
            elapsed.as_secs_f64()
        ),
    )
}

fn sweep_config(experiment: Experiment, grid: Vec<usize>, seeds: Vec<u64>) -> SweepConfig {
    SweepConfig {
        experiment,
        grid,
        seeds,
        capacities: vec![Capacity::Small],
        ..SweepConfig::default()
    }
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let small = sweep(&sweep_config(
        Experiment::TrainingSize,
        vec![1000],
        vec![0, 1, 2],
    ))
    .unwrap();
    let mimo = small.values(1000, "direction", "mimo.f1");
    let siso = small.values(1000, "direction", "siso.f1");
    let wins = mimo.iter().zip(&siso).filter(|(m, s)| m.1 >= s.1).count();
    let per_seed: Vec<String> = mimo
        .iter()
        .zip(&siso)
        .map(|(m, s)| format!("s{} {:.3}/{:.3}", m.0, m.1, s.1))
        .collect();

    // One cycle over 15K taps is already more optimizer steps than the
    // whole 1K schedule.
    let mut large = sweep_config(Experiment::TrainingSize, vec![15_000], vec![0, 1, 2]);
    large.plan.max_cycles = 1;
    let large = sweep(&large).unwrap();
    let mean = |v: Vec<(u64, f64)>| v.iter().map(|x| x.1).sum::<f64>() / v.len() as f64;
    let gap = (mean(large.values(15_000, "direction", "mimo.f1"))
        - mean(large.values(15_000, "direction", "siso.f1")))
    .abs();

    let ok = mimo.len() == 3 && siso.len() == 3 && wins >= 2 && gap <= LARGE_GAP;
    (
        ok,
        format!(
            "1K direction F1 mimo/siso {} -> mimo >= siso on {wins}/3 (need 2); 15K |gap| {gap:.4} (<= {LARGE_GAP}); {:.0}s",
            per_seed.join(", "),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let mut config = sweep_config(Experiment::CrossDevice, vec![250, 500, 1000, 2000], vec![0]);
    config.nontap_ratio = 0.0;
    let result = sweep(&config).unwrap();
    let joint = result.curve("direction", "A+B@B.f1");
    let transfer = result.curve("direction", "A->B@B.f1");
    let best = joint.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let plateau = plateau_point(&joint, PLATEAU_TOLERANCE);
    let needed = budget_to_reach(&transfer, best - PLATEAU_TOLERANCE);
    let ok = match (plateau, needed) {
        (Some(p), Some(n)) => p <= n,
        (Some(_), None) => true,
        _ => false,
    };
    let fmt = |c: &[(usize, f64)]| {
        c.iter()
            .map(|p| format!("{}:{:.3}", p.0, p.1))
            .collect::<Vec<_>>()
            .join(" ")
    };
    (
        ok,
        format!(
            "direction F1 on B, joint [{}] plateau at {:?}; A->B [{}] reaches {:.3} at {}; {:.0}s",
            fmt(&joint),
            plateau,
            fmt(&transfer),
            best - PLATEAU_TOLERANCE,
            needed.map_or("never".into(), |n| n.to_string()),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let result = sweep(&sweep_config(
        Experiment::ChannelAblation,
        vec![2000],
        vec![0, 1, 2],
    ))
    .unwrap();
    let one = result.values(2000, "direction", "one_channel.small.f1");
    let six = result.values(2000, "direction", "six_channel.small.f1");
    let wins = one.iter().zip(&six).filter(|(o, s)| o.1 >= s.1).count();
    let per_seed: Vec<String> = one
        .iter()
        .zip(&six)
        .map(|(o, s)| format!("s{} {:.3}/{:.3}", o.0, o.1, s.1))
        .collect();
    let params = |m: &str| {
        result
            .values(2000, "direction", m)
            .first()
            .map_or(0.0, |v| v.1)
    };
    let ok = one.len() == 3 && wins >= 2;
    (
        ok,
        format!(
            "direction F1 one/six {} -> one >= six on {wins}/3 (need 2); params {} vs {}; {:.0}s",
            per_seed.join(", "),
            params("one_channel.small.params"),
            params("six_channel.small.params"),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_10() -> Outcome {
    let samples = synthesize(
        &SynthConfig {
            seed: 10,
            ..SynthConfig::default()
        },
        400,
    )
    .unwrap();
    let (taps, nontaps) = split_taps(&samples);
    let plan = TrainPlan {
        max_cycles: 2,
        property_epochs: 2,
        seed: 10,
        ..TrainPlan::default()
    };
    let checkpoint = || {
        let mut graph = ModelGraph::build(TapNetConfig::mimo(Capacity::Small), plan.seed).unwrap();
        let outcome = train(&mut graph, &taps, &nontaps, &plan).unwrap();
        graph
            .to_checkpoint(Some(&outcome.optimizer), plan.seed)
            .unwrap()
            .to_bytes()
            .unwrap()
    };
    let (a, b) = (checkpoint(), checkpoint());

    let mut config = sweep_config(Experiment::TrainingSize, vec![80, 160], vec![0, 1]);
    config.test_samples = 100;
    config.plan = TrainPlan {
        max_cycles: 1,
        property_epochs: 2,
        ..TrainPlan::default()
    };
    let csv = || {
        let mut out = Vec::new();
        write_rows_csv(&mut out, &sweep(&config).unwrap().rows).unwrap();
        out
    };
    let (x, y) = (csv(), csv());
    let ok = a == b && x == y && !a.is_empty() && !x.is_empty();
    (
        ok,
        format!(
            "checkpoint {} bytes identical: {}, sweep CSV {} bytes identical: {}",
            a.len(),
            a == b,
            x.len(),
            x == y
        ),
    )
}

fn criterion_11() -> Outcome {
    let samples = synthesize(
        &SynthConfig {
            seed: 11,
            ..SynthConfig::default()
        },
        201,
    )
    .unwrap();
    let mut ok = true;
    let mut details = Vec::new();
    for capacity in [Capacity::Small, Capacity::Large] {
        let graph = ModelGraph::build(TapNetConfig::mimo(capacity), 0).unwrap();
        let mut times: Vec<f64> = samples
            .iter()
            .map(|s| {
                let t = Instant::now();
                std::hint::black_box(graph.predict_one(s.feature.values(), &s.device).unwrap());
                t.elapsed().as_secs_f64() * 1e3
            })
            .collect();
        times.sort_by(f64::total_cmp);
        let median = times[times.len() / 2];
        ok &= median <= LATENCY_MS;
        details.push(format!("mimo-{capacity:?} median {median:.3} ms").to_lowercase());
    }
    (ok, format!("{} (<= {LATENCY_MS} ms)", details.join(", ")))
}

fn criterion_12() -> Outcome {
    let samples = synthesize(
        &SynthConfig {
            seed: 12,
            ..SynthConfig::default()
        },
        ROUND_TRIP_SAMPLES,
    )
    .unwrap();
    let mut bytes = Vec::new();
    write_dataset(&mut bytes, &DatasetHeader::new(None), &samples).unwrap();
    let (_, back) = read_dataset(&bytes[..]).unwrap();
    let lossless = back == samples;

    // Header is line 1, so sample i sits on line i + 2.
    let text = String::from_utf8(bytes).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let target = 4321;
    let expected_offset: usize = lines[..target - 1].iter().map(|l| l.len() + 1).sum();
    let truncated = lines[target - 1][..40].to_string();
    lines[target - 1] = &truncated;
    let corrupt = lines.join("\n") + "\n";
    let reported = match read_dataset(corrupt.as_bytes()) {
        Err(Error::Corrupt { line, offset, .. }) => Some((line, offset)),
        _ => None,
    };
    let ok = lossless && reported == Some((target, expected_offset as u64));
    (
        ok,
        format!(
            "{ROUND_TRIP_SAMPLES} samples lossless: {lossless}; corrupt line {target} at byte {expected_offset} reported as {reported:?}"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("gradient check", criterion_1),
        ("parameter budgets", criterion_2),
        ("alignment invariant", criterion_3),
        ("gating oracle", criterion_4),
        ("metric oracles", criterion_5),
        ("learning smoke", criterion_6),
        ("multi-task data efficiency", criterion_7),
        ("cross-device ordering", criterion_8),
        ("channel ablation ordering", criterion_9),
        ("determinism", criterion_10),
        ("inference latency", criterion_11),
        ("dataset round trip", criterion_12),
    ];
    // Numeric arguments select criteria; libtest flags are ignored.
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let number = i + 1;
        if !selected.is_empty() && !selected.contains(&number) {
            continue;
        }
        let (ok, detail) = match panic::catch_unwind(AssertUnwindSafe(run)) {
            Ok(outcome) => outcome,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        failed += !ok as usize;
        println!(
            "{} criterion {number:>2} {name}: {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
