//! Calibration sweeps for the artificial neuron defaults.
//!
//! Finds the background current that puts the free-running neuron at its
//! spontaneous-rate target, then reports how a single full-weight burst and
//! sustained weighted stimulation move the firing rate. The chosen values are
//! frozen into the library defaults; re-run this after touching the neuron
//! model.
//!
//!     cargo run --release --example calibrate

use bnn::artificial::AdaptiveNeuron;
use bnn::config::{NeuronConfig, StimConfig};

fn rate_hz(cfg: NeuronConfig, drive: f64, seconds: f64, seed: u64) -> f64 {
    let mut n = AdaptiveNeuron::new(cfg, StimConfig::default(), seed);
    n.set_external_drive(drive);
    let dt_us = (cfg.dt_ms * 1000.0) as u64;
    let steps = (seconds * 1000.0 / cfg.dt_ms) as u64;
    let mut t = 0u64;
    let mut spikes = 0u64;
    for _ in 0..steps {
        t += dt_us;
        if n.step(t) {
            spikes += 1;
        }
    }
    spikes as f64 / seconds
}

/// Mean rate across seeds, so the pick is not tuned to one noise stream.
fn mean_rate(cfg: NeuronConfig, drive: f64, seconds: f64) -> f64 {
    let seeds = [3u64, 17, 42, 101, 2024];
    seeds
        .iter()
        .map(|&s| rate_hz(cfg, drive, seconds, s))
        .sum::<f64>()
        / seeds.len() as f64
}

fn burst_response(cfg: NeuronConfig, stim: StimConfig, weight_byte: u8, seed: u64) -> (f64, f64) {
    // Expected spikes in a short window with and without one burst at its
    // start — the instantaneous-rate probe. The tonic train is nearly
    // periodic, so the window phase is randomized across trials to sample the
    // cycle uniformly.
    let dt_us = (cfg.dt_ms * 1000.0) as u64;
    let window_us = 200_000u64;
    let trials = 200u64;
    let mut base = 0u64;
    let mut stimmed = 0u64;
    for k in 0..trials {
        let settle_us = 2_000_000 + (k * 3_571 % 700) * 1_000;
        let mut n = AdaptiveNeuron::new(cfg, stim, seed + k);
        let mut t = 0u64;
        while t < settle_us {
            t += dt_us;
            n.step(t);
        }
        let t_mark = t;
        let mut n2 = n.clone();
        while t < t_mark + window_us {
            t += dt_us;
            if n.step(t) {
                base += 1;
            }
        }
        n2.on_stimulation(weight_byte, t_mark);
        let mut t2 = t_mark;
        while t2 < t_mark + window_us {
            t2 += dt_us;
            if n2.step(t2) {
                stimmed += 1;
            }
        }
    }
    let w = window_us as f64 / 1e6;
    (
        base as f64 / trials as f64 / w,
        stimmed as f64 / trials as f64 / w,
    )
}

fn main() {
    let base = NeuronConfig::default();
    let target = base.spont_target_hz;

    println!("== i_background sweep (target {target} Hz, 120 s x 5 seeds) ==");
    let mut lo = 18.2f64;
    let mut hi = 21.0f64;
    for step in 0..18 {
        let mid = 0.5 * (lo + hi);
        let cfg = NeuronConfig {
            i_background: mid,
            ..base
        };
        let r = mean_rate(cfg, 0.0, 120.0);
        println!("  step {step:2}  i_bg {mid:7.4}  rate {r:6.3} Hz");
        if r < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (r - target).abs() <= 0.02 * target {
            println!("  -> within 2% at i_bg = {mid:.4}");
            break;
        }
    }
    let picked = 0.5 * (lo + hi);
    println!("picked i_background = {picked:.4}");
    let check = NeuronConfig {
        i_background: picked,
        ..base
    };
    println!(
        "verification: {:.3} Hz (default in code: {:.3} Hz at i_bg {})",
        mean_rate(check, 0.0, 120.0),
        mean_rate(base, 0.0, 120.0),
        base.i_background,
    );

    println!("== single full-weight burst response, 200 ms window ==");
    for quantum in [6.0, 10.0, 14.0, 18.0, 22.0] {
        let check = NeuronConfig {
            i_background: picked,
            ..base
        };
        let stim = StimConfig {
            epsc_quantum: quantum,
            ..Default::default()
        };
        let (b, s) = burst_response(check, stim, 255, 9000);
        println!(
            "  quantum {quantum:5.1}: baseline {b:.2} Hz, post-burst {s:.2} Hz, ratio {:.2}x",
            s / b.max(1e-9)
        );
    }

    println!("== sustained drive response ==");
    for drive in [0.0, 2.0, 4.0, 8.0, 16.0] {
        println!(
            "  drive {drive:5.1} -> {:6.2} Hz",
            mean_rate(base, drive, 60.0)
        );
    }
}
