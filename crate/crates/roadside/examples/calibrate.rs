//! Grid search for the `paper-calibrated` noise preset.
//!
//! Every candidate runs the three bundled scenarios at 100 repetitions on
//! their own seeds. Candidates must keep the fused length error below both
//! single-module length errors and inside its bands, keep the mean speed
//! error rising from 30 to 45 to 60 degrees, and keep the five-module fused
//! length error near 3.98 %. Among those, the one that puts the most
//! single-module cells inside their tolerance wins, ties broken by the sum
//! of squared residuals in units of tolerance.
//!
//! `cargo run --release --example calibrate [-- --write]` prints the winner
//! and, with `--write`, stores it with its residuals in
//! `presets/paper-calibrated.json`.

use std::path::Path;

use roadside::{
    run_scenario, sweep_angles, NoiseSpec, Quantity, ScenarioResult, ScenarioSpec, Source,
};
use roadside_core::noise::NoiseModel;
use serde_json::json;

const REPS: usize = 100;

// (quantity, angle, speed, measured rel. error %, tolerance in points)
const TARGETS: [(Quantity, f64, f64, f64, f64); 8] = [
    (Quantity::Speed, 30.0, 10.0, 5.79, 4.0),
    (Quantity::Speed, 30.0, 20.0, 8.71, 4.0),
    (Quantity::Speed, 45.0, 10.0, 17.77, 4.0),
    (Quantity::Speed, 45.0, 20.0, 6.91, 4.0),
    (Quantity::Length, 30.0, 10.0, 12.44, 5.0),
    (Quantity::Length, 30.0, 20.0, 21.55, 5.0),
    (Quantity::Length, 45.0, 10.0, 4.43, 5.0),
    (Quantity::Length, 45.0, 20.0, 7.75, 5.0),
];

fn scenario(dir: &Path, i: u32, noise: NoiseModel) -> ScenarioSpec {
    let mut s =
        ScenarioSpec::load(dir.join(format!("scenario-{i}.json"))).expect("bundled scenario");
    s.repetitions = REPS;
    s.noise = NoiseSpec::Inline(noise);
    s
}

fn err(r: &ScenarioResult, src: Source, angle: f64, v: f64, q: Quantity) -> f64 {
    r.cell(src, angle, v, q)
        .map_or(f64::INFINITY, |c| c.mean_rel_err_pct)
}

struct Fit {
    noise: NoiseModel,
    cells: Vec<f64>,
    hits: usize,
    loss: f64,
    fused: [f64; 2],
    five: f64,
    sweep: [f64; 3],
}

fn evaluate(dir: &Path, noise: NoiseModel) -> Option<Fit> {
    let r1 = run_scenario(&scenario(dir, 1, noise)).ok()?;
    let r2 = run_scenario(&scenario(dir, 2, noise)).ok()?;
    let r3 = run_scenario(&scenario(dir, 3, noise)).ok()?;

    let mut fused = [0.0; 2];
    for (k, v) in [10.0, 20.0].into_iter().enumerate() {
        let f = err(&r2, Source::Fused, 90.0, v, Quantity::Length);
        let single = err(&r1, Source::Single, 30.0, v, Quantity::Length).min(err(
            &r1,
            Source::Single,
            45.0,
            v,
            Quantity::Length,
        ));
        let band = if k == 0 { 0.5..=4.0 } else { 2.0..=9.0 };
        if !(f < single && band.contains(&f)) {
            return None;
        }
        fused[k] = f;
    }
    let five = err(&r3, Source::Fused, 90.0, 10.0, Quantity::Length);
    if (five - 3.98).abs() > 3.0 {
        return None;
    }
    let rows = sweep_angles(&scenario(dir, 1, noise), &[30.0, 45.0, 60.0]).ok()?;
    let mut sweep = [0.0; 3];
    for (k, a) in [30.0, 45.0, 60.0].into_iter().enumerate() {
        let e: Vec<f64> = rows
            .iter()
            .filter(|r| r.angle_deg == a)
            .filter_map(|r| r.speed_rel_err_pct)
            .collect();
        sweep[k] = e.iter().sum::<f64>() / e.len().max(1) as f64;
    }
    if !(sweep[2] > sweep[1] && sweep[1] > sweep[0]) {
        return None;
    }

    let cells: Vec<f64> = TARGETS
        .iter()
        .map(|&(q, a, v, _, _)| err(&r1, Source::Single, a, v, q))
        .collect();
    let scaled = TARGETS.iter().zip(&cells).map(|(t, c)| (c - t.3) / t.4);
    let hits = scaled.clone().filter(|z| z.abs() <= 1.0).count();
    let loss = scaled.map(|z| z * z).sum();
    Some(Fit {
        noise,
        cells,
        hits,
        loss,
        fused,
        five,
        sweep,
    })
}

fn main() {
    let write = std::env::args().any(|a| a == "--write");
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let dir = root.join("scenarios");

    let mut best: Option<Fit> = None;
    let mut tried = 0;
    for sigma in [0.008, 0.012, 0.02, 0.03] {
        for outlier in [0.02, 0.035, 0.05, 0.08] {
            for spike in [0.01, 0.03, 0.06] {
                for scale in [0.15, 0.3] {
                    for gain in [3.0, 3.5, 4.0, 4.5, 5.0, 6.0] {
                        tried += 1;
                        let noise = NoiseModel {
                            gaussian_sigma_m: sigma,
                            outlier_prob: outlier,
                            spike_prob: spike,
                            spike_scale: scale,
                            incidence_gain: gain,
                            seed: 0,
                        };
                        let Some(fit) = evaluate(&dir, noise) else {
                            continue;
                        };
                        let better = best
                            .as_ref()
                            .is_none_or(|b| (fit.hits, -fit.loss) > (b.hits, -b.loss));
                        if better {
                            best = Some(fit);
                        }
                    }
                }
            }
        }
    }
    let Some(best) = best else {
        eprintln!("no candidate out of {tried} satisfies the constraints");
        std::process::exit(1);
    };

    let residuals: Vec<_> = TARGETS
        .iter()
        .zip(&best.cells)
        .map(|(&(q, a, v, target, tol), &got)| {
            json!({
                "quantity": q,
                "angle_deg": a,
                "speed_mps": v,
                "target_pct": target,
                "tolerance_pct": tol,
                "simulated_pct": (got * 100.0).round() / 100.0,
                "residual_pct": ((got - target) * 100.0).round() / 100.0,
                "within_tolerance": (got - target).abs() <= tol,
            })
        })
        .collect();
    let round = |x: f64| (x * 100.0).round() / 100.0;
    let report = json!({
        "name": "paper-calibrated",
        "noise": best.noise,
        "fit": {
            "procedure": "grid search over gaussian_sigma_m x outlier_prob x spike_prob x spike_scale x incidence_gain \
                          (examples/calibrate.rs); each candidate runs scenarios 1-3 at 100 repetitions on their \
                          own seeds; metric is the per-pass mean absolute relative error",
            "candidates": tried,
            "cells_within_tolerance": best.hits,
            "residuals": residuals,
            "checks": {
                "fused_length_pct": [round(best.fused[0]), round(best.fused[1])],
                "five_module_fused_length_pct_10mps": round(best.five),
                "mean_speed_pct_30_45_60": best.sweep.map(round),
            },
        },
    });
    let text = serde_json::to_string_pretty(&report).expect("json") + "\n";
    print!("{text}");
    if write {
        let path = root.join("presets/paper-calibrated.json");
        std::fs::create_dir_all(path.parent().unwrap()).expect("presets dir");
        std::fs::write(&path, text).expect("write preset");
        eprintln!("wrote {}", path.display());
    }
}
