//! Sample synthesis for one vehicle pass.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{beam_hit, ground_truth_events, Distance, SensorConfig, VehiclePass};
use crate::noise::NoiseModel;

/// Time simulated after the last contact (or before the first).
const PASS_MARGIN_S: f64 = 0.2;

/// One raw reading. Readings of the same window share `window_index`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeSample {
    pub window_index: u64,
    pub t_s: f64,
    #[serde(rename = "distance_m")]
    pub distance: Distance,
}

/// End of the simulated interval for `pass`.
pub fn pass_horizon(cfg: &SensorConfig, pass: &VehiclePass) -> f64 {
    match ground_truth_events(cfg, pass) {
        Ok(gt) => gt.last_contact().max(0.0) + PASS_MARGIN_S,
        // rear behind the sensor by a full range: nothing can be hit any more
        Err(_) => {
            ((pass.start_x_m + pass.length_m + cfg.range_max_m) / pass.speed_mps).max(0.0)
                + PASS_MARGIN_S
        }
    }
}

/// Raw readings for a whole pass, `burst_size` per window, readings evenly
/// spread across each window. Deterministic in `noise.seed`.
pub fn synthesize_pass(
    cfg: &SensorConfig,
    pass: &VehiclePass,
    noise: &NoiseModel,
) -> Result<Vec<RangeSample>> {
    cfg.validate()?;
    pass.validate(cfg)?;
    noise.validate()?;

    let horizon = pass_horizon(cfg, pass);
    let windows = libm::ceil(horizon / cfg.window_period_s) as u64;
    let dt = cfg.reading_period_s();
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut out = Vec::with_capacity(windows as usize * cfg.burst_size);

    for w in 0..windows {
        let t0 = w as f64 * cfg.window_period_s;
        for j in 0..cfg.burst_size {
            let t = t0 + j as f64 * dt;
            out.push(RangeSample {
                window_index: w,
                t_s: t,
                distance: noisy_reading(cfg, pass, noise, t, &mut rng),
            });
        }
    }
    Ok(out)
}

fn noisy_reading(
    cfg: &SensorConfig,
    pass: &VehiclePass,
    noise: &NoiseModel,
    t: f64,
    rng: &mut ChaCha8Rng,
) -> Distance {
    // fixed draw count per reading keeps streams aligned across parameter changes
    let u_drop: f64 = rng.random();
    let gauss: f64 = StandardNormal.sample(rng);
    let u_spike: f64 = rng.random();
    let u_sign: f64 = rng.random();
    let u_mag: f64 = rng.random();

    let Some(hit) = beam_hit(cfg, pass, t) else {
        return Distance::NoEcho;
    };
    if !cfg.in_range(hit.distance_m) {
        return Distance::NoEcho;
    }
    let k = noise.intensity(hit.incidence_rad);
    if u_drop < (noise.outlier_prob * k).min(1.0) {
        return Distance::NoEcho;
    }
    let mut d = hit.distance_m + gauss * noise.gaussian_sigma_m * k;
    if u_spike < (noise.spike_prob * k).min(1.0) {
        let rel = noise.spike_scale * (1.0 + u_mag);
        d *= if u_sign < 0.5 { 1.0 + rel } else { 1.0 - rel };
    }
    let d = cfg.quantize(d);
    if cfg.in_range(d) {
        Distance::Echo(d)
    } else {
        Distance::NoEcho
    }
}

/// Splits a reading stream into per-window bursts.
pub fn bursts(samples: &[RangeSample]) -> impl Iterator<Item = &[RangeSample]> {
    samples.chunk_by(|a, b| a.window_index == b.window_index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ground_truth_events;

    fn setup(angle: f64, v: f64) -> (SensorConfig, VehiclePass) {
        let cfg = SensorConfig::default().with_angle(angle);
        let pass = VehiclePass {
            length_m: 3.7,
            speed_mps: v,
            lateral_near_m: 2.0,
            start_x_m: 0.0,
        }
        .with_first_contact_at(&cfg, 0.1037)
        .unwrap();
        (cfg, pass)
    }

    fn flat_duration(samples: &[RangeSample], value: f64) -> f64 {
        let hits: Vec<f64> = samples
            .iter()
            .filter(|s| matches!(s.distance, Distance::Echo(d) if (d - value).abs() < 1e-9))
            .map(|s| s.t_s)
            .collect();
        hits.last().unwrap() - hits.first().unwrap()
    }

    #[test]
    fn noiseless_perpendicular_flat_lasts_l_over_v() {
        for v in [10.0, 20.0] {
            let (cfg, pass) = setup(90.0, v);
            let s = synthesize_pass(&cfg, &pass, &NoiseModel::noiseless()).unwrap();
            let dur = flat_duration(&s, 2.0);
            assert!(
                (dur - 3.7 / v).abs() <= cfg.window_period_s,
                "v={v} dur={dur}"
            );
        }
    }

    #[test]
    fn readings_are_quantized_and_in_range() {
        let (cfg, pass) = setup(45.0, 10.0);
        let noise = NoiseModel::paper_calibrated().with_seed(9);
        for s in synthesize_pass(&cfg, &pass, &noise).unwrap() {
            if let Distance::Echo(d) = s.distance {
                assert!(cfg.in_range(d));
                let q = d / cfg.resolution_m;
                assert!((q - libm::round(q)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let (cfg, pass) = setup(30.0, 10.0);
        let noise = NoiseModel {
            gaussian_sigma_m: 0.02,
            ..NoiseModel::noiseless()
        }
        .with_seed(42);
        let a = synthesize_pass(&cfg, &pass, &noise).unwrap();
        let b = synthesize_pass(&cfg, &pass, &noise).unwrap();
        assert_eq!(a, b);
        let c = synthesize_pass(&cfg, &pass, &noise.with_seed(43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn windows_hold_full_bursts() {
        let (cfg, pass) = setup(135.0, 20.0);
        let s = synthesize_pass(&cfg, &pass, &NoiseModel::noiseless()).unwrap();
        let gt = ground_truth_events(&cfg, &pass).unwrap();
        assert!(s.last().unwrap().t_s > gt.last_contact());
        for b in bursts(&s) {
            assert_eq!(b.len(), cfg.burst_size);
        }
    }
}
