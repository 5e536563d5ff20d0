//! Repeated simulated passes and their aggregate error tables.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use roadside_core::estimate::Characterisation;
use roadside_core::fusion::{exchange, run_module, DeviceTopology, ModuleOutput};
use roadside_core::geometry::ground_truth_events;
use roadside_core::noise::NoiseModel;
use roadside_core::sim::synthesize_pass;
use roadside_core::VehiclePass;
use serde::{Deserialize, Serialize};

use crate::{Error, ScenarioSpec};

/// Time from the start of a simulated stream to the first beam contact,
/// before the per-repetition jitter.
pub const LEAD_S: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Source {
    Single,
    Fused,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Quantity {
    Speed,
    Length,
}

/// One module's (or one master's fused) outcome for one pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassRecord {
    pub scenario: String,
    pub rep: usize,
    pub seed: u64,
    pub true_speed_mps: f64,
    pub true_length_m: f64,
    pub source: Source,
    pub device_id: u32,
    pub module_id: u32,
    pub angle_deg: f64,
    pub speed_mps: Option<f64>,
    pub speed_stderr: Option<f64>,
    pub length_m: Option<f64>,
    pub length_stderr: Option<f64>,
    pub dwell_s: Option<f64>,
    pub fused: bool,
    pub sources: Vec<u32>,
    /// Error code when this pass was excluded.
    pub error: Option<String>,
}

impl PassRecord {
    pub fn value(&self, q: Quantity) -> Option<f64> {
        match q {
            Quantity::Speed => self.speed_mps,
            Quantity::Length => self.length_m,
        }
    }

    pub fn stderr(&self, q: Quantity) -> Option<f64> {
        match q {
            Quantity::Speed => self.speed_stderr,
            Quantity::Length => self.length_stderr,
        }
    }

    fn truth(&self, q: Quantity) -> f64 {
        match q {
            Quantity::Speed => self.true_speed_mps,
            Quantity::Length => self.true_length_m,
        }
    }
}

/// Aggregate over the repetitions of one (source, module, speed) cell.
///
/// `abs_error`/`rel_error_pct` compare the average with the truth;
/// `mean_abs_err`/`mean_rel_err_pct` average the per-pass errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub source: Source,
    pub module_id: u32,
    pub angle_deg: f64,
    pub speed_mps: f64,
    pub quantity: Quantity,
    pub truth: f64,
    pub avg: f64,
    pub std: f64,
    #[serde(rename = "abs_err_of_avg")]
    pub abs_error: f64,
    #[serde(rename = "rel_err_of_avg_pct")]
    pub rel_error_pct: f64,
    pub mean_abs_err: f64,
    pub mean_rel_err_pct: f64,
    pub mean_stderr: f64,
    pub n_included: usize,
    pub n_excluded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub records: Vec<PassRecord>,
    pub cells: Vec<CellStats>,
}

impl ScenarioResult {
    pub fn cell(
        &self,
        source: Source,
        angle_deg: f64,
        speed_mps: f64,
        q: Quantity,
    ) -> Option<&CellStats> {
        self.cells.iter().find(|c| {
            c.source == source
                && c.angle_deg == angle_deg
                && c.speed_mps == speed_mps
                && c.quantity == q
        })
    }
}

/// Per-module seed derived from a repetition seed.
pub fn derive_seed(seed: u64, module_id: u32) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ (u64::from(module_id) << 32) ^ 0x9E37_79B9_7F4A_7C15;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn is_perpendicular(angle_deg: f64) -> bool {
    angle_deg == 90.0
}

fn fusion_capable(topology: &DeviceTopology, device_id: u32) -> bool {
    let has_dwell = topology
        .sensing_modules()
        .any(|(d, m)| d.device_id == device_id && m.angle_deg.is_some_and(is_perpendicular));
    has_dwell
        && topology
            .sensing_modules()
            .any(|(_, m)| m.angle_deg.is_some_and(|a| !is_perpendicular(a)))
}

/// Runs one repetition at one speed through every module and master.
pub fn simulate_pass(
    spec: &ScenarioSpec,
    noise: &NoiseModel,
    speed_mps: f64,
    rep: usize,
) -> Result<Vec<PassRecord>, Error> {
    let seed = spec.seed.wrapping_add(rep as u64);
    let base = spec.sensor;
    let filter = spec.filter();
    let topology = &spec.topology;

    let template = VehiclePass {
        length_m: spec.vehicle.length_m,
        speed_mps,
        lateral_near_m: spec.lateral_near_m(),
        start_x_m: 0.0,
    };
    let first_contact = topology
        .sensing_modules()
        .filter_map(|(_, m)| m.sensor(&base))
        .filter_map(|c| ground_truth_events(&c, &template).ok())
        .map(|g| g.t_a)
        .fold(f64::INFINITY, f64::min);
    if !first_contact.is_finite() {
        return Err(roadside_core::Error::Unobservable.into());
    }
    // a random phase between vehicle and sampling clock
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u32::MAX) ^ speed_mps.to_bits());
    let jitter = rng.random::<f64>() * base.window_period_s;
    let pass = VehiclePass {
        start_x_m: (LEAD_S + jitter - first_contact) * speed_mps,
        ..template
    };

    let mut outputs = Vec::new();
    for (device, module) in topology.sensing_modules() {
        let Some(sensor) = module.sensor(&base) else {
            continue;
        };
        let noise = noise.with_seed(derive_seed(seed, module.module_id));
        let (ready_t_s, result) = match synthesize_pass(&sensor, &pass, &noise) {
            Ok(samples) => run_module(
                &sensor,
                &filter,
                &spec.cusum,
                &samples,
                rep as u64,
                module.module_id,
            ),
            Err(e) => (0.0, Err(e)),
        };
        outputs.push(ModuleOutput {
            device_id: device.device_id,
            module_id: module.module_id,
            ready_t_s,
            result,
        });
    }

    let mut net = topology.clone();
    net.channel.seed = net.channel.seed.wrapping_add(seed);
    let ex = exchange(&net, &outputs, rep as u64, base.window_period_s)?;

    let record = |source,
                  device_id,
                  module_id,
                  angle_deg,
                  c: Option<&Characterisation>,
                  error: Option<String>| PassRecord {
        scenario: spec.name.clone(),
        rep,
        seed,
        true_speed_mps: speed_mps,
        true_length_m: spec.vehicle.length_m,
        source,
        device_id,
        module_id,
        angle_deg,
        speed_mps: c.and_then(|c| c.speed).map(|s| s.value_mps),
        speed_stderr: c.and_then(|c| c.speed).map(|s| s.stderr_mps),
        length_m: c.and_then(|c| c.length).map(|l| l.value_m),
        length_stderr: c.and_then(|c| c.length).map(|l| l.stderr_m),
        dwell_s: c.and_then(|c| c.dwell_s),
        fused: c.is_some_and(|c| c.fused),
        sources: c.map(|c| c.sources.clone()).unwrap_or_default(),
        error,
    };

    let mut records: Vec<PassRecord> = outputs
        .iter()
        .map(|o| {
            let angle = topology
                .sensing_modules()
                .find(|(_, m)| m.module_id == o.module_id)
                .and_then(|(_, m)| m.angle_deg)
                .unwrap_or(f64::NAN);
            match &o.result {
                Ok(c) => record(
                    Source::Single,
                    o.device_id,
                    o.module_id,
                    angle,
                    Some(c),
                    None,
                ),
                Err(e) => record(
                    Source::Single,
                    o.device_id,
                    o.module_id,
                    angle,
                    None,
                    Some(e.code().into()),
                ),
            }
        })
        .collect();

    for device in &topology.devices {
        if !fusion_capable(topology, device.device_id) {
            continue;
        }
        let master = device.master().map_or(0, |m| m.module_id);
        let got = ex
            .results
            .iter()
            .find(|(d, _)| *d == device.device_id)
            .map(|(_, c)| c);
        let error = match got {
            None => Some("NO_REPORTS".to_string()),
            Some(c) if !c.fused => Some("NOT_FUSED".to_string()),
            Some(_) => None,
        };
        let c = got.filter(|c| c.fused);
        records.push(record(
            Source::Fused,
            device.device_id,
            master,
            90.0,
            c,
            error,
        ));
    }
    Ok(records)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Groups records into cells ordered by speed, source and module.
/// Perpendicular single modules carry no speed or length and are skipped.
pub fn aggregate(records: &[PassRecord]) -> Vec<CellStats> {
    type Key = (u64, Source, u32, Quantity);
    let mut groups: BTreeMap<Key, Vec<&PassRecord>> = BTreeMap::new();
    for r in records {
        if r.source == Source::Single && is_perpendicular(r.angle_deg) {
            continue;
        }
        for q in [Quantity::Speed, Quantity::Length] {
            groups
                .entry((r.true_speed_mps.to_bits(), r.source, r.module_id, q))
                .or_default()
                .push(r);
        }
    }
    groups
        .into_iter()
        .map(|((_, source, module_id, quantity), rs)| {
            let truth = rs[0].truth(quantity);
            let included: Vec<&PassRecord> = rs
                .iter()
                .copied()
                .filter(|r| r.error.is_none() && r.value(quantity).is_some())
                .collect();
            let values: Vec<f64> = included.iter().filter_map(|r| r.value(quantity)).collect();
            let stderrs: Vec<f64> = included.iter().filter_map(|r| r.stderr(quantity)).collect();
            let abs_errs: Vec<f64> = values.iter().map(|v| (v - truth).abs()).collect();
            let avg = mean(&values);
            let abs_error = (avg - truth).abs();
            CellStats {
                source,
                module_id,
                angle_deg: rs[0].angle_deg,
                speed_mps: rs[0].true_speed_mps,
                quantity,
                truth,
                avg,
                std: sample_std(&values),
                abs_error,
                rel_error_pct: 100.0 * abs_error / truth,
                mean_abs_err: mean(&abs_errs),
                mean_rel_err_pct: 100.0 * mean(&abs_errs) / truth,
                mean_stderr: mean(&stderrs),
                n_included: values.len(),
                n_excluded: rs.len() - values.len(),
            }
        })
        .collect()
}

/// All speeds and repetitions of a scenario, in parallel, reduced in a
/// fixed order.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioResult, Error> {
    spec.validate()?;
    let noise = spec.noise.resolve()?;
    let jobs: Vec<(f64, usize)> = spec
        .speeds()
        .into_iter()
        .flat_map(|v| (0..spec.repetitions).map(move |r| (v, r)))
        .collect();
    let per_pass: Vec<Vec<PassRecord>> = jobs
        .par_iter()
        .map(|&(v, rep)| simulate_pass(spec, &noise, v, rep))
        .collect::<Result<_, _>>()?;
    let records: Vec<PassRecord> = per_pass.into_iter().flatten().collect();
    let cells = aggregate(&records);
    Ok(ScenarioResult { records, cells })
}

/// One point of an error-versus-angle series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub angle_deg: f64,
    pub speed_mps: f64,
    pub speed_rel_err_pct: Option<f64>,
    pub length_rel_err_pct: Option<f64>,
    pub n_included: usize,
}

/// Runs the scenario's vehicle past a single module at each angle.
/// Perpendicular modules have no speed or length of their own; their row
/// reports the dwell-based length with the true speed instead.
pub fn sweep_angles(spec: &ScenarioSpec, angles: &[f64]) -> Result<Vec<SweepRow>, Error> {
    let mut rows = Vec::new();
    for &angle in angles {
        let mut s = spec.clone();
        s.topology = DeviceTopology::single(angle);
        let res = run_scenario(&s)?;
        for v in spec.speeds() {
            if is_perpendicular(angle) {
                let dwell: Vec<f64> = res
                    .records
                    .iter()
                    .filter(|r| r.true_speed_mps == v && r.error.is_none())
                    .filter_map(|r| r.dwell_s)
                    .collect();
                let errs: Vec<f64> = dwell
                    .iter()
                    .map(|d| (v * d - s.vehicle.length_m).abs())
                    .collect();
                rows.push(SweepRow {
                    angle_deg: angle,
                    speed_mps: v,
                    speed_rel_err_pct: None,
                    length_rel_err_pct: (!errs.is_empty())
                        .then(|| 100.0 * mean(&errs) / s.vehicle.length_m),
                    n_included: errs.len(),
                });
                continue;
            }
            let get = |q| res.cell(Source::Single, angle, v, q);
            let pct =
                |c: Option<&CellStats>| c.filter(|c| c.n_included > 0).map(|c| c.mean_rel_err_pct);
            rows.push(SweepRow {
                angle_deg: angle,
                speed_mps: v,
                speed_rel_err_pct: pct(get(Quantity::Speed)),
                length_rel_err_pct: pct(get(Quantity::Length)),
                n_included: get(Quantity::Speed).map_or(0, |c| c.n_included),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(v: Option<f64>, error: Option<&str>) -> PassRecord {
        PassRecord {
            scenario: "t".into(),
            rep: 0,
            seed: 0,
            true_speed_mps: 10.0,
            true_length_m: 3.7,
            source: Source::Single,
            device_id: 1,
            module_id: 1,
            angle_deg: 30.0,
            speed_mps: v,
            speed_stderr: v.map(|_| 0.1),
            length_m: v.map(|v| v * 0.37),
            length_stderr: v.map(|_| 0.05),
            dwell_s: Some(0.37),
            fused: false,
            sources: vec![1],
            error: error.map(String::from),
        }
    }

    #[test]
    fn aggregate_conventions() {
        let rs = [
            rec(Some(10.5), None),
            rec(Some(9.7), None),
            rec(None, Some("INCOMPLETE_PASS")),
        ];
        let cells = aggregate(&rs);
        let speed = cells
            .iter()
            .find(|c| c.quantity == Quantity::Speed)
            .unwrap();
        assert_eq!(speed.n_included, 2);
        assert_eq!(speed.n_excluded, 1);
        assert!((speed.avg - 10.1).abs() < 1e-12);
        assert!((speed.abs_error - 0.1).abs() < 1e-12);
        assert!((speed.mean_abs_err - 0.4).abs() < 1e-12);
        assert!((speed.rel_error_pct - 1.0).abs() < 1e-9);
        assert!((speed.mean_rel_err_pct - 4.0).abs() < 1e-9);
    }

    #[test]
    fn splitmix_separates_modules() {
        assert_ne!(derive_seed(5, 1), derive_seed(5, 2));
        assert_ne!(derive_seed(5, 1), derive_seed(6, 1));
    }
}
