//! Collaboration between modules and devices.
//!
//! A device is a set of modules on a lossless, ordered internal bus with one
//! master. Sensing modules run their own pipeline and report to the master;
//! the master forwards speed reports to the masters of other devices over a
//! lossy channel and, once the association window for a pass has closed,
//! fuses whatever arrived. Fusion only ever runs on masters.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detect::{detect_events, CusumConfig};
use crate::error::{Error, Result};
use crate::estimate::{
    characterise_pass, estimate_length, Characterisation, LengthEstimate, SpeedEstimate,
};
use crate::filter::{filter_stream, FilterConfig};
use crate::geometry::SensorConfig;
use crate::sim::RangeSample;

/// Reports for one pass are collected this long after the first arrives.
pub const ASSOCIATION_WINDOW_S: f64 = 0.5;
/// Internal bus transfer time.
pub const INTRA_LATENCY_S: f64 = 0.001;
const MIN_STDERR: f64 = 1e-9;

/// Inverse-variance weighted mean. Reports are put in a canonical order
/// first so the result does not depend on arrival order.
pub fn fuse_speed(reports: &[SpeedEstimate]) -> Result<SpeedEstimate> {
    match reports {
        [] => Err(Error::NoReports),
        [one] => Ok(*one),
        _ => {
            let mut sorted = reports.to_vec();
            sorted.sort_by(|a, b| {
                a.value_mps
                    .total_cmp(&b.value_mps)
                    .then(a.stderr_mps.total_cmp(&b.stderr_mps))
                    .then(a.source_angle_deg.total_cmp(&b.source_angle_deg))
            });
            let (mut wsum, mut vsum, mut n) = (0.0, 0.0, 0);
            for r in &sorted {
                let se = r.stderr_mps.max(MIN_STDERR);
                let w = 1.0 / (se * se);
                wsum += w;
                vsum += w * r.value_mps;
                n += r.n_samples;
            }
            Ok(SpeedEstimate {
                value_mps: vsum / wsum,
                stderr_mps: libm::sqrt(1.0 / wsum),
                n_samples: n,
                source_angle_deg: f64::NAN,
            })
        }
    }
}

/// Length from a side dwell time measured by another module.
pub fn fuse_length(
    dwell_s: f64,
    speed: &SpeedEstimate,
    window_period_s: f64,
) -> Result<LengthEstimate> {
    estimate_length(0.0, dwell_s, speed, window_period_s)
}

fn angle_dist_to_perpendicular(angle_deg: f64) -> f64 {
    libm::fabs(angle_deg - 90.0)
}

/// Combines every report gathered for one pass at a master.
///
/// All speed reports are fused; the length is fused speed times the dwell of
/// the perpendicular module. Without a perpendicular dwell the best single
/// module length is returned unfused, and a lone report is returned as is.
pub fn fuse_pass(
    pass_id: u64,
    master_id: u32,
    reports: &[Characterisation],
    window_period_s: f64,
) -> Result<Characterisation> {
    let mut reports = reports.to_vec();
    reports.sort_by_key(|r| r.module_id);
    reports.dedup_by_key(|r| r.module_id);
    if reports.len() <= 1 {
        return reports.pop().ok_or(Error::NoReports);
    }

    let dwell = reports
        .iter()
        .filter(|r| r.dwell_s.is_some() && angle_dist_to_perpendicular(r.angle_deg) < 1e-9)
        .min_by(|a, b| a.module_id.cmp(&b.module_id));
    let speeds: Vec<&Characterisation> = reports.iter().filter(|r| r.speed.is_some()).collect();

    let Some(dwell) = dwell.filter(|_| !speeds.is_empty()) else {
        let err = if speeds.is_empty() {
            Error::NoReports
        } else {
            Error::MissingDwell(pass_id)
        };
        log::debug!("pass {pass_id}: {err}, keeping best single module");
        let best = reports
            .iter()
            .filter(|r| r.length.is_some())
            .min_by(|a, b| {
                let se = |r: &Characterisation| r.length.map_or(f64::INFINITY, |l| l.stderr_m);
                se(a).total_cmp(&se(b)).then(a.module_id.cmp(&b.module_id))
            })
            .or(reports.first());
        return best.cloned().ok_or(err);
    };

    let speed_list: Vec<SpeedEstimate> = speeds.iter().filter_map(|r| r.speed).collect();
    let speed = fuse_speed(&speed_list)?;
    let dwell_s = dwell.dwell_s.unwrap_or_default();
    let length = fuse_length(dwell_s, &speed, window_period_s)?;
    let mut sources: Vec<u32> = speeds.iter().map(|r| r.module_id).collect();
    sources.push(dwell.module_id);
    sources.sort_unstable();
    sources.dedup();
    Ok(Characterisation {
        pass_id,
        module_id: master_id,
        angle_deg: dwell.angle_deg,
        observed_t_s: dwell.observed_t_s,
        speed: Some(speed),
        length: Some(length),
        dwell_s: Some(dwell_s),
        fused: true,
        sources,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    Sense,
    Compute,
    Master,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleSpec {
    pub module_id: u32,
    /// Beam angle; modules without one do not sense.
    #[serde(default)]
    pub angle_deg: Option<f64>,
    pub role: Role,
    /// Per-module sensor settings; the scenario's sensor otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor: Option<SensorConfig>,
}

impl ModuleSpec {
    /// Effective sensor configuration, `None` for non-sensing modules.
    pub fn sensor(&self, base: &SensorConfig) -> Option<SensorConfig> {
        let angle = self.angle_deg?;
        Some(self.sensor.unwrap_or(*base).with_angle(angle))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub device_id: u32,
    pub modules: Vec<ModuleSpec>,
}

impl DeviceSpec {
    pub fn master(&self) -> Option<&ModuleSpec> {
        self.modules.iter().find(|m| m.role == Role::Master)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Latency {
    Fixed(f64),
    Uniform { min: f64, max: f64 },
}

impl Default for Latency {
    fn default() -> Self {
        Self::Fixed(0.05)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelModel {
    pub latency_s: Latency,
    pub drop_prob: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceTopology {
    pub devices: Vec<DeviceSpec>,
    #[serde(default)]
    pub channel: ChannelModel,
}

impl DeviceTopology {
    /// One device holding a single sensing master.
    pub fn single(angle_deg: f64) -> Self {
        Self {
            devices: alloc::vec![DeviceSpec {
                device_id: 1,
                modules: alloc::vec![ModuleSpec {
                    module_id: 1,
                    angle_deg: Some(angle_deg),
                    role: Role::Master,
                    sensor: None,
                }],
            }],
            channel: ChannelModel::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.devices.is_empty() {
            return Err(Error::InvalidConfig("topology has no devices".into()));
        }
        let mut ids = Vec::new();
        for d in &self.devices {
            let masters = d.modules.iter().filter(|m| m.role == Role::Master).count();
            if masters != 1 {
                return Err(Error::InvalidConfig(alloc::format!(
                    "device {} has {masters} masters, expected exactly one",
                    d.device_id
                )));
            }
            for m in &d.modules {
                if m.role == Role::Sense && m.angle_deg.is_none() {
                    return Err(Error::InvalidConfig(alloc::format!(
                        "sensing module {} has no angle",
                        m.module_id
                    )));
                }
                if let Some(a) = m.angle_deg {
                    if !(a > 0.0 && a < 180.0) {
                        return Err(Error::InvalidConfig(alloc::format!(
                            "module {} angle {a} outside (0, 180)",
                            m.module_id
                        )));
                    }
                }
                ids.push(m.module_id);
            }
        }
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("module ids must be unique".into()));
        }
        let c = &self.channel;
        if !(0.0..=1.0).contains(&c.drop_prob) {
            return Err(Error::InvalidConfig("drop_prob must lie in [0, 1]".into()));
        }
        match c.latency_s {
            Latency::Fixed(l) if l >= 0.0 => Ok(()),
            Latency::Uniform { min, max } if min >= 0.0 && max >= min => Ok(()),
            _ => Err(Error::InvalidConfig(
                "latency must be >= 0 with min <= max".into(),
            )),
        }
    }

    /// Sensing modules with their device.
    pub fn sensing_modules(&self) -> impl Iterator<Item = (&DeviceSpec, &ModuleSpec)> {
        self.devices
            .iter()
            .flat_map(|d| d.modules.iter().map(move |m| (d, m)))
            .filter(|(_, m)| m.angle_deg.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageType {
    SpeedReport,
    DwellReport,
    Characterisation,
    FusedResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Hop {
    IntraDevice,
    InterDevice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Characterisation(Characterisation),
    /// `origin_module` is the module that measured the speed.
    Speed {
        origin_module: u32,
        angle_deg: f64,
        observed_t_s: f64,
        speed: SpeedEstimate,
    },
    Dwell {
        angle_deg: f64,
        observed_t_s: f64,
        dwell_s: f64,
    },
}

impl Payload {
    fn into_report(self, pass_id: u64, module_id: u32) -> Characterisation {
        match self {
            Payload::Characterisation(c) => c,
            Payload::Speed {
                origin_module,
                angle_deg,
                observed_t_s,
                speed,
            } => Characterisation {
                pass_id,
                module_id: origin_module,
                angle_deg,
                observed_t_s,
                speed: Some(speed),
                length: None,
                dwell_s: None,
                fused: false,
                sources: alloc::vec![origin_module],
            },
            Payload::Dwell {
                angle_deg,
                observed_t_s,
                dwell_s,
            } => Characterisation {
                pass_id,
                module_id,
                angle_deg,
                observed_t_s,
                speed: None,
                length: None,
                dwell_s: Some(dwell_s),
                fused: false,
                sources: alloc::vec![module_id],
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleMessage {
    pub msg_type: MessageType,
    pub sender_module: u32,
    pub recipient_module: u32,
    pub pass_id: u64,
    pub hop: Hop,
    pub sent_t_s: f64,
    /// `None` when the channel dropped the message.
    pub delivered_t_s: Option<f64>,
    pub payload: Payload,
}

/// What one sensing module produced for a pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuleOutput {
    pub device_id: u32,
    pub module_id: u32,
    /// Time at which the module finished the pass.
    pub ready_t_s: f64,
    pub result: Result<Characterisation>,
}

/// Runs one module's full local pipeline over its readings and
/// characterises the first complete pass.
pub fn run_module(
    sensor: &SensorConfig,
    filter: &FilterConfig,
    cusum: &CusumConfig,
    samples: &[RangeSample],
    pass_id: u64,
    module_id: u32,
) -> (f64, Result<Characterisation>) {
    let end_t = samples.last().map_or(0.0, |s| s.t_s);
    let run = || -> Result<(f64, Characterisation)> {
        let stream = filter_stream(samples, filter, sensor)?;
        let passes = detect_events(&stream, sensor, cusum)?;
        let ev = &passes[0];
        let ready = stream[ev.positions[3].min(stream.len() - 1)].t_s;
        Ok((
            ready,
            characterise_pass(&stream, ev, sensor, pass_id, module_id)?,
        ))
    };
    match run() {
        Ok((t, c)) => (t, Ok(c)),
        Err(e) => (end_t, Err(e)),
    }
}

/// Runs every sensing module of a device on its readings.
pub fn run_device(
    device: &DeviceSpec,
    base: &SensorConfig,
    filter: &FilterConfig,
    cusum: &CusumConfig,
    streams: &[(u32, Vec<RangeSample>)],
    pass_id: u64,
) -> Vec<ModuleOutput> {
    device
        .modules
        .iter()
        .filter_map(|m| {
            let sensor = m.sensor(base)?;
            let samples = streams.iter().find(|(id, _)| *id == m.module_id)?;
            let (ready, result) =
                run_module(&sensor, filter, cusum, &samples.1, pass_id, m.module_id);
            Some(ModuleOutput {
                device_id: device.device_id,
                module_id: m.module_id,
                ready_t_s: ready,
                result,
            })
        })
        .collect()
}

/// Result of exchanging one pass's reports across the topology.
#[derive(Debug, Clone, PartialEq)]
pub struct Exchange {
    /// Every message in delivery order, drops included.
    pub trace: Vec<ModuleMessage>,
    /// One result per device that received anything, by device id.
    pub results: Vec<(u32, Characterisation)>,
}

struct Pending {
    t: f64,
    seq: u64,
    msg: usize,
}

impl PartialEq for Pending {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Pending {
    // min-heap on (time, sequence)
    fn cmp(&self, o: &Self) -> Ordering {
        o.t.total_cmp(&self.t).then(o.seq.cmp(&self.seq))
    }
}

/// Delivers module reports through the buses and channel and fuses at each
/// master. Deterministic in the channel seed and `pass_id`.
pub fn exchange(
    topology: &DeviceTopology,
    outputs: &[ModuleOutput],
    pass_id: u64,
    window_period_s: f64,
) -> Result<Exchange> {
    topology.validate()?;
    let ch = topology.channel;
    let mut rng = ChaCha8Rng::seed_from_u64(ch.seed ^ pass_id.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut trace: Vec<ModuleMessage> = Vec::new();
    let mut queue = BinaryHeap::new();
    let mut seq = 0u64;

    let master_of = |device_id: u32| {
        topology
            .devices
            .iter()
            .find(|d| d.device_id == device_id)
            .and_then(|d| d.master())
            .map(|m| m.module_id)
    };

    let mut send =
        |trace: &mut Vec<ModuleMessage>, queue: &mut BinaryHeap<Pending>, msg: ModuleMessage| {
            if let Some(t) = msg.delivered_t_s {
                queue.push(Pending {
                    t,
                    seq,
                    msg: trace.len(),
                });
                seq += 1;
            }
            trace.push(msg);
        };

    let mut sorted: Vec<&ModuleOutput> = outputs.iter().collect();
    sorted.sort_by(|a, b| {
        a.ready_t_s
            .total_cmp(&b.ready_t_s)
            .then(a.module_id.cmp(&b.module_id))
    });
    for out in sorted {
        let Ok(c) = &out.result else {
            continue;
        };
        let Some(master) = master_of(out.device_id) else {
            continue;
        };
        let (msg_type, payload) = match (c.speed, c.dwell_s) {
            (None, Some(dwell_s)) => (
                MessageType::DwellReport,
                Payload::Dwell {
                    angle_deg: c.angle_deg,
                    observed_t_s: c.observed_t_s,
                    dwell_s,
                },
            ),
            _ => (
                MessageType::Characterisation,
                Payload::Characterisation(c.clone()),
            ),
        };
        let latency = if master == out.module_id {
            0.0
        } else {
            INTRA_LATENCY_S
        };
        send(
            &mut trace,
            &mut queue,
            ModuleMessage {
                msg_type,
                sender_module: out.module_id,
                recipient_module: master,
                pass_id,
                hop: Hop::IntraDevice,
                sent_t_s: out.ready_t_s,
                delivered_t_s: Some(out.ready_t_s + latency),
                payload,
            },
        );
    }

    struct Inbox {
        device_id: u32,
        master: u32,
        reports: Vec<Characterisation>,
        // observation time of the first accepted report
        anchor: Option<f64>,
        last_t: Option<f64>,
    }
    let mut inboxes: Vec<Inbox> = topology
        .devices
        .iter()
        .filter_map(|d| {
            Some(Inbox {
                device_id: d.device_id,
                master: d.master()?.module_id,
                reports: Vec::new(),
                anchor: None,
                last_t: None,
            })
        })
        .collect();

    while let Some(p) = queue.pop() {
        let msg = trace[p.msg].clone();
        let Some(ib) = inboxes
            .iter_mut()
            .find(|i| i.master == msg.recipient_module)
        else {
            continue;
        };
        let report = msg.payload.clone().into_report(pass_id, msg.sender_module);
        let anchor = *ib.anchor.get_or_insert(report.observed_t_s);
        if libm::fabs(report.observed_t_s - anchor) > ASSOCIATION_WINDOW_S {
            log::debug!(
                "pass {pass_id}: report from {} outside the association window",
                msg.sender_module
            );
            continue;
        }
        ib.last_t = Some(p.t);
        let (device_id, master) = (ib.device_id, ib.master);
        ib.reports.push(report);

        // share local speeds with the other devices
        if msg.hop == Hop::IntraDevice {
            if let Payload::Characterisation(Characterisation {
                speed: Some(speed),
                angle_deg,
                observed_t_s,
                module_id: origin_module,
                ..
            }) = msg.payload
            {
                for other in topology.devices.iter().filter(|d| d.device_id != device_id) {
                    let Some(to) = other.master() else { continue };
                    let u_drop: f64 = rng.random();
                    let u_lat: f64 = rng.random();
                    let latency = match ch.latency_s {
                        Latency::Fixed(l) => l,
                        Latency::Uniform { min, max } => min + (max - min) * u_lat,
                    };
                    send(
                        &mut trace,
                        &mut queue,
                        ModuleMessage {
                            msg_type: MessageType::SpeedReport,
                            sender_module: master,
                            recipient_module: to.module_id,
                            pass_id,
                            hop: Hop::InterDevice,
                            sent_t_s: p.t,
                            delivered_t_s: (u_drop >= ch.drop_prob).then_some(p.t + latency),
                            payload: Payload::Speed {
                                origin_module,
                                angle_deg,
                                observed_t_s,
                                speed,
                            },
                        },
                    );
                }
            }
        }
    }

    let mut results = Vec::new();
    for ib in &inboxes {
        let Some(done_t) = ib.last_t else { continue };
        let fused = fuse_pass(pass_id, ib.master, &ib.reports, window_period_s)?;
        trace.push(ModuleMessage {
            msg_type: MessageType::FusedResult,
            sender_module: ib.master,
            recipient_module: ib.master,
            pass_id,
            hop: Hop::IntraDevice,
            sent_t_s: done_t,
            delivered_t_s: Some(done_t),
            payload: Payload::Characterisation(fused.clone()),
        });
        results.push((ib.device_id, fused));
    }
    results.sort_by_key(|r| r.0);
    Ok(Exchange { trace, results })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn speed(v: f64, se: f64, angle: f64) -> SpeedEstimate {
        SpeedEstimate {
            value_mps: v,
            stderr_mps: se,
            n_samples: 4,
            source_angle_deg: angle,
        }
    }

    fn report(id: u32, angle: f64, s: Option<SpeedEstimate>, dwell: f64) -> Characterisation {
        Characterisation {
            pass_id: 7,
            module_id: id,
            angle_deg: angle,
            speed: s,
            length: s.map(|s| estimate_length(0.0, dwell, &s, 0.02).unwrap()),
            dwell_s: Some(dwell),
            observed_t_s: 1.0,
            fused: false,
            sources: alloc::vec![id],
        }
    }

    #[test]
    fn inverse_variance_examples() {
        let one = speed(10.3, 0.2, 30.0);
        assert_eq!(fuse_speed(&[one]).unwrap(), one);
        let f = fuse_speed(&[speed(10.0, 0.5, 30.0), speed(10.0, 1.0, 45.0)]).unwrap();
        assert_abs_diff_eq!(f.value_mps, 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            f.stderr_mps,
            1.0 / libm::sqrt(1.0 / 0.25 + 1.0),
            epsilon = 1e-12
        );
        assert_eq!(fuse_speed(&[]), Err(Error::NoReports));
    }

    #[test]
    fn noiseless_fused_length() {
        let l = fuse_length(0.37, &speed(10.0, 0.0, 30.0), 0.02).unwrap();
        assert_abs_diff_eq!(l.value_m, 3.7, epsilon = 1e-12);
    }

    #[test]
    fn pass_fusion_uses_perpendicular_dwell() {
        let reports = [
            report(1, 30.0, Some(speed(10.2, 0.2, 30.0)), 0.40),
            report(2, 90.0, None, 0.37),
        ];
        let f = fuse_pass(7, 3, &reports, 0.02).unwrap();
        assert!(f.fused);
        assert_eq!(f.sources, [1, 2]);
        assert_abs_diff_eq!(f.length.unwrap().value_m, 10.2 * 0.37, epsilon = 1e-12);
    }

    #[test]
    fn fallbacks() {
        let only = report(1, 45.0, Some(speed(10.2, 0.2, 45.0)), 0.40);
        assert_eq!(
            fuse_pass(7, 3, core::slice::from_ref(&only), 0.02).unwrap(),
            only
        );
        let worse = report(2, 30.0, Some(speed(9.0, 1.0, 30.0)), 0.5);
        let f = fuse_pass(7, 3, &[worse, only.clone()], 0.02).unwrap();
        assert_eq!(f, only);
        assert_eq!(fuse_pass(7, 3, &[], 0.02), Err(Error::NoReports));
    }

    #[test]
    fn topology_validation() {
        let mut t = DeviceTopology::single(30.0);
        assert!(t.validate().is_ok());
        t.devices[0].modules[0].role = Role::Sense;
        assert!(t.validate().is_err());
        let json = r#"{"devices":[{"device_id":1,"modules":[
            {"module_id":1,"angle_deg":30,"role":"SENSE"},
            {"module_id":2,"role":"MASTER"}]}],
            "channel":{"latency_s":{"min":0.01,"max":0.05},"drop_prob":0.1,"seed":3}}"#;
        let t: DeviceTopology = serde_json::from_str(json).unwrap();
        assert!(t.validate().is_ok());
        assert_eq!(
            t.channel.latency_s,
            Latency::Uniform {
                min: 0.01,
                max: 0.05
            }
        );
    }

    fn out(device: u32, id: u32, c: Characterisation) -> ModuleOutput {
        ModuleOutput {
            device_id: device,
            module_id: id,
            ready_t_s: 1.0 + id as f64 * 0.01,
            result: Ok(c),
        }
    }

    #[test]
    fn two_module_device_emits_one_fused_result() {
        let json = r#"{"devices":[{"device_id":1,"modules":[
            {"module_id":1,"angle_deg":30,"role":"SENSE"},
            {"module_id":2,"angle_deg":90,"role":"SENSE"},
            {"module_id":3,"role":"MASTER"}]}]}"#;
        let t: DeviceTopology = serde_json::from_str(json).unwrap();
        let outs = [
            out(1, 1, report(1, 30.0, Some(speed(10.2, 0.2, 30.0)), 0.4)),
            out(1, 2, report(2, 90.0, None, 0.37)),
        ];
        let ex = exchange(&t, &outs, 7, 0.02).unwrap();
        assert_eq!(ex.results.len(), 1);
        assert!(ex.results[0].1.fused);
        let fused: Vec<_> = ex
            .trace
            .iter()
            .filter(|m| m.msg_type == MessageType::FusedResult)
            .collect();
        assert_eq!(fused.len(), 1);
        assert!(ex
            .trace
            .iter()
            .any(|m| m.msg_type == MessageType::DwellReport));
    }
}
