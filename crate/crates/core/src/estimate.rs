//! Speed and length of one vehicle as seen by one module.
//!
//! Speed comes from the slope of the distance ramp (front ramp for beams
//! pointing into traffic, departing ramp for rear-facing beams):
//! `v = |dl/dt| * |cos(alpha)|`. Length is speed times the time the beam
//! spends on the flat side of the vehicle.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::detect::PassEvents;
use crate::error::{Error, Result};
use crate::filter::FilteredSample;
use crate::geometry::SensorConfig;
use crate::stats::{Line, LineFit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedEstimate {
    pub value_mps: f64,
    pub stderr_mps: f64,
    /// Ramp windows used by the fit.
    pub n_samples: usize,
    pub source_angle_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthEstimate {
    pub value_m: f64,
    pub stderr_m: f64,
    pub dwell_s: f64,
    pub speed_used: SpeedEstimate,
}

/// Everything one module (or the fusion master) knows about a pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Characterisation {
    pub pass_id: u64,
    pub module_id: u32,
    pub angle_deg: f64,
    pub speed: Option<SpeedEstimate>,
    pub length: Option<LengthEstimate>,
    /// Side dwell time between B and C.
    pub dwell_s: Option<f64>,
    /// When the vehicle middle passes abeam of the sensor, on the shared
    /// clock; reports from different modules are associated by it.
    #[serde(default)]
    pub observed_t_s: f64,
    pub fused: bool,
    /// Modules whose reports contributed, in ascending order.
    pub sources: Vec<u32>,
}

/// Flat JSON form of a [`Characterisation`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterisationRecord {
    pub pass_id: u64,
    pub module_id: u32,
    pub angle_deg: f64,
    pub speed_mps: Option<f64>,
    pub speed_stderr: Option<f64>,
    pub length_m: Option<f64>,
    pub length_stderr: Option<f64>,
    pub dwell_s: Option<f64>,
    pub fused: bool,
}

impl Characterisation {
    pub fn record(&self) -> CharacterisationRecord {
        CharacterisationRecord {
            pass_id: self.pass_id,
            module_id: self.module_id,
            angle_deg: self.angle_deg,
            speed_mps: self.speed.map(|s| s.value_mps),
            speed_stderr: self.speed.map(|s| s.stderr_mps),
            length_m: self.length.map(|l| l.value_m),
            length_stderr: self.length.map(|l| l.stderr_m),
            dwell_s: self.dwell_s,
            fused: self.fused,
        }
    }
}

fn check_angle(beam_angle_deg: f64) -> Result<f64> {
    let c = libm::cos(beam_angle_deg.to_radians());
    if libm::fabs(c) < 1e-12 {
        return Err(Error::DegenerateAngle(beam_angle_deg));
    }
    Ok(libm::fabs(c))
}

fn fit_segment(segment: &[FilteredSample]) -> LineFit {
    segment
        .iter()
        .filter(|s| !s.discarded)
        .filter_map(|s| s.reduced_m.map(|r| (s.t_s, r)))
        .collect()
}

fn speed_from_line(line: &Line, cos_a: f64, floor_m: f64, beam_angle_deg: f64) -> SpeedEstimate {
    // quantization alone leaves a slope error of floor / sqrt(Sxx)
    let quant = if line.sxx > 0.0 {
        floor_m / libm::sqrt(line.sxx)
    } else {
        0.0
    };
    let resid = line.slope_stderr().unwrap_or(0.0);
    SpeedEstimate {
        value_mps: libm::fabs(line.slope) * cos_a,
        stderr_mps: resid.max(quant) * cos_a,
        n_samples: line.n,
        source_angle_deg: beam_angle_deg,
    }
}

/// Least-squares speed from the windows of one distance ramp. Windows
/// without a reduced value are skipped.
pub fn estimate_speed(segment: &[FilteredSample], beam_angle_deg: f64) -> Result<SpeedEstimate> {
    estimate_speed_quantized(segment, beam_angle_deg, 0.0)
}

/// As [`estimate_speed`], with the stderr floored by the error a reading
/// resolution of `resolution_m` alone would cause.
pub fn estimate_speed_quantized(
    segment: &[FilteredSample],
    beam_angle_deg: f64,
    resolution_m: f64,
) -> Result<SpeedEstimate> {
    let cos_a = check_angle(beam_angle_deg)?;
    let fit = fit_segment(segment);
    let line = fit
        .line()
        .ok_or(Error::SegmentTooShort { have: fit.len() })?;
    Ok(speed_from_line(
        &line,
        cos_a,
        resolution_m / libm::sqrt(12.0),
        beam_angle_deg,
    ))
}

/// Incremental ramp-slope speed, usable before the ramp has ended.
#[derive(Debug, Clone, Copy)]
pub struct RunningSpeed {
    fit: LineFit,
    cos_a: f64,
    angle_deg: f64,
}

impl RunningSpeed {
    pub fn new(beam_angle_deg: f64) -> Result<Self> {
        Ok(Self {
            fit: LineFit::new(),
            cos_a: check_angle(beam_angle_deg)?,
            angle_deg: beam_angle_deg,
        })
    }

    pub fn push(&mut self, s: &FilteredSample) {
        if let (false, Some(r)) = (s.discarded, s.reduced_m) {
            self.fit.push(s.t_s, r);
        }
    }

    /// Estimate so far; `None` until two windows have been seen.
    pub fn current(&self) -> Option<SpeedEstimate> {
        self.fit
            .line()
            .map(|l| speed_from_line(&l, self.cos_a, 0.0, self.angle_deg))
    }
}

/// `L = v * dwell` with the speed stderr and a one-window timing
/// uncertainty on each end propagated.
pub fn estimate_length(
    b_t_s: f64,
    c_t_s: f64,
    speed: &SpeedEstimate,
    window_period_s: f64,
) -> Result<LengthEstimate> {
    let dwell = c_t_s - b_t_s;
    if !(dwell > 0.0) {
        return Err(Error::NegativeDwell { dwell_s: dwell });
    }
    if !(speed.value_mps > 0.0) {
        return Err(Error::InvalidConfig("speed must be positive".into()));
    }
    // uniform +-window on each end has variance window^2 / 3
    let timing_var = 2.0 * window_period_s * window_period_s / 3.0;
    let speed_part = dwell * speed.stderr_mps;
    let var = speed_part * speed_part + speed.value_mps * speed.value_mps * timing_var;
    Ok(LengthEstimate {
        value_m: speed.value_mps * dwell,
        stderr_m: libm::sqrt(var),
        dwell_s: dwell,
        speed_used: *speed,
    })
}

fn median_level(stream: &[FilteredSample]) -> Option<(f64, f64)> {
    let mut v: Vec<f64> = stream.iter().filter_map(|s| s.reduced_m).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let med = v[v.len() / 2];
    let mut dev: Vec<f64> = v.iter().map(|x| libm::fabs(x - med)).collect();
    dev.sort_by(f64::total_cmp);
    Some((med, 1.4826 * dev[dev.len() / 2]))
}

/// Drops windows that already sit on the side level from the end of a ramp
/// that meets the side (`at_end`) or from its start.
fn trim_to_ramp(ramp: &[FilteredSample], level: f64, tol: f64, at_end: bool) -> &[FilteredSample] {
    let on_side = |s: &FilteredSample| s.reduced_m.is_none_or(|r| libm::fabs(r - level) <= tol);
    let mut lo = 0;
    let mut hi = ramp.len();
    if at_end {
        while hi > lo && on_side(&ramp[hi - 1]) {
            hi -= 1;
        }
    } else {
        while lo < hi && on_side(&ramp[lo]) {
            lo += 1;
        }
    }
    &ramp[lo..hi]
}

/// Speed and length for one detected pass.
///
/// The side transition on the ramp end is timed where the fitted ramp meets
/// the side level rather than at the nearest window. Perpendicular beams
/// give a dwell time only.
pub fn characterise_pass(
    stream: &[FilteredSample],
    events: &PassEvents,
    sensor: &SensorConfig,
    pass_id: u64,
    module_id: u32,
) -> Result<Characterisation> {
    let [a, b, c, end] = events.positions;
    let mut out = Characterisation {
        pass_id,
        module_id,
        angle_deg: sensor.beam_angle_deg,
        speed: None,
        length: None,
        dwell_s: None,
        observed_t_s: 0.0,
        fused: false,
        sources: alloc::vec![module_id],
    };
    let mut t_b = events.front_to_side.t_s;
    let mut t_c = events.side_end.t_s;

    if sensor.is_perpendicular() {
        let dwell = t_c - t_b;
        if !(dwell > 0.0) {
            return Err(Error::NegativeDwell { dwell_s: dwell });
        }
        out.dwell_s = Some(dwell);
        out.observed_t_s = 0.5 * (t_b + t_c);
        return Ok(out);
    }

    let (side, ramp, ramp_ends_on_side) = if sensor.is_rear_facing() {
        (&stream[b..c], &stream[c..end], false)
    } else {
        (&stream[b..c], &stream[a..b], true)
    };
    let (level, spread) = median_level(side).ok_or(Error::SegmentTooShort { have: 0 })?;
    let tol = (3.0 * spread).max(2.0 * sensor.resolution_m);
    let ramp = trim_to_ramp(ramp, level, tol, ramp_ends_on_side);

    let speed = estimate_speed_quantized(ramp, sensor.beam_angle_deg, sensor.resolution_m)?;
    if let Some(line) = fit_segment(ramp).line().filter(|l| l.slope != 0.0) {
        let meet = line.solve(level);
        // only trust the intersection near the detected window
        let (t_event, lo, hi) = if ramp_ends_on_side {
            (&mut t_b, stream[a].t_s, stream[c.min(stream.len() - 1)].t_s)
        } else {
            (
                &mut t_c,
                stream[b].t_s,
                stream[(end - 1).min(stream.len() - 1)].t_s,
            )
        };
        if meet.is_finite()
            && meet >= lo
            && meet <= hi
            && libm::fabs(meet - *t_event) <= 2.0 * sensor.window_period_s
        {
            *t_event = meet;
        }
    }

    let length = estimate_length(t_b, t_c, &speed, sensor.window_period_s)?;
    // the beam meets the side this far upstream of the sensor
    let upstream = level * libm::cos(sensor.angle_rad());
    out.observed_t_s = 0.5 * (t_b + t_c) + upstream / speed.value_mps;
    out.speed = Some(speed);
    out.dwell_s = Some(length.dwell_s);
    out.length = Some(length);
    Ok(out)
}
