//! Beam/vehicle geometry.
//!
//! Coordinates: the sensor sits at the origin, the road axis is `x` and the
//! lane lies at `y >= lateral_near_m`. The beam is an ideal ray at
//! `beam_angle_deg` from the `+x` axis. Vehicles travel towards `-x`, so a
//! beam below 90 degrees looks at oncoming fronts and a beam above 90
//! degrees looks at departing rears.
//!
//! The vehicle is an axis-aligned rectangle `[x_front, x_front + length]`
//! along the road, extending from its near side outwards beyond sensor
//! range.

use core::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use alloc::format;

/// Below this `|cos|` the beam counts as perpendicular to the road.
const PERPENDICULAR_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    /// Angle between beam and road axis, in `(0, 180)`.
    pub beam_angle_deg: f64,
    pub range_min_m: f64,
    pub range_max_m: f64,
    pub resolution_m: f64,
    /// Raw readings per sample window.
    pub burst_size: usize,
    /// Seconds between sample windows.
    pub window_period_s: f64,
    /// Distance from the sensor to the near edge of the lane.
    pub lateral_offset_m: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            beam_angle_deg: 45.0,
            range_min_m: 0.25,
            range_max_m: 4.5,
            resolution_m: 0.005,
            burst_size: 5,
            window_period_s: 0.02,
            lateral_offset_m: 2.0,
        }
    }
}

impl SensorConfig {
    pub fn with_angle(self, beam_angle_deg: f64) -> Self {
        Self {
            beam_angle_deg,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !(self.beam_angle_deg > 0.0 && self.beam_angle_deg < 180.0) {
            return Err(Error::InvalidConfig(format!(
                "beam_angle_deg {} outside (0, 180)",
                self.beam_angle_deg
            )));
        }
        if !(self.range_min_m > 0.0 && self.range_min_m < self.range_max_m) {
            return bad("range must satisfy 0 < range_min_m < range_max_m");
        }
        if !(self.resolution_m > 0.0) {
            return bad("resolution_m must be positive");
        }
        if self.burst_size == 0 {
            return bad("burst_size must be at least 1");
        }
        if !(self.window_period_s > 0.0) {
            return bad("window_period_s must be positive");
        }
        Ok(())
    }

    pub fn angle_rad(&self) -> f64 {
        self.beam_angle_deg.to_radians()
    }

    pub fn is_perpendicular(&self) -> bool {
        libm::fabs(libm::cos(self.angle_rad())) < PERPENDICULAR_EPS
    }

    /// Beam looks at departing rears (angle above 90 degrees).
    pub fn is_rear_facing(&self) -> bool {
        !self.is_perpendicular() && self.beam_angle_deg > 90.0
    }

    pub fn in_range(&self, d: f64) -> bool {
        d >= self.range_min_m && d <= self.range_max_m
    }

    /// Snap to the nearest multiple of the resolution.
    pub fn quantize(&self, d: f64) -> f64 {
        libm::round(d / self.resolution_m) * self.resolution_m
    }

    /// Spacing between consecutive raw readings of one burst.
    pub fn reading_period_s(&self) -> f64 {
        self.window_period_s / self.burst_size as f64
    }

    /// Distance read while the beam rests on a near side at `lateral_near_m`.
    pub fn side_distance(&self, lateral_near_m: f64) -> f64 {
        lateral_near_m / libm::sin(self.angle_rad())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehiclePass {
    pub length_m: f64,
    pub speed_mps: f64,
    /// Distance from the sensor to the vehicle's near side.
    pub lateral_near_m: f64,
    /// Front position along the road axis at `t = 0`.
    pub start_x_m: f64,
}

impl VehiclePass {
    pub fn validate(&self, cfg: &SensorConfig) -> Result<()> {
        if !(self.length_m > 0.0) {
            return Err(Error::InvalidConfig("length_m must be positive".into()));
        }
        if !(self.speed_mps > 0.0) {
            return Err(Error::InvalidConfig("speed_mps must be positive".into()));
        }
        if !cfg.in_range(self.lateral_near_m) {
            return Err(Error::InvalidConfig(format!(
                "lateral_near_m {} outside sensor range [{}, {}]",
                self.lateral_near_m, cfg.range_min_m, cfg.range_max_m
            )));
        }
        Ok(())
    }

    /// A pass whose near side runs along the lane edge of `cfg`.
    pub fn at_lane_edge(cfg: &SensorConfig, length_m: f64, speed_mps: f64) -> Self {
        Self {
            length_m,
            speed_mps,
            lateral_near_m: cfg.lateral_offset_m,
            start_x_m: 0.0,
        }
    }

    /// Same vehicle, shifted so the beam first touches it at `lead_s`.
    pub fn with_first_contact_at(self, cfg: &SensorConfig, lead_s: f64) -> Result<Self> {
        let probe = Self {
            start_x_m: 0.0,
            ..self
        };
        let first = ground_truth_events(cfg, &probe)?.t_a;
        Ok(Self {
            start_x_m: (lead_s - first) * self.speed_mps,
            ..self
        })
    }

    pub fn front_x(&self, t_s: f64) -> f64 {
        self.start_x_m - self.speed_mps * t_s
    }
}

/// One range reading: an in-range echo or nothing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distance {
    Echo(f64),
    NoEcho,
}

impl Distance {
    pub const NO_ECHO_LITERAL: &'static str = "NO_ECHO";

    pub fn echo(self) -> Option<f64> {
        match self {
            Distance::Echo(d) => Some(d),
            Distance::NoEcho => None,
        }
    }

    pub fn is_echo(self) -> bool {
        matches!(self, Distance::Echo(_))
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::Echo(d) => write!(f, "{d}"),
            Distance::NoEcho => f.write_str(Self::NO_ECHO_LITERAL),
        }
    }
}

impl core::str::FromStr for Distance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == Self::NO_ECHO_LITERAL {
            return Ok(Distance::NoEcho);
        }
        s.parse::<f64>()
            .map(Distance::Echo)
            .map_err(|_| Error::InvalidConfig(format!("bad distance field {s:?}")))
    }
}

impl Serialize for Distance {
    fn serialize<S: Serializer>(&self, serializer: S) -> core::result::Result<S::Ok, S::Error> {
        match self {
            Distance::Echo(d) => serializer.serialize_f64(*d),
            Distance::NoEcho => serializer.serialize_str(Self::NO_ECHO_LITERAL),
        }
    }
}

impl<'de> Deserialize<'de> for Distance {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> core::result::Result<Self, D::Error> {
        struct DistanceVisitor;

        impl Visitor<'_> for DistanceVisitor {
            type Value = Distance;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a distance in meters or \"NO_ECHO\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> core::result::Result<Distance, E> {
                Ok(Distance::Echo(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> core::result::Result<Distance, E> {
                Ok(Distance::Echo(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> core::result::Result<Distance, E> {
                Ok(Distance::Echo(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> core::result::Result<Distance, E> {
                v.parse()
                    .map_err(|_| E::invalid_value(de::Unexpected::Str(v), &self))
            }
        }

        deserializer.deserialize_any(DistanceVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Surface {
    Front,
    Side,
    Rear,
}

/// Exact beam hit on the vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub distance_m: f64,
    pub surface: Surface,
    /// Angle between the beam and the surface normal, radians.
    pub incidence_rad: f64,
}

/// Nearest intersection of the beam with the vehicle at time `t_s`,
/// ignoring the sensor's range limits.
pub fn beam_hit(cfg: &SensorConfig, pass: &VehiclePass, t_s: f64) -> Option<Hit> {
    let a = cfg.angle_rad();
    let (sin_a, cos_a) = (libm::sin(a), libm::cos(a));
    let lat = pass.lateral_near_m;
    let x_front = pass.front_x(t_s);
    let x_rear = x_front + pass.length_m;
    let face_incidence = libm::acos(libm::fabs(cos_a).min(1.0));

    let mut best: Option<Hit> = None;
    let mut consider = |s: f64, surface: Surface, incidence: f64| {
        if s > 0.0 && best.is_none_or(|h| s < h.distance_m) {
            best = Some(Hit {
                distance_m: s,
                surface,
                incidence_rad: incidence,
            });
        }
    };

    // near side, y = lat
    let x_side = lat * cos_a / sin_a;
    if x_side >= x_front && x_side <= x_rear {
        consider(lat / sin_a, Surface::Side, libm::acos(sin_a.min(1.0)));
    }
    if cos_a > PERPENDICULAR_EPS {
        let s = x_front / cos_a;
        if s * sin_a >= lat {
            consider(s, Surface::Front, face_incidence);
        }
    } else if cos_a < -PERPENDICULAR_EPS {
        let s = x_rear / cos_a;
        if s * sin_a >= lat {
            consider(s, Surface::Rear, face_incidence);
        }
    }
    best
}

/// Noiseless, unquantized reading at time `t_s`.
pub fn ideal_distance(cfg: &SensorConfig, pass: &VehiclePass, t_s: f64) -> Distance {
    match beam_hit(cfg, pass, t_s) {
        Some(hit) if cfg.in_range(hit.distance_m) => Distance::Echo(hit.distance_m),
        _ => Distance::NoEcho,
    }
}

/// Exact event times of one pass: front start (A), front-to-side (B), side
/// end (C), and for rear-facing beams the moment the rear leaves range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub t_a: f64,
    pub t_b: f64,
    pub t_c: f64,
    pub t_back_end: Option<f64>,
}

impl GroundTruth {
    pub fn dwell_s(&self) -> f64 {
        self.t_c - self.t_b
    }

    /// Last moment the beam sees the vehicle.
    pub fn last_contact(&self) -> f64 {
        self.t_back_end.unwrap_or(self.t_c)
    }
}

/// Test oracle for event times. Never used by the processing chain.
pub fn ground_truth_events(cfg: &SensorConfig, pass: &VehiclePass) -> Result<GroundTruth> {
    let side = cfg.side_distance(pass.lateral_near_m);
    if !cfg.in_range(side) {
        return Err(Error::Unobservable);
    }
    let a = cfg.angle_rad();
    let cos_a = libm::cos(a);
    let v = pass.speed_mps;
    let x0 = pass.start_x_m;
    let x_side = pass.lateral_near_m * cos_a / libm::sin(a);
    let t_b = (x0 - x_side) / v;
    let t_c = t_b + pass.length_m / v;

    if cfg.is_perpendicular() {
        return Ok(GroundTruth {
            t_a: t_b,
            t_b,
            t_c,
            t_back_end: None,
        });
    }
    if cos_a > 0.0 {
        // front enters range at the far limit and sweeps down to the side
        let t_a = (x0 - cfg.range_max_m * cos_a) / v;
        Ok(GroundTruth {
            t_a,
            t_b,
            t_c,
            t_back_end: None,
        })
    } else {
        let t_back_end = (x0 + pass.length_m - cfg.range_max_m * cos_a) / v;
        Ok(GroundTruth {
            t_a: t_b,
            t_b,
            t_c,
            t_back_end: Some(t_back_end),
        })
    }
}
