//! Trend-change events in a smoothed distance stream.
//!
//! Breaks come from two sources. Echo transitions (into or out of windows
//! with no echo) are breaks by definition. Inside an echo run, each new
//! window is z-scored against the statistics of the current trend segment,
//! both on its level and on its increment over the previous window; a score
//! above the threshold on either channel starts a new segment. The level
//! channel catches steps, the increment channel catches slope changes such
//! as a ramp meeting a flat side.
//!
//! Breaks are then moved to the largest second difference nearby and the
//! resulting segments are labelled by slope to find the front start (A),
//! front-to-side transition (B) and side end (C) of each pass.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::FilteredSample;
use crate::geometry::SensorConfig;
use crate::stats::{LineFit, Welford};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CusumConfig {
    pub z_threshold: f64,
    /// Windows a trend must persist before it can be broken again.
    pub min_segment_len: usize,
    pub sigma_floor_m: f64,
    /// Half-width of the second-difference search around a raw break.
    pub refine_radius: usize,
    /// Segments with a smaller absolute slope count as flat.
    pub flat_slope_mps: f64,
}

impl Default for CusumConfig {
    fn default() -> Self {
        Self {
            z_threshold: 3.0,
            min_segment_len: 3,
            sigma_floor_m: 0.005,
            refine_radius: 5,
            flat_slope_mps: 1.0,
        }
    }
}

impl CusumConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.z_threshold > 0.0) {
            return Err(Error::InvalidConfig("z_threshold must be positive".into()));
        }
        if self.min_segment_len < 2 {
            return Err(Error::InvalidConfig("min_segment_len must be >= 2".into()));
        }
        if !(self.sigma_floor_m > 0.0) {
            return Err(Error::InvalidConfig(
                "sigma_floor_m must be positive".into(),
            ));
        }
        if !(self.flat_slope_mps > 0.0) {
            return Err(Error::InvalidConfig(
                "flat_slope_mps must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Running statistics of the current trend segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub mean_m: f64,
    pub sigma_m: f64,
    pub start_index: usize,
    pub count: usize,
}

impl SegmentStats {
    fn from_welford(w: &Welford, start_index: usize) -> Self {
        Self {
            mean_m: w.mean(),
            sigma_m: w.std_dev(),
            start_index,
            count: w.count(),
        }
    }
}

/// `(sample - mean) / max(sigma, floor)` once the segment is long enough.
pub fn z_score(sample: f64, stats: &SegmentStats, cfg: &CusumConfig) -> Result<f64> {
    if stats.count < cfg.min_segment_len {
        return Err(Error::InsufficientSegment {
            have: stats.count,
            need: cfg.min_segment_len,
        });
    }
    Ok((sample - stats.mean_m) / stats.sigma_m.max(cfg.sigma_floor_m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BreakKind {
    EchoStart,
    EchoEnd,
    Trend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Break {
    /// Position in the filtered stream.
    pub index: usize,
    pub kind: BreakKind,
}

/// Streaming break detector for one sensor.
#[derive(Debug, Clone)]
pub struct TrendDetector {
    cfg: CusumConfig,
    level: Welford,
    step: Welford,
    start: usize,
    prev: Option<f64>,
    last_break: Option<usize>,
    in_echo: Option<bool>,
}

impl TrendDetector {
    pub fn new(cfg: CusumConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            level: Welford::new(),
            step: Welford::new(),
            start: 0,
            prev: None,
            last_break: None,
            in_echo: None,
        })
    }

    /// Level statistics of the current segment.
    pub fn segment(&self) -> SegmentStats {
        SegmentStats::from_welford(&self.level, self.start)
    }

    fn restart(&mut self, index: usize, value: Option<f64>) {
        self.level = Welford::new();
        self.step = Welford::new();
        self.start = index;
        self.prev = value;
        if let Some(v) = value {
            self.level.push(v);
        }
    }

    pub fn push(&mut self, index: usize, s: &FilteredSample) -> Option<Break> {
        if s.no_echo {
            let was_echo = self.in_echo == Some(true);
            self.in_echo = Some(false);
            self.restart(index, None);
            return was_echo.then(|| self.emit(index, BreakKind::EchoEnd));
        }
        if s.discarded {
            return None;
        }
        let v = s.value_m;
        match self.in_echo {
            Some(true) => {}
            Some(false) => {
                self.in_echo = Some(true);
                self.restart(index, Some(v));
                return Some(self.emit(index, BreakKind::EchoStart));
            }
            None => {
                self.in_echo = Some(true);
                self.restart(index, Some(v));
                return None;
            }
        }

        let cfg = self.cfg;
        let mut fire =
            z_score(v, &self.segment(), &cfg).is_ok_and(|z| libm::fabs(z) > cfg.z_threshold);
        let step = self.prev.map(|p| v - p);
        if let Some(d) = step {
            let stats = SegmentStats::from_welford(&self.step, self.start);
            fire |= z_score(d, &stats, &cfg).is_ok_and(|z| libm::fabs(z) > cfg.z_threshold);
        }
        let settled = self
            .last_break
            .is_none_or(|b| index >= b + cfg.min_segment_len);
        if fire && settled {
            self.restart(index, Some(v));
            return Some(self.emit(index, BreakKind::Trend));
        }
        self.level.push(v);
        if let Some(d) = step {
            self.step.push(d);
        }
        self.prev = Some(v);
        None
    }

    fn emit(&mut self, index: usize, kind: BreakKind) -> Break {
        self.last_break = Some(index);
        Break { index, kind }
    }
}

/// All breaks of a stream, in order.
pub fn detect_trend_breaks(stream: &[FilteredSample], cfg: &CusumConfig) -> Result<Vec<Break>> {
    let mut det = TrendDetector::new(*cfg)?;
    Ok(stream
        .iter()
        .enumerate()
        .filter_map(|(i, s)| det.push(i, s))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Refinement {
    pub index: usize,
    pub refined: bool,
}

/// Like [`refine_with_second_derivative`] but reports an incomplete
/// neighbourhood as an error.
pub fn try_refine(
    stream: &[FilteredSample],
    raw_break: usize,
    radius: usize,
    cfg: &CusumConfig,
) -> Result<Refinement> {
    if radius < 1 || raw_break < radius || raw_break + radius >= stream.len() {
        return Err(Error::OutOfBounds {
            index: raw_break,
            radius,
            len: stream.len(),
        });
    }
    let lo = raw_break - radius;
    let hi = raw_break + radius;
    let d2: Vec<(usize, f64)> = (lo + 1..hi)
        .map(|j| {
            let v = |k: usize| stream[k].value_m;
            (j, v(j + 1) - 2.0 * v(j) + v(j - 1))
        })
        .collect();
    let unrefined = Refinement {
        index: raw_break,
        refined: false,
    };
    if d2.is_empty() {
        return Ok(unrefined);
    }

    let mut mags: Vec<f64> = d2.iter().map(|(_, x)| libm::fabs(*x)).collect();
    mags.sort_by(f64::total_cmp);
    let median = mags[mags.len() / 2];
    let mut dev: Vec<f64> = mags.iter().map(|m| libm::fabs(m - median)).collect();
    dev.sort_by(f64::total_cmp);
    let mad = dev[dev.len() / 2];
    let floor = (median + cfg.z_threshold * 1.4826 * mad).max(2.0 * cfg.sigma_floor_m);

    let (idx, peak) = d2.iter().fold((raw_break, 0.0f64), |best, &(j, x)| {
        if libm::fabs(x) > best.1 {
            (j, libm::fabs(x))
        } else {
            best
        }
    });
    if peak > floor {
        Ok(Refinement {
            index: idx,
            refined: true,
        })
    } else {
        Ok(unrefined)
    }
}

/// Moves a break to the largest second difference within `radius`, or
/// leaves it when nothing stands above the neighbourhood's noise floor or
/// the neighbourhood does not fit in the stream.
pub fn refine_with_second_derivative(
    stream: &[FilteredSample],
    raw_break: usize,
    radius: usize,
    cfg: &CusumConfig,
) -> Refinement {
    try_refine(stream, raw_break, radius, cfg).unwrap_or_else(|e| {
        log::debug!("break {raw_break} left unrefined: {e}");
        Refinement {
            index: raw_break,
            refined: false,
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    FrontStart,
    FrontToSide,
    SideEnd,
    BackStart,
    BackEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendEvent {
    pub kind: EventKind,
    pub window_index: u64,
    pub t_s: f64,
    pub refined: bool,
}

/// Events of one complete pass, with stream positions for the estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassEvents {
    pub front_start: TrendEvent,
    pub front_to_side: TrendEvent,
    pub side_end: TrendEvent,
    /// Rear-facing beams only; the back ramp starts at `side_end`.
    pub back_end: Option<TrendEvent>,
    /// Stream positions of A, B, C and the first window after the pass.
    pub positions: [usize; 4],
}

impl PassEvents {
    pub fn events(&self) -> Vec<TrendEvent> {
        let mut out = alloc::vec![self.front_start, self.front_to_side, self.side_end];
        if let Some(end) = self.back_end {
            out.push(TrendEvent {
                kind: EventKind::BackStart,
                ..self.side_end
            });
            out.push(end);
        }
        out
    }

    pub fn dwell_s(&self) -> f64 {
        self.side_end.t_s - self.front_to_side.t_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Trend {
    NoEcho,
    Flat,
    Falling,
    Rising,
    Short,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    start: usize,
    end: usize,
    trend: Trend,
    refined: bool,
}

fn segment_fit(stream: &[FilteredSample], start: usize, end: usize) -> LineFit {
    stream[start..end]
        .iter()
        .filter_map(|s| s.reduced_m.map(|r| (s.t_s, r)))
        .collect()
}

fn label(stream: &[FilteredSample], start: usize, end: usize, cfg: &CusumConfig) -> Trend {
    let fit = segment_fit(stream, start, end);
    if fit.is_empty() && stream[start..end].iter().any(|s| s.no_echo) {
        return Trend::NoEcho;
    }
    if fit.len() < cfg.min_segment_len {
        return Trend::Short;
    }
    match fit.line() {
        None => Trend::Short,
        // a slope the segment's own scatter cannot distinguish from zero is flat
        Some(l)
            if libm::fabs(l.slope) < cfg.flat_slope_mps
                || l.slope_stderr()
                    .is_some_and(|se| libm::fabs(l.slope) < cfg.z_threshold * se) =>
        {
            Trend::Flat
        }
        Some(l) if l.slope < 0.0 => Trend::Falling,
        Some(_) => Trend::Rising,
    }
}

/// Mean squared residual of `short`'s windows against `model`'s fit.
fn misfit(stream: &[FilteredSample], short: &Segment, model: &Segment) -> f64 {
    let fit = segment_fit(stream, model.start, model.end);
    let points: Vec<(f64, f64)> = stream[short.start..short.end]
        .iter()
        .filter_map(|s| s.reduced_m.map(|r| (s.t_s, r)))
        .collect();
    if fit.is_empty() || points.is_empty() {
        return f64::INFINITY;
    }
    let predict = |t: f64| match fit.line() {
        Some(l) => l.at(t),
        None => {
            let mut total = 0.0;
            stream[model.start..model.end]
                .iter()
                .filter_map(|s| s.reduced_m)
                .for_each(|r| total += r);
            total / fit.len() as f64
        }
    };
    points
        .iter()
        .map(|&(t, r)| (r - predict(t)) * (r - predict(t)))
        .sum::<f64>()
        / points.len() as f64
}

fn transition_time(stream: &[FilteredSample], pos: usize, reading_period: f64) -> f64 {
    let Some(p) = pos.checked_sub(1).filter(|_| pos < stream.len()) else {
        return stream[pos.min(stream.len() - 1)].t_s;
    };
    let (before, after) = (&stream[p], &stream[pos]);
    // the edge sits half a reading outside the outermost echo of the pair
    let edge = if before.no_echo && !after.no_echo {
        before
            .first_echo_t_s
            .or(after.first_echo_t_s)
            .map(|t| t - 0.5 * reading_period)
    } else if !before.no_echo && after.no_echo {
        after
            .last_echo_t_s
            .or(before.last_echo_t_s)
            .map(|t| t + 0.5 * reading_period)
    } else {
        None
    };
    let mid = 0.5 * (before.t_s + after.t_s);
    match edge {
        Some(t) if (t - mid).abs() <= after.t_s - before.t_s => t,
        _ => mid,
    }
}

fn event(
    stream: &[FilteredSample],
    kind: EventKind,
    pos: usize,
    refined: bool,
    transition: Option<f64>,
) -> TrendEvent {
    let at = pos.min(stream.len() - 1);
    TrendEvent {
        kind,
        window_index: stream[at].window_index,
        t_s: match transition {
            Some(dt) => transition_time(stream, pos, dt),
            None => stream[at].t_s,
        },
        refined,
    }
}

/// Robust level and spread of the reduced values in `[start, end)`.
fn robust_level(stream: &[FilteredSample], start: usize, end: usize) -> Option<(f64, f64)> {
    let mut v: Vec<f64> = stream[start..end]
        .iter()
        .filter_map(|s| s.reduced_m)
        .collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let med = v[v.len() / 2];
    let mut dev: Vec<f64> = v.iter().map(|x| libm::fabs(x - med)).collect();
    dev.sort_by(f64::total_cmp);
    Some((med, 1.4826 * dev[dev.len() / 2]))
}

/// Splits a ramp too short to be broken by the z-test off the leading
/// (front) or trailing (rear) edge of a flat segment.
fn split_edge_ramp(
    stream: &[FilteredSample],
    seg: Segment,
    leading: bool,
    cfg: &CusumConfig,
) -> Option<(Segment, Segment)> {
    let (level, spread) = robust_level(stream, seg.start, seg.end)?;
    let tol = (cfg.z_threshold * spread).max(cfg.z_threshold * cfg.sigma_floor_m);
    let off = |s: &FilteredSample| s.reduced_m.is_some_and(|r| r > level + tol);
    let idx: Vec<usize> = (seg.start..seg.end).collect();
    let run = if leading {
        idx.iter()
            .take_while(|&&i| stream[i].discarded || off(&stream[i]))
            .count()
    } else {
        idx.iter()
            .rev()
            .take_while(|&&i| stream[i].discarded || off(&stream[i]))
            .count()
    };
    if run == 0 || run >= seg.end - seg.start {
        return None;
    }
    let cut = if leading {
        seg.start + run
    } else {
        seg.end - run
    };
    let ramp = if leading {
        Trend::Falling
    } else {
        Trend::Rising
    };
    let (first, second) = if leading {
        (ramp, Trend::Flat)
    } else {
        (Trend::Flat, ramp)
    };
    Some((
        Segment {
            start: seg.start,
            end: cut,
            trend: first,
            refined: seg.refined,
        },
        Segment {
            start: cut,
            end: seg.end,
            trend: second,
            refined: true,
        },
    ))
}

fn has_flat_after_fall(segs: &[Segment]) -> bool {
    segs.iter()
        .position(|s| s.trend == Trend::Falling)
        .is_some_and(|f| segs[f + 1..].iter().any(|s| s.trend == Trend::Flat))
}

/// Orientation of the beam relative to traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Facing {
    Front,
    Perpendicular,
    Rear,
}

fn facing(sensor: &SensorConfig) -> Facing {
    if sensor.is_perpendicular() {
        Facing::Perpendicular
    } else if sensor.is_rear_facing() {
        Facing::Rear
    } else {
        Facing::Front
    }
}

fn classify_pass(
    stream: &[FilteredSample],
    mut segs: Vec<Segment>,
    end: usize,
    face: Facing,
    dt: f64,
    cfg: &CusumConfig,
) -> Result<PassEvents> {
    // fragments join the neighbour whose trend line explains them best,
    // then equal neighbours merge
    let labelled = segs.clone();
    for (i, seg) in segs.iter_mut().enumerate() {
        if seg.trend != Trend::Short {
            continue;
        }
        let candidates = [i.checked_sub(1), Some(i + 1)];
        seg.trend = candidates
            .iter()
            .flatten()
            .filter_map(|&j| labelled.get(j))
            .filter(|n| n.trend != Trend::Short)
            .map(|n| (misfit(stream, seg, n), n.trend))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map_or(Trend::Flat, |(_, t)| t);
    }
    let mut merged: Vec<Segment> = Vec::with_capacity(segs.len());
    for s in segs {
        match merged.last_mut() {
            Some(last) if last.trend == s.trend => last.end = s.end,
            _ => merged.push(s),
        }
    }

    match face {
        // a ramp the z-test could not separate still has to end on a flat
        Facing::Front if !has_flat_after_fall(&merged) => {
            if let Some((ramp, flat)) = split_edge_ramp(stream, merged[0], true, cfg) {
                merged[0] = flat;
                merged.insert(0, ramp);
            }
        }
        Facing::Rear if merged.len() < 2 || merged[merged.len() - 1].trend != Trend::Rising => {
            let last = merged.len() - 1;
            if let Some((flat, ramp)) = split_edge_ramp(stream, merged[last], false, cfg) {
                merged[last] = flat;
                merged.push(ramp);
            }
        }
        _ => {}
    }

    let pass_start = merged[0].start;
    let final_rise = merged
        .last()
        .filter(|s| s.trend == Trend::Rising && merged.len() > 1)
        .copied();

    match face {
        Facing::Front => {
            let f = merged
                .iter()
                .position(|s| s.trend == Trend::Falling)
                .ok_or(Error::IncompletePass("no falling front ramp"))?;
            let s = merged[f + 1..]
                .iter()
                .position(|s| s.trend == Trend::Flat)
                .map(|k| k + f + 1)
                .ok_or(Error::IncompletePass(
                    "front ramp never reaches a flat side",
                ))?;
            let a_pos = merged[f].start;
            let b = merged[s];
            let (c_pos, c_transition) = match final_rise {
                Some(r) if r.start > b.start => (r.start, false),
                _ => (end, true),
            };
            Ok(PassEvents {
                front_start: event(
                    stream,
                    EventKind::FrontStart,
                    a_pos,
                    false,
                    (a_pos == pass_start).then_some(dt),
                ),
                front_to_side: event(stream, EventKind::FrontToSide, b.start, b.refined, None),
                side_end: event(
                    stream,
                    EventKind::SideEnd,
                    c_pos,
                    false,
                    c_transition.then_some(dt),
                ),
                back_end: None,
                positions: [a_pos, b.start, c_pos, end],
            })
        }
        Facing::Perpendicular => {
            if merged[0].trend == Trend::Rising {
                return Err(Error::IncompletePass("side starts on a rising slope"));
            }
            let (c_pos, c_transition) = match final_rise {
                Some(r) => (r.start, false),
                None => (end, true),
            };
            let a = event(stream, EventKind::FrontStart, pass_start, false, Some(dt));
            Ok(PassEvents {
                front_start: a,
                front_to_side: TrendEvent {
                    kind: EventKind::FrontToSide,
                    ..a
                },
                side_end: event(
                    stream,
                    EventKind::SideEnd,
                    c_pos,
                    false,
                    c_transition.then_some(dt),
                ),
                back_end: None,
                positions: [pass_start, pass_start, c_pos, end],
            })
        }
        Facing::Rear => {
            let rise = final_rise.ok_or(Error::IncompletePass("no receding rear ramp"))?;
            let a = event(stream, EventKind::FrontStart, pass_start, false, Some(dt));
            Ok(PassEvents {
                front_start: a,
                front_to_side: TrendEvent {
                    kind: EventKind::FrontToSide,
                    ..a
                },
                side_end: event(stream, EventKind::SideEnd, rise.start, rise.refined, None),
                back_end: Some(event(stream, EventKind::BackEnd, end, false, Some(dt))),
                positions: [pass_start, pass_start, rise.start, end],
            })
        }
    }
}

/// Groups refined breaks into labelled segments and reads off the A/B/C
/// events of every complete pass. Passes that never complete their pattern
/// are dropped; if none completes the first failure is returned.
pub fn classify_events(
    breaks: &[Break],
    stream: &[FilteredSample],
    sensor: &SensorConfig,
    cfg: &CusumConfig,
) -> Result<Vec<PassEvents>> {
    if stream.is_empty() {
        return Err(Error::IncompletePass("empty stream"));
    }
    let mut bounds: Vec<(usize, bool)> = breaks
        .iter()
        .map(|b| (b.index, b.kind == BreakKind::Trend))
        .collect();
    bounds.sort_by_key(|b| b.0);
    bounds.dedup_by_key(|b| b.0);

    let mut segs = Vec::with_capacity(bounds.len() + 1);
    let mut start = 0;
    let mut refined = false;
    for &(b, trend_break) in bounds
        .iter()
        .chain(core::iter::once(&(stream.len(), false)))
    {
        if b > start {
            segs.push(Segment {
                start,
                end: b,
                trend: label(stream, start, b, cfg),
                refined,
            });
        }
        start = b;
        refined = trend_break;
    }

    let face = facing(sensor);
    let mut passes = Vec::new();
    let mut first_err = None;
    let mut current: Vec<Segment> = Vec::new();
    let mut i = 0;
    while i < segs.len() {
        let s = segs[i];
        if s.trend == Trend::NoEcho {
            let short_gap = s.end - s.start < cfg.min_segment_len;
            let inside =
                !current.is_empty() && segs[i + 1..].iter().any(|n| n.trend != Trend::NoEcho);
            if !(short_gap && inside) && !current.is_empty() {
                match classify_pass(
                    stream,
                    core::mem::take(&mut current),
                    s.start,
                    face,
                    sensor.reading_period_s(),
                    cfg,
                ) {
                    Ok(p) => passes.push(p),
                    Err(e) => {
                        first_err.get_or_insert(e);
                    }
                }
            }
        } else {
            current.push(s);
        }
        i += 1;
    }
    if !current.is_empty() {
        first_err.get_or_insert(Error::IncompletePass("stream ends inside a pass"));
    }
    if passes.is_empty() {
        return Err(first_err.unwrap_or(Error::IncompletePass("no vehicle in stream")));
    }
    Ok(passes)
}

/// Break detection, refinement and classification in one call.
pub fn detect_events(
    stream: &[FilteredSample],
    sensor: &SensorConfig,
    cfg: &CusumConfig,
) -> Result<Vec<PassEvents>> {
    let raw = detect_trend_breaks(stream, cfg)?;
    let refined = refine_breaks(stream, &raw, cfg);
    classify_events(&refined, stream, sensor, cfg)
}

/// Refines trend breaks inside their echo run; echo transitions are exact
/// and stay where they are.
pub fn refine_breaks(stream: &[FilteredSample], raw: &[Break], cfg: &CusumConfig) -> Vec<Break> {
    raw.iter()
        .map(|b| {
            if b.kind != BreakKind::Trend {
                return *b;
            }
            let run_start = raw
                .iter()
                .rev()
                .find(|o| o.index < b.index && o.kind != BreakKind::Trend)
                .map_or(0, |o| o.index);
            let run_end = raw
                .iter()
                .find(|o| o.index > b.index && o.kind == BreakKind::EchoEnd)
                .map_or(stream.len(), |o| o.index);
            let local = b.index - run_start;
            let radius = cfg.refine_radius.min(local).min(run_end - b.index - 1);
            if radius < 2 {
                return *b;
            }
            let r = refine_with_second_derivative(&stream[run_start..run_end], local, radius, cfg);
            Break {
                index: run_start + r.index,
                kind: BreakKind::Trend,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{filter_stream, FilterConfig};
    use crate::geometry::VehiclePass;
    use crate::noise::NoiseModel;
    use crate::sim::synthesize_pass;

    fn samples(values: &[f64]) -> Vec<FilteredSample> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| FilteredSample {
                window_index: i as u64,
                t_s: i as f64 * 0.02,
                value_m: v,
                reduced_m: Some(v),
                discarded: false,
                no_echo: false,
                first_echo_t_s: None,
                last_echo_t_s: None,
            })
            .collect()
    }

    fn ema(values: &[f64], a: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut prev = values[0];
        for &v in values {
            prev = a * v + (1.0 - a) * prev;
            out.push(prev);
        }
        out
    }

    #[test]
    fn z_examples() {
        let cfg = CusumConfig::default();
        let st = SegmentStats {
            mean_m: 2.0,
            sigma_m: 0.05,
            start_index: 0,
            count: 5,
        };
        assert_eq!(z_score(2.0, &st, &cfg).unwrap(), 0.0);
        assert!((z_score(2.15, &st, &cfg).unwrap() - 3.0).abs() < 1e-9);
        assert!((z_score(2.2, &st, &cfg).unwrap() - 4.0).abs() < 1e-9);
        let short = SegmentStats { count: 2, ..st };
        assert_eq!(
            z_score(2.2, &short, &cfg),
            Err(Error::InsufficientSegment { have: 2, need: 3 })
        );
        // flat quantized segment: sigma 0 is floored
        let flat = SegmentStats { sigma_m: 0.0, ..st };
        assert!((z_score(2.01, &flat, &cfg).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn constant_stream_has_no_breaks() {
        let s = samples(&[2.0; 500]);
        assert!(detect_trend_breaks(&s, &CusumConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn smoothed_step_breaks_once_at_step() {
        // hand trace: EMA of a 4.5 -> 2.0 step at window 10 is
        // 2.625, 2.156, 2.039, 2.0098, ... The level z at 10 is far above 3,
        // and the transient never leaves the new segment's spread.
        let mut raw = [4.5; 10].to_vec();
        raw.extend([2.0; 10]);
        let s = samples(&ema(&raw, 0.75));
        let b = detect_trend_breaks(&s, &CusumConfig::default()).unwrap();
        assert_eq!(
            b,
            [Break {
                index: 10,
                kind: BreakKind::Trend
            }]
        );
    }

    #[test]
    fn refinement_finds_ideal_knee() {
        // ramp down 0.2 per window reaching its flat at window 8
        let v: Vec<f64> = (0..20)
            .map(|k| {
                if k < 8 {
                    4.0 - 0.2 * k as f64
                } else {
                    4.0 - 1.6
                }
            })
            .collect();
        let s = samples(&v);
        let r = refine_with_second_derivative(&s, 10, 5, &CusumConfig::default());
        assert_eq!(
            r,
            Refinement {
                index: 8,
                refined: true
            }
        );
    }

    #[test]
    fn refinement_leaves_linear_segment() {
        let v: Vec<f64> = (0..20).map(|k| 4.0 - 0.2 * k as f64).collect();
        let r = refine_with_second_derivative(&samples(&v), 10, 5, &CusumConfig::default());
        assert_eq!(
            r,
            Refinement {
                index: 10,
                refined: false
            }
        );
    }

    #[test]
    fn refinement_out_of_bounds() {
        let s = samples(&[2.0; 6]);
        let cfg = CusumConfig::default();
        assert!(matches!(
            try_refine(&s, 2, 5, &cfg),
            Err(Error::OutOfBounds { .. })
        ));
        assert_eq!(
            refine_with_second_derivative(&s, 2, 5, &cfg),
            Refinement {
                index: 2,
                refined: false
            }
        );
    }

    fn pipeline_events(angle: f64, v: f64) -> Result<Vec<PassEvents>> {
        let cfg = SensorConfig::default().with_angle(angle);
        let pass = VehiclePass {
            length_m: 3.7,
            speed_mps: v,
            lateral_near_m: 1.5,
            start_x_m: 0.0,
        }
        .with_first_contact_at(&cfg, 0.1)
        .unwrap();
        let raw = synthesize_pass(&cfg, &pass, &NoiseModel::noiseless()).unwrap();
        let f = filter_stream(&raw, &FilterConfig::default(), &cfg).unwrap();
        detect_events(&f, &cfg, &CusumConfig::default())
    }

    #[test]
    fn perpendicular_pass_has_a_equal_b() {
        let p = pipeline_events(90.0, 10.0).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].front_start.t_s, p[0].front_to_side.t_s);
        assert!((p[0].dwell_s() - 0.37).abs() <= 0.02);
    }

    #[test]
    fn angled_passes_have_ordered_events() {
        for angle in [30.0, 45.0, 60.0, 135.0, 150.0] {
            for v in [10.0, 20.0] {
                let p = pipeline_events(angle, v).unwrap();
                assert_eq!(p.len(), 1, "angle {angle}");
                let e = p[0].events();
                assert!(e[0].t_s < e[1].t_s || angle > 90.0, "angle {angle}: {e:?}");
                assert!(e[1].t_s < e[2].t_s, "angle {angle}: {e:?}");
                assert_eq!(e.len(), if angle > 90.0 { 5 } else { 3 });
            }
        }
    }

    #[test]
    fn rise_without_front_ramp_is_incomplete() {
        // no echo, flat, rising, no echo, seen by a front-facing beam
        let mut s = Vec::new();
        let mut push = |v: Option<f64>| {
            let i = s.len();
            s.push(FilteredSample {
                window_index: i as u64,
                t_s: i as f64 * 0.02,
                value_m: v.unwrap_or(4.5),
                reduced_m: v,
                discarded: v.is_none(),
                no_echo: v.is_none(),
                first_echo_t_s: None,
                last_echo_t_s: None,
            });
        };
        for _ in 0..5 {
            push(None);
        }
        for _ in 0..10 {
            push(Some(2.0));
        }
        for k in 0..8 {
            push(Some(2.2 + 0.25 * k as f64));
        }
        for _ in 0..5 {
            push(None);
        }
        let sensor = SensorConfig::default().with_angle(30.0);
        let breaks = [
            Break {
                index: 5,
                kind: BreakKind::EchoStart,
            },
            Break {
                index: 15,
                kind: BreakKind::Trend,
            },
            Break {
                index: 23,
                kind: BreakKind::EchoEnd,
            },
        ];
        let r = classify_events(&breaks, &s, &sensor, &CusumConfig::default());
        assert!(matches!(r, Err(Error::IncompletePass(_))), "{r:?}");
        // the same profile is a complete rear pass
        let rear = SensorConfig::default().with_angle(150.0);
        let p = classify_events(&breaks, &s, &rear, &CusumConfig::default()).unwrap();
        assert_eq!(p[0].positions, [5, 5, 15, 23]);
    }
}
