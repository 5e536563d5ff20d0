//! Burst filtering and EMA smoothing.
//!
//! Per window: drop out-of-range readings, drop single-reading peaks and
//! dips, reduce the survivors to their median, then smooth with an
//! exponential moving average. The pipeline keeps one scratch buffer of
//! `burst_size` readings and the previous smoothed value, nothing else.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Distance, SensorConfig};
use crate::sim::{bursts, RangeSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// EMA weight of the newest window value, in `[0, 1]`.
    pub smoothing_factor: f64,
    /// Relative excess over both neighbours that marks a peak (or dip).
    pub peak_threshold_frac: f64,
    /// Windows with fewer surviving readings are discarded.
    pub min_valid_per_window: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            smoothing_factor: 0.75,
            peak_threshold_frac: 0.15,
            min_valid_per_window: 3,
        }
    }
}

impl FilterConfig {
    /// Defaults with the discard rule sized for `burst_size`: a window
    /// needs a strict majority of valid readings.
    pub fn for_burst(burst_size: usize) -> Self {
        Self {
            min_valid_per_window: burst_size / 2 + 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.smoothing_factor) {
            return Err(Error::InvalidConfig(
                "smoothing_factor must lie in [0, 1]".into(),
            ));
        }
        if !(self.peak_threshold_frac >= 0.0) {
            return Err(Error::InvalidConfig(
                "peak_threshold_frac must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// One smoothed window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilteredSample {
    pub window_index: u64,
    pub t_s: f64,
    /// EMA output; held from the previous window when discarded.
    pub value_m: f64,
    /// Median of the surviving readings before smoothing.
    pub reduced_m: Option<f64>,
    pub discarded: bool,
    /// Most readings of the window returned no echo: nothing in the beam.
    pub no_echo: bool,
    /// Times of the first and last in-range echo of the burst, kept even when
    /// the window is discarded; they place echo edges within a window.
    #[serde(default)]
    pub first_echo_t_s: Option<f64>,
    #[serde(default)]
    pub last_echo_t_s: Option<f64>,
}

impl FilteredSample {
    pub fn is_valid(&self) -> bool {
        !self.discarded
    }
}

/// `factor * measured + (1 - factor) * prev`.
pub fn ema_step(prev: f64, measured: f64, smoothing_factor: f64) -> f64 {
    smoothing_factor * measured + (1.0 - smoothing_factor) * prev
}

/// Result of range rejection on one burst.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierRejection {
    pub valid: Vec<f64>,
    pub removed: usize,
}

/// Removes no-echo markers and readings outside the sensor range.
pub fn reject_outliers(burst: &[Distance], cfg: &SensorConfig) -> OutlierRejection {
    let valid: Vec<f64> = burst
        .iter()
        .filter_map(|d| d.echo())
        .filter(|d| cfg.in_range(*d))
        .collect();
    OutlierRejection {
        removed: burst.len() - valid.len(),
        valid,
    }
}

/// True when `x` stands out from both neighbours by more than `threshold_frac`,
/// upwards or downwards.
pub fn is_peak(prev: f64, x: f64, next: f64, threshold_frac: f64) -> bool {
    let up = 1.0 + threshold_frac;
    let down = 1.0 - threshold_frac;
    (x > up * prev && x > up * next) || (x < down * prev && x < down * next)
}

/// Positions of `seq` that survive peak rejection. End points always survive.
pub fn peak_survivors(seq: &[f64], threshold_frac: f64) -> impl Iterator<Item = usize> + '_ {
    (0..seq.len()).filter(move |&i| {
        i == 0 || i + 1 == seq.len() || !is_peak(seq[i - 1], seq[i], seq[i + 1], threshold_frac)
    })
}

pub fn reject_peaks(seq: &[f64], threshold_frac: f64) -> Vec<f64> {
    peak_survivors(seq, threshold_frac)
        .map(|i| seq[i])
        .collect()
}

/// Median of `valid`, or `None` (discarded) with fewer than `min_valid` readings.
pub fn reduce_window(valid: &[f64], min_valid: usize) -> Option<f64> {
    if valid.is_empty() || valid.len() < min_valid {
        return None;
    }
    let mut v = valid.to_vec();
    v.sort_by(f64::total_cmp);
    Some(median_sorted(&v, |x| *x))
}

fn median_sorted<T>(sorted: &[T], key: impl Fn(&T) -> f64) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        key(&sorted[n / 2])
    } else {
        0.5 * (key(&sorted[n / 2 - 1]) + key(&sorted[n / 2]))
    }
}

/// Streaming filter for one sensor.
#[derive(Debug, Clone)]
pub struct FilterPipeline {
    sensor: SensorConfig,
    config: FilterConfig,
    ema: Option<f64>,
    held: f64,
    // (t, d) of in-range readings of the current burst
    scratch: Vec<(f64, f64)>,
    survivors: Vec<(f64, f64)>,
}

impl FilterPipeline {
    pub fn new(sensor: SensorConfig, config: FilterConfig) -> Result<Self> {
        sensor.validate()?;
        config.validate()?;
        Ok(Self {
            sensor,
            config,
            ema: None,
            held: sensor.range_max_m,
            scratch: Vec::with_capacity(sensor.burst_size),
            survivors: Vec::with_capacity(sensor.burst_size),
        })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    /// Scratch capacity; bounded by the burst size for any stream length.
    pub fn state_capacity(&self) -> usize {
        self.scratch.capacity() + self.survivors.capacity()
    }

    pub fn push_burst(&mut self, window_index: u64, burst: &[RangeSample]) -> FilteredSample {
        self.scratch.clear();
        self.survivors.clear();
        let mut no_echo_count = 0;
        for r in burst {
            match r.distance {
                Distance::Echo(d) if self.sensor.in_range(d) => self.scratch.push((r.t_s, d)),
                Distance::Echo(_) => {}
                Distance::NoEcho => no_echo_count += 1,
            }
        }
        let thr = self.config.peak_threshold_frac;
        let n = self.scratch.len();
        for i in 0..n {
            let keep = i == 0
                || i + 1 == n
                || !is_peak(
                    self.scratch[i - 1].1,
                    self.scratch[i].1,
                    self.scratch[i + 1].1,
                    thr,
                );
            if keep {
                self.survivors.push(self.scratch[i]);
            }
        }

        let center_t = if burst.is_empty() {
            0.0
        } else {
            burst.iter().map(|r| r.t_s).sum::<f64>() / burst.len() as f64
        };
        let first_echo_t_s = self.scratch.first().map(|p| p.0);
        let last_echo_t_s = self.scratch.last().map(|p| p.0);
        let min_valid = self.config.min_valid_per_window.max(1);
        let no_echo = no_echo_count > burst.len().saturating_sub(min_valid);

        if self.survivors.len() < min_valid {
            if no_echo {
                // empty road: the next echo starts a fresh smoothing run
                self.ema = None;
            }
            return FilteredSample {
                window_index,
                t_s: center_t,
                value_m: self.held,
                reduced_m: None,
                discarded: true,
                no_echo,
                first_echo_t_s,
                last_echo_t_s,
            };
        }

        // stable sort keeps time order among equal distances
        self.survivors.sort_by(|a, b| a.1.total_cmp(&b.1));
        let reduced = median_sorted(&self.survivors, |p| p.1);
        let t = median_sorted(&self.survivors, |p| p.0);
        let value = match self.ema {
            None => reduced,
            Some(prev) => ema_step(prev, reduced, self.config.smoothing_factor),
        };
        self.ema = Some(value);
        self.held = value;
        FilteredSample {
            window_index,
            t_s: t,
            value_m: value,
            reduced_m: Some(reduced),
            discarded: false,
            no_echo: false,
            first_echo_t_s,
            last_echo_t_s,
        }
    }
}

/// Runs a whole reading stream through a fresh [`FilterPipeline`].
pub fn filter_stream(
    samples: &[RangeSample],
    fcfg: &FilterConfig,
    scfg: &SensorConfig,
) -> Result<Vec<FilteredSample>> {
    let mut pipeline = FilterPipeline::new(*scfg, *fcfg)?;
    Ok(bursts(samples)
        .map(|b| pipeline.push_burst(b[0].window_index, b))
        .collect())
}
