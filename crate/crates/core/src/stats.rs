//! Small online statistics used by the detector and the estimator.

use serde::{Deserialize, Serialize};

/// Welford running mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Welford {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample standard deviation; zero below two members.
    pub fn std_dev(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            libm::sqrt((self.m2 / (self.count - 1) as f64).max(0.0))
        }
    }
}

/// Incremental ordinary least squares for `y = intercept + slope * x`.
///
/// Sums are kept relative to the first `x` to avoid cancellation with large
/// timestamps.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LineFit {
    n: usize,
    x0: f64,
    sx: f64,
    sy: f64,
    sxx: f64,
    sxy: f64,
    syy: f64,
}

/// Fitted line with residual statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
    pub n: usize,
    /// Sum of squared deviations of `x` from its mean.
    pub sxx: f64,
    /// Residual sum of squares.
    pub ssr: f64,
}

impl Line {
    pub fn at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }

    /// `x` where the line reaches `y`.
    pub fn solve(&self, y: f64) -> f64 {
        (y - self.intercept) / self.slope
    }

    /// Standard error of the slope from residuals, `None` without spare
    /// degrees of freedom.
    pub fn slope_stderr(&self) -> Option<f64> {
        (self.n > 2 && self.sxx > 0.0)
            .then(|| libm::sqrt(self.ssr / (self.n - 2) as f64 / self.sxx))
    }
}

impl LineFit {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64, y: f64) {
        if self.n == 0 {
            self.x0 = x;
        }
        let u = x - self.x0;
        self.n += 1;
        self.sx += u;
        self.sy += y;
        self.sxx += u * u;
        self.sxy += u * y;
        self.syy += y * y;
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Current fit; `None` with fewer than two distinct `x`.
    pub fn line(&self) -> Option<Line> {
        if self.n < 2 {
            return None;
        }
        let n = self.n as f64;
        let cxx = self.sxx - self.sx * self.sx / n;
        if !(cxx > 0.0) {
            return None;
        }
        let cxy = self.sxy - self.sx * self.sy / n;
        let cyy = self.syy - self.sy * self.sy / n;
        let slope = cxy / cxx;
        let intercept_u = (self.sy - slope * self.sx) / n;
        Some(Line {
            slope,
            intercept: intercept_u - slope * self.x0,
            n: self.n,
            sxx: cxx,
            ssr: (cyy - slope * cxy).max(0.0),
        })
    }
}

impl FromIterator<(f64, f64)> for LineFit {
    fn from_iter<I: IntoIterator<Item = (f64, f64)>>(iter: I) -> Self {
        let mut fit = LineFit::new();
        for (x, y) in iter {
            fit.push(x, y);
        }
        fit
    }
}
