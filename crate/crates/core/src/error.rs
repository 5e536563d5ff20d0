use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The beam never rests on the vehicle side within the sensor range.
    #[error("vehicle side is not observable for this sensor geometry")]
    Unobservable,

    #[error("segment has {have} members, at least {need} required")]
    InsufficientSegment { have: usize, need: usize },

    #[error("window {index} +/- {radius} falls outside a stream of {len} windows")]
    OutOfBounds {
        index: usize,
        radius: usize,
        len: usize,
    },

    /// The slope pattern never completed a front/side/end sequence.
    #[error("incomplete pass: {0}")]
    IncompletePass(&'static str),

    #[error("beam angle {0} deg is perpendicular to the road; speed is not measurable")]
    DegenerateAngle(f64),

    #[error("speed segment has {have} usable windows, at least 2 required")]
    SegmentTooShort { have: usize },

    #[error("side end precedes side start (dwell {dwell_s} s)")]
    NegativeDwell { dwell_s: f64 },

    #[error("no speed reports to fuse")]
    NoReports,

    #[error("no dwell report available for pass {0}")]
    MissingDwell(u64),
}

impl Error {
    /// Stable machine-readable code, used in CLI error reports and
    /// per-pass exclusion counts.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "INVALID_CONFIG",
            Error::Unobservable => "UNOBSERVABLE",
            Error::InsufficientSegment { .. } => "INSUFFICIENT_SEGMENT",
            Error::OutOfBounds { .. } => "OUT_OF_BOUNDS",
            Error::IncompletePass(_) => "INCOMPLETE_PASS",
            Error::DegenerateAngle(_) => "DEGENERATE_ANGLE",
            Error::SegmentTooShort { .. } => "SEGMENT_TOO_SHORT",
            Error::NegativeDwell { .. } => "NEGATIVE_DWELL",
            Error::NoReports => "NO_REPORTS",
            Error::MissingDwell(_) => "MISSING_DWELL",
        }
    }
}
