//! Exogenous market inputs: system imbalance, balancing energy bids and
//! minute-level price series.
//!
//! Sign convention used throughout the crate: a positive system imbalance
//! is a surplus in the system, which is resolved with downward reserves.

mod io;
mod synth;

use std::fmt;

use chrono::{DateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{
    load_bid_ladders, load_price_series, load_si_series, read_bid_ladders, read_price_series,
    read_si_series, write_bid_ladders, write_price_series, write_si_series,
};
pub use synth::{generate_synthetic, SynthParams};

/// Parses a whole-minute UTC timestamp such as `2023-01-01T00:15:00Z`.
pub fn parse_minute(raw: &str) -> Result<DateTime<Utc>> {
    io::parse_timestamp(raw.trim(), 0)
}

/// Minutes in one imbalance settlement period.
pub const ISP_MINUTES: usize = 15;
/// Hours in one simulation step.
pub const MINUTE_HOURS: f64 = 1.0 / 60.0;
/// Hours in one imbalance settlement period.
pub const ISP_HOURS: f64 = 0.25;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing minute: expected {expected}, found {found}")]
    MissingMinute { expected: String, found: String },
    #[error("series does not start on a settlement period boundary: {0}")]
    MisalignedStart(String),
    #[error("series length {0} is not a whole number of settlement periods")]
    IncompletePeriod(usize),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("bid {bid_id} has non-positive capacity {capacity} MW")]
    NegativeCapacity { bid_id: String, capacity: f64 },
    #[error("bid {bid_id} has a non-finite price")]
    NonFinitePrice { bid_id: String },
    #[error("bid id {bid_id} appears twice in the window starting {window}")]
    DuplicateBid { bid_id: String, window: String },
    #[error("bid ladder windows overlap at {0}")]
    OverlappingWindows(String),
    #[error("invalid synthetic parameters: {0}")]
    InvalidParams(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl DataError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        DataError::Parse {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Product {
    Afrr,
    Mfrr,
}

impl Product {
    pub fn as_str(self) -> &'static str {
        match self {
            Product::Afrr => "AFRR",
            Product::Mfrr => "MFRR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "UP",
            Direction::Down => "DOWN",
        }
    }
}

/// One of the four (product, direction) bid groups of a ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BidGroup {
    AfrrUp,
    AfrrDown,
    MfrrUp,
    MfrrDown,
}

impl BidGroup {
    pub const ALL: [BidGroup; 4] = [
        BidGroup::AfrrUp,
        BidGroup::AfrrDown,
        BidGroup::MfrrUp,
        BidGroup::MfrrDown,
    ];

    pub fn new(product: Product, direction: Direction) -> Self {
        match (product, direction) {
            (Product::Afrr, Direction::Up) => BidGroup::AfrrUp,
            (Product::Afrr, Direction::Down) => BidGroup::AfrrDown,
            (Product::Mfrr, Direction::Up) => BidGroup::MfrrUp,
            (Product::Mfrr, Direction::Down) => BidGroup::MfrrDown,
        }
    }

    pub fn product(self) -> Product {
        match self {
            BidGroup::AfrrUp | BidGroup::AfrrDown => Product::Afrr,
            BidGroup::MfrrUp | BidGroup::MfrrDown => Product::Mfrr,
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            BidGroup::AfrrUp | BidGroup::MfrrUp => Direction::Up,
            BidGroup::AfrrDown | BidGroup::MfrrDown => Direction::Down,
        }
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

/// A balancing energy bid. Capacity is in MW, price in EUR/MWh.
#[derive(Debug, Clone, PartialEq)]
pub struct Bid {
    pub id: String,
    pub product: Product,
    pub direction: Direction,
    pub price: f64,
    pub capacity: f64,
}

impl Bid {
    pub fn new(
        id: impl Into<String>,
        product: Product,
        direction: Direction,
        price: f64,
        capacity: f64,
    ) -> Self {
        Bid {
            id: id.into(),
            product,
            direction,
            price,
            capacity,
        }
    }

    pub fn group(&self) -> BidGroup {
        BidGroup::new(self.product, self.direction)
    }
}

/// Bids valid over a half-open window of minutes, grouped by product and
/// direction and kept in merit order: upward groups by ascending price,
/// downward groups by descending price, ties broken by bid id.
#[derive(Debug, Clone, PartialEq)]
pub struct BidLadder {
    window_start: DateTime<Utc>,
    window_minutes: usize,
    groups: [Vec<Bid>; 4],
    caps: [f64; 4],
}

impl BidLadder {
    /// Builds a ladder valid for one settlement period starting at `window_start`.
    pub fn new(window_start: DateTime<Utc>, bids: Vec<Bid>) -> Result<Self> {
        Self::with_window(window_start, ISP_MINUTES, bids)
    }

    pub fn with_window(
        window_start: DateTime<Utc>,
        window_minutes: usize,
        bids: Vec<Bid>,
    ) -> Result<Self> {
        let mut groups: [Vec<Bid>; 4] = Default::default();
        let mut seen = std::collections::HashSet::new();
        for bid in bids {
            if !(bid.capacity > 0.0) || !bid.capacity.is_finite() {
                return Err(DataError::NegativeCapacity {
                    bid_id: bid.id,
                    capacity: bid.capacity,
                });
            }
            if !bid.price.is_finite() {
                return Err(DataError::NonFinitePrice { bid_id: bid.id });
            }
            if !seen.insert(bid.id.clone()) {
                return Err(DataError::DuplicateBid {
                    bid_id: bid.id,
                    window: format_minute(window_start),
                });
            }
            groups[bid.group().index()].push(bid);
        }
        for group in BidGroup::ALL {
            let bids = &mut groups[group.index()];
            match group.direction() {
                Direction::Up => bids.sort_by(|a, b| {
                    a.price.total_cmp(&b.price).then_with(|| a.id.cmp(&b.id))
                }),
                Direction::Down => bids.sort_by(|a, b| {
                    b.price.total_cmp(&a.price).then_with(|| a.id.cmp(&b.id))
                }),
            }
        }
        let caps = std::array::from_fn(|i| groups[i].iter().map(|b| b.capacity).sum());
        Ok(BidLadder {
            window_start,
            window_minutes,
            groups,
            caps,
        })
    }

    pub fn window_start(&self) -> DateTime<Utc> {
        self.window_start
    }

    pub fn window_minutes(&self) -> usize {
        self.window_minutes
    }

    pub fn window_end(&self) -> DateTime<Utc> {
        self.window_start + chrono::Duration::minutes(self.window_minutes as i64)
    }

    pub fn contains(&self, at: DateTime<Utc>) -> bool {
        at >= self.window_start && at < self.window_end()
    }

    /// Bids of one group in merit order.
    pub fn group(&self, group: BidGroup) -> &[Bid] {
        &self.groups[group.index()]
    }

    /// Total offered capacity of one group (MW).
    pub fn cap(&self, group: BidGroup) -> f64 {
        self.caps[group.index()]
    }

    pub fn bids(&self) -> impl Iterator<Item = &Bid> {
        self.groups.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cheapest available bid price in a direction across both products:
    /// lowest upward price, highest downward price.
    pub fn value_of_additional_activation(&self, direction: Direction) -> Option<f64> {
        let (afrr, mfrr) = match direction {
            Direction::Up => (BidGroup::AfrrUp, BidGroup::MfrrUp),
            Direction::Down => (BidGroup::AfrrDown, BidGroup::MfrrDown),
        };
        let firsts = [self.group(afrr).first(), self.group(mfrr).first()];
        let prices = firsts.into_iter().flatten().map(|b| b.price);
        match direction {
            Direction::Up => prices.reduce(f64::min),
            Direction::Down => prices.reduce(f64::max),
        }
    }
}

/// Per-minute system imbalance (MW) starting at a settlement-period boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemImbalanceSeries {
    start: DateTime<Utc>,
    values: Vec<f64>,
}

impl SystemImbalanceSeries {
    pub fn new(start: DateTime<Utc>, values: Vec<f64>) -> Result<Self> {
        if !is_isp_aligned(start) {
            return Err(DataError::MisalignedStart(format_minute(start)));
        }
        if !values.len().is_multiple_of(ISP_MINUTES) {
            return Err(DataError::IncompletePeriod(values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::parse(i + 2, "non-finite imbalance value"));
        }
        Ok(SystemImbalanceSeries { start, values })
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn isp_count(&self) -> usize {
        self.values.len() / ISP_MINUTES
    }

    pub fn timestamp(&self, minute: usize) -> DateTime<Utc> {
        self.start + chrono::Duration::minutes(minute as i64)
    }

    /// Restricts the series to whole settlement periods `[first_isp, first_isp + count)`.
    pub fn slice_isps(&self, first_isp: usize, count: usize) -> Self {
        let from = (first_isp * ISP_MINUTES).min(self.values.len());
        let to = ((first_isp + count) * ISP_MINUTES).min(self.values.len());
        SystemImbalanceSeries {
            start: self.timestamp(from),
            values: self.values[from..to].to_vec(),
        }
    }
}

/// Per-minute price series (EUR/MWh), e.g. historical intermediate prices.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    start: DateTime<Utc>,
    values: Vec<f64>,
}

impl PriceSeries {
    pub fn new(start: DateTime<Utc>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(DataError::Empty("price series".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::parse(i + 2, "non-finite price"));
        }
        Ok(PriceSeries { start, values })
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, minute: usize) -> DateTime<Utc> {
        self.start + chrono::Duration::minutes(minute as i64)
    }
}

/// Position of a minute inside the settlement-period grid. `minute_in_isp` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MinuteIndex {
    pub isp: usize,
    pub minute_in_isp: usize,
}

impl MinuteIndex {
    pub fn from_absolute(minute: usize) -> Self {
        MinuteIndex {
            isp: minute / ISP_MINUTES,
            minute_in_isp: minute % ISP_MINUTES + 1,
        }
    }

    pub fn absolute(self) -> usize {
        self.isp * ISP_MINUTES + self.minute_in_isp - 1
    }

    pub fn is_last(self) -> bool {
        self.minute_in_isp == ISP_MINUTES
    }
}

impl fmt::Display for MinuteIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ISP {} minute {}", self.isp, self.minute_in_isp)
    }
}

pub(crate) fn is_isp_aligned(at: DateTime<Utc>) -> bool {
    at.second() == 0 && at.nanosecond() == 0 && (at.minute() as usize).is_multiple_of(ISP_MINUTES)
}

pub(crate) fn format_minute(at: DateTime<Utc>) -> String {
    at.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}
