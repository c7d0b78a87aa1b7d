//! CSV ingestion and serialization for imbalance, bid and price files.
//!
//! Lines starting with `#` are treated as comments so files produced by the
//! command-line tool (which prepend a metadata line) load unchanged.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};

use super::{
    format_minute, is_isp_aligned, Bid, BidLadder, DataError, Direction, PriceSeries, Product,
    Result, SystemImbalanceSeries, ISP_MINUTES,
};

const SI_HEADER: [&str; 2] = ["timestamp", "si_mw"];
const PRICE_HEADER: [&str; 2] = ["timestamp", "price_eur_mwh"];
const BID_HEADER: [&str; 6] = [
    "window_start",
    "product",
    "direction",
    "price_eur_mwh",
    "capacity_mw",
    "bid_id",
];

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn csv_error(err: csv::Error) -> DataError {
    let line = err.position().map(|p| p.line() as usize).unwrap_or(0);
    DataError::parse(line, err.to_string())
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers().map_err(csv_error)?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(DataError::parse(
            1,
            format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(())
}

pub(crate) fn parse_timestamp(raw: &str, line: usize) -> Result<DateTime<Utc>> {
    if let Ok(ts) = DateTime::parse_from_rfc3339(raw) {
        let ts = ts.with_timezone(&Utc);
        if ts.timestamp() % 60 != 0 || ts.timestamp_subsec_nanos() != 0 {
            return Err(DataError::parse(line, format!("timestamp {raw} is not on a whole minute")));
        }
        return Ok(ts);
    }
    NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%MZ")
        .map(|naive| naive.and_utc())
        .map_err(|_| DataError::parse(line, format!("invalid ISO-8601 UTC timestamp `{raw}`")))
}

fn parse_f64(raw: &str, what: &str, line: usize) -> Result<f64> {
    let value: f64 = raw
        .parse()
        .map_err(|_| DataError::parse(line, format!("invalid {what} `{raw}`")))?;
    if !value.is_finite() {
        return Err(DataError::parse(line, format!("non-finite {what}")));
    }
    Ok(value)
}

/// Reads `timestamp,<value>` rows and enforces a gap-free minute grid.
fn read_minute_series<R: Read>(
    input: R,
    header: &[&str],
    require_isp_alignment: bool,
) -> Result<(DateTime<Utc>, Vec<f64>)> {
    let mut rdr = reader(input);
    check_header(&mut rdr, header)?;
    let mut start = None;
    let mut previous: Option<DateTime<Utc>> = None;
    let mut values = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let ts = parse_timestamp(&record[0], line)?;
        let value = parse_f64(&record[1], header[1], line)?;
        match previous {
            None => {
                if require_isp_alignment && !is_isp_aligned(ts) {
                    return Err(DataError::MisalignedStart(format_minute(ts)));
                }
                start = Some(ts);
            }
            Some(prev) => {
                let expected = prev + chrono::Duration::minutes(1);
                if ts > expected {
                    return Err(DataError::MissingMinute {
                        expected: format_minute(expected),
                        found: format_minute(ts),
                    });
                }
                if ts < expected {
                    return Err(DataError::parse(
                        line,
                        format!("timestamp {} is not strictly increasing", format_minute(ts)),
                    ));
                }
            }
        }
        previous = Some(ts);
        values.push(value);
    }
    let start = start.ok_or_else(|| DataError::Empty("no data rows".into()))?;
    Ok((start, values))
}

pub fn read_si_series<R: Read>(input: R) -> Result<SystemImbalanceSeries> {
    let (start, values) = read_minute_series(input, &SI_HEADER, true)?;
    SystemImbalanceSeries::new(start, values)
}

/// Loads a per-minute system imbalance CSV (`timestamp,si_mw`).
pub fn load_si_series(path: impl AsRef<Path>) -> Result<SystemImbalanceSeries> {
    read_si_series(open(path.as_ref())?)
}

pub fn read_price_series<R: Read>(input: R) -> Result<PriceSeries> {
    let (start, values) = read_minute_series(input, &PRICE_HEADER, false)?;
    PriceSeries::new(start, values)
}

/// Loads a per-minute price CSV (`timestamp,price_eur_mwh`).
pub fn load_price_series(path: impl AsRef<Path>) -> Result<PriceSeries> {
    read_price_series(open(path.as_ref())?)
}

fn parse_product(raw: &str, line: usize) -> Result<Product> {
    match raw.to_ascii_uppercase().as_str() {
        "AFRR" => Ok(Product::Afrr),
        "MFRR" => Ok(Product::Mfrr),
        _ => Err(DataError::parse(line, format!("unknown product `{raw}`"))),
    }
}

fn parse_direction(raw: &str, line: usize) -> Result<Direction> {
    match raw.to_ascii_uppercase().as_str() {
        "UP" => Ok(Direction::Up),
        "DOWN" => Ok(Direction::Down),
        _ => Err(DataError::parse(line, format!("unknown direction `{raw}`"))),
    }
}

/// Reads bid rows. Rows sharing a `window_start` form one ladder valid for
/// one settlement period; each window must appear as one contiguous block
/// and windows may not overlap.
pub fn read_bid_ladders<R: Read>(input: R) -> Result<Vec<BidLadder>> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &BID_HEADER)?;
    let mut blocks: Vec<(DateTime<Utc>, Vec<Bid>)> = Vec::new();
    let mut starts = BTreeSet::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let window = parse_timestamp(&record[0], line)?;
        let bid = Bid {
            product: parse_product(&record[1], line)?,
            direction: parse_direction(&record[2], line)?,
            price: parse_f64(&record[3], "price", line)?,
            capacity: parse_f64(&record[4], "capacity", line)?,
            id: record[5].to_string(),
        };
        if bid.id.is_empty() {
            return Err(DataError::parse(line, "empty bid id"));
        }
        if bid.capacity <= 0.0 {
            return Err(DataError::NegativeCapacity {
                bid_id: bid.id,
                capacity: bid.capacity,
            });
        }
        match blocks.last_mut() {
            Some((current, bids)) if *current == window => bids.push(bid),
            _ => {
                if !is_isp_aligned(window) {
                    return Err(DataError::MisalignedStart(format_minute(window)));
                }
                let span = chrono::Duration::minutes(ISP_MINUTES as i64 - 1);
                if starts.range(window - span..=window + span).next().is_some() {
                    return Err(DataError::OverlappingWindows(format_minute(window)));
                }
                starts.insert(window);
                blocks.push((window, vec![bid]));
            }
        }
    }
    let mut ladders = blocks
        .into_iter()
        .map(|(start, bids)| BidLadder::new(start, bids))
        .collect::<Result<Vec<_>>>()?;
    ladders.sort_by_key(|l| l.window_start());
    Ok(ladders)
}

/// Loads a bid CSV
/// (`window_start,product,direction,price_eur_mwh,capacity_mw,bid_id`).
pub fn load_bid_ladders(path: impl AsRef<Path>) -> Result<Vec<BidLadder>> {
    read_bid_ladders(open(path.as_ref())?)
}

fn io_err(err: std::io::Error) -> DataError {
    DataError::Io {
        path: "<writer>".into(),
        source: err,
    }
}

fn csv_write_err(err: csv::Error) -> DataError {
    match err.into_kind() {
        csv::ErrorKind::Io(e) => io_err(e),
        other => DataError::parse(0, format!("{other:?}")),
    }
}

fn write_minute_series<W: Write>(
    out: W,
    header: &[&str],
    start: DateTime<Utc>,
    values: &[f64],
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(header).map_err(csv_write_err)?;
    for (i, v) in values.iter().enumerate() {
        let ts = start + chrono::Duration::minutes(i as i64);
        wtr.write_record([format_minute(ts), v.to_string()])
            .map_err(csv_write_err)?;
    }
    wtr.flush().map_err(io_err)
}

pub fn write_si_series<W: Write>(out: W, series: &SystemImbalanceSeries) -> Result<()> {
    write_minute_series(out, &SI_HEADER, series.start(), series.values())
}

pub fn write_price_series<W: Write>(out: W, series: &PriceSeries) -> Result<()> {
    write_minute_series(out, &PRICE_HEADER, series.start(), series.values())
}

/// Writes ladders in window order, groups in (aFRR up, aFRR down, mFRR up,
/// mFRR down) order and bids in merit order.
pub fn write_bid_ladders<W: Write>(out: W, ladders: &[BidLadder]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(BID_HEADER).map_err(csv_write_err)?;
    for ladder in ladders {
        let window = format_minute(ladder.window_start());
        for bid in ladder.bids() {
            wtr.write_record([
                window.as_str(),
                bid.product.as_str(),
                bid.direction.as_str(),
                &bid.price.to_string(),
                &bid.capacity.to_string(),
                &bid.id,
            ])
            .map_err(csv_write_err)?;
        }
    }
    wtr.flush().map_err(io_err)
}
