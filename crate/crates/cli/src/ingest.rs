//! Point catalogues, daily count series and population tables.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, Utc};
use spatinla_core::geometry::Point;
use thiserror::Error;

use crate::config::DateWindow;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("unparseable rows at lines {lines:?}: {first}")]
    BadRows { lines: Vec<u64>, first: String },
    #[error("unknown region id `{id}` at line {line}")]
    UnknownRegion { id: String, line: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub lon: f64,
    pub lat: f64,
    pub mag: f64,
    pub time: DateTime<Utc>,
}

impl Event {
    pub fn point(&self) -> Point {
        Point::new(self.lon, self.lat)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCatalog {
    pub events: Vec<Event>,
    /// Rows read before the magnitude filter.
    pub read: usize,
}

impl PointCatalog {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn points(&self) -> Vec<Point> {
        self.events.iter().map(Event::point).collect()
    }
}

/// ISO-8601 timestamps: RFC 3339, a naive date-time taken as UTC, or a date.
pub fn parse_time(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|t| t.and_utc())
}

fn columns<const N: usize>(headers: &csv::StringRecord, names: [&'static str; N]) -> Result<[usize; N], IngestError> {
    let mut out = [0; N];
    for (slot, name) in out.iter_mut().zip(names) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or(IngestError::MissingColumn(name))?;
    }
    Ok(out)
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

/// Reads `lon,lat,mag,time` rows and keeps those with `mag > threshold`.
/// Every unparseable row is reported by line number.
pub fn ingest_points<R: Read>(reader: R, magnitude_threshold: f64) -> Result<PointCatalog, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        log::warn!("point catalogue is empty");
        return Ok(PointCatalog::default());
    }
    let [lon, lat, mag, time] = columns(&headers, ["lon", "lat", "mag", "time"])?;
    let mut cat = PointCatalog::default();
    let mut bad = Vec::new();
    let mut first = None;
    for rec in rdr.records() {
        let rec = rec?;
        let num = |k: usize| rec.get(k).and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite());
        let parsed = match (num(lon), num(lat), num(mag), rec.get(time).and_then(parse_time)) {
            (Some(lon), Some(lat), Some(mag), Some(time)) if mag >= 0.0 => Ok(Event { lon, lat, mag, time }),
            _ => Err(format!("line {}: `{}`", line_of(&rec), rec.iter().collect::<Vec<_>>().join(","))),
        };
        match parsed {
            Ok(e) => {
                cat.read += 1;
                if e.mag > magnitude_threshold {
                    cat.events.push(e);
                }
            }
            Err(msg) => {
                bad.push(line_of(&rec));
                first.get_or_insert(msg);
            }
        }
    }
    if !bad.is_empty() {
        return Err(IngestError::BadRows {
            lines: bad,
            first: first.unwrap_or_default(),
        });
    }
    if cat.read == 0 {
        log::warn!("point catalogue is empty");
    }
    log::info!("kept {} of {} events with magnitude > {magnitude_threshold}", cat.len(), cat.read);
    Ok(cat)
}

/// Writes a catalogue that [`ingest_points`] reads back exactly.
pub fn write_points<W: Write>(w: W, events: &[Event]) -> Result<(), IngestError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["lon", "lat", "mag", "time"])?;
    for e in events {
        wr.write_record([
            e.lon.to_string(),
            e.lat.to_string(),
            e.mag.to_string(),
            e.time.to_rfc3339_opts(SecondsFormat::AutoSi, true),
        ])?;
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountRecord {
    pub region: usize,
    pub date: NaiveDate,
    pub count: u64,
}

/// Daily counts with regions resolved to indices into the polygon table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CountSeries {
    pub records: Vec<CountRecord>,
}

fn index_of(ids: &[String]) -> BTreeMap<&str, usize> {
    ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
}

/// Reads `region_id,date,count`; every id must be one of `region_ids`.
pub fn ingest_counts<R: Read>(reader: R, region_ids: &[String]) -> Result<CountSeries, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        log::warn!("count series is empty");
        return Ok(CountSeries::default());
    }
    let [id, date, count] = columns(&headers, ["region_id", "date", "count"])?;
    let index = index_of(region_ids);
    let mut out = CountSeries::default();
    let mut bad = Vec::new();
    let mut first = None;
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let key = rec.get(id).unwrap_or_default();
        let Some(&region) = index.get(key) else {
            return Err(IngestError::UnknownRegion { id: key.to_string(), line });
        };
        let d = rec.get(date).and_then(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok());
        let c = rec.get(count).and_then(|s| s.parse::<u64>().ok());
        match (d, c) {
            (Some(date), Some(count)) => out.records.push(CountRecord { region, date, count }),
            _ => {
                bad.push(line);
                first.get_or_insert(format!("line {line}: `{}`", rec.iter().collect::<Vec<_>>().join(",")));
            }
        }
    }
    if !bad.is_empty() {
        return Err(IngestError::BadRows {
            lines: bad,
            first: first.unwrap_or_default(),
        });
    }
    if out.records.is_empty() {
        log::warn!("count series is empty");
    }
    Ok(out)
}

/// Reads `region_id,population` into region order.
pub fn ingest_population<R: Read>(reader: R, region_ids: &[String]) -> Result<Vec<f64>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let [id, pop] = columns(&headers, ["region_id", "population"])?;
    let index = index_of(region_ids);
    let mut out = vec![f64::NAN; region_ids.len()];
    let mut bad = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let key = rec.get(id).unwrap_or_default();
        let Some(&region) = index.get(key) else {
            return Err(IngestError::UnknownRegion { id: key.to_string(), line });
        };
        match rec.get(pop).and_then(|s| s.parse::<f64>().ok()) {
            Some(p) if p >= 0.0 && p.is_finite() => out[region] = p,
            _ => bad.push(line),
        }
    }
    if !bad.is_empty() {
        return Err(IngestError::BadRows {
            lines: bad,
            first: "population must be a non-negative number".into(),
        });
    }
    if let Some(i) = out.iter().position(|p| p.is_nan()) {
        return Err(IngestError::BadRows {
            lines: Vec::new(),
            first: format!("no population for region `{}`", region_ids[i]),
        });
    }
    Ok(out)
}

/// Region totals per window, plus the counts dated outside every window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTotals {
    pub totals: Vec<Vec<u64>>,
    pub dropped: u64,
}

/// Sums counts over closed date windows; windows must not overlap.
pub fn aggregate_counts(series: &CountSeries, n_regions: usize, windows: &[DateWindow]) -> WindowTotals {
    let mut totals = vec![vec![0u64; n_regions]; windows.len()];
    let mut dropped = 0;
    for r in &series.records {
        match windows.iter().position(|w| w.contains(r.date)) {
            Some(k) => totals[k][r.region] += r.count,
            None => dropped += r.count,
        }
    }
    WindowTotals { totals, dropped }
}
