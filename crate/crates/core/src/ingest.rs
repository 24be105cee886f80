// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Parsing and validation of the three input files.
//!
//! Row-level problems in the CDR and top-up files are counted per reason and
//! the row is dropped; a file where more than half of the rows are rejected is
//! treated as the wrong file and aborts. The tower registry is small and
//! curated, so any defect in it is fatal.

use std::borrow::Borrow;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CDR_HEADER: [&str; 6] = [
    "timestamp",
    "caller_id",
    "callee_id",
    "tower_id",
    "kind",
    "duration_s",
];
pub const TOPUP_HEADER: [&str; 3] = ["timestamp", "user_id", "amount_minor"];
pub const TOWER_HEADER: [&str; 3] = ["tower_id", "lat", "lon"];

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

/// Windows are limited so that per-pair month coverage fits in a `u128` mask.
pub const MAX_WINDOW_MONTHS: usize = 128;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(s)
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// Opaque subscriber identifier.
    UserId
);
string_id!(
    /// Opaque cell tower identifier.
    TowerId
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Call,
    Sms,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Call => "CALL",
            EventKind::Sms => "SMS",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "CALL" => Some(EventKind::Call),
            "SMS" => Some(EventKind::Sms),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CdrRecord {
    pub timestamp: DateTime<Utc>,
    pub caller: UserId,
    pub callee: UserId,
    /// Tower used by the initiator.
    pub tower: TowerId,
    pub kind: EventKind,
    pub duration_s: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TopUpRecord {
    pub timestamp: DateTime<Utc>,
    pub user: UserId,
    pub amount_minor: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TowerInfo {
    pub id: TowerId,
    pub lat: f64,
    pub lon: f64,
}

/// Tower registry keyed and iterated by tower id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TowerRegistry {
    towers: BTreeMap<TowerId, TowerInfo>,
}

impl TowerRegistry {
    pub fn from_towers(towers: impl IntoIterator<Item = TowerInfo>) -> Result<Self> {
        let mut registry = TowerRegistry::default();
        for tower in towers {
            check_coordinates(&tower).map_err(Error::InvalidInput)?;
            if registry.towers.contains_key(&tower.id) {
                return Err(Error::InvalidInput(format!(
                    "duplicate tower_id {}",
                    tower.id
                )));
            }
            registry.towers.insert(tower.id.clone(), tower);
        }
        Ok(registry)
    }

    pub fn get(&self, id: &str) -> Option<&TowerInfo> {
        self.towers.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &TowerInfo> {
        self.towers.values()
    }

    pub fn len(&self) -> usize {
        self.towers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.towers.is_empty()
    }
}

/// A calendar month, UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidInput(format!("month {month} out of range")));
        }
        Ok(YearMonth { year, month })
    }

    pub fn of(ts: DateTime<Utc>) -> Self {
        YearMonth {
            year: ts.year(),
            month: ts.month(),
        }
    }

    pub fn next(self) -> Self {
        if self.month == 12 {
            YearMonth {
                year: self.year + 1,
                month: 1,
            }
        } else {
            YearMonth {
                year: self.year,
                month: self.month + 1,
            }
        }
    }

    pub fn start(self) -> DateTime<Utc> {
        NaiveDate::from_ymd_opt(self.year, self.month, 1)
            .expect("validated month")
            .and_hms_opt(0, 0, 0)
            .expect("midnight")
            .and_utc()
    }

    /// Parses `YYYY-MM`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("expected YYYY-MM, got `{s}`"));
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        YearMonth::new(year, month)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

/// Half-open interval `[start, end)` together with the calendar months it
/// touches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationWindow {
    start: DateTime<Utc>,
    end: DateTime<Utc>,
    months: Vec<YearMonth>,
}

impl ObservationWindow {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self> {
        if start >= end {
            return Err(Error::InvalidInput(format!(
                "observation window start {start} is not before end {end}"
            )));
        }
        let last = YearMonth::of(end - chrono::Duration::seconds(1));
        let mut months = vec![YearMonth::of(start)];
        while *months.last().unwrap() < last {
            let next = months.last().unwrap().next();
            months.push(next);
            if months.len() > MAX_WINDOW_MONTHS {
                return Err(Error::InvalidInput(format!(
                    "observation window spans more than {MAX_WINDOW_MONTHS} months"
                )));
            }
        }
        Ok(ObservationWindow { start, end, months })
    }

    /// The window covering `n_months` whole calendar months from `first`.
    pub fn from_months(first: YearMonth, n_months: usize) -> Result<Self> {
        if n_months == 0 {
            return Err(Error::InvalidInput(
                "observation window has no months".into(),
            ));
        }
        let mut end = first;
        for _ in 0..n_months {
            end = end.next();
        }
        ObservationWindow::new(first.start(), end.start())
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn end(&self) -> DateTime<Utc> {
        self.end
    }

    pub fn months(&self) -> &[YearMonth] {
        &self.months
    }

    pub fn n_months(&self) -> usize {
        self.months.len()
    }

    pub fn contains(&self, ts: DateTime<Utc>) -> bool {
        self.start <= ts && ts < self.end
    }

    /// Position of the calendar month of `ts` inside the window.
    pub fn month_index(&self, ts: DateTime<Utc>) -> Option<usize> {
        if !self.contains(ts) {
            return None;
        }
        let ym = YearMonth::of(ts);
        let first = self.months[0];
        let idx = (ym.year - first.year) * 12 + ym.month as i32 - first.month as i32;
        usize::try_from(idx).ok()
    }
}

pub fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .ok()
        .map(|t| t.and_utc())
}

/// Per-reason counts of rejected rows for one input file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RejectionReport {
    pub total_rows: usize,
    pub reasons: BTreeMap<String, usize>,
}

impl RejectionReport {
    pub fn rejected(&self) -> usize {
        self.reasons.values().sum()
    }

    pub fn retained(&self) -> usize {
        self.total_rows - self.rejected()
    }

    pub fn count(&self, reason: &str) -> usize {
        self.reasons.get(reason).copied().unwrap_or(0)
    }

    fn reject(&mut self, reason: &str) {
        *self.reasons.entry(reason.to_owned()).or_default() += 1;
    }

    /// `reason,count` lines followed by the totals.
    pub fn to_text(&self) -> String {
        let mut out = String::from("reason,count\n");
        for (reason, count) in &self.reasons {
            out.push_str(&format!("{reason},{count}\n"));
        }
        out.push_str(&format!("total,{}\n", self.total_rows));
        out.push_str(&format!("retained,{}\n", self.retained()));
        out.push_str(&format!("rejected,{}\n", self.rejected()));
        out
    }
}

#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub report: RejectionReport,
}

pub mod reason {
    pub const MALFORMED_ROW: &str = "malformed row";
    pub const BAD_TIMESTAMP: &str = "bad timestamp";
    pub const OUTSIDE_WINDOW: &str = "outside window";
    pub const EMPTY_ID: &str = "empty id";
    pub const SELF_LOOP: &str = "self-loop";
    pub const BAD_KIND: &str = "bad kind";
    pub const BAD_DURATION: &str = "bad duration";
    pub const NEGATIVE_DURATION: &str = "negative duration";
    pub const BAD_AMOUNT: &str = "bad amount";
    pub const NON_POSITIVE_AMOUNT: &str = "non-positive amount";
    pub const DUPLICATE: &str = "duplicate";
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str], path: &Path) -> Result<()> {
    let found = rdr.byte_headers().map_err(|e| Error::csv(path, e))?;
    if found.iter().ne(expected.iter().map(|h| h.as_bytes())) {
        return Err(Error::Header {
            path: path.to_owned(),
            expected: expected.join(","),
            found: String::from_utf8_lossy(found.as_slice()).into_owned(),
        });
    }
    Ok(())
}

/// Runs `parse_row` over every data row, deduplicating and counting
/// rejections, then enforces the majority-rejection rule.
fn parse_rows<R, T, F>(
    input: R,
    path: &Path,
    expected: &[&str],
    mut parse_row: F,
) -> Result<Parsed<T>>
where
    R: Read,
    T: Clone + Eq + std::hash::Hash,
    F: FnMut(&[&str]) -> std::result::Result<T, &'static str>,
{
    let mut rdr = csv_reader(input);
    check_header(&mut rdr, expected, path)?;

    let mut report = RejectionReport::default();
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut row = csv::ByteRecord::new();
    loop {
        match rdr.read_byte_record(&mut row) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) if e.is_io_error() => return Err(Error::csv(path, e)),
            Err(_) => {
                report.total_rows += 1;
                report.reject(reason::MALFORMED_ROW);
                continue;
            }
        }
        report.total_rows += 1;
        let fields: Option<Vec<&str>> = row.iter().map(|f| std::str::from_utf8(f).ok()).collect();
        let Some(fields) = fields.filter(|f| f.len() == expected.len()) else {
            report.reject(reason::MALFORMED_ROW);
            continue;
        };
        match parse_row(&fields) {
            Ok(rec) => {
                if seen.insert(rec.clone()) {
                    records.push(rec);
                } else {
                    report.reject(reason::DUPLICATE);
                }
            }
            Err(why) => report.reject(why),
        }
    }

    if report.rejected() * 2 > report.total_rows {
        return Err(Error::TooManyRejections {
            path: path.to_owned(),
            rejected: report.rejected(),
            total: report.total_rows,
        });
    }
    Ok(Parsed { records, report })
}

fn parse_windowed_timestamp(
    s: &str,
    window: &ObservationWindow,
) -> std::result::Result<DateTime<Utc>, &'static str> {
    let ts = parse_timestamp(s).ok_or(reason::BAD_TIMESTAMP)?;
    if !window.contains(ts) {
        return Err(reason::OUTSIDE_WINDOW);
    }
    Ok(ts)
}

fn parse_cdr_row(
    f: &[&str],
    window: &ObservationWindow,
) -> std::result::Result<CdrRecord, &'static str> {
    let timestamp = parse_windowed_timestamp(f[0], window)?;
    let (caller, callee, tower) = (f[1], f[2], f[3]);
    if caller.is_empty() || callee.is_empty() || tower.is_empty() {
        return Err(reason::EMPTY_ID);
    }
    if caller == callee {
        return Err(reason::SELF_LOOP);
    }
    let kind = EventKind::parse(f[4]).ok_or(reason::BAD_KIND)?;
    let duration: i64 = f[5].parse().map_err(|_| reason::BAD_DURATION)?;
    if duration < 0 {
        return Err(reason::NEGATIVE_DURATION);
    }
    let duration_s = u32::try_from(duration).map_err(|_| reason::BAD_DURATION)?;
    Ok(CdrRecord {
        timestamp,
        caller: caller.into(),
        callee: callee.into(),
        tower: tower.into(),
        kind,
        // SMS rows never carry a duration.
        duration_s: if kind == EventKind::Sms {
            0
        } else {
            duration_s
        },
    })
}

fn parse_topup_row(
    f: &[&str],
    window: &ObservationWindow,
) -> std::result::Result<TopUpRecord, &'static str> {
    let timestamp = parse_windowed_timestamp(f[0], window)?;
    if f[1].is_empty() {
        return Err(reason::EMPTY_ID);
    }
    let amount: i64 = f[2].parse().map_err(|_| reason::BAD_AMOUNT)?;
    if amount <= 0 {
        return Err(reason::NON_POSITIVE_AMOUNT);
    }
    Ok(TopUpRecord {
        timestamp,
        user: f[1].into(),
        amount_minor: amount as u64,
    })
}

pub fn parse_cdr_from<R: Read>(
    input: R,
    path: &Path,
    window: &ObservationWindow,
) -> Result<Parsed<CdrRecord>> {
    parse_rows(input, path, &CDR_HEADER, |f| parse_cdr_row(f, window))
}

pub fn parse_cdr(path: &Path, window: &ObservationWindow) -> Result<Parsed<CdrRecord>> {
    parse_cdr_from(std::io::BufReader::new(open(path)?), path, window)
}

pub fn parse_topups_from<R: Read>(
    input: R,
    path: &Path,
    window: &ObservationWindow,
) -> Result<Parsed<TopUpRecord>> {
    parse_rows(input, path, &TOPUP_HEADER, |f| parse_topup_row(f, window))
}

pub fn parse_topups(path: &Path, window: &ObservationWindow) -> Result<Parsed<TopUpRecord>> {
    parse_topups_from(std::io::BufReader::new(open(path)?), path, window)
}

fn check_coordinates(t: &TowerInfo) -> std::result::Result<(), String> {
    if !(t.lat.is_finite() && (-90.0..=90.0).contains(&t.lat)) {
        return Err(format!("tower {}: latitude {} out of range", t.id, t.lat));
    }
    if !(t.lon.is_finite() && (-180.0..=180.0).contains(&t.lon)) {
        return Err(format!("tower {}: longitude {} out of range", t.id, t.lon));
    }
    Ok(())
}

pub fn parse_towers_from<R: Read>(input: R, path: &Path) -> Result<TowerRegistry> {
    let mut rdr = csv_reader(input);
    check_header(&mut rdr, &TOWER_HEADER, path)?;
    let mut registry = TowerRegistry::default();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::csv(path, e))?;
        if row.len() != TOWER_HEADER.len() {
            return Err(Error::format(
                path,
                format!("line {line}: expected 3 fields"),
            ));
        }
        let coord = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::format(path, format!("line {line}: bad coordinate `{s}`")))
        };
        let tower = TowerInfo {
            id: row[0].into(),
            lat: coord(&row[1])?,
            lon: coord(&row[2])?,
        };
        if tower.id.0.is_empty() {
            return Err(Error::format(path, format!("line {line}: empty tower_id")));
        }
        check_coordinates(&tower).map_err(|m| Error::format(path, format!("line {line}: {m}")))?;
        if registry.towers.contains_key(&tower.id) {
            return Err(Error::format(
                path,
                format!("line {line}: duplicate tower_id {}", tower.id),
            ));
        }
        registry.towers.insert(tower.id.clone(), tower);
    }
    Ok(registry)
}

pub fn parse_towers(path: &Path) -> Result<TowerRegistry> {
    parse_towers_from(std::io::BufReader::new(open(path)?), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window() -> ObservationWindow {
        ObservationWindow::from_months(YearMonth::new(2012, 1).unwrap(), 6).unwrap()
    }

    fn cdr(text: &str) -> Result<Parsed<CdrRecord>> {
        parse_cdr_from(text.as_bytes(), Path::new("cdr.csv"), &window())
    }

    fn topups(text: &str) -> Result<Parsed<TopUpRecord>> {
        parse_topups_from(text.as_bytes(), Path::new("topup.csv"), &window())
    }

    const CDR_HEAD: &str = "timestamp,caller_id,callee_id,tower_id,kind,duration_s\n";

    #[test]
    fn window_months_and_index() {
        let w = window();
        assert_eq!(w.n_months(), 6);
        assert_eq!(w.months()[5].to_string(), "2012-06");
        let ts = parse_timestamp("2012-03-31T23:59:59Z").unwrap();
        assert_eq!(w.month_index(ts), Some(2));
        assert_eq!(
            w.month_index(parse_timestamp("2012-07-01T00:00:00Z").unwrap()),
            None
        );

        let dec = ObservationWindow::from_months(YearMonth::new(2012, 11).unwrap(), 3).unwrap();
        assert_eq!(dec.months().last().unwrap().to_string(), "2013-01");
        assert!(ObservationWindow::new(w.end(), w.start()).is_err());
    }

    #[test]
    fn cdr_row_round_trip() {
        let p = cdr(&format!(
            "{CDR_HEAD}2012-03-01T10:00:00Z,u1,u2,t5,CALL,60\n"
        ))
        .unwrap();
        assert_eq!(p.records.len(), 1);
        let r = &p.records[0];
        assert_eq!(r.duration_s, 60);
        assert_eq!(r.caller.as_str(), "u1");
        assert_eq!(r.tower.as_str(), "t5");
        assert_eq!(r.kind, EventKind::Call);
        assert_eq!(format_timestamp(r.timestamp), "2012-03-01T10:00:00Z");
    }

    #[test]
    fn cdr_self_loop_rejected() {
        let p = cdr(&format!(
            "{CDR_HEAD}2012-03-01T10:00:00Z,u1,u1,t5,CALL,60\n2012-03-01T10:00:00Z,u1,u2,t5,SMS,0\n"
        ))
        .unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.report.count(reason::SELF_LOOP), 1);
    }

    #[test]
    fn cdr_rejection_reasons() {
        let rows = [
            "2012-03-01T10:00:00Z,u1,u2,t5,CALL,60",
            "2012-03-01T10:00:00Z,u1,u2,t5,CALL,60",
            "2011-12-31T23:59:59Z,u1,u2,t5,CALL,60",
            "2012-03-01 10:00:00,u1,u2,t5,CALL,60",
            "2012-03-01T10:00:01Z,u1,u2,t5,FAX,60",
            "2012-03-01T10:00:02Z,u1,u2,t5,CALL,abc",
            "2012-03-01T10:00:03Z,u1,u2,t5,CALL",
            "2012-03-01T10:00:04Z,u1,u2,t5,SMS,12",
            "2012-03-01T10:00:05Z,u1,u3,t5,CALL,1",
            "2012-03-01T10:00:06Z,u1,u4,t5,CALL,1",
            "2012-03-01T10:00:07Z,u1,u5,t5,CALL,1",
            "2012-03-01T10:00:08Z,u1,u6,t5,CALL,1",
        ];
        let p = cdr(&format!("{CDR_HEAD}{}\n", rows.join("\n"))).unwrap();
        let r = &p.report;
        assert_eq!(r.total_rows, 12);
        assert_eq!(r.count(reason::DUPLICATE), 1);
        assert_eq!(r.count(reason::OUTSIDE_WINDOW), 1);
        assert_eq!(r.count(reason::BAD_TIMESTAMP), 1);
        assert_eq!(r.count(reason::BAD_KIND), 1);
        assert_eq!(r.count(reason::BAD_DURATION), 1);
        assert_eq!(r.count(reason::MALFORMED_ROW), 1);
        assert_eq!(r.retained(), 6);
        assert_eq!(p.records.len(), r.retained());
        let sms = p.records.iter().find(|c| c.kind == EventKind::Sms).unwrap();
        assert_eq!(sms.duration_s, 0);
    }

    #[test]
    fn majority_negative_durations_is_fatal() {
        let mut text = CDR_HEAD.to_string();
        for i in 0..10 {
            let d = if i < 6 { -5 } else { 5 };
            text.push_str(&format!("2012-03-01T10:00:{i:02}Z,u1,u2,t1,CALL,{d}\n"));
        }
        match cdr(&text) {
            Err(Error::TooManyRejections {
                rejected, total, ..
            }) => {
                assert_eq!((rejected, total), (6, 10));
            }
            other => panic!("expected fatal rejection, got {other:?}"),
        }
    }

    #[test]
    fn bad_header_is_fatal() {
        let err = cdr("time,caller,callee,tower,kind,duration\n").unwrap_err();
        assert!(matches!(err, Error::Header { .. }));
        assert!(matches!(cdr("").unwrap_err(), Error::Header { .. }));
    }

    #[test]
    fn missing_file_is_fatal() {
        let err = parse_cdr(Path::new("/nonexistent/cdr.csv"), &window()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn topup_rows() {
        let p = topups(
            "timestamp,user_id,amount_minor\n2012-03-01T10:00:00Z,u1,500\n2012-03-01T10:00:00Z,u2,0\n\
             2012-03-01T10:00:00Z,u3,-4\n2012-03-02T10:00:00Z,u1,700\n2012-03-03T10:00:00Z,u4,20\n",
        )
        .unwrap();
        assert_eq!(p.records.len(), 3);
        assert_eq!(p.records[0].amount_minor, 500);
        assert_eq!(p.report.count(reason::NON_POSITIVE_AMOUNT), 2);
        assert!(p.report.to_text().contains("non-positive amount,2\n"));
        assert!(p
            .report
            .to_text()
            .ends_with("total,5\nretained,3\nrejected,2\n"));
    }

    #[test]
    fn towers() {
        let path = Path::new("towers.csv");
        let reg = parse_towers_from("tower_id,lat,lon\nt1,5.32,-4.03\n".as_bytes(), path).unwrap();
        assert_eq!(
            reg.get("t1"),
            Some(&TowerInfo {
                id: "t1".into(),
                lat: 5.32,
                lon: -4.03
            })
        );
        let dup = parse_towers_from(
            "tower_id,lat,lon\nt1,5.32,-4.03\nt1,6,-4\n".as_bytes(),
            path,
        );
        assert!(dup.is_err());
        let lat = parse_towers_from("tower_id,lat,lon\nt1,91.0,-4.03\n".as_bytes(), path);
        assert!(lat.is_err());
        let lon = parse_towers_from("tower_id,lat,lon\nt1,1,-180.5\n".as_bytes(), path);
        assert!(lon.is_err());
    }
}
