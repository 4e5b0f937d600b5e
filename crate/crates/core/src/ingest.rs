//! Dataset readers (Geolife PLT, GSM CSV) and point-stream cleaning.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use log::{debug, warn};
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::model::{seconds_between, LatLon, Point, UserId};

pub const PLT_HEADER_LINES: usize = 6;
pub const DEFAULT_MAX_SPEED: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    #[serde(alias = "geolife_plt")]
    Geolife,
    #[serde(alias = "gsm_csv")]
    Gsm,
}

impl std::str::FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "geolife" | "plt" | "geolife_plt" => Ok(Source::Geolife),
            "gsm" | "csv" | "gsm_csv" => Ok(Source::Gsm),
            other => Err(Error::Config(format!("unknown input format `{other}`"))),
        }
    }
}

/// One parsed input line, tagged with the parser that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub user: UserId,
    pub lat: f64,
    pub lon: f64,
    pub time: NaiveDateTime,
    pub source: Source,
}

impl RawRecord {
    pub fn into_point(self) -> Result<Point> {
        Point::new(self.user, self.lat, self.lon, self.time)
    }
}

/// Points recovered from one stream plus the number of rejected lines.
#[derive(Debug, Clone, Default)]
pub struct ParseOutput {
    pub points: Vec<Point>,
    pub rejected: usize,
}

impl ParseOutput {
    fn push(&mut self, rec: Result<RawRecord>, line_no: usize) {
        match rec.and_then(RawRecord::into_point) {
            Ok(p) => self.points.push(p),
            Err(e) => {
                debug!("line {line_no} rejected: {e}");
                self.rejected += 1;
            }
        }
    }

    pub fn extend(&mut self, other: ParseOutput) {
        self.points.extend(other.points);
        self.rejected += other.rejected;
    }
}

// ---------------------------------------------------------------------------
// Geolife PLT

fn plt_epoch() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(1899, 12, 30)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap()
}

/// Parses one PLT data line: `lat,lon,0,altitude_feet,days_since_1899,date,time`.
pub fn parse_plt_line(line: &str, user: &UserId) -> Result<RawRecord> {
    let fields: Vec<&str> = line.trim().split(',').map(str::trim).collect();
    if fields.len() != 7 {
        return Err(Error::Format(format!(
            "expected 7 fields, found {}",
            fields.len()
        )));
    }
    let lat = parse_f64(fields[0], "latitude")?;
    let lon = parse_f64(fields[1], "longitude")?;
    let stamp = format!("{} {}", fields[5], fields[6]);
    let time = NaiveDateTime::parse_from_str(&stamp, "%Y-%m-%d %H:%M:%S")
        .map_err(|e| Error::Format(format!("bad timestamp `{stamp}`: {e}")))?;
    Ok(RawRecord {
        user: user.clone(),
        lat,
        lon,
        time,
        source: Source::Geolife,
    })
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::Format(format!("non-numeric {what} `{s}`")))?;
    if !v.is_finite() {
        return Err(Error::Format(format!("non-finite {what} `{s}`")));
    }
    Ok(v)
}

/// Reads a Geolife `.plt` stream. Malformed data lines are counted and skipped.
pub fn parse_geolife_plt<R: Read>(reader: R, user: &UserId) -> Result<ParseOutput> {
    let reader = BufReader::new(reader);
    let mut out = ParseOutput::default();
    let mut seen = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Format(format!("read failed: {e}")))?;
        seen += 1;
        if idx < PLT_HEADER_LINES {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_plt_line(&line, user), idx + 1);
    }
    if seen < PLT_HEADER_LINES {
        return Err(Error::Format(format!(
            "PLT stream has {seen} lines, header needs {PLT_HEADER_LINES}"
        )));
    }
    Ok(out)
}

/// Writes points in PLT layout. Altitude is not tracked and is written as 0.
pub fn write_geolife_plt<W: Write>(points: &[Point], mut w: W) -> std::io::Result<()> {
    writeln!(w, "Geolife trajectory")?;
    writeln!(w, "WGS 84")?;
    writeln!(w, "Altitude is in Feet")?;
    writeln!(w, "Reserved 3")?;
    writeln!(w, "0,2,255,My Track,0,0,2,8421376")?;
    writeln!(w, "0")?;
    let epoch = plt_epoch();
    for p in points {
        let days = seconds_between(epoch, p.time) / 86_400.0;
        writeln!(
            w,
            "{},{},0,0,{},{},{}",
            p.lat,
            p.lon,
            days,
            p.time.format("%Y-%m-%d"),
            p.time.format("%H:%M:%S")
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// GSM CSV

/// Whether the first row is a header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeaderMode {
    #[default]
    Auto,
    Present,
    Absent,
}

/// Where to find a column: by zero-based position or by header name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl std::str::FromStr for ColumnRef {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.trim().parse::<usize>() {
            Ok(i) => ColumnRef::Index(i),
            Err(_) => ColumnRef::Name(s.trim().to_string()),
        })
    }
}

/// Layout of a GSM CSV file. Unset columns default to the header aliases
/// (`user_id`, `latitude`, `longitude`, `timestamp`) when a header is
/// present, and to positions 0..=3 otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GsmLayout {
    pub delimiter: char,
    pub header: HeaderMode,
    pub user_column: Option<ColumnRef>,
    pub lat_column: Option<ColumnRef>,
    pub lon_column: Option<ColumnRef>,
    pub time_column: Option<ColumnRef>,
}

impl Default for GsmLayout {
    fn default() -> Self {
        GsmLayout {
            delimiter: ',',
            header: HeaderMode::Auto,
            user_column: None,
            lat_column: None,
            lon_column: None,
            time_column: None,
        }
    }
}

const USER_ALIASES: &[&str] = &["user_id", "user", "userid", "uid", "id", "user id"];
const LAT_ALIASES: &[&str] = &["latitude", "lat"];
const LON_ALIASES: &[&str] = &["longitude", "lon", "lng", "long"];
const TIME_ALIASES: &[&str] = &["timestamp", "time", "datetime", "date_time", "date"];

fn resolve_column(
    spec: Option<&ColumnRef>,
    role: &str,
    aliases: &[&str],
    default_index: usize,
    header: Option<&csv::StringRecord>,
) -> Result<usize> {
    let missing = || Error::Format(format!("missing column `{role}`"));
    match (spec, header) {
        (Some(ColumnRef::Index(i)), Some(h)) if *i >= h.len() => Err(missing()),
        (Some(ColumnRef::Index(i)), _) => Ok(*i),
        (Some(ColumnRef::Name(name)), Some(h)) => h
            .iter()
            .position(|f| f.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Format(format!("missing column `{name}`"))),
        (Some(ColumnRef::Name(name)), None) => Err(Error::Format(format!(
            "column `{name}` referenced by name but the file has no header"
        ))),
        (None, Some(h)) => h
            .iter()
            .position(|f| aliases.iter().any(|a| f.trim().eq_ignore_ascii_case(a)))
            .ok_or_else(missing),
        (None, None) => Ok(default_index),
    }
}

const TIME_FORMATS: &[&str] = &[
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y/%m/%d %H:%M:%S",
    "%d/%m/%Y %H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%d/%m/%Y %H:%M",
];

pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    let s = s.trim();
    for fmt in TIME_FORMATS {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t);
        }
    }
    Err(Error::Format(format!("unparseable timestamp `{s}`")))
}

fn looks_like_header(rec: &csv::StringRecord) -> bool {
    !rec.iter().any(|f| f.trim().parse::<f64>().is_ok())
}

/// Reads a GSM CSV stream. Rows with unparseable or out-of-range fields are
/// counted and skipped; a missing column is a format error.
pub fn parse_gsm_csv<R: Read>(reader: R, layout: &GsmLayout) -> Result<ParseOutput> {
    let delim = u8::try_from(layout.delimiter)
        .map_err(|_| Error::Config("delimiter must be a single-byte character".into()))?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delim)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let mut out = ParseOutput::default();

    let first = match records.next() {
        None => return Ok(out),
        Some(r) => r?,
    };
    let has_header = match layout.header {
        HeaderMode::Present => true,
        HeaderMode::Absent => false,
        HeaderMode::Auto => looks_like_header(&first),
    };
    let header = has_header.then_some(&first);
    let cols = [
        resolve_column(
            layout.user_column.as_ref(),
            "user_id",
            USER_ALIASES,
            0,
            header,
        )?,
        resolve_column(
            layout.lat_column.as_ref(),
            "latitude",
            LAT_ALIASES,
            1,
            header,
        )?,
        resolve_column(
            layout.lon_column.as_ref(),
            "longitude",
            LON_ALIASES,
            2,
            header,
        )?,
        resolve_column(
            layout.time_column.as_ref(),
            "timestamp",
            TIME_ALIASES,
            3,
            header,
        )?,
    ];

    let parse_row = |rec: &csv::StringRecord| -> Result<RawRecord> {
        let get = |i: usize, role: &str| {
            rec.get(i)
                .ok_or_else(|| Error::Format(format!("row lacks column `{role}`")))
        };
        let user = get(cols[0], "user_id")?;
        if user.is_empty() {
            return Err(Error::Format("empty user id".into()));
        }
        Ok(RawRecord {
            user: UserId::new(user),
            lat: parse_f64(get(cols[1], "latitude")?, "latitude")?,
            lon: parse_f64(get(cols[2], "longitude")?, "longitude")?,
            time: parse_timestamp(get(cols[3], "timestamp")?)?,
            source: Source::Gsm,
        })
    };

    let mut line = 1usize;
    if !has_header {
        out.push(parse_row(&first), line);
    }
    for rec in records {
        line += 1;
        match rec {
            Ok(rec) => {
                if rec.iter().all(|f| f.is_empty()) {
                    continue;
                }
                out.push(parse_row(&rec), line)
            }
            Err(e) => {
                debug!("line {line} rejected: {e}");
                out.rejected += 1;
            }
        }
    }
    Ok(out)
}

pub fn write_gsm_csv<W: Write>(points: &[Point], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["user_id", "latitude", "longitude", "timestamp"])?;
    for p in points {
        wtr.write_record([
            p.user.as_str(),
            &p.lat.to_string(),
            &p.lon.to_string(),
            &p.time.format("%Y-%m-%d %H:%M:%S").to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Loading from disk

/// Geolife files live at `<root>/<user>/Trajectory/*.plt`; the user id is the
/// directory above `Trajectory`, or the file's parent directory otherwise.
fn plt_user_id(path: &Path) -> UserId {
    let parent = path.parent();
    let name_of = |p: &Path| p.file_name().map(|s| s.to_string_lossy().into_owned());
    let id = match parent.and_then(name_of) {
        Some(dir) if dir.eq_ignore_ascii_case("trajectory") => {
            parent.and_then(Path::parent).and_then(name_of)
        }
        Some(dir) => Some(dir),
        None => None,
    };
    UserId::new(id.unwrap_or_else(|| "unknown".into()))
}

/// Parsed input grouped by user, plus the total number of rejected lines.
#[derive(Debug, Default)]
pub struct Loaded {
    pub by_user: BTreeMap<UserId, ParseOutput>,
    pub rejected: usize,
}

/// Collects every `.plt` file under `root` (or `root` itself), grouped by user.
pub fn load_geolife(root: &Path, users: Option<&[String]>) -> Result<Loaded> {
    if !root.exists() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "input path does not exist"),
        ));
    }
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            Error::io(path, e.into())
        })?;
        let is_plt = entry
            .path()
            .extension()
            .is_some_and(|x| x.eq_ignore_ascii_case("plt"));
        if entry.file_type().is_file() && is_plt {
            files.push(entry.into_path());
        }
    }
    let mut by_user: BTreeMap<UserId, ParseOutput> = BTreeMap::new();
    for path in files {
        let user = plt_user_id(&path);
        if let Some(filter) = users {
            if !filter.iter().any(|u| u == user.as_str()) {
                continue;
            }
        }
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        match parse_geolife_plt(file, &user) {
            Ok(parsed) => by_user.entry(user).or_default().extend(parsed),
            Err(e) => {
                warn!("{}: skipped ({e})", path.display());
                by_user.entry(user).or_default().rejected += 1;
            }
        }
    }
    let rejected = by_user.values().map(|p| p.rejected).sum();
    Ok(Loaded { by_user, rejected })
}

pub fn load_gsm(path: &Path, layout: &GsmLayout, users: Option<&[String]>) -> Result<Loaded> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parsed = parse_gsm_csv(file, layout)?;
    let mut by_user: BTreeMap<UserId, ParseOutput> = BTreeMap::new();
    for p in parsed.points {
        if let Some(filter) = users {
            if !filter.iter().any(|u| u == p.user.as_str()) {
                continue;
            }
        }
        by_user.entry(p.user.clone()).or_default().points.push(p);
    }
    if parsed.rejected > 0 {
        debug!("{}: {} rows rejected", path.display(), parsed.rejected);
    }
    Ok(Loaded {
        by_user,
        rejected: parsed.rejected,
    })
}

// ---------------------------------------------------------------------------
// Cleaning

/// Accounting for everything `clean` removed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub input_count: usize,
    pub duplicate_count: usize,
    pub outlier_count: usize,
    pub output_count: usize,
}

impl CleaningReport {
    pub fn merge(&mut self, other: &CleaningReport) {
        self.input_count += other.input_count;
        self.duplicate_count += other.duplicate_count;
        self.outlier_count += other.outlier_count;
        self.output_count += other.output_count;
    }

    pub fn is_consistent(&self) -> bool {
        self.input_count == self.duplicate_count + self.outlier_count + self.output_count
    }
}

fn implied_speed(a: &Point, b: &Point) -> f64 {
    let dt = a.seconds_until(b);
    let d = a.distance_to(b);
    if dt <= 0.0 {
        if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        d / dt
    }
}

/// Sorts per user by time, removes exact duplicates and speed spikes.
///
/// A point is a spike when the speed implied from the last retained point
/// exceeds `max_speed` and the speed towards the next point does too (or
/// there is no next point). A point sharing its predecessor's timestamp at a
/// different position is always dropped. Passes repeat until nothing changes,
/// so the output is a fixed point of the rule. The first point of each user
/// is never treated as a spike.
pub fn clean(mut points: Vec<Point>, max_speed: f64) -> (Vec<Point>, CleaningReport) {
    let input_count = points.len();
    points.sort_by(|a, b| {
        a.user
            .cmp(&b.user)
            .then(a.time.cmp(&b.time))
            .then(a.lat.total_cmp(&b.lat))
            .then(a.lon.total_cmp(&b.lon))
    });
    points
        .dedup_by(|b, a| a.user == b.user && a.time == b.time && a.lat == b.lat && a.lon == b.lon);
    let duplicate_count = input_count - points.len();

    let mut out = Vec::with_capacity(points.len());
    let mut outlier_count = 0;
    let mut start = 0;
    while start < points.len() {
        let end = start
            + points[start..]
                .iter()
                .position(|p| p.user != points[start].user)
                .unwrap_or(points.len() - start);
        let (kept, dropped) = despike(points[start..end].to_vec(), max_speed);
        outlier_count += dropped;
        out.extend(kept);
        start = end;
    }

    let report = CleaningReport {
        input_count,
        duplicate_count,
        outlier_count,
        output_count: out.len(),
    };
    (out, report)
}

fn despike(mut pts: Vec<Point>, max_speed: f64) -> (Vec<Point>, usize) {
    let mut dropped = 0;
    loop {
        let mut kept: Vec<Point> = Vec::with_capacity(pts.len());
        let n = pts.len();
        for i in 0..n {
            let spike = match kept.last() {
                None => false,
                Some(prev) if prev.time >= pts[i].time => true,
                Some(prev) => {
                    implied_speed(prev, &pts[i]) > max_speed
                        && pts
                            .get(i + 1)
                            .is_none_or(|next| implied_speed(&pts[i], next) > max_speed)
                }
            };
            if !spike {
                kept.push(pts[i].clone());
            }
        }
        let removed = n - kept.len();
        dropped += removed;
        pts = kept;
        if removed == 0 {
            return (pts, dropped);
        }
    }
}

/// Convenience for callers that only need the coordinate of each point.
pub fn positions(points: &[Point]) -> Vec<LatLon> {
    points.iter().map(Point::latlon).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const PLT_HEADER: &str = "Geolife trajectory\nWGS 84\nAltitude is in Feet\nReserved 3\n0,2,255,My Track,0,0,2,8421376\n0\n";

    fn t(s: &str) -> NaiveDateTime {
        parse_timestamp(s).unwrap()
    }

    fn pt(user: &str, lat: f64, lon: f64, time: &str) -> Point {
        Point::new(user.into(), lat, lon, t(time)).unwrap()
    }

    #[test]
    fn plt_line_maps_fields() {
        let data = format!(
            "{PLT_HEADER}39.984702,116.318417,0,492,39744.1201851852,2008-10-23,02:53:04\n"
        );
        let out = parse_geolife_plt(data.as_bytes(), &"000".into()).unwrap();
        assert_eq!(out.rejected, 0);
        assert_eq!(
            out.points,
            vec![pt("000", 39.984702, 116.318417, "2008-10-23 02:53:04")]
        );
    }

    #[test]
    fn plt_empty_data_and_short_header() {
        let out = parse_geolife_plt(PLT_HEADER.as_bytes(), &"u".into()).unwrap();
        assert!(out.points.is_empty());
        let err = parse_geolife_plt("a\nb\nc\n".as_bytes(), &"u".into());
        assert!(matches!(err, Err(Error::Format(_))));
    }

    #[test]
    fn plt_rejects_bad_lines_without_aborting() {
        let data = format!(
            "{PLT_HEADER}abc,116.3,0,492,39744.12,2008-10-23,02:53:04\n\
             39.98,116.31,0,492,39744.12,2008-10-23,02:53:05\n\
             39.98,116.31,0,492\n\
             39.98,116.31,0,492,39744.12,2008-13-23,02:53:05\n"
        );
        let out = parse_geolife_plt(data.as_bytes(), &"u".into()).unwrap();
        assert_eq!(out.points.len(), 1);
        assert_eq!(out.rejected, 3);
    }

    #[test]
    fn gsm_row_without_header() {
        let out = parse_gsm_csv(
            "10837,-18.96081,-48.32141,2018-05-10 08:15:00\n".as_bytes(),
            &GsmLayout::default(),
        )
        .unwrap();
        assert_eq!(
            out.points,
            vec![pt("10837", -18.96081, -48.32141, "2018-05-10 08:15:00")]
        );
    }

    #[test]
    fn gsm_header_autodetected_and_reordered() {
        let data = "timestamp;lat;lon;user\n2018-05-10 08:15:00;-18.96081;-48.32141;10837\n";
        let layout = GsmLayout {
            delimiter: ';',
            ..Default::default()
        };
        let out = parse_gsm_csv(data.as_bytes(), &layout).unwrap();
        assert_eq!(out.points.len(), 1);
        assert_eq!(out.points[0].user.as_str(), "10837");
    }

    #[test]
    fn gsm_missing_column_is_named() {
        let data = "user_id,latitude,timestamp\n1,2.0,2018-05-10 08:15:00\n";
        match parse_gsm_csv(data.as_bytes(), &GsmLayout::default()) {
            Err(Error::Format(msg)) => assert!(msg.contains("longitude"), "{msg}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn gsm_duplicates_parsed_out_of_bounds_rejected() {
        let data = "1,10.0,10.0,2018-05-10 08:15:00\n\
                    1,10.0,10.0,2018-05-10 08:15:00\n\
                    1,95.0,10.0,2018-05-10 08:30:00\n\
                    1,10.0,10.0,not a time\n";
        let out = parse_gsm_csv(data.as_bytes(), &GsmLayout::default()).unwrap();
        assert_eq!(out.points.len(), 2);
        assert_eq!(out.rejected, 2);
    }

    #[test]
    fn clean_removes_duplicates() {
        let p = pt("u", 10.0, 10.0, "2018-05-10 08:15:00");
        let (out, rep) = clean(vec![p.clone(), p.clone()], DEFAULT_MAX_SPEED);
        assert_eq!(out, vec![p]);
        assert_eq!(rep.duplicate_count, 1);
        assert!(rep.is_consistent());
    }

    #[test]
    fn clean_drops_teleport() {
        let a = pt("u", 0.0, 0.0, "2018-05-10 08:15:00");
        // ~100 km north one second later
        let b = pt("u", 0.9, 0.0, "2018-05-10 08:15:01");
        let (out, rep) = clean(vec![a.clone(), b], DEFAULT_MAX_SPEED);
        assert_eq!(out, vec![a]);
        assert_eq!(rep.outlier_count, 1);
    }

    #[test]
    fn clean_gsm_fixture_ten_rows() {
        // 10 rows at 15 min spacing; rows 3 and 7 repeat their predecessors,
        // row 5 jumps ~1000 km and back
        let data = "\
7,-18.9600,-48.3200,2018-05-10 08:00:00
7,-18.9610,-48.3210,2018-05-10 08:15:00
7,-18.9610,-48.3210,2018-05-10 08:15:00
7,-18.9620,-48.3220,2018-05-10 08:30:00
7,-9.9620,-48.3220,2018-05-10 08:45:00
7,-18.9630,-48.3230,2018-05-10 09:00:00
7,-18.9640,-48.3240,2018-05-10 09:15:00
7,-18.9640,-48.3240,2018-05-10 09:15:00
7,-18.9650,-48.3250,2018-05-10 09:30:00
7,-18.9660,-48.3260,2018-05-10 09:45:00
";
        let parsed = parse_gsm_csv(data.as_bytes(), &GsmLayout::default()).unwrap();
        assert_eq!(parsed.points.len(), 10);
        let (out, rep) = clean(parsed.points, DEFAULT_MAX_SPEED);
        assert_eq!(rep.output_count, 7);
        assert_eq!(out.len(), 7);
        assert_eq!(rep.duplicate_count, 2);
        assert_eq!(rep.outlier_count, 1);
    }

    #[test]
    fn clean_keeps_relocation() {
        // a long jump followed by consistent movement is a new area, not a spike
        let mut pts = vec![
            pt("u", 40.0, 116.0, "2009-01-01 08:00:00"),
            pt("u", 40.0001, 116.0, "2009-01-01 08:00:05"),
        ];
        pts.push(pt("u", 31.0, 121.0, "2009-01-01 09:00:00"));
        pts.push(pt("u", 31.0001, 121.0, "2009-01-01 09:00:05"));
        let (out, rep) = clean(pts, DEFAULT_MAX_SPEED);
        assert_eq!(out.len(), 4);
        assert_eq!(rep.outlier_count, 0);
    }

    #[test]
    fn clean_empty() {
        let (out, rep) = clean(Vec::new(), DEFAULT_MAX_SPEED);
        assert!(out.is_empty());
        assert_eq!(rep, CleaningReport::default());
    }

    #[test]
    fn same_time_different_place_dropped() {
        let a = pt("u", 10.0, 10.0, "2018-05-10 08:15:00");
        let b = pt("u", 10.0001, 10.0, "2018-05-10 08:15:00");
        let c = pt("u", 10.0002, 10.0, "2018-05-10 08:16:00");
        let (out, rep) = clean(vec![a, b, c], DEFAULT_MAX_SPEED);
        assert_eq!(out.len(), 2);
        assert!(out.windows(2).all(|w| w[0].time < w[1].time));
        assert!(rep.is_consistent());
    }

    #[test]
    fn cleaning_report_serializes_four_fields() {
        let v = serde_json::to_value(CleaningReport::default()).unwrap();
        let obj = v.as_object().unwrap();
        assert_eq!(obj.len(), 4);
        for k in [
            "input_count",
            "duplicate_count",
            "outlier_count",
            "output_count",
        ] {
            assert!(obj.contains_key(k));
        }
    }
}
