//! Reading and writing the three-file ward format.
//!
//! * `admissions.csv`: `person_id,ward_id,admit_date,discharge_date`
//! * `tests.csv`: `person_id,ward_id,date,result` with `result` in `{pos, neg}`
//! * `precautions.csv`: `person_id,ward_id,start_date,end_date` (end exclusive)
//!
//! Dates are ISO-8601 (`YYYY-MM-DD`) and become whole-day offsets from the study
//! start. Events sharing a day are ordered by the timeline tie-break rule.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use nosocomial_core::types::{classify_admissions, Interval, PatientEpisode, ScreeningTest, TestResult};
use nosocomial_core::WardData;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{file}, row {row}: {message}")]
    Row { file: &'static str, row: usize, message: String },
    #[error("ward {ward}: {source}")]
    Ward { ward: String, source: nosocomial_core::Error },
    #[error("ward {0} has no episodes inside the study window")]
    EmptyWard(String),
    #[error("study end {end} is not after study start {start}")]
    StudyWindow { start: NaiveDate, end: NaiveDate },
    #[error("episode {episode}: time {time} is not a whole day and cannot be written as a date")]
    NonIntegerTime { episode: String, time: f64 },
    #[error("cannot write ward files: {0}")]
    Write(String),
}

pub type Result<T> = std::result::Result<T, IngestError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawAdmission {
    pub row: usize,
    pub person: String,
    pub ward: String,
    pub admit: NaiveDate,
    pub discharge: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTest {
    pub row: usize,
    pub person: String,
    pub ward: String,
    pub date: NaiveDate,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPrecaution {
    pub row: usize,
    pub person: String,
    pub ward: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

/// Parsed and cross-checked rows of the three files.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawEventTable {
    pub admissions: Vec<RawAdmission>,
    pub tests: Vec<RawTest>,
    pub precautions: Vec<RawPrecaution>,
}

impl RawEventTable {
    /// Ward identifiers in sorted order.
    pub fn wards(&self) -> Vec<String> {
        let mut w: Vec<String> = self.admissions.iter().map(|a| a.ward.clone()).collect();
        w.sort();
        w.dedup();
        w
    }
}

const ADMISSIONS: &str = "admissions.csv";
const TESTS: &str = "tests.csv";
const PRECAUTIONS: &str = "precautions.csv";

fn parse_date(file: &'static str, row: usize, field: &str, value: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(value.trim(), "%Y-%m-%d").map_err(|e| IngestError::Row {
        file,
        row,
        message: format!("{field} {value:?} is not a YYYY-MM-DD date ({e})"),
    })
}

/// Deserializes every record; `row` numbers count the header as row 1.
fn records<R: Read, T: for<'de> Deserialize<'de>>(file: &'static str, source: R) -> Result<Vec<(usize, T)>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let mut out = Vec::new();
    for (i, rec) in reader.deserialize::<T>().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| IngestError::Row { file, row, message: e.to_string() })?;
        out.push((row, rec));
    }
    Ok(out)
}

#[derive(Deserialize)]
struct AdmissionRow {
    person_id: String,
    ward_id: String,
    admit_date: String,
    discharge_date: String,
}

#[derive(Deserialize)]
struct TestRow {
    person_id: String,
    ward_id: String,
    date: String,
    result: String,
}

#[derive(Deserialize)]
struct PrecautionRow {
    person_id: String,
    ward_id: String,
    start_date: String,
    end_date: String,
}

/// Parses the three sources and checks that every test and precaution falls in a stay.
pub fn parse_ward_files<A: Read, T: Read, P: Read>(admissions: A, tests: T, precautions: P) -> Result<RawEventTable> {
    let mut table = RawEventTable::default();
    for (row, r) in records::<_, AdmissionRow>(ADMISSIONS, admissions)? {
        let admit = parse_date(ADMISSIONS, row, "admit_date", &r.admit_date)?;
        let discharge = parse_date(ADMISSIONS, row, "discharge_date", &r.discharge_date)?;
        if discharge <= admit {
            return Err(IngestError::Row {
                file: ADMISSIONS,
                row,
                message: format!("discharge {discharge} is not after admission {admit}"),
            });
        }
        table.admissions.push(RawAdmission { row, person: r.person_id, ward: r.ward_id, admit, discharge });
    }
    let mut stays: BTreeMap<(&str, &str), Vec<(NaiveDate, NaiveDate)>> = BTreeMap::new();
    for a in &table.admissions {
        stays.entry((a.ward.as_str(), a.person.as_str())).or_default().push((a.admit, a.discharge));
    }
    let during = |ward: &str, person: &str, inside: &dyn Fn(NaiveDate, NaiveDate) -> bool| {
        stays.get(&(ward, person)).is_some_and(|v| v.iter().any(|&(a, d)| inside(a, d)))
    };
    let mut tests_out = Vec::new();
    let mut precautions_out = Vec::new();
    for (row, r) in records::<_, TestRow>(TESTS, tests)? {
        let date = parse_date(TESTS, row, "date", &r.date)?;
        let positive = match r.result.to_ascii_lowercase().as_str() {
            "pos" => true,
            "neg" => false,
            other => {
                return Err(IngestError::Row { file: TESTS, row, message: format!("unknown result code {other:?} (expected pos or neg)") })
            }
        };
        if !during(&r.ward_id, &r.person_id, &|a, d| a <= date && date <= d) {
            return Err(IngestError::Row {
                file: TESTS,
                row,
                message: format!("test of {} on {date} is outside every stay on ward {}", r.person_id, r.ward_id),
            });
        }
        tests_out.push(RawTest { row, person: r.person_id, ward: r.ward_id, date, positive });
    }
    for (row, r) in records::<_, PrecautionRow>(PRECAUTIONS, precautions)? {
        let start = parse_date(PRECAUTIONS, row, "start_date", &r.start_date)?;
        let end = parse_date(PRECAUTIONS, row, "end_date", &r.end_date)?;
        if end < start {
            return Err(IngestError::Row { file: PRECAUTIONS, row, message: format!("end {end} is before start {start}") });
        }
        if !during(&r.ward_id, &r.person_id, &|a, d| a <= start && start < d) {
            return Err(IngestError::Row {
                file: PRECAUTIONS,
                row,
                message: format!("precautions of {} starting {start} are outside every stay on ward {}", r.person_id, r.ward_id),
            });
        }
        precautions_out.push(RawPrecaution { row, person: r.person_id, ward: r.ward_id, start, end });
    }
    table.tests = tests_out;
    table.precautions = precautions_out;
    Ok(table)
}

/// Paths of the three input files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WardFiles {
    pub admissions: PathBuf,
    pub tests: PathBuf,
    pub precautions: PathBuf,
}

impl WardFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self { admissions: dir.join(ADMISSIONS), tests: dir.join(TESTS), precautions: dir.join(PRECAUTIONS) }
    }

    pub fn read(&self) -> Result<RawEventTable> {
        let open = |path: &Path| std::fs::File::open(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source });
        parse_ward_files(open(&self.admissions)?, open(&self.tests)?, open(&self.precautions)?)
    }
}

/// Study window and classification settings for [`build_ward_data`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub readmission_window: f64,
}

impl StudyWindow {
    pub fn length(&self) -> f64 {
        (self.end - self.start).num_days() as f64
    }

    fn offset(&self, date: NaiveDate) -> f64 {
        (date - self.start).num_days() as f64
    }
}

/// A non-fatal observation made while building a ward.
#[derive(Debug, Clone, PartialEq)]
pub enum IngestWarning {
    OverCapacity { ward: String, peak: usize, beds: u32 },
}

impl std::fmt::Display for IngestWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IngestWarning::OverCapacity { ward, peak, beds } => {
                write!(f, "ward {ward} holds {peak} patients at its peak, above its {beds} beds")
            }
        }
    }
}

/// Builds the episodes of one ward.
///
/// Re-admission classes are assigned on the untruncated stays so that positive
/// tests before the study window count. Stays are then clipped to the window;
/// those entirely outside it are dropped, as are tests outside the clipped stay.
/// Episodes are named `<person>#<n>` for the person's n-th stay on the ward.
pub fn build_ward_data(
    table: &RawEventTable,
    ward: &str,
    window: &StudyWindow,
    beds: Option<u32>,
) -> Result<(WardData, Vec<IngestWarning>)> {
    if window.end <= window.start {
        return Err(IngestError::StudyWindow { start: window.start, end: window.end });
    }
    let ward_err = |source| IngestError::Ward { ward: ward.to_string(), source };
    let t_end = window.length();

    let mut stays: BTreeMap<&str, Vec<&RawAdmission>> = BTreeMap::new();
    for a in table.admissions.iter().filter(|a| a.ward == ward) {
        stays.entry(a.person.as_str()).or_default().push(a);
    }
    let mut tests: BTreeMap<&str, Vec<&RawTest>> = BTreeMap::new();
    for t in table.tests.iter().filter(|t| t.ward == ward) {
        tests.entry(t.person.as_str()).or_default().push(t);
    }
    let mut precautions: BTreeMap<&str, Vec<&RawPrecaution>> = BTreeMap::new();
    for p in table.precautions.iter().filter(|p| p.ward == ward) {
        precautions.entry(p.person.as_str()).or_default().push(p);
    }

    let mut episodes: Vec<PatientEpisode> = Vec::with_capacity(table.admissions.len());
    for (person, list) in &mut stays {
        list.sort_by_key(|a| (a.admit, a.discharge));
        for (k, stay) in list.iter().enumerate() {
            // A date shared by a discharge and a re-admission belongs to the later stay.
            let owns = |date: NaiveDate| {
                stay.admit <= date && date <= stay.discharge && !list[k + 1..].iter().any(|b| b.admit <= date && date <= b.discharge)
            };
            let mut own_tests: Vec<ScreeningTest> = tests
                .get(person)
                .into_iter()
                .flatten()
                .filter(|t| owns(t.date))
                .map(|t| {
                    let time = window.offset(t.date);
                    if t.positive {
                        ScreeningTest::positive(time)
                    } else {
                        ScreeningTest::negative(time)
                    }
                })
                .collect();
            own_tests.sort_by(|x, y| {
                x.time.total_cmp(&y.time).then((x.result == TestResult::Positive).cmp(&(y.result == TestResult::Positive)))
            });
            let mut own_precautions: Vec<(f64, f64)> = precautions
                .get(person)
                .into_iter()
                .flatten()
                .filter(|p| stay.admit <= p.start && p.start < stay.discharge)
                .map(|p| (window.offset(p.start), window.offset(p.end.min(stay.discharge))))
                .collect();
            own_precautions.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
            let mut e = PatientEpisode::new(
                format!("{person}#{}", k + 1),
                *person,
                window.offset(stay.admit),
                window.offset(stay.discharge),
            );
            e.tests = own_tests;
            e.precautions = own_precautions.into_iter().map(|(s, t)| Interval::new(s, t)).collect();
            episodes.push(e);
        }
    }

    let classes = classify_admissions(&episodes, window.readmission_window).map_err(ward_err)?;
    let mut kept = Vec::with_capacity(episodes.len());
    for (mut e, class) in episodes.into_iter().zip(classes) {
        e.class = class;
        let (a, d) = (e.admission.max(0.0), e.discharge.min(t_end));
        if a >= d {
            continue;
        }
        e.admission = a;
        e.discharge = d;
        e.tests.retain(|t| a <= t.time && t.time <= d);
        let mut merged: Vec<Interval> = Vec::new();
        for i in &e.precautions {
            let (s, t) = (i.start.max(a), i.end.min(d));
            if s >= t {
                continue;
            }
            match merged.last_mut() {
                Some(last) if s <= last.end => last.end = last.end.max(t),
                _ => merged.push(Interval::new(s, t)),
            }
        }
        e.precautions = merged;
        kept.push(e);
    }
    if kept.is_empty() {
        return Err(IngestError::EmptyWard(ward.to_string()));
    }
    let data = WardData::new(ward, t_end, kept, window.readmission_window).map_err(ward_err)?;
    let mut warnings = Vec::new();
    if let Some(beds) = beds {
        let peak = data.peak_occupancy();
        if peak > beds as usize {
            warnings.push(IngestWarning::OverCapacity { ward: ward.to_string(), peak, beds });
        }
    }
    Ok((data, warnings))
}

fn date_at(start: NaiveDate, episode: &str, time: f64) -> Result<NaiveDate> {
    if time.fract() != 0.0 || !time.is_finite() {
        return Err(IngestError::NonIntegerTime { episode: episode.to_string(), time });
    }
    Ok(start + chrono::Days::new(time as u64))
}

/// Writes a ward back to the three-file format, dated from `start`.
pub fn serialize_ward<A: Write, T: Write, P: Write>(
    ward: &WardData,
    start: NaiveDate,
    admissions: A,
    tests: T,
    precautions: P,
) -> Result<()> {
    let err = |e: csv::Error| IngestError::Write(e.to_string());
    let mut adm = csv::Writer::from_writer(admissions);
    let mut tst = csv::Writer::from_writer(tests);
    let mut pre = csv::Writer::from_writer(precautions);
    adm.write_record(["person_id", "ward_id", "admit_date", "discharge_date"]).map_err(err)?;
    tst.write_record(["person_id", "ward_id", "date", "result"]).map_err(err)?;
    pre.write_record(["person_id", "ward_id", "start_date", "end_date"]).map_err(err)?;
    let w = ward.ward_id.as_str();
    for e in ward.episodes() {
        let id = e.id.as_str();
        let a = date_at(start, id, e.admission)?.to_string();
        let d = date_at(start, id, e.discharge)?.to_string();
        adm.write_record([e.person.as_str(), w, &a, &d]).map_err(err)?;
        for t in &e.tests {
            let result = if t.result == TestResult::Positive { "pos" } else { "neg" };
            tst.write_record([e.person.as_str(), w, &date_at(start, id, t.time)?.to_string(), result]).map_err(err)?;
        }
        for i in &e.precautions {
            let s = date_at(start, id, i.start)?.to_string();
            let t = date_at(start, id, i.end)?.to_string();
            pre.write_record([e.person.as_str(), w, &s, &t]).map_err(err)?;
        }
    }
    for flush in [adm.flush(), tst.flush(), pre.flush()] {
        flush.map_err(|e| IngestError::Write(e.to_string()))?;
    }
    Ok(())
}

/// Writes `admissions.csv`, `tests.csv` and `precautions.csv` into `dir`.
pub fn write_ward_files(ward: &WardData, start: NaiveDate, dir: &Path) -> Result<()> {
    let mut bufs = (Vec::new(), Vec::new(), Vec::new());
    serialize_ward(ward, start, &mut bufs.0, &mut bufs.1, &mut bufs.2)?;
    let files = WardFiles::in_dir(dir);
    for (path, bytes) in [(&files.admissions, &bufs.0), (&files.tests, &bufs.1), (&files.precautions, &bufs.2)] {
        crate::formats::write_atomic(path, bytes).map_err(|e| IngestError::Write(e.to_string()))?;
    }
    Ok(())
}
