//! Cohort CSV files.
//!
//! The header is fixed (see [`HEADER`]); column order is free but every
//! column must be present and no other column is accepted. Empty cells are
//! missing values. Rows are numbered from 1, not counting the header.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use cdss_core::cohort::{CohortDataset, CohortError, DatasetSource};
use cdss_core::record::{Activity, Feature, PatientRecord, Sex};
use cdss_core::GlycemicClass;

pub const HEADER: [&str; 19] = [
    "id",
    "age",
    "sex",
    "family_history",
    "physical_activity",
    "bmi",
    "fpg",
    "hba1c",
    "ogtt_2h",
    "random_glucose",
    "sbp",
    "dbp",
    "triglycerides",
    "hdl",
    "waist",
    "symptoms",
    "balanced_diet",
    "htn_medication",
    "label",
];

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("unexpected column `{0}`")]
    UnexpectedColumn(String),
    #[error("row {row}, column `{column}`: cannot read `{value}` as {expected}")]
    TypeMismatch {
        row: usize,
        column: String,
        value: String,
        expected: &'static str,
    },
    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },
    #[error("row {row}: duplicate id `{id}`")]
    DuplicateId { row: usize, id: String },
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CsvError {
    /// Whether the input itself is at fault (as opposed to I/O).
    pub fn is_validation(&self) -> bool {
        !matches!(self, CsvError::Io { .. })
    }
}

struct Cells<'a> {
    row: usize,
    record: &'a csv::StringRecord,
    index: &'a [usize; 19],
}

impl Cells<'_> {
    fn raw(&self, column: usize) -> &str {
        self.record.get(self.index[column]).unwrap_or("").trim()
    }

    fn mismatch(&self, column: usize, expected: &'static str) -> CsvError {
        CsvError::TypeMismatch {
            row: self.row,
            column: HEADER[column].into(),
            value: self.raw(column).into(),
            expected,
        }
    }

    fn parse<T>(&self, column: usize, expected: &'static str, f: impl Fn(&str) -> Option<T>) -> Result<Option<T>, CsvError> {
        let s = self.raw(column);
        if s.is_empty() {
            return Ok(None);
        }
        f(s).map(Some).ok_or_else(|| self.mismatch(column, expected))
    }

    fn number(&self, column: usize) -> Result<Option<f64>, CsvError> {
        self.parse(column, "a finite number", |s| s.parse::<f64>().ok().filter(|x| x.is_finite()))
    }

    fn flag(&self, column: usize) -> Result<Option<bool>, CsvError> {
        self.parse(column, "true/false", |s| match s {
            "true" => Some(true),
            "false" => Some(false),
            _ => None,
        })
    }
}

fn column_of(name: &str) -> usize {
    HEADER.iter().position(|h| *h == name).expect("known column")
}

fn parse_row(cells: &Cells<'_>) -> Result<PatientRecord, CsvError> {
    let id = cells.raw(0);
    if id.is_empty() {
        return Err(CsvError::InvalidRow {
            row: cells.row,
            message: "empty id".into(),
        });
    }
    let mut r = PatientRecord::new(id);
    for feature in Feature::numeric() {
        r.set_numeric(feature, cells.number(column_of(feature.name()))?);
    }
    r.sex = cells.parse(column_of("sex"), "male/female", Sex::parse)?;
    r.physical_activity = cells.parse(column_of("physical_activity"), "high/low", Activity::parse)?;
    r.family_history = cells.flag(column_of("family_history"))?;
    r.symptoms = cells.flag(column_of("symptoms"))?;
    r.balanced_diet = cells.flag(column_of("balanced_diet"))?;
    r.htn_medication = cells.flag(column_of("htn_medication"))?;
    r.label = cells.parse(column_of("label"), "a glycemic class", |s| s.parse::<GlycemicClass>().ok())?;
    if let Err(v) = r.validate() {
        return Err(CsvError::InvalidRow {
            row: cells.row,
            message: v.to_string(),
        });
    }
    Ok(r)
}

/// Parses a cohort CSV document.
pub fn parse_cohort<R: Read>(input: R, source: DatasetSource) -> Result<CohortDataset, CsvError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = reader.headers()?.clone();
    let mut index = [0usize; 19];
    for (i, name) in HEADER.iter().enumerate() {
        index[i] = headers
            .iter()
            .position(|h| h.trim() == *name)
            .ok_or_else(|| CsvError::MissingColumn((*name).into()))?;
    }
    if let Some(extra) = headers.iter().find(|h| !HEADER.contains(&h.trim())) {
        return Err(CsvError::UnexpectedColumn(extra.into()));
    }
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| CsvError::InvalidRow {
            row: row_no,
            message: e.to_string(),
        })?;
        let record = parse_row(&Cells {
            row: row_no,
            record: &row,
            index: &index,
        })?;
        if !ids.insert(record.id.clone()) {
            return Err(CsvError::DuplicateId { row: row_no, id: record.id });
        }
        records.push(record);
    }
    CohortDataset::new(records, source).map_err(|e| match e {
        CohortError::DuplicateId(id) => CsvError::DuplicateId { row: 0, id },
        CohortError::InvalidRecord { index, message, .. } => CsvError::InvalidRow { row: index + 1, message },
        other => CsvError::InvalidRow {
            row: 0,
            message: other.to_string(),
        },
    })
}

pub fn read_cohort(path: &Path) -> Result<CohortDataset, CsvError> {
    let file = File::open(path).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_cohort(
        file,
        DatasetSource::File {
            path: path.display().to_string(),
        },
    )
}

fn num(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn flag(b: Option<bool>) -> &'static str {
    match b {
        Some(true) => "true",
        Some(false) => "false",
        None => "",
    }
}

/// Writes records with the canonical header; numbers use the shortest
/// representation that reads back to the same value.
pub fn write_cohort<W: Write>(records: &[PatientRecord], out: W) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in records {
        w.write_record([
            r.id.clone(),
            num(r.age),
            r.sex.map(|s| s.as_str()).unwrap_or("").into(),
            flag(r.family_history).into(),
            r.physical_activity.map(|a| a.as_str()).unwrap_or("").into(),
            num(r.bmi),
            num(r.fpg),
            num(r.hba1c),
            num(r.ogtt_2h),
            num(r.random_glucose),
            num(r.sbp),
            num(r.dbp),
            num(r.triglycerides),
            num(r.hdl),
            num(r.waist),
            flag(r.symptoms).into(),
            flag(r.balanced_diet).into(),
            flag(r.htn_medication).into(),
            r.label.map(|c| c.as_str()).unwrap_or("").into(),
        ])?;
    }
    w.flush().map_err(|source| CsvError::Io {
        path: "<output>".into(),
        source,
    })?;
    Ok(())
}

pub fn save_cohort(records: &[PatientRecord], path: &Path) -> Result<(), CsvError> {
    let file = File::create(path).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_cohort(records, file)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAD: &str = "id,age,sex,family_history,physical_activity,bmi,fpg,hba1c,ogtt_2h,random_glucose,sbp,dbp,triglycerides,hdl,waist,symptoms,balanced_diet,htn_medication,label\n";

    fn parse(body: &str) -> Result<CohortDataset, CsvError> {
        parse_cohort(format!("{HEAD}{body}").as_bytes(), DatasetSource::Synthetic { seed: 0 })
    }

    #[test]
    fn three_rows() {
        let ds = parse(
            "a,50,male,true,low,27.5,140,7.1,,,130,85,150,45,98,false,true,false,verified_diabetes\n\
             b,40,female,false,high,22,95,,,,118,76,,,,,,,\n\
             c,61,male,,,30,110,5.9,,,,,,,,,,,prediabetes\n",
        )
        .unwrap();
        assert_eq!(ds.len(), 3);
        let b = &ds.records()[1];
        assert_eq!(b.hba1c, None);
        assert_eq!(b.label, None);
        assert_eq!(ds.records()[0].label, Some(GlycemicClass::VerifiedDiabetes));
    }

    #[test]
    fn reports_bad_cells_with_row_and_column() {
        let err = parse("a,50,male,true,low,abc,140,7.1,,,,,,,,,,,\n").unwrap_err();
        match err {
            CsvError::TypeMismatch { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "bmi");
            }
            other => panic!("{other}"),
        }
        assert!(matches!(
            parse("a,50,male,yes,low,25,140,7.1,,,,,,,,,,,\n"),
            Err(CsvError::TypeMismatch { .. })
        ));
        assert!(matches!(
            parse("a,50,,,,25,140,,,,,,,,,,,,\na,51,,,,25,140,,,,,,,,,,,,\n"),
            Err(CsvError::DuplicateId { row: 2, .. })
        ));
        assert!(matches!(
            parse("a,50,,,,25,140,,,,80,90,,,,,,,\n"),
            Err(CsvError::InvalidRow { row: 1, .. })
        ));
    }

    #[test]
    fn header_must_be_complete() {
        let err = parse_cohort("id,age\n1,2\n".as_bytes(), DatasetSource::Synthetic { seed: 0 }).unwrap_err();
        assert!(matches!(err, CsvError::MissingColumn(c) if c == "sex"));
    }

    #[test]
    fn write_then_parse_is_identity() {
        let ds = parse(
            "a,50.25,male,true,low,27.5,140,7.1,210,,130,85,150,45,98,false,true,false,verified_diabetes\n\
             b,40,female,false,high,22.123456789,95,,,,118,76,,,,,,,\n",
        )
        .unwrap();
        let mut buf = Vec::new();
        write_cohort(ds.records(), &mut buf).unwrap();
        let again = parse_cohort(buf.as_slice(), DatasetSource::Synthetic { seed: 0 }).unwrap();
        assert_eq!(again.records(), ds.records());
    }
}
