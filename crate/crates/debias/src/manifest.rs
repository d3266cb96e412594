//! Subject manifest CSV: `subject_id,label,gender,age,smoking,clip_path`.

use std::collections::HashSet;
use std::path::Path;

use debias_core::dataset::{Label, SubjectRecord};
use debias_core::synth::{ConfoundProfile, Gender, Smoking};

use crate::error::{AppError, AppResult};

pub const MANIFEST_HEADER: [&str; 6] = ["subject_id", "label", "gender", "age", "smoking", "clip_path"];

pub fn parse_label(s: &str) -> Option<Label> {
    match s {
        "diseased" => Some(Label::Diseased),
        "normal" => Some(Label::Normal),
        _ => None,
    }
}

pub fn parse_gender(s: &str) -> Option<Gender> {
    match s {
        "male" => Some(Gender::Male),
        "female" => Some(Gender::Female),
        _ => None,
    }
}

pub fn parse_smoking(s: &str) -> Option<Smoking> {
    match s {
        "smoker" => Some(Smoking::Smoker),
        "non_smoker" => Some(Smoking::NonSmoker),
        _ => None,
    }
}

pub fn write_manifest(path: &Path, records: &[SubjectRecord]) -> AppResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(MANIFEST_HEADER).map_err(|e| csv_error(path, e))?;
    for r in records {
        let age = r.profile.age_years.to_string();
        w.write_record([
            r.subject_id.as_str(),
            r.label.as_str(),
            r.profile.gender.as_str(),
            age.as_str(),
            r.profile.smoking.as_str(),
            r.clip_path.as_str(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> AppError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => AppError::io(path, io),
            _ => unreachable!("checked io kind"),
        }
    } else {
        AppError::MalformedManifest { path: path.to_path_buf(), reason: e.to_string() }
    }
}

pub fn read_manifest(path: &Path) -> AppResult<Vec<SubjectRecord>> {
    let bad = |reason: String| AppError::MalformedManifest { path: path.to_path_buf(), reason };
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(MANIFEST_HEADER.iter().copied()) {
        return Err(bad(format!("header must be {}, got {}", MANIFEST_HEADER.join(","), header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = i + 2;
        let field = |k: usize| row.get(k).unwrap_or("");
        let label = parse_label(field(1)).ok_or_else(|| bad(format!("line {line}: label {:?}", field(1))))?;
        let gender = parse_gender(field(2)).ok_or_else(|| bad(format!("line {line}: gender {:?}", field(2))))?;
        let age: u8 = field(3).parse().map_err(|_| bad(format!("line {line}: age {:?}", field(3))))?;
        let smoking = parse_smoking(field(4)).ok_or_else(|| bad(format!("line {line}: smoking {:?}", field(4))))?;
        let profile = ConfoundProfile::new(gender, age, smoking).map_err(|e| bad(format!("line {line}: {e}")))?;
        let subject_id = field(0).to_string();
        if subject_id.is_empty() {
            return Err(bad(format!("line {line}: empty subject_id")));
        }
        if !seen.insert(subject_id.clone()) {
            return Err(AppError::DuplicateSubjectId(subject_id));
        }
        out.push(SubjectRecord { subject_id, label, profile, clip_path: field(5).to_string() });
    }
    Ok(out)
}
