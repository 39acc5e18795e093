//! Accuracy records: `model,regime,role,split,shift,accuracy_pct`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rbench_core::metrics::{AccuracyPoint, MetricsError, Regime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::DatasetProfile;

pub const HEADER: [&str; 6] = ["model", "regime", "role", "split", "shift", "accuracy_pct"];

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("failed to read records: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed records file: {0}")]
    Csv(#[from] csv::Error),
    #[error("unexpected header {0:?}, expected model,regime,role,split,shift,accuracy_pct")]
    Header(Vec<String>),
    #[error("row {row}: expected 6 fields, found {found}")]
    FieldCount { row: usize, found: usize },
    #[error("row {row}: unknown regime tag {tag:?}")]
    UnknownRegime { row: usize, tag: String },
    #[error("row {row}: unknown role {tag:?}")]
    UnknownRole { row: usize, tag: String },
    #[error("row {row}: unknown split {tag:?}")]
    UnknownSplit { row: usize, tag: String },
    #[error("row {row}: accuracy {value:?} is not a number in [0, 100]")]
    Range { row: usize, value: String },
    #[error("row {row}: duplicate key (model={model}, regime={regime}, split={split}, shift={shift}), first seen on row {first}")]
    Duplicate {
        row: usize,
        first: usize,
        model: String,
        regime: Regime,
        split: Split,
        shift: String,
    },
    #[error("{model}/{regime}: missing OOD shifts {missing:?}")]
    MissingShifts {
        model: String,
        regime: Regime,
        missing: Vec<String>,
    },
    #[error("{model}/{regime}: no in-domain record")]
    MissingId { model: String, regime: Regime },
    #[error("{model}/{regime}: {count} in-domain records, expected exactly one")]
    AmbiguousId {
        model: String,
        regime: Regime,
        count: usize,
    },
    #[error("no records for reference model {model:?} in regime {regime}")]
    MissingReference { model: String, regime: Regime },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub type Result<T, E = RecordError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Standard,
    Reference,
    Intervention,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Standard => "standard",
            Role::Reference => "reference",
            Role::Intervention => "intervention",
        }
    }
}

impl FromStr for Role {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "standard" => Ok(Role::Standard),
            "reference" => Ok(Role::Reference),
            "intervention" => Ok(Role::Intervention),
            _ => Err(()),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Id,
    Ood,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Id => "id",
            Split::Ood => "ood",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRecord {
    pub model: String,
    pub regime: Regime,
    pub role: Role,
    pub split: Split,
    pub shift: String,
    /// Percentage in `[0, 100]`, as written in the file.
    pub accuracy_pct: f64,
}

impl AccuracyRecord {
    pub fn fraction(&self) -> f64 {
        self.accuracy_pct / 100.0
    }
}

/// Parses records from CSV text. Row numbers in errors count the header as
/// row 1.
pub fn parse_records(text: &str) -> Result<Vec<AccuracyRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        return Err(RecordError::Header(header));
    }

    let mut out = Vec::new();
    let mut seen: HashMap<(String, Regime, Split, String), usize> = HashMap::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 2;
        let row = row?;
        if row.len() != 6 {
            return Err(RecordError::FieldCount {
                row: row_no,
                found: row.len(),
            });
        }
        let regime = row[1].parse::<Regime>().map_err(|_| RecordError::UnknownRegime {
            row: row_no,
            tag: row[1].to_string(),
        })?;
        let role = row[2].parse::<Role>().map_err(|_| RecordError::UnknownRole {
            row: row_no,
            tag: row[2].to_string(),
        })?;
        let split = match &row[3] {
            "id" => Split::Id,
            "ood" => Split::Ood,
            other => {
                return Err(RecordError::UnknownSplit {
                    row: row_no,
                    tag: other.to_string(),
                })
            }
        };
        let accuracy_pct = row[5]
            .parse::<f64>()
            .ok()
            .filter(|v| (0.0..=100.0).contains(v))
            .ok_or_else(|| RecordError::Range {
                row: row_no,
                value: row[5].to_string(),
            })?;
        let record = AccuracyRecord {
            model: row[0].to_string(),
            regime,
            role,
            split,
            shift: row[4].to_string(),
            accuracy_pct,
        };
        let key = (record.model.clone(), regime, split, record.shift.clone());
        if let Some(&first) = seen.get(&key) {
            return Err(RecordError::Duplicate {
                row: row_no,
                first,
                model: record.model,
                regime,
                split,
                shift: record.shift,
            });
        }
        seen.insert(key, row_no);
        out.push(record);
    }
    Ok(out)
}

pub fn load_accuracy_records(path: &Path) -> Result<Vec<AccuracyRecord>> {
    parse_records(&fs::read_to_string(path)?)
}

/// Formats records as CSV with the standard header and LF line endings.
pub fn format_records(records: &[AccuracyRecord]) -> String {
    let mut out = HEADER.join(",");
    out.push('\n');
    for r in records {
        out.push_str(&format_row(r));
    }
    out
}

fn format_row(r: &AccuracyRecord) -> String {
    format!(
        "{},{},{},{},{},{}\n",
        r.model, r.regime, r.role, r.split, r.shift, r.accuracy_pct
    )
}

/// Appends rows, writing the header first if the file is new or empty.
pub fn append_records(path: &Path, records: &[AccuracyRecord]) -> Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(file, "{}", HEADER.join(","))?;
    }
    for r in records {
        file.write_all(format_row(r).as_bytes())?;
    }
    Ok(())
}

/// Unweighted mean OOD accuracy over the profile's shifts, as a fraction.
pub fn average_ood(records: &[&AccuracyRecord], profile: &DatasetProfile) -> Result<f64> {
    let by_shift: HashMap<&str, f64> = records
        .iter()
        .filter(|r| r.split == Split::Ood)
        .map(|r| (r.shift.as_str(), r.fraction()))
        .collect();
    let missing: Vec<String> = profile
        .ood_shifts
        .iter()
        .filter(|s| !by_shift.contains_key(s.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        let (model, regime) = records
            .first()
            .map_or((String::from("?"), Regime::Full), |r| (r.model.clone(), r.regime));
        return Err(RecordError::MissingShifts {
            model,
            regime,
            missing,
        });
    }
    let total: f64 = profile.ood_shifts.iter().map(|s| by_shift[s.as_str()]).sum();
    Ok(total / profile.ood_shifts.len() as f64)
}

/// Records of one dataset grouped by `(model, regime)`.
#[derive(Debug, Clone)]
pub struct RecordTable {
    groups: BTreeMap<(String, Regime), Vec<AccuracyRecord>>,
}

/// A model's aggregated accuracy in one regime.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPoint {
    pub model: String,
    pub regime: Regime,
    pub role: Role,
    pub point: AccuracyPoint,
}

impl RecordTable {
    pub fn new(records: &[AccuracyRecord]) -> Self {
        let mut groups: BTreeMap<(String, Regime), Vec<AccuracyRecord>> = BTreeMap::new();
        for r in records {
            groups
                .entry((r.model.clone(), r.regime))
                .or_default()
                .push(r.clone());
        }
        Self { groups }
    }

    /// `(model, regime)` keys in sorted order.
    pub fn keys(&self) -> impl Iterator<Item = &(String, Regime)> {
        self.groups.keys()
    }

    fn role_of(records: &[AccuracyRecord]) -> Role {
        records.iter().map(|r| r.role).max().unwrap_or(Role::Standard)
    }

    /// In-domain accuracy and profile-averaged OOD accuracy for one model.
    pub fn point(&self, model: &str, regime: Regime, profile: &DatasetProfile) -> Result<ModelPoint> {
        let records = self
            .groups
            .get(&(model.to_string(), regime))
            .ok_or_else(|| RecordError::MissingId {
                model: model.to_string(),
                regime,
            })?;
        let ids: Vec<&AccuracyRecord> = records.iter().filter(|r| r.split == Split::Id).collect();
        let id = match ids.as_slice() {
            [one] => one.fraction(),
            [] => {
                return Err(RecordError::MissingId {
                    model: model.to_string(),
                    regime,
                })
            }
            many => {
                return Err(RecordError::AmbiguousId {
                    model: model.to_string(),
                    regime,
                    count: many.len(),
                })
            }
        };
        let refs: Vec<&AccuracyRecord> = records.iter().collect();
        let ood = average_ood(&refs, profile)?;
        Ok(ModelPoint {
            model: model.to_string(),
            regime,
            role: Self::role_of(records),
            point: AccuracyPoint::new(id, ood)?,
        })
    }

    /// Every `(model, regime)` whose records carry `role`.
    pub fn points_with_role(&self, role: Role, profile: &DatasetProfile) -> Result<Vec<ModelPoint>> {
        self.groups
            .iter()
            .filter(|(_, recs)| Self::role_of(recs) == role)
            .map(|((m, r), _)| self.point(m, *r, profile))
            .collect()
    }

    /// Reference model's average OOD accuracy in `regime`.
    pub fn reference_ood(&self, model: &str, regime: Regime, profile: &DatasetProfile) -> Result<f64> {
        let records = self
            .groups
            .get(&(model.to_string(), regime))
            .ok_or_else(|| RecordError::MissingReference {
                model: model.to_string(),
                regime,
            })?;
        let refs: Vec<&AccuracyRecord> = records.iter().collect();
        average_ood(&refs, profile)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::MetricMode;

    fn profile(shifts: &[&str]) -> DatasetProfile {
        DatasetProfile {
            name: "test".into(),
            metric_mode: MetricMode::Top1,
            ood_shifts: shifts.iter().map(|s| s.to_string()).collect(),
            regimes: Regime::ALL.to_vec(),
        }
    }

    const HEAD: &str = "model,regime,role,split,shift,accuracy_pct\n";

    #[test]
    fn parses_clip_row() {
        let recs = parse_records(&format!("{HEAD}clip_zeroshot,full,intervention,id,val,67.93\n")).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].fraction(), 0.6793);
        assert_eq!(recs[0].role, Role::Intervention);
        assert_eq!(recs[0].regime, Regime::Full);
    }

    #[test]
    fn rejects_out_of_range() {
        let err = parse_records(&format!("{HEAD}m,full,standard,id,val,101\n")).unwrap_err();
        assert!(matches!(err, RecordError::Range { row: 2, .. }), "{err}");
        let err = parse_records(&format!("{HEAD}m,full,standard,id,val,-1\n")).unwrap_err();
        assert!(matches!(err, RecordError::Range { .. }));
        let err = parse_records(&format!("{HEAD}m,full,standard,id,val,abc\n")).unwrap_err();
        assert!(matches!(err, RecordError::Range { .. }));
    }

    #[test]
    fn rejects_duplicates_naming_the_row() {
        let text = format!("{HEAD}m,low,standard,ood,a,10\nm,low,standard,ood,b,10\nm,low,standard,ood,a,12\n");
        let err = parse_records(&text).unwrap_err();
        match &err {
            RecordError::Duplicate { row, first, .. } => assert_eq!((*row, *first), (4, 2)),
            other => panic!("unexpected {other}"),
        }
        assert!(err.to_string().contains("row 4"));
    }

    #[test]
    fn rejects_unknown_tags() {
        assert!(matches!(
            parse_records(&format!("{HEAD}m,tiny,standard,id,val,1\n")).unwrap_err(),
            RecordError::UnknownRegime { .. }
        ));
        assert!(matches!(
            parse_records(&format!("{HEAD}m,low,baseline,id,val,1\n")).unwrap_err(),
            RecordError::UnknownRole { .. }
        ));
        assert!(matches!(
            parse_records(&format!("{HEAD}m,low,standard,test,val,1\n")).unwrap_err(),
            RecordError::UnknownSplit { .. }
        ));
        assert!(matches!(
            parse_records("a,b\n").unwrap_err(),
            RecordError::Header(_)
        ));
    }

    #[test]
    fn average_ood_examples() {
        let rows: String = [("s1", 30.0), ("s2", 20.0), ("s3", 10.0), ("s4", 40.0), ("s5", 50.0)]
            .iter()
            .map(|(s, v)| format!("m,full,standard,ood,{s},{v}\n"))
            .collect();
        let recs = parse_records(&format!("{HEAD}{rows}")).unwrap();
        let p = profile(&["s1", "s2", "s3", "s4", "s5"]);
        let refs: Vec<&AccuracyRecord> = recs.iter().collect();
        assert!((average_ood(&refs, &p).unwrap() - 0.30).abs() < 1e-15);
        let reversed: Vec<&AccuracyRecord> = recs.iter().rev().collect();
        assert_eq!(average_ood(&refs, &p).unwrap(), average_ood(&reversed, &p).unwrap());

        let single = profile(&["s4"]);
        assert_eq!(average_ood(&refs, &single).unwrap(), 0.40);

        let missing = profile(&["s1", "s9", "s8"]);
        match average_ood(&refs, &missing).unwrap_err() {
            RecordError::MissingShifts { missing, .. } => assert_eq!(missing, vec!["s9", "s8"]),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn format_roundtrip() {
        let text = format!("{HEAD}a,extreme,reference,id,val,12.5\na,extreme,reference,ood,x,7.25\n");
        let recs = parse_records(&text).unwrap();
        assert_eq!(format_records(&recs), text);
    }

    #[test]
    fn table_points() {
        let text = format!(
            "{HEAD}m,full,standard,id,val,60\nm,full,standard,ood,x,30\nm,full,standard,ood,y,40\n\
             r,full,reference,ood,x,20\nr,full,reference,ood,y,30\nr,full,reference,id,val,50\n"
        );
        let table = RecordTable::new(&parse_records(&text).unwrap());
        let p = profile(&["x", "y"]);
        let mp = table.point("m", Regime::Full, &p).unwrap();
        assert_eq!(mp.point.acc_id, 0.6);
        assert!((mp.point.acc_ood - 0.35).abs() < 1e-15);
        assert_eq!(table.points_with_role(Role::Reference, &p).unwrap().len(), 1);
        assert!((table.reference_ood("r", Regime::Full, &p).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(
            table.reference_ood("r", Regime::High, &p).unwrap_err(),
            RecordError::MissingReference { .. }
        ));
    }
}
