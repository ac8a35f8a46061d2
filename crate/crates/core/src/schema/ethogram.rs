//! One-hot ethogram spreadsheet: one row per bird per frame.

use serde::Serialize;

use super::labels::{Behavior, Posture};
use crate::error::{Error, Result};

pub const COLUMNS: [&str; 15] = [
    "date", "image", "time", "bird ID", "WLK", "SIT", "STD", "EAT", "DRK", "PRE", "PRA", "FOR",
    "DUB", "NVS", "count",
];

/// The ten indicator columns, in file order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flag {
    Wlk,
    Sit,
    Std,
    Eat,
    Drk,
    Pre,
    Pra,
    For,
    Dub,
    Nvs,
}

impl Flag {
    pub const ALL: [Flag; 10] = [
        Flag::Wlk,
        Flag::Sit,
        Flag::Std,
        Flag::Eat,
        Flag::Drk,
        Flag::Pre,
        Flag::Pra,
        Flag::For,
        Flag::Dub,
        Flag::Nvs,
    ];

    pub fn column(self) -> &'static str {
        COLUMNS[4 + self as usize]
    }

    pub fn for_posture(p: Posture) -> Flag {
        match p {
            Posture::Walking => Flag::Wlk,
            Posture::Sitting => Flag::Sit,
            Posture::Standing => Flag::Std,
        }
    }

    /// `None` for control, which has no column.
    pub fn for_behavior(b: Behavior) -> Option<Flag> {
        match b {
            Behavior::Eating => Some(Flag::Eat),
            Behavior::Drinking => Some(Flag::Drk),
            Behavior::Preening => Some(Flag::Pre),
            Behavior::AlloPreening => Some(Flag::Pra),
            Behavior::Foraging => Some(Flag::For),
            Behavior::DustBathing => Some(Flag::Dub),
            Behavior::Control => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EthogramRow {
    /// One-based line in the source file; 0 for rows built in memory.
    pub line: u64,
    pub date: String,
    pub image: String,
    pub time: String,
    pub bird_id: u32,
    pub flags: [bool; 10],
    pub count: i64,
}

impl EthogramRow {
    pub fn flag(&self, f: Flag) -> bool {
        self.flags[f as usize]
    }

    pub fn set(&mut self, f: Flag, on: bool) {
        self.flags[f as usize] = on;
    }

    pub fn flag_sum(&self) -> i64 {
        self.flags.iter().filter(|f| **f).count() as i64
    }

    pub fn not_visible(&self) -> bool {
        self.flag(Flag::Nvs)
    }

    pub fn postures(&self) -> Vec<Posture> {
        Posture::ALL
            .into_iter()
            .filter(|p| self.flag(Flag::for_posture(*p)))
            .collect()
    }

    pub fn behaviors(&self) -> Vec<Behavior> {
        Behavior::ALL
            .into_iter()
            .filter(|b| Flag::for_behavior(*b).is_some_and(|f| self.flag(f)))
            .collect()
    }
}

pub fn parse_ethogram_csv(bytes: &[u8]) -> Result<Vec<EthogramRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(bytes);

    let headers = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
    let mut index = [usize::MAX; 15];
    for (pos, name) in headers.iter().enumerate() {
        let name = name.trim();
        let Some(col) = COLUMNS.iter().position(|c| *c == name) else {
            return Err(Error::Schema(format!("unknown column {name:?}")));
        };
        if index[col] != usize::MAX {
            return Err(Error::Schema(format!("duplicate column {name:?}")));
        }
        index[col] = pos;
    }
    if let Some(missing) = COLUMNS
        .iter()
        .zip(index)
        .find_map(|(c, i)| (i == usize::MAX).then_some(c))
    {
        return Err(Error::Schema(format!("missing column {missing:?}")));
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(e, 0))?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = |col: usize| record.get(index[col]).unwrap_or("").trim();

        let bird_id: u32 = cell(3).parse().ok().filter(|id| *id > 0).ok_or_else(|| {
            Error::parse_at_line(
                line,
                format!("bird ID {:?} is not a positive integer", cell(3)),
            )
        })?;
        let mut flags = [false; 10];
        for (k, flag) in flags.iter_mut().enumerate() {
            *flag = match cell(4 + k) {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::parse_at_line(
                        line,
                        format!("column {} must be 0 or 1, got {other:?}", COLUMNS[4 + k]),
                    ))
                }
            };
        }
        let count: i64 = cell(14).parse().map_err(|_| {
            Error::parse_at_line(line, format!("count {:?} is not an integer", cell(14)))
        })?;

        rows.push(EthogramRow {
            line,
            date: cell(0).to_string(),
            image: cell(1).to_string(),
            time: cell(2).to_string(),
            bird_id,
            flags,
            count,
        });
    }
    Ok(rows)
}

fn csv_error(e: csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line());
    Error::parse_at_line(line, e.to_string())
}

/// Canonical serialization: header in file order, `\n` terminators.
pub fn write_ethogram_csv(rows: &[EthogramRow]) -> String {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    // Writing into a Vec cannot fail.
    writer.write_record(COLUMNS).expect("in-memory write");
    for row in rows {
        let mut record: Vec<String> = vec![
            row.date.clone(),
            row.image.clone(),
            row.time.clone(),
            row.bird_id.to_string(),
        ];
        record.extend(
            row.flags
                .iter()
                .map(|f| if *f { "1" } else { "0" }.to_string()),
        );
        record.push(row.count.to_string());
        writer.write_record(&record).expect("in-memory write");
    }
    let bytes = writer.into_inner().expect("in-memory flush");
    String::from_utf8(bytes).expect("csv output is utf-8")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ViolationCode {
    /// `count` outside {1, 2} or different from the number of set flags.
    CountRule,
    MultiplePostures,
    MultipleBehaviors,
    /// Not-visible flag combined with a posture or behavior.
    NvsConflict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowViolation {
    pub line: u64,
    pub image: String,
    pub bird_id: u32,
    pub code: ViolationCode,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<RowViolation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn row_violations(row: &EthogramRow) -> Vec<ViolationCode> {
    let mut codes = Vec::new();
    if !(1..=2).contains(&row.count) || row.count != row.flag_sum() {
        codes.push(ViolationCode::CountRule);
    }
    if row.postures().len() > 1 {
        codes.push(ViolationCode::MultiplePostures);
    }
    if row.behaviors().len() > 1 {
        codes.push(ViolationCode::MultipleBehaviors);
    }
    if row.not_visible() && row.flag_sum() > 1 {
        codes.push(ViolationCode::NvsConflict);
    }
    codes
}

/// Sanity checks over parsed rows. Entries follow input order.
pub fn validate_rows(rows: &[EthogramRow]) -> ValidationReport {
    let violations = rows
        .iter()
        .flat_map(|row| {
            row_violations(row).into_iter().map(|code| RowViolation {
                line: row.line,
                image: row.image.clone(),
                bird_id: row.bird_id,
                code,
            })
        })
        .collect();
    ValidationReport { violations }
}
