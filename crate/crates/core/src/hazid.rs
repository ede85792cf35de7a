//! Preliminary hazard analysis records and risk priority numbers.
//!
//! Each rating is an integer 1..=3. Detectability runs the other way from the
//! other two: a hazard the vehicle detects well scores 1.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HazidError {
    #[error("unsupported PHA format `{0}` (expected markdown or csv)")]
    UnsupportedFormat(String),
    #[error("{kind} score {score} outside 1..=3")]
    ScoreOutOfRange { kind: RatingKind, score: u8 },
    #[error("PHA record {row}: {message}")]
    Parse { row: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatingKind {
    Frequency,
    Consequence,
    Detectability,
}

impl fmt::Display for RatingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RatingKind::Frequency => "frequency",
            RatingKind::Consequence => "consequence",
            RatingKind::Detectability => "detectability",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    kind: RatingKind,
    score: u8,
}

impl Rating {
    pub fn new(kind: RatingKind, score: u8) -> Result<Self, HazidError> {
        if !(1..=3).contains(&score) {
            return Err(HazidError::ScoreOutOfRange { kind, score });
        }
        Ok(Rating { kind, score })
    }

    pub fn kind(&self) -> RatingKind {
        self.kind
    }

    pub fn score(&self) -> u8 {
        self.score
    }

    pub fn label(&self) -> &'static str {
        match (self.kind, self.score) {
            (RatingKind::Frequency, 1) => "Low",
            (RatingKind::Consequence, 1) | (RatingKind::Detectability, 3) => "Low/None",
            (_, 2) => "Medium",
            _ => "High",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Seabed,
    Confined,
}

impl Scenario {
    pub fn label(&self) -> &'static str {
        match self {
            Scenario::Seabed => "seabed",
            Scenario::Confined => "confined",
        }
    }

    pub fn parse(label: &str) -> Option<Self> {
        match label {
            "seabed" => Some(Scenario::Seabed),
            "confined" => Some(Scenario::Confined),
            _ => None,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One PHA row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HazardRecord {
    pub scenario: Scenario,
    pub hazard: String,
    pub event: String,
    pub causes: Vec<String>,
    pub consequences: Vec<String>,
    pub frequency: Rating,
    pub consequence: Rating,
    pub detectability: Rating,
}

impl HazardRecord {
    pub fn new(
        scenario: Scenario,
        hazard: impl Into<String>,
        event: impl Into<String>,
        scores: [u8; 3],
    ) -> Result<Self, HazidError> {
        Ok(HazardRecord {
            scenario,
            hazard: hazard.into(),
            event: event.into(),
            causes: Vec::new(),
            consequences: Vec::new(),
            frequency: Rating::new(RatingKind::Frequency, scores[0])?,
            consequence: Rating::new(RatingKind::Consequence, scores[1])?,
            detectability: Rating::new(RatingKind::Detectability, scores[2])?,
        })
    }

    pub fn is_valid(&self) -> bool {
        !self.hazard.is_empty()
            && !self.event.is_empty()
            && self.frequency.kind == RatingKind::Frequency
            && self.consequence.kind == RatingKind::Consequence
            && self.detectability.kind == RatingKind::Detectability
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct RpnScore(u8);

impl RpnScore {
    pub fn value(&self) -> u8 {
        self.0
    }
}

impl fmt::Display for RpnScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub fn compute_rpn(r: &HazardRecord) -> RpnScore {
    RpnScore(r.frequency.score * r.consequence.score * r.detectability.score)
}

/// Stable sort by descending rpn.
pub fn rank_hazards(records: &[HazardRecord]) -> Vec<HazardRecord> {
    let mut ranked = records.to_vec();
    ranked.sort_by_key(|r| std::cmp::Reverse(compute_rpn(r)));
    ranked
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaFormat {
    Markdown,
    Csv,
}

impl std::str::FromStr for PhaFormat {
    type Err = HazidError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "md" | "markdown" => Ok(PhaFormat::Markdown),
            "csv" => Ok(PhaFormat::Csv),
            other => Err(HazidError::UnsupportedFormat(other.to_owned())),
        }
    }
}

pub const CSV_HEADER: [&str; 9] = [
    "scenario",
    "hazard",
    "event",
    "causes",
    "consequences",
    "freq",
    "conseq",
    "detect",
    "rpn",
];

fn rating_cell(r: &Rating) -> String {
    format!("{} {}", r.score, r.label())
}

fn escape_md(s: &str) -> String {
    s.replace('|', "\\|")
}

pub fn render_pha(records: &[HazardRecord], format: PhaFormat) -> String {
    match format {
        PhaFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            w.write_record(CSV_HEADER).expect("in-memory write");
            for r in records {
                w.write_record([
                    r.scenario.label().to_owned(),
                    r.hazard.clone(),
                    r.event.clone(),
                    r.causes.join("; "),
                    r.consequences.join("; "),
                    r.frequency.score.to_string(),
                    r.consequence.score.to_string(),
                    r.detectability.score.to_string(),
                    compute_rpn(r).to_string(),
                ])
                .expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
        }
        PhaFormat::Markdown => {
            let mut out = String::from(
                "| Hazard | Event | Cause | Consequence | Freq | Conseq | Detect | rpn |\n\
                 |---|---|---|---|---|---|---|---|\n",
            );
            for r in records {
                out.push_str(&format!(
                    "| {} | {} | {} | {} | {} | {} | {} | {} |\n",
                    escape_md(&r.hazard),
                    escape_md(&r.event),
                    escape_md(&r.causes.join("; ")),
                    escape_md(&r.consequences.join("; ")),
                    rating_cell(&r.frequency),
                    rating_cell(&r.consequence),
                    rating_cell(&r.detectability),
                    compute_rpn(r),
                ));
            }
            out
        }
    }
}

fn split_list(cell: &str) -> Vec<String> {
    cell.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Parse PHA CSV. The trailing `rpn` column is optional; when present it must
/// equal the product of the three scores.
pub fn parse_pha_csv(text: &str) -> Result<Vec<HazardRecord>, HazidError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| HazidError::Parse {
        row: 0,
        message: e.to_string(),
    })?;
    let has_rpn = match headers.len() {
        8 => false,
        9 => true,
        n => {
            return Err(HazidError::Parse {
                row: 0,
                message: format!("expected 8 or 9 columns, found {n}"),
            })
        }
    };
    if headers.iter().zip(CSV_HEADER).any(|(a, b)| a != b) {
        return Err(HazidError::Parse {
            row: 0,
            message: format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>()),
        });
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let bad = |message: String| HazidError::Parse {
            row: row_no,
            message,
        };
        let row = row.map_err(|e| bad(e.to_string()))?;
        let scenario = Scenario::parse(&row[0])
            .ok_or_else(|| bad(format!("unknown scenario `{}`", &row[0])))?;
        let score = |k: usize| -> Result<u8, HazidError> {
            row[k]
                .trim()
                .parse::<u8>()
                .map_err(|_| bad(format!("score `{}` is not an integer", &row[k])))
        };
        let mut rec = HazardRecord::new(
            scenario,
            row[1].trim(),
            row[2].trim(),
            [score(5)?, score(6)?, score(7)?],
        )
        .map_err(|e| bad(e.to_string()))?;
        if !rec.is_valid() {
            return Err(bad("hazard and event must be nonempty".into()));
        }
        rec.causes = split_list(&row[3]);
        rec.consequences = split_list(&row[4]);
        if has_rpn {
            let stored = score(8)?;
            let rpn = compute_rpn(&rec).value();
            if stored != rpn {
                return Err(bad(format!(
                    "stored rpn {stored} differs from product {rpn}"
                )));
            }
        }
        records.push(rec);
    }
    Ok(records)
}
