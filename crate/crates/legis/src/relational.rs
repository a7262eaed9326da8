//! SQLite-backed tables for enactment status, committee assignments, member
//! scores and roll calls.
//!
//! CSV ingestion formats (header row required, extra columns ignored):
//!
//! | table                   | columns                                              |
//! |-------------------------|------------------------------------------------------|
//! | `bill_status`           | `bill_id, enacted, status_text`                      |
//! | `committee_assignments` | `bioguide_id, congress, committee_name, is_chair`    |
//! | `member_scores`         | `bioguide_id, congress, les, nominate_dim1, nominate_dim2` |
//! | `roll_calls`            | `bill_id, roll_number, yea, nay, result`             |
//!
//! Booleans accept `true/false/1/0/yes/no`. Empty numeric cells in
//! `member_scores` load as NULL, never zero.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

use legis_core::model::{BillId, CommitteeAssignment, MemberScores, RollCallSummary};
use rusqlite::types::Value as SqlValue;
use rusqlite::{params, Connection, OptionalExtension};
use serde::Serialize;
use serde_json::{Map, Value};

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS bill_status (
    bill_id TEXT PRIMARY KEY,
    enacted INTEGER NOT NULL,
    status_text TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS committee_assignments (
    bioguide_id TEXT NOT NULL,
    congress INTEGER NOT NULL,
    committee_name TEXT NOT NULL,
    is_chair INTEGER NOT NULL,
    UNIQUE (bioguide_id, congress, committee_name)
);
CREATE TABLE IF NOT EXISTS member_scores (
    bioguide_id TEXT NOT NULL,
    congress INTEGER NOT NULL,
    les REAL,
    nominate_dim1 REAL,
    nominate_dim2 REAL,
    UNIQUE (bioguide_id, congress)
);
CREATE TABLE IF NOT EXISTS roll_calls (
    bill_id TEXT NOT NULL,
    roll_number INTEGER NOT NULL,
    yea INTEGER NOT NULL,
    nay INTEGER NOT NULL,
    result TEXT NOT NULL,
    UNIQUE (bill_id, roll_number)
);
";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Table {
    BillStatus,
    CommitteeAssignments,
    MemberScores,
    RollCalls,
}

impl Table {
    pub const ALL: [Table; 4] = [
        Table::BillStatus,
        Table::CommitteeAssignments,
        Table::MemberScores,
        Table::RollCalls,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Table::BillStatus => "bill_status",
            Table::CommitteeAssignments => "committee_assignments",
            Table::MemberScores => "member_scores",
            Table::RollCalls => "roll_calls",
        }
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Table::BillStatus => &["bill_id", "enacted", "status_text"],
            Table::CommitteeAssignments => &["bioguide_id", "congress", "committee_name", "is_chair"],
            Table::MemberScores => &["bioguide_id", "congress", "les", "nominate_dim1", "nominate_dim2"],
            Table::RollCalls => &["bill_id", "roll_number", "yea", "nay", "result"],
        }
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Table {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Table::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown table {s:?}"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RelationalError {
    #[error("database error: {0}")]
    Sql(#[from] rusqlite::Error),
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("{table}: CSV header is missing column(s): {}", missing.join(", "))]
    MissingColumns { table: Table, missing: Vec<String> },
    #[error("{table}: line {line}: {message}")]
    BadRow { table: Table, line: u64, message: String },
    #[error("no {what} for {key}")]
    NotFound { what: &'static str, key: String },
    #[error("free-form SQL is disabled")]
    SqlDisabled,
    #[error("only a single read-only SELECT statement is allowed")]
    NotReadOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BillStatus {
    pub enacted: bool,
    pub status: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NominateScore {
    pub dim1: Option<f64>,
    pub dim2: Option<f64>,
}

/// One row ready for insertion, already type-checked.
#[derive(Debug, Clone, PartialEq)]
pub enum Row {
    BillStatus { bill_id: BillId, enacted: bool, status_text: String },
    Committee(CommitteeAssignment),
    Scores(MemberScores),
    RollCall(RollCallSummary),
}

/// A single SQLite connection behind a mutex. Statements are short, so
/// serializing them costs little at desk scale; ingestion runs in a transaction so
/// readers never see a half-loaded table.
pub struct RelationalStore {
    conn: Mutex<Connection>,
    allow_sql: bool,
}

impl fmt::Debug for RelationalStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RelationalStore").field("allow_sql", &self.allow_sql).finish()
    }
}

pub fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "y" | "t" => Some(true),
        "false" | "0" | "no" | "n" | "f" => Some(false),
        _ => None,
    }
}

fn parse_opt_f64(s: &str) -> Result<Option<f64>, String> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("null") {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|_| format!("{s:?} is not a number"))
}

fn parse_u32(field: &str, s: &str) -> Result<u32, String> {
    s.trim().parse::<u32>().map_err(|_| format!("{field}: {s:?} is not a non-negative integer"))
}

impl RelationalStore {
    /// Opens a database file, or an in-memory database for `":memory:"`.
    pub fn open(location: &str) -> Result<Self, RelationalError> {
        let conn = if location == ":memory:" {
            Connection::open_in_memory()?
        } else {
            Connection::open(Path::new(location))?
        };
        conn.execute_batch(SCHEMA)?;
        Ok(RelationalStore {
            conn: Mutex::new(conn),
            allow_sql: false,
        })
    }

    pub fn in_memory() -> Self {
        Self::open(":memory:").expect("in-memory SQLite always opens")
    }

    /// Enables `run_readonly_sql`.
    pub fn with_free_sql(mut self, allow: bool) -> Self {
        self.allow_sql = allow;
        self
    }

    pub fn allows_free_sql(&self) -> bool {
        self.allow_sql
    }

    fn conn(&self) -> std::sync::MutexGuard<'_, Connection> {
        self.conn.lock().expect("sqlite connection poisoned")
    }

    /// Replaces the table contents with every row of the CSV file.
    pub fn ingest_table(&self, csv_path: impl AsRef<Path>, table: Table) -> Result<usize, RelationalError> {
        let path = csv_path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| RelationalError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let rows = parse_csv(&text, table)?;
        self.replace_rows(table, &rows)
    }

    /// Truncate-and-load inside one transaction.
    pub fn replace_rows(&self, table: Table, rows: &[Row]) -> Result<usize, RelationalError> {
        self.load_rows(table, rows, true)
    }

    /// Inserts rows, replacing any that collide on the table's unique key.
    pub fn merge_rows(&self, table: Table, rows: &[Row]) -> Result<usize, RelationalError> {
        self.load_rows(table, rows, false)
    }

    fn load_rows(&self, table: Table, rows: &[Row], truncate: bool) -> Result<usize, RelationalError> {
        let mut conn = self.conn();
        let tx = conn.transaction()?;
        if truncate {
            tx.execute(&format!("DELETE FROM {}", table.name()), [])?;
        }
        // Duplicates inside one load are errors; merges replace earlier rows.
        let verb = if truncate { "INSERT" } else { "INSERT OR REPLACE" };
        for (i, row) in rows.iter().enumerate() {
            let res = match row {
                Row::BillStatus {
                    bill_id,
                    enacted,
                    status_text,
                } => tx.execute(
                    &format!("{verb} INTO bill_status (bill_id, enacted, status_text) VALUES (?1, ?2, ?3)"),
                    params![bill_id.render(), enacted, status_text],
                ),
                Row::Committee(c) => tx.execute(
                    &format!("{verb} INTO committee_assignments (bioguide_id, congress, committee_name, is_chair) VALUES (?1, ?2, ?3, ?4)"),
                    params![c.bioguide_id, c.congress, c.committee_name, c.is_chair],
                ),
                Row::Scores(s) => tx.execute(
                    &format!("{verb} INTO member_scores (bioguide_id, congress, les, nominate_dim1, nominate_dim2) VALUES (?1, ?2, ?3, ?4, ?5)"),
                    params![s.bioguide_id, s.congress, s.les, s.nominate_dim1, s.nominate_dim2],
                ),
                Row::RollCall(r) => tx.execute(
                    &format!("{verb} INTO roll_calls (bill_id, roll_number, yea, nay, result) VALUES (?1, ?2, ?3, ?4, ?5)"),
                    params![r.bill_id.render(), r.roll_number, r.yea, r.nay, r.result],
                ),
            };
            res.map_err(|e| RelationalError::BadRow {
                table,
                line: i as u64 + 2,
                message: e.to_string(),
            })?;
        }
        tx.commit()?;
        Ok(rows.len())
    }

    pub fn count(&self, table: Table) -> Result<usize, RelationalError> {
        let n: i64 = self
            .conn()
            .query_row(&format!("SELECT COUNT(*) FROM {}", table.name()), [], |r| r.get(0))?;
        Ok(n as usize)
    }

    pub fn get_bill_status(&self, bill_id: &BillId) -> Result<BillStatus, RelationalError> {
        self.conn()
            .query_row(
                "SELECT enacted, status_text FROM bill_status WHERE bill_id = ?1",
                params![bill_id.render()],
                |r| {
                    Ok(BillStatus {
                        enacted: r.get(0)?,
                        status: r.get(1)?,
                    })
                },
            )
            .optional()?
            .ok_or_else(|| RelationalError::NotFound {
                what: "bill status",
                key: bill_id.render(),
            })
    }

    pub fn get_committee_assignments(
        &self,
        bioguide_id: &str,
        congress: u32,
    ) -> Result<Vec<CommitteeAssignment>, RelationalError> {
        let conn = self.conn();
        let mut stmt = conn.prepare_cached(
            "SELECT bioguide_id, congress, committee_name, is_chair FROM committee_assignments
             WHERE bioguide_id = ?1 AND congress = ?2 ORDER BY committee_name",
        )?;
        let rows = stmt.query_map(params![bioguide_id, congress], |r| {
            Ok(CommitteeAssignment {
                bioguide_id: r.get(0)?,
                congress: r.get(1)?,
                committee_name: r.get(2)?,
                is_chair: r.get(3)?,
            })
        })?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    fn member_scores(&self, bioguide_id: &str, congress: u32) -> Result<Option<MemberScores>, RelationalError> {
        Ok(self
            .conn()
            .query_row(
                "SELECT bioguide_id, congress, les, nominate_dim1, nominate_dim2 FROM member_scores
                 WHERE bioguide_id = ?1 AND congress = ?2",
                params![bioguide_id, congress],
                |r| {
                    Ok(MemberScores {
                        bioguide_id: r.get(0)?,
                        congress: r.get(1)?,
                        les: r.get(2)?,
                        nominate_dim1: r.get(3)?,
                        nominate_dim2: r.get(4)?,
                    })
                },
            )
            .optional()?)
    }

    /// Missing row or missing cell both report `not found`.
    pub fn get_les(&self, bioguide_id: &str, congress: u32) -> Result<f64, RelationalError> {
        self.member_scores(bioguide_id, congress)?
            .and_then(|s| s.les)
            .ok_or_else(|| RelationalError::NotFound {
                what: "LES",
                key: format!("{bioguide_id} in congress {congress}"),
            })
    }

    pub fn get_nominate_score(&self, bioguide_id: &str, congress: u32) -> Result<NominateScore, RelationalError> {
        match self.member_scores(bioguide_id, congress)? {
            Some(s) if s.nominate_dim1.is_some() || s.nominate_dim2.is_some() => Ok(NominateScore {
                dim1: s.nominate_dim1,
                dim2: s.nominate_dim2,
            }),
            _ => Err(RelationalError::NotFound {
                what: "NOMINATE score",
                key: format!("{bioguide_id} in congress {congress}"),
            }),
        }
    }

    /// Roll calls on a bill in roll-number order; empty when there were none.
    pub fn get_roll_call_summary(&self, bill_id: &BillId) -> Result<Vec<RollCallSummary>, RelationalError> {
        let conn = self.conn();
        let mut stmt = conn.prepare_cached(
            "SELECT roll_number, yea, nay, result FROM roll_calls WHERE bill_id = ?1 ORDER BY roll_number",
        )?;
        let rows = stmt.query_map(params![bill_id.render()], |r| {
            Ok(RollCallSummary {
                bill_id: *bill_id,
                roll_number: r.get(0)?,
                yea: r.get(1)?,
                nay: r.get(2)?,
                result: r.get(3)?,
            })
        })?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    /// Runs one SELECT with the connection switched to query-only mode.
    pub fn run_readonly_sql(&self, query: &str) -> Result<Vec<Map<String, Value>>, RelationalError> {
        if !self.allow_sql {
            return Err(RelationalError::SqlDisabled);
        }
        let trimmed = query.trim().trim_end_matches(';');
        let head = trimmed.split_whitespace().next().unwrap_or("").to_ascii_lowercase();
        if !(head == "select" || head == "with") || trimmed.contains(';') {
            return Err(RelationalError::NotReadOnly);
        }
        let conn = self.conn();
        conn.pragma_update(None, "query_only", true)?;
        let result = (|| {
            let mut stmt = conn.prepare(trimmed)?;
            if !stmt.readonly() {
                return Err(RelationalError::NotReadOnly);
            }
            let names: Vec<String> = stmt.column_names().iter().map(|s| s.to_string()).collect();
            let rows = stmt.query_map([], |r| {
                let mut obj = Map::new();
                for (i, name) in names.iter().enumerate() {
                    let v = match r.get::<_, SqlValue>(i)? {
                        SqlValue::Null => Value::Null,
                        SqlValue::Integer(n) => Value::from(n),
                        SqlValue::Real(x) => Value::from(x),
                        SqlValue::Text(s) => Value::from(s),
                        SqlValue::Blob(b) => Value::from(hex::encode(b)),
                    };
                    obj.insert(name.clone(), v);
                }
                Ok(obj)
            })?;
            Ok(rows.collect::<Result<Vec<_>, _>>()?)
        })();
        conn.pragma_update(None, "query_only", false)?;
        result
    }
}

/// Parses and validates a CSV into typed rows. Line numbers count the header as 1.
pub fn parse_csv(text: &str, table: Table) -> Result<Vec<Row>, RelationalError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| RelationalError::BadRow {
        table,
        line: 1,
        message: e.to_string(),
    })?;
    let positions: Vec<Option<usize>> = table
        .columns()
        .iter()
        .map(|c| headers.iter().position(|h| h == *c))
        .collect();
    let missing: Vec<String> = table
        .columns()
        .iter()
        .zip(&positions)
        .filter(|(_, p)| p.is_none())
        .map(|(c, _)| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(RelationalError::MissingColumns { table, missing });
    }
    let idx: Vec<usize> = positions.into_iter().flatten().collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| RelationalError::BadRow {
            table,
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let cell = |i: usize| record.get(idx[i]).unwrap_or("");
        let row = parse_row(table, &cell).map_err(|message| RelationalError::BadRow { table, line, message })?;
        rows.push(row);
    }
    Ok(rows)
}

fn parse_row<'a>(table: Table, cell: &dyn Fn(usize) -> &'a str) -> Result<Row, String> {
    let bill = |s: &str| BillId::parse(s).map_err(|e| format!("bill_id: {e}"));
    let boolean = |field: &str, s: &str| parse_bool(s).ok_or_else(|| format!("{field}: {s:?} is not a boolean"));
    let row = match table {
        Table::BillStatus => {
            let enacted = boolean("enacted", cell(1))?;
            let status_text = cell(2).to_string();
            if enacted && status_text.is_empty() {
                return Err("status_text must be non-empty for enacted bills".into());
            }
            Row::BillStatus {
                bill_id: bill(cell(0))?,
                enacted,
                status_text,
            }
        }
        Table::CommitteeAssignments => {
            let c = CommitteeAssignment {
                bioguide_id: cell(0).to_string(),
                congress: parse_u32("congress", cell(1))?,
                committee_name: cell(2).to_string(),
                is_chair: boolean("is_chair", cell(3))?,
            };
            c.validate().map_err(|e| e.to_string())?;
            Row::Committee(c)
        }
        Table::MemberScores => {
            let s = MemberScores {
                bioguide_id: cell(0).to_string(),
                congress: parse_u32("congress", cell(1))?,
                les: parse_opt_f64(cell(2)).map_err(|e| format!("les: {e}"))?,
                nominate_dim1: parse_opt_f64(cell(3)).map_err(|e| format!("nominate_dim1: {e}"))?,
                nominate_dim2: parse_opt_f64(cell(4)).map_err(|e| format!("nominate_dim2: {e}"))?,
            };
            s.validate().map_err(|e| e.to_string())?;
            Row::Scores(s)
        }
        Table::RollCalls => {
            let r = RollCallSummary {
                bill_id: bill(cell(0))?,
                roll_number: parse_u32("roll_number", cell(1))?,
                yea: parse_u32("yea", cell(2))?,
                nay: parse_u32("nay", cell(3))?,
                result: cell(4).to_string(),
            };
            r.validate().map_err(|e| e.to_string())?;
            Row::RollCall(r)
        }
    };
    Ok(row)
}
