//! Chronologically ordered LIKED / DISLIKED composition databases.
//!
//! On disk a store is a directory holding, per label, the PGN the database
//! came from (`liked.pgn`) and a tab-separated sidecar index (`liked.idx`).
//! The index is authoritative when loading. Index lines are
//!
//! ```text
//! ordinal <TAB> timestamp <TAB> fen <TAB> label <TAB> tags-json
//! ```
//!
//! where `timestamp` is `YYYY-MM-DD HH:MM:SS` or `-` for an unknown date.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime, Utc};
use log::{debug, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fen::{parse_fen, FenError, FenRecord};
use crate::pgn::{escape_tag_value, read_games};

const INDEX_HEADER: &str = "# cvrank index v1";
const KEPT_TAGS: &[&str] = &["Event", "Site", "White", "Black", "Composer", "Stipulation"];
const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("no usable games ({skipped} skipped for lack of a FEN tag)")]
    NoUsableGames { skipped: usize },
    #[error("game {ordinal}: {source}")]
    BadGame {
        ordinal: u64,
        #[source]
        source: FenError,
    },
    #[error("holdout of {n} leaves nothing to train on (database has {size} records)")]
    HoldoutTooLarge { n: usize, size: usize },
    #[error("FEN already present in the {label} database: {fen}")]
    DuplicateFen { label: Label, fen: String },
    #[error("no {0} database in store {1}")]
    StoreMissing(Label, PathBuf),
    #[error("{path}:{line}: {msg}")]
    CorruptIndex {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("record labelled {found} cannot go into the {expected} database")]
    LabelMismatch { expected: Label, found: Label },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| {
        if source.kind() == io::ErrorKind::NotFound {
            StoreError::FileNotFound(path.to_path_buf())
        } else {
            StoreError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Liked,
    Disliked,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Liked => "liked",
            Label::Disliked => "disliked",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "liked" => Ok(Label::Liked),
            "disliked" => Ok(Label::Disliked),
            other => Err(format!(
                "unknown label {other:?} (expected liked or disliked)"
            )),
        }
    }
}

/// Generation time of a composition. Unknown dates order after every
/// dated record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Timestamp {
    Dated(NaiveDateTime),
    Unknown,
}

impl Timestamp {
    pub fn from_pgn(date: Option<&str>, time: Option<&str>) -> Timestamp {
        let Some(date) = date else {
            return Timestamp::Unknown;
        };
        let Ok(day) = NaiveDate::parse_from_str(date.trim(), "%Y.%m.%d") else {
            return Timestamp::Unknown;
        };
        let tod = time
            .and_then(|t| {
                let t = t.trim();
                NaiveTime::parse_from_str(t, "%H:%M:%S")
                    .or_else(|_| NaiveTime::parse_from_str(t, "%H:%M"))
                    .ok()
            })
            .unwrap_or(NaiveTime::MIN);
        Timestamp::Dated(day.and_time(tod))
    }

    pub fn now() -> Timestamp {
        let now = Utc::now().naive_utc();
        let secs = now.and_utc().timestamp();
        Timestamp::Dated(
            chrono::DateTime::from_timestamp(secs, 0)
                .map(|d| d.naive_utc())
                .unwrap_or(now),
        )
    }

    pub fn parse_index(s: &str) -> Option<Timestamp> {
        if s == "-" {
            return Some(Timestamp::Unknown);
        }
        NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
            .ok()
            .map(Timestamp::Dated)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Timestamp::Dated(t) => write!(f, "{}", t.format(TIMESTAMP_FORMAT)),
            Timestamp::Unknown => f.write_str("-"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositionRecord {
    pub fen: FenRecord,
    pub generated_at: Timestamp,
    pub source_ordinal: u64,
    pub meta: BTreeMap<String, String>,
}

impl CompositionRecord {
    pub fn new(fen: FenRecord, generated_at: Timestamp, source_ordinal: u64) -> Self {
        CompositionRecord {
            fen,
            generated_at,
            source_ordinal,
            meta: BTreeMap::new(),
        }
    }

    fn sort_key(&self) -> (Timestamp, u64) {
        (self.generated_at, self.source_ordinal)
    }

    fn to_pgn(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            out.push_str(&format!("[{k} \"{}\"]\n", escape_tag_value(v)));
        }
        if let Timestamp::Dated(t) = self.generated_at {
            out.push_str(&format!("[Date \"{}\"]\n", t.format("%Y.%m.%d")));
            out.push_str(&format!("[Time \"{}\"]\n", t.format("%H:%M:%S")));
        }
        out.push_str("[SetUp \"1\"]\n");
        out.push_str(&format!("[FEN \"{}\"]\n\n*\n\n", self.fen.text()));
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub ingested: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceDb {
    label: Label,
    records: Vec<CompositionRecord>,
}

impl PreferenceDb {
    pub fn new(label: Label) -> Self {
        PreferenceDb {
            label,
            records: Vec::new(),
        }
    }

    /// Build a database from arbitrary records; they are sorted into
    /// chronological order (stable on `source_ordinal`).
    pub fn from_records(label: Label, mut records: Vec<CompositionRecord>) -> Self {
        records.sort_by_key(CompositionRecord::sort_key);
        PreferenceDb { label, records }
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn records(&self) -> &[CompositionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn fens(&self) -> impl Iterator<Item = &FenRecord> {
        self.records.iter().map(|r| &r.fen)
    }

    pub fn contains_fen(&self, fen: &FenRecord) -> bool {
        self.records.iter().any(|r| r.fen.text() == fen.text())
    }

    pub fn next_ordinal(&self) -> u64 {
        self.records
            .iter()
            .map(|r| r.source_ordinal + 1)
            .max()
            .unwrap_or(0)
    }

    /// Sorted order and ordinal uniqueness, checked by a full scan.
    pub fn is_well_formed(&self) -> bool {
        let sorted = self
            .records
            .windows(2)
            .all(|w| w[0].sort_key() < w[1].sort_key());
        let mut seen = HashSet::new();
        sorted && self.records.iter().all(|r| seen.insert(r.source_ordinal))
    }

    /// Parse PGN text. Games without a FEN tag are skipped; an invalid FEN
    /// is an error.
    pub fn from_pgn_text(text: &str, label: Label) -> Result<(Self, IngestSummary), StoreError> {
        let mut records = Vec::new();
        let mut summary = IngestSummary::default();
        for (ordinal, game) in read_games(text).into_iter().enumerate() {
            let ordinal = ordinal as u64;
            let Some(fen_text) = game.setup_fen() else {
                summary.skipped += 1;
                continue;
            };
            let fen =
                parse_fen(fen_text).map_err(|source| StoreError::BadGame { ordinal, source })?;
            let generated_at = Timestamp::from_pgn(
                game.tag("Date").or(game.tag("UTCDate")),
                game.tag("Time").or(game.tag("UTCTime")),
            );
            let meta = KEPT_TAGS
                .iter()
                .filter_map(|&k| game.tag(k).map(|v| (k.to_string(), v.to_string())))
                .collect();
            records.push(CompositionRecord {
                fen,
                generated_at,
                source_ordinal: ordinal,
                meta,
            });
        }
        if records.is_empty() {
            return Err(StoreError::NoUsableGames {
                skipped: summary.skipped,
            });
        }
        if summary.skipped > 0 {
            warn!("{} game(s) skipped for lack of a FEN tag", summary.skipped);
        }
        summary.ingested = records.len();
        Ok((Self::from_records(label, records), summary))
    }

    /// Records generated strictly before `cutoff`.
    pub fn truncate_before(&self, cutoff: Timestamp) -> PreferenceDb {
        let end = self.records.partition_point(|r| r.generated_at < cutoff);
        PreferenceDb {
            label: self.label,
            records: self.records[..end].to_vec(),
        }
    }

    /// Records generated at or after `cutoff`.
    pub fn from_cutoff(&self, cutoff: Timestamp) -> Vec<CompositionRecord> {
        let start = self.records.partition_point(|r| r.generated_at < cutoff);
        self.records[start..].to_vec()
    }

    /// Hold out the most recent `n` records.
    pub fn split_holdout(
        &self,
        n: usize,
    ) -> Result<(PreferenceDb, Vec<CompositionRecord>), StoreError> {
        if n >= self.records.len() {
            return Err(StoreError::HoldoutTooLarge {
                n,
                size: self.records.len(),
            });
        }
        let cut = self.records.len() - n;
        Ok((
            PreferenceDb {
                label: self.label,
                records: self.records[..cut].to_vec(),
            },
            self.records[cut..].to_vec(),
        ))
    }

    /// Insert a record at its chronological position.
    pub fn insert(&mut self, record: CompositionRecord) -> Result<(), StoreError> {
        if self.contains_fen(&record.fen) {
            warn!("duplicate {} FEN rejected: {}", self.label, record.fen);
            return Err(StoreError::DuplicateFen {
                label: self.label,
                fen: record.fen.text().to_string(),
            });
        }
        let key = record.sort_key();
        let at = self.records.partition_point(|r| r.sort_key() <= key);
        self.records.insert(at, record);
        Ok(())
    }

    fn to_index(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 80);
        out.push_str(INDEX_HEADER);
        out.push('\n');
        for r in &self.records {
            let meta = serde_json::to_string(&r.meta).expect("string map serializes");
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.source_ordinal, r.generated_at, r.fen, self.label, meta
            ));
        }
        out
    }

    fn from_index(text: &str, label: Label, path: &Path) -> Result<Self, StoreError> {
        let corrupt = |line: usize, msg: String| StoreError::CorruptIndex {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 4 {
                return Err(corrupt(
                    lineno,
                    format!("expected at least 4 columns, found {}", cols.len()),
                ));
            }
            let source_ordinal = cols[0]
                .parse()
                .map_err(|_| corrupt(lineno, format!("bad ordinal {:?}", cols[0])))?;
            let generated_at = Timestamp::parse_index(cols[1])
                .ok_or_else(|| corrupt(lineno, format!("bad timestamp {:?}", cols[1])))?;
            let fen = parse_fen(cols[2]).map_err(|e| corrupt(lineno, e.to_string()))?;
            let row_label: Label = cols[3].parse().map_err(|e| corrupt(lineno, e))?;
            if row_label != label {
                return Err(corrupt(lineno, format!("{row_label} row in {label} index")));
            }
            let meta = match cols.get(4) {
                Some(m) if !m.is_empty() => {
                    serde_json::from_str(m).map_err(|e| corrupt(lineno, e.to_string()))?
                }
                _ => BTreeMap::new(),
            };
            records.push(CompositionRecord {
                fen,
                generated_at,
                source_ordinal,
                meta,
            });
        }
        let db = PreferenceDb { label, records };
        if !db.is_well_formed() {
            return Err(corrupt(
                0,
                "records out of order or ordinals repeated".into(),
            ));
        }
        Ok(db)
    }
}

pub fn ingest_pgn(path: &Path, label: Label) -> Result<(PreferenceDb, IngestSummary), StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    PreferenceDb::from_pgn_text(&text, label)
}

/// When the same FEN sits in both databases, keep it only in the one whose
/// record is newer. Returns the filtered pair and one warning per flip.
pub fn resolve_flips(
    liked: &PreferenceDb,
    disliked: &PreferenceDb,
) -> (PreferenceDb, PreferenceDb, Vec<String>) {
    let in_disliked: HashMap<&str, &CompositionRecord> =
        disliked.records.iter().map(|r| (r.fen.text(), r)).collect();
    let mut drop_liked = HashSet::new();
    let mut drop_disliked = HashSet::new();
    let mut warnings = Vec::new();
    for r in &liked.records {
        if let Some(d) = in_disliked.get(r.fen.text()) {
            if r.generated_at >= d.generated_at {
                drop_disliked.insert(r.fen.text().to_string());
                warnings.push(format!(
                    "{} is in both databases; newer verdict liked wins",
                    r.fen
                ));
            } else {
                drop_liked.insert(r.fen.text().to_string());
                warnings.push(format!(
                    "{} is in both databases; newer verdict disliked wins",
                    r.fen
                ));
            }
        }
    }
    let keep = |db: &PreferenceDb, drop: &HashSet<String>| PreferenceDb {
        label: db.label,
        records: db
            .records
            .iter()
            .filter(|r| !drop.contains(r.fen.text()))
            .cloned()
            .collect(),
    };
    if !warnings.is_empty() {
        warn!(
            "{} positions are in both databases; the newer verdict wins",
            warnings.len()
        );
    }
    for w in &warnings {
        debug!("{w}");
    }
    (
        keep(liked, &drop_liked),
        keep(disliked, &drop_disliked),
        warnings,
    )
}

/// Candidates as PGN (any text containing a tag line) or one FEN per line.
pub fn parse_candidates(text: &str) -> Result<Vec<FenRecord>, String> {
    let looks_like_pgn = text.lines().any(|l| l.trim_start().starts_with('['));
    let fens = if looks_like_pgn {
        let (db, _) = PreferenceDb::from_pgn_text(text, Label::Liked).map_err(|e| e.to_string())?;
        // Candidates keep file order, not date order.
        let mut records = db.records().to_vec();
        records.sort_by_key(|r| r.source_ordinal);
        records.into_iter().map(|r| r.fen).collect()
    } else {
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .enumerate()
            .map(|(i, l)| parse_fen(l).map_err(|e| format!("line {}: {e}", i + 1)))
            .collect::<Result<Vec<_>, _>>()?
    };
    if fens.is_empty() {
        return Err("no candidates".into());
    }
    Ok(fens)
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    let write = || -> io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        if let Some(dir) = path.parent() {
            // Persist the rename itself; not supported everywhere.
            if let Ok(d) = fs::File::open(dir) {
                let _ = d.sync_all();
            }
        }
        Ok(())
    };
    write().map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// A store directory. Mutations go through `&mut self` so a caller holding
/// one `Store` behind a lock gets the single-writer discipline for free.
#[derive(Debug, Clone)]
pub struct Store {
    dir: PathBuf,
}

impl Store {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Store { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn index_path(&self, label: Label) -> PathBuf {
        self.dir.join(format!("{label}.idx"))
    }

    pub fn pgn_path(&self, label: Label) -> PathBuf {
        self.dir.join(format!("{label}.pgn"))
    }

    pub fn has(&self, label: Label) -> bool {
        self.index_path(label).is_file()
    }

    pub fn load(&self, label: Label) -> Result<PreferenceDb, StoreError> {
        let path = self.index_path(label);
        let text = fs::read_to_string(&path).map_err(|e| {
            if e.kind() == io::ErrorKind::NotFound {
                StoreError::StoreMissing(label, self.dir.clone())
            } else {
                StoreError::Io {
                    path: path.clone(),
                    source: e,
                }
            }
        })?;
        PreferenceDb::from_index(&text, label, &path)
    }

    fn ensure_dir(&self) -> Result<(), StoreError> {
        fs::create_dir_all(&self.dir).map_err(|source| StoreError::Io {
            path: self.dir.clone(),
            source,
        })
    }

    /// Write a database; `pgn` replaces the stored PGN when given.
    pub fn save(&mut self, db: &PreferenceDb, pgn: Option<&str>) -> Result<(), StoreError> {
        self.ensure_dir()?;
        if let Some(pgn) = pgn {
            write_atomic(&self.pgn_path(db.label), pgn.as_bytes())?;
        }
        write_atomic(&self.index_path(db.label), db.to_index().as_bytes())
    }

    /// Replace the `label` database with the games of a PGN file.
    pub fn import_pgn(&mut self, path: &Path, label: Label) -> Result<IngestSummary, StoreError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let (db, summary) = PreferenceDb::from_pgn_text(&text, label)?;
        self.save(&db, Some(&text))?;
        Ok(summary)
    }

    /// Record a verdict durably: the record is inserted into the `label`
    /// database and both the PGN and the index are rewritten atomically
    /// before this returns.
    pub fn append_verdict(
        &mut self,
        label: Label,
        fen: FenRecord,
        at: Timestamp,
    ) -> Result<CompositionRecord, StoreError> {
        let mut db = if self.has(label) {
            self.load(label)?
        } else {
            PreferenceDb::new(label)
        };
        let record = CompositionRecord::new(fen, at, db.next_ordinal());
        db.insert(record.clone())?;

        let pgn_path = self.pgn_path(label);
        let mut pgn = match fs::read_to_string(&pgn_path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
            Err(source) => {
                return Err(StoreError::Io {
                    path: pgn_path,
                    source,
                })
            }
        };
        if !pgn.is_empty() && !pgn.ends_with("\n\n") {
            pgn.push_str(if pgn.ends_with('\n') { "\n" } else { "\n\n" });
        }
        pgn.push_str(&record.to_pgn());
        self.save(&db, Some(&pgn))?;
        Ok(record)
    }
}
