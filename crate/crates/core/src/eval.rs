//! Holdout evaluation: the most recent liked positions (the new-and-unseen
//! sample, NUS) are scored alongside groups of held-out disliked positions
//! (baseline rejected samples, BRS), using only history generated before
//! the NUS. Groups are compared with Welch's test and by how many NUS
//! members land in the top half of a merged ranking.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::engine::{CandidateScore, CvSequence, CycleConfig, EngineError, RankEngine};
use crate::fen::FenRecord;
use crate::metric::ChangeMetric;
use crate::rng::Stream;
use crate::stats::{descriptive, welch_ttest, Descriptive, StatsError, TTestResult};
use crate::store::{CompositionRecord, PreferenceDb, StoreError, Timestamp};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("holdout size must be at least 1")]
    EmptyHoldout,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("insufficient baseline: {0}")]
    InsufficientBaseline(String),
    #[error("lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("fixture {path}: {msg}")]
    Fixture { path: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineSelection {
    /// Draw at random (with the given seed) from the post-cutoff records.
    Random(u64),
    /// Take the earliest post-cutoff records in order.
    Sequential,
}

#[derive(Debug, Clone)]
pub struct Protocol {
    pub train_liked: PreferenceDb,
    pub train_disliked: PreferenceDb,
    pub cutoff: Timestamp,
    pub nus: Vec<FenRecord>,
    pub brs: Vec<(String, Vec<FenRecord>)>,
}

/// `BRS A`, `BRS B`, ... `BRS Z`, `BRS 27`, ...
pub fn group_label(i: usize) -> String {
    if i < 26 {
        format!("BRS {}", (b'A' + i as u8) as char)
    } else {
        format!("BRS {}", i + 1)
    }
}

pub fn build_protocol(
    liked: &PreferenceDb,
    disliked: &PreferenceDb,
    holdout_n: usize,
    baseline_total: usize,
    baseline_groups: usize,
    selection: BaselineSelection,
) -> Result<Protocol, EvalError> {
    if holdout_n == 0 {
        return Err(EvalError::EmptyHoldout);
    }
    if baseline_groups == 0
        || baseline_total == 0
        || !baseline_total.is_multiple_of(baseline_groups)
    {
        return Err(EvalError::InsufficientBaseline(format!(
            "{baseline_total} records cannot be split into {baseline_groups} equal groups"
        )));
    }
    let (train_liked, holdout) = liked.split_holdout(holdout_n)?;
    let cutoff = holdout
        .iter()
        .map(|r| r.generated_at)
        .min()
        .expect("holdout is non-empty");
    let train_disliked = disliked.truncate_before(cutoff);
    let pool: Vec<CompositionRecord> = disliked.from_cutoff(cutoff);
    if pool.len() < baseline_total {
        return Err(EvalError::InsufficientBaseline(format!(
            "only {} disliked records at or after the cutoff, need {baseline_total}",
            pool.len()
        )));
    }
    let picked: Vec<usize> = match selection {
        BaselineSelection::Random(seed) => {
            Stream::new(seed).sample_indices(pool.len(), baseline_total)
        }
        BaselineSelection::Sequential => (0..baseline_total).collect(),
    };
    let per_group = baseline_total / baseline_groups;
    let brs = picked
        .chunks(per_group)
        .enumerate()
        .map(|(g, idx)| {
            (
                group_label(g),
                idx.iter().map(|&i| pool[i].fen.clone()).collect(),
            )
        })
        .collect();

    Ok(Protocol {
        train_liked,
        train_disliked,
        cutoff,
        nus: holdout.into_iter().map(|r| r.fen).collect(),
        brs,
    })
}

/// How many `target` values land in the top half when both lists are
/// merged and sorted descending. Ties rank target values first, then by
/// input position.
pub fn top_half_count(target: &[f64], baseline: &[f64]) -> Result<usize, EvalError> {
    if target.len() != baseline.len() {
        return Err(EvalError::LengthMismatch(target.len(), baseline.len()));
    }
    let n = target.len();
    let mut merged: Vec<(f64, u8, usize)> = target
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, 0u8, i))
        .chain(baseline.iter().enumerate().map(|(i, &v)| (v, 1u8, i)))
        .collect();
    merged.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    Ok(merged[..n].iter().filter(|m| m.1 == 0).count())
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupTest {
    pub group: String,
    pub test: TTestResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct TopHalf {
    pub group: String,
    pub count: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupDescriptive {
    pub group: String,
    #[serde(flatten)]
    pub stats: Descriptive,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub holdout_size: usize,
    pub alpha: f64,
    pub nus_arps: Vec<f64>,
    pub brs_arps: Vec<(String, Vec<f64>)>,
    /// Per-candidate scores; empty in fixture mode.
    pub nus_scores: Vec<CandidateScore>,
    pub brs_scores: Vec<(String, Vec<CandidateScore>)>,
    pub group_tests: Vec<GroupTest>,
    pub top_half: Vec<TopHalf>,
    pub descriptives: Vec<GroupDescriptive>,
}

impl EvaluationReport {
    pub fn mean_top_half_fraction(&self) -> f64 {
        self.top_half.iter().map(|t| t.fraction).sum::<f64>() / self.top_half.len() as f64
    }

    /// Aligned plain-text summary.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:>8} {:>8} {:>8}",
            "group", "max", "median", "mean"
        );
        for d in &self.descriptives {
            let _ = writeln!(
                out,
                "{:<8} {:>8.2} {:>8.2} {:>8.2}",
                d.group, d.stats.max, d.stats.median, d.stats.mean
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<8} {:>8} {:>8} {:>8} {:>5} {:>10}",
            "vs NUS", "t", "df", "p", "sig", "top half"
        );
        for (g, th) in self.group_tests.iter().zip(&self.top_half) {
            let _ = writeln!(
                out,
                "{:<8} {:>8.3} {:>8.2} {:>8.3} {:>5} {:>4}/{:<2} {:>5.1}%",
                g.group,
                g.test.t,
                g.test.df,
                g.test.p,
                if g.test.significant { "yes" } else { "no" },
                th.count,
                self.holdout_size,
                th.fraction * 100.0
            );
        }
        let _ = writeln!(
            out,
            "mean top-half fraction: {:.2}%",
            self.mean_top_half_fraction() * 100.0
        );
        out
    }
}

/// Build the report from ARP lists alone.
pub fn evaluate_arps(
    nus: &[f64],
    groups: &[(String, Vec<f64>)],
    alpha: f64,
) -> Result<EvaluationReport, EvalError> {
    let n = nus.len();
    let mut group_tests = Vec::new();
    let mut top_half = Vec::new();
    let mut descriptives = vec![GroupDescriptive {
        group: "NUS".into(),
        stats: descriptive(nus)?,
    }];
    for (label, arps) in groups {
        group_tests.push(GroupTest {
            group: label.clone(),
            test: welch_ttest(nus, arps, alpha)?,
        });
        let count = top_half_count(nus, arps)?;
        top_half.push(TopHalf {
            group: label.clone(),
            count,
            fraction: count as f64 / n as f64,
        });
        descriptives.push(GroupDescriptive {
            group: label.clone(),
            stats: descriptive(arps)?,
        });
    }
    Ok(EvaluationReport {
        holdout_size: n,
        alpha,
        nus_arps: nus.to_vec(),
        brs_arps: groups.to_vec(),
        nus_scores: Vec::new(),
        brs_scores: Vec::new(),
        group_tests,
        top_half,
        descriptives,
    })
}

/// Score every NUS and BRS position against the training history and
/// compare the groups. NUS candidate `i` uses RNG stream `i`; BRS
/// candidates continue the numbering in group order.
pub fn evaluate(
    protocol: &Protocol,
    metric: &'static dyn ChangeMetric,
    config: &CycleConfig,
    workers: Option<usize>,
) -> Result<EvaluationReport, EvalError> {
    let liked = CvSequence::build(&protocol.train_liked, metric)?;
    let disliked = CvSequence::build(&protocol.train_disliked, metric)?;
    let engine = RankEngine::new(&liked, &disliked, *config)?;

    let nus_scores = engine.score_all_from(&protocol.nus, 0, workers, None)?;
    let mut next = protocol.nus.len() as u64;
    let mut brs_scores = Vec::new();
    for (label, fens) in &protocol.brs {
        let scores = engine.score_all_from(fens, next, workers, None)?;
        next += fens.len() as u64;
        brs_scores.push((label.clone(), scores));
    }

    let arps = |s: &[CandidateScore]| s.iter().map(|c| c.arp).collect::<Vec<f64>>();
    let groups: Vec<(String, Vec<f64>)> = brs_scores
        .iter()
        .map(|(l, s)| (l.clone(), arps(s)))
        .collect();
    let mut report = evaluate_arps(&arps(&nus_scores), &groups, config.alpha)?;
    report.nus_scores = nus_scores;
    report.brs_scores = brs_scores;
    Ok(report)
}

/// Named ARP columns, one per baseline group.
pub type GroupArps = Vec<(String, Vec<f64>)>;

/// Read ARP fixtures: a NUS table whose last column is the
/// average, and a BRS table with one column per group.
pub fn load_fixture(nus_csv: &Path, brs_csv: &Path) -> Result<(Vec<f64>, GroupArps), EvalError> {
    let fixture_err = |p: &Path, msg: String| EvalError::Fixture {
        path: p.display().to_string(),
        msg,
    };
    let read = |p: &Path| -> Result<(Vec<String>, Vec<Vec<f64>>), EvalError> {
        let mut rdr = csv::Reader::from_path(p).map_err(|e| fixture_err(p, e.to_string()))?;
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| fixture_err(p, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| fixture_err(p, e.to_string()))?;
            let row = rec
                .iter()
                .skip(1)
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| fixture_err(p, format!("{v:?}: {e}")))
                })
                .collect::<Result<Vec<f64>, _>>()?;
            rows.push(row);
        }
        Ok((headers, rows))
    };

    let (_, nus_rows) = read(nus_csv)?;
    let nus: Vec<f64> = nus_rows
        .iter()
        .map(|r| {
            r.last()
                .copied()
                .ok_or_else(|| fixture_err(nus_csv, "empty row".into()))
        })
        .collect::<Result<_, _>>()?;
    let (headers, brs_rows) = read(brs_csv)?;
    let groups = headers
        .iter()
        .skip(1)
        .enumerate()
        .map(|(j, h)| (h.clone(), brs_rows.iter().map(|r| r[j]).collect()))
        .collect();
    Ok((nus, groups))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fen::parse_fen;
    use crate::store::Label;
    use chrono::{Duration, NaiveDate, NaiveTime};

    fn fen_n(i: usize) -> FenRecord {
        // Unique FENs via the fullmove counter.
        parse_fen(&format!("k7/8/8/8/8/8/8/K7 w - - 0 {}", i + 1)).unwrap()
    }

    fn db(label: Label, n: usize, start: NaiveDate, offset: usize) -> PreferenceDb {
        let t0 = start.and_time(NaiveTime::MIN);
        PreferenceDb::from_records(
            label,
            (0..n)
                .map(|i| {
                    CompositionRecord::new(
                        fen_n(offset + i),
                        Timestamp::Dated(t0 + Duration::minutes(i as i64 * 50)),
                        i as u64,
                    )
                })
                .collect(),
        )
    }

    #[test]
    fn protocol_sizes() {
        // Liked: 3,041 records; the last 20 start at a known time. Disliked:
        // 9,331 records strictly before it and 697 at or after it.
        let nus_start = NaiveDate::from_ymd_opt(2020, 8, 15)
            .unwrap()
            .and_hms_opt(20, 47, 0)
            .unwrap();
        let mut liked = Vec::new();
        for i in 0..3041 {
            let t = if i < 3021 {
                nus_start - Duration::minutes((3021 - i) as i64)
            } else {
                nus_start + Duration::minutes((i - 3021) as i64)
            };
            liked.push(CompositionRecord::new(
                fen_n(i),
                Timestamp::Dated(t),
                i as u64,
            ));
        }
        let liked = PreferenceDb::from_records(Label::Liked, liked);
        let mut disliked = Vec::new();
        for i in 0..10_028 {
            let t = if i < 9331 {
                nus_start - Duration::seconds((9331 - i) as i64)
            } else {
                nus_start + Duration::seconds((i - 9331) as i64)
            };
            disliked.push(CompositionRecord::new(
                fen_n(100_000 + i),
                Timestamp::Dated(t),
                i as u64,
            ));
        }
        let disliked = PreferenceDb::from_records(Label::Disliked, disliked);

        let p = build_protocol(&liked, &disliked, 20, 60, 3, BaselineSelection::Random(4)).unwrap();
        assert_eq!(p.train_liked.len(), 3021);
        assert_eq!(p.train_disliked.len(), 9331);
        assert_eq!(p.nus.len(), 20);
        assert_eq!(p.brs.len(), 3);
        assert!(p.brs.iter().all(|(_, g)| g.len() == 20));
        assert_eq!(p.brs[0].0, "BRS A");
        let pool: Vec<&str> = disliked.records()[9331..]
            .iter()
            .map(|r| r.fen.text())
            .collect();
        assert!(p
            .brs
            .iter()
            .flat_map(|(_, g)| g)
            .all(|f| pool.contains(&f.text())));

        let seq =
            build_protocol(&liked, &disliked, 20, 60, 3, BaselineSelection::Sequential).unwrap();
        assert_eq!(seq.brs[0].1[0], disliked.records()[9331].fen);
    }

    #[test]
    fn protocol_guards() {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let liked = db(Label::Liked, 50, d0, 0);
        let disliked = db(Label::Disliked, 200, d0, 1000);
        assert!(matches!(
            build_protocol(&liked, &disliked, 5, 61, 3, BaselineSelection::Sequential),
            Err(EvalError::InsufficientBaseline(_))
        ));
        assert!(matches!(
            build_protocol(&liked, &disliked, 0, 60, 3, BaselineSelection::Sequential),
            Err(EvalError::EmptyHoldout)
        ));
        assert!(matches!(
            build_protocol(&liked, &disliked, 50, 60, 3, BaselineSelection::Sequential),
            Err(EvalError::Store(StoreError::HoldoutTooLarge { .. }))
        ));
        assert!(matches!(
            build_protocol(&liked, &disliked, 5, 60, 0, BaselineSelection::Sequential),
            Err(EvalError::InsufficientBaseline(_))
        ));
        // Everything in the disliked db predates the cutoff: no pool at all.
        let late_liked = db(
            Label::Liked,
            50,
            NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
            0,
        );
        assert!(matches!(
            build_protocol(
                &late_liked,
                &disliked,
                5,
                3,
                3,
                BaselineSelection::Sequential
            ),
            Err(EvalError::InsufficientBaseline(_))
        ));
    }

    #[test]
    fn top_half_ties_and_mismatch() {
        let v = [1.0, 2.0, 3.0, 4.0];
        // Ties put the target first, value by value.
        assert_eq!(top_half_count(&v, &v).unwrap(), 2);
        let flat = [5.0; 4];
        assert_eq!(top_half_count(&flat, &flat).unwrap(), 4);
        assert_eq!(top_half_count(&[9.0, 8.0], &[1.0, 2.0]).unwrap(), 2);
        assert_eq!(top_half_count(&[1.0, 2.0], &[9.0, 8.0]).unwrap(), 0);
        assert!(matches!(
            top_half_count(&v, &v[..3]),
            Err(EvalError::LengthMismatch(4, 3))
        ));
    }

    #[test]
    fn identical_group() {
        let nus = vec![10.0, 40.0, 70.0, 90.0];
        let r = evaluate_arps(&nus, &[("BRS A".into(), nus.clone())], 0.05).unwrap();
        assert_eq!(r.group_tests[0].test.t, 0.0);
        assert_eq!(r.group_tests[0].test.p, 1.0);
        assert_eq!(r.top_half[0].count, 2);
        assert!(r.to_table().contains("BRS A"));
    }

    #[test]
    fn group_labels() {
        assert_eq!(group_label(0), "BRS A");
        assert_eq!(group_label(2), "BRS C");
        assert_eq!(group_label(26), "BRS 27");
    }
}
