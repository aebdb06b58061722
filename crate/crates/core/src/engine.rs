//! Change-value sequences, chunked Welch tests and average rank percentages.
//!
//! For one candidate FEN and one sample size `s`, both databases' CV
//! sequences are cut into consecutive chunks of `s`. Every liked chunk is
//! tested against every disliked chunk twice: once as is (T1) and once with
//! the liked chunk's last CV recomputed against the candidate (T2). A move
//! from insignificant to significant is a POS, the reverse a NEG, and the
//! cycle's rank percentage is `POS / (POS + NEG) * 100`. The candidate's
//! score (ARP) is the mean over cycles of growing random sample size.
//!
//! CVs travel through the engine as integer mismatch counts, so chunk sums
//! are exact and T1 results can be cached per sample size: they never
//! involve the candidate.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fen::FenRecord;
use crate::metric::{ChangeMetric, ChangeValue, PaddedBytes};
use crate::rng::{Stream, BATCH_STREAM};
use crate::stats::{check_alpha, welch_from_summaries, SampleSummary};
use crate::store::{Label, PreferenceDb};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("the {0} database is empty")]
    EmptyDatabase(Label),
    #[error("the {label} database has {len} records, fewer than the sample size {needed}")]
    DatabaseTooSmall {
        label: Label,
        len: usize,
        needed: usize,
    },
    #[error("chunk sizes differ: {0} vs {1}")]
    ChunkSizeMismatch(usize, usize),
    #[error("sample size must be at least 2, got {0}")]
    SampleSizeTooSmall(usize),
    #[error("invalid cycle configuration: {0}")]
    InvalidConfig(String),
    #[error("sequences were built with different metrics ({0} vs {1})")]
    MetricMismatch(&'static str, &'static str),
    #[error("no candidates to score")]
    NoCandidates,
}

/// A database's FENs in chronological order with the CV of each against
/// its predecessor. The first CV is always 0.
#[derive(Clone)]
pub struct CvSequence {
    label: Label,
    fens: Vec<FenRecord>,
    counts: Vec<u32>,
    metric: &'static dyn ChangeMetric,
}

impl std::fmt::Debug for CvSequence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CvSequence")
            .field("label", &self.label)
            .field("len", &self.fens.len())
            .field("metric", &self.metric.name())
            .finish()
    }
}

impl PartialEq for CvSequence {
    fn eq(&self, other: &Self) -> bool {
        self.label == other.label
            && self.fens == other.fens
            && self.counts == other.counts
            && self.metric.name() == other.metric.name()
    }
}

impl CvSequence {
    pub fn build(
        db: &PreferenceDb,
        metric: &'static dyn ChangeMetric,
    ) -> Result<Self, EngineError> {
        Self::from_fens(db.label(), db.fens().cloned().collect(), metric)
    }

    pub fn from_fens(
        label: Label,
        fens: Vec<FenRecord>,
        metric: &'static dyn ChangeMetric,
    ) -> Result<Self, EngineError> {
        if fens.is_empty() {
            return Err(EngineError::EmptyDatabase(label));
        }
        let mut counts = Vec::with_capacity(fens.len());
        counts.push(0);
        counts.extend(fens.windows(2).map(|w| metric.mismatch_count(&w[0], &w[1])));
        Ok(CvSequence {
            label,
            fens,
            counts,
            metric,
        })
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn len(&self) -> usize {
        self.fens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fens.is_empty()
    }

    pub fn fens(&self) -> &[FenRecord] {
        &self.fens
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn metric(&self) -> &'static dyn ChangeMetric {
        self.metric
    }

    pub fn cv(&self, i: usize) -> ChangeValue {
        ChangeValue::from_count(self.counts[i], self.metric.resolution())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&FenRecord, ChangeValue)> + '_ {
        (0..self.len()).map(move |i| (&self.fens[i], self.cv(i)))
    }
}

/// CV sequence under the default padded-byte metric.
pub fn build_cv_sequence(db: &PreferenceDb) -> Result<CvSequence, EngineError> {
    CvSequence::build(db, &PaddedBytes)
}

/// A contiguous slice of a CV sequence.
#[derive(Debug, Clone, Copy)]
pub struct Chunk<'a> {
    pub start_index: usize,
    seq: &'a CvSequence,
    size: usize,
}

impl<'a> Chunk<'a> {
    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn fens(&self) -> &'a [FenRecord] {
        &self.seq.fens[self.start_index..self.start_index + self.size]
    }

    pub fn counts(&self) -> &'a [u32] {
        &self.seq.counts[self.start_index..self.start_index + self.size]
    }

    pub fn cvs(&self) -> Vec<ChangeValue> {
        (self.start_index..self.start_index + self.size)
            .map(|i| self.seq.cv(i))
            .collect()
    }
}

/// `⌊len / s⌋` consecutive chunks; the remainder is dropped.
pub fn partition_chunks(seq: &CvSequence, s: usize) -> Result<Vec<Chunk<'_>>, EngineError> {
    if s < 2 {
        return Err(EngineError::SampleSizeTooSmall(s));
    }
    let n = seq.len() / s;
    if n == 0 {
        return Err(EngineError::DatabaseTooSmall {
            label: seq.label,
            len: seq.len(),
            needed: s,
        });
    }
    Ok((0..n)
        .map(|k| Chunk {
            start_index: k * s,
            seq,
            size: s,
        })
        .collect())
}

/// The chunk's CVs with the last one replaced by the CV from the chunk's
/// penultimate FEN to `new_fen`. The chunk itself is untouched.
pub fn substitute_last(chunk: &Chunk<'_>, new_fen: &FenRecord) -> Vec<ChangeValue> {
    let mut cvs = chunk.cvs();
    let s = chunk.len();
    if s >= 2 {
        cvs[s - 1] = chunk.seq.metric.change_value(&chunk.fens()[s - 2], new_fen);
    }
    cvs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Transition {
    Pos,
    Neg,
    None,
}

impl Transition {
    pub fn from_significance(t1: bool, t2: bool) -> Transition {
        match (t1, t2) {
            (false, true) => Transition::Pos,
            (true, false) => Transition::Neg,
            _ => Transition::None,
        }
    }
}

fn summary_of(cvs: &[ChangeValue]) -> SampleSummary {
    let scale = 100.0 / cvs[0].resolution() as f64;
    let sum: i64 = cvs.iter().map(|c| c.count() as i64).sum();
    let sq: i64 = cvs.iter().map(|c| (c.count() as i64).pow(2)).sum();
    SampleSummary::from_integer_sums(cvs.len(), sum, sq, scale)
}

/// T1 on the chunks as they are, T2 with the candidate in the liked
/// chunk's last slot.
pub fn paired_test(
    ld_chunk: &Chunk<'_>,
    dd_chunk: &Chunk<'_>,
    new_fen: &FenRecord,
    alpha: f64,
) -> Result<Transition, EngineError> {
    if ld_chunk.len() != dd_chunk.len() {
        return Err(EngineError::ChunkSizeMismatch(
            ld_chunk.len(),
            dd_chunk.len(),
        ));
    }
    check_alpha(alpha).map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
    let dd = summary_of(&dd_chunk.cvs());
    let t1 = welch_from_summaries(&summary_of(&ld_chunk.cvs()), &dd, alpha);
    let t2 = welch_from_summaries(&summary_of(&substitute_last(ld_chunk, new_fen)), &dd, alpha);
    Ok(Transition::from_significance(
        t1.significant,
        t2.significant,
    ))
}

/// Rank percentage from transition counts; 50 with the neutral flag when
/// there were no transitions at all.
pub fn rank_percentage(pos: u64, neg: u64) -> (f64, bool) {
    if pos + neg == 0 {
        (50.0, true)
    } else {
        (pos as f64 / (pos + neg) as f64 * 100.0, false)
    }
}

pub fn average_rank_percentage(rps: &[f64]) -> f64 {
    rps.iter().sum::<f64>() / rps.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleConfig {
    pub first_size_min: usize,
    pub first_size_max: usize,
    pub increment_min: usize,
    pub increment_max: usize,
    pub size_cap: usize,
    pub cycles: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Draw one size progression for a whole batch instead of one per
    /// candidate. Scores differ from the default mode.
    #[serde(default)]
    pub shared_sizes: bool,
}

impl Default for CycleConfig {
    fn default() -> Self {
        CycleConfig {
            first_size_min: 30,
            first_size_max: 40,
            increment_min: 1,
            increment_max: 10,
            size_cap: 60,
            cycles: 3,
            alpha: 0.05,
            seed: 0,
            shared_sizes: false,
        }
    }
}

impl CycleConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::InvalidConfig(m));
        if self.first_size_min < 2 {
            return bad(format!("first_size_min {} < 2", self.first_size_min));
        }
        if self.first_size_min > self.first_size_max {
            return bad(format!(
                "first_size_min {} > first_size_max {}",
                self.first_size_min, self.first_size_max
            ));
        }
        if self.first_size_max > self.size_cap {
            return bad(format!(
                "first_size_max {} > size_cap {}",
                self.first_size_max, self.size_cap
            ));
        }
        if self.increment_min > self.increment_max {
            return bad(format!(
                "increment_min {} > increment_max {}",
                self.increment_min, self.increment_max
            ));
        }
        if self.cycles == 0 {
            return bad("cycles must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} outside (0, 1)", self.alpha));
        }
        Ok(())
    }

    /// Largest sample size any cycle can reach.
    pub fn max_sample_size(&self) -> usize {
        (self.first_size_max + (self.cycles - 1) * self.increment_max).min(self.size_cap)
    }

    /// The sample size of each cycle: a uniform first size, then uniform
    /// increments, clamped to the cap.
    pub fn draw_sizes(&self, rng: &mut Stream) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.cycles);
        let mut s =
            rng.uniform_inclusive(self.first_size_min as u64, self.first_size_max as u64) as usize;
        sizes.push(s);
        for _ in 1..self.cycles {
            let inc = rng.uniform_inclusive(self.increment_min as u64, self.increment_max as u64)
                as usize;
            s = (s + inc).min(self.size_cap);
            sizes.push(s);
        }
        sizes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleScore {
    pub sample_size: usize,
    pub pos: u64,
    pub neg: u64,
    pub rp: f64,
    pub neutral: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateScore {
    pub fen: FenRecord,
    pub cycles: Vec<CycleScore>,
    pub arp: f64,
}

/// Result of one cycle, with the number of Welch tests it stands for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleOutcome {
    pub score: CycleScore,
    pub welch_tests: u64,
}

#[derive(Debug, Default)]
pub struct Counters {
    /// Welch tests the method calls for (T1 and T2 for every pair).
    pub logical: AtomicU64,
    /// Welch tests actually evaluated; lower than `logical` when T1 is cached.
    pub computed: AtomicU64,
}

impl Counters {
    pub fn logical(&self) -> u64 {
        self.logical.load(Ordering::Relaxed)
    }

    pub fn computed(&self) -> u64 {
        self.computed.load(Ordering::Relaxed)
    }
}

/// Prefix sums of counts and squared counts.
#[derive(Debug)]
struct Prefix {
    sum: Vec<i64>,
    sum_sq: Vec<i64>,
}

impl Prefix {
    fn new(counts: &[u32]) -> Self {
        let mut sum = Vec::with_capacity(counts.len() + 1);
        let mut sum_sq = Vec::with_capacity(counts.len() + 1);
        let (mut a, mut b) = (0i64, 0i64);
        sum.push(0);
        sum_sq.push(0);
        for &c in counts {
            a += c as i64;
            b += (c as i64) * (c as i64);
            sum.push(a);
            sum_sq.push(b);
        }
        Prefix { sum, sum_sq }
    }

    fn range(&self, start: usize, len: usize) -> (i64, i64) {
        (
            self.sum[start + len] - self.sum[start],
            self.sum_sq[start + len] - self.sum_sq[start],
        )
    }
}

/// Scores candidates against a pair of CV sequences.
pub struct RankEngine<'a> {
    liked: &'a CvSequence,
    disliked: &'a CvSequence,
    config: CycleConfig,
    scale: f64,
    liked_prefix: Prefix,
    disliked_prefix: Prefix,
    cache_t1: bool,
    t1_tables: Mutex<HashMap<usize, Arc<Vec<bool>>>>,
    counters: Counters,
}

impl<'a> RankEngine<'a> {
    pub fn new(
        liked: &'a CvSequence,
        disliked: &'a CvSequence,
        config: CycleConfig,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        let (lm, dm) = (liked.metric.name(), disliked.metric.name());
        if lm != dm {
            return Err(EngineError::MetricMismatch(lm, dm));
        }
        Ok(RankEngine {
            liked,
            disliked,
            config,
            scale: 100.0 / liked.metric.resolution() as f64,
            liked_prefix: Prefix::new(&liked.counts),
            disliked_prefix: Prefix::new(&disliked.counts),
            cache_t1: true,
            t1_tables: Mutex::new(HashMap::new()),
            counters: Counters::default(),
        })
    }

    /// Turn T1 caching on or off. Results are identical either way.
    pub fn with_t1_cache(mut self, on: bool) -> Self {
        self.cache_t1 = on;
        self
    }

    pub fn config(&self) -> &CycleConfig {
        &self.config
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    fn check_size(&self, s: usize) -> Result<(), EngineError> {
        if s < 2 {
            return Err(EngineError::SampleSizeTooSmall(s));
        }
        for seq in [self.liked, self.disliked] {
            if seq.len() < s {
                return Err(EngineError::DatabaseTooSmall {
                    label: seq.label,
                    len: seq.len(),
                    needed: s,
                });
            }
        }
        Ok(())
    }

    fn summary(&self, n: usize, sum: i64, sum_sq: i64) -> SampleSummary {
        SampleSummary::from_integer_sums(n, sum, sum_sq, self.scale)
    }

    fn t1_table(&self, s: usize, ld: &[SampleSummary], dd: &[SampleSummary]) -> Arc<Vec<bool>> {
        let compute = || {
            let mut table = Vec::with_capacity(ld.len() * dd.len());
            for a in ld {
                for b in dd {
                    table.push(welch_from_summaries(a, b, self.config.alpha).significant);
                }
            }
            self.counters
                .computed
                .fetch_add(table.len() as u64, Ordering::Relaxed);
            Arc::new(table)
        };
        if !self.cache_t1 {
            return compute();
        }
        if let Some(t) = self.t1_tables.lock().unwrap().get(&s) {
            return Arc::clone(t);
        }
        let table = compute();
        Arc::clone(self.t1_tables.lock().unwrap().entry(s).or_insert(table))
    }

    /// One full pass over every (liked chunk, disliked chunk) pair at
    /// sample size `s`.
    pub fn run_cycle(&self, new_fen: &FenRecord, s: usize) -> Result<CycleOutcome, EngineError> {
        self.check_size(s)?;
        let n_liked = self.liked.len() / s;
        let n_disliked = self.disliked.len() / s;
        let alpha = self.config.alpha;

        let liked_sums: Vec<(i64, i64)> = (0..n_liked)
            .map(|b| self.liked_prefix.range(b * s, s))
            .collect();
        let ld: Vec<SampleSummary> = liked_sums
            .iter()
            .map(|&(a, q)| self.summary(s, a, q))
            .collect();
        let dd: Vec<SampleSummary> = (0..n_disliked)
            .map(|c| {
                let (a, q) = self.disliked_prefix.range(c * s, s);
                self.summary(s, a, q)
            })
            .collect();
        let t1 = self.t1_table(s, &ld, &dd);

        let metric = self.liked.metric;
        let (mut pos, mut neg) = (0u64, 0u64);
        for (b, &(sum, sum_sq)) in liked_sums.iter().enumerate() {
            let last = b * s + s - 1;
            let old = self.liked.counts[last] as i64;
            let new = metric.mismatch_count(&self.liked.fens[last - 1], new_fen) as i64;
            let swapped = self.summary(s, sum - old + new, sum_sq - old * old + new * new);
            for (c, d) in dd.iter().enumerate() {
                let sig1 = t1[b * n_disliked + c];
                let sig2 = welch_from_summaries(&swapped, d, alpha).significant;
                match Transition::from_significance(sig1, sig2) {
                    Transition::Pos => pos += 1,
                    Transition::Neg => neg += 1,
                    Transition::None => {}
                }
            }
        }
        let pairs = (n_liked * n_disliked) as u64;
        self.counters.computed.fetch_add(pairs, Ordering::Relaxed);
        self.counters
            .logical
            .fetch_add(2 * pairs, Ordering::Relaxed);

        let (rp, neutral) = rank_percentage(pos, neg);
        Ok(CycleOutcome {
            score: CycleScore {
                sample_size: s,
                pos,
                neg,
                rp,
                neutral,
            },
            welch_tests: 2 * pairs,
        })
    }

    /// Fails unless both databases hold the largest sample size.
    pub fn ensure_capacity(&self) -> Result<(), EngineError> {
        self.check_size(self.config.max_sample_size())
    }

    /// Score with an explicit size progression.
    pub fn score_with_sizes(
        &self,
        new_fen: &FenRecord,
        sizes: &[usize],
    ) -> Result<CandidateScore, EngineError> {
        let mut cycles = Vec::with_capacity(sizes.len());
        for &s in sizes {
            cycles.push(self.run_cycle(new_fen, s)?.score);
        }
        let rps: Vec<f64> = cycles.iter().map(|c| c.rp).collect();
        Ok(CandidateScore {
            fen: new_fen.clone(),
            arp: average_rank_percentage(&rps),
            cycles,
        })
    }

    pub fn score_candidate(
        &self,
        new_fen: &FenRecord,
        rng: &mut Stream,
    ) -> Result<CandidateScore, EngineError> {
        self.ensure_capacity()?;
        let sizes = self.config.draw_sizes(rng);
        self.score_with_sizes(new_fen, &sizes)
    }

    /// Score every candidate, returned in input order. Candidate `i` draws
    /// its sizes from stream `i` of the configured seed, so the result does
    /// not depend on `workers`.
    pub fn score_all(
        &self,
        candidates: &[FenRecord],
        workers: Option<usize>,
        progress: Option<&(dyn Fn(usize) + Sync)>,
    ) -> Result<Vec<CandidateScore>, EngineError> {
        self.score_all_from(candidates, 0, workers, progress)
    }

    /// As [`score_all`](Self::score_all) with stream indices starting at
    /// `first_ordinal`.
    pub fn score_all_from(
        &self,
        candidates: &[FenRecord],
        first_ordinal: u64,
        workers: Option<usize>,
        progress: Option<&(dyn Fn(usize) + Sync)>,
    ) -> Result<Vec<CandidateScore>, EngineError> {
        if candidates.is_empty() {
            return Err(EngineError::NoCandidates);
        }
        self.ensure_capacity()?;
        let shared = self.config.shared_sizes.then(|| {
            self.config
                .draw_sizes(&mut Stream::split(self.config.seed, BATCH_STREAM))
        });
        let done = AtomicUsize::new(0);
        let score_one = |(i, fen): (usize, &FenRecord)| {
            let out = match &shared {
                Some(sizes) => self.score_with_sizes(fen, sizes),
                None => {
                    let mut rng = Stream::split(self.config.seed, first_ordinal + i as u64);
                    self.score_candidate(fen, &mut rng)
                }
            };
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            if let Some(cb) = progress {
                cb(n);
            }
            out
        };

        match workers {
            Some(1) => candidates.iter().enumerate().map(score_one).collect(),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
                pool.install(|| candidates.par_iter().enumerate().map(score_one).collect())
            }
            None => candidates.par_iter().enumerate().map(score_one).collect(),
        }
    }

    /// Scores sorted by ARP, highest first; ties keep input order.
    pub fn rank_collection(
        &self,
        candidates: &[FenRecord],
        workers: Option<usize>,
        progress: Option<&(dyn Fn(usize) + Sync)>,
    ) -> Result<Vec<CandidateScore>, EngineError> {
        let mut scores = self.score_all(candidates, workers, progress)?;
        sort_by_arp(&mut scores);
        Ok(scores)
    }
}

pub fn sort_by_arp(scores: &mut [CandidateScore]) {
    scores.sort_by(|a, b| b.arp.total_cmp(&a.arp));
}

/// One cycle at size `s` with a fresh engine.
pub fn run_cycle(
    new_fen: &FenRecord,
    ld_seq: &CvSequence,
    dd_seq: &CvSequence,
    s: usize,
    alpha: f64,
) -> Result<CycleOutcome, EngineError> {
    let config = CycleConfig {
        alpha,
        first_size_min: 2,
        first_size_max: 2,
        size_cap: s.max(2),
        ..CycleConfig::default()
    };
    RankEngine::new(ld_seq, dd_seq, config)?.run_cycle(new_fen, s)
}

pub fn score_candidate(
    new_fen: &FenRecord,
    ld_seq: &CvSequence,
    dd_seq: &CvSequence,
    config: &CycleConfig,
    rng: &mut Stream,
) -> Result<CandidateScore, EngineError> {
    RankEngine::new(ld_seq, dd_seq, *config)?.score_candidate(new_fen, rng)
}

pub fn rank_collection(
    candidates: &[FenRecord],
    ld_seq: &CvSequence,
    dd_seq: &CvSequence,
    config: &CycleConfig,
) -> Result<Vec<CandidateScore>, EngineError> {
    RankEngine::new(ld_seq, dd_seq, *config)?.rank_collection(candidates, None, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fen::parse_fen;
    use crate::metric::change_value;
    use crate::synth;

    fn seq(label: Label, fens: Vec<FenRecord>) -> CvSequence {
        CvSequence::from_fens(label, fens, &PaddedBytes).unwrap()
    }

    #[test]
    fn single_record_sequence() {
        let f = parse_fen("k7/8/8/8/8/8/8/K7 w - - 0 1").unwrap();
        let s = seq(Label::Liked, vec![f.clone()]);
        assert_eq!(s.len(), 1);
        assert_eq!(s.cv(0).value(), 0.0);
        assert!(matches!(
            CvSequence::from_fens(Label::Liked, vec![], &PaddedBytes),
            Err(EngineError::EmptyDatabase(Label::Liked))
        ));
    }

    #[test]
    fn sequence_matches_pairwise_cvs() {
        let fens = synth::random_fens(7, 3);
        let s = seq(Label::Liked, fens.clone());
        assert_eq!(s.cv(0).count(), 0);
        for i in 1..7 {
            assert_eq!(s.cv(i), change_value(&fens[i - 1], &fens[i]));
        }
        let mut reordered = fens.clone();
        reordered.swap(2, 5);
        let r = seq(Label::Liked, reordered);
        assert_ne!(s.counts(), r.counts());
    }

    #[test]
    fn chunk_counts() {
        let s200 = seq(Label::Liked, synth::random_fens(200, 1));
        let chunks = partition_chunks(&s200, 32).unwrap();
        assert_eq!(chunks.len(), 6);
        assert_eq!(chunks[5].start_index + chunks[5].len(), 192);

        let s425 = seq(Label::Disliked, synth::random_fens(425, 2));
        let chunks = partition_chunks(&s425, 32).unwrap();
        assert_eq!(chunks.len(), 13);
        assert_eq!(chunks[12].start_index + 32, 416);
        assert_eq!(chunks[1].counts(), &s425.counts()[32..64]);

        let s32 = seq(Label::Liked, synth::random_fens(32, 3));
        assert_eq!(partition_chunks(&s32, 32).unwrap().len(), 1);
        assert!(matches!(
            partition_chunks(&s32, 33),
            Err(EngineError::DatabaseTooSmall { needed: 33, .. })
        ));
        assert!(partition_chunks(&s32, 1).is_err());
    }

    #[test]
    fn substitution() {
        let fens = synth::random_fens(64, 4);
        let s = seq(Label::Liked, fens.clone());
        let chunk = partition_chunks(&s, 32).unwrap()[1];

        let same_as_penultimate = substitute_last(&chunk, &fens[62]);
        assert_eq!(same_as_penultimate[31].value(), 0.0);
        assert_eq!(&same_as_penultimate[..31], &chunk.cvs()[..31]);

        assert_eq!(substitute_last(&chunk, &fens[63]), chunk.cvs());

        let other = synth::random_fens(1, 99).remove(0);
        let sub = substitute_last(&chunk, &other);
        assert_eq!(&sub[..31], &chunk.cvs()[..31]);
        assert_eq!(sub[31], change_value(&fens[62], &other));
        assert_eq!(chunk.cvs()[31], s.cv(63));
    }

    #[test]
    fn transitions() {
        assert_eq!(Transition::from_significance(false, true), Transition::Pos);
        assert_eq!(Transition::from_significance(true, false), Transition::Neg);
        assert_eq!(Transition::from_significance(true, true), Transition::None);
        assert_eq!(
            Transition::from_significance(false, false),
            Transition::None
        );
    }

    #[test]
    fn paired_test_rejects_mismatched_chunks() {
        let s = seq(Label::Liked, synth::random_fens(12, 5));
        let a = partition_chunks(&s, 3).unwrap()[0];
        let b = partition_chunks(&s, 4).unwrap()[0];
        let f = synth::random_fens(1, 6).remove(0);
        assert_eq!(
            paired_test(&a, &b, &f, 0.05),
            Err(EngineError::ChunkSizeMismatch(3, 4))
        );
    }

    #[test]
    fn rank_percentage_arithmetic() {
        assert_eq!(rank_percentage(36, 14), (72.0, false));
        assert_eq!(rank_percentage(0, 0), (50.0, true));
        assert_eq!(average_rank_percentage(&[72.0, 64.0, 50.0]), 62.0);
    }

    #[test]
    fn size_progression_is_capped_and_in_range() {
        let config = CycleConfig::default();
        for seed in 0..200 {
            let sizes = config.draw_sizes(&mut Stream::split(seed, 0));
            assert_eq!(sizes.len(), 3);
            assert!((30..=40).contains(&sizes[0]));
            assert!(sizes.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= 10));
            assert!(sizes[2] <= 60);
        }
        let capped = CycleConfig {
            first_size_min: 58,
            first_size_max: 58,
            ..config
        };
        let sizes = capped.draw_sizes(&mut Stream::new(3));
        assert_eq!(sizes[2], 60);
        assert_eq!(config.max_sample_size(), 60);
    }

    #[test]
    fn config_validation() {
        let ok = CycleConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            CycleConfig {
                first_size_min: 1,
                ..ok
            },
            CycleConfig {
                first_size_min: 41,
                ..ok
            },
            CycleConfig {
                first_size_max: 61,
                ..ok
            },
            CycleConfig {
                increment_min: 11,
                ..ok
            },
            CycleConfig { cycles: 0, ..ok },
            CycleConfig { alpha: 0.0, ..ok },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn test_count_law() {
        let l = seq(Label::Liked, synth::random_fens(200, 7));
        let d = seq(Label::Disliked, synth::random_fens(425, 8));
        let f = synth::random_fens(1, 9).remove(0);
        let engine = RankEngine::new(&l, &d, CycleConfig::default())
            .unwrap()
            .with_t1_cache(false);
        let out = engine.run_cycle(&f, 32).unwrap();
        assert_eq!(out.welch_tests, 156);
        assert_eq!(engine.counters().computed(), 156);
        assert_eq!(engine.counters().logical(), 156);
        assert!(out.score.pos + out.score.neg <= 78);
    }

    #[test]
    fn cached_and_uncached_agree() {
        let l = seq(Label::Liked, synth::random_fens(150, 10));
        let d = seq(Label::Disliked, synth::random_fens(300, 11));
        let config = CycleConfig {
            seed: 5,
            ..CycleConfig::default()
        };
        let cands = synth::random_fens(6, 12);
        let cached = RankEngine::new(&l, &d, config).unwrap();
        let plain = RankEngine::new(&l, &d, config)
            .unwrap()
            .with_t1_cache(false);
        assert_eq!(
            cached.score_all(&cands, Some(1), None).unwrap(),
            plain.score_all(&cands, Some(1), None).unwrap()
        );
        assert!(cached.counters().computed() < plain.counters().computed());
        assert_eq!(cached.counters().logical(), plain.counters().logical());
    }

    #[test]
    fn too_small_databases() {
        let l = seq(Label::Liked, synth::random_fens(59, 1));
        let d = seq(Label::Disliked, synth::random_fens(100, 2));
        let f = synth::random_fens(1, 3).remove(0);
        let engine = RankEngine::new(&l, &d, CycleConfig::default()).unwrap();
        assert!(matches!(
            engine.score_candidate(&f, &mut Stream::new(0)),
            Err(EngineError::DatabaseTooSmall {
                label: Label::Liked,
                needed: 60,
                ..
            })
        ));
        assert_eq!(
            engine.score_all(&[], None, None),
            Err(EngineError::NoCandidates)
        );
    }

    #[test]
    fn deterministic_and_restoring() {
        let l = seq(Label::Liked, synth::random_fens(130, 21));
        let d = seq(Label::Disliked, synth::random_fens(190, 22));
        let (l0, d0) = (l.clone(), d.clone());
        let f = synth::random_fens(1, 23).remove(0);
        let config = CycleConfig {
            seed: 77,
            ..CycleConfig::default()
        };
        let a = score_candidate(&f, &l, &d, &config, &mut Stream::split(77, 0)).unwrap();
        let b = score_candidate(&f, &l, &d, &config, &mut Stream::split(77, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.arp.to_bits(), b.arp.to_bits());
        assert_eq!((l, d), (l0, d0));
        let mean = a.cycles.iter().map(|c| c.rp).sum::<f64>() / 3.0;
        assert_eq!(a.arp, mean);
    }

    #[test]
    fn ranking_is_stable_and_descending() {
        let l = seq(Label::Liked, synth::random_fens(130, 31));
        let d = seq(Label::Disliked, synth::random_fens(190, 32));
        let config = CycleConfig {
            seed: 1,
            ..CycleConfig::default()
        };
        let cands = synth::random_fens(8, 33);
        let ranked = rank_collection(&cands, &l, &d, &config).unwrap();
        assert!(ranked.windows(2).all(|w| w[0].arp >= w[1].arp));

        // Identical FENs under shared sizes get identical ARPs; order is input order.
        let same = vec![cands[0].clone(); 4];
        let shared = CycleConfig {
            shared_sizes: true,
            ..config
        };
        let engine = RankEngine::new(&l, &d, shared).unwrap();
        let ranked = engine.rank_collection(&same, Some(2), None).unwrap();
        assert!(ranked.iter().all(|s| s.arp == ranked[0].arp));
    }

    #[test]
    fn worker_count_does_not_matter() {
        let l = seq(Label::Liked, synth::random_fens(140, 41));
        let d = seq(Label::Disliked, synth::random_fens(200, 42));
        let config = CycleConfig {
            seed: 9,
            ..CycleConfig::default()
        };
        let cands = synth::random_fens(10, 43);
        let engine = RankEngine::new(&l, &d, config).unwrap();
        let one = engine.score_all(&cands, Some(1), None).unwrap();
        let four = engine.score_all(&cands, Some(4), None).unwrap();
        let any = engine.score_all(&cands, None, None).unwrap();
        assert_eq!(one, four);
        assert_eq!(one, any);
    }

    #[test]
    fn progress_reaches_total() {
        let l = seq(Label::Liked, synth::random_fens(70, 51));
        let d = seq(Label::Disliked, synth::random_fens(70, 52));
        let cands = synth::random_fens(5, 53);
        let engine = RankEngine::new(&l, &d, CycleConfig::default()).unwrap();
        let seen = AtomicUsize::new(0);
        let cb = |n: usize| {
            seen.fetch_max(n, Ordering::Relaxed);
        };
        engine.score_all(&cands, Some(2), Some(&cb)).unwrap();
        assert_eq!(seen.load(Ordering::Relaxed), 5);
    }
}
