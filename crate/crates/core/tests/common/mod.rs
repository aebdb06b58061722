#![allow(dead_code)]

//! A deliberately naive ranking engine used as an oracle: every chunk CV is
//! recomputed from FEN text for every pair, both tests run on plain `f64`
//! samples, and nothing is cached.

use cvrank::engine::{CandidateScore, CvSequence, CycleConfig, CycleScore, RankEngine};
use cvrank::fen::FenRecord;
use cvrank::metric::{change_value, PaddedBytes};
use cvrank::rng::Stream;
use cvrank::stats::welch_ttest;
use cvrank::store::Label;
use cvrank::synth::{random_fens, Taste, TasteModel};

pub const ORACLE_TRIALS: u64 = 1000;

fn cvs(fens: &[FenRecord]) -> Vec<f64> {
    let mut out = vec![0.0];
    for w in fens.windows(2) {
        out.push(change_value(&w[0], &w[1]).value());
    }
    out
}

pub fn naive_cycle(
    liked: &[FenRecord],
    disliked: &[FenRecord],
    new_fen: &FenRecord,
    s: usize,
    alpha: f64,
) -> CycleScore {
    let lcv = cvs(liked);
    let dcv = cvs(disliked);
    let (mut pos, mut neg) = (0u64, 0u64);
    for i in 0..liked.len() / s {
        for j in 0..disliked.len() / s {
            let ld: Vec<f64> = lcv[i * s..(i + 1) * s].to_vec();
            let dd: Vec<f64> = dcv[j * s..(j + 1) * s].to_vec();
            let mut swapped = ld.clone();
            swapped[s - 1] = change_value(&liked[i * s + s - 2], new_fen).value();
            let t1 = welch_ttest(&ld, &dd, alpha).unwrap().significant;
            let t2 = welch_ttest(&swapped, &dd, alpha).unwrap().significant;
            match (t1, t2) {
                (false, true) => pos += 1,
                (true, false) => neg += 1,
                _ => {}
            }
        }
    }
    let (rp, neutral) = if pos + neg == 0 {
        (50.0, true)
    } else {
        (pos as f64 / (pos + neg) as f64 * 100.0, false)
    };
    CycleScore {
        sample_size: s,
        pos,
        neg,
        rp,
        neutral,
    }
}

pub fn naive_sizes(config: &CycleConfig, rng: &mut Stream) -> Vec<usize> {
    let mut s =
        rng.uniform_inclusive(config.first_size_min as u64, config.first_size_max as u64) as usize;
    let mut sizes = vec![s];
    while sizes.len() < config.cycles {
        s += rng.uniform_inclusive(config.increment_min as u64, config.increment_max as u64)
            as usize;
        s = s.min(config.size_cap);
        sizes.push(s);
    }
    sizes
}

pub fn naive_score(
    liked: &[FenRecord],
    disliked: &[FenRecord],
    new_fen: &FenRecord,
    sizes: &[usize],
    alpha: f64,
) -> CandidateScore {
    let cycles: Vec<CycleScore> = sizes
        .iter()
        .map(|&s| naive_cycle(liked, disliked, new_fen, s, alpha))
        .collect();
    let arp = cycles.iter().map(|c| c.rp).sum::<f64>() / cycles.len() as f64;
    CandidateScore {
        fen: new_fen.clone(),
        cycles,
        arp,
    }
}

/// Naive ranking with the per-candidate stream rule.
pub fn naive_rank(
    liked: &[FenRecord],
    disliked: &[FenRecord],
    candidates: &[FenRecord],
    config: &CycleConfig,
) -> Vec<CandidateScore> {
    let mut scores: Vec<CandidateScore> = candidates
        .iter()
        .enumerate()
        .map(|(i, fen)| {
            let sizes = naive_sizes(config, &mut Stream::split(config.seed, i as u64));
            naive_score(liked, disliked, fen, &sizes, config.alpha)
        })
        .collect();
    scores.sort_by(|a, b| b.arp.total_cmp(&a.arp));
    scores
}

const SIZES: [usize; 3] = [2, 3, 5];

pub struct Instance {
    pub liked: Vec<FenRecord>,
    pub disliked: Vec<FenRecord>,
    pub candidates: Vec<FenRecord>,
    pub sizes: Vec<usize>,
}

/// Half the instances are uniform random boards, half share a motif so the
/// two databases differ in CV distribution and transitions actually occur.
pub fn instance(trial: u64) -> Instance {
    let mut rng = Stream::split(0x0A1C1E, trial);
    let l = rng.uniform_inclusive(5, 100) as usize;
    let d = rng.uniform_inclusive(5, 100) as usize;
    let (liked, disliked, candidates) = if trial.is_multiple_of(2) {
        (
            random_fens(l, trial * 3),
            random_fens(d, trial * 3 + 1),
            random_fens(4, trial * 3 + 2),
        )
    } else {
        let taste = Taste::new(trial, TasteModel::default());
        let liked = (0..l).map(|_| taste.liked_like(&mut rng)).collect();
        let disliked = (0..d).map(|_| taste.disliked_like(&mut rng)).collect();
        let candidates = (0..4)
            .map(|k| {
                if k % 2 == 0 {
                    taste.liked_like(&mut rng)
                } else {
                    taste.disliked_like(&mut rng)
                }
            })
            .collect();
        (liked, disliked, candidates)
    };
    let mut sizes: Vec<usize> = (0..3)
        .map(|_| SIZES[rng.uniform_inclusive(0, 2) as usize])
        .collect();
    sizes.sort_unstable();
    Instance {
        liked,
        disliked,
        candidates,
        sizes,
    }
}

pub fn sequences(inst: &Instance) -> (CvSequence, CvSequence) {
    (
        CvSequence::from_fens(Label::Liked, inst.liked.clone(), &PaddedBytes).unwrap(),
        CvSequence::from_fens(Label::Disliked, inst.disliked.clone(), &PaddedBytes).unwrap(),
    )
}

fn relaxed(seed: u64) -> CycleConfig {
    CycleConfig {
        first_size_min: 2,
        first_size_max: 3,
        increment_min: 0,
        increment_max: 1,
        size_cap: 5,
        seed,
        ..CycleConfig::default()
    }
}

/// Compare production and naive scores on one instance: cached and uncached
/// engines at the instance's explicit sizes, and, every 25th trial, full
/// rankings at several worker counts. Returns the number of POS/NEG
/// transitions seen, so callers can rule out an all-neutral comparison.
pub fn check_oracle_trial(trial: u64) -> Result<u64, String> {
    let inst = instance(trial);
    let (l, d) = sequences(&inst);
    let config = relaxed(trial);
    let cached = RankEngine::new(&l, &d, config).map_err(|e| e.to_string())?;
    let uncached = RankEngine::new(&l, &d, config)
        .map_err(|e| e.to_string())?
        .with_t1_cache(false);
    let mut transitions = 0;
    for fen in &inst.candidates {
        let want = naive_score(&inst.liked, &inst.disliked, fen, &inst.sizes, config.alpha);
        transitions += want.cycles.iter().map(|c| c.pos + c.neg).sum::<u64>();
        for (name, engine) in [("cached", &cached), ("uncached", &uncached)] {
            let got = engine
                .score_with_sizes(fen, &inst.sizes)
                .map_err(|e| e.to_string())?;
            if got != want {
                return Err(format!("trial {trial} ({name}): {got:?} != {want:?}"));
            }
        }
    }
    if trial.is_multiple_of(25) {
        let want = naive_rank(&inst.liked, &inst.disliked, &inst.candidates, &config);
        for workers in [Some(1), Some(2), Some(5), None] {
            let got = cached
                .rank_collection(&inst.candidates, workers, None)
                .map_err(|e| e.to_string())?;
            if got != want {
                return Err(format!(
                    "trial {trial}, workers {workers:?}: ranking differs"
                ));
            }
        }
    }
    Ok(transitions)
}
