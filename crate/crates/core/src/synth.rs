//! Synthetic compositions and preference stores.
//!
//! Positions are random placements of pieces around a pair of kings. The
//! synthetic "solver" likes small variations on one motif position and
//! dislikes heavier rearrangements of it, which gives the liked stream
//! smaller and steadier change values than the disliked stream.

use std::collections::HashSet;

use chrono::{Duration, NaiveDate, NaiveTime};

use crate::fen::{parse_fen, placement_of, Board, FenRecord, Piece, PieceKind};
use crate::rng::Stream;
use crate::store::{CompositionRecord, Label, PreferenceDb, Timestamp};

const EXTRA_PIECES: &[char] = &[
    'Q', 'R', 'R', 'B', 'B', 'N', 'N', 'P', 'P', 'P', 'q', 'r', 'b', 'n', 'p', 'p',
];

fn pick(rng: &mut Stream, n: usize) -> usize {
    rng.uniform_inclusive(0, n as u64 - 1) as usize
}

fn empty_square(board: &Board, rng: &mut Stream, pawn: bool) -> usize {
    loop {
        let sq = pick(rng, 64);
        let back_rank = !(8..56).contains(&sq);
        if board[sq].is_none() && !(pawn && back_rank) {
            return sq;
        }
    }
}

fn to_fen(board: &Board) -> FenRecord {
    parse_fen(&format!("{} w - - 0 1", placement_of(board))).expect("generated boards are valid")
}

/// Two kings plus `extra` random pieces.
pub fn random_board(rng: &mut Stream, extra: usize) -> Board {
    let mut board: Board = [None; 64];
    for c in ['K', 'k'] {
        let sq = empty_square(&board, rng, false);
        board[sq] = Piece::from_char(c);
    }
    for _ in 0..extra {
        let c = EXTRA_PIECES[pick(rng, EXTRA_PIECES.len())];
        let sq = empty_square(&board, rng, c.eq_ignore_ascii_case(&'p'));
        board[sq] = Piece::from_char(c);
    }
    board
}

/// Move `moves` random pieces (kings included) to random empty squares.
pub fn perturb(board: &Board, rng: &mut Stream, moves: usize) -> Board {
    let mut b = *board;
    for _ in 0..moves {
        let occupied: Vec<usize> = (0..64).filter(|&i| b[i].is_some()).collect();
        let from = occupied[pick(rng, occupied.len())];
        let piece = b[from].take().expect("occupied");
        let to = empty_square(&b, rng, piece.kind == PieceKind::Pawn);
        b[to] = Some(piece);
    }
    b
}

/// `n` independent random positions with 2 to 10 extra pieces.
pub fn random_fens(n: usize, seed: u64) -> Vec<FenRecord> {
    let mut rng = Stream::split(seed, 0xF3_u64);
    (0..n)
        .map(|_| {
            let extra = rng.uniform_inclusive(2, 10) as usize;
            to_fen(&random_board(&mut rng, extra))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TasteModel {
    /// Extra pieces on the motif board.
    pub motif_pieces: usize,
    /// Range of pieces relocated for a liked position.
    pub liked_moves: (usize, usize),
    /// Range of pieces relocated for a disliked position.
    pub disliked_moves: (usize, usize),
}

impl Default for TasteModel {
    fn default() -> Self {
        TasteModel {
            motif_pieces: 7,
            liked_moves: (1, 2),
            disliked_moves: (2, 4),
        }
    }
}

/// A synthetic solver: a motif plus how far from it liked and disliked
/// positions stray.
#[derive(Debug, Clone)]
pub struct Taste {
    motif: Board,
    model: TasteModel,
}

impl Taste {
    pub fn new(seed: u64, model: TasteModel) -> Self {
        let mut rng = Stream::split(seed, 0x7A57E);
        Taste {
            motif: random_board(&mut rng, model.motif_pieces),
            model,
        }
    }

    pub fn motif(&self) -> FenRecord {
        to_fen(&self.motif)
    }

    fn draw(&self, rng: &mut Stream, (lo, hi): (usize, usize)) -> FenRecord {
        let moves = rng.uniform_inclusive(lo as u64, hi as u64) as usize;
        let board = perturb(&self.motif, rng, moves);
        // Side to move occasionally flips; it is part of the text.
        let black = rng.uniform_inclusive(0, 7) == 0;
        let fen = to_fen(&board);
        if black {
            parse_fen(&fen.text().replacen(" w ", " b ", 1)).expect("valid")
        } else {
            fen
        }
    }

    pub fn liked_like(&self, rng: &mut Stream) -> FenRecord {
        self.draw(rng, self.model.liked_moves)
    }

    pub fn disliked_like(&self, rng: &mut Stream) -> FenRecord {
        self.draw(rng, self.model.disliked_moves)
    }
}

fn stamp(start: NaiveDate, i: usize) -> Timestamp {
    Timestamp::Dated(start.and_time(NaiveTime::MIN) + Duration::minutes(37 * i as i64))
}

fn distinct_db(
    label: Label,
    n: usize,
    rng: &mut Stream,
    seen: &mut HashSet<String>,
    mut draw: impl FnMut(&mut Stream) -> FenRecord,
) -> PreferenceDb {
    let start = NaiveDate::from_ymd_opt(2020, 3, 20).expect("valid date");
    let mut records = Vec::with_capacity(n);
    while records.len() < n {
        let fen = draw(rng);
        if seen.insert(fen.text().to_string()) {
            let i = records.len();
            records.push(CompositionRecord::new(fen, stamp(start, i), i as u64));
        }
    }
    PreferenceDb::from_records(label, records)
}

/// Liked and disliked databases drawn from `taste`, time-stamped in
/// generation order. No position appears twice, in either database.
pub fn synthetic_stores(
    taste: &Taste,
    seed: u64,
    n_liked: usize,
    n_disliked: usize,
) -> (PreferenceDb, PreferenceDb) {
    let mut seen = HashSet::new();
    let mut rng = Stream::split(seed, 1);
    let liked = distinct_db(Label::Liked, n_liked, &mut rng, &mut seen, |r| {
        taste.liked_like(r)
    });
    let mut rng = Stream::split(seed, 2);
    let disliked = distinct_db(Label::Disliked, n_disliked, &mut rng, &mut seen, |r| {
        taste.disliked_like(r)
    });
    (liked, disliked)
}

/// PGN text for a database, one game per record.
pub fn to_pgn(db: &PreferenceDb) -> String {
    let mut out = String::new();
    for (i, r) in db.records().iter().enumerate() {
        out.push_str(&format!("[Event \"Synthetic {} {}\"]\n", db.label(), i + 1));
        if let Timestamp::Dated(t) = r.generated_at {
            out.push_str(&format!("[Date \"{}\"]\n", t.format("%Y.%m.%d")));
            out.push_str(&format!("[Time \"{}\"]\n", t.format("%H:%M:%S")));
        }
        out.push_str("[SetUp \"1\"]\n");
        out.push_str(&format!("[FEN \"{}\"]\n\n*\n\n", r.fen));
    }
    out
}
