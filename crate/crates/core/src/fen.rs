//! Forsyth-Edwards Notation parsing and validation.
//!
//! Only structural validity is checked: eight ranks of eight squares, one
//! king per side, and well-formed trailing fields. Move legality is not
//! considered.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FenError {
    #[error("malformed FEN: {0}")]
    Malformed(String),
    #[error("illegal position: {0}")]
    IllegalPosition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Color {
    White,
    Black,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PieceKind {
    Pawn,
    Knight,
    Bishop,
    Rook,
    Queen,
    King,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Piece {
    pub kind: PieceKind,
    pub color: Color,
}

impl Piece {
    pub fn from_char(c: char) -> Option<Piece> {
        let kind = match c.to_ascii_lowercase() {
            'p' => PieceKind::Pawn,
            'n' => PieceKind::Knight,
            'b' => PieceKind::Bishop,
            'r' => PieceKind::Rook,
            'q' => PieceKind::Queen,
            'k' => PieceKind::King,
            _ => return None,
        };
        let color = if c.is_ascii_uppercase() {
            Color::White
        } else {
            Color::Black
        };
        Some(Piece { kind, color })
    }

    pub fn to_char(self) -> char {
        let c = match self.kind {
            PieceKind::Pawn => 'p',
            PieceKind::Knight => 'n',
            PieceKind::Bishop => 'b',
            PieceKind::Rook => 'r',
            PieceKind::Queen => 'q',
            PieceKind::King => 'k',
        };
        match self.color {
            Color::White => c.to_ascii_uppercase(),
            Color::Black => c,
        }
    }
}

impl Serialize for Piece {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_char(self.to_char())
    }
}

/// Board squares in FEN order: index 0 is a8, 7 is h8, 56 is a1, 63 is h1.
pub type Board = [Option<Piece>; 64];

/// Name of the square at a FEN-order index, e.g. `2` → `"c8"`.
pub fn square_name(index: usize) -> String {
    let file = (b'a' + (index % 8) as u8) as char;
    let rank = 8 - index / 8;
    format!("{file}{rank}")
}

/// A validated position. `text` holds the normalized six-field FEN.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FenRecord {
    text: String,
    board: Board,
    side_to_move: Color,
}

impl fmt::Debug for FenRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("FenRecord").field(&self.text).finish()
    }
}

impl fmt::Display for FenRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl FromStr for FenRecord {
    type Err = FenError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_fen(s)
    }
}

impl Serialize for FenRecord {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.text)
    }
}

impl FenRecord {
    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.text.as_bytes()
    }

    pub fn board(&self) -> &Board {
        &self.board
    }

    pub fn side_to_move(&self) -> Color {
        self.side_to_move
    }

    pub fn piece_at(&self, square: &str) -> Option<Piece> {
        let b = square.as_bytes();
        if b.len() != 2 || !(b'a'..=b'h').contains(&b[0]) || !(b'1'..=b'8').contains(&b[1]) {
            return None;
        }
        let file = (b[0] - b'a') as usize;
        let rank = (b[1] - b'1') as usize;
        self.board[(7 - rank) * 8 + file]
    }

    /// Serialize the board back to a piece-placement field.
    pub fn placement(&self) -> String {
        placement_of(&self.board)
    }
}

pub fn placement_of(board: &Board) -> String {
    let mut out = String::with_capacity(72);
    for rank in 0..8 {
        if rank > 0 {
            out.push('/');
        }
        let mut empty = 0;
        for file in 0..8 {
            match board[rank * 8 + file] {
                Some(p) => {
                    if empty > 0 {
                        out.push(char::from(b'0' + empty));
                        empty = 0;
                    }
                    out.push(p.to_char());
                }
                None => empty += 1,
            }
        }
        if empty > 0 {
            out.push(char::from(b'0' + empty));
        }
    }
    out
}

/// Parse and validate a six-field FEN. Runs of whitespace between fields
/// are collapsed in the stored text.
pub fn parse_fen(text: &str) -> Result<FenRecord, FenError> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.is_empty() {
        return Err(FenError::Malformed("empty input".into()));
    }
    if fields.len() != 6 {
        return Err(FenError::Malformed(format!(
            "expected 6 fields, found {}",
            fields.len()
        )));
    }

    let board = parse_placement(fields[0])?;

    let side_to_move = match fields[1] {
        "w" => Color::White,
        "b" => Color::Black,
        other => {
            return Err(FenError::Malformed(format!("bad side to move {other:?}")));
        }
    };

    let castling = fields[2];
    if castling != "-" {
        let mut seen = [false; 4];
        for c in castling.chars() {
            let slot = match c {
                'K' => 0,
                'Q' => 1,
                'k' => 2,
                'q' => 3,
                _ => {
                    return Err(FenError::Malformed(format!(
                        "bad castling field {castling:?}"
                    )))
                }
            };
            if seen[slot] {
                return Err(FenError::Malformed(format!(
                    "bad castling field {castling:?}"
                )));
            }
            seen[slot] = true;
        }
    }

    let ep = fields[3];
    if ep != "-" {
        let b = ep.as_bytes();
        let ok = b.len() == 2 && (b'a'..=b'h').contains(&b[0]) && (b[1] == b'3' || b[1] == b'6');
        if !ok {
            return Err(FenError::Malformed(format!("bad en passant field {ep:?}")));
        }
    }

    let halfmove: u32 = fields[4]
        .parse()
        .map_err(|_| FenError::Malformed(format!("bad halfmove clock {:?}", fields[4])))?;
    let fullmove: u32 = fields[5]
        .parse()
        .map_err(|_| FenError::Malformed(format!("bad fullmove number {:?}", fields[5])))?;
    if fullmove == 0 {
        return Err(FenError::Malformed(
            "fullmove number must be at least 1".into(),
        ));
    }

    for color in [Color::White, Color::Black] {
        let kings = board
            .iter()
            .flatten()
            .filter(|p| p.kind == PieceKind::King && p.color == color)
            .count();
        if kings != 1 {
            return Err(FenError::IllegalPosition(format!(
                "{color:?} has {kings} kings"
            )));
        }
    }

    let text = format!(
        "{} {} {} {} {} {}",
        fields[0], fields[1], castling, ep, halfmove, fullmove
    );
    Ok(FenRecord {
        text,
        board,
        side_to_move,
    })
}

fn parse_placement(field: &str) -> Result<Board, FenError> {
    let ranks: Vec<&str> = field.split('/').collect();
    if ranks.len() != 8 {
        return Err(FenError::Malformed(format!(
            "expected 8 ranks, found {}",
            ranks.len()
        )));
    }
    let mut board: Board = [None; 64];
    for (r, rank) in ranks.iter().enumerate() {
        let mut file = 0usize;
        let mut prev_digit = false;
        for c in rank.chars() {
            if let Some(d) = c.to_digit(10) {
                if d == 0 || d > 8 || prev_digit {
                    return Err(FenError::Malformed(format!(
                        "bad empty-run in rank {rank:?}"
                    )));
                }
                file += d as usize;
                prev_digit = true;
            } else if let Some(p) = Piece::from_char(c) {
                if file < 8 {
                    board[r * 8 + file] = Some(p);
                }
                file += 1;
                prev_digit = false;
            } else {
                return Err(FenError::Malformed(format!("illegal character {c:?}")));
            }
            if file > 8 {
                break;
            }
        }
        if file != 8 {
            return Err(FenError::Malformed(format!(
                "rank {rank:?} does not describe 8 squares"
            )));
        }
    }
    Ok(board)
}
