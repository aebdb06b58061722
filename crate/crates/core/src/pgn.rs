//! Minimal PGN reader: tag pairs only, movetext is skipped.

use std::collections::BTreeMap;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PgnGame {
    pub tags: BTreeMap<String, String>,
}

impl PgnGame {
    pub fn tag(&self, name: &str) -> Option<&str> {
        self.tags.get(name).map(String::as_str)
    }

    /// The setup FEN, unless a `SetUp "0"` tag says the game starts from
    /// the standard position.
    pub fn setup_fen(&self) -> Option<&str> {
        if self.tag("SetUp") == Some("0") {
            return None;
        }
        self.tag("FEN").filter(|f| !f.trim().is_empty())
    }
}

fn parse_tag_line(line: &str) -> Option<(String, String)> {
    let inner = line.strip_prefix('[')?.trim_end().strip_suffix(']')?.trim();
    let (name, rest) = inner.split_once(char::is_whitespace)?;
    let rest = rest.trim();
    let quoted = rest.strip_prefix('"')?.strip_suffix('"')?;
    let mut value = String::with_capacity(quoted.len());
    let mut chars = quoted.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            if let Some(n) = chars.next() {
                value.push(n);
            }
        } else {
            value.push(c);
        }
    }
    Some((name.to_string(), value))
}

/// Split PGN text into games. A tag line that follows movetext, or follows
/// a blank line after the tag section, starts a new game.
pub fn read_games(text: &str) -> Vec<PgnGame> {
    let mut games = Vec::new();
    let mut current: Option<PgnGame> = None;
    let mut past_tags = false;

    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() {
            if current.is_some() {
                past_tags = true;
            }
            continue;
        }
        if line.starts_with('[') {
            if let Some((name, value)) = parse_tag_line(line) {
                if past_tags || current.is_none() {
                    if let Some(g) = current.take() {
                        games.push(g);
                    }
                    current = Some(PgnGame::default());
                    past_tags = false;
                }
                if let Some(g) = current.as_mut() {
                    g.tags.insert(name, value);
                }
                continue;
            }
        }
        // Movetext or comment.
        if current.is_none() {
            current = Some(PgnGame::default());
        }
        past_tags = true;
    }
    if let Some(g) = current {
        games.push(g);
    }
    games
}

pub fn escape_tag_value(v: &str) -> String {
    v.replace('\\', "\\\\").replace('"', "\\\"")
}
