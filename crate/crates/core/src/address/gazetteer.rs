use std::collections::{BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Administrative level of a gazetteer entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    District,
    Block,
    City,
    Town,
    Village,
}

impl Level {
    pub fn is_settlement(self) -> bool {
        matches!(self, Level::City | Level::Town | Level::Village)
    }

    /// Higher is more specific.
    pub fn specificity(self) -> u8 {
        match self {
            Level::District => 1,
            Level::Block => 2,
            Level::City | Level::Town | Level::Village => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GazetteerEntry {
    pub id: String,
    pub name: String,
    pub aliases: Vec<String>,
    pub level: Level,
    pub parent_id: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Row {
    id: String,
    name: String,
    #[serde(default)]
    aliases: String,
    level: Level,
    #[serde(default)]
    parent_id: String,
}

/// Reference list of places with their parent hierarchy.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: Vec<GazetteerEntry>,
    by_id: HashMap<String, usize>,
    /// Lowercased name/alias token sequences to entry indices.
    index: HashMap<Vec<String>, Vec<usize>>,
    max_tokens: usize,
}

pub const BUNDLED_GAZETTEER: &str = include_str!("../../data/gazetteer_punjab.csv");

pub fn name_tokens(name: &str) -> Vec<String> {
    name.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

impl Gazetteer {
    /// The synthetic Punjab-style gazetteer shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_reader(BUNDLED_GAZETTEER.as_bytes()).expect("bundled gazetteer is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut entries = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let row = row?;
            entries.push(GazetteerEntry {
                id: row.id,
                name: row.name,
                aliases: row
                    .aliases
                    .split(';')
                    .map(str::trim)
                    .filter(|a| !a.is_empty())
                    .map(str::to_string)
                    .collect(),
                level: row.level,
                parent_id: Some(row.parent_id).filter(|p| !p.is_empty()),
            });
        }
        Self::new(entries)
    }

    pub fn new(entries: Vec<GazetteerEntry>) -> Result<Self> {
        let mut by_id = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            if e.id.is_empty() || name_tokens(&e.name).is_empty() {
                return Err(Error::Config(format!("gazetteer entry {:?} has an empty id or name", e.id)));
            }
            if by_id.insert(e.id.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate gazetteer id {:?}", e.id)));
            }
        }

        let mut g = Gazetteer {
            entries,
            by_id,
            index: HashMap::new(),
            max_tokens: 0,
        };
        for (i, e) in g.entries.iter().enumerate() {
            if let Some(pid) = &e.parent_id {
                let parent = g
                    .by_id
                    .get(pid)
                    .map(|&p| &g.entries[p])
                    .ok_or_else(|| Error::Config(format!("{}: unknown parent {pid:?}", e.id)))?;
                if e.level.is_settlement()
                    && !matches!(parent.level, Level::Block | Level::District)
                {
                    return Err(Error::Config(format!(
                        "{}: a {:?} must sit under a Block or District",
                        e.id, e.level
                    )));
                }
            }
            let mut seen = BTreeSet::new();
            let mut cur = i;
            while let Some(pid) = &g.entries[cur].parent_id {
                if !seen.insert(cur) {
                    return Err(Error::Config(format!("{}: cyclic parent chain", e.id)));
                }
                cur = g.by_id[pid];
            }
        }

        let mut index: HashMap<Vec<String>, Vec<usize>> = HashMap::new();
        for (i, e) in g.entries.iter().enumerate() {
            for name in std::iter::once(&e.name).chain(&e.aliases) {
                let toks = name_tokens(name);
                g.max_tokens = g.max_tokens.max(toks.len());
                let slot = index.entry(toks).or_default();
                if !slot.contains(&i) {
                    slot.push(i);
                }
            }
        }
        g.index = index;
        Ok(g)
    }

    pub fn entries(&self) -> &[GazetteerEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&GazetteerEntry> {
        self.by_id.get(id).map(|&i| &self.entries[i])
    }

    pub(crate) fn entry(&self, idx: usize) -> &GazetteerEntry {
        &self.entries[idx]
    }

    /// Indices of the entry's ancestors, nearest first.
    pub(crate) fn ancestors(&self, idx: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = idx;
        while let Some(pid) = &self.entries[cur].parent_id {
            cur = self.by_id[pid];
            out.push(cur);
        }
        out
    }

    /// Whether a gazetteer name begins at `tokens[start]`.
    pub(crate) fn match_at(&self, tokens: &[&str], start: usize) -> Option<(usize, &[usize])> {
        let avail = tokens.len() - start;
        (1..=self.max_tokens.min(avail)).rev().find_map(|len| {
            let key: Vec<String> = tokens[start..start + len].iter().map(|t| t.to_string()).collect();
            self.index.get(&key).map(|ids| (len, ids.as_slice()))
        })
    }

    pub fn is_name_token(&self, token: &str) -> bool {
        self.index.contains_key(&vec![token.to_string()])
    }
}
