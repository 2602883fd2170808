//! Address standardization, guardian-text removal, gazetteer lookup and
//! geocoding.

mod gazetteer;
pub mod geocode;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CellOutcome;

pub use gazetteer::{name_tokens, Gazetteer, GazetteerEntry, Level, BUNDLED_GAZETTEER};
pub use geocode::{geocode, Coordinates, GeocodeCache, GeocodeClient, GeocodeError, GeocodeStatus, Geocoder, StubGeocoder};
#[cfg(feature = "http-geocoder")]
pub use geocode::HttpGeocoder;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LocationDetail {
    pub district: Option<String>,
    pub block: Option<String>,
    pub settlement: Option<String>,
    pub matched_gazetteer_id: Option<String>,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
}

impl LocationDetail {
    pub fn has_name(&self) -> bool {
        self.district.is_some() || self.block.is_some() || self.settlement.is_some()
    }

    /// Lookup key for the geocoder: most specific name plus district.
    pub fn query(&self) -> Option<String> {
        let mut parts: Vec<&str> = Vec::new();
        if let Some(s) = self.settlement.as_deref().or(self.block.as_deref()) {
            parts.push(s);
        }
        if let Some(d) = self.district.as_deref() {
            parts.push(d);
        }
        if parts.is_empty() {
            return None;
        }
        Some(gazetteer::name_tokens(&parts.join(" ")).join(" "))
    }

    /// Compact text form used as the verdict's `after` value.
    pub fn summary(&self) -> String {
        [&self.settlement, &self.block, &self.district]
            .iter()
            .filter_map(|p| p.as_deref())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

pub fn default_abbreviations() -> Vec<(String, String)> {
    [
        ("vpo", "village post office"),
        ("vill", "village"),
        ("vil", "village"),
        ("vlg", "village"),
        ("po", "post office"),
        ("p o", "post office"),
        ("distt", "district"),
        ("dist", "district"),
        ("dt", "district"),
        ("teh", "tehsil"),
        ("tehs", "tehsil"),
        ("nr", "near"),
        ("h no", "house number"),
        ("hno", "house number"),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect()
}

/// Lowercases, turns punctuation into spaces, squeezes whitespace and expands
/// abbreviations (longest token sequence first).
pub fn standardize_address(raw: &str, abbreviations: &[(String, String)]) -> String {
    let lowered: String = raw
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    let tokens: Vec<&str> = lowered.split_whitespace().collect();

    let table: Vec<(Vec<&str>, &str)> = abbreviations
        .iter()
        .map(|(k, v)| (k.split_whitespace().collect(), v.as_str()))
        .filter(|(k, _): &(Vec<&str>, &str)| !k.is_empty())
        .collect();

    let mut out: Vec<&str> = Vec::with_capacity(tokens.len());
    let mut i = 0;
    'outer: while i < tokens.len() {
        let mut best: Option<(usize, &str)> = None;
        for (key, expansion) in &table {
            if tokens[i..].starts_with(key) && best.is_none_or(|(len, _)| key.len() > len) {
                best = Some((key.len(), expansion));
            }
        }
        if let Some((len, expansion)) = best {
            out.extend(expansion.split_whitespace());
            i += len;
            continue 'outer;
        }
        out.push(tokens[i]);
        i += 1;
    }
    out.join(" ")
}

const RELATION_PHRASES: &[&[&str]] = &[
    &["s", "o"],
    &["d", "o"],
    &["w", "o"],
    &["c", "o"],
    &["h", "o"],
    &["son", "of"],
    &["daughter", "of"],
    &["wife", "of"],
    &["husband", "of"],
    &["care", "of"],
];

/// Words that open the location part of an address.
const ADDRESS_WORDS: &[&str] = &[
    "village", "post", "office", "district", "tehsil", "block", "city", "town", "ward", "street",
    "road", "near", "house", "number", "colony", "mohalla", "sector", "basti",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stripped {
    pub text: String,
    pub removed: bool,
}

/// Removes relation phrases ("s o", "wife of", ...) and the name that follows,
/// up to the next address word, gazetteer name or end of input.
pub fn strip_guardian_text(addr: &str, gazetteer: &Gazetteer) -> Stripped {
    let tokens: Vec<&str> = addr.split_whitespace().collect();
    let mut out: Vec<&str> = Vec::with_capacity(tokens.len());
    let mut removed = false;
    let mut i = 0;
    while i < tokens.len() {
        let phrase = RELATION_PHRASES
            .iter()
            .find(|p| tokens[i..].starts_with(p));
        let Some(phrase) = phrase else {
            out.push(tokens[i]);
            i += 1;
            continue;
        };
        removed = true;
        i += phrase.len();
        while i < tokens.len()
            && !ADDRESS_WORDS.contains(&tokens[i])
            && gazetteer.match_at(&tokens, i).is_none()
            && !RELATION_PHRASES.iter().any(|p| tokens[i..].starts_with(p))
        {
            i += 1;
        }
    }
    Stripped {
        text: out.join(" "),
        removed,
    }
}

/// Outcome of a gazetteer lookup.
#[derive(Debug, Clone, PartialEq)]
pub enum Match {
    Found(LocationDetail),
    /// Several equally specific, equally supported entries.
    Ambiguous(Vec<LocationDetail>),
    NotFound,
}

/// Longest-token-sequence exact lookup; the most specific level wins and
/// parent names present in the address break ties between same-named places.
pub fn gazetteer_match(addr: &str, gazetteer: &Gazetteer) -> Result<Match> {
    if gazetteer.is_empty() {
        return Err(Error::Config("gazetteer not loaded".into()));
    }
    let tokens: Vec<&str> = addr.split_whitespace().collect();
    let mut hits: Vec<usize> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        match gazetteer.match_at(&tokens, i) {
            Some((len, ids)) => {
                for &id in ids {
                    if !hits.contains(&id) {
                        hits.push(id);
                    }
                }
                i += len;
            }
            None => i += 1,
        }
    }
    if hits.is_empty() {
        return Ok(Match::NotFound);
    }

    let score = |idx: usize| {
        let support = gazetteer
            .ancestors(idx)
            .iter()
            .filter(|a| hits.contains(a))
            .count();
        (gazetteer.entry(idx).level.specificity(), support)
    };
    let best = hits.iter().map(|&h| score(h)).max().expect("non-empty");
    let winners: Vec<usize> = hits.iter().copied().filter(|&h| score(h) == best).collect();

    let details: Vec<LocationDetail> = winners.iter().map(|&w| detail_for(gazetteer, w)).collect();
    if details.len() == 1 {
        Ok(Match::Found(details.into_iter().next().expect("one")))
    } else {
        Ok(Match::Ambiguous(details))
    }
}

fn detail_for(gazetteer: &Gazetteer, idx: usize) -> LocationDetail {
    let mut detail = LocationDetail {
        matched_gazetteer_id: Some(gazetteer.entry(idx).id.clone()),
        ..LocationDetail::default()
    };
    for i in std::iter::once(idx).chain(gazetteer.ancestors(idx)) {
        let e = gazetteer.entry(i);
        let slot = match e.level {
            Level::District => &mut detail.district,
            Level::Block => &mut detail.block,
            _ => &mut detail.settlement,
        };
        if slot.is_none() {
            *slot = Some(e.name.clone());
        }
    }
    detail
}

pub const ADDRESS_RULE: &str = "A01";
pub const GUARDIAN_RULE: &str = "A02";
pub const NO_MATCH_RULE: &str = "A03";
pub const AMBIGUOUS_RULE: &str = "A04";
pub const GEOCODE_RETRY_RULE: &str = "A05";
pub const GUARDIAN_ONLY_RULE: &str = "A06";

/// Cleaned address cell; `text` is guardian-free and safe to log.
#[derive(Debug, Clone, PartialEq)]
pub struct AddressCleaning {
    pub text: String,
    pub outcome: CellOutcome,
    pub location: Option<LocationDetail>,
}

/// Standardize, strip guardian text and look the address up.
pub fn clean_address_cell(
    raw: &str,
    gazetteer: &Gazetteer,
    abbreviations: &[(String, String)],
) -> Result<AddressCleaning> {
    if raw.trim().is_empty() {
        return Ok(AddressCleaning {
            text: String::new(),
            outcome: CellOutcome::missing(),
            location: None,
        });
    }
    // Comma-separated parts are stripped separately so a guardian name never
    // swallows the next part.
    let mut parts = Vec::new();
    let mut removed = false;
    for segment in raw.split(',') {
        let s = strip_guardian_text(&standardize_address(segment, abbreviations), gazetteer);
        removed |= s.removed;
        if !s.text.is_empty() {
            parts.push(s.text);
        }
    }
    let stripped = Stripped {
        text: parts.join(" "),
        removed,
    };
    let mut chain = vec![ADDRESS_RULE];
    if stripped.removed {
        chain.push(GUARDIAN_RULE);
    }
    if stripped.text.is_empty() {
        chain.push(GUARDIAN_ONLY_RULE);
        return Ok(AddressCleaning {
            text: stripped.text,
            outcome: CellOutcome::review(chain.join(">"), Vec::new())
                .with_note("no location left after removing guardian text"),
            location: None,
        });
    }

    let (outcome, location) = match gazetteer_match(&stripped.text, gazetteer)? {
        Match::Found(loc) => {
            let mut o = CellOutcome::resolved(chain.join(">"), &stripped.text, loc.summary());
            if let Some(id) = &loc.matched_gazetteer_id {
                o.note = Some(format!("gazetteer {id}"));
            }
            (o, Some(loc))
        }
        Match::Ambiguous(options) => {
            chain.push(AMBIGUOUS_RULE);
            let candidates = options.iter().map(LocationDetail::summary).collect();
            (CellOutcome::review(chain.join(">"), candidates), None)
        }
        Match::NotFound => {
            chain.push(NO_MATCH_RULE);
            (CellOutcome::review(chain.join(">"), Vec::new()), None)
        }
    };
    Ok(AddressCleaning {
        text: stripped.text,
        outcome,
        location,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Gazetteer {
        let csv = "id,name,aliases,level,parent_id\nD1,Ludhiana,,District,\nC1,Khanna,,City,D1\n";
        Gazetteer::from_reader(csv.as_bytes()).unwrap()
    }

    fn std_addr(raw: &str) -> String {
        standardize_address(raw, &default_abbreviations())
    }

    #[test]
    fn standardize_examples() {
        assert_eq!(
            std_addr("VPO  Khanna,  Distt. Ludhiana"),
            "village post office khanna district ludhiana"
        );
        assert_eq!(std_addr(""), "");
        assert_eq!(std_addr("Ludhiana"), "ludhiana");
        assert_eq!(std_addr("H.No. 12, P.O. Doraha"), "house number 12 post office doraha");
        assert_eq!(std_addr("S/O Ram Lal"), "s o ram lal");
    }

    #[test]
    fn strip_examples() {
        let g = toy();
        assert_eq!(strip_guardian_text("s o ram lal village khanna", &g).text, "village khanna");
        let same = strip_guardian_text("village khanna", &g);
        assert_eq!(same.text, "village khanna");
        assert!(!same.removed);
        let all = strip_guardian_text("d o x y z", &g);
        assert_eq!(all.text, "");
        assert!(all.removed);
        // stops at a gazetteer name even without an address word
        assert_eq!(strip_guardian_text("w o gurmeet singh khanna", &g).text, "khanna");
    }

    #[test]
    fn match_examples() {
        let g = toy();
        let Match::Found(loc) = gazetteer_match("village khanna district ludhiana", &g).unwrap() else {
            panic!("expected a match");
        };
        assert_eq!(loc.settlement.as_deref(), Some("Khanna"));
        assert_eq!(loc.district.as_deref(), Some("Ludhiana"));
        assert_eq!(loc.matched_gazetteer_id.as_deref(), Some("C1"));
        assert_eq!(gazetteer_match("nowhereville", &g).unwrap(), Match::NotFound);
        assert!(gazetteer_match("x", &Gazetteer::default()).is_err());
    }

    #[test]
    fn same_named_villages_disambiguated_by_district() {
        let g = Gazetteer::bundled();
        let Match::Found(loc) = gazetteer_match("village rampur district patiala", &g).unwrap() else {
            panic!("expected a match");
        };
        assert_eq!(loc.matched_gazetteer_id.as_deref(), Some("V0301"));
        assert_eq!(loc.block.as_deref(), Some("Nabha"));
        let Match::Found(loc) = gazetteer_match("rampur doraha ludhiana", &g).unwrap() else {
            panic!("expected a match");
        };
        assert_eq!(loc.matched_gazetteer_id.as_deref(), Some("V0101"));
        assert!(matches!(gazetteer_match("village rampur", &g).unwrap(), Match::Ambiguous(v) if v.len() == 2));
    }

    #[test]
    fn longest_sequence_wins() {
        let g = Gazetteer::bundled();
        let Match::Found(loc) = gazetteer_match("ward 3 ludhiana city", &g).unwrap() else {
            panic!("expected a match");
        };
        assert_eq!(loc.settlement.as_deref(), Some("Ludhiana City"));
        let Match::Found(loc) = gazetteer_match("sas nagar", &g).unwrap() else {
            panic!("expected a match");
        };
        assert_eq!(loc.district.as_deref(), Some("Sahibzada Ajit Singh Nagar"));
    }

    #[test]
    fn address_cell() {
        let g = Gazetteer::bundled();
        let abbr = default_abbreviations();
        let got = clean_address_cell("S/O Ram Lal, VPO Khanna, Distt Ludhiana", &g, &abbr).unwrap();
        assert_eq!(got.text, "village post office khanna district ludhiana");
        assert_eq!(got.outcome.rule_id, "A01>A02");
        assert_eq!(got.outcome.after, "Khanna, Ludhiana");
        let none = clean_address_cell("D/O X Y Z", &g, &abbr).unwrap();
        assert_eq!(none.outcome.action, crate::model::Action::ReviewQueued);
        assert_eq!(none.outcome.rule_id, "A01>A02>A06");
        let miss = clean_address_cell("nowhereville", &g, &abbr).unwrap();
        assert_eq!(miss.outcome.rule_id, "A01>A03");
    }

    #[test]
    fn query_string() {
        let loc = LocationDetail {
            district: Some("Ludhiana".into()),
            settlement: Some("Khanna".into()),
            ..LocationDetail::default()
        };
        assert_eq!(loc.query().as_deref(), Some("khanna ludhiana"));
        assert_eq!(LocationDetail::default().query(), None);
    }
}
