//! Plain-text configuration.
//!
//! The file is a list of `key = value` lines with `#` comments. Lines before
//! any `[section]` header are column mappings (`Role = Source Header`), so a
//! bare mapping file is a valid configuration. Optional sections:
//!
//! ```text
//! [options]        impute, plausibility_window_days, gazetteer, salt_scope
//! [anonymizer]     log_n, r, p, id_length
//! [sex_keywords]   female | male | transgender | review = comma-separated keywords
//! [abbreviations]  abbreviation = expansion
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::anonymizer::{HashCost, SaltScope};
use crate::demographics::SexKeywords;
use crate::error::{Error, Result};
use crate::model::{ColumnBinding, ColumnRole, DEFAULT_PLAUSIBILITY_WINDOW_DAYS};

/// Validated header-to-role mapping.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ColumnMapping {
    bindings: Vec<ColumnBinding>,
}

impl ColumnMapping {
    pub fn new(bindings: Vec<ColumnBinding>) -> Result<Self> {
        let mut seen: BTreeMap<ColumnRole, &str> = BTreeMap::new();
        let mut headers: BTreeMap<&str, ColumnRole> = BTreeMap::new();
        for b in &bindings {
            if b.source_header.trim().is_empty() {
                return Err(Error::Config(format!("role {} has an empty header", b.role)));
            }
            if let Some(prev) = headers.insert(b.source_header.as_str(), b.role) {
                return Err(Error::Config(format!(
                    "header {:?} is mapped to both {prev} and {}",
                    b.source_header, b.role
                )));
            }
            if b.role == ColumnRole::Other {
                continue;
            }
            if let Some(prev) = seen.insert(b.role, b.source_header.as_str()) {
                return Err(Error::Config(format!(
                    "role {} is assigned twice: {prev:?} and {:?}",
                    b.role, b.source_header
                )));
            }
        }
        Ok(ColumnMapping { bindings })
    }

    pub fn bindings(&self) -> &[ColumnBinding] {
        &self.bindings
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn header_for(&self, role: ColumnRole) -> Option<&str> {
        self.bindings
            .iter()
            .find(|b| b.role == role && role != ColumnRole::Other)
            .map(|b| b.source_header.as_str())
    }

    pub fn role_for(&self, header: &str) -> ColumnRole {
        self.bindings
            .iter()
            .find(|b| b.source_header == header)
            .map_or(ColumnRole::Other, |b| b.role)
    }

    pub fn has(&self, role: ColumnRole) -> bool {
        self.header_for(role).is_some()
    }

    /// Mapped roles other than `Other`, in canonical role order.
    pub fn cell_roles(&self) -> Vec<ColumnRole> {
        ColumnRole::ALL
            .into_iter()
            .filter(|r| *r != ColumnRole::Other && self.has(*r))
            .collect()
    }

    pub fn has_imputation_donor(&self) -> bool {
        [
            ColumnRole::TestDate,
            ColumnRole::OpdDate,
            ColumnRole::AdmissionDate,
            ColumnRole::DischargeDate,
        ]
        .into_iter()
        .any(|r| self.has(r))
    }

    /// Age, Sex and Address are required to run the cleaning pipeline.
    pub fn require_demographics(&self) -> Result<()> {
        let missing: Vec<&str> = [ColumnRole::Age, ColumnRole::Sex, ColumnRole::Address]
            .into_iter()
            .filter(|r| !self.has(*r))
            .map(ColumnRole::as_str)
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "mandatory role(s) not mapped: {}",
                missing.join(", ")
            )))
        }
    }
}

#[derive(Debug, Default)]
struct Sections<'a> {
    mapping: Vec<(usize, &'a str, &'a str)>,
    named: BTreeMap<String, Vec<(usize, &'a str, &'a str)>>,
}

fn split_sections(text: &str) -> Result<Sections<'_>> {
    let mut out = Sections::default();
    let mut current: Option<String> = None;
    for (n, line) in text.lines().enumerate() {
        let lineno = n + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim().to_ascii_lowercase();
            out.named.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {lineno}: expected `key = value`")))?;
        let entry = (lineno, key.trim(), value.trim());
        match &current {
            None => out.mapping.push(entry),
            Some(s) => out.named.get_mut(s).expect("section registered").push(entry),
        }
    }
    Ok(out)
}

/// Parses the column-mapping part of a configuration file.
pub fn load_column_mapping(config_text: &str) -> Result<ColumnMapping> {
    let sections = split_sections(config_text)?;
    mapping_from(&sections)
}

fn mapping_from(sections: &Sections<'_>) -> Result<ColumnMapping> {
    let mut bindings = Vec::new();
    for &(lineno, key, value) in &sections.mapping {
        let role: ColumnRole = key
            .parse()
            .map_err(|_| Error::Config(format!("line {lineno}: unknown role {key:?}")))?;
        bindings.push(ColumnBinding {
            role,
            source_header: value.to_string(),
        });
    }
    ColumnMapping::new(bindings)
}

/// Full cleaning configuration.
#[derive(Debug, Clone)]
pub struct CleanConfig {
    pub mapping: ColumnMapping,
    pub impute: bool,
    pub plausibility_window_days: i64,
    pub gazetteer: Option<PathBuf>,
    pub salt_scope: SaltScope,
    pub hash_cost: HashCost,
    pub id_length: usize,
    pub sex_keywords: SexKeywords,
    pub abbreviations: Vec<(String, String)>,
}

impl CleanConfig {
    pub fn with_mapping(mapping: ColumnMapping) -> Self {
        CleanConfig {
            mapping,
            impute: true,
            plausibility_window_days: DEFAULT_PLAUSIBILITY_WINDOW_DAYS,
            gazetteer: None,
            salt_scope: SaltScope::PerBatch,
            hash_cost: HashCost::default(),
            id_length: crate::anonymizer::DEFAULT_ID_LENGTH,
            sex_keywords: SexKeywords::default(),
            abbreviations: crate::address::default_abbreviations(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let sections = split_sections(text)?;
        let mut cfg = CleanConfig::with_mapping(mapping_from(&sections)?);

        for (name, entries) in &sections.named {
            match name.as_str() {
                "options" => cfg.apply_options(entries)?,
                "anonymizer" => cfg.apply_anonymizer(entries)?,
                "sex_keywords" => cfg.sex_keywords = parse_keywords(entries)?,
                "abbreviations" => {
                    cfg.abbreviations = entries
                        .iter()
                        .map(|&(_, k, v)| (k.to_lowercase(), v.to_lowercase()))
                        .collect();
                }
                other => return Err(Error::Config(format!("unknown section [{other}]"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.impute && !self.mapping.has_imputation_donor() {
            return Err(Error::Config(
                "imputation requested but none of TestDate, OpdDate, AdmissionDate, DischargeDate is mapped"
                    .into(),
            ));
        }
        self.hash_cost.validate()?;
        if self.id_length < 16 {
            return Err(Error::Config("id_length must be at least 16".into()));
        }
        Ok(())
    }

    fn apply_options(&mut self, entries: &[(usize, &str, &str)]) -> Result<()> {
        for &(lineno, key, value) in entries {
            match key {
                "impute" => self.impute = parse_bool(lineno, value)?,
                "plausibility_window_days" => {
                    self.plausibility_window_days = parse_num(lineno, value)?
                }
                "gazetteer" => self.gazetteer = Some(PathBuf::from(value)),
                "salt_scope" => {
                    self.salt_scope = match value {
                        "batch" => SaltScope::PerBatch,
                        "fixed" => SaltScope::Fixed,
                        _ => {
                            return Err(Error::Config(format!(
                                "line {lineno}: salt_scope must be `batch` or `fixed`"
                            )))
                        }
                    }
                }
                _ => return Err(Error::Config(format!("line {lineno}: unknown option {key:?}"))),
            }
        }
        Ok(())
    }

    fn apply_anonymizer(&mut self, entries: &[(usize, &str, &str)]) -> Result<()> {
        for &(lineno, key, value) in entries {
            match key {
                "log_n" => self.hash_cost.log_n = parse_num(lineno, value)?,
                "r" => self.hash_cost.r = parse_num(lineno, value)?,
                "p" => self.hash_cost.p = parse_num(lineno, value)?,
                "id_length" => self.id_length = parse_num(lineno, value)?,
                _ => {
                    return Err(Error::Config(format!(
                        "line {lineno}: unknown anonymizer key {key:?}"
                    )))
                }
            }
        }
        Ok(())
    }
}

fn parse_keywords(entries: &[(usize, &str, &str)]) -> Result<SexKeywords> {
    let mut kw = SexKeywords::default();
    for &(lineno, key, value) in entries {
        let words: Vec<String> = value
            .split(',')
            .map(|w| w.trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        match key {
            "female" => kw.female = words,
            "male" => kw.male = words,
            "transgender" => kw.transgender = words,
            "review" => kw.review = words,
            _ => {
                return Err(Error::Config(format!(
                    "line {lineno}: unknown sex category {key:?}"
                )))
            }
        }
    }
    Ok(kw)
}

fn parse_bool(lineno: usize, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("line {lineno}: expected a boolean, got {value:?}"))),
    }
}

fn parse_num<T: std::str::FromStr>(lineno: usize, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("line {lineno}: expected a number, got {value:?}")))
}
