//! Identifier removal and keyed pseudonyms.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Action, CellVerdict, ColumnRole, Phase, RawRecord};

/// Environment variable holding the pseudonymization key.
pub const KEY_ENV: &str = "LINELIST_ANON_KEY";
pub const MIN_KEY_BYTES: usize = 16;
pub const DEFAULT_ID_LENGTH: usize = 16;
pub const STRIP_RULE: &str = "ID-STRIP";
/// Stands in for a removed identifier in the audit log.
pub const REDACTED: &str = "<redacted>";

/// Fields hashed into the pseudonym, in this order.
pub const PSEUDONYM_FIELDS: [ColumnRole; 5] = [
    ColumnRole::Name,
    ColumnRole::Contact,
    ColumnRole::Age,
    ColumnRole::Sex,
    ColumnRole::Address,
];

/// scrypt cost parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashCost {
    pub log_n: u8,
    pub r: u32,
    pub p: u32,
}

impl Default for HashCost {
    fn default() -> Self {
        HashCost { log_n: 8, r: 8, p: 1 }
    }
}

impl HashCost {
    pub fn validate(&self) -> Result<()> {
        if self.log_n == 0 {
            return Err(Error::Config("scrypt log_n must be at least 1".into()));
        }
        self.params(32).map(|_| ())
    }

    fn params(&self, len: usize) -> Result<scrypt::Params> {
        scrypt::Params::new(self.log_n, self.r, self.p, len).map_err(|e| {
            Error::Config(format!(
                "invalid scrypt cost (log_n={}, r={}, p={}): {e}",
                self.log_n, self.r, self.p
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SaltScope {
    /// Ids differ between yearly batches.
    PerBatch,
    /// Ids link across batches that share the key.
    Fixed,
}

impl SaltScope {
    pub fn salt(self, year: i32) -> String {
        match self {
            SaltScope::PerBatch => format!("batch-{year}"),
            SaltScope::Fixed => "fixed".to_string(),
        }
    }
}

#[derive(Clone)]
pub struct AnonConfig {
    secret_key: Vec<u8>,
    pub cost: HashCost,
    pub id_length: usize,
    pub salt: String,
}

impl fmt::Debug for AnonConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnonConfig")
            .field("secret_key", &"***")
            .field("cost", &self.cost)
            .field("id_length", &self.id_length)
            .field("salt", &self.salt)
            .finish()
    }
}

impl AnonConfig {
    pub fn new(secret_key: impl Into<Vec<u8>>, cost: HashCost, id_length: usize, salt: impl Into<String>) -> Result<Self> {
        let secret_key = secret_key.into();
        if secret_key.len() < MIN_KEY_BYTES {
            return Err(Error::Config(format!(
                "anonymizer key must be at least {MIN_KEY_BYTES} bytes"
            )));
        }
        if id_length < 16 {
            return Err(Error::Config("id_length must be at least 16".into()));
        }
        if id_length > 128 {
            return Err(Error::Config("id_length must be at most 128".into()));
        }
        cost.validate()?;
        Ok(AnonConfig {
            secret_key,
            cost,
            id_length,
            salt: salt.into(),
        })
    }

    /// Reads the key from [`KEY_ENV`]. An unset or empty variable is an error.
    pub fn from_env(cost: HashCost, id_length: usize, salt: impl Into<String>) -> Result<Self> {
        Self::from_env_var(KEY_ENV, cost, id_length, salt)
    }

    pub fn from_env_var(var: &str, cost: HashCost, id_length: usize, salt: impl Into<String>) -> Result<Self> {
        match std::env::var_os(var) {
            Some(v) if !v.is_empty() => Self::new(v.into_encoded_bytes(), cost, id_length, salt),
            _ => Err(Error::Config(format!(
                "{var} is not set; pseudonyms are never generated without a key"
            ))),
        }
    }
}

/// Blanks Name and Contact cells. Each mapped identifier cell yields one
/// verdict; the removed value itself never appears in it.
pub fn strip_identifiers(record: &RawRecord) -> (RawRecord, Vec<CellVerdict>) {
    let mut out = record.clone();
    let mut verdicts = Vec::new();
    for role in [ColumnRole::Name, ColumnRole::Contact] {
        let Some(cell) = out.cells.get_mut(&role) else {
            continue;
        };
        let blank = cell.trim().is_empty();
        verdicts.push(CellVerdict {
            row_index: record.row_index,
            role,
            phase: if blank { Phase::Screened } else { Phase::Edited },
            rule_id: STRIP_RULE.to_string(),
            action: if blank { Action::Unchanged } else { Action::Deleted },
            before: if blank { String::new() } else { REDACTED.to_string() },
            after: String::new(),
            low_confidence: false,
            note: None,
        });
        cell.clear();
    }
    (out, verdicts)
}

/// Unambiguous byte encoding of the identifier tuple.
fn identifier_bytes(record: &RawRecord, salt: &str) -> Vec<u8> {
    let mut buf = Vec::new();
    let mut push = |tag: &str, value: &[u8]| {
        buf.extend_from_slice(tag.as_bytes());
        buf.push(b':');
        buf.extend_from_slice(&(value.len() as u64).to_le_bytes());
        buf.extend_from_slice(value);
    };
    push("salt", salt.as_bytes());
    for role in PSEUDONYM_FIELDS {
        if let Some(v) = record.cell(role) {
            push(role.as_str(), v.as_bytes());
        }
    }
    buf
}

/// Hex pseudonym of the record's original identifier fields.
pub fn pseudonymize(record: &RawRecord, cfg: &AnonConfig) -> Result<String> {
    let out_len = cfg.id_length.div_ceil(2);
    let params = cfg.cost.params(out_len.max(10))?;
    let mut out = vec![0u8; out_len.max(10)];
    scrypt::scrypt(&cfg.secret_key, &identifier_bytes(record, &cfg.salt), &params, &mut out)
        .map_err(|e| Error::Config(format!("scrypt: {e}")))?;
    let mut id = hex::encode(out);
    id.truncate(cfg.id_length);
    Ok(id)
}
