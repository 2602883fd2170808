use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::LocationDetail;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coordinates {
    pub lat: f64,
    pub lon: f64,
}

impl Coordinates {
    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GeocodeError {
    /// Timeout, quota or transport failure; worth retrying later.
    Retryable(String),
    /// The service answered with something unusable.
    Malformed(String),
}

/// A geocoding backend. `Ok(None)` means the service knows no such place.
pub trait GeocodeClient: Send + Sync {
    fn lookup(&self, query: &str) -> std::result::Result<Option<Coordinates>, GeocodeError>;
}

/// Offline client answering from a fixed table, or from a hash of the query
/// when built with [`StubGeocoder::synthetic`].
#[derive(Debug, Clone, Default)]
pub struct StubGeocoder {
    table: HashMap<String, Coordinates>,
    synthetic: bool,
}

impl StubGeocoder {
    pub fn from_table(table: impl IntoIterator<Item = (String, Coordinates)>) -> Self {
        Self {
            table: table.into_iter().collect(),
            synthetic: false,
        }
    }

    /// Reads a JSON object `{query: {lat, lon}}`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: HashMap<String, Coordinates> = serde_json::from_str(&text)?;
        Ok(Self::from_table(table))
    }

    /// Answers every query with a point inside a Punjab-sized box derived
    /// from an FNV-1a hash of the query.
    pub fn synthetic() -> Self {
        Self {
            table: HashMap::new(),
            synthetic: true,
        }
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

impl GeocodeClient for StubGeocoder {
    fn lookup(&self, query: &str) -> std::result::Result<Option<Coordinates>, GeocodeError> {
        if let Some(c) = self.table.get(query) {
            return Ok(Some(*c));
        }
        if !self.synthetic {
            return Ok(None);
        }
        let h = fnv1a(query);
        let lat = 29.5 + (h & 0xffff) as f64 / 65535.0 * 3.0;
        let lon = 73.9 + ((h >> 16) & 0xffff) as f64 / 65535.0 * 3.0;
        Ok(Some(Coordinates {
            lat: (lat * 1e4).round() / 1e4,
            lon: (lon * 1e4).round() / 1e4,
        }))
    }
}

#[cfg(feature = "http-geocoder")]
pub use http::HttpGeocoder;

#[cfg(feature = "http-geocoder")]
mod http {
    use std::time::Duration;

    use super::{Coordinates, GeocodeClient, GeocodeError};

    pub const ENDPOINT_VAR: &str = "LINELIST_GEOCODER_URL";
    pub const KEY_VAR: &str = "LINELIST_GEOCODER_KEY";

    /// `GET {endpoint}?q=<query>&key=<key>` returning `{"lat": .., "lon": ..}`.
    /// A 404 means "not found".
    pub struct HttpGeocoder {
        agent: ureq::Agent,
        endpoint: String,
        key: Option<String>,
    }

    impl HttpGeocoder {
        pub fn new(endpoint: impl Into<String>, key: Option<String>, timeout: Duration) -> Self {
            let config = ureq::Agent::config_builder()
                .timeout_global(Some(timeout))
                .build();
            Self {
                agent: config.into(),
                endpoint: endpoint.into(),
                key,
            }
        }

        /// Endpoint and key from the environment; `None` when no endpoint is set.
        pub fn from_env(timeout: Duration) -> Option<Self> {
            let endpoint = std::env::var(ENDPOINT_VAR).ok().filter(|e| !e.is_empty())?;
            let key = std::env::var(KEY_VAR).ok().filter(|k| !k.is_empty());
            Some(Self::new(endpoint, key, timeout))
        }
    }

    impl GeocodeClient for HttpGeocoder {
        fn lookup(&self, query: &str) -> Result<Option<Coordinates>, GeocodeError> {
            let mut req = self.agent.get(&self.endpoint).query("q", query);
            if let Some(key) = &self.key {
                req = req.query("key", key);
            }
            let mut resp = match req.call() {
                Ok(r) => r,
                Err(ureq::Error::StatusCode(404)) => return Ok(None),
                Err(ureq::Error::StatusCode(c)) if c == 429 || c >= 500 => {
                    return Err(GeocodeError::Retryable(format!("http status {c}")))
                }
                Err(ureq::Error::StatusCode(c)) => {
                    return Err(GeocodeError::Malformed(format!("http status {c}")))
                }
                Err(e) => return Err(GeocodeError::Retryable(e.to_string())),
            };
            let coords: Coordinates = resp
                .body_mut()
                .read_json()
                .map_err(|e| GeocodeError::Malformed(e.to_string()))?;
            if !coords.is_valid() {
                return Err(GeocodeError::Malformed(format!(
                    "coordinates out of range: {}, {}",
                    coords.lat, coords.lon
                )));
            }
            Ok(Some(coords))
        }
    }
}

/// Query-string to coordinates map shared by all workers.
#[derive(Debug, Default)]
pub struct GeocodeCache {
    entries: RwLock<BTreeMap<String, Coordinates>>,
}

impl GeocodeCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Missing file means an empty cache.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        match std::fs::read_to_string(path) {
            Ok(text) => Ok(Self {
                entries: RwLock::new(serde_json::from_str(&text)?),
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::new()),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&*self.read())?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, BTreeMap<String, Coordinates>> {
        self.entries.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, BTreeMap<String, Coordinates>> {
        self.entries.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn get(&self, query: &str) -> Option<Coordinates> {
        self.read().get(query).copied()
    }

    pub fn insert(&self, query: impl Into<String>, coords: Coordinates) {
        self.write().insert(query.into(), coords);
    }

    pub fn len(&self) -> usize {
        self.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.read().is_empty()
    }

    pub fn clear(&self) {
        self.write().clear();
    }

    pub fn entries(&self) -> Vec<(String, Coordinates)> {
        self.read().iter().map(|(k, v)| (k.clone(), *v)).collect()
    }
}

/// Cache in front of an optional client. Requests that miss the cache go
/// through one dispatcher lock and are spaced at least `min_interval` apart.
pub struct Geocoder {
    client: Option<Box<dyn GeocodeClient>>,
    cache: GeocodeCache,
    min_interval: Duration,
    last_request: Mutex<Option<Instant>>,
}

impl Geocoder {
    pub fn new(client: Option<Box<dyn GeocodeClient>>, cache: GeocodeCache) -> Self {
        Self {
            client,
            cache,
            min_interval: Duration::ZERO,
            last_request: Mutex::new(None),
        }
    }

    /// Cache lookups only.
    pub fn disabled() -> Self {
        Self::new(None, GeocodeCache::new())
    }

    pub fn with_min_interval(mut self, interval: Duration) -> Self {
        self.min_interval = interval;
        self
    }

    pub fn cache(&self) -> &GeocodeCache {
        &self.cache
    }

    pub fn has_client(&self) -> bool {
        self.client.is_some()
    }

    pub fn lookup(&self, query: &str) -> GeocodeStatus {
        if let Some(c) = self.cache.get(query) {
            return GeocodeStatus::CacheHit(c);
        }
        let Some(client) = &self.client else {
            return GeocodeStatus::Disabled;
        };
        let mut last = self.last_request.lock().unwrap_or_else(|e| e.into_inner());
        // Another worker may have filled it while we waited.
        if let Some(c) = self.cache.get(query) {
            return GeocodeStatus::CacheHit(c);
        }
        if let Some(prev) = *last {
            let wait = self.min_interval.saturating_sub(prev.elapsed());
            if !wait.is_zero() {
                std::thread::sleep(wait);
            }
        }
        let answer = client.lookup(query);
        *last = Some(Instant::now());
        drop(last);
        match answer {
            Ok(Some(c)) if c.is_valid() => {
                self.cache.insert(query, c);
                GeocodeStatus::Fetched(c)
            }
            Ok(Some(c)) => GeocodeStatus::Malformed(format!("coordinates out of range: {}, {}", c.lat, c.lon)),
            Ok(None) => GeocodeStatus::NotFound,
            Err(GeocodeError::Retryable(msg)) => GeocodeStatus::Retry(msg),
            Err(GeocodeError::Malformed(msg)) => GeocodeStatus::Malformed(msg),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeocodeStatus {
    CacheHit(Coordinates),
    Fetched(Coordinates),
    NotFound,
    /// No client configured and no cached answer.
    Disabled,
    Retry(String),
    Malformed(String),
}

impl GeocodeStatus {
    pub fn coordinates(&self) -> Option<Coordinates> {
        match self {
            GeocodeStatus::CacheHit(c) | GeocodeStatus::Fetched(c) => Some(*c),
            _ => None,
        }
    }
}

/// Fills coordinates for a matched location.
pub fn geocode(location: &LocationDetail, geocoder: &Geocoder) -> Result<(LocationDetail, GeocodeStatus)> {
    let query = location
        .query()
        .ok_or_else(|| Error::Geocode("location has no name to geocode".into()))?;
    let status = geocoder.lookup(&query);
    let mut out = location.clone();
    if let Some(c) = status.coordinates() {
        out.latitude = Some(c.lat);
        out.longitude = Some(c.lon);
    }
    Ok((out, status))
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    use super::*;

    fn khanna() -> LocationDetail {
        LocationDetail {
            district: Some("Ludhiana".into()),
            settlement: Some("Khanna".into()),
            matched_gazetteer_id: Some("C0101".into()),
            ..LocationDetail::default()
        }
    }

    struct Counting(Arc<AtomicUsize>, std::result::Result<Option<Coordinates>, GeocodeError>);

    impl GeocodeClient for Counting {
        fn lookup(&self, _: &str) -> std::result::Result<Option<Coordinates>, GeocodeError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            self.1.clone()
        }
    }

    #[test]
    fn stub_fills_coordinates() {
        let stub = StubGeocoder::from_table([("khanna ludhiana".to_string(), Coordinates { lat: 30.70, lon: 76.22 })]);
        let g = Geocoder::new(Some(Box::new(stub)), GeocodeCache::new());
        let (loc, status) = geocode(&khanna(), &g).unwrap();
        assert_eq!(status, GeocodeStatus::Fetched(Coordinates { lat: 30.70, lon: 76.22 }));
        assert_eq!((loc.latitude, loc.longitude), (Some(30.70), Some(76.22)));
        assert_eq!(g.cache().len(), 1);
    }

    #[test]
    fn cache_hits_never_requery() {
        let calls = Arc::new(AtomicUsize::new(0));
        let c = Coordinates { lat: 30.0, lon: 76.0 };
        let g = Geocoder::new(Some(Box::new(Counting(calls.clone(), Ok(Some(c))))), GeocodeCache::new());
        for _ in 0..5 {
            geocode(&khanna(), &g).unwrap();
        }
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn prewarmed_cache_without_client() {
        let cache = GeocodeCache::new();
        cache.insert("khanna ludhiana", Coordinates { lat: 30.70, lon: 76.22 });
        let g = Geocoder::new(None, cache);
        let (loc, status) = geocode(&khanna(), &g).unwrap();
        assert!(matches!(status, GeocodeStatus::CacheHit(_)));
        assert_eq!(loc.latitude, Some(30.70));
        let other = LocationDetail {
            district: Some("Patiala".into()),
            ..LocationDetail::default()
        };
        assert_eq!(geocode(&other, &g).unwrap().1, GeocodeStatus::Disabled);
    }

    #[test]
    fn empty_location_is_an_error() {
        assert!(geocode(&LocationDetail::default(), &Geocoder::disabled()).is_err());
    }

    #[test]
    fn failures_are_not_cached() {
        let calls = Arc::new(AtomicUsize::new(0));
        let g = Geocoder::new(
            Some(Box::new(Counting(calls.clone(), Err(GeocodeError::Retryable("quota".into()))))),
            GeocodeCache::new(),
        );
        assert_eq!(geocode(&khanna(), &g).unwrap().1, GeocodeStatus::Retry("quota".into()));
        assert_eq!(geocode(&khanna(), &g).unwrap().1, GeocodeStatus::Retry("quota".into()));
        assert_eq!(calls.load(Ordering::SeqCst), 2);
        assert!(g.cache().is_empty());
    }

    #[test]
    fn synthetic_stub_is_deterministic_and_in_range() {
        let s = StubGeocoder::synthetic();
        let a = s.lookup("khanna ludhiana").unwrap().unwrap();
        assert_eq!(a, s.lookup("khanna ludhiana").unwrap().unwrap());
        assert!(a.is_valid());
        assert_ne!(a, s.lookup("nabha patiala").unwrap().unwrap());
    }

    #[test]
    fn cache_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.json");
        assert!(GeocodeCache::load(&path).unwrap().is_empty());
        let cache = GeocodeCache::new();
        cache.insert("b", Coordinates { lat: 1.0, lon: 2.0 });
        cache.insert("a", Coordinates { lat: 3.0, lon: 4.0 });
        cache.save(&path).unwrap();
        let back = GeocodeCache::load(&path).unwrap();
        assert_eq!(back.entries(), cache.entries());
    }
}
