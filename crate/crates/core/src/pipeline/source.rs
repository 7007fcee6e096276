//! Image acquisition.
//!
//! [`FixtureSource`] serves a local directory tree (one sub-directory per
//! query, ranked by file name). [`HttpSource`] talks to a search endpoint that
//! returns one image URL per line, politely and with bounded retries.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use sha2::{Digest, Sha256};
use thiserror::Error;

/// Environment variable overriding the HTTP politeness delay (milliseconds).
pub const HTTP_DELAY_ENV: &str = "PURIFY_HTTP_DELAY_MS";
pub const DEFAULT_HTTP_DELAY: Duration = Duration::from_secs(1);
pub const DEFAULT_HTTP_RETRIES: usize = 3;

const IMAGE_EXTENSIONS: [&str; 4] = ["pgm", "ppm", "pnm", "png"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("image source unavailable for {query:?}: {reason}")]
pub struct SourceUnavailable {
    pub query: String,
    pub reason: String,
}

/// One downloaded image, before decoding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FetchedImage {
    /// 1-based position in the source's result list.
    pub rank: usize,
    pub locator: String,
    /// Hex SHA-256 of the bytes.
    pub id: String,
    pub bytes: Vec<u8>,
}

impl FetchedImage {
    pub fn new(rank: usize, locator: String, bytes: Vec<u8>) -> Self {
        Self {
            rank,
            locator,
            id: content_hash(&bytes),
            bytes,
        }
    }

    /// Lower-case file extension of the locator, if any.
    pub fn extension(&self) -> Option<String> {
        let name = self.locator.rsplit('/').next()?;
        let (_, ext) = name.rsplit_once('.')?;
        (!ext.is_empty() && ext.len() <= 4).then(|| ext.to_ascii_lowercase())
    }
}

pub fn content_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub trait ImageSource: Sync {
    /// At most `k` images for `query`, in the source's ranking order.
    fn list(&self, query: &str, k: usize) -> Result<Vec<FetchedImage>, SourceUnavailable>;
}

/// Directory name used for a query: spaces become underscores.
pub fn query_dir_name(query: &str) -> String {
    query.trim().replace(' ', "_")
}

#[derive(Clone, Debug)]
pub struct FixtureSource {
    root: PathBuf,
}

impl FixtureSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// Image files of `dir` in lexicographic file-name order.
    pub fn image_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            })
            .collect();
        files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
        Ok(files)
    }
}

impl ImageSource for FixtureSource {
    fn list(&self, query: &str, k: usize) -> Result<Vec<FetchedImage>, SourceUnavailable> {
        let sub = query_dir_name(query);
        let dir = self.root.join(&sub);
        let unavailable = |reason: String| SourceUnavailable {
            query: query.to_string(),
            reason,
        };
        let files = Self::image_files(&dir).map_err(|e| unavailable(format!("{}: {e}", dir.display())))?;
        files
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(i, path)| {
                let bytes = fs::read(&path).map_err(|e| unavailable(format!("{}: {e}", path.display())))?;
                let name = path.file_name().unwrap_or_default().to_string_lossy();
                Ok(FetchedImage::new(i + 1, format!("{sub}/{name}"), bytes))
            })
            .collect()
    }
}

/// Minimal blocking GET.
pub trait Transport: Send + Sync {
    fn get(&self, url: &str) -> Result<Vec<u8>, String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent }
    }
}

impl Transport for UreqTransport {
    fn get(&self, url: &str) -> Result<Vec<u8>, String> {
        let mut response = self.agent.get(url).call().map_err(|e| e.to_string())?;
        response.body_mut().read_to_vec().map_err(|e| e.to_string())
    }
}

/// Fetcher for a search endpoint. `search_url` contains a `{query}`
/// placeholder; the endpoint answers with one image URL per line.
pub struct HttpSource {
    pub search_url: String,
    pub delay: Duration,
    pub retries: usize,
    transport: Box<dyn Transport>,
    sleep: Box<dyn Fn(Duration) + Send + Sync>,
}

impl HttpSource {
    pub fn new(search_url: impl Into<String>) -> Self {
        Self::with_transport(search_url, Box::new(UreqTransport::new(Duration::from_secs(30))))
    }

    pub fn with_transport(search_url: impl Into<String>, transport: Box<dyn Transport>) -> Self {
        Self {
            search_url: search_url.into(),
            delay: delay_from_env(std::env::var(HTTP_DELAY_ENV).ok().as_deref()),
            retries: DEFAULT_HTTP_RETRIES,
            transport,
            sleep: Box::new(std::thread::sleep),
        }
    }

    pub fn with_sleeper(mut self, sleep: Box<dyn Fn(Duration) + Send + Sync>) -> Self {
        self.sleep = sleep;
        self
    }

    /// GET with up to `retries` additional attempts; every request, including
    /// retries, is preceded by the politeness delay.
    fn get_politely(&self, url: &str) -> Result<Vec<u8>, String> {
        let mut last = String::new();
        for _ in 0..=self.retries {
            (self.sleep)(self.delay);
            match self.transport.get(url) {
                Ok(bytes) => return Ok(bytes),
                Err(e) => last = e,
            }
        }
        Err(format!("{url}: {last} (after {} attempts)", self.retries + 1))
    }
}

/// Politeness delay from the environment override, if it parses.
pub fn delay_from_env(value: Option<&str>) -> Duration {
    value
        .and_then(|v| v.trim().parse::<u64>().ok())
        .map(Duration::from_millis)
        .unwrap_or(DEFAULT_HTTP_DELAY)
}

fn percent_encode(s: &str) -> String {
    s.bytes()
        .map(|b| match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => (b as char).to_string(),
            b' ' => "+".to_string(),
            _ => format!("%{b:02X}"),
        })
        .collect()
}

impl ImageSource for HttpSource {
    fn list(&self, query: &str, k: usize) -> Result<Vec<FetchedImage>, SourceUnavailable> {
        let unavailable = |reason: String| SourceUnavailable {
            query: query.to_string(),
            reason,
        };
        let url = self.search_url.replace("{query}", &percent_encode(query));
        let body = self.get_politely(&url).map_err(unavailable)?;
        let listing = String::from_utf8_lossy(&body);
        let mut out = Vec::new();
        for line in listing.lines().map(str::trim).filter(|l| !l.is_empty()).take(k) {
            // A single unreachable image is skipped, not fatal.
            if let Ok(bytes) = self.get_politely(line) {
                out.push(FetchedImage::new(out.len() + 1, line.to_string(), bytes));
            }
        }
        Ok(out)
    }
}

/// Fetches at most `k` images for `query`.
pub fn fetch_images(source: &dyn ImageSource, query: &str, k: usize) -> Result<Vec<FetchedImage>, SourceUnavailable> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut images = source.list(query, k)?;
    images.truncate(k);
    Ok(images)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;
    use std::sync::{Arc, Mutex};

    #[test]
    fn fixture_order_and_ranks() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("jumping_horse");
        fs::create_dir(&sub).unwrap();
        fs::write(sub.join("b.ppm"), b"bbb").unwrap();
        fs::write(sub.join("a.ppm"), b"aaa").unwrap();
        fs::write(sub.join("notes.txt"), b"ignored").unwrap();
        let src = FixtureSource::new(dir.path());
        let got = fetch_images(&src, "jumping horse", 5).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!((got[0].rank, got[0].locator.as_str()), (1, "jumping_horse/a.ppm"));
        assert_eq!((got[1].rank, got[1].locator.as_str()), (2, "jumping_horse/b.ppm"));
        assert_eq!(got[0].id, content_hash(b"aaa"));
        assert_eq!(got[0].extension().as_deref(), Some("ppm"));
    }

    #[test]
    fn fixture_caps_at_k() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("q");
        fs::create_dir(&sub).unwrap();
        for i in 0..500 {
            fs::write(sub.join(format!("{i:04}.pgm")), [i as u8]).unwrap();
        }
        let got = fetch_images(&FixtureSource::new(dir.path()), "q", 120).unwrap();
        assert_eq!(got.len(), 120);
        assert_eq!(got[119].locator, "q/0119.pgm");
    }

    #[test]
    fn fixture_empty_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("empty")).unwrap();
        let src = FixtureSource::new(dir.path());
        assert!(fetch_images(&src, "empty", 120).unwrap().is_empty());
        assert!(fetch_images(&src, "missing", 120).is_err());
    }

    #[test]
    fn sha256_reference() {
        assert_eq!(
            content_hash(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    struct FakeTransport {
        pages: HashMap<String, Vec<u8>>,
        failures_left: Mutex<HashMap<String, usize>>,
        calls: Arc<Mutex<Vec<String>>>,
    }

    impl Transport for FakeTransport {
        fn get(&self, url: &str) -> Result<Vec<u8>, String> {
            self.calls.lock().unwrap().push(url.to_string());
            let mut failures = self.failures_left.lock().unwrap();
            if let Some(n) = failures.get_mut(url) {
                if *n > 0 {
                    *n -= 1;
                    return Err("503".into());
                }
            }
            self.pages.get(url).cloned().ok_or_else(|| "404".into())
        }
    }

    #[test]
    fn http_retries_and_delays() {
        let calls = Arc::new(Mutex::new(Vec::new()));
        let slept = Arc::new(Mutex::new(Vec::new()));
        let pages = HashMap::from([
            ("http://s/?q=jumping+horse".to_string(), b"http://i/1\nhttp://i/2\nhttp://i/3\n".to_vec()),
            ("http://i/1".to_string(), b"one".to_vec()),
            ("http://i/2".to_string(), b"two".to_vec()),
        ]);
        let transport = FakeTransport {
            pages,
            failures_left: Mutex::new(HashMap::from([("http://i/1".to_string(), 2)])),
            calls: calls.clone(),
        };
        let slept_in = slept.clone();
        let mut src = HttpSource::with_transport("http://s/?q={query}", Box::new(transport))
            .with_sleeper(Box::new(move |d| slept_in.lock().unwrap().push(d)));
        src.delay = Duration::from_millis(250);
        let got = src.list("jumping horse", 120).unwrap();
        // Image 1 succeeds on its third attempt; image 3 exhausts 4 attempts.
        assert_eq!(got.iter().map(|g| g.bytes.clone()).collect::<Vec<_>>(), vec![b"one".to_vec(), b"two".to_vec()]);
        assert_eq!(got[1].rank, 2);
        let n_calls = calls.lock().unwrap().len();
        assert_eq!(n_calls, 1 + 3 + 1 + 4);
        let slept = slept.lock().unwrap();
        assert_eq!(slept.len(), n_calls);
        assert!(slept.iter().all(|d| *d == Duration::from_millis(250)));
    }

    #[test]
    fn http_search_failure_is_unavailable() {
        let transport = FakeTransport {
            pages: HashMap::new(),
            failures_left: Mutex::new(HashMap::new()),
            calls: Arc::new(Mutex::new(Vec::new())),
        };
        let src = HttpSource::with_transport("http://s/{query}", Box::new(transport)).with_sleeper(Box::new(|_| {}));
        assert!(src.list("horse", 5).is_err());
    }

    #[test]
    fn delay_override_parsing() {
        assert_eq!(delay_from_env(None), Duration::from_secs(1));
        assert_eq!(delay_from_env(Some("250")), Duration::from_millis(250));
        assert_eq!(delay_from_env(Some("soon")), Duration::from_secs(1));
    }
}
