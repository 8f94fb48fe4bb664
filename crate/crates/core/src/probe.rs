//! Latent-knowledge probing of a base model through an OpenAI-compatible
//! completions endpoint.
//!
//! Each term gets one greedy (temperature 0) request and `n_stochastic`
//! sampled requests. A term has latent knowledge when at least one sample
//! yields the canonical identifier; the hit fraction sets the dose band.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::datamodel::{Ontology, TermRecord};
use crate::error::{Error, Result};

pub const LABEL_PLACEHOLDER: &str = "{label}";
pub const DEFAULT_PROMPT_TEMPLATE: &str =
    "What is the ontology identifier for the term \"{label}\"? Answer with the identifier only.";
pub const PROBE_RESULTS_FILE: &str = "probe_results.jsonl";

/// Request body layout understood by the endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiStyle {
    /// `/chat/completions`: `messages: [{role, content}]`.
    Chat,
    /// Legacy `/completions`: `prompt`.
    Completions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Full URL of the completions route, e.g. `https://host/v1/chat/completions`.
    pub endpoint_url: String,
    pub model_name: String,
    pub n_stochastic: u32,
    pub temperature_stochastic: f64,
    pub prompt_template: String,
    pub max_parallel: usize,
    pub retry_limit: u32,
    #[serde(with = "duration_secs")]
    pub timeout: Duration,
    pub max_tokens: u32,
    pub api_style: ApiStyle,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    #[serde(with = "duration_secs")]
    pub backoff_base: Duration,
    /// Keep raw completions in the results for audit.
    pub audit: bool,
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "http://localhost:8000/v1/chat/completions".into(),
            model_name: "meta-llama/Llama-3.1-8B-Instruct".into(),
            n_stochastic: 50,
            temperature_stochastic: 1.0,
            prompt_template: DEFAULT_PROMPT_TEMPLATE.into(),
            max_parallel: 4,
            retry_limit: 3,
            timeout: Duration::from_secs(60),
            max_tokens: 32,
            api_style: ApiStyle::Chat,
            api_key_env: None,
            backoff_base: Duration::from_millis(250),
            audit: false,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_stochastic < 1 {
            return Err(Error::Config("n_stochastic must be at least 1".into()));
        }
        if !(self.temperature_stochastic > 0.0) {
            return Err(Error::Config("temperature_stochastic must be positive".into()));
        }
        match self.prompt_template.matches(LABEL_PLACEHOLDER).count() {
            1 => {}
            0 => return Err(Error::Config("prompt template lacks {label}".into())),
            n => {
                return Err(Error::Config(format!(
                    "prompt template contains {{label}} {n} times, expected once"
                )))
            }
        }
        if self.max_parallel < 1 {
            return Err(Error::Config("max_parallel must be at least 1".into()));
        }
        if self.endpoint_url.trim().is_empty() {
            return Err(Error::Config("endpoint_url is empty".into()));
        }
        Ok(())
    }
}

pub fn build_prompt(template: &str, term: &TermRecord) -> String {
    template.replacen(LABEL_PLACEHOLDER, &term.label, 1)
}

fn identifier_regex(ontology: &Ontology) -> Regex {
    let prefix = match ontology {
        Ontology::Hpo => "HP".to_string(),
        Ontology::Go => "GO".to_string(),
        Ontology::Other(name) => regex::escape(name),
    };
    let body = match ontology {
        Ontology::Other(_) => "[A-Za-z0-9_]+",
        _ => "[0-9]{7}",
    };
    let tail = match ontology {
        Ontology::Other(_) => "",
        _ => "(?:[^0-9]|$)",
    };
    Regex::new(&format!(
        r"(?:^|[^A-Za-z0-9])((?i:{prefix})):({body}){tail}"
    ))
    .expect("identifier pattern compiles")
}

/// First identifier-shaped substring in `response_text`, prefix normalized to uppercase.
pub fn extract_identifier(response_text: &str, ontology: &Ontology) -> Option<String> {
    static HPO: OnceLock<Regex> = OnceLock::new();
    static GO: OnceLock<Regex> = OnceLock::new();
    let owned;
    let re = match ontology {
        Ontology::Hpo => HPO.get_or_init(|| identifier_regex(&Ontology::Hpo)),
        Ontology::Go => GO.get_or_init(|| identifier_regex(&Ontology::Go)),
        Ontology::Other(_) => {
            owned = identifier_regex(ontology);
            &owned
        }
    };
    let caps = re.captures(response_text)?;
    Some(format!(
        "{}:{}",
        caps[1].to_ascii_uppercase(),
        &caps[2]
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DoseBand {
    None,
    Moderate,
    High,
}

impl DoseBand {
    /// `high` at a hit fraction of at least 10%, `moderate` below that, `none` at zero hits.
    pub fn classify(hits: u32, n: u32) -> Self {
        if hits == 0 {
            DoseBand::None
        } else if u64::from(hits) * 10 >= u64::from(n) {
            DoseBand::High
        } else {
            DoseBand::Moderate
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DoseBand::None => "none",
            DoseBand::Moderate => "moderate",
            DoseBand::High => "high",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawOutputs {
    pub deterministic: String,
    pub stochastic: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentProbeResult {
    pub term_id: String,
    pub deterministic_correct: bool,
    pub stochastic_hits: u32,
    pub n_stochastic: u32,
    pub latent: bool,
    pub dose_band: DoseBand,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_outputs: Option<RawOutputs>,
}

/// Scores one term's transcripts. Pure: identical transcripts give identical results.
pub fn classify_transcripts(
    term: &TermRecord,
    deterministic: &str,
    stochastic: &[String],
    keep_raw: bool,
) -> LatentProbeResult {
    let is_hit = |text: &str| {
        extract_identifier(text, &term.ontology).as_deref() == Some(term.identifier.as_str())
    };
    let hits = stochastic.iter().filter(|s| is_hit(s)).count() as u32;
    let n = stochastic.len() as u32;
    LatentProbeResult {
        term_id: term.term_id.clone(),
        deterministic_correct: is_hit(deterministic),
        stochastic_hits: hits,
        n_stochastic: n,
        latent: hits >= 1,
        dose_band: DoseBand::classify(hits, n),
        raw_outputs: keep_raw.then(|| RawOutputs {
            deterministic: deterministic.to_string(),
            stochastic: stochastic.to_vec(),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionRequest {
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendError {
    pub retryable: bool,
    pub message: String,
}

impl BackendError {
    pub fn retryable(message: impl Into<String>) -> Self {
        Self {
            retryable: true,
            message: message.into(),
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        Self {
            retryable: false,
            message: message.into(),
        }
    }
}

/// Something that answers one completion request with one text.
pub trait CompletionBackend: Sync {
    fn complete(&self, request: &CompletionRequest) -> std::result::Result<String, BackendError>;
}

/// Blocking HTTP client for OpenAI-compatible endpoints.
pub struct HttpBackend {
    agent: ureq::Agent,
    url: String,
    style: ApiStyle,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(config: &ProbeConfig) -> Result<Self> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            agent,
            url: config.endpoint_url.clone(),
            style: config.api_style,
            api_key,
        })
    }

    fn body(&self, request: &CompletionRequest) -> serde_json::Value {
        match self.style {
            ApiStyle::Chat => json!({
                "model": request.model,
                "messages": [{"role": "user", "content": request.prompt}],
                "temperature": request.temperature,
                "max_tokens": request.max_tokens,
                "n": 1,
            }),
            ApiStyle::Completions => json!({
                "model": request.model,
                "prompt": request.prompt,
                "temperature": request.temperature,
                "max_tokens": request.max_tokens,
                "n": 1,
            }),
        }
    }
}

/// Pulls the completion text out of a chat or legacy completions response.
pub fn response_text(body: &serde_json::Value) -> Option<String> {
    let choice = body.get("choices")?.get(0)?;
    if let Some(content) = choice.get("message").and_then(|m| m.get("content")) {
        return content.as_str().map(str::to_string);
    }
    choice.get("text")?.as_str().map(str::to_string)
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> std::result::Result<String, BackendError> {
        let mut call = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call
            .send_json(self.body(request))
            .map_err(|e| BackendError::retryable(e.to_string()))?;
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(BackendError::retryable(format!("HTTP {status}")));
        }
        if status >= 400 {
            return Err(BackendError::fatal(format!("HTTP {status}")));
        }
        let body: serde_json::Value = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::retryable(format!("invalid response body: {e}")))?;
        response_text(&body).ok_or_else(|| BackendError::fatal("response has no completion text"))
    }
}

fn backoff_delay(base: Duration, attempt: u32) -> Duration {
    if base.is_zero() {
        return Duration::ZERO;
    }
    let exp = base.saturating_mul(1u32 << attempt.min(16));
    let jitter = rand::random::<f64>();
    exp.mul_f64(1.0 + jitter)
}

fn complete_with_retry(
    backend: &dyn CompletionBackend,
    request: &CompletionRequest,
    config: &ProbeConfig,
    term_id: &str,
) -> Result<String> {
    let mut attempts = 0;
    loop {
        attempts += 1;
        match backend.complete(request) {
            Ok(text) => return Ok(text),
            Err(err) if err.retryable && attempts <= config.retry_limit => {
                std::thread::sleep(backoff_delay(config.backoff_base, attempts - 1));
            }
            Err(err) => {
                return Err(Error::Transport {
                    term_id: term_id.to_string(),
                    attempts,
                    message: err.message,
                })
            }
        }
    }
}

/// Probes one term: one greedy request, then `n_stochastic` sampled requests.
pub fn probe_term(
    term: &TermRecord,
    config: &ProbeConfig,
    backend: &dyn CompletionBackend,
) -> Result<LatentProbeResult> {
    let prompt = build_prompt(&config.prompt_template, term);
    let request = |temperature: f64| CompletionRequest {
        model: config.model_name.clone(),
        prompt: prompt.clone(),
        temperature,
        max_tokens: config.max_tokens,
    };
    let greedy = request(0.0);
    let deterministic = complete_with_retry(backend, &greedy, config, &term.term_id)?;
    let sampled = request(config.temperature_stochastic);
    let stochastic = (0..config.n_stochastic)
        .map(|_| complete_with_retry(backend, &sampled, config, &term.term_id))
        .collect::<Result<Vec<_>>>()?;
    Ok(classify_transcripts(
        term,
        &deterministic,
        &stochastic,
        config.audit,
    ))
}

/// Reads completed results from an append-only sink, dropping a torn final line.
fn load_completed(path: &Path) -> Result<Vec<LatentProbeResult>> {
    let mut file = match OpenOptions::new().read(true).write(true).open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut results = Vec::new();
    let mut good_len = 0u64;
    let mut reader = BufReader::new(&mut file);
    let mut line = String::new();
    let mut line_no = 0;
    loop {
        line.clear();
        let read = reader.read_line(&mut line)?;
        if read == 0 {
            break;
        }
        line_no += 1;
        let complete = line.ends_with('\n');
        match serde_json::from_str::<LatentProbeResult>(line.trim_end()) {
            Ok(result) if complete => {
                results.push(result);
                good_len += read as u64;
            }
            _ if !complete => break,
            Ok(_) => unreachable!(),
            Err(e) => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("corrupt probe result ({e})"),
                })
            }
        }
    }
    drop(reader);
    if file.seek(SeekFrom::End(0))? != good_len {
        file.set_len(good_len)?;
    }
    Ok(results)
}

/// Probes every term, appending one JSON line per finished term to `sink`.
///
/// Terms already present in `sink` are skipped, so an interrupted campaign
/// resumes where it stopped. Returns one result per term in input order.
pub fn run_campaign(
    terms: &[TermRecord],
    config: &ProbeConfig,
    backend: &dyn CompletionBackend,
    sink: &Path,
) -> Result<Vec<LatentProbeResult>> {
    config.validate()?;
    let completed = load_completed(sink)?;
    let done: HashSet<&str> = completed.iter().map(|r| r.term_id.as_str()).collect();
    let pending: Vec<&TermRecord> = terms
        .iter()
        .filter(|t| !done.contains(t.term_id.as_str()))
        .collect();

    let mut out = OpenOptions::new().create(true).append(true).open(sink)?;
    let mut fresh: Vec<LatentProbeResult> = Vec::new();
    let mut failed: HashSet<String> = HashSet::new();
    let mut write_error: Option<std::io::Error> = None;

    let next = AtomicUsize::new(0);
    let workers = config.max_parallel.min(pending.len());
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(String, Result<LatentProbeResult>)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            let pending = &pending;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(term) = pending.get(i) else { break };
                let result = probe_term(term, config, backend);
                if tx.send((term.term_id.clone(), result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // single writer
        for (term_id, result) in rx {
            match result {
                Ok(result) => {
                    let mut line = serde_json::to_vec(&result).expect("probe result serializes");
                    line.push(b'\n');
                    if write_error.is_none() {
                        if let Err(e) = out.write_all(&line).and_then(|_| out.flush()) {
                            write_error = Some(e);
                        }
                    }
                    fresh.push(result);
                }
                Err(_) => {
                    failed.insert(term_id);
                }
            }
        }
    });
    if let Some(e) = write_error {
        return Err(e.into());
    }
    out.sync_data()?;
    if !failed.is_empty() {
        let unresolved = terms
            .iter()
            .filter(|t| failed.contains(&t.term_id))
            .map(|t| t.term_id.clone())
            .collect();
        return Err(Error::Unresolved(unresolved));
    }

    let mut by_id: HashMap<String, LatentProbeResult> = completed
        .into_iter()
        .chain(fresh)
        .map(|r| (r.term_id.clone(), r))
        .collect();
    Ok(terms
        .iter()
        .filter_map(|t| by_id.remove(&t.term_id))
        .collect())
}

/// Reads a `probe_results.jsonl` file written by [`run_campaign`].
pub fn read_results(path: &Path) -> Result<Vec<LatentProbeResult>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: format!("invalid probe result ({e})"),
        })?);
    }
    Ok(out)
}
