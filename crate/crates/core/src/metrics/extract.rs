use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exec::Execution;
use crate::grammar::extract_labels_rule;
use crate::labels::{normalize_label_matrix, RawFinding, ReportLabels};
use crate::llm::{ChatClient, LlmError};
use crate::ontology::REGIONS;

pub const EXTRACTION_PROMPT_VERSION: &str = "label-extract-v1";
const EXTRACTION_PROMPT: &str = include_str!("../../assets/label_extraction_prompt.txt");

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("could not parse extractor output after {attempts} attempts: {message}; raw response: {raw:?}")]
    Unparseable { attempts: usize, message: String, raw: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("extraction cache: {0}")]
    Cache(#[from] std::io::Error),
}

pub trait LabelExtractor: Sync {
    fn extract(&self, report: &str) -> Result<ReportLabels, ExtractError>;
}

/// Parses the synthetic grammar; see [`crate::grammar`].
#[derive(Clone, Copy, Debug, Default)]
pub struct RuleExtractor;

impl LabelExtractor for RuleExtractor {
    fn extract(&self, report: &str) -> Result<ReportLabels, ExtractError> {
        Ok(extract_labels_rule(report))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    Rule,
    Llm,
}

impl std::str::FromStr for Backend {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rule" => Ok(Backend::Rule),
            "llm" => Ok(Backend::Llm),
            other => Err(format!("unknown backend {other:?} (expected rule or llm)")),
        }
    }
}

pub fn extract_labels(report: &str, backend: &dyn LabelExtractor) -> Result<ReportLabels, ExtractError> {
    backend.extract(report)
}

/// Extracts every report. Reports are processed in groups of
/// `max_concurrency`, which bounds the number of requests in flight.
pub fn extract_corpus(
    reports: &[String],
    backend: &dyn LabelExtractor,
    exec: Execution,
    max_concurrency: usize,
) -> Result<Vec<ReportLabels>, ExtractError> {
    let mut out = Vec::with_capacity(reports.len());
    for group in reports.chunks(max_concurrency.max(1)) {
        out.extend(exec.try_map(group, |r| backend.extract(r))?);
    }
    Ok(out)
}

/// The prompt sent for one report.
pub fn extraction_prompt(report: &str) -> String {
    let regions: String = REGIONS
        .iter()
        .map(|r| format!("{}. {}\n", r.id, r.label))
        .collect();
    EXTRACTION_PROMPT
        .replace("{regions}", regions.trim_end())
        .replace("{report}", report)
}

/// Parses `region|uptake|density` lines into findings. A lone `NONE` means
/// no findings.
pub fn parse_extraction(raw: &str) -> Result<ReportLabels, String> {
    let body = raw.trim().trim_start_matches("```").trim_end_matches("```").trim();
    let mut findings = Vec::new();
    for line in body.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if line.eq_ignore_ascii_case("none") {
            continue;
        }
        let parts: Vec<&str> = line.split('|').map(str::trim).collect();
        let [r, u, d] = parts[..] else {
            return Err(format!("line {line:?} does not have three fields"));
        };
        let num = |s: &str| s.parse::<u8>().map_err(|_| format!("non-numeric field {s:?} in {line:?}"));
        findings.push(RawFinding::new(num(r)?, num(u)?, num(d)?));
    }
    normalize_label_matrix(&findings).map_err(|e| e.to_string())
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    response: String,
}

/// Append-only JSON-lines store of raw extractor responses.
pub struct ExtractionCache {
    path: PathBuf,
    entries: Mutex<(HashMap<String, String>, Option<File>)>,
}

impl ExtractionCache {
    pub fn open(path: &Path) -> Result<Self, std::io::Error> {
        let mut map = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                if let Ok(c) = serde_json::from_str::<CacheLine>(&line) {
                    map.insert(c.key, c.response);
                }
            }
        }
        Ok(ExtractionCache { path: path.to_path_buf(), entries: Mutex::new((map, None)) })
    }

    pub fn key(report: &str, prompt_version: &str, model_id: &str) -> String {
        let h = hex::encode(Sha256::digest(report.as_bytes()));
        format!("{h}:{prompt_version}:{model_id}")
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries.lock().unwrap().0.get(key).cloned()
    }

    pub fn put(&self, key: &str, response: &str) -> Result<(), std::io::Error> {
        let mut guard = self.entries.lock().unwrap();
        if guard.0.contains_key(key) {
            return Ok(());
        }
        if guard.1.is_none() {
            if let Some(dir) = self.path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            guard.1 = Some(OpenOptions::new().create(true).append(true).open(&self.path)?);
        }
        let line = serde_json::to_string(&CacheLine { key: key.into(), response: response.into() })
            .expect("strings serialize");
        writeln!(guard.1.as_mut().unwrap(), "{line}")?;
        guard.0.insert(key.to_string(), response.to_string());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Chat-model extractor with bounded retries on malformed output.
pub struct LlmExtractor<C> {
    pub client: C,
    pub max_retries: usize,
    pub cache: Option<ExtractionCache>,
}

impl<C: ChatClient> LabelExtractor for LlmExtractor<C> {
    fn extract(&self, report: &str) -> Result<ReportLabels, ExtractError> {
        if report.trim().is_empty() {
            return Ok(ReportLabels::all_normal());
        }
        let key = ExtractionCache::key(report, EXTRACTION_PROMPT_VERSION, self.client.model_id());
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            if let Ok(l) = parse_extraction(&hit) {
                return Ok(l);
            }
        }
        let prompt = extraction_prompt(report);
        let attempts = self.max_retries + 1;
        let mut last = (String::new(), String::new());
        for _ in 0..attempts {
            let raw = self.client.complete(&prompt)?;
            match parse_extraction(&raw) {
                Ok(l) => {
                    if let Some(c) = &self.cache {
                        c.put(&key, &raw)?;
                    }
                    return Ok(l);
                }
                Err(m) => {
                    log::warn!("malformed extractor reply: {m}");
                    last = (m, raw);
                }
            }
        }
        Err(ExtractError::Unparseable { attempts, message: last.0, raw: last.1 })
    }
}
