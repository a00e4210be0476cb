//! Parallel rendering of a plan and the generation manifest it leaves behind.
//!
//! Records are rendered on a bounded pool in any order; results are gathered
//! back into plan order before anything is written, so the generation
//! manifest does not depend on the worker count.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balancer::{CompositePlan, PlanHeader};
use crate::composer::{render_and_encode, CompositeRecord};
use crate::error::{Error, Result};
use crate::manifest::DatasetManifest;

pub const GENERATION_MANIFEST: &str = "generation.jsonl";
pub const GENERATION_META: &str = "generation.meta.json";

/// Per-record logging is suppressed at or above this many records.
const QUIET_RECORDS: usize = 10_000;

/// Sidecar of the generation manifest: what verification needs besides the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationMeta {
    pub header: PlanHeader,
    pub expected_counts: BTreeMap<String, u64>,
    pub manifest: DatasetManifest,
}

impl GenerationMeta {
    pub fn path_for(generation_manifest: &Path) -> PathBuf {
        generation_manifest.with_file_name(GENERATION_META)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordFailure {
    pub output_path: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct GenerationSummary {
    pub written: usize,
    pub failures: Vec<RecordFailure>,
    pub manifest_path: PathBuf,
}

/// Resolve the worker count: explicit value, else `COIMG_WORKERS`, else all cores.
pub fn worker_count(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var("COIMG_WORKERS").ok().and_then(|v| v.trim().parse().ok()))
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Render every record of `plan` under `out_root` with `workers` threads.
pub fn generate(plan: &CompositePlan, manifest: &DatasetManifest, out_root: &Path, workers: usize) -> Result<GenerationSummary> {
    if plan.header.manifest_digest != manifest.content_digest() {
        return Err(Error::InvalidConfig("plan was built from a different dataset manifest".into()));
    }
    let records: Vec<&CompositeRecord> = plan.records().collect();
    let limit = plan.header.config.generation_limit;
    if records.len() as u64 > limit {
        return Err(Error::PlanTooLarge { records: records.len().to_string(), limit });
    }
    fs::create_dir_all(out_root).map_err(|e| Error::io(out_root, e))?;

    let layout = plan.header.layout;
    let format = plan.header.config.image_format;
    let chatty = records.len() < QUIET_RECORDS;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    info!("generate: {} records, {} workers -> {}", records.len(), workers.max(1), out_root.display());

    let results: Vec<Result<String>> = pool.install(|| {
        records
            .par_iter()
            .map(|r| {
                let out = render_and_encode(r, manifest, &layout, format, out_root);
                if chatty {
                    debug!("rendered {}", r.output_path);
                }
                out
            })
            .collect()
    });

    let mut lines = String::new();
    let mut failures = Vec::new();
    let mut written = 0usize;
    for (record, result) in records.iter().zip(results) {
        match result {
            Ok(digest) => {
                let line = CompositeRecord { pixel_digest: Some(digest), ..(*record).clone() };
                lines.push_str(&serde_json::to_string(&line).map_err(|e| Error::json(out_root, e))?);
                lines.push('\n');
                written += 1;
            }
            Err(e) => {
                warn!("record {} failed: {e}", record.output_path);
                failures.push(RecordFailure { output_path: record.output_path.clone(), error: e.to_string() });
            }
        }
    }

    let manifest_path = out_root.join(GENERATION_MANIFEST);
    crate::write_file(&manifest_path, lines.as_bytes())?;
    let meta = GenerationMeta { header: plan.header.clone(), expected_counts: plan.expected_counts(), manifest: manifest.clone() };
    let meta_path = out_root.join(GENERATION_META);
    let mut meta_text = serde_json::to_string_pretty(&meta).map_err(|e| Error::json(&meta_path, e))?;
    meta_text.push('\n');
    crate::write_file(&meta_path, meta_text.as_bytes())?;
    info!("generate: {written} written, {} failed", failures.len());

    Ok(GenerationSummary { written, failures, manifest_path })
}

/// Read a generation manifest, one record per line.
pub fn read_generation_manifest(path: &Path) -> Result<Vec<CompositeRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::json(path, e))?);
    }
    Ok(out)
}
