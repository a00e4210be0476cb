use std::path::{Path, PathBuf};

use log::{info, warn};
use serde_json::json;

use coimg::balancer::{count_table, load_similarities, CompositePlan};
use coimg::generate::{worker_count, GENERATION_MANIFEST};
use coimg::manifest::{class_stats, scan_dataset, DatasetManifest, DEFAULT_EXTENSIONS};
use coimg::{Error, GenerationConfig, Real};

use crate::{ConfigArgs, GenerateArgs, PlanArgs, ScanArgs, StatsArgs, VerifyArgs};

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_GENERATION: u8 = 3;
pub const EXIT_VERIFICATION: u8 = 4;

pub struct Failure {
    pub exit_code: u8,
    kind: &'static str,
    message: String,
    details: Vec<String>,
}

impl Failure {
    fn new(exit_code: u8, err: Error) -> Self {
        let details = match &err {
            Error::VerificationFailed(v) => v.clone(),
            _ => Vec::new(),
        };
        Failure { exit_code, kind: err.kind(), message: err.to_string(), details }
    }

    /// One JSON object on one line.
    pub fn report(&self) -> String {
        json!({
            "error": self.kind,
            "message": self.message,
            "exit_code": self.exit_code,
            "details": self.details,
        })
        .to_string()
    }
}

type CmdResult = Result<(), Failure>;

fn validation(err: Error) -> Failure {
    Failure::new(EXIT_VALIDATION, err)
}

impl ConfigArgs {
    fn resolve(&self) -> Result<GenerationConfig, Error> {
        let mut c = match &self.config {
            Some(path) => GenerationConfig::load(path)?,
            None => GenerationConfig::default(),
        };
        if let Some(v) = &self.input {
            c.input_root = Some(v.clone());
        }
        if let Some(v) = &self.output {
            c.output_root = Some(v.clone());
        }
        if let Some(v) = self.rows {
            c.layout.rows = v;
        }
        if let Some(v) = self.cols {
            c.layout.cols = v;
        }
        if let Some(v) = self.cell_width {
            c.layout.cell_width = v;
        }
        if let Some(v) = self.cell_height {
            c.layout.cell_height = v;
        }
        if let Some(v) = &self.policy {
            c.policy.kind = v.parse()?;
        }
        if let Some(v) = self.high_fraction {
            c.policy.high_fraction = v;
        }
        if self.repetition {
            c.policy.with_repetition = true;
        }
        if let Some(v) = self.seed {
            c.seed = Some(v);
        }
        if let Some(v) = self.max_rotation {
            c.max_rotation_degrees = v;
        }
        if let Some(v) = &self.format {
            c.image_format = v.parse()?;
        }
        if let Some(v) = self.override_target {
            c.override_target = Some(v);
        }
        if let Some(v) = self.per_class_cap {
            c.per_class_cap = Some(v);
        }
        if self.disjoint {
            c.disjoint = true;
        }
        if let Some(v) = self.generation_limit {
            c.generation_limit = v;
        }
        if self.unbalanced {
            c.unbalanced = true;
        }
        if let Some(v) = &self.similarity_cache {
            c.similarity_cache = Some(v.clone());
        }
        c.validate()?;
        Ok(c)
    }
}

fn scan_root(root: &Path, extensions: &[&str]) -> Result<DatasetManifest, Error> {
    let outcome = scan_dataset(root, extensions)?;
    for u in &outcome.unreadable {
        warn!("unreadable: {} ({})", u.path, u.reason);
    }
    Ok(outcome.manifest)
}

fn load_or_scan(manifest: Option<&Path>, input: Option<&Path>) -> Result<DatasetManifest, Error> {
    match (manifest, input) {
        (Some(path), _) => DatasetManifest::load(path),
        (None, Some(root)) => scan_root(root, DEFAULT_EXTENSIONS),
        (None, None) => Err(Error::InvalidConfig("either --manifest or an input root is required".into())),
    }
}

fn print_stats(manifest: &DatasetManifest) {
    let stats = class_stats::<Real>(manifest);
    let width = stats.iter().map(|s| s.class_name.len()).max().unwrap_or(5).max(5);
    println!("{:<width$} {:>8} {:>9}", "class", "images", "fraction");
    for s in &stats {
        println!("{:<width$} {:>8} {:>9.4}", s.class_name, s.count, s.fraction);
    }
    println!("{:<width$} {:>8} {:>9.4}", "Total", manifest.total_images(), stats.iter().map(|s| s.fraction).sum::<Real>());
}

pub fn scan(args: ScanArgs) -> CmdResult {
    let owned: Vec<String> = args.ext.unwrap_or_else(|| DEFAULT_EXTENSIONS.iter().map(|s| s.to_string()).collect());
    let exts: Vec<&str> = owned.iter().map(String::as_str).collect();
    let outcome = scan_dataset(&args.root, &exts).map_err(validation)?;
    for u in &outcome.unreadable {
        warn!("unreadable: {} ({})", u.path, u.reason);
    }
    outcome.manifest.save(&args.out).map_err(validation)?;
    info!(
        "phase=scan classes={} images={} unreadable={} manifest={}",
        outcome.manifest.classes.len(),
        outcome.manifest.total_images(),
        outcome.unreadable.len(),
        args.out.display()
    );
    print_stats(&outcome.manifest);
    if !outcome.unreadable.is_empty() {
        println!("warnings: {} unreadable file(s) excluded", outcome.unreadable.len());
    }
    Ok(())
}

pub fn stats(args: StatsArgs) -> CmdResult {
    let config = args.config.resolve().map_err(validation)?;
    let manifest = DatasetManifest::load(&args.manifest).map_err(validation)?;
    print_stats(&manifest);
    println!();
    let table = count_table(&manifest, &config.layout, config.with_repetition()).map_err(validation)?;
    println!("{table}");
    Ok(())
}

pub fn plan(args: PlanArgs) -> CmdResult {
    let config = args.config.resolve().map_err(validation)?;
    let manifest = load_or_scan(args.manifest.as_deref(), config.input_root.as_deref()).map_err(validation)?;
    let sims = load_similarities(&manifest, &config).map_err(validation)?;
    let plan = coimg::plan(&manifest, &config, &sims).map_err(validation)?;
    if let Some(out) = &args.out {
        plan.save(out).map_err(validation)?;
    }
    info!(
        "phase=plan classes={} target={} records={} out={}",
        plan.classes.len(),
        plan.header.target.map_or_else(|| "-".into(), |t| t.to_string()),
        plan.header.total_records,
        args.out.as_ref().map_or_else(|| "-".into(), |p| p.display().to_string())
    );
    if args.explain || args.out.is_none() {
        println!("{}", plan.explain());
    }
    Ok(())
}

pub fn generate(args: GenerateArgs) -> CmdResult {
    let plan = CompositePlan::load(&args.plan).map_err(validation)?;
    let config = &plan.header.config;
    let manifest = load_or_scan(args.manifest.as_deref(), config.input_root.as_deref()).map_err(validation)?;
    let out: PathBuf = args
        .output
        .or_else(|| config.output_root.clone())
        .ok_or_else(|| validation(Error::InvalidConfig("no output root: pass --output or set output_root".into())))?;
    let workers = worker_count(args.workers);

    let summary = coimg::generate(&plan, &manifest, &out, workers).map_err(|e| match e {
        Error::WriteFailure { .. } | Error::DecodeFailure { .. } | Error::Io { .. } => Failure::new(EXIT_GENERATION, e),
        other => validation(other),
    })?;
    info!(
        "phase=generate written={} failed={} workers={} manifest={}",
        summary.written,
        summary.failures.len(),
        workers,
        summary.manifest_path.display()
    );
    println!("{} composites written to {}", summary.written, out.display());
    if !summary.failures.is_empty() {
        for f in &summary.failures {
            println!("failed: {} ({})", f.output_path, f.error);
        }
        return Err(Failure {
            exit_code: EXIT_GENERATION,
            kind: "GenerationFailed",
            message: format!("{} record(s) failed", summary.failures.len()),
            details: summary.failures.iter().map(|f| format!("{}: {}", f.output_path, f.error)).collect(),
        });
    }
    Ok(())
}

pub fn verify(args: VerifyArgs) -> CmdResult {
    let gm = args.generation_manifest.unwrap_or_else(|| args.output_root.join(GENERATION_MANIFEST));
    let report = coimg::verify(&args.output_root, &gm, args.spot_checks).map_err(validation)?;
    println!("{report}");
    info!("phase=verify records={} passed={}", report.records, report.passed());
    report.into_result().map(|_| ()).map_err(|e| Failure::new(EXIT_VERIFICATION, e))
}
