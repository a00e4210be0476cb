//! Checks a generated dataset against its generation manifest.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::combinatorics::{sample_distinct_ranks, splitmix64};
use crate::composer::{composite_digest, CompositeRecord};
use crate::error::{Error, Result};
use crate::generate::{read_generation_manifest, GenerationMeta};

pub const DEFAULT_SPOT_CHECKS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub violations: Vec<String>,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub records: usize,
    pub spot_checked: usize,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn violations(&self) -> Vec<String> {
        self.checks.iter().flat_map(|c| c.violations.iter().map(move |v| format!("{}: {v}", c.name))).collect()
    }

    /// `Err(VerificationFailed)` listing every violation unless all checks passed.
    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            Ok(self)
        } else {
            Err(Error::VerificationFailed(self.violations()))
        }
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let status = if c.passed() { "PASS" } else { "FAIL" };
            writeln!(f, "{status} {}", c.name)?;
            for v in &c.violations {
                writeln!(f, "  - {v}")?;
            }
        }
        write!(f, "{} records, {} spot-checked by re-render", self.records, self.spot_checked)
    }
}

fn check_counts(records: &[CompositeRecord], expected: &BTreeMap<String, u64>) -> Check {
    let mut seen: BTreeMap<&str, u64> = BTreeMap::new();
    for r in records {
        *seen.entry(r.class_name.as_str()).or_default() += 1;
    }
    let mut violations = Vec::new();
    for (class, &want) in expected {
        let got = seen.get(class.as_str()).copied().unwrap_or(0);
        if got != want {
            violations.push(format!("class {class}: {got} records, expected {want}"));
        }
    }
    for class in seen.keys().filter(|c| !expected.contains_key(**c)) {
        violations.push(format!("class {class} not in the plan"));
    }
    Check { name: "class-counts", violations }
}

fn check_distinct(records: &[CompositeRecord]) -> Check {
    let mut violations = Vec::new();
    let mut keyed = HashSet::new();
    let mut first_epoch = HashSet::new();
    let mut paths = HashSet::new();
    for r in records {
        if !keyed.insert((&r.class_name, &r.member_indices, r.augmentation_epoch)) {
            violations.push(format!("{}: duplicate members {:?} at epoch {}", r.output_path, r.member_indices, r.augmentation_epoch));
        }
        if r.augmentation_epoch == 0 && !first_epoch.insert((&r.class_name, &r.member_indices)) {
            violations.push(format!("{}: members {:?} repeated at epoch 0", r.output_path, r.member_indices));
        }
        if !paths.insert(&r.output_path) {
            violations.push(format!("{}: output path used twice", r.output_path));
        }
    }
    Check { name: "distinct-records", violations }
}

fn check_files(records: &[CompositeRecord], out_root: &Path, dims: (u32, u32)) -> Check {
    let violations: Vec<String> = records
        .par_iter()
        .filter_map(|r| {
            let path = out_root.join(&r.output_path);
            if !path.is_file() {
                return Some(format!("missing file {} (class {}, rank {}, epoch {})", r.output_path, r.class_name, r.rank, r.augmentation_epoch));
            }
            match image::image_dimensions(&path) {
                Ok(d) if d == dims => None,
                Ok(d) => Some(format!("{}: dimensions {}x{}, expected {}x{}", r.output_path, d.0, d.1, dims.0, dims.1)),
                Err(e) => Some(format!("{}: unreadable ({e})", r.output_path)),
            }
        })
        .collect();
    Check { name: "files-present", violations }
}

fn check_digests(records: &[CompositeRecord], picks: &[usize], meta: &GenerationMeta, out_root: &Path) -> Check {
    let layout = meta.header.layout;
    let violations: Vec<String> = picks
        .par_iter()
        .flat_map_iter(|&i| {
            let r = &records[i];
            let mut out = Vec::new();
            let Some(recorded) = r.pixel_digest.as_deref() else {
                out.push(format!("{}: no digest recorded", r.output_path));
                return out;
            };
            match crate::manifest::decode(&out_root.join(&r.output_path)) {
                Ok(img) if composite_digest(&img.to_rgb8()) != recorded => {
                    out.push(format!("{}: file pixels do not match the recorded digest", r.output_path))
                }
                Ok(_) => {}
                Err(e) => out.push(format!("{}: {e}", r.output_path)),
            }
            match r.render(&meta.manifest, &layout) {
                Ok(img) if composite_digest(&img) != recorded => {
                    out.push(format!("{}: re-render does not match the recorded digest", r.output_path))
                }
                Ok(_) => {}
                Err(e) => out.push(format!("{}: re-render failed: {e}", r.output_path)),
            }
            out
        })
        .collect();
    Check { name: "digest-spot-check", violations }
}

/// Verify the dataset under `out_root` described by `generation_manifest`.
///
/// Every record is checked for count, distinctness, presence and dimensions;
/// `spot_checks` records, chosen deterministically from the plan seed, are
/// additionally decoded and re-rendered and compared against their digests.
pub fn verify(out_root: &Path, generation_manifest: &Path, spot_checks: usize) -> Result<VerifyReport> {
    let meta = GenerationMeta::load(&GenerationMeta::path_for(generation_manifest))?;
    let records = read_generation_manifest(generation_manifest)?;
    let dims = meta.header.layout.output_dims();

    let n = records.len();
    let d = spot_checks.min(n);
    let picks: Vec<usize> = sample_distinct_ranks(n as u128, d as u128, splitmix64(meta.header.seed ^ 0x7665_7269_6679))?
        .into_iter()
        .map(|i| i as usize)
        .collect();

    let checks = vec![
        check_counts(&records, &meta.expected_counts),
        check_distinct(&records),
        check_files(&records, out_root, dims),
        check_digests(&records, &picks, &meta, out_root),
    ];
    let report = VerifyReport { records: n, spot_checked: d, checks };
    info!("verify: {} records, {}", n, if report.passed() { "pass" } else { "FAIL" });
    Ok(report)
}
