//! Class-balanced composite image datasets.
//!
//! A directory-per-class corpus is scanned into a [`DatasetManifest`]; every
//! class contributes composites of `k = rows * cols` of its own images laid
//! out on a grid. [`balancer`] sizes each class to the minority class's
//! combination count, [`combinatorics`] turns that budget into concrete
//! member tuples without enumerating the combination space, [`composer`]
//! renders them, and [`verify`] checks the output against its manifest.
//!
//! Counting and ranking are generic over [`CountInt`]; raster and similarity
//! math over [`Scalar`]. The aliases below fix the types the pipeline and its
//! on-disk formats use.

pub mod balancer;
pub mod combinatorics;
pub mod composer;
pub mod config;
pub mod error;
pub mod generate;
pub mod manifest;
pub mod scalar;
pub mod selection;
pub mod verify;

use std::fs;
use std::path::Path;

pub use balancer::{compute_target, count_table, plan, plan_balanced, plan_unbalanced, ClassPlan, CompositePlan, PlanMode, PlanSummary};
pub use combinatorics::{binomial, multiset_binomial, rank_combination, sample_distinct_ranks, unrank_combination};
pub use composer::{create_coimg, derive_slot_transforms, render_and_encode, CompositeRecord, Layout, OutputFormat, RecordKey};
pub use config::GenerationConfig;
pub use error::{Error, Result};
pub use generate::generate;
pub use manifest::{class_stats, scan_dataset, DatasetManifest, ImageEntry};
pub use scalar::{CountInt, Scalar};
pub use selection::{build_similarity_matrix, select_members, similarity, PolicyKind, SelectionPolicy};
pub use verify::{verify, VerifyReport};

/// Exact count and rank type.
pub type Count = u128;
/// Floating point type for rasterization, similarity and transforms.
pub type Real = f64;

pub type CombinationSpace = combinatorics::CombinationSpace<Count>;
pub type SimilarityMatrix = selection::SimilarityMatrix<Real>;
pub type SlotTransform = composer::SlotTransform<Real>;
pub type ClassStat = manifest::ClassStat<Real>;

pub const TOOL_VERSION: &str = concat!("coimg ", env!("CARGO_PKG_VERSION"));

/// Write `bytes` to `path`, creating parent directories.
pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::WriteFailure { path: path.to_path_buf(), reason: e.to_string() })
}
