//! Per-class composite budgets.
//!
//! The balanced target `T` is the smallest combination count over all
//! classes. Classes with more combinations than `T` draw `T` distinct ranks
//! uniformly; the class attaining the minimum is enumerated exhaustively. If
//! an override pushes `T` above a class's count, every unique combination is
//! used once and the shortfall is filled by cycling over them again with an
//! increasing augmentation epoch.
//!
//! Counting is exact and always allowed. Materializing records is capped by
//! the configured generation limit.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{class_seed, sample_distinct_ranks, splitmix64, CombinationSpace};
use crate::composer::{derive_slot_transforms, output_path, CompositeRecord, Layout, RecordKey};
use crate::config::GenerationConfig;
use crate::error::{Error, Result};
use crate::manifest::{ClassImages, DatasetManifest};
use crate::selection::{cached_similarity_matrix, build_similarity_matrix, SelectionPolicy, Selector, SimilarityMatrix};
use crate::{Count, Real};

/// Similarity matrices by class name, for the similarity-driven policies.
pub type Similarities = BTreeMap<String, SimilarityMatrix<Real>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    /// Every unique composite, once.
    Exhaustive,
    /// A uniform sample of the unique composites.
    Sampled,
    /// Every unique composite, then repeats at increasing epochs.
    Completion,
    /// The lowest ranks up to a cap (unbalanced plans).
    Prefix,
}

impl fmt::Display for PlanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlanMode::Exhaustive => "exhaustive",
            PlanMode::Sampled => "sampled",
            PlanMode::Completion => "completion",
            PlanMode::Prefix => "prefix",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPlan {
    #[serde(rename = "class")]
    pub class_name: String,
    pub n: usize,
    /// Unique composites available to the class (disjoint groups when `disjoint`).
    pub space_size: Count,
    pub mode: PlanMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sampled_ranks: Vec<Count>,
    #[serde(default)]
    pub epochs_needed: u32,
    pub records: Vec<CompositeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanHeader {
    /// Common per-class budget; `None` for unbalanced plans.
    pub target: Option<Count>,
    pub k: usize,
    pub layout: Layout,
    pub policy: SelectionPolicy,
    pub seed: u64,
    pub tool_version: String,
    pub manifest_digest: String,
    pub total_records: u64,
    /// Fully resolved configuration the plan was built from.
    pub config: GenerationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositePlan {
    pub header: PlanHeader,
    pub classes: Vec<ClassPlan>,
}

impl CompositePlan {
    pub fn records(&self) -> impl Iterator<Item = &CompositeRecord> {
        self.classes.iter().flat_map(|c| c.records.iter())
    }

    pub fn expected_counts(&self) -> BTreeMap<String, u64> {
        self.classes.iter().map(|c| (c.class_name.clone(), c.records.len() as u64)).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        text.push('\n');
        crate::write_file(path, text.as_bytes())
    }

    /// Per-class table: images, unique composites, mode, planned records.
    pub fn explain(&self) -> PlanSummary {
        let rows = self
            .classes
            .iter()
            .map(|c| SummaryRow {
                class_name: c.class_name.clone(),
                n: c.n,
                space_size: c.space_size,
                mode: Some(c.mode),
                planned: c.records.len() as u64,
            })
            .collect();
        PlanSummary { rows, target: self.header.target, k: self.header.k, layout: self.header.layout }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    #[serde(rename = "class")]
    pub class_name: String,
    pub n: usize,
    pub space_size: Count,
    pub mode: Option<PlanMode>,
    pub planned: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanSummary {
    pub rows: Vec<SummaryRow>,
    pub target: Option<Count>,
    pub k: usize,
    pub layout: Layout,
}

impl PlanSummary {
    pub fn total_images(&self) -> usize {
        self.rows.iter().map(|r| r.n).sum()
    }

    /// Sum of per-class unique composite counts; `None` on overflow.
    pub fn total_space(&self) -> Option<Count> {
        self.rows.iter().try_fold(0u128, |acc, r| acc.checked_add(r.space_size))
    }

    pub fn total_planned(&self) -> u64 {
        self.rows.iter().map(|r| r.planned).sum()
    }
}

impl fmt::Display for PlanSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|r| r.class_name.len()).max().unwrap_or(5).max(5);
        writeln!(f, "{:<width$} {:>8} {:>40} {:>11} {:>10}", "class", "images", "composites", "mode", "planned")?;
        for r in &self.rows {
            let mode = r.mode.map(|m| m.to_string()).unwrap_or_else(|| "-".into());
            writeln!(f, "{:<width$} {:>8} {:>40} {:>11} {:>10}", r.class_name, r.n, r.space_size, mode, r.planned)?;
        }
        let total_space = self.total_space().map(|t| t.to_string()).unwrap_or_else(|| "overflow".into());
        writeln!(f, "{:<width$} {:>8} {:>40} {:>11} {:>10}", "Total", self.total_images(), total_space, "", self.total_planned())?;
        let (w, h) = self.layout.output_dims();
        match self.target {
            Some(t) => write!(
                f,
                "T = {t} (k = {}, layout {}x{}, composite {w}x{h}); balanced total = {}",
                self.k,
                self.layout.rows,
                self.layout.cols,
                self.total_planned()
            ),
            None => write!(f, "unbalanced (k = {}, layout {}x{}, composite {w}x{h})", self.k, self.layout.rows, self.layout.cols),
        }
    }
}

fn space_for(class: &ClassImages, k: usize, with_repetition: bool) -> Result<CombinationSpace<Count>> {
    CombinationSpace::new(class.len(), k, with_repetition)
}

/// Unique composites available to `class` under `config`.
fn available(class: &ClassImages, config: &GenerationConfig) -> Result<Count> {
    if config.disjoint {
        Ok((class.len() / config.k()) as Count)
    } else {
        Ok(space_for(class, config.k(), config.with_repetition())?.size())
    }
}

/// Exact per-class combination counts; never materializes anything.
pub fn count_table(manifest: &DatasetManifest, layout: &Layout, with_repetition: bool) -> Result<PlanSummary> {
    let rows = manifest
        .classes
        .iter()
        .map(|c| {
            Ok(SummaryRow {
                class_name: c.name.clone(),
                n: c.len(),
                space_size: space_for(c, layout.k(), with_repetition)?.size(),
                mode: None,
                planned: 0,
            })
        })
        .collect::<Result<_>>()?;
    Ok(PlanSummary { rows, target: None, k: layout.k(), layout: *layout })
}

/// `T = min_c M_c`, where `M_c` counts combinations (or multisets) of `k` images of class `c`.
pub fn compute_target(manifest: &DatasetManifest, k: usize, with_repetition: bool) -> Result<Count> {
    let mut target: Option<Count> = None;
    for class in &manifest.classes {
        let m = space_for(class, k, with_repetition)?.size();
        if m == 0 {
            return Err(Error::DegenerateClass { class: class.name.clone(), n: class.len(), k });
        }
        target = Some(target.map_or(m, |t| t.min(m)));
    }
    target.ok_or_else(|| Error::EmptyDataset { root: manifest.root.clone().into() })
}

/// Build similarity matrices when the configured policy needs them.
pub fn load_similarities(manifest: &DatasetManifest, config: &GenerationConfig) -> Result<Similarities> {
    let mut out = Similarities::new();
    if !config.policy.kind.needs_similarity() {
        return Ok(out);
    }
    for class in &manifest.classes {
        let sim = match &config.similarity_cache {
            Some(dir) => cached_similarity_matrix(manifest, class, dir)?,
            None => build_similarity_matrix(manifest, class)?,
        };
        out.insert(class.name.clone(), sim);
    }
    Ok(out)
}

/// Which composites a class contributes, before records are built.
enum Picks {
    /// `(rank, epoch)` pairs resolved through the selection policy.
    Ranked(Vec<(Count, u32)>),
    /// Explicit member groups (disjoint grouping) with their epoch.
    Groups(Vec<(Vec<usize>, u32)>),
}

struct ClassBudget {
    mode: PlanMode,
    sampled: Vec<Count>,
    epochs_needed: u32,
    picks: Picks,
}

/// Cycle `unique` picks to length `target`: all at epoch 0, then repeats at epochs 1, 2, ...
fn completion<T: Clone>(unique: Vec<T>, target: Count) -> (Vec<(T, u32)>, u32) {
    let m = unique.len() as Count;
    let extra = target - m;
    let epochs = extra.div_ceil(m) as u32;
    let mut out: Vec<(T, u32)> = unique.iter().cloned().map(|u| (u, 0)).collect();
    for j in 0..extra {
        out.push((unique[(j % m) as usize].clone(), 1 + (j / m) as u32));
    }
    (out, epochs)
}

/// Disjoint groups of `k`: a seeded shuffle of the class chunked into sorted groups.
fn disjoint_groups(class: &ClassImages, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..class.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(class_seed(seed, &class.name) ^ 0x6469_736a_6f69_6e74));
    order.shuffle(&mut rng);
    order
        .chunks_exact(k)
        .map(|c| {
            let mut g = c.to_vec();
            g.sort_unstable();
            g
        })
        .collect()
}

fn balanced_budget(class: &ClassImages, config: &GenerationConfig, seed: u64, target: Count, m: Count) -> Result<ClassBudget> {
    if config.disjoint {
        let groups = disjoint_groups(class, config.k(), seed);
        let (mode, picks, epochs_needed) = if m > target {
            (PlanMode::Sampled, groups.into_iter().take(target as usize).map(|g| (g, 0)).collect(), 0)
        } else if m == target {
            (PlanMode::Exhaustive, groups.into_iter().map(|g| (g, 0)).collect(), 0)
        } else {
            let (picks, epochs) = completion(groups, target);
            (PlanMode::Completion, picks, epochs)
        };
        return Ok(ClassBudget { mode, sampled: Vec::new(), epochs_needed, picks: Picks::Groups(picks) });
    }
    Ok(if m > target {
        let sampled = sample_distinct_ranks(m, target, class_seed(seed, &class.name))?;
        let picks = sampled.iter().map(|&r| (r, 0)).collect();
        ClassBudget { mode: PlanMode::Sampled, sampled, epochs_needed: 0, picks: Picks::Ranked(picks) }
    } else if m == target {
        ClassBudget { mode: PlanMode::Exhaustive, sampled: Vec::new(), epochs_needed: 0, picks: Picks::Ranked((0..m).map(|r| (r, 0)).collect()) }
    } else {
        let (picks, epochs_needed) = completion((0..m).collect(), target);
        ClassBudget { mode: PlanMode::Completion, sampled: Vec::new(), epochs_needed, picks: Picks::Ranked(picks) }
    })
}

fn build_records(
    class: &ClassImages,
    config: &GenerationConfig,
    seed: u64,
    picks: Picks,
    sims: &Similarities,
) -> Result<Vec<CompositeRecord>> {
    let k = config.k();
    let max_rot: Real = config.max_rotation_degrees;
    let record = |rank: Count, epoch: u32, members: Vec<usize>| CompositeRecord {
        class_name: class.name.clone(),
        rank,
        member_indices: members,
        slot_transforms: derive_slot_transforms(seed, RecordKey { class_name: &class.name, rank, epoch }, k, max_rot),
        augmentation_epoch: epoch,
        output_path: output_path(&class.name, rank, epoch, config.image_format),
        pixel_digest: None,
    };
    match picks {
        Picks::Ranked(picks) => {
            let space = space_for(class, k, config.with_repetition())?;
            let selector = Selector::new(&config.policy, space, sims.get(&class.name))?;
            picks.into_iter().map(|(rank, epoch)| Ok(record(rank, epoch, selector.select(rank)?))).collect()
        }
        Picks::Groups(groups) => {
            let space = space_for(class, k, false)?;
            groups
                .into_iter()
                .map(|(members, epoch)| {
                    let rank = space.rank(&members)?;
                    Ok(record(rank, epoch, members))
                })
                .collect()
        }
    }
}

fn check_limit(total: Count, limit: u64) -> Result<()> {
    if total > limit as Count {
        return Err(Error::PlanTooLarge { records: total.to_string(), limit });
    }
    Ok(())
}

fn header(manifest: &DatasetManifest, config: &GenerationConfig, seed: u64, target: Option<Count>, total: u64) -> PlanHeader {
    PlanHeader {
        target,
        k: config.k(),
        layout: config.layout,
        policy: config.policy,
        seed,
        tool_version: crate::TOOL_VERSION.to_string(),
        manifest_digest: manifest.content_digest(),
        total_records: total,
        config: config.clone(),
    }
}

/// Plan exactly `T` composites for every class.
pub fn plan_balanced(manifest: &DatasetManifest, config: &GenerationConfig, sims: &Similarities) -> Result<CompositePlan> {
    config.validate()?;
    let seed = config.require_seed()?;
    let k = config.k();

    let mut sizes = Vec::with_capacity(manifest.classes.len());
    for class in &manifest.classes {
        let m = available(class, config)?;
        if m == 0 {
            return Err(Error::DegenerateClass { class: class.name.clone(), n: class.len(), k });
        }
        sizes.push(m);
    }
    let natural = sizes.iter().copied().min().ok_or_else(|| Error::EmptyDataset { root: manifest.root.clone().into() })?;
    let target = config.override_target.unwrap_or(natural);
    let total = target.checked_mul(sizes.len() as Count).ok_or_else(|| match config.override_target {
        Some(t) => Error::OverrideTooLarge(t.to_string()),
        None => Error::Overflow { what: "balanced record total".into(), bits: 128 },
    })?;
    check_limit(total, config.generation_limit)?;

    let mut classes = Vec::with_capacity(manifest.classes.len());
    for (class, &m) in manifest.classes.iter().zip(&sizes) {
        let budget = balanced_budget(class, config, seed, target, m)?;
        let records = build_records(class, config, seed, budget.picks, sims)?;
        debug_assert_eq!(records.len() as Count, target);
        classes.push(ClassPlan {
            class_name: class.name.clone(),
            n: class.len(),
            space_size: m,
            mode: budget.mode,
            sampled_ranks: budget.sampled,
            epochs_needed: budget.epochs_needed,
            records,
        });
    }
    info!("plan: {} classes, T = {target}, {total} records", classes.len());
    Ok(CompositePlan { header: header(manifest, config, seed, Some(target), total as u64), classes })
}

/// Plan `min(cap, M_c)` composites per class, lowest ranks first.
pub fn plan_unbalanced(manifest: &DatasetManifest, config: &GenerationConfig, sims: &Similarities) -> Result<CompositePlan> {
    config.validate()?;
    let seed = config.require_seed()?;

    let mut counts = Vec::with_capacity(manifest.classes.len());
    let mut total: Count = 0;
    for class in &manifest.classes {
        let m = available(class, config)?;
        let take = config.per_class_cap.map_or(m, |cap| cap.min(m));
        total = total
            .checked_add(take)
            .ok_or_else(|| Error::Overflow { what: "unbalanced record total".into(), bits: 128 })?;
        counts.push((m, take));
    }
    check_limit(total, config.generation_limit)?;

    let mut classes = Vec::with_capacity(manifest.classes.len());
    for (class, &(m, take)) in manifest.classes.iter().zip(&counts) {
        let picks = if config.disjoint {
            Picks::Groups(disjoint_groups(class, config.k(), seed).into_iter().take(take as usize).map(|g| (g, 0)).collect())
        } else {
            Picks::Ranked((0..take).map(|r| (r, 0)).collect())
        };
        let records = build_records(class, config, seed, picks, sims)?;
        classes.push(ClassPlan {
            class_name: class.name.clone(),
            n: class.len(),
            space_size: m,
            mode: if take == m { PlanMode::Exhaustive } else { PlanMode::Prefix },
            sampled_ranks: Vec::new(),
            epochs_needed: 0,
            records,
        });
    }
    info!("plan: {} classes, unbalanced, {total} records", classes.len());
    Ok(CompositePlan { header: header(manifest, config, seed, None, total as u64), classes })
}

/// Balanced or unbalanced according to `config.unbalanced`.
pub fn plan(manifest: &DatasetManifest, config: &GenerationConfig, sims: &Similarities) -> Result<CompositePlan> {
    if config.unbalanced {
        plan_unbalanced(manifest, config, sims)
    } else {
        plan_balanced(manifest, config, sims)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::ImageEntry;
    use std::collections::HashSet;

    fn sized_manifest(sizes: &[(&str, usize)]) -> DatasetManifest {
        DatasetManifest {
            root: "/nowhere".into(),
            classes: sizes
                .iter()
                .map(|&(name, n)| ClassImages {
                    name: name.into(),
                    entries: (0..n)
                        .map(|i| ImageEntry {
                            class_name: name.into(),
                            index: i,
                            relative_path: format!("{name}/{i:05}.png"),
                            width: 8,
                            height: 8,
                            content_digest: format!("{i}"),
                        })
                        .collect(),
                })
                .collect(),
            created_at: 0,
            tool_version: "test".into(),
        }
    }

    fn config(rows: u32, cols: u32) -> GenerationConfig {
        GenerationConfig { layout: Layout::new(rows, cols, 8, 8).unwrap(), seed: Some(11), ..Default::default() }
    }

    const OCTDL: [(&str, usize); 7] =
        [("AMD", 1231), ("DME", 147), ("ERM", 155), ("NO", 332), ("RAO", 22), ("RVO", 101), ("VID", 76)];

    #[test]
    fn target_examples() {
        assert_eq!(compute_target(&sized_manifest(&OCTDL), 3, false).unwrap(), 1540);
        assert_eq!(compute_target(&sized_manifest(&[("a", 3), ("b", 3)]), 3, false).unwrap(), 1);
        assert_eq!(compute_target(&sized_manifest(&[("a", 5), ("b", 4)]), 2, false).unwrap(), 6);
        assert!(matches!(
            compute_target(&sized_manifest(&[("a", 5), ("b", 2)]), 3, false),
            Err(Error::DegenerateClass { n: 2, k: 3, .. })
        ));
        // With repetition a small class still forms multisets.
        assert_eq!(compute_target(&sized_manifest(&[("a", 5), ("b", 2)]), 3, true).unwrap(), 4);
    }

    #[test]
    fn octdl_balanced_plan() {
        let plan = plan_balanced(&sized_manifest(&OCTDL), &config(3, 1), &Similarities::new()).unwrap();
        assert_eq!(plan.header.target, Some(1540));
        assert_eq!(plan.header.total_records, 10_780);
        for c in &plan.classes {
            assert_eq!(c.records.len(), 1540);
            let expect = if c.class_name == "RAO" { PlanMode::Exhaustive } else { PlanMode::Sampled };
            assert_eq!(c.mode, expect, "{}", c.class_name);
            let sets: HashSet<_> = c.records.iter().map(|r| r.member_indices.clone()).collect();
            assert_eq!(sets.len(), 1540);
        }
        let summary = plan.explain();
        assert_eq!(summary.total_space(), Some(317_554_195));
    }

    #[test]
    fn single_class_is_exhaustive() {
        let plan = plan_balanced(&sized_manifest(&[("x", 6)]), &config(2, 1), &Similarities::new()).unwrap();
        let c = &plan.classes[0];
        assert_eq!(c.mode, PlanMode::Exhaustive);
        assert_eq!(c.records.len(), 15);
        assert!(c.records.iter().all(|r| r.augmentation_epoch == 0));
        assert_eq!(c.records.iter().map(|r| r.rank).collect::<Vec<_>>(), (0..15).collect::<Vec<_>>());
    }

    #[test]
    fn completion_epochs() {
        let cfg = GenerationConfig { override_target: Some(4), ..config(3, 1) };
        let plan = plan_balanced(&sized_manifest(&[("big", 4), ("small", 3)]), &cfg, &Similarities::new()).unwrap();
        let big = &plan.classes[0];
        assert_eq!(big.mode, PlanMode::Exhaustive);
        let small = &plan.classes[1];
        assert_eq!(small.mode, PlanMode::Completion);
        assert_eq!(small.epochs_needed, 3);
        let epochs: Vec<u32> = small.records.iter().map(|r| r.augmentation_epoch).collect();
        assert_eq!(epochs, vec![0, 1, 2, 3]);
        assert!(small.records.iter().all(|r| r.member_indices == vec![0, 1, 2]));
        let paths: HashSet<_> = small.records.iter().map(|r| &r.output_path).collect();
        assert_eq!(paths.len(), 4);
    }

    #[test]
    fn generation_limit_guards_materialization() {
        let cfg = GenerationConfig { unbalanced: true, ..config(3, 1) };
        let err = plan_unbalanced(&sized_manifest(&OCTDL), &cfg, &Similarities::new()).unwrap_err();
        assert!(matches!(err, Error::PlanTooLarge { .. }));
        // Counting is unaffected.
        let table = count_table(&sized_manifest(&OCTDL), &cfg.layout, false).unwrap();
        assert_eq!(table.total_space(), Some(317_554_195));
    }

    #[test]
    fn unbalanced_caps() {
        let cfg = GenerationConfig { unbalanced: true, per_class_cap: Some(1), ..config(3, 1) };
        let plan = plan_unbalanced(&sized_manifest(&[("a", 5), ("b", 9)]), &cfg, &Similarities::new()).unwrap();
        assert!(plan.classes.iter().all(|c| c.records.len() == 1 && c.records[0].rank == 0));

        let cfg = GenerationConfig { unbalanced: true, ..config(2, 1) };
        let plan = plan_unbalanced(&sized_manifest(&[("a", 4)]), &cfg, &Similarities::new()).unwrap();
        assert_eq!(plan.classes[0].records.iter().map(|r| r.rank).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(plan.header.target, None);
    }

    #[test]
    fn override_overflow() {
        let cfg = GenerationConfig { override_target: Some(u128::MAX / 2 + 1), ..config(1, 1) };
        let err = plan_balanced(&sized_manifest(&[("a", 2), ("b", 2)]), &cfg, &Similarities::new()).unwrap_err();
        assert!(matches!(err, Error::OverrideTooLarge(_)));
    }

    #[test]
    fn disjoint_groups_never_share_images() {
        let cfg = GenerationConfig { disjoint: true, ..config(3, 1) };
        let plan = plan_balanced(&sized_manifest(&[("a", 10), ("b", 20)]), &cfg, &Similarities::new()).unwrap();
        assert_eq!(plan.header.target, Some(3));
        for c in &plan.classes {
            let mut used = HashSet::new();
            for r in &c.records {
                for &m in &r.member_indices {
                    assert!(used.insert(m), "image {m} reused in class {}", c.class_name);
                }
            }
        }
    }

    #[test]
    fn requires_seed() {
        let cfg = GenerationConfig { seed: None, ..config(1, 1) };
        assert!(matches!(plan_balanced(&sized_manifest(&[("a", 2)]), &cfg, &Similarities::new()), Err(Error::InvalidConfig(_))));
    }
}
