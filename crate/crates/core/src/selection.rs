//! Grouping policies deciding which same-class images share a composite.
//!
//! Every policy is a bijection from combination ranks onto combinations: the
//! similarity-driven policies only permute the class's indices before
//! unranking, so the set of reachable composites, and hence every count the
//! balancer relies on, is the same for all of them.

use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::DynamicImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::CombinationSpace;
use crate::error::{Error, Result};
use crate::manifest::{ClassImages, DatasetManifest};
use crate::scalar::{CountInt, Scalar};

/// Thumbnail edge length used by [`similarity`].
pub const THUMB_SIZE: u32 = 32;
const THUMB_PIXELS: usize = (THUMB_SIZE * THUMB_SIZE) as usize;
/// Largest L1 distance between two thumbnails.
const MAX_DISTANCE: u32 = THUMB_PIXELS as u32 * 255;

/// Classes larger than this are refused by [`build_similarity_matrix`].
pub const SIMILARITY_LIMIT: usize = 5_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    ClassBased,
    SimilarityHigh,
    SimilarityLow,
    HeterogeneousMix,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::ClassBased => "class_based",
            PolicyKind::SimilarityHigh => "similarity_high",
            PolicyKind::SimilarityLow => "similarity_low",
            PolicyKind::HeterogeneousMix => "heterogeneous_mix",
        }
    }

    pub fn needs_similarity(self) -> bool {
        self != PolicyKind::ClassBased
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "class_based" => Ok(PolicyKind::ClassBased),
            "similarity_high" => Ok(PolicyKind::SimilarityHigh),
            "similarity_low" => Ok(PolicyKind::SimilarityLow),
            "heterogeneous_mix" => Ok(PolicyKind::HeterogeneousMix),
            other => Err(Error::InvalidPolicy(format!("unknown policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionPolicy {
    pub kind: PolicyKind,
    /// Share of slots filled from the high-similarity ordering (`heterogeneous_mix` only).
    #[serde(default)]
    pub high_fraction: f64,
    #[serde(default)]
    pub with_repetition: bool,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        Self { kind: PolicyKind::ClassBased, high_fraction: 0.5, with_repetition: false }
    }
}

impl SelectionPolicy {
    pub fn class_based(with_repetition: bool) -> Self {
        Self { kind: PolicyKind::ClassBased, high_fraction: 0.0, with_repetition }
    }

    /// Slots per composite taken from the high-similarity ordering.
    pub fn high_slots(&self, k: usize) -> Result<usize> {
        let f = self.high_fraction;
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::InvalidPolicy(format!("high_fraction {f} outside [0, 1]")));
        }
        Ok(((f * k as f64).round() as usize).min(k))
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.kind == PolicyKind::HeterogeneousMix {
            self.high_slots(k)?;
        }
        Ok(())
    }
}

/// Grayscale thumbnail, the only image representation the metric looks at.
#[derive(Clone)]
pub struct Thumbnail(Box<[u8]>);

impl Thumbnail {
    pub fn of(img: &DynamicImage) -> Self {
        let gray = img.to_luma8();
        let small = image::imageops::resize(&gray, THUMB_SIZE, THUMB_SIZE, FilterType::Triangle);
        Thumbnail(small.into_raw().into_boxed_slice())
    }

    fn l1(&self, other: &Thumbnail) -> u32 {
        self.0.iter().zip(other.0.iter()).map(|(&a, &b)| a.abs_diff(b) as u32).sum()
    }
}

fn score_from_distance<S: Scalar>(d: u32) -> S {
    S::one() - S::from_u32_lossy(d) / S::from_u32_lossy(MAX_DISTANCE)
}

/// `1 - mean |a - b| / 255` over 32x32 grayscale thumbnails.
pub fn similarity<S: Scalar>(a: &DynamicImage, b: &DynamicImage) -> S {
    score_from_distance(Thumbnail::of(a).l1(&Thumbnail::of(b)))
}

/// Pairwise similarity over one class, kept as exact integer thumbnail
/// distances so cached and recomputed matrices agree bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix<S> {
    pub class_name: String,
    n: usize,
    distances: Vec<u32>,
    scores: Vec<S>,
}

impl<S: Scalar> SimilarityMatrix<S> {
    fn from_distances(class_name: String, n: usize, distances: Vec<u32>) -> Self {
        debug_assert_eq!(distances.len(), n * n);
        let scores = distances.iter().map(|&d| score_from_distance(d)).collect();
        Self { class_name, n, distances, scores }
    }

    /// Build from precomputed thumbnails (row order = class index order).
    pub fn from_thumbnails(class_name: impl Into<String>, thumbs: &[Thumbnail]) -> Self {
        let n = thumbs.len();
        let rows: Vec<Vec<u32>> =
            (0..n).into_par_iter().map(|i| (0..n).map(|j| if i == j { 0 } else { thumbs[i].l1(&thumbs[j]) }).collect()).collect();
        Self::from_distances(class_name.into(), n, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.scores[i * self.n + j]
    }

    pub fn row_sums(&self) -> Vec<S> {
        self.scores.chunks(self.n.max(1)).map(|row| row.iter().fold(S::zero(), |acc, &v| acc + v)).collect()
    }

    /// Class indices by descending total similarity; ties by ascending index.
    pub fn descending_order(&self) -> Vec<usize> {
        let sums = self.row_sums();
        let mut order: Vec<usize> = (0..self.n).collect();
        order.sort_by(|&a, &b| sums[b].partial_cmp(&sums[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
        order
    }

    /// Class indices by ascending total similarity; ties by ascending index.
    pub fn ascending_order(&self) -> Vec<usize> {
        let sums = self.row_sums();
        let mut order: Vec<usize> = (0..self.n).collect();
        order.sort_by(|&a, &b| sums[a].partial_cmp(&sums[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
        order
    }

    pub fn save_cache(&self, path: &Path, class_digest: &str) -> Result<()> {
        let file = SimilarityCacheFile {
            class: self.class_name.clone(),
            class_digest: class_digest.to_string(),
            thumb_size: THUMB_SIZE,
            n: self.n,
            l1_distances: self.distances.clone(),
        };
        let text = serde_json::to_string(&file).map_err(|e| Error::json(path, e))?;
        crate::write_file(path, text.as_bytes())
    }

    /// Returns `None` when the cache is missing or keyed to different content.
    pub fn load_cache(path: &Path, class_digest: &str) -> Result<Option<Self>> {
        let Ok(text) = fs::read_to_string(path) else {
            return Ok(None);
        };
        let file: SimilarityCacheFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if file.class_digest != class_digest || file.thumb_size != THUMB_SIZE || file.l1_distances.len() != file.n * file.n
        {
            return Ok(None);
        }
        Ok(Some(Self::from_distances(file.class, file.n, file.l1_distances)))
    }
}

#[derive(Serialize, Deserialize)]
struct SimilarityCacheFile {
    class: String,
    class_digest: String,
    thumb_size: u32,
    n: usize,
    l1_distances: Vec<u32>,
}

/// Decode every image of `class` and score all pairs.
pub fn build_similarity_matrix<S: Scalar>(manifest: &DatasetManifest, class: &ClassImages) -> Result<SimilarityMatrix<S>> {
    if class.len() > SIMILARITY_LIMIT {
        return Err(Error::SimilarityTooLarge { class: class.name.clone(), n: class.len(), limit: SIMILARITY_LIMIT });
    }
    let thumbs: Vec<Thumbnail> = class
        .entries
        .par_iter()
        .map(|e| manifest.load_image(e).map(|img| Thumbnail::of(&img)))
        .collect::<Result<_>>()?;
    Ok(SimilarityMatrix::from_thumbnails(class.name.clone(), &thumbs))
}

pub fn cache_path(cache_dir: &Path, class: &ClassImages) -> PathBuf {
    cache_dir.join(format!("{}.sim.json", class.digest()))
}

/// Load from `cache_dir` if a matching entry exists, otherwise build and store.
pub fn cached_similarity_matrix<S: Scalar>(
    manifest: &DatasetManifest,
    class: &ClassImages,
    cache_dir: &Path,
) -> Result<SimilarityMatrix<S>> {
    let digest = class.digest();
    let path = cache_path(cache_dir, class);
    if let Some(hit) = SimilarityMatrix::load_cache(&path, &digest)? {
        return Ok(hit);
    }
    let built = build_similarity_matrix(manifest, class)?;
    built.save_cache(&path, &digest)?;
    Ok(built)
}

/// Maps ranks of one class's combination space to member tuples.
#[derive(Debug, Clone)]
pub struct Selector<C = crate::Count> {
    space: CombinationSpace<C>,
    /// `order[p]` is the class index placed at position `p`; `None` is the identity.
    order: Option<Vec<usize>>,
}

impl<C: CountInt> Selector<C> {
    pub fn new<S: Scalar>(policy: &SelectionPolicy, space: CombinationSpace<C>, sim: Option<&SimilarityMatrix<S>>) -> Result<Self> {
        policy.validate(space.k)?;
        if !policy.kind.needs_similarity() {
            return Ok(Self { space, order: None });
        }
        let sim = sim.ok_or(Error::PolicyMissingSimilarity(policy.kind.as_str()))?;
        if sim.len() != space.n {
            return Err(Error::InvalidPolicy(format!(
                "similarity matrix covers {} images, class has {}",
                sim.len(),
                space.n
            )));
        }
        let order = match policy.kind {
            PolicyKind::ClassBased => unreachable!(),
            PolicyKind::SimilarityHigh => sim.descending_order(),
            PolicyKind::SimilarityLow => sim.ascending_order(),
            PolicyKind::HeterogeneousMix => {
                mixed_order(&sim.descending_order(), &sim.ascending_order(), policy.high_slots(space.k)?, space.k)
            }
        };
        Ok(Self { space, order: Some(order) })
    }

    pub fn space(&self) -> &CombinationSpace<C> {
        &self.space
    }

    /// Member indices for `rank`, sorted ascending.
    pub fn select(&self, rank: C) -> Result<Vec<usize>> {
        let positions = self.space.unrank(rank)?;
        Ok(match &self.order {
            None => positions,
            Some(order) => {
                let mut members: Vec<usize> = positions.into_iter().map(|p| order[p]).collect();
                members.sort_unstable();
                members
            }
        })
    }
}

/// Interleave two orderings in blocks of `high` then `k - high` entries,
/// skipping indices already placed. Yields a permutation of `0..n`.
fn mixed_order(high_order: &[usize], low_order: &[usize], high: usize, k: usize) -> Vec<usize> {
    let n = high_order.len();
    let mut placed = vec![false; n];
    let mut out = Vec::with_capacity(n);
    let (mut hi, mut lo) = (0usize, 0usize);
    let take = |src: &[usize], cursor: &mut usize, placed: &mut Vec<bool>, out: &mut Vec<usize>| {
        while *cursor < n && placed[src[*cursor]] {
            *cursor += 1;
        }
        if *cursor < n {
            placed[src[*cursor]] = true;
            out.push(src[*cursor]);
        }
    };
    while out.len() < n {
        for _ in 0..high {
            take(high_order, &mut hi, &mut placed, &mut out);
        }
        for _ in high..k {
            take(low_order, &mut lo, &mut placed, &mut out);
        }
    }
    out
}

/// One-shot form of [`Selector::select`].
pub fn select_members<C: CountInt, S: Scalar>(
    policy: &SelectionPolicy,
    space: &CombinationSpace<C>,
    sim: Option<&SimilarityMatrix<S>>,
    rank: C,
) -> Result<Vec<usize>> {
    Selector::new(policy, *space, sim)?.select(rank)
}
