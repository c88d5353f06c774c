//! Cross-modal Recall@k and uncertainty-calibration metrics.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::adapter::AdapterNetwork;
use crate::data::{CorrespondenceMap, EmbeddingStore};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::uncertainty::{scalar_scores, UncertaintyConfig};

pub const DEFAULT_LEVELS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Image queries against a caption gallery.
    I2t,
    /// Caption queries against an image gallery.
    T2i,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "i2t" => Ok(Direction::I2t),
            "t2i" => Ok(Direction::T2i),
            other => Err(Error::domain(format!("direction must be i2t or t2i, got {other:?}"))),
        }
    }
}

/// Queries, gallery and, per query, the gallery rows that count as hits.
#[derive(Debug, Clone)]
pub struct RetrievalTask<'a> {
    pub queries: &'a EmbeddingStore,
    pub gallery: &'a EmbeddingStore,
    pub direction: Direction,
    relevant: Vec<Vec<usize>>,
}

impl<'a> RetrievalTask<'a> {
    pub fn new(
        images: &'a EmbeddingStore,
        captions: &'a EmbeddingStore,
        map: &CorrespondenceMap,
        direction: Direction,
    ) -> Result<Self> {
        if images.dim() != captions.dim() {
            return Err(Error::Shape {
                context: "retrieval embedding width",
                expected: images.dim(),
                got: captions.dim(),
            });
        }
        let (queries, gallery) = match direction {
            Direction::I2t => (images, captions),
            Direction::T2i => (captions, images),
        };
        let mut relevant = vec![Vec::new(); queries.len()];
        for (i, c) in map.index_pairs(images, captions)? {
            let (q, g) = match direction {
                Direction::I2t => (i, c),
                Direction::T2i => (c, i),
            };
            relevant[q].push(g);
        }
        if let Some(q) = relevant.iter().position(|r| r.is_empty()) {
            return Err(Error::validation(
                None,
                format!("query {} has no ground-truth match", queries.ids()[q]),
            ));
        }
        Ok(Self {
            queries,
            gallery,
            direction,
            relevant,
        })
    }

    pub fn relevant(&self, query: usize) -> &[usize] {
        &self.relevant[query]
    }

    /// 0-based position of the best-ranked ground-truth match of each query,
    /// ranking by cosine similarity descending, ties by gallery index.
    pub fn first_hit_ranks(&self) -> Vec<usize> {
        let gallery_norms: Vec<f64> = self.gallery.rows().map(norm).collect();
        self.queries
            .rows()
            .enumerate()
            .map(|(q, row)| {
                let qn = norm(row);
                let sims: Vec<f64> = self
                    .gallery
                    .rows()
                    .zip(&gallery_norms)
                    .map(|(g, &gn)| cosine(row, qn, g, gn))
                    .collect();
                let best = *self.relevant[q]
                    .iter()
                    .min_by(|&&a, &&b| rank_order(&sims, a, b))
                    .expect("every query has a match");
                // items strictly ahead of the best match
                (0..sims.len())
                    .filter(|&g| rank_order(&sims, g, best) == Ordering::Less)
                    .count()
            })
            .collect()
    }

    /// Per-query indicator of a hit within the top `k`.
    pub fn hits_at_k(&self, k: usize) -> Vec<bool> {
        self.first_hit_ranks().into_iter().map(|r| r < k).collect()
    }
}

fn rank_order(sims: &[f64], a: usize, b: usize) -> Ordering {
    sims[b]
        .partial_cmp(&sims[a])
        .unwrap_or(Ordering::Equal)
        .then(a.cmp(&b))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cosine(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// Fraction of queries with a ground-truth match among their top `k`.
pub fn recall_at_k(task: &RetrievalTask<'_>, k: usize) -> Result<f64> {
    if task.queries.is_empty() || task.gallery.is_empty() {
        return Err(Error::domain("empty retrieval task"));
    }
    if k == 0 || k > task.gallery.len() {
        return Err(Error::domain(format!(
            "k must lie in [1, {}], got {k}",
            task.gallery.len()
        )));
    }
    let hits = task.hits_at_k(k);
    Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && x[idx[end]] == x[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape {
            context: "paired series",
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::Degenerate("need at least two observations".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite observation".into()));
    }
    Ok(())
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&a| a == v[0])
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    if is_constant(x) || is_constant(y) {
        return Err(Error::Degenerate("spearman of a constant series".into()));
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

/// Coefficient of determination of the least-squares line of `y` on `x`;
/// `0` when `y` is constant.
pub fn r_squared_linear(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    if is_constant(x) {
        return Err(Error::Degenerate("regression on a constant abscissa".into()));
    }
    if is_constant(y) {
        return Ok(0.0);
    }
    let r = pearson(x, y);
    Ok((r * r).clamp(0.0, 1.0))
}

/// Quantile bins: sort ascending (ties by index) and cut into `n_levels`
/// contiguous groups whose sizes differ by at most one.
pub fn assign_uncertainty_levels(u: &[f64], n_levels: usize) -> Result<Vec<usize>> {
    if n_levels < 2 {
        return Err(Error::domain("need at least 2 uncertainty levels"));
    }
    if u.len() < n_levels {
        return Err(Error::domain(format!(
            "{} samples cannot fill {n_levels} levels",
            u.len()
        )));
    }
    let mut idx: Vec<usize> = (0..u.len()).collect();
    idx.sort_by(|&a, &b| u[a].partial_cmp(&u[b]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    let mut levels = vec![0; u.len()];
    for (pos, &i) in idx.iter().enumerate() {
        levels[i] = pos * n_levels / u.len();
    }
    Ok(levels)
}

/// Abscissa the trend statistics are computed against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Abscissa {
    #[default]
    LevelIndex,
    MeanUncertainty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationConfig {
    pub n_levels: usize,
    pub uncertainty: UncertaintyConfig,
    pub seed: u64,
    pub abscissa: Abscissa,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            n_levels: DEFAULT_LEVELS,
            uncertainty: UncertaintyConfig::default(),
            seed: 0,
            abscissa: Abscissa::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStat {
    pub level: usize,
    pub mean_uncertainty: f64,
    pub count: usize,
    pub recall_at_1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub n_levels: usize,
    pub levels: Vec<LevelStat>,
    pub spearman: f64,
    pub r2: f64,
    pub minus_sr2: f64,
}

/// Bins queries by `uncertainty`, measures R@1 per bin against the full
/// gallery and summarizes the trend with S, R² and −S·R².
///
/// When every bin has the same R@1 the rank correlation is undefined and
/// reported as 0.
pub fn calibration_from_scores(
    task: &RetrievalTask<'_>,
    uncertainty: &[f64],
    n_levels: usize,
    abscissa: Abscissa,
) -> Result<CalibrationReport> {
    if uncertainty.len() != task.queries.len() {
        return Err(Error::Shape {
            context: "uncertainty per query",
            expected: task.queries.len(),
            got: uncertainty.len(),
        });
    }
    let levels = assign_uncertainty_levels(uncertainty, n_levels)?;
    let hits = task.hits_at_k(1);
    let mut count = vec![0usize; n_levels];
    let mut hit = vec![0usize; n_levels];
    let mut u_sum = vec![0.0; n_levels];
    for (q, &l) in levels.iter().enumerate() {
        count[l] += 1;
        hit[l] += usize::from(hits[q]);
        u_sum[l] += uncertainty[q];
    }
    if let Some(l) = count.iter().position(|&c| c == 0) {
        return Err(Error::domain(format!("uncertainty level {l} has no queries")));
    }
    let levels: Vec<LevelStat> = (0..n_levels)
        .map(|l| LevelStat {
            level: l,
            mean_uncertainty: u_sum[l] / count[l] as f64,
            count: count[l],
            recall_at_1: hit[l] as f64 / count[l] as f64,
        })
        .collect();
    let x: Vec<f64> = match abscissa {
        Abscissa::LevelIndex => (0..n_levels).map(|l| l as f64).collect(),
        Abscissa::MeanUncertainty => levels.iter().map(|l| l.mean_uncertainty).collect(),
    };
    let y: Vec<f64> = levels.iter().map(|l| l.recall_at_1).collect();
    let s = match spearman(&x, &y) {
        Ok(s) => s,
        Err(Error::Degenerate(_)) if is_constant(&y) => 0.0,
        Err(e) => return Err(e),
    };
    let r2 = if is_constant(&x) { 0.0 } else { r_squared_linear(&x, &y)? };
    Ok(CalibrationReport {
        n_levels,
        levels,
        spearman: s,
        r2,
        minus_sr2: -s * r2,
    })
}

/// Scores each query with its modality's adapter and reports calibration.
pub fn evaluate_calibration<T: Scalar>(
    adapter: &AdapterNetwork<T>,
    task: &RetrievalTask<'_>,
    cfg: &CalibrationConfig,
) -> Result<CalibrationReport> {
    let u = scalar_scores(adapter, task.queries, &cfg.uncertainty, cfg.seed)?;
    calibration_from_scores(task, &u, cfg.n_levels, cfg.abscissa)
}
