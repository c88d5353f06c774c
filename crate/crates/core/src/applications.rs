//! Uncertainty-driven active selection and unlabeled-target model selection.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::adapter::{interpolate_adapters, AdapterNetwork};
use crate::data::EmbeddingStore;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::uncertainty::{scalar_scores, UncertaintyConfig};

/// IDs of the `budget` most uncertain images, most uncertain first.
pub fn active_select<T: Scalar>(
    adapter_v: &AdapterNetwork<T>,
    images: &EmbeddingStore,
    budget: usize,
    cfg: &UncertaintyConfig,
    seed: u64,
) -> Result<Vec<String>> {
    if budget == 0 || budget > images.len() {
        return Err(Error::domain(format!(
            "budget must lie in [1, {}], got {budget}",
            images.len()
        )));
    }
    let scores = scalar_scores(adapter_v, images, cfg, seed)?;
    Ok(top_uncertain(images.ids(), &scores, budget)
        .into_iter()
        .map(|(id, _)| id)
        .collect())
}

/// Descending by score, ties by ascending ID, truncated to `budget`.
pub fn top_uncertain(ids: &[String], scores: &[f64], budget: usize) -> Vec<(String, f64)> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| ids[a].cmp(&ids[b]))
    });
    order
        .into_iter()
        .take(budget)
        .map(|i| (ids[i].clone(), scores[i]))
        .collect()
}

/// A pair of adapters fitted on one source distribution.
#[derive(Debug, Clone)]
pub struct ModelCandidate<T> {
    pub name: String,
    pub adapter_v: AdapterNetwork<T>,
    pub adapter_t: AdapterNetwork<T>,
    pub provenance: String,
}

impl<T: Scalar> ModelCandidate<T> {
    pub fn new(
        name: impl Into<String>,
        adapter_v: AdapterNetwork<T>,
        adapter_t: AdapterNetwork<T>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if adapter_v.d_in() != adapter_t.d_in() {
            return Err(Error::domain("candidate adapters disagree on embedding width"));
        }
        Ok(Self {
            name: name.into(),
            adapter_v,
            adapter_t,
            provenance: provenance.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub name: String,
    pub mean_uncertainty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Ascending by mean uncertainty, ties by name.
    pub candidates: Vec<CandidateScore>,
    /// Score of the uniform parameter average of every vision adapter.
    pub interpolated_mean_uncertainty: f64,
    pub selected: String,
}

/// Ranks candidates by the mean scalar uncertainty their own vision adapter
/// assigns to the unlabeled target images, and reports the score of the
/// uniformly interpolated adapter alongside.
pub fn model_select<T: Scalar>(
    candidates: &[ModelCandidate<T>],
    target_images: &EmbeddingStore,
    cfg: &UncertaintyConfig,
    seed: u64,
) -> Result<SelectionResult> {
    if candidates.len() < 2 {
        return Err(Error::domain("model selection needs at least two candidates"));
    }
    for c in candidates {
        if c.adapter_v.d_in() != target_images.dim() {
            return Err(Error::domain(format!(
                "candidate {} expects width {}, target images have {}",
                c.name,
                c.adapter_v.d_in(),
                target_images.dim()
            )));
        }
    }
    let mut by_name: Vec<&ModelCandidate<T>> = candidates.iter().collect();
    by_name.sort_by(|a, b| a.name.cmp(&b.name));

    let mean = |net: &AdapterNetwork<T>| -> Result<f64> {
        let s = scalar_scores(net, target_images, cfg, seed)?;
        Ok(s.iter().sum::<f64>() / s.len() as f64)
    };
    let nets: Vec<&AdapterNetwork<T>> = by_name.iter().map(|c| &c.adapter_v).collect();
    let weights = vec![1.0 / nets.len() as f64; nets.len()];
    let weights = normalize_weights(weights);
    let blended = interpolate_adapters(&nets, &weights)?;
    let interpolated_mean_uncertainty = mean(&blended)?;

    let mut scored = by_name
        .iter()
        .map(|c| {
            Ok(CandidateScore {
                name: c.name.clone(),
                mean_uncertainty: mean(&c.adapter_v)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| {
        a.mean_uncertainty
            .partial_cmp(&b.mean_uncertainty)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.name.cmp(&b.name))
    });
    Ok(SelectionResult {
        selected: scored[0].name.clone(),
        candidates: scored,
        interpolated_mean_uncertainty,
    })
}

/// Puts rounding slack of `1/n` weights on the last entry so they sum to 1.
fn normalize_weights(mut w: Vec<f64>) -> Vec<f64> {
    let head: f64 = w[..w.len() - 1].iter().sum();
    let last = w.len() - 1;
    w[last] = 1.0 - head;
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Modality;

    #[test]
    fn top_uncertain_orders_and_breaks_ties_by_id() {
        let ids: Vec<String> = ["b", "a", "c", "d"].iter().map(|s| s.to_string()).collect();
        let top = top_uncertain(&ids, &[0.5, 0.5, 0.9, 0.1], 3);
        let names: Vec<&str> = top.iter().map(|(s, _)| s.as_str()).collect();
        assert_eq!(names, vec!["c", "a", "b"]);
        let two: Vec<String> = vec!["lo".into(), "hi".into()];
        assert_eq!(top_uncertain(&two, &[0.1, 0.9], 1)[0].0, "hi");
    }

    #[test]
    fn budget_bounds() {
        let net = AdapterNetwork::<f64>::init(2, 4, 0.1, 0).unwrap();
        let store = EmbeddingStore::new(Modality::Image, vec!["x".into(), "y".into()], 2, vec![0.1; 4]).unwrap();
        let cfg = UncertaintyConfig::default();
        assert!(active_select(&net, &store, 0, &cfg, 0).is_err());
        assert!(active_select(&net, &store, 3, &cfg, 0).is_err());
        let all = active_select(&net, &store, 2, &cfg, 0).unwrap();
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(sorted, vec!["x".to_string(), "y".to_string()]);
    }

    #[test]
    fn model_select_preconditions_and_ties() {
        let net = AdapterNetwork::<f64>::init(2, 4, 0.1, 0).unwrap();
        let store = EmbeddingStore::new(Modality::Image, vec!["x".into()], 2, vec![0.1, 0.3]).unwrap();
        let cfg = UncertaintyConfig::default();
        let a = ModelCandidate::new("beta", net.clone(), net.clone(), "s1").unwrap();
        assert!(model_select(&[a.clone()], &store, &cfg, 0).is_err());
        let b = ModelCandidate::new("alpha", net.clone(), net.clone(), "s2").unwrap();
        let res = model_select(&[a.clone(), b], &store, &cfg, 0).unwrap();
        assert_eq!(res.candidates[0].mean_uncertainty, res.candidates[1].mean_uncertainty);
        assert_eq!(res.selected, "alpha");
        let wide = AdapterNetwork::<f64>::init(3, 4, 0.1, 0).unwrap();
        assert!(ModelCandidate::new("w", wide.clone(), net.clone(), "").is_err());
        let c = ModelCandidate::new("w", wide.clone(), wide, "").unwrap();
        assert!(model_select(&[a, c], &store, &cfg, 0).is_err());
    }
}
