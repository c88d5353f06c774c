use pvlm::adapter::AdapterNetwork;
use pvlm::applications::{active_select, model_select, ModelCandidate};
use pvlm::data::{SynthConfig, SynthDataset};
use pvlm::training::{loss_total, train, PairedDataset, TrainConfig};
use pvlm::uncertainty::{epistemic, scalar_scores, UncertaintyConfig};
use pvlm::{Error, GgdParams};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_data(seed: u64, split: u64) -> SynthDataset {
    SynthDataset::generate(&SynthConfig {
        n_concepts: 4,
        d: 8,
        images_per_concept: 4,
        captions_per_concept: 2,
        seed,
        split,
        ..Default::default()
    })
    .unwrap()
}

fn paired(ds: &SynthDataset) -> PairedDataset<f64> {
    PairedDataset::from_stores(&ds.images, &ds.captions, &ds.correspondences).unwrap()
}

fn quick_config() -> TrainConfig {
    TrainConfig {
        epochs: 5,
        batch_size: 8,
        d_hidden: 16,
        ..Default::default()
    }
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn epistemic_estimates_agree_between_m_and_2m_passes() {
    let mut net = AdapterNetwork::<f64>::init(16, 32, 0.2, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    // The mean head starts at zero, which would make every pass identical.
    for w in net.params_mut().head_mu.weight.iter_mut() {
        *w = rng.random_range(-0.2..0.2);
    }
    let z: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let m = 10;
    // Divisor-m variances are scaled by (m-1)/m in expectation; undo that so
    // the two estimators target the same quantity.
    let scalar = |passes: usize, seed: u64| {
        let e = epistemic(&net, &z, passes, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        mean * passes as f64 / (passes - 1) as f64
    };
    let small: Vec<f64> = (0..50).map(|s| scalar(m, s)).collect();
    let large: Vec<f64> = (0..50).map(|s| scalar(2 * m, 1000 + s)).collect();
    let (a, sa) = mean_se(&small);
    let (b, sb) = mean_se(&large);
    assert!(a > 0.0 && b > 0.0);
    assert!((a - b).abs() <= 3.0 * (sa * sa + sb * sb).sqrt(), "{a} ± {sa} vs {b} ± {sb}");
}

#[test]
fn epistemic_needs_two_passes_and_vanishes_without_dropout() {
    let net = AdapterNetwork::<f64>::init(4, 8, 0.0, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(epistemic(&net, &[0.1; 4], 1, &mut rng).is_err());
    let e = epistemic(&net, &[0.1, 0.2, -0.3, 0.4], 5, &mut rng).unwrap();
    assert!(e.iter().all(|&v| v == 0.0));
}

fn random_out(d: usize, rng: &mut ChaCha8Rng) -> GgdParams {
    GgdParams::new(
        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        (0..d).map(|_| rng.random_range(0.2..2.0)).collect(),
        (0..d).map(|_| rng.random_range(0.5..4.0)).collect(),
    )
    .unwrap()
}

#[test]
fn without_the_cross_term_pairing_does_not_matter() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (n, d) = (12, 3);
    let vis: Vec<(Vec<f64>, GgdParams)> = (0..n)
        .map(|_| ((0..d).map(|_| rng.random_range(-1.0..1.0)).collect(), random_out(d, &mut rng)))
        .collect();
    let txt: Vec<(Vec<f64>, GgdParams)> = (0..n)
        .map(|_| ((0..d).map(|_| rng.random_range(-1.0..1.0)).collect(), random_out(d, &mut rng)))
        .collect();
    let mut shuffled = txt.clone();
    shuffled.shuffle(&mut rng);
    let summed = |t: &[(Vec<f64>, GgdParams)], lambda: f64| -> f64 {
        vis.iter()
            .zip(t)
            .map(|((zv, ov), (zt, ot))| loss_total(ov, zv, ot, zt, lambda, true).unwrap().0.total)
            .sum()
    };
    let (a, b) = (summed(&txt, 0.0), summed(&shuffled, 0.0));
    assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
    assert!((summed(&txt, 1.0) - summed(&shuffled, 1.0)).abs() > 1e-6);
}

#[test]
fn training_lowers_the_total_loss() {
    let ds = small_data(0, 0);
    let cfg = TrainConfig {
        epochs: 40,
        ..quick_config()
    };
    let h = train(&paired(&ds), &cfg).unwrap().history;
    assert_eq!(h.records.len(), 40);
    let (first, last) = (h.records[0].loss_total, h.records[39].loss_total);
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn invalid_training_inputs_are_rejected() {
    let ds = small_data(0, 0);
    let data = paired(&ds);
    for cfg in [
        TrainConfig { epochs: 0, ..quick_config() },
        TrainConfig { batch_size: 0, ..quick_config() },
        TrainConfig { learning_rate: -1.0, ..quick_config() },
        TrainConfig { lambda_cross: f64::NAN, ..quick_config() },
    ] {
        assert!(train(&data, &cfg).is_err(), "{cfg:?}");
    }
    let empty = data.filter_images(|_| false);
    assert!(matches!(train(&empty, &quick_config()), Err(Error::Domain(_))));
}

#[test]
fn training_is_bitwise_deterministic_per_seed() {
    let data = paired(&small_data(2, 0));
    let a = train(&data, &quick_config()).unwrap();
    let b = train(&data, &quick_config()).unwrap();
    assert_eq!(a.vision.to_bytes(), b.vision.to_bytes());
    assert_eq!(a.text.to_bytes(), b.text.to_bytes());
    assert_eq!(a.history.to_csv(), b.history.to_csv());
    let c = train(&data, &TrainConfig { seed: 1, ..quick_config() }).unwrap();
    assert_ne!(a.vision.to_bytes(), c.vision.to_bytes());
}

#[test]
fn noisier_held_out_images_are_more_uncertain() {
    let base = SynthConfig::default();
    let train_set = SynthDataset::generate(&base).unwrap();
    let cfg = TrainConfig {
        epochs: 30,
        d_hidden: 64,
        ..Default::default()
    };
    let fitted = train(&paired(&train_set), &cfg).unwrap();
    let test = SynthDataset::generate(&base.with_split(1)).unwrap();
    let u = scalar_scores(&fitted.vision, &test.images, &UncertaintyConfig::default(), 0).unwrap();

    let mut sigma = test.image_sigma.clone();
    sigma.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sigma[sigma.len() / 2];
    let (hi, lo): (Vec<f64>, Vec<f64>) = {
        let mut hi = Vec::new();
        let mut lo = Vec::new();
        for (s, v) in test.image_sigma.iter().zip(&u) {
            if *s >= median { hi.push(*v) } else { lo.push(*v) }
        }
        (hi, lo)
    };
    let (mh, sh) = mean_se(&hi);
    let (ml, sl) = mean_se(&lo);
    let t = (mh - ml) / (sh * sh + sl * sl).sqrt();
    assert!(t >= 1.645, "Welch t = {t} ({mh} vs {ml})");
}

fn fitted_pair(seed: u64, split: u64) -> (AdapterNetwork<f64>, AdapterNetwork<f64>, SynthDataset) {
    let ds = small_data(seed, split);
    let p = train(&paired(&ds), &quick_config()).unwrap();
    (p.vision, p.text, ds)
}

#[test]
fn active_selection_returns_the_top_scores() {
    let (v, _, _) = fitted_pair(0, 0);
    let pool = small_data(0, 1).images;
    let cfg = UncertaintyConfig::default();
    let budget = 5;
    let picked = active_select(&v, &pool, budget, &cfg, 7).unwrap();
    assert_eq!(picked.len(), budget);

    let scores = scalar_scores(&v, &pool, &cfg, 7).unwrap();
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(pool.ids()[a].cmp(&pool.ids()[b])));
    let expect: Vec<String> = order[..budget].iter().map(|&i| pool.ids()[i].clone()).collect();
    assert_eq!(picked, expect);

    let floor = picked
        .iter()
        .map(|id| scores[pool.ids().iter().position(|x| x == id).unwrap()])
        .fold(f64::INFINITY, f64::min);
    for (id, s) in pool.ids().iter().zip(&scores) {
        if !picked.contains(id) {
            assert!(*s <= floor);
        }
    }
    assert!(active_select(&v, &pool, 0, &cfg, 7).is_err());
    assert!(active_select(&v, &pool, pool.len() + 1, &cfg, 7).is_err());
}

#[test]
fn model_selection_ignores_candidate_order_and_breaks_ties_by_name() {
    let (v0, t0, _) = fitted_pair(0, 0);
    let (v1, t1, _) = fitted_pair(5, 0);
    let target = small_data(0, 1).images;
    let cfg = UncertaintyConfig::default();
    let a = ModelCandidate::new("alpha", v0.clone(), t0.clone(), "seed 0").unwrap();
    let b = ModelCandidate::new("beta", v1, t1, "seed 5").unwrap();
    let fwd = model_select(&[a.clone(), b.clone()], &target, &cfg, 3).unwrap();
    let rev = model_select(&[b, a.clone()], &target, &cfg, 3).unwrap();
    assert_eq!(fwd, rev);
    let best = &fwd.candidates[0];
    assert_eq!(fwd.selected, best.name);
    assert!(fwd.candidates.windows(2).all(|w| w[0].mean_uncertainty <= w[1].mean_uncertainty));

    let twin = ModelCandidate::new("aardvark", v0, t0, "copy").unwrap();
    let tie = model_select(&[a, twin], &target, &cfg, 3).unwrap();
    assert_eq!(tie.candidates[0].mean_uncertainty, tie.candidates[1].mean_uncertainty);
    assert_eq!(tie.selected, "aardvark");
}
