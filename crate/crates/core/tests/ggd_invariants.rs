use pvlm::ggd::{logpdf, mc_match_likelihood, nll, nll_stable, sample, variance};
use pvlm::special::ln_gamma;
use pvlm::training::loss_cross;
use pvlm::GgdParams;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{LN_2, PI};

fn p1(mu: f64, alpha: f64, beta: f64) -> GgdParams {
    GgdParams::isotropic(1, mu, alpha, beta).unwrap()
}

fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..=n).map(move |i| lo + (hi - lo) * i as f64 / n as f64)
}

#[test]
fn beta_two_is_gaussian_with_variance_alpha_squared_over_two() {
    for &(mu, alpha) in &[(0.0, 1.0), (0.7, 0.3), (-2.0, 2.5)] {
        let var = alpha * alpha / 2.0;
        for z in grid(mu - 5.0 * alpha, mu + 5.0 * alpha, 200) {
            let want = -0.5 * (2.0 * PI * var).ln() - (z - mu) * (z - mu) / (2.0 * var);
            let got = logpdf(&[z], &p1(mu, alpha, 2.0)).unwrap();
            assert!((got - want).abs() < 1e-9, "z={z}: {got} vs {want}");
        }
    }
}

#[test]
fn beta_one_is_laplace_with_diversity_alpha() {
    for &(mu, b) in &[(0.0, 1.0), (1.3, 0.4), (-0.5, 3.0)] {
        for z in grid(mu - 5.0 * b, mu + 5.0 * b, 200) {
            let want = -(2.0 * b).ln() - (z - mu).abs() / b;
            let got = logpdf(&[z], &p1(mu, b, 1.0)).unwrap();
            assert!((got - want).abs() < 1e-9, "z={z}: {got} vs {want}");
        }
    }
}

#[test]
fn density_integrates_to_one_over_the_parameter_grid() {
    for &alpha in &[0.5, 1.0, 2.0] {
        for &beta in &[0.5, 1.0, 2.0, 5.0] {
            let p = p1(0.0, alpha, beta);
            let f = |x: f64| logpdf(&[x], &p).unwrap().exp();
            // Tail mass beyond r^β = 40 is Γ(1/β, 40)/Γ(1/β) < 1e-15.
            let reach = alpha * 40.0_f64.powf(1.0 / beta);
            let mut cuts = vec![0.0, alpha];
            while *cuts.last().unwrap() < reach {
                let next = (cuts.last().unwrap() * 4.0).min(reach);
                cuts.push(next);
            }
            let half: f64 = cuts
                .windows(2)
                .map(|w| quadrature::double_exponential::integrate(f, w[0], w[1], 1e-12).integral)
                .sum();
            let total = 2.0 * half;
            assert!((total - 1.0).abs() < 1e-6, "α={alpha} β={beta}: {total}");
        }
    }
}

#[test]
fn analytic_variances() {
    for &(a, b, v) in &[(1.0, 2.0, 0.5), (1.0, 1.0, 2.0), (2.0, 2.0, 2.0)] {
        let got = variance(&p1(0.0, a, b))[0];
        assert!((got - v).abs() < 1e-12, "({a},{b}) → {got}");
    }
}

proptest! {
    #[test]
    fn nll_is_logpdf_without_the_ln2_constant(
        rows in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64, 0.05..4.0f64, 0.1..10.0f64), 1..12)
    ) {
        let z: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let p = GgdParams::new(
            rows.iter().map(|r| r.1).collect(),
            rows.iter().map(|r| r.2).collect(),
            rows.iter().map(|r| r.3).collect(),
        ).unwrap();
        let n = nll(&z, &p).unwrap();
        let s = n + z.len() as f64 * LN_2 + logpdf(&z, &p).unwrap();
        // 1e-12 in units of the largest term being cancelled.
        let scale = n.abs().max(1.0);
        prop_assert!(s.abs() < 1e-12 * scale, "residual {} at scale {}", s, scale);
    }

    #[test]
    fn stable_nll_tracks_exact_nll_near_unit_ratio(r in 0.9..1.1f64, beta in 0.5..2.5f64, alpha in 0.1..3.0f64) {
        let p = p1(0.0, alpha, beta);
        let z = [r * alpha];
        let d = (nll_stable(&z, &p).unwrap() - nll(&z, &p).unwrap()).abs();
        prop_assert!(d <= 0.02, "r={} β={}: {}", r, beta, d);
    }
}

#[test]
fn stable_minus_exact_is_the_taylor_remainder_up_to_beta_three() {
    // r^β − (1 − β + βr): zero at r = 1, second order in (r − 1).
    for beta in grid(0.5, 3.0, 25) {
        let p = p1(0.0, 1.0, beta);
        let at_one = nll_stable(&[1.0], &p).unwrap() - nll(&[1.0], &p).unwrap();
        assert!(at_one.abs() < 1e-12);
        for r in grid(0.9, 1.1, 20) {
            let d = nll_stable(&[r], &p).unwrap() - nll(&[r], &p).unwrap();
            let remainder = 1.0 - beta + beta * r - r.powf(beta);
            assert!((d - remainder).abs() < 1e-12);
        }
    }
    // The 0.02 bound does not extend to β = 3 at the interval ends.
    let p = p1(0.0, 1.0, 3.0);
    let d = nll(&[1.1], &p).unwrap() - nll_stable(&[1.1], &p).unwrap();
    assert!((d - 0.031).abs() < 1e-9);
}

#[test]
fn sample_variance_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for &alpha in &[0.5, 1.0, 2.0] {
        for &beta in &[0.5, 1.0, 2.0, 5.0] {
            let p = p1(0.0, alpha, beta);
            let n = 1_000_000;
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let x = sample(&p, &mut rng)[0];
                s += x;
                s2 += x * x;
            }
            let mean = s / n as f64;
            let emp = s2 / n as f64 - mean * mean;
            let want = variance(&p)[0];
            assert!((emp / want - 1.0).abs() < 0.02, "α={alpha} β={beta}: {emp} vs {want}");
        }
    }
}

#[test]
fn sampling_is_seed_deterministic() {
    let p = GgdParams::new(vec![0.0, 1.0], vec![0.5, 2.0], vec![1.5, 0.7]).unwrap();
    let a = sample(&p, &mut ChaCha8Rng::seed_from_u64(5));
    let b = sample(&p, &mut ChaCha8Rng::seed_from_u64(5));
    assert_eq!(a, b);
}

#[test]
fn match_likelihood_grows_as_means_approach() {
    let pt = p1(0.0, 1.0, 2.0);
    let estimates: Vec<f64> = [2.0, 1.5, 1.0, 0.5, 0.0]
        .iter()
        .map(|&gap| {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            mc_match_likelihood(&p1(gap, 1.0, 2.0), &pt, 200_000, 0.05, &mut rng).unwrap()
        })
        .collect();
    for w in estimates.windows(2) {
        assert!(w[1] > w[0], "not increasing: {estimates:?}");
    }
    // Δz ~ N(gap, 1) for two unit-variance-½ Gaussians.
    let exact0 = 1.0 / (2.0 * PI).sqrt();
    assert!((estimates[4] / exact0 - 1.0).abs() < 0.1);
}

#[test]
fn minimizing_the_cross_loss_raises_the_match_likelihood() {
    // 1-D pair: the text prediction already sits on its own embedding; the
    // vision prediction starts on the image embedding and is fitted to the
    // caption through the cross term alone.
    let (z_v, z_t) = ([0.0], [1.0]);
    let pt = p1(1.0, 0.5, 2.0);
    let (mut mu, mut alpha, beta) = (0.0_f64, 1.0_f64, 2.0);
    let estimate = |mu: f64, alpha: f64| {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        mc_match_likelihood(&p1(mu, alpha, beta), &pt, 100_000, 0.05, &mut rng).unwrap()
    };
    let before = estimate(mu, alpha);
    let mut last = f64::INFINITY;
    for _ in 0..2000 {
        let pv = p1(mu, alpha, beta);
        let (value, g) = loss_cross(&pv, &z_t, &pt, &z_v, false).unwrap();
        assert!(value <= last + 1e-12);
        last = value;
        mu -= 0.01 * g.vision.mu[0];
        alpha = (alpha - 0.01 * g.vision.alpha[0]).max(0.2);
    }
    assert!((mu - 1.0).abs() < 1e-3, "μ did not converge: {mu}");
    let after = estimate(mu, alpha);
    assert!(after > before, "before {before}, after {after}");
}

#[test]
fn ln_gamma_agrees_with_the_half_integer_closed_form() {
    // Γ(n + ½) = (2n)! √π / (4^n n!)
    let mut fact = [1.0_f64; 21];
    for i in 1..21 {
        fact[i] = fact[i - 1] * i as f64;
    }
    for n in 0..10 {
        let want = (fact[2 * n] * PI.sqrt() / (4.0_f64.powi(n as i32) * fact[n])).ln();
        let got: f64 = ln_gamma(n as f64 + 0.5).unwrap();
        assert!((got - want).abs() < 1e-12 * want.abs().max(1.0), "n={n}");
    }
}
