use cellflow_core::transfer::kmm::{kmm_weights, KmmConfig};
use cellflow_core::transfer::mmd::{mmd2, mmd2_with, MmdEstimator};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * sd * sd)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

#[test]
fn identical_samples_get_unit_mean_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = points(&mut rng, 80, 3);
    let r = kmm_weights(&x, &x, &KmmConfig::default()).unwrap();
    let mean = r.alpha.iter().sum::<f64>() / r.alpha.len() as f64;
    assert!((mean - 1.0).abs() <= 0.05, "mean weight {mean}");
    assert!(r.sum_residual <= 1e-9);
    assert!(r.box_residual <= 1e-12);
    assert!(r.alpha.iter().all(|&a| (0.0..=1000.0).contains(&a)));
}

#[test]
fn shifted_gaussian_weights_follow_density_ratio() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let src = Normal::new(0.0, 1.0).unwrap();
    let tgt = Normal::new(0.5, 0.6).unwrap();
    let xs: Vec<Vec<f64>> = (0..200).map(|_| vec![src.sample(&mut rng)]).collect();
    let xt: Vec<Vec<f64>> = (0..200).map(|_| vec![tgt.sample(&mut rng)]).collect();
    let r = kmm_weights(&xs, &xt, &KmmConfig::default()).unwrap();
    let ratio: Vec<f64> = xs
        .iter()
        .map(|x| normal_pdf(x[0], 0.5, 0.6) / normal_pdf(x[0], 0.0, 1.0))
        .collect();
    let rho = spearman(&r.alpha, &ratio);
    assert!(rho >= 0.8, "rank correlation {rho}");
    assert!(r.sum_residual <= 1e-9 && r.box_residual <= 1e-12);
}

#[test]
fn two_point_closed_form() {
    let a = vec![vec![0.3, -1.0]];
    let b = vec![vec![1.1, 0.5]];
    for gamma in [0.1, 1.0, 7.5] {
        let d: f64 = 0.8f64.powi(2) + 1.5f64.powi(2);
        let expected = 2.0 - 2.0 * (-d / gamma).exp();
        assert!((mmd2(&a, &b, gamma).unwrap() - expected).abs() <= 1e-12);
    }
}

fn sample() -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 2), 1..12)
}

proptest! {
    #[test]
    fn self_distance_is_zero(a in sample(), gamma in 0.05f64..20.0) {
        prop_assert!(mmd2(&a, &a, gamma).unwrap() <= 1e-12);
    }

    #[test]
    fn symmetric(a in sample(), b in sample(), gamma in 0.05f64..20.0) {
        for est in [MmdEstimator::Biased, MmdEstimator::Unbiased] {
            if let (Ok(x), Ok(y)) = (mmd2_with(&a, &b, gamma, est), mmd2_with(&b, &a, gamma, est)) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn decreasing_in_gamma(
        a in proptest::collection::vec(-3.0f64..3.0, 2),
        b in proptest::collection::vec(-3.0f64..3.0, 2),
        g in 0.05f64..10.0,
        factor in 1.01f64..10.0,
    ) {
        let (a, b) = (vec![a], vec![b]);
        prop_assert!(mmd2(&a, &b, g * factor).unwrap() <= mmd2(&a, &b, g).unwrap() + 1e-15);
    }
}
