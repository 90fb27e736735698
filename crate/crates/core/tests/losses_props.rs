use proptest::prelude::*;
use sparsetext::losses::{corpus_loss, entmax_loss, entmax_loss_with, OneHotTarget};
use sparsetext::tinylm::{relative_error, FD_STEP};
use sparsetext::{EntmaxParams, ScoreVector};

fn instance() -> impl Strategy<Value = (Vec<f64>, usize)> {
    prop::collection::vec(-5.0..5.0f64, 2..50).prop_flat_map(|z| {
        let v = z.len();
        (Just(z), 0..v)
    })
}

fn loss(z: &[f64], gold: usize, alpha: f64) -> f64 {
    let params = EntmaxParams::with_solver(alpha, 1e-13, 200).unwrap();
    let target = OneHotTarget::new(gold, z.len()).unwrap();
    entmax_loss_with(&ScoreVector::new(z.to_vec()).unwrap(), target, &params)
        .unwrap()
        .value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn nonnegative((z, gold) in instance(), alpha in 1.0..3.0f64) {
        prop_assert!(loss(&z, gold, alpha) >= -1e-12);
    }

    #[test]
    fn gradient_is_p_minus_e((z, gold) in instance(), alpha in 1.0..3.0f64) {
        let sv = ScoreVector::new(z.clone()).unwrap();
        let l = entmax_loss(&sv, OneHotTarget::new(gold, z.len()).unwrap(), alpha).unwrap();
        let mut expected = l.dist.to_dense();
        expected[gold] -= 1.0;
        prop_assert_eq!(&l.grad, &expected);
        prop_assert!(l.grad.iter().sum::<f64>().abs() <= 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences(
        (z, gold) in instance(),
        alpha in prop::sample::select(vec![1.0, 1.3, 1.5, 2.0]),
        pick in any::<prop::sample::Index>(),
    ) {
        let i = pick.index(z.len());
        let sv = ScoreVector::new(z.clone()).unwrap();
        let here = entmax_loss(&sv, OneHotTarget::new(gold, z.len()).unwrap(), alpha).unwrap();
        let mut up = z.clone();
        up[i] += FD_STEP;
        let mut down = z.clone();
        down[i] -= FD_STEP;
        let params = EntmaxParams::new(alpha).unwrap();
        let support = |w: &[f64]| {
            sparsetext::transforms::entmax(&ScoreVector::new(w.to_vec()).unwrap(), &params)
                .unwrap()
                .support()
                .to_vec()
        };
        // Skip kinks where the support changes inside the stencil.
        prop_assume!(support(&up) == here.dist.support() && support(&down) == here.dist.support());
        let numeric = (loss(&up, gold, alpha) - loss(&down, gold, alpha)) / (2.0 * FD_STEP);
        prop_assert!(relative_error(here.grad[i], numeric) <= 1e-4,
            "analytic {} numeric {}", here.grad[i], numeric);
    }

    #[test]
    fn convex_along_segments(
        (z, gold) in instance(),
        dir in prop::collection::vec(-5.0..5.0f64, 50),
        t in 0.0..1.0f64,
        alpha in 1.0..3.0f64,
    ) {
        let w: Vec<f64> = z.iter().zip(&dir).map(|(a, d)| a + d).collect();
        let mid: Vec<f64> = z.iter().zip(&w).map(|(a, b)| (1.0 - t) * a + t * b).collect();
        let chord = (1.0 - t) * loss(&z, gold, alpha) + t * loss(&w, gold, alpha);
        prop_assert!(loss(&mid, gold, alpha) <= chord + 1e-9);
    }

    #[test]
    fn zero_beyond_margin((z, gold) in instance(), alpha in 1.1..3.0f64, extra in 1e-3..5.0f64) {
        let mut z = z;
        let rival = z.iter().enumerate().filter(|(j, _)| *j != gold).map(|(_, s)| *s)
            .fold(f64::NEG_INFINITY, f64::max);
        z[gold] = rival + 1.0 / (alpha - 1.0) + extra;
        let sv = ScoreVector::new(z.clone()).unwrap();
        let l = entmax_loss(&sv, OneHotTarget::new(gold, z.len()).unwrap(), alpha).unwrap();
        prop_assert_eq!(l.value, 0.0);
        prop_assert_eq!(l.dist.support(), &[gold]);
    }

    #[test]
    fn positive_inside_margin((z, gold) in instance(), alpha in 1.1..3.0f64, short in 0.05..0.95f64) {
        let mut z = z;
        let rival = z.iter().enumerate().filter(|(j, _)| *j != gold).map(|(_, s)| *s)
            .fold(f64::NEG_INFINITY, f64::max);
        z[gold] = rival + short / (alpha - 1.0);
        prop_assert!(loss(&z, gold, alpha) > 0.0);
    }
}

#[test]
fn alpha_one_is_negative_log_likelihood() {
    let z = [0.5, -1.0, 2.0, 0.0];
    let lse = z.iter().map(|v: &f64| v.exp()).sum::<f64>().ln();
    for gold in 0..4 {
        assert!((loss(&z, gold, 1.0) - (lse - z[gold])).abs() < 1e-12);
    }
}

#[test]
fn corpus_loss_sums_positions() {
    let zs: Vec<ScoreVector> = [[1.0, 0.0, -1.0], [0.0, 3.0, 0.5]]
        .iter()
        .map(|z| ScoreVector::new(z.to_vec()).unwrap())
        .collect();
    let xs = [
        OneHotTarget::new(2, 3).unwrap(),
        OneHotTarget::new(1, 3).unwrap(),
    ];
    let total = corpus_loss(&zs, &xs, 1.5).unwrap();
    let parts: f64 = zs
        .iter()
        .zip(&xs)
        .map(|(z, &x)| entmax_loss(z, x, 1.5).unwrap().value)
        .sum();
    assert!((total - parts).abs() < 1e-12);
    assert!(corpus_loss(&zs, &xs[..1], 1.5).is_err());
}
