mod common;

use proptest::prelude::*;
use sparsetext::sampling::{
    generate, next_token_distribution, sample, DecoderConfig, LanguageModel, SampleRng, Strategy,
};
use sparsetext::transforms::softmax;
use sparsetext::{Distribution, Result, ScoreVector, TokenSequence};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Bigram table model: scores depend only on the last token.
struct Bigram {
    table: Vec<Vec<f64>>,
    eos: Option<usize>,
}

impl LanguageModel for Bigram {
    fn vocab_size(&self) -> usize {
        self.table.len()
    }

    fn context_window(&self) -> usize {
        1
    }

    fn eos_id(&self) -> Option<usize> {
        self.eos
    }

    fn scores(&self, context: &[usize]) -> Result<ScoreVector> {
        ScoreVector::new(self.table[*context.last().unwrap_or(&0)].clone())
    }
}

fn bigram(v: usize, seed: u64, eos: Option<usize>) -> Bigram {
    let mut rng = SampleRng::seed_from_u64(seed);
    Bigram {
        table: (0..v)
            .map(|_| common::random_scores(&mut rng, v, 3.0).into_inner())
            .collect(),
        eos,
    }
}

fn chi_square_passes(p: &Distribution, draws: usize, seed: u64) -> bool {
    let mut rng = SampleRng::seed_from_u64(seed);
    let mut counts = vec![0usize; p.vocab_size()];
    for _ in 0..draws {
        counts[sample(p, &mut rng)] += 1;
    }
    if counts
        .iter()
        .enumerate()
        .any(|(id, &c)| c > 0 && p.prob(id) == 0.0)
    {
        return false;
    }
    if p.support_size() == 1 {
        return true;
    }
    let stat: f64 = p
        .iter()
        .map(|(id, q)| {
            let e = q * draws as f64;
            (counts[id] as f64 - e).powi(2) / e
        })
        .sum();
    let critical = ChiSquared::new((p.support_size() - 1) as f64)
        .unwrap()
        .inverse_cdf(1.0 - 1e-3);
    stat <= critical
}

#[test]
fn sampler_matches_distribution() {
    let mut rng = SampleRng::seed_from_u64(12);
    for i in 0..10 {
        let z = common::random_scores(&mut rng, 3 + i, 1.5);
        for s in [
            Strategy::Softmax,
            Strategy::Entmax(1.5),
            Strategy::TopK(3),
            Strategy::Nucleus(0.8),
        ] {
            let p = next_token_distribution(&z, &s).unwrap();
            assert!(chi_square_passes(&p, 50_000, i as u64), "{s} on {z:?}");
        }
    }
}

#[test]
fn uniform_draws_are_in_unit_interval() {
    let mut rng = SampleRng::seed_from_u64(0);
    for _ in 0..100_000 {
        let u = rng.uniform();
        assert!((0.0..1.0).contains(&u));
    }
    let mut counts = [0usize; 7];
    for _ in 0..70_000 {
        counts[rng.below(7)] += 1;
    }
    assert!(
        counts.iter().all(|&c| (9_000..11_000).contains(&c)),
        "{counts:?}"
    );
}

#[test]
fn same_seed_same_generation() {
    let model = bigram(20, 1, Some(3));
    let ctx = TokenSequence::new(vec![5], 20).unwrap();
    for s in [
        Strategy::Softmax,
        Strategy::Entmax(1.5),
        Strategy::Nucleus(0.9),
        Strategy::Temperature(0.7),
    ] {
        let cfg = DecoderConfig::new(s, 30, 99).unwrap();
        assert_eq!(
            generate(&model, &ctx, &cfg).unwrap(),
            generate(&model, &ctx, &cfg).unwrap()
        );
    }
}

#[test]
fn greedy_ignores_seed() {
    let model = bigram(20, 2, None);
    let ctx = TokenSequence::new(vec![4], 20).unwrap();
    let a = generate(
        &model,
        &ctx,
        &DecoderConfig::new(Strategy::Greedy, 25, 1).unwrap(),
    )
    .unwrap();
    let b = generate(
        &model,
        &ctx,
        &DecoderConfig::new(Strategy::Greedy, 25, 2).unwrap(),
    )
    .unwrap();
    assert_eq!(a, b);
    assert!(a.support_sizes.iter().all(|&s| s == 1));
    // Each greedy step follows the argmax of the previous token's row.
    let mut prev = 4;
    for &t in a.tokens.ids() {
        assert_eq!(
            t,
            ScoreVector::new(model.table[prev].clone())
                .unwrap()
                .argmax()
        );
        prev = t;
    }
}

#[test]
fn stops_after_eos_and_respects_max_len() {
    let mut table = vec![vec![0.0; 4]; 4];
    table[0][2] = 10.0;
    table[2][1] = 10.0;
    let model = Bigram {
        table,
        eos: Some(1),
    };
    let ctx = TokenSequence::new(vec![0], 4).unwrap();
    let out = generate(
        &model,
        &ctx,
        &DecoderConfig::new(Strategy::Greedy, 10, 0).unwrap(),
    )
    .unwrap();
    assert_eq!(out.tokens.ids(), &[2, 1]);
    let ctx6 = TokenSequence::new(vec![0], 6).unwrap();
    let cfg = DecoderConfig::new(Strategy::Softmax, 7, 0).unwrap();
    let capped = generate(&bigram(6, 3, None), &ctx6, &cfg).unwrap();
    assert_eq!(capped.tokens.len(), 7);
    assert_eq!(capped.support_sizes, vec![6; 7]);
}

#[test]
fn vocabulary_mismatch_is_rejected() {
    let model = bigram(5, 4, None);
    let ctx = TokenSequence::new(vec![0], 6).unwrap();
    let cfg = DecoderConfig::new(Strategy::Softmax, 3, 0).unwrap();
    assert!(generate(&model, &ctx, &cfg).is_err());
}

#[test]
fn nucleus_one_and_topk_full_equal_softmax() {
    let mut rng = SampleRng::seed_from_u64(8);
    for v in [2, 17, 300] {
        let z = common::random_scores(&mut rng, v, 5.0);
        let p = softmax(&z, 1.0).unwrap();
        assert_eq!(
            next_token_distribution(&z, &Strategy::Nucleus(1.0)).unwrap(),
            p
        );
        assert_eq!(next_token_distribution(&z, &Strategy::TopK(v)).unwrap(), p);
    }
}

proptest! {
    #[test]
    fn samples_stay_on_support(w in prop::collection::vec(0.0..1.0f64, 1..30), seed in any::<u64>()) {
        prop_assume!(w.iter().any(|&x| x > 0.0));
        let p = Distribution::from_weights(&w).unwrap();
        let mut rng = SampleRng::seed_from_u64(seed);
        for _ in 0..200 {
            prop_assert!(p.prob(sample(&p, &mut rng)) > 0.0);
        }
    }

    #[test]
    fn strategy_names_round_trip(k in 1usize..100, p in 0.01..1.0f64, a in 1.0..4.0f64, t in 0.1..5.0f64) {
        for s in [Strategy::Greedy, Strategy::Softmax, Strategy::TopK(k), Strategy::Nucleus(p), Strategy::Entmax(a), Strategy::Temperature(t)] {
            prop_assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
    }
}
