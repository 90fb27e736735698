mod common;

use sparsetext::cli::formats::{decode_checkpoint, encode_checkpoint};
use sparsetext::losses::ScoreLoss;
use sparsetext::sampling::SampleRng;
use sparsetext::tinylm::{
    finite_diff_check, train, train_with_loss, training_examples, ModelDims, ModelParams,
    TokenizerMode, TrainConfig, Vocab, STOP_ID,
};
use sparsetext::transforms::{entmax, softmax};
use sparsetext::{EntmaxParams, Result, ScoreVector};

/// Negative log-likelihood written out directly, as an oracle for α = 1.
struct Nll;

impl ScoreLoss for Nll {
    fn evaluate(&self, z: &ScoreVector, gold: usize) -> Result<(f64, Vec<f64>)> {
        let v = z.values();
        let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        let mut grad: Vec<f64> = v.iter().map(|x| (x - lse).exp()).collect();
        grad[gold] -= 1.0;
        Ok((lse - v[gold], grad))
    }
}

fn dims(c: usize) -> ModelDims {
    ModelDims {
        context_window: c,
        embed_dim: 8,
        hidden_dim: 16,
    }
}

#[test]
fn overfits_deterministic_corpus_with_sparsemax_loss() {
    let text = "a b c d\n".repeat(16);
    let vocab = Vocab::build(&text, TokenizerMode::Whitespace);
    let corpus = vocab.encode_corpus(&text);
    let config = TrainConfig {
        alpha: 2.0,
        learning_rate: 0.2,
        epochs: 150,
        seed: 1,
        batch_size: 4,
    };
    let model = train(&corpus, vocab, dims(2), &config).unwrap().params;
    let two = EntmaxParams::new(2.0).unwrap();
    for (ctx, gold) in training_examples(corpus.ids(), 2) {
        let p = entmax(&model.forward(&ctx).unwrap(), &two).unwrap();
        assert!(
            p.prob(gold) >= 0.99,
            "context {ctx:?}: p(gold) = {}",
            p.prob(gold)
        );
    }
}

#[test]
fn alpha_one_follows_the_nll_trajectory() {
    let text = common::desk_corpus(30, 2);
    let vocab = Vocab::build(&text, TokenizerMode::Whitespace);
    let corpus = vocab.encode_corpus(&text);
    let config = TrainConfig {
        alpha: 1.0,
        learning_rate: 0.5,
        epochs: 1,
        seed: 4,
        batch_size: 8,
    };
    let a = train(&corpus, vocab.clone(), dims(3), &config).unwrap();
    let b = train_with_loss(&corpus, vocab, dims(3), &config, &Nll).unwrap();
    assert!(a.step_losses.len() >= 10);
    for (step, (x, y)) in a
        .step_losses
        .iter()
        .zip(&b.step_losses)
        .take(10)
        .enumerate()
    {
        assert!((x - y).abs() <= 1e-6, "step {step}: {x} vs {y}");
    }
}

#[test]
fn training_reduces_loss_on_the_desk_corpus() {
    let text = common::desk_corpus(200, 7);
    let vocab = Vocab::build(&text, TokenizerMode::Whitespace);
    let corpus = vocab.encode_corpus(&text);
    let config = TrainConfig {
        alpha: 1.5,
        learning_rate: 0.1,
        epochs: 30,
        seed: 11,
        batch_size: 16,
    };
    let losses = train(&corpus, vocab, dims(2), &config)
        .unwrap()
        .epoch_losses;
    // Mean over consecutive windows of five epochs never goes up.
    let smoothed: Vec<f64> = losses
        .chunks(5)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    assert!(smoothed.windows(2).all(|w| w[1] <= w[0]), "{smoothed:?}");
    assert!(losses.last().unwrap() < &(0.5 * losses[0]));
}

#[test]
fn identical_config_gives_identical_checkpoint() {
    let text = common::desk_corpus(40, 1);
    let vocab = Vocab::build(&text, TokenizerMode::Whitespace);
    let corpus = vocab.encode_corpus(&text);
    let config = TrainConfig {
        alpha: 1.5,
        learning_rate: 0.1,
        epochs: 3,
        seed: 77,
        batch_size: 5,
    };
    let run = || {
        encode_checkpoint(
            &train(&corpus, vocab.clone(), dims(3), &config)
                .unwrap()
                .params,
        )
    };
    let first = run();
    assert_eq!(first, run());
    let other = TrainConfig { seed: 78, ..config };
    let different = encode_checkpoint(
        &train(&corpus, vocab.clone(), dims(3), &other)
            .unwrap()
            .params,
    );
    assert_ne!(first, different);
    let back = decode_checkpoint(&first, std::path::Path::new("mem")).unwrap();
    assert_eq!(encode_checkpoint(&back), first);
}

#[test]
fn gradient_check_on_random_models() {
    let text = common::desk_corpus(20, 9);
    let corpus = Vocab::build(&text, TokenizerMode::Whitespace).encode_corpus(&text);
    let ids = corpus.ids();
    for (alpha, seed) in [(1.0, 1), (1.5, 2), (1.2, 3)] {
        let model = common::small_model(&text, dims(3), seed, 10.0);
        let check = finite_diff_check(&model, &ids[4..7], ids[7], alpha, seed).unwrap();
        assert!(
            check.max_rel_error <= 1e-4,
            "α={alpha}: {}",
            check.max_rel_error
        );
    }
}

#[test]
fn gradient_check_sparsemax_away_from_kinks() {
    let text = common::desk_corpus(20, 9);
    let corpus = Vocab::build(&text, TokenizerMode::Whitespace).encode_corpus(&text);
    let ids = corpus.ids();
    let model = common::small_model(&text, dims(3), 5, 10.0);
    let (ctx, gold) = (&ids[4..7], ids[7]);
    let z = model.forward(ctx).unwrap();
    let p = entmax(&z, &EntmaxParams::new(2.0).unwrap()).unwrap();
    // Distance of every score from the threshold: the support cannot change
    // under a 1e-5 nudge when this is comfortably larger than the nudge's effect.
    let tau = p.iter().map(|(id, q)| z.values()[id] - q).next().unwrap();
    let slack = z
        .values()
        .iter()
        .map(|s| (s - tau).abs())
        .fold(f64::INFINITY, f64::min);
    assert!(slack > 1e-3, "slack {slack}");
    assert!(p.support_size() < z.len());
    let check = finite_diff_check(&model, ctx, gold, 2.0, 5).unwrap();
    assert!(check.max_rel_error <= 1e-4, "{}", check.max_rel_error);
}

#[test]
fn character_models_train_and_generate_stop() {
    let text = "abc\nabd\n".repeat(10);
    let vocab = Vocab::build(&text, TokenizerMode::Char);
    let corpus = vocab.encode_corpus(&text);
    let config = TrainConfig {
        alpha: 1.5,
        learning_rate: 0.3,
        epochs: 40,
        seed: 0,
        batch_size: 4,
    };
    let model = train(&corpus, vocab.clone(), dims(3), &config)
        .unwrap()
        .params;
    let z = model.forward(vocab.encode_prompt("ab").ids()).unwrap();
    let p = entmax(&z, &EntmaxParams::new(1.5).unwrap()).unwrap();
    assert!(
        p.prob(vocab.id("c")) > 0.2 && p.prob(vocab.id("d")) > 0.2,
        "{p:?}"
    );
    let after = model.forward(vocab.encode_prompt("abc").ids()).unwrap();
    assert_eq!(after.argmax(), STOP_ID);
}

#[test]
fn forward_matches_manual_computation() {
    let vocab = Vocab::build("x y\n", TokenizerMode::Whitespace);
    let d = ModelDims {
        context_window: 2,
        embed_dim: 2,
        hidden_dim: 3,
    };
    let model = ModelParams::init(vocab.clone(), d, &mut SampleRng::seed_from_u64(6)).unwrap();
    let w = model.weights();
    let v = vocab.len();
    let ctx = [3, 4];
    let input: Vec<f64> = ctx
        .iter()
        .flat_map(|&id| w[id * 2..id * 2 + 2].to_vec())
        .collect();
    let hw = v * 2;
    let hb = hw + 4 * 3;
    let ow = hb + 3;
    let ob = ow + 3 * v;
    let hidden: Vec<f64> = (0..3)
        .map(|u| (w[hb + u] + (0..4).map(|i| input[i] * w[hw + i * 3 + u]).sum::<f64>()).tanh())
        .collect();
    let expected: Vec<f64> = (0..v)
        .map(|o| w[ob + o] + (0..3).map(|u| hidden[u] * w[ow + u * v + o]).sum::<f64>())
        .collect();
    let got = model.forward(&ctx).unwrap();
    assert!(common::linf(got.values(), &expected) < 1e-14);
    let p = softmax(&got, 1.0).unwrap();
    assert_eq!(p.support_size(), v);
}
