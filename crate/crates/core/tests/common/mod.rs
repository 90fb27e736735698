#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use sparsetext::sampling::SampleRng;
use sparsetext::tinylm::{training_examples, ModelDims, ModelParams, TokenizerMode, Vocab};
use sparsetext::ScoreVector;

pub fn random_scores(rng: &mut SampleRng, v: usize, scale: f64) -> ScoreVector {
    ScoreVector::new((0..v).map(|_| rng.uniform_in(-scale, scale)).collect()).unwrap()
}

/// Scores with a random scale drawn log-uniformly from `[0.01, 100]`.
pub fn random_scaled_scores(rng: &mut SampleRng, v: usize) -> ScoreVector {
    let scale = 10f64.powf(rng.uniform_in(-2.0, 2.0));
    random_scores(rng, v, scale)
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Softmax through log-sum-exp.
pub fn oracle_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| (v - lse).exp()).collect()
}

/// Simplex projection by repeatedly dropping coordinates below the
/// current threshold (Michelot's algorithm), no sorting involved.
pub fn oracle_sparsemax(z: &[f64]) -> Vec<f64> {
    let mut active: Vec<usize> = (0..z.len()).collect();
    loop {
        let tau = (active.iter().map(|&i| z[i]).sum::<f64>() - 1.0) / active.len() as f64;
        let kept: Vec<usize> = active.iter().copied().filter(|&i| z[i] > tau).collect();
        if kept.len() == active.len() {
            let mut p = vec![0.0; z.len()];
            for i in kept {
                p[i] = z[i] - tau;
            }
            return p;
        }
        active = kept;
    }
}

pub fn ln_kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum()
}

/// Lines `a b c x w<i> y` cycling over four fillers: with a two-token
/// context only `(c, x)` is ambiguous.
pub fn adaptivity_corpus(lines: usize) -> String {
    (0..lines)
        .map(|i| format!("a b c x w{} y\n", i % 4 + 1))
        .collect()
}

/// Three sentence templates, each with one slot filled with skewed
/// probabilities.
pub fn desk_corpus(lines: usize, seed: u64) -> String {
    const TEMPLATES: [(&str, &str, [&str; 5]); 3] = [
        ("we saw a", "car", ["red", "blue", "green", "old", "new"]),
        (
            "they ate",
            "today",
            ["rice", "bread", "soup", "fish", "cake"],
        ),
        (
            "she reads",
            "daily",
            ["books", "news", "poems", "notes", "mail"],
        ),
    ];
    const WEIGHTS: [f64; 5] = [0.4, 0.3, 0.15, 0.1, 0.05];
    let mut rng = SampleRng::seed_from_u64(seed);
    let mut text = String::new();
    for _ in 0..lines {
        let (head, tail, slot) = TEMPLATES[rng.below(TEMPLATES.len())];
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut pick = slot.len() - 1;
        for (i, w) in WEIGHTS.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = i;
                break;
            }
        }
        text.push_str(&format!("{head} {} {tail}\n", slot[pick]));
    }
    text
}

/// Distinct continuations observed after each context.
pub fn continuation_sets(corpus: &[usize], window: usize) -> BTreeMap<Vec<usize>, BTreeSet<usize>> {
    let mut sets: BTreeMap<Vec<usize>, BTreeSet<usize>> = BTreeMap::new();
    for (ctx, gold) in training_examples(corpus, window) {
        sets.entry(ctx).or_default().insert(gold);
    }
    sets
}

pub fn small_model(text: &str, dims: ModelDims, seed: u64, scale: f64) -> ModelParams {
    let vocab = Vocab::build(text, TokenizerMode::Whitespace);
    let init = ModelParams::init(vocab.clone(), dims, &mut SampleRng::seed_from_u64(seed)).unwrap();
    let w = init.weights().iter().map(|w| w * scale).collect();
    ModelParams::from_parts(vocab, dims, w).unwrap()
}
