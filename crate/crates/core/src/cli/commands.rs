use serde_json::json;

use crate::error::Error;
use crate::metrics::{
    epsilon_perplexity, evaluate, metric_curves, unit_grid, MetricsReport, TokenEvalRecord,
    DEFAULT_DISTINCT_NS,
};
use crate::sampling::{
    generate, next_token_distribution, sample, DecoderConfig, SampleRng, Strategy,
};
use crate::tinylm::{self, ModelDims, ModelParams, TrainConfig, Vocab};
use crate::tokens::TokenSequence;
use crate::transforms::ScoreVector;

use super::formats::{
    csv_float, csv_line, decode_checkpoint, encode_checkpoint, format_logit_records,
    parse_logit_records, read_file, read_text, report_to_string, write_file, write_with_manifest,
    LogitRecords, RunManifest,
};
use super::{CliError, CurvesArgs, EvalArgs, GenerateArgs, SweepArgs, TrainArgs};

fn usage(e: Error) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub epoch_losses: Vec<f64>,
    pub manifest: RunManifest,
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainSummary, CliError> {
    let config = TrainConfig {
        alpha: args.alpha,
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        seed: args.seed,
        batch_size: args.batch_size,
    };
    config.validate().map_err(usage)?;
    let dims = ModelDims {
        context_window: args.context,
        embed_dim: args.embed_dim,
        hidden_dim: args.hidden_dim,
    };
    dims.validate().map_err(usage)?;

    let raw = read_file(&args.corpus)?;
    let text = std::str::from_utf8(&raw)
        .map_err(|e| CliError::format(&args.corpus, format!("not UTF-8: {e}")))?;
    let vocab = Vocab::build(text, args.tokenizer);
    let corpus = vocab.encode_corpus(text);
    let outcome = tinylm::train(&corpus, vocab, dims, &config)?;

    let mut manifest = RunManifest::new(
        "train",
        json!({
            "alpha": args.alpha,
            "batch_size": args.batch_size,
            "context": args.context,
            "embed_dim": args.embed_dim,
            "epochs": args.epochs,
            "hidden_dim": args.hidden_dim,
            "learning_rate": args.learning_rate,
            "tokenizer": args.tokenizer.as_str(),
        }),
        Some(args.seed),
    );
    manifest.input(&args.corpus, &raw);
    let manifest = write_with_manifest(&args.out, &encode_checkpoint(&outcome.params), manifest)?;
    Ok(TrainSummary {
        epoch_losses: outcome.epoch_losses,
        manifest,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOutput {
    pub text: String,
    pub tokens: TokenSequence,
    pub support_sizes: Vec<usize>,
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<GenerateOutput, CliError> {
    let strategy = args.strategy.resolve()?;
    let config = DecoderConfig::new(strategy, args.max_len, args.seed).map_err(usage)?;
    let raw = read_file(&args.checkpoint)?;
    let model = decode_checkpoint(&raw, &args.checkpoint)?;
    let context = model.vocab().encode_prompt(&args.prompt);
    let generated = generate(&model, &context, &config)?;

    let mut text = model.vocab().decode(generated.tokens.ids());
    if !text.ends_with('\n') {
        text.push('\n');
    }
    if let Some(out) = &args.out {
        let sidecar: String = generated
            .support_sizes
            .iter()
            .map(|s| format!("{s}\n"))
            .collect();
        let mut manifest = RunManifest::new(
            "generate",
            json!({
                "max_len": args.max_len,
                "prompt": args.prompt,
                "strategy": strategy.to_string(),
            }),
            Some(args.seed),
        );
        manifest.input(&args.checkpoint, &raw);
        write_with_manifest(out, sidecar.as_bytes(), manifest)?;
    }
    Ok(GenerateOutput {
        text,
        tokens: generated.tokens,
        support_sizes: generated.support_sizes,
    })
}

/// Scores of every corpus position under the model, with gold ids.
pub fn corpus_logits(model: &ModelParams, corpus_text: &str) -> Result<LogitRecords, CliError> {
    let corpus = model.vocab().encode_corpus(corpus_text);
    if corpus.is_empty() {
        return Err(Error::EmptyInput("corpus").into());
    }
    let examples = tinylm::training_examples(corpus.ids(), model.dims().context_window);
    let mut golds = Vec::with_capacity(examples.len());
    let mut scores = Vec::with_capacity(examples.len());
    for (ctx, gold) in examples {
        scores.push(model.forward(&ctx)?);
        golds.push(gold);
    }
    Ok(LogitRecords { golds, scores })
}

/// Applies the strategy at every position, draws one decoded token per
/// position, and computes the report.
pub fn evaluate_logits(
    golds: &[usize],
    scores: &[ScoreVector],
    strategy: &Strategy,
    windows: &[usize],
    epsilon: Option<f64>,
    seed: u64,
) -> Result<MetricsReport, CliError> {
    if golds.is_empty() {
        return Err(Error::EmptyInput("evaluation records").into());
    }
    let vocab_size = scores[0].len();
    let mut rng = SampleRng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(golds.len());
    let mut predicted = TokenSequence::empty(vocab_size);
    for (&gold, z) in golds.iter().zip(scores) {
        let dist = next_token_distribution(z, strategy)?;
        predicted.push(sample(&dist, &mut rng))?;
        records.push(TokenEvalRecord::new(gold, dist)?);
    }
    let mut report = evaluate(&records, &predicted, windows, &DEFAULT_DISTINCT_NS)?;
    if let Some(eps) = epsilon {
        report.eps_ppl = epsilon_perplexity(&records, eps).map_err(usage)?;
        report.eps_star = eps;
        report.lambda_star = if eps.is_infinite() {
            1.0
        } else {
            let ev = eps * vocab_size as f64;
            ev / (1.0 + ev)
        };
    }
    Ok(report)
}

fn check_windows(windows: &[usize]) -> Result<(), CliError> {
    if windows.is_empty() || windows.contains(&0) {
        return Err(CliError::Usage("--windows needs positive integers".into()));
    }
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<MetricsReport, CliError> {
    let strategy = args.strategy.resolve()?;
    check_windows(&args.windows)?;
    if let Some(e) = args.epsilon.filter(|e| !(*e >= 0.0)) {
        return Err(CliError::Usage(format!("--epsilon must be >= 0, got {e}")));
    }

    let mut manifest = RunManifest::new(
        "eval",
        json!({
            "epsilon": args.epsilon,
            "strategy": strategy.to_string(),
            "vocab_size": args.vocab_size,
            "windows": args.windows,
        }),
        Some(args.seed),
    );
    let logits = match (&args.records, &args.checkpoint, &args.corpus) {
        (Some(path), None, None) => {
            let raw = read_file(path)?;
            manifest.input(path, &raw);
            let text = std::str::from_utf8(&raw)
                .map_err(|e| CliError::format(path, format!("not UTF-8: {e}")))?;
            parse_logit_records(text, path)?
        }
        (None, Some(ckpt), Some(corpus)) => {
            let raw = read_file(ckpt)?;
            let model = decode_checkpoint(&raw, ckpt)?;
            manifest.input(ckpt, &raw);
            let text = read_text(corpus)?;
            manifest.input(corpus, text.as_bytes());
            let logits = corpus_logits(&model, &text)?;
            if let Some(dump) = &args.dump_records {
                write_file(dump, format_logit_records(&logits).as_bytes())?;
            }
            logits
        }
        _ => {
            return Err(CliError::Usage(
                "give either --records or both --checkpoint and --corpus".into(),
            ))
        }
    };
    let found = logits
        .vocab_size()
        .ok_or_else(|| CliError::Runtime("no records to evaluate".into()))?;
    if let Some(expected) = args.vocab_size.filter(|&v| v != found) {
        return Err(CliError::Usage(format!(
            "vocabulary size mismatch: --vocab-size {expected}, input has {found}"
        )));
    }

    let report = evaluate_logits(
        &logits.golds,
        &logits.scores,
        &strategy,
        &args.windows,
        args.epsilon,
        args.seed,
    )?;
    write_with_manifest(&args.out, report_to_string(&report)?.as_bytes(), manifest)?;
    Ok(report)
}

/// Default parameter grids per strategy.
pub fn default_grid(strategy: &str) -> Option<Vec<f64>> {
    match strategy {
        "entmax" => Some(vec![1.1, 1.2, 1.3, 1.5]),
        "topk" => Some(vec![5.0, 10.0, 20.0, 50.0, 100.0]),
        "nucleus" => Some(vec![0.5, 0.8, 0.85, 0.9, 0.95, 0.97]),
        "temperature" => Some(vec![0.7, 0.8, 0.9, 0.95, 0.97]),
        _ => None,
    }
}

fn sweep_header(windows: &[usize]) -> Vec<String> {
    let mut h: Vec<String> = [
        "param",
        "tokens",
        "sp",
        "js",
        "ppl",
        "eps_ppl",
        "eps_star",
        "lambda_star",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend(windows.iter().map(|l| format!("rep_{l}")));
    h.extend(windows.iter().map(|l| format!("wrep_{l}")));
    h.extend(DEFAULT_DISTINCT_NS.iter().map(|n| format!("distinct_{n}")));
    h.extend(
        [
            "support_mean",
            "support_median",
            "support_sd",
            "support_min",
            "support_max",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    h
}

fn sweep_row(param: f64, r: &MetricsReport) -> Vec<String> {
    let mut row = vec![
        csv_float(param),
        r.tokens.to_string(),
        csv_float(r.sp),
        csv_float(r.js),
        csv_float(r.ppl),
        csv_float(r.eps_ppl),
        csv_float(r.eps_star),
        csv_float(r.lambda_star),
    ];
    row.extend(r.rep.values().map(|&v| csv_float(v)));
    row.extend(r.wrep.values().map(|&v| csv_float(v)));
    row.extend(r.distinct.values().map(|&v| csv_float(v)));
    let s = &r.support_stats;
    row.extend([
        csv_float(s.mean),
        csv_float(s.median),
        csv_float(s.sd),
        s.min.to_string(),
        s.max.to_string(),
    ]);
    row
}

/// One report per grid value, in grid order.
pub fn sweep_reports(
    logits: &LogitRecords,
    strategy: &str,
    grid: &[f64],
    windows: &[usize],
    seed: u64,
) -> Result<Vec<(f64, MetricsReport)>, CliError> {
    if grid.is_empty() {
        return Err(CliError::Usage("empty grid".into()));
    }
    grid.iter()
        .map(|&param| {
            let s = Strategy::from_parts(strategy, Some(param)).map_err(usage)?;
            let report = evaluate_logits(&logits.golds, &logits.scores, &s, windows, None, seed)?;
            Ok((param, report))
        })
        .collect()
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<String, CliError> {
    check_windows(&args.windows)?;
    let grid = match &args.grid {
        Some(g) => g.clone(),
        None => default_grid(&args.strategy).ok_or_else(|| {
            CliError::Usage(format!(
                "strategy `{}` has no parameter to sweep; use temperature, topk, nucleus or entmax",
                args.strategy
            ))
        })?,
    };
    let mut windows = args.windows.clone();
    windows.sort_unstable();
    windows.dedup();

    let raw = read_file(&args.checkpoint)?;
    let model = decode_checkpoint(&raw, &args.checkpoint)?;
    let text = read_text(&args.corpus)?;
    let logits = corpus_logits(&model, &text)?;
    let reports = sweep_reports(&logits, &args.strategy, &grid, &windows, args.seed)?;

    let mut csv = csv_line(&sweep_header(&windows));
    for (param, report) in &reports {
        csv.push_str(&csv_line(&sweep_row(*param, report)));
    }
    let mut manifest = RunManifest::new(
        "sweep",
        json!({
            "grid": grid,
            "strategy": args.strategy,
            "windows": windows,
        }),
        Some(args.seed),
    );
    manifest.input(&args.checkpoint, &raw);
    manifest.input(&args.corpus, text.as_bytes());
    write_with_manifest(&args.out, csv.as_bytes(), manifest)?;
    Ok(csv)
}

pub fn cmd_curves(args: &CurvesArgs) -> Result<String, CliError> {
    if args.grid == 0 {
        return Err(CliError::Usage("--grid must be positive".into()));
    }
    let rows =
        metric_curves(&unit_grid(args.grid), &args.epsilon, args.vocab_size).map_err(usage)?;
    let mut csv = csv_line(&["p", "epsilon", "eps_ppl", "sp", "js"].map(String::from));
    for r in rows {
        csv.push_str(&csv_line(&[
            csv_float(r.p),
            csv_float(r.epsilon),
            csv_float(r.eps_ppl),
            csv_float(r.sp),
            csv_float(r.js),
        ]));
    }
    if let Some(out) = &args.out {
        let manifest = RunManifest::new(
            "curves",
            json!({
                "epsilon": args.epsilon,
                "grid": args.grid,
                "vocab_size": args.vocab_size,
            }),
            None,
        );
        write_with_manifest(out, csv.as_bytes(), manifest)?;
    }
    Ok(csv)
}
