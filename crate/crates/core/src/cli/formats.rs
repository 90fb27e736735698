//! On-disk formats.
//!
//! **Checkpoint** (binary, little-endian):
//!
//! ```text
//! magic      8 bytes   "SPTXTLM\0"
//! version    u32       1
//! tokenizer  u8        0 = whitespace, 1 = char
//! vocab      u64       V
//! context    u64       C
//! embed      u64       d
//! hidden     u64       h
//! tokens     V × (u32 byte length, UTF-8 bytes)
//! count      u64       number of weights
//! weights    count × f64: embedding, hidden weights, hidden bias,
//!                         output weights, output bias
//! ```
//!
//! **Logit records** (text, one record per line):
//!
//! ```text
//! <gold id>\t<score 0> <score 1> ... <score V-1>
//! ```
//!
//! Scores use the shortest decimal form that parses back to the same
//! `f64`. Blank lines and lines starting with `#` are skipped.
//!
//! **Reports and manifests** are pretty-printed JSON with a fixed key
//! order and a trailing newline. **CSV** files have a header row, `.` as
//! decimal separator and LF line endings; `+inf` is written as `inf`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::metrics::MetricsReport;
use crate::tinylm::{ModelDims, ModelParams, TokenizerMode, Vocab};
use crate::transforms::ScoreVector;

use super::CliError;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SPTXTLM\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    let bytes = read_file(path)?;
    String::from_utf8(bytes).map_err(|e| CliError::format(path, format!("not UTF-8: {e}")))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn encode_checkpoint(params: &ModelParams) -> Vec<u8> {
    let dims = params.dims();
    let vocab = params.vocab();
    let mut out = Vec::with_capacity(64 + params.num_params() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(vocab.mode().code());
    for v in [
        vocab.len(),
        dims.context_window,
        dims.embed_dim,
        dims.hidden_dim,
    ] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for token in vocab.tokens() {
        out.extend_from_slice(&(token.len() as u32).to_le_bytes());
        out.extend_from_slice(token.as_bytes());
    }
    out.extend_from_slice(&(params.num_params() as u64).to_le_bytes());
    for w in params.weights() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CliError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CliError::format(self.path, "truncated checkpoint"))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, CliError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<usize, CliError> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| CliError::format(self.path, "size does not fit in memory"))
    }
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<ModelParams, CliError> {
    let mut r = Reader {
        bytes,
        pos: 0,
        path,
    };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(CliError::format(path, "not a checkpoint (bad magic)"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CliError::format(
            path,
            format!("unsupported checkpoint version {version}"),
        ));
    }
    let mode_code = r.take(1)?[0];
    let mode = TokenizerMode::from_code(mode_code)
        .ok_or_else(|| CliError::format(path, format!("unknown tokenizer code {mode_code}")))?;
    let vocab_size = r.u64()?;
    let dims = ModelDims {
        context_window: r.u64()?,
        embed_dim: r.u64()?,
        hidden_dim: r.u64()?,
    };
    let mut tokens = Vec::with_capacity(vocab_size.min(1 << 20));
    for _ in 0..vocab_size {
        let len = r.u32()? as usize;
        let raw = r.take(len)?;
        let token = std::str::from_utf8(raw)
            .map_err(|e| CliError::format(path, format!("token is not UTF-8: {e}")))?;
        tokens.push(token.to_owned());
    }
    let count = r.u64()?;
    let raw = r.take(
        count
            .checked_mul(8)
            .ok_or_else(|| CliError::format(path, "bad weight count"))?,
    )?;
    let weights = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if r.pos != bytes.len() {
        return Err(CliError::format(path, "trailing bytes after weights"));
    }
    let vocab =
        Vocab::from_tokens(mode, tokens).map_err(|e| CliError::format(path, e.to_string()))?;
    ModelParams::from_parts(vocab, dims, weights).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn read_checkpoint(path: &Path) -> Result<ModelParams, CliError> {
    decode_checkpoint(&read_file(path)?, path)
}

/// Gold ids and score vectors in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitRecords {
    pub golds: Vec<usize>,
    pub scores: Vec<ScoreVector>,
}

impl LogitRecords {
    pub fn vocab_size(&self) -> Option<usize> {
        self.scores.first().map(ScoreVector::len)
    }
}

pub fn format_logit_records(records: &LogitRecords) -> String {
    let mut out = String::new();
    for (gold, z) in records.golds.iter().zip(&records.scores) {
        write!(out, "{gold}\t").expect("write to String");
        for (i, v) in z.values().iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            write!(out, "{v}").expect("write to String");
        }
        out.push('\n');
    }
    out
}

pub fn parse_logit_records(text: &str, path: &Path) -> Result<LogitRecords, CliError> {
    let mut golds = Vec::new();
    let mut scores: Vec<ScoreVector> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let at = |msg: String| CliError::format(path, format!("line {}: {msg}", n + 1));
        let (gold, rest) = line
            .split_once('\t')
            .ok_or_else(|| at("expected `<gold>\\t<scores>`".into()))?;
        let gold: usize = gold
            .trim()
            .parse()
            .map_err(|e| at(format!("bad gold id `{gold}`: {e}")))?;
        let values = rest
            .split_ascii_whitespace()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| at(format!("bad score `{s}`: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let z = ScoreVector::new(values).map_err(|e| at(e.to_string()))?;
        if let Some(first) = scores.first() {
            if first.len() != z.len() {
                return Err(at(format!(
                    "{} scores, earlier records have {}",
                    z.len(),
                    first.len()
                )));
            }
        }
        if gold >= z.len() {
            return Err(at(format!(
                "gold id {gold} out of range for {} scores",
                z.len()
            )));
        }
        golds.push(gold);
        scores.push(z);
    }
    Ok(LogitRecords { golds, scores })
}

pub fn read_logit_records(path: &Path) -> Result<LogitRecords, CliError> {
    parse_logit_records(&read_text(path)?, path)
}

pub fn report_to_string(report: &MetricsReport) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(report)
        .map_err(|e| CliError::Runtime(format!("cannot serialize report: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn parse_report(text: &str, path: &Path) -> Result<MetricsReport, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn read_report(path: &Path) -> Result<MetricsReport, CliError> {
    parse_report(&read_text(path)?, path)
}

/// Provenance written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    /// Input path to SHA-256 hex digest.
    pub inputs: BTreeMap<String, String>,
    /// Output path to SHA-256 hex digest.
    pub outputs: BTreeMap<String, String>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            command: command.to_owned(),
            config,
            seed,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        }
    }

    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs
            .insert(path.display().to_string(), sha256_hex(bytes));
    }

    pub fn output(&mut self, path: &Path, bytes: &[u8]) {
        self.outputs
            .insert(path.display().to_string(), sha256_hex(bytes));
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest is plain data");
        s.push('\n');
        s
    }
}

/// `<output>.manifest.json`
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Writes `bytes` to `path`, then the manifest next to it.
pub fn write_with_manifest(
    path: &Path,
    bytes: &[u8],
    mut manifest: RunManifest,
) -> Result<RunManifest, CliError> {
    write_file(path, bytes)?;
    manifest.output(path, bytes);
    write_file(&manifest_path(path), manifest.to_json().as_bytes())?;
    Ok(manifest)
}

/// CSV float cell: shortest round-trip decimal, `inf` for infinity.
pub fn csv_float(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_owned()
    } else {
        format!("{v}")
    }
}

pub fn csv_line(cells: &[String]) -> String {
    let mut line = cells.join(",");
    line.push('\n');
    line
}
