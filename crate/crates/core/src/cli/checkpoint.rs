//! Model persistence: a plain-text header (format version, config echo,
//! embedded vocabulary/delegates/tokenizer, tensor manifest) followed by the
//! raw parameter values as little-endian 32-bit floats. Bit-exact both ways.

use std::path::Path;

use crate::cli::config::{arch_line, parse_arch_line, parse_train_line, train_line};
use crate::error::{Error, Result};
use crate::fuzzy_core::{delegates_from_lines, delegates_to_lines};
use crate::model::{DelegateSummary, FuzzyS2SModel, ModelParts, Variant};
use crate::numerics::Tensor;
use crate::tokenization::{FuzzyTokenizer, Vocabulary};

pub const CHECKPOINT_MAGIC: &str = "genfs-ckpt v1";

/// Provenance carried alongside the model so evaluation can reproduce the
/// exact dataset split that trained it.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointMeta {
    pub dataset: Option<String>,
    pub train_frac: f32,
}

struct ByteLines<'a> {
    bytes: &'a [u8],
    pos: usize,
    line_no: usize,
}

impl<'a> ByteLines<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        ByteLines { bytes, pos: 0, line_no: 0 }
    }

    fn next(&mut self, what: &str) -> Result<&'a str> {
        if self.pos >= self.bytes.len() {
            return Err(Error::Parse {
                line: self.line_no + 1,
                msg: format!("checkpoint ends before {what}"),
            });
        }
        let rest = &self.bytes[self.pos..];
        let end = rest.iter().position(|&b| b == b'\n').unwrap_or(rest.len());
        let line = std::str::from_utf8(&rest[..end]).map_err(|_| Error::Parse {
            line: self.line_no + 1,
            msg: format!("{what} is not UTF-8"),
        })?;
        self.pos += end + 1;
        self.line_no += 1;
        Ok(line)
    }

    /// Next line must read `<key> <value>`; returns the value.
    fn field(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next(key)?;
        line.strip_prefix(key).and_then(|r| r.strip_prefix(' ')).ok_or_else(|| Error::Parse {
            line: self.line_no,
            msg: format!("expected a {key} line, got {line:?}"),
        })
    }

    fn count(&mut self, key: &str) -> Result<usize> {
        let v = self.field(key)?;
        v.parse().map_err(|_| Error::Parse {
            line: self.line_no,
            msg: format!("{key} count {v:?} is not a number"),
        })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<Vec<String>> {
        (0..n).map(|_| self.next(what).map(str::to_string)).collect()
    }
}

pub fn model_to_bytes(model: &FuzzyS2SModel, meta: &CheckpointMeta) -> Vec<u8> {
    let mut lines: Vec<String> = vec![
        CHECKPOINT_MAGIC.to_string(),
        format!("variant {}", model.variant().as_str()),
        format!("train_frac {}", meta.train_frac),
        format!("dataset {}", meta.dataset.as_deref().unwrap_or("none")),
        format!("corpus_max_len {}", model.corpus_max_len()),
        format!("train {}", train_line(model.train_config())),
        format!("arch {}", arch_line(model.arch())),
    ];
    let vlines = model.vocabulary().to_lines();
    lines.push(format!("vocab {}", vlines.len()));
    lines.extend(vlines);
    let dlines = delegates_to_lines(model.delegates());
    lines.push(format!("delegates {}", dlines.len()));
    lines.extend(dlines);
    lines.push(format!("summaries {}", model.summaries().len()));
    for (i, s) in model.summaries().iter().enumerate() {
        lines.push(format!(
            "summary {i} len {} tokens {}",
            s.source_len,
            s.dominant_tokens.join(" ")
        ));
    }
    let tlines = model.tokenizer().to_lines();
    lines.push(format!("tokenizer {}", tlines.len()));
    lines.extend(tlines);

    let entries: Vec<(&str, &Tensor)> = model.params().entries().collect();
    lines.push(format!("tensors {}", entries.len()));
    let mut offset = 0usize;
    for (name, t) in &entries {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        lines.push(format!("tensor {name} shape {} offset {offset}", dims.join(" ")));
        offset += t.numel();
    }
    lines.push(format!("blob {offset}"));

    let mut bytes = lines.join("\n").into_bytes();
    bytes.push(b'\n');
    bytes.reserve(offset * 4);
    for (_, t) in &entries {
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<(FuzzyS2SModel, CheckpointMeta)> {
    let mut r = ByteLines::new(bytes);
    let magic = r.next("the format header")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Version(magic.to_string()));
    }
    let variant: Variant = r.field("variant")?.parse()?;
    let tf = r.field("train_frac")?;
    let train_frac: f32 = tf.parse().map_err(|_| Error::Parse {
        line: r.line_no,
        msg: format!("train_frac {tf:?}"),
    })?;
    let dataset = match r.field("dataset")? {
        "none" => None,
        p => Some(p.to_string()),
    };
    let cml = r.field("corpus_max_len")?;
    let corpus_max_len: usize = cml.parse().map_err(|_| Error::Parse {
        line: r.line_no,
        msg: format!("corpus_max_len {cml:?}"),
    })?;
    let train_cfg = parse_train_line(r.field("train")?)?;
    let arch = parse_arch_line(r.field("arch")?)?;

    let n = r.count("vocab")?;
    let vocab = Vocabulary::from_lines(&r.take(n, "vocabulary token")?)?;
    let n = r.count("delegates")?;
    let delegates = delegates_from_lines(&r.take(n, "delegate")?)?;
    let k = r.count("summaries")?;
    let mut summaries = Vec::with_capacity(k);
    for i in 0..k {
        let line = r.next("summary")?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        let ok = toks.len() >= 5
            && toks[0] == "summary"
            && toks[1] == i.to_string()
            && toks[2] == "len"
            && toks[4] == "tokens";
        if !ok {
            return Err(Error::Parse {
                line: r.line_no,
                msg: format!("malformed summary line {line:?}"),
            });
        }
        let source_len: usize = toks[3].parse().map_err(|_| Error::Parse {
            line: r.line_no,
            msg: format!("summary length {:?}", toks[3]),
        })?;
        summaries.push(DelegateSummary {
            source_len,
            dominant_tokens: toks[5..].iter().map(|s| s.to_string()).collect(),
        });
    }
    let n = r.count("tokenizer")?;
    let tokenizer = FuzzyTokenizer::from_lines(&r.take(n, "tokenizer line")?)?;

    let tn = r.count("tensors")?;
    let mut manifest: Vec<(String, Vec<usize>, usize)> = Vec::with_capacity(tn);
    for _ in 0..tn {
        let line = r.next("tensor manifest entry")?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::Parse {
            line: r.line_no,
            msg: format!("malformed tensor line {line:?}"),
        };
        if toks.len() < 6 || toks[0] != "tensor" || toks[2] != "shape" {
            return Err(bad());
        }
        let op = toks.iter().position(|&t| t == "offset").ok_or_else(bad)?;
        if op + 2 != toks.len() || op < 4 {
            return Err(bad());
        }
        let dims: Vec<usize> = toks[3..op]
            .iter()
            .map(|d| d.parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let offset: usize = toks[op + 1].parse().map_err(|_| bad())?;
        manifest.push((toks[1].to_string(), dims, offset));
    }
    let blob_elems = r.count("blob")?;
    let blob = &bytes[r.pos.min(bytes.len())..];
    if blob.len() != blob_elems * 4 {
        return Err(Error::Parse {
            line: r.line_no,
            msg: format!(
                "blob holds {} bytes but the manifest wants {}",
                blob.len(),
                blob_elems * 4
            ),
        });
    }
    let values: Vec<f32> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let mut tensors = Vec::with_capacity(manifest.len());
    let mut running = 0usize;
    for (name, dims, offset) in manifest {
        if offset != running {
            return Err(Error::Parse {
                line: 0,
                msg: format!("tensor {name} at offset {offset}, expected {running}"),
            });
        }
        let numel: usize = dims.iter().product();
        let t = Tensor::new(dims, values[running..running + numel].to_vec())?;
        tensors.push((name, t));
        running += numel;
    }
    if running != blob_elems {
        return Err(Error::Parse {
            line: 0,
            msg: format!("manifest covers {running} of {blob_elems} blob values"),
        });
    }

    let model = FuzzyS2SModel::from_parts(ModelParts {
        tokenizer,
        vocab,
        delegates,
        summaries,
        arch,
        train_cfg,
        variant,
        corpus_max_len,
        tensors,
    })?;
    Ok((model, CheckpointMeta { dataset, train_frac }))
}

pub fn save_model(path: &Path, model: &FuzzyS2SModel, meta: &CheckpointMeta) -> Result<()> {
    std::fs::write(path, model_to_bytes(model, meta))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(FuzzyS2SModel, CheckpointMeta)> {
    let bytes = std::fs::read(path)?;
    model_from_bytes(&bytes)
}
