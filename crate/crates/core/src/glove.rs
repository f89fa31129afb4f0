//! GloVe text-format vectors: `token v1 v2 ... vd` per line.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};
use crate::text::Vocabulary;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GloveVectors {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<Float>>,
}

impl GloveVectors {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Reads vectors of dimension `dim`. When `keep` is given, only tokens in
/// that vocabulary are retained.
pub fn read_glove<R: BufRead>(
    reader: R,
    dim: usize,
    keep: Option<&Vocabulary>,
) -> Result<GloveVectors> {
    let mut vectors = HashMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<glove>", e))?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        let token = parts.next().unwrap_or_default().to_lowercase();
        let values: Vec<&str> = parts.collect();
        if values.len() != dim {
            return Err(Error::config(format!(
                "GloVe line {} has dimension {}, model expects {dim}",
                n + 1,
                values.len()
            )));
        }
        if keep.is_some_and(|v| !v.contains(&token)) {
            continue;
        }
        let vec = values
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .map(|x| x as Float)
                    .map_err(|_| Error::Format {
                        what: "GloVe file",
                        message: format!("line {}: {v:?} is not a number", n + 1),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        vectors.entry(token).or_insert(vec);
    }
    Ok(GloveVectors { dim, vectors })
}

pub fn load_glove(path: &Path, dim: usize, keep: Option<&Vocabulary>) -> Result<GloveVectors> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_glove(BufReader::new(f), dim, keep)
}

/// Copies vectors into the rows of a `[V, d]` table for every vocabulary
/// token that has one. Returns the number of rows copied.
pub fn apply_glove(table: &mut Tensor, vocab: &Vocabulary, glove: &GloveVectors) -> Result<usize> {
    let (rows, dim) = match table.shape() {
        [r, d] => (*r, *d),
        other => {
            return Err(Error::Shape {
                op: "apply_glove",
                left: other.to_vec(),
                right: vec![],
            })
        }
    };
    if dim != glove.dim {
        return Err(Error::config(format!(
            "GloVe dimension {} does not match embedding dimension {dim}",
            glove.dim
        )));
    }
    let mut copied = 0;
    for (id, token) in vocab.tokens().iter().enumerate().take(rows) {
        if let Some(v) = glove.vectors.get(token) {
            table.data_mut()[id * dim..(id + 1) * dim].copy_from_slice(v);
            copied += 1;
        }
    }
    Ok(copied)
}
