//! Sample collections and the small TSV files that accompany them.
//!
//! A dataset is either a directory with a `samples.tsv` index
//! (`sample_id<TAB>file.nt` per line) or a single stacked `.nt` tensor of
//! shape `[N, ...]`, whose samples get zero-padded numeric ids.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ntfile;
use crate::tensor::Tensor;

pub const INDEX_FILE: &str = "samples.tsv";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    ids: Vec<String>,
    samples: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(ids: Vec<String>, samples: Vec<Tensor>) -> Result<Self> {
        if ids.len() != samples.len() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                found: samples.len(),
            });
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate sample id `{id}`")));
            }
        }
        Ok(Dataset { ids, samples, index })
    }

    /// Splits a stacked `[N, ...]` tensor into `N` samples with ids padded
    /// to a common width, so string order equals numeric order.
    pub fn from_stacked(stacked: &Tensor) -> Result<Self> {
        if stacked.ndim() < 2 {
            return Err(Error::InvalidArgument(format!(
                "stacked dataset needs shape [N, ...], got {:?}",
                stacked.shape()
            )));
        }
        let n = stacked.shape()[0];
        let sample_shape = stacked.shape()[1..].to_vec();
        let per = stacked.len() / n;
        let width = (n.saturating_sub(1)).to_string().len();
        let ids = (0..n).map(|i| format!("{i:0width$}")).collect();
        let samples = stacked
            .data()
            .chunks_exact(per)
            .map(|c| Tensor::new(sample_shape.clone(), c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(ids, samples)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "dataset path does not exist"),
            ));
        }
        if path.is_dir() {
            let rows = read_tsv(&path.join(INDEX_FILE))?;
            let mut ids = Vec::with_capacity(rows.len());
            let mut samples = Vec::with_capacity(rows.len());
            for (id, file) in rows {
                samples.push(ntfile::read(&path.join(&file))?);
                ids.push(id);
            }
            Dataset::new(ids, samples)
        } else {
            Dataset::from_stacked(&ntfile::read(path)?)
        }
    }

    /// Writes one `.nt` per sample plus `samples.tsv` into `dir`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut rows = Vec::with_capacity(self.len());
        for (i, (id, t)) in self.ids.iter().zip(&self.samples).enumerate() {
            let file = format!("sample_{i:05}.nt");
            ntfile::write(&dir.join(&file), t)?;
            rows.push((id.clone(), file));
        }
        write_tsv(&dir.join(INDEX_FILE), &rows)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn samples(&self) -> &[Tensor] {
        &self.samples
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.ids.iter().map(String::as_str).zip(&self.samples)
    }

    pub fn get(&self, id: &str) -> Result<&Tensor> {
        self.index
            .get(id)
            .map(|&i| &self.samples[i])
            .ok_or_else(|| Error::MissingSample(id.to_string()))
    }
}

/// Reads two-column TSV lines, skipping blanks and `#` comments.
pub fn read_tsv(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (a, b) = line.split_once('\t').ok_or_else(|| {
            Error::InvalidArgument(format!("{}:{}: expected two tab-separated columns", path.display(), n + 1))
        })?;
        rows.push((a.to_string(), b.to_string()));
    }
    Ok(rows)
}

pub fn write_tsv(path: &Path, rows: &[(String, String)]) -> Result<()> {
    let mut text = String::new();
    for (a, b) in rows {
        text.push_str(a);
        text.push('\t');
        text.push_str(b);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One id per line.
pub fn read_ids(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.trim_end().to_string())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect())
}

pub fn write_ids(path: &Path, ids: &[String]) -> Result<()> {
    let mut text = ids.join("\n");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `sample_id<TAB>integer label` files.
pub fn read_labels(path: &Path) -> Result<Vec<(String, usize)>> {
    read_tsv(path)?
        .into_iter()
        .map(|(id, l)| {
            l.trim()
                .parse::<usize>()
                .map(|l| (id, l))
                .map_err(|_| Error::InvalidArgument(format!("{}: label `{l}` is not a non-negative integer", path.display())))
        })
        .collect()
}
