//! Cosine-similarity ranking of prompt labels against feature vectors.
//!
//! Both operands are normalized once; similarities for a block of rows are a
//! single matrix product. Rows are processed in fixed-size chunks, so the
//! arithmetic for any given row is identical whatever the thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows per matrix-product block.
pub const CHUNK_ROWS: usize = 128;

/// Dense row-major `f32` matrix, the in-memory form of a feature tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::DimensionMismatch {
                expected: rows * dim,
                found: data.len(),
            });
        }
        Ok(FeatureMatrix { rows, dim, data })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f32>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        FeatureMatrix::new(rows.len(), dim, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

/// Anything that can hand out feature rows on demand. Lets very large
/// evaluations stream features instead of holding them in memory.
pub trait FeatureSource: Sync {
    fn rows(&self) -> usize;
    fn dim(&self) -> usize;
    /// Writes row `i` into `out` (`out.len() == self.dim()`).
    fn fill_row(&self, i: usize, out: &mut [f64]);
}

impl FeatureSource for FeatureMatrix {
    fn rows(&self) -> usize {
        self.rows
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn fill_row(&self, i: usize, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(self.row(i)) {
            *o = *v as f64;
        }
    }
}

/// Normalizes in place; returns false for a zero vector (left untouched).
fn normalize(v: &mut [f64]) -> bool {
    let mut ss = 0.0;
    for x in v.iter() {
        ss += x * x;
    }
    if ss == 0.0 {
        return false;
    }
    let inv = 1.0 / ss.sqrt();
    v.iter_mut().for_each(|x| *x *= inv);
    true
}

/// Unit-normalized label (or query) embeddings, one row per prompt label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelEmbeddings {
    rows: usize,
    dim: usize,
    unit: Vec<f64>,
}

impl LabelEmbeddings {
    pub fn new(source: &impl FeatureSource) -> Result<Self> {
        let (rows, dim) = (source.rows(), source.dim());
        let mut unit = vec![0.0; rows * dim];
        for (i, row) in unit.chunks_mut(dim.max(1)).enumerate().take(rows) {
            source.fill_row(i, row);
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    what: "embedding",
                    row: i,
                });
            }
            if !normalize(row) {
                return Err(Error::ZeroEmbedding(i));
            }
        }
        Ok(LabelEmbeddings { rows, dim, unit })
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn unit_row(&self, i: usize) -> &[f64] {
        &self.unit[i * self.dim..(i + 1) * self.dim]
    }
}

/// Prompt-list indices ordered by descending similarity; equal similarities
/// keep ascending index order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedLabelList {
    pub indices: Vec<u32>,
    pub similarities: Vec<f64>,
}

impl RankedLabelList {
    pub fn from_similarities(sims: &[f64]) -> Self {
        let mut indices: Vec<u32> = (0..sims.len() as u32).collect();
        indices.sort_unstable_by(|&a, &b| {
            sims[b as usize]
                .partial_cmp(&sims[a as usize])
                .expect("similarities are finite")
                .then(a.cmp(&b))
        });
        let similarities = indices.iter().map(|&i| sims[i as usize]).collect();
        RankedLabelList {
            indices,
            similarities,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// 1-based rank of every label, indexed by prompt-list position.
    pub fn rank_of_labels(&self) -> Vec<u32> {
        let mut ranks = vec![0u32; self.indices.len()];
        for (pos, &label) in self.indices.iter().enumerate() {
            ranks[label as usize] = pos as u32 + 1;
        }
        ranks
    }
}

/// First `n` entries of a ranking.
pub fn top_n(ranked: &RankedLabelList, n: usize) -> Result<&[u32]> {
    if n == 0 || n > ranked.len() {
        return Err(Error::TopNOutOfRange {
            n,
            len: ranked.len(),
        });
    }
    Ok(&ranked.indices[..n])
}

/// The `n` best labels by partial selection, without sorting the rest.
/// Always equal to the prefix of the full ranking.
pub fn top_n_streaming(sims: &[f64], n: usize) -> Result<Vec<u32>> {
    if n == 0 || n > sims.len() {
        return Err(Error::TopNOutOfRange { n, len: sims.len() });
    }
    let cmp = |a: &u32, b: &u32| {
        sims[*b as usize]
            .partial_cmp(&sims[*a as usize])
            .expect("similarities are finite")
            .then(a.cmp(b))
    };
    let mut idx: Vec<u32> = (0..sims.len() as u32).collect();
    if n < idx.len() {
        idx.select_nth_unstable_by(n - 1, cmp);
        idx.truncate(n);
    }
    idx.sort_unstable_by(cmp);
    Ok(idx)
}

/// Rows whose feature vector was all zeros; they rank every label as a tie.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RankDiagnostics {
    pub zero_norm_rows: Vec<usize>,
}

struct Block {
    sims: Vec<f64>,
    zero: Vec<bool>,
}

fn similarity_block(
    features: &dyn FeatureSource,
    rows: &[usize],
    embeddings: &LabelEmbeddings,
) -> Result<Block> {
    let (m, k, n) = (rows.len(), embeddings.dim, embeddings.rows);
    let mut a = vec![0.0f64; m * k];
    let mut zero = vec![false; m];
    for (r, (&row, buf)) in rows.iter().zip(a.chunks_mut(k.max(1))).enumerate() {
        features.fill_row(row, buf);
        if buf.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { what: "feature", row });
        }
        zero[r] = !normalize(buf);
    }
    let mut sims = vec![0.0f64; m * n];
    if m > 0 && n > 0 && k > 0 {
        // SAFETY: a is m x k row-major, the embeddings are n x k row-major and
        // read as their k x n transpose, sims is m x n row-major; all strides
        // match the allocated lengths.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                k as isize,
                1,
                embeddings.unit.as_ptr(),
                1,
                k as isize,
                0.0,
                sims.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
    // -0.0 would otherwise sort apart from 0.0
    sims.iter_mut().for_each(|s| *s += 0.0);
    Ok(Block { sims, zero })
}

/// Ranks the selected feature rows and maps each ranking through `f` as soon
/// as it is produced, so only one chunk of rankings is alive per thread.
/// Output order follows `rows`.
pub fn rank_rows_with<T, F>(
    features: &dyn FeatureSource,
    rows: &[usize],
    embeddings: &LabelEmbeddings,
    f: F,
) -> Result<(Vec<T>, RankDiagnostics)>
where
    T: Send,
    F: Fn(usize, &RankedLabelList) -> T + Sync,
{
    if features.dim() != embeddings.dim {
        return Err(Error::DimensionMismatch {
            expected: embeddings.dim,
            found: features.dim(),
        });
    }
    let n = embeddings.rows;
    let chunks: Vec<Result<(Vec<T>, Vec<usize>)>> = rows
        .par_chunks(CHUNK_ROWS)
        .enumerate()
        .map(|(ci, chunk)| {
            let block = similarity_block(features, chunk, embeddings)?;
            let mut out = Vec::with_capacity(chunk.len());
            let mut zero_rows = Vec::new();
            for (r, &row) in chunk.iter().enumerate() {
                if block.zero[r] {
                    zero_rows.push(row);
                }
                let ranked = RankedLabelList::from_similarities(&block.sims[r * n..(r + 1) * n]);
                out.push(f(ci * CHUNK_ROWS + r, &ranked));
            }
            Ok((out, zero_rows))
        })
        .collect();
    let mut out = Vec::with_capacity(rows.len());
    let mut diag = RankDiagnostics::default();
    for c in chunks {
        let (vals, zero) = c?;
        out.extend(vals);
        diag.zero_norm_rows.extend(zero);
    }
    if !diag.zero_norm_rows.is_empty() {
        log::warn!(
            "{} feature rows have zero norm; their labels rank as ties",
            diag.zero_norm_rows.len()
        );
    }
    Ok((out, diag))
}

/// Full ranking of every prompt label for every feature row.
pub fn rank_labels(
    features: &dyn FeatureSource,
    embeddings: &LabelEmbeddings,
) -> Result<(Vec<RankedLabelList>, RankDiagnostics)> {
    let rows: Vec<usize> = (0..features.rows()).collect();
    rank_rows_with(features, &rows, embeddings, |_, r| r.clone())
}
