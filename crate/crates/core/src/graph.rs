//! Item correlative graph (top-k cosine neighbours over training rating
//! columns) and neighbour sampling for both relational graphs.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::data::{write_file, SparseRatingMatrix};
use crate::error::{Error, Result};

/// Default number of correlated neighbours kept per item.
pub const DEFAULT_CORR_K: usize = 100;
/// Default neighbour sample cap for both graphs.
pub const DEFAULT_NEIGHBOR_SAMPLE: usize = 30;

pub const CORR_GRAPH_FILE: &str = "corr_graph.tsv";

/// Cosine similarity of two rating columns, by a merge over the sorted user
/// lists. Zero-norm columns have similarity 0.
pub fn cosine_similarity(matrix: &SparseRatingMatrix, j: usize, k: usize) -> f64 {
    let (a, b) = (matrix.column(j), matrix.column(k));
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let (mut x, mut y) = (0, 0);
    let mut dot = 0.0;
    while x < a.len() && y < b.len() {
        match a[x].0.cmp(&b[y].0) {
            Ordering::Less => x += 1,
            Ordering::Greater => y += 1,
            Ordering::Equal => {
                dot += a[x].1 * b[y].1;
                x += 1;
                y += 1;
            }
        }
    }
    dot / (na * nb)
}

fn norm(col: &[(usize, f64)]) -> f64 {
    col.iter().map(|(_, r)| r * r).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelativeGraph {
    pub k: usize,
    /// `adj[j]`: up to `k` `(neighbour, similarity)` pairs, similarity
    /// descending, ties by ascending id.
    pub adj: Vec<Vec<(usize, f64)>>,
}

impl CorrelativeGraph {
    /// An item graph with no edges.
    pub fn empty(n_items: usize, k: usize) -> Self {
        CorrelativeGraph {
            k,
            adj: vec![Vec::new(); n_items],
        }
    }

    pub fn n_items(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[j].iter().map(|e| e.0)
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }

    /// `item<TAB>neighbor<TAB>similarity`, by item then rank. Similarities are
    /// written with round-trip precision.
    pub fn export(&self, path: &Path) -> Result<()> {
        let mut buf = format!("# k\t{}\n", self.k);
        for (j, list) in self.adj.iter().enumerate() {
            for (n, s) in list {
                buf.push_str(&format!("{j}\t{n}\t{s:?}\n"));
            }
        }
        write_file(path, buf.as_bytes())
    }

    pub fn load(path: &Path, n_items: usize) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let mut k = DEFAULT_CORR_K;
        if let Some(rest) = text.lines().next().and_then(|l| l.strip_prefix("# k\t")) {
            k = rest
                .trim()
                .parse()
                .map_err(|_| Error::Validation(format!("{}: bad k header", path.display())))?;
        }
        let mut adj = vec![Vec::new(); n_items];
        for (i, line) in text.lines().enumerate() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: "expected item<TAB>neighbor<TAB>similarity".into(),
            };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(bad());
            }
            let j: usize = f[0].parse().map_err(|_| bad())?;
            let n: usize = f[1].parse().map_err(|_| bad())?;
            let s: f64 = f[2].parse().map_err(|_| bad())?;
            if j >= n_items || n >= n_items {
                return Err(bad());
            }
            adj[j].push((n, s));
        }
        Ok(CorrelativeGraph { k, adj })
    }
}

/// Top-`k` most similar items per item, excluding the item itself and any
/// pair with similarity 0.
///
/// Dot products are accumulated through the user → items inverted index, so
/// only items sharing at least one user are touched. Items are processed in
/// parallel.
pub fn build_correlative_graph(matrix: &SparseRatingMatrix, k: usize) -> Result<CorrelativeGraph> {
    if k == 0 {
        return Err(Error::Validation(
            "correlative graph k must be at least 1".into(),
        ));
    }
    let m = matrix.n_items();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); matrix.n_users];
    for j in 0..m {
        for &(u, r) in matrix.column(j) {
            rows[u].push((j, r));
        }
    }
    let norms: Vec<f64> = (0..m).map(|j| norm(matrix.column(j))).collect();

    let adj = (0..m)
        .into_par_iter()
        .map(|j| {
            if norms[j] == 0.0 {
                return Vec::new();
            }
            let mut dots = vec![0.0; m];
            let mut touched = Vec::new();
            for &(u, r) in matrix.column(j) {
                for &(other, r2) in &rows[u] {
                    if other == j {
                        continue;
                    }
                    if dots[other] == 0.0 {
                        touched.push(other);
                    }
                    dots[other] += r * r2;
                }
            }
            let mut cands: Vec<(usize, f64)> = touched
                .into_iter()
                .filter(|&o| norms[o] > 0.0)
                .map(|o| (o, dots[o] / (norms[j] * norms[o])))
                .filter(|&(_, s)| s > 0.0)
                .collect();
            cands.sort_by(rank_order);
            cands.dedup_by_key(|c| c.0);
            cands.truncate(k);
            cands
        })
        .collect();
    Ok(CorrelativeGraph { k, adj })
}

/// Similarity descending, then id ascending.
pub(crate) fn rank_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

/// At most `cap` distinct members of `adj`. Small lists are returned whole in
/// adjacency order; larger ones are sampled uniformly without replacement
/// and returned in adjacency order.
pub fn sample_neighbors<R: Rng + ?Sized>(adj: &[usize], cap: usize, rng: &mut R) -> Vec<usize> {
    if adj.len() <= cap {
        return adj.to_vec();
    }
    let mut picked = rand::seq::index::sample(rng, adj.len(), cap).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| adj[i]).collect()
}
