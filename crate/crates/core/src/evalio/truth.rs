use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::dataset::Dataset;
use crate::error::{usage, Result};
use crate::graph::{IdSpace, KnnGraph};
use crate::metric::Metric;
use crate::neighbor::{knn_insert, Neighbor};
use crate::scalar::Element;
use crate::wire::{decode_knng, encode_knng};

/// Exact kNN graph plus what it was computed from.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub graph: KnnGraph,
    /// Hex SHA-256 of the dataset contents (see [`dataset_digest`]).
    pub dataset_digest: String,
    pub k: usize,
    pub metric: Metric,
}

/// Hex SHA-256 over element kind, dims and the little-endian elements.
pub fn dataset_digest<T: Element>(dataset: &Dataset<T>) -> String {
    let mut hasher = Sha256::new();
    hasher.update([T::KIND as u8]);
    hasher.update((dataset.dims() as u64).to_le_bytes());
    let mut buf = Vec::with_capacity(dataset.dims() * T::KIND.size());
    for row in dataset.rows() {
        buf.clear();
        for &x in row {
            x.write_le(&mut buf);
        }
        hasher.update(&buf);
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Exhaustive all-pairs kNN graph under the `(dist, id)` tie rule.
pub fn brute_force_knng<T: Element>(dataset: &Dataset<T>, k: usize) -> Result<GroundTruth> {
    let n = dataset.len();
    if k == 0 || k >= n {
        return Err(usage(format!("k must satisfy 1 <= k < N (k={k}, N={n})")));
    }
    let view = dataset.view();
    let rows: Vec<Vec<Neighbor>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::with_capacity(k + 1);
            let q = view.row(i);
            for j in 0..n {
                if j != i {
                    knn_insert(&mut row, Neighbor::with_flag(j as u32, view.metric().eval(q, view.row(j)), false), k);
                }
            }
            row
        })
        .collect();
    Ok(GroundTruth {
        graph: KnnGraph::from_rows(&rows, k, IdSpace::Local)?,
        dataset_digest: dataset_digest(dataset),
        k,
        metric: dataset.metric(),
    })
}

/// On-disk ground-truth cache keyed by `(dataset digest, k, metric)`.
/// Entries use the kNN-graph region layout.
#[derive(Clone, Debug)]
pub struct GroundTruthCache {
    dir: PathBuf,
}

impl GroundTruthCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, digest: &str, k: usize, metric: Metric) -> PathBuf {
        self.dir.join(format!("{digest}-k{k}-{metric}.knng"))
    }

    pub fn get_or_compute<T: Element>(&self, dataset: &Dataset<T>, k: usize) -> Result<GroundTruth> {
        let digest = dataset_digest(dataset);
        let path = self.path_for(&digest, k, dataset.metric());
        if let Some(graph) = load(&path)? {
            if graph.num_sources() == dataset.len() && graph.k() == k {
                return Ok(GroundTruth { graph, dataset_digest: digest, k, metric: dataset.metric() });
            }
        }
        let truth = brute_force_knng(dataset, k)?;
        fs::create_dir_all(&self.dir)?;
        // write-then-rename so concurrent readers never see a partial file
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, encode_knng(&truth.graph))?;
        fs::rename(&tmp, &path)?;
        Ok(truth)
    }
}

fn load(path: &Path) -> Result<Option<KnnGraph>> {
    match fs::read(path) {
        Ok(bytes) => Ok(decode_knng(&bytes, IdSpace::Local).ok()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}
