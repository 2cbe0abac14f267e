//! Isolation forest: random axis-parallel partition trees; anomalies end up
//! on short paths.
//!
//! Score of a point: `2^(-E[h(x)] / c(psi))`, where `h` is the path length
//! plus `c(size)` at the external node and `c(m) = 2 H(m-1) - 2 (m-1) / m`
//! with `H(i) ~ ln(i) + 0.5772156649`.

use ndarray::ArrayView2;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bytes::{ByteReader, ByteWriter};
use super::{check_dim, quantile, AnomalyScore, DetectError};

pub const EULER_GAMMA: f64 = 0.5772156649;

pub const DEFAULT_TREES: usize = 100;
pub const DEFAULT_SUBSAMPLE: usize = 256;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForestParams {
    pub n_trees: usize,
    pub subsample_size: usize,
    pub seed: u64,
    /// Expected anomaly fraction; replaces the 0.5 threshold with the
    /// matching training-score quantile.
    #[serde(default)]
    pub contamination: Option<f64>,
}

impl Default for IsolationForestParams {
    fn default() -> Self {
        Self {
            n_trees: DEFAULT_TREES,
            subsample_size: DEFAULT_SUBSAMPLE,
            seed: 0,
            contamination: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Internal {
        feature: usize,
        split: f64,
        /// Index of the `x < split` child.
        left: usize,
        right: usize,
    },
    External {
        size: usize,
    },
}

/// Arena of nodes; the root is node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct IsolationTree {
    nodes: Vec<Node>,
}

impl IsolationTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::External { .. } => 0,
                Node::Internal { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Path length of `x` including the `c(size)` adjustment.
    pub fn path_length(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        let mut depth = 0usize;
        loop {
            match self.nodes[i] {
                Node::Internal {
                    feature,
                    split,
                    left,
                    right,
                } => {
                    i = if x[feature] < split { left } else { right };
                    depth += 1;
                }
                Node::External { size } => return depth as f64 + average_path_length(size),
            }
        }
    }

    fn build(
        data: ArrayView2<'_, f64>,
        sample: Vec<usize>,
        height_limit: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut nodes = Vec::new();
        // (node slot, rows, depth)
        let mut stack = vec![(0usize, sample, 0usize)];
        nodes.push(Node::External { size: 0 });
        while let Some((slot, rows, depth)) = stack.pop() {
            if depth >= height_limit || rows.len() <= 1 {
                nodes[slot] = Node::External { size: rows.len() };
                continue;
            }
            // ranges of the features that can still be split
            let splittable: Vec<(usize, f64, f64)> = (0..data.ncols())
                .filter_map(|f| {
                    let (lo, hi) =
                        rows.iter()
                            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                                let v = data[[r, f]];
                                (lo.min(v), hi.max(v))
                            });
                    (hi > lo).then_some((f, lo, hi))
                })
                .collect();
            if splittable.is_empty() {
                nodes[slot] = Node::External { size: rows.len() };
                continue;
            }
            let (feature, lo, hi) = splittable[rng.random_range(0..splittable.len())];
            let split = rng.random_range(lo..hi);
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                rows.into_iter().partition(|&r| data[[r, feature]] < split);
            let left = nodes.len();
            let right = left + 1;
            nodes.push(Node::External { size: 0 });
            nodes.push(Node::External { size: 0 });
            nodes[slot] = Node::Internal {
                feature,
                split,
                left,
                right,
            };
            stack.push((right, right_rows, depth + 1));
            stack.push((left, left_rows, depth + 1));
        }
        Self { nodes }
    }
}

/// `c(m)`: average unsuccessful-search path length in a binary search tree
/// of `m` nodes; 0 for `m <= 1`.
pub fn average_path_length(m: usize) -> f64 {
    if m <= 1 {
        return 0.0;
    }
    let m1 = (m - 1) as f64;
    2.0 * (m1.ln() + EULER_GAMMA) - 2.0 * m1 / m as f64
}

/// `2^(-mean_path / c(psi))`.
pub fn score_from_path_length(mean_path: f64, subsample_size: usize) -> f64 {
    (-mean_path / average_path_length(subsample_size)).exp2()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationForestModel {
    n_features: usize,
    subsample_size: usize,
    height_limit: usize,
    seed: u64,
    threshold: f64,
    trees: Vec<IsolationTree>,
}

impl IsolationForestModel {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn subsample_size(&self) -> usize {
        self.subsample_size
    }

    pub fn height_limit(&self) -> usize {
        self.height_limit
    }

    pub fn trees(&self) -> &[IsolationTree] {
        &self.trees
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn mean_path_length(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Set the threshold so that about `contamination` of `train` scores
    /// above it.
    pub fn set_contamination(
        &mut self,
        train: ArrayView2<'_, f64>,
        contamination: f64,
    ) -> Result<(), DetectError> {
        if !(contamination > 0.0 && contamination < 0.5) {
            return Err(DetectError::InvalidParameter(format!(
                "contamination must lie in (0, 0.5), got {contamination}"
            )));
        }
        let scores: Vec<f64> = train
            .rows()
            .into_iter()
            .map(|r| {
                score_from_path_length(
                    self.mean_path_length(r.as_slice().expect("row")),
                    self.subsample_size,
                )
            })
            .collect();
        self.threshold = quantile(&scores, 1.0 - contamination);
        Ok(())
    }

    pub(crate) fn to_payload(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.u64(self.n_features as u64)
            .u64(self.subsample_size as u64)
            .u64(self.height_limit as u64)
            .u64(self.seed)
            .f64(self.threshold)
            .u64(self.trees.len() as u64);
        for t in &self.trees {
            w.u64(t.nodes.len() as u64);
            for n in &t.nodes {
                match *n {
                    Node::Internal {
                        feature,
                        split,
                        left,
                        right,
                    } => {
                        w.u8(0)
                            .u64(feature as u64)
                            .f64(split)
                            .u64(left as u64)
                            .u64(right as u64);
                    }
                    Node::External { size } => {
                        w.u8(1).u64(size as u64);
                    }
                }
            }
        }
        w.finish()
    }

    pub(crate) fn from_payload(payload: &[u8]) -> Result<Self, DetectError> {
        let mut r = ByteReader::new(payload);
        let n_features = r.usize()?;
        let subsample_size = r.usize()?;
        let height_limit = r.usize()?;
        let seed = r.u64()?;
        let threshold = r.f64()?;
        let n_trees = r.usize()?;
        let bad = |m: &str| DetectError::MalformedPayload(m.to_string());
        if subsample_size < 2 || n_trees == 0 || n_trees > payload.len() {
            return Err(bad("invalid forest header"));
        }
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let n_nodes = r.usize()?;
            if n_nodes == 0 || n_nodes > payload.len() {
                return Err(bad("invalid node count"));
            }
            let mut nodes = Vec::with_capacity(n_nodes);
            for i in 0..n_nodes {
                nodes.push(match r.u8()? {
                    0 => {
                        let feature = r.usize()?;
                        let split = r.f64()?;
                        let left = r.usize()?;
                        let right = r.usize()?;
                        // children always follow their parent in the arena
                        if feature >= n_features
                            || left <= i
                            || right <= i
                            || left >= n_nodes
                            || right >= n_nodes
                        {
                            return Err(bad("node references out of range"));
                        }
                        Node::Internal {
                            feature,
                            split,
                            left,
                            right,
                        }
                    }
                    1 => Node::External { size: r.usize()? },
                    t => return Err(bad(&format!("node tag {t}"))),
                });
            }
            trees.push(IsolationTree { nodes });
        }
        r.finish()?;
        Ok(Self {
            n_features,
            subsample_size,
            height_limit,
            seed,
            threshold,
            trees,
        })
    }
}

/// Grow `n_trees` trees on `subsample_size`-row subsamples drawn without
/// replacement (with replacement when the data has fewer rows).
pub fn if_fit(
    train: ArrayView2<'_, f64>,
    n_trees: usize,
    subsample_size: usize,
    seed: u64,
) -> Result<IsolationForestModel, DetectError> {
    let n = train.nrows();
    if n < 2 {
        return Err(DetectError::TooFewSamples { needed: 2, got: n });
    }
    if n_trees == 0 {
        return Err(DetectError::InvalidParameter("n_trees must be >= 1".into()));
    }
    if subsample_size < 2 {
        return Err(DetectError::InvalidParameter(
            "subsample size must be >= 2".into(),
        ));
    }
    let height_limit = (subsample_size as f64).log2().ceil() as usize;
    let trees = (0..n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let sample: Vec<usize> = if n >= subsample_size {
                index::sample(&mut rng, n, subsample_size).into_vec()
            } else {
                (0..subsample_size)
                    .map(|_| rng.random_range(0..n))
                    .collect()
            };
            IsolationTree::build(train, sample, height_limit, &mut rng)
        })
        .collect();
    Ok(IsolationForestModel {
        n_features: train.ncols(),
        subsample_size,
        height_limit,
        seed,
        threshold: DEFAULT_THRESHOLD,
        trees,
    })
}

pub fn if_score(model: &IsolationForestModel, x: &[f64]) -> Result<AnomalyScore, DetectError> {
    check_dim(model.n_features, x)?;
    Ok(AnomalyScore {
        value: score_from_path_length(model.mean_path_length(x), model.subsample_size),
        normalized: true,
    })
}
