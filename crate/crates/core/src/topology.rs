//! Communication topologies: follower graph, leader pinning, `L + P` and its
//! spectrum.
//!
//! Followers are indexed from 0 in the Rust API (follower 0 is the vehicle
//! directly behind the leader). The JSON form uses 1-based follower indices
//! with the leader as the implicit node 0.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Undirected follower graph plus leader pinning.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Topology {
    n: usize,
    /// Undirected edges `(i, j)` with `i < j`.
    edges: BTreeSet<(usize, usize)>,
    pinned: Vec<bool>,
}

impl Topology {
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        pinned: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidTopology(
                "platoon needs at least one follower".into(),
            ));
        }
        let mut topo = Topology {
            n,
            edges: BTreeSet::new(),
            pinned: vec![false; n],
        };
        for (i, j) in edges {
            if i == j {
                return Err(Error::InvalidTopology(format!("self-loop at follower {i}")));
            }
            if i >= n || j >= n {
                return Err(Error::InvalidTopology(format!(
                    "edge ({i}, {j}) out of range for {n} followers"
                )));
            }
            topo.edges.insert((i.min(j), i.max(j)));
        }
        for p in pinned {
            if p >= n {
                return Err(Error::InvalidTopology(format!(
                    "pinned follower {p} out of range for {n} followers"
                )));
            }
            topo.pinned[p] = true;
        }
        Ok(topo)
    }

    /// Followers within index distance `h` are linked. `h >= n - 1` gives a
    /// complete follower graph.
    pub fn h_neighbor(n: usize, h: usize, pinned: &[usize]) -> Result<Self> {
        if h == 0 {
            return Err(Error::InvalidTopology(
                "communication range h must be >= 1".into(),
            ));
        }
        if pinned.is_empty() {
            return Err(Error::InvalidTopology(
                "at least one follower must be pinned to the leader".into(),
            ));
        }
        let edges = (0..n).flat_map(|i| ((i + 1)..n.min(i + h + 1)).map(move |j| (i, j)));
        Topology::new(n, edges, pinned.iter().copied())
    }

    /// Bidirectional chain with only the first follower pinned.
    pub fn bd(n: usize) -> Result<Self> {
        Topology::h_neighbor(n, 1, &[0])
    }

    /// Bidirectional chain with every follower pinned.
    pub fn bdl(n: usize) -> Result<Self> {
        Topology::h_neighbor(n, 1, &(0..n).collect::<Vec<_>>())
    }

    /// No follower links, every follower pinned (`L = 0`, `P = I`).
    pub fn star(n: usize) -> Result<Self> {
        Topology::new(n, [], 0..n)
    }

    /// Consecutive mini-platoons of the given sizes.
    ///
    /// Each block is an `intra_h`-neighbor group pinned only at its first
    /// vehicle. Adjacent blocks stay linked through the boundary pair (last
    /// vehicle of one block, first vehicle of the next), so with `intra_h = 1`
    /// the follower graph is a single chain pinned at every block head.
    pub fn mini_platoons(sizes: &[usize], intra_h: usize) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidTopology(
                "no mini-platoon blocks given".into(),
            ));
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidTopology(
                "mini-platoon block of size 0".into(),
            ));
        }
        if intra_h == 0 {
            return Err(Error::InvalidTopology(
                "communication range h must be >= 1".into(),
            ));
        }
        let n: usize = sizes.iter().sum();
        let mut edges = Vec::new();
        let mut pinned = Vec::with_capacity(sizes.len());
        let mut start = 0;
        for (b, &size) in sizes.iter().enumerate() {
            pinned.push(start);
            for i in start..start + size {
                for j in (i + 1)..(start + size).min(i + intra_h + 1) {
                    edges.push((i, j));
                }
            }
            if b + 1 < sizes.len() {
                edges.push((start + size - 1, start + size));
            }
            start += size;
        }
        Topology::new(n, edges, pinned)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn is_pinned(&self, i: usize) -> bool {
        self.pinned[i]
    }

    pub fn pinned(&self) -> impl Iterator<Item = usize> + '_ {
        self.pinned
            .iter()
            .enumerate()
            .filter(|(_, &p)| p)
            .map(|(i, _)| i)
    }

    /// Number of followers receiving the leader's state directly.
    pub fn pinned_count(&self) -> usize {
        self.pinned.iter().filter(|&&p| p).count()
    }

    /// Communication links: each undirected follower edge once plus each pin.
    pub fn link_count(&self) -> usize {
        self.edges.len() + self.pinned_count()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter_map(move |&(a, b)| {
            if a == i {
                Some(b)
            } else if b == i {
                Some(a)
            } else {
                None
            }
        })
    }

    /// Returns a copy with one more follower edge. Returns `None` when the
    /// edge already exists or is a self-loop.
    pub fn with_edge(&self, i: usize, j: usize) -> Option<Topology> {
        if i == j || i >= self.n || j >= self.n || self.has_edge(i, j) {
            return None;
        }
        let mut t = self.clone();
        t.edges.insert((i.min(j), i.max(j)));
        Some(t)
    }

    /// Returns a copy with follower `i` pinned, or `None` if it already is.
    pub fn with_pin(&self, i: usize) -> Option<Topology> {
        if i >= self.n || self.pinned[i] {
            return None;
        }
        let mut t = self.clone();
        t.pinned[i] = true;
        Some(t)
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    pub fn pinning(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n,
            self.pinned.iter().map(|&p| if p { 1.0 } else { 0.0 }),
        )
    }

    /// Builds `L + P` and the in-degree vector.
    pub fn assemble(&self) -> TopologyMatrix {
        let n = self.n;
        let mut degree = DVector::zeros(n);
        let mut lp = DMatrix::zeros(n, n);
        for &(i, j) in &self.edges {
            degree[i] += 1.0;
            degree[j] += 1.0;
            lp[(i, j)] = -1.0;
            lp[(j, i)] = -1.0;
        }
        for i in 0..n {
            lp[(i, i)] = degree[i] + if self.pinned[i] { 1.0 } else { 0.0 };
        }
        TopologyMatrix { lp, degree }
    }

    /// True iff every follower is reachable from the leader in the augmented
    /// graph (leader -> pinned followers -> undirected follower edges).
    pub fn satisfies_spanning_tree(&self) -> bool {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = self.pinned.clone();
        let mut queue: VecDeque<usize> = self.pinned().collect();
        while let Some(u) = queue.pop_front() {
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    pub fn to_json(&self) -> TopologyJson {
        TopologyJson {
            n: self.n,
            edges: self.edges.iter().map(|&(i, j)| [i + 1, j + 1]).collect(),
            pinned: self.pinned().map(|i| i + 1).collect(),
        }
    }

    pub fn from_json(json: &TopologyJson) -> Result<Self> {
        let to_zero = |i: usize| {
            i.checked_sub(1).ok_or_else(|| {
                Error::InvalidTopology("follower indices are 1-based; 0 is the leader".into())
            })
        };
        let edges = json
            .edges
            .iter()
            .map(|&[i, j]| Ok((to_zero(i)?, to_zero(j)?)))
            .collect::<Result<Vec<_>>>()?;
        let pinned = json
            .pinned
            .iter()
            .map(|&i| to_zero(i))
            .collect::<Result<Vec<_>>>()?;
        Topology::new(json.n, edges, pinned)
    }
}

/// Serialized topology: `{n, edges: [[i, j], ...], pinned: [i, ...]}` with
/// 1-based follower indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyJson {
    pub n: usize,
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
    #[serde(default)]
    pub pinned: Vec<usize>,
}

impl Serialize for Topology {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Topology {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let json = TopologyJson::deserialize(d)?;
        Topology::from_json(&json).map_err(serde::de::Error::custom)
    }
}

/// `L + P` together with follower in-degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyMatrix {
    pub lp: DMatrix<f64>,
    pub degree: DVector<f64>,
}

impl TopologyMatrix {
    pub fn n(&self) -> usize {
        self.lp.nrows()
    }

    /// Eigen-decomposition of `L + P`.
    pub fn spectrum(&self) -> Result<Spectrum> {
        let e = linalg::symmetric_eigen(&self.lp)?;
        Ok(Spectrum {
            eigenvalues: e.values,
            eigenvectors: e.vectors,
        })
    }
}

/// Ascending eigenvalues of `L + P` with an orthogonal eigenvector matrix.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Spectrum of a diagonal matrix with the given entries; eigenvectors
    /// are the identity.
    pub fn from_eigenvalues(values: &[f64]) -> Spectrum {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Spectrum {
            eigenvectors: DMatrix::identity(v.len(), v.len()),
            eigenvalues: DVector::from_vec(v),
        }
    }
}

/// `λ_min(L + P)` of a topology.
pub fn lambda_min(topology: &Topology) -> Result<f64> {
    Ok(topology.assemble().spectrum()?.lambda_min())
}
