//! Link-budgeted search for topologies with large `λ_min(L+P)`.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{lambda_min, Topology, TopologyJson};

/// Largest follower count accepted by [`optimize_exhaustive`].
pub const EXHAUSTIVE_MAX_N: usize = 6;

/// Two `λ_min` values closer than this are treated as a tie.
const TIE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exhaustive,
    Greedy,
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub best: Topology,
    pub lambda_min: f64,
    pub links_used: usize,
    pub method: Method,
    /// `min(1, pinned/n)`.
    pub upper_bound: f64,
}

/// Topology JSON fields plus the search summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizationJson {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    pub pinned: Vec<usize>,
    pub lambda_min: f64,
    pub links_used: usize,
    pub method: Method,
    pub upper_bound: f64,
}

impl OptimizationJson {
    pub fn topology(&self) -> TopologyJson {
        TopologyJson {
            n: self.n,
            edges: self.edges.clone(),
            pinned: self.pinned.clone(),
        }
    }
}

impl OptimizationResult {
    fn new(best: Topology, lambda_min: f64, method: Method) -> Self {
        let upper_bound = lambda_min_bounds(&best).map_or(1.0, |b| b.ratio_bound.min(1.0));
        OptimizationResult {
            links_used: best.link_count(),
            best,
            lambda_min,
            method,
            upper_bound,
        }
    }

    pub fn to_json(&self) -> OptimizationJson {
        let TopologyJson { n, edges, pinned } = self.best.to_json();
        OptimizationJson {
            n,
            edges,
            pinned,
            lambda_min: self.lambda_min,
            links_used: self.links_used,
            method: self.method,
            upper_bound: self.upper_bound,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaBounds {
    pub lambda_min: f64,
    pub upper_one: f64,
    /// Pinned fraction `Ω/N`.
    pub ratio_bound: f64,
}

pub fn lambda_min_bounds(topology: &Topology) -> Result<LambdaBounds> {
    Ok(LambdaBounds {
        lambda_min: lambda_min(topology)?,
        upper_one: 1.0,
        ratio_bound: topology.pinned_count() as f64 / topology.n() as f64,
    })
}

fn check_budget(n: usize, budget: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one follower".into()));
    }
    // A pin plus a spanning tree over the followers is the cheapest
    // configuration that reaches everyone.
    if budget < 1 || budget < n {
        return Err(Error::InfeasibleBudget { n, budget });
    }
    Ok(())
}

/// Links in the augmented graph with the leader as node 0: a pin on
/// follower `i` is `(0, i+1)`, an edge `(i, j)` is `(i+1, j+1)`.
fn link_key(t: &Topology) -> Vec<(usize, usize)> {
    let mut links: Vec<(usize, usize)> = t
        .pinned()
        .map(|i| (0, i + 1))
        .chain(t.edges().map(|(i, j)| (i + 1, j + 1)))
        .collect();
    links.sort_unstable();
    links
}

struct Candidate {
    topology: Topology,
    lambda: f64,
    key: Vec<(usize, usize)>,
}

/// `Less` means `a` is preferred.
fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    if (a.lambda - b.lambda).abs() > TIE {
        return b.lambda.partial_cmp(&a.lambda).unwrap_or(Ordering::Equal);
    }
    a.key
        .len()
        .cmp(&b.key.len())
        .then_with(|| a.key.cmp(&b.key))
}

/// Globally optimal over every follower graph and pinning set with at most
/// `budget` links that reaches all followers from the leader.
pub fn optimize_exhaustive(n: usize, budget: usize) -> Result<OptimizationResult> {
    if n > EXHAUSTIVE_MAX_N {
        return Err(Error::InvalidParameter(format!(
            "exhaustive search supports n ≤ {EXHAUSTIVE_MAX_N}, got {n}"
        )));
    }
    check_budget(n, budget)?;
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let bits = pairs.len() + n;
    let best = (0u64..1 << bits)
        .into_par_iter()
        .filter(|mask| {
            let used = mask.count_ones() as usize;
            used >= n && used <= budget
        })
        .filter_map(|mask| {
            let edges: BTreeSet<(usize, usize)> = pairs
                .iter()
                .enumerate()
                .filter(|(b, _)| mask >> b & 1 == 1)
                .map(|(_, e)| *e)
                .collect();
            let pinned = (0..n).filter(|i| mask >> (pairs.len() + i) & 1 == 1);
            let topology = Topology::new(n, edges, pinned).ok()?;
            if !topology.satisfies_spanning_tree() {
                return None;
            }
            let lambda = lambda_min(&topology).ok()?;
            Some(Candidate {
                key: link_key(&topology),
                topology,
                lambda,
            })
        })
        .min_by(rank)
        .ok_or(Error::InfeasibleBudget { n, budget })?;
    Ok(OptimizationResult::new(
        best.topology,
        best.lambda,
        Method::Exhaustive,
    ))
}

/// Starts from the bidirectional chain with follower 0 pinned and adds the
/// single most helpful link until the budget is spent or no link helps.
pub fn optimize_greedy(n: usize, budget: usize) -> Result<OptimizationResult> {
    check_budget(n, budget)?;
    let mut current = Topology::bd(n)?;
    let mut lambda = lambda_min(&current)?;
    while current.link_count() < budget {
        let pins = (0..n).filter_map(|i| current.with_pin(i));
        let edges = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter_map(|(i, j)| current.with_edge(i, j));
        // Candidate order encodes the tie-break: pins first, then by index.
        let mut candidates: Vec<Topology> = pins.chain(edges).collect();
        let scored: Vec<f64> = candidates
            .par_iter()
            .map(|t| lambda_min(t).unwrap_or(f64::NEG_INFINITY))
            .collect();
        let mut pick: Option<usize> = None;
        for (idx, l) in scored.iter().enumerate() {
            match pick {
                Some(p) if *l <= scored[p] + TIE => {}
                _ => pick = Some(idx),
            }
        }
        match pick {
            Some(p) if scored[p] > lambda + TIE => {
                lambda = scored[p];
                current = candidates.swap_remove(p);
            }
            _ => break,
        }
    }
    Ok(OptimizationResult::new(current, lambda, Method::Greedy))
}
