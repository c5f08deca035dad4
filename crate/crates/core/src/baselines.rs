//! Greedy influence maximization under the Independent Cascade model:
//! naive greedy, CELF and CELF++.
//!
//! Spread is estimated with live-edge sampling: in cascade `r` the edge `e` is
//! live iff a hash of `(seed, r, e)` falls below its activation probability.
//! Every evaluation therefore sees the same sampled worlds, which keeps the
//! estimate exactly submodular and lets the three selectors agree.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::ids::UserId;
use crate::rng::mix64;
use crate::simulator::{InfluencerRanking, RankedInfluencer};

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("activation probability {0} outside (0, 1]")]
    InvalidProbability(f64),
    #[error("monte carlo runs must be at least 1")]
    NoRuns,
    #[error("cannot pick {k} seeds from {available} candidates")]
    KTooLarge { k: usize, available: usize },
    #[error("node index {0} out of range")]
    UnknownNode(usize),
    #[error("unknown user {0}")]
    UnknownUser(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcModel {
    /// Uniform activation probability.
    pub p: f64,
    pub runs: u32,
    pub seed: u64,
    /// Per-edge overrides keyed by `(source, target)` node index.
    #[serde(skip)]
    pub edge_p: HashMap<(usize, usize), f64>,
}

impl Default for IcModel {
    fn default() -> Self {
        Self {
            p: 0.1,
            runs: 1000,
            seed: 0,
            edge_p: HashMap::new(),
        }
    }
}

impl IcModel {
    pub fn validate(&self) -> Result<(), BaselineError> {
        for &p in std::iter::once(&self.p).chain(self.edge_p.values()) {
            if !(p > 0.0 && p <= 1.0) {
                return Err(BaselineError::InvalidProbability(p));
            }
        }
        if self.runs == 0 {
            return Err(BaselineError::NoRuns);
        }
        Ok(())
    }
}

/// Directed diffusion graph; an edge `a -> b` lets `a` activate `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct IcGraph {
    labels: Vec<UserId>,
    /// (target, global edge index) per source.
    out: Vec<Vec<(usize, usize)>>,
    edges: Vec<(usize, usize)>,
}

impl IcGraph {
    pub fn from_edges(labels: Vec<UserId>, edges: &[(usize, usize)]) -> Result<Self, BaselineError> {
        let n = labels.len();
        let mut out = vec![Vec::new(); n];
        for (i, &(a, b)) in edges.iter().enumerate() {
            for x in [a, b] {
                if x >= n {
                    return Err(BaselineError::UnknownNode(x));
                }
            }
            out[a].push((b, i));
        }
        Ok(Self {
            labels,
            out,
            edges: edges.to_vec(),
        })
    }

    /// Numbered nodes `n0, n1, ...`.
    pub fn with_nodes(n: usize, edges: &[(usize, usize)]) -> Result<Self, BaselineError> {
        Self::from_edges((0..n).map(|i| UserId::new(format!("n{i}"))).collect(), edges)
    }

    /// Influence flows from each influencer to its followers.
    pub fn from_dataset(data: &Dataset) -> Self {
        let labels: Vec<UserId> = data.users().iter().map(|u| u.user_id.clone()).collect();
        let edges: Vec<(usize, usize)> = data
            .follows()
            .iter()
            .map(|f| {
                let a = data.user_index(f.influencer_id.as_str()).expect("validated dataset");
                let b = data.user_index(f.follower_id.as_str()).expect("validated dataset");
                (a, b)
            })
            .collect();
        Self::from_edges(labels, &edges).expect("indices come from the dataset")
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn label(&self, i: usize) -> &UserId {
        &self.labels[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.labels.iter().position(|l| l.as_str() == id)
    }
}

/// Live-edge spread oracle with precomputed per-edge thresholds.
pub struct SpreadOracle<'a> {
    graph: &'a IcGraph,
    thresholds: Vec<u64>,
    run_keys: Vec<u64>,
}

impl<'a> SpreadOracle<'a> {
    pub fn new(graph: &'a IcGraph, model: &IcModel) -> Result<Self, BaselineError> {
        model.validate()?;
        let thresholds = graph
            .edges
            .iter()
            .map(|e| {
                let p = model.edge_p.get(e).copied().unwrap_or(model.p);
                if p >= 1.0 {
                    u64::MAX
                } else {
                    (p * 2f64.powi(64)) as u64
                }
            })
            .collect();
        let run_keys = (0..u64::from(model.runs))
            .map(|r| mix64(model.seed ^ mix64(r.wrapping_add(0x1C))))
            .collect();
        Ok(Self {
            graph,
            thresholds,
            run_keys,
        })
    }

    fn live(&self, run_key: u64, edge: usize) -> bool {
        let t = self.thresholds[edge];
        t == u64::MAX || mix64(run_key ^ (edge as u64).wrapping_mul(0xA24B_AED4_963E_E407)) < t
    }

    fn cascade(&self, run_key: u64, seeds: &[usize], visited: &mut [bool], stack: &mut Vec<usize>) -> u64 {
        let mut touched = Vec::new();
        for &s in seeds {
            if !visited[s] {
                visited[s] = true;
                touched.push(s);
                stack.push(s);
            }
        }
        while let Some(a) = stack.pop() {
            for &(b, e) in &self.graph.out[a] {
                if !visited[b] && self.live(run_key, e) {
                    visited[b] = true;
                    touched.push(b);
                    stack.push(b);
                }
            }
        }
        for &v in &touched {
            visited[v] = false;
        }
        touched.len() as u64
    }

    /// Total activations summed over all cascades.
    pub fn total(&self, seeds: &[usize]) -> u64 {
        let n = self.graph.node_count();
        self.run_keys
            .par_chunks(64)
            .map(|keys| {
                let mut visited = vec![false; n];
                let mut stack = Vec::new();
                keys.iter()
                    .map(|&k| self.cascade(k, seeds, &mut visited, &mut stack))
                    .sum::<u64>()
            })
            .sum()
    }

    pub fn spread(&self, seeds: &[usize]) -> f64 {
        self.total(seeds) as f64 / self.run_keys.len() as f64
    }

    pub fn runs(&self) -> usize {
        self.run_keys.len()
    }
}

/// Mean activated-set size over the model's Monte Carlo cascades.
pub fn ic_spread(graph: &IcGraph, seeds: &[usize], model: &IcModel) -> Result<f64, BaselineError> {
    if let Some(&bad) = seeds.iter().find(|&&s| s >= graph.node_count()) {
        return Err(BaselineError::UnknownNode(bad));
    }
    Ok(SpreadOracle::new(graph, model)?.spread(seeds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub seeds: Vec<usize>,
    /// Marginal spread gain of each seed when it was picked.
    pub gains: Vec<f64>,
    /// Node marginal-gain evaluations performed.
    pub evaluations: u64,
}

fn check_k(k: usize, candidates: &[usize], graph: &IcGraph) -> Result<(), BaselineError> {
    if let Some(&bad) = candidates.iter().find(|&&c| c >= graph.node_count()) {
        return Err(BaselineError::UnknownNode(bad));
    }
    if k > candidates.len() {
        return Err(BaselineError::KTooLarge {
            k,
            available: candidates.len(),
        });
    }
    Ok(())
}

fn sorted_unique(candidates: &[usize]) -> Vec<usize> {
    let mut c = candidates.to_vec();
    c.sort_unstable();
    c.dedup();
    c
}

fn finish(oracle: &SpreadOracle<'_>, seeds: Vec<usize>, gains: Vec<u64>, evaluations: u64) -> Selection {
    let r = oracle.runs() as f64;
    Selection {
        seeds,
        gains: gains.into_iter().map(|g| g as f64 / r).collect(),
        evaluations,
    }
}

/// Evaluates every remaining candidate each round; ties go to the smallest index.
pub fn greedy_select(
    graph: &IcGraph,
    candidates: &[usize],
    k: usize,
    model: &IcModel,
) -> Result<Selection, BaselineError> {
    let candidates = sorted_unique(candidates);
    check_k(k, &candidates, graph)?;
    let oracle = SpreadOracle::new(graph, model)?;
    let mut seeds: Vec<usize> = Vec::new();
    let mut gains = Vec::new();
    let mut base = 0u64;
    let mut evaluations = 0u64;
    for _ in 0..k {
        let mut best: Option<(u64, usize)> = None;
        for &c in candidates.iter().filter(|c| !seeds.contains(c)) {
            let mut with = seeds.clone();
            with.push(c);
            let gain = oracle.total(&with) - base;
            evaluations += 1;
            if best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, c));
            }
        }
        let (gain, c) = best.expect("k <= candidates");
        seeds.push(c);
        gains.push(gain);
        base += gain;
    }
    Ok(finish(&oracle, seeds, gains, evaluations))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Entry {
    gain: u64,
    node: usize,
    round: usize,
    /// CELF++: best node of the round when this entry was evaluated.
    prev_best: Option<usize>,
    /// CELF++: gain given the seed set plus `prev_best`.
    gain_given_prev_best: u64,
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain.cmp(&other.gain).then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lazy-forward greedy: stale gains upper-bound fresh ones, so a fresh top
/// of the queue is the round's argmax.
pub fn celf_select(
    graph: &IcGraph,
    candidates: &[usize],
    k: usize,
    model: &IcModel,
) -> Result<Selection, BaselineError> {
    let candidates = sorted_unique(candidates);
    check_k(k, &candidates, graph)?;
    let oracle = SpreadOracle::new(graph, model)?;
    let mut evaluations = 0u64;
    let mut heap: BinaryHeap<Entry> = candidates
        .iter()
        .map(|&c| {
            evaluations += 1;
            Entry {
                gain: oracle.total(&[c]),
                node: c,
                round: 0,
                prev_best: None,
                gain_given_prev_best: 0,
            }
        })
        .collect();
    let mut seeds = Vec::new();
    let mut gains = Vec::new();
    let mut base = 0u64;
    while seeds.len() < k {
        let mut top = heap.pop().expect("k <= candidates");
        if top.round == seeds.len() {
            seeds.push(top.node);
            gains.push(top.gain);
            base += top.gain;
            continue;
        }
        let mut with = seeds.clone();
        with.push(top.node);
        top.gain = oracle.total(&with) - base;
        top.round = seeds.len();
        evaluations += 1;
        heap.push(top);
    }
    Ok(finish(&oracle, seeds, gains, evaluations))
}

/// CELF with look-ahead: each evaluation also records the gain given the
/// round's current best node, which becomes exact for free if that node is
/// picked next.
pub fn celfpp_select(
    graph: &IcGraph,
    candidates: &[usize],
    k: usize,
    model: &IcModel,
) -> Result<Selection, BaselineError> {
    let candidates = sorted_unique(candidates);
    check_k(k, &candidates, graph)?;
    let oracle = SpreadOracle::new(graph, model)?;
    let mut evaluations = 0u64;
    let mut seeds: Vec<usize> = Vec::new();
    let mut gains = Vec::new();
    let mut base = 0u64;
    let mut last_seed: Option<usize> = None;
    // (node, gain) with the largest gain evaluated in the current round
    let mut cur_best: Option<(usize, u64)> = None;

    let evaluate = |seeds: &[usize], base: u64, node: usize, cur_best: Option<(usize, u64)>| -> (u64, u64) {
        let mut with = seeds.to_vec();
        with.push(node);
        let gain = oracle.total(&with) - base;
        let given = match cur_best {
            Some((b, b_gain)) => {
                with.push(b);
                oracle.total(&with) - base - b_gain
            }
            None => gain,
        };
        (gain, given)
    };
    let better = |gain: u64, node: usize, best: Option<(usize, u64)>| {
        best.is_none_or(|(b, g)| gain > g || (gain == g && node < b))
    };

    let mut heap = BinaryHeap::new();
    for &c in &candidates {
        let (gain, given) = evaluate(&seeds, base, c, cur_best);
        evaluations += 1;
        heap.push(Entry {
            gain,
            node: c,
            round: 0,
            prev_best: cur_best.map(|(b, _)| b),
            gain_given_prev_best: given,
        });
        if better(gain, c, cur_best) {
            cur_best = Some((c, gain));
        }
    }
    while seeds.len() < k {
        let mut top = heap.pop().expect("k <= candidates");
        if top.round == seeds.len() {
            seeds.push(top.node);
            gains.push(top.gain);
            base += top.gain;
            last_seed = Some(top.node);
            cur_best = None;
            continue;
        }
        if top.prev_best.is_some() && top.prev_best == last_seed && top.round + 1 == seeds.len() {
            top.gain = top.gain_given_prev_best;
        } else {
            let (gain, given) = evaluate(&seeds, base, top.node, cur_best);
            evaluations += 1;
            top.gain = gain;
            top.prev_best = cur_best.map(|(b, _)| b);
            top.gain_given_prev_best = given;
        }
        top.round = seeds.len();
        if better(top.gain, top.node, cur_best) {
            cur_best = Some((top.node, top.gain));
        }
        heap.push(top);
    }
    Ok(finish(&oracle, seeds, gains, evaluations))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Greedy,
    Celf,
    Celfpp,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Greedy => "greedy",
            Method::Celf => "celf",
            Method::Celfpp => "celfpp",
        }
    }

    pub fn select(
        self,
        graph: &IcGraph,
        candidates: &[usize],
        k: usize,
        model: &IcModel,
    ) -> Result<Selection, BaselineError> {
        match self {
            Method::Greedy => greedy_select(graph, candidates, k, model),
            Method::Celf => celf_select(graph, candidates, k, model),
            Method::Celfpp => celfpp_select(graph, candidates, k, model),
        }
    }
}

/// Ranks the campaign candidates by greedy selection order over the follow
/// graph; `k` defaults to every candidate.
pub fn rank_candidates(
    data: &Dataset,
    method: Method,
    k: Option<usize>,
    model: &IcModel,
) -> Result<(InfluencerRanking, Selection), BaselineError> {
    let graph = IcGraph::from_dataset(data);
    let candidates = data
        .campaign()
        .candidate_influencer_ids
        .iter()
        .map(|c| data.user_index(c.as_str()).ok_or_else(|| BaselineError::UnknownUser(c.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let k = k.unwrap_or(candidates.len());
    let sel = method.select(&graph, &candidates, k, model)?;
    let ranking = InfluencerRanking {
        method: method.name().into(),
        entries: sel
            .seeds
            .iter()
            .zip(&sel.gains)
            .enumerate()
            .map(|(i, (&s, &g))| RankedInfluencer {
                rank: i + 1,
                influencer_id: graph.label(s).clone(),
                score: g,
                detail: None,
            })
            .collect(),
    };
    Ok((ranking, sel))
}
