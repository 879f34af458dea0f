//! Graph-structure metrics: node count, path (edge) count, total, maximum and
//! average shortest-path length.
//!
//! Distances are unit-length breadth-first distances over the undirected view
//! of the graph, taken over ordered pairs `(u, v)` with `u != v`. Unreachable
//! pairs are left out of the path statistics and counted separately.
//!
//! Every source's traversal is independent, so with the `parallel` feature
//! they run on the rayon pool. Per-source results are integers reduced in
//! source order, so both execution modes give identical output.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::SplitMix64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphMetrics {
    pub node_count: u64,
    pub path_count: u64,
    pub tpl: u64,
    pub mpl: u64,
    pub apl: f64,
    pub reachable_pair_count: u64,
    pub unreachable_pair_count: u64,
    pub sampled: bool,
    pub sample_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        return Execution::Parallel;
        #[cfg(not(feature = "parallel"))]
        return Execution::Sequential;
    }
}

/// Compressed adjacency of the undirected view, indexed by dense node
/// position (node id sequence minus one). Neighbor lists are deduplicated and
/// self-loops dropped since they never shorten a path.
#[derive(Debug, Clone)]
pub struct UndirectedView {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl UndirectedView {
    pub fn new(graph: &Graph) -> Self {
        let n = graph.node_count();
        let mut lists: Vec<Vec<u32>> = vec![Vec::new(); n];
        for e in graph.edges() {
            let (s, d) = ((e.src.seq() - 1) as u32, (e.dst.seq() - 1) as u32);
            if s != d {
                lists[s as usize].push(d);
                lists[d as usize].push(s);
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for mut list in lists {
            list.sort_unstable();
            list.dedup();
            targets.extend(list);
            offsets.push(targets.len());
        }
        Self { offsets, targets }
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    fn neighbors(&self, v: usize) -> &[u32] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    /// Breadth-first traversal from `source`, reusing `scratch` between calls.
    pub fn traverse(&self, source: usize, scratch: &mut Scratch) -> SourceStats {
        let n = self.node_count();
        scratch.reset(n);
        let Scratch { dist, queue } = scratch;
        dist[source] = 0;
        queue.push_back(source as u32);
        let mut stats = SourceStats::default();
        while let Some(u) = queue.pop_front() {
            let du = dist[u as usize];
            if du > 0 {
                stats.total += u64::from(du);
                stats.max = stats.max.max(u64::from(du));
                stats.reached += 1;
            }
            for &v in self.neighbors(u as usize) {
                if dist[v as usize] == u32::MAX {
                    dist[v as usize] = du + 1;
                    queue.push_back(v);
                }
            }
        }
        stats
    }
}

/// Per-traversal buffers.
#[derive(Debug, Default)]
pub struct Scratch {
    dist: Vec<u32>,
    queue: VecDeque<u32>,
}

impl Scratch {
    fn reset(&mut self, n: usize) {
        self.dist.clear();
        self.dist.resize(n, u32::MAX);
        self.queue.clear();
    }
}

/// Shortest-path totals from one source to every node it reaches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SourceStats {
    pub total: u64,
    pub max: u64,
    pub reached: u64,
}

/// Runs one traversal per source and returns the stats in source order.
pub fn traverse_sources(view: &UndirectedView, sources: &[usize], execution: Execution) -> Vec<SourceStats> {
    match execution {
        Execution::Sequential => {
            let mut scratch = Scratch::default();
            sources.iter().map(|&s| view.traverse(s, &mut scratch)).collect()
        }
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            sources
                .par_iter()
                .map_init(Scratch::default, |scratch, &s| view.traverse(s, scratch))
                .collect()
        }
    }
}

fn reduce(stats: &[SourceStats]) -> SourceStats {
    stats.iter().fold(SourceStats::default(), |acc, s| SourceStats {
        total: acc.total + s.total,
        max: acc.max.max(s.max),
        reached: acc.reached + s.reached,
    })
}

fn ordered_pairs(n: u64) -> u64 {
    n * n.saturating_sub(1)
}

/// `round(numerator / denominator)` with halves rounded up, in exact integers.
fn div_round(numerator: u128, denominator: u128) -> u64 {
    ((2 * numerator + denominator) / (2 * denominator)) as u64
}

pub fn exact_metrics(graph: &Graph) -> GraphMetrics {
    exact_metrics_with(graph, Execution::default())
}

pub fn exact_metrics_with(graph: &Graph, execution: Execution) -> GraphMetrics {
    let view = UndirectedView::new(graph);
    let n = view.node_count();
    let sources: Vec<usize> = (0..n).collect();
    let total = reduce(&traverse_sources(&view, &sources, execution));
    let pairs = ordered_pairs(n as u64);
    GraphMetrics {
        node_count: n as u64,
        path_count: graph.edge_count() as u64,
        tpl: total.total,
        mpl: total.max,
        apl: if total.reached == 0 { 0.0 } else { total.total as f64 / total.reached as f64 },
        reachable_pair_count: total.reached,
        unreachable_pair_count: pairs - total.reached,
        sampled: false,
        sample_fraction: 1.0,
        seed: None,
    }
}

/// Number of sources drawn for a sampling fraction: `max(1, ceil(f * n))`.
/// Products within 1e-9 of an integer are treated as that integer so that,
/// say, 0.3 of 10 nodes is 3 sources rather than 4.
pub fn sample_size(fraction: f64, node_count: usize) -> usize {
    let x = fraction * node_count as f64;
    let nearest = x.round();
    let m = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) { nearest } else { x.ceil() };
    (m as usize).clamp(1, node_count.max(1))
}

/// Draws `m` distinct positions out of `0..n` with the seeded generator: each
/// draw `u` picks index `u mod remaining` from the ascending list of positions
/// not yet taken, which is then removed.
pub fn draw_sources(n: usize, m: usize, seed: u64) -> Vec<usize> {
    let mut rng = SplitMix64::new(seed);
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut picked = Vec::with_capacity(m);
    for _ in 0..m.min(n) {
        let i = (rng.next_u64() % remaining.len() as u64) as usize;
        picked.push(remaining.remove(i));
    }
    picked
}

pub fn sampled_metrics(graph: &Graph, fraction: f64, seed: u64) -> Result<GraphMetrics> {
    sampled_metrics_with(graph, fraction, seed, Execution::default())
}

/// Estimates the metrics from breadth-first traversals out of a seeded
/// sample of source nodes. `apl` and `mpl` are the observed mean and maximum;
/// `tpl` scales `apl` to all ordered pairs, and the reachable count scales the
/// observed reachable fraction the same way.
pub fn sampled_metrics_with(graph: &Graph, fraction: f64, seed: u64, execution: Execution) -> Result<GraphMetrics> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("sample fraction must be in (0, 1], got {fraction}")));
    }
    let view = UndirectedView::new(graph);
    let n = view.node_count();
    if n == 0 {
        return Err(Error::InvalidArgument("cannot sample an empty graph".into()));
    }
    let m = sample_size(fraction, n);
    let sources = draw_sources(n, m, seed);
    let total = reduce(&traverse_sources(&view, &sources, execution));
    let pairs = ordered_pairs(n as u64);
    let (tpl, apl) = if total.reached == 0 {
        (0, 0.0)
    } else {
        (
            div_round(u128::from(total.total) * u128::from(pairs), u128::from(total.reached)),
            total.total as f64 / total.reached as f64,
        )
    };
    let reachable = div_round(u128::from(total.reached) * n as u128, m as u128).min(pairs);
    Ok(GraphMetrics {
        node_count: n as u64,
        path_count: graph.edge_count() as u64,
        tpl,
        mpl: total.max,
        apl,
        reachable_pair_count: reachable,
        unreachable_pair_count: pairs - reachable,
        sampled: true,
        sample_fraction: fraction,
        seed: Some(seed),
    })
}
