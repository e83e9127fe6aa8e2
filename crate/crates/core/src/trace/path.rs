//! Layered closest-maxima path search.
//!
//! Every ray that has local maxima becomes one layer. The path starts at the
//! first maximum of the first layer and visits exactly one maximum per layer,
//! minimizing the summed Euclidean distance between consecutive picks. The
//! search is A* over `(layer, node)` states with the distance to the nearest
//! node of the final layer as heuristic. That heuristic never overestimates
//! (any completion must reach some final node) and is consistent, so the
//! first time a final-layer state is popped its cost is optimal.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::volume::distance;

use super::{LocalMaximum, TraceError};

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub ray_index: usize,
    pub timepoint: i32,
    pub nodes: Vec<LocalMaximum>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGraph {
    pub layers: Vec<Layer>,
    /// Rays without any maximum, which were left out of the layering.
    pub gaps: Vec<usize>,
}

impl LayerGraph {
    /// Layers in capture order. Fails when no ray has a maximum.
    pub fn new(maxima_per_ray: Vec<(i32, Vec<LocalMaximum>)>) -> Result<Self, TraceError> {
        let mut layers = Vec::new();
        let mut gaps = Vec::new();
        for (ray_index, (timepoint, nodes)) in maxima_per_ray.into_iter().enumerate() {
            if nodes.is_empty() {
                gaps.push(ray_index);
            } else {
                layers.push(Layer { ray_index, timepoint, nodes });
            }
        }
        if layers.is_empty() {
            return Err(TraceError::ExtractionFailed("no ray contains a local maximum".into()));
        }
        Ok(LayerGraph { layers, gaps })
    }

    /// The fixed start: the maximum nearest the ray origin in the first layer.
    pub fn start(&self) -> &LocalMaximum {
        self.layers[0]
            .nodes
            .iter()
            .min_by_key(|m| m.sample_index)
            .expect("layers are never empty")
    }

    fn start_index(&self) -> usize {
        let nodes = &self.layers[0].nodes;
        (0..nodes.len()).min_by_key(|&i| nodes[i].sample_index).expect("layers are never empty")
    }

    pub fn edge_cost(&self, layer: usize, from: usize, to: usize) -> f64 {
        distance(
            self.layers[layer].nodes[from].world_position,
            self.layers[layer + 1].nodes[to].world_position,
        )
    }

    /// Total cost of a path given as one node index per layer.
    pub fn path_cost(&self, nodes: &[usize]) -> f64 {
        nodes.windows(2).enumerate().map(|(k, w)| self.edge_cost(k, w[0], w[1])).sum()
    }

    /// Minimum-cost path from [`start`](Self::start) through every layer.
    pub fn shortest_path(&self) -> LayerPath {
        let last = self.layers.len() - 1;
        let start = self.start_index();
        if last == 0 {
            return LayerPath { nodes: vec![start], cost: 0.0 };
        }
        let finals: Vec<[f64; 3]> = self.layers[last].nodes.iter().map(|m| m.world_position).collect();
        let heuristic = |layer: usize, node: usize| -> f64 {
            if layer == last {
                return 0.0;
            }
            let p = self.layers[layer].nodes[node].world_position;
            finals.iter().map(|&f| distance(p, f)).fold(f64::INFINITY, f64::min)
        };

        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |acc, l| {
                let o = *acc;
                *acc += l.nodes.len();
                Some(o)
            })
            .collect();
        let total = offsets[last] + self.layers[last].nodes.len();
        let mut best = vec![f64::INFINITY; total];
        let mut parent = vec![usize::MAX; total];
        let mut closed = vec![false; total];
        let mut open = BinaryHeap::new();

        best[offsets[0] + start] = 0.0;
        open.push(Entry { f: heuristic(0, start), g: 0.0, layer: 0, node: start });
        while let Some(Entry { g, layer, node, .. }) = open.pop() {
            let id = offsets[layer] + node;
            if closed[id] {
                continue;
            }
            closed[id] = true;
            if layer == last {
                let mut nodes = vec![node];
                let mut cur = id;
                for l in (0..last).rev() {
                    cur = parent[cur];
                    nodes.push(cur - offsets[l]);
                }
                nodes.reverse();
                return LayerPath { nodes, cost: g };
            }
            for next in 0..self.layers[layer + 1].nodes.len() {
                let nid = offsets[layer + 1] + next;
                if closed[nid] {
                    continue;
                }
                let ng = g + self.edge_cost(layer, node, next);
                if ng < best[nid] {
                    best[nid] = ng;
                    parent[nid] = id;
                    open.push(Entry { f: ng + heuristic(layer + 1, next), g: ng, layer: layer + 1, node: next });
                }
            }
        }
        unreachable!("every layer is non-empty, so the final layer is reachable")
    }
}

/// One node index per layer plus the summed edge cost.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerPath {
    pub nodes: Vec<usize>,
    pub cost: f64,
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    f: f64,
    g: f64,
    layer: usize,
    node: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // min-heap on f, preferring deeper layers, then lower node index
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(self.layer.cmp(&other.layer))
            .then(other.node.cmp(&self.node))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn max_at(ray: usize, sample: usize, p: [f64; 3]) -> LocalMaximum {
        LocalMaximum { ray_index: ray, sample_index: sample, world_position: p, value: 1.0 }
    }

    /// Exhaustive enumeration of every path from the start node.
    fn brute_force(g: &LayerGraph) -> (f64, Vec<Vec<usize>>) {
        let mut paths: Vec<Vec<usize>> = vec![vec![g.start_index()]];
        for layer in &g.layers[1..] {
            paths = paths
                .into_iter()
                .flat_map(|p| {
                    (0..layer.nodes.len()).map(move |n| {
                        let mut q = p.clone();
                        q.push(n);
                        q
                    })
                })
                .collect();
        }
        let best = paths.iter().map(|p| g.path_cost(p)).fold(f64::INFINITY, f64::min);
        let optimal = paths.into_iter().filter(|p| (g.path_cost(p) - best).abs() < 1e-9).collect();
        (best, optimal)
    }

    #[test]
    fn forced_path_cost_is_sum_of_steps() {
        let g = LayerGraph::new(vec![
            (3, vec![max_at(0, 4, [0.0, 0.0, 0.0])]),
            (2, vec![max_at(1, 4, [3.0, 4.0, 0.0])]),
            (1, vec![max_at(2, 4, [3.0, 4.0, 2.0])]),
        ])
        .unwrap();
        let p = g.shortest_path();
        assert_eq!(p.nodes, vec![0, 0, 0]);
        assert_eq!(p.cost, 7.0);
    }

    #[test]
    fn start_is_first_maximum_along_first_ray() {
        let g = LayerGraph::new(vec![
            (0, vec![]),
            (0, vec![max_at(1, 7, [7.0, 0.0, 0.0]), max_at(1, 30, [30.0, 0.0, 0.0])]),
            (0, vec![max_at(2, 30, [30.0, 0.0, 0.0])]),
        ])
        .unwrap();
        assert_eq!(g.start().sample_index, 7);
        assert_eq!(g.gaps, vec![0]);
        // even though starting at 30 would be free, the start is fixed
        let p = g.shortest_path();
        assert_eq!(p.nodes[0], 0);
        assert_eq!(p.cost, 23.0);
    }

    #[test]
    fn empty_rays_become_gaps() {
        let g = LayerGraph::new(vec![
            (2, vec![max_at(0, 1, [0.0; 3])]),
            (1, vec![]),
            (0, vec![max_at(2, 1, [1.0, 0.0, 0.0])]),
        ])
        .unwrap();
        assert_eq!(g.layers.len(), 2);
        assert_eq!(g.gaps, vec![1]);
        assert!(LayerGraph::new(vec![(0, vec![]), (1, vec![])]).is_err());
    }

    #[test]
    fn closest_chain_beats_greedy() {
        // greedy from the start would pick the near node in layer 1 and then
        // pay a large jump; the optimum takes a slightly longer first step
        let g = LayerGraph::new(vec![
            (0, vec![max_at(0, 1, [0.0, 0.0, 0.0])]),
            (1, vec![max_at(1, 1, [1.0, 0.0, 0.0]), max_at(1, 2, [0.0, 1.5, 0.0])]),
            (2, vec![max_at(2, 1, [0.0, 2.0, 0.0])]),
        ])
        .unwrap();
        let p = g.shortest_path();
        assert_eq!(p.nodes, vec![0, 1, 0]);
        assert!((p.cost - 2.0).abs() < 1e-12);
        assert_eq!(brute_force(&g).0, p.cost);
    }

    fn arb_graph() -> impl Strategy<Value = LayerGraph> {
        let node = (0usize..60, prop::array::uniform3(-10.0f64..10.0));
        let layer = prop::collection::vec(node, 1..=4);
        prop::collection::vec(layer, 1..=8).prop_map(|layers| {
            LayerGraph::new(
                layers
                    .into_iter()
                    .enumerate()
                    .map(|(r, nodes)| {
                        let mut nodes: Vec<_> = nodes.into_iter().map(|(s, p)| max_at(r, s, p)).collect();
                        nodes.sort_by_key(|m| m.sample_index);
                        (r as i32, nodes)
                    })
                    .collect(),
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn astar_matches_enumeration(g in arb_graph()) {
            let p = g.shortest_path();
            let (best, optimal) = brute_force(&g);
            prop_assert!((p.cost - best).abs() < 1e-9, "astar {} brute {}", p.cost, best);
            prop_assert!((g.path_cost(&p.nodes) - p.cost).abs() < 1e-9);
            prop_assert!(optimal.contains(&p.nodes));
        }
    }
}
