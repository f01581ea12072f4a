//! Instantaneous-dependency graph over port outputs and its topological order.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::matrix::{ColBlock, InterconnectionMatrix, RowBlock};
use crate::error::{check_len, Error, Result};

/// Port node indices.
pub const BASE_NODE: usize = 0;
pub const AUG_NODE: usize = 1;

/// Directed graph whose edge `a -> b` means `w_a` must be known before `w_b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyGraph {
    n: usize,
    succ: Vec<Vec<usize>>,
}

impl DependencyGraph {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut succ = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a}, {b}) outside a graph of {n} nodes"
                )));
            }
            if !succ[a].contains(&b) {
                succ[a].push(b);
            }
        }
        for s in &mut succ {
            s.sort_unstable();
        }
        Ok(DependencyGraph { n, succ })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.succ
            .iter()
            .enumerate()
            .flat_map(|(a, s)| s.iter().map(move |b| (a, *b)))
            .collect()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.succ[a].contains(&b)
    }

    fn find_cycle(&self, alive: &[bool]) -> Vec<usize> {
        // Iterative DFS restricted to nodes Kahn's algorithm could not place.
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Open,
            Done,
        }
        let mut mark = vec![Mark::New; self.n];
        for root in (0..self.n).filter(|v| alive[*v]) {
            if mark[root] != Mark::New {
                continue;
            }
            let mut path = vec![root];
            let mut next_child = vec![0usize];
            mark[root] = Mark::Open;
            while let Some(&v) = path.last() {
                let i = next_child.last_mut().unwrap();
                let children: Vec<usize> = self.succ[v].iter().copied().filter(|w| alive[*w]).collect();
                if *i < children.len() {
                    let w = children[*i];
                    *i += 1;
                    match mark[w] {
                        Mark::Open => {
                            let start = path.iter().position(|p| *p == w).unwrap();
                            let mut cycle = path[start..].to_vec();
                            cycle.push(w);
                            return cycle;
                        }
                        Mark::New => {
                            mark[w] = Mark::Open;
                            path.push(w);
                            next_child.push(0);
                        }
                        Mark::Done => {}
                    }
                } else {
                    mark[v] = Mark::Done;
                    path.pop();
                    next_child.pop();
                }
            }
        }
        unreachable!("nodes left over by Kahn's algorithm always contain a cycle")
    }
}

/// Builds the dependency graph over the two port groups.
///
/// `w_j -> w_i` is an edge when block `S_{z_i w_j}` is nonzero and port `i`
/// has at least one feedthrough output. State and input columns never create
/// edges since they are known at the start of a step.
pub fn build_dependency_graph(
    s: &InterconnectionMatrix,
    base_feedthrough: &[bool],
    aug_feedthrough: &[bool],
) -> Result<DependencyGraph> {
    let d = s.dims();
    check_len("baseline feedthrough mask", d.n_w1, base_feedthrough.len())?;
    check_len("augmentation feedthrough mask", d.n_w2, aug_feedthrough.len())?;
    let ft = [
        base_feedthrough.iter().any(|f| *f),
        aug_feedthrough.iter().any(|f| *f),
    ];
    let z_rows = [RowBlock::Z1, RowBlock::Z2];
    let w_cols = [ColBlock::W1, ColBlock::W2];
    let mut edges = Vec::new();
    for (i, zr) in z_rows.iter().enumerate() {
        if !ft[i] {
            continue;
        }
        for (j, wc) in w_cols.iter().enumerate() {
            if !s.block_is_zero(*zr, *wc) {
                edges.push((j, i));
            }
        }
    }
    DependencyGraph::new(2, &edges)
}

/// Returns a topological order (ties broken by ascending node index), or a
/// witness cycle when the graph has one.
pub fn check_well_posedness(g: &DependencyGraph) -> Result<Vec<usize>> {
    let mut indeg = vec![0usize; g.n];
    for s in &g.succ {
        for b in s {
            indeg[*b] += 1;
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..g.n).filter(|v| indeg[*v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(g.n);
    while let Some(Reverse(v)) = ready.pop() {
        order.push(v);
        for &w in &g.succ[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                ready.push(Reverse(w));
            }
        }
    }
    if order.len() == g.n {
        return Ok(order);
    }
    let alive: Vec<bool> = indeg.iter().map(|d| *d > 0).collect();
    Err(Error::CyclicInterconnection {
        cycle: g.find_cycle(&alive),
    })
}
