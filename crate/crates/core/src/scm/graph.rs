use std::collections::{BTreeSet, BinaryHeap};
use std::cmp::Reverse;

use sha2::{Digest, Sha256};

use super::ScmError;

/// Directed acyclic graph over named nodes.
///
/// `adj[p][c]` is true for an edge `p → c` (row = parent, column = child).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalGraph {
    names: Vec<String>,
    adj: Vec<Vec<bool>>,
    order: Vec<usize>,
}

impl CausalGraph {
    pub fn new(names: Vec<String>, edges: &[(usize, usize)]) -> Result<Self, ScmError> {
        let d = names.len();
        let mut seen = BTreeSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(ScmError::Invalid(format!("duplicate node name {n}")));
            }
        }
        let mut adj = vec![vec![false; d]; d];
        for &(p, c) in edges {
            if p >= d || c >= d {
                return Err(ScmError::UnknownNode(format!("edge ({p}, {c}) out of range for {d} nodes")));
            }
            if p == c {
                return Err(ScmError::Cycle(vec![names[p].clone(), names[p].clone()]));
            }
            adj[p][c] = true;
        }
        let order = topo_order(&names, &adj)?;
        Ok(Self { names, adj, order })
    }

    /// Builds a graph from named edges.
    pub fn from_named(names: &[&str], edges: &[(&str, &str)]) -> Result<Self, ScmError> {
        let owned: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        let idx = |n: &str| owned.iter().position(|m| m == n).ok_or_else(|| ScmError::UnknownNode(n.to_string()));
        let e = edges.iter().map(|(p, c)| Ok((idx(p)?, idx(c)?))).collect::<Result<Vec<_>, ScmError>>()?;
        Self::new(owned, &e)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn adjacency(&self) -> &[Vec<bool>] {
        &self.adj
    }

    pub fn has_edge(&self, p: usize, c: usize) -> bool {
        self.adj[p][c]
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let d = self.len();
        (0..d).flat_map(|p| (0..d).filter(move |&c| self.adj[p][c]).map(move |c| (p, c))).collect()
    }

    pub fn parents(&self, node: usize) -> Vec<usize> {
        (0..self.len()).filter(|&p| self.adj[p][node]).collect()
    }

    pub fn children(&self, node: usize) -> Vec<usize> {
        (0..self.len()).filter(|&c| self.adj[node][c]).collect()
    }

    /// Cached topological order, ties broken by smallest node index.
    pub fn topo_order(&self) -> &[usize] {
        &self.order
    }

    /// Position of every node within the topological order.
    pub fn topo_rank(&self) -> Vec<usize> {
        let mut rank = vec![0; self.len()];
        for (r, &n) in self.order.iter().enumerate() {
            rank[n] = r;
        }
        rank
    }

    /// Strict descendants of `node`.
    pub fn descendants(&self, node: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let mut stack = self.children(node);
        while let Some(n) = stack.pop() {
            if out.insert(n) {
                stack.extend(self.children(n));
            }
        }
        out
    }

    /// Copy of the graph with every incoming edge of `node` removed.
    pub fn mutilate(&self, node: usize) -> Result<CausalGraph, ScmError> {
        if node >= self.len() {
            return Err(ScmError::UnknownNode(format!("node index {node}")));
        }
        let mut g = self.clone();
        for p in 0..self.len() {
            g.adj[p][node] = false;
        }
        g.order = topo_order(&g.names, &g.adj)?;
        Ok(g)
    }

    /// Sorts `nodes` by topological rank, rejecting duplicates and unknown ids.
    pub fn sort_topologically(&self, nodes: &[usize]) -> Result<Vec<usize>, ScmError> {
        let rank = self.topo_rank();
        let mut out = nodes.to_vec();
        if out.iter().any(|&n| n >= self.len()) {
            return Err(ScmError::UnknownNode(format!("{nodes:?}")));
        }
        out.sort_by_key(|&n| rank[n]);
        out.dedup();
        Ok(out)
    }

    /// Hex SHA-256 over node names and the edge list.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for n in &self.names {
            h.update(n.as_bytes());
            h.update([0u8]);
        }
        for (p, c) in self.edges() {
            h.update((p as u64).to_le_bytes());
            h.update((c as u64).to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Kahn's algorithm with a min-heap so ties resolve to the smallest index.
fn topo_order(names: &[String], adj: &[Vec<bool>]) -> Result<Vec<usize>, ScmError> {
    let d = names.len();
    let mut indeg: Vec<usize> = (0..d).map(|c| (0..d).filter(|&p| adj[p][c]).count()).collect();
    let mut ready: BinaryHeap<Reverse<usize>> = (0..d).filter(|&n| indeg[n] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(d);
    while let Some(Reverse(n)) = ready.pop() {
        order.push(n);
        for c in 0..d {
            if adj[n][c] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.push(Reverse(c));
                }
            }
        }
    }
    if order.len() == d {
        return Ok(order);
    }
    Err(ScmError::Cycle(find_cycle(names, adj, &indeg)))
}

/// Walks parent links among the unresolved nodes until a node repeats.
fn find_cycle(names: &[String], adj: &[Vec<bool>], indeg: &[usize]) -> Vec<String> {
    let d = names.len();
    let stuck: Vec<bool> = indeg.iter().map(|&k| k > 0).collect();
    let start = stuck.iter().position(|&s| s).unwrap_or(0);
    let mut path = vec![start];
    let mut cur = start;
    loop {
        let parent = (0..d).find(|&p| adj[p][cur] && stuck[p]).expect("stuck node has a stuck parent");
        if let Some(pos) = path.iter().position(|&n| n == parent) {
            let mut cycle: Vec<usize> = path[pos..].to_vec();
            cycle.reverse();
            cycle.push(cycle[0]);
            return cycle.into_iter().map(|n| names[n].clone()).collect();
        }
        path.push(parent);
        cur = parent;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(g: &CausalGraph, order: &[usize]) -> Vec<String> {
        order.iter().map(|&i| g.names()[i].clone()).collect()
    }

    #[test]
    fn chain_order() {
        let g = CausalGraph::from_named(&["A", "B", "C"], &[("A", "B"), ("B", "C")]).unwrap();
        assert_eq!(names(&g, g.topo_order()), ["A", "B", "C"]);
    }

    #[test]
    fn empty_graph_uses_index_order() {
        let g = CausalGraph::from_named(&["n0", "n1", "n2"], &[]).unwrap();
        assert_eq!(g.topo_order(), &[0, 1, 2]);
    }

    #[test]
    fn collider_order() {
        let g = CausalGraph::from_named(&["A", "B", "C"], &[("A", "C"), ("B", "C")]).unwrap();
        assert_eq!(names(&g, g.topo_order()), ["A", "B", "C"]);
    }

    #[test]
    fn tie_break_follows_index_not_insertion() {
        let g = CausalGraph::from_named(&["C", "B", "A"], &[("A", "C")]).unwrap();
        assert_eq!(names(&g, g.topo_order()), ["B", "A", "C"]);
    }

    #[test]
    fn cycle_is_reported() {
        let err = CausalGraph::from_named(&["A", "B", "C"], &[("A", "B"), ("B", "C"), ("C", "A")]).unwrap_err();
        match err {
            ScmError::Cycle(c) => {
                assert_eq!(c.first(), c.last());
                assert_eq!(c.len(), 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mutilate_chain_middle() {
        let g = CausalGraph::from_named(&["A", "B", "C"], &[("A", "B"), ("B", "C")]).unwrap();
        let m = g.mutilate(1).unwrap();
        assert_eq!(m.edges(), vec![(1, 2)]);
    }

    #[test]
    fn mutilate_root_is_noop() {
        let g = CausalGraph::from_named(&["A", "B", "C"], &[("A", "B"), ("B", "C")]).unwrap();
        assert_eq!(g.mutilate(0).unwrap(), g);
    }

    #[test]
    fn mutilate_diamond_sink() {
        let g = CausalGraph::from_named(
            &["A", "B", "C", "D"],
            &[("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")],
        )
        .unwrap();
        assert_eq!(g.mutilate(3).unwrap().edges(), vec![(0, 1), (0, 2)]);
        assert!(g.mutilate(9).is_err());
    }

    #[test]
    fn descendants_of_root() {
        let g = CausalGraph::from_named(&["A", "B", "C", "D"], &[("A", "B"), ("B", "C")]).unwrap();
        assert_eq!(g.descendants(0).into_iter().collect::<Vec<_>>(), vec![1, 2]);
        assert!(g.descendants(3).is_empty());
    }
}
