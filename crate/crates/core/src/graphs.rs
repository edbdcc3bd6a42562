//! Regular bipartite multigraphs and their decomposition into perfect
//! matchings. A k-regular bipartite multigraph always splits into k
//! edge-disjoint perfect matchings (Hall); this is the combinatorial engine
//! behind the pairing constructions used by the mechanisms.

use crate::error::{Error, Result};

/// Bipartite multigraph given as an edge list. Edge identity matters:
/// parallel edges are distinct and the coloring is reported per edge id.
#[derive(Debug, Clone)]
pub struct BipartiteMultigraph {
    pub left_count: usize,
    pub right_count: usize,
    /// `edges[id] = (left_vertex, right_vertex)`.
    pub edges: Vec<(usize, usize)>,
}

impl BipartiteMultigraph {
    pub fn new(left_count: usize, right_count: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        for &(l, r) in &edges {
            if l >= left_count || r >= right_count {
                return Err(Error::MalformedInput(format!(
                    "edge ({l}, {r}) outside vertex ranges {left_count}x{right_count}"
                )));
            }
        }
        Ok(BipartiteMultigraph { left_count, right_count, edges })
    }

    pub fn check_regular(&self, k: usize) -> Result<()> {
        let mut left_deg = vec![0usize; self.left_count];
        let mut right_deg = vec![0usize; self.right_count];
        for &(l, r) in &self.edges {
            left_deg[l] += 1;
            right_deg[r] += 1;
        }
        if let Some(v) = left_deg.iter().position(|&d| d != k) {
            return Err(Error::NotRegular { expected: k, vertex: v, side: "left", degree: left_deg[v] });
        }
        if let Some(v) = right_deg.iter().position(|&d| d != k) {
            return Err(Error::NotRegular { expected: k, vertex: v, side: "right", degree: right_deg[v] });
        }
        Ok(())
    }
}

/// Splits a k-regular bipartite multigraph into k edge-disjoint perfect
/// matchings by repeatedly extracting a perfect matching. Each matching is a
/// list of edge ids; together they cover every edge exactly once. The scan
/// order is fixed by edge id, so the output is deterministic.
pub fn edge_coloring(graph: &BipartiteMultigraph, k: usize) -> Result<Vec<Vec<usize>>> {
    graph.check_regular(k)?;
    if k == 0 {
        return Ok(Vec::new());
    }
    if graph.left_count != graph.right_count {
        return Err(Error::MalformedInput(
            "regular bipartite graph must have equal side sizes".into(),
        ));
    }
    let mut remaining: Vec<bool> = vec![true; graph.edges.len()];
    let mut colors = Vec::with_capacity(k);
    for _ in 0..k {
        let matching = perfect_matching(graph, &remaining).ok_or_else(|| {
            Error::InternalInvariant(
                "regular bipartite graph lost its perfect matching".into(),
            )
        })?;
        for &edge in &matching {
            remaining[edge] = false;
        }
        colors.push(matching);
    }
    debug_assert!(remaining.iter().all(|r| !r));
    Ok(colors)
}

/// Augmenting-path perfect matching over the still-uncolored edges.
/// Returns one edge id per left vertex, or None if no perfect matching.
fn perfect_matching(graph: &BipartiteMultigraph, alive: &[bool]) -> Option<Vec<usize>> {
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); graph.left_count];
    for (id, &(l, _)) in graph.edges.iter().enumerate() {
        if alive[id] {
            adjacency[l].push(id);
        }
    }
    // right_match[r] = edge id currently matching right vertex r
    let mut right_match: Vec<Option<usize>> = vec![None; graph.right_count];

    fn augment(
        left: usize,
        graph: &BipartiteMultigraph,
        adjacency: &[Vec<usize>],
        right_match: &mut [Option<usize>],
        visited: &mut [bool],
    ) -> bool {
        for &edge in &adjacency[left] {
            let right = graph.edges[edge].1;
            if visited[right] {
                continue;
            }
            visited[right] = true;
            let free = match right_match[right] {
                None => true,
                Some(current) => {
                    let owner = graph.edges[current].0;
                    augment(owner, graph, adjacency, right_match, visited)
                }
            };
            if free {
                right_match[right] = Some(edge);
                return true;
            }
        }
        false
    }

    for left in 0..graph.left_count {
        let mut visited = vec![false; graph.right_count];
        if !augment(left, graph, &adjacency, &mut right_match, &mut visited) {
            return None;
        }
    }
    let mut matching: Vec<usize> = right_match.into_iter().map(|e| e.unwrap()).collect();
    matching.sort_unstable();
    Some(matching)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct verification: matchings are perfect, pairwise edge-disjoint,
    /// and together cover the edge set.
    fn verify_coloring(graph: &BipartiteMultigraph, k: usize, colors: &[Vec<usize>]) {
        assert_eq!(colors.len(), k);
        let mut seen = vec![false; graph.edges.len()];
        for matching in colors {
            assert_eq!(matching.len(), graph.left_count);
            let mut left_hit = vec![false; graph.left_count];
            let mut right_hit = vec![false; graph.right_count];
            for &edge in matching {
                assert!(!seen[edge], "edge {edge} colored twice");
                seen[edge] = true;
                let (l, r) = graph.edges[edge];
                assert!(!left_hit[l] && !right_hit[r], "matching repeats a vertex");
                left_hit[l] = true;
                right_hit[r] = true;
            }
            assert!(left_hit.into_iter().all(|h| h));
            assert!(right_hit.into_iter().all(|h| h));
        }
        assert!(seen.into_iter().all(|s| s), "some edge never colored");
    }

    #[test]
    fn four_cycle_splits_into_alternating_matchings() {
        let g = BipartiteMultigraph::new(2, 2, vec![(0, 0), (0, 1), (1, 1), (1, 0)]).unwrap();
        let colors = edge_coloring(&g, 2).unwrap();
        verify_coloring(&g, 2, &colors);
        assert_eq!(colors[0].len(), 2);
    }

    #[test]
    fn three_regular_multigraph() {
        // Two vertices per side, all six edges between them (with parallels).
        let g = BipartiteMultigraph::new(
            2,
            2,
            vec![(0, 0), (0, 0), (0, 1), (1, 1), (1, 1), (1, 0)],
        )
        .unwrap();
        let colors = edge_coloring(&g, 3).unwrap();
        verify_coloring(&g, 3, &colors);
    }

    #[test]
    fn rejects_irregular_input() {
        let g = BipartiteMultigraph::new(2, 2, vec![(0, 0), (0, 1), (1, 1)]).unwrap();
        assert!(matches!(edge_coloring(&g, 2), Err(Error::NotRegular { .. })));
    }

    #[test]
    fn random_regular_graphs_decompose() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..60 {
            let side = 2 + (trial % 9);
            let k = 1 + (trial % 5);
            // Union of k random permutations is k-regular (multi-edges allowed).
            let mut edges = Vec::new();
            for _ in 0..k {
                let mut perm: Vec<usize> = (0..side).collect();
                perm.shuffle(&mut rng);
                for (l, &r) in perm.iter().enumerate() {
                    edges.push((l, r));
                }
            }
            let g = BipartiteMultigraph::new(side, side, edges).unwrap();
            let colors = edge_coloring(&g, k).unwrap();
            verify_coloring(&g, k, &colors);
        }
    }

    #[test]
    fn deterministic_under_fixed_edge_order() {
        let g = BipartiteMultigraph::new(
            3,
            3,
            vec![(0, 0), (0, 1), (1, 1), (1, 2), (2, 2), (2, 0)],
        )
        .unwrap();
        let a = edge_coloring(&g, 2).unwrap();
        let b = edge_coloring(&g, 2).unwrap();
        assert_eq!(a, b);
    }
}
