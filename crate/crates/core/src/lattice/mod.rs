//! Word lattices: validated DAGs of scored word arcs.
//!
//! A [`Lattice`] is always validated on construction. Node and arc ids are
//! dense (`0..n`), node `0` is the start, and every node with no outgoing
//! arc is an end node. Nodes that cannot be reached from the start are
//! pruned and the survivors renumbered in their original relative order.

mod paths;
mod posterior;
mod slf;

pub use paths::{best_path, nbest, ScoredHypothesis};
pub use posterior::{arc_posteriors, ArcPosteriors};
pub use slf::{parse_lattice, render_lattice};

pub(crate) use posterior::log_total_excluding;

use thiserror::Error;

/// Literal SLF token for an epsilon arc.
pub const SLF_EPSILON: &str = "!NULL";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("arc {arc} references missing node {node}")]
    DanglingArc { arc: usize, node: usize },
    #[error("lattice contains a cycle")]
    CycleDetected,
    #[error("no path from the start node to an end node")]
    NoPathToEnd,
    #[error("lattice has no arcs")]
    EmptyLattice,
    #[error("arc {arc} goes backwards in time")]
    TimeOrder { arc: usize },
    #[error("arc {arc} has a non-finite score")]
    NonFiniteScore { arc: usize },
    #[error("scales must be finite and non-negative (acoustic={acoustic}, lm={lm})")]
    InvalidScale { acoustic: f64, lm: f64 },
    #[error("k must be at least 1")]
    InvalidK,
}

/// Weights applied to the two per-arc log scores.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Scales {
    pub acoustic: f64,
    pub lm: f64,
}

impl Default for Scales {
    fn default() -> Self {
        Scales {
            acoustic: 1.0,
            lm: 1.0,
        }
    }
}

impl Scales {
    pub fn new(acoustic: f64, lm: f64) -> Result<Self, LatticeError> {
        let s = Scales { acoustic, lm };
        s.validate()?;
        Ok(s)
    }

    pub(crate) fn validate(&self) -> Result<(), LatticeError> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if ok(self.acoustic) && ok(self.lm) {
            Ok(())
        } else {
            Err(LatticeError::InvalidScale {
                acoustic: self.acoustic,
                lm: self.lm,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: usize,
    pub time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    /// `None` is epsilon.
    pub word: Option<String>,
    pub acoustic: f64,
    pub lm: f64,
}

impl Arc {
    pub fn weight(&self, scales: Scales) -> f64 {
        scales.acoustic * self.acoustic + scales.lm * self.lm
    }

    pub fn is_epsilon(&self) -> bool {
        self.word.is_none()
    }
}

/// Arc description used when building a lattice in code.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcSpec {
    pub from: usize,
    pub to: usize,
    pub word: Option<String>,
    pub acoustic: f64,
    pub lm: f64,
}

impl ArcSpec {
    pub fn new(from: usize, to: usize, word: &str, acoustic: f64, lm: f64) -> Self {
        ArcSpec {
            from,
            to,
            word: Some(word.to_string()),
            acoustic,
            lm,
        }
    }

    pub fn epsilon(from: usize, to: usize, acoustic: f64, lm: f64) -> Self {
        ArcSpec {
            from,
            to,
            word: None,
            acoustic,
            lm,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    nodes: Vec<Node>,
    arcs: Vec<Arc>,
    out_arcs: Vec<Vec<usize>>,
    in_arcs: Vec<Vec<usize>>,
    topo: Vec<usize>,
    end_nodes: Vec<usize>,
}

impl Lattice {
    /// Builds and validates a lattice. `times[i]` is the optional time of
    /// node `i`; node `0` is the start.
    pub fn new(times: Vec<Option<f64>>, arcs: Vec<ArcSpec>) -> Result<Self, LatticeError> {
        let n = times.len();
        if n == 0 {
            return Err(LatticeError::NoPathToEnd);
        }
        for (i, a) in arcs.iter().enumerate() {
            for node in [a.from, a.to] {
                if node >= n {
                    return Err(LatticeError::DanglingArc { arc: i, node });
                }
            }
            if !a.acoustic.is_finite() || !a.lm.is_finite() {
                return Err(LatticeError::NonFiniteScore { arc: i });
            }
            if let (Some(tf), Some(tt)) = (times[a.from], times[a.to]) {
                if tf > tt {
                    return Err(LatticeError::TimeOrder { arc: i });
                }
            }
        }

        let mut out = vec![Vec::new(); n];
        for (i, a) in arcs.iter().enumerate() {
            out[a.from].push(i);
        }
        // Reachability from the start.
        let mut reach = vec![false; n];
        let mut stack = vec![0usize];
        reach[0] = true;
        while let Some(u) = stack.pop() {
            for &ai in &out[u] {
                let v = arcs[ai].to;
                if !reach[v] {
                    reach[v] = true;
                    stack.push(v);
                }
            }
        }
        if !arcs.is_empty() && out[0].is_empty() {
            return Err(LatticeError::NoPathToEnd);
        }

        let mut remap = vec![usize::MAX; n];
        let mut nodes = Vec::new();
        for (old, time) in times.iter().enumerate() {
            if reach[old] {
                remap[old] = nodes.len();
                nodes.push(Node {
                    id: nodes.len(),
                    time: *time,
                });
            }
        }
        let mut kept = Vec::new();
        for a in arcs {
            if reach[a.from] {
                kept.push(Arc {
                    id: kept.len(),
                    from: remap[a.from],
                    to: remap[a.to],
                    word: a.word,
                    acoustic: a.acoustic,
                    lm: a.lm,
                });
            }
        }
        Self::from_validated_parts(nodes, kept)
    }

    fn from_validated_parts(nodes: Vec<Node>, arcs: Vec<Arc>) -> Result<Self, LatticeError> {
        let n = nodes.len();
        let mut out_arcs = vec![Vec::new(); n];
        let mut in_arcs = vec![Vec::new(); n];
        for a in &arcs {
            out_arcs[a.from].push(a.id);
            in_arcs[a.to].push(a.id);
        }
        // Kahn's algorithm, smallest node id first.
        let mut indeg: Vec<usize> = in_arcs.iter().map(Vec::len).collect();
        let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> = indeg
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == 0)
            .map(|(i, _)| std::cmp::Reverse(i))
            .collect();
        let mut topo = Vec::with_capacity(n);
        while let Some(std::cmp::Reverse(u)) = ready.pop() {
            topo.push(u);
            for &ai in &out_arcs[u] {
                let v = arcs[ai].to;
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    ready.push(std::cmp::Reverse(v));
                }
            }
        }
        if topo.len() != n {
            return Err(LatticeError::CycleDetected);
        }
        // After pruning every node is reachable from 0, so 0 is the only source.
        debug_assert!(topo.first() == Some(&0));
        let end_nodes = (0..n).filter(|&u| out_arcs[u].is_empty()).collect();
        Ok(Lattice {
            nodes,
            arcs,
            out_arcs,
            in_arcs,
            topo,
            end_nodes,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn arc(&self, id: usize) -> &Arc {
        &self.arcs[id]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.len()
    }

    pub fn start(&self) -> usize {
        0
    }

    pub fn end_nodes(&self) -> &[usize] {
        &self.end_nodes
    }

    pub fn is_end(&self, node: usize) -> bool {
        self.out_arcs[node].is_empty()
    }

    pub fn out_arcs(&self, node: usize) -> &[usize] {
        &self.out_arcs[node]
    }

    pub fn in_arcs(&self, node: usize) -> &[usize] {
        &self.in_arcs[node]
    }

    /// Nodes in topological order (start first).
    pub fn topo_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn has_times(&self) -> bool {
        self.nodes.iter().all(|n| n.time.is_some())
    }

    pub(crate) fn ensure_nonempty(&self) -> Result<(), LatticeError> {
        if self.arcs.is_empty() {
            Err(LatticeError::EmptyLattice)
        } else {
            Ok(())
        }
    }

    /// Lattice with a single path spelling `words`, every arc scored 0.
    pub fn linear(words: &[&str]) -> Result<Self, LatticeError> {
        let times = vec![None; words.len() + 1];
        let arcs = words
            .iter()
            .enumerate()
            .map(|(i, w)| ArcSpec::new(i, i + 1, w, 0.0, 0.0))
            .collect();
        Lattice::new(times, arcs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dangling_arc_is_rejected() {
        let err = Lattice::new(vec![None; 2], vec![ArcSpec::new(0, 5, "x", 0.0, 0.0)]).unwrap_err();
        assert_eq!(err, LatticeError::DanglingArc { arc: 0, node: 5 });
    }

    #[test]
    fn cycle_is_rejected() {
        let arcs = vec![
            ArcSpec::new(0, 1, "a", 0.0, 0.0),
            ArcSpec::new(1, 2, "b", 0.0, 0.0),
            ArcSpec::new(2, 1, "c", 0.0, 0.0),
            ArcSpec::new(1, 3, "d", 0.0, 0.0),
        ];
        assert_eq!(
            Lattice::new(vec![None; 4], arcs).unwrap_err(),
            LatticeError::CycleDetected
        );
    }

    #[test]
    fn unreachable_nodes_are_pruned_and_renumbered() {
        let arcs = vec![
            ArcSpec::new(0, 2, "a", 0.0, 0.0),
            ArcSpec::new(1, 2, "orphan", 0.0, 0.0),
            ArcSpec::new(2, 3, "b", 0.0, 0.0),
        ];
        let lat = Lattice::new(vec![None; 4], arcs).unwrap();
        assert_eq!(lat.num_nodes(), 3);
        assert_eq!(lat.num_arcs(), 2);
        assert_eq!(lat.arc(1).from, 1);
        assert_eq!(lat.arc(1).word.as_deref(), Some("b"));
        assert_eq!(lat.end_nodes(), &[2]);
    }

    #[test]
    fn start_without_arcs_has_no_path() {
        let arcs = vec![ArcSpec::new(1, 2, "a", 0.0, 0.0)];
        assert_eq!(
            Lattice::new(vec![None; 3], arcs).unwrap_err(),
            LatticeError::NoPathToEnd
        );
    }

    #[test]
    fn time_must_not_decrease() {
        let arcs = vec![ArcSpec::new(0, 1, "a", 0.0, 0.0)];
        assert_eq!(
            Lattice::new(vec![Some(1.0), Some(0.5)], arcs).unwrap_err(),
            LatticeError::TimeOrder { arc: 0 }
        );
    }

    #[test]
    fn negative_scale_is_rejected() {
        assert!(Scales::new(-1.0, 1.0).is_err());
        assert!(Scales::new(0.0, 0.0).is_ok());
    }
}
