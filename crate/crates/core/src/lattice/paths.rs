//! Best path and k-best path extraction.
//!
//! Works right-to-left over the topological order: every node keeps its `k`
//! best suffixes to an end node, and a node's list is the merge of
//! `arc ++ suffix` over its outgoing arcs. Ordering is by score (descending),
//! then word sequence, then arc-id sequence, so results are deterministic
//! even when scores tie exactly.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{Lattice, LatticeError, Scales};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHypothesis {
    /// Words along the path, epsilons removed.
    pub words: Vec<String>,
    /// Arc ids along the path, epsilons included.
    pub arcs: Vec<usize>,
    /// Combined log weight summed over the path's arcs.
    pub score: f64,
}

impl ScoredHypothesis {
    pub fn text(&self) -> String {
        self.words.join(" ")
    }
}

fn rank(a: &ScoredHypothesis, b: &ScoredHypothesis) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.words.cmp(&b.words))
        .then_with(|| a.arcs.cmp(&b.arcs))
}

pub fn nbest(
    lat: &Lattice,
    k: usize,
    scales: Scales,
    unique_words: bool,
) -> Result<Vec<ScoredHypothesis>, LatticeError> {
    if k == 0 {
        return Err(LatticeError::InvalidK);
    }
    scales.validate()?;
    lat.ensure_nonempty()?;

    let mut suffixes: Vec<Vec<ScoredHypothesis>> = vec![Vec::new(); lat.num_nodes()];
    for &u in lat.topo_order().iter().rev() {
        if lat.is_end(u) {
            suffixes[u] = vec![ScoredHypothesis {
                words: Vec::new(),
                arcs: Vec::new(),
                score: 0.0,
            }];
            continue;
        }
        let mut cands = Vec::new();
        for &ai in lat.out_arcs(u) {
            let arc = lat.arc(ai);
            let w = arc.weight(scales);
            for s in &suffixes[arc.to] {
                let mut words = Vec::with_capacity(s.words.len() + 1);
                words.extend(arc.word.iter().cloned());
                words.extend(s.words.iter().cloned());
                let mut arcs = Vec::with_capacity(s.arcs.len() + 1);
                arcs.push(ai);
                arcs.extend_from_slice(&s.arcs);
                cands.push(ScoredHypothesis {
                    words,
                    arcs,
                    score: w + s.score,
                });
            }
        }
        cands.sort_by(rank);
        if unique_words {
            let mut seen = HashSet::new();
            cands.retain(|h| seen.insert(h.words.clone()));
        }
        cands.truncate(k);
        suffixes[u] = cands;
    }
    Ok(std::mem::take(&mut suffixes[lat.start()]))
}

/// The highest-weight path. Ties go to the lexicographically smallest word
/// sequence, then the smallest arc-id sequence.
pub fn best_path(lat: &Lattice, scales: Scales) -> Result<ScoredHypothesis, LatticeError> {
    let mut list = nbest(lat, 1, scales, false)?;
    Ok(list.pop().expect("a non-empty lattice has at least one path"))
}
