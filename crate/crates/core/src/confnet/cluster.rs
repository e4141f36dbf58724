//! Consensus clustering of lattice arcs into confusion bins.
//!
//! Every non-epsilon arc starts in its own cluster. Clusters are kept
//! together with the transitive "comes before" relation between them; two
//! clusters may merge only while neither precedes the other, which keeps
//! every bin an antichain and the bin order acyclic. Same-word arcs that
//! overlap merge first, then the remaining clusters absorb overlapping
//! neighbours in descending posterior order. Bins are emitted in a
//! topological order of the final clusters.

use std::collections::BTreeMap;

use super::bitset::BitSet;
use super::{ConfnetError, ConfusionNetwork, WcnOption};
use crate::lattice::{log_total_excluding, ArcPosteriors, Lattice};

type Span = (f64, f64);

fn overlap(a: Span, b: Span) -> Option<f64> {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    if hi > lo {
        Some(hi - lo)
    } else if hi == lo && (a.0 == a.1 || b.0 == b.1) {
        Some(0.0)
    } else {
        None
    }
}

fn touches(a: Span, b: Span) -> bool {
    a.0.max(b.0) <= a.1.min(b.1)
}

/// Node positions: times when every node has one, otherwise the longest
/// word count from the start.
fn node_positions(lat: &Lattice) -> Vec<f64> {
    if lat.has_times() {
        return lat.nodes().iter().map(|n| n.time.unwrap_or(0.0)).collect();
    }
    let mut depth = vec![0usize; lat.num_nodes()];
    for &u in lat.topo_order() {
        for &ai in lat.out_arcs(u) {
            let a = lat.arc(ai);
            let d = depth[u] + usize::from(!a.is_epsilon());
            depth[a.to] = depth[a.to].max(d);
        }
    }
    depth.into_iter().map(|d| d as f64).collect()
}

struct Clusters<'a> {
    post: &'a [f64],
    /// cluster id of each arc; the id is the smallest member arc
    owner: Vec<usize>,
    members: Vec<Vec<usize>>,
    member_set: Vec<BitSet>,
    /// arcs in clusters strictly after / before this cluster
    after: Vec<BitSet>,
    before: Vec<BitSet>,
    alive: Vec<bool>,
    mass: Vec<f64>,
    span: Vec<Span>,
}

impl<'a> Clusters<'a> {
    fn new(lat: &Lattice, post: &'a [f64], pos: &[f64]) -> Self {
        let m = lat.num_arcs();
        // reach[n]: word arcs whose source is reachable from node n
        let mut reach: Vec<BitSet> = vec![BitSet::new(m); lat.num_nodes()];
        for &u in lat.topo_order().iter().rev() {
            let mut set = BitSet::new(m);
            for &ai in lat.out_arcs(u) {
                let a = lat.arc(ai);
                if !a.is_epsilon() {
                    set.insert(ai);
                }
                set.union_with(&reach[a.to]);
            }
            reach[u] = set;
        }
        let mut after = vec![BitSet::new(m); m];
        let mut before = vec![BitSet::new(m); m];
        let mut alive = vec![false; m];
        for a in lat.arcs().iter().filter(|a| !a.is_epsilon()) {
            alive[a.id] = true;
            after[a.id] = reach[a.to].clone();
        }
        for u in 0..m {
            if !alive[u] {
                continue;
            }
            let succ: Vec<usize> = after[u].iter().collect();
            for v in succ {
                before[v].insert(u);
            }
        }
        let member_set = (0..m)
            .map(|i| {
                let mut s = BitSet::new(m);
                s.insert(i);
                s
            })
            .collect();
        Clusters {
            post,
            owner: (0..m).collect(),
            members: (0..m).map(|i| vec![i]).collect(),
            member_set,
            after,
            before,
            alive,
            mass: post.to_vec(),
            span: lat.arcs().iter().map(|a| (pos[a.from], pos[a.to])).collect(),
        }
    }

    fn comparable(&self, a: usize, b: usize) -> bool {
        self.after[a].contains(b) || self.after[b].contains(a)
    }

    fn clusters_in(&self, set: &BitSet) -> Vec<usize> {
        let mut out: Vec<usize> = set.iter().map(|i| self.owner[i]).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn merge(&mut self, a: usize, b: usize) -> usize {
        debug_assert!(a != b && !self.comparable(a, b));
        let (keep, gone) = if a < b { (a, b) } else { (b, a) };
        let moved = std::mem::take(&mut self.members[gone]);
        for &i in &moved {
            self.owner[i] = keep;
        }
        self.members[keep].extend(moved);
        let gone_set = self.member_set[gone].clone();
        self.member_set[keep].union_with(&gone_set);
        let gone_after = self.after[gone].clone();
        self.after[keep].union_with(&gone_after);
        let gone_before = self.before[gone].clone();
        self.before[keep].union_with(&gone_before);
        self.alive[gone] = false;
        self.mass[keep] += self.mass[gone];
        self.span[keep] = (
            self.span[keep].0.min(self.span[gone].0),
            self.span[keep].1.max(self.span[gone].1),
        );

        // Everything before the merged cluster now precedes everything after it.
        let mut down = self.member_set[keep].clone();
        down.union_with(&self.after[keep]);
        let mut up = self.member_set[keep].clone();
        up.union_with(&self.before[keep]);
        for x in self.clusters_in(&self.before[keep].clone()) {
            self.after[x].union_with(&down);
        }
        for y in self.clusters_in(&self.after[keep].clone()) {
            self.before[y].union_with(&up);
        }
        keep
    }

    fn alive_ids(&self) -> Vec<usize> {
        (0..self.alive.len()).filter(|&i| self.alive[i]).collect()
    }

    fn merge_same_words(&mut self, lat: &Lattice) {
        let mut by_word: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for a in lat.arcs() {
            if let Some(w) = a.word.as_deref() {
                by_word.entry(w).or_default().push(a.id);
            }
        }
        for arcs in by_word.values() {
            let mut pairs = Vec::new();
            for (i, &x) in arcs.iter().enumerate() {
                for &y in &arcs[i + 1..] {
                    if touches(self.span[x], self.span[y]) {
                        pairs.push((x, y));
                    }
                }
            }
            pairs.sort_by(|&(a, b), &(c, d)| {
                let pab = self.post[a] + self.post[b];
                let pcd = self.post[c] + self.post[d];
                pcd.total_cmp(&pab).then((a, b).cmp(&(c, d)))
            });
            for (x, y) in pairs {
                let (cx, cy) = (self.owner[x], self.owner[y]);
                if cx != cy && !self.comparable(cx, cy) {
                    self.merge(cx, cy);
                }
            }
        }
    }

    fn merge_overlapping(&mut self) {
        let mut order = self.alive_ids();
        order.sort_by(|&a, &b| self.mass[b].total_cmp(&self.mass[a]).then(a.cmp(&b)));
        for start in order {
            if !self.alive[start] {
                continue;
            }
            let mut cur = start;
            loop {
                let mut best: Option<(f64, f64, usize)> = None;
                for other in self.alive_ids() {
                    if other == cur || self.comparable(cur, other) {
                        continue;
                    }
                    let Some(ov) = overlap(self.span[cur], self.span[other]) else {
                        continue;
                    };
                    let better = match best {
                        None => true,
                        Some((bo, bm, bid)) => ov
                            .total_cmp(&bo)
                            .then(self.mass[other].total_cmp(&bm))
                            .then(bid.cmp(&other))
                            .is_gt(),
                    };
                    if better {
                        best = Some((ov, self.mass[other], other));
                    }
                }
                match best {
                    Some((_, _, other)) => cur = self.merge(cur, other),
                    None => break,
                }
            }
        }
    }

    /// Clusters in a topological order; among ready clusters the one with the
    /// earliest posterior-weighted midpoint goes first.
    fn ordered(&self) -> Vec<usize> {
        let ids = self.alive_ids();
        let centre = |c: usize| {
            let (mut num, mut den, mut plain) = (0.0, 0.0, 0.0);
            for &i in &self.members[c] {
                let mid = 0.5 * (self.span[i].0 + self.span[i].1);
                num += self.post[i] * mid;
                den += self.post[i];
                plain += mid;
            }
            if den > 0.0 {
                num / den
            } else {
                plain / self.members[c].len() as f64
            }
        };
        let mut pending: BTreeMap<usize, usize> = ids
            .iter()
            .map(|&c| (c, self.clusters_in(&self.before[c]).len()))
            .collect();
        let centres: BTreeMap<usize, f64> = ids.iter().map(|&c| (c, centre(c))).collect();
        let mut out = Vec::with_capacity(ids.len());
        while !pending.is_empty() {
            let next = pending
                .iter()
                .filter(|(_, &n)| n == 0)
                .map(|(&c, _)| c)
                .min_by(|&a, &b| centres[&a].total_cmp(&centres[&b]).then(a.cmp(&b)))
                .expect("cluster order is acyclic");
            pending.remove(&next);
            for y in self.clusters_in(&self.after[next]) {
                if let Some(n) = pending.get_mut(&y) {
                    *n -= 1;
                }
            }
            out.push(next);
        }
        out
    }
}

pub fn build_wcn(lat: &Lattice, post: &ArcPosteriors) -> Result<ConfusionNetwork, ConfnetError> {
    if lat.num_arcs() == 0 {
        return Err(ConfnetError::EmptyLattice);
    }
    if post.as_slice().len() != lat.num_arcs() {
        return Err(ConfnetError::PosteriorMismatch {
            arcs: lat.num_arcs(),
            posteriors: post.as_slice().len(),
        });
    }
    let pos = node_positions(lat);
    let mut clusters = Clusters::new(lat, post.as_slice(), &pos);
    clusters.merge_same_words(lat);
    clusters.merge_overlapping();

    let mut bins = Vec::new();
    for c in clusters.ordered() {
        let mut words: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
        let mut skip = vec![false; lat.num_arcs()];
        for &ai in &clusters.members[c] {
            skip[ai] = true;
            let a = lat.arc(ai);
            let e = words
                .entry(a.word.as_deref().expect("only word arcs are clustered"))
                .or_insert((0.0, ai));
            e.0 += post.get(ai);
            e.1 = e.1.min(ai);
        }
        let mut options: Vec<WcnOption> = words
            .into_iter()
            .map(|(w, (p, first))| WcnOption {
                word: Some(w.to_string()),
                posterior: p.clamp(f64::MIN_POSITIVE, 1.0),
                first_arc: Some(first),
            })
            .collect();
        let log_skip = log_total_excluding(lat, post.scales(), &skip);
        if log_skip.is_finite() {
            options.push(WcnOption {
                word: None,
                posterior: (log_skip - post.log_total()).exp().clamp(f64::MIN_POSITIVE, 1.0),
                first_arc: None,
            });
        }
        super::sort_options(&mut options);
        bins.push(options);
    }
    Ok(ConfusionNetwork::from_bins_unchecked(bins))
}
