//! Random lattices and brute-force reference implementations shared by the
//! integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

use wcnkit::confnet::ConfusionNetwork;
use wcnkit::lattice::{ArcSpec, Lattice, Scales};

pub const VOCAB: [&str; 5] = ["a", "b", "c", "d", "e"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random DAG with at most `max_arcs` arcs. A chain over all nodes keeps
/// every node on some complete path; extra arcs jump forward, may be
/// epsilons, and may end in a second final node.
pub fn random_lattice(rng: &mut impl Rng, max_arcs: usize) -> Lattice {
    let max_arcs = max_arcs.max(2);
    let chain_nodes = rng.gen_range(2..=6usize).min(max_arcs + 1);
    let second_end = rng.gen_bool(0.2) && chain_nodes - 1 < max_arcs;
    let n = chain_nodes + usize::from(second_end);
    let word = |rng: &mut dyn rand::RngCore| -> Option<&'static str> {
        if rng.gen_bool(0.15) {
            None
        } else {
            Some(VOCAB[rng.gen_range(0..VOCAB.len())])
        }
    };
    let score = |rng: &mut dyn rand::RngCore| -> (f64, f64) {
        (
            -rng.gen_range(0.0..3.0f64),
            -rng.gen_range(0.0..1.5f64),
        )
    };
    let mut arcs = Vec::new();
    let push = |arcs: &mut Vec<ArcSpec>, from: usize, to: usize, w: Option<&str>, (a, l): (f64, f64)| {
        arcs.push(match w {
            Some(w) => ArcSpec::new(from, to, w, a, l),
            None => ArcSpec::epsilon(from, to, a, l),
        });
    };
    for i in 0..chain_nodes - 1 {
        let w = word(rng);
        let s = score(rng);
        push(&mut arcs, i, i + 1, w, s);
    }
    if second_end {
        let from = rng.gen_range(0..chain_nodes - 1);
        let w = word(rng);
        let s = score(rng);
        push(&mut arcs, from, n - 1, w, s);
    }
    let budget = rng.gen_range(arcs.len()..=max_arcs);
    while arcs.len() < budget {
        let from = rng.gen_range(0..chain_nodes - 1);
        let to = rng.gen_range(from + 1..chain_nodes);
        let w = word(rng);
        let s = score(rng);
        push(&mut arcs, from, to, w, s);
    }
    let times = if rng.gen_bool(0.5) {
        let mut t = 0.0;
        (0..n)
            .map(|i| {
                if i < chain_nodes {
                    t += rng.gen_range(0.05..0.5);
                    Some(t)
                } else {
                    Some(t + 1.0)
                }
            })
            .collect()
    } else {
        vec![None; n]
    };
    Lattice::new(times, arcs).expect("generated lattice is valid")
}

#[derive(Debug, Clone)]
pub struct EnumPath {
    pub arcs: Vec<usize>,
    pub words: Vec<String>,
    pub weight: f64,
}

/// Every start-to-end path, by depth-first search.
pub fn enumerate_paths(lat: &Lattice, scales: Scales) -> Vec<EnumPath> {
    fn go(lat: &Lattice, scales: Scales, node: usize, stack: &mut Vec<usize>, out: &mut Vec<EnumPath>) {
        if lat.is_end(node) {
            out.push(EnumPath {
                arcs: stack.clone(),
                words: stack
                    .iter()
                    .filter_map(|&a| lat.arc(a).word.clone())
                    .collect(),
                weight: stack.iter().map(|&a| lat.arc(a).weight(scales)).sum(),
            });
        }
        for &a in lat.out_arcs(node) {
            stack.push(a);
            go(lat, scales, lat.arc(a).to, stack, out);
            stack.pop();
        }
    }
    let mut out = Vec::new();
    go(lat, scales, lat.start(), &mut Vec::new(), &mut out);
    out
}

pub fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Arc posteriors as the normalized mass of the paths through each arc.
pub fn brute_posteriors(lat: &Lattice, scales: Scales) -> Vec<f64> {
    let paths = enumerate_paths(lat, scales);
    let z = log_sum_exp(paths.iter().map(|p| p.weight));
    (0..lat.num_arcs())
        .map(|a| {
            let through = paths.iter().filter(|p| p.arcs.contains(&a)).map(|p| p.weight);
            let l = log_sum_exp(through);
            if l == f64::NEG_INFINITY {
                0.0
            } else {
                (l - z).exp()
            }
        })
        .collect()
}

/// Can `words` be read from `cn` taking exactly one option, or the bin's
/// epsilon, from every bin in order?
pub fn readable(cn: &ConfusionNetwork, words: &[String]) -> bool {
    let bins = cn.bins();
    // reach[j]: words[..j] consumed after the bins seen so far
    let mut reach = vec![false; words.len() + 1];
    reach[0] = true;
    for bin in bins {
        let mut next = vec![false; words.len() + 1];
        for j in 0..=words.len() {
            if !reach[j] {
                continue;
            }
            for opt in bin {
                match &opt.word {
                    None => next[j] = true,
                    Some(w) if j < words.len() && *w == words[j] => next[j + 1] = true,
                    Some(_) => {}
                }
            }
        }
        reach = next;
    }
    reach[words.len()]
}

/// Alignment counts found by trying every alignment, keeping the one with
/// the fewest errors, then the most hits, then the most substitutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BruteAlignment {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub hits: usize,
}

pub fn brute_align(hyp: &[String], reference: &[String]) -> BruteAlignment {
    fn key(a: &BruteAlignment) -> (usize, std::cmp::Reverse<usize>, std::cmp::Reverse<usize>) {
        (
            a.substitutions + a.deletions + a.insertions,
            std::cmp::Reverse(a.hits),
            std::cmp::Reverse(a.substitutions),
        )
    }
    fn go(h: &[String], r: &[String], acc: BruteAlignment, best: &mut Option<BruteAlignment>) {
        if h.is_empty() && r.is_empty() {
            if best.is_none_or(|b| key(&acc) < key(&b)) {
                *best = Some(acc);
            }
            return;
        }
        if let (Some(x), Some(y)) = (h.first(), r.first()) {
            let mut next = acc;
            if x == y {
                next.hits += 1;
            } else {
                next.substitutions += 1;
            }
            go(&h[1..], &r[1..], next, best);
        }
        if !r.is_empty() {
            go(h, &r[1..], BruteAlignment { deletions: acc.deletions + 1, ..acc }, best);
        }
        if !h.is_empty() {
            go(&h[1..], r, BruteAlignment { insertions: acc.insertions + 1, ..acc }, best);
        }
    }
    let mut best = None;
    go(
        hyp,
        reference,
        BruteAlignment {
            substitutions: 0,
            deletions: 0,
            insertions: 0,
            hits: 0,
        },
        &mut best,
    );
    best.expect("at least one alignment")
}

/// Unigram F1 from bag counts, written independently of the library.
pub fn brute_f1(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() || gold.is_empty() {
        return if pred.is_empty() && gold.is_empty() { 1.0 } else { 0.0 };
    }
    let count = |xs: &[String]| {
        let mut m: HashMap<String, usize> = HashMap::new();
        for x in xs {
            *m.entry(x.clone()).or_default() += 1;
        }
        m
    };
    let (p, g) = (count(pred), count(gold));
    let common: usize = p.iter().map(|(w, c)| (*c).min(*g.get(w).unwrap_or(&0))).sum();
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn random_tokens(rng: &mut impl Rng, max_len: usize, vocab: &[&str]) -> Vec<String> {
    let n = rng.gen_range(0..=max_len);
    (0..n).map(|_| vocab[rng.gen_range(0..vocab.len())].to_string()).collect()
}

pub fn fixture(rel: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}
