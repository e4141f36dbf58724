//! Reader and writer for a subset of the HTK Standard Lattice Format.
//!
//! ```text
//! # comment
//! N=4
//! L=3
//! I=0 t=0.00
//! J=0 S=0 E=1 W=hello a=-1.0 l=-0.5
//! ```
//!
//! Unknown header fields (`VERSION=`, `UTTERANCE=`, ...) are ignored.
//! `W=!NULL` is epsilon. Scores are natural-log weights; missing `a=` or `l=`
//! read as `0`.

use std::fmt::Write as _;

use super::{ArcSpec, Lattice, LatticeError, SLF_EPSILON};

fn fields(line: &str) -> impl Iterator<Item = (&str, &str)> {
    line.split_whitespace()
        .map(|f| f.split_once('=').unwrap_or((f, "")))
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, LatticeError> {
    v.parse().map_err(|_| LatticeError::MalformedLine {
        line,
        reason: format!("bad value for {key}: {v:?}"),
    })
}

pub fn parse_lattice(text: &str) -> Result<Lattice, LatticeError> {
    let mut n_nodes: Option<usize> = None;
    let mut n_arcs: Option<usize> = None;
    let mut times: Vec<Option<Option<f64>>> = Vec::new();
    let mut arcs: Vec<Option<ArcSpec>> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let first_key = fields(line).next().map(|(k, _)| k).unwrap_or("");
        match first_key {
            "I" => {
                let n = n_nodes.ok_or_else(|| {
                    LatticeError::MalformedHeader("node line before N=".into())
                })?;
                let mut id = None;
                let mut time = None;
                for (k, v) in fields(line) {
                    match k {
                        "I" => id = Some(parse_num::<usize>(lineno, k, v)?),
                        "t" => time = Some(parse_num::<f64>(lineno, k, v)?),
                        _ => {}
                    }
                }
                let id = id.expect("first field is I");
                if id >= n {
                    return Err(LatticeError::MalformedLine {
                        line: lineno,
                        reason: format!("node id {id} out of range for N={n}"),
                    });
                }
                if times[id].is_some() {
                    return Err(LatticeError::MalformedLine {
                        line: lineno,
                        reason: format!("duplicate node {id}"),
                    });
                }
                times[id] = Some(time);
            }
            "J" => {
                let (n, l) = match (n_nodes, n_arcs) {
                    (Some(n), Some(l)) => (n, l),
                    _ => {
                        return Err(LatticeError::MalformedHeader(
                            "arc line before N= and L=".into(),
                        ))
                    }
                };
                let (mut id, mut s, mut e, mut w) = (None, None, None, None);
                let (mut a, mut lm) = (0.0, 0.0);
                for (k, v) in fields(line) {
                    match k {
                        "J" => id = Some(parse_num::<usize>(lineno, k, v)?),
                        "S" => s = Some(parse_num::<usize>(lineno, k, v)?),
                        "E" => e = Some(parse_num::<usize>(lineno, k, v)?),
                        "W" => w = Some(v),
                        "a" => a = parse_num::<f64>(lineno, k, v)?,
                        "l" => lm = parse_num::<f64>(lineno, k, v)?,
                        _ => {}
                    }
                }
                let missing = |name: &str| LatticeError::MalformedLine {
                    line: lineno,
                    reason: format!("arc line missing {name}="),
                };
                let id = id.expect("first field is J");
                let s = s.ok_or_else(|| missing("S"))?;
                let e = e.ok_or_else(|| missing("E"))?;
                let w = w.ok_or_else(|| missing("W"))?;
                if w.is_empty() {
                    return Err(LatticeError::MalformedLine {
                        line: lineno,
                        reason: "empty word".into(),
                    });
                }
                if id >= l {
                    return Err(LatticeError::MalformedLine {
                        line: lineno,
                        reason: format!("arc id {id} out of range for L={l}"),
                    });
                }
                for node in [s, e] {
                    if node >= n {
                        return Err(LatticeError::DanglingArc { arc: id, node });
                    }
                }
                if arcs[id].is_some() {
                    return Err(LatticeError::MalformedLine {
                        line: lineno,
                        reason: format!("duplicate arc {id}"),
                    });
                }
                arcs[id] = Some(ArcSpec {
                    from: s,
                    to: e,
                    word: (w != SLF_EPSILON).then(|| w.to_string()),
                    acoustic: a,
                    lm,
                });
            }
            _ => {
                if !times.is_empty() || !arcs.is_empty() {
                    if fields(line).any(|(k, _)| k == "N" || k == "L") {
                        return Err(LatticeError::MalformedHeader(format!(
                            "line {lineno}: header after body"
                        )));
                    }
                    continue;
                }
                for (k, v) in fields(line) {
                    let slot = match k {
                        "N" => &mut n_nodes,
                        "L" => &mut n_arcs,
                        _ => continue,
                    };
                    let val = v.parse::<usize>().map_err(|_| {
                        LatticeError::MalformedHeader(format!("line {lineno}: bad {k}={v}"))
                    })?;
                    if slot.replace(val).is_some() {
                        return Err(LatticeError::MalformedHeader(format!(
                            "line {lineno}: {k}= given twice"
                        )));
                    }
                }
                if let (Some(n), Some(l)) = (n_nodes, n_arcs) {
                    times = vec![None; n];
                    arcs = vec![None; l];
                }
            }
        }
    }

    let n = n_nodes.ok_or_else(|| LatticeError::MalformedHeader("missing N=".into()))?;
    let l = n_arcs.ok_or_else(|| LatticeError::MalformedHeader("missing L=".into()))?;
    let declared_nodes = times.iter().filter(|t| t.is_some()).count();
    let declared_arcs = arcs.iter().filter(|a| a.is_some()).count();
    if declared_nodes != n || declared_arcs != l {
        return Err(LatticeError::MalformedHeader(format!(
            "header declares N={n} L={l} but body has {declared_nodes} nodes and {declared_arcs} arcs"
        )));
    }
    Lattice::new(
        times.into_iter().map(|t| t.flatten()).collect(),
        arcs.into_iter().map(|a| a.expect("counted")).collect(),
    )
}

/// Debug serializer; `parse_lattice` reads it back to the same structure.
pub fn render_lattice(lat: &Lattice) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "N={}", lat.num_nodes());
    let _ = writeln!(out, "L={}", lat.num_arcs());
    for node in lat.nodes() {
        match node.time {
            Some(t) => {
                let _ = writeln!(out, "I={} t={}", node.id, t);
            }
            None => {
                let _ = writeln!(out, "I={}", node.id);
            }
        }
    }
    for arc in lat.arcs() {
        let _ = writeln!(
            out,
            "J={} S={} E={} W={} a={} l={}",
            arc.id,
            arc.from,
            arc.to,
            arc.word.as_deref().unwrap_or(SLF_EPSILON),
            arc.acoustic,
            arc.lm
        );
    }
    out
}
