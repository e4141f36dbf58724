//! Forward-backward arc posteriors in the log domain.

use super::{Lattice, LatticeError, Scales};

/// Per-arc posterior probabilities, indexed by arc id.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcPosteriors {
    posteriors: Vec<f64>,
    log_total: f64,
    scales: Scales,
}

impl ArcPosteriors {
    pub fn get(&self, arc: usize) -> f64 {
        self.posteriors[arc]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.posteriors
    }

    /// Log of the summed weight of every start-to-end path.
    pub fn log_total(&self) -> f64 {
        self.log_total
    }

    pub fn scales(&self) -> Scales {
        self.scales
    }
}

pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn forward(lat: &Lattice, scales: Scales, skip: Option<&[bool]>) -> Vec<f64> {
    let mut alpha = vec![f64::NEG_INFINITY; lat.num_nodes()];
    alpha[lat.start()] = 0.0;
    for &u in lat.topo_order() {
        if alpha[u] == f64::NEG_INFINITY {
            continue;
        }
        for &ai in lat.out_arcs(u) {
            if skip.is_some_and(|s| s[ai]) {
                continue;
            }
            let arc = lat.arc(ai);
            alpha[arc.to] = log_add(alpha[arc.to], alpha[u] + arc.weight(scales));
        }
    }
    alpha
}

fn backward(lat: &Lattice, scales: Scales) -> Vec<f64> {
    let mut beta = vec![f64::NEG_INFINITY; lat.num_nodes()];
    for &u in lat.topo_order().iter().rev() {
        if lat.is_end(u) {
            beta[u] = 0.0;
            continue;
        }
        for &ai in lat.out_arcs(u) {
            let arc = lat.arc(ai);
            beta[u] = log_add(beta[u], arc.weight(scales) + beta[arc.to]);
        }
    }
    beta
}

fn log_total_from_alpha(lat: &Lattice, alpha: &[f64]) -> f64 {
    lat.end_nodes()
        .iter()
        .fold(f64::NEG_INFINITY, |acc, &e| log_add(acc, alpha[e]))
}

/// Log total weight of the start-to-end paths that avoid every arc flagged in
/// `skip`. `-inf` when no such path exists.
pub(crate) fn log_total_excluding(lat: &Lattice, scales: Scales, skip: &[bool]) -> f64 {
    let alpha = forward(lat, scales, Some(skip));
    log_total_from_alpha(lat, &alpha)
}

pub fn arc_posteriors(lat: &Lattice, scales: Scales) -> Result<ArcPosteriors, LatticeError> {
    scales.validate()?;
    lat.ensure_nonempty()?;
    let alpha = forward(lat, scales, None);
    let beta = backward(lat, scales);
    let log_total = beta[lat.start()];
    let posteriors = lat
        .arcs()
        .iter()
        .map(|a| {
            let lp = alpha[a.from] + a.weight(scales) + beta[a.to] - log_total;
            lp.exp().min(1.0)
        })
        .collect();
    Ok(ArcPosteriors {
        posteriors,
        log_total,
        scales,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::ArcSpec;

    fn diamond(p: f64, q: f64) -> Lattice {
        Lattice::new(
            vec![None; 3],
            vec![
                ArcSpec::new(0, 1, "did", 0.0, 0.0),
                ArcSpec::new(1, 2, "game", p.ln(), 0.0),
                ArcSpec::new(1, 2, "gain", q.ln(), 0.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn diamond_posteriors_match_normalized_path_weights() {
        // Two paths with weights 0.6 and 0.4 (LM scale zeroed).
        let post = arc_posteriors(&diamond(0.6, 0.4), Scales::new(1.0, 0.0).unwrap()).unwrap();
        assert!((post.get(1) - 0.6).abs() < 1e-12);
        assert!((post.get(2) - 0.4).abs() < 1e-12);
        assert!((post.get(0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_weights_split_evenly() {
        let post = arc_posteriors(&diamond(0.3, 0.3), Scales::default()).unwrap();
        assert!((post.get(1) - 0.5).abs() < 1e-12);
        assert!((post.get(2) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_path_is_certain() {
        let lat = Lattice::linear(&["how", "many", "total", "yards"]).unwrap();
        let post = arc_posteriors(&lat, Scales::default()).unwrap();
        for &p in post.as_slice() {
            assert!((p - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_lattice() {
        let lat = Lattice::new(vec![None], vec![]).unwrap();
        assert_eq!(
            arc_posteriors(&lat, Scales::default()).unwrap_err(),
            LatticeError::EmptyLattice
        );
    }

    #[test]
    fn extreme_scores_stay_finite() {
        let lat = Lattice::new(
            vec![None; 2],
            vec![
                ArcSpec::new(0, 1, "a", -5000.0, 0.0),
                ArcSpec::new(0, 1, "b", -5001.0, 0.0),
            ],
        )
        .unwrap();
        let post = arc_posteriors(&lat, Scales::default()).unwrap();
        let sum: f64 = post.as_slice().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(post.log_total().is_finite());
    }

    #[test]
    fn excluding_all_arcs_of_a_cut_has_no_path() {
        let lat = diamond(0.6, 0.4);
        let skip = [false, true, true];
        assert_eq!(
            log_total_excluding(&lat, Scales::default(), &skip),
            f64::NEG_INFINITY
        );
        let skip = [false, true, false];
        let lt = log_total_excluding(&lat, Scales::new(1.0, 0.0).unwrap(), &skip);
        assert!((lt - 0.4f64.ln()).abs() < 1e-12);
    }
}
