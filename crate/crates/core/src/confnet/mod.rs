//! Word confusion networks: construction from lattices, posterior filtering,
//! and flattening into separator-delimited text.

mod bitset;
mod cluster;

pub use cluster::build_wcn;

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{arc_posteriors, Lattice, LatticeError, Scales};

/// Token used for epsilon in the debug serialization.
pub const DEBUG_EPSILON: &str = "<eps>";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfnetError {
    #[error("lattice has no arcs")]
    EmptyLattice,
    #[error("confusion network has no bins")]
    EmptyNetwork,
    #[error("bin {bin} still holds an epsilon option; filter before rendering")]
    EpsilonPresent { bin: usize },
    #[error("threshold {0} is outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("unknown separator {0:?}; expected \"/\" or \"|\"")]
    InvalidSeparator(String),
    #[error("{posteriors} posteriors supplied for {arcs} arcs")]
    PosteriorMismatch { arcs: usize, posteriors: usize },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WcnOption {
    /// `None` is epsilon.
    pub word: Option<String>,
    pub posterior: f64,
    /// Smallest lattice arc id merged into this option.
    pub first_arc: Option<usize>,
}

impl WcnOption {
    pub fn is_epsilon(&self) -> bool {
        self.word.is_none()
    }
}

pub type Bin = Vec<WcnOption>;

/// Descending posterior, ties by word (epsilon sorts first).
pub(crate) fn sort_options(options: &mut [WcnOption]) {
    options.sort_by(|a, b| {
        b.posterior
            .total_cmp(&a.posterior)
            .then_with(|| a.word.cmp(&b.word))
    });
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfusionNetwork {
    bins: Vec<Bin>,
}

impl ConfusionNetwork {
    pub(crate) fn from_bins_unchecked(bins: Vec<Bin>) -> Self {
        ConfusionNetwork { bins }
    }

    /// Builds a network from explicit bins; options are re-sorted.
    pub fn from_bins(mut bins: Vec<Bin>) -> Self {
        for b in &mut bins {
            sort_options(b);
        }
        ConfusionNetwork { bins }
    }

    pub fn bins(&self) -> &[Bin] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn has_epsilon(&self) -> bool {
        self.bins.iter().flatten().any(WcnOption::is_epsilon)
    }

    /// Highest-posterior word of every bin, skipping bins whose best option
    /// is epsilon.
    pub fn top_words(&self) -> Vec<String> {
        self.bins
            .iter()
            .filter_map(|b| b.first().and_then(|o| o.word.clone()))
            .collect()
    }

    /// One bin per line, `word:posterior` pairs with six decimals.
    pub fn to_debug_string(&self) -> String {
        let mut out = String::new();
        for bin in &self.bins {
            let line: Vec<String> = bin
                .iter()
                .map(|o| {
                    format!(
                        "{}:{:.6}",
                        o.word.as_deref().unwrap_or(DEBUG_EPSILON),
                        o.posterior
                    )
                })
                .collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn from_debug_str(text: &str) -> Result<Self, ConfnetError> {
        let mut bins = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut bin = Vec::new();
            for pair in line.split_whitespace() {
                let (w, p) = pair.rsplit_once(':').ok_or_else(|| ConfnetError::Parse {
                    line: i + 1,
                    reason: format!("expected word:posterior, got {pair:?}"),
                })?;
                let posterior: f64 = p.parse().map_err(|_| ConfnetError::Parse {
                    line: i + 1,
                    reason: format!("bad posterior {p:?}"),
                })?;
                bin.push(WcnOption {
                    word: (w != DEBUG_EPSILON).then(|| w.to_string()),
                    posterior,
                    first_arc: None,
                });
            }
            bins.push(bin);
        }
        Ok(ConfusionNetwork::from_bins(bins))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Separator {
    #[serde(rename = "/")]
    Slash,
    #[serde(rename = "|")]
    Pipe,
}

impl Separator {
    pub fn as_char(self) -> char {
        match self {
            Separator::Slash => '/',
            Separator::Pipe => '|',
        }
    }
}

impl fmt::Display for Separator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for Separator {
    type Err = ConfnetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "/" => Ok(Separator::Slash),
            "|" => Ok(Separator::Pipe),
            other => Err(ConfnetError::InvalidSeparator(other.to_string())),
        }
    }
}

/// Order of the alternatives inside a flattened bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionOrder {
    /// Order in which the words first appear among the lattice arcs.
    #[default]
    Lattice,
    /// Descending posterior, ties by word.
    Posterior,
}

impl FromStr for OptionOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lattice" => Ok(OptionOrder::Lattice),
            "posterior" => Ok(OptionOrder::Posterior),
            other => Err(format!("unknown option order {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WcnRenderOptions {
    pub separator: Separator,
    pub threshold: f64,
    #[serde(default)]
    pub order: OptionOrder,
}

impl WcnRenderOptions {
    pub fn new(separator: Separator, threshold: f64) -> Result<Self, ConfnetError> {
        check_threshold(threshold)?;
        Ok(WcnRenderOptions {
            separator,
            threshold,
            order: OptionOrder::default(),
        })
    }
}

fn check_threshold(t: f64) -> Result<(), ConfnetError> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(ConfnetError::InvalidThreshold(t))
    }
}

/// Drops epsilon options, then options under `threshold`. A bin that would
/// lose every word keeps its best word; a bin holding only epsilon is removed.
/// Posteriors are not renormalized.
pub fn filter_options(cn: &ConfusionNetwork, threshold: f64) -> Result<ConfusionNetwork, ConfnetError> {
    check_threshold(threshold)?;
    let mut bins = Vec::with_capacity(cn.bins.len());
    for bin in &cn.bins {
        let words: Vec<&WcnOption> = bin.iter().filter(|o| !o.is_epsilon()).collect();
        let Some(best) = words.first() else {
            continue;
        };
        let mut kept: Vec<WcnOption> = words
            .iter()
            .filter(|o| o.posterior >= threshold)
            .map(|o| (*o).clone())
            .collect();
        if kept.is_empty() {
            kept.push((*best).clone());
        }
        bins.push(kept);
    }
    Ok(ConfusionNetwork { bins })
}

pub fn flatten_wcn(cn: &ConfusionNetwork, opts: &WcnRenderOptions) -> Result<String, ConfnetError> {
    let sep = opts.separator.as_char().to_string();
    let mut parts = Vec::with_capacity(cn.bins.len());
    for (i, bin) in cn.bins.iter().enumerate() {
        if bin.iter().any(WcnOption::is_epsilon) {
            return Err(ConfnetError::EpsilonPresent { bin: i });
        }
        let mut opts_in_bin: Vec<&WcnOption> = bin.iter().collect();
        if opts.order == OptionOrder::Lattice {
            // stable: options without arc provenance keep posterior order
            opts_in_bin.sort_by_key(|o| o.first_arc.unwrap_or(usize::MAX));
        }
        let words: Vec<&str> = opts_in_bin
            .iter()
            .filter_map(|o| o.word.as_deref())
            .collect();
        parts.push(words.join(&sep));
    }
    Ok(parts.join(" "))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WcnStats {
    pub options_per_word: f64,
    pub bins: usize,
    pub max_bin_size: usize,
}

pub fn wcn_stats(cn: &ConfusionNetwork) -> Result<WcnStats, ConfnetError> {
    if cn.is_empty() {
        return Err(ConfnetError::EmptyNetwork);
    }
    if let Some(bin) = cn.bins.iter().position(|b| b.iter().any(WcnOption::is_epsilon)) {
        return Err(ConfnetError::EpsilonPresent { bin });
    }
    let total: usize = cn.bins.iter().map(Vec::len).sum();
    Ok(WcnStats {
        options_per_word: total as f64 / cn.bins.len() as f64,
        bins: cn.bins.len(),
        max_bin_size: cn.bins.iter().map(Vec::len).max().unwrap_or(0),
    })
}

/// Lattice to flattened string in one step.
pub fn render_wcn(lat: &Lattice, scales: Scales, opts: &WcnRenderOptions) -> Result<String, ConfnetError> {
    let filtered = filtered_wcn(lat, scales, opts.threshold)?;
    flatten_wcn(&filtered, opts)
}

pub fn filtered_wcn(lat: &Lattice, scales: Scales, threshold: f64) -> Result<ConfusionNetwork, ConfnetError> {
    if lat.num_arcs() == 0 {
        return Err(ConfnetError::EmptyLattice);
    }
    let post = arc_posteriors(lat, scales)?;
    let cn = build_wcn(lat, &post)?;
    filter_options(&cn, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{ArcSpec, Lattice};

    fn opt(word: &str, p: f64) -> WcnOption {
        WcnOption {
            word: (word != DEBUG_EPSILON).then(|| word.to_string()),
            posterior: p,
            first_arc: None,
        }
    }

    fn sum(bin: &Bin) -> f64 {
        bin.iter().map(|o| o.posterior).sum()
    }

    #[test]
    fn single_path_gives_certain_bins() {
        let lat = Lattice::linear(&["how", "many", "total", "yards"]).unwrap();
        let post = arc_posteriors(&lat, Scales::default()).unwrap();
        let cn = build_wcn(&lat, &post).unwrap();
        assert_eq!(cn.len(), 4);
        for (bin, w) in cn.bins().iter().zip(["how", "many", "total", "yards"]) {
            assert_eq!(bin.len(), 1);
            assert_eq!(bin[0].word.as_deref(), Some(w));
            assert!((bin[0].posterior - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn diamond_becomes_one_bin() {
        let lat = Lattice::new(
            vec![None; 2],
            vec![
                ArcSpec::new(0, 1, "game", 0.4f64.ln(), 0.0),
                ArcSpec::new(0, 1, "gain", 0.6f64.ln(), 0.0),
            ],
        )
        .unwrap();
        let post = arc_posteriors(&lat, Scales::default()).unwrap();
        let cn = build_wcn(&lat, &post).unwrap();
        assert_eq!(cn.len(), 1);
        let bin = &cn.bins()[0];
        assert_eq!(bin[0].word.as_deref(), Some("gain"));
        assert!((bin[0].posterior - 0.6).abs() < 1e-12);
        assert_eq!(bin[1].word.as_deref(), Some("game"));
        assert!((bin[1].posterior - 0.4).abs() < 1e-12);
    }

    #[test]
    fn skipped_word_gets_epsilon_residual() {
        // "a b" with weight 0.3 versus "b" with weight 0.7
        let lat = Lattice::new(
            vec![None; 3],
            vec![
                ArcSpec::new(0, 1, "a", 0.3f64.ln(), 0.0),
                ArcSpec::new(1, 2, "b", 0.0, 0.0),
                ArcSpec::new(0, 2, "b", 0.7f64.ln(), 0.0),
            ],
        )
        .unwrap();
        let post = arc_posteriors(&lat, Scales::default()).unwrap();
        let cn = build_wcn(&lat, &post).unwrap();
        assert_eq!(cn.len(), 2);
        let first = &cn.bins()[0];
        assert_eq!(first.len(), 2);
        assert!(first[0].is_epsilon());
        assert!((first[0].posterior - 0.7).abs() < 1e-12);
        assert_eq!(first[1].word.as_deref(), Some("a"));
        assert!((first[1].posterior - 0.3).abs() < 1e-12);
        let second = &cn.bins()[1];
        assert_eq!(second.len(), 1);
        assert_eq!(second[0].word.as_deref(), Some("b"));
        assert!((second[0].posterior - 1.0).abs() < 1e-12);
        assert!((sum(first) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn filter_keeps_only_confident_word() {
        let cn = ConfusionNetwork::from_bins(vec![vec![
            opt("towel", 0.22),
            opt("two", 0.12),
            opt("total", 0.36),
            opt("tow", 0.18),
            opt("tall", 0.12),
        ]]);
        let f = filter_options(&cn, 0.3).unwrap();
        assert_eq!(f.top_words(), vec!["total"]);
        assert_eq!(f.bins()[0].len(), 1);
    }

    #[test]
    fn zero_threshold_keeps_every_word() {
        let cn = ConfusionNetwork::from_bins(vec![vec![
            opt("game", 0.5),
            opt("gain", 0.3),
            opt(DEBUG_EPSILON, 0.2),
        ]]);
        let f = filter_options(&cn, 0.0).unwrap();
        assert_eq!(f.bins()[0].len(), 2);
        assert!(!f.has_epsilon());
    }

    #[test]
    fn epsilon_heavy_bin_falls_back_to_best_word() {
        let cn = ConfusionNetwork::from_bins(vec![vec![
            opt(DEBUG_EPSILON, 0.9),
            opt("game", 0.06),
            opt("gain", 0.04),
        ]]);
        let f = filter_options(&cn, 0.3).unwrap();
        assert_eq!(f.bins().len(), 1);
        assert_eq!(f.bins()[0].len(), 1);
        assert_eq!(f.bins()[0][0].word.as_deref(), Some("game"));
        // unrenormalized
        assert_eq!(f.bins()[0][0].posterior, 0.06);
    }

    #[test]
    fn epsilon_only_bin_is_dropped() {
        let cn = ConfusionNetwork::from_bins(vec![
            vec![opt(DEBUG_EPSILON, 1.0)],
            vec![opt("yards", 1.0)],
        ]);
        let f = filter_options(&cn, 0.3).unwrap();
        assert_eq!(f.len(), 1);
    }

    #[test]
    fn bad_threshold() {
        let cn = ConfusionNetwork::default();
        assert_eq!(
            filter_options(&cn, 1.5).unwrap_err(),
            ConfnetError::InvalidThreshold(1.5)
        );
    }

    #[test]
    fn flatten_refuses_epsilon() {
        let cn = ConfusionNetwork::from_bins(vec![vec![opt("a", 0.5), opt(DEBUG_EPSILON, 0.5)]]);
        let o = WcnRenderOptions::new(Separator::Pipe, 0.0).unwrap();
        assert_eq!(
            flatten_wcn(&cn, &o).unwrap_err(),
            ConfnetError::EpsilonPresent { bin: 0 }
        );
    }

    #[test]
    fn flatten_posterior_order_and_separator() {
        let cn = ConfusionNetwork::from_bins(vec![
            vec![opt("denver", 1.0)],
            vec![opt("gain", 0.45), opt("game", 0.55)],
        ]);
        let mut o = WcnRenderOptions::new(Separator::Slash, 0.0).unwrap();
        o.order = OptionOrder::Posterior;
        assert_eq!(flatten_wcn(&cn, &o).unwrap(), "denver game/gain");
    }

    #[test]
    fn single_hypothesis_renders_plain_sentence() {
        let lat = Lattice::linear(&["who", "did", "denver", "beat"]).unwrap();
        let o = WcnRenderOptions::new(Separator::Pipe, 0.3).unwrap();
        assert_eq!(
            render_wcn(&lat, Scales::default(), &o).unwrap(),
            "who did denver beat"
        );
    }

    #[test]
    fn stats() {
        let single = ConfusionNetwork::from_bins(vec![vec![opt("a", 1.0)], vec![opt("b", 1.0)]]);
        assert_eq!(wcn_stats(&single).unwrap().options_per_word, 1.0);
        let five = ConfusionNetwork::from_bins(vec![["a", "b", "c", "d", "e"]
            .iter()
            .map(|w| opt(w, 0.2))
            .collect()]);
        let s = wcn_stats(&five).unwrap();
        assert_eq!(s.options_per_word, 5.0);
        assert_eq!(s.max_bin_size, 5);
        assert_eq!(
            wcn_stats(&ConfusionNetwork::default()).unwrap_err(),
            ConfnetError::EmptyNetwork
        );
    }

    #[test]
    fn debug_string_round_trip() {
        let cn = ConfusionNetwork::from_bins(vec![
            vec![opt("how", 1.0)],
            vec![opt("game", 0.55), opt("gain", 0.25), opt(DEBUG_EPSILON, 0.2)],
        ]);
        let text = cn.to_debug_string();
        assert_eq!(text, "how:1.000000\ngame:0.550000 gain:0.250000 <eps>:0.200000\n");
        assert_eq!(ConfusionNetwork::from_debug_str(&text).unwrap(), cn);
    }
}
