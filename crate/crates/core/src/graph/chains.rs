use super::RegGraph;
use crate::error::{check_len, Error, Result};

/// All chains starting at the root: the empty chain followed by the edge
/// path from the root to every other node, in breadth-first order.
pub fn enumerate_root_chains(g: &RegGraph) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &v in g.order() {
        if v == g.root() {
            continue;
        }
        let mut path = Vec::new();
        let mut cur = v;
        while let Some(e) = g.parent_edge(cur) {
            path.push(e);
            cur = g.edge(e).tail;
        }
        path.reverse();
        out.push(path);
    }
    out
}

/// `max_F prod_{e in F} alpha2_e / alpha1_e` over root chains, with `0/0 = 0`.
/// Requires `alpha1 >= alpha2` componentwise.
pub fn weight_ratio_constant(g: &RegGraph, alpha1: &[f64], alpha2: &[f64]) -> Result<f64> {
    check_len("first weight vector", g.n_edges(), alpha1.len())?;
    check_len("second weight vector", g.n_edges(), alpha2.len())?;
    if let Some(e) = (0..g.n_edges()).find(|&e| alpha1[e] < alpha2[e] || alpha2[e] < 0.0) {
        return Err(Error::Precondition(format!(
            "weights must satisfy alpha1 >= alpha2 >= 0 (edge {e}: {} vs {})",
            alpha1[e], alpha2[e]
        )));
    }
    let ratio = |e: usize| {
        if alpha1[e] == 0.0 {
            0.0
        } else {
            alpha2[e] / alpha1[e]
        }
    };
    Ok(enumerate_root_chains(g)
        .iter()
        .map(|c| c.iter().map(|&e| ratio(e)).product::<f64>())
        .fold(f64::NEG_INFINITY, f64::max))
}

/// `max_F prod_{e in F} alpha_e` over root chains including the empty one.
pub fn chain_constant(g: &RegGraph, alpha: &[f64]) -> Result<f64> {
    check_len("weight vector", g.n_edges(), alpha.len())?;
    Ok(enumerate_root_chains(g)
        .iter()
        .map(|c| c.iter().map(|&e| alpha[e]).product::<f64>())
        .fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaFactor {
    pub value: f64,
    pub at_most_one: bool,
}

/// `min_F prod_{e in F} alpha_k,e / alpha_limit,e` over the empty chain and
/// the root chains whose limit weights are all positive.
pub fn gamma_factor(g: &RegGraph, alpha_limit: &[f64], alpha_k: &[f64]) -> Result<GammaFactor> {
    check_len("limit weights", g.n_edges(), alpha_limit.len())?;
    check_len("sequence weights", g.n_edges(), alpha_k.len())?;
    if let Some(e) = (0..g.n_edges()).find(|&e| alpha_k[e] <= 0.0) {
        return Err(Error::Precondition(format!(
            "sequence weights must be positive (edge {e}: {})",
            alpha_k[e]
        )));
    }
    let value = enumerate_root_chains(g)
        .iter()
        .filter(|c| c.iter().all(|&e| alpha_limit[e] > 0.0))
        .map(|c| c.iter().map(|&e| alpha_k[e] / alpha_limit[e]).product::<f64>())
        .fold(f64::INFINITY, f64::min);
    Ok(GammaFactor {
        value,
        at_most_one: value <= 1.0,
    })
}
