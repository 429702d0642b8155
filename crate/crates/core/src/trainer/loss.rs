use crate::error::{Error, Result};
use crate::numcore::{logsumexp, Graph, Var};

/// `−log Σ_{gold} softmax(scores)` for a `[n, 1]` score column.
pub fn marginal_nll(g: &mut Graph, scores: Var, gold: &[usize]) -> Result<Var> {
    if gold.is_empty() {
        return Err(Error::EmptyGold);
    }
    let all = g.logsumexp(scores)?;
    let picked = g.gather_rows(scores, gold);
    let good = g.logsumexp(picked)?;
    g.sub(all, good)
}

/// Plain-value version of [`marginal_nll`].
pub fn marginal_nll_value(scores: &[f64], gold: &[usize]) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::EmptyGold);
    }
    let picked: Vec<f64> = gold.iter().map(|&k| scores[k]).collect();
    Ok(logsumexp(scores) - logsumexp(&picked))
}
