//! Numeric gradient checking against central finite differences.

use rand::Rng;

use super::graph::Graph;
use super::tensor::Tensor;
use crate::error::Result;

/// Compares analytic gradients of a scalar function against central finite
/// differences and returns the worst relative error over the sampled
/// coordinates.
///
/// `build` must construct the forward pass from scratch on the given graph,
/// reading the current values of `params`; it is re-run twice per sampled
/// coordinate with that coordinate nudged by `±step`. The relative error for
/// one coordinate is `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
///
/// The function must be deterministic across calls (no dropout, no fresh
/// randomness), otherwise the differences measure noise.
pub fn finite_diff_check<F>(
    params: &[Tensor],
    mut build: F,
    step: f64,
    samples_per_param: usize,
    rng: &mut impl Rng,
) -> Result<f64>
where
    F: FnMut(&mut Graph) -> Result<Tensor>,
{
    for p in params {
        p.zero_grad();
    }
    let mut graph = Graph::new();
    let loss = build(&mut graph)?;
    graph.backward(&loss)?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();

    let mut worst = 0.0f64;
    for (p, grads) in params.iter().zip(&analytic) {
        let len = p.numel();
        let coords: Vec<usize> = if samples_per_param >= len {
            (0..len).collect()
        } else {
            rand::seq::index::sample(rng, len, samples_per_param).into_vec()
        };
        for idx in coords {
            p.nudge(idx, step);
            let plus = {
                let mut g = Graph::new();
                build(&mut g)?.item()
            };
            p.nudge(idx, -2.0 * step);
            let minus = {
                let mut g = Graph::new();
                build(&mut g)?.item()
            };
            p.nudge(idx, step);
            let numeric = (plus - minus) / (2.0 * step);
            let a = grads[idx];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
