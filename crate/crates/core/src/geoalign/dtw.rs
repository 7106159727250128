use serde::{Deserialize, Serialize};

use super::AlignError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtwResult {
    pub path: Vec<(usize, usize)>,
    pub total_cost: f64,
    pub normalized_cost: f64,
}

/// Minimum-cost monotone alignment of `0..n` with `0..m` using steps
/// `(1,0)`, `(0,1)` and `(1,1)`, each weighted 1.
///
/// Path costs accumulate from `(0, 0)` forward. On ties, traceback prefers the
/// diagonal predecessor, then `(i-1, j)`, then `(i, j-1)`.
pub fn dtw<F>(n: usize, m: usize, mut cost: F) -> Result<DtwResult, AlignError>
where
    F: FnMut(usize, usize) -> f64,
{
    if n == 0 || m == 0 {
        return Err(AlignError::EmptySequence);
    }
    let mut acc = vec![f64::INFINITY; n * m];
    let at = |i: usize, j: usize| i * m + j;
    for i in 0..n {
        for j in 0..m {
            let c = cost(i, j);
            if !c.is_finite() || c < 0.0 {
                return Err(AlignError::BadCost { i, j, cost: c });
            }
            let prev = if i == 0 && j == 0 {
                0.0
            } else {
                let mut best = f64::INFINITY;
                if i > 0 && j > 0 {
                    best = acc[at(i - 1, j - 1)];
                }
                if i > 0 {
                    best = best.min(acc[at(i - 1, j)]);
                }
                if j > 0 {
                    best = best.min(acc[at(i, j - 1)]);
                }
                best
            };
            acc[at(i, j)] = prev + c;
        }
    }

    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while i > 0 || j > 0 {
        let mut next = None;
        let mut best = f64::INFINITY;
        for (ok, pi, pj) in [
            (i > 0 && j > 0, i.wrapping_sub(1), j.wrapping_sub(1)),
            (i > 0, i.wrapping_sub(1), j),
            (j > 0, i, j.wrapping_sub(1)),
        ] {
            if ok && acc[at(pi, pj)] < best {
                best = acc[at(pi, pj)];
                next = Some((pi, pj));
            }
        }
        (i, j) = next.expect("a predecessor exists away from the origin");
        path.push((i, j));
    }
    path.reverse();

    let total_cost = acc[at(n - 1, m - 1)];
    Ok(DtwResult { normalized_cost: total_cost / path.len() as f64, total_cost, path })
}
