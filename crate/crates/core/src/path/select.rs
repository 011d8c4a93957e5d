use crate::error::{Error, Result};

/// Tolerance for the case where every positive contribution is taken and the
/// running sum falls short of the target only through summation order.
const REACH_EPS: f64 = 1e-9;

/// Smallest set of pairs whose contributions reach `theta * output`.
///
/// Pairs are ranked by descending product `inputs[k] * weights[k]` (ties by
/// ascending index) and the shortest qualifying prefix is returned as sorted
/// indices. Pairs with non-positive products are never selected.
pub fn select_min_contributors(inputs: &[f64], weights: &[f64], output: f64, theta: f64) -> Result<Vec<usize>> {
    if inputs.len() != weights.len() {
        return Err(Error::domain(format!(
            "{} inputs but {} weights",
            inputs.len(),
            weights.len()
        )));
    }
    check_theta(theta)?;
    if !(output > 0.0) {
        return Err(Error::Contract(format!(
            "selection requires a positive output value, got {output}"
        )));
    }
    let mut scratch: Vec<(u32, f64)> = inputs
        .iter()
        .zip(weights)
        .enumerate()
        .map(|(k, (x, w))| (k as u32, x * w))
        .collect();
    let n = select_prefix(&mut scratch, theta * output)?;
    let mut picked: Vec<usize> = scratch[..n].iter().map(|&(k, _)| k as usize).collect();
    picked.sort_unstable();
    Ok(picked)
}

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("theta must lie in (0, 1], got {theta}")))
    }
}

/// Core of the selection on precomputed `(index, product)` pairs. Reorders
/// `pairs` so the selected ones come first and returns how many were taken.
pub(crate) fn select_prefix(pairs: &mut Vec<(u32, f64)>, target: f64) -> Result<usize> {
    pairs.retain(|&(_, p)| p > 0.0);
    pairs.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut acc = 0.0f64;
    for (n, &(_, p)) in pairs.iter().enumerate() {
        acc += p;
        if acc >= target {
            return Ok(n + 1);
        }
    }
    if target - acc <= REACH_EPS * target.abs().max(1.0) {
        return Ok(pairs.len());
    }
    Err(Error::Internal(format!(
        "threshold {target} unreachable: positive contributions sum to {acc}"
    )))
}
