//! Central-difference gradient oracle.

use std::collections::BTreeMap;

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| relative_error(*a, *b))
        .fold(0.0, f64::max)
}

fn perturbed(params: &ParamStore, group: &str, name: &str, index: usize, delta: f64) -> Result<ParamStore> {
    let mut p = params.clone();
    let t = p.get(group, name)?;
    let mut data = t.data().to_vec();
    if index >= data.len() {
        return Err(Error::Contract(format!(
            "entry {} out of range for {}/{}",
            index, group, name
        )));
    }
    data[index] += delta;
    let replacement = Tensor::from_vec(t.rows(), t.cols(), data)?;
    p.set(group, name, replacement)?;
    Ok(p)
}

/// Numeric gradient at selected `(group, name, flat index)` entries.
pub fn finite_diff_grad_at<F>(
    f: F,
    params: &ParamStore,
    eps: f64,
    entries: &[(String, String, usize)],
) -> Result<Vec<f64>>
where
    F: Fn(&ParamStore) -> Result<f64>,
{
    if eps <= 0.0 {
        return Err(Error::Contract("finite difference step must be positive".into()));
    }
    entries
        .iter()
        .map(|(g, n, i)| {
            let plus = f(&perturbed(params, g, n, *i, eps)?)?;
            let minus = f(&perturbed(params, g, n, *i, -eps)?)?;
            Ok((plus - minus) / (2.0 * eps))
        })
        .collect()
}

/// Numeric gradient for every scalar entry of every tensor, keyed by `group/name`.
pub fn finite_diff_grad<F>(f: F, params: &ParamStore, eps: f64) -> Result<BTreeMap<String, Vec<f64>>>
where
    F: Fn(&ParamStore) -> Result<f64>,
{
    let mut out = BTreeMap::new();
    for (g, n) in params.keys() {
        let len = params.get(&g, &n)?.data().len();
        let entries: Vec<(String, String, usize)> =
            (0..len).map(|i| (g.clone(), n.clone(), i)).collect();
        out.insert(format!("{}/{}", g, n), finite_diff_grad_at(&f, params, eps, &entries)?);
    }
    Ok(out)
}
