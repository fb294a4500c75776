//! Kolmogorov–Smirnov distance between weighted empirical distributions.

use crate::error::{Error, Result};

/// `sup_y |F_a(y) − F_b(y)|` where `F_a` puts mass `wa[i]/Σwa` on `a[i]`
/// (and likewise for `b`). Ties are merged before the supremum is taken.
pub fn weighted_ks_distance(a: &[f64], wa: &[f64], b: &[f64], wb: &[f64]) -> Result<f64> {
    if a.len() != wa.len() || b.len() != wb.len() {
        return Err(Error::InvalidArgument("samples and weights differ in length".into()));
    }
    let (sa, sb): (f64, f64) = (wa.iter().sum(), wb.iter().sum());
    if !(sa > 0.0 && sb > 0.0) || wa.iter().chain(wb).any(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidArgument("weights must be non-negative with positive total".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("samples contain NaN".into()));
    }
    let mut merged: Vec<(f64, f64)> = a
        .iter()
        .zip(wa)
        .map(|(v, w)| (*v, w / sa))
        .chain(b.iter().zip(wb).map(|(v, w)| (*v, -w / sb)))
        .collect();
    merged.sort_unstable_by(|p, q| p.0.total_cmp(&q.0));
    let (mut diff, mut sup) = (0.0f64, 0.0f64);
    for (i, (v, w)) in merged.iter().enumerate() {
        diff += w;
        if merged.get(i + 1).is_none_or(|next| next.0 != *v) {
            sup = sup.max(diff.abs());
        }
    }
    Ok(sup)
}

/// Unweighted two-sample distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    weighted_ks_distance(a, &vec![1.0; a.len()], b, &vec![1.0; b.len()])
}
