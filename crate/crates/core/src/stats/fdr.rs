//! Benjamini–Hochberg step-up procedure.

/// Rejection mask at false-discovery level `q`, in input order.
///
/// Rejects the `k` smallest p-values, where `k` is the largest rank with
/// `p_(k) <= k q / m`. NaN p-values are never rejected and count toward `m`.
pub fn bh_fdr(p_values: &[f64], q: f64) -> Vec<bool> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (p_values[a], p_values[b]);
        pa.partial_cmp(&pb)
            .unwrap_or_else(|| pa.is_nan().cmp(&pb.is_nan()))
            .then(a.cmp(&b))
    });
    let mut k = 0;
    for (rank, &i) in order.iter().enumerate() {
        let threshold = (rank + 1) as f64 * q / m as f64;
        if p_values[i] <= threshold {
            k = rank + 1;
        }
    }
    let mut mask = vec![false; m];
    for &i in &order[..k] {
        mask[i] = true;
    }
    mask
}

/// BH-adjusted p-values (monotone, capped at 1).
pub fn bh_adjust(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[b].partial_cmp(&p_values[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut adjusted = vec![f64::NAN; m];
    let mut running = 1.0f64;
    for (pos, &i) in order.iter().enumerate() {
        let rank = m - pos;
        running = running.min(p_values[i] * m as f64 / rank as f64);
        adjusted[i] = running.min(1.0);
    }
    adjusted
}
