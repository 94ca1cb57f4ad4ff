//! Tensor-stage estimates: weights, scales, and central-order prefixes.

use crate::mallows::{PHI_MAX, PHI_MIN};
use crate::moments::MomentStats;
use crate::tensor::{Partition3, Rank2Decomp};

use super::LearnerConfig;

/// What the tensor stage knows after a successful decomposition: the
/// mixing weights, both scale parameters, and for each component the items
/// at the top of its central order (best first), as far down as the
/// first-place probabilities stay statistically reliable.
#[derive(Clone, Debug)]
pub struct TopKEstimate {
    pub w1: f64,
    pub w2: f64,
    pub phi1: f64,
    pub phi2: f64,
    /// Leading items of component 1's central order, best first.
    pub prefix1: Vec<u8>,
    /// Leading items of component 2's central order, best first.
    pub prefix2: Vec<u8>,
}

/// Estimates the scale of a geometric decay from noisy values.
///
/// Sorts the entries, drops those at or below `floor` (the noise level),
/// and returns the largest ratio of consecutive survivors. For a clean
/// geometric sequence every ratio equals the scale; under noise the
/// largest ratio is the stable upper estimate.
///
/// # Errors
///
/// Fails when fewer than two entries clear the floor.
pub fn estimate_phi(values: &[f64], floor: f64) -> Result<f64, String> {
    let mut v: Vec<f64> = values
        .iter()
        .copied()
        .filter(|x| *x > floor && *x > 0.0)
        .collect();
    if v.len() < 2 {
        return Err(format!(
            "scale estimation needs two entries above the noise floor {floor:.3e}, found {}",
            v.len()
        ));
    }
    v.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut ratio: f64 = 0.0;
    for k in 1..v.len() {
        ratio = ratio.max(v[k] / v[k - 1]);
    }
    Ok(ratio.clamp(PHI_MIN, PHI_MAX))
}

/// Turns a gated rank-2 decomposition into mixture-level estimates.
///
/// Per part, the first-moment restriction is regressed onto the two factor
/// directions; the regression coefficients reassemble the mixing weights
/// (first-place probabilities sum to one) and stitch per-part factors into
/// full first-place vectors, whose decay yields the scales and whose
/// largest entries yield the central-order prefixes.
///
/// Fails (rejecting the round, not the run) when the coefficients are
/// inconsistent with a probability split or a scale is unreadable.
pub fn infer_top_k(
    decomp: &Rank2Decomp,
    partition: &Partition3,
    moments: &MomentStats,
    eps_s: f64,
    config: &LearnerConfig,
) -> Result<TopKEstimate, String> {
    let n = moments.n();
    let mut x = vec![0.0f64; n];
    let mut y = vec![0.0f64; n];
    let mut raw = [0.0f64; 2];
    let mut clamped = [0.0f64; 2];

    for (tau, items) in partition.parts().iter().enumerate() {
        let u1 = unit(&decomp.factors[tau][0]);
        let u2 = unit(&decomp.factors[tau][1]);
        let p: Vec<f64> = items.iter().map(|&e| moments.p1(e as usize)).collect();
        // Least squares for p ~ alpha u1 + beta u2 (u's are unit vectors).
        let cross: f64 = dot(&u1, &u2);
        let det = 1.0 - cross * cross;
        if det.abs() < 1e-12 {
            return Err(format!("part {tau}: factor directions are parallel"));
        }
        let r1 = dot(&u1, &p);
        let r2 = dot(&u2, &p);
        let alpha = (r1 - cross * r2) / det;
        let beta = (r2 - cross * r1) / det;
        for (idx, &e) in items.iter().enumerate() {
            let vx = alpha * u1[idx];
            let vy = beta * u2[idx];
            x[e as usize] = vx;
            y[e as usize] = vy;
            raw[0] += vx;
            raw[1] += vy;
            clamped[0] += vx.max(0.0);
            clamped[1] += vy.max(0.0);
        }
    }

    // The two coefficient sums estimate the mixing weights; outside a
    // tolerance band of a probability split the round is untrustworthy.
    for (r, sum) in raw.iter().enumerate() {
        if !(-0.05..=1.05).contains(sum) {
            return Err(format!("component {} weight estimate {sum:.4} out of range", r + 1));
        }
    }
    if (raw[0] + raw[1] - 1.0).abs() > 0.05 {
        return Err(format!(
            "weight estimates sum to {:.4}, not 1",
            raw[0] + raw[1]
        ));
    }
    let total = clamped[0] + clamped[1];
    if total <= 0.0 {
        return Err("weight estimates vanish".into());
    }
    let w1 = (clamped[0] / total).clamp(config.weight_floor, 1.0 - config.weight_floor);
    let w2 = 1.0 - w1;

    // Normalize the stitched vectors to first-place scale.
    for v in x.iter_mut() {
        *v /= w1;
    }
    for v in y.iter_mut() {
        *v /= w2;
    }

    let floor = eps_s.sqrt();
    let phi1 = estimate_phi(&x, floor).map_err(|e| format!("component 1: {e}"))?;
    let phi2 = estimate_phi(&y, floor).map_err(|e| format!("component 2: {e}"))?;

    // Reliable prefix length: the theory bound on readable entries, capped
    // by what actually clears the noise floor.
    let prefix_cap = (0..n).filter(|&i| moments.p1(i) > 3.0 * eps_s).count();
    let w_min = w1.min(w2);
    let phi_max = phi1.max(phi2);
    let gamma = (1.0 - phi_max).powi(2) / (4.0 * n as f64 * phi_max);
    let radius = |phi: f64, v: &[f64]| -> usize {
        let bound = ((n as f64).powi(10) / (w_min * gamma).powi(2)).ln() / (1.0 / phi).ln();
        let above = v.iter().filter(|&&e| e > floor).count();
        (bound.floor() as usize).min(above).min(prefix_cap).min(n).max(1)
    };
    let prefix1 = top_items(&x, radius(phi1, &x));
    let prefix2 = top_items(&y, radius(phi2, &y));

    Ok(TopKEstimate {
        w1,
        w2,
        phi1,
        phi2,
        prefix1,
        prefix2,
    })
}

fn unit(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    v.iter().map(|x| x / norm).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The `k` items with the largest values, in decreasing order (ties broken
/// by item id for determinism).
fn top_items(values: &[f64], k: usize) -> Vec<u8> {
    let mut order: Vec<u8> = (0..values.len() as u8).collect();
    order.sort_by(|&a, &b| {
        values[b as usize]
            .total_cmp(&values[a as usize])
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}
