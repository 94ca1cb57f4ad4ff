//! Completing central orders from position frequencies.
//!
//! The tensor stage pins down weights, scales, and central-order prefixes.
//! This module recovers everything below the prefixes from position
//! frequencies, which mix the two components' position tables with known
//! weights. Two routes exist. If some item sits in one component's prefix
//! but is effectively absent from the other's, conditioning on that item
//! being ranked first isolates the first component (the pivot path). If
//! not, conditioning on any item whose first-place probabilities differ
//! across components reweights the mixture, and the conditioned plus
//! unconditioned tables form a solvable two-equation linear system per
//! table entry (the linear-system path).

use crate::mallows::MallowsModel;
use crate::mixture::MallowsMixture;
use crate::perm::Permutation;
use crate::stats::Stats;

use super::topk::{estimate_phi, TopKEstimate};
use super::{Diagnostics, LearnPath, LearnerConfig};

/// Assembles a full mixture from a top-k estimate, or explains why this
/// round's estimate cannot be completed.
pub(super) fn recover_rest(
    stats: &Stats,
    topk: &TopKEstimate,
    eps_s: f64,
    config: &LearnerConfig,
    diag: &mut Diagnostics,
) -> Result<(MallowsMixture, LearnPath), String> {
    let n = stats.n();
    // Idealized first-place vectors: geometric decay along the prefix,
    // zero beyond it. Entries beyond the prefix are unreadable anyway, and
    // zeroing them makes the exclusivity test below sharp.
    let x = clean_representative(&topk.prefix1, topk.phi1, n);
    let y = clean_representative(&topk.prefix2, topk.phi2, n);

    let w_min = topk.w1.min(topk.w2);
    let phi_max = topk.phi1.max(topk.phi2);
    let spread = 10.0 * (n as f64).powi(2) * phi_max.powi(2) / (1.0 - phi_max).powi(2)
        * (n.max(2) as f64).ln();
    // An item passes the exclusivity test when the other component's
    // first-place probability is negligible against its own, with enough
    // margin that conditioning keeps contamination below the table
    // resolution.
    let exclusive = |own: f64, other: f64| other < w_min / 16.0 * own / ((n as f64).powi(2) * spread);

    let mut pivot_reject = String::new();
    if let Some(&i) = topk.prefix1.iter().find(|&&i| exclusive(x[i as usize], y[i as usize])) {
        match pivot_path(stats, i, true, topk, config, diag) {
            Ok(out) => return Ok(out),
            Err(e) => pivot_reject = format!("pivot on item {i}: {e}"),
        }
    } else if let Some(&i) = topk.prefix2.iter().find(|&&i| exclusive(y[i as usize], x[i as usize])) {
        match pivot_path(stats, i, false, topk, config, diag) {
            Ok(out) => return Ok(out),
            Err(e) => pivot_reject = format!("pivot on item {i}: {e}"),
        }
    }
    if !pivot_reject.is_empty() {
        diag.notes.push(pivot_reject);
    }
    linear_system_path(stats, topk, &x, &y, eps_s, config)
}

/// First-place probabilities implied by a prefix and scale: the `k`-th
/// prefix item gets `phi^k / z_n`, everything else 0.
fn clean_representative(prefix: &[u8], phi: f64, n: usize) -> Vec<f64> {
    let z = crate::mallows::z_partition(n, phi);
    let mut x = vec![0.0f64; n];
    let mut p = 1.0;
    for &item in prefix {
        x[item as usize] = p / z;
        p *= phi;
    }
    x
}

/// Conditions on an item exclusive to one component: the conditioned
/// samples are (nearly) pure draws from that component without the item,
/// a single Mallows model we can read off directly. The other central then
/// comes from the residual position frequencies.
fn pivot_path(
    stats: &Stats,
    pivot: u8,
    pivot_in_first: bool,
    topk: &TopKEstimate,
    config: &LearnerConfig,
    diag: &mut Diagnostics,
) -> Result<(MallowsMixture, LearnPath), String> {
    let n = stats.n();
    let (table, count) = stats
        .conditional_position_freq(pivot)
        .map_err(|e| e.to_string())?;
    if let Some(c) = count {
        if c < config.min_conditioned {
            return Err(format!(
                "only {c} conditioned samples, need {}",
                config.min_conditioned
            ));
        }
    }
    let floor = conditional_floor(n - 1, count);
    let (reduced, phi_own) = learn_single_mallows(&table, floor)?;
    let mut own_central = vec![pivot];
    own_central.extend(reduced.as_slice().iter().map(|&e| unreduce(e, pivot)));
    let own = Permutation::new(own_central).map_err(|e| e.to_string())?;

    let (w_own, w_other, phi_other) = if pivot_in_first {
        (topk.w1, topk.w2, topk.phi2)
    } else {
        (topk.w2, topk.w1, topk.phi1)
    };
    let own_model = MallowsModel::new(own, phi_own).map_err(|e| e.to_string())?;
    let other = match find_pi(&stats.position_freq(), &own_model, w_own, w_other) {
        Ok(p) => p,
        Err(e) => {
            // A vanishing second weight leaves nothing to subtract; report
            // the dominant component twice rather than invent an order.
            diag.notes
                .push(format!("residual completion unavailable ({e}); reporting the dominant component twice"));
            own_model.central().clone()
        }
    };
    let other_model = MallowsModel::new(other, phi_other).map_err(|e| e.to_string())?;
    let (w1, c1, c2) = if pivot_in_first {
        (topk.w1, own_model, other_model)
    } else {
        (topk.w2, other_model, own_model)
    };
    let mixture = MallowsMixture::new(w1, c1, c2).map_err(|e| e.to_string())?;
    Ok((mixture, LearnPath::Pivot))
}

/// Completes both centrals by solving, per position-table entry, the 2x2
/// system formed by the unconditioned table and the table conditioned on a
/// separating item ranked first.
fn linear_system_path(
    stats: &Stats,
    topk: &TopKEstimate,
    x: &[f64],
    y: &[f64],
    eps_s: f64,
    config: &LearnerConfig,
) -> Result<(MallowsMixture, LearnPath), String> {
    let n = stats.n();
    // The conditioning item: large first-place mass (so the conditioned
    // subsample is big) and component-distinguishing (so the conditioned
    // weights actually move).
    let gap = (8.0 * eps_s).max(1e-9);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        x[b].max(y[b])
            .total_cmp(&x[a].max(y[a]))
            .then(a.cmp(&b))
    });
    let pivot = order
        .into_iter()
        .find(|&i| (x[i] - y[i]).abs() > gap)
        .ok_or_else(|| {
            "no item separates the components' first-place laws".to_string()
        })?;

    // Posterior component weights given the pivot is ranked first.
    let w1c = if x[pivot] <= 0.0 {
        0.0
    } else if y[pivot] <= 0.0 {
        1.0
    } else {
        1.0 / (1.0 + (topk.w2 / topk.w1) * (y[pivot] / x[pivot]))
    };
    let w2c = 1.0 - w1c;
    let det = topk.w1 * w2c - topk.w2 * w1c;
    if det.abs() < 1e-6 {
        return Err(format!(
            "conditioning on item {pivot} leaves the weights unchanged (det {det:.2e})"
        ));
    }

    let mut removed = vec![false; n];
    removed[pivot] = true;
    let h = stats
        .projected_position_freq(&removed)
        .map_err(|e| e.to_string())?;
    let (hc, count) = stats
        .conditional_position_freq(pivot as u8)
        .map_err(|e| e.to_string())?;
    if let Some(c) = count {
        if c < config.min_conditioned {
            return Err(format!(
                "only {c} conditioned samples on item {pivot}, need {}",
                config.min_conditioned
            ));
        }
    }

    // Both tables mix the same two reduced position tables, with weights
    // (w1, w2) and (w1c, w2c) respectively; solve entrywise.
    let m = n - 1;
    let mut g1 = vec![vec![0.0f64; m]; m];
    let mut g2 = vec![vec![0.0f64; m]; m];
    for e in 0..m {
        for l in 0..m {
            g1[e][l] = (w2c * h[e][l] - topk.w2 * hc[e][l]) / det;
            g2[e][l] = (topk.w1 * hc[e][l] - w1c * h[e][l]) / det;
        }
    }
    let r1 = greedy_position_assignment(&g1)?;
    let r2 = greedy_position_assignment(&g2)?;
    let c1_rest: Vec<u8> = r1.as_slice().iter().map(|&e| unreduce(e, pivot as u8)).collect();
    let c2_rest: Vec<u8> = r2.as_slice().iter().map(|&e| unreduce(e, pivot as u8)).collect();

    // Reinsert the pivot. The component where it carries the larger
    // first-place probability knows its rank from the prefix; the other
    // component places it by residual position frequencies.
    let (own_is_first, own_prefix, own_phi, own_w, other_w, other_phi) = if x[pivot] >= y[pivot] {
        (true, &topk.prefix1, topk.phi1, topk.w1, topk.w2, topk.phi2)
    } else {
        (false, &topk.prefix2, topk.phi2, topk.w2, topk.w1, topk.phi1)
    };
    let own_rank = own_prefix
        .iter()
        .position(|&e| e as usize == pivot)
        .ok_or_else(|| "separating item missing from its own prefix".to_string())?;
    let own_rest = if own_is_first { &c1_rest } else { &c2_rest };
    let own_central = insert_at(own_rest, pivot as u8, own_rank.min(own_rest.len()));
    let own_model = MallowsModel::new(
        Permutation::new(own_central).map_err(|e| e.to_string())?,
        own_phi,
    )
    .map_err(|e| e.to_string())?;

    let freq = stats.position_freq();
    let own_table = own_model.position_probabilities();
    let mut best_slot = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for l in 0..n {
        let resid = (freq[pivot][l] - own_w * own_table[pivot][l]) / other_w;
        if resid > best_val {
            best_val = resid;
            best_slot = l;
        }
    }
    let other_rest = if own_is_first { &c2_rest } else { &c1_rest };
    let other_central = insert_at(other_rest, pivot as u8, best_slot.min(other_rest.len()));
    let other_model = MallowsModel::new(
        Permutation::new(other_central).map_err(|e| e.to_string())?,
        other_phi,
    )
    .map_err(|e| e.to_string())?;

    let (c1, c2) = if own_is_first {
        (own_model, other_model)
    } else {
        (other_model, own_model)
    };
    let mixture = MallowsMixture::new(topk.w1, c1, c2).map_err(|e| e.to_string())?;
    Ok((mixture, LearnPath::Tensor))
}

/// Reads a single Mallows model off a position-frequency table: the
/// central order by greedy assignment, the scale from the decay of the
/// first-place column.
pub fn learn_single_mallows(
    table: &[Vec<f64>],
    phi_floor: f64,
) -> Result<(Permutation, f64), String> {
    let central = greedy_position_assignment(table)?;
    let firsts: Vec<f64> = table.iter().map(|row| row[0]).collect();
    let phi = estimate_phi(&firsts, phi_floor)?;
    Ok((central, phi))
}

/// Subtracts a known component from mixed position frequencies and reads
/// the remaining component's central order from the residual.
///
/// `freq` is the mixture's `item x position` table, `known` the already
/// recovered component carrying weight `w_known`.
///
/// # Errors
///
/// Refuses a residual weight below `1e-3`: dividing by it would amplify
/// noise beyond use, and the caller must handle that case explicitly.
pub fn find_pi(
    freq: &[Vec<f64>],
    known: &MallowsModel,
    w_known: f64,
    w_other: f64,
) -> Result<Permutation, String> {
    if w_other < 1e-3 {
        return Err(format!("residual weight {w_other:.2e} is negligible"));
    }
    let n = known.n();
    let table = known.position_probabilities();
    let mut residual = vec![vec![0.0f64; n]; n];
    for e in 0..n {
        for l in 0..n {
            residual[e][l] = ((freq[e][l] - w_known * table[e][l]) / w_other).max(0.0);
        }
    }
    greedy_position_assignment(&residual)
}

/// Assigns items to positions greedily by decreasing table value: at each
/// step the largest remaining (item, position) cell among unassigned items
/// and unfilled positions wins. Ties break toward the smaller item, then
/// the smaller position, keeping the assignment deterministic.
pub fn greedy_position_assignment(table: &[Vec<f64>]) -> Result<Permutation, String> {
    let n = table.len();
    if n == 0 || table.iter().any(|row| row.len() != n) {
        return Err("position table must be square".into());
    }
    if n > u8::MAX as usize + 1 {
        return Err(format!("{n} items exceed the supported range"));
    }
    let mut item_done = vec![false; n];
    let mut pos_done = vec![false; n];
    let mut central = vec![0u8; n];
    for _ in 0..n {
        let mut best: Option<(usize, usize, f64)> = None;
        for e in 0..n {
            if item_done[e] {
                continue;
            }
            for l in 0..n {
                if pos_done[l] {
                    continue;
                }
                let v = table[e][l];
                let better = match best {
                    None => true,
                    Some((be, bl, bv)) => {
                        v > bv || (v == bv && (e, l) < (be, bl))
                    }
                };
                if better {
                    best = Some((e, l, v));
                }
            }
        }
        let (e, l, _) = best.expect("an unassigned cell always remains");
        item_done[e] = true;
        pos_done[l] = true;
        central[l] = e as u8;
    }
    Permutation::new(central).map_err(|e| e.to_string())
}

/// Noise floor for scale estimation on a conditioned table with `m` items.
fn conditional_floor(m: usize, count: Option<u64>) -> f64 {
    match count {
        Some(c) => (3.0 * ((m.max(2) as f64).ln() / c.max(1) as f64).sqrt()).sqrt(),
        None => 0.0,
    }
}

/// Maps an id from the space with `pivot` deleted back to the full space.
fn unreduce(e: u8, pivot: u8) -> u8 {
    e + u8::from(e >= pivot)
}

fn insert_at(rest: &[u8], item: u8, slot: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(rest.len() + 1);
    out.extend_from_slice(&rest[..slot]);
    out.push(item);
    out.extend_from_slice(&rest[slot..]);
    out
}
