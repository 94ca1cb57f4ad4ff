//! The single Mallows ranking model.
//!
//! A Mallows model `M(phi, pi0)` over items `0..n` assigns each order `pi`
//! the probability `phi^d(pi, pi0) / Z` where `d` is the Kendall tau distance
//! to the central order `pi0`, `phi` in `(0, 1)` is the scale (smaller means
//! more concentrated), and `Z` normalizes. `Z` factors over insertion steps:
//! `Z = prod_{i=1..n} z_i` with `z_i = (1 - phi^i) / (1 - phi)`.

use crate::error::{Error, Result};
use crate::perm::{enumerate_permutations, kendall_tau, max_distance, Permutation};
use rand::Rng;

/// Smallest representable scale; estimates are clamped into range.
pub const PHI_MIN: f64 = 1e-6;
/// Largest representable scale, kept strictly below 1 so every formula with
/// a `1 - phi` denominator stays finite.
pub const PHI_MAX: f64 = 1.0 - 1e-6;

/// Single-step normalizer `z_i = 1 + phi + ... + phi^{i-1}`.
pub fn z_single(i: usize, phi: f64) -> f64 {
    debug_assert!(phi > 0.0 && phi < 1.0);
    (1.0 - phi.powi(i as i32)) / (1.0 - phi)
}

/// Full normalizer `Z = prod_{i=1..n} z_i`, computed with running products.
pub fn z_partition(n: usize, phi: f64) -> f64 {
    let mut z = 1.0;
    let mut pow = phi; // phi^i across the loop
    for _ in 1..=n {
        z *= (1.0 - pow) / (1.0 - phi);
        pow *= phi;
    }
    z
}

/// Concentration gain `(1-phi)/(4 phi) * min(1/n, 1 - phi^2)`: a lower bound
/// on the relative step between consecutive entries of any position
/// distribution row, used to size tolerances.
pub fn gain(n: usize, phi: f64) -> f64 {
    (1.0 - phi) / (4.0 * phi) * (1.0 / n as f64).min(1.0 - phi * phi)
}

/// Expected Kendall tau distance from the central order:
/// `sum_{i=1..n} ( phi/(1-phi) - i phi^i / (1-phi^i) )`.
pub fn expected_kt_distance(n: usize, phi: f64) -> f64 {
    let base = phi / (1.0 - phi);
    let mut total = 0.0;
    let mut pow = phi;
    for i in 1..=n {
        total += base - (i as f64) * pow / (1.0 - pow);
        pow *= phi;
    }
    total
}

/// Inverts [`expected_kt_distance`] in `phi` by bisection (the map is
/// strictly increasing). Targets outside the reachable range clamp to the
/// nearest scale bound.
pub fn phi_from_mean_distance(n: usize, mean: f64) -> f64 {
    let lo_val = expected_kt_distance(n, PHI_MIN);
    let hi_val = expected_kt_distance(n, PHI_MAX);
    if mean <= lo_val {
        return PHI_MIN;
    }
    if mean >= hi_val {
        return PHI_MAX;
    }
    let (mut lo, mut hi) = (PHI_MIN, PHI_MAX);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if expected_kt_distance(n, mid) < mean {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Upper bound on the total-variation distance between two Mallows models
/// sharing a central order: `min(1, n^2 |phi_a - phi_b| / min(phi_a, phi_b))`.
pub fn tv_sensitivity_bound(n: usize, phi_a: f64, phi_b: f64) -> f64 {
    let bound = (n * n) as f64 * (phi_a - phi_b).abs() / phi_a.min(phi_b);
    bound.min(1.0)
}

/// Probability table of item positions under a Mallows model.
///
/// `table[i][l]` is the probability that the item at central rank `i`
/// (0-based) lands at position `l` (0-based). Computed by the insertion
/// recurrence
///
/// ```text
/// f_m(i -> 1) = phi^{i-1} / z_m
/// f_m(i -> l) = (z_{i-1}/z_m) f_{m-1}(i-1 -> l-1)
///             + ((z_m - z_i)/z_m) f_{m-1}(i -> l-1)
/// ```
///
/// (1-based in the formula), conditioning on whether the rank-`i` item is
/// the one placed first. Rows and columns are doubly stochastic and the
/// table is symmetric; symmetry is enforced bit-exactly by mirroring the
/// upper triangle, which the recurrence matches to rounding error.
pub fn position_probability_table(n: usize, phi: f64) -> Vec<Vec<f64>> {
    assert!(n >= 1);
    assert!(phi > 0.0 && phi < 1.0);
    let z: Vec<f64> = (0..=n).map(|i| z_single(i, phi)).collect();
    let mut pow = vec![1.0; n + 1];
    for k in 1..=n {
        pow[k] = pow[k - 1] * phi;
    }
    // prev holds f_{m-1}; build up to f_n.
    let mut prev: Vec<Vec<f64>> = vec![vec![1.0]];
    for m in 2..=n {
        let mut cur = vec![vec![0.0; m]; m];
        for i in 0..m {
            cur[i][0] = pow[i] / z[m];
        }
        for i in 0..m {
            for l in 1..m {
                let from_above = if i >= 1 && i <= m - 1 && l >= 1 {
                    z[i] / z[m] * prev[i - 1][l - 1]
                } else {
                    0.0
                };
                let from_here = if i <= m - 2 {
                    (z[m] - z[i + 1]) / z[m] * prev[i][l - 1]
                } else {
                    0.0
                };
                cur[i][l] = from_above + from_here;
            }
        }
        prev = cur;
    }
    // Mirror the upper triangle so f(i -> l) == f(l -> i) holds exactly.
    for i in 0..n {
        for l in 0..i {
            prev[i][l] = prev[l][i];
        }
    }
    prev
}

/// A Mallows model: central order plus scale.
#[derive(Clone, Debug)]
pub struct MallowsModel {
    central: Permutation,
    phi: f64,
    /// phi^k for k = 0..=n(n-1)/2.
    pow: Vec<f64>,
    /// z_single(i) for i = 0..=n.
    z: Vec<f64>,
    z_full: f64,
    ln_z_full: f64,
}

impl MallowsModel {
    /// Builds a model, clamping `phi` into `[PHI_MIN, PHI_MAX]`.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidParameter`] if `phi` is not in `(0, 1)` or is
    /// not finite.
    pub fn new(central: Permutation, phi: f64) -> Result<Self> {
        if !phi.is_finite() || phi <= 0.0 || phi >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "scale phi must lie in (0, 1), got {phi}"
            )));
        }
        let phi = phi.clamp(PHI_MIN, PHI_MAX);
        let n = central.n();
        let mut pow = Vec::with_capacity(max_distance(n) as usize + 1);
        pow.push(1.0);
        for _ in 0..max_distance(n) {
            pow.push(pow.last().unwrap() * phi);
        }
        let z: Vec<f64> = (0..=n).map(|i| z_single(i, phi)).collect();
        let z_full = z_partition(n, phi);
        Ok(Self {
            central,
            phi,
            pow,
            z,
            z_full,
            ln_z_full: z_full.ln(),
        })
    }

    pub fn n(&self) -> usize {
        self.central.n()
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn central(&self) -> &Permutation {
        &self.central
    }

    pub fn z_full(&self) -> f64 {
        self.z_full
    }

    /// Probability of observing `pi`.
    ///
    /// # Errors
    ///
    /// Returns [`Error::MismatchedLengths`] if sizes differ.
    pub fn prob(&self, pi: &Permutation) -> Result<f64> {
        let d = kendall_tau(&self.central, pi)?;
        Ok(self.pow[d as usize] / self.z_full)
    }

    /// Log probability of observing `pi`.
    ///
    /// # Errors
    ///
    /// Returns [`Error::MismatchedLengths`] if sizes differ.
    pub fn log_prob(&self, pi: &Permutation) -> Result<f64> {
        let d = kendall_tau(&self.central, pi)?;
        Ok(d as f64 * self.phi.ln() - self.ln_z_full)
    }

    /// Draws one sample by repeated insertion and appends the rank order to
    /// `out` (which is cleared first).
    ///
    /// Central items are inserted best-first; the `i`-th item (1-based) picks
    /// slot `j` of the `i` available with probability `phi^{i-j} / z_i`, so
    /// the bottom slot is the mode.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<u8>) {
        out.clear();
        let n = self.n();
        for i in 1..=n {
            let item = self.central.item_at(i - 1);
            let u = rng.random::<f64>() * self.z[i];
            // Walk weights phi^0, phi^1, ... from the bottom slot upwards.
            let mut k = 0usize;
            let mut acc = self.pow[0];
            while u >= acc && k + 1 < i {
                k += 1;
                acc += self.pow[k];
            }
            out.insert(i - 1 - k, item);
        }
    }

    /// Draws one sample as a [`Permutation`].
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Permutation {
        let mut buf = Vec::with_capacity(self.n());
        self.sample_into(rng, &mut buf);
        Permutation::from_trusted(buf)
    }

    /// The full outcome distribution, exactly, for `n <= 8`.
    ///
    /// # Errors
    ///
    /// Returns [`Error::CapacityExceeded`] for larger `n`.
    pub fn exact_distribution(&self) -> Result<Vec<(Permutation, f64)>> {
        let perms = enumerate_permutations(self.n())?;
        let mut out = Vec::with_capacity(perms.len());
        for p in perms {
            let pr = self.prob(&p).expect("sizes match by construction");
            out.push((p, pr));
        }
        Ok(out)
    }

    /// First-place probabilities by item: entry `e` is the probability that
    /// item `e` is ranked first, `phi^{rank_0(e)} / z_n`. This vector is the
    /// model's signature in the moment computations; its entries decay
    /// geometrically along the central order and sum to 1.
    pub fn representative_vector(&self) -> Vec<f64> {
        let n = self.n();
        let mut x = vec![0.0; n];
        for r in 0..n {
            x[self.central.item_at(r) as usize] = self.pow[r] / self.z[n];
        }
        x
    }

    /// Position probabilities in item space: `row e` is the distribution of
    /// item `e`'s position. Rows are [`position_probability_table`] rows
    /// permuted by the central order.
    pub fn position_probabilities(&self) -> Vec<Vec<f64>> {
        let table = position_probability_table(self.n(), self.phi);
        let mut out = vec![Vec::new(); self.n()];
        for r in 0..self.n() {
            out[self.central.item_at(r) as usize] = table[r].clone();
        }
        out
    }

    /// The model of the remaining items given that `item` is ranked first:
    /// a Mallows model with the same scale whose central order drops `item`.
    /// Remaining ids close the gap (ids above `item` shift down by one).
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidParameter`] if `item` is out of range or the
    /// model has a single item.
    pub fn condition_on_first(&self, item: u8) -> Result<MallowsModel> {
        if self.n() <= 1 {
            return Err(Error::InvalidParameter(
                "cannot condition a single-item model".into(),
            ));
        }
        MallowsModel::new(self.central.without_item(item)?, self.phi)
    }

    /// Expected Kendall tau distance of a sample from the central order.
    pub fn expected_distance(&self) -> f64 {
        expected_kt_distance(self.n(), self.phi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::KahanSum;
    use crate::perm::Permutation;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(items: &[u8], phi: f64) -> MallowsModel {
        MallowsModel::new(Permutation::new(items.to_vec()).unwrap(), phi).unwrap()
    }

    #[test]
    fn z_values_match_known_case() {
        assert_abs_diff_eq!(z_single(1, 0.5), 1.0);
        assert_abs_diff_eq!(z_single(2, 0.5), 1.5);
        assert_abs_diff_eq!(z_single(3, 0.5), 1.75);
        assert_abs_diff_eq!(z_partition(3, 0.5), 2.625);
    }

    #[test]
    fn z_partition_matches_enumeration() {
        for n in 1..=6 {
            let id = Permutation::identity(n);
            // The 1e-12 bar is absolute; Z grows quickly with phi and n, so
            // scales near 1 would push the bar below representable precision.
            for &phi in &[0.2f64, 0.5, 0.8] {
                let mut total = KahanSum::new();
                for p in enumerate_permutations(n).unwrap() {
                    let d = kendall_tau(&p, &id).unwrap();
                    total.add(phi.powi(d as i32));
                }
                assert!(
                    (total.value() - z_partition(n, phi)).abs() < 1e-12,
                    "n = {n}, phi = {phi}"
                );
            }
        }
    }

    #[test]
    fn construction_rejects_bad_scales() {
        let id = Permutation::identity(3);
        assert!(MallowsModel::new(id.clone(), 0.0).is_err());
        assert!(MallowsModel::new(id.clone(), 1.0).is_err());
        assert!(MallowsModel::new(id.clone(), -0.5).is_err());
        assert!(MallowsModel::new(id.clone(), f64::NAN).is_err());
        // In-range values clamp to the documented bounds.
        let tiny = MallowsModel::new(id, 1e-12).unwrap();
        assert_eq!(tiny.phi(), PHI_MIN);
    }

    #[test]
    fn exact_distribution_sums_to_one() {
        let m = model(&[2, 0, 3, 1], 0.6);
        let mut total = KahanSum::new();
        for (_, p) in m.exact_distribution().unwrap() {
            total.add(p);
        }
        assert_abs_diff_eq!(total.value(), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn representative_vector_known_case() {
        // n = 3, phi = 0.5, central identity: (4/7, 2/7, 1/7).
        let m = model(&[0, 1, 2], 0.5);
        let x = m.representative_vector();
        assert_abs_diff_eq!(x[0], 0.5714285714285714, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 0.2857142857142857, epsilon = 1e-15);
        assert_abs_diff_eq!(x[2], 0.14285714285714285, epsilon = 1e-15);
    }

    #[test]
    fn representative_vector_matches_enumeration() {
        let m = model(&[3, 1, 0, 4, 2], 0.63);
        let x = m.representative_vector();
        let mut first = vec![0.0; 5];
        for (p, pr) in m.exact_distribution().unwrap() {
            first[p.item_at(0) as usize] += pr;
        }
        for e in 0..5 {
            assert_abs_diff_eq!(x[e], first[e], epsilon = 1e-12);
        }
        let sum: f64 = x.iter().sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sampler_matches_first_place_law() {
        // Pr[item at central rank j is first] = phi^j / z_n (0-based j).
        let m = model(&[0, 1, 2, 3, 4], 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 40_000usize;
        let mut counts = vec![0usize; 5];
        let mut buf = Vec::new();
        for _ in 0..draws {
            m.sample_into(&mut rng, &mut buf);
            counts[buf[0] as usize] += 1;
        }
        let z5 = z_single(5, 0.5);
        for j in 0..5 {
            let want = 0.5f64.powi(j as i32) / z5;
            let got = counts[j] as f64 / draws as f64;
            let sd = (want * (1.0 - want) / draws as f64).sqrt();
            assert!(
                (got - want).abs() < 5.0 * sd,
                "rank {j}: got {got}, want {want}"
            );
        }
    }

    #[test]
    fn sampler_distance_distribution_matches_model() {
        let m = model(&[1, 3, 0, 2], 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws = 30_000usize;
        let mut mean = 0.0;
        for _ in 0..draws {
            let s = m.sample(&mut rng);
            mean += kendall_tau(&s, m.central()).unwrap() as f64;
        }
        mean /= draws as f64;
        let want = m.expected_distance();
        assert!(
            (mean - want).abs() < 0.05,
            "mean distance {mean} vs expected {want}"
        );
    }

    #[test]
    fn position_table_matches_enumeration() {
        for &phi in &[0.3, 0.5, 0.85] {
            for n in 2..=5 {
                let table = position_probability_table(n, phi);
                let m = MallowsModel::new(Permutation::identity(n), phi).unwrap();
                let mut freq = vec![vec![0.0; n]; n];
                for (p, pr) in m.exact_distribution().unwrap() {
                    for (l, &e) in p.as_slice().iter().enumerate() {
                        freq[e as usize][l] += pr;
                    }
                }
                for i in 0..n {
                    for l in 0..n {
                        assert!(
                            (table[i][l] - freq[i][l]).abs() < 1e-12,
                            "n = {n}, phi = {phi}, entry ({i}, {l})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn position_table_is_exactly_symmetric_and_stochastic() {
        let table = position_probability_table(7, 0.42);
        for i in 0..7 {
            let row_sum: f64 = table[i].iter().sum();
            assert_abs_diff_eq!(row_sum, 1.0, epsilon = 1e-12);
            let col_sum: f64 = (0..7).map(|r| table[r][i]).sum();
            assert_abs_diff_eq!(col_sum, 1.0, epsilon = 1e-12);
            for l in 0..7 {
                assert_eq!(table[i][l].to_bits(), table[l][i].to_bits());
            }
        }
    }

    #[test]
    fn position_rows_are_unimodal_with_geometric_separation() {
        let n = 6;
        let phi = 0.5;
        let g = gain(n, phi);
        let table = position_probability_table(n, phi);
        for i in 0..n {
            let peak = (0..n)
                .max_by(|&a, &b| table[i][a].total_cmp(&table[i][b]))
                .unwrap();
            for l in 1..=peak {
                assert!(
                    table[i][l] >= table[i][l - 1] * (1.0 + g),
                    "row {i} rising side at {l}"
                );
            }
            for l in peak + 1..n {
                assert!(
                    table[i][l] * (1.0 + g) <= table[i][l - 1],
                    "row {i} falling side at {l}"
                );
            }
        }
    }

    #[test]
    fn gain_known_case() {
        assert_abs_diff_eq!(gain(3, 0.5), 1.0 / 12.0, epsilon = 1e-15);
    }

    #[test]
    fn expected_distance_known_and_enumerated() {
        // n = 2: phi / (1 + phi).
        assert_abs_diff_eq!(expected_kt_distance(2, 0.5), 1.0 / 3.0, epsilon = 1e-14);
        let m = model(&[0, 1, 2, 3, 4], 0.7);
        let mut want = 0.0;
        for (p, pr) in m.exact_distribution().unwrap() {
            want += pr * kendall_tau(&p, m.central()).unwrap() as f64;
        }
        assert_abs_diff_eq!(m.expected_distance(), want, epsilon = 1e-11);
    }

    #[test]
    fn expected_distance_is_increasing_in_phi() {
        let mut last = -1.0;
        for k in 1..100 {
            let phi = k as f64 / 100.0;
            let v = expected_kt_distance(8, phi);
            assert!(v > last);
            last = v;
        }
        // Approaches n(n-1)/4 as phi -> 1.
        assert!((expected_kt_distance(8, PHI_MAX) - 14.0).abs() < 0.01);
    }

    #[test]
    fn mean_distance_inversion_round_trips() {
        for &phi in &[0.05, 0.37, 0.8, 0.97] {
            let mean = expected_kt_distance(8, phi);
            assert!((phi_from_mean_distance(8, mean) - phi).abs() < 1e-9);
        }
        assert_eq!(phi_from_mean_distance(8, -1.0), PHI_MIN);
        assert_eq!(phi_from_mean_distance(8, 100.0), PHI_MAX);
    }

    #[test]
    fn conditioning_on_first_gives_reduced_model() {
        // Enumerate Pr[rest | item first] and compare to the reduced model.
        let m = model(&[2, 0, 3, 1, 4], 0.6);
        let item = 3u8; // central rank 2
        let reduced = m.condition_on_first(item).unwrap();
        assert_eq!(reduced.n(), 4);

        let mut conditional: Vec<(Vec<u8>, f64)> = Vec::new();
        let mut mass = 0.0;
        for (p, pr) in m.exact_distribution().unwrap() {
            if p.item_at(0) == item {
                // Map remaining items to the reduced id space.
                let rest: Vec<u8> = p.as_slice()[1..]
                    .iter()
                    .map(|&e| if e > item { e - 1 } else { e })
                    .collect();
                conditional.push((rest, pr));
                mass += pr;
            }
        }
        for (rest, pr) in conditional {
            let q = Permutation::new(rest).unwrap();
            let want = reduced.prob(&q).unwrap();
            assert_abs_diff_eq!(pr / mass, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn tv_bound_dominates_actual_tv() {
        let a = model(&[0, 1, 2, 3], 0.5);
        let b = model(&[0, 1, 2, 3], 0.52);
        let da = a.exact_distribution().unwrap();
        let db = b.exact_distribution().unwrap();
        let tv: f64 = da
            .iter()
            .zip(db.iter())
            .map(|((_, pa), (_, pb))| (pa - pb).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv <= tv_sensitivity_bound(4, 0.5, 0.52));
    }

    #[test]
    fn prob_checks_sizes() {
        let m = model(&[0, 1, 2], 0.5);
        let p4 = Permutation::identity(4);
        assert!(m.prob(&p4).is_err());
    }
}
