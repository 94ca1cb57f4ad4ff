//! Top-set moment statistics.
//!
//! For a mixture over items `0..n`, the statistics collected here are the
//! probabilities that given item sets occupy the leading positions in any
//! internal order:
//!
//! - `P_i`: item `i` is ranked first,
//! - `P_ij`: items `{i, j}` hold the first two positions (`i != j`),
//! - `P_ijk`: items `{i, j, k}` hold the first three positions.
//!
//! For a single Mallows model with representative vector `x` these factor as
//! `P_i = x_i`, `P_ij = c2 x_i x_j`, `P_ijk = c3 x_i x_j x_k`, where `c2`,
//! `c3` depend only on `(n, phi)`. A two-component mixture is the weighted
//! sum of two such expressions, which is what the tensor stage decomposes.
//!
//! Sampled tallies are integer counters divided exactly once at the end, so
//! partial tallies merge without changing the result bit for bit.

use crate::error::{Error, Result};
use crate::mallows::z_single;
use crate::mixture::MallowsMixture;
use std::io::{Read, Write};
use std::path::Path;

/// Second-order moment constant: `P_ij = c2(n, phi) x_i x_j` for a single
/// model. Equals `(z_n / z_{n-1}) (1 + phi) / phi`.
pub fn c2(n: usize, phi: f64) -> f64 {
    z_single(n, phi) / z_single(n - 1, phi) * (1.0 + phi) / phi
}

/// Third-order moment constant: `P_ijk = c3(n, phi) x_i x_j x_k` for a
/// single model. Equals
/// `(z_n^2 / (z_{n-1} z_{n-2})) (1 + 2 phi + 2 phi^2 + phi^3) / phi^3`.
pub fn c3(n: usize, phi: f64) -> f64 {
    let zn = z_single(n, phi);
    zn * zn / (z_single(n - 1, phi) * z_single(n - 2, phi))
        * (1.0 + 2.0 * phi + 2.0 * phi * phi + phi * phi * phi)
        / (phi * phi * phi)
}

pub fn pair_count(n: usize) -> usize {
    n * (n - 1) / 2
}

pub fn triple_count(n: usize) -> usize {
    n * (n - 1) * (n - 2) / 6
}

/// Flat index of the unordered pair `i < j` in lexicographic order.
fn pair_idx(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Flat index of the unordered triple `i < j < k` in lexicographic order.
fn triple_idx(n: usize, i: usize, j: usize, k: usize) -> usize {
    debug_assert!(i < j && j < k && k < n);
    // Triples starting below i, then pairs (j, k) within the tail alphabet.
    let mut base = 0;
    for a in 0..i {
        let m = n - 1 - a;
        base += m * (m - 1) / 2;
    }
    let m = n - i - 1;
    base + pair_idx(m, j - i - 1, k - i - 1)
}

/// Integer tallies of top-1/2/3 item sets over a sample block.
///
/// Merge order never affects the finalized statistics: counters are exact
/// and the division happens once.
#[derive(Clone, Debug)]
pub struct MomentTallies {
    n: usize,
    count: u64,
    first: Vec<u64>,
    pair: Vec<u64>,
    triple: Vec<u64>,
}

impl MomentTallies {
    /// # Errors
    ///
    /// Returns [`Error::InvalidParameter`] for `n < 3`: third-order tallies
    /// need at least three items.
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParameter(format!(
                "moment tallies need n >= 3, got {n}"
            )));
        }
        Ok(Self {
            n,
            count: 0,
            first: vec![0; n],
            pair: vec![0; pair_count(n)],
            triple: vec![0; triple_count(n)],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Records one ranked sample (best-first item ids).
    pub fn record(&mut self, sample: &[u8]) {
        debug_assert_eq!(sample.len(), self.n);
        let (a, b, c) = (
            sample[0] as usize,
            sample[1] as usize,
            sample[2] as usize,
        );
        self.count += 1;
        self.first[a] += 1;
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.pair[pair_idx(self.n, lo, hi)] += 1;
        let (mut x, mut y, mut z) = (lo, hi, c);
        if z < y {
            std::mem::swap(&mut y, &mut z);
        }
        if y < x {
            std::mem::swap(&mut x, &mut y);
        }
        self.triple[triple_idx(self.n, x, y, z)] += 1;
    }

    /// Adds another block of tallies.
    ///
    /// # Errors
    ///
    /// Returns [`Error::MismatchedLengths`] if the item counts differ.
    pub fn merge(&mut self, other: &MomentTallies) -> Result<()> {
        if self.n != other.n {
            return Err(Error::MismatchedLengths {
                left: self.n,
                right: other.n,
            });
        }
        self.count += other.count;
        for (a, b) in self.first.iter_mut().zip(&other.first) {
            *a += b;
        }
        for (a, b) in self.pair.iter_mut().zip(&other.pair) {
            *a += b;
        }
        for (a, b) in self.triple.iter_mut().zip(&other.triple) {
            *a += b;
        }
        Ok(())
    }

    /// Divides by the sample count, once.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InsufficientSamples`] if nothing was recorded.
    pub fn finalize(&self) -> Result<MomentStats> {
        if self.count == 0 {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        let inv = 1.0 / self.count as f64;
        Ok(MomentStats {
            n: self.n,
            count: Some(self.count),
            p1: self.first.iter().map(|&c| c as f64 * inv).collect(),
            p2: self.pair.iter().map(|&c| c as f64 * inv).collect(),
            p3: self.triple.iter().map(|&c| c as f64 * inv).collect(),
        })
    }
}

/// Top-set moments as probabilities, from samples or closed form.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentStats {
    n: usize,
    /// Sample count behind the estimates; `None` for exact statistics.
    count: Option<u64>,
    p1: Vec<f64>,
    p2: Vec<f64>,
    p3: Vec<f64>,
}

impl MomentStats {
    /// Exact moments of a mixture via the factored closed forms.
    pub fn closed_form(mix: &MallowsMixture) -> MomentStats {
        let n = mix.n();
        assert!(n >= 3, "moment statistics need n >= 3");
        let x = mix.comp1().representative_vector();
        let y = mix.comp2().representative_vector();
        let (w1, w2) = (mix.w1(), mix.w2());
        let (c2a, c2b) = (c2(n, mix.comp1().phi()), c2(n, mix.comp2().phi()));
        let (c3a, c3b) = (c3(n, mix.comp1().phi()), c3(n, mix.comp2().phi()));

        let p1 = (0..n).map(|i| w1 * x[i] + w2 * y[i]).collect();
        let mut p2 = Vec::with_capacity(pair_count(n));
        for i in 0..n {
            for j in i + 1..n {
                p2.push(w1 * c2a * x[i] * x[j] + w2 * c2b * y[i] * y[j]);
            }
        }
        let mut p3 = Vec::with_capacity(triple_count(n));
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    p3.push(
                        w1 * c3a * x[i] * x[j] * x[k] + w2 * c3b * y[i] * y[j] * y[k],
                    );
                }
            }
        }
        MomentStats {
            n,
            count: None,
            p1,
            p2,
            p3,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Samples behind the estimate; `None` when exact.
    pub fn count(&self) -> Option<u64> {
        self.count
    }

    /// `P_i`.
    pub fn p1(&self, i: usize) -> f64 {
        self.p1[i]
    }

    pub fn first_moments(&self) -> &[f64] {
        &self.p1
    }

    /// `P_ij` in either argument order; exactly 0 on the diagonal, since two
    /// positions cannot hold the same item.
    pub fn p2(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        self.p2[pair_idx(self.n, lo, hi)]
    }

    /// `P_ijk` in any argument order; exactly 0 if any two indices collide.
    pub fn p3(&self, i: usize, j: usize, k: usize) -> f64 {
        if i == j || j == k || i == k {
            return 0.0;
        }
        let (mut x, mut y, mut z) = (i, j, k);
        if y > z {
            std::mem::swap(&mut y, &mut z);
        }
        if x > y {
            std::mem::swap(&mut x, &mut y);
        }
        if y > z {
            std::mem::swap(&mut y, &mut z);
        }
        self.p3[triple_idx(self.n, x, y, z)]
    }

    /// Checks the three completeness identities: `sum_i P_i = 1`,
    /// `sum_{i<j} P_ij = 1`, `sum_{i<j<k} P_ijk = 1`.
    ///
    /// # Errors
    ///
    /// Returns [`Error::EstimationFailed`] naming the first identity whose
    /// deviation exceeds `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        for (name, vec) in [("P_i", &self.p1), ("P_ij", &self.p2), ("P_ijk", &self.p3)] {
            let sum: f64 = vec.iter().sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::EstimationFailed(format!(
                    "{name} sums to {sum}, expected 1 within {tol}"
                )));
            }
        }
        Ok(())
    }

    const CACHE_MAGIC: &'static [u8; 8] = b"MMIXMST1";

    /// Writes the statistics as a little-endian binary cache.
    ///
    /// # Errors
    ///
    /// Returns [`Error::Io`] on write failure.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(
            8 + 4 + 9 + 8 * (self.p1.len() + self.p2.len() + self.p3.len()),
        );
        buf.extend_from_slice(Self::CACHE_MAGIC);
        buf.extend_from_slice(&(self.n as u32).to_le_bytes());
        buf.push(self.count.is_some() as u8);
        buf.extend_from_slice(&self.count.unwrap_or(0).to_le_bytes());
        for vec in [&self.p1, &self.p2, &self.p3] {
            for &v in vec.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(&buf)?;
        Ok(())
    }

    /// Reads a binary cache written by [`Self::save`].
    ///
    /// # Errors
    ///
    /// Returns [`Error::CacheFormat`] on a bad magic number or truncated
    /// payload, [`Error::Io`] on read failure.
    pub fn load(path: &Path) -> Result<MomentStats> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        if buf.len() < 21 || &buf[..8] != Self::CACHE_MAGIC {
            return Err(Error::CacheFormat(
                "missing or unrecognized magic header".into(),
            ));
        }
        let n = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
        if n < 3 {
            return Err(Error::CacheFormat(format!("stored n = {n} is invalid")));
        }
        let has_count = buf[12] != 0;
        let count = u64::from_le_bytes(buf[13..21].try_into().unwrap());
        let lens = [n, pair_count(n), triple_count(n)];
        let expected = 21 + 8 * lens.iter().sum::<usize>();
        if buf.len() != expected {
            return Err(Error::CacheFormat(format!(
                "payload is {} bytes, expected {expected} for n = {n}",
                buf.len()
            )));
        }
        let mut offset = 21;
        let mut read_vec = |len: usize| -> Vec<f64> {
            let mut v = Vec::with_capacity(len);
            for _ in 0..len {
                v.push(f64::from_le_bytes(
                    buf[offset..offset + 8].try_into().unwrap(),
                ));
                offset += 8;
            }
            v
        };
        let p1 = read_vec(lens[0]);
        let p2 = read_vec(lens[1]);
        let p3 = read_vec(lens[2]);
        Ok(MomentStats {
            n,
            count: has_count.then_some(count),
            p1,
            p2,
            p3,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mallows::MallowsModel;
    use crate::perm::Permutation;
    use approx::assert_abs_diff_eq;

    fn mix(w1: f64, c1: (&[u8], f64), c2: (&[u8], f64)) -> MallowsMixture {
        MallowsMixture::new(
            w1,
            MallowsModel::new(Permutation::new(c1.0.to_vec()).unwrap(), c1.1).unwrap(),
            MallowsModel::new(Permutation::new(c2.0.to_vec()).unwrap(), c2.1).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn moment_constants_known_cases() {
        assert_abs_diff_eq!(c2(3, 0.5), 3.5, epsilon = 1e-14);
        assert_abs_diff_eq!(c3(3, 0.5), 42.875, epsilon = 1e-12);
    }

    #[test]
    fn moment_constant_bounds_hold_on_a_grid() {
        for n in 3..=12 {
            for k in 1..=99 {
                let phi = k as f64 / 100.0;
                let v2 = c2(n, phi);
                let v3 = c3(n, phi);
                assert!(v2 >= 1.0 && v2 <= 3.0 / phi, "c2({n}, {phi}) = {v2}");
                assert!(
                    v3 >= 1.0 && v3 <= 50.0 / (phi * phi * phi),
                    "c3({n}, {phi}) = {v3}"
                );
            }
        }
    }

    #[test]
    fn flat_indices_enumerate_without_collision() {
        let n = 7;
        let mut seen_pairs = vec![false; pair_count(n)];
        for i in 0..n {
            for j in i + 1..n {
                let idx = pair_idx(n, i, j);
                assert!(!seen_pairs[idx]);
                seen_pairs[idx] = true;
            }
        }
        let mut seen_triples = vec![false; triple_count(n)];
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let idx = triple_idx(n, i, j, k);
                    assert!(!seen_triples[idx]);
                    seen_triples[idx] = true;
                }
            }
        }
        assert!(seen_pairs.iter().all(|&s| s));
        assert!(seen_triples.iter().all(|&s| s));
    }

    #[test]
    fn closed_form_matches_enumerated_top_set_marginals() {
        let m = mix(0.35, (&[2, 0, 3, 1, 4], 0.45), (&[4, 1, 0, 2, 3], 0.8));
        let stats = MomentStats::closed_form(&m);
        let n = m.n();

        let mut p1 = vec![0.0; n];
        let mut p2 = vec![vec![0.0; n]; n];
        let mut p3 = std::collections::BTreeMap::new();
        for (p, pr) in m.exact_distribution().unwrap() {
            let s = p.as_slice();
            p1[s[0] as usize] += pr;
            let (a, b) = (s[0] as usize, s[1] as usize);
            p2[a.min(b)][a.max(b)] += pr;
            let mut t = [s[0] as usize, s[1] as usize, s[2] as usize];
            t.sort_unstable();
            *p3.entry(t).or_insert(0.0) += pr;
        }
        for i in 0..n {
            assert_abs_diff_eq!(stats.p1(i), p1[i], epsilon = 1e-12);
            for j in i + 1..n {
                assert_abs_diff_eq!(stats.p2(i, j), p2[i][j], epsilon = 1e-12);
                assert_abs_diff_eq!(stats.p2(j, i), p2[i][j], epsilon = 1e-12);
                for k in j + 1..n {
                    assert_abs_diff_eq!(
                        stats.p3(i, j, k),
                        p3[&[i, j, k]],
                        epsilon = 1e-12
                    );
                }
            }
        }
        stats.validate(1e-10).unwrap();
    }

    #[test]
    fn diagonal_entries_are_exact_zeros() {
        let m = mix(0.5, (&[0, 1, 2, 3], 0.5), (&[1, 0, 2, 3], 0.5));
        let stats = MomentStats::closed_form(&m);
        assert_eq!(stats.p2(1, 1), 0.0);
        assert_eq!(stats.p3(0, 1, 1), 0.0);
        assert_eq!(stats.p3(2, 2, 2), 0.0);
    }

    #[test]
    fn tallies_count_and_normalize() {
        let mut t = MomentTallies::new(4).unwrap();
        t.record(&[2, 0, 1, 3]);
        t.record(&[2, 0, 3, 1]);
        t.record(&[1, 3, 0, 2]);
        t.record(&[0, 2, 1, 3]);
        let stats = t.finalize().unwrap();
        assert_eq!(stats.count(), Some(4));
        assert_abs_diff_eq!(stats.p1(2), 0.5);
        assert_abs_diff_eq!(stats.p2(0, 2), 0.75);
        assert_abs_diff_eq!(stats.p3(0, 1, 2), 0.5);
        assert_abs_diff_eq!(stats.p3(1, 2, 3), 0.0);
        stats.validate(1e-12).unwrap();
    }

    #[test]
    fn merged_tallies_are_bit_identical_to_whole() {
        use rand::SeedableRng;
        let m = mix(0.4, (&[0, 1, 2, 3, 4], 0.6), (&[4, 3, 2, 1, 0], 0.3));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<Vec<u8>> = (0..2000)
            .map(|_| {
                let mut b = Vec::new();
                m.sample_into(&mut rng, &mut b);
                b
            })
            .collect();

        let mut whole = MomentTallies::new(5).unwrap();
        for s in &samples {
            whole.record(s);
        }
        let mut left = MomentTallies::new(5).unwrap();
        let mut right = MomentTallies::new(5).unwrap();
        for (k, s) in samples.iter().enumerate() {
            if k % 3 == 0 {
                left.record(s);
            } else {
                right.record(s);
            }
        }
        left.merge(&right).unwrap();

        let a = whole.finalize().unwrap();
        let b = left.finalize().unwrap();
        for i in 0..5 {
            assert_eq!(a.p1(i).to_bits(), b.p1(i).to_bits());
            for j in i + 1..5 {
                assert_eq!(a.p2(i, j).to_bits(), b.p2(i, j).to_bits());
            }
        }
    }

    #[test]
    fn tally_guards() {
        assert!(MomentTallies::new(2).is_err());
        let t = MomentTallies::new(3).unwrap();
        assert!(matches!(
            t.finalize(),
            Err(Error::InsufficientSamples { .. })
        ));
        let mut a = MomentTallies::new(3).unwrap();
        let b = MomentTallies::new(4).unwrap();
        assert!(a.merge(&b).is_err());
    }

    #[test]
    fn cache_round_trips_and_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("moments.bin");
        let m = mix(0.55, (&[3, 1, 2, 0], 0.25), (&[0, 1, 3, 2], 0.6));
        let stats = MomentStats::closed_form(&m);
        stats.save(&path).unwrap();
        let loaded = MomentStats::load(&path).unwrap();
        assert_eq!(stats, loaded);
        assert_eq!(loaded.count(), None);

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            MomentStats::load(&path),
            Err(Error::CacheFormat(_))
        ));

        bytes[0] ^= 0xff; // restore magic, truncate payload
        bytes.pop();
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            MomentStats::load(&path),
            Err(Error::CacheFormat(_))
        ));
    }
}
