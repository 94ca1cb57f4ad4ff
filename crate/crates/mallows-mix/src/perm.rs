//! Permutations, Kendall tau distance, and inversion tables.
//!
//! Items are element ids `0..n`. A [`Permutation`] stores elements in rank
//! order: index 0 holds the item placed first (best). Files on disk use
//! 1-based ids; conversion happens at the I/O boundary, never here.

use crate::error::{Error, Result};
use rand::Rng;

/// Largest `n` for which exhaustive permutation enumeration is allowed.
pub const MAX_ENUMERATION_N: usize = 8;

/// Largest `n` for which inversion-table counting stays within `u128`.
pub const MAX_COUNTING_N: usize = 33;

/// A total order over the items `0..n`, stored best-first.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Permutation(Vec<u8>);

impl std::fmt::Debug for Permutation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Permutation{:?}", self.0)
    }
}

impl Permutation {
    /// Validates that `items` is a permutation of `0..items.len()`.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidPermutation`] on duplicates, out-of-range ids,
    /// an empty sequence, or more than 255 items.
    pub fn new(items: Vec<u8>) -> Result<Self> {
        let n = items.len();
        if n == 0 {
            return Err(Error::InvalidPermutation("empty sequence".into()));
        }
        if n > u8::MAX as usize {
            return Err(Error::InvalidPermutation(format!(
                "{n} items exceeds the supported maximum of 255"
            )));
        }
        let mut seen = vec![false; n];
        for &e in &items {
            if (e as usize) >= n {
                return Err(Error::InvalidPermutation(format!(
                    "item {e} out of range for n = {n}"
                )));
            }
            if seen[e as usize] {
                return Err(Error::InvalidPermutation(format!("item {e} repeated")));
            }
            seen[e as usize] = true;
        }
        Ok(Self(items))
    }

    /// The identity order `(0, 1, ..., n-1)`.
    pub fn identity(n: usize) -> Self {
        assert!(n >= 1 && n <= u8::MAX as usize, "n out of range");
        Self((0..n as u8).collect())
    }

    /// Builds from a slice already known to be valid (used on hot paths).
    pub(crate) fn from_trusted(items: Vec<u8>) -> Self {
        debug_assert!(Permutation::new(items.clone()).is_ok());
        Self(items)
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    /// The item at rank `r` (0-based; rank 0 is placed first).
    pub fn item_at(&self, r: usize) -> u8 {
        self.0[r]
    }

    /// Inverse view: `positions()[e]` is the 0-based rank of item `e`.
    pub fn positions(&self) -> Vec<u8> {
        let mut pos = vec![0u8; self.n()];
        for (r, &e) in self.0.iter().enumerate() {
            pos[e as usize] = r as u8;
        }
        pos
    }

    /// 1-based ids in rank order, for file formats.
    pub fn to_one_based(&self) -> Vec<usize> {
        self.0.iter().map(|&e| e as usize + 1).collect()
    }

    /// Parses 1-based ids in rank order.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidPermutation`] if any id is 0, any id exceeds
    /// the length, or the ids do not form a permutation.
    pub fn from_one_based(items: &[usize]) -> Result<Self> {
        let mut zero_based = Vec::with_capacity(items.len());
        for &e in items {
            if e == 0 || e > items.len() {
                return Err(Error::InvalidPermutation(format!(
                    "1-based id {e} out of range for n = {}",
                    items.len()
                )));
            }
            zero_based.push((e - 1) as u8);
        }
        Self::new(zero_based)
    }

    /// Removes one item, keeping the relative order of the rest.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidParameter`] if `item` is not present.
    pub fn without_item(&self, item: u8) -> Result<Permutation> {
        if (item as usize) >= self.n() {
            return Err(Error::InvalidParameter(format!(
                "item {item} not in permutation of size {}",
                self.n()
            )));
        }
        // Removing item `item` leaves ids with a gap; close it so the result
        // is again a permutation of 0..n-1. Ids above `item` shift down by 1.
        let reduced: Vec<u8> = self
            .0
            .iter()
            .filter(|&&e| e != item)
            .map(|&e| if e > item { e - 1 } else { e })
            .collect();
        Permutation::new(reduced)
    }
}

/// Kendall tau distance: the number of item pairs the two orders disagree on.
///
/// Runs the direct O(n^2) pair scan, which is exact and fast for the sizes
/// this crate targets.
///
/// # Errors
///
/// Returns [`Error::MismatchedLengths`] if the orders have different sizes.
pub fn kendall_tau(a: &Permutation, b: &Permutation) -> Result<u32> {
    if a.n() != b.n() {
        return Err(Error::MismatchedLengths {
            left: a.n(),
            right: b.n(),
        });
    }
    Ok(kendall_tau_slices(a.as_slice(), &b.positions()))
}

/// Distance between a raw rank-order slice and a precomputed position table.
///
/// `pos_b[e]` must give the rank of item `e` in the second order. Exposed for
/// hot loops that compare many samples against one reference order.
pub fn kendall_tau_slices(a: &[u8], pos_b: &[u8]) -> u32 {
    let n = a.len();
    let mut d = 0u32;
    for i in 0..n {
        let pi = pos_b[a[i] as usize];
        for j in (i + 1)..n {
            if pos_b[a[j] as usize] < pi {
                d += 1;
            }
        }
    }
    d
}

/// Maximum Kendall tau distance between two orders over `n` items.
pub fn max_distance(n: usize) -> u32 {
    (n * (n - 1) / 2) as u32
}

/// Inversion table of a permutation.
///
/// `code[i]` counts the items larger than `i` that are placed before `i`.
/// Entry `i` therefore ranges over `0..=n-1-i`, entry `n-1` is always 0, and
/// the entries sum to the Kendall tau distance from the identity order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InversionTable(Vec<u8>);

impl InversionTable {
    /// Validates the per-entry bounds `code[i] <= n-1-i`.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidParameter`] if any entry exceeds its bound.
    pub fn new(code: Vec<u8>) -> Result<Self> {
        let n = code.len();
        if n == 0 || n > u8::MAX as usize {
            return Err(Error::InvalidParameter(format!(
                "inversion table length {n} out of range"
            )));
        }
        for (i, &c) in code.iter().enumerate() {
            if (c as usize) > n - 1 - i {
                return Err(Error::InvalidParameter(format!(
                    "inversion entry {c} at index {i} exceeds bound {}",
                    n - 1 - i
                )));
            }
        }
        Ok(Self(code))
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    /// Sum of the entries; equals the distance of [`Self::decode`] from the
    /// identity order.
    pub fn sum(&self) -> u32 {
        self.0.iter().map(|&c| c as u32).sum()
    }

    /// Reads the inversion table off a permutation.
    pub fn from_permutation(p: &Permutation) -> Self {
        let n = p.n();
        let pos = p.positions();
        let mut code = vec![0u8; n];
        for i in 0..n {
            let pi = pos[i];
            let mut c = 0u8;
            for j in (i + 1)..n {
                if pos[j] < pi {
                    c += 1;
                }
            }
            code[i] = c;
        }
        Self(code)
    }

    /// Rebuilds the permutation: items are inserted from `n-1` down to `0`,
    /// item `i` at index `code[i]` of the list built so far.
    pub fn decode(&self) -> Permutation {
        let n = self.n();
        let mut items: Vec<u8> = Vec::with_capacity(n);
        for i in (0..n).rev() {
            items.insert(self.0[i] as usize, i as u8);
        }
        Permutation::from_trusted(items)
    }
}

/// Number of permutations of `n` items at Kendall tau distance exactly `d`
/// from a fixed order (the Mahonian triangle).
///
/// # Errors
///
/// Returns [`Error::CapacityExceeded`] for `n > 33`, where the counts can
/// overflow `u128`.
pub fn permutations_at_distance(n: usize, d: u32) -> Result<u128> {
    let table = mahonian_table(n)?;
    Ok(table
        .get(d as usize)
        .copied()
        .unwrap_or(0))
}

/// Row `n` of the Mahonian triangle: `out[d]` counts permutations at distance
/// `d` for `d = 0..=n(n-1)/2`.
fn mahonian_table(n: usize) -> Result<Vec<u128>> {
    if n == 0 || n > MAX_COUNTING_N {
        return Err(Error::CapacityExceeded {
            what: "inversion counting",
            limit: MAX_COUNTING_N,
            requested: n,
        });
    }
    // Convolve the uniform blocks [1]*1, [1]*2, ..., [1]*n via prefix sums.
    let mut row = vec![0u128; max_distance(n) as usize + 1];
    row[0] = 1;
    let mut filled = 0usize; // max distance representable so far
    for m in 2..=n {
        let cap = m - 1; // new entry ranges 0..=m-1
        let new_filled = filled + cap;
        let mut next = vec![0u128; new_filled + 1];
        // next[d] = sum_{c=0..=min(cap, d)} row[d - c]
        let mut window: u128 = 0;
        for d in 0..=new_filled {
            if d <= filled {
                window += row[d];
            }
            if d > cap {
                window -= row[d - cap - 1];
            }
            next[d] = window;
        }
        row = next;
        filled = new_filled;
    }
    let mut out = vec![0u128; max_distance(n) as usize + 1];
    out[..=filled].copy_from_slice(&row[..=filled]);
    Ok(out)
}

/// Draws a permutation uniformly at random among those at Kendall tau
/// distance exactly `d` from the identity order.
///
/// Works by sampling an inversion table with entry bounds `n-1-i` and total
/// `d`, each table weighted equally, then decoding it.
///
/// # Errors
///
/// Returns [`Error::InvalidParameter`] if `d > n(n-1)/2` and
/// [`Error::CapacityExceeded`] for `n > 33`.
pub fn random_permutation_at_distance<R: Rng + ?Sized>(
    n: usize,
    d: u32,
    rng: &mut R,
) -> Result<Permutation> {
    if d > max_distance(n) {
        return Err(Error::InvalidParameter(format!(
            "distance {d} exceeds maximum {} for n = {n}",
            max_distance(n)
        )));
    }
    // rows[m] counts inversion tables of a suffix of m items by total.
    let mut rows: Vec<Vec<u128>> = Vec::with_capacity(n + 1);
    for m in 0..=n {
        rows.push(mahonian_table(m.max(1))?);
    }
    let mut code = vec![0u8; n];
    let mut remaining = d as usize;
    for i in 0..n {
        let m = n - i; // items left, current entry bound m-1
        if m == 1 {
            debug_assert_eq!(remaining, 0);
            break;
        }
        let sub = &rows[m - 1];
        let cap = (m - 1).min(remaining);
        let total: u128 = (0..=cap)
            .map(|c| sub.get(remaining - c).copied().unwrap_or(0))
            .sum();
        debug_assert!(total > 0, "no inversion table completes this total");
        let mut ticket = rng.random_range(0..total);
        let mut chosen = cap;
        for c in 0..=cap {
            let count = sub.get(remaining - c).copied().unwrap_or(0);
            if ticket < count {
                chosen = c;
                break;
            }
            ticket -= count;
        }
        code[i] = chosen as u8;
        remaining -= chosen;
    }
    Ok(InversionTable::new(code)?.decode())
}

/// All permutations of `n` items in lexicographic order.
///
/// # Errors
///
/// Returns [`Error::CapacityExceeded`] for `n > 8`; beyond that the list no
/// longer fits comfortably in memory and callers should not be enumerating.
pub fn enumerate_permutations(n: usize) -> Result<Vec<Permutation>> {
    if n == 0 || n > MAX_ENUMERATION_N {
        return Err(Error::CapacityExceeded {
            what: "permutation enumeration",
            limit: MAX_ENUMERATION_N,
            requested: n,
        });
    }
    let mut out = Vec::new();
    let mut current = (0..n as u8).collect::<Vec<_>>();
    loop {
        out.push(Permutation::from_trusted(current.clone()));
        // Next lexicographic permutation, or stop after the last one.
        let Some(i) = (0..n - 1).rev().find(|&i| current[i] < current[i + 1]) else {
            break;
        };
        let j = (i + 1..n).rev().find(|&j| current[j] > current[i]).unwrap();
        current.swap(i, j);
        current[i + 1..].reverse();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_malformed_sequences() {
        assert!(Permutation::new(vec![]).is_err());
        assert!(Permutation::new(vec![0, 0]).is_err());
        assert!(Permutation::new(vec![0, 2]).is_err());
        assert!(Permutation::new(vec![1, 2, 3]).is_err()); // ids must be 0-based
        assert!(Permutation::new(vec![2, 0, 1]).is_ok());
    }

    #[test]
    fn one_based_round_trip() {
        let p = Permutation::from_one_based(&[2, 3, 1]).unwrap();
        assert_eq!(p.as_slice(), &[1, 2, 0]);
        assert_eq!(p.to_one_based(), vec![2, 3, 1]);
        assert!(Permutation::from_one_based(&[0, 1, 2]).is_err());
        assert!(Permutation::from_one_based(&[1, 2, 4]).is_err());
    }

    #[test]
    fn kendall_tau_counts_discordant_pairs() {
        let a = Permutation::new(vec![0, 1, 2]).unwrap();
        let b = Permutation::new(vec![1, 2, 0]).unwrap();
        assert_eq!(kendall_tau(&a, &b).unwrap(), 2);
        assert_eq!(kendall_tau(&b, &a).unwrap(), 2);
        assert_eq!(kendall_tau(&a, &a).unwrap(), 0);

        let rev = Permutation::new(vec![2, 1, 0]).unwrap();
        assert_eq!(kendall_tau(&a, &rev).unwrap(), max_distance(3));

        let short = Permutation::identity(2);
        assert!(matches!(
            kendall_tau(&a, &short),
            Err(Error::MismatchedLengths { left: 3, right: 2 })
        ));
    }

    #[test]
    fn inversion_code_decodes_to_expected_order() {
        let code = InversionTable::new(vec![2, 0, 0]).unwrap();
        let p = code.decode();
        assert_eq!(p.as_slice(), &[1, 2, 0]);
        assert_eq!(code.sum(), 2);
        assert_eq!(
            kendall_tau(&p, &Permutation::identity(3)).unwrap(),
            code.sum()
        );
    }

    #[test]
    fn inversion_entry_bounds_are_enforced() {
        assert!(InversionTable::new(vec![3, 0, 0]).is_err());
        assert!(InversionTable::new(vec![2, 1, 1]).is_err()); // last entry must be 0
        assert!(InversionTable::new(vec![2, 1, 0]).is_ok());
    }

    #[test]
    fn inversion_round_trip_all_of_n4() {
        for p in enumerate_permutations(4).unwrap() {
            let code = InversionTable::from_permutation(&p);
            assert_eq!(code.decode(), p, "code {:?}", code.as_slice());
            assert_eq!(
                code.sum(),
                kendall_tau(&p, &Permutation::identity(4)).unwrap()
            );
        }
    }

    #[test]
    fn mahonian_counts_match_enumeration() {
        for n in 1..=6 {
            let perms = enumerate_permutations(n).unwrap();
            let id = Permutation::identity(n);
            let mut freq = vec![0u128; max_distance(n) as usize + 1];
            for p in &perms {
                freq[kendall_tau(p, &id).unwrap() as usize] += 1;
            }
            for (d, &want) in freq.iter().enumerate() {
                assert_eq!(
                    permutations_at_distance(n, d as u32).unwrap(),
                    want,
                    "n = {n}, d = {d}"
                );
            }
        }
    }

    #[test]
    fn mahonian_rejects_oversized_n() {
        assert!(matches!(
            permutations_at_distance(34, 1),
            Err(Error::CapacityExceeded { .. })
        ));
        // The guard boundary itself must work.
        assert!(permutations_at_distance(33, 264).unwrap() > 0);
    }

    #[test]
    fn random_distance_draws_hit_the_target_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let id = Permutation::identity(10);
        for &d in &[0u32, 2, 8, 16, 30, 45] {
            for _ in 0..20 {
                let p = random_permutation_at_distance(10, d, &mut rng).unwrap();
                assert_eq!(kendall_tau(&p, &id).unwrap(), d);
            }
        }
        assert!(random_permutation_at_distance(10, 46, &mut rng).is_err());
    }

    #[test]
    fn random_distance_draws_are_uniform_over_the_fiber() {
        // n = 4, d = 3 has 6 permutations; check rough uniformity.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let id = Permutation::identity(4);
        let fiber: Vec<Permutation> = enumerate_permutations(4)
            .unwrap()
            .into_iter()
            .filter(|p| kendall_tau(p, &id).unwrap() == 3)
            .collect();
        assert_eq!(fiber.len(), 6);
        let mut counts = vec![0usize; fiber.len()];
        let draws = 12_000;
        for _ in 0..draws {
            let p = random_permutation_at_distance(4, 3, &mut rng).unwrap();
            let k = fiber.iter().position(|q| *q == p).unwrap();
            counts[k] += 1;
        }
        let expected = draws as f64 / fiber.len() as f64;
        for (k, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - expected).abs() < 5.0 * expected.sqrt(),
                "cell {k}: {c} vs {expected}"
            );
        }
    }

    #[test]
    fn enumeration_is_complete_and_deduplicated() {
        let perms = enumerate_permutations(5).unwrap();
        assert_eq!(perms.len(), 120);
        let mut seen = std::collections::HashSet::new();
        for p in &perms {
            assert!(seen.insert(p.as_slice().to_vec()));
        }
        assert!(enumerate_permutations(9).is_err());
    }

    #[test]
    fn without_item_keeps_relative_order() {
        let p = Permutation::new(vec![3, 0, 2, 1]).unwrap();
        let q = p.without_item(2).unwrap();
        // 3 -> 2, 0 -> 0, 1 -> 1 after closing the gap.
        assert_eq!(q.as_slice(), &[2, 0, 1]);
        assert!(p.without_item(9).is_err());
    }
}
