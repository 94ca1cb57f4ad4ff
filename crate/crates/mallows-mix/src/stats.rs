//! Sample statistics behind a common interface for sampled and exact modes.
//!
//! The learner never touches raw rankings. It asks a [`Stats`] value for
//! moment estimates, position frequencies, conditionals, and derived sample
//! sets (items removed, artificial items prepended). Backing those queries
//! with recorded samples gives the production path; backing them with
//! closed-form quantities of a known mixture gives an exact mode in which
//! every estimate carries zero sampling noise. The exact mode is what lets
//! tests separate statistical error from algorithmic error.
//!
//! Sampled queries draw on three disjoint sample blocks, fixed when the
//! statistics are built: 40% for moments, 40% for conditionals, 20% for
//! position frequencies. Derived estimates then never reuse samples across
//! pipeline stages, so downstream noise stays independent of upstream
//! decisions.

use crate::error::{Error, Result};
use crate::mallows::{z_single, MallowsModel};
use crate::mixture::MallowsMixture;
use crate::moments::{MomentStats, MomentTallies};
use crate::perm::{enumerate_permutations, Permutation, MAX_ENUMERATION_N};
use rand::Rng;
use std::ops::Range;
use std::sync::Arc;

/// Fraction of samples reserved for moment estimation.
const MOMENT_SPLIT: f64 = 0.4;
/// Fraction reserved for conditional (pivot) estimation.
const CONDITIONAL_SPLIT: f64 = 0.4;

/// Ranking statistics, either empirical or exact.
#[derive(Clone, Debug)]
pub enum Stats {
    Sampled(SampleStats),
    Exact(ExactStats),
}

/// A flat, shareable block of ranked samples split into three blocks.
#[derive(Clone, Debug)]
pub struct SampleStats {
    n: usize,
    count: usize,
    /// `count` rows of `n` item ids each, best first.
    buf: Arc<Vec<u8>>,
    /// Row index ranges: `[moments, conditionals, positions]`.
    ranges: [Range<usize>; 3],
}

/// Closed-form statistics of a known mixture.
#[derive(Clone, Debug)]
pub struct ExactStats {
    mixture: MallowsMixture,
}

impl Stats {
    /// Wraps a flat buffer of `count = buf.len() / n` rankings (each row
    /// `n` item ids, best first).
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidPermutation`] if the buffer length is not a
    /// multiple of `n` or any row is not a permutation of `0..n`, and
    /// [`Error::InsufficientSamples`] for fewer than 3 rows (each sample
    /// block must be nonempty).
    pub fn from_flat(n: usize, buf: Vec<u8>) -> Result<Stats> {
        if n == 0 || n > u8::MAX as usize + 1 {
            return Err(Error::InvalidPermutation(format!(
                "unsupported item count {n}"
            )));
        }
        if buf.len() % n != 0 {
            return Err(Error::InvalidPermutation(format!(
                "buffer of {} bytes is not a whole number of {n}-item rows",
                buf.len()
            )));
        }
        let count = buf.len() / n;
        if count < 3 {
            return Err(Error::InsufficientSamples { needed: 3, got: count as u64 });
        }
        let mut seen = vec![false; n];
        for row in buf.chunks_exact(n) {
            seen.iter_mut().for_each(|s| *s = false);
            for &e in row {
                if (e as usize) >= n || seen[e as usize] {
                    return Err(Error::InvalidPermutation(format!(
                        "row is not a permutation of 0..{n}"
                    )));
                }
                seen[e as usize] = true;
            }
        }
        Ok(Stats::Sampled(SampleStats::new(n, count, Arc::new(buf))))
    }

    /// Collects parsed rankings into sampled statistics.
    ///
    /// # Errors
    ///
    /// Returns [`Error::MismatchedLengths`] if the rankings disagree on item
    /// count and [`Error::InsufficientSamples`] for fewer than 3 rankings.
    pub fn from_permutations(perms: &[Permutation]) -> Result<Stats> {
        let Some(first) = perms.first() else {
            return Err(Error::InsufficientSamples { needed: 3, got: 0 });
        };
        let n = first.n();
        let mut buf = Vec::with_capacity(perms.len() * n);
        for p in perms {
            if p.n() != n {
                return Err(Error::MismatchedLengths { left: n, right: p.n() });
            }
            buf.extend_from_slice(p.as_slice());
        }
        Stats::from_flat(n, buf)
    }

    /// Exact statistics of a known mixture.
    pub fn exact(mixture: MallowsMixture) -> Stats {
        Stats::Exact(ExactStats { mixture })
    }

    pub fn n(&self) -> usize {
        match self {
            Stats::Sampled(s) => s.n,
            Stats::Exact(e) => e.mixture.n(),
        }
    }

    /// Total recorded samples; `None` in exact mode.
    pub fn sample_count(&self) -> Option<u64> {
        match self {
            Stats::Sampled(s) => Some(s.count as u64),
            Stats::Exact(_) => None,
        }
    }

    /// Expected scale of entrywise noise in the moment estimates,
    /// `3 sqrt(ln n / N)` with `N` the moment-block sample count. Exact
    /// statistics carry no noise and report 0.
    pub fn eps_s(&self) -> f64 {
        match self {
            Stats::Sampled(s) => {
                let nm = s.ranges[0].len().max(1) as f64;
                3.0 * ((s.n as f64).ln() / nm).sqrt()
            }
            Stats::Exact(_) => 0.0,
        }
    }

    /// First, second, and third top-set moments (moment block).
    ///
    /// # Errors
    ///
    /// Returns an error for fewer than 3 items, which the moment tensors
    /// cannot support.
    pub fn moments(&self) -> Result<MomentStats> {
        match self {
            Stats::Sampled(s) => {
                let mut tallies = MomentTallies::new(s.n)?;
                for idx in s.ranges[0].clone() {
                    tallies.record(s.row(idx));
                }
                tallies.finalize()
            }
            Stats::Exact(e) => {
                if e.mixture.n() < 3 {
                    return Err(Error::InvalidParameter(
                        "moment tensors need at least 3 items".into(),
                    ));
                }
                Ok(MomentStats::closed_form(&e.mixture))
            }
        }
    }

    /// `table[item][pos]`: probability that `item` lands at `pos`
    /// (position block).
    pub fn position_freq(&self) -> Vec<Vec<f64>> {
        match self {
            Stats::Sampled(s) => s.position_freq_masked(&vec![false; s.n]),
            Stats::Exact(e) => e.mixture.position_probabilities(),
        }
    }

    /// Position frequencies of the rankings with masked items deleted,
    /// indexed by the reduced ids (kept items in ascending original order).
    /// Reads the position block.
    pub fn projected_position_freq(&self, removed: &[bool]) -> Result<Vec<Vec<f64>>> {
        self.check_mask(removed)?;
        match self {
            Stats::Sampled(s) => Ok(s.position_freq_masked(removed)),
            Stats::Exact(e) => Ok(e.project(removed)?.mixture.position_probabilities()),
        }
    }

    /// First-place frequencies with masked items deleted, indexed by the
    /// reduced ids. Reads the moment block (this is the projected first
    /// moment, the quantity the degenerate pipeline tracks).
    pub fn projected_first_moments(&self, removed: &[bool]) -> Result<Vec<f64>> {
        self.check_mask(removed)?;
        match self {
            Stats::Sampled(s) => {
                let map = reduced_id_map(removed);
                let kept = s.n - removed.iter().filter(|&&r| r).count();
                let mut counts = vec![0u64; kept];
                for idx in s.ranges[0].clone() {
                    let row = s.row(idx);
                    for &e in row {
                        if !removed[e as usize] {
                            counts[map[e as usize]] += 1;
                            break;
                        }
                    }
                }
                let total = s.ranges[0].len().max(1) as f64;
                Ok(counts.into_iter().map(|c| c as f64 / total).collect())
            }
            Stats::Exact(e) => Ok(e.project(removed)?.mixture.first_place_probabilities()),
        }
    }

    /// Position frequencies of the remaining items among samples whose top
    /// item is `pivot`, in reduced ids, along with the conditioned sample
    /// count (`None` in exact mode). Reads the conditional block.
    ///
    /// In exact mode the conditional is derived by enumeration for small
    /// item counts and by the conditioning identity (posterior component
    /// weights times conditioned component tables) beyond enumeration
    /// range; the two agree wherever both apply.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidParameter`] if `pivot` is out of range.
    pub fn conditional_position_freq(
        &self,
        pivot: u8,
    ) -> Result<(Vec<Vec<f64>>, Option<u64>)> {
        let n = self.n();
        if pivot as usize >= n || n < 2 {
            return Err(Error::InvalidParameter(format!(
                "pivot {pivot} out of range for {n} items"
            )));
        }
        match self {
            Stats::Sampled(s) => {
                let m = n - 1;
                let mut counts = vec![0u64; m * m];
                let mut hits = 0u64;
                for idx in s.ranges[1].clone() {
                    let row = s.row(idx);
                    if row[0] != pivot {
                        continue;
                    }
                    hits += 1;
                    for (pos, &e) in row[1..].iter().enumerate() {
                        let reduced = e - u8::from(e > pivot);
                        counts[reduced as usize * m + pos] += 1;
                    }
                }
                let denom = hits.max(1) as f64;
                let table = (0..m)
                    .map(|e| {
                        (0..m)
                            .map(|pos| counts[e * m + pos] as f64 / denom)
                            .collect()
                    })
                    .collect();
                Ok((table, Some(hits)))
            }
            Stats::Exact(e) => Ok((e.conditional_position_freq(pivot)?, None)),
        }
    }

    /// A new statistics value over the rankings with masked items deleted,
    /// together with the kept original ids in ascending order (reduced id
    /// `i` is original id `kept[i]`). Sample blocks keep their row indices.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidParameter`] unless at least two items remain.
    pub fn project(&self, removed: &[bool]) -> Result<(Stats, Vec<u8>)> {
        self.check_mask(removed)?;
        let kept: Vec<u8> = (0..self.n() as u8)
            .filter(|&e| !removed[e as usize])
            .collect();
        if kept.len() < 2 {
            return Err(Error::InvalidParameter(
                "projection must keep at least two items".into(),
            ));
        }
        let stats = match self {
            Stats::Sampled(s) => {
                let map = reduced_id_map(removed);
                let m = kept.len();
                let mut buf = Vec::with_capacity(s.count * m);
                for idx in 0..s.count {
                    for &e in s.row(idx) {
                        if !removed[e as usize] {
                            buf.push(map[e as usize] as u8);
                        }
                    }
                }
                Stats::Sampled(SampleStats {
                    n: m,
                    count: s.count,
                    buf: Arc::new(buf),
                    ranges: s.ranges.clone(),
                })
            }
            Stats::Exact(e) => Stats::Exact(e.project(removed)?),
        };
        Ok((stats, kept))
    }

    /// Extends every ranking with `k` artificial items ranked above all
    /// real ones, sampled by the insertion law of a Mallows model with
    /// scale `phi` (slot `j` from the top with probability proportional to
    /// `phi^j`). Real items keep their ids; artificial items take ids
    /// `n..n + k`. Returns the new statistics and the artificial prefix in
    /// central order (best first).
    ///
    /// In exact mode the result is the exact mixture with that prefix
    /// prepended to both centrals, each component keeping its own scale,
    /// and `phi` is ignored; the sampled construction coincides with it
    /// when `phi` matches the component scales.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidParameter`] for `k == 0`, a scale outside
    /// `(0, 1)`, or ids overflowing the byte range.
    pub fn prepend_artificial<R: Rng + ?Sized>(
        &self,
        k: usize,
        phi: f64,
        rng: &mut R,
    ) -> Result<(Stats, Vec<u8>)> {
        let n = self.n();
        if k == 0 {
            return Err(Error::InvalidParameter(
                "must prepend at least one artificial item".into(),
            ));
        }
        if n + k > u8::MAX as usize + 1 {
            return Err(Error::CapacityExceeded {
                what: "item ids",
                limit: u8::MAX as usize + 1,
                requested: n + k,
            });
        }
        if !(phi > 0.0 && phi < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "insertion scale {phi} outside (0, 1)"
            )));
        }
        // Best-first central prefix: the last inserted item is the best.
        let prefix: Vec<u8> = (0..k).rev().map(|t| (n + t) as u8).collect();
        let stats = match self {
            Stats::Sampled(s) => {
                let m = n + k;
                let mut pow = Vec::with_capacity(m);
                let mut acc = 1.0;
                for _ in 0..m {
                    pow.push(acc);
                    acc *= phi;
                }
                let z: Vec<f64> = (0..=m).map(|i| z_single(i, phi)).collect();
                let mut buf = Vec::with_capacity(s.count * m);
                let mut scratch: Vec<u8> = Vec::with_capacity(m);
                for idx in 0..s.count {
                    scratch.clear();
                    scratch.extend_from_slice(s.row(idx));
                    for t in 0..k {
                        // Items worse than all pending artificials insert
                        // first, so each insertion is best-so-far and obeys
                        // the top-slot law over len + 1 slots.
                        let len = scratch.len();
                        let u = rng.random::<f64>() * z[len + 1];
                        let mut slot = 0usize;
                        let mut walk = pow[0];
                        while u >= walk && slot < len {
                            slot += 1;
                            walk += pow[slot];
                        }
                        scratch.insert(slot, (n + t) as u8);
                    }
                    buf.extend_from_slice(&scratch);
                }
                Stats::Sampled(SampleStats {
                    n: m,
                    count: s.count,
                    buf: Arc::new(buf),
                    ranges: s.ranges.clone(),
                })
            }
            Stats::Exact(e) => {
                let extend = |model: &MallowsModel| -> Result<MallowsModel> {
                    let mut items = prefix.clone();
                    items.extend_from_slice(model.central().as_slice());
                    MallowsModel::new(Permutation::new(items)?, model.phi())
                };
                let mixture = MallowsMixture::new(
                    e.mixture.w1(),
                    extend(e.mixture.comp1())?,
                    extend(e.mixture.comp2())?,
                )?;
                Stats::Exact(ExactStats { mixture })
            }
        };
        Ok((stats, prefix))
    }

    fn check_mask(&self, removed: &[bool]) -> Result<()> {
        if removed.len() != self.n() {
            return Err(Error::MismatchedLengths {
                left: removed.len(),
                right: self.n(),
            });
        }
        Ok(())
    }
}

impl SampleStats {
    fn new(n: usize, count: usize, buf: Arc<Vec<u8>>) -> SampleStats {
        // Block sizes: 40% moments, 40% conditionals, 20% positions, each
        // nonempty (count >= 3 is enforced upstream).
        let m = ((count as f64 * MOMENT_SPLIT) as usize).clamp(1, count - 2);
        let c = ((count as f64 * CONDITIONAL_SPLIT) as usize).clamp(1, count - m - 1);
        SampleStats {
            n,
            count,
            buf,
            ranges: [0..m, m..m + c, m + c..count],
        }
    }

    fn row(&self, idx: usize) -> &[u8] {
        &self.buf[idx * self.n..(idx + 1) * self.n]
    }

    /// Position frequencies over the position block with masked items
    /// skipped (pass an all-false mask for the plain table).
    fn position_freq_masked(&self, removed: &[bool]) -> Vec<Vec<f64>> {
        let map = reduced_id_map(removed);
        let m = self.n - removed.iter().filter(|&&r| r).count();
        let mut counts = vec![0u64; m * m];
        for idx in self.ranges[2].clone() {
            let mut pos = 0usize;
            for &e in self.row(idx) {
                if !removed[e as usize] {
                    counts[map[e as usize] * m + pos] += 1;
                    pos += 1;
                }
            }
        }
        let total = self.ranges[2].len().max(1) as f64;
        (0..m)
            .map(|e| (0..m).map(|pos| counts[e * m + pos] as f64 / total).collect())
            .collect()
    }
}

impl ExactStats {
    pub fn mixture(&self) -> &MallowsMixture {
        &self.mixture
    }

    fn project(&self, removed: &[bool]) -> Result<ExactStats> {
        // The relative order of a subset under a Mallows model is again a
        // Mallows model with the same scale over the subset's induced
        // central order, so a projected mixture keeps its weights and
        // scales and only shrinks the centrals.
        let reduce = |model: &MallowsModel| -> Result<MallowsModel> {
            let mut central = model.central().clone();
            for item in (0..removed.len() as u8).rev() {
                if removed[item as usize] {
                    central = central.without_item(item)?;
                }
            }
            MallowsModel::new(central, model.phi())
        };
        let mixture = MallowsMixture::new(
            self.mixture.w1(),
            reduce(self.mixture.comp1())?,
            reduce(self.mixture.comp2())?,
        )?;
        Ok(ExactStats { mixture })
    }

    fn conditional_position_freq(&self, pivot: u8) -> Result<Vec<Vec<f64>>> {
        if self.mixture.n() <= MAX_ENUMERATION_N {
            self.conditional_by_enumeration(pivot)
        } else {
            self.conditional_by_identity(pivot)
        }
    }

    /// Direct definition: average reduced positions over all rankings that
    /// start with `pivot`, weighted by mixture probability.
    fn conditional_by_enumeration(&self, pivot: u8) -> Result<Vec<Vec<f64>>> {
        let n = self.mixture.n();
        let m = n - 1;
        let mut table = vec![vec![0.0f64; m]; m];
        let mut mass = 0.0;
        for perm in enumerate_permutations(n)? {
            if perm.item_at(0) != pivot {
                continue;
            }
            let p = self.mixture.prob(&perm)?;
            mass += p;
            for pos in 0..m {
                let e = perm.item_at(pos + 1);
                let reduced = e - u8::from(e > pivot);
                table[reduced as usize][pos] += p;
            }
        }
        if mass <= 0.0 {
            return Err(Error::EstimationFailed(
                "conditioning event has zero probability".into(),
            ));
        }
        for row in &mut table {
            for v in row.iter_mut() {
                *v /= mass;
            }
        }
        Ok(table)
    }

    /// Conditioning identity: given the top item, component weights update
    /// by their first-place probabilities and each component conditions to
    /// a Mallows model over the remaining items with the same scale.
    fn conditional_by_identity(&self, pivot: u8) -> Result<Vec<Vec<f64>>> {
        let x1 = self.mixture.comp1().representative_vector()[pivot as usize];
        let x2 = self.mixture.comp2().representative_vector()[pivot as usize];
        let mass = self.mixture.w1() * x1 + self.mixture.w2() * x2;
        if mass <= 0.0 {
            return Err(Error::EstimationFailed(
                "conditioning event has zero probability".into(),
            ));
        }
        let w1 = self.mixture.w1() * x1 / mass;
        let t1 = self.mixture.comp1().condition_on_first(pivot)?.position_probabilities();
        let t2 = self.mixture.comp2().condition_on_first(pivot)?.position_probabilities();
        let m = self.mixture.n() - 1;
        Ok((0..m)
            .map(|e| {
                (0..m)
                    .map(|pos| w1 * t1[e][pos] + (1.0 - w1) * t2[e][pos])
                    .collect()
            })
            .collect())
    }
}

/// For each original id, its id after deleting the masked items (entries at
/// masked ids are meaningless).
fn reduced_id_map(removed: &[bool]) -> Vec<usize> {
    let mut map = vec![0usize; removed.len()];
    let mut next = 0usize;
    for (e, &gone) in removed.iter().enumerate() {
        map[e] = next;
        if !gone {
            next += 1;
        }
    }
    map
}
