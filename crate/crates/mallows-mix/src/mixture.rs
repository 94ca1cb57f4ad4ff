//! Two-component Mallows mixtures.

use crate::error::{Error, Result};
use crate::mallows::MallowsModel;
use crate::perm::Permutation;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A mixture `w1 * M(phi1, pi1) + (1 - w1) * M(phi2, pi2)` over a shared
/// item set `0..n`.
#[derive(Clone, Debug)]
pub struct MallowsMixture {
    w1: f64,
    comp1: MallowsModel,
    comp2: MallowsModel,
}

impl MallowsMixture {
    /// Builds a mixture from a weight and two component models.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidParameter`] if `w1` is not strictly inside
    /// `(0, 1)` and [`Error::MismatchedLengths`] if the components rank
    /// different item counts.
    pub fn new(w1: f64, comp1: MallowsModel, comp2: MallowsModel) -> Result<Self> {
        if !w1.is_finite() || w1 <= 0.0 || w1 >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "mixing weight must lie in (0, 1), got {w1}"
            )));
        }
        if comp1.n() != comp2.n() {
            return Err(Error::MismatchedLengths {
                left: comp1.n(),
                right: comp2.n(),
            });
        }
        Ok(Self { w1, comp1, comp2 })
    }

    pub fn n(&self) -> usize {
        self.comp1.n()
    }

    pub fn w1(&self) -> f64 {
        self.w1
    }

    pub fn w2(&self) -> f64 {
        1.0 - self.w1
    }

    pub fn comp1(&self) -> &MallowsModel {
        &self.comp1
    }

    pub fn comp2(&self) -> &MallowsModel {
        &self.comp2
    }

    /// Probability of observing `pi`.
    ///
    /// # Errors
    ///
    /// Returns [`Error::MismatchedLengths`] if sizes differ.
    pub fn prob(&self, pi: &Permutation) -> Result<f64> {
        Ok(self.w1 * self.comp1.prob(pi)? + self.w2() * self.comp2.prob(pi)?)
    }

    /// Log probability of observing `pi`.
    ///
    /// # Errors
    ///
    /// Returns [`Error::MismatchedLengths`] if sizes differ.
    pub fn log_prob(&self, pi: &Permutation) -> Result<f64> {
        Ok(self.prob(pi)?.ln())
    }

    /// Draws one sample: picks a component, then samples it. Appends the
    /// rank order to `out` (cleared first).
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<u8>) {
        if rng.random::<f64>() < self.w1 {
            self.comp1.sample_into(rng, out);
        } else {
            self.comp2.sample_into(rng, out);
        }
    }

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
        let d1 = self.comp1.exact_distribution()?;
        let d2 = self.comp2.exact_distribution()?;
        Ok(d1
            .into_iter()
            .zip(d2)
            .map(|((p, a), (_, b))| (p, self.w1 * a + self.w2() * b))
            .collect())
    }

    /// First-place probabilities by item: the weighted combination of the
    /// component representative vectors.
    pub fn first_place_probabilities(&self) -> Vec<f64> {
        let x = self.comp1.representative_vector();
        let y = self.comp2.representative_vector();
        x.iter()
            .zip(&y)
            .map(|(a, b)| self.w1 * a + self.w2() * b)
            .collect()
    }

    /// Position probabilities in item space: row `e` is the distribution of
    /// item `e`'s position under the mixture.
    pub fn position_probabilities(&self) -> Vec<Vec<f64>> {
        let t1 = self.comp1.position_probabilities();
        let t2 = self.comp2.position_probabilities();
        t1.into_iter()
            .zip(t2)
            .map(|(r1, r2)| {
                r1.iter()
                    .zip(&r2)
                    .map(|(a, b)| self.w1 * a + self.w2() * b)
                    .collect()
            })
            .collect()
    }

    /// Relabels components so that component 1 carries the larger weight
    /// (ties broken by scale, then central order), giving every mixture one
    /// canonical presentation for comparisons.
    pub fn canonicalized(self) -> Self {
        let swap = match self.w1.total_cmp(&self.w2()) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => {
                match self.comp1.phi().total_cmp(&self.comp2.phi()) {
                    std::cmp::Ordering::Greater => true,
                    std::cmp::Ordering::Less => false,
                    std::cmp::Ordering::Equal => {
                        self.comp1.central().as_slice() > self.comp2.central().as_slice()
                    }
                }
            }
        };
        if swap {
            Self {
                w1: 1.0 - self.w1,
                comp1: self.comp2,
                comp2: self.comp1,
            }
        } else {
            self
        }
    }

    /// The on-disk representation (1-based item ids).
    pub fn to_file_repr(&self) -> MixtureFile {
        MixtureFile {
            n: self.n(),
            w1: self.w1,
            phi1: self.comp1.phi(),
            pi1: self.comp1.central().to_one_based(),
            phi2: self.comp2.phi(),
            pi2: self.comp2.central().to_one_based(),
        }
    }

    /// Parses the on-disk representation.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidPermutation`], [`Error::InvalidParameter`], or
    /// [`Error::MismatchedLengths`] if any field is malformed or the sizes
    /// disagree with `n`.
    pub fn from_file_repr(file: &MixtureFile) -> Result<Self> {
        if file.pi1.len() != file.n || file.pi2.len() != file.n {
            return Err(Error::MismatchedLengths {
                left: file.pi1.len(),
                right: file.pi2.len(),
            });
        }
        let pi1 = Permutation::from_one_based(&file.pi1)?;
        let pi2 = Permutation::from_one_based(&file.pi2)?;
        MallowsMixture::new(
            file.w1,
            MallowsModel::new(pi1, file.phi1)?,
            MallowsModel::new(pi2, file.phi2)?,
        )
    }
}

/// JSON model description: `{n, w1, phi1, pi1, phi2, pi2}` with 1-based
/// central orders. The second weight is implied.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MixtureFile {
    pub n: usize,
    pub w1: f64,
    pub phi1: f64,
    pub pi1: Vec<usize>,
    pub phi2: f64,
    pub pi2: Vec<usize>,
}
