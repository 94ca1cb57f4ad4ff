//! The mixture learner: moment tensors, spectral decomposition, completion.
//!
//! [`learn`] recovers a two-component Mallows mixture from ranking
//! statistics in three stages. The tensor stage forms third-moment tensors
//! over random item partitions and decomposes them into two rank-1 terms,
//! yielding the mixing weights, both scale parameters, and a reliable
//! prefix of each central order. The completion stage recovers the rest of
//! the centrals from position frequencies, either by conditioning on an
//! item exclusive to one component's prefix (the pivot path) or by solving
//! a two-equation linear system that separates the two components' position
//! tables. When every tensor round fails its spectral gate, the degenerate
//! stage takes over: it peels a shared central prefix, retries the tensors
//! after prepending artificial items, and finally looks for a single
//! swapped pair, falling back to a single-model fit when nothing resolves.
//!
//! Failures of the statistical pipeline are not `Err` values: the learner
//! always reports its best structured answer, and [`LearnedMixture::path`]
//! plus [`Diagnostics`] say which route produced it and why. Errors are
//! reserved for unusable inputs (too few samples, malformed statistics).

mod completion;
mod degenerate;
mod topk;

pub use completion::{find_pi, greedy_position_assignment, learn_single_mallows};
pub use topk::{estimate_phi, infer_top_k, TopKEstimate};

use crate::error::{Error, Result};
use crate::mixture::{MallowsMixture, MixtureFile};
use crate::stats::Stats;
use crate::tensor::{decompose_rank2, DecompOutcome, MomentTensor3, Partition3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Tuning knobs for [`learn`]. `Default` matches the CLI defaults; every
/// field can also come from a JSON config file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    /// Seed for the learner's internal randomness (partitions and
    /// contraction vectors). Fixed seed, fixed statistics: fixed output.
    pub seed: u64,
    /// Tensor rounds to attempt before treating the mixture as degenerate.
    /// Defaults to `10 * ceil(log2 n)`.
    pub rounds: Option<usize>,
    /// Spectral gate: a decomposition counts only if every factor matrix
    /// keeps a second singular value at least this large. Defaults to
    /// `max(1e-4, 8 * eps_s * sqrt(n))`.
    pub eps2: Option<f64>,
    /// Minimum total sample count the learner accepts.
    pub min_samples: u64,
    /// Minimum conditioned subsample for pivot and linear-system paths.
    pub min_conditioned: u64,
    /// Mixing weights are clamped into `[weight_floor, 1 - weight_floor]`.
    pub weight_floor: f64,
    /// Contraction redraws inside one tensor decomposition.
    pub decompose_retries: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            seed: 0,
            rounds: None,
            eps2: None,
            min_samples: 1_000,
            min_conditioned: 1_000,
            weight_floor: 0.05,
            decompose_retries: 8,
        }
    }
}

impl LearnerConfig {
    /// Reads a config from JSON; unknown fields are rejected.
    pub fn from_json(text: &str) -> Result<LearnerConfig> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Default tensor rounds for an `n`-item problem.
pub fn default_rounds(n: usize) -> usize {
    (10.0 * (n.max(2) as f64).log2().ceil()) as usize
}

/// Default spectral gate for noise level `eps_s` on `n` items.
pub fn default_eps2(eps_s: f64, n: usize) -> f64 {
    (8.0 * eps_s * (n as f64).sqrt()).max(1e-4)
}

/// Which route produced a learned mixture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnPath {
    /// Tensor stage plus linear-system completion.
    Tensor,
    /// Tensor stage plus conditioning on a component-exclusive item.
    Pivot,
    /// Degenerate stage: the components appear identical.
    DegenerateIdentical,
    /// Degenerate stage: recovered after prepending artificial items.
    DegenerateStaggered,
    /// Degenerate stage: equal-scale components differing by a swapped
    /// adjacent pair.
    DegenerateAligned,
    /// Expectation-maximization (produced by the EM baseline, never by
    /// [`learn`]).
    Em,
}

impl LearnPath {
    pub fn as_str(self) -> &'static str {
        match self {
            LearnPath::Tensor => "tensor",
            LearnPath::Pivot => "pivot",
            LearnPath::DegenerateIdentical => "degenerate-identical",
            LearnPath::DegenerateStaggered => "degenerate-staggered",
            LearnPath::DegenerateAligned => "degenerate-aligned",
            LearnPath::Em => "em",
        }
    }

    pub fn is_degenerate(self) -> bool {
        matches!(
            self,
            LearnPath::DegenerateIdentical
                | LearnPath::DegenerateStaggered
                | LearnPath::DegenerateAligned
        )
    }
}

/// Run metadata the learner reports alongside its answer.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Entrywise noise scale of the moment estimates.
    pub eps_s: f64,
    /// Spectral gate actually applied.
    pub eps_2: f64,
    /// Tensor rounds attempted.
    pub rounds_attempted: usize,
    /// Rounds whose decomposition passed the spectral gate.
    pub rounds_gate_passed: usize,
    /// Largest gate statistic seen across rounds.
    pub best_sigma2: f64,
    /// Why individual rounds were abandoned.
    pub rejections: Vec<String>,
    /// Notes from the degenerate pipeline and completion fallbacks.
    pub notes: Vec<String>,
}

/// A learned mixture, the route that produced it, and run diagnostics.
/// The mixture is canonicalized (heavier component first).
#[derive(Clone, Debug)]
pub struct LearnedMixture {
    pub mixture: MallowsMixture,
    pub path: LearnPath,
    pub diagnostics: Diagnostics,
}

/// Serialized form of [`LearnedMixture`] (centrals as 1-based item lists).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LearnedFile {
    pub w1: f64,
    pub phi1: f64,
    pub pi1: Vec<usize>,
    pub w2: f64,
    pub phi2: f64,
    pub pi2: Vec<usize>,
    pub path: LearnPath,
    pub diagnostics: Diagnostics,
}

impl LearnedMixture {
    pub fn to_file_repr(&self) -> LearnedFile {
        let m: MixtureFile = self.mixture.to_file_repr();
        LearnedFile {
            w1: m.w1,
            phi1: m.phi1,
            pi1: m.pi1,
            w2: 1.0 - m.w1,
            phi2: m.phi2,
            pi2: m.pi2,
            path: self.path,
            diagnostics: self.diagnostics.clone(),
        }
    }

    pub fn from_file_repr(file: &LearnedFile) -> Result<LearnedMixture> {
        let mixture = MallowsMixture::from_file_repr(&MixtureFile {
            n: file.pi1.len(),
            w1: file.w1,
            phi1: file.phi1,
            pi1: file.pi1.clone(),
            phi2: file.phi2,
            pi2: file.pi2.clone(),
        })?;
        Ok(LearnedMixture {
            mixture,
            path: file.path,
            diagnostics: file.diagnostics.clone(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file_repr())?;
        Ok(std::fs::write(path, text + "\n")?)
    }

    pub fn load(path: &Path) -> Result<LearnedMixture> {
        let text = std::fs::read_to_string(path)?;
        LearnedMixture::from_file_repr(&serde_json::from_str(&text)?)
    }
}

/// Learns a two-component Mallows mixture from ranking statistics.
///
/// # Errors
///
/// Returns [`Error::InsufficientSamples`] below `config.min_samples`,
/// [`Error::InvalidParameter`] for fewer than 3 items, and propagates
/// statistics failures. Statistical dead ends are not errors; they surface
/// as degenerate paths with diagnostics.
pub fn learn(stats: &Stats, config: &LearnerConfig) -> Result<LearnedMixture> {
    if let Some(count) = stats.sample_count() {
        if count < config.min_samples {
            return Err(Error::InsufficientSamples {
                needed: config.min_samples as usize,
                got: count,
            });
        }
    }
    let n = stats.n();
    if n < 3 {
        return Err(Error::InvalidParameter(format!(
            "mixture learning needs at least 3 items, got {n}"
        )));
    }

    let moments = stats.moments()?;
    let eps_s = stats.eps_s();
    let eps2 = config.eps2.unwrap_or_else(|| default_eps2(eps_s, n));
    let rounds = config.rounds.unwrap_or_else(|| default_rounds(n));
    let mut diag = Diagnostics {
        eps_s,
        eps_2: eps2,
        ..Diagnostics::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    for round in 0..rounds {
        diag.rounds_attempted += 1;
        let partition = Partition3::random(n, &mut rng);
        let tensor = MomentTensor3::from_moments(&moments, &partition);
        let decomp = match decompose_rank2(&tensor, &mut rng, config.decompose_retries) {
            DecompOutcome::Rank2(d) => d,
            DecompOutcome::Degenerate { reason } => {
                diag.rejections.push(format!("round {round}: {reason}"));
                continue;
            }
        };
        let sigma2 = decomp.sigma2_min();
        diag.best_sigma2 = diag.best_sigma2.max(sigma2);
        if sigma2 < eps2 {
            diag.rejections.push(format!(
                "round {round}: gate statistic {sigma2:.3e} below {eps2:.3e}"
            ));
            continue;
        }
        diag.rounds_gate_passed += 1;

        let topk = match infer_top_k(&decomp, &partition, &moments, eps_s, config) {
            Ok(t) => t,
            Err(reason) => {
                diag.rejections.push(format!("round {round}: {reason}"));
                continue;
            }
        };
        match completion::recover_rest(stats, &topk, eps_s, config, &mut diag) {
            Ok((mixture, path)) => {
                return Ok(LearnedMixture {
                    mixture: mixture.canonicalized(),
                    path,
                    diagnostics: diag,
                });
            }
            Err(reason) => {
                diag.rejections.push(format!("round {round}: {reason}"));
                continue;
            }
        }
    }

    let (mixture, path) =
        degenerate::handle_degenerate(stats, &moments, eps_s, eps2, config, &mut rng, &mut diag)?;
    Ok(LearnedMixture {
        mixture: mixture.canonicalized(),
        path,
        diagnostics: diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mallows::MallowsModel;
    use crate::perm::Permutation;

    fn mixture(w1: f64, c1: (Vec<u8>, f64), c2: (Vec<u8>, f64)) -> MallowsMixture {
        MallowsMixture::new(
            w1,
            MallowsModel::new(Permutation::new(c1.0).unwrap(), c1.1).unwrap(),
            MallowsModel::new(Permutation::new(c2.0).unwrap(), c2.1).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_thin_sample_sets() {
        let m = mixture(0.5, (vec![0, 1, 2, 3], 0.5), (vec![3, 2, 1, 0], 0.5));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let perms: Vec<Permutation> = (0..500).map(|_| m.sample(&mut rng)).collect();
        let stats = Stats::from_permutations(&perms).unwrap();
        let err = learn(&stats, &LearnerConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientSamples { .. }));
    }

    #[test]
    fn config_defaults_and_json_round_trip() {
        let c = LearnerConfig::default();
        assert_eq!(c.min_samples, 1_000);
        let parsed = LearnerConfig::from_json("{\"seed\": 7, \"rounds\": 12}").unwrap();
        assert_eq!(parsed.seed, 7);
        assert_eq!(parsed.rounds, Some(12));
        assert!(LearnerConfig::from_json("{\"seeed\": 7}").is_err());
        assert_eq!(default_rounds(10), 40);
        assert!((default_eps2(0.0, 10) - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn learn_path_labels_are_stable() {
        assert_eq!(LearnPath::Tensor.as_str(), "tensor");
        assert_eq!(
            serde_json::to_string(&LearnPath::DegenerateStaggered).unwrap(),
            "\"degenerate-staggered\""
        );
        assert!(LearnPath::DegenerateAligned.is_degenerate());
        assert!(!LearnPath::Pivot.is_degenerate());
    }

    /// Exact statistics of a well-separated mixture: the full pipeline must
    /// reproduce the mixture without touching the degenerate stage.
    #[test]
    fn exact_statistics_recover_a_separated_mixture() {
        let truth = mixture(
            0.35,
            (vec![0, 1, 2, 3, 4, 5, 6, 7], 0.5),
            (vec![7, 6, 5, 4, 3, 2, 1, 0], 0.62),
        );
        let stats = Stats::exact(truth.clone());
        let learned = learn(&stats, &LearnerConfig::default()).unwrap();
        assert!(!learned.path.is_degenerate(), "path {:?}", learned.path);
        let want = truth.canonicalized();
        assert_eq!(
            learned.mixture.comp1().central(),
            want.comp1().central(),
            "diag: {:?}",
            learned.diagnostics
        );
        assert_eq!(learned.mixture.comp2().central(), want.comp2().central());
        assert!((learned.mixture.w1() - want.w1()).abs() < 1e-6);
        assert!((learned.mixture.comp1().phi() - want.comp1().phi()).abs() < 1e-6);
        assert!((learned.mixture.comp2().phi() - want.comp2().phi()).abs() < 1e-6);
    }

    /// Identical components must come back through the degenerate stage
    /// with both centrals equal and the exact even split.
    #[test]
    fn exact_statistics_flag_identical_components() {
        let truth = mixture(
            0.4,
            (vec![2, 0, 1, 3, 4, 5], 0.45),
            (vec![2, 0, 1, 3, 4, 5], 0.45),
        );
        let stats = Stats::exact(truth);
        let learned = learn(&stats, &LearnerConfig::default()).unwrap();
        assert_eq!(learned.path, LearnPath::DegenerateIdentical);
        assert_eq!(
            learned.mixture.comp1().central().as_slice(),
            &[2, 0, 1, 3, 4, 5]
        );
        assert_eq!(
            learned.mixture.comp2().central().as_slice(),
            &[2, 0, 1, 3, 4, 5]
        );
        assert_eq!(learned.mixture.w1(), 0.5);
        assert!((learned.mixture.comp1().phi() - 0.45).abs() < 1e-9);
    }

    /// An adjacent swapped pair with equal scales defeats the tensor gate;
    /// the aligned branch must reassemble both centrals.
    #[test]
    fn exact_statistics_resolve_an_aligned_swap() {
        let truth = mixture(
            0.45,
            (vec![0, 1, 2, 3, 4, 5, 6, 7], 0.5),
            (vec![0, 1, 2, 4, 3, 5, 6, 7], 0.5),
        );
        let stats = Stats::exact(truth.clone());
        let learned = learn(&stats, &LearnerConfig::default()).unwrap();
        assert_eq!(learned.path, LearnPath::DegenerateAligned);
        let got = [
            learned.mixture.comp1().central().as_slice().to_vec(),
            learned.mixture.comp2().central().as_slice().to_vec(),
        ];
        let want = [
            truth.comp1().central().as_slice().to_vec(),
            truth.comp2().central().as_slice().to_vec(),
        ];
        assert!(
            got == want || got == [want[1].clone(), want[0].clone()],
            "got {:?} diag {:?}",
            got,
            learned.diagnostics
        );
        assert!((learned.mixture.w1() - 0.55).abs() < 1e-6 || (learned.mixture.w1() - 0.45).abs() < 1e-6);
    }
}
