//! Third-moment tensors over item partitions and their rank-2 decomposition.
//!
//! Splitting the items into three disjoint parts `(A, B, C)` and reading the
//! top-set probabilities `P_ijk` with one index in each part yields a
//! three-way tensor that, for a two-component mixture, is the sum of two
//! rank-1 terms: `T = sum_r kappa_r x_r|A (x) x_r|B (x) x_r|C` with each
//! factor the restriction of a component's first-place vector to one part.
//! Recovering those factors is the heart of the learner; everything else it
//! does is bookkeeping around them.
//!
//! The decomposition is the classical simultaneous-diagonalization method:
//! contract the tensor along its third mode with two random vectors, then
//! eigendecompose one contraction against the other. Both contractions are
//! first projected onto their shared rank-2 column/row spaces, which reduces
//! the eigenproblem to 2x2 and sidesteps a general nonsymmetric eigensolver
//! without changing the operator being diagonalized.

use crate::error::{Error, Result};
use crate::moments::MomentStats;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// A split of `0..n` into three disjoint, nonempty parts.
#[derive(Clone, Debug)]
pub struct Partition3 {
    parts: [Vec<u8>; 3],
}

impl Partition3 {
    /// Validates that the parts are nonempty and disjoint.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidParameter`] otherwise.
    pub fn new(parts: [Vec<u8>; 3]) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for part in &parts {
            if part.is_empty() {
                return Err(Error::InvalidParameter("empty partition part".into()));
            }
            for &e in part {
                if !seen.insert(e) {
                    return Err(Error::InvalidParameter(format!(
                        "item {e} appears in two parts"
                    )));
                }
            }
        }
        Ok(Self { parts })
    }

    /// Assigns each of the `n` items to a part uniformly at random,
    /// redrawing in the (rare) event that a part comes out empty.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Partition3 {
        assert!(n >= 3, "three nonempty parts need n >= 3");
        loop {
            let mut parts: [Vec<u8>; 3] = [Vec::new(), Vec::new(), Vec::new()];
            for e in 0..n as u8 {
                parts[rng.random_range(0..3usize)].push(e);
            }
            if parts.iter().all(|p| !p.is_empty()) {
                return Partition3 { parts };
            }
        }
    }

    pub fn parts(&self) -> &[Vec<u8>; 3] {
        &self.parts
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.parts[0].len(), self.parts[1].len(), self.parts[2].len()]
    }
}

/// The cross-part third-moment tensor `T[a][b][c] = P_{A[a], B[b], C[c]}`.
#[derive(Clone, Debug)]
pub struct MomentTensor3 {
    dims: [usize; 3],
    /// Row-major: index `(a * dims[1] + b) * dims[2] + c`.
    data: Vec<f64>,
}

impl MomentTensor3 {
    pub fn from_moments(stats: &MomentStats, partition: &Partition3) -> MomentTensor3 {
        let [na, nb, nc] = partition.dims();
        let [pa, pb, pc] = partition.parts();
        let mut data = Vec::with_capacity(na * nb * nc);
        for &i in pa {
            for &j in pb {
                for &k in pc {
                    data.push(stats.p3(i as usize, j as usize, k as usize));
                }
            }
        }
        MomentTensor3 {
            dims: [na, nb, nc],
            data,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn entry(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.dims[1] + b) * self.dims[2] + c]
    }

    pub fn fro_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Contracts the third mode with `w`, producing the `na x nb` matrix
    /// `M[a][b] = sum_c T[a][b][c] w[c]`.
    pub fn contract_mode_c(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let [na, nb, nc] = self.dims;
        debug_assert_eq!(w.len(), nc);
        DMatrix::from_fn(na, nb, |a, b| {
            (0..nc).map(|c| self.entry(a, b, c) * w[c]).sum()
        })
    }

    /// Flattens one mode against the other two and returns the two leading
    /// singular values. A near-zero second value certifies that this part
    /// carries (at most) a rank-1 signal.
    pub fn unfolding_sigma12(&self, mode: usize) -> (f64, f64) {
        let [na, nb, nc] = self.dims;
        let m = match mode {
            0 => DMatrix::from_fn(na, nb * nc, |a, col| self.entry(a, col / nc, col % nc)),
            1 => DMatrix::from_fn(nb, na * nc, |b, col| self.entry(col / nc, b, col % nc)),
            2 => DMatrix::from_fn(nc, na * nb, |c, col| self.entry(col / nb, col % nb, c)),
            _ => panic!("mode out of range"),
        };
        sigma12(&m)
    }
}

/// Leading two singular values of a matrix (`sigma2 = 0` for a single row
/// or column).
pub fn sigma12(m: &DMatrix<f64>) -> (f64, f64) {
    let sv = m.clone().svd(false, false).singular_values;
    let s1 = if sv.len() >= 1 { sv[0] } else { 0.0 };
    let s2 = if sv.len() >= 2 { sv[1] } else { 0.0 };
    (s1, s2)
}

/// A rank-2 factorization `T ~ sum_{r=1,2} f[0][r] (x) f[1][r] (x) f[2][r]`.
///
/// Within each term the three factors share one Euclidean norm (the cube
/// root of the term's magnitude) and carry nonnegative entry sums wherever
/// the sign ambiguity of outer products allows.
#[derive(Clone, Debug)]
pub struct Rank2Decomp {
    /// `factors[mode][component]`.
    pub factors: [[Vec<f64>; 2]; 3],
}

impl Rank2Decomp {
    /// The smallest second singular value across the three `n_tau x 2`
    /// factor matrices: the certificate that both components are genuinely
    /// visible in every part. Near zero means the decomposition is not
    /// trustworthy even if it reproduces the tensor.
    pub fn sigma2_min(&self) -> f64 {
        self.factor_sigma2().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Second singular value of the factor matrix of each mode.
    pub fn factor_sigma2(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        for mode in 0..3 {
            let rows = self.factors[mode][0].len();
            let m = DMatrix::from_fn(rows, 2, |r, c| self.factors[mode][c][r]);
            out[mode] = sigma12(&m).1;
        }
        out
    }

    /// Frobenius distance between `tensor` and this factorization.
    pub fn residual(&self, tensor: &MomentTensor3) -> f64 {
        let [na, nb, nc] = tensor.dims();
        let mut sq = 0.0;
        for a in 0..na {
            for b in 0..nb {
                for c in 0..nc {
                    let mut v = tensor.entry(a, b, c);
                    for r in 0..2 {
                        v -= self.factors[0][r][a] * self.factors[1][r][b] * self.factors[2][r][c];
                    }
                    sq += v * v;
                }
            }
        }
        sq.sqrt()
    }
}

/// Outcome of a decomposition attempt. `Degenerate` is an expected result,
/// not an error: it is how a rank-deficient tensor announces itself, and the
/// learner routes such mixtures to the structured degenerate pipeline.
#[derive(Clone, Debug)]
pub enum DecompOutcome {
    Rank2(Rank2Decomp),
    Degenerate { reason: String },
}

/// Relative cutoff under which trailing singular values are treated as zero.
const RANK_CUTOFF: f64 = 1e-10;

/// Decomposes a (noisy) rank-2 tensor by simultaneous diagonalization.
///
/// Draws a pair of random contraction vectors, projects both contractions
/// onto their shared rank-2 singular subspaces, and solves the resulting
/// 2x2 generalized eigenproblem in closed form; mode-2 and mode-3 factors
/// follow by least squares against the contractions and the tensor slices.
/// Unlucky contraction draws (a singular pencil) are redrawn up to
/// `max_retries` times before declaring the tensor degenerate.
pub fn decompose_rank2<R: Rng + ?Sized>(
    tensor: &MomentTensor3,
    rng: &mut R,
    max_retries: usize,
) -> DecompOutcome {
    let mut reason = String::new();
    for _ in 0..max_retries.max(1) {
        match try_decompose(tensor, rng) {
            Ok(d) => return DecompOutcome::Rank2(d),
            Err(TryFail::Structural(r)) => return DecompOutcome::Degenerate { reason: r },
            Err(TryFail::Retry(r)) => reason = r,
        }
    }
    DecompOutcome::Degenerate { reason }
}

enum TryFail {
    /// The tensor itself lacks rank-2 structure; retrying cannot help.
    Structural(String),
    /// This contraction draw was unusable; another draw may work.
    Retry(String),
}

fn try_decompose<R: Rng + ?Sized>(
    tensor: &MomentTensor3,
    rng: &mut R,
) -> std::result::Result<Rank2Decomp, TryFail> {
    let [na, nb, nc] = tensor.dims();
    let w1 = gaussian_unit(nc, rng);
    let w2 = gaussian_unit(nc, rng);
    let m1 = tensor.contract_mode_c(&w1);
    let m2 = tensor.contract_mode_c(&w2);

    // Shared rank-2 column space of the two contractions (and row space,
    // from the transposes).
    let mut stacked_cols = DMatrix::zeros(na, 2 * nb);
    stacked_cols.view_mut((0, 0), (na, nb)).copy_from(&m1);
    stacked_cols.view_mut((0, nb), (na, nb)).copy_from(&m2);
    let ua = top2_left_singular(&stacked_cols).map_err(TryFail::Structural)?;

    let mut stacked_rows = DMatrix::zeros(nb, 2 * na);
    stacked_rows
        .view_mut((0, 0), (nb, na))
        .copy_from(&m1.transpose());
    stacked_rows
        .view_mut((0, na), (nb, na))
        .copy_from(&m2.transpose());
    let ub = top2_left_singular(&stacked_rows).map_err(TryFail::Structural)?;

    // 2x2 reductions of the two contractions.
    let a1 = ua.transpose() * &m1 * &ub;
    let a2 = ua.transpose() * &m2 * &ub;
    let det2 = a2[(0, 0)] * a2[(1, 1)] - a2[(0, 1)] * a2[(1, 0)];
    let scale2 = a2.amax();
    if det2.abs() < 1e-12 * scale2 * scale2 {
        return Err(TryFail::Retry("singular second contraction".into()));
    }
    let a2_inv = [
        [a2[(1, 1)] / det2, -a2[(0, 1)] / det2],
        [-a2[(1, 0)] / det2, a2[(0, 0)] / det2],
    ];
    // G = A1 * A2^{-1}: the contracted pencil whose eigenvectors are the
    // mode-0 factors expressed in U_a coordinates.
    let mut g = [[0.0f64; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            g[r][c] = a1[(r, 0)] * a2_inv[0][c] + a1[(r, 1)] * a2_inv[1][c];
        }
    }
    let tr = g[0][0] + g[1][1];
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    let disc = tr * tr - 4.0 * det;
    if disc < 0.0 {
        // A genuinely complex pencil spectrum cannot come from two real
        // rank-1 terms; tolerate rounding-level excursions only.
        if (-disc).sqrt() > 0.1 * tr.abs().max(1e-300) {
            return Err(TryFail::Structural(
                "contracted pencil has complex eigenvalues".into(),
            ));
        }
    }
    let root = disc.max(0.0).sqrt();
    let lambdas = [(tr + root) / 2.0, (tr - root) / 2.0];

    // Mode-0 factors: eigenvectors lifted out of U_a coordinates.
    let mut a_factors: [DVector<f64>; 2] = [DVector::zeros(na), DVector::zeros(na)];
    for (r, &lam) in lambdas.iter().enumerate() {
        let v_row = [g[0][1], lam - g[0][0]];
        let v_col = [lam - g[1][1], g[1][0]];
        let pick = if v_row[0].abs() + v_row[1].abs() >= v_col[0].abs() + v_col[1].abs() {
            v_row
        } else {
            v_col
        };
        let norm = (pick[0] * pick[0] + pick[1] * pick[1]).sqrt();
        if norm < 1e-14 * tr.abs().max(1.0) {
            return Err(TryFail::Retry("defective contracted pencil".into()));
        }
        let v = [pick[0] / norm, pick[1] / norm];
        a_factors[r] = ua.column(0) * v[0] + ua.column(1) * v[1];
    }

    // Mode-1 factors by least squares: rows of pinv([a1 a2]) * M1 are the
    // mode-1 factors scaled by their contraction coefficients.
    let gram = [
        [
            a_factors[0].dot(&a_factors[0]),
            a_factors[0].dot(&a_factors[1]),
        ],
        [
            a_factors[1].dot(&a_factors[0]),
            a_factors[1].dot(&a_factors[1]),
        ],
    ];
    let gdet = gram[0][0] * gram[1][1] - gram[0][1] * gram[1][0];
    if gdet.abs() < 1e-20 {
        return Err(TryFail::Retry("parallel mode-0 factors".into()));
    }
    let ginv = [
        [gram[1][1] / gdet, -gram[0][1] / gdet],
        [-gram[1][0] / gdet, gram[0][0] / gdet],
    ];
    let mut b_factors: [DVector<f64>; 2] = [DVector::zeros(nb), DVector::zeros(nb)];
    for q in 0..nb {
        let col = m1.column(q);
        let rhs = [a_factors[0].dot(&col), a_factors[1].dot(&col)];
        for r in 0..2 {
            b_factors[r][q] = ginv[r][0] * rhs[0] + ginv[r][1] * rhs[1];
        }
    }
    for r in 0..2 {
        let norm = b_factors[r].norm();
        if norm < RANK_CUTOFF * m1.amax().max(1e-300) {
            return Err(TryFail::Retry("vanishing rank-1 coefficient".into()));
        }
        b_factors[r] /= norm;
    }

    // Mode-2 factors: per-slice least squares against the two unit rank-1
    // mats X_r = a_r b_r^T, whose Gram matrix is constant across slices.
    let x_gram = [
        [
            gram[0][0] * b_factors[0].dot(&b_factors[0]),
            gram[0][1] * b_factors[0].dot(&b_factors[1]),
        ],
        [
            gram[1][0] * b_factors[1].dot(&b_factors[0]),
            gram[1][1] * b_factors[1].dot(&b_factors[1]),
        ],
    ];
    let xdet = x_gram[0][0] * x_gram[1][1] - x_gram[0][1] * x_gram[1][0];
    if xdet.abs() < 1e-20 {
        return Err(TryFail::Structural(
            "rank-1 terms are indistinguishable".into(),
        ));
    }
    let xinv = [
        [x_gram[1][1] / xdet, -x_gram[0][1] / xdet],
        [-x_gram[1][0] / xdet, x_gram[0][0] / xdet],
    ];
    let mut c_factors: [DVector<f64>; 2] = [DVector::zeros(nc), DVector::zeros(nc)];
    for s in 0..nc {
        let mut rhs = [0.0f64; 2];
        for r in 0..2 {
            let mut acc = 0.0;
            for a in 0..na {
                for b in 0..nb {
                    acc += tensor.entry(a, b, s) * a_factors[r][a] * b_factors[r][b];
                }
            }
            rhs[r] = acc;
        }
        for r in 0..2 {
            c_factors[r][s] = xinv[r][0] * rhs[0] + xinv[r][1] * rhs[1];
        }
    }

    // Note: a_factors are unit, b_factors unit, c_factors carry magnitude.
    let mut factors: [[Vec<f64>; 2]; 3] = Default::default();
    for r in 0..2 {
        let mag = c_factors[r].norm();
        if mag < RANK_CUTOFF * tensor.fro_norm().max(1e-300) {
            return Err(TryFail::Retry("vanishing rank-1 term".into()));
        }
        let s = mag.cbrt();
        let mut fa: Vec<f64> = a_factors[r].iter().map(|v| v * s).collect();
        let mut fb: Vec<f64> = b_factors[r].iter().map(|v| v * s).collect();
        let mut fc: Vec<f64> = c_factors[r].iter().map(|v| v * s / mag).collect();
        flip_signs_for_nonnegative_sums(&mut fa, &mut fb, &mut fc);
        factors[0][r] = fa;
        factors[1][r] = fb;
        factors[2][r] = fc;
    }
    Ok(Rank2Decomp { factors })
}

/// First two left singular vectors of `m`, or the reason there is no second
/// direction (a structural rank deficiency).
fn top2_left_singular(m: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, String> {
    if m.nrows() < 2 {
        return Err("a part exposes a single row: no second direction".into());
    }
    let svd = m.clone().svd(true, false);
    let sv = &svd.singular_values;
    debug_assert!(sv.len() < 2 || sv[0] >= sv[1]);
    if sv.len() < 2 || sv[1] < RANK_CUTOFF * sv[0].max(1e-300) {
        return Err("contractions are rank deficient".into());
    }
    let u = svd.u.expect("left singular vectors requested");
    let mut out = DMatrix::zeros(m.nrows(), 2);
    out.column_mut(0).copy_from(&u.column(0));
    out.column_mut(1).copy_from(&u.column(1));
    Ok(out)
}

/// Flips factor signs in pairs (which preserves the outer product) towards
/// nonnegative entry sums. With a positive term all three sums end up
/// nonnegative; a negative product parity leaves the negativity on the
/// factor where it matters least.
fn flip_signs_for_nonnegative_sums(fa: &mut [f64], fb: &mut [f64], fc: &mut [f64]) {
    let sums = [
        fa.iter().sum::<f64>(),
        fb.iter().sum::<f64>(),
        fc.iter().sum::<f64>(),
    ];
    let mut negs: Vec<usize> = (0..3).filter(|&i| sums[i] < 0.0).collect();
    if negs.len() == 3 {
        // Flip the two most negative; the least negative remains.
        negs.sort_by(|&a, &b| sums[a].total_cmp(&sums[b]));
        negs.truncate(2);
    } else if negs.len() == 1 {
        let neg = negs[0];
        let partner = (0..3)
            .filter(|&i| i != neg)
            .min_by(|&a, &b| sums[a].abs().total_cmp(&sums[b].abs()))
            .unwrap();
        negs.push(partner);
    }
    if negs.len() == 2 {
        for &idx in &negs {
            let f: &mut [f64] = match idx {
                0 => fa,
                1 => fb,
                _ => fc,
            };
            for v in f.iter_mut() {
                *v = -*v;
            }
        }
    }
}

/// Standard normal draw via Box-Muller, kept local so contraction vectors
/// stay reproducible from the caller's stream alone.
fn gaussian_unit<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    let mut v = DVector::zeros(dim);
    loop {
        for i in 0..dim {
            let u1: f64 = rng.random::<f64>().max(1e-300);
            let u2: f64 = rng.random::<f64>();
            v[i] = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
        let norm = v.norm();
        if norm > 1e-12 {
            v /= norm;
            return v;
        }
    }
}
