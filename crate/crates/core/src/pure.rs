//! Pure bipartite states: Schmidt decomposition, approximate Schmidt rank
//! and the approximate correlation complexity.
//!
//! For a pure target `|ψ⟩` with amplitude matrix `A`, the minimum seed size
//! needed to produce a state of fidelity at least `1 - ε` is
//! `⌈log₂ srank_ε(ψ)⌉`, and `srank_ε(ψ) = rank_{2ε-ε²}(A)`. Both routes are
//! exposed so they can be checked against each other.

use crate::error::{Error, Result};
use crate::linalg::{self, numerical_rank, svd, CMatrix, DensityMatrix, C64};
use crate::sim::ProtocolSpec;

/// Additive slack on cumulative-mass thresholds, resolving ties toward the
/// smaller rank.
pub const MASS_SLACK: f64 = 1e-12;
pub const NORM_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    dim_a: usize,
    dim_b: usize,
    amps: Vec<C64>,
}

impl PureState {
    pub fn new(dim_a: usize, dim_b: usize, amps: Vec<C64>) -> Result<Self> {
        if dim_a == 0 || dim_b == 0 || amps.len() != dim_a * dim_b {
            return Err(Error::invalid(format!(
                "{} amplitudes do not fit dims {dim_a}x{dim_b}",
                amps.len()
            )));
        }
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("non-finite amplitude"));
        }
        let n = linalg::norm(&amps);
        if (n - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm: n });
        }
        Ok(PureState { dim_a, dim_b, amps })
    }

    /// Normalizes before validating. Fails only on a zero or non-finite vector.
    pub fn normalized(dim_a: usize, dim_b: usize, amps: Vec<C64>) -> Result<Self> {
        let n = linalg::norm(&amps);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::invalid("cannot normalize a zero vector"));
        }
        Self::new(dim_a, dim_b, amps.into_iter().map(|z| z / n).collect())
    }

    /// State whose amplitude matrix is `a` (rows index Alice, columns Bob).
    pub fn from_amplitude_matrix(a: &CMatrix) -> Result<Self> {
        Self::new(a.rows(), a.cols(), a.data().to_vec())
    }

    pub fn product(alice: &[C64], bob: &[C64]) -> Result<Self> {
        let amps = alice
            .iter()
            .flat_map(|a| bob.iter().map(move |b| a * b))
            .collect();
        Self::new(alice.len(), bob.len(), amps)
    }

    /// `ψ ⊗ θ` regrouped so that Alice holds `(A, A₁)` and Bob `(B, B₁)`.
    pub fn tensor(&self, other: &PureState) -> PureState {
        let (da, db) = (self.dim_a, self.dim_b);
        let (ea, eb) = (other.dim_a, other.dim_b);
        let mut amps = vec![C64::new(0.0, 0.0); da * db * ea * eb];
        for x in 0..da {
            for y in 0..db {
                let s = self.amps[x * db + y];
                for u in 0..ea {
                    for v in 0..eb {
                        let row = x * ea + u;
                        let col = y * eb + v;
                        amps[row * (db * eb) + col] = s * other.amps[u * eb + v];
                    }
                }
            }
        }
        PureState {
            dim_a: da * ea,
            dim_b: db * eb,
            amps,
        }
    }

    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn overlap(&self, other: &PureState) -> C64 {
        linalg::inner(&self.amps, &other.amps)
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix::from_pure(&self.amps, self.dim_a, self.dim_b)
            .expect("normalized pure state is a valid density matrix")
    }
}

/// Amplitude matrix `A(x, y) = ⟨x, y|ψ⟩`.
pub fn vec_inv(psi: &PureState) -> CMatrix {
    CMatrix::new(psi.dim_a, psi.dim_b, psi.amps.clone()).expect("validated state")
}

/// Schmidt coefficients `p_i` (descending, summing to one) with orthonormal
/// left and right vector families.
#[derive(Clone, Debug)]
pub struct SchmidtForm {
    pub coeffs: Vec<f64>,
    pub left: CMatrix,
    pub right: CMatrix,
}

impl SchmidtForm {
    pub fn rank(&self) -> usize {
        self.coeffs.len()
    }

    /// `Σ_{i<k} √p_i |v_i⟩⊗|w_i⟩`, unnormalized.
    pub fn partial_sum(&self, k: usize) -> Vec<C64> {
        let (da, db) = (self.left.rows(), self.right.rows());
        let mut amps = vec![C64::new(0.0, 0.0); da * db];
        for i in 0..k.min(self.rank()) {
            let s = self.coeffs[i].sqrt();
            for x in 0..da {
                let vx = self.left[(x, i)] * s;
                for y in 0..db {
                    amps[x * db + y] += vx * self.right[(y, i)];
                }
            }
        }
        amps
    }

    pub fn reassemble(&self) -> Vec<C64> {
        self.partial_sum(self.rank())
    }
}

/// Schmidt decomposition from the SVD of the amplitude matrix.
///
/// Each left vector is rotated so that its largest-magnitude entry is real
/// positive, with the conjugate phase moved onto the right vector.
pub fn schmidt_decompose(psi: &PureState) -> SchmidtForm {
    let dec = svd(&vec_inv(psi)).expect("validated state is finite");
    let r = numerical_rank(&dec.singulars).max(1);
    let mut left = dec.left.leading_columns(r);
    // ψ(x,y) = Σ σ_i U(x,i) conj(V(y,i))
    let mut right = dec.right.leading_columns(r).conj();
    for i in 0..r {
        let col = left.column(i);
        let mut best = 0;
        for (k, z) in col.iter().enumerate() {
            if z.norm() > col[best].norm() + 1e-14 {
                best = k;
            }
        }
        let pivot = col[best];
        if pivot.norm() == 0.0 {
            continue;
        }
        let phase = pivot / pivot.norm();
        for x in 0..left.rows() {
            left[(x, i)] *= phase.conj();
        }
        for y in 0..right.rows() {
            right[(y, i)] *= phase;
        }
    }
    let coeffs = dec.singulars[..r].iter().map(|s| s * s).collect();
    SchmidtForm {
        coeffs,
        left,
        right,
    }
}

/// Smallest `k` such that the `k` largest weights carry at least
/// `target` of the mass (with slack). A target of 1 or more asks for the full
/// numerical support.
fn cumulative_rank(weights: &[f64], target: f64, support: usize) -> usize {
    if target <= 0.0 {
        return 0;
    }
    if target >= 1.0 {
        return support;
    }
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if acc >= target - MASS_SLACK {
            return k + 1;
        }
    }
    weights.len()
}

/// Minimum rank of a matrix within squared Frobenius distance `eps` of the
/// unit-norm matrix `a` (truncated SVD is optimal).
pub fn rank_eps(a: &CMatrix, eps: f64) -> Result<usize> {
    let n = a.frobenius_norm();
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized { norm: n });
    }
    check_eps(eps)?;
    let dec = svd(a)?;
    let sq: Vec<f64> = dec.singulars.iter().map(|s| s * s).collect();
    Ok(cumulative_rank(
        &sq,
        1.0 - eps,
        numerical_rank(&dec.singulars),
    ))
}

/// Minimum Schmidt rank among pure states with fidelity at least `1 - eps`
/// to `psi`.
pub fn srank_eps(psi: &PureState, eps: f64) -> Result<usize> {
    check_eps(eps)?;
    let dec = svd(&vec_inv(psi))?;
    let p: Vec<f64> = dec.singulars.iter().map(|s| s * s).collect();
    let target = (1.0 - eps).max(0.0).powi(2);
    Ok(cumulative_rank(&p, target, numerical_rank(&dec.singulars)))
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::invalid(format!(
            "eps must be a finite nonnegative number, got {eps}"
        )));
    }
    Ok(())
}

/// `⌈log₂ n⌉`, with `0` and `1` both mapping to zero qubits.
pub fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// Approximate correlation complexity in qubits.
pub fn q_eps(psi: &PureState, eps: f64) -> Result<u32> {
    Ok(ceil_log2(srank_eps(psi, eps)?))
}

#[derive(Clone, Debug)]
pub struct Approximant {
    pub state: PureState,
    /// `|⟨ψ|φ⟩|`.
    pub fidelity: f64,
    /// Number of retained Schmidt terms.
    pub rank: usize,
}

/// Optimal Schmidt-truncated approximant achieving fidelity `1 - eps`.
///
/// For `eps >= 1` the approximate rank is zero; the leading product term is
/// returned so that the result is still a state.
pub fn build_approximant(psi: &PureState, eps: f64) -> Result<Approximant> {
    let rank = srank_eps(psi, eps)?;
    let form = schmidt_decompose(psi);
    let keep = rank.clamp(1, form.rank());
    let amps = form.partial_sum(keep);
    let state = PureState::normalized(psi.dim_a, psi.dim_b, amps)?;
    let fidelity = psi.overlap(&state).norm();
    Ok(Approximant {
        state,
        fidelity,
        rank,
    })
}

/// Seed-plus-local-isometry protocol producing the optimal approximant.
pub fn synth_pure_protocol(psi: &PureState, eps: f64) -> Result<ProtocolSpec> {
    let rank = srank_eps(psi, eps)?;
    let form = schmidt_decompose(psi);
    let keep = rank.clamp(1, form.rank());
    let mass: f64 = form.coeffs[..keep].iter().sum();
    let weights: Vec<f64> = form.coeffs[..keep].iter().map(|p| p / mass).collect();
    ProtocolSpec::from_schmidt_terms(
        &weights,
        &form.left.leading_columns(keep),
        &form.right.leading_columns(keep),
        (psi.dim_a, 1),
        (psi.dim_b, 1),
        psi.density(),
        eps,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_unit_vector, rng};

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn epr() -> PureState {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        PureState::new(2, 2, vec![c(h), c(0.0), c(0.0), c(h)]).unwrap()
    }

    fn skewed() -> PureState {
        PureState::new(
            2,
            2,
            vec![c(0.9f64.sqrt()), c(0.0), c(0.0), c(0.1f64.sqrt())],
        )
        .unwrap()
    }

    fn uniform4() -> PureState {
        let mut amps = vec![c(0.0); 16];
        for i in 0..4 {
            amps[i * 4 + i] = c(0.5);
        }
        PureState::new(4, 4, amps).unwrap()
    }

    fn random_state(seed: u64, da: usize, db: usize) -> PureState {
        let mut r = rng(seed);
        PureState::new(da, db, random_unit_vector(&mut r, da * db)).unwrap()
    }

    #[test]
    fn rejects_unnormalized() {
        let e = PureState::new(1, 2, vec![c(1.0), c(1.0)]).unwrap_err();
        assert!(matches!(e, Error::NotNormalized { .. }));
    }

    #[test]
    fn vec_inv_examples() {
        let s = PureState::new(2, 2, vec![c(1.0), c(0.0), c(0.0), c(0.0)]).unwrap();
        assert_eq!(vec_inv(&s), CMatrix::diag_real(&[1.0, 0.0]));

        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(vec_inv(&epr()).max_abs_diff(&CMatrix::identity(2).scale(h)) < 1e-15);

        let singlet = PureState::new(2, 2, vec![c(0.0), c(h), c(-h), c(0.0)]).unwrap();
        let expect = CMatrix::from_real(2, 2, &[0.0, h, -h, 0.0]).unwrap();
        assert!(vec_inv(&singlet).max_abs_diff(&expect) < 1e-15);
        assert!((vec_inv(&singlet).frobenius_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn schmidt_examples() {
        let s = PureState::new(2, 2, vec![c(1.0), c(0.0), c(0.0), c(0.0)]).unwrap();
        let f = schmidt_decompose(&s);
        assert_eq!(f.rank(), 1);
        assert!((f.coeffs[0] - 1.0).abs() < 1e-12);

        let f = schmidt_decompose(&epr());
        assert_eq!(f.rank(), 2);
        assert!(f.coeffs.iter().all(|p| (p - 0.5).abs() < 1e-12));
    }

    #[test]
    fn schmidt_matches_characteristic_polynomial() {
        // A = [[√.5, 0], [√.3, √.2]]; eigenvalues of A†A from the 2x2
        // characteristic polynomial: λ² - tr·λ + det = 0.
        let a = [0.5f64.sqrt(), 0.0, 0.3f64.sqrt(), 0.2f64.sqrt()];
        let psi = PureState::new(2, 2, a.iter().map(|&x| c(x)).collect()).unwrap();
        let tr = 1.0;
        let det = (a[0] * a[3] - a[1] * a[2]).powi(2);
        let disc = (tr * tr - 4.0 * det).sqrt();
        let expect = [(tr + disc) / 2.0, (tr - disc) / 2.0];
        let f = schmidt_decompose(&psi);
        assert!((f.coeffs[0] - expect[0]).abs() < 1e-12);
        assert!((f.coeffs[1] - expect[1]).abs() < 1e-12);
        assert!((f.coeffs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn schmidt_invariants_random() {
        for seed in 0..20 {
            let psi = random_state(seed, 3, 5);
            let f = schmidt_decompose(&psi);
            let r = f.rank();
            assert!(
                f.left
                    .adjoint()
                    .matmul(&f.left)
                    .max_abs_diff(&CMatrix::identity(r))
                    < 1e-10
            );
            assert!(
                f.right
                    .adjoint()
                    .matmul(&f.right)
                    .max_abs_diff(&CMatrix::identity(r))
                    < 1e-10
            );
            let back = f.reassemble();
            let err = back
                .iter()
                .zip(psi.amps())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-9, "{err}");
            for i in 0..r {
                let col = f.left.column(i);
                let big = col
                    .iter()
                    .copied()
                    .max_by(|a, b| a.norm().total_cmp(&b.norm()))
                    .unwrap();
                assert!(big.im.abs() < 1e-12 && big.re > 0.0);
            }
        }
    }

    #[test]
    fn rank_eps_examples() {
        let a = CMatrix::diag_real(&[0.9f64.sqrt(), 0.1f64.sqrt()]);
        assert_eq!(rank_eps(&a, 0.05).unwrap(), 2);
        assert_eq!(rank_eps(&a, 0.10).unwrap(), 1);
        assert_eq!(rank_eps(&a, 1.0).unwrap(), 0);
        assert!(matches!(
            rank_eps(&CMatrix::identity(2), 0.1),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn srank_eps_examples() {
        assert_eq!(srank_eps(&uniform4(), 0.14).unwrap(), 3);
        assert_eq!(srank_eps(&skewed(), 0.06).unwrap(), 1);
        assert_eq!(srank_eps(&epr(), 0.0).unwrap(), 2);
        assert_eq!(srank_eps(&random_state(1, 3, 4), 0.0).unwrap(), 3);
        assert_eq!(srank_eps(&epr(), 1.0).unwrap(), 0);
        assert!(srank_eps(&epr(), -0.1).is_err());
    }

    #[test]
    fn q_eps_examples() {
        assert_eq!(q_eps(&epr(), 0.0).unwrap(), 1);
        assert_eq!(q_eps(&skewed(), 0.06).unwrap(), 0);
        let prod = PureState::product(&[c(0.6), c(0.8)], &[c(0.0), c(1.0)]).unwrap();
        for eps in [0.0, 0.1, 0.5, 1.0] {
            assert_eq!(q_eps(&prod, eps).unwrap(), 0);
        }
    }

    #[test]
    fn ceil_log2_values() {
        let got: Vec<u32> = (0..10).map(ceil_log2).collect();
        assert_eq!(got, vec![0, 0, 1, 2, 2, 3, 3, 3, 3, 4]);
    }

    #[test]
    fn approximant_examples() {
        let psi = random_state(9, 3, 3);
        let ap = build_approximant(&psi, 0.0).unwrap();
        assert!((ap.fidelity - 1.0).abs() < 1e-12);

        let ap = build_approximant(&skewed(), 0.06).unwrap();
        assert_eq!(ap.rank, 1);
        assert!((ap.fidelity - 0.9f64.sqrt()).abs() < 1e-9);
        assert!((ap.state.amps()[0].norm() - 1.0).abs() < 1e-12);

        let ap = build_approximant(&uniform4(), 0.14).unwrap();
        assert!((ap.fidelity - 0.75f64.sqrt()).abs() < 1e-9);
        assert_eq!(srank_eps(&ap.state, 0.0).unwrap(), 3);
    }

    #[test]
    fn srank_non_increasing_in_eps() {
        let grid = [0.0, 0.01, 0.05, 0.1, 0.2, 0.5, 0.9, 1.0];
        for seed in 0..10 {
            let psi = random_state(100 + seed, 4, 4);
            let ranks: Vec<usize> = grid.iter().map(|&e| srank_eps(&psi, e).unwrap()).collect();
            assert!(ranks.windows(2).all(|w| w[0] >= w[1]), "{ranks:?}");
        }
    }

    #[test]
    fn tensor_keeps_cut() {
        let t = epr().tensor(&epr());
        assert_eq!((t.dim_a(), t.dim_b()), (4, 4));
        assert_eq!(srank_eps(&t, 0.0).unwrap(), 4);
    }
}
