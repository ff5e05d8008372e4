//! Mixed states and their factorizations.
//!
//! A purification of `ρ` with Schmidt rank `r` across Alice|Bob exists iff
//! there are matrices `A_x`, `B_y` with `r` columns such that
//!
//! ```text
//! ρ = Σ |x⟩⟨x'| ⊗ |y⟩⟨y'| · tr((A_{x'}† A_x)ᵀ (B_{y'}† B_y))
//! ```
//!
//! This module converts in both directions and bounds the correlation
//! complexity of general states from above.

use log::warn;
use serde::Serialize;

use crate::classical::{
    psd_rank_search, synth_from_psd, synthesized_purification, SolverConfig, Status,
};
use crate::error::{Error, Result};
use crate::linalg::{self, eigh, numerical_rank, svd, CMatrix, DensityMatrix, C64};
use crate::pure::ceil_log2;

/// Pure state on `(A, A₁ | B, B₁)`, amplitude index
/// `((x·aux_a + a)·dim_b + y)·aux_b + b`.
#[derive(Clone, Debug)]
pub struct Purification {
    amps: Vec<C64>,
    dim_a: usize,
    aux_a: usize,
    dim_b: usize,
    aux_b: usize,
}

/// Aux blocks of the coefficient-absorbed Schmidt vectors: `alice[x]` has
/// columns `v_x^i`, `bob[y]` has columns `w_y^i`.
#[derive(Clone, Debug)]
pub struct SchmidtBlocks {
    pub r: usize,
    pub alice: Vec<CMatrix>,
    pub bob: Vec<CMatrix>,
}

impl Purification {
    pub fn new(
        amps: Vec<C64>,
        dim_a: usize,
        aux_a: usize,
        dim_b: usize,
        aux_b: usize,
    ) -> Result<Self> {
        let d = dim_a * aux_a * dim_b * aux_b;
        if d == 0 || amps.len() != d {
            return Err(Error::invalid(format!(
                "{} amplitudes do not fit registers {dim_a}x{aux_a}x{dim_b}x{aux_b}",
                amps.len()
            )));
        }
        let n = linalg::norm(&amps);
        if (n - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized { norm: n });
        }
        Ok(Purification {
            amps,
            dim_a,
            aux_a,
            dim_b,
            aux_b,
        })
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    pub fn aux_a(&self) -> usize {
        self.aux_a
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn aux_b(&self) -> usize {
        self.aux_b
    }

    pub fn register_dims(&self) -> [usize; 4] {
        [self.dim_a, self.aux_a, self.dim_b, self.aux_b]
    }

    /// Amplitudes as a matrix with rows `(x, a)` and columns `(y, b)`.
    pub fn cut_matrix(&self) -> CMatrix {
        CMatrix::new(
            self.dim_a * self.aux_a,
            self.dim_b * self.aux_b,
            self.amps.clone(),
        )
        .expect("shape validated")
    }

    pub fn schmidt_rank(&self) -> usize {
        numerical_rank(&svd(&self.cut_matrix()).expect("finite").singulars).max(1)
    }

    /// Reduction to `A ⊗ B`.
    pub fn reduced_state(&self) -> Result<DensityMatrix> {
        let rho = linalg::partial_trace_pure(&self.amps, &self.register_dims(), &[0, 2])?;
        DensityMatrix::new(rho.hermitian_part(), self.dim_a, self.dim_b)
    }

    /// Computational-basis outcome probabilities of the reduction, row-major.
    pub fn outcome_probabilities(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.dim_a * self.dim_b];
        for x in 0..self.dim_a {
            for a in 0..self.aux_a {
                for y in 0..self.dim_b {
                    for b in 0..self.aux_b {
                        let idx = ((x * self.aux_a + a) * self.dim_b + y) * self.aux_b + b;
                        p[x * self.dim_b + y] += self.amps[idx].norm_sqr();
                    }
                }
            }
        }
        p
    }

    /// Schmidt decomposition across the cut with `√σ_i` absorbed into each
    /// side, sliced into per-outcome aux blocks.
    pub fn schmidt_blocks(&self) -> Result<SchmidtBlocks> {
        let dec = svd(&self.cut_matrix())?;
        let r = numerical_rank(&dec.singulars).max(1);
        let alice = (0..self.dim_a)
            .map(|x| {
                CMatrix::from_fn(self.aux_a, r, |a, i| {
                    dec.left[(x * self.aux_a + a, i)] * dec.singulars[i].sqrt()
                })
            })
            .collect();
        // ψ = Σ σ_i u_i ⊗ conj(v_i)
        let bob = (0..self.dim_b)
            .map(|y| {
                CMatrix::from_fn(self.aux_b, r, |b, i| {
                    dec.right[(y * self.aux_b + b, i)].conj() * dec.singulars[i].sqrt()
                })
            })
            .collect();
        Ok(SchmidtBlocks { r, alice, bob })
    }
}

/// Factor families `A_x` (`k_A x r`) and `B_y` (`k_B x r`).
#[derive(Clone, Debug)]
pub struct GeneralFactorization {
    pub r: usize,
    pub as_: Vec<CMatrix>,
    pub bs: Vec<CMatrix>,
}

impl GeneralFactorization {
    pub fn new(as_: Vec<CMatrix>, bs: Vec<CMatrix>) -> Result<Self> {
        let first_a = as_.first().ok_or_else(|| Error::invalid("no A factors"))?;
        let first_b = bs.first().ok_or_else(|| Error::invalid("no B factors"))?;
        let r = first_a.cols();
        if as_.iter().any(|a| a.shape() != first_a.shape()) {
            return Err(Error::invalid("A factors have different shapes"));
        }
        if bs.iter().any(|b| b.shape() != first_b.shape()) {
            return Err(Error::invalid("B factors have different shapes"));
        }
        if first_b.cols() != r {
            return Err(Error::invalid(format!(
                "A factors have {r} columns, B factors have {}",
                first_b.cols()
            )));
        }
        Ok(GeneralFactorization { r, as_, bs })
    }

    pub fn dim_a(&self) -> usize {
        self.as_.len()
    }

    pub fn dim_b(&self) -> usize {
        self.bs.len()
    }

    pub fn aux_a(&self) -> usize {
        self.as_[0].rows()
    }

    pub fn aux_b(&self) -> usize {
        self.bs[0].rows()
    }

    /// `Σ_{x,y} tr((A_x†A_x)ᵀ (B_y†B_y))`, the squared norm of the assembled
    /// purification.
    pub fn norm_sum(&self) -> f64 {
        let ga: Vec<CMatrix> = self.as_.iter().map(|a| a.adjoint().matmul(a)).collect();
        let gb: Vec<CMatrix> = self.bs.iter().map(|b| b.adjoint().matmul(b)).collect();
        let mut acc = 0.0;
        for a in &ga {
            for b in &gb {
                acc += a.transpose().matmul(b).trace().re;
            }
        }
        acc
    }

    /// `Σ_i (Σ_x |x⟩|v_x^i⟩) ⊗ (Σ_y |y⟩|w_y^i⟩)`, unnormalized, in the
    /// [`Purification`] layout.
    pub fn assemble_amplitudes(&self) -> Vec<C64> {
        let (da, ka, db, kb) = (self.dim_a(), self.aux_a(), self.dim_b(), self.aux_b());
        let mut amps = vec![C64::new(0.0, 0.0); da * ka * db * kb];
        for x in 0..da {
            for a in 0..ka {
                for y in 0..db {
                    for b in 0..kb {
                        let mut z = C64::new(0.0, 0.0);
                        for i in 0..self.r {
                            z += self.as_[x][(a, i)] * self.bs[y][(b, i)];
                        }
                        amps[((x * ka + a) * db + y) * kb + b] = z;
                    }
                }
            }
        }
        amps
    }

    pub fn assemble_purification(&self) -> Result<Purification> {
        let mut amps = self.assemble_amplitudes();
        let n = linalg::norm(&amps);
        if !(n > 0.0) {
            return Err(Error::invalid("factorization assembles to the zero vector"));
        }
        amps.iter_mut().for_each(|z| *z /= n);
        Purification::new(amps, self.dim_a(), self.aux_a(), self.dim_b(), self.aux_b())
    }
}

/// `ρ = Σ|x⟩⟨x'| ⊗ |y⟩⟨y'| · tr((A_{x'}†A_x)ᵀ(B_{y'}†B_y))` without
/// normalization.
pub fn reconstruct_raw(f: &GeneralFactorization) -> CMatrix {
    let (da, db) = (f.dim_a(), f.dim_b());
    let d = da * db;
    let mut rho = CMatrix::zeros(d, d);
    for x in 0..da {
        for xp in 0..da {
            let ma = f.as_[xp].adjoint().matmul(&f.as_[x]).transpose();
            for y in 0..db {
                for yp in 0..db {
                    let mb = f.bs[yp].adjoint().matmul(&f.bs[y]);
                    rho[(x * db + y, xp * db + yp)] = ma.matmul(&mb).trace();
                }
            }
        }
    }
    rho
}

/// Density matrix of a factorization. Unnormalized inputs are rescaled to
/// unit trace with a warning.
pub fn reconstruct_from_factors(f: &GeneralFactorization) -> Result<DensityMatrix> {
    let raw = reconstruct_raw(f);
    let tr = raw.trace().re;
    if !(tr > 0.0) {
        return Err(Error::invalid("factorization has zero norm"));
    }
    if (tr - 1.0).abs() > 1e-8 {
        warn!("factorization has trace {tr}; renormalizing");
    }
    DensityMatrix::new(raw.scale(1.0 / tr).hermitian_part(), f.dim_a(), f.dim_b())
}

/// Factors from the aux blocks of the coefficient-absorbed Schmidt vectors.
pub fn factor_from_purification(p: &Purification) -> Result<GeneralFactorization> {
    let blocks = p.schmidt_blocks()?;
    GeneralFactorization::new(blocks.alice, blocks.bob)
}

/// `Σ_k √λ_k |e_k⟩ ⊗ |k⟩` from the spectrum of `rho`, with the whole
/// purifying register on Alice's side.
pub fn canonical_purification(rho: &DensityMatrix) -> Result<Purification> {
    let (values, vectors) = eigh(rho.matrix())?;
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    let kept: Vec<usize> = (0..values.len())
        .filter(|&k| values[k] > 1e-14 * top.max(1.0))
        .collect();
    if kept.is_empty() {
        return Err(Error::invalid("density matrix has no positive eigenvalues"));
    }
    let (da, db, aux) = (rho.dim_a(), rho.dim_b(), kept.len());
    let mut amps = vec![C64::new(0.0, 0.0); da * aux * db];
    for (slot, &k) in kept.iter().enumerate() {
        let s = values[k].sqrt();
        for x in 0..da {
            for y in 0..db {
                amps[(x * aux + slot) * db + y] = vectors[(x * db + y, k)] * s;
            }
        }
    }
    let n = linalg::norm(&amps);
    amps.iter_mut().for_each(|z| *z /= n);
    Purification::new(amps, da, aux, db, 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundRoute {
    CanonicalPurification,
    PsdRank,
}

#[derive(Clone, Debug)]
pub struct QBound {
    pub qubits: u32,
    pub witness: Purification,
    pub route: BoundRoute,
    /// True when the bound is known to equal the correlation complexity.
    pub exact: bool,
}

/// Upper bound on the correlation complexity from a purification's Schmidt
/// rank. Classical inputs are also run through psd-rank search; the smaller
/// bound wins.
pub fn q_upper_bound(rho: &DensityMatrix, cfg: &SolverConfig) -> Result<QBound> {
    let canonical = canonical_purification(rho)?;
    let mut best = QBound {
        qubits: ceil_log2(canonical.schmidt_rank()),
        exact: canonical.aux_a() == 1 && canonical.aux_b() == 1,
        witness: canonical,
        route: BoundRoute::CanonicalPurification,
    };
    if !best.exact && rho.is_classical(1e-10) {
        let p = crate::classical::DistMatrix::from_rows(
            rho.dim_a(),
            rho.dim_b(),
            &rho.diagonal(),
            true,
        )?;
        let report = psd_rank_search(&p, cfg)?;
        let witness = report
            .witness
            .as_ref()
            .expect("search always attaches a witness");
        let state = synth_from_psd(&p, witness)?;
        let qubits = report.complexity();
        let exact = report.status == Status::Certified;
        if qubits < best.qubits || (qubits == best.qubits && exact) {
            best = QBound {
                qubits,
                witness: synthesized_purification(&state)?,
                route: BoundRoute::PsdRank,
                exact,
            };
        }
    }
    Ok(best)
}
