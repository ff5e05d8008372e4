//! Dense simulation of state-generation protocols.
//!
//! A protocol is a shared seed state followed by one local channel per party.
//! Everything is computed exactly: output states are full density matrices and
//! measured distributions are the Born-rule diagonal.

use serde::Serialize;

use crate::classical::DistMatrix;
use crate::error::{Error, Result};
use crate::general::{canonical_purification, Purification};
use crate::linalg::{self, fidelity, numerical_rank, svd, CMatrix, DensityMatrix, C64};
use crate::pure::ceil_log2;

pub const TRACE_TOL: f64 = 1e-9;
/// Slack on the fidelity threshold in [`verify_generation`].
pub const FIDELITY_SLACK: f64 = 1e-9;

/// Completely positive trace-preserving map in Kraus form.
#[derive(Clone, Debug)]
pub struct LocalChannel {
    kraus: Vec<CMatrix>,
}

impl LocalChannel {
    pub fn new(kraus: Vec<CMatrix>) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or_else(|| Error::invalid("channel needs at least one Kraus operator"))?;
        let shape = first.shape();
        if kraus.iter().any(|k| k.shape() != shape) {
            return Err(Error::invalid("Kraus operators have different shapes"));
        }
        let mut sum = CMatrix::zeros(shape.1, shape.1);
        for k in &kraus {
            sum = sum.add(&k.adjoint().matmul(k));
        }
        let defect = sum.max_abs_diff(&CMatrix::identity(shape.1));
        if defect > TRACE_TOL {
            return Err(Error::invalid(format!(
                "channel is not trace preserving (defect {defect:e})"
            )));
        }
        Ok(LocalChannel { kraus })
    }

    pub fn identity(dim: usize) -> Self {
        LocalChannel {
            kraus: vec![CMatrix::identity(dim)],
        }
    }

    pub fn isometry(v: CMatrix) -> Result<Self> {
        Self::new(vec![v])
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    pub fn in_dim(&self) -> usize {
        self.kraus[0].cols()
    }

    pub fn out_dim(&self) -> usize {
        self.kraus[0].rows()
    }

    /// `ρ ↦ Σ K ρ K†` on a single system.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.out_dim(), self.out_dim());
        for k in &self.kraus {
            out = out.add(&k.matmul(rho).matmul(&k.adjoint()));
        }
        out
    }
}

/// Shared resource state.
#[derive(Clone, Debug)]
pub enum Seed {
    Pure {
        dim_a: usize,
        dim_b: usize,
        amps: Vec<C64>,
    },
    Mixed(DensityMatrix),
}

impl Seed {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Seed::Pure { dim_a, dim_b, .. } => (*dim_a, *dim_b),
            Seed::Mixed(rho) => (rho.dim_a(), rho.dim_b()),
        }
    }

    /// Amplitudes on `(A, aux) ⊗ B` with the aux dimension. Pure seeds have
    /// a trivial aux register.
    fn purified(&self) -> Result<(Vec<C64>, usize)> {
        match self {
            Seed::Pure { amps, .. } => Ok((amps.clone(), 1)),
            Seed::Mixed(rho) => {
                let p = canonical_purification(rho)?;
                Ok((p.amps().to_vec(), p.aux_a()))
            }
        }
    }

    /// Schmidt rank across Alice|Bob for pure seeds; for mixed seeds the
    /// Schmidt rank of the canonical purification.
    pub fn schmidt_rank(&self) -> Result<usize> {
        let (amps, aux) = self.purified()?;
        let (da, db) = self.dims();
        let m = CMatrix::new(da * aux, db, amps)?;
        Ok(numerical_rank(&svd(&m)?.singulars).max(1))
    }
}

/// Seed, local channels, and the claim being made about them.
#[derive(Clone, Debug)]
pub struct ProtocolSpec {
    pub seed: Seed,
    pub seed_size_qubits: u32,
    pub alice: LocalChannel,
    pub bob: LocalChannel,
    pub target: DensityMatrix,
    pub eps: f64,
}

impl ProtocolSpec {
    /// Validates dimensions and the declared seed size.
    pub fn new(
        seed: Seed,
        seed_size_qubits: u32,
        alice: LocalChannel,
        bob: LocalChannel,
        target: DensityMatrix,
        eps: f64,
    ) -> Result<Self> {
        let spec = ProtocolSpec {
            seed,
            seed_size_qubits,
            alice,
            bob,
            target,
            eps,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let (da, db) = self.seed.dims();
        if self.alice.in_dim() != da || self.bob.in_dim() != db {
            return Err(Error::invalid(format!(
                "channel inputs {}x{} do not match seed dims {da}x{db}",
                self.alice.in_dim(),
                self.bob.in_dim()
            )));
        }
        if self.alice.out_dim() != self.target.dim_a() || self.bob.out_dim() != self.target.dim_b()
        {
            return Err(Error::invalid(format!(
                "channel outputs {}x{} do not match target dims {}x{}",
                self.alice.out_dim(),
                self.bob.out_dim(),
                self.target.dim_a(),
                self.target.dim_b()
            )));
        }
        if let Seed::Pure { amps, .. } = &self.seed {
            let n = linalg::norm(amps);
            if (n - 1.0).abs() > 1e-9 {
                return Err(Error::NotNormalized { norm: n });
            }
        }
        let expected = ceil_log2(self.seed.schmidt_rank()?);
        if expected != self.seed_size_qubits {
            return Err(Error::invalid(format!(
                "declared seed size {} qubits, seed structure needs {expected}",
                self.seed_size_qubits
            )));
        }
        Ok(())
    }

    /// Protocol that shares `Σ √w_i |i⟩|i⟩` (padded to a power of two per
    /// side) and maps `|i⟩` to the given vector families.
    ///
    /// `left` has one column per term on Alice's full space of dimension
    /// `alice.0 · alice.1`; the second factor is an aux register discarded
    /// after the local map. Same for `right` and Bob.
    pub fn from_schmidt_terms(
        weights: &[f64],
        left: &CMatrix,
        right: &CMatrix,
        alice: (usize, usize),
        bob: (usize, usize),
        target: DensityMatrix,
        eps: f64,
    ) -> Result<Self> {
        let r = weights.len();
        if r == 0 || left.cols() != r || right.cols() != r {
            return Err(Error::invalid("term count does not match vector families"));
        }
        if left.rows() != alice.0 * alice.1 || right.rows() != bob.0 * bob.1 {
            return Err(Error::invalid("vector families do not match register dims"));
        }
        let qubits = ceil_log2(r);
        let side = 1usize << qubits;
        let mut amps = vec![C64::new(0.0, 0.0); side * side];
        for (i, w) in weights.iter().enumerate() {
            amps[i * side + i] = C64::new(w.max(0.0).sqrt(), 0.0);
        }
        let norm = linalg::norm(&amps);
        amps.iter_mut().for_each(|z| *z /= norm);
        let seed = Seed::Pure {
            dim_a: side,
            dim_b: side,
            amps,
        };
        let alice = embed_then_discard(left, side, alice.0, alice.1)?;
        let bob = embed_then_discard(right, side, bob.0, bob.1)?;
        ProtocolSpec::new(seed, qubits, alice, bob, target, eps)
    }
}

/// Extends the orthonormal columns of `v` with standard basis vectors until
/// there are `want` columns (or the space is exhausted).
fn complete_orthonormal(v: &CMatrix, want: usize) -> CMatrix {
    let d = v.rows();
    let mut cols: Vec<Vec<C64>> = (0..v.cols()).map(|j| v.column(j)).collect();
    let mut e = 0;
    while cols.len() < want.min(d) && e < d {
        let mut cand = vec![C64::new(0.0, 0.0); d];
        cand[e] = C64::new(1.0, 0.0);
        e += 1;
        // two passes of Gram-Schmidt
        for _ in 0..2 {
            for c in &cols {
                let proj = linalg::inner(c, &cand);
                for (x, y) in cand.iter_mut().zip(c) {
                    *x -= proj * y;
                }
            }
        }
        let n = linalg::norm(&cand);
        if n > 1e-6 {
            cols.push(cand.into_iter().map(|z| z / n).collect());
        }
    }
    let mut out = CMatrix::zeros(d, cols.len());
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

/// Channel from a `side`-dimensional seed register: `|i⟩ ↦ v_i` on
/// `keep ⊗ aux`, then trace out `aux`. Inputs beyond the target dimension
/// are sent to the first vector so the map stays trace preserving.
fn embed_then_discard(v: &CMatrix, side: usize, keep: usize, aux: usize) -> Result<LocalChannel> {
    let full = keep * aux;
    let basis = complete_orthonormal(v, side);
    let mapped = basis.cols();
    let mut maps = vec![CMatrix::zeros(full, side)];
    for j in 0..mapped {
        maps[0].set_column(j, &basis.column(j));
    }
    // one operator per overflow input keeps Σ K†K = I
    for j in mapped..side {
        let mut overflow = CMatrix::zeros(full, side);
        overflow.set_column(j, &basis.column(0));
        maps.push(overflow);
    }
    let mut kraus = Vec::with_capacity(maps.len() * aux);
    for m in &maps {
        for k in 0..aux {
            kraus.push(CMatrix::from_fn(keep, side, |x, j| m[(x * aux + k, j)]));
        }
    }
    LocalChannel::new(kraus)
}

/// `(Φ_A ⊗ Φ_B)(seed)` as a density matrix on the target's dimensions.
pub fn apply_protocol(spec: &ProtocolSpec) -> Result<DensityMatrix> {
    spec.validate()?;
    let (da, db) = spec.seed.dims();
    let (amps, aux) = spec.seed.purified()?;
    let (oa, ob) = (spec.alice.out_dim(), spec.bob.out_dim());
    let mut rho = CMatrix::zeros(oa * ob, oa * ob);
    for k in 0..aux {
        // slice of the seed with the aux register fixed to k
        let block = CMatrix::from_fn(da, db, |x, y| amps[(x * aux + k) * db + y]);
        for ka in spec.alice.kraus() {
            let left = ka.matmul(&block);
            for kb in spec.bob.kraus() {
                let out = left.matmul(&kb.transpose());
                let v = out.data();
                for i in 0..v.len() {
                    if v[i] == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for j in 0..v.len() {
                        rho[(i, j)] += v[i] * v[j].conj();
                    }
                }
            }
        }
    }
    let tr = rho.trace().re;
    if (tr - 1.0).abs() > TRACE_TOL {
        return Err(Error::invalid(format!("protocol output has trace {tr}")));
    }
    DensityMatrix::new(rho.hermitian_part(), oa, ob)
}

/// Computational-basis outcome distribution `P(x, y) = ⟨x,y|ρ|x,y⟩`.
pub fn measure_computational(rho: &DensityMatrix) -> Result<DistMatrix> {
    let diag = rho.diagonal();
    DistMatrix::from_rows(rho.dim_a(), rho.dim_b(), &diag, false)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Alice,
    Bob,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Alice => Side::Bob,
            Side::Bob => Side::Alice,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct Register {
    pub name: String,
    pub dim: usize,
    pub side: Side,
}

/// Pure state on an ordered register list, amplitudes row-major in
/// register order.
#[derive(Clone, Debug)]
pub struct RegisterState {
    pub amps: Vec<C64>,
    pub registers: Vec<Register>,
}

impl RegisterState {
    pub fn new(amps: Vec<C64>, registers: Vec<Register>) -> Result<Self> {
        let dim: usize = registers.iter().map(|r| r.dim).product();
        if registers.is_empty() || dim != amps.len() {
            return Err(Error::invalid(format!(
                "register dims multiply to {dim}, state has {} amplitudes",
                amps.len()
            )));
        }
        Ok(RegisterState { amps, registers })
    }

    pub fn dims(&self) -> Vec<usize> {
        self.registers.iter().map(|r| r.dim).collect()
    }

    pub fn side_registers(&self, side: Side) -> Vec<usize> {
        (0..self.registers.len())
            .filter(|&k| self.registers[k].side == side)
            .collect()
    }

    /// Amplitude matrix with Alice's registers as rows and Bob's as columns.
    pub fn cut_matrix(&self) -> Result<CMatrix> {
        let alice = self.side_registers(Side::Alice);
        let dims = self.dims();
        if alice.is_empty() {
            return CMatrix::new(1, self.amps.len(), self.amps.clone());
        }
        linalg::regroup_pure(&self.amps, &dims, &alice)
    }

    /// Schmidt rank across the Alice|Bob cut.
    pub fn schmidt_rank(&self) -> Result<usize> {
        Ok(numerical_rank(&svd(&self.cut_matrix()?)?.singulars))
    }
}

/// Hands a qubit register from one party to the other. Amplitudes are
/// untouched; only the cut moves.
pub fn transfer_qubit(
    state: &RegisterState,
    which: usize,
    from: Side,
    to: Side,
) -> Result<RegisterState> {
    let reg = state
        .registers
        .get(which)
        .ok_or_else(|| Error::invalid(format!("no register {which}")))?;
    if reg.side != from {
        return Err(Error::invalid(format!(
            "register {} belongs to {:?}, not {from:?}",
            reg.name, reg.side
        )));
    }
    if reg.dim != 2 {
        return Err(Error::invalid(format!(
            "register {} has dim {}, only qubits can be transferred",
            reg.name, reg.dim
        )));
    }
    if from == to {
        return Err(Error::invalid("transfer needs two different sides"));
    }
    let mut next = state.clone();
    next.registers[which].side = to;
    Ok(next)
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub fidelity: f64,
    pub pass: bool,
    pub seed_size: u32,
}

/// Checks `F(output, target) ≥ 1 − ε` (up to [`FIDELITY_SLACK`]).
pub fn verify_generation(spec: &ProtocolSpec) -> Result<VerifyReport> {
    let out = apply_protocol(spec)?;
    let f = fidelity(&out, &spec.target)?;
    Ok(VerifyReport {
        fidelity: f,
        pass: f >= 1.0 - spec.eps - FIDELITY_SLACK,
        seed_size: spec.seed_size_qubits,
    })
}

/// Seed-and-local-maps protocol that prepares `pur` and discards the aux
/// registers.
pub fn protocol_for_purification(
    pur: &Purification,
    target: DensityMatrix,
    eps: f64,
) -> Result<ProtocolSpec> {
    let dec = svd(&pur.cut_matrix())?;
    let r = numerical_rank(&dec.singulars).max(1);
    let weights: Vec<f64> = dec.singulars[..r].iter().map(|s| s * s).collect();
    let left: CMatrix = dec.left.leading_columns(r);
    let right: CMatrix = dec.right.leading_columns(r).conj();
    ProtocolSpec::from_schmidt_terms(
        &weights,
        &left,
        &right,
        (pur.dim_a(), pur.aux_a()),
        (pur.dim_b(), pur.aux_b()),
        target,
        eps,
    )
}
