//! Classical distributions: psd-rank and nonnegative-rank bounds, the psd
//! factorization solver, and the passage between psd factorizations and
//! purifications.
//!
//! A classical state `Σ P(x,y) |x⟩⟨x| ⊗ |y⟩⟨y|` has correlation complexity
//! `⌈log₂ prank(P)⌉` qubits and randomized complexity `⌈log₂ rank₊(P)⌉` bits.
//! Neither rank is computable in general, so both are reported as bracketing
//! bounds with an honest certification status.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::general::Purification;
use crate::linalg::{self, numerical_rank, psd_sqrt, svd, CMatrix, DensityMatrix, C64};
use crate::pure::ceil_log2;
use crate::random::gaussian_c64;
use crate::sim::{Register, RegisterState, Side};

/// Entries below this are treated as exact zeros.
pub const CLAMP_TOL: f64 = 1e-14;
pub const NEGATIVE_TOL: f64 = 1e-12;
pub const SUM_TOL: f64 = 1e-8;
/// Largest factorization residual accepted by [`synth_from_psd`].
pub const SYNTH_RESIDUAL_TOL: f64 = 1e-7;

/// Nonnegative `n x m` matrix summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct DistMatrix {
    n: usize,
    m: usize,
    p: Vec<f64>,
}

impl DistMatrix {
    /// Validates row-major data; see [`validate_dist`].
    pub fn from_rows(n: usize, m: usize, data: &[f64], renormalize: bool) -> Result<Self> {
        if n == 0 || m == 0 || data.len() != n * m {
            return Err(Error::invalid(format!(
                "{} entries do not fit shape {n}x{m}",
                data.len()
            )));
        }
        let mut p = Vec::with_capacity(data.len());
        for (k, &v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::invalid(format!(
                    "non-finite entry at ({}, {})",
                    k / m,
                    k % m
                )));
            }
            if v < -NEGATIVE_TOL {
                return Err(Error::invalid(format!(
                    "negative probability {v} at ({}, {})",
                    k / m,
                    k % m
                )));
            }
            p.push(if v < CLAMP_TOL { 0.0 } else { v });
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL && (!renormalize || sum <= 0.0) {
            return Err(Error::NotNormalized { norm: sum });
        }
        if sum != 1.0 {
            p.iter_mut().for_each(|v| *v /= sum);
        }
        Ok(DistMatrix { n, m, p })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.p[x * self.m + y]
    }

    pub fn entries(&self) -> &[f64] {
        &self.p
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.p.chunks(self.m).map(|r| r.to_vec()).collect()
    }

    pub fn to_cmatrix(&self) -> CMatrix {
        CMatrix::from_real(self.n, self.m, &self.p).expect("validated")
    }

    /// Numerical rank with the relative singular-value threshold.
    pub fn rank(&self) -> usize {
        numerical_rank(&svd(&self.to_cmatrix()).expect("finite").singulars)
    }

    pub fn is_zero_row(&self, x: usize) -> bool {
        (0..self.m).all(|y| self.get(x, y) == 0.0)
    }

    pub fn is_zero_col(&self, y: usize) -> bool {
        (0..self.n).all(|x| self.get(x, y) == 0.0)
    }

    /// The classical state `Σ P(x,y) |xy⟩⟨xy|`.
    pub fn state(&self) -> DensityMatrix {
        DensityMatrix::classical(&self.p, self.n, self.m).expect("validated distribution")
    }

    /// Total variation distance `½ Σ |P - Q|`.
    pub fn total_variation(&self, other: &DistMatrix) -> f64 {
        0.5 * self
            .p
            .iter()
            .zip(&other.p)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// Validates a raw row list into a distribution.
pub fn validate_dist(raw: &[Vec<f64>], renormalize: bool) -> Result<DistMatrix> {
    let n = raw.len();
    let m = raw.first().map_or(0, Vec::len);
    if let Some(x) = raw.iter().position(|r| r.len() != m) {
        return Err(Error::invalid(format!(
            "row {x} has {} entries, expected {m}",
            raw[x].len()
        )));
    }
    let flat: Vec<f64> = raw.iter().flatten().copied().collect();
    DistMatrix::from_rows(n, m, &flat, renormalize)
}

/// Families `C_x`, `D_y` of `r x r` psd matrices with `tr(C_x D_y) ≈ P(x,y)`.
#[derive(Clone, Debug)]
pub struct PsdFactorization {
    pub r: usize,
    pub cs: Vec<CMatrix>,
    pub ds: Vec<CMatrix>,
    /// Frobenius norm of `tr(C_x D_y) - P(x,y)`.
    pub residual: f64,
}

impl PsdFactorization {
    /// `tr(C_x D_y)` for all pairs, row-major.
    pub fn products(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.cs.len() * self.ds.len());
        for c in &self.cs {
            for d in &self.ds {
                out.push(trace_product(c, d));
            }
        }
        out
    }

    pub fn residual_against(&self, p: &DistMatrix) -> f64 {
        self.products()
            .iter()
            .zip(p.entries())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Checks shapes and positivity of every factor.
    pub fn validate(&self) -> Result<()> {
        for (name, fam) in [("C", &self.cs), ("D", &self.ds)] {
            for (k, f) in fam.iter().enumerate() {
                if f.shape() != (self.r, self.r) {
                    return Err(Error::invalid(format!(
                        "{name}_{k} is not {}x{}",
                        self.r, self.r
                    )));
                }
                if !f.is_hermitian(linalg::HERMITIAN_TOL * f.max_abs().max(1.0)) {
                    return Err(Error::invalid(format!("{name}_{k} is not Hermitian")));
                }
                let (vals, _) = linalg::eigh(f)?;
                if let Some(&min) = vals.last() {
                    if min < -linalg::PSD_TOL {
                        return Err(Error::NotPsd { min_eig: min });
                    }
                }
            }
        }
        Ok(())
    }

    /// Diagonal psd factorization from a nonnegative one: `C_x = diag(W(x,:))`,
    /// `D_y = diag(H(:,y))`.
    pub fn from_nonneg(f: &NonnegFactorization, p: &DistMatrix) -> Self {
        let r = f.r;
        let cs = (0..f.n)
            .map(|x| CMatrix::diag_real(&f.w[x * r..(x + 1) * r]))
            .collect();
        let ds = (0..f.m)
            .map(|y| CMatrix::diag_real(&(0..r).map(|k| f.h[k * f.m + y]).collect::<Vec<_>>()))
            .collect();
        let mut out = PsdFactorization {
            r,
            cs,
            ds,
            residual: 0.0,
        };
        out.residual = out.residual_against(p);
        out
    }

    /// Exact factorization of size `min(n, m)` built from the distribution
    /// itself.
    pub fn diagonal(p: &DistMatrix) -> Self {
        let (n, m) = (p.n(), p.m());
        let (cs, ds, r) = if n <= m {
            let cs = (0..n)
                .map(|x| {
                    let mut e = vec![0.0; n];
                    e[x] = 1.0;
                    CMatrix::diag_real(&e)
                })
                .collect();
            let ds = (0..m)
                .map(|y| CMatrix::diag_real(&(0..n).map(|x| p.get(x, y)).collect::<Vec<_>>()))
                .collect();
            (cs, ds, n)
        } else {
            let cs = (0..n)
                .map(|x| CMatrix::diag_real(&(0..m).map(|y| p.get(x, y)).collect::<Vec<_>>()))
                .collect();
            let ds = (0..m)
                .map(|y| {
                    let mut e = vec![0.0; m];
                    e[y] = 1.0;
                    CMatrix::diag_real(&e)
                })
                .collect();
            (cs, ds, m)
        };
        let mut out = PsdFactorization {
            r,
            cs,
            ds,
            residual: 0.0,
        };
        out.residual = out.residual_against(p);
        out
    }
}

/// `Re tr(C D)` for Hermitian `C`, `D`.
fn trace_product(c: &CMatrix, d: &CMatrix) -> f64 {
    let r = c.rows();
    let mut acc = 0.0;
    for i in 0..r {
        for j in 0..r {
            acc += (c[(i, j)] * d[(j, i)]).re;
        }
    }
    acc
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Certified,
    Heuristic,
}

/// Bracketing bounds on a rank, with the witness for the upper bound.
#[derive(Clone, Debug)]
pub struct RankReport {
    pub lower: usize,
    pub upper: usize,
    pub status: Status,
    pub witness: Option<PsdFactorization>,
    /// Best residual found at each size tried, in order.
    pub attempts: Vec<(usize, f64)>,
}

impl RankReport {
    /// `⌈log₂ upper⌉`: qubits for psd-rank reports, bits for nonnegative rank.
    pub fn complexity(&self) -> u32 {
        ceil_log2(self.upper)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverConfig {
    pub starts: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Success threshold on the Frobenius residual.
    pub tol: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            starts: 16,
            max_iter: 5000,
            grad_tol: 1e-10,
            tol: 1e-7,
            seed: 0,
        }
    }
}

/// `⌈√rank(P)⌉`: `tr(C_x D_y)` is bilinear in the `r²`-dimensional real
/// vectorizations of the factors, so `rank(P) ≤ r²`.
pub fn psd_rank_lower_bound(p: &DistMatrix) -> Result<usize> {
    let rank = p.rank();
    if rank == 0 {
        return Err(Error::invalid("distribution matrix is zero"));
    }
    let mut r = (rank as f64).sqrt().floor() as usize;
    while r * r < rank {
        r += 1;
    }
    Ok(r)
}

/// Outcome of one solver start.
#[derive(Clone, Debug)]
pub struct FitRun {
    pub factorization: PsdFactorization,
    /// Objective after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

/// Best psd factorization of size `r` over `cfg.starts` seeded starts.
pub fn psd_fit(p: &DistMatrix, r: usize, cfg: &SolverConfig) -> Result<PsdFactorization> {
    Ok(psd_fit_runs(p, r, cfg)?.factorization)
}

/// Like [`psd_fit`] but keeps the objective history of the winning start.
pub fn psd_fit_runs(p: &DistMatrix, r: usize, cfg: &SolverConfig) -> Result<FitRun> {
    if r < 1 {
        return Err(Error::invalid("factorization size must be at least 1"));
    }
    let starts = cfg.starts.max(1);
    let runs: Vec<FitRun> = (0..starts)
        .into_par_iter()
        .map(|k| fit_single(p, r, cfg, k as u64))
        .collect();
    // lowest residual; ties resolved by start index
    let best = runs
        .into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| {
            a.factorization
                .residual
                .total_cmp(&b.factorization.residual)
                .then(i.cmp(j))
        })
        .map(|(_, run)| run)
        .expect("at least one start");
    Ok(best)
}

struct Fit<'a> {
    p: &'a DistMatrix,
    r: usize,
    row_active: Vec<bool>,
    col_active: Vec<bool>,
}

impl Fit<'_> {
    fn gram(f: &CMatrix) -> CMatrix {
        f.adjoint().matmul(f)
    }

    fn objective(&self, cs: &[CMatrix], ds: &[CMatrix]) -> f64 {
        let mut acc = 0.0;
        for (x, c) in cs.iter().enumerate() {
            for (y, d) in ds.iter().enumerate() {
                acc += (trace_product(c, d) - self.p.get(x, y)).powi(2);
            }
        }
        acc
    }

    /// Gradient `4 Σ_y R(x,y) E_x D_y` of the objective in each `E_x`
    /// (steepest-ascent direction for the real objective).
    fn grad_left(&self, es: &[CMatrix], cs: &[CMatrix], ds: &[CMatrix]) -> Vec<CMatrix> {
        es.iter()
            .enumerate()
            .map(|(x, e)| {
                let mut acc = CMatrix::zeros(self.r, self.r);
                if !self.row_active[x] {
                    return acc;
                }
                for (y, d) in ds.iter().enumerate() {
                    let res = trace_product(&cs[x], d) - self.p.get(x, y);
                    acc.axpy(C64::new(4.0 * res, 0.0), d);
                }
                e.matmul(&acc)
            })
            .collect()
    }

    fn grad_right(&self, fs: &[CMatrix], cs: &[CMatrix], ds: &[CMatrix]) -> Vec<CMatrix> {
        fs.iter()
            .enumerate()
            .map(|(y, f)| {
                let mut acc = CMatrix::zeros(self.r, self.r);
                if !self.col_active[y] {
                    return acc;
                }
                for (x, c) in cs.iter().enumerate() {
                    let res = trace_product(c, &ds[y]) - self.p.get(x, y);
                    acc.axpy(C64::new(4.0 * res, 0.0), c);
                }
                f.matmul(&acc)
            })
            .collect()
    }
}

fn sq_norm(gs: &[CMatrix]) -> f64 {
    gs.iter().map(|g| g.frobenius_norm().powi(2)).sum()
}

fn step(vars: &[CMatrix], grads: &[CMatrix], t: f64) -> Vec<CMatrix> {
    vars.iter()
        .zip(grads)
        .map(|(v, g)| {
            let mut out = v.clone();
            out.axpy(C64::new(-t, 0.0), g);
            out
        })
        .collect()
}

const ARMIJO: f64 = 1e-4;
const DAMPING: f64 = 1e-12;

/// Gauss-Newton scaling of one block. For each factor `E_k` with Gram
/// `G_k = E_k†E_k` and partners `P_j`, the residuals are
/// `tr(G_k P_j) - target(k, j)` with derivatives `2 E_k P_j`. Returns
/// `Σ_j u_j 2 E_k P_j` with `u = (K + μI)⁻¹ res`, `K_jl = 4 Re tr(P_j G_k P_l)`.
/// Plain gradient steps stall when both sides of a vanishing product shrink
/// together; this direction halves such components every step.
fn gauss_newton(
    vars: &[CMatrix],
    grams: &[CMatrix],
    partners: &[CMatrix],
    active: &[bool],
    target: impl Fn(usize, usize) -> f64,
) -> Vec<CMatrix> {
    let m = partners.len();
    vars.iter()
        .enumerate()
        .map(|(k, e)| {
            let r = e.rows();
            if !active[k] {
                return CMatrix::zeros(r, r);
            }
            let g = &grams[k];
            let gp: Vec<CMatrix> = partners.iter().map(|p| g.matmul(p)).collect();
            let kmat = CMatrix::from_fn(m, m, |j, l| {
                C64::new(4.0 * trace_product(&partners[j], &gp[l]), 0.0)
            });
            let res: Vec<C64> = (0..m)
                .map(|j| C64::new(trace_product(g, &partners[j]) - target(k, j), 0.0))
                .collect();
            let mu = DAMPING * (kmat.trace().re / m as f64) + 1e-300;
            let u = match linalg::eigh(&kmat) {
                Ok((values, vectors)) => {
                    let inv: Vec<f64> = values.iter().map(|v| 1.0 / (v.max(0.0) + mu)).collect();
                    linalg::compose_spectral(&inv, &vectors).mul_vec(&res)
                }
                Err(_) => res,
            };
            let mut acc = CMatrix::zeros(r, r);
            for (j, p) in partners.iter().enumerate() {
                acc.axpy(u[j] * 2.0, p);
            }
            e.matmul(&acc)
        })
        .collect()
}

/// One block of alternating descent along `-dirs`: Armijo backtracking from
/// the trial step `t0`. Returns the accepted step length and objective, or
/// `None` when no decrease was found.
fn descend_block(
    vars: &mut Vec<CMatrix>,
    grads: &[CMatrix],
    dirs: &[CMatrix],
    t0: f64,
    current: f64,
    eval: impl Fn(&[CMatrix]) -> f64,
) -> Option<(f64, f64)> {
    let slope: f64 = grads
        .iter()
        .zip(dirs)
        .map(|(g, d)| {
            g.data()
                .iter()
                .zip(d.data())
                .map(|(a, b)| (a.conj() * b).re)
                .sum::<f64>()
        })
        .sum();
    if !(slope > 0.0) {
        return None;
    }
    let mut t = t0;
    for _ in 0..80 {
        let trial = step(vars, dirs, t);
        let val = eval(&trial);
        if val <= current - ARMIJO * t * slope {
            *vars = trial;
            return Some((t, val));
        }
        t *= 0.5;
    }
    None
}

fn fit_single(p: &DistMatrix, r: usize, cfg: &SolverConfig, start: u64) -> FitRun {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(start);
    let fit = Fit {
        p,
        r,
        row_active: (0..p.n()).map(|x| !p.is_zero_row(x)).collect(),
        col_active: (0..p.m()).map(|y| !p.is_zero_col(y)).collect(),
    };

    let positive: Vec<f64> = p.entries().iter().copied().filter(|&v| v > 0.0).collect();
    let mean = positive.iter().sum::<f64>() / positive.len().max(1) as f64;
    let sigma = (mean / (r as f64).powi(3)).powf(0.25);
    let init = |active: bool, rng: &mut ChaCha8Rng| {
        CMatrix::from_fn(r, r, |_, _| {
            let z = gaussian_c64(rng) * (sigma / std::f64::consts::SQRT_2);
            if active {
                z
            } else {
                C64::new(0.0, 0.0)
            }
        })
    };
    let mut es: Vec<CMatrix> = fit.row_active.iter().map(|&a| init(a, &mut rng)).collect();
    let mut fs: Vec<CMatrix> = fit.col_active.iter().map(|&a| init(a, &mut rng)).collect();

    let mut cs: Vec<CMatrix> = es.iter().map(Fit::gram).collect();
    let mut ds: Vec<CMatrix> = fs.iter().map(Fit::gram).collect();
    let mut obj = fit.objective(&cs, &ds);
    let mut history = vec![obj];
    let (mut t_left, mut t_right) = (0.5_f64, 0.5_f64);
    let floor = (cfg.tol * 1e-4).powi(2);

    // stop once a window of iterations gains less than STALL relative
    const WINDOW: usize = 250;
    const STALL: f64 = 1e-6;
    let mut checkpoint = obj;
    for it in 0..cfg.max_iter {
        if obj <= floor {
            break;
        }
        if it > 0 && it % WINDOW == 0 {
            if obj > checkpoint * (1.0 - STALL) {
                break;
            }
            checkpoint = obj;
        }
        let gl = fit.grad_left(&es, &cs, &ds);
        let gr = fit.grad_right(&fs, &cs, &ds);
        if (sq_norm(&gl) + sq_norm(&gr)).sqrt() < cfg.grad_tol {
            break;
        }
        let mut moved = false;

        let eval_left = |vars: &[CMatrix]| {
            let trial: Vec<CMatrix> = vars.iter().map(Fit::gram).collect();
            fit.objective(&trial, &ds)
        };
        let dl = gauss_newton(&es, &cs, &ds, &fit.row_active, |x, y| p.get(x, y));
        if let Some((t, val)) =
            descend_block(&mut es, &gl, &dl, (t_left * 2.0).min(1.0), obj, eval_left)
        {
            t_left = t;
            obj = val;
            cs = es.iter().map(Fit::gram).collect();
            history.push(obj);
            moved = true;
        }

        let gr = fit.grad_right(&fs, &cs, &ds);
        let eval_right = |vars: &[CMatrix]| {
            let trial: Vec<CMatrix> = vars.iter().map(Fit::gram).collect();
            fit.objective(&cs, &trial)
        };
        let dr = gauss_newton(&fs, &ds, &cs, &fit.col_active, |y, x| p.get(x, y));
        if let Some((t, val)) =
            descend_block(&mut fs, &gr, &dr, (t_right * 2.0).min(1.0), obj, eval_right)
        {
            t_right = t;
            obj = val;
            ds = fs.iter().map(Fit::gram).collect();
            history.push(obj);
            moved = true;
        }
        if !moved {
            break;
        }
    }

    let mut factorization = PsdFactorization {
        r,
        cs: cs.iter().map(CMatrix::hermitian_part).collect(),
        ds: ds.iter().map(CMatrix::hermitian_part).collect(),
        residual: 0.0,
    };
    factorization.residual = factorization.residual_against(p);
    FitRun {
        factorization,
        history,
    }
}

/// Upper bound on psd-rank by increasing search from the vectorization
/// lower bound. Size `min(n, m)` always succeeds with the diagonal witness.
pub fn psd_rank_search(p: &DistMatrix, cfg: &SolverConfig) -> Result<RankReport> {
    let lower = psd_rank_lower_bound(p)?;
    let cap = p.n().min(p.m());
    let mut attempts = Vec::new();
    for r in lower..=cap {
        let candidate = if r == cap {
            PsdFactorization::diagonal(p)
        } else {
            let fitted = psd_fit(p, r, cfg)?;
            if fitted.residual < cfg.tol {
                fitted
            } else {
                // a nonnegative factorization of the same size is also a witness
                match nmf_fit(p, r, cfg) {
                    Some(nn) if nn.residual < cfg.tol => PsdFactorization::from_nonneg(&nn, p),
                    _ => fitted,
                }
            }
        };
        attempts.push((r, candidate.residual));
        if candidate.residual < cfg.tol {
            let status = if r == lower {
                Status::Certified
            } else {
                Status::Heuristic
            };
            return Ok(RankReport {
                lower,
                upper: r,
                status,
                witness: Some(candidate),
                attempts,
            });
        }
    }
    unreachable!("the diagonal factorization at size min(n, m) is exact")
}

/// Nonnegative factors `P ≈ W H` with `W: n x r`, `H: r x m`.
#[derive(Clone, Debug)]
pub struct NonnegFactorization {
    pub n: usize,
    pub m: usize,
    pub r: usize,
    pub w: Vec<f64>,
    pub h: Vec<f64>,
    pub residual: f64,
}

fn nmf_residual(p: &DistMatrix, w: &[f64], h: &[f64], r: usize) -> f64 {
    let (n, m) = (p.n(), p.m());
    let mut acc = 0.0;
    for x in 0..n {
        for y in 0..m {
            let v: f64 = (0..r).map(|k| w[x * r + k] * h[k * m + y]).sum();
            acc += (v - p.get(x, y)).powi(2);
        }
    }
    acc.sqrt()
}

fn nmf_single(p: &DistMatrix, r: usize, cfg: &SolverConfig, start: u64) -> NonnegFactorization {
    let (n, m) = (p.n(), p.m());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6e6d_665f_7365_6564);
    rng.set_stream(start);
    let scale = (1.0 / (n * m * r) as f64).sqrt();
    let mut w: Vec<f64> = (0..n * r)
        .map(|_| rng.random::<f64>() * scale + 1e-3 * scale)
        .collect();
    let mut h: Vec<f64> = (0..r * m)
        .map(|_| rng.random::<f64>() * scale + 1e-3 * scale)
        .collect();
    const DELTA: f64 = 1e-300;
    let floor = cfg.tol * 1e-3;

    for it in 0..cfg.max_iter {
        // H ← H ∘ (WᵀP) / (WᵀW H)
        let mut wtw = vec![0.0; r * r];
        for a in 0..r {
            for b in 0..r {
                wtw[a * r + b] = (0..n).map(|x| w[x * r + a] * w[x * r + b]).sum();
            }
        }
        for k in 0..r {
            for y in 0..m {
                let num: f64 = (0..n).map(|x| w[x * r + k] * p.get(x, y)).sum();
                let den: f64 = (0..r).map(|b| wtw[k * r + b] * h[b * m + y]).sum();
                h[k * m + y] *= num / (den + DELTA);
            }
        }
        // W ← W ∘ (P Hᵀ) / (W H Hᵀ)
        let mut hht = vec![0.0; r * r];
        for a in 0..r {
            for b in 0..r {
                hht[a * r + b] = (0..m).map(|y| h[a * m + y] * h[b * m + y]).sum();
            }
        }
        for x in 0..n {
            for k in 0..r {
                let num: f64 = (0..m).map(|y| p.get(x, y) * h[k * m + y]).sum();
                let den: f64 = (0..r).map(|b| w[x * r + b] * hht[b * r + k]).sum();
                w[x * r + k] *= num / (den + DELTA);
            }
        }
        if it % 50 == 0 && nmf_residual(p, &w, &h, r) < floor {
            break;
        }
    }
    let residual = nmf_residual(p, &w, &h, r);
    NonnegFactorization {
        n,
        m,
        r,
        w,
        h,
        residual,
    }
}

/// Best multiplicative-update nonnegative factorization of size `r`.
pub fn nmf_fit(p: &DistMatrix, r: usize, cfg: &SolverConfig) -> Option<NonnegFactorization> {
    if r == 0 {
        return None;
    }
    (0..cfg.starts.max(1))
        .into_par_iter()
        .map(|k| nmf_single(p, r, cfg, k as u64))
        .collect::<Vec<_>>()
        .into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.residual.total_cmp(&b.residual).then(i.cmp(j)))
        .map(|(_, f)| f)
}

/// Bounds on nonnegative rank: `rank(P) ≤ rank₊(P) ≤ min(n, m)`, tightened
/// from above by multiplicative-update factorizations.
pub fn nonneg_rank_bounds(p: &DistMatrix, cfg: &SolverConfig) -> Result<RankReport> {
    let lower = p.rank();
    if lower == 0 {
        return Err(Error::invalid("distribution matrix is zero"));
    }
    let cap = p.n().min(p.m());
    let mut attempts = Vec::new();
    let mut found = None;
    for r in lower..cap {
        let nn = nmf_fit(p, r, cfg).expect("r >= 1");
        attempts.push((r, nn.residual));
        if nn.residual < cfg.tol {
            found = Some((r, PsdFactorization::from_nonneg(&nn, p)));
            break;
        }
    }
    let (upper, witness) = match found {
        Some((r, w)) => (r, Some(w)),
        // nonnegative rank equals rank when the rank is at most two
        None if lower <= 2 => (lower, None),
        None => {
            let diag = PsdFactorization::diagonal(p);
            attempts.push((cap, diag.residual));
            (cap, Some(diag))
        }
    };
    let status = if upper == lower || lower <= 2 {
        Status::Certified
    } else {
        Status::Heuristic
    };
    Ok(RankReport {
        lower,
        upper,
        status,
        witness,
        attempts,
    })
}

/// Pure state on `(A, A′, A₁ | B, B′, B₁)` whose `A ⊗ B` reduction is the
/// classical state of `p`:
/// `Σ_i (Σ_x |x⟩|x⟩|v_x^i⟩) ⊗ (Σ_y |y⟩|y⟩|w_y^i⟩)` with `v_x^i` the `i`-th
/// column of `√(C_xᵀ)` and `w_y^i` the `i`-th column of `√D_y`.
pub fn synth_from_psd(p: &DistMatrix, f: &PsdFactorization) -> Result<RegisterState> {
    if f.cs.len() != p.n() || f.ds.len() != p.m() {
        return Err(Error::invalid(format!(
            "factorization has {}x{} factors, distribution is {}x{}",
            f.cs.len(),
            f.ds.len(),
            p.n(),
            p.m()
        )));
    }
    f.validate()?;
    let residual = f.residual_against(p);
    if residual > SYNTH_RESIDUAL_TOL {
        return Err(Error::FactorizationMismatch { residual });
    }
    let (n, m, r) = (p.n(), p.m(), f.r);
    let vs: Vec<CMatrix> =
        f.cs.iter()
            .map(|c| psd_sqrt(&c.transpose()))
            .collect::<Result<_>>()?;
    let ws: Vec<CMatrix> = f.ds.iter().map(psd_sqrt).collect::<Result<_>>()?;

    let alice_dim = n * n * r;
    let bob_dim = m * m * r;
    let mut amps = vec![C64::new(0.0, 0.0); alice_dim * bob_dim];
    for x in 0..n {
        for y in 0..m {
            for a in 0..r {
                let row = (x * n + x) * r + a;
                for b in 0..r {
                    let col = (y * m + y) * r + b;
                    let mut z = C64::new(0.0, 0.0);
                    for i in 0..r {
                        z += vs[x][(a, i)] * ws[y][(b, i)];
                    }
                    amps[row * bob_dim + col] = z;
                }
            }
        }
    }
    let norm = linalg::norm(&amps);
    if !(norm > 0.0) {
        return Err(Error::invalid("factorization produces the zero vector"));
    }
    amps.iter_mut().for_each(|z| *z /= norm);
    let reg = |name: &str, dim, side| Register {
        name: name.to_string(),
        dim,
        side,
    };
    RegisterState::new(
        amps,
        vec![
            reg("A", n, Side::Alice),
            reg("A'", n, Side::Alice),
            reg("A1", r, Side::Alice),
            reg("B", m, Side::Bob),
            reg("B'", m, Side::Bob),
            reg("B1", r, Side::Bob),
        ],
    )
}

/// Views a six-register output of [`synth_from_psd`] as a purification with
/// `A′ ⊗ A₁` and `B′ ⊗ B₁` as the aux registers.
pub fn synthesized_purification(state: &RegisterState) -> Result<Purification> {
    let d = state.dims();
    if d.len() != 6 || state.side_registers(Side::Alice) != vec![0, 1, 2] {
        return Err(Error::invalid("expected registers (A, A', A1 | B, B', B1)"));
    }
    Purification::new(state.amps.clone(), d[0], d[1] * d[2], d[3], d[4] * d[5])
}

/// Gram matrices of the aux blocks of coefficient-absorbed Schmidt vectors:
/// `C_x(j,i) = ⟨v_x^j|v_x^i⟩`, `D_y(i,j) = ⟨w_y^j|w_y^i⟩`. The residual is
/// measured against the computational-basis distribution of the reduction.
pub fn gram_extract(psi: &Purification) -> Result<PsdFactorization> {
    let norm = linalg::norm(psi.amps());
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::NotNormalized { norm });
    }
    let blocks = psi.schmidt_blocks()?;
    let cs: Vec<CMatrix> = blocks.alice.iter().map(|a| a.adjoint().matmul(a)).collect();
    let ds: Vec<CMatrix> = blocks
        .bob
        .iter()
        .map(|b| b.adjoint().matmul(b).transpose())
        .collect();
    let measured =
        DistMatrix::from_rows(psi.dim_a(), psi.dim_b(), &psi.outcome_probabilities(), true)?;
    let mut f = PsdFactorization {
        r: blocks.r,
        cs,
        ds,
        residual: 0.0,
    };
    f.residual = f.residual_against(&measured);
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_psd, rng};

    fn dist(rows: &[&[f64]]) -> DistMatrix {
        validate_dist(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), false).unwrap()
    }

    fn half_i2() -> DistMatrix {
        dist(&[&[0.5, 0.0], &[0.0, 0.5]])
    }

    fn third_i3() -> DistMatrix {
        let t = 1.0 / 3.0;
        dist(&[&[t, 0.0, 0.0], &[0.0, t, 0.0], &[0.0, 0.0, t]])
    }

    fn uniform() -> DistMatrix {
        dist(&[&[0.25, 0.25], &[0.25, 0.25]])
    }

    #[test]
    fn validate_examples() {
        assert!(validate_dist(&[vec![0.25, 0.25], vec![0.25, 0.25]], false).is_ok());
        assert!(matches!(
            validate_dist(&[vec![0.5, -0.1], vec![0.3, 0.3]], false),
            Err(Error::InvalidInput(_))
        ));
        let raw = [vec![0.3, 0.3], vec![0.3, 0.3]];
        assert!(matches!(
            validate_dist(&raw, false),
            Err(Error::NotNormalized { .. })
        ));
        let p = validate_dist(&raw, true).unwrap();
        assert!(p.entries().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let tiny = validate_dist(&[vec![1.0, 1e-15, -1e-13]], false).unwrap();
        assert_eq!(tiny.entries()[1..], [0.0, 0.0]);
        assert!(validate_dist(&[vec![1.0], vec![0.0, 0.0]], false).is_err());
    }

    #[test]
    fn lower_bound_examples() {
        assert_eq!(psd_rank_lower_bound(&uniform()).unwrap(), 1);
        assert_eq!(psd_rank_lower_bound(&half_i2()).unwrap(), 2);
        assert_eq!(psd_rank_lower_bound(&third_i3()).unwrap(), 2);
    }

    #[test]
    fn fit_uniform_rank_one() {
        let f = psd_fit(&uniform(), 1, &SolverConfig::default()).unwrap();
        assert!(f.residual <= 1e-8, "{}", f.residual);
        assert!((f.residual - f.residual_against(&uniform())).abs() < 1e-12);
    }

    #[test]
    fn fit_half_identity_rank_two() {
        let f = psd_fit(&half_i2(), 2, &SolverConfig::default()).unwrap();
        assert!(f.residual <= 1e-8, "{}", f.residual);
        f.validate().unwrap();
    }

    #[test]
    fn fit_third_identity_rank_two_has_floor() {
        let cfg = SolverConfig {
            starts: 64,
            ..Default::default()
        };
        let f = psd_fit(&third_i3(), 2, &cfg).unwrap();
        assert!(f.residual >= 1e-3, "{}", f.residual);
    }

    #[test]
    fn fit_rejects_zero_size() {
        assert!(psd_fit(&uniform(), 0, &SolverConfig::default()).is_err());
    }

    #[test]
    fn fit_history_is_monotone() {
        let cfg = SolverConfig {
            starts: 4,
            ..Default::default()
        };
        let run = psd_fit_runs(&third_i3(), 2, &cfg).unwrap();
        assert!(run.history.windows(2).all(|w| w[1] <= w[0]));
        let recomputed = run.factorization.residual_against(&third_i3());
        assert!((recomputed - run.factorization.residual).abs() < 1e-12);
        assert!((run.history.last().unwrap().sqrt() - recomputed).abs() < 1e-9);
    }

    #[test]
    fn fit_is_deterministic() {
        let cfg = SolverConfig {
            starts: 3,
            max_iter: 200,
            ..Default::default()
        };
        let a = psd_fit(&third_i3(), 2, &cfg).unwrap();
        let b = psd_fit(&third_i3(), 2, &cfg).unwrap();
        assert_eq!(a.residual, b.residual);
        assert_eq!(a.cs, b.cs);
    }

    #[test]
    fn zero_rows_get_zero_factors() {
        let p = dist(&[&[0.5, 0.5], &[0.0, 0.0]]);
        let f = psd_fit(&p, 1, &SolverConfig::default()).unwrap();
        assert_eq!(f.cs[1].max_abs(), 0.0);
        assert!(f.residual < 1e-8);
    }

    #[test]
    fn search_examples() {
        let cfg = SolverConfig::default();
        let rep = psd_rank_search(&uniform(), &cfg).unwrap();
        assert_eq!(
            (rep.lower, rep.upper, rep.status, rep.complexity()),
            (1, 1, Status::Certified, 0)
        );
        let rep = psd_rank_search(&half_i2(), &cfg).unwrap();
        assert_eq!(
            (rep.lower, rep.upper, rep.status, rep.complexity()),
            (2, 2, Status::Certified, 1)
        );
    }

    #[test]
    fn nonneg_examples() {
        let cfg = SolverConfig::default();
        let rep = nonneg_rank_bounds(&uniform(), &cfg).unwrap();
        assert_eq!(
            (rep.lower, rep.upper, rep.status, rep.complexity()),
            (1, 1, Status::Certified, 0)
        );
        let rep = nonneg_rank_bounds(&half_i2(), &cfg).unwrap();
        assert_eq!(
            (rep.lower, rep.upper, rep.status, rep.complexity()),
            (2, 2, Status::Certified, 1)
        );
    }

    #[test]
    fn nonneg_random_rank_three() {
        let mut r = rng(5);
        let w: Vec<f64> = (0..12).map(|_| r.random::<f64>()).collect();
        let h: Vec<f64> = (0..12).map(|_| r.random::<f64>()).collect();
        let mut flat = vec![0.0; 16];
        for x in 0..4 {
            for y in 0..4 {
                flat[x * 4 + y] = (0..3).map(|k| w[x * 3 + k] * h[k * 4 + y]).sum();
            }
        }
        let p = DistMatrix::from_rows(4, 4, &flat, true).unwrap();
        let rep = nonneg_rank_bounds(&p, &SolverConfig::default()).unwrap();
        assert_eq!(rep.lower, 3);
        assert!((3..=4).contains(&rep.upper));
    }

    #[test]
    fn diagonal_witness_is_exact() {
        let p = dist(&[&[0.1, 0.2, 0.1], &[0.3, 0.2, 0.1]]);
        let f = PsdFactorization::diagonal(&p);
        assert_eq!(f.r, 2);
        assert!(f.residual < 1e-15);
    }

    #[test]
    fn synth_trivial() {
        let p = dist(&[&[1.0]]);
        let f = PsdFactorization::diagonal(&p);
        let st = synth_from_psd(&p, &f).unwrap();
        assert_eq!(st.amps.len(), 1);
        assert!((st.amps[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn synth_half_identity() {
        let p = half_i2();
        let st = synth_from_psd(&p, &PsdFactorization::diagonal(&p)).unwrap();
        let red = linalg::partial_trace_pure(&st.amps, &st.dims(), &[0, 3]).unwrap();
        assert!(red.max_abs_diff(&CMatrix::diag_real(&[0.5, 0.0, 0.0, 0.5])) < 1e-12);
        assert_eq!(st.schmidt_rank().unwrap(), 2);
    }

    #[test]
    fn synth_rejects_mismatch() {
        let p = half_i2();
        let f = PsdFactorization::diagonal(&uniform());
        assert!(matches!(
            synth_from_psd(&p, &f),
            Err(Error::FactorizationMismatch { .. })
        ));
    }

    #[test]
    fn synth_random_factorization() {
        let mut g = rng(12);
        for trial in 0..10 {
            let (n, m, r) = (2 + trial % 3, 1 + trial % 4, 1 + trial % 3);
            let mut cs: Vec<CMatrix> = (0..n).map(|_| random_psd(&mut g, r, r)).collect();
            let ds: Vec<CMatrix> = (0..m)
                .map(|_| random_psd(&mut g, r, 1 + trial % r))
                .collect();
            let total: f64 = cs
                .iter()
                .flat_map(|c| ds.iter().map(move |d| trace_product(c, d)))
                .sum();
            cs.iter_mut().for_each(|c| *c = c.scale(1.0 / total));
            let mut f = PsdFactorization {
                r,
                cs,
                ds,
                residual: 0.0,
            };
            let p = DistMatrix::from_rows(n, m, &f.products(), false).unwrap();
            f.residual = f.residual_against(&p);
            let st = synth_from_psd(&p, &f).unwrap();
            let red = linalg::partial_trace_pure(&st.amps, &st.dims(), &[0, 3]).unwrap();
            for (k, &prob) in f.products().iter().enumerate() {
                assert!((red[(k, k)].re - prob).abs() < 1e-8);
            }
            assert!(st.schmidt_rank().unwrap() <= r);
        }
    }

    #[test]
    fn gram_extract_examples() {
        let pur = Purification::new(
            vec![
                C64::new(1.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
            ],
            2,
            1,
            2,
            1,
        )
        .unwrap();
        let f = gram_extract(&pur).unwrap();
        assert_eq!(f.r, 1);
        assert!((f.cs[0][(0, 0)].re - 1.0).abs() < 1e-12 && f.cs[1].max_abs() < 1e-12);
        assert!((f.ds[0][(0, 0)].re - 1.0).abs() < 1e-12 && f.ds[1].max_abs() < 1e-12);

        let p = half_i2();
        let st = synth_from_psd(&p, &PsdFactorization::diagonal(&p)).unwrap();
        let g = gram_extract(&synthesized_purification(&st).unwrap()).unwrap();
        assert!(g.residual_against(&p) < 1e-8);
        g.validate().unwrap();
    }

    #[test]
    fn gram_extract_rejects_unnormalized() {
        let e = Purification::new(vec![C64::new(2.0, 0.0)], 1, 1, 1, 1);
        match e {
            Err(Error::NotNormalized { .. }) => {}
            Ok(p) => assert!(matches!(gram_extract(&p), Err(Error::NotNormalized { .. }))),
            Err(other) => panic!("{other}"),
        }
    }
}
