//! The `qcorr` command line.
//!
//! Every subcommand prints a report either as aligned text or, with `--json`,
//! as a single JSON object. Reports echo the tolerances and seed in a
//! `config` block so a run can be reproduced from its output.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use crate::classical::{
    gram_extract, nonneg_rank_bounds, psd_rank_lower_bound, psd_rank_search, synth_from_psd,
    synthesized_purification, PsdFactorization, RankReport, SolverConfig,
};
use crate::error::{Error, Result};
use crate::general::{factor_from_purification, q_upper_bound, reconstruct_from_factors};
use crate::io;
use crate::linalg::{numerical_rank, svd};
use crate::pure::{
    build_approximant, ceil_log2, q_eps, rank_eps, schmidt_decompose, srank_eps,
    synth_pure_protocol, vec_inv,
};
use crate::sim::{
    apply_protocol, measure_computational, protocol_for_purification, verify_generation,
};

#[derive(Debug, Parser)]
#[command(
    name = "qcorr",
    version,
    about = "Correlation complexity of bipartite quantum states"
)]
pub struct Cli {
    #[command(flatten)]
    pub opts: GlobalOpts,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Fidelity slack: approximants must reach fidelity at least 1 - eps
    #[arg(long, global = true, default_value_t = 0.0)]
    pub eps: f64,

    /// Success threshold on factorization residuals
    #[arg(long, global = true, default_value_t = 1e-7)]
    pub tol: f64,

    /// Number of seeded solver starts
    #[arg(long, global = true, default_value_t = 16)]
    pub starts: usize,

    /// Seed for every random choice the solvers make
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Emit a JSON report instead of text
    #[arg(long, global = true)]
    pub json: bool,

    /// Rescale distributions that do not sum to one
    #[arg(long, global = true)]
    pub renormalize: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Schmidt decomposition of a pure state
    Schmidt {
        #[arg(long)]
        state: PathBuf,
    },
    /// Approximate Schmidt rank and complexity of a pure state
    Qeps {
        #[arg(long)]
        state: PathBuf,
    },
    /// Optimal truncated approximant of a pure state
    Approx {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// psd-rank bounds and correlation complexity of a distribution
    Psdrank {
        #[arg(long)]
        dist: PathBuf,
        /// Write the witness factorization here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Nonnegative-rank bounds and randomized complexity of a distribution
    Nnrank {
        #[arg(long)]
        dist: PathBuf,
    },
    /// Build a purification and generating protocol
    Synth {
        /// Classical route: distribution file
        #[arg(long, conflicts_with = "state", required_unless_present = "state")]
        dist: Option<PathBuf>,
        /// Use this psd factorization instead of searching for one
        #[arg(long, requires = "dist")]
        factorization: Option<PathBuf>,
        /// Pure route: target state file
        #[arg(long)]
        state: Option<PathBuf>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Factorizations from a purification
    Extract {
        #[arg(long)]
        purification: PathBuf,
        /// Write the general factorization manifest here
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the Gram (psd) factorization here
        #[arg(long)]
        psd_out: Option<PathBuf>,
    },
    /// Density matrix from a general factorization
    Reconstruct {
        #[arg(long)]
        factorization: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a protocol and report its output
    Simulate {
        #[arg(long)]
        protocol: PathBuf,
        /// Write the output density matrix here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a protocol's fidelity claim
    Verify {
        #[arg(long)]
        protocol: PathBuf,
    },
    /// Upper bound on the correlation complexity of a density matrix
    Bound {
        #[arg(long)]
        rho: PathBuf,
        /// Write the witness purification here
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl GlobalOpts {
    fn solver(&self) -> SolverConfig {
        SolverConfig {
            starts: self.starts,
            tol: self.tol,
            seed: self.seed,
            ..SolverConfig::default()
        }
    }

    fn config_block(&self) -> Value {
        let s = self.solver();
        json!({
            "eps": self.eps,
            "tol": s.tol,
            "starts": s.starts,
            "seed": s.seed,
            "max_iter": s.max_iter,
            "grad_tol": s.grad_tol,
            "renormalize": self.renormalize,
        })
    }
}

/// Parses `argv` and runs the subcommand, writing the report to `out`.
///
/// Exit codes: 0 on success, 2 on usage or input validation errors, 1 on
/// anything else.
pub fn run<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(mut report) => {
            if let Value::Object(map) = &mut report {
                map.insert("config".into(), cli.opts.config_block());
            }
            let text = if cli.opts.json {
                serde_json::to_string_pretty(&report).expect("serializable")
            } else {
                render_text(&report)
            };
            if writeln!(out, "{text}").is_err() {
                return 1;
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_)
        | Error::NotPsd { .. }
        | Error::NotNormalized { .. }
        | Error::FactorizationMismatch { .. }
        | Error::Parse { .. } => 2,
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 2,
        Error::Io(_) => 1,
    }
}

fn render_text(v: &Value) -> String {
    let Value::Object(map) = v else {
        return v.to_string();
    };
    let width = map.keys().map(String::len).max().unwrap_or(0);
    let mut lines = Vec::new();
    for (k, val) in map {
        match val {
            Value::Object(inner) => {
                lines.push(format!("{k}:"));
                let w = inner.keys().map(String::len).max().unwrap_or(0);
                for (ik, iv) in inner {
                    lines.push(format!("  {ik:<w$}  {}", scalar(iv)));
                }
            }
            other => lines.push(format!("{k:<width$}  {}", scalar(other))),
        }
    }
    lines.join("\n")
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn execute(cli: &Cli) -> Result<Value> {
    let opts = &cli.opts;
    match &cli.command {
        Command::Schmidt { state } => {
            let psi = io::read_state(state)?;
            let form = schmidt_decompose(&psi);
            Ok(json!({
                "command": "schmidt",
                "dims": [psi.dim_a(), psi.dim_b()],
                "r": form.rank(),
                "coeffs": form.coeffs,
            }))
        }
        Command::Qeps { state } => {
            let psi = io::read_state(state)?;
            let eps = opts.eps;
            let srank = srank_eps(&psi, eps)?;
            let delta = 2.0 * eps - eps * eps;
            let via_rank = rank_eps(&vec_inv(&psi), delta.min(1.0))?;
            Ok(json!({
                "command": "qeps",
                "eps": eps,
                "srank_eps": srank,
                "rank_eps_of_amplitudes": via_rank,
                "q_eps": q_eps(&psi, eps)?,
            }))
        }
        Command::Approx { state, out } => {
            let psi = io::read_state(state)?;
            let ap = build_approximant(&psi, opts.eps)?;
            if let Some(path) = out {
                io::write_state(path, &ap.state)?;
            }
            Ok(json!({
                "command": "approx",
                "eps": opts.eps,
                "rank": ap.rank,
                "fidelity": ap.fidelity,
                "q_eps": ceil_log2(ap.rank),
                "written": out.as_ref().map(|p| p.display().to_string()),
            }))
        }
        Command::Psdrank { dist, out } => {
            let p = io::read_dist(dist, opts.renormalize)?;
            let report = psd_rank_search(&p, &opts.solver())?;
            if let (Some(path), Some(w)) = (out, &report.witness) {
                io::write_psd_factorization(path, w)?;
            }
            let mut v = rank_json("psdrank", &report);
            v["Q"] = json!(report.complexity());
            v["rank"] = json!(p.rank());
            Ok(v)
        }
        Command::Nnrank { dist } => {
            let p = io::read_dist(dist, opts.renormalize)?;
            let report = nonneg_rank_bounds(&p, &opts.solver())?;
            let mut v = rank_json("nnrank", &report);
            v["R"] = json!(report.complexity());
            Ok(v)
        }
        Command::Synth {
            dist,
            factorization,
            state,
            out,
        } => match (dist, state) {
            (Some(dist), _) => synth_classical(opts, dist, factorization.as_deref(), out),
            (None, Some(state)) => {
                let psi = io::read_state(state)?;
                let spec = synth_pure_protocol(&psi, opts.eps)?;
                let manifest = io::write_protocol(out, &spec)?;
                Ok(json!({
                    "command": "synth",
                    "route": "pure",
                    "eps": opts.eps,
                    "seed_size_qubits": spec.seed_size_qubits,
                    "protocol": manifest.display().to_string(),
                }))
            }
            (None, None) => Err(Error::invalid("synth needs --dist or --state")),
        },
        Command::Extract {
            purification,
            out,
            psd_out,
        } => {
            let pur = io::read_purification(purification)?;
            let general = factor_from_purification(&pur)?;
            let gram = gram_extract(&pur)?;
            if let Some(path) = out {
                io::write_general_factorization(path, &general)?;
            }
            if let Some(path) = psd_out {
                io::write_psd_factorization(path, &gram)?;
            }
            Ok(json!({
                "command": "extract",
                "r": general.r,
                "dims": [general.dim_a(), general.dim_b()],
                "aux_dims": [general.aux_a(), general.aux_b()],
                "gram_residual": gram.residual,
                "probabilities": gram.products(),
            }))
        }
        Command::Reconstruct { factorization, out } => {
            let f = io::read_general_factorization(factorization)?;
            let norm = f.norm_sum();
            let rho = reconstruct_from_factors(&f)?;
            if let Some(path) = out {
                io::write_density(path, &rho)?;
            }
            let rank = numerical_rank(&svd(rho.matrix())?.singulars);
            Ok(json!({
                "command": "reconstruct",
                "r": f.r,
                "dims": [rho.dim_a(), rho.dim_b()],
                "norm_before_rescaling": norm,
                "rank": rank,
                "classical": rho.is_classical(1e-10),
                "diagonal": rho.diagonal(),
            }))
        }
        Command::Simulate { protocol, out } => {
            let spec = io::read_protocol(protocol)?;
            let rho = apply_protocol(&spec)?;
            if let Some(path) = out {
                io::write_density(path, &rho)?;
            }
            let p = measure_computational(&rho)?;
            Ok(json!({
                "command": "simulate",
                "dims": [rho.dim_a(), rho.dim_b()],
                "seed_size_qubits": spec.seed_size_qubits,
                "distribution": p.rows(),
            }))
        }
        Command::Verify { protocol } => {
            let spec = io::read_protocol(protocol)?;
            let rep = verify_generation(&spec)?;
            Ok(json!({
                "command": "verify",
                "eps": spec.eps,
                "fidelity": rep.fidelity,
                "pass": rep.pass,
                "seed_size": rep.seed_size,
            }))
        }
        Command::Bound { rho, out } => {
            let rho = io::read_density(rho)?;
            let b = q_upper_bound(&rho, &opts.solver())?;
            if let Some(path) = out {
                io::write_purification(path, &b.witness)?;
            }
            Ok(json!({
                "command": "bound",
                "qubits": b.qubits,
                "route": b.route,
                "exact": b.exact,
                "witness_schmidt_rank": b.witness.schmidt_rank(),
            }))
        }
    }
}

fn rank_json(command: &str, r: &RankReport) -> Value {
    let attempts: Vec<Value> = r
        .attempts
        .iter()
        .map(|(size, res)| json!({"r": size, "residual": res}))
        .collect();
    json!({
        "command": command,
        "lower": r.lower,
        "upper": r.upper,
        "status": r.status,
        "attempts": attempts,
        "witness_residual": r.witness.as_ref().map(|w| w.residual),
    })
}

fn synth_classical(
    opts: &GlobalOpts,
    dist: &Path,
    factorization: Option<&Path>,
    out: &Path,
) -> Result<Value> {
    let p = io::read_dist(dist, opts.renormalize)?;
    let (witness, status): (PsdFactorization, Value) = match factorization {
        Some(path) => (io::read_psd_factorization(path)?, Value::Null),
        None => {
            let report = psd_rank_search(&p, &opts.solver())?;
            let status = json!(report.status);
            (report.witness.expect("search attaches a witness"), status)
        }
    };
    let state = synth_from_psd(&p, &witness)?;
    let pur = synthesized_purification(&state)?;
    let blocks = pur.schmidt_blocks()?;
    let spec = protocol_for_purification(&pur, p.state(), 0.0)?;

    std::fs::create_dir_all(out)?;
    io::write_purification(&out.join("purification.json"), &pur)?;
    io::write_psd_factorization(&out.join("factorization.json"), &witness)?;
    let manifest = io::write_protocol(out, &spec)?;
    let lower = psd_rank_lower_bound(&p)?;
    let mut report = Map::new();
    report.insert("command".into(), json!("synth"));
    report.insert("route".into(), json!("classical"));
    report.insert("r".into(), json!(witness.r));
    report.insert("lower".into(), json!(lower));
    report.insert("status".into(), status);
    report.insert("schmidt_rank".into(), json!(blocks.r));
    report.insert("seed_size_qubits".into(), json!(spec.seed_size_qubits));
    report.insert("protocol".into(), json!(manifest.display().to_string()));
    Ok(Value::Object(report))
}
