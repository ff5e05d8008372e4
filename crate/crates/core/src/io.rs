//! File formats.
//!
//! All JSON documents carry `"format": "qcorr/1"`. Complex matrices use
//! `{rows, cols, data: [[re, im], ...]}` in row-major order; distributions may
//! also be plain CSV (rows index Alice's outcome, columns Bob's). Manifests
//! reference other files by paths relative to the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::classical::{DistMatrix, PsdFactorization};
use crate::error::{Error, Result};
use crate::general::{GeneralFactorization, Purification};
use crate::linalg::{CMatrix, DensityMatrix, C64};
use crate::pure::PureState;
use crate::sim::{LocalChannel, ProtocolSpec, Seed};

pub const FORMAT: &str = "qcorr/1";

fn parse_err(path: &Path, context: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        context: context.into(),
        msg: msg.into(),
    }
}

/// JSON matrix document.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MatrixDoc {
    #[serde(default = "default_format")]
    pub format: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
    /// Register dimensions: `[dim_a, dim_b]` for density matrices,
    /// `[dim_a, aux_a, dim_b, aux_b]` for purifications.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
}

fn default_format() -> String {
    FORMAT.to_string()
}

impl MatrixDoc {
    pub fn from_matrix(m: &CMatrix) -> Self {
        MatrixDoc {
            format: FORMAT.to_string(),
            rows: m.rows(),
            cols: m.cols(),
            data: m.data().iter().map(|z| [z.re, z.im]).collect(),
            dims: None,
        }
    }

    pub fn with_dims(mut self, dims: Vec<usize>) -> Self {
        self.dims = Some(dims);
        self
    }

    pub fn to_matrix(&self) -> Result<CMatrix> {
        check_format(&self.format)?;
        if self.data.len() != self.rows * self.cols {
            return Err(Error::invalid(format!(
                "data has {} entries, shape is {}x{}",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        if let Some(k) = self
            .data
            .iter()
            .position(|z| !z[0].is_finite() || !z[1].is_finite())
        {
            return Err(Error::invalid(format!("data[{k}] is not finite")));
        }
        CMatrix::new(
            self.rows,
            self.cols,
            self.data.iter().map(|z| C64::new(z[0], z[1])).collect(),
        )
    }
}

fn check_format(f: &str) -> Result<()> {
    if f != FORMAT {
        return Err(Error::invalid(format!(
            "unsupported format {f:?}, expected {FORMAT:?}"
        )));
    }
    Ok(())
}

fn check_kind(path: &Path, kind: &str, want: &str) -> Result<()> {
    if kind != want {
        return Err(parse_err(
            path,
            "field kind",
            format!("expected {want:?}, found {kind:?}"),
        ));
    }
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| {
        parse_err(
            path,
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Wraps validation failures of an already-parsed document with its path.
fn in_file<T>(path: &Path, what: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { .. } | Error::Io(_) => e,
        other => parse_err(path, what, other.to_string()),
    })
}

pub fn read_matrix(path: &Path) -> Result<(CMatrix, Option<Vec<usize>>)> {
    let doc: MatrixDoc = read_json(path)?;
    let m = in_file(path, "matrix", doc.to_matrix())?;
    Ok((m, doc.dims))
}

pub fn write_matrix(path: &Path, m: &CMatrix, dims: Option<Vec<usize>>) -> Result<()> {
    let mut doc = MatrixDoc::from_matrix(m);
    doc.dims = dims;
    write_json(path, &doc)
}

/// Pure state stored as its amplitude matrix (rows: Alice, columns: Bob).
pub fn read_state(path: &Path) -> Result<PureState> {
    let (m, _) = read_matrix(path)?;
    in_file(path, "state", PureState::from_amplitude_matrix(&m))
}

pub fn write_state(path: &Path, psi: &PureState) -> Result<()> {
    let m = CMatrix::new(psi.dim_a(), psi.dim_b(), psi.amps().to_vec())?;
    write_matrix(path, &m, None)
}

pub fn read_density(path: &Path) -> Result<DensityMatrix> {
    let (m, dims) = read_matrix(path)?;
    let (a, b) = match dims.as_deref() {
        Some([a, b]) => (*a, *b),
        None => (m.rows(), 1),
        Some(other) => {
            return Err(parse_err(
                path,
                "field dims",
                format!("expected [dim_a, dim_b], got {other:?}"),
            ))
        }
    };
    in_file(path, "density matrix", DensityMatrix::new(m, a, b))
}

pub fn write_density(path: &Path, rho: &DensityMatrix) -> Result<()> {
    write_matrix(path, rho.matrix(), Some(vec![rho.dim_a(), rho.dim_b()]))
}

/// Purification stored as its cut matrix with `dims = [dim_a, aux_a, dim_b, aux_b]`.
pub fn read_purification(path: &Path) -> Result<Purification> {
    let (m, dims) = read_matrix(path)?;
    let [a, ka, b, kb] = match dims.as_deref() {
        Some(&[a, ka, b, kb]) => [a, ka, b, kb],
        None => [m.rows(), 1, m.cols(), 1],
        Some(other) => {
            return Err(parse_err(
                path,
                "field dims",
                format!("expected [dim_a, aux_a, dim_b, aux_b], got {other:?}"),
            ))
        }
    };
    if m.rows() != a * ka || m.cols() != b * kb {
        return Err(parse_err(
            path,
            "field dims",
            "dims do not match the matrix shape",
        ));
    }
    in_file(
        path,
        "purification",
        Purification::new(m.into_data(), a, ka, b, kb),
    )
}

pub fn write_purification(path: &Path, p: &Purification) -> Result<()> {
    write_matrix(path, &p.cut_matrix(), Some(p.register_dims().to_vec()))
}

/// Reads a distribution from CSV or, for `.json` files, the matrix schema.
pub fn read_dist(path: &Path, renormalize: bool) -> Result<DistMatrix> {
    if path.extension().is_some_and(|e| e == "json") {
        let (m, _) = read_matrix(path)?;
        let mut flat = Vec::with_capacity(m.rows() * m.cols());
        for (k, z) in m.data().iter().enumerate() {
            if z.im != 0.0 {
                return Err(parse_err(
                    path,
                    format!("data[{k}]"),
                    "probability has an imaginary part",
                ));
            }
            flat.push(z.re);
        }
        return in_file(
            path,
            "distribution",
            DistMatrix::from_rows(m.rows(), m.cols(), &flat, renormalize),
        );
    }
    let text = fs::read_to_string(path)?;
    parse_dist_csv(path, &text, renormalize)
}

fn parse_dist_csv(path: &Path, text: &str, renormalize: bool) -> Result<DistMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, format!("line {line}"), e.to_string())
        })?;
        let line = rec.position().map_or(rows.len() as u64 + 1, |p| p.line());
        let x = rows.len();
        let mut row = Vec::with_capacity(rec.len());
        for (y, field) in rec.iter().enumerate() {
            let ctx = || format!("line {line}, row {x}, column {y}");
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, ctx(), format!("{field:?} is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(path, ctx(), "value is not finite"));
            }
            if v < -crate::classical::NEGATIVE_TOL {
                return Err(parse_err(path, ctx(), format!("negative probability {v}")));
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    format!("line {line}, row {x}"),
                    format!("{} columns, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, "line 1", "empty distribution"));
    }
    in_file(
        path,
        "distribution",
        crate::classical::validate_dist(&rows, renormalize),
    )
}

pub fn write_dist_csv(path: &Path, p: &DistMatrix) -> Result<()> {
    let mut out = String::new();
    for row in p.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PsdFactorizationDoc {
    pub format: String,
    pub kind: String,
    pub r: usize,
    pub dims: [usize; 2],
    pub c: Vec<MatrixDoc>,
    pub d: Vec<MatrixDoc>,
    pub residual: f64,
}

pub fn write_psd_factorization(path: &Path, f: &PsdFactorization) -> Result<()> {
    write_json(
        path,
        &PsdFactorizationDoc {
            format: FORMAT.into(),
            kind: "psd_factorization".into(),
            r: f.r,
            dims: [f.cs.len(), f.ds.len()],
            c: f.cs.iter().map(MatrixDoc::from_matrix).collect(),
            d: f.ds.iter().map(MatrixDoc::from_matrix).collect(),
            residual: f.residual,
        },
    )
}

pub fn read_psd_factorization(path: &Path) -> Result<PsdFactorization> {
    let doc: PsdFactorizationDoc = read_json(path)?;
    in_file(path, "field format", check_format(&doc.format))?;
    check_kind(path, &doc.kind, "psd_factorization")?;
    if doc.c.len() != doc.dims[0] || doc.d.len() != doc.dims[1] {
        return Err(parse_err(
            path,
            "field dims",
            "factor counts do not match dims",
        ));
    }
    let read_all = |docs: &[MatrixDoc], name: &str| -> Result<Vec<CMatrix>> {
        docs.iter()
            .enumerate()
            .map(|(k, m)| in_file(path, &format!("field {name}[{k}]"), m.to_matrix()))
            .collect()
    };
    let f = PsdFactorization {
        r: doc.r,
        cs: read_all(&doc.c, "c")?,
        ds: read_all(&doc.d, "d")?,
        residual: doc.residual,
    };
    in_file(path, "factorization", f.validate())?;
    Ok(f)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeneralFactorizationDoc {
    pub format: String,
    pub kind: String,
    pub r: usize,
    pub dims: [usize; 2],
    pub a: Vec<MatrixDoc>,
    pub b: Vec<MatrixDoc>,
}

pub fn write_general_factorization(path: &Path, f: &GeneralFactorization) -> Result<()> {
    write_json(
        path,
        &GeneralFactorizationDoc {
            format: FORMAT.into(),
            kind: "general_factorization".into(),
            r: f.r,
            dims: [f.dim_a(), f.dim_b()],
            a: f.as_.iter().map(MatrixDoc::from_matrix).collect(),
            b: f.bs.iter().map(MatrixDoc::from_matrix).collect(),
        },
    )
}

pub fn read_general_factorization(path: &Path) -> Result<GeneralFactorization> {
    let doc: GeneralFactorizationDoc = read_json(path)?;
    in_file(path, "field format", check_format(&doc.format))?;
    check_kind(path, &doc.kind, "general_factorization")?;
    if doc.a.len() != doc.dims[0] || doc.b.len() != doc.dims[1] {
        return Err(parse_err(
            path,
            "field dims",
            "factor counts do not match dims",
        ));
    }
    let read_all = |docs: &[MatrixDoc], name: &str| -> Result<Vec<CMatrix>> {
        docs.iter()
            .enumerate()
            .map(|(k, m)| in_file(path, &format!("field {name}[{k}]"), m.to_matrix()))
            .collect()
    };
    let f = in_file(
        path,
        "factorization",
        GeneralFactorization::new(read_all(&doc.a, "a")?, read_all(&doc.b, "b")?),
    )?;
    if f.r != doc.r {
        return Err(parse_err(
            path,
            "field r",
            format!("declared {}, factors have {}", doc.r, f.r),
        ));
    }
    Ok(f)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChannelDoc {
    pub format: String,
    pub kind: String,
    pub kraus: Vec<MatrixDoc>,
}

pub fn write_channel(path: &Path, ch: &LocalChannel) -> Result<()> {
    write_json(
        path,
        &ChannelDoc {
            format: FORMAT.into(),
            kind: "channel".into(),
            kraus: ch.kraus().iter().map(MatrixDoc::from_matrix).collect(),
        },
    )
}

pub fn read_channel(path: &Path) -> Result<LocalChannel> {
    let doc: ChannelDoc = read_json(path)?;
    in_file(path, "field format", check_format(&doc.format))?;
    check_kind(path, &doc.kind, "channel")?;
    let kraus = doc
        .kraus
        .iter()
        .enumerate()
        .map(|(k, m)| in_file(path, &format!("field kraus[{k}]"), m.to_matrix()))
        .collect::<Result<Vec<_>>>()?;
    in_file(path, "channel", LocalChannel::new(kraus))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum SeedKind {
    Pure,
    Mixed,
}

/// Protocol manifest; file fields are relative to the manifest's directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProtocolDoc {
    pub format: String,
    pub kind: String,
    pub seed: String,
    pub seed_kind: SeedKind,
    pub seed_size_qubits: u32,
    pub alice: String,
    pub bob: String,
    pub target: String,
    pub eps: f64,
}

/// Writes the manifest and its component files into `dir`.
pub fn write_protocol(dir: &Path, spec: &ProtocolSpec) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let seed_kind = match &spec.seed {
        Seed::Pure { dim_a, dim_b, amps } => {
            let m = CMatrix::new(*dim_a, *dim_b, amps.clone())?;
            write_matrix(&dir.join("seed.json"), &m, None)?;
            SeedKind::Pure
        }
        Seed::Mixed(rho) => {
            write_density(&dir.join("seed.json"), rho)?;
            SeedKind::Mixed
        }
    };
    write_channel(&dir.join("alice.json"), &spec.alice)?;
    write_channel(&dir.join("bob.json"), &spec.bob)?;
    write_density(&dir.join("target.json"), &spec.target)?;
    let manifest = dir.join("protocol.json");
    write_json(
        &manifest,
        &ProtocolDoc {
            format: FORMAT.into(),
            kind: "protocol".into(),
            seed: "seed.json".into(),
            seed_kind,
            seed_size_qubits: spec.seed_size_qubits,
            alice: "alice.json".into(),
            bob: "bob.json".into(),
            target: "target.json".into(),
            eps: spec.eps,
        },
    )?;
    Ok(manifest)
}

pub fn read_protocol(path: &Path) -> Result<ProtocolSpec> {
    let doc: ProtocolDoc = read_json(path)?;
    in_file(path, "field format", check_format(&doc.format))?;
    check_kind(path, &doc.kind, "protocol")?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let seed = match doc.seed_kind {
        SeedKind::Pure => {
            let seed_path = base.join(&doc.seed);
            let (m, _) = read_matrix(&seed_path)?;
            Seed::Pure {
                dim_a: m.rows(),
                dim_b: m.cols(),
                amps: m.into_data(),
            }
        }
        SeedKind::Mixed => Seed::Mixed(read_density(&base.join(&doc.seed))?),
    };
    let alice = read_channel(&base.join(&doc.alice))?;
    let bob = read_channel(&base.join(&doc.bob))?;
    let target = read_density(&base.join(&doc.target))?;
    in_file(
        path,
        "protocol",
        ProtocolSpec::new(seed, doc.seed_size_qubits, alice, bob, target, doc.eps),
    )
}
