//! Circuit intermediate representation and its line-oriented text format.
//!
//! ```text
//! # Bell pair with a noisy first qubit
//! qubits 2
//! mode dm
//! gate h 0
//! gate cnot 0 1
//! channel depol 0 p=0.1
//! trace_out 1
//! ```
//!
//! Qubit 0 is the most significant bit of a basis index. Within one qubit the
//! vectorized density matrix is ordered `(ρ00, ρ11, ρ01, ρ10)`.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat2, Mat4, C64, ONE, ZERO};

pub const DEFAULT_MAX_QUBITS: usize = 4;
pub const KRAUS_TOLERANCE: f64 = 1e-10;

/// Local wire order of one qubit's density matrix: `(row, col)` per wire.
pub const LOCAL_WIRE_ORDER: [(usize, usize); 4] = [(0, 0), (1, 1), (0, 1), (1, 0)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Pure,
    Dm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gate {
    Cnot { control: usize, target: usize },
    U1 { q: usize },
    U1Pow { q: usize, m: u8 },
    U2 { q: usize },
    U2Pow { q: usize, m: u8 },
    H { q: usize },
}

impl Gate {
    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::Cnot { control, target } => vec![control, target],
            Gate::U1 { q }
            | Gate::U1Pow { q, .. }
            | Gate::U2 { q }
            | Gate::U2Pow { q, .. }
            | Gate::H { q } => {
                vec![q]
            }
        }
    }

    /// 2×2 matrix of a single-qubit gate; `None` for CNOT.
    pub fn matrix(&self) -> Option<Mat2> {
        match *self {
            Gate::Cnot { .. } => None,
            Gate::U1 { .. } => Some(linalg::u1()),
            Gate::U1Pow { m, .. } => Some(linalg::mat2_pow(&linalg::u1(), m as u32)),
            Gate::U2 { .. } => Some(linalg::u2()),
            Gate::U2Pow { m, .. } => Some(linalg::mat2_pow(&linalg::u2(), m as u32)),
            Gate::H { .. } => Some(linalg::hadamard()),
        }
    }
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Channel {
    Depolarizing {
        q: usize,
        p: f64,
    },
    Erasure {
        q: usize,
    },
    GeneralKraus {
        q: usize,
        #[serde(with = "mat2_list_serde")]
        kraus: Vec<Mat2>,
        /// File the operators were loaded from, kept for printing.
        source: Option<PathBuf>,
    },
    GeneralSuperop {
        q: usize,
        #[serde(with = "mat4_serde")]
        matrix: Mat4,
        source: Option<PathBuf>,
    },
}

impl Channel {
    pub fn qubit(&self) -> usize {
        match *self {
            Channel::Depolarizing { q, .. }
            | Channel::Erasure { q }
            | Channel::GeneralKraus { q, .. }
            | Channel::GeneralSuperop { q, .. } => q,
        }
    }

    /// Kraus operators, when the channel is given in Kraus form.
    pub fn kraus(&self) -> Option<Vec<Mat2>> {
        match self {
            Channel::Depolarizing { p, .. } => Some(depolarizing_kraus(*p)),
            Channel::Erasure { .. } => Some(erasure_kraus()),
            Channel::GeneralKraus { kraus, .. } => Some(kraus.clone()),
            Channel::GeneralSuperop { .. } => None,
        }
    }

    pub fn superop(&self) -> Result<Superoperator4> {
        match self {
            Channel::GeneralSuperop { matrix, .. } => Ok(Superoperator4(*matrix)),
            other => kraus_to_superop(&other.kraus().expect("Kraus form")),
        }
    }

    /// A channel is unital when it maps the identity to the identity.
    pub fn is_unital(&self) -> Result<bool> {
        let o = self.superop()?;
        let out = o.apply(&[ONE, ONE, ZERO, ZERO]);
        Ok((out[0] - ONE).norm() < 1e-10
            && (out[1] - ONE).norm() < 1e-10
            && out[2].norm() < 1e-10
            && out[3].norm() < 1e-10)
    }
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CircuitOp {
    Gate(Gate),
    Channel(Channel),
    TraceOut { q: usize },
}

impl CircuitOp {
    pub fn qubits(&self) -> Vec<usize> {
        match self {
            CircuitOp::Gate(g) => g.qubits(),
            CircuitOp::Channel(c) => vec![c.qubit()],
            CircuitOp::TraceOut { q } => vec![*q],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub name: String,
    pub n_qubits: usize,
    pub mode: Mode,
    pub ops: Vec<CircuitOp>,
}

impl CircuitSpec {
    pub fn new(name: impl Into<String>, n_qubits: usize, mode: Mode, ops: Vec<CircuitOp>) -> Self {
        Self {
            name: name.into(),
            n_qubits,
            mode,
            ops,
        }
    }

    pub fn gate_count(&self) -> usize {
        self.ops
            .iter()
            .filter(|o| matches!(o, CircuitOp::Gate(_)))
            .count()
    }

    pub fn channel_count(&self) -> usize {
        self.ops
            .iter()
            .filter(|o| matches!(o, CircuitOp::Channel(_)))
            .count()
    }

    pub fn traced_qubits(&self) -> Vec<usize> {
        self.ops
            .iter()
            .filter_map(|o| match o {
                CircuitOp::TraceOut { q } => Some(*q),
                _ => None,
            })
            .collect()
    }
}

/// Bit mask of qubit `q` in an `n`-qubit basis index (qubit 0 is the most significant bit).
pub fn qubit_mask(n: usize, q: usize) -> usize {
    1 << (n - 1 - q)
}

pub fn depolarizing_kraus(p: f64) -> Vec<Mat2> {
    let a = C64::new((1.0 - p).sqrt(), 0.0);
    let b = C64::new((p / 3.0).sqrt(), 0.0);
    vec![
        Mat2::identity() * a,
        linalg::pauli_x() * b,
        linalg::pauli_y() * b,
        linalg::pauli_z() * b,
    ]
}

pub fn erasure_kraus() -> Vec<Mat2> {
    vec![
        Mat2::new(ONE, ZERO, ZERO, ZERO),
        Mat2::new(ZERO, ONE, ZERO, ZERO),
    ]
}

/// Single-qubit channel acting on the vectorized density matrix in local wire order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Superoperator4(pub Mat4);

impl Superoperator4 {
    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn apply(&self, v: &[C64; 4]) -> [C64; 4] {
        let mut out = [ZERO; 4];
        for (r, o) in out.iter_mut().enumerate() {
            *o = (0..4).map(|c| self.0[(r, c)] * v[c]).sum();
        }
        out
    }

    /// Largest violation of `Tr(O(ρ)) = Tr(ρ)` over the four matrix units.
    pub fn trace_defect(&self) -> f64 {
        (0..4)
            .map(|c| {
                let tr_in = if c < 2 { ONE } else { ZERO };
                let tr_out = self.0[(0, c)] + self.0[(1, c)];
                (tr_out - tr_in).norm()
            })
            .fold(0.0, f64::max)
    }
}

pub fn kraus_normalization_defect(kraus: &[Mat2]) -> f64 {
    let sum: Mat2 = kraus
        .iter()
        .map(|k| k.adjoint() * k)
        .fold(Mat2::zeros(), |a, b| a + b);
    (sum - Mat2::identity())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Superoperator of `ρ → Σ K ρ K†`, built column by column from the images of
/// the four matrix units `|a⟩⟨b|` in local wire order.
pub fn kraus_to_superop(kraus: &[Mat2]) -> Result<Superoperator4> {
    let deviation = kraus_normalization_defect(kraus);
    if kraus.is_empty() || deviation > KRAUS_TOLERANCE {
        return Err(Error::KrausNormalization {
            deviation: if kraus.is_empty() { 1.0 } else { deviation },
        });
    }
    let mut o = Mat4::zeros();
    for (col, &(a, b)) in LOCAL_WIRE_ORDER.iter().enumerate() {
        let mut unit = Mat2::zeros();
        unit[(a, b)] = ONE;
        let image: Mat2 = kraus
            .iter()
            .map(|k| k * unit * k.adjoint())
            .fold(Mat2::zeros(), |acc, x| acc + x);
        for (row, &(i, j)) in LOCAL_WIRE_ORDER.iter().enumerate() {
            o[(row, col)] = image[(i, j)];
        }
    }
    Ok(Superoperator4(o))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub op_index: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.op_index {
            Some(i) => write!(f, "op {}: {}", i, self.message),
            None => f.write_str(&self.message),
        }
    }
}

pub fn validate(spec: &CircuitSpec) -> Vec<Diagnostic> {
    validate_with_limit(spec, DEFAULT_MAX_QUBITS)
}

pub fn validate_with_limit(spec: &CircuitSpec, max_qubits: usize) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut global = |m: String| {
        out.push(Diagnostic {
            op_index: None,
            message: m,
        })
    };
    if spec.n_qubits == 0 {
        global("qubit count must be positive".into());
    }
    if spec.n_qubits > max_qubits {
        global(format!(
            "qubit count {} exceeds the configured maximum {}",
            spec.n_qubits, max_qubits
        ));
    }
    let mut seen_trace = false;
    let mut traced = Vec::new();
    for (i, op) in spec.ops.iter().enumerate() {
        for m in op_diagnostics(spec.n_qubits, spec.mode, op) {
            out.push(Diagnostic {
                op_index: Some(i),
                message: m,
            });
        }
        match op {
            CircuitOp::TraceOut { q } => {
                seen_trace = true;
                if traced.contains(q) {
                    out.push(Diagnostic {
                        op_index: Some(i),
                        message: format!("qubit {q} traced out twice"),
                    });
                }
                traced.push(*q);
            }
            _ if seen_trace => out.push(Diagnostic {
                op_index: Some(i),
                message: "trace_out must only appear as trailing operations".into(),
            }),
            _ => {}
        }
    }
    if spec.n_qubits > 0 && traced.len() >= spec.n_qubits {
        out.push(Diagnostic {
            op_index: None,
            message: "at least one qubit must remain after trace_out".into(),
        });
    }
    out
}

/// Checks that only depend on one operation.
fn op_diagnostics(n: usize, mode: Mode, op: &CircuitOp) -> Vec<String> {
    let mut out = Vec::new();
    for q in op.qubits() {
        if q >= n {
            out.push(format!(
                "qubit index out of range: {q} (circuit has {n} qubits)"
            ));
        }
    }
    match op {
        CircuitOp::Gate(Gate::Cnot { control, target }) if control == target => {
            out.push("cnot control and target must differ".into());
        }
        CircuitOp::Gate(Gate::U1Pow { m, .. }) if *m > 7 => {
            out.push(format!("u1 power {m} not in 0..7"))
        }
        CircuitOp::Gate(Gate::U2Pow { m, .. }) if *m > 3 => {
            out.push(format!("u2 power {m} not in 0..3"))
        }
        CircuitOp::Channel(ch) => {
            if mode == Mode::Pure {
                out.push("channel operations require mode dm".into());
            }
            match ch {
                Channel::Depolarizing { p, .. } if !(0.0..=1.0).contains(p) || p.is_nan() => {
                    out.push(format!("p out of range: {p}"));
                }
                Channel::GeneralKraus { kraus, .. } => {
                    let d = kraus_normalization_defect(kraus);
                    if kraus.is_empty() || d > KRAUS_TOLERANCE {
                        out.push(format!("Kraus normalization violated (defect {d:.3e})"));
                    }
                }
                Channel::GeneralSuperop { matrix, .. } => {
                    let d = Superoperator4(*matrix).trace_defect();
                    if d > KRAUS_TOLERANCE {
                        out.push(format!(
                            "superoperator is not trace preserving (defect {d:.3e})"
                        ));
                    }
                }
                _ => {}
            }
        }
        CircuitOp::TraceOut { .. } if mode == Mode::Pure => {
            out.push("trace_out requires mode dm".into());
        }
        _ => {}
    }
    out
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub max_qubits: usize,
    /// Directory that relative `file=` paths resolve against.
    pub base_dir: Option<PathBuf>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            max_qubits: DEFAULT_MAX_QUBITS,
            base_dir: None,
        }
    }
}

pub fn parse_circuit(text: &str) -> Result<CircuitSpec> {
    parse_circuit_with(text, &ParseOptions::default())
}

pub fn parse_circuit_file(path: &Path) -> Result<CircuitSpec> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let opts = ParseOptions {
        base_dir: path.parent().map(Path::to_path_buf),
        ..ParseOptions::default()
    };
    let mut spec = parse_circuit_with(&text, &opts)?;
    if spec.name.is_empty() {
        spec.name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    Ok(spec)
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Token {
                    text: &line[s..i],
                    column: s + 1,
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &line[s..],
            column: s + 1,
        });
    }
    out
}

pub fn parse_circuit_with(text: &str, opts: &ParseOptions) -> Result<CircuitSpec> {
    let mut name = String::new();
    let mut n_qubits: Option<usize> = None;
    let mut mode = Mode::Pure;
    let mut ops = Vec::new();
    let mut op_lines = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("");
        let toks = tokenize(line);
        let Some(head) = toks.first() else { continue };
        let err = |column: usize, message: String| Error::Parse {
            line: line_no,
            column,
            message,
        };
        let arg = |i: usize, what: &str| -> Result<&Token<'_>> {
            toks.get(i)
                .ok_or_else(|| err(line.trim_end().len() + 1, format!("missing {what}")))
        };
        let int_arg = |i: usize, what: &str| -> Result<usize> {
            let t = arg(i, what)?;
            t.text.parse::<usize>().map_err(|_| {
                err(
                    t.column,
                    format!("expected integer {what}, found '{}'", t.text),
                )
            })
        };
        let keyed = |i: usize, key: &str| -> Result<(&str, usize)> {
            let t = arg(i, key)?;
            match t.text.split_once('=') {
                Some((k, v)) if k == key => Ok((v, t.column + k.len() + 1)),
                _ => Err(err(
                    t.column,
                    format!("expected {key}=<value>, found '{}'", t.text),
                )),
            }
        };
        let expect_end = |count: usize| -> Result<()> {
            match toks.get(count) {
                Some(t) => Err(err(t.column, format!("unexpected token '{}'", t.text))),
                None => Ok(()),
            }
        };

        let op = match head.text {
            "name" => {
                name = toks[1..]
                    .iter()
                    .map(|t| t.text)
                    .collect::<Vec<_>>()
                    .join(" ");
                continue;
            }
            "qubits" => {
                if !ops.is_empty() {
                    return Err(err(
                        head.column,
                        "qubits must be declared before operations".into(),
                    ));
                }
                let n = int_arg(1, "qubit count")?;
                expect_end(2)?;
                if n == 0 || n > opts.max_qubits {
                    return Err(err(
                        toks[1].column,
                        format!("qubit count {n} not in 1..={}", opts.max_qubits),
                    ));
                }
                n_qubits = Some(n);
                continue;
            }
            "mode" => {
                let t = arg(1, "mode")?;
                mode = match t.text {
                    "pure" => Mode::Pure,
                    "dm" => Mode::Dm,
                    other => return Err(err(t.column, format!("unknown mode '{other}'"))),
                };
                expect_end(2)?;
                continue;
            }
            "gate" => {
                let kind = arg(1, "gate name")?;
                match kind.text {
                    "cnot" => {
                        let g = Gate::Cnot {
                            control: int_arg(2, "control qubit")?,
                            target: int_arg(3, "target qubit")?,
                        };
                        expect_end(4)?;
                        CircuitOp::Gate(g)
                    }
                    "h" => {
                        let q = int_arg(2, "qubit")?;
                        expect_end(3)?;
                        CircuitOp::Gate(Gate::H { q })
                    }
                    "u1" | "u2" => {
                        let q = int_arg(2, "qubit")?;
                        let pow = match toks.get(3) {
                            Some(_) => {
                                let (v, col) = keyed(3, "pow")?;
                                let m: i64 = v.parse().map_err(|_| {
                                    err(col, format!("expected integer power, found '{v}'"))
                                })?;
                                expect_end(4)?;
                                Some(m)
                            }
                            None => None,
                        };
                        let is_u1 = kind.text == "u1";
                        match pow {
                            None if is_u1 => CircuitOp::Gate(Gate::U1 { q }),
                            None => CircuitOp::Gate(Gate::U2 { q }),
                            Some(m) if is_u1 => CircuitOp::Gate(Gate::U1Pow {
                                q,
                                m: m.rem_euclid(8) as u8,
                            }),
                            Some(m) => CircuitOp::Gate(Gate::U2Pow {
                                q,
                                m: m.rem_euclid(4) as u8,
                            }),
                        }
                    }
                    other => return Err(err(kind.column, format!("unknown gate '{other}'"))),
                }
            }
            "channel" => {
                let kind = arg(1, "channel name")?;
                let q = int_arg(2, "qubit")?;
                match kind.text {
                    "depol" => {
                        let (v, col) = keyed(3, "p")?;
                        let p: f64 = v
                            .parse()
                            .map_err(|_| err(col, format!("expected number, found '{v}'")))?;
                        expect_end(4)?;
                        CircuitOp::Channel(Channel::Depolarizing { q, p })
                    }
                    "erase" => {
                        expect_end(3)?;
                        CircuitOp::Channel(Channel::Erasure { q })
                    }
                    "kraus" | "superop" => {
                        let (v, col) = keyed(3, "file")?;
                        expect_end(4)?;
                        let path = PathBuf::from(v);
                        let full = match &opts.base_dir {
                            Some(dir) if path.is_relative() => dir.join(&path),
                            _ => path.clone(),
                        };
                        let matrices = load_matrix_list(&full).map_err(|e| err(col, e))?;
                        if kind.text == "kraus" {
                            let kraus = matrices
                                .iter()
                                .map(|m| {
                                    if m.shape() == (2, 2) {
                                        Ok(Mat2::from_fn(|r, c| m[(r, c)]))
                                    } else {
                                        Err(err(col, "Kraus operators must be 2×2".into()))
                                    }
                                })
                                .collect::<Result<Vec<_>>>()?;
                            CircuitOp::Channel(Channel::GeneralKraus {
                                q,
                                kraus,
                                source: Some(path),
                            })
                        } else {
                            match matrices.as_slice() {
                                [m] if m.shape() == (4, 4) => {
                                    CircuitOp::Channel(Channel::GeneralSuperop {
                                        q,
                                        matrix: Mat4::from_fn(|r, c| m[(r, c)]),
                                        source: Some(path),
                                    })
                                }
                                _ => {
                                    return Err(err(
                                        col,
                                        "superop file must hold one 4×4 matrix".into(),
                                    ))
                                }
                            }
                        }
                    }
                    other => return Err(err(kind.column, format!("unknown channel '{other}'"))),
                }
            }
            "trace_out" => {
                let q = int_arg(1, "qubit")?;
                expect_end(2)?;
                CircuitOp::TraceOut { q }
            }
            other => return Err(err(head.column, format!("unknown directive '{other}'"))),
        };

        let Some(n) = n_qubits else {
            return Err(err(
                head.column,
                "qubits must be declared before operations".into(),
            ));
        };
        if let Some(m) = op_diagnostics(n, mode, &op).into_iter().next() {
            let column = toks.get(2).map_or(head.column, |t| t.column);
            return Err(err(column, m));
        }
        ops.push(op);
        op_lines.push(line_no);
    }

    let Some(n_qubits) = n_qubits else {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            column: 1,
            message: "missing 'qubits' declaration".into(),
        });
    };
    let spec = CircuitSpec {
        name,
        n_qubits,
        mode,
        ops,
    };
    if let Some(d) = validate_with_limit(&spec, opts.max_qubits)
        .into_iter()
        .next()
    {
        let line = d.op_index.map_or(1, |i| op_lines[i]);
        return Err(Error::Parse {
            line,
            column: 1,
            message: d.message,
        });
    }
    Ok(spec)
}

fn load_matrix_list(path: &Path) -> std::result::Result<Vec<linalg::CMat>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let raw: Vec<Vec<Vec<[f64; 2]>>> =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    raw.iter().map(|m| linalg::rows_to_cmat(m)).collect()
}

impl fmt::Display for CircuitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.name.is_empty() {
            writeln!(f, "name {}", self.name)?;
        }
        writeln!(f, "qubits {}", self.n_qubits)?;
        writeln!(
            f,
            "mode {}",
            match self.mode {
                Mode::Pure => "pure",
                Mode::Dm => "dm",
            }
        )?;
        for op in &self.ops {
            writeln!(f, "{op}")?;
        }
        Ok(())
    }
}

impl fmt::Display for CircuitOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CircuitOp::Gate(g) => match *g {
                Gate::Cnot { control, target } => write!(f, "gate cnot {control} {target}"),
                Gate::U1 { q } => write!(f, "gate u1 {q}"),
                Gate::U1Pow { q, m } => write!(f, "gate u1 {q} pow={m}"),
                Gate::U2 { q } => write!(f, "gate u2 {q}"),
                Gate::U2Pow { q, m } => write!(f, "gate u2 {q} pow={m}"),
                Gate::H { q } => write!(f, "gate h {q}"),
            },
            CircuitOp::Channel(c) => match c {
                Channel::Depolarizing { q, p } => write!(f, "channel depol {q} p={p}"),
                Channel::Erasure { q } => write!(f, "channel erase {q}"),
                Channel::GeneralKraus { q, source, .. } => write!(
                    f,
                    "channel kraus {q} file={}",
                    source
                        .as_deref()
                        .map_or("<inline>".into(), |p| p.display().to_string())
                ),
                Channel::GeneralSuperop { q, source, .. } => write!(
                    f,
                    "channel superop {q} file={}",
                    source
                        .as_deref()
                        .map_or("<inline>".into(), |p| p.display().to_string())
                ),
            },
            CircuitOp::TraceOut { q } => write!(f, "trace_out {q}"),
        }
    }
}

mod mat2_list_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Mat2], s: S) -> std::result::Result<S::Ok, S::Error> {
        let raw: Vec<Vec<Vec<[f64; 2]>>> = v
            .iter()
            .map(|m| {
                (0..2)
                    .map(|r| (0..2).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
                    .collect()
            })
            .collect();
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<Mat2>, D::Error> {
        let raw: Vec<Vec<Vec<[f64; 2]>>> = Vec::deserialize(d)?;
        raw.iter()
            .map(|m| {
                let cm = linalg::rows_to_cmat(m).map_err(serde::de::Error::custom)?;
                if cm.shape() != (2, 2) {
                    return Err(serde::de::Error::custom("expected 2×2 matrix"));
                }
                Ok(Mat2::from_fn(|r, c| cm[(r, c)]))
            })
            .collect()
    }
}

mod mat4_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Mat4, s: S) -> std::result::Result<S::Ok, S::Error> {
        linalg::cmat_serde::serialize(&linalg::to_dyn4(m), s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Mat4, D::Error> {
        let cm = linalg::cmat_serde::deserialize(d)?;
        if cm.shape() != (4, 4) {
            return Err(serde::de::Error::custom("expected 4×4 matrix"));
        }
        Ok(Mat4::from_fn(|r, c| cm[(r, c)]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_depolarizing_line() {
        let spec = parse_circuit("qubits 1\nmode dm\nchannel depol 0 p=0.3").unwrap();
        assert_eq!(spec.n_qubits, 1);
        assert_eq!(spec.mode, Mode::Dm);
        assert_eq!(
            spec.ops,
            vec![CircuitOp::Channel(Channel::Depolarizing { q: 0, p: 0.3 })]
        );
    }

    #[test]
    fn parses_bell_prep() {
        let spec = parse_circuit("qubits 2\nmode dm\ngate h 0\ngate cnot 0 1").unwrap();
        assert_eq!(
            spec.ops,
            vec![
                CircuitOp::Gate(Gate::H { q: 0 }),
                CircuitOp::Gate(Gate::Cnot {
                    control: 0,
                    target: 1
                })
            ]
        );
    }

    #[test]
    fn rejects_out_of_range_qubit_with_location() {
        match parse_circuit("qubits 2\ngate u1 5") {
            Err(Error::Parse {
                line,
                column,
                message,
            }) => {
                assert_eq!((line, column), (2, 9));
                assert!(message.contains("qubit index out of range"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_names_and_pure_channels() {
        assert!(matches!(
            parse_circuit("qubits 1\ngate t 0"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_circuit("qubits 1\nmode dm\nchannel amp 0"),
            Err(Error::Parse { .. })
        ));
        let e = parse_circuit("qubits 1\nmode pure\nchannel erase 0").unwrap_err();
        assert!(e.to_string().contains("mode dm"), "{e}");
        let e = parse_circuit("qubits 1\nmode dm\ngate h 0 extra").unwrap_err();
        assert!(e.to_string().contains("unexpected token"), "{e}");
    }

    #[test]
    fn powers_are_reduced() {
        let spec = parse_circuit("qubits 1\ngate u1 0 pow=9\ngate u2 0 pow=-1").unwrap();
        assert_eq!(
            spec.ops,
            vec![
                CircuitOp::Gate(Gate::U1Pow { q: 0, m: 1 }),
                CircuitOp::Gate(Gate::U2Pow { q: 0, m: 3 })
            ]
        );
    }

    #[test]
    fn trace_out_must_trail() {
        let e = parse_circuit("qubits 2\nmode dm\ntrace_out 1\ngate h 0").unwrap_err();
        match e {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 4);
                assert!(message.contains("trailing"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn validate_reports_diagnostics() {
        let bell = parse_circuit("qubits 2\nmode dm\ngate h 0\ngate cnot 0 1").unwrap();
        assert!(validate(&bell).is_empty());

        let bad_p = CircuitSpec::new(
            "",
            1,
            Mode::Dm,
            vec![CircuitOp::Channel(Channel::Depolarizing { q: 0, p: 1.5 })],
        );
        let d = validate(&bad_p);
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("p out of range"));

        let half = C64::new(0.5f64.sqrt(), 0.0);
        let bad_kraus = CircuitSpec::new(
            "",
            1,
            Mode::Dm,
            vec![CircuitOp::Channel(Channel::GeneralKraus {
                q: 0,
                kraus: vec![Mat2::new(ONE, ZERO, ZERO, half)],
                source: None,
            })],
        );
        let d = validate(&bad_kraus);
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("Kraus normalization violated"));
    }

    #[test]
    fn identity_kraus_gives_identity_superop() {
        let o = kraus_to_superop(&[Mat2::identity()]).unwrap();
        assert!((o.0 - Mat4::identity()).norm() < 1e-15);
    }

    #[test]
    fn erasure_superop_matches_single_row() {
        let o = kraus_to_superop(&erasure_kraus()).unwrap();
        let mut expected = Mat4::zeros();
        expected[(0, 0)] = ONE;
        expected[(0, 1)] = ONE;
        assert!((o.0 - expected).norm() < 1e-15);
    }

    #[test]
    fn depolarizing_superop_from_kraus() {
        // Population block mixes with 2p/3, coherences decay as 1 − 4p/3.
        let o = kraus_to_superop(&depolarizing_kraus(0.3)).unwrap();
        let expected = [
            [0.8, 0.2, 0.0, 0.0],
            [0.2, 0.8, 0.0, 0.0],
            [0.0, 0.0, 0.6, 0.0],
            [0.0, 0.0, 0.0, 0.6],
        ];
        for r in 0..4 {
            for c in 0..4 {
                assert!(
                    (o.0[(r, c)] - C64::new(expected[r][c], 0.0)).norm() < 1e-12,
                    "({r},{c})"
                );
            }
        }
    }

    #[test]
    fn kraus_normalization_error() {
        let e = kraus_to_superop(&[Mat2::identity() * C64::new(0.9, 0.0)]).unwrap_err();
        assert!(matches!(e, Error::KrausNormalization { .. }));
    }

    #[test]
    fn kraus_file_is_loaded_relative_to_circuit() {
        let dir = std::env::temp_dir().join(format!("dmwalk-kraus-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("flip.json"), "[[[[0,0],[1,0]],[[1,0],[0,0]]]]").unwrap();
        std::fs::write(
            dir.join("c.qw"),
            "qubits 1\nmode dm\nchannel kraus 0 file=flip.json\n",
        )
        .unwrap();
        let spec = parse_circuit_file(&dir.join("c.qw")).unwrap();
        assert_eq!(spec.name, "c");
        match &spec.ops[0] {
            CircuitOp::Channel(Channel::GeneralKraus { kraus, .. }) => {
                assert!((kraus[0] - linalg::pauli_x()).norm() < 1e-15)
            }
            other => panic!("{other:?}"),
        }
        std::fs::remove_dir_all(dir).ok();
    }
}
