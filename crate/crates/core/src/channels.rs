//! Quantum channels in operator-sum form.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    c64, ensure_finite, ensure_square, frobenius_norm, hermitian_eig, hermitian_part,
    ComplexMatrix, DensityMatrix, MatrixJson,
};
use crate::pauli::{identity2, sigma_x, sigma_y, sigma_z};

/// Tolerance for the trace-preserving and unital flags.
pub const CHANNEL_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct KrausChannel {
    dim: usize,
    operators: Vec<ComplexMatrix>,
    name: String,
    params: BTreeMap<String, f64>,
    checks: ChannelChecks,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelChecks {
    pub trace_preserving: bool,
    pub unital: bool,
    /// ||sum A^dag A - I||_F
    pub trace_preserving_residual: f64,
    /// ||sum A A^dag - I||_F
    pub unital_residual: f64,
}

impl KrausChannel {
    /// Validates shapes, finiteness and sum A^dag A <= I.
    pub fn new(
        name: impl Into<String>,
        operators: Vec<ComplexMatrix>,
        params: BTreeMap<String, f64>,
    ) -> Result<Self> {
        let name = name.into();
        let first = operators
            .first()
            .ok_or_else(|| Error::InvalidChannel(format!("{name}: no Kraus operators")))?;
        let dim = ensure_square(first)?;
        for op in &operators {
            if ensure_square(op)? != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: op.nrows(),
                });
            }
            ensure_finite(op)?;
        }
        let ada = sum_adag_a(&operators, dim);
        let slack = ComplexMatrix::identity(dim, dim) - &ada;
        let min = hermitian_eig(&hermitian_part(&slack))?.min();
        if min < -CHANNEL_TOL {
            return Err(Error::InvalidChannel(format!(
                "{name}: sum A^dag A exceeds the identity (min eigenvalue of I - sum A^dag A is {min:.3e})"
            )));
        }
        let checks = compute_checks(&operators, dim);
        Ok(Self {
            dim,
            operators,
            name,
            params,
            checks,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(
            "identity",
            vec![ComplexMatrix::identity(dim, dim)],
            BTreeMap::new(),
        )
        .expect("identity is a channel")
    }

    pub fn unitary(name: impl Into<String>, u: ComplexMatrix) -> Result<Self> {
        Self::new(name, vec![u], BTreeMap::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn operators(&self) -> &[ComplexMatrix] {
        &self.operators
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn checks(&self) -> ChannelChecks {
        self.checks
    }

    pub fn is_trace_preserving(&self) -> bool {
        self.checks.trace_preserving
    }

    pub fn is_unital(&self) -> bool {
        self.checks.unital
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// sum_i A_i rho A_i^dag on an arbitrary square matrix.
    pub fn apply(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        if rho.nrows() != self.dim || rho.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: rho.nrows(),
            });
        }
        Ok(self
            .operators
            .iter()
            .fold(ComplexMatrix::zeros(self.dim, self.dim), |acc, a| {
                acc + a * rho * a.adjoint()
            }))
    }

    pub fn sum_adag_a(&self) -> ComplexMatrix {
        sum_adag_a(&self.operators, self.dim)
    }

    pub fn sum_a_adag(&self) -> ComplexMatrix {
        sum_a_adag(&self.operators, self.dim)
    }
}

fn sum_adag_a(ops: &[ComplexMatrix], dim: usize) -> ComplexMatrix {
    ops.iter().fold(ComplexMatrix::zeros(dim, dim), |acc, a| {
        acc + a.adjoint() * a
    })
}

fn sum_a_adag(ops: &[ComplexMatrix], dim: usize) -> ComplexMatrix {
    ops.iter().fold(ComplexMatrix::zeros(dim, dim), |acc, a| {
        acc + a * a.adjoint()
    })
}

fn compute_checks(ops: &[ComplexMatrix], dim: usize) -> ChannelChecks {
    let id = ComplexMatrix::identity(dim, dim);
    let tp = frobenius_norm(&(sum_adag_a(ops, dim) - &id));
    let un = frobenius_norm(&(sum_a_adag(ops, dim) - &id));
    ChannelChecks {
        trace_preserving: tp <= CHANNEL_TOL,
        unital: un <= CHANNEL_TOL,
        trace_preserving_residual: tp,
        unital_residual: un,
    }
}

pub fn channel_checks(ch: &KrausChannel) -> ChannelChecks {
    ch.checks
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalKind {
    Depolarizing,
    AmplitudeDamping,
    BitPhaseFlip,
}

impl LocalKind {
    fn short(self) -> &'static str {
        match self {
            LocalKind::Depolarizing => "dep",
            LocalKind::AmplitudeDamping => "ad",
            LocalKind::BitPhaseFlip => "bpf",
        }
    }

    fn param_name(self) -> &'static str {
        match self {
            LocalKind::AmplitudeDamping => "gamma",
            _ => "p",
        }
    }
}

/// Single-qubit noise channel. Operators with an exactly zero coefficient
/// are dropped, so zero noise yields the single operator I.
pub fn make_local_channel(kind: LocalKind, param: f64) -> Result<KrausChannel> {
    if !(0.0..=1.0).contains(&param) {
        return Err(Error::InvalidParameter {
            name: kind.param_name().into(),
            value: param,
            range: "[0, 1]",
        });
    }
    let scaled = |m: ComplexMatrix, w: f64| m * c64(w, 0.0);
    let ops = match kind {
        LocalKind::Depolarizing => {
            let w = (param / 4.0).sqrt();
            vec![
                scaled(identity2(), (1.0 - 3.0 * param / 4.0).sqrt()),
                scaled(sigma_x(), w),
                scaled(sigma_y(), w),
                scaled(sigma_z(), w),
            ]
        }
        LocalKind::AmplitudeDamping => {
            let mut a1 = ComplexMatrix::zeros(2, 2);
            a1[(0, 0)] = c64(1.0, 0.0);
            a1[(1, 1)] = c64((1.0 - param).sqrt(), 0.0);
            // (sqrt(gamma)/2)(sigma_x + i sigma_y) = sqrt(gamma) |0><1|
            let a2 = (sigma_x() + sigma_y() * c64(0.0, 1.0)) * c64(param.sqrt() / 2.0, 0.0);
            vec![a1, a2]
        }
        LocalKind::BitPhaseFlip => vec![
            scaled(identity2(), (1.0 - param).sqrt()),
            scaled(sigma_y(), param.sqrt()),
        ],
    };
    let ops = ops
        .into_iter()
        .filter(|a| frobenius_norm(a) > 0.0)
        .collect();
    let params = BTreeMap::from([(kind.param_name().to_string(), param)]);
    KrausChannel::new(format!("{}:{param}", kind.short()), ops, params)
}

/// All pairwise products A_i (x) B_j.
pub fn tensor_lift(a: &KrausChannel, b: &KrausChannel) -> KrausChannel {
    let ops = a
        .operators
        .iter()
        .flat_map(|x| b.operators.iter().map(move |y| x.kronecker(y)))
        .collect();
    let mut params = a.params.clone();
    for (k, v) in &b.params {
        params.entry(k.clone()).or_insert(*v);
    }
    KrausChannel::new(format!("{}(x){}", a.name, b.name), ops, params)
        .expect("tensor product of channels is a channel")
}

/// The n-fold tensor power of a channel, named like the original.
pub fn lift_n(ch: &KrausChannel, copies: usize) -> KrausChannel {
    let mut out = ch.clone();
    for _ in 1..copies {
        out = tensor_lift(&out, ch);
    }
    out.with_name(ch.name.clone())
}

/// CNOT as the coherent sum (1(x)1 + 1(x)X + Z(x)1 - Z(x)X) / 2, control on
/// the first qubit.
pub fn cnot_matrix() -> ComplexMatrix {
    let (i, x, z) = (identity2(), sigma_x(), sigma_z());
    (i.kronecker(&i) + i.kronecker(&x) + z.kronecker(&i) - z.kronecker(&x)) * c64(0.5, 0.0)
}

pub fn make_cnot() -> KrausChannel {
    KrausChannel::unitary("cnot", cnot_matrix()).expect("CNOT is unitary")
}

/// Output state of a trace-preserving channel.
pub fn apply_channel(ch: &KrausChannel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    if !ch.is_trace_preserving() {
        return Err(Error::InvalidChannel(format!(
            "{} is not trace-preserving; use KrausChannel::apply",
            ch.name
        )));
    }
    let out = hermitian_part(&ch.apply(rho.matrix())?);
    DensityMatrix::new(out)
}

fn sigma_yy() -> ComplexMatrix {
    sigma_y().kronecker(&sigma_y())
}

/// Wootters concurrence of a two-qubit state.
///
/// Uses a factorization rho = W W^dag over the non-negligible spectrum;
/// the values lambda_i are the singular values of W^T (Y (x) Y) W, which
/// avoids square roots of near-zero eigenvalues for pure states.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    const SPECTRUM_CUTOFF: f64 = 1e-13;
    if rho.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: rho.dim(),
        });
    }
    let eig = hermitian_eig(rho.matrix())?;
    let kept: Vec<usize> = (0..4)
        .filter(|&k| eig.values[k] > SPECTRUM_CUTOFF)
        .collect();
    let w = ComplexMatrix::from_fn(4, kept.len(), |i, j| {
        eig.vectors[(i, kept[j])] * c64(eig.values[kept[j]].sqrt(), 0.0)
    });
    let tau = w.transpose() * sigma_yy() * &w;
    let mut lambdas: Vec<f64> = tau.singular_values().iter().copied().collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    lambdas.resize(4, 0.0);
    Ok((lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).max(0.0))
}

/// `name[:param]` as accepted on the command line.
#[derive(Clone, Debug, PartialEq)]
pub enum ChannelSpec {
    Identity,
    Local(LocalKind, f64),
    Cnot,
}

impl FromStr for ChannelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, param) = match s.split_once(':') {
            Some((n, p)) => {
                let v: f64 = p
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad channel parameter in {s:?}")))?;
                (n.trim(), Some(v))
            }
            None => (s.trim(), None),
        };
        let local = |kind| {
            param.map(|p| ChannelSpec::Local(kind, p)).ok_or_else(|| {
                Error::InvalidInput(format!("channel {name} needs a parameter, e.g. {name}:0.1"))
            })
        };
        match name.to_ascii_lowercase().as_str() {
            "id" | "identity" => Ok(ChannelSpec::Identity),
            "cnot" => Ok(ChannelSpec::Cnot),
            "dep" | "depolarizing" => local(LocalKind::Depolarizing),
            "ad" | "amplitude_damping" => local(LocalKind::AmplitudeDamping),
            "bpf" | "bit_phase_flip" => local(LocalKind::BitPhaseFlip),
            other => Err(Error::InvalidInput(format!(
                "unknown channel {other:?} (expected id, dep, ad, bpf or cnot)"
            ))),
        }
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelSpec::Identity => write!(f, "id"),
            ChannelSpec::Cnot => write!(f, "cnot"),
            ChannelSpec::Local(kind, p) => write!(f, "{}:{p}", kind.short()),
        }
    }
}

impl ChannelSpec {
    pub fn with_param(self, param: f64) -> Self {
        match self {
            ChannelSpec::Local(kind, _) => ChannelSpec::Local(kind, param),
            other => other,
        }
    }

    /// Builds the channel for dimension `dim`. Local channels are lifted to
    /// every qubit when `dim = 2^r`.
    pub fn build(&self, dim: usize) -> Result<KrausChannel> {
        let name = self.to_string();
        match self {
            ChannelSpec::Identity => Ok(KrausChannel::identity(dim).with_name(name)),
            ChannelSpec::Cnot => {
                if dim != 4 {
                    return Err(Error::InvalidInput(format!(
                        "cnot needs dimension 4, got {dim}"
                    )));
                }
                Ok(make_cnot())
            }
            ChannelSpec::Local(kind, p) => {
                if !dim.is_power_of_two() || dim < 2 {
                    return Err(Error::InvalidInput(format!(
                        "local qubit channel {name} needs dimension 2^r, got {dim}"
                    )));
                }
                let single = make_local_channel(*kind, *p)?;
                Ok(lift_n(&single, dim.trailing_zeros() as usize).with_name(name))
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct KrausFile {
    dim: usize,
    name: String,
    operators: Vec<MatrixJson>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    params: BTreeMap<String, f64>,
}

pub fn channel_to_json(ch: &KrausChannel) -> String {
    let file = KrausFile {
        dim: ch.dim,
        name: ch.name.clone(),
        operators: ch.operators.iter().map(MatrixJson::from).collect(),
        params: ch.params.clone(),
    };
    serde_json::to_string(&file).expect("Kraus file serializes")
}

pub fn channel_from_json(s: &str) -> Result<KrausChannel> {
    let file: KrausFile = serde_json::from_str(s).map_err(|e| Error::json("Kraus file", e))?;
    let ops = file
        .operators
        .into_iter()
        .map(ComplexMatrix::try_from)
        .collect::<Result<Vec<_>>>()?;
    let ch = KrausChannel::new(file.name, ops, file.params)?;
    if ch.dim != file.dim {
        return Err(Error::DimensionMismatch {
            expected: file.dim,
            found: ch.dim,
        });
    }
    Ok(ch)
}

pub fn save_channel(ch: &KrausChannel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, channel_to_json(ch)).map_err(|e| Error::io(path, e))
}

pub fn load_channel(path: impl AsRef<Path>) -> Result<KrausChannel> {
    let path = path.as_ref();
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    channel_from_json(&s)
}
