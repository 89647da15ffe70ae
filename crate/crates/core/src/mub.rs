//! Mutually unbiased bases for prime and prime-power dimensions.
//!
//! A [`MubSet`] holds the D+1 bases of a D-dimensional space. Projectors
//! P_m^(g) = |psi_m^(g)><psi_m^(g)| are addressed through [`MubIndex`],
//! whose flat index `g * D + (m - 1)` fixes the vectorization order used by
//! probability tensors, beta matrices and process matrices alike.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2m::Gf2m;
use crate::numerics::{
    c64, ensure_square, frobenius_norm, hermitian_deviation, hermitian_eig, ComplexMatrix,
    ComplexVector,
};
use crate::pauli::{Pauli, PauliString};

/// Largest prime accepted by [`generate_mub_prime`].
pub const MAX_PRIME: usize = 23;
/// Largest exponent accepted by [`generate_mub_two_power`].
pub const MAX_TWO_POWER: u32 = 3;

const PHASE_REFERENCE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MubSource {
    AnalyticPrime,
    PauliPartition,
    File,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MubIndex {
    /// Basis label, 0..=D.
    pub basis: usize,
    /// State label, 1..=D.
    pub state: usize,
    pub flat: usize,
}

impl MubIndex {
    pub fn new(dim: usize, basis: usize, state: usize) -> Option<Self> {
        if basis > dim || state == 0 || state > dim {
            return None;
        }
        Some(Self {
            basis,
            state,
            flat: basis * dim + state - 1,
        })
    }

    pub fn from_flat(dim: usize, flat: usize) -> Option<Self> {
        if flat >= dim * (dim + 1) {
            return None;
        }
        Some(Self {
            basis: flat / dim,
            state: flat % dim + 1,
            flat,
        })
    }
}

#[derive(Clone, Debug)]
pub struct MubSet {
    dim: usize,
    bases: Vec<Vec<ComplexVector>>,
    source: MubSource,
    /// D x (D^2 + D), columns in flat order.
    columns: ComplexMatrix,
}

impl MubSet {
    /// Structural checks only: D+1 bases of D finite vectors with D
    /// components. Use [`verify_mub`] for the overlap conditions.
    pub fn new(dim: usize, bases: Vec<Vec<ComplexVector>>, source: MubSource) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        if bases.len() != dim + 1 {
            return Err(Error::InvalidInput(format!(
                "expected {} bases for dimension {dim}, found {}",
                dim + 1,
                bases.len()
            )));
        }
        for (g, basis) in bases.iter().enumerate() {
            if basis.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "basis {g} has {} vectors, expected {dim}",
                    basis.len()
                )));
            }
            for v in basis {
                if v.len() != dim {
                    return Err(Error::InvalidInput(format!(
                        "basis {g} has a vector of length {}, expected {dim}",
                        v.len()
                    )));
                }
                if !v.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                    return Err(Error::NonFinite);
                }
            }
        }
        let n = dim * (dim + 1);
        let columns = ComplexMatrix::from_fn(dim, n, |k, flat| bases[flat / dim][flat % dim][k]);
        Ok(Self {
            dim,
            bases,
            source,
            columns,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source(&self) -> MubSource {
        self.source
    }

    pub fn num_bases(&self) -> usize {
        self.dim + 1
    }

    pub fn num_projectors(&self) -> usize {
        self.dim * (self.dim + 1)
    }

    pub fn bases(&self) -> &[Vec<ComplexVector>] {
        &self.bases
    }

    pub fn basis(&self, gamma: usize) -> &[ComplexVector] {
        &self.bases[gamma]
    }

    /// |psi_m^(gamma)> with `state` 1-based.
    pub fn vector(&self, gamma: usize, state: usize) -> &ComplexVector {
        &self.bases[gamma][state - 1]
    }

    pub fn index(&self, flat: usize) -> MubIndex {
        MubIndex::from_flat(self.dim, flat).expect("flat index in range")
    }

    pub fn indices(&self) -> impl Iterator<Item = MubIndex> + '_ {
        (0..self.num_projectors()).map(|f| self.index(f))
    }

    /// All basis vectors as columns, in flat order.
    pub fn columns(&self) -> &ComplexMatrix {
        &self.columns
    }

    /// Gram matrix G[a, b] = <psi_a|psi_b> over flat indices.
    pub fn gram(&self) -> ComplexMatrix {
        self.columns.adjoint() * &self.columns
    }

    pub fn projector_matrix(&self, flat: usize) -> ComplexMatrix {
        let v = self.columns.column(flat);
        v * v.adjoint()
    }
}

#[derive(Clone, Debug)]
pub struct Projector {
    pub basis: usize,
    pub state: usize,
    pub matrix: ComplexMatrix,
}

/// Projectors in flat order.
pub fn projectors(set: &MubSet) -> Vec<Projector> {
    set.indices()
        .map(|idx| Projector {
            basis: idx.basis,
            state: idx.state,
            matrix: set.projector_matrix(idx.flat),
        })
        .collect()
}

pub fn is_prime(n: usize) -> bool {
    n >= 2
        && (2..)
            .take_while(|d| d * d <= n)
            .all(|d| !n.is_multiple_of(d))
}

/// (p, r) with D = p^r, or `None` if D is not a prime power.
pub fn prime_power(dim: usize) -> Option<(usize, u32)> {
    if dim < 2 {
        return None;
    }
    let p = (2..=dim).find(|d| dim.is_multiple_of(*d))?;
    let mut rest = dim;
    let mut r = 0;
    while rest.is_multiple_of(p) {
        rest /= p;
        r += 1;
    }
    (rest == 1).then_some((p, r))
}

/// Subsystem dimensions used for factorizability: qubits for 2^r, a single
/// factor for primes.
pub fn default_factorization(dim: usize) -> Vec<usize> {
    match prime_power(dim) {
        Some((p, r)) => vec![p; r as usize],
        None => vec![dim],
    }
}

fn normalize_phase(v: &mut ComplexVector) {
    let norm = v.norm();
    if norm > 0.0 {
        *v /= c64(norm, 0.0);
    }
    if let Some(z) = v.iter().find(|z| z.norm() > PHASE_REFERENCE_TOL).copied() {
        let phase = z.conj() / z.norm();
        *v *= phase;
    }
}

/// Computational basis plus the quadratic-phase bases
/// psi_m^(g)[k] = exp(2 pi i ((g-1) k^2 + m k) / p) / sqrt(p) for odd p.
/// For p = 2 the eigenbases of sigma_z, sigma_x, sigma_y.
pub fn generate_mub_prime(p: usize) -> Result<MubSet> {
    if !is_prime(p) {
        return Err(Error::NotPrime(p));
    }
    if p > MAX_PRIME {
        return Err(Error::UnsupportedDimension {
            dim: p,
            reason: format!("primes above {MAX_PRIME} are outside the supported range"),
        });
    }
    let computational: Vec<ComplexVector> = (0..p)
        .map(|m| ComplexVector::from_fn(p, |k, _| c64(if k == m { 1.0 } else { 0.0 }, 0.0)))
        .collect();
    let mut bases = vec![computational];
    if p == 2 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        bases.push(vec![
            ComplexVector::from_vec(vec![c64(s, 0.), c64(s, 0.)]),
            ComplexVector::from_vec(vec![c64(s, 0.), c64(-s, 0.)]),
        ]);
        bases.push(vec![
            ComplexVector::from_vec(vec![c64(s, 0.), c64(0., s)]),
            ComplexVector::from_vec(vec![c64(s, 0.), c64(0., -s)]),
        ]);
    } else {
        let amp = 1.0 / (p as f64).sqrt();
        for g in 0..p {
            let basis = (0..p)
                .map(|m| {
                    ComplexVector::from_fn(p, |k, _| {
                        let exponent = (g * k * k + m * k) % p;
                        let theta = 2.0 * std::f64::consts::PI * exponent as f64 / p as f64;
                        c64(amp * theta.cos(), amp * theta.sin())
                    })
                })
                .collect();
            bases.push(basis);
        }
    }
    MubSet::new(p, bases, MubSource::AnalyticPrime)
}

/// The five commuting operator triples defining the two-qubit bases, in row
/// order alpha = 0..4.
pub fn two_qubit_table() -> Vec<Vec<PauliString>> {
    [
        ["ZI", "IZ", "ZZ"],
        ["XI", "IX", "XX"],
        ["YI", "IY", "YY"],
        ["XY", "ZX", "YZ"],
        ["YX", "ZY", "XZ"],
    ]
    .iter()
    .map(|row| row.iter().map(|s| PauliString::parse(s).unwrap()).collect())
    .collect()
}

/// Partition of the 4^r - 1 nontrivial r-qubit Pauli strings into 2^r + 1
/// commuting classes. Class 0 is the Z-type class; class 1 + a holds the
/// strings X^x Z^(a x) for field elements x != 0, with exponents read
/// through the trace-dual coordinates of GF(2^r).
pub fn pauli_partition(r: u32) -> Result<Vec<Vec<PauliString>>> {
    if r == 2 {
        return Ok(two_qubit_table());
    }
    let field = Gf2m::new(r).ok_or_else(|| Error::UnsupportedDimension {
        dim: 1 << r,
        reason: format!("2^r bases are supported for 1 <= r <= {MAX_TWO_POWER}"),
    })?;
    let q = field.order();
    let string = |x: u32, z: u32| -> PauliString {
        let zbits = field.dual_coordinates(z);
        PauliString(
            (0..r)
                .map(|i| Pauli::from_bits((x >> i) & 1 == 1, (zbits >> i) & 1 == 1))
                .collect(),
        )
    };
    let mut classes = vec![(1..q).map(|z| string(0, z)).collect::<Vec<_>>()];
    for a in 0..q {
        classes.push((1..q).map(|x| string(x, field.mul(a, x))).collect());
    }
    Ok(classes)
}

/// Bases 2^r + 1 as the common eigenbases of the commuting Pauli classes.
pub fn generate_mub_two_power(r: u32) -> Result<MubSet> {
    if !(1..=MAX_TWO_POWER).contains(&r) {
        return Err(Error::UnsupportedDimension {
            dim: 1usize << r.min(31),
            reason: format!("2^r bases are supported for 1 <= r <= {MAX_TWO_POWER}"),
        });
    }
    let bases = pauli_partition(r)?
        .iter()
        .map(|class| {
            let ops: Vec<ComplexMatrix> = class.iter().map(|p| p.matrix()).collect();
            common_eigenbasis(&ops)
        })
        .collect::<Result<Vec<_>>>()?;
    MubSet::new(1 << r, bases, MubSource::PauliPartition)
}

/// Dispatch on the dimension: primes through the analytic construction,
/// 4 and 8 through Pauli partitions.
pub fn generate_mub(dim: usize) -> Result<MubSet> {
    match prime_power(dim) {
        Some((_, 1)) => generate_mub_prime(dim),
        Some((2, r)) if r <= MAX_TWO_POWER => generate_mub_two_power(r),
        Some((p, r)) => Err(Error::UnsupportedDimension {
            dim,
            reason: format!(
                "{p}^{r} is a prime power but only primes up to {MAX_PRIME} and 2^r with r <= {MAX_TWO_POWER} are built in; load a basis file instead"
            ),
        }),
        None => Err(Error::UnsupportedDimension {
            dim,
            reason: "maximal MUB sets require a prime-power dimension D = p^r".into(),
        }),
    }
}

/// Simultaneous orthonormal eigenbasis of mutually commuting Hermitian
/// operators.
///
/// Diagonalizes sum_k w_k O_k with w = (1, 3, 9, ...), retrying with random
/// weights when eigenvalues collide. Vectors are ordered by their
/// eigenvalue pattern (value under the first operator descending, then the
/// second, ...) and phase-normalized so the first nonzero component is real
/// positive.
pub fn common_eigenbasis(ops: &[ComplexMatrix]) -> Result<Vec<ComplexVector>> {
    const COMMUTE_TOL: f64 = 1e-10;
    const GAP_TOL: f64 = 1e-6;
    const EIGEN_TOL: f64 = 1e-8;
    const RETRIES: usize = 5;

    let first = ops
        .first()
        .ok_or_else(|| Error::InvalidInput("no operators given".into()))?;
    let dim = ensure_square(first)?;
    for op in ops {
        if ensure_square(op)? != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: op.nrows(),
            });
        }
        let dev = hermitian_deviation(op);
        if dev > COMMUTE_TOL {
            return Err(Error::NotHermitian(dev));
        }
    }
    let mut worst = 0.0f64;
    for (i, a) in ops.iter().enumerate() {
        for b in &ops[i + 1..] {
            worst = worst.max(frobenius_norm(&(a * b - b * a)));
        }
    }
    if worst > COMMUTE_TOL {
        return Err(Error::NonCommuting(worst));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x6d75_6273);
    for attempt in 0..=RETRIES {
        let weights: Vec<f64> = if attempt == 0 {
            (0..ops.len()).map(|k| 3f64.powi(k as i32)).collect()
        } else {
            (0..ops.len()).map(|_| rng.random_range(0.1..1.0)).collect()
        };
        let mut combo = ComplexMatrix::zeros(dim, dim);
        for (w, op) in weights.iter().zip(ops) {
            combo += op * c64(*w, 0.0);
        }
        let eig = hermitian_eig(&combo)?;
        let separated = eig.values.windows(2).all(|w| w[1] - w[0] > GAP_TOL);
        if !separated {
            continue;
        }
        let mut vectors: Vec<(Vec<f64>, ComplexVector)> = Vec::with_capacity(dim);
        for k in 0..dim {
            let mut v: ComplexVector = eig.vectors.column(k).into_owned();
            normalize_phase(&mut v);
            let mut pattern = Vec::with_capacity(ops.len());
            for op in ops {
                let ov = op * &v;
                let lam = v.dotc(&ov);
                let residual = (&ov - &v * lam).norm();
                if residual > EIGEN_TOL {
                    return Err(Error::UnresolvedDegeneracy {
                        attempts: attempt + 1,
                    });
                }
                pattern.push(lam.re);
            }
            vectors.push((pattern, v));
        }
        vectors.sort_by(|(a, _), (b, _)| {
            for (x, y) in a.iter().zip(b) {
                if (x - y).abs() > EIGEN_TOL {
                    return y.total_cmp(x);
                }
            }
            std::cmp::Ordering::Equal
        });
        return Ok(vectors.into_iter().map(|(_, v)| v).collect());
    }
    Err(Error::UnresolvedDegeneracy {
        attempts: RETRIES + 1,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub dim: usize,
    /// max |Tr(P_m P_n) - delta_mn| within a basis.
    pub max_orthonormality_violation: f64,
    /// max |Tr(P_m^(g) P_n^(b)) - 1/D| across bases.
    pub max_unbiasedness_violation: f64,
    pub tol: f64,
    pub pass: bool,
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "D={} orthonormality {:.3e}, unbiasedness {:.3e}, tol {:.1e}: {}",
            self.dim,
            self.max_orthonormality_violation,
            self.max_unbiasedness_violation,
            self.tol,
            if self.pass { "pass" } else { "FAIL" }
        )
    }
}

/// Checks Tr(P_m^(g) P_n^(b)) = delta_bg delta_mn + (1 - delta_bg) / D over
/// every pair of projectors.
pub fn verify_mub(set: &MubSet, tol: f64) -> VerifyReport {
    let dim = set.dim();
    let gram = set.gram();
    let n = set.num_projectors();
    let mut ortho = 0.0f64;
    let mut unbiased = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            let overlap = gram[(a, b)].norm_sqr();
            let (ia, ib) = (set.index(a), set.index(b));
            if ia.basis == ib.basis {
                let expected = if ia.state == ib.state { 1.0 } else { 0.0 };
                ortho = ortho.max((overlap - expected).abs());
            } else {
                unbiased = unbiased.max((overlap - 1.0 / dim as f64).abs());
            }
        }
    }
    VerifyReport {
        dim,
        max_orthonormality_violation: ortho,
        max_unbiasedness_violation: unbiased,
        tol,
        pass: ortho <= tol && unbiased <= tol,
    }
}

/// Whether every vector is a product state with respect to the given
/// subsystem dimensions.
pub fn factorizability(basis: &[ComplexVector], factorization: &[usize]) -> Result<bool> {
    const SCHMIDT_TOL: f64 = 1e-10;
    let total: usize = factorization.iter().product();
    if factorization.is_empty() || factorization.contains(&0) {
        return Err(Error::InvalidInput("empty factorization".into()));
    }
    for v in basis {
        if v.len() != total {
            return Err(Error::InvalidInput(format!(
                "factorization {factorization:?} has product {total}, vectors have dimension {}",
                v.len()
            )));
        }
    }
    if factorization.len() == 1 {
        return Ok(true);
    }
    for v in basis {
        let v = v / c64(v.norm(), 0.0);
        for (site, &d) in factorization.iter().enumerate() {
            // stride of this site in the row-major multi-index
            let stride: usize = factorization[site + 1..].iter().product();
            let rest = total / d;
            let m = ComplexMatrix::from_fn(d, rest, |row, col| {
                let low = col % stride;
                let high = col / stride;
                v[high * d * stride + row * stride + low]
            });
            let sv = m.singular_values();
            let top = sv.iter().cloned().fold(0.0, f64::max);
            if (top - 1.0).abs() > SCHMIDT_TOL {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Per-basis CNOT costs C_alpha for MUB measurements.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityModel {
    pub c_alpha: Vec<u64>,
    pub factorization: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityTotals {
    /// C = sum of C_alpha.
    pub total: u64,
    /// D * C^2.
    pub qpt_gates: u64,
}

impl ComplexityModel {
    /// Zero for factorizable bases and (number of subsystems - 1) otherwise.
    pub fn heuristic(set: &MubSet, factorization: &[usize]) -> Result<Self> {
        let entangling = factorization.len().saturating_sub(1) as u64;
        let c_alpha = set
            .bases()
            .iter()
            .map(|b| factorizability(b, factorization).map(|f| if f { 0 } else { entangling }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            c_alpha,
            factorization: factorization.to_vec(),
        })
    }
}

pub fn complexity_totals(model: &ComplexityModel, dim: usize) -> Result<ComplexityTotals> {
    if model.c_alpha.len() != dim + 1 {
        return Err(Error::InvalidInput(format!(
            "expected {} per-basis costs for D={dim}, found {}",
            dim + 1,
            model.c_alpha.len()
        )));
    }
    let total: u64 = model.c_alpha.iter().sum();
    Ok(ComplexityTotals {
        total,
        qpt_gates: dim as u64 * total * total,
    })
}

#[derive(Serialize, Deserialize)]
struct MubFile {
    dim: usize,
    bases: Vec<Vec<Vec<[f64; 2]>>>,
}

pub fn mub_to_json(set: &MubSet) -> String {
    let file = MubFile {
        dim: set.dim(),
        bases: set
            .bases()
            .iter()
            .map(|b| {
                b.iter()
                    .map(|v| v.iter().map(|z| [z.re, z.im]).collect())
                    .collect()
            })
            .collect(),
    };
    serde_json::to_string(&file).expect("basis file serializes")
}

/// Parses a basis file with structural checks but without [`verify_mub`].
pub fn mub_from_json_unverified(s: &str) -> Result<MubSet> {
    let file: MubFile = serde_json::from_str(s).map_err(|e| Error::json("basis file", e))?;
    let bases = file
        .bases
        .into_iter()
        .map(|b| {
            b.into_iter()
                .map(|v| {
                    ComplexVector::from_iterator(v.len(), v.into_iter().map(|[re, im]| c64(re, im)))
                })
                .collect()
        })
        .collect();
    MubSet::new(file.dim, bases, MubSource::File)
}

pub fn mub_from_json(s: &str, tol: f64) -> Result<MubSet> {
    let set = mub_from_json_unverified(s)?;
    let report = verify_mub(&set, tol);
    if !report.pass {
        return Err(Error::VerificationFailed(report));
    }
    Ok(set)
}

pub fn save_mub(set: &MubSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, mub_to_json(set)).map_err(|e| Error::io(path, e))
}

/// Loads and re-verifies a basis file at tolerance 1e-10.
pub fn load_mub(path: impl AsRef<Path>) -> Result<MubSet> {
    let path = path.as_ref();
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    mub_from_json(&s, 1e-10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{kron, trace};
    use crate::pauli::{sigma_x, sigma_y, sigma_z};

    fn partial_trace_second(rho: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix::from_fn(2, 2, |i, j| {
            rho[(2 * i, 2 * j)] + rho[(2 * i + 1, 2 * j + 1)]
        })
    }

    fn partial_trace_first(rho: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix::from_fn(2, 2, |i, j| rho[(i, j)] + rho[(2 + i, 2 + j)])
    }

    #[test]
    fn flat_index_is_bijective() {
        for dim in [2, 3, 4, 5] {
            let mut seen = vec![false; dim * (dim + 1)];
            for g in 0..=dim {
                for m in 1..=dim {
                    let idx = MubIndex::new(dim, g, m).unwrap();
                    assert!(!seen[idx.flat]);
                    seen[idx.flat] = true;
                    assert_eq!(MubIndex::from_flat(dim, idx.flat), Some(idx));
                }
            }
            assert!(seen.iter().all(|s| *s));
            assert!(MubIndex::new(dim, 0, 0).is_none());
            assert!(MubIndex::from_flat(dim, dim * (dim + 1)).is_none());
        }
    }

    #[test]
    fn prime_power_detection() {
        assert_eq!(prime_power(4), Some((2, 2)));
        assert_eq!(prime_power(7), Some((7, 1)));
        assert_eq!(prime_power(27), Some((3, 3)));
        assert_eq!(prime_power(6), None);
        assert_eq!(prime_power(1), None);
        assert!(is_prime(23) && !is_prime(21) && !is_prime(1));
    }

    #[test]
    fn qubit_triple() {
        let set = generate_mub_prime(2).unwrap();
        assert_eq!(set.num_bases(), 3);
        for (g, op) in [sigma_z(), sigma_x(), sigma_y()].iter().enumerate() {
            for (m, sign) in [(1, 1.0), (2, -1.0)] {
                let v = set.vector(g, m);
                assert!((op * v - v * c64(sign, 0.0)).norm() < 1e-12);
            }
        }
        let r = verify_mub(&set, 1e-12);
        assert!(r.pass, "{r}");
    }

    #[test]
    fn odd_primes_pass_verification() {
        for p in [3, 5, 7, 11, 13, 23] {
            let set = generate_mub_prime(p).unwrap();
            assert_eq!(set.num_bases(), p + 1);
            let r = verify_mub(&set, 1e-12);
            assert!(r.pass, "{r}");
        }
    }

    #[test]
    fn prime_generator_rejects() {
        assert!(matches!(generate_mub_prime(4), Err(Error::NotPrime(4))));
        assert!(matches!(
            generate_mub_prime(29),
            Err(Error::UnsupportedDimension { .. })
        ));
    }

    #[test]
    fn two_power_one_matches_prime_two() {
        let a = generate_mub_two_power(1).unwrap();
        let b = generate_mub_prime(2).unwrap();
        for flat in 0..6 {
            let overlap = a
                .columns()
                .column(flat)
                .dotc(&b.columns().column(flat))
                .norm();
            assert!((overlap - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_power_sets_verify() {
        for r in 1..=3 {
            let set = generate_mub_two_power(r).unwrap();
            assert_eq!(set.num_bases(), (1 << r) + 1);
            let rep = verify_mub(&set, 1e-10);
            assert!(rep.pass, "{rep}");
        }
        assert!(generate_mub_two_power(0).is_err());
        assert!(generate_mub_two_power(4).is_err());
    }

    #[test]
    fn partition_covers_all_strings_once() {
        for r in 1..=3u32 {
            let classes = pauli_partition(r).unwrap();
            assert_eq!(classes.len(), (1 << r) + 1);
            let mut all: Vec<String> = classes.iter().flatten().map(|p| p.to_string()).collect();
            let count = all.len();
            all.sort();
            all.dedup();
            assert_eq!(all.len(), count);
            assert_eq!(count, (1usize << (2 * r)) - 1);
            for class in &classes {
                assert!(class.iter().all(|p| !p.is_identity()));
                for a in class {
                    for b in class {
                        assert!(a.commutes_with(b));
                    }
                }
            }
        }
    }

    #[test]
    fn table_row_zero_is_computational_basis() {
        let ops: Vec<_> = two_qubit_table()[0].iter().map(|p| p.matrix()).collect();
        let basis = common_eigenbasis(&ops).unwrap();
        for (k, v) in basis.iter().enumerate() {
            for j in 0..4 {
                let expected = if j == k { 1.0 } else { 0.0 };
                assert!(
                    (v[j] - c64(expected, 0.0)).norm() < 1e-12,
                    "state {k} comp {j}"
                );
            }
        }
    }

    #[test]
    fn table_row_three_is_maximally_entangled() {
        let ops: Vec<_> = two_qubit_table()[3].iter().map(|p| p.matrix()).collect();
        let basis = common_eigenbasis(&ops).unwrap();
        let half = ComplexMatrix::identity(2, 2) * c64(0.5, 0.0);
        for v in &basis {
            for op in &ops {
                let lam = v.dotc(&(op * v));
                assert!((op * v - v * lam).norm() < 1e-8);
            }
            let rho = v * v.adjoint();
            assert!(frobenius_norm(&(partial_trace_first(&rho) - &half)) < 1e-10);
            assert!(frobenius_norm(&(partial_trace_second(&rho) - &half)) < 1e-10);
        }
        assert!(!factorizability(&basis, &[2, 2]).unwrap());
    }

    #[test]
    fn common_eigenbasis_single_sigma_z() {
        let basis = common_eigenbasis(&[sigma_z()]).unwrap();
        assert!((basis[0][0] - c64(1., 0.)).norm() < 1e-12);
        assert!((basis[1][1] - c64(1., 0.)).norm() < 1e-12);
    }

    #[test]
    fn common_eigenbasis_errors() {
        assert!(matches!(
            common_eigenbasis(&[sigma_x(), sigma_z()]),
            Err(Error::NonCommuting(_))
        ));
        assert!(matches!(
            common_eigenbasis(&[ComplexMatrix::identity(2, 2)]),
            Err(Error::UnresolvedDegeneracy { .. })
        ));
        assert!(common_eigenbasis(&[]).is_err());
    }

    #[test]
    fn eigen_relations_hold_for_table_rows() {
        let set = generate_mub_two_power(2).unwrap();
        for (alpha, row) in two_qubit_table().iter().enumerate() {
            for op in row.iter().map(|p| p.matrix()) {
                for v in set.basis(alpha) {
                    let lam = v.dotc(&(&op * v));
                    assert!((&op * v - v * lam).norm() <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn trace_relation_for_d4() {
        let set = generate_mub_two_power(2).unwrap();
        let ps = projectors(&set);
        assert_eq!(ps.len(), 20);
        let a = &ps[MubIndex::new(4, 2, 1).unwrap().flat];
        let b = &ps[MubIndex::new(4, 2, 3).unwrap().flat];
        assert!(trace(&(&a.matrix * &b.matrix)).norm() < 1e-12);
        let c = &ps[MubIndex::new(4, 4, 2).unwrap().flat];
        assert!((trace(&(&a.matrix * &c.matrix)).re - 0.25).abs() < 1e-12);
    }

    #[test]
    fn projectors_are_complete_and_idempotent() {
        for dim in [2, 3, 4] {
            let set = generate_mub(dim).unwrap();
            let ps = projectors(&set);
            assert_eq!(ps.len(), dim * dim + dim);
            for g in 0..=dim {
                let sum = ps
                    .iter()
                    .filter(|p| p.basis == g)
                    .fold(ComplexMatrix::zeros(dim, dim), |acc, p| acc + &p.matrix);
                assert!(frobenius_norm(&(sum - ComplexMatrix::identity(dim, dim))) < 1e-12);
            }
            for p in &ps {
                assert!(frobenius_norm(&(&p.matrix * &p.matrix - &p.matrix)) < 1e-12);
                assert!((trace(&p.matrix).re - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn factorizability_cases() {
        let set = generate_mub_two_power(2).unwrap();
        let expected = [true, true, true, false, false];
        for (alpha, want) in expected.iter().enumerate() {
            assert_eq!(
                factorizability(set.basis(alpha), &[2, 2]).unwrap(),
                *want,
                "alpha {alpha}"
            );
            assert!(factorizability(set.basis(alpha), &[4]).unwrap());
        }
        assert!(factorizability(set.basis(0), &[2, 3]).is_err());

        // global phases do not matter
        let phased: Vec<_> = set.basis(1).iter().map(|v| v * c64(0.6, 0.8)).collect();
        assert!(factorizability(&phased, &[2, 2]).unwrap());

        let prod = kron(
            &ComplexMatrix::from_column_slice(2, 1, &[c64(1., 0.), c64(0., 1.)]),
            &ComplexMatrix::from_column_slice(4, 1, &[c64(0.5, 0.); 4]),
        );
        let v: ComplexVector = prod.column(0).into_owned();
        assert!(factorizability(std::slice::from_ref(&v), &[2, 2, 2]).unwrap());
        assert!(factorizability(&[v], &[2, 4]).unwrap());
    }

    #[test]
    fn complexity_accounting() {
        let set = generate_mub_two_power(2).unwrap();
        let model = ComplexityModel::heuristic(&set, &[2, 2]).unwrap();
        assert_eq!(model.c_alpha, vec![0, 0, 0, 1, 1]);
        let t = complexity_totals(&model, 4).unwrap();
        assert_eq!((t.total, t.qpt_gates), (2, 16));

        let zero = ComplexityModel {
            c_alpha: vec![0; 3],
            factorization: vec![2],
        };
        assert_eq!(complexity_totals(&zero, 2).unwrap().qpt_gates, 0);
        assert!(complexity_totals(&zero, 4).is_err());

        let qubit = generate_mub_prime(2).unwrap();
        let m = ComplexityModel::heuristic(&qubit, &[2]).unwrap();
        assert_eq!(
            complexity_totals(&m, 2).unwrap(),
            ComplexityTotals {
                total: 0,
                qpt_gates: 0
            }
        );
    }

    #[test]
    fn json_round_trip_is_exact() {
        let set = generate_mub(4).unwrap();
        let back = mub_from_json(&mub_to_json(&set), 1e-10).unwrap();
        assert_eq!(back.source(), MubSource::File);
        assert_eq!(back.columns(), set.columns());
    }

    #[test]
    fn load_rejects_non_unit_vector() {
        let set = generate_mub(2).unwrap();
        let mut bases = set.bases().to_vec();
        bases[1][0] *= c64(1.01, 0.0);
        let bad = MubSet::new(2, bases, MubSource::File).unwrap();
        assert!(matches!(
            mub_from_json(&mub_to_json(&bad), 1e-10),
            Err(Error::VerificationFailed(_))
        ));
    }

    #[test]
    fn load_rejects_small_unbiasedness_break() {
        let set = generate_mub(3).unwrap();
        let mut bases = set.bases().to_vec();
        let v = &mut bases[2][1];
        v[0] += c64(1e-3, 0.0);
        let norm = v.norm();
        *v /= c64(norm, 0.0);
        let bad = MubSet::new(3, bases, MubSource::File).unwrap();
        let report = verify_mub(&bad, 1e-10);
        assert!(!report.pass);
        assert!(matches!(
            mub_from_json(&mub_to_json(&bad), 1e-10),
            Err(Error::VerificationFailed(_))
        ));
    }

    #[test]
    fn structural_errors() {
        assert!(mub_from_json_unverified(r#"{"dim":2,"bases":[]}"#).is_err());
        assert!(mub_from_json_unverified("not json").is_err());
    }

    #[test]
    fn generate_dispatch_errors() {
        assert!(matches!(
            generate_mub(6),
            Err(Error::UnsupportedDimension { .. })
        ));
        assert!(matches!(
            generate_mub(9),
            Err(Error::UnsupportedDimension { .. })
        ));
        assert!(generate_mub(8).is_ok());
    }
}
