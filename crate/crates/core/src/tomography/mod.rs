//! Process reconstruction from MUB tomography data.
//!
//! Every projector P_l^(g) is sent through the channel and the output is
//! measured in all D+1 bases, giving the probabilities p_{es}^{(g,l)}. They
//! are linear in the process matrix chi of the expansion
//! E(rho) = sum chi_{ab} P_a rho P_b, p = beta chi, and chi = kappa p with
//! kappa the pseudoinverse of beta.

mod beta;
mod refine;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use beta::{beta_entries, build_beta, BetaMatrix, MAX_BETA_SIDE, PINV_IDENTITY_TOL};
pub use refine::{refine_physical, RefineObjective, Refined, RefinementConfig};

use crate::channels::KrausChannel;
use crate::error::{Error, Result};
use crate::mub::MubSet;
use crate::numerics::{
    c64, frobenius_norm, hermitian_deviation, hermitian_eig, hermitian_part, matrix_json, trace,
    ComplexMatrix, ComplexVector, DensityMatrix,
};

/// Label written into chi and probability files.
pub const INDEX_ORDER: &str = "gamma-major";

/// Asymmetry of a solved chi above which noise-free input is suspect.
pub const ASYMMETRY_WARN: f64 = 1e-6;

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// p_{g m} = Tr(P_m^(g) rho) in flat order.
pub fn state_probabilities(rho: &ComplexMatrix, set: &MubSet) -> Result<Vec<f64>> {
    check_dim(set.dim(), rho.nrows())?;
    check_dim(set.dim(), rho.ncols())?;
    let cols = set.columns();
    Ok((0..set.num_projectors())
        .map(|a| {
            let v = cols.column(a);
            v.dotc(&(rho * v)).re
        })
        .collect())
}

/// rho = sum p_{g m} P_m^(g) - 1. Hermitian by construction; positivity
/// depends on the data.
pub fn reconstruct_state(p: &[f64], set: &MubSet) -> Result<ComplexMatrix> {
    check_dim(set.num_projectors(), p.len())?;
    let dim = set.dim();
    let cols = set.columns();
    let weighted = ComplexMatrix::from_fn(dim, p.len(), |i, a| cols[(i, a)] * c64(p[a], 0.0));
    let rho = weighted * cols.adjoint() - ComplexMatrix::identity(dim, dim);
    Ok(hermitian_part(&rho))
}

/// p_{es}^{(g,l)} stored at `flat(g,l) * N + flat(e,s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityTensor {
    dim: usize,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ProbabilityFile {
    dim: usize,
    index_order: String,
    values: Vec<f64>,
}

impl ProbabilityTensor {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        let n = dim * (dim + 1);
        check_dim(n * n, values.len())?;
        if let Some(bad) = values
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0 + 1e-10)
        {
            return Err(Error::InvalidInput(format!(
                "probability {bad} outside [0, 1]"
            )));
        }
        Ok(Self { dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_projectors(&self) -> usize {
        self.dim * (self.dim + 1)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, input: usize, outcome: usize) -> f64 {
        self.values[input * self.num_projectors() + outcome]
    }

    /// All D^2 + D outcome probabilities for one input projector.
    pub fn row(&self, input: usize) -> &[f64] {
        let n = self.num_projectors();
        &self.values[input * n..(input + 1) * n]
    }

    /// The D outcomes of measurement basis `eta` for one input.
    pub fn group(&self, input: usize, eta: usize) -> &[f64] {
        let start = input * self.num_projectors() + eta * self.dim;
        &self.values[start..start + self.dim]
    }

    /// Largest |sum_s p_{es}^{(g,l)} - 1| over all groups.
    pub fn max_group_sum_error(&self) -> f64 {
        self.values
            .chunks(self.dim)
            .map(|g| (g.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn from_raw(dim: usize, values: Vec<f64>) -> Self {
        Self { dim, values }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ProbabilityFile {
            dim: self.dim,
            index_order: INDEX_ORDER.into(),
            values: self.values.clone(),
        })
        .expect("probabilities serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: ProbabilityFile =
            serde_json::from_str(s).map_err(|e| Error::json("probability file", e))?;
        if f.index_order != INDEX_ORDER {
            return Err(Error::InvalidInput(format!(
                "unsupported index_order {:?}",
                f.index_order
            )));
        }
        Self::new(f.dim, f.values)
    }
}

/// Noise-free tomography data for a channel.
pub fn process_probabilities(ch: &KrausChannel, set: &MubSet) -> Result<ProbabilityTensor> {
    check_dim(set.dim(), ch.dim())?;
    let n = set.num_projectors();
    let mut values = Vec::with_capacity(n * n);
    for input in 0..n {
        let out = ch.apply(&set.projector_matrix(input))?;
        values.extend(
            state_probabilities(&out, set)?
                .into_iter()
                .map(|p| p.max(0.0)),
        );
    }
    Ok(ProbabilityTensor::from_raw(set.dim(), values))
}

/// Process matrix over composite MUB indices, M[flat(a,m), flat(b,n)].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiMatrix {
    pub dim: usize,
    pub index_order: String,
    #[serde(default)]
    pub physical: bool,
    #[serde(flatten, with = "matrix_json")]
    pub matrix: ComplexMatrix,
}

impl ChiMatrix {
    pub fn new(dim: usize, matrix: ComplexMatrix, physical: bool) -> Result<Self> {
        let n = dim * (dim + 1);
        if matrix.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: matrix.nrows(),
            });
        }
        Ok(Self {
            dim,
            index_order: INDEX_ORDER.into(),
            physical,
            matrix,
        })
    }

    pub fn zeros(dim: usize) -> Self {
        let n = dim * (dim + 1);
        Self::new(dim, ComplexMatrix::zeros(n, n), false).unwrap()
    }

    /// Row-major vectorization matching the beta column order.
    pub fn to_vector(&self) -> ComplexVector {
        let n = self.matrix.nrows();
        ComplexVector::from_fn(n * n, |k, _| self.matrix[(k / n, k % n)])
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(hermitian_eig(&hermitian_part(&self.matrix))?.min())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("chi serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let chi: ChiMatrix = serde_json::from_str(s).map_err(|e| Error::json("chi file", e))?;
        if chi.index_order != INDEX_ORDER {
            return Err(Error::InvalidInput(format!(
                "unsupported index_order {:?}",
                chi.index_order
            )));
        }
        Self::new(chi.dim, chi.matrix, chi.physical)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[derive(Clone, Debug)]
pub struct ChiSolution {
    pub chi: ChiMatrix,
    /// ||M - M^dag||_F / 2 before symmetrization.
    pub asymmetry: f64,
    /// ||beta chi - p||.
    pub forward_residual: f64,
}

/// chi = kappa p, Hermitian-symmetrized.
pub fn solve_chi(beta: &BetaMatrix, p: &ProbabilityTensor) -> Result<ChiSolution> {
    check_dim(beta.dim(), p.dim())?;
    if !(beta.pinv_residual() <= PINV_IDENTITY_TOL) {
        return Err(Error::PseudoinverseIdentity(beta.pinv_residual()));
    }
    let n = beta.num_projectors();
    let pv = ComplexVector::from_iterator(n * n, p.values().iter().map(|&x| c64(x, 0.0)));
    let chi_vec = beta.kappa() * &pv;
    let forward_residual = (beta.matrix() * &chi_vec - &pv).norm();
    let raw = ComplexMatrix::from_fn(n, n, |a, b| chi_vec[a * n + b]);
    let asymmetry = frobenius_norm(&(&raw - raw.adjoint())) / 2.0;
    if asymmetry > ASYMMETRY_WARN {
        log::warn!("solved chi asymmetry {asymmetry:.3e} exceeds {ASYMMETRY_WARN:.0e}");
    }
    Ok(ChiSolution {
        chi: ChiMatrix::new(beta.dim(), hermitian_part(&raw), false)?,
        asymmetry,
        forward_residual,
    })
}

/// E(rho) = sum_{a,b} chi_{ab} P_a rho P_b, evaluated as
/// Psi (chi o Psi^dag rho Psi) Psi^dag with Psi the matrix of MUB vectors.
pub fn apply_chi(chi: &ChiMatrix, rho: &ComplexMatrix, set: &MubSet) -> Result<ComplexMatrix> {
    check_dim(set.dim(), chi.dim)?;
    check_dim(set.dim(), rho.nrows())?;
    check_dim(set.dim(), rho.ncols())?;
    let psi = set.columns();
    let sandwiched = psi.adjoint() * rho * psi;
    let weighted = chi.matrix.component_mul(&sandwiched);
    Ok(psi * weighted * psi.adjoint())
}

/// Kraus operators A_i = sqrt(lambda_i) sum_a v_i[a] P_a from the
/// eigendecomposition of chi. Only the induced map is meaningful; the
/// overcomplete expansion has no unique coefficients.
pub fn extract_kraus(chi: &ChiMatrix, set: &MubSet) -> Result<KrausChannel> {
    const NEGATIVE_TOL: f64 = 1e-8;
    const KEEP_TOL: f64 = 1e-10;
    check_dim(set.dim(), chi.dim)?;
    let dev = hermitian_deviation(&chi.matrix);
    if dev > 1e-8 {
        return Err(Error::NotHermitian(dev));
    }
    let eig = hermitian_eig(&chi.matrix)?;
    if eig.min() < -NEGATIVE_TOL {
        return Err(Error::NegativeEigenvalue(eig.min()));
    }
    let psi = set.columns();
    let dim = set.dim();
    let ops: Vec<ComplexMatrix> = eig
        .values
        .iter()
        .enumerate()
        .filter(|(_, &lam)| lam > KEEP_TOL)
        .map(|(k, &lam)| {
            let v = eig.vectors.column(k);
            let scaled = ComplexMatrix::from_fn(dim, psi.ncols(), |i, a| psi[(i, a)] * v[a]);
            scaled * psi.adjoint() * c64(lam.sqrt(), 0.0)
        })
        .collect();
    if ops.is_empty() {
        return Err(Error::InvalidChannel(
            "process matrix has no positive spectrum".into(),
        ));
    }
    KrausChannel::new("extracted", ops, Default::default())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fidelity {
    pub value: f64,
    pub imaginary_residual: f64,
}

/// F = Tr(chi_ref chi_test) / Tr(chi_ref^2), real part.
pub fn process_fidelity(reference: &ChiMatrix, test: &ChiMatrix) -> Result<Fidelity> {
    check_dim(reference.dim, test.dim)?;
    let norm = trace(&(&reference.matrix * &reference.matrix)).re;
    if !(norm >= 1e-14) {
        return Err(Error::UndefinedFidelity(norm));
    }
    let overlap = reference
        .matrix
        .component_mul(&test.matrix.transpose())
        .sum();
    Ok(Fidelity {
        value: overlap.re / norm,
        imaginary_residual: (overlap.im / norm).abs(),
    })
}

/// Largest trace distance between two maps over `samples` random states.
pub fn map_distance_on_states<R: rand::Rng + ?Sized>(
    a: impl Fn(&ComplexMatrix) -> Result<ComplexMatrix>,
    b: impl Fn(&ComplexMatrix) -> Result<ComplexMatrix>,
    dim: usize,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let rho = DensityMatrix::random(dim, rng);
        let d = crate::numerics::trace_distance_hermitian(&a(rho.matrix())?, &b(rho.matrix())?)?;
        worst = worst.max(d);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{lift_n, make_cnot, make_local_channel, LocalKind};
    use crate::mub::{generate_mub, MubIndex};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lifted(kind: LocalKind, p: f64) -> KrausChannel {
        lift_n(&make_local_channel(kind, p).unwrap(), 2)
    }

    #[test]
    fn state_probability_examples() {
        let set = generate_mub(4).unwrap();
        let p = state_probabilities(DensityMatrix::maximally_mixed(4).matrix(), &set).unwrap();
        assert!(p.iter().all(|x| (x - 0.25).abs() < 1e-12));

        let qubit = generate_mub(2).unwrap();
        let p = state_probabilities(DensityMatrix::basis_state(2, 0).matrix(), &qubit).unwrap();
        let expected = [1.0, 0.0, 0.5, 0.5, 0.5, 0.5];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }

        let target = MubIndex::new(4, 3, 2).unwrap().flat;
        let p = state_probabilities(&set.projector_matrix(target), &set).unwrap();
        for idx in set.indices() {
            let want = if idx.basis == 3 {
                if idx.state == 2 {
                    1.0
                } else {
                    0.0
                }
            } else {
                0.25
            };
            assert!((p[idx.flat] - want).abs() < 1e-12);
        }
        for g in 0..5 {
            let s: f64 = p[g * 4..(g + 1) * 4].iter().sum();
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn reconstruct_round_trips() {
        let set = generate_mub(4).unwrap();
        let mixed = DensityMatrix::maximally_mixed(4);
        let uniform = vec![0.25; 20];
        let back = reconstruct_state(&uniform, &set).unwrap();
        assert!(frobenius_norm(&(back - mixed.matrix())) < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let rho = DensityMatrix::random_pure(4, &mut rng);
            let p = state_probabilities(rho.matrix(), &set).unwrap();
            let back = reconstruct_state(&p, &set).unwrap();
            assert!(
                crate::numerics::trace_distance_hermitian(&back, rho.matrix()).unwrap() < 1e-10
            );
        }
        assert!(reconstruct_state(&[0.5; 3], &set).is_err());
    }

    #[test]
    fn identity_process_probabilities_follow_trace_relation() {
        let set = generate_mub(4).unwrap();
        let p = process_probabilities(&KrausChannel::identity(4), &set).unwrap();
        for a in set.indices() {
            for b in set.indices() {
                let want = if a.basis == b.basis {
                    if a.state == b.state {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    0.25
                };
                assert!((p.get(a.flat, b.flat) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cnot_fixed_point_row() {
        let set = generate_mub(4).unwrap();
        let p = process_probabilities(&make_cnot(), &set).unwrap();
        let direct = state_probabilities(DensityMatrix::basis_state(4, 0).matrix(), &set).unwrap();
        for (a, b) in p.row(0).iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(p.max_group_sum_error() < 1e-10);
    }

    #[test]
    fn fully_depolarizing_gives_uniform_probabilities() {
        let set = generate_mub(4).unwrap();
        let p = process_probabilities(&lifted(LocalKind::Depolarizing, 1.0), &set).unwrap();
        assert!(p.values().iter().all(|x| (x - 0.25).abs() < 1e-12));
    }

    #[test]
    fn qubit_round_trips_for_zoo() {
        let set = generate_mub(2).unwrap();
        let beta = build_beta(&set).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let channels = [
            KrausChannel::identity(2),
            make_local_channel(LocalKind::Depolarizing, 0.3).unwrap(),
            make_local_channel(LocalKind::AmplitudeDamping, 0.4).unwrap(),
            make_local_channel(LocalKind::BitPhaseFlip, 0.2).unwrap(),
        ];
        for ch in channels {
            let p = process_probabilities(&ch, &set).unwrap();
            let sol = solve_chi(&beta, &p).unwrap();
            assert!(sol.asymmetry < 1e-10);
            assert!(sol.forward_residual < 1e-8);
            let d = map_distance_on_states(
                |r| apply_chi(&sol.chi, r, &set),
                |r| ch.apply(r),
                2,
                20,
                &mut rng,
            )
            .unwrap();
            assert!(d < 1e-8, "{}: {d}", ch.name());
            let kraus = extract_kraus(&sol.chi, &set).unwrap();
            let d = map_distance_on_states(|r| kraus.apply(r), |r| ch.apply(r), 2, 20, &mut rng)
                .unwrap();
            assert!(d < 1e-8);
        }
    }

    #[test]
    fn solved_chi_is_psd_for_cp_maps() {
        let set = generate_mub(2).unwrap();
        let beta = build_beta(&set).unwrap();
        let p = process_probabilities(
            &make_local_channel(LocalKind::AmplitudeDamping, 0.7).unwrap(),
            &set,
        )
        .unwrap();
        let chi = solve_chi(&beta, &p).unwrap().chi;
        assert!(chi.min_eigenvalue().unwrap() > -1e-10);
    }

    #[test]
    fn zero_chi_and_negative_chi() {
        let set = generate_mub(2).unwrap();
        let zero = ChiMatrix::zeros(2);
        let out = apply_chi(&zero, DensityMatrix::maximally_mixed(2).matrix(), &set).unwrap();
        assert_eq!(frobenius_norm(&out), 0.0);

        let mut m = ComplexMatrix::identity(6, 6) * c64(0.01, 0.0);
        m[(0, 0)] = c64(-0.1, 0.0);
        let bad = ChiMatrix::new(2, m, false).unwrap();
        assert!(matches!(
            extract_kraus(&bad, &set),
            Err(Error::NegativeEigenvalue(_))
        ));
    }

    #[test]
    fn fidelity_examples() {
        let set = generate_mub(2).unwrap();
        let beta = build_beta(&set).unwrap();
        let chi = solve_chi(
            &beta,
            &process_probabilities(&KrausChannel::identity(2), &set).unwrap(),
        )
        .unwrap()
        .chi;
        assert!((process_fidelity(&chi, &chi).unwrap().value - 1.0).abs() < 1e-12);
        assert_eq!(
            process_fidelity(&chi, &ChiMatrix::zeros(2)).unwrap().value,
            0.0
        );
        let doubled = ChiMatrix::new(2, chi.matrix.clone() * c64(2.0, 0.0), false).unwrap();
        assert!((process_fidelity(&chi, &doubled).unwrap().value - 2.0).abs() < 1e-12);
        assert!(matches!(
            process_fidelity(&ChiMatrix::zeros(2), &chi),
            Err(Error::UndefinedFidelity(_))
        ));
    }

    #[test]
    fn chi_file_round_trip() {
        let set = generate_mub(2).unwrap();
        let beta = build_beta(&set).unwrap();
        let chi = solve_chi(
            &beta,
            &process_probabilities(
                &make_local_channel(LocalKind::Depolarizing, 0.2).unwrap(),
                &set,
            )
            .unwrap(),
        )
        .unwrap()
        .chi;
        let json = chi.to_json();
        assert!(json.contains("\"index_order\":\"gamma-major\""));
        assert!(json.contains("\"rows\":6"));
        assert_eq!(ChiMatrix::from_json(&json).unwrap(), chi);
    }

    #[test]
    fn probability_file_round_trip() {
        let set = generate_mub(2).unwrap();
        let p = process_probabilities(&make_cnot_free_channel(), &set).unwrap();
        assert_eq!(ProbabilityTensor::from_json(&p.to_json()).unwrap(), p);
        assert!(ProbabilityTensor::new(2, vec![0.5; 5]).is_err());
    }

    fn make_cnot_free_channel() -> KrausChannel {
        make_local_channel(LocalKind::AmplitudeDamping, 0.25).unwrap()
    }
}
