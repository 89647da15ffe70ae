//! Noisy-tomography simulations: fidelity sweeps over the noise strength mu
//! and concurrence traces of a reconstructed entangling gate.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{
    concurrence, lift_n, make_cnot, make_local_channel, KrausChannel, LocalKind,
};
use crate::error::{Error, Result};
use crate::mub::MubSet;
use crate::numerics::{ComplexMatrix, DensityMatrix};
use crate::tomography::{
    apply_chi, process_fidelity, process_probabilities, refine_physical, solve_chi, BetaMatrix,
    ChiMatrix, ProbabilityTensor, RefinementConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub mu: f64,
    pub seed: u64,
    pub trials: usize,
}

fn check_mu(mu: f64) -> Result<()> {
    if (0.0..=1.0).contains(&mu) {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "mu".into(),
            value: mu,
            range: "[0, 1]",
        })
    }
}

/// p~ = p + mu * zeta, zeta ~ U[0, 1) drawn in storage order, followed by
/// renormalization of each D-outcome group.
pub fn perturb_probabilities<R: Rng + ?Sized>(
    p: &ProbabilityTensor,
    mu: f64,
    rng: &mut R,
) -> Result<ProbabilityTensor> {
    check_mu(mu)?;
    let mut values: Vec<f64> = p
        .values()
        .iter()
        .map(|x| x + mu * rng.random::<f64>())
        .collect();
    for group in values.chunks_mut(p.dim()) {
        let total: f64 = group.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidInput(
                "measurement group with zero total probability".into(),
            ));
        }
        group.iter_mut().for_each(|x| *x /= total);
    }
    ProbabilityTensor::new(p.dim(), values)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream per (channel, mu, trial), stable under reordering and
/// parallel execution.
pub fn trial_seed(base: u64, channel: usize, mu_index: usize, trial: usize) -> u64 {
    [channel, mu_index, trial]
        .iter()
        .fold(splitmix64(base), |acc, &k| splitmix64(acc ^ (k as u64)))
}

pub fn trial_rng(base: u64, channel: usize, mu_index: usize, trial: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trial_seed(base, channel, mu_index, trial))
}

/// Exact data and process matrix for one channel, shared across trials.
#[derive(Clone, Debug)]
pub struct ChannelReference {
    pub name: String,
    pub probabilities: ProbabilityTensor,
    pub chi: ChiMatrix,
}

impl ChannelReference {
    pub fn new(ch: &KrausChannel, set: &MubSet, beta: &BetaMatrix) -> Result<Self> {
        let probabilities = process_probabilities(ch, set)?;
        let chi = solve_chi(beta, &probabilities)?.chi;
        Ok(Self {
            name: ch.name().to_string(),
            probabilities,
            chi,
        })
    }

    pub fn trial<R: Rng + ?Sized>(
        &self,
        set: &MubSet,
        beta: &BetaMatrix,
        mu: f64,
        rng: &mut R,
        refine: Option<&RefinementConfig>,
    ) -> Result<TrialOutcome> {
        let noisy = perturb_probabilities(&self.probabilities, mu, rng)?;
        let raw = solve_chi(beta, &noisy)?.chi;
        let (chi, refined) = match refine {
            Some(cfg) => {
                let r = refine_physical(&raw, &noisy, beta, set, cfg)?;
                let diag = RefineDiagnostics {
                    objective: r.objective,
                    tp_residual: r.tp_residual,
                    iterations: r.iterations,
                    converged: r.converged,
                };
                (r.chi, Some(diag))
            }
            None => (raw, None),
        };
        let fidelity = process_fidelity(&self.chi, &chi)?.value;
        Ok(TrialOutcome {
            chi,
            fidelity,
            refined,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineDiagnostics {
    pub objective: f64,
    pub tp_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub chi: ChiMatrix,
    pub fidelity: f64,
    pub refined: Option<RefineDiagnostics>,
}

pub fn run_trial(
    ch: &KrausChannel,
    set: &MubSet,
    beta: &BetaMatrix,
    mu: f64,
    seed: u64,
    refine: Option<&RefinementConfig>,
) -> Result<TrialOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ChannelReference::new(ch, set, beta)?.trial(set, beta, mu, &mut rng, refine)
}

/// mu = 0.01, 0.02, ..., 0.15.
pub fn default_mu_grid() -> Vec<f64> {
    mu_grid(0.01, 0.15, 0.01).expect("default grid is valid")
}

/// Inclusive grid from `start` to `end`, values rounded to 12 decimals so
/// that printed grids read cleanly.
pub fn mu_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    check_mu(start)?;
    if !(step > 0.0) || !(end >= start) || !end.is_finite() {
        return Err(Error::InvalidInput(format!(
            "invalid mu grid {start}:{end}:{step}"
        )));
    }
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

/// dep:0.1, ad:0.4 and CNOT on two qubits.
pub fn default_channels() -> Vec<KrausChannel> {
    vec![
        lift_n(
            &make_local_channel(LocalKind::Depolarizing, 0.1).expect("valid"),
            2,
        ),
        lift_n(
            &make_local_channel(LocalKind::AmplitudeDamping, 0.4).expect("valid"),
            2,
        ),
        make_cnot(),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mu: f64,
    pub channel: String,
    pub trial: usize,
    pub fidelity: f64,
    pub refined: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepAggregate {
    pub mu: f64,
    pub channel: String,
    pub mean_fidelity: f64,
    /// Sample standard deviation (n - 1); zero for a single trial.
    pub std_fidelity: f64,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub dim: usize,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
    pub aggregates: Vec<SweepAggregate>,
}

impl SweepResult {
    pub fn aggregate(&self, channel: &str, mu: f64) -> Option<&SweepAggregate> {
        self.aggregates
            .iter()
            .find(|a| a.channel == channel && (a.mu - mu).abs() < 1e-12)
    }

    /// Mean fidelities of one channel in grid order.
    pub fn curve(&self, channel: &str) -> Vec<(f64, f64)> {
        self.aggregates
            .iter()
            .filter(|a| a.channel == channel)
            .map(|a| (a.mu, a.mean_fidelity))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub mu_grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub refine: Option<RefinementConfig>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            mu_grid: default_mu_grid(),
            trials: 100,
            seed: 0,
            refine: None,
        }
    }
}

/// Rows are ordered by (mu, channel, trial) whatever the thread count.
/// `progress` is called once per completed mu value, in grid order.
pub fn run_sweep(
    channels: &[KrausChannel],
    set: &MubSet,
    beta: &BetaMatrix,
    config: &SweepConfig,
    mut progress: impl FnMut(f64, &[SweepAggregate]),
) -> Result<SweepResult> {
    if config.trials == 0 {
        return Err(Error::InvalidParameter {
            name: "trials".into(),
            value: 0.0,
            range: "[1, inf)",
        });
    }
    if config.mu_grid.is_empty() {
        return Err(Error::InvalidInput("empty mu grid".into()));
    }
    for &mu in &config.mu_grid {
        check_mu(mu)?;
    }
    let refs = channels
        .iter()
        .map(|ch| ChannelReference::new(ch, set, beta))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut aggregates = Vec::new();
    for (mi, &mu) in config.mu_grid.iter().enumerate() {
        let tasks: Vec<(usize, usize)> = (0..refs.len())
            .flat_map(|c| (0..config.trials).map(move |t| (c, t)))
            .collect();
        let fids = tasks
            .par_iter()
            .map(|&(c, t)| {
                let mut rng = trial_rng(config.seed, c, mi, t);
                refs[c]
                    .trial(set, beta, mu, &mut rng, config.refine.as_ref())
                    .map(|o| o.fidelity)
            })
            .collect::<Result<Vec<f64>>>()?;
        let start = aggregates.len();
        for (c, r) in refs.iter().enumerate() {
            let chunk = &fids[c * config.trials..(c + 1) * config.trials];
            for (t, &fidelity) in chunk.iter().enumerate() {
                rows.push(SweepRow {
                    mu,
                    channel: r.name.clone(),
                    trial: t,
                    fidelity,
                    refined: config.refine.is_some(),
                });
            }
            let (mean, std) = mean_std(chunk);
            aggregates.push(SweepAggregate {
                mu,
                channel: r.name.clone(),
                mean_fidelity: mean,
                std_fidelity: std,
                trials: config.trials,
            });
        }
        progress(mu, &aggregates[start..]);
    }
    Ok(SweepResult {
        dim: set.dim(),
        seed: config.seed,
        rows,
        aggregates,
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcurrencePoint {
    pub mu: f64,
    pub mean_concurrence: f64,
    pub std_concurrence: f64,
}

/// Concurrence of chi~(rho_in) averaged over trials, where chi~ is the
/// noisy reconstruction of `gate`. The output is projected onto the nearest
/// density matrix first.
pub fn concurrence_trace(
    input: &DensityMatrix,
    gate: &KrausChannel,
    set: &MubSet,
    beta: &BetaMatrix,
    config: &SweepConfig,
) -> Result<Vec<ConcurrencePoint>> {
    if input.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: input.dim(),
        });
    }
    if config.trials == 0 || config.mu_grid.is_empty() {
        return Err(Error::InvalidInput(
            "concurrence trace needs trials and a mu grid".into(),
        ));
    }
    let reference = ChannelReference::new(gate, set, beta)?;
    config
        .mu_grid
        .iter()
        .enumerate()
        .map(|(mi, &mu)| {
            let values = (0..config.trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = trial_rng(config.seed, 0, mi, t);
                    let out = reference.trial(set, beta, mu, &mut rng, config.refine.as_ref())?;
                    concurrence_of_output(&out.chi, input.matrix(), set)
                })
                .collect::<Result<Vec<f64>>>()?;
            let (mean, std) = mean_std(&values);
            Ok(ConcurrencePoint {
                mu,
                mean_concurrence: mean,
                std_concurrence: std,
            })
        })
        .collect()
}

pub fn concurrence_of_output(chi: &ChiMatrix, input: &ComplexMatrix, set: &MubSet) -> Result<f64> {
    let out = apply_chi(chi, input, set)?;
    concurrence(&DensityMatrix::nearest(&out)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::InvalidInput(format!(
                "unknown format {other:?}, expected csv or json"
            ))),
        }
    }
}

pub fn rows_to_csv(rows: &[SweepRow]) -> Result<String> {
    to_csv(rows)
}

pub fn aggregates_to_csv(aggregates: &[SweepAggregate]) -> Result<String> {
    to_csv(aggregates)
}

fn to_csv<T: Serialize>(items: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for item in items {
        w.serialize(item)
            .map_err(|e| Error::InvalidInput(format!("csv encoding failed: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv encoding failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// CSV writes the per-trial rows to `path` and the aggregates next to it
/// with an `.agg.csv` suffix. JSON writes the whole result to `path`.
pub fn export_results(
    result: &SweepResult,
    format: ExportFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    match format {
        ExportFormat::Csv => {
            std::fs::write(path, rows_to_csv(&result.rows)?).map_err(|e| Error::io(path, e))?;
            let agg = aggregate_path(path);
            std::fs::write(&agg, aggregates_to_csv(&result.aggregates)?)
                .map_err(|e| Error::io(&agg, e))
        }
        ExportFormat::Json => {
            let s = serde_json::to_string_pretty(result).expect("sweep result serializes");
            std::fs::write(path, s).map_err(|e| Error::io(path, e))
        }
    }
}

pub fn aggregate_path(path: &Path) -> std::path::PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.agg.csv"))
}

pub fn import_results(path: impl AsRef<Path>) -> Result<SweepResult> {
    let path = path.as_ref();
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| Error::json("sweep result", e))
}
