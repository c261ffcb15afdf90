//! File-driven experiment pipelines: one config in, self-describing JSON and
//! CSV artifacts out.
//!
//! Every artifact embeds the crate version and a SHA-256 hash of the fully
//! resolved config, so identical `(config, seed, version)` reproduce
//! byte-identical files. Ensembles derive per-member seeds with
//! [`split_seed`] and are gathered in index order, so thread count does not
//! change the output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bose_hubbard::{mhz, ns, sample_instance, Hamiltonian, InstanceConfig, InstanceFile, InstanceParams, StateVector};
use crate::diagnostics::{
    correlation_length, entanglement_entropy, entropy, porter_thomas_entropy, pt_histogram, time_cross_entropy,
    two_body_correlations, uncorrelated_baseline, xeb_fidelity_from_counts, CorrelationCurve, CorrelationFit,
    Histogram, HistogramSpec, ProbabilityDistribution,
};
use crate::error::{invalid, Error, Result};
use crate::fock_basis::{
    dimension, dimension_estimate, enumerate_basis, half_filling, resource_estimate, Basis, OccupationVector,
    ResourceEstimate, ResourceProfile, TruncationScheme,
};
use crate::gmon::{
    circuit_spectrum_with, fit_polynomial_coefficients, fit_spectrum, polynomial_deviation, exact_grid,
    Diagonalizer, FitParameter, GmonCircuitParams, GridSpec, PolynomialCoefficients, SpectrumFit, SpectrumSample,
    DEFAULT_LEVELS,
};
use crate::integrator::{
    estimate_steps, evolve_refining, project_onto, sample_measurements, CheckpointPolicy, EvolveOptions,
    MeasurementErrorModel, StepSearch,
};
use crate::oracles::{fermion_propagator, free_fermion_amplitude, linearized_product_amplitude, path_sum_amplitude, PathSumOptions, Strategy};
use crate::rng::split_seed;
use crate::waveform::{
    compensate_crosstalk, fit_timing_offset, fit_transfer_function, predistort, apply_transfer, CrosstalkMatrix,
    PhaseTrace, TimingFit, TransferFit, TransferFunction,
};

/// Artifact format version written into every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Extra step doublings tried when a run trips the norm check.
const MAX_REFINEMENTS: u32 = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

/// A complete experiment description. The `mode` key selects the pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    Dims(DimsConfig),
    Resources(ResourcesConfig),
    Run(RunConfig),
    Sample(SampleConfig),
    Sweep(SweepConfig),
    Diagnose(DiagnoseConfig),
    OracleCheck(OracleCheckConfig),
    Gmon(GmonConfig),
    Cal(CalConfig),
}

impl ExperimentConfig {
    pub fn mode(&self) -> &'static str {
        match self {
            Self::Dims(_) => "dims",
            Self::Resources(_) => "resources",
            Self::Run(_) => "run",
            Self::Sample(_) => "sample",
            Self::Sweep(_) => "sweep",
            Self::Diagnose(_) => "diagnose",
            Self::OracleCheck(_) => "oracle-check",
            Self::Gmon(_) => "gmon",
            Self::Cal(_) => "cal",
        }
    }

    /// Seed of a stochastic mode; `None` for deterministic ones.
    pub fn seed_mut(&mut self) -> Option<&mut Option<u64>> {
        match self {
            Self::Sample(c) => Some(&mut c.seed),
            Self::Sweep(c) => Some(&mut c.seed),
            Self::OracleCheck(c) => Some(&mut c.seed),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let needs_seed = matches!(self, Self::Sample(_) | Self::Sweep(_) | Self::OracleCheck(_));
        let seed = match self {
            Self::Sample(c) => c.seed,
            Self::Sweep(c) => c.seed,
            Self::OracleCheck(c) => c.seed,
            _ => None,
        };
        if needs_seed && seed.is_none() {
            return invalid(format!("mode {} is stochastic and needs a seed", self.mode()));
        }
        match self {
            Self::Dims(c) if c.n_min > c.n_max || c.n_min == 0 => invalid("dims needs 1 <= n_min <= n_max"),
            Self::Sweep(c) if c.disorder_mhz.is_empty() || c.instances == 0 => {
                invalid("sweep needs at least one disorder value and one instance")
            }
            Self::Sample(c) if c.samples == 0 => invalid("sample needs at least one sample"),
            Self::Diagnose(c) if c.inputs.is_empty() => invalid("diagnose needs at least one result file"),
            _ => Ok(()),
        }
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DimsConfig {
    pub n_min: usize,
    pub n_max: usize,
    /// Excitation number; half filling when absent.
    pub n_exc: Option<usize>,
    pub schemes: Vec<TruncationScheme>,
}

impl Default for DimsConfig {
    fn default() -> Self {
        Self {
            n_min: 3,
            n_max: 9,
            n_exc: None,
            schemes: vec![
                TruncationScheme::QUBIT,
                TruncationScheme::Bands { doublons: 1, triplons: 0 },
                TruncationScheme::MaxLevel(2),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResourcesConfig {
    pub n_sites: usize,
    pub n_exc: Option<usize>,
    pub scheme: TruncationScheme,
    pub profile: ResourceProfile,
}

impl Default for ResourcesConfig {
    fn default() -> Self {
        Self { n_sites: 42, n_exc: None, scheme: TruncationScheme::QUBIT, profile: ResourceProfile::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub instance: InstanceFile,
    /// Fixed RK4 step count; estimated from the resolution search when absent.
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default = "default_step_tolerance")]
    pub step_tolerance: f64,
    /// Emit only the `k` most probable states instead of the full vector.
    #[serde(default)]
    pub top_k: Option<usize>,
}

fn default_step_tolerance() -> f64 {
    1e-6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub instance: InstanceFile,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default = "default_step_tolerance")]
    pub step_tolerance: f64,
    pub samples: u64,
    #[serde(default)]
    pub readout_error: f64,
    #[serde(default)]
    pub loss_per_cycle: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub n_sites: usize,
    pub n_exc: Option<usize>,
    pub scheme: TruncationScheme,
    pub cycles: usize,
    pub instances: usize,
    /// Half-width of the uniform detuning distribution, MHz.
    pub disorder_mhz: Vec<f64>,
    /// Initial RK4 resolution; refined automatically on norm drift.
    pub steps_per_ns: f64,
    pub seed: Option<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_sites: 9,
            n_exc: None,
            scheme: TruncationScheme::MaxLevel(2),
            cycles: 5,
            instances: 100,
            disorder_mhz: vec![5.0, 30.0],
            steps_per_ns: 20.0,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseConfig {
    pub inputs: Vec<PathBuf>,
    /// Reference checkpoint (cycle index) for the time cross-entropy.
    #[serde(default = "default_t0_cycle")]
    pub t0_cycle: usize,
    #[serde(default)]
    pub histogram: HistogramSpec,
}

fn default_t0_cycle() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleCheckConfig {
    pub fermion_sites: Vec<usize>,
    pub instances: usize,
    pub cycles: usize,
    pub rk4_steps: usize,
    pub path_sum_sites: usize,
    pub path_sum_steps: usize,
    pub seed: Option<u64>,
}

impl Default for OracleCheckConfig {
    fn default() -> Self {
        Self {
            fermion_sites: vec![6, 8],
            instances: 3,
            cycles: 3,
            rk4_steps: 4000,
            path_sum_sites: 3,
            path_sum_steps: 4,
            seed: None,
        }
    }
}

/// Circuit parameters: an explicit file, or a row of the device table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamSource {
    File(PathBuf),
    Device(usize),
}

impl ParamSource {
    fn load(&self) -> Result<GmonCircuitParams> {
        let p = match self {
            ParamSource::File(path) => read_json::<GmonCircuitParams>(path)?,
            ParamSource::Device(q) => GmonCircuitParams::device(*q)?,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum GmonConfig {
    Spectrum {
        params: ParamSource,
        /// Qubit SQUID fluxes, flux quanta.
        flux_q: Vec<f64>,
        /// Coupler fluxes, flux quanta.
        flux_c: Vec<f64>,
        #[serde(default = "default_levels")]
        levels: usize,
    },
    Fit {
        /// JSON array of samples, or CSV `flux_q,flux_c,f10,f21` in Hz.
        samples: PathBuf,
        guess: ParamSource,
        #[serde(default = "default_free")]
        free: Vec<FitParameter>,
    },
    FitPoly {
        #[serde(default)]
        grid: GridSpec,
    },
}

fn default_levels() -> usize {
    DEFAULT_LEVELS
}

fn default_free() -> Vec<FitParameter> {
    FitParameter::DEFAULT_SET.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum CalConfig {
    TfFit {
        /// Measured phase, CSV `(t, value)`.
        phase: PathBuf,
        /// Flux pulse as sent, CSV `(t, value)` on a uniform grid.
        pulse: PathBuf,
        /// Detuning `2 pi sum_k c_k x^k` (Hz coefficients, k from 1).
        curve_hz: Vec<f64>,
        #[serde(default = "one")]
        n_terms: usize,
    },
    Predistort {
        /// Transfer function JSON (`{"terms": [{"epsilon", "tau"}]}`).
        tf: PathBuf,
        waveform: PathBuf,
        /// Apply the distortion instead of inverting it.
        #[serde(default)]
        forward: bool,
    },
    Xtalk {
        /// Square matrix as a JSON array of rows.
        matrix: PathBuf,
        /// Desired fluxes as a JSON array.
        desired: PathBuf,
    },
    Timing {
        /// CSV `(delay, probability)`.
        curve: PathBuf,
    },
}

fn one() -> usize {
    1
}

/// Envelope written around every JSON result.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub result: T,
}

/// What a pipeline produced: the files written and a summary for stdout.
#[derive(Clone, Debug)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub stdout: String,
}

struct Emitter<'a> {
    dir: &'a Path,
    config: &'a ExperimentConfig,
    hash: String,
    files: Vec<PathBuf>,
}

impl<'a> Emitter<'a> {
    fn new(dir: &'a Path, config: &'a ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir, config, hash: config.hash()?, files: Vec::new() })
    }

    fn artifact<T: Serialize>(&self, result: T) -> Artifact<T> {
        Artifact { version: VERSION.into(), config_hash: self.hash.clone(), config: self.config.clone(), result }
    }

    fn json<T: Serialize>(&mut self, name: &str, result: &T) -> Result<String> {
        let mut text = serde_json::to_string_pretty(&self.artifact(result))?;
        text.push('\n');
        let path = self.dir.join(name);
        fs::write(&path, &text)?;
        self.files.push(path);
        Ok(text)
    }

    fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<String> {
        let mut buf = format!("# version={VERSION}\n# config_hash={}\n", self.hash).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        let text = String::from_utf8(buf).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let path = self.dir.join(name);
        fs::write(&path, &text)?;
        self.files.push(path);
        Ok(text)
    }

    fn finish(self, stdout: String) -> Report {
        Report { files: self.files, stdout }
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads a `(t, value)` style CSV: `#` comments and a non-numeric header
/// row are skipped.
pub fn read_columns(path: &Path, n_cols: usize) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut cols = vec![Vec::new(); n_cols];
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().take(n_cols).map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) if v.len() == n_cols => v.into_iter().zip(cols.iter_mut()).for_each(|(x, c)| c.push(x)),
            _ if k == 0 => continue,
            _ => return invalid(format!("{}: row {} needs {n_cols} numeric columns", path.display(), k + 1)),
        }
    }
    Ok(cols)
}

/// Samples on a uniform grid: returns `(values, dt)`.
fn read_waveform(path: &Path) -> Result<(Vec<f64>, f64)> {
    let cols = read_columns(path, 2)?;
    let (t, v) = (&cols[0], &cols[1]);
    if t.len() < 2 {
        return invalid(format!("{}: waveform needs at least two samples", path.display()));
    }
    let dt = t[1] - t[0];
    if !(dt > 0.0) || t.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
        return invalid(format!("{}: samples must be uniformly spaced", path.display()));
    }
    Ok((v.clone(), dt))
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

/// Runs the configured pipeline, writing artifacts under `out_dir`.
pub fn run_pipeline(config: &ExperimentConfig, out_dir: &Path, format: OutputFormat) -> Result<Report> {
    config.validate()?;
    let mut em = Emitter::new(out_dir, config)?;
    let stdout = match config {
        ExperimentConfig::Dims(c) => run_dims(c, &mut em, format)?,
        ExperimentConfig::Resources(c) => run_resources(c, &mut em)?,
        ExperimentConfig::Run(c) => {
            let rec = simulate(&c.instance, c.steps, c.step_tolerance, c.top_k)?;
            em.json("result.json", &rec)?
        }
        ExperimentConfig::Sample(c) => run_sample(c, &mut em)?,
        ExperimentConfig::Sweep(c) => run_sweep(c, &mut em, format)?,
        ExperimentConfig::Diagnose(c) => run_diagnose(c, &mut em)?,
        ExperimentConfig::OracleCheck(c) => run_oracle_check(c, &mut em)?,
        ExperimentConfig::Gmon(c) => run_gmon(c, &mut em, format)?,
        ExperimentConfig::Cal(c) => run_cal(c, &mut em, format)?,
    };
    Ok(em.finish(stdout))
}

// ---- dims / resources ------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DimsRow {
    pub n_sites: usize,
    pub n_exc: usize,
    /// Full hard-core space over all excitation numbers.
    pub all_qubit_states: u128,
    /// Exact dimension per requested scheme, in config order.
    pub dims: Vec<u128>,
    /// Large-N estimate per scheme where one exists.
    pub estimates: Vec<Option<f64>>,
}

pub fn dims_table(c: &DimsConfig) -> Vec<DimsRow> {
    (c.n_min..=c.n_max)
        .map(|n| {
            let k = c.n_exc.unwrap_or_else(|| half_filling(n));
            DimsRow {
                n_sites: n,
                n_exc: k,
                all_qubit_states: 1u128 << n.min(127),
                dims: c.schemes.iter().map(|&s| dimension(n, k, s)).collect(),
                estimates: c.schemes.iter().map(|&s| dimension_estimate(n, s)).collect(),
            }
        })
        .collect()
}

fn run_dims(c: &DimsConfig, em: &mut Emitter, format: OutputFormat) -> Result<String> {
    let rows = dims_table(c);
    let mut header = vec!["N".to_string(), "n_exc".into(), "2^N".into()];
    header.extend(c.schemes.iter().map(|s| s.to_string()));
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![r.n_sites.to_string(), r.n_exc.to_string(), r.all_qubit_states.to_string()];
            v.extend(r.dims.iter().map(u128::to_string));
            v
        })
        .collect();
    let csv = em.csv("dims.csv", &header, &csv_rows)?;
    let json = em.json("dims.json", &rows)?;
    Ok(match format {
        OutputFormat::Csv => csv,
        OutputFormat::Json => json,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResourcesResult {
    pub dimension: u128,
    pub estimate: Option<f64>,
    pub resources: ResourceEstimate,
}

fn run_resources(c: &ResourcesConfig, em: &mut Emitter) -> Result<String> {
    c.scheme.validate()?;
    let k = c.n_exc.unwrap_or_else(|| half_filling(c.n_sites));
    let dim = dimension(c.n_sites, k, c.scheme);
    let res = ResourcesResult {
        dimension: dim,
        estimate: dimension_estimate(c.n_sites, c.scheme),
        resources: resource_estimate(dim, &c.profile)?,
    };
    em.json("resources.json", &res)
}

// ---- run / sample ------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedState {
    pub state: OccupationVector,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub cycle: usize,
    pub time_ns: f64,
    /// Full probabilities in basis order; absent in top-K output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_chain_entropy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingRecord {
    pub n_samples: u64,
    /// Post-selected counts keyed by bitstring.
    pub counts: BTreeMap<OccupationVector, u64>,
    pub rejected: u64,
    pub rejected_fraction: f64,
    pub expected_rejected_fraction: f64,
    pub xeb: f64,
}

/// Output of `run` and `sample`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub n_sites: usize,
    pub n_exc: usize,
    pub scheme: TruncationScheme,
    pub cycles: usize,
    pub steps: usize,
    pub norm_drift: f64,
    /// Final weight outside the hard-core subspace.
    pub leak: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<OccupationVector>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top: Option<Vec<RankedState>>,
    pub checkpoints: Vec<CheckpointRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<SamplingRecord>,
}

fn top_states(basis: &Basis, p: &[f64], k: usize) -> Vec<RankedState> {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    idx.into_iter()
        .take(k)
        .map(|i| RankedState { state: basis.state(i).clone(), probability: p[i] })
        .collect()
}

struct Simulation {
    record: RunRecord,
    final_state: StateVector,
    cycles: usize,
}

fn simulate_full(file: &InstanceFile, steps: Option<usize>, tol: f64, top_k: Option<usize>) -> Result<Simulation> {
    let params = file.to_instance()?;
    let basis = file.basis()?;
    let psi0 = StateVector::fock(basis.clone(), &file.initial_state())?;
    let h = Hamiltonian::new(&params, basis.clone())?;
    let steps = match steps {
        Some(s) => s,
        None => estimate_steps(&h, &psi0, tol, StepSearch::default())?.steps * 2,
    };
    let opts = EvolveOptions::default().with_checkpoints(CheckpointPolicy::Cycles);
    let evo = evolve_refining(&h, &psi0, steps, &opts, MAX_REFINEMENTS)?;
    let n = params.n_sites;
    let checkpoints = evo
        .checkpoints
        .iter()
        .enumerate()
        .map(|(cycle, cp)| {
            let entropy = match cp.snapshot.state() {
                Some(s) if n >= 2 => Some(entanglement_entropy(s, n / 2)?),
                _ => None,
            };
            Ok(CheckpointRecord {
                cycle,
                time_ns: cp.time * 1e9,
                probabilities: top_k.is_none().then(|| cp.snapshot.probabilities()),
                half_chain_entropy: entropy,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let p = evo.final_state.probabilities();
    let leak = qubit_leak(&evo.final_state)?;
    let record = RunRecord {
        n_sites: n,
        n_exc: file.n_exc,
        scheme: file.scheme,
        cycles: params.pulses.cycles(),
        steps: evo.steps_used,
        norm_drift: evo.norm_drift,
        leak,
        states: top_k.is_none().then(|| basis.states().to_vec()),
        top: top_k.map(|k| top_states(&basis, &p, k)),
        probabilities: top_k.is_none().then_some(p),
        checkpoints,
        sampling: None,
    };
    Ok(Simulation { record, final_state: evo.final_state, cycles: params.pulses.cycles() })
}

fn qubit_leak(psi: &StateVector) -> Result<f64> {
    let b = psi.basis();
    let qubits = Arc::new(enumerate_basis(b.n_sites(), b.n_exc(), TruncationScheme::QUBIT)?);
    Ok(project_onto(psi, &qubits)?.leak)
}

/// Evolves one instance file and packages the `run` result.
pub fn simulate(file: &InstanceFile, steps: Option<usize>, tol: f64, top_k: Option<usize>) -> Result<RunRecord> {
    Ok(simulate_full(file, steps, tol, top_k)?.record)
}

fn run_sample(c: &SampleConfig, em: &mut Emitter) -> Result<String> {
    let seed = c.seed.ok_or_else(|| Error::InvalidArgument("sample needs a seed".into()))?;
    let sim = simulate_full(&c.instance, c.steps, c.step_tolerance, None)?;
    let b = sim.final_state.basis();
    let qubits = Arc::new(enumerate_basis(b.n_sites(), b.n_exc(), TruncationScheme::QUBIT)?);
    let ideal = project_onto(&sim.final_state, &qubits)?.normalized;
    let model = MeasurementErrorModel { readout_error: c.readout_error, loss_per_cycle: c.loss_per_cycle };
    let out = sample_measurements(&ideal, c.samples, &model, sim.cycles, split_seed(seed, &[0]))?;
    let xeb = if out.counts.iter().any(|&k| k > 0) {
        xeb_fidelity_from_counts(&out.counts, &ideal)?
    } else {
        f64::NAN
    };
    let counts = out
        .counts
        .iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .map(|(i, &k)| (qubits.state(i).clone(), k))
        .collect();
    let mut rec = sim.record;
    rec.sampling = Some(SamplingRecord {
        n_samples: out.n_samples,
        counts,
        rejected: out.rejected,
        rejected_fraction: out.rejected_fraction,
        expected_rejected_fraction: model.rejected_fraction(b.n_sites(), b.n_exc(), sim.cycles),
        xeb,
    });
    em.json("result.json", &rec)
}

// ---- sweep -------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepPoint {
    pub disorder_mhz: f64,
    pub curve: CorrelationCurve,
    /// Exponential fit, absent when too few separations carry weight.
    pub fit: Option<CorrelationFit>,
    pub max_norm_drift: f64,
}

/// Qubit-projected, renormalized distributions of one sampled instance at
/// the end of every cycle, with the run's norm drift.
pub fn ensemble_member(
    n_sites: usize,
    n_exc: usize,
    scheme: TruncationScheme,
    config: &InstanceConfig,
    seed: u64,
    steps_per_ns: f64,
) -> Result<(Vec<ProbabilityDistribution>, f64)> {
    let params = sample_instance(n_sites, config, seed)?;
    let basis = Arc::new(enumerate_basis(n_sites, n_exc, scheme)?);
    let qubits = Arc::new(enumerate_basis(n_sites, n_exc, TruncationScheme::QUBIT)?);
    let psi0 = StateVector::fock(basis.clone(), &OccupationVector::alternating(n_sites))?;
    let h = Hamiltonian::new(&params, basis)?;
    let steps = (params.total_time() * 1e9 * steps_per_ns).ceil() as usize;
    let opts = EvolveOptions { keep_states: Some(true), ..EvolveOptions::default().with_checkpoints(CheckpointPolicy::Cycles) };
    let evo = evolve_refining(&h, &psi0, steps, &opts, MAX_REFINEMENTS)?;
    let dists = evo
        .checkpoints
        .iter()
        .skip(1)
        .map(|cp| {
            let psi = cp.snapshot.state().ok_or_else(|| Error::InvalidArgument("checkpoint without a state".into()))?;
            Ok(project_onto(psi, &qubits)?.normalized)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((dists, evo.norm_drift))
}

/// Correlation curves per disorder strength, averaged over instances and
/// cycles.
pub fn disorder_sweep(c: &SweepConfig) -> Result<Vec<SweepPoint>> {
    let seed = c.seed.ok_or_else(|| Error::InvalidArgument("sweep needs a seed".into()))?;
    let k = c.n_exc.unwrap_or_else(|| half_filling(c.n_sites));
    c.disorder_mhz
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let cfg = InstanceConfig::chaotic(c.cycles).with_disorder(mhz(w));
            let members = (0..c.instances)
                .into_par_iter()
                .map(|j| {
                    ensemble_member(c.n_sites, k, c.scheme, &cfg, split_seed(seed, &[i as u64, j as u64]), c.steps_per_ns)
                })
                .collect::<Result<Vec<_>>>()?;
            let drift = members.iter().map(|m| m.1).fold(0.0, f64::max);
            let dists: Vec<ProbabilityDistribution> = members.into_iter().flat_map(|m| m.0).collect();
            let curve = two_body_correlations(&dists)?;
            Ok(SweepPoint { disorder_mhz: w, fit: correlation_length(&curve).ok(), curve, max_norm_drift: drift })
        })
        .collect()
}

fn run_sweep(c: &SweepConfig, em: &mut Emitter, format: OutputFormat) -> Result<String> {
    let points = disorder_sweep(c)?;
    let n_sep = points.first().map(|p| p.curve.separations.len()).unwrap_or(0);
    let mut header = vec!["disorder_MHz".to_string()];
    header.extend((1..=n_sep).map(|d| format!("d{d}")));
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| std::iter::once(fmt(p.disorder_mhz)).chain(p.curve.mean_abs.iter().map(|&x| fmt(x))).collect())
        .collect();
    let csv = em.csv("correlations.csv", &header, &rows)?;
    let json = em.json("sweep.json", &points)?;
    Ok(match format {
        OutputFormat::Csv => csv,
        OutputFormat::Json => json,
    })
}

// ---- diagnose ----------------------------------------------------------------

fn load_run(path: &Path) -> Result<RunRecord> {
    let v: serde_json::Value = read_json(path)?;
    let inner = match v.get("result") {
        Some(r) => r.clone(),
        None => v,
    };
    Ok(serde_json::from_value(inner)?)
}

/// Maps full-basis probabilities onto the hard-core basis and renormalizes.
fn qubit_distribution(
    states: &[OccupationVector],
    p: &[f64],
    qubits: &Arc<Basis>,
) -> Result<ProbabilityDistribution> {
    let mut q = vec![0.0; qubits.dim()];
    for (s, &x) in states.iter().zip(p) {
        if let Some(i) = qubits.index_of(s) {
            q[i] += x;
        }
    }
    ProbabilityDistribution::with_basis(qubits.clone(), q)?.normalized()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KlReport {
    pub kl_nats: f64,
    pub mean_entropy: f64,
    pub porter_thomas_entropy: f64,
    pub n_states: usize,
    pub n_runs: usize,
    pub histogram: Histogram,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct XebEntry {
    pub input: PathBuf,
    pub xeb: Option<f64>,
}

fn run_diagnose(c: &DiagnoseConfig, em: &mut Emitter) -> Result<String> {
    let runs = c.inputs.iter().map(|p| load_run(p)).collect::<Result<Vec<_>>>()?;
    let first = &runs[0];
    if runs.iter().any(|r| r.n_sites != first.n_sites || r.n_exc != first.n_exc) {
        return Err(Error::BasisMismatch("result files differ in sector".into()));
    }
    let qubits = Arc::new(enumerate_basis(first.n_sites, first.n_exc, TruncationScheme::QUBIT)?);
    let dist_of = |r: &RunRecord, p: &[f64]| -> Result<ProbabilityDistribution> {
        let states = r
            .states
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("diagnose needs full probabilities, not top-K output".into()))?;
        qubit_distribution(states, p, &qubits)
    };
    let finals = runs
        .iter()
        .map(|r| {
            let p = r.probabilities.as_ref().ok_or_else(|| Error::InvalidArgument("missing probabilities".into()))?;
            dist_of(r, p)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut hist = Histogram::empty(&c.histogram)?;
    for d in &finals {
        hist.merge(&pt_histogram(d, &c.histogram)?)?;
    }
    let d = qubits.dim();
    let kl = KlReport {
        kl_nats: hist.kl_to_porter_thomas()?,
        mean_entropy: finals.iter().map(entropy).sum::<f64>() / finals.len() as f64,
        porter_thomas_entropy: porter_thomas_entropy(d),
        n_states: d,
        n_runs: finals.len(),
        histogram: hist.clone(),
    };
    let hist_rows: Vec<Vec<String>> = hist
        .edges
        .windows(2)
        .zip(hist.frequencies().iter().zip(hist.reference_masses()))
        .map(|(e, (f, r))| vec![fmt(e[0]), fmt(e[1]), fmt(*f), fmt(r)])
        .collect();
    let hist_header = ["x_lo", "x_hi", "frequency", "porter_thomas"].map(String::from);
    em.csv("histogram.csv", &hist_header, &hist_rows)?;
    let kl_text = em.json("kl.json", &kl)?;

    let xeb: Vec<XebEntry> = runs
        .iter()
        .zip(&finals)
        .zip(&c.inputs)
        .map(|((r, ideal), path)| {
            let xeb = match &r.sampling {
                Some(s) => {
                    let mut counts = vec![0u64; qubits.dim()];
                    for (state, &k) in &s.counts {
                        let i = qubits.index_of(state).ok_or_else(|| {
                            Error::BasisMismatch(format!("sampled state {state} outside the qubit sector"))
                        })?;
                        counts[i] += k;
                    }
                    Some(xeb_fidelity_from_counts(&counts, ideal)?)
                }
                None => None,
            };
            Ok(XebEntry { input: path.clone(), xeb })
        })
        .collect::<Result<Vec<_>>>()?;
    em.json("xeb.json", &xeb)?;

    // Checkpoint series, truncated to the shortest run.
    let n_cp = runs.iter().map(|r| r.checkpoints.len()).min().unwrap_or(0);
    let mut series: Vec<Vec<ProbabilityDistribution>> = Vec::with_capacity(n_cp);
    for k in 0..n_cp {
        series.push(
            runs.iter()
                .map(|r| {
                    let p = r.checkpoints[k].probabilities.as_ref().ok_or_else(|| {
                        Error::InvalidArgument("diagnose needs checkpoint probabilities".into())
                    })?;
                    dist_of(r, p)
                })
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let mut tce_rows = Vec::new();
    if c.t0_cycle < n_cp {
        let at_t0 = &series[c.t0_cycle];
        for (k, at_t) in series.iter().enumerate().skip(c.t0_cycle) {
            let vals = at_t0.iter().zip(at_t).map(|(a, b)| time_cross_entropy(a, b)).collect::<Result<Vec<_>>>();
            let (mean, baseline) = match (vals, uncorrelated_baseline(at_t0, at_t)) {
                (Ok(v), Ok(b)) => (v.iter().sum::<f64>() / v.len() as f64, b),
                (Err(Error::UndefinedSupport { .. }), _) | (_, Err(Error::UndefinedSupport { .. })) => {
                    (f64::INFINITY, f64::INFINITY)
                }
                (Err(e), _) | (_, Err(e)) => return Err(e),
            };
            tce_rows.push(vec![k.to_string(), fmt(mean), fmt(baseline)]);
        }
    }
    em.csv("tce.csv", &["cycle", "time_cross_entropy", "uncorrelated_baseline"].map(String::from), &tce_rows)?;

    let ent_rows: Vec<Vec<String>> = (0..n_cp)
        .filter_map(|k| {
            let v: Vec<f64> = runs.iter().filter_map(|r| r.checkpoints[k].half_chain_entropy).collect();
            (!v.is_empty()).then(|| {
                let t = runs.iter().map(|r| r.checkpoints[k].time_ns).sum::<f64>() / runs.len() as f64;
                vec![k.to_string(), fmt(t), fmt(v.iter().sum::<f64>() / v.len() as f64), v.len().to_string()]
            })
        })
        .collect();
    em.csv("entanglement.csv", &["cycle", "mean_time_ns", "half_chain_entropy", "n_runs"].map(String::from), &ent_rows)?;

    let corr_rows: Vec<Vec<String>> = match two_body_correlations(&finals) {
        Ok(curve) => curve
            .separations
            .iter()
            .zip(curve.mean_abs.iter().zip(&curve.std_err))
            .map(|(d, (m, s))| vec![d.to_string(), fmt(*m), fmt(*s)])
            .collect(),
        Err(Error::InvalidArgument(_)) => Vec::new(),
        Err(e) => return Err(e),
    };
    em.csv("correlations.csv", &["separation", "mean_abs_correlation", "std_err"].map(String::from), &corr_rows)?;
    Ok(kl_text)
}

// ---- oracle-check ------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleDeviation {
    pub n_sites: usize,
    pub instances: usize,
    pub amplitudes_checked: usize,
    pub max_deviation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleCheckResult {
    /// RK4 probabilities against determinant amplitudes, per chain length.
    pub fermion: Vec<OracleDeviation>,
    /// Path-sum amplitudes against the dense slice product.
    pub path_sum: OracleDeviation,
}

pub fn oracle_check(c: &OracleCheckConfig) -> Result<OracleCheckResult> {
    let seed = c.seed.ok_or_else(|| Error::InvalidArgument("oracle-check needs a seed".into()))?;
    let fermion = c
        .fermion_sites
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let devs = (0..c.instances)
                .into_par_iter()
                .map(|j| {
                    let params = sample_instance(n, &InstanceConfig::chaotic(c.cycles), split_seed(seed, &[0, i as u64, j as u64]))?;
                    fermion_deviation(&params, c.rk4_steps)
                })
                .collect::<Result<Vec<_>>>()?;
            let checked = devs.iter().map(|d| d.1).sum();
            Ok(OracleDeviation {
                n_sites: n,
                instances: c.instances,
                amplitudes_checked: checked,
                max_deviation: devs.iter().map(|d| d.0).fold(0.0, f64::max),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = c.path_sum_sites;
    let weak = InstanceConfig::chaotic(c.cycles).with_pulses((ns(20.0), ns(30.0)), (mhz(6.0), mhz(10.0)));
    let opts = PathSumOptions { strategy: Strategy::Enumerate, ..PathSumOptions::default() };
    let mut max_dev = 0.0f64;
    let mut checked = 0;
    for j in 0..c.instances {
        let params = sample_instance(n, &weak, split_seed(seed, &[1, j as u64]))?;
        let basis = enumerate_basis(n, half_filling(n), opts.scheme)?;
        let start = OccupationVector::alternating(n);
        let from = basis.index_of(&start).ok_or_else(|| Error::BasisMismatch("initial state".into()))?;
        for (to, out) in basis.states().iter().enumerate() {
            let ps = path_sum_amplitude(&params, &start, out, c.path_sum_steps, &opts)?;
            let dense = linearized_product_amplitude(&params, &basis, c.path_sum_steps, from, to);
            max_dev = max_dev.max((ps.amplitude - dense).norm());
            checked += 1;
        }
    }
    Ok(OracleCheckResult {
        fermion,
        path_sum: OracleDeviation { n_sites: n, instances: c.instances, amplitudes_checked: checked, max_deviation: max_dev },
    })
}

/// Largest `| p_RK4 - |det|^2 |` over the half-filled hard-core sector.
pub fn fermion_deviation(params: &InstanceParams, steps: usize) -> Result<(f64, usize)> {
    let n = params.n_sites;
    let basis = Arc::new(enumerate_basis(n, half_filling(n), TruncationScheme::QUBIT)?);
    let start = OccupationVector::alternating(n);
    let psi0 = StateVector::fock(basis.clone(), &start)?;
    let h = Hamiltonian::new(params, basis.clone())?;
    let evo = evolve_refining(&h, &psi0, steps, &EvolveOptions::default().with_checkpoints(CheckpointPolicy::None), MAX_REFINEMENTS)?;
    let prop = fermion_propagator(params, crate::oracles::free_fermion::DEFAULT_STEPS)?;
    let p = evo.final_state.probabilities();
    let mut dev = 0.0f64;
    for (s, &pk) in basis.states().iter().zip(&p) {
        let a = free_fermion_amplitude(&prop, &start, s)?;
        dev = dev.max((pk - a.norm_sqr()).abs());
    }
    Ok((dev, basis.dim()))
}

fn run_oracle_check(c: &OracleCheckConfig, em: &mut Emitter) -> Result<String> {
    let res = oracle_check(c)?;
    em.json("oracle.json", &res)?;
    Ok(serde_json::to_string_pretty(&res)? + "\n")
}

// ---- gmon --------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolynomialReport {
    pub fit: crate::gmon::PolynomialFit,
    /// Max deviation of the reference coefficients on the same grid, Hz.
    pub published_max_deviation_hz: (f64, f64),
    pub published_rms_deviation_hz: (f64, f64),
    /// Largest relative difference between refit and reference coefficients.
    pub max_relative_coefficient_change: f64,
}

fn read_samples(path: &Path) -> Result<Vec<SpectrumSample>> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        return read_json(path);
    }
    let cols = read_columns(path, 4)?;
    Ok((0..cols[0].len())
        .map(|k| SpectrumSample { flux_q: cols[0][k], flux_c: cols[1][k], f10: cols[2][k], f21: cols[3][k] })
        .collect())
}

fn run_gmon(c: &GmonConfig, em: &mut Emitter, format: OutputFormat) -> Result<String> {
    match c {
        GmonConfig::Spectrum { params, flux_q, flux_c, levels } => {
            let p = params.load()?;
            let diag = Diagonalizer::new(*levels)?;
            let fc_list = if flux_c.is_empty() { vec![0.0] } else { flux_c.clone() };
            let grid: Vec<(f64, f64)> = flux_q.iter().flat_map(|&q| fc_list.iter().map(move |&f| (q, f))).collect();
            let samples = grid
                .par_iter()
                .map(|&(q, f)| {
                    let s = circuit_spectrum_with(&p, q, f, &diag)?;
                    Ok(SpectrumSample { flux_q: q, flux_c: f, f10: s.f10, f21: s.f21 })
                })
                .collect::<Result<Vec<_>>>()?;
            let rows: Vec<Vec<String>> =
                samples.iter().map(|s| vec![fmt(s.flux_q), fmt(s.flux_c), fmt(s.f10), fmt(s.f21)]).collect();
            let csv = em.csv("spectrum.csv", &["flux_q", "flux_c", "f10_Hz", "f21_Hz"].map(String::from), &rows)?;
            let json = em.json("spectrum.json", &samples)?;
            Ok(if format == OutputFormat::Csv { csv } else { json })
        }
        GmonConfig::Fit { samples, guess, free } => {
            let data = read_samples(samples)?;
            let fit: SpectrumFit = fit_spectrum(&data, &guess.load()?, free)?;
            em.json("fit.json", &fit)
        }
        GmonConfig::FitPoly { grid } => {
            let fit = fit_polynomial_coefficients(grid)?;
            let exact = exact_grid(grid)?;
            let (pub_max, pub_rms) = polynomial_deviation(&PolynomialCoefficients::PUBLISHED, &exact);
            let reference = PolynomialCoefficients::PUBLISHED;
            let rel = |a: f64, b: f64| if b == 0.0 { (a - b).abs() } else { ((a - b) / b).abs() };
            let mut change = 0.0f64;
            for &(i, j) in PolynomialCoefficients::TERMS.iter() {
                change = change.max(rel(fit.coeffs.a[i][j], reference.a[i][j])).max(rel(fit.coeffs.b[i][j], reference.b[i][j]));
            }
            let report = PolynomialReport {
                fit,
                published_max_deviation_hz: pub_max,
                published_rms_deviation_hz: pub_rms,
                max_relative_coefficient_change: change,
            };
            em.json("poly.json", &report)
        }
    }
}

// ---- cal ---------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrosstalkResult {
    pub control: Vec<f64>,
    /// `max |X c - desired|`.
    pub residual: f64,
    pub condition_number: f64,
}

fn run_cal(c: &CalConfig, em: &mut Emitter, format: OutputFormat) -> Result<String> {
    match c {
        CalConfig::TfFit { phase, pulse, curve_hz, n_terms } => {
            let cols = read_columns(phase, 2)?;
            let trace = PhaseTrace { times: cols[0].clone(), phase: cols[1].clone() };
            let (pulse, dt) = read_waveform(pulse)?;
            let coeffs = curve_hz.clone();
            let curve = move |x: f64| {
                2.0 * std::f64::consts::PI * coeffs.iter().enumerate().map(|(k, c)| c * x.powi(k as i32 + 1)).sum::<f64>()
            };
            let fit: TransferFit = fit_transfer_function(&trace, &pulse, dt, curve, *n_terms)?;
            em.json("tf.json", &fit)
        }
        CalConfig::Predistort { tf, waveform, forward } => {
            let tf: TransferFunction = read_json(tf)?;
            tf.validate()?;
            let (w, dt) = read_waveform(waveform)?;
            let out = if *forward { apply_transfer(&tf, &w, dt)? } else { predistort(&tf, &w, dt)? };
            let rows: Vec<Vec<String>> = out.iter().enumerate().map(|(k, v)| vec![fmt(k as f64 * dt), fmt(*v)]).collect();
            let name = if *forward { "distorted.csv" } else { "predistorted.csv" };
            let csv = em.csv(name, &["t", "value"].map(String::from), &rows)?;
            Ok(if format == OutputFormat::Csv { csv } else { serde_json::to_string(&out)? + "\n" })
        }
        CalConfig::Xtalk { matrix, desired } => {
            let rows: Vec<Vec<f64>> = read_json(matrix)?;
            let x = CrosstalkMatrix::try_from(rows)?;
            let want: Vec<f64> = read_json(desired)?;
            let control = compensate_crosstalk(&x, &want)?;
            let residual = x.apply(&control).iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            em.json("control.json", &CrosstalkResult { control, residual, condition_number: x.condition_number() })
        }
        CalConfig::Timing { curve } => {
            let cols = read_columns(curve, 2)?;
            let fit: TimingFit = fit_timing_offset(&cols[0], &cols[1])?;
            em.json("timing.json", &fit)
        }
    }
}
