//! Fixed-step RK4 propagation of `d psi / dt = -i H(t) psi`, step-count
//! selection, projection onto the qubit subspace and a classical readout
//! error model with post-selection.

use std::sync::Arc;

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bose_hubbard::{Hamiltonian, InstanceParams, StateVector};
use crate::diagnostics::{xeb_fidelity, ProbabilityDistribution};
use crate::error::{invalid, Error, Result};
use crate::fock_basis::{enumerate_basis, Basis, TruncationScheme};
use crate::numeric::norm;
use crate::rng::rng;

/// Largest norm deviation tolerated by [`rk4_evolve`].
pub const NORM_TOLERANCE: f64 = 1e-6;

/// Full states are kept at checkpoints up to this many sites by default.
pub const STATE_CHECKPOINT_SITES: usize = 12;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckpointPolicy {
    None,
    /// At `t = 0` and at the end of every cycle.
    Cycles,
    /// At `t = 0`, every `k` steps and at the end.
    EverySteps(usize),
}

#[derive(Clone, Debug)]
pub enum Snapshot {
    State(StateVector),
    Probabilities(Vec<f64>),
}

impl Snapshot {
    pub fn probabilities(&self) -> Vec<f64> {
        match self {
            Snapshot::State(s) => s.probabilities(),
            Snapshot::Probabilities(p) => p.clone(),
        }
    }

    pub fn state(&self) -> Option<&StateVector> {
        match self {
            Snapshot::State(s) => Some(s),
            Snapshot::Probabilities(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub time: f64,
    pub step: usize,
    pub snapshot: Snapshot,
}

#[derive(Clone, Debug)]
pub struct EvolveOptions {
    pub checkpoints: CheckpointPolicy,
    /// Store states rather than probabilities at checkpoints. Defaults to
    /// `n_sites <= 12`.
    pub keep_states: Option<bool>,
    /// `None` disables the norm check; used for deliberately coarse runs.
    pub norm_tolerance: Option<f64>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { checkpoints: CheckpointPolicy::Cycles, keep_states: None, norm_tolerance: Some(NORM_TOLERANCE) }
    }
}

impl EvolveOptions {
    pub fn unchecked() -> Self {
        Self { checkpoints: CheckpointPolicy::None, keep_states: None, norm_tolerance: None }
    }

    pub fn with_checkpoints(mut self, policy: CheckpointPolicy) -> Self {
        self.checkpoints = policy;
        self
    }
}

#[derive(Clone, Debug)]
pub struct EvolutionResult {
    pub final_state: StateVector,
    pub checkpoints: Vec<Checkpoint>,
    /// `| ||psi(T)|| - 1 |`.
    pub norm_drift: f64,
    pub steps_used: usize,
}

/// Splits `steps` over cycles in proportion to their durations (largest
/// remainder, at least one step each) so that every cycle boundary falls
/// on a step.
pub fn allocate_steps(durations: &[f64], steps: usize) -> Vec<usize> {
    if durations.is_empty() {
        return Vec::new();
    }
    let steps = steps.max(durations.len());
    let total: f64 = durations.iter().sum();
    let exact: Vec<f64> = durations.iter().map(|d| d / total * steps as f64).collect();
    let mut alloc: Vec<usize> = exact.iter().map(|x| (x.floor() as usize).max(1)).collect();
    let mut assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..durations.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - alloc[a] as f64;
        let rb = exact[b] - alloc[b] as f64;
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut k = 0;
    while assigned < steps {
        alloc[order[k % order.len()]] += 1;
        assigned += 1;
        k += 1;
    }
    while assigned > steps {
        // only reachable when the one-step floor pushed us over
        let j = (0..alloc.len()).max_by_key(|&j| alloc[j]).unwrap();
        alloc[j] -= 1;
        assigned -= 1;
    }
    alloc
}

struct Workspace {
    k: Vec<Complex64>,
    tmp: Vec<Complex64>,
    acc: Vec<Complex64>,
    g: Vec<f64>,
}

/// One classic RK4 step from `t` to `t + dt`, in place.
fn rk4_step(h: &Hamiltonian, t: f64, dt: f64, psi: &mut [Complex64], ws: &mut Workspace) {
    let pulses = h.pulses();
    let mi_dt = -I * dt;
    // k1
    pulses.couplings_at(t, &mut ws.g);
    h.apply_with_couplings(&ws.g, psi, &mut ws.k);
    for ((a, k), (tmp, p)) in ws.acc.iter_mut().zip(&ws.k).zip(ws.tmp.iter_mut().zip(psi.iter())) {
        let k = mi_dt * k;
        *a = k;
        *tmp = p + 0.5 * k;
    }
    // k2
    pulses.couplings_at(t + 0.5 * dt, &mut ws.g);
    h.apply_with_couplings(&ws.g, &ws.tmp, &mut ws.k);
    for ((a, k), (tmp, p)) in ws.acc.iter_mut().zip(&ws.k).zip(ws.tmp.iter_mut().zip(psi.iter())) {
        let k = mi_dt * k;
        *a += 2.0 * k;
        *tmp = p + 0.5 * k;
    }
    // k3, same couplings
    h.apply_with_couplings(&ws.g, &ws.tmp, &mut ws.k);
    for ((a, k), (tmp, p)) in ws.acc.iter_mut().zip(&ws.k).zip(ws.tmp.iter_mut().zip(psi.iter())) {
        let k = mi_dt * k;
        *a += 2.0 * k;
        *tmp = p + k;
    }
    // k4
    pulses.couplings_at(t + dt, &mut ws.g);
    h.apply_with_couplings(&ws.g, &ws.tmp, &mut ws.k);
    for ((p, a), k) in psi.iter_mut().zip(&ws.acc).zip(&ws.k) {
        *p += (a + mi_dt * k) / 6.0;
    }
}

/// Evolves `psi0` through the whole pulse schedule of `h` with `steps` RK4
/// steps.
pub fn evolve(h: &Hamiltonian, psi0: &StateVector, steps: usize, opts: &EvolveOptions) -> Result<EvolutionResult> {
    if steps == 0 {
        return invalid("at least one step is required");
    }
    if !Arc::ptr_eq(psi0.basis(), h.basis()) && **psi0.basis() != **h.basis() {
        return Err(Error::BasisMismatch("initial state and Hamiltonian use different bases".into()));
    }
    let durations = &h.pulses().durations;
    let alloc = allocate_steps(durations, steps);
    let steps_used: usize = alloc.iter().sum();
    let keep_states = opts.keep_states.unwrap_or(h.basis().n_sites() <= STATE_CHECKPOINT_SITES);
    let basis = h.basis().clone();

    let snapshot = |psi: &[Complex64]| -> Snapshot {
        if keep_states {
            Snapshot::State(StateVector::new(basis.clone(), psi.to_vec()).expect("dimension checked"))
        } else {
            Snapshot::Probabilities(psi.iter().map(|a| a.norm_sqr()).collect())
        }
    };

    let d = h.dim();
    let mut ws = Workspace {
        k: vec![Complex64::default(); d],
        tmp: vec![Complex64::default(); d],
        acc: vec![Complex64::default(); d],
        g: vec![0.0; h.hopping().n_bonds()],
    };
    let mut psi = psi0.amplitudes().to_vec();
    let mut checkpoints = Vec::new();
    if opts.checkpoints != CheckpointPolicy::None {
        checkpoints.push(Checkpoint { time: 0.0, step: 0, snapshot: snapshot(&psi) });
    }
    let check_norm = |psi: &[Complex64], step: usize| -> Result<()> {
        if let Some(tol) = opts.norm_tolerance {
            let drift = (norm(psi) - 1.0).abs();
            if !(drift <= tol) {
                return Err(Error::NormDrift { drift, tolerance: tol, steps: step });
            }
        }
        Ok(())
    };

    let mut step = 0;
    let mut start = 0.0;
    for (&duration, &n) in durations.iter().zip(&alloc) {
        let dt = duration / n as f64;
        for j in 0..n {
            rk4_step(h, start + j as f64 * dt, dt, &mut psi, &mut ws);
            step += 1;
            if let CheckpointPolicy::EverySteps(k) = opts.checkpoints {
                if k > 0 && step % k == 0 && step != steps_used {
                    checkpoints.push(Checkpoint { time: start + (j + 1) as f64 * dt, step, snapshot: snapshot(&psi) });
                }
            }
        }
        start += duration;
        check_norm(&psi, step)?;
        let record = match opts.checkpoints {
            CheckpointPolicy::Cycles => true,
            CheckpointPolicy::EverySteps(_) => step == steps_used,
            CheckpointPolicy::None => false,
        };
        if record {
            checkpoints.push(Checkpoint { time: start, step, snapshot: snapshot(&psi) });
        }
    }
    let norm_drift = (norm(&psi) - 1.0).abs();
    Ok(EvolutionResult {
        final_state: StateVector::new(basis, psi)?,
        checkpoints,
        norm_drift,
        steps_used,
    })
}

/// [`evolve`] with default options: checkpoints at cycle boundaries and a
/// norm check at [`NORM_TOLERANCE`].
pub fn rk4_evolve(instance: &InstanceParams, psi0: &StateVector, steps: usize) -> Result<EvolutionResult> {
    rk4_evolve_with(instance, psi0, steps, &EvolveOptions::default())
}

pub fn rk4_evolve_with(
    instance: &InstanceParams,
    psi0: &StateVector,
    steps: usize,
    opts: &EvolveOptions,
) -> Result<EvolutionResult> {
    let h = Hamiltonian::new(instance, psi0.basis().clone())?;
    evolve(&h, psi0, steps, opts)
}

/// [`evolve`], doubling the step count after each norm-drift failure, at
/// most `max_doublings` times.
pub fn evolve_refining(
    h: &Hamiltonian,
    psi0: &StateVector,
    steps: usize,
    opts: &EvolveOptions,
    max_doublings: u32,
) -> Result<EvolutionResult> {
    let mut n = steps.max(1);
    let mut attempt = 0;
    loop {
        match evolve(h, psi0, n, opts) {
            Err(Error::NormDrift { .. }) if attempt < max_doublings => {
                n *= 2;
                attempt += 1;
            }
            other => return other,
        }
    }
}

/// Qubit-subspace view of a state on any truncation.
#[derive(Clone, Debug)]
pub struct QubitProjection {
    /// `|<z|psi>|^2` over the hard-core basis; sums to `1 - leak`.
    pub raw: ProbabilityDistribution,
    /// `raw` rescaled to unit mass.
    pub normalized: ProbabilityDistribution,
    /// Weight outside the qubit subspace.
    pub leak: f64,
}

/// Projects onto hard-core states with the same site count and excitation
/// number.
pub fn project_qubit_subspace(psi: &StateVector) -> Result<QubitProjection> {
    let basis = psi.basis();
    let qubits = if basis.scheme() == TruncationScheme::QUBIT {
        basis.clone()
    } else {
        Arc::new(enumerate_basis(basis.n_sites(), basis.n_exc(), TruncationScheme::QUBIT)?)
    };
    project_onto(psi, &qubits)
}

/// Projection onto an explicit hard-core basis; reuse across many states.
pub fn project_onto(psi: &StateVector, qubits: &Arc<Basis>) -> Result<QubitProjection> {
    let basis = psi.basis();
    if qubits.n_sites() != basis.n_sites() || qubits.n_exc() != basis.n_exc() {
        return Err(Error::BasisMismatch("qubit basis does not match the state sector".into()));
    }
    let amps = psi.amplitudes();
    let raw: Vec<f64> = if Arc::ptr_eq(qubits, basis) {
        amps.iter().map(|a| a.norm_sqr()).collect()
    } else {
        qubits
            .states()
            .iter()
            .map(|z| basis.index_of(z).map_or(0.0, |k| amps[k].norm_sqr()))
            .collect()
    };
    let total = crate::numeric::kahan_sum(raw.iter().copied());
    let leak = crate::numeric::norm_sqr(amps) - total;
    let raw = ProbabilityDistribution::with_basis(qubits.clone(), raw)?;
    let normalized = raw.normalized()?;
    Ok(QubitProjection { raw, normalized, leak })
}

/// Outcome of [`estimate_steps`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepEstimate {
    pub steps: usize,
    /// `(steps, fidelity against twice as many steps)` for each resolution tried.
    pub history: Vec<(usize, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSearch {
    pub floor: usize,
    pub cap: usize,
}

impl Default for StepSearch {
    fn default() -> Self {
        Self { floor: 16, cap: 1 << 20 }
    }
}

/// Fidelity of a coarse run scored against a finer one. Runs that blow up
/// score `-inf` rather than failing.
pub fn step_fidelity(h: &Hamiltonian, psi0: &StateVector, coarse: usize, fine: usize) -> Result<f64> {
    let opts = EvolveOptions::unchecked();
    let a = evolve(h, psi0, coarse, &opts)?.final_state;
    let b = evolve(h, psi0, fine, &opts)?.final_state;
    resolution_fidelity(&a, &b)
}

fn resolution_fidelity(coarse: &StateVector, fine: &StateVector) -> Result<f64> {
    if coarse.amplitudes().iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
        return Ok(f64::NEG_INFINITY);
    }
    let pc = project_qubit_subspace(coarse)?.normalized;
    let pf = project_qubit_subspace(fine)?.normalized;
    let same = pc
        .probabilities()
        .iter()
        .zip(pf.probabilities())
        .all(|(a, b)| (a - b).abs() <= 1e-12);
    if same {
        return Ok(1.0);
    }
    match xeb_fidelity(&pc, &pf) {
        Ok(f) if f.is_finite() => Ok(f),
        Ok(_) | Err(Error::UndefinedSupport { .. }) | Err(Error::InvalidArgument(_)) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

/// Doubles the step count from `search.floor` until the qubit-subspace
/// fidelity between `n` and `2n` steps exceeds `1 - tol`; returns `n`.
pub fn estimate_steps(h: &Hamiltonian, psi0: &StateVector, tol: f64, search: StepSearch) -> Result<StepEstimate> {
    if !(tol > 0.0 && tol < 1.0) {
        return invalid("tolerance must lie in (0, 1)");
    }
    let opts = EvolveOptions::unchecked();
    let mut n = search.floor.max(1).max(h.pulses().cycles());
    let mut history = Vec::new();
    let mut current = evolve(h, psi0, n, &opts)?.final_state;
    while 2 * n <= search.cap {
        let finer = evolve(h, psi0, 2 * n, &opts)?.final_state;
        let f = resolution_fidelity(&current, &finer)?;
        history.push((n, f));
        if f > 1.0 - tol {
            return Ok(StepEstimate { steps: n, history });
        }
        current = finer;
        n *= 2;
    }
    Err(Error::BudgetExceeded(format!("no convergence below {} steps", search.cap)))
}

/// Readout infidelity and photon loss applied to sampled bitstrings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementErrorModel {
    /// Probability that a measured bit is flipped.
    pub readout_error: f64,
    /// Probability per cycle that an excitation is lost before readout.
    pub loss_per_cycle: f64,
}

impl MeasurementErrorModel {
    pub const IDEAL: Self = Self { readout_error: 0.0, loss_per_cycle: 0.0 };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("readout error", self.readout_error), ("loss", self.loss_per_cycle)] {
            if !(0.0..1.0).contains(&v) {
                return invalid(format!("{name} must lie in [0, 1)"));
            }
        }
        Ok(())
    }

    /// Loss probability after `cycles` cycles, capped at one.
    pub fn loss(&self, cycles: usize) -> f64 {
        (cycles as f64 * self.loss_per_cycle).min(1.0)
    }

    /// Probability that a sample with `n_exc` excitations on `n_sites`
    /// still shows `n_exc` set bits after loss and readout errors.
    pub fn survival_probability(&self, n_sites: usize, n_exc: usize, cycles: usize) -> f64 {
        let e = self.readout_error;
        let l = self.loss(cycles);
        // a set bit reads 1 if kept and not flipped, or lost and flipped
        let q1 = (1.0 - l) * (1.0 - e) + l * e;
        let q0 = e;
        let zeros = n_sites - n_exc;
        (0..=n_exc)
            .filter(|&j| n_exc - j <= zeros)
            .map(|j| binom_pmf(n_exc, j, q1) * binom_pmf(zeros, n_exc - j, q0))
            .sum()
    }

    pub fn rejected_fraction(&self, n_sites: usize, n_exc: usize, cycles: usize) -> f64 {
        1.0 - self.survival_probability(n_sites, n_exc, cycles)
    }
}

fn binom_pmf(n: usize, k: usize, p: f64) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c *= (n - i) as f64 / (i + 1) as f64;
    }
    c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    /// Surviving counts in the order of the sampled distribution.
    pub counts: Vec<u64>,
    pub n_samples: u64,
    pub rejected: u64,
    pub rejected_fraction: f64,
}

/// Draws `n_samples` bitstrings from a labelled distribution, applies the
/// error model and keeps only samples whose excitation count is conserved.
pub fn sample_measurements(
    dist: &ProbabilityDistribution,
    n_samples: u64,
    model: &MeasurementErrorModel,
    cycles: usize,
    seed: u64,
) -> Result<SampleOutcome> {
    model.validate()?;
    if n_samples == 0 {
        return invalid("at least one sample is required");
    }
    let basis = dist
        .basis()
        .ok_or_else(|| Error::InvalidArgument("sampling needs a labelled distribution".into()))?
        .clone();
    let weights = WeightedIndex::new(dist.probabilities())
        .map_err(|e| Error::Degenerate(format!("cannot sample distribution: {e}")))?;
    let mut r = rng(seed);
    let n = basis.n_sites();
    let loss = model.loss(cycles);
    let e = model.readout_error;
    let mut counts = vec![0u64; dist.n_states()];
    let mut rejected = 0u64;
    let mut bits = vec![0u8; n];
    for _ in 0..n_samples {
        let k = weights.sample(&mut r);
        let s = basis.state(k).counts();
        let mut ones = 0usize;
        let mut changed = false;
        for (b, &c) in bits.iter_mut().zip(s) {
            let mut v = u8::from(c > 0);
            if v == 1 && loss > 0.0 && r.random::<f64>() < loss {
                v = 0;
            }
            if e > 0.0 && r.random::<f64>() < e {
                v ^= 1;
            }
            changed |= v != u8::from(c > 0);
            *b = v;
            ones += v as usize;
        }
        if ones != basis.n_exc() {
            rejected += 1;
        } else if !changed {
            counts[k] += 1;
        } else {
            match basis.index_of_counts(&bits) {
                Some(j) => counts[j] += 1,
                None => rejected += 1,
            }
        }
    }
    Ok(SampleOutcome { counts, n_samples, rejected, rejected_fraction: rejected as f64 / n_samples as f64 })
}
