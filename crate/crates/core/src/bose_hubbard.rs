//! Driven Bose-Hubbard chain.
//!
//! ```text
//! H(t) = sum_i [ delta_i n_i + (eta_i / 2) n_i (n_i - 1) ]
//!      + sum_i g_{i,i+1}(t) (a_i^dag a_{i+1} + h.c.)
//! ```
//!
//! All frequencies are angular (rad/s) and all times are seconds. The
//! Hamiltonian is applied matrix-free: hopping matrix elements are tabulated
//! once per [`Basis`] in a row-compressed [`HoppingTable`], and hops that
//! leave the truncated space are dropped.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock_basis::{enumerate_basis, Basis, OccupationVector, TruncationScheme};
use crate::rng::rng;

/// Outputs at least this long are computed in parallel row slabs.
const PARALLEL_ROWS: usize = 4096;

/// `2 pi f` for a frequency in MHz.
pub fn mhz(f: f64) -> f64 {
    2.0 * PI * f * 1e6
}

/// Inverse of [`mhz`].
pub fn to_mhz(omega: f64) -> f64 {
    omega / (2.0 * PI * 1e6)
}

pub fn ns(t: f64) -> f64 {
    t * 1e-9
}

/// Default anharmonicity, -200 MHz.
pub fn default_eta() -> f64 {
    mhz(-200.0)
}

/// Shape of a single coupler pulse.
///
/// Serialized as `"square"`, `"sin2"` or `"trapezoid:<ramp_fraction>"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Envelope {
    Square,
    /// `g_max sin^2(pi t / T)`; vanishes with zero slope at both ends.
    SinSquared,
    /// Linear ramps occupying `ramp_fraction` of the pulse at each end.
    Trapezoid { ramp_fraction: f64 },
}

impl Default for Envelope {
    fn default() -> Self {
        Envelope::SinSquared
    }
}

impl Envelope {
    /// Coupling at local time `t` within a pulse of length `t_pulse`.
    pub fn value(&self, t: f64, t_pulse: f64, g_max: f64) -> f64 {
        // rounding in accumulated step times must not switch a square pulse off
        let slack = 1e-9 * t_pulse;
        if t < -slack || t > t_pulse + slack {
            return 0.0;
        }
        let t = t.clamp(0.0, t_pulse);
        match *self {
            Envelope::Square => g_max,
            Envelope::SinSquared => {
                let s = (PI * t / t_pulse).sin();
                g_max * s * s
            }
            Envelope::Trapezoid { ramp_fraction } => {
                let ramp = ramp_fraction.clamp(0.0, 0.5) * t_pulse;
                if ramp <= 0.0 {
                    g_max
                } else {
                    g_max * (t / ramp).min((t_pulse - t) / ramp).min(1.0)
                }
            }
        }
    }
}

impl fmt::Display for Envelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Envelope::Square => write!(f, "square"),
            Envelope::SinSquared => write!(f, "sin2"),
            Envelope::Trapezoid { ramp_fraction } => write!(f, "trapezoid:{ramp_fraction}"),
        }
    }
}

impl FromStr for Envelope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "square" => Ok(Envelope::Square),
            "sin2" | "sin_squared" | "sin^2" => Ok(Envelope::SinSquared),
            "trapezoid" => Ok(Envelope::Trapezoid { ramp_fraction: 0.2 }),
            _ => match s.strip_prefix("trapezoid:").map(str::parse::<f64>) {
                Some(Ok(r)) if (0.0..=0.5).contains(&r) => Ok(Envelope::Trapezoid { ramp_fraction: r }),
                _ => invalid(format!("unknown envelope {s:?}")),
            },
        }
    }
}

impl TryFrom<String> for Envelope {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Envelope> for String {
    fn from(e: Envelope) -> Self {
        e.to_string()
    }
}

/// `g(t)` for the default sin-squared pulse.
pub fn coupling_envelope(t: f64, t_pulse: f64, g_max: f64) -> f64 {
    Envelope::SinSquared.value(t, t_pulse, g_max)
}

/// Sequence of coupler pulses, one per cycle, applied to every bond at once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    /// Pulse length of each cycle, seconds.
    pub durations: Vec<f64>,
    /// Peak coupling per cycle and bond (`g_max[cycle][bond]`), rad/s.
    pub g_max: Vec<Vec<f64>>,
    pub envelope: Envelope,
}

impl PulseSchedule {
    /// Every bond shares one peak coupling per cycle.
    pub fn shared(durations: Vec<f64>, g_per_cycle: &[f64], n_bonds: usize, envelope: Envelope) -> Self {
        let g_max = g_per_cycle.iter().map(|&g| vec![g; n_bonds]).collect();
        Self { durations, g_max, envelope }
    }

    pub fn cycles(&self) -> usize {
        self.durations.len()
    }

    pub fn n_bonds(&self) -> usize {
        self.g_max.first().map_or(0, |r| r.len())
    }

    pub fn total_time(&self) -> f64 {
        self.durations.iter().sum()
    }

    /// Start times of each cycle followed by the end time.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.cycles() + 1);
        let mut t = 0.0;
        out.push(t);
        for d in &self.durations {
            t += d;
            out.push(t);
        }
        out
    }

    pub fn validate(&self, n_bonds: usize) -> Result<()> {
        if self.durations.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return invalid("pulse durations must be positive");
        }
        if self.g_max.len() != self.durations.len() {
            return invalid("one row of peak couplings per cycle is required");
        }
        if self.g_max.iter().any(|r| r.len() != n_bonds) {
            return invalid(format!("each cycle needs {n_bonds} bond couplings"));
        }
        Ok(())
    }

    /// Cycle index and local time for a global time; times past the end map
    /// onto the last cycle.
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let mut start = 0.0;
        for (c, &d) in self.durations.iter().enumerate() {
            if t < start + d || c + 1 == self.durations.len() {
                return (c, t - start);
            }
            start += d;
        }
        (0, t)
    }

    /// Writes `g_b(t)` for every bond into `out`.
    pub fn couplings_at(&self, t: f64, out: &mut [f64]) {
        if self.durations.is_empty() {
            out.iter_mut().for_each(|g| *g = 0.0);
            return;
        }
        let (c, local) = self.locate(t);
        let d = self.durations[c];
        for (g, &peak) in out.iter_mut().zip(&self.g_max[c]) {
            *g = self.envelope.value(local, d, peak);
        }
    }

    pub fn coupling(&self, bond: usize, t: f64) -> f64 {
        let mut g = vec![0.0; self.n_bonds()];
        self.couplings_at(t, &mut g);
        g[bond]
    }
}

/// One random protocol instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceParams {
    pub n_sites: usize,
    /// Site detunings, rad/s.
    pub delta: Vec<f64>,
    /// Anharmonicities, rad/s (negative for transmons).
    pub eta: Vec<f64>,
    pub pulses: PulseSchedule,
    pub seed: u64,
}

impl InstanceParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_sites == 0 {
            return invalid("instance needs at least one site");
        }
        if self.delta.len() != self.n_sites || self.eta.len() != self.n_sites {
            return invalid("delta and eta need one entry per site");
        }
        self.pulses.validate(self.n_sites - 1)
    }

    pub fn total_time(&self) -> f64 {
        self.pulses.total_time()
    }

    /// Same schedule with every coupling set to zero.
    pub fn decoupled(&self) -> Self {
        let mut out = self.clone();
        out.pulses.g_max.iter_mut().for_each(|r| r.iter_mut().for_each(|g| *g = 0.0));
        out
    }

    /// First `cycles` pulses only.
    pub fn truncated_to(&self, cycles: usize) -> Self {
        let mut out = self.clone();
        out.pulses.durations.truncate(cycles);
        out.pulses.g_max.truncate(cycles);
        out
    }

    /// Instance whose evolution undoes this one: cycles in reverse order and
    /// every energy negated, so `U_rev(T) = U(T)^dag`.
    pub fn time_reversed(&self) -> Self {
        let mut pulses = self.pulses.clone();
        pulses.durations.reverse();
        pulses.g_max.reverse();
        pulses.g_max.iter_mut().for_each(|r| r.iter_mut().for_each(|g| *g = -*g));
        Self {
            n_sites: self.n_sites,
            delta: self.delta.iter().map(|d| -d).collect(),
            eta: self.eta.iter().map(|e| -e).collect(),
            pulses,
            seed: self.seed,
        }
    }
}

/// Sampling ranges for [`sample_instance`]. Frequencies in rad/s, times in
/// seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceConfig {
    /// Detunings are drawn uniformly from `[-delta_spread, +delta_spread]`.
    pub delta_spread: f64,
    pub g_max: (f64, f64),
    pub t_pulse: (f64, f64),
    pub cycles: usize,
    pub eta: f64,
    /// Independent peak coupling per bond instead of one per cycle.
    pub per_bond: bool,
    pub envelope: Envelope,
}

impl InstanceConfig {
    /// Detuning `+-5 MHz`, `g_max / 2 pi` in `[22.4, 38.4] MHz`, pulses of
    /// 42 to 72 ns, `eta / 2 pi = -200 MHz`.
    pub fn chaotic(cycles: usize) -> Self {
        Self {
            delta_spread: mhz(5.0),
            g_max: (mhz(22.4), mhz(38.4)),
            t_pulse: (ns(42.0), ns(72.0)),
            cycles,
            eta: default_eta(),
            per_bond: false,
            envelope: Envelope::SinSquared,
        }
    }

    pub fn with_disorder(mut self, spread: f64) -> Self {
        self.delta_spread = spread;
        self
    }

    pub fn with_pulses(mut self, t_pulse: (f64, f64), g_max: (f64, f64)) -> Self {
        self.t_pulse = t_pulse;
        self.g_max = g_max;
        self
    }
}

fn uniform(r: &mut crate::rng::Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        r.random_range(lo..hi)
    } else {
        lo
    }
}

/// Draws a reproducible instance: the same seed always yields the same
/// parameters.
pub fn sample_instance(n_sites: usize, config: &InstanceConfig, seed: u64) -> Result<InstanceParams> {
    if n_sites == 0 {
        return invalid("instance needs at least one site");
    }
    let (tlo, thi) = config.t_pulse;
    if !(tlo > 0.0) || thi < tlo {
        return invalid("pulse durations must be positive with lo <= hi");
    }
    let (glo, ghi) = config.g_max;
    if ghi < glo || config.delta_spread < 0.0 {
        return invalid("degenerate coupling or detuning range");
    }

    let mut r = rng(seed);
    let spread = config.delta_spread;
    let delta = (0..n_sites).map(|_| uniform(&mut r, -spread, spread)).collect();
    let eta = vec![config.eta; n_sites];
    let n_bonds = n_sites - 1;
    let mut durations = Vec::with_capacity(config.cycles);
    let mut g_max = Vec::with_capacity(config.cycles);
    for _ in 0..config.cycles {
        durations.push(uniform(&mut r, tlo, thi));
        if config.per_bond {
            g_max.push((0..n_bonds).map(|_| uniform(&mut r, glo, ghi)).collect());
        } else {
            g_max.push(vec![uniform(&mut r, glo, ghi); n_bonds]);
        }
    }
    let inst = InstanceParams {
        n_sites,
        delta,
        eta,
        pulses: PulseSchedule { durations, g_max, envelope: config.envelope },
        seed,
    };
    inst.validate()?;
    Ok(inst)
}

/// Hopping matrix elements of a basis, stored by target row.
///
/// Row `r` lists `(source, bond, amplitude)` for every basis state reachable
/// from `r` by one boson hopping across `bond` (in either direction).
#[derive(Clone, Debug)]
pub struct HoppingTable {
    offsets: Vec<usize>,
    sources: Vec<u32>,
    bonds: Vec<u32>,
    amps: Vec<f64>,
    n_bonds: usize,
}

impl HoppingTable {
    pub fn new(basis: &Basis) -> Self {
        let n = basis.n_sites();
        let n_bonds = n.saturating_sub(1);
        let mut offsets = Vec::with_capacity(basis.dim() + 1);
        let mut sources = Vec::new();
        let mut bonds = Vec::new();
        let mut amps = Vec::new();
        offsets.push(0);
        let mut scratch = vec![0u8; n];
        for target in basis.states() {
            let c = target.counts();
            for b in 0..n_bonds {
                let (ni, nj) = (c[b] as f64, c[b + 1] as f64);
                // target = a_b^dag a_{b+1} source
                if c[b] >= 1 {
                    scratch.copy_from_slice(c);
                    scratch[b] -= 1;
                    scratch[b + 1] += 1;
                    if let Some(src) = basis.index_of_counts(&scratch) {
                        sources.push(src as u32);
                        bonds.push(b as u32);
                        amps.push((ni * (nj + 1.0)).sqrt());
                    }
                }
                // target = a_{b+1}^dag a_b source
                if c[b + 1] >= 1 {
                    scratch.copy_from_slice(c);
                    scratch[b] += 1;
                    scratch[b + 1] -= 1;
                    if let Some(src) = basis.index_of_counts(&scratch) {
                        sources.push(src as u32);
                        bonds.push(b as u32);
                        amps.push(((ni + 1.0) * nj).sqrt());
                    }
                }
            }
            offsets.push(sources.len());
        }
        Self { offsets, sources, bonds, amps, n_bonds }
    }

    pub fn n_bonds(&self) -> usize {
        self.n_bonds
    }

    pub fn nnz(&self) -> usize {
        self.sources.len()
    }

    /// `(source, bond, amplitude)` entries of one target row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let (a, b) = (self.offsets[r], self.offsets[r + 1]);
        (a..b).map(move |k| (self.sources[k] as usize, self.bonds[k] as usize, self.amps[k]))
    }
}

/// Complex amplitudes over a basis.
#[derive(Clone, Debug)]
pub struct StateVector {
    basis: Arc<Basis>,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub fn new(basis: Arc<Basis>, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::BasisMismatch(format!(
                "{} amplitudes for a basis of dimension {}",
                amplitudes.len(),
                basis.dim()
            )));
        }
        Ok(Self { basis, amplitudes })
    }

    /// The Fock state `|occupation>`.
    pub fn fock(basis: Arc<Basis>, occupation: &OccupationVector) -> Result<Self> {
        let k = basis.index_of(occupation).ok_or_else(|| {
            Error::BasisMismatch(format!("state {occupation} is not in the basis"))
        })?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); basis.dim()];
        amplitudes[k] = Complex64::new(1.0, 0.0);
        Ok(Self { basis, amplitudes })
    }

    pub fn zeros(basis: Arc<Basis>) -> Self {
        let amplitudes = vec![Complex64::new(0.0, 0.0); basis.dim()];
        Self { basis, amplitudes }
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        crate::numeric::norm(&self.amplitudes)
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }
}

/// Bose-Hubbard Hamiltonian of one instance bound to one basis.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    basis: Arc<Basis>,
    hopping: Arc<HoppingTable>,
    diagonal: Vec<f64>,
    pulses: PulseSchedule,
}

impl Hamiltonian {
    pub fn new(params: &InstanceParams, basis: Arc<Basis>) -> Result<Self> {
        let hopping = Arc::new(HoppingTable::new(&basis));
        Self::with_hopping(params, basis, hopping)
    }

    /// Reuses a hopping table already built for `basis`.
    pub fn with_hopping(params: &InstanceParams, basis: Arc<Basis>, hopping: Arc<HoppingTable>) -> Result<Self> {
        params.validate()?;
        if params.n_sites != basis.n_sites() {
            return Err(Error::BasisMismatch(format!(
                "instance has {} sites, basis has {}",
                params.n_sites,
                basis.n_sites()
            )));
        }
        let diagonal = basis
            .states()
            .iter()
            .map(|s| diagonal_energy(params, s.counts()))
            .collect();
        Ok(Self { basis, hopping, diagonal, pulses: params.pulses.clone() })
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn hopping(&self) -> &HoppingTable {
        &self.hopping
    }

    pub fn pulses(&self) -> &PulseSchedule {
        &self.pulses
    }

    /// `out = H(t) psi`.
    pub fn apply_into(&self, t: f64, psi: &[Complex64], out: &mut [Complex64]) {
        let mut g = vec![0.0; self.hopping.n_bonds()];
        self.pulses.couplings_at(t, &mut g);
        self.apply_with_couplings(&g, psi, out);
    }

    /// `out = H psi` with explicit bond couplings.
    pub fn apply_with_couplings(&self, g: &[f64], psi: &[Complex64], out: &mut [Complex64]) {
        let row = |r: usize| -> Complex64 {
            let mut acc = psi[r] * self.diagonal[r];
            for (src, bond, amp) in self.hopping.row(r) {
                acc += psi[src] * (g[bond] * amp);
            }
            acc
        };
        if out.len() >= PARALLEL_ROWS {
            out.par_iter_mut().enumerate().for_each(|(r, o)| *o = row(r));
        } else {
            out.iter_mut().enumerate().for_each(|(r, o)| *o = row(r));
        }
    }
}

/// `sum_i delta_i n_i + (eta_i / 2) n_i (n_i - 1)`.
pub fn diagonal_energy(params: &InstanceParams, counts: &[u8]) -> f64 {
    counts
        .iter()
        .zip(params.delta.iter().zip(&params.eta))
        .map(|(&n, (&d, &e))| {
            let n = n as f64;
            d * n + 0.5 * e * n * (n - 1.0)
        })
        .sum()
}

/// `H(t) |psi>` for a single application.
pub fn apply_hamiltonian(params: &InstanceParams, t: f64, psi: &StateVector) -> Result<StateVector> {
    let h = Hamiltonian::new(params, psi.basis().clone())?;
    let mut out = vec![Complex64::new(0.0, 0.0); psi.amplitudes().len()];
    h.apply_into(t, psi.amplitudes(), &mut out);
    StateVector::new(psi.basis().clone(), out)
}

/// On-disk instance description. Frequencies are ordinary frequencies in
/// MHz (multiplied by `2 pi` on load), pulse lengths in ns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    #[serde(rename = "N")]
    pub n_sites: usize,
    pub n_exc: usize,
    pub scheme: TruncationScheme,
    #[serde(rename = "delta_MHz")]
    pub delta_mhz: Vec<f64>,
    #[serde(rename = "eta_MHz")]
    pub eta_mhz: Vec<f64>,
    pub cycles: usize,
    #[serde(rename = "T_pulse_ns")]
    pub t_pulse_ns: Vec<f64>,
    #[serde(rename = "g_max_MHz")]
    pub g_max_mhz: PeakCouplings,
    #[serde(default)]
    pub envelope: Envelope,
    pub seed: u64,
    /// Initial Fock state; defaults to the alternating half-filled pattern.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<OccupationVector>,
}

/// One peak coupling per cycle, or one per cycle and bond.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PeakCouplings {
    PerCycle(Vec<f64>),
    PerBond(Vec<Vec<f64>>),
}

impl InstanceFile {
    pub fn from_instance(params: &InstanceParams, n_exc: usize, scheme: TruncationScheme) -> Self {
        let shared = params.pulses.g_max.iter().all(|r| r.windows(2).all(|w| w[0] == w[1]));
        let g_max_mhz = if shared && params.n_sites > 1 {
            PeakCouplings::PerCycle(params.pulses.g_max.iter().map(|r| to_mhz(r[0])).collect())
        } else {
            PeakCouplings::PerBond(
                params.pulses.g_max.iter().map(|r| r.iter().map(|&g| to_mhz(g)).collect()).collect(),
            )
        };
        Self {
            n_sites: params.n_sites,
            n_exc,
            scheme,
            delta_mhz: params.delta.iter().map(|&d| to_mhz(d)).collect(),
            eta_mhz: params.eta.iter().map(|&e| to_mhz(e)).collect(),
            cycles: params.pulses.cycles(),
            t_pulse_ns: params.pulses.durations.iter().map(|&t| t * 1e9).collect(),
            g_max_mhz,
            envelope: params.pulses.envelope,
            seed: params.seed,
            initial: None,
        }
    }

    pub fn to_instance(&self) -> Result<InstanceParams> {
        if self.t_pulse_ns.len() != self.cycles {
            return invalid("T_pulse_ns needs one entry per cycle");
        }
        if self.t_pulse_ns.iter().any(|&t| t < 0.0) {
            return invalid("negative pulse duration");
        }
        let n_bonds = self.n_sites.saturating_sub(1);
        let g_max = match &self.g_max_mhz {
            PeakCouplings::PerCycle(v) => {
                if v.len() != self.cycles {
                    return invalid("g_max_MHz needs one entry per cycle");
                }
                v.iter().map(|&g| vec![mhz(g); n_bonds]).collect()
            }
            PeakCouplings::PerBond(v) => v.iter().map(|r| r.iter().map(|&g| mhz(g)).collect()).collect(),
        };
        let params = InstanceParams {
            n_sites: self.n_sites,
            delta: self.delta_mhz.iter().map(|&d| mhz(d)).collect(),
            eta: self.eta_mhz.iter().map(|&e| mhz(e)).collect(),
            pulses: PulseSchedule {
                durations: self.t_pulse_ns.iter().map(|&t| ns(t)).collect(),
                g_max,
                envelope: self.envelope,
            },
            seed: self.seed,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn basis(&self) -> Result<Arc<Basis>> {
        Ok(Arc::new(enumerate_basis(self.n_sites, self.n_exc, self.scheme)?))
    }

    pub fn initial_state(&self) -> OccupationVector {
        self.initial.clone().unwrap_or_else(|| OccupationVector::alternating(self.n_sites))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock_basis::half_filling;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn constant_instance(n: usize, delta: Vec<f64>, eta: f64, g: f64, t: f64) -> InstanceParams {
        InstanceParams {
            n_sites: n,
            delta,
            eta: vec![eta; n],
            pulses: PulseSchedule::shared(vec![t], &[g], n - 1, Envelope::Square),
            seed: 0,
        }
    }

    /// Dense oracle: act with `a_j^dag a_i` on each basis vector directly and
    /// locate the result by linear search.
    fn dense_oracle(params: &InstanceParams, basis: &Basis, t: f64) -> Vec<Vec<Complex64>> {
        let d = basis.dim();
        let ceiling = basis.scheme();
        let mut m = vec![vec![c(0.0, 0.0); d]; d];
        let find = |v: &[u8]| basis.states().iter().position(|s| s.counts() == v);
        let n = params.n_sites;
        let mut g = vec![0.0; n - 1];
        params.pulses.couplings_at(t, &mut g);
        for (col, s) in basis.states().iter().enumerate() {
            let v = s.counts();
            let mut e = 0.0;
            for i in 0..n {
                let k = v[i] as f64;
                e += params.delta[i] * k + params.eta[i] / 2.0 * k * (k - 1.0);
            }
            m[col][col] += c(e, 0.0);
            for i in 0..n - 1 {
                for (from, to) in [(i, i + 1), (i + 1, i)] {
                    if v[from] == 0 {
                        continue;
                    }
                    let mut w = v.to_vec();
                    let amp = (w[from] as f64).sqrt() * ((w[to] + 1) as f64).sqrt();
                    w[from] -= 1;
                    w[to] += 1;
                    if !ceiling.admits(&w) {
                        continue;
                    }
                    if let Some(row) = find(&w) {
                        m[row][col] += c(g[i] * amp, 0.0);
                    }
                }
            }
        }
        m
    }

    fn random_state(d: usize, seed: u64) -> Vec<Complex64> {
        let mut r = rng(seed);
        (0..d).map(|_| c(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn envelope_endpoints_and_peak() {
        let (t, g) = (ns(30.0), mhz(25.0));
        assert_eq!(coupling_envelope(0.0, t, g), 0.0);
        assert!(coupling_envelope(t, t, g).abs() < 1e-9 * g);
        assert!((coupling_envelope(t / 2.0, t, g) - g).abs() < 1e-9 * g);
    }

    #[test]
    fn envelope_integral_is_half_area() {
        // composite Simpson with 2000 panels
        let (t, g) = (ns(47.0), mhz(31.0));
        let n = 2000;
        let h = t / n as f64;
        let mut s = coupling_envelope(0.0, t, g) + coupling_envelope(t, t, g);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * coupling_envelope(k as f64 * h, t, g);
        }
        let integral = s * h / 3.0;
        assert!((integral - g * t / 2.0).abs() < 1e-10 * g * t);
    }

    #[test]
    fn trapezoid_and_square_shapes() {
        let e = Envelope::Trapezoid { ramp_fraction: 0.25 };
        assert_eq!(e.value(0.0, 1.0, 2.0), 0.0);
        assert!((e.value(0.125, 1.0, 2.0) - 1.0).abs() < 1e-12);
        assert_eq!(e.value(0.5, 1.0, 2.0), 2.0);
        assert_eq!(Envelope::Square.value(0.3, 1.0, 2.0), 2.0);
    }

    #[test]
    fn sampling_is_reproducible() {
        let cfg = InstanceConfig::chaotic(5);
        let a = sample_instance(9, &cfg, 42).unwrap();
        let b = sample_instance(9, &cfg, 42).unwrap();
        assert_eq!(a, b);
        for &d in &a.delta {
            assert!(d.abs() <= mhz(5.0));
        }
        for (&t, row) in a.pulses.durations.iter().zip(&a.pulses.g_max) {
            assert!(t >= ns(42.0) && t <= ns(72.0));
            assert!(row.iter().all(|&g| g == row[0] && g >= mhz(22.4) && g <= mhz(38.4)));
        }
    }

    #[test]
    fn different_seeds_differ() {
        let cfg = InstanceConfig::chaotic(3);
        let differing = (0..100u64)
            .filter(|&s| {
                let a = sample_instance(6, &cfg, 2 * s).unwrap();
                let b = sample_instance(6, &cfg, 2 * s + 1).unwrap();
                a.delta != b.delta
            })
            .count();
        assert_eq!(differing, 100);
    }

    #[test]
    fn zero_width_ranges_give_constants() {
        let cfg = InstanceConfig {
            delta_spread: 0.0,
            g_max: (mhz(20.0), mhz(20.0)),
            t_pulse: (ns(30.0), ns(30.0)),
            cycles: 4,
            eta: default_eta(),
            per_bond: true,
            envelope: Envelope::SinSquared,
        };
        let a = sample_instance(5, &cfg, 3).unwrap();
        assert!(a.delta.iter().all(|&d| d == 0.0));
        assert!(a.pulses.durations.iter().all(|&t| t == ns(30.0)));
        assert!(a.pulses.g_max.iter().flatten().all(|&g| g == mhz(20.0)));
    }

    #[test]
    fn rejects_negative_durations() {
        let mut cfg = InstanceConfig::chaotic(2);
        cfg.t_pulse = (-1e-9, 1e-9);
        assert!(sample_instance(4, &cfg, 0).is_err());
    }

    #[test]
    fn decoupled_hamiltonian_is_diagonal() {
        let basis = Arc::new(enumerate_basis(4, 2, TruncationScheme::MaxLevel(2)).unwrap());
        let p = sample_instance(4, &InstanceConfig::chaotic(2), 9).unwrap().decoupled();
        for (k, s) in basis.states().iter().enumerate() {
            let psi = StateVector::fock(basis.clone(), s).unwrap();
            let out = apply_hamiltonian(&p, ns(10.0), &psi).unwrap();
            let expect: f64 = s
                .counts()
                .iter()
                .enumerate()
                .map(|(i, &n)| {
                    let n = n as f64;
                    p.delta[i] * n + p.eta[i] / 2.0 * n * (n - 1.0)
                })
                .sum();
            for (j, a) in out.amplitudes().iter().enumerate() {
                if j == k {
                    assert!((a - c(expect, 0.0)).norm() < 1e-6);
                } else {
                    assert_eq!(*a, c(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn two_site_swap_is_sigma_x() {
        let basis = Arc::new(enumerate_basis(2, 1, TruncationScheme::QUBIT).unwrap());
        let g = mhz(10.0);
        let p = constant_instance(2, vec![0.0, 0.0], default_eta(), g, ns(50.0));
        let h = Hamiltonian::new(&p, basis.clone()).unwrap();
        // basis order: 01, 10
        let mut out = vec![c(0.0, 0.0); 2];
        h.apply_into(ns(1.0), &[c(1.0, 0.0), c(0.0, 0.0)], &mut out);
        assert_eq!(out, vec![c(0.0, 0.0), c(g, 0.0)]);
        h.apply_into(ns(1.0), &[c(0.0, 0.0), c(1.0, 0.0)], &mut out);
        assert_eq!(out, vec![c(g, 0.0), c(0.0, 0.0)]);
    }

    #[test]
    fn matches_dense_oracle() {
        for (n, k, scheme) in [
            (4, 2, TruncationScheme::MaxLevel(2)),
            (5, 2, TruncationScheme::MaxLevel(3)),
            (6, 3, TruncationScheme::Bands { doublons: 1, triplons: 0 }),
            (5, 3, TruncationScheme::Bands { doublons: 2, triplons: 1 }),
        ] {
            let basis = Arc::new(enumerate_basis(n, k, scheme).unwrap());
            let mut cfg = InstanceConfig::chaotic(3);
            cfg.per_bond = true;
            let p = sample_instance(n, &cfg, 11).unwrap();
            let t = ns(57.0);
            let dense = dense_oracle(&p, &basis, t);
            let psi = random_state(basis.dim(), 5);
            let mut out = vec![c(0.0, 0.0); basis.dim()];
            Hamiltonian::new(&p, basis.clone()).unwrap().apply_into(t, &psi, &mut out);
            let scale = mhz(1000.0);
            for r in 0..basis.dim() {
                let e: Complex64 = dense[r].iter().zip(&psi).map(|(m, x)| m * x).sum();
                assert!((e - out[r]).norm() / scale < 1e-12, "{scheme} row {r}");
            }
        }
    }

    #[test]
    fn conserves_excitation_number() {
        let basis = Arc::new(enumerate_basis(6, 3, TruncationScheme::MaxLevel(3)).unwrap());
        let table = HoppingTable::new(&basis);
        for r in 0..basis.dim() {
            for (src, _, _) in table.row(r) {
                assert_eq!(basis.state(src).total(), basis.state(r).total());
            }
        }
    }

    #[test]
    fn truncation_consistency_between_ceilings() {
        let p = sample_instance(5, &InstanceConfig::chaotic(2), 4).unwrap();
        let t = ns(20.0);
        let small = Arc::new(enumerate_basis(5, 2, TruncationScheme::MaxLevel(2)).unwrap());
        let big = Arc::new(enumerate_basis(5, 2, TruncationScheme::MaxLevel(3)).unwrap());
        let hs = Hamiltonian::new(&p, small.clone()).unwrap();
        let hb = Hamiltonian::new(&p, big.clone()).unwrap();
        // every hard-core state only reaches states with occupations <= 2
        for s in small.states().iter().filter(|s| s.is_hard_core()) {
            let ps = StateVector::fock(small.clone(), s).unwrap();
            let pb = StateVector::fock(big.clone(), s).unwrap();
            let mut os = vec![c(0.0, 0.0); small.dim()];
            let mut ob = vec![c(0.0, 0.0); big.dim()];
            hs.apply_into(t, ps.amplitudes(), &mut os);
            hb.apply_into(t, pb.amplitudes(), &mut ob);
            for (kb, sb) in big.states().iter().enumerate() {
                let ks = small.index_of(sb);
                let vs = ks.map_or(c(0.0, 0.0), |k| os[k]);
                assert!((vs - ob[kb]).norm() < 1e-3, "{s} -> {sb}");
            }
        }
    }

    #[test]
    fn basis_mismatch_is_an_error() {
        let basis = Arc::new(enumerate_basis(4, 2, TruncationScheme::QUBIT).unwrap());
        let p = sample_instance(5, &InstanceConfig::chaotic(1), 0).unwrap();
        let psi = StateVector::fock(basis, &OccupationVector::alternating(4)).unwrap();
        assert!(matches!(apply_hamiltonian(&p, 0.0, &psi), Err(Error::BasisMismatch(_))));
    }

    #[test]
    fn instance_file_round_trip() {
        let p = sample_instance(6, &InstanceConfig::chaotic(3), 8).unwrap();
        let f = InstanceFile::from_instance(&p, half_filling(6), TruncationScheme::MaxLevel(2));
        let text = serde_json::to_string(&f).unwrap();
        assert!(text.contains("\"delta_MHz\"") && text.contains("\"T_pulse_ns\""));
        let back: InstanceFile = serde_json::from_str(&text).unwrap();
        let q = back.to_instance().unwrap();
        for (a, b) in p.delta.iter().zip(&q.delta) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(back.scheme, TruncationScheme::MaxLevel(2));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn hermitian_and_linear(seed in 0u64..1000, t_frac in 0.0f64..1.0) {
            let basis = Arc::new(enumerate_basis(6, 3, TruncationScheme::MaxLevel(2)).unwrap());
            let p = sample_instance(6, &InstanceConfig::chaotic(2), seed).unwrap();
            let h = Hamiltonian::new(&p, basis.clone()).unwrap();
            let t = t_frac * p.total_time();
            let d = basis.dim();
            let phi = random_state(d, seed + 1);
            let psi = random_state(d, seed + 2);
            let mut hphi = vec![c(0.0, 0.0); d];
            let mut hpsi = vec![c(0.0, 0.0); d];
            h.apply_into(t, &phi, &mut hphi);
            h.apply_into(t, &psi, &mut hpsi);
            let scale = mhz(1000.0) * d as f64;
            let lhs: Complex64 = phi.iter().zip(&hpsi).map(|(a, b)| a.conj() * b).sum();
            let rhs: Complex64 = psi.iter().zip(&hphi).map(|(a, b)| a.conj() * b).sum();
            prop_assert!((lhs - rhs.conj()).norm() / scale < 1e-12);

            let (a, b) = (c(0.3, -1.2), c(-0.7, 0.4));
            let mix: Vec<Complex64> = phi.iter().zip(&psi).map(|(x, y)| a * x + b * y).collect();
            let mut hmix = vec![c(0.0, 0.0); d];
            h.apply_into(t, &mix, &mut hmix);
            for r in 0..d {
                prop_assert!((hmix[r] - (a * hphi[r] + b * hpsi[r])).norm() / scale < 1e-12);
            }
        }
    }
}
