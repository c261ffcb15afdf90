//! Circuit model of a gmon qubit: flux biases to transition frequencies.
//!
//! The qubit is a capacitor in series with a geometric inductance and a
//! SQUID-tunable junction. In units of the small-oscillation frequency
//! `w0 = 1/sqrt(C (Lg + Lj))` the Hamiltonian depends only on
//! `beta = Lg/Lj` and `lambda = Z0/(R_k/pi)`:
//!
//! `H/hbar w0 = p^2/4 + (1+beta)/(8 lambda) [1 - cos phi_j + (beta/2) sin^2 phi_j]`
//!
//! with `phi = 2 sqrt(lambda) x`, `x = a + a^dag`, `p = i(a^dag - a)` and
//! `phi_j(phi)` the junction phase. The potential is represented in the
//! oscillator basis by Gauss quadrature on a larger position grid, then
//! truncated to `n_ho` levels and diagonalised.
//!
//! Device fields are SI: farads, henries, rad/s. Fluxes are in units of the
//! flux quantum.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fit::{levenberg_marquardt, LmOptions};

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// von Klitzing constant h/e^2.
pub const KLITZING: f64 = PLANCK / (ELEMENTARY_CHARGE * ELEMENTARY_CHARGE);

pub const DEFAULT_LEVELS: usize = 20;
pub const MAX_LEVELS: usize = 60;
/// Extra quadrature nodes beyond the kept levels.
const QUADRATURE_MARGIN: usize = 80;
const SERIES_TOLERANCE: f64 = 1e-12;
const SERIES_MAX_TERMS: usize = 20_000;

fn two_pi() -> f64 {
    2.0 * PI
}

/// Bessel function of the first kind `J_n(x)` for integer order, from the
/// trapezoid rule on `(1/2pi) int cos(n t - x sin t) dt`. The integrand is
/// periodic, so the rule converges geometrically once the node count exceeds
/// `n + |x|`.
pub fn bessel_j(n: u32, x: f64) -> f64 {
    let k = 2 * ((n as f64 + x.abs()).ceil() as usize / 2) + 64;
    let h = two_pi() / k as f64;
    let nf = n as f64;
    let s: f64 = (0..k)
        .map(|j| {
            let t = j as f64 * h;
            (nf * t - x * t.sin()).cos()
        })
        .sum();
    s / k as f64
}

/// Fourier coefficients of the junction phase as a function of the external
/// phase, `phi_j = phi + sum_n c_n sin(n phi)`. This inverts
/// `phi = phi_j + beta sin(phi_j)`.
#[derive(Debug, Clone)]
pub struct JunctionPhaseSeries {
    coeffs: Vec<f64>,
}

impl JunctionPhaseSeries {
    pub fn new(beta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::NonConvergence(format!(
                "junction phase series needs 0 <= beta < 1, got {beta}"
            )));
        }
        let mut coeffs = Vec::new();
        if beta == 0.0 {
            return Ok(Self { coeffs });
        }
        for n in 1..=SERIES_MAX_TERMS {
            let c = 2.0 * bessel_j(n as u32, beta * n as f64) / n as f64;
            let c = if n % 2 == 1 { -c } else { c };
            coeffs.push(c);
            if c.abs() < SERIES_TOLERANCE {
                return Ok(Self { coeffs });
            }
        }
        Err(Error::NonConvergence(format!(
            "junction phase series at beta = {beta} needs more than {SERIES_MAX_TERMS} terms"
        )))
    }

    pub fn n_terms(&self) -> usize {
        self.coeffs.len()
    }

    pub fn eval(&self, phi: f64) -> f64 {
        phi + self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * ((k + 1) as f64 * phi).sin())
            .sum::<f64>()
    }
}

/// Junction phase for external phase `phi` and inductance ratio `beta`.
pub fn junction_phase(phi: f64, beta: f64) -> Result<f64> {
    Ok(JunctionPhaseSeries::new(beta)?.eval(phi))
}

/// Position eigenbasis of the truncated oscillator, shared by all
/// diagonalisations with the same number of kept levels.
#[derive(Debug)]
struct Quadrature {
    nodes: Vec<f64>,
    /// `vectors[(m, k)]`: amplitude of oscillator level `m` in node state `k`.
    vectors: DMatrix<f64>,
}

impl Quadrature {
    fn build(n_levels: usize) -> Self {
        let n = n_levels + QUADRATURE_MARGIN;
        let mut x = DMatrix::zeros(n, n);
        for k in 0..n - 1 {
            let v = ((k + 1) as f64).sqrt();
            x[(k, k + 1)] = v;
            x[(k + 1, k)] = v;
        }
        let eig = SymmetricEigen::new(x);
        let vectors = eig.eigenvectors.rows(0, n_levels).into_owned();
        Self { nodes: eig.eigenvalues.as_slice().to_vec(), vectors }
    }

    fn cached(n_levels: usize) -> Arc<Quadrature> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Quadrature>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
        map.entry(n_levels)
            .or_insert_with(|| Arc::new(Quadrature::build(n_levels)))
            .clone()
    }
}

/// Dimensionless transition frequencies `(w10/w0, w21/w0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedTransitions {
    pub w10: f64,
    pub w21: f64,
}

/// Exact diagonalisation in a truncated oscillator basis.
#[derive(Debug, Clone)]
pub struct Diagonalizer {
    n_levels: usize,
    quad: Arc<Quadrature>,
}

impl Default for Diagonalizer {
    fn default() -> Self {
        Self::new(DEFAULT_LEVELS).expect("default truncation is valid")
    }
}

impl Diagonalizer {
    pub fn new(n_levels: usize) -> Result<Self> {
        if n_levels > MAX_LEVELS {
            return invalid(format!(
                "{n_levels} oscillator levels exceeds {MAX_LEVELS}: states leak into neighbouring wells"
            ));
        }
        if n_levels < 3 {
            return invalid("at least 3 oscillator levels are needed for w21");
        }
        Ok(Self { n_levels, quad: Quadrature::cached(n_levels) })
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn transitions(&self, beta: f64, lambda: f64) -> Result<ReducedTransitions> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return invalid(format!("lambda must be >= 0, got {lambda}"));
        }
        if lambda == 0.0 {
            return Ok(ReducedTransitions { w10: 1.0, w21: 1.0 });
        }
        let series = JunctionPhaseSeries::new(beta)?;
        let scale = (1.0 + beta) / (8.0 * lambda);
        let phi_zpf = 2.0 * lambda.sqrt();
        // Anharmonic remainder at each node, harmonic part handled exactly.
        let rem: Vec<f64> = self
            .quad
            .nodes
            .iter()
            .map(|&x| {
                let pj = series.eval(phi_zpf * x);
                let half = (0.5 * pj).sin();
                let s = pj.sin();
                scale * (2.0 * half * half + 0.5 * beta * s * s) - 0.25 * x * x
            })
            .collect();

        let n = self.n_levels;
        let v = &self.quad.vectors;
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let e: f64 = rem.iter().enumerate().map(|(k, r)| v[(i, k)] * r * v[(j, k)]).sum();
                h[(i, j)] = e;
                h[(j, i)] = e;
            }
            h[(i, i)] += i as f64 + 0.5;
        }
        let mut e = SymmetricEigen::new(h).eigenvalues.as_slice().to_vec();
        e.sort_by(f64::total_cmp);
        Ok(ReducedTransitions { w10: e[1] - e[0], w21: e[2] - e[1] })
    }
}

/// Coefficients of `w/w0 = 1 + sum C[n][m] beta^n lambda^(m+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolynomialCoefficients {
    pub a: [[f64; 3]; 4],
    pub b: [[f64; 3]; 4],
}

impl PolynomialCoefficients {
    pub const PUBLISHED: Self = Self {
        a: [
            [-0.9989185, -1.01547902, -3.39493789],
            [2.92743183, -1.15831188, 0.0],
            [-4.93953913, 8.17006907, 0.0],
            [4.03181772, 0.0, 0.0],
        ],
        b: [
            [-1.99707501, -3.25782090, -18.0220389],
            [5.81558214, -1.77830584, 0.0],
            [-9.55174679, 22.6985133, 0.0],
            [7.16401532, 0.0, 0.0],
        ],
    };

    /// `(n, m)` index pairs of the monomials kept in the expansion.
    pub const TERMS: [(usize, usize); 8] =
        [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 0), (2, 1), (3, 0)];

    fn eval(c: &[[f64; 3]; 4], beta: f64, lambda: f64) -> f64 {
        let mut s = 0.0;
        for (n, row) in c.iter().enumerate() {
            for (m, v) in row.iter().enumerate() {
                s += v * beta.powi(n as i32) * lambda.powi(m as i32 + 1);
            }
        }
        1.0 + s
    }

    pub fn reduced(&self, beta: f64, lambda: f64) -> ReducedTransitions {
        ReducedTransitions { w10: Self::eval(&self.a, beta, lambda), w21: Self::eval(&self.b, beta, lambda) }
    }
}

pub const LAMBDA_MAX: f64 = 0.04;
pub const BETA_MAX: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbativeSpectrum {
    pub omega10: f64,
    pub omega21: f64,
    /// Outside `0 <= lambda <= 0.04, 0 <= beta <= 0.25`.
    pub extrapolated: bool,
}

pub fn perturbative_spectrum(
    omega0: f64,
    beta: f64,
    lambda: f64,
    coeffs: &PolynomialCoefficients,
) -> PerturbativeSpectrum {
    let r = coeffs.reduced(beta, lambda);
    PerturbativeSpectrum {
        omega10: omega0 * r.w10,
        omega21: omega0 * r.w21,
        extrapolated: !((0.0..=LAMBDA_MAX).contains(&lambda) && (0.0..=BETA_MAX).contains(&beta)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_beta: usize,
    pub n_lambda: usize,
    pub beta_max: f64,
    pub lambda_max: f64,
    pub levels: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { n_beta: 100, n_lambda: 100, beta_max: BETA_MAX, lambda_max: LAMBDA_MAX, levels: DEFAULT_LEVELS }
    }
}

impl GridSpec {
    pub fn points(&self) -> Vec<(f64, f64)> {
        let axis = |n: usize, max: f64| -> Vec<f64> {
            if n == 1 {
                vec![0.0]
            } else {
                (0..n).map(|k| max * k as f64 / (n - 1) as f64).collect()
            }
        };
        let betas = axis(self.n_beta, self.beta_max);
        let lambdas = axis(self.n_lambda, self.lambda_max);
        betas.iter().flat_map(|&b| lambdas.iter().map(move |&l| (b, l))).collect()
    }
}

/// Exact transitions over a grid, evaluated in parallel.
pub fn exact_grid(grid: &GridSpec) -> Result<Vec<((f64, f64), ReducedTransitions)>> {
    let diag = Diagonalizer::new(grid.levels)?;
    grid.points()
        .into_par_iter()
        .map(|(b, l)| diag.transitions(b, l).map(|t| ((b, l), t)))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolynomialFit {
    pub coeffs: PolynomialCoefficients,
    /// Largest `|fit - exact|` over the grid for a transmon whose `w10` is
    /// 5 GHz, in Hz, for the 1-0 and 2-1 transitions.
    pub max_deviation_hz: (f64, f64),
    pub rms_deviation_hz: (f64, f64),
    pub n_points: usize,
}

fn deviation_at_5ghz(fit: f64, exact: f64, w10: f64) -> f64 {
    // w0 chosen so that w10 = 5 GHz at this grid point.
    5e9 * (fit - exact).abs() / w10
}

/// Deviation statistics of `coeffs` against exact diagonalisation on `grid`.
pub fn polynomial_deviation(
    coeffs: &PolynomialCoefficients,
    exact: &[((f64, f64), ReducedTransitions)],
) -> ((f64, f64), (f64, f64)) {
    let mut max = (0.0f64, 0.0f64);
    let mut ss = (0.0, 0.0);
    for &((b, l), t) in exact {
        let r = coeffs.reduced(b, l);
        let d10 = deviation_at_5ghz(r.w10, t.w10, t.w10);
        let d21 = deviation_at_5ghz(r.w21, t.w21, t.w10);
        max = (max.0.max(d10), max.1.max(d21));
        ss = (ss.0 + d10 * d10, ss.1 + d21 * d21);
    }
    let n = exact.len().max(1) as f64;
    (max, ((ss.0 / n).sqrt(), (ss.1 / n).sqrt()))
}

/// Least-squares refit of the expansion on the published sparsity pattern.
pub fn fit_polynomial_coefficients(grid: &GridSpec) -> Result<PolynomialFit> {
    let exact = exact_grid(grid)?;
    let terms = PolynomialCoefficients::TERMS;
    let design = DMatrix::from_fn(exact.len(), terms.len(), |i, k| {
        let ((b, l), _) = exact[i];
        let (n, m) = terms[k];
        b.powi(n as i32) * l.powi(m as i32 + 1)
    });
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if exact.len() < terms.len() || !(smin > 1e-12 * smax) {
        return Err(Error::Degenerate(format!(
            "grid of {} points does not determine {} coefficients",
            exact.len(),
            terms.len()
        )));
    }
    let solve = |rhs: Vec<f64>| -> Result<Vec<f64>> {
        let y = nalgebra::DVector::from_vec(rhs);
        svd.solve(&y, 1e-14 * smax)
            .map(|c| c.as_slice().to_vec())
            .map_err(|e| Error::Singular(e.to_string()))
    };
    let ca = solve(exact.iter().map(|(_, t)| t.w10 - 1.0).collect())?;
    let cb = solve(exact.iter().map(|(_, t)| t.w21 - 1.0).collect())?;
    let mut coeffs = PolynomialCoefficients { a: [[0.0; 3]; 4], b: [[0.0; 3]; 4] };
    for (k, &(n, m)) in terms.iter().enumerate() {
        coeffs.a[n][m] = ca[k];
        coeffs.b[n][m] = cb[k];
    }
    let (max, rms) = polynomial_deviation(&coeffs, &exact);
    Ok(PolynomialFit { coeffs, max_deviation_hz: max, rms_deviation_hz: rms, n_points: exact.len() })
}

/// One qubit together with the coupler on its right, as in the device table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmonCircuitParams {
    /// Farads.
    pub c: f64,
    /// Junction inductance at zero SQUID flux, henries.
    pub l_j: f64,
    /// Geometric inductance, henries.
    pub l_g: f64,
    /// Qubit-resonator coupling, rad/s.
    pub g_r: f64,
    /// Readout resonator, rad/s.
    pub omega_r: f64,
    /// `M^2/L_c` to the qubit on the coupler's left (this qubit), henries.
    pub m0_left: f64,
    /// `M^2/L_c` to the neighbour on the coupler's right, henries.
    pub m0_right: f64,
    pub beta_c0: f64,
    /// Unbiased coupler mode, rad/s.
    pub omega_c0: f64,
    pub two_photon_factor: f64,
    /// Flux quanta per full-scale DAC unit.
    pub dac_to_flux: f64,
    /// Flux quanta.
    pub flux_offset: f64,
}

/// `(C fF, Lj nH, Lg nH, g_r/2pi MHz)` per qubit.
pub const QUBIT_TABLE: [(f64, f64, f64, f64); 9] = [
    (86.2, 6.46, 0.96, 112.0),
    (85.9, 6.26, 0.98, 106.0),
    (87.7, 6.25, 0.86, 135.0),
    (86.5, 6.47, 0.92, 128.0),
    (83.9, 6.26, 1.06, 106.0),
    (85.6, 6.31, 0.98, 114.0),
    (85.9, 6.45, 0.95, 113.0),
    (86.4, 6.33, 0.94, 117.0),
    (87.2, 6.41, 0.86, 126.0),
];

/// `(M0 left pH, M0 right pH, beta_C0, w_C0/2pi GHz)` per coupler.
pub const COUPLER_TABLE: [(f64, f64, f64, f64); 8] = [
    (43.6, 40.2, 0.664, 14.6),
    (42.6, 41.1, 0.660, 14.6),
    (42.3, 41.6, 0.665, 14.8),
    (43.2, 41.5, 0.661, 14.7),
    (46.2, 40.9, 0.657, 15.0),
    (44.0, 41.8, 0.664, 14.8),
    (43.3, 39.5, 0.671, 14.5),
    (43.2, 37.9, 0.663, 14.8),
];

pub const DEFAULT_RESONATOR_GHZ: f64 = 6.8;
pub const DEFAULT_TWO_PHOTON_FACTOR: f64 = 0.959;
pub const DEFAULT_QUBIT_DAC_TO_FLUX: f64 = 2.04;

impl GmonCircuitParams {
    /// Qubit `q` (1-based, 1..=9) from the device table, paired with the
    /// coupler to its right, or for the last qubit the coupler to its left
    /// seen from the other side.
    pub fn device(q: usize) -> Result<Self> {
        if !(1..=9).contains(&q) {
            return invalid(format!("device qubit index {q} outside 1..=9"));
        }
        let (c, lj, lg, gr) = QUBIT_TABLE[q - 1];
        let (cp, mirrored) = if q <= 8 { (COUPLER_TABLE[q - 1], false) } else { (COUPLER_TABLE[7], true) };
        let p = Self {
            c: c * 1e-15,
            l_j: lj * 1e-9,
            l_g: lg * 1e-9,
            g_r: two_pi() * gr * 1e6,
            omega_r: two_pi() * DEFAULT_RESONATOR_GHZ * 1e9,
            m0_left: cp.0 * 1e-12,
            m0_right: cp.1 * 1e-12,
            beta_c0: cp.2,
            omega_c0: two_pi() * cp.3 * 1e9,
            two_photon_factor: DEFAULT_TWO_PHOTON_FACTOR,
            dac_to_flux: DEFAULT_QUBIT_DAC_TO_FLUX,
            flux_offset: 0.0,
        };
        Ok(if mirrored { p.mirrored() } else { p })
    }

    /// Swap the coupler's two mutuals, for the qubit on its right.
    pub fn mirrored(self) -> Self {
        Self { m0_left: self.m0_right, m0_right: self.m0_left, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("C", self.c), ("L_j", self.l_j), ("L_g", self.l_g)] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.beta_c0 > 0.0 && self.beta_c0 < 1.0) {
            return invalid(format!("beta_C0 must lie in (0, 1), got {}", self.beta_c0));
        }
        if !(self.two_photon_factor > 0.9 && self.two_photon_factor <= 1.0) {
            return invalid(format!("two_photon_factor must lie in (0.9, 1], got {}", self.two_photon_factor));
        }
        if self.m0_left < 0.0 || self.m0_right < 0.0 || self.omega_c0 <= 0.0 || self.omega_r <= 0.0 {
            return invalid("mutuals and mode frequencies must be non-negative");
        }
        Ok(())
    }

    /// Device flux for a DAC amplitude.
    pub fn device_flux(&self, dac: f64) -> f64 {
        self.dac_to_flux * dac + self.flux_offset
    }
}

/// `(w0, beta, lambda)` for a given total series inductance split.
pub fn reduced_parameters(c: f64, l_j: f64, l_g: f64) -> (f64, f64, f64) {
    let l = l_g + l_j;
    let omega0 = 1.0 / (c * l).sqrt();
    let z0 = (l / c).sqrt();
    (omega0, l_g / l_j, z0 / (KLITZING / PI))
}

/// Level shift of a transition at detuning `delta` from a mode with
/// coupling whose square is `g2`: `(|delta| - sqrt(4 g2 + delta^2))/2`.
pub fn dispersive_shift(delta: f64, g2: f64) -> f64 {
    0.5 * (delta.abs() - (4.0 * g2 + delta * delta).sqrt())
}

/// Shifts of `(w10, w21)` from a mode at `omega_m` coupled with `g`.
/// `two_photon` scales the coupling of the 1-2 transition.
fn mode_shifts(omega10: f64, omega21: f64, omega_m: f64, g: f64, two_photon: f64) -> (f64, f64) {
    let eta = omega21 - omega10;
    let delta = omega10 - omega_m;
    let d10 = dispersive_shift(delta, g * g);
    let g2 = (two_photon * g).powi(2) * (1.0 + eta / omega10);
    let d20 = dispersive_shift(delta + eta, g2);
    (d10, d20 - d10)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Hz.
    pub f10: f64,
    /// Hz.
    pub f21: f64,
}

/// Detailed breakdown of a spectrum evaluation, all in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumParts {
    pub bare10: f64,
    pub bare21: f64,
    pub readout: (f64, f64),
    pub coupler: (f64, f64),
    pub beta: f64,
    pub lambda: f64,
    pub loaded_l_g: f64,
}

pub fn circuit_spectrum_parts(
    params: &GmonCircuitParams,
    flux_q: f64,
    flux_c: f64,
    diag: &Diagonalizer,
) -> Result<SpectrumParts> {
    params.validate()?;
    let squid = (PI * flux_q).cos().abs();
    if squid < 1e-6 {
        return invalid(format!("qubit flux {flux_q} sits at the SQUID null"));
    }
    let l_j = params.l_j / squid;
    let beta_c = params.beta_c0 * junction_phase(two_pi() * flux_c, params.beta_c0)?.cos();
    let loaded_l_g = params.l_g - params.m0_left * beta_c / (1.0 + beta_c);
    if loaded_l_g <= 0.0 {
        return invalid("coupler loading drives the geometric inductance negative");
    }
    let (omega0, beta, lambda) = reduced_parameters(params.c, l_j, loaded_l_g);
    let t = diag.transitions(beta, lambda)?;
    let (w10, w21) = (omega0 * t.w10, omega0 * t.w21);

    let readout = mode_shifts(w10, w21, params.omega_r, params.g_r, 1.0);

    let omega_c = params.omega_c0 * (1.0 + beta_c).sqrt();
    let g_c = 0.5 * (w10 * omega_c).sqrt() * (params.m0_left / ((loaded_l_g + l_j) * (1.0 + beta_c))).sqrt();
    let coupler = mode_shifts(w10, w21, omega_c, g_c, params.two_photon_factor);

    Ok(SpectrumParts { bare10: w10, bare21: w21, readout, coupler, beta, lambda, loaded_l_g })
}

/// Transition frequencies of the qubit at device fluxes `flux_q` (its SQUID)
/// and `flux_c` (the coupler), with `levels` oscillator levels.
pub fn circuit_spectrum_with(
    params: &GmonCircuitParams,
    flux_q: f64,
    flux_c: f64,
    diag: &Diagonalizer,
) -> Result<Spectrum> {
    let p = circuit_spectrum_parts(params, flux_q, flux_c, diag)?;
    let w10 = p.bare10 + p.readout.0 + p.coupler.0;
    let w21 = p.bare21 + p.readout.1 + p.coupler.1;
    Ok(Spectrum { f10: w10 / two_pi(), f21: w21 / two_pi() })
}

pub fn circuit_spectrum(params: &GmonCircuitParams, flux_q: f64, flux_c: f64) -> Result<Spectrum> {
    circuit_spectrum_with(params, flux_q, flux_c, &Diagonalizer::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSample {
    pub flux_q: f64,
    pub flux_c: f64,
    /// Hz.
    pub f10: f64,
    /// Hz.
    pub f21: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitParameter {
    Capacitance,
    JunctionInductance,
    GeometricInductance,
    ReadoutCoupling,
    Mutual,
    CouplerBeta,
    CouplerFrequency,
    TwoPhotonFactor,
}

impl FitParameter {
    pub const DEFAULT_SET: [FitParameter; 7] = [
        FitParameter::Capacitance,
        FitParameter::JunctionInductance,
        FitParameter::GeometricInductance,
        FitParameter::ReadoutCoupling,
        FitParameter::Mutual,
        FitParameter::CouplerBeta,
        FitParameter::CouplerFrequency,
    ];

    pub fn get(self, p: &GmonCircuitParams) -> f64 {
        match self {
            Self::Capacitance => p.c,
            Self::JunctionInductance => p.l_j,
            Self::GeometricInductance => p.l_g,
            Self::ReadoutCoupling => p.g_r,
            Self::Mutual => p.m0_left,
            Self::CouplerBeta => p.beta_c0,
            Self::CouplerFrequency => p.omega_c0,
            Self::TwoPhotonFactor => p.two_photon_factor,
        }
    }

    pub fn set(self, p: &mut GmonCircuitParams, v: f64) {
        match self {
            Self::Capacitance => p.c = v,
            Self::JunctionInductance => p.l_j = v,
            Self::GeometricInductance => p.l_g = v,
            Self::ReadoutCoupling => p.g_r = v,
            Self::Mutual => p.m0_left = v,
            Self::CouplerBeta => p.beta_c0 = v,
            Self::CouplerFrequency => p.omega_c0 = v,
            Self::TwoPhotonFactor => p.two_photon_factor = v,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumFit {
    pub params: GmonCircuitParams,
    /// `(fit - data)` per sample for f10 and f21, Hz.
    pub residuals_hz: Vec<(f64, f64)>,
    pub rms_hz: f64,
    pub iterations: usize,
}

/// Nonlinear least squares of `circuit_spectrum` against measured
/// transitions, varying `free` starting from `guess`.
pub fn fit_spectrum(
    samples: &[SpectrumSample],
    guess: &GmonCircuitParams,
    free: &[FitParameter],
) -> Result<SpectrumFit> {
    if free.is_empty() {
        return invalid("no free parameters");
    }
    if samples.len() < 2 * free.len() {
        return Err(Error::Degenerate(format!(
            "{} samples for {} parameters; need at least twice as many",
            samples.len(),
            free.len()
        )));
    }
    guess.validate()?;
    let diag = Diagonalizer::default();
    let scale: Vec<f64> = free.iter().map(|f| f.get(guess)).collect();
    let build = |x: &[f64]| {
        let mut p = *guess;
        for ((f, s), v) in free.iter().zip(&scale).zip(x) {
            f.set(&mut p, s * v);
        }
        p
    };
    // Residuals in MHz keep the normal equations well scaled.
    let residuals = |x: &[f64]| -> Result<Vec<f64>> {
        let p = build(x);
        let mut r = Vec::with_capacity(2 * samples.len());
        for s in samples {
            let sp = circuit_spectrum_with(&p, s.flux_q, s.flux_c, &diag)?;
            r.push((sp.f10 - s.f10) * 1e-6);
            r.push((sp.f21 - s.f21) * 1e-6);
        }
        Ok(r)
    };
    let opts = LmOptions { max_iterations: 100, fd_step: 1e-7, ..LmOptions::default() };
    let rep = levenberg_marquardt(residuals, &vec![1.0; free.len()], &opts)?;
    let params = build(&rep.x);
    let residuals_hz = rep.residuals.chunks(2).map(|c| (c[0] * 1e6, c[1] * 1e6)).collect();
    Ok(SpectrumFit { params, residuals_hz, rms_hz: rep.rms() * 1e6, iterations: rep.iterations })
}
