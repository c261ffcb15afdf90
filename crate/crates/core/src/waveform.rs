//! Control-line calibration: pulse distortion, predistortion, phase
//! response, crosstalk compensation and timing offsets.
//!
//! Waveforms are uniformly sampled real signals with spacing `dt` seconds.
//! Frequency-domain filtering extends the signal by holding its first and
//! last values, at least 4x the original length, with most of the padding in
//! front so that the transient from the periodic wrap decays before the
//! signal starts.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{invalid, Error, Result};
use crate::fit::{levenberg_marquardt, LmOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionTerm {
    /// Fraction of the pulse height that settles slowly.
    pub epsilon: f64,
    /// Settling time, seconds.
    pub tau: f64,
}

/// `H(w) = 1 + sum eps_i i w tau_i / (1 + i w tau_i)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TransferFunction {
    pub terms: Vec<DistortionTerm>,
}

impl TransferFunction {
    pub const MAX_TERMS: usize = 2;

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(terms: Vec<DistortionTerm>) -> Result<Self> {
        let tf = Self { terms };
        tf.validate()?;
        Ok(tf)
    }

    pub fn single(epsilon: f64, tau: f64) -> Result<Self> {
        Self::new(vec![DistortionTerm { epsilon, tau }])
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.len() > Self::MAX_TERMS {
            return invalid(format!("at most {} distortion terms", Self::MAX_TERMS));
        }
        for t in &self.terms {
            if !(t.tau > 0.0 && t.tau.is_finite()) {
                return invalid(format!("time constant must be positive, got {}", t.tau));
            }
            if !(t.epsilon.abs() < 0.1) {
                return invalid(format!("|epsilon| must be below 0.1, got {}", t.epsilon));
            }
        }
        Ok(())
    }

    pub fn response(&self, omega: f64) -> Complex64 {
        self.terms.iter().fold(Complex64::new(1.0, 0.0), |h, t| {
            let iwt = Complex64::new(0.0, omega * t.tau);
            h + t.epsilon * iwt / (1.0 + iwt)
        })
    }

    /// Step response `1 + sum eps_i exp(-t/tau_i)` for `t >= 0`.
    pub fn step_response(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        1.0 + self.terms.iter().map(|d| d.epsilon * (-t / d.tau).exp()).sum::<f64>()
    }

    fn longest_tau(&self) -> f64 {
        self.terms.iter().map(|t| t.tau).fold(0.0, f64::max)
    }
}

fn check_signal(signal: &[f64], dt: f64) -> Result<()> {
    if signal.len() < 2 {
        return invalid("waveform needs at least 2 samples");
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return invalid(format!("sample spacing must be positive, got {dt}"));
    }
    Ok(())
}

/// Multiply the padded spectrum by `filter(w)` and cut the signal back out.
fn filter_padded<F>(signal: &[f64], dt: f64, settle: f64, filter: F) -> Vec<f64>
where
    F: Fn(f64) -> Complex64,
{
    let n = signal.len();
    let lead = (2 * n).max((20.0 * settle / dt).ceil() as usize);
    let len = lead + n + n;
    let first = signal[0];
    let last = signal[n - 1];
    let mut buf: Vec<Complex64> = std::iter::repeat_n(first, lead)
        .chain(signal.iter().copied())
        .chain(std::iter::repeat_n(last, n))
        .map(|v| Complex64::new(v, 0.0))
        .collect();

    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    let df = 2.0 * PI / (len as f64 * dt);
    for (k, v) in buf.iter_mut().enumerate() {
        let kk = if k <= len / 2 { k as f64 } else { k as f64 - len as f64 };
        *v *= filter(kk * df);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let scale = 1.0 / len as f64;
    buf[lead..lead + n].iter().map(|v| v.re * scale).collect()
}

/// The waveform that arrives at the device when `signal` is sent down a line
/// with transfer function `tf`.
pub fn apply_transfer(tf: &TransferFunction, signal: &[f64], dt: f64) -> Result<Vec<f64>> {
    check_signal(signal, dt)?;
    if tf.terms.is_empty() {
        return Ok(signal.to_vec());
    }
    Ok(filter_padded(signal, dt, tf.longest_tau(), |w| tf.response(w)))
}

/// Smallest `|H|` accepted by [`predistort`].
pub const MIN_RESPONSE: f64 = 1e-3;

/// The signal to send so that `desired` arrives at the device.
pub fn predistort(tf: &TransferFunction, desired: &[f64], dt: f64) -> Result<Vec<f64>> {
    check_signal(desired, dt)?;
    if tf.terms.is_empty() {
        return Ok(desired.to_vec());
    }
    // |H| is monotone in |w| for each term, so the extremes are at DC and at
    // infinite frequency.
    let h_inf = 1.0 + tf.terms.iter().map(|t| t.epsilon).sum::<f64>();
    if h_inf.abs() < MIN_RESPONSE {
        return Err(Error::Singular(format!("transfer function vanishes at high frequency (|H| = {h_inf:e})")));
    }
    let settle = tf.longest_tau() / h_inf.abs().min(1.0);
    Ok(filter_padded(desired, dt, settle, |w| 1.0 / tf.response(w)))
}

/// Cumulative integral of uniformly sampled `f`, trapezoid rule with the
/// Euler-Maclaurin end correction (fourth order on smooth data, at least
/// 5 samples).
pub fn cumulative_integral(f: &[f64], dt: f64) -> Vec<f64> {
    let n = f.len();
    // Fourth-order derivative stencils; the correction then costs O(dt^6).
    let deriv = |k: usize| -> f64 {
        let d = match k {
            0 => -25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4],
            1 => -3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4],
            k if k == n - 1 => 25.0 * f[k] - 48.0 * f[k - 1] + 36.0 * f[k - 2] - 16.0 * f[k - 3] + 3.0 * f[k - 4],
            k if k == n - 2 => 3.0 * f[k + 1] + 10.0 * f[k] - 18.0 * f[k - 1] + 6.0 * f[k - 2] - f[k - 3],
            k => f[k - 2] - 8.0 * f[k - 1] + 8.0 * f[k + 1] - f[k + 2],
        };
        d / (12.0 * dt)
    };
    let correct = n >= 5;
    let d0 = if correct { deriv(0) } else { 0.0 };
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    if n > 0 {
        out.push(0.0);
    }
    for k in 1..n {
        acc += 0.5 * dt * (f[k - 1] + f[k]);
        let c = if correct { dt * dt / 12.0 * (deriv(k) - d0) } else { 0.0 };
        out.push(acc - c);
    }
    out
}

/// Qubit phase accumulated up to each sample when `pulse` (flux, sampled at
/// `dt`) is distorted by `tf` and converted to a detuning by `flux_to_detuning`
/// (rad/s, zero at the idle point).
pub fn predict_phase_response<F>(tf: &TransferFunction, pulse: &[f64], dt: f64, flux_to_detuning: F) -> Result<Vec<f64>>
where
    F: Fn(f64) -> f64,
{
    let flux = apply_transfer(tf, pulse, dt)?;
    let detuning: Vec<f64> = flux.into_iter().map(flux_to_detuning).collect();
    Ok(cumulative_integral(&detuning, dt))
}

/// Measured phase at given times (seconds) after the start of the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTrace {
    pub times: Vec<f64>,
    pub phase: Vec<f64>,
}

fn interpolate(series: &[f64], dt: f64, t: f64) -> f64 {
    let x = (t / dt).clamp(0.0, (series.len() - 1) as f64);
    let k = (x.floor() as usize).min(series.len() - 2);
    let f = x - k as f64;
    series[k] * (1.0 - f) + series[k + 1] * f
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferFit {
    pub tf: TransferFunction,
    /// Constant phase offset absorbed by the fit, radians.
    pub offset: f64,
    pub rms: f64,
    pub iterations: usize,
}

/// Least-squares fit of the phase response for `n_terms` distortion terms.
/// A free constant offset absorbs the phase reference.
pub fn fit_transfer_function<F>(
    measured: &PhaseTrace,
    pulse: &[f64],
    dt: f64,
    flux_to_detuning: F,
    n_terms: usize,
) -> Result<TransferFit>
where
    F: Fn(f64) -> f64,
{
    if !(1..=TransferFunction::MAX_TERMS).contains(&n_terms) {
        return invalid(format!("n_terms must be 1 or 2, got {n_terms}"));
    }
    if measured.times.len() != measured.phase.len() {
        return invalid("phase trace times and values differ in length");
    }
    check_signal(pulse, dt)?;
    // Parameters: (eps_i, ln(tau_i / 1 ns)) per term, then the offset.
    let unpack = |x: &[f64]| -> TransferFunction {
        TransferFunction {
            terms: (0..n_terms).map(|i| DistortionTerm { epsilon: x[2 * i], tau: 1e-9 * x[2 * i + 1].exp() }).collect(),
        }
    };
    let residuals = |x: &[f64]| -> Result<Vec<f64>> {
        let tf = unpack(x);
        let pred = predict_phase_response(&tf, pulse, dt, &flux_to_detuning)?;
        Ok(measured
            .times
            .iter()
            .zip(&measured.phase)
            .map(|(&t, &p)| interpolate(&pred, dt, t) + x[2 * n_terms] - p)
            .collect())
    };
    let mut x0 = match n_terms {
        1 => vec![0.005, 20f64.ln()],
        _ => vec![0.005, 5f64.ln(), 0.005, 100f64.ln()],
    };
    x0.push(0.0);
    let opts = LmOptions { max_iterations: 300, ..LmOptions::default() };
    let rep = levenberg_marquardt(residuals, &x0, &opts)?;
    let mut tf = unpack(&rep.x);
    tf.terms.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    Ok(TransferFit { tf, offset: rep.x[2 * n_terms], rms: rep.rms(), iterations: rep.iterations })
}

/// Linear map from control-line amplitudes to fluxes at each device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct CrosstalkMatrix(DMatrix<f64>);

impl CrosstalkMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return invalid("crosstalk matrix must be square and non-empty");
        }
        for i in 0..m.nrows() {
            if (m[(i, i)] - 1.0).abs() > 1e-12 {
                return invalid(format!("crosstalk diagonal must be 1, row {i} has {}", m[(i, i)]));
            }
            let off: f64 = (0..m.ncols()).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
            if off >= 1.0 {
                return invalid(format!("row {i} is not diagonally dominant"));
            }
        }
        Ok(Self(m))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn n_channels(&self) -> usize {
        self.0.nrows()
    }

    /// Ratio of extreme singular values.
    pub fn condition_number(&self) -> f64 {
        let s = self.0.clone().singular_values();
        s.max() / s.min()
    }

    pub fn apply(&self, control: &[f64]) -> Vec<f64> {
        (&self.0 * DVector::from_column_slice(control)).as_slice().to_vec()
    }
}

impl TryFrom<Vec<Vec<f64>>> for CrosstalkMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return invalid("crosstalk matrix rows must all have length equal to the row count");
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }
}

impl From<CrosstalkMatrix> for Vec<Vec<f64>> {
    fn from(m: CrosstalkMatrix) -> Self {
        m.0.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}

/// Control amplitudes whose crosstalk-mixed fluxes equal `desired`.
pub fn compensate_crosstalk(x: &CrosstalkMatrix, desired: &[f64]) -> Result<Vec<f64>> {
    if desired.len() != x.n_channels() {
        return invalid(format!("{} fluxes for a {}-channel matrix", desired.len(), x.n_channels()));
    }
    let lu = x.0.clone().lu();
    lu.solve(&DVector::from_column_slice(desired))
        .map(|v| v.as_slice().to_vec())
        .ok_or_else(|| Error::Singular("crosstalk matrix is not invertible".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingFit {
    /// Dip centre `(t1 + t2)/2`, seconds.
    pub offset: f64,
    pub offset_std: f64,
    pub t1: f64,
    pub t2: f64,
    pub width: f64,
    pub depth: f64,
    pub baseline: f64,
    pub rms: f64,
}

/// `p0 - a [erf((t - t1)/w) - erf((t - t2)/w)] / 2`.
pub fn dip_model(t: f64, baseline: f64, depth: f64, t1: f64, t2: f64, width: f64) -> f64 {
    baseline - 0.5 * depth * (erf((t - t1) / width) - erf((t - t2) / width))
}

/// Timing offset from excited-state probability versus relative delay.
pub fn fit_timing_offset(delays: &[f64], probability: &[f64]) -> Result<TimingFit> {
    if delays.len() != probability.len() || delays.len() < 6 {
        return invalid("timing fit needs at least 6 (delay, probability) pairs");
    }
    let mut sorted = probability.to_vec();
    sorted.sort_by(f64::total_cmp);
    let baseline = sorted[(3 * sorted.len()) / 4];
    let floor = sorted[0];
    // Point-to-point scatter as a noise scale.
    let noise = {
        let d: Vec<f64> = probability.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let mut d = d;
        d.sort_by(f64::total_cmp);
        d[d.len() / 2] / (0.6745 * 2f64.sqrt())
    };
    let depth0 = baseline - floor;
    let low: Vec<usize> = (0..delays.len()).filter(|&k| probability[k] < baseline - 0.5 * depth0).collect();
    if depth0 <= 6.0 * noise.max(1e-12) || low.len() < 2 {
        return Err(Error::Degenerate("no dip detected in timing curve".into()));
    }
    let t1 = delays[low[0]];
    let t2 = delays[*low.last().unwrap()];
    let span = delays.last().unwrap() - delays[0];
    let scale = span.abs();
    let step = scale / (delays.len() - 1) as f64;
    let w0 = ((t2 - t1) / 4.0).max(step);

    // Times in units of the scan span keep the parameters O(1).
    let x0 = [baseline, depth0, t1 / scale, t2 / scale, w0 / scale];
    let residuals = |x: &[f64]| -> Result<Vec<f64>> {
        Ok(delays
            .iter()
            .zip(probability)
            .map(|(&t, &p)| dip_model(t / scale, x[0], x[1], x[2], x[3], x[4].abs().max(1e-9)) - p)
            .collect())
    };
    let rep = levenberg_marquardt(residuals, &x0, &LmOptions::default())?;
    let x = &rep.x;
    let (t1, t2) = (x[2].min(x[3]) * scale, x[2].max(x[3]) * scale);
    if x[1] <= 0.0 {
        return Err(Error::Degenerate("fitted dip has non-positive depth".into()));
    }
    let offset_std = 0.5 * scale * (rep.std_errors[2].powi(2) + rep.std_errors[3].powi(2)).sqrt();
    Ok(TimingFit {
        offset: 0.5 * (t1 + t2),
        offset_std,
        t1,
        t2,
        width: x[4].abs() * scale,
        depth: x[1],
        baseline: x[0],
        rms: rep.rms(),
    })
}
