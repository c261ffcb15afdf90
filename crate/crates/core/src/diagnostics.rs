//! Statistical probes of output distributions: Porter-Thomas histograms,
//! entropies and cross-entropy fidelity, time cross-entropy, half-chain
//! entanglement and two-body bit correlations.
//!
//! Every entropy is in nats.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bose_hubbard::StateVector;
use crate::error::{invalid, Error, Result};
use crate::fock_basis::Basis;
use crate::numeric::{kahan_sum, linear_fit};

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Probabilities over an ordered set of outcomes, optionally labelled by
/// the basis states they belong to.
#[derive(Clone, Debug)]
pub struct ProbabilityDistribution {
    basis: Option<Arc<Basis>>,
    p: Vec<f64>,
}

impl ProbabilityDistribution {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if let Some(k) = p.iter().position(|&x| !(x >= 0.0) || !x.is_finite()) {
            return invalid(format!("probability {} at index {k} is not a finite non-negative number", p[k]));
        }
        Ok(Self { basis: None, p })
    }

    pub fn with_basis(basis: Arc<Basis>, p: Vec<f64>) -> Result<Self> {
        if basis.dim() != p.len() {
            return Err(Error::BasisMismatch(format!("{} probabilities for dimension {}", p.len(), basis.dim())));
        }
        let mut d = Self::new(p)?;
        d.basis = Some(basis);
        Ok(d)
    }

    pub fn uniform(n_states: usize) -> Self {
        Self { basis: None, p: vec![1.0 / n_states as f64; n_states] }
    }

    /// Normalized counts.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::Degenerate("no counts".into()));
        }
        Self::new(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    pub fn basis(&self) -> Option<&Arc<Basis>> {
        self.basis.as_ref()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn n_states(&self) -> usize {
        self.p.len()
    }

    pub fn total(&self) -> f64 {
        kahan_sum(self.p.iter().copied())
    }

    pub fn is_normalized(&self) -> bool {
        (self.total() - 1.0).abs() <= 1e-9
    }

    pub fn normalized(&self) -> Result<Self> {
        let s = self.total();
        if !(s > 0.0) {
            return Err(Error::Degenerate("distribution has zero mass".into()));
        }
        Ok(Self { basis: self.basis.clone(), p: self.p.iter().map(|x| x / s).collect() })
    }

    /// Same probabilities listed in a different order: `out[k] = p[perm[k]]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self { basis: None, p: perm.iter().map(|&k| self.p[k]).collect() }
    }
}

fn check_len(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::BasisMismatch(format!("supports of size {} and {}", p.len(), q.len())));
    }
    Ok(())
}

/// `-sum p ln p`.
pub fn entropy(p: &ProbabilityDistribution) -> f64 {
    kahan_sum(p.p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()))
}

/// `-sum p ln q`; fails where `p > 0` and `q = 0`.
pub fn cross_entropy(p: &ProbabilityDistribution, q: &ProbabilityDistribution) -> Result<f64> {
    check_len(&p.p, &q.p)?;
    let mut terms = Vec::with_capacity(p.p.len());
    for (k, (&a, &b)) in p.p.iter().zip(&q.p).enumerate() {
        if a > 0.0 {
            if b <= 0.0 {
                return Err(Error::UndefinedSupport { index: k });
            }
            terms.push(-a * b.ln());
        }
    }
    Ok(kahan_sum(terms))
}

/// `S(P, Q) - S(P)`, computed termwise so that `D(P, P)` is exactly zero.
pub fn kl_divergence(p: &ProbabilityDistribution, q: &ProbabilityDistribution) -> Result<f64> {
    check_len(&p.p, &q.p)?;
    let mut terms = Vec::with_capacity(p.p.len());
    for (k, (&a, &b)) in p.p.iter().zip(&q.p).enumerate() {
        if a > 0.0 {
            if b <= 0.0 {
                return Err(Error::UndefinedSupport { index: k });
            }
            terms.push(a * (a / b).ln());
        }
    }
    Ok(kahan_sum(terms))
}

/// Cross-entropy fidelity of `measured` against `expected`:
///
/// ```text
/// alpha = [S(inc, exp) - S(meas, exp)] / [S(inc, exp) - S(exp)]
/// ```
///
/// with `inc` the uniform distribution. 1 when `measured = expected`, 0 for
/// the uniform mixture.
pub fn xeb_fidelity(measured: &ProbabilityDistribution, expected: &ProbabilityDistribution) -> Result<f64> {
    check_len(&measured.p, &expected.p)?;
    let inc = ProbabilityDistribution::uniform(expected.n_states());
    let s_inc = cross_entropy(&inc, expected)?;
    let s_meas = cross_entropy(measured, expected)?;
    let s_exp = entropy(expected);
    let denom = s_inc - s_exp;
    if denom.abs() <= 1e-12 * s_inc.abs().max(1.0) {
        return Err(Error::Degenerate("expected distribution is uniform; fidelity undefined".into()));
    }
    Ok((s_inc - s_meas) / denom)
}

/// Plug-in fidelity from sample counts over the same outcome order as
/// `expected`. The plug-in cross-entropy is unbiased; no small-sample
/// correction is applied.
pub fn xeb_fidelity_from_counts(counts: &[u64], expected: &ProbabilityDistribution) -> Result<f64> {
    xeb_fidelity(&ProbabilityDistribution::from_counts(counts)?, expected)
}

/// `ln D - 1 + gamma`, the mean entropy of a Porter-Thomas distribution.
pub fn porter_thomas_entropy(n_states: usize) -> f64 {
    (n_states as f64).ln() - 1.0 + EULER_GAMMA
}

/// Binning of the scaled probabilities `x = p D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` strictly increasing edges; the last is `+inf` when the
    /// overflow bin is kept.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
}

/// Bins used by [`pt_histogram`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub bins: usize,
    pub x_max: f64,
    pub overflow: bool,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self { bins: 32, x_max: 8.0, overflow: true }
    }
}

impl HistogramSpec {
    pub fn edges(&self) -> Vec<f64> {
        let mut e: Vec<f64> = (0..=self.bins).map(|k| self.x_max * k as f64 / self.bins as f64).collect();
        if self.overflow {
            e.push(f64::INFINITY);
        }
        e
    }
}

impl Histogram {
    pub fn empty(spec: &HistogramSpec) -> Result<Self> {
        if spec.bins == 0 || !(spec.x_max > 0.0) {
            return invalid("histogram needs at least one bin and a positive range");
        }
        let edges = spec.edges();
        let counts = vec![0; edges.len() - 1];
        Ok(Self { edges, counts, total: 0 })
    }

    /// Adds one value; values outside the edges are counted in `total` only.
    pub fn add(&mut self, x: f64) {
        self.total += 1;
        let last = *self.edges.last().unwrap();
        if !(x >= self.edges[0] && x <= last) {
            return;
        }
        // last edge <= x; the top edge itself belongs to the last bin
        let k = (self.edges.partition_point(|&e| e <= x) - 1).min(self.counts.len() - 1);
        self.counts[k] += 1;
    }

    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if self.edges != other.edges {
            return invalid("histograms have different edges");
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        self.total += other.total;
        Ok(())
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.total as f64).collect()
    }

    /// Mass of `e^{-x}` in each bin.
    pub fn reference_masses(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| (-w[0]).exp() - (-w[1]).exp()).collect()
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        self.edges
            .windows(2)
            .map(|w| if w[1].is_finite() { 0.5 * (w[0] + w[1]) } else { w[0] })
            .collect()
    }

    /// KL divergence of the histogram frequencies from the Porter-Thomas bin
    /// masses.
    pub fn kl_to_porter_thomas(&self) -> Result<f64> {
        if self.total == 0 {
            return Err(Error::Degenerate("empty histogram".into()));
        }
        let f = ProbabilityDistribution::new(self.frequencies())?;
        let q = ProbabilityDistribution::new(self.reference_masses())?;
        kl_divergence(&f, &q)
    }
}

/// Histogram of `x = p D` over every outcome of `dist`.
pub fn pt_histogram(dist: &ProbabilityDistribution, spec: &HistogramSpec) -> Result<Histogram> {
    let mut h = Histogram::empty(spec)?;
    let d = dist.n_states() as f64;
    dist.p.iter().for_each(|&p| h.add(p * d));
    Ok(h)
}

/// Fraction of outcomes with `p D > x`.
pub fn tail_fraction(dist: &ProbabilityDistribution, x: f64) -> f64 {
    let d = dist.n_states() as f64;
    dist.p.iter().filter(|&&p| p * d > x).count() as f64 / d
}

/// `S(t0, t) = -sum p(t0) ln(p(t) / p(t0))`.
pub fn time_cross_entropy(at_t0: &ProbabilityDistribution, at_t: &ProbabilityDistribution) -> Result<f64> {
    kl_divergence(at_t0, at_t)
}

/// Ensemble value of the time cross-entropy for uncorrelated time points:
///
/// ```text
/// S_uncorr = -sum_z ( mean[p_z(t0)] mean[ln p_z(t)] - mean[p_z(t0) ln p_z(t0)] )
/// ```
///
/// Both ensembles must list the same instances in the same order.
pub fn uncorrelated_baseline(at_t0: &[ProbabilityDistribution], at_t: &[ProbabilityDistribution]) -> Result<f64> {
    if at_t0.is_empty() || at_t0.len() != at_t.len() {
        return invalid("baseline needs two non-empty ensembles of equal size");
    }
    let d = at_t0[0].n_states();
    if at_t0.iter().chain(at_t).any(|p| p.n_states() != d) {
        return Err(Error::BasisMismatch("ensemble members differ in size".into()));
    }
    let m = at_t0.len() as f64;
    let mut terms = Vec::with_capacity(d);
    for z in 0..d {
        let mut p0 = Vec::with_capacity(at_t0.len());
        let mut ln_pt = Vec::with_capacity(at_t0.len());
        let mut self_term = Vec::with_capacity(at_t0.len());
        for (a, b) in at_t0.iter().zip(at_t) {
            let (x, y) = (a.p[z], b.p[z]);
            if y <= 0.0 {
                return Err(Error::UndefinedSupport { index: z });
            }
            p0.push(x);
            ln_pt.push(y.ln());
            if x > 0.0 {
                self_term.push(x * x.ln());
            }
        }
        let mp0 = kahan_sum(p0) / m;
        let mln = kahan_sum(ln_pt) / m;
        let mself = kahan_sum(self_term) / m;
        terms.push(-(mp0 * mln - mself));
    }
    Ok(kahan_sum(terms))
}

/// Half-chain (or any cut) von Neumann entropy `-sum s^2 ln s^2` of a
/// state, from the Schmidt values of each left-excitation block.
///
/// `cut` is the number of sites in the left part.
pub fn entanglement_entropy(psi: &StateVector, cut: usize) -> Result<f64> {
    let basis = psi.basis();
    let n = basis.n_sites();
    if cut == 0 || cut >= n {
        return invalid(format!("cut {cut} must lie in 1..{n}"));
    }
    // left excitation count -> (left config -> row, right config -> col, entries)
    #[derive(Default)]
    struct Block {
        rows: BTreeMap<Vec<u8>, usize>,
        cols: BTreeMap<Vec<u8>, usize>,
        entries: Vec<(usize, usize, Complex64)>,
    }
    let mut blocks: BTreeMap<usize, Block> = BTreeMap::new();
    for (s, &a) in basis.states().iter().zip(psi.amplitudes()) {
        if a == Complex64::new(0.0, 0.0) {
            continue;
        }
        let (l, r) = s.counts().split_at(cut);
        let k: usize = l.iter().map(|&x| x as usize).sum();
        let b = blocks.entry(k).or_default();
        let nr = b.rows.len();
        let row = *b.rows.entry(l.to_vec()).or_insert(nr);
        let nc = b.cols.len();
        let col = *b.cols.entry(r.to_vec()).or_insert(nc);
        b.entries.push((row, col, a));
    }
    let norm2 = crate::numeric::norm_sqr(psi.amplitudes());
    if !(norm2 > 0.0) {
        return Err(Error::Degenerate("zero state".into()));
    }
    let mut terms = Vec::new();
    for b in blocks.values() {
        let mut m = DMatrix::<Complex64>::zeros(b.rows.len(), b.cols.len());
        for &(r, c, a) in &b.entries {
            m[(r, c)] = a;
        }
        for s in m.singular_values().iter() {
            let lam = s * s / norm2;
            if lam > 0.0 {
                terms.push(-lam * lam.ln());
            }
        }
    }
    Ok(kahan_sum(terms))
}

/// Connected bit-bit correlator `C_ij = <z_i z_j> - <z_i><z_j>` of a
/// distribution over occupation labels. Occupations above one count as a
/// set bit.
pub fn bit_correlations(dist: &ProbabilityDistribution) -> Result<Vec<Vec<f64>>> {
    let basis = dist
        .basis()
        .ok_or_else(|| Error::InvalidArgument("correlations need a labelled distribution".into()))?;
    let n = basis.n_sites();
    let mut first = vec![0.0; n];
    let mut second = vec![vec![0.0; n]; n];
    for (s, &p) in basis.states().iter().zip(&dist.p) {
        if p == 0.0 {
            continue;
        }
        let bits: Vec<usize> = s.counts().iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, _)| i).collect();
        for &i in &bits {
            first[i] += p;
            for &j in &bits {
                second[i][j] += p;
            }
        }
    }
    Ok((0..n)
        .map(|i| (0..n).map(|j| second[i][j] - first[i] * first[j]).collect())
        .collect())
}

/// Mean `|C|` at each separation `d = 1 .. N-1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCurve {
    pub separations: Vec<usize>,
    pub mean_abs: Vec<f64>,
    /// Standard error of the mean over distributions.
    pub std_err: Vec<f64>,
    pub n_distributions: usize,
}

/// Averages `|C_ij|` over pairs at each separation and over the supplied
/// distributions (instances times cycles).
pub fn two_body_correlations(dists: &[ProbabilityDistribution]) -> Result<CorrelationCurve> {
    let first = dists.first().ok_or_else(|| Error::InvalidArgument("no distributions".into()))?;
    let n = first.basis().map(|b| b.n_sites()).unwrap_or(0);
    if n < 2 {
        return invalid("correlations need at least two sites");
    }
    let mut per_d: Vec<Vec<f64>> = vec![Vec::with_capacity(dists.len()); n];
    for dist in dists {
        let c = bit_correlations(dist)?;
        if c.len() != n {
            return Err(Error::BasisMismatch("distributions differ in site count".into()));
        }
        for d in 1..n {
            let pairs: Vec<f64> = (0..n - d).map(|i| c[i][i + d].abs()).collect();
            per_d[d].push(pairs.iter().sum::<f64>() / pairs.len() as f64);
        }
    }
    let m = dists.len() as f64;
    let mut curve = CorrelationCurve {
        separations: (1..n).collect(),
        mean_abs: Vec::with_capacity(n - 1),
        std_err: Vec::with_capacity(n - 1),
        n_distributions: dists.len(),
    };
    for v in &per_d[1..] {
        let mean = kahan_sum(v.iter().copied()) / m;
        let var = if v.len() > 1 {
            v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        curve.mean_abs.push(mean);
        curve.std_err.push((var / m).sqrt());
    }
    Ok(curve)
}

/// Exponential fit `C(d) ~ A e^{-d / xi}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationFit {
    pub xi: f64,
    pub amplitude: f64,
    pub r_squared: f64,
}

/// Least-squares fit of `ln C(d)` against `d`. Separations with zero mean
/// correlation are skipped; at least three must remain.
pub fn correlation_length(curve: &CorrelationCurve) -> Result<CorrelationFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = curve
        .separations
        .iter()
        .zip(&curve.mean_abs)
        .filter(|(_, &c)| c > 0.0)
        .map(|(&d, &c)| (d as f64, c.ln()))
        .unzip();
    if x.len() < 3 {
        return invalid("correlation length fit needs at least three separations");
    }
    let (a, b, r2) = linear_fit(&x, &y);
    Ok(CorrelationFit { xi: -1.0 / b, amplitude: a.exp(), r_squared: r2 })
}
