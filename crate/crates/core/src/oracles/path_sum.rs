//! First-order Trotter path sum over occupation-number trajectories.
//!
//! The evolution time `T` is cut into `M` steps of length `dt = T / M`. Each
//! step applies the even bonds and then the odd bonds, giving `2M` slices and
//! `2M + 1` time points `t = 0 .. 2M`. A bond in slice `s` contributes the
//! linearized factor
//!
//! ```text
//! 1                                  no change on the bond
//! -i dt g sqrt(n_from (n_to + 1))    one boson hops across it
//! 0                                  anything else
//! ```
//!
//! with `g` taken at the midpoint of the step. The diagonal energy enters as
//! `exp(-i dt/2 w_t H_d(n(t)))` at every time point, with `w_t = 1/2` at both
//! ends and 1 elsewhere, so the diagonal part integrates to `T H_d` overall.
//!
//! Every trajectory therefore carries a phase
//! `phi = -dt/2 sum_t w_t H_d - (pi/2) sum_swaps sign(g)` and a non-negative
//! weight `prod |dt g sqrt(..)|`, and the amplitude is `sum w e^{i phi}`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bose_hubbard::{diagonal_energy, InstanceParams};
use crate::error::{invalid, Error, Result};
use crate::fock_basis::{enumerate_basis, Basis, OccupationVector, TruncationScheme};
use crate::numeric::{kahan_sum_complex, CompensatedSum};

/// Trajectory budget for exhaustive enumeration.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    /// Visit every trajectory depth first.
    Enumerate,
    /// Sum trajectories slice by slice (dynamic programming over the
    /// occupation at each time point). Same sum, polynomial cost; no
    /// per-trajectory output.
    Aggregate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSumOptions {
    pub scheme: TruncationScheme,
    pub strategy: Strategy,
    pub budget: u64,
    /// Keep every enumerated trajectory (needed for phase binning).
    pub collect: bool,
}

impl Default for PathSumOptions {
    fn default() -> Self {
        Self { scheme: TruncationScheme::MaxLevel(2), strategy: Strategy::Enumerate, budget: DEFAULT_BUDGET, collect: false }
    }
}

/// One occupation-number history with its phase and weight.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// Basis indices at time points `0 ..= 2M`.
    pub states: Vec<u32>,
    pub phase: f64,
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct PathSum {
    pub amplitude: Complex64,
    /// Number of trajectories with non-zero weight.
    pub n_trajectories: f64,
    /// `sum w` over those trajectories.
    pub total_weight: f64,
    pub trajectories: Vec<Trajectory>,
}

impl PathSum {
    /// `|Z| / sum w`; small values mean heavy cancellation between phases.
    pub fn cancellation_ratio(&self) -> f64 {
        self.amplitude.norm() / self.total_weight
    }
}

#[derive(Clone, Debug)]
struct Move {
    target: usize,
    /// `(bond, sqrt factor)` for each hop in the move.
    hops: Vec<(usize, f64)>,
}

/// Precomputed slice structure of one instance on one basis.
#[derive(Clone, Debug)]
pub struct TrotterModel {
    basis: Arc<Basis>,
    /// `moves[parity][state]`, the identity move first.
    moves: [Vec<Vec<Move>>; 2],
    diagonal: Vec<f64>,
    /// Couplings per step (`[step][bond]`).
    couplings: Vec<Vec<f64>>,
    dt: f64,
    steps: usize,
}

impl TrotterModel {
    pub fn new(params: &InstanceParams, basis: Arc<Basis>, steps: usize) -> Result<Self> {
        params.validate()?;
        if steps == 0 {
            return invalid("at least one Trotter step is required");
        }
        if basis.n_sites() != params.n_sites {
            return Err(Error::BasisMismatch("instance and basis differ in site count".into()));
        }
        let n_bonds = params.n_sites - 1;
        let dt = params.total_time() / steps as f64;
        let couplings = (0..steps)
            .map(|k| {
                let mut g = vec![0.0; n_bonds];
                params.pulses.couplings_at((k as f64 + 0.5) * dt, &mut g);
                g
            })
            .collect();
        let moves = [0, 1].map(|parity| {
            basis
                .states()
                .iter()
                .map(|s| moves_from(&basis, s, parity))
                .collect()
        });
        let diagonal = basis.states().iter().map(|s| diagonal_energy(params, s.counts())).collect();
        Ok(Self { basis, moves, diagonal, couplings, dt, steps })
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn slices(&self) -> usize {
        2 * self.steps
    }

    fn diagonal_phase(&self, state: usize, t: usize) -> f64 {
        let w = if t == 0 || t == self.slices() { 0.5 } else { 1.0 };
        -0.5 * self.dt * w * self.diagonal[state]
    }

    /// `(phase, weight)` of one move in slice `s`; `None` when a coupling
    /// vanishes.
    fn move_factor(&self, mv: &Move, s: usize) -> Option<(f64, f64)> {
        let g = &self.couplings[s / 2];
        let mut phase = 0.0;
        let mut weight = 1.0;
        for &(bond, root) in &mv.hops {
            let gb = g[bond];
            if gb == 0.0 {
                return None;
            }
            phase -= 0.5 * PI * gb.signum();
            weight *= (self.dt * gb * root).abs();
        }
        Some((phase, weight))
    }

    fn successors(&self, state: usize, s: usize) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.moves[s % 2][state]
            .iter()
            .filter_map(move |mv| self.move_factor(mv, s).map(|(p, w)| (mv.target, p, w)))
    }

    /// `reach[t][x]`: whether `target` is reachable from state `x` at time
    /// point `t` through non-zero moves.
    fn reachability(&self, target: usize) -> Vec<Vec<bool>> {
        let d = self.basis.dim();
        let n = self.slices();
        let mut reach = vec![vec![false; d]; n + 1];
        reach[n][target] = true;
        for s in (0..n).rev() {
            for x in 0..d {
                reach[s][x] = self.successors(x, s).any(|(y, _, _)| reach[s + 1][y]);
            }
        }
        reach
    }

    /// Dynamic-programming sum over all trajectories:
    /// `(amplitude, trajectory count, total weight)`.
    pub fn aggregate(&self, from: usize, to: usize) -> (Complex64, f64, f64) {
        let d = self.basis.dim();
        let mut amp = vec![Complex64::new(0.0, 0.0); d];
        let mut count = vec![0.0; d];
        let mut weight = vec![0.0; d];
        amp[from] = Complex64::from_polar(1.0, self.diagonal_phase(from, 0));
        count[from] = 1.0;
        weight[from] = 1.0;
        for s in 0..self.slices() {
            let mut na = vec![Complex64::new(0.0, 0.0); d];
            let mut nc = vec![0.0; d];
            let mut nw = vec![0.0; d];
            for x in 0..d {
                if count[x] == 0.0 {
                    continue;
                }
                for (y, p, w) in self.successors(x, s) {
                    na[y] += amp[x] * Complex64::from_polar(w, p);
                    nc[y] += count[x];
                    nw[y] += weight[x] * w;
                }
            }
            for (y, a) in na.iter_mut().enumerate() {
                *a *= Complex64::from_polar(1.0, self.diagonal_phase(y, s + 1));
            }
            amp = na;
            count = nc;
            weight = nw;
        }
        (amp[to], count[to], weight[to])
    }
}

/// All single-slice moves from `s` that touch only bonds of the given parity
/// and stay inside the basis.
fn moves_from(basis: &Basis, s: &OccupationVector, parity: usize) -> Vec<Move> {
    let c = s.counts();
    let n = c.len();
    let bonds: Vec<usize> = (parity..n.saturating_sub(1)).step_by(2).collect();
    // per bond: stay, hop right (b -> b+1), hop left (b+1 -> b)
    let mut partial: Vec<(Vec<u8>, Vec<(usize, f64)>)> = vec![(c.to_vec(), Vec::new())];
    for &b in &bonds {
        let mut next = Vec::with_capacity(partial.len() * 3);
        for (occ, hops) in partial {
            let (l, r) = (occ[b], occ[b + 1]);
            if l > 0 {
                let mut o = occ.clone();
                o[b] -= 1;
                o[b + 1] += 1;
                let mut h = hops.clone();
                h.push((b, (l as f64 * (r as f64 + 1.0)).sqrt()));
                next.push((o, h));
            }
            if r > 0 {
                let mut o = occ.clone();
                o[b] += 1;
                o[b + 1] -= 1;
                let mut h = hops.clone();
                h.push((b, ((l as f64 + 1.0) * r as f64).sqrt()));
                next.push((o, h));
            }
            next.push((occ, hops));
        }
        partial = next;
    }
    let mut out: Vec<Move> = partial
        .into_iter()
        .filter_map(|(occ, hops)| basis.index_of_counts(&occ).map(|target| Move { target, hops }))
        .collect();
    out.sort_by_key(|m| m.hops.len());
    out
}

struct Walker<'a> {
    model: &'a TrotterModel,
    reach: &'a [Vec<bool>],
    collect: bool,
    re: CompensatedSum,
    im: CompensatedSum,
    weight: CompensatedSum,
    count: u64,
    path: Vec<u32>,
    out: Vec<Trajectory>,
}

impl Walker<'_> {
    fn walk(&mut self, state: usize, t: usize, phase: f64, weight: f64) {
        let model = self.model;
        if t == model.slices() {
            self.count += 1;
            let z = Complex64::from_polar(weight, phase);
            self.re.add(z.re);
            self.im.add(z.im);
            self.weight.add(weight);
            if self.collect {
                self.out.push(Trajectory { states: self.path.clone(), phase, weight });
            }
            return;
        }
        for (y, p, w) in model.successors(state, t) {
            if !self.reach[t + 1][y] {
                continue;
            }
            self.path.push(y as u32);
            self.walk(y, t + 1, phase + p + model.diagonal_phase(y, t + 1), weight * w);
            self.path.pop();
        }
    }
}

/// `<n_out| U(T) |n_in>` from the trajectory sum with `2 * steps` slices.
pub fn path_sum_amplitude(
    params: &InstanceParams,
    n_in: &OccupationVector,
    n_out: &OccupationVector,
    steps: usize,
    opts: &PathSumOptions,
) -> Result<PathSum> {
    if n_in.total() != n_out.total() {
        return Ok(PathSum {
            amplitude: Complex64::new(0.0, 0.0),
            n_trajectories: 0.0,
            total_weight: 0.0,
            trajectories: Vec::new(),
        });
    }
    let basis = Arc::new(enumerate_basis(params.n_sites, n_in.total(), opts.scheme)?);
    let model = TrotterModel::new(params, basis, steps)?;
    path_sum_with_model(&model, n_in, n_out, opts)
}

pub fn path_sum_with_model(
    model: &TrotterModel,
    n_in: &OccupationVector,
    n_out: &OccupationVector,
    opts: &PathSumOptions,
) -> Result<PathSum> {
    let basis = model.basis();
    let lookup = |s: &OccupationVector| {
        basis
            .index_of(s)
            .ok_or_else(|| Error::BasisMismatch(format!("state {s} is not in the truncated basis")))
    };
    let (from, to) = (lookup(n_in)?, lookup(n_out)?);
    let (amplitude, count, total_weight) = model.aggregate(from, to);
    if opts.strategy == Strategy::Aggregate {
        return Ok(PathSum { amplitude, n_trajectories: count, total_weight, trajectories: Vec::new() });
    }
    if count > opts.budget as f64 {
        return Err(Error::BudgetExceeded(format!(
            "{count:e} trajectories exceed the budget of {}",
            opts.budget
        )));
    }
    let reach = model.reachability(to);
    if !reach[0][from] {
        return Ok(PathSum { amplitude: Complex64::new(0.0, 0.0), n_trajectories: 0.0, total_weight: 0.0, trajectories: Vec::new() });
    }
    let start_phase = model.diagonal_phase(from, 0);
    // first-slice branches run independently
    let first: Vec<(usize, f64, f64)> =
        model.successors(from, 0).filter(|&(y, _, _)| reach[1][y]).collect();
    let parts: Vec<Walker> = first
        .par_iter()
        .map(|&(y, p, w)| {
            let mut walker = Walker {
                model,
                reach: &reach,
                collect: opts.collect,
                re: CompensatedSum::default(),
                im: CompensatedSum::default(),
                weight: CompensatedSum::default(),
                count: 0,
                path: vec![from as u32, y as u32],
                out: Vec::new(),
            };
            walker.walk(y, 1, start_phase + p + model.diagonal_phase(y, 1), w);
            walker
        })
        .collect();
    let n_trajectories = parts.iter().map(|w| w.count).sum::<u64>() as f64;
    let amplitude = kahan_sum_complex(parts.iter().map(|w| Complex64::new(w.re.value(), w.im.value())));
    let total_weight = parts.iter().map(|w| w.weight.value()).sum();
    let trajectories = parts.into_iter().flat_map(|w| w.out).collect();
    Ok(PathSum { amplitude, n_trajectories, total_weight, trajectories })
}

/// Weights `w_r` of `R` uniform phase bins; each trajectory goes to the bin
/// whose centre `2 pi r / R` is nearest its phase.
pub fn phase_binned_weights(trajectories: &[Trajectory], bins: usize) -> Result<Vec<f64>> {
    if bins < 2 {
        return invalid("phase binning needs at least two bins");
    }
    let mut w = vec![0.0; bins];
    for tr in trajectories {
        let x = tr.phase.rem_euclid(2.0 * PI) / (2.0 * PI) * bins as f64;
        let r = (x.round() as usize) % bins;
        w[r] += tr.weight;
    }
    Ok(w)
}

/// `Z = sum_r w_r e^{2 pi i r / R}`.
pub fn binned_amplitude(weights: &[f64]) -> Complex64 {
    let r = weights.len() as f64;
    kahan_sum_complex(
        weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(k, &w)| Complex64::from_polar(w, 2.0 * PI * k as f64 / r)),
    )
}
