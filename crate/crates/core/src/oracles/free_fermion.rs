//! Hard-core limit through the Jordan-Wigner mapping: `N/2` free fermions
//! whose single-particle propagator `V = T exp(-i int h dt)` determines every
//! many-body amplitude as a determinant.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::bose_hubbard::InstanceParams;
use crate::error::{invalid, Error, Result};
use crate::fock_basis::OccupationVector;
use crate::integrator::allocate_steps;

/// Default RK4 steps for the `N x N` propagator.
pub const DEFAULT_STEPS: usize = 40_000;

/// Single-particle propagator of the hopping matrix.
#[derive(Clone, Debug)]
pub struct FermionPropagator {
    pub v: DMatrix<Complex64>,
}

impl FermionPropagator {
    pub fn n_sites(&self) -> usize {
        self.v.nrows()
    }

    /// `max |V^dag V - I|`.
    pub fn unitarity_error(&self) -> f64 {
        let n = self.n_sites();
        let e = self.v.adjoint() * &self.v - DMatrix::<Complex64>::identity(n, n);
        e.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

fn single_particle_h(params: &InstanceParams, t: f64, g: &mut [f64]) -> DMatrix<Complex64> {
    let n = params.n_sites;
    params.pulses.couplings_at(t, g);
    let mut h = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = Complex64::new(params.delta[i], 0.0);
    }
    for (b, &gb) in g.iter().enumerate() {
        h[(b, b + 1)] = Complex64::new(gb, 0.0);
        h[(b + 1, b)] = Complex64::new(gb, 0.0);
    }
    h
}

/// RK4 integration of `dV/dt = -i h(t) V` from `V(0) = I`, using the same
/// per-cycle step allocation as the many-body integrator. The anharmonicity
/// never enters.
pub fn fermion_propagator(params: &InstanceParams, steps: usize) -> Result<FermionPropagator> {
    params.validate()?;
    if steps == 0 {
        return invalid("at least one step is required");
    }
    let n = params.n_sites;
    let mut v = DMatrix::<Complex64>::identity(n, n);
    let mut g = vec![0.0; n.saturating_sub(1)];
    let mi = Complex64::new(0.0, -1.0);
    let alloc = allocate_steps(&params.pulses.durations, steps);
    let mut start = 0.0;
    for (&dur, &m) in params.pulses.durations.iter().zip(&alloc) {
        let dt = dur / m as f64;
        for j in 0..m {
            let t = start + j as f64 * dt;
            let h1 = single_particle_h(params, t, &mut g) * mi;
            let h2 = single_particle_h(params, t + 0.5 * dt, &mut g) * mi;
            let h4 = single_particle_h(params, t + dt, &mut g) * mi;
            let k1 = &h1 * &v;
            let k2 = &h2 * (&v + &k1 * Complex64::new(0.5 * dt, 0.0));
            let k3 = &h2 * (&v + &k2 * Complex64::new(0.5 * dt, 0.0));
            let k4 = &h4 * (&v + &k3 * Complex64::new(dt, 0.0));
            v += (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4)
                * Complex64::new(dt / 6.0, 0.0);
        }
        start += dur;
    }
    Ok(FermionPropagator { v })
}

/// `det V[out_sites, in_sites]` for explicit (ordered) site lists. Swapping
/// two entries of either list flips the sign.
pub fn determinant_amplitude(prop: &FermionPropagator, in_sites: &[usize], out_sites: &[usize]) -> Result<Complex64> {
    let k = in_sites.len();
    if out_sites.len() != k {
        return Err(Error::BasisMismatch(format!("{k} particles in, {} out", out_sites.len())));
    }
    let n = prop.n_sites();
    if in_sites.iter().chain(out_sites).any(|&s| s >= n) {
        return invalid("site index out of range");
    }
    if k == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let sub = DMatrix::from_fn(k, k, |r, c| prop.v[(out_sites[r], in_sites[c])]);
    Ok(sub.determinant())
}

/// `<n_out| U |n_in>` for hard-core occupation vectors.
pub fn free_fermion_amplitude(
    prop: &FermionPropagator,
    n_in: &OccupationVector,
    n_out: &OccupationVector,
) -> Result<Complex64> {
    let n = prop.n_sites();
    if n_in.n_sites() != n || n_out.n_sites() != n {
        return Err(Error::BasisMismatch("occupation vectors do not match the chain length".into()));
    }
    if !n_in.is_hard_core() || !n_out.is_hard_core() {
        return invalid("free-fermion amplitudes need hard-core occupations");
    }
    if n_in.total() != n_out.total() {
        return Err(Error::BasisMismatch(format!(
            "excitation counts differ: {} in, {} out",
            n_in.total(),
            n_out.total()
        )));
    }
    determinant_amplitude(prop, &n_in.occupied_sites(), &n_out.occupied_sites())
}
