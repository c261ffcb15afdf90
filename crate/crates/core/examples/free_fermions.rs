//! In the hard-core limit the chain maps to free fermions, so every output
//! amplitude is a determinant of the single-particle propagator.
use std::sync::Arc;

use gmon_lab::bose_hubbard::{sample_instance, Hamiltonian, InstanceConfig, StateVector};
use gmon_lab::fock_basis::{enumerate_basis, OccupationVector, TruncationScheme};
use gmon_lab::integrator::{evolve, EvolveOptions};
use gmon_lab::oracles::{fermion_propagator, free_fermion_amplitude};

fn main() -> gmon_lab::Result<()> {
    let n = 8;
    let params = sample_instance(n, &InstanceConfig::chaotic(3), 5)?;
    let basis = Arc::new(enumerate_basis(n, n / 2, TruncationScheme::QUBIT)?);
    let start = OccupationVector::alternating(n);
    let psi0 = StateVector::fock(basis.clone(), &start)?;
    let h = Hamiltonian::new(&params, basis.clone())?;
    let psi = evolve(&h, &psi0, 40_000, &EvolveOptions::default())?.final_state;

    let prop = fermion_propagator(&params, 40_000)?;
    println!("propagator unitarity error {:.1e}", prop.unitarity_error());
    let mut worst = 0.0f64;
    for (k, out) in basis.states().iter().enumerate() {
        let det = free_fermion_amplitude(&prop, &start, out)?;
        worst = worst.max((det.norm_sqr() - psi.amplitudes()[k].norm_sqr()).abs());
    }
    println!("{} outputs, max probability difference {worst:.2e}", basis.dim());
    Ok(())
}
