//! Evolves a random pulse sequence on a 10-site chain and prints the most
//! likely bitstrings after projecting out the doubly occupied states.
use std::sync::Arc;

use gmon_lab::bose_hubbard::{sample_instance, Hamiltonian, InstanceConfig, StateVector};
use gmon_lab::fock_basis::{enumerate_basis, OccupationVector, TruncationScheme};
use gmon_lab::integrator::{evolve_refining, project_qubit_subspace, CheckpointPolicy, EvolveOptions};

fn main() -> gmon_lab::Result<()> {
    let n = 10;
    let params = sample_instance(n, &InstanceConfig::chaotic(5), 7)?;
    let basis = Arc::new(enumerate_basis(n, n / 2, TruncationScheme::MaxLevel(2))?);
    let psi0 = StateVector::fock(basis.clone(), &OccupationVector::alternating(n))?;
    let h = Hamiltonian::new(&params, basis)?;

    let steps = (params.total_time() * 1e9 * 40.0) as usize;
    let opts = EvolveOptions::default().with_checkpoints(CheckpointPolicy::None);
    let result = evolve_refining(&h, &psi0, steps, &opts, 4)?;
    println!("dimension {}, {} steps, norm drift {:.2e}", h.dim(), result.steps_used, result.norm_drift);

    let proj = project_qubit_subspace(&result.final_state)?;
    println!("weight outside the qubit subspace: {:.2e}", proj.leak);
    let qubits = proj.normalized.basis().unwrap().clone();
    let mut ranked: Vec<(usize, f64)> = proj.normalized.probabilities().iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (k, p) in ranked.into_iter().take(8) {
        println!("{}  {p:.5}", qubits.state(k));
    }
    Ok(())
}
