//! Half-chain entanglement entropy after each pulse.
use std::sync::Arc;

use gmon_lab::bose_hubbard::{mhz, sample_instance, Hamiltonian, InstanceConfig, StateVector};
use gmon_lab::diagnostics::entanglement_entropy;
use gmon_lab::fock_basis::{enumerate_basis, OccupationVector, TruncationScheme};
use gmon_lab::integrator::{evolve_refining, CheckpointPolicy, EvolveOptions};

fn main() -> gmon_lab::Result<()> {
    let n = 10;
    let basis = Arc::new(enumerate_basis(n, n / 2, TruncationScheme::MaxLevel(2))?);
    let psi0 = StateVector::fock(basis.clone(), &OccupationVector::alternating(n))?;
    let opts = EvolveOptions { keep_states: Some(true), ..EvolveOptions::default().with_checkpoints(CheckpointPolicy::Cycles) };
    for disorder in [5.0, 30.0] {
        let params = sample_instance(n, &InstanceConfig::chaotic(8).with_disorder(mhz(disorder)), 9)?;
        let h = Hamiltonian::new(&params, basis.clone())?;
        let steps = (params.total_time() * 1e9 * 40.0) as usize;
        let run = evolve_refining(&h, &psi0, steps, &opts, 4)?;
        let s: Vec<String> = run
            .checkpoints
            .iter()
            .map(|cp| Ok(format!("{:.3}", entanglement_entropy(cp.snapshot.state().unwrap(), n / 2)?)))
            .collect::<gmon_lab::Result<_>>()?;
        println!("+-{disorder} MHz: {}", s.join(" "));
    }
    Ok(())
}
