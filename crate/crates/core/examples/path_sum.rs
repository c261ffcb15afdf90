//! Feynman path sum over Trotter slices on a three-site chain, converging
//! to the Runge-Kutta amplitude as the slices get finer.
use std::sync::Arc;

use gmon_lab::bose_hubbard::{mhz, ns, sample_instance, Hamiltonian, InstanceConfig, StateVector};
use gmon_lab::fock_basis::{enumerate_basis, OccupationVector, TruncationScheme};
use gmon_lab::integrator::{evolve, EvolveOptions};
use gmon_lab::oracles::{path_sum_amplitude, PathSumOptions, Strategy};

fn main() -> gmon_lab::Result<()> {
    let cfg = InstanceConfig::chaotic(2).with_pulses((ns(20.0), ns(30.0)), (mhz(6.0), mhz(10.0)));
    let params = sample_instance(3, &cfg, 2)?;
    let basis = Arc::new(enumerate_basis(3, 1, TruncationScheme::MaxLevel(2))?);
    let start = OccupationVector::alternating(3);
    let target = OccupationVector::from_digits("001")?;
    let psi0 = StateVector::fock(basis.clone(), &start)?;
    let h = Hamiltonian::new(&params, basis.clone())?;
    let exact = evolve(&h, &psi0, 100_000, &EvolveOptions::default())?.final_state;
    let reference = exact.amplitudes()[basis.index_of(&target).unwrap()];
    println!("Runge-Kutta: {reference:.6}");

    let enumerate = PathSumOptions { strategy: Strategy::Enumerate, ..PathSumOptions::default() };
    let z = path_sum_amplitude(&params, &start, &target, 6, &enumerate)?;
    println!(
        "M=6 enumerated: {:.6} from {} paths, cancellation {:.2}",
        z.amplitude,
        z.n_trajectories,
        z.cancellation_ratio()
    );
    let aggregate = PathSumOptions { strategy: Strategy::Aggregate, ..PathSumOptions::default() };
    for m in [16, 32, 64, 128, 256] {
        let z = path_sum_amplitude(&params, &start, &target, m, &aggregate)?;
        println!("M={m:>3}: {:.6}  error {:.2e}", z.amplitude, (z.amplitude - reference).norm());
    }
    Ok(())
}
