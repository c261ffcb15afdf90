//! Samples bitstrings with readout errors and photon loss, keeps only the
//! ones with the right excitation count and scores them against the ideal
//! distribution.
use std::sync::Arc;

use gmon_lab::bose_hubbard::{sample_instance, Hamiltonian, InstanceConfig, StateVector};
use gmon_lab::diagnostics::xeb_fidelity_from_counts;
use gmon_lab::fock_basis::{enumerate_basis, OccupationVector, TruncationScheme};
use gmon_lab::integrator::{evolve, project_qubit_subspace, sample_measurements, EvolveOptions, MeasurementErrorModel};

fn main() -> gmon_lab::Result<()> {
    let (n, cycles) = (8, 5);
    let params = sample_instance(n, &InstanceConfig::chaotic(cycles), 3)?;
    let basis = Arc::new(enumerate_basis(n, n / 2, TruncationScheme::MaxLevel(2))?);
    let psi0 = StateVector::fock(basis.clone(), &OccupationVector::alternating(n))?;
    let h = Hamiltonian::new(&params, basis)?;
    let psi = evolve(&h, &psi0, 20_000, &EvolveOptions::default())?.final_state;
    let ideal = project_qubit_subspace(&psi)?.normalized;

    for (e, loss) in [(0.0, 0.0), (0.02, 0.0), (0.05, 0.001), (0.1, 0.005)] {
        let model = MeasurementErrorModel { readout_error: e, loss_per_cycle: loss };
        let out = sample_measurements(&ideal, 200_000, &model, cycles, 11)?;
        println!(
            "readout {e:.2} loss {loss:.3}: rejected {:.4} (model {:.4}), fidelity of kept samples {:.3}",
            out.rejected_fraction,
            model.rejected_fraction(n, n / 2, cycles),
            xeb_fidelity_from_counts(&out.counts, &ideal)?
        );
    }
    Ok(())
}
