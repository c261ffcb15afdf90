//! Collects output distributions over random instances and compares the
//! scaled probabilities with an exponential law.
use std::sync::Arc;

use gmon_lab::bose_hubbard::{sample_instance, Hamiltonian, InstanceConfig, StateVector};
use gmon_lab::diagnostics::{entropy, porter_thomas_entropy, pt_histogram, Histogram, HistogramSpec};
use gmon_lab::fock_basis::{enumerate_basis, OccupationVector, TruncationScheme};
use gmon_lab::integrator::{evolve_refining, project_qubit_subspace, EvolveOptions};
use gmon_lab::rng::split_seed;
use rayon::prelude::*;

fn main() -> gmon_lab::Result<()> {
    let n = 8;
    let basis = Arc::new(enumerate_basis(n, n / 2, TruncationScheme::MaxLevel(2))?);
    let psi0 = StateVector::fock(basis.clone(), &OccupationVector::alternating(n))?;
    let cfg = InstanceConfig::chaotic(5);

    let dists = (0..60u64)
        .into_par_iter()
        .map(|j| {
            let params = sample_instance(n, &cfg, split_seed(1, &[j]))?;
            let h = Hamiltonian::new(&params, basis.clone())?;
            let steps = (params.total_time() * 1e9 * 40.0) as usize;
            let psi = evolve_refining(&h, &psi0, steps, &EvolveOptions::default(), 4)?.final_state;
            Ok(project_qubit_subspace(&psi)?.normalized)
        })
        .collect::<gmon_lab::Result<Vec<_>>>()?;

    let spec = HistogramSpec::default();
    let mut hist = Histogram::empty(&spec)?;
    for d in &dists {
        hist.merge(&pt_histogram(d, &spec)?)?;
    }
    println!("{:>8} {:>10} {:>10}", "Dp", "observed", "e^-x");
    for ((x, f), r) in hist.bin_centers().iter().zip(hist.frequencies()).zip(hist.reference_masses()).step_by(4) {
        println!("{x:>8.2} {f:>10.4} {r:>10.4}");
    }
    let mean_s = dists.iter().map(entropy).sum::<f64>() / dists.len() as f64;
    println!("KL to exponential: {:.4}", hist.kl_to_porter_thomas()?);
    println!("mean entropy {mean_s:.4}, chaotic value {:.4}", porter_thomas_entropy(dists[0].n_states()));
    Ok(())
}
