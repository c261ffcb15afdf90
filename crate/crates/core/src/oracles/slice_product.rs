//! Dense product of the linearized Trotter slices. Independent of the
//! trajectory machinery: every pair of basis states is compared directly.

use num_complex::Complex64;

use crate::bose_hubbard::{diagonal_energy, InstanceParams};
use crate::fock_basis::Basis;

/// `<to| prod_s S_s |from>` with the same slice conventions as the path sum,
/// at cost `O(M D^2 N)`.
pub fn linearized_product_amplitude(params: &InstanceParams, basis: &Basis, steps: usize, from: usize, to: usize) -> Complex64 {
    let d = basis.dim();
    let n = params.n_sites;
    let dt = params.total_time() / steps as f64;
    let energy: Vec<f64> = basis.states().iter().map(|s| diagonal_energy(params, s.counts())).collect();
    let diag = |w: f64| -> Vec<Complex64> {
        energy.iter().map(|e| Complex64::from_polar(1.0, -0.5 * dt * w * e)).collect()
    };
    let mut v = vec![Complex64::new(0.0, 0.0); d];
    v[from] = diag(0.5)[from];
    for s in 0..2 * steps {
        let mut g = vec![0.0; n - 1];
        params.pulses.couplings_at((s / 2) as f64 * dt + 0.5 * dt, &mut g);
        let parity = s % 2;
        let mut next = vec![Complex64::new(0.0, 0.0); d];
        for (b_idx, b) in basis.states().iter().enumerate() {
            for (a_idx, a) in basis.states().iter().enumerate() {
                let (x, y) = (a.counts(), b.counts());
                let mut factor = Complex64::new(1.0, 0.0);
                let mut site = 0;
                while site < n {
                    let paired = site + 1 < n && site % 2 == parity;
                    if paired {
                        let (l0, r0, l1, r1) = (x[site] as i32, x[site + 1] as i32, y[site] as i32, y[site + 1] as i32);
                        if l0 == l1 && r0 == r1 {
                        } else if l1 == l0 - 1 && r1 == r0 + 1 {
                            factor *= Complex64::new(0.0, -dt * g[site] * ((l0 * (r0 + 1)) as f64).sqrt());
                        } else if l1 == l0 + 1 && r1 == r0 - 1 {
                            factor *= Complex64::new(0.0, -dt * g[site] * (((l0 + 1) * r0) as f64).sqrt());
                        } else {
                            factor = Complex64::new(0.0, 0.0);
                        }
                        site += 2;
                    } else {
                        if x[site] != y[site] {
                            factor = Complex64::new(0.0, 0.0);
                        }
                        site += 1;
                    }
                }
                next[b_idx] += factor * v[a_idx];
            }
        }
        let w = if s + 1 == 2 * steps { 0.5 } else { 1.0 };
        v = next.iter().zip(diag(w)).map(|(a, p)| a * p).collect();
    }
    v[to]
}

