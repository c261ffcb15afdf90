//! Qubit transition frequencies from circuit parameters, and the accuracy
//! of the polynomial expansion against exact diagonalisation.
use gmon_lab::gmon::{
    circuit_spectrum, exact_grid, polynomial_deviation, Diagonalizer, GmonCircuitParams,
    GridSpec, PolynomialCoefficients,
};

fn main() -> gmon_lab::Result<()> {
    let device = GmonCircuitParams::device(1)?;
    println!("{:>8} {:>8} {:>10} {:>10}", "flux_q", "flux_c", "f10 GHz", "eta MHz");
    for flux_q in [0.0, 0.1, 0.2, 0.3] {
        for flux_c in [0.0, 0.25] {
            let s = circuit_spectrum(&device, flux_q, flux_c)?;
            println!("{flux_q:>8.2} {flux_c:>8.2} {:>10.4} {:>10.1}", s.f10 / 1e9, (s.f21 - s.f10) / 1e6);
        }
    }

    let exact = Diagonalizer::default().transitions(0.1, 0.03)?;
    let approx = PolynomialCoefficients::PUBLISHED.reduced(0.1, 0.03);
    println!("beta 0.1, lambda 0.03: exact w10/w0 {:.8}, expansion {:.8}", exact.w10, approx.w10);

    let grid = GridSpec { n_beta: 20, n_lambda: 20, ..GridSpec::default() };
    let (max_hz, rms_hz) = polynomial_deviation(&PolynomialCoefficients::PUBLISHED, &exact_grid(&grid)?);
    println!(
        "expansion vs exact at 5 GHz: max {:.0}/{:.0} kHz, rms {:.0}/{:.0} kHz (w10/w21)",
        max_hz.0 / 1e3,
        max_hz.1 / 1e3,
        rms_hz.0 / 1e3,
        rms_hz.1 / 1e3
    );
    Ok(())
}
