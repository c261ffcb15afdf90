//! Flux line calibration: undo a two-term exponential distortion, cancel
//! crosstalk between neighbouring lines and locate a timing offset.
use gmon_lab::waveform::{
    apply_transfer, compensate_crosstalk, dip_model, fit_timing_offset, predistort, CrosstalkMatrix, DistortionTerm,
    TransferFunction,
};
use nalgebra::DMatrix;

const NS: f64 = 1e-9;

fn main() -> gmon_lab::Result<()> {
    let tf = TransferFunction::new(vec![
        DistortionTerm { epsilon: 0.01, tau: 10.0 * NS },
        DistortionTerm { epsilon: 0.01, tau: 70.0 * NS },
    ])?;
    let dt = 0.25 * NS;
    let square: Vec<f64> = (0..4000).map(|k| if (400..560).contains(&k) { 1.0 } else { 0.0 }).collect();
    let raw = apply_transfer(&tf, &square, dt)?;
    let fixed = apply_transfer(&tf, &predistort(&tf, &square, dt)?, dt)?;
    let err = |v: &[f64]| v.iter().zip(&square).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("square pulse error: uncorrected {:.2e}, predistorted {:.2e}", err(&raw), err(&fixed));

    let x = CrosstalkMatrix::new(DMatrix::from_row_slice(3, 3, &[1.0, 0.03, 0.0, 0.02, 1.0, 0.03, 0.0, 0.02, 1.0]))?;
    let desired = [0.1, -0.2, 0.05];
    let control = compensate_crosstalk(&x, &desired)?;
    println!("crosstalk: control {control:.5?} gives {:.5?}", x.apply(&control));

    let delays: Vec<f64> = (-60..=60).map(|k| k as f64 * NS).collect();
    let p: Vec<f64> = delays.iter().map(|&t| dip_model(t, 0.92, 0.75, -12.5 * NS, 7.5 * NS, 3.0 * NS)).collect();
    let fit = fit_timing_offset(&delays, &p)?;
    println!("timing offset {:.3} ns", fit.offset / NS);
    Ok(())
}
