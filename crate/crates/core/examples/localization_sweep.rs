//! Two-point correlations against site separation for weak and strong
//! on-site disorder.
use gmon_lab::fock_basis::TruncationScheme;
use gmon_lab::pipeline::{disorder_sweep, SweepConfig};

fn main() -> gmon_lab::Result<()> {
    let cfg = SweepConfig {
        n_sites: 8,
        scheme: TruncationScheme::MaxLevel(2),
        instances: 24,
        disorder_mhz: vec![5.0, 15.0, 30.0, 60.0],
        seed: Some(4),
        ..SweepConfig::default()
    };
    for point in disorder_sweep(&cfg)? {
        let c: Vec<String> = point.curve.mean_abs.iter().map(|v| format!("{v:.4}")).collect();
        let xi = point.fit.map(|f| format!("{:.2}", f.xi)).unwrap_or_else(|| "-".into());
        println!("+-{:>4} MHz  xi {xi:>5}  C(d) {}", point.disorder_mhz, c.join(" "));
    }
    Ok(())
}
