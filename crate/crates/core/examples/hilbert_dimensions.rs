//! Basis sizes for each truncation and what a 42-site run would cost.
use gmon_lab::fock_basis::{dimension, half_filling, resource_estimate, ResourceProfile, TruncationScheme};

fn main() -> gmon_lab::Result<()> {
    let schemes = [
        ("qubit", TruncationScheme::QUBIT),
        ("one doublon", TruncationScheme::Bands { doublons: 1, triplons: 0 }),
        ("three-level", TruncationScheme::MaxLevel(2)),
        ("four-level", TruncationScheme::MaxLevel(3)),
    ];
    print!("{:>3} {:>8}", "N", "2^N");
    for (name, _) in &schemes {
        print!(" {name:>12}");
    }
    println!();
    for n in 4..=16 {
        let k = half_filling(n);
        print!("{n:>3} {:>8}", 1u64 << n);
        for (_, s) in &schemes {
            print!(" {:>12}", dimension(n, k, *s));
        }
        println!();
    }

    let profile = ResourceProfile::default();
    for (name, s) in schemes {
        let est = resource_estimate(dimension(42, 21, s), &profile)?;
        println!(
            "42 sites, {name}: {:.3e} bytes, {:.1} h of communication",
            est.memory_bytes as f64,
            est.comm_seconds / 3600.0
        );
    }
    Ok(())
}
