//! Generate MLS mask patterns and smoothed transmittance profiles, and
//! write one to a binary mask file.
//!
//! Run with: cargo run --release --example generate_mask

use lensless3d::io::{sha256_file, write_mask_profile};
use lensless3d::mask::{build_mask_profile, default_simulation_profile, generate_mls};

fn main() -> lensless3d::Result<()> {
    // small pattern: order-6 LFSR, 63 features of 30 um
    let pattern = generate_mls(6, None, 1, 30e-6)?;
    let ones: usize = pattern.bits.iter().map(|&b| b as usize).sum();
    println!(
        "order-6 MLS: {} features, {} transparent (balance {}/{})",
        pattern.len(),
        ones,
        ones,
        pattern.len()
    );

    let profile = build_mask_profile(&pattern, 15e-6, 5.0, 1.5e-6)?;
    println!(
        "profile: {} samples at {:.2} um, support +-{:.1} um",
        profile.len(),
        profile.grid_step_m * 1e6,
        profile.support_halfwidth_m * 1e6
    );

    // the full simulation mask: order-10, zero-padded to 1024 features
    let full = default_simulation_profile()?;
    println!(
        "simulation mask: {} samples, support +-{:.1} um",
        full.len(),
        full.support_halfwidth_m * 1e6
    );

    let out = std::env::temp_dir().join("lensless3d_mask.bin");
    write_mask_profile(&out, &full)?;
    println!("wrote {} (sha256 {})", out.display(), sha256_file(&out)?);
    Ok(())
}
