//! Verify the analytic depth gradient against central finite
//! differences on random scenes.
//!
//! Run with: cargo run --release --example gradient_check

fn main() -> lensless3d::Result<()> {
    for seed in 0..5 {
        let rel = lensless3d::cli::gradcheck(8, 32, seed, 1e-7)?;
        println!("seed {seed}: relative l2 gradient error {rel:.3e}");
        assert!(rel < 1e-4);
    }
    println!("analytic gradient matches finite differences");
    Ok(())
}
