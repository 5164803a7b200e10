//! Compare the plane-sweep and greedy depth-pursuit initializers on a
//! two-plane scene.
//!
//! Run with: cargo run --release --example init_methods

use lensless3d::geometry::CameraGeometry;
use lensless3d::imaging::{forward, Scene};
use lensless3d::mask::{build_mask_profile, generate_mls};
use lensless3d::recon::{greedy_init, sweep_init, CandidateDepths, GreedyOptions};
use lensless3d::solvers::CglsOptions;
use ndarray::Array2;

fn main() -> lensless3d::Result<()> {
    let pattern = generate_mls(6, None, 1, 30e-6)?;
    let profile = build_mask_profile(&pattern, 15e-6, 5.0, 3e-6)?;
    let geom = CameraGeometry::new(4e-3, 64, 50e-6, 18.0, 12)?;
    let n = geom.scene_pixels;

    let candidates = CandidateDepths::uniform(0.950, 0.998, 7)?;
    let mut alpha = Array2::from_elem((n, n), candidates.alphas[1]);
    for i in 0..n {
        for j in n / 2..n {
            alpha[(i, j)] = candidates.alphas[5];
        }
    }
    let intensity = Array2::from_shape_fn((n, n), |(i, j)| 0.3 + 0.7 * ((i + 2 * j) % 9) as f64 / 8.0);
    let scene = Scene::new(intensity, alpha)?;
    let y = forward(&profile, &geom, &scene);

    let cgls = CglsOptions::default();
    let sweep = sweep_init(&y, &profile, &geom, &candidates, &cgls)?;
    println!("per-plane sweep losses:");
    for (a, loss) in candidates.alphas.iter().zip(&sweep.losses) {
        let marker = if (*a - sweep.alpha).abs() < 1e-15 { "  <- best" } else { "" };
        println!("  alpha {a:.4}: loss {loss:.1}{marker}");
    }

    let greedy = greedy_init(&y, &profile, &geom, &candidates, &cgls, &GreedyOptions::default())?;
    let frac = greedy
        .inv_depth
        .iter()
        .zip(scene.inv_depth.iter())
        .filter(|(a, b)| (**a - **b).abs() < 1e-12)
        .count() as f64
        / (n * n) as f64;
    println!("greedy assigned {:.0}% of the pixels to the true plane", 100.0 * frac);
    Ok(())
}
