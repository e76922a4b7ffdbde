//! Recovers the unknown scale and shift of a relative depth map from
//! rendered depths by closed-form least squares.
//!
//! Usage: `cargo run --release --example depth_alignment`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use sdf_recon::objectives::{depth_loss, solve_scale_shift};

fn main() -> sdf_recon::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (w_true, q_true) = (0.37, -0.8);
    let rendered: Vec<f64> = (0..512).map(|_| rng.random_range(1.5..3.5)).collect();
    for sigma in [0.0f64, 0.01, 0.05] {
        let noise = Normal::new(0.0, sigma).unwrap();
        let cue: Vec<f64> = rendered
            .iter()
            .map(|d| w_true * d + q_true + noise.sample(&mut rng))
            .collect();
        let a = solve_scale_shift(&rendered, &cue)?;
        println!(
            "noise {sigma:<5} w = {:.6} q = {:.6}  residual {:.3e}",
            a.w,
            a.q,
            depth_loss(&rendered, &cue, a)
        );
    }
    match solve_scale_shift(&[2.0; 16], &[1.0; 16]) {
        Err(e) => println!("constant rendered depth: {e}"),
        Ok(a) => println!("unexpected solution {a:?}"),
    }
    Ok(())
}
