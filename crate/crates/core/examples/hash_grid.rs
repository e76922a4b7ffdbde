//! Prints the level resolutions and storage of a multi-resolution feature
//! grid and queries interpolated features.
//!
//! Usage: `cargo run --release --example hash_grid -- [levels] [log2_table]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sdf_recon::autodiff::{GroupKind, ParamStore, GRID_LR};
use sdf_recon::field::{resolution_schedule, spatial_hash, uniform_features, GridLevel, Storage, HASH_PRIMES};

fn main() -> sdf_recon::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let levels = args.first().copied().unwrap_or(8);
    let table = 1usize << args.get(1).copied().unwrap_or(14);

    let mut store = ParamStore::new();
    let g = store.group("grid", GroupKind::Grid, GRID_LR);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let grid: Vec<GridLevel> = resolution_schedule(16, 512, levels)?
        .into_iter()
        .map(|r| GridLevel::new(&mut store, g, r, 2, Some(table), uniform_features(&mut rng, 1e-1)))
        .collect();
    for (l, level) in grid.iter().enumerate() {
        let kind = match level.storage {
            Storage::Dense => "dense".to_string(),
            Storage::Hashed { table_size } => format!("hashed into {table_size}"),
        };
        println!("level {l}: resolution {:>4}, {kind}", level.resolution);
    }
    println!("{} grid parameters", store.num_params());

    let x = [0.1234, -0.5, 0.77];
    for (l, level) in grid.iter().enumerate() {
        println!("level {l} feature at {x:?}: {:?}", level.interp(&store, x));
    }
    println!("hash of cell (1, 2, 3): {}", spatial_hash([1, 2, 3], table, HASH_PRIMES));
    Ok(())
}
