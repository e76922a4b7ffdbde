//! Compares reverse-mode gradients of the Eikonal penalty with central
//! differences for a small single-MLP field.
//!
//! Usage: `cargo run --release --example gradient_check`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdf_recon::autodiff::{GradSink, ParamStore, Tape};
use sdf_recon::field::{MlpSpec, Representation};
use sdf_recon::model::{Model, ModelConfig};
use sdf_recon::objectives::EikonalOp;

fn eikonal(model: &Model, store: &ParamStore, points: &[[f64; 3]], grad: bool) -> (f64, Option<GradSink>) {
    let mut tape = Tape::new(store);
    let dirs = vec![[0.0, 0.0, 1.0]; points.len()];
    let v = model.record_samples(&mut tape, points, &dirs);
    let value = EikonalOp.forward(tape.value(v.sdf_grad));
    let loss = tape.custom(&[v.sdf_grad], value, false, Box::new(EikonalOp));
    let sink = grad.then(|| {
        let mut sink = GradSink::for_store(store);
        tape.backward(loss, &mut sink).expect("finite loss");
        sink
    });
    (tape.scalar(loss), sink)
}

fn main() -> sdf_recon::Result<()> {
    let mut cfg = ModelConfig::default();
    cfg.field.representation = Representation::SingleMlp;
    cfg.field.pe_octaves = 2;
    cfg.field.feature_dim = 4;
    cfg.field.mlp = MlpSpec {
        hidden_layers: 3,
        hidden_width: 32,
        skip_layers: vec![2],
        ..MlpSpec::geometry_default()
    };
    let (model, mut store) = Model::build(&cfg, 5)?;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let points: Vec<[f64; 3]> = (0..64)
        .map(|_| std::array::from_fn(|_| rng.random_range(-0.9..0.9)))
        .collect();
    let (loss, sink) = eikonal(&model, &store, &points, true);
    store.zero_grads();
    store.accumulate(&sink.expect("requested"));
    let grads = store.flat_grads();
    println!("eikonal loss {loss:.6}, {} of {} parameters touched", grads.iter().filter(|g| g.abs() > 1e-8).count(), grads.len());

    println!("{:>8} {:>14} {:>14} {:>10}", "param", "reverse", "central", "rel err");
    let live: Vec<usize> = (0..grads.len()).filter(|&i| grads[i].abs() > 1e-8).collect();
    for _ in 0..10 {
        let i = live[rng.random_range(0..live.len())];
        let (g, off) = store.locate(i).expect("index in range");
        let orig = store.groups()[g].values[off];
        let mut at = |v: f64| {
            store.groups_mut()[g].values[off] = v;
            eikonal(&model, &store, &points, false).0
        };
        let h = 1e-5;
        let fd = (at(orig + h) - at(orig - h)) / (2.0 * h);
        at(orig);
        let rel = (grads[i] - fd).abs() / grads[i].abs().max(fd.abs()).max(1e-12);
        println!("{i:>8} {:>14.6e} {fd:>14.6e} {rel:>10.2e}", grads[i]);
    }
    Ok(())
}
