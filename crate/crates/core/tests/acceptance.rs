//! Acceptance suite. Runs every criterion and prints one PASS/FAIL line per
//! criterion; exits non-zero when any fails. Set `ACCEPTANCE_ONLY=1,5` to
//! run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdf_recon::autodiff::{Activation, GradSink, ParamStore, Tape};
use sdf_recon::commands::{cmd_eval, cmd_extract, cmd_generate, cmd_train, evaluate_meshes, extract_mesh, EvalParams};
use sdf_recon::config::RunConfig;
use sdf_recon::field::{resolution_schedule, spatial_hash, GridLevel, MlpSpec, Representation, HASH_PRIMES};
use sdf_recon::math::{dot, norm, normalize, Vec3};
use sdf_recon::mesh::marching_cubes_fn;
use sdf_recon::metrics::{chamfer_suite, normal_consistency, SampledCloud};
use sdf_recon::model::{Model, ModelConfig};
use sdf_recon::objectives::{solve_scale_shift, Alignment, EikonalOp, LossWeights, RayLossOp, RayTarget, WeightedSumOp};
use sdf_recon::oracle::{generate_dataset, AnalyticScene, CorruptionConfig, GenerateConfig, RigConfig, RigKind};
use sdf_recon::render::composite::weights_and_transmittance;
use sdf_recon::render::{density_from_sdf, sample_rays, Camera, DensityMode, Ray, SampleSet, SamplerConfig};
use sdf_recon::train::Trainer;
use sdf_recon::Error;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// 1. gradients

const FD_STEP: f64 = 1e-3;
const FD_TOL: f64 = 1e-4;
/// Smaller step reported alongside, to separate truncation from errors.
const DIAG_STEP: f64 = 1e-4;
const PROBES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Term {
    Rgb,
    Eikonal,
    Depth,
    Normal,
}

fn tiny_model(rep: Representation) -> ModelConfig {
    let mut m = ModelConfig {
        view_octaves: 2,
        beta_init: 0.5,
        ..ModelConfig::default()
    };
    let smooth = Activation::Softplus { beta: 1.0 };
    m.color.hidden_width = 16;
    m.color.activation = smooth;
    let f = &mut m.field;
    f.representation = rep;
    f.feature_dim = 4;
    f.pe_octaves = 2;
    f.mlp = MlpSpec {
        hidden_layers: 3,
        hidden_width: 24,
        skip_layers: vec![2],
        activation: Activation::Softplus { beta: 5.0 },
        ..MlpSpec::geometry_default()
    };
    f.decoder.hidden_width = 16;
    f.decoder.activation = Activation::Softplus { beta: 5.0 };
    f.dense_resolution = 4;
    f.dense_feature_resolution = 4;
    f.single_resolution = 8;
    f.single_features = 4;
    f.min_resolution = 4;
    f.max_resolution = 16;
    f.levels = 3;
    f.table_size_log2 = 8;
    f.grid_init_scale = 0.1;
    m
}

struct GradProblem {
    model: Model,
    rays: Vec<Ray>,
    samples: Vec<SampleSet>,
    targets: Vec<RayTarget>,
    term: Term,
}

impl GradProblem {
    fn new(model: Model, store: &ParamStore, term: Term, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rays = Vec::new();
        for eye in [[0.4, 0.5, 2.2], [-2.0, 0.3, -0.9], [0.8, -2.1, 0.2]] {
            let cam = Camera::look_at(eye, [0.0; 3], [0.0, 1.0, 0.0], 16, 16, 40.0);
            let pixels: Vec<[f64; 2]> = (0..12)
                .map(|_| [rng.random_range(3.0..13.0), rng.random_range(3.0..13.0)])
                .collect();
            rays.extend(cam.generate_rays(&pixels).unwrap());
        }
        let bounds: Vec<(f64, f64)> = rays.iter().map(|r| r.domain_bounds().unwrap()).collect();
        let cfg = SamplerConfig {
            coarse: 24,
            fine: 12,
            ..SamplerConfig::default()
        };
        let beta = model.beta(store);
        let samples = sample_rays(
            &rays,
            &bounds,
            &cfg,
            beta,
            model.density_mode,
            |p| Ok(model.field.sdf_values(store, p)),
            |r| ChaCha8Rng::seed_from_u64(seed * 1000 + r as u64),
        )
        .unwrap();
        // keep every L1 residual away from its kink
        let rendered = {
            let mut tape = Tape::new(store);
            let vars = model.record_rays(&mut tape, &rays, &samples, [0.0; 3]);
            tape.value(vars.rendered).clone()
        };
        let margin = 0.05;
        let align = Alignment { w: 0.8, q: 0.15 };
        let targets = (0..rays.len())
            .map(|r| {
                let row = rendered.row(r);
                let away = |v: Vec3, from: Vec3| (0..3).all(|k| (v[k] - from[k]).abs() > margin);
                let mut color: Vec3 = [rng.random(), rng.random(), rng.random()];
                while !away(color, [row[0], row[1], row[2]]) {
                    color = [rng.random(), rng.random(), rng.random()];
                }
                let u = normalize([row[4], row[5], row[6]]);
                let mut n = [0.0; 3];
                while !away(n, u) {
                    n = normalize(std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
                }
                RayTarget {
                    color: (term == Term::Rgb).then_some(color),
                    depth: (term == Term::Depth).then_some((rng.random_range(1.0..3.0), align)),
                    normal: (term == Term::Normal).then_some(n),
                }
            })
            .collect();
        Self {
            model,
            rays,
            samples,
            targets,
            term,
        }
    }

    fn weights(&self) -> LossWeights {
        LossWeights {
            eikonal: 1.0,
            depth: 1.0,
            normal: 1.0,
        }
    }

    /// Loss value and, when asked, the sink holding its gradient.
    fn eval(&self, store: &ParamStore, grad: bool) -> (f64, Option<GradSink>) {
        let mut tape = Tape::new(store);
        let vars = self.model.record_rays(&mut tape, &self.rays, &self.samples, [0.0; 3]);
        let loss = if self.term == Term::Eikonal {
            let v = EikonalOp.forward(tape.value(vars.sdf_grad));
            tape.custom(&[vars.sdf_grad], v, false, Box::new(EikonalOp))
        } else {
            let op = RayLossOp {
                targets: self.targets.clone(),
                weights: self.weights(),
            };
            let v = op.forward(tape.value(vars.rendered));
            let parts = tape.custom(&[vars.rendered], v, false, Box::new(op));
            let sum = WeightedSumOp { coeffs: vec![1.0] };
            let v = sum.forward(&[tape.value(parts)]);
            tape.custom(&[parts], v, false, Box::new(sum))
        };
        let value = tape.scalar(loss);
        let sink = grad.then(|| {
            let mut sink = GradSink::for_store(store);
            tape.backward(loss, &mut sink).unwrap();
            sink
        });
        (value, sink)
    }
}

struct ProbeStats {
    probes: usize,
    /// Worst per-probe relative error at the pinned step and at the
    /// diagnostic step.
    worst: [f64; 2],
    /// `Σ (a - fd)²` and `Σ fd²` at the pinned step.
    sq: [f64; 2],
    failures: Vec<String>,
}

fn rel_err(a: f64, fd: f64) -> f64 {
    (a - fd).abs() / a.abs().max(fd.abs())
}

fn grad_check(rep: Representation, term: Term, seed: u64) -> ProbeStats {
    let (model, mut store) = Model::build(&tiny_model(rep), seed).unwrap();
    let problem = GradProblem::new(model, &store, term, seed);
    let (_, sink) = problem.eval(&store, true);
    store.zero_grads();
    store.accumulate(&sink.unwrap());
    let analytic = store.flat_grads();

    // probe parameters whose derivative stands clear of the difference
    // quotient's roundoff floor
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let live: Vec<usize> = (0..analytic.len()).filter(|&i| analytic[i].abs() > 1e-6).collect();
    assert!(
        live.len() >= PROBES,
        "{rep}/{term:?}: only {} parameters with measurable gradient",
        live.len()
    );
    let picks: Vec<usize> = sample(&mut rng, live.len(), PROBES).into_iter().map(|k| live[k]).collect();

    let mut stats = ProbeStats {
        probes: picks.len(),
        worst: [0.0; 2],
        sq: [0.0; 2],
        failures: Vec::new(),
    };
    for &i in &picks {
        let (g, off) = store.locate(i).unwrap();
        let orig = store.groups()[g].values[off];
        let mut central = |h: f64| {
            store.groups_mut()[g].values[off] = orig + h;
            let lp = problem.eval(&store, false).0;
            store.groups_mut()[g].values[off] = orig - h;
            let lm = problem.eval(&store, false).0;
            store.groups_mut()[g].values[off] = orig;
            (lp - lm) / (2.0 * h)
        };
        let fd = central(FD_STEP);
        let fd_fine = central(DIAG_STEP);
        let a = analytic[i];
        let rel = rel_err(a, fd);
        stats.worst[0] = stats.worst[0].max(rel);
        stats.worst[1] = stats.worst[1].max(rel_err(a, fd_fine));
        stats.sq[0] += (a - fd).powi(2);
        stats.sq[1] += fd * fd;
        if !(rel < FD_TOL) {
            stats.failures.push(format!(
                "{rep}/{term:?} param {i} ({}): analytic {a:.6e} fd {fd:.6e} rel {rel:.2e}",
                store.groups()[g].name
            ));
        }
    }
    stats
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let reps = [
        Representation::DenseGrid,
        Representation::SingleMlp,
        Representation::SingleResGrid,
        Representation::MultiResGrids,
    ];
    let terms = [Term::Rgb, Term::Eikonal, Term::Depth, Term::Normal];
    let mut failures = Vec::new();
    let mut probes = 0;
    let mut worst = [0.0f64; 2];
    let mut worst_norm = 0.0f64;
    for (ri, &rep) in reps.iter().enumerate() {
        for (ti, &term) in terms.iter().enumerate() {
            let s = grad_check(rep, term, 17 + 4 * ri as u64 + ti as u64);
            probes += s.probes;
            worst[0] = worst[0].max(s.worst[0]);
            worst[1] = worst[1].max(s.worst[1]);
            worst_norm = worst_norm.max((s.sq[0] / s.sq[1]).sqrt());
            failures.extend(s.failures);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let summary = format!(
        "{probes} probes over 16 combinations; h={FD_STEP:e}: worst rel {:.2e}, worst norm-wise rel {worst_norm:.2e}; \
         h={DIAG_STEP:e}: worst rel {:.2e}; {secs:.1}s",
        worst[0], worst[1]
    );
    if !failures.is_empty() {
        let shown: Vec<_> = failures.iter().take(3).cloned().collect();
        return Err(format!(
            "{} of {probes} probes above {FD_TOL:e} [{summary}] e.g. {}",
            failures.len(),
            shown.join("; ")
        ));
    }
    check(secs < 120.0, || format!("too slow [{summary}]"))?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// 2. alignment

/// Least squares through a QR factorisation of `[d̂, 1]` (modified
/// Gram-Schmidt), independent of the centred normal equations.
fn qr_least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len();
    let a0: Vec<f64> = x.to_vec();
    let r00 = a0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let q0: Vec<f64> = a0.iter().map(|v| v / r00).collect();
    let r01: f64 = q0.iter().sum();
    let a1: Vec<f64> = (0..n).map(|i| 1.0 - r01 * q0[i]).collect();
    let r11 = a1.iter().map(|v| v * v).sum::<f64>().sqrt();
    let q1: Vec<f64> = a1.iter().map(|v| v / r11).collect();
    let b0: f64 = (0..n).map(|i| q0[i] * y[i]).sum();
    let b1: f64 = (0..n).map(|i| q1[i] * y[i]).sum();
    let q = b1 / r11;
    let w = (b0 - r01 * q) / r00;
    (w, q)
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut planted_err = 0.0f64;
    let mut oracle_err = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(8..200);
        let pred: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..4.0)).collect();
        let (w, q) = (rng.random_range(0.1..3.0), rng.random_range(-1.0..1.0));
        let exact: Vec<f64> = pred.iter().map(|d| w * d + q).collect();
        let a = solve_scale_shift(&pred, &exact).map_err(|e| e.to_string())?;
        planted_err = planted_err.max((a.w - w).abs()).max((a.q - q).abs());

        let noisy: Vec<f64> = exact.iter().map(|c| c + rng.random_range(-0.2..0.2)).collect();
        let a = solve_scale_shift(&pred, &noisy).map_err(|e| e.to_string())?;
        let (wo, qo) = qr_least_squares(&pred, &noisy);
        oracle_err = oracle_err.max((a.w - wo).abs()).max((a.q - qo).abs());
    }
    check(planted_err < 1e-8, || format!("planted error {planted_err:.2e}"))?;
    check(oracle_err < 1e-10, || format!("oracle disagreement {oracle_err:.2e}"))?;
    for (pred, cue) in [(vec![1.7; 10], vec![0.3; 10]), (vec![2.0; 2], vec![0.1, 0.9])] {
        match solve_scale_shift(&pred, &cue) {
            Err(Error::DegenerateBatch(_)) => {}
            other => return Err(format!("constant depths gave {other:?}")),
        }
    }
    Ok(format!(
        "planted error {planted_err:.1e}, oracle disagreement {oracle_err:.1e}, degenerate batch rejected"
    ))
}

// ---------------------------------------------------------------------------
// 3. density and quadrature

fn criterion_3() -> Outcome {
    let mode = DensityMode::Corrected;
    let betas = [1.0, 0.5, 0.1, 1.0 / 3.0, 0.0123, 1e-3];
    let mut jump = 0.0f64;
    for &b in &betas {
        let s0 = density_from_sdf(0.0, b, mode);
        check(s0 == 1.0 / (2.0 * b), || format!("σ(0) = {s0} for β = {b}"))?;
        for eps in [1e-10 * b, 1e-13 * b] {
            jump = jump
                .max((density_from_sdf(eps, b, mode) - s0).abs())
                .max((density_from_sdf(-eps, b, mode) - s0).abs());
        }
        let mut prev = f64::INFINITY;
        for k in 0..=20_000 {
            let s = -1.0 + 2.0 * k as f64 / 20_000.0;
            let v = density_from_sdf(s, b, mode);
            check(v <= prev, || format!("σ increases at s = {s} for β = {b}"))?;
            prev = v;
        }
    }
    check(jump < 1e-6, || format!("jump at 0 is {jump:.2e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut err = 0.0f64;
    for _ in 0..1000 {
        let m = rng.random_range(1..200);
        let sigma: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..50.0)).collect();
        let delta: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..0.05)).collect();
        let (w, _) = weights_and_transmittance(&sigma, &delta);
        let total: f64 = w.iter().sum();
        let keep: f64 = sigma.iter().zip(&delta).map(|(s, d)| 1.0 - (1.0 - (-s * d).exp())).product();
        err = err.max((total - (1.0 - keep)).abs());
    }
    check(err < 1e-12, || format!("Σw mismatch {err:.2e}"))?;
    Ok(format!("σ(0) exact for {} scales, jump {jump:.1e}, Σw error {err:.1e}", betas.len()))
}

// ---------------------------------------------------------------------------
// 4. multi-resolution encoding

fn criterion_4() -> Outcome {
    let sched = resolution_schedule(16, 2048, 16).map_err(|e| e.to_string())?;
    let b = (2048f64 / 16.0).powf(1.0 / 15.0);
    let expected: Vec<usize> = (0..16)
        .map(|l| {
            let r = 16.0 * b.powi(l);
            if (r - r.round()).abs() < 1e-9 * r {
                r.round() as usize
            } else {
                r.floor() as usize
            }
        })
        .collect();
    check(sched == expected, || format!("schedule {sched:?} expected {expected:?}"))?;
    check(sched[0] == 16 && sched[1] == 22 && sched[15] == 2048, || format!("schedule {sched:?}"))?;

    let table = 1usize << 19;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200_000 {
        let cell = [rng.random::<u32>(), rng.random::<u32>(), rng.random::<u32>()];
        let h = spatial_hash(cell, table, HASH_PRIMES);
        check(h < table, || format!("hash {h} out of range for {cell:?}"))?;
    }
    for &corner in &[[0u32; 3], [u32::MAX; 3], [2048, 2048, 2048], [u32::MAX, 0, 7]] {
        let h = spatial_hash(corner, table, HASH_PRIMES);
        check(h < table, || format!("hash {h} out of range for {corner:?}"))?;
    }

    let coef: Vec<[f64; 8]> = (0..2)
        .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
        .collect();
    let poly = |p: [f64; 3], c: &[f64; 8]| {
        let [x, y, z] = p;
        c[0] + c[1] * x + c[2] * y + c[3] * z + c[4] * x * y + c[5] * y * z + c[6] * x * z + c[7] * x * y * z
    };
    let mut store = ParamStore::new();
    let g = store.group("grid", sdf_recon::autodiff::GroupKind::Grid, 1e-2);
    let level = GridLevel::new(&mut store, g, 11, 2, None, |p, ch| poly(p, &coef[ch]));
    let mut err = 0.0f64;
    for _ in 0..10_000 {
        let x: Vec3 = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let v = level.interp(&store, x);
        for ch in 0..2 {
            err = err.max((v[ch] - poly(x, &coef[ch])).abs());
        }
    }
    check(err < 1e-12, || format!("trilinear error {err:.2e}"))?;
    Ok(format!(
        "schedule {}..{} over {} levels, hashes in range, trilinear error {err:.1e}",
        sched[0],
        sched[15],
        sched.len()
    ))
}

// ---------------------------------------------------------------------------
// 5 / 6. reconstruction

const RECON_STEPS: u64 = 5000;

fn recon_config(rep: Representation, cues: bool, iterations: u64) -> RunConfig {
    let mut cfg = RunConfig {
        iterations,
        batch_rays: 128,
        ray_chunk: 64,
        use_depth: cues,
        use_normal: cues,
        ..RunConfig::default()
    };
    cfg.sampler.coarse = 32;
    cfg.sampler.fine = 16;
    let f = &mut cfg.model.field;
    f.representation = rep;
    f.levels = 4;
    f.max_resolution = 64;
    f.table_size_log2 = 14;
    f.decoder.hidden_width = 32;
    f.feature_dim = 16;
    f.mlp = MlpSpec {
        hidden_layers: 4,
        hidden_width: 128,
        skip_layers: vec![2],
        ..MlpSpec::geometry_default()
    };
    cfg.model.color.hidden_width = 64;
    cfg.model.beta_init = 0.02;
    cfg
}

struct ReconResult {
    chamfer_pct: f64,
    fscore: f64,
    secs: f64,
}

fn reconstruct(data_cfg: &GenerateConfig, cfg: RunConfig) -> Result<ReconResult, String> {
    let data = generate_dataset(data_cfg).map_err(|e| e.to_string())?;
    let gt = data.gt_mesh.clone().ok_or("dataset has no reference mesh")?;
    let radius = data.meta.as_ref().ok_or("dataset has no metadata")?.scene_radius;
    let start = Instant::now();
    let mut trainer = Trainer::new(cfg.clone(), data).map_err(|e| e.to_string())?;
    for _ in 0..cfg.iterations {
        trainer.step().map_err(|e| e.to_string())?;
    }
    let secs = start.elapsed().as_secs_f64();
    let mesh = extract_mesh(&trainer.model, &trainer.store, 128).map_err(|e| e.to_string())?;
    let report = evaluate_meshes(&mesh, &gt, EvalParams::default()).map_err(|e| e.to_string())?;
    Ok(ReconResult {
        chamfer_pct: 100.0 * report.chamfer / radius,
        fscore: report.fscore,
        secs,
    })
}

fn scene_data(scene: &str, rig: RigKind) -> GenerateConfig {
    GenerateConfig {
        scene: AnalyticScene::preset(scene).expect("preset scene"),
        rig: RigConfig {
            kind: rig,
            ..RigConfig::default()
        },
        corruption: CorruptionConfig::default(),
        seed: 0,
        background: [0.0; 3],
        gt_resolution: 128,
    }
}

fn describe(tag: &str, r: &ReconResult) -> String {
    format!("{tag} {:.2}% (F {:.3}, {:.0}s)", r.chamfer_pct, r.fscore, r.secs)
}

fn criterion_5() -> Outcome {
    let data = scene_data("sphere_box", RigKind::Orbit);
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for rep in [Representation::MultiResGrids, Representation::SingleMlp] {
        let with = reconstruct(&data, recon_config(rep, true, RECON_STEPS))?;
        let without = reconstruct(&data, recon_config(rep, false, RECON_STEPS))?;
        lines.push(format!("{rep}: {}, {}", describe("cues", &with), describe("rgb", &without)));
        if with.chamfer_pct >= without.chamfer_pct {
            failures.push(format!("{rep}: cues do not reduce Chamfer"));
        }
        if rep == Representation::MultiResGrids {
            if with.chamfer_pct >= 2.0 {
                failures.push(format!("{rep}: Chamfer {:.2}% of radius", with.chamfer_pct));
            }
            if with.secs >= 1800.0 {
                failures.push(format!("{rep}: training took {:.0}s", with.secs));
            }
        }
    }
    let summary = lines.join("; ");
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{} [{}]", failures.join(", "), summary))
    }
}

fn criterion_6() -> Outcome {
    let data = scene_data("sphere", RigKind::Sparse3);
    let with = reconstruct(&data, recon_config(Representation::MultiResGrids, true, RECON_STEPS))?;
    let without = match reconstruct(&data, recon_config(Representation::MultiResGrids, false, RECON_STEPS)) {
        Ok(r) => Some(r),
        // an RGB-only run that collapses to nothing counts as worse
        Err(e) if e.contains("empty mesh") => None,
        Err(e) => return Err(e),
    };
    let summary = match &without {
        Some(w) => format!("{}, {}", describe("cues", &with), describe("rgb", w)),
        None => format!("{}, rgb extracted nothing", describe("cues", &with)),
    };
    check(with.chamfer_pct < 5.0, || format!("cues Chamfer too high [{summary}]"))?;
    if let Some(w) = &without {
        check(with.chamfer_pct < w.chamfer_pct, || format!("cues not better [{summary}]"))?;
    }
    Ok(summary)
}

// ---------------------------------------------------------------------------
// 7. metrics

fn brute_nearest(q: Vec3, cloud: &[Vec3]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, p) in cloud.iter().enumerate() {
        let d = [q[0] - p[0], q[1] - p[1], q[2] - p[2]];
        let d2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        if d2 < best.1 {
            best = (i, d2);
        }
    }
    (best.0, best.1.sqrt())
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> SampledCloud {
    SampledCloud {
        points: (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect(),
        normals: Some(
            (0..n)
                .map(|_| normalize(std::array::from_fn(|_| rng.random_range(-1.0..1.0))))
                .collect(),
        ),
    }
}

fn transform(c: &SampledCloud, rot: &[[f64; 3]; 3], t: Vec3) -> SampledCloud {
    let apply = |v: Vec3| -> Vec3 { std::array::from_fn(|i| dot(rot[i], v)) };
    SampledCloud {
        points: c.points.iter().map(|&p| {
            let r = apply(p);
            [r[0] + t[0], r[1] + t[1], r[2] + t[2]]
        }).collect(),
        normals: c.normals.as_ref().map(|n| n.iter().map(|&v| apply(v)).collect()),
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    let a = normalize(std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
    let b0: Vec3 = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
    let d = dot(a, b0);
    let b = normalize([b0[0] - d * a[0], b0[1] - d * a[1], b0[2] - d * a[2]]);
    let c = sdf_recon::math::cross(a, b);
    [a, b, c]
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tau = 0.1;
    for trial in 0..5 {
        let pred = random_cloud(&mut rng, 200);
        let gt = random_cloud(&mut rng, 200);
        let m = chamfer_suite(&pred, &gt, tau).map_err(|e| e.to_string())?;
        let nc = normal_consistency(&pred, &gt).map_err(|e| e.to_string())?;

        let to_gt: Vec<(usize, f64)> = pred.points.iter().map(|&p| brute_nearest(p, &gt.points)).collect();
        let to_pred: Vec<(usize, f64)> = gt.points.iter().map(|&p| brute_nearest(p, &pred.points)).collect();
        let acc = to_gt.iter().map(|x| x.1).sum::<f64>() / 200.0;
        let comp = to_pred.iter().map(|x| x.1).sum::<f64>() / 200.0;
        let prec = to_gt.iter().filter(|x| x.1 < tau).count() as f64 / 200.0;
        let rec = to_pred.iter().filter(|x| x.1 < tau).count() as f64 / 200.0;
        let f = if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 };
        let (np, ng) = (pred.normals.as_ref().unwrap(), gt.normals.as_ref().unwrap());
        let a = to_gt.iter().enumerate().map(|(i, x)| dot(np[i], ng[x.0]).abs()).sum::<f64>() / 200.0;
        let b = to_pred.iter().enumerate().map(|(i, x)| dot(ng[i], np[x.0]).abs()).sum::<f64>() / 200.0;
        let brute = [acc, comp, 0.5 * (acc + comp), prec, rec, f, 0.5 * (a + b)];
        let fast = [m.accuracy, m.completeness, m.chamfer, m.precision, m.recall, m.fscore, nc];
        check(brute == fast, || format!("trial {trial}: brute {brute:?} vs {fast:?}"))?;

        let mut prev = -1.0;
        for k in 1..=60 {
            let t = 0.01 * k as f64;
            let fs = chamfer_suite(&pred, &gt, t).map_err(|e| e.to_string())?.fscore;
            check(fs >= prev, || format!("F decreases at τ = {t}"))?;
            prev = fs;
        }

        let rot = random_rotation(&mut rng);
        let shift: Vec3 = std::array::from_fn(|_| rng.random_range(-5.0..5.0));
        let (tp, tg) = (transform(&pred, &rot, shift), transform(&gt, &rot, shift));
        let mt = chamfer_suite(&tp, &tg, tau).map_err(|e| e.to_string())?;
        let nct = normal_consistency(&tp, &tg).map_err(|e| e.to_string())?;
        let moved = [mt.accuracy, mt.completeness, mt.chamfer, mt.precision, mt.recall, mt.fscore, nct];
        let dev = fast.iter().zip(&moved).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        check(dev < 1e-9, || format!("trial {trial}: rigid transform changed metrics by {dev:.2e}"))?;
    }
    Ok("brute-force agreement exact on 5 pairs of 200-point clouds, F monotone, rigid invariance < 1e-9".into())
}

// ---------------------------------------------------------------------------
// 8. extraction

fn criterion_8() -> Outcome {
    let res = 64;
    let mesh = marching_cubes_fn(|p| norm(p) - 0.5, res, 0.0).map_err(|e| e.to_string())?;
    check(mesh.is_watertight(), || "sphere mesh is not watertight".into())?;
    let bound = 1.5 * 3f64.sqrt() * (2.0 / res as f64);
    let err = mesh.vertices.iter().map(|&v| (norm(v) - 0.5).abs()).fold(0.0, f64::max);
    check(err < bound, || format!("max radius error {err:.3e} ≥ {bound:.3e}"))?;
    Ok(format!(
        "{} vertices, watertight, max radius error {err:.2e} (bound {bound:.2e})",
        mesh.vertices.len()
    ))
}

// ---------------------------------------------------------------------------
// 9. determinism

fn pipeline(root: &Path) -> Result<Vec<u8>, String> {
    let data_dir = root.join("data");
    let run_dir = root.join("run");
    let mut gen = scene_data("sphere_box", RigKind::Orbit);
    gen.seed = 9;
    cmd_generate(&gen, &data_dir).map_err(|e| e.to_string())?;
    let mut cfg = recon_config(Representation::MultiResGrids, true, 500);
    cfg.seed = 9;
    cfg.dataset = data_dir.clone();
    cfg.output = run_dir.clone();
    cfg.checkpoint_every = 250;
    cmd_train(&cfg, false).map_err(|e| e.to_string())?;
    let mesh = root.join("mesh.ply");
    cmd_extract(&run_dir.join("checkpoint.bin"), 128, &mesh).map_err(|e| e.to_string())?;
    let metrics = root.join("metrics.json");
    cmd_eval(
        &mesh,
        &sdf_recon::commands::gt_mesh_of(&data_dir),
        EvalParams::default(),
        Some(&metrics),
    )
    .map_err(|e| e.to_string())?;
    std::fs::read(&metrics).map_err(|e| e.to_string())
}

fn criterion_9() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ja = pipeline(a.path())?;
    let jb = pipeline(b.path())?;
    check(ja == jb, || {
        format!(
            "metrics differ:\n{}\n{}",
            String::from_utf8_lossy(&ja),
            String::from_utf8_lossy(&jb)
        )
    })?;
    Ok(format!("identical metrics JSON ({} bytes)", ja.len()))
}

// ---------------------------------------------------------------------------

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "gradient oracle", criterion_1),
        (2, "closed-form alignment", criterion_2),
        (3, "density transform", criterion_3),
        (4, "multi-resolution encoding", criterion_4),
        (5, "synthetic reconstruction", criterion_5),
        (6, "sparse views", criterion_6),
        (7, "metrics", criterion_7),
        (8, "extraction", criterion_8),
        (9, "determinism", criterion_9),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id} ({name}): PASS [{secs:.1}s] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id} ({name}): FAIL [{secs:.1}s] {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
