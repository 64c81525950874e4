//! One check per acceptance criterion. Each panics with a diagnostic on
//! failure and returns a one-line summary on success.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use gaitsada_core::augment::{apply_augmentation, augment, draw_augmentation, AugPolicy, Orientation};
use gaitsada_core::config::ExperimentConfig;
use gaitsada_core::dataset::{read_dataset, write_dataset, Manifest};
use gaitsada_core::dsp::{PipelineConfig, SpectrogramPipeline};
use gaitsada_core::eval::{evaluate, grad_cam, median, run_ablation, AblationOutcome, AblationRow};
use gaitsada_core::experiment::{simulate_into, simulate_samples, RunDir};
use gaitsada_core::model::{EncoderSpec, ModelState};
use gaitsada_core::rng::stream;
use gaitsada_core::sim::{make_domain_env, synth_roster, DomainPreset, RosterConfig, Walk, WalkConfig};
use gaitsada_core::sim::{simulate_walk, Direction, RadarConfig};
use gaitsada_core::train::{
    am_softmax_loss, batch_centroids, centroid_loss, consistency_loss, predict_probs, run_stage, similarity_loss, stage1_loss,
    stage2_loss, stage2_prepare, train_stage1, train_stage2, CentroidBank, LossRecipe, PseudoLabelBatch, Stage1Batch, Stage2Batch,
    StageRun, TrainConfig,
};
use rand::Rng;

use super::oracles;
use super::toy::{features, max_centroid_cosine, mean_pairwise_cosine, toy_dataset, Shift};

fn random_matrix<R: Rng>(r: &mut R, rows: usize, cols: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    (0..rows).map(|_| (0..cols).map(|_| r.random_range(lo..=hi)).collect()).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Every loss against its direct-formula oracle on `cases` random inputs.
pub fn loss_oracles(cases: usize) -> String {
    let start = Instant::now();
    let mut r = stream(77, &[]);
    let names = ["am-softmax", "similarity", "predict", "consistency", "centroids+ema", "centroid loss"];
    let mut worst = [0.0f64; 6];
    let mut mask_mismatches = 0;
    let mut centroid_terms = 0;
    for _ in 0..cases {
        let b = r.random_range(1..=8);
        let classes = r.random_range(2..=6);
        let dim = r.random_range(2..=10);
        let s = r.random_range(1.0..30.0);
        let m = r.random_range(0.0..0.5);

        let cosines = random_matrix(&mut r, b, classes, -1.0, 1.0);
        let labels: Vec<usize> = (0..b).map(|_| r.random_range(0..classes)).collect();
        let err = (am_softmax_loss(&cosines, &labels, s, m) - oracles::am_softmax(&cosines, &labels, s, m)).abs();
        worst[0] = worst[0].max(err);

        let f = random_matrix(&mut r, b, dim, -2.0, 2.0);
        let f_hat = random_matrix(&mut r, b, dim, -2.0, 2.0);
        worst[1] = worst[1].max((similarity_loss(&f, &f_hat) - oracles::similarity(&f, &f_hat)).abs());

        for (p, row) in predict_probs(&cosines, s).iter().zip(&cosines) {
            worst[2] = worst[2].max(max_abs_diff(p, &oracles::predict(row, s)));
        }

        let tau = r.random_range(0.3..0.99);
        let q: Vec<Vec<f64>> = random_matrix(&mut r, b, classes, -1.0, 1.0)
            .iter()
            .map(|row| oracles::predict(row, r.random_range(1.0..30.0)))
            .collect();
        let q_hat: Vec<Vec<f64>> = random_matrix(&mut r, b, classes, -1.0, 1.0)
            .iter()
            .map(|row| oracles::predict(row, r.random_range(1.0..5.0)))
            .collect();
        let pseudo = PseudoLabelBatch::new(q.clone(), tau);
        mask_mismatches += pseudo.mask.iter().zip(&q).filter(|(m, row)| **m != row.iter().any(|&v| v >= tau)).count();
        worst[3] = worst[3].max((consistency_loss(&pseudo, &q_hat) - oracles::consistency(&q, &q_hat, tau)).abs());

        // two EMA steps from an empty bank, then the centroid loss on the result
        let alpha = r.random_range(0.01..=1.0);
        let mut bank = CentroidBank::new(classes, dim);
        let mut expected: Vec<Option<Vec<f64>>> = vec![None; classes];
        for _ in 0..2 {
            let n_src = r.random_range(0..=b);
            let src = random_matrix(&mut r, n_src, dim, -1.0, 1.0);
            let src_labels: Vec<usize> = (0..n_src).map(|_| r.random_range(0..classes)).collect();
            let tgt = random_matrix(&mut r, b, dim, -1.0, 1.0);
            let batch = batch_centroids(&src, &src_labels, &tgt, &pseudo, classes, dim);
            let means = oracles::class_means(&src, &src_labels, &tgt, &q, tau, classes);
            for c in 0..classes {
                assert_eq!(batch.is_present(c), means[c].is_some(), "presence of class {c}");
                if let Some(mean) = &means[c] {
                    worst[4] = worst[4].max(max_abs_diff(&batch.z[c], mean));
                    expected[c] = Some(oracles::ema(expected[c].as_deref(), mean, alpha));
                }
            }
            bank.ema_update(&batch, alpha);
        }
        for c in 0..classes {
            assert_eq!(bank.initialized[c], expected[c].is_some());
            if let Some(z) = &expected[c] {
                worst[4] = worst[4].max(max_abs_diff(&bank.z[c], z));
            }
        }
        let w = random_matrix(&mut r, classes, dim, -1.0, 1.0);
        let flat: Vec<f64> = w.iter().flatten().copied().collect();
        let oracle = oracles::centroid(&w, &expected, s, m);
        if oracle != 0.0 {
            centroid_terms += 1;
        }
        worst[5] = worst[5].max((centroid_loss(&flat, classes, dim, &bank, s, m) - oracle).abs());
    }
    let elapsed = start.elapsed();
    assert_eq!(mask_mismatches, 0, "confidence mask disagrees with the oracle");
    assert!(centroid_terms > cases / 2, "too few cases exercised the centroid loss");
    for (name, err) in names.iter().zip(worst) {
        assert!(err <= 1e-6, "{name}: max abs error {err:e}");
    }
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    let detail: Vec<String> = names.iter().zip(worst).map(|(n, e)| format!("{n} {e:.1e}")).collect();
    format!("{cases} cases, max abs error: {} ({:.2}s)", detail.join(", "), elapsed.as_secs_f64())
}

fn random_images<R: Rng>(r: &mut R, n: usize, len: usize) -> Vec<Vec<f64>> {
    random_matrix(r, n, len, 0.0, 1.0)
}

fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
    v.iter().map(|x| x.as_slice()).collect()
}

/// Central differences on `coords` random parameters; returns the worst relative error.
fn check_gradient(model: &ModelState, analytic: &[f64], coords: usize, seed: u64, loss: impl Fn(&ModelState) -> f64) -> f64 {
    const H: f64 = 1e-5;
    let mut r = stream(seed, &[]);
    let mut picked = HashSet::new();
    while picked.len() < coords {
        picked.insert(r.random_range(0..model.params.len()));
    }
    let mut picked: Vec<usize> = picked.into_iter().collect();
    picked.sort_unstable();
    let mut worst: f64 = 0.0;
    for i in picked {
        let mut plus = model.clone();
        plus.params[i] += H;
        let mut minus = model.clone();
        minus.params[i] -= H;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * H);
        let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-6);
        assert!(rel <= 1e-3, "parameter {i}: analytic {} numeric {numeric} rel {rel:e}", analytic[i]);
        worst = worst.max(rel);
    }
    worst
}

/// Analytic stage-1 and stage-2 gradients against finite differences on a reduced encoder.
pub fn gradient_suite() -> String {
    let start = Instant::now();
    let model = ModelState::new(EncoderSpec::tiny(8, 8), 3, 5).unwrap();
    let cfg = TrainConfig::default();
    let mut r = stream(8, &[]);

    let source = random_images(&mut r, 3, 64);
    let mixed_raw = random_images(&mut r, 4, 64);
    let mixed_aug = random_images(&mut r, 4, 64);
    let batch1 = Stage1Batch {
        source_aug: refs(&source),
        labels: vec![0, 1, 2],
        mixed_raw: refs(&mixed_raw),
        mixed_aug: refs(&mixed_aug),
    };
    let (breakdown, grad) = stage1_loss(&model, &cfg, &batch1).unwrap();
    assert!(breakdown.supervised > 0.0 && breakdown.similarity != 0.0);
    let worst1 = check_gradient(&model, &grad, 20, 1, |m| stage1_loss(m, &cfg, &batch1).unwrap().0.total);

    let cfg2 = TrainConfig { tau: 0.34, ..cfg.clone() };
    let target_raw = random_images(&mut r, 4, 64);
    let target_aug = random_images(&mut r, 4, 64);
    let batch2 = Stage2Batch {
        source_raw: refs(&source),
        labels: vec![0, 1, 2],
        target_raw: refs(&target_raw),
        target_aug: refs(&target_aug),
    };
    let mut bank = CentroidBank::new(3, model.embedding_dim());
    for c in 0..3 {
        bank.z[c] = (0..model.embedding_dim()).map(|_| r.random_range(-1.0..1.0)).collect();
        bank.initialized[c] = true;
    }
    let frozen = stage2_prepare(&model, &cfg2, &batch2, &bank).unwrap();
    assert!(frozen.pseudo.passing() > 0, "no pseudo-label passed the threshold");
    let (breakdown, grad) = stage2_loss(&model, &cfg2, &batch2, &frozen).unwrap();
    assert!(breakdown.consistency > 0.0 && breakdown.centroid > 0.0);
    let worst2 = check_gradient(&model, &grad, 20, 2, |m| stage2_loss(m, &cfg2, &batch2, &frozen).unwrap().0.total);
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    format!(
        "20 coordinates each, max relative error stage 1 {worst1:.1e}, stage 2 {worst2:.1e} ({:.2}s)",
        elapsed.as_secs_f64()
    )
}

/// Branch frequencies and parameter ranges of the augmentation policy.
pub fn augmentation_statistics(policy: &AugPolicy, draws: usize) -> String {
    let mut r = stream(31, &[]);
    let (rows, cols) = (32, 32);
    let mut stripe_counts = [0usize; 3];
    let mut stripes = 0usize;
    let mut noisy = 0usize;
    let mut thicknesses = HashSet::new();
    for _ in 0..draws {
        let d = draw_augmentation(policy, rows, cols, &mut r);
        assert_eq!(d.stripes.len(), 2);
        for s in &d.stripes {
            stripes += 1;
            match s.orientation {
                Some(Orientation::Horizontal) => stripe_counts[0] += 1,
                Some(Orientation::Vertical) => stripe_counts[1] += 1,
                None => stripe_counts[2] += 1,
            }
            assert!((2..=8).contains(&s.thickness), "thickness {}", s.thickness);
            thicknesses.insert(s.thickness);
            let extent = if s.orientation == Some(Orientation::Horizontal) { rows } else { cols };
            assert!(s.start + s.thickness <= extent);
        }
        noisy += d.noise_seed.is_some() as usize;
        assert!((0.8..=1.2).contains(&d.scale), "zoom {}", d.scale);
        assert!((0.0..=5.0).contains(&d.shear_deg), "shear {}", d.shear_deg);
        assert!((-5.0..=5.0).contains(&d.rotation_deg), "rotation {}", d.rotation_deg);
    }
    assert_eq!(thicknesses.len(), 7, "every thickness in 2..=8 should occur");
    let freq: Vec<f64> = stripe_counts.iter().map(|&c| c as f64 / stripes as f64).collect();
    for (label, f) in ["horizontal", "vertical", "none"].iter().zip(&freq) {
        assert!((f - 1.0 / 3.0).abs() <= 0.02, "{label} cutout frequency {f}");
    }
    let noise = noisy as f64 / draws as f64;
    assert!((noise - 2.0 / 3.0).abs() <= 0.02, "white-noise frequency {noise}");
    format!(
        "{draws} draws: cutout h/v/none {:.3}/{:.3}/{:.3}, noise {noise:.3}, all parameters in range",
        freq[0], freq[1], freq[2]
    )
}

/// Similarity-only training collapses; joint stage-1 training does not.
pub fn collapse_sentinel() -> String {
    let ds = toy_dataset(2, 16, 16, Shift { gain: 0.8, floor: 0.1 }, 10);
    let images: Vec<_> = ds
        .labeled_source
        .iter()
        .map(|s| &s.image)
        .chain(ds.unlabeled_target.iter().map(|u| u.image()))
        .collect();
    let labels: Vec<usize> = ds.labeled_source.iter().map(|s| s.subject).chain(ds.test.iter().map(|s| s.subject)).collect();
    let cfg = TrainConfig {
        batch_size: 16,
        ..TrainConfig::default()
    };
    let train = |recipe: LossRecipe| {
        let mut model = ModelState::new(EncoderSpec::desk(16, 16, 1), 2, 0).unwrap();
        let run = StageRun {
            stage: 1,
            epochs: 30,
            recipe,
            track_test: false,
        };
        run_stage(&mut model, &ds, &AugPolicy::desk(), &cfg, &run).unwrap();
        features(&model, &images)
    };
    let collapsed = mean_pairwise_cosine(&train(LossRecipe::similarity_only()));
    let joint = max_centroid_cosine(&train(LossRecipe::stage1()), &labels, 2);
    assert!(collapsed > 0.99, "similarity-only mean pairwise cosine {collapsed}");
    assert!(joint < 0.9, "joint inter-class centroid cosine {joint}");
    format!("similarity-only mean pairwise cosine {collapsed:.4}, joint inter-class centroid cosine {joint:.4}")
}

/// The desk benchmark's ablation rows for the direction and curriculum criteria.
pub struct Benchmark {
    pub outcome: AblationOutcome,
    pub elapsed: Duration,
    pub column: String,
}

pub const BENCH_ROWS: [AblationRow; 3] = [AblationRow::SupervisedAm, AblationRow::Contrastive, AblationRow::Full];

pub fn run_benchmark(root: &std::path::Path) -> Benchmark {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::default();
    cfg.output_root = root.to_path_buf();
    cfg.ablation.rows = BENCH_ROWS.to_vec();
    cfg.ablation.seeds = vec![0, 1, 2];
    let run = RunDir::create(root, &cfg).unwrap();
    simulate_into(&run, &cfg).unwrap();
    let outcome = run_ablation(&cfg, root, &root.join("ablation")).unwrap();
    let column = outcome.table.columns[0].clone();
    Benchmark {
        outcome,
        elapsed: start.elapsed(),
        column,
    }
}

pub fn direction(bench: &Benchmark) -> String {
    let t = &bench.outcome.table;
    let med = |row: AblationRow| t.median(t.row_index(row.label()).unwrap(), 0);
    let (sup, s1, full) = (med(AblationRow::SupervisedAm), med(AblationRow::Contrastive), med(AblationRow::Full));
    let secs = bench.elapsed.as_secs_f64();
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let summary = format!(
        "median target acc supervised {sup:.2} < stage-1 {s1:.2} < full {full:.2} (gain {:.2} pp); {secs:.0}s on {cores} core(s)",
        full - sup
    );
    assert!(sup < s1 && s1 < full, "ordering violated: {summary}");
    assert!(full - sup >= 5.0, "full gain below 5 pp: {summary}");
    assert!(secs <= 900.0, "over the 15 minute budget: {summary}");
    summary
}

/// Block means over consecutive `width`-epoch windows.
pub fn block_means(v: &[f64], width: usize) -> Vec<f64> {
    v.chunks(width).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
}

pub fn curriculum(bench: &Benchmark) -> String {
    let per_seed: Vec<Vec<f64>> = [0u64, 1, 2]
        .iter()
        .map(|&seed| {
            let cell = bench.outcome.cell(AblationRow::Full, &bench.column, seed).unwrap();
            cell.report.records.iter().filter(|r| r.stage == 2).map(|r| r.mask_rate).collect()
        })
        .collect();
    let epochs = per_seed[0].len();
    assert!(epochs > 0 && per_seed.iter().all(|s| s.len() == epochs));
    let med: Vec<f64> = (0..epochs).map(|e| median(&per_seed.iter().map(|s| s[e]).collect::<Vec<_>>())).collect();
    let smooth = block_means(&med, 5);
    let shown: Vec<String> = smooth.iter().map(|v| format!("{v:.3}")).collect();
    let summary = format!("5-epoch mask-rate means [{}]", shown.join(", "));
    for w in smooth.windows(2) {
        assert!(w[1] >= w[0], "mask rate decreased: {summary}");
    }
    summary
}

fn bits32(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn tiny_experiment() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.roster = RosterConfig {
        subjects: 2,
        ..RosterConfig::default()
    };
    cfg.days = 2;
    cfg.source_days = None;
    cfg.walk = WalkConfig {
        samples_per_direction: 1,
        ..WalkConfig::default()
    };
    cfg
}

/// Re-runs every stage from identical inputs, across thread counts, and
/// compares bit patterns.
pub fn determinism() -> String {
    let mut stages = Vec::new();

    let radar = RadarConfig::default();
    let roster = synth_roster(4, &RosterConfig::default()).unwrap();
    assert_eq!(roster, synth_roster(4, &RosterConfig::default()).unwrap());
    let env = make_domain_env(DomainPreset::Office, 2);
    let (profile, walk) = Walk::draw(&WalkConfig::default(), &roster[1], 4, &env, 2, Direction::Away, 0);
    let a = simulate_walk(&profile, &env, &radar, &walk).unwrap();
    let b = simulate_walk(&profile, &env, &radar, &walk).unwrap();
    assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits()));
    stages.push("sim");

    let pipeline = SpectrogramPipeline::new(PipelineConfig::default());
    assert_eq!(bits32(&pipeline.process(&a).unwrap().pixels), bits32(&pipeline.process(&b).unwrap().pixels));
    stages.push("dsp");

    let cfg = tiny_experiment();
    let one = in_pool(1, || simulate_samples(&cfg).unwrap());
    let three = in_pool(3, || simulate_samples(&cfg).unwrap());
    assert_eq!(one.len(), three.len());
    assert!(one.iter().zip(&three).all(|(x, y)| bits32(&x.pixels) == bits32(&y.pixels) && x.meta == y.meta));
    let dir = tempfile::tempdir().unwrap();
    let m1 = write_dataset(&one, &dir.path().join("a")).unwrap();
    let m2 = write_dataset(&three, &dir.path().join("b")).unwrap();
    assert_eq!(m1, m2);
    for e in &m1.entries {
        let x = std::fs::read(dir.path().join("a").join(&e.path)).unwrap();
        assert_eq!(x, std::fs::read(dir.path().join("b").join(&e.path)).unwrap());
    }
    let back = read_dataset(&Manifest::load(&dir.path().join("a")).unwrap(), &dir.path().join("a")).unwrap();
    assert!(back.iter().zip(&one).all(|(x, y)| bits32(&x.pixels) == bits32(&y.pixels)));
    stages.push("dataset");

    let policy = AugPolicy::default();
    let x = augment(&one[0], &policy, &mut stream(5, &[1]));
    let y = augment(&one[0], &policy, &mut stream(5, &[1]));
    assert_eq!(bits32(&x.pixels), bits32(&y.pixels));
    let draws = draw_augmentation(&policy, one[0].rows, one[0].cols, &mut stream(5, &[1]));
    assert_eq!(bits32(&apply_augmentation(&one[0], &draws, &policy).pixels), bits32(&x.pixels));
    stages.push("augment");

    let ds = toy_dataset(3, 8, 16, Shift { gain: 0.8, floor: 0.1 }, 2);
    let tc = TrainConfig {
        batch_size: 8,
        epochs_stage1: 3,
        epochs_stage2: 3,
        seed: 9,
        ..TrainConfig::default()
    };
    let spec = EncoderSpec::desk(16, 16, 1);
    let both = |threads: usize| {
        in_pool(threads, || {
            let (m1, r1) = train_stage1(spec.clone(), &ds, &AugPolicy::desk(), &tc).unwrap();
            let (m2, r2) = train_stage2(Some(m1.clone()), &ds, &AugPolicy::desk(), &tc).unwrap();
            (m1, r1, m2, r2)
        })
    };
    let (s1a, r1a, s2a, r2a) = both(1);
    let (s1b, r1b, s2b, r2b) = both(3);
    let param_bits = |m: &ModelState| m.params.iter().map(|p| p.to_bits()).collect::<Vec<_>>();
    assert_eq!(param_bits(&s1a), param_bits(&s1b));
    assert_eq!(r1a, r1b);
    stages.push("stage 1");
    assert_eq!(param_bits(&s2a), param_bits(&s2b));
    assert_eq!(r2a, r2b);
    stages.push("stage 2");

    assert_eq!(evaluate(&s2a, &ds).unwrap().to_bits(), evaluate(&s2b, &ds).unwrap().to_bits());
    let ga = grad_cam(&s2a, &ds.test[0].image, 0).unwrap();
    let gb = grad_cam(&s2b, &ds.test[0].image, 0).unwrap();
    assert_eq!(ga, gb);
    stages.push("eval");

    format!("bit-identical across reruns and 1 vs 3 threads: {}", stages.join(", "))
}
