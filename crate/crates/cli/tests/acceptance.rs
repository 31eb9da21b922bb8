//! Acceptance gate. Runs every criterion, prints one line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use pbim_core::filterbank::{
    convolve, gabor_weights_raw, hermite, make_gabor_kernel, Backend, BackendPolicy, FilterBank,
    GaborBankSpec, GaborParams, Kernel, OghmBankSpec,
};
use pbim_core::hmax::{c1_layers, c2_features, BandSpec, MatchConfig, Patch};
use pbim_core::keypoints::{fast_detect, Corner, CIRCLE};
use pbim_core::learneval::{metrics, roc, ConfusionCounts, ExperimentConfig};
use pbim_core::patchselect::{analyze, select_random_from, SelectorConfig, SourceImage};
use pbim_core::saliency::{salient_region, spectral_residual, SaliencyMap};
use pbim_core::synth::{glyph_scene, write_dataset, SceneConfig};
use pbim_core::{
    processing_layers, run_experiment, FeatureConfig, FeatureExtractor, GrayImage, Plane,
    SelectorKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Plane {
    Plane::from_fn(w, h, |_, _| rng.random_range(0.0..1.0))
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Direct summation with reflected borders, written independently of the library.
fn oracle_correlate(img: &Plane, k: &Kernel) -> Plane {
    let (rx, ry) = (k.width() as isize / 2, k.height() as isize / 2);
    Plane::from_fn(img.width(), img.height(), |x, y| {
        let mut acc = 0.0;
        for v in 0..k.height() {
            for u in 0..k.width() {
                let sx = reflect(x as isize + u as isize - rx, img.width());
                let sy = reflect(y as isize + v as isize - ry, img.height());
                acc += k.get(u, v) * img.get(sx, sy);
            }
        }
        acc
    })
}

fn max_abs_diff(a: &Plane, b: &Plane) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst_spectral = 0.0f64;
    let mut worst_direct = 0.0f64;
    for _ in 0..50 {
        let kw = 2 * rng.random_range(1..=18) + 1;
        let kh = 2 * rng.random_range(1..=18) + 1;
        let w = rng.random_range(kw + 1..=64);
        let h = rng.random_range(kh + 1..=64);
        let img = random_image(&mut rng, w, h);
        let weights = (0..kw * kh).map(|_| rng.random_range(-1.0..1.0)).collect();
        let k = Kernel::new(kw, kh, weights).unwrap();
        let oracle = oracle_correlate(&img, &k);
        let direct = convolve(&img, &k, Backend::Direct).unwrap();
        let spectral = convolve(&img, &k, Backend::Spectral).unwrap();
        worst_direct = worst_direct.max(max_abs_diff(&direct, &oracle));
        worst_spectral = worst_spectral.max(max_abs_diff(&spectral, &direct));
    }
    let elapsed = start.elapsed();
    outcome(
        worst_spectral <= 1e-6 && worst_direct <= 1e-6 && elapsed < Duration::from_secs(10),
        format!(
            "max |direct - spectral| = {worst_spectral:.2e}, max |direct - oracle| = {worst_direct:.2e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn hermite_oracle(n: u32, x: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0 * x,
        2 => 4.0 * x * x - 2.0,
        3 => 8.0 * x.powi(3) - 12.0 * x,
        4 => 16.0 * x.powi(4) - 48.0 * x * x + 12.0,
        5 => 32.0 * x.powi(5) - 160.0 * x.powi(3) + 120.0 * x,
        _ => unreachable!(),
    }
}

fn criterion_2() -> Outcome {
    let bank = FilterBank::gabor(&GaborBankSpec::default(), BackendPolicy::Direct).unwrap();
    let mut worst_mean = 0.0f64;
    let mut worst_norm = 0.0f64;
    for k in bank.kernels() {
        worst_mean = worst_mean.max(k.mean().abs());
        worst_norm = worst_norm.max((k.l2_norm() - 1.0).abs());
    }
    let count = bank.kernels().len();

    let spec = GaborBankSpec::default();
    let mut periodic_exact = true;
    let mut raw_diff = 0.0f64;
    for &size in &spec.sizes {
        let sigma = spec.sigma_for(size);
        let lambda = sigma / spec.lambda_ratio;
        for &deg in &spec.orientations {
            let th = deg.to_radians();
            let a = make_gabor_kernel(&GaborParams::new(th, lambda, sigma, spec.gamma, size).unwrap()).unwrap();
            let b = make_gabor_kernel(
                &GaborParams::new(th + std::f64::consts::PI, lambda, sigma, spec.gamma, size).unwrap(),
            )
            .unwrap();
            periodic_exact &= a.weights() == b.weights();
            let ra = gabor_weights_raw(th, lambda, sigma, spec.gamma, size);
            let rb = gabor_weights_raw(th + std::f64::consts::PI, lambda, sigma, spec.gamma, size);
            for (x, y) in ra.iter().zip(&rb) {
                raw_diff = raw_diff.max((x - y).abs());
            }
        }
    }

    let oghm = FilterBank::oghm(&OghmBankSpec::default(), BackendPolicy::Direct).unwrap();
    let mut parity = 0.0f64;
    for k in oghm.kernels() {
        let (w, h) = (k.width(), k.height());
        let total: f64 = k.weights().iter().sum();
        parity = parity.max(total.abs());
        for v in 0..h {
            for u in 0..w {
                parity = parity.max((k.get(u, v) + k.get(w - 1 - u, h - 1 - v)).abs());
            }
        }
    }
    // theta = 0 kernels: odd along x in every row
    let mut row_sums = 0.0f64;
    for s in 0..16 {
        let k = oghm.kernel(s, 0);
        for v in 0..k.height() {
            let sum: f64 = (0..k.width()).map(|u| k.get(u, v)).sum();
            row_sums = row_sums.max(sum.abs());
        }
    }

    let mut hermite_exact = true;
    for n in 0..=5 {
        for x in [0.0, 1.0, -1.0, 2.0, -2.0] {
            hermite_exact &= hermite(n, x) == hermite_oracle(n, x);
        }
    }
    let pass = count == 64
        && worst_mean <= 1e-10
        && worst_norm <= 1e-10
        && periodic_exact
        && raw_diff <= 1e-10
        && parity <= 1e-10
        && row_sums <= 1e-10
        && hermite_exact;
    outcome(
        pass,
        format!(
            "{count} Gabor kernels, max |mean| {worst_mean:.1e}, max |norm-1| {worst_norm:.1e}; theta+pi exact {periodic_exact} (raw diff {raw_diff:.1e}); OGHM parity {:.1e}; Hermite exact {hermite_exact}",
            parity.max(row_sums)
        ),
    )
}

fn criterion_3() -> Outcome {
    let spec = OghmBankSpec::default();
    let cfg = SceneConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let smooth = {
        let noise = random_image(&mut rng, 64, 64);
        let k = Kernel::new(5, 5, vec![1.0 / 25.0; 25]).unwrap();
        GrayImage::from_plane_clamped(convolve(&noise, &k, Backend::Direct).unwrap())
    };
    let images = vec![
        glyph_scene(31, &cfg).unwrap().image,
        glyph_scene(32, &cfg).unwrap().image,
        smooth,
    ];
    let margin = spec.sizes.iter().max().unwrap() / 2;
    let mut worst = 0.0f64;
    for img in &images {
        let base = processing_layers(img, &spec).unwrap();
        let rotated = processing_layers(&img.rotate90(), &spec).unwrap();
        let n_or = base.num_orientations();
        for s in 0..base.num_scales() {
            for o in 0..n_or {
                let got = rotated.map(s, o);
                let want = base.map(s, (o + n_or / 2) % n_or).rotate90();
                let mut diff = 0.0f64;
                let mut scale = 0.0f64;
                for y in margin..got.height() - margin {
                    for x in margin..got.width() - margin {
                        diff = diff.max((got.get(x, y) - want.get(x, y)).abs());
                        scale = scale.max(want.get(x, y).abs());
                    }
                }
                if scale > 0.0 {
                    worst = worst.max(diff / scale);
                }
            }
        }
    }
    outcome(
        worst <= 1e-3,
        format!("3 images, max interior relative error {worst:.2e}"),
    )
}

fn criterion_4() -> Outcome {
    let fx = FeatureExtractor::new(FeatureConfig::default()).unwrap();
    let cfg = SceneConfig::default();
    let bands = BandSpec::default();
    let matching = MatchConfig::default();

    // Planted patch.
    let donor = fx.c1(&glyph_scene(41, &cfg).unwrap().image).unwrap();
    let mut host = fx.c1(&glyph_scene(42, &cfg).unwrap().image).unwrap();
    let patch = Patch::extract(&donor, 0, 3, 2, 4, "donor".into(), pbim_core::OriginKind::Random).unwrap();
    host.write_window(1, 2, 1, 4, &patch.values).unwrap();
    let dict = pbim_core::PatchDictionary::new(vec![patch], SelectorKind::Random, 0, "t".into()).unwrap();
    let planted = c2_features(&host, &dict, &matching).unwrap().values[0];

    // Brute-force pooling.
    let img = glyph_scene(43, &cfg).unwrap().image;
    let s1 = fx.layers(&img, pbim_core::S1Mode::Oghm).unwrap();
    let c1 = c1_layers(&s1, &bands).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut pooling_exact = true;
    for _ in 0..200 {
        let b = rng.random_range(0..bands.bands.len());
        let band = c1.band(b);
        let (r, c) = (rng.random_range(0..band.rows()), rng.random_range(0..band.cols()));
        let o = rng.random_range(0..c1.num_orientations());
        let spec = band.band;
        let mut m = f64::NEG_INFINITY;
        for scale in [spec.scales.0, spec.scales.1] {
            let map = s1.map(scale, o);
            for y in r * spec.stride..(r * spec.stride + spec.grid).min(map.height()) {
                for x in c * spec.stride..(c * spec.stride + spec.grid).min(map.width()) {
                    m = m.max(map.get(x, y));
                }
            }
        }
        pooling_exact &= band.map(o).get(c, r) == m;
    }

    // Shift robustness: crops two pixels apart (half the first band's stride).
    let shift = bands.bands[0].stride / 2;
    let big = SceneConfig {
        size: 64 + shift,
        ..SceneConfig::default()
    };
    let sources: Vec<SourceImage> = (0..5)
        .map(|i| SourceImage::new(format!("d{i}"), glyph_scene(500 + i, &cfg).unwrap().image))
        .collect();
    let sel = SelectorConfig {
        selector: SelectorKind::Random,
        budget: 50,
        seed: 9,
        ..SelectorConfig::default()
    };
    let analyses: Vec<_> = sources.iter().map(|s| analyze(s, &fx, &sel, false).unwrap()).collect();
    let dict = select_random_from(&analyses.iter().collect::<Vec<_>>(), &sel, &fx.config().fingerprint()).unwrap();
    let mut worst_shift = 0.0f64;
    for i in 0..10 {
        let scene = glyph_scene(600 + i, &big).unwrap().image;
        let crop = |dx: usize| {
            GrayImage::from_plane_clamped(Plane::from_fn(64, 64, |x, y| scene.get(x + dx, y)))
        };
        let a = fx.features(&crop(0), &dict).unwrap().values;
        let b = fx.features(&crop(shift), &dict).unwrap().values;
        let num: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst_shift = worst_shift.max(num / den);
    }
    outcome(
        planted == 1.0 && pooling_exact && worst_shift <= 0.05,
        format!(
            "planted feature {planted}, 200 sampled C1 cells exact {pooling_exact}, worst relative L2 change under a half-stride shift {worst_shift:.2e} over 10 images",
        ),
    )
}

fn criterion_5() -> Outcome {
    let flat = GrayImage::constant(64, 64, 0.5).unwrap();
    let flat_max = spectral_residual(&flat, 64, 64).unwrap().map().max();

    let blob = Plane::from_fn(64, 64, |x, y| {
        if (20..28).contains(&x) && (30..38).contains(&y) {
            0.9
        } else {
            0.2
        }
    });
    let sal = spectral_residual(&GrayImage::from_plane(blob).unwrap(), 64, 64).unwrap();
    let (mut inside, mut outside, mut ni, mut no) = (0.0, 0.0, 0, 0);
    for y in 0..64 {
        for x in 0..64 {
            let v = sal.map().get(x, y);
            if (20..28).contains(&x) && (30..38).contains(&y) {
                inside += v;
                ni += 1;
            } else {
                outside += v;
                no += 1;
            }
        }
    }
    let ratio = (inside / ni as f64) / (outside / no as f64);

    let hand = SaliencyMap::new(Plane::new(2, 2, vec![1.0, 1.0, 1.0, 9.0]).unwrap(), (2, 2), "h".into());
    let mask = salient_region(&hand, 2.0);
    let bits = mask.bits().to_vec();
    let hand_ok = bits == vec![false, false, false, true] && mask.threshold() == 6.0;
    outcome(
        flat_max <= 1e-6 && ratio >= 5.0 && hand_ok,
        format!("constant max {flat_max:.1e}, blob contrast {ratio:.1}x, hand case {bits:?}"),
    )
}

/// Segment test over every start rotation and arc length, written from scratch.
fn oracle_fast(map: &Plane, t: f64) -> Vec<Corner> {
    let (w, h) = (map.width(), map.height());
    let mut score = vec![None; w * h];
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            let c = map.get(x, y);
            let ring: Vec<f64> = CIRCLE
                .iter()
                .map(|&(dx, dy)| map.get((x as isize + dx) as usize, (y as isize + dy) as usize))
                .collect();
            let mut best: Option<f64> = None;
            for bright in [true, false] {
                let ok = |v: f64| if bright { v > c + t } else { v < c - t };
                for start in 0..16 {
                    for len in 9..=16 {
                        let idx: Vec<usize> = (0..len).map(|i| (start + i) % 16).collect();
                        if idx.iter().all(|&i| ok(ring[i])) {
                            let mut members = idx.clone();
                            members.sort_unstable();
                            let s: f64 = members.iter().map(|&i| (ring[i] - c).abs()).sum();
                            best = Some(best.map_or(s, |b: f64| b.max(s)));
                        }
                    }
                }
            }
            score[y * w + x] = best;
        }
    }
    let mut out = Vec::new();
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            let Some(s) = score[y * w + x] else { continue };
            let mut keep = true;
            for ny in y - 1..=y + 1 {
                for nx in x - 1..=x + 1 {
                    if let Some(o) = score[ny * w + nx] {
                        if (nx, ny) != (x, y) && o > s {
                            keep = false;
                        }
                    }
                }
            }
            if keep {
                out.push(Corner { x, y, score: s });
            }
        }
    }
    out
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    let mut total = 0;
    for _ in 0..20 {
        let map = random_image(&mut rng, 32, 32);
        let got = fast_detect(&map, 0.1).unwrap();
        let want = oracle_fast(&map, 0.1);
        total += want.len();
        if got != want {
            mismatches += 1;
        }
    }
    let square = Plane::from_fn(30, 30, |x, y| {
        if (10..20).contains(&x) && (10..20).contains(&y) {
            0.9
        } else {
            0.1
        }
    });
    let corners = fast_detect(&square, 0.1).unwrap();
    let targets = [(10, 10), (19, 10), (10, 19), (19, 19)];
    let near = |c: &Corner, (tx, ty): (isize, isize)| {
        (c.x as isize - tx).abs() <= 1 && (c.y as isize - ty).abs() <= 1
    };
    let stray = corners.iter().filter(|c| !targets.iter().any(|&t| near(c, t))).count();
    let found = targets.iter().filter(|&&t| corners.iter().any(|c| near(c, t))).count();
    outcome(
        mismatches == 0 && total > 0 && stray == 0 && found == 4,
        format!(
            "20 random maps identical to oracle: {} ({total} corners); square corners found {found}/4, edge detections {stray}",
            mismatches == 0
        ),
    )
}

fn mann_whitney(scores: &[f64], labels: &[i8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] <= 0 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] > 0 {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

fn criterion_7() -> Outcome {
    let m = metrics(&ConfusionCounts {
        tp: 40,
        fn_: 10,
        fp: 5,
        tn: 45,
    });
    let hand = m.recall == Some(0.8) && m.one_minus_precision == Some(5.0 / 45.0) && m.classification_rate == Some(0.85);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(4..60);
        let mut labels: Vec<i8> = (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
        labels[0] = 1;
        labels[1] = -1;
        // coarse grid so ties occur
        let scores: Vec<f64> = (0..n).map(|_| (rng.random_range(0.0..1.0f64) * 10.0).round() / 10.0).collect();
        let r = roc(&scores, &labels).unwrap();
        worst = worst.max((r.auc - mann_whitney(&scores, &labels)).abs());
    }
    let s = [0.1, 0.2, 0.3, 0.7, 0.8, 0.9];
    let perfect = roc(&s, &[-1, -1, -1, 1, 1, 1]).unwrap().auc;
    let inverted = roc(&s, &[1, 1, 1, -1, -1, -1]).unwrap().auc;
    outcome(
        hand && worst <= 1e-9 && perfect == 1.0 && inverted == 0.0,
        format!(
            "hand case {:?}/{:?}/{:?}; max |AUC - Mann-Whitney| {worst:.1e} over 100 sets; perfect {perfect}, inverted {inverted}",
            m.recall.unwrap(),
            m.one_minus_precision.unwrap(),
            m.classification_rate.unwrap()
        ),
    )
}

fn criterion_8() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| {
        let start = Instant::now();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), "glyph", 80, 80, 7, &SceneConfig::default()).unwrap();
        let mut means = BTreeMap::new();
        for sel in [SelectorKind::Psghm, SelectorKind::Random] {
            let mut cfg = ExperimentConfig::new(dir.path(), vec!["glyph".into()]);
            cfg.train_positives = 15;
            cfg.train_negatives = 15;
            cfg.test_positives = 50;
            cfg.test_negatives = 50;
            cfg.trials = 10;
            cfg.sweep = vec![25, 50];
            cfg.pipeline.selector.budget = 50;
            cfg.pipeline.selector.selector = sel;
            let report = run_experiment(&cfg).unwrap();
            for k in [25, 50] {
                let a = report.aggregate("glyph", k).unwrap();
                means.insert((sel.to_string(), k), a.classification_rate.unwrap().mean);
            }
        }
        let elapsed = start.elapsed();
        let p50 = means[&("psghm".to_string(), 50)];
        let p25 = means[&("psghm".to_string(), 25)];
        let r50 = means[&("random".to_string(), 50)];
        let pass = p50 >= r50 - 0.02
            && p50 >= 0.85
            && p25 >= r50 - 0.05
            && elapsed <= Duration::from_secs(300);
        outcome(
            pass,
            format!(
                "psghm@50 {p50:.3}, psghm@25 {p25:.3}, random@50 {r50:.3}; {:.1}s single-threaded",
                elapsed.as_secs_f64()
            ),
        )
    })
}

fn criterion_9() -> Outcome {
    let text = r#"{
        "dataset_root": "graz02",
        "positive_classes": ["bikes", "persons"],
        "train_positives": 100, "train_negatives": 100,
        "test_positives": 50, "test_negatives": 50,
        "trials": 10, "sweep": [1500],
        "pipeline": {"selector": {"selector": "psghm", "budget": 1500}}
    }"#;
    let ok = ExperimentConfig::from_json(text).is_ok();
    outcome(
        ok,
        "GRAZ-style config accepted; published EER/AUC values need the external datasets and are not checked",
    )
}

fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_pbim"))
}

fn run(args: &[&str], threads: &str) -> Result<Vec<u8>, String> {
    let out = Command::new(bin())
        .args(args)
        .env("PBIM_THREADS", threads)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn read_tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Runs the whole command sequence in `dir` and returns every produced file and stdout.
fn cli_session(dir: &Path, threads: &str) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let ds = p("ds");
    let mut stdout = Vec::new();
    stdout.extend(run(&["generate-synthetic", "--out", &ds, "--positives", "24", "--negatives", "24", "--seed", "3"], threads)?);
    for sel in ["psghm", "random"] {
        let d = p(&format!("dict_{sel}.json"));
        stdout.extend(run(
            &["build-dictionary", "--selector", sel, "--budget", "30", "--train-dir", &format!("{ds}/glyph"), "--out", &d, "--seed", "5"],
            threads,
        )?);
    }
    let dict = p("dict_psghm.json");
    stdout.extend(run(&["extract", "--dictionary", &dict, "--image-dir", &format!("{ds}/glyph"), "--out", &p("pos.csv")], threads)?);
    stdout.extend(run(&["extract", "--dictionary", &dict, "--image-dir", &format!("{ds}/background"), "--out", &p("neg.csv")], threads)?);
    stdout.extend(run(
        &["train", "--dictionary", &dict, "--positive", &p("pos.csv"), "--negative", &p("neg.csv"), "--out", &p("model.json"), "--seed", "2"],
        threads,
    )?);
    stdout.extend(run(
        &["evaluate", "--model", &p("model.json"), "--dictionary", &dict, "--positive", &p("pos.csv"), "--negative", &p("neg.csv")],
        threads,
    )?);
    let exp = r#"{"dataset_root": "ds", "positive_classes": ["glyph"], "train_positives": 6, "train_negatives": 6,
        "test_positives": 10, "test_negatives": 10, "trials": 2, "sweep": [5, 10], "master_seed": 11,
        "pipeline": {"selector": {"budget": 10}}}"#;
    std::fs::write(dir.join("exp.json"), exp).map_err(|e| e.to_string())?;
    stdout.extend(run(&["experiment", "--config", &p("exp.json"), "--out", &p("report.json"), "--csv", &p("report.csv")], threads)?);
    stdout.extend(run(
        &["saliency", "--image", &format!("{ds}/glyph/glyph_000.png"), "--out", &p("sal.pgm"), "--mask-out", &p("sal.pbm")],
        threads,
    )?);
    let mut files = read_tree(dir);
    files.insert(PathBuf::from("<stdout>"), stdout);
    Ok(files)
}

fn criterion_10() -> Outcome {
    // Same working directory for every run: output rows carry input paths.
    let result = (|| -> Result<(usize, Vec<String>), String> {
        let root = tempfile::tempdir().map_err(|e| e.to_string())?;
        let dir = root.path().join("run");
        let mut runs = Vec::new();
        for threads in ["0", "1", "4"] {
            if dir.exists() {
                std::fs::remove_dir_all(&dir).map_err(|e| e.to_string())?;
            }
            std::fs::create_dir(&dir).map_err(|e| e.to_string())?;
            runs.push(cli_session(&dir, threads)?);
        }
        let first = &runs[0];
        let mut differing = Vec::new();
        for other in &runs[1..] {
            for (k, v) in first {
                if other.get(k) != Some(v) {
                    differing.push(k.display().to_string());
                }
            }
            if first.len() != other.len() {
                differing.push("file set".into());
            }
        }
        Ok((first.len(), differing))
    })();
    match result {
        Ok((n, diff)) => outcome(
            diff.is_empty(),
            format!("{n} outputs compared across three runs (auto, 1 and 4 threads); differing: {diff:?}"),
        ),
        Err(e) => outcome(false, e),
    }
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "convolution oracle equivalence", criterion_1),
        (2, "filter-bank invariants", criterion_2),
        (3, "90 degree rotation equivariance", criterion_3),
        (4, "HMAX exactness", criterion_4),
        (5, "saliency", criterion_5),
        (6, "FAST oracle equivalence", criterion_6),
        (7, "metrics", criterion_7),
        (8, "end-to-end synthetic experiment", criterion_8),
        (9, "published dataset numbers (harness surface only)", criterion_9),
        (10, "CLI determinism", criterion_10),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {n:>2} {}: {name}: {}",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
