use std::collections::{BTreeMap, HashSet};

use pbim_core::patchselect::{analyze, build_dictionary_from, ProvenanceSummary};
use pbim_core::synth::{background_scene, glyph_scene, SceneConfig};
use pbim_core::{
    build_dictionary, load_dictionary, save_dictionary, FeatureConfig, FeatureExtractor, GrayImage,
    OriginKind, Patch, PatchDictionary, PatchOrigin, SelectorConfig, SelectorKind, SourceImage,
};
use proptest::prelude::*;

fn glyphs(n: u64, offset: u64) -> Vec<SourceImage> {
    let cfg = SceneConfig::default();
    (0..n)
        .map(|i| SourceImage::new(format!("g{i:02}"), glyph_scene(offset + i, &cfg).unwrap().image))
        .collect()
}

fn extractor() -> FeatureExtractor {
    FeatureExtractor::new(FeatureConfig::default()).unwrap()
}

fn psghm(budget: usize, seed: u64) -> SelectorConfig {
    SelectorConfig {
        selector: SelectorKind::Psghm,
        budget,
        seed,
        ..SelectorConfig::default()
    }
}

fn pixel_center(c1: &pbim_core::C1Stack, p: &PatchOrigin, side: usize) -> (usize, usize) {
    let stride = c1.band(p.band).band.stride;
    let (w, h) = c1.image_dims();
    (
        ((p.col * 2 + side) * stride / 2).min(w - 1),
        ((p.row * 2 + side) * stride / 2).min(h - 1),
    )
}

#[test]
fn budget_is_split_round_robin() {
    let images = glyphs(30, 100);
    let fx = extractor();
    let dict = build_dictionary(&images, &fx, &psghm(1500, 3)).unwrap();
    assert_eq!(dict.len(), 1500);
    let mut per_image = BTreeMap::new();
    for p in dict.patches() {
        *per_image.entry(p.origin.source.clone()).or_insert(0usize) += 1;
    }
    assert_eq!(per_image.len(), 30);
    assert!(per_image.values().all(|&n| n == 50));
    // the first 30 entries are every image's best
    let first: HashSet<_> = dict.patches()[..30].iter().map(|p| &p.origin.source).collect();
    assert_eq!(first.len(), 30);
}

#[test]
fn uneven_budget_favors_earlier_images() {
    let images = glyphs(4, 200);
    let dict = build_dictionary(&images, &extractor(), &psghm(10, 0)).unwrap();
    let count = |name: &str| dict.patches().iter().filter(|p| p.origin.source == name).count();
    assert_eq!([count("g00"), count("g01"), count("g02"), count("g03")], [3, 3, 2, 2]);
}

#[test]
fn keypoint_patches_stay_in_the_salient_region() {
    let images = glyphs(8, 300);
    let fx = extractor();
    let cfg = psghm(200, 1);
    let analyses: Vec<_> = images.iter().map(|s| analyze(s, &fx, &cfg, true).unwrap()).collect();
    let dict = build_dictionary_from(&analyses.iter().collect::<Vec<_>>(), &cfg, &fx.config().fingerprint()).unwrap();
    let by_name: BTreeMap<_, _> = analyses.iter().map(|a| (a.name.clone(), a)).collect();
    let mut seen = HashSet::new();
    for p in dict.patches() {
        let a = by_name[&p.origin.source];
        let mask = a.mask.as_ref().unwrap();
        let (x, y) = pixel_center(&a.c1, &p.origin, p.side);
        if matches!(p.origin.kind, OriginKind::Keypoint { .. } | OriginKind::SalientFallback { .. }) {
            assert!(mask.get(x, y), "{:?} outside mask", p.origin);
        }
        assert!(seen.insert((p.origin.source.clone(), p.side, p.origin.band, p.origin.row, p.origin.col)));
    }
    assert!(ProvenanceSummary::of(&dict).keypoint > 0);
}

#[test]
fn keypoint_patches_find_the_glyph() {
    let cfg = SceneConfig::default();
    let scenes: Vec<_> = (0..10).map(|i| glyph_scene(400 + i, &cfg).unwrap()).collect();
    let images: Vec<_> = scenes
        .iter()
        .enumerate()
        .map(|(i, s)| SourceImage::new(format!("s{i}"), s.image.clone()))
        .collect();
    let fx = extractor();
    let sel = psghm(100, 4);
    let analyses: Vec<_> = images.iter().map(|s| analyze(s, &fx, &sel, true).unwrap()).collect();
    let dict = build_dictionary_from(&analyses.iter().collect::<Vec<_>>(), &sel, &fx.config().fingerprint()).unwrap();
    let (mut inside, mut total) = (0, 0);
    for p in dict.patches() {
        if let OriginKind::Keypoint { x, y, .. } = p.origin.kind {
            let i: usize = p.origin.source[1..].parse().unwrap();
            let (x0, y0, x1, y1) = scenes[i].bbox.unwrap();
            total += 1;
            // keypoint within one band-stride of the glyph box
            if x + 4 >= x0 && x <= x1 + 4 && y + 4 >= y0 && y <= y1 + 4 {
                inside += 1;
            }
        }
    }
    assert!(total > 0);
    assert!(inside as f64 >= 0.9 * total as f64, "{inside}/{total}");
}

#[test]
fn blank_images_fall_back_to_the_whole_image() {
    let images = vec![SourceImage::new("blank", GrayImage::constant(64, 64, 0.4).unwrap())];
    let dict = build_dictionary(&images, &extractor(), &psghm(20, 0)).unwrap();
    let s = ProvenanceSummary::of(&dict);
    assert_eq!((s.keypoint, s.salient_fallback, s.image_fallback), (0, 0, 20));
}

#[test]
fn selection_is_deterministic_and_seeded() {
    let images: Vec<_> = glyphs(3, 500)
        .into_iter()
        .chain((0..3).map(|i| SourceImage::new(format!("b{i}"), background_scene(i, &SceneConfig::default()).unwrap().image)))
        .collect();
    let fx = extractor();
    for kind in [SelectorKind::Psghm, SelectorKind::Random] {
        let cfg = |seed| SelectorConfig {
            selector: kind,
            budget: 40,
            seed,
            ..SelectorConfig::default()
        };
        let a = build_dictionary(&images, &fx, &cfg(5)).unwrap();
        let b = build_dictionary(&images, &fx, &cfg(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 40);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        assert_eq!(pool.install(|| build_dictionary(&images, &fx, &cfg(5)).unwrap()), a);
        if kind == SelectorKind::Random {
            assert_ne!(build_dictionary(&images, &fx, &cfg(6)).unwrap(), a);
        }
    }
}

fn dictionary_strategy() -> impl Strategy<Value = PatchDictionary> {
    let patch = (prop::sample::select(vec![1usize, 2, 4]), 0usize..8, 0usize..20, 0usize..20, any::<u8>())
        .prop_flat_map(|(side, band, row, col, tag)| {
            prop::collection::vec(prop::num::f64::POSITIVE | prop::num::f64::ZERO, side * side * 4).prop_map(
                move |values| {
                    let kind = match tag % 4 {
                        0 => OriginKind::Random,
                        1 => OriginKind::ImageFallback,
                        2 => OriginKind::SalientFallback { x: row, y: col },
                        _ => OriginKind::Keypoint {
                            x: col,
                            y: row,
                            scale_index: band * 2,
                            theta: tag as f64 / 7.0,
                            score: 1.0 / (tag as f64 + 1.0),
                        },
                    };
                    let origin = PatchOrigin {
                        band,
                        row,
                        col,
                        source: format!("img \"{tag}\",x.png"),
                        kind,
                    };
                    Patch::new(side, 4, values, origin).unwrap()
                },
            )
        });
    (prop::collection::vec(patch, 1..6), any::<u64>(), any::<bool>()).prop_map(|(patches, seed, psghm)| {
        let kind = if psghm { SelectorKind::Psghm } else { SelectorKind::Random };
        PatchDictionary::new(patches, kind, seed, "cfg".into()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dictionary_file_round_trips(dict in dictionary_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        save_dictionary(&dict, &path).unwrap();
        let back = load_dictionary(&path).unwrap();
        prop_assert_eq!(&back, &dict);
        save_dictionary(&back, dir.path().join("e.json")).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(dir.path().join("e.json")).unwrap());
    }
}
