use attverify::{
    load_model, parse_idx, run, save_model, ImageSource, ProblemConfig, ResultsDocument, RunStatus,
};
use attverify_core::{encode_with, Clipping, ImageMeta, Network, PerturbationKind, PerturbationSpec, ThetaBox};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn worked_config() -> ProblemConfig {
    ProblemConfig {
        model: fixture("worked_f.json"),
        image: fixture("worked_x0.txt").display().to_string(),
        perturbation: "brightness:0..1".into(),
        ..ProblemConfig::default()
    }
}

#[test]
fn worked_example_models_reload() {
    let dir = tempfile::tempdir().unwrap();
    let f = load_model(&fixture("worked_f.json")).unwrap();
    let spec = PerturbationSpec::new(
        vec![PerturbationKind::Brightness],
        ThetaBox::new(vec![0.0], vec![1.0]).unwrap(),
        ImageMeta::new(3, 1),
    )
    .unwrap();
    let g = encode_with(&spec, &[1.0, 0.5, 0.1], Clipping::LowerOnly).unwrap();
    let (fp, gp) = (dir.path().join("f.json"), dir.path().join("g.json"));
    save_model(&f, &fp).unwrap();
    save_model(&g, &gp).unwrap();
    let fg = Network::compose(&load_model(&fp).unwrap(), &load_model(&gp).unwrap()).unwrap();
    let out = fg.forward(&[0.6]).unwrap();
    assert!((out[0] - 0.4).abs() < 1e-12 && (out[1] - 0.4).abs() < 1e-12, "{out:?}");
}

#[test]
fn bfs_on_worked_example_finds_three_regions() {
    let doc = run(&worked_config()).unwrap();
    assert_eq!(doc.status, RunStatus::Complete);
    assert_eq!(doc.regions.len(), 3);
    assert_eq!(doc.problem.delta, 3.0);
    assert_eq!(doc.problem.w_delta, 0.2);
    assert_eq!(doc.problem.parameters, vec!["brightness".to_string()]);
}

#[test]
fn run_refuses_bad_configs_up_front() {
    let gbs_ar = ProblemConfig {
        mode: attverify_core::TraversalMode::GbsAr,
        w_delta: 0.0,
        ..worked_config()
    };
    assert!(matches!(run(&gbs_ar), Err(attverify::CliError::Config(_))));
    let empty = ProblemConfig {
        perturbation: String::new(),
        ..worked_config()
    };
    assert!(matches!(run(&empty), Err(attverify::CliError::Config(_))));
    let missing = ProblemConfig {
        model: fixture("nope.json"),
        ..worked_config()
    };
    assert!(run(&missing).is_err());
}

#[test]
fn results_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let cfg = ProblemConfig {
        out: Some(path.clone()),
        ..worked_config()
    };
    let doc = run(&cfg).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let back = ResultsDocument::from_json(&text).unwrap();
    assert_eq!(back, doc);
    assert_eq!(back.to_json(), text);
    assert!(ResultsDocument::from_json(&text.replace("attverify-results/1", "attverify-results/0")).is_err());
}

/// Straight byte-level decode, independent of the loader.
fn reference_decode(bytes: &[u8], index: usize) -> Vec<f64> {
    let rows = u32::from_be_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_be_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let n = rows * cols;
    bytes[16 + index * n..16 + (index + 1) * n].iter().map(|&b| b as f64 / 255.0).collect()
}

#[test]
fn idx_loader_matches_reference_decode() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let (rows, cols) = (5u32, 4u32);
    let mut bytes = Vec::new();
    for v in [0x0000_0803u32, 4, rows, cols] {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    bytes.extend((0..4 * rows * cols).map(|_| r.gen::<u8>()));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("images.idx");
    std::fs::write(&path, &bytes).unwrap();
    for i in 0..4 {
        let src: ImageSource = format!("idx:{}:{i}", path.display()).parse().unwrap();
        let im = attverify::load_image(&src).unwrap();
        assert_eq!(im.pixels, reference_decode(&bytes, i));
        assert_eq!(im.meta, ImageMeta::new(cols as usize, rows as usize));
        assert_eq!(parse_idx(&bytes, i).unwrap(), im);
    }
    assert!(parse_idx(&bytes, 4).is_err());
}

fn arb_doc() -> impl Strategy<Value = ResultsDocument> {
    let f = || prop_oneof![any::<f64>().prop_filter("finite", |v| v.is_finite()), Just(0.0), Just(-0.0), Just(1e-300)];
    let region = (
        prop::collection::vec((prop::collection::vec(f(), 2), f()), 1..6),
        f(),
        f(),
        prop::collection::vec(f(), 2),
        any::<bool>(),
        0..3usize,
        0..3usize,
    );
    (prop::collection::vec(region, 0..4), f(), any::<u64>()).prop_map(|(regions, delta, lp)| {
        let mut doc = ResultsDocument::from_json(&run_doc_template()).unwrap();
        doc.problem.delta = delta;
        doc.stats.lp_calls = lp;
        doc.regions = regions
            .into_iter()
            .map(|(rows, lo, up, witness, following, c, a)| attverify::RegionRecord {
                pattern: "[1,0|1]".into(),
                halfspaces: attverify::results::Halfspaces {
                    labels: (0..rows.len()).map(|i| format!("h(0,{i})")).collect(),
                    a: rows.iter().map(|r| r.0.clone()).collect(),
                    b: rows.iter().map(|r| r.1).collect(),
                },
                cls_verdict: [attverify_core::ClassVerdict::Cr, attverify_core::ClassVerdict::Mr, attverify_core::ClassVerdict::Cb][c],
                attn_verdict: [attverify_core::AttentionVerdict::Ar, attverify_core::AttentionVerdict::Ir, attverify_core::AttentionVerdict::Ab][a],
                ai_range: [lo, up],
                margin_range: [up, lo],
                witness,
                following,
                line_distance: lo,
            })
            .collect();
        doc
    })
}

fn run_doc_template() -> String {
    run(&worked_config()).unwrap().to_json()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialize_parse_serialize_is_identity(doc in arb_doc()) {
        let text = doc.to_json();
        let back = ResultsDocument::from_json(&text).unwrap();
        prop_assert_eq!(back.to_json(), text);
        for (a, b) in back.regions.iter().zip(&doc.regions) {
            prop_assert_eq!(a.ai_range[0].to_bits(), b.ai_range[0].to_bits());
        }
    }
}
