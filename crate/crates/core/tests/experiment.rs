mod common;

use std::path::Path;

use scanlab_core::dataset::save_observations;
use scanlab_core::experiment::{self, ExperimentConfig};
use scanlab_core::model::read_jsonl;
use scanlab_core::Error;

fn setup(dir: &Path, n_images: usize, sessions: usize, models: &str) -> ExperimentConfig {
    let ids = common::write_images(&dir.join("images"), n_images, 64, 48);
    save_observations(&dir.join("obs.jsonl"), &common::observations(&ids, sessions, 64.0, 48.0)).unwrap();
    let text = format!(
        "seed = 11\nworkers = 2\n[data]\nimages = \"images\"\nobservations = \"obs.jsonl\"\n[backend]\nkind = \"synthetic\"\n{models}"
    );
    let p = dir.join("config.toml");
    std::fs::write(&p, text).unwrap();
    ExperimentConfig::load(&p).unwrap()
}

const ALL_MODELS: &str = r#"
[[models]]
name = "random"
kind = "random"
[[models]]
name = "center"
kind = "center"
[[models]]
name = "clicks"
kind = "clicks_density"
[[models]]
name = "neva-correct"
kind = "nevaclip"
variant = "correct_caption"
[models.params]
n_fixations = 4
steps = 5
sigma_xi = 8.0
alpha = 0.2
[[models]]
name = "neva-other"
kind = "nevaclip"
variant = "different_caption_different_image"
[models.params]
n_fixations = 3
steps = 4
sigma_xi = 8.0
[[models]]
name = "neva-visual"
kind = "nevaclip"
variant = "visually_guided"
[models.params]
n_fixations = 3
steps = 4
sigma_xi = 8.0
"#;

#[test]
fn random_baseline_on_three_images() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path(), 3, 1, "[[models]]\nname = \"random\"\nkind = \"random\"\n");
    let out = experiment::run(&config, Some(&dir.path().join("out"))).unwrap();
    let (recs, errs) = read_jsonl::<experiment::SimRecord>(&out.join("scanpaths/random.jsonl")).unwrap();
    assert!(errs.is_empty());
    assert_eq!(recs.len(), 3);
    assert!(recs.iter().all(|r| r.scanpath.len() == 10 && r.scanpath.model_tag == "random"));
    let table = std::fs::read_to_string(out.join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 2);
    assert!(table.lines().nth(1).unwrap().starts_with("random,capmit1003,"));
    let spp = std::fs::read_to_string(out.join("spp_capmit1003.csv")).unwrap();
    assert!(spp.lines().any(|l| l.starts_with("random,capmit1003,summary,")));
}

#[test]
fn rerun_from_manifest_is_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = setup(dir.path(), 4, 3, ALL_MODELS);
    config.save_traces = true;
    let a = experiment::run(&config, Some(&dir.path().join("a"))).unwrap();
    let again = ExperimentConfig::load(&a.join("manifest.json")).unwrap();
    assert_eq!(again, config);
    let b = experiment::run(&again, Some(&dir.path().join("b"))).unwrap();

    let mut files = Vec::new();
    for entry in walk(&a) {
        let rel = entry.strip_prefix(&a).unwrap().to_path_buf();
        files.push(rel);
    }
    files.sort();
    assert!(files.iter().any(|f| f.ends_with("neva-correct.jsonl")));
    assert!(files.iter().any(|f| f.ends_with("curves.csv")));
    for rel in &files {
        assert_eq!(std::fs::read(a.join(rel)).unwrap(), std::fs::read(b.join(rel)).unwrap(), "{}", rel.display());
    }
    // Worker count does not change outputs.
    let mut single = config.clone();
    single.workers = 1;
    let c = experiment::run(&single, Some(&dir.path().join("c"))).unwrap();
    assert_eq!(
        std::fs::read(a.join("scanpaths/neva-other.jsonl")).unwrap(),
        std::fs::read(c.join("scanpaths/neva-other.jsonl")).unwrap()
    );

    let manifest = experiment::read_manifest(&a).unwrap();
    assert_eq!(manifest.config_sha256, config.hash().unwrap());
    assert_eq!(manifest.assignments["neva-other"].len(), 12);
    assert!(manifest.failures.is_empty());
    let table = std::fs::read_to_string(a.join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 6);

    // evaluate reproduces the reports from the scanpath files.
    let before = std::fs::read(a.join("curves.csv")).unwrap();
    std::fs::remove_file(a.join("curves.csv")).unwrap();
    experiment::evaluate(&a).unwrap();
    assert_eq!(std::fs::read(a.join("curves.csv")).unwrap(), before);

    let fig = experiment::render_run(&a, "img1", None, &Default::default()).unwrap();
    let img = image::open(&fig).unwrap();
    assert_eq!((img.width(), img.height()), (64, 48));
}

#[test]
fn missing_backend_manifest_fails_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = setup(dir.path(), 2, 1, "[[models]]\nname = \"random\"\nkind = \"random\"\n");
    config.backend = experiment::BackendConfig::Onnx {
        manifest: dir.path().join("nope.json"),
    };
    let out = dir.path().join("out");
    assert!(matches!(experiment::run(&config, Some(&out)), Err(Error::Config(_))));
    assert!(!out.exists());
}

#[test]
fn missing_image_is_recorded_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path(), 3, 1, "[[models]]\nname = \"random\"\nkind = \"random\"\n");
    std::fs::remove_file(dir.path().join("images/img2.png")).unwrap();
    let out = experiment::run(&config, Some(&dir.path().join("out"))).unwrap();
    let manifest = experiment::read_manifest(&out).unwrap();
    assert_eq!(manifest.failures.len(), 1);
    assert_eq!(manifest.failures[0].image_id, "img2");
    let (recs, _) = read_jsonl::<experiment::SimRecord>(&out.join("scanpaths/random.jsonl")).unwrap();
    assert_eq!(recs.len(), 2);
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}
