use std::path::Path;
use std::process::{Command, Output};

use scanlab_core::dataset::save_observations;
use scanlab_core::{Fixation, Observation};
use serde_json::Value;

fn scanlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scanlab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim().to_string()
}

fn setup(dir: &Path) -> std::path::PathBuf {
    std::fs::create_dir_all(dir.join("images")).unwrap();
    let mut obs = Vec::new();
    for i in 0..3u32 {
        let img = image::RgbImage::from_fn(40, 30, |x, y| image::Rgb([(x * 6) as u8, (y * 8) as u8, (i * 80) as u8]));
        let id = format!("im{i}.png");
        img.save(dir.join("images").join(&id)).unwrap();
        for s in 0..2 {
            obs.push(Observation {
                session_id: format!("s{s}"),
                image_id: id.clone(),
                clicks: (0..4 + s).map(|c| Fixation::at_time(5.0 + 7.0 * c as f64, 4.0 + 5.0 * c as f64, 200.0 * c as f64)).collect(),
                caption: format!("patch:{},{}", i + 1, s + 2),
                skipped: false,
            });
        }
    }
    obs.push(Observation {
        session_id: "s9".into(),
        image_id: "im0.png".into(),
        clicks: vec![],
        caption: String::new(),
        skipped: true,
    });
    save_observations(&dir.join("obs.jsonl"), &obs).unwrap();
    let config = dir.join("config.toml");
    std::fs::write(
        &config,
        "seed = 3\n[data]\nimages = \"images\"\nobservations = \"obs.jsonl\"\n[backend]\nkind = \"synthetic\"\n\
         [[models]]\nname = \"random\"\nkind = \"random\"\n\
         [[models]]\nname = \"neva\"\nkind = \"nevaclip\"\nvariant = \"correct_caption\"\n[models.params]\nn_fixations = 3\nsteps = 4\nsigma_xi = 6.0\n",
    )
    .unwrap();
    config
}

#[test]
fn run_evaluate_render_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path());
    let out = dir.path().join("run");
    let o = scanlab(&["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), out.display().to_string());
    for f in ["manifest.json", "table.csv", "curves.csv", "spp_capmit1003.csv", "scanpaths/random.jsonl", "scanpaths/neva.jsonl"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let table = std::fs::read_to_string(out.join("table.csv")).unwrap();

    let o = scanlab(&["evaluate", "--runs", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(out.join("table.csv")).unwrap(), table);

    let o = scanlab(&["render", "--image", "im1.png", "--runs", out.to_str().unwrap(), "--models", "random,neva"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fig = image::open(stdout(&o)).unwrap();
    assert_eq!((fig.width(), fig.height()), (40, 30));
}

#[test]
fn run_without_out_uses_a_timestamped_directory() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path());
    let o = scanlab(&["run", "--config", config.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = std::path::PathBuf::from(stdout(&o));
    assert_eq!(run.parent().unwrap(), dir.path().join("runs"));
    assert!(run.file_name().unwrap().to_str().unwrap().starts_with("run-"));
}

#[test]
fn stats_reports_summary_and_histogram() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let o = scanlab(&["stats", "--dataset", dir.path().join("obs.jsonl").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["summary"]["total_observations"], 7);
    assert_eq!(v["summary"]["total_clicks"], 27);
    assert_eq!(v["summary"]["excluded_skipped"], 1);
    assert_eq!(v["click_count_histogram"]["4"], 3);
    assert_eq!(v["click_count_histogram"]["5"], 3);
    assert_eq!(v["malformed_lines"], 0);
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let o = scanlab(&["run", "--config", dir.path().join("nope.toml").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.toml"));
    let o = scanlab(&["evaluate", "--runs", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    let o = scanlab(&["frobnicate"]);
    assert!(!o.status.success());
}
