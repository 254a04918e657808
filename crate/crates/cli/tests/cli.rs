use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use wavesplat::construct::import_ply;
use wavesplat::volume::{save_volume, ControlPoint, SampleType};
use wavesplat::{ScalarVolume, TransferFunction, VolumeMeta};

const N: usize = 24;

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    /// Two blobs on a 24³ grid, a colored TF, and a config pointing at them.
    fn new(extra: &str) -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let data = ndarray::Array3::from_shape_fn([N; 3], |(x, y, z)| {
            let g = |c: [f64; 3], s: f64| {
                let d2 = (x as f64 - c[0]).powi(2) + (y as f64 - c[1]).powi(2) + (z as f64 - c[2]).powi(2);
                (-0.5 * d2 / (s * s)).exp()
            };
            (0.9 * g([9.0, 11.0, 12.0], 3.0) + 0.6 * g([15.0, 13.0, 10.0], 2.0)).min(1.0)
        });
        let vol = ScalarVolume::from_array(VolumeMeta::new([N; 3], SampleType::F32Le), data).unwrap();
        let mut vol = vol;
        vol.meta.value_range = Some([0.0, 1.0]);
        save_volume(&dir.path().join("blobs.raw"), &vol).unwrap();
        let tf = TransferFunction::new(
            vec![
                ControlPoint::new(0.0, [0.0; 4]),
                ControlPoint::new(0.3, [0.2, 0.4, 0.9, 0.1]),
                ControlPoint::new(1.0, [1.0, 0.5, 0.1, 0.6]),
            ],
            None,
        )
        .unwrap();
        std::fs::write(dir.path().join("tf.json"), serde_json::to_string(&tf).unwrap()).unwrap();
        let config = format!(
            "output_dir = \"out\"\n\n[volume]\npath = \"blobs.raw\"\n\n[tf]\npath = \"tf.json\"\n\n\
             [wavelet]\nlevels = 2\n\n[sparsify]\nk_total = 400\n\n[rig]\ncount = 4\nresolution = [32, 32]\n\n\
             [finetune]\niters = 40\nseed = 3\n{extra}"
        );
        std::fs::write(dir.path().join("pipeline.toml"), config).unwrap();
        Fixture { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        let config = self.path("pipeline.toml");
        Command::new(env!("CARGO_BIN_EXE_wavesplat"))
            .args(args)
            .arg("--config")
            .arg(&config)
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> Output {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "wavesplat {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out
    }

    fn json(&self, rel: &str) -> Value {
        serde_json::from_slice(&std::fs::read(self.path(rel)).unwrap()).unwrap()
    }
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn bank_is_written_deterministically_and_listed_in_the_manifest() {
    let f = Fixture::new("");
    let out = f.ok(&["bank"]);
    let listing = String::from_utf8_lossy(&out.stdout);
    assert_eq!(listing.lines().count(), 1 + 15, "{listing}");
    let first = read(&f.path("out/bank.wsb"));
    f.ok(&["bank"]);
    assert_eq!(read(&f.path("out/bank.wsb")), first);
    let manifest = f.json("out/manifest.json");
    let artifacts = &manifest["runs"]["bank"]["artifacts"];
    assert_eq!(artifacts[0]["path"], "bank.wsb");
    assert_eq!(artifacts[0]["bytes"], first.len() as u64);
    assert_eq!(manifest["runs"]["bank"]["config"]["wavelet"]["levels"], 2);
}

#[test]
fn missing_meta_exits_2_naming_the_field() {
    let f = Fixture::new("");
    std::fs::remove_file(f.path("blobs.meta.json")).unwrap();
    let out = f.run(&["bank"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("volume.meta"), "{}", stderr(&out));
}

#[test]
fn invalid_values_exit_2() {
    let f = Fixture::new("");
    let out = f.run(&["convert", "--tau", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bank.tau"));
    let out = f.run(&["bank", "--levels", "9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("wavelet.levels"));
}

#[test]
fn print_config_reflects_overrides() {
    let f = Fixture::new("");
    let out = f.ok(&["bank", "--print-config", "--k-total", "77", "--sign-mode", "signed", "--resolution", "20x10"]);
    let cfg: toml::Value = toml::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert_eq!(cfg["sparsify"]["k_total"].as_integer(), Some(77));
    assert_eq!(cfg["construct"]["sign_mode"].as_str(), Some("signed"));
    assert_eq!(cfg["rig"]["resolution"].as_array().unwrap().len(), 2);
    assert!(cfg["volume"]["path"].as_str().unwrap().ends_with("blobs.raw"));
    assert!(!f.path("out").exists());
}

#[test]
fn convert_writes_one_ply_per_mode_matching_the_summary() {
    let f = Fixture::new("");
    f.ok(&["convert", "--tf-count", "5"]);
    let summary = f.json("out/summary.json");
    let modes = summary["modes"].as_array().unwrap();
    assert_eq!(modes.len(), 5);
    let mut total = 0;
    for (h, m) in modes.iter().enumerate() {
        let ply = f.path(&format!("out/splats/mode_{h}.ply"));
        let count = import_ply(&read(&ply)).unwrap().len();
        assert_eq!(m["splats"].as_u64().unwrap() as usize, count);
        assert!(f.path(&format!("out/splats/mode_{h}.json")).exists());
        total += count;
    }
    assert_eq!(summary["total_splats"].as_u64().unwrap() as usize, total);
    assert!(total > 0);
    let sidecar = f.json("out/splats/mode_0.json");
    assert_eq!(sidecar["gain_mode"], "fitted");
    let manifest = f.json("out/manifest.json");
    assert_eq!(manifest["runs"]["convert"]["artifacts"].as_array().unwrap().len(), 11);
}

#[test]
fn nothing_above_threshold_gives_empty_ply_and_a_warning() {
    let f = Fixture::new("");
    let out = f.ok(&["convert", "--mad-multiplier", "1e12"]);
    assert!(stderr(&out).contains("warning"));
    assert!(import_ply(&read(&f.path("out/splats/mode_0.ply"))).unwrap().is_empty());
    assert_eq!(f.json("out/summary.json")["total_splats"], 0);
}

#[test]
fn eval_reports_every_view() {
    let f = Fixture::new("");
    f.ok(&["convert", "--k-total", "2000"]);
    f.ok(&["render-ref"]);
    f.ok(&["eval", "--refs", "out/ref"]);
    let m = f.json("out/metrics.json");
    let views = m["views"].as_array().unwrap();
    assert_eq!(views.len(), 4);
    for (i, v) in views.iter().enumerate() {
        assert_eq!(v["view_index"], i);
        assert!(v["psnr"].as_f64().unwrap().is_finite());
        assert!(v["ssim"].as_f64().unwrap() <= 1.0);
    }
    let baseline: Value = serde_json::from_str(include_str!("fixtures/eval_baseline.json")).unwrap();
    let mean = m["mean_psnr"].as_f64().unwrap();
    assert!(mean > baseline["mean_psnr"].as_f64().unwrap(), "mean PSNR {mean}");
}

#[test]
fn eval_rejects_reference_resolution_mismatch() {
    let f = Fixture::new("");
    f.ok(&["convert"]);
    f.ok(&["render-ref"]);
    let out = f.run(&["eval", "--refs", "out/ref", "--resolution", "16x16"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("resolution"));
}

#[test]
fn finetune_with_zero_iters_copies_the_input() {
    let f = Fixture::new("");
    f.ok(&["convert"]);
    f.ok(&["finetune", "--ply", "out/splats/mode_0.ply", "--iters", "0"]);
    assert_eq!(read(&f.path("out/finetune/refined.ply")), read(&f.path("out/splats/mode_0.ply")));
    assert_eq!(String::from_utf8(read(&f.path("out/finetune/log.csv"))).unwrap(), "iter,view,loss,psnr\n");
}

#[test]
fn finetune_is_deterministic_and_lowers_the_loss() {
    let f = Fixture::new("");
    f.ok(&["convert"]);
    let out = f.ok(&["finetune", "--ply", "out/splats/mode_0.ply"]);
    let log = read(&f.path("out/finetune/log.csv"));
    let refined = read(&f.path("out/finetune/refined.ply"));
    assert_eq!(String::from_utf8_lossy(&log).lines().count(), 41);
    f.ok(&["finetune", "--ply", "out/splats/mode_0.ply"]);
    assert_eq!(read(&f.path("out/finetune/log.csv")), log);
    assert_eq!(read(&f.path("out/finetune/refined.ply")), refined);

    let text = String::from_utf8_lossy(&out.stdout);
    let losses: Vec<f64> = text
        .split("mean loss ")
        .nth(1)
        .unwrap()
        .split(',')
        .next()
        .unwrap()
        .split(" -> ")
        .map(|s| s.trim().parse().unwrap())
        .collect();
    assert!(losses[1] < losses[0], "{text}");
    let state = f.json("out/finetune/refined.state.json");
    assert_eq!(state["step"], 40);
}

#[test]
fn diverging_finetune_exits_3() {
    let f = Fixture::new(
        "\n[finetune.rates]\ncenter = 0.0\nlog_scale = 1000.0\nrotation = 0.0\nrgb = 0.0\nopacity = 0.0\n",
    );
    f.ok(&["convert"]);
    let out = f.run(&["finetune", "--ply", "out/splats/mode_0.ply", "--iters", "5"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}
