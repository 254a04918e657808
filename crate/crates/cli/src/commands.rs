use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use wavesplat::bank::write_bank;
use wavesplat::construct::{export_ply, import_ply, write_sidecar, Sidecar};
use wavesplat::finetune::{
    evaluate_views, log_to_csv, optimize, write_state, FinetuneConfig, FinetuneError, LearningRates, OptState,
    SplatParams, View,
};
use wavesplat::render::{camera_rig, psnr, render_dvr, render_splats, ssim, Camera, Image, RenderOptions, PSNR_CAP};
use wavesplat::volume::{apply_tf, load_raw, make_interval_tfs, ScalarVolume};
use wavesplat::{
    build_bank, build_splats, dwt3, eval_mixture, sparsify_pyramid, RadianceVolume, SignMode, TransferFunction,
    TransitionBank, VolumeMeta, WaveletPyramid,
};

use crate::config::PipelineConfig;
use crate::error::{config, io, numerical, CliError};
use crate::manifest;

const BANK_FILE: &str = "bank.wsb";
const REF_DIR: &str = "ref";
const SPLAT_DIR: &str = "splats";
const FINETUNE_DIR: &str = "finetune";

struct Inputs {
    volume: ScalarVolume,
    tf: TransferFunction,
}

fn load_inputs(cfg: &PipelineConfig) -> Result<Inputs, CliError> {
    let meta_path = cfg.meta_path()?;
    let meta = VolumeMeta::from_json_file(&meta_path).map_err(config("volume.meta"))?;
    let volume = load_raw(cfg.volume_path()?, &meta).map_err(config("volume.path"))?;
    let tf = match &cfg.tf.path {
        Some(p) => TransferFunction::from_json_file(p).map_err(config("tf.path"))?,
        None => TransferFunction::grayscale_ramp(),
    };
    Ok(Inputs { volume, tf })
}

fn load_meta(cfg: &PipelineConfig) -> Result<VolumeMeta, CliError> {
    VolumeMeta::from_json_file(&cfg.meta_path()?).map_err(config("volume.meta"))
}

fn prepare_out(cfg: &PipelineConfig, sub: Option<&str>) -> Result<PathBuf, CliError> {
    let out = cfg.output_dir();
    let dir = sub.map_or_else(|| out.clone(), |s| out.join(s));
    std::fs::create_dir_all(&dir).map_err(io(&dir.display().to_string()))?;
    Ok(out)
}

fn write(out: &Path, rel: &str, bytes: &[u8]) -> Result<String, CliError> {
    let path = out.join(rel);
    std::fs::write(&path, bytes).map_err(io(&path.display().to_string()))?;
    Ok(rel.to_string())
}

fn write_json<T: Serialize>(out: &Path, rel: &str, value: &T) -> Result<String, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("JSON serializes");
    bytes.push(b'\n');
    write(out, rel, &bytes)
}

fn check_levels(cfg: &PipelineConfig, dims: [usize; 3]) -> Result<(), CliError> {
    let levels = cfg.wavelet.levels;
    let ok = (0..levels).all(|l| wavesplat::wavelet::level_dims(dims, l).iter().all(|&n| n >= 2));
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "wavelet.levels: {levels} levels are too many for a {dims:?} volume"
        )))
    }
}

fn make_bank(cfg: &PipelineConfig, dims: [usize; 3]) -> Result<TransitionBank, CliError> {
    check_levels(cfg, dims)?;
    let w = &cfg.wavelet;
    build_bank(dims, w.levels, w.filter, w.boundary, cfg.bank.tau, cfg.bank.ridge_lambda)
        .map_err(numerical("transition bank"))
}

pub fn bank(cfg: &PipelineConfig) -> Result<(), CliError> {
    let meta = load_meta(cfg)?;
    let bank = make_bank(cfg, meta.dims)?;
    let out = prepare_out(cfg, None)?;
    write_bank(&out.join(BANK_FILE), &bank).map_err(io(BANK_FILE))?;
    println!("{:<12} {:>10} {:>8} {:>12} {:>5}", "band", "residual", "roi", "weight", "sign");
    for e in bank.entries.values() {
        println!(
            "{:<12} {:>10.4} {:>8} {:>12.5e} {:>+5}",
            e.band.to_string(),
            e.fit_residual,
            e.roi_size,
            e.weight[0],
            e.lobe_sign
        );
    }
    manifest::record(&out, "bank", cfg, &[BANK_FILE.to_string()])
}

fn analyze(cfg: &PipelineConfig, rf: &RadianceVolume) -> Result<Vec<WaveletPyramid>, CliError> {
    let w = &cfg.wavelet;
    rf.channels
        .iter()
        .map(|c| dwt3(c, w.levels, w.filter, w.boundary))
        .collect::<Result<Vec<_>, _>>()
        .map_err(numerical("wavelet transform"))
}

fn volume_psnr(a: &RadianceVolume, b: &RadianceVolume) -> f64 {
    let (mut se, mut n) = (0.0, 0usize);
    for c in 0..4 {
        for (x, y) in a.channels[c].iter().zip(b.channels[c].iter()) {
            se += (x - y).powi(2);
            n += 1;
        }
    }
    if se == 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (n as f64 / se).log10()).min(PSNR_CAP)
}

#[derive(Serialize)]
struct ModeSummary {
    index: usize,
    support: [f64; 2],
    ply: String,
    splats: usize,
    retained_coefficients: usize,
    uniform_fallback: bool,
    export_scale: f64,
    volume_psnr_signed: f64,
}

fn mode_name(h: usize) -> String {
    format!("{SPLAT_DIR}/mode_{h}.ply")
}

pub fn convert(cfg: &PipelineConfig) -> Result<(), CliError> {
    let inputs = load_inputs(cfg)?;
    let meta = &inputs.volume.meta;
    let bank = make_bank(cfg, meta.dims)?;
    let frame = meta.frame();
    let out = prepare_out(cfg, Some(SPLAT_DIR))?;
    let tfs = make_interval_tfs(&inputs.tf, cfg.tf.count).map_err(config("tf.count"))?;
    let bank_info = json!({
        "levels": bank.levels,
        "filter": bank.filter,
        "boundary": bank.boundary,
        "tau": bank.tau,
        "ridge_lambda": bank.ridge_lambda,
    });
    let mut artifacts = Vec::new();
    let mut modes = Vec::new();
    for (h, tf) in tfs.iter().enumerate() {
        let rf = apply_tf(&inputs.volume, tf);
        let pyramids = analyze(cfg, &rf)?;
        let sparse = sparsify_pyramid(&pyramids, &cfg.sparsify).map_err(numerical("sparsify"))?;
        let c = &cfg.construct;
        let set = build_splats(&sparse, &bank, &frame, c.gain_mode, c.sign_mode).map_err(numerical("construct"))?;
        let signed = if c.sign_mode == SignMode::Signed {
            set.clone()
        } else {
            build_splats(&sparse, &bank, &frame, c.gain_mode, SignMode::Signed).map_err(numerical("construct"))?
        };
        let mixture = eval_mixture(&signed, meta).map_err(numerical("mixture evaluation"))?;
        let scale = set.export_scale();
        let exported = set.export_normalized();
        let rel = mode_name(h);
        let path = out.join(&rel);
        let bytes = export_ply(&exported.splats).map_err(numerical(&rel))?;
        artifacts.push(write(&out, &rel, &bytes)?);
        write_sidecar(&path, &Sidecar::for_set(&exported, scale, Some(bank_info.clone()))).map_err(io(&rel))?;
        artifacts.push(format!("{SPLAT_DIR}/mode_{h}.json"));
        if set.is_empty() {
            eprintln!("warning: mode {h} produced no splats; wrote an empty {rel}");
        }
        let support = tf.support().unwrap_or([0.0, 1.0]);
        println!(
            "mode {h} [{:.3}, {:.3}]: {} splats, signed volume PSNR {:.2} dB",
            support[0],
            support[1],
            set.len(),
            volume_psnr(&mixture, &rf)
        );
        modes.push(ModeSummary {
            index: h,
            support,
            ply: rel,
            splats: set.len(),
            retained_coefficients: sparse.retained(),
            uniform_fallback: sparse.uniform_fallback,
            export_scale: scale,
            volume_psnr_signed: volume_psnr(&mixture, &rf),
        });
    }
    let total: usize = modes.iter().map(|m| m.splats).sum();
    let summary = json!({
        "gain_mode": cfg.construct.gain_mode,
        "sign_mode": cfg.construct.sign_mode,
        "total_splats": total,
        "modes": modes,
    });
    artifacts.push(write_json(&out, "summary.json", &summary)?);
    manifest::record(&out, "convert", cfg, &artifacts)
}

fn rig(cfg: &PipelineConfig) -> Result<Vec<Camera>, CliError> {
    let r = &cfg.rig;
    camera_rig(r.count, r.radius, r.resolution, r.half_extent).map_err(config("rig"))
}

/// Radiance field of the full transfer function, or of one interval mode.
fn target_field(cfg: &PipelineConfig, inputs: &Inputs, mode: Option<usize>) -> Result<RadianceVolume, CliError> {
    match mode {
        None => Ok(apply_tf(&inputs.volume, &inputs.tf)),
        Some(h) => {
            let tfs = make_interval_tfs(&inputs.tf, cfg.tf.count).map_err(config("tf.count"))?;
            let tf = tfs.get(h).ok_or_else(|| {
                CliError::Config(format!("--mode {h} is out of range for tf.count = {}", cfg.tf.count))
            })?;
            Ok(apply_tf(&inputs.volume, tf))
        }
    }
}

fn references(cfg: &PipelineConfig, rf: &RadianceVolume, cams: &[Camera]) -> Result<Vec<Image>, CliError> {
    let step = cfg.rig.step_fraction * rf.meta.frame().min_voxel_size();
    cams.iter()
        .map(|c| render_dvr(rf, c, step, &RenderOptions::default()).map_err(numerical("reference rendering")))
        .collect()
}

fn view_name(i: usize) -> String {
    format!("{REF_DIR}/view_{i:03}.ppm")
}

pub fn render_ref(cfg: &PipelineConfig, mode: Option<usize>) -> Result<(), CliError> {
    let inputs = load_inputs(cfg)?;
    let rf = target_field(cfg, &inputs, mode)?;
    let cams = rig(cfg)?;
    let images = references(cfg, &rf, &cams)?;
    let out = prepare_out(cfg, Some(REF_DIR))?;
    let mut artifacts = Vec::new();
    for (i, img) in images.iter().enumerate() {
        artifacts.push(write(&out, &view_name(i), &img.to_ppm())?);
    }
    artifacts.push(write_json(&out, &format!("{REF_DIR}/rig.json"), &cams)?);
    println!("rendered {} reference views into {}", images.len(), out.join(REF_DIR).display());
    manifest::record(&out, "render-ref", cfg, &artifacts)
}

fn read_splats(path: &Path) -> Result<Vec<wavesplat::construct::PlyVertex>, CliError> {
    let bytes = std::fs::read(path).map_err(config(&path.display().to_string()))?;
    import_ply(&bytes).map_err(config(&path.display().to_string()))
}

#[derive(Serialize)]
struct ViewMetrics {
    view_index: usize,
    psnr: f64,
    ssim: f64,
}

pub fn eval(cfg: &PipelineConfig, plys: &[PathBuf], refs: Option<&Path>) -> Result<(), CliError> {
    let out = prepare_out(cfg, None)?;
    let plys: Vec<PathBuf> = if plys.is_empty() {
        (0..cfg.tf.count).map(|h| out.join(mode_name(h))).collect()
    } else {
        plys.to_vec()
    };
    let mut splats = Vec::new();
    for p in &plys {
        splats.extend(read_splats(p)?.iter().map(|v| v.to_splat()));
    }
    let cams = rig(cfg)?;
    let targets = match refs {
        Some(dir) => (0..cams.len())
            .map(|i| {
                let p = dir.join(format!("view_{i:03}.ppm"));
                Image::read_ppm(&p).map_err(config(&p.display().to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?,
        None => {
            let inputs = load_inputs(cfg)?;
            references(cfg, &apply_tf(&inputs.volume, &inputs.tf), &cams)?
        }
    };
    let opts = RenderOptions::default();
    let mut views = Vec::with_capacity(cams.len());
    for (i, (cam, target)) in cams.iter().zip(&targets).enumerate() {
        if target.resolution() != cam.resolution() {
            return Err(CliError::Config(format!(
                "reference view {i} is {:?} but rig.resolution is {:?}",
                target.resolution(),
                cam.resolution()
            )));
        }
        let img = render_splats(&splats, cam, &opts).map_err(numerical("splat rendering"))?;
        views.push(ViewMetrics {
            view_index: i,
            psnr: psnr(&img, target).map_err(numerical("psnr"))?,
            ssim: ssim(&img, target).map_err(numerical("ssim"))?,
        });
    }
    let n = views.len() as f64;
    let mean_psnr = views.iter().map(|v| v.psnr).sum::<f64>() / n;
    let mean_ssim = views.iter().map(|v| v.ssim).sum::<f64>() / n;
    println!("{} splats over {} views: mean PSNR {mean_psnr:.2} dB, mean SSIM {mean_ssim:.4}", splats.len(), views.len());
    let metrics = json!({
        "splats": splats.len(),
        "views": views,
        "mean_psnr": mean_psnr,
        "mean_ssim": mean_ssim,
    });
    let rel = write_json(&out, "metrics.json", &metrics)?;
    manifest::record(&out, "eval", cfg, &[rel])
}

pub fn finetune(cfg: &PipelineConfig, ply: &Path, mode: Option<usize>) -> Result<(), CliError> {
    let input = std::fs::read(ply).map_err(config(&ply.display().to_string()))?;
    let vertices = import_ply(&input).map_err(config(&ply.display().to_string()))?;
    let inputs = load_inputs(cfg)?;
    let ft = &cfg.finetune;
    let rates = ft
        .rates
        .unwrap_or_else(|| LearningRates::for_extent(inputs.volume.meta.frame().world_box().half_diagonal()));
    let out = prepare_out(cfg, Some(FINETUNE_DIR))?;
    let ply_rel = format!("{FINETUNE_DIR}/refined.ply");
    let state_rel = format!("{FINETUNE_DIR}/refined.state.json");
    let log_rel = format!("{FINETUNE_DIR}/log.csv");
    let params = SplatParams::from_vertices(&vertices);
    let mut artifacts = Vec::new();
    if ft.iters == 0 {
        artifacts.push(write(&out, &ply_rel, &input)?);
        let state = OptState::new(params.len(), rates, Default::default());
        write_state(&out.join(&state_rel), &state).map_err(io(&state_rel))?;
        artifacts.push(state_rel);
        artifacts.push(write(&out, &log_rel, log_to_csv(&[]).as_bytes())?);
        println!("iters = 0: copied {} unchanged", ply.display());
        return manifest::record(&out, "finetune", cfg, &artifacts);
    }
    let rf = target_field(cfg, &inputs, mode)?;
    let cams = rig(cfg)?;
    let views: Vec<View> = references(cfg, &rf, &cams)?
        .into_iter()
        .zip(cams)
        .map(|(target, camera)| View { camera, target })
        .collect();
    let mut config = FinetuneConfig::new(ft.iters, rates, ft.seed);
    config.lambda_ssim = ft.lambda_ssim;
    let (loss0, psnr0) = evaluate_views(&params, &views, ft.lambda_ssim, &config.render).map_err(finetune_error)?;
    let outcome = optimize(params, &views, &config).map_err(finetune_error)?;
    let (loss1, psnr1) =
        evaluate_views(&outcome.params, &views, ft.lambda_ssim, &config.render).map_err(finetune_error)?;
    let bytes = export_ply(&outcome.params.materialize()).map_err(numerical("refined splats"))?;
    artifacts.push(write(&out, &ply_rel, &bytes)?);
    write_state(&out.join(&state_rel), &outcome.state).map_err(io(&state_rel))?;
    artifacts.push(state_rel);
    artifacts.push(write(&out, &log_rel, log_to_csv(&outcome.log).as_bytes())?);
    println!(
        "{} iterations over {} views: mean loss {loss0:.5} -> {loss1:.5}, mean PSNR {psnr0:.2} -> {psnr1:.2} dB",
        ft.iters,
        views.len()
    );
    manifest::record(&out, "finetune", cfg, &artifacts)
}

fn finetune_error(e: FinetuneError) -> CliError {
    match e {
        FinetuneError::InvalidConfig(m) => CliError::Config(m),
        other => CliError::Numerical(other.to_string()),
    }
}
