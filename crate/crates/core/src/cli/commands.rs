use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::autodiff::gradcheck::{run_op_suite, CheckResult, REGISTERED_OPS};
use crate::config::{RunConfig, SNAPSHOT_FILE};
use crate::data::{export_pgm, load_split, make_dataset_threaded, read_stmf, split_sizes, write_stmf, Dtype, Preset, PresetParams, Split};
use crate::error::{Error, Result};
use crate::metrics::{mean_finite, score_frames, SsimConfig};
use crate::model::{load_generator, micro_gradcheck, train, CHECKPOINT_FILE, LOG_FILE};
use crate::tensor::Tensor;
use crate::video::VideoTensor;
use crate::wavelet::{
    inverse_multilevel_spatial, inverse_multilevel_temporal, multilevel_spatial, multilevel_temporal_capped, Family,
};

use super::{Command, ModeArg, PresetArg};

/// Largest acceptable reconstruction error for `decompose`.
pub const RECONSTRUCTION_TOLERANCE: f64 = 1e-8;
pub const PREDICTION_FILE: &str = "pred.stmf";
pub const TRUTH_DIR: &str = "truth";
pub const TRUTH_FILE: &str = "truth.stmf";

pub(super) fn dispatch(cmd: Command, threads: usize) -> Result<i32> {
    match cmd {
        Command::GenerateData { out, clips, preset, seed } => generate_data(&out, clips, preset, seed, threads),
        Command::Decompose { input, mode, levels, wavelet, out } => {
            decompose(&input, mode, levels, wavelet.into(), &out, threads)
        }
        Command::Train { data, config, ablation, out } => {
            train_cmd(&data, config.as_deref(), ablation.map(Into::into), &out, threads)
        }
        Command::Predict { checkpoint, input, n, out } => predict(&checkpoint, &input, n, &out, threads),
        Command::Evaluate { pred, truth, out } => evaluate(&pred, &truth, &out, threads),
        Command::Gradcheck { seed, corrupt_op } => gradcheck(seed, corrupt_op.as_deref()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Snapshot holding only command flags.
fn write_flag_snapshot(path: &Path, flags: &[(&str, String)]) -> Result<()> {
    let mut text = String::from("# stmfa effective configuration\n");
    for (k, v) in flags {
        text.push_str(&format!("{k} = {v}\n"));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn generate_data(out: &Path, clips: usize, preset: PresetArg, seed: u64, threads: usize) -> Result<i32> {
    let preset = match preset {
        PresetArg::TwoSpeed => Preset::TwoSpeed,
        PresetArg::Static => Preset::Static,
        PresetArg::Random => Preset::Random,
    };
    let rows = make_dataset_threaded(out, clips, preset, &PresetParams::default(), seed, threads)?;
    write_flag_snapshot(
        &out.join(SNAPSHOT_FILE),
        &[
            ("command", "generate-data".into()),
            ("out", path_str(out)),
            ("clips", clips.to_string()),
            ("preset", preset.to_string()),
            ("seed", seed.to_string()),
            ("threads", threads.to_string()),
        ],
    )?;
    let (train, val) = split_sizes(rows.len());
    println!("wrote {} clips ({train} train, {val} val) to {}", rows.len(), out.display());
    Ok(0)
}

/// Channel `c` of an `(H, W, C)` image as `(H, W, 1)`.
fn channel(image: &Tensor, c: usize) -> Tensor {
    let s = image.shape();
    let data = image.data().iter().skip(c).step_by(s[2]).copied().collect();
    Tensor::new(&[s[0], s[1], 1], data).expect("channel extents")
}

/// Writes one PGM per channel of `image` (suffix `_c{k}` when there are
/// several channels).
fn export_channels(dir: &Path, stem: &str, image: &Tensor, normalize: bool) -> Result<()> {
    let c = image.shape()[2];
    for k in 0..c {
        let name = if c == 1 { format!("{stem}.pgm") } else { format!("{stem}_c{k}.pgm") };
        export_pgm(&channel(image, k), &dir.join(name), normalize)?;
    }
    Ok(())
}

fn stack(frames: &[Tensor]) -> Result<VideoTensor> {
    VideoTensor::from_frames(frames)
}

fn decompose(input: &Path, mode: ModeArg, levels: usize, family: Family, out: &Path, threads: usize) -> Result<i32> {
    if levels == 0 {
        return Err(Error::Config("--levels must be at least 1".into()));
    }
    let clip = read_stmf(input)?;
    create_dir(out)?;
    let filter = family.filter();
    let error = match mode {
        ModeArg::Spatial => {
            let mut pyramids = Vec::with_capacity(clip.len());
            let mut error = 0.0f64;
            for t in 0..clip.len() {
                let frame = clip.frame(t);
                let p = multilevel_spatial(&frame, &filter, levels)?;
                error = error.max(inverse_multilevel_spatial(&p, &filter)?.max_abs_diff(&frame));
                pyramids.push(p);
            }
            for (l, level) in pyramids[0].levels.iter().enumerate() {
                let (h, w) = level.input_extents;
                if h % 2 == 1 || w % 2 == 1 {
                    println!("level {}: padded {h}x{w} to {}x{}", l + 1, h + h % 2, w + w % 2);
                }
            }
            let suffix = |l: usize| if levels == 1 { String::new() } else { format!("_{l}") };
            for l in 0..levels {
                let pick = |f: &dyn Fn(&crate::wavelet::SpatialLevel) -> Tensor| -> Vec<Tensor> {
                    pyramids.iter().map(|p| f(&p.levels[l])).collect()
                };
                let mut bands = vec![
                    ("LH", pick(&|lv| lv.lh.clone())),
                    ("HL", pick(&|lv| lv.hl.clone())),
                    ("HH", pick(&|lv| lv.hh.clone())),
                ];
                if l + 1 == levels {
                    bands.insert(0, ("LL", pyramids.iter().map(|p| p.deepest_ll().clone()).collect()));
                }
                for (name, frames) in bands {
                    let stem = format!("{name}{}", suffix(l + 1));
                    export_channels(out, &stem, &frames[0], true)?;
                    write_stmf(&out.join(format!("{stem}.stmf")), &stack(&frames)?, Dtype::F64)?;
                }
            }
            error
        }
        ModeArg::Temporal => {
            let bands = multilevel_temporal_capped(clip.tensor(), &filter, levels)?;
            if bands.padded_length() != clip.len() && !bands.levels.is_empty() {
                let padded: usize = 2 * bands.levels[0].high.shape()[0];
                println!("padded {} frames to {padded}", clip.len());
            }
            let as_video = |t: &Tensor| VideoTensor::new(t.clone());
            let low = as_video(bands.deepest_low())?;
            write_stmf(&out.join("low.stmf"), &low, Dtype::F64)?;
            for k in 0..low.len() {
                export_channels(out, &format!("low_t{k}"), &low.frame(k), true)?;
            }
            for (l, level) in bands.levels.iter().enumerate() {
                let high = as_video(&level.high)?;
                write_stmf(&out.join(format!("high_{}.stmf", l + 1)), &high, Dtype::F64)?;
                for k in 0..high.len() {
                    export_channels(out, &format!("high_{}_t{k}", l + 1), &high.frame(k), true)?;
                }
            }
            let counts = bands.frame_counts();
            println!(
                "temporal bands: low {} frames, high {} frames",
                counts[0],
                counts[1..].iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" + ")
            );
            inverse_multilevel_temporal(&bands, &filter)?.max_abs_diff(clip.tensor())
        }
    };
    write_flag_snapshot(
        &out.join(SNAPSHOT_FILE),
        &[
            ("command", "decompose".into()),
            ("in", path_str(input)),
            ("mode", if mode == ModeArg::Spatial { "spatial".into() } else { "temporal".into() }),
            ("levels", levels.to_string()),
            ("wavelet", family.to_string()),
            ("out", path_str(out)),
            ("threads", threads.to_string()),
        ],
    )?;
    println!("reconstruction error (max abs): {error:.3e}");
    if error > RECONSTRUCTION_TOLERANCE {
        eprintln!("error: reconstruction error exceeds {RECONSTRUCTION_TOLERANCE:e}");
        return Ok(3);
    }
    Ok(0)
}

fn train_cmd(
    data: &Path,
    config: Option<&Path>,
    ablation: Option<crate::model::Ablation>,
    out: &Path,
    threads: usize,
) -> Result<i32> {
    let mut cfg = match config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(a) = ablation {
        cfg.model.ablation = a;
    }
    let clips = load_split(data, Split::Train)?;
    let first = clips
        .first()
        .ok_or_else(|| Error::Config(format!("no training clips listed in {}", data.display())))?;
    cfg.model.channels = first.frame_shape()[2];
    cfg.model.validate()?;
    cfg.train.validate()?;
    cfg.flags = BTreeMap::from([
        ("command".to_string(), "train".to_string()),
        ("data".to_string(), path_str(data)),
        ("out".to_string(), path_str(out)),
        ("threads".to_string(), threads.to_string()),
    ]);
    if let Some(p) = config {
        cfg.flags.insert("config".into(), path_str(p));
    }
    create_dir(out)?;
    cfg.write_snapshot(&out.join(SNAPSHOT_FILE))?;
    let every = (cfg.train.iterations / 10).max(1);
    let outcome = train(&clips, &cfg.model, &cfg.train, Some(out), |row| {
        if row.iter % every == 0 {
            println!(
                "iter {:>6}  loss_d {:.4}  loss_img {:.4}  loss_g {:.4}",
                row.iter,
                row.loss_d,
                row.loss_img(),
                row.loss_g
            );
        }
    })?;
    println!(
        "trained {} iterations ({} generator parameters, ablation {}); wrote {} and {}",
        outcome.log.len(),
        outcome.trainer.generator.store.num_scalars(),
        cfg.model.ablation,
        out.join(LOG_FILE).display(),
        out.join(CHECKPOINT_FILE).display()
    );
    Ok(0)
}

fn predict(checkpoint: &Path, input: &Path, n: usize, out: &Path, threads: usize) -> Result<i32> {
    if n == 0 {
        return Err(Error::Config("--n must be at least 1".into()));
    }
    let dir = checkpoint.parent().unwrap_or(Path::new("."));
    let mut cfg = RunConfig::from_file(&dir.join(SNAPSHOT_FILE))?;
    let gen = load_generator(&cfg.model, checkpoint)?;
    let clip = read_stmf(input)?;
    let m = cfg.model.input_frames;
    if clip.len() < m {
        return Err(Error::contract(
            "predict",
            format!("the model observes {m} frames but {} holds {}", input.display(), clip.len()),
        ));
    }
    let y = gen.predict_sequence(&clip.frames(0, m)?, n)?;
    create_dir(out)?;
    write_stmf(&out.join(PREDICTION_FILE), &y, Dtype::F64)?;
    for k in 0..y.len() {
        export_channels(out, &format!("pred_t{k}"), &y.frame(k), false)?;
    }
    if clip.len() >= m + n {
        let truth_dir = out.join(TRUTH_DIR);
        create_dir(&truth_dir)?;
        write_stmf(&truth_dir.join(TRUTH_FILE), &clip.frames(m, n)?, Dtype::F64)?;
        println!("wrote ground truth frames {m}..{} to {}", m + n, truth_dir.display());
    }
    cfg.flags = BTreeMap::from([
        ("command".to_string(), "predict".to_string()),
        ("checkpoint".to_string(), path_str(checkpoint)),
        ("in".to_string(), path_str(input)),
        ("n".to_string(), n.to_string()),
        ("out".to_string(), path_str(out)),
        ("threads".to_string(), threads.to_string()),
    ]);
    cfg.write_snapshot(&out.join(SNAPSHOT_FILE))?;
    println!("predicted {n} frames from {m} observed; wrote {}", out.join(PREDICTION_FILE).display());
    Ok(0)
}

fn stmf_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "stmf"))
        .collect();
    files.sort();
    Ok(files)
}

/// Pairs prediction and truth files by name, or the single file of each.
fn pair_files(pred: &Path, truth: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let p = stmf_files(pred)?;
    let t = stmf_files(truth)?;
    let names = |v: &[PathBuf]| v.iter().map(|x| x.file_name().map(|s| s.to_owned())).collect::<Vec<_>>();
    if !p.is_empty() && names(&p) == names(&t) {
        return Ok(p.into_iter().zip(t).collect());
    }
    if p.len() == 1 && t.len() == 1 {
        return Ok(vec![(p[0].clone(), t[0].clone())]);
    }
    Err(Error::Config(format!(
        "cannot pair {} prediction file(s) in {} with {} truth file(s) in {}: names must match, or each directory must hold exactly one .stmf file",
        p.len(),
        pred.display(),
        t.len(),
        truth.display()
    )))
}

pub const EVAL_COMMENT: &str = "# psnr_db uses peak 1.0; ssim uses an 11x11 Gaussian window (sigma 1.5). \
Each row averages one frame index over all clip pairs. The mean row is the arithmetic mean of the rows \
above over finite values only: identical frames have psnr inf and are excluded from the psnr mean (inf if every row is inf).";

fn evaluate(pred: &Path, truth: &Path, out: &Path, threads: usize) -> Result<i32> {
    let pairs = pair_files(pred, truth)?;
    let cfg = SsimConfig::default();
    let mut per_frame: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for (p, t) in &pairs {
        let scores = score_frames(&read_stmf(t)?, &read_stmf(p)?, &cfg)?;
        if per_frame.is_empty() {
            per_frame = vec![(Vec::new(), Vec::new()); scores.len()];
        } else if per_frame.len() != scores.len() {
            return Err(Error::contract(
                "evaluate",
                format!("{} has {} frames, earlier pairs have {}", p.display(), scores.len(), per_frame.len()),
            ));
        }
        for (acc, s) in per_frame.iter_mut().zip(scores) {
            acc.0.push(s.psnr_db);
            acc.1.push(s.ssim);
        }
    }
    let rows: Vec<(f64, f64)> = per_frame
        .iter()
        .map(|(p, s)| (mean_finite(p.iter().copied()), s.iter().sum::<f64>() / s.len() as f64))
        .collect();
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let mut file = fs::File::create(out).map_err(|e| Error::io(out, e))?;
    writeln!(file, "{EVAL_COMMENT}").map_err(|e| Error::io(out, e))?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::Io { path: out.to_path_buf(), source: e.into() };
    w.write_record(["frame_index", "psnr_db", "ssim"]).map_err(csv_err)?;
    for (i, (p, s)) in rows.iter().enumerate() {
        w.write_record([i.to_string(), p.to_string(), s.to_string()]).map_err(csv_err)?;
    }
    let mean_psnr = mean_finite(rows.iter().map(|r| r.0));
    let mean_ssim = rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64;
    w.write_record(["mean".to_string(), mean_psnr.to_string(), mean_ssim.to_string()]).map_err(csv_err)?;
    w.flush().map_err(|e| Error::io(out, e))?;
    let snapshot = out.with_extension("config.txt");
    write_flag_snapshot(
        &snapshot,
        &[
            ("command", "evaluate".into()),
            ("pred", path_str(pred)),
            ("truth", path_str(truth)),
            ("out", path_str(out)),
            ("threads", threads.to_string()),
        ],
    )?;
    println!(
        "{} frames over {} pair(s): mean psnr {mean_psnr:.3} dB, mean ssim {mean_ssim:.4}; wrote {}",
        rows.len(),
        pairs.len(),
        out.display()
    );
    Ok(0)
}

fn report(r: &CheckResult) {
    println!(
        "{:<22} max_rel_err {:.3e}  tol {:.0e}  {}",
        r.name,
        r.max_rel_error,
        r.tolerance,
        if r.passed() { "ok" } else { "FAIL" }
    );
}

fn gradcheck(seed: u64, corrupt: Option<&str>) -> Result<i32> {
    if let Some(op) = corrupt {
        if !REGISTERED_OPS.contains(&op) {
            return Err(Error::Config(format!("unknown op {op:?} for --corrupt-op")));
        }
    }
    let results = run_op_suite(seed, corrupt)?;
    results.iter().for_each(report);
    let micro = micro_gradcheck(seed)?;
    report(&micro);
    println!("ops checked: {} (registered: {})", results.len(), REGISTERED_OPS.len());
    let failed: Vec<&str> = results
        .iter()
        .chain(std::iter::once(&micro))
        .filter(|r| !r.passed())
        .map(|r| r.name.as_str())
        .collect();
    if failed.is_empty() {
        println!("gradcheck passed");
        Ok(0)
    } else {
        eprintln!("gradcheck failed: {}", failed.join(", "));
        Ok(3)
    }
}
