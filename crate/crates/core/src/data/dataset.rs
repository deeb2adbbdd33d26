use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::video::VideoTensor;

use super::scene::{render_clip, Preset, PresetParams, SceneSpec};
use super::stmf::{read_stmf, write_stmf, Dtype};

pub const MANIFEST_FILE: &str = "manifest.csv";
/// Velocity columns are written for this many objects; unused ones are empty.
pub const MANIFEST_OBJECTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

impl Split {
    fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

/// `(train, val)` sizes: `⌈0.9n⌉` and `⌊0.1n⌋`.
pub fn split_sizes(n: usize) -> (usize, usize) {
    let train = (9 * n).div_ceil(10);
    (train, n - train)
}

/// Per-clip scene seeds drawn from one dataset seed.
pub fn clip_seeds(n: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen()).collect()
}

/// Renders `n` clips in memory, with their scene descriptions.
pub fn generate_clips(n: usize, preset: Preset, params: &PresetParams, seed: u64) -> Result<Vec<(SceneSpec, VideoTensor)>> {
    generate_clips_threaded(n, preset, params, seed, 1)
}

/// As [`generate_clips`], rendering on up to `threads` threads. The output
/// does not depend on the thread count.
pub fn generate_clips_threaded(
    n: usize,
    preset: Preset,
    params: &PresetParams,
    seed: u64,
    threads: usize,
) -> Result<Vec<(SceneSpec, VideoTensor)>> {
    let seeds = clip_seeds(n, seed);
    let render = |s: &u64| {
        let spec = preset.sample(params, *s);
        let clip = render_clip(&spec)?;
        Ok((spec, clip))
    };
    let threads = threads.max(1).min(n.max(1));
    if threads == 1 {
        return seeds.iter().map(render).collect();
    }
    let chunk = n.div_ceil(threads);
    let parts: Vec<Result<Vec<_>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|c| scope.spawn(move || c.iter().map(render).collect::<Result<Vec<_>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("render thread panicked")).collect()
    });
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    /// Relative to the dataset directory.
    pub path: String,
    pub split: Split,
    pub seed: u64,
    /// `(vy, vx)` per object in pixels per frame.
    pub velocities: Vec<(f64, f64)>,
}

fn manifest_header() -> Vec<String> {
    let mut h = vec!["path".to_string(), "split".into(), "seed".into()];
    for i in 0..MANIFEST_OBJECTS {
        h.push(format!("v{i}_y"));
        h.push(format!("v{i}_x"));
    }
    h
}

/// Writes `n` clips as STMF files plus `manifest.csv` into `dir`.
pub fn make_dataset(dir: &Path, n: usize, preset: Preset, params: &PresetParams, seed: u64) -> Result<Vec<ManifestRow>> {
    make_dataset_threaded(dir, n, preset, params, seed, 1)
}

/// As [`make_dataset`], rendering on up to `threads` threads.
pub fn make_dataset_threaded(
    dir: &Path,
    n: usize,
    preset: Preset,
    params: &PresetParams,
    seed: u64,
    threads: usize,
) -> Result<Vec<ManifestRow>> {
    if n < 2 {
        return Err(Error::Config(format!("a dataset needs at least 2 clips, got {n}")));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (train, _) = split_sizes(n);
    let mut rows = Vec::with_capacity(n);
    for (i, (spec, clip)) in generate_clips_threaded(n, preset, params, seed, threads)?.into_iter().enumerate() {
        let name = format!("clip_{i:04}.stmf");
        write_stmf(&dir.join(&name), &clip, Dtype::F64)?;
        rows.push(ManifestRow {
            path: name,
            split: if i < train { Split::Train } else { Split::Val },
            seed: spec.seed,
            velocities: spec.objects.iter().map(|o| o.velocity()).collect(),
        });
    }
    write_manifest(&dir.join(MANIFEST_FILE), &rows)?;
    Ok(rows)
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let io = |e: csv::Error| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(manifest_header()).map_err(io)?;
    for r in rows {
        let mut rec = vec![r.path.clone(), r.split.as_str().into(), r.seed.to_string()];
        for i in 0..MANIFEST_OBJECTS {
            match r.velocities.get(i) {
                Some((vy, vx)) => {
                    rec.push(vy.to_string());
                    rec.push(vx.to_string());
                }
                None => rec.extend([String::new(), String::new()]),
            }
        }
        w.write_record(rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestRow>> {
    let path = dir.join(MANIFEST_FILE);
    let bad = |line: u64, msg: String| Error::Format {
        path: path.clone(),
        offset: line,
        msg,
    };
    let mut r = csv::Reader::from_path(&path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e.into(),
    })?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(0, e.to_string()))?;
        let at = rec.position().map_or(0, |p| p.byte());
        let field = |i: usize| rec.get(i).unwrap_or("");
        let split = match field(1) {
            "train" => Split::Train,
            "val" => Split::Val,
            other => return Err(bad(at, format!("unknown split {other:?}"))),
        };
        let seed = field(2).parse().map_err(|_| bad(at, format!("bad seed {:?}", field(2))))?;
        let mut velocities = Vec::new();
        for i in 0..MANIFEST_OBJECTS {
            let (y, x) = (field(3 + 2 * i), field(4 + 2 * i));
            if y.is_empty() {
                break;
            }
            let p = |s: &str| s.parse::<f64>().map_err(|_| bad(at, format!("bad velocity {s:?}")));
            velocities.push((p(y)?, p(x)?));
        }
        rows.push(ManifestRow {
            path: field(0).to_string(),
            split,
            seed,
            velocities,
        });
    }
    Ok(rows)
}

/// Loads every clip of one split listed in `dir/manifest.csv`.
pub fn load_split(dir: &Path, split: Split) -> Result<Vec<VideoTensor>> {
    read_manifest(dir)?
        .iter()
        .filter(|r| r.split == split)
        .map(|r| read_stmf(&dataset_path(dir, &r.path)))
        .collect()
}

fn dataset_path(dir: &Path, rel: &str) -> PathBuf {
    dir.join(rel)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_arithmetic() {
        assert_eq!(split_sizes(10), (9, 1));
        assert_eq!(split_sizes(2), (2, 0));
        assert_eq!(split_sizes(15), (14, 1));
        assert_eq!(split_sizes(200), (180, 20));
    }

    #[test]
    fn thread_count_does_not_change_clips() {
        let params = PresetParams::default();
        let a = generate_clips(5, Preset::TwoSpeed, &params, 9).unwrap();
        let b = generate_clips_threaded(5, Preset::TwoSpeed, &params, 9, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seeds_are_reproducible() {
        assert_eq!(clip_seeds(5, 3), clip_seeds(5, 3));
        assert_ne!(clip_seeds(5, 3), clip_seeds(5, 4));
    }
}
