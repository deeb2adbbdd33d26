//! Synthetic moving-shape clips, the STMF container and PGM export.
//!
//! ```
//! use stmfa::data::{render_clip, Preset, PresetParams};
//!
//! let spec = Preset::TwoSpeed.sample(&PresetParams::default(), 7);
//! let clip = render_clip(&spec).unwrap();
//! assert_eq!(clip.tensor().shape(), &[16, 32, 32, 1]);
//! assert!(clip.check_range().is_ok());
//! ```

mod dataset;
mod pgm;
mod scene;
mod stmf;

pub use dataset::{
    clip_seeds, generate_clips, generate_clips_threaded, load_split, make_dataset, make_dataset_threaded, read_manifest, split_sizes, write_manifest, ManifestRow,
    Split, MANIFEST_FILE, MANIFEST_OBJECTS,
};
pub use pgm::{decode_pgm, encode_pgm, export_pgm, quantize, read_pgm, sidecar_path};
pub use scene::{
    coverage, detail_energy_over_object, render_clip, ObjectShape, Preset, PresetParams, SceneObject, SceneSpec,
};
pub use stmf::{decode_stmf, encode_stmf, read_stmf, write_stmf, Dtype, STMF_HEADER_LEN, STMF_MAGIC, STMF_VERSION};
