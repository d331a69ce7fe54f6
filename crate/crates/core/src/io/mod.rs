//! File formats: PFM imagery, PNG normal visualizations and JSON manifests.

pub mod manifest;
pub mod pfm;
pub mod visual;

pub use manifest::{
    parse_calibration, read_calibration, read_mask, read_normals, read_shots, read_stokes, write_mask,
    write_normals, write_shots, write_stokes, EstimationRecord, GroundTruthFiles, NormalFiles, RawEntry,
    SessionManifest, ShotEntry, ShotsManifest, StokesFiles, MANIFEST_FILE, MANIFEST_VERSION, SHOTS_FILE,
};
pub use pfm::{encode_pfm, parse_pfm, read_image, read_pfm, write_image, write_pfm, Pfm};
pub use visual::{encode_normal_png, write_normal_png};
