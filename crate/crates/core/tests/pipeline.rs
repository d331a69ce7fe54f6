use std::path::Path;

use thermopol::estimation::{estimate_normals, EmissionMode, EstimationParams, NormalSpace};
use thermopol::evaluation::{angular_error_map, summarize};
use thermopol::imaging::CameraModel;
use thermopol::io::{read_normals, read_stokes, write_normals, write_stokes, StokesFiles};
use thermopol::reconstruction::reconstruct_stokes;
use thermopol::simulator::{render_session, SceneSpec};

const TAU_REF: f64 = 296.15;

fn angles(n: usize) -> Vec<f64> {
    (0..n).map(|j| j as f64 * std::f64::consts::PI / n as f64).collect()
}

/// Render, reconstruct, estimate and score a noiseless capture.
fn median_error(scene: &SceneSpec) -> (f64, usize) {
    let cam = CameraModel::ideal(1.3, 0.9);
    let sim = render_session(scene, &cam, &angles(4), TAU_REF, 5).unwrap();
    let rec = reconstruct_stokes(&sim.session).unwrap();
    let m = &scene.material;
    let params = EstimationParams::new(m.eta, m.ratio(), EmissionMode::EmissionDominant).unwrap();
    let est = estimate_normals(&rec.stokes, &params, &scene.projection).unwrap();
    let errors = angular_error_map(&est.normals, &sim.ground_truth.normals).unwrap();
    let report = summarize(&errors, &sim.ground_truth.mask).unwrap();
    (report.median, report.n_pixels)
}

fn write_scene(dir: &Path, geometry: &str, projection: &str, res: usize) -> SceneSpec {
    let path = dir.join("scene.json");
    let json = format!(
        r#"{{"geometry":{geometry},"eta":1.6,"tau_obj_c":60,"tau_env_c":20,
            "projection":{projection},"resolution":[{res},{res}],
            "pose":{{"translation":[0,0,-5]}}}}"#
    );
    std::fs::write(&path, json).unwrap();
    SceneSpec::load(&path).unwrap()
}

/// Unit octahedron, counter-clockwise faces.
fn octahedron_obj() -> String {
    let mut out = String::new();
    let v = [
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ];
    for p in v {
        out += &format!("v {} {} {}\n", p[0], p[1], p[2]);
    }
    for (a, b, c) in [
        (1, 3, 5),
        (3, 2, 5),
        (2, 4, 5),
        (4, 1, 5),
        (3, 1, 6),
        (2, 3, 6),
        (4, 2, 6),
        (1, 4, 6),
    ] {
        out += &format!("f {a} {b} {c}\n");
    }
    out
}

#[test]
fn mesh_scene_from_obj_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("octa.obj"), octahedron_obj()).unwrap();
    let scene = write_scene(
        dir.path(),
        r#"{"type":"mesh","path":"octa.obj"}"#,
        r#"{"kind":"orthographic","pixel_size":0.04}"#,
        48,
    );
    let (median, n) = median_error(&scene);
    // Flat facets make the inversion exact away from the ridges.
    assert!(n > 500, "{n}");
    assert!(median < 1.0, "{median}");
}

#[test]
fn pinhole_sphere() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(
        dir.path(),
        r#"{"type":"sphere","center":[0,0,-1],"radius":1}"#,
        r#"{"kind":"pinhole","focal_length":150}"#,
        64,
    );
    let (median, n) = median_error(&scene);
    assert!(n > 1000, "{n}");
    assert!(median < 1.0, "{median}");
}

#[test]
fn stokes_and_normals_survive_files() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(
        dir.path(),
        r#"{"type":"height_field","rows":5,"cols":5,"spacing":0.5,
            "heights":[0,0,0,0,0, 0,0.2,0.3,0.2,0, 0,0.3,0.5,0.3,0, 0,0.2,0.3,0.2,0, 0,0,0,0,0]}"#,
        r#"{"kind":"orthographic","pixel_size":0.05}"#,
        32,
    );
    let cam = CameraModel::ideal(1.0, 1.0);
    let sim = render_session(&scene, &cam, &angles(3), TAU_REF, 1).unwrap();

    let files = StokesFiles::with_prefix("stokes");
    write_stokes(&sim.stokes, dir.path(), &files).unwrap();
    let back = read_stokes(dir.path(), &files).unwrap();
    for (a, b) in sim.stokes.stokes.data().iter().zip(back.stokes.data()) {
        // PFM stores f32.
        for (x, y) in [(a.s0, b.s0), (a.s1, b.s1), (a.s2, b.s2)] {
            assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0));
        }
    }

    let normals = &sim.ground_truth.normals;
    write_normals(normals, dir.path().join("n.pfm")).unwrap();
    let read = read_normals(dir.path().join("n.pfm"), NormalSpace::Camera).unwrap();
    assert_eq!(read.mask, normals.mask);
    let errors = angular_error_map(&read, normals).unwrap();
    let report = summarize(&errors, &normals.mask).unwrap();
    assert!(report.mean < 1e-3, "{}", report.mean);
}
