use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use thermopol::calibration::{calibrate_gain, calibrate_response, CalibrationSource};
use thermopol::estimation::{estimate_normals, EmissionMode, EstimationParams, NormalSpace};
use thermopol::evaluation::{angular_error_map, summarize};
use thermopol::imaging::CameraModel;
use thermopol::io::{
    read_calibration, read_image, read_mask, read_normals, read_shots, read_stokes, write_image, write_mask,
    write_normal_png, write_normals, write_shots, write_stokes, EstimationRecord, GroundTruthFiles, NormalFiles,
    RawEntry, SessionManifest, StokesFiles, MANIFEST_FILE, MANIFEST_VERSION,
};
use thermopol::polarization::{build_dolp_curve, CELSIUS_OFFSET, DEFAULT_CURVE_SAMPLES};
use thermopol::reconstruction::{reconstruct_stokes, CaptureSession, CONDITION_WARN};
use thermopol::simulator::{calibration_shots, render_session, CalibrationPlan, ProjectionModel, SceneSpec};

#[derive(Parser)]
#[command(name = "thermopol", version, about = "LWIR shape-from-polarization pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic capture session from a scene file.
    Simulate(SimulateArgs),
    /// Fit camera gain and polarimetric response from blackbody shots.
    Calibrate(CalibrateArgs),
    /// Recover the Stokes map of a session.
    Reconstruct(ReconstructArgs),
    /// Estimate surface normals from a reconstructed session.
    Estimate(EstimateArgs),
    /// Compare estimated normals against ground truth.
    Evaluate(EvaluateArgs),
    /// Print the DoLP-versus-zenith curve as CSV.
    Curve(CurveArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scene JSON.
    #[arg(long)]
    scene: PathBuf,
    /// Output session directory.
    #[arg(long)]
    out: PathBuf,
    /// Polarizer angles in degrees, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "n_angles")]
    angles: Option<Vec<f64>>,
    /// Use N angles evenly spaced over [0, 180) degrees.
    #[arg(long)]
    n_angles: Option<usize>,
    /// Reference blackbody temperature, Celsius.
    #[arg(long, default_value_t = 23.0)]
    tau_ref: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Camera model JSON; defaults to c = 1.7, k = 0.95 with nonzero offsets.
    #[arg(long)]
    camera: Option<PathBuf>,
    /// Override the camera noise standard deviation (digital numbers).
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Also write a calibration shot directory for the same camera.
    #[arg(long)]
    calibration_out: Option<PathBuf>,
    /// Polarizer angle of the calibration source in degrees; omitted means an
    /// unpolarized blackbody.
    #[arg(long)]
    calibration_source_aolp: Option<f64>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Directory containing shots.json.
    #[arg(long)]
    shots: PathBuf,
    /// Output calibration JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Session directory (or its manifest).
    #[arg(long)]
    session: PathBuf,
    /// Calibration JSON; replaces the gain and response recorded in the
    /// manifest.
    #[arg(long)]
    calibration: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    session: PathBuf,
    /// Refractive index.
    #[arg(long)]
    eta: f64,
    /// Reflected-to-emitted radiance ratio L_R/L_E.
    #[arg(long)]
    ratio: f64,
    /// emission or reflection.
    #[arg(long)]
    mode: EmissionMode,
    #[arg(long, default_value_t = thermopol::estimation::DEFAULT_DOLP_FLOOR)]
    dolp_floor: f64,
    /// Projection JSON, e.g. '{"kind":"orthographic","pixel_size":0.01}';
    /// defaults to the one recorded in the manifest.
    #[arg(long)]
    projection: Option<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Session directory with estimated and ground-truth normals.
    #[arg(long, conflicts_with_all = ["estimate", "truth"])]
    session: Option<PathBuf>,
    /// Estimated normals PFM.
    #[arg(long, requires = "truth")]
    estimate: Option<PathBuf>,
    /// Ground-truth normals PFM.
    #[arg(long, requires = "estimate")]
    truth: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct CurveArgs {
    #[arg(long)]
    eta: f64,
    #[arg(long)]
    ratio: f64,
    /// Number of curve intervals over [0, 90) degrees (at least 256).
    #[arg(long, default_value_t = DEFAULT_CURVE_SAMPLES)]
    samples: usize,
}

fn manifest_path(session: &Path) -> PathBuf {
    if session.is_dir() {
        session.join(MANIFEST_FILE)
    } else {
        session.to_path_buf()
    }
}

fn load_manifest(session: &Path) -> Result<(SessionManifest, PathBuf, PathBuf)> {
    let path = manifest_path(session);
    let (m, dir) = SessionManifest::load(&path).with_context(|| format!("loading {}", path.display()))?;
    Ok((m, dir, path))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Non-ideal sensor used when no camera file is given.
fn default_camera() -> CameraModel {
    CameraModel {
        offset_base: 800.0,
        offset_pol: 25.0,
        offset_phase: 0.3,
        ..CameraModel::ideal(1.7, 0.95)
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let scene = SceneSpec::load(&args.scene).with_context(|| format!("loading scene {}", args.scene.display()))?;
    let mut cam = match &args.camera {
        Some(p) => read_json::<CameraModel>(p)?,
        None => default_camera(),
    };
    if let Some(sigma) = args.noise_sigma {
        cam.noise_sigma = sigma;
    }
    cam.validate()?;
    let angles: Vec<f64> = match (&args.angles, args.n_angles) {
        (Some(a), _) => a.iter().map(|d| d.to_radians()).collect(),
        (None, Some(n)) => (0..n).map(|j| j as f64 * PI / n as f64).collect(),
        (None, None) => vec![0.0, PI / 4.0, PI / 2.0, 3.0 * PI / 4.0],
    };
    let tau_ref = args.tau_ref + CELSIUS_OFFSET;
    let sim = render_session(&scene, &cam, &angles, tau_ref, args.seed)?;

    let dir = &args.out;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let scene_file = PathBuf::from("scene.json");
    std::fs::write(dir.join(&scene_file), serde_json::to_string_pretty(&scene.to_file())? + "\n")?;

    let mut raw_scene = Vec::new();
    let mut raw_reference = Vec::new();
    let mut diffs = Vec::new();
    for (j, ((s, r), (_, d))) in sim
        .raw_scene
        .iter()
        .zip(&sim.raw_reference)
        .zip(&sim.session.diffs)
        .enumerate()
    {
        let sf = PathBuf::from(format!("raw_scene_{j:03}.pfm"));
        let rf = PathBuf::from(format!("raw_reference_{j:03}.pfm"));
        let df = PathBuf::from(format!("diff_{j:03}.pfm"));
        write_image(&s.pixels, dir.join(&sf))?;
        write_image(&r.pixels, dir.join(&rf))?;
        write_image(d, dir.join(&df))?;
        raw_scene.push(RawEntry {
            psi: s.psi,
            timestamp_index: s.timestamp_index,
            file: sf,
        });
        raw_reference.push(RawEntry {
            psi: r.psi,
            timestamp_index: r.timestamp_index,
            file: rf,
        });
        diffs.push(df);
    }
    let mask = PathBuf::from("mask.pfm");
    write_mask(&sim.session.mask, dir.join(&mask))?;
    let gt = GroundTruthFiles {
        normals: "gt_normals.pfm".into(),
        mask: "gt_mask.pfm".into(),
        stokes: StokesFiles::with_prefix("gt_stokes"),
    };
    write_normals(&sim.ground_truth.normals, dir.join(&gt.normals))?;
    write_mask(&sim.ground_truth.mask, dir.join(&gt.mask))?;
    write_stokes(&sim.stokes, dir, &gt.stokes)?;

    let manifest = SessionManifest {
        version: MANIFEST_VERSION,
        scene: Some(scene_file),
        camera: cam,
        angles,
        tau_ref,
        seed: Some(args.seed),
        projection: Some(scene.projection),
        calibration: None,
        raw_scene,
        raw_reference,
        diffs,
        mask,
        stokes: None,
        normals: None,
        estimation: None,
        ground_truth: Some(gt),
    };
    manifest.save(dir.join(MANIFEST_FILE))?;

    if let Some(cal_dir) = &args.calibration_out {
        let plan = CalibrationPlan {
            source: match args.calibration_source_aolp {
                Some(deg) => CalibrationSource::Polarized { aolp: deg.to_radians() },
                None => CalibrationSource::Unpolarized,
            },
            ..CalibrationPlan::default()
        };
        let shots = calibration_shots(&cam, &plan, thermopol::imaging::derive_seed(args.seed, u64::MAX))?;
        write_shots(&shots, cal_dir)?;
        eprintln!("wrote {} calibration shots to {}", shots.len(), cal_dir.display());
    }
    eprintln!(
        "wrote session with {} angles, {} object pixels to {}",
        manifest.angles.len(),
        sim.ground_truth.mask.count(),
        dir.display()
    );
    Ok(())
}

fn calibrate(args: CalibrateArgs) -> Result<()> {
    let shots = read_shots(&args.shots).with_context(|| format!("reading shots from {}", args.shots.display()))?;
    let gain = calibrate_gain(&shots)?;
    let result = calibrate_response(&shots)?;
    std::fs::write(&args.out, serde_json::to_string_pretty(&result)? + "\n")
        .with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!(
        "c = {:.6}, k = {:.6}, composite gain = {:.6}, R^2 = {:.6} ({} temperature pairs)",
        result.c, result.k, gain.composite, result.r2, gain.n_pairs
    );
    Ok(())
}

fn reconstruct(args: ReconstructArgs) -> Result<()> {
    let (mut manifest, dir, path) = load_manifest(&args.session)?;
    let mut cam = manifest.camera;
    if let Some(p) = &args.calibration {
        let cal = read_calibration(p).with_context(|| format!("reading {}", p.display()))?;
        cam.c = cal.c;
        cam.k = cal.k;
        manifest.calibration = Some(cal);
    }
    let diffs = manifest
        .angles
        .iter()
        .zip(&manifest.diffs)
        .map(|(&psi, f)| Ok((psi, read_image(dir.join(f))?)))
        .collect::<Result<Vec<_>>>()?;
    let session = CaptureSession {
        diffs,
        tau_ref: manifest.tau_ref,
        cam,
        mask: read_mask(dir.join(&manifest.mask))?,
    };
    let rec = reconstruct_stokes(&session)?;
    if !rec.is_well_conditioned() {
        eprintln!(
            "warning: condition number {:.3e} exceeds {:.0e}",
            rec.condition_number, CONDITION_WARN
        );
    }
    let files = StokesFiles::with_prefix("stokes");
    write_stokes(&rec.stokes, &dir, &files)?;
    manifest.stokes = Some(files);
    manifest.save(&path)?;
    eprintln!("reconstructed Stokes map (condition number {:.3})", rec.condition_number);
    Ok(())
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let (mut manifest, dir, path) = load_manifest(&args.session)?;
    let Some(files) = &manifest.stokes else {
        bail!("session has no Stokes map; run reconstruct first");
    };
    let stokes = read_stokes(&dir, files)?;
    let projection: ProjectionModel = match (&args.projection, manifest.projection) {
        (Some(text), _) => serde_json::from_str(text).context("parsing --projection")?,
        (None, Some(p)) => p,
        (None, None) => bail!("no projection recorded in the manifest; pass --projection"),
    };
    let params = EstimationParams::new(args.eta, args.ratio, args.mode)?.with_dolp_floor(args.dolp_floor)?;
    let est = estimate_normals(&stokes, &params, &projection)?;
    let out = NormalFiles {
        normals: "normals.pfm".into(),
        confidence: "confidence.pfm".into(),
        visualization: Some("normals.png".into()),
    };
    write_normals(&est.normals, dir.join(&out.normals))?;
    write_image(&est.confidence, dir.join(&out.confidence))?;
    if let Some(png) = &out.visualization {
        write_normal_png(&est.normals, dir.join(png))?;
    }
    manifest.normals = Some(out);
    manifest.projection = Some(projection);
    manifest.estimation = Some(EstimationRecord {
        eta: args.eta,
        ratio: args.ratio,
        mode: args.mode,
        dolp_floor: args.dolp_floor,
    });
    manifest.save(&path)?;
    let confident = est.confidence.iter().filter(|&&c| c > 0.0).count();
    eprintln!(
        "estimated normals for {} pixels ({} high confidence)",
        est.normals.mask.count(),
        confident
    );
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let (est_path, gt_path) = match (&args.session, &args.estimate, &args.truth) {
        (Some(session), _, _) => {
            let (m, dir, _) = load_manifest(session)?;
            let Some(n) = m.normals else {
                bail!("session has no estimated normals; run estimate first");
            };
            let Some(g) = m.ground_truth else {
                bail!("session has no ground-truth normals");
            };
            (dir.join(n.normals), dir.join(g.normals))
        }
        (None, Some(e), Some(t)) => (e.clone(), t.clone()),
        _ => bail!("pass --session or both --estimate and --truth"),
    };
    let est = read_normals(&est_path, NormalSpace::Camera).with_context(|| format!("reading {}", est_path.display()))?;
    let gt = read_normals(&gt_path, NormalSpace::Camera).with_context(|| format!("reading {}", gt_path.display()))?;
    let errors = angular_error_map(&est, &gt).with_context(|| {
        format!(
            "estimate {} is {}x{}, truth {} is {}x{}",
            est_path.display(),
            est.shape().0,
            est.shape().1,
            gt_path.display(),
            gt.shape().0,
            gt.shape().1
        )
    })?;
    let mask = thermopol::Grid::from_fn(est.shape().0, est.shape().1, |c, r| {
        *est.mask.get(c, r) && *gt.mask.get(c, r)
    });
    let report = summarize(&errors, &mask)?;
    let json = serde_json::to_string_pretty(&report)? + "\n";
    match &args.json {
        Some(p) => std::fs::write(p, &json).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{json}"),
    }
    eprint!("{}", report.table());
    Ok(())
}

fn curve(args: CurveArgs) -> Result<()> {
    let curve = build_dolp_curve(args.eta, args.ratio, args.samples)?;
    let mut out = String::from("theta_deg,dolp\n");
    for (theta, rho) in &curve.samples {
        out.push_str(&format!("{:.6},{:.12}\n", theta.to_degrees(), rho));
    }
    match curve.theta_peak {
        Some(p) => out.push_str(&format!("# theta_peak_deg={:.4}\n", p.to_degrees())),
        None => out.push_str("# theta_peak_deg=none\n"),
    }
    print!("{out}");
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("THERMOPOL_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .with_context(|| format!("THERMOPOL_THREADS must be a non-negative integer, got '{value}'"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Estimate(a) => estimate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Curve(a) => curve(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
