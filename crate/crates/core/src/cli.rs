//! Command-line front end. Exit codes: 0 success, 2 usage or validation
//! error, 3 numerical failure.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::brdf::DsbrdfMaterial;
use crate::error::{Error, Result};
use crate::fixtures;
use crate::grad::{default_step, fd_check, Group};
use crate::invert::{edit_material, solve, InverseProblem, OptimizerConfig};
use crate::io;
use crate::metrics::{l2_metric, resolve_exposure, ssim, tone_map, Exposure};
use crate::model::{Camera, RadianceImage, SegmentationMask, Vec3};
use crate::render::{render, RenderScene};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

pub const LIGHT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "invrender", version, about = "Differentiable environment-lit rendering and inversion")]
pub struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a scene to a PFM radiance image.
    Render {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        out: PathBuf,
        /// Tone-mapped 8-bit PNG preview.
        #[arg(long)]
        preview: Option<PathBuf>,
    },
    /// Re-render a scene with its materials replaced.
    Edit {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long = "target-material", required = true)]
        target_material: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        preview: Option<PathBuf>,
    },
    /// Recover normals, illumination and materials from a target image.
    Invert(InvertArgs),
    /// Compare analytic gradients with finite differences on the fixture scene.
    Gradcheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 16)]
        resolution: usize,
    },
    /// Print tone-mapped L2 and SSIM between two PFM images.
    Metrics {
        prediction: PathBuf,
        reference: PathBuf,
        /// Normal map PNG whose foreground restricts the L2 sum.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Fixed exposure; by default derived from the reference image.
        #[arg(long)]
        exposure: Option<f64>,
    },
    /// Write the procedural fixture set to a directory.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct SceneArgs {
    /// 16-bit RGBA normal map PNG.
    #[arg(long)]
    pub normals: PathBuf,
    /// Environment map PFM.
    #[arg(long)]
    pub env: PathBuf,
    /// Material JSON, one per region in region order.
    #[arg(long)]
    pub material: Vec<PathBuf>,
    /// 8-bit grayscale region map (255 = background).
    #[arg(long)]
    pub segmentation: Option<PathBuf>,
    /// `pinhole:FOV` (degrees) or `ortho`.
    #[arg(long, default_value = "pinhole:60")]
    pub camera: String,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long = "init-normals")]
    pub init_normals: PathBuf,
    #[arg(long = "init-env")]
    pub init_env: PathBuf,
    #[arg(long = "init-material", required = true)]
    pub init_material: Vec<PathBuf>,
    #[arg(long)]
    pub segmentation: Option<PathBuf>,
    #[arg(long, default_value = "pinhole:60")]
    pub camera: String,
    /// Comma-separated subset of normal,light,material.
    #[arg(long, default_value = "normal,light,material")]
    pub free: String,
    #[arg(long, default_value_t = crate::invert::DEFAULT_A)]
    pub a: f64,
    #[arg(long, default_value_t = crate::invert::DEFAULT_B)]
    pub b: f64,
    #[arg(long = "max-cycles", default_value_t = 50)]
    pub max_cycles: usize,
    #[arg(long = "inner-iters", default_value_t = 20)]
    pub inner_iters: usize,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Outputs go to PREFIX_normals.png, PREFIX_env.pfm, PREFIX_material<i>.json
    /// and PREFIX_render.pfm.
    #[arg(long = "out-prefix")]
    pub out_prefix: String,
}

pub fn parse_camera(spec: &str, width: usize, height: usize) -> Result<Camera> {
    if spec == "ortho" {
        return Camera::orthographic(width, height);
    }
    let fov = spec
        .strip_prefix("pinhole:")
        .and_then(|f| f.parse::<f64>().ok())
        .ok_or_else(|| Error::Invalid(format!("bad camera '{spec}', expected pinhole:FOV or ortho")))?;
    Camera::pinhole(fov, width, height)
}

pub fn parse_groups(spec: &str) -> Result<Vec<Group>> {
    let mut groups = Vec::new();
    for token in spec.split(',').map(str::trim) {
        let g = Group::parse(token).ok_or_else(|| Error::Invalid(format!("unknown group '{token}'")))?;
        if !groups.contains(&g) {
            groups.push(g);
        }
    }
    Ok(groups)
}

fn read_materials(paths: &[PathBuf]) -> Result<Vec<DsbrdfMaterial>> {
    paths.iter().map(io::read_material).collect()
}

fn load_scene(args: &SceneArgs, materials: Option<Vec<DsbrdfMaterial>>) -> Result<RenderScene> {
    let normals = io::read_normal_png16(&args.normals)?;
    let env = io::read_env_pfm(&args.env)?;
    let segmentation = args.segmentation.as_ref().map(io::read_segmentation_png).transpose()?;
    let camera = parse_camera(&args.camera, normals.width(), normals.height())?;
    let materials = match materials {
        Some(m) => m,
        None => read_materials(&args.material)?,
    };
    RenderScene::new(normals, camera, env, materials, segmentation)
}

fn write_outputs(img: &RadianceImage, mask: &[bool], out: &Path, preview: Option<&Path>) -> Result<()> {
    io::write_radiance_pfm(out, img)?;
    if let Some(p) = preview {
        io::write_preview_png(p, &tone_map(img, Exposure::Auto, Some(mask))?)?;
    }
    Ok(())
}

fn run_invert(args: &InvertArgs) -> Result<()> {
    let free = parse_groups(&args.free)?;
    let target = io::read_radiance_pfm(&args.target)?;
    let normals = io::read_normal_png16(&args.init_normals)?;
    let env = io::read_env_pfm(&args.init_env)?;
    let materials = read_materials(&args.init_material)?;
    let segmentation = args.segmentation.as_ref().map(io::read_segmentation_png).transpose()?;
    let camera = parse_camera(&args.camera, normals.width(), normals.height())?;
    let mut problem = InverseProblem::new(target, normals, materials, env, camera, segmentation)?;
    problem.a = args.a;
    problem.b = args.b;
    problem.free_groups = free;
    problem.validate()?;
    let config = OptimizerConfig {
        max_cycles: args.max_cycles,
        inner_iters_per_group: args.inner_iters,
        ..OptimizerConfig::default()
    };
    let result = solve(&problem, &config)?;

    if let Some(path) = &args.trace {
        let mut text = String::new();
        for line in &result.trace {
            text.push_str(&line.to_string());
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| Error::from(e).at(path))?;
    }
    let prefix = &args.out_prefix;
    io::write_normal_png16(format!("{prefix}_normals.png"), &result.normals)?;
    io::write_env_pfm(format!("{prefix}_env.pfm"), &result.env)?;
    for (i, m) in result.materials.iter().enumerate() {
        io::write_material(format!("{prefix}_material{i}.json"), m, None)?;
    }
    let scene = RenderScene::new(
        result.normals.clone(),
        problem.camera,
        result.env.clone(),
        result.materials.clone(),
        problem.segmentation.clone(),
    )?;
    io::write_radiance_pfm(format!("{prefix}_render.pfm"), &render(&scene)?)?;
    println!(
        "objective {:e} -> {:e} in {} cycles",
        result.initial_objective,
        result.final_objective,
        result.cycle_objectives.len()
    );
    Ok(())
}

/// Runs the finite-difference check; returns whether every group passed.
fn run_gradcheck(seed: u64, trials: usize, resolution: usize) -> Result<bool> {
    let scene = fixtures::default_scene(resolution, 8, 16)?;
    let mut ok = true;
    for g in Group::ALL {
        let tol = match g {
            Group::Light => LIGHT_TOLERANCE,
            _ => DEFAULT_TOLERANCE,
        };
        let r = fd_check(&scene, g, default_step(g), trials, seed)?;
        let pass = r.max_rel_err < tol;
        ok &= pass;
        println!(
            "{} max_rel_err={:e} tol={:e} checked={} skipped={} {}",
            g.name(),
            r.max_rel_err,
            tol,
            r.checked,
            r.skipped,
            if pass { "ok" } else { "FAIL" }
        );
    }
    Ok(ok)
}

fn run_metrics(pred: &Path, reference: &Path, mask: Option<&Path>, exposure: Option<f64>) -> Result<String> {
    let a = io::read_radiance_pfm(pred)?;
    let b = io::read_radiance_pfm(reference)?;
    if a.width != b.width || a.height != b.height {
        return Err(Error::ShapeMismatch("images differ in size".into()));
    }
    let mask = mask.map(io::read_normal_png16).transpose()?;
    let mask = mask.as_ref().map(|m| m.mask());
    let e = match exposure {
        Some(e) if e > 0.0 && e.is_finite() => e,
        Some(_) => return Err(Error::Invalid("exposure must be positive".into())),
        None => resolve_exposure(&b, Exposure::Auto, mask),
    };
    let ta = tone_map(&a, Exposure::Fixed(e), None)?;
    let tb = tone_map(&b, Exposure::Fixed(e), None)?;
    Ok(format!("l2={} ssim={}", l2_metric(&ta, &tb, mask)?, ssim(&ta, &tb)?))
}

pub const FIXTURE_RESOLUTION: usize = 32;
pub const FIXTURE_ENV: (usize, usize) = (16, 32);

/// Writes sphere and plane normal maps, environment maps, preset materials,
/// a two-region segmentation and a rendered target into `dir`.
pub fn write_fixtures(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).at(dir))?;
    let res = FIXTURE_RESOLUTION;
    let (eh, ew) = FIXTURE_ENV;
    let sphere = fixtures::sphere_normal_map(res)?;
    io::write_normal_png16(dir.join("sphere_normals.png"), &sphere)?;
    let plane = fixtures::plane_normal_map(res, Vec3::new(0.0, 0.0, 1.0))?;
    io::write_normal_png16(dir.join("plane_normals.png"), &plane)?;
    io::write_segmentation_png(dir.join("sphere_split.png"), &fixtures::split_segmentation(&sphere)?)?;
    io::write_segmentation_png(dir.join("sphere_single.png"), &SegmentationMask::single(res, res)?)?;
    let env = fixtures::default_env(eh, ew)?;
    io::write_env_pfm(dir.join("env_blobs.pfm"), &env)?;
    io::write_env_pfm(dir.join("env_zero.pfm"), &crate::model::EnvironmentMap::zeros(eh, ew)?)?;
    for (name, m) in fixtures::preset_materials() {
        io::write_material(dir.join(format!("{name}.json")), &m, Some(name))?;
    }
    let target = render(&fixtures::default_scene(res, eh, ew)?)?;
    io::write_radiance_pfm(dir.join("sphere_glossy.pfm"), &target)?;
    Ok(())
}

fn execute(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Render { scene, out, preview } => {
            let s = load_scene(&scene, None)?;
            write_outputs(&render(&s)?, s.normal_map.mask(), &out, preview.as_deref())?;
        }
        Command::Edit {
            scene,
            target_material,
            out,
            preview,
        } => {
            let targets = read_materials(&target_material)?;
            let s = load_scene(&scene, Some(targets.clone()))?;
            write_outputs(&edit_material(&s, &targets)?, s.normal_map.mask(), &out, preview.as_deref())?;
        }
        Command::Invert(args) => run_invert(&args)?,
        Command::Gradcheck {
            seed,
            trials,
            resolution,
        } => {
            if !run_gradcheck(seed, trials, resolution)? {
                return Ok(EXIT_NUMERICAL);
            }
        }
        Command::Metrics {
            prediction,
            reference,
            mask,
            exposure,
        } => {
            let line = run_metrics(&prediction, &reference, mask.as_deref(), exposure)?;
            println!("{line}");
        }
        Command::Fixtures { out } => write_fixtures(&out)?,
    }
    Ok(0)
}

/// Parses `args`, runs the command and maps failures to exit codes.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            ExitCode::from(if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_USAGE })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn camera_specs() {
        assert!(parse_camera("ortho", 4, 4).unwrap().is_orthographic());
        assert!(!parse_camera("pinhole:45", 4, 4).unwrap().is_orthographic());
        assert!(parse_camera("pinhole:", 4, 4).is_err());
        assert!(parse_camera("fisheye", 4, 4).is_err());
    }

    #[test]
    fn group_specs() {
        assert_eq!(parse_groups("material").unwrap(), vec![Group::Material]);
        assert_eq!(
            parse_groups("light, normal,light").unwrap(),
            vec![Group::Light, Group::Normal]
        );
        assert!(parse_groups("normal,albedo").is_err());
    }

    #[test]
    fn metrics_identity() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pfm");
        let img = render(&fixtures::default_scene(16, 8, 16).unwrap()).unwrap();
        io::write_radiance_pfm(&p, &img).unwrap();
        assert_eq!(run_metrics(&p, &p, None, None).unwrap(), "l2=0 ssim=1");
    }
}
