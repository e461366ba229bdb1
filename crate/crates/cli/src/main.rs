use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use splat_avatar::analysis::{edit_latent, pca_features, pca_uv_image, scalp_extent, svm_direction};
use splat_avatar::bench::{bench_posing, bench_render, random_bench_scene};
use splat_avatar::geometry::{sample_identity, HeadIdentity, Rigid, ToyHeadModel};
use splat_avatar::io::{
    load_avatar, load_direction, load_prior, load_run_config, save_avatar, save_direction, save_prior, RunConfig,
};
use splat_avatar::pipelines::{
    enrollment_from_generator, enrollment_specs, evaluate, fit, fit_without_prior, ground_truth_views, train_prior,
    view_frames, EnrollmentSetting, FittedAvatar, ViewSpec,
};
use splat_avatar::renderer::{orbit_camera, render, Camera};
use splat_avatar::synthdata::{derive_seed, generate_dataset, load_dataset, load_manifest, Manifest};
use splat_avatar::{Error, Result};

#[derive(Parser)]
#[command(name = "splat-avatar", version, about = "Mesh-attached Gaussian avatars with a learned identity prior")]
struct Cli {
    /// Seed for every random stream; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; also read from GASP_THREADS. 1 is bit-exact across machines.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic head dataset.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        identities: Option<usize>,
        #[arg(long)]
        images: Option<usize>,
        #[arg(long)]
        size: Option<usize>,
    },
    /// Train a prior on a generated dataset.
    TrainPrior {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Fit an avatar to enrollment images of one subject.
    Fit(FitArgs),
    /// Render an avatar to PNG.
    Render {
        #[command(flatten)]
        avatar: AvatarArgs,
        #[command(flatten)]
        view: ViewArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render an orbit with a changing expression as a PNG sequence.
    Animate {
        #[command(flatten)]
        avatar: AvatarArgs,
        #[arg(long, default_value_t = 24)]
        frames: usize,
        #[arg(long, default_value_t = 360.0)]
        azimuth_span: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an avatar against ground-truth views of its subject.
    Eval {
        #[command(flatten)]
        avatar: AvatarArgs,
        #[command(flatten)]
        subject: SubjectArgs,
        /// Comma-separated azimuths in degrees.
        #[arg(long, default_value = "130,-130,160,-160")]
        azimuths: String,
        #[arg(long, default_value_t = 0.0)]
        elevation: f64,
    },
    /// Latent-space analysis of a trained prior.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
    /// Throughput benchmarks.
    Bench {
        #[command(subcommand)]
        what: BenchCommand,
    },
}

#[derive(Args)]
struct AvatarArgs {
    #[arg(long)]
    avatar: PathBuf,
    /// Dataset directory whose manifest holds the head model.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct ViewArgs {
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    azimuth: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    elevation: f64,
    /// Use the camera and expression of this enrollment view instead.
    #[arg(long, conflicts_with_all = ["azimuth", "elevation", "expression"])]
    enrollment_view: Option<usize>,
    /// Comma-separated expression coefficients.
    #[arg(long, allow_hyphen_values = true)]
    expression: Option<String>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct SubjectArgs {
    /// Identity index in the dataset.
    #[arg(long)]
    identity: Option<usize>,
    /// Draw a new identity from the head model with this seed.
    #[arg(long)]
    novel_seed: Option<u64>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct SettingArgs {
    #[arg(long)]
    single_image: bool,
    #[arg(long)]
    monocular: bool,
    #[arg(long)]
    multi_cam: bool,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    prior: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    subject: SubjectArgs,
    #[command(flatten)]
    setting: SettingArgs,
    /// Views for monocular and multi-camera enrollment.
    #[arg(long, default_value_t = 8)]
    views: usize,
    /// Optimize the untrained template directly, ignoring the prior.
    #[arg(long)]
    no_prior: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// PCA of per-Gaussian features painted over the head UVs.
    Pca {
        #[arg(long)]
        prior: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Linear direction in code space separating long from short hair.
    Direction {
        #[arg(long)]
        prior: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Move one identity along a direction and render it.
    Edit {
        #[arg(long)]
        prior: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        direction: PathBuf,
        #[arg(long)]
        identity: usize,
        #[arg(long, allow_hyphen_values = true)]
        magnitude: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        azimuth: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    Posing {
        #[arg(long, default_value_t = 187_779)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        reps: usize,
    },
    Render {
        #[arg(long, default_value_t = 187_779)]
        n: usize,
        #[arg(long, default_value_t = 512)]
        size: usize,
        #[arg(long, default_value_t = 10)]
        reps: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => match std::env::var("GASP_THREADS") {
            Ok(v) => Some(v.parse().map_err(|_| Error::InvalidArgument(format!("GASP_THREADS={v} is not a count")))?),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let mut cfg = match &cli.config {
        Some(p) => load_run_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg = cfg.with_seed(s);
    }
    cfg.validate()?;
    match cli.command {
        Command::GenData {
            out,
            identities,
            images,
            size,
        } => {
            let mut d = cfg.dataset.clone();
            d.n_identities = identities.unwrap_or(d.n_identities);
            d.images_per_identity = images.unwrap_or(d.images_per_identity);
            d.image_size = size.unwrap_or(d.image_size);
            let ds = generate_dataset(&d, &out)?;
            println!(
                "{}",
                serde_json::json!({"dataset": out, "identities": d.n_identities, "samples": ds.samples.len()})
            );
        }
        Command::TrainPrior { data, out, steps } => {
            let ds = load_dataset(&data)?;
            let mut t = cfg.train.clone();
            t.steps = steps.unwrap_or(t.steps);
            let (prior, report) = train_prior(&ds, &t)?;
            save_prior(&prior, &out)?;
            write_json(&suffixed(&out, ".report.json"), &report)?;
            println!(
                "{}",
                serde_json::json!({"prior": out, "steps": report.steps, "initial_l1": report.initial_l1, "final_l1": report.final_l1})
            );
        }
        Command::Fit(a) => run_fit(&cfg, a)?,
        Command::Render { avatar, view, out } => {
            let (fitted, manifest) = open_avatar(&avatar)?;
            let (camera, expr) = match view.enrollment_view {
                Some(k) => {
                    let cam = fitted.provenance.cameras.get(k).ok_or(Error::IndexOutOfRange {
                        what: "enrollment views",
                        index: k,
                        len: fitted.provenance.cameras.len(),
                    })?;
                    (cam.clone(), fitted.provenance.expressions[k].clone())
                }
                None => (
                    manifest.config.camera(view.azimuth, view.elevation)?,
                    parse_expression(view.expression.as_deref(), manifest.head_model.expression_dims())?,
                ),
            };
            render_png(&manifest.head_model, &fitted, &expr, &camera, &cfg, &out)?;
        }
        Command::Animate {
            avatar,
            frames,
            azimuth_span,
            out,
        } => {
            let (fitted, manifest) = open_avatar(&avatar)?;
            let dims = manifest.head_model.expression_dims();
            for f in 0..frames {
                let t = f as f64 / frames.max(1) as f64;
                let phase = t * std::f64::consts::TAU;
                let expr: Vec<f64> = (0..dims).map(|k| (phase + k as f64).sin()).collect();
                let cam = manifest.config.camera(azimuth_span * t, 10.0 * phase.sin())?;
                render_png(&manifest.head_model, &fitted, &expr, &cam, &cfg, &out.join(format!("frame_{f:04}.png")))?;
            }
            println!("{}", serde_json::json!({"frames": frames, "dir": out}));
        }
        Command::Eval {
            avatar,
            subject,
            azimuths,
            elevation,
        } => {
            let (fitted, manifest) = open_avatar(&avatar)?;
            let identity = subject_identity(&manifest, &subject)?;
            let specs = parse_list(&azimuths)?
                .into_iter()
                .map(|a| ViewSpec {
                    azimuth_deg: a,
                    elevation_deg: elevation,
                    expression_coeffs: vec![0.0; manifest.head_model.expression_dims()],
                })
                .collect::<Vec<_>>();
            let views = ground_truth_views(&manifest.head_model, &identity, &manifest.config, &specs)?;
            let report = evaluate(
                &manifest.head_model,
                &fitted.avatar,
                &fitted.bindings,
                &fitted.provenance.identity_coeffs,
                &views,
                &cfg.render.settings(),
            )?;
            let doc = serde_json::json!({
                "tool": concat!("splat-avatar ", env!("CARGO_PKG_VERSION")),
                "provenance": format!("{}@{}", env!("CARGO_PKG_NAME"), &fitted.provenance.config_hash[..12.min(fitted.provenance.config_hash.len())]),
                "config_hash": fitted.provenance.config_hash,
                "azimuths": specs.iter().map(|s| s.azimuth_deg).collect::<Vec<_>>(),
                "report": report,
            });
            println!("{doc}");
        }
        Command::Analyze { what } => run_analyze(&cfg, what)?,
        Command::Bench { what } => {
            let seed = cli.seed.unwrap_or(0);
            let report = match what {
                BenchCommand::Posing { n, reps } => bench_posing(n, reps, seed)?,
                BenchCommand::Render { n, size, reps } => {
                    let (locals, frames) = random_bench_scene(n, seed);
                    let cam = orbit_camera(0.0, 0.0, 4.0, 40.0, size, size)?;
                    bench_render(&locals, &frames, &cam, &cfg.render.settings(), reps)?
                }
            };
            println!("{}", serde_json::to_string(&report).expect("report serializes"));
        }
    }
    Ok(())
}

fn run_fit(cfg: &RunConfig, a: FitArgs) -> Result<()> {
    let prior = load_prior(&a.prior)?;
    let manifest = load_manifest(&a.data)?;
    let model = &manifest.head_model;
    let identity = subject_identity(&manifest, &a.subject)?;
    let setting = if a.setting.single_image {
        EnrollmentSetting::SingleImage
    } else if a.setting.monocular {
        EnrollmentSetting::Monocular
    } else {
        EnrollmentSetting::MultiCam
    };
    let specs = enrollment_specs(setting, a.views, model.expression_dims(), cfg.fit.seed);
    let enrollment = enrollment_from_generator(model, &identity, &manifest.config, &specs)?;
    let fitted = if a.no_prior {
        fit_without_prior(model, &prior, &enrollment, &cfg.fit)?
    } else {
        fit(model, &prior, &enrollment, &cfg.fit)?
    };
    save_avatar(&fitted, &a.out)?;
    for (k, v) in enrollment.views.iter().enumerate() {
        render_png(model, &fitted, &v.expression_coeffs, &v.camera, cfg, &suffixed(&a.out, &format!(".view{k:03}.png")))?;
    }
    let p = &fitted.provenance;
    println!(
        "{}",
        serde_json::json!({
            "avatar": a.out,
            "setting": setting,
            "views": enrollment.views.len(),
            "gaussians": fitted.avatar.len(),
            "config_hash": p.config_hash,
            "stage1": p.stage1,
            "stage2": p.stage2,
            "stage3": p.stage3,
        })
    );
    Ok(())
}

fn run_analyze(cfg: &RunConfig, what: AnalyzeCommand) -> Result<()> {
    match what {
        AnalyzeCommand::Pca {
            prior,
            data,
            k,
            size,
            out,
        } => {
            let prior = load_prior(&prior)?;
            let manifest = load_manifest(&data)?;
            let pca = pca_features(prior.feature_matrix(), k)?;
            let neutral = manifest.head_model.pose_head(
                &vec![0.0; manifest.head_model.identity_dims()],
                &vec![0.0; manifest.head_model.expression_dims()],
                &Rigid::identity(),
            )?;
            pca_uv_image(&pca, &neutral, &prior.bindings, size)?.save_png(&out)?;
            println!("{}", serde_json::json!({"image": out, "variances": pca.variances.to_vec()}));
        }
        AnalyzeCommand::Direction {
            prior,
            data,
            threshold,
            out,
        } => {
            let prior = load_prior(&prior)?;
            let manifest = load_manifest(&data)?;
            let n = manifest.identities.len().min(prior.n_identities());
            let codes: Vec<Vec<f64>> = (0..n).map(|j| prior.codes.row(j).to_vec()).collect();
            let labels: Vec<bool> = manifest.identities[..n]
                .iter()
                .map(|r| r.params.hair_length >= threshold)
                .collect();
            let d = svm_direction("hair_length", &codes, &labels, &cfg.svm)?;
            save_direction(&d, &out)?;
            println!("{}", serde_json::json!({"direction": out, "name": d.name, "accuracy": d.accuracy}));
        }
        AnalyzeCommand::Edit {
            prior,
            data,
            direction,
            identity,
            magnitude,
            azimuth,
            out,
        } => {
            let prior = load_prior(&prior)?;
            let manifest = load_manifest(&data)?;
            let d = load_direction(&direction)?;
            let code = prior.code(identity)?.to_vec();
            let edited = edit_latent(&code, &d, magnitude)?;
            let before = prior.decode_code(&code)?.0;
            let after = prior.decode_code(&edited)?.0;
            let record = manifest.identities.get(identity).ok_or(Error::IndexOutOfRange {
                what: "dataset identities",
                index: identity,
                len: manifest.identities.len(),
            })?;
            let model = &manifest.head_model;
            let frames = view_frames(
                model,
                &prior.bindings,
                &record.params.identity_coeffs,
                &vec![0.0; model.expression_dims()],
                &Rigid::identity(),
            )?;
            let cam = manifest.config.camera(azimuth, 0.0)?;
            let r = render(&after, &frames, &cam, &cfg.render.settings())?;
            r.target.rgb.save_png(&out)?;
            println!(
                "{}",
                serde_json::json!({
                    "image": out,
                    "score_before": d.score(&code)?,
                    "score_after": d.score(&edited)?,
                    "scalp_extent_before": scalp_extent(&before, &prior.scalp_mask)?,
                    "scalp_extent_after": scalp_extent(&after, &prior.scalp_mask)?,
                })
            );
        }
    }
    Ok(())
}

fn open_avatar(a: &AvatarArgs) -> Result<(FittedAvatar, Manifest)> {
    Ok((load_avatar(&a.avatar)?, load_manifest(&a.data)?))
}

fn subject_identity(manifest: &Manifest, s: &SubjectArgs) -> Result<HeadIdentity> {
    match (s.identity, s.novel_seed) {
        (Some(i), _) => manifest
            .identities
            .get(i)
            .map(|r| r.params.clone())
            .ok_or(Error::IndexOutOfRange {
                what: "dataset identities",
                index: i,
                len: manifest.identities.len(),
            }),
        (None, Some(seed)) => Ok(sample_identity(derive_seed(seed, 7, 0), &manifest.head_model)),
        (None, None) => Err(Error::InvalidArgument("a subject is required".into())),
    }
}

fn render_png(
    model: &ToyHeadModel,
    fitted: &FittedAvatar,
    expr: &[f64],
    camera: &Camera,
    cfg: &RunConfig,
    out: &Path,
) -> Result<()> {
    let frames = view_frames(
        model,
        &fitted.bindings,
        &fitted.provenance.identity_coeffs,
        expr,
        &Rigid::identity(),
    )?;
    let r = render(&fitted.avatar, &frames, camera, &cfg.render.settings())?;
    r.target.rgb.save_png(out)
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("'{t}' is not a number")))
        })
        .collect()
}

fn parse_expression(s: Option<&str>, dims: usize) -> Result<Vec<f64>> {
    let Some(s) = s else {
        return Ok(vec![0.0; dims]);
    };
    let v = parse_list(s)?;
    if v.len() != dims {
        return Err(Error::DimensionMismatch {
            what: "expression coefficients",
            expected: dims,
            got: v.len(),
        });
    }
    Ok(v)
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(value).expect("report serializes");
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
