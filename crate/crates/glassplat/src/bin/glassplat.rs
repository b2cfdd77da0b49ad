use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use glassplat::config::{self, ConfigDocument};
use glassplat::metrics::{psnr, psnr_masked, ssim};
use glassplat::oracle::glass_silhouette;
use glassplat::pipeline::{self, RenderChannel};
use glassplat::shade::MeshBvh;
use glassplat::{validate, Result};

#[derive(Parser)]
#[command(name = "glassplat", version, about = "Deferred refraction for Gaussian splat scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file. Defaults to `<out>/config.toml` when present, then built-in defaults.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the room and glass sphere as Gaussians plus a mesh proxy.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Bake the environment into a probe atlas around the object.
    Bake {
        #[command(flatten)]
        common: Common,
    },
    /// Render the scene with deferred refraction.
    Render {
        #[command(flatten)]
        common: Common,
        /// Extra channels to write (comma separated, or `all`).
        #[arg(long, value_delimiter = ',')]
        channels: Vec<String>,
        /// Query probes once along the refracted direction and average them.
        #[arg(long)]
        no_iterquery: bool,
        /// Shade every primitive separately and blend the results.
        #[arg(long)]
        forward_shading: bool,
        /// Skip the path-traced reference and its metrics.
        #[arg(long)]
        no_oracle: bool,
    },
    /// Fit the object's transparent attributes to oracle views.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Run the acceptance checks and write a JSON report.
    Validate {
        /// Run only criteria whose key starts with one of these.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
        /// Report path; printed to stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Exit with status 1 when any criterion fails.
        #[arg(long)]
        strict: bool,
    },
}

fn load_config(common: &Common) -> Result<ConfigDocument> {
    let mut cfg = match &common.config {
        Some(path) => ConfigDocument::load(path)?,
        None => {
            let resolved = common.out.as_deref().map(|d| d.join(config::RESOLVED_CONFIG));
            match resolved {
                Some(p) if p.exists() => ConfigDocument::load(&p)?,
                _ => ConfigDocument::default(),
            }
        }
    };
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn synth(common: &Common, seed: Option<u64>) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let assets = pipeline::synthesize(&cfg)?;
    let paths = pipeline::write_scene(&cfg, &assets)?;
    eprintln!("{} environment and {} object primitives", assets.environment.len(), assets.object.len());
    for p in paths {
        println!("{}", p.display());
    }
    Ok(())
}

fn bake(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let env = pipeline::load_primitives(&cfg.output_path(config::ENVIRONMENT_PLY), "synth")?;
    let object = pipeline::load_primitives(&cfg.output_path(config::OBJECT_PLY), "synth")?;
    if env.is_empty() {
        eprintln!("warning: environment is empty, every probe texel will be a miss");
    }
    let (grid, summary) = pipeline::bake(&cfg, &env, &object)?;
    grid.save_atlas(&cfg.output_path(config::ATLAS))?;
    pipeline::write_json(&cfg.output_path("bake.json"), &summary)?;
    print_json(&summary);
    Ok(())
}

fn channels(names: &[String]) -> Result<Vec<RenderChannel>> {
    if names.iter().any(|n| n == "all") {
        return Ok(RenderChannel::ALL.to_vec());
    }
    names.iter().map(|n| n.parse()).collect()
}

fn render(common: &Common, names: &[String], no_iterquery: bool, forward: bool, no_oracle: bool) -> Result<()> {
    let mut cfg = load_config(common)?;
    cfg.shading.iterquery &= !no_iterquery;
    cfg.shading.deferred &= !forward;
    let wanted = channels(names)?;
    let env = pipeline::load_primitives(&cfg.output_path(config::ENVIRONMENT_PLY), "synth")?;
    let object = pipeline::load_primitives(&cfg.output_path(config::OBJECT_PLY), "synth")?;
    let bvh = MeshBvh::build(pipeline::load_proxy(&cfg.output_path(config::PROXY_OBJ))?);
    let grid = pipeline::load_atlas(&cfg.output_path(config::ATLAS))?;
    let camera = cfg.render_camera()?;
    let env_image = pipeline::render_environment(&env, &camera, cfg.shading.background)?;
    let products = pipeline::render(&cfg, &camera, &grid, &bvh, &object, &env_image)?;
    let dir = &cfg.output.dir;
    for p in pipeline::write_image_pair(products.image(), dir, "render")? {
        println!("{}", p.display());
    }
    for ch in wanted {
        for p in pipeline::write_image_pair(&pipeline::channel_image(&products, ch), dir, &format!("render_{}", ch.name()))? {
            println!("{}", p.display());
        }
    }
    let d = &products.shade.diagnostics;
    let mut metrics = json!({
        "iterquery": cfg.shading.iterquery,
        "deferred": cfg.shading.deferred,
        "shaded_pixels": d.shaded,
        "invalid_paths": d.invalid_paths(),
    });
    if !no_oracle {
        let oracle = pipeline::oracle_image(&cfg, &camera, cfg.oracle.spp)?;
        pipeline::write_image_pair(&oracle, dir, "oracle")?;
        let mask: Vec<bool> = glass_silhouette(&cfg.analytic_scene(), &camera).iter().map(|&s| s > 0.5).collect();
        let loss = &cfg.fit.optimizer.loss;
        metrics["oracle_spp"] = json!(cfg.oracle.spp);
        metrics["psnr"] = json!(psnr(products.image(), &oracle)?);
        metrics["psnr_object"] = json!(psnr_masked(products.image(), &oracle, &mask)?);
        metrics["ssim"] = json!(ssim(products.image(), &oracle, loss.ssim_window, loss.ssim_sigma)?);
    }
    pipeline::write_json(&dir.join("metrics.json"), &metrics)?;
    print_json(&metrics);
    Ok(())
}

fn fit(common: &Common, iterations: Option<usize>) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(n) = iterations {
        cfg.fit.optimizer.iterations = n;
    }
    let grid = pipeline::load_atlas(&cfg.output_path(config::ATLAS))?;
    let env = pipeline::load_primitives(&cfg.output_path(config::ENVIRONMENT_PLY), "synth")?;
    let object = pipeline::load_primitives(&cfg.output_path(config::OBJECT_PLY), "synth")?;
    let bvh = MeshBvh::build(pipeline::load_proxy(&cfg.output_path(config::PROXY_OBJ))?);
    let products = pipeline::fit(&cfg, &object, &grid, &bvh, &env, |r| {
        if r.iteration % 10 == 0 {
            eprintln!("iteration {:>4}  loss {:.6}", r.iteration, r.total);
        }
    })?;
    glassplat::ply::write_ply(&cfg.output_path(config::FITTED_PLY), &products.fitted)?;
    pipeline::write_loss_csv(&cfg.output_path(config::LOSS_CSV), &products.history)?;
    pipeline::write_json(&cfg.output_path("fit_summary.json"), &products.summary)?;
    print_json(&products.summary);
    Ok(())
}

fn run_validate(only: &[String], report: Option<&Path>, strict: bool) -> Result<bool> {
    let selected = validate::select(only)?;
    let result = validate::run(&selected, |r| {
        let status = if r.passed { "PASS" } else { "FAIL" };
        eprintln!("[{status}] {:>2} {:<20} {:>8.2}s  {}", r.id, r.key, r.seconds, r.error.as_deref().unwrap_or(""));
    });
    eprintln!("{} passed, {} failed", result.passed, result.failed);
    match report {
        Some(path) => pipeline::write_json(path, &result)?,
        None => print_json(&result),
    }
    Ok(!strict || result.all_passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Synth { common, seed } => synth(common, *seed).map(|_| true),
        Command::Bake { common } => bake(common).map(|_| true),
        Command::Render { common, channels, no_iterquery, forward_shading, no_oracle } => {
            render(common, channels, *no_iterquery, *forward_shading, *no_oracle).map(|_| true)
        }
        Command::Fit { common, iterations } => fit(common, *iterations).map(|_| true),
        Command::Validate { only, report, strict } => run_validate(only, report.as_deref(), *strict),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
