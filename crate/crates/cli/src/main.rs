use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use editlight::lightfit::{AdamConfig, FitConfig};
use editlight::render::{GroundPlane, RenderSettings, SceneKind};
use editlight_cli::commands::{
    cmd_composite, cmd_evaluate, cmd_fit, cmd_render, cmd_validate, load_scene, CompositeArgs, FitArgs,
    MetricSpace, RenderArgs, RenderMode,
};
use editlight_cli::service::{self, PreviewSettings, Session};
use editlight_cli::{Bundle, CliError, CliResult};

#[derive(Parser)]
#[command(name = "editlight", version, about = "Editable indoor lighting estimates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract a light estimate bundle from an HDR panorama.
    Fit(FitCmd),
    /// Render the probe scene lit by a bundle.
    Render(RenderCmd),
    /// Tabulate the strongest light's share of the rendered energy.
    Validate(ValidateCmd),
    /// Compare bundles against their ground-truth panoramas.
    Evaluate(EvaluateCmd),
    /// Insert objects into a background photograph.
    Composite(CompositeCmd),
    /// Serve an interactive editing session over HTTP.
    Serve(ServeCmd),
}

#[derive(Args)]
struct FitCmd {
    /// Panorama (PFM or Radiance HDR), width = 2 x height.
    pano: PathBuf,
    #[arg(long)]
    depth: Option<PathBuf>,
    /// Layout edge map (PNG) at the panorama's resolution.
    #[arg(long)]
    layout: Option<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = SceneKind::Grid3x3)]
    scene: SceneKind,
    #[arg(long, default_value_t = 32)]
    resolution: usize,
    #[arg(long, default_value_t = 16)]
    spp: usize,
    #[arg(long, default_value_t = 256)]
    reference_spp: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 150)]
    iters: usize,
    #[arg(long, default_value_t = 0.02)]
    lr: f64,
    #[arg(long, default_value_t = 5)]
    n_lights: usize,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long, default_value_t = SceneKind::Grid3x3)]
    scene: SceneKind,
    #[arg(long, default_value_t = 128)]
    width: usize,
    /// Defaults to the width.
    #[arg(long)]
    height: Option<usize>,
    #[arg(long, default_value_t = 64)]
    spp: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ProbeArgs {
    fn settings(&self) -> RenderSettings {
        RenderSettings::new(self.width, self.height.unwrap_or(self.width), self.spp, self.seed)
    }
}

#[derive(Args)]
struct RenderCmd {
    bundle: PathBuf,
    /// Output image; `.pfm` is linear, `.png` exposed and gamma encoded.
    #[arg(short, long)]
    out: PathBuf,
    #[command(flatten)]
    probe: ProbeArgs,
    /// Use a constant ambient instead of the textured cuboid.
    #[arg(long)]
    parametric: bool,
}

#[derive(Args)]
struct ValidateCmd {
    panos: Vec<PathBuf>,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    spp: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvaluateCmd {
    /// Ground-truth panoramas.
    #[arg(long = "gt", num_args = 0..)]
    gt: Vec<PathBuf>,
    /// Bundles, paired with the panoramas in order.
    #[arg(long = "bundle", num_args = 0..)]
    bundles: Vec<PathBuf>,
    #[command(flatten)]
    probe: ProbeArgs,
    /// Compare clipped, gamma-encoded renders instead of linear ones.
    #[arg(long, conflicts_with = "linear")]
    tonemapped: bool,
    #[arg(long)]
    linear: bool,
}

#[derive(Args)]
struct CompositeCmd {
    /// 8-bit background photograph (PNG); its size sets the render size.
    background: PathBuf,
    #[arg(long)]
    bundle: PathBuf,
    /// Probe scene name or a JSON scene file with camera, plane and spheres.
    #[arg(long, default_value = "three-spheres")]
    objects: String,
    #[arg(long, requires = "plane_albedo", allow_negative_numbers = true)]
    plane_y: Option<f64>,
    #[arg(long, requires = "plane_y")]
    plane_albedo: Option<f64>,
    #[arg(long, conflicts_with = "plane_y")]
    no_plane: bool,
    #[arg(long, default_value_t = 64)]
    spp: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeCmd {
    bundle: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Where POST /save writes when the request names no directory.
    #[arg(long)]
    save_dir: Option<PathBuf>,
    #[arg(long, default_value_t = SceneKind::Grid3x3)]
    scene: SceneKind,
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 16)]
    spp: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fit(c) => {
            let config = FitConfig {
                scene: c.scene,
                resolution: c.resolution,
                spp: c.spp,
                reference_spp: c.reference_spp,
                seed: c.seed,
                n_lights: c.n_lights,
                adam: AdamConfig {
                    iters: c.iters,
                    lr: c.lr,
                    ..AdamConfig::default()
                },
                ..FitConfig::default()
            };
            let bundle = cmd_fit(&FitArgs {
                pano: c.pano,
                depth: c.depth,
                layout: c.layout,
                out: c.out.clone(),
                config,
            })?;
            if let Some(r) = &bundle.report {
                log::info!("loss {:.4e} -> {:.4e}", r.initial_loss, r.final_loss);
            }
            println!("{}", c.out.display());
        }
        Command::Render(c) => {
            let args = RenderArgs {
                scene: c.probe.scene,
                width: c.probe.width,
                height: c.probe.height.unwrap_or(c.probe.width),
                spp: c.probe.spp,
                seed: c.probe.seed,
                mode: if c.parametric {
                    RenderMode::Parametric
                } else {
                    RenderMode::Combined
                },
            };
            cmd_render(&c.bundle, &args, &c.out)?;
        }
        Command::Validate(c) => {
            let settings = RenderSettings::square(c.width, c.spp, c.seed);
            cmd_validate(&c.panos, &settings, std::io::stdout().lock())?;
        }
        Command::Evaluate(c) => {
            let space = if c.tonemapped {
                MetricSpace::Tonemapped
            } else {
                MetricSpace::Linear
            };
            let settings = c.probe.settings();
            cmd_evaluate(&c.gt, &c.bundles, c.probe.scene, &settings, space, std::io::stdout().lock())?;
        }
        Command::Composite(c) => {
            let plane = match (c.plane_y, c.plane_albedo) {
                (Some(y), Some(albedo)) => Some(GroundPlane { y, albedo }),
                _ => None,
            };
            let scene = load_scene(&c.objects, plane, c.no_plane)?;
            cmd_composite(&CompositeArgs {
                background: c.background,
                bundle: c.bundle,
                scene,
                spp: c.spp,
                seed: c.seed,
                out: c.out,
            })?;
        }
        Command::Serve(c) => {
            let bundle = Bundle::read(&c.bundle)?;
            let preview = PreviewSettings {
                scene: c.scene,
                width: c.width,
                spp: c.spp,
                seed: c.seed,
            };
            let session = Session::new(bundle, preview, c.save_dir);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime
                .block_on(service::serve(c.addr, session))
                .map_err(|e| CliError::input(format!("{}: {e}", c.addr)))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
