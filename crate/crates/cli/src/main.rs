use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use tile_ensemble::color::to_rgb;
use tile_ensemble::io::{list_images, read_image, write_image};
use tile_ensemble::scale::{blend, oracle_mask};
use tile_ensemble::{
    crop_disagreement, ensemble_estimate, evaluate_dataset, evaluate_files, generate_dataset, AdapterError, Enhancer,
    Error, Image, PixelRect, Predictor, ScaleMap, WeightFn, Window,
};

mod config;

use config::{Resolved, RunConfig};

const REPORT_STEM: &str = "report";

#[derive(Parser, Debug)]
#[command(name = "tile-ensemble", version, about = "Tile-averaging ensemble enhancement for low-light images")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
pub struct CommonArgs {
    /// TOML run configuration; flags override its keys
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for grid jitter and simulation
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    tile_size: Option<usize>,
    /// Fractional overlap between neighbouring tiles, in [0, 1)
    #[arg(long, global = true)]
    overlap: Option<f64>,
    #[arg(long, global = true, value_enum)]
    weight: Option<WeightArg>,
    /// Use the regular tile grid without jitter
    #[arg(long, global = true)]
    no_jitter: bool,
    /// identity | gain-gamma | exec:<command>
    #[arg(long, global = true)]
    enhancer: Option<String>,
    /// Multiplicative pre-gain, or `auto`
    #[arg(long, global = true, allow_hyphen_values = true)]
    gain: Option<String>,
    /// const:<p> | luma:<radius>,<threshold> | exec:<command> | oracle
    #[arg(long, global = true)]
    predictor: Option<String>,
    /// hard | soft
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Seconds to wait for an external enhancer before giving up
    #[arg(long, global = true)]
    adapter_timeout: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WeightArg {
    Uniform,
    Taper,
}

impl From<WeightArg> for WeightFn {
    fn from(w: WeightArg) -> WeightFn {
        match w {
            WeightArg::Uniform => WeightFn::Uniform,
            WeightArg::Taper => WeightFn::Taper,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic dark/bright pairs from a directory of bright images
    Simulate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
    /// Enhance one image
    Enhance {
        input: PathBuf,
        output: PathBuf,
        /// Ground truth, required by the oracle predictor
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Also write short, long and scale-map intermediates next to the output
        #[arg(long)]
        dump_intermediate: bool,
    },
    /// Enhance every frame of a directory, in lexicographic order
    Sequence {
        frames_dir: PathBuf,
        out_dir: PathBuf,
        #[arg(long)]
        first_n: Option<usize>,
        /// Ground-truth frames; enables the report and the oracle predictor
        #[arg(long)]
        gt_dir: Option<PathBuf>,
        #[arg(long)]
        dump_intermediate: bool,
    },
    /// Build the oracle scale mask and blend from ground truth
    Oracle {
        #[arg(long)]
        short: PathBuf,
        #[arg(long)]
        long: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out_mask: PathBuf,
        #[arg(long)]
        out_image: PathBuf,
    },
    /// Blend short and long estimates with a scale map
    Blend {
        #[arg(long)]
        short: PathBuf,
        #[arg(long)]
        long: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR and SSIM of predictions against ground truth, paired by file stem
    Metrics {
        pred_dir: PathBuf,
        gt_dir: PathBuf,
        /// Directory for report.csv and report.json (default: pred_dir)
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        variant: Option<String>,
    },
    /// Disagreement between two independently enhanced overlapping crops
    Diagnose {
        input: PathBuf,
        /// Crop as x,y,size in pixels
        #[arg(long)]
        window_a: String,
        #[arg(long)]
        window_b: String,
        #[arg(long, default_value = "heatmap.png")]
        out: PathBuf,
    },
}

fn load_rgb(path: &Path) -> anyhow::Result<Image> {
    Ok(to_rgb(&read_image(path)?))
}

fn parse_rect(s: &str) -> Result<PixelRect, Error> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::Config(format!("window must be x,y,size, got '{s}'")))?;
    match parts[..] {
        [x, y, side] => Ok(PixelRect::square(x, y, side)),
        _ => Err(Error::Config(format!("window must be x,y,size, got '{s}'"))),
    }
}

struct Pipeline {
    cfg: Resolved,
    enhancer: Box<dyn Enhancer>,
    predictor: Predictor,
}

impl Pipeline {
    fn new(cfg: Resolved) -> anyhow::Result<Pipeline> {
        let enhancer = cfg.enhancer.build()?;
        let predictor = cfg.predictor.build()?;
        Ok(Pipeline { cfg, enhancer, predictor })
    }

    fn run(&self, input: &Path, output: &Path, gt: Option<&Path>, dump: bool) -> anyhow::Result<()> {
        let dark = load_rgb(input)?;
        let gt = gt.map(load_rgb).transpose()?;
        let gain = self.cfg.gain.resolve(&dark)?;
        info!("{}: gain {gain}", input.display());
        let out = ensemble_estimate(
            &dark,
            self.enhancer.as_ref(),
            &self.cfg.grid,
            gain,
            &self.predictor,
            self.cfg.mode,
            gt.as_ref(),
        )
        .with_context(|| format!("enhancing {}", input.display()))?;
        if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
        }
        write_image(output, &out.output)?;
        if dump {
            let dir = output.parent().unwrap_or(Path::new("."));
            let stem = output.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
            out.dump(dir, stem)?;
        }
        Ok(())
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&cli.common)?;
    let resolved = cfg.resolve()?;
    info!("configuration: {resolved:?}");
    let workers = resolved.workers;
    let body = move || execute(cli.command, resolved);
    if workers > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(workers).build()?.install(body)
    } else {
        body()
    }
}

fn execute(command: Command, cfg: Resolved) -> anyhow::Result<()> {
    match command {
        Command::Simulate { corpus, out, count } => {
            let manifest = generate_dataset(&corpus, &out, &cfg.sim, count)?;
            println!("{}", manifest.display());
        }
        Command::Enhance { input, output, gt, dump_intermediate } => {
            Pipeline::new(cfg)?.run(&input, &output, gt.as_deref(), dump_intermediate)?;
        }
        Command::Sequence { frames_dir, out_dir, first_n, gt_dir, dump_intermediate } => {
            let mut frames = list_images(&frames_dir)?;
            if let Some(n) = first_n {
                frames.truncate(n);
            }
            let pipeline = Pipeline::new(cfg)?;
            let mut scored = Vec::new();
            for frame in &frames {
                let name = frame.file_name().expect("listed files have names");
                let stem = frame.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                let gt = match &gt_dir {
                    Some(dir) => Some(find_by_stem(dir, &stem)?),
                    None => None,
                };
                let output = out_dir.join(name);
                pipeline.run(frame, &output, gt.as_deref(), dump_intermediate)?;
                if let Some(gt) = gt {
                    scored.push((stem, output, gt));
                }
            }
            println!("processed {} frame(s)", frames.len());
            if gt_dir.is_some() {
                let report = evaluate_files(scored, Some(pipeline.cfg.enhancer_label.clone()))?;
                report.write(&out_dir, REPORT_STEM)?;
                print!("{}", report.to_table());
            }
        }
        Command::Oracle { short, long, gt, out_mask, out_image } => {
            let (s, l, g) = (load_rgb(&short)?, load_rgb(&long)?, load_rgb(&gt)?);
            let mask = oracle_mask(&s, &l, &g)?;
            let img = tile_ensemble::blend_hard(&s, &l, &mask)?;
            mask.save(&out_mask)?;
            write_image(&out_image, &img)?;
            let frac = mask.p_long().iter().filter(|&&p| p == 1.0).count() as f64 / mask.p_long().len() as f64;
            println!("long-scale fraction {frac:.6}");
        }
        Command::Blend { short, long, map, out } => {
            let (s, l) = (load_rgb(&short)?, load_rgb(&long)?);
            let map = ScaleMap::load(&map)?;
            write_image(&out, &blend(&s, &l, &map, cfg.mode)?)?;
        }
        Command::Metrics { pred_dir, gt_dir, out, variant } => {
            let report = evaluate_dataset(&pred_dir, &gt_dir, variant)?;
            report.write(out.as_deref().unwrap_or(&pred_dir), REPORT_STEM)?;
            print!("{}", report.to_table());
        }
        Command::Diagnose { input, window_a, window_b, out } => {
            let img = load_rgb(&input)?;
            let (h, w) = (img.height(), img.width());
            let wa = Window::from_pixel_rect(parse_rect(&window_a)?, h, w)?;
            let wb = Window::from_pixel_rect(parse_rect(&window_b)?, h, w)?;
            let enhancer = cfg.enhancer.build()?;
            let gain = cfg.gain.resolve(&img)?;
            let d = crop_disagreement(&img, enhancer.as_ref(), &wa, &wb, gain)?;
            write_image(&out, &d.heatmap)?;
            println!("mean_abs_diff {}", d.mean);
        }
    }
    Ok(())
}

fn find_by_stem(dir: &Path, stem: &str) -> anyhow::Result<PathBuf> {
    let hit = list_images(dir)?
        .into_iter()
        .find(|p| p.file_stem().and_then(|s| s.to_str()) == Some(stem));
    match hit {
        Some(p) => Ok(p),
        None => bail!(Error::Io {
            path: dir.join(stem),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no ground-truth frame with this stem"),
        }),
    }
}

/// 2 configuration, 3 I/O, 4 adapter process failure, 5 shape mismatch,
/// 6 malformed adapter frame, 1 anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    fn adapter(e: &AdapterError) -> u8 {
        match e {
            AdapterError::Malformed(_) => 6,
            AdapterError::ShapeMismatch { .. } => 5,
            _ => 4,
        }
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) => 2,
                Error::Io { .. } | Error::Decode { .. } => 3,
                Error::ShapeMismatch { .. } => 5,
                Error::Adapter(a) => adapter(a),
                _ => 1,
            };
        }
        if let Some(a) = cause.downcast_ref::<AdapterError>() {
            return adapter(a);
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TILE_ENSEMBLE_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
