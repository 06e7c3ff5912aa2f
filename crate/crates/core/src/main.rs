use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use flowcraft::field::{resize_flow, resize_image, FlowField, Image, Plane};
use flowcraft::flowkit::config::{parse_override, RunConfig};
use flowcraft::flowkit::imageio::write_mask_png;
use flowcraft::flowkit::{
    colorize_flow, evaluate, ingest_dataset, read_flow_file, read_image, write_flow_file,
    write_image, EvalStats, FlowFileRecord, ImageEncoding, Layout,
};
use flowcraft::gradcheck::gradient_suite;
use flowcraft::objectives::{total_loss, CropWindow, LossInputs, SelfSupMasking};
use flowcraft::occlusion::estimate_occlusion;
use flowcraft::selfsup::{
    generate_selfsup_label, multi_frame_label, sample_record, AugmentRanges, AugmentRecord,
    LabelKey, LabelStore, MultiFrameConfig,
};
use flowcraft::selftest::run_selftest;
use flowcraft::solver::{estimate_flow, DirectSolver};
use flowcraft::Error;

#[derive(Parser, Debug)]
#[command(name = "flowcraft", version, about = "Unsupervised optical flow toolkit")]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Configuration override, e.g. `--set smooth_weight=2.5`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the flow between two frames.
    Estimate(EstimateArgs),
    /// Print the objective's terms for a given flow.
    Loss(LossArgs),
    /// Occlusion mask from forward and backward flow.
    Occlusion(OcclusionArgs),
    /// Generate self-supervision labels for a dataset into a label store.
    Labels(LabelsArgs),
    /// Evaluate predicted flow against ground truth.
    Eval(EvalArgs),
    /// Render a flow file as a colour image.
    Viz(VizArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Run the synthetic acceptance checks.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug)]
struct EstimateArgs {
    first: PathBuf,
    second: PathBuf,
    /// Output flow, `.flo` or KITTI `.png`.
    #[arg(short, long)]
    out: PathBuf,
    /// Also write a colour rendering of the flow.
    #[arg(long)]
    viz: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LossArgs {
    first: PathBuf,
    second: PathBuf,
    flow: PathBuf,
    /// Visibility mask image (white = visible); all visible by default.
    #[arg(long)]
    occlusion: Option<PathBuf>,
    /// Teacher flow for the self-supervision term.
    #[arg(long)]
    label: Option<PathBuf>,
    /// Crop of the first frame as `x,y,height,width`; the flow covers the crop.
    #[arg(long)]
    crop: Option<String>,
}

#[derive(Args, Debug)]
struct OcclusionArgs {
    forward: PathBuf,
    backward: PathBuf,
    /// Output mask PNG (white = visible).
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LabelKind {
    Twoframe,
    Multiframe,
}

#[derive(Args, Debug)]
struct LabelsArgs {
    kind: LabelKind,
    /// Dataset root.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "flat-pairs")]
    layout: String,
    /// Label store directory.
    #[arg(short, long)]
    out: PathBuf,
    /// Student crop `HEIGHTxWIDTH` for two-frame labels; defaults to the frame size.
    #[arg(long)]
    crop: Option<String>,
    /// Store two-frame labels in the teacher's geometry.
    #[arg(long)]
    no_augment: bool,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Predicted flow file, or a directory laid out like a label store.
    pred: PathBuf,
    /// Ground-truth flow file; required unless `--dataset` is given.
    gt: Option<PathBuf>,
    /// Non-occluded ground truth whose validity marks the noc pixels.
    #[arg(long)]
    noc: Option<PathBuf>,
    /// Dataset root supplying ground truth for a prediction directory.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value = "flat-pairs")]
    layout: String,
    /// Also write the table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VizArgs {
    flow: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    /// Magnitude mapped to full saturation; defaults to the field maximum.
    #[arg(long)]
    max_norm: Option<f64>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    /// Fewer instances per check.
    #[arg(long)]
    quick: bool,
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(msg.into()))
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let text = match &cli.config {
        Some(p) => Some(
            std::fs::read_to_string(p)
                .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", p.display())))?,
        ),
        None => None,
    };
    let overrides = cli
        .overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<flowcraft::Result<Vec<_>>>()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    RunConfig::from_sources(text.as_deref(), &overrides).map_err(|e| Failure::Usage(e.to_string()))
}

fn parse_numbers(s: &str, sep: char, count: usize, what: &str) -> CliResult<Vec<usize>> {
    let parts: Vec<_> = s.split(sep).map(|p| p.trim().parse::<usize>()).collect();
    if parts.len() != count || parts.iter().any(|p| p.is_err()) {
        return usage(format!("expected {what}, got {s:?}"));
    }
    Ok(parts.into_iter().map(|p| p.expect("checked")).collect())
}

fn read_mask(path: &Path) -> CliResult<Plane> {
    Ok(read_image(path)?.intensity(1.0))
}

/// Solves at the configured working resolution when evaluation resizing is on.
fn estimate_pair(config: &RunConfig, i1: &Image, i2: &Image) -> CliResult<FlowField> {
    let (h, w) = (i1.height(), i1.width());
    if i2.height() != h || i2.width() != w {
        return Err(Error::InvalidInput("both frames must share dimensions".into()).into());
    }
    let (a, b) = if config.eval_resize {
        let (eh, ew) = config.eval_size;
        (resize_image(i1, eh, ew)?, resize_image(i2, eh, ew)?)
    } else {
        (i1.clone(), i2.clone())
    };
    let crop = CropWindow::full(a.height(), a.width());
    let seq = estimate_flow(&a, &b, &crop, &config.solver, None)?;
    let flow = seq.final_flow().clone();
    Ok(if config.eval_resize { resize_flow(&flow, h, w)? } else { flow })
}

fn cmd_estimate(config: &RunConfig, args: &EstimateArgs) -> CliResult<()> {
    let i1 = read_image(&args.first)?;
    let i2 = read_image(&args.second)?;
    let flow = estimate_pair(config, &i1, &i2)?;
    write_flow_file(&args.out, &flow, None)?;
    if let Some(viz) = &args.viz {
        write_image(&colorize_flow(&flow, None), viz, ImageEncoding::for_path(viz))?;
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_loss(config: &RunConfig, args: &LossArgs) -> CliResult<()> {
    let i1_full = read_image(&args.first)?;
    let i2 = read_image(&args.second)?;
    let flow = read_flow_file(&args.flow)?.flow;
    let crop = match &args.crop {
        Some(s) => {
            let v = parse_numbers(s, ',', 4, "x,y,height,width")?;
            CropWindow::new(v[0], v[1], v[2], v[3], i2.height(), i2.width())?
        }
        None => CropWindow::full(i2.height(), i2.width()),
    };
    let i1 = i1_full.crop(crop.y, crop.x, crop.height, crop.width)?;
    let occlusion = match &args.occlusion {
        Some(p) => read_mask(p)?,
        None => Plane::filled(crop.height, crop.width, 1.0),
    };
    let label = args.label.as_ref().map(read_flow_file).transpose()?;
    let weights = config.solver.weights;
    let census = config.solver.census;
    let breakdown = total_loss(
        &LossInputs {
            i1_crop: &i1,
            i2_full: &i2,
            crop: &crop,
            flow: &flow,
            occlusion: &occlusion,
            edge_image: None,
            teacher: label.as_ref().map(|l| (&l.flow, SelfSupMasking::None)),
        },
        &weights,
        &census,
    )?;
    let grad_norm = breakdown.gradient.as_slice().iter().map(|g| g * g).sum::<f64>().sqrt();
    println!("photometric {}", breakdown.photometric);
    println!("smoothness {}", breakdown.smoothness);
    println!("self_supervision {}", breakdown.self_supervision);
    println!("total {}", breakdown.total);
    println!("gradient_norm {grad_norm}");
    if !breakdown.total.is_finite() {
        return Err(Error::Numerical("objective is not finite".into()).into());
    }
    Ok(())
}

fn cmd_occlusion(config: &RunConfig, args: &OcclusionArgs) -> CliResult<()> {
    let forward = read_flow_file(&args.forward)?.flow;
    let backward = read_flow_file(&args.backward)?.flow;
    let mask = estimate_occlusion(config.solver.occlusion, &forward, &backward)?;
    write_mask_png(&mask, &args.out)?;
    let occluded = mask.data.iter().filter(|&&v| v < 0.5).count();
    println!(
        "occluded {occluded} of {} pixels, wrote {}",
        mask.data.len(),
        args.out.display()
    );
    Ok(())
}

/// Runs `job(i)` for every index on `jobs` threads; results keep index order.
fn parallel_map<T: Send>(
    count: usize,
    jobs: usize,
    job: impl Fn(usize) -> flowcraft::Result<T> + Sync,
) -> Vec<flowcraft::Result<T>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<flowcraft::Result<T>>>> =
        Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, count.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let r = job(i);
                slots.lock().expect("no panics while holding the lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every index visited"))
        .collect()
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn cmd_labels(config: &RunConfig, args: &LabelsArgs) -> CliResult<()> {
    let layout: Layout = args.layout.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?;
    let dataset = ingest_dataset(&args.dataset, layout)?;
    let store = LabelStore::open(&args.out)?;
    let jobs = args.jobs.unwrap_or_else(default_jobs);
    let base_seed = config.solver.seed;
    let results = match args.kind {
        LabelKind::Twoframe => {
            let crop = args
                .crop
                .as_deref()
                .map(|s| parse_numbers(s, 'x', 2, "HEIGHTxWIDTH"))
                .transpose()?;
            let estimator = DirectSolver {
                config: config.solver.clone(),
            };
            let pairs = &dataset.pairs;
            parallel_map(pairs.len(), jobs, |i| {
                let pair = &pairs[i];
                let i1 = read_image(&pair.first)?;
                let i2 = read_image(&pair.second)?;
                let (h, w) = (i1.height(), i1.width());
                let seed = base_seed.wrapping_add(i as u64);
                let record = if args.no_augment {
                    AugmentRecord::identity(h, w)
                } else {
                    let (ch, cw) = crop.as_ref().map_or((h, w), |c| (c[0], c[1]));
                    sample_record(h, w, &AugmentRanges::for_crop(ch, cw), seed)?
                };
                let label = generate_selfsup_label(&i1, &i2, &estimator, &record)?;
                store.write(&LabelKey::new(&pair.sequence, pair.frame), &label, seed)?;
                info!("labelled {} frame {}", pair.sequence, pair.frame);
                Ok(())
            })
        }
        LabelKind::Multiframe => {
            let mf = MultiFrameConfig {
                solver: config.solver.clone(),
                inversion: config.inversion,
            };
            let triplets = &dataset.triplets;
            if triplets.is_empty() {
                return Err(Error::InvalidInput("dataset has no frame triplets".into()).into());
            }
            parallel_map(triplets.len(), jobs, |i| {
                let t = &triplets[i];
                let out = multi_frame_label(
                    &read_image(&t.prev)?,
                    &read_image(&t.cur)?,
                    &read_image(&t.next)?,
                    &mf,
                )?;
                store.write(&LabelKey::new(&t.sequence, t.frame), &out.label, mf.inversion.seed)?;
                info!("labelled {} frame {}", t.sequence, t.frame);
                Ok(())
            })
        }
    };
    let total = results.len();
    let mut first_error = None;
    for r in results {
        if let Err(e) = r {
            warn!("{e}");
            first_error.get_or_insert(e);
        }
    }
    if let Some(e) = first_error {
        return Err(e.into());
    }
    println!("wrote {total} labels to {}", store.root().display());
    Ok(())
}

struct EvalRow {
    name: String,
    stats: EvalStats,
}

fn eval_one(config: &RunConfig, pred: &Path, gt: &Path, noc: Option<&Path>) -> CliResult<EvalStats> {
    let pred = read_flow_file(pred)?.flow;
    let gt: FlowFileRecord = read_flow_file(gt)?;
    let noc = noc.map(read_flow_file).transpose()?.map(|r| r.valid);
    Ok(evaluate(&pred, &gt, noc.as_ref(), config.er_mode)?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

fn cmd_eval(config: &RunConfig, args: &EvalArgs) -> CliResult<()> {
    let mut rows = Vec::new();
    match (&args.dataset, &args.gt) {
        (Some(root), None) => {
            let layout: Layout =
                args.layout.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?;
            let dataset = ingest_dataset(root, layout)?;
            let store = LabelStore::open(&args.pred)?;
            for pair in dataset.pairs.iter() {
                let Some(gt) = &pair.gt else { continue };
                let pred = store.path_for(&LabelKey::new(&pair.sequence, pair.frame));
                if !pred.exists() {
                    warn!("no prediction for {} frame {}", pair.sequence, pair.frame);
                    continue;
                }
                rows.push(EvalRow {
                    name: format!("{}/{}", pair.sequence, pair.frame),
                    stats: eval_one(config, &pred, gt, pair.gt_noc.as_deref())?,
                });
            }
        }
        (None, Some(gt)) => rows.push(EvalRow {
            name: args.pred.display().to_string(),
            stats: eval_one(config, &args.pred, gt, args.noc.as_deref())?,
        }),
        _ => return usage("give either a ground-truth file or --dataset"),
    }
    let Some(mean) = EvalStats::aggregate(&rows.iter().map(|r| r.stats).collect::<Vec<_>>())
    else {
        return Err(Error::InvalidInput("nothing to evaluate".into()).into());
    };
    rows.push(EvalRow {
        name: "mean".into(),
        stats: mean,
    });
    println!(
        "{:<32} {:>10} {:>10} {:>8} {:>10} {:>10} {:>10}",
        "item", "epe", "epe_noc", "er%", "all", "valid", "noc"
    );
    for r in &rows {
        let s = &r.stats;
        println!(
            "{:<32} {:>10.4} {:>10} {:>8.3} {:>10} {:>10} {:>10}",
            r.name,
            s.epe,
            fmt_opt(s.epe_noc),
            s.error_rate,
            s.count_all,
            s.count_valid,
            s.count_noc
        );
    }
    if let Some(path) = &args.csv {
        let mut csv = String::from("item,epe,epe_noc,error_rate,count_all,count_valid,count_noc\n");
        for r in &rows {
            let s = &r.stats;
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.name,
                s.epe,
                s.epe_noc.map_or(String::new(), |v| v.to_string()),
                s.error_rate,
                s.count_all,
                s.count_valid,
                s.count_noc
            ));
        }
        std::fs::write(path, csv).map_err(Error::from)?;
    }
    Ok(())
}

fn cmd_viz(args: &VizArgs) -> CliResult<()> {
    let flow = read_flow_file(&args.flow)?.flow;
    if let Some(m) = args.max_norm {
        if !(m > 0.0) {
            return usage("--max-norm must be positive");
        }
    }
    write_image(&colorize_flow(&flow, args.max_norm), &args.out, ImageEncoding::for_path(&args.out))?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs) -> CliResult<()> {
    if args.instances == 0 {
        return usage("--instances must be positive");
    }
    let results = gradient_suite(args.instances, args.seed, args.tolerance)?;
    for r in &results {
        println!(
            "{} {:<18} {} instances, max relative error {:.3e}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.instances,
            r.max_rel_error
        );
    }
    if results.iter().all(|r| r.passed) {
        Ok(())
    } else {
        Err(Error::Numerical("gradient check failed".into()).into())
    }
}

fn cmd_selftest(args: &SelftestArgs) -> CliResult<()> {
    let results = run_selftest(args.quick);
    for r in &results {
        println!(
            "{} {:<22} {} ({:.1}s)",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail,
            r.seconds
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(Error::Numerical(format!("{failed} self-test checks failed")).into())
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let config = load_config(cli)?;
    match &cli.command {
        Command::Estimate(a) => cmd_estimate(&config, a),
        Command::Loss(a) => cmd_loss(&config, a),
        Command::Occlusion(a) => cmd_occlusion(&config, a),
        Command::Labels(a) => cmd_labels(&config, a),
        Command::Eval(a) => cmd_eval(&config, a),
        Command::Viz(a) => cmd_viz(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Selftest(a) => cmd_selftest(a),
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
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Numerical(_) => 3,
                _ => 2,
            })
        }
    }
}
