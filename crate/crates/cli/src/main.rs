use anyhow::{ensure, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use hdfnet::checks::{gradient_suites, oracle_suites, SuiteResult};
use hdfnet::io::{
    curves_csv, evaluate, pair_dataset, parse_report_csv, per_image_csv, read_pgm_file, report_csv,
    report_markdown, resize_map, write_pgm_file, GrayImage,
};
use hdfnet::metrics::{ave_metric, Metric, SaliencyMap};
use hdfnet::net::{hdfnet_forward, HdfnetParams, NetConfig};
use hdfnet::{Shape, Tensor};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const THREADS_VAR: &str = "HDF_THREADS";

/// Side lengths fed to the network are rounded to a multiple of this.
const NET_STRIDE: usize = 16;

#[derive(Parser)]
#[command(
    name = "hdf",
    version,
    about = "Saliency evaluation, gradient checks and a toy forward pass"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Md,
}

#[derive(Subcommand)]
enum Command {
    /// Score a directory of predictions against ground truths.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Comma-separated subset of f_max,f_ada,wfm,mae,s_measure,e_measure.
        #[arg(long, value_delimiter = ',')]
        metrics: Option<Vec<Metric>>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: PathBuf,
    },
    /// Size-weighted average of several report CSVs.
    Aggregate {
        #[arg(long, value_delimiter = ',', required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference gradient suites.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Production kernels against direct loop implementations.
    Oracle {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Toy network forward pass on a grayscale image and a depth map.
    DemoForward {
        #[arg(long)]
        rgb: PathBuf,
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("{THREADS_VAR}={raw} is not a thread count"))?;
    ensure!(n > 0, "{THREADS_VAR} must be positive");
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("building the worker pool")?;
    Ok(())
}

/// `report.csv` becomes `report.<suffix>.csv`.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}.csv"))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run_eval(
    pred: &Path,
    gt: &Path,
    metrics: Option<Vec<Metric>>,
    format: Format,
    out: &Path,
) -> Result<()> {
    let metrics = metrics.unwrap_or_else(|| Metric::ALL.to_vec());
    let pairing = pair_dataset(pred, gt)?;
    for name in &pairing.unmatched {
        eprintln!("warning: no ground truth for prediction `{name}`");
    }
    let eval = evaluate(&pairing)?;
    for (name, err) in &eval.failures {
        eprintln!("warning: skipped `{name}`: {err}");
    }
    let text = match format {
        Format::Csv => report_csv(&eval.report, &metrics),
        Format::Md => {
            let label = gt
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            report_markdown(&label, &eval.report, &metrics)
        }
    };
    write(out, &text)?;
    write(&sibling(out, "images"), &per_image_csv(&eval, &metrics))?;
    write(&sibling(out, "curves"), &curves_csv(&eval.report))?;
    Ok(())
}

fn run_aggregate(reports: &[PathBuf], sizes: &[usize], out: &Path) -> Result<()> {
    ensure!(
        reports.len() == sizes.len(),
        "{} reports but {} sizes",
        reports.len(),
        sizes.len()
    );
    let mut loaded = Vec::with_capacity(reports.len());
    for (path, &n) in reports.iter().zip(sizes) {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut r = parse_report_csv(&text).with_context(|| path.display().to_string())?;
        r.n_images = n;
        loaded.push(r);
    }
    write(out, &report_csv(&ave_metric(&loaded)?, &Metric::ALL))
}

fn print_suites(results: &[SuiteResult]) -> bool {
    for r in results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed()).count();
    println!("{} suites, {failed} failed", results.len());
    failed == 0
}

fn round_to_stride(len: usize) -> usize {
    ((len + NET_STRIDE / 2) / NET_STRIDE).max(1) * NET_STRIDE
}

fn run_demo(rgb: &Path, depth: &Path, out: &Path, seed: u64) -> Result<()> {
    let gray = read_pgm_file(rgb)?.to_map();
    let depth = read_pgm_file(depth)?.to_map();
    let (w, h) = (gray.width(), gray.height());
    let (nw, nh) = (round_to_stride(w), round_to_stride(h));
    let gray = resize_map(&gray, nw, nh)?;
    let depth = resize_map(&depth, nw, nh)?;
    let plane = gray.values();
    let rgb = Tensor::from_fn(Shape::new(1, 3, nh, nw), |_, _, y, x| plane[y * nw + x]);
    let depth = Tensor::from_vec(Shape::new(1, 1, nh, nw), depth.values().to_vec())?;
    let params = HdfnetParams::init(&NetConfig::default(), seed);
    let pred = hdfnet_forward(&rgb, &depth, &params)?;
    let map = resize_map(&SaliencyMap::new(nw, nh, pred.data().to_vec())?, w, h)?;
    write_pgm_file(out, &GrayImage::from_map(&map))?;
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    configure_threads()?;
    match cli.command {
        Command::Eval {
            pred,
            gt,
            metrics,
            format,
            out,
        } => run_eval(&pred, &gt, metrics, format, &out)?,
        Command::Aggregate {
            reports,
            sizes,
            out,
        } => run_aggregate(&reports, &sizes, &out)?,
        Command::Gradcheck { seed } => return Ok(print_suites(&gradient_suites(seed)?)),
        Command::Oracle { seed } => return Ok(print_suites(&oracle_suites(seed)?)),
        Command::DemoForward {
            rgb,
            depth,
            out,
            seed,
        } => run_demo(&rgb, &depth, &out, seed)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
