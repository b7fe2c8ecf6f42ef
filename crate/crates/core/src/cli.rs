//! The `rrs` command line.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::attack::{topk_attack, AttackConfig, GradientMode, DEFAULT_BUDGET, DEFAULT_ITERATIONS, DEFAULT_LR};
use crate::error::{Error, Result};
use crate::eval::{pointing_score, run_sweep, synthetic_task, SweepSpec, TaskShape, DEFAULT_TAU};
use crate::harness::{certify_file, sha256_hex, CertifyRequest, Target};
use crate::image::Image;
use crate::interpret::SimpleGradient;
use crate::model::TinyModel;
use crate::order::NormOrder;
use crate::rrsm::{read_map, write_map, RrsmMap};
use crate::scoring::top_k_overlap;
use crate::selftest;
use crate::smoother::{smooth, SmoothingConfig, DEFAULT_ETA, DEFAULT_SAMPLES, DEFAULT_SIGMA};

#[derive(Debug, Parser)]
#[command(name = "rrs", version, about = "Certifiably robust attribution maps via noise smoothing")]
pub struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Smooth the attribution map of an image.
    Smooth(SmoothArgs),
    /// Certify a smoothed map.
    Certify(CertifyArgs),
    /// Attack the top-k attributions of an image.
    Attack(AttackArgs),
    /// Compare or score maps.
    Eval {
        #[command(subcommand)]
        which: EvalCommand,
    },
    /// Run a parameter sweep from a JSON spec.
    Sweep(SweepArgs),
    /// Run the built-in oracle suites.
    Selftest(SelftestArgs),
    /// Write a synthetic image, object mask and model.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ModelInput {
    /// Image as an RRSM file with intensities in [0, 1].
    #[arg(long)]
    pub image: PathBuf,
    /// Model as JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// Class to explain; defaults to the model's prediction.
    #[arg(long)]
    pub label: Option<usize>,
    /// Keep gradient signs instead of magnitudes.
    #[arg(long)]
    pub signed: bool,
}

#[derive(Debug, Args)]
pub struct SmoothArgs {
    #[command(flatten)]
    pub input: ModelInput,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    pub sigma: f64,
    #[arg(long, default_value = "inf")]
    pub d_prior: NormOrder,
    /// Scoring-vector midpoint; defaults to n / 4.
    #[arg(long)]
    pub k_star: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_ETA)]
    pub eta: f64,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("target").required(true).args(["beta", "attack_size"]))]
pub struct CertifyArgs {
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long, default_value = "inf")]
    pub d_prior: NormOrder,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    pub sigma: f64,
    #[arg(long)]
    pub k: usize,
    /// Certify the largest attack size for this overlap ratio.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Certify the largest overlap ratio for this attack size.
    #[arg(long)]
    pub attack_size: Option<f64>,
    /// Samples behind the map; enables the finite-sample lower bound.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, requires = "samples")]
    pub confidence: Option<f64>,
    /// Scoring midpoint the map was built with (finite-sample bound only).
    #[arg(long)]
    pub k_star: Option<f64>,
    /// Scoring steepness the map was built with; without it the per-sample
    /// range is taken as 1.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Certify against the exact smallest violating divergence rather than
    /// the pooled closed form. Never certifies more.
    #[arg(long, conflicts_with = "samples")]
    pub exact: bool,
    /// Write the certificate here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[command(flatten)]
    pub input: ModelInput,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: f64,
    #[arg(long, default_value = "inf")]
    pub norm: NormOrder,
    #[arg(long, default_value_t = DEFAULT_LR)]
    pub lr: f64,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub iterations: usize,
    /// Only accept iterates that keep the predicted label.
    #[arg(long)]
    pub enforce_label: bool,
    /// Central-difference gradients with this step instead of analytic ones.
    #[arg(long)]
    pub fd_step: Option<f64>,
    /// Adversarial image (RRSM).
    #[arg(long)]
    pub out: PathBuf,
    /// Objective and distance traces (JSON).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Top-k overlap of two maps.
    Overlap {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        k: usize,
    },
    /// Pointing-game score of a map against an object mask (nonzero = inside).
    Pointing {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
    },
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fill the seconds column with wall time.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    /// Smaller workloads.
    #[arg(long)]
    pub quick: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub height: usize,
    #[arg(long, default_value_t = 8)]
    pub width: usize,
}

/// Parses `argv`, runs the command and returns the process exit code:
/// 0 on success, 2 on invalid input, 1 on internal failure.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let mut buf = Vec::new();
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli, &mut buf)),
            Err(e) => Err(Error::param(format!("cannot build thread pool: {e}"))),
        },
        None => dispatch(&cli, &mut buf),
    };
    let _ = stdout.write_all(&buf);
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_validation() {
                2
            } else {
                1
            }
        }
    }
}

fn out_err(e: std::io::Error) -> Error {
    Error::io("writing output", e)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn load_input(input: &ModelInput) -> Result<(SimpleGradient, Image)> {
    let model: TinyModel = read_json(&input.model)?;
    let map = read_map(&input.image)?;
    map.expect_dims(model.dims)?;
    let pixels = map.to_f64();
    let label = match input.label {
        Some(l) => l,
        None => model.predict(&pixels)?,
    };
    if label >= model.n_classes {
        return Err(Error::domain(format!("label {label} out of range for {} classes", model.n_classes)));
    }
    let image = Image::new(pixels, model.dims, label)?;
    let interp = SimpleGradient {
        model,
        signed: input.signed,
    };
    Ok((interp, image))
}

fn dispatch(cli: &Cli, out: &mut Vec<u8>) -> Result<i32> {
    match &cli.command {
        Command::Smooth(a) => {
            let (interp, image) = load_input(&a.input)?;
            let n = image.len();
            let mut cfg = SmoothingConfig::new(n, a.samples, a.sigma, a.d_prior, cli.seed)?;
            cfg = cfg.clone().with_scoring(a.k_star.unwrap_or(cfg.k_star), a.eta);
            let m = smooth(&interp, &image, &cfg)?;
            let bytes = RrsmMap::from_f64(image.dims(), m.scores())?.to_bytes();
            write_file(&a.out, &bytes)?;
            writeln!(out, "{} sha256={}", a.out.display(), sha256_hex(&bytes)).map_err(out_err)?;
        }
        Command::Certify(a) => {
            let target = match (a.beta, a.attack_size) {
                (Some(b), None) => Target::Beta(b),
                (None, Some(l)) => Target::AttackSize(l),
                _ => return Err(Error::param("give exactly one of --beta and --attack-size")),
            };
            let mut req = CertifyRequest::new(a.d_prior, a.sigma, a.k, target);
            req.finite_sample = a.samples.map(|t| (t, a.confidence.unwrap_or(0.95)));
            req.k_star = a.k_star;
            req.eta = a.eta;
            req.exact_minimum = a.exact;
            let doc = certify_file(&a.map, &req)?;
            let json = doc.to_json()?;
            match &a.out {
                Some(p) => write_file(p, &json)?,
                None => out.extend_from_slice(&json),
            }
        }
        Command::Attack(a) => {
            let (interp, image) = load_input(&a.input)?;
            let mut cfg = AttackConfig::new(a.k, a.budget, a.norm).with_lr(a.lr).with_iterations(a.iterations);
            cfg.enforce_label = a.enforce_label;
            if let Some(step) = a.fd_step {
                cfg.gradient = GradientMode::FiniteDifference { step };
            }
            let r = topk_attack(&interp, &image, &cfg)?;
            write_map(&a.out, &RrsmMap::from_f64(image.dims(), r.x_adv.pixels())?)?;
            if let Some(p) = &a.trace {
                let trace = serde_json::json!({
                    "objective": r.objective_trace,
                    "distance": r.distance_trace,
                });
                let mut bytes = serde_json::to_vec_pretty(&trace)?;
                bytes.push(b'\n');
                write_file(p, &bytes)?;
            }
            let summary = serde_json::json!({
                "achieved_overlap": r.achieved_overlap,
                "best_iteration": r.best_iteration,
                "iterations_run": r.iterations_run,
                "objective_clean": r.objective_trace[0],
                "objective_best": r.objective_trace[r.best_iteration],
                "label_flipped": r.label_flipped,
                "step": r.step,
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&summary)?).map_err(out_err)?;
        }
        Command::Eval { which } => match which {
            EvalCommand::Overlap { a, b, k } => {
                let (ma, mb) = (read_map(a)?, read_map(b)?);
                ma.expect_dims(mb.dims)?;
                let v = top_k_overlap(&ma.to_f64(), &mb.to_f64(), *k)?;
                writeln!(out, "{v}").map_err(out_err)?;
            }
            EvalCommand::Pointing { map, mask, k, tau } => {
                let (m, mk) = (read_map(map)?, read_map(mask)?);
                mk.expect_dims(m.dims)?;
                let inside: Vec<bool> = mk.values.iter().map(|&v| v != 0.0).collect();
                let s = pointing_score(&m.to_f64(), &inside, *k, *tau)?;
                writeln!(out, "{}", serde_json::to_string(&s)?).map_err(out_err)?;
            }
        },
        Command::Sweep(a) => {
            let mut spec: SweepSpec = read_json(&a.spec)?;
            spec.record_time |= a.timings;
            let table = run_sweep(&spec)?;
            for (v, r, msg) in &table.failures {
                eprintln!("cell value={v} repetition={r} failed: {msg}");
            }
            match &a.out {
                Some(p) => {
                    let mut buf = Vec::new();
                    table.write_csv(&mut buf)?;
                    write_file(p, &buf)?;
                }
                None => table.write_csv(&mut *out)?,
            }
        }
        Command::Selftest(a) => {
            let reports = selftest::run_all(a.quick, cli.seed);
            let mut ok = true;
            for r in &reports {
                ok &= r.passed;
                let status = if r.passed { "PASS" } else { "FAIL" };
                writeln!(out, "{status} {} ({:.1}s): {}", r.name, r.seconds, r.detail).map_err(out_err)?;
            }
            return Ok(if ok { 0 } else { 1 });
        }
        Command::Synth(a) => {
            let shape = TaskShape {
                height: a.height,
                width: a.width,
                ..TaskShape::default()
            };
            let task = synthetic_task(&shape, cli.seed)?;
            std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io("creating output directory", e))?;
            let dims = task.image.dims();
            write_map(&a.out_dir.join("image.rrsm"), &RrsmMap::from_f64(dims, task.image.pixels())?)?;
            let mask: Vec<f64> = task.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
            write_map(&a.out_dir.join("mask.rrsm"), &RrsmMap::from_f64(dims, &mask)?)?;
            let mut model = serde_json::to_vec_pretty(&task.model)?;
            model.push(b'\n');
            write_file(&a.out_dir.join("model.json"), &model)?;
            writeln!(out, "label {}", task.image.label).map_err(out_err)?;
        }
    }
    Ok(0)
}
