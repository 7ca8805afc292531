use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hrtf_spca::dataset::{load_dataset, save_dataset, subjects_with_full_anthro, HrtfDataset};
use hrtf_spca::evaluation::{self, TABLE_Q_LIST};
use hrtf_spca::predictors::{Family, PipelineConfig};
use hrtf_spca::spca::{LogHrtfTensor, VarianceScope};
use hrtf_spca::synthesis::{export_hrir, synthesize, ExportFormat, Method, SynthRequest};
use hrtf_spca::synthetic::{synthetic_dataset, SyntheticConfig};
use hrtf_spca::{BundleF64, Error};

mod anthro_json;

#[derive(Parser, Debug)]
#[command(name = "hrtf-spca", version, about = "SPCA-based HRTF personalization pipeline")]
struct Cli {
    /// Pipeline configuration JSON; absent fields keep their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Portable dataset directory.
    #[arg(long, global = true, value_name = "DIR")]
    dataset: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a portable dataset and print a summary.
    Ingest {
        #[arg(long, value_name = "DIR")]
        input: PathBuf,
    },
    /// Write a synthetic dataset in the portable layout.
    GenSynthetic {
        #[arg(long, default_value_t = 2019)]
        seed: u64,
        /// 10 complete subjects instead of 45.
        #[arg(long)]
        small: bool,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Fit the front/rear SPCA models and write the variance table.
    FitSpca {
        #[arg(long)]
        q: Option<usize>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Regression and correlation analysis of the anthropometry.
    SelectAnthro {
        /// PCA weights per direction.
        #[arg(long, default_value_t = 12)]
        components: usize,
        #[command(flatten)]
        out: OutDir,
    },
    /// Train predictor families into the bundle.
    Train {
        #[arg(value_enum, default_value = "all")]
        family: TrainTarget,
        #[arg(long)]
        seed: Option<u64>,
        /// Bundle directory (default: <out>/bundle).
        #[arg(long, value_name = "DIR")]
        bundle: Option<PathBuf>,
        /// Overrides every family's epoch limit.
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Synthesize an HRIR pair for a listener and direction.
    Synth {
        #[arg(long, value_name = "DIR")]
        bundle: PathBuf,
        #[arg(long, value_name = "FILE")]
        anthro: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        az: f64,
        #[arg(long, allow_hyphen_values = true)]
        el: f64,
        #[arg(long, value_enum, default_value = "spca")]
        method: MethodArg,
        #[arg(long, value_enum, default_value = "f32")]
        format: FormatArg,
        /// Diagnostic: zero the predicted SPCA weights.
        #[arg(long)]
        zero_weights: bool,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Objective evaluation reports.
    Eval {
        #[arg(value_enum)]
        report: EvalReport,
        /// Bundle directory (default: <out>/bundle).
        #[arg(long, value_name = "DIR")]
        bundle: Option<PathBuf>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "spca,generic")]
        methods: Vec<MethodArg>,
        #[arg(long, value_delimiter = ',')]
        q_list: Option<Vec<usize>>,
        #[arg(long, value_enum, default_value = "full")]
        scope: ScopeArg,
        /// Frequency bins for SFRS maps.
        #[arg(long, value_delimiter = ',', default_value = "56")]
        bins: Vec<usize>,
        /// Subjects to evaluate (default: the test subjects).
        #[arg(long, value_delimiter = ',')]
        subjects: Option<Vec<String>>,
        #[command(flatten)]
        out: OutDir,
    },
}

#[derive(Args, Debug)]
struct OutDir {
    /// Output directory.
    #[arg(long = "out", value_name = "DIR", default_value = "out")]
    dir: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TrainTarget {
    Weights,
    Dvspc,
    Hav,
    Itd,
    Pca,
    All,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Spca,
    Pca,
    Generic,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Spca => Method::Spca,
            MethodArg::Pca => Method::Pca,
            MethodArg::Generic => Method::Generic,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    F32,
    Wav,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EvalReport {
    Sd,
    Sfrs,
    Variance,
    Errors,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScopeArg {
    Full,
    Front,
    Rear,
}

fn read_config(path: Option<&Path>) -> anyhow::Result<PipelineConfig> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).map_err(|source| {
        Error::Json {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

fn dataset(cli: &Cli) -> anyhow::Result<HrtfDataset> {
    let Some(dir) = &cli.dataset else {
        bail!(Error::InvalidArgument("--dataset <DIR> is required for this command".into()));
    };
    Ok(load_dataset(dir)?)
}

fn mkdir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = read_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Ingest { input } => {
            let ds = load_dataset(input)?;
            println!("dataset      {}", input.display());
            println!("subjects     {}", ds.subjects.len());
            println!("complete     {}", subjects_with_full_anthro(&ds).len());
            println!("directions   {}", ds.direction_count());
            println!("hrir length  {}", ds.hrir_length);
            println!("sample rate  {}", ds.sample_rate);
            println!("train/test   {}/{}", ds.training_subjects.len(), ds.test_subjects.len());
            println!("generic      {}", ds.generic_subject_id);
        }
        Command::GenSynthetic { seed, small, out } => {
            let sc = if *small {
                SyntheticConfig::small(*seed)
            } else {
                SyntheticConfig {
                    seed: *seed,
                    ..SyntheticConfig::default()
                }
            };
            let ds = synthetic_dataset(&sc)?;
            save_dataset(&ds, out)?;
            let adir = out.join("anthro");
            mkdir(&adir)?;
            for s in &ds.subjects {
                if let Some(a) = &s.anthro {
                    let p = adir.join(format!("{}.json", s.subject_id));
                    std::fs::write(&p, serde_json::to_string_pretty(&anthro_json::to_json(a))?)
                        .with_context(|| format!("writing {}", p.display()))?;
                }
            }
            println!("wrote {} subjects to {}", ds.subjects.len(), out.display());
        }
        Command::FitSpca { q, out } => {
            if let Some(q) = q {
                cfg.q = *q;
            }
            let ds = dataset(&cli)?;
            let tensor = LogHrtfTensor::<f64>::from_dataset(&ds, None)?;
            let bundle = BundleF64::fit(&ds, &tensor, &cfg)?;
            mkdir(&out.dir)?;
            bundle.save(&out.dir.join("bundle"))?;
            let table = evaluation::variance_table(&tensor, &usable_q(&TABLE_Q_LIST, &tensor), VarianceScope::Full)?;
            table.write_csv(&out.dir.join("variance_table.csv"))?;
            println!("fitted SPCA with Q = {} on {} subjects", bundle.q(), tensor.subject_count());
            print_variance(&table);
        }
        Command::SelectAnthro { components, out } => {
            let ds = dataset(&cli)?;
            let report = hrtf_spca::selection_report(&ds, *components)?;
            mkdir(&out.dir)?;
            report.write(&out.dir)?;
            println!("t critical (p < {}) = {:.3}", report.significance_level, report.t_critical);
            for ear in &report.per_ear {
                println!("{:?}: significant directions per parameter", ear.ear);
                for (name, n) in report.parameters.iter().zip(&ear.directions_significant) {
                    println!("  {name:>4} {n}");
                }
            }
            println!("selected spectral set: {}", report.selected.spectral.join(", "));
            println!("selected ITD set: {}", report.selected.itd.join(", "));
        }
        Command::Train {
            family,
            seed,
            bundle,
            max_epochs,
            learning_rate,
            out,
        } => {
            if let Some(s) = seed {
                cfg = cfg.with_seed(*s);
            }
            for tc in [&mut cfg.weights, &mut cfg.dvspc, &mut cfg.hav, &mut cfg.itd] {
                if let Some(e) = max_epochs {
                    tc.max_epochs = *e;
                }
                if let Some(lr) = learning_rate {
                    tc.learning_rate = *lr;
                }
            }
            let families: Vec<Family> = match family {
                TrainTarget::Weights => vec![Family::Weights],
                TrainTarget::Dvspc => vec![Family::Dvspc],
                TrainTarget::Hav => vec![Family::Hav],
                TrainTarget::Itd => vec![Family::Itd],
                TrainTarget::Pca => vec![Family::Pca],
                TrainTarget::All => Family::ALL.to_vec(),
            };
            let ds = dataset(&cli)?;
            let tensor = LogHrtfTensor::<f64>::from_dataset(&ds, None)?;
            let dir = bundle.clone().unwrap_or_else(|| out.dir.join("bundle"));
            let mut b = if dir.join("bundle.json").exists() {
                let b = BundleF64::load(&dir)?;
                if b.q() != cfg.q {
                    bail!(Error::InvalidArgument(format!(
                        "bundle at {} has Q = {}, configuration asks for {}",
                        dir.display(),
                        b.q(),
                        cfg.q
                    )));
                }
                b
            } else {
                BundleF64::fit(&ds, &tensor, &cfg)?
            };
            b.train(&ds, &tensor, &families, &cfg)?;
            b.save(&dir)?;
            for f in &families {
                let r = &b.reports[f.name()];
                println!(
                    "{:>8}: test error {:.6e} (front {}, rear {}), mean epochs {:.1}",
                    f.name(),
                    r.overall,
                    r.per_hemisphere.first().map_or("-".into(), |v| format!("{v:.6e}")),
                    r.per_hemisphere.get(1).map_or("-".into(), |v| format!("{v:.6e}")),
                    r.mean_epochs
                );
            }
            println!("bundle written to {}", dir.display());
        }
        Command::Synth {
            bundle,
            anthro,
            az,
            el,
            method,
            format,
            zero_weights,
            out,
        } => {
            let anthro = anthro_json::read(anthro)?;
            let b = BundleF64::load(bundle)?;
            let req = SynthRequest {
                anthro,
                az_deg: *az,
                el_deg: *el,
                method: (*method).into(),
                zero_weights: *zero_weights,
            };
            let res = synthesize(&b, &req)?;
            let fmt = match format {
                FormatArg::F32 => ExportFormat::F32,
                FormatArg::Wav => ExportFormat::Wav,
            };
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                mkdir(parent)?;
            }
            export_hrir(&res, out, fmt)?;
            println!(
                "{} HRIR at ({az}, {el}): {} taps per ear, ITD {:.4} ms -> {}",
                req.method,
                res.left.len(),
                res.itd_ms,
                out.display()
            );
        }
        Command::Eval {
            report,
            bundle,
            methods,
            q_list,
            scope,
            bins,
            subjects,
            out,
        } => {
            let ds = dataset(&cli)?;
            mkdir(&out.dir)?;
            let load_bundle = || -> anyhow::Result<BundleF64> {
                let dir = bundle.clone().unwrap_or_else(|| out.dir.join("bundle"));
                Ok(BundleF64::load(&dir)?)
            };
            let methods: Vec<Method> = methods.iter().map(|&m| m.into()).collect();
            let subjects = subjects.clone().unwrap_or_else(|| ds.test_subjects.clone());
            match report {
                EvalReport::Variance => {
                    let tensor = LogHrtfTensor::<f64>::from_dataset(&ds, None)?;
                    let qs = q_list.clone().unwrap_or_else(|| TABLE_Q_LIST.to_vec());
                    let scope = match scope {
                        ScopeArg::Full => VarianceScope::Full,
                        ScopeArg::Front => VarianceScope::Front,
                        ScopeArg::Rear => VarianceScope::Rear,
                    };
                    let table = evaluation::variance_table(&tensor, &qs, scope)?;
                    table.write_csv(&out.dir.join("variance_table.csv"))?;
                    print_variance(&table);
                }
                EvalReport::Errors => {
                    let b = load_bundle()?;
                    let e = evaluation::error_summary(&b, &ds)?;
                    e.write_json(&out.dir.join("errors.json"))?;
                    let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6e}"));
                    println!("e_d {}", show(e.e_d));
                    println!("e_W {}", show(e.e_w));
                    println!("e_H {}", show(e.e_h));
                    println!("e_T {} ms", show(e.e_t));
                }
                EvalReport::Sd => {
                    let b = load_bundle()?;
                    let directions = eval_directions(&b, &methods);
                    let r = evaluation::sd_report(&b, &ds, &methods, &subjects, &directions)?;
                    r.write_csv(&out.dir.join("sd_report.csv"))?;
                    let json = out.dir.join("sd_report.json");
                    std::fs::write(&json, serde_json::to_string_pretty(&r)?)
                        .with_context(|| format!("writing {}", json.display()))?;
                    println!("SD over {} subjects, {} directions", subjects.len(), r.directions);
                    for m in &r.methods {
                        println!("{:>8}: {:.3} dB", m.method, m.overall_db);
                    }
                }
                EvalReport::Sfrs => {
                    let b = load_bundle()?;
                    let id = subjects.first().context("no subject to map")?;
                    let tensor = LogHrtfTensor::<f64>::from_dataset(&ds, Some(std::slice::from_ref(id)))?;
                    let anthro = ds.require_subject(id)?.anthro.unwrap_or_default();
                    let all: Vec<usize> = (0..b.grid.direction_count()).collect();
                    let ear = hrtf_spca::Ear::Left;
                    let measured = evaluation::measured_panel(&tensor, 0, ear, &all);
                    let panels = methods
                        .iter()
                        .map(|&m| evaluation::method_panel(&b, &anthro, m, ear, &all).map(|p| (m, p)))
                        .collect::<hrtf_spca::Result<Vec<_>>>()?;
                    for &bin in bins {
                        let reference = evaluation::sfrs(&measured, &b.grid, bin, b.sample_rate)?;
                        reference.write_csv(&out.dir)?;
                        for (m, p) in &panels {
                            let mut map = evaluation::sfrs(p, &b.grid, bin, b.sample_rate)?;
                            map.method = Some(*m);
                            let map = map.with_reference(&reference)?;
                            let err = map.error_db.as_ref().expect("attached");
                            println!(
                                "bin {bin} ({:.0} Hz) {m}: mean |error| {:.3} dB",
                                map.freq_hz,
                                err.iter().sum::<f64>() / err.len() as f64
                            );
                            map.write_csv(&out.dir)?;
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Full grid unless the PCA baseline is evaluated on a thinned grid.
fn eval_directions(b: &BundleF64, methods: &[Method]) -> Vec<usize> {
    match (&b.pca, methods.contains(&Method::Pca)) {
        (Some(p), true) => p.directions.clone(),
        _ => (0..b.grid.direction_count()).collect(),
    }
}

fn usable_q(list: &[usize], tensor: &LogHrtfTensor<f64>) -> Vec<usize> {
    let d = tensor.grid.direction_count();
    list.iter().copied().filter(|&q| q <= d).collect()
}

fn print_variance(t: &evaluation::VarianceTable) {
    println!("{:>5} {:>8} {:>8}", "Q", "left %", "right %");
    for (i, q) in t.q_list.iter().enumerate() {
        println!("{q:>5} {:>8.2} {:>8.2}", t.left[i], t.right[i]);
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
                e if e.is_validation() => 2,
                _ => 1,
            };
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            return if io.kind() == std::io::ErrorKind::NotFound { 2 } else { 1 };
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            eprintln!("\nRun 'hrtf-spca --help' or 'hrtf-spca <COMMAND> --help' for usage.");
            ExitCode::from(exit_code(&e))
        }
    }
}
