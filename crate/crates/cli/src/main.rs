use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use cvdmh::config::{CodeLengths, RunConfig};
use cvdmh::dataset::{generate_synthetic, save_dataset, SyntheticSpec};
use cvdmh::eval::{write_map_csv, write_scope_csv, MetricReport};
use cvdmh::intermediate::{save_rep, IntermediateRep};
use cvdmh::pipeline::{
    encode_cached, evaluate_method, fit_representation_cached, mine_cached, prepare_dataset, train_to_disk,
    write_views, Method, ModelDir, Representation,
};
use cvdmh::reproduce::run_all;
use cvdmh::search::pack;

#[derive(Parser)]
#[command(
    name = "cvdmh",
    version,
    about = "Canonical-view multi-modal hashing for landmark search"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine canonical views for every modality.
    Mine(ConfigArgs),
    /// Mine (cached) and write the sparse codes of the training split.
    Encode(ConfigArgs),
    /// Full offline learning: views, codes, hash models, database codes.
    Train(ConfigArgs),
    /// Rebuild packed database codes from a trained model.
    Index {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        c: Option<usize>,
    },
    /// Rank the database for one query image.
    Query(QueryArgs),
    /// Score methods on the query split; writes CSV and JSON reports.
    Eval(EvalArgs),
    /// Run the acceptance suite and print one line per criterion.
    Reproduce {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the report as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic multi-modal landmark dataset with its manifest.
    Synth(SynthArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "T")]
    t: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    /// Code lengths, comma separated.
    #[arg(long, value_delimiter = ',')]
    c: Option<Vec<usize>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    rho_lm: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    cutoff: Option<usize>,
    #[arg(long)]
    bypass_canonical_views: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(m) = &self.manifest {
            cfg.manifest = Some(m.clone());
            cfg.synthetic = None;
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    cfg.$field = v;
                }
            )*};
        }
        set!(output_dir, t, r, sigma, k, alpha, beta, gamma, rho_lm, tol, max_iters, cutoff);
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(c) = &self.c {
            cfg.c = CodeLengths::Many(c.clone());
        }
        cfg.bypass_canonical_views |= self.bypass_canonical_views;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    model: PathBuf,
    /// Replay this dataset image as the query.
    #[arg(long, conflicts_with = "features")]
    image: Option<usize>,
    /// JSON file holding one feature vector per modality.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    c: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Methods to score: cvdmh, random, oracle, pca_raw.
    #[arg(long, value_delimiter = ',', default_value = "cvdmh,random,pca_raw")]
    methods: Vec<String>,
    /// Reports go here; defaults to `<model>/eval`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    landmarks: usize,
    #[arg(long, default_value_t = 200)]
    per_landmark: usize,
    #[arg(long, value_delimiter = ',', default_value = "128,256")]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 0.5)]
    correlation: f64,
    #[arg(long, default_value_t = 8)]
    latent_dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn cmd_mine(cfg: &RunConfig) -> Result<()> {
    let seed = cfg.primary_seed();
    let ds = prepare_dataset(cfg, seed)?;
    let views = mine_cached(&ds, cfg, seed, &cfg.output_dir.join("cache"))?;
    let written = write_views(&cfg.output_dir, &views)?;
    for v in &views {
        println!(
            "modality {}: {} views, h = {:.6}",
            v.modality_id,
            v.len(),
            v.score_trace.last().unwrap_or(&0.0)
        );
    }
    println!("wrote {} files under {}", written.len(), cfg.output_dir.display());
    Ok(())
}

fn cmd_encode(cfg: &RunConfig) -> Result<()> {
    let seed = cfg.primary_seed();
    let ds = prepare_dataset(cfg, seed)?;
    let rep = fit_representation_cached(&ds, cfg, seed)?;
    let Representation::CanonicalViews { views, params } = &rep else {
        bail!(cvdmh::Error::invalid(
            "encode needs canonical views; drop bypass_canonical_views"
        ));
    };
    let (y_train, _) = encode_cached(&ds, &rep, cfg, seed, &cfg.output_dir.join("cache"))?;
    write_views(&cfg.output_dir, views)?;
    let path = cfg.output_dir.join("intermediate_train.cvdm");
    let out = IntermediateRep {
        offsets: (0..views.len()).map(|p| p * cfg.t).collect(),
        data: y_train,
    };
    save_rep(&out, params, &path)?;
    println!("{} × {} codes written to {}", out.nrows(), out.ncols(), path.display());
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let manifest = train_to_disk(cfg)?;
    for (c, s) in &manifest.solver {
        println!(
            "c={c}: {} iterations, converged {}, objective {:.6e} (init {:.6e})",
            s.iterations,
            s.converged,
            s.objective_trace.last().unwrap_or(&s.initial_objective),
            s.initial_objective
        );
    }
    println!("model written to {}", cfg.output_dir.display());
    Ok(())
}

fn cmd_index(model: &Path, c: Option<usize>) -> Result<()> {
    let md = ModelDir::open(model)?;
    let c = c.unwrap_or_else(|| md.default_length());
    let ds = md.dataset()?;
    let codes = md.reindex(&ds, c)?;
    println!("indexed {} codes of {} bits", codes.len(), codes.bits());
    Ok(())
}

fn cmd_query(args: &QueryArgs) -> Result<()> {
    let md = ModelDir::open(&args.model)?;
    let c = args.c.unwrap_or_else(|| md.default_length());
    let x_multi: Vec<Vec<f64>> = match (&args.image, &args.features) {
        (Some(id), _) => {
            let ds = md.dataset()?;
            if *id >= ds.len() {
                bail!(cvdmh::Error::invalid(format!(
                    "image {id} out of range (dataset has {})",
                    ds.len()
                )));
            }
            ds.image(*id)
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).map_err(cvdmh::Error::from)?
        }
        (None, None) => bail!(cvdmh::Error::invalid("give --image or --features")),
    };
    let res = md.query(&x_multi, c, args.k)?;
    let out = json!({ "c": c, "k": args.k, "truncated": res.truncated, "hits": res.hits });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let md = ModelDir::open(&args.model)?;
    let cfg = &md.manifest.config;
    let seed = md.manifest.seed;
    let ds = md.dataset()?;
    let methods = args
        .methods
        .iter()
        .map(|m| Method::parse(m))
        .collect::<cvdmh::Result<Vec<_>>>()?;
    let out = args.out.clone().unwrap_or_else(|| md.root.join("eval"));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let mut reports: Vec<MetricReport> = Vec::new();
    for &c in &md.manifest.code_lengths {
        for &method in &methods {
            let learned = || {
                let model = md.model(c)?;
                let yq = md.representation.encode_images(&ds, &ds.split.query)?;
                Ok((md.codes(c)?, pack(&model.hash_matrix(&yq)?)?))
            };
            let report = evaluate_method(method, &ds, c, seed, cfg, learned)?;
            println!(
                "{:>8} c={c:<4} mAP@{} = {:.4}",
                method.name(),
                report.cutoff,
                report.map
            );
            let path = out.join(format!("report_{}_c{c}.json", method.name()));
            fs::write(&path, serde_json::to_string_pretty(&report)?)
                .with_context(|| format!("writing {}", path.display()))?;
            reports.push(report);
        }
    }
    let map_rows: Vec<_> = reports
        .iter()
        .map(|r| (r.config.method.clone(), r.config.c, seed, r.map))
        .collect();
    let scope_rows: Vec<_> = reports
        .iter()
        .flat_map(|r| {
            r.precision_at
                .iter()
                .map(|(&s, &p)| (r.config.method.clone(), r.config.c, s, p))
        })
        .collect();
    let create = |name: &str| {
        let p = out.join(name);
        fs::File::create(&p).with_context(|| format!("creating {}", p.display()))
    };
    write_map_csv(create("map.csv")?, &map_rows)?;
    write_scope_csv(create("precision_scope.csv")?, &scope_rows)?;
    println!("reports written to {}", out.display());
    Ok(())
}

fn cmd_reproduce(seed: u64, out: Option<&Path>) -> Result<()> {
    let reports = run_all(seed);
    for r in &reports {
        println!("{r}");
        for note in &r.notes {
            println!("    {note}");
        }
    }
    let passed = reports.iter().filter(|r| r.passed).count();
    println!("{passed}/{} criteria passed", reports.len());
    if let Some(path) = out {
        fs::write(path, serde_json::to_string_pretty(&reports)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        num_landmarks: a.landmarks,
        images_per_landmark: a.per_landmark,
        dims: a.dims.clone(),
        noise: a.noise,
        correlation: a.correlation,
        seed: a.seed,
        latent_dim: a.latent_dim,
    };
    spec.validate()?;
    let ds = generate_synthetic(&spec)?;
    let manifest = save_dataset(&ds, &a.out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("CVDMH_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| cvdmh::Error::invalid(format!("CVDMH_THREADS must be a positive integer, got `{v}`")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool")?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Mine(a) => cmd_mine(&a.resolve()?),
        Command::Encode(a) => cmd_encode(&a.resolve()?),
        Command::Train(a) => cmd_train(&a.resolve()?),
        Command::Index { model, c } => cmd_index(&model, c),
        Command::Query(a) => cmd_query(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Reproduce { seed, out } => cmd_reproduce(seed, out.as_deref()),
        Command::Synth(a) => cmd_synth(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 3 for numerical breakdown anywhere in the chain, 2 for everything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    let numerical = e
        .chain()
        .filter_map(|c| c.downcast_ref::<cvdmh::Error>())
        .any(|c| c.is_numerical());
    if numerical {
        3
    } else {
        2
    }
}
