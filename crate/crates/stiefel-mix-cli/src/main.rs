//! Command-line front end: fitting Dirichlet-process Langevin mixtures on
//! Stiefel manifolds, sampling and evaluating kernels, running the Monte
//! Carlo diagnostics, and converting orbital-element tables.
//!
//! Tabular results go to stdout as CSV; file sets (fit summaries) go to the
//! chosen output directory. Every run takes an explicit seed.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use stiefel_mix::diagnostics::{
    self, fit_log_slope, kernel_approx_error_with_pool, lipschitz_ratio_concentration,
    lipschitz_ratio_location_dim, phi, DensityHandle,
};
use stiefel_mix::hypergeom::{self, Concentration, HypergeomConfig};
use stiefel_mix::io::{
    convert_orbit_file, emit_summaries, parse_frames_csv, render_heatmap_svg,
    synthetic_neo_standin, write_frames_csv, Dataset, RunConfig,
};
use stiefel_mix::langevin::{self, LangevinParams};
use stiefel_mix::manifold::{self, StiefelPoint};
use stiefel_mix::mixture::{self, StepSizes};

#[derive(Parser)]
#[command(
    name = "stiefel-mix",
    version,
    about = "Dirichlet process mixtures of matrix Langevin distributions on Stiefel manifolds"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the mixture sampler on a frames CSV and emit posterior summaries
    Fit(FitArgs),
    /// Draw samples from one matrix Langevin distribution
    Sample(SampleArgs),
    /// Evaluate the matrix Langevin log-density on a frames CSV
    Density(DensityArgs),
    /// Monte Carlo diagnostics (CSV tables on stdout)
    Diagnose(DiagnoseArgs),
    /// Digest an existing fit output directory
    Summarize(SummarizeArgs),
    /// Convert an orbital-element CSV (degrees) into a frames CSV
    ConvertOrbits(ConvertArgs),
    /// Evaluate the matrix-argument hypergeometric normalizer
    Hypergeom(HypergeomArgs),
    /// Generate the synthetic orbit-shaped benchmark dataset
    Synth(SynthArgs),
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Fit(a) => fit(a),
        Cmd::Sample(a) => sample(a),
        Cmd::Density(a) => density(a),
        Cmd::Diagnose(a) => diagnose(a),
        Cmd::Summarize(a) => summarize(a),
        Cmd::ConvertOrbits(a) => convert_orbits(a),
        Cmd::Hypergeom(a) => hypergeom_cmd(a),
        Cmd::Synth(a) => synth(a),
    }
}

/// "10,5" -> Concentration of length 2.
fn parse_kappa(s: &str) -> Result<Concentration> {
    let vals = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("bad concentration entry {t:?}"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Concentration::new(vals)?)
}

/// "5,5;20,20" -> a grid of concentrations (semicolon-separated).
fn parse_kappa_grid(s: &str) -> Result<Vec<Concentration>> {
    s.split(';').map(parse_kappa).collect()
}

/// CSV-safe display of a concentration vector: entries joined by spaces.
fn fmt_kappa(k: &Concentration) -> String {
    k.as_slice()
        .iter()
        .map(|v| format!("{v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn load_location(file: &Path, row: usize) -> Result<StiefelPoint> {
    let data = parse_frames_csv(file)?;
    data.frames
        .get(row)
        .cloned()
        .with_context(|| format!("{} has no row {row}", file.display()))
}

#[derive(Args)]
struct FitArgs {
    /// Frames CSV (header `d,p,id,x11,...`)
    #[arg(long)]
    data: PathBuf,
    /// Run configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config's out_dir
    #[arg(long)]
    out: Option<PathBuf>,
}

fn fit(a: FitArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let seed = cfg.seed_with_override(a.seed)?;
    let out = a
        .out
        .or_else(|| cfg.out_dir.clone().map(PathBuf::from))
        .context("no output directory: pass --out or set out_dir in the config")?;
    let data = parse_frames_csv(&a.data)?;
    let prior = cfg.prior()?;
    let hcfg = HypergeomConfig::default();
    let chain = mixture::run_chain(
        &data.frames,
        &prior,
        cfg.iters,
        cfg.burn_in,
        cfg.thin,
        cfg.m_aux,
        StepSizes { location: cfg.step_g, concentration: cfg.step_kappa },
        seed,
        &hcfg,
    )?;
    emit_summaries(&chain, &data, &out, &hcfg)?;

    // provenance: the exact configuration the run used
    let mut echoed = cfg;
    echoed.seed = Some(seed);
    echoed.out_dir = Some(out.display().to_string());
    fs::write(out.join("config_used.toml"), echoed.to_toml_string())?;

    let acc = &chain.acceptance;
    fs::write(
        out.join("acceptance.csv"),
        format!(
            "move,attempts,accepts,rate\nlocation,{},{},{}\nconcentration,{},{},{}\n",
            acc.location_attempts,
            acc.location_accepts,
            acc.location_rate(),
            acc.concentration_attempts,
            acc.concentration_accepts,
            acc.concentration_rate(),
        ),
    )?;
    render_heatmap_svg(&mixture::coclustering_matrix(&chain), &out.join("coclustering.svg"))?;
    println!(
        "fit complete: {} retained states over {} observations -> {}",
        chain.retained.len(),
        chain.n_obs,
        out.display()
    );
    Ok(())
}

#[derive(Args)]
struct SampleArgs {
    /// Ambient dimension
    #[arg(long, default_value_t = 3)]
    d: usize,
    /// Concentrations, comma-separated; the count sets p
    #[arg(long)]
    kappa: String,
    /// Number of draws
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    /// Output frames CSV
    #[arg(long)]
    out: PathBuf,
    /// Location frame source (defaults to a Haar draw from the seed)
    #[arg(long)]
    location_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    location_row: usize,
    /// Use this many Gibbs sweeps per draw instead of exact rejection
    /// (needed once the concentration sum exceeds the rejection budget)
    #[arg(long, default_value_t = 0)]
    gibbs_sweeps: usize,
}

fn sample(a: SampleArgs) -> Result<()> {
    let kappa = parse_kappa(&a.kappa)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let location = match &a.location_file {
        Some(f) => load_location(f, a.location_row)?,
        None => manifold::sample_haar(a.d, kappa.p(), &mut rng)?,
    };
    let params = LangevinParams::new(location, kappa)?;
    let mut frames = Vec::with_capacity(a.n);
    let mut proposals = 0u64;
    for _ in 0..a.n {
        if a.gibbs_sweeps > 0 {
            frames.push(langevin::sample_gibbs(&params, a.gibbs_sweeps, &mut rng)?);
        } else {
            let (x, tries) = langevin::sample(&params, &mut rng).context(
                "exact rejection infeasible at this concentration; pass --gibbs-sweeps",
            )?;
            proposals += tries;
            frames.push(x);
        }
    }
    let ids = (0..frames.len()).map(|i| format!("sample-{:04}", i + 1)).collect();
    write_frames_csv(&Dataset::new(frames, ids)?, &a.out)?;
    if a.gibbs_sweeps == 0 && a.n > 0 {
        println!(
            "wrote {} draws to {} (acceptance rate {:.4})",
            a.n,
            a.out.display(),
            a.n as f64 / proposals as f64
        );
    } else {
        println!("wrote {} draws to {}", a.n, a.out.display());
    }
    Ok(())
}

#[derive(Args)]
struct DensityArgs {
    /// Frames CSV to evaluate
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    kappa: String,
    /// Location frame source
    #[arg(long)]
    location_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    location_row: usize,
    /// Haar-draw the location from this seed when no file is given
    #[arg(long)]
    location_seed: Option<u64>,
}

fn density(a: DensityArgs) -> Result<()> {
    let kappa = parse_kappa(&a.kappa)?;
    let data = parse_frames_csv(&a.data)?;
    let location = match (&a.location_file, a.location_seed) {
        (Some(f), _) => load_location(f, a.location_row)?,
        (None, Some(s)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            manifold::sample_haar(data.d(), kappa.p(), &mut rng)?
        }
        (None, None) => bail!("pass --location-file or --location-seed"),
    };
    let params = LangevinParams::new(location, kappa)?;
    let cfg = HypergeomConfig::default();
    println!("id,log_density");
    for (frame, id) in data.frames.iter().zip(&data.ids) {
        println!("{id},{}", langevin::log_density(frame, &params, &cfg)?);
    }
    Ok(())
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(subcommand)]
    which: DiagnoseCmd,
}

#[derive(Subcommand)]
enum DiagnoseCmd {
    /// Hellinger distance of the uniform density to Langevin kernels
    Hellinger(DivergenceArgs),
    /// KL divergence of the uniform density from Langevin kernels
    Kl(DivergenceArgs),
    /// Kernel-smoothing approximation error over a concentration grid
    Approx(ApproxArgs),
    /// Empirical Lipschitz ratios and their log-log slope
    Lipschitz(LipschitzArgs),
    /// Prior tail-mass condition check
    Tail(TailArgs),
}

#[derive(Args)]
struct DivergenceArgs {
    #[arg(long, default_value_t = 3)]
    d: usize,
    /// Concentration grid, e.g. "5,5;10,10"
    #[arg(long)]
    kappa: String,
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct ApproxArgs {
    #[arg(long, default_value_t = 3)]
    d: usize,
    /// Concentration of the target Langevin density
    #[arg(long)]
    kappa0: String,
    /// Smoothing-concentration grid, e.g. "5,5;20,20;80,80"
    #[arg(long)]
    grid: String,
    #[arg(long, default_value_t = 1_000)]
    n_outer: usize,
    #[arg(long, default_value_t = 20_000)]
    n_inner: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct LipschitzArgs {
    /// "location" or "concentration"
    #[arg(long)]
    mode: String,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 2)]
    p: usize,
    /// location mode: concentration grid "2,2;4,4"; concentration mode:
    /// phi bounds "5;10;20;40"
    #[arg(long)]
    grid: String,
    #[arg(long, default_value_t = 2_000)]
    trials: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct TailArgs {
    /// Run config supplying [kappa_prior]
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 2)]
    p: usize,
    #[arg(long)]
    a: f64,
    #[arg(long)]
    beta: f64,
    /// Sample sizes, comma-separated
    #[arg(long)]
    n: String,
    #[arg(long, default_value_t = 100_000)]
    draws: usize,
    #[arg(long)]
    seed: u64,
}

fn diagnose(a: DiagnoseArgs) -> Result<()> {
    let cfg = HypergeomConfig::default();
    match a.which {
        DiagnoseCmd::Hellinger(d) | DiagnoseCmd::Kl(d) if d.n < 2 => {
            bail!("need at least 2 samples")
        }
        DiagnoseCmd::Hellinger(args) => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            println!("kappa,estimate,std_error,clamped");
            for k in parse_kappa_grid(&args.kappa)? {
                let u = DensityHandle::uniform(args.d, k.p());
                let g = manifold::sample_haar(args.d, k.p(), &mut rng)?;
                let f = DensityHandle::langevin(&LangevinParams::new(g, k.clone())?, &cfg)?;
                let est = diagnostics::hellinger_mc(&u, &f, args.n, &mut rng)?;
                println!("{},{},{},{}", fmt_kappa(&k), est.estimate, est.std_error, est.clamped);
            }
        }
        DiagnoseCmd::Kl(args) => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            println!("kappa,estimate,std_error");
            for k in parse_kappa_grid(&args.kappa)? {
                let u = DensityHandle::uniform(args.d, k.p());
                let g = manifold::sample_haar(args.d, k.p(), &mut rng)?;
                let f = DensityHandle::langevin(&LangevinParams::new(g, k.clone())?, &cfg)?;
                let est = diagnostics::kl_mc(&u, &f, args.n, &mut rng)?;
                println!("{},{},{}", fmt_kappa(&k), est.estimate, est.std_error);
            }
        }
        DiagnoseCmd::Approx(args) => {
            let kappa0 = parse_kappa(&args.kappa0)?;
            let p = kappa0.p();
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            let g0 = manifold::sample_haar(args.d, p, &mut rng)?;
            let f = DensityHandle::langevin(&LangevinParams::new(g0.clone(), kappa0)?, &cfg)?;
            // shared probes (Haar plus the target's mode region) and pool:
            // common random numbers across the grid
            let mut probes: Vec<StiefelPoint> = (0..args.n_outer)
                .map(|_| manifold::sample_haar(args.d, p, &mut rng))
                .collect::<Result<_, _>>()?;
            probes.push(g0.clone());
            for step in [0.02, 0.05, 0.1] {
                probes.push(manifold::perturb(&g0, step, &mut rng)?);
            }
            let pool: Vec<StiefelPoint> = (0..args.n_inner)
                .map(|_| manifold::sample_haar(args.d, p, &mut rng))
                .collect::<Result<_, _>>()?;
            println!("kappa,max_error");
            for k in parse_kappa_grid(&args.grid)? {
                let err = kernel_approx_error_with_pool(&f, &k, &probes, &pool, &cfg)?;
                println!("{},{err}", fmt_kappa(&k));
            }
        }
        DiagnoseCmd::Lipschitz(args) => match args.mode.as_str() {
            "location" => {
                let grid = parse_kappa_grid(&args.grid)?;
                let mut phis = Vec::new();
                let mut ratios = Vec::new();
                println!("phi,max_ratio");
                for (i, k) in grid.iter().enumerate() {
                    let mut rng = ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(i as u64));
                    let worst =
                        lipschitz_ratio_location_dim(k, args.d, args.trials, &mut rng, &cfg)?;
                    println!("{},{worst}", phi(k));
                    phis.push(phi(k));
                    ratios.push(worst);
                }
                if phis.len() >= 2 {
                    println!("slope,{}", fit_log_slope(&phis, &ratios)?);
                }
            }
            "concentration" => {
                let bounds: Vec<f64> = args
                    .grid
                    .split(';')
                    .map(|t| t.trim().parse::<f64>().map_err(|_| anyhow!("bad bound {t:?}")))
                    .collect::<Result<_>>()?;
                let mut ratios = Vec::new();
                println!("phi_bound,max_ratio");
                for (i, b) in bounds.iter().enumerate() {
                    let mut rng = ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(i as u64));
                    let worst = lipschitz_ratio_concentration(
                        *b, args.d, args.p, args.trials, &mut rng, &cfg,
                    )?;
                    println!("{b},{worst}");
                    ratios.push(worst);
                }
                if bounds.len() >= 2 {
                    println!("slope,{}", fit_log_slope(&bounds, &ratios)?);
                }
            }
            other => bail!("unknown Lipschitz mode {other:?} (location|concentration)"),
        },
        DiagnoseCmd::Tail(args) => {
            let prior = RunConfig::load(&args.config)?.kappa_prior;
            let ns: Vec<u64> = args
                .n
                .split(',')
                .map(|t| t.trim().parse::<u64>().map_err(|_| anyhow!("bad n {t:?}")))
                .collect::<Result<_>>()?;
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            let checks = diagnostics::tail_condition_check(
                &prior, args.d, args.p, args.a, args.beta, &ns, args.draws, &mut rng,
            )?;
            println!("n,threshold,mass,bound,pass");
            for c in checks {
                println!("{},{},{},{},{}", c.n, c.threshold, c.mass, c.bound, c.pass);
            }
        }
    }
    Ok(())
}

#[derive(Args)]
struct SummarizeArgs {
    /// A directory previously produced by `fit`
    #[arg(long)]
    dir: PathBuf,
    /// Also render coclustering.svg from coclustering.csv
    #[arg(long, default_value_t = false)]
    svg: bool,
}

fn summarize(a: SummarizeArgs) -> Result<()> {
    let summary = fs::read_to_string(a.dir.join("summary.txt"))
        .with_context(|| format!("{} is not a fit output directory", a.dir.display()))?;
    print!("{summary}");
    let counts = fs::read_to_string(a.dir.join("cluster_counts.csv"))?;
    println!("cluster-count histogram:");
    for line in counts.lines().skip(1) {
        let mut parts = line.split(',');
        let (k, c) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
        println!("  {k} clusters: {c} states");
    }
    if a.svg {
        let text = fs::read_to_string(a.dir.join("coclustering.csv"))?;
        let rows: Vec<Vec<u32>> = text
            .lines()
            .skip(1)
            .map(|l| {
                l.split(',')
                    .skip(1)
                    .map(|v| v.parse::<u32>().map_err(|_| anyhow!("bad count {v:?}")))
                    .collect::<Result<Vec<u32>>>()
            })
            .collect::<Result<_>>()?;
        let n = rows.len();
        let flat: Vec<u32> = rows.into_iter().flatten().collect();
        if flat.len() != n * n {
            bail!("coclustering.csv is not square");
        }
        let m = DMatrix::from_row_slice(n, n, &flat);
        render_heatmap_svg(&m, &a.dir.join("coclustering.svg"))?;
        println!("wrote {}", a.dir.join("coclustering.svg").display());
    }
    Ok(())
}

#[derive(Args)]
struct ConvertArgs {
    /// CSV with header `id,i_deg,node_deg,peri_deg`
    #[arg(long)]
    input: PathBuf,
    /// Output frames CSV
    #[arg(long)]
    output: PathBuf,
}

fn convert_orbits(a: ConvertArgs) -> Result<()> {
    let n = convert_orbit_file(&a.input, &a.output)?;
    println!("converted {n} orbits -> {}", a.output.display());
    Ok(())
}

#[derive(Args)]
struct HypergeomArgs {
    #[arg(long, default_value_t = 3)]
    d: usize,
    /// Concentrations, comma-separated
    #[arg(long)]
    kappa: String,
    /// Override the series truncation order
    #[arg(long)]
    order: Option<usize>,
    /// Cross-check against this many Monte Carlo samples
    #[arg(long)]
    mc_check: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn hypergeom_cmd(a: HypergeomArgs) -> Result<()> {
    let kappa = parse_kappa(&a.kappa)?;
    let mut cfg = HypergeomConfig::default();
    if let Some(order) = a.order {
        cfg.truncation_order = order;
    }
    let log_value = hypergeom::log_0f1(a.d as f64 / 2.0, &kappa, &cfg)?;
    println!("log_0f1,{log_value}");
    if let Some(n) = a.mc_check {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        let g = manifold::sample_haar(a.d, kappa.p(), &mut rng)?;
        let (z, se) = hypergeom::mc_normalizer(a.d, kappa.p(), &kappa, &g, n, &mut rng)?;
        let series = log_value.exp();
        println!("series_linear,{series}");
        println!("mc_estimate,{z},{se}");
        println!("within_3se,{}", (series - z).abs() <= 3.0 * se);
    }
    Ok(())
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    seed: u64,
    /// Output frames CSV
    #[arg(long)]
    out: PathBuf,
    /// Optionally also write the true component labels
    #[arg(long)]
    labels: Option<PathBuf>,
}

fn synth(a: SynthArgs) -> Result<()> {
    let (data, labels) = synthetic_neo_standin(a.seed)?;
    write_frames_csv(&data, &a.out)?;
    if let Some(path) = &a.labels {
        let mut out = String::from("id,label\n");
        for (id, label) in data.ids.iter().zip(&labels) {
            writeln!(out, "{id},{label}").unwrap();
        }
        fs::write(path, out)?;
    }
    println!("wrote {} frames -> {}", data.len(), a.out.display());
    Ok(())
}
