use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use spotlab_cli::config::{Config, DomainSection, Stage};
use spotlab_cli::io::read_field;
use spotlab_cli::pipeline::{default_cache_dir, write_profile_csv, Manifest, Pipeline};
use spotlab_cli::scenario;
use spotlab_core::greens::{GreenCache, GreenProvider};
use spotlab_core::liouville::{pohozaev_residual, solve_radial, RadialOptions};
use spotlab_core::model::{build_b_matrix, validate_assumptions};
use spotlab_core::pdesim::compare;
use spotlab_core::placement::{find_critical_points, random_seeds, PlacementOptions};
use spotlab_core::sigma::{scan_arc, sign_brackets, solve_sigma, write_scan_csv, SigmaOptions};
use spotlab_core::{BMatrix, Domain2D};

#[derive(Parser)]
#[command(name = "spotlab", version, about = "Multi-spot steady states of two-species Keller-Segel systems")]
struct Cli {
    /// Print stage timings and progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Source {
    /// TOML configuration file.
    #[arg(long, conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Built-in scenario (fig1, fig2, fig3, symmetric-check).
    #[arg(long)]
    scenario: Option<String>,
}

impl Source {
    fn load(&self) -> Result<Config> {
        match (&self.config, &self.scenario) {
            (Some(p), _) => Config::load(p),
            (None, Some(name)) => scenario::lookup(name),
            (None, None) => Ok(scenario::fig1()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check the structural hypotheses and print the interaction matrix.
    Validate {
        #[command(flatten)]
        source: Source,
    },
    /// Integrate the radial Liouville system from given center values.
    Liouville {
        /// Matrix entries b11,b12,b22.
        #[arg(long, value_delimiter = ',', required = true)]
        b: Vec<f64>,
        /// Center values alpha1,alpha2.
        #[arg(long, value_delimiter = ',', default_value = "0,0")]
        alpha: Vec<f64>,
        /// Profile CSV output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the mass system for the configured model.
    Sigma {
        #[command(flatten)]
        source: Source,
        /// Also sample the balance equation at this many points of the arc.
        #[arg(long)]
        scan: Option<usize>,
        /// Scan CSV output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regular part of the Green's function for one source point.
    Green {
        /// `square:L`, `rect:x0,x1,y0,y1` or `disk:cx,cy,r`.
        #[arg(long, default_value = "square:2")]
        domain: String,
        /// Cells per side.
        #[arg(long, default_value_t = 128)]
        res: usize,
        /// Source point x,y.
        #[arg(long, value_delimiter = ',', required = true)]
        xi: Vec<f64>,
        /// Table CSV output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Critical points of the interaction energy.
    Place {
        #[command(flatten)]
        source: Source,
        /// Number of spots (overrides the config).
        #[arg(long)]
        m: Option<usize>,
        /// Number of interior spots (overrides the config).
        #[arg(long)]
        o: Option<usize>,
        /// Number of random seeds (overrides the config).
        #[arg(long)]
        seeds: Option<usize>,
        /// Random seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Assemble the multi-spot ansatz (runs the pipeline up to `ansatz`).
    Ansatz {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Integrate the time-dependent system to steady state.
    Simulate {
        #[command(flatten)]
        source: Source,
        /// Write a VTK snapshot every this many steps.
        #[arg(long)]
        snapshot_every: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare the cell densities of two field CSV files.
    Compare {
        /// Simulated field.
        #[arg(long)]
        sim: PathBuf,
        /// Reference (ansatz) field.
        #[arg(long)]
        ansatz: PathBuf,
    },
    /// Run a scenario pipeline and check its declared outcomes.
    Run {
        /// Scenario name or path to a TOML configuration.
        scenario: String,
        /// Stop after this stage.
        #[arg(long)]
        stage: Option<Stage>,
        /// Output directory (default `runs/<name>`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Cache directory (default `$SPOTLAB_CACHE` or `.spotlab-cache`).
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Print the resolved configuration as TOML and exit.
        #[arg(long)]
        print_config: bool,
    },
}

fn parse_domain(spec: &str, res: usize) -> Result<Domain2D> {
    let (kind, rest) = spec.split_once(':').context("domain must look like kind:values")?;
    let vals: Vec<f64> = rest.split(',').map(|s| s.trim().parse()).collect::<std::result::Result<_, _>>()?;
    let section = match (kind, vals.as_slice()) {
        ("square", [l]) => DomainSection::Rectangle { x: [0.0, *l], y: [0.0, *l], nx: res, ny: res },
        ("rect", [x0, x1, y0, y1]) => DomainSection::Rectangle { x: [*x0, *x1], y: [*y0, *y1], nx: res, ny: res },
        ("disk", [cx, cy, r]) => DomainSection::Disk { center: [*cx, *cy], radius: *r, n: res },
        _ => bail!("cannot parse domain {spec:?}"),
    };
    section.domain()
}

fn expect_len(flag: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        bail!("{flag} takes {n} comma-separated values, got {}", v.len());
    }
    Ok(())
}

fn write_to(path: &Option<PathBuf>, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    if let Some(p) = path {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut w = BufWriter::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?);
        body(&mut w)?;
        w.flush()?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn print_manifest(m: &Manifest, out: &Path) {
    println!("scenario {} -> {}", m.scenario, out.display());
    println!("stages: {}", m.stages.join(" -> "));
    for c in &m.checks {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("{} files listed in manifest.toml", m.files.len());
}

fn run_pipeline(cfg: Config, out: PathBuf, cache: Option<PathBuf>, stop: Option<Stage>, verbose: bool) -> Result<bool> {
    let mut p = Pipeline::new(cfg, out.clone(), cache.unwrap_or_else(default_cache_dir));
    p.verbose = verbose;
    let m = p.run(stop)?;
    print_manifest(&m, &out);
    Ok(m.all_passed())
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Validate { source } => {
            let cfg = source.load()?;
            let params = cfg.params();
            let report = validate_assumptions(&params);
            for (name, c) in [("H1", &report.h1), ("H2", &report.h2), ("H3", &report.h3)] {
                println!("{name} {}: {}", if c.passed { "pass" } else { "FAIL" }, c.detail);
            }
            let b = build_b_matrix(&params, true)?;
            println!("epsilon = {:.6}, gamma = {:.6}, d = {:.6}", params.epsilon(), params.gamma(), b.d);
            println!("B = {:?} (positive definite: {})", b.rows(), b.is_positive_definite());
            Ok(report.all_pass() || cfg.model.allow_override)
        }
        Command::Liouville { b, alpha, out } => {
            expect_len("--b", &b, 3)?;
            expect_len("--alpha", &alpha, 2)?;
            let bm = BMatrix::from_entries(b[0], b[1], b[2]);
            let p = solve_radial(&bm, [alpha[0], alpha[1]], &RadialOptions::default())?;
            println!("sigma = [{:.10}, {:.10}]", p.sigma[0], p.sigma[1]);
            println!("m = [{:.10}, {:.10}]", p.m[0], p.m[1]);
            println!("mu_tilde = [{:.10}, {:.10}]", p.mu_tilde[0], p.mu_tilde[1]);
            println!("pohozaev residual = {:.3e}", pohozaev_residual(&p));
            write_to(&out, |w| write_profile_csv(&p, w))?;
            Ok(true)
        }
        Command::Sigma { source, scan, out } => {
            let cfg = source.load()?;
            let params = cfg.params();
            let b = build_b_matrix(&params, cfg.model.allow_override)?;
            let sol = solve_sigma(&params, &b, &SigmaOptions::default())?;
            println!("sigma = [{:.10}, {:.10}]", sol.sigma1, sol.sigma2);
            println!("m = [{:.10}, {:.10}]", sol.profile.m[0], sol.profile.m[1]);
            println!("iterations = {}, residuals = {:?}", sol.iterations, sol.residuals);
            if let Some(n) = scan {
                let samples = scan_arc(&params, &b, n, &SigmaOptions::default());
                for (lo, hi) in sign_brackets(&samples) {
                    println!("sign change of the balance for q in [{lo:.6}, {hi:.6}]");
                }
                write_to(&out, |w| write_scan_csv(&samples, w))?;
            }
            Ok(true)
        }
        Command::Green { domain, res, xi, out } => {
            expect_len("--xi", &xi, 2)?;
            let d = parse_domain(&domain, res)?;
            let cache = GreenCache::new(d);
            let t = cache.table([xi[0], xi[1]])?;
            println!("theta = {:.6}", t.theta);
            println!("H(xi, xi) = {:.10}", t.self_interaction());
            println!("min G = {:.6e}", t.min_green());
            println!("integral of G = {:.10}", t.integral());
            write_to(&out, |w| t.write_csv(w))?;
            Ok(true)
        }
        Command::Place { source, m, o, seeds, seed } => {
            let cfg = source.load()?;
            let m = m.unwrap_or(cfg.spots.m);
            let o = o.unwrap_or(cfg.spots.o.min(m));
            let count = seeds.unwrap_or(cfg.spots.seeds).max(1);
            let domain = cfg.domain.domain()?;
            let cache = GreenCache::new(domain);
            let seeds = random_seeds(&domain, m, o, count, seed.unwrap_or(cfg.seed));
            let found = find_critical_points(&cache, m, o, &seeds, &PlacementOptions::default())?;
            println!("energy,morse_index,points");
            for cp in &found {
                let pts: Vec<String> = cp.config.points.iter().map(|p| format!("({:.6}, {:.6})", p[0], p[1])).collect();
                println!("{:.10},{},{}", cp.energy, cp.index(), pts.join(" "));
            }
            Ok(true)
        }
        Command::Ansatz { source, out } => {
            let cfg = source.load()?;
            run_pipeline(cfg, out, None, Some(Stage::Ansatz), cli.verbose)
        }
        Command::Simulate { source, snapshot_every, out } => {
            let mut cfg = source.load()?;
            if let Some(n) = snapshot_every {
                cfg.simulation.snapshot_every = n;
            }
            cfg.pipeline.stages = vec![Stage::Model, Stage::Simulate];
            run_pipeline(cfg, out, None, None, cli.verbose)
        }
        Command::Compare { sim, ansatz } => {
            let (a, b) = (read_field(&sim)?, read_field(&ansatz)?);
            let c = compare(&a, &b)?;
            println!("relative L2   = {:?}", c.rel_l2);
            println!("relative max  = {:?}", c.rel_max);
            println!("max offset    = {:?}", c.location_offset);
            println!("height ratio  = {:?}", c.amplitude_ratio);
            println!("excess masses = [{:.6}, {:.6}] vs [{:.6}, {:.6}]", a.excess_mass(0), a.excess_mass(1), b.excess_mass(0), b.excess_mass(1));
            Ok(true)
        }
        Command::Run { scenario: name, stage, out, cache, print_config } => {
            let cfg = if Path::new(&name).is_file() { Config::load(Path::new(&name))? } else { scenario::lookup(&name)? };
            if print_config {
                print!("{}", cfg.to_toml()?);
                return Ok(true);
            }
            let out = out.unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
            run_pipeline(cfg, out, cache, stage, cli.verbose)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
