use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use leadsel::graph::{
    gen_geometric, gen_link_failures, gen_waypoint, GeometricParams, WaypointParams,
};
use leadsel::walk::k_subsets;
use leadsel::{
    build_laplacian, check_supermodular, derive_stream, error_bound, expm_neg, select_baseline,
    select_k_leaders, select_minimal_leaders, BaselinePolicy, ErrorEvaluator, HorizonRule,
    SelectionResult, Topology, WalkChain,
};

use leadsel_cli::config::{validate_config, ExperimentConfig, Scale};
use leadsel_cli::experiment::run_experiment;
use leadsel_cli::summary::summarize_file;

/// Leader selection for leader-follower consensus networks.
#[derive(Parser)]
#[command(name = "leadsel", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GenKind {
    /// Static random geometric topology (JSON Topology).
    Geometric,
    /// Epoch sequence with independent link failures (JSON EpochSequence).
    LinkFailure,
    /// Epoch sequence under waypoint mobility (JSON EpochSequence).
    Waypoint,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a topology or epoch sequence and write it as JSON.
    Gen {
        kind: GenKind,
        /// Experiment-config JSON supplying the generator parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One-shot leader selection on a topology file; prints a JSON result.
    Select {
        /// Topology JSON file.
        topology: PathBuf,
        /// supermodular | random | max_degree | average_degree
        #[arg(long, default_value = "supermodular")]
        policy: String,
        /// Leader budget; selects k leaders greedily.
        #[arg(long)]
        k: Option<usize>,
        /// Error budget; grows the set until the bound reaches it
        /// (supermodular policy only, overrides --k).
        #[arg(long)]
        alpha: Option<f64>,
        /// Norm order of the bound.
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Fixed horizon; when omitted the horizon is the smallest time at
        /// which a random probe set's bound falls to 1.
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment sweep from a config, writing one CSV row per cell.
    Run {
        /// Experiment configuration (JSON); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output CSV; overrides the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// desk caps size/trials for quick runs; paper runs the config as-is.
        #[arg(long, value_enum, default_value_t = Scale::Desk)]
        scale: Scale,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Aggregate a results CSV into per-(policy, sweep) means.
    Summarize {
        results: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the random-walk oracle battery and report pass/fail per check.
    Oracle {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Instance size for the checks (at most 8).
        #[arg(long, default_value_t = 6)]
        n: usize,
    },
}

fn thread_count() -> usize {
    std::env::var("LEADSEL_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or(1)
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let raw = match path {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    validate_config(&raw).map_err(|e| anyhow::anyhow!(e))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_gen(kind: GenKind, config: Option<&Path>, seed: u64, out: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let params = GeometricParams {
        n: cfg.topology.n,
        area_side: cfg.topology.area_side,
        comm_range: cfg.topology.comm_range,
        weight_range: (cfg.topology.weight_min, cfg.topology.weight_max),
        symmetric_weights: cfg.topology.symmetric_weights,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let json = match kind {
        GenKind::Geometric => {
            let topo = gen_geometric::<f64>(&params, &mut rng)?;
            serde_json::to_string_pretty(&topo)?
        }
        GenKind::LinkFailure => {
            let base = gen_geometric::<f64>(&params, &mut rng)?;
            let fail = cfg.dynamics.fail_probs.first().copied().unwrap_or(0.1);
            let seq = gen_link_failures(&base, fail, cfg.dynamics.epochs, cfg.dynamics.dwell, &mut rng)?;
            serde_json::to_string_pretty(&seq)?
        }
        GenKind::Waypoint => {
            let wp = WaypointParams {
                geometric: params,
                ref_speed: cfg.dynamics.ref_speed,
                disturbance_range: (cfg.dynamics.disturbance_min, cfg.dynamics.disturbance_max),
                epochs: cfg.dynamics.epochs,
                dwell: cfg.dynamics.dwell,
            };
            let seq = gen_waypoint::<f64>(&wp, &mut rng)?;
            serde_json::to_string_pretty(&seq)?
        }
    };
    emit(out, &format!("{json}\n"))
}

#[allow(clippy::too_many_arguments)]
fn cmd_select(
    topology: &Path,
    policy: &str,
    k: Option<usize>,
    alpha: Option<f64>,
    p: f64,
    t: Option<f64>,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let text = fs::read_to_string(topology)
        .with_context(|| format!("reading topology at {}", topology.display()))?;
    let topo: Topology<f64> = serde_json::from_str(&text).context("parsing topology JSON")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rule = match t {
        Some(t) => HorizonRule::Fixed(t),
        None => HorizonRule::BoundTarget {
            beta: 1.0,
            probe_size: k.unwrap_or(1),
        },
    };
    let horizon = leadsel::resolve_horizon(&topo, &rule, p, &mut rng)?;
    let ev = ErrorEvaluator::static_network(topo.clone(), horizon, p)?;
    let result: SelectionResult<f64> = match (policy, alpha) {
        ("supermodular", Some(alpha)) => select_minimal_leaders(&ev, alpha)?,
        ("supermodular", None) => {
            let k = k.context("--k is required without --alpha")?;
            select_k_leaders(&ev, k)?
        }
        (other, Some(_)) => bail!("--alpha is only supported with the supermodular policy, not `{other}`"),
        (other, None) => {
            let k = k.context("--k is required without --alpha")?;
            let base = match other {
                "random" => BaselinePolicy::Random,
                "max_degree" => BaselinePolicy::MaxDegree,
                "average_degree" => BaselinePolicy::AverageDegree,
                _ => bail!("unknown policy `{other}`"),
            };
            select_baseline(&topo, &ev, k, base, &mut rng)?
        }
    };
    let mut doc = serde_json::to_value(&result)?;
    doc["horizon"] = serde_json::json!(horizon);
    doc["p"] = serde_json::json!(p);
    emit(out, &format!("{}\n", serde_json::to_string_pretty(&doc)?))
}

fn cmd_run(config: Option<&Path>, out: Option<&Path>, scale: Scale, seed: Option<u64>) -> Result<()> {
    let mut cfg = load_config(config)?;
    cfg.apply_scale(scale);
    if let Some(seed) = seed {
        cfg.master_seed = seed;
    }
    let out_path = out
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from(&cfg.output));
    let stats = run_experiment(&cfg, &out_path, thread_count())?;
    eprintln!(
        "wrote {} rows ({} already present) to {}",
        stats.written,
        stats.skipped,
        out_path.display()
    );
    Ok(())
}

fn cmd_oracle(seed: u64, n: usize) -> Result<()> {
    if !(2..=8).contains(&n) {
        bail!("--n must lie in 2..=8");
    }
    let mut failures = 0usize;
    let mut check = |name: &str, pass: bool| {
        println!("{}: {}", name, if pass { "PASS" } else { "FAIL" });
        if !pass {
            failures += 1;
        }
    };

    let params = GeometricParams {
        n: 10.max(n),
        area_side: 100.0,
        comm_range: 60.0,
        weight_range: (0.2, 2.0),
        symmetric_weights: false,
    };

    // Transition matrices are stochastic with identity leader rows.
    let mut ok = true;
    for i in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_stream(seed, i));
        let topo = gen_geometric::<f64>(&params, &mut rng)?;
        let leaders = vec![i as usize % topo.n()];
        let l = build_laplacian(&topo, &leaders)?;
        let p = expm_neg(&l, 0.5)?;
        for r in 0..topo.n() {
            let sum: f64 = p.row(r).sum();
            ok &= (sum - 1.0).abs() < 1e-9 && p.row(r).iter().all(|&v| v >= 0.0);
        }
        ok &= p[[leaders[0], leaders[0]]] == 1.0;
    }
    check("stochastic-transition", ok);

    // Chain powers reproduce the exponential.
    let mut ok = true;
    for i in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_stream(seed, 100 + i));
        let topo = gen_geometric::<f64>(&params, &mut rng)?;
        let leaders = vec![0, topo.n() / 2];
        let t = 0.8;
        let l = build_laplacian(&topo, &leaders)?;
        let p_t = expm_neg(&l, t)?;
        for tau in [8usize, 64] {
            let chain = WalkChain::from_topology(&topo, &leaders, t / tau as f64)?;
            let hits = chain.hit_probabilities(tau);
            ok &= hits
                .indexed_iter()
                .all(|((r, c), &h)| (h - p_t[[r, c]]).abs() < 1e-9);
        }
    }
    check("walk-equivalence", ok);

    // The bound is supermodular and nonincreasing on small instances.
    let mut ok = true;
    for i in 0..3u64 {
        let small = GeometricParams {
            n,
            area_side: 100.0,
            comm_range: 80.0,
            weight_range: (0.2, 2.0),
            symmetric_weights: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_stream(seed, 200 + i));
        let topo = gen_geometric::<f64>(&small, &mut rng)?;
        let report = check_supermodular(n, 8, |s| error_bound(&topo, s, 0.6, 2.0), 1e-9)?;
        ok &= report.is_empty();
        for subset in k_subsets(n, 1) {
            ok &= error_bound(&topo, &subset, 0.6, 2.0)?
                <= error_bound(&topo, &[], 0.6, 2.0)? + 1e-12;
        }
    }
    check("supermodularity", ok);

    // Trajectory sampling agrees with distribution pushing.
    let mut rng = ChaCha8Rng::seed_from_u64(derive_stream(seed, 300));
    let topo = gen_geometric::<f64>(&params, &mut rng)?;
    let chain = WalkChain::from_topology(&topo, &[1, 3], 0.3)?;
    let exact = chain.escape_probability(5, 0)?;
    let freq = chain.simulate_escape(5, 0, 20_000, &mut rng)?;
    let se = (exact * (1.0 - exact) / 20_000.0).sqrt().max(1e-6);
    check("escape-monte-carlo", (freq - exact).abs() <= 4.0 * se);

    if failures > 0 {
        bail!("{failures} oracle check(s) failed");
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Gen {
            kind,
            config,
            seed,
            out,
        } => cmd_gen(kind, config.as_deref(), seed, out.as_deref()),
        Command::Select {
            topology,
            policy,
            k,
            alpha,
            p,
            t,
            seed,
            out,
        } => cmd_select(&topology, &policy, k, alpha, p, t, seed, out.as_deref()),
        Command::Run {
            config,
            out,
            scale,
            seed,
        } => cmd_run(config.as_deref(), out.as_deref(), scale, seed),
        Command::Summarize { results, out } => {
            let out_path = out.unwrap_or_else(|| {
                let mut p = results.clone();
                p.set_extension("summary.csv");
                p
            });
            let groups = summarize_file(&results, &out_path)?;
            eprintln!("wrote {groups} summary rows to {}", out_path.display());
            Ok(())
        }
        Command::Oracle { seed, n } => cmd_oracle(seed, n),
    }
}
