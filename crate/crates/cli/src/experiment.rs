//! Experiment sweeps: deterministic per-trial seeding, incremental CSV
//! output with crash resume, and the per-family drivers.
//!
//! Every row is a pure function of (config, trial index): per-trial seeds
//! are derived from the master seed with SplitMix64 streams, so trials can
//! be computed concurrently and a partial output file can be resumed by
//! skipping the cells already present. The `wall_ms` column is the one
//! nondeterministic column and is excluded from reproducibility checks.

use std::collections::HashSet;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use leadsel::dynamics::{hull_error, lq_norm, StateVector};
use leadsel::graph::{
    gen_geometric, GeometricParams, LinkFailureModel, WaypointModel, WaypointParams,
};
use leadsel::{
    adversarial_lower_bound_experiment, convergence_error, derive_stream, error_bound, propagate,
    select_baseline, select_k_leaders, select_minimal_leaders, AdversarialPolicy, BaselinePolicy,
    EpochSequence, ErrorEvaluator, ExpertsState, HorizonRule, LeaderConfig, Topology, Vector,
};

use crate::config::{
    ExperimentConfig, ExperimentKind, HorizonSection, Policy, TopologySection,
};

pub const CSV_HEADER: &str = "trial,seed,policy,sweep,bound,realized,leaders,leader_set,evals,wall_ms";

// Stream tags for per-trial seed derivation.
const STREAM_TOPOLOGY: u64 = 1;
const STREAM_BASELINE: u64 = 2;
const STREAM_STATES: u64 = 3;
const STREAM_HORIZON: u64 = 4;
const STREAM_MC: u64 = 5;
const STREAM_EXPERTS: u64 = 6;
const STREAM_REALIZATION: u64 = 7;

#[derive(Debug, Clone)]
pub struct Row {
    pub trial: usize,
    pub seed: u64,
    pub policy: Policy,
    pub sweep: f64,
    pub bound: f64,
    pub realized: Option<f64>,
    pub leaders: usize,
    pub leader_set: Vec<usize>,
    pub evals: usize,
    pub wall_ms: f64,
}

impl Row {
    fn cell_key(&self) -> String {
        format!("{}|{}|{}", self.trial, self.policy, self.sweep)
    }

    fn to_csv(&self) -> String {
        let set = self
            .leader_set
            .iter()
            .map(|v| (v + 1).to_string())
            .collect::<Vec<_>>()
            .join(" ");
        let realized = match self.realized {
            Some(v) => format!("{v}"),
            None => String::new(),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{:.3}",
            self.trial,
            self.seed,
            self.policy,
            self.sweep,
            self.bound,
            realized,
            self.leaders,
            set,
            self.evals,
            self.wall_ms
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunStats {
    pub written: usize,
    pub skipped: usize,
}

fn geometric_params(t: &TopologySection) -> GeometricParams {
    GeometricParams {
        n: t.n,
        area_side: t.area_side,
        comm_range: t.comm_range,
        weight_range: (t.weight_min, t.weight_max),
        symmetric_weights: t.symmetric_weights,
    }
}

fn rng_for(trial_seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_stream(trial_seed, stream))
}

/// Initial states with `l^q` norm exactly one.
fn unit_states(n: usize, q: f64, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vector<f64>> {
    use rand::Rng;
    (0..count)
        .map(|_| {
            let mut v: Vector<f64> = Vector::zeros(n);
            for x in v.iter_mut() {
                *x = rng.gen::<f64>() * 2.0 - 1.0;
            }
            let norm = lq_norm(v.as_slice().unwrap(), q);
            if norm == 0.0 {
                v[0] = 1.0;
            } else {
                v.mapv_inplace(|x| x / norm);
            }
            v
        })
        .collect()
}

fn mean_realized_static(
    topo: &Topology<f64>,
    leaders: &[usize],
    t: f64,
    p: f64,
    states: &[Vector<f64>],
) -> Option<f64> {
    if states.is_empty() || leaders.is_empty() {
        return None;
    }
    let mut acc = 0.0;
    for x in states {
        let anchors: Vec<f64> = leaders.iter().map(|&v| x[v]).collect();
        let config = LeaderConfig::new(leaders.to_vec(), anchors).ok()?;
        let x0 = StateVector::at_origin(x.clone());
        acc += convergence_error(topo, &config, &x0, t, p).ok()?;
    }
    Some(acc / states.len() as f64)
}

/// Realized counterpart of the per-epoch metric: mean over states of the
/// average single-epoch error, each epoch evaluated with its own set.
fn mean_realized_per_epoch(
    seq: &EpochSequence<f64>,
    sets: &[Vec<usize>],
    p: f64,
    states: &[Vector<f64>],
) -> Option<f64> {
    if states.is_empty() {
        return None;
    }
    let mut acc = 0.0;
    let mut terms = 0usize;
    for x in states {
        for (epoch, set) in seq.epochs().iter().zip(sets) {
            acc += single_epoch_realized(&epoch.topology, set, epoch.dwell, p, x)?;
            terms += 1;
        }
    }
    Some(acc / terms as f64)
}

fn single_epoch_realized(
    topo: &Topology<f64>,
    leaders: &[usize],
    dwell: f64,
    p: f64,
    state: &Vector<f64>,
) -> Option<f64> {
    if leaders.is_empty() {
        return None;
    }
    let anchors: Vec<f64> = leaders.iter().map(|&v| state[v]).collect();
    let config = LeaderConfig::new(leaders.to_vec(), anchors).ok()?;
    let x0 = StateVector::at_origin(state.clone());
    let out = propagate(topo, &config, &x0, dwell).ok()?;
    hull_error(&out.values, &config, p).ok()
}

fn resolve_static_horizon(
    cfg: &ExperimentConfig,
    topo: &Topology<f64>,
    probe_size: usize,
    trial_seed: u64,
) -> Result<f64> {
    let rule = match cfg.algorithm.horizon {
        HorizonSection::Fixed { t } => HorizonRule::Fixed(t),
        HorizonSection::BoundTarget { beta } => HorizonRule::BoundTarget { beta, probe_size },
    };
    let mut rng = rng_for(trial_seed, STREAM_HORIZON);
    Ok(leadsel::resolve_horizon(topo, &rule, cfg.algorithm.p, &mut rng)?)
}

/// Ordering each policy inserts nodes in (greedy order or baseline ranking).
fn policy_order(
    policy: Policy,
    topo: &Topology<f64>,
    ev: &ErrorEvaluator<f64>,
    depth: usize,
    trial_seed: u64,
) -> Result<(Vec<usize>, Vec<f64>, usize)> {
    match policy {
        Policy::Supermodular => {
            let res = select_k_leaders(ev, depth)?;
            Ok((res.leaders, res.bound_trace, res.evaluations))
        }
        Policy::Random | Policy::MaxDegree | Policy::AverageDegree => {
            let base = match policy {
                Policy::Random => BaselinePolicy::Random,
                Policy::MaxDegree => BaselinePolicy::MaxDegree,
                _ => BaselinePolicy::AverageDegree,
            };
            let mut rng = rng_for(trial_seed, STREAM_BASELINE);
            let res = select_baseline(topo, ev, depth, base, &mut rng)?;
            Ok((res.leaders, res.bound_trace, res.evaluations))
        }
        Policy::Dynamic => bail!("dynamic policy has no static ordering"),
    }
}

fn static_k_rows(cfg: &ExperimentConfig, trial: usize) -> Result<Vec<Row>> {
    let p = cfg.algorithm.p;
    let trial_seed = derive_stream(cfg.master_seed, trial as u64);
    let topo = gen_geometric::<f64>(
        &geometric_params(&cfg.topology),
        &mut rng_for(trial_seed, STREAM_TOPOLOGY),
    )?;
    let k_max = *cfg.algorithm.k_values.iter().max().expect("validated");
    let t = resolve_static_horizon(cfg, &topo, k_max, trial_seed)?;
    let ev = ErrorEvaluator::static_network(topo.clone(), t, p)?;
    let q = leadsel::dynamics::conjugate_exponent(p);
    let states = unit_states(
        topo.n(),
        q,
        cfg.initial_state_samples,
        &mut rng_for(trial_seed, STREAM_STATES),
    );

    let mut rows = Vec::new();
    for &policy in &cfg.policies {
        let started = Instant::now();
        let (order, trace, evals) = policy_order(policy, &topo, &ev, k_max, trial_seed)?;
        let mut policy_rows = Vec::new();
        for &k in &cfg.algorithm.k_values {
            let leaders = &order[..k];
            let bound = trace[k - 1];
            let realized = mean_realized_static(&topo, leaders, t, p, &states);
            policy_rows.push(Row {
                trial,
                seed: trial_seed,
                policy,
                sweep: k as f64,
                bound,
                realized,
                leaders: k,
                leader_set: leaders.to_vec(),
                evals,
                wall_ms: 0.0,
            });
        }
        let wall = started.elapsed().as_secs_f64() * 1e3 / policy_rows.len() as f64;
        for mut row in policy_rows {
            row.wall_ms = wall;
            rows.push(row);
        }
    }
    // Rows are emitted sweep-major for a stable file order.
    rows.sort_by(|a, b| {
        a.sweep
            .partial_cmp(&b.sweep)
            .unwrap()
            .then_with(|| policy_index(cfg, a.policy).cmp(&policy_index(cfg, b.policy)))
    });
    Ok(rows)
}

fn policy_index(cfg: &ExperimentConfig, p: Policy) -> usize {
    cfg.policies.iter().position(|&x| x == p).unwrap_or(usize::MAX)
}

fn static_alpha_rows(cfg: &ExperimentConfig, trial: usize) -> Result<Vec<Row>> {
    let p = cfg.algorithm.p;
    let trial_seed = derive_stream(cfg.master_seed, trial as u64);
    let topo = gen_geometric::<f64>(
        &geometric_params(&cfg.topology),
        &mut rng_for(trial_seed, STREAM_TOPOLOGY),
    )?;
    let n = topo.n();
    let t = resolve_static_horizon(cfg, &topo, 1, trial_seed)?;
    let ev = ErrorEvaluator::static_network(topo.clone(), t, p)?;
    let q = leadsel::dynamics::conjugate_exponent(p);
    let states = unit_states(
        n,
        q,
        cfg.initial_state_samples,
        &mut rng_for(trial_seed, STREAM_STATES),
    );

    let mut rows = Vec::new();
    for &policy in &cfg.policies {
        let started = Instant::now();
        // Full insertion order; baselines walk it until the budget is met.
        let order: Option<Vec<usize>> = match policy {
            Policy::Supermodular => None,
            _ => Some(policy_order(policy, &topo, &ev, n, trial_seed)?.0),
        };
        let mut policy_rows = Vec::new();
        for &alpha in &cfg.algorithm.alpha_values {
            let (leaders, bound, evals) = match &order {
                None => {
                    let res = select_minimal_leaders(&ev, alpha)?;
                    (res.leaders, res.objective, res.evaluations)
                }
                Some(order) => {
                    let mut end = 0usize;
                    let mut bound = ev.bound(&[])?;
                    let mut evals = 1usize;
                    while bound > alpha && end < n {
                        end += 1;
                        bound = ev.bound(&order[..end])?;
                        evals += 1;
                    }
                    (order[..end].to_vec(), bound, evals)
                }
            };
            let realized = mean_realized_static(&topo, &leaders, t, p, &states);
            policy_rows.push(Row {
                trial,
                seed: trial_seed,
                policy,
                sweep: alpha,
                bound,
                realized,
                leaders: leaders.len(),
                leader_set: leaders,
                evals,
                wall_ms: 0.0,
            });
        }
        let wall = started.elapsed().as_secs_f64() * 1e3 / policy_rows.len() as f64;
        for mut row in policy_rows {
            row.wall_ms = wall;
            rows.push(row);
        }
    }
    rows.sort_by(|a, b| {
        a.sweep
            .partial_cmp(&b.sweep)
            .unwrap()
            .then_with(|| policy_index(cfg, a.policy).cmp(&policy_index(cfg, b.policy)))
    });
    Ok(rows)
}

/// Run the online selector across a realization, observing each epoch after
/// it completes. Returns one leader set per epoch.
fn dynamic_sets(
    seq: &EpochSequence<f64>,
    k: usize,
    beta: f64,
    p: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<usize>>> {
    let mut state = ExpertsState::<f64>::new(seq.n(), k, beta)?;
    let mut sets = Vec::with_capacity(seq.len());
    for m in 0..seq.len() {
        let observed = if m == 0 {
            None
        } else {
            let prev = &seq.epochs()[m - 1];
            Some((&prev.topology, prev.dwell))
        };
        sets.push(state.select(observed, p, rng)?);
    }
    Ok(sets)
}

fn link_failure_rows(cfg: &ExperimentConfig, trial: usize) -> Result<Vec<Row>> {
    let p = cfg.algorithm.p;
    let k = cfg.dynamics.k;
    let trial_seed = derive_stream(cfg.master_seed, trial as u64);
    let base = gen_geometric::<f64>(
        &geometric_params(&cfg.topology),
        &mut rng_for(trial_seed, STREAM_TOPOLOGY),
    )?;
    let q = leadsel::dynamics::conjugate_exponent(p);
    let states = unit_states(
        base.n(),
        q,
        cfg.initial_state_samples,
        &mut rng_for(trial_seed, STREAM_STATES),
    );

    let mut rows = Vec::new();
    for (fp_index, &fail_prob) in cfg.dynamics.fail_probs.iter().enumerate() {
        let model = LinkFailureModel {
            base: base.clone(),
            fail_prob,
            epochs: cfg.dynamics.epochs,
            dwell: cfg.dynamics.dwell,
        };
        let mc_ev = ErrorEvaluator::monte_carlo(
            &model,
            cfg.dynamics.mc_samples,
            derive_stream(derive_stream(trial_seed, STREAM_MC), fp_index as u64),
            p,
        )?;
        // Shared evaluation realization for the paired comparison.
        let eval_seq = leadsel::dynamics::SequenceDistribution::<f64>::sample(
            &model,
            derive_stream(derive_stream(trial_seed, STREAM_REALIZATION), fp_index as u64),
        )?;
        let r = eval_seq.len();

        for &policy in &cfg.policies {
            let started = Instant::now();
            let (sets, evals): (Vec<Vec<usize>>, usize) = match policy {
                Policy::Dynamic => {
                    let mut rng = rng_for(derive_stream(trial_seed, STREAM_EXPERTS), fp_index as u64);
                    let sets = dynamic_sets(&eval_seq, k, cfg.algorithm.experts_beta, p, &mut rng)?;
                    (sets, r * k * base.n())
                }
                _ => {
                    let (order, _, evals) = policy_order(policy, &base, &mc_ev, k, trial_seed)?;
                    (vec![order[..k].to_vec(); r], evals)
                }
            };
            let metric = leadsel::per_epoch_metric(&eval_seq, &sets, p)?;
            let realized = mean_realized_per_epoch(&eval_seq, &sets, p, &states);
            let wall = started.elapsed().as_secs_f64() * 1e3;
            rows.push(Row {
                trial,
                seed: trial_seed,
                policy,
                sweep: fail_prob,
                bound: metric.average,
                realized,
                leaders: k,
                leader_set: sets.last().cloned().unwrap_or_default(),
                evals,
                wall_ms: wall,
            });
        }
    }
    Ok(rows)
}

fn waypoint_rows(cfg: &ExperimentConfig, trial: usize) -> Result<Vec<Row>> {
    let p = cfg.algorithm.p;
    let k = cfg.dynamics.k;
    let trial_seed = derive_stream(cfg.master_seed, trial as u64);
    let model = WaypointModel {
        params: WaypointParams {
            geometric: geometric_params(&cfg.topology),
            ref_speed: cfg.dynamics.ref_speed,
            disturbance_range: (cfg.dynamics.disturbance_min, cfg.dynamics.disturbance_max),
            epochs: cfg.dynamics.epochs,
            dwell: cfg.dynamics.dwell,
        },
    };
    let seq = leadsel::dynamics::SequenceDistribution::<f64>::sample(
        &model,
        derive_stream(trial_seed, STREAM_REALIZATION),
    )?;
    let r = seq.len();
    let n = seq.n();
    let q = leadsel::dynamics::conjugate_exponent(p);
    let states = unit_states(
        n,
        q,
        cfg.initial_state_samples,
        &mut rng_for(trial_seed, STREAM_STATES),
    );

    let mut per_policy_sets: Vec<(Policy, Vec<Vec<usize>>, usize, f64)> = Vec::new();
    for &policy in &cfg.policies {
        let started = Instant::now();
        let (sets, evals) = match policy {
            Policy::Dynamic => {
                let mut rng = rng_for(trial_seed, STREAM_EXPERTS);
                let sets = dynamic_sets(&seq, k, cfg.algorithm.experts_beta, p, &mut rng)?;
                (sets, r * k * n)
            }
            Policy::Supermodular => {
                // Clairvoyant per-epoch greedy with distribution knowledge.
                let mut sets = Vec::with_capacity(r);
                let mut evals = 0usize;
                for epoch in seq.epochs() {
                    let ev =
                        ErrorEvaluator::static_network(epoch.topology.clone(), epoch.dwell, p)?;
                    let res = select_k_leaders(&ev, k)?;
                    evals += res.evaluations;
                    sets.push(res.leaders);
                }
                (sets, evals)
            }
            _ => {
                // Fixed set ranked on the first epoch's topology.
                let first = &seq.epochs()[0];
                let ev = ErrorEvaluator::static_network(first.topology.clone(), first.dwell, p)?;
                let (order, _, evals) =
                    policy_order(policy, &first.topology, &ev, k, trial_seed)?;
                (vec![order[..k].to_vec(); r], evals)
            }
        };
        let wall = started.elapsed().as_secs_f64() * 1e3 / r as f64;
        per_policy_sets.push((policy, sets, evals, wall));
    }

    let mut rows = Vec::new();
    for m in 0..r {
        let epoch = &seq.epochs()[m];
        for (policy, sets, evals, wall) in &per_policy_sets {
            let set = &sets[m];
            let bound = error_bound(&epoch.topology, set, epoch.dwell, p)?;
            let realized = states
                .iter()
                .map(|x| single_epoch_realized(&epoch.topology, set, epoch.dwell, p, x))
                .try_fold(0.0, |acc, v| v.map(|v| acc + v))
                .map(|sum| sum / states.len().max(1) as f64);
            rows.push(Row {
                trial,
                seed: trial_seed,
                policy: *policy,
                sweep: (m + 1) as f64,
                bound,
                realized,
                leaders: set.len(),
                leader_set: set.clone(),
                evals: *evals,
                wall_ms: *wall,
            });
        }
    }
    Ok(rows)
}

fn regret_rows(cfg: &ExperimentConfig) -> Result<Vec<Row>> {
    let n = cfg.topology.n;
    let r = cfg.regret.rounds;
    let mut rows = Vec::new();
    for &policy in &cfg.policies {
        let started = Instant::now();
        let arm = match policy {
            Policy::Random => AdversarialPolicy::UniformRandom,
            Policy::Dynamic => AdversarialPolicy::Experts {
                eta: cfg
                    .algorithm
                    .eta
                    .unwrap_or_else(|| (8.0 * (n as f64).ln() / r as f64).sqrt().min(1.0)),
            },
            other => bail!("policy `{other}` is not applicable to the regret experiment"),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_stream(
            cfg.master_seed,
            match policy {
                Policy::Random => 1,
                _ => 2,
            },
        ));
        let report =
            adversarial_lower_bound_experiment(n, r, cfg.trials, cfg.regret.sigma, arm, &mut rng)?;
        let wall = started.elapsed().as_secs_f64() * 1e3 / cfg.trials as f64;
        for trial in 0..cfg.trials {
            rows.push(Row {
                trial,
                seed: cfg.master_seed,
                policy,
                sweep: r as f64,
                bound: report.per_trial_regrets[trial],
                realized: Some(report.per_trial_min_loss[trial]),
                leaders: 1,
                leader_set: Vec::new(),
                evals: r,
                wall_ms: wall,
            });
        }
    }
    rows.sort_by(|a, b| {
        a.trial
            .cmp(&b.trial)
            .then_with(|| policy_index(cfg, a.policy).cmp(&policy_index(cfg, b.policy)))
    });
    Ok(rows)
}

fn trial_rows(cfg: &ExperimentConfig, trial: usize) -> Result<Vec<Row>> {
    match cfg.experiment {
        ExperimentKind::StaticK => static_k_rows(cfg, trial),
        ExperimentKind::StaticAlpha => static_alpha_rows(cfg, trial),
        ExperimentKind::LinkFailure => link_failure_rows(cfg, trial),
        ExperimentKind::Waypoint => waypoint_rows(cfg, trial),
        ExperimentKind::RegretLowerBound => unreachable!("handled as a single batch"),
    }
}

fn existing_cells(path: &Path) -> Result<HashSet<String>> {
    let mut cells = HashSet::new();
    if !path.exists() {
        return Ok(cells);
    }
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading existing results at {}", path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        Some(h) => bail!(
            "existing output {} has a different schema ({h}); refusing to resume",
            path.display()
        ),
        None => return Ok(cells),
    }
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 4 {
            bail!("malformed row in existing output: {line}");
        }
        cells.insert(format!("{}|{}|{}", fields[0], fields[2], fields[3]));
    }
    Ok(cells)
}

/// Map trials to row batches, optionally across threads, preserving trial
/// order in the output.
fn compute_batches(
    cfg: &ExperimentConfig,
    trials: &[usize],
    threads: usize,
) -> Result<Vec<(usize, Vec<Row>)>> {
    if threads <= 1 || trials.len() <= 1 {
        return trials
            .iter()
            .map(|&t| Ok((t, trial_rows(cfg, t)?)))
            .collect();
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Vec<Row>>>>> =
        Mutex::new((0..trials.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads.min(trials.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= trials.len() {
                    break;
                }
                let out = trial_rows(cfg, trials[i]);
                results.lock().expect("results lock")[i] = Some(out);
            });
        }
    });
    let collected = results.into_inner().expect("results lock");
    let mut out = Vec::with_capacity(trials.len());
    for (i, slot) in collected.into_iter().enumerate() {
        out.push((trials[i], slot.expect("worker filled every slot")?));
    }
    Ok(out)
}

/// Run the configured sweep, appending any missing cells to `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, threads: usize) -> Result<RunStats> {
    let existing = existing_cells(out)?;
    let fresh = existing.is_empty() && !out.exists();
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(out)
        .with_context(|| format!("opening {}", out.display()))?;
    if fresh || fs::metadata(out)?.len() == 0 {
        writeln!(file, "{CSV_HEADER}")?;
        file.flush()?;
    }

    let batches: Vec<(usize, Vec<Row>)> = if cfg.experiment == ExperimentKind::RegretLowerBound {
        vec![(0, regret_rows(cfg)?)]
    } else {
        let all: Vec<usize> = (0..cfg.trials).collect();
        compute_batches(cfg, &all, threads)?
    };

    let mut written = 0usize;
    let mut skipped = 0usize;
    for (_, rows) in batches {
        for row in rows {
            if existing.contains(&row.cell_key()) {
                skipped += 1;
                continue;
            }
            writeln!(file, "{}", row.to_csv())?;
            file.flush()?;
            written += 1;
        }
    }
    Ok(RunStats { written, skipped })
}
