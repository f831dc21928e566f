use std::fmt::{self, Write as _};
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};

use popsim::exact::{self, UnsafeWitness};
use popsim::influence::{backward_sets, build_graph_h, InfluenceTracker, InteractionLog};
use popsim::model::{
    output_vector, run_trial, sample_interaction, sim_rng, trial_seed, InitCount, Observer,
    Stability, TrialOutcome,
};
use popsim::protocols::{self, default_overrides};
use popsim::stats::{self, block_params, coupon_indices, coupon_spec, epidemic_spec, summarize};
use popsim::threshold::Threshold;
use popsim::{Error, Protocol, TrialSettings};

use crate::output::{Format, Table};
use crate::{
    Cli, Command, CouponArgs, ExactArgs, ExportGraphArgs, GraphFormat, InfluencerArgs, LogArgs,
    ProtocolArgs, RunArgs, StopRule, SweepArgs,
};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Budget { .. } => EXIT_BUDGET,
            Error::NonAbsorbing(_) => EXIT_INTERNAL,
            _ => EXIT_USAGE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Influencer(a) => cmd_influencer(&a),
        Command::Coupon(a) => cmd_coupon(&a),
        Command::Exact(a) => cmd_exact(&a),
        Command::ExportGraph(a) => cmd_export_graph(&a),
        Command::Log(a) => cmd_log(&a),
    }
}

enum ProtocolSource {
    Catalog(String),
    File(Protocol),
}

impl ProtocolSource {
    fn resolve(args: &ProtocolArgs, default: Option<&str>) -> CliResult<Self> {
        if let Some(path) = &args.protocol_file {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
            return Ok(ProtocolSource::File(protocols::load_protocol(&text)?));
        }
        let name =
            args.protocol.as_deref().or(default).ok_or_else(|| {
                CliError::usage("one of --protocol or --protocol-file is required")
            })?;
        if !protocols::CATALOG.contains(&name) {
            return Err(CliError::usage(format!(
                "unknown protocol '{name}'; expected one of {}",
                protocols::CATALOG.join(", ")
            )));
        }
        Ok(ProtocolSource::Catalog(name.to_string()))
    }

    fn build(&self, n: usize) -> Protocol {
        match self {
            ProtocolSource::Catalog(name) => protocols::by_name(name, n).expect("checked name"),
            ProtocolSource::File(p) => p.clone(),
        }
    }
}

fn parse_threshold(s: &str) -> CliResult<Threshold> {
    s.parse::<Threshold>().map_err(CliError::from)
}

fn check_sweep(sweep: &SweepArgs) -> CliResult<()> {
    if sweep.trials == 0 {
        return Err(CliError::usage("--trials must be at least 1"));
    }
    if let Some(&n) = sweep.n.iter().find(|&&n| n < 2) {
        return Err(CliError::usage(format!(
            "population sizes must be >= 2, got {n}"
        )));
    }
    if sweep.jobs == 0 {
        return Err(CliError::usage("--jobs must be at least 1"));
    }
    Ok(())
}

/// Runs `trials` independent jobs on up to `jobs` threads; results come back
/// in trial order.
fn farm<T, F>(jobs: usize, trials: u64, f: F) -> CliResult<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> CliResult<T> + Sync + Send,
{
    if jobs <= 1 {
        return (0..trials).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError {
            code: EXIT_INTERNAL,
            message: e.to_string(),
        })?;
    pool.install(|| (0..trials).into_par_iter().map(&f).collect())
}

fn write_text(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text)
            .map_err(|e| CliError::usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::usage(format!("cannot write to stdout: {e}")))
        }
    }
}

fn write_summary(path: Option<&Path>, table: &Table, format: Format) -> CliResult<()> {
    let text = table.render(format);
    match path {
        Some(_) => write_text(path, &text),
        None => {
            eprint!("{text}");
            Ok(())
        }
    }
}

fn n_ln_n(n: usize) -> f64 {
    n as f64 * (n as f64).ln()
}

fn cmd_run(args: &RunArgs) -> CliResult<()> {
    let sweep = &args.sweep;
    check_sweep(sweep)?;
    let source = ProtocolSource::resolve(&args.protocol, None)?;
    let threshold = parse_threshold(&sweep.threshold)?;
    let track_influence = args.influencers || args.stop == StopRule::TMin;

    let mut table = Table::new(
        "popsim.run/1",
        &[
            "trial",
            "seed",
            "n",
            "steps",
            "parallel_time",
            "outcome",
            "stabilized",
            "silent",
            "t_min",
            "init_below",
            "final_digest",
        ],
    );
    for &n in &sweep.n {
        let protocol = source.build(n);
        let stop = match args.stop {
            StopRule::Auto if protocol.elects_leaders() => StopRule::Stabilized,
            StopRule::Auto => StopRule::Silent,
            other => other,
        };
        let f = threshold.value(n);
        let init_limit = threshold.ceil(n) as usize;
        let base = TrialSettings::new(n, 0).overrides(default_overrides(&protocol));
        let max_steps = sweep.max_steps.unwrap_or(base.max_steps);
        let records = farm(sweep.jobs, sweep.trials, |i| {
            let settings = base.clone().max_steps(max_steps);
            let settings = TrialSettings {
                seed: trial_seed(sweep.seed, i),
                ..settings
            };
            let mut stability = Stability::new(&protocol);
            let mut init = InitCount::new(&protocol, init_limit);
            let mut tracker = track_influence.then(|| InfluenceTracker::new(n, f));
            let mut observers: Vec<&mut dyn Observer> = vec![&mut stability, &mut init];
            if let Some(t) = tracker.as_mut() {
                observers.push(t);
            }
            let event = match stop {
                StopRule::Stabilized => Some("stabilized"),
                StopRule::Silent => Some("silent"),
                StopRule::TMin => Some("t_min"),
                StopRule::InitBelow => Some("init_below"),
                StopRule::Budget | StopRule::Auto => None,
            };
            let rec = run_trial(
                &protocol,
                &settings,
                |v| event.is_some_and(|e| v.events.get(e).is_some()),
                &mut observers,
            )?;
            Ok((i, rec))
        })?;
        for (i, rec) in records {
            let ev = &rec.event_steps;
            table.push(vec![
                i.into(),
                rec.seed.into(),
                n.into(),
                rec.steps_taken.into(),
                rec.parallel_time().into(),
                outcome_label(rec.outcome).into(),
                ev.get("stabilized").into(),
                ev.get("silent").into(),
                ev.get("t_min").into(),
                ev.get("init_below").into(),
                rec.final_configuration_digest.clone().into(),
            ]);
        }
    }
    write_text(sweep.out.as_deref(), &table.render(sweep.format))
}

fn outcome_label(o: TrialOutcome) -> &'static str {
    match o {
        TrialOutcome::Stopped => "stopped",
        TrialOutcome::Truncated => "truncated",
    }
}

fn cmd_influencer(args: &InfluencerArgs) -> CliResult<()> {
    let sweep = &args.sweep;
    check_sweep(sweep)?;
    let source = ProtocolSource::resolve(&args.protocol, Some(protocols::LEAVE_INIT))?;
    let threshold = parse_threshold(&sweep.threshold)?;

    let mut table = Table::new(
        "popsim.influencer/1",
        &[
            "trial",
            "seed",
            "n",
            "threshold",
            "t_min",
            "ratio",
            "t_watch",
            "truncated",
        ],
    );
    let mut summary = Table::new(
        "popsim.influencer-summary/1",
        &[
            "n",
            "threshold",
            "trials",
            "reached",
            "ratio_mean",
            "ratio_sd",
            "ratio_min",
            "ratio_p1",
            "ratio_p5",
            "ratio_p50",
            "ratio_p95",
            "ratio_p99",
            "single_agent_mean_ratio",
            "block_r",
            "block_kappa",
            "block_truncated_mean_ratio",
            "block_lower_sum_ratio",
        ],
    );
    for (idx, &n) in sweep.n.iter().enumerate() {
        if let Some(w) = args.watch {
            if w >= n {
                return Err(CliError::usage(format!(
                    "--watch {w} out of range for n = {n}"
                )));
            }
        }
        let f = threshold.value(n);
        if f < 1.0 {
            return Err(CliError::usage(format!(
                "threshold {threshold} is below 1 at n = {n}"
            )));
        }
        let protocol = source.build(n);
        let base = TrialSettings::new(n, 0).overrides(default_overrides(&protocol));
        let max_steps = sweep.max_steps.unwrap_or(base.max_steps);
        let run_one = |i: u64, series: bool| {
            let settings = TrialSettings {
                seed: trial_seed(sweep.seed, i),
                ..base.clone().max_steps(max_steps)
            };
            let mut tracker = InfluenceTracker::new(n, f);
            if let Some(w) = args.watch {
                tracker = tracker.watch(w);
            }
            if series {
                tracker = tracker.record_series();
            }
            let watching = args.watch.is_some();
            let rec = run_trial(
                &protocol,
                &settings,
                |v| {
                    v.events.get("t_min").is_some()
                        && (!watching || v.events.get("t_watch").is_some())
                },
                &mut [&mut tracker],
            )?;
            Ok((i, rec, tracker))
        };
        if idx == 0 {
            if let Some(path) = &args.series {
                let (_, _, tracker) = run_one(0, true)?;
                let mut s = Table::new(
                    "popsim.influence-series/1",
                    &["step", "max_size", "initiator_size", "responder_size"],
                );
                for x in tracker.series() {
                    s.push(vec![
                        x.step.into(),
                        x.max_size.into(),
                        x.initiator_size.into(),
                        x.responder_size.into(),
                    ]);
                }
                write_text(Some(path), &s.render(sweep.format))?;
            }
        }
        let results = farm(sweep.jobs, sweep.trials, |i| {
            run_one(i, false).map(|(i, rec, _)| (i, rec))
        })?;
        let scale = n_ln_n(n);
        let mut ratios = Vec::new();
        for (i, rec) in &results {
            let t_min = rec.event_steps.get("t_min");
            let ratio = t_min.map(|t| t as f64 / scale);
            if let Some(r) = ratio {
                ratios.push(r);
            }
            table.push(vec![
                (*i).into(),
                rec.seed.into(),
                n.into(),
                f.into(),
                t_min.into(),
                ratio.into(),
                rec.event_steps.get("t_watch").into(),
                u64::from(t_min.is_none()).into(),
            ]);
        }

        let est = (!ratios.is_empty())
            .then(|| summarize(&ratios))
            .transpose()?;
        let pct = |p| est.as_ref().and_then(|e| e.percentile(p));
        let limit = f.floor() as usize;
        let single = (limit < n)
            .then(|| epidemic_spec(n, 1, limit).map(|s| s.mean() / scale))
            .transpose()?;
        let blocks = block_params(n)?;
        let truncated = (blocks.kappa * blocks.r < n)
            .then(|| blocks.truncated_spec().map(|s| s.mean() / scale))
            .transpose()?;
        let lower = blocks.block_lower_sum().ok().map(|x| x / scale);
        summary.push(vec![
            n.into(),
            f.into(),
            sweep.trials.into(),
            ratios.len().into(),
            est.as_ref().map(|e| e.mean).into(),
            est.as_ref().map(|e| e.variance.sqrt()).into(),
            ratios.iter().copied().reduce(f64::min).into(),
            pct(1).into(),
            pct(5).into(),
            pct(50).into(),
            pct(95).into(),
            pct(99).into(),
            single.into(),
            blocks.r.into(),
            blocks.kappa.into(),
            truncated.into(),
            lower.into(),
        ]);
    }
    write_text(sweep.out.as_deref(), &table.render(sweep.format))?;
    write_summary(args.summary.as_deref(), &summary, sweep.format)
}

fn cmd_coupon(args: &CouponArgs) -> CliResult<()> {
    let sweep = &args.sweep;
    check_sweep(sweep)?;
    let threshold = parse_threshold(&sweep.threshold)?;

    let mut table = Table::new(
        "popsim.coupon/1",
        &[
            "trial",
            "seed",
            "n",
            "f",
            "steps",
            "parallel_time",
            "ratio",
            "truncated",
        ],
    );
    let mut summary = Table::new(
        "popsim.coupon-summary/1",
        &[
            "n",
            "f",
            "f_star",
            "trials",
            "reached",
            "mean",
            "sd",
            "std_error",
            "p1",
            "p5",
            "p50",
            "p95",
            "p99",
            "analytic_mean",
            "analytic_var",
            "frac_below_half_analytic",
        ],
    );
    for &n in &sweep.n {
        let f = threshold.value(n);
        let spec = coupon_spec(n, f)?;
        let f_star = coupon_indices(n, f)?
            .first()
            .copied()
            .unwrap_or(2 * (f / 2.0).ceil() as usize);
        let analytic_mean = spec.mean();
        let limit = threshold.ceil(n) as usize;
        let protocol = protocols::leave_init(n);
        let max_steps = sweep
            .max_steps
            .unwrap_or(TrialSettings::new(n, 0).max_steps);
        let results = farm(sweep.jobs, sweep.trials, |i| {
            let settings = TrialSettings::new(n, trial_seed(sweep.seed, i)).max_steps(max_steps);
            let mut init = InitCount::new(&protocol, limit);
            let rec = run_trial(
                &protocol,
                &settings,
                |v| v.events.get("init_below").is_some(),
                &mut [&mut init],
            )?;
            Ok((i, rec))
        })?;
        let mut steps = Vec::new();
        for (i, rec) in &results {
            let hit = rec.event_steps.get("init_below");
            if let Some(s) = hit {
                steps.push(s as f64);
            }
            table.push(vec![
                (*i).into(),
                rec.seed.into(),
                n.into(),
                f.into(),
                hit.into(),
                hit.map(|s| s as f64 / n as f64).into(),
                hit.map(|s| s as f64 / n_ln_n(n)).into(),
                u64::from(hit.is_none()).into(),
            ]);
        }
        let est = (!steps.is_empty()).then(|| summarize(&steps)).transpose()?;
        let below = steps.iter().filter(|&&s| s < analytic_mean / 2.0).count();
        let pct = |p| est.as_ref().and_then(|e| e.percentile(p));
        summary.push(vec![
            n.into(),
            f.into(),
            f_star.into(),
            sweep.trials.into(),
            steps.len().into(),
            est.as_ref().map(|e| e.mean).into(),
            est.as_ref().map(|e| e.variance.sqrt()).into(),
            est.as_ref().map(|e| e.std_error).into(),
            pct(1).into(),
            pct(5).into(),
            pct(50).into(),
            pct(95).into(),
            pct(99).into(),
            analytic_mean.into(),
            stats::variance_coupon_sum(&spec).into(),
            (below as f64 / sweep.trials as f64).into(),
        ]);
    }
    write_text(sweep.out.as_deref(), &table.render(sweep.format))?;
    write_summary(args.summary.as_deref(), &summary, sweep.format)
}

/// JSON report for one population size.
pub fn exact_report(protocol: &Protocol, n: usize, dump: bool) -> Result<Value, Error> {
    let space = exact::enumerate_reachable(protocol, n)?;
    let safe = exact::safety_table(&space);
    let (hitting, note) = if !protocol.elects_leaders() {
        (
            Value::Null,
            Some("protocol has no leader output".to_string()),
        )
    } else {
        match exact::expected_stabilization_steps(&space) {
            Ok(h) => (
                json!({
                    "rational": h.exact.as_ref().map(|r| r.to_string()),
                    "value": h.value,
                    "residual": h.residual,
                    "transient_states": h.transient_states,
                }),
                None,
            ),
            Err(Error::NonAbsorbing(msg)) => (Value::Null, Some(msg)),
            Err(e) => return Err(e),
        }
    };
    let mut report = json!({
        "protocol": protocol.name(),
        "n": n,
        "reachable": space.len(),
        "safe": safe.iter().filter(|&&s| s).count(),
        "expected_stabilization_steps": hitting,
        "note": note,
    });
    if dump {
        let configs: Vec<Value> = space
            .configs()
            .iter()
            .zip(&safe)
            .map(|(c, &is_safe)| {
                let outputs: String = output_vector(protocol, c).iter().map(|o| o.as_str()).collect();
                let witness = if is_safe {
                    Value::Null
                } else {
                    match exact::is_safe(&space, c).map(|v| v.witness) {
                        Ok(Some(UnsafeWitness::LeaderCount(k))) => json!({ "leader_count": k }),
                        Ok(Some(UnsafeWitness::OutputChange { path, agent })) => json!({
                            "agent": agent,
                            "path": path.iter().map(|e| [e.initiator, e.responder]).collect::<Vec<_>>(),
                        }),
                        _ => Value::Null,
                    }
                };
                json!({
                    "states": c.states().iter().map(|&s| protocol.state_name(s)).collect::<Vec<_>>(),
                    "outputs": outputs,
                    "safe": is_safe,
                    "witness": witness,
                })
            })
            .collect();
        report["configurations"] = Value::Array(configs);
    }
    Ok(report)
}

fn cmd_exact(args: &ExactArgs) -> CliResult<()> {
    let source = ProtocolSource::resolve(&args.protocol, None)?;
    let mut reports = Vec::new();
    for &n in &args.n {
        reports.push(exact_report(&source.build(n), n, args.dump)?);
    }
    let doc = json!({
        "schema": "popsim.exact/1",
        "tool": format!("popsim {}", crate::output::TOOL_VERSION),
        "reports": reports,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("json values serialize");
    text.push('\n');
    write_text(args.out.as_deref(), &text)
}

/// Edge list (or DOT) of the layered graph followed by the backward sets.
pub fn export_graph(
    log: &InteractionLog,
    agent: usize,
    t: usize,
    format: GraphFormat,
) -> Result<String, Error> {
    let graph = build_graph_h(log, t)?;
    let sets = backward_sets(log, agent, t)?;
    let comment = match format {
        GraphFormat::Edges => "#",
        GraphFormat::Dot => "//",
    };
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{comment} popsim graph-h n={} t={t} agent={agent}",
        log.n()
    );
    out.push_str(&match format {
        GraphFormat::Edges => graph.to_edge_list(),
        GraphFormat::Dot => graph.to_dot(),
    });
    for (k, set) in sets.iter().enumerate() {
        let members: Vec<String> = set.iter().map(|a| a.to_string()).collect();
        let _ = writeln!(
            out,
            "{comment} backward layer={} size={} members={}",
            t - k,
            set.len(),
            members.join(" ")
        );
    }
    Ok(out)
}

fn cmd_export_graph(args: &ExportGraphArgs) -> CliResult<()> {
    let text = fs::read_to_string(&args.log)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", args.log.display())))?;
    let log = InteractionLog::from_text(&text)?;
    let t = args.t.unwrap_or(log.len());
    let out = export_graph(&log, args.agent, t, args.format)?;
    write_text(args.out.as_deref(), &out)
}

fn cmd_log(args: &LogArgs) -> CliResult<()> {
    let mut rng = sim_rng(args.seed);
    let mut log = InteractionLog::new(args.n);
    for _ in 0..args.steps {
        log.push(sample_interaction(&mut rng, args.n)?)?;
    }
    write_text(args.out.as_deref(), &log.to_text())
}
