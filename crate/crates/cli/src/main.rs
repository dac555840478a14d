//! `dt-cellsim` command line.

mod manifest;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use dt_cellsim::agent::{load_weights, save_weights, PolicyParams};
use dt_cellsim::env::{write_sample_log, EnvConfig, NetEnv, StepResult};
use dt_cellsim::eval::{
    cosine_similarity, dtw, edr, evaluate_policy, heatmap, min_match_score, sliced_wasserstein, AssociationPolicy, Drl,
    EvalReport, MaxSinr,
};
use dt_cellsim::geo::{
    load_traces, rasterize_graph, save_traces, synth_street_graph, MobilityModel, MobilitySource, StreetGraph,
    Trajectory, NUM_ROAD_CLASSES,
};
use dt_cellsim::geom::BBox;
use dt_cellsim::radio::Channel;
use dt_cellsim::rng::{stream_rng, Stream};
use dt_cellsim::scenario::ScenarioConfig;
use dt_cellsim::trainer::{read_checkpoint_info, write_curve, Trainer, TrainerConfig};

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "dt-cellsim", version, about = "Digital-twin cellular simulator and association trainer")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// scenario config JSON; the desk preset when absent
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// output file or directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    parallel_envs: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Scenario configs.
    #[command(subcommand)]
    Scenario(ScenarioCmd),
    /// Street maps.
    #[command(subcommand)]
    Map(MapCmd),
    /// Mobility traces.
    #[command(subcommand)]
    Mobility(MobilityCmd),
    /// Train an association policy.
    Train(TrainArgs),
    /// Evaluate a policy and write an EvalReport.
    Eval(EvalArgs),
    /// Compare a generated trace set with a real one.
    TrajMetrics(TrajMetricsArgs),
    /// Derived reports.
    #[command(subcommand)]
    Report(ReportCmd),
}

#[derive(Subcommand)]
enum ScenarioCmd {
    /// Write a default scenario config.
    Init {
        #[arg(long, value_enum, default_value_t = Scale::Full)]
        scale: Scale,
    },
    /// Validate a config and print it normalized.
    Check,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Desk,
    Full,
}

#[derive(Subcommand)]
enum MapCmd {
    /// Synthesize a street lattice and its raster.
    Synth {
        /// block size, m
        #[arg(long, default_value_t = 50.0)]
        block: f64,
        /// fraction of edges removed
        #[arg(long, default_value_t = 0.1)]
        drop: f64,
    },
}

#[derive(Subcommand)]
enum MobilityCmd {
    /// Generate traces.
    Gen(MobilityGenArgs),
}

#[derive(Args)]
struct MobilityGenArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    #[arg(long)]
    count: usize,
    #[command(flatten)]
    src: SourceArgs,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum ModelArg {
    Rwp,
    Gm,
    Mrwp,
    Mgm,
    Playback,
}

impl ModelArg {
    fn name(self) -> &'static str {
        match self {
            ModelArg::Rwp => "rwp",
            ModelArg::Gm => "gm",
            ModelArg::Mrwp => "mrwp",
            ModelArg::Mgm => "mgm",
            ModelArg::Playback => "playback",
        }
    }
}

#[derive(Args, Clone)]
struct SourceArgs {
    /// street graph JSON, needed by mrwp and mgm
    #[arg(long)]
    graph: Option<PathBuf>,
    /// trace CSV, needed by playback
    #[arg(long)]
    traces: Option<PathBuf>,
    /// user dwell time range, s
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
    lifetime: Option<Vec<f64>>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum, default_value_t = ModelArg::Rwp)]
    model: ModelArg,
    #[command(flatten)]
    src: SourceArgs,
    /// trainer config JSON; defaults derived from the scenario
    #[arg(long)]
    trainer: Option<PathBuf>,
    #[arg(long)]
    sample_budget: Option<u64>,
    #[arg(long)]
    rollout_length: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    checkpoint_interval: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, conflicts_with_all = ["weights", "max_sinr"])]
    checkpoint: Option<PathBuf>,
    #[arg(long, conflicts_with = "max_sinr")]
    weights: Option<PathBuf>,
    /// evaluate the Max-SINR baseline instead of a learned policy
    #[arg(long)]
    max_sinr: bool,
    /// sample actions instead of taking the most likely one
    #[arg(long)]
    stochastic: bool,
    #[arg(long, value_enum, default_value_t = ModelArg::Rwp)]
    model: ModelArg,
    #[command(flatten)]
    src: SourceArgs,
    #[arg(long, default_value_t = 600)]
    slots: u64,
    /// initial users; the middle of the scenario range when absent
    #[arg(long)]
    users: Option<usize>,
    /// also write every per-user slot record as JSON lines
    #[arg(long)]
    sample_log: Option<PathBuf>,
}

/// Forwards to a policy and appends each slot's records to a JSON-lines log.
struct Logged<'a, W: std::io::Write> {
    inner: &'a mut dyn AssociationPolicy,
    out: W,
    err: Option<dt_cellsim::Error>,
}

impl<W: std::io::Write> AssociationPolicy for Logged<'_, W> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn act(&mut self, env: &NetEnv) -> Vec<usize> {
        self.inner.act(env)
    }

    fn observe(&mut self, res: &StepResult) {
        if self.err.is_none() {
            self.err = write_sample_log(&res.records, &mut self.out).err();
        }
        self.inner.observe(res);
    }
}

#[derive(Args)]
struct TrajMetricsArgs {
    #[arg(long)]
    generated: PathBuf,
    #[arg(long)]
    real: PathBuf,
    /// heatmap resolution
    #[arg(long, default_value_t = 64)]
    grid: usize,
    /// EDR match threshold, m
    #[arg(long, default_value_t = dt_cellsim::eval::EDR_DEFAULT_TAU)]
    tau: f64,
    #[arg(long, default_value_t = 128)]
    projections: usize,
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Rate CDF of an EvalReport as CSV `rate,p`.
    Cdf {
        #[arg(long)]
        report: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = configure_threads().and_then(|_| run(cli)) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("DT_CELLSIM_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("DT_CELLSIM_THREADS={v:?} is not a count"))?;
        if n == 0 {
            bail!("DT_CELLSIM_THREADS must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let c = cli.common;
    match cli.cmd {
        Cmd::Scenario(ScenarioCmd::Init { scale }) => scenario_init(&c, scale),
        Cmd::Scenario(ScenarioCmd::Check) => scenario_check(&c),
        Cmd::Map(MapCmd::Synth { block, drop }) => map_synth(&c, block, drop),
        Cmd::Mobility(MobilityCmd::Gen(a)) => mobility_gen(&c, a),
        Cmd::Train(a) => train(&c, a),
        Cmd::Eval(a) => eval(&c, a),
        Cmd::TrajMetrics(a) => traj_metrics(&c, a),
        Cmd::Report(ReportCmd::Cdf { report }) => report_cdf(&c, &report),
    }
}

fn out_path(c: &Common) -> Result<&Path> {
    c.out.as_deref().ok_or_else(|| anyhow!("--out is required"))
}

fn load_scenario(c: &Common) -> Result<ScenarioConfig> {
    match &c.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ScenarioConfig::from_json(&text).with_context(|| format!("invalid scenario config {}", p.display()))
        }
        None => Ok(ScenarioConfig::desk()),
    }
}

fn scenario_init(c: &Common, scale: Scale) -> Result<()> {
    let mut sc = match scale {
        Scale::Desk => ScenarioConfig::desk(),
        Scale::Full => ScenarioConfig::full(),
    };
    sc.master_seed = c.seed;
    sc.validate()?;
    let out = out_path(c)?;
    let text = sc.to_json()?;
    fs::write(out, &text).with_context(|| format!("writing {}", out.display()))?;
    ScenarioConfig::from_json(&fs::read_to_string(out)?).context("written config does not parse back")?;
    let mut m = RunManifest::start("scenario init", c.seed, json!({ "scenario": sc }));
    m.add(out);
    m.finish(&manifest::beside(out))
}

fn scenario_check(c: &Common) -> Result<()> {
    let sc = load_scenario(c)?;
    let text = sc.to_json()?;
    match &c.out {
        Some(p) => fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn map_synth(c: &Common, block: f64, drop: f64) -> Result<()> {
    let sc = load_scenario(c)?;
    let dir = out_path(c)?;
    fs::create_dir_all(dir)?;
    let weights = vec![1.0; NUM_ROAD_CLASSES];
    let g = synth_street_graph(c.seed, sc.area, block, drop, &weights)?;
    let gpath = dir.join("graph.json");
    g.save_json(&gpath)?;
    StreetGraph::load_json(&gpath).context("written graph does not validate")?;
    let raster = rasterize_graph(&g, sc.bbox(), NUM_ROAD_CLASSES);
    let pngs = raster.save_pngs(dir.join("map"))?;
    let cfg = json!({ "area": sc.area, "block": block, "drop": drop, "class_weights": weights });
    let mut m = RunManifest::start("map synth", c.seed, cfg);
    m.add(&gpath);
    for p in &pngs {
        m.add(p);
    }
    m.finish(&dir.join("manifest.json"))
}

fn mobility_source(model: ModelArg, src: &SourceArgs, area: BBox) -> Result<MobilitySource> {
    let mm = MobilityModel::from_name(model.name()).expect("every CLI model has a name");
    let mut s = MobilitySource::new(mm, area);
    if let Some(g) = &src.graph {
        s = s.with_graph(Arc::new(StreetGraph::load_json(g).with_context(|| format!("loading {}", g.display()))?));
    }
    if let Some(t) = &src.traces {
        s = s.with_traces(Arc::new(load_traces(t).with_context(|| format!("loading {}", t.display()))?));
    }
    if let Some(l) = &src.lifetime {
        s.lifetime = (l[0], l[1]);
    }
    if matches!(model, ModelArg::Mrwp | ModelArg::Mgm) && s.graph.is_none() {
        bail!("{} mobility needs --graph", model.name());
    }
    if model == ModelArg::Playback && s.traces.is_none() {
        bail!("playback mobility needs --traces");
    }
    s.validate()?;
    Ok(s)
}

fn source_json(model: ModelArg, src: &SourceArgs, s: &MobilitySource) -> serde_json::Value {
    json!({
        "model": s.model,
        "name": model.name(),
        "graph": src.graph.as_ref().map(|p| manifest::file_digest(p).ok()),
        "traces": src.traces.as_ref().map(|p| manifest::file_digest(p).ok()),
        "lifetime": s.lifetime,
        "dt": s.dt,
    })
}

fn mobility_gen(c: &Common, a: MobilityGenArgs) -> Result<()> {
    let sc = load_scenario(c)?;
    let src = mobility_source(a.model, &a.src, sc.bbox())?;
    let mut rng = stream_rng(c.seed, Stream::Mobility, 0);
    let trajs: Vec<Trajectory> = (0..a.count).map(|_| src.generate(&mut rng)).collect();
    let out = out_path(c)?;
    save_traces(&trajs, out)?;
    let back = load_traces(out).context("written traces do not validate")?;
    if back.len() != trajs.len() {
        bail!("wrote {} trajectories but read back {}", trajs.len(), back.len());
    }
    let cfg = json!({ "scenario": sc, "source": source_json(a.model, &a.src, &src), "count": a.count });
    let mut m = RunManifest::start("mobility gen", c.seed, cfg);
    m.add(out);
    m.finish(&manifest::beside(out))
}

fn train(c: &Common, a: TrainArgs) -> Result<()> {
    let sc = load_scenario(c)?;
    let src = mobility_source(a.model, &a.src, sc.bbox())?;
    let mut cfg = match &a.trainer {
        Some(p) => serde_json::from_str::<TrainerConfig>(&fs::read_to_string(p)?)
            .with_context(|| format!("invalid trainer config {}", p.display()))?,
        None => TrainerConfig::for_scenario(&sc),
    };
    cfg.seed = c.seed;
    if let Some(k) = c.parallel_envs {
        cfg.parallel_envs = k;
        if cfg.initial_counts.as_ref().is_some_and(|v| v.len() != k) {
            cfg.initial_counts = None;
        }
    }
    if let Some(b) = a.sample_budget {
        cfg.sample_budget = b;
    }
    if let Some(r) = a.rollout_length {
        cfg.rollout_length = r;
    }
    if let Some(h) = a.hidden {
        cfg.hidden = h;
    }
    if let Some(i) = a.checkpoint_interval {
        cfg.checkpoint_interval = i;
    }
    cfg.validate(&sc)?;
    let dir = out_path(c)?;
    fs::create_dir_all(dir)?;
    let manifest_cfg = json!({ "scenario": sc, "trainer": cfg, "source": source_json(a.model, &a.src, &src) });
    let mut m = RunManifest::start("train", c.seed, manifest_cfg);

    let mut t = Trainer::new(cfg, sc, src)?;
    let updates = dir.join("updates.jsonl");
    let mut log = std::io::BufWriter::new(fs::File::create(&updates).with_context(|| format!("writing {}", updates.display()))?);
    let mut log_err: Option<std::io::Error> = None;
    let ckpts = t.run(Some(dir), |p, st| {
        eprintln!(
            "round {:>5}  samples {:>9}  utility {:.4}  reward {:.4}  entropy {:.3}  kl {:.5}",
            p.round, p.samples_seen, p.mean_utility, p.mean_reward, p.entropy, p.kl
        );
        if log_err.is_none() {
            let line = json!({ "round": p.round, "samples_seen": p.samples_seen, "mean_utility": p.mean_utility,
                "mean_reward": p.mean_reward, "update": st });
            log_err = writeln!(log, "{line}").err();
        }
    })?;
    if let Some(e) = log_err {
        return Err(e).with_context(|| format!("writing {}", updates.display()));
    }
    log.flush()?;
    drop(log);
    let n_lines = fs::read_to_string(&updates)?.lines().map(serde_json::from_str::<serde_json::Value>).collect::<Result<Vec<_>, _>>()
        .context("written update log does not parse back")?.len();
    if n_lines as u64 != t.round() {
        bail!("update log has {n_lines} lines for {} rounds", t.round());
    }
    let curve = dir.join("curve.csv");
    write_curve(t.curve(), fs::File::create(&curve)?)?;
    let weights = dir.join("policy.dtcw");
    save_weights(t.params(), &weights)?;
    load_weights(&weights).context("written weights do not read back")?;
    for p in &ckpts {
        read_checkpoint_info(p).with_context(|| format!("written checkpoint {} does not read back", p.display()))?;
        m.add(p);
    }
    m.add(&curve);
    m.add(&updates);
    m.add(&weights);
    m.finish(&dir.join("manifest.json"))
}

fn eval(c: &Common, a: EvalArgs) -> Result<()> {
    let (sc, params): (ScenarioConfig, Option<PolicyParams>) = match (&a.checkpoint, &a.weights, a.max_sinr) {
        (Some(p), _, _) => {
            let info = read_checkpoint_info(p).with_context(|| format!("loading {}", p.display()))?;
            (info.scenario, Some(info.params))
        }
        (None, Some(w), _) => (load_scenario(c)?, Some(load_weights(w).with_context(|| format!("loading {}", w.display()))?)),
        (None, None, true) => (load_scenario(c)?, None),
        (None, None, false) => bail!("give --checkpoint, --weights or --max-sinr"),
    };
    if let Some(p) = &params {
        if p.shape().actions != sc.num_base_stations() {
            bail!("policy has {} actions but the scenario has {} base stations", p.shape().actions, sc.num_base_stations());
        }
    }
    let src = mobility_source(a.model, &a.src, sc.bbox())?;
    let users = a.users.unwrap_or((sc.user_count_range.0 + sc.user_count_range.1) / 2);
    let sc = Arc::new(sc);
    let ch = Arc::new(Channel::new(&sc));
    let env_cfg = EnvConfig::for_scenario(&sc);
    let mut env = NetEnv::new(sc.clone(), ch, src.clone(), env_cfg, c.seed, users)?;
    let greedy = !a.stochastic;
    let mut policy: Box<dyn AssociationPolicy> = match params {
        Some(p) => Box::new(Drl::new(p, sc.mask_top_n, greedy, stream_rng(c.seed, Stream::Policy, 0))),
        None => Box::new(MaxSinr),
    };
    let out = out_path(c)?;
    let report = match &a.sample_log {
        Some(path) => {
            let file = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
            let mut logged = Logged { inner: policy.as_mut(), out: std::io::BufWriter::new(file), err: None };
            let report = evaluate_policy(&mut logged, &mut env, a.slots)?;
            if let Some(e) = logged.err {
                return Err(e).with_context(|| format!("writing {}", path.display()));
            }
            std::io::Write::flush(&mut logged.out)?;
            report
        }
        None => evaluate_policy(policy.as_mut(), &mut env, a.slots)?,
    };
    fs::write(out, serde_json::to_string_pretty(&report)?)?;
    let _: EvalReport = serde_json::from_str(&fs::read_to_string(out)?).context("written report does not parse back")?;
    let policy_desc = match (&a.checkpoint, &a.weights) {
        (Some(p), _) => json!({ "checkpoint": manifest::file_digest(p)?, "greedy": greedy }),
        (None, Some(w)) => json!({ "weights": manifest::file_digest(w)?, "greedy": greedy }),
        _ => json!("max-sinr"),
    };
    let cfg = json!({
        "scenario": *sc,
        "source": source_json(a.model, &a.src, &src),
        "policy": policy_desc,
        "slots": a.slots,
        "users": users,
    });
    let mut m = RunManifest::start("eval", c.seed, cfg);
    m.add(out);
    if let Some(p) = &a.sample_log {
        check_sample_log(p, report.samples)?;
        m.add(p);
    }
    m.finish(&manifest::beside(out))
}

fn check_sample_log(path: &Path, samples: u64) -> Result<()> {
    let text = fs::read_to_string(path)?;
    let mut n = 0u64;
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).with_context(|| format!("bad line in {}", path.display()))?;
        for k in ["slot", "user", "action", "reward", "sinr_serving", "load_serving", "t_ho"] {
            if v.get(k).is_none() {
                bail!("{} line {} lacks `{k}`", path.display(), n + 1);
            }
        }
        n += 1;
    }
    if n != samples {
        bail!("{} has {n} records, expected {samples}", path.display());
    }
    Ok(())
}

/// Smallest box holding every point of both sets, padded to a square
/// cell size so empty extents do not divide by zero.
fn union_bbox(sets: &[&[Trajectory]]) -> BBox {
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for t in sets.iter().flat_map(|s| s.iter()) {
        for p in t.positions() {
            b[0] = b[0].min(p.x);
            b[1] = b[1].min(p.y);
            b[2] = b[2].max(p.x);
            b[3] = b[3].max(p.y);
        }
    }
    let pad = 1e-6 * (b[2] - b[0]).max(b[3] - b[1]).max(1.0);
    BBox {
        x0: b[0] - pad,
        y0: b[1] - pad,
        x1: b[2] + pad,
        y1: b[3] + pad,
    }
}

fn traj_metrics(c: &Common, a: TrajMetricsArgs) -> Result<()> {
    let gen = load_traces(&a.generated).with_context(|| format!("loading {}", a.generated.display()))?;
    let real = load_traces(&a.real).with_context(|| format!("loading {}", a.real.display()))?;
    if gen.is_empty() || real.is_empty() {
        bail!("both trace sets need at least one trajectory");
    }
    let bbox = union_bbox(&[&gen, &real]);
    let hg = heatmap(&gen, a.grid, bbox)?;
    let hr = heatmap(&real, a.grid, bbox)?;
    let mut rng = stream_rng(c.seed, Stream::Projection, 0);
    let rows = [
        ("edr", min_match_score(&gen, &real, |x, y| edr(x, y, a.tau) as f64)),
        ("dtw", min_match_score(&gen, &real, dtw)),
        ("cosine", cosine_similarity(&hg, &hr)?),
        ("swd", sliced_wasserstein(&hg, &hr, a.projections, &mut rng)?),
    ];
    let mut text = String::from("metric,value\n");
    for (k, v) in rows {
        text.push_str(&format!("{k},{v}\n"));
    }
    let out = out_path(c)?;
    fs::write(out, text)?;
    let cfg = json!({
        "generated": manifest::file_digest(&a.generated)?,
        "real": manifest::file_digest(&a.real)?,
        "grid": a.grid,
        "tau": a.tau,
        "projections": a.projections,
    });
    let mut m = RunManifest::start("traj-metrics", c.seed, cfg);
    m.add(out);
    m.finish(&manifest::beside(out))
}

fn report_cdf(c: &Common, report: &Path) -> Result<()> {
    let r: EvalReport = serde_json::from_str(&fs::read_to_string(report).with_context(|| format!("reading {}", report.display()))?)
        .with_context(|| format!("{} is not an EvalReport", report.display()))?;
    if r.cdf.windows(2).any(|w| w[1].0 < w[0].0 || w[1].1 < w[0].1) {
        bail!("{} has a non-monotone CDF", report.display());
    }
    let mut text = String::from("rate,p\n");
    for (x, p) in &r.cdf {
        text.push_str(&format!("{x},{p}\n"));
    }
    let out = out_path(c)?;
    fs::write(out, text)?;
    let mut m = RunManifest::start("report cdf", c.seed, json!({ "report": manifest::file_digest(report)? }));
    m.add(out);
    m.finish(&manifest::beside(out))
}
