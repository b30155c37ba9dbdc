use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use rovertrack::bridge::Server;
use rovertrack::config::{ControllerKind, PolicyRef, RunConfig};
use rovertrack::env::{EpisodeLog, TrajectoryKind};
use rovertrack::learn::eval::{random_controller, Controller, ZeroController};
use rovertrack::learn::{self, evaluate, EvalSetup, Policy, PolicyArtifact, PolicyController, ProportionalController, TrainOptions};
use rovertrack::metrics::{MetricsSummary, Table};
use rovertrack::plot::{render_svg, PlotStyle};
use rovertrack::presets::RemotePreset;
use rovertrack::terrain::generate_terrain;
use rovertrack::vecsim::Regime;
use rovertrack::{Error, FilterSpec};

use crate::Common;

/// 2 for bad input (config, missing files), 3 for runtime failures.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 2,
                e if e.is_config() => 2,
                _ => 3,
            };
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            if io.kind() == std::io::ErrorKind::NotFound {
                return 2;
            }
        }
    }
    3
}

fn load_config(c: &Common) -> Result<RunConfig> {
    match &c.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_resolved(cfg: &RunConfig, dir: &Path) -> Result<()> {
    cfg.validate()?;
    cfg.save(dir.join("config.toml"))?;
    Ok(())
}

pub fn gen_terrain(c: &Common, seed: Option<u64>, count: u64, pgm: bool) -> Result<()> {
    let mut cfg = load_config(c)?;
    if let Some(s) = seed {
        cfg.regime.terrain.seed = s;
    }
    let dir = c.out.join("terrain");
    prepare_dir(&dir)?;
    write_resolved(&cfg, &dir)?;
    for k in 0..count {
        let seed = cfg.regime.terrain.seed.wrapping_add(k);
        let t = generate_terrain(&cfg.regime.terrain.with_seed(seed))?;
        let path = dir.join(format!("terrain_{seed}.rthf"));
        t.heightfield.write_binary(&path, seed)?;
        if pgm {
            t.heightfield.write_pgm(&path.with_extension("pgm"))?;
        }
        println!(
            "{} checksum {:016x} craters {} boulders {}",
            path.display(),
            t.checksum(),
            t.craters.craters.len(),
            t.boulders.len()
        );
    }
    Ok(())
}

pub struct TrainOverrides {
    pub regime: Option<Regime>,
    pub steps: Option<u64>,
    pub seed: Option<u64>,
    pub n_envs: Option<usize>,
    pub workers: Option<usize>,
    pub no_randomization: bool,
    pub checkpoint_every: u64,
}

pub fn train(c: &Common, o: TrainOverrides) -> Result<()> {
    let mut cfg = load_config(c)?;
    if let Some(r) = o.regime {
        cfg.regime.regime = r;
    }
    if let Some(s) = o.steps {
        cfg.ppo.total_steps = s;
    }
    if let Some(s) = o.seed {
        cfg.ppo.seed = s;
        cfg.regime.master_seed = s;
    }
    if let Some(n) = o.n_envs {
        cfg.regime.n_envs = n;
    }
    if let Some(w) = o.workers {
        cfg.regime.workers = w;
    }
    if o.no_randomization {
        cfg.regime.env.randomization = rovertrack::env::Randomization::off();
    }
    prepare_dir(&c.out)?;
    write_resolved(&cfg, &c.out)?;
    let opts = TrainOptions {
        checkpoint: Some(c.out.join("policy.rtp")),
        checkpoint_every: o.checkpoint_every,
        curve_csv: Some(c.out.join("curve.csv")),
    };
    let t0 = std::time::Instant::now();
    let outcome = learn::train(&cfg.ppo, &cfg.regime, &opts)?;
    let last = outcome.curve.last();
    println!(
        "trained {} updates in {:.0} s; final mean return {}; policy written to {}",
        outcome.updates.len(),
        t0.elapsed().as_secs_f64(),
        last.map_or("n/a".into(), |r| format!("{:.2}", r.mean_return)),
        c.out.join("policy.rtp").display()
    );
    Ok(())
}

/// A loaded variant ready to instantiate per episode.
struct Variant {
    name: String,
    kind: ControllerKind,
    policy: Option<Arc<Policy<f32>>>,
}

impl Variant {
    fn load(r: &PolicyRef) -> Result<Self> {
        let policy = match (&r.controller, &r.path) {
            (ControllerKind::Policy, Some(p)) => Some(Arc::new(
                PolicyArtifact::read(p)
                    .and_then(|a| a.to_policy())
                    .with_context(|| format!("loading policy artifact {}", p.display()))?,
            )),
            (ControllerKind::Policy, None) => bail!(Error::config(format!("policy '{}' has no path", r.name))),
            _ => None,
        };
        Ok(Self {
            name: r.name.clone(),
            kind: r.controller,
            policy,
        })
    }

    fn controller(&self, speed: f64, max_lin: f64, seed: u64, episode: usize) -> Box<dyn Controller> {
        match self.kind {
            ControllerKind::Policy => Box::new(PolicyController(self.policy.clone().expect("loaded"))),
            ControllerKind::Proportional => Box::new(ProportionalController::new(speed, max_lin)),
            ControllerKind::Zero => Box::new(ZeroController),
            ControllerKind::Random => Box::new(random_controller(seed, episode)),
        }
    }
}

struct Cell {
    summary: MetricsSummary,
    first_log: EpisodeLog,
}

fn run_cell(cfg: &RunConfig, v: &Variant, terrains: &[Arc<rovertrack::Terrain>], kind: TrajectoryKind, speed: f64, filter: FilterSpec) -> Result<Cell> {
    let setup = EvalSetup {
        kind,
        speed,
        filter,
        episodes: cfg.eval.episodes,
        laps: cfg.eval.laps,
        seed: cfg.eval.seed,
    };
    let max_lin = cfg.regime.env.dynamics.max_lin_speed;
    let out = evaluate(&cfg.regime.env, terrains, &setup, |e| v.controller(speed, max_lin, cfg.eval.seed, e))?;
    Ok(Cell {
        summary: out.summary,
        first_log: out.logs.into_iter().next().expect("one episode"),
    })
}

fn speed_dir(speed: f64) -> String {
    format!("{:.0}cms", speed * 100.0)
}

#[allow(clippy::too_many_arguments)]
pub fn eval(
    c: &Common,
    policy: Option<PathBuf>,
    controller: Option<String>,
    trajectory: TrajectoryKind,
    speed: f64,
    filter: &str,
    episodes: Option<usize>,
) -> Result<()> {
    let mut cfg = load_config(c)?;
    let filter = FilterSpec::from_short_name(filter)?;
    let r = match controller {
        Some(name) => PolicyRef::parse(&name)?,
        None => PolicyRef {
            name: "policy".into(),
            controller: ControllerKind::Policy,
            path: Some(policy.unwrap_or_else(|| c.out.join("policy.rtp"))),
        },
    };
    cfg.eval.policies = vec![r.clone()];
    cfg.eval.trajectories = vec![trajectory];
    cfg.eval.speeds = vec![speed];
    cfg.eval.filters = vec![filter];
    if let Some(e) = episodes {
        cfg.eval.episodes = e;
    }
    cfg.validate()?;
    let v = Variant::load(&r)?;
    let terrains = cfg.eval.heldout_terrains(&cfg.regime.terrain)?;
    let dir = c.out.join(format!("eval-{}-{}-{}-{}", r.name, trajectory, speed_dir(speed), filter.short_name()));
    prepare_dir(&dir)?;
    write_resolved(&cfg, &dir)?;
    let cell = run_cell(&cfg, &v, &terrains, trajectory, speed, filter)?;
    fs::write(dir.join("summary.json"), cell.summary.to_json())?;
    cell.first_log.write_csv(&dir.join("episode_0.csv"))?;
    println!("{}", cell.summary.to_json());
    println!("written to {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct JobRecord<'a> {
    job: usize,
    policy: &'a str,
    trajectory: TrajectoryKind,
    speed: f64,
    filter: FilterSpec,
    summary: MetricsSummary,
}

fn fmt_ate(m: &MetricsSummary) -> String {
    format!("{:.1} cm / {:.1}°", m.ate_pos * 100.0, m.ate_yaw.to_degrees())
}

pub fn sweep(
    c: &Common,
    policies: &[String],
    trajectories: Vec<TrajectoryKind>,
    speeds: Vec<f64>,
    filters: &[String],
    episodes: Option<usize>,
) -> Result<()> {
    let mut cfg = load_config(c)?;
    if !policies.is_empty() {
        cfg.eval.policies = policies.iter().map(|p| PolicyRef::parse(p)).collect::<rovertrack::Result<_>>()?;
    }
    if cfg.eval.policies.is_empty() {
        bail!(Error::config("sweep needs at least one --policy NAME=PATH (or eval.policies in the config)"));
    }
    if !trajectories.is_empty() {
        cfg.eval.trajectories = trajectories;
    }
    if !speeds.is_empty() {
        cfg.eval.speeds = speeds;
    }
    if !filters.is_empty() {
        cfg.eval.filters = filters.iter().map(|f| FilterSpec::from_short_name(f)).collect::<rovertrack::Result<_>>()?;
    }
    if let Some(e) = episodes {
        cfg.eval.episodes = e;
    }
    cfg.validate()?;
    let variants = cfg.eval.policies.iter().map(Variant::load).collect::<Result<Vec<_>>>()?;
    let terrains = cfg.eval.heldout_terrains(&cfg.regime.terrain)?;
    let dir = c.out.join("sweep");
    prepare_dir(&dir)?;
    write_resolved(&cfg, &dir)?;

    let mut jobs = Vec::new();
    for v in &variants {
        for &k in &cfg.eval.trajectories {
            for &s in &cfg.eval.speeds {
                for &f in &cfg.eval.filters {
                    jobs.push((v, k, s, f));
                }
            }
        }
    }
    let mut records = Vec::new();
    for (id, &(v, k, s, f)) in jobs.iter().enumerate() {
        log::info!("job {id}/{}: {} {k} {} {f}", jobs.len(), v.name, speed_dir(s));
        let cell = run_cell(&cfg, v, &terrains, k, s, f)?;
        let job_dir = dir.join(format!("job-{id:03}"));
        prepare_dir(&job_dir)?;
        cell.first_log.write_csv(&job_dir.join("episode_0.csv"))?;
        fs::write(job_dir.join("summary.json"), cell.summary.to_json())?;
        records.push(JobRecord {
            job: id,
            policy: &v.name,
            trajectory: k,
            speed: s,
            filter: f,
            summary: cell.summary,
        });
    }
    // jerk relative to the unfiltered run of the same policy, path and speed
    let baselines: Vec<Option<f64>> = records
        .iter()
        .map(|r| {
            records
                .iter()
                .find(|b| b.policy == r.policy && b.trajectory == r.trajectory && b.speed == r.speed && b.filter == FilterSpec::None)
                .map(|b| b.summary.jerk_abs)
        })
        .collect();
    for (r, b) in records.iter_mut().zip(baselines) {
        if let Some(b) = b {
            r.summary = r.summary.with_baseline(b);
        }
    }

    let find = |p: &str, k: TrajectoryKind, s: f64, f: FilterSpec| {
        records
            .iter()
            .find(|r| r.policy == p && r.trajectory == k && r.speed == s && r.filter == f)
            .map(|r| r.summary)
    };
    let row_label = |s: f64| format!("{:.0} cm/s", s * 100.0);
    let mut text = String::new();
    for &k in &cfg.eval.trajectories {
        for v in &variants {
            let cols: Vec<String> = cfg.eval.filters.iter().map(|f| f.label().to_string()).collect();
            let mut ate = Table {
                title: format!("ATE, {} on {k}", v.name),
                corner: "speed".into(),
                columns: cols.clone(),
                rows: Vec::new(),
            };
            let mut jerk = Table {
                title: format!("relative jerk, {} on {k}", v.name),
                corner: "speed".into(),
                columns: cols,
                rows: Vec::new(),
            };
            for &s in &cfg.eval.speeds {
                let cells: Vec<MetricsSummary> = cfg.eval.filters.iter().filter_map(|&f| find(&v.name, k, s, f)).collect();
                ate.rows.push((row_label(s), cells.iter().map(fmt_ate).collect()));
                jerk.rows.push((
                    row_label(s),
                    cells
                        .iter()
                        .map(|m| m.jerk_rel.map_or("n/a".into(), |j| format!("{j:.0}%")))
                        .collect(),
                ));
            }
            text.push_str(&ate.render());
            text.push('\n');
            text.push_str(&jerk.render());
            text.push('\n');
        }
        if variants.len() > 1 {
            let f0 = cfg.eval.filters[0];
            let mut t = Table {
                title: format!("ATE by policy on {k} ({})", f0.label()),
                corner: "speed".into(),
                columns: variants.iter().map(|v| v.name.clone()).collect(),
                rows: Vec::new(),
            };
            for &s in &cfg.eval.speeds {
                t.rows.push((
                    row_label(s),
                    variants
                        .iter()
                        .map(|v| find(&v.name, k, s, f0).as_ref().map_or("n/a".into(), fmt_ate))
                        .collect(),
                ));
            }
            text.push_str(&t.render());
            text.push('\n');
        }
    }
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&records)?)?;
    fs::write(dir.join("tables.txt"), &text)?;
    print!("{text}");
    Ok(())
}

pub fn serve(c: &Common, listen: &str, sessions: Option<usize>) -> Result<()> {
    let cfg = load_config(c)?;
    let server = Server::bind(listen, cfg.regime).with_context(|| format!("binding {listen}"))?;
    log::info!("listening on {}", server.local_addr()?);
    server.run(sessions)?;
    Ok(())
}

pub fn plot(c: &Common, log: &Path, svg: Option<PathBuf>, terrain_seed: Option<u64>) -> Result<()> {
    let cfg = load_config(c)?;
    let episode = EpisodeLog::read_csv(log).with_context(|| format!("reading {}", log.display()))?;
    let terrain = terrain_seed
        .map(|s| generate_terrain(&cfg.regime.terrain.with_seed(s)))
        .transpose()?;
    let title = log.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let out = svg.unwrap_or_else(|| log.with_extension("svg"));
    fs::write(&out, render_svg(&episode, terrain.as_ref(), &title, &PlotStyle::default()))?;
    println!("{}", out.display());
    Ok(())
}

pub fn preset(name: &str) -> Result<()> {
    print!("{}", RemotePreset::by_name(name)?.to_toml());
    Ok(())
}
