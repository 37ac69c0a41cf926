use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use autobct::controller::{self, RunOutcome, Strategy};
use autobct::valuemap::{build_cloud, build_value_map, load_map, save_map, ValueMap};
use autobct::{Error, Result};
use serde::Serialize;

use crate::config::RunConfig;

fn prepare_output(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir();
    fs::create_dir_all(&dir)?;
    write_json(&dir.join("effective_config.json"), cfg)?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct BuildReport<'a> {
    map_path: PathBuf,
    cloud_size: usize,
    truth_count: usize,
    depth: usize,
    levels: &'a [autobct::valuemap::LevelReport],
    monotone_level_means: bool,
    seconds: f64,
}

pub fn build_map(cfg: &RunConfig) -> Result<()> {
    let dir = prepare_output(cfg)?;
    let problem = cfg.problem();
    let started = Instant::now();
    let cloud_cfg = cfg.build.cloud.cloud_config(problem)?;
    let cloud = build_cloud(&cloud_cfg, &problem.basis, &problem.noise, cfg.seed)?;
    eprintln!("cloud: {} states ({} truths)", cloud.len(), cloud.truth_count);
    let plan = cfg.build.plan.plan(problem.dim(), cfg.seed)?;
    let map = build_value_map(
        &cloud,
        cfg.build.depth,
        problem.gamma,
        &plan,
        &problem.basis,
        &problem.noise,
        cfg.qfit(),
        &cfg.build.vfit,
    )?;
    let map_path = dir.join("map.json");
    save_map(&map, &map_path)?;
    let reports = map.reports();
    let monotone = reports.windows(2).all(|w| w[1].mean_target >= w[0].mean_target);
    let report = BuildReport {
        map_path: map_path.clone(),
        cloud_size: cloud.len(),
        truth_count: cloud.truth_count,
        depth: map.depth(),
        levels: reports,
        monotone_level_means: monotone,
        seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&dir.join("build_report.json"), &report)?;
    for r in reports {
        println!(
            "level {}: mean {:.6} min {:.6} max {:.6} se {:.2e} fit mse {:.2e} ({:.1}s)",
            r.level, r.mean_target, r.min_target, r.max_target, r.mean_target_se, r.fit_mse, r.seconds
        );
    }
    println!("map written to {}", map_path.display());
    Ok(())
}

#[derive(Serialize)]
struct RunReport<'a> {
    summary: String,
    outcome: &'a RunOutcome,
}

enum Mode<'a> {
    Map(&'a ValueMap),
    Otf,
}

fn one_run(cfg: &RunConfig, mode: &Mode<'_>, seed: u64, live: Option<&mut dyn Write>) -> Result<RunOutcome> {
    let problem = cfg.problem();
    let mut trainer = cfg.trainer()?.start(problem, seed)?;
    let p = problem.dim();
    let (plan, first) = match mode {
        Mode::Map(_) => (cfg.run_plan().plan(p, seed)?, None),
        Mode::Otf => {
            let o = cfg
                .otf
                .as_ref()
                .ok_or_else(|| Error::Config("missing field `otf`".into()))?;
            let first = o.plan_first.as_ref().map(|pf| pf.plan(p, seed)).transpose()?;
            (o.plan.plan(p, seed)?, first)
        }
    };
    let strategy = match mode {
        Mode::Map(m) if cfg.exact => Strategy::Exact(m),
        Mode::Map(m) => Strategy::Relaxed(Some(m)),
        Mode::Otf => Strategy::Otf {
            depth: cfg.otf.as_ref().map_or(1, |o| o.depth),
            plan_first: first.as_ref(),
        },
    };
    let settings = cfg.settings(plan);
    let mut sink = live;
    let mut observer = |row: &controller::TraceRow| {
        if let Some(w) = sink.as_mut() {
            let _ = writeln!(w, "{}", serde_json::to_string(row).expect("rows serialise"));
            let _ = w.flush();
        }
    };
    let outcome = controller::run(problem, strategy, trainer.as_mut(), &settings, &mut observer);
    trainer.shutdown()?;
    outcome
}

fn finish_run(dir: &Path, outcome: &RunOutcome) -> Result<()> {
    fs::write(dir.join("trace.csv"), outcome.to_csv())?;
    write_json(
        &dir.join("run_report.json"),
        &RunReport {
            summary: outcome.summary(),
            outcome,
        },
    )?;
    println!("{}", outcome.summary());
    if let Some(f) = &outcome.failure {
        eprintln!("trainer failure: {f}");
    }
    Ok(())
}

fn check_target(cfg: &RunConfig) -> Result<()> {
    match (&cfg.map_path, &cfg.otf) {
        (Some(_), Some(_)) => Err(Error::Config("set exactly one of `map_path` and `otf`, not both".into())),
        (None, None) => Err(Error::Config("set exactly one of `map_path` and `otf`".into())),
        _ => Ok(()),
    }
}

fn load_checked_map(cfg: &RunConfig) -> Result<ValueMap> {
    let path = cfg.map_path.as_ref().expect("checked by caller");
    let map = load_map(path)?;
    map.check_compatible(&cfg.problem().basis, cfg.problem().gamma, cfg.allow_gamma_override)?;
    Ok(map)
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    check_target(cfg)?;
    if cfg.map_path.is_none() {
        return Err(Error::Config("`run` needs `map_path`; use `otf` for map-free runs".into()));
    }
    let map = load_checked_map(cfg)?;
    let dir = prepare_output(cfg)?;
    let mut live = fs::File::create(dir.join("trace.jsonl"))?;
    let outcome = one_run(cfg, &Mode::Map(&map), cfg.seed, Some(&mut live))?;
    finish_run(&dir, &outcome)
}

pub fn otf(cfg: &RunConfig) -> Result<()> {
    check_target(cfg)?;
    if cfg.otf.is_none() {
        return Err(Error::Config("`otf` needs the `otf` settings".into()));
    }
    let dir = prepare_output(cfg)?;
    let mut live = fs::File::create(dir.join("trace.jsonl"))?;
    let outcome = one_run(cfg, &Mode::Otf, cfg.seed, Some(&mut live))?;
    finish_run(&dir, &outcome)
}

pub fn inspect(path: &Path) -> Result<()> {
    let map = load_map(path)?;
    let md = &map.metadata;
    println!("{}", md.descriptor());
    println!("gamma: {}", md.gamma);
    println!("controls (p): {}", md.dim_control);
    println!("levels (N): {}", md.depth);
    println!("noise: sigma_h={} sigma_t={}", md.noise.sigma_h, md.noise.sigma_t);
    println!(
        "plan: {} grid points, {} samples, seed {}",
        md.plan.grid.len(),
        md.plan.n_samples,
        md.plan.seed
    );
    let c = &md.cloud.config;
    println!(
        "cloud: {} states ({} truths), seed {}, n_c={} K={} mean_sd={} scale={:?}",
        md.cloud_size, md.truth_count, md.cloud.seed, c.n_c, c.k, c.mean_sd, c.covariance_scale
    );
    if let Some(e) = &c.enrichment {
        println!(
            "enrichment: {} shapes, depth {}, {} grid controls",
            e.n_shapes,
            e.depth,
            e.grid.len()
        );
    }
    println!("level,mean,sd,min,max,mean_target_se");
    for n in 1..=map.depth() {
        let t = map.targets(n)?;
        let se = map.target_se(n)?;
        let k = t.len() as f64;
        let mean = t.iter().sum::<f64>() / k;
        let sd = (t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0)).sqrt();
        let lo = t.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!("{n},{mean:.6},{sd:.6},{lo:.6},{hi:.6},{:.3e}", se.iter().sum::<f64>() / k);
    }
    Ok(())
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let k = v.len() as f64;
    let m = v.iter().sum::<f64>() / k;
    let s = if v.len() > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, s)
}

#[derive(Serialize)]
struct Episode {
    seed: u64,
    epochs: usize,
    stop_reason: String,
    final_h: f64,
    posterior_score: f64,
    total_cost: f64,
    u: Vec<f64>,
}

#[derive(Serialize)]
struct Stat {
    mean: f64,
    sd: f64,
}

impl From<(f64, f64)> for Stat {
    fn from((mean, sd): (f64, f64)) -> Self {
        Stat { mean, sd }
    }
}

#[derive(Serialize)]
struct SimulateReport {
    episodes: Vec<Episode>,
    epochs: Stat,
    final_h: Stat,
    total_cost: Stat,
    controls: Vec<Stat>,
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    if !cfg.trainer()?.is_analytic() {
        return Err(Error::Config("`simulate` needs an analytic trainer".into()));
    }
    check_target(cfg)?;
    let map = cfg.map_path.as_ref().map(|_| load_checked_map(cfg)).transpose()?;
    let mode = match &map {
        Some(m) => Mode::Map(m),
        None => Mode::Otf,
    };
    let dir = prepare_output(cfg)?;
    let m = cfg.simulate.as_ref().map_or(20, |s| s.episodes);
    let mut episodes = Vec::with_capacity(m);
    for i in 0..m as u64 {
        let seed = cfg.seed.wrapping_add(i);
        let o = one_run(cfg, &mode, seed, None)?;
        let last = o.trace.rows.last();
        let term = o.trace.terminal.as_ref();
        episodes.push(Episode {
            seed,
            epochs: o.trace.epochs(),
            stop_reason: o.stop_reason.as_str().into(),
            final_h: last.map_or(f64::NAN, |r| r.h),
            posterior_score: term.map_or(f64::NAN, |t| t.h),
            total_cost: term.map_or(0.0, |t| t.cost),
            u: term.map_or_else(Vec::new, |t| t.u.clone()),
        });
    }
    let col = |f: &dyn Fn(&Episode) -> f64| -> Vec<f64> { episodes.iter().map(f).collect() };
    let p = cfg.problem().dim();
    let controls = (0..p)
        .map(|d| mean_sd(&col(&|e| e.u.get(d).copied().unwrap_or(f64::NAN))).into())
        .collect::<Vec<Stat>>();
    let report = SimulateReport {
        epochs: mean_sd(&col(&|e| e.epochs as f64)).into(),
        final_h: mean_sd(&col(&|e| e.final_h)).into(),
        total_cost: mean_sd(&col(&|e| e.total_cost)).into(),
        controls,
        episodes,
    };
    write_json(&dir.join("simulate_report.json"), &report)?;
    let mut csv = String::from("seed,epochs,stop_reason,final_h,posterior_score,total_cost");
    for d in 1..=p {
        csv.push_str(&format!(",u{d}"));
    }
    csv.push('\n');
    for e in &report.episodes {
        csv.push_str(&format!(
            "{},{},{},{},{},{}",
            e.seed, e.epochs, e.stop_reason, e.final_h, e.posterior_score, e.total_cost
        ));
        for u in &e.u {
            csv.push_str(&format!(",{u}"));
        }
        csv.push('\n');
    }
    fs::write(dir.join("episodes.csv"), csv)?;
    let fmt = |s: &Stat| format!("{:.3} ({:.3})", s.mean, s.sd);
    println!("episodes: {m}");
    println!("{:<16}{}", "epochs", fmt(&report.epochs));
    println!("{:<16}{}", "final h_n", fmt(&report.final_h));
    println!("{:<16}{}", "sum t", fmt(&report.total_cost));
    for (d, s) in report.controls.iter().enumerate() {
        println!("{:<16}{}", format!("u{}", d + 1), fmt(s));
    }
    Ok(())
}
