use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use log::info;
use orpf::admittance::build_ybus;
use orpf::netmodel::profiles::Profiles;
use orpf::netmodel::{load_network, FORMAT_VERSION};
use orpf::objectives::{tune_weights as derive_alphas, ObjectiveSpec, WeightVector, Weighted};
use orpf::optimize::initial_point;
use orpf::pipeline::report::{
    combined_box_stats, combined_taps, read_matrix_csv, write_combined_csv, write_report, write_taps_csv,
};
use orpf::pipeline::{run_combined as combined_run, run_interdependence, study_cases, CombinedResult, InterdependenceResult, PipelineConfig, Scenario};
use orpf::powerflow::solve_pf;
use orpf::solver::{KktResiduals, Status};
use orpf::taps::{optimize_with_taps, TapMode};
use serde::Serialize;

use crate::{read, Failure};

fn scenario(net: &Path, profiles: Option<&Path>) -> anyhow::Result<Scenario> {
    let network = load_network(net).with_context(|| format!("network {}", net.display()))?;
    let profiles = profiles
        .map(|p| Profiles::load(p).with_context(|| format!("profiles {}", p.display())))
        .transpose()?;
    Ok(Scenario::new(network, profiles)?)
}

fn print_json<T: Serialize>(v: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    serde_json::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Serialize)]
struct ValidateReport {
    ok: bool,
    network: String,
    buses: usize,
    lines: usize,
    trafos: usize,
    gens: usize,
    loads: usize,
    ext_grids: usize,
    /// Branch count after merging parallel branches.
    reduced_branches: usize,
    profile_steps: Option<usize>,
}

pub fn validate(net: &Path, profiles: Option<&Path>) -> anyhow::Result<()> {
    let sc = scenario(net, profiles)?;
    let n = &sc.network;
    print_json(&ValidateReport {
        ok: true,
        network: n.name.clone(),
        buses: n.buses.len(),
        lines: n.lines.len(),
        trafos: n.trafos.len(),
        gens: n.gens.len(),
        loads: n.loads.len(),
        ext_grids: n.ext_grids.len(),
        reduced_branches: sc.study.net.lines.len() + sc.study.net.trafos.len(),
        profile_steps: sc.profiles.as_ref().map(|p| p.steps),
    })
}

#[derive(Serialize)]
struct BusResult {
    id: String,
    vm_pu: f64,
    va_rad: f64,
}

#[derive(Serialize)]
struct BranchResult {
    id: String,
    p_from_mw: f64,
    q_from_mvar: f64,
    p_to_mw: f64,
    q_to_mvar: f64,
    i_serial_pu: f64,
}

#[derive(Serialize)]
struct PowerflowReport {
    format_version: u32,
    network: String,
    case: usize,
    iterations: usize,
    mismatch: f64,
    buses: Vec<BusResult>,
    branches: Vec<BranchResult>,
    ext_grids: BTreeMap<String, [f64; 2]>,
    losses_mw: f64,
    losses_mvar: f64,
}

pub fn powerflow(
    net: &Path,
    profiles: Option<&Path>,
    case: usize,
    dump_ybus: Option<&Path>,
    cfg: &PipelineConfig,
) -> anyhow::Result<()> {
    let sc = scenario(net, profiles)?;
    let pu = &sc.pu;
    let pu_case = pu.case(&sc.study_case(case)?);
    let op = initial_point(pu, &vec![None; pu.trafos.len()]);
    if let Some(path) = dump_ybus {
        let y = build_ybus(pu, &op.psi)?;
        let mut buf = Vec::new();
        y.write_csv(&mut buf)?;
        fs::write(path, buf).with_context(|| format!("cannot write {}", path.display()))?;
    }
    let pf = solve_pf(pu, &pu_case, &op, &cfg.optimize.powerflow)?;
    let s = pu.s_base;
    let losses = pf.losses();
    print_json(&PowerflowReport {
        format_version: FORMAT_VERSION,
        network: pu.name.clone(),
        case,
        iterations: pf.iterations,
        mismatch: pf.mismatch,
        buses: pu
            .buses
            .iter()
            .enumerate()
            .map(|(k, b)| BusResult {
                id: b.id.clone(),
                vm_pu: pf.vm[k],
                va_rad: pf.va[k],
            })
            .collect(),
        branches: pf
            .branches
            .iter()
            .map(|b| BranchResult {
                id: b.id.clone(),
                p_from_mw: b.s_from.re * s,
                q_from_mvar: b.s_from.im * s,
                p_to_mw: b.s_to.re * s,
                q_to_mvar: b.s_to.im * s,
                i_serial_pu: b.i_serial.norm(),
            })
            .collect(),
        ext_grids: pu
            .ext_grids
            .iter()
            .zip(&pf.s_e)
            .map(|(e, v)| (e.id.clone(), [v.re * s, v.im * s]))
            .collect(),
        losses_mw: losses.re * s,
        losses_mvar: losses.im * s,
    })
}

#[derive(Serialize)]
struct TapSetting {
    trafo: String,
    /// Integer position; absent when the tap was left continuous.
    position: Option<i32>,
    /// Position as returned by the last solve.
    value: f64,
}

#[derive(Serialize)]
struct OptimizeReport {
    format_version: u32,
    network: String,
    case: usize,
    weights: Vec<Weighted>,
    tap_mode: TapMode,
    status: Status,
    objective: f64,
    iterations: usize,
    solves: usize,
    kkt: KktResiduals,
    taps: Vec<TapSetting>,
    /// Generator reactive power in Mvar.
    q_g_mvar: BTreeMap<String, f64>,
    f: BTreeMap<String, f64>,
    violations: Vec<String>,
}

pub fn optimize(
    net: &Path,
    profiles: Option<&Path>,
    case: usize,
    objective: Option<&str>,
    weights: Option<&Path>,
    out: Option<&Path>,
    cfg: &PipelineConfig,
) -> anyhow::Result<()> {
    let sc = scenario(net, profiles)?;
    let weights = match (objective, weights) {
        (Some(o), _) => WeightVector::single(ObjectiveSpec::parse(o)?),
        (None, Some(p)) => WeightVector::parse(&read(p)?).with_context(|| format!("weights {}", p.display()))?,
        (None, None) => bail!("either --objective or --weights is required"),
    };
    let pu_case = sc.case(case)?;
    let outcome = optimize_with_taps(&sc.study, &pu_case, &weights.normalized()?, &cfg.optimize, &cfg.taps)?;
    let sol = &outcome.solution;
    let net_r = &sc.study.net;
    let solved = sc.reduction.expand_taps(&sol.op.psi, sc.pu.trafos.len());
    let integral = cfg.taps.mode != TapMode::Relax;
    let report = OptimizeReport {
        format_version: FORMAT_VERSION,
        network: sc.network.name.clone(),
        case,
        weights: weights.weights.clone(),
        tap_mode: cfg.taps.mode,
        status: sol.status,
        objective: sol.objective,
        iterations: sol.iterations,
        solves: outcome.solves,
        kkt: sol.kkt,
        taps: sc
            .pu
            .trafos
            .iter()
            .zip(&solved)
            .map(|(t, &p)| TapSetting {
                trafo: t.id.clone(),
                position: (integral || p.fract() == 0.0).then(|| p.round() as i32),
                value: p,
            })
            .collect(),
        q_g_mvar: net_r
            .gens
            .iter()
            .zip(&sol.state.q_g)
            .map(|(g, q)| (g.id.clone(), q * net_r.s_base))
            .collect(),
        f: cfg
            .objectives
            .iter()
            .zip(sc.study.f_values(&cfg.objectives, &sol.state)?)
            .map(|(o, v)| (o.name(), v))
            .collect(),
        violations: sc.study.violations(&sol.state, 1e-6),
    };
    match out {
        Some(p) => write_json(p, &report)?,
        None => print_json(&report)?,
    }
    if sol.status != Status::Optimal {
        return Err(Failure {
            kind: "solver",
            message: format!("case {case}: solver finished with status {:?}", sol.status),
            code: 3,
        }
        .into());
    }
    Ok(())
}

#[derive(Serialize)]
struct Written {
    out: String,
    files: Vec<String>,
}

fn written(out: &Path, files: Vec<&str>) -> anyhow::Result<()> {
    print_json(&Written {
        out: out.display().to_string(),
        files: files.into_iter().map(String::from).collect(),
    })
}

pub fn interdependence(
    net: &Path,
    profiles: Option<&Path>,
    out: &Path,
    cfg: &PipelineConfig,
    workers: usize,
) -> anyhow::Result<()> {
    let sc = scenario(net, profiles)?;
    let cases = study_cases(&sc, cfg)?;
    info!("{} study cases, {workers} worker(s)", cases.len());
    let res = run_interdependence(&sc, &cases, cfg, workers)?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    write_json(&out.join("interdependence.json"), &res)?;
    let mut files = vec!["interdependence.json"];
    files.extend(write_report(out, &sc.network.name, cfg, &res, None)?);
    written(out, files)
}

/// Parses `name=value` pairs separated by commas.
fn parse_tilde(text: &str) -> anyhow::Result<Vec<(ObjectiveSpec, f64)>> {
    let mut out: Vec<(ObjectiveSpec, f64)> = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, value) = item
            .split_once('=')
            .with_context(|| format!("'{item}' is not of the form OBJECTIVE=VALUE"))?;
        let spec = ObjectiveSpec::parse(name.trim())?;
        let v: f64 = value
            .trim()
            .parse()
            .with_context(|| format!("'{value}' is not a number in '{item}'"))?;
        if out.iter().any(|(s, _)| *s == spec) {
            bail!("objective {spec} listed twice in --tilde");
        }
        out.push((spec, v));
    }
    if out.is_empty() {
        bail!("--tilde names no objectives");
    }
    Ok(out)
}

/// Objectives and column means from an interdependence CSV or JSON result.
fn load_means(path: &Path) -> anyhow::Result<(Vec<ObjectiveSpec>, Vec<f64>)> {
    let text = read(path)?;
    if text.trim_start().starts_with('{') {
        let res: InterdependenceResult =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok((res.objectives.clone(), res.means()))
    } else {
        let t = read_matrix_csv(&text).with_context(|| format!("parsing {}", path.display()))?;
        let mu = t.means()?;
        Ok((t.objectives, mu))
    }
}

pub fn tune_weights(tilde: &str, stats: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let pairs = parse_tilde(tilde)?;
    let (objectives, mu) = load_means(stats)?;
    for (spec, _) in &pairs {
        if !objectives.contains(spec) {
            bail!("objective {spec} has no column in {}", stats.display());
        }
    }
    let t: Vec<f64> = objectives
        .iter()
        .map(|o| pairs.iter().find(|(s, _)| s == o).map_or(0.0, |p| p.1))
        .collect();
    let alphas = derive_alphas(&t, &mu)?;
    let w = WeightVector::new(
        objectives
            .into_iter()
            .zip(alphas)
            .map(|(objective, alpha)| Weighted { objective, alpha })
            .collect(),
    )?;
    match out {
        Some(p) => write_json(p, &w),
        None => print_json(&w),
    }
}

pub fn run_combined(
    net: &Path,
    profiles: Option<&Path>,
    weights: &Path,
    interdependence: Option<&Path>,
    out: &Path,
    cfg: &PipelineConfig,
    workers: usize,
) -> anyhow::Result<()> {
    let sc = scenario(net, profiles)?;
    let w = WeightVector::parse(&read(weights)?).with_context(|| format!("weights {}", weights.display()))?;
    let inter: Option<InterdependenceResult> = interdependence.map(read_json).transpose()?;
    let cases = match &inter {
        // the envelope is only meaningful on the same cases
        Some(i) => {
            let sampled = study_cases(&sc, cfg)?;
            if sampled != i.case_ids {
                bail!(
                    "the interdependence result covers different study cases; rerun with the same --seed and --cases"
                );
            }
            sampled
        }
        None => study_cases(&sc, cfg)?,
    };
    let res = combined_run(&sc, &cases, &w, inter.as_ref(), cfg, workers)?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    write_json(&out.join("combined.json"), &res)?;
    let mut files = vec!["combined.json"];
    match &inter {
        Some(i) => files.extend(write_report(out, &sc.network.name, cfg, i, Some(&res))?),
        None => {
            write_combined_files(out, cfg, &res)?;
            files.extend(["combined_eval.csv", "boxstats.json", "taps_hist.csv"]);
        }
    }
    written(out, files)
}

fn write_combined_files(out: &Path, cfg: &PipelineConfig, res: &CombinedResult) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    write_combined_csv(&mut buf, res)?;
    fs::write(out.join("combined_eval.csv"), &buf)?;
    write_json(&out.join("boxstats.json"), &combined_box_stats(res)?)?;
    buf.clear();
    write_taps_csv(&mut buf, &combined_taps(res, cfg.tap_min_count))?;
    fs::write(out.join("taps_hist.csv"), &buf)?;
    Ok(())
}

pub fn report(
    interdependence: &Path,
    combined: Option<&Path>,
    net: Option<&Path>,
    out: &Path,
    cfg: &PipelineConfig,
) -> anyhow::Result<()> {
    let inter: InterdependenceResult = read_json(interdependence)?;
    let comb: Option<CombinedResult> = combined.map(read_json).transpose()?;
    if let Some(c) = &comb {
        if c.objectives != inter.objectives {
            bail!("combined and interdependence results use different objectives");
        }
    }
    let name = match net {
        Some(p) => load_network(p).with_context(|| format!("network {}", p.display()))?.name,
        None => interdependence
            .file_stem()
            .map_or_else(|| "unknown".into(), |s| s.to_string_lossy().into_owned()),
    };
    let files = write_report(out, &name, cfg, &inter, comb.as_ref())?;
    written(out, files)
}
