//! Batch evaluation over sampled study cases: one optimization per objective
//! and case, cross evaluation of the resulting operating points under every
//! objective, and the combined run with tuned weights.

pub mod report;
pub mod stats;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admittance::{reduce_network, Reduction};
use crate::error::{Error, Result};
use crate::netmodel::profiles::Profiles;
use crate::netmodel::{to_per_unit, Network, PuCase, PuNetwork, StudyCase, FORMAT_VERSION};
use crate::objectives::{eval_f_alpha, performance, ObjectiveSpec, WeightVector};
use crate::optimize::{evaluate_initial, OptimizeConfig, Study};
use crate::powerflow::PfSolution;
use crate::solver::Status;
use crate::taps::{optimize_with_taps, TapOptions};

pub use stats::{box_stats, column_stats, normalize_radar, sample_cases, tap_histogram, BoxStats, ColumnStats, TapBin};

/// Family name of the operating points before optimization.
pub const INITIAL: &str = "initial";
/// Family name of the combined-objective operating points.
pub const COMBINED: &str = "combined";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub optimize: OptimizeConfig,
    pub taps: TapOptions,
    pub seed: u64,
    /// Number of sampled cases; capped by the profile length only if
    /// `cases` is `None`.
    pub cases: Option<usize>,
    pub objectives: Vec<ObjectiveSpec>,
    /// A family with a larger share of failed cases is flagged.
    pub failure_flag_fraction: f64,
    /// Slack on the envelope and diagonal checks for solver noise.
    pub check_tol: f64,
    /// Tap positions seen fewer times are left out of the histogram.
    pub tap_min_count: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            optimize: OptimizeConfig::default(),
            taps: TapOptions::default(),
            seed: 42,
            cases: None,
            objectives: ObjectiveSpec::standard(),
            failure_flag_fraction: 0.05,
            check_tol: 1e-4,
            tap_min_count: 2,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.objectives.is_empty() {
            return Err(Error::Config("no objectives configured".into()));
        }
        for (i, o) in self.objectives.iter().enumerate() {
            if self.objectives[..i].contains(o) {
                return Err(Error::Config(format!("objective {o} listed twice")));
            }
        }
        if !(0.0..=1.0).contains(&self.failure_flag_fraction) {
            return Err(Error::Config("failure_flag_fraction must lie in [0, 1]".into()));
        }
        if !(self.check_tol >= 0.0) {
            return Err(Error::Config("check_tol must be nonnegative".into()));
        }
        Ok(())
    }
}

/// A network with optional profiles, prepared for batch optimization on its
/// reduced form.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub network: Network,
    pub pu: PuNetwork,
    pub reduction: Reduction,
    pub study: Study,
    pub profiles: Option<Profiles>,
}

impl Scenario {
    pub fn new(network: Network, profiles: Option<Profiles>) -> Result<Self> {
        let pu = to_per_unit(&network)?;
        if let Some(p) = &profiles {
            p.check(&network)?;
        }
        let reduction = reduce_network(&pu)?;
        let study = Study::new(reduction.net.clone())?;
        Ok(Scenario {
            network,
            pu,
            reduction,
            study,
            profiles,
        })
    }

    /// Number of available study cases; one without profiles.
    pub fn population(&self) -> usize {
        self.profiles.as_ref().map_or(1, |p| p.steps)
    }

    /// Physical case for a profile step, or the network defaults as case 0
    /// when no profiles are loaded.
    pub fn study_case(&self, id: usize) -> Result<StudyCase> {
        match &self.profiles {
            Some(p) => p.case(&self.network, id),
            None if id == 0 => Ok(StudyCase::from_defaults(&self.network)),
            None => Err(Error::Case {
                case: id,
                msg: "no profiles loaded; only case 0 exists".into(),
            }),
        }
    }

    /// Per-unit case on the reduced network.
    pub fn case(&self, id: usize) -> Result<PuCase> {
        Ok(self.reduction.case(&self.pu.case(&self.study_case(id)?)))
    }

    fn summarize(&self, case: &PuCase, state: &PfSolution) -> PointSummary {
        let net = &self.study.net;
        let gens = net.gens.iter().enumerate().filter(|(_, g)| g.p_max > 0.0);
        let mut s = PointSummary::default();
        for (g, gen) in gens {
            s.p_rel.push(case.p_g[g] / gen.p_max);
            s.q_rel.push(state.q_g[g] / gen.p_max);
            s.u_gen.push(state.vm[gen.bus]);
        }
        for (t, tr) in net.trafos.iter().enumerate() {
            s.u_lv.push(state.vm[tr.lv]);
            s.p_hv_rel.push(state.branches[net.lines.len() + t].s_to.re / tr.sn);
        }
        s.taps = self
            .reduction
            .expand_taps(&state.psi, self.pu.trafos.len())
            .iter()
            .map(|p| p.round() as i32)
            .collect();
        s
    }
}

/// Quantities of one operating point kept for the distribution reports.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    /// Generator active power over its rating.
    pub p_rel: Vec<f64>,
    /// Generator reactive power over its active power rating.
    pub q_rel: Vec<f64>,
    /// Voltage magnitude at each generator bus.
    pub u_gen: Vec<f64>,
    /// Voltage magnitude at each transformer's lv bus.
    pub u_lv: Vec<f64>,
    /// Active power at each transformer's hv terminal over its rating.
    pub p_hv_rel: Vec<f64>,
    /// Tap positions of the original transformers, rounded.
    pub taps: Vec<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case: usize,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    /// Per-objective values, in the study's objective order; empty on failure.
    pub f: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<PointSummary>,
    pub solves: usize,
}

impl CaseRecord {
    fn failed(case: usize, message: String, solves: usize) -> Self {
        CaseRecord {
            case,
            ok: false,
            message: Some(message),
            f: vec![],
            point: None,
            solves,
        }
    }
}

/// Per-case results of one family of operating points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyRun {
    pub family: String,
    pub records: Vec<CaseRecord>,
}

impl FamilyRun {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| !r.ok).count()
    }

    pub fn ok_records(&self) -> impl Iterator<Item = &CaseRecord> {
        self.records.iter().filter(|r| r.ok)
    }

    /// Quadratic-mean performance per objective over the successful cases.
    pub fn performance(&self, n_obj: usize) -> Result<Vec<f64>> {
        (0..n_obj)
            .map(|o| {
                let v: Vec<f64> = self.ok_records().map(|r| r.f[o]).collect();
                performance(&v).map_err(|_| Error::Empty(format!("family {}: every case failed", self.family)))
            })
            .collect()
    }

    fn row(&self, n_obj: usize, flag_fraction: f64) -> Result<MatrixRow> {
        let failures = self.failures();
        let flagged = failures as f64 > flag_fraction * self.records.len() as f64;
        if flagged {
            warn!(
                "family {}: {failures} of {} cases failed",
                self.family,
                self.records.len()
            );
        }
        Ok(MatrixRow {
            family: self.family.clone(),
            values: self.performance(n_obj)?,
            cases_used: self.records.len() - failures,
            failures,
            flagged,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub family: String,
    /// Performance under each objective.
    pub values: Vec<f64>,
    pub cases_used: usize,
    pub failures: usize,
    /// More than the configured share of cases failed.
    pub flagged: bool,
}

/// Cross evaluation of per-objective optima, initial row first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterdependenceResult {
    pub format_version: u32,
    pub objectives: Vec<ObjectiveSpec>,
    pub case_ids: Vec<usize>,
    pub families: Vec<FamilyRun>,
    pub rows: Vec<MatrixRow>,
    /// Column statistics over all rows, initial included.
    pub stats: Vec<ColumnStats>,
    /// Optimized families that beat the family optimized for a column by
    /// more than the tolerance.
    pub diagonal_violations: Vec<String>,
}

impl InterdependenceResult {
    pub fn row(&self, family: &str) -> Option<&MatrixRow> {
        self.rows.iter().find(|r| r.family == family)
    }

    /// Rows of the optimized families, initial excluded.
    pub fn optimized_rows(&self) -> impl Iterator<Item = &MatrixRow> {
        self.rows.iter().filter(|r| r.family != INITIAL)
    }

    pub fn means(&self) -> Vec<f64> {
        self.stats.iter().map(|s| s.mu).collect()
    }
}

fn fan_out<T: Send>(ids: &[usize], workers: usize, f: impl Fn(usize) -> T + Sync + Send) -> Result<Vec<T>> {
    if workers <= 1 {
        return Ok(ids.iter().map(|&c| f(c)).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    // collect keeps the case order regardless of completion order
    Ok(pool.install(|| ids.par_iter().map(|&c| f(c)).collect()))
}

fn optimize_record(
    sc: &Scenario,
    id: usize,
    weights: &[(ObjectiveSpec, f64)],
    cfg: &PipelineConfig,
) -> CaseRecord {
    let run = || -> Result<CaseRecord> {
        let case = sc.case(id)?;
        let out = optimize_with_taps(&sc.study, &case, weights, &cfg.optimize, &cfg.taps)?;
        let sol = &out.solution;
        if sol.status != Status::Optimal {
            return Ok(CaseRecord::failed(id, format!("solver status {:?}", sol.status), out.solves));
        }
        Ok(CaseRecord {
            case: id,
            ok: true,
            message: None,
            f: sc.study.f_values(&cfg.objectives, &sol.state)?,
            point: Some(sc.summarize(&case, &sol.state)),
            solves: out.solves,
        })
    };
    run().unwrap_or_else(|e| CaseRecord::failed(id, e.to_string(), 0))
}

fn initial_record(sc: &Scenario, id: usize, cfg: &PipelineConfig) -> CaseRecord {
    let run = || -> Result<CaseRecord> {
        let case = sc.case(id)?;
        let init = evaluate_initial(&sc.study, &case, &cfg.optimize.powerflow)?;
        Ok(CaseRecord {
            case: id,
            ok: true,
            message: (!init.violations.is_empty()).then(|| init.violations.join("; ")),
            f: sc.study.f_values(&cfg.objectives, &init.state)?,
            point: Some(sc.summarize(&case, &init.state)),
            solves: 0,
        })
    };
    run().unwrap_or_else(|e| CaseRecord::failed(id, e.to_string(), 0))
}

/// Case ids for a study: `cfg.cases` draws from the profile steps, `None`
/// takes every step in order.
pub fn study_cases(sc: &Scenario, cfg: &PipelineConfig) -> Result<Vec<usize>> {
    match cfg.cases {
        Some(n) => sample_cases(sc.population(), n, cfg.seed),
        None => Ok((0..sc.population()).collect()),
    }
}

/// Optimizes every case for each objective, evaluates all resulting points
/// under every objective and appends the initial row.
pub fn run_interdependence(
    sc: &Scenario,
    cases: &[usize],
    cfg: &PipelineConfig,
    workers: usize,
) -> Result<InterdependenceResult> {
    cfg.validate()?;
    if cases.is_empty() {
        return Err(Error::Empty("case list".into()));
    }
    let n_obj = cfg.objectives.len();
    let mut families = vec![FamilyRun {
        family: INITIAL.into(),
        records: fan_out(cases, workers, |id| initial_record(sc, id, cfg))?,
    }];
    for &o in &cfg.objectives {
        info!("optimizing {} cases for {o}", cases.len());
        let w = [(o, 1.0)];
        families.push(FamilyRun {
            family: o.name(),
            records: fan_out(cases, workers, |id| optimize_record(sc, id, &w, cfg))?,
        });
    }
    let rows = families
        .iter()
        .map(|f| f.row(n_obj, cfg.failure_flag_fraction))
        .collect::<Result<Vec<_>>>()?;
    let stats = (0..n_obj)
        .map(|o| column_stats(&rows.iter().map(|r| r.values[o]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    let mut diagonal_violations = Vec::new();
    for (o, spec) in cfg.objectives.iter().enumerate() {
        let own = rows[o + 1].values[o];
        for r in &rows[1..] {
            if r.values[o] < own - cfg.check_tol {
                diagonal_violations.push(format!(
                    "{}: family {} reaches {:.6} below the optimized {:.6}",
                    spec, r.family, r.values[o], own
                ));
            }
        }
    }
    for v in &diagonal_violations {
        warn!("{v}");
    }
    Ok(InterdependenceResult {
        format_version: FORMAT_VERSION,
        objectives: cfg.objectives.clone(),
        case_ids: cases.to_vec(),
        families,
        rows,
        stats,
        diagonal_violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCheck {
    pub objective: ObjectiveSpec,
    pub value: f64,
    pub min: f64,
    pub max: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedResult {
    pub format_version: u32,
    pub objectives: Vec<ObjectiveSpec>,
    /// Weight per objective in `objectives` order, zero when absent.
    pub alphas: Vec<f64>,
    pub family: FamilyRun,
    pub row: MatrixRow,
    /// Weighted performance from the per-objective performances.
    pub f_alpha: f64,
    /// The same measure from the per-case weighted values.
    pub f_alpha_direct: f64,
    /// Position against the optimized interdependence rows, when given.
    pub envelope: Vec<EnvelopeCheck>,
}

impl CombinedResult {
    pub fn envelope_violations(&self) -> Vec<&EnvelopeCheck> {
        self.envelope.iter().filter(|e| !e.within).collect()
    }
}

/// Weight of each objective in `objectives`; every weighted objective must be
/// one of them.
pub fn align_weights(weights: &WeightVector, objectives: &[ObjectiveSpec]) -> Result<Vec<f64>> {
    weights.validate()?;
    let mut alphas = vec![0.0; objectives.len()];
    for w in &weights.weights {
        match objectives.iter().position(|o| *o == w.objective) {
            Some(i) => alphas[i] = w.alpha,
            None if w.alpha == 0.0 => {}
            None => {
                return Err(Error::Weights(format!(
                    "objective {} is weighted but not part of the study",
                    w.objective
                )))
            }
        }
    }
    Ok(alphas)
}

/// Optimizes every case for the weighted objective and evaluates the points
/// under each objective. With an interdependence result, checks that each
/// performance lies within the range of the optimized families.
pub fn run_combined(
    sc: &Scenario,
    cases: &[usize],
    weights: &WeightVector,
    interdependence: Option<&InterdependenceResult>,
    cfg: &PipelineConfig,
    workers: usize,
) -> Result<CombinedResult> {
    cfg.validate()?;
    if cases.is_empty() {
        return Err(Error::Empty("case list".into()));
    }
    let n_obj = cfg.objectives.len();
    let alphas = align_weights(weights, &cfg.objectives)?;
    let normalized = weights.normalized()?;
    info!("optimizing {} cases for the combined objective", cases.len());
    let family = FamilyRun {
        family: COMBINED.into(),
        records: fan_out(cases, workers, |id| optimize_record(sc, id, &normalized, cfg))?,
    };
    let row = family.row(n_obj, cfg.failure_flag_fraction)?;
    let f_alpha = eval_f_alpha(&alphas, &row.values)?;
    let per_case = family
        .ok_records()
        .map(|r| eval_f_alpha(&alphas, &r.f))
        .collect::<Result<Vec<_>>>()?;
    let f_alpha_direct = performance(&per_case)?;

    let mut envelope = Vec::new();
    if let Some(inter) = interdependence {
        if inter.objectives != cfg.objectives {
            return Err(Error::Config(
                "interdependence result was computed for different objectives".into(),
            ));
        }
        for (o, &objective) in cfg.objectives.iter().enumerate() {
            let col = inter.optimized_rows().map(|r| r.values[o]);
            let (min, max) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            let value = row.values[o];
            let within = value >= min - cfg.check_tol && value <= max + cfg.check_tol;
            if !within {
                warn!("{objective}: combined performance {value:.6} outside [{min:.6}, {max:.6}]");
            }
            envelope.push(EnvelopeCheck {
                objective,
                value,
                min,
                max,
                within,
            });
        }
    }
    Ok(CombinedResult {
        format_version: FORMAT_VERSION,
        objectives: cfg.objectives.clone(),
        alphas,
        family,
        row,
        f_alpha,
        f_alpha_direct,
        envelope,
    })
}
