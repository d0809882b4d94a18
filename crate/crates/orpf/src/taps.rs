//! Integer tap positions: relax, round the most loaded transformer, re-solve.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::netmodel::PuCase;
use crate::objectives::ObjectiveSpec;
use crate::optimize::{solve_case, CaseSolution, OptimizeConfig, Study};
use crate::solver::Status;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TapMode {
    /// Continuous taps, no rounding.
    Relax,
    #[default]
    Heuristic,
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TapOptions {
    pub mode: TapMode,
    /// Try the other adjacent integer once when a fixing makes the problem
    /// infeasible.
    pub retry_adjacent: bool,
    pub exhaustive_cap: usize,
}

impl Default for TapOptions {
    fn default() -> Self {
        TapOptions {
            mode: TapMode::Heuristic,
            retry_adjacent: true,
            exhaustive_cap: 2000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TapOutcome {
    pub solution: CaseSolution,
    pub solves: usize,
    /// Transformers in the order their taps were fixed.
    pub fixing_order: Vec<usize>,
    pub fixed: Vec<Option<i32>>,
    /// Transformers whose first rounding was replaced by the other neighbor.
    pub retried: Vec<usize>,
}

impl TapOutcome {
    pub fn integral_taps(&self) -> Option<Vec<i32>> {
        self.fixed.iter().copied().collect()
    }
}

/// Nearest integer to `psi`; exact halves go away from `neutral`.
pub fn round_tap(psi: f64, neutral: i32) -> i32 {
    neutral + (psi - neutral as f64).round() as i32
}

/// Transformer with the largest apparent power at either end among the
/// unfixed ones; ties go to the lowest index.
fn most_loaded(study: &Study, sol: &CaseSolution, fixed: &[Option<i32>]) -> Option<usize> {
    let offset = study.net.lines.len();
    let mut best: Option<(usize, f64)> = None;
    for (t, f) in fixed.iter().enumerate() {
        if f.is_some() {
            continue;
        }
        let s = sol.state.branches[offset + t].apparent_power();
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((t, s));
        }
    }
    best.map(|(t, _)| t)
}

/// Relaxed solve followed by one solve per transformer, each fixing the tap
/// of the most loaded unfixed transformer to the nearest integer.
pub fn discretize_taps(
    study: &Study,
    case: &PuCase,
    weights: &[(ObjectiveSpec, f64)],
    cfg: &OptimizeConfig,
    opts: &TapOptions,
) -> Result<TapOutcome> {
    let trafos = &study.net.trafos;
    let mut fixed: Vec<Option<i32>> = vec![None; trafos.len()];
    let mut sol = solve_case(study, case, weights, &fixed, cfg)?;
    let mut solves = 1;
    let mut order = Vec::new();
    let mut retried = Vec::new();
    while sol.status == Status::Optimal {
        let Some(t) = most_loaded(study, &sol, &fixed) else { break };
        let tap = &trafos[t].tap;
        let psi = sol.op.psi[t];
        let p = round_tap(psi, tap.neutral).clamp(tap.min, tap.max);
        debug!("fixing tap of {} at {p} (relaxed {psi:.4})", trafos[t].id);
        fixed[t] = Some(p);
        order.push(t);
        sol = solve_case(study, case, weights, &fixed, cfg)?;
        solves += 1;
        if sol.status != Status::Optimal && opts.retry_adjacent {
            let alt = if psi >= p as f64 { p + 1 } else { p - 1 };
            let alt = if (tap.min..=tap.max).contains(&alt) { alt } else { 2 * p - alt };
            if (tap.min..=tap.max).contains(&alt) && alt != p {
                warn!("tap {p} of {} infeasible, retrying {alt}", trafos[t].id);
                fixed[t] = Some(alt);
                retried.push(t);
                sol = solve_case(study, case, weights, &fixed, cfg)?;
                solves += 1;
            }
        }
    }
    Ok(TapOutcome {
        solution: sol,
        solves,
        fixing_order: order,
        fixed,
        retried,
    })
}

/// Solves every integer tap combination and keeps the best optimal one.
pub fn exhaustive_taps(
    study: &Study,
    case: &PuCase,
    weights: &[(ObjectiveSpec, f64)],
    cfg: &OptimizeConfig,
    opts: &TapOptions,
) -> Result<TapOutcome> {
    let trafos = &study.net.trafos;
    let combinations = trafos
        .iter()
        .try_fold(1usize, |acc, t| acc.checked_mul(t.tap.range_len()))
        .unwrap_or(usize::MAX);
    if combinations > opts.exhaustive_cap {
        return Err(Error::CapExceeded {
            combinations,
            cap: opts.exhaustive_cap,
        });
    }
    let mut current: Vec<i32> = trafos.iter().map(|t| t.tap.min).collect();
    let mut best: Option<(Vec<i32>, CaseSolution)> = None;
    let mut solves = 0;
    loop {
        let fixed: Vec<Option<i32>> = current.iter().map(|&p| Some(p)).collect();
        let sol = solve_case(study, case, weights, &fixed, cfg)?;
        solves += 1;
        let better = match &best {
            None => true,
            Some((_, b)) => match (sol.status == Status::Optimal, b.status == Status::Optimal) {
                (true, false) => true,
                (true, true) => sol.objective < b.objective,
                _ => false,
            },
        };
        if better {
            best = Some((current.clone(), sol));
        }
        // odometer over the tap ranges
        let mut t = 0;
        loop {
            if t == current.len() {
                let (taps, solution) = best.expect("at least one combination");
                return Ok(TapOutcome {
                    solution,
                    solves,
                    fixing_order: vec![],
                    fixed: taps.into_iter().map(Some).collect(),
                    retried: vec![],
                });
            }
            if current[t] < trafos[t].tap.max {
                current[t] += 1;
                break;
            }
            current[t] = trafos[t].tap.min;
            t += 1;
        }
    }
}

/// Dispatches on [`TapOptions::mode`].
pub fn optimize_with_taps(
    study: &Study,
    case: &PuCase,
    weights: &[(ObjectiveSpec, f64)],
    cfg: &OptimizeConfig,
    opts: &TapOptions,
) -> Result<TapOutcome> {
    match opts.mode {
        TapMode::Relax => {
            let fixed = vec![None; study.net.trafos.len()];
            let solution = solve_case(study, case, weights, &fixed, cfg)?;
            Ok(TapOutcome {
                solution,
                solves: 1,
                fixing_order: vec![],
                fixed,
                retried: vec![],
            })
        }
        TapMode::Heuristic => discretize_taps(study, case, weights, cfg, opts),
        TapMode::Exhaustive => exhaustive_taps(study, case, weights, cfg, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{parse_network, to_per_unit};
    use crate::objectives::Kind;

    fn study() -> Study {
        let net = parse_network(include_str!("../data/toy_t3.json")).unwrap();
        Study::new(to_per_unit(&net).unwrap()).unwrap()
    }

    #[test]
    fn halves_round_away_from_neutral() {
        assert_eq!(round_tap(9.5, 0), 10);
        assert_eq!(round_tap(-9.5, 0), -10);
        assert_eq!(round_tap(2.5, 3), 2);
        assert_eq!(round_tap(3.5, 3), 4);
        assert_eq!(round_tap(1.49, 0), 1);
        assert_eq!(round_tap(-0.2, 0), 0);
    }

    #[test]
    fn single_transformer_takes_two_solves() {
        let s = study();
        let case = s.net.default_case();
        let w = [(ObjectiveSpec::new(Kind::Voltage), 1.0)];
        let out = discretize_taps(&s, &case, &w, &Default::default(), &Default::default()).unwrap();
        assert_eq!(out.solves, 2);
        assert_eq!(out.solution.status, Status::Optimal);
        assert!(out.solution.op.taps_integral());
        assert_eq!(out.fixing_order, vec![0]);
    }

    #[test]
    fn exhaustive_enumerates_the_range() {
        let s = study();
        let case = s.net.default_case();
        let w = [(ObjectiveSpec::new(Kind::SlackActive), 1.0)];
        let cfg = OptimizeConfig::default();
        let out = exhaustive_taps(&s, &case, &w, &cfg, &Default::default()).unwrap();
        assert_eq!(out.solves, 5);
        let heur = discretize_taps(&s, &case, &w, &cfg, &Default::default()).unwrap();
        assert!(heur.solution.objective >= out.solution.objective - 1e-9);
    }

    #[test]
    fn cap_is_enforced() {
        let s = study();
        let case = s.net.default_case();
        let w = [(ObjectiveSpec::new(Kind::Voltage), 1.0)];
        let opts = TapOptions {
            exhaustive_cap: 4,
            ..Default::default()
        };
        let err = exhaustive_taps(&s, &case, &w, &Default::default(), &opts).unwrap_err();
        assert!(matches!(err, Error::CapExceeded { combinations: 5, cap: 4 }));
    }
}
