use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use storm_core::renewal::{measure_interarrivals_until, theoretical_interarrival_bound};
use storm_core::rng::{stream_id, stream_rng};
use storm_core::stats::{lag1_autocorrelation, linear_fit, LinearFit, Summary};
use storm_core::trace::{drift_bins, DriftBin};
use storm_core::trust_region::{
    complexity_bound, initial_radius, potential_value, renewal_route_bound, run_storm,
};
use storm_core::{IterationRecord, PotentialSpec, RunOutcome};

use crate::{ExperimentPlan, HarnessError};

/// Standard errors of slack in the statistical checks.
pub const Z_SLACK: f64 = 3.0;
/// Minimum samples for a drift bin to be judged.
pub const DRIFT_MIN_COUNT: usize = 200;
/// Fraction of completed runs an epsilon needs to enter the slope fit.
pub const SLOPE_COMPLETION: f64 = 0.9;

/// One row of runs.csv.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub epsilon: f64,
    pub rep: usize,
    #[serde(rename = "T_eps")]
    pub t_eps: Option<usize>,
    pub timeout: bool,
    pub f_final: Option<f64>,
    pub grad_norm_final: Option<f64>,
    pub total_oracle_value_samples: u128,
    pub total_oracle_grad_samples: u128,
    pub wall_ns: u64,
}

/// One row of traces.csv.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epsilon: f64,
    pub rep: usize,
    pub k: usize,
    pub delta: f64,
    pub rho: f64,
    pub success: bool,
    pub model_decrease: f64,
    pub f_true: Option<f64>,
    pub grad_norm_true: Option<f64>,
    pub phi: Option<f64>,
    pub v_k: Option<f64>,
    pub i_k: Option<bool>,
    pub j_k: Option<bool>,
}

impl TraceRow {
    fn from_record(epsilon: f64, rep: usize, r: &IterationRecord) -> Self {
        TraceRow {
            epsilon,
            rep,
            k: r.k,
            delta: r.delta_before,
            rho: r.rho,
            success: r.success,
            model_decrease: r.model_decrease,
            f_true: r.f_true_before,
            grad_norm_true: r.grad_norm_true,
            phi: r.phi,
            v_k: r.v_k(),
            i_k: r.model_good,
            j_k: r.estimates_good,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonStats {
    pub epsilon: f64,
    pub runs: usize,
    pub timeouts: usize,
    pub timeout_fraction: f64,
    /// Over completed runs only; a lower bound when `censored`.
    pub mean_t: Option<f64>,
    pub median_t: Option<f64>,
    pub std_t: Option<f64>,
    pub se_t: Option<f64>,
    pub censored: bool,
    pub mean_value_samples: f64,
}

/// Pooled interarrival times of the radius process.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterarrivalReport {
    pub count: usize,
    pub mean: f64,
    pub se: f64,
    pub bound: f64,
    pub lag1_autocorrelation: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SummaryStats {
    pub per_epsilon: Vec<EpsilonStats>,
    /// Slope of log mean `T_eps` against log `eps`.
    pub slope: Option<LinearFit>,
    pub slope_points: usize,
    /// Same regression for the mean number of value samples.
    pub sample_slope: Option<LinearFit>,
    pub drift: Vec<DriftBin>,
    pub interarrival: Option<InterarrivalReport>,
    pub cauchy_violations: usize,
    pub success_lemma_checked: usize,
    pub success_lemma_violations: usize,
    pub decrease_lemma_checked: usize,
    pub decrease_lemma_violations: usize,
    pub box_exits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub epsilon: f64,
    pub mean_t: Option<f64>,
    pub se_t: Option<f64>,
    pub delta0: f64,
    pub phi0: f64,
    /// Closed-form complexity bound at the default `nu`.
    pub bound: f64,
    /// Same at the plan's `nu`, when one was given.
    pub bound_user_nu: Option<f64>,
    /// The renewal-process bound with `h(delta) = delta^2`.
    pub renewal_bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
}

impl BoundReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// A named pass/fail check; disabled checks do not affect the exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub name: &'static str,
    pub enabled: bool,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutput {
    pub runs: Vec<RunRow>,
    pub traces: Vec<TraceRow>,
    pub summary: SummaryStats,
    pub bound: BoundReport,
    pub validations: Vec<Validation>,
}

impl PlanOutput {
    pub fn all_passed(&self) -> bool {
        self.validations.iter().all(|v| !v.enabled || v.passed)
    }
}

struct Cell {
    row: RunRow,
    traces: Vec<TraceRow>,
    outcome_counts: [usize; 6],
}

fn cell_seed(master: u64, ei: usize, rep: usize) -> u64 {
    stream_rng(master, stream_id(ei as u32, rep as u32)).random()
}

/// Runs every `(epsilon, replication)` cell of the plan in parallel and
/// aggregates the results. Writes CSV artifacts when the plan names an
/// output directory.
pub fn run_plan(plan: &ExperimentPlan) -> Result<PlanOutput, HarnessError> {
    plan.validate()?;
    let (problem, oracle) = plan.build_problem()?;
    let config = plan.storm_config();
    let potential = plan.potential();
    let mut options = plan.run_options();
    options.domain_box = Some(problem.domain_box.clone());

    let cells: Vec<(usize, usize)> = (0..plan.run.epsilon.len())
        .flat_map(|e| (0..plan.run.reps).map(move |r| (e, r)))
        .collect();
    let results: Vec<Result<Cell, HarnessError>> = cells
        .par_iter()
        .map(|&(ei, rep)| {
            let eps = plan.run.epsilon[ei];
            let start = Instant::now();
            let out: RunOutcome = run_storm(
                oracle.as_ref(),
                Some(&problem),
                &problem.x0,
                &config,
                &potential,
                eps,
                cell_seed(plan.run.seed, ei, rep),
                &options,
            )
            .map_err(|source| HarnessError::Run {
                epsilon: eps,
                rep,
                source,
            })?;
            let wall_ns = if plan.run.timing {
                start.elapsed().as_nanos() as u64
            } else {
                0
            };
            Ok(Cell {
                row: RunRow {
                    epsilon: eps,
                    rep,
                    t_eps: out.t_eps,
                    timeout: out.timed_out,
                    f_final: out.f_final,
                    grad_norm_final: out.grad_norm_final,
                    total_oracle_value_samples: out.value_samples,
                    total_oracle_grad_samples: out.gradient_samples,
                    wall_ns,
                },
                traces: out
                    .records
                    .iter()
                    .map(|r| TraceRow::from_record(eps, rep, r))
                    .collect(),
                outcome_counts: [
                    out.cauchy_violations,
                    out.success_lemma_checked,
                    out.success_lemma_violations,
                    out.decrease_lemma_checked,
                    out.decrease_lemma_violations,
                    out.box_exits,
                ],
            })
        })
        .collect();

    let mut runs = Vec::with_capacity(results.len());
    let mut traces = Vec::new();
    let mut counts = [0usize; 6];
    for cell in results {
        let cell = cell?;
        runs.push(cell.row);
        traces.extend(cell.traces);
        for (acc, c) in counts.iter_mut().zip(cell.outcome_counts) {
            *acc += c;
        }
    }

    let mut summary = summarize(plan, &runs, &traces);
    [
        summary.cauchy_violations,
        summary.success_lemma_checked,
        summary.success_lemma_violations,
        summary.decrease_lemma_checked,
        summary.decrease_lemma_violations,
        summary.box_exits,
    ] = counts;
    let bound = validate_bound(&summary, plan)?;
    let validations = validations(plan, &summary, &bound, true);
    let output = PlanOutput {
        runs,
        traces,
        summary,
        bound,
        validations,
    };
    if let Some(dir) = &plan.run.out {
        write_artifacts(dir, plan, &output)?;
    }
    Ok(output)
}

/// Statistics that can be recomputed from runs.csv and traces.csv alone.
pub fn summarize(plan: &ExperimentPlan, runs: &[RunRow], traces: &[TraceRow]) -> SummaryStats {
    let mut by_eps: BTreeMap<u64, Vec<&RunRow>> = BTreeMap::new();
    for r in runs {
        by_eps.entry(r.epsilon.to_bits()).or_default().push(r);
    }
    let mut per_epsilon: Vec<EpsilonStats> = by_eps
        .values()
        .map(|rows| {
            let done: Vec<f64> = rows.iter().filter_map(|r| r.t_eps.map(|t| t as f64)).collect();
            let timeouts = rows.iter().filter(|r| r.timeout).count();
            let s = Summary::of(&done);
            EpsilonStats {
                epsilon: rows[0].epsilon,
                runs: rows.len(),
                timeouts,
                timeout_fraction: timeouts as f64 / rows.len() as f64,
                mean_t: s.map(|s| s.mean),
                median_t: s.map(|s| s.median),
                std_t: s.map(|s| s.std),
                se_t: s.map(|s| s.se),
                censored: timeouts > 0,
                mean_value_samples: rows
                    .iter()
                    .map(|r| r.total_oracle_value_samples as f64)
                    .sum::<f64>()
                    / rows.len() as f64,
            }
        })
        .collect();
    per_epsilon.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));

    let fit_rows: Vec<&EpsilonStats> = per_epsilon
        .iter()
        .filter(|e| 1.0 - e.timeout_fraction >= SLOPE_COMPLETION && e.mean_t.is_some_and(|m| m > 0.0))
        .collect();
    let slope_points = fit_rows.len();
    let slope = if fit_rows.len() >= 3 {
        let xs: Vec<f64> = fit_rows.iter().map(|e| e.epsilon.ln()).collect();
        let ys: Vec<f64> = fit_rows.iter().map(|e| e.mean_t.unwrap().ln()).collect();
        linear_fit(&xs, &ys)
    } else {
        None
    };
    let sample_slope = if fit_rows.len() >= 3 && fit_rows.iter().all(|e| e.mean_value_samples > 0.0) {
        let xs: Vec<f64> = fit_rows.iter().map(|e| e.epsilon.ln()).collect();
        let ys: Vec<f64> = fit_rows.iter().map(|e| e.mean_value_samples.ln()).collect();
        linear_fit(&xs, &ys)
    } else {
        None
    };

    let theta = 1.0 / (1600.0 * plan.storm.kappa_eg);
    let drift = drift_bins(
        traces.iter().filter_map(|t| Some((t.delta, t.v_k?))),
        theta,
        |d| d * d,
        DRIFT_MIN_COUNT,
        Z_SLACK,
    );

    SummaryStats {
        per_epsilon,
        slope,
        slope_points,
        sample_slope,
        drift,
        interarrival: interarrivals(plan, runs, traces),
        ..SummaryStats::default()
    }
}

/// Pools renewal gaps of the radius sequences up to each run's stopping
/// time, with `Delta_eps = eps / zeta` and `p = alpha beta`.
fn interarrivals(plan: &ExperimentPlan, runs: &[RunRow], traces: &[TraceRow]) -> Option<InterarrivalReport> {
    if traces.is_empty() {
        return None;
    }
    let p = plan.oracle.alpha * plan.oracle.beta;
    let bound = theoretical_interarrival_bound(p).ok()?;
    let zeta = plan.potential().zeta;
    let mut by_run: BTreeMap<(u64, usize), Vec<f64>> = BTreeMap::new();
    for t in traces {
        by_run
            .entry((t.epsilon.to_bits(), t.rep))
            .or_default()
            .push(t.delta);
    }
    let stop: BTreeMap<(u64, usize), usize> = runs
        .iter()
        .map(|r| ((r.epsilon.to_bits(), r.rep), r.t_eps.unwrap_or(usize::MAX)))
        .collect();
    let mut gaps = Vec::new();
    for (key, deltas) in &by_run {
        let eps = f64::from_bits(key.0);
        let t = stop.get(key).copied().unwrap_or(usize::MAX).min(deltas.len());
        let renewal = measure_interarrivals_until(deltas, eps / zeta, t);
        gaps.extend(renewal.interarrivals.iter().map(|&g| g as f64));
    }
    let s = Summary::of(&gaps)?;
    Some(InterarrivalReport {
        count: s.count,
        mean: s.mean,
        se: s.se,
        bound,
        lag1_autocorrelation: lag1_autocorrelation(&gaps),
        pass: s.mean <= bound + Z_SLACK * s.se,
    })
}

/// Compares each epsilon's mean stopping time with the complexity bound.
pub fn validate_bound(stats: &SummaryStats, plan: &ExperimentPlan) -> Result<BoundReport, HarnessError> {
    let (alpha, beta) = (plan.oracle.alpha, plan.oracle.beta);
    if !(alpha * beta > 0.5) {
        return Err(HarnessError::Domain(format!(
            "alpha * beta = {} must exceed 1/2",
            alpha * beta
        )));
    }
    let (problem, _) = plan.build_problem()?;
    let config = plan.storm_config();
    let default_pot = PotentialSpec::for_config(&config);
    let f0 = problem.value(&problem.x0);
    let (ke, kg) = (plan.storm.kappa_ef, plan.storm.kappa_eg);
    let domain = |e: storm_core::StormError| HarnessError::Domain(e.to_string());
    let mut rows = Vec::new();
    for e in &stats.per_epsilon {
        let eps = e.epsilon;
        let delta0 = initial_radius(&config, &default_pot, eps, plan.storm.snap_delta0);
        let phi0 = potential_value(f0, delta0, &default_pot).map_err(domain)?;
        let bound = complexity_bound(alpha, beta, phi0, ke, kg, delta0, eps).map_err(domain)?;
        let bound_user_nu = match plan.storm.nu {
            Some(nu) => {
                let pot = PotentialSpec { nu, ..default_pot };
                let phi = potential_value(f0, delta0, &pot).map_err(domain)?;
                Some(complexity_bound(alpha, beta, phi, ke, kg, delta0, eps).map_err(domain)?)
            }
            None => None,
        };
        let renewal_bound = renewal_route_bound(alpha, beta, phi0, kg, delta0, eps).map_err(domain)?;
        let pass = match (e.mean_t, e.se_t) {
            (Some(m), Some(se)) => m <= bound + Z_SLACK * se,
            _ => false,
        };
        rows.push(BoundRow {
            epsilon: eps,
            mean_t: e.mean_t,
            se_t: e.se_t,
            delta0,
            phi0,
            bound,
            bound_user_nu,
            renewal_bound,
            pass,
        });
    }
    Ok(BoundReport { rows })
}

/// The checks behind the exit code. `live` marks a fresh run, where the
/// per-iteration assertions were observed directly.
pub fn validations(
    plan: &ExperimentPlan,
    s: &SummaryStats,
    bound: &BoundReport,
    live: bool,
) -> Vec<Validation> {
    let instrumented = plan.run.instrument;
    vec![
        Validation {
            name: "cauchy_decrease",
            enabled: live,
            passed: s.cauchy_violations == 0,
            detail: format!("{} violations", s.cauchy_violations),
        },
        Validation {
            name: "lemma_success",
            enabled: live && instrumented,
            passed: s.success_lemma_violations == 0,
            detail: format!(
                "{} violations in {} applicable iterations",
                s.success_lemma_violations, s.success_lemma_checked
            ),
        },
        Validation {
            name: "lemma_decrease",
            enabled: live && instrumented,
            passed: s.decrease_lemma_violations == 0,
            detail: format!(
                "{} violations in {} applicable iterations",
                s.decrease_lemma_violations, s.decrease_lemma_checked
            ),
        },
        Validation {
            name: "drift_bins",
            enabled: instrumented && plan.run.check_feasibility,
            passed: s.drift.iter().all(|b| b.pass),
            detail: format!(
                "{} of {} bins pass",
                s.drift.iter().filter(|b| b.pass).count(),
                s.drift.len()
            ),
        },
        Validation {
            name: "interarrival_bound",
            enabled: instrumented && s.interarrival.is_some(),
            passed: s.interarrival.as_ref().is_none_or(|i| i.pass),
            detail: s
                .interarrival
                .as_ref()
                .map(|i| format!("mean {:.4} (se {:.2e}) vs bound {:.4}", i.mean, i.se, i.bound))
                .unwrap_or_default(),
        },
        Validation {
            name: "complexity_bound",
            enabled: true,
            passed: bound.all_pass(),
            detail: format!(
                "{} of {} tolerances below the bound",
                bound.rows.iter().filter(|r| r.pass).count(),
                bound.rows.len()
            ),
        },
    ]
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into())
}

/// Human-readable report of a summary, bound comparison and checks.
pub fn render_report(s: &SummaryStats, bound: &BoundReport, checks: &[Validation]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "epsilon        runs  timeouts  mean_T        se_T          bound         renewal_bound  pass"
    );
    for (e, b) in s.per_epsilon.iter().zip(&bound.rows) {
        let _ = writeln!(
            out,
            "{:<14.6e} {:<5} {:<9} {:<13} {:<13} {:<13.6e} {:<14.6e} {}{}",
            e.epsilon,
            e.runs,
            e.timeouts,
            opt(e.mean_t),
            opt(e.se_t),
            b.bound,
            b.renewal_bound,
            b.pass,
            if e.censored {
                " (censored: mean is a lower bound)"
            } else {
                ""
            }
        );
    }
    match &s.slope {
        Some(f) => {
            let _ = writeln!(
                out,
                "slope of log mean T vs log eps: {:.4} (se {:.4}) over {} tolerances",
                f.slope, f.slope_se, s.slope_points
            );
        }
        None => {
            let _ = writeln!(
                out,
                "slope not reported: fewer than 3 tolerances with >= 90% completed runs"
            );
        }
    }
    if let Some(f) = &s.sample_slope {
        let _ = writeln!(out, "slope of log mean value samples vs log eps: {:.4}", f.slope);
    }
    if !s.drift.is_empty() {
        let _ = writeln!(
            out,
            "drift bins (delta, count, mean V, se, -theta delta^2, pass):"
        );
        for b in &s.drift {
            let _ = writeln!(
                out,
                "  {:.6e} {:>7} {:.6e} {:.2e} {:.6e} {}",
                b.delta, b.count, b.mean_v, b.se_v, b.required, b.pass
            );
        }
    }
    if let Some(i) = &s.interarrival {
        let _ = writeln!(
            out,
            "interarrival: {} gaps, mean {:.4} (se {:.2e}), bound {:.4}, lag-1 autocorrelation {}",
            i.count,
            i.mean,
            i.se,
            i.bound,
            i.lag1_autocorrelation.map_or("-".into(), |r| format!("{r:.4}"))
        );
    }
    if s.box_exits > 0 {
        let _ = writeln!(out, "iterates left the working box {} times", s.box_exits);
    }
    for c in checks {
        let state = match (c.enabled, c.passed) {
            (false, _) => "SKIP",
            (true, true) => "PASS",
            (true, false) => "FAIL",
        };
        let _ = writeln!(out, "[{state}] {}: {}", c.name, c.detail);
    }
    out
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryRow {
    epsilon: f64,
    runs: usize,
    timeouts: usize,
    timeout_fraction: f64,
    mean_t: Option<f64>,
    median_t: Option<f64>,
    std_t: Option<f64>,
    se_t: Option<f64>,
    censored: bool,
    mean_value_samples: f64,
    slope: Option<f64>,
    slope_se: Option<f64>,
    interarrival_mean: Option<f64>,
    interarrival_bound: Option<f64>,
    bound: f64,
    renewal_bound: f64,
    bound_pass: bool,
}

/// Writes runs.csv, summary.csv, plan.cfg, report.txt and, when present,
/// traces.csv and drift.csv.
pub fn write_artifacts(dir: &Path, plan: &ExperimentPlan, out: &PlanOutput) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    write_csv(&dir.join("runs.csv"), &out.runs)?;
    if plan.run.trace {
        write_csv(&dir.join("traces.csv"), &out.traces)?;
    }
    let rows: Vec<SummaryRow> = out
        .summary
        .per_epsilon
        .iter()
        .zip(&out.bound.rows)
        .map(|(e, b)| SummaryRow {
            epsilon: e.epsilon,
            runs: e.runs,
            timeouts: e.timeouts,
            timeout_fraction: e.timeout_fraction,
            mean_t: e.mean_t,
            median_t: e.median_t,
            std_t: e.std_t,
            se_t: e.se_t,
            censored: e.censored,
            mean_value_samples: e.mean_value_samples,
            slope: out.summary.slope.map(|f| f.slope),
            slope_se: out.summary.slope.map(|f| f.slope_se),
            interarrival_mean: out.summary.interarrival.as_ref().map(|i| i.mean),
            interarrival_bound: out.summary.interarrival.as_ref().map(|i| i.bound),
            bound: b.bound,
            renewal_bound: b.renewal_bound,
            bound_pass: b.pass,
        })
        .collect();
    write_csv(&dir.join("summary.csv"), &rows)?;
    if !out.summary.drift.is_empty() {
        write_csv(&dir.join("drift.csv"), &out.summary.drift)?;
    }
    std::fs::write(dir.join("plan.cfg"), plan.to_toml())?;
    std::fs::write(
        dir.join("report.txt"),
        render_report(&out.summary, &out.bound, &out.validations),
    )?;
    Ok(())
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

/// Recomputes the summary and bound comparison from a finished run's
/// directory (plan.cfg, runs.csv and optionally traces.csv).
pub fn validate_dir(
    dir: &Path,
) -> Result<(ExperimentPlan, SummaryStats, BoundReport, Vec<Validation>), HarnessError> {
    let plan = ExperimentPlan::load(&dir.join("plan.cfg"))?;
    let runs: Vec<RunRow> = read_csv(&dir.join("runs.csv"))?;
    let trace_path = dir.join("traces.csv");
    let traces: Vec<TraceRow> = if trace_path.exists() {
        read_csv(&trace_path)?
    } else {
        Vec::new()
    };
    let summary = summarize(&plan, &runs, &traces);
    let bound = validate_bound(&summary, &plan)?;
    let mut checks = validations(&plan, &summary, &bound, false);
    if traces.is_empty() {
        for c in &mut checks {
            if matches!(c.name, "drift_bins" | "interarrival_bound") {
                c.enabled = false;
            }
        }
    }
    Ok((plan, summary, bound, checks))
}
