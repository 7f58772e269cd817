use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use confor_core::analysis::SampleSummary;
use confor_core::conditioning::Histogram;
use confor_core::{
    abc_condition_with_bins, condition_normal, condition_t_with, loss_distribution, sensitivity, solve, ConditionedNormal,
    JointForecast, LossDistributionSummary, SolveResult, SolveStatus,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConditionFamily, Resolved, Scenario};

/// How a command ended, when it did not fail on its inputs.
#[derive(Debug, Default)]
pub struct Outcome {
    /// Set when the constraint cannot be met.
    pub infeasible: Option<String>,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn csv_writer(dir: &Path, name: &str) -> Result<csv::Writer<File>> {
    let path = dir.join(name);
    csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))
}

fn check_status(r: &SolveResult) -> Result<Outcome> {
    let detail = r.message.clone().unwrap_or_default();
    match r.status {
        SolveStatus::Converged => Ok(Outcome::default()),
        SolveStatus::InfeasibleConstraint | SolveStatus::HitLowerBound | SolveStatus::HitUpperBound => {
            Ok(Outcome { infeasible: Some(format!("{:?}: {detail}", r.status)) })
        }
        SolveStatus::MaxIterations => bail!("solver stopped after {} iterations: {detail}", r.iterations.len()),
    }
}

fn run_solve(r: &Resolved) -> Result<SolveResult> {
    Ok(solve(&r.loss, &r.margins, &r.constraint, &r.scenario.solver)?)
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    config: &'a Scenario,
    result: &'a SolveResult,
}

pub fn solve_cmd(r: &Resolved, out: &Path) -> Result<Outcome> {
    let result = run_solve(r)?;
    write_json(out, "solve.json", &SolveOutput { config: &r.scenario, result: &result })?;
    check_status(&result)
}

#[derive(Serialize)]
struct LossDistOutput<'a> {
    config: &'a Scenario,
    solve: &'a SolveResult,
    dependent: &'a LossDistributionSummary,
    /// Share of draws with loss below the Monte Carlo mean loss.
    fraction_below_mean: f64,
    pairs_csv: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    independent: Option<&'a LossDistributionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    independent_pairs_csv: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    density_csv: Option<&'static str>,
}

fn write_pairs(out: &Path, name: &str, s: &LossDistributionSummary) -> Result<()> {
    let mut w = csv_writer(out, name)?;
    w.write_record(["total", "loss"])?;
    for (y, l) in &s.pairs {
        w.write_record([y.to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Joint density on a lattice spanning the central 99.9% of each margin.
fn write_density(out: &Path, name: &str, joint: &JointForecast, points: usize) -> Result<()> {
    let ranges = (0..2)
        .map(|i| {
            let m = joint.marginal(i)?;
            Ok((m.quantile(0.0005)?, m.quantile(0.9995)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let axis = |(lo, hi): (f64, f64), j: usize| lo + (hi - lo) * j as f64 / (points - 1) as f64;
    let mut w = csv_writer(out, name)?;
    w.write_record(["y1", "y2", "density"])?;
    for a in 0..points {
        for b in 0..points {
            let y = [axis(ranges[0], a), axis(ranges[1], b)];
            let d = joint.log_density(&y)?.exp();
            w.write_record([y[0].to_string(), y[1].to_string(), d.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Solve, then simulate the loss at the solution and write its summaries.
fn loss_dist_into(r: &Resolved, out: &Path) -> Result<(Outcome, SolveResult, Option<LossDistributionSummary>)> {
    let joint = r.joint()?;
    let result = run_solve(r)?;
    let outcome = check_status(&result)?;
    if outcome.infeasible.is_some() {
        write_json(out, "solve.json", &SolveOutput { config: &r.scenario, result: &result })?;
        return Ok((outcome, result, None));
    }
    let cfg = &r.scenario.loss_dist;
    let n = r.scenario.samples;
    let dep = loss_distribution(joint, &r.loss, &result.f_star, n, r.seed, cfg.per_dimension)?;
    write_pairs(out, "loss_pairs.csv", &dep)?;
    let indep = if cfg.contrast {
        let ind = loss_distribution(&joint.without_dependence()?, &r.loss, &result.f_star, n, r.seed, cfg.per_dimension)?;
        write_pairs(out, "loss_pairs_independent.csv", &ind)?;
        Some(ind)
    } else {
        None
    };
    let density = matches!(joint, JointForecast::MultivariateLognormal { .. } | JointForecast::MultivariateNormal { .. })
        && r.dim() == 2
        && cfg.density_grid >= 2;
    if density {
        write_density(out, "density.csv", joint, cfg.density_grid)?;
    }
    write_json(
        out,
        "loss_dist.json",
        &LossDistOutput {
            config: &r.scenario,
            solve: &result,
            fraction_below_mean: dep.fraction_below(dep.loss.mean),
            dependent: &dep,
            pairs_csv: "loss_pairs.csv",
            independent: indep.as_ref(),
            independent_pairs_csv: indep.as_ref().map(|_| "loss_pairs_independent.csv"),
            density_csv: density.then_some("density.csv"),
        },
    )?;
    Ok((outcome, result, Some(dep)))
}

pub fn loss_dist_cmd(r: &Resolved, out: &Path) -> Result<Outcome> {
    Ok(loss_dist_into(r, out)?.0)
}

#[derive(Serialize)]
struct SensitivityOutput<'a> {
    config: &'a Scenario,
    result: &'a confor_core::SensitivityResult,
    table_csv: &'static str,
}

pub fn sensitivity_cmd(r: &Resolved, out: &Path) -> Result<Outcome> {
    let total = r.total()?;
    let nominal = run_solve(r)?;
    let outcome = check_status(&nominal)?;
    if outcome.infeasible.is_some() {
        write_json(out, "solve.json", &SolveOutput { config: &r.scenario, result: &nominal })?;
        return Ok(outcome);
    }
    let s = sensitivity(&r.loss, &r.margins, total, &r.scenario.sensitivity.epsilon, &r.scenario.solver)?;
    let mut w = csv_writer(out, "sensitivity.csv")?;
    w.write_record(["epsilon", "F", "component", "f_exact", "f_approx"])?;
    for (j, eps) in s.epsilon_grid.iter().enumerate() {
        for i in 0..r.dim() {
            w.write_record([
                eps.to_string(),
                s.totals[j].to_string(),
                (i + 1).to_string(),
                s.exact_f[j][i].to_string(),
                s.approx_f[j][i].to_string(),
            ])?;
        }
    }
    w.flush()?;
    write_json(out, "sensitivity.json", &SensitivityOutput { config: &r.scenario, result: &s, table_csv: "sensitivity.csv" })?;
    Ok(outcome)
}

#[derive(Serialize)]
struct AbcOutput<'a> {
    config: &'a Scenario,
    acceptance_rate: f64,
    tau_pct: f64,
    total: f64,
    draws: usize,
    accepted: usize,
    accepted_csv: &'static str,
    histograms: &'a [Histogram],
}

fn abc_into(r: &Resolved, out: &Path) -> Result<f64> {
    let cfg = &r.scenario.abc;
    let samples = cfg.samples.unwrap_or(r.scenario.samples);
    let a = abc_condition_with_bins(r.joint()?, r.total()?, cfg.tau_pct, samples, r.seed, cfg.bins)?;
    let path = out.join("abc_accepted.csv");
    a.accepted.write_csv(File::create(&path).with_context(|| format!("creating {}", path.display()))?)?;
    write_json(
        out,
        "abc.json",
        &AbcOutput {
            config: &r.scenario,
            acceptance_rate: a.acceptance_rate,
            tau_pct: a.tau_pct,
            total: a.total,
            draws: a.draws,
            accepted: a.accepted.nrows(),
            accepted_csv: "abc_accepted.csv",
            histograms: &a.histograms,
        },
    )?;
    Ok(a.acceptance_rate)
}

pub fn abc_cmd(r: &Resolved, out: &Path) -> Result<Outcome> {
    let rate = abc_into(r, out)?;
    if rate == 0.0 {
        eprintln!("warning: no draws accepted; widen tau_pct or raise samples");
    }
    Ok(Outcome::default())
}

#[derive(Serialize)]
struct ConditionOutput<'a> {
    config: &'a Scenario,
    total: f64,
    mean: Vec<f64>,
    /// Conditional covariance for the normal; the scale matrix times
    /// `scale_factor` for the T.
    var: Vec<Vec<f64>>,
    scale_factor: f64,
}

pub fn condition_cmd(r: &Resolved, out: &Path) -> Result<Outcome> {
    let total = r.total()?;
    let (mean, cov) = match r.joint()? {
        JointForecast::MultivariateNormal { mean, cov } => (mean.as_slice().to_vec(), cov),
        _ => bail!("exact conditioning needs an mv_normal joint; use `abc` for other joints"),
    };
    let cfg = &r.scenario.condition;
    let c: ConditionedNormal = match cfg.family {
        ConditionFamily::Normal => condition_normal(&mean, cov, total)?,
        ConditionFamily::T => {
            let Some(k) = cfg.k else { bail!("condition.k is required for the T family") };
            condition_t_with(k, &mean, cov, total, cfg.convention)?
        }
    };
    let n = mean.len();
    write_json(
        out,
        "condition.json",
        &ConditionOutput {
            config: &r.scenario,
            total,
            mean: c.mean_f.as_slice().to_vec(),
            var: (0..n).map(|i| (0..n).map(|j| c.var_f[(i, j)]).collect()).collect(),
            scale_factor: c.scale_factor,
        },
    )?;
    Ok(Outcome::default())
}

#[derive(Serialize)]
struct SweepPoint {
    rho: f64,
    total: f64,
    dir: String,
    status: SolveStatus,
    f_star: Vec<f64>,
    lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    loss: Option<SampleSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    acceptance_rate: Option<f64>,
}

#[derive(Serialize)]
struct SweepOutput<'a> {
    config: &'a Scenario,
    points: &'a [SweepPoint],
}

/// Every (rho, F) pair of the sweep grid, each in its own subdirectory.
pub fn sweep_cmd(r: &Resolved, base: &Path, out: &Path) -> Result<Outcome> {
    let joint = r.scenario.joint.as_ref().context("a sweep needs a joint distribution")?;
    let grid: Vec<(f64, f64)> = r
        .scenario
        .sweep
        .rho
        .iter()
        .flat_map(|&rho| r.scenario.sweep.totals.iter().map(move |&t| (rho, t)))
        .collect();
    if grid.is_empty() {
        bail!("the sweep grid is empty");
    }
    let points = grid
        .par_iter()
        .map(|&(rho, total)| {
            let mut s = r.scenario.clone();
            s.joint = Some(joint.with_rho(rho)?);
            s.constraint = crate::config::Constraint::Total(total);
            let point = s.resolve(base)?;
            let dir = format!("rho_{rho}_F_{total}");
            let sub = out.join(&dir);
            fs::create_dir_all(&sub).with_context(|| format!("creating {}", sub.display()))?;
            let (outcome, result, dep) = loss_dist_into(&point, &sub)?;
            let acceptance_rate =
                if r.scenario.sweep.abc && outcome.infeasible.is_none() { Some(abc_into(&point, &sub)?) } else { None };
            Ok((
                outcome,
                SweepPoint {
                    rho,
                    total,
                    dir,
                    status: result.status,
                    lambda: result.lambda(),
                    f_star: result.f_star,
                    loss: dep.map(|d| d.loss),
                    acceptance_rate,
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let infeasible: Vec<String> = points
        .iter()
        .filter_map(|(o, p)| o.infeasible.as_ref().map(|m| format!("rho {} F {}: {m}", p.rho, p.total)))
        .collect();
    let points: Vec<SweepPoint> = points.into_iter().map(|(_, p)| p).collect();

    let mut w = csv_writer(out, "sweep.csv")?;
    let n = r.dim();
    let mut header = vec!["rho".to_string(), "F".into(), "status".into(), "lambda".into()];
    header.extend((1..=n).map(|i| format!("f{i}")));
    header.extend(["loss_mean", "loss_median", "loss_q05", "loss_q95", "acceptance_rate"].map(String::from));
    w.write_record(&header)?;
    for p in &points {
        let mut rec = vec![p.rho.to_string(), p.total.to_string(), format!("{:?}", p.status), p.lambda.to_string()];
        rec.extend(p.f_star.iter().map(f64::to_string));
        let loss = p.loss.map(|l| [l.mean, l.median, l.q05, l.q95]);
        rec.extend((0..4).map(|i| loss.map(|l| l[i].to_string()).unwrap_or_default()));
        rec.push(p.acceptance_rate.map(|a| a.to_string()).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    write_json(out, "sweep.json", &SweepOutput { config: &r.scenario, points: &points })?;
    Ok(Outcome { infeasible: (!infeasible.is_empty()).then(|| infeasible.join("; ")) })
}
