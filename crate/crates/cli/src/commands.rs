//! One function per experiment kind. Each writes its tables through
//! [`Out`]; sweeps record per-row failures and keep going.

use advlq::evaluate::{cost_report, nominal_cost, soft_objective};
use advlq::experiments::{
    cartpole_sim, cartpole_tradeoffs, envelope, integrator_tradeoffs, monotonicity_violations,
    nc_width, scalar_filter_bounds, tradeoff_curve, TradeoffRow,
};
use advlq::hard_synthesis::{nominal_controller, synth_hard, synth_soft, HardOptions, SynthMode};
use advlq::par::Exec;
use serde::Serialize;

use crate::output::Out;
use crate::spec::{
    CartpoleSimParams, CartpoleTradeoffParams, ControllerRef, ControllerSpec, EnvelopeParams,
    EvaluateParams, Experiment, ScalarBoundsParams, SynthParams, TradeoffParams,
};
use crate::CliError;

/// Settings shared by every command.
pub struct Ctx {
    pub opts: HardOptions,
    pub exec: Exec,
    pub seed: u64,
}

pub fn run(exp: &Experiment, ctx: &Ctx, out: &mut Out) -> Result<(), CliError> {
    match exp {
        Experiment::Synth(p) => synth(p, ctx, out),
        Experiment::Evaluate(p) => evaluate(p, out),
        Experiment::Tradeoff(p) => tradeoff(p, ctx, out),
        Experiment::Envelope(p) => envelope_cmd(p, ctx, out),
        Experiment::BoundsScalarFilter(p) => scalar_bounds(p, ctx, out),
        Experiment::CartpoleTradeoff(p) => cartpole_tradeoff(p, ctx, out),
        Experiment::CartpoleSim(p) => cartpole(p, ctx, out),
    }
}

#[derive(Debug, Serialize)]
struct SynthReport {
    mode: SynthMode,
    epsilon: Option<f64>,
    gamma: Option<f64>,
    nc: f64,
    /// Adversarial cost at `epsilon`; equals `nc` for the nominal design.
    ac: Option<f64>,
    soft_trace: Option<f64>,
    power: Option<f64>,
    /// `|AC − (soft_trace + γ*²ε)|`.
    ac_identity_residual: Option<f64>,
    soft_objective: Option<f64>,
    gamma_lb: Option<f64>,
    bisection_steps: Option<usize>,
    nonconverged_midpoints: Option<usize>,
    inner_converged: bool,
    inner_iterations: Option<usize>,
}

fn synth(p: &SynthParams, ctx: &Ctx, out: &mut Out) -> Result<(), CliError> {
    let pb = p.plant.problem()?;
    let mut report = SynthReport {
        mode: pb.mode,
        epsilon: p.epsilon,
        gamma: None,
        nc: f64::NAN,
        ac: None,
        soft_trace: None,
        power: None,
        ac_identity_residual: None,
        soft_objective: None,
        gamma_lb: None,
        bisection_steps: None,
        nonconverged_midpoints: None,
        inner_converged: true,
        inner_iterations: None,
    };
    let k = match (p.epsilon, p.gamma) {
        (Some(0.0), _) => {
            let k = nominal_controller(&pb.plant, &pb.weights, pb.mode)?;
            report.nc = nominal_cost(&pb.plant, &k)?;
            report.ac = Some(report.nc);
            k
        }
        (Some(eps), _) => {
            let r = synth_hard(&pb.plant, &pb.weights, pb.mode, eps, &ctx.opts)?;
            report.gamma = Some(r.gamma_star);
            report.nc = nominal_cost(&pb.plant, &r.k)?;
            report.ac = Some(r.ac_value);
            report.soft_trace = Some(r.soft_trace);
            report.power = Some(r.power);
            report.ac_identity_residual =
                Some((r.ac_value - (r.soft_trace + r.gamma_star * r.gamma_star * eps)).abs());
            report.gamma_lb = Some(r.gamma_lb);
            report.bisection_steps = Some(r.bisection_steps);
            report.nonconverged_midpoints = Some(r.nonconverged_midpoints);
            report.inner_converged = r.inner_converged;
            r.k
        }
        (None, Some(gamma)) => {
            let s = synth_soft(&pb.plant, &pb.weights, pb.mode, gamma, &ctx.opts.ln)?;
            if !s.converged {
                log::warn!("soft synthesis at γ = {gamma} did not converge");
            }
            report.gamma = Some(gamma);
            report.nc = nominal_cost(&pb.plant, &s.k)?;
            report.soft_objective = soft_objective(&pb.plant, &s.k, gamma).ok();
            report.inner_converged = s.converged;
            report.inner_iterations = Some(s.iterations);
            s.k
        }
        (None, None) => unreachable!("checked when the spec was loaded"),
    };
    out.json("controller.json", &ControllerSpec::from_controller(&k))?;
    out.json("synth_report.json", &report)
}

#[derive(Debug, Serialize)]
struct EvaluateRow {
    nc: f64,
    epsilon: Option<f64>,
    ac: Option<f64>,
    ac_gamma: Option<f64>,
    power: Option<f64>,
    hinf_norm: Option<f64>,
}

fn evaluate(p: &EvaluateParams, out: &mut Out) -> Result<(), CliError> {
    let pb = p.plant.problem()?;
    let k = match &p.controller {
        ControllerRef::Inline(k) => k.build()?,
        ControllerRef::File { file } => {
            return Err(CliError::Parse(format!(
                "unresolved controller file {}",
                file.display()
            )))
        }
    };
    let r = cost_report(&pb.plant, &k, p.epsilon)?;
    let row = EvaluateRow {
        nc: r.nc,
        epsilon: p.epsilon,
        ac: r.ac.as_ref().map(|a| a.ac),
        ac_gamma: r.ac.as_ref().map(|a| a.gamma),
        power: r.ac.as_ref().map(|a| a.power),
        hinf_norm: r.rc_gamma,
    };
    out.csv("evaluate.csv", &[row])
}

#[derive(Debug, Serialize)]
struct CurveRow<'a> {
    setting: &'a str,
    rho: Option<f64>,
    design_eps: f64,
    eval_eps: f64,
    gamma_star: Option<f64>,
    nc: Option<f64>,
    ac: Option<f64>,
    error: Option<&'a str>,
}

#[derive(Debug, Serialize)]
struct CurveSummary<'a> {
    setting: &'a str,
    rho: Option<f64>,
    nc_width: Option<f64>,
    failed_rows: usize,
    monotonicity_violations: usize,
}

fn curve_rows<'a>(
    setting: &'a str,
    rho: Option<f64>,
    eval_eps: f64,
    rows: &'a [TradeoffRow],
) -> impl Iterator<Item = CurveRow<'a>> {
    rows.iter().map(move |r| CurveRow {
        setting,
        rho,
        design_eps: r.design_eps,
        eval_eps,
        gamma_star: r.gamma_star,
        nc: r.nc,
        ac: r.ac,
        error: r.error.as_deref(),
    })
}

/// Relative slack of the monotonicity check reported in summaries.
const MONOTONE_SLACK: f64 = 1e-6;

fn summary<'a>(setting: &'a str, rho: Option<f64>, rows: &[TradeoffRow]) -> CurveSummary<'a> {
    let violations = monotonicity_violations(rows, MONOTONE_SLACK);
    for v in &violations {
        log::warn!("{setting} ρ = {rho:?}: {v}");
    }
    CurveSummary {
        setting,
        rho,
        nc_width: nc_width(rows),
        failed_rows: rows.iter().filter(|r| r.error.is_some()).count(),
        monotonicity_violations: violations.len(),
    }
}

fn tradeoff(p: &TradeoffParams, ctx: &Ctx, out: &mut Out) -> Result<(), CliError> {
    let eps = p.eps.values();
    let curves: Vec<(&str, Option<f64>, Vec<TradeoffRow>)> = match &p.plant {
        Some(plant) => {
            let pb = plant.problem()?;
            let name = match pb.mode {
                SynthMode::StateFeedback => "state_feedback",
                SynthMode::OutputFeedback => "output_feedback",
                SynthMode::Filter => "prediction",
            };
            let rows = tradeoff_curve(&pb, &eps, p.eval_eps, &ctx.opts, ctx.exec)?;
            vec![(name, None, rows)]
        }
        None => integrator_tradeoffs(
            &p.settings,
            &p.rhos.values(),
            &eps,
            p.eval_eps,
            &ctx.opts,
            ctx.exec,
        )?
        .into_iter()
        .map(|c| (c.setting.name(), Some(c.rho), c.rows))
        .collect(),
    };
    let rows: Vec<CurveRow> = curves
        .iter()
        .flat_map(|(s, rho, rows)| curve_rows(s, *rho, p.eval_eps, rows))
        .collect();
    out.csv("tradeoff.csv", &rows)?;
    let sums: Vec<CurveSummary> = curves
        .iter()
        .map(|(s, rho, rows)| summary(s, *rho, rows))
        .collect();
    out.csv("tradeoff_summary.csv", &sums)
}

#[derive(Debug, Serialize)]
struct EnvelopeCsvRow {
    setting: &'static str,
    rho: f64,
    eps: f64,
    nc_nominal: Option<f64>,
    ac_nominal: Option<f64>,
    gamma_star: Option<f64>,
    nc_robust: Option<f64>,
    ac_robust: Option<f64>,
    nc_gap: Option<f64>,
    error: Option<String>,
}

fn envelope_cmd(p: &EnvelopeParams, ctx: &Ctx, out: &mut Out) -> Result<(), CliError> {
    let rhos = p.rhos.values();
    let mut rows = vec![];
    for &setting in &p.settings {
        for r in envelope(setting, &rhos, p.eps, &ctx.opts, ctx.exec)? {
            let errors: Vec<&str> = [&r.nominal.error, &r.robust.error]
                .into_iter()
                .flatten()
                .map(String::as_str)
                .collect();
            rows.push(EnvelopeCsvRow {
                setting: setting.name(),
                rho: r.rho,
                eps: p.eps,
                nc_nominal: r.nominal.nc,
                ac_nominal: r.nominal.ac,
                gamma_star: r.robust.gamma_star,
                nc_robust: r.robust.nc,
                ac_robust: r.robust.ac,
                nc_gap: r.nc_gap(),
                error: (!errors.is_empty()).then(|| errors.join(" | ")),
            });
        }
    }
    out.csv("envelope.csv", &rows)
}

fn scalar_bounds(p: &ScalarBoundsParams, ctx: &Ctx, out: &mut Out) -> Result<(), CliError> {
    let rows = scalar_filter_bounds(p.a, p.gamma, &p.cs.values(), ctx.exec)?;
    out.csv("bounds_scalar_filter.csv", &rows)
}

fn cartpole_tradeoff(p: &CartpoleTradeoffParams, ctx: &Ctx, out: &mut Out) -> Result<(), CliError> {
    let curves = cartpole_tradeoffs(
        &p.l0s.values(),
        p.dt,
        p.meas_std,
        &p.eps.values(),
        p.eval_eps,
        &ctx.opts,
        ctx.exec,
    )?;
    let rows: Vec<CurveRow> = curves
        .iter()
        .flat_map(|c| curve_rows("cartpole", Some(c.l0), c.eval_eps, &c.rows))
        .collect();
    out.csv("cartpole_tradeoff.csv", &rows)?;
    let sums: Vec<CurveSummary> = curves
        .iter()
        .map(|c| summary("cartpole", Some(c.l0), &c.rows))
        .collect();
    out.csv("cartpole_tradeoff_summary.csv", &sums)
}

#[derive(Debug, Serialize)]
struct SimSummary<'a> {
    l0: f64,
    controller: &'a str,
    gamma_star: Option<f64>,
    final_running_avg: Option<f64>,
    trace_file: Option<String>,
    error: Option<&'a str>,
}

fn cartpole(p: &CartpoleSimParams, ctx: &Ctx, out: &mut Out) -> Result<(), CliError> {
    let spec = p.to_core(ctx.seed);
    let runs = cartpole_sim(&spec, &ctx.opts, ctx.exec)?;
    let mut sums = vec![];
    for r in &runs {
        let file = match &r.trace {
            Some(tr) => {
                let name = format!("cartpole_trace_l0_{}_{}.csv", r.l0, r.controller);
                out.csv_raw(&name, &tr.csv_header(), &tr.csv_rows(spec.dt))?;
                Some(name)
            }
            None => {
                log::warn!(
                    "{} at ℓ₀ = {}: {}",
                    r.controller,
                    r.l0,
                    r.error.as_deref().unwrap_or("no trace")
                );
                None
            }
        };
        sums.push(SimSummary {
            l0: r.l0,
            controller: &r.controller,
            gamma_star: r.gamma_star,
            final_running_avg: r.final_cost(),
            trace_file: file,
            error: r.error.as_deref(),
        });
    }
    out.csv("cartpole_sim.csv", &sums)
}
