//! Scenario runner behind the `degcarl` binary.

use std::path::{Path, PathBuf};

use crate::carleman::{
    self, build_weights, case_family, nondeg_weights, scan_s, CarlemanWeights, NondegVariant,
    WeightKind,
};
use crate::coefficients::{
    check_structural_hypotheses, classify_pair_on, estimate_exponent, snap_exponent,
};
use crate::config::{InitialDatum, Pipeline, ScenarioConfig, SweepAxis, WeightChoice};
use crate::error::{Error, Result};
use crate::evolution::{
    contraction_report, energy_series, solve_forward, step_spectral_radius, ProblemSpec,
};
use crate::grid::discrete_green_check;
use crate::hardy::{best_constant, coercivity_constant, cstar, HardyVariant, VariantTag};
use crate::observability::{
    estimate_observability_constant, fit_caccioppoli, hum_control, observation_ratio,
    HYP_ADMISSIBLE,
};
use crate::report::{fmt_g, Report, Table};
use crate::testfns;

/// Exit statuses of the binary.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_HYPOTHESIS: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Config(String),
    Hypothesis(String),
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Hypothesis(_) => EXIT_HYPOTHESIS,
            Failure::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Hypothesis(m) | Failure::Numerical(m) => m,
        }
    }

    fn status(&self) -> &'static str {
        match self {
            Failure::Config(_) => "config_error",
            Failure::Hypothesis(_) => "hypothesis_violation",
            Failure::Numerical(_) => "numerical_failure",
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let m = e.to_string();
        match e {
            Error::Parameter { .. }
            | Error::InvalidCoefficient(_)
            | Error::Shape { .. }
            | Error::Data(_) => Failure::Config(m),
            Error::Hypothesis { .. } | Error::Precondition(_) | Error::Unsupported(_) => {
                Failure::Hypothesis(m)
            }
            _ => Failure::Numerical(m),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub allow_outside_hypotheses: bool,
    pub sweep: Option<(SweepAxis, Vec<f64>)>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: Report,
    pub written: Vec<PathBuf>,
    /// Set when the run finished but must exit nonzero.
    pub failure: Option<Failure>,
}

/// Summary keys of each pipeline, in output order; sweep rows use them as
/// columns.
pub fn summary_keys(p: Pipeline) -> &'static [&'static str] {
    match p {
        Pipeline::Classify => &[
            "K1",
            "K2",
            "K_star",
            "class",
            "hardy_branch",
            "class_a",
            "class_b",
            "c1",
            "c2",
            "lambda_branch",
        ],
        Pipeline::Hardy => &[
            "cstar",
            "cstar_variant",
            "lambda_upper",
            "admissible",
            "max_gap",
        ],
        Pipeline::Wellposed => &[
            "cstar",
            "lambda_upper",
            "admissible",
            "lambda_min",
            "analytic_bound",
            "max_eigenvalue",
            "contraction",
            "spectral_radius",
            "green_residual",
        ],
        Pipeline::Evolve => &[
            "initial_norm",
            "final_norm",
            "decay_ratio",
            "worst_energy_increase",
            "contraction",
        ],
        Pipeline::Carleman => &[
            "weight",
            "C_fit",
            "s0_est",
            "d2",
            "d2_bound",
            "max_weight",
            "cases",
            "min_boundary_sign",
        ],
        Pipeline::Observability => &[
            "C_T",
            "gap",
            "iterations",
            "converged",
            "gram_asymmetry",
            "max_observation_ratio",
            "caccioppoli_C",
        ],
        Pipeline::Hum => &[
            "tol",
            "iterations",
            "final_norm_ratio",
            "cost_ratio",
            "converged",
            "residual_monotone",
            "epsilon",
        ],
        Pipeline::Sweep => &["axis", "rows", "failed_rows"],
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_g).unwrap_or_default()
}

fn flag(b: bool) -> String {
    b.to_string()
}

fn sine_or_smooth(cfg: &ScenarioConfig, spec: &ProblemSpec) -> Result<Vec<f64>> {
    let (grid, asm) = spec.assembly()?;
    let mut u0: Vec<f64> = match cfg.params.u0 {
        InitialDatum::Sine => grid
            .nodes()
            .iter()
            .map(|x| (std::f64::consts::PI * x).sin())
            .collect(),
        InitialDatum::Smooth => testfns::random_smooth(&grid, spec.bc, &mut testfns::rng(cfg.seed)),
    };
    asm.project(&mut u0);
    Ok(u0)
}

fn classify(cfg: &ScenarioConfig, spec: &ProblemSpec, rep: &mut Report) -> Result<()> {
    let grid = spec.grid()?;
    if spec.x0().is_none() {
        rep.set("K1", "0");
        rep.set("K2", "0");
        rep.set("K_star", "0");
        rep.set("class", "nondegenerate");
        for k in [
            "hardy_branch",
            "class_a",
            "class_b",
            "c1",
            "c2",
            "lambda_branch",
        ] {
            rep.set(k, "");
        }
        return Ok(());
    }
    let d = classify_pair_on(&spec.a, &spec.b, grid.nodes())?;
    rep.num("K1", d.k1);
    rep.num("K2", d.k2);
    rep.num("K_star", d.k_star);
    rep.set("class", d.regime.label());
    rep.set(
        "hardy_branch",
        d.hardy_branch.map(|b| b.label()).unwrap_or(""),
    );
    rep.set("class_a", format!("{:?}", d.class_a));
    rep.set("class_b", format!("{:?}", d.class_b));
    rep.num("c1", d.c1);
    rep.num("c2", d.c2);
    rep.set("lambda_branch", format!("{:?}", d.lambda_branch(spec.bc)));
    rep.hypothesis(
        "H-REGIME",
        d.hardy_branch.is_some(),
        if d.hardy_branch.is_some() { 0.0 } else { -1.0 },
        format!(
            "K1 = {}, K2 = {}, class {}",
            fmt_g(d.k1),
            fmt_g(d.k2),
            d.regime.label()
        ),
    );
    structural(cfg, spec, rep)
}

fn structural(_cfg: &ScenarioConfig, spec: &ProblemSpec, rep: &mut Report) -> Result<()> {
    if spec.x0().is_none() {
        return Ok(());
    }
    let h = check_structural_hypotheses(&spec.a, &spec.b, spec.lambda, None, spec.cells)?;
    for c in &h.checks {
        rep.hypotheses.push(c.into());
    }
    if h.refinement_flip {
        rep.notes
            .push("a structural check changes outcome under grid refinement".into());
    }
    Ok(())
}

fn hardy(_cfg: &ScenarioConfig, spec: &ProblemSpec, rep: &mut Report) -> Result<()> {
    let grid = spec.grid()?;
    let cs = cstar(spec, &grid)?;
    rep.num("cstar", cs.value);
    rep.set("cstar_variant", cs.variant.name());
    rep.set("lambda_upper", opt(cs.range.upper));
    rep.set("admissible", flag(cs.range.contains(spec.lambda)));
    let mut table = Table::new(&[
        "variant",
        "cells",
        "c_best",
        "refinement_gap",
        "gap_flagged",
        "xi",
        "beta",
        "q",
        "q_unreliable",
        "error",
    ]);
    let mut max_gap: f64 = 0.0;
    let tags: Vec<VariantTag> = if spec.x0().is_some() {
        VariantTag::ALL.to_vec()
    } else {
        vec![cs.variant]
    };
    for tag in tags {
        match best_constant(&HardyVariant::new(tag), spec, &grid) {
            Ok(r) => {
                max_gap = max_gap.max(r.refinement_gap);
                table.push(vec![
                    tag.name().into(),
                    r.cells.to_string(),
                    fmt_g(r.c_best),
                    fmt_g(r.refinement_gap),
                    flag(r.gap_flagged),
                    opt(r.xi),
                    opt(r.beta),
                    opt(r.q),
                    flag(r.q_unreliable),
                    String::new(),
                ]);
            }
            Err(e) => {
                if let Error::Hypothesis { id, detail } = &e {
                    rep.hypothesis(id, false, -1.0, format!("{}: {detail}", tag.name()));
                }
                let mut row = vec![tag.name().to_string()];
                row.extend(std::iter::repeat(String::new()).take(8));
                row.push(e.to_string());
                table.push(row);
            }
        }
    }
    rep.num("max_gap", max_gap);
    rep.tables.push(("hardy_constants".into(), table));
    Ok(())
}

fn admissibility_line(rep: &mut Report, spec: &ProblemSpec, upper: Option<f64>, ok: bool) {
    let margin = if spec.lambda < 0.0 {
        -spec.lambda
    } else {
        match upper {
            Some(u) if spec.lambda > 0.0 => u - spec.lambda,
            _ => -1.0,
        }
    };
    let detail = if spec.lambda == 0.0 {
        "lambda=0 excluded".to_string()
    } else {
        format!(
            "lambda={} against upper bound {}",
            fmt_g(spec.lambda),
            opt(upper)
        )
    };
    rep.hypothesis(HYP_ADMISSIBLE, ok, margin, detail);
}

fn wellposed(cfg: &ScenarioConfig, spec: &ProblemSpec, rep: &mut Report) -> Result<()> {
    let (grid, asm) = spec.assembly()?;
    let cs = cstar(spec, &grid)?;
    let admissible = cs.range.contains(spec.lambda);
    rep.num("cstar", cs.value);
    rep.set("lambda_upper", opt(cs.range.upper));
    rep.set("admissible", flag(admissible));
    admissibility_line(rep, spec, cs.range.upper, admissible);
    if admissible {
        let c = coercivity_constant(spec, &grid, cs.value)?;
        rep.num("lambda_min", c.lambda_min);
        rep.num("analytic_bound", c.analytic_bound);
        if c.discrepancy {
            rep.notes
                .push("discrete energy form is not coercive".into());
        }
    } else {
        rep.set("lambda_min", "");
        rep.set("analytic_bound", "");
    }
    rep.num("max_eigenvalue", asm.max_eigenvalue()?);
    let mut rng = testfns::rng(cfg.seed);
    let u0 = testfns::random_smooth(&grid, spec.bc, &mut rng);
    let traj = solve_forward(&u0, None, spec)?;
    rep.num("contraction", contraction_report(&traj, spec)?);
    rep.num("spectral_radius", step_spectral_radius(spec, 200)?);
    let mut u = testfns::random_smooth(&grid, spec.bc, &mut rng);
    let mut v = testfns::random_smooth(&grid, spec.bc, &mut rng);
    asm.project(&mut u);
    asm.project(&mut v);
    rep.num(
        "green_residual",
        discrete_green_check(&u, &v, &asm)?.relative(),
    );
    Ok(())
}

fn evolve(cfg: &ScenarioConfig, spec: &ProblemSpec, rep: &mut Report) -> Result<()> {
    let grid = spec.grid()?;
    let cs = cstar(spec, &grid)?;
    admissibility_line(rep, spec, cs.range.upper, cs.range.well_posed(spec.lambda));
    let u0 = sine_or_smooth(cfg, spec)?;
    let traj = solve_forward(&u0, None, spec)?;
    let w = crate::grid::mass_weights(&grid, &spec.a)?;
    let norm = |u: &[f64]| u.iter().zip(&w).map(|(x, m)| x * x * m).sum::<f64>().sqrt();
    let n0 = norm(traj.first());
    let n1 = norm(traj.last());
    rep.num("initial_norm", n0);
    rep.num("final_norm", n1);
    rep.num("decay_ratio", if n0 > 0.0 { n1 / n0 } else { 0.0 });
    let energy = energy_series(&traj, spec)?;
    // The forward energy is nonincreasing; check it on the reversed clock.
    let reversed: Vec<f64> = energy.iter().rev().copied().collect();
    rep.num(
        "worst_energy_increase",
        crate::evolution::worst_energy_decrease(&reversed),
    );
    rep.num("contraction", contraction_report(&traj, spec)?);
    let stride = (spec.steps / 50).max(1);
    let mut t = Table::new(&["t", "x", "u"]);
    let mut e = Table::new(&["t", "energy"]);
    for (n, f) in traj.fields.iter().enumerate() {
        e.push(vec![fmt_g(traj.times[n]), fmt_g(energy[n])]);
        if n % stride == 0 || n == spec.steps {
            for (x, u) in grid.nodes().iter().zip(f) {
                t.push(vec![fmt_g(traj.times[n]), fmt_g(*x), fmt_g(*u)]);
            }
        }
    }
    rep.tables.push(("trajectory".into(), t));
    rep.tables.push(("energy".into(), e));
    Ok(())
}

/// Weights selected by the Carleman parameters.
pub fn make_weights(cfg: &ScenarioConfig, spec: &ProblemSpec) -> Result<CarlemanWeights> {
    let p = &cfg.params;
    let choice = match p.weight {
        WeightChoice::Auto if spec.x0().is_some() => WeightChoice::Degenerate,
        WeightChoice::Auto => WeightChoice::Integral,
        c => c,
    };
    match choice {
        WeightChoice::Degenerate => build_weights(spec, p.d1, p.rate, p.safety),
        WeightChoice::Integral => {
            let g_value = p.g;
            let g = move |_x: f64| g_value;
            nondeg_weights(
                spec,
                NondegVariant::Integral {
                    g: &g,
                    h0: p.h0,
                    r: p.r,
                },
                Some(p.frak_c.unwrap_or(1.0)),
                p.safety,
            )
        }
        WeightChoice::Exponential => nondeg_weights(
            spec,
            NondegVariant::Exponential { r: p.r },
            p.frak_c,
            p.safety,
        ),
        WeightChoice::Auto => unreachable!("resolved above"),
    }
}

fn carleman_pipeline(cfg: &ScenarioConfig, spec: &ProblemSpec, rep: &mut Report) -> Result<()> {
    structural(cfg, spec, rep)?;
    let w = make_weights(cfg, spec)?;
    let cases = case_family(spec, cfg.params.cases, cfg.seed)?;
    let scan = scan_s(&cases, &cfg.params.s_grid, &w, spec)?;
    let (name, d2, bound) = match &w.kind {
        WeightKind::Degenerate(p) => ("degenerate", Some(p.d2), Some(p.d2_bound)),
        WeightKind::Nondegenerate(n) => match n.kind {
            carleman::NondegKind::Integral { .. } => ("integral", None, None),
            carleman::NondegKind::Exponential { .. } => ("exponential", None, None),
        },
    };
    rep.set("weight", name);
    rep.num("C_fit", scan.c_fit);
    match scan.s0_est {
        Some(s) => rep.num("s0_est", s),
        None => {
            rep.set("s0_est", "");
            rep.notes.push("threshold above scan range".into());
        }
    }
    rep.set("d2", opt(d2));
    rep.set("d2_bound", opt(bound));
    rep.num("max_weight", w.max_spatial());
    rep.set("cases", cases.len().to_string());
    let min_sign = scan
        .table
        .iter()
        .filter(|r| r.boundary_sign != 0.0)
        .map(|r| r.boundary_sign)
        .fold(f64::INFINITY, f64::min);
    rep.set(
        "min_boundary_sign",
        if min_sign.is_finite() {
            fmt_g(min_sign)
        } else {
            String::new()
        },
    );
    let mut t = Table::new(&["case_id", "s", "LHS", "RHS", "ratio"]);
    for r in &scan.table {
        t.push(vec![
            r.case_id.to_string(),
            fmt_g(r.s),
            fmt_g(r.lhs),
            fmt_g(r.rhs),
            fmt_g(r.ratio),
        ]);
    }
    rep.tables.push(("carleman_scan".into(), t));
    let mut wt = Table::new(&["x", "psi", "rho01"]);
    let degenerate = matches!(w.kind, WeightKind::Degenerate(_));
    for (x, v) in w.rows() {
        let (psi, rho) = if degenerate {
            (fmt_g(v), String::new())
        } else {
            (String::new(), fmt_g(v))
        };
        wt.push(vec![fmt_g(x), psi, rho]);
    }
    rep.tables.push(("carleman_weights".into(), wt));
    Ok(())
}

fn exponents(spec: &ProblemSpec) -> Result<(f64, f64)> {
    if spec.x0().is_none() {
        return Ok((0.0, 0.0));
    }
    let grid = spec.grid()?;
    Ok((
        snap_exponent(estimate_exponent(&spec.a, grid.nodes())?),
        snap_exponent(estimate_exponent(&spec.b, grid.nodes())?),
    ))
}

fn soft_flags(rep: &mut Report, flags: &[String]) {
    for f in flags {
        let id = f.split(':').next().unwrap_or("H-UNKNOWN").to_string();
        rep.hypothesis(&id, false, -1.0, f.clone());
    }
}

fn observability(cfg: &ScenarioConfig, spec: &ProblemSpec, rep: &mut Report) -> Result<()> {
    let est = estimate_observability_constant(spec, cfg.params.iters)?;
    rep.hypothesis(
        HYP_ADMISSIBLE,
        true,
        0.0,
        format!("lambda={} well posed", fmt_g(spec.lambda)),
    );
    soft_flags(rep, &est.flags);
    rep.num("C_T", est.c_t);
    rep.num("gap", est.gap);
    rep.set("iterations", est.iterations.to_string());
    rep.set("converged", flag(est.converged));
    rep.num("gram_asymmetry", est.gram_asymmetry);
    let grid = spec.grid()?;
    let (_, asm) = spec.assembly()?;
    let mut worst: f64 = 0.0;
    for i in 0..cfg.params.cases {
        let mut rng = testfns::rng(testfns::derive_seed(cfg.seed, i as u64));
        let mut vt = testfns::random_smooth(&grid, spec.bc, &mut rng);
        asm.project(&mut vt);
        if vt.iter().any(|v| *v != 0.0) {
            worst = worst.max(observation_ratio(&vt, spec)?);
        }
    }
    rep.num("max_observation_ratio", worst);
    match cfg.params.omega_prime {
        Some([lo, hi]) => {
            let w = make_weights(cfg, spec)?;
            let (c, _) = fit_caccioppoli(
                (lo, hi),
                spec.omega,
                cfg.params.s_grid[0],
                &w,
                spec,
                cfg.params.cases,
                cfg.seed,
            )?;
            rep.num("caccioppoli_C", c);
        }
        None => rep.set("caccioppoli_C", ""),
    }
    let (k1, k2) = exponents(spec)?;
    let mut t = Table::new(&["omega_lo", "omega_hi", "lambda", "K1", "K2", "C_T", "gap"]);
    t.push(vec![
        fmt_g(spec.omega.0),
        fmt_g(spec.omega.1),
        fmt_g(spec.lambda),
        fmt_g(k1),
        fmt_g(k2),
        fmt_g(est.c_t),
        fmt_g(est.gap),
    ]);
    rep.tables.push(("observability".into(), t));
    Ok(())
}

fn hum(cfg: &ScenarioConfig, spec: &ProblemSpec, rep: &mut Report) -> Result<Option<Failure>> {
    let u0 = sine_or_smooth(cfg, spec)?;
    let r = hum_control(&u0, spec, cfg.params.tol, cfg.params.iters)?;
    rep.hypothesis(
        HYP_ADMISSIBLE,
        true,
        0.0,
        format!("lambda={} well posed", fmt_g(spec.lambda)),
    );
    soft_flags(rep, &r.flags);
    rep.num("tol", cfg.params.tol);
    rep.set("iterations", r.cg_iterations.to_string());
    rep.num("final_norm_ratio", r.final_norm_ratio);
    rep.num("cost_ratio", r.cost_ratio);
    rep.set("converged", flag(r.converged));
    rep.set("residual_monotone", flag(r.residual_monotone));
    rep.set("epsilon", opt(r.epsilon));
    let mut t = Table::new(&[
        "spec_hash",
        "tol",
        "iterations",
        "final_norm_ratio",
        "cost_ratio",
    ]);
    t.push(vec![
        rep.spec_hash.clone(),
        fmt_g(cfg.params.tol),
        r.cg_iterations.to_string(),
        fmt_g(r.final_norm_ratio),
        fmt_g(r.cost_ratio),
    ]);
    rep.tables.push(("hum".into(), t));
    let mut res = Table::new(&["iteration", "residual"]);
    for (i, v) in r.residuals.iter().enumerate() {
        res.push(vec![i.to_string(), fmt_g(*v)]);
    }
    rep.tables.push(("hum_residuals".into(), res));
    Ok((!r.converged).then(|| {
        Failure::Numerical(format!(
            "HUM did not reach tol {} (final ratio {})",
            fmt_g(cfg.params.tol),
            fmt_g(r.final_norm_ratio)
        ))
    }))
}

/// Runs one non-sweep pipeline; soft hypothesis failures mark the report,
/// hard ones are errors.
pub fn run_pipeline(
    pipeline: Pipeline,
    cfg: &ScenarioConfig,
) -> std::result::Result<(Report, Option<Failure>), Failure> {
    let spec = cfg.problem.to_spec().map_err(Failure::from)?;
    let mut rep = Report::new(pipeline.name(), &cfg.problem_hash());
    let mut late = None;
    match pipeline {
        Pipeline::Classify => classify(cfg, &spec, &mut rep)?,
        Pipeline::Hardy => hardy(cfg, &spec, &mut rep)?,
        Pipeline::Wellposed => wellposed(cfg, &spec, &mut rep)?,
        Pipeline::Evolve => evolve(cfg, &spec, &mut rep)?,
        Pipeline::Carleman => carleman_pipeline(cfg, &spec, &mut rep)?,
        Pipeline::Observability => observability(cfg, &spec, &mut rep)?,
        Pipeline::Hum => late = hum(cfg, &spec, &mut rep)?,
        Pipeline::Sweep => return Err(Failure::Config("sweep needs --sweep axis=values".into())),
    }
    rep.outside_hypotheses = rep.hypotheses.iter().any(|h| !h.passed);
    Ok((rep, late))
}

fn sweep(cfg: &ScenarioConfig, axis: SweepAxis, values: &[f64]) -> Report {
    let target = cfg.params.sweep_pipeline;
    let keys = summary_keys(target);
    let mut header = vec!["axis", "value", "status", "message", "refinement_gap"];
    header.extend_from_slice(keys);
    let mut table = Table::new(&header);
    let mut failed = 0usize;
    let mut previous: Option<f64> = None;
    for &value in values {
        let row_cfg = axis.apply(cfg, value).and_then(|c| c.validate().map(|_| c));
        let outcome = match row_cfg {
            Ok(c) => run_pipeline(target, &c),
            Err(e) => Err(Failure::from(e)),
        };
        let mut row = vec![axis.name().to_string(), fmt_g(value)];
        match outcome {
            Ok((rep, late)) => {
                let status = match (&late, rep.outside_hypotheses) {
                    (Some(f), _) => f.status(),
                    (None, true) => "outside_hypotheses",
                    (None, false) => "ok",
                };
                if late.is_some() {
                    failed += 1;
                }
                row.push(status.into());
                let mut msg: Vec<String> = rep
                    .hypotheses
                    .iter()
                    .filter(|h| !h.passed)
                    .map(|h| h.detail.clone())
                    .collect();
                if let Some(f) = &late {
                    msg.push(f.message().to_string());
                }
                row.push(msg.join("; "));
                let primary = rep.get(keys[0]).and_then(|v| v.parse::<f64>().ok());
                let gap = match (axis, previous, primary) {
                    (SweepAxis::N, Some(p), Some(c)) if p != 0.0 => fmt_g((c - p).abs() / p.abs()),
                    _ => String::new(),
                };
                previous = primary;
                row.push(gap);
                for k in keys {
                    row.push(rep.get(k).unwrap_or("").to_string());
                }
            }
            Err(f) => {
                failed += 1;
                row.push(f.status().into());
                row.push(f.message().to_string());
                row.push(String::new());
                row.extend(keys.iter().map(|_| String::new()));
            }
        }
        table.push(row);
    }
    let mut rep = Report::new("sweep", &cfg.problem_hash());
    rep.set("axis", axis.name());
    rep.set("rows", values.len().to_string());
    rep.set("failed_rows", failed.to_string());
    rep.notes
        .push(format!("rows run pipeline `{}`", target.name()));
    rep.tables.push(("sweep".into(), table));
    rep
}

/// Runs a scenario and writes its report bundle into the output directory
/// (`--out`, else `output_dir`, else `./out`).
pub fn run_scenario(
    pipeline: Pipeline,
    cfg: &ScenarioConfig,
    opts: &RunOptions,
) -> std::result::Result<RunOutcome, Failure> {
    let mut cfg = cfg.clone();
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    let out_dir: PathBuf = opts
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| Path::new("out").to_path_buf());
    let (report, late) = if pipeline == Pipeline::Sweep {
        let (axis, values) = opts
            .sweep
            .as_ref()
            .ok_or_else(|| Failure::Config("sweep needs --sweep axis=values".into()))?;
        (sweep(&cfg, *axis, values), None)
    } else {
        run_pipeline(pipeline, &cfg)?
    };
    let written = report
        .write(&out_dir)
        .map_err(|e| Failure::Config(format!("cannot write to {}: {e}", out_dir.display())))?;
    let failure = late.or_else(|| {
        (report.outside_hypotheses && !opts.allow_outside_hypotheses).then(|| {
            let ids: Vec<&str> = report
                .hypotheses
                .iter()
                .filter(|h| !h.passed)
                .map(|h| h.id.as_str())
                .collect();
            Failure::Hypothesis(format!("outside stated hypotheses: {}", ids.join(", ")))
        })
    });
    Ok(RunOutcome {
        report,
        written,
        failure,
    })
}
