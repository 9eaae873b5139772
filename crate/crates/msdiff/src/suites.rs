//! Certification suites. Each suite writes one artifact and decides a fixed
//! set of numbered criteria.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use msdiff_core::entropy::RenormFunction;
use msdiff_core::sim;

use crate::config::RunConfig;
use crate::error::RunResult;
use crate::io::{self, fmt_f64, Table};
use crate::studies::{self, min_order, Conservation, RefinementRow};

/// Thresholds of every criterion.
pub mod limits {
    pub const FLUX_RESIDUAL: f64 = 1e-10;
    pub const FLUX_CONSTRAINT: f64 = 1e-12;
    pub const FLUX_ORACLE: f64 = 1e-9;
    pub const ALGEBRA: f64 = 1e-12;
    pub const HEAT_ORDER: f64 = 1.9;
    pub const HEAT_RELATIVE_ERROR: f64 = 1e-3;
    pub const MASS: f64 = 1e-12;
    pub const SIMPLEX: f64 = 1e-12;
    pub const ENTROPY_INCREASE: f64 = 1e-10;
    pub const IDENTITY_ORDER: f64 = 1.0;
    pub const TIMESTEP_ORDER: f64 = 1.0;
    pub const MOLLIFIER_ORDER: f64 = 0.9;
    pub const MOLLIFIER_FIT_R2: f64 = 0.99;
    pub const TRACE_RELATIVE_ERROR: f64 = 1e-2;
    /// Upper bound on `value / full trace`; the half trace sits at 0.5.
    pub const TRACE_FULL_RATIO: f64 = 0.75;
    pub const WEAK_ORDER: f64 = 1.0;
    pub const CK_RANGE: (f64, f64) = (0.01, 2.0);
}

/// Scale ladders of the mollifier study.
pub const MOLLIFIER_EPSILONS: [f64; 3] = [0.2, 0.1, 0.05];
pub const TRACE_EPSILONS: [f64; 4] = [0.08, 0.04, 0.02, 0.01];
pub const MOLLIFIER_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    FluxCertify,
    SpectralCertify,
    IdentityStudy,
    MollifierStudy,
    TwinStudy,
    ConvergenceStudy,
    Simulate,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::FluxCertify,
        Suite::SpectralCertify,
        Suite::IdentityStudy,
        Suite::MollifierStudy,
        Suite::TwinStudy,
        Suite::ConvergenceStudy,
        Suite::Simulate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::FluxCertify => "flux-certify",
            Suite::SpectralCertify => "spectral-certify",
            Suite::IdentityStudy => "identity-study",
            Suite::MollifierStudy => "mollifier-study",
            Suite::TwinStudy => "twin-study",
            Suite::ConvergenceStudy => "convergence-study",
            Suite::Simulate => "simulate",
        }
    }

    /// The single file this suite writes in the run directory.
    pub fn artifact(self) -> &'static str {
        match self {
            Suite::FluxCertify => "flux_certify.json",
            Suite::SpectralCertify => "spectral_certify.json",
            Suite::IdentityStudy => "identity_study.csv",
            Suite::MollifierStudy => "mollifier_study.csv",
            Suite::TwinStudy => "twin_study.csv",
            Suite::ConvergenceStudy => "convergence_study.csv",
            Suite::Simulate => "trajectory.bin",
        }
    }

    /// Criteria decided by this suite.
    pub fn criteria(self) -> &'static [u8] {
        match self {
            Suite::FluxCertify => &[1],
            Suite::SpectralCertify => &[2, 3],
            Suite::IdentityStudy => &[7, 8, 9],
            Suite::MollifierStudy => &[11],
            Suite::TwinStudy => &[6, 10],
            Suite::ConvergenceStudy => &[4, 12],
            Suite::Simulate => &[],
        }
    }

    /// Whether the suite evaluates the shifted estimates at the configured shift.
    pub fn uses_shift(self) -> bool {
        matches!(self, Suite::TwinStudy)
    }

    pub fn needs_perturbation(self) -> bool {
        matches!(self, Suite::IdentityStudy | Suite::TwinStudy)
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| {
            let known: Vec<&str> = Suite::ALL.iter().map(|x| x.name()).collect();
            format!("unknown suite `{s}`; expected one of {}", known.join(", "))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

/// One measured quantity against its limit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub relation: Relation,
    pub limit: f64,
    pub holds: bool,
    /// Non-gating checks are reported but do not decide the criterion.
    pub gating: bool,
}

impl Check {
    pub fn at_most(name: &'static str, value: f64, limit: f64) -> Self {
        Self { name, value, relation: Relation::AtMost, limit, holds: value <= limit, gating: true }
    }

    pub fn at_least(name: &'static str, value: f64, limit: f64) -> Self {
        Self { name, value, relation: Relation::AtLeast, limit, holds: value >= limit, gating: true }
    }

    pub fn flag(name: &'static str, ok: bool) -> Self {
        Self::at_least(name, if ok { 1.0 } else { 0.0 }, 1.0)
    }

    pub fn informational(mut self) -> Self {
        self.gating = false;
        self
    }
}

/// Where the numbers of a criterion come from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    /// Library operations that produced the values.
    pub operations: Vec<&'static str>,
    pub artifact: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub provenance: Provenance,
}

impl CriterionOutcome {
    pub fn new(id: u8, name: &'static str, checks: Vec<Check>, operations: Vec<&'static str>, artifact: &'static str) -> Self {
        let passed = checks.iter().all(|c| c.holds || !c.gating);
        Self { id, name, passed, checks, provenance: Provenance { operations, artifact } }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// One line for logs and the acceptance report.
    pub fn line(&self) -> String {
        let mut s = format!("criterion {:>2} {:<34} {}", self.id, self.name, if self.passed { "PASS" } else { "FAIL" });
        for c in self.checks.iter().filter(|c| c.gating) {
            let rel = match c.relation {
                Relation::AtMost => "<=",
                Relation::AtLeast => ">=",
            };
            write!(s, "  {}={:.3e} {rel} {:e}", c.name, c.value, c.limit).expect("string write");
        }
        s
    }
}

/// What a suite produced.
#[derive(Debug, Clone)]
pub struct SuiteOutput {
    pub suite: Suite,
    pub artifact: Vec<u8>,
    pub criteria: Vec<CriterionOutcome>,
    /// Bookkeeping of every time-dependent run, if the suite ran any.
    pub conservation: Option<Conservation>,
}

pub fn run_suite(suite: Suite, config: &RunConfig) -> RunResult<SuiteOutput> {
    match suite {
        Suite::FluxCertify => flux_certify(config),
        Suite::SpectralCertify => spectral_certify(config),
        Suite::IdentityStudy => identity_study(config),
        Suite::MollifierStudy => mollifier_study(),
        Suite::TwinStudy => twin_study(config),
        Suite::ConvergenceStudy => convergence_study(config),
        Suite::Simulate => simulate(config),
    }
}

/// Criterion 5 over the runs of all suites.
pub fn conservation_outcome(c: &Conservation) -> CriterionOutcome {
    CriterionOutcome::new(
        5,
        "conservation and simplex",
        vec![
            Check::at_most("mass_defect", c.mass_defect, limits::MASS),
            Check::at_most("simplex_defect", c.simplex_defect, limits::SIMPLEX),
            Check::at_least("runs", c.runs as f64, 1.0).informational(),
        ],
        vec!["sim::run", "Trajectory::mass_defect", "Trajectory::simplex_defect"],
        "summary.json",
    )
}

fn json_artifact(value: serde_json::Value) -> RunResult<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(&value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn flux_certify(config: &RunConfig) -> RunResult<SuiteOutput> {
    let suite = Suite::FluxCertify;
    let r = studies::flux_certification(config.studies.flux_samples, config.seed, config.workers);
    let outcome = CriterionOutcome::new(
        1,
        "force-flux inversion",
        vec![
            Check::at_most("residual", r.max_residual, limits::FLUX_RESIDUAL),
            Check::at_most("flux_sum", r.max_constraint, limits::FLUX_CONSTRAINT),
            Check::at_most("oracle_deviation", r.max_oracle_deviation, limits::FLUX_ORACLE),
            Check::at_most("solver_failures", r.failures as f64, 0.0),
        ],
        vec!["FluxSolver::solve_into", "force_flux_residual", "pseudo_inverse_flux"],
        suite.artifact(),
    );
    let artifact = json_artifact(serde_json::json!({
        "schema_version": 1,
        "seed": config.seed,
        "certification": r,
    }))?;
    Ok(SuiteOutput { suite, artifact, criteria: vec![outcome], conservation: None })
}

fn spectral_certify(config: &RunConfig) -> RunResult<SuiteOutput> {
    let suite = Suite::SpectralCertify;
    let a = studies::operator_algebra(config.studies.algebra_samples, config.seed);
    let s = studies::spectral_certification(config.studies.spectral_samples, config.seed, config.workers);
    let algebra = CriterionOutcome::new(
        2,
        "shifted operator algebra",
        vec![
            Check::at_most("kernel", a.kernel, limits::ALGEBRA),
            Check::at_most("idempotence", a.idempotence, limits::ALGEBRA),
            Check::at_most("completeness", a.completeness, limits::ALGEBRA),
            Check::at_most("scaling", a.scaling, limits::ALGEBRA),
        ],
        vec!["assemble_operator", "friction_matrix", "MsOperator::projection_l", "MsOperator::projection_lperp"],
        suite.artifact(),
    );
    let spectral = CriterionOutcome::new(
        3,
        "coercivity on the shifted kernel",
        vec![
            Check::at_most("violations", s.violations as f64, 0.0),
            Check::at_least("min_margin", s.min_margin, -msdiff_core::msflux::ALGEBRA_TOL).informational(),
        ],
        vec!["MsOperator::spectral_gap_check"],
        suite.artifact(),
    );
    let artifact = json_artifact(serde_json::json!({
        "schema_version": 1,
        "seed": config.seed,
        "algebra": a,
        "spectral": s,
    }))?;
    Ok(SuiteOutput { suite, artifact, criteria: vec![algebra, spectral], conservation: None })
}

const LONG_COLUMNS: [&str; 6] = ["series", "cells", "h", "dt", "value", "order"];

fn push_rows(table: &mut Table, series: &str, rows: &[RefinementRow]) {
    for r in rows {
        table.push(vec![
            series.to_string(),
            r.cells.to_string(),
            fmt_f64(r.h),
            fmt_f64(r.dt),
            fmt_f64(r.error),
            r.order.map(fmt_f64).unwrap_or_default(),
        ]);
    }
}

fn push_scalar(table: &mut Table, series: &str, value: f64) {
    table.push(vec![series.to_string(), String::new(), String::new(), String::new(), fmt_f64(value), String::new()]);
}

fn convergence_study(config: &RunConfig) -> RunResult<SuiteOutput> {
    let suite = Suite::ConvergenceStudy;
    let levels = config.studies.levels;
    let heat = studies::heat_convergence(&config.scenario, levels, config.workers)?;
    let betas = [RenormFunction::Identity, RenormFunction::log_shift(0.05)?, RenormFunction::Square];
    let weak = studies::weak_residual_study(&config.scenario, levels, &betas, config.workers)?;

    let mut table = Table::new(&LONG_COLUMNS);
    push_rows(&mut table, "l2_error", &heat.rows);
    push_scalar(&mut table, "relative_l2_error_finest", heat.finest_relative_error);
    for s in &weak.series {
        push_rows(&mut table, &format!("weak_residual_{}", s.label), &s.rows);
    }

    let heat_outcome = CriterionOutcome::new(
        4,
        "closed-form convergence",
        vec![
            Check::at_least("min_order", min_order(&heat.rows), limits::HEAT_ORDER),
            Check::at_most("relative_l2_error", heat.finest_relative_error, limits::HEAT_RELATIVE_ERROR),
        ],
        vec!["sim::run", "Scenario::exact_solution", "sim::l2_distance"],
        suite.artifact(),
    );
    let mut weak_checks: Vec<Check> = Vec::new();
    for s in &weak.series {
        let name: &'static str = match s.label {
            "identity" => "min_order_identity",
            "log-shift" => "min_order_log_shift",
            "square" => "min_order_square",
            _ => "min_order_custom",
        };
        weak_checks.push(Check::at_least(name, min_order(&s.rows), limits::WEAK_ORDER));
    }
    let weak_outcome = CriterionOutcome::new(
        12,
        "renormalized weak form",
        weak_checks,
        vec!["sim::run", "sim::weak_form_residual"],
        suite.artifact(),
    );
    Ok(SuiteOutput {
        suite,
        artifact: table.to_csv().into_bytes(),
        criteria: vec![heat_outcome, weak_outcome],
        conservation: Some(heat.conservation.merge(weak.conservation)),
    })
}

fn identity_study(config: &RunConfig) -> RunResult<SuiteOutput> {
    let suite = Suite::IdentityStudy;
    let identity = studies::identity_refinement(&config.scenario, config.studies.levels, config.workers)?;
    let terms = studies::error_term_sampling(config.studies.error_term_pairs, config.seed, config.workers);
    let (lo, hi) = limits::CK_RANGE;
    let ck = studies::ck_study(lo, hi, config.studies.ck_points);

    let mut table = Table::new(&LONG_COLUMNS);
    push_rows(&mut table, "identity_residual", &identity.rows);
    push_scalar(&mut table, "error_terms_pairs", terms.pairs as f64);
    push_scalar(&mut table, "error_terms_violations", terms.violations as f64);
    push_scalar(&mut table, "error_terms_worst_excess", terms.worst_excess);
    for (name, sweep) in [("ck_literal", &ck.literal), ("ck_scaled", &ck.scaled)] {
        push_scalar(&mut table, &format!("{name}_samples"), sweep.samples as f64);
        push_scalar(&mut table, &format!("{name}_violations"), sweep.violations as f64);
        if let Some((d, db)) = sweep.first_violation {
            push_scalar(&mut table, &format!("{name}_first_violation_d"), d);
            push_scalar(&mut table, &format!("{name}_first_violation_dbar"), db);
        }
    }

    let id_outcome = CriterionOutcome::new(
        7,
        "entropy identity residual",
        vec![Check::at_least("min_order", min_order(&identity.rows), limits::IDENTITY_ORDER)],
        vec!["sim::compare_trajectories", "Comparison::final_identity_residual"],
        suite.artifact(),
    );
    let terms_outcome = CriterionOutcome::new(
        8,
        "error-term bounds",
        vec![
            Check::at_most("violations", terms.violations as f64, 0.0),
            Check::at_least("pairs", terms.pairs as f64, 1.0).informational(),
        ],
        vec!["FluxField::cell_centered", "entropy::error_terms"],
        suite.artifact(),
    );
    let ck_outcome = CriterionOutcome::new(
        9,
        "pointwise entropy-distance bound",
        vec![
            Check::at_most("violations", ck.literal.violations as f64, 0.0),
            Check::at_most("scaled_violations", ck.scaled.violations as f64, 0.0).informational(),
        ],
        vec!["entropy::ck_sweep", "entropy::csiszar_kullback_check", "entropy::csiszar_kullback_scaled_check"],
        suite.artifact(),
    );
    Ok(SuiteOutput {
        suite,
        artifact: table.to_csv().into_bytes(),
        criteria: vec![id_outcome, terms_outcome, ck_outcome],
        conservation: Some(identity.conservation),
    })
}

fn twin_study(config: &RunConfig) -> RunResult<SuiteOutput> {
    let suite = Suite::TwinStudy;
    let decay = studies::entropy_decay(&config.scenario)?;
    let steps = studies::timestep_convergence(&config.scenario, config.studies.halvings, config.workers)?;
    let env = studies::envelope_study(&config.scenario, config.policy)?;
    let cert = &env.comparison.certificate;

    let decay_outcome = CriterionOutcome::new(
        6,
        "entropy decay",
        vec![Check::at_most("max_step_increase", decay.max_increase, limits::ENTROPY_INCREASE)],
        vec!["sim::run", "entropy::entropy"],
        suite.artifact(),
    );
    let stability = CriterionOutcome::new(
        10,
        "stability of twin runs",
        vec![
            Check::at_least("timestep_order", steps.fit.slope, limits::TIMESTEP_ORDER),
            Check::flag("integral_bound", cert.integral_holds),
            Check::flag("envelope", cert.envelope_holds),
            Check::flag("admissible_shift", cert.admissible).informational(),
            Check::at_least("delta_upper", cert.constants.delta_upper, config.scenario.delta).informational(),
        ],
        vec!["entropy::regularized_symrelen", "linalg::loglog_fit", "sim::twin_experiment", "entropy::gronwall_certificate"],
        suite.artifact(),
    );
    Ok(SuiteOutput {
        suite,
        artifact: io::diagnostics_csv(&env.comparison.reports).into_bytes(),
        criteria: vec![decay_outcome, stability],
        conservation: Some(decay.conservation.merge(steps.conservation).merge(env.conservation)),
    })
}

fn mollifier_study() -> RunResult<SuiteOutput> {
    let suite = Suite::MollifierStudy;
    let m = studies::mollifier_study(&MOLLIFIER_EPSILONS, &TRACE_EPSILONS, MOLLIFIER_POINTS)?;
    let mut table = Table::new(&["study", "epsilon", "value", "reference", "error"]);
    for r in &m.spacetime.rows {
        table.push(vec!["spacetime".into(), fmt_f64(r.epsilon), fmt_f64(r.value), fmt_f64(r.reference), fmt_f64(r.error)]);
    }
    for r in &m.initial_trace {
        table.push(vec![
            "initial_trace".into(),
            fmt_f64(r.epsilon),
            fmt_f64(r.value),
            fmt_f64(r.half_trace),
            fmt_f64(r.relative_error),
        ]);
    }
    let last = m.initial_trace.last().expect("nonempty ladder");
    let outcome = CriterionOutcome::new(
        11,
        "mollifier rates",
        vec![
            Check::at_least("spacetime_order", m.spacetime.fit.slope, limits::MOLLIFIER_ORDER),
            Check::at_least("spacetime_fit_r2", m.spacetime.fit.r_squared, limits::MOLLIFIER_FIT_R2),
            Check::at_most("trace_relative_error", last.relative_error, limits::TRACE_RELATIVE_ERROR),
            Check::at_most("full_trace_ratio", last.value / last.full_trace, limits::TRACE_FULL_RATIO),
        ],
        vec!["mollify::spacetime_rate_study", "mollify::initial_trace_study"],
        suite.artifact(),
    );
    Ok(SuiteOutput { suite, artifact: table.to_csv().into_bytes(), criteria: vec![outcome], conservation: None })
}

fn simulate(config: &RunConfig) -> RunResult<SuiteOutput> {
    let traj = sim::run(&config.scenario)?;
    let mut bytes = Vec::new();
    for s in &traj.snapshots {
        io::write_snapshot(&mut bytes, &s.state)?;
    }
    let mut cons = Conservation::default();
    cons.record(&traj);
    Ok(SuiteOutput { suite: Suite::Simulate, artifact: bytes, criteria: Vec::new(), conservation: Some(cons) })
}
