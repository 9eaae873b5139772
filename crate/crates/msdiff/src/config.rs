//! Run configuration in TOML.
//!
//! ```toml
//! seed = 7
//! workers = 2
//! out = "out"
//! suites = ["flux-certify", "convergence-study"]
//!
//! [grid]
//! cells = [64]
//! lengths = [1.0]
//!
//! [diffusion]
//! species = 2
//! uniform = 1.0            # or: matrix = [[0.0, 1.0], [1.0, 0.0]]
//!
//! [initial]
//! background = [0.5, 0.5]
//! [[initial.modes]]
//! amplitudes = [0.25, -0.25]
//! wavevector = [1]
//! phase = 0.0
//!
//! [time]
//! horizon = 0.05
//! cfl = 0.25               # or: dt = 1e-4
//! scheme = "euler"         # or "heun"
//! cadence = 1
//!
//! [diagnostics]
//! delta = 0.05
//! admissibility = "enforce" # or "report"
//!
//! [perturbation]
//! amplitude = 0.02
//! wavevector = [1]
//! direction = [1.0, -1.0]  # optional
//!
//! [studies]
//! levels = 3
//! ```

use std::ops::Range;
use std::path::PathBuf;

use serde::Deserialize;
use toml::Spanned;

use msdiff_core::entropy::AdmissibilityPolicy;
use msdiff_core::msflux::StabilityConstants;
use msdiff_core::sim::{InitialData, Mode, Perturbation, Scenario, StepPolicy, TimeScheme, DEFAULT_CFL, DEFAULT_DELTA};
use msdiff_core::{DiffusionMatrix, Error as CoreError, PeriodicGrid};

use crate::error::ConfigError;
use crate::suites::Suite;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    workers: Option<usize>,
    out: Option<String>,
    #[serde(default)]
    suites: Vec<Spanned<String>>,
    grid: Spanned<RawGrid>,
    diffusion: Spanned<RawDiffusion>,
    initial: Spanned<RawInitial>,
    time: Spanned<RawTime>,
    #[serde(default)]
    diagnostics: Option<Spanned<RawDiagnostics>>,
    #[serde(default)]
    perturbation: Option<Spanned<RawPerturbation>>,
    #[serde(default)]
    studies: Option<Spanned<StudySettings>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    cells: Vec<usize>,
    lengths: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiffusion {
    species: usize,
    matrix: Option<Spanned<Vec<Vec<f64>>>>,
    uniform: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    background: Vec<f64>,
    #[serde(default)]
    modes: Vec<Spanned<RawMode>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMode {
    amplitudes: Vec<f64>,
    wavevector: Vec<i32>,
    #[serde(default)]
    phase: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    horizon: f64,
    cfl: Option<f64>,
    dt: Option<f64>,
    #[serde(default)]
    scheme: Option<Spanned<String>>,
    cadence: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiagnostics {
    delta: Option<Spanned<f64>>,
    admissibility: Option<Spanned<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPerturbation {
    amplitude: f64,
    wavevector: Vec<i32>,
    direction: Option<Vec<f64>>,
}

/// Sizes of the randomized and refinement studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySettings {
    /// Random force-flux systems.
    pub flux_samples: usize,
    /// Random shifted compositions for the operator identities.
    pub algebra_samples: usize,
    /// Random `(d, z, delta)` for the coercivity bound.
    pub spectral_samples: usize,
    /// Random field pairs for the error-term bounds.
    pub error_term_pairs: usize,
    /// Points per axis of the entropy-distance sweep.
    pub ck_points: usize,
    /// Dyadic refinement levels, starting from the configured grid.
    pub levels: usize,
    /// Time-step halvings in the identical-data study.
    pub halvings: usize,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            flux_samples: 10_000,
            algebra_samples: 1_000,
            spectral_samples: 10_000,
            error_term_pairs: 1_000,
            ck_points: 1_000,
            levels: 3,
            halvings: 3,
        }
    }
}

/// A fully validated run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub policy: AdmissibilityPolicy,
    pub suites: Vec<Suite>,
    pub out: PathBuf,
    pub seed: u64,
    pub workers: usize,
    pub studies: StudySettings,
}

/// Maps byte offsets of the source to 1-based lines and columns.
struct Locator<'a> {
    text: &'a str,
}

impl Locator<'_> {
    fn position(&self, offset: usize) -> (usize, usize) {
        let head = &self.text[..offset.min(self.text.len())];
        let line = head.matches('\n').count() + 1;
        let column = head.len() - head.rfind('\n').map_or(0, |p| p + 1) + 1;
        (line, column)
    }

    fn line(&self, span: Range<usize>) -> Option<usize> {
        Some(self.position(span.start).0)
    }
}

fn invalid(line: Option<usize>, invariant: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation { line, invariant, message: message.into() }
}

fn wavevector(k: &[i32], dim: usize, line: Option<usize>) -> Result<[i32; 3], ConfigError> {
    if k.len() != dim {
        return Err(invalid(line, "dimension", format!("wavevector has {} entries for a {dim}-d grid", k.len())));
    }
    let mut out = [0; 3];
    out[..dim].copy_from_slice(k);
    Ok(out)
}

/// Command-line values that replace their config counterparts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub suites: Option<Vec<Suite>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

/// Parses and validates a config. Every physical invariant is checked here.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_with(text, &Overrides::default())
}

/// As [`parse_config`], with overrides applied before validation.
pub fn parse_config_with(text: &str, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let loc = Locator { text };
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| loc.position(s.start));
        ConfigError::Parse { line, column, message: e.message().to_string() }
    })?;

    let mut suites = Vec::new();
    for s in &raw.suites {
        let suite = s
            .get_ref()
            .parse::<Suite>()
            .map_err(|m| invalid(loc.line(s.span()), "suite name", m))?;
        if !suites.contains(&suite) {
            suites.push(suite);
        }
    }
    if let Some(list) = &overrides.suites {
        suites.clear();
        list.iter().for_each(|s| {
            if !suites.contains(s) {
                suites.push(*s)
            }
        });
    }

    let grid_line = loc.line(raw.grid.span());
    let g = raw.grid.get_ref();
    let lengths = g.lengths.clone().unwrap_or_else(|| vec![1.0; g.cells.len()]);
    let grid = PeriodicGrid::new(&g.cells, &lengths).map_err(|e| invalid(grid_line, "grid", e.to_string()))?;
    let dim = grid.dim();

    let diff_line = loc.line(raw.diffusion.span());
    let d = raw.diffusion.get_ref();
    let diffusion = match (&d.matrix, d.uniform) {
        (Some(m), None) => {
            let line = loc.line(m.span());
            let rows = m.get_ref();
            if rows.len() != d.species || rows.iter().any(|r| r.len() != d.species) {
                return Err(invalid(line, "dimension", format!("matrix must be {0} x {0}", d.species)));
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            DiffusionMatrix::from_dense(d.species, &flat).map_err(|e| match e {
                CoreError::InvalidDiffusion { reason: "symmetry", .. } => invalid(line, "symmetry", e.to_string()),
                _ => invalid(line, "positive coefficients", e.to_string()),
            })?
        }
        (None, Some(u)) => DiffusionMatrix::uniform(d.species, u)
            .map_err(|e| invalid(diff_line, "positive coefficients", e.to_string()))?,
        _ => return Err(invalid(diff_line, "diffusion", "give exactly one of `matrix` or `uniform`")),
    };

    let init_line = loc.line(raw.initial.span());
    let init = raw.initial.get_ref();
    let modes = init
        .modes
        .iter()
        .map(|m| {
            let line = loc.line(m.span());
            let m = m.get_ref();
            Ok(Mode { amplitudes: m.amplitudes.clone(), wavevector: wavevector(&m.wavevector, dim, line)?, phase: m.phase })
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;
    let initial = if modes.is_empty() {
        InitialData::Uniform(init.background.clone())
    } else {
        InitialData::Modes { background: init.background.clone(), modes }
    };

    let time_line = loc.line(raw.time.span());
    let t = raw.time.get_ref();
    let step = match (t.cfl, t.dt) {
        (Some(c), None) => StepPolicy::Cfl(c),
        (None, Some(dt)) => StepPolicy::Fixed(dt),
        (None, None) => StepPolicy::Cfl(DEFAULT_CFL),
        (Some(_), Some(_)) => return Err(invalid(time_line, "time step", "give at most one of `cfl` or `dt`")),
    };
    let scheme = match &t.scheme {
        None => TimeScheme::Euler,
        Some(s) => match s.get_ref().as_str() {
            "euler" => TimeScheme::Euler,
            "heun" => TimeScheme::Heun,
            other => return Err(invalid(loc.line(s.span()), "time scheme", format!("unknown scheme `{other}`"))),
        },
    };

    let (mut delta, mut delta_line, mut policy) = (DEFAULT_DELTA, None, AdmissibilityPolicy::Enforce);
    if let Some(diag) = &raw.diagnostics {
        if let Some(dl) = &diag.get_ref().delta {
            delta = *dl.get_ref();
            delta_line = loc.line(dl.span());
        }
        if let Some(p) = &diag.get_ref().admissibility {
            policy = match p.get_ref().as_str() {
                "enforce" => AdmissibilityPolicy::Enforce,
                "report" => AdmissibilityPolicy::Report,
                other => {
                    return Err(invalid(loc.line(p.span()), "admissibility policy", format!("unknown policy `{other}`")))
                }
            };
        }
    }

    let perturbation = match &raw.perturbation {
        None => None,
        Some(p) => {
            let line = loc.line(p.span());
            let p = p.get_ref();
            let mut pert = Perturbation::new(p.amplitude, wavevector(&p.wavevector, dim, line)?, diffusion.species());
            if let Some(dir) = &p.direction {
                pert.direction = dir.clone();
            }
            Some((pert, line))
        }
    };

    let mut scenario = Scenario::new(grid, diffusion, initial, t.horizon);
    scenario.step = step;
    scenario.scheme = scheme;
    scenario.cadence = t.cadence.unwrap_or(1);
    scenario.delta = delta;
    scenario.perturbation = perturbation.as_ref().map(|(p, _)| p.clone());

    scenario.validate().map_err(|e| match e {
        CoreError::DeltaNonpositive(_) => invalid(delta_line, "admissibility", e.to_string()),
        CoreError::CflViolation { .. } => invalid(time_line, "stability limit", e.to_string()),
        CoreError::InvalidScenario("horizon must be positive") => invalid(time_line, "horizon", e.to_string()),
        CoreError::InvalidScenario(m) if m.contains("time step") || m.contains("CFL") => {
            invalid(time_line, "time step", e.to_string())
        }
        _ => invalid(init_line, "simplex initial data", e.to_string()),
    })?;
    scenario.initial_state().map_err(|e| invalid(init_line, "simplex initial data", e.to_string()))?;
    if let Some((_, line)) = &perturbation {
        scenario.twin_initial_states().map_err(|e| invalid(*line, "simplex perturbed data", e.to_string()))?;
    }

    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(delta_line, "admissibility", format!("shift {delta} must lie in (0, 1)")));
    }
    let uses_shift = suites.iter().any(|s| s.uses_shift());
    if uses_shift && policy == AdmissibilityPolicy::Enforce {
        // the upper bound does not depend on the flux bound
        let upper = StabilityConstants::evaluate(&scenario.diffusion, delta, 0.0).delta_upper;
        if delta >= upper {
            return Err(invalid(
                delta_line,
                "admissibility",
                format!("shift {delta} must satisfy 0 < delta < min(1, mu / (4 C4)) = {upper:e}; set admissibility = \"report\" to evaluate anyway"),
            ));
        }
    }
    if suites.iter().any(|s| s.needs_perturbation()) && scenario.perturbation.is_none() {
        return Err(invalid(None, "perturbation", "identity-study and twin-study need a [perturbation] table"));
    }
    if suites.contains(&Suite::ConvergenceStudy) {
        scenario.exact_solution(0.0).map_err(|e| invalid(diff_line, "closed-form reference", e.to_string()))?;
    }

    let studies = raw.studies.as_ref().map(|s| *s.get_ref()).unwrap_or_default();
    if studies.levels < 2 {
        return Err(invalid(raw.studies.as_ref().and_then(|s| loc.line(s.span())), "refinement", "levels must be at least 2"));
    }

    Ok(RunConfig {
        scenario,
        policy,
        suites,
        out: overrides.out.clone().unwrap_or_else(|| PathBuf::from(raw.out.unwrap_or_else(|| "out".to_string()))),
        seed: overrides.seed.or(raw.seed).unwrap_or(0),
        workers: overrides.workers.or(raw.workers).unwrap_or(1).max(1),
        studies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BINARY: &str = r#"
seed = 7
suites = ["convergence-study"]

[grid]
cells = [64]

[diffusion]
species = 2
matrix = [[0.0, 1.0], [1.0, 0.0]]

[initial]
background = [0.5, 0.5]
[[initial.modes]]
amplitudes = [0.25, -0.25]
wavevector = [1]

[time]
horizon = 0.05
"#;

    #[test]
    fn minimal_binary_is_valid() {
        let c = parse_config(BINARY).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.suites, vec![Suite::ConvergenceStudy]);
        assert_eq!(c.scenario.species(), 2);
        assert_eq!(c.scenario.grid.len(), 64);
        assert_eq!(c.workers, 1);
        assert_eq!(c.studies, StudySettings::default());
    }

    #[test]
    fn asymmetric_matrix_names_symmetry() {
        let text = BINARY.replace("[[0.0, 1.0], [1.0, 0.0]]", "[[0.0, 1.0], [2.0, 0.0]]");
        match parse_config(&text).unwrap_err() {
            ConfigError::Validation { line, invariant, .. } => {
                assert_eq!(invariant, "symmetry");
                assert_eq!(line, Some(10));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn parse_errors_carry_location() {
        let text = BINARY.replace("horizon = 0.05", "horizon = ");
        match parse_config(&text).unwrap_err() {
            ConfigError::Parse { line, .. } => assert_eq!(line, 19),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn off_simplex_background_rejected() {
        let text = BINARY.replace("background = [0.5, 0.5]", "background = [0.5, 0.6]");
        let e = parse_config(&text).unwrap_err();
        assert!(matches!(e, ConfigError::Validation { invariant: "simplex initial data", .. }), "{e}");
    }

    #[test]
    fn negative_initial_data_rejected() {
        let text = BINARY.replace("[0.25, -0.25]", "[0.75, -0.75]");
        let e = parse_config(&text).unwrap_err();
        assert!(matches!(e, ConfigError::Validation { invariant: "simplex initial data", .. }), "{e}");
    }

    #[test]
    fn shift_rules() {
        let twin = BINARY.replace(r#"suites = ["convergence-study"]"#, r#"suites = ["twin-study"]"#)
            + "\n[perturbation]\namplitude = 0.01\nwavevector = [1]\n";
        let big = twin.clone() + "\n[diagnostics]\ndelta = 1.0\nadmissibility = \"report\"\n";
        let e = parse_config(&big).unwrap_err();
        assert!(matches!(e, ConfigError::Validation { invariant: "admissibility", .. }), "{e}");
        assert!(e.to_string().contains("(0, 1)"));

        let enforced = twin.clone() + "\n[diagnostics]\ndelta = 0.05\n";
        let e = parse_config(&enforced).unwrap_err();
        assert!(e.to_string().contains("mu / (4 C4)"), "{e}");

        let reported = twin.clone() + "\n[diagnostics]\ndelta = 0.05\nadmissibility = \"report\"\n";
        assert_eq!(parse_config(&reported).unwrap().policy, AdmissibilityPolicy::Report);

        let tiny = twin + "\n[diagnostics]\ndelta = 1e-4\n";
        assert_eq!(parse_config(&tiny).unwrap().scenario.delta, 1e-4);
    }

    #[test]
    fn twin_study_needs_perturbation() {
        let text = BINARY.replace(r#"suites = ["convergence-study"]"#, r#"suites = ["identity-study"]"#);
        let e = parse_config(&text).unwrap_err();
        assert!(matches!(e, ConfigError::Validation { invariant: "perturbation", .. }), "{e}");
    }

    #[test]
    fn unknown_suite_and_keys() {
        let text = BINARY.replace("convergence-study", "everything");
        let e = parse_config(&text).unwrap_err();
        assert!(matches!(e, ConfigError::Validation { invariant: "suite name", line: Some(3), .. }), "{e}");
        let text = BINARY.replace("horizon = 0.05", "horizon = 0.05\nwibble = 1");
        assert!(matches!(parse_config(&text).unwrap_err(), ConfigError::Parse { .. }));
    }

    #[test]
    fn overrides_replace_config_values() {
        let o = Overrides { suites: Some(vec![Suite::FluxCertify]), seed: Some(11), out: None, workers: Some(3) };
        let c = parse_config_with(BINARY, &o).unwrap();
        assert_eq!((c.suites, c.seed, c.workers), (vec![Suite::FluxCertify], 11, 3));
        let o = Overrides { suites: Some(vec![Suite::IdentityStudy]), ..Overrides::default() };
        assert!(matches!(
            parse_config_with(BINARY, &o).unwrap_err(),
            ConfigError::Validation { invariant: "perturbation", .. }
        ));
    }

    #[test]
    fn unstable_step_rejected() {
        let text = BINARY.replace("horizon = 0.05", "horizon = 0.05\ndt = 0.01");
        let e = parse_config(&text).unwrap_err();
        assert!(matches!(e, ConfigError::Validation { invariant: "stability limit", .. }), "{e}");
    }
}
