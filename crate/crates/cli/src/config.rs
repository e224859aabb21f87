//! TOML run configuration.

use serde::{Deserialize, Serialize};
use wied_core::diagnostics::{default_theta, DEFAULT_MARGIN};
use wied_core::{BoundaryCondition, InitialDatum, ProblemSpec, SolverConfig, SpaceTimeGrid};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub problem: ProblemSection,
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_list: Option<Vec<f64>>,
    pub dim: usize,
    pub extents: Vec<[f64; 2]>,
    pub bc: BoundaryCondition,
    #[serde(default)]
    pub smoothing_sigma: f64,
    pub initial: InitialDatum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nx: Vec<usize>,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub nt: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Ball radii of the non-degeneracy test.
    pub radii: Vec<f64>,
    /// Slab lengths of the energy estimate; empty means `eps, 2 eps, 0.25, 0.5`.
    pub slab_radii: Vec<f64>,
    /// Positivity threshold; defaults to `max(10 tol_grad, 1e-8 max u0)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    pub margin: f64,
    pub qr_radius: f64,
    /// Number of interior test bumps for the weak-form residual.
    pub bank_size: usize,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            radii: vec![0.05, 0.1, 0.2],
            slab_radii: Vec::new(),
            theta: None,
            margin: DEFAULT_MARGIN,
            qr_radius: 0.7,
            bank_size: 20,
        }
    }
}

fn keyed(key: &str, e: wied_core::Error) -> CliError {
    CliError::Config(format!("{key}: {e}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.grid()?;
        self.solver.validate().map_err(|e| keyed("solver", e))?;
        let p = &self.problem;
        if p.epsilon.is_none() && p.eps_list.is_none() {
            return Err(CliError::Config("problem: one of epsilon or eps_list is required".into()));
        }
        if let Some(list) = &p.eps_list {
            wied_core::diagnostics::check_eps_list(list).map_err(|e| keyed("problem.eps_list", e))?;
        }
        for eps in self.eps_values() {
            self.spec(eps)?;
        }
        let d = &self.diagnostics;
        if d.radii.is_empty() || d.radii.iter().any(|r| !(*r > 0.0)) {
            return Err(CliError::Config("diagnostics.radii: must be a non-empty list of positive radii".into()));
        }
        if d.slab_radii.iter().any(|r| !(*r > 0.0)) {
            return Err(CliError::Config("diagnostics.slab_radii: radii must be positive".into()));
        }
        if !(d.margin >= 1.0) {
            return Err(CliError::Config(format!("diagnostics.margin: {} must be >= 1", d.margin)));
        }
        if !(d.qr_radius > 0.0) {
            return Err(CliError::Config(format!("diagnostics.qr_radius: {} must be positive", d.qr_radius)));
        }
        if !(10..=50).contains(&d.bank_size) {
            return Err(CliError::Config(format!("diagnostics.bank_size: {} must be in 10..=50", d.bank_size)));
        }
        if let Some(t) = d.theta {
            if !(t > 0.0) {
                return Err(CliError::Config(format!("diagnostics.theta: {t} must be positive")));
            }
        }
        Ok(())
    }

    /// Every epsilon the config mentions, `epsilon` first.
    pub fn eps_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.problem.epsilon.into_iter().collect();
        v.extend(self.problem.eps_list.iter().flatten());
        v
    }

    /// The single-run epsilon: `epsilon`, or the only entry of `eps_list`.
    pub fn epsilon(&self) -> Result<f64, CliError> {
        match (&self.problem.epsilon, &self.problem.eps_list) {
            (Some(e), _) => Ok(*e),
            (None, Some(l)) if l.len() == 1 => Ok(l[0]),
            _ => Err(CliError::Config("problem.epsilon: required for a single run".into())),
        }
    }

    /// The sweep list: `eps_list`, or `[epsilon]`.
    pub fn eps_list(&self) -> Vec<f64> {
        match &self.problem.eps_list {
            Some(l) => l.clone(),
            None => self.problem.epsilon.into_iter().collect(),
        }
    }

    pub fn spec(&self, epsilon: f64) -> Result<ProblemSpec, CliError> {
        let p = &self.problem;
        let mut spec = ProblemSpec::new(p.gamma, epsilon, p.dim, p.bc, p.initial.clone()).map_err(|e| keyed("problem", e))?;
        spec.smoothing_sigma = p.smoothing_sigma;
        spec.validate().map_err(|e| keyed("problem", e))?;
        let grid = self.grid()?;
        spec.sample_initial(&grid).map_err(|e| keyed("problem.initial", e))?;
        Ok(spec)
    }

    pub fn grid(&self) -> Result<SpaceTimeGrid, CliError> {
        let g = &self.grid;
        if self.problem.extents.len() != self.problem.dim || g.nx.len() != self.problem.dim {
            return Err(CliError::Config(format!(
                "grid.nx / problem.extents: need {} entries each",
                self.problem.dim
            )));
        }
        SpaceTimeGrid::new(self.problem.dim, &self.problem.extents, &g.nx, g.t_end, g.nt).map_err(|e| keyed("grid", e))
    }

    pub fn theta(&self, spec: &ProblemSpec) -> Result<f64, CliError> {
        if let Some(t) = self.diagnostics.theta {
            return Ok(t);
        }
        let u0 = spec.sample_initial(&self.grid()?)?;
        Ok(default_theta(self.solver.tol_grad, u0.iter().copied().fold(0.0, f64::max)))
    }

    pub fn slab_radii(&self, epsilon: f64) -> Vec<f64> {
        if self.diagnostics.slab_radii.is_empty() {
            vec![epsilon, 2.0 * epsilon, 0.25, 0.5]
        } else {
            self.diagnostics.slab_radii.clone()
        }
    }
}
