//! Structured-text (TOML) sections describing kernels, discretizations,
//! nonlinearities and forcings, with builders into the library types.

use crate::error::{Error, Result};
use crate::history::HistoryGrid;
use crate::kernels::{
    make_kernel, tabulated_from_csv, KernelFamily, KernelSpec, NodeRule, QuadratureSpec,
    SampleGrid,
};
use crate::spectral::{NonlinearitySpec, SpectralField};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

/// `[kernel]` section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    /// "exponential", "compact-linear" or "tabulated".
    pub family: String,
    pub delta: Option<f64>,
    pub support: Option<f64>,
    /// Two-column CSV (s, μ) for tabulated kernels, relative to the config.
    pub csv: Option<String>,
    #[serde(default = "default_sample_count")]
    pub sample_count: usize,
}

fn default_sample_count() -> usize {
    512
}

impl KernelConfig {
    pub fn exponential(delta: f64) -> Self {
        Self {
            family: "exponential".into(),
            delta: Some(delta),
            support: None,
            csv: None,
            sample_count: default_sample_count(),
        }
    }

    pub fn build(&self, base_dir: &Path) -> Result<KernelSpec> {
        let family = match self.family.as_str() {
            "exponential" => KernelFamily::Exponential {
                delta: self
                    .delta
                    .ok_or_else(|| Error::Config("exponential kernel needs `delta`".into()))?,
            },
            "compact-linear" => KernelFamily::CompactLinear {
                support: self
                    .support
                    .ok_or_else(|| Error::Config("compact-linear kernel needs `support`".into()))?,
            },
            "tabulated" => {
                let rel = self
                    .csv
                    .as_ref()
                    .ok_or_else(|| Error::Config("tabulated kernel needs `csv`".into()))?;
                tabulated_from_csv(base_dir.join(rel))?
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown kernel family `{other}` (expected exponential, compact-linear or tabulated)"
                )))
            }
        };
        make_kernel(
            family,
            SampleGrid {
                count: self.sample_count,
                ..SampleGrid::default()
            },
        )
    }
}

/// `[discretization]` section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationConfig {
    pub modes: usize,
    pub s_nodes: usize,
    #[serde(default = "default_node_rule")]
    pub node_rule: String,
    pub dt: f64,
    pub t_final: f64,
    /// Full-state snapshot cadence in steps (0 = automatic).
    #[serde(default)]
    pub store_every: usize,
}

fn default_node_rule() -> String {
    "geometric".into()
}

impl DiscretizationConfig {
    pub fn quadrature_spec(&self) -> Result<QuadratureSpec> {
        let rule = match self.node_rule.as_str() {
            "geometric" => NodeRule::Geometric,
            "uniform" => NodeRule::Uniform,
            "composite" => NodeRule::Composite,
            other => {
                return Err(Error::Config(format!(
                    "unknown node rule `{other}` (expected geometric, uniform or composite)"
                )))
            }
        };
        Ok(QuadratureSpec {
            rule,
            count: self.s_nodes,
            s_min_factor: 1e-4,
        })
    }

    pub fn build_grid(&self, kernel: KernelSpec) -> Result<Arc<HistoryGrid>> {
        HistoryGrid::new(kernel, &self.quadrature_spec()?)
    }
}

/// `[nonlinearity]` section: ascending coefficients of φ starting at the
/// constant term, which must vanish.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityConfig {
    pub coefficients: Vec<f64>,
}

impl NonlinearityConfig {
    pub fn build(&self) -> Result<NonlinearitySpec> {
        NonlinearitySpec::new(&self.coefficients)
    }
}

/// `[forcing]` section: sine-mode coefficients of the time-independent f.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingConfig {
    pub mode_coefficients: Vec<f64>,
}

impl ForcingConfig {
    pub fn build(&self, modes: usize) -> Result<SpectralField> {
        if self.mode_coefficients.len() > modes {
            return Err(Error::Config(format!(
                "forcing has {} coefficients but the discretization keeps {modes} modes",
                self.mode_coefficients.len()
            )));
        }
        let mut coeffs = self.mode_coefficients.clone();
        coeffs.resize(modes, 0.0);
        Ok(SpectralField::new(coeffs))
    }
}
