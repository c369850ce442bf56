//! Scenario files: TOML documents with `[domain]`, `[curvature]`, `[flow]`,
//! `[continuation]` and `[output]` tables. Every table and key is optional
//! except `flow.sigma`; unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use hypflow::flow::FlowConfig;
use hypflow::graphgeom::{DomainDescriptor, DomainKind};
use hypflow::symfunc::{CurvatureFamily, CurvatureFunctionSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub domain: DomainSection,
    #[serde(default)]
    pub curvature: CurvatureSection,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub continuation: ContinuationSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    /// `ball` or `interval`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Ball radius or interval half-length.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvatureSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_init: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cfl_safety: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steady_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diag_stride: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuationSection {
    /// Finest level index `k_max`; levels `0..=k_max` are solved.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSpec {
    pub directory: PathBuf,
    pub prefix: String,
}

/// A validated scenario. `echo` is the input with every default filled in.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub config: FlowConfig<f64>,
    pub levels: usize,
    pub output: OutputSpec,
    pub echo: ScenarioFile,
}

pub const DEFAULT_LEVELS: usize = 2;

fn parse_kind(kind: &str) -> Option<DomainKind> {
    match kind.to_ascii_lowercase().as_str() {
        "ball" | "radial-ball" | "radialball" => Some(DomainKind::RadialBall),
        "interval" | "interval-1d" | "interval1d" => Some(DomainKind::Interval1D),
        _ => None,
    }
}

fn kind_name(kind: DomainKind) -> &'static str {
    match kind {
        DomainKind::RadialBall => "ball",
        DomainKind::Interval1D => "interval",
    }
}

fn invalid(key: &str, err: impl std::fmt::Display) -> CliError {
    CliError::Scenario(format!("{key}: {err}"))
}

impl ScenarioFile {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Scenario(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario tables serialize")
    }

    /// Fills defaults and validates every range.
    pub fn resolve(&self) -> Result<Scenario, CliError> {
        let d = &self.domain;
        let kind_str = d.kind.clone().unwrap_or_else(|| "ball".into());
        let kind = parse_kind(&kind_str)
            .ok_or_else(|| invalid("domain.kind", format!("expected `ball` or `interval`, got `{kind_str}`")))?;
        let n = match kind {
            DomainKind::Interval1D => match d.n {
                None | Some(1) => 1,
                Some(other) => return Err(invalid("domain.n", format!("an interval has n = 1, got {other}"))),
            },
            DomainKind::RadialBall => d.n.unwrap_or(2),
        };
        let extent = d.extent.unwrap_or(1.0);
        let nodes = d.nodes.unwrap_or(400);
        let domain = DomainDescriptor::new(kind, n, extent, nodes).map_err(|e| invalid("domain", e))?;

        let c = &self.curvature;
        let family_str = c.family.clone().unwrap_or_else(|| "gauss-root".into());
        let family = CurvatureFamily::parse(&family_str).ok_or_else(|| {
            invalid("curvature.family", format!("expected mean, gauss-root or hessian-quotient, got `{family_str}`"))
        })?;
        let l = match family {
            CurvatureFamily::HessianQuotient => c.l.unwrap_or(n.saturating_sub(1)),
            _ => {
                if c.l.is_some() {
                    return Err(invalid("curvature.l", "only the hessian-quotient family takes l"));
                }
                0
            }
        };
        let fspec = CurvatureFunctionSpec::new(family, n, l).map_err(|e| invalid("curvature", e))?;

        let f = &self.flow;
        let sigma = f.sigma.ok_or_else(|| invalid("flow.sigma", "missing required key"))?;
        if !(sigma > 0.0 && sigma < 1.0) {
            return Err(invalid("flow.sigma", format!("sigma must lie in (0,1), got {sigma}")));
        }
        let mut config = FlowConfig::new(domain, fspec, sigma).map_err(|e| invalid("flow", e))?;
        if let Some(v) = f.sigma_init {
            config.sigma_init = v;
        }
        if let Some(v) = f.epsilon {
            config.epsilon = v;
        }
        if let Some(v) = f.cfl_safety {
            config.cfl_safety = v;
        }
        if let Some(v) = f.t_max {
            config.t_max = v;
        }
        if let Some(v) = f.steady_tol {
            config.steady_tol = v;
        }
        if let Some(v) = f.diag_stride {
            config.diag_stride = v;
        }
        config.validate().map_err(|e| invalid("flow", e))?;

        let levels = self.continuation.levels.unwrap_or(DEFAULT_LEVELS);
        if levels == 0 {
            return Err(invalid("continuation.levels", "need at least 1"));
        }
        let output = OutputSpec {
            directory: self.output.directory.clone().unwrap_or_else(|| PathBuf::from("out")),
            prefix: self.output.prefix.clone().unwrap_or_else(|| "run".into()),
        };
        if output.prefix.is_empty() || output.prefix.contains(['/', '\\']) {
            return Err(invalid("output.prefix", "must be a non-empty file name"));
        }

        let echo = ScenarioFile {
            domain: DomainSection {
                kind: Some(kind_name(kind).into()),
                n: Some(n),
                extent: Some(extent),
                nodes: Some(nodes),
            },
            curvature: CurvatureSection {
                family: Some(family.name().into()),
                l: (family == CurvatureFamily::HessianQuotient).then_some(l),
            },
            flow: FlowSection {
                sigma: Some(config.sigma),
                sigma_init: Some(config.sigma_init),
                epsilon: Some(config.epsilon),
                cfl_safety: Some(config.cfl_safety),
                t_max: Some(config.t_max),
                steady_tol: Some(config.steady_tol),
                diag_stride: Some(config.diag_stride),
            },
            continuation: ContinuationSection { levels: Some(levels) },
            output: OutputSection { directory: Some(output.directory.clone()), prefix: Some(output.prefix.clone()) },
        };
        Ok(Scenario { config, levels, output, echo })
    }
}

pub fn parse_scenario_str(text: &str) -> Result<Scenario, CliError> {
    ScenarioFile::from_toml(text)?.resolve()
}

pub fn parse_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    parse_scenario_str(&text).map_err(|e| match e {
        CliError::Scenario(msg) => CliError::Scenario(format!("{}: {msg}", path.display())),
        other => other,
    })
}
