//! Experiment configuration documents (TOML).

use std::path::PathBuf;

use hlab_core::cat0::TargetSpace;
use hlab_core::domain::DomainBox;
use hlab_core::lab::BoundaryPreset;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Dist,
    Volume,
    Moments,
    Mcp,
    Solve,
    Subsolution,
    Moser,
    Lipschitz,
    Lemma53,
    Pansu,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Dist => "dist",
            Self::Volume => "volume",
            Self::Moments => "moments",
            Self::Mcp => "mcp",
            Self::Solve => "solve",
            Self::Subsolution => "subsolution",
            Self::Moser => "moser",
            Self::Lipschitz => "lipschitz",
            Self::Lemma53 => "lemma53",
            Self::Pansu => "pansu",
        }
    }

    fn needs_lattice(self) -> bool {
        matches!(self, Self::Solve | Self::Subsolution | Self::Moser | Self::Lipschitz)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub geometry: Geometry,
    /// Defaults to the target of the boundary preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSpace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Boundary>,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub output: Output,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Geometry {
    pub n: usize,
    /// Box corners; both default to the unit box `[−½, ½]^{2n+1}`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    pub h: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            n: 1,
            lower: None,
            upper: None,
            h: 1.0 / 16.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
pub enum Boundary {
    Preset(BoundaryPreset),
    /// A CSV file in the grid-map format written by `solve`.
    Table(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub seed: u64,
    pub samples: usize,
    pub radius: f64,
    pub tau: f64,
    /// Points as coordinate lists; `dist` takes two, `mcp`, `lemma53` one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ladder: Option<Vec<f64>>,
    /// Averaged-product test pair: `x1-x1`, `x1-y1` or `mixed`.
    pub pair: String,
    /// Pansu field: `x1`, `x1sq`, `t` or `mixed`.
    pub field: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    pub max_sweeps: usize,
    /// Number of random test fields per translation.
    pub etas: usize,
    pub eta_radius: [f64; 2],
    pub radii: Vec<f64>,
    pub center_spacing: f64,
    /// Also solve at `h/2` and compare constants.
    pub refine: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collar: Option<f64>,
    pub max_bases: usize,
    pub max_offsets: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 100_000,
            radius: 1.0,
            tau: 0.5,
            points: None,
            ladder: None,
            pair: "mixed".into(),
            field: "x1sq".into(),
            tol: None,
            max_sweeps: 100_000,
            etas: 20,
            eta_radius: [0.1, 0.3],
            radii: vec![0.25, 0.125],
            center_spacing: 0.125,
            refine: true,
            scales: None,
            collar: None,
            max_bases: 2000,
            max_offsets: 4000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub dir: PathBuf,
}

impl Default for Output {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

fn bad(field: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{field}: {reason}"))
}

fn positive(field: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(field, format!("must be positive, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    pub fn bounds(&self) -> Result<DomainBox, CliError> {
        let n = self.geometry.n;
        let lower = self.geometry.lower.clone().unwrap_or(vec![-0.5; 2 * n + 1]);
        let upper = self.geometry.upper.clone().unwrap_or(vec![0.5; 2 * n + 1]);
        DomainBox::new(lower, upper).map_err(|e| bad("geometry.lower/upper", e))
    }

    pub fn preset(&self) -> Option<BoundaryPreset> {
        match &self.boundary {
            Some(Boundary::Preset(p)) => Some(*p),
            _ => None,
        }
    }

    pub fn target_space(&self) -> Result<TargetSpace, CliError> {
        match (self.target, self.preset()) {
            (Some(t), Some(p)) if t != p.space() => Err(bad(
                "target",
                format!("preset {p:?} maps into {:?}, not {t:?}", p.space()),
            )),
            (Some(t), _) => Ok(t),
            (None, Some(p)) => Ok(p.space()),
            (None, None) => Err(bad("target", "required when the boundary is a table")),
        }
    }

    /// Checks the fields the command uses.
    pub fn validate(&self) -> Result<(), CliError> {
        let g = &self.geometry;
        let nm = &self.numerics;
        if g.n == 0 {
            return Err(bad("geometry.n", "must be at least 1"));
        }
        positive("geometry.h", g.h)?;
        self.bounds()?;
        if let Some(t) = &self.target {
            t.validate().map_err(|e| bad("target", e))?;
        }
        let point_count = |want: usize| -> Result<(), CliError> {
            let pts = nm.points.as_ref().ok_or_else(|| bad("numerics.points", "required"))?;
            if pts.len() != want {
                return Err(bad("numerics.points", format!("expected {want} points, got {}", pts.len())));
            }
            for p in pts {
                if p.len() != 2 * g.n + 1 {
                    return Err(bad("numerics.points", format!("each point needs {} coordinates", 2 * g.n + 1)));
                }
            }
            Ok(())
        };
        let ladder = |field: &str, l: &Option<Vec<f64>>| -> Result<(), CliError> {
            let l = l.as_ref().ok_or_else(|| bad(field, "required"))?;
            if l.is_empty() {
                return Err(bad(field, "must not be empty"));
            }
            for v in l {
                positive(field, *v)?;
            }
            if l.windows(2).any(|w| w[1] >= w[0]) {
                return Err(bad(field, "must be strictly decreasing"));
            }
            Ok(())
        };
        match self.command {
            Command::Dist => point_count(2)?,
            Command::Volume | Command::Moments => {
                positive("numerics.radius", nm.radius)?;
                if nm.samples < 2 {
                    return Err(bad("numerics.samples", "must be at least 2"));
                }
            }
            Command::Mcp => {
                positive("numerics.radius", nm.radius)?;
                if !(nm.tau > 0.0 && nm.tau <= 1.0) {
                    return Err(bad("numerics.tau", format!("must lie in (0, 1], got {}", nm.tau)));
                }
                if nm.samples == 0 {
                    return Err(bad("numerics.samples", "must be positive"));
                }
                if nm.points.is_some() {
                    point_count(1)?;
                }
            }
            Command::Lemma53 => {
                ladder("numerics.ladder", &nm.ladder)?;
                hlab_core::lab::lemma53_pair(&nm.pair).map_err(|e| bad("numerics.pair", e))?;
                if nm.points.is_some() {
                    point_count(1)?;
                }
                if nm.samples < 2 {
                    return Err(bad("numerics.samples", "must be at least 2"));
                }
            }
            Command::Pansu => {
                ladder("numerics.ladder", &nm.ladder)?;
                crate::run::pansu_field(&nm.field)?;
                if nm.samples < 2 {
                    return Err(bad("numerics.samples", "must be at least 2"));
                }
            }
            _ => {}
        }
        if self.command.needs_lattice() {
            if self.boundary.is_none() {
                return Err(bad("boundary", "required"));
            }
            if g.n != 1 {
                return Err(bad("geometry.n", "lattice experiments run on n = 1"));
            }
            self.target_space()?;
            if let Some(t) = nm.tol {
                positive("numerics.tol", t)?;
            }
            if nm.max_sweeps == 0 {
                return Err(bad("numerics.max_sweeps", "must be positive"));
            }
        }
        match self.command {
            Command::Subsolution => {
                if nm.etas == 0 {
                    return Err(bad("numerics.etas", "must be positive"));
                }
                positive("numerics.eta_radius", nm.eta_radius[0])?;
                if nm.eta_radius[1] < nm.eta_radius[0] {
                    return Err(bad("numerics.eta_radius", "need min <= max"));
                }
            }
            Command::Moser => {
                if nm.radii.is_empty() {
                    return Err(bad("numerics.radii", "must not be empty"));
                }
                for r in &nm.radii {
                    positive("numerics.radii", *r)?;
                }
                positive("numerics.center_spacing", nm.center_spacing)?;
            }
            Command::Lipschitz => {
                ladder("numerics.scales", &nm.scales)?;
                if let Some(c) = nm.collar {
                    positive("numerics.collar", c)?;
                }
                if nm.max_bases == 0 || nm.max_offsets == 0 {
                    return Err(bad("numerics.max_bases/max_offsets", "must be positive"));
                }
                for r in &nm.radii {
                    positive("numerics.radii", *r)?;
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Validation(format!("parse error: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SOLVE: &str = r#"
command = "solve"
boundary = { preset = "tripod" }
"#;

    #[test]
    fn minimal_solve_gets_defaults() {
        let c = parse_config(SOLVE).unwrap();
        assert_eq!(c.geometry, Geometry::default());
        assert_eq!(c.numerics.max_sweeps, 100_000);
        assert_eq!(c.target_space().unwrap(), TargetSpace::Spider { legs: 3 });
    }

    #[test]
    fn negative_h_names_the_field() {
        let doc = format!("{SOLVE}\n[geometry]\nh = -0.1\n");
        match parse_config(&doc) {
            Err(CliError::Validation(m)) => assert!(m.contains("geometry.h"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let doc = format!("{SOLVE}\n[numerics]\nsede = 3\n");
        assert!(matches!(parse_config(&doc), Err(CliError::Validation(_))));
        assert!(parse_config("command = \"solve\"\ncolour = 1\nboundary = { preset = \"tripod\" }").is_err());
    }

    #[test]
    fn parse_errors_carry_line_info() {
        let Err(CliError::Validation(m)) = parse_config("command = \"solve\"\n[geometry\n") else {
            panic!()
        };
        assert!(m.contains("line 2"), "{m}");
    }

    #[test]
    fn round_trip() {
        let doc = r#"
command = "lipschitz"
target = { kind = "spider", legs = 3 }
boundary = { preset = "tripod" }
[geometry]
h = 0.125
lower = [-0.5, -0.5, -0.5]
upper = [0.5, 0.5, 0.5]
[numerics]
scales = [0.5, 0.25]
seed = 4
"#;
        let c = parse_config(doc).unwrap();
        let again = parse_config(&c.to_toml()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn mismatched_target_is_rejected() {
        let doc = "command = \"solve\"\ntarget = { kind = \"euclidean\", dim = 1 }\nboundary = { preset = \"tripod\" }";
        assert!(parse_config(doc).is_err());
    }
}
