//! Experiment configuration: one TOML document, a section per subcommand.

use crate::CliError;
use cusp_spectral::bcontinuation::ContourSpec;
use cusp_spectral::escape::ReducedPhaseGrid;
use cusp_spectral::flow::BumpObservable;
use cusp_spectral::indicial::ModelOperator;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Roots,
    Eigendist,
    Resolvent,
    Residue,
    Escape,
    Flow,
    Correlate,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Roots => "roots",
            Command::Eigendist => "eigendist",
            Command::Resolvent => "resolvent",
            Command::Residue => "residue",
            Command::Escape => "escape",
            Command::Flow => "flow",
            Command::Correlate => "correlate",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A complex number written `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct C(pub [f64; 2]);

impl C {
    pub fn re(x: f64) -> Self {
        C([x, 0.0])
    }

    pub fn z(&self) -> Complex64 {
        Complex64::new(self.0[0], self.0[1])
    }
}

/// Accepts `re` or `re,im`.
impl FromStr for C {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let num = |x: &str| x.parse::<f64>().map_err(|e| format!("bad number {x:?}: {e}"));
        match parts.as_slice() {
            [re] => Ok(C([num(re)?, 0.0])),
            [re, im] => Ok(C([num(re)?, num(im)?])),
            _ => Err(format!("expected `re` or `re,im`, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RootsConfig {
    pub d: usize,
    pub h: f64,
    pub s: C,
    pub shift: C,
    pub n_max: usize,
    /// Bound on the distance between jet-matrix roots and the closed form.
    pub tolerance: f64,
}

impl Default for RootsConfig {
    fn default() -> Self {
        RootsConfig { d: 1, h: 1.0, s: C::re(0.0), shift: C::re(0.0), n_max: 3, tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchName {
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigendistConfig {
    pub d: usize,
    pub h: f64,
    pub lambda: C,
    pub shift: C,
    pub branch: BranchName,
    /// Multi-index `μ` (Plus) or exponents of the monomial `Υ` (Minus).
    pub exponents: Vec<usize>,
    /// Widths of the Gaussian test functions.
    pub sigmas: Vec<f64>,
    pub tolerance: f64,
}

impl Default for EigendistConfig {
    fn default() -> Self {
        EigendistConfig {
            d: 2,
            h: 1.0,
            lambda: C([0.4, 0.3]),
            shift: C::re(0.0),
            branch: BranchName::Plus,
            exponents: vec![1, 0],
            sigmas: vec![0.2, 0.3, 0.4],
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResolventConfig {
    pub d: usize,
    pub h: f64,
    pub shift: C,
    pub s: C,
    /// Contour abscissas in `λ`; the first is the reference contour.
    pub rhos: Vec<f64>,
    pub height: f64,
    pub panels: usize,
    pub tail_tol: f64,
    /// Gaussian profile in `r` of the right side.
    pub center: f64,
    pub sigma: f64,
    pub r_range: [f64; 2],
    pub r_points: usize,
    pub y_range: [f64; 2],
    pub y_points: usize,
    pub tolerance: f64,
}

impl Default for ResolventConfig {
    fn default() -> Self {
        ResolventConfig {
            d: 1,
            h: 1.0,
            shift: C::re(0.0),
            s: C([1.0, 0.3]),
            rhos: vec![0.0, -2.0, -3.0],
            height: 40.0,
            panels: 80,
            tail_tol: 1e-8,
            center: 0.0,
            sigma: 0.5,
            r_range: [-3.0, 3.0],
            r_points: 61,
            y_range: [-2.0, 2.0],
            y_points: 41,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResidueConfig {
    pub d: usize,
    pub h: f64,
    /// Exponents of the monomial `Υ`.
    pub exponents: Vec<usize>,
    pub j_max: usize,
    pub sigma: f64,
    pub tolerance: f64,
}

impl Default for ResidueConfig {
    fn default() -> Self {
        ResidueConfig { d: 2, h: 1.0, exponents: vec![1, 0], j_max: 3, sigma: 0.3, tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EscapeConfig {
    pub n_alpha: usize,
    pub n_lat: usize,
    pub n_lon: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub t_prime: f64,
    pub samples: usize,
    pub max_norm: f64,
}

impl Default for EscapeConfig {
    fn default() -> Self {
        let g = ReducedPhaseGrid::default();
        EscapeConfig {
            n_alpha: g.n_alpha,
            n_lat: g.n_lat,
            n_lon: g.n_lon,
            delta: g.delta,
            epsilon: g.epsilon,
            t_prime: 1.0,
            samples: 100_000,
            max_norm: 1e6,
        }
    }
}

impl EscapeConfig {
    pub fn grid(&self) -> ReducedPhaseGrid {
        ReducedPhaseGrid { n_alpha: self.n_alpha, n_lat: self.n_lat, n_lon: self.n_lon, delta: self.delta, epsilon: self.epsilon }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub d: usize,
    /// Number of seeded initial points.
    pub points: usize,
    pub t_max: f64,
    pub dt: f64,
    /// Integrator tolerance of the numerical cross-check.
    pub ode_tol: f64,
    pub tolerance: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { d: 1, points: 8, t_max: 6.0, dt: 0.5, ode_tol: 1e-12, tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelateConfig {
    pub a: BumpObservable,
    pub b: BumpObservable,
    pub t_max: f64,
    pub dt: f64,
    pub samples: usize,
    /// Points of the Laplace probe, `Re s > 0`.
    pub laplace: Vec<C>,
}

impl Default for CorrelateConfig {
    fn default() -> Self {
        let bump = BumpObservable { center: (0.0, 2.0), radius: 0.3, order: 2, amplitude: 1.0, offset: 0.0 };
        CorrelateConfig { a: bump, b: bump, t_max: 4.0, dt: 0.1, samples: 20_000, laplace: vec![C::re(0.5), C::re(1.0), C([1.0, 1.0])] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Achieved {
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Record of a finished run, appended to the config it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub status: String,
    pub versions: BTreeMap<String, String>,
    pub tolerances: BTreeMap<String, Achieved>,
    /// Artifact file name to its SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Option<Command>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub roots: RootsConfig,
    pub eigendist: EigendistConfig,
    pub resolvent: ResolventConfig,
    pub residue: ResidueConfig,
    pub escape: EscapeConfig,
    pub flow: FlowConfig,
    pub correlate: CorrelateConfig,
    /// Present in manifests; ignored on input.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<Manifest>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            command: None,
            seed: 0,
            output_dir: PathBuf::from("out"),
            roots: Default::default(),
            eigendist: Default::default(),
            resolvent: Default::default(),
            residue: Default::default(),
            escape: Default::default(),
            flow: Default::default(),
            correlate: Default::default(),
            manifest: None,
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Validation(msg()))
    }
}

fn positive(name: &str, x: f64) -> Result<(), CliError> {
    check(x > 0.0 && x.is_finite(), || format!("{name} must be positive and finite, got {x}"))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Internal(format!("serializing config: {e}")))
    }

    /// SHA-256 prefix of everything that determines the outputs.
    pub fn hash(&self) -> Result<String, CliError> {
        let mut c = self.clone();
        c.manifest = None;
        c.output_dir = PathBuf::new();
        let digest = Sha256::digest(c.to_toml()?.as_bytes());
        Ok(hex(&digest)[..12].to_string())
    }

    pub fn command(&self) -> Result<Command, CliError> {
        self.command.ok_or_else(|| CliError::Validation("no command given".into()))
    }

    /// Checks the section of the selected command against the module
    /// preconditions.
    pub fn validate(&self) -> Result<(), CliError> {
        match self.command()? {
            Command::Roots => {
                let c = &self.roots;
                ModelOperator::new(c.d, c.h, 0.0.into(), c.shift.z())?;
                positive("tolerance", c.tolerance)?;
            }
            Command::Eigendist => {
                let c = &self.eigendist;
                ModelOperator::new(c.d, c.h, c.lambda.z(), c.shift.z())?;
                check(c.exponents.len() == c.d, || format!("exponents need {} entries, got {}", c.d, c.exponents.len()))?;
                check(!c.sigmas.is_empty(), || "sigmas is empty".into())?;
                for &s in &c.sigmas {
                    positive("sigma", s)?;
                }
                positive("tolerance", c.tolerance)?;
            }
            Command::Resolvent => {
                let c = &self.resolvent;
                ModelOperator::new(c.d, c.h, 0.0.into(), c.shift.z())?;
                check(!c.rhos.is_empty(), || "rhos is empty".into())?;
                for &rho in &c.rhos {
                    self.contour(rho).validate()?;
                }
                check(c.rhos[1..].iter().all(|&r| r < c.rhos[0]), || "shifted abscissas must lie left of the first".into())?;
                positive("sigma", c.sigma)?;
                check(c.r_range[0] < c.r_range[1] && c.r_points >= 2, || "bad r grid".into())?;
                check(c.y_range[0] < c.y_range[1] && c.y_points >= 2, || "bad y grid".into())?;
                positive("tolerance", c.tolerance)?;
            }
            Command::Residue => {
                let c = &self.residue;
                check(c.d >= 1 && c.exponents.len() == c.d, || format!("exponents need {} entries", c.d))?;
                positive("h", c.h)?;
                positive("sigma", c.sigma)?;
                positive("tolerance", c.tolerance)?;
            }
            Command::Escape => {
                let c = &self.escape;
                c.grid().validate()?;
                positive("t_prime", c.t_prime)?;
                check(c.samples > 0, || "samples must be positive".into())?;
                check(c.max_norm > c.delta, || "max_norm must exceed delta".into())?;
            }
            Command::Flow => {
                let c = &self.flow;
                check(c.d >= 1 && c.points >= 1, || "flow needs d >= 1 and points >= 1".into())?;
                positive("t_max", c.t_max)?;
                positive("dt", c.dt)?;
                positive("ode_tol", c.ode_tol)?;
                positive("tolerance", c.tolerance)?;
            }
            Command::Correlate => {
                let c = &self.correlate;
                c.a.validate()?;
                c.b.validate()?;
                positive("t_max", c.t_max)?;
                positive("dt", c.dt)?;
                let steps = (c.t_max / c.dt).round();
                check((steps * c.dt - c.t_max).abs() <= 1e-9 * c.t_max, || "t_max must be a multiple of dt".into())?;
                check(c.samples > 0, || "samples must be positive".into())?;
                for s in &c.laplace {
                    check(s.0[0] > 0.0, || format!("Laplace point {:?} needs Re s > 0", s.0))?;
                }
            }
        }
        Ok(())
    }

    pub fn contour(&self, rho: f64) -> ContourSpec {
        let c = &self.resolvent;
        ContourSpec { rho, height: c.height, panels: c.panels, tail_tol: c.tail_tol }
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
