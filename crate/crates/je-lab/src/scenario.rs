//! Scenario configuration: a single human-editable TOML tree per run,
//! the compiled-in scenarios transcribing the three worked constructions
//! (quadratic profile, constant profile, constant profile with the weak
//! moment condition), and the structural validation performed before any
//! numerics start.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{GFunction, Measure, MomentCondition};
use crate::solution::Source;
use crate::spectral::{
    AmplitudeProfile, ConditionsReport, ProfileKind, RoofMode, SpectralDomain, ValidationConfig,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Front parameter M; the train has floor(M - 1) terms.
    #[serde(rename = "M")]
    pub m_param: f64,
    pub profile: AmplitudeProfile,
    pub domain: DomainSpec,
    pub measure: Measure,
    /// Declared asymptotic weight g(y); required by the asymptotic routes.
    #[serde(default)]
    pub g: Option<GFunction>,
    pub grid: GridSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub outputs: Outputs,
    pub paths: Vec<Source>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub validation: ValidationSettings,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub roof_mode: RoofMode,
    pub p_range: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    /// Grid x values are absolute coordinates.
    #[default]
    Absolute,
    /// Grid x values are offsets from the front x = C(y) t.
    Front,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default)]
    pub frame: Frame,
}

impl AxisSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.count <= 1 {
            return vec![self.min];
        }
        (0..self.count)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x: AxisSpec,
    pub y: AxisSpec,
    pub t: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub quadrature: f64,
    pub solver: f64,
    pub reality: f64,
    pub edge: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            quadrature: 1e-9,
            solver: 1e-8,
            reality: 1e-10,
            edge: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    pub csv: PathBuf,
    pub plot_dir: PathBuf,
    pub cache_dir: PathBuf,
    pub summary: PathBuf,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            csv: PathBuf::from("out/run.csv"),
            plot_dir: PathBuf::from("out/plots"),
            cache_dir: PathBuf::from("out/cache"),
            summary: PathBuf::from("out/summary.json"),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub n_nodes: usize,
    pub max_nodes: usize,
    pub gl_order: usize,
    /// Run the node-doubling study once per (y, t) group and reuse the
    /// validated count for the whole sweep.
    pub auto_nodes: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            n_nodes: 96,
            max_nodes: 768,
            gl_order: 8,
            auto_nodes: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationSettings {
    pub s_range: (f64, f64),
    pub s_samples: usize,
    pub moment_exponents: Vec<f64>,
    pub moment_condition: MomentCondition,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        Self {
            s_range: (-6.0, 6.0),
            s_samples: 121,
            moment_exponents: vec![0.5, 1.0],
            moment_condition: MomentCondition::Standard,
        }
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut sc: Scenario = toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
        sc.profile
            .finalize()
            .map_err(|e| Error::Scenario(format!("profile: {e}")))?;
        sc.check_structure()?;
        Ok(sc)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    /// Structural invariants, checked before any numerics.
    pub fn check_structure(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Scenario(msg));
        if self.paths.is_empty() {
            return fail("at least one evaluation path is required".into());
        }
        if self.grid.t.is_empty() {
            return fail("at least one t value is required".into());
        }
        if self.grid.t.iter().any(|t| *t <= 0.0) {
            return fail("t values must be strictly positive".into());
        }
        if self.grid.t.windows(2).any(|w| w[1] <= w[0]) {
            return fail("t values must be strictly increasing".into());
        }
        for (axis, name) in [(&self.grid.x, "x"), (&self.grid.y, "y")] {
            if axis.count == 0 {
                return fail(format!("{name} axis needs at least one point"));
            }
            if axis.min != axis.max && axis.count < 2 {
                return fail(format!("swept {name} axis needs at least two points"));
            }
            if axis.min > axis.max {
                return fail(format!("{name} axis range is reversed"));
            }
        }
        let asymptotic = self
            .paths
            .iter()
            .any(|p| matches!(p, Source::AsymptoticTrain | Source::Logdet));
        if asymptotic {
            if !(self.m_param > 2.0) {
                return fail(format!(
                    "asymptotic paths need M > 2, got M = {}",
                    self.m_param
                ));
            }
            if self.g.is_none() {
                return fail("asymptotic paths need a declared g(y)".into());
            }
            if self.measure.density.is_none() {
                return fail("asymptotic paths need a density component".into());
            }
        }
        if self.paths.contains(&Source::OneSoliton)
            && (self.measure.atoms.len() != 1 || !self.measure.density.is_none())
        {
            return fail("the one-soliton path needs exactly one atom and no density".into());
        }
        if !(self.profile.delta > self.profile.epsilon * self.profile.epsilon) {
            return fail(format!(
                "delta = {} must exceed epsilon^2 = {}",
                self.profile.delta,
                self.profile.epsilon * self.profile.epsilon
            ));
        }
        if !(self.domain.p_range.0 < self.domain.p_range.1) {
            return fail("empty p range".into());
        }
        Ok(())
    }

    pub fn build_domain(&self) -> Result<SpectralDomain> {
        SpectralDomain::new(
            self.profile.clone(),
            self.domain.roof_mode,
            self.domain.p_range,
        )
    }

    pub fn validation_config(&self) -> ValidationConfig {
        ValidationConfig {
            s_range: self.validation.s_range,
            s_samples: self.validation.s_samples,
            grid_p: 200,
            grid_q: 200,
            moment_exponents: self.validation.moment_exponents.clone(),
            phase_tol: 1e-8,
            moment_condition: self.validation.moment_condition,
            seed: self.seed,
        }
    }

    /// Run the admissibility validator on the configured triple.
    pub fn validate_conditions(&self) -> Result<ConditionsReport> {
        let domain = self.build_domain()?;
        Ok(crate::spectral::validate_conditions(
            &domain,
            &self.measure,
            self.g.as_ref(),
            &self.validation_config(),
        ))
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["example1", "example2", "example3"]
    }

    pub fn builtin(name: &str) -> Option<Scenario> {
        let mut sc = match name {
            "example1" => example1(),
            "example2" => example2(),
            "example3" => example3(),
            _ => return None,
        };
        sc.profile.finalize().expect("builtin profile");
        sc.check_structure().expect("builtin scenario is valid");
        Some(sc)
    }
}

fn common_outputs(name: &str) -> Outputs {
    Outputs {
        csv: PathBuf::from(format!("out/{name}.csv")),
        plot_dir: PathBuf::from(format!("out/{name}_plots")),
        cache_dir: PathBuf::from("out/cache"),
        summary: PathBuf::from(format!("out/{name}_summary.json")),
    }
}

/// Quadratic profile C(y) = y^2/24 + 1/16 with the Gaussian strip density
/// exp(-(18 p^2 + 2 q^2 - 1/2)) and g = e^{-y^2}.
fn example1() -> Scenario {
    Scenario {
        name: "example1".into(),
        m_param: 3.0,
        profile: AmplitudeProfile::new(
            ProfileKind::Quadratic {
                a2: 1.0 / 24.0,
                a0: 1.0 / 16.0,
            },
            1.0 / 16.0,
            0.1,
        )
        .expect("valid profile"),
        domain: DomainSpec {
            roof_mode: RoofMode::TangencyLocus,
            p_range: (-1.3, 1.3),
        },
        measure: Measure {
            atoms: vec![],
            density: crate::measure::Density::GaussPq {
                p_coeff: 18.0,
                q_coeff: 2.0,
                offset: -0.5,
            },
        },
        g: Some(GFunction::ExpQuadratic {
            coeff: 1.0,
            offset: 0.0,
        }),
        grid: GridSpec {
            x: AxisSpec {
                min: -16.0,
                max: 4.0,
                count: 41,
                frame: Frame::Front,
            },
            y: AxisSpec {
                min: -1.0,
                max: 1.0,
                count: 3,
                frame: Frame::Absolute,
            },
            t: vec![100.0, 1000.0],
        },
        tolerances: Tolerances::default(),
        outputs: common_outputs("example1"),
        paths: vec![Source::Marchenko, Source::AsymptoticTrain, Source::Logdet],
        solver: SolverSettings::default(),
        validation: ValidationSettings::default(),
        seed: 0,
    }
}

/// Constant profile C = b^2 (b = 1) with density exp(-(12 p)^2) and
/// g = e^{-y^2}.
fn example2() -> Scenario {
    Scenario {
        name: "example2".into(),
        m_param: 3.0,
        profile: AmplitudeProfile::new(ProfileKind::Constant { b_squared: 1.0 }, 0.5, 0.2)
            .expect("valid profile"),
        domain: DomainSpec {
            roof_mode: RoofMode::TangencyLocus,
            p_range: (-0.5, 0.5),
        },
        measure: Measure {
            atoms: vec![],
            density: crate::measure::Density::GaussP { scale: 12.0 },
        },
        g: Some(GFunction::ExpQuadratic {
            coeff: 1.0,
            offset: 0.0,
        }),
        grid: GridSpec {
            x: AxisSpec {
                min: -12.0,
                max: 4.0,
                count: 49,
                frame: Frame::Front,
            },
            y: AxisSpec {
                min: -1.0,
                max: 1.0,
                count: 3,
                frame: Frame::Absolute,
            },
            t: vec![100.0, 1000.0],
        },
        tolerances: Tolerances::default(),
        outputs: common_outputs("example2"),
        paths: vec![Source::Marchenko, Source::AsymptoticTrain, Source::Logdet],
        solver: SolverSettings::default(),
        validation: ValidationSettings::default(),
        seed: 0,
    }
}

/// Constant profile with the rationally damped density
/// 1 / (1 + (12 p)^(2 alpha)) and g = 1 / (1 + y^(2 alpha)); validates
/// against the weak moment condition instead of the exponential one.
fn example3() -> Scenario {
    let mut sc = example2();
    sc.name = "example3".into();
    sc.measure.density = crate::measure::Density::RationalP { alpha: 4 };
    sc.g = Some(GFunction::RationalEven { alpha: 4 });
    sc.validation.moment_condition = MomentCondition::Weak { alpha: 4 };
    sc.outputs = common_outputs("example3");
    sc
}
