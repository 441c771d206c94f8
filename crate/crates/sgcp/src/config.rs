//! Run configuration.
//!
//! Configs are TOML with a strict schema: unknown keys are rejected at any
//! level and every case kind requires exactly its own geometry section.
//! Angles are given in degrees in the file and converted to radians when
//! the case is built, so a parsed config serializes back to an equal
//! config (round trip holds on the parsed representation).

use serde::{Deserialize, Serialize};

use crate::bulk::{BulkMaterialParams, BulkModel};
use crate::cases::bicrystal_shear::BicrystalShearCase;
use crate::cases::bicrystal_tension::BicrystalTensionCase;
use crate::cases::shear_layer::{MicroBc, ShearLayerCase, ShearLoading};
use crate::gb::GbMaterialParams;
use crate::kinematics::ElasticLaw;
use crate::solver::SolverConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaseKind {
    ShearLayer,
    BicrystalShear,
    BicrystalTension,
}

impl CaseKind {
    fn section(self) -> &'static str {
        match self {
            CaseKind::ShearLayer => "shear_layer",
            CaseKind::BicrystalShear => "bicrystal_shear",
            CaseKind::BicrystalTension => "bicrystal_tension",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    Proposed,
    GurtinEnergetic,
    GurtinDissipative,
}

/// Material block; stresses in MPa, lengths in mm, rates in 1/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub youngs: f64,
    pub poisson: f64,
    pub s0: f64,
    pub d0: f64,
    pub m: f64,
    #[serde(default = "defaults::omega")]
    pub omega: f64,
    #[serde(default)]
    pub l_star: f64,
    #[serde(default)]
    pub zeta: f64,
    #[serde(default)]
    pub h0: f64,
    #[serde(default = "defaults::one")]
    pub q_latent: f64,
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default)]
    pub l_en: f64,
    #[serde(default)]
    pub l_d: f64,
}

impl MaterialConfig {
    pub fn to_bulk(&self) -> Result<BulkMaterialParams> {
        let params = BulkMaterialParams {
            elastic: ElasticLaw::new(self.youngs, self.poisson)?,
            s0: self.s0,
            d0: self.d0,
            m: self.m,
            omega: self.omega,
            l_star: self.l_star,
            zeta: self.zeta,
            h0: self.h0,
            q_latent: self.q_latent,
            model: match self.model {
                ModelKind::Proposed => BulkModel::Proposed,
                ModelKind::GurtinEnergetic => BulkModel::GurtinEnergetic,
                ModelKind::GurtinDissipative => BulkModel::GurtinDissipative,
            },
            l_en: self.l_en,
            l_d: self.l_d,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbConfig {
    pub c_s: f64,
    pub zeta_s: f64,
    /// Replace the interface model by explicit zero slip at the boundary
    /// nodes (bicrystal shear only).
    pub micro_hard: bool,
}

impl GbConfig {
    fn to_params(&self) -> GbMaterialParams {
        GbMaterialParams { c_s: self.c_s, zeta_s: self.zeta_s }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoadKind {
    Monotonic,
    Cyclic,
    Passivation,
}

/// Loading block. Which fields apply depends on `kind`; the others must
/// stay unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadingConfig {
    pub kind: LoadKind,
    /// Final load for monotonic and passivation programs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    /// Load rate in 1/s for monotonic and passivation programs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycles: Option<usize>,
    /// Load at which the micro boundary switches from free to hard.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch: Option<f64>,
    /// Step cap around the switch instant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_dt: Option<f64>,
}

impl LoadingConfig {
    fn require(&self, field: &str, v: Option<f64>) -> Result<f64> {
        v.filter(|x| *x > 0.0).ok_or_else(|| {
            Error::Config(format!("loading.{field} must be set and positive for this kind"))
        })
    }

    fn forbid(&self, kind_name: &str, extras: &[(&str, bool)]) -> Result<()> {
        for (name, set) in extras {
            if *set {
                return Err(Error::Config(format!(
                    "loading.{name} does not apply to kind = \"{kind_name}\""
                )));
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        match self.kind {
            LoadKind::Monotonic => {
                self.require("target", self.target)?;
                self.require("rate", self.rate)?;
                self.forbid(
                    "monotonic",
                    &[
                        ("amplitude", self.amplitude.is_some()),
                        ("period", self.period.is_some()),
                        ("cycles", self.cycles.is_some()),
                        ("switch", self.switch.is_some()),
                        ("switch_dt", self.switch_dt.is_some()),
                    ],
                )
            }
            LoadKind::Cyclic => {
                self.require("amplitude", self.amplitude)?;
                self.require("period", self.period)?;
                if self.cycles.unwrap_or(1) == 0 {
                    return Err(Error::Config("loading.cycles must be at least 1".into()));
                }
                self.forbid(
                    "cyclic",
                    &[
                        ("target", self.target.is_some()),
                        ("rate", self.rate.is_some()),
                        ("switch", self.switch.is_some()),
                        ("switch_dt", self.switch_dt.is_some()),
                    ],
                )
            }
            LoadKind::Passivation => {
                let target = self.require("target", self.target)?;
                self.require("rate", self.rate)?;
                let switch = self.require("switch", self.switch)?;
                if switch >= target {
                    return Err(Error::Config(
                        "loading.switch must lie below loading.target".into(),
                    ));
                }
                if let Some(dt) = self.switch_dt {
                    if !(dt > 0.0) {
                        return Err(Error::Config("loading.switch_dt must be positive".into()));
                    }
                }
                self.forbid(
                    "passivation",
                    &[
                        ("amplitude", self.amplitude.is_some()),
                        ("period", self.period.is_some()),
                        ("cycles", self.cycles.is_some()),
                    ],
                )
            }
        }
    }

    fn to_shear_loading(&self) -> ShearLoading {
        // fields were validated already
        match self.kind {
            LoadKind::Monotonic => ShearLoading::Monotonic {
                gamma_max: self.target.unwrap(),
                rate: self.rate.unwrap(),
            },
            LoadKind::Cyclic => ShearLoading::Cyclic {
                amplitude: self.amplitude.unwrap(),
                period: self.period.unwrap(),
                cycles: self.cycles.unwrap_or(1),
            },
            LoadKind::Passivation => ShearLoading::Passivation {
                gamma_switch: self.switch.unwrap(),
                gamma_max: self.target.unwrap(),
                rate: self.rate.unwrap(),
            },
        }
    }

    fn monotonic(&self, case: &str) -> Result<(f64, f64)> {
        if self.kind != LoadKind::Monotonic {
            return Err(Error::Config(format!(
                "the {case} case supports only loading.kind = \"monotonic\""
            )));
        }
        Ok((self.target.unwrap(), self.rate.unwrap()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBlock {
    pub dt: f64,
    pub dt_min: f64,
    pub newton_tol_rel: f64,
    pub newton_tol_abs: f64,
    pub max_iterations: usize,
}

impl Default for SolverBlock {
    fn default() -> Self {
        let s = SolverConfig::default();
        SolverBlock {
            dt: s.dt,
            dt_min: s.dt_min,
            newton_tol_rel: s.newton_tol_rel,
            newton_tol_abs: s.newton_tol_abs,
            max_iterations: s.max_iterations,
        }
    }
}

impl SolverBlock {
    pub fn to_solver(&self) -> SolverConfig {
        SolverConfig {
            dt: self.dt,
            dt_min: self.dt_min,
            newton_tol_rel: self.newton_tol_rel,
            newton_tol_abs: self.newton_tol_abs,
            max_iterations: self.max_iterations,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dt", self.dt),
            ("dt_min", self.dt_min),
            ("newton_tol_rel", self.newton_tol_rel),
            ("newton_tol_abs", self.newton_tol_abs),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("solver.{name} must be positive")));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("solver.max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    /// Instants (s) at which field profiles are captured, in addition to
    /// the final state.
    pub sample_times: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MicroBcKind {
    Hard,
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShearLayerBlock {
    /// Layer height H (mm).
    pub height: f64,
    pub n_el: usize,
    /// Slip plane angles in degrees.
    pub angles: Vec<f64>,
    pub micro_bc: MicroBcKind,
}

impl Default for ShearLayerBlock {
    fn default() -> Self {
        ShearLayerBlock {
            height: 1.0,
            n_el: 100,
            angles: vec![60.0, -60.0],
            micro_bc: MicroBcKind::Hard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BicrystalShearBlock {
    /// Width W of one grain (mm); the periodic strip is 2W long.
    pub grain_width: f64,
    pub n_per_grain: usize,
    /// Slip plane angles in degrees.
    pub theta_a: f64,
    pub theta_b: f64,
}

impl Default for BicrystalShearBlock {
    fn default() -> Self {
        BicrystalShearBlock { grain_width: 1.0, n_per_grain: 100, theta_a: 10.0, theta_b: -10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BicrystalTensionBlock {
    /// Domain size (mm); the oblique boundary runs through the center.
    pub width: f64,
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
    /// Slip plane angles in degrees, one list per grain.
    pub theta_a: Vec<f64>,
    pub theta_b: Vec<f64>,
}

impl Default for BicrystalTensionBlock {
    fn default() -> Self {
        BicrystalTensionBlock {
            width: 0.1,
            height: 0.05,
            nx: 90,
            ny: 40,
            theta_a: vec![30.0, -45.0],
            theta_b: vec![-30.0, -45.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub case: CaseKind,
    pub material: MaterialConfig,
    #[serde(default)]
    pub grain_boundary: GbConfig,
    pub loading: LoadingConfig,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shear_layer: Option<ShearLayerBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bicrystal_shear: Option<BicrystalShearBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bicrystal_tension: Option<BicrystalTensionBlock>,
}

mod defaults {
    pub fn omega() -> f64 {
        0.01
    }
    pub fn one() -> f64 {
        1.0
    }
}

pub fn parse_config(text: &str) -> Result<CaseConfig> {
    let cfg: CaseConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn serialize_config(cfg: &CaseConfig) -> Result<String> {
    toml::to_string_pretty(cfg).map_err(|e| Error::Config(e.to_string()))
}

impl CaseConfig {
    pub fn validate(&self) -> Result<()> {
        self.material.to_bulk()?;
        self.loading.validate()?;
        self.solver.validate()?;
        if self.grain_boundary.c_s < 0.0 || self.grain_boundary.zeta_s < 0.0 {
            return Err(Error::Config(
                "grain_boundary.c_s and grain_boundary.zeta_s must be nonnegative".into(),
            ));
        }
        for &t in &self.output.sample_times {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config("output.sample_times must be positive".into()));
            }
        }
        // exactly the geometry section matching the case kind
        let sections = [
            ("shear_layer", self.shear_layer.is_some()),
            ("bicrystal_shear", self.bicrystal_shear.is_some()),
            ("bicrystal_tension", self.bicrystal_tension.is_some()),
        ];
        for (name, present) in sections {
            if present && name != self.case.section() {
                return Err(Error::Config(format!(
                    "section [{name}] does not belong to this case kind"
                )));
            }
        }
        match self.case {
            CaseKind::ShearLayer => {
                let geo = self.shear_layer.clone().unwrap_or_default();
                if geo.n_el == 0 {
                    return Err(Error::Config("shear_layer.n_el must be positive".into()));
                }
                if !(geo.height > 0.0) {
                    return Err(Error::Config("shear_layer.height must be positive".into()));
                }
                if geo.angles.is_empty() {
                    return Err(Error::Config("shear_layer.angles must be nonempty".into()));
                }
                if self.grain_boundary != GbConfig::default() {
                    return Err(Error::Config(
                        "the shear layer has no grain boundary; drop the [grain_boundary] block"
                            .into(),
                    ));
                }
            }
            CaseKind::BicrystalShear => {
                let geo = self.bicrystal_shear.clone().unwrap_or_default();
                if geo.n_per_grain == 0 || geo.n_per_grain % 2 != 0 {
                    return Err(Error::Config(
                        "bicrystal_shear.n_per_grain must be even and positive".into(),
                    ));
                }
                if !(geo.grain_width > 0.0) {
                    return Err(Error::Config(
                        "bicrystal_shear.grain_width must be positive".into(),
                    ));
                }
                self.loading.monotonic("bicrystal shear")?;
            }
            CaseKind::BicrystalTension => {
                let geo = self.bicrystal_tension.clone().unwrap_or_default();
                if geo.nx < 2 || geo.ny < 2 {
                    return Err(Error::Config(
                        "bicrystal_tension.nx and .ny must be at least 2".into(),
                    ));
                }
                if !(geo.width > 0.0 && geo.height > 0.0) {
                    return Err(Error::Config(
                        "bicrystal_tension dimensions must be positive".into(),
                    ));
                }
                if geo.theta_a.len() != geo.theta_b.len() || geo.theta_a.is_empty() {
                    return Err(Error::Config(
                        "bicrystal_tension.theta_a and .theta_b need the same nonzero length"
                            .into(),
                    ));
                }
                if self.grain_boundary.micro_hard {
                    return Err(Error::Config(
                        "grain_boundary.micro_hard is only available for bicrystal shear".into(),
                    ));
                }
                self.loading.monotonic("bicrystal tension")?;
            }
        }
        Ok(())
    }

    pub fn build_shear_layer(&self) -> Result<ShearLayerCase> {
        if self.case != CaseKind::ShearLayer {
            return Err(Error::Config("config is not a shear-layer case".into()));
        }
        let geo = self.shear_layer.clone().unwrap_or_default();
        Ok(ShearLayerCase {
            height: geo.height,
            n_el: geo.n_el,
            thetas: geo.angles.iter().map(|a| a.to_radians()).collect(),
            micro_bc: match geo.micro_bc {
                MicroBcKind::Hard => MicroBc::Hard,
                MicroBcKind::Free => MicroBc::Free,
            },
            loading: self.loading.to_shear_loading(),
            bulk: self.material.to_bulk()?,
            switch_dt: self.loading.switch_dt,
        })
    }

    pub fn build_bicrystal_shear(&self) -> Result<BicrystalShearCase> {
        if self.case != CaseKind::BicrystalShear {
            return Err(Error::Config("config is not a bicrystal-shear case".into()));
        }
        let geo = self.bicrystal_shear.clone().unwrap_or_default();
        let (gamma_max, rate) = self.loading.monotonic("bicrystal shear")?;
        Ok(BicrystalShearCase {
            grain_width: geo.grain_width,
            n_per_grain: geo.n_per_grain,
            theta_a: geo.theta_a.to_radians(),
            theta_b: geo.theta_b.to_radians(),
            bulk: self.material.to_bulk()?,
            gb: self.grain_boundary.to_params(),
            gamma_max,
            rate,
            micro_hard_gb: self.grain_boundary.micro_hard,
        })
    }

    pub fn build_bicrystal_tension(&self) -> Result<BicrystalTensionCase> {
        if self.case != CaseKind::BicrystalTension {
            return Err(Error::Config("config is not a bicrystal-tension case".into()));
        }
        let geo = self.bicrystal_tension.clone().unwrap_or_default();
        let (strain_max, rate) = self.loading.monotonic("bicrystal tension")?;
        Ok(BicrystalTensionCase {
            width: geo.width,
            height: geo.height,
            nx: geo.nx,
            ny: geo.ny,
            thetas_a: geo.theta_a.iter().map(|a| a.to_radians()).collect(),
            thetas_b: geo.theta_b.iter().map(|a| a.to_radians()).collect(),
            bulk: self.material.to_bulk()?,
            gb: self.grain_boundary.to_params(),
            strain_max,
            rate,
        })
    }
}
