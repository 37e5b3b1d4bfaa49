//! Single-degree-of-freedom nonlinear oscillators and their free-decay integration.
//!
//! Every model is written as `m·ẍ + R(x, ẋ, z) = 0`, where `R` is the
//! restoring force returned by [`restoring_force`]. The Bouc-Wen model carries
//! an extra hysteretic state `z` whose rate is given by [`boucwen_zdot`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParameterVector;

/// Describes one parameter of a model: symbol, SI unit and the unit-tagged
/// key used in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamDescriptor {
    pub name: &'static str,
    pub unit: &'static str,
    pub key: &'static str,
}

const fn desc(name: &'static str, unit: &'static str, key: &'static str) -> ParamDescriptor {
    ParamDescriptor { name, unit, key }
}

const CUBIC: &[ParamDescriptor] = &[
    desc("m", "kg", "m_kg"),
    desc("k1", "N/m", "k1_n_per_m"),
    desc("k2", "N/m^3", "k2_n_per_m3"),
    desc("c1", "Ns/m", "c1_ns_per_m"),
];

const DRY_FRICTION: &[ParamDescriptor] = &[
    desc("m", "kg", "m_kg"),
    desc("k1", "N/m", "k1_n_per_m"),
    desc("c1", "Ns/m", "c1_ns_per_m"),
    desc("c2", "N", "c2_n"),
];

const QUAD_DAMP_CUBIC: &[ParamDescriptor] = &[
    desc("m", "kg", "m_kg"),
    desc("k1", "N/m", "k1_n_per_m"),
    desc("k2", "N/m^3", "k2_n_per_m3"),
    desc("c1", "Ns/m", "c1_ns_per_m"),
    desc("c2", "Ns^2/m^2", "c2_ns2_per_m2"),
];

const BOUC_WEN: &[ParamDescriptor] = &[
    desc("m", "kg", "m_kg"),
    desc("k1", "N/m", "k1_n_per_m"),
    desc("c1", "Ns/m", "c1_ns_per_m"),
    desc("A", "-", "a"),
    desc("alpha", "-", "alpha"),
    desc("beta", "1/m", "beta_per_m"),
    desc("gamma", "1/m", "gamma_per_m"),
    desc("n", "-", "n"),
];

const EMPIRICAL: &[ParamDescriptor] = &[
    desc("m", "kg", "m_kg"),
    desc("k1", "N/m", "k1_n_per_m"),
    desc("c1", "Ns/m", "c1_ns_per_m"),
    desc("k2", "N/m^2", "k2_n_per_m2"),
    desc("c2", "Ns^2/m^2", "c2_ns2_per_m2"),
    desc("k3", "N/m^3", "k3_n_per_m3"),
    desc("c3", "Ns^3/m^3", "c3_ns3_per_m3"),
];

const CANTILEVER: &[ParamDescriptor] = &[
    desc("m", "kg", "m_kg"),
    desc("c", "Ns/m", "c_ns_per_m"),
    desc("KL", "N/m", "kl_n_per_m"),
    desc("kn", "N/m^3", "kn_n_per_m3"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// `m ẍ + c1 ẋ + k1 x + k2 x³ = 0`
    CubicStiffness,
    /// `m ẍ + c1 ẋ + k1 x + c2 sign(ẋ) = 0`
    DryFriction,
    /// `m ẍ + c1 ẋ + k1 x + c2 ẋ|ẋ| + k2 x³ = 0`
    QuadDampCubic,
    /// `m ẍ + c1 ẋ + k1 x + (1 − α) k1 z = 0` with Bouc-Wen `ż`
    BoucWen,
    /// `m ẍ + c1 ẋ + k1 x + k2 x² + c2 |ẋ|ẋ + k3 x³ + c3 ẋ³ = 0`
    Empirical,
    /// `m ẍ + c ẋ + KL x − kn x³ = 0`, `KL = k_m − k_0`
    CantileverMagnet,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::CubicStiffness,
        ModelKind::DryFriction,
        ModelKind::QuadDampCubic,
        ModelKind::BoucWen,
        ModelKind::Empirical,
        ModelKind::CantileverMagnet,
    ];

    pub fn parameters(self) -> &'static [ParamDescriptor] {
        match self {
            ModelKind::CubicStiffness => CUBIC,
            ModelKind::DryFriction => DRY_FRICTION,
            ModelKind::QuadDampCubic => QUAD_DAMP_CUBIC,
            ModelKind::BoucWen => BOUC_WEN,
            ModelKind::Empirical => EMPIRICAL,
            ModelKind::CantileverMagnet => CANTILEVER,
        }
    }

    pub fn descriptor(self, name: &str) -> Option<&'static ParamDescriptor> {
        self.parameters().iter().find(|d| d.name == name)
    }

    pub fn descriptor_by_key(self, key: &str) -> Option<&'static ParamDescriptor> {
        self.parameters().iter().find(|d| d.key == key)
    }

    /// Snake-case name used in configuration files.
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::CubicStiffness => "cubic_stiffness",
            ModelKind::DryFriction => "dry_friction",
            ModelKind::QuadDampCubic => "quad_damp_cubic",
            ModelKind::BoucWen => "bouc_wen",
            ModelKind::Empirical => "empirical",
            ModelKind::CantileverMagnet => "cantilever_magnet",
        }
    }

    pub fn has_hysteresis(self) -> bool {
        self == ModelKind::BoucWen
    }

    /// Name of the parameter acting as linear stiffness.
    pub fn linear_stiffness_name(self) -> &'static str {
        match self {
            ModelKind::CantileverMagnet => "KL",
            _ => "k1",
        }
    }
}

/// A model variant together with a complete parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub params: ParameterVector,
    /// Width `ε` of the optional `tanh(v/ε)` smoothing of `sign(v)` for dry
    /// friction. `None` keeps the discontinuity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub friction_smoothing: Option<f64>,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, params: ParameterVector) -> Result<Self> {
        let spec = ModelSpec {
            kind,
            params,
            friction_smoothing: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Builds a spec from `(name, value)` pairs, attaching the canonical units.
    pub fn from_values(kind: ModelKind, values: &[(&str, f64)]) -> Result<Self> {
        let mut params = ParameterVector::new();
        for &(name, value) in values {
            let d = kind
                .descriptor(name)
                .ok_or_else(|| Error::Config(format!("{kind:?} has no parameter `{name}`")))?;
            params.push(d.name, value, d.unit)?;
        }
        Self::new(kind, params)
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.kind.parameters();
        for p in self.params.iter() {
            if self.kind.descriptor(&p.name).is_none() {
                return Err(Error::Config(format!(
                    "{:?} has no parameter `{}`",
                    self.kind, p.name
                )));
            }
            if !p.value.is_finite() {
                return Err(Error::Config(format!("parameter `{}` is not finite", p.name)));
            }
        }
        for d in expected {
            if !self.params.contains(d.name) {
                return Err(Error::Config(format!(
                    "{:?} requires parameter `{}` [{}]",
                    self.kind, d.name, d.unit
                )));
            }
        }
        if self.params.get("m")? <= 0.0 {
            return Err(Error::Config("mass `m` must be positive".into()));
        }
        if self.kind == ModelKind::BoucWen && self.params.get("n")? < 1.0 {
            return Err(Error::Config("Bouc-Wen exponent `n` must be >= 1".into()));
        }
        if let Some(eps) = self.friction_smoothing {
            if !(eps > 0.0) {
                return Err(Error::Config("friction smoothing width must be positive".into()));
            }
        }
        Ok(())
    }

    /// Returns a copy with the named parameters overwritten.
    pub fn with_values<'a>(&self, values: impl IntoIterator<Item = (&'a str, f64)>) -> Result<Self> {
        let mut out = self.clone();
        for (name, value) in values {
            out.params.set(name, value)?;
        }
        out.validate()?;
        Ok(out)
    }

    /// Undamped linear period `2π √(m / k_lin)` in seconds.
    pub fn linear_period(&self) -> Result<f64> {
        let m = self.params.get("m")?;
        let k = self.params.get(self.kind.linear_stiffness_name())?;
        if k <= 0.0 {
            return Err(Error::Config(format!(
                "linear stiffness `{}` must be positive",
                self.kind.linear_stiffness_name()
            )));
        }
        Ok(2.0 * PI * (m / k).sqrt())
    }
}

/// Instantaneous oscillator state. `z` is the Bouc-Wen hysteretic variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub v: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
}

impl State {
    pub fn new(x: f64, v: f64) -> Self {
        State { x, v, z: None }
    }

    pub fn with_z(x: f64, v: f64, z: f64) -> Self {
        State { x, v, z: Some(z) }
    }

    /// Displacement-only initial condition appropriate for `kind`.
    pub fn at_rest_offset(kind: ModelKind, x: f64, v: f64) -> Self {
        if kind.has_hysteresis() {
            State::with_z(x, v, 0.0)
        } else {
            State::new(x, v)
        }
    }

    fn check(&self, kind: ModelKind) -> Result<()> {
        if kind.has_hysteresis() != self.z.is_some() {
            return Err(Error::Config(format!(
                "state for {kind:?} must {}carry the hysteretic variable z",
                if kind.has_hysteresis() { "" } else { "not " }
            )));
        }
        if !(self.x.is_finite() && self.v.is_finite() && self.z.unwrap_or(0.0).is_finite()) {
            return Err(Error::Config("state must be finite".into()));
        }
        Ok(())
    }
}

/// Sampled free-decay response.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub dt: f64,
    pub t0: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl TimeSeries {
    pub fn new(dt: f64, t0: f64, x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Config("time step must be positive".into()));
        }
        if x.len() != v.len() || x.len() < 2 {
            return Err(Error::Config(
                "time series needs equal-length x and v with at least 2 samples".into(),
            ));
        }
        Ok(TimeSeries { dt, t0, x, v })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }
}

/// Parameters resolved from a [`ModelSpec`] into plain fields.
#[derive(Debug, Clone, Copy)]
enum Oscillator {
    Cubic {
        k1: f64,
        k2: f64,
        c1: f64,
    },
    DryFriction {
        k1: f64,
        c1: f64,
        c2: f64,
        smoothing: Option<f64>,
    },
    QuadDampCubic {
        k1: f64,
        k2: f64,
        c1: f64,
        c2: f64,
    },
    BoucWen {
        k1: f64,
        c1: f64,
        a: f64,
        alpha: f64,
        beta: f64,
        gamma: f64,
        n: f64,
    },
    Empirical {
        k1: f64,
        c1: f64,
        k2: f64,
        c2: f64,
        k3: f64,
        c3: f64,
    },
    Cantilever {
        c: f64,
        kl: f64,
        kn: f64,
    },
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Oscillator {
    fn from_spec(spec: &ModelSpec) -> Result<(Self, f64)> {
        spec.validate()?;
        let p = &spec.params;
        let m = p.get("m")?;
        let osc = match spec.kind {
            ModelKind::CubicStiffness => Oscillator::Cubic {
                k1: p.get("k1")?,
                k2: p.get("k2")?,
                c1: p.get("c1")?,
            },
            ModelKind::DryFriction => Oscillator::DryFriction {
                k1: p.get("k1")?,
                c1: p.get("c1")?,
                c2: p.get("c2")?,
                smoothing: spec.friction_smoothing,
            },
            ModelKind::QuadDampCubic => Oscillator::QuadDampCubic {
                k1: p.get("k1")?,
                k2: p.get("k2")?,
                c1: p.get("c1")?,
                c2: p.get("c2")?,
            },
            ModelKind::BoucWen => Oscillator::BoucWen {
                k1: p.get("k1")?,
                c1: p.get("c1")?,
                a: p.get("A")?,
                alpha: p.get("alpha")?,
                beta: p.get("beta")?,
                gamma: p.get("gamma")?,
                n: p.get("n")?,
            },
            ModelKind::Empirical => Oscillator::Empirical {
                k1: p.get("k1")?,
                c1: p.get("c1")?,
                k2: p.get("k2")?,
                c2: p.get("c2")?,
                k3: p.get("k3")?,
                c3: p.get("c3")?,
            },
            ModelKind::CantileverMagnet => Oscillator::Cantilever {
                c: p.get("c")?,
                kl: p.get("KL")?,
                kn: p.get("kn")?,
            },
        };
        Ok((osc, m))
    }

    #[inline]
    fn force(&self, x: f64, v: f64, z: f64) -> f64 {
        match *self {
            Oscillator::Cubic { k1, k2, c1 } => c1 * v + k1 * x + k2 * x * x * x,
            Oscillator::DryFriction {
                k1,
                c1,
                c2,
                smoothing,
            } => {
                let s = match smoothing {
                    Some(eps) => (v / eps).tanh(),
                    None => sign(v),
                };
                c1 * v + k1 * x + c2 * s
            }
            Oscillator::QuadDampCubic { k1, k2, c1, c2 } => {
                c1 * v + k1 * x + c2 * v * v.abs() + k2 * x * x * x
            }
            Oscillator::BoucWen { k1, c1, alpha, .. } => c1 * v + k1 * x + (1.0 - alpha) * k1 * z,
            Oscillator::Empirical {
                k1,
                c1,
                k2,
                c2,
                k3,
                c3,
            } => c1 * v + k1 * x + k2 * x * x + c2 * v.abs() * v + k3 * x * x * x + c3 * v * v * v,
            Oscillator::Cantilever { c, kl, kn } => c * v + kl * x - kn * x * x * x,
        }
    }

    #[inline]
    fn zdot(&self, v: f64, z: f64) -> f64 {
        match *self {
            Oscillator::BoucWen {
                a, beta, gamma, n, ..
            } => {
                let az = z.abs();
                if n == 1.0 {
                    a * v - beta * v.abs() * z - gamma * v * az
                } else {
                    a * v - beta * v.abs() * az.powf(n - 1.0) * z - gamma * v * az.powf(n)
                }
            }
            _ => 0.0,
        }
    }

    #[inline]
    fn deriv(&self, inv_m: f64, y: [f64; 3]) -> [f64; 3] {
        let [x, v, z] = y;
        [v, -self.force(x, v, z) * inv_m, self.zdot(v, z)]
    }
}

/// Total non-inertial force of the equation of motion; `m·ẍ = −restoring_force`.
pub fn restoring_force(spec: &ModelSpec, s: &State) -> Result<f64> {
    s.check(spec.kind)?;
    let (osc, _) = Oscillator::from_spec(spec)?;
    Ok(osc.force(s.x, s.v, s.z.unwrap_or(0.0)))
}

/// Rate of the Bouc-Wen hysteretic variable:
/// `ż = A ẋ − β |ẋ| |z|^(n−1) z − γ ẋ |z|^n`.
pub fn boucwen_zdot(spec: &ModelSpec, s: &State) -> Result<f64> {
    if spec.kind != ModelKind::BoucWen {
        return Err(Error::Config(format!(
            "boucwen_zdot called on a {:?} model",
            spec.kind
        )));
    }
    s.check(spec.kind)?;
    let (osc, _) = Oscillator::from_spec(spec)?;
    Ok(osc.zdot(s.v, s.z.unwrap_or(0.0)))
}

/// Step count and horizon for free-decay runs, both relative to the linear period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecaySettings {
    /// Integration steps per linear period (`dt = T_lin / steps_per_period`).
    pub steps_per_period: f64,
    /// Horizon in linear periods.
    pub periods: f64,
}

impl Default for DecaySettings {
    fn default() -> Self {
        DecaySettings {
            steps_per_period: 200.0,
            periods: 400.0,
        }
    }
}

impl DecaySettings {
    pub fn step_and_horizon(&self, spec: &ModelSpec) -> Result<(f64, f64)> {
        if !(self.steps_per_period > 0.0 && self.periods > 0.0) {
            return Err(Error::Config(
                "steps_per_period and periods must be positive".into(),
            ));
        }
        let period = spec.linear_period()?;
        Ok((period / self.steps_per_period, period * self.periods))
    }
}

/// Fixed-step RK4 free decay from `ic` over `[0, t_end]`, every step retained.
pub fn integrate_free_decay(spec: &ModelSpec, ic: &State, t_end: f64, dt: f64) -> Result<TimeSeries> {
    integrate(spec, ic, t_end, dt, None)
}

/// Free decay with step and horizon taken from `settings`. With
/// `stop_amplitude`, integration ends at the first displacement maximum
/// that falls below it.
pub fn simulate_decay(
    spec: &ModelSpec,
    ic: &State,
    settings: &DecaySettings,
    stop_amplitude: Option<f64>,
) -> Result<TimeSeries> {
    let (dt, t_end) = settings.step_and_horizon(spec)?;
    integrate(spec, ic, t_end, dt, stop_amplitude)
}

fn integrate(
    spec: &ModelSpec,
    ic: &State,
    t_end: f64,
    dt: f64,
    stop_amplitude: Option<f64>,
) -> Result<TimeSeries> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config("dt must be positive and finite".into()));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::Config("t_end must be positive and finite".into()));
    }
    ic.check(spec.kind)?;
    let (osc, m) = Oscillator::from_spec(spec)?;
    if let Ok(period) = spec.linear_period() {
        if t_end < 10.0 * period {
            log::warn!(
                "horizon {t_end:.4} s is shorter than 10 linear periods ({:.4} s)",
                10.0 * period
            );
        }
    }
    let inv_m = 1.0 / m;
    let steps = (t_end / dt).round() as usize;
    let mut xs = Vec::with_capacity(steps + 1);
    let mut vs = Vec::with_capacity(steps + 1);
    let mut y = [ic.x, ic.v, ic.z.unwrap_or(0.0)];
    xs.push(y[0]);
    vs.push(y[1]);
    let half = 0.5 * dt;
    for step in 1..=steps {
        let k1 = osc.deriv(inv_m, y);
        let k2 = osc.deriv(inv_m, axpy(y, half, k1));
        let k3 = osc.deriv(inv_m, axpy(y, half, k2));
        let k4 = osc.deriv(inv_m, axpy(y, dt, k3));
        for i in 0..3 {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if !(y[0].is_finite() && y[1].is_finite() && y[2].is_finite()) {
            return Err(Error::Divergence {
                step,
                t: step as f64 * dt,
            });
        }
        xs.push(y[0]);
        vs.push(y[1]);
        if let Some(stop) = stop_amplitude {
            let n = xs.len();
            if n >= 3 {
                let (a, b, c) = (xs[n - 3], xs[n - 2], xs[n - 1]);
                if a < b && b >= c && b < stop {
                    break;
                }
            }
        }
    }
    TimeSeries::new(dt, 0.0, xs, vs)
}

#[inline]
fn axpy(y: [f64; 3], h: f64, k: [f64; 3]) -> [f64; 3] {
    [y[0] + h * k[0], y[1] + h * k[1], y[2] + h * k[2]]
}

/// Geometric and material data of the magnet-tipped cantilever.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamProperties {
    pub length_m: f64,
    pub width_m: f64,
    pub thickness_m: f64,
    pub youngs_modulus_pa: f64,
    pub density_kg_per_m3: f64,
    pub magnet_density_kg_per_m3: f64,
    pub magnet_thickness_m: f64,
    pub magnet_diameter_m: f64,
    /// Viscous damping per unit length `c_a`.
    pub damping_ns_per_m: f64,
    pub sensor_mass_kg: f64,
    pub sensor_position_m: f64,
    pub tip_mass_kg: f64,
}

impl BeamProperties {
    /// The rig used for the experimental backbone curves, with no sensor mass.
    pub fn magnet_cantilever() -> Self {
        let magnet_density = 7500.0;
        let magnet_thickness = 1.5e-3;
        let magnet_diameter: f64 = 20e-3;
        // two tip magnets, one on each face
        let tip_mass =
            2.0 * magnet_density * PI * (0.5 * magnet_diameter).powi(2) * magnet_thickness;
        BeamProperties {
            length_m: 0.312,
            width_m: 0.030,
            thickness_m: 1.1e-3,
            youngs_modulus_pa: 205.5e9,
            density_kg_per_m3: 8040.0,
            magnet_density_kg_per_m3: magnet_density,
            magnet_thickness_m: magnet_thickness,
            magnet_diameter_m: magnet_diameter,
            damping_ns_per_m: 0.455,
            sensor_mass_kg: 0.0,
            sensor_position_m: 0.0,
            tip_mass_kg: tip_mass,
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("length_m", self.length_m),
            ("width_m", self.width_m),
            ("thickness_m", self.thickness_m),
            ("youngs_modulus_pa", self.youngs_modulus_pa),
            ("density_kg_per_m3", self.density_kg_per_m3),
            ("magnet_density_kg_per_m3", self.magnet_density_kg_per_m3),
            ("magnet_thickness_m", self.magnet_thickness_m),
            ("magnet_diameter_m", self.magnet_diameter_m),
            ("damping_ns_per_m", self.damping_ns_per_m),
            ("tip_mass_kg", self.tip_mass_kg),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("beam property {name} must be positive")));
            }
        }
        if self.sensor_mass_kg < 0.0 || self.sensor_position_m < 0.0 {
            return Err(Error::Config("sensor mass and position must be non-negative".into()));
        }
        if self.sensor_position_m > self.length_m {
            return Err(Error::Config(format!(
                "sensor position {} m lies beyond the beam length {} m",
                self.sensor_position_m, self.length_m
            )));
        }
        Ok(())
    }
}

/// Single-mode Galerkin constants for the assumed shape `φ(x) = sin(πx/L)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GalerkinConstants {
    pub mass_kg: f64,
    /// Mechanical stiffness `k_m = EI ∫ φ φ⁗ dx`.
    pub stiffness_n_per_m: f64,
    pub damping_ns_per_m: f64,
}

/// Composite-Simpson evaluation of the modal mass, stiffness and damping
/// integrals. `quad_points` is the number of intervals (rounded up to even).
pub fn galerkin_constants(beam: &BeamProperties, quad_points: usize) -> Result<GalerkinConstants> {
    if quad_points < 100 {
        return Err(Error::Config(format!(
            "need at least 100 quadrature intervals, got {quad_points}"
        )));
    }
    beam.validate()?;
    let l = beam.length_m;
    let wave = PI / l;
    let phi = |x: f64| (wave * x).sin();
    let phi4 = |x: f64| wave.powi(4) * (wave * x).sin();

    let mass_per_length = beam.density_kg_per_m3 * beam.width_m * beam.thickness_m;
    let inertia = beam.width_m * beam.thickness_m.powi(3) / 12.0;
    let ei = beam.youngs_modulus_pa * inertia;

    let phi_sq = simpson(|x| phi(x) * phi(x), 0.0, l, quad_points);
    let phi_phi4 = simpson(|x| phi(x) * phi4(x), 0.0, l, quad_points);

    let sensor = beam.sensor_mass_kg * phi(beam.sensor_position_m).powi(2);
    Ok(GalerkinConstants {
        mass_kg: mass_per_length * phi_sq + sensor,
        stiffness_n_per_m: ei * phi_phi4,
        damping_ns_per_m: beam.damping_ns_per_m * phi_sq,
    })
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Linear stiffness `K_L = k_m − k_0 = m ω_n²` from a measured natural frequency.
pub fn stiffness_from_frequency(mass_kg: f64, omega_n: f64) -> f64 {
    mass_kg * omega_n * omega_n
}

/// Inverse of [`stiffness_from_frequency`].
pub fn frequency_from_stiffness(mass_kg: f64, stiffness: f64) -> f64 {
    (stiffness / mass_kg).sqrt()
}
