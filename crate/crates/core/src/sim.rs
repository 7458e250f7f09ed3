//! Fixed-step RK4 simulation of the linear error dynamics and of a
//! heterogeneous nonlinear platoon with inverse-model torque control.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::sig9;
use crate::modal::{ControllerGains, VehicleParams};
use crate::topology::{Topology, TopologyMatrix};

/// Scalar time profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Zero,
    Constant {
        value: f64,
    },
    /// `from` until `start`, linear to `to` at `end`, then held.
    Ramp {
        from: f64,
        to: f64,
        start: f64,
        end: f64,
    },
    /// `amplitude·sin(2π(t − start)/period)` on `[start, end)`, zero elsewhere.
    SineWindow {
        amplitude: f64,
        period: f64,
        start: f64,
        end: f64,
    },
}

impl Profile {
    pub fn validate(&self) -> Result<()> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        let ok = match *self {
            Profile::Zero => true,
            Profile::Constant { value } => value.is_finite(),
            Profile::Ramp {
                from,
                to,
                start,
                end,
            } => finite(&[from, to, start, end]) && end > start,
            Profile::SineWindow {
                amplitude,
                period,
                start,
                end,
            } => finite(&[amplitude, period, start, end]) && period > 0.0 && end > start,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidScenario(format!("bad profile {self:?}")))
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Constant { value } => value,
            Profile::Ramp {
                from,
                to,
                start,
                end,
            } => {
                if t < start {
                    from
                } else if t >= end {
                    to
                } else {
                    from + (to - from) * (t - start) / (end - start)
                }
            }
            Profile::SineWindow {
                amplitude,
                period,
                start,
                end,
            } => {
                if t >= start && t < end {
                    amplitude * (2.0 * PI * (t - start) / period).sin()
                } else {
                    0.0
                }
            }
        }
    }

    /// Time derivative (right-continuous at breakpoints).
    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            Profile::Zero | Profile::Constant { .. } => 0.0,
            Profile::Ramp {
                from,
                to,
                start,
                end,
            } => {
                if t >= start && t < end {
                    (to - from) / (end - start)
                } else {
                    0.0
                }
            }
            Profile::SineWindow {
                amplitude,
                period,
                start,
                end,
            } => {
                if t >= start && t < end {
                    amplitude * 2.0 * PI / period * (2.0 * PI * (t - start) / period).cos()
                } else {
                    0.0
                }
            }
        }
    }

    /// `∫₀ᵗ eval`.
    pub fn integral(&self, t: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Constant { value } => value * t,
            Profile::Ramp {
                from,
                to,
                start,
                end,
            } => {
                let slope = (to - from) / (end - start);
                let before = from * t.min(start);
                let during = if t > start {
                    let s = t.min(end) - start;
                    from * s + 0.5 * slope * s * s
                } else {
                    0.0
                };
                let after = if t > end { to * (t - end) } else { 0.0 };
                before + during + after
            }
            Profile::SineWindow {
                amplitude,
                period,
                start,
                end,
            } => {
                if t <= start {
                    0.0
                } else {
                    let s = t.min(end) - start;
                    amplitude * period / (2.0 * PI) * (1.0 - (2.0 * PI * s / period).cos())
                }
            }
        }
    }

    fn is_constant(&self) -> bool {
        matches!(self, Profile::Zero | Profile::Constant { .. })
    }
}

/// One profile shared by every follower, or one per follower.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Disturbance {
    Uniform(Profile),
    PerFollower(Vec<Profile>),
}

impl Default for Disturbance {
    fn default() -> Self {
        Disturbance::Uniform(Profile::Zero)
    }
}

impl Disturbance {
    fn profile(&self, i: usize) -> &Profile {
        match self {
            Disturbance::Uniform(p) => p,
            Disturbance::PerFollower(ps) => &ps[i],
        }
    }

    pub fn sample(&self, n: usize, t: f64) -> DVector<f64> {
        DVector::from_iterator(n, (0..n).map(|i| self.profile(i).eval(t)))
    }

    /// Returns a copy with every profile amplitude multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Disturbance {
        let scale = |p: &Profile| match *p {
            Profile::Zero => Profile::Zero,
            Profile::Constant { value } => Profile::Constant { value: value * s },
            Profile::Ramp {
                from,
                to,
                start,
                end,
            } => Profile::Ramp {
                from: from * s,
                to: to * s,
                start,
                end,
            },
            Profile::SineWindow {
                amplitude,
                period,
                start,
                end,
            } => Profile::SineWindow {
                amplitude: amplitude * s,
                period,
                start,
                end,
            },
        };
        match self {
            Disturbance::Uniform(p) => Disturbance::Uniform(scale(p)),
            Disturbance::PerFollower(ps) => {
                Disturbance::PerFollower(ps.iter().map(scale).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub leader_velocity: Profile,
    #[serde(default)]
    pub disturbance: Disturbance,
    pub desired_gap: f64,
    pub horizon: f64,
    /// Per-follower `[position, velocity, acceleration]` errors at t = 0.
    #[serde(default)]
    pub initial_errors: Option<Vec<[f64; 3]>>,
}

impl Scenario {
    /// Constant 20 m/s leader; unit sine on `[5, 10)` s with period 5 s on every follower.
    pub fn sine_disturbance() -> Self {
        Scenario {
            leader_velocity: Profile::Constant { value: 20.0 },
            disturbance: Disturbance::Uniform(Profile::SineWindow {
                amplitude: 1.0,
                period: 5.0,
                start: 5.0,
                end: 10.0,
            }),
            desired_gap: 25.0,
            horizon: 30.0,
            initial_errors: None,
        }
    }

    /// Leader at 20 m/s, ramping to 30 m/s over `[5, 10]` s; no disturbance.
    pub fn leader_ramp() -> Self {
        Scenario {
            leader_velocity: Profile::Ramp {
                from: 20.0,
                to: 30.0,
                start: 5.0,
                end: 10.0,
            },
            disturbance: Disturbance::Uniform(Profile::Zero),
            desired_gap: 25.0,
            horizon: 40.0,
            initial_errors: None,
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "sine-disturbance" => Some(Self::sine_disturbance()),
            "leader-ramp" => Some(Self::leader_ramp()),
            _ => None,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !(self.desired_gap > 0.0 && self.desired_gap.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "desired gap must be positive, got {}",
                self.desired_gap
            )));
        }
        self.leader_velocity.validate()?;
        match &self.disturbance {
            Disturbance::Uniform(p) => p.validate()?,
            Disturbance::PerFollower(ps) => {
                if ps.len() != n {
                    return Err(Error::InvalidScenario(format!(
                        "{} disturbance profiles for {n} followers",
                        ps.len()
                    )));
                }
                ps.iter().try_for_each(Profile::validate)?;
            }
        }
        if let Some(init) = &self.initial_errors {
            if init.len() != n {
                return Err(Error::InvalidScenario(format!(
                    "{} initial error rows for {n} followers",
                    init.len()
                )));
            }
            if init.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::InvalidScenario("non-finite initial error".into()));
            }
        }
        Ok(())
    }

    fn initial(&self, i: usize) -> [f64; 3] {
        self.initial_errors.as_ref().map_or([0.0; 3], |e| e[i])
    }
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub time: Vec<f64>,
    /// N × T.
    pub spacing_errors: DMatrix<f64>,
    pub velocity_errors: DMatrix<f64>,
    pub controls: DMatrix<f64>,
    /// N × T disturbance samples on the same grid.
    pub disturbances: DMatrix<f64>,
    /// `None` when the disturbance carries no energy.
    pub empirical_gain: Option<f64>,
    pub stable: bool,
    /// Steps at which a negative velocity was clamped to zero.
    pub clamp_events: usize,
}

impl SimResult {
    pub fn followers(&self) -> usize {
        self.spacing_errors.nrows()
    }

    pub fn max_abs_spacing_error(&self) -> f64 {
        self.spacing_errors.amax()
    }

    /// Largest `|spacing error|` over samples with `t ≥ from`.
    pub fn max_abs_spacing_error_after(&self, from: f64) -> f64 {
        self.time
            .iter()
            .enumerate()
            .filter(|(_, t)| **t >= from - 1e-12)
            .map(|(k, _)| self.spacing_errors.column(k).amax())
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let n = self.followers();
        let mut out = String::from("t");
        for prefix in ["err_p", "err_v", "u"] {
            for i in 1..=n {
                out.push_str(&format!(",{prefix}_{i}"));
            }
        }
        out.push('\n');
        for (k, t) in self.time.iter().enumerate() {
            out.push_str(&sig9(*t));
            for m in [&self.spacing_errors, &self.velocity_errors, &self.controls] {
                for i in 0..n {
                    out.push(',');
                    out.push_str(&sig9(m[(i, k)]));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Trapezoidal `√(∫‖Y‖² / ∫‖W‖²)` over the sample grid.
pub fn empirical_gain(
    time: &[f64],
    outputs: &DMatrix<f64>,
    disturbances: &DMatrix<f64>,
) -> Result<f64> {
    let energy = |m: &DMatrix<f64>| {
        let sq: Vec<f64> = m.column_iter().map(|c| c.norm_squared()).collect();
        time.windows(2)
            .zip(sq.windows(2))
            .map(|(t, s)| 0.5 * (t[1] - t[0]) * (s[0] + s[1]))
            .sum::<f64>()
    };
    let w = energy(disturbances);
    if !(w > 0.0) {
        return Err(Error::InvalidScenario("disturbance has zero energy".into()));
    }
    Ok((energy(outputs) / w).sqrt())
}

fn rk4_step(
    f: &impl Fn(f64, &DVector<f64>) -> DVector<f64>,
    t: f64,
    x: &DVector<f64>,
    dt: f64,
) -> DVector<f64> {
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * dt, &(x + &k1 * (0.5 * dt)));
    let k3 = f(t + 0.5 * dt, &(x + &k2 * (0.5 * dt)));
    let k4 = f(t + dt, &(x + &k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Number of RK4 substeps per output step so that `h·ρ ≤ 1.5`, inside the
/// real-axis stability interval of RK4; `rho` bounds the Jacobian spectral radius.
fn substeps(dt: f64, rho: f64) -> usize {
    ((dt * rho / 1.5).ceil() as usize).max(1)
}

fn advance(
    f: &impl Fn(f64, &DVector<f64>) -> DVector<f64>,
    t: f64,
    x: &DVector<f64>,
    dt: f64,
    sub: usize,
) -> DVector<f64> {
    let h = dt / sub as f64;
    let mut y = x.clone();
    for j in 0..sub {
        y = rk4_step(f, t + j as f64 * h, &y, h);
    }
    y
}

fn step_count(horizon: f64, dt: f64) -> usize {
    // Tolerate representation error so 30 / 0.01 gives 3000 steps.
    (horizon / dt - 1e-9).ceil() as usize
}

const DIVERGENCE: f64 = 1e9;

/// Homogeneous linear platoon in tracking-error coordinates.
#[derive(Debug, Clone)]
pub struct LinearPlatoonModel {
    pub params: VehicleParams,
    pub gains: ControllerGains,
    pub matrix: TopologyMatrix,
    /// `I⊗A − c(L+P)⊗B₁kᵀ`, states ordered `[p̂₁, v̂₁, â₁, p̂₂, …]`.
    pub closed_loop: DMatrix<f64>,
}

impl LinearPlatoonModel {
    pub fn new(
        params: VehicleParams,
        gains: ControllerGains,
        matrix: TopologyMatrix,
    ) -> Result<Self> {
        params.validate()?;
        gains.validate()?;
        let n = matrix.n();
        let tau = params.tau;
        let k = gains.k();
        let mut ac = DMatrix::zeros(3 * n, 3 * n);
        for i in 0..n {
            ac[(3 * i, 3 * i + 1)] = 1.0;
            ac[(3 * i + 1, 3 * i + 2)] = 1.0;
            ac[(3 * i + 2, 3 * i + 2)] = -1.0 / tau;
            for j in 0..n {
                let lij = matrix.lp[(i, j)];
                if lij != 0.0 {
                    for (col, kc) in k.iter().enumerate() {
                        ac[(3 * i + 2, 3 * j + col)] -= gains.c * lij * kc / tau;
                    }
                }
            }
        }
        Ok(LinearPlatoonModel {
            params,
            gains,
            matrix,
            closed_loop: ac,
        })
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    /// `‖A_c‖∞`, an upper bound on the closed-loop spectral radius.
    pub fn stiffness_bound(&self) -> f64 {
        crate::linalg::inf_norm(&self.closed_loop)
    }

    fn controls(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n();
        let k = self.gains.k();
        let local = DVector::from_iterator(
            n,
            (0..n).map(|i| k[0] * x[3 * i] + k[1] * x[3 * i + 1] + k[2] * x[3 * i + 2]),
        );
        -(&self.matrix.lp * local) * self.gains.c
    }
}

fn check_dt(dt: f64, tau_min: f64) -> Result<()> {
    if !(dt > 0.0) || dt > tau_min / 10.0 + 1e-15 {
        return Err(Error::InvalidParameter(format!(
            "dt must lie in (0, τ/10 = {}], got {dt}",
            tau_min / 10.0
        )));
    }
    Ok(())
}

fn linear_preconditions(model: &LinearPlatoonModel, scenario: &Scenario, dt: f64) -> Result<()> {
    scenario.validate(model.n())?;
    check_dt(dt, model.params.tau)?;
    if !scenario.leader_velocity.is_constant() {
        return Err(Error::InvalidScenario(
            "the linear error model assumes a constant-speed leader".into(),
        ));
    }
    Ok(())
}

struct Recorder {
    time: Vec<f64>,
    p: Vec<f64>,
    v: Vec<f64>,
    u: Vec<f64>,
    w: Vec<f64>,
}

impl Recorder {
    fn new() -> Self {
        Recorder {
            time: Vec::new(),
            p: Vec::new(),
            v: Vec::new(),
            u: Vec::new(),
            w: Vec::new(),
        }
    }

    fn push(&mut self, t: f64, p: &[f64], v: &[f64], u: &[f64], w: &[f64]) {
        self.time.push(t);
        self.p.extend_from_slice(p);
        self.v.extend_from_slice(v);
        self.u.extend_from_slice(u);
        self.w.extend_from_slice(w);
    }

    fn finish(self, n: usize, stable: bool, clamp_events: usize) -> SimResult {
        let cols = self.time.len();
        let spacing_errors = DMatrix::from_column_slice(n, cols, &self.p);
        let disturbances = DMatrix::from_column_slice(n, cols, &self.w);
        let empirical_gain = if stable {
            empirical_gain(&self.time, &spacing_errors, &disturbances).ok()
        } else {
            None
        };
        SimResult {
            time: self.time,
            spacing_errors,
            velocity_errors: DMatrix::from_column_slice(n, cols, &self.v),
            controls: DMatrix::from_column_slice(n, cols, &self.u),
            disturbances,
            empirical_gain,
            stable,
            clamp_events,
        }
    }
}

/// Integrates the closed-loop error dynamics directly.
pub fn simulate_linear(
    model: &LinearPlatoonModel,
    scenario: &Scenario,
    dt: f64,
) -> Result<SimResult> {
    linear_preconditions(model, scenario, dt)?;
    let n = model.n();
    let tau = model.params.tau;
    let mut x = DVector::from_iterator(3 * n, (0..n).flat_map(|i| scenario.initial(i)));
    let rhs = |t: f64, x: &DVector<f64>| {
        let mut dx = &model.closed_loop * x;
        for i in 0..n {
            dx[3 * i + 2] += scenario.disturbance.profile(i).eval(t) / tau;
        }
        dx
    };
    let sub = substeps(dt, model.stiffness_bound());
    let steps = step_count(scenario.horizon, dt);
    let mut rec = Recorder::new();
    let mut stable = true;
    for step in 0..=steps {
        let t = step as f64 * dt;
        let (p, v): (Vec<f64>, Vec<f64>) = (0..n).map(|i| (x[3 * i], x[3 * i + 1])).unzip();
        let u = model.controls(&x);
        let w = scenario.disturbance.sample(n, t);
        rec.push(t, &p, &v, u.as_slice(), w.as_slice());
        if !x.iter().all(|v| v.is_finite()) || x.norm() > DIVERGENCE {
            stable = false;
            break;
        }
        if step < steps {
            x = advance(&rhs, t, &x, dt, sub);
        }
    }
    Ok(rec.finish(n, stable, 0))
}

/// Integrates each decoupled modal subsystem and maps back through the
/// eigenvectors of `L+P`.
pub fn simulate_linear_modal(
    model: &LinearPlatoonModel,
    scenario: &Scenario,
    dt: f64,
) -> Result<SimResult> {
    linear_preconditions(model, scenario, dt)?;
    let n = model.n();
    let tau = model.params.tau;
    let spectrum = model.matrix.spectrum()?;
    let v = &spectrum.eigenvectors;
    let vt = v.transpose();
    let k = model.gains.k();
    let c = model.gains.c;

    // z_m = Σ_i V[i,m] x̂_i, stacked as [z_m(p), z_m(v), z_m(a)].
    let to_modal = |x: &DVector<f64>| {
        DVector::from_iterator(
            3 * n,
            (0..n).flat_map(|m| {
                (0..3).map(move |s| (0..n).map(|i| v[(i, m)] * x[3 * i + s]).sum::<f64>())
            }),
        )
    };
    let from_modal = |z: &DVector<f64>| {
        DVector::from_iterator(
            3 * n,
            (0..n).flat_map(|i| {
                (0..3).map(move |s| (0..n).map(|m| v[(i, m)] * z[3 * m + s]).sum::<f64>())
            }),
        )
    };

    let x0 = DVector::from_iterator(3 * n, (0..n).flat_map(|i| scenario.initial(i)));
    let mut z = to_modal(&x0);
    let lambdas = spectrum.eigenvalues.clone();
    let rhs = |t: f64, z: &DVector<f64>| {
        let w = vt.clone() * scenario.disturbance.sample(n, t);
        let mut dz = DVector::zeros(3 * n);
        for m in 0..n {
            let (zp, zv, za) = (z[3 * m], z[3 * m + 1], z[3 * m + 2]);
            let cl = c * lambdas[m];
            dz[3 * m] = zv;
            dz[3 * m + 1] = za;
            dz[3 * m + 2] = (-za - cl * (k[0] * zp + k[1] * zv + k[2] * za) + w[m]) / tau;
        }
        dz
    };

    let sub = substeps(dt, model.stiffness_bound());
    let steps = step_count(scenario.horizon, dt);
    let mut rec = Recorder::new();
    let mut stable = true;
    for step in 0..=steps {
        let t = step as f64 * dt;
        let x = from_modal(&z);
        let (p, vel): (Vec<f64>, Vec<f64>) = (0..n).map(|i| (x[3 * i], x[3 * i + 1])).unzip();
        let u = model.controls(&x);
        let w = scenario.disturbance.sample(n, t);
        rec.push(t, &p, &vel, u.as_slice(), w.as_slice());
        if !z.iter().all(|v| v.is_finite()) || z.norm() > DIVERGENCE {
            stable = false;
            break;
        }
        if step < steps {
            z = advance(&rhs, t, &z, dt, sub);
        }
    }
    Ok(rec.finish(n, stable, 0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearVehicleParams {
    pub mass: f64,
    pub drag_coeff: f64,
    pub inertial_delay: f64,
    pub drive_efficiency: f64,
    pub tire_radius: f64,
    pub rolling_coeff: f64,
    pub gravity: f64,
}

impl NonlinearVehicleParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.mass,
            self.drag_coeff,
            self.inertial_delay,
            self.drive_efficiency,
            self.tire_radius,
            self.rolling_coeff,
            self.gravity,
        ];
        if fields.iter().all(|x| *x > 0.0 && x.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "vehicle parameters must be positive: {self:?}"
            )))
        }
    }

    /// Resistive force at speed `v`.
    fn resistance(&self, v: f64) -> f64 {
        self.drag_coeff * v * v + self.mass * self.gravity * self.rolling_coeff
    }

    pub fn acceleration(&self, torque: f64, v: f64) -> f64 {
        (self.drive_efficiency * torque / self.tire_radius - self.resistance(v)) / self.mass
    }

    /// Torque that realises acceleration `a_des` at speed `v` in steady state.
    pub fn inverse_torque(&self, a_des: f64, v: f64) -> f64 {
        (self.mass * a_des + self.resistance(v)) * self.tire_radius / self.drive_efficiency
    }
}

/// Ten passenger vehicles with the masses and delays used for the
/// nonlinear experiments.
pub fn reference_fleet(gravity: f64, tire_radius: f64) -> Vec<NonlinearVehicleParams> {
    const MASS: [f64; 10] = [2.81, 2.90, 2.12, 2.91, 2.63, 2.09, 2.27, 2.54, 2.95, 2.96];
    const TAU: [f64; 10] = [0.58, 0.59, 0.51, 0.59, 0.56, 0.50, 0.52, 0.55, 0.60, 0.60];
    MASS.iter()
        .zip(TAU)
        .map(|(m, tau)| NonlinearVehicleParams {
            mass: m * 1e3,
            drag_coeff: 0.492,
            inertial_delay: tau,
            drive_efficiency: 0.9,
            tire_radius,
            rolling_coeff: 0.01,
            gravity,
        })
        .collect()
}

/// Heterogeneous nonlinear platoon; per-vehicle state `(p, v, T)`.
pub fn simulate_nonlinear(
    fleet: &[NonlinearVehicleParams],
    gains: &ControllerGains,
    topology: &Topology,
    scenario: &Scenario,
    dt: f64,
) -> Result<SimResult> {
    let n = topology.n();
    if fleet.len() != n {
        return Err(Error::InvalidParameter(format!(
            "fleet has {} vehicles, topology has {n} followers",
            fleet.len()
        )));
    }
    fleet
        .iter()
        .try_for_each(NonlinearVehicleParams::validate)?;
    gains.validate()?;
    scenario.validate(n)?;
    let tau_min = fleet
        .iter()
        .map(|v| v.inertial_delay)
        .fold(f64::INFINITY, f64::min);
    check_dt(dt, tau_min)?;

    let d0 = scenario.desired_gap;
    let leader = &scenario.leader_velocity;
    let neighbors: Vec<Vec<usize>> = (0..n).map(|i| topology.neighbors(i).collect()).collect();
    let pinned: Vec<bool> = (0..n).map(|i| topology.is_pinned(i)).collect();
    let [kp, kv, ka] = gains.k();
    let c = gains.c;

    let accel = |x: &DVector<f64>, i: usize| fleet[i].acceleration(x[3 * i + 2], x[3 * i + 1]);
    let controls = |t: f64, x: &DVector<f64>| -> DVector<f64> {
        let (p0, v0, a0) = (leader.integral(t), leader.eval(t), leader.derivative(t));
        let a: Vec<f64> = (0..n).map(|i| accel(x, i)).collect();
        DVector::from_iterator(
            n,
            (0..n).map(|i| {
                let (pi, vi) = (x[3 * i], x[3 * i + 1]);
                let mut s = 0.0;
                for &j in &neighbors[i] {
                    let dij = (j as f64 - i as f64) * d0;
                    s += kp * (pi - x[3 * j] - dij) + kv * (vi - x[3 * j + 1]) + ka * (a[i] - a[j]);
                }
                if pinned[i] {
                    let di0 = -((i + 1) as f64) * d0;
                    s += kp * (pi - p0 - di0) + kv * (vi - v0) + ka * (a[i] - a0);
                }
                -c * s
            }),
        )
    };
    let rhs = |t: f64, x: &DVector<f64>| {
        let u = controls(t, x);
        let mut dx = DVector::zeros(3 * n);
        for (i, veh) in fleet.iter().enumerate() {
            let v = x[3 * i + 1];
            let a_des = u[i] + scenario.disturbance.profile(i).eval(t);
            dx[3 * i] = v;
            dx[3 * i + 1] = veh.acceleration(x[3 * i + 2], v);
            dx[3 * i + 2] = (veh.inverse_torque(a_des, v) - x[3 * i + 2]) / veh.inertial_delay;
        }
        dx
    };

    let v_start = leader.eval(0.0);
    let a_start = leader.derivative(0.0);
    let mut x = DVector::from_iterator(
        3 * n,
        (0..n).flat_map(|i| {
            let [ep, ev, ea] = scenario.initial(i);
            let v = v_start + ev;
            [
                leader.integral(0.0) - ((i + 1) as f64) * d0 + ep,
                v,
                fleet[i].inverse_torque(a_start + ea, v),
            ]
        }),
    );

    // Gershgorin-style bound on the torque-loop Jacobian, which dominates.
    let rho = (0..n)
        .map(|i| {
            let cross: f64 = neighbors[i]
                .iter()
                .map(|&j| fleet[i].mass / fleet[j].mass)
                .sum();
            let deg = neighbors[i].len() as f64 + if pinned[i] { 1.0 } else { 0.0 };
            (1.0 + c * ka * (deg + cross) + 2.0 * c * (kp + kv) * deg) / fleet[i].inertial_delay
                + 1.0
        })
        .fold(0.0, f64::max);
    let sub = substeps(dt, rho);
    let steps = step_count(scenario.horizon, dt);
    let mut rec = Recorder::new();
    let mut stable = true;
    let mut clamp_events = 0;
    for step in 0..=steps {
        let t = step as f64 * dt;
        let (p0, v0) = (leader.integral(t), leader.eval(t));
        let (p, v): (Vec<f64>, Vec<f64>) = (0..n)
            .map(|i| (x[3 * i] - p0 + ((i + 1) as f64) * d0, x[3 * i + 1] - v0))
            .unzip();
        let u = controls(t, &x);
        let w = scenario.disturbance.sample(n, t);
        rec.push(t, &p, &v, u.as_slice(), w.as_slice());
        if !x.iter().all(|v| v.is_finite()) || p.iter().any(|e| e.abs() > DIVERGENCE) {
            stable = false;
            break;
        }
        if step < steps {
            x = advance(&rhs, t, &x, dt, sub);
            for i in 0..n {
                if x[3 * i + 1] < 0.0 {
                    x[3 * i + 1] = 0.0;
                    clamp_events += 1;
                }
            }
        }
    }
    Ok(rec.finish(n, stable, clamp_events))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_a_model() -> LinearPlatoonModel {
        let topo = Topology::h_neighbor(10, 2, &[0]).unwrap();
        let gains = ControllerGains::new(2.122, 3.425, 2.501, 35.33).unwrap();
        LinearPlatoonModel::new(VehicleParams::new(0.5).unwrap(), gains, topo.assemble()).unwrap()
    }

    #[test]
    fn profile_integrals_match_quadrature() {
        let profiles = [
            Profile::Constant { value: 3.0 },
            Profile::Ramp {
                from: 20.0,
                to: 30.0,
                start: 5.0,
                end: 10.0,
            },
            Profile::SineWindow {
                amplitude: 1.5,
                period: 5.0,
                start: 5.0,
                end: 10.0,
            },
        ];
        for p in profiles {
            let h = 1e-4;
            let acc: f64 = (0..130_000)
                .map(|k| {
                    let t = k as f64 * h;
                    0.5 * h * (p.eval(t) + p.eval(t + h))
                })
                .sum();
            assert!(
                (acc - p.integral(13.0)).abs() < 1e-5,
                "{p:?}: {acc} vs {}",
                p.integral(13.0)
            );
        }
    }

    #[test]
    fn ramp_reaches_thirty() {
        let p = Scenario::leader_ramp().leader_velocity;
        assert_eq!(p.eval(0.0), 20.0);
        assert_eq!(p.eval(7.5), 25.0);
        assert_eq!(p.eval(12.0), 30.0);
        assert_eq!(p.derivative(7.0), 2.0);
    }

    #[test]
    fn zero_scenario_stays_at_equilibrium() {
        let model = table_a_model();
        let mut sc = Scenario::sine_disturbance();
        sc.disturbance = Disturbance::Uniform(Profile::Zero);
        let r = simulate_linear(&model, &sc, 0.01).unwrap();
        assert_eq!(r.max_abs_spacing_error(), 0.0);
        assert!(r.empirical_gain.is_none());
        assert_eq!(r.time.len(), 3001);
    }

    #[test]
    fn closed_loop_matches_kron_form() {
        let model = table_a_model();
        let (a, b1, _) = crate::lmi::plant(0.5);
        let k = DMatrix::from_row_slice(1, 3, &model.gains.k());
        let n = model.n();
        let kron = |l: &DMatrix<f64>, r: &DMatrix<f64>| l.kronecker(r);
        let expected =
            kron(&DMatrix::identity(n, n), &a) - kron(&model.matrix.lp, &(b1 * k)) * model.gains.c;
        assert!((expected - &model.closed_loop).amax() < 1e-12);
    }

    #[test]
    fn rejects_coarse_step() {
        let model = table_a_model();
        let e = simulate_linear(&model, &Scenario::sine_disturbance(), 0.06).unwrap_err();
        assert!(matches!(e, Error::InvalidParameter(_)));
    }

    #[test]
    fn rejects_accelerating_leader_in_linear_model() {
        let model = table_a_model();
        assert!(simulate_linear(&model, &Scenario::leader_ramp(), 0.01).is_err());
    }

    #[test]
    fn inverse_model_holds_cruise() {
        let topo = Topology::mini_platoons(&[3, 4, 3], 1).unwrap();
        let gains = ControllerGains::new(2.122, 3.425, 2.501, 10.99).unwrap();
        let mut sc = Scenario::leader_ramp();
        sc.leader_velocity = Profile::Constant { value: 20.0 };
        sc.horizon = 10.0;
        let r = simulate_nonlinear(&reference_fleet(9.8, 0.3), &gains, &topo, &sc, 0.01).unwrap();
        assert!(
            r.max_abs_spacing_error() < 1e-9,
            "{}",
            r.max_abs_spacing_error()
        );
    }

    #[test]
    fn tire_radius_cancels() {
        let topo = Topology::h_neighbor(10, 2, &[0]).unwrap();
        let gains = ControllerGains::new(2.122, 3.425, 2.501, 35.33).unwrap();
        let sc = Scenario {
            horizon: 15.0,
            ..Scenario::leader_ramp()
        };
        let a = simulate_nonlinear(&reference_fleet(9.8, 0.3), &gains, &topo, &sc, 0.01).unwrap();
        let b = simulate_nonlinear(&reference_fleet(9.8, 0.45), &gains, &topo, &sc, 0.01).unwrap();
        let scale = a.max_abs_spacing_error();
        let diff = (&a.spacing_errors - &b.spacing_errors).amax();
        assert!(diff <= 1e-9 * (1.0 + scale), "{diff} vs {scale}");
    }

    #[test]
    fn empirical_gain_rejects_silence() {
        let z = DMatrix::zeros(2, 3);
        assert!(empirical_gain(&[0.0, 1.0, 2.0], &z, &z).is_err());
    }

    #[test]
    fn csv_header_layout() {
        let model = table_a_model();
        let sc = Scenario {
            horizon: 0.02,
            ..Scenario::sine_disturbance()
        };
        let csv = simulate_linear(&model, &sc, 0.01).unwrap().to_csv();
        let header = csv.lines().next().unwrap();
        assert!(header.starts_with("t,err_p_1,"));
        assert!(header.ends_with(",u_10"));
        assert_eq!(header.split(',').count(), 31);
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn scenario_json_round_trip() {
        let sc = Scenario::sine_disturbance();
        let s = serde_json::to_string(&sc).unwrap();
        assert!(s.contains("\"type\":\"sine_window\""));
        let back: Scenario = serde_json::from_str(&s).unwrap();
        assert_eq!(back, sc);
        let bad = s.replace("\"horizon\"", "\"horizn\"");
        assert!(serde_json::from_str::<Scenario>(&bad).is_err());
    }
}
