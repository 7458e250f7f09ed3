//! Modal decomposition of the platoon transfer matrix.
//!
//! With `L + P = V Λ Vᵀ`, the disturbance-to-position-error map
//! `G(s) = [I(τs³ + s²) + c(L+P)(k_p + k_v s + k_a s²)]⁻¹` splits into `N`
//! scalar modes
//!
//! ```text
//! G_i(s) = 1 / (τ s³ + (1 + cλ_i k_a) s² + cλ_i k_v s + cλ_i k_p)
//! ```
//!
//! and the platoon γ-gain is the largest modal H∞ norm. Each modal norm is
//! computed exactly: `|den(jω)|²` is a cubic in `x = ω²`, so its minimum over
//! `x ≥ 0` sits at `x = 0` or at a positive root of the derivative quadratic.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::sig9;
use crate::topology::{Spectrum, Topology, TopologyMatrix};

/// First-order powertrain lag `τ ȧ + a = u + w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    pub tau: f64,
}

impl VehicleParams {
    pub fn new(tau: f64) -> Result<Self> {
        let p = VehicleParams { tau };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "inertial delay tau must be positive, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Identical feedback gains `k = (k_p, k_v, k_a)` and coupling strength `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerGains {
    pub kp: f64,
    pub kv: f64,
    pub ka: f64,
    #[serde(default = "unit_coupling")]
    pub c: f64,
}

fn unit_coupling() -> f64 {
    1.0
}

impl ControllerGains {
    pub fn new(kp: f64, kv: f64, ka: f64, c: f64) -> Result<Self> {
        let g = ControllerGains { kp, kv, ka, c };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "coupling strength must be positive, got {}",
                self.c
            )));
        }
        if ![self.kp, self.kv, self.ka].iter().all(|k| k.is_finite()) {
            return Err(Error::InvalidParameter(
                "feedback gains must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn with_coupling(self, c: f64) -> Self {
        ControllerGains { c, ..self }
    }

    pub fn k(&self) -> [f64; 3] {
        [self.kp, self.kv, self.ka]
    }
}

/// One decoupled third-order subsystem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModalSystem {
    /// `c·λ_i`.
    pub lambda_eff: f64,
    /// Denominator coefficients `(a3, a2, a1, a0)`, highest power first.
    pub coeffs: [f64; 4],
}

impl ModalSystem {
    pub fn new(params: &VehicleParams, gains: &ControllerGains, lambda: f64) -> Self {
        let l = gains.c * lambda;
        ModalSystem {
            lambda_eff: l,
            coeffs: [params.tau, 1.0 + l * gains.ka, l * gains.kv, l * gains.kp],
        }
    }

    pub fn from_coeffs(coeffs: [f64; 4]) -> Self {
        ModalSystem {
            lambda_eff: f64::NAN,
            coeffs,
        }
    }

    /// Routh–Hurwitz test for a cubic: after normalising the sign of the
    /// leading coefficient, all coefficients positive and `a2·a1 > a3·a0`.
    pub fn is_hurwitz(&self) -> bool {
        let s = self.coeffs[0].signum();
        let [a3, a2, a1, a0] = self.coeffs.map(|a| a * s);
        a3 > 0.0 && a2 > 0.0 && a1 > 0.0 && a0 > 0.0 && a2 * a1 > a3 * a0
    }

    /// `|den(jω)|²` as a polynomial in `x = ω²`: `[c6, c4, c2, c0]` for
    /// `c6 x³ + c4 x² + c2 x + c0`.
    pub fn magnitude_poly(&self) -> [f64; 4] {
        let [a3, a2, a1, a0] = self.coeffs;
        [
            a3 * a3,
            a2 * a2 - 2.0 * a1 * a3,
            a1 * a1 - 2.0 * a0 * a2,
            a0 * a0,
        ]
    }

    /// `|G_i(jω)|`.
    pub fn gain_at(&self, omega: f64) -> f64 {
        let [a3, a2, a1, a0] = self.coeffs;
        let re = a0 - a2 * omega * omega;
        let im = a1 * omega - a3 * omega * omega * omega;
        1.0 / re.hypot(im)
    }

    /// Exact H∞ norm and the frequency where it is attained.
    pub fn hinf_norm(&self) -> Result<(f64, f64)> {
        if !self.is_hurwitz() {
            return Err(Error::NotHurwitz(self.coeffs));
        }
        let [c6, c4, c2, c0] = self.magnitude_poly();
        let eval = |x: f64| ((c6 * x + c4) * x + c2) * x + c0;

        // d/dx: 3 c6 x² + 2 c4 x + c2
        let mut best_x = 0.0;
        let mut best = c0;
        for x in quadratic_roots(3.0 * c6, 2.0 * c4, c2) {
            if x > 0.0 {
                let v = eval(x);
                if v < best {
                    best = v;
                    best_x = x;
                }
            }
        }
        Ok((1.0 / best.sqrt(), best_x.sqrt()))
    }
}

/// Real roots of `a x² + b x + c` (`a != 0`), repeated root returned once.
fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    if disc == 0.0 {
        return vec![-b / (2.0 * a)];
    }
    // Avoid cancellation between -b and sqrt(disc).
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c / q]
}

pub fn modal_systems(
    params: &VehicleParams,
    gains: &ControllerGains,
    spectrum: &Spectrum,
) -> Vec<ModalSystem> {
    spectrum
        .eigenvalues
        .iter()
        .map(|&l| ModalSystem::new(params, gains, l))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeNorm {
    pub lambda: f64,
    pub norm: f64,
    pub peak_frequency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaReport {
    /// Platoon γ-gain; `+∞` when any mode is unstable.
    pub gamma: f64,
    pub per_mode: Vec<ModeNorm>,
    pub lambda_min: f64,
    /// `1 / (c λ_min k_p)`.
    pub bound_theorem1: f64,
    pub stable: bool,
}

/// γ-gain as the maximum modal H∞ norm over the spectrum of `L + P`.
pub fn gamma_gain(
    params: &VehicleParams,
    gains: &ControllerGains,
    spectrum: &Spectrum,
) -> GammaReport {
    let mut per_mode = Vec::with_capacity(spectrum.len());
    let mut stable = true;
    for mode in modal_systems(params, gains, spectrum) {
        let lambda = mode.lambda_eff / gains.c;
        match mode.hinf_norm() {
            Ok((norm, peak_frequency)) => per_mode.push(ModeNorm {
                lambda,
                norm,
                peak_frequency,
            }),
            Err(_) => {
                stable = false;
                per_mode.push(ModeNorm {
                    lambda,
                    norm: f64::INFINITY,
                    peak_frequency: f64::NAN,
                });
            }
        }
    }
    let gamma = if stable {
        per_mode.iter().map(|m| m.norm).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    let lambda_min = spectrum.lambda_min();
    GammaReport {
        gamma,
        per_mode,
        lambda_min,
        bound_theorem1: 1.0 / (gains.c * lambda_min * gains.kp),
        stable,
    }
}

/// 4096 log-spaced points on `[1e-3, 1e3]` rad/s plus every modal peak
/// frequency, sorted.
pub fn default_frequency_grid(report: &GammaReport) -> Vec<f64> {
    let mut grid = log_grid(1e-3, 1e3, 4096);
    grid.extend(
        report
            .per_mode
            .iter()
            .map(|m| m.peak_frequency)
            .filter(|w| w.is_finite()),
    );
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..points)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64))
        .collect()
}

/// Largest singular value of the full `N×N` transfer matrix maximised over
/// `grid`, evaluated without any spectral decomposition.
pub fn gamma_gain_full_system(
    params: &VehicleParams,
    gains: &ControllerGains,
    matrix: &TopologyMatrix,
    grid: &[f64],
) -> Result<f64> {
    let n = matrix.n();
    let mut best = 0.0_f64;
    for &omega in grid {
        let s = Complex64::new(0.0, omega);
        let diag = params.tau * s * s * s + s * s;
        let poly = gains.c * (gains.kp + gains.kv * s + gains.ka * s * s);
        let m = DMatrix::from_fn(n, n, |i, j| {
            let v = poly * matrix.lp[(i, j)];
            if i == j {
                v + diag
            } else {
                v
            }
        });
        let sv = m.singular_values();
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        let smax = sv.iter().copied().fold(0.0, f64::max);
        if !(smin > 1e-14 * smax.max(1.0)) {
            return Err(Error::NotHurwitz([f64::NAN; 4]));
        }
        best = best.max(1.0 / smin);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologyFamily {
    /// Chain, first follower pinned.
    Bd,
    /// Chain, all followers pinned.
    Bdl,
    /// No follower links, all followers pinned.
    Star,
    /// `h`-neighbor graph, first follower pinned.
    HNeighbor { h: usize },
}

impl TopologyFamily {
    pub fn build(&self, n: usize) -> Result<Topology> {
        match *self {
            TopologyFamily::Bd => Topology::bd(n),
            TopologyFamily::Bdl => Topology::bdl(n),
            TopologyFamily::Star => Topology::star(n),
            TopologyFamily::HNeighbor { h } => Topology::h_neighbor(n, h, &[0]),
        }
    }

    /// Lower bound on γ for `n` followers: `N²/(c k_p π²)` for the chain,
    /// `N/(c k_p Ω)` otherwise, with `Ω` the number of pinned followers.
    pub fn lower_bound(&self, n: usize, gains: &ControllerGains) -> f64 {
        let n_f = n as f64;
        match self {
            TopologyFamily::Bd => n_f * n_f / (gains.c * gains.kp * PI * PI),
            TopologyFamily::Bdl | TopologyFamily::Star => 1.0 / (gains.c * gains.kp),
            TopologyFamily::HNeighbor { .. } => n_f / (gains.c * gains.kp),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub gamma: f64,
    pub lower_bound: f64,
    pub lambda_min: f64,
    pub stable: bool,
}

/// γ-gain of one topology family over a range of platoon sizes. Rows come
/// back in the order of `sizes`.
pub fn scaling_sweep(
    family: TopologyFamily,
    sizes: &[usize],
    params: &VehicleParams,
    gains: &ControllerGains,
) -> Result<Vec<SweepRow>> {
    sizes
        .par_iter()
        .map(|&n| {
            let topo = family.build(n)?;
            if !topo.satisfies_spanning_tree() {
                return Err(Error::LeaderUnreachable);
            }
            let spectrum = topo.assemble().spectrum()?;
            let report = gamma_gain(params, gains, &spectrum);
            Ok(SweepRow {
                n,
                gamma: report.gamma,
                lower_bound: family.lower_bound(n, gains),
                lambda_min: report.lambda_min,
                stable: report.stable,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("N,gamma,lower_bound,lambda_min,stable\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.n,
            sig9(r.gamma),
            sig9(r.lower_bound),
            sig9(r.lambda_min),
            r.stable
        ));
    }
    out
}
