//! Distributed H∞ synthesis via a single-vehicle LMI.
//!
//! Find `Q ≻ 0`, `α > 0` with
//!
//! ```text
//! ⎡ AQ + QAᵀ − αB₁B₁ᵀ   B₂       QC₁ᵀ ⎤
//! ⎢ B₂ᵀ                −γ_d² I   0    ⎥ ≺ 0
//! ⎣ C₁Q                 0       −I    ⎦
//! ```
//!
//! then take `kᵀ = ½ B₁ᵀ Q⁻¹` and any coupling `c ≥ α / λ_min(L+P)`. Every
//! closed-loop mode `A − cλ_i B₁kᵀ` then has H∞ norm below `γ_d`.
//!
//! The LMI is solved by maximising a margin `t` with
//! `LMI ⪯ −tI`, `Q ⪰ tI`, `tr Q ≤ trace_cap`, `0 < α < alpha_cap`. The
//! returned certificate is re-checked by an independent eigenvalue
//! evaluation before it is handed out.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::modal::{ControllerGains, ModalSystem, VehicleParams};
use crate::sdp::{self, AffineBlock, BarrierOptions};
use crate::topology::Spectrum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmiProblem {
    pub tau: f64,
    pub gamma_d: f64,
}

impl LmiProblem {
    pub fn new(tau: f64, gamma_d: f64) -> Result<Self> {
        let p = LmiProblem { tau, gamma_d };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        VehicleParams::new(self.tau)?;
        if !(self.gamma_d > 0.0 && self.gamma_d.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "desired H-infinity bound must be positive, got {}",
                self.gamma_d
            )));
        }
        Ok(())
    }
}

/// `A`, `B₁ = B₂`, `C₁` of the single-vehicle model.
pub fn plant(tau: f64) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, -1.0 / tau]);
    let b = DVector::from_vec(vec![0.0, 0.0, 1.0 / tau]);
    let c1 = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
    (a, b, c1)
}

/// Assembles the 5×5 LMI block matrix for a given `(Q, α)`.
pub fn assemble_lmi(problem: &LmiProblem, q: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
    let (a, b, c1) = plant(problem.tau);
    let top_left = &a * q + q * a.transpose() - (&b * b.transpose()) * alpha;
    let qc = q * c1.transpose();
    let mut m = DMatrix::zeros(5, 5);
    m.view_mut((0, 0), (3, 3)).copy_from(&top_left);
    m.view_mut((0, 3), (3, 1)).copy_from(&b);
    m.view_mut((3, 0), (1, 3)).copy_from(&b.transpose());
    m.view_mut((0, 4), (3, 1)).copy_from(&qc);
    m.view_mut((4, 0), (1, 3)).copy_from(&qc.transpose());
    m[(3, 3)] = -problem.gamma_d * problem.gamma_d;
    m[(4, 4)] = -1.0;
    m
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Required distance of the LMI block from zero (`λ_max ≤ −margin`).
    pub min_margin: f64,
    pub trace_cap: f64,
    /// Upper bound on `α`; `None` uses `1e3 · (1 + 1/γ_d²)`.
    pub alpha_cap: Option<f64>,
    /// When set, a second stage minimises `α` while keeping this fraction of
    /// the maximal margin. Smaller `α` means smaller coupling `c`.
    pub alpha_refine: Option<f64>,
    pub barrier: BarrierOptions,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            min_margin: 1e-6,
            trace_cap: 100.0,
            alpha_cap: None,
            alpha_refine: Some(0.1),
            barrier: BarrierOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiCertificate {
    pub q: DMatrix<f64>,
    pub alpha: f64,
    /// `−λ_max` of the assembled LMI block.
    pub margin: f64,
}

impl LmiCertificate {
    /// Re-evaluates the certificate from scratch: `λ_min(Q)` and the
    /// assembled block's `λ_max`.
    pub fn check(&self, problem: &LmiProblem) -> Result<(f64, f64)> {
        let q_min = linalg::min_eigenvalue(&self.q)?;
        let lmi_max = linalg::max_eigenvalue(&assemble_lmi(problem, &self.q, self.alpha))?;
        Ok((q_min, lmi_max))
    }
}

fn sym3(z: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        3,
        3,
        &[z[0], z[1], z[2], z[1], z[3], z[4], z[2], z[4], z[5]],
    )
}

/// Solves the LMI with the default configuration.
pub fn solve_lmi(problem: &LmiProblem) -> Result<LmiCertificate> {
    solve_lmi_with(problem, &SolverConfig::default())
}

pub fn solve_lmi_with(problem: &LmiProblem, config: &SolverConfig) -> Result<LmiCertificate> {
    problem.validate()?;
    let gamma2 = problem.gamma_d * problem.gamma_d;
    let alpha_cap = config.alpha_cap.unwrap_or(1e3 * (1.0 + 1.0 / gamma2));
    let trace_cap = config.trace_cap;
    if !(trace_cap > 3.0) || !(alpha_cap > 1.0) {
        return Err(Error::InvalidParameter(
            "trace cap must exceed 3 and alpha cap must exceed 1".into(),
        ));
    }
    // z = (q11, q12, q13, q22, q23, q33, alpha, t)
    const DIM: usize = 8;
    let p = *problem;
    let blocks = vec![
        AffineBlock::from_affine_map(DIM, move |z| {
            -assemble_lmi(&p, &sym3(z), z[6]) - DMatrix::identity(5, 5) * z[7]
        }),
        AffineBlock::from_affine_map(DIM, |z| sym3(z) - DMatrix::identity(3, 3) * z[7]),
        AffineBlock::from_affine_map(DIM, move |z| {
            DMatrix::from_element(1, 1, trace_cap - z[0] - z[3] - z[5])
        }),
        AffineBlock::from_affine_map(DIM, |z| DMatrix::from_element(1, 1, z[6])),
        AffineBlock::from_affine_map(DIM, move |z| DMatrix::from_element(1, 1, alpha_cap - z[6])),
    ];
    let mut objective = DVector::zeros(DIM);
    objective[7] = -1.0;

    let q0 = DMatrix::<f64>::identity(3, 3);
    let alpha0 = 1.0;
    let lmi0_max = linalg::max_eigenvalue(&assemble_lmi(problem, &q0, alpha0))?;
    let t0 = (-lmi0_max).min(1.0) - 1.0;
    let z0 = DVector::from_vec(vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, alpha0, t0]);

    let mut sol = sdp::minimize(&blocks, &objective, z0.clone(), &config.barrier)
        .map_err(|e| Error::SolverFailed(format!("{e:?}")))?;

    if let Some(fraction) = config.alpha_refine {
        let t_best = sol.z[7];
        let t_keep = (fraction * t_best).max(config.min_margin);
        if t_best > 2.0 * t_keep {
            // Restart from a well-centred point on the margin path (t ≥ t*/2)
            // rather than from the near-boundary optimum.
            let coarse = BarrierOptions {
                gap_tolerance: 0.5 * t_best,
                ..config.barrier.clone()
            };
            let centred = sdp::minimize(&blocks, &objective, z0, &coarse)
                .map_err(|e| Error::SolverFailed(format!("{e:?}")))?;
            let mut refine_blocks = blocks;
            refine_blocks.push(AffineBlock::from_affine_map(DIM, move |z| {
                DMatrix::from_element(1, 1, z[7] - t_keep)
            }));
            let mut alpha_objective = DVector::zeros(DIM);
            alpha_objective[6] = 1.0;
            let refine = BarrierOptions {
                gap_tolerance: 1e-6,
                ..config.barrier.clone()
            };
            sol = sdp::minimize(&refine_blocks, &alpha_objective, centred.z, &refine)
                .map_err(|e| Error::SolverFailed(format!("alpha refinement: {e:?}")))?;
        }
    }

    let q = sym3(&sol.z);
    let q = (&q + q.transpose()) * 0.5;
    let alpha = sol.z[6];
    let mut cert = LmiCertificate {
        q,
        alpha,
        margin: 0.0,
    };
    let (q_min, lmi_max) = cert.check(problem)?;
    cert.margin = -lmi_max;
    if q_min <= 0.0 || cert.margin < config.min_margin {
        return Err(Error::SolverFailed(format!(
            "certificate failed verification: lambda_min(Q) = {q_min:.3e}, LMI margin = {:.3e} (required {:.1e})",
            cert.margin, config.min_margin
        )));
    }
    Ok(cert)
}

/// `kᵀ = ½ B₁ᵀ Q⁻¹`, i.e. the third row of `Q⁻¹` scaled by `1/(2τ)`.
pub fn extract_gains(certificate: &LmiCertificate, problem: &LmiProblem) -> Result<[f64; 3]> {
    let inv = certificate
        .q
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter("Q is singular".into()))?;
    let s = 1.0 / (2.0 * problem.tau);
    Ok([inv[(2, 0)] * s, inv[(2, 1)] * s, inv[(2, 2)] * s])
}

/// Minimal admissible coupling `c = α / λ_min`.
pub fn coupling_strength(certificate: &LmiCertificate, lambda_min: f64) -> Result<f64> {
    if !(lambda_min > 0.0) {
        return Err(Error::LeaderUnreachable);
    }
    Ok(certificate.alpha / lambda_min)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub gains: ControllerGains,
    pub certificate: LmiCertificate,
    pub lambda_min: f64,
    pub gamma_d: f64,
    /// Closed-loop H∞ norm of every mode, in eigenvalue order.
    pub verified_modal_norms: Vec<f64>,
}

/// JSON form: `{Q, alpha, k, c, lambda_min, modal_norms, gamma_d}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisJson {
    #[serde(rename = "Q")]
    pub q: [[f64; 3]; 3],
    pub alpha: f64,
    pub k: [f64; 3],
    pub c: f64,
    pub lambda_min: f64,
    pub modal_norms: Vec<f64>,
    pub gamma_d: f64,
}

impl SynthesisResult {
    pub fn to_json(&self) -> SynthesisJson {
        let q = &self.certificate.q;
        SynthesisJson {
            q: [0, 1, 2].map(|i| [0, 1, 2].map(|j| q[(i, j)])),
            alpha: self.certificate.alpha,
            k: self.gains.k(),
            c: self.gains.c,
            lambda_min: self.lambda_min,
            modal_norms: self.verified_modal_norms.clone(),
            gamma_d: self.gamma_d,
        }
    }
}

/// Closed-loop H∞ norm of every mode; fails if any mode is unstable or
/// reaches `gamma_d`.
pub fn verify_modes(
    params: &VehicleParams,
    gains: &ControllerGains,
    spectrum: &Spectrum,
    gamma_d: f64,
) -> Result<Vec<f64>> {
    spectrum
        .eigenvalues
        .iter()
        .map(|&lambda| {
            let mode = ModalSystem::new(params, gains, lambda);
            let (norm, _) = mode.hinf_norm().map_err(|_| {
                Error::VerificationFailed(format!("mode with eigenvalue {lambda} is not Hurwitz"))
            })?;
            if norm >= gamma_d {
                return Err(Error::VerificationFailed(format!(
                    "mode with eigenvalue {lambda} has H-infinity norm {norm} >= {gamma_d}"
                )));
            }
            Ok(norm)
        })
        .collect()
}

/// Solve, extract gains, set `c = α/λ_min`, and verify every mode.
pub fn synthesize(problem: &LmiProblem, spectrum: &Spectrum) -> Result<SynthesisResult> {
    synthesize_with(problem, spectrum, &SolverConfig::default())
}

/// As [`synthesize`]; a failed verification is retried once with margin
/// `1e-4` before being reported.
pub fn synthesize_with(
    problem: &LmiProblem,
    spectrum: &Spectrum,
    config: &SolverConfig,
) -> Result<SynthesisResult> {
    match synthesize_once(problem, spectrum, config) {
        Err(Error::VerificationFailed(_)) if config.min_margin < 1e-4 => {
            let retry = SolverConfig {
                min_margin: 1e-4,
                ..config.clone()
            };
            synthesize_once(problem, spectrum, &retry)
        }
        other => other,
    }
}

fn synthesize_once(
    problem: &LmiProblem,
    spectrum: &Spectrum,
    config: &SolverConfig,
) -> Result<SynthesisResult> {
    let lambda_min = spectrum.lambda_min();
    if !(lambda_min > 0.0) {
        return Err(Error::LeaderUnreachable);
    }
    let certificate = solve_lmi_with(problem, config)?;
    let [kp, kv, ka] = extract_gains(&certificate, problem)?;
    let c = coupling_strength(&certificate, lambda_min)?;
    let gains = ControllerGains::new(kp, kv, ka, c)?;
    let params = VehicleParams::new(problem.tau)?;
    let verified_modal_norms = verify_modes(&params, &gains, spectrum, problem.gamma_d)?;
    Ok(SynthesisResult {
        gains,
        certificate,
        lambda_min,
        gamma_d: problem.gamma_d,
        verified_modal_norms,
    })
}
