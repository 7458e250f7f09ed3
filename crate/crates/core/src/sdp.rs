//! Small dense linear-matrix-inequality solver.
//!
//! Minimises `cᵀz` subject to a set of affine constraints
//! `F_i(z) = F_i0 + Σ_k z_k F_ik ≻ 0` using a log-det barrier with damped
//! Newton steps. Intended for problems with a handful of variables and
//! blocks of size ≤ 10, where dense Hessian assembly is cheap.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// `F(z) = constant + Σ_k z_k coefficients[k]`; all matrices symmetric.
#[derive(Debug, Clone)]
pub struct AffineBlock {
    pub constant: DMatrix<f64>,
    pub coefficients: Vec<DMatrix<f64>>,
}

impl AffineBlock {
    /// Builds the block from any affine map by probing it at `0` and at the
    /// unit vectors.
    pub fn from_affine_map(dim: usize, map: impl Fn(&DVector<f64>) -> DMatrix<f64>) -> Self {
        let zero = DVector::zeros(dim);
        let constant = map(&zero);
        let coefficients = (0..dim)
            .map(|k| {
                let mut e = zero.clone();
                e[k] = 1.0;
                map(&e) - &constant
            })
            .collect();
        AffineBlock {
            constant,
            coefficients,
        }
    }

    pub fn eval(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (zk, fk) in z.iter().zip(&self.coefficients) {
            if *zk != 0.0 {
                m += fk * *zk;
            }
        }
        m
    }

    fn size(&self) -> usize {
        self.constant.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct BarrierOptions {
    /// Initial barrier weight on the objective.
    pub initial_weight: f64,
    /// Weight multiplier per outer iteration.
    pub growth: f64,
    /// Stop once the barrier duality-gap bound `m / weight` drops below this.
    pub gap_tolerance: f64,
    pub max_newton_steps: usize,
    pub max_outer: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions {
            initial_weight: 1.0,
            growth: 8.0,
            gap_tolerance: 1e-9,
            max_newton_steps: 200,
            max_outer: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BarrierSolution {
    pub z: DVector<f64>,
    pub objective: f64,
    pub gap_bound: f64,
    pub newton_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BarrierFailure {
    InfeasibleStart,
    SingularNewtonSystem,
    IterationLimit,
}

fn chol(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone())
}

fn strictly_feasible(blocks: &[AffineBlock], z: &DVector<f64>) -> bool {
    blocks.iter().all(|b| chol(&b.eval(z)).is_some())
}

fn barrier_value(
    blocks: &[AffineBlock],
    c: &DVector<f64>,
    weight: f64,
    z: &DVector<f64>,
) -> Option<f64> {
    let mut v = weight * c.dot(z);
    for b in blocks {
        let ch = chol(&b.eval(z))?;
        let logdet: f64 = ch.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        v -= logdet;
    }
    Some(v)
}

/// Solves `H Δ = −g`, adding diagonal regularisation when rounding has
/// pushed `H` off positive definiteness.
fn newton_step(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = chol(hess) {
        return Some(ch.solve(&(-grad)));
    }
    let scale = hess.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut shift = 1e-12 * scale;
    while shift <= scale {
        let reg = hess + DMatrix::identity(hess.nrows(), hess.ncols()) * shift;
        if let Some(ch) = chol(&reg) {
            return Some(ch.solve(&(-grad)));
        }
        shift *= 10.0;
    }
    None
}

/// Minimise `cᵀz` over the strict feasible set, starting from a strictly
/// feasible `z0`.
pub fn minimize(
    blocks: &[AffineBlock],
    c: &DVector<f64>,
    z0: DVector<f64>,
    opts: &BarrierOptions,
) -> Result<BarrierSolution, BarrierFailure> {
    let dim = c.len();
    if !strictly_feasible(blocks, &z0) {
        return Err(BarrierFailure::InfeasibleStart);
    }
    let m: f64 = blocks.iter().map(|b| b.size() as f64).sum();
    let mut z = z0;
    let mut weight = opts.initial_weight;
    let mut steps = 0;

    for _ in 0..opts.max_outer {
        // Centering.
        for _ in 0..opts.max_newton_steps {
            let mut grad = c * weight;
            let mut hess = DMatrix::<f64>::zeros(dim, dim);
            for b in blocks {
                let f = b.eval(&z);
                let inv = chol(&f).ok_or(BarrierFailure::InfeasibleStart)?.inverse();
                let scaled: Vec<DMatrix<f64>> = b.coefficients.iter().map(|fk| &inv * fk).collect();
                for k in 0..dim {
                    grad[k] -= scaled[k].trace();
                    for l in 0..=k {
                        // tr(F⁻¹F_k F⁻¹F_l)
                        let h = scaled[k].component_mul(&scaled[l].transpose()).sum();
                        hess[(k, l)] += h;
                        if l != k {
                            hess[(l, k)] += h;
                        }
                    }
                }
            }
            let step = newton_step(&hess, &grad).ok_or(BarrierFailure::SingularNewtonSystem)?;
            let decrement = -grad.dot(&step);
            steps += 1;
            if !(decrement / 2.0 >= 1e-12) {
                break;
            }
            let f0 = barrier_value(blocks, c, weight, &z).ok_or(BarrierFailure::InfeasibleStart)?;
            let mut s = 1.0;
            let mut accepted = false;
            while s > 1e-14 {
                let trial = &z + &step * s;
                if let Some(ft) = barrier_value(blocks, c, weight, &trial) {
                    if ft <= f0 - 0.25 * s * decrement {
                        z = trial;
                        accepted = true;
                        break;
                    }
                }
                s *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let gap = m / weight;
        if gap < opts.gap_tolerance {
            return Ok(BarrierSolution {
                objective: c.dot(&z),
                z,
                gap_bound: gap,
                newton_steps: steps,
            });
        }
        weight *= opts.growth;
    }
    Err(BarrierFailure::IterationLimit)
}
