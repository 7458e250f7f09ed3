//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fail.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use common::random_connected;
use platoon_core::linalg::max_eigenvalue;
use platoon_core::lmi::{
    assemble_lmi, extract_gains, solve_lmi, synthesize, LmiCertificate, LmiProblem,
};
use platoon_core::modal::{
    default_frequency_grid, gamma_gain, gamma_gain_full_system, log_grid, scaling_sweep,
    TopologyFamily,
};
use platoon_core::sim::{
    reference_fleet, simulate_linear, simulate_linear_modal, simulate_nonlinear,
    LinearPlatoonModel, Scenario,
};
use platoon_core::topology::lambda_min;
use platoon_core::{ControllerGains, ModalSystem, Topology, VehicleParams};

const ALPHA: f64 = 1.968;
const K: [f64; 3] = [2.122, 3.425, 2.501];
const LAMBDAS: [f64; 4] = [0.0557, 0.0806, 0.0810, 0.1790];
const COUPLINGS: [f64; 4] = [35.33, 24.42, 24.30, 10.99];

fn table_topologies() -> [Topology; 4] {
    [
        Topology::h_neighbor(10, 2, &[0]).unwrap(),
        Topology::h_neighbor(10, 4, &[0]).unwrap(),
        Topology::mini_platoons(&[5, 5], 1).unwrap(),
        Topology::mini_platoons(&[3, 4, 3], 1).unwrap(),
    ]
}

fn gains(c: f64) -> ControllerGains {
    ControllerGains::new(K[0], K[1], K[2], c).unwrap()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn fmt_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.4}")).collect();
    format!("({})", parts.join(", "))
}

fn criterion_1() -> Outcome {
    let lambdas: Vec<f64> = table_topologies()
        .iter()
        .map(|t| lambda_min(t).unwrap())
        .collect();
    let cs: Vec<f64> = lambdas.iter().map(|l| ALPHA / l).collect();
    let lam_ok = lambdas
        .iter()
        .zip(LAMBDAS)
        .all(|(a, b)| (a - b).abs() <= 5e-5);
    let c_ok = cs.iter().zip(COUPLINGS).all(|(a, b)| (a - b).abs() <= 0.01);
    outcome(
        lam_ok && c_ok,
        format!("lambda_min = {}, c = {}", fmt_list(&lambdas), fmt_list(&cs)),
    )
}

fn published_q() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        3,
        3,
        &[
            0.669, -0.419, 0.006, -0.419, 0.606, -0.474, 0.006, -0.474, 1.044,
        ],
    )
}

fn criterion_2() -> Outcome {
    let problem = LmiProblem::new(0.5, 1.0).unwrap();
    let lmi = assemble_lmi(&problem, &published_q(), ALPHA);
    let top = max_eigenvalue(&lmi).unwrap();
    let cert = LmiCertificate {
        q: published_q(),
        alpha: ALPHA,
        margin: 0.0,
    };
    let k = extract_gains(&cert, &problem).unwrap();
    let worst = k
        .iter()
        .zip(K)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    outcome(
        top < 0.0 && worst <= 5e-3,
        format!(
            "max eig = {top:.3e}, k = ({:.5}, {:.5}, {:.5}), worst gain deviation {worst:.2e} (tol 5e-3)",
            k[0], k[1], k[2]
        ),
    )
}

fn criterion_3() -> Outcome {
    let problem = LmiProblem::new(0.5, 1.0).unwrap();
    let cert = match solve_lmi(&problem) {
        Ok(c) => c,
        Err(e) => return outcome(false, format!("solve_lmi failed: {e}")),
    };
    let (q_min, lmi_max) = cert.check(&problem).unwrap();
    let cert_ok = q_min >= 1e-6 && -lmi_max >= 1e-6;
    let mut worst: f64 = 0.0;
    let mut all_ok = cert_ok;
    for t in table_topologies() {
        match synthesize(&problem, &t.assemble().spectrum().unwrap()) {
            Ok(r) => {
                let m = r.verified_modal_norms.iter().cloned().fold(0.0, f64::max);
                worst = worst.max(m);
                all_ok &= m < 1.0;
            }
            Err(_) => all_ok = false,
        }
    }
    outcome(
        all_ok,
        format!(
            "lambda_min(Q) = {q_min:.3e}, lambda_max(LMI) = {lmi_max:.3e}, alpha = {:.4}, worst modal norm = {worst:.4}",
            cert.alpha
        ),
    )
}

fn criterion_4() -> Outcome {
    let params = VehicleParams::new(0.5).unwrap();
    let g = ControllerGains::new(1.0, 2.0, 0.5, 1.0).unwrap();
    let sizes: Vec<usize> = (1..=10).map(|i| 10 * i).collect();
    let bd = scaling_sweep(TopologyFamily::Bd, &sizes, &params, &g).unwrap();
    let increasing = bd.windows(2).all(|w| w[1].gamma > w[0].gamma);
    let above = bd
        .iter()
        .all(|r| r.gamma >= (r.n * r.n) as f64 / (std::f64::consts::PI.powi(2)));
    let mut h_ok = true;
    let mut h_gammas = Vec::new();
    for h in [1, 20, 60, 100] {
        let row = scaling_sweep(TopologyFamily::HNeighbor { h }, &[100], &params, &g).unwrap()[0];
        h_ok &= row.gamma >= 100.0;
        h_gammas.push(row.gamma);
    }
    outcome(
        increasing && above && h_ok,
        format!(
            "BD gamma(10..100) increasing={increasing}, >= N^2/pi^2: {above}; h-neighbor gamma(N=100) = {} >= 100: {h_ok}",
            fmt_list(&h_gammas)
        ),
    )
}

fn criterion_5() -> Outcome {
    const PUBLISHED: [f64; 4] = [0.0226, 0.0234, 0.0166, 0.0187];
    let params = VehicleParams::new(0.5).unwrap();
    let gains_emp: Vec<f64> = table_topologies()
        .par_iter()
        .zip(COUPLINGS)
        .map(|(t, c)| {
            let model = LinearPlatoonModel::new(params, gains(c), t.assemble()).unwrap();
            simulate_linear(&model, &Scenario::sine_disturbance(), 0.01)
                .unwrap()
                .empirical_gain
                .unwrap_or(f64::INFINITY)
        })
        .collect();
    let within = gains_emp
        .iter()
        .zip(PUBLISHED)
        .all(|(a, b)| (a - b).abs() <= 0.2 * b);
    let below = gains_emp.iter().all(|g| *g < 1.0);
    outcome(
        within && below,
        format!(
            "empirical gains = {}, expected {} +/-20%: {within}; all < 1: {below}",
            fmt_list(&gains_emp),
            fmt_list(&PUBLISHED)
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let params = VehicleParams::new(0.5).unwrap();
    let cases: Vec<(Topology, f64)> = (0..50)
        .map(|_| {
            let n = rng.gen_range(1..=12);
            (random_connected(&mut rng, n), rng.gen_range(0.5..5.0))
        })
        .collect();
    let worst_rel = cases
        .par_iter()
        .map(|(t, c)| {
            let g = gains(*c);
            let matrix = t.assemble();
            let report = gamma_gain(&params, &g, &matrix.spectrum().unwrap());
            let full =
                gamma_gain_full_system(&params, &g, &matrix, &default_frequency_grid(&report))
                    .unwrap();
            (full - report.gamma).abs() / report.gamma
        })
        .reduce(|| 0.0, f64::max);
    let mut sims: Vec<(Topology, f64)> = table_topologies().into_iter().zip(COUPLINGS).collect();
    sims.extend(cases.into_iter().take(6));
    let worst_sim = sims
        .par_iter()
        .map(|(t, c)| {
            let model = LinearPlatoonModel::new(params, gains(*c), t.assemble()).unwrap();
            let a = simulate_linear(&model, &Scenario::sine_disturbance(), 0.01).unwrap();
            let b = simulate_linear_modal(&model, &Scenario::sine_disturbance(), 0.01).unwrap();
            (&a.spacing_errors - &b.spacing_errors).amax()
        })
        .reduce(|| 0.0, f64::max);
    outcome(
        worst_rel <= 1e-4 && worst_sim <= 1e-8,
        format!("worst spectral vs frequency-grid rel. diff = {worst_rel:.2e}; worst modal vs direct |dY| = {worst_sim:.2e}"),
    )
}

fn criterion_7() -> Outcome {
    let mut bounded = true;
    let mut equality_exact = true;
    for n in 1..=5 {
        let chain: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
        for mask in 1u32..(1 << n) {
            let pins: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            let t = Topology::new(n, chain.clone(), pins).unwrap();
            let l = lambda_min(&t).unwrap();
            bounded &= l > 0.0 && l <= 1.0 + 1e-12;
            let full = mask == (1 << n) - 1;
            equality_exact &= ((l - 1.0).abs() < 1e-12) == full;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut monotone = true;
    let mut checked = 0;
    while checked < 500 {
        let n = rng.gen_range(2..=10);
        let t = random_connected(&mut rng, n);
        let next = if rng.gen_bool(0.5) {
            let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if i == j {
                continue;
            }
            t.with_edge(i, j)
        } else {
            t.with_pin(rng.gen_range(0..n))
        };
        let Some(next) = next else { continue };
        monotone &= lambda_min(&next).unwrap() >= lambda_min(&t).unwrap() - 1e-12;
        checked += 1;
    }
    outcome(
        bounded && equality_exact && monotone,
        format!("0 < lambda_min <= 1: {bounded}; equality iff P = I: {equality_exact}; monotone over 500 additions: {monotone}"),
    )
}

fn criterion_8() -> Outcome {
    let fleet = reference_fleet(9.8, 0.3);
    let runs: Vec<(bool, f64, f64)> = table_topologies()
        .par_iter()
        .zip(COUPLINGS)
        .map(|(t, c)| {
            let r =
                simulate_nonlinear(&fleet, &gains(c), t, &Scenario::leader_ramp(), 0.01).unwrap();
            let finite = r.stable && r.spacing_errors.iter().all(|x| x.is_finite());
            (
                finite,
                r.max_abs_spacing_error(),
                r.max_abs_spacing_error_after(30.0),
            )
        })
        .collect();
    let finite = runs.iter().all(|r| r.0);
    let settled = runs.iter().all(|r| r.2 < 0.1);
    let maxima: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let d_smallest = maxima[..3].iter().all(|m| maxima[3] < *m);
    outcome(
        finite && settled && d_smallest,
        format!(
            "finite: {finite}; max |e| after t=30 s < 0.1: {settled}; max |e| (a..d) = {}, d smallest: {d_smallest}",
            fmt_list(&maxima)
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let sweep = log_grid(1e-3, 1e3, 1_000_000);
    let cubics: Vec<ModalSystem> = (0..100)
        .map(|_| {
            // (s + r)(s² + 2ζω s + ω²) scaled by a3.
            let a3: f64 = rng.gen_range(0.1..3.0);
            let r: f64 = rng.gen_range(0.05..5.0);
            let zeta: f64 = rng.gen_range(0.15..1.5);
            let w: f64 = rng.gen_range(0.05..5.0);
            let b = 2.0 * zeta * w;
            ModalSystem::from_coeffs([a3, a3 * (r + b), a3 * (r * b + w * w), a3 * r * w * w])
        })
        .collect();
    let worst = cubics
        .par_iter()
        .map(|m| {
            let (norm, _) = m.hinf_norm().unwrap();
            let swept = sweep
                .iter()
                .map(|&w| m.gain_at(w))
                .fold(m.gain_at(0.0), f64::max);
            if swept > norm * (1.0 + 1e-12) {
                f64::INFINITY
            } else {
                (norm - swept) / norm
            }
        })
        .reduce(|| 0.0, f64::max);

    let mut mismatches = 0;
    for _ in 0..1000 {
        let coeffs: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
        if coeffs[0].abs() < 1e-3 {
            continue;
        }
        let companion = DMatrix::from_row_slice(
            3,
            3,
            &[
                -coeffs[1] / coeffs[0],
                -coeffs[2] / coeffs[0],
                -coeffs[3] / coeffs[0],
                1.0,
                0.0,
                0.0,
                0.0,
                1.0,
                0.0,
            ],
        );
        let stable = companion.complex_eigenvalues().iter().all(|z| z.re < 0.0);
        if stable != ModalSystem::from_coeffs(coeffs).is_hurwitz() {
            mismatches += 1;
        }
    }
    outcome(
        worst <= 1e-8 && mismatches == 0,
        format!("worst closed-form vs 1e6-point sweep rel. diff = {worst:.2e}; Routh vs companion mismatches: {mismatches}/1000"),
    )
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (
            1,
            "table 1 eigenvalues and couplings",
            Duration::from_secs(1),
            criterion_1,
        ),
        (
            2,
            "published LMI certificate and gains",
            Duration::from_secs(1),
            criterion_2,
        ),
        (
            3,
            "LMI solver soundness",
            Duration::from_secs(5),
            criterion_3,
        ),
        (
            4,
            "gamma scaling trends",
            Duration::from_secs(30),
            criterion_4,
        ),
        (
            5,
            "sine-disturbance empirical gains",
            Duration::from_secs(20),
            criterion_5,
        ),
        (
            6,
            "decoupling oracles",
            Duration::from_secs(60),
            criterion_6,
        ),
        (
            7,
            "lambda_min bounds and monotonicity",
            Duration::from_secs(30),
            criterion_7,
        ),
        (
            8,
            "nonlinear leader-ramp platoon",
            Duration::from_secs(30),
            criterion_8,
        ),
        (
            9,
            "modal H-infinity exactness and Routh test",
            Duration::from_secs(30),
            criterion_9,
        ),
    ];
    let mut failed = 0;
    for (id, name, budget, run) in criteria {
        let start = Instant::now();
        let o = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let pass = o.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id} [{}] {name}: {} ({:.2}s{})",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            if in_time {
                String::new()
            } else {
                format!(", over {}s budget", budget.as_secs())
            }
        );
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
