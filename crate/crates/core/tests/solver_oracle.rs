use num_complex::Complex64;
use osatcom_core::beamform::*;
use osatcom_core::channel_models::complex_gaussian;
use osatcom_core::linalg::{self, ComplexMatrix};
use osatcom_core::rng::{stream, StreamRng};
use std::f64::consts::PI;

fn random_psd(rng: &mut StreamRng, dim: usize, rank: usize, scale: f64) -> ComplexMatrix {
    let a = ComplexMatrix::from_fn(dim, rank, |_, _| complex_gaussian(rng, scale));
    &a * a.adjoint()
}

fn quad(m: &ComplexMatrix, v: &[Complex64; 2]) -> f64 {
    let mut s = Complex64::new(0.0, 0.0);
    for i in 0..2 {
        for j in 0..2 {
            s += v[i].conj() * m[(i, j)] * v[j];
        }
    }
    s.re
}

fn beam_capacity(problem: &CellProblem, theta: f64, phi: f64) -> f64 {
    let rain = 10f64.powf(-problem.a_r_db / 10.0);
    let v = [
        Complex64::new(theta.cos(), 0.0),
        Complex64::from_polar(theta.sin(), phi),
    ];
    let mut power = problem.p_th;
    for (g, cap) in problem.g_list.iter().zip(&problem.i_th_list) {
        let load = quad(g, &v);
        if load > 0.0 {
            power = power.min(cap / load);
        }
    }
    (1.0 + rain * power * quad(&problem.d, &v)).log2()
}

/// Best rank-one capacity over unit beams `(cos θ, e^{iφ} sin θ)`, each
/// driven at the largest feasible power: a coarse grid, then repeated zooms
/// around the incumbent.
fn rank_one_grid(problem: &CellProblem, steps: usize) -> f64 {
    let (mut center, mut half) = ((0.25 * PI, PI), (0.25 * PI, PI));
    let mut best = f64::NEG_INFINITY;
    for _ in 0..30 {
        for i in 0..=steps {
            let theta = (center.0 - half.0 + 2.0 * half.0 * i as f64 / steps as f64).clamp(0.0, 0.5 * PI);
            for k in 0..=steps {
                let phi = center.1 - half.1 + 2.0 * half.1 * k as f64 / steps as f64;
                let c = beam_capacity(problem, theta, phi);
                if c > best {
                    best = c;
                    center = (theta, phi);
                }
            }
        }
        half = (half.0 * 0.25, half.1 * 0.25);
    }
    best
}

fn instance(rng: &mut StreamRng, k: usize) -> CellProblem {
    let d = random_psd(rng, 2, 2, 1.0);
    let g = (0..k).map(|_| random_psd(rng, 2, 1 + k % 2, 1.0)).collect();
    let caps = (0..k)
        .map(|_| 10f64.powf(-1.5 + 2.0 * rand::Rng::random::<f64>(rng)))
        .collect();
    CellProblem::new(
        d,
        g,
        2.0 * rand::Rng::random::<f64>(rng),
        1.0 + 2.0 * rand::Rng::random::<f64>(rng),
        caps,
    )
    .unwrap()
}

#[test]
fn solver_beats_rank_one_grid() {
    let mut rng = stream(2024, &[]);
    let options = SolverOptions::default();
    for n in 0..60 {
        let k = 1 + n % 4;
        let problem = instance(&mut rng, k);
        let s = solve_cell(&problem, &options).unwrap();
        let oracle = rank_one_grid(&problem, 120);
        assert!(
            s.capacity >= oracle - 1e-4 * oracle,
            "instance {n}: {} < {oracle}",
            s.capacity
        );
        // With at most three constraints some optimum is rank one, so the
        // grid also bounds the solver from above.
        if k <= 2 {
            assert!(
                s.capacity <= oracle * (1.0 + 1e-6),
                "instance {n}: {} >> {oracle}",
                s.capacity
            );
        }
        assert!(s.kkt_residual < 1e-6, "instance {n}: kkt {}", s.kkt_residual);
        assert!(
            s.complementary_slackness < 1e-6,
            "instance {n}: cs {}",
            s.complementary_slackness
        );
        assert!(problem.slacks(&s.q).iter().all(|&x| x >= -1e-9));
        assert!(linalg::is_psd(&s.q, 1e-12));
    }
}

#[test]
fn capacity_matches_closed_form() {
    let mut rng = stream(5, &[]);
    for _ in 0..20 {
        let d = random_psd(&mut rng, 3, 3, 1.0);
        let q = random_psd(&mut rng, 3, 2, 0.5);
        let a_r_db = 3.0;
        let direct = (1.0 + 10f64.powf(-0.3) * (&q * &d).trace().re).log2();
        assert!((capacity(&q, &d, a_r_db).unwrap() - direct).abs() < 1e-12);
    }
}

#[test]
fn lagrangian_gradient_central_differences() {
    let mut rng = stream(6, &[]);
    for _ in 0..8 {
        let problem = instance(&mut rng, 2);
        let mu1 = vec![0.3, 1.1];
        let mu2 = 0.7;
        for _ in 0..20 {
            let q = random_psd(&mut rng, 2, 2, 0.4);
            let e = ComplexMatrix::from_fn(2, 2, |_, _| complex_gaussian(&mut rng, 1.0));
            let e = linalg::hermitian_part(&e);
            let grad = lagrangian_gradient(&q, &problem, &mu1, mu2).unwrap();
            let analytic = linalg::trace_product(&grad, &e).re;
            let h = 1e-6;
            let plus = lagrangian(&(&q + e.scale(h)), &problem, &mu1, mu2).unwrap();
            let minus = lagrangian(&(&q - e.scale(h)), &problem, &mu1, mu2).unwrap();
            let numeric = (plus - minus) / (2.0 * h);
            assert!(
                (analytic - numeric).abs() <= 1e-5 * analytic.abs().max(1e-3),
                "{analytic} vs {numeric}"
            );
        }
    }
}

#[test]
fn capacity_non_increasing_in_radius() {
    use osatcom_core::channel_models::build_d_matrix;
    let mut rng = stream(77, &[]);
    let moment = build_d_matrix(0.5, 1.0, 2).unwrap();
    let options = SolverOptions::default();
    for _ in 0..20 {
        let h2: Vec<ComplexMatrix> = (0..2)
            .map(|_| ComplexMatrix::from_fn(2, 2, |_, _| complex_gaussian(&mut rng, 1.0)))
            .collect();
        let mut previous = f64::INFINITY;
        for xi in [0.0, 0.1, 0.2, 0.4] {
            let problem = CellProblem::robust(&moment, &h2, xi, 1.0, 1.0, vec![0.1; 2]).unwrap();
            let c = solve_cell(&problem, &options).unwrap().capacity;
            assert!(c <= previous * (1.0 + 1e-9), "xi {xi}: {c} > {previous}");
            previous = c;
        }
    }
}
