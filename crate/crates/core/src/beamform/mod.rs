//! Per-cell capacity maximization under robust interference caps.
//!
//! For cell `a` the solver maximizes
//!
//! ```text
//! log₂(1 + 10^(−A_R/10)·Tr{Q D})
//! s.t. Tr{Q G_b} ≤ I_Th,b   (one robust cap per neighbor b)
//!      Tr{Q}     ≤ P_Th
//!      Q ⪰ 0
//! ```
//!
//! through its Lagrange dual. For fixed multipliers the Lagrangian depends on
//! `Q` only through `Tr{QD}` and `Tr{QW}` with `W = Σ μ₁,b G_b + μ₂ I`, so the
//! inner maximizer is rank one along the top generalized eigenvector of
//! `(D, W)`, with its power fixed by the scalar stationarity condition
//! `a·λ·log₂e / (1 + a·λ·t) = 1`.
//!
//! That dual function is not differentiable where the top generalized
//! eigenvalue is repeated, which is exactly where optima with several active
//! constraints sit. [`solve_cell`] therefore minimizes the dual of a log-det
//! smoothed problem, tightening the smoothing in stages, with a projected
//! trust-region dogleg (see [`dogleg`]); each stage's primal point is purified
//! to its support and certified through the KKT conditions.

pub mod dogleg;

use std::f64::consts::LOG2_E;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

pub use dogleg::{dogleg_dual_update, dogleg_step, DualState, TrustRegion};

use crate::channel_models::{apply_rain_attenuation, rain_factor, MomentMatrix};
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, ComplexVector};
use crate::robust_bound::{self, UncertaintyBall};

#[derive(Debug, Clone)]
pub struct CellProblem {
    pub d: ComplexMatrix,
    pub g_list: Vec<ComplexMatrix>,
    pub a_r_db: f64,
    pub p_th: f64,
    pub i_th_list: Vec<f64>,
    pub dim: usize,
}

impl CellProblem {
    pub fn new(
        d: ComplexMatrix,
        g_list: Vec<ComplexMatrix>,
        a_r_db: f64,
        p_th: f64,
        i_th_list: Vec<f64>,
    ) -> Result<Self> {
        let dim = d.nrows();
        linalg::ensure_square(&d, dim)?;
        linalg::ensure_psd(&d, "d")?;
        for g in &g_list {
            linalg::ensure_square(g, dim)?;
            linalg::ensure_psd(g, "g")?;
        }
        if g_list.len() != i_th_list.len() {
            return Err(Error::dims(
                format!("{} interference caps", g_list.len()),
                i_th_list.len(),
            ));
        }
        if !a_r_db.is_finite() {
            return Err(Error::invalid("a_r_db", "rain attenuation must be finite"));
        }
        if !(p_th > 0.0) || !p_th.is_finite() {
            return Err(Error::Infeasible(format!(
                "transmit-power cap must be positive and finite (got {p_th})"
            )));
        }
        if let Some(bad) = i_th_list.iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::Infeasible(format!(
                "interference cap must be positive (got {bad})"
            )));
        }
        Ok(Self {
            d,
            g_list,
            a_r_db,
            p_th,
            i_th_list,
            dim,
        })
    }

    /// Robust problem: one effective interference matrix per estimated
    /// neighbor channel, all sharing the radius `xi`.
    pub fn robust(
        moment: &MomentMatrix,
        h2_estimates: &[ComplexMatrix],
        xi: f64,
        a_r_db: f64,
        p_th: f64,
        i_th_list: Vec<f64>,
    ) -> Result<Self> {
        let ball = UncertaintyBall::new(xi, moment.dim)?;
        let g_list = h2_estimates
            .iter()
            .map(|h| robust_bound::effective_interference_matrix(h, &ball))
            .collect::<Result<Vec<_>>>()?;
        Self::new(moment.d.clone(), g_list, a_r_db, p_th, i_th_list)
    }

    /// Comparison formulation: pessimistic reverse-triangle signal matrix and
    /// nominal (non-robust) interference channels.
    pub fn reverse_triangle_baseline(
        moment: &MomentMatrix,
        h2_estimates: &[ComplexMatrix],
        xi: f64,
        a_r_db: f64,
        p_th: f64,
        i_th_list: Vec<f64>,
    ) -> Result<Self> {
        let ball = UncertaintyBall::new(xi, moment.dim)?;
        let d = robust_bound::pessimistic_signal_matrix(&moment.d, &ball)?;
        let nominal = UncertaintyBall::new(0.0, moment.dim)?;
        let g_list = h2_estimates
            .iter()
            .map(|h| robust_bound::effective_interference_matrix(h, &nominal))
            .collect::<Result<Vec<_>>>()?;
        Self::new(d, g_list, a_r_db, p_th, i_th_list)
    }

    pub fn rain(&self) -> f64 {
        rain_factor(self.a_r_db)
    }

    /// `W = Σ μ₁,b G_b + μ₂ I`.
    pub fn weighted_constraint_matrix(&self, mu1: &[f64], mu2: f64) -> ComplexMatrix {
        let mut w = linalg::identity(self.dim).scale(mu2);
        for (g, &mu) in self.g_list.iter().zip(mu1) {
            if mu != 0.0 {
                w += g.scale(mu);
            }
        }
        w
    }

    /// `(I_Th,b − Tr{QG_b})_b` followed by `P_Th − Tr{Q}`.
    pub fn slacks(&self, q: &ComplexMatrix) -> Vec<f64> {
        self.g_list
            .iter()
            .zip(&self.i_th_list)
            .map(|(g, &cap)| cap - linalg::trace_product_re(q, g))
            .chain(std::iter::once(self.p_th - linalg::trace_re(q)))
            .collect()
    }

    fn check_multipliers(&self, mu1: &[f64], mu2: f64) -> Result<()> {
        if mu1.len() != self.g_list.len() {
            return Err(Error::dims(format!("{} multipliers", self.g_list.len()), mu1.len()));
        }
        if mu1.iter().chain(std::iter::once(&mu2)).any(|&m| !(m >= 0.0)) {
            return Err(Error::invalid("mu", "multipliers must be non-negative"));
        }
        Ok(())
    }

    fn snr(&self, q: &ComplexMatrix) -> f64 {
        linalg::trace_product_re(q, &self.d).max(0.0)
    }

    /// `log₂e·a / (1 + a·Tr{QD})`, the derivative of the capacity in `Tr{QD}`.
    fn capacity_slope(&self, q: &ComplexMatrix) -> f64 {
        let a = self.rain();
        LOG2_E * a / (1.0 + a * self.snr(q))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamSolution {
    pub q: ComplexMatrix,
    pub mu1: Vec<f64>,
    pub mu2: f64,
    pub capacity: f64,
    pub kkt_residual: f64,
    pub complementary_slackness: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Capacity of the smoothed primal iterate at each dual step.
    pub trace: Vec<f64>,
}

impl BeamSolution {
    pub fn max_interference(&self, problem: &CellProblem) -> f64 {
        problem
            .g_list
            .iter()
            .map(|g| linalg::trace_product_re(&self.q, g))
            .fold(0.0, f64::max)
    }

    /// Transmit beam `√p·v` along the principal eigenvector of `Q`.
    pub fn principal_beam(&self) -> ComplexVector {
        let (values, vectors) = linalg::hermitian_eigen(&self.q);
        let n = values.len();
        let power = values[n - 1].max(0.0);
        vectors.column(n - 1).scale(power.sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Threshold on the KKT residual and on complementary slackness.
    pub tol: f64,
    pub max_iterations: usize,
    pub initial_mu1: f64,
    pub initial_mu2: f64,
    /// Per-constraint starting multipliers; overrides `initial_mu1/2`.
    pub initial_multipliers: Option<(Vec<f64>, f64)>,
    pub initial_radius: f64,
    pub trust_region: TrustRegion,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iterations: 500,
            initial_mu1: 1.0,
            initial_mu2: 1.0,
            initial_multipliers: None,
            initial_radius: 1.0,
            trust_region: TrustRegion::default(),
        }
    }
}

/// `log₂(1 + 10^(−A_R/10)·Tr{QD})`.
pub fn capacity(q: &ComplexMatrix, d: &ComplexMatrix, a_r_db: f64) -> Result<f64> {
    let dim = d.nrows();
    linalg::ensure_square(d, dim)?;
    linalg::ensure_square(q, dim)?;
    linalg::ensure_psd(q, "q")?;
    linalg::ensure_psd(d, "d")?;
    Ok(capacity_unchecked(q, d, a_r_db))
}

fn capacity_unchecked(q: &ComplexMatrix, d: &ComplexMatrix, a_r_db: f64) -> f64 {
    let snr = linalg::trace_product_re(q, d).max(0.0);
    (1.0 + apply_rain_attenuation(snr, a_r_db)).log2()
}

/// `C(Q) − Σ μ₁,b (Tr{QG_b} − I_Th,b) − μ₂ (Tr{Q} − P_Th)`.
pub fn lagrangian(q: &ComplexMatrix, problem: &CellProblem, mu1: &[f64], mu2: f64) -> Result<f64> {
    problem.check_multipliers(mu1, mu2)?;
    linalg::ensure_square(q, problem.dim)?;
    Ok(lagrangian_unchecked(q, problem, mu1, mu2))
}

fn lagrangian_unchecked(q: &ComplexMatrix, problem: &CellProblem, mu1: &[f64], mu2: f64) -> f64 {
    let penalty: f64 = problem
        .slacks(q)
        .iter()
        .zip(mu1.iter().chain(std::iter::once(&mu2)))
        .filter(|(_, &mu)| mu != 0.0)
        .map(|(slack, mu)| mu * slack)
        .sum();
    capacity_unchecked(q, &problem.d, problem.a_r_db) + penalty
}

/// `∇_Q` of the Lagrangian: `c·Dᴴ − Σ μ₁,b G_bᴴ − μ₂ I`, with
/// `c = log₂e·a / (1 + a·Tr{QD})`.
pub fn lagrangian_gradient(q: &ComplexMatrix, problem: &CellProblem, mu1: &[f64], mu2: f64) -> Result<ComplexMatrix> {
    problem.check_multipliers(mu1, mu2)?;
    linalg::ensure_square(q, problem.dim)?;
    Ok(gradient_unchecked(q, problem, mu1, mu2))
}

fn gradient_unchecked(q: &ComplexMatrix, problem: &CellProblem, mu1: &[f64], mu2: f64) -> ComplexMatrix {
    problem.d.adjoint().scale(problem.capacity_slope(q)) - problem.weighted_constraint_matrix(mu1, mu2).adjoint()
}

/// Stationarity residual of the KKT system for `max L` over `Q ⪰ 0`.
///
/// With `R` the Lagrangian gradient and `U` an orthonormal basis of the range
/// of `Q`, the residual is `sqrt(‖R U‖² + ‖(P⊥ R P⊥)₊‖²)`: the gradient must
/// vanish against the support of `Q`, and may not point into the cone along
/// directions where `Q` is zero.
pub fn kkt_stationarity_residual(q: &ComplexMatrix, problem: &CellProblem, mu1: &[f64], mu2: f64) -> Result<f64> {
    problem.check_multipliers(mu1, mu2)?;
    linalg::ensure_square(q, problem.dim)?;
    Ok(kkt_unchecked(q, problem, mu1, mu2))
}

fn kkt_unchecked(q: &ComplexMatrix, problem: &CellProblem, mu1: &[f64], mu2: f64) -> f64 {
    let r = linalg::hermitian_part(&gradient_unchecked(q, problem, mu1, mu2));
    let dim = problem.dim;
    let (values, vectors) = linalg::hermitian_eigen(q);
    let top = values.last().copied().unwrap_or(0.0).max(0.0);
    let support: Vec<usize> = (0..dim).filter(|&k| top > 0.0 && values[k] > 1e-10 * top).collect();
    let u = ComplexMatrix::from_fn(dim, support.len(), |r, c| vectors[(r, support[c])]);
    let on_support = linalg::frobenius_norm(&(&r * &u));
    let complement = linalg::identity(dim) - &u * u.adjoint();
    let outside = &complement * &r * &complement;
    let (out_values, _) = linalg::hermitian_eigen(&outside);
    let inward: f64 = out_values.iter().map(|&x| x.max(0.0).powi(2)).sum();
    (on_support * on_support + inward).sqrt()
}

/// `Σ_b |μ₁,b·(Tr{QG_b} − I_Th,b)| + |μ₂·(Tr{Q} − P_Th)|`, skipping
/// constraints with an infinite cap (their multiplier is zero).
pub fn complementary_slackness(q: &ComplexMatrix, problem: &CellProblem, mu1: &[f64], mu2: f64) -> f64 {
    problem
        .slacks(q)
        .iter()
        .zip(mu1.iter().chain(std::iter::once(&mu2)))
        .filter(|(s, &mu)| mu != 0.0 && s.is_finite())
        .map(|(s, mu)| (mu * s).abs())
        .sum()
}

/// Rank-one maximizer of the Lagrangian for a fixed `W`.
#[derive(Debug, Clone)]
struct InnerSolution {
    /// Unit-norm beam direction.
    direction: ComplexVector,
    /// Power along `direction`.
    power: f64,
}

impl InnerSolution {
    fn q(&self) -> ComplexMatrix {
        linalg::outer(&self.direction, self.power)
    }
}

/// Relative gap under which generalized eigenvalues count as tied.
const EIGEN_TIE: f64 = 1e-9;

fn inner_maximizer(problem: &CellProblem, w: &ComplexMatrix) -> Result<InnerSolution> {
    let dim = problem.dim;
    let (w_values, w_vectors) = linalg::hermitian_eigen(w);
    let w_scale = w_values.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let null_tol = 1e-12 * w_scale.max(f64::MIN_POSITIVE);
    let d_scale = linalg::frobenius_norm(&problem.d);

    let null: Vec<usize> = (0..dim).filter(|&k| w_values[k] <= null_tol).collect();
    if !null.is_empty() && d_scale > 0.0 {
        let n = ComplexMatrix::from_fn(dim, null.len(), |r, c| w_vectors[(r, null[c])]);
        if linalg::frobenius_norm(&(n.adjoint() * &problem.d * &n)) > 1e-12 * d_scale {
            return Err(Error::UnboundedInner);
        }
    }
    let w_inv_sqrt = {
        let mut m = ComplexMatrix::zeros(dim, dim);
        for k in (0..dim).filter(|&k| w_values[k] > null_tol) {
            let u = w_vectors.column(k);
            m += (u * u.adjoint()).scale(1.0 / w_values[k].sqrt());
        }
        m
    };
    let whitened = &w_inv_sqrt * &problem.d * &w_inv_sqrt;
    let (c_values, c_vectors) = linalg::hermitian_eigen(&whitened);
    let ratio = c_values.last().copied().unwrap_or(0.0);
    if !(ratio > 0.0) || d_scale == 0.0 {
        let mut e = ComplexVector::zeros(dim);
        e[0] = 1.0.into();
        return Ok(InnerSolution {
            direction: e,
            power: 0.0,
        });
    }

    let tied: Vec<usize> = (0..dim).filter(|&k| c_values[k] >= ratio * (1.0 - EIGEN_TIE)).collect();
    let u = if tied.len() == 1 {
        c_vectors.column(dim - 1).into_owned()
    } else {
        // Within a tied eigenspace every direction yields the same Lagrangian;
        // take the one cheapest in normalized constraint usage.
        let basis = ComplexMatrix::from_fn(dim, tied.len(), |r, c| c_vectors[(r, tied[c])]);
        let mut usage = linalg::identity(dim).unscale(problem.p_th);
        for (g, &cap) in problem.g_list.iter().zip(&problem.i_th_list) {
            if cap.is_finite() {
                usage += g.unscale(cap);
            }
        }
        let reduced = basis.adjoint() * &w_inv_sqrt * usage * &w_inv_sqrt * &basis;
        let (_, small) = linalg::hermitian_eigen(&reduced);
        &basis * small.column(0)
    };
    let v = &w_inv_sqrt * u;
    let norm = v.norm();
    let direction = v.unscale(norm);
    // Along v (vᴴWv = 1) the Lagrangian is log₂(1 + aλt) − t.
    let a = problem.rain();
    let cost = (LOG2_E - 1.0 / (a * ratio)).max(0.0);
    Ok(InnerSolution {
        direction,
        power: cost * norm * norm,
    })
}

/// Maximizer of the Lagrangian over PSD `Q` for fixed multipliers.
///
/// With `power_cap = Some(P)` the maximization is further restricted to
/// `Tr{Q} ≤ P`, handled by an inner scalar multiplier on the trace found by
/// bisection; a binding cap yields `Tr{Q} = P` exactly. Without a cap the
/// Lagrangian is unbounded when `W` is singular on the signal subspace.
pub fn solve_inner(problem: &CellProblem, mu1: &[f64], mu2: f64, power_cap: Option<f64>) -> Result<ComplexMatrix> {
    problem.check_multipliers(mu1, mu2)?;
    let w = problem.weighted_constraint_matrix(mu1, mu2);
    let free = inner_maximizer(problem, &w);
    let Some(cap) = power_cap else {
        return free.map(|s| s.q());
    };
    if !(cap > 0.0) {
        return Err(Error::invalid("power_cap", format!("cap must be positive (got {cap})")));
    }
    if let Ok(s) = &free {
        if s.power <= cap {
            return Ok(s.q());
        }
    }
    let within_cap = |nu: f64| {
        let shifted = &w + linalg::identity(problem.dim).scale(nu);
        inner_maximizer(problem, &shifted).ok().filter(|s| s.power <= cap)
    };
    let mut lo = 0.0;
    let mut hi = 1e-8;
    let mut best = loop {
        if let Some(s) = within_cap(hi) {
            break s;
        }
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::UnboundedInner);
        }
    };
    for _ in 0..200 {
        if hi - lo <= 1e-15 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match within_cap(mid) {
            Some(s) => {
                hi = mid;
                best = s;
            }
            None => lo = mid,
        }
    }
    if best.power > 0.0 && best.power >= cap * (1.0 - 1e-6) {
        best.power = cap;
    }
    Ok(best.q())
}

/// Problem restricted to constraints with a finite cap.
struct FiniteCaps<'a> {
    problem: CellProblem,
    index: Vec<usize>,
    original: &'a CellProblem,
}

impl<'a> FiniteCaps<'a> {
    fn new(original: &'a CellProblem) -> Self {
        let index: Vec<usize> = (0..original.g_list.len())
            .filter(|&b| original.i_th_list[b].is_finite())
            .collect();
        let problem = CellProblem {
            d: original.d.clone(),
            g_list: index.iter().map(|&b| original.g_list[b].clone()).collect(),
            a_r_db: original.a_r_db,
            p_th: original.p_th,
            i_th_list: index.iter().map(|&b| original.i_th_list[b]).collect(),
            dim: original.dim,
        };
        Self {
            problem,
            index,
            original,
        }
    }

    fn expand(&self, mu1: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.original.g_list.len()];
        for (k, &b) in self.index.iter().enumerate() {
            out[b] = mu1[k];
        }
        out
    }
}

/// Log-det weight of the first smoothing stage.
const SMOOTHING_START: f64 = 1e-2;
const SMOOTHING_FLOOR: f64 = 1e-14;
const SMOOTHING_DECAY: f64 = 0.1;
const STAGE_ITERATIONS: usize = 60;

/// Dual function of the smoothed problem `max L(Q) + ε·log det Q` at `μ`,
/// with its gradient (the constraint slacks) and Hessian.
#[derive(Debug, Clone)]
struct SmoothedDual {
    value: f64,
    gradient: DVector<f64>,
    hessian: DMatrix<f64>,
    q: ComplexMatrix,
    /// `W^(−1/2)·V`: the maximizer is `ε·Σ tᵢtᵢᴴ/σᵢ` over its columns.
    basis: ComplexMatrix,
    sigma: Vec<f64>,
}

fn smoothed_dual(problem: &CellProblem, mu: &DVector<f64>, eps: f64) -> Result<SmoothedDual> {
    let k = problem.g_list.len();
    let dim = problem.dim;
    let mu1: Vec<f64> = mu.rows(0, k).iter().copied().collect();
    let w = problem.weighted_constraint_matrix(&mu1, mu[k]);
    let (w_values, w_vectors) = linalg::hermitian_eigen(&w);
    let w_scale = w_values[dim - 1].abs().max(f64::MIN_POSITIVE);
    if !(w_values[0] > 1e-13 * w_scale) {
        return Err(Error::UnboundedInner);
    }
    let mut w_inv_sqrt = ComplexMatrix::zeros(dim, dim);
    for i in 0..dim {
        let u = w_vectors.column(i);
        w_inv_sqrt += (u * u.adjoint()).scale(1.0 / w_values[i].sqrt());
    }
    let whitened = linalg::hermitian_part(&(&w_inv_sqrt * &problem.d * &w_inv_sqrt));
    let (lambda, v) = linalg::hermitian_eigen(&whitened);
    let m = dim - 1;
    let top = lambda[m];
    if !(top > 0.0) {
        return Err(Error::invalid("d", "signal matrix vanishes"));
    }

    // Stationarity: c·D + ε·Q⁻¹ = W with c = log₂e·a / (1 + a·Tr{QD}). In the
    // whitened eigenbasis Q = ε·diag(1/σᵢ), σᵢ = 1 − c·λᵢ, and the scalar
    // s = σ_top is found by bisection (the residual decreases in s).
    let a = problem.rain();
    let gap: Vec<f64> = lambda.iter().map(|&l| ((top - l) / top).max(0.0)).collect();
    let sigma = |s: f64| -> Vec<f64> { gap.iter().map(|&g| s + (1.0 - s) * g).collect() };
    let residual = |s: f64| {
        let snr: f64 = sigma(s).iter().zip(&lambda).map(|(sg, l)| l.max(0.0) / sg).sum();
        (1.0 - s) / top * (1.0 + a * eps * snr) - LOG2_E * a
    };
    let (mut lo, mut hi) = (1e-300f64, 1.0f64);
    for _ in 0..200 {
        if hi / lo - 1.0 <= 1e-15 {
            break;
        }
        let mid = (lo * hi).sqrt();
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    let c = (1.0 - s) / top;
    let sigma = sigma(s);
    let tau: Vec<f64> = sigma.iter().map(|sg| 1.0 / sg).collect();
    let t = &w_inv_sqrt * &v;
    let mut q = ComplexMatrix::zeros(dim, dim);
    for i in 0..dim {
        let col = t.column(i);
        q += (col * col.adjoint()).scale(eps * tau[i]);
    }
    let q = linalg::hermitian_part(&q);

    let snr: f64 = lambda.iter().zip(&tau).map(|(l, ti)| eps * l.max(0.0) * ti).sum();
    let log_det: f64 = tau.iter().map(|ti| (eps * ti).ln()).sum::<f64>() - w_values.iter().map(|x| x.ln()).sum::<f64>();
    let trace_qw: f64 = tau.iter().map(|ti| eps * ti).sum();
    let caps: f64 = problem.i_th_list.iter().zip(&mu1).map(|(cap, m)| cap * m).sum::<f64>() + problem.p_th * mu[k];
    let value = (1.0 + a * snr).log2() + eps * log_det - trace_qw + caps;
    let gradient = DVector::from_vec(problem.slacks(&q));

    // H = (1/ε)[P − κ·u·uᵀ/(ε + κ·s)] with κ = c²/log₂e, written in terms of
    // τ so the cancellation along the top direction happens analytically.
    let kappa = c * c / LOG2_E;
    let whitened_constraints: Vec<ComplexMatrix> = problem
        .g_list
        .iter()
        .map(|g| t.adjoint() * g * &t)
        .chain(std::iter::once(t.adjoint() * &t))
        .collect();
    let n = k + 1;
    let y: Vec<f64> = whitened_constraints.iter().map(|x| x[(m, m)].re).collect();
    let u_rest: Vec<f64> = whitened_constraints
        .iter()
        .map(|x| {
            (0..m)
                .map(|i| lambda[i].max(0.0) * tau[i] * tau[i] * x[(i, i)].re)
                .sum()
        })
        .collect();
    let s_rest: f64 = (0..m).map(|i| (lambda[i].max(0.0) * tau[i]).powi(2)).sum();
    let den = 1.0 / eps + kappa * (top * top * tau[m] * tau[m] + s_rest);
    let r = kappa / den;
    let lead = (1.0 / eps + kappa * s_rest) / den;
    let tm2 = tau[m] * tau[m];
    let mut hessian = DMatrix::zeros(n, n);
    for j in 0..n {
        for l in j..n {
            let (aj, al) = (&whitened_constraints[j], &whitened_constraints[l]);
            let mut p_rest = 0.0;
            for i in 0..dim {
                for h in 0..dim {
                    if i == m && h == m {
                        continue;
                    }
                    p_rest += tau[i] * tau[h] * (al[(i, h)] * aj[(h, i)]).re;
                }
            }
            let entry = tm2 * lead * y[j] * y[l]
                - r * top * tm2 * (y[j] * u_rest[l] + u_rest[j] * y[l])
                - r * u_rest[j] * u_rest[l]
                + p_rest;
            hessian[(j, l)] = eps * entry;
            hessian[(l, j)] = eps * entry;
        }
    }
    Ok(SmoothedDual {
        value,
        gradient,
        hessian,
        q,
        basis: t,
        sigma,
    })
}

/// Keeps the components of the smoothed maximizer along which the smoothed
/// stationarity residual `σᵢ` is negligible (below `√ε`), drops the ones the
/// log-det term props up, and rescales so the tightest constraint holds with
/// equality.
fn purify(problem: &CellProblem, smoothed: &SmoothedDual, eps: f64) -> ComplexMatrix {
    let dim = problem.dim;
    let mut out = ComplexMatrix::zeros(dim, dim);
    for (i, &sg) in smoothed.sigma.iter().enumerate() {
        if sg <= eps.sqrt() {
            let col = smoothed.basis.column(i);
            out += (col * col.adjoint()).scale(eps / sg);
        }
    }
    rescale_to_feasible(problem, linalg::hermitian_part(&out))
}

/// Scales `q` so the tightest constraint holds with equality.
fn rescale_to_feasible(problem: &CellProblem, mut out: ComplexMatrix) -> ComplexMatrix {
    let usage = problem
        .g_list
        .iter()
        .zip(&problem.i_th_list)
        .map(|(g, cap)| linalg::trace_product_re(&out, g) / cap)
        .chain(std::iter::once(linalg::trace_re(&out) / problem.p_th))
        .fold(0.0, f64::max);
    if usage > 0.0 {
        out.unscale_mut(usage);
    }
    out
}

/// Newton refinement of the KKT system `R·Y = 0`, `Tr{YYᴴA_j} = c_j` (active
/// `j`) in the factor `Q = YYᴴ` and the active multipliers, started from the
/// support and active set of a smoothed iterate. The least-squares solve
/// absorbs the unitary freedom in `Y`.
fn polish_kkt(
    problem: &CellProblem,
    smoothed: &SmoothedDual,
    mu: &DVector<f64>,
    eps: f64,
) -> Option<(ComplexMatrix, DVector<f64>)> {
    let dim = problem.dim;
    let k = problem.g_list.len();
    let support: Vec<usize> = (0..dim).filter(|&i| smoothed.sigma[i] <= eps.sqrt()).collect();
    let active: Vec<usize> = (0..=k).filter(|&j| mu[j] > 0.0).collect();
    let r = support.len();
    if r == 0 || active.is_empty() {
        return None;
    }
    let constraint = |j: usize| {
        if j == k {
            linalg::identity(dim)
        } else {
            problem.g_list[j].clone()
        }
    };
    let caps: Vec<f64> = problem
        .i_th_list
        .iter()
        .copied()
        .chain(std::iter::once(problem.p_th))
        .collect();
    let a = problem.rain();
    let mut y = ComplexMatrix::from_fn(dim, r, |row, col| {
        let i = support[col];
        smoothed.basis[(row, i)] * (eps / smoothed.sigma[i]).sqrt()
    });
    let mut mu = mu.clone();
    let n_y = 2 * dim * r;
    let n_vars = n_y + active.len();
    let n_eqs = 2 * dim * r + active.len();

    let residual = |y: &ComplexMatrix, mu: &DVector<f64>| {
        let q = y * y.adjoint();
        let snr = linalg::trace_product_re(&q, &problem.d);
        let c = LOG2_E * a / (1.0 + a * snr);
        let mu1: Vec<f64> = mu.rows(0, k).iter().copied().collect();
        let rmat = problem.d.scale(c) - problem.weighted_constraint_matrix(&mu1, mu[k]);
        let ry = &rmat * y;
        let mut f = DVector::zeros(n_eqs);
        for (idx, z) in ry.iter().enumerate() {
            f[2 * idx] = z.re;
            f[2 * idx + 1] = z.im;
        }
        for (pos, &j) in active.iter().enumerate() {
            f[n_y + pos] = linalg::trace_product_re(&q, &constraint(j)) - caps[j];
        }
        (f, rmat, c)
    };

    let (mut f, mut rmat, mut c) = residual(&y, &mu);
    for _ in 0..30 {
        if f.amax() < 1e-14 {
            break;
        }
        let mut jac = DMatrix::zeros(n_eqs, n_vars);
        let kappa = c * c / LOG2_E;
        for var in 0..n_y {
            let entry = var / 2;
            let mut e = ComplexMatrix::zeros(dim, r);
            // Column-major entry index, matching the residual layout.
            e[entry] = if var % 2 == 0 {
                1.0.into()
            } else {
                num_complex::Complex64::i()
            };
            let dq = &e * y.adjoint() + &y * e.adjoint();
            let ds = linalg::trace_product_re(&dq, &problem.d);
            let dry = problem.d.scale(-kappa * ds) * &y + &rmat * &e;
            for (idx, z) in dry.iter().enumerate() {
                jac[(2 * idx, var)] = z.re;
                jac[(2 * idx + 1, var)] = z.im;
            }
            for (pos, &j) in active.iter().enumerate() {
                jac[(n_y + pos, var)] = linalg::trace_product_re(&dq, &constraint(j));
            }
        }
        for (pos, &j) in active.iter().enumerate() {
            let dry = -(constraint(j) * &y);
            for (idx, z) in dry.iter().enumerate() {
                jac[(2 * idx, n_y + pos)] = z.re;
                jac[(2 * idx + 1, n_y + pos)] = z.im;
            }
        }
        let svd = jac.svd(true, true);
        let cutoff = 1e-12 * svd.singular_values.max();
        let delta = svd.solve(&(-&f), cutoff).ok()?;
        for var in 0..n_y {
            let entry = var / 2;
            if var % 2 == 0 {
                y[entry].re += delta[var];
            } else {
                y[entry].im += delta[var];
            }
        }
        for (pos, &j) in active.iter().enumerate() {
            mu[j] += delta[n_y + pos];
        }
        let next = residual(&y, &mu);
        (f, rmat, c) = next;
        if !f.iter().all(|x| x.is_finite()) {
            return None;
        }
    }
    if mu.iter().any(|&m| m < 0.0) {
        return None;
    }
    Some((linalg::hermitian_part(&(&y * y.adjoint())), mu))
}

fn projected_gradient_norm(mu: &DVector<f64>, gradient: &DVector<f64>) -> f64 {
    mu.iter()
        .zip(gradient.iter())
        .map(|(&m, &g)| if m <= 0.0 { g.min(0.0) } else { g })
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

struct Certificate {
    mu1: Vec<f64>,
    mu2: f64,
    kkt: f64,
    slackness: f64,
}

impl Certificate {
    fn score(&self) -> f64 {
        self.kkt + self.slackness
    }
}

/// Best multipliers certifying `q`: the dual iterate, or a non-negative
/// least-squares fit of the stationarity condition over active constraints.
fn certify(problem: &CellProblem, q: &ComplexMatrix, dual_mu: &DVector<f64>) -> Certificate {
    let k = problem.g_list.len();
    let evaluate = |mu1: Vec<f64>, mu2: f64| {
        let kkt = kkt_unchecked(q, problem, &mu1, mu2);
        let slackness = complementary_slackness(q, problem, &mu1, mu2);
        Certificate {
            mu1,
            mu2,
            kkt,
            slackness,
        }
    };
    let mut best = evaluate(dual_mu.rows(0, k).iter().copied().collect(), dual_mu[k]);

    let slacks = problem.slacks(q);
    let scales: Vec<f64> = problem
        .i_th_list
        .iter()
        .copied()
        .chain(std::iter::once(problem.p_th))
        .collect();
    let active: Vec<usize> = (0..=k).filter(|&j| slacks[j] <= 1e-9 * scales[j]).collect();
    if active.is_empty() || active.len() > 12 {
        return best;
    }

    let (values, vectors) = linalg::hermitian_eigen(q);
    let dim = problem.dim;
    let top = values[dim - 1].max(0.0);
    if top == 0.0 {
        return best;
    }
    let support: Vec<usize> = (0..dim).filter(|&i| values[i] > 1e-10 * top).collect();
    let c = problem.capacity_slope(q);
    let constraint = |j: usize| {
        if j == k {
            linalg::identity(dim)
        } else {
            problem.g_list[j].clone()
        }
    };
    // Stack Re/Im of (A_j u) over the support vectors u.
    let rows = 2 * dim * support.len();
    let stack = |m: &ComplexMatrix| {
        let mut out = Vec::with_capacity(rows);
        for &s in &support {
            let col = m * vectors.column(s);
            out.extend(col.iter().map(|z| z.re));
            out.extend(col.iter().map(|z| z.im));
        }
        out
    };
    let target = DVector::from_vec(stack(&problem.d.scale(c)));
    let columns: Vec<Vec<f64>> = active.iter().map(|&j| stack(&constraint(j))).collect();

    for subset in 1u32..(1 << active.len()) {
        let chosen: Vec<usize> = (0..active.len()).filter(|&i| subset & (1 << i) != 0).collect();
        let a = DMatrix::from_fn(rows, chosen.len(), |r, cidx| columns[chosen[cidx]][r]);
        let Ok(y) = a.svd(true, true).solve(&target, 1e-14) else {
            continue;
        };
        if y.iter().any(|&x| !(x >= 0.0)) {
            continue;
        }
        let mut mu1 = vec![0.0; k];
        let mut mu2 = 0.0;
        for (pos, &i) in chosen.iter().enumerate() {
            let j = active[i];
            if j == k {
                mu2 = y[pos];
            } else {
                mu1[j] = y[pos];
            }
        }
        let candidate = evaluate(mu1, mu2);
        if candidate.score() < best.score() {
            best = candidate;
        }
    }
    best
}

/// Solves one cell by dual dogleg iterations.
///
/// The dual is minimized on a sequence of log-det smoothed problems with a
/// shrinking weight ε, each warm-started from the last; the smoothed dual is
/// differentiable with an exact Hessian, which the dogleg path uses for its
/// Newton leg. After each stage the smoothed maximizer is purified to its
/// support and certified against the KKT conditions of the original problem.
pub fn solve_cell(problem: &CellProblem, options: &SolverOptions) -> Result<BeamSolution> {
    if !(problem.p_th > 0.0) || problem.i_th_list.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::Infeasible("power and interference caps must be positive".into()));
    }
    let reduced = FiniteCaps::new(problem);
    let sub = &reduced.problem;
    let k = sub.g_list.len();

    if linalg::frobenius_norm(&problem.d) == 0.0 {
        let q = ComplexMatrix::zeros(problem.dim, problem.dim);
        return Ok(BeamSolution {
            capacity: 0.0,
            q,
            mu1: vec![0.0; problem.g_list.len()],
            mu2: 0.0,
            kkt_residual: 0.0,
            complementary_slackness: 0.0,
            iterations: 0,
            converged: true,
            trace: vec![0.0],
        });
    }

    let (init_mu1, init_mu2) = match &options.initial_multipliers {
        Some((mu1, mu2)) => {
            problem.check_multipliers(mu1, *mu2)?;
            (reduced.index.iter().map(|&b| mu1[b]).collect(), *mu2)
        }
        None => (vec![options.initial_mu1; k], options.initial_mu2),
    };
    let mut state = DualState::new(init_mu1, init_mu2, options.initial_radius);
    let mut mu = state.stacked();
    let mut eps = SMOOTHING_START;
    let mut eval = match smoothed_dual(sub, &mu, eps) {
        Ok(e) => e,
        Err(Error::UnboundedInner) => {
            mu[k] = mu[k].max(1.0);
            state = state.with_stacked(&mu);
            smoothed_dual(sub, &mu, eps)?
        }
        Err(e) => return Err(e),
    };
    let gradient_tol = 1e-13 * (sub.p_th + sub.i_th_list.iter().sum::<f64>());

    let mut trace = Vec::new();
    let mut best: Option<BeamSolution> = None;
    let finish =
        |q: ComplexMatrix, cert: Certificate, iterations: usize, converged: bool, trace: Vec<f64>| BeamSolution {
            capacity: capacity_unchecked(&q, &problem.d, problem.a_r_db),
            q,
            mu1: reduced.expand(&cert.mu1),
            mu2: cert.mu2,
            kkt_residual: cert.kkt,
            complementary_slackness: cert.slackness,
            iterations,
            converged,
            trace,
        };

    let mut exhausted = false;
    loop {
        for _ in 0..STAGE_ITERATIONS {
            if state.iteration >= options.max_iterations {
                exhausted = true;
                break;
            }
            if projected_gradient_norm(&mu, &eval.gradient) <= gradient_tol {
                break;
            }
            let step = dogleg_step(&mu, &eval.gradient, Some(&eval.hessian), state.trust_radius);
            state.iteration += 1;
            trace.push(capacity_unchecked(&eval.q, &sub.d, sub.a_r_db));
            let noise = 1e-15 * eval.value.abs().max(1.0);
            if step.predicted_decrease <= noise {
                break;
            }
            let candidate = smoothed_dual(sub, &step.mu, eps);
            let ratio = match &candidate {
                Ok(next) => (eval.value - next.value) / step.predicted_decrease,
                Err(_) => f64::NEG_INFINITY,
            };
            state.trust_radius = options.trust_region.adapt(state.trust_radius, ratio, step.hit_boundary);
            if ratio > options.trust_region.accept_ratio {
                mu = step.mu;
                eval = candidate.expect("accepted steps evaluate");
                let (radius, iteration) = (state.trust_radius, state.iteration);
                state = state.with_stacked(&mu);
                state.trust_radius = radius;
                state.iteration = iteration;
                state.knee = step.knee.iter().copied().collect();
            }
            if state.is_stuck() {
                log::debug!("dogleg trust radius collapsed at iteration {}", state.iteration);
                break;
            }
        }

        let q = purify(sub, &eval, eps);
        let mut cert = certify(sub, &q, &mu);
        let mut q = q;
        if !(cert.kkt < options.tol && cert.slackness < options.tol) {
            if let Some((polished, polished_mu)) = polish_kkt(sub, &eval, &mu, eps) {
                let polished = rescale_to_feasible(sub, polished);
                let candidate = certify(sub, &polished, &polished_mu);
                if candidate.score() < cert.score() {
                    cert = candidate;
                    q = polished;
                }
            }
        }
        if cert.kkt < options.tol && cert.slackness < options.tol {
            return Ok(finish(q, cert, state.iteration, true, trace));
        }
        if best
            .as_ref()
            .is_none_or(|b| cert.score() < b.kkt_residual + b.complementary_slackness)
        {
            best = Some(finish(q, cert, state.iteration, false, Vec::new()));
        }
        if exhausted || eps <= SMOOTHING_FLOOR {
            break;
        }
        eps = (eps * SMOOTHING_DECAY).max(SMOOTHING_FLOOR);
        state.trust_radius = state.trust_radius.max(options.initial_radius);
        eval = smoothed_dual(sub, &mu, eps)?;
    }

    let mut best = best.expect("at least one certified iterate");
    best.trace = trace;
    Err(Error::MaxIterations {
        iterations: state.iteration,
        kkt_residual: best.kkt_residual,
        best: Box::new(best),
    })
}

/// Solves every cell independently; no information crosses cells.
pub fn solve_network(problems: &[CellProblem], options: &SolverOptions) -> Result<Vec<BeamSolution>> {
    problems
        .par_iter()
        .enumerate()
        .map(|(index, p)| {
            solve_cell(p, options).map_err(|e| Error::Cell {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}
