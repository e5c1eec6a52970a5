//! Trust-region dogleg update of the dual multipliers.
//!
//! The dual function `g(μ)` is convex in the stacked multiplier vector
//! `μ = (μ₁,₁ … μ₁,K, μ₂)` and its gradient is the vector of constraint
//! slacks. Each update builds the dogleg path from the Cauchy point (the
//! "knee", the minimizer of the quadratic model along the steepest descent
//! direction) to the Newton point, cuts it at the trust radius and projects
//! the result onto `μ ≥ 0`.

use nalgebra::{DMatrix, DVector};

/// Smallest trust radius before the iteration is declared stuck.
pub const MIN_TRUST_RADIUS: f64 = 1e-12;

/// Multipliers within this fraction of the largest one count as zero.
const BOUND_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub mu1: Vec<f64>,
    pub mu2: f64,
    pub trust_radius: f64,
    /// Cauchy point of the last dogleg path, as an offset from the multipliers.
    pub knee: Vec<f64>,
    pub iteration: usize,
}

impl DualState {
    pub fn new(mu1: Vec<f64>, mu2: f64, trust_radius: f64) -> Self {
        let knee = vec![0.0; mu1.len() + 1];
        Self {
            mu1,
            mu2,
            trust_radius,
            knee,
            iteration: 0,
        }
    }

    pub fn stacked(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.mu1.len() + 1,
            self.mu1.iter().copied().chain(std::iter::once(self.mu2)),
        )
    }

    pub(crate) fn with_stacked(&self, mu: &DVector<f64>) -> Self {
        let k = self.mu1.len();
        Self {
            mu1: mu.rows(0, k).iter().copied().collect(),
            mu2: mu[k],
            ..self.clone()
        }
    }

    pub fn is_stuck(&self) -> bool {
        self.trust_radius < MIN_TRUST_RADIUS
    }
}

/// Trust-region radius control constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustRegion {
    pub shrink: f64,
    pub expand: f64,
    /// Below this reduction ratio the radius shrinks.
    pub poor_ratio: f64,
    /// Above this ratio (with a boundary step) the radius expands.
    pub good_ratio: f64,
    /// Minimum ratio for accepting a step.
    pub accept_ratio: f64,
    pub max_radius: f64,
}

impl Default for TrustRegion {
    fn default() -> Self {
        Self {
            shrink: 0.25,
            expand: 2.0,
            poor_ratio: 0.25,
            good_ratio: 0.75,
            accept_ratio: 1e-4,
            max_radius: 1e6,
        }
    }
}

impl TrustRegion {
    pub fn adapt(&self, radius: f64, ratio: f64, hit_boundary: bool) -> f64 {
        if !(ratio >= self.poor_ratio) {
            radius * self.shrink
        } else if ratio > self.good_ratio && hit_boundary {
            (radius * self.expand).min(self.max_radius)
        } else {
            radius
        }
    }
}

/// A candidate step: projected multipliers plus its quadratic-model data.
#[derive(Debug, Clone)]
pub struct DoglegStep {
    pub mu: DVector<f64>,
    pub knee: DVector<f64>,
    /// Model decrease `−(gᵀs + ½sᵀHs)` of the step `s` actually taken.
    pub predicted_decrease: f64,
    pub hit_boundary: bool,
}

/// Dogleg step for minimizing the dual function from `mu`.
///
/// Coordinates sitting on the bound `μ_i = 0` with a positive gradient are
/// frozen; the path is built on the remaining free coordinates. Without a
/// curvature model (`hessian = None`) the step is the Cauchy point of an
/// identity model, i.e. a radius-limited steepest-descent step.
pub fn dogleg_step(
    mu: &DVector<f64>,
    gradient: &DVector<f64>,
    hessian: Option<&DMatrix<f64>>,
    radius: f64,
) -> DoglegStep {
    let n = mu.len();
    let floor = BOUND_TOL * (1.0 + mu.amax());
    let at_bound = |i: usize| mu[i] <= floor;
    let mut free: Vec<usize> = (0..n).filter(|&i| !(at_bound(i) && gradient[i] > 0.0)).collect();
    let mut knee = DVector::zeros(n);
    // Coordinates on the bound that the path would push negative are frozen
    // too, and the path rebuilt on what remains.
    let (step, cauchy, hit_boundary) = loop {
        if free.is_empty() {
            return DoglegStep {
                mu: mu.clone(),
                knee,
                predicted_decrease: 0.0,
                hit_boundary: false,
            };
        }
        let (step, cauchy, hit_boundary) = dogleg_path(&free, gradient, hessian, radius);
        let blocked: Vec<usize> = free
            .iter()
            .enumerate()
            .filter(|&(k, &i)| at_bound(i) && step[k] < 0.0)
            .map(|(_, &i)| i)
            .collect();
        if blocked.is_empty() {
            break (step, cauchy, hit_boundary);
        }
        free.retain(|i| !blocked.contains(i));
    };

    for (k, &i) in free.iter().enumerate() {
        knee[i] = cauchy[k];
    }
    let full_h = match hessian {
        Some(h) => h.clone(),
        None => DMatrix::identity(n, n),
    };
    let model_decrease = |next: &DVector<f64>| {
        let s = next - mu;
        -(gradient.dot(&s) + 0.5 * (s.transpose() * &full_h * &s)[(0, 0)])
    };

    // Projected step, and the same step truncated where it first meets μ = 0.
    let snap = |x: f64| if x <= floor { 0.0 } else { x };
    let mut projected = mu.map(snap);
    let mut fraction = 1.0f64;
    for (k, &i) in free.iter().enumerate() {
        projected[i] = snap(mu[i] + step[k]);
        if step[k] < 0.0 && mu[i] + step[k] < 0.0 {
            fraction = fraction.min(mu[i] / -step[k]);
        }
    }
    let mut truncated = mu.map(snap);
    for (k, &i) in free.iter().enumerate() {
        let reach = mu[i] + step[k] * fraction;
        truncated[i] = if step[k] < 0.0 && (reach <= floor || mu[i] / -step[k] <= fraction) {
            0.0
        } else {
            reach
        };
    }
    let (next, predicted_decrease) = {
        let (dp, dt) = (model_decrease(&projected), model_decrease(&truncated));
        if dp >= dt {
            (projected, dp)
        } else {
            (truncated, dt)
        }
    };
    DoglegStep {
        mu: next,
        knee,
        predicted_decrease,
        hit_boundary,
    }
}

/// Dogleg path on the `free` coordinates, cut at `radius`: returns the step,
/// the Cauchy point and whether the cut was active.
fn dogleg_path(
    free: &[usize],
    gradient: &DVector<f64>,
    hessian: Option<&DMatrix<f64>>,
    radius: f64,
) -> (DVector<f64>, DVector<f64>, bool) {
    let g = DVector::from_iterator(free.len(), free.iter().map(|&i| gradient[i]));
    let h = match hessian {
        Some(h) => DMatrix::from_fn(free.len(), free.len(), |r, c| h[(free[r], free[c])]),
        None => DMatrix::identity(free.len(), free.len()),
    };
    let gnorm = g.norm();

    let curvature = (g.transpose() * &h * &g)[(0, 0)];
    let cauchy = if curvature > 0.0 {
        -&g * (gnorm * gnorm / curvature)
    } else {
        -&g * (radius / gnorm.max(f64::MIN_POSITIVE))
    };
    let newton = h
        .cholesky()
        .map(|chol| -chol.solve(&g))
        .filter(|s| s.iter().all(|x| x.is_finite()));

    let (step, hit_boundary) = match newton {
        Some(sn) if sn.norm() <= radius => (sn, false),
        _ if cauchy.norm() >= radius => (&cauchy * (radius / cauchy.norm()), true),
        Some(sn) => {
            // Walk from the knee toward the Newton point until ‖s‖ = radius.
            let d = &sn - &cauchy;
            let a = d.norm_squared();
            let b = 2.0 * cauchy.dot(&d);
            let c = cauchy.norm_squared() - radius * radius;
            let tau = (-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a);
            (&cauchy + d * tau.clamp(0.0, 1.0), true)
        }
        None => (cauchy.clone(), false),
    };
    (step, cauchy, hit_boundary)
}

/// One multiplier update driven only by the constraint slacks.
///
/// The slacks `(I_Th,b − Tr{QG_b}, P_Th − Tr{Q})` are the gradient of the
/// dual function, so a violated constraint (negative slack) raises its
/// multiplier and a loose one lowers it toward zero. With no curvature
/// information the dogleg path collapses to its steepest-descent leg.
pub fn dogleg_dual_update(state: &DualState, constraint_slacks: &[f64]) -> DualState {
    assert_eq!(
        constraint_slacks.len(),
        state.mu1.len() + 1,
        "one slack per interference constraint plus the power constraint"
    );
    let mu = state.stacked();
    let gradient = DVector::from_column_slice(constraint_slacks);
    let step = dogleg_step(&mu, &gradient, None, state.trust_radius);
    let mut next = state.with_stacked(&step.mu);
    next.knee = step.knee.iter().copied().collect();
    next.iteration += 1;
    next
}
