//! Log-barrier interior point for small dense concave quadratic programs
//! whose constraints are convex quadratics in a single coordinate difference.

use nalgebra::{DMatrix, DVector};

/// `c(Δ) = ½·quad·Δ² + lin·Δ + constant ≤ 0` with `Δ = x[plus] − x[minus]`.
/// A missing index stands for a coordinate pinned at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarConstraint {
    pub plus: Option<usize>,
    pub minus: Option<usize>,
    pub quad: f64,
    pub lin: f64,
    pub constant: f64,
}

impl ScalarConstraint {
    fn delta(&self, x: &DVector<f64>) -> f64 {
        self.plus.map_or(0.0, |i| x[i]) - self.minus.map_or(0.0, |i| x[i])
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let d = self.delta(x);
        0.5 * self.quad * d * d + self.lin * d + self.constant
    }

    fn slope(&self, x: &DVector<f64>) -> f64 {
        self.quad * self.delta(x) + self.lin
    }

    /// Adds `w·∇c` to `out`.
    fn add_gradient(&self, x: &DVector<f64>, w: f64, out: &mut DVector<f64>) {
        let s = w * self.slope(x);
        if let Some(i) = self.plus {
            out[i] += s;
        }
        if let Some(j) = self.minus {
            out[j] -= s;
        }
    }

    /// Adds `w·a·aᵀ` where `a` is the selector of `Δ`.
    fn add_outer(&self, w: f64, out: &mut DMatrix<f64>) {
        if let Some(i) = self.plus {
            out[(i, i)] += w;
        }
        if let Some(j) = self.minus {
            out[(j, j)] += w;
        }
        if let (Some(i), Some(j)) = (self.plus, self.minus) {
            out[(i, j)] -= w;
            out[(j, i)] -= w;
        }
    }
}

/// Maximize `linearᵀx + ½·xᵀ·hessian·x` subject to the constraints.
/// `hessian` must be negative definite.
#[derive(Debug, Clone)]
pub struct ConcaveQp {
    pub linear: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub constraints: Vec<ScalarConstraint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSettings {
    pub tolerance: f64,
    pub max_newton_iters: usize,
    pub decrease: f64,
    pub initial_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BarrierFailure {
    NotNegativeDefinite,
    NoInteriorPoint,
    Newton { gradient_norm: f64, weight: f64 },
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// One multiplier per constraint, `μ / (−c)` at the final barrier weight.
    pub multipliers: Vec<f64>,
    pub newton_iters: usize,
    /// Final barrier weight, zero when no constraint was active.
    pub weight: f64,
}

impl ConcaveQp {
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        self.linear.dot(x) + 0.5 * x.dot(&(&self.hessian * x))
    }

    pub fn objective_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.linear + &self.hessian * x
    }

    fn strictly_feasible(&self, x: &DVector<f64>) -> bool {
        self.constraints.iter().all(|c| c.value(x) < 0.0)
    }

    fn barrier_derivatives(&self, x: &DVector<f64>, mu: f64) -> (DVector<f64>, DMatrix<f64>) {
        let mut grad = self.objective_gradient(x);
        let mut hess = self.hessian.clone();
        for c in &self.constraints {
            let cv = c.value(x);
            let slope = c.slope(x);
            c.add_gradient(x, mu / cv, &mut grad);
            c.add_outer(mu * (c.quad / cv - slope * slope / (cv * cv)), &mut hess);
        }
        (grad, hess)
    }

    /// `‖∇f − Σ ν·∇c‖∞` and `max |ν·c|`.
    pub fn kkt_residuals(&self, x: &DVector<f64>, multipliers: &[f64]) -> (f64, f64) {
        let mut grad = self.objective_gradient(x);
        let mut comp: f64 = 0.0;
        for (c, &nu) in self.constraints.iter().zip(multipliers) {
            c.add_gradient(x, -nu, &mut grad);
            comp = comp.max((nu * c.value(x)).abs());
        }
        (grad.amax(), comp)
    }

    pub fn solve(
        &self,
        start: DVector<f64>,
        settings: &BarrierSettings,
    ) -> Result<QpSolution, BarrierFailure> {
        let n = self.linear.len();
        let none_active = |x: DVector<f64>| QpSolution {
            x,
            multipliers: vec![0.0; self.constraints.len()],
            newton_iters: 0,
            weight: 0.0,
        };
        if n == 0 {
            return Ok(none_active(DVector::zeros(0)));
        }
        let neg = -&self.hessian;
        let chol = neg.cholesky().ok_or(BarrierFailure::NotNegativeDefinite)?;
        let free_max = chol.solve(&self.linear);
        if self.strictly_feasible(&free_max) {
            return Ok(none_active(free_max));
        }

        let origin = DVector::zeros(n);
        let origin_inside = self.strictly_feasible(&origin);
        let mut x = match (self.strictly_feasible(&start), origin_inside) {
            // pull a start lying on the boundary into the interior
            (true, true) => start * (1.0 - START_PULL),
            (true, false) => start,
            (false, true) => origin,
            (false, false) => return Err(BarrierFailure::NoInteriorPoint),
        };

        let m = self.constraints.len() as f64;
        let mut mu = settings.initial_weight;
        let mut iters = 0;
        loop {
            let mut stage_iters = 0;
            loop {
                let (grad, hess) = self.barrier_derivatives(&x, mu);
                let gnorm = grad.amax();
                if gnorm <= settings.tolerance {
                    break;
                }
                if stage_iters >= settings.max_newton_iters {
                    return Err(BarrierFailure::Newton {
                        gradient_norm: gnorm,
                        weight: mu,
                    });
                }
                let step = match (-hess).cholesky() {
                    Some(c) => c.solve(&grad),
                    None => {
                        return Err(BarrierFailure::Newton {
                            gradient_norm: gnorm,
                            weight: mu,
                        })
                    }
                };
                let decrement = grad.dot(&step);
                if decrement <= CENTERED * mu || decrement <= settings.tolerance.powi(2) {
                    break;
                }
                stage_iters += 1;
                iters += 1;
                // damped step for the self-concordant function (f + μ·barrier) / μ
                let mut t = 1.0 / (1.0 + (decrement / mu).sqrt());
                if decrement / mu < 0.0625 {
                    t = 1.0;
                }
                let mut trial = &x + &step * t;
                while !self.strictly_feasible(&trial) && t > 1e-16 {
                    t *= 0.5;
                    trial = &x + &step * t;
                }
                if (&trial - &x).amax() <= f64::EPSILON * (1.0 + x.amax()) {
                    break;
                }
                x = trial;
            }
            if m * mu <= settings.tolerance {
                break;
            }
            mu *= settings.decrease;
        }
        let multipliers: Vec<f64> = self
            .constraints
            .iter()
            .map(|c| mu / (-c.value(&x)))
            .collect();
        let (x, multipliers) = self
            .polish(&x, &multipliers)
            .unwrap_or((x, multipliers));
        Ok(QpSolution {
            x,
            multipliers,
            newton_iters: iters,
            weight: mu,
        })
    }

    /// Newton on the KKT equations of the constraints the barrier left
    /// nearly tight, which removes the `O(μ)` offset from the boundary and
    /// the roundoff in `μ / (−c)`. Returns `None` when the active set does
    /// not check out.
    fn polish(&self, x0: &DVector<f64>, nu0: &[f64]) -> Option<(DVector<f64>, Vec<f64>)> {
        let n = x0.len();
        let active: Vec<usize> = (0..self.constraints.len())
            .filter(|&k| -self.constraints[k].value(x0) <= ACTIVE_GAP && nu0[k] > 0.0)
            .collect();
        if active.is_empty() || active.len() > n {
            return None;
        }
        let a = active.len();
        let mut x = x0.clone();
        let mut nu: Vec<f64> = active.iter().map(|&k| nu0[k]).collect();
        for _ in 0..POLISH_ITERS {
            let mut jac = DMatrix::zeros(n + a, n + a);
            let mut rhs = DVector::zeros(n + a);
            let mut hess = self.hessian.clone();
            let mut grad = self.objective_gradient(&x);
            for (r, &k) in active.iter().enumerate() {
                let c = &self.constraints[k];
                c.add_gradient(&x, -nu[r], &mut grad);
                c.add_outer(-nu[r] * c.quad, &mut hess);
                let mut row = DVector::zeros(n);
                c.add_gradient(&x, 1.0, &mut row);
                for i in 0..n {
                    jac[(n + r, i)] = row[i];
                    jac[(i, n + r)] = -row[i];
                }
                rhs[n + r] = -c.value(&x);
            }
            jac.view_mut((0, 0), (n, n)).copy_from(&hess);
            rhs.rows_mut(0, n).copy_from(&(-grad));
            let step = jac.lu().solve(&rhs)?;
            x += step.rows(0, n);
            for r in 0..a {
                nu[r] += step[n + r];
            }
            if step.amax() <= 1e-15 * (1.0 + x.amax()) {
                break;
            }
        }
        if nu.iter().any(|v| !(*v >= 0.0)) {
            return None;
        }
        let mut full = vec![0.0; self.constraints.len()];
        for (r, &k) in active.iter().enumerate() {
            full[k] = nu[r];
        }
        for (k, c) in self.constraints.iter().enumerate() {
            let v = c.value(&x);
            let tight = active.contains(&k);
            if (tight && v.abs() > 1e-12) || (!tight && v >= 0.0) {
                return None;
            }
        }
        Some((x, full))
    }
}

/// Slack below which a constraint enters the polishing active set.
const ACTIVE_GAP: f64 = 1e-6;
/// Newton decrement, relative to the barrier weight, at which a stage ends.
const CENTERED: f64 = 1e-9;
const START_PULL: f64 = 1e-2;
const POLISH_ITERS: usize = 8;
