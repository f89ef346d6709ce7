//! L1-penalized least squares by cyclic coordinate descent.
//!
//! Minimizes `||y - A a - Z b||^2 + lambda * ||b||_1` where the columns of `A`
//! are unpenalized (intercepts) and the columns of `Z` are penalized. Each
//! coordinate step is an exact minimization, so the objective never
//! increases from one sweep to the next.

#[derive(Debug, Clone, PartialEq)]
pub struct LassoProblem {
    pub y: Vec<f64>,
    /// Unpenalized columns, each of length `y.len()`.
    pub unpenalized: Vec<Vec<f64>>,
    /// Penalized columns, each of length `y.len()`.
    pub penalized: Vec<Vec<f64>>,
}

impl LassoProblem {
    /// Single intercept column of ones.
    pub fn with_intercept(y: Vec<f64>, penalized: Vec<Vec<f64>>) -> Self {
        let ones = vec![1.0; y.len()];
        Self {
            y,
            unpenalized: vec![ones],
            penalized,
        }
    }

    pub fn rows(&self) -> usize {
        self.y.len()
    }

    pub fn residual(&self, fixed: &[f64], coefficients: &[f64]) -> Vec<f64> {
        let mut r = self.y.clone();
        for (col, &a) in self.unpenalized.iter().zip(fixed) {
            axpy(&mut r, -a, col);
        }
        for (col, &b) in self.penalized.iter().zip(coefficients) {
            axpy(&mut r, -b, col);
        }
        r
    }

    pub fn objective(&self, fixed: &[f64], coefficients: &[f64], lambda: f64) -> f64 {
        let r = self.residual(fixed, coefficients);
        dot(&r, &r) + lambda * coefficients.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// Smallest `lambda` for which every penalized coefficient is zero:
    /// `2 * max_j |Z_j^T r0|` with `r0` the unpenalized-only residual.
    pub fn lambda_max(&self) -> f64 {
        let base = solve(self, f64::INFINITY, &SolverOptions::default());
        let r = self.residual(&base.fixed, &base.coefficients);
        self.penalized
            .iter()
            .map(|col| 2.0 * dot(col, &r).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_sweeps: 1000,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub fixed: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// Objective after each sweep when tracing is enabled (entry 0 is the
    /// starting point).
    pub trace: Vec<f64>,
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(target: &mut [f64], alpha: f64, x: &[f64]) {
    if alpha != 0.0 {
        for (t, v) in target.iter_mut().zip(x) {
            *t += alpha * v;
        }
    }
}

/// Cyclic coordinate descent from the all-zero start. Converged when the
/// largest coefficient change in a sweep falls below `tolerance`.
pub fn solve(problem: &LassoProblem, lambda: f64, options: &SolverOptions) -> LassoSolution {
    let mut fixed = vec![0.0; problem.unpenalized.len()];
    let mut coefficients = vec![0.0; problem.penalized.len()];
    let fixed_norms: Vec<f64> = problem.unpenalized.iter().map(|c| dot(c, c)).collect();
    let norms: Vec<f64> = problem.penalized.iter().map(|c| dot(c, c)).collect();
    let mut residual = problem.y.clone();
    let mut trace = Vec::new();
    if options.record_trace {
        trace.push(problem.objective(&fixed, &coefficients, finite_or_zero(lambda)));
    }

    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < options.max_sweeps {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for (j, col) in problem.unpenalized.iter().enumerate() {
            if fixed_norms[j] == 0.0 {
                continue;
            }
            let old = fixed[j];
            let new = (dot(col, &residual) + old * fixed_norms[j]) / fixed_norms[j];
            axpy(&mut residual, old - new, col);
            fixed[j] = new;
            max_change = max_change.max((new - old).abs());
        }
        for (j, col) in problem.penalized.iter().enumerate() {
            if norms[j] == 0.0 {
                continue;
            }
            let old = coefficients[j];
            let rho = dot(col, &residual) + old * norms[j];
            let new = soft_threshold(rho, lambda / 2.0) / norms[j];
            axpy(&mut residual, old - new, col);
            coefficients[j] = new;
            max_change = max_change.max((new - old).abs());
        }
        if options.record_trace {
            trace.push(problem.objective(&fixed, &coefficients, finite_or_zero(lambda)));
        }
        if max_change < options.tolerance {
            converged = true;
            break;
        }
    }
    LassoSolution {
        fixed,
        coefficients,
        sweeps,
        converged,
        trace,
    }
}

fn finite_or_zero(lambda: f64) -> f64 {
    if lambda.is_finite() {
        lambda
    } else {
        0.0
    }
}
