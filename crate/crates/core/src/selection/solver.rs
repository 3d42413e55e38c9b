//! Accelerated proximal-gradient solver for L1-regularized logistic
//! regression over a mixed sparse-binary / dense design.
//!
//! The smooth part is mean binary cross-entropy (probabilities clamped to
//! [1e-12, 1-1e-12] before the log); the L1 penalty applies only to columns
//! flagged penalized and is handled by the soft-threshold proximal step. The
//! intercept is never penalized. Steps use backtracking line search on a
//! local curvature estimate, momentum is restarted whenever the objective
//! would rise, and a rejected extrapolation falls back to a plain proximal
//! step from the last accepted iterate, so the recorded objective trace is
//! non-increasing up to floating-point noise.

use super::DesignMatrix;
use crate::error::{Error, Result};

pub(crate) const PROB_CLAMP: f64 = 1e-12;

pub(crate) struct Problem<'d, 'a> {
    pub design: &'d DesignMatrix<'a>,
    pub y: Vec<f64>,
}

impl<'d, 'a> Problem<'d, 'a> {
    pub fn new(design: &'d DesignMatrix<'a>, labels: &[u8]) -> Result<Self> {
        if labels.len() != design.n_rows() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} design rows",
                labels.len(),
                design.n_rows()
            )));
        }
        Ok(Problem {
            design,
            y: labels.iter().map(|&v| v as f64).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn n_cols(&self) -> usize {
        self.design.n_cols()
    }

    pub fn prevalence(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.y.len() as f64
    }

    pub fn margins(&self, w: &[f64], b: f64) -> Vec<f64> {
        self.design.margins(w, b)
    }

    /// Mean clamped binary cross-entropy at the given margins.
    pub fn smooth_value(&self, margins: &[f64]) -> f64 {
        let mut total = 0.0;
        for (&m, &y) in margins.iter().zip(&self.y) {
            let p = sigmoid(m).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        }
        total / self.y.len() as f64
    }

    /// Gradient of the smooth part: ((1/n) Xᵀ(p-y), mean(p-y)).
    pub fn smooth_grad(&self, margins: &[f64]) -> (Vec<f64>, f64) {
        let n = self.y.len() as f64;
        let residuals: Vec<f64> = margins
            .iter()
            .zip(&self.y)
            .map(|(&m, &y)| sigmoid(m) - y)
            .collect();
        let mut grad = self.design.transpose_apply(&residuals);
        for g in &mut grad {
            *g /= n;
        }
        let gb = residuals.iter().sum::<f64>() / n;
        (grad, gb)
    }
}

pub(crate) fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn log_odds(p: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    (p / (1.0 - p)).ln()
}

#[derive(Clone, Debug)]
pub(crate) struct FitOptions {
    pub lambda: f64,
    /// Pin every penalized coordinate at zero (fits the unpenalized
    /// submodel used as the path's starting point).
    pub freeze_penalized: bool,
    /// Small quadratic term on all weights; used by downstream learners
    /// that want a strictly convex unpenalized fit.
    pub ridge: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub warm_w: Option<Vec<f64>>,
    pub warm_b: Option<f64>,
}

impl FitOptions {
    pub fn for_lambda(lambda: f64) -> Self {
        FitOptions {
            lambda,
            freeze_penalized: false,
            ridge: 0.0,
            max_iters: 5000,
            rel_tol: 1e-8,
            warm_w: None,
            warm_b: None,
        }
    }
}

pub(crate) struct FitResult {
    pub w: Vec<f64>,
    pub b: f64,
    pub trace: Vec<f64>,
    pub converged: bool,
}

struct Step {
    w: Vec<f64>,
    b: f64,
    objective: f64,
}

struct Fista<'p, 'd, 'a> {
    problem: &'p Problem<'d, 'a>,
    opts: FitOptions,
    curvature: f64,
}

impl<'p, 'd, 'a> Fista<'p, 'd, 'a> {
    fn penalty(&self, w: &[f64]) -> f64 {
        if self.opts.freeze_penalized {
            return 0.0;
        }
        let mut total = 0.0;
        for (j, &v) in w.iter().enumerate() {
            if self.problem.design.is_penalized(j) {
                total += v.abs();
            }
        }
        total * self.opts.lambda
    }

    fn smooth_with_ridge(&self, w: &[f64], b: f64) -> f64 {
        let mut v = self.problem.smooth_value(&self.problem.margins(w, b));
        if self.opts.ridge > 0.0 {
            v += 0.5 * self.opts.ridge * w.iter().map(|x| x * x).sum::<f64>();
        }
        v
    }

    fn objective(&self, w: &[f64], b: f64) -> f64 {
        self.smooth_with_ridge(w, b) + self.penalty(w)
    }

    /// One backtracking proximal step from `(pw, pb)`. The accepted step
    /// satisfies the curvature majorization, which makes the composite
    /// objective non-increasing for a step taken from the current iterate.
    fn prox_step(&mut self, pw: &[f64], pb: f64) -> Step {
        let margins = self.problem.margins(pw, pb);
        let mut f_point = self.problem.smooth_value(&margins);
        let (mut grad, gb) = self.problem.smooth_grad(&margins);
        if self.opts.ridge > 0.0 {
            f_point += 0.5 * self.opts.ridge * pw.iter().map(|x| x * x).sum::<f64>();
            for (g, &x) in grad.iter_mut().zip(pw) {
                *g += self.opts.ridge * x;
            }
        }
        loop {
            let eta = 1.0 / self.curvature;
            let shrink = self.opts.lambda * eta;
            let mut w = Vec::with_capacity(pw.len());
            for (j, (&x, &g)) in pw.iter().zip(&grad).enumerate() {
                let penalized = self.problem.design.is_penalized(j);
                if penalized && self.opts.freeze_penalized {
                    w.push(0.0);
                } else if penalized {
                    w.push(soft_threshold(x - eta * g, shrink));
                } else {
                    w.push(x - eta * g);
                }
            }
            let b = pb - eta * gb;
            let f_new = self.smooth_with_ridge(&w, b);
            let mut dot = gb * (b - pb);
            let mut dist2 = (b - pb) * (b - pb);
            for ((&wn, &wp), &g) in w.iter().zip(pw).zip(&grad) {
                let d = wn - wp;
                dot += g * d;
                dist2 += d * d;
            }
            let bound = f_point + dot + 0.5 * self.curvature * dist2;
            if f_new <= bound + 1e-12 * bound.abs().max(1.0) || self.curvature >= 1e16 {
                let objective = f_new + self.penalty(&w);
                return Step { w, b, objective };
            }
            self.curvature *= 2.0;
        }
    }

    fn run(&mut self) -> Result<FitResult> {
        let d = self.problem.n_cols();
        let mut w = self.opts.warm_w.clone().unwrap_or_else(|| vec![0.0; d]);
        if w.len() != d {
            return Err(Error::ShapeMismatch(format!(
                "warm start has {} weights for {} columns",
                w.len(),
                d
            )));
        }
        if self.opts.freeze_penalized {
            for (j, v) in w.iter_mut().enumerate() {
                if self.problem.design.is_penalized(j) {
                    *v = 0.0;
                }
            }
        }
        let mut b = self
            .opts
            .warm_b
            .unwrap_or_else(|| log_odds(self.problem.prevalence()));

        let mut f_curr = self.objective(&w, b);
        if !f_curr.is_finite() {
            return Err(Error::NonFinite("initial objective".into()));
        }
        let mut trace = vec![f_curr];
        let mut vw = w.clone();
        let mut vb = b;
        let mut t = 1.0f64;
        let mut converged = false;

        for _ in 0..self.opts.max_iters {
            // Let the step size recover between iterations.
            self.curvature = (self.curvature * 0.9).max(1e-10);
            let mut step = self.prox_step(&vw, vb);
            if step.objective > f_curr {
                // Extrapolation overshot: restart momentum and step from
                // the last accepted iterate instead.
                t = 1.0;
                step = self.prox_step(&w, b);
            }
            if !step.objective.is_finite() {
                return Err(Error::NonFinite("solver objective".into()));
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            vw = step
                .w
                .iter()
                .zip(&w)
                .map(|(&zn, &zo)| zn + beta * (zn - zo))
                .collect();
            vb = step.b + beta * (step.b - b);
            w = step.w;
            b = step.b;
            t = t_next;
            let delta = f_curr - step.objective;
            f_curr = step.objective;
            trace.push(f_curr);
            if delta.abs() <= self.opts.rel_tol * f_curr.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        Ok(FitResult {
            w,
            b,
            trace,
            converged,
        })
    }
}

pub(crate) fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

pub(crate) fn fit(problem: &Problem, opts: FitOptions) -> Result<FitResult> {
    if problem.n() < 2 {
        return Err(Error::Degenerate(
            "need at least two samples to fit".into(),
        ));
    }
    let pos = problem.y.iter().filter(|&&y| y > 0.5).count();
    if pos == 0 || pos == problem.n() {
        return Err(Error::SingleClass);
    }
    Fista {
        problem,
        opts,
        curvature: 1.0,
    }
    .run()
}

/// Fits the unpenalized submodel (intercept plus any unpenalized columns)
/// and returns it with the smallest λ at which every penalized weight stays
/// zero: max over penalized j of the smooth gradient magnitude there.
pub(crate) fn null_model(problem: &Problem) -> Result<(f64, Vec<f64>, f64)> {
    let has_unpenalized = (0..problem.n_cols()).any(|j| !problem.design.is_penalized(j));
    let (w, b) = if has_unpenalized {
        let mut opts = FitOptions::for_lambda(0.0);
        opts.freeze_penalized = true;
        let r = fit(problem, opts)?;
        (r.w, r.b)
    } else {
        (
            vec![0.0; problem.n_cols()],
            log_odds(problem.prevalence()),
        )
    };
    let margins = problem.margins(&w, b);
    let (grad, _) = problem.smooth_grad(&margins);
    let lambda_max = grad
        .iter()
        .enumerate()
        .filter(|&(j, _)| problem.design.is_penalized(j))
        .map(|(_, g)| g.abs())
        .fold(0.0f64, f64::max);
    Ok((lambda_max, w, b))
}
