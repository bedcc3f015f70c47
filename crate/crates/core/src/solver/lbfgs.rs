//! Limited-memory BFGS with a strong-Wolfe line search (Nocedal and Wright,
//! Algorithms 7.4, 3.5 and 3.6) on real vectors.

use std::collections::VecDeque;

use nalgebra::DVector;

use crate::Result;

pub type RVector = DVector<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    pub memory: usize,
    /// Stop when the relative change of `f` or of `x` falls below this.
    pub tol: f64,
    /// Stop when `||grad||_inf` falls below this.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub c1: f64,
    pub c2: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self { memory: 10, tol: 1e-11, grad_tol: 1e-13, max_iter: 500, c1: 1e-4, c2: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStatus {
    FunctionChange,
    StepChange,
    SmallGradient,
    MaxIterations,
    /// No point satisfying the sufficient-decrease condition was found; the best
    /// iterate so far is returned.
    LineSearchFailed,
}

impl LbfgsStatus {
    pub fn is_failure(&self) -> bool {
        matches!(self, Self::LineSearchFailed)
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: RVector,
    pub f: f64,
    pub grad: RVector,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: LbfgsStatus,
}

struct Point {
    alpha: f64,
    f: f64,
    slope: f64,
    x: RVector,
    g: RVector,
}

/// Minimizer of the cubic interpolating `(a, fa, da)` and `(b, fb, db)`, kept inside
/// the bracket away from its ends; bisection when the cubic is unusable.
fn interpolate(a: &Point, b: &Point) -> f64 {
    let (lo, hi) = if a.alpha < b.alpha { (a.alpha, b.alpha) } else { (b.alpha, a.alpha) };
    let d1 = a.slope + b.slope - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.slope * b.slope;
    let mid = 0.5 * (lo + hi);
    if disc < 0.0 || !disc.is_finite() {
        return mid;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let t = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / (b.slope - a.slope + 2.0 * d2);
    let margin = 0.1 * (hi - lo);
    if t.is_finite() && t > lo + margin && t < hi - margin {
        t
    } else {
        mid
    }
}

/// Minimizes `fun` from `x0`. `fun` returns the value and the gradient.
pub fn lbfgs<F>(mut fun: F, x0: RVector, cfg: &LbfgsConfig) -> Result<LbfgsResult>
where
    F: FnMut(&RVector) -> Result<(f64, RVector)>,
{
    let (mut f, mut g) = fun(&x0)?;
    let mut x = x0;
    let mut evaluations = 1;
    let mut history: VecDeque<(RVector, RVector, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut status = LbfgsStatus::MaxIterations;
    let mut iterations = 0;

    for it in 0..cfg.max_iter {
        if g.amax() <= cfg.grad_tol {
            status = LbfgsStatus::SmallGradient;
            break;
        }
        // two-loop recursion
        let mut q = -&g;
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * s.dot(&q);
            q.axpy(-a, y, 1.0);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            q *= s.dot(y) / y.dot(y);
        } else {
            q *= 1.0 / g.norm().max(1.0);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * y.dot(&q);
            q.axpy(a - b, s, 1.0);
        }
        let mut dir = q;
        let mut slope0 = g.dot(&dir);
        if slope0 >= 0.0 {
            // lost descent: restart from steepest descent
            history.clear();
            dir = -&g / g.norm().max(1.0);
            slope0 = g.dot(&dir);
        }

        let (step, used) = wolfe_search(&mut fun, &x, f, &g, &dir, slope0, cfg)?;
        evaluations += used;
        iterations = it + 1;
        let Some(step) = step else {
            status = LbfgsStatus::LineSearchFailed;
            break;
        };
        let s = &step.x - &x;
        let y = &step.g - &g;
        let sy = s.dot(&y);
        let df = f - step.f;
        let xscale = x.amax().max(1.0);
        x = step.x;
        g = step.g;
        let f_old = f;
        f = step.f;
        if sy > 1e-16 * s.norm() * y.norm() && sy > 0.0 {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back((s.clone(), y, 1.0 / sy));
        }
        if df.abs() <= cfg.tol * f_old.abs().max(f.abs()).max(1.0) {
            status = LbfgsStatus::FunctionChange;
            break;
        }
        if s.amax() <= cfg.tol * xscale {
            status = LbfgsStatus::StepChange;
            break;
        }
    }
    Ok(LbfgsResult { x, f, grad: g, iterations, evaluations, status })
}

fn wolfe_search<F>(
    fun: &mut F,
    x: &RVector,
    f0: f64,
    g0: &RVector,
    dir: &RVector,
    slope0: f64,
    cfg: &LbfgsConfig,
) -> Result<(Option<Point>, usize)>
where
    F: FnMut(&RVector) -> Result<(f64, RVector)>,
{
    let mut used = 0;
    let mut eval = |alpha: f64, used: &mut usize| -> Result<Point> {
        let xa = x + dir * alpha;
        let (f, g) = fun(&xa)?;
        *used += 1;
        Ok(Point { alpha, f, slope: g.dot(dir), x: xa, g })
    };
    let origin = Point { alpha: 0.0, f: f0, slope: slope0, x: x.clone(), g: g0.clone() };
    let sufficient = |p: &Point| p.f <= f0 + cfg.c1 * p.alpha * slope0;
    let curvature = |p: &Point| p.slope.abs() <= -cfg.c2 * slope0;

    let mut prev = origin;
    let mut alpha = 1.0;
    let mut best: Option<Point> = None;
    let keep_best = |best: &mut Option<Point>, p: &Point| {
        if p.f < f0 && best.as_ref().is_none_or(|b| p.f < b.f) {
            *best = Some(Point { alpha: p.alpha, f: p.f, slope: p.slope, x: p.x.clone(), g: p.g.clone() });
        }
    };
    for i in 0..40 {
        let cur = eval(alpha, &mut used)?;
        if !cur.f.is_finite() {
            alpha = 0.5 * (prev.alpha + alpha);
            continue;
        }
        keep_best(&mut best, &cur);
        if !sufficient(&cur) || (i > 0 && cur.f >= prev.f) {
            return zoom(&mut eval, prev, cur, &sufficient, &curvature, best, used);
        }
        if curvature(&cur) {
            return Ok((Some(cur), used));
        }
        if cur.slope >= 0.0 {
            return zoom(&mut eval, cur, prev, &sufficient, &curvature, best, used);
        }
        alpha *= 2.0;
        prev = cur;
    }
    Ok((best, used))
}

fn zoom<E, S, C>(
    eval: &mut E,
    mut lo: Point,
    mut hi: Point,
    sufficient: &S,
    curvature: &C,
    mut best: Option<Point>,
    mut used: usize,
) -> Result<(Option<Point>, usize)>
where
    E: FnMut(f64, &mut usize) -> Result<Point>,
    S: Fn(&Point) -> bool,
    C: Fn(&Point) -> bool,
{
    for _ in 0..40 {
        if (hi.alpha - lo.alpha).abs() <= 1e-16 * lo.alpha.abs().max(1e-300) {
            break;
        }
        let alpha = interpolate(&lo, &hi);
        let cur = eval(alpha, &mut used)?;
        if cur.f.is_finite() && cur.f < lo.f && best.as_ref().is_none_or(|b| cur.f < b.f) && sufficient(&cur) {
            best = Some(Point { alpha: cur.alpha, f: cur.f, slope: cur.slope, x: cur.x.clone(), g: cur.g.clone() });
        }
        if !cur.f.is_finite() || !sufficient(&cur) || cur.f >= lo.f {
            hi = cur;
        } else {
            if curvature(&cur) {
                return Ok((Some(cur), used));
            }
            if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    // accept the best sufficient-decrease point found, if any
    if lo.alpha > 0.0 && sufficient(&lo) {
        return Ok((Some(lo), used));
    }
    Ok((best.filter(|b| sufficient(b)), used))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let fun = |x: &RVector| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = RVector::from_vec(vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)]);
            Ok((f, g))
        };
        let cfg = LbfgsConfig { tol: 1e-15, ..Default::default() };
        let res = lbfgs(fun, RVector::from_vec(vec![-1.2, 1.0]), &cfg).unwrap();
        assert!((res.x[0] - 1.0).abs() < 1e-6 && (res.x[1] - 1.0).abs() < 1e-6, "{:?}", res.x);
    }

    #[test]
    fn quadratic_is_solved_and_monotone() {
        let diag = RVector::from_vec((1..=20).map(|i| i as f64).collect());
        let mut values = Vec::new();
        let fun = |x: &RVector| {
            let f = 0.5 * x.component_mul(&diag).dot(x) - x.sum();
            values.push(f);
            Ok((f, x.component_mul(&diag) - RVector::from_element(20, 1.0)))
        };
        let res = lbfgs(fun, RVector::zeros(20), &LbfgsConfig::default()).unwrap();
        for i in 0..20 {
            assert!((res.x[i] - 1.0 / (i + 1) as f64).abs() < 1e-6);
        }
        assert!(!res.status.is_failure());
    }
}
