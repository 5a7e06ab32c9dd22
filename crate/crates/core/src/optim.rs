//! Limited-memory BFGS minimizer with backtracking line search.

use std::collections::VecDeque;

#[derive(Clone, Debug)]
pub(crate) struct LbfgsConfig {
    pub max_iterations: usize,
    /// Stop once `max |g| < gradient_tolerance`.
    pub gradient_tolerance: f64,
    /// Objective changes smaller than this count as no improvement.
    pub improvement_tolerance: f64,
    pub memory: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Termination {
    Converged,
    MaxIterations,
    /// No acceptable step could be found, or progress stalled.
    Stalled,
    NonFinite,
}

#[derive(Clone, Debug)]
pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub termination: Termination,
}

const ARMIJO_C1: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;
const MAX_STALLS: usize = 25;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct History {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    cap: usize,
}

impl History {
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        let scale = dot(&s, &s).sqrt() * dot(&y, &y).sqrt();
        if !(sy > 1e-12 * scale) {
            return;
        }
        if self.pairs.len() == self.cap {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    // two-loop recursion: returns -H g
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = match self.pairs.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / inf_norm(g).max(1.0),
        };
        for qi in &mut q {
            *qi *= gamma;
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

/// Minimizes `objective`, which returns the value and gradient at a point.
pub(crate) fn minimize<F>(mut objective: F, x0: Vec<f64>, cfg: &LbfgsConfig) -> Outcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0;
    let (mut f, mut g) = objective(&x);
    let mut iterations = 0;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Outcome {
            x,
            f,
            iterations,
            termination: Termination::NonFinite,
        };
    }
    let mut history = History {
        pairs: VecDeque::new(),
        cap: cfg.memory.max(1),
    };
    let mut stalls = 0;

    let termination = loop {
        let g_norm = inf_norm(&g);
        if g_norm < cfg.gradient_tolerance {
            break Termination::Converged;
        }
        if iterations >= cfg.max_iterations {
            break Termination::MaxIterations;
        }

        let mut d = history.direction(&g);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            history.pairs.clear();
            d = history.direction(&g);
            slope = dot(&g, &d);
        }

        let noise = cfg.improvement_tolerance.max(4.0 * f64::EPSILON * f.abs());
        let mut step = None;
        let mut t = 1.0;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            let (ft, gt) = objective(&trial);
            if ft.is_finite() && gt.iter().all(|v| v.is_finite()) {
                let armijo = ft <= f + ARMIJO_C1 * t * slope;
                // below the objective's resolution, fall back to the gradient
                let flat = (ft - f).abs() <= noise && inf_norm(&gt) < g_norm;
                if armijo || flat {
                    step = Some((trial, ft, gt));
                    break;
                }
            }
            t *= BACKTRACK;
        }

        let Some((x_new, f_new, g_new)) = step else {
            if history.pairs.is_empty() {
                break Termination::Stalled;
            }
            history.pairs.clear();
            continue;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        history.push(s, y);
        if f - f_new < cfg.improvement_tolerance {
            stalls += 1;
        } else {
            stalls = 0;
        }
        x = x_new;
        f = f_new;
        g = g_new;
        iterations += 1;
        if stalls >= MAX_STALLS && inf_norm(&g) >= cfg.gradient_tolerance {
            break Termination::Stalled;
        }
    };

    Outcome {
        x,
        f,
        iterations,
        termination,
    }
}
