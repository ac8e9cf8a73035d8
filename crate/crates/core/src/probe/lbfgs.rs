use std::collections::VecDeque;

use crate::Scalar;

/// Smooth function to minimize.
pub trait Differentiable<T> {
    fn dim(&self) -> usize;

    /// Objective value and gradient at `x`.
    fn evaluate(&self, x: &[T]) -> (T, Vec<T>);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub max_iterations: usize,
    /// Stop once the largest absolute gradient component is at most this.
    pub gradient_tolerance: f64,
    pub memory: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub max_line_search_steps: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            max_iterations: 1000,
            gradient_tolerance: 1e-4,
            memory: 10,
            armijo: 1e-4,
            max_line_search_steps: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsResult<T> {
    pub x: Vec<T>,
    pub value: T,
    pub gradient_norm: T,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at the start and after every accepted step.
    pub history: Vec<T>,
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn inf_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// Limited-memory BFGS with a backtracking Armijo line search. Every
/// accepted step strictly decreases the objective, so `history` is
/// non-increasing.
pub fn minimize<T: Scalar, F: Differentiable<T>>(
    f: &F,
    x0: Vec<T>,
    options: &LbfgsOptions,
) -> LbfgsResult<T> {
    let tol = T::of(options.gradient_tolerance);
    let c1 = T::of(options.armijo);
    let half = T::of(0.5);

    let mut x = x0;
    let (mut fx, mut g) = f.evaluate(&x);
    let mut history = vec![fx];
    let mut pairs: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::with_capacity(options.memory);
    let mut iterations = 0;
    let mut converged = inf_norm(&g) <= tol;

    while !converged && iterations < options.max_iterations {
        // two-loop recursion for d = -H g
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = *rho * dot(s, &q);
            for (qi, &yi) in q.iter_mut().zip(y) {
                *qi = *qi - a * yi;
            }
            alphas.push(a);
        }
        let gamma = match pairs.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => T::one() / inf_norm(&g).max(T::one()),
        };
        for qi in q.iter_mut() {
            *qi = *qi * gamma;
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = *rho * dot(y, &q);
            for (qi, &si) in q.iter_mut().zip(s) {
                *qi = *qi + (*a - b) * si;
            }
        }
        let mut direction: Vec<T> = q.into_iter().map(|v| -v).collect();
        let mut slope = dot(&g, &direction);
        if !(slope < T::zero()) {
            // not a descent direction: restart from steepest descent
            pairs.clear();
            let scale = T::one() / inf_norm(&g).max(T::one());
            direction = g.iter().map(|&v| -v * scale).collect();
            slope = dot(&g, &direction);
        }

        let mut step = T::one();
        let mut accepted = None;
        for _ in 0..options.max_line_search_steps {
            let candidate: Vec<T> = x
                .iter()
                .zip(&direction)
                .map(|(&xi, &di)| xi + step * di)
                .collect();
            let (fc, gc) = f.evaluate(&candidate);
            if fc.is_finite() && fc <= fx + c1 * step * slope && fc < fx {
                accepted = Some((candidate, fc, gc));
                break;
            }
            step = step * half;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            break;
        };

        let s: Vec<T> = x_new.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = g_new.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > T::epsilon() * dot(&y, &y) {
            if pairs.len() == options.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, T::one() / sy));
        }

        x = x_new;
        fx = f_new;
        g = g_new;
        history.push(fx);
        iterations += 1;
        converged = inf_norm(&g) <= tol;
    }

    LbfgsResult {
        gradient_norm: inf_norm(&g),
        x,
        value: fx,
        iterations,
        converged,
        history,
    }
}
