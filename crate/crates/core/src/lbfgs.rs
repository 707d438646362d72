//! Small limited-memory BFGS minimizer with Armijo backtracking.
//!
//! Used by the Carnot–Carathéodory distance solver; not part of the public
//! surface.

const MEMORY: usize = 8;
const C1: f64 = 1e-4;

pub(crate) struct MinimizeResult {
    pub x: Vec<f64>,
}

/// Minimize `f` starting from `x0`. `f(x, grad)` returns the value and fills
/// the gradient in place.
pub(crate) fn minimize<F>(mut f: F, x0: &[f64], max_iters: usize, grad_tol: f64) -> MinimizeResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; n];
    let mut value = f(&x, &mut grad);

    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();

    for _ in 0..max_iters {
        let gnorm = norm(&grad);
        if !gnorm.is_finite() || gnorm <= grad_tol {
            break;
        }

        // two-loop recursion
        let mut dir: Vec<f64> = grad.iter().map(|g| -g).collect();
        let m = s_hist.len();
        let mut alphas = vec![0.0; m];
        for i in (0..m).rev() {
            let a = rho_hist[i] * dot(&s_hist[i], &dir);
            alphas[i] = a;
            axpy(-a, &y_hist[i], &mut dir);
        }
        if m > 0 {
            let last = m - 1;
            let gamma = dot(&s_hist[last], &y_hist[last]) / dot(&y_hist[last], &y_hist[last]);
            if gamma.is_finite() && gamma > 0.0 {
                dir.iter_mut().for_each(|d| *d *= gamma);
            }
        }
        for i in 0..m {
            let b = rho_hist[i] * dot(&y_hist[i], &dir);
            axpy(alphas[i] - b, &s_hist[i], &mut dir);
        }

        let mut slope = dot(&grad, &dir);
        if slope >= 0.0 {
            // fall back to steepest descent if curvature information is stale
            dir = grad.iter().map(|g| -g).collect();
            slope = -gnorm * gnorm;
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        // Armijo backtracking
        let mut alpha = if m == 0 { (1.0 / gnorm).min(1.0) } else { 1.0 };
        let mut new_x = vec![0.0; n];
        let mut new_grad = vec![0.0; n];
        let mut new_value = f64::INFINITY;
        let mut accepted = false;
        for _ in 0..40 {
            for i in 0..n {
                new_x[i] = x[i] + alpha * dir[i];
            }
            new_value = f(&new_x, &mut new_grad);
            if new_value.is_finite() && new_value <= value + C1 * alpha * slope {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }

        let s: Vec<f64> = new_x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if s_hist.len() == MEMORY {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            rho_hist.push(1.0 / sy);
            s_hist.push(s);
            y_hist.push(y);
        }

        let delta = value - new_value;
        x = new_x.clone();
        grad = new_grad.clone();
        value = new_value;
        if delta.abs() <= 1e-16 * (1.0 + value.abs()) {
            break;
        }
    }

    MinimizeResult { x }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let res = minimize(
            |x, g| {
                g[0] = 2.0 * (x[0] - 3.0);
                g[1] = 8.0 * (x[1] + 1.0);
                (x[0] - 3.0).powi(2) + 4.0 * (x[1] + 1.0).powi(2)
            },
            &[0.0, 0.0],
            200,
            1e-12,
        );
        assert!((res.x[0] - 3.0).abs() < 1e-8);
        assert!((res.x[1] + 1.0).abs() < 1e-8);
    }

    #[test]
    fn rosenbrock() {
        let res = minimize(
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            },
            &[-1.2, 1.0],
            500,
            1e-10,
        );
        let v = (1.0 - res.x[0]).powi(2) + 100.0 * (res.x[1] - res.x[0] * res.x[0]).powi(2);
        assert!(v < 1e-12, "value {v}");
    }
}
