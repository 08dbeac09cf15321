//! Preconditioned nonlinear conjugate gradients (Polak-Ribière+) with an
//! Armijo line search refined by quadratic interpolation.

use crate::par;

pub(crate) trait Objective {
    /// Objective value; non-finite values reject a trial step.
    fn value(&self, x: &[f64]) -> f64;
    /// Gradient as a covector.
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    /// Maps a covector to a search vector.
    fn precondition(&self, g: &[f64]) -> Vec<f64>;
    /// Rescales `x` in place for scale-invariant objectives and returns the
    /// factor applied.
    fn renormalize(&self, _x: &mut [f64]) -> f64 {
        1.0
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct NcgOptions {
    pub max_iter: usize,
    /// Stop when `sqrt(gᵀ P g) ≤ grad_tol` (times `|f|` if relative).
    pub grad_tol: f64,
    pub grad_tol_relative: bool,
    /// Stop after `stall_iters` consecutive relative decreases below this.
    pub value_tol: f64,
    pub stall_iters: usize,
    pub initial_step: f64,
}

impl Default for NcgOptions {
    fn default() -> Self {
        NcgOptions {
            max_iter: 500,
            grad_tol: 1e-10,
            grad_tol_relative: false,
            value_tol: 1e-14,
            stall_iters: 5,
            initial_step: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct NcgOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Objective value after every accepted step, starting with the initial point.
    pub history: Vec<f64>,
}

const ARMIJO: f64 = 1e-4;

fn trial(x: &[f64], t: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

/// Backtracking Armijo search along `d` from `x` with directional slope
/// `slope < 0`. Returns the accepted step and value.
pub(crate) fn line_search<O: Objective>(
    obj: &O,
    x: &[f64],
    f0: f64,
    d: &[f64],
    slope: f64,
    alpha0: f64,
) -> Option<(f64, f64)> {
    let mut alpha = alpha0;
    for k in 0..80 {
        let ft = obj.value(&trial(x, alpha, d));
        let curv = (ft - f0 - slope * alpha) / (alpha * alpha);
        if ft.is_finite() && ft <= f0 + ARMIJO * alpha * slope {
            if k == 0 && curv > 0.0 {
                // Try the minimizer of the interpolating parabola.
                let a_star = -slope / (2.0 * curv);
                if a_star.is_finite() && (a_star / alpha - 1.0).abs() > 0.1 {
                    let fs = obj.value(&trial(x, a_star, d));
                    if fs.is_finite() && fs < ft && fs <= f0 + ARMIJO * a_star * slope {
                        return Some((a_star, fs));
                    }
                }
            }
            return Some((alpha, ft));
        }
        alpha = if ft.is_finite() && curv > 0.0 {
            (-slope / (2.0 * curv)).clamp(0.1 * alpha, 0.5 * alpha)
        } else {
            0.5 * alpha
        };
        if alpha < 1e-300 {
            break;
        }
    }
    None
}

pub(crate) fn ncg_minimize<O: Objective>(obj: &O, x0: Vec<f64>, opts: &NcgOptions) -> NcgOutcome {
    let mut x = x0;
    obj.renormalize(&mut x);
    let mut f = obj.value(&x);
    let mut g = obj.gradient(&x);
    let mut z = obj.precondition(&g);
    let mut gz = par::dot(&g, &z);
    let mut d: Vec<f64> = z.iter().map(|v| -v).collect();
    let mut step = opts.initial_step;
    let mut history = vec![f];
    let mut stall = 0;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        let scale = if opts.grad_tol_relative { f.abs() } else { 1.0 };
        if gz.max(0.0).sqrt() <= opts.grad_tol * scale {
            break;
        }
        let mut slope = par::dot(&g, &d);
        if !(slope < 0.0) {
            d = z.iter().map(|v| -v).collect();
            slope = -gz;
        }
        let found = match line_search(obj, &x, f, &d, slope, step) {
            Some(s) => Some(s),
            None if slope != -gz => {
                // Restart along the preconditioned steepest descent direction.
                d = z.iter().map(|v| -v).collect();
                slope = -gz;
                line_search(obj, &x, f, &d, slope, opts.initial_step)
            }
            None => None,
        };
        let Some((alpha, f_new)) = found else {
            break;
        };
        iterations += 1;
        let mut x_new = trial(&x, alpha, &d);
        let t = obj.renormalize(&mut x_new);
        let f_new = if t != 1.0 { obj.value(&x_new) } else { f_new };
        if !(f_new <= f) {
            // Rescaling rounded the value upward: no further progress possible.
            break;
        }
        let g_new = obj.gradient(&x_new);
        let z_new = obj.precondition(&g_new);
        let gz_new = par::dot(&g_new, &z_new);

        // Bring the previous quantities into the rescaled frame: for a
        // 0-homogeneous objective ∇f(t x) = ∇f(x) / t.
        let inv_t = 1.0 / t;
        let g_z_old = par::sum(g_new.len(), |i| g_new[i] * z[i] * inv_t);
        let beta = ((gz_new - g_z_old) / (gz * inv_t * inv_t)).max(0.0);
        let beta = if beta.is_finite() { beta } else { 0.0 };
        d = (0..d.len()).map(|i| -z_new[i] + beta * t * d[i]).collect();
        let new_slope = par::dot(&g_new, &d);
        step = if new_slope < 0.0 {
            (alpha * slope / new_slope).clamp(1e-12, 1e12)
        } else {
            opts.initial_step
        };

        let decrease = f - f_new;
        if decrease <= opts.value_tol * f.abs().max(f64::MIN_POSITIVE) {
            stall += 1;
        } else {
            stall = 0;
        }
        x = x_new;
        f = f_new;
        g = g_new;
        z = z_new;
        gz = gz_new;
        history.push(f);
        if stall >= opts.stall_iters {
            break;
        }
    }
    NcgOutcome {
        x,
        value: f,
        iterations,
        grad_norm: gz.max(0.0).sqrt(),
        history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        diag: Vec<f64>,
        shift: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn value(&self, x: &[f64]) -> f64 {
            x.iter()
                .zip(&self.diag)
                .zip(&self.shift)
                .map(|((x, a), b)| 0.5 * a * (x - b) * (x - b))
                .sum()
        }
        fn gradient(&self, x: &[f64]) -> Vec<f64> {
            x.iter()
                .zip(&self.diag)
                .zip(&self.shift)
                .map(|((x, a), b)| a * (x - b))
                .collect()
        }
        fn precondition(&self, g: &[f64]) -> Vec<f64> {
            g.to_vec()
        }
    }

    #[test]
    fn minimizes_ill_conditioned_quadratic() {
        let n = 40;
        let q = Quadratic {
            diag: (0..n).map(|i| 1.0 + i as f64 * 2.5).collect(),
            shift: (0..n).map(|i| (i as f64).sin()).collect(),
        };
        let opts = NcgOptions {
            max_iter: 400,
            grad_tol: 1e-12,
            ..Default::default()
        };
        let out = ncg_minimize(&q, vec![0.0; n], &opts);
        for (x, b) in out.x.iter().zip(&q.shift) {
            assert!((x - b).abs() < 1e-9);
        }
        assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
    }
}
