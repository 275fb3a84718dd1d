//! Central finite-difference gradient checking.
//!
//! Every hand-written backward pass in the crate is validated against this
//! checker in f64. The step size adapts to coordinate magnitude and the
//! relative error is symmetric in the two gradients being compared.

/// Outcome of comparing an analytic gradient against finite differences.
#[derive(Clone, Copy, Debug)]
pub struct FdReport {
    pub max_rel_err: f64,
    pub worst_coord: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
}

impl FdReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

/// Checks `analytic` against central differences of `f` at `x`, over every
/// coordinate. The per-coordinate step is `eps_scale * (1 + |x_i|)` and the
/// error is `|g_a - g_fd| / max(1e-8, |g_a| + |g_fd|)`.
pub fn fd_check<F>(f: F, x: &[f64], analytic: &[f64], eps_scale: f64) -> FdReport
where
    F: FnMut(&[f64]) -> f64,
{
    let coords: Vec<usize> = (0..x.len()).collect();
    fd_check_at(f, x, analytic, eps_scale, &coords)
}

/// Same as [`fd_check`] but only probes the listed coordinates; used to keep
/// whole-network checks affordable by stratified subsampling.
pub fn fd_check_at<F>(
    mut f: F,
    x: &[f64],
    analytic: &[f64],
    eps_scale: f64,
    coords: &[usize],
) -> FdReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(x.len(), analytic.len(), "gradient length mismatch");
    let mut buf = x.to_vec();
    let mut report = FdReport {
        max_rel_err: 0.0,
        worst_coord: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: 0,
    };
    for &i in coords {
        let eps = eps_scale * (1.0 + x[i].abs());
        buf[i] = x[i] + eps;
        let up = f(&buf);
        buf[i] = x[i] - eps;
        let down = f(&buf);
        buf[i] = x[i];
        let numeric = (up - down) / (2.0 * eps);
        let g = analytic[i];
        let rel = (g - numeric).abs() / (1e-8f64).max(g.abs() + numeric.abs());
        report.checked += 1;
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst_coord = i;
            report.worst_analytic = g;
            report.worst_numeric = numeric;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_passes() {
        let x = vec![0.5, -1.25, 3.0, 0.0];
        let grad: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let r = fd_check(|p| p.iter().map(|v| v * v).sum(), &x, &grad, 1e-5);
        assert!(r.passes(1e-8), "rel err {}", r.max_rel_err);
        assert_eq!(r.checked, 4);
    }

    #[test]
    fn sign_flipped_gradient_fails_near_one() {
        // g_a = -g_fd gives |g_a - g_fd| / (|g_a| + |g_fd|) = 1.
        let x = vec![1.0];
        let grad = vec![-2.0];
        let r = fd_check(|p| p[0] * p[0], &x, &grad, 1e-5);
        assert!((r.max_rel_err - 1.0).abs() < 1e-6);
        assert!(!r.passes(1e-4));
    }

    #[test]
    fn zero_gradient_at_zero_is_clean() {
        // Both gradients vanish; the 1e-8 floor keeps the ratio at 0.
        let x = vec![0.0];
        let grad = vec![0.0];
        let r = fd_check(|p| p[0] * p[0], &x, &grad, 1e-5);
        assert_eq!(r.max_rel_err, 0.0);
    }

    #[test]
    fn subsampled_coords_only_touch_listed_entries() {
        let x = vec![1.0, 2.0, 3.0];
        // Wrong gradient at coord 1, but we only check coords 0 and 2.
        let grad = vec![2.0, 999.0, 6.0];
        let r = fd_check_at(
            |p| p.iter().map(|v| v * v).sum(),
            &x,
            &grad,
            1e-5,
            &[0, 2],
        );
        assert!(r.passes(1e-8));
        assert_eq!(r.checked, 2);
    }

    #[test]
    fn step_scales_with_coordinate_magnitude() {
        // exp grows fast; a fixed step at x=8 loses accuracy, the scaled
        // step keeps the central difference honest.
        let x = vec![8.0f64];
        let grad = vec![x[0].exp()];
        let r = fd_check(|p| p[0].exp(), &x, &grad, 1e-6);
        assert!(r.passes(1e-6), "rel err {}", r.max_rel_err);
    }
}
