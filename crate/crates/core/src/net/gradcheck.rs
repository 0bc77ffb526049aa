//! Central finite-difference gradient checking.

/// Perturbation for parameter value `theta`: `1e-3 * max(1, |theta|)`.
pub fn step_size(theta: f64) -> f64 {
    1e-3 * theta.abs().max(1.0)
}

/// `|a - n| / max(|a|, |n|, 1e-7)`; the floor keeps gradients that are zero in
/// both forms from dividing by zero.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    /// Index of the worst element.
    pub worst: usize,
    pub checked: usize,
    /// Elements skipped because a perturbation crossed a kink.
    pub skipped: usize,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_err < tol
    }

    /// Combines the results of several checks.
    pub fn merge(self, other: GradCheck) -> GradCheck {
        let (max_rel_err, worst) = if other.max_rel_err > self.max_rel_err {
            (other.max_rel_err, other.worst)
        } else {
            (self.max_rel_err, self.worst)
        };
        GradCheck {
            max_rel_err,
            worst,
            checked: self.checked + other.checked,
            skipped: self.skipped + other.skipped,
        }
    }
}

/// Compares `analytic` with central differences of `f` around `theta`.
///
/// `f` returns `None` when the perturbed point lies on a different linear
/// piece than `theta` (a ReLU or max-pool decision flipped); such elements are
/// skipped rather than compared.
pub fn check_gradient(
    theta: &[f64],
    analytic: &[f64],
    mut f: impl FnMut(&[f64]) -> Option<f64>,
) -> GradCheck {
    assert_eq!(theta.len(), analytic.len(), "gradient length mismatch");
    let mut work = theta.to_vec();
    let mut out = GradCheck::default();
    for i in 0..theta.len() {
        let h = step_size(theta[i]);
        work[i] = theta[i] + h;
        let plus = f(&work);
        work[i] = theta[i] - h;
        let minus = f(&work);
        work[i] = theta[i];
        let (Some(plus), Some(minus)) = (plus, minus) else {
            out.skipped += 1;
            continue;
        };
        let numeric = (plus - minus) / (2.0 * h);
        let e = rel_error(analytic[i], numeric);
        if e > out.max_rel_err {
            out.max_rel_err = e;
            out.worst = i;
        }
        out.checked += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_a_quadratic() {
        let theta = [0.5, -2.0, 3.0];
        let grad: Vec<f64> = theta.iter().map(|t| 2.0 * t).collect();
        let r = check_gradient(&theta, &grad, |t| Some(t.iter().map(|v| v * v).sum()));
        assert!(r.passes(1e-9));
        assert_eq!(r.checked, 3);
    }

    #[test]
    fn detects_a_wrong_gradient_and_skips_kinks() {
        let r = check_gradient(&[1.0, 1.0], &[2.0, 3.0], |t| Some(t[0] * t[0] + t[1] * t[1]));
        assert_eq!(r.worst, 1);
        assert!(!r.passes(1e-4));
        let r = check_gradient(&[1.0], &[1.0], |_| None);
        assert_eq!((r.checked, r.skipped), (0, 1));
        assert!(!r.passes(1.0));
    }
}
