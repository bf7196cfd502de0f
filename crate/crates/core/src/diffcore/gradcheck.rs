//! Central finite-difference verification of analytic gradients.
//!
//! Step size is relative: `h = step * max(1, |x|)`. An element is treated as
//! sitting on a non-differentiable point (a LeakyReLU kink, a top-k swap) when
//! the estimates at `h` and `h/2` disagree by more than `kink_tolerance`, or
//! when the one-sided slopes stay apart as the step halves; such elements are counted in [`GradCheckReport::skipped`] and excluded from the
//! error. Relative error is `|a - n| / max(|a|, |n|, denominator_floor)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// A function of several tensors with an analytic vector-Jacobian product.
pub trait Differentiable {
    fn forward(&self, inputs: &[Tensor]) -> Result<Tensor>;
    /// Gradients with respect to every input, given the upstream gradient.
    fn vjp(&self, inputs: &[Tensor], grad: &Tensor) -> Result<Vec<Tensor>>;
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    pub denominator_floor: f64,
    pub kink_tolerance: f64,
    /// Seed for the random cotangent used by [`vjp_check`].
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { step: 1e-5, denominator_floor: 1e-4, kink_tolerance: 1e-6, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

impl GradCheckReport {
    pub fn merge(self, other: GradCheckReport) -> GradCheckReport {
        GradCheckReport {
            max_relative_error: self.max_relative_error.max(other.max_relative_error),
            checked: self.checked + other.checked,
            skipped: self.skipped + other.skipped,
        }
    }
}

/// Compares `analytic[k]` against finite differences of the scalar `f` around
/// `inputs[k]` for every element of every input.
pub fn check_scalar_fn<F>(
    f: F,
    inputs: &[Tensor],
    analytic: &[Tensor],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<f64>,
{
    if opts.step <= 0.0 {
        return Err(Error::Range("finite-difference step must be positive".into()));
    }
    if analytic.len() != inputs.len() {
        return Err(Error::Dimension(format!(
            "{} analytic gradients for {} inputs",
            analytic.len(),
            inputs.len()
        )));
    }
    let mut report = GradCheckReport::default();
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (k, grad) in analytic.iter().enumerate() {
        if grad.shape() != inputs[k].shape() {
            return Err(Error::Dimension(format!("gradient {k} has the wrong shape")));
        }
        for e in 0..inputs[k].len() {
            let x0 = inputs[k].data()[e];
            let h = opts.step * x0.abs().max(1.0);
            let mut eval = |delta: f64| -> Result<f64> {
                work[k].data_mut()[e] = x0 + delta;
                let v = f(&work);
                work[k].data_mut()[e] = x0;
                v
            };
            let (fp, fm) = (eval(h)?, eval(-h)?);
            let (hp, hm) = (eval(h / 2.0)?, eval(-h / 2.0)?);
            let f0 = eval(0.0)?;
            let full = (fp - fm) / (2.0 * h);
            let half = (hp - hm) / h;
            let tol = opts.kink_tolerance * full.abs().max(1.0);
            // One-sided slopes disagree by O(h) at smooth points but stay apart at a kink.
            let asym = ((fp - f0) - (f0 - fm)) / h;
            let asym_half = ((hp - f0) - (f0 - hm)) / (h / 2.0);
            let kink_at_x = asym.abs() > tol && asym_half.abs() > 0.75 * asym.abs();
            if kink_at_x || (full - half).abs() > tol {
                report.skipped += 1;
                continue;
            }
            let a = grad.data()[e];
            let denom = a.abs().max(full.abs()).max(opts.denominator_floor);
            report.max_relative_error = report.max_relative_error.max((a - full).abs() / denom);
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Checks `op.vjp` against finite differences of `<op.forward(x), w>` for a
/// seeded random cotangent `w`.
pub fn vjp_check(
    op: &dyn Differentiable,
    inputs: &[Tensor],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let out = op.forward(inputs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let w = Tensor::from_parts(
        out.shape().to_vec(),
        (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    );
    let analytic = op.vjp(inputs, &w)?;
    check_scalar_fn(|xs| Ok(op.forward(xs)?.dot(&w)), inputs, &analytic, opts)
}
