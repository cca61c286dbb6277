//! Central finite-difference gradient checker.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numerics::{Gradients, ModelParams};

/// Outcome of a gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_MAX_COORDS: usize = 200;

/// Denominator floor per unit of loss magnitude. A central difference at
/// step h carries roundoff near `f64::EPSILON * |f| / h` (about 2e-11 at the
/// default step), so smaller gradients cannot be resolved in relative terms
/// and are compared against this floor instead.
pub const NOISE_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, floor)`; a pair of exact zeros gives 0.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(floor);
    if scale == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Compare the analytic gradient returned by `f` against central differences
/// on at most `max_coords` coordinates, sampled deterministically from
/// `seed` when there are more. The error floor is
/// `NOISE_FLOOR * max(1, |f(params)|)`.
pub fn grad_check<F>(
    f: F,
    params: &ModelParams,
    eps: f64,
    max_coords: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&ModelParams) -> Result<(f64, Gradients)>,
{
    let (value, analytic) = f(params)?;
    let floor = NOISE_FLOOR * value.abs().max(1.0);

    let mut coords: Vec<(String, usize)> = params
        .iter()
        .flat_map(|(name, p)| (0..p.value.len()).map(move |i| (name.clone(), i)))
        .collect();
    if coords.len() > max_coords {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        coords.shuffle(&mut rng);
        coords.truncate(max_coords);
        coords.sort();
    }

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coords_checked: 0,
        worst: None,
    };
    for (name, i) in coords {
        let original = probe.value(&name)?.data()[i];
        probe.value_mut(&name)?.data_mut()[i] = original + eps;
        let (plus, _) = f(&probe)?;
        probe.value_mut(&name)?.data_mut()[i] = original - eps;
        let (minus, _) = f(&probe)?;
        probe.value_mut(&name)?.data_mut()[i] = original;

        let numeric = (plus - minus) / (2.0 * eps);
        let exact = analytic.get(&name).map_or(0.0, |g| g.data()[i]);
        let err = relative_error(exact, numeric, floor);
        report.coords_checked += 1;
        if report.worst.is_none() || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some((name, i));
        }
    }
    Ok(report)
}
