//! Exhaustive oracle: evaluates one representative point per grid cell.

use super::{check_dims, FeatureBox, Interval, MarginBound, SolverError};
use crate::dataset::Instance;
use crate::gbm::Ensemble;

pub const DEFAULT_CELL_CAP: u128 = 10_000_000;

/// Cells of the threshold grid on one feature, clipped to `domain`.
fn cells(thresholds: &[f64], domain: &Interval) -> Vec<f64> {
    let mut bounds = Vec::with_capacity(thresholds.len() + 1);
    let mut lo = f64::NEG_INFINITY;
    for &t in thresholds {
        bounds.push(Interval::new(lo, true, t, false));
        lo = t;
    }
    bounds.push(Interval::new(lo, true, f64::INFINITY, false));
    bounds
        .iter()
        .filter_map(|cell| cell.intersect(domain).representative())
        .collect()
}

pub fn brute_force_optimum(
    ensemble: &Ensemble,
    domain: &FeatureBox,
) -> Result<MarginBound, SolverError> {
    brute_force_optimum_with_cap(ensemble, domain, DEFAULT_CELL_CAP)
}

pub fn brute_force_optimum_with_cap(
    ensemble: &Ensemble,
    domain: &FeatureBox,
    cap: u128,
) -> Result<MarginBound, SolverError> {
    check_dims(ensemble, domain)?;
    let axes: Vec<Vec<f64>> = ensemble
        .thresholds()
        .iter()
        .zip(domain.intervals())
        .map(|(ts, iv)| cells(ts, iv))
        .collect();
    let total = axes
        .iter()
        .fold(1u128, |acc, a| acc.saturating_mul(a.len() as u128));
    if total > cap {
        return Err(SolverError::CapExceeded { cells: total, cap });
    }
    if total == 0 {
        return Err(SolverError::EmptyBox);
    }
    let mut digits = vec![0usize; axes.len()];
    let mut point: Vec<f64> = axes.iter().map(|a| a[0]).collect();
    let first = ensemble.margin(&point);
    let (mut lower, mut upper) = ((first, point.clone()), (first, point.clone()));
    loop {
        // Odometer increment over the grid.
        let mut k = 0;
        while k < axes.len() {
            digits[k] += 1;
            if digits[k] < axes[k].len() {
                point[k] = axes[k][digits[k]];
                break;
            }
            digits[k] = 0;
            point[k] = axes[k][0];
            k += 1;
        }
        if k == axes.len() {
            break;
        }
        let m = ensemble.margin(&point);
        if m > upper.0 {
            upper = (m, point.clone());
        }
        if m < lower.0 {
            lower = (m, point.clone());
        }
    }
    Ok(MarginBound {
        lower: lower.0,
        upper: upper.0,
        attained_lower: Instance::new(lower.1),
        attained_upper: Instance::new(upper.1),
    })
}
