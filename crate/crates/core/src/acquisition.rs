//! Expected improvement and its exhaustive maximization over a grid.

use statrs::function::erf::erfc;

use crate::domain::SubspaceGrid;
use crate::error::{BofipError, Result};
use crate::surrogate::GpModel;

/// Standard deviations at or below this are treated as exact predictions.
pub const SIGMA_MIN: f64 = 1e-12;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement below `f_best` of a normal prediction.
///
/// With `delta = f_best - mean`, returns
/// `max(delta * Phi(delta/std) + std * phi(delta/std), 0)`, or `max(delta, 0)`
/// once `std <= SIGMA_MIN`.
pub fn expected_improvement(mean: f64, std: f64, f_best: f64) -> Result<f64> {
    if std < 0.0 || std.is_nan() {
        return Err(BofipError::InvalidParameter(format!(
            "standard deviation must be non-negative, got {std}"
        )));
    }
    let delta = f_best - mean;
    if std <= SIGMA_MIN {
        return Ok(delta.max(0.0));
    }
    let z = delta / std;
    Ok((delta * normal_cdf(z) + std * normal_pdf(z)).max(0.0))
}

/// Expected improvement of the surrogate at `x`. Locations the model was
/// trained on have zero improvement by convention; the nugget would
/// otherwise leave a tiny residual variance there.
pub fn model_expected_improvement(model: &GpModel, x: &[f64]) -> Result<f64> {
    if model.is_training_point(x) {
        return Ok(0.0);
    }
    let pred = model.predict(x);
    expected_improvement(pred.mean, pred.std(), model.best_response())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionResult {
    pub best_row: usize,
    pub ei_value: f64,
}

/// Row maximizing expected improvement among the rows not yet sampled.
/// Ties go to the lowest row index. `f_best` is the model's best response.
pub fn argmax_ei_on_grid(
    model: &GpModel,
    grid: &SubspaceGrid,
    sampled: &[bool],
) -> Result<AcquisitionResult> {
    if sampled.len() != grid.len() {
        return Err(BofipError::InvalidParameter(format!(
            "sampled mask has {} entries for {} grid rows",
            sampled.len(),
            grid.len()
        )));
    }
    let f_best = model.best_response();
    let mut best: Option<AcquisitionResult> = None;
    for (row, x) in grid.rows().enumerate() {
        if sampled[row] {
            continue;
        }
        let pred = model.predict(x);
        let ei = expected_improvement(pred.mean, pred.std(), f_best)?;
        if best.is_none_or(|b| ei > b.ei_value) {
            best = Some(AcquisitionResult {
                best_row: row,
                ei_value: ei,
            });
        }
    }
    best.ok_or(BofipError::GridExhausted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::GpConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ei_at_zero_gap_unit_std() {
        let ei = expected_improvement(0.0, 1.0, 0.0).unwrap();
        assert!((ei - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ei_degenerate_std() {
        assert_eq!(expected_improvement(1.0, 0.0, 0.0).unwrap(), 0.0);
        assert_eq!(expected_improvement(2.0, 0.0, 2.0).unwrap(), 0.0);
        assert_eq!(expected_improvement(1.0, 1e-13, 3.0).unwrap(), 2.0);
        assert!(expected_improvement(0.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn ei_is_monotone_in_std() {
        for delta in [0.0, 0.1, 1.0, 5.0] {
            let mut prev = 0.0;
            for k in 0..200 {
                let s = 0.01 * k as f64;
                let ei = expected_improvement(-delta, s, 0.0).unwrap();
                assert!(ei >= prev - 1e-15, "delta {delta} std {s}");
                prev = ei;
            }
        }
    }

    fn grid_1d(values: &[f64]) -> SubspaceGrid {
        let rows: Vec<Vec<f64>> = values.iter().map(|v| vec![*v]).collect();
        SubspaceGrid::from_rows(0, &rows).unwrap()
    }

    #[test]
    fn single_unsampled_row_wins() {
        let grid = grid_1d(&[0.0, 0.5, 1.0]);
        let m = GpModel::fit(&[[0.0], [1.0]], &[0.0, 1.0], &GpConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let res = argmax_ei_on_grid(&m, &grid, &[true, false, true]).unwrap();
        assert_eq!(res.best_row, 1);
        assert!(matches!(
            argmax_ei_on_grid(&m, &grid, &[true, true, true]),
            Err(BofipError::GridExhausted)
        ));
    }

    #[test]
    fn ties_go_to_lowest_row() {
        // symmetric data makes rows at -a and +a bit-identical
        let grid = grid_1d(&[-0.5, 0.0, 0.5, -1.0, 1.0]);
        let m = GpModel::with_theta(&[[-1.0], [0.0], [1.0]], &[1.0, 2.0, 1.0], &[1.0], 1e-8).unwrap();
        let sampled = [false, true, false, true, true];
        let l = m.predict(&[-0.5]);
        let r = m.predict(&[0.5]);
        if l == r {
            assert_eq!(argmax_ei_on_grid(&m, &grid, &sampled).unwrap().best_row, 0);
        }
    }

    #[test]
    fn sampled_rows_have_zero_ei() {
        let x = [[0.0], [0.3], [0.8]];
        let y = [1.0, 0.2, 0.7];
        let m = GpModel::fit(&x, &y, &GpConfig::default(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for p in &x {
            assert_eq!(model_expected_improvement(&m, p).unwrap(), 0.0);
            // the raw formula is already negligible there
            let pred = m.predict(p);
            let ei = expected_improvement(pred.mean, pred.std(), m.best_response()).unwrap();
            assert!(ei < 1e-3 * m.tau2_hat().sqrt(), "ei {ei}");
        }
        assert!(model_expected_improvement(&m, &[0.5]).unwrap() > 0.0);
    }
}
