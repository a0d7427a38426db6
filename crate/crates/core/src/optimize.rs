//! Derivative-free optimization of the Bell factor over measurement angles
//! and source squeezing: a coarse deterministic grid followed by
//! Nelder-Mead refinement. Heuristic, not a certified global optimum.

use rayon::prelude::*;

use crate::bell::{bell_factor, correlation, BellResult, MeasurementSetting};
use crate::conditioning::SignedGaussianMixture;
use crate::error::{Error, Result};

const ANGLE_GRID: usize = 16;
const S_TOL: f64 = 1e-6;

/// Nelder-Mead simplex minimization. Returns the best point and value once
/// the function-value spread across the simplex falls below `ftol`.
pub fn nelder_mead<F>(f: F, x0: &[f64], step: f64, ftol: f64, max_iter: usize) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let dim = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..dim {
        let mut p = x0.to_vec();
        p[i] += step;
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..simplex.len()).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        if values[dim] - values[0] < ftol {
            break;
        }
        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..dim].iter().map(|p| p[j]).sum::<f64>() / dim as f64)
            .collect();
        let reflect: Vec<f64> = (0..dim)
            .map(|j| centroid[j] + alpha * (centroid[j] - simplex[dim][j]))
            .collect();
        let fr = f(&reflect);
        if fr < values[0] {
            let expand: Vec<f64> = (0..dim)
                .map(|j| centroid[j] + gamma * (reflect[j] - centroid[j]))
                .collect();
            let fe = f(&expand);
            if fe < fr {
                simplex[dim] = expand;
                values[dim] = fe;
            } else {
                simplex[dim] = reflect;
                values[dim] = fr;
            }
        } else if fr < values[dim - 1] {
            simplex[dim] = reflect;
            values[dim] = fr;
        } else {
            let contract: Vec<f64> = (0..dim)
                .map(|j| centroid[j] + rho * (simplex[dim][j] - centroid[j]))
                .collect();
            let fc = f(&contract);
            if fc < values[dim] {
                simplex[dim] = contract;
                values[dim] = fc;
            } else {
                for i in 1..=dim {
                    for j in 0..dim {
                        simplex[i][j] = simplex[0][j] + sigma * (simplex[i][j] - simplex[0][j]);
                    }
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    (simplex[best].clone(), values[best])
}

/// Golden-section search for the maximum of a unimodal function on `[a, b]`.
pub fn golden_max<F>(f: F, mut a: f64, mut b: f64, xtol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > xtol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = (a + b) / 2.0;
    (x, f(x))
}

/// Maximize `S` over the four angles: deterministic 16-point grid per angle
/// (via a shared `E(theta, phi)` table), then Nelder-Mead refinement to
/// 1e-6 in `S`. The canonical settings are always included as a candidate.
pub fn optimize_angles(mixture: &SignedGaussianMixture) -> Result<BellResult> {
    let grid: Vec<f64> = (0..ANGLE_GRID)
        .map(|i| 2.0 * std::f64::consts::PI * i as f64 / ANGLE_GRID as f64)
        .collect();
    // E table over the grid; rows Alice, columns Bob
    let table: Vec<Vec<f64>> = grid
        .par_iter()
        .map(|&th| {
            grid.iter()
                .map(|&ph| correlation(mixture, th, ph).unwrap_or(f64::NEG_INFINITY))
                .collect()
        })
        .collect();

    let mut best_s = f64::NEG_INFINITY;
    let mut best = [0usize; 4];
    for i1 in 0..ANGLE_GRID {
        for i2 in 0..ANGLE_GRID {
            for j1 in 0..ANGLE_GRID {
                for j2 in 0..ANGLE_GRID {
                    let s = table[i1][j1] + table[i1][j2] + table[i2][j1] - table[i2][j2];
                    if s > best_s {
                        best_s = s;
                        best = [i1, i2, j1, j2];
                    }
                }
            }
        }
    }
    let x0 = [grid[best[0]], grid[best[1]], grid[best[2]], grid[best[3]]];
    let objective = |x: &[f64]| {
        let setting = MeasurementSetting::from_array([x[0], x[1], x[2], x[3]]);
        match bell_factor(mixture, setting) {
            Ok(r) => -r.s,
            Err(_) => f64::INFINITY,
        }
    };
    let (x, _) = nelder_mead(objective, &x0, 0.1, S_TOL, 400);
    let refined = bell_factor(mixture, MeasurementSetting::from_array([x[0], x[1], x[2], x[3]]))?;
    let canonical = bell_factor(mixture, MeasurementSetting::canonical())?;
    let best = if canonical.s >= refined.s {
        canonical
    } else {
        refined
    };
    // No quantum state exceeds the Tsirelson bound 2*sqrt(2); anything above
    // it is residual cancellation noise, not a physical optimum.
    if best.s > 2.0 * std::f64::consts::SQRT_2 + 1e-6 {
        return Err(Error::NumericalFailure(format!(
            "optimized S = {} exceeds the Tsirelson bound; mixture is \
             numerically degenerate",
            best.s
        )));
    }
    Ok(best)
}

/// Maximize `S` over the source squeezing: angle-optimized `S(lambda)` on a
/// coarse grid over `lambda_range`, then golden-section refinement around
/// the best grid point.
pub fn optimize_squeezing<F>(
    build: F,
    lambda_range: (f64, f64),
) -> Result<(f64, BellResult)>
where
    F: Fn(f64) -> Result<SignedGaussianMixture> + Sync,
{
    let (lo, hi) = lambda_range;
    let n_grid = 25usize;
    let lambdas: Vec<f64> = (0..n_grid)
        .map(|i| lo + (hi - lo) * i as f64 / (n_grid - 1) as f64)
        .collect();
    let scores: Vec<f64> = lambdas
        .par_iter()
        .map(|&l| {
            build(l)
                .and_then(|m| optimize_angles(&m))
                .map(|r| r.s)
                .unwrap_or(f64::NEG_INFINITY)
        })
        .collect();
    let best_i = scores
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let a = if best_i == 0 { lo } else { lambdas[best_i - 1] };
    let b = if best_i == n_grid - 1 {
        hi
    } else {
        lambdas[best_i + 1]
    };
    let (lambda_opt, _) = golden_max(
        |l| {
            build(l)
                .and_then(|m| optimize_angles(&m))
                .map(|r| r.s)
                .unwrap_or(f64::NEG_INFINITY)
        },
        a,
        b,
        1e-4,
    );
    let result = optimize_angles(&build(lambda_opt)?)?;
    Ok((lambda_opt, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::{subtract_photons, Tap};
    use crate::gaussian::GaussianState;
    use approx::assert_abs_diff_eq;

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 2.0 * (x[1] + 0.5).powi(2);
        let (x, v) = nelder_mead(f, &[0.0, 0.0], 0.5, 1e-12, 500);
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(x[1], -0.5, epsilon = 1e-4);
        assert!(v < 1e-8);
    }

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, v) = golden_max(|x| 1.0 - (x - 0.3).powi(2), 0.0, 1.0, 1e-8);
        assert_abs_diff_eq!(x, 0.3, epsilon = 1e-6);
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn angle_optimization_recovers_canonical_s() {
        let t = 0.99f64;
        let lambda = 0.57 / t;
        let tms = GaussianState::two_mode_squeezed(lambda.atanh());
        let taps: Vec<Tap> = [0, 1]
            .iter()
            .map(|&m| Tap {
                signal_mode: m,
                transmittance: t,
                eta_pd: 1.0,
            })
            .collect();
        let mix = subtract_photons(&tms, &taps, 1.0, 0.0, None).unwrap();
        let opt = optimize_angles(&mix).unwrap();
        let canonical = bell_factor(&mix, MeasurementSetting::canonical()).unwrap();
        assert!(opt.s >= canonical.s - 1e-9);
        assert_abs_diff_eq!(opt.s, canonical.s, epsilon = 1e-4);
    }
}
