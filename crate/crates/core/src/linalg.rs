//! Dense helpers shared by the rest of the crate.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

// Relative change in the Rayleigh quotient treated as stagnation.
const POWER_ITER_TOL: f64 = 1e-15;
const STAGNANT_STEPS: usize = 3;
const POWER_ITER_CAP: usize = 10_000;
const START_SEED: u64 = 0x5eed_0001;

/// Largest singular value by power iteration on `MᵀM`.
///
/// The start vector is the normalized all-ones vector with a small fixed
/// pseudo-random perturbation, so it is never exactly orthogonal to the
/// leading right singular vector of structured matrices (Laplacians,
/// commutators) whose top vector is orthogonal to the constant vector.
pub fn spectral_norm(m: &Matrix) -> f64 {
    let n = m.ncols();
    if n == 0 || m.nrows() == 0 {
        return 0.0;
    }
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    // Work on the rescaled matrix to stay clear of under/overflow.
    let a = m / scale;
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut v = Vector::from_fn(n, |_, _| 1.0 + 0.25 * (rng.gen::<f64>() - 0.5));
    v.normalize_mut();

    let mut estimate = 0.0_f64;
    let mut stagnant = 0;
    for _ in 0..POWER_ITER_CAP {
        let av = &a * &v;
        let w = a.tr_mul(&av);
        let norm = w.norm();
        // Rayleigh quotient vᵀAᵀAv = ‖Av‖².
        let rayleigh = av.norm_squared();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (rayleigh - estimate).abs() <= POWER_ITER_TOL * rayleigh {
            stagnant += 1;
            if stagnant >= STAGNANT_STEPS {
                estimate = estimate.max(rayleigh);
                break;
            }
        } else {
            stagnant = 0;
        }
        estimate = rayleigh;
    }
    // One last Rayleigh quotient with the converged vector.
    let final_est = (&a * &v).norm_squared().max(estimate);
    scale * final_est.sqrt()
}

/// `AB − BA`.
pub fn commutator(a: &Matrix, b: &Matrix) -> Matrix {
    a * b - b * a
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn is_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// `max |M − Mᵀ|` over entries.
pub fn asymmetry(m: &Matrix) -> f64 {
    max_abs_diff(m, &m.transpose())
}
