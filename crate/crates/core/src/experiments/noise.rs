use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::experiments::config::NoiseSpec;

/// Standard normal vector from a ChaCha8 stream seeded with `seed`.
pub fn gaussian_vector(len: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_iterator(len, (0..len).map(|_| StandardNormal.sample(&mut rng)))
}

/// `y + η` with `η` Gaussian and rescaled so that `‖η‖₂ = level·‖y‖₂`.
pub fn add_noise(y: &DVector<f64>, spec: &NoiseSpec) -> Result<DVector<f64>> {
    if !(spec.level >= 0.0) {
        return Err(Error::InvalidInput(format!("noise level {} is negative", spec.level)));
    }
    if spec.level == 0.0 {
        return Ok(y.clone());
    }
    let norm = y.norm();
    if norm == 0.0 {
        return Err(Error::ZeroData);
    }
    let mut eta = gaussian_vector(y.len(), spec.seed);
    eta *= spec.level * norm / eta.norm();
    Ok(y + eta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_level_is_identity() {
        let y = DVector::from_vec(vec![1.0, -2.0]);
        assert_eq!(add_noise(&y, &NoiseSpec { level: 0.0, seed: 3 }).unwrap(), y);
        assert_eq!(add_noise(&DVector::zeros(2), &NoiseSpec { level: 0.0, seed: 3 }).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn rescaling_is_exact() {
        let y = DVector::from_vec(vec![3.0, 4.0]);
        let out = add_noise(&y, &NoiseSpec { level: 0.02, seed: 1 }).unwrap();
        assert!(((&out - &y).norm() - 0.1).abs() <= 1e-15);
    }

    #[test]
    fn seeds_are_deterministic() {
        let y = DVector::from_fn(50, |i, _| (i as f64).sin() + 2.0);
        let spec = NoiseSpec { level: 0.02, seed: 9 };
        let a = add_noise(&y, &spec).unwrap();
        assert_eq!(a, add_noise(&y, &spec).unwrap());
        let b = add_noise(&y, &NoiseSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(a, b);
        let (ea, eb) = ((&a - &y).norm(), (&b - &y).norm());
        assert!((ea - eb).abs() <= 1e-14 * ea);
        assert!((ea / y.norm() - 0.02).abs() <= 1e-14 * 0.02);
    }

    #[test]
    fn zero_data_is_rejected() {
        assert!(matches!(add_noise(&DVector::zeros(3), &NoiseSpec { level: 0.1, seed: 0 }), Err(Error::ZeroData)));
    }
}
