use rand::Rng;

use super::tensor::Tensor;

/// Uniform He initialization: entries i.i.d. `U(−√(6/fan_in), √(6/fan_in))`.
pub fn he_uniform_init<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn bounded_by_fan_in() {
        let t = he_uniform_init(&[50, 20], 6, &mut rng_from_seed(1));
        assert!(t.data().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn variance_is_two_over_fan_in() {
        let fan_in = 10;
        let t = he_uniform_init(&[100_000], fan_in, &mut rng_from_seed(2));
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let want = 2.0 / fan_in as f64;
        assert!((var - want).abs() / want < 0.05, "{var} vs {want}");
    }

    #[test]
    fn deterministic_given_seed() {
        let a = he_uniform_init(&[4, 4], 4, &mut rng_from_seed(9));
        let b = he_uniform_init(&[4, 4], 4, &mut rng_from_seed(9));
        assert_eq!(a, b);
    }
}
