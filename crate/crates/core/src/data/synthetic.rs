use serde::{Deserialize, Serialize};

use super::{Dataset, Schema, SensitiveTable};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Two-attribute Gaussian generator where the label shifts both features
/// along the diagonal with a sign set by the attribute interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub n: usize,
    pub delta: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            n: 20_000,
            delta: 0.4,
            sigma: 0.3,
            seed: 0,
        }
    }
}

impl SyntheticParams {
    pub fn generate(&self) -> Result<Dataset> {
        gen_synthetic(self.n, self.delta, self.sigma, self.seed)
    }
}

/// Draws `n` rows: `s1, s2, y` uniform on ±1, then
/// `x1 ~ N(s1 + delta*s1*s2*y, sigma)` and `x2 ~ N(s2 + delta*s1*s2*y, sigma)`,
/// with `sigma` the standard deviation.
pub fn gen_synthetic(n: usize, delta: f64, sigma: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    if !delta.is_finite() {
        return Err(Error::invalid("delta must be finite"));
    }
    let mut rng = Stream::new(seed);
    let mut features = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    let mut sensitive = Vec::with_capacity(n);
    for _ in 0..n {
        let s1 = rng.sign();
        let s2 = rng.sign();
        let y = rng.sign();
        let shift = delta * s1 * s2 * y;
        features.push(rng.normal(s1 + shift, sigma));
        features.push(rng.normal(s2 + shift, sigma));
        labels.push(y);
        sensitive.push(vec![sign_token(s1), sign_token(s2)]);
    }
    let names = vec!["x1".to_string(), "x2".to_string()];
    let sens_names = vec!["s1".to_string(), "s2".to_string()];
    let schema = Schema::numeric(&names, "y", &sens_names);
    Dataset::new(
        features,
        labels,
        Some(SensitiveTable {
            names: sens_names,
            rows: sensitive,
        }),
        schema,
    )
}

fn sign_token(v: f64) -> String {
    if v > 0.0 { "1" } else { "-1" }.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_sized_dataset_shape() {
        let ds = gen_synthetic(20_000, 0.4, 0.3, 1).unwrap();
        assert_eq!(ds.len(), 20_000);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.sensitive().unwrap().names.len(), 2);
    }

    #[test]
    fn vanishing_noise_puts_points_on_corners() {
        let ds = gen_synthetic(4, 0.0, 1e-9, 3).unwrap();
        let s = ds.sensitive().unwrap();
        for i in 0..4 {
            let s1: f64 = s.rows[i][0].parse().unwrap();
            let s2: f64 = s.rows[i][1].parse().unwrap();
            assert!((ds.row(i)[0] - s1).abs() < 1e-6);
            assert!((ds.row(i)[1] - s2).abs() < 1e-6);
        }
    }

    #[test]
    fn conditional_mean_matches_closed_form() {
        let sigma = 0.3;
        let ds = gen_synthetic(100_000, 0.4, sigma, 11).unwrap();
        let s = ds.sensitive().unwrap();
        let picked: Vec<f64> = (0..ds.len())
            .filter(|&i| s.rows[i][0] == "1" && s.rows[i][1] == "1" && ds.label(i) == 1.0)
            .map(|i| ds.row(i)[0])
            .collect();
        let count = picked.len() as f64;
        let mean = picked.iter().sum::<f64>() / count;
        assert!((mean - 1.4).abs() <= 3.0 * sigma / count.sqrt(), "mean {mean}");
    }

    #[test]
    fn bit_identical_for_same_seed() {
        let a = gen_synthetic(500, 0.4, 0.3, 8).unwrap();
        let b = gen_synthetic(500, 0.4, 0.3, 8).unwrap();
        let bits = |d: &Dataset| d.features().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.labels(), b.labels());
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(gen_synthetic(0, 0.4, 0.3, 1).is_err());
        assert!(gen_synthetic(10, 0.4, 0.0, 1).is_err());
        assert!(gen_synthetic(10, 0.4, -1.0, 1).is_err());
    }
}
