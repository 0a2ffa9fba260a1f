use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vgm::{fit_vgm, VgmOptions};
use crate::error::{Error, Result};
use crate::stats;

/// Sample skewness above which a column is treated as long-tailed and log transformed.
pub const LOG_SKEW_THRESHOLD: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub mean: f64,
    pub std: f64,
    pub weight: f64,
}

impl Mode {
    fn log_density(&self, y: f64) -> f64 {
        let z = (y - self.mean) / self.std;
        self.weight.ln() - self.std.ln() - 0.5 * z * z
    }
}

/// Per-numeric-column transform: optional `ln(1 + v - shift)` followed by
/// mode-specific normalisation against the retained mixture modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericTransformer {
    pub log_applied: bool,
    pub log_shift: f64,
    pub modes: Vec<Mode>,
}

impl NumericTransformer {
    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    fn to_latent(&self, v: f64) -> f64 {
        if self.log_applied {
            (v - self.log_shift).max(0.0).ln_1p()
        } else {
            v
        }
    }

    fn latent_to_value(&self, y: f64) -> f64 {
        if self.log_applied {
            y.exp_m1() + self.log_shift
        } else {
            y
        }
    }

    /// Posterior mode probabilities for raw value `v`.
    pub fn responsibilities(&self, v: f64) -> Vec<f64> {
        let y = self.to_latent(v);
        let logs: Vec<f64> = self.modes.iter().map(|m| m.log_density(y)).collect();
        let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - mx).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    }

    /// Samples a mode from the posterior and returns it with the scaled offset.
    ///
    /// Sampling is restricted to modes whose ±4σ window contains the value;
    /// when no window does, the nearest mode in σ units is used and the
    /// offset is clipped.
    pub fn encode_value<R: Rng + ?Sized>(&self, v: f64, rng: &mut R) -> (usize, f64) {
        let y = self.to_latent(v);
        let z: Vec<f64> = self
            .modes
            .iter()
            .map(|m| (y - m.mean) / (4.0 * m.std))
            .collect();
        let mut probs = self.responsibilities(v);
        for (p, zk) in probs.iter_mut().zip(&z) {
            if zk.abs() > 1.0 {
                *p = 0.0;
            }
        }
        let total: f64 = probs.iter().sum();
        let mode = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = probs.iter().rposition(|&p| p > 0.0).unwrap();
            for (k, p) in probs.iter().enumerate() {
                if *p > 0.0 && u < *p {
                    pick = k;
                    break;
                }
                u -= p;
            }
            pick
        } else {
            (0..z.len())
                .min_by(|&a, &b| z[a].abs().total_cmp(&z[b].abs()))
                .unwrap()
        };
        (mode, z[mode].clamp(-1.0, 1.0))
    }

    pub fn decode_value(&self, mode: usize, scalar: f64) -> f64 {
        let m = &self.modes[mode];
        self.latent_to_value(m.mean + 4.0 * m.std * scalar.clamp(-1.0, 1.0))
    }
}

/// Fits the transform for one numeric column.
pub fn fit_numeric_transformer(
    values: &[f64],
    max_modes: usize,
    prune_weight: f64,
) -> Result<NumericTransformer> {
    if max_modes == 0 {
        return Err(Error::NoModes);
    }
    if stats::distinct_count(values) < 2 {
        return Err(Error::ConstantColumn);
    }
    let log_applied = stats::skewness(values) > LOG_SKEW_THRESHOLD;
    let log_shift = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut t = NumericTransformer {
        log_applied,
        log_shift,
        modes: Vec::new(),
    };
    let latent: Vec<f64> = values.iter().map(|&v| t.to_latent(v)).collect();
    let opts = VgmOptions {
        max_modes,
        ..VgmOptions::default()
    };
    let all = fit_vgm(&latent, &opts);
    let mut modes: Vec<Mode> = all.iter().copied().filter(|m| m.weight > prune_weight).collect();
    if modes.is_empty() {
        // Only reachable with a prune threshold above 1/max_modes.
        let best = all.iter().max_by(|a, b| a.weight.total_cmp(&b.weight)).unwrap();
        modes.push(*best);
    }
    modes.sort_by(|a, b| a.mean.total_cmp(&b.mean));
    t.modes = modes;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn sample(seed: u64, parts: &[(f64, usize)]) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for &(mu, n) in parts {
            let d = Normal::new(mu, 1.0).unwrap();
            out.extend((0..n).map(|_| d.sample(&mut rng)));
        }
        out
    }

    /// Plain maximum-likelihood EM with a fixed component count, started
    /// from the extremes of the data. Independent of the variational fit.
    fn em_oracle(xs: &[f64], k: usize) -> Vec<f64> {
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut mu: Vec<f64> = (0..k)
            .map(|j| lo + (hi - lo) * j as f64 / (k - 1).max(1) as f64)
            .collect();
        let mut var = vec![stats::variance(xs); k];
        let mut pi = vec![1.0 / k as f64; k];
        for _ in 0..500 {
            let mut nk = vec![0.0; k];
            let mut sx = vec![0.0; k];
            let mut sxx = vec![0.0; k];
            for &x in xs {
                let p: Vec<f64> = (0..k)
                    .map(|j| pi[j] / var[j].sqrt() * (-(x - mu[j]).powi(2) / (2.0 * var[j])).exp())
                    .collect();
                let z: f64 = p.iter().sum();
                for j in 0..k {
                    let r = p[j] / z;
                    nk[j] += r;
                    sx[j] += r * x;
                    sxx[j] += r * x * x;
                }
            }
            for j in 0..k {
                mu[j] = sx[j] / nk[j];
                var[j] = (sxx[j] / nk[j] - mu[j] * mu[j]).max(1e-9);
                pi[j] = nk[j] / xs.len() as f64;
            }
        }
        mu.sort_by(f64::total_cmp);
        mu
    }

    #[test]
    fn bimodal_column_keeps_two_modes() {
        let xs = sample(7, &[(0.0, 250), (100.0, 250)]);
        let t = fit_numeric_transformer(&xs, 10, 0.005).unwrap();
        assert!(!t.log_applied);
        assert_eq!(t.mode_count(), 2);
        let oracle = em_oracle(&xs, 2);
        for (m, o) in t.modes.iter().zip(&oracle) {
            assert!((m.mean - o).abs() < 0.5, "vgm {} vs em {}", m.mean, o);
        }
        assert!((t.modes[0].mean - 0.0).abs() < 0.5);
        assert!((t.modes[1].mean - 100.0).abs() < 0.5);
    }

    #[test]
    fn unimodal_column_keeps_one_mode() {
        for seed in 0..3 {
            let xs = sample(seed, &[(5.0, 500)]);
            let t = fit_numeric_transformer(&xs, 10, 0.005).unwrap();
            assert_eq!(t.mode_count(), 1, "seed {seed}: {:?}", t.modes);
            let oracle = em_oracle(&xs, 1);
            assert!((t.modes[0].mean - oracle[0]).abs() < 0.3);
            assert!((t.modes[0].mean - 5.0).abs() < 0.3);
        }
    }

    #[test]
    fn constant_column_is_rejected() {
        let err = fit_numeric_transformer(&[3.0, 3.0, 3.0], 10, 0.005).unwrap_err();
        assert_eq!(err.to_string(), "constant column: fewer than 2 distinct values");
    }

    #[test]
    fn weights_and_stds_are_valid() {
        let xs = sample(3, &[(0.0, 100), (10.0, 50), (30.0, 150)]);
        let t = fit_numeric_transformer(&xs, 10, 0.005).unwrap();
        let total: f64 = t.modes.iter().map(|m| m.weight).sum();
        assert!(total > 0.0 && total <= 1.0 + 1e-12);
        assert!(t.modes.iter().all(|m| m.std > 0.0 && m.weight > 0.005));
    }

    #[test]
    fn long_tail_column_is_log_transformed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = rand_distr::LogNormal::new(0.0, 1.5).unwrap();
        let xs: Vec<f64> = (0..1000).map(|_| d.sample(&mut rng)).collect();
        let t = fit_numeric_transformer(&xs, 10, 0.005).unwrap();
        assert!(t.log_applied);
        let mut r = ChaCha8Rng::seed_from_u64(2);
        for &v in &xs {
            let (k, s) = t.encode_value(v, &mut r);
            let back = t.decode_value(k, s);
            assert!((back - v).abs() <= 1e-6 * v.abs().max(1e-12), "{v} -> {back}");
        }
    }

    #[test]
    fn scalar_offsets() {
        let t = NumericTransformer {
            log_applied: false,
            log_shift: 0.0,
            modes: vec![Mode {
                mean: 3.0,
                std: 2.0,
                weight: 1.0,
            }],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(t.encode_value(3.0, &mut rng), (0, 0.0));
        assert_eq!(t.encode_value(3.0 + 2.0 * 2.0, &mut rng), (0, 0.5));
        assert_eq!(t.decode_value(0, 1.5), t.decode_value(0, 1.0));
    }

    #[test]
    fn mode_sampling_is_seed_deterministic() {
        let xs = sample(11, &[(0.0, 200), (2.5, 200)]);
        let t = fit_numeric_transformer(&xs, 10, 0.005).unwrap();
        for &v in xs.iter().take(50) {
            let a = t.encode_value(v, &mut ChaCha8Rng::seed_from_u64(99));
            let b = t.encode_value(v, &mut ChaCha8Rng::seed_from_u64(99));
            assert_eq!(a, b);
        }
    }
}
