//! One-dimensional variational Bayesian Gaussian mixture.
//!
//! Symmetric Dirichlet prior on the weights with a small concentration, so
//! superfluous components drain to near-zero weight; Gaussian-Wishart prior
//! on each component centred on the data mean with the data variance as the
//! scale. Initial responsibilities come from a 1-d k-means seeded at
//! quantiles, which keeps the fit deterministic.

use statrs::function::gamma::{digamma, ln_gamma};

use super::numeric::Mode;
use crate::stats;

#[derive(Clone, Copy, Debug)]
pub struct VgmOptions {
    pub max_modes: usize,
    pub concentration: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for VgmOptions {
    fn default() -> Self {
        Self {
            max_modes: 10,
            concentration: 1e-3,
            max_iter: 200,
            tol: 1e-4,
        }
    }
}

struct Posterior {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    mean: Vec<f64>,
    scale_inv: Vec<f64>,
    dof: Vec<f64>,
}

fn kmeans_init(xs: &[f64], k: usize) -> Vec<usize> {
    let sorted = stats::sorted(xs);
    let mut centers: Vec<f64> = (0..k)
        .map(|i| stats::quantile_sorted(&sorted, (i as f64 + 0.5) / k as f64))
        .collect();
    let mut labels = vec![0usize; xs.len()];
    for _ in 0..50 {
        let mut changed = false;
        for (x, l) in xs.iter().zip(labels.iter_mut()) {
            let best = (0..k)
                .min_by(|&a, &b| (x - centers[a]).abs().total_cmp(&(x - centers[b]).abs()))
                .unwrap();
            if best != *l {
                *l = best;
                changed = true;
            }
        }
        let mut sum = vec![0.0; k];
        let mut cnt = vec![0usize; k];
        for (x, &l) in xs.iter().zip(&labels) {
            sum[l] += x;
            cnt[l] += 1;
        }
        for j in 0..k {
            if cnt[j] > 0 {
                centers[j] = sum[j] / cnt[j] as f64;
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

struct Fit {
    post: Posterior,
    elbo: f64,
}

struct Prior {
    concentration: f64,
    mean: f64,
    beta: f64,
    dof: f64,
    scale_inv: f64,
}

/// `ln B(W, ν)` of the one-dimensional Wishart normaliser, with `W = 1/scale_inv`.
fn ln_wishart_norm(scale_inv: f64, dof: f64) -> f64 {
    0.5 * dof * scale_inv.ln() - 0.5 * dof * std::f64::consts::LN_2 - ln_gamma(0.5 * dof)
}

fn m_step(xs: &[f64], resp: &[f64], k: usize, prior: &Prior) -> (Posterior, Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = xs.len();
    let tiny = 10.0 * f64::EPSILON;
    let mut nk = vec![tiny; k];
    let mut sx = vec![0.0; k];
    for i in 0..n {
        for j in 0..k {
            nk[j] += resp[i * k + j];
            sx[j] += resp[i * k + j] * xs[i];
        }
    }
    let xbar: Vec<f64> = (0..k).map(|j| sx[j] / nk[j]).collect();
    let mut sk = vec![0.0; k];
    for i in 0..n {
        for j in 0..k {
            sk[j] += resp[i * k + j] * (xs[i] - xbar[j]).powi(2);
        }
    }
    let mut post = Posterior {
        alpha: vec![0.0; k],
        beta: vec![0.0; k],
        mean: vec![0.0; k],
        scale_inv: vec![0.0; k],
        dof: vec![0.0; k],
    };
    for j in 0..k {
        post.alpha[j] = prior.concentration + nk[j];
        post.beta[j] = prior.beta + nk[j];
        post.mean[j] = (prior.beta * prior.mean + nk[j] * xbar[j]) / post.beta[j];
        post.scale_inv[j] = prior.scale_inv
            + sk[j]
            + prior.beta * nk[j] / post.beta[j] * (xbar[j] - prior.mean).powi(2);
        post.dof[j] = prior.dof + nk[j];
    }
    (post, nk, xbar, sk)
}

fn expectations(post: &Posterior) -> (Vec<f64>, Vec<f64>) {
    let k = post.alpha.len();
    let alpha_sum: f64 = post.alpha.iter().sum();
    let log_weight = post.alpha.iter().map(|&a| digamma(a) - digamma(alpha_sum)).collect();
    let log_prec = (0..k)
        .map(|j| digamma(post.dof[j] / 2.0) + std::f64::consts::LN_2 - post.scale_inv[j].ln())
        .collect();
    (log_weight, log_prec)
}

/// Evidence lower bound of the current variational posterior.
fn elbo(
    post: &Posterior,
    resp: &[f64],
    nk: &[f64],
    xbar: &[f64],
    sk: &[f64],
    prior: &Prior,
) -> f64 {
    use std::f64::consts::PI;
    let k = nk.len();
    let (ln_pi, ln_lam) = expectations(post);
    let mut total = 0.0;
    for j in 0..k {
        let w = 1.0 / post.scale_inv[j];
        let s = sk[j] / nk[j];
        // E[ln p(X | Z, mu, Lambda)]
        total += 0.5
            * nk[j]
            * (ln_lam[j]
                - 1.0 / post.beta[j]
                - post.dof[j] * s * w
                - post.dof[j] * w * (xbar[j] - post.mean[j]).powi(2)
                - (2.0 * PI).ln());
        // E[ln p(mu, Lambda)]
        total += 0.5
            * ((prior.beta / (2.0 * PI)).ln() + ln_lam[j]
                - prior.beta / post.beta[j]
                - prior.beta * post.dof[j] * w * (post.mean[j] - prior.mean).powi(2));
        total += ln_wishart_norm(prior.scale_inv, prior.dof) + 0.5 * (prior.dof - 2.0) * ln_lam[j]
            - 0.5 * post.dof[j] * prior.scale_inv * w;
        // - E[ln q(mu, Lambda)]
        let entropy_lam = -ln_wishart_norm(post.scale_inv[j], post.dof[j])
            - 0.5 * (post.dof[j] - 2.0) * ln_lam[j]
            + 0.5 * post.dof[j];
        total -= 0.5 * ln_lam[j] + 0.5 * (post.beta[j] / (2.0 * PI)).ln() - 0.5 - entropy_lam;
        // E[ln p(pi)] - E[ln q(pi)]
        total += (prior.concentration - post.alpha[j]) * ln_pi[j];
        total += ln_gamma(post.alpha[j]) - ln_gamma(prior.concentration);
    }
    let alpha_sum: f64 = post.alpha.iter().sum();
    total += ln_gamma(prior.concentration * k as f64) - ln_gamma(alpha_sum);
    // E[ln p(Z | pi)] - E[ln q(Z)]
    for (i, r) in resp.iter().enumerate() {
        let j = i % k;
        total += r * ln_pi[j];
        if *r > 0.0 {
            total -= r * r.ln();
        }
    }
    total
}

/// Runs the updates with `k` live components, then scores the result as a
/// `total`-component mixture.
fn run(xs: &[f64], k: usize, total: usize, init: &[usize], prior: &Prior, opts: &VgmOptions) -> Fit {
    let n = xs.len();
    let mut resp = vec![0.0; n * k];
    for (i, &l) in init.iter().enumerate() {
        resp[i * k + l] = 1.0;
    }
    let (mut post, mut nk, _, _) = m_step(xs, &resp, k, prior);
    let mut row = vec![0.0; k];
    for _ in 0..opts.max_iter {
        let (log_weight, log_prec) = expectations(&post);
        for i in 0..n {
            for j in 0..k {
                let quad = 1.0 / post.beta[j]
                    + post.dof[j] * (xs[i] - post.mean[j]).powi(2) / post.scale_inv[j];
                row[j] = log_weight[j] + 0.5 * log_prec[j] - 0.5 * quad;
            }
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|r| (r - mx).exp()).sum();
            for j in 0..k {
                resp[i * k + j] = (row[j] - mx).exp() / z;
            }
        }
        let (next, next_nk, _, _) = m_step(xs, &resp, k, prior);
        let shift = nk
            .iter()
            .zip(&next_nk)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        post = next;
        nk = next_nk;
        if shift < opts.tol * n as f64 {
            break;
        }
    }
    // Score in the full `total`-component model; the unused components
    // sit exactly at the prior.
    let mut padded = vec![0.0; n * total];
    for i in 0..n {
        padded[i * total..i * total + k].copy_from_slice(&resp[i * k..(i + 1) * k]);
    }
    let (post, nk, xbar, sk) = m_step(xs, &padded, total, prior);
    let elbo = elbo(&post, &padded, &nk, &xbar, &sk, prior);
    Fit { post, elbo }
}

/// Fits the mixture and returns every component (unpruned), weights summing to 1.
///
/// The `K`-component model is fitted from several starting points (k-means
/// with 1..=4 clusters and with `K` clusters, the remaining components empty)
/// and the solution with the highest evidence lower bound is kept.
pub fn fit_vgm(xs: &[f64], opts: &VgmOptions) -> Vec<Mode> {
    let k = opts.max_modes.min(stats::distinct_count(xs)).max(1);
    let prior = Prior {
        concentration: opts.concentration,
        mean: stats::mean(xs),
        beta: 1.0,
        dof: 1.0,
        scale_inv: stats::variance(xs).max(1e-12),
    };
    let best = (1..=k.min(4))
        .chain((k > 4).then_some(k))
        .map(|start| run(xs, start, k, &kmeans_init(xs, start), &prior, opts))
        .max_by(|a, b| a.elbo.total_cmp(&b.elbo))
        .expect("at least one start");
    let post = best.post;
    let alpha_sum: f64 = post.alpha.iter().sum();
    (0..k)
        .map(|j| Mode {
            mean: post.mean[j],
            std: (post.scale_inv[j] / post.dof[j]).sqrt(),
            weight: post.alpha[j] / alpha_sum,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn lower_bound_never_decreases_under_updates() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Normal::new(0.0, 1.0).unwrap();
        let b = Normal::new(6.0, 2.0).unwrap();
        let xs: Vec<f64> = (0..300)
            .map(|i| if i % 3 == 0 { b.sample(&mut rng) } else { a.sample(&mut rng) })
            .collect();
        let prior = Prior {
            concentration: 1e-3,
            mean: stats::mean(&xs),
            beta: 1.0,
            dof: 1.0,
            scale_inv: stats::variance(&xs),
        };
        let init = kmeans_init(&xs, 4);
        let mut last = f64::NEG_INFINITY;
        for iters in [1, 2, 5, 10, 50, 200] {
            let opts = VgmOptions {
                max_modes: 5,
                max_iter: iters,
                tol: 0.0,
                ..VgmOptions::default()
            };
            let fit = run(&xs, 4, 5, &init, &prior, &opts);
            assert!(fit.elbo >= last - 1e-8, "{} after {} < {}", fit.elbo, iters, last);
            last = fit.elbo;
        }
    }
}
