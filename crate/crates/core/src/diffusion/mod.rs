//! Noise schedule, closed-form forward noising, and the reverse sampling
//! step. Training and per-user generation live in the submodules.

mod predict;
mod train;

pub use predict::{predict_ensemble, predict_matrix, predict_user, predict_user_normalized};
pub use train::{train, LossHistory, TrainConfig, TrainOutcome};

use crate::error::CoreError;
use crate::nn::sigmoid;
use crate::Result;

/// Per-step noise levels and derived quantities for T diffusion steps.
/// Steps are 1-based in the API; internally arrays are indexed by t-1.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    pub t_max: usize,
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
    /// Posterior variance sigma^2(t); sigma^2(1) = 0 since alpha_bar_0 := 1.
    pub posterior_var: Vec<f64>,
}

/// beta_t = sigmoid(u_t) * scale + beta_min with u_t linearly spaced on
/// [-6, 6]. For T = 1 the single beta sits at the lower endpoint.
pub fn build_schedule(t_max: usize, variance_scale: f64, beta_min: f64) -> Result<NoiseSchedule> {
    if t_max < 1 {
        return Err(CoreError::InvalidArgument(
            "schedule needs T >= 1".to_string(),
        ));
    }
    if variance_scale <= 0.0 {
        return Err(CoreError::InvalidArgument(
            "variance scale must be positive".to_string(),
        ));
    }
    let betas: Vec<f64> = (0..t_max)
        .map(|i| {
            let u = if t_max == 1 {
                -6.0
            } else {
                -6.0 + 12.0 * i as f64 / (t_max - 1) as f64
            };
            sigmoid(u) * variance_scale + beta_min
        })
        .collect();
    if betas.iter().any(|&b| b >= 1.0 || b <= 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "schedule parameters produce beta outside (0,1): scale={variance_scale}, beta_min={beta_min}"
        )));
    }
    let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bars = Vec::with_capacity(t_max);
    let mut prod = 1.0;
    for a in &alphas {
        prod *= a;
        alpha_bars.push(prod);
    }
    let posterior_var: Vec<f64> = (0..t_max)
        .map(|i| {
            let prev_bar = if i == 0 { 1.0 } else { alpha_bars[i - 1] };
            (1.0 - alphas[i]) * (1.0 - prev_bar) / (1.0 - alpha_bars[i])
        })
        .collect();
    Ok(NoiseSchedule {
        t_max,
        betas,
        alphas,
        alpha_bars,
        posterior_var,
    })
}

impl NoiseSchedule {
    fn check_step(&self, t: usize) -> Result<()> {
        if t < 1 || t > self.t_max {
            return Err(CoreError::InvalidArgument(format!(
                "diffusion step {t} out of range 1..={}",
                self.t_max
            )));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.posterior_var[t - 1].sqrt()
    }
}

/// Closed-form forward sample: x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
pub fn q_sample(x0: &[f64], t: usize, eps: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
    sched.check_step(t)?;
    if x0.len() != eps.len() {
        return Err(CoreError::DimensionMismatch {
            context: "q_sample".to_string(),
            expected: x0.len(),
            actual: eps.len(),
        });
    }
    let abar = sched.alpha_bar(t);
    let c0 = abar.sqrt();
    let ce = (1.0 - abar).sqrt();
    Ok(x0.iter().zip(eps).map(|(x, e)| c0 * x + ce * e).collect())
}

/// One reverse step:
/// x_{t-1} = (x_t - (1 - a_t)/sqrt(1 - abar_t) * eps_hat) / sqrt(a_t) + sigma_t z.
/// The noise term is suppressed at t = 1.
pub fn reverse_step(
    x_t: &[f64],
    t: usize,
    eps_hat: &[f64],
    z: &[f64],
    sched: &NoiseSchedule,
) -> Result<Vec<f64>> {
    sched.check_step(t)?;
    if x_t.len() != eps_hat.len() || x_t.len() != z.len() {
        return Err(CoreError::DimensionMismatch {
            context: "reverse_step".to_string(),
            expected: x_t.len(),
            actual: eps_hat.len().min(z.len()),
        });
    }
    let a = sched.alpha(t);
    let abar = sched.alpha_bar(t);
    let coef = (1.0 - a) / (1.0 - abar).sqrt();
    let inv_sqrt_a = 1.0 / a.sqrt();
    let sigma = if t == 1 { 0.0 } else { sched.sigma(t) };
    Ok(x_t
        .iter()
        .zip(eps_hat)
        .zip(z)
        .map(|((x, e), zi)| inv_sqrt_a * (x - coef * e) + sigma * zi)
        .collect())
}
