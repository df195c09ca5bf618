//! Gradient diagnostics: tape gradients of the meta-policy log-density
//! against central differences, and the Monte Carlo policy gradient against
//! differences of a quadrature-evaluated objective on a one-step instance.

use crate::dp::{evaluate_from, ObservationPolicy, RewardTarget};
use crate::env::{LocalObservation, OwnClass};
use crate::error::{Error, Result};
use crate::graph::{Decoration, Graph};
use crate::policy::{LocalPolicyParams, MetaPolicy, ObservationMode};
use crate::rl::{baselines, collect_batch, reinforce_gradient, Baseline, DepthSchedule, TrainConfig, TrainEnv};

#[derive(Clone, Debug, PartialEq)]
pub struct BlockCheck {
    pub name: String,
    pub autodiff_norm: f64,
    /// `‖autodiff − fd‖ / max(‖fd‖, ‖autodiff‖)` over the block; zero when
    /// both vanish.
    pub rel_error: f64,
}

fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    d / (norm(a) * norm(b))
}

/// Per-block comparison of `∇_θ log π(ψ | state)` with central differences
/// of step `h`.
pub fn log_density_check(meta: &MetaPolicy, g: &Graph, deco: &Decoration, passes: usize, psi: &[f64], h: f64) -> Result<Vec<BlockCheck>> {
    let (_, grad) = meta.log_density_grad(g, deco, passes, psi)?;
    let flat = meta.mpnn.flatten();
    let mut probe = meta.clone();
    let mut fd = vec![0.0; flat.len()];
    for i in 0..flat.len() {
        let mut x = flat.clone();
        x[i] = flat[i] + h;
        probe.mpnn.set_flat(&x)?;
        let up = probe.log_density(g, deco, passes, psi)?;
        x[i] = flat[i] - h;
        probe.mpnn.set_flat(&x)?;
        let down = probe.log_density(g, deco, passes, psi)?;
        fd[i] = (up - down) / (2.0 * h);
    }
    Ok(meta
        .mpnn
        .block_ranges()
        .into_iter()
        .map(|(name, r)| BlockCheck {
            name: name.to_string(),
            autodiff_norm: norm(&grad[r.clone()]),
            rel_error: rel_error(&grad[r.clone()], &fd[r]),
        })
        .collect())
}

/// Gauss–Hermite nodes and weights for `∫ f(x) e^{−x²} dx`, by Newton
/// iteration on the orthonormal recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let m = n.div_ceil(2);
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j + 1) as f64).sqrt() * p2 - (j as f64 / (j + 1) as f64).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Result of the one-step gradient comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyGradientCheck {
    pub objective: f64,
    pub monte_carlo: Vec<f64>,
    pub finite_difference: Vec<f64>,
    pub cosine: f64,
}

/// Expected return over `ψ ~ N(mean, σ²)` with only the logits of the
/// `varied` observation class integrated and every other coordinate pinned
/// at its mean.
pub fn quadrature_objective(
    g: &Graph,
    x0: &Decoration,
    env: &TrainEnv,
    mean: &[f64],
    sigma: f64,
    mode: ObservationMode,
    varied: usize,
    rule: &(Vec<f64>, Vec<f64>),
) -> Result<f64> {
    let (nodes, weights) = rule;
    let norm = std::f64::consts::PI.powf(-1.5);
    let mut terms = Vec::with_capacity(nodes.len().pow(3));
    let mut psi = mean.to_vec();
    for (a, wa) in nodes.iter().zip(weights) {
        for (b, wb) in nodes.iter().zip(weights) {
            for (c, wc) in nodes.iter().zip(weights) {
                for (k, z) in [a, b, c].into_iter().enumerate() {
                    psi[3 * varied + k] = mean[3 * varied + k] + sigma * std::f64::consts::SQRT_2 * z;
                }
                let local = LocalPolicyParams::new(psi.clone(), mode)?;
                let pol = ObservationPolicy::from_params(&local);
                let v = evaluate_from(g, &pol, &env.params, env.params.horizon, x0, RewardTarget::Mean)?;
                terms.push(wa * wb * wc * norm * v);
            }
        }
    }
    terms.sort_by(f64::total_cmp);
    Ok(terms.into_iter().sum())
}

/// One-step instance from a fixed start whose susceptible nodes all see an
/// infected neighbor: Monte Carlo REINFORCE gradient without a baseline over
/// `episodes` episodes, against central differences (step `h`) of the
/// quadrature objective with `order` nodes per axis.
pub fn one_step_gradient_check(meta: &MetaPolicy, env: &TrainEnv, x0: &Decoration, episodes: usize, seed: u64, order: usize, h: f64) -> Result<PolicyGradientCheck> {
    if env.params.horizon != 1 {
        return Err(Error::Precondition("the quadrature check needs a one-step horizon".into()));
    }
    x0.check_len(&env.graph)?;
    let varied = LocalObservation {
        own: OwnClass::S,
        infected_neighbor: true,
    };
    let varied = meta.mode.class_of(varied);
    let config = TrainConfig {
        episodes_per_batch: episodes,
        baseline: Baseline::None,
        depth: DepthSchedule::Horizon,
        seed,
        ..TrainConfig::default()
    };
    let batch = collect_batch(meta, env, &config, 0)?;
    let base = baselines(&batch, env, Baseline::None, None, 1.0)?;
    let (mc, _) = reinforce_gradient(meta, env, &batch, &base, 1.0)?;

    let rule = gauss_hermite(order);
    let g = &env.graph;
    let objective_at = |m: &MetaPolicy| -> Result<f64> {
        let mean = m.mean(g, x0, 1)?;
        quadrature_objective(g, x0, env, &mean, m.sigma, m.mode, varied, &rule)
    };
    let objective = objective_at(meta)?;
    let flat = meta.mpnn.flatten();
    let mut probe = meta.clone();
    let mut fd = vec![0.0; flat.len()];
    for i in 0..flat.len() {
        let mut x = flat.clone();
        x[i] = flat[i] + h;
        probe.mpnn.set_flat(&x)?;
        let up = objective_at(&probe)?;
        x[i] = flat[i] - h;
        probe.mpnn.set_flat(&x)?;
        let down = objective_at(&probe)?;
        fd[i] = (up - down) / (2.0 * h);
    }
    Ok(PolicyGradientCheck {
        objective,
        cosine: cosine(&mc, &fd),
        monte_carlo: mc,
        finite_difference: fd,
    })
}
