//! Law of the reweighted uncontrolled state against the optimally
//! controlled state.
//!
//! Uncontrolled paths get weight `Θ_T/u(t,x)` with
//! `Θ_T = e^{−½∫f − ½g(Z_T)}·1{T < τ_D}`; their time-`s` marginal must match
//! the time-`s` marginal of the controlled state stopped on entering `D`.
//! The weights are self-normalised before the Kolmogorov–Smirnov distance
//! is taken.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{derive_seed, walk, NoiseStream, TimeGrid, WalkSpec};
use crate::error::{Error, Result};
use crate::estimator::{McConfig, ProblemSpec};
use crate::parallel::map_paths;
use crate::policy::{FeedbackPolicy, UFunction};

use super::ks::weighted_ks_distance;

const LANE_WEIGHTED: u64 = 0x5a;
const LANE_CONTROLLED: u64 = 0x58;
const LANE_CALIBRATION: u64 = 0xca;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawCheckConfig {
    /// Same-law replicates used to calibrate the threshold.
    pub calibration_replicates: usize,
    /// Quantile of the same-law distances taken as the threshold.
    pub quantile: f64,
    /// Smallest acceptable effective sample size of the weighted ensemble.
    pub min_ess: f64,
}

impl Default for LawCheckConfig {
    fn default() -> Self {
        Self {
            calibration_replicates: 200,
            quantile: 0.99,
            min_ess: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LawReport {
    pub s: f64,
    /// Largest per-coordinate distance.
    pub ks: f64,
    pub threshold: f64,
    pub passed: bool,
    /// `(Σw)²/Σw²`.
    pub effective_sample_size: f64,
    pub n_weighted: usize,
    pub n_controlled: usize,
    /// Controlled paths stopped on entering `D` before `s`.
    pub controlled_violations: usize,
    pub clamp_activations: u64,
}

/// Threshold for the distance between a sample with the given weights and
/// an unweighted sample of size `n_plain` drawn from the same continuous
/// law. The distance is invariant under monotone maps, so uniforms stand in
/// for the unknown law.
pub fn calibrate_threshold(weights: &[f64], n_plain: usize, law: &LawCheckConfig, seed: u64, workers: Option<usize>) -> Result<f64> {
    if law.calibration_replicates == 0 || !(law.quantile > 0.0 && law.quantile < 1.0) {
        return Err(Error::InvalidArgument("calibration needs replicates and a quantile in (0, 1)".into()));
    }
    let plain_w = vec![1.0; n_plain];
    let draws: Vec<Result<f64>> = map_paths(law.calibration_replicates, workers, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[LANE_CALIBRATION, r]));
        let a: Vec<f64> = weights.iter().map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..n_plain).map(|_| rng.random::<f64>()).collect();
        weighted_ks_distance(&a, weights, &b, &plain_w)
    });
    let mut draws = draws.into_iter().collect::<Result<Vec<f64>>>()?;
    draws.sort_unstable_by(f64::total_cmp);
    let k = ((law.quantile * draws.len() as f64).ceil() as usize).clamp(1, draws.len()) - 1;
    Ok(draws[k])
}

/// Compare the weighted uncontrolled ensemble at time `s` with the
/// controlled ensemble under `policy`, both from `(t, x)` with `n_paths`
/// paths each.
#[allow(clippy::too_many_arguments)]
pub fn htransform_law_check(
    problem: &ProblemSpec,
    u: &dyn UFunction,
    policy: &FeedbackPolicy,
    t: f64,
    x: &[f64],
    s: f64,
    cfg: &McConfig,
    law: &LawCheckConfig,
) -> Result<LawReport> {
    cfg.validate()?;
    problem.check_point(t, x)?;
    if problem.constraint().contains_unchecked(t, x) {
        return Err(Error::PointOutsideC { t, x: x.to_vec() });
    }
    let horizon = problem.horizon();
    if !(s > t && s < horizon) {
        return Err(Error::InvalidArgument(format!("law time {s} outside ({t}, {horizon})")));
    }
    let u0 = u.u(t, x);
    if !(u0 > 0.0) {
        return Err(Error::PointOutsideC { t, x: x.to_vec() });
    }
    let d = problem.dim();
    let grid = TimeGrid::new(t, horizon, cfg.dt)?;
    let k_s = grid.nearest_index(s).clamp(1, grid.n_steps() - 1);
    let s_grid = grid.time(k_s);

    let weighted_spec = WalkSpec {
        field: problem.field(),
        policy: None,
        constraint: Some(problem.constraint()),
        use_bridge: cfg.use_bridge,
        stop_on_kill: true,
        running_cost: Some(&problem.costs().running),
    };
    let seed_z = derive_seed(cfg.master_seed, &[LANE_WEIGHTED]);
    let weighted: Vec<Option<(Vec<f64>, f64)>> = map_paths(cfg.n_paths, cfg.workers, |i| {
        let mut state = x.to_vec();
        let mut at_s = vec![f64::NAN; d];
        let out = walk(&weighted_spec, &grid, &mut state, &NoiseStream::new(seed_z, i), |view| {
            if view.index == k_s {
                at_s.copy_from_slice(view.state);
            }
        })
        .ok()?;
        let w = if out.kill.killed {
            0.0
        } else {
            let g = problem.costs().terminal.eval(horizon, &state);
            (-0.5 * out.running_cost - 0.5 * g).exp() / u0
        };
        w.is_finite().then_some((at_s, w))
    });
    let (z_states, z_weights): (Vec<Vec<f64>>, Vec<f64>) = weighted.into_iter().flatten().filter(|(_, w)| *w > 0.0).unzip();
    let (sum_w, sum_w2) = z_weights.iter().fold((0.0, 0.0), |(a, b), w| (a + w, b + w * w));
    let ess = if sum_w2 > 0.0 { sum_w * sum_w / sum_w2 } else { 0.0 };
    if !(ess >= law.min_ess) {
        return Err(Error::DegenerateWeights { ess, min: law.min_ess });
    }

    let controlled_grid = TimeGrid::new(t, s_grid, cfg.dt)?;
    let controlled_spec = WalkSpec {
        field: problem.field(),
        policy: Some(policy),
        constraint: Some(problem.constraint()),
        use_bridge: false,
        stop_on_kill: true,
        running_cost: None,
    };
    let seed_x = derive_seed(cfg.master_seed, &[LANE_CONTROLLED]);
    let controlled: Vec<Option<(Vec<f64>, bool, usize)>> = map_paths(cfg.n_paths, cfg.workers, |i| {
        let mut state = x.to_vec();
        let out = walk(&controlled_spec, &controlled_grid, &mut state, &NoiseStream::new(seed_x, i), |_| {}).ok()?;
        Some((state, out.kill.killed, out.clamp_activations))
    });
    let controlled: Vec<_> = controlled.into_iter().flatten().collect();
    if controlled.is_empty() {
        return Err(Error::AllPathsNonFinite { n_paths: cfg.n_paths });
    }
    let plain_w = vec![1.0; controlled.len()];
    let mut ks = 0.0f64;
    for i in 0..d {
        let a: Vec<f64> = z_states.iter().map(|z| z[i]).collect();
        let b: Vec<f64> = controlled.iter().map(|c| c.0[i]).collect();
        ks = ks.max(weighted_ks_distance(&a, &z_weights, &b, &plain_w)?);
    }
    // per-coordinate threshold at a Bonferroni-adjusted level
    let per_coord = LawCheckConfig {
        quantile: 1.0 - (1.0 - law.quantile) / d as f64,
        ..*law
    };
    let threshold = calibrate_threshold(&z_weights, controlled.len(), &per_coord, cfg.master_seed, cfg.workers)?;
    Ok(LawReport {
        s: s_grid,
        ks,
        threshold,
        passed: ks <= threshold,
        effective_sample_size: ess,
        n_weighted: z_weights.len(),
        n_controlled: controlled.len(),
        controlled_violations: controlled.iter().filter(|c| c.1).count(),
        clamp_activations: controlled.iter().map(|c| c.2 as u64).sum(),
    })
}
