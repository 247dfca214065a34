//! Greedy information-seeking choice of the next steering angle.
//!
//! The particles are pushed one step through the transition kernel, and for
//! each candidate angle the noiseless expected profiles of those hypotheses
//! are stacked. The action score is the Gaussian entropy of the predicted
//! observation, `½ logdet(Σ̂ + σ_y² I + ε I)` with the `(N_Θ/2) ln(2πe)`
//! constant dropped. Observation noise enters analytically through `σ_y² I`,
//! so scoring itself consumes no randomness.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::filter::ParticleSet;
use crate::model::{self, AgentConfig, AngleGrid, BeamModelParams};
use crate::{Error, Result};

/// Scores closer than this are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionScore {
    pub action: f64,
    pub entropy: f64,
    /// 1 for the selected action, increasing with worse scores.
    pub rank: usize,
}

/// Future states drawn once per planning step, with the weights they carry.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypotheses {
    pub states: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ActionSelection {
    pub action: f64,
    /// One entry per admissible action, in action-set order.
    pub scores: Vec<ActionScore>,
}

pub fn propagate_hypotheses<R: Rng + ?Sized>(
    particles: &ParticleSet,
    sigma_x: f64,
    rng: &mut R,
) -> Hypotheses {
    Hypotheses {
        states: particles
            .positions()
            .iter()
            .map(|&x| model::sample_transition(x, sigma_x, rng))
            .collect(),
        weights: particles.weights().to_vec(),
    }
}

/// Row `i` is `f_y(states[i]; a)`.
pub fn hypothetical_means(
    states: &[f64],
    a: f64,
    grid: &AngleGrid,
    beam: &BeamModelParams,
) -> Result<DMatrix<f64>> {
    if states.iter().any(|s| !s.is_finite()) || !a.is_finite() {
        return Err(Error::invalid("hypotheses and action must be finite"));
    }
    let angles = grid.angles();
    let mut row = Vec::with_capacity(angles.len());
    let mut means = DMatrix::zeros(states.len(), angles.len());
    for (i, &x) in states.iter().enumerate() {
        model::response_into(x, a, angles, beam, &mut row);
        for (j, &v) in row.iter().enumerate() {
            means[(i, j)] = v;
        }
    }
    Ok(means)
}

/// `½ logdet(Σ̂ + (σ_y² + ε) I)` for the weighted sample covariance `Σ̂` of
/// the rows of `means`.
pub fn marginal_entropy_score(
    means: &DMatrix<f64>,
    weights: &[f64],
    sigma_y: f64,
    cov_jitter: f64,
) -> Result<f64> {
    let n = means.nrows();
    if n < 2 {
        return Err(Error::invalid("need at least two hypotheses"));
    }
    if weights.len() != n {
        return Err(Error::Shape {
            expected: n,
            actual: weights.len(),
        });
    }
    let cov = weighted_covariance(means, weights);
    half_log_det(cov, sigma_y * sigma_y + cov_jitter)
}

fn weighted_covariance(rows: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let w = DVector::from_column_slice(weights);
    let mean = rows.tr_mul(&w);
    let mut centered = rows.clone();
    for (i, mut row) in centered.row_iter_mut().enumerate() {
        let s = weights[i].max(0.0).sqrt();
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - mean[j]) * s;
        }
    }
    centered.tr_mul(&centered)
}

fn half_log_det(mut cov: DMatrix<f64>, diag_load: f64) -> Result<f64> {
    for j in 0..cov.nrows() {
        cov[(j, j)] += diag_load;
    }
    let (min_d, max_d) = cov
        .diagonal()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &d| (l.min(d), h.max(d)));
    let chol = cov.cholesky().ok_or_else(|| {
        Error::Numerical(format!(
            "covariance is not positive definite (diagonal range [{min_d:e}, {max_d:e}])"
        ))
    })?;
    let half = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    if !half.is_finite() {
        return Err(Error::Numerical(format!("log-determinant is {half}")));
    }
    Ok(half)
}

/// Orders actions best-first: higher entropy, then smaller |angle|, then the
/// more negative angle.
fn preference(a: &ActionScore, b: &ActionScore) -> Ordering {
    if (a.entropy - b.entropy).abs() > TIE_TOLERANCE {
        return b.entropy.partial_cmp(&a.entropy).unwrap_or(Ordering::Equal);
    }
    a.action
        .abs()
        .partial_cmp(&b.action.abs())
        .unwrap_or(Ordering::Equal)
        .then(a.action.partial_cmp(&b.action).unwrap_or(Ordering::Equal))
}

/// Picks the action with the largest predicted-observation entropy.
///
/// All actions are scored against one shared hypothesis set. With `parallel`
/// the per-action scoring is spread over the rayon pool; the result is
/// bit-identical to the sequential path.
pub fn select_action<R: Rng + ?Sized>(
    particles: &ParticleSet,
    config: &AgentConfig,
    rng: &mut R,
    parallel: bool,
) -> Result<ActionSelection> {
    let actions = config.actions.angles();
    if actions.is_empty() {
        return Err(Error::invalid("action set is empty"));
    }
    let hyp = propagate_hypotheses(particles, config.sigma_x, rng);
    select_from_hypotheses(&hyp, config, parallel)
}

/// Scores and ranks the actions for an already propagated hypothesis set.
pub fn select_from_hypotheses(hyp: &Hypotheses, config: &AgentConfig, parallel: bool) -> Result<ActionSelection> {
    let actions = config.actions.angles();
    if actions.is_empty() {
        return Err(Error::invalid("action set is empty"));
    }
    let entropies = score_actions(hyp, config, parallel)?;
    Ok(rank(actions, &entropies))
}

/// Scores every admissible action for a fixed hypothesis set.
///
/// The rows for action `a` factor as `g_a ∘ t_i`, with `g_a` the beam profile
/// and `t_i` the target profile of hypothesis `i`, so `Σ̂(a) = D_a C D_a`
/// where `C` is the weighted covariance of the target profiles. `C` is
/// computed once and shared by all actions.
pub fn score_actions(hyp: &Hypotheses, config: &AgentConfig, parallel: bool) -> Result<Vec<f64>> {
    if hyp.states.len() < 2 {
        return Err(Error::invalid("need at least two hypotheses"));
    }
    if hyp.states.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("hypotheses must be finite"));
    }
    let angles = config.grid.angles();
    let hw = config.beam.hw;
    let target = DMatrix::from_fn(hyp.states.len(), angles.len(), |i, j| {
        let d = angles[j] - hyp.states[i];
        (-d * d / (2.0 * hw)).exp()
    });
    let base = weighted_covariance(&target, &hyp.weights);
    let load = config.sigma_y * config.sigma_y + config.cov_jitter;

    let score_one = |&a: &f64| -> Result<f64> {
        let g = model::beam_profile(a, &config.grid, config.beam.bw);
        let cov = DMatrix::from_fn(angles.len(), angles.len(), |r, c| g[r] * base[(r, c)] * g[c]);
        half_log_det(cov, load)
    };
    let actions = config.actions.angles();
    if parallel {
        actions.par_iter().map(score_one).collect()
    } else {
        actions.iter().map(score_one).collect()
    }
}

fn rank(actions: &[f64], entropies: &[f64]) -> ActionSelection {
    let mut scores: Vec<ActionScore> = actions
        .iter()
        .zip(entropies)
        .map(|(&action, &entropy)| ActionScore {
            action,
            entropy,
            rank: 0,
        })
        .collect();
    let mut best = 0;
    for i in 1..scores.len() {
        if preference(&scores[i], &scores[best]) == Ordering::Less {
            best = i;
        }
    }
    // The tolerant comparison is not transitive, so the remaining ranks use
    // the exact total order.
    let mut order: Vec<usize> = (0..scores.len()).filter(|&i| i != best).collect();
    order.sort_by(|&i, &j| {
        scores[j]
            .entropy
            .total_cmp(&scores[i].entropy)
            .then(scores[i].action.abs().total_cmp(&scores[j].action.abs()))
            .then(scores[i].action.total_cmp(&scores[j].action))
    });
    order.insert(0, best);
    for (r, &i) in order.iter().enumerate() {
        scores[i].rank = r + 1;
    }
    ActionSelection {
        action: scores[order[0]].action,
        scores,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{beam_target_response, ActionSet};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn propagation_examples() {
        let p = ParticleSet::uniform(vec![0.1, -0.2, 0.5]).unwrap();
        let h = propagate_hypotheses(&p, 0.0, &mut rng(1));
        assert_eq!(h.states, p.positions());
        assert_eq!(h.weights.len(), 3);
        let h1 = propagate_hypotheses(&p, 0.1, &mut rng(4));
        let h2 = propagate_hypotheses(&p, 0.1, &mut rng(4));
        assert_eq!(h1, h2);
    }

    #[test]
    fn means_delegate_to_response() {
        let g = AngleGrid::default();
        let beam = BeamModelParams::default();
        let m = hypothetical_means(&[0.2, 0.2, -0.3], 0.1, &g, &beam).unwrap();
        assert_eq!(m.row(0), m.row(1));
        let r = beam_target_response(-0.3, 0.1, &g, &beam).unwrap();
        for j in 0..g.len() {
            assert_eq!(m[(2, j)], r[j]);
        }
        let m = hypothetical_means(&[0.35], 0.35, &g, &beam).unwrap();
        let j = (0..g.len()).max_by(|&u, &v| m[(0, u)].partial_cmp(&m[(0, v)]).unwrap()).unwrap();
        assert_eq!(j, g.nearest(0.35).0);
    }

    #[test]
    fn score_noise_floor_when_rows_identical() {
        let m = DMatrix::from_fn(4, 3, |_, j| j as f64 * 0.3);
        let s = marginal_entropy_score(&m, &[0.25; 4], 0.1, 1e-9).unwrap();
        assert_relative_eq!(s, 1.5 * (0.01f64 + 1e-9).ln(), max_relative = 1e-12);
    }

    #[test]
    fn score_scalar_example() {
        let m = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let s = marginal_entropy_score(&m, &[0.5, 0.5], 1.0, 0.0).unwrap();
        assert_relative_eq!(s, 0.5 * 1.25f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(s, 0.111572, epsilon = 1e-6);
    }

    #[test]
    fn score_needs_two_rows() {
        let m = DMatrix::from_column_slice(1, 1, &[0.0]);
        assert!(marginal_entropy_score(&m, &[1.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn factored_scores_match_direct_scoring() {
        let cfg = AgentConfig::default();
        let mut r = rng(12);
        let states: Vec<f64> = (0..300).map(|_| r.random_range(-0.6..0.6)).collect();
        let raw: Vec<f64> = (0..300).map(|_| r.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let hyp = Hypotheses {
            states: states.clone(),
            weights: raw.iter().map(|w| w / total).collect(),
        };
        let fast = score_actions(&hyp, &cfg, false).unwrap();
        for (k, &a) in cfg.actions.angles().iter().enumerate() {
            let m = hypothetical_means(&states, a, &cfg.grid, &cfg.beam).unwrap();
            let direct = marginal_entropy_score(&m, &hyp.weights, cfg.sigma_y, cfg.cov_jitter).unwrap();
            assert_relative_eq!(fast[k], direct, max_relative = 1e-9);
        }
    }

    #[test]
    fn parallel_scoring_is_bit_identical() {
        let cfg = AgentConfig::default();
        let p = crate::filter::init_particles(&cfg, &mut rng(3));
        let a = select_action(&p, &cfg, &mut rng(5), false).unwrap();
        let b = select_action(&p, &cfg, &mut rng(5), true).unwrap();
        assert_eq!(a.action, b.action);
        for (u, v) in a.scores.iter().zip(&b.scores) {
            assert_eq!(u.entropy.to_bits(), v.entropy.to_bits());
        }
    }

    #[test]
    fn point_mass_picks_nearest_action() {
        let cfg = AgentConfig {
            sigma_x: 1e-3,
            ..AgentConfig::default()
        };
        let p = ParticleSet::uniform(vec![0.35; 200]).unwrap();
        let sel = select_action(&p, &cfg, &mut rng(0), false).unwrap();
        // Brute-force check over the action set with the generic scorer.
        let hyp = propagate_hypotheses(&p, cfg.sigma_x, &mut rng(0));
        let best = cfg
            .actions
            .angles()
            .iter()
            .map(|&a| {
                let m = hypothetical_means(&hyp.states, a, &cfg.grid, &cfg.beam).unwrap();
                (a, marginal_entropy_score(&m, &hyp.weights, cfg.sigma_y, cfg.cov_jitter).unwrap())
            })
            .max_by(|u, v| u.1.partial_cmp(&v.1).unwrap())
            .unwrap();
        assert_relative_eq!(sel.action, 0.35, epsilon = 1e-12);
        assert_relative_eq!(best.0, 0.35, epsilon = 1e-12);
        let top = sel.scores.iter().find(|s| s.rank == 1).unwrap();
        assert_eq!(top.action, sel.action);
    }

    #[test]
    fn point_mass_consistency_across_positions() {
        for k in 0..=24 {
            let x0 = -0.6 + 0.05 * k as f64;
            let cfg = AgentConfig {
                sigma_x: 1e-4,
                ..AgentConfig::default()
            };
            let p = ParticleSet::uniform(vec![x0; 64]).unwrap();
            let sel = select_action(&p, &cfg, &mut rng(k), false).unwrap();
            let nearest = cfg
                .actions
                .angles()
                .iter()
                .copied()
                .min_by(|u, v| (u - x0).abs().partial_cmp(&(v - x0).abs()).unwrap())
                .unwrap();
            assert_eq!(sel.action, nearest, "x0 {x0}");
        }
    }

    #[test]
    fn symmetric_bimodal_tie_goes_negative() {
        let cfg = AgentConfig {
            sigma_x: 1e-12,
            actions: ActionSet::new(vec![-0.4, 0.4]).unwrap(),
            ..AgentConfig::default()
        };
        let mut pos = vec![-0.4; 50];
        pos.extend(vec![0.4; 50]);
        let p = ParticleSet::uniform(pos).unwrap();
        let sel = select_action(&p, &cfg, &mut rng(1), false).unwrap();
        assert!((sel.scores[0].entropy - sel.scores[1].entropy).abs() < 1e-9);
        assert_eq!(sel.action, -0.4);
    }

    #[test]
    fn single_action_always_chosen() {
        let cfg = AgentConfig {
            actions: ActionSet::new(vec![0.21]).unwrap(),
            ..AgentConfig::default()
        };
        let p = crate::filter::init_particles(&cfg, &mut rng(0));
        assert_eq!(select_action(&p, &cfg, &mut rng(0), true).unwrap().action, 0.21);
    }

    #[test]
    fn tie_break_prefers_broadside() {
        let sel = rank(&[-0.2, 0.0, 0.2], &[1.0, 1.0, 1.0]);
        assert_eq!(sel.action, 0.0);
        let sel = rank(&[-0.2, 0.2, 0.5], &[1.0, 1.0, 0.5]);
        assert_eq!(sel.action, -0.2);
        assert_eq!(sel.scores[1].rank, 2);
        assert_eq!(sel.scores[2].rank, 3);
    }

    fn weights(n: usize) -> Vec<f64> {
        vec![1.0 / n as f64; n]
    }

    proptest! {
        #[test]
        fn score_permutation_invariant(
            states in proptest::collection::vec(-0.6f64..0.6, 3..30),
            a in -0.7f64..0.7,
            shift in 0usize..30,
        ) {
            let g = AngleGrid::uniform(-0.8, 0.8, 33).unwrap();
            let beam = BeamModelParams::default();
            let n = states.len();
            let mut rotated = states.clone();
            rotated.rotate_left(shift % n);
            let m1 = hypothetical_means(&states, a, &g, &beam).unwrap();
            let m2 = hypothetical_means(&rotated, a, &g, &beam).unwrap();
            let s1 = marginal_entropy_score(&m1, &weights(n), 0.01, 1e-9).unwrap();
            let s2 = marginal_entropy_score(&m2, &weights(n), 0.01, 1e-9).unwrap();
            prop_assert!((s1 - s2).abs() < 1e-8);
        }

        #[test]
        fn score_translation_invariant(
            states in proptest::collection::vec(-0.6f64..0.6, 3..30),
            offset in proptest::collection::vec(-2.0f64..2.0, 33),
        ) {
            let g = AngleGrid::uniform(-0.8, 0.8, 33).unwrap();
            let m = hypothetical_means(&states, 0.1, &g, &BeamModelParams::default()).unwrap();
            let mut shifted = m.clone();
            for mut row in shifted.row_iter_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v += offset[j];
                }
            }
            let w = weights(states.len());
            let s1 = marginal_entropy_score(&m, &w, 0.01, 1e-9).unwrap();
            let s2 = marginal_entropy_score(&shifted, &w, 0.01, 1e-9).unwrap();
            prop_assert!((s1 - s2).abs() < 1e-6);
        }

        #[test]
        fn score_increasing_in_noise(
            states in proptest::collection::vec(-0.6f64..0.6, 3..30),
            a in -0.7f64..0.7,
            sy in 1e-3f64..0.5,
            factor in 1.01f64..3.0,
        ) {
            let g = AngleGrid::uniform(-0.8, 0.8, 33).unwrap();
            let m = hypothetical_means(&states, a, &g, &BeamModelParams::default()).unwrap();
            let w = weights(states.len());
            let lo = marginal_entropy_score(&m, &w, sy, 1e-9).unwrap();
            let hi = marginal_entropy_score(&m, &w, sy * factor, 1e-9).unwrap();
            prop_assert!(hi > lo);
        }
    }
}
