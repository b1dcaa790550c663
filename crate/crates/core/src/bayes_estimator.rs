//! Sequential Bayesian phase estimation with singlet probes.
//!
//! The posterior lives on a uniform grid over `[0, π]` with trapezoid
//! quadrature. Each trial draws `k` outcomes at the true phase, multiplies the
//! posterior by the outcome likelihood after each draw, and reports a point
//! estimate of the final posterior (its mean by default).
//!
//! Trials use ChaCha20 seeded with the experiment seed, one stream per trial
//! index, so parallel and serial runs give identical results.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angular::{check_projection, check_spin, HalfInt, YRotation};
use crate::error::{ensure_finite, Error, Result};
use crate::singlet_probe::{outcome_table_with, quantum_fisher_pure, OutcomeTable};

pub const DEFAULT_GRID_SIZE: usize = 2048;
/// True phase used when none is given.
pub const DEFAULT_PHI_TRUE: f64 = 1.2;
/// One-sided 95% normal quantile.
pub const Z_95: f64 = 1.644_853_626_951_472_2;

/// Posterior density sampled on `[0, π]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorGrid {
    nodes: Vec<f64>,
    density: Vec<f64>,
    weights: Vec<f64>,
}

impl PosteriorGrid {
    /// Uniform prior `1/π` on `size` equally spaced nodes.
    pub fn uniform(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidParameter {
                name: "grid_size",
                value: size as f64,
                reason: "grid needs at least two nodes",
            });
        }
        let h = PI / (size - 1) as f64;
        let nodes = (0..size).map(|i| i as f64 * h).collect();
        let weights = (0..size)
            .map(|i| if i == 0 || i == size - 1 { 0.5 * h } else { h })
            .collect();
        Ok(PosteriorGrid {
            nodes,
            density: vec![1.0 / PI; size],
            weights,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫ p(φ) dφ` by the trapezoid rule.
    pub fn mass(&self) -> f64 {
        self.density.iter().zip(&self.weights).map(|(p, w)| p * w).sum()
    }

    pub fn mean(&self) -> f64 {
        self.nodes
            .iter()
            .zip(&self.density)
            .zip(&self.weights)
            .map(|((x, p), w)| x * p * w)
            .sum()
    }

    pub fn mode(&self) -> f64 {
        let mut best = 0;
        for (i, p) in self.density.iter().enumerate() {
            if *p > self.density[best] {
                best = i;
            }
        }
        self.nodes[best]
    }

    /// Mean direction of the doubled angle, mapped back to `[0, π)`.
    pub fn circular_mean(&self) -> f64 {
        let (mut s, mut c) = (0.0, 0.0);
        for ((x, p), w) in self.nodes.iter().zip(&self.density).zip(&self.weights) {
            s += p * w * (2.0 * x).sin();
            c += p * w * (2.0 * x).cos();
        }
        (0.5 * s.atan2(c)).rem_euclid(PI)
    }

    pub fn estimate(&self, estimator: Estimator) -> f64 {
        match estimator {
            Estimator::PosteriorMean => self.mean(),
            Estimator::Mode => self.mode(),
            Estimator::CircularMean => self.circular_mean(),
        }
    }

    /// Multiplies by `likelihood` node-wise and renormalises.
    ///
    /// If the product vanishes on the whole grid the posterior is left
    /// untouched and [`Error::ZeroPosterior`] is returned.
    pub fn update(&mut self, likelihood: &[f64]) -> Result<()> {
        assert_eq!(likelihood.len(), self.len(), "likelihood must match the grid");
        let mass: f64 = self
            .density
            .iter()
            .zip(likelihood)
            .zip(&self.weights)
            .map(|((p, l), w)| p * l * w)
            .sum();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::ZeroPosterior);
        }
        let inv = mass.recip();
        for (p, l) in self.density.iter_mut().zip(likelihood) {
            *p *= l * inv;
        }
        Ok(())
    }
}

/// Measured projections `(A, B)` of `J_za` and `J_zb`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Outcome {
    pub a: HalfInt,
    pub b: HalfInt,
}

/// Draws one outcome of the rotated singlet by inverse CDF.
pub fn sample_outcome<R: Rng + ?Sized>(j: HalfInt, phi: f64, rng: &mut R) -> Result<Outcome> {
    let table = crate::singlet_probe::outcome_distribution(j, phi)?;
    let (a, b) = table.sample(rng);
    Ok(Outcome { a, b })
}

/// One Bayesian update with the likelihood computed on the fly.
pub fn update_posterior(grid: &PosteriorGrid, j: HalfInt, outcome: Outcome) -> Result<PosteriorGrid> {
    check_projection(j, outcome.a)?;
    check_projection(j, outcome.b)?;
    let rot = YRotation::new(j)?;
    let (ia, ib) = (j.index_of(outcome.a), j.index_of(outcome.b));
    let likelihood: Vec<f64> = grid
        .nodes
        .iter()
        .map(|&phi| outcome_table_with(&rot, phi).probs()[(ia, ib)])
        .collect();
    let mut next = grid.clone();
    next.update(&likelihood)?;
    Ok(next)
}

/// `P_AB(φ)` tabulated on every grid node, stored per outcome.
#[derive(Clone, Debug)]
pub struct LikelihoodTable {
    j: HalfInt,
    size: usize,
    /// `values[(ia * dim + ib) * size + node]`.
    values: Vec<f64>,
}

impl LikelihoodTable {
    pub fn new(j: HalfInt, grid: &PosteriorGrid) -> Result<Self> {
        check_spin(j)?;
        let rot = YRotation::new(j)?;
        let dim = j.dim();
        let size = grid.len();
        let mut values = vec![0.0; dim * dim * size];
        for (node, &phi) in grid.nodes.iter().enumerate() {
            let t = outcome_table_with(&rot, phi);
            for ia in 0..dim {
                for ib in 0..dim {
                    values[(ia * dim + ib) * size + node] = t.probs()[(ia, ib)];
                }
            }
        }
        Ok(LikelihoodTable { j, size, values })
    }

    pub fn j(&self) -> HalfInt {
        self.j
    }

    pub fn likelihood(&self, outcome: Outcome) -> &[f64] {
        let dim = self.j.dim();
        let i = self.j.index_of(outcome.a) * dim + self.j.index_of(outcome.b);
        &self.values[i * self.size..(i + 1) * self.size]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimator {
    #[default]
    PosteriorMean,
    Mode,
    CircularMean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub j: HalfInt,
    /// Updates per estimate.
    pub k: usize,
    pub trials: usize,
    pub phi_true: f64,
    pub seed: u64,
    pub grid_size: usize,
    pub estimator: Estimator,
}

impl TrialConfig {
    pub fn new(j: HalfInt, k: usize, trials: usize, phi_true: f64, seed: u64) -> Result<Self> {
        let cfg = TrialConfig {
            j,
            k,
            trials,
            phi_true,
            seed,
            grid_size: DEFAULT_GRID_SIZE,
            estimator: Estimator::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_spin(self.j)?;
        ensure_finite("phi_true", self.phi_true)?;
        if !(self.phi_true > 0.0 && self.phi_true < PI) {
            return Err(Error::InvalidParameter {
                name: "phi_true",
                value: self.phi_true,
                reason: "true phase must lie strictly inside (0, π)",
            });
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter {
                name: "trials",
                value: 0.0,
                reason: "at least one trial is required",
            });
        }
        if self.grid_size < 2 {
            return Err(Error::InvalidParameter {
                name: "grid_size",
                value: self.grid_size as f64,
                reason: "grid needs at least two nodes",
            });
        }
        Ok(())
    }

    /// Photons consumed by the whole experiment, `trials · k · 4j`.
    pub fn photon_budget(&self) -> usize {
        self.trials * self.k * 2 * self.j.twice() as usize
    }

    /// Spin-1/2 configuration with the same photon budget: `k' = 2jk`.
    pub fn resource_matched_bell(&self) -> TrialConfig {
        TrialConfig {
            j: HalfInt::HALF,
            k: self.k * self.j.twice() as usize,
            ..*self
        }
    }

    /// Cramér-Rao limit `1/√(k I_qu)`.
    pub fn theoretical_limit(&self) -> f64 {
        let iq = quantum_fisher_pure(self.j).expect("validated spin");
        1.0 / (self.k as f64 * iq).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub estimates: Vec<f64>,
    pub mean: f64,
    pub rmse: f64,
    pub theoretical_limit: f64,
}

impl TrialStats {
    pub fn from_estimates(estimates: Vec<f64>, phi_true: f64, theoretical_limit: f64) -> Self {
        let n = estimates.len() as f64;
        let mean = estimates.iter().sum::<f64>() / n;
        let mse = estimates.iter().map(|e| (e - phi_true).powi(2)).sum::<f64>() / n;
        TrialStats {
            estimates,
            mean,
            rmse: mse.sqrt(),
            theoretical_limit,
        }
    }

    fn squared_errors(&self, phi_true: f64) -> (f64, f64) {
        let n = self.estimates.len() as f64;
        let sq: Vec<f64> = self.estimates.iter().map(|e| (e - phi_true).powi(2)).collect();
        let mean = sq.iter().sum::<f64>() / n;
        let var = sq.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (mean, var / n)
    }
}

/// One-sided z statistic for `MSE(worse) > MSE(better)` from independent
/// samples of squared errors.
pub fn mse_z_score(better: &TrialStats, worse: &TrialStats, phi_true: f64) -> f64 {
    let (mb, vb) = better.squared_errors(phi_true);
    let (mw, vw) = worse.squared_errors(phi_true);
    (mw - mb) / (vb + vw).sqrt()
}

fn trial_rng(seed: u64, index: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn run_trial_with(config: &TrialConfig, truth: &OutcomeTable, table: &LikelihoodTable, index: usize) -> Result<f64> {
    let mut rng = trial_rng(config.seed, index);
    let mut grid = PosteriorGrid::uniform(config.grid_size)?;
    for _ in 0..config.k {
        let (a, b) = truth.sample(&mut rng);
        grid.update(table.likelihood(Outcome { a, b }))?;
    }
    Ok(grid.estimate(config.estimator))
}

/// Runs trial `trial_index` of `config` and returns its estimate.
pub fn run_trial(config: &TrialConfig, trial_index: usize) -> Result<f64> {
    config.validate()?;
    let grid = PosteriorGrid::uniform(config.grid_size)?;
    let table = LikelihoodTable::new(config.j, &grid)?;
    let truth = crate::singlet_probe::outcome_distribution(config.j, config.phi_true)?;
    run_trial_with(config, &truth, &table, trial_index)
}

/// Runs all trials in parallel and summarises them.
pub fn run_experiment(config: &TrialConfig) -> Result<TrialStats> {
    config.validate()?;
    let grid = PosteriorGrid::uniform(config.grid_size)?;
    let table = LikelihoodTable::new(config.j, &grid)?;
    let truth = crate::singlet_probe::outcome_distribution(config.j, config.phi_true)?;
    let estimates = (0..config.trials)
        .into_par_iter()
        .map(|i| run_trial_with(config, &truth, &table, i))
        .collect::<Result<Vec<f64>>>()?;
    Ok(TrialStats::from_estimates(
        estimates,
        config.phi_true,
        config.theoretical_limit(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::singlet_probe::outcome_distribution;
    use approx::assert_abs_diff_eq;

    fn j(twice: i32) -> HalfInt {
        HalfInt::from_twice(twice)
    }

    #[test]
    fn uniform_prior() {
        let g = PosteriorGrid::uniform(DEFAULT_GRID_SIZE).unwrap();
        assert_abs_diff_eq!(g.mass(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.mean(), PI / 2.0, epsilon = 1e-12);
        assert!(PosteriorGrid::uniform(1).is_err());
    }

    #[test]
    fn sampling_at_zero_is_anticorrelated() {
        let mut rng = trial_rng(3, 0);
        for _ in 0..500 {
            let o = sample_outcome(j(4), 0.0, &mut rng).unwrap();
            assert_eq!(o.b, -o.a);
        }
    }

    #[test]
    fn sampling_frequencies() {
        let spin = j(1);
        let table = outcome_distribution(spin, PI / 2.0).unwrap();
        let mut rng = trial_rng(99, 0);
        let n = 100_000;
        let mut counts = [[0usize; 2]; 2];
        for _ in 0..n {
            let (a, b) = table.sample(&mut rng);
            counts[spin.index_of(a)][spin.index_of(b)] += 1;
        }
        for ia in 0..2 {
            for ib in 0..2 {
                let p = table.probs()[(ia, ib)];
                let sigma = (n as f64 * p * (1.0 - p)).sqrt();
                assert!((counts[ia][ib] as f64 - n as f64 * p).abs() < 4.0 * sigma);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let draw = || {
            let mut rng = trial_rng(7, 5);
            (0..50)
                .map(|_| sample_outcome(j(4), 1.1, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn update_peaks_at_zero_for_anticorrelated_outcome() {
        let g = PosteriorGrid::uniform(512).unwrap();
        let spin = j(4);
        let next = update_posterior(&g, spin, Outcome { a: HalfInt::ONE, b: -HalfInt::ONE }).unwrap();
        assert_eq!(next.mode(), 0.0);
        assert_abs_diff_eq!(next.mass(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn sequential_equals_batch() {
        let spin = j(4);
        let g0 = PosteriorGrid::uniform(256).unwrap();
        let table = LikelihoodTable::new(spin, &g0).unwrap();
        let mut rng = trial_rng(1, 2);
        let truth = outcome_distribution(spin, 1.0).unwrap();
        let outcomes: Vec<Outcome> = (0..30)
            .map(|_| {
                let (a, b) = truth.sample(&mut rng);
                Outcome { a, b }
            })
            .collect();

        let two = update_posterior(&update_posterior(&g0, spin, outcomes[0]).unwrap(), spin, outcomes[1]).unwrap();
        let mut g = g0.clone();
        for o in &outcomes {
            g.update(table.likelihood(*o)).unwrap();
            assert_abs_diff_eq!(g.mass(), 1.0, epsilon = 1e-10);
        }
        let mut g2 = g0.clone();
        g2.update(table.likelihood(outcomes[0])).unwrap();
        g2.update(table.likelihood(outcomes[1])).unwrap();
        for (x, y) in two.density().iter().zip(g2.density()) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }

        // Direct product formula in log space.
        let logs: Vec<f64> = (0..g0.len())
            .map(|i| outcomes.iter().map(|o| table.likelihood(*o)[i].ln()).sum())
            .collect();
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let z: f64 = raw.iter().zip(g0.weights()).map(|(r, w)| r * w).sum();
        for (x, r) in g.density().iter().zip(&raw) {
            assert!((x - r / z).abs() <= 1e-12 * (r / z).max(1.0));
        }
    }

    #[test]
    fn zero_posterior_is_flagged() {
        let mut g = PosteriorGrid::uniform(16).unwrap();
        let before = g.clone();
        assert_eq!(g.update(&[0.0; 16]), Err(Error::ZeroPosterior));
        assert_eq!(g, before);
    }

    #[test]
    fn trial_basics() {
        let cfg = TrialConfig::new(j(4), 0, 1, 1.2, 5).unwrap();
        assert_abs_diff_eq!(run_trial(&cfg, 0).unwrap(), PI / 2.0, epsilon = 1e-12);
        let cfg = TrialConfig::new(j(4), 20, 1, 1.2, 5).unwrap();
        assert_eq!(run_trial(&cfg, 3).unwrap(), run_trial(&cfg, 3).unwrap());
        let stats = run_experiment(&cfg).unwrap();
        assert_eq!(stats.rmse, (stats.estimates[0] - 1.2).abs());
        assert_eq!(stats.estimates[0], run_trial(&cfg, 0).unwrap());
        assert!(TrialConfig::new(j(4), 20, 0, 1.2, 5).is_err());
        assert!(TrialConfig::new(j(4), 20, 1, 0.0, 5).is_err());
        assert!(TrialConfig::new(j(4), 20, 1, PI, 5).is_err());
    }

    #[test]
    fn experiment_is_reproducible() {
        let cfg = TrialConfig::new(j(6), 20, 40, 1.5, 123).unwrap();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        let serial: Vec<f64> = (0..40).map(|i| run_trial(&cfg, i).unwrap()).collect();
        assert_eq!(a.estimates, serial);
    }

    #[test]
    fn estimates_converge_with_grid() {
        let cfg = TrialConfig::new(j(4), 20, 8, 1.2, 77).unwrap();
        let fine = TrialConfig {
            grid_size: 2 * DEFAULT_GRID_SIZE - 1,
            ..cfg
        };
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&fine).unwrap();
        for (x, y) in a.estimates.iter().zip(&b.estimates) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn long_runs_respect_gaussian_asymptotics() {
        let cfg = TrialConfig::new(j(4), 200, 250, 1.2, 2024).unwrap();
        let stats = run_experiment(&cfg).unwrap();
        let bound = 5.0 / (200.0f64 * 8.0).sqrt();
        let outside = stats.estimates.iter().filter(|e| (*e - 1.2).abs() >= bound).count();
        // A 5σ excursion has probability ~6e-7 per trial.
        assert!(outside == 0, "{outside} estimates beyond 5σ");
    }

    #[test]
    fn crb_is_not_beaten() {
        for (twice, k, phi) in [(2, 20, 0.35 * PI), (4, 20, 0.5 * PI), (8, 30, 0.65 * PI), (1, 40, 0.45 * PI)] {
            let cfg = TrialConfig::new(j(twice), k, 1000, phi, 31 + twice as u64).unwrap();
            let stats = run_experiment(&cfg).unwrap();
            assert!(
                stats.rmse >= 0.95 * stats.theoretical_limit,
                "2j={twice} k={k}: {} < 0.95·{}",
                stats.rmse,
                stats.theoretical_limit
            );
        }
    }

    #[test]
    fn bell_budget_matching() {
        let cfg = TrialConfig::new(j(4), 20, 250, 1.2, 1).unwrap();
        let bell = cfg.resource_matched_bell();
        assert_eq!(bell.k, 80);
        assert_eq!(bell.photon_budget(), cfg.photon_budget());
        assert_eq!(cfg.photon_budget(), 1000 * 2 * 20);
    }
}
