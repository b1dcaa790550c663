//! The lossless PDC ensemble.
//!
//! Applying the down-conversion Hamiltonian for an interaction `τ = κt` to the
//! vacuum produces a coherent superposition of spin-j singlets with weights
//! `w_j = (2j+1) tanh^{4j}(τ) / cosh⁴(τ)`. Writing `n = 2j` for the number of
//! photon pairs and `x = tanh²τ`, `w = (n+1) xⁿ (1-x)²`, a negative-binomial
//! distribution whose tail has the closed form used below.

use serde::{Deserialize, Serialize};

use crate::angular::HalfInt;
use crate::error::{ensure_finite, Error, Result};
use crate::singlet_probe::quantum_fisher_pure;

/// Default tolerance for the truncated weight tail.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdcParams {
    tau: f64,
    pump_phase: f64,
}

impl PdcParams {
    pub fn new(tau: f64) -> Result<Self> {
        Self::with_pump_phase(tau, 0.0)
    }

    /// The pump phase only multiplies each pair-number sector by `e^{inφ_p}`;
    /// it is carried through the Fock-space simulation but changes none of the
    /// reported quantities.
    pub fn with_pump_phase(tau: f64, pump_phase: f64) -> Result<Self> {
        ensure_finite("tau", tau)?;
        ensure_finite("pump_phase", pump_phase)?;
        if tau < 0.0 {
            return Err(Error::InvalidParameter {
                name: "tau",
                value: tau,
                reason: "interaction strength must be non-negative",
            });
        }
        Ok(PdcParams { tau, pump_phase })
    }

    #[inline]
    pub fn tau(&self) -> f64 {
        self.tau
    }

    #[inline]
    pub fn pump_phase(&self) -> f64 {
        self.pump_phase
    }

    /// `λ = tanh τ ∈ [0, 1)`.
    #[inline]
    pub fn lambda(&self) -> f64 {
        self.tau.tanh()
    }

    /// Weight of the sector with `n` photon pairs (`j = n/2`).
    pub fn pair_weight(&self, n: usize) -> f64 {
        let x = self.lambda().powi(2);
        let c2 = self.tau.cosh().powi(2);
        (n as f64 + 1.0) * x.powi(n as i32) / (c2 * c2)
    }

    /// Probability mass of all sectors with more than `max_pairs` pairs.
    pub fn pair_tail(&self, max_pairs: usize) -> f64 {
        let x = self.lambda().powi(2);
        let n = max_pairs as f64;
        // Σ_{k>N} (k+1) x^k (1-x)² = x^{N+1} [(N+2) - (N+1) x]
        x.powi(max_pairs as i32 + 1) * ((n + 2.0) - (n + 1.0) * x)
    }

    /// Smallest pair cutoff whose tail is below `tolerance`.
    pub fn cutoff_for_tail(&self, tolerance: f64) -> usize {
        let mut n = 0;
        while self.pair_tail(n) > tolerance {
            n += 1;
        }
        n
    }
}

/// Truncated singlet weights, indexed by `2j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdcWeights {
    pub tau: f64,
    /// `weights[n]` is `w_{n/2}`.
    pub weights: Vec<f64>,
    /// Exact mass beyond the cutoff.
    pub tail: f64,
}

impl PdcWeights {
    pub fn max_twice_j(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn get(&self, j: HalfInt) -> f64 {
        usize::try_from(j.twice())
            .ok()
            .and_then(|n| self.weights.get(n).copied())
            .unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (HalfInt, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .map(|(n, &w)| (HalfInt::from_twice(n as i32), w))
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// `w_j = (2j+1) tanh^{4j}τ / cosh⁴τ` for `2j = 0..=max_twice_j`.
pub fn singlet_weights(params: &PdcParams, max_twice_j: usize) -> PdcWeights {
    PdcWeights {
        tau: params.tau,
        weights: (0..=max_twice_j).map(|n| params.pair_weight(n)).collect(),
        tail: params.pair_tail(max_twice_j),
    }
}

/// Weights truncated where the tail drops below [`DEFAULT_TAIL_TOLERANCE`].
pub fn singlet_weights_auto(params: &PdcParams) -> PdcWeights {
    singlet_weights(params, params.cutoff_for_tail(DEFAULT_TAIL_TOLERANCE))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxMoments {
    pub mean: f64,
    pub variance: f64,
}

impl FluxMoments {
    #[inline]
    pub fn second_moment(&self) -> f64 {
        self.variance + self.mean * self.mean
    }
}

/// `⟨N⟩ = 4 sinh²τ`, `Δ²N = cosh 4τ - 1`.
pub fn flux_moments(params: &PdcParams) -> FluxMoments {
    let s = params.tau.sinh();
    FluxMoments {
        mean: 4.0 * s * s,
        variance: (4.0 * params.tau).cosh() - 1.0,
    }
}

/// `⟨I_qu⟩ = ⟨N²⟩/12 + ⟨N⟩/3` for the lossless ensemble.
pub fn ensemble_qfi_lossless(params: &PdcParams) -> f64 {
    let m = flux_moments(params);
    m.second_moment() / 12.0 + m.mean / 3.0
}

/// `Σ_j w_j I_qu(j)` over a truncated weight table.
pub fn weighted_subspace_qfi(weights: &PdcWeights) -> f64 {
    weights
        .iter()
        .map(|(j, w)| w * quantum_fisher_pure(j).expect("non-negative spin"))
        .sum()
}
