//! Lossless protocol: a spin-j singlet, a rotation `exp(-iφ J_yb)` on the b
//! half, and a `J_za ⊗ J_zb` measurement.
//!
//! The outcome distribution is `P_AB(φ) = d_{B,-A}(φ)² / (2j+1)`. Its classical
//! Fisher information equals the pure-state quantum Fisher information
//! `4j(j+1)/3` for every φ.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use rand::Rng;

use crate::angular::{check_projection, check_spin, HalfInt, YRotation};
use crate::error::{ensure_finite, Result};

/// Probabilities below this are treated as exact zeros of the distribution.
pub const ZERO_PROBABILITY: f64 = 1e-300;

/// The singlet `Σ_m (-1)^{j-m} |j,m⟩_a |j,-m⟩_b / sqrt(2j+1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SingletProbe {
    j: HalfInt,
}

impl SingletProbe {
    pub fn new(j: HalfInt) -> Result<Self> {
        check_spin(j)?;
        Ok(SingletProbe { j })
    }

    #[inline]
    pub fn j(&self) -> HalfInt {
        self.j
    }

    /// Photon number `4j` of the optical realisation.
    #[inline]
    pub fn photon_number(&self) -> usize {
        2 * self.j.twice() as usize
    }

    /// Expansion coefficients `(m_a, coefficient)`; the b projection is `-m_a`.
    pub fn coefficients(&self) -> Vec<(HalfInt, f64)> {
        let norm = (self.j.dim() as f64).sqrt();
        self.j
            .projections()
            .map(|m| {
                let sign = if ((self.j - m).twice() / 2) % 2 == 0 { 1.0 } else { -1.0 };
                (m, sign / norm)
            })
            .collect()
    }
}

/// Maps any φ onto `[0, π]` using `P(φ) = P(-φ) = P(φ + 2π)`.
///
/// Also returns the sign relating `d/dφ` at the input to `d/dφ` at the
/// reduced angle.
pub fn reduce_phase(phi: f64) -> (f64, f64) {
    let wrapped = phi.rem_euclid(TAU);
    if wrapped > PI {
        (TAU - wrapped, -1.0)
    } else {
        (wrapped, 1.0)
    }
}

/// Outcome probabilities indexed by `(A, B)`, both descending from `+j`.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeTable {
    j: HalfInt,
    phi: f64,
    probs: DMatrix<f64>,
}

impl OutcomeTable {
    #[inline]
    pub fn j(&self) -> HalfInt {
        self.j
    }

    #[inline]
    pub fn phi(&self) -> f64 {
        self.phi
    }

    #[inline]
    pub fn probs(&self) -> &DMatrix<f64> {
        &self.probs
    }

    pub fn get(&self, a: HalfInt, b: HalfInt) -> Result<f64> {
        check_projection(self.j, a)?;
        check_projection(self.j, b)?;
        Ok(self.probs[(self.j.index_of(a), self.j.index_of(b))])
    }

    /// Draws `(A, B)` by inverse CDF over the row-major flattened table.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (HalfInt, HalfInt) {
        let n = self.j.dim();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = (0, 0);
        for a in 0..n {
            for b in 0..n {
                let p = self.probs[(a, b)];
                if p <= 0.0 {
                    continue;
                }
                acc += p;
                last = (a, b);
                if u < acc {
                    return (self.j.projection_at(a), self.j.projection_at(b));
                }
            }
        }
        // Rounding left u above the final partial sum.
        (self.j.projection_at(last.0), self.j.projection_at(last.1))
    }
}

/// `P_AB(φ) = d_{B,-A}(φ)² / (2j+1)`.
pub fn outcome_distribution(j: HalfInt, phi: f64) -> Result<OutcomeTable> {
    ensure_finite("phi", phi)?;
    let rot = YRotation::new(j)?;
    Ok(outcome_table_with(&rot, phi))
}

pub(crate) fn outcome_table_with(rot: &YRotation, phi: f64) -> OutcomeTable {
    let j = rot.j();
    let (reduced, _) = reduce_phase(phi);
    let d = rot.matrix(reduced).expect("finite angle");
    let n = j.dim();
    let scale = 1.0 / n as f64;
    // Index of -A is 2j - index of A.
    let probs = DMatrix::from_fn(n, n, |a, b| {
        let v = d.entries()[(b, n - 1 - a)];
        v * v * scale
    });
    OutcomeTable { j, phi, probs }
}

/// `dP_AB/dφ` from the ladder expression
/// `[d_{B,-A}/(2j+1)] [N_-(-A) d_{B,-A-1} - N_+(-A) d_{B,-A+1}]`.
pub fn outcome_derivative(j: HalfInt, phi: f64) -> Result<DMatrix<f64>> {
    ensure_finite("phi", phi)?;
    let (reduced, sign) = reduce_phase(phi);
    let d = YRotation::new(j)?.matrix(reduced)?;
    let dd = d.derivative();
    let n = j.dim();
    let scale = 2.0 * sign / n as f64;
    Ok(DMatrix::from_fn(n, n, |a, b| {
        let col = n - 1 - a;
        scale * d.entries()[(b, col)] * dd[(b, col)]
    }))
}

/// Classical Fisher information `Σ_AB P_AB (d ln P_AB / dφ)²` of the
/// `J_za ⊗ J_zb` measurement, from the analytic derivative.
///
/// At an exact zero of `P_AB` the summand is replaced by its limit
/// `4 d'_{B,-A}² / (2j+1)`: the zeros of `P` are quadratic, so the limit is
/// finite and generally nonzero.
pub fn classical_fisher(j: HalfInt, phi: f64) -> Result<f64> {
    ensure_finite("phi", phi)?;
    let (reduced, _) = reduce_phase(phi);
    let d = YRotation::new(j)?.matrix(reduced)?;
    let dd = d.derivative();
    let n = j.dim();
    let inv_dim = 1.0 / n as f64;
    let mut total = 0.0;
    for a in 0..n {
        let col = n - 1 - a;
        for b in 0..n {
            let v = d.entries()[(b, col)];
            let dv = dd[(b, col)];
            let p = v * v * inv_dim;
            if p < ZERO_PROBABILITY {
                total += 4.0 * dv * dv * inv_dim;
            } else {
                let dp = 2.0 * v * dv * inv_dim;
                total += dp * dp / p;
            }
        }
    }
    Ok(total)
}

/// `I_qu = 4 Var(J_yb) = 4j(j+1)/3` for the pure singlet.
pub fn quantum_fisher_pure(j: HalfInt) -> Result<f64> {
    check_spin(j)?;
    Ok(4.0 * j.casimir() / 3.0)
}
