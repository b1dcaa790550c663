//! Closed-form analytics for equal photon loss `η` in all four PDC modes.
//!
//! Loss turns each single-mode squeezed vacuum into a squeezed thermal state,
//! `S(±τ_eff) ρ_th(N̄) S†(±τ_eff)`, with
//!
//! ```text
//! P = η e^{2τ} + 1 - η,   M = η e^{-2τ} + 1 - η,
//! τ_eff = ¼ ln(P/M),      N̄ = (√(PM) - 1)/2,   χ = N̄/(1 + N̄).
//! ```
//!
//! The quantum Fisher information of the lossy state for a y rotation of the
//! b modes is then available in two algebraically equivalent forms: one in
//! `(τ_eff, N̄)` and one in the detected flux `⟨N⟩ = 4η sinh²τ`. Every
//! function here accepts either the source parameterisation `(τ, η)` or the
//! flux parameterisation `(⟨N⟩, η)`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::pdc_source::PdcParams;

/// Relative agreement required between the two closed forms of `⟨I_qu⟩`.
pub const FORM_AGREEMENT: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    eta: f64,
}

impl LossParams {
    /// `eta` is the per-mode transmission, identical for all four modes.
    pub fn new(eta: f64) -> Result<Self> {
        check_eta(eta)?;
        Ok(LossParams { eta })
    }

    pub const LOSSLESS: LossParams = LossParams { eta: 1.0 };

    #[inline]
    pub fn eta(&self) -> f64 {
        self.eta
    }

    #[inline]
    pub fn loss(&self) -> f64 {
        1.0 - self.eta
    }
}

fn check_eta(eta: f64) -> Result<()> {
    ensure_finite("eta", eta)?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter {
            name: "eta",
            value: eta,
            reason: "transmission must lie in [0, 1]",
        });
    }
    Ok(())
}

fn check_flux(flux: f64) -> Result<()> {
    ensure_finite("flux", flux)?;
    if flux < 0.0 {
        return Err(Error::InvalidParameter {
            name: "flux",
            value: flux,
            reason: "detected flux must be non-negative",
        });
    }
    Ok(())
}

fn check_positive_flux(flux: f64) -> Result<()> {
    check_flux(flux)?;
    if flux == 0.0 {
        return Err(Error::InvalidParameter {
            name: "flux",
            value: flux,
            reason: "detected flux must be positive",
        });
    }
    Ok(())
}

/// Squeezed-thermal description of one lossy mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossyGaussianParams {
    pub tau_eff: f64,
    pub n_bar: f64,
    pub chi: f64,
    pub p_aux: f64,
    pub m_aux: f64,
}

pub fn effective_params(pdc: &PdcParams, loss: &LossParams) -> LossyGaussianParams {
    let (tau, eta) = (pdc.tau(), loss.eta());
    let p_aux = eta * (2.0 * tau).exp() + 1.0 - eta;
    let m_aux = eta * (-2.0 * tau).exp() + 1.0 - eta;
    // PM = 1 + 4η(1-η) sinh²τ; this avoids cancellation in √(PM) - 1.
    let excess = 4.0 * eta * (1.0 - eta) * tau.sinh().powi(2);
    let n_bar = 0.5 * excess / (1.0 + (1.0 + excess).sqrt());
    LossyGaussianParams {
        tau_eff: 0.25 * (p_aux / m_aux).ln(),
        n_bar,
        chi: n_bar / (1.0 + n_bar),
        p_aux,
        m_aux,
    }
}

/// Total detected flux `⟨N⟩ = 4η sinh²τ`.
pub fn detected_flux(pdc: &PdcParams, loss: &LossParams) -> f64 {
    4.0 * loss.eta() * pdc.tau().sinh().powi(2)
}

/// Inverse of [`detected_flux`] at fixed `η > 0`.
pub fn tau_for_flux(flux: f64, eta: f64) -> Result<f64> {
    check_flux(flux)?;
    check_eta(eta)?;
    if eta == 0.0 {
        if flux == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::InvalidParameter {
            name: "eta",
            value: eta,
            reason: "no interaction strength reaches a positive flux at zero transmission",
        });
    }
    Ok((flux / (4.0 * eta)).sqrt().asinh())
}

/// `⟨I_qu⟩ = ⟨N⟩(4η + ⟨N⟩) / (8 + 4(1-η)⟨N⟩)`.
pub fn lossy_qfi_flux(flux: f64, eta: f64) -> Result<f64> {
    check_flux(flux)?;
    check_eta(eta)?;
    Ok(qfi_flux_form(flux, eta))
}

#[inline]
fn qfi_flux_form(flux: f64, eta: f64) -> f64 {
    flux * (4.0 * eta + flux) / (8.0 + 4.0 * (1.0 - eta) * flux)
}

/// `⟨I_qu⟩ = sinh²(2τ_eff)(2N̄+1)² / (2(1 + 2N̄ + 2N̄²))`.
pub fn lossy_qfi_gaussian(g: &LossyGaussianParams) -> f64 {
    let n = g.n_bar;
    (2.0 * g.tau_eff).sinh().powi(2) * (2.0 * n + 1.0).powi(2) / (2.0 * (1.0 + 2.0 * n + 2.0 * n * n))
}

/// Quantum Fisher information of the lossy PDC state.
///
/// Evaluates both closed forms and fails with
/// [`Error::InconsistentForms`] if they disagree beyond [`FORM_AGREEMENT`].
pub fn lossy_qfi(pdc: &PdcParams, loss: &LossParams) -> Result<f64> {
    let flux = detected_flux(pdc, loss);
    let by_flux = qfi_flux_form(flux, loss.eta());
    let by_gauss = lossy_qfi_gaussian(&effective_params(pdc, loss));
    if (by_flux - by_gauss).abs() > FORM_AGREEMENT * by_flux.abs().max(1.0) {
        return Err(Error::InconsistentForms {
            first: by_flux,
            second: by_gauss,
        });
    }
    Ok(by_flux)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QfiBounds {
    /// `η = 1` value, `⟨N⟩(4 + ⟨N⟩)/8`.
    pub upper: f64,
    /// `η → 0` limit, `⟨N⟩² / (8 + 4⟨N⟩)`.
    pub lower: f64,
}

pub fn qfi_bounds(flux: f64) -> Result<QfiBounds> {
    check_flux(flux)?;
    Ok(QfiBounds {
        upper: qfi_flux_form(flux, 1.0),
        lower: qfi_flux_form(flux, 0.0),
    })
}

/// Transmission above which the PDC scheme beats coherent light of the same
/// detected flux (`⟨I_qu⟩ = ⟨N⟩/2`): `η* = 1/2 + 1/(2 + ⟨N⟩)`.
pub fn coherent_crossover_eta(flux: f64) -> Result<f64> {
    check_positive_flux(flux)?;
    Ok(0.5 + 1.0 / (2.0 + flux))
}

/// Local exponent `γ = d ln⟨I_qu⟩ / d ln⟨N⟩` at fixed `η`:
///
/// ```text
/// γ = 1 + ⟨N⟩/(4η + ⟨N⟩) - (1-η)⟨N⟩/(2 + (1-η)⟨N⟩)
/// ```
pub fn scaling_exponent(eta: f64, flux: f64) -> Result<f64> {
    check_positive_flux(flux)?;
    check_eta(eta)?;
    if eta == 0.0 {
        return Err(Error::InvalidParameter {
            name: "eta",
            value: eta,
            reason: "scaling exponent needs positive transmission",
        });
    }
    let loss = 1.0 - eta;
    Ok(1.0 + flux / (4.0 * eta + flux) - loss * flux / (2.0 + loss * flux))
}

/// Decoherence parameter `θ = (1-η) tanh τ`.
pub fn decoherence_theta(pdc: &PdcParams, loss: &LossParams) -> f64 {
    loss.loss() * pdc.lambda()
}

/// Transmission giving decoherence `theta` at interaction `tau`.
pub fn eta_for_theta(tau: f64, theta: f64) -> Result<f64> {
    ensure_finite("theta", theta)?;
    let lambda = PdcParams::new(tau)?.lambda();
    if theta < 0.0 || theta > lambda {
        return Err(Error::InvalidParameter {
            name: "theta",
            value: theta,
            reason: "decoherence must lie in [0, tanh τ]",
        });
    }
    if lambda == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - theta / lambda)
}
