//! Closed-form Gaussian ground truth for the heat flow and the
//! Ornstein–Uhlenbeck flow `dX = -X/2 dt + dW`.

use std::f64::consts::{E, PI};

use crate::error::{invalid, Error, Result};
use crate::potential::Potential;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianState {
    pub mean: f64,
    pub var: f64,
}

impl GaussianState {
    pub fn new(mean: f64, var: f64) -> Result<Self> {
        if !(var > 0.0 && var.is_finite() && mean.is_finite()) {
            return Err(invalid(format!("gaussian state needs var > 0, got {var}")));
        }
        Ok(Self { mean, var })
    }

    pub fn sd(&self) -> f64 {
        self.var.sqrt()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let z = x - self.mean;
        (-z * z / (2.0 * self.var)).exp() / (2.0 * PI * self.var).sqrt()
    }

    pub fn score(&self, x: f64) -> f64 {
        -(x - self.mean) / self.var
    }
}

/// Marginal of `dX = -X/2 dt + dW` at time `t`.
pub fn ou_marginal(g0: GaussianState, t: f64) -> GaussianState {
    let decay = (-t).exp();
    GaussianState {
        mean: g0.mean * (-0.5 * t).exp(),
        var: g0.var * decay + 1.0 - decay,
    }
}

/// Time derivatives `(m', var')` along [`ou_marginal`].
pub fn ou_marginal_rates(g0: GaussianState, t: f64) -> (f64, f64) {
    (-0.5 * g0.mean * (-0.5 * t).exp(), (1.0 - g0.var) * (-t).exp())
}

/// Marginal of `dX = dW` at time `t`.
pub fn heat_marginal(g0: GaussianState, t: f64) -> GaussianState {
    GaussianState { mean: g0.mean, var: g0.var + t }
}

/// Relative entropy and relative Fisher information of a Gaussian law with
/// respect to `e^{-2Ψ}` for `Ψ ≡ 0` or `Ψ = x²/4 + c`.
pub fn gaussian_entropy_fisher(g: GaussianState, pot: &Potential) -> Result<(f64, f64)> {
    match *pot {
        Potential::Zero => Ok((-0.5 * (2.0 * PI * E * g.var).ln(), 1.0 / g.var)),
        Potential::Quadratic { theta, c } if (theta - 0.25).abs() < 1e-15 => {
            let h = (g.var + g.mean * g.mean) / 2.0 - 0.5 - 0.5 * (2.0 * PI * g.var).ln() + 2.0 * c;
            let i = (g.var - 1.0).powi(2) / g.var + g.mean * g.mean;
            Ok((h, i))
        }
        _ => Err(Error::UnsupportedPotential(pot.describe())),
    }
}

/// Closed-form `W₂` between two Gaussian laws on the line.
pub fn gaussian_w2(a: GaussianState, b: GaussianState) -> f64 {
    let dm = a.mean - b.mean;
    let ds = a.sd() - b.sd();
    (dm * dm + ds * ds).sqrt()
}
