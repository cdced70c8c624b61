//! Relative entropy, relative Fisher information, free energy and the
//! velocity field of a grid density with respect to `q = e^{-2Ψ}`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{table_csv, write_atomic};
use crate::measure::{GridDensity, GridFunction, DENSITY_FLOOR, RELATIVE_CLIP};
use crate::pde::FlowSnapshotSeries;
use crate::potential::Potential;

/// `∫ p log(p/q)` with `0 log 0 = 0`.
pub fn relative_entropy(d: &GridDensity, pot: &Potential) -> f64 {
    d.grid().integrate(d.values(), |x, p| {
        if p > DENSITY_FLOOR {
            p * (p.ln() + 2.0 * pot.evaluate(x))
        } else {
            0.0
        }
    })
}

/// `∇ log ℓ = ∇ log p + 2Ψ'` at the nodes.
pub fn likelihood_score(d: &GridDensity, pot: &Potential) -> GridFunction {
    let mut s = d.score(RELATIVE_CLIP);
    for (v, x) in s.values.iter_mut().zip(d.grid().nodes()) {
        *v += 2.0 * pot.gradient(x);
    }
    s
}

/// `∫ |∇ log p + 2Ψ'|² p`.
pub fn relative_fisher_information(d: &GridDensity, pot: &Potential) -> f64 {
    let a = likelihood_score(d, pot);
    let w: Vec<f64> = a
        .values
        .iter()
        .zip(d.values())
        .map(|(s, &p)| if p > DENSITY_FLOOR { s * s * p } else { 0.0 })
        .collect();
    d.grid().trapezoid(&w)
}

/// `∫ Ψ p + ½ ∫ p log p`.
pub fn free_energy(d: &GridDensity, pot: &Potential) -> f64 {
    let energy = d.expect(|x| pot.evaluate(x));
    let neg_entropy = d.grid().integrate(d.values(), |_, p| if p > DENSITY_FLOOR { p * p.ln() } else { 0.0 });
    energy + 0.5 * neg_entropy
}

/// `v = -½ (∇ log p + 2Ψ')`.
pub fn velocity_field(d: &GridDensity, pot: &Potential) -> GridFunction {
    let mut v = likelihood_score(d, pot);
    v.values.iter_mut().for_each(|s| *s *= -0.5);
    v
}

/// Terms of `H(P|Q) = H(P|𝒬) - ∫x² dP - log ∫ e^{-x²-2Ψ}` where `𝒬` is the
/// probability measure proportional to `e^{-x²-2Ψ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaFiniteDecomposition {
    pub h_vs_reference: f64,
    pub quad_moment: f64,
    pub log_partition: f64,
    pub reconstructed_h: f64,
}

pub fn sigma_finite_decomposition(d: &GridDensity, pot: &Potential) -> SigmaFiniteDecomposition {
    let grid = d.grid();
    let weights: Vec<f64> = grid.nodes().map(|x| (-x * x - 2.0 * pot.evaluate(x)).exp()).collect();
    let log_partition = grid.trapezoid(&weights).ln();
    let quad_moment = d.expect(|x| x * x);
    let h_vs_reference = grid.integrate(d.values(), |x, p| {
        if p > DENSITY_FLOOR {
            p * (p.ln() + x * x + 2.0 * pot.evaluate(x) + log_partition)
        } else {
            0.0
        }
    });
    SigmaFiniteDecomposition {
        h_vs_reference,
        quad_moment,
        log_partition,
        reconstructed_h: h_vs_reference - quad_moment - log_partition,
    }
}

/// Time series of information functionals along a flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowDiagnostics {
    pub times: Vec<f64>,
    pub entropy: Vec<f64>,
    pub fisher: Vec<f64>,
    pub free_energy: Vec<f64>,
    /// Centered difference of `H` over neighbouring snapshots (one-sided at the ends).
    pub dhdt_fd: Vec<f64>,
    /// Metric derivative estimates, filled in by the transport module.
    pub w2_rate: Option<Vec<f64>>,
}

impl FlowDiagnostics {
    pub fn compute(flow: &FlowSnapshotSeries) -> Self {
        let pot = &flow.potential;
        let entropy: Vec<f64> = flow.states.iter().map(|d| relative_entropy(d, pot)).collect();
        let fisher = flow.states.iter().map(|d| relative_fisher_information(d, pot)).collect();
        let free = flow.states.iter().map(|d| free_energy(d, pot)).collect();
        let dhdt_fd = finite_difference(&flow.times, &entropy);
        Self { times: flow.times.clone(), entropy, fisher, free_energy: free, dhdt_fd, w2_rate: None }
    }

    pub fn half_sqrt_fisher(&self) -> Vec<f64> {
        self.fisher.iter().map(|i| 0.5 * i.max(0.0).sqrt()).collect()
    }

    /// `½ ∫ I dt` over the whole series by the trapezoid rule.
    pub fn half_fisher_integral(&self) -> f64 {
        0.5 * self
            .times
            .windows(2)
            .zip(self.fisher.windows(2))
            .map(|(t, i)| 0.5 * (t[1] - t[0]) * (i[0] + i[1]))
            .sum::<f64>()
    }

    pub fn to_csv_string(&self) -> String {
        let half = self.half_sqrt_fisher();
        match &self.w2_rate {
            Some(w) => table_csv(
                &["t", "H", "I", "F", "dHdt_fd", "W2_rate", "half_sqrtI"],
                (0..self.times.len()).map(|k| {
                    vec![
                        self.times[k],
                        self.entropy[k],
                        self.fisher[k],
                        self.free_energy[k],
                        self.dhdt_fd[k],
                        w[k],
                        half[k],
                    ]
                }),
            ),
            None => table_csv(
                &["t", "H", "I", "F", "dHdt_fd"],
                (0..self.times.len())
                    .map(|k| vec![self.times[k], self.entropy[k], self.fisher[k], self.free_energy[k], self.dhdt_fd[k]]),
            ),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv_string().as_bytes())
    }
}

pub(crate) fn finite_difference(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|k| {
            let (a, b) = if k == 0 {
                (0, 1)
            } else if k == n - 1 {
                (n - 2, n - 1)
            } else {
                (k - 1, k + 1)
            };
            (y[b] - y[a]) / (t[b] - t[a])
        })
        .collect()
}

/// Checks that a potential admits a normalized Gibbs measure of unit mass.
pub(crate) fn require_probability_reference(pot: &Potential) -> Result<()> {
    let mass = pot.mass()?;
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidParameter(format!(
            "reference measure of {} has mass {mass}, expected 1",
            pot.describe()
        )));
    }
    Ok(())
}
