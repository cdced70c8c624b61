//! Confining potentials, compactly supported perturbations, and the Gibbs
//! reference density `q = exp(-2 Ψ)`.
//!
//! Everything here is one-dimensional. A potential carries its analytic
//! value, gradient and second derivative together with the constants that
//! the rest of the crate relies on: a curvature lower bound `κ` with
//! `Ψ'' ≥ κ`, and coercivity constants `(c, R)` with `x Ψ'(x) ≥ -c x²` for
//! `|x| ≥ R`.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user supplied potential given by closures.
#[derive(Clone)]
pub struct CustomPotential {
    pub name: String,
    pub value: ScalarFn,
    pub gradient: ScalarFn,
    pub hessian: ScalarFn,
    pub curvature_bound: f64,
    pub normalizable: bool,
    pub coercivity: (f64, f64),
}

impl fmt::Debug for CustomPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPotential")
            .field("name", &self.name)
            .field("curvature_bound", &self.curvature_bound)
            .field("normalizable", &self.normalizable)
            .finish_non_exhaustive()
    }
}

/// Confining potential Ψ.
#[derive(Debug, Clone)]
pub enum Potential {
    /// Ψ ≡ 0; the reference measure is Lebesgue measure (infinite mass).
    Zero,
    /// Ψ(x) = θ x² + c.
    Quadratic { theta: f64, c: f64 },
    /// Ψ(x) = (x² − α²)².
    DoubleWell { alpha: f64 },
    Custom(CustomPotential),
}

impl PartialEq for Potential {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Potential::Zero, Potential::Zero) => true,
            (Potential::Quadratic { theta: a, c: b }, Potential::Quadratic { theta: x, c: y }) => a == x && b == y,
            (Potential::DoubleWell { alpha: a }, Potential::DoubleWell { alpha: b }) => a == b,
            (Potential::Custom(a), Potential::Custom(b)) => a.name == b.name && Arc::ptr_eq(&a.value, &b.value),
            _ => false,
        }
    }
}

impl Potential {
    /// Ψ(x) = θ x² + c with θ > 0.
    pub fn quadratic(theta: f64, c: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) || !c.is_finite() {
            return Err(invalid(format!("quadratic potential needs theta > 0, got {theta}")));
        }
        Ok(Potential::Quadratic { theta, c })
    }

    /// The Ornstein–Uhlenbeck potential x²/4, whose Gibbs density is e^{-x²/2}.
    pub fn ornstein_uhlenbeck() -> Self {
        Potential::Quadratic { theta: 0.25, c: 0.0 }
    }

    /// x²/4 + ¼ ln 2π: the Gibbs density is exactly the standard normal density.
    pub fn normalized_ornstein_uhlenbeck() -> Self {
        Potential::Quadratic {
            theta: 0.25,
            c: 0.25 * (2.0 * std::f64::consts::PI).ln(),
        }
    }

    pub fn double_well(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(invalid("double-well alpha must be finite"));
        }
        Ok(Potential::DoubleWell { alpha })
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Quadratic { theta, c } => theta * x * x + c,
            Potential::DoubleWell { alpha } => {
                let u = x * x - alpha * alpha;
                u * u
            }
            Potential::Custom(p) => (p.value)(x),
        }
    }

    pub fn gradient(&self, x: f64) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Quadratic { theta, .. } => 2.0 * theta * x,
            Potential::DoubleWell { alpha } => 4.0 * x * (x * x - alpha * alpha),
            Potential::Custom(p) => (p.gradient)(x),
        }
    }

    pub fn hessian(&self, x: f64) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Quadratic { theta, .. } => 2.0 * theta,
            Potential::DoubleWell { alpha } => 12.0 * x * x - 4.0 * alpha * alpha,
            Potential::Custom(p) => (p.hessian)(x),
        }
    }

    /// Lower bound κ on Ψ''.
    pub fn curvature_bound(&self) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Quadratic { theta, .. } => 2.0 * theta,
            Potential::DoubleWell { alpha } => -4.0 * alpha * alpha,
            Potential::Custom(p) => p.curvature_bound,
        }
    }

    /// Whether ∫ e^{-2Ψ} < ∞.
    pub fn is_normalizable(&self) -> bool {
        match self {
            Potential::Zero => false,
            Potential::Quadratic { .. } | Potential::DoubleWell { .. } => true,
            Potential::Custom(p) => p.normalizable,
        }
    }

    /// Constants `(c, R)` such that `x Ψ'(x) ≥ -c x²` whenever `|x| ≥ R`.
    pub fn coercivity(&self) -> (f64, f64) {
        match self {
            Potential::Zero | Potential::Quadratic { .. } => (0.0, 0.0),
            Potential::DoubleWell { alpha } => (0.0, alpha.abs()),
            Potential::Custom(p) => p.coercivity,
        }
    }

    /// Gibbs density q(x) = e^{-2Ψ(x)} (not normalized).
    pub fn gibbs_density(&self, x: f64) -> f64 {
        (-2.0 * self.evaluate(x)).exp()
    }

    /// ∫ e^{-2Ψ} dx by trapezoid quadrature on [-20, 20].
    pub fn mass(&self) -> Result<f64> {
        if !self.is_normalizable() {
            return Err(Error::InfiniteMass);
        }
        let n = 16_001;
        let (a, b) = (-20.0, 20.0);
        let h = (b - a) / (n - 1) as f64;
        let mut s = 0.0;
        for i in 0..n {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            s += w * self.gibbs_density(a + i as f64 * h);
        }
        Ok(s * h)
    }

    /// The same dynamics with the additive constant chosen so that
    /// `∫ e^{-2Ψ} = 1`; only quadratic potentials carry such a constant.
    pub fn normalized(&self) -> Result<Self> {
        match self {
            Potential::Quadratic { theta, c } => {
                let mass = self.mass()?;
                Potential::quadratic(*theta, c + 0.5 * mass.ln())
            }
            _ => Err(Error::UnsupportedPotential(format!("{} has no additive constant to normalize", self.describe()))),
        }
    }

    /// Short description used in CSV metadata headers.
    pub fn describe(&self) -> String {
        match self {
            Potential::Zero => "zero".to_string(),
            Potential::Quadratic { theta, c } => format!("quadratic(theta={theta},c={c})"),
            Potential::DoubleWell { alpha } => format!("double_well(alpha={alpha})"),
            Potential::Custom(p) => format!("custom({})", p.name),
        }
    }
}

/// Smooth compactly supported perturbation potential
/// `B(x) = amplitude · exp(-1/(1-u²))`, `u = (x - center)/radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    center: f64,
    radius: f64,
    amplitude: f64,
}

/// Values of `B`, `β = B'` and `div β = B''` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationFields {
    pub potential: f64,
    pub beta: f64,
    pub div_beta: f64,
}

impl Perturbation {
    pub fn new(center: f64, radius: f64, amplitude: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid(format!("perturbation radius must be > 0, got {radius}")));
        }
        if !center.is_finite() || !amplitude.is_finite() {
            return Err(invalid("perturbation center and amplitude must be finite"));
        }
        Ok(Self { center, radius, amplitude })
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.radius, self.center + self.radius)
    }

    pub fn fields(&self, x: f64) -> PerturbationFields {
        let u = (x - self.center) / self.radius;
        let s = 1.0 - u * u;
        if s <= 0.0 || self.amplitude == 0.0 {
            return PerturbationFields { potential: 0.0, beta: 0.0, div_beta: 0.0 };
        }
        let bump = self.amplitude * (-1.0 / s).exp();
        // g(u) = -1/(1-u²)
        let g1 = -2.0 * u / (s * s);
        let g2 = -2.0 / (s * s) - 8.0 * u * u / (s * s * s);
        PerturbationFields {
            potential: bump,
            beta: bump * g1 / self.radius,
            div_beta: bump * (g1 * g1 + g2) / (self.radius * self.radius),
        }
    }

    pub fn beta(&self, x: f64) -> f64 {
        self.fields(x).beta
    }

    pub fn describe(&self) -> String {
        format!(
            "bump(center={},radius={},amplitude={})",
            self.center, self.radius, self.amplitude
        )
    }
}

/// Total drift magnitude `Ψ'(x) + β(x)` entering `dX = -(Ψ' + β) dt + dW`.
pub(crate) fn total_gradient(pot: &Potential, pert: Option<&Perturbation>, x: f64) -> f64 {
    pot.gradient(x) + pert.map_or(0.0, |b| b.beta(x))
}

/// `Ψ(x) + B(x)`.
pub(crate) fn total_potential(pot: &Potential, pert: Option<&Perturbation>, x: f64) -> f64 {
    pot.evaluate(x) + pert.map_or(0.0, |b| b.fields(x).potential)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn builtins() -> Vec<Potential> {
        vec![
            Potential::Zero,
            Potential::ornstein_uhlenbeck(),
            Potential::normalized_ornstein_uhlenbeck(),
            Potential::double_well(1.0).unwrap(),
        ]
    }

    #[test]
    fn point_values() {
        let ou = Potential::ornstein_uhlenbeck();
        assert_eq!(ou.evaluate(2.0), 1.0);
        assert_eq!(Potential::Zero.gradient(3.7), 0.0);
        assert_eq!(Potential::double_well(1.0).unwrap().gradient(1.0), 0.0);
        assert_eq!(ou.gibbs_density(0.0), 1.0);
    }

    #[test]
    fn curvature_bounds() {
        assert_eq!(Potential::ornstein_uhlenbeck().curvature_bound(), 0.5);
        assert_eq!(Potential::Zero.curvature_bound(), 0.0);
        let dw = Potential::double_well(1.0).unwrap();
        assert_eq!(dw.curvature_bound(), -4.0);
        // the bound is attained and respected on a scan
        let min = (-4000..=4000)
            .map(|i| dw.hessian(i as f64 * 1e-3))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(min, -4.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let h = 1e-5;
        for pot in builtins() {
            for i in -30..=30 {
                let x = i as f64 * 0.17 + 0.013;
                let fd = (pot.evaluate(x + h) - pot.evaluate(x - h)) / (2.0 * h);
                let g = pot.gradient(x);
                let err = (fd - g).abs() / g.abs().max(1.0);
                assert!(err < 1e-8, "{} at {x}: fd {fd} vs {g}", pot.describe());
                let fd2 = (pot.gradient(x + h) - pot.gradient(x - h)) / (2.0 * h);
                let hs = pot.hessian(x);
                assert!((fd2 - hs).abs() / hs.abs().max(1.0) < 1e-8);
            }
        }
    }

    #[test]
    fn gibbs_mass() {
        let ou = Potential::ornstein_uhlenbeck();
        assert!((ou.mass().unwrap() - (2.0 * PI).sqrt()).abs() < 1e-10);
        let nou = Potential::normalized_ornstein_uhlenbeck();
        assert!((nou.mass().unwrap() - 1.0).abs() < 1e-10);
        assert!(matches!(Potential::Zero.mass(), Err(Error::InfiniteMass)));
    }

    #[test]
    fn normalized_gibbs_is_standard_normal() {
        let nou = Potential::normalized_ornstein_uhlenbeck();
        for i in -80..=80 {
            let x = i as f64 * 0.1;
            let phi = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
            assert!((nou.gibbs_density(x) - phi).abs() < 1e-12);
        }
    }

    #[test]
    fn potentials_are_nonnegative_and_coercive() {
        for pot in builtins() {
            let (c, r) = pot.coercivity();
            for i in 0..=5000 {
                let x = i as f64 * 0.01;
                assert!(pot.evaluate(x) >= 0.0 && pot.evaluate(-x) >= 0.0);
                if x >= r {
                    for y in [x, -x] {
                        assert!(y * pot.gradient(y) >= -c * y * y);
                    }
                }
            }
        }
    }

    #[test]
    fn perturbation_fields_at_center() {
        let b = Perturbation::new(0.0, 1.0, 1.0).unwrap();
        let f = b.fields(0.0);
        assert!((f.potential - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(f.beta, 0.0);
        // B''(0) = e^{-1} · g''(0) = -2 e^{-1}
        assert!((f.div_beta + 2.0 * (-1.0f64).exp()).abs() < 1e-14);
        let h = 1e-4;
        let fd = (b.fields(h).potential - 2.0 * f.potential + b.fields(-h).potential) / (h * h);
        assert!((fd - f.div_beta).abs() < 1e-6);
    }

    #[test]
    fn perturbation_support_and_zero_amplitude() {
        let b = Perturbation::new(0.5, 0.7, 0.3).unwrap();
        for x in [-3.0, -0.2, 1.2, 1.2000001, 10.0] {
            let f = b.fields(x);
            assert_eq!((f.potential, f.beta, f.div_beta), (0.0, 0.0, 0.0));
        }
        let z = Perturbation::new(0.0, 1.0, 0.0).unwrap();
        for i in -20..=20 {
            let f = z.fields(i as f64 * 0.05);
            assert_eq!((f.potential, f.beta, f.div_beta), (0.0, 0.0, 0.0));
        }
        assert!(Perturbation::new(0.0, 0.0, 1.0).is_err());
        assert!(Perturbation::new(0.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn perturbation_derivatives_match_finite_differences() {
        let b = Perturbation::new(0.2, 1.3, -0.7).unwrap();
        let h = 1e-6;
        for i in -45..=45 {
            let x = 0.2 + i as f64 * 0.02;
            let fd = (b.fields(x + h).potential - b.fields(x - h).potential) / (2.0 * h);
            let beta = b.beta(x);
            assert!((fd - beta).abs() / beta.abs().max(1e-3) < 1e-6, "x={x}");
            let fd2 = (b.beta(x + h) - b.beta(x - h)) / (2.0 * h);
            assert!((fd2 - b.fields(x).div_beta).abs() / b.fields(x).div_beta.abs().max(1e-3) < 1e-6);
        }
    }

    #[test]
    fn beta_integrates_to_zero() {
        let b = Perturbation::new(0.0, 1.0, 0.2).unwrap();
        let n = 20_001;
        let h = 2.0 / (n - 1) as f64;
        let s: f64 = (0..n).map(|i| b.beta(-1.0 + i as f64 * h)).sum::<f64>() * h;
        assert!(s.abs() < 1e-12);
    }
}
