//! Probability densities sampled on a uniform one-dimensional grid.
//!
//! All integrals use the trapezoid rule. The CDF of a [`GridDensity`] is the
//! exact antiderivative of its piecewise-linear interpolant, so quantiles are
//! obtained by inverting a quadratic in each cell.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{invalid, Error, Result};

/// Absolute floor below which a density value is treated as zero.
pub const DENSITY_FLOOR: f64 = 1e-300;
/// Default relative clip applied before taking logarithms.
pub const RELATIVE_CLIP: f64 = 1e-14;

/// Uniform grid `x_i = x_min + i h`, `h = (x_max - x_min)/(n - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_max > x_min) {
            return Err(invalid(format!("grid needs x_min < x_max, got [{x_min}, {x_max}]")));
        }
        if n < 3 {
            return Err(invalid(format!("grid needs at least 3 nodes, got {n}")));
        }
        Ok(Self { x_min, x_max, n })
    }

    /// `[-10, 10]` with 2048 nodes.
    pub fn standard() -> Self {
        Self { x_min: -10.0, x_max: 10.0, n: 2048 }
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.spacing()
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        let h = self.spacing();
        (0..self.n).map(move |i| self.x_min + i as f64 * h)
    }

    /// Same domain, `factor` times as many intervals.
    pub fn refined(&self, factor: usize) -> Self {
        Self { x_min: self.x_min, x_max: self.x_max, n: (self.n - 1) * factor + 1 }
    }

    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.n);
        let inner: f64 = values[1..self.n - 1].iter().sum();
        (inner + 0.5 * (values[0] + values[self.n - 1])) * self.spacing()
    }

    /// Trapezoid integral of `f(x_i, v_i)`.
    pub fn integrate<F: Fn(f64, f64) -> f64>(&self, values: &[f64], f: F) -> f64 {
        let h = self.spacing();
        let mut s = 0.0;
        for (i, &v) in values.iter().enumerate() {
            let w = if i == 0 || i == self.n - 1 { 0.5 } else { 1.0 };
            s += w * f(self.x_min + i as f64 * h, v);
        }
        s * h
    }

    /// Cell index `i` and offset `ξ ∈ [0, h]` with `x = x_i + ξ`, clamped to the grid.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let h = self.spacing();
        let r = ((x - self.x_min) / h).floor();
        let i = if r < 0.0 { 0 } else { (r as usize).min(self.n - 2) };
        (i, x - self.node(i))
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.n == other.n
            && (self.x_min - other.x_min).abs() < 1e-12
            && (self.x_max - other.x_max).abs() < 1e-12
    }
}

/// Real function sampled on a grid (likelihood ratios, velocity fields, scores).
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
}

/// `∇ log p` at the nodes.
pub type ScoreField = GridFunction;

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().map(f).collect();
        Self { grid, values }
    }

    /// Piecewise-linear interpolation, constant beyond the ends.
    pub fn interpolate(&self, x: f64) -> f64 {
        let (i, xi) = self.grid.locate(x);
        let w = (xi / self.grid.spacing()).clamp(0.0, 1.0);
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    /// Central differences, one-sided at the two boundary nodes.
    pub fn derivative(&self) -> GridFunction {
        GridFunction { grid: self.grid, values: central_difference(&self.values, self.grid.spacing()) }
    }

    pub fn sup_distance(&self, other: &GridFunction, window: std::ops::Range<usize>) -> f64 {
        window.map(|i| (self.values[i] - other.values[i]).abs()).fold(0.0, f64::max)
    }
}

pub(crate) fn central_difference(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    let mut d = vec![0.0; n];
    d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    d[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
    for i in 1..n - 1 {
        d[i] = if i >= 2 && i + 2 < n {
            (8.0 * (v[i + 1] - v[i - 1]) - (v[i + 2] - v[i - 2])) / (12.0 * h)
        } else {
            (v[i + 1] - v[i - 1]) / (2.0 * h)
        };
    }
    d
}

/// `log p` at the nodes with the clip region replaced by an extrapolation.
///
/// Outside the outermost nodes with `p ≥ max(DENSITY_FLOOR, rel_clip · max p)`
/// the log density is continued as a concave quadratic matched to the last
/// three unclipped nodes, so the score continues linearly (exact for Gaussian
/// tails). Interior clipped nodes are clamped to the clip.
pub fn extrapolated_log_density(values: &[f64], h: f64, rel_clip: f64) -> Vec<f64> {
    let n = values.len();
    let max = values.iter().cloned().fold(0.0, f64::max);
    let clip = (rel_clip * max).max(DENSITY_FLOOR);
    let lo = values.iter().position(|&p| p >= clip);
    let hi = values.iter().rposition(|&p| p >= clip);
    let (lo, hi) = match (lo, hi) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => return vec![clip.ln(); n],
    };
    let mut out = vec![clip.ln(); n];
    for i in lo..=hi {
        out[i] = values[i].max(clip).ln();
    }
    if hi >= lo + 2 {
        let slope_lo = (-3.0 * out[lo] + 4.0 * out[lo + 1] - out[lo + 2]) / (2.0 * h);
        let curv_lo = ((out[lo] - 2.0 * out[lo + 1] + out[lo + 2]) / (h * h)).min(0.0);
        for i in 0..lo {
            let d = -((lo - i) as f64) * h;
            out[i] = out[lo] + slope_lo * d + 0.5 * curv_lo * d * d;
        }
        let slope_hi = (3.0 * out[hi] - 4.0 * out[hi - 1] + out[hi - 2]) / (2.0 * h);
        let curv_hi = ((out[hi] - 2.0 * out[hi - 1] + out[hi - 2]) / (h * h)).min(0.0);
        for i in hi + 1..n {
            let d = (i - hi) as f64 * h;
            out[i] = out[hi] + slope_hi * d + 0.5 * curv_hi * d * d;
        }
    }
    out
}

/// A probability density on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: Grid,
    values: Vec<f64>,
}

impl GridDensity {
    /// Renormalize non-negative raw values to unit trapezoid mass.
    pub fn normalize(grid: Grid, raw: Vec<f64>) -> Result<Self> {
        if raw.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                raw.len(),
                grid.len()
            )));
        }
        if let Some(v) = raw.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(invalid(format!("density values must be finite and >= 0, found {v}")));
        }
        let mass = grid.trapezoid(&raw);
        if mass <= 0.0 {
            return Err(invalid("density is identically zero"));
        }
        let values = raw.into_iter().map(|v| v / mass).collect();
        Ok(Self { grid, values })
    }

    /// Evaluate `f` at the nodes and normalize.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::normalize(grid, grid.nodes().map(f).collect())
    }

    /// N(mean, var) sampled on the grid and renormalized.
    pub fn gaussian(grid: Grid, mean: f64, var: f64) -> Result<Self> {
        if !(var > 0.0) {
            return Err(invalid(format!("gaussian variance must be > 0, got {var}")));
        }
        Self::from_fn(grid, |x| (-(x - mean) * (x - mean) / (2.0 * var)).exp())
    }

    /// Wrap values that are already a density (used by the solvers).
    pub(crate) fn from_raw_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mass(&self) -> f64 {
        self.grid.trapezoid(&self.values)
    }

    /// Trapezoid `∫ x^k p dx` for `k ≤ 4`.
    pub fn moment(&self, k: u32) -> Result<f64> {
        if k > 4 {
            return Err(invalid(format!("moment order must be in 0..=4, got {k}")));
        }
        Ok(self.grid.integrate(&self.values, |x, p| x.powi(k as i32) * p))
    }

    pub fn mean(&self) -> f64 {
        self.grid.integrate(&self.values, |x, p| x * p)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.grid.integrate(&self.values, |x, p| (x - m) * (x - m) * p)
    }

    /// Trapezoid `∫ f(x) p(x) dx`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.grid.integrate(&self.values, |x, p| f(x) * p)
    }

    pub fn log_values(&self, rel_clip: f64) -> Vec<f64> {
        extrapolated_log_density(&self.values, self.grid.spacing(), rel_clip)
    }

    /// `∇ log p` by central differences of the clipped and extrapolated log density.
    pub fn score(&self, rel_clip: f64) -> ScoreField {
        let logs = self.log_values(rel_clip);
        GridFunction { grid: self.grid, values: central_difference(&logs, self.grid.spacing()) }
    }

    /// Cumulative trapezoid masses at the nodes.
    pub fn cdf_nodes(&self) -> Vec<f64> {
        let h = self.grid.spacing();
        let mut c = Vec::with_capacity(self.values.len());
        let mut acc = 0.0;
        c.push(0.0);
        for w in self.values.windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
            c.push(acc);
        }
        c
    }

    /// Exact CDF of the piecewise-linear interpolant, normalized to end at 1.
    pub fn cdf(&self, x: f64) -> f64 {
        let c = self.cdf_nodes();
        cdf_with_nodes(&self.grid, &self.values, &c, x)
    }

    /// Quantile function of the piecewise-linear interpolant.
    pub fn quantile(&self, u: f64) -> f64 {
        let c = self.cdf_nodes();
        quantile_with_nodes(&self.grid, &self.values, &c, u)
    }

    /// Gaussian kernel density estimate with Silverman's bandwidth
    /// `1.06 σ̂ M^{-1/5}`, computed by linear binning onto the grid followed
    /// by a discrete convolution, then normalized.
    pub fn from_samples(xs: &[f64], grid: Grid) -> Result<Self> {
        if xs.len() < 100 {
            return Err(Error::DegenerateSamples(format!("need at least 100 samples, got {}", xs.len())));
        }
        let m = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / m;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
        if !(var > 0.0) || !var.is_finite() {
            return Err(Error::DegenerateSamples("sample variance is zero".into()));
        }
        let bw = silverman_bandwidth(var.sqrt(), xs.len());
        let h = grid.spacing();
        let n = grid.len();
        let mut bins = vec![0.0; n];
        for &x in xs {
            let r = (x - grid.x_min()) / h;
            if r < 0.0 || r > (n - 1) as f64 {
                continue;
            }
            let i = (r.floor() as usize).min(n - 2);
            let w = r - i as f64;
            bins[i] += 1.0 - w;
            bins[i + 1] += w;
        }
        let reach = ((6.0 * bw / h).ceil() as usize).min(n - 1);
        let kernel: Vec<f64> = (0..=reach)
            .map(|k| {
                let z = k as f64 * h / bw;
                (-0.5 * z * z).exp()
            })
            .collect();
        let mut raw = vec![0.0; n];
        for (j, &b) in bins.iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            let lo = j.saturating_sub(reach);
            let hi = (j + reach).min(n - 1);
            for (i, r) in raw.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *r += b * kernel[i.abs_diff(j)];
            }
        }
        Self::normalize(grid, raw)
    }

    /// Index range of nodes whose CDF lies in `[tail, 1 - tail]`.
    pub fn central_window(&self, tail: f64) -> std::ops::Range<usize> {
        let c = self.cdf_nodes();
        let total = *c.last().unwrap();
        let lo = c.iter().position(|&v| v >= tail * total).unwrap_or(0);
        let hi = c.iter().rposition(|&v| v <= (1.0 - tail) * total).unwrap_or(c.len() - 1);
        lo..hi.max(lo) + 1
    }

    /// L¹ distance `∫ |p - r| dx` (grids must match).
    pub fn l1_distance(&self, other: &GridDensity) -> Result<f64> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch("L1 distance between different grids".into()));
        }
        let diff: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).collect();
        Ok(self.grid.trapezoid(&diff))
    }

    /// Two-column `x,value` CSV with a header line.
    pub fn to_csv_string(&self) -> String {
        grid_csv(&self.grid, &self.values)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_csv_string().as_bytes())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let (xs, vs) = parse_xy_csv(&text).map_err(|message| Error::Parse { path: path.to_path_buf(), message })?;
        let grid = Grid::new(xs[0], *xs.last().unwrap(), xs.len())?;
        let h = grid.spacing();
        if xs.iter().enumerate().any(|(i, x)| (x - grid.node(i)).abs() > 1e-9 * h.max(1.0)) {
            return Err(Error::Parse { path: path.to_path_buf(), message: "x column is not a uniform grid".into() });
        }
        Self::normalize(grid, vs)
    }
}

pub(crate) fn silverman_bandwidth(sd: f64, m: usize) -> f64 {
    1.06 * sd * (m as f64).powf(-0.2)
}

pub(crate) fn cdf_with_nodes(grid: &Grid, p: &[f64], c: &[f64], x: f64) -> f64 {
    let total = *c.last().unwrap();
    if x <= grid.x_min() {
        return 0.0;
    }
    if x >= grid.x_max() {
        return 1.0;
    }
    let h = grid.spacing();
    let (i, xi) = grid.locate(x);
    let slope = (p[i + 1] - p[i]) / h;
    ((c[i] + p[i] * xi + 0.5 * slope * xi * xi) / total).clamp(0.0, 1.0)
}

pub(crate) fn quantile_with_nodes(grid: &Grid, p: &[f64], c: &[f64], u: f64) -> f64 {
    let total = *c.last().unwrap();
    let target = u.clamp(0.0, 1.0) * total;
    if target <= 0.0 {
        let first = p.iter().position(|&v| v > 0.0).unwrap_or(0);
        return grid.node(first.saturating_sub(1));
    }
    if target >= total {
        let last = p.iter().rposition(|&v| v > 0.0).unwrap_or(p.len() - 1);
        return grid.node((last + 1).min(p.len() - 1));
    }
    // first node with c > target, cell is [i-1, i]
    let k = c.partition_point(|&v| v <= target);
    let i = k.saturating_sub(1).min(p.len() - 2);
    let h = grid.spacing();
    let r = target - c[i];
    let a = 0.5 * (p[i + 1] - p[i]) / h;
    let b = p[i];
    let disc = (b * b + 4.0 * a * r).max(0.0);
    let denom = b + disc.sqrt();
    let xi = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
    grid.node(i) + xi.clamp(0.0, h)
}

pub(crate) fn grid_csv(grid: &Grid, values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 48);
    s.push_str("x,value\n");
    for (x, v) in grid.nodes().zip(values) {
        let _ = writeln!(s, "{},{}", crate::io::fmt_f64(x), crate::io::fmt_f64(*v));
    }
    s
}

pub(crate) fn parse_xy_csv(text: &str) -> std::result::Result<(Vec<f64>, Vec<f64>), String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "x,value" => {}
        other => return Err(format!("expected header `x,value`, found {other:?}")),
    }
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    for (no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split(',');
        let parse = |s: Option<&str>| -> std::result::Result<f64, String> {
            s.ok_or_else(|| format!("line {}: missing column", no + 2))?
                .trim()
                .parse::<f64>()
                .map_err(|e| format!("line {}: {e}", no + 2))
        };
        xs.push(parse(it.next())?);
        vs.push(parse(it.next())?);
    }
    if xs.len() < 3 {
        return Err("need at least 3 rows".into());
    }
    Ok((xs, vs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn std_grid() -> Grid {
        Grid::standard()
    }

    #[test]
    fn normalize_constant() {
        let g = Grid::new(0.0, 1.0, 101).unwrap();
        let d = GridDensity::normalize(g, vec![2.0; 101]).unwrap();
        assert!(d.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn normalize_gaussian_mass() {
        let d = GridDensity::gaussian(std_grid(), 0.0, 1.0).unwrap();
        assert!((d.mass() - 1.0).abs() < 1e-9);
        // quadrature of the exact normal pdf is already 1 to high accuracy
        let g = std_grid();
        let pdf: Vec<f64> =
            g.nodes().map(|x| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()).collect();
        assert!((g.trapezoid(&pdf) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn normalize_rejects_bad_input() {
        let g = Grid::new(0.0, 1.0, 11).unwrap();
        assert!(GridDensity::normalize(g, vec![0.0; 11]).is_err());
        let mut v = vec![1.0; 11];
        v[3] = -0.1;
        assert!(GridDensity::normalize(g, v).is_err());
        assert!(GridDensity::normalize(g, vec![1.0; 10]).is_err());
    }

    #[test]
    fn moments_of_gaussians() {
        let d = GridDensity::gaussian(std_grid(), 0.0, 1.0).unwrap();
        assert!((d.moment(2).unwrap() - 1.0).abs() < 1e-4);
        assert!((d.moment(0).unwrap() - 1.0).abs() < 1e-12);
        let d = GridDensity::gaussian(std_grid(), 1.0, 2.0).unwrap();
        assert!((d.moment(1).unwrap() - 1.0).abs() < 1e-4);
        assert!(d.moment(5).is_err());
    }

    #[test]
    fn scores() {
        let g = Grid::new(-3.0, 3.0, 601).unwrap();
        let u = GridDensity::normalize(g, vec![1.0; 601]).unwrap();
        let s = u.score(RELATIVE_CLIP);
        assert!(s.values[1..600].iter().all(|v| v.abs() < 1e-12));

        let d = GridDensity::gaussian(std_grid(), 0.0, 1.0).unwrap();
        let s = d.score(RELATIVE_CLIP);
        assert!((s.interpolate(1.0) + 1.0).abs() < 1e-3);
        let d = GridDensity::gaussian(std_grid(), 1.0, 2.0).unwrap();
        let s = d.score(RELATIVE_CLIP);
        assert!((s.interpolate(0.0) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn gaussian_score_on_central_window() {
        let (m, var) = (0.7, 1.3);
        let d = GridDensity::gaussian(std_grid(), m, var).unwrap();
        let s = d.score(RELATIVE_CLIP);
        let sd = var.sqrt();
        for (i, x) in std_grid().nodes().enumerate() {
            if (x - m).abs() <= 3.0 * sd {
                let exact = -(x - m) / var;
                assert!((s.values[i] - exact).abs() <= 1e-3 * exact.abs().max(1.0), "x={x}");
            }
        }
    }

    #[test]
    fn stationary_score_identity_double_well() {
        let pot = crate::potential::Potential::double_well(1.0).unwrap();
        let g = std_grid();
        let d = GridDensity::from_fn(g, |x| pot.gibbs_density(x)).unwrap();
        let s = d.score(RELATIVE_CLIP);
        for i in d.central_window(1e-3) {
            let x = g.node(i);
            assert!((s.values[i] + 2.0 * pot.gradient(x)).abs() < 1e-3, "x={x}");
        }
    }

    #[test]
    fn kde_from_normal_samples() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let d = GridDensity::from_samples(&xs, std_grid()).unwrap();
        assert!((d.moment(2).unwrap() - 1.0).abs() < 0.02);
        let ys: Vec<f64> = xs.iter().map(|x| x + 3.0).collect();
        let d = GridDensity::from_samples(&ys, std_grid()).unwrap();
        assert!((d.moment(1).unwrap() - 3.0).abs() < 0.02);
        assert!(GridDensity::from_samples(&vec![1.0; 500], std_grid()).is_err());
        assert!(GridDensity::from_samples(&xs[..50], std_grid()).is_err());
    }

    #[test]
    fn quantile_inverts_cdf() {
        let d = GridDensity::gaussian(std_grid(), 0.3, 0.8).unwrap();
        for k in 1..1000 {
            let u = k as f64 / 1000.0;
            let x = d.quantile(u);
            assert!((d.cdf(x) - u).abs() < 1e-10, "u={u}");
        }
    }

    #[test]
    fn csv_round_trip() {
        let d = GridDensity::gaussian(Grid::new(-5.0, 5.0, 101).unwrap(), 0.2, 1.1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        d.write_csv(&path).unwrap();
        let back = GridDensity::read_csv(&path).unwrap();
        assert!(back.grid().same_as(d.grid()));
        for (a, b) in back.values().iter().zip(d.values()) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1e-300));
        }
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(raw in proptest::collection::vec(0.0f64..10.0, 33)) {
            prop_assume!(raw.iter().any(|v| *v > 1e-3));
            let g = Grid::new(-1.0, 2.0, 33).unwrap();
            let d = GridDensity::normalize(g, raw).unwrap();
            let again = GridDensity::normalize(g, d.values().to_vec()).unwrap();
            for (a, b) in d.values().iter().zip(again.values()) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }

        #[test]
        fn variance_is_nonnegative(raw in proptest::collection::vec(0.0f64..10.0, 41)) {
            prop_assume!(raw.iter().any(|v| *v > 1e-3));
            let d = GridDensity::normalize(Grid::new(-4.0, 3.0, 41).unwrap(), raw).unwrap();
            let m1 = d.moment(1).unwrap();
            prop_assert!(d.moment(2).unwrap() >= m1 * m1 - 1e-12);
        }
    }
}
