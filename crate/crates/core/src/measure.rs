//! Strings (speed measures) and jumping-in measures on (0, ∞), with the
//! calculus built on them: Stieltjes integrals, the G^k recursion, the
//! singularity index d(m), condition (C), and the lifetime functional N(γ).

use std::sync::Arc;

use crate::bessel::{BesselJump, BesselString};
use crate::error::{Error, Result};
use crate::grid::{GridMeasure, PanelGrid, NODES};
use crate::quad::{self, DyadicRule, Estimate, Verdict};

/// Deepest grid floor used for near-0 classification (2^-500).
pub const DEEP_FLOOR_LOG2: i32 = -500;

#[derive(Debug, Clone)]
pub enum StringFamily {
    /// m(x) = −coef·x^(−θ), 0 < θ < 1.
    Power { theta: f64, coef: f64 },
    /// m(x) = ρ(x − 1) − 1: constant density ρ, pinned at m(1) = −1.
    Lebesgue { rho: f64 },
    /// String induced by a Bessel-like drift under the natural scale.
    Bessel(Arc<BesselString>),
    /// Right-continuous step function through (x_i, m_i); m ≡ m_1 below x_1.
    Tabulated { xs: Vec<f64>, ms: Vec<f64> },
}

/// A string m(x) = scale · base(dilation · x).
#[derive(Debug, Clone)]
pub struct StringSpec {
    family: StringFamily,
    scale: f64,
    dilation: f64,
}

impl StringSpec {
    pub fn power(theta: f64) -> Result<Self> {
        Self::power_with(theta, 1.0)
    }

    pub fn power_with(theta: f64, coef: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::Parameter(format!(
                "power string needs 0 < θ < 1 (∫_0+ x dm < ∞), got θ = {theta}"
            )));
        }
        if !(coef > 0.0 && coef.is_finite()) {
            return Err(Error::Parameter(format!("power string coefficient must be positive, got {coef}")));
        }
        Ok(Self::raw(StringFamily::Power { theta, coef }))
    }

    pub fn lebesgue(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Parameter(format!("Lebesgue density must be positive, got {rho}")));
        }
        Ok(Self::raw(StringFamily::Lebesgue { rho }))
    }

    pub fn tabulated(xs: Vec<f64>, ms: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || xs.len() != ms.len() {
            return Err(Error::Parameter(
                "tabulated string needs matching, non-empty x and m columns".into(),
            ));
        }
        if xs[0] <= 0.0 || xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parameter(
                "tabulated breakpoints must be positive and strictly ascending".into(),
            ));
        }
        if ms.iter().any(|m| !m.is_finite()) || ms.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Parameter("tabulated string values must be finite and non-decreasing".into()));
        }
        Ok(Self::raw(StringFamily::Tabulated { xs, ms }))
    }

    pub fn bessel(b: Arc<BesselString>) -> Self {
        Self::raw(StringFamily::Bessel(b))
    }

    fn raw(family: StringFamily) -> Self {
        Self { family, scale: 1.0, dilation: 1.0 }
    }

    pub fn family(&self) -> &StringFamily {
        &self.family
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn dilation(&self) -> f64 {
        self.dilation
    }

    /// The string x ↦ a·m(b·x). Power strings stay in closed form.
    pub fn scaled(&self, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::Parameter(format!("scaling factors must be positive, got a={a}, b={b}")));
        }
        if let StringFamily::Power { theta, coef } = self.family {
            let c = coef * self.scale * self.dilation.powf(-theta) * a * b.powf(-theta);
            return Self::power_with(theta, c);
        }
        Ok(Self { family: self.family.clone(), scale: self.scale * a, dilation: self.dilation * b })
    }

    /// (θ, coef) when the string is −coef·x^(−θ).
    pub fn power_params(&self) -> Option<(f64, f64)> {
        match self.family {
            StringFamily::Power { theta, coef } => Some((theta, coef)),
            _ => None,
        }
    }

    fn base_eval(&self, y: f64, left: bool) -> f64 {
        match &self.family {
            StringFamily::Power { theta, coef } => -coef * y.powf(-theta),
            StringFamily::Lebesgue { rho } => rho * (y - 1.0) - 1.0,
            StringFamily::Bessel(b) => b.eval(y),
            StringFamily::Tabulated { xs, ms } => {
                let n = if left { xs.partition_point(|&x| x < y) } else { xs.partition_point(|&x| x <= y) };
                if n == 0 {
                    ms[0]
                } else {
                    ms[n - 1]
                }
            }
        }
    }

    fn base_density(&self, y: f64) -> f64 {
        match &self.family {
            StringFamily::Power { theta, coef } => coef * theta * y.powf(-theta - 1.0),
            StringFamily::Lebesgue { rho } => *rho,
            StringFamily::Bessel(b) => b.density(y),
            StringFamily::Tabulated { .. } => 0.0,
        }
    }

    /// m(x), right-continuous.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("m is defined on (0, ∞), got x = {x}")));
        }
        Ok(self.scale * self.base_eval(self.dilation * x, false))
    }

    /// m(x−).
    pub fn eval_left(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("m is defined on (0, ∞), got x = {x}")));
        }
        Ok(self.scale * self.base_eval(self.dilation * x, true))
    }

    /// Density of the absolutely continuous part of dm.
    pub fn density(&self, x: f64) -> f64 {
        self.scale * self.dilation * self.base_density(self.dilation * x)
    }

    /// Point masses of dm in (lo, hi].
    pub fn atoms(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        match &self.family {
            StringFamily::Tabulated { xs, ms } => (1..xs.len())
                .map(|i| (xs[i] / self.dilation, self.scale * (ms[i] - ms[i - 1])))
                .filter(|&(x, mu)| mu > 0.0 && x > lo && x <= hi)
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Points where m or its density is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.family {
            StringFamily::Tabulated { xs, .. } => xs.iter().map(|x| x / self.dilation).collect(),
            StringFamily::Bessel(b) => b.breakpoints().iter().map(|x| x / self.dilation).collect(),
            _ => Vec::new(),
        }
    }

    /// G_m(x) = ∫_0^x m(y) dy.
    pub fn g_m(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Err(Error::Domain(format!("G_m needs x ≥ 0, got {x}")));
        }
        if x == 0.0 {
            return Ok(0.0);
        }
        let y = self.dilation * x;
        let base = match &self.family {
            StringFamily::Power { theta, coef } => -coef * y.powf(1.0 - theta) / (1.0 - theta),
            StringFamily::Lebesgue { rho } => rho * (0.5 * y * y - y) - y,
            StringFamily::Bessel(b) => b.g_m(y),
            StringFamily::Tabulated { xs, ms } => {
                let mut acc = ms[0] * y.min(xs[0]);
                for i in 0..xs.len() {
                    if y <= xs[i] {
                        break;
                    }
                    let right = if i + 1 < xs.len() { xs[i + 1].min(y) } else { y };
                    acc += ms[i] * (right - xs[i]);
                }
                acc
            }
        };
        Ok(self.scale / self.dilation * base)
    }

    /// m(∞) when finite.
    pub fn m_inf(&self) -> Option<f64> {
        match &self.family {
            StringFamily::Power { .. } | StringFamily::Bessel(_) => Some(0.0),
            StringFamily::Lebesgue { .. } => None,
            StringFamily::Tabulated { ms, .. } => Some(self.scale * ms[ms.len() - 1]),
        }
    }

    /// lim_{x→0+} m(x) (possibly −∞).
    pub fn m_zero(&self) -> f64 {
        match &self.family {
            StringFamily::Power { .. } | StringFamily::Bessel(_) => f64::NEG_INFINITY,
            StringFamily::Lebesgue { rho } => self.scale * (-rho - 1.0),
            StringFamily::Tabulated { ms, .. } => self.scale * ms[0],
        }
    }

    /// m(x, ∞) = m(∞) − m(x); +∞ when the tail is infinite.
    pub fn tail(&self, x: f64) -> f64 {
        match &self.family {
            StringFamily::Power { theta, coef } => coef * x.powf(-theta),
            StringFamily::Bessel(b) => self.scale * b.tail(self.dilation * x),
            _ => match self.m_inf() {
                Some(mi) => mi - self.scale * self.base_eval(self.dilation * x, false),
                None => f64::INFINITY,
            },
        }
    }

    /// Q(x) = ∫_0^x m(y, ∞) dy, the mean lifetime of an excursion started at x.
    pub fn green_mean(&self, x: f64) -> Result<f64> {
        let mi = self.m_inf().ok_or_else(|| Error::Divergence("m(∞) is infinite, so m(y, ∞) = ∞".into()))?;
        if x == 0.0 {
            return Ok(0.0);
        }
        Ok(match self.family {
            StringFamily::Power { theta, coef } => coef * x.powf(1.0 - theta) / (1.0 - theta),
            _ => mi * x - self.g_m(x)?,
        })
    }

    /// Panel grid adapted to this string: dyadic panels, breakpoints and
    /// `extra` points as edges, and panels split while λ·Δm·Δx > 1/2
    /// (Δm excluding an atom on the right edge).
    pub fn grid(&self, x_min: f64, x_max: f64, extra: &[f64], lambda: f64) -> Result<PanelGrid> {
        let mut breaks = self.breakpoints();
        breaks.extend_from_slice(extra);
        breaks.push(1.0);
        PanelGrid::dyadic(x_min, x_max, &breaks, |a, b| {
            if lambda <= 0.0 {
                return false;
            }
            let mass = match (self.eval(a), self.eval_left(b)) {
                (Ok(ma), Ok(mb)) => mb - ma,
                _ => 0.0,
            };
            lambda * mass * (b - a) > 0.5
        })
    }

    /// Density at the nodes (one-sided at panel edges) and atoms on edges.
    pub fn grid_measure(&self, g: &PanelGrid) -> Result<GridMeasure> {
        let density = sided(g, |x| self.density(x));
        let mut atoms = g.zero_atoms();
        let lo = g.edges[0];
        let hi = g.edges[g.edges.len() - 1];
        for (x, mu) in self.atoms(lo * (1.0 - 1e-14), hi) {
            let e = g
                .edge_index(x)
                .ok_or_else(|| Error::Domain(format!("string atom at {x} is not a grid edge")))?;
            atoms[e] += mu;
        }
        Ok(GridMeasure { density, atoms })
    }

    /// Node values of m with left limits at the right end of each panel.
    pub fn grid_values(&self, g: &PanelGrid) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(g.len());
        for (k, &x) in g.x.iter().enumerate() {
            let v = if k % NODES == NODES - 1 { self.eval_left(x)? } else { self.eval(x)? };
            out.push(v);
        }
        Ok(out)
    }
}

/// Evaluates `f` at the nodes, nudging panel-end nodes inward so that
/// piecewise-defined functions are sampled from the correct side.
pub fn sided<F: Fn(f64) -> f64>(g: &PanelGrid, f: F) -> Vec<f64> {
    g.x.iter()
        .enumerate()
        .map(|(k, &x)| match k % NODES {
            0 => f(x * (1.0 + 4.0 * f64::EPSILON)),
            i if i == NODES - 1 => f(x * (1.0 - 4.0 * f64::EPSILON)),
            _ => f(x),
        })
        .collect()
}

/// Gᵏ_m for k = 0..=k_max on a common grid; `dg[k]` holds (Gᵏ)'.
#[derive(Debug, Clone)]
pub struct GTable {
    pub grid: PanelGrid,
    pub dm: GridMeasure,
    pub g: Vec<Vec<f64>>,
    pub dg: Vec<Vec<f64>>,
    /// Edge index of x = 1.
    pub one: usize,
}

impl GTable {
    pub fn build(
        spec: &StringSpec,
        k_max: usize,
        x_min: f64,
        x_max: f64,
        extra: &[f64],
        lambda: f64,
    ) -> Result<Self> {
        let x_max = x_max.max(2.0);
        let grid = spec.grid(x_min, x_max, extra, lambda)?;
        Self::on_grid(spec, k_max, grid)
    }

    /// Builds the table on a given grid, which must contain 1 as an edge.
    pub fn on_grid(spec: &StringSpec, k_max: usize, grid: PanelGrid) -> Result<Self> {
        let x_min = grid.edges[0];
        let dm = spec.grid_measure(&grid)?;
        let one =
            grid.edge_index(1.0).ok_or_else(|| Error::Domain("G^k tables need 1 as a grid edge".into()))?;
        let n = grid.len();
        let m1 = spec.eval(1.0)?;
        let mut g = vec![vec![1.0; n]];
        let mut dg = vec![vec![0.0; n]];
        if k_max >= 1 {
            let mt: Vec<f64> = spec.grid_values(&grid)?.iter().map(|m| m - m1).collect();
            let head = match spec.g_m(x_min) {
                Ok(v) => v - m1 * x_min,
                Err(_) => grid.power_head(&mt),
            };
            g.push(grid.cum(&mt, None, head));
            dg.push(mt);
        }
        for k in 2..=k_max {
            let prev = &g[k - 1];
            let integrand: Vec<f64> = prev.iter().zip(&dm.density).map(|(a, b)| a * b).collect();
            let terms = grid.atom_terms(prev, &dm.atoms);
            let r = grid.rcum(&integrand, Some(&terms), one);
            let d: Vec<f64> = r.iter().map(|v| -v).collect();
            let head = grid.power_head(&d);
            if !head.is_finite() {
                return Err(Error::Divergence(format!("G^{k}_m is not finite near 0")));
            }
            g.push(grid.cum(&d, None, head));
            dg.push(d);
        }
        Ok(Self { grid, dm, g, dg, one })
    }

    pub fn value(&self, k: usize, x: f64) -> f64 {
        self.grid.eval(&self.g[k], x)
    }

    pub fn derivative(&self, k: usize, x: f64) -> f64 {
        self.grid.eval(&self.dg[k], x)
    }
}

fn floor_for(x: f64) -> f64 {
    2f64.powi(-300).min(x * 2f64.powi(-100))
}

/// G_m(x) = ∫_0^x m(y) dy.
pub fn g_m(spec: &StringSpec, x: f64) -> Result<f64> {
    spec.g_m(x)
}

/// Gᵏ_m(x): G¹ = ∫_0^x m̃ with m̃ = m − m(1), and
/// Gᵏ(x) = −∫_0^x dy ∫_y^1 G^{k−1} dm.
pub fn g_k(spec: &StringSpec, k: usize, x: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::Parameter("G^k needs k ≥ 1".into()));
    }
    if x < 0.0 {
        return Err(Error::Domain(format!("G^k needs x ≥ 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let t = GTable::build(spec, k, floor_for(x), 2.0 * x, &[x], 0.0)?;
    Ok(t.value(k, x))
}

/// ∫_{(a, b]} f dm; `b` may be +∞ and `a` may be 0.
pub fn stieltjes_integral(
    spec: &StringSpec,
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<Estimate> {
    let mut est = integrate_density(&|x| spec.density(x), &spec.breakpoints(), f, a, b, tol)?;
    for (x, mu) in spec.atoms(a, b) {
        est.value += f(x) * mu;
    }
    Ok(est)
}

/// ∫_a^b f(x)·density(x) dx split at `breakpoints` and 1, with dyadic
/// marches when a = 0 or b = ∞.
pub fn integrate_density(
    density: &dyn Fn(f64) -> f64,
    breakpoints: &[f64],
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<Estimate> {
    if !(a >= 0.0 && b > a) {
        return Err(Error::Domain(format!("need 0 ≤ a < b, got a={a}, b={b}")));
    }
    let mut value = 0.0;
    let mut error = 0.0;
    let g = |x: f64| {
        let d = density(x);
        if d == 0.0 {
            0.0
        } else {
            f(x) * d
        }
    };
    let mut cuts: Vec<f64> = breakpoints.to_vec();
    cuts.push(1.0);
    let first = cuts.iter().copied().filter(|&c| c > 0.0).fold(1.0, f64::min);
    let last = cuts.iter().copied().filter(|c| c.is_finite()).fold(1.0, f64::max);
    let lo = if a == 0.0 { b.min(first) } else { a };
    let hi = if b.is_infinite() { lo.max(last) } else { b };
    let rule = DyadicRule { tail_tol: tol.max(1e-14), ..DyadicRule::default() };
    if a == 0.0 {
        let est = quad::integrate_to_zero(g, lo, &rule)?.into_result("∫_0 f dμ")?;
        value += est.value;
        error += est.error;
    }
    let mut pts: Vec<f64> = cuts.into_iter().filter(|&c| c > lo && c < hi).collect();
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    for w in pts.windows(2) {
        let est = quad::integrate(g, w[0], w[1], tol)?;
        value += est.value;
        error += est.error;
    }
    if b.is_infinite() {
        let est = quad::integrate_to_infinity(g, hi, &rule)?.into_result("∫^∞ f dμ")?;
        value += est.value;
        error += est.error;
    }
    Ok(Estimate { value, error })
}

/// Singularity index d(m), or the fact that it exceeds the search bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularityIndex {
    Finite(usize),
    ExceedsMax(usize),
}

/// Smallest k with ∫_0^1 (−1)ᵏGᵏ dm < ∞, decided from dyadic partial
/// integrals over (2^{-j-1}, 2^{-j}].
pub fn d_of_m(spec: &StringSpec, d_max: usize) -> Result<SingularityIndex> {
    if d_max == 0 {
        return Err(Error::Parameter("d_max must be at least 1".into()));
    }
    if spec.m_zero().is_finite() {
        return Ok(SingularityIndex::Finite(0));
    }
    let floor = 2f64.powi(DEEP_FLOOR_LOG2);
    let t = GTable::build(spec, d_max, floor, 2.0, &[], 0.0)?;
    let grid = &t.grid;
    let dyads = (-DEEP_FLOOR_LOG2) as usize;
    for k in 1..=d_max {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let integrand: Vec<f64> = t.g[k].iter().zip(&t.dm.density).map(|(g, d)| sign * g * d).collect();
        let totals = grid.panel_totals(&integrand);
        let terms = grid.atom_terms(&t.g[k], &t.dm.atoms);
        let mut partial = vec![0.0; dyads];
        for p in 0..grid.panels() {
            let right = grid.edges[p + 1];
            if right > 1.0 * (1.0 + 1e-14) {
                break;
            }
            let j = (-(grid.edges[p].log2()) - 1.0).round().max(0.0) as usize;
            if j < dyads {
                partial[j] += totals[p] + sign * terms[p + 1];
            }
        }
        let verdict = quad::classify_series(
            |j| Ok(partial[j]),
            &DyadicRule { max_dyads: dyads, ..DyadicRule::default() },
        )?;
        match verdict {
            Verdict::Converges { .. } => return Ok(SingularityIndex::Finite(k)),
            Verdict::Diverges { .. } => continue,
            Verdict::Indeterminate { partial, bound } => {
                return Err(Error::Indeterminate {
                    what: format!("∫_0^1 (−1)^{k} G^{k} dm"),
                    lower: partial,
                    upper: bound,
                })
            }
        }
    }
    Ok(SingularityIndex::ExceedsMax(d_max))
}

/// Checks ∫_{0+} x dm < ∞, the defining integrability of the string class.
pub fn check_string_class(spec: &StringSpec) -> Result<f64> {
    let f = |x: f64| x;
    stieltjes_integral(spec, &f, 0.0, 1.0, 1e-10).map(|e| e.value)
}

#[derive(Debug, Clone)]
pub enum JumpShape {
    /// Density coef·x^(−β−1) on (lo, hi].
    Power {
        lo: f64,
        hi: f64,
        coef: f64,
        beta: f64,
    },
    Bessel(Arc<BesselJump>),
}

impl JumpShape {
    fn density(&self, y: f64) -> f64 {
        match self {
            JumpShape::Power { lo, hi, coef, beta } => {
                if y > *lo && y <= *hi {
                    coef * y.powf(-beta - 1.0)
                } else {
                    0.0
                }
            }
            JumpShape::Bessel(b) => b.density(y),
        }
    }

    fn tail(&self, y: f64) -> f64 {
        match self {
            JumpShape::Power { lo, hi, coef, beta } => {
                let l = y.max(*lo);
                if l >= *hi {
                    return 0.0;
                }
                if l == 0.0 {
                    return if *beta >= 0.0 { f64::INFINITY } else { coef / beta * (-hi.powf(-beta)) };
                }
                if *beta == 0.0 {
                    coef * (hi / l).ln()
                } else {
                    let top = if hi.is_infinite() { 0.0 } else { hi.powf(-beta) };
                    coef / beta * (l.powf(-beta) - top)
                }
            }
            JumpShape::Bessel(b) => b.tail(y),
        }
    }

    /// Smallest y with tail(y) ≤ target, for 0 < target ≤ tail(0+).
    fn inverse_tail(&self, target: f64) -> f64 {
        match self {
            JumpShape::Power { lo, hi, coef, beta } => {
                let y = if *beta == 0.0 {
                    hi * (-target / coef).exp()
                } else {
                    let top = if hi.is_infinite() { 0.0 } else { hi.powf(-beta) };
                    (target * beta / coef + top).powf(-1.0 / beta)
                };
                y.clamp(*lo, *hi)
            }
            JumpShape::Bessel(b) => b.inverse_tail(target),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            JumpShape::Power { lo, hi, .. } => {
                [*lo, *hi].into_iter().filter(|v| *v > 0.0 && v.is_finite()).collect()
            }
            JumpShape::Bessel(b) => b.breakpoints(),
        }
    }
}

/// One summand c·base(d(b·x)) of a jumping-in measure.
#[derive(Debug, Clone)]
pub struct JumpPart {
    pub shape: JumpShape,
    pub scale: f64,
    pub dilation: f64,
}

/// A jumping-in measure j on (0, ∞), a finite sum of scaled shapes.
#[derive(Debug, Clone, Default)]
pub struct JumpMeasureSpec {
    pub parts: Vec<JumpPart>,
}

impl JumpMeasureSpec {
    /// Density coef·x^(−β−1) on (lo, hi].
    pub fn power_piece(lo: f64, hi: f64, coef: f64, beta: f64) -> Result<Self> {
        if !(lo >= 0.0 && hi > lo && coef > 0.0 && beta.is_finite()) {
            return Err(Error::Parameter(format!(
                "power piece needs 0 ≤ lo < hi and coef > 0 (lo={lo}, hi={hi}, coef={coef}, β={beta})"
            )));
        }
        if hi.is_infinite() && beta <= 0.0 {
            return Err(Error::Parameter("an unbounded power piece needs β > 0 (finite tail)".into()));
        }
        Ok(Self::single(JumpShape::Power { lo, hi, coef, beta }))
    }

    /// Jump measure with tail j(x, ∞) = coef·x^(−β) on (0, ∞).
    pub fn power_tail(coef: f64, beta: f64) -> Result<Self> {
        Self::power_piece(0.0, f64::INFINITY, coef * beta, beta)
    }

    pub fn from_shape(shape: JumpShape) -> Self {
        Self::single(shape)
    }

    fn single(shape: JumpShape) -> Self {
        Self { parts: vec![JumpPart { shape, scale: 1.0, dilation: 1.0 }] }
    }

    pub fn plus(&self, other: &JumpMeasureSpec) -> Self {
        Self { parts: self.parts.iter().chain(&other.parts).cloned().collect() }
    }

    /// The measure with tail x ↦ c·j(b·x, ∞).
    pub fn scaled(&self, c: f64, b: f64) -> Result<Self> {
        if !(c > 0.0 && b > 0.0 && c.is_finite() && b.is_finite()) {
            return Err(Error::Parameter(format!("scaling factors must be positive, got c={c}, b={b}")));
        }
        Ok(Self {
            parts: self
                .parts
                .iter()
                .map(|p| JumpPart { shape: p.shape.clone(), scale: p.scale * c, dilation: p.dilation * b })
                .collect(),
        })
    }

    pub fn density(&self, x: f64) -> f64 {
        self.parts.iter().map(|p| p.scale * p.dilation * p.shape.density(p.dilation * x)).sum()
    }

    /// j(x, ∞).
    pub fn tail(&self, x: f64) -> f64 {
        self.parts.iter().map(|p| p.scale * p.shape.tail(p.dilation * x)).sum()
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .parts
            .iter()
            .flat_map(|p| p.shape.breakpoints().into_iter().map(move |b| b / p.dilation))
            .collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// Per-part tail mass above `eps`.
    pub fn part_tails(&self, eps: f64) -> Vec<f64> {
        self.parts.iter().map(|p| p.scale * p.shape.tail(p.dilation * eps)).collect()
    }

    /// Point x ≥ eps of part `i` with j_i(x, ∞) = `target`.
    pub fn part_inverse_tail(&self, i: usize, target: f64) -> f64 {
        let p = &self.parts[i];
        p.shape.inverse_tail(target / p.scale) / p.dilation
    }

    /// ∫_{(a, b]} f dj.
    pub fn integrate(&self, f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<Estimate> {
        integrate_density(&|x| self.density(x), &self.breakpoints(), f, a, b, tol)
    }

    /// Density at grid nodes, one-sided at panel edges.
    pub fn grid_density(&self, g: &PanelGrid) -> Vec<f64> {
        sided(g, |x| self.density(x))
    }
}

/// Witnesses of condition (C).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionC {
    pub holds: bool,
    /// j(1, ∞)
    pub tail_mass: f64,
    /// ∫_0^1 x j(dx)
    pub first_moment: f64,
    /// ∫_0^1 |G_m| dj
    pub g_moment: f64,
    /// j(0, 1) = ∞
    pub infinite_near_zero: bool,
}

fn near_zero(f: impl Fn(f64) -> f64, what: &str) -> Result<f64> {
    match quad::integrate_to_zero(f, 1.0, &DyadicRule::default())? {
        Verdict::Converges { value, .. } => Ok(value),
        Verdict::Diverges { .. } => Ok(f64::INFINITY),
        Verdict::Indeterminate { partial, bound } => {
            Err(Error::Indeterminate { what: what.to_string(), lower: partial, upper: bound })
        }
    }
}

pub fn check_condition_c(m: &StringSpec, j: &JumpMeasureSpec) -> Result<ConditionC> {
    let tail_mass = j.tail(1.0);
    let first_moment = near_zero(|x| x * j.density(x), "∫_0^1 x dj")?;
    let g_moment = near_zero(
        |x| {
            let d = j.density(x);
            if d == 0.0 {
                0.0
            } else {
                m.g_m(x).map(f64::abs).unwrap_or(f64::INFINITY) * d
            }
        },
        "∫_0^1 |G_m| dj",
    )?;
    let mass = near_zero(|x| j.density(x), "j(0, 1)")?;
    let infinite_near_zero = mass.is_infinite();
    let holds =
        tail_mass.is_finite() && first_moment.is_finite() && g_moment.is_finite() && infinite_near_zero;
    Ok(ConditionC { holds, tail_mass, first_moment, g_moment, infinite_near_zero })
}

/// N(γ) = ∫_0^γ j(dx) ∫_0^x dy ∫_y^γ dm(z) ∫_0^z m(w, ∞) dw.
pub fn n_of_gamma(m: &StringSpec, j: &JumpMeasureSpec, gamma: f64) -> Result<f64> {
    if gamma < 0.0 || gamma.is_nan() {
        return Err(Error::Domain(format!("N(γ) needs γ ≥ 0, got {gamma}")));
    }
    if gamma == 0.0 {
        return Ok(0.0);
    }
    m.green_mean(1.0)?;
    let x_min = floor_for(gamma);
    let mut extra = j.breakpoints();
    extra.push(gamma);
    let grid = m.grid(x_min, gamma, &extra, 0.0)?;
    let dm = m.grid_measure(&grid)?;
    let q = grid.x.iter().map(|&x| m.green_mean(x)).collect::<Result<Vec<f64>>>()?;
    let integrand: Vec<f64> = q.iter().zip(&dm.density).map(|(a, b)| a * b).collect();
    let terms = grid.atom_terms(&q, &dm.atoms);
    let inner = grid.rcum(&integrand, Some(&terms), grid.edges.len() - 1);
    let h = grid.cum(&inner, None, grid.power_head(&inner));
    let jd = j.grid_density(&grid);
    let hj: Vec<f64> = h.iter().zip(&jd).map(|(a, b)| a * b).collect();
    let head = grid.power_head(&hj);
    let value = grid.total(&hj, None) + if head.is_finite() { head } else { 0.0 };
    if !value.is_finite() {
        return Err(Error::Overflow("N(γ) is not finite".into()));
    }
    Ok(value)
}

/// Order used for the M(γ) surrogate: the largest integer below α.
pub fn karamata_order(alpha: f64) -> usize {
    (alpha.ceil() - 1.0).max(0.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FmQuantities {
    /// F(γ) = ∫_0^γ x dm(x).
    pub f: f64,
    /// γ^{(N+1−α)/α}·K(γ)^{N+1}, an asymptotic order of magnitude only.
    pub m_surrogate: f64,
    pub order: usize,
    pub asymptotic_only: bool,
}

pub fn f_m_quantities(
    m: &StringSpec,
    gamma: f64,
    alpha: f64,
    k: &dyn Fn(f64) -> f64,
) -> Result<FmQuantities> {
    if gamma < 1.0 {
        return Err(Error::Domain(format!("F/M quantities need γ ≥ 1, got {gamma}")));
    }
    let f = match m.power_params() {
        Some((theta, coef)) => coef * theta * gamma.powf(1.0 - theta) / (1.0 - theta),
        None => stieltjes_integral(m, &|x| x, 0.0, gamma, 1e-10)?.value,
    };
    let order = karamata_order(alpha);
    let n1 = (order + 1) as f64;
    let m_surrogate = gamma.powf((n1 - alpha) / alpha) * k(gamma).powf(n1);
    Ok(FmQuantities { f, m_surrogate, order, asymptotic_only: true })
}
