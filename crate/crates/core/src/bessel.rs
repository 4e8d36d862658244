//! Bessel-like drift family: drifts b = W'/W with W(x) = exp ∫_{x0}^x b
//! regularly varying, the strings they induce under the natural scale, the
//! matching jumping-in measures, and the constants of the N(γ) asymptotics.

use std::f64::consts::LN_10;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::PanelGrid;
use crate::measure::{JumpMeasureSpec, JumpShape, StringSpec};

/// Largest natural-scale coordinate covered by the Bessel string tables.
const SCALE_CEILING_LOG10: f64 = 250.0;
/// Upper end of the tabulated jump tail.
const JUMP_TOP: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselDriftSpec {
    pub delta: f64,
    /// Log-perturbation exponent: ℓ(x) = (log x / log x0)^(s−1) above x0.
    pub s: f64,
    pub x0: f64,
    pub eta_bar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub x0: f64,
    /// Residual of the calibration equation in log x0 (0 when solved).
    pub residual: f64,
    pub solved: bool,
}

impl BesselDriftSpec {
    pub fn new(delta: f64, s: f64, x0: f64, eta_bar: f64) -> Result<Self> {
        if !(delta < 0.0 && delta.is_finite()) {
            return Err(Error::Parameter(format!("δ must be negative, got {delta}")));
        }
        if !s.is_finite() || !eta_bar.is_finite() {
            return Err(Error::Parameter("s and η̄ must be finite".into()));
        }
        if !(x0 > 0.0 && x0.is_finite()) {
            return Err(Error::Parameter(format!("x0 must be positive, got {x0}")));
        }
        if s != 1.0 && x0 <= 1.0 {
            return Err(Error::Parameter(format!("the log-perturbed family (s ≠ 1) needs x0 > 1, got {x0}")));
        }
        Ok(Self { delta, s, x0, eta_bar })
    }

    /// δ for tail index α: α = 1 − δ/2.
    pub fn delta_for_alpha(alpha: f64) -> Result<f64> {
        if !(alpha > 1.0 && alpha.is_finite()) {
            return Err(Error::Parameter(format!("α must exceed 1, got {alpha}")));
        }
        Ok(2.0 - 2.0 * alpha)
    }

    /// Drift with tail index α and x0 chosen so that K(x) ~ (log x)^((s−1)/α).
    pub fn calibrated(alpha: f64, s: f64, eta_bar: f64) -> Result<(Self, Calibration)> {
        let delta = Self::delta_for_alpha(alpha)?;
        let cal = calibrate_x0(alpha, s, eta_bar)?;
        Ok((Self::new(delta, s, cal.x0, eta_bar)?, cal))
    }

    pub fn alpha(&self) -> f64 {
        1.0 - 0.5 * self.delta
    }

    /// c with W(x) = c·x^(δ−1)·ℓ(x).
    pub fn prefactor(&self) -> f64 {
        ((1.0 - self.delta) * self.x0.ln() + self.eta_bar).exp()
    }

    pub fn ell(&self, x: f64) -> f64 {
        if self.s == 1.0 || x <= self.x0 {
            1.0
        } else {
            (x.ln() / self.x0.ln()).powf(self.s - 1.0)
        }
    }

    fn w_unchecked(&self, x: f64) -> f64 {
        self.prefactor() * x.powf(self.delta - 1.0) * self.ell(x)
    }

    /// W(x) = exp ∫_{x0}^x b.
    pub fn w(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("W is defined on (0, ∞), got x = {x}")));
        }
        Ok(self.w_unchecked(x))
    }

    /// b(x) = W'(x)/W(x).
    pub fn b(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("b is defined on (0, ∞), got x = {x}")));
        }
        let mut v = (self.delta - 1.0) / x;
        if self.s != 1.0 && x > self.x0 {
            v += (self.s - 1.0) / (x * x.ln());
        }
        Ok(v)
    }

    /// The intended slowly varying part K(x) = (log x)^((s−1)/α) of the tail.
    pub fn k_target(&self, x: f64) -> f64 {
        if self.s == 1.0 {
            1.0
        } else {
            x.ln().powf((self.s - 1.0) / self.alpha())
        }
    }
}

/// Solves (2α−1)L + η̄ = (α−1)ln(2α) + (s−1)ln(2αL) for L = ln x0.
/// For s > 1 the larger root is taken; without a root the minimiser is
/// returned together with its residual.
pub fn calibrate_x0(alpha: f64, s: f64, eta_bar: f64) -> Result<Calibration> {
    if !(alpha > 1.0 && alpha.is_finite() && s.is_finite() && eta_bar.is_finite()) {
        return Err(Error::Parameter(format!("calibration needs α > 1 and finite s, η̄ (α={alpha}, s={s})")));
    }
    let a2 = 2.0 * alpha - 1.0;
    let rhs0 = (alpha - 1.0) * (2.0 * alpha).ln() - eta_bar;
    if s == 1.0 {
        let l = rhs0 / a2;
        return Ok(Calibration { x0: l.exp(), residual: 0.0, solved: true });
    }
    let f = |l: f64| a2 * l - rhs0 - (s - 1.0) * (2.0 * alpha * l).ln();
    let bisect = |mut lo: f64, mut hi: f64| {
        let up = f(hi) > 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == up {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let mut hi = 1.0;
    while f(hi) <= 0.0 {
        hi *= 2.0;
    }
    if s < 1.0 {
        let mut lo = 1.0;
        while f(lo) >= 0.0 {
            lo *= 0.5;
        }
        let l = bisect(lo, hi);
        return Ok(Calibration { x0: l.exp(), residual: 0.0, solved: true });
    }
    let l_star = (s - 1.0) / a2;
    let fmin = f(l_star);
    if fmin < 0.0 {
        let mut hi = 2.0 * l_star;
        while f(hi) <= 0.0 {
            hi *= 2.0;
        }
        let l = bisect(l_star, hi);
        Ok(Calibration { x0: l.exp(), residual: 0.0, solved: true })
    } else {
        Ok(Calibration { x0: l_star.exp(), residual: fmin, solved: fmin == 0.0 })
    }
}

/// Natural-scale string of a log-perturbed Bessel drift, tabulated in the
/// original coordinate y above x0 and closed-form below.
///
/// With s̃(y) = ∫_0^y dz/W and T(y) = ∫_y^∞ W, the string is
/// m(s̃(y)) = −2T(y), its density is 2W(y)², and G_m(s̃(y)) = −2∫_0^y T/W.
#[derive(Debug, Clone)]
pub struct BesselString {
    drift: BesselDriftSpec,
    c: f64,
    grid: PanelGrid,
    s_tab: Vec<f64>,
    t_tab: Vec<f64>,
    g_tab: Vec<f64>,
    s0: f64,
    t0: f64,
    s_max: f64,
    y_max: f64,
    g_max: f64,
}

impl BesselString {
    pub fn new(drift: BesselDriftSpec) -> Result<Self> {
        let c = drift.prefactor();
        let d = drift.delta;
        let p = 2.0 - d;
        let x0 = drift.x0;
        let s0 = x0.powf(p) / (c * p);
        let y_max = ((SCALE_CEILING_LOG10 * LN_10 + (c * p).ln()) / p).exp() * 0.5;
        if !(y_max > 4.0 * x0) {
            return Err(Error::Parameter(format!("x0 = {x0} leaves no room for the string tables")));
        }
        let grid = PanelGrid::dyadic(x0, y_max, &[], |_, _| false)?;
        let w = grid.map(|y| drift.w_unchecked(y));
        let inv_w: Vec<f64> = w.iter().map(|v| 1.0 / v).collect();
        let s_tab = grid.cum(&inv_w, None, s0);
        let top = grid.edges.len() - 1;
        let tail_top = Self::asymptotic_tail(&drift, c, y_max);
        let t_tab: Vec<f64> = grid.rcum(&w, None, top).iter().map(|v| v + tail_top).collect();
        let t0 = t_tab[0];
        let g0 = Self::g_closed(d, c, x0, t0, x0);
        let ratio: Vec<f64> = t_tab.iter().zip(&w).map(|(t, w)| -2.0 * t / w).collect();
        let g_tab = grid.cum(&ratio, None, g0);
        let s_max = *s_tab.last().unwrap();
        let g_max = *g_tab.last().unwrap();
        Ok(Self { drift, c, grid, s_tab, t_tab, g_tab, s0, t0, s_max, y_max, g_max })
    }

    fn asymptotic_tail(drift: &BesselDriftSpec, c: f64, y: f64) -> f64 {
        let ad = -drift.delta;
        c * drift.ell(y) * y.powf(drift.delta) / (ad - (drift.s - 1.0) / y.ln())
    }

    fn g_closed(d: f64, c: f64, x0: f64, t0: f64, y: f64) -> f64 {
        let ad = -d;
        let p = 2.0 - d;
        let yp = y.powf(p);
        -2.0 * ((0.5 * y * y - x0.powf(d) * yp / p) / ad + t0 * yp / (c * p))
    }

    pub fn drift(&self) -> &BesselDriftSpec {
        &self.drift
    }

    /// s̃(y) = ∫_0^y dz / W(z).
    pub fn scale_fn(&self, y: f64) -> f64 {
        let p = 2.0 - self.drift.delta;
        if y <= self.drift.x0 {
            y.powf(p) / (self.c * p)
        } else if y <= self.y_max {
            self.grid.eval(&self.s_tab, y)
        } else {
            let d = self.drift;
            self.s_max + (y.powf(p) / d.ell(y) - self.y_max.powf(p) / d.ell(self.y_max)) / (self.c * p)
        }
    }

    /// T(y) = ∫_y^∞ W.
    pub fn w_tail(&self, y: f64) -> f64 {
        let d = self.drift;
        if y <= d.x0 {
            self.c * (y.powf(d.delta) - d.x0.powf(d.delta)) / (-d.delta) + self.t0
        } else if y <= self.y_max {
            self.grid.eval(&self.t_tab, y)
        } else {
            Self::asymptotic_tail(&d, self.c, y)
        }
    }

    fn g_of_y(&self, y: f64) -> f64 {
        let d = self.drift;
        if y <= d.x0 {
            Self::g_closed(d.delta, self.c, d.x0, self.t0, y)
        } else if y <= self.y_max {
            self.grid.eval(&self.g_tab, y)
        } else {
            self.g_max - (y * y - self.y_max * self.y_max) / (-d.delta)
        }
    }

    /// s̃^{-1}(x): closed form below s̃(x0), bracketed Newton in the tables,
    /// and a fixed point of the leading asymptotics beyond them.
    pub fn y_of(&self, x: f64) -> f64 {
        let d = self.drift;
        let p = 2.0 - d.delta;
        if x <= self.s0 {
            return (self.c * p * x).powf(1.0 / p);
        }
        if x > self.s_max {
            let target = (self.c * p * x).ln();
            let lx0 = d.x0.ln();
            let mut ly = self.y_max.ln();
            for _ in 0..100 {
                ly = (target + (d.s - 1.0) * (ly / lx0).ln()) / p;
            }
            return ly.exp();
        }
        let e = self.grid.edges.len();
        let edge_s = |i: usize| if i == 0 { self.s0 } else { self.grid.at_edge(&self.s_tab, i).0 };
        let (mut lo_i, mut hi_i) = (0usize, e - 1);
        while hi_i - lo_i > 1 {
            let mid = (lo_i + hi_i) / 2;
            if edge_s(mid) <= x {
                lo_i = mid;
            } else {
                hi_i = mid;
            }
        }
        let (mut lo, mut hi) = (self.grid.edges[lo_i], self.grid.edges[hi_i]);
        let mut y = (lo * hi).sqrt();
        for _ in 0..100 {
            let f = self.scale_fn(y) - x;
            if f > 0.0 {
                hi = y;
            } else {
                lo = y;
            }
            if f.abs() <= 1e-15 * x || hi - lo <= 1e-15 * hi {
                break;
            }
            let step = f * d.w_unchecked(y);
            let next = y - step;
            y = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        }
        y
    }

    /// m(x) = −2T(s̃^{-1}(x)).
    pub fn eval(&self, x: f64) -> f64 {
        -2.0 * self.w_tail(self.y_of(x))
    }

    /// m(x, ∞).
    pub fn tail(&self, x: f64) -> f64 {
        2.0 * self.w_tail(self.y_of(x))
    }

    /// dm/dx = 2W(y)².
    pub fn density(&self, x: f64) -> f64 {
        let w = self.drift.w_unchecked(self.y_of(x));
        2.0 * w * w
    }

    /// G_m(x) = ∫_0^x m.
    pub fn g_m(&self, x: f64) -> f64 {
        self.g_of_y(self.y_of(x))
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        vec![self.s0]
    }
}

/// Tail index α = 1 − δ/2 of the induced string.
pub fn alpha_of_delta(delta: f64) -> Result<f64> {
    if !(delta < 0.0) {
        return Err(Error::Parameter(format!("δ must be negative, got {delta}")));
    }
    Ok(1.0 - 0.5 * delta)
}

/// The string under the natural scale. For s = 1 it is exactly the power
/// string −coef·x^(−θ) with θ = −δ/(2−δ).
pub fn natural_scale_string(drift: &BesselDriftSpec) -> Result<StringSpec> {
    if drift.s == 1.0 {
        let (theta, coef) = pure_power_params(drift);
        return StringSpec::power_with(theta, coef);
    }
    Ok(StringSpec::bessel(Arc::new(BesselString::new(*drift)?)))
}

fn pure_power_params(drift: &BesselDriftSpec) -> (f64, f64) {
    let d = drift.delta;
    let c = drift.prefactor();
    let p = 2.0 - d;
    let theta = -d / p;
    let coef = 2.0 * c / (-d) * (c * p).powf(d / p);
    (theta, coef)
}

/// Observed K(x) = (α−1)·x^(1−1/α)·m(x, ∞).
pub fn observed_k(string: &StringSpec, alpha: f64, x: f64) -> f64 {
    (alpha - 1.0) * x.powf(1.0 - 1.0 / alpha) * string.tail(x)
}

/// Samples m at `n` log-spaced points on [x_lo, x_hi] as a step table.
pub fn to_tabulated(string: &StringSpec, x_lo: f64, x_hi: f64, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(x_lo > 0.0 && x_hi > x_lo && n >= 2) {
        return Err(Error::Parameter("tabulation needs 0 < x_lo < x_hi and n ≥ 2".into()));
    }
    let r = (x_hi / x_lo).ln() / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|i| x_lo * (r * i as f64).exp()).collect();
    let ms = xs.iter().map(|&x| string.eval(x)).collect::<Result<Vec<f64>>>()?;
    Ok((xs, ms))
}

/// Jumping-in measure with density (2/α)·x^(−a−1) on (0, 1] and
/// (2/α)·min(x^(−a−1), (log x)^(t−1)·x^(−2/α−1)) on (1, ∞).
#[derive(Debug, Clone)]
pub struct BesselJump {
    pub alpha: f64,
    pub a: f64,
    pub t: f64,
    beta: f64,
    tail_one: f64,
    crossovers: Vec<f64>,
    table: Option<(PanelGrid, Vec<f64>)>,
}

impl BesselJump {
    pub fn new(alpha: f64, a: f64, t: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha.is_finite()) {
            return Err(Error::Parameter(format!("α must exceed 1, got {alpha}")));
        }
        if !(a > 0.0 && a < 1.0 / alpha) {
            return Err(Error::Parameter(format!("need 0 < a < 1/α = {}, got a = {a}", 1.0 / alpha)));
        }
        if !t.is_finite() {
            return Err(Error::Parameter("t must be finite".into()));
        }
        let beta = 2.0 / alpha;
        let mut j = Self { alpha, a, t, beta, tail_one: 1.0, crossovers: Vec::new(), table: None };
        if t != 1.0 {
            j.crossovers = j.find_crossovers();
            let mut breaks = j.crossovers.clone();
            if t > 1.0 {
                breaks.extend((1..=60).map(|k| 1.0 + 2f64.powi(-k)));
            }
            let lo = if t > 1.0 { 1.0 + 2f64.powi(-60) } else { 1.0 };
            let grid = PanelGrid::dyadic(lo, JUMP_TOP, &breaks, |_, _| false)?;
            let dens = grid.map(|x| j.density(x));
            let top = grid.edges.len() - 1;
            let top_tail = j.asymptotic_tail(JUMP_TOP);
            let tail: Vec<f64> = grid.rcum(&dens, None, top).iter().map(|v| v + top_tail).collect();
            let head = if t > 1.0 { beta * 2f64.powi(-60).powf(t) / t } else { 0.0 };
            j.tail_one = tail[0] + head;
            j.table = Some((grid, tail));
        }
        Ok(j)
    }

    /// Points y > 1 where the two branches of the min cross:
    /// (2/α − a)·ln y = (t − 1)·ln ln y.
    fn find_crossovers(&self) -> Vec<f64> {
        let h = |u: f64| (self.beta - self.a) * u.exp() - (self.t - 1.0) * u;
        let mut out = Vec::new();
        let (u_lo, u_hi) = (-40.0f64, JUMP_TOP.ln().ln());
        let n = 4000;
        let step = (u_hi - u_lo) / n as f64;
        for i in 0..n {
            let (mut a, mut b) = (u_lo + i as f64 * step, u_lo + (i + 1) as f64 * step);
            if (h(a) > 0.0) != (h(b) > 0.0) {
                let sa = h(a) > 0.0;
                for _ in 0..100 {
                    let m = 0.5 * (a + b);
                    if (h(m) > 0.0) == sa {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                out.push((0.5 * (a + b)).exp().exp());
            }
        }
        out
    }

    fn asymptotic_tail(&self, x: f64) -> f64 {
        let u = x.ln();
        u.powf(self.t - 1.0) * x.powf(-self.beta) * (1.0 + (self.t - 1.0) / (self.beta * u))
    }

    pub fn density(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        let head = x.powf(-self.a - 1.0);
        if x <= 1.0 {
            return self.beta * head;
        }
        let body = x.ln().powf(self.t - 1.0) * x.powf(-self.beta - 1.0);
        self.beta * head.min(body)
    }

    /// j(x, ∞).
    pub fn tail(&self, x: f64) -> f64 {
        if x < 1.0 {
            return self.tail_one + self.beta * (x.powf(-self.a) - 1.0) / self.a;
        }
        match &self.table {
            None => x.powf(-self.beta),
            Some((grid, tail)) => {
                if x <= grid.edges[0] {
                    self.tail_one
                } else if x <= JUMP_TOP {
                    grid.eval(tail, x)
                } else {
                    self.asymptotic_tail(x)
                }
            }
        }
    }

    /// Smallest x with j(x, ∞) ≤ target.
    pub fn inverse_tail(&self, target: f64) -> f64 {
        if target >= self.tail_one {
            return (1.0 + self.a * (target - self.tail_one) / self.beta).powf(-1.0 / self.a);
        }
        let Some((grid, tail)) = &self.table else {
            return target.powf(-1.0 / self.beta);
        };
        if target < self.tail(JUMP_TOP) {
            let mut u = JUMP_TOP.ln();
            for _ in 0..100 {
                u = ((self.t - 1.0) * u.ln() - target.ln()) / self.beta;
            }
            return u.exp();
        }
        let edges = &grid.edges;
        let (mut i, mut k) = (0usize, edges.len() - 1);
        while k - i > 1 {
            let mid = (i + k) / 2;
            if grid.at_edge(tail, mid).1 > target {
                i = mid;
            } else {
                k = mid;
            }
        }
        let (mut lo, mut hi) = (edges[i], edges[k]);
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if self.tail(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        hi
    }

    /// L(x) = (log x)^(t−1).
    pub fn slowly_varying(&self, x: f64) -> f64 {
        x.ln().powf(self.t - 1.0)
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v = vec![1.0];
        v.extend(self.crossovers.iter().copied());
        if self.t > 1.0 && self.t.fract() != 0.0 {
            v.extend((1..=20).map(|k| 1.0 + 2f64.powi(-k)));
        }
        v
    }
}

pub fn example_jump_measure(alpha: f64, a: f64, t: f64) -> Result<JumpMeasureSpec> {
    Ok(JumpMeasureSpec::from_shape(JumpShape::Bessel(Arc::new(BesselJump::new(alpha, a, t)?))))
}

/// Constant C in N(γ) ~ C·(log γ)^q, with q from `n_asymptotic_exponent`.
pub fn n_asymptotic_constant(alpha: f64, s: f64, t: f64) -> Result<f64> {
    if alpha == 2.0 {
        if !(t > 0.0 && s + t > 0.0) {
            return Err(Error::Parameter(format!("α = 2 needs t > 0 and s + t > 0 (s={s}, t={t})")));
        }
        return Ok(1.0 / (t * (s + t)));
    }
    if !(alpha > 2.0 && alpha.is_finite()) {
        return Err(Error::Parameter(format!("N asymptotics need α ≥ 2, got {alpha}")));
    }
    let q = 2.0 * (s - 1.0) / alpha + t;
    if !(q > 0.0) {
        return Err(Error::Parameter(format!("need 2(s−1)/α + t > 0, got {q}")));
    }
    Ok(alpha / ((alpha - 1.0) * (alpha - 2.0)) / q)
}

/// Power of log γ in the N(γ) asymptotics: 2(s−1)/α + t for α > 2 and
/// s + t for α = 2.
pub fn n_asymptotic_exponent(alpha: f64, s: f64, t: f64) -> f64 {
    if alpha == 2.0 {
        s + t
    } else {
        2.0 * (s - 1.0) / alpha + t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{d_of_m, n_of_gamma, SingularityIndex};
    use crate::quad;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn perturbed(alpha: f64, s: f64) -> (BesselDriftSpec, BesselString) {
        let (d, _) = BesselDriftSpec::calibrated(alpha, s, 0.0).unwrap();
        let b = BesselString::new(d).unwrap();
        (d, b)
    }

    #[test]
    fn drift_examples() {
        let d = BesselDriftSpec::new(-0.8, 1.0, 1.0, 0.0).unwrap();
        assert_relative_eq!(d.w(2.0).unwrap(), 2f64.powf(-1.8), max_relative = 1e-14);
        let e = std::f64::consts::E;
        let d = BesselDriftSpec::new(-0.8, 2.0, e, 0.0).unwrap();
        assert_relative_eq!(d.w(e * e).unwrap(), 2.0 * (-1.8f64).exp(), max_relative = 1e-13);
        assert!(d.w(0.0).is_err());
        assert!(BesselDriftSpec::new(-0.8, 2.0, 1.0, 0.0).is_err());
        assert_eq!(alpha_of_delta(-2.0).unwrap(), 2.0);
        // b = (ln W)'
        let x = 7.3;
        let h = 1e-5;
        let num = (d.w(x + h).unwrap().ln() - d.w(x - h).unwrap().ln()) / (2.0 * h);
        assert_relative_eq!(d.b(x).unwrap(), num, max_relative = 1e-8);
    }

    #[test]
    fn unperturbed_family_is_a_power_string() {
        let (d, cal) = BesselDriftSpec::calibrated(3.5, 1.0, 0.0).unwrap();
        assert_relative_eq!(cal.x0, 7f64.powf(5.0 / 12.0), max_relative = 1e-13);
        assert_eq!(d.delta, -5.0);
        let m = natural_scale_string(&d).unwrap();
        let (theta, coef) = m.power_params().unwrap();
        assert_relative_eq!(theta, 5.0 / 7.0, max_relative = 1e-14);
        assert_relative_eq!(coef, 0.4, max_relative = 1e-12);
        assert_eq!(d_of_m(&m, 6).unwrap(), SingularityIndex::Finite(3));
        for &x in &[1e2, 1e5, 1e8] {
            assert_relative_eq!(observed_k(&m, 3.5, x), 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn calibration_solves_its_equation() {
        for &(alpha, s) in &[(3.5, 0.5), (3.5, 2.0), (2.0, 1.5), (4.0, 3.0)] {
            let cal = calibrate_x0(alpha, s, 0.0).unwrap();
            let l = cal.x0.ln();
            let f = (2.0 * alpha - 1.0) * l
                - (alpha - 1.0) * (2.0 * alpha).ln()
                - (s - 1.0) * (2.0 * alpha * l).ln();
            if cal.solved {
                assert!(f.abs() < 1e-10, "α={alpha} s={s} f={f}");
            } else {
                assert_relative_eq!(f, cal.residual, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn perturbed_scale_matches_quadrature() {
        let (d, b) = perturbed(3.5, 2.0);
        for &y in &[0.5, d.x0, 3.0, 40.0, 1e4] {
            let oracle = if y <= d.x0 {
                quad::integrate(|z| 1.0 / d.w(z).unwrap(), 1e-300, y, 1e-13).unwrap().value
            } else {
                b.scale_fn(d.x0) + quad::integrate(|z| 1.0 / d.w(z).unwrap(), d.x0, y, 1e-13).unwrap().value
            };
            assert_relative_eq!(b.scale_fn(y), oracle, max_relative = 1e-10);
            let lo = y.max(d.x0);
            let mut t = quad::integrate_to_infinity(|z| d.w(z).unwrap(), lo, &Default::default())
                .unwrap()
                .into_result("T")
                .unwrap()
                .value;
            if y < d.x0 {
                t += quad::integrate(|z| d.w(z).unwrap(), y, d.x0, 1e-13).unwrap().value;
            }
            assert_relative_eq!(b.w_tail(y), t, max_relative = 1e-7);
        }
    }

    #[test]
    fn perturbed_string_calculus() {
        let (_, b) = perturbed(3.5, 2.0);
        let m = StringSpec::bessel(Arc::new(b.clone()));
        for &x in &[1e-3, 0.7, 5.0, 300.0] {
            let h = 1e-5 * x;
            let num = (m.eval(x + h).unwrap() - m.eval(x - h).unwrap()) / (2.0 * h);
            assert_relative_eq!(m.density(x), num, max_relative = 1e-6);
            let oracle = quad::integrate_to_zero(|z| m.eval(z).unwrap(), x, &Default::default())
                .unwrap()
                .into_result("G")
                .unwrap()
                .value;
            assert_relative_eq!(m.g_m(x).unwrap(), oracle, max_relative = 1e-7);
        }
    }

    #[test]
    fn perturbed_tail_tracks_k() {
        for &s in &[0.5, 2.0] {
            let (d, b) = perturbed(3.5, s);
            let m = StringSpec::bessel(Arc::new(b));
            let errs: Vec<f64> = (2..=8)
                .map(|r| {
                    let x = 10f64.powi(r);
                    (observed_k(&m, 3.5, x) / d.k_target(x) - 1.0).abs()
                })
                .collect();
            assert!(errs.windows(2).all(|w| w[1] < w[0]), "s={s}: {errs:?}");
            let far = (observed_k(&m, 3.5, 1e200) / d.k_target(1e200) - 1.0).abs();
            assert!(far < 0.05, "s={s}: {far}");
        }
    }

    #[test]
    fn jump_examples() {
        let j = BesselJump::new(3.5, 0.25, 1.0).unwrap();
        for &x in &[1e2, 1e5, 1e8] {
            assert_relative_eq!(j.tail(x) * x.powf(2.0 / 3.5), 1.0, max_relative = 1e-14);
        }
        assert_relative_eq!(j.density(0.01), (2.0 / 3.5) * 0.01f64.powf(-1.25), max_relative = 1e-14);
        assert!(BesselJump::new(3.5, 0.3, 1.0).is_err());
        let j2 = BesselJump::new(2.0, 0.4, 2.0).unwrap();
        let ratios: Vec<f64> = (2..=8)
            .map(|r| {
                let x = 10f64.powi(r);
                j2.tail(x) * x.powf(1.0) / j2.slowly_varying(x)
            })
            .collect();
        assert!(ratios.windows(2).all(|w| (w[1] - 1.0).abs() < (w[0] - 1.0).abs()), "{ratios:?}");
    }

    #[test]
    fn jump_tail_matches_quadrature() {
        for &(alpha, a, t) in &[(2.0, 0.4, 2.0), (3.5, 0.2, 0.5), (3.0, 0.1, 3.0)] {
            let j = BesselJump::new(alpha, a, t).unwrap();
            let top = j.crossovers.iter().copied().fold(50.0, f64::max);
            let mut cuts = vec![0.3, 1.0, top];
            cuts.extend(j.crossovers.iter().copied().filter(|&c| c < top));
            cuts.sort_by(f64::total_cmp);
            let far = quad::integrate_to_infinity(|x| j.density(x), top, &Default::default())
                .unwrap()
                .into_result("tail")
                .unwrap()
                .value;
            let mut acc = far;
            for w in cuts.windows(2).rev() {
                acc += quad::integrate(|x| j.density(x), w[0], w[1], 1e-13).unwrap().value;
                assert_relative_eq!(j.tail(w[0]), acc, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn n_constants() {
        assert_relative_eq!(n_asymptotic_constant(3.5, 1.0, 1.0).unwrap(), 3.5 / (2.5 * 1.5));
        assert_relative_eq!(n_asymptotic_constant(2.0, 1.0, 1.0).unwrap(), 0.5);
        assert!(n_asymptotic_constant(4.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn n_of_gamma_approaches_asymptotics() {
        let (d, _) = BesselDriftSpec::calibrated(3.5, 1.0, 0.0).unwrap();
        let m = natural_scale_string(&d).unwrap();
        let j = example_jump_measure(3.5, 0.25, 1.0).unwrap();
        let c = n_asymptotic_constant(3.5, 1.0, 1.0).unwrap();
        let errs: Vec<f64> = [1e4, 1e8, 1e16, 1e32]
            .iter()
            .map(|&g: &f64| (n_of_gamma(&m, &j, g).unwrap() / (c * g.ln()) - 1.0).abs())
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn scale_round_trip(lx in -8.0f64..200.0, s in prop::sample::select(vec![0.5, 2.0])) {
            let (_, b) = perturbed(3.5, s);
            let x = 10f64.powf(lx);
            let y = b.y_of(x);
            prop_assert!((b.scale_fn(y) / x - 1.0).abs() < 1e-10);
        }

        #[test]
        fn jump_inverse_round_trip(lt in -12.0f64..6.0, t in prop::sample::select(vec![0.5, 1.0, 2.5])) {
            let j = BesselJump::new(3.0, 0.2, t).unwrap();
            let target = 10f64.powf(lt);
            let x = j.inverse_tail(target);
            prop_assert!((j.tail(x) / target - 1.0).abs() < 1e-9);
        }
    }
}
