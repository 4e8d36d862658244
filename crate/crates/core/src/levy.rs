//! Laplace exponents of inverse local times, the scaling transforms
//! (m_γ, j_γ, b_γ), normalizers (u, v) and de Bruijn conjugates.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::bessel::{example_jump_measure, n_asymptotic_constant, natural_scale_string, BesselDriftSpec};
use crate::eigen::{admissible_order, Eigen, ModifiedNeumann};
use crate::measure::{n_of_gamma, JumpMeasureSpec, StringSpec};
use crate::{Error, Result};

const QUAD_TOL: f64 = 1e-11;

/// A positive function meant to vary slowly at infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlowlyVarying {
    Const {
        value: f64,
    },
    /// coef·(ln x)^power, with ln x frozen at 1 for x < e.
    LogPower {
        coef: f64,
        power: f64,
    },
    /// Log-log interpolation through (x_i, f_i), constant outside the table.
    Tabulated {
        xs: Vec<f64>,
        fs: Vec<f64>,
    },
    Product {
        factors: Vec<SlowlyVarying>,
    },
}

impl SlowlyVarying {
    pub fn constant(value: f64) -> Self {
        SlowlyVarying::Const { value }
    }

    pub fn log_power(coef: f64, power: f64) -> Self {
        SlowlyVarying::LogPower { coef, power }
    }

    pub fn tabulated(xs: Vec<f64>, fs: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || xs.len() != fs.len() {
            return Err(Error::Parameter("tabulated function needs matching, non-empty columns".into()));
        }
        if xs[0] <= 0.0 || xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parameter(
                "tabulated abscissae must be positive and strictly ascending".into(),
            ));
        }
        if fs.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::Parameter("tabulated values must be finite and positive".into()));
        }
        Ok(SlowlyVarying::Tabulated { xs, fs })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            SlowlyVarying::Const { value } => *value,
            SlowlyVarying::LogPower { coef, power } => coef * x.ln().max(1.0).powf(*power),
            SlowlyVarying::Tabulated { xs, fs } => {
                let n = xs.len();
                if x <= xs[0] {
                    return fs[0];
                }
                if x >= xs[n - 1] {
                    return fs[n - 1];
                }
                let i = xs.partition_point(|&v| v <= x) - 1;
                let w = (x / xs[i]).ln() / (xs[i + 1] / xs[i]).ln();
                (fs[i].ln() * (1.0 - w) + fs[i + 1].ln() * w).exp()
            }
            SlowlyVarying::Product { factors } => factors.iter().map(|f| f.eval(x)).product(),
        }
    }

    /// f(2x)/f(x) along x = x0·2^k, k < n.
    pub fn doubling_ratios(&self, x0: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| {
                let x = x0 * 2f64.powi(k as i32);
                self.eval(2.0 * x) / self.eval(x)
            })
            .collect()
    }

    /// Positivity on [x0, x0·2^n] and doubling ratios that end closer to 1
    /// than `tol`.
    pub fn check_slow_variation(&self, x0: f64, n: usize, tol: f64) -> Result<()> {
        for k in 0..=n {
            let x = x0 * 2f64.powi(k as i32);
            let v = self.eval(x);
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("slowly varying function is {v} at x = {x:e}")));
            }
        }
        let r = self.doubling_ratios(x0, n);
        let last = r.last().copied().unwrap_or(1.0);
        if (last - 1.0).abs() > tol {
            return Err(Error::Precondition(format!(
                "f(2x)/f(x) = {last} at x = {:e} is not within {tol} of 1",
                x0 * 2f64.powi(n as i32 - 1)
            )));
        }
        Ok(())
    }
}

/// b = ∫_0^∞ j(dx) ∫_0^x m(y, ∞) dy.
pub fn b_mean(m: &StringSpec, j: &JumpMeasureSpec) -> Result<f64> {
    m.green_mean(1.0)?;
    integrate_against(j, &|x| m.green_mean(x), 0.0, f64::INFINITY, "b")
}

fn integrate_against(
    j: &JumpMeasureSpec,
    f: &dyn Fn(f64) -> Result<f64>,
    a: f64,
    b: f64,
    what: &str,
) -> Result<f64> {
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let g = |x: f64| match f(x) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    let est = j.integrate(&g, a, b, QUAD_TOL);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let v = est?.value;
    if !v.is_finite() {
        return Err(Error::Divergence(format!("{what} is not finite")));
    }
    Ok(v)
}

/// Eigen tables for one λ with j's breakpoints as grid edges.
struct Tables {
    eig: Eigen,
    mn: ModifiedNeumann,
    jd: Vec<f64>,
}

impl Tables {
    fn build(m: &StringSpec, j: &JumpMeasureSpec, lambda: f64) -> Result<Self> {
        let edges: Vec<f64> = j.breakpoints().into_iter().filter(|b| *b > 0.0 && b.is_finite()).collect();
        let eig = Eigen::with_edges(m, lambda, &[], &edges)?;
        let d = admissible_order(m, 12)?;
        let mn = ModifiedNeumann::trusted(m, &eig, d)?;
        let jd = j.grid_density(eig.grid());
        Ok(Self { eig, mn, jd })
    }

    /// ∫ f dj over the grid, with the power-law head below the first node.
    fn integrate(&self, f: &[f64]) -> f64 {
        let grid = self.eig.grid();
        let fj: Vec<f64> = f.iter().zip(&self.jd).map(|(a, b)| if *b == 0.0 { 0.0 } else { a * b }).collect();
        let head = grid.power_head(&fj);
        grid.total(&fj, None) + if head.is_finite() { head } else { 0.0 }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("λ must be finite and ≥ 0, got {lambda}")));
    }
    Ok(())
}

/// χ(λ) = ∫_0^∞ (1 − g_m(λ; x)) j(dx).
pub fn chi(m: &StringSpec, j: &JumpMeasureSpec, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let t = Tables::build(m, j, lambda)?;
    let body = t.integrate(&t.mn.one_minus_g(&t.eig));
    // Beyond the grid 1 − g lies within g(X) of 1.
    let far = j.tail(t.eig.x_far);
    let v = body + far;
    if !v.is_finite() {
        return Err(Error::Divergence(format!("χ({lambda}) is not finite")));
    }
    Ok(v)
}

/// χ(λ) − bλ computed in one pass: the integrand 1 − g − λQ is assembled
/// pointwise, with the series form of 1 − g on (0, 1].
pub fn centered_chi(m: &StringSpec, j: &JumpMeasureSpec, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let m_tail_1 = m.tail(1.0);
    if !m_tail_1.is_finite() {
        return Err(Error::Divergence("m(1, ∞) is infinite".into()));
    }
    let t = Tables::build(m, j, lambda)?;
    let grid = t.eig.grid();
    let one = t.mn.gt.one;
    let mut f = Vec::with_capacity(grid.len());
    for (i, &x) in grid.x.iter().enumerate() {
        let panel = i / crate::grid::NODES;
        let v = if panel < one {
            // −λ(G¹ + Q) = −λ·x·m(1, ∞)
            let mut v = -lambda * x * m_tail_1 - t.mn.remainder[i] + t.mn.cd * t.eig.psi.psi[i];
            let mut lk = lambda;
            for k in 2..=t.mn.d {
                lk *= lambda;
                v -= lk * t.mn.gt.g[k][i];
            }
            v
        } else {
            1.0 - t.eig.g[i] - lambda * m.green_mean(x)?
        };
        f.push(v);
    }
    let body = t.integrate(&f);
    let x_far = t.eig.x_far;
    let q_far = integrate_against(j, &|x| m.green_mean(x), x_far, f64::INFINITY, "∫ Q dj")?;
    let v = body + j.tail(x_far) - lambda * q_far;
    if !v.is_finite() {
        return Err(Error::Divergence(format!("χ({lambda}) − bλ is not finite")));
    }
    Ok(v)
}

/// A base pair (m, j) with tail index α, normalizers u, v and the slowly
/// varying parts K of m(x, ∞) and L of j(x, ∞).
#[derive(Debug, Clone)]
pub struct ScalingFamily {
    pub m: StringSpec,
    pub j: JumpMeasureSpec,
    pub alpha: f64,
    pub u: SlowlyVarying,
    pub v: SlowlyVarying,
    pub k: SlowlyVarying,
    pub l: SlowlyVarying,
}

impl ScalingFamily {
    pub fn new(
        m: StringSpec,
        j: JumpMeasureSpec,
        alpha: f64,
        u: SlowlyVarying,
        v: SlowlyVarying,
    ) -> Result<Self> {
        if !(alpha > 1.0 && alpha.is_finite()) {
            return Err(Error::Parameter(format!("α must exceed 1, got {alpha}")));
        }
        if m.m_inf().is_none() {
            return Err(Error::Parameter("the scaling family needs m(∞) finite".into()));
        }
        let one = SlowlyVarying::constant(1.0);
        Ok(Self { m, j, alpha, u, v, k: one.clone(), l: one })
    }

    pub fn with_kl(self, k: SlowlyVarying, l: SlowlyVarying) -> Self {
        Self { k, l, ..self }
    }

    /// The Bessel-drift family: induced string, min-form jump measure and
    /// the explicit (u, v) with exponent slack ε.
    pub fn bessel(alpha: f64, s: f64, t: f64, a: f64, eps: f64) -> Result<Self> {
        let (drift, _) = BesselDriftSpec::calibrated(alpha, s, 0.0)?;
        let m = natural_scale_string(&drift)?;
        let j = example_jump_measure(alpha, a, t)?;
        let (u, v) = bessel_uv(alpha, s, t, eps)?;
        let k = SlowlyVarying::log_power(1.0, (s - 1.0) / alpha);
        let l = SlowlyVarying::log_power(1.0, t - 1.0);
        Ok(Self::new(m, j, alpha, u, v)?.with_kl(k, l))
    }

    /// γ' = γ^{α/2}.
    pub fn gamma_prime(&self, gamma: f64) -> f64 {
        gamma.powf(0.5 * self.alpha)
    }

    /// m_γ(x) = γ^{(α−1)/2}/u(γ')·m(γ'x).
    pub fn m_gamma(&self, gamma: f64) -> Result<StringSpec> {
        let gp = self.gamma_prime(gamma);
        let a = gamma.powf(0.5 * (self.alpha - 1.0)) / self.u.eval(gp);
        self.m.scaled(a, gp)
    }

    /// j_γ(x, ∞) = γ/v(γ')·j(γ'x, ∞).
    pub fn j_gamma(&self, gamma: f64) -> Result<JumpMeasureSpec> {
        let gp = self.gamma_prime(gamma);
        self.j.scaled(gamma / self.v.eval(gp), gp)
    }

    /// b_γ = ∫_0^∞ Q_{m_γ} dj_γ, i.e. −∫ G_{m_γ} dj_γ with m(∞) = 0.
    pub fn b_gamma(&self, gamma: f64) -> Result<f64> {
        b_mean(&self.m_gamma(gamma)?, &self.j_gamma(gamma)?)
    }
}

/// χ̃_γ(λ) = χ_{m_γ, j_γ}(λ) − b_γλ.
pub fn fluct_exponent(fam: &ScalingFamily, gamma: f64, lambda: f64) -> Result<f64> {
    check_gamma(gamma)?;
    centered_chi(&fam.m_gamma(gamma)?, &fam.j_gamma(gamma)?, lambda)
}

/// κ̂ = −χ̃_γ(λ)/λ².
pub fn kappa_hat(fam: &ScalingFamily, gamma: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("κ̂ needs λ > 0, got {lambda}")));
    }
    Ok(-fluct_exponent(fam, gamma, lambda)? / (lambda * lambda))
}

/// χ̃ by the separate path χ − b_γλ, for cross-checking [`fluct_exponent`].
pub fn fluct_exponent_split(fam: &ScalingFamily, gamma: f64, lambda: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let m = fam.m_gamma(gamma)?;
    let j = fam.j_gamma(gamma)?;
    Ok(chi(&m, &j, lambda)? - b_mean(&m, &j)? * lambda)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma >= 1.0 && gamma.is_finite()) {
        return Err(Error::Domain(format!("γ must be finite and ≥ 1, got {gamma}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaRow {
    pub gamma: f64,
    pub lambda: f64,
    pub chi_tilde: f64,
    pub kappa_hat: f64,
}

pub fn kappa_table(fam: &ScalingFamily, gammas: &[f64], lambdas: &[f64]) -> Result<Vec<KappaRow>> {
    let mut rows = Vec::with_capacity(gammas.len() * lambdas.len());
    for &gamma in gammas {
        for &lambda in lambdas {
            let chi_tilde = fluct_exponent(fam, gamma, lambda)?;
            rows.push(KappaRow { gamma, lambda, chi_tilde, kappa_hat: -chi_tilde / (lambda * lambda) });
        }
    }
    Ok(rows)
}

/// u = S^{p/2}K, v = S^{1−p}L with S = N/(K²L), tabulated on `grid`, after
/// checking that K/u and L/v decrease along the grid.
pub fn construct_uv(
    n: &dyn Fn(f64) -> Result<f64>,
    k: &SlowlyVarying,
    l: &SlowlyVarying,
    p: f64,
    grid: &[f64],
) -> Result<(SlowlyVarying, SlowlyVarying)> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Parameter(format!("p must lie in (0, 1), got {p}")));
    }
    if grid.len() < 2 {
        return Err(Error::Parameter("the verification grid needs at least two points".into()));
    }
    let mut us = Vec::with_capacity(grid.len());
    let mut vs = Vec::with_capacity(grid.len());
    let mut ss = Vec::with_capacity(grid.len());
    for &g in grid {
        let (kg, lg) = (k.eval(g), l.eval(g));
        let s = n(g)? / (kg * kg * lg);
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Precondition(format!("N/(K²L) = {s} at γ = {g:e}")));
        }
        ss.push(s);
        us.push(s.powf(0.5 * p) * kg);
        vs.push(s.powf(1.0 - p) * lg);
    }
    if let Some(w) = ss.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::Precondition(format!(
            "N/(K²L) does not grow between γ = {:e} and {:e}, so K/u and L/v do not decrease",
            grid[w],
            grid[w + 1]
        )));
    }
    Ok((SlowlyVarying::tabulated(grid.to_vec(), us)?, SlowlyVarying::tabulated(grid.to_vec(), vs)?))
}

/// [`construct_uv`] with N(γ) computed from the pair.
pub fn construct_uv_for_pair(
    m: &StringSpec,
    j: &JumpMeasureSpec,
    k: &SlowlyVarying,
    l: &SlowlyVarying,
    p: f64,
    grid: &[f64],
) -> Result<(SlowlyVarying, SlowlyVarying)> {
    construct_uv(&|g| n_of_gamma(m, j, g), k, l, p, grid)
}

/// Explicit normalizers for the Bessel-drift family: for α > 2,
/// u = C^{1/4}(ln γ)^{(s−1)/α+ε/2}, v = C^{1/2}(ln γ)^{t−1+ε}; for α = 2,
/// u = √c(ln γ)^{s/2}, v = c(ln γ)^t with c² = C₂.
pub fn bessel_uv(alpha: f64, s: f64, t: f64, eps: f64) -> Result<(SlowlyVarying, SlowlyVarying)> {
    let c = n_asymptotic_constant(alpha, s, t)?;
    if alpha == 2.0 {
        let c1 = c.sqrt();
        return Ok((SlowlyVarying::log_power(c1.sqrt(), 0.5 * s), SlowlyVarying::log_power(c1, t)));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Parameter(format!("ε must lie in (0, 1), got {eps}")));
    }
    Ok((
        SlowlyVarying::log_power(c.powf(0.25), (s - 1.0) / alpha + 0.5 * eps),
        SlowlyVarying::log_power(c.sqrt(), t - 1.0 + eps),
    ))
}

/// f♯(x) from the fixed point g = 1/f(x·g).
pub fn de_bruijn_conjugate(f: &SlowlyVarying, x: f64) -> Result<f64> {
    conjugate_of(&|y| f.eval(y), x)
}

fn conjugate_of(f: &dyn Fn(f64) -> f64, x: f64) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("de Bruijn conjugate needs x > 0, got {x}")));
    }
    let mut g = 1.0 / f(x);
    for _ in 0..500 {
        let next = 1.0 / f(x * g);
        if !(next > 0.0 && next.is_finite()) {
            return Err(Error::NonConvergence(format!("conjugate iteration left (0, ∞) at x = {x:e}")));
        }
        let done = ((next - g) / next).abs() < 1e-8;
        g = next;
        if done {
            return Ok(g);
        }
    }
    Err(Error::NonConvergence(format!("conjugate iteration did not settle at x = {x:e}")))
}

/// |f(x)·f♯(x·f(x)) − 1|.
pub fn conjugate_residual(f: &SlowlyVarying, x: f64) -> Result<f64> {
    let fx = f.eval(x);
    Ok((fx * de_bruijn_conjugate(f, x * fx)? - 1.0).abs())
}

/// s^{−2}U♯(s²)^{−1}·v(s^α·U♯(s²)^{α/2}) with U(s) = u(s^{α/2}).
pub fn tail_estimate(fam: &ScalingFamily, s: f64) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Domain(format!("the tail envelope needs s > 0, got {s}")));
    }
    let alpha = fam.alpha;
    let us = conjugate_of(&|y| fam.u.eval(y.powf(0.5 * alpha)), s * s)?;
    Ok(fam.v.eval(s.powf(alpha) * us.powf(0.5 * alpha)) / (s * s * us))
}
