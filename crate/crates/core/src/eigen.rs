//! Eigenfunctions of d/dm d⁺/dx: ψ (Dirichlet at 0), g (bounded at ∞,
//! g(0) = 1), φᵈ (modified Neumann at 0), the connection constant cᵈ with
//! g = φᵈ − cᵈψ, and the structural identities between them.
//!
//! Series are summed on a panel grid; every series tail is bounded by the
//! Picard majorant x·(λF)^K/K!·e^{λF} with F(x) = ∫_0^x y dm(y).

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::grid::{GridMeasure, PanelGrid};
use crate::measure::{d_of_m, GTable, SingularityIndex, StringSpec};

/// Default grid floor for eigenfunction tables (2^-200).
pub const EIGEN_FLOOR: f64 = 6.223015277861142e-61;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenEval {
    pub value: f64,
    pub derivative_plus: f64,
    pub truncation_bound: f64,
    pub terms_used: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SeriesControl {
    /// Stop once every new term is below this fraction of the partial sum.
    pub rel_tol: f64,
    /// Required majorant bound, relative to the value, at certified points.
    pub cert_tol: f64,
    pub max_terms: usize,
    /// Sum exactly this many terms instead of stopping adaptively.
    pub fixed_terms: Option<usize>,
}

impl Default for SeriesControl {
    fn default() -> Self {
        Self { rel_tol: 1e-17, cert_tol: 1e-12, max_terms: 20_000, fixed_terms: None }
    }
}

/// ln of (λF)^k/k!·e^{λF}.
fn log_majorant(lf: f64, k: usize) -> f64 {
    if lf == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * lf.ln() - ln_gamma(k as f64 + 1.0) + lf
}

/// v ↦ (m∙v, s∙m∙v), i.e. (∫_{(0,x]} v dm, ∫_0^x dy ∫_{(0,y]} v dm).
fn picard(grid: &PanelGrid, dm: &GridMeasure, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let integrand: Vec<f64> = v.iter().zip(&dm.density).map(|(a, b)| a * b).collect();
    let terms = grid.atom_terms(v, &dm.atoms);
    let head = grid.power_head(&integrand);
    let inner = grid.cum(&integrand, Some(&terms), if head.is_finite() { head } else { 0.0 });
    let outer = grid.cum(&inner, None, grid.power_head(&inner));
    (inner, outer)
}

fn max_rel(term: &[f64], sum: &[f64]) -> f64 {
    term.iter().zip(sum).map(|(t, s)| if *t == 0.0 { 0.0 } else { (t / s).abs() }).fold(0.0, f64::max)
}

/// ψ(λ; ·) = Σ λᵏ(s∙m∙)ᵏ s and its right derivative on a grid.
#[derive(Debug, Clone)]
pub struct PsiSeries {
    pub lambda: f64,
    pub grid: PanelGrid,
    pub dm: GridMeasure,
    pub psi: Vec<f64>,
    pub psi_plus: Vec<f64>,
    /// F(x) = ∫_0^x y dm(y).
    pub f: Vec<f64>,
    /// Number of series terms summed (k = 0..terms).
    pub terms: usize,
}

impl PsiSeries {
    pub fn build(
        m: &StringSpec,
        lambda: f64,
        grid: PanelGrid,
        cert: &[f64],
        ctl: &SeriesControl,
    ) -> Result<Self> {
        let dm = m.grid_measure(&grid)?;
        let xs = grid.x.clone();
        let (f, _) = picard(&grid, &dm, &xs);
        let mut psi = xs.clone();
        let mut psi_plus = vec![1.0; xs.len()];
        let mut cur = xs;
        let mut terms = 1;
        let mut s = Self { lambda, grid, dm, psi: Vec::new(), psi_plus: Vec::new(), f, terms };
        let cert_f: Vec<f64> = cert.iter().map(|&x| s.grid.eval(&s.f, x)).collect();
        if lambda != 0.0 {
            loop {
                if let Some(n) = ctl.fixed_terms {
                    if terms >= n {
                        break;
                    }
                }
                let (inner, outer) = picard(&s.grid, &s.dm, &cur);
                let dterm: Vec<f64> = inner.iter().map(|v| lambda * v).collect();
                cur = outer.iter().map(|v| lambda * v).collect();
                for i in 0..cur.len() {
                    psi[i] += cur[i];
                    psi_plus[i] += dterm[i];
                }
                terms += 1;
                if psi.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Overflow(format!(
                        "ψ overflows on [0, {:e}]",
                        s.grid.x.last().unwrap()
                    )));
                }
                if ctl.fixed_terms.is_some() {
                    continue;
                }
                let small = max_rel(&cur, &psi) <= ctl.rel_tol && max_rel(&dterm, &psi_plus) <= ctl.rel_tol;
                let certified = cert.iter().zip(&cert_f).all(|(&x, &fx)| {
                    if x == 0.0 {
                        return true;
                    }
                    let v = s.grid.eval(&psi, x).abs().max(x * 1e-300);
                    x.ln() + log_majorant(lambda.abs() * fx, terms) <= (ctl.cert_tol * v).ln()
                });
                if small && certified {
                    break;
                }
                if terms >= ctl.max_terms {
                    return Err(Error::Overflow(format!(
                        "the ψ majorant does not certify within {} terms",
                        ctl.max_terms
                    )));
                }
            }
        }
        s.psi = psi;
        s.psi_plus = psi_plus;
        s.terms = terms;
        Ok(s)
    }

    /// x·(|λ|F)^K/K!·e^{|λ|F} with K the number of terms summed.
    pub fn bound(&self, x: f64) -> f64 {
        if x == 0.0 || self.lambda == 0.0 {
            return 0.0;
        }
        let fx = self.grid.eval(&self.f, x);
        (x.ln() + log_majorant(self.lambda.abs() * fx, self.terms)).exp()
    }

    pub fn eval(&self, x: f64) -> EigenEval {
        if x == 0.0 {
            return EigenEval {
                value: 0.0,
                derivative_plus: 1.0,
                truncation_bound: 0.0,
                terms_used: self.terms,
            };
        }
        EigenEval {
            value: self.grid.eval(&self.psi, x),
            derivative_plus: self.grid.eval(&self.psi_plus, x),
            truncation_bound: self.bound(x),
            terms_used: self.terms,
        }
    }
}

fn eigen_grid(m: &StringSpec, lambda: f64, points: &[f64], edges: &[f64], x_far: f64) -> Result<PanelGrid> {
    let lowest = points.iter().copied().filter(|&p| p > 0.0).fold(1.0, f64::min);
    let x_min = EIGEN_FLOOR.min(lowest * 2f64.powi(-60));
    let mut extra: Vec<f64> = points.iter().chain(edges).copied().filter(|&p| p > 0.0).collect();
    extra.extend([0.5, 1.0]);
    m.grid(x_min, x_far, &extra, lambda.abs())
}

/// ψ_m(λ; x) with certified truncation bound.
pub fn psi(m: &StringSpec, lambda: f64, x: f64) -> Result<EigenEval> {
    psi_with(m, lambda, x, &SeriesControl::default())
}

pub fn psi_with(m: &StringSpec, lambda: f64, x: f64, ctl: &SeriesControl) -> Result<EigenEval> {
    if !(x >= 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("ψ needs x ≥ 0 and finite λ (x={x}, λ={lambda})")));
    }
    if x == 0.0 {
        return Ok(EigenEval { value: 0.0, derivative_plus: 1.0, truncation_bound: 0.0, terms_used: 1 });
    }
    let grid = eigen_grid(m, lambda, &[x], &[], (2.0 * x).max(2.0))?;
    Ok(PsiSeries::build(m, lambda, grid, &[x], ctl)?.eval(x))
}

/// ψ together with g(λ; x) = ψ(x)·∫_x^∞ dy/ψ(y)² on a grid reaching far
/// enough that the convexity bound 1/(ψ(X)ψ⁺(X)) on the remaining tail is
/// negligible.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub psi: PsiSeries,
    pub g: Vec<f64>,
    pub g_plus: Vec<f64>,
    /// ∫_x^∞ dy/ψ² at the nodes, far tail included.
    pub inv_sq: Vec<f64>,
    pub tail_bound: f64,
    pub x_far: f64,
}

impl Eigen {
    /// Tables covering every point in `points` (and 1/2, 1).
    pub fn new(m: &StringSpec, lambda: f64, points: &[f64]) -> Result<Self> {
        Self::with_control(m, lambda, points, &[], &SeriesControl::default())
    }

    /// As [`Eigen::new`], with `edges` forced into the grid without
    /// extending its far end.
    pub fn with_edges(m: &StringSpec, lambda: f64, points: &[f64], edges: &[f64]) -> Result<Self> {
        Self::with_control(m, lambda, points, edges, &SeriesControl::default())
    }

    pub fn with_control(
        m: &StringSpec,
        lambda: f64,
        points: &[f64],
        edges: &[f64],
        ctl: &SeriesControl,
    ) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!("g needs λ > 0, got {lambda}")));
        }
        if points.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Domain("evaluation points must be finite and ≥ 0".into()));
        }
        let x_need = points.iter().copied().fold(1.0, f64::max);
        let mut x_far = (4.0 * x_need).max(16.0);
        loop {
            let grid = eigen_grid(m, lambda, points, edges, x_far)?;
            let ps = PsiSeries::build(m, lambda, grid, &[], ctl)?;
            let n = ps.psi.len();
            let tail = 1.0 / (ps.psi[n - 1] * ps.psi_plus[n - 1]);
            let integrand: Vec<f64> = ps.psi.iter().map(|p| 1.0 / (p * p)).collect();
            let top = ps.grid.edges.len() - 1;
            let inv_sq: Vec<f64> =
                ps.grid.rcum(&integrand, None, top).iter().map(|v| v + 0.5 * tail).collect();
            let i_need = ps.grid.eval(&inv_sq, x_need);
            if tail <= 1e-16 * i_need {
                let g: Vec<f64> = ps.psi.iter().zip(&inv_sq).map(|(p, i)| p * i).collect();
                let g_plus: Vec<f64> = ps
                    .psi_plus
                    .iter()
                    .zip(&inv_sq)
                    .zip(&ps.psi)
                    .map(|((dp, i), p)| dp * i - 1.0 / p)
                    .collect();
                return Ok(Self { psi: ps, g, g_plus, inv_sq, tail_bound: tail, x_far });
            }
            if x_far > 1e250 {
                return Err(Error::NonConvergence(format!("∫ dy/ψ² tail not certified up to X = {x_far:e}")));
            }
            x_far = if x_far < 1e6 { 16.0 * x_far } else { x_far.powf(1.25) };
        }
    }

    pub fn grid(&self) -> &PanelGrid {
        &self.psi.grid
    }

    pub fn lambda(&self) -> f64 {
        self.psi.lambda
    }

    pub fn psi_at(&self, x: f64) -> EigenEval {
        self.psi.eval(x)
    }

    pub fn g_at(&self, x: f64) -> EigenEval {
        let terms_used = self.psi.terms;
        if x == 0.0 {
            return EigenEval {
                value: 1.0,
                derivative_plus: self.g_plus[0],
                truncation_bound: 0.0,
                terms_used,
            };
        }
        if x > self.x_far {
            let gx = *self.g.last().unwrap();
            return EigenEval { value: 0.0, derivative_plus: 0.0, truncation_bound: gx, terms_used };
        }
        let grid = self.grid();
        let value = grid.eval(&self.g, x);
        let p = grid.eval(&self.psi.psi, x);
        EigenEval {
            value,
            derivative_plus: grid.eval(&self.g_plus, x),
            truncation_bound: 0.5 * p * self.tail_bound + 16.0 * f64::EPSILON * value,
            terms_used,
        }
    }
}

/// g_m(λ; x).
pub fn g(m: &StringSpec, lambda: f64, x: f64) -> Result<EigenEval> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("g needs x ≥ 0, got {x}")));
    }
    Ok(Eigen::new(m, lambda, &[x])?.g_at(x))
}

/// Smallest admissible order max(d(m), 1).
pub fn admissible_order(m: &StringSpec, d_max: usize) -> Result<usize> {
    // Power strings have a closed form; the numeric test is slow near integer θ/(1−θ).
    if let Some((theta, _)) = m.power_params() {
        if theta < 1.0 {
            let d = (theta / (1.0 - theta)).floor() as usize + 1;
            if d <= d_max {
                return Ok(d);
            }
        }
    }
    match d_of_m(m, d_max)? {
        SingularityIndex::Finite(d) => Ok(d.max(1)),
        SingularityIndex::ExceedsMax(k) => {
            Err(Error::Precondition(format!("d(m) exceeds {k}; φᵈ is not available")))
        }
    }
}

/// φᵈ(λ; ·) = 1 + Σ_{k≤d} λᵏGᵏ + Φᵈ with Φᵈ = Σ_{k≥1} λ^{d+k}(s∙m∙)ᵏGᵈ,
/// on the grid of an [`Eigen`] table, and cᵈ = (φᵈ − g)/ψ.
#[derive(Debug, Clone)]
pub struct ModifiedNeumann {
    pub d: usize,
    pub gt: GTable,
    pub phi: Vec<f64>,
    pub phi_plus: Vec<f64>,
    /// Φᵈ alone (the part beyond the polynomial in λ).
    pub remainder: Vec<f64>,
    /// sup_{[0,x]} |m∙Gᵈ|.
    pub s_sup: Vec<f64>,
    pub terms: usize,
    pub cd: f64,
    /// cᵈ evaluated at x = 1/2.
    pub cd_check: f64,
}

impl ModifiedNeumann {
    /// Checks d ≥ max(d(m), 1) before building.
    pub fn new(m: &StringSpec, eig: &Eigen, d: usize) -> Result<Self> {
        let need = admissible_order(m, d.max(1))?;
        if d < need {
            return Err(Error::Precondition(format!("φᵈ needs d ≥ max(d(m), 1) = {need}, got d = {d}")));
        }
        Self::trusted(m, eig, d)
    }

    /// Builds without re-deriving d(m); the caller guarantees d ≥ max(d(m), 1).
    pub fn trusted(m: &StringSpec, eig: &Eigen, d: usize) -> Result<Self> {
        Self::trusted_with(m, eig, d, &SeriesControl::default())
    }

    pub fn trusted_with(m: &StringSpec, eig: &Eigen, d: usize, ctl: &SeriesControl) -> Result<Self> {
        if d == 0 {
            return Err(Error::Precondition("φᵈ needs d ≥ 1".into()));
        }
        let lambda = eig.lambda();
        let grid = eig.grid();
        let dm = &eig.psi.dm;
        let gt = GTable::on_grid(m, d, grid.clone())?;
        let n = grid.len();
        let mut phi = vec![1.0; n];
        let mut phi_plus = vec![0.0; n];
        let mut lk = 1.0;
        for k in 1..=d {
            lk *= lambda;
            for i in 0..n {
                phi[i] += lk * gt.g[k][i];
                phi_plus[i] += lk * gt.dg[k][i];
            }
        }
        let mut cur: Vec<f64> = gt.g[d].iter().map(|v| lk * v).collect();
        let mut remainder = vec![0.0; n];
        let mut rem_plus = vec![0.0; n];
        let mut s_sup = Vec::new();
        let mut terms = 0;
        loop {
            let (inner, outer) = picard(grid, dm, &cur);
            if terms == 0 {
                let mut run = 0.0f64;
                s_sup = inner
                    .iter()
                    .map(|v| {
                        run = run.max((v / lk).abs());
                        run
                    })
                    .collect();
            }
            let dterm: Vec<f64> = inner.iter().map(|v| lambda * v).collect();
            cur = outer.iter().map(|v| lambda * v).collect();
            for i in 0..n {
                remainder[i] += cur[i];
                rem_plus[i] += dterm[i];
            }
            terms += 1;
            if remainder.iter().any(|v| !v.is_finite()) {
                return Err(Error::Overflow("φᵈ series overflows".into()));
            }
            if let Some(k) = ctl.fixed_terms {
                if terms >= k {
                    break;
                }
                continue;
            }
            let scale: Vec<f64> = phi.iter().zip(&remainder).map(|(a, b)| a.abs() + b.abs()).collect();
            let scale_plus: Vec<f64> =
                phi_plus.iter().zip(&rem_plus).map(|(a, b)| a.abs() + b.abs()).collect();
            if max_rel(&cur, &scale) <= ctl.rel_tol && max_rel(&dterm, &scale_plus) <= ctl.rel_tol {
                break;
            }
            if terms >= ctl.max_terms {
                return Err(Error::NonConvergence("φᵈ series did not settle".into()));
            }
        }
        for i in 0..n {
            phi[i] += remainder[i];
            phi_plus[i] += rem_plus[i];
        }
        let at = |f: &[f64], x: f64| grid.eval(f, x);
        let cd = (at(&phi, 1.0) - at(&eig.g, 1.0)) / at(&eig.psi.psi, 1.0);
        let cd_check = (at(&phi, 0.5) - at(&eig.g, 0.5)) / at(&eig.psi.psi, 0.5);
        let mut mn = Self { d, gt, phi, phi_plus, remainder, s_sup, terms, cd, cd_check };
        let slack = mn.cd_slack(eig);
        if (cd - cd_check).abs() > 1e-7 * cd.abs().max(1e-300) + slack {
            return Err(Error::Conditioning(format!(
                "c^{d}(λ={lambda}) is {cd:e} at x = 1 but {cd_check:e} at x = 1/2"
            )));
        }
        mn.cd = cd;
        Ok(mn)
    }

    fn cd_slack(&self, eig: &Eigen) -> f64 {
        [1.0, 0.5]
            .iter()
            .map(|&x| {
                let p = eig.psi_at(x);
                (self.phi_at(eig, x).truncation_bound + eig.g_at(x).truncation_bound) / p.value
            })
            .sum()
    }

    /// x·S(x)·|λ|^{d+1}·(λF)^K/K!·e^{λF}, K the number of Φᵈ terms.
    fn bound(&self, eig: &Eigen, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        let grid = eig.grid();
        let lambda = eig.lambda();
        let s = grid.eval(&self.s_sup, x);
        let fx = grid.eval(&eig.psi.f, x);
        let l = x.ln() + s.ln() + (self.d + 1) as f64 * lambda.ln() + log_majorant(lambda * fx, self.terms);
        l.exp()
    }

    pub fn phi_at(&self, eig: &Eigen, x: f64) -> EigenEval {
        let grid = eig.grid();
        if x == 0.0 {
            return EigenEval {
                value: 1.0,
                derivative_plus: self.phi_plus[0],
                truncation_bound: 0.0,
                terms_used: self.terms,
            };
        }
        EigenEval {
            value: grid.eval(&self.phi, x),
            derivative_plus: grid.eval(&self.phi_plus, x),
            truncation_bound: self.bound(eig, x),
            terms_used: self.terms,
        }
    }

    /// 1 − g at the nodes, from −ΣλᵏGᵏ − Φᵈ + cᵈψ on (0, 1] (free of the
    /// cancellation in 1 − g near 0) and directly above 1.
    pub fn one_minus_g(&self, eig: &Eigen) -> Vec<f64> {
        let grid = eig.grid();
        let lambda = eig.lambda();
        let one = self.gt.one;
        (0..grid.len())
            .map(|i| {
                let panel = i / crate::grid::NODES;
                if panel < one {
                    let mut v = -self.remainder[i] + self.cd * eig.psi.psi[i];
                    let mut lk = 1.0;
                    for k in 1..=self.d {
                        lk *= lambda;
                        v -= lk * self.gt.g[k][i];
                    }
                    v
                } else {
                    1.0 - eig.g[i]
                }
            })
            .collect()
    }

    /// g⁺ = φᵈ⁺ − cᵈψ⁺.
    pub fn g_plus_at(&self, eig: &Eigen, x: f64) -> f64 {
        let grid = eig.grid();
        grid.eval(&self.phi_plus, x) - self.cd * grid.eval(&eig.psi.psi_plus, x)
    }
}

/// φᵈ_m(λ; x).
pub fn phi_d(m: &StringSpec, d: usize, lambda: f64, x: f64) -> Result<EigenEval> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("φᵈ needs x ≥ 0, got {x}")));
    }
    if lambda == 0.0 {
        let need = admissible_order(m, d.max(1))?;
        if d < need {
            return Err(Error::Precondition(format!("φᵈ needs d ≥ {need}, got d = {d}")));
        }
        return Ok(EigenEval { value: 1.0, derivative_plus: 0.0, truncation_bound: 0.0, terms_used: 0 });
    }
    let eig = Eigen::new(m, lambda, &[x])?;
    let mn = ModifiedNeumann::new(m, &eig, d)?;
    Ok(mn.phi_at(&eig, x))
}

/// cᵈ_m(λ) with g = φᵈ − cᵈψ.
pub fn c_d(m: &StringSpec, d: usize, lambda: f64) -> Result<f64> {
    let eig = Eigen::new(m, lambda, &[])?;
    Ok(ModifiedNeumann::new(m, &eig, d)?.cd)
}

/// g·ψ⁺ − g⁺·ψ at x with g⁺ = φᵈ⁺ − cᵈψ⁺, d = max(d(m), 1).
pub fn wronskian(m: &StringSpec, lambda: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("the Wronskian is evaluated at x > 0, got {x}")));
    }
    let d = admissible_order(m, 12)?;
    let eig = Eigen::new(m, lambda, &[x])?;
    let mn = ModifiedNeumann::trusted(m, &eig, d)?;
    let p = eig.psi_at(x);
    let gx = eig.g_at(x).value;
    Ok(gx * p.derivative_plus - mn.g_plus_at(&eig, x) * p.value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingResiduals {
    /// g_m(aλ; bx) − g_{a·m(b·)}(bλ; x)
    pub g: f64,
    /// ψ_m(aλ; bx) − b·ψ_{a·m(b·)}(bλ; x)
    pub psi: f64,
    pub g_bound: f64,
    pub psi_bound: f64,
}

pub fn scaling_identity_check(
    m: &StringSpec,
    a: f64,
    b: f64,
    lambda: f64,
    x: f64,
) -> Result<ScalingResiduals> {
    if !(a > 0.0 && b > 0.0 && lambda > 0.0 && x > 0.0) {
        return Err(Error::Domain("scaling check needs a, b, λ, x > 0".into()));
    }
    let ms = m.scaled(a, b)?;
    let g1 = g(m, a * lambda, b * x)?;
    let g2 = g(&ms, b * lambda, x)?;
    let p1 = psi(m, a * lambda, b * x)?;
    let p2 = psi(&ms, b * lambda, x)?;
    Ok(ScalingResiduals {
        g: g1.value - g2.value,
        psi: p1.value - b * p2.value,
        g_bound: g1.truncation_bound + g2.truncation_bound,
        psi_bound: p1.truncation_bound + b * p2.truncation_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::stieltjes_integral;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn leb(rho: f64) -> StringSpec {
        StringSpec::lebesgue(rho).unwrap()
    }

    #[test]
    fn psi_examples() {
        let p = StringSpec::power(0.5).unwrap();
        assert_eq!(psi(&p, 0.0, 3.0).unwrap().value, 3.0);
        let v = psi(&leb(1.0), 1.0, 2.0).unwrap();
        assert_relative_eq!(v.value, 2f64.sinh(), max_relative = 1e-12);
        assert_relative_eq!(v.derivative_plus, 2f64.cosh(), max_relative = 1e-12);
        assert!(v.truncation_bound < 1e-10);
        let v = psi(&leb(1.0), 4.0, 1.0).unwrap();
        assert_relative_eq!(v.value, 2f64.sinh() / 2.0, max_relative = 1e-12);
        let z = psi(&p, 1.0, 0.0).unwrap();
        assert_eq!((z.value, z.derivative_plus), (0.0, 1.0));
    }

    #[test]
    fn g_examples() {
        assert_relative_eq!(g(&leb(1.0), 1.0, 2.0).unwrap().value, (-2f64).exp(), max_relative = 1e-11);
        assert_relative_eq!(
            g(&leb(2.0), 1.0, 1.0).unwrap().value,
            (-(2f64.sqrt())).exp(),
            max_relative = 1e-11
        );
        let p = StringSpec::power(0.5).unwrap();
        assert_eq!(g(&p, 3.0, 0.0).unwrap().value, 1.0);
    }

    #[test]
    fn phi_examples() {
        let p = StringSpec::power(0.4).unwrap();
        assert_eq!(phi_d(&p, 1, 0.0, 0.7).unwrap().value, 1.0);
        let e = phi_d(&leb(1.0), 1, 1.0, 1.0).unwrap();
        assert_relative_eq!(e.value, (-1f64).exp(), max_relative = 1e-11);
        let e = phi_d(&leb(1.0), 1, 4.0, 0.5).unwrap();
        assert_relative_eq!(e.value, 1f64.cosh() - 2.0 * 1f64.sinh(), max_relative = 1e-11);
        let p6 = StringSpec::power(0.6).unwrap();
        assert!(matches!(phi_d(&p6, 1, 1.0, 0.5), Err(Error::Precondition(_))));
    }

    #[test]
    fn c_d_lebesgue_closed_form() {
        // g = e^{-√λx}, φ¹ = cosh − √λ sinh, ψ = sinh/√λ ⇒ c¹ = √λ − λ.
        for &lambda in &[1.0, 4.0, 9.0] {
            let c: f64 = c_d(&leb(1.0), 1, lambda).unwrap();
            assert!((c - (lambda.sqrt() - lambda)).abs() < 1e-9 * lambda, "λ={lambda}: {c}");
        }
    }

    #[test]
    fn c_d_recursion() {
        let p = StringSpec::power(0.4).unwrap();
        let c1 = c_d(&p, 1, 1.0).unwrap();
        let c2 = c_d(&p, 2, 1.0).unwrap();
        let g1 = |x: f64| crate::measure::g_k(&p, 1, x).unwrap();
        // G¹ = x − x^{0.6}/0.6 for this string
        let closed = |x: f64| x - x.powf(0.6) / 0.6;
        assert_relative_eq!(g1(0.3), closed(0.3), max_relative = 1e-12);
        let integral = stieltjes_integral(&p, &closed, 0.0, 1.0, 1e-13).unwrap().value;
        assert!((c2 - (c1 - integral)).abs() < 1e-8, "{c2} vs {}", c1 - integral);
    }

    #[test]
    fn wronskian_examples() {
        assert_relative_eq!(wronskian(&leb(1.0), 1.0, 1.0).unwrap(), 1.0, max_relative = 1e-10);
        let p = StringSpec::power(0.6).unwrap();
        assert!((wronskian(&p, 0.5, 0.3).unwrap() - 1.0).abs() < 1e-6);
        assert_relative_eq!(wronskian(&leb(2.0), 3.0, 2.0).unwrap(), 1.0, max_relative = 1e-9);
    }

    #[test]
    fn scaling_examples() {
        let r = scaling_identity_check(&leb(1.0), 1.0, 1.0, 1.0, 0.5).unwrap();
        assert!(r.g.abs() < 1e-13 && r.psi.abs() < 1e-13);
        let r = scaling_identity_check(&leb(1.0), 2.0, 3.0, 1.0, 0.5).unwrap();
        assert!(r.g.abs() < 1e-8 && r.psi.abs() < 1e-8, "{r:?}");
        let p = StringSpec::power(0.5).unwrap();
        let r = scaling_identity_check(&p, 0.5, 2.0, 1.0, 1.0).unwrap();
        assert!(r.g.abs() < 1e-6 && r.psi.abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn bound_dominates_extra_terms() {
        let p = StringSpec::power(0.5).unwrap();
        for &n in &[3usize, 6, 10] {
            let few = psi_with(&p, 2.0, 1.5, &SeriesControl { fixed_terms: Some(n), ..Default::default() })
                .unwrap();
            let more =
                psi_with(&p, 2.0, 1.5, &SeriesControl { fixed_terms: Some(n + 5), ..Default::default() })
                    .unwrap();
            assert_eq!(few.terms_used, n);
            assert!((more.value - few.value).abs() <= few.truncation_bound);
        }
    }

    #[test]
    fn g_is_phi_minus_c_psi_for_two_orders() {
        let p = StringSpec::power(0.6).unwrap();
        let eig = Eigen::new(&p, 1.5, &[0.1, 0.7, 3.0]).unwrap();
        for d in [2, 3] {
            let mn = ModifiedNeumann::new(&p, &eig, d).unwrap();
            for &x in &[0.1, 0.7, 3.0] {
                let lhs = mn.phi_at(&eig, x).value - mn.cd * eig.psi_at(x).value;
                assert_relative_eq!(lhs, eig.g_at(x).value, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn one_minus_g_near_zero() {
        // Lebesgue: 1 − e^{−x} for tiny x, where the direct difference loses digits.
        let eig = Eigen::new(&leb(1.0), 1.0, &[1e-9]).unwrap();
        let mn = ModifiedNeumann::new(&leb(1.0), &eig, 1).unwrap();
        let omg = mn.one_minus_g(&eig);
        let v = eig.grid().eval(&omg, 1e-9);
        assert_relative_eq!(v, -(-1e-9f64).exp_m1(), max_relative = 1e-7);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn psi_and_g_shape(theta in 0.2f64..0.7, lambda in 0.2f64..5.0) {
            let p = StringSpec::power(theta).unwrap();
            let pts = [0.05, 0.3, 1.0, 2.5];
            let eig = Eigen::new(&p, lambda, &pts).unwrap();
            let eig2 = Eigen::new(&p, 1.3 * lambda, &pts).unwrap();
            let mut prev: Option<(EigenEval, EigenEval)> = None;
            for &x in &pts {
                let ps = eig.psi_at(x);
                let gx = eig.g_at(x);
                prop_assert!(ps.value >= x);
                prop_assert!(gx.value > 0.0 && gx.value <= 1.0);
                prop_assert!(eig2.g_at(x).value < gx.value);
                if let Some((pp, pg)) = prev {
                    prop_assert!(ps.value > pp.value);
                    prop_assert!(ps.derivative_plus >= pp.derivative_plus);
                    prop_assert!(gx.value < pg.value);
                }
                prev = Some((ps, gx));
            }
        }

        #[test]
        fn wronskian_is_one(theta in 0.1f64..0.7, lambda in 0.2f64..4.0, x in 0.05f64..3.0) {
            let p = StringSpec::power(theta).unwrap();
            let w = wronskian(&p, lambda, x).unwrap();
            prop_assert!((w - 1.0).abs() < 1e-7, "{}", w);
        }

        #[test]
        fn scaling_holds(theta in 0.2f64..0.7, a in 0.3f64..3.0, b in 0.3f64..3.0) {
            let p = StringSpec::power(theta).unwrap();
            let r = scaling_identity_check(&p, a, b, 1.0, 0.8).unwrap();
            prop_assert!(r.g.abs() < 1e-8 && r.psi.abs() < 1e-8 * b, "{:?}", r);
        }
    }
}
