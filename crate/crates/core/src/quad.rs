//! One-dimensional quadrature: Gauss-Legendre rules, adaptive bisection on
//! finite intervals, and dyadic marches toward a singular endpoint (0 or ∞)
//! that classify the improper integral as convergent or divergent.

use crate::error::{Error, Result};
use std::sync::OnceLock;

/// Nodes and weights of an n-point Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, z);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Shared 20-point rule.
    pub fn standard() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(20))
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * f(c + h * t)).sum::<f64>() * h
    }

    /// Integrates over [a, b] (0 < a < b) in the variable t = ln x.
    pub fn integrate_log<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        self.integrate(
            |t| {
                let x = t.exp();
                f(x) * x
            },
            a.ln(),
            b.ln(),
        )
    }
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// A quadrature value with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Adaptive bisection on [a, b]; panels are split until the two-half
/// estimate agrees with the whole-panel estimate to `tol` (relative to the
/// running total). Uses the log variable when `a > 0` and `b / a > 4`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<Estimate> {
    if !(a <= b) {
        return Err(Error::Domain(format!("integration bounds [{a}, {b}] are not ordered")));
    }
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let rule = GaussLegendre::standard();
    let use_log = a > 0.0 && b / a > 4.0;
    let (lo, hi) = if use_log { (a.ln(), b.ln()) } else { (a, b) };
    let g = |t: f64| {
        if use_log {
            let x = t.exp();
            f(x) * x
        } else {
            f(t)
        }
    };
    let scale = rule.integrate(g, lo, hi).abs();
    let mut stack = vec![(lo, hi, rule.integrate(g, lo, hi), 0usize)];
    let mut value: f64 = 0.0;
    let mut error: f64 = 0.0;
    let mut evaluations = 0usize;
    while let Some((l, r, whole, depth)) = stack.pop() {
        let mid = 0.5 * (l + r);
        let left = rule.integrate(g, l, mid);
        let right = rule.integrate(g, mid, r);
        evaluations += 1;
        let diff = (left + right - whole).abs();
        let local_tol = tol * scale.max(value.abs()).max(f64::MIN_POSITIVE);
        if diff <= local_tol || depth >= 50 || (r - l) <= 1e-14 * l.abs().max(1e-300) {
            if depth >= 50 && diff > local_tol {
                return Err(Error::NonConvergence(format!(
                    "adaptive quadrature on [{a:e}, {b:e}] stalled at depth 50"
                )));
            }
            value += left + right;
            error += diff;
        } else {
            stack.push((mid, r, right, depth + 1));
            stack.push((l, mid, left, depth + 1));
        }
        if evaluations > 200_000 {
            return Err(Error::NonConvergence(format!(
                "adaptive quadrature on [{a:e}, {b:e}] exceeded its panel budget"
            )));
        }
    }
    if !value.is_finite() {
        return Err(Error::Overflow(format!("non-finite integral on [{a:e}, {b:e}]")));
    }
    Ok(Estimate { value, error })
}

/// Outcome of a dyadic march toward a singular endpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Converges { value: f64, tail: f64 },
    Diverges { partial: f64 },
    Indeterminate { partial: f64, bound: f64 },
}

impl Verdict {
    pub fn into_result(self, what: &str) -> Result<Estimate> {
        match self {
            Verdict::Converges { value, tail } => Ok(Estimate { value, error: tail }),
            Verdict::Diverges { partial } => {
                Err(Error::Divergence(format!("{what} (partial sum {partial:e})")))
            }
            Verdict::Indeterminate { partial, bound } => {
                Err(Error::Indeterminate { what: what.to_string(), lower: partial, upper: bound })
            }
        }
    }
}

/// Tuning of the dyadic classifier.
#[derive(Debug, Clone, Copy)]
pub struct DyadicRule {
    /// Number of trailing dyads used to fit the decay ratio.
    pub window: usize,
    /// A fitted ratio at or above `1 - divergence_slack` means divergence.
    pub divergence_slack: f64,
    /// Geometric tail estimate below this fraction of the sum means convergence.
    pub tail_tol: f64,
    pub min_dyads: usize,
    pub max_dyads: usize,
}

impl Default for DyadicRule {
    fn default() -> Self {
        Self { window: 10, divergence_slack: 1e-3, tail_tol: 1e-10, min_dyads: 24, max_dyads: 960 }
    }
}

/// Classifies Σ p_k for nonnegative-magnitude partial integrals produced on
/// demand by `partial(k)`. The sign of the partials must not change.
pub fn classify_series<P: FnMut(usize) -> Result<f64>>(mut partial: P, rule: &DyadicRule) -> Result<Verdict> {
    let mut sum = 0.0;
    let mut mags: Vec<f64> = Vec::new();
    for k in 0..rule.max_dyads {
        let p = partial(k)?;
        if !p.is_finite() {
            return Ok(Verdict::Diverges { partial: sum });
        }
        sum += p;
        mags.push(p.abs());
        if k + 1 < rule.min_dyads.max(rule.window) {
            continue;
        }
        let tail = &mags[mags.len() - rule.window..];
        if tail.iter().all(|&v| v == 0.0) {
            return Ok(Verdict::Converges { value: sum, tail: 0.0 });
        }
        if tail.contains(&0.0) {
            continue;
        }
        let r = fitted_ratio(tail);
        if r >= 1.0 - rule.divergence_slack {
            let monotone = tail.windows(2).all(|w| w[1] >= w[0] * (1.0 - rule.divergence_slack));
            if monotone {
                return Ok(Verdict::Diverges { partial: sum });
            }
            continue;
        }
        let est = tail[tail.len() - 1] * r / (1.0 - r);
        if est <= rule.tail_tol * sum.abs() || est < 1e-300 {
            return Ok(Verdict::Converges { value: sum, tail: est });
        }
        // A power-law tail gives an exactly geometric sequence; sum it in closed form.
        let spread = tail.windows(2).map(|w| (w[1] / w[0] - r).abs()).fold(0.0, f64::max);
        if r <= 1.0 - 10.0 * rule.divergence_slack && spread <= 1e-9 {
            let sign = if p < 0.0 { -1.0 } else { 1.0 };
            let slack = est * spread * rule.window as f64 / (1.0 - r);
            if slack <= rule.tail_tol * sum.abs() {
                return Ok(Verdict::Converges { value: sum + sign * est, tail: slack });
            }
        }
    }
    let tail = &mags[mags.len().saturating_sub(rule.window)..];
    let bound = if tail.iter().all(|&v| v > 0.0) {
        let r = fitted_ratio(tail);
        if r < 1.0 {
            sum.abs() + tail[tail.len() - 1] * r / (1.0 - r)
        } else {
            f64::INFINITY
        }
    } else {
        sum.abs()
    };
    Ok(Verdict::Indeterminate { partial: sum, bound })
}

/// exp of the least-squares slope of ln v against index.
pub fn fitted_ratio(v: &[f64]) -> f64 {
    let xs: Vec<f64> = (0..v.len()).map(|i| i as f64).collect();
    let ys: Vec<f64> = v.iter().map(|x| x.ln()).collect();
    least_squares_slope(&xs, &ys).exp()
}

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// ∫_0^{x_hi} f over dyads (x_hi 2^{-k-1}, x_hi 2^{-k}], classified.
pub fn integrate_to_zero<F: Fn(f64) -> f64>(f: F, x_hi: f64, rule: &DyadicRule) -> Result<Verdict> {
    let gl = GaussLegendre::standard();
    let max = rule.max_dyads.min((x_hi.log2() + 1000.0).max(1.0) as usize);
    let r = DyadicRule { max_dyads: max, ..*rule };
    classify_series(
        |k| {
            let b = x_hi * 0.5f64.powi(k as i32);
            Ok(gl.integrate_log(&f, 0.5 * b, b))
        },
        &r,
    )
}

/// ∫_{x_lo}^∞ f over dyads [x_lo 2^k, x_lo 2^{k+1}), classified.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, x_lo: f64, rule: &DyadicRule) -> Result<Verdict> {
    let gl = GaussLegendre::standard();
    let max = rule.max_dyads.min((1000.0 - x_lo.log2()).max(1.0) as usize);
    let r = DyadicRule { max_dyads: max, ..*rule };
    classify_series(
        |k| {
            let a = x_lo * 2f64.powi(k as i32);
            Ok(gl.integrate_log(&f, a, 2.0 * a))
        },
        &r,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let gl = GaussLegendre::new(8);
        let v = gl.integrate(|x| x.powi(15) + 3.0 * x.powi(14), 0.0, 1.0);
        assert_relative_eq!(v, 1.0 / 16.0 + 3.0 / 15.0, max_relative = 1e-14);
        assert_relative_eq!(gl.weights.iter().sum::<f64>(), 2.0, max_relative = 1e-14);
    }

    #[test]
    fn adaptive_handles_peaks() {
        let est = integrate(|x| 1.0 / (1e-4 + (x - 0.3).powi(2)), 0.0, 1.0, 1e-12).unwrap();
        let exact = (0.7f64 / 1e-2).atan() / 1e-2 + (0.3f64 / 1e-2).atan() / 1e-2;
        assert_relative_eq!(est.value, exact, max_relative = 1e-10);
    }

    #[test]
    fn slow_power_law_head_is_summed_in_closed_form() {
        match integrate_to_zero(|x| x.powf(-0.96), 1.0, &DyadicRule::default()).unwrap() {
            Verdict::Converges { value, .. } => assert_relative_eq!(value, 25.0, max_relative = 1e-9),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn dyadic_march_classifies_power_laws() {
        let rule = DyadicRule::default();
        match integrate_to_zero(|x| x.powf(-0.5), 1.0, &rule).unwrap() {
            Verdict::Converges { value, .. } => assert_relative_eq!(value, 2.0, max_relative = 1e-8),
            v => panic!("{v:?}"),
        }
        assert!(matches!(integrate_to_zero(|x| 1.0 / x, 1.0, &rule).unwrap(), Verdict::Diverges { .. }));
        match integrate_to_infinity(|x| x.powi(-2), 1.0, &rule).unwrap() {
            Verdict::Converges { value, .. } => assert_relative_eq!(value, 1.0, max_relative = 1e-8),
            v => panic!("{v:?}"),
        }
        assert!(matches!(
            integrate_to_infinity(|x| x.powf(-0.9), 1.0, &rule).unwrap(),
            Verdict::Diverges { .. }
        ));
    }
}
