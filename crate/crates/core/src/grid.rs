//! Panel grid on (0, X]: Chebyshev-Lobatto nodes in the variable t = ln x
//! on every panel, with spectral cumulative integration. Fields are stored
//! per panel, so a function may take different values at the two copies of
//! a shared edge (left limit on the panel to the left, right limit on the
//! panel to the right).

use crate::error::{Error, Result};
use std::sync::OnceLock;

/// Nodes per panel.
pub const NODES: usize = 17;

struct Basis {
    s: [f64; NODES],
    bary: [f64; NODES],
    /// q[i][j] = ∫_{-1}^{s_i} ℓ_j(s) ds for the Lagrange basis ℓ_j.
    q: [[f64; NODES]; NODES],
}

fn basis() -> &'static Basis {
    static B: OnceLock<Basis> = OnceLock::new();
    B.get_or_init(|| {
        let m = NODES - 1;
        let mut s = [0.0; NODES];
        let mut bary = [0.0; NODES];
        for j in 0..NODES {
            s[j] = -(std::f64::consts::PI * j as f64 / m as f64).cos();
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            bary[j] = if j == 0 || j == m { 0.5 * sign } else { sign };
        }
        s[0] = -1.0;
        s[m] = 1.0;
        let cheb = |k: usize, x: f64| (k as f64 * x.clamp(-1.0, 1.0).acos()).cos();
        let anti = |k: usize, x: f64| -> f64 {
            match k {
                0 => x + 1.0,
                1 => 0.5 * (x * x - 1.0),
                _ => {
                    let kf = k as f64;
                    let at = |y: f64| cheb(k + 1, y) / (kf + 1.0) - cheb(k - 1, y) / (kf - 1.0);
                    0.5 * (at(x) - at(-1.0))
                }
            }
        };
        let mut q = [[0.0; NODES]; NODES];
        for j in 0..NODES {
            let wj = if j == 0 || j == m { 0.5 } else { 1.0 };
            for k in 0..=m {
                let wk = if k == 0 || k == m { 0.5 } else { 1.0 };
                let a = 2.0 / m as f64 * wj * cheb(k, s[j]) * wk;
                for i in 0..NODES {
                    q[i][j] += a * anti(k, s[i]);
                }
            }
        }
        Basis { s, bary, q }
    })
}

/// A measure on the grid: density (per node, w.r.t. dx) plus point masses
/// sitting on panel edges.
#[derive(Debug, Clone)]
pub struct GridMeasure {
    pub density: Vec<f64>,
    pub atoms: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PanelGrid {
    pub edges: Vec<f64>,
    pub x: Vec<f64>,
}

impl PanelGrid {
    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges[0] <= 0.0 {
            return Err(Error::Domain("a panel grid needs at least two positive edges".into()));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("panel edges must be strictly increasing".into()));
        }
        let b = basis();
        let mut x = Vec::with_capacity((edges.len() - 1) * NODES);
        for w in edges.windows(2) {
            let (la, lb) = (w[0].ln(), w[1].ln());
            let c = 0.5 * (la + lb);
            let h = 0.5 * (lb - la);
            for (i, &s) in b.s.iter().enumerate() {
                let v = if i == 0 {
                    w[0]
                } else if i == NODES - 1 {
                    w[1]
                } else {
                    (c + h * s).exp()
                };
                x.push(v);
            }
        }
        Ok(Self { edges, x })
    }

    /// Dyadic edges 2^k between `x_min` and `x_max`, with `breakpoints`
    /// forced in as edges and panels bisected while `split(a, b)` holds.
    pub fn dyadic<S: Fn(f64, f64) -> bool>(
        x_min: f64,
        x_max: f64,
        breakpoints: &[f64],
        split: S,
    ) -> Result<Self> {
        if !(x_min > 0.0 && x_max > x_min) {
            return Err(Error::Domain(format!("bad grid range [{x_min:e}, {x_max:e}]")));
        }
        let mut required: Vec<f64> =
            breakpoints.iter().copied().filter(|&b| b > x_min && b < x_max).chain([x_min, x_max]).collect();
        required.sort_by(f64::total_cmp);
        required.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * b.abs());
        let mut edges: Vec<f64> = Vec::new();
        let k0 = x_min.log2().ceil() as i32;
        let k1 = x_max.log2().floor() as i32;
        for k in k0..=k1 {
            let e = 2f64.powi(k);
            let near = required.iter().any(|&r| (r / e - 1.0).abs() < 0.05);
            if !near {
                edges.push(e);
            }
        }
        edges.extend(required);
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let mut refined = Vec::with_capacity(edges.len());
        refined.push(edges[0]);
        for w in edges.windows(2) {
            let mut stack = vec![(w[0], w[1])];
            let mut out = Vec::new();
            while let Some((a, b)) = stack.pop() {
                if split(a, b) && (b - a) > 1e-12 * b && out.len() + stack.len() < 4_000_000 {
                    let mid = if b / a > 1.5 { (a * b).sqrt() } else { 0.5 * (a + b) };
                    stack.push((mid, b));
                    stack.push((a, mid));
                } else {
                    out.push(b);
                }
            }
            refined.extend(out);
        }
        if refined.len() > 2_000_000 {
            return Err(Error::Budget("grid refinement produced too many panels".into()));
        }
        Self::from_edges(refined)
    }

    pub fn panels(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.x.iter().map(|&x| f(x)).collect()
    }

    pub fn zero_atoms(&self) -> Vec<f64> {
        vec![0.0; self.edges.len()]
    }

    /// Index of the edge equal to `x` (relative tolerance 1e-13).
    pub fn edge_index(&self, x: f64) -> Option<usize> {
        let i = self.edges.partition_point(|&e| e < x * (1.0 - 1e-13));
        (i < self.edges.len() && (self.edges[i] - x).abs() <= 1e-13 * x).then_some(i)
    }

    /// Value of a field at edge `e` as (left limit, right limit).
    pub fn at_edge(&self, f: &[f64], e: usize) -> (f64, f64) {
        let p = self.panels();
        let left = if e == 0 { f[0] } else { f[(e - 1) * NODES + NODES - 1] };
        let right = if e == p { f[(p - 1) * NODES + NODES - 1] } else { f[e * NODES] };
        (left, right)
    }

    /// Right-continuous point evaluation by barycentric interpolation in ln x.
    pub fn eval(&self, f: &[f64], x: f64) -> f64 {
        if let Some(e) = self.edge_index(x) {
            return self.at_edge(f, e).1;
        }
        let p = self.edges.partition_point(|&e| e <= x).clamp(1, self.panels()) - 1;
        let (la, lb) = (self.edges[p].ln(), self.edges[p + 1].ln());
        let s = (2.0 * x.ln() - la - lb) / (lb - la);
        let b = basis();
        let vals = &f[p * NODES..(p + 1) * NODES];
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..NODES {
            let d = s - b.s[j];
            if d == 0.0 {
                return vals[j];
            }
            let w = b.bary[j] / d;
            num += w * vals[j];
            den += w;
        }
        num / den
    }

    /// Within-panel antiderivative of `integrand · dx` from each panel's left
    /// edge, and the panel totals.
    pub fn local_cum(&self, integrand: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let b = basis();
        let mut local = vec![0.0; self.x.len()];
        let mut totals = vec![0.0; self.panels()];
        for p in 0..self.panels() {
            let h = 0.5 * (self.edges[p + 1].ln() - self.edges[p].ln());
            let off = p * NODES;
            let mut fx = [0.0; NODES];
            for j in 0..NODES {
                let v = integrand[off + j];
                fx[j] = if v == 0.0 { 0.0 } else { v * self.x[off + j] };
            }
            for i in 1..NODES {
                let row = &b.q[i];
                let mut acc = 0.0;
                for j in 0..NODES {
                    acc += row[j] * fx[j];
                }
                local[off + i] = h * acc;
            }
            totals[p] = local[off + NODES - 1];
        }
        (local, totals)
    }

    pub fn panel_totals(&self, integrand: &[f64]) -> Vec<f64> {
        self.local_cum(integrand).1
    }

    /// Atom contributions f(e)·μ_e per edge for a continuous `f`.
    pub fn atom_terms(&self, f: &[f64], atoms: &[f64]) -> Vec<f64> {
        atoms
            .iter()
            .enumerate()
            .map(|(e, &mu)| if mu == 0.0 { 0.0 } else { self.at_edge(f, e).1 * mu })
            .collect()
    }

    /// C(x) = head + ∫_{(x_min, x]} integrand, where `atom_terms[e]` is added
    /// at edge e (right-continuous).
    pub fn cum(&self, integrand: &[f64], atom_terms: Option<&[f64]>, head: f64) -> Vec<f64> {
        let (mut local, totals) = self.local_cum(integrand);
        let mut base = head;
        for p in 0..self.panels() {
            if let Some(a) = atom_terms {
                base += a[p];
            }
            for v in &mut local[p * NODES..(p + 1) * NODES] {
                *v += base;
            }
            base += totals[p];
        }
        local
    }

    /// R(x) = ∫_{(x, x_anchor]} integrand for x below the anchor edge and
    /// −∫_{(x_anchor, x]} integrand above it; right-continuous, computed
    /// outward from the anchor so no large partial sums cancel.
    pub fn rcum(&self, integrand: &[f64], atom_terms: Option<&[f64]>, anchor: usize) -> Vec<f64> {
        let (local, totals) = self.local_cum(integrand);
        let atom = |e: usize| atom_terms.map_or(0.0, |a| a[e]);
        let mut out = vec![0.0; self.x.len()];
        let mut acc = atom(anchor);
        for p in (0..anchor).rev() {
            let off = p * NODES;
            for i in 0..NODES {
                out[off + i] = acc + (totals[p] - local[off + i]);
            }
            // value at the panel's own left edge excludes that edge's atom
            acc += totals[p] + atom(p);
        }
        let mut acc = 0.0;
        for p in anchor..self.panels() {
            if p > anchor {
                acc -= atom(p);
            }
            let off = p * NODES;
            for i in 0..NODES {
                out[off + i] = acc - local[off + i];
            }
            acc -= totals[p];
        }
        out
    }

    /// ∫_0^{x_min} integrand, extrapolated from the first panel assuming a
    /// local power law A·x^q. Returns +∞ in magnitude when q ≤ −1.
    pub fn power_head(&self, integrand: &[f64]) -> f64 {
        power_head(self.x[0], integrand[0], self.x[NODES - 1], integrand[NODES - 1])
    }

    pub fn total(&self, integrand: &[f64], atom_terms: Option<&[f64]>) -> f64 {
        self.panel_totals(integrand).iter().sum::<f64>() + atom_terms.map_or(0.0, |a| a.iter().sum::<f64>())
    }
}

/// ∫_0^{x0} A·x^q dx for the power law through (x0, f0) and (x1, f1).
pub fn power_head(x0: f64, f0: f64, x1: f64, f1: f64) -> f64 {
    if f0 == 0.0 {
        return 0.0;
    }
    if f1 == 0.0 || f0.signum() != f1.signum() {
        return f0 * x0;
    }
    let q = (f1 / f0).ln() / (x1 / x0).ln();
    if q <= -1.0 {
        f0.signum() * f64::INFINITY
    } else {
        f0 * x0 / (q + 1.0)
    }
}
