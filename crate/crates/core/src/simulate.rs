//! Monte Carlo for excursion lifetimes, the inverse local time as a
//! compensated subordinator, occupation times and scaled fluctuations.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bessel::BesselString;
use crate::levy::{b_mean, ScalingFamily};
use crate::measure::{JumpMeasureSpec, StringFamily, StringSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Exact laws where available, otherwise the matching path scheme.
    #[default]
    Auto,
    Exact,
    Euler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub seed: u64,
    pub replicates: usize,
    pub dt: f64,
    pub eps_jump: f64,
    /// Local-time horizon for η, real-time horizon for occupation runs.
    pub horizon: f64,
    pub scheme: Scheme,
    /// Euler paths are absorbed once X ≤ absorb_c·σ(X)·√dt.
    pub absorb_c: f64,
    pub max_steps: u64,
    /// Worker threads; 0 uses the rayon default.
    pub workers: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            replicates: 100,
            dt: 1e-4,
            eps_jump: 1e-3,
            horizon: 1e3,
            scheme: Scheme::Auto,
            absorb_c: 1.0,
            max_steps: 100_000_000,
            workers: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.eps_jump > 0.0 && self.horizon > 0.0 && self.absorb_c >= 0.0) {
            return Err(Error::Parameter("dt, eps_jump and horizon must be positive".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Parameter("replicates must be at least 1".into()));
        }
        Ok(())
    }

    /// The RNG stream of one replicate.
    pub fn rng(&self, replicate: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(replicate as u64);
        rng
    }

    /// Runs `f` once per replicate on the configured pool; results come
    /// back in replicate order.
    pub fn run<T: Send, F: Fn(usize, &mut ChaCha8Rng) -> Result<T> + Sync>(&self, f: F) -> Result<Vec<T>> {
        self.validate()?;
        let work = || (0..self.replicates).into_par_iter().map(|r| f(r, &mut self.rng(r))).collect();
        if self.workers == 0 {
            work()
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(self.workers)
                .build()
                .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?
                .install(work)
        }
    }
}

fn uniform_open<R: Rng>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

#[derive(Debug, Clone)]
enum Law {
    /// T0 = a2·x^p / (2·Gamma(shape)), a Bessel hitting time.
    Bessel { a2: f64, p: f64, gamma: Gamma<f64> },
    /// T0 = ρx²/(2N²), the Brownian hitting time of a level.
    Brownian { rho: f64 },
    /// dX = √(2/m'(X)) dW.
    EulerNatural(StringSpec),
    /// dY = dB + b(Y)/2 dt from y = s̃⁻¹(b·x); T0 scaled by a/b.
    EulerDrift { string: Arc<BesselString>, a: f64, b: f64 },
    /// Gap diffusion on the atoms of a step string.
    BirthDeath { xs: Vec<f64>, mu: Vec<f64> },
}

/// Sampler of the hitting time of 0 for the natural-scale diffusion of a string.
#[derive(Debug, Clone)]
pub struct T0Sampler {
    law: Law,
    dt: f64,
    absorb_c: f64,
    max_steps: u64,
}

impl T0Sampler {
    pub fn new(m: &StringSpec, cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let exact_ok = cfg.scheme != Scheme::Euler;
        let law = match (m.family(), m.power_params()) {
            (_, Some((theta, coef))) if exact_ok => {
                let p = 1.0 - theta;
                let gamma = Gamma::new(1.0 / p, 1.0).map_err(|e| Error::Parameter(e.to_string()))?;
                Law::Bessel { a2: 2.0 * coef * theta / (p * p), p, gamma }
            }
            (StringFamily::Lebesgue { rho }, _) if exact_ok => {
                Law::Brownian { rho: rho * m.scale() * m.dilation() }
            }
            (StringFamily::Tabulated { .. }, _) => {
                let atoms = m.atoms(0.0, f64::INFINITY);
                if atoms.is_empty() {
                    return Err(Error::Precondition("step string without atoms: no scheme available".into()));
                }
                Law::BirthDeath {
                    xs: atoms.iter().map(|a| a.0).collect(),
                    mu: atoms.iter().map(|a| a.1).collect(),
                }
            }
            _ if cfg.scheme == Scheme::Exact => {
                return Err(Error::Precondition("no exact hitting-time law for this string".into()));
            }
            (StringFamily::Bessel(b), _) => {
                Law::EulerDrift { string: b.clone(), a: m.scale(), b: m.dilation() }
            }
            _ => Law::EulerNatural(m.clone()),
        };
        Ok(Self { law, dt: cfg.dt, absorb_c: cfg.absorb_c, max_steps: cfg.max_steps })
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.law, Law::Bessel { .. } | Law::Brownian { .. } | Law::BirthDeath { .. })
    }

    pub fn sample<R: Rng>(&self, x: f64, rng: &mut R) -> Result<f64> {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::Domain(format!("T0 needs a finite start x > 0, got {x}")));
        }
        match &self.law {
            Law::Bessel { a2, p, gamma } => Ok(a2 * x.powf(*p) / (2.0 * gamma.sample(rng))),
            Law::Brownian { rho } => {
                let n: f64 = rng.sample(StandardNormal);
                Ok(rho * x * x / (2.0 * n * n))
            }
            Law::EulerNatural(m) => self.euler(x, rng, |y| (2.0 / m.density(y)).sqrt(), |_| 0.0),
            Law::EulerDrift { string, a, b } => {
                let drift = *string.drift();
                let y0 = string.y_of(b * x);
                let t = self.euler(y0, rng, |_| 1.0, |y| 0.5 * drift.b(y).unwrap_or(0.0))?;
                Ok(a / b * t)
            }
            Law::BirthDeath { xs, mu } => Ok(birth_death(xs, mu, x, rng)),
        }
    }

    fn euler<R: Rng>(
        &self,
        x0: f64,
        rng: &mut R,
        sigma: impl Fn(f64) -> f64,
        drift: impl Fn(f64) -> f64,
    ) -> Result<f64> {
        let sq = self.dt.sqrt();
        let mut x = x0;
        let mut steps = 0u64;
        loop {
            if x <= 0.0 {
                break;
            }
            let s = sigma(x);
            if x <= self.absorb_c * s * sq {
                break;
            }
            let n: f64 = rng.sample(StandardNormal);
            x += drift(x) * self.dt + s * sq * n;
            steps += 1;
            if steps >= self.max_steps {
                return Err(Error::Budget(format!("Euler path from {x0} exceeded {} steps", self.max_steps)));
            }
        }
        Ok(steps as f64 * self.dt)
    }
}

/// Hitting time of 0 for the gap diffusion with atoms μ_i at x_i.
fn birth_death<R: Rng>(xs: &[f64], mu: &[f64], x: f64, rng: &mut R) -> f64 {
    // Index of the atom at or right of x, entered through the gap.
    let mut i = xs.partition_point(|&a| a < x);
    if i == xs.len() {
        i -= 1;
    } else if xs[i] != x {
        let left = if i == 0 { 0.0 } else { xs[i - 1] };
        if rng.random::<f64>() >= (x - left) / (xs[i] - left) {
            if i == 0 {
                return 0.0;
            }
            i -= 1;
        }
    }
    let mut t = 0.0;
    loop {
        let left = if i == 0 { 0.0 } else { xs[i - 1] };
        let hl = xs[i] - left;
        let e: f64 = rng.sample(Exp1);
        if i + 1 == xs.len() {
            t += e * mu[i] * hl;
            if i == 0 {
                return t;
            }
            i -= 1;
            continue;
        }
        let hr = xs[i + 1] - xs[i];
        t += e * mu[i] * hl * hr / (hl + hr);
        if rng.random::<f64>() < hl / (hl + hr) {
            i += 1;
        } else if i == 0 {
            return t;
        } else {
            i -= 1;
        }
    }
}

/// Independent T0 samples from x, one per replicate.
pub fn sample_t0_batch(m: &StringSpec, x: f64, cfg: &SimConfig) -> Result<Vec<f64>> {
    let s = T0Sampler::new(m, cfg)?;
    cfg.run(|_, rng| s.sample(x, rng))
}

/// Marked Poisson points (u, x) with intensity du ⊗ j on x > ε.
pub struct JumpStream<'a> {
    j: &'a JumpMeasureSpec,
    part_tails: Vec<f64>,
    rate: f64,
}

impl<'a> JumpStream<'a> {
    pub fn new(j: &'a JumpMeasureSpec, eps: f64) -> Result<Self> {
        let part_tails = j.part_tails(eps);
        let rate: f64 = part_tails.iter().sum();
        if !(rate.is_finite()) {
            return Err(Error::Precondition(format!("j(ε, ∞) is infinite at ε = {eps}")));
        }
        Ok(Self { j, part_tails, rate })
    }

    /// j(ε, ∞).
    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn next_gap<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.rate == 0.0 {
            return f64::INFINITY;
        }
        rng.sample::<f64, _>(Exp1) / self.rate
    }

    pub fn mark<R: Rng>(&self, rng: &mut R) -> f64 {
        let mut pick = rng.random::<f64>() * self.rate;
        let mut i = 0;
        while i + 1 < self.part_tails.len() && pick >= self.part_tails[i] {
            pick -= self.part_tails[i];
            i += 1;
        }
        self.j.part_inverse_tail(i, uniform_open(rng) * self.part_tails[i])
    }
}

/// b_ε = ∫_0^ε j(dx) ∫_0^x m(y, ∞) dy.
pub fn small_jump_drift(m: &StringSpec, j: &JumpMeasureSpec, eps: f64) -> Result<f64> {
    m.green_mean(1.0)?;
    let est = j.integrate(&|x| m.green_mean(x).unwrap_or(f64::NAN), 0.0, eps, 1e-11)?;
    if !est.value.is_finite() {
        return Err(Error::Divergence("∫_0^ε Q dj is not finite".into()));
    }
    Ok(est.value)
}

/// One realization of η on [0, U].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubordinatorSample {
    pub jump_times: Vec<f64>,
    pub lifetimes: Vec<f64>,
    pub b_eps: f64,
    pub horizon: f64,
}

impl SubordinatorSample {
    /// η(u) = Σ_{u_i ≤ u} T0_i + b_ε·u.
    pub fn eta_at(&self, u: f64) -> f64 {
        let n = self.jump_times.partition_point(|&t| t <= u);
        self.lifetimes[..n].iter().sum::<f64>() + self.b_eps * u
    }
}

pub fn sample_eta<R: Rng>(
    m: &StringSpec,
    j: &JumpMeasureSpec,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<SubordinatorSample> {
    let b_eps = small_jump_drift(m, j, cfg.eps_jump)?;
    let sampler = T0Sampler::new(m, cfg)?;
    let stream = JumpStream::new(j, cfg.eps_jump)?;
    let mut jump_times = Vec::new();
    let mut lifetimes = Vec::new();
    let mut u = stream.next_gap(rng);
    while u <= cfg.horizon {
        jump_times.push(u);
        lifetimes.push(sampler.sample(stream.mark(rng), rng)?);
        u += stream.next_gap(rng);
    }
    Ok(SubordinatorSample { jump_times, lifetimes, b_eps, horizon: cfg.horizon })
}

/// η at ascending local times, without storing the jumps.
fn eta_at_times<R: Rng>(
    sampler: &T0Sampler,
    stream: &JumpStream,
    b_eps: f64,
    times: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(times.len());
    let mut jumps = 0.0;
    let mut u = stream.next_gap(rng);
    for &t in times {
        while u <= t {
            jumps += sampler.sample(stream.mark(rng), rng)?;
            u += stream.next_gap(rng);
        }
        out.push(jumps + b_eps * t);
    }
    Ok(out)
}

/// Replicated η(U)/U with the quantities needed to judge it against b.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaRun {
    pub slopes: Vec<f64>,
    pub points: Vec<usize>,
    pub b_eps: f64,
    /// j(ε, ∞)·U
    pub expected_points: f64,
    pub horizon: f64,
}

pub fn eta_experiment(m: &StringSpec, j: &JumpMeasureSpec, cfg: &SimConfig) -> Result<EtaRun> {
    let b_eps = small_jump_drift(m, j, cfg.eps_jump)?;
    let sampler = T0Sampler::new(m, cfg)?;
    let stream = JumpStream::new(j, cfg.eps_jump)?;
    let u_end = cfg.horizon;
    let runs = cfg.run(|_, rng| {
        let mut total = 0.0;
        let mut n = 0usize;
        let mut u = stream.next_gap(rng);
        while u <= u_end {
            total += sampler.sample(stream.mark(rng), rng)?;
            n += 1;
            u += stream.next_gap(rng);
        }
        Ok(((total + b_eps * u_end) / u_end, n))
    })?;
    Ok(EtaRun {
        slopes: runs.iter().map(|r| r.0).collect(),
        points: runs.iter().map(|r| r.1).collect(),
        b_eps,
        expected_points: stream.rate() * u_end,
        horizon: u_end,
    })
}

/// Two one-sided pairs glued at 0.
#[derive(Debug, Clone)]
pub struct BilateralSpec {
    pub plus: (StringSpec, JumpMeasureSpec),
    pub minus: (StringSpec, JumpMeasureSpec),
}

impl BilateralSpec {
    /// p = b₊/(b₊ + b₋).
    pub fn p(&self) -> Result<f64> {
        let bp = b_mean(&self.plus.0, &self.plus.1)?;
        let bm = b_mean(&self.minus.0, &self.minus.1)?;
        Ok(bp / (bp + bm))
    }
}

/// (A(t), t − A(t)) for one bilateral path.
pub fn sample_occupation<R: Rng>(
    bi: &BilateralSpec,
    t: f64,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<(f64, f64)> {
    Occupation::new(bi, cfg)?.sample(t, rng)
}

struct Occupation<'a> {
    samplers: [T0Sampler; 2],
    streams: [JumpStream<'a>; 2],
    drifts: [f64; 2],
}

impl<'a> Occupation<'a> {
    fn new(bi: &'a BilateralSpec, cfg: &SimConfig) -> Result<Self> {
        let eps = cfg.eps_jump;
        Ok(Self {
            samplers: [T0Sampler::new(&bi.plus.0, cfg)?, T0Sampler::new(&bi.minus.0, cfg)?],
            streams: [JumpStream::new(&bi.plus.1, eps)?, JumpStream::new(&bi.minus.1, eps)?],
            drifts: [
                small_jump_drift(&bi.plus.0, &bi.plus.1, eps)?,
                small_jump_drift(&bi.minus.0, &bi.minus.1, eps)?,
            ],
        })
    }

    fn sample<R: Rng>(&self, t: f64, rng: &mut R) -> Result<(f64, f64)> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!("occupation horizon must be finite and ≥ 0, got {t}")));
        }
        let rate = self.streams[0].rate() + self.streams[1].rate();
        let drift = self.drifts[0] + self.drifts[1];
        let share = if drift > 0.0 { self.drifts[0] / drift } else { 0.5 };
        let mut clock = 0.0;
        let mut a = 0.0;
        loop {
            // Compensating drift over the local-time gap, split by side.
            let gap: f64 = if rate > 0.0 { rng.sample::<f64, _>(Exp1) / rate } else { f64::INFINITY };
            let dt = drift * gap;
            if clock + dt >= t {
                a += share * (t - clock);
                return Ok((a, t - a));
            }
            clock += dt;
            a += share * dt;
            let side = if rng.random::<f64>() * rate < self.streams[0].rate() { 0 } else { 1 };
            let x = self.streams[side].mark(rng);
            let life = self.samplers[side].sample(x, rng)?;
            let used = life.min(t - clock);
            if side == 0 {
                a += used;
            }
            clock += life;
            if clock >= t {
                return Ok((a, t - a));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationRun {
    pub ratios: Vec<f64>,
    pub p: f64,
    pub t: f64,
}

/// A(t)/t over replicates, t = cfg.horizon.
pub fn occupation_experiment(bi: &BilateralSpec, cfg: &SimConfig) -> Result<OccupationRun> {
    let occ = Occupation::new(bi, cfg)?;
    let t = cfg.horizon;
    let ratios = cfg.run(|_, rng| Ok(occ.sample(t, rng)?.0 / t))?;
    Ok(OccupationRun { ratios, p: bi.p()?, t })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ColumnSummary {
    pub t: f64,
    pub mean: f64,
    pub se_mean: f64,
    pub variance: f64,
    /// Kolmogorov-Smirnov distance of Z(t)/√(2t) to N(0, 1).
    pub ks: f64,
}

/// Z_γ(t) per replicate on a t grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluctuationRun {
    pub gamma: f64,
    pub t_grid: Vec<f64>,
    /// z[r][k] = Z_γ(t_k) of replicate r.
    pub z: Vec<Vec<f64>>,
    pub b: f64,
    pub b_eps: f64,
    pub summary: Vec<ColumnSummary>,
}

/// Z_γ(t) = [η(γt/v(γ')) − b·γt/v(γ')]/(γ^{1/2}·u(γ')), γ' = γ^{α/2}.
pub fn fluctuation_experiment(
    fam: &ScalingFamily,
    gamma: f64,
    t_grid: &[f64],
    cfg: &SimConfig,
) -> Result<FluctuationRun> {
    if t_grid.is_empty() || t_grid.iter().any(|t| !(*t > 0.0)) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("t grid must be positive and strictly ascending".into()));
    }
    let gp = fam.gamma_prime(gamma);
    let speed = gamma / fam.v.eval(gp);
    let norm = gamma.sqrt() * fam.u.eval(gp);
    let b = b_mean(&fam.m, &fam.j)?;
    let b_eps = small_jump_drift(&fam.m, &fam.j, cfg.eps_jump)?;
    let sampler = T0Sampler::new(&fam.m, cfg)?;
    let stream = JumpStream::new(&fam.j, cfg.eps_jump)?;
    let local: Vec<f64> = t_grid.iter().map(|t| speed * t).collect();
    let z = cfg.run(|_, rng| {
        let eta = eta_at_times(&sampler, &stream, b_eps, &local, rng)?;
        Ok(eta.iter().zip(&local).map(|(e, u)| (e - b * u) / norm).collect::<Vec<f64>>())
    })?;
    let summary = t_grid
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let col: Vec<f64> = z.iter().map(|r| r[k]).collect();
            let (mean, variance) = mean_var(&col);
            let scaled: Vec<f64> = col.iter().map(|v| v / (2.0 * t).sqrt()).collect();
            ColumnSummary {
                t,
                mean,
                se_mean: (variance / col.len() as f64).sqrt(),
                variance,
                ks: ks_normal(&scaled),
            }
        })
        .collect();
    Ok(FluctuationRun { gamma, t_grid: t_grid.to_vec(), z, b, b_eps, summary })
}

/// Sample mean and unbiased variance.
pub fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var)
}

/// sup |F_n − Φ| for the standard normal Φ.
pub fn ks_normal(v: &[f64]) -> f64 {
    let normal = Normal::standard();
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bessel::{natural_scale_string, BesselDriftSpec};

    fn cj_pair() -> JumpMeasureSpec {
        JumpMeasureSpec::power_piece(0.0, 1.0, 1.0, 0.25)
            .unwrap()
            .plus(&JumpMeasureSpec::power_piece(1.0, f64::INFINITY, 1.0, 1.0).unwrap())
    }

    fn cfg(replicates: usize) -> SimConfig {
        SimConfig { seed: 7, replicates, ..SimConfig::default() }
    }

    fn within_3se(v: &[f64], target: f64) -> bool {
        let (m, var) = mean_var(v);
        (m - target).abs() <= 3.0 * (var / v.len() as f64).sqrt()
    }

    #[test]
    fn exact_t0_matches_green_mean() {
        for (theta, x) in [(0.4, 1.0), (0.5, 1.0), (0.5, 4.0), (0.6, 1.0)] {
            let m = StringSpec::power(theta).unwrap();
            let t = sample_t0_batch(&m, x, &cfg(10_000)).unwrap();
            let q = m.green_mean(x).unwrap();
            assert!(within_3se(&t, q), "θ={theta} x={x}: {:?} vs {q}", mean_var(&t));
        }
        let (m, _) = mean_var(&sample_t0_batch(&StringSpec::power(0.5).unwrap(), 4.0, &cfg(10_000)).unwrap());
        assert!((m - 4.0).abs() < 0.5);
    }

    #[test]
    fn t0_vanishes_near_zero() {
        let c = cfg(201);
        let m = StringSpec::power(0.5).unwrap();
        let medians: Vec<f64> = [1e-5, 1e-7, 1e-9]
            .iter()
            .map(|&x| {
                let mut t = sample_t0_batch(&m, x, &c).unwrap();
                t.sort_by(f64::total_cmp);
                t[100]
            })
            .collect();
        assert!(medians.windows(2).all(|w| w[1] < 0.2 * w[0]), "{medians:?}");
        assert!(medians[2] < 10.0 * c.dt);
    }

    #[test]
    fn euler_t0_matches_green_mean_and_refines() {
        let m = StringSpec::power(0.6).unwrap();
        let base = SimConfig { scheme: Scheme::Euler, dt: 2e-4, ..cfg(2000) };
        let fine = SimConfig { dt: 1e-4, ..base.clone() };
        assert!(!T0Sampler::new(&m, &base).unwrap().is_exact());
        let a = sample_t0_batch(&m, 1.0, &base).unwrap();
        let b = sample_t0_batch(&m, 1.0, &fine).unwrap();
        assert!(within_3se(&b, 2.5), "{:?}", mean_var(&b));
        let (ma, va) = mean_var(&a);
        let (mb, vb) = mean_var(&b);
        assert!((ma - mb).abs() < 3.0 * ((va + vb) / 2000.0).sqrt());
    }

    #[test]
    fn birth_death_matches_green_mean() {
        let m = StringSpec::tabulated(vec![0.5, 1.0, 2.0, 3.0], vec![-3.0, -2.0, -1.5, -1.0]).unwrap();
        for x in [0.7, 1.0, 3.5] {
            let t = sample_t0_batch(&m, x, &cfg(20_000)).unwrap();
            assert!(within_3se(&t, m.green_mean(x).unwrap()), "x={x}");
        }
    }

    #[test]
    fn drift_euler_matches_green_mean() {
        let (drift, _) = BesselDriftSpec::calibrated(2.5, 2.0, 0.0).unwrap();
        let m = natural_scale_string(&drift).unwrap();
        let c = SimConfig { dt: 1e-4, ..cfg(2000) };
        let s = T0Sampler::new(&m, &c).unwrap();
        assert!(!s.is_exact());
        let x = m.breakpoints()[0] * 1.5;
        let t = sample_t0_batch(&m, x, &c).unwrap();
        assert!(
            within_3se(&t, m.green_mean(x).unwrap()),
            "{:?} vs {}",
            mean_var(&t),
            m.green_mean(x).unwrap()
        );
    }

    #[test]
    fn poisson_count_concentrates() {
        let m = StringSpec::power(0.5).unwrap();
        let j = cj_pair();
        let c = SimConfig { horizon: 200.0, ..cfg(20) };
        let run = eta_experiment(&m, &j, &c).unwrap();
        let e = run.expected_points;
        assert!(run.points.iter().all(|&n| (n as f64 - e).abs() <= 4.0 * e.sqrt()));
        let mut rng = c.rng(0);
        let s = sample_eta(&m, &j, &c, &mut rng).unwrap();
        assert!(s.jump_times.windows(2).all(|w| w[1] > w[0]));
        assert!(s.eta_at(50.0) <= s.eta_at(100.0) && s.eta_at(200.0) >= s.b_eps * 200.0);
    }

    #[test]
    fn eta_slope_near_b_and_epsilon_consistent() {
        let m = StringSpec::power(0.5).unwrap();
        let j = cj_pair();
        let fine = SimConfig { horizon: 300.0, ..cfg(100) };
        let coarse = SimConfig { eps_jump: 1e-1, seed: 8, ..fine.clone() };
        let a = eta_experiment(&m, &j, &fine).unwrap();
        let b = eta_experiment(&m, &j, &coarse).unwrap();
        // b_ε = ∫_0^ε 2√x·x^{−5/4} dx = 8ε^{1/4}
        assert!((a.b_eps - 8.0 * 1e-3f64.powf(0.25)).abs() < 1e-9);
        assert!(b.b_eps > a.b_eps);
        assert!(within_3se(&a.slopes, 12.0), "{:?}", mean_var(&a.slopes));
        let (ma, va) = mean_var(&a.slopes);
        let (mb, vb) = mean_var(&b.slopes);
        assert!((ma - mb).abs() < 3.0 * ((va + vb) / 100.0).sqrt());
    }

    #[test]
    fn results_do_not_depend_on_workers() {
        let m = StringSpec::power(0.5).unwrap();
        let one = SimConfig { workers: 1, horizon: 50.0, ..cfg(16) };
        let four = SimConfig { workers: 4, ..one.clone() };
        assert_eq!(
            eta_experiment(&m, &cj_pair(), &one).unwrap(),
            eta_experiment(&m, &cj_pair(), &four).unwrap()
        );
    }

    #[test]
    fn occupation_shares() {
        let m = StringSpec::power(0.5).unwrap();
        let j = cj_pair();
        let sym = BilateralSpec { plus: (m.clone(), j.clone()), minus: (m.clone(), j.clone()) };
        let tilted =
            BilateralSpec { plus: (m.clone(), j.clone()), minus: (m.clone(), j.scaled(2.0, 1.0).unwrap()) };
        let c = SimConfig { horizon: 1e4, ..cfg(50) };
        let r = occupation_experiment(&sym, &c).unwrap();
        assert!((r.p - 0.5).abs() < 1e-12 && within_3se(&r.ratios, 0.5));
        let r = occupation_experiment(&tilted, &c).unwrap();
        assert!(
            (r.p - 1.0 / 3.0).abs() < 1e-9 && within_3se(&r.ratios, 1.0 / 3.0),
            "{:?}",
            mean_var(&r.ratios)
        );
        let mut rng = c.rng(3);
        for t in [1e-9, 1.0, 37.0] {
            let (a, b) = sample_occupation(&tilted, t, &c, &mut rng).unwrap();
            assert!((0.0..=t).contains(&a) && ((a + b) - t).abs() <= 1e-12 * t);
        }
    }

    #[test]
    fn fluctuation_table_shape() {
        let fam = ScalingFamily::bessel(3.5, 1.0, 1.0, 0.25, 0.5).unwrap();
        let c = SimConfig { eps_jump: 1.0, ..cfg(200) };
        let run = fluctuation_experiment(&fam, 1e3, &[0.5, 1.0], &c).unwrap();
        assert_eq!(run.z.len(), 200);
        assert!(run.summary.iter().all(|s| s.ks.is_finite() && s.variance > 0.0));
        assert!(run.summary.iter().all(|s| s.mean.abs() <= 4.0 * s.se_mean), "{:?}", run.summary);
    }

    #[test]
    fn ks_distance_of_normal_sample_is_small() {
        let mut rng = cfg(1).rng(0);
        let v: Vec<f64> = (0..4000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        assert!(ks_normal(&v) < 0.03);
        assert!(ks_normal(&v.iter().map(|x| x + 1.0).collect::<Vec<_>>()) > 0.3);
    }
}
