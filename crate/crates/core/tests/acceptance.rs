//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Tolerances and runtime limits are pinned below. Criteria listed in
//! `KNOWN_CONFLICTS` are evaluated as stated and reported, but do not fail
//! the run; everything else does. `ACCEPTANCE_ONLY=3,7` runs a subset.

use std::f64::consts::PI;
use std::fs;
use std::time::Instant;

use jumpin::bessel::{
    alpha_of_delta, n_asymptotic_constant, n_asymptotic_exponent, natural_scale_string, BesselDriftSpec,
};
use jumpin::eigen::{admissible_order, c_d, scaling_identity_check, wronskian, Eigen};
use jumpin::levy::{chi, conjugate_residual, kappa_hat, ScalingFamily, SlowlyVarying};
use jumpin::measure::{
    d_of_m, n_of_gamma, GTable, JumpMeasureSpec, SingularityIndex, StringSpec, DEEP_FLOOR_LOG2,
};
use jumpin::simulate::{
    eta_experiment, fluctuation_experiment, mean_var, occupation_experiment, BilateralSpec, SimConfig,
};
use jumpin::verify::{self, Outcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PSI_REL_TOL: f64 = 1e-8;
const G_ABS_TOL: f64 = 1e-6;
const WRONSKIAN_TOL: f64 = 1e-6;
const RECURSION_TOL: f64 = 1e-8;
/// Quadrature slack added to the certified series bounds in the scaling identities.
const SCALING_QUAD_SLACK: f64 = 1e-8;
const C1_TOL: f64 = 1e-6;
const CHI_REL_TOL: f64 = 5e-3;
const N_RATIO_TOL: f64 = 0.1;
const SE_MULTIPLE: f64 = 3.0;
const CONJUGATE_TOL: f64 = 0.05;
const BOOTSTRAP_DRAWS: usize = 2000;

/// Criteria that cannot hold as stated, with the reason.
const KNOWN_CONFLICTS: &[(u32, &str)] = &[(
    3,
    "with g = φ¹ − c¹ψ the Lebesgue closed forms give c¹ = √λ − λ; the stated λ − √λ has the opposite sign",
)];

type Check = Result<(bool, String), String>;

struct Criterion {
    id: u32,
    name: &'static str,
    limit_s: Option<f64>,
    run: fn() -> Check,
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn lebesgue() -> StringSpec {
    StringSpec::lebesgue(1.0).unwrap()
}

fn bessel_string(delta: f64) -> Result<StringSpec, String> {
    natural_scale_string(&BesselDriftSpec::new(delta, 1.0, 1.0, 0.0).map_err(err)?).map_err(err)
}

fn c1_eigen() -> Check {
    let m = lebesgue();
    let xs: Vec<f64> = (1..=100).map(|i| 0.05 * i as f64).collect();
    let (mut psi_err, mut g_err) = (0.0f64, 0.0f64);
    for lambda in [0.5, 1.0, 4.0] {
        let eig = Eigen::new(&m, lambda, &xs).map_err(err)?;
        let r = f64::sqrt(lambda);
        for &x in &xs {
            let want = (r * x).sinh() / r;
            psi_err = psi_err.max((eig.psi_at(x).value - want).abs() / want);
            g_err = g_err.max((eig.g_at(x).value - (-r * x).exp()).abs());
        }
    }
    let ok = psi_err <= PSI_REL_TOL && g_err <= G_ABS_TOL;
    Ok((ok, format!("max ψ rel err {psi_err:.2e}, max g abs err {g_err:.2e}")))
}

fn c2_identities() -> Check {
    let mut fams = vec![("lebesgue", lebesgue())];
    for theta in [0.4, 0.5, 0.6] {
        fams.push(("power", StringSpec::power(theta).map_err(err)?));
    }
    fams.push(("bessel δ=-0.8", bessel_string(-0.8)?));
    let (mut w_err, mut rec_err, mut scale_excess) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    for (_, m) in &fams {
        let d = admissible_order(m, 12).map_err(err)?;
        for lambda in [0.5, 2.0] {
            for x in [0.3, 1.0, 2.5] {
                w_err = w_err.max((wronskian(m, lambda, x).map_err(err)? - 1.0).abs());
            }
            // c^{d+1} = c^d − λ^{d+1}·∫_0^1 G^d dm, with G^d from the table
            let t = GTable::build(m, d, 2f64.powi(DEEP_FLOOR_LOG2), 2.0, &[], 0.0).map_err(err)?;
            let integrand: Vec<f64> = t.g[d].iter().zip(&t.dm.density).map(|(g, w)| g * w).collect();
            let atoms = t.grid.atom_terms(&t.g[d], &t.dm.atoms);
            let cum = t.grid.cum(&integrand, Some(&atoms), t.grid.power_head(&integrand));
            let int = t.grid.at_edge(&cum, t.one).1;
            let lhs = c_d(m, d + 1, lambda).map_err(err)?;
            let rhs = c_d(m, d, lambda).map_err(err)? - lambda.powi(d as i32 + 1) * int;
            rec_err = rec_err.max((lhs - rhs).abs());
            for (a, b) in [(0.5, 2.0), (3.0, 0.25)] {
                let r = scaling_identity_check(m, a, b, lambda, 0.8).map_err(err)?;
                let gs = r.g.abs() - r.g_bound - SCALING_QUAD_SLACK;
                let ps = r.psi.abs() - r.psi_bound - SCALING_QUAD_SLACK * b;
                scale_excess = scale_excess.max(gs).max(ps);
            }
        }
    }
    let ok = w_err <= WRONSKIAN_TOL && rec_err <= RECURSION_TOL && scale_excess <= 0.0;
    Ok((
        ok,
        format!(
            "{} families: |W−1| ≤ {w_err:.2e}, recursion gap {rec_err:.2e}, scaling residual minus bound {scale_excess:.2e}",
            fams.len()
        ),
    ))
}

fn c3_c1_closed_form() -> Check {
    let m = lebesgue();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for lambda in [1.0f64, 4.0, 9.0] {
        let c = c_d(&m, 1, lambda).map_err(err)?;
        let stated = lambda - lambda.sqrt();
        worst = worst.max((c - stated).abs());
        parts.push(format!("λ={lambda}: c¹={c:.9}, stated {stated}"));
    }
    Ok((worst <= C1_TOL, parts.join("; ")))
}

fn c4_singularity_index() -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for (theta, want) in [(0.4f64, 1usize), (0.5, 2), (0.6, 2), (0.75, 4)] {
        // exponent analysis: (−1)ᵏGᵏ ~ x^{k(1−θ)}·x^{−θ}, dm ~ x^{−θ−1}, so the
        // integral converges iff k(1−θ) − θ > 0
        let oracle = (theta / (1.0 - theta)).floor() as usize + 1;
        let got = match d_of_m(&StringSpec::power(theta).map_err(err)?, 12).map_err(err)? {
            SingularityIndex::Finite(k) => k,
            SingularityIndex::ExceedsMax(_) => usize::MAX,
        };
        ok &= got == want && got == oracle;
        parts.push(format!("θ={theta}: d={got} (oracle {oracle})"));
    }
    Ok((ok, parts.join(", ")))
}

fn c5_chi_oracle() -> Check {
    let m = lebesgue();
    let j = JumpMeasureSpec::power_tail(1.0, 0.5).map_err(err)?;
    let mut worst = 0.0f64;
    for lambda in [1.0f64, 16.0] {
        let want = PI.sqrt() * lambda.powf(0.25);
        worst = worst.max((chi(&m, &j, lambda).map_err(err)? / want - 1.0).abs());
    }
    Ok((worst <= CHI_REL_TOL, format!("max rel err {worst:.2e}")))
}

fn bessel_family() -> Result<ScalingFamily, String> {
    ScalingFamily::bessel(3.5, 1.0, 1.0, 0.25, 0.5).map_err(err)
}

fn c6_n_asymptotics() -> Check {
    let fam = bessel_family()?;
    let c = n_asymptotic_constant(3.5, 1.0, 1.0).map_err(err)?;
    let q = n_asymptotic_exponent(3.5, 1.0, 1.0);
    let ratio = |g: f64| -> Result<f64, String> {
        Ok(n_of_gamma(&fam.m, &fam.j, g).map_err(err)? / (c * g.ln().powf(q)))
    };
    let at = ratio(1e6)?;
    let grid: Vec<f64> = (3..=8).map(|k| 10f64.powi(k)).collect();
    let rs = grid.iter().map(|&g| ratio(g)).collect::<Result<Vec<_>, _>>()?;
    let monotone = rs.windows(2).all(|w| (w[1] - 1.0).abs() < (w[0] - 1.0).abs());
    let ok = (at - 1.0).abs() <= N_RATIO_TOL || monotone;
    let list: Vec<String> = rs.iter().map(|r| format!("{r:.4}")).collect();
    Ok((ok, format!("ratio at 1e6 = {at:.4}; over 1e3..1e8: [{}], monotone: {monotone}", list.join(", "))))
}

fn c7_continuity_hypotheses() -> Check {
    let fam = bessel_family()?;
    let grid = verify::default_gamma_grid();
    let (g, d) = verify::check_g_convergence(&fam, None, &grid).map_err(err)?;
    let kd = verify::check_kappa_delta(&fam, &[verify::TestFn::One], &grid).map_err(err)?;
    let minor = verify::check_minor_conditions(&fam, &grid).map_err(err)?;
    let pick = |name: &str| minor.iter().find(|f| f.name == name).cloned().unwrap();
    let checks = [g, kd[0].clone(), pick("first_moment"), pick("tail_mass")];
    let ok = checks.iter().all(|f| f.outcome == Outcome::Pass);
    let parts: Vec<String> = checks.iter().map(|f| format!("{} {:?}", f.name, f.outcome)).collect();
    Ok((ok, format!("d={d}; {}", parts.join(", "))))
}

fn c8_laplace_limit() -> Check {
    let fam = bessel_family()?;
    let lambdas = [0.5, 1.0, 2.0];
    let gammas: Vec<f64> = (4..=8).map(|k| 10f64.powi(k)).collect();
    let mut table = Vec::new();
    for &g in &gammas {
        table.push(
            lambdas.iter().map(|&l| kappa_hat(&fam, g, l)).collect::<Result<Vec<_>, _>>().map_err(err)?,
        );
    }
    let (first, last) = (&table[0], &table[table.len() - 1]);
    let closer = (0..lambdas.len()).all(|i| (last[i] - 1.0).abs() < (first[i] - 1.0).abs());
    let spread = |row: &Vec<f64>| {
        row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - row.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let spreads: Vec<f64> = table.iter().map(spread).collect();
    let shrinking = spreads.windows(2).all(|w| w[1] < w[0]);
    let fmt = |r: &Vec<f64>| r.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join("/");
    Ok((
        closer && shrinking,
        format!(
            "κ̂ at 1e4 {} → 1e8 {}; spread {:.4} → {:.4}, monotone: {shrinking}",
            fmt(first),
            fmt(last),
            spreads[0],
            spreads[spreads.len() - 1]
        ),
    ))
}

fn cj_pair() -> Result<JumpMeasureSpec, String> {
    Ok(JumpMeasureSpec::power_piece(0.0, 1.0, 1.0, 0.25)
        .map_err(err)?
        .plus(&JumpMeasureSpec::power_piece(1.0, f64::INFINITY, 1.0, 1.0).map_err(err)?))
}

fn c9_eta_lln() -> Check {
    let m = StringSpec::power(0.5).map_err(err)?;
    let j = cj_pair()?;
    let cfg = SimConfig { seed: 9, replicates: 100, eps_jump: 1e-3, horizon: 1e3, ..Default::default() };
    let run = eta_experiment(&m, &j, &cfg).map_err(err)?;
    let (mean, var) = mean_var(&run.slopes);
    let se = (var / run.slopes.len() as f64).sqrt();
    let ok = (mean - 12.0).abs() <= SE_MULTIPLE * se;
    Ok((ok, format!("mean η(U)/U = {mean:.4} ± {se:.4} (b = 12, b_ε = {:.4})", run.b_eps)))
}

fn bootstrap_se(n: usize, stat: &dyn Fn(&[usize]) -> f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<f64> = (0..BOOTSTRAP_DRAWS)
        .map(|_| {
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            stat(&idx)
        })
        .collect();
    mean_var(&draws).1.sqrt()
}

fn c10_fluctuation_shape() -> Check {
    let fam = bessel_family()?;
    let gamma = 1e4;
    let cfg = SimConfig { seed: 10, replicates: 400, eps_jump: 1.0, ..Default::default() };
    let run = fluctuation_experiment(&fam, gamma, &[1.0, 2.0], &cfg).map_err(err)?;
    let n = run.z.len();
    let z1: Vec<f64> = run.z.iter().map(|r| r[0]).collect();
    let z2: Vec<f64> = run.z.iter().map(|r| r[1]).collect();
    let (m1, v1) = mean_var(&z1);
    let (m2, v2) = mean_var(&z2);
    let mean_ok =
        m1.abs() <= SE_MULTIPLE * (v1 / n as f64).sqrt() && m2.abs() <= SE_MULTIPLE * (v2 / n as f64).sqrt();
    let ratio_of = |idx: &[usize]| {
        let a: Vec<f64> = idx.iter().map(|&i| z1[i]).collect();
        let b: Vec<f64> = idx.iter().map(|&i| z2[i]).collect();
        mean_var(&b).1 / mean_var(&a).1
    };
    let all: Vec<usize> = (0..n).collect();
    let ratio = ratio_of(&all);
    let ratio_se = bootstrap_se(n, &ratio_of, 11);
    let ratio_ok = (ratio - 2.0).abs() <= SE_MULTIPLE * ratio_se;
    let inc: Vec<f64> = z2.iter().zip(&z1).map(|(b, a)| b - a).collect();
    let (mi, vi) = mean_var(&inc);
    let cov = z1.iter().zip(&inc).map(|(a, b)| (a - m1) * (b - mi)).sum::<f64>() / (n as f64 - 1.0);
    let corr = cov / (v1 * vi).sqrt();
    let corr_se = 1.0 / (n as f64).sqrt();
    let corr_ok = corr.abs() <= SE_MULTIPLE * corr_se;
    Ok((
        mean_ok && ratio_ok && corr_ok,
        format!(
            "γ={gamma:e}, n={n}: means {m1:.3}/{m2:.3}, Var ratio {ratio:.3} ± {ratio_se:.3}, increment corr {corr:.3} ± {corr_se:.3}"
        ),
    ))
}

fn c11_occupation() -> Check {
    let m = StringSpec::power(0.5).map_err(err)?;
    let j = cj_pair()?;
    let cfg = SimConfig { seed: 11, replicates: 100, horizon: 1e4, ..Default::default() };
    let mut parts = Vec::new();
    let mut ok = true;
    for (scale, want) in [(1.0, 0.5), (2.0, 1.0 / 3.0)] {
        let bi = BilateralSpec {
            plus: (m.clone(), j.clone()),
            minus: (m.clone(), j.scaled(scale, 1.0).map_err(err)?),
        };
        let run = occupation_experiment(&bi, &cfg).map_err(err)?;
        let (mean, var) = mean_var(&run.ratios);
        let se = (var / run.ratios.len() as f64).sqrt();
        ok &= (mean - want).abs() <= SE_MULTIPLE * se;
        parts.push(format!("p={:.4}: A/t = {mean:.4} ± {se:.4}", run.p));
    }
    Ok((ok, parts.join("; ")))
}

fn c12_reproducibility() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let cfgs = [
        (
            "simulate",
            "eta.csv",
            "[string]\nfamily = \"power\"\ntheta = 0.5\n[jump]\nfamily = \"pieces\"\nlo = [0.0, 1.0]\nhi = [1.0, inf]\ncoef = [1.0, 1.0]\nbeta = [0.25, 1.0]\n[sim]\nseed = 12\nreplicates = 24\nhorizon = 100.0\n[experiment]\nkind = \"eta\"\n[output]\nformat = \"csv\"\n",
        ),
        (
            "verify",
            "verify.json",
            "[family]\nfamily = \"bessel\"\nalpha = 3.5\n[grid]\ngamma_lo = 100.0\ngamma_hi = 1e5\ngamma_n = 5\nlambdas = [1.0]\n",
        ),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (cmd, file, text) in cfgs {
        let cfg = dir.path().join(format!("{cmd}.toml"));
        fs::write(&cfg, text).map_err(err)?;
        let mut outs = Vec::new();
        for workers in ["1", "4"] {
            let out = dir.path().join(format!("{cmd}-{workers}"));
            let args = [
                "jumpin",
                cmd,
                "-c",
                cfg.to_str().unwrap(),
                "-o",
                out.to_str().unwrap(),
                "--workers",
                workers,
            ];
            let cli = <jumpin::cli::Cli as clap::Parser>::try_parse_from(args).map_err(err)?;
            jumpin::cli::run(&cli.command)
                .map_err(|f| format!("{cmd} failed ({}): {}", f.code, f.message))?;
            outs.push(fs::read(out.join(file)).map_err(err)?);
        }
        let same = outs[0] == outs[1];
        ok &= same;
        parts.push(format!("{cmd}/{file}: {}", if same { "identical" } else { "different" }));
    }
    Ok((ok, parts.join(", ")))
}

fn c13_conjugates() -> Check {
    let fs = [
        ("const", SlowlyVarying::constant(2.0)),
        ("log^1/2", SlowlyVarying::log_power(1.0, 0.5)),
        ("log", SlowlyVarying::log_power(1.0, 1.0)),
    ];
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (name, f) in &fs {
        let r = conjugate_residual(f, 1e8).map_err(err)?;
        worst = worst.max(r);
        parts.push(format!("{name}: {r:.2e}"));
    }
    Ok((worst < CONJUGATE_TOL, parts.join(", ")))
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "eigenfunction oracles", limit_s: Some(1.0), run: c1_eigen },
        Criterion { id: 2, name: "structural identities", limit_s: Some(10.0), run: c2_identities },
        Criterion { id: 3, name: "c1 closed form", limit_s: None, run: c3_c1_closed_form },
        Criterion { id: 4, name: "d(m) classification", limit_s: Some(30.0), run: c4_singularity_index },
        Criterion { id: 5, name: "chi oracle", limit_s: Some(5.0), run: c5_chi_oracle },
        Criterion { id: 6, name: "N asymptotics", limit_s: Some(120.0), run: c6_n_asymptotics },
        Criterion {
            id: 7,
            name: "continuity hypotheses",
            limit_s: Some(300.0),
            run: c7_continuity_hypotheses,
        },
        Criterion { id: 8, name: "Laplace-exponent limit", limit_s: Some(300.0), run: c8_laplace_limit },
        Criterion { id: 9, name: "inverse local time LLN", limit_s: Some(300.0), run: c9_eta_lln },
        Criterion { id: 10, name: "fluctuation shape", limit_s: None, run: c10_fluctuation_shape },
        Criterion { id: 11, name: "occupation LLN", limit_s: Some(600.0), run: c11_occupation },
        Criterion { id: 12, name: "reproducibility", limit_s: None, run: c12_reproducibility },
        Criterion { id: 13, name: "de Bruijn conjugate", limit_s: Some(1.0), run: c13_conjugates },
    ];
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    assert_eq!(alpha_of_delta(-5.0).unwrap(), 3.5);
    let mut unexpected = 0;
    for c in &criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&c.id)) {
            continue;
        }
        let start = Instant::now();
        let result = (c.run)();
        let secs = start.elapsed().as_secs_f64();
        let (mut pass, detail) = match result {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let timing = match c.limit_s {
            Some(l) => {
                pass &= secs < l;
                format!("{secs:.2} s, limit {l} s")
            }
            None => format!("{secs:.2} s"),
        };
        let known = KNOWN_CONFLICTS.iter().find(|(id, _)| *id == c.id);
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("{tag} [{:>2}] {}: {detail} ({timing})", c.id, c.name);
        if !pass {
            match known {
                Some((_, why)) => println!("     known conflict: {why}"),
                None => unexpected += 1,
            }
        }
    }
    if unexpected > 0 {
        eprintln!("{unexpected} criteria failed");
        std::process::exit(1);
    }
}
