//! Acceptance suite: one line per criterion. Failures are reported; the exit
//! code is nonzero only with `--strict` or `STABLEDRIFT_ACCEPTANCE_STRICT` set.
//!
//! Statistical checks follow a two-of-three policy: an attempt is repeated
//! with fresh seeds until two attempts pass or two fail.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use stabledrift_core::density::{density_grid, density_point, TabulatedCdf};
use stabledrift_core::drift::{DriftField, DriftSpec};
use stabledrift_core::generator::{Generator, GeneratorTable, QuadConfig, TestFunction};
use stabledrift_core::grid::{GridField, GridSpec};
use stabledrift_core::mcverify::{
    krylov_ratio_probe, martingale_residual, resolvent_mc, resolvent_mc_exponential_time, weak_uniqueness_probe,
    SimConfig,
};
use stabledrift_core::resolvent::{
    multiplier_probe, neumann_solve, proxy_resolvent, random_sources, residual, DeviationKernel, DeviationQuad, NeumannConfig,
};
use stabledrift_core::rng::derive_seed;
use stabledrift_core::sampler::{sample_decomposition, sample_exact, sample_large_jumps, Scheme};
use stabledrift_core::spectral::SpectralMeasure;
use stabledrift_core::stats::{ks_one_sample, ks_two_sample, MeanEstimate};
use stabledrift_core::Error;

const SEED: u64 = 0x0005_7ab1_e0d1;

type Check = Result<(bool, String), Error>;

fn cauchy1() -> SpectralMeasure {
    SpectralMeasure::symmetrize(&[(vec![1.0], 1.0)]).unwrap()
}

/// Two-of-three over fresh seeds; the detail of the deciding attempt is kept.
fn retry(name: &str, mut attempt: impl FnMut(u64) -> Check) -> Check {
    let (mut passes, mut fails) = (0, 0);
    let mut log = Vec::new();
    let mut last = String::new();
    for k in 0..3 {
        let (ok, detail) = attempt(derive_seed(SEED, &format!("{name}/{k}")))?;
        log.push(if ok { "p" } else { "f" });
        if ok {
            passes += 1;
        } else {
            fails += 1;
        }
        last = detail;
        if passes == 2 || fails == 2 {
            break;
        }
    }
    Ok((passes == 2, format!("{last} [attempts {}]", log.join(""))))
}

fn c01() -> Check {
    let cyl = SpectralMeasure::cylindrical(2).nondegeneracy_kappa(360)?;
    let err = (cyl.kappa - 2f64.sqrt()).abs();
    let single = SpectralMeasure::symmetrize(&[(vec![1.0, 0.0], 1.0)])?;
    let rejected = matches!(single.nondegeneracy_kappa(360), Err(Error::DegenerateMeasure { .. }));
    Ok((err < 1e-6 && rejected, format!("kappa={:.10} |err|={err:.1e}, single ray rejected={rejected}", cyl.kappa)))
}

fn interior_rel_error(a: &GridField, b: &GridField, scale: f64) -> f64 {
    (0..a.values.len())
        .filter(|&i| a.spec.is_interior(i, 0.25))
        .map(|i| (a.values[i] - scale * b.values[i]).abs() / (scale * b.values[i]).abs().max(1e-300))
        .fold(0.0, f64::max)
}

fn c02() -> Check {
    let mu = cauchy1();
    let n = 1 << 17;
    let grid = GridSpec::centered(1, n, 0.05);
    let p = density_grid(&mu, 1.0, &[0.0], &grid)?;
    let e1 = (p.field.values[n / 2] - 1.0 / PI).abs();
    let cyl = SpectralMeasure::cylindrical(2);
    let e2 = (density_point(&cyl, 1.0, &[0.0, 0.0])? - 1.0 / (PI * PI)).abs();
    // same grid in units of t: the identity holds node by node
    let g1 = GridSpec::centered(1, 1 << 14, 0.05);
    let s1 = interior_rel_error(
        &density_grid(&mu, 2.0, &[0.0], &g1.scaled(2.0))?.field,
        &density_grid(&mu, 1.0, &[0.0], &g1)?.field,
        0.5,
    );
    let g2 = GridSpec::centered(2, 256, 0.07);
    let s2 = interior_rel_error(
        &density_grid(&cyl, 2.0, &[0.0, 0.0], &g2.scaled(2.0))?.field,
        &density_grid(&cyl, 1.0, &[0.0, 0.0], &g2)?.field,
        0.25,
    );
    let ok = e1 < 1e-6 && e2 < 1e-5 && s1 < 1e-6 && s2 < 1e-6;
    Ok((ok, format!("|p1(0)-1/π|={e1:.1e} |p2(0)-1/π²|={e2:.1e} self-similarity d=1 {s1:.1e} d=2 {s2:.1e}")))
}

fn projected_cdf(mu: &SpectralMeasure) -> Result<TabulatedCdf, Error> {
    let grid = GridSpec::centered(1, 1 << 17, 0.05);
    let p = density_grid(mu, 1.0, &[0.0], &grid)?;
    TabulatedCdf::from_symmetric_density(&p.field, 0.0)
}

fn c03() -> Check {
    let n = 100_000;
    let cyl = SpectralMeasure::cylindrical(2);
    let one = cauchy1();
    let cdf1 = projected_cdf(&one)?;
    let dirs = [vec![1.0, 0.0], vec![0.6, 0.8], vec![FRAC_1_SQRT_2, FRAC_1_SQRT_2]];
    let cdfs: Vec<TabulatedCdf> = dirs.iter().map(|u| projected_cdf(&cyl.project(u)?)).collect::<Result<_, _>>()?;
    retry("c03", |seed| {
        let mut ps = Vec::new();
        let z = sample_exact(&one, 1.0, n, derive_seed(seed, "d1"))?;
        ps.push(ks_one_sample(&z.coordinate(0), |x| cdf1.cdf(x)).p_value);
        let z2 = sample_exact(&cyl, 1.0, n, derive_seed(seed, "d2"))?;
        for (u, cdf) in dirs.iter().zip(&cdfs) {
            ps.push(ks_one_sample(&z2.projection(u), |x| cdf.cdf(x)).p_value);
        }
        let dec = sample_decomposition(&cyl, 1.0, n, derive_seed(seed, "dec"))?;
        for k in 0..2 {
            ps.push(ks_two_sample(&z2.coordinate(k), &dec.coordinate(k)).p_value);
        }
        let (_, n4) = sample_large_jumps(&cyl, 4.0, n, derive_seed(seed, "n4"))?;
        let (_, n1) = sample_large_jumps(&cyl, 1.0, n, derive_seed(seed, "n1"))?;
        let scaled: Vec<f64> = n1.coordinate(0).iter().map(|v| 4.0 * v).collect();
        ps.push(ks_two_sample(&n4.coordinate(0), &scaled).p_value);
        let min = ps.iter().copied().fold(1.0, f64::min);
        let list: Vec<String> = ps.iter().map(|p| format!("{p:.3}")).collect();
        Ok((min > 0.01, format!("KS p-values [{}] (1-d, 3 projections, decomposition x2, large-jump scaling)", list.join(", "))))
    })
}

fn c04() -> Check {
    let cyl = SpectralMeasure::cylindrical(2);
    let ts = [0.25, 1.0, 4.0];
    retry("c04", |seed| {
        let batches: Vec<_> = ts
            .iter()
            .map(|&t| sample_exact(&cyl, t, 100_000, derive_seed(seed, &format!("t{t}"))))
            .collect::<Result<_, _>>()?;
        let mut worst: f64 = 0.0;
        for gamma in [0.25, 0.5, 0.75] {
            let est: Vec<MeanEstimate> = batches
                .iter()
                .zip(&ts)
                .map(|(b, &t)| {
                    let v: Vec<f64> =
                        b.samples.iter().map(|s| s.iter().map(|x| x * x).sum::<f64>().sqrt().powf(gamma) / t.powf(gamma)).collect();
                    MeanEstimate::from_samples(&v)
                })
                .collect();
            for i in 0..3 {
                for j in i + 1..3 {
                    let z = (est[i].mean - est[j].mean).abs() / est[i].stderr.hypot(est[j].stderr);
                    worst = worst.max(z);
                }
            }
        }
        Ok((worst <= 3.0, format!("largest pairwise gap {worst:.2} combined stderr over γ∈{{¼,½,¾}}")))
    })
}

fn c05() -> Check {
    let measures = [
        SpectralMeasure::cylindrical(2),
        SpectralMeasure::symmetrize(&[(vec![1.0, 0.0], 0.7), (vec![0.6, 0.8], 0.4), (vec![-0.28, 0.96], 0.5)])?,
    ];
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(SEED, "c05"));
    let mut worst: f64 = 0.0;
    for mu in &measures {
        let g = Generator::new(mu, QuadConfig::default())?;
        for _ in 0..100 {
            let rad = 8.0 * r.random::<f64>().sqrt();
            let ang = r.random_range(0.0..2.0 * PI);
            let omega = vec![rad * ang.cos(), rad * ang.sin()];
            let x = [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)];
            let phi = mu.exponent(&omega);
            let v = g.apply_l(&TestFunction::character(omega.clone()), &x)?.value;
            let expect = -phi * (omega[0] * x[0] + omega[1] * x[1]).cos();
            worst = worst.max((v - expect).abs() / phi);
        }
    }
    Ok((worst < 1e-3, format!("max |Lφ + Φ̄(ω)φ| / Φ̄(ω) = {worst:.2e} over 2×100 characters")))
}

fn c06() -> Check {
    let mu = SpectralMeasure::cylindrical(2);
    let b0 = vec![0.3, -0.2];
    let lambda = 1.0;
    let spec = GridSpec::centered(2, 512, 0.2);
    let c = [0.5, -0.3];
    let bump = move |x: &[f64]| (-0.5 * ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2))).exp();
    let f = GridField::from_fn(spec.clone(), bump);
    let u = proxy_resolvent(&f, lambda, &b0, &mu)?;
    let drift = DriftSpec::constant(b0.clone());
    let res = residual(&u, &f, lambda, &drift, &mu, 2.0)? / f.norm(2.0);
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(SEED, "c06-points"));
    let points: Vec<usize> = (0..20)
        .map(|_| {
            let i = (256 + r.random_range(-12i64..=12)) as usize;
            let j = (256 + r.random_range(-12i64..=12)) as usize;
            i * 512 + j
        })
        .collect();
    let (ok, detail) = retry("c06", |seed| {
        let mut worst: f64 = 0.0;
        for (k, &flat) in points.iter().enumerate() {
            let x0 = spec.point(flat);
            let cfg = SimConfig::new(mu.clone(), drift.clone(), x0, 1.0, 1.0, 100_000, derive_seed(seed, &k.to_string()));
            let est = resolvent_mc_exponential_time(&cfg, &bump, lambda)?;
            worst = worst.max((est.estimate - u.values[flat]).abs() / est.stderr);
        }
        Ok((worst <= 3.0, format!("MC at 20 points: worst gap {worst:.2} stderr")))
    })?;
    Ok((ok && res < 1e-6, format!("relative residual {res:.1e}; {detail}")))
}

fn c07() -> Check {
    let spec = GridSpec::centered(2, 128, 0.1);
    let b0 = [0.3, -0.2];
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, mu) in [("cylindrical", SpectralMeasure::cylindrical(2)), ("isotropic", SpectralMeasure::isotropic(2, 1.0)?)] {
        for lambda in [1.0, 5.0] {
            let rep = multiplier_probe(&mu, &spec, lambda, &b0, 50, derive_seed(SEED, "c07"))?;
            ok &= rep.multiplier_sup <= rep.kappa * (1.0 + 1e-9) && rep.max_gradient_ratio <= rep.kappa;
            lines.push(format!(
                "{name} λ={lambda}: sup {:.3} grad {:.3} ≤ κ {:.3}",
                rep.multiplier_sup, rep.max_gradient_ratio, rep.kappa
            ));
        }
    }
    Ok((ok, lines.join("; ")))
}

fn c08() -> Check {
    let mu = cauchy1();
    let spec = GridSpec::centered(1, 1 << 14, 0.05);
    let drift = DriftSpec::from_grid(DriftField::Tanh { amp: 0.1, scale: 1.0 }, &spec)?;
    let lambda = 1.0;
    let phi = TestFunction::gaussian(vec![0.0], 1.0);
    let f = GridField::from_fn(spec.clone(), |x| phi.value(x));
    let sol = neumann_solve(&f, lambda, &drift, &mu, NeumannConfig { tol: 1e-7, max_iter: 100, p: 2.0 })?;
    let r_hat = sol.contraction_ratio;
    let observed = sol.observed_ratio();
    let rel = sol.final_residual / sol.f_norm;
    // same comparison over the random-source family, reported only
    let mut decay = Vec::new();
    let mut worst_rel = rel;
    for g in random_sources(&spec, 10, derive_seed(SEED, "c08-sources")) {
        let s = neumann_solve(&g, lambda, &drift, &mu, NeumannConfig { tol: 1e-7, max_iter: 100, p: 2.0 })?;
        decay.push(s.observed_ratio() / s.contraction_ratio);
        worst_rel = worst_rel.max(s.final_residual / s.f_norm);
    }
    let lo = decay.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = decay.iter().copied().fold(0.0, f64::max);
    let decay_ok = observed >= 0.5 * r_hat && observed <= 1.5 * r_hat;
    let (mc_ok, detail) = retry("c08", |seed| {
        let mut worst: f64 = 0.0;
        for x0 in [0.0, 1.5] {
            let cfg = SimConfig::new(mu.clone(), drift.clone(), vec![x0], 1.0, 0.02, 100_000, derive_seed(seed, &x0.to_string()));
            let est = resolvent_mc(&cfg, &phi, lambda)?;
            let flat = ((x0 - spec.origin[0]) / spec.spacing[0]).round() as usize;
            worst = worst.max((est.estimate - sol.u.values[flat]).abs() / est.budget());
        }
        Ok((worst <= 1.0, format!("MC gap / budget worst {worst:.2}")))
    })?;
    Ok((
        decay_ok && worst_rel < 1e-4 && mc_ok,
        format!(
            "ε={:.3} r̂={r_hat:.4} observed {observed:.4} (ratio {:.2}, window [0.5, 1.5]); \
             10 random sources: ratio in [{lo:.2}, {hi:.2}]; worst residual {worst_rel:.1e}; {detail}",
            drift.epsilon,
            observed / r_hat
        ),
    ))
}

fn c09() -> Check {
    let mu = SpectralMeasure::cylindrical(2);
    let grid = GridSpec::centered(2, 64, 0.5);
    let drift = DriftSpec::from_grid(DriftField::Sin { amp: 0.2, scale: 1.0 }, &grid)?;
    let phi = TestFunction::gaussian(vec![0.3, -0.2], 1.0);
    let table = GeneratorTable::new(Generator::new(&mu, QuadConfig::default())?, phi, 6)?;
    retry("c09", |seed| {
        let cfg = SimConfig::new(mu.clone(), drift.clone(), vec![0.0, 0.0], 1.0, 0.01, 100_000, seed);
        let rep = martingale_residual(&cfg, &table, &[0.5, 1.0])?;
        let rows: Vec<String> = rep
            .rows
            .iter()
            .map(|r| format!("t={}: mean {:+.1e} stderr {:.1e} bias {:.1e}", r.t, r.mean, r.stderr, r.bias))
            .collect();
        Ok((rep.pass, rows.join("; ")))
    })
}

fn c10() -> Check {
    let mu = cauchy1();
    let drift = DriftSpec::from_grid(DriftField::Tanh { amp: 0.1, scale: 1.0 }, &GridSpec::centered(1, 4096, 0.05))?;
    let widths = [0.4, 0.2, 0.1, 0.04];
    let cfg = SimConfig::new(mu, drift, vec![0.0], 1.0, 0.01, 20_000, derive_seed(SEED, "c10"));
    let probe = krylov_ratio_probe(&cfg, 1.0, 2.0, &widths, &[0.0])?;
    let below = krylov_ratio_probe(&cfg, 1.0, 1.0, &widths, &[0.0])?;
    let fmt = |p: &stabledrift_core::mcverify::KrylovProbe| {
        p.rows.iter().map(|r| format!("{:.3}", r.ratio)).collect::<Vec<_>>().join(", ")
    };
    Ok((
        probe.bounded,
        format!(
            "p=2: ratios [{}] max/median {:.2}; p=1 (not asserted): [{}]",
            fmt(&probe),
            probe.max_over_median,
            fmt(&below)
        ),
    ))
}

fn c11() -> Check {
    let mu = SpectralMeasure::cylindrical(2);
    let drift = DriftSpec::from_grid(DriftField::Sin { amp: 0.2, scale: 1.0 }, &GridSpec::centered(2, 64, 0.5))?;
    retry("c11", |seed| {
        let base = SimConfig::new(mu.clone(), drift.clone(), vec![0.0, 0.0], 1.0, 0.05, 100_000, derive_seed(seed, "a"));
        let pairs = [
            ("seeds", base.clone(), base.clone().with_seed(derive_seed(seed, "b"))),
            ("h vs h/2", base.clone(), base.clone().with_step(0.025).with_seed(derive_seed(seed, "c"))),
            (
                "schemes",
                base.clone(),
                base.clone().with_scheme(Scheme::Decomposition).with_seed(derive_seed(seed, "d")),
            ),
        ];
        let mut ok = true;
        let mut parts = Vec::new();
        for (name, a, b) in pairs {
            let rep = weak_uniqueness_probe(&a, &b, 1.0)?;
            ok &= rep.pass;
            let ps: Vec<String> = rep.projections.iter().map(|p| format!("{:.3}", p.ks_p_value)).collect();
            parts.push(format!("{name} [{}]", ps.join(", ")));
        }
        Ok((ok, parts.join("; ")))
    })
}

// Independent quadrature of the closed-form Cauchy kernel (x = 0, K = 4,
// λ = 1): values at |x-ξ| = 1e-3 and 1, and the |x-ξ| → 0 limit.
const DEV_REF_SMALL: f64 = 0.198_811;
const DEV_REF_ONE: f64 = 0.014_428;
const DEV_REF_LIMIT: f64 = 0.203_09;

fn c12() -> Check {
    let mu = cauchy1();
    let kern = DeviationKernel::new(&mu, &[0.0], DeviationQuad::for_dimension(1))?;
    let mut values = Vec::new();
    let mut decreasing = true;
    for j in 0..20 {
        let delta = 10f64.powf(-3.0 + 3.0 * j as f64 / 19.0);
        let v1 = kern.integral(&[0.0], &[delta], 1.0, 4.0)?;
        values.push(v1);
        if j % 5 == 0 {
            let v10 = kern.integral(&[0.0], &[delta], 10.0, 4.0)?;
            decreasing &= v10 < v1;
        }
    }
    let max = values.iter().copied().fold(0.0, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let e_small = (values[0] / DEV_REF_SMALL - 1.0).abs();
    let e_one = (values[19] / DEV_REF_ONE - 1.0).abs();
    let bounded = values.iter().all(|v| v.is_finite() && *v <= DEV_REF_LIMIT * 1.01);
    let ok = bounded && e_small < 0.01 && e_one < 0.01 && decreasing;
    Ok((
        ok,
        format!(
            "20 pairs |x-ξ|∈[1e-3,1]: max {max:.4} ≤ limit {DEV_REF_LIMIT} (spread {:.1}x, not asserted); \
             reference error {e_small:.1e}/{e_one:.1e}; λ=10 below λ=1: {decreasing}",
            max / min
        ),
    ))
}

fn main() {
    let criteria: [(&str, &str, f64, fn() -> Check); 12] = [
        ("1", "exponent and kappa", 1.0, c01),
        ("2", "density correctness", 30.0, c02),
        ("3", "sampler vs density", 60.0, c03),
        ("4", "fractional moments", 60.0, c04),
        ("5", "generator eigen-identity", 60.0, c05),
        ("6", "proxy resolvent exactness", 120.0, c06),
        ("7", "multiplier bounds", 30.0, c07),
        ("8", "neumann solver", 180.0, c08),
        ("9", "martingale property", 180.0, c09),
        ("10", "krylov probe", 180.0, c10),
        ("11", "weak uniqueness probe", 180.0, c11),
        ("12", "deviation integral", 120.0, c12),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        let (ok, detail) = match outcome {
            Ok((ok, detail)) => (ok && secs < limit, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {id:>2} {name}: {detail} ({secs:.1}s, limit {limit:.0}s)",
            if ok { "PASS" } else { "FAIL" }
        );
    }
    if failed == 0 {
        println!("all criteria passed");
        return;
    }
    println!("{failed} criteria failed");
    let strict = std::env::args().any(|a| a == "--strict") || std::env::var_os("STABLEDRIFT_ACCEPTANCE_STRICT").is_some();
    if strict {
        std::process::exit(1);
    }
}
