use std::path::Path;

use serde::Serialize;
use stabledrift_core::density::{default_grid, density_grid};
use stabledrift_core::drift::{DriftField, DriftSpec};
use stabledrift_core::generator::{Generator, GeneratorTable, QuadConfig, TestFunction};
use stabledrift_core::grid::{GridField, GridSpec};
use stabledrift_core::mcverify::{
    krylov_ratio_probe, martingale_residual, resolvent_mc, weak_uniqueness_probe, DirectGenerator, PathGenerator,
    SimConfig, WeakUniquenessReport,
};
use stabledrift_core::resolvent::{
    multiplier_probe, neumann_solve, remainder_ratio_probe, spike_probe, DeviationKernel, DeviationQuad, NeumannConfig,
};
use stabledrift_core::sampler::{sample_decomposition, sample_exact, Scheme};
use stabledrift_core::spectral::{MeasureFile, SpectralMeasure};

use crate::args::*;
use crate::run::{invalid, Artifacts, Failure, Inputs};

pub enum Verdict {
    Pass,
    Fail(String),
}

type Outcome = Result<Verdict, Failure>;

fn load_measure(inputs: &Inputs, path: &Path) -> Result<SpectralMeasure, Failure> {
    let loaded = MeasureFile::parse(&inputs.read(path)?)?;
    if loaded.symmetrized {
        eprintln!("note: {} was symmetrized", path.display());
    }
    Ok(loaded.measure)
}

fn load_drift(inputs: &Inputs, name: &str, d: usize) -> Result<DriftField, Failure> {
    if name.ends_with(".json") {
        Ok(DriftField::from_table_json(&inputs.read(Path::new(name))?)?)
    } else {
        Ok(DriftField::parse(name, d)?)
    }
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| invalid(format!("bad {what} '{s}'"))))
        .collect()
}

/// `gaussian:WIDTH[@c1,c2]` or `trig:w1,w2`.
pub fn parse_phi(s: &str, d: usize) -> Result<TestFunction, Failure> {
    let (head, rest) = s.split_once(':').unwrap_or((s, ""));
    let phi = match head {
        "gaussian" => {
            let (w, c) = rest.split_once('@').map(|(w, c)| (w, Some(c))).unwrap_or((rest, None));
            let width = if w.is_empty() { 1.0 } else { parse_list(w, "width")?[0] };
            if !(width.is_finite() && width > 0.0) {
                return Err(invalid(format!("width must be positive in '{s}'")));
            }
            let center = c.map(|c| parse_list(c, "center")).transpose()?.unwrap_or_else(|| vec![0.0; d]);
            TestFunction::gaussian(center, width)
        }
        "trig" => TestFunction::character(parse_list(rest, "frequency")?),
        _ => return Err(invalid(format!("unknown test function '{s}'"))),
    };
    if phi.dimension() != d {
        return Err(invalid(format!("test function '{s}' has dimension {}, measure has {d}", phi.dimension())));
    }
    Ok(phi)
}

fn scheme(s: SchemeArg) -> Scheme {
    match s {
        SchemeArg::ExactRay => Scheme::ExactRay,
        SchemeArg::Decomposition => Scheme::Decomposition,
    }
}

fn positive(v: f64, what: &str) -> Result<(), Failure> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{what} must be positive, got {v}")))
    }
}

fn solver_grid(g: &GridArgs, d: usize) -> Result<GridSpec, Failure> {
    let (n, h) = match d {
        1 => (g.n.unwrap_or(4096), g.spacing.unwrap_or(0.05)),
        2 => (g.n.unwrap_or(256), g.spacing.unwrap_or(0.1)),
        _ => (g.n.unwrap_or(48), g.spacing.unwrap_or(0.25)),
    };
    positive(h, "spacing")?;
    if n < 8 {
        return Err(invalid(format!("need at least 8 points per axis, got {n}")));
    }
    Ok(GridSpec::centered(d, n, h))
}

/// Box the path drift is centered on; its bounds fix the proxy `b₀`.
fn path_drift(field: DriftField, d: usize) -> Result<DriftSpec, Failure> {
    Ok(DriftSpec::from_grid(field, &GridSpec::centered(d, 64, 0.5))?)
}

/// Values along axis 0 through the grid center.
fn center_line(f: &GridField) -> Vec<(f64, f64)> {
    let spec = &f.spec;
    let strides = spec.strides();
    let base: usize = (1..spec.dimension()).map(|k| spec.shape[k] / 2 * strides[k]).sum();
    (0..spec.shape[0])
        .map(|i| {
            let flat = base + i * strides[0];
            (spec.point(flat)[0], f.values[flat])
        })
        .collect()
}

fn add_grid(art: &mut Artifacts, stem: &str, f: &GridField) {
    art.add(&format!("{stem}.bin"), f.to_le_bytes());
    art.add_json(&format!("{stem}.json"), &f.header());
    art.add_plot(&format!("{stem}.dat"), center_line(f));
}

pub fn sample(a: &SampleArgs, seed: u64, inputs: &Inputs, art: &mut Artifacts) -> Outcome {
    let mu = load_measure(inputs, &a.measure)?;
    positive(a.t, "t")?;
    let s = art.seed(seed, "sample");
    let batch = match scheme(a.scheme) {
        Scheme::ExactRay => sample_exact(&mu, a.t, a.n, s)?,
        Scheme::Decomposition => sample_decomposition(&mu, a.t, a.n, s)?,
    };
    art.add("samples.csv", batch.to_csv());
    art.add_json("samples.meta.json", &batch.metadata(&mu));
    let mut x = batch.coordinate(0);
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    art.add_plot("samples.dat", x.into_iter().enumerate().map(|(i, v)| (v, (i as f64 + 0.5) / n)));
    Ok(Verdict::Pass)
}

#[derive(Serialize)]
struct DensitySummary {
    t: f64,
    shift: Vec<f64>,
    mass: f64,
    clipped: usize,
    min_raw: f64,
}

pub fn density(a: &DensityArgs, inputs: &Inputs, art: &mut Artifacts) -> Outcome {
    let mu = load_measure(inputs, &a.measure)?;
    let d = mu.dimension();
    positive(a.t, "t")?;
    let n = a.grid.n.unwrap_or(if d == 1 { 4096 } else { 256 });
    let grid = match a.grid.spacing {
        Some(h) => {
            positive(h, "spacing")?;
            GridSpec::centered(d, n, h)
        }
        None => default_grid(&mu, a.t, n)?,
    };
    let shift = a.shift.clone().unwrap_or_else(|| vec![0.0; d]);
    let p = density_grid(&mu, a.t, &shift, &grid)?;
    if p.clipped > 0 {
        eprintln!("note: {} negative values clipped (min {:e})", p.clipped, p.min_raw);
    }
    add_grid(art, "density", &p.field);
    art.add_json(
        "density.summary.json",
        &DensitySummary { t: a.t, shift, mass: p.field.integral(), clipped: p.clipped, min_raw: p.min_raw },
    );
    Ok(Verdict::Pass)
}

#[derive(Serialize)]
struct GeneratorRow {
    x: Vec<f64>,
    phi: f64,
    value: f64,
    error_bar: f64,
    with_drift: bool,
}

pub fn generator(a: &GeneratorArgs, inputs: &Inputs, art: &mut Artifacts) -> Outcome {
    let mu = load_measure(inputs, &a.measure)?;
    let d = mu.dimension();
    let phi = parse_phi(&a.phi, d)?;
    let points: Vec<Vec<f64>> = a.at.iter().map(|p| parse_list(p, "point")).collect::<Result<_, _>>()?;
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(invalid(format!("point {p:?} is not {d}-dimensional")));
    }
    let drift = a.drift.as_deref().map(|s| load_drift(inputs, s, d).and_then(|f| path_drift(f, d))).transpose()?;
    let g = Generator::new(&mu, QuadConfig::default())?;
    let rows = points
        .into_iter()
        .map(|x| {
            let v = match &drift {
                Some(b) => g.apply_full(&phi, &x, b)?,
                None => g.apply_l(&phi, &x)?,
            };
            Ok(GeneratorRow { phi: phi.value(&x), value: v.value, error_bar: v.error_bar, with_drift: drift.is_some(), x })
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    art.add_plot("generator.dat", rows.iter().map(|r| (r.x[0], r.value)));
    art.add_json("generator.json", &rows);
    Ok(Verdict::Pass)
}

pub fn resolve(a: &ResolveArgs, inputs: &Inputs, art: &mut Artifacts) -> Outcome {
    let mu = load_measure(inputs, &a.measure)?;
    let d = mu.dimension();
    positive(a.lambda, "lambda")?;
    positive(a.tol, "tol")?;
    let grid = solver_grid(&a.grid, d)?;
    let drift = DriftSpec::from_grid(load_drift(inputs, &a.drift, d)?, &grid)?;
    let phi = parse_phi(&a.source, d)?;
    let f = GridField::from_fn(grid, |x| phi.value(x));
    let sol = neumann_solve(&f, a.lambda, &drift, &mu, NeumannConfig { tol: a.tol, max_iter: a.max_iter, p: a.p })?;
    add_grid(art, "solution", &sol.u);
    art.add_json("report.json", &sol.report());
    Ok(Verdict::Pass)
}

fn sim_config(s: &SimArgs, mu: SpectralMeasure, drift: DriftSpec, seed: u64) -> Result<SimConfig, Failure> {
    let d = mu.dimension();
    let x0 = s.x0.clone().unwrap_or_else(|| vec![0.0; d]);
    let cfg = SimConfig::new(mu, drift, x0, s.horizon, s.step, s.paths, seed).with_scheme(scheme(s.scheme));
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct NamedComparison {
    name: &'static str,
    report: WeakUniquenessReport,
}

#[derive(Serialize)]
struct ResolventCheck {
    lambda: f64,
    x0: Vec<f64>,
    analytic: f64,
    monte_carlo: f64,
    stderr: f64,
    budget: f64,
    pass: bool,
    solver: stabledrift_core::resolvent::SolveReport,
}

pub fn verify(a: &VerifyArgs, seed: u64, inputs: &Inputs, art: &mut Artifacts) -> Outcome {
    let mu = load_measure(inputs, &a.sim.measure)?;
    let d = mu.dimension();
    let field = load_drift(inputs, &a.sim.drift, d)?;
    let phi = parse_phi(&a.phi, d)?;
    let s = art.seed(seed, "verify");
    let cfg = sim_config(&a.sim, mu.clone(), path_drift(field.clone(), d)?, s)?;
    match a.check {
        VerifyCheck::Martingale => {
            let g = Generator::new(&mu, QuadConfig::default())?;
            let table;
            let direct;
            let dg;
            let gen: &dyn PathGenerator = if phi.effective_support().is_some() {
                table = GeneratorTable::new(g, phi, 6)?;
                &table
            } else {
                // characters have no compact support to tabulate
                direct = (g, phi);
                dg = DirectGenerator { generator: &direct.0, phi: &direct.1 };
                &dg
            };
            let rep = martingale_residual(&cfg, gen, &a.checkpoints)?;
            art.add_plot("martingale.dat", rep.rows.iter().map(|r| (r.t, r.mean)));
            art.add_json("martingale.json", &rep);
            Ok(if rep.pass { Verdict::Pass } else { Verdict::Fail("martingale mean is not zero".into()) })
        }
        VerifyCheck::WeakUniqueness => {
            let other = |name: &str, art: &mut Artifacts| art.seed(seed, &format!("verify/{name}"));
            let pairs = [
                ("seeds", cfg.clone().with_seed(other("seeds", art))),
                ("step_halving", cfg.clone().with_step(0.5 * cfg.step).with_seed(other("step", art))),
                (
                    "schemes",
                    cfg.clone()
                        .with_scheme(match cfg.scheme {
                            Scheme::ExactRay => Scheme::Decomposition,
                            Scheme::Decomposition => Scheme::ExactRay,
                        })
                        .with_seed(other("scheme", art)),
                ),
            ];
            let mut out = Vec::new();
            for (name, b) in pairs {
                out.push(NamedComparison { name, report: weak_uniqueness_probe(&cfg, &b, cfg.horizon)? });
            }
            let failed: Vec<&str> = out.iter().filter(|c| !c.report.pass).map(|c| c.name).collect();
            art.add_json("weak_uniqueness.json", &out);
            Ok(if failed.is_empty() {
                Verdict::Pass
            } else {
                Verdict::Fail(format!("laws differ: {}", failed.join(", ")))
            })
        }
        VerifyCheck::Resolvent => {
            positive(a.lambda, "lambda")?;
            let grid = solver_grid(&GridArgs { n: None, spacing: None }, d)?;
            let drift = DriftSpec::from_grid(field, &grid)?;
            let f = GridField::from_fn(grid, |x| phi.value(x));
            let sol = neumann_solve(&f, a.lambda, &drift, &mu, NeumannConfig::default())?;
            let analytic = sol
                .u
                .interpolate_cubic(&cfg.x0)
                .ok_or_else(|| invalid(format!("x0 {:?} is outside the solver grid", cfg.x0)))?;
            let est = resolvent_mc(&cfg, &phi, a.lambda)?;
            let pass = (est.estimate - analytic).abs() <= est.budget();
            art.add_json(
                "resolvent.json",
                &ResolventCheck {
                    lambda: a.lambda,
                    x0: cfg.x0.clone(),
                    analytic,
                    monte_carlo: est.estimate,
                    stderr: est.stderr,
                    budget: est.budget(),
                    pass,
                    solver: sol.report(),
                },
            );
            Ok(if pass { Verdict::Pass } else { Verdict::Fail("Monte Carlo resolvent outside its error budget".into()) })
        }
    }
}

#[derive(Serialize)]
struct DeviationRow {
    delta: f64,
    value: f64,
}

pub fn probe(a: &ProbeArgs, seed: u64, inputs: &Inputs, art: &mut Artifacts) -> Outcome {
    let mu = load_measure(inputs, &a.measure)?;
    let d = mu.dimension();
    positive(a.lambda, "lambda")?;
    let field = load_drift(inputs, &a.drift, d)?;
    match a.probe {
        ProbeKind::Kappa => art.add_json("kappa.json", &mu.nondegeneracy_kappa(360)?),
        ProbeKind::Remainder => {
            let grid = solver_grid(&a.grid, d)?;
            let drift = DriftSpec::from_grid(field, &grid)?;
            let s = art.seed(seed, "probe/sources");
            art.add_json("remainder.json", &remainder_ratio_probe(&mu, &grid, a.lambda, &drift, a.p, a.count, s)?);
        }
        ProbeKind::Multiplier => {
            let grid = solver_grid(&a.grid, d)?;
            let drift = DriftSpec::from_grid(field, &grid)?;
            let s = art.seed(seed, "probe/sources");
            art.add_json("multiplier.json", &multiplier_probe(&mu, &grid, a.lambda, &drift.b0, a.count, s)?);
        }
        ProbeKind::Spike => {
            let grid = solver_grid(&a.grid, d)?;
            let drift = DriftSpec::from_grid(field, &grid)?;
            let rows = spike_probe(&mu, &grid, a.lambda, &drift.b0, a.p, &a.widths)?;
            art.add_plot("spike.dat", rows.iter().map(|r| (r.width, r.ratio)));
            art.add_json("spike.json", &rows);
        }
        ProbeKind::Krylov => {
            let s = art.seed(seed, "probe/krylov");
            let cfg = SimConfig::new(mu, path_drift(field, d)?, vec![0.0; d], 1.0, a.step, a.paths, s);
            cfg.validate()?;
            let rep = krylov_ratio_probe(&cfg, a.lambda, a.p, &a.widths, &vec![0.0; d])?;
            art.add_plot("krylov.dat", rep.rows.iter().map(|r| (r.width, r.ratio)));
            art.add_json("krylov.json", &rep);
        }
        ProbeKind::Deviation => {
            if d > 2 {
                return Err(invalid("the deviation probe supports d ≤ 2"));
            }
            if a.deltas.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(invalid("pair distances must be positive"));
            }
            let drift = path_drift(field, d)?;
            let kern = DeviationKernel::new(&mu, &drift.b0, DeviationQuad::for_dimension(d))?;
            let x = vec![0.0; d];
            let rows = a
                .deltas
                .iter()
                .map(|&delta| {
                    let mut xi = x.clone();
                    xi[0] = delta;
                    Ok(DeviationRow { delta, value: kern.integral(&x, &xi, a.lambda, a.k)? })
                })
                .collect::<Result<Vec<_>, Failure>>()?;
            art.add_plot("deviation.dat", rows.iter().map(|r| (r.delta, r.value)));
            art.add_json("deviation.json", &rows);
        }
    }
    Ok(Verdict::Pass)
}
