//! Subcommands of the `cusplab` binary. Each writes CSV/JSON files carrying
//! the config hash into the output directory, plus a run record.

use crate::config::{ExperimentConfig, LivsicInput, LoadedConfig, PerturbationKind};
use crate::error::{LabError, Result};
use crate::geodesic::{geodesic_in_class, ClosedGeodesic};
use crate::hyperbolic::{flow_h2, HomotopyClass, Phase, Point};
use crate::indicial::{
    compare_direct, comparison_points, h_closed, h_identity_residual, h_quadrature, pi0_indicial, pi2_indicial_form,
    refine_minimum, scan_roots, symbol_constant, Probe, StripGrid,
};
use crate::livsic::{
    coboundary, coboundary_potential, decompose, find_good_orbit, interpolation_report, mixed_family, orbit_of_class,
    visible_bump, CoboundaryDecomposition, GoodOrbit, LivsicOptions, OrbitSearch, SphereFunction,
};
use crate::metric::PerturbedMetric;
use crate::output::{fmt_f64, num, sha256_hex, to_json_string, Table};
use crate::surface::Surface;
use crate::tensor::{
    lambda_pm, BumpOneForm, Combination, ConformalBump, CuspPowerLaw, MetricPower, PowerLaw2, SurfaceBump,
    SymDerivative, TensorField,
};
use crate::xray::{variation_check, xray_transform};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Lengths,
    Xray,
    Variation,
    Indicial,
    Livsic,
    Flow,
}

impl Command {
    pub const ALL: [Command; 6] =
        [Command::Lengths, Command::Xray, Command::Variation, Command::Indicial, Command::Livsic, Command::Flow];

    pub fn name(self) -> &'static str {
        match self {
            Command::Lengths => "lengths",
            Command::Xray => "xray",
            Command::Variation => "variation",
            Command::Indicial => "indicial",
            Command::Livsic => "livsic",
            Command::Flow => "flow",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub command: String,
    pub config_sha256: String,
    pub version: String,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    /// "ok" or the error that stopped the run.
    pub status: String,
}

/// SHA-256 of the effective configuration (TOML, output directory excluded).
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    sha256_hex(effective_toml(cfg).as_bytes())
}

fn effective_toml(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.output_dir = PathBuf::new();
    toml::to_string(&c).expect("config serializes")
}

struct Ctx<'a> {
    cfg: &'a LoadedConfig,
    hash: String,
    out: PathBuf,
    outputs: Vec<String>,
    warnings: Vec<String>,
}

impl Ctx<'_> {
    fn c(&self) -> &ExperimentConfig {
        &self.cfg.config
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn table(&mut self, name: &str, t: &Table) -> Result<()> {
        t.write(&self.path(name), &self.hash)?;
        self.outputs.push(name.into());
        Ok(())
    }

    fn json(&mut self, name: &str, mut v: Value) -> Result<()> {
        if let Value::Object(m) = &mut v {
            m.insert("config_sha256".into(), Value::String(self.hash.clone()));
        }
        std::fs::write(self.path(name), to_json_string(&v))?;
        self.outputs.push(name.into());
        Ok(())
    }

    fn surface(&self) -> Result<Arc<Surface>> {
        Ok(Arc::new(self.c().surface.build()?))
    }

    /// Classes with their canonical words; a bad word or a non-hyperbolic
    /// class is a validation error naming the class.
    fn classes(&self, s: &Surface) -> Result<Vec<(String, HomotopyClass, f64)>> {
        let mut out = Vec::new();
        for (i, w) in self.c().classes.iter().enumerate() {
            let at = self.cfg.class_line(i).map(|l| format!(" (config line {l})")).unwrap_or_default();
            let named = |e: LabError| {
                let msg = match e {
                    LabError::InvalidInput(m) => m,
                    other => other.to_string(),
                };
                LabError::input(format!("class {i} \"{w}\"{at}: {msg}"))
            };
            let c = s.group.parse_word(w).map_err(named)?;
            let l = s.group.evaluate_word(&c).and_then(|m| m.trace_length()).map_err(named)?;
            out.push((s.group.format_word(&c), c, l));
        }
        Ok(out)
    }

    fn perturbation(&self, s: &Arc<Surface>) -> Arc<dyn TensorField> {
        let p = &self.c().perturbation;
        let center = Point::new(p.center[0], p.center[1]);
        match p.kind {
            PerturbationKind::ConformalBump => {
                Arc::new(ConformalBump { bump: SurfaceBump::new(s.clone(), center, p.radius), amplitude: p.amplitude })
            }
            PerturbationKind::Mode0Power => {
                let [a, b, c] = p.coefficients.map(|v| v * p.amplitude);
                Arc::new(CuspPowerLaw { surface: s.clone(), law: PowerLaw2 { rho: -p.decay, a, b, c } })
            }
            PerturbationKind::CustomTable => Arc::new(Combination {
                terms: p
                    .table
                    .iter()
                    .map(|r| {
                        let f: Arc<dyn TensorField> = Arc::new(ConformalBump {
                            bump: SurfaceBump::new(s.clone(), Point::new(r[0], r[1]), r[2]),
                            amplitude: r[3],
                        });
                        (1.0, f)
                    })
                    .collect(),
            }),
            PerturbationKind::Potential => {
                let v = BumpOneForm {
                    bump: SurfaceBump::new(s.clone(), center, p.radius),
                    alpha: p.coefficients[0],
                    beta: p.coefficients[1],
                };
                let dp: Arc<dyn TensorField> = Arc::new(SymDerivative(v));
                Arc::new(Combination { terms: vec![(p.amplitude, dp)] })
            }
        }
    }
}

/// Run one subcommand. Validation errors are returned before anything is
/// written; a numerical failure leaves the partial outputs and a run record
/// with the error as status, then returns the error.
pub fn run(cmd: Command, cfg: &LoadedConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let out = cfg.config.output_dir.clone();
    let mut ctx = Ctx { cfg, hash: config_hash(&cfg.config), out, outputs: Vec::new(), warnings: Vec::new() };
    let started = Instant::now();
    let prepared = prepare(cmd, &ctx)?;
    std::fs::create_dir_all(&ctx.out)?;
    let effective = format!("# config_sha256={}\n{}", ctx.hash, effective_toml(ctx.c()));
    std::fs::write(ctx.path("config.toml"), effective)?;
    let result = match prepared {
        Prepared::Lengths(s, cl) => lengths(&mut ctx, &s, &cl),
        Prepared::Xray(s, cl) => xray(&mut ctx, &s, &cl),
        Prepared::Variation(s, cl) => variation(&mut ctx, &s, &cl),
        Prepared::Indicial(grid) => indicial(&mut ctx, grid),
        Prepared::Livsic(s, opts) => livsic(&mut ctx, &s, &opts),
        Prepared::Flow(s) => flow(&mut ctx, &s),
    };
    let record = RunRecord {
        command: cmd.name().into(),
        config_sha256: ctx.hash.clone(),
        version: VERSION.into(),
        outputs: ctx.outputs.clone(),
        warnings: ctx.warnings.clone(),
        status: match &result {
            Ok(()) => "ok".into(),
            Err(e) => format!("failed: {e}"),
        },
    };
    let name = format!("{}_run.json", cmd.name());
    let v = serde_json::to_value(&record).expect("record serializes");
    std::fs::write(ctx.path(&name), to_json_string(&v))?;
    let timing = json!({ "command": cmd.name(), "wall_clock_s": num(started.elapsed().as_secs_f64()) });
    std::fs::write(ctx.path(&format!("{}_timing.json", cmd.name())), to_json_string(&timing))?;
    result.map(|()| record)
}

type Classes = Vec<(String, HomotopyClass, f64)>;

enum Prepared {
    Lengths(Arc<Surface>, Classes),
    Xray(Arc<Surface>, Classes),
    Variation(Arc<Surface>, Classes),
    Indicial(StripGrid),
    Livsic(Arc<Surface>, LivsicOptions),
    Flow(Arc<Surface>),
}

/// Everything that can fail on input alone.
fn prepare(cmd: Command, ctx: &Ctx) -> Result<Prepared> {
    let c = ctx.c();
    Ok(match cmd {
        Command::Lengths | Command::Xray | Command::Variation => {
            let s = ctx.surface()?;
            let cl = ctx.classes(&s)?;
            if cmd == Command::Variation && c.eps_ladder.len() < 3 {
                return Err(LabError::input(format!("ladder needs ≥ 3 points, got {}", c.eps_ladder.len())));
            }
            match cmd {
                Command::Lengths => Prepared::Lengths(s, cl),
                Command::Xray => Prepared::Xray(s, cl),
                _ => Prepared::Variation(s, cl),
            }
        }
        Command::Indicial => {
            let i = &c.indicial;
            let d = i.d as f64;
            Prepared::Indicial(StripGrid {
                re_min: i.re_min.unwrap_or(0.05),
                re_max: i.re_max.unwrap_or(d - 0.05),
                im_max: i.im_max,
                n_re: i.n_re,
                n_im: i.n_im,
            })
        }
        Command::Livsic => {
            let opts = c.livsic.options();
            opts.validate()?;
            Prepared::Livsic(ctx.surface()?, opts)
        }
        Command::Flow => Prepared::Flow(ctx.surface()?),
    })
}

fn f_or_nan(r: &Result<f64>) -> String {
    fmt_f64(*r.as_ref().unwrap_or(&f64::NAN))
}

fn eps_label(e: f64) -> String {
    format!("length_eps_{}", fmt_f64(e))
}

/// Collect per-item failures into one numerical error.
fn failures(list: Vec<String>) -> Result<()> {
    if list.is_empty() {
        Ok(())
    } else {
        Err(LabError::NoConvergence(list.join("; ")))
    }
}

fn lengths(ctx: &mut Ctx, s: &Surface, classes: &Classes) -> Result<()> {
    let c = ctx.c().clone();
    let finder = c.tolerances.finder();
    let f = ctx.perturbation(&Arc::new(s.clone()));
    let mut eps = vec![0.0];
    eps.extend(&c.eps_ladder);
    let metrics: Vec<PerturbedMetric> = eps
        .iter()
        .map(|&e| if e == 0.0 { Ok(PerturbedMetric::hyperbolic()) } else { PerturbedMetric::new(f.clone(), e) })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..classes.len()).flat_map(|i| (0..eps.len()).map(move |j| (i, j))).collect();
    let found: Vec<Result<ClosedGeodesic>> =
        jobs.par_iter().map(|&(i, j)| geodesic_in_class(&metrics[j], &s.group, &classes[i].1, &finder)).collect();

    let mut header =
        vec!["word".to_string(), "length_eps_0".into(), "finder_eps_0".into(), "finder_minus_oracle".into()];
    header.extend(c.eps_ladder.iter().map(|&e| eps_label(e)));
    let mut table = Table { header, rows: Vec::new() };
    let mut entries = Vec::new();
    let mut failed = Vec::new();
    for (i, (word, _, oracle)) in classes.iter().enumerate() {
        let row_res: Vec<&Result<ClosedGeodesic>> = (0..eps.len()).map(|j| &found[i * eps.len() + j]).collect();
        let lens: Vec<Result<f64>> =
            row_res.iter().map(|r| r.as_ref().map(|g| g.length).map_err(|e| e.clone())).collect();
        for (j, r) in row_res.iter().enumerate() {
            if let Err(e) = r {
                failed.push(format!("class {word} at ε = {}: {e}", eps[j]));
            }
        }
        let diff = lens[0].as_ref().map(|l| l - oracle).map_err(|e| e.clone());
        let mut row = vec![word.clone(), fmt_f64(*oracle), f_or_nan(&lens[0]), f_or_nan(&diff)];
        row.extend(lens[1..].iter().map(f_or_nan));
        table.push(row);
        let cols: Vec<Value> = row_res
            .iter()
            .zip(&eps)
            .map(|(r, &e)| match r {
                Ok(g) => json!({
                    "eps": num(e),
                    "length": num(g.length),
                    "gradient_norm": num(g.certificate.gradient_norm),
                    "min_hessian": num(g.certificate.min_hessian),
                    "status": "ok",
                }),
                Err(err) => json!({ "eps": num(e), "status": err.to_string() }),
            })
            .collect();
        entries.push(json!({ "word": word, "trace_length": num(*oracle), "finder": cols }));
    }
    ctx.table("lengths.csv", &table)?;
    ctx.json("lengths.json", json!({ "surface": serde_json::to_value(s.summary()).unwrap(), "classes": entries }))?;
    failures(failed)
}

fn xray(ctx: &mut Ctx, s: &Surface, classes: &Classes) -> Result<()> {
    let finder = ctx.c().tolerances.finder();
    let f = ctx.perturbation(&Arc::new(s.clone()));
    let g = MetricPower(1);
    let rows: Vec<Result<[f64; 4]>> = classes
        .par_iter()
        .map(|(_, c, _)| {
            let geo = geodesic_in_class(&PerturbedMetric::hyperbolic(), &s.group, c, &finder)?;
            let v = xray_transform(f.as_ref(), &geo)?;
            let m = xray_transform(&g, &geo)?;
            Ok([geo.length, v.value, v.error, m.value])
        })
        .collect();
    let mut table = Table::new(&["word", "length", "i2_f", "i2_f_error", "i2_metric"]);
    let mut failed = Vec::new();
    for ((w, _, _), r) in classes.iter().zip(rows) {
        match r {
            Ok(v) => table.push(std::iter::once(w.clone()).chain(v.iter().map(|x| fmt_f64(*x))).collect()),
            Err(e) => {
                failed.push(format!("class {w}: {e}"));
                table.push(vec![w.clone(), "nan".into(), "nan".into(), "nan".into(), "nan".into()]);
            }
        }
    }
    ctx.table("xray.csv", &table)?;
    failures(failed)
}

fn variation(ctx: &mut Ctx, s: &Surface, classes: &Classes) -> Result<()> {
    let c = ctx.c().clone();
    let finder = c.tolerances.finder();
    let f = ctx.perturbation(&Arc::new(s.clone()));
    let mut table = Table::new(&["word", "eps", "length", "delta", "remainder"]);
    let mut reports = Vec::new();
    let mut failed = Vec::new();
    for (w, cl, _) in classes {
        match variation_check(&s.group, f.clone(), cl, &c.eps_ladder, &finder) {
            Ok(r) => {
                for row in &r.rows {
                    table.push(vec![
                        w.clone(),
                        fmt_f64(row.eps),
                        fmt_f64(row.length),
                        fmt_f64(row.delta),
                        fmt_f64(row.remainder),
                    ]);
                }
                ctx.warnings.extend(r.flags.iter().map(|fl| format!("class {w}: {fl}")));
                reports.push(serde_json::to_value(&r).unwrap());
            }
            Err(e) if e.is_validation() => return Err(e),
            Err(e) => {
                failed.push(format!("class {w}: {e}"));
                reports.push(json!({ "word": w, "status": e.to_string() }));
            }
        }
    }
    ctx.table("variation.csv", &table)?;
    ctx.json("variation.json", json!({ "reports": reports }))?;
    failures(failed)
}

/// Points ρ of the H suite: fixed ones, then seeded random points with
/// 0 < Re ρ < 4, |Im ρ| ≤ 20.
fn h_points(seed: u64, n_random: usize) -> Vec<(String, Complex64)> {
    let fixed = [0.5, 1.0, 2.0, 3.0, 3.7].map(|r| Complex64::new(r, 0.0));
    let mut out: Vec<(String, Complex64)> = fixed.iter().map(|&z| ("fixed".to_string(), z)).collect();
    out.push(("fixed".into(), Complex64::new(0.5, 3.0)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_random {
        out.push(("random".into(), Complex64::new(rng.gen_range(0.05..4.0), rng.gen_range(-20.0..20.0))));
    }
    out
}

fn indicial(ctx: &mut Ctx, mut grid: StripGrid) -> Result<()> {
    let c = ctx.c().clone();
    let d = c.indicial.d;
    ctx.warnings.extend(grid.clip_to_strip(d, 0.05));

    let mut h = Table::new(&[
        "kind",
        "re",
        "im",
        "h_closed_re",
        "h_closed_im",
        "h_quad_re",
        "h_quad_im",
        "rel_error",
        "identity_residual",
    ]);
    let mut h_rel: f64 = 0.0;
    let mut h_id: f64 = 0.0;
    for (kind, z) in h_points(c.seed, c.indicial.identity_points) {
        let hc = h_closed(z)?;
        let hq = h_quadrature(z)?;
        let rel = (hc - hq).norm() / hc.norm();
        let id = h_identity_residual(z)?;
        if kind == "fixed" {
            h_rel = h_rel.max(rel);
        } else {
            h_id = h_id.max(id);
        }
        h.push(
            std::iter::once(kind)
                .chain([z.re, z.im, hc.re, hc.im, hq.re, hq.im, rel, id].iter().map(|v| fmt_f64(*v)))
                .collect(),
        );
    }
    ctx.table("indicial_h.csv", &h)?;

    let probes = Probe::family(d);
    let scan = scan_roots(d, &grid, &probes)?;
    let mut t = Table::new(&["re", "im", "probe", "modulus"]);
    for r in &scan.rows {
        t.push(vec![fmt_f64(r.re), fmt_f64(r.im), r.probe.clone(), fmt_f64(r.modulus)]);
    }
    ctx.table("indicial_scan.csv", &t)?;

    let step = (grid.re_max - grid.re_min) / (grid.n_re.max(2) - 1) as f64;
    let probe = probes.iter().find(|p| p.id == scan.argmin_probe).unwrap_or(&probes[0]);
    let refined = refine_minimum(d, probe, scan.argmin, 0.5 * step, (grid.re_min, grid.re_max))?;

    let pi0_min = grid
        .points()
        .par_iter()
        .map(|&z| pi0_indicial(d, z).map(|v| v.norm()))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);

    // critical line Re ρ = d/2: values should be real and positive
    let mut crit_im: f64 = 0.0;
    let mut crit_min_re = f64::INFINITY;
    for k in 0..=40 {
        let z = Complex64::new(0.5 * d as f64, grid.im_max * (k as f64 / 20.0 - 1.0));
        for p in &probes {
            let v = pi2_indicial_form(&p.at(d, z)?)?;
            crit_im = crit_im.max(v.im.abs() / v.norm());
            crit_min_re = crit_min_re.min(v.re);
        }
    }

    let norm = compare_direct(d, &probes, &comparison_points(d))?;
    if norm.max_rel_error > 1e-6 || (norm.mean_ratio - 1.0).norm() > 1e-6 {
        ctx.warnings.push(format!(
            "normalization finding: direct/closed mean ratio {} (spread {:.3e}, max rel error {:.3e})",
            norm.mean_ratio, norm.ratio_spread, norm.max_rel_error
        ));
    }
    let sym = symbol_constant(d)?;
    let (lm, lp) = lambda_pm(d)?;
    let cz = |z: Complex64| json!({ "re": num(z.re), "im": num(z.im) });
    ctx.json(
        "indicial_minima.json",
        json!({
            "d": d,
            "grid": serde_json::to_value(grid).unwrap(),
            "h_suite": { "max_rel_error_fixed": num(h_rel), "max_identity_residual_random": num(h_id) },
            "pi2_scan": {
                "min_modulus": num(scan.min_modulus),
                "argmin": cz(scan.argmin),
                "argmin_probe": scan.argmin_probe,
                "refined_argmin": cz(refined.0),
                "refined_modulus": num(refined.1),
            },
            "pi0_min_modulus": num(pi0_min),
            "critical_line": { "max_relative_imaginary": num(crit_im), "min_real": num(crit_min_re) },
            "normalization": {
                "points": norm.points,
                "max_rel_error": num(norm.max_rel_error),
                "mean_ratio": cz(norm.mean_ratio),
                "ratio_spread": num(norm.ratio_spread),
            },
            "symbol_constant": serde_json::to_value(sym).unwrap(),
            "lambda_minus": num(lm),
            "lambda_plus": num(lp),
        }),
    )
}

fn livsic(ctx: &mut Ctx, s: &Arc<Surface>, opts: &LivsicOptions) -> Result<()> {
    let c = ctx.c().clone();
    let (orbit, search) = match find_good_orbit(s, opts) {
        Ok(found) => {
            if found.skipped > 0 {
                ctx.warnings.push(format!(
                    "candidate cap binds: {} words within the period budget were not scored",
                    found.skipped
                ));
            }
            (found.best.clone(), Some(found))
        }
        Err(LabError::NoConvergence(msg)) => {
            let shortest = s
                .group
                .hyperbolic_classes(opts.max_word_len)
                .into_iter()
                .next()
                .ok_or_else(|| LabError::NoConvergence("no hyperbolic class".into()))?;
            let o = orbit_of_class(s, &shortest.0, opts)?;
            ctx.warnings
                .push(format!("ε = {} infeasible ({msg}); best effort with the shortest class {}", opts.eps, o.word));
            (o, None)
        }
        Err(e) => return Err(e),
    };
    if let Some(found) = &search {
        let mut t = Table::new(&["word", "period", "density_radius", "separation"]);
        for cs in &found.candidates {
            t.push(vec![cs.word.clone(), fmt_f64(cs.period), fmt_f64(cs.density_radius), fmt_f64(cs.separation)]);
        }
        ctx.table("livsic_candidates.csv", &t)?;
    }
    let orbit_json = |o: &GoodOrbit, sr: &Option<OrbitSearch>| {
        let mut v = serde_json::to_value(o).unwrap();
        if let (Value::Object(m), Some(sr)) = (&mut v, sr) {
            m.insert("budget".into(), num(sr.budget));
            m.insert("skipped".into(), json!(sr.skipped));
        }
        v
    };
    let members: Vec<(String, SphereFunction)> = match c.livsic.input {
        LivsicInput::Coboundary => vec![("coboundary".into(), coboundary(&coboundary_potential(s)))],
        LivsicInput::Constant => vec![("constant".into(), SphereFunction::new(Arc::new(MetricPower(1))))],
        LivsicInput::Family => mixed_family(&coboundary_potential(s), &visible_bump(s), &c.livsic.family),
    };
    let mut decs: Vec<(String, CoboundaryDecomposition)> = Vec::new();
    let mut failed = Vec::new();
    for (label, f) in &members {
        match decompose(s, f, &orbit, opts) {
            Ok(d) => {
                ctx.warnings.extend(d.flags.iter().map(|fl| format!("{label}: {fl}")));
                decs.push((label.clone(), d));
            }
            Err(e) if e.is_validation() => return Err(e),
            Err(e) => failed.push(format!("{label}: {e}")),
        }
    }
    let mut grid = Table::new(&["member", "x", "y", "psi", "in_m_eps", "covered", "f", "u", "h"]);
    for (label, d) in &decs {
        for r in &d.rows {
            grid.push(vec![
                label.clone(),
                fmt_f64(r.x),
                fmt_f64(r.y),
                fmt_f64(r.psi),
                r.in_m_eps.to_string(),
                r.covered.to_string(),
                fmt_f64(r.f),
                fmt_f64(r.u),
                fmt_f64(r.h),
            ]);
        }
    }
    ctx.table("livsic_grid.csv", &grid)?;
    let report = if c.livsic.input == LivsicInput::Family && failed.is_empty() {
        match interpolation_report(&decs) {
            Ok(r) => {
                if let Some(why) = &r.degenerate {
                    ctx.warnings.push(format!("interpolation report degenerate: {why}"));
                }
                serde_json::to_value(&r).unwrap()
            }
            Err(e) => {
                ctx.warnings.push(format!("no interpolation report: {e}"));
                Value::Null
            }
        }
    } else {
        Value::Null
    };
    let members_json: Vec<Value> = decs
        .iter()
        .map(|(l, d)| {
            let mut v = serde_json::to_value(d).unwrap();
            if let Value::Object(m) = &mut v {
                m.insert("label".into(), Value::String(l.clone()));
            }
            v
        })
        .collect();
    ctx.json(
        "livsic.json",
        json!({
            "options": serde_json::to_value(opts).unwrap(),
            "orbit": orbit_json(&orbit, &search),
            "members": members_json,
            "interpolation": report,
        }),
    )?;
    failures(failed)
}

fn flow(ctx: &mut Ctx, s: &Arc<Surface>) -> Result<()> {
    let c = ctx.c().clone();
    let fl = &c.flow;
    let metric =
        if fl.eps == 0.0 { PerturbedMetric::hyperbolic() } else { PerturbedMetric::new(ctx.perturbation(s), fl.eps)? };
    let tol = c.tolerances.ode();
    let start = Phase::new(fl.start[0], fl.start[1], fl.start[2]);
    let mut st = metric.unit_state(start);
    let n = (fl.t_max / fl.dt).round() as usize;
    let mut t =
        Table::new(&["t", "x", "y", "psi", "x_reduced", "y_reduced", "psi_reduced", "speed_defect", "exact_deviation"]);
    let mut push = |k: usize, st: &[f64; 4]| {
        let time = k as f64 * fl.dt;
        let ph = PerturbedMetric::state_phase(st);
        let (r, _) = s.reduce_phase(ph);
        let p = Point::new(st[0], st[1]);
        let speed = metric.frame_norm2(p, [st[3] / st[1], st[2] / st[1]]).sqrt() - 1.0;
        let exact = if fl.eps == 0.0 {
            let e = flow_h2(start, time);
            crate::hyperbolic::distance(e.p, p)
        } else {
            f64::NAN
        };
        t.push([time, ph.p.x, ph.p.y, ph.psi, r.p.x, r.p.y, r.psi, speed, exact].iter().map(|v| fmt_f64(*v)).collect());
    };
    push(0, &st);
    let mut err = None;
    for k in 1..=n {
        match metric.integrate(st, fl.dt, tol) {
            Ok(next) => {
                st = next;
                push(k, &st);
            }
            Err(e) => {
                err = Some(e);
                break;
            }
        }
    }
    ctx.table("flow.csv", &t)?;
    err.map_or(Ok(()), Err)
}
