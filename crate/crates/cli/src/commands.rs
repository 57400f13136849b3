//! One function per subcommand. Each writes its artifacts and records checks
//! and warnings on the run context.

use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;

use sdrelax::approximation::{approximate_with, weakstar_diagnostics, AlbertiMode};
use sdrelax::cell_problems::{
    oracle_1d_H, recession_H, results_csv, solve, solve_H, verify_bulk_properties, CellProblemResult, CellProblemSpec,
    OracleGrid,
};
use sdrelax::densities::{
    check_bulk_axioms, check_nonlinear_axioms, check_surface_axioms, AxiomReport, Sampler, SurfaceDensity,
};
use sdrelax::fields::{decompose, field_to_json, BrokenField};
use sdrelax::linearization::{
    gamma_csv, gamma_gap, recovery_sequence, rigidity_diagnostics, NonsimpleConfig, RecoveryOptions, RigidityOptions,
};
use sdrelax::relaxation::{build_density_tables, evaluate_Ip, DensityTables, SolvedDensities};
use sdrelax::{Mat, Vector};

use crate::config::Config;
use crate::error::CliError;
use crate::output::{fmt_f, fmt_list, Artifacts, Check};

const GAUSS_GREEN_TOL: f64 = 1e-10;
const STRAIN_TOL: f64 = 1e-12;
const RECESSION_TOL: f64 = 1e-3;
const CANTOR_REL_TOL: f64 = 1e-2;

pub struct Ctx {
    pub cfg: Config,
    pub seed: u64,
    /// Directory of the config file; relative paths resolve against it.
    pub base: PathBuf,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl Ctx {
    fn check(&mut self, module: &str, invariant: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { module: module.into(), invariant: invariant.into(), passed, detail: detail.into() });
    }

    fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    fn describe(&self) -> String {
        let d = &self.cfg.densities;
        format!("dim={} p={} W={} psi={} seed={}", self.cfg.dim, self.cfg.p, d.bulk, d.surface, self.seed)
    }
}

fn axioms_csv(reports: &[AxiomReport]) -> String {
    let mut s = String::from("subject,axiom,worst_violation,samples\n");
    for r in reports {
        for c in &r.checks {
            let _ = writeln!(s, "{},{},{},{}", r.subject, c.axiom, fmt_f(c.worst_violation), c.samples);
        }
    }
    s
}

pub fn check_axioms(ctx: &mut Ctx, out: &mut Artifacts) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let (n, tol) = (cfg.densities.samples, cfg.densities.tol);
    let w = cfg.bulk()?;
    let psi = cfg.surface()?;
    let mut reports = vec![
        check_bulk_axioms(&w, &mut Sampler::new(cfg.dim, ctx.seed, 3.0), n),
        check_surface_axioms(&psi, &mut Sampler::new(cfg.dim, ctx.seed.wrapping_add(1), 3.0), n),
    ];
    match cfg.nonlinear() {
        Ok(v) => reports.push(check_nonlinear_axioms(&v, &mut Sampler::new(cfg.dim, ctx.seed.wrapping_add(2), 1.0), n)),
        Err(e) => ctx.warn(format!("nonlinear density skipped: {e}")),
    }
    let producer = format!("densities::check_*_axioms samples={n} {}", ctx.describe());
    out.write("axioms.csv", axioms_csv(&reports), &producer)?;
    out.write_json("axioms.json", &reports, &producer)?;
    for r in &reports {
        ctx.check(
            "densities",
            &format!("axioms of {}", r.subject),
            r.passed(tol),
            format!("worst violation {:e}", r.worst()),
        );
    }
    Ok(())
}

fn lattice(ctx: &Ctx) -> Result<Vec<(Mat, Mat)>, CliError> {
    let c = &ctx.cfg.cell_problems;
    if c.a.is_empty() || c.b.is_empty() {
        return Err(CliError::config("empty spec: cell_problems.A and cell_problems.B need at least one node each"));
    }
    let a = c.a.matrices(ctx.cfg.dim, "cell_problems.A")?;
    let b = c.b.matrices(ctx.cfg.dim, "cell_problems.B")?;
    Ok(a.iter().flat_map(|x| b.iter().map(move |y| (*x, *y))).collect())
}

fn configure(ctx: &Ctx, mut s: CellProblemSpec) -> CellProblemSpec {
    let c = &ctx.cfg.cell_problems;
    s = s.with_bc(c.bc).with_frame(c.frame).with_solver(c.solver.clone());
    if let Some(n) = c.n {
        s = s.with_n(n);
    }
    if let Some(e) = &c.eps_schedule {
        s = s.with_eps_schedule(e.clone());
    }
    s
}

fn record_solutions(ctx: &mut Ctx, rows: &[(CellProblemSpec, CellProblemResult)]) {
    let gg = rows.iter().map(|(_, r)| r.gauss_green_residual).fold(0.0, f64::max);
    ctx.check(
        "cell_problems",
        "Gauss-Green identity of minimizers",
        gg <= GAUSS_GREEN_TOL,
        format!("max residual {gg:e}"),
    );
    let unbracketed = rows.iter().filter(|(_, r)| !r.bracketed(1e-6)).count();
    ctx.check(
        "cell_problems",
        "lower <= value <= upper",
        unbracketed == 0,
        format!("{unbracketed} of {} outside", rows.len()),
    );
    let stalled = rows.iter().filter(|(_, r)| !r.converged).count();
    if stalled > 0 {
        ctx.warn(format!("cell_problems: {stalled} of {} solves did not converge", rows.len()));
    }
}

#[allow(non_snake_case)]
pub fn solve_H_cmd(ctx: &mut Ctx, out: &mut Artifacts) -> Result<(), CliError> {
    let (w, psi) = (ctx.cfg.bulk()?, ctx.cfg.surface()?);
    let p = ctx.cfg.p;
    let specs: Vec<CellProblemSpec> = lattice(ctx)?
        .into_iter()
        .map(|(a, b)| configure(ctx, CellProblemSpec::bulk(w.clone(), psi.clone(), p, a, b)))
        .collect();
    for s in &specs {
        s.validate().map_err(CliError::from_config)?;
    }
    let rows: Vec<(CellProblemSpec, CellProblemResult)> = specs
        .into_par_iter()
        .map(|s| solve_H(&s).map(|r| (s, r)))
        .collect::<sdrelax::Result<_>>()
        .map_err(CliError::compute("cell_problems"))?;
    let producer = format!("cell_problems::solve_H nodes={} {}", rows.len(), ctx.describe());
    out.write("H.csv", results_csv(&rows), producer)?;
    record_solutions(ctx, &rows);

    let c = &ctx.cfg.cell_problems;
    if ctx.cfg.dim == 1 && c.oracle {
        let (k, tol) = (c.oracle_jumps, c.oracle_tol);
        let grid = OracleGrid::default();
        let mut csv = String::from("A,B,value,oracle,difference\n");
        let mut worst: f64 = 0.0;
        for (s, r) in &rows {
            let (a, b) = (s.a.get(0, 0), s.b.get(0, 0));
            let o = oracle_1d_H(&w, &psi, s.x0.get(0), a, b, k, &grid).map_err(CliError::compute("cell_problems"))?;
            worst = worst.max((r.value - o).abs());
            let _ = writeln!(csv, "{},{},{},{},{}", fmt_f(a), fmt_f(b), fmt_f(r.value), fmt_f(o), fmt_f(r.value - o));
        }
        out.write("H_oracle.csv", csv, format!("cell_problems::oracle_1d_H k_max={k} {}", ctx.describe()))?;
        ctx.check(
            "cell_problems",
            "oracle equivalence",
            worst <= tol,
            format!("max |H - oracle| = {worst:e}, tol {tol:e}"),
        );
    }
    Ok(())
}

pub fn solve_h_cmd(ctx: &mut Ctx, out: &mut Artifacts) -> Result<(), CliError> {
    let (w, psi) = (ctx.cfg.bulk()?, ctx.cfg.surface()?);
    let (dim, p) = (ctx.cfg.dim, ctx.cfg.p);
    let c = &ctx.cfg.cell_problems;
    if c.lambda.is_empty() {
        return Err(CliError::config("empty spec: cell_problems.lambda needs at least one jump"));
    }
    let lambdas = c.lambda.vectors(dim, "cell_problems.lambda")?;
    let nus = match c.nu.len() {
        0 => vec![Vector::unit(dim, 0); lambdas.len()],
        1 => vec![c.nu.vectors(dim, "cell_problems.nu")?[0]; lambdas.len()],
        k if k == lambdas.len() => c.nu.vectors(dim, "cell_problems.nu")?,
        k => {
            return Err(CliError::config(format!("cell_problems.nu: expected 1 or {} normals, got {k}", lambdas.len())))
        }
    };
    let specs: Vec<CellProblemSpec> = lambdas
        .into_iter()
        .zip(nus)
        .map(|(l, n)| configure(ctx, CellProblemSpec::surface(w.clone(), psi.clone(), p, l, n.scale(1.0 / n.norm()))))
        .collect();
    for s in &specs {
        s.validate().map_err(CliError::from_config)?;
    }
    let rows: Vec<(CellProblemSpec, CellProblemResult)> = specs
        .into_par_iter()
        .map(|s| solve(&s).map(|r| (s, r)))
        .collect::<sdrelax::Result<_>>()
        .map_err(CliError::compute("cell_problems"))?;
    let op = if p == 1.0 { "solve_h_critical" } else { "solve_h_supercritical" };
    out.write("h.csv", results_csv(&rows), format!("cell_problems::{op} jumps={} {}", rows.len(), ctx.describe()))?;
    record_solutions(ctx, &rows);
    let disc: Vec<f64> = rows.iter().filter_map(|(_, r)| r.recession_discrepancy()).collect();
    if !disc.is_empty() {
        let worst = disc.iter().copied().fold(0.0, f64::max);
        ctx.check(
            "cell_problems",
            "recession consistency",
            worst <= RECESSION_TOL,
            format!("max discrepancy {worst:e}"),
        );
    }
    Ok(())
}

pub fn tables(ctx: &mut Ctx, out: &mut Artifacts) -> Result<(), CliError> {
    let (w, psi) = (ctx.cfg.bulk()?, ctx.cfg.surface()?);
    let r = ctx.cfg.relaxation.clone();
    if r.lattice.is_empty() {
        return Err(CliError::config("empty spec: relaxation.lattice selects no table"));
    }
    let solved = SolvedDensities::new(w, psi, ctx.cfg.p, r.options.clone()).map_err(CliError::from_config)?;
    let t = build_density_tables(&solved, &r.lattice, ctx.seed).map_err(CliError::compute("relaxation"))?;
    let producer = format!("relaxation::build_density_tables {}", ctx.describe());
    out.write("tables.json", t.to_json().map_err(CliError::compute("relaxation"))? + "\n", &producer)?;
    let samples = t.bulk_samples();
    if !samples.is_empty() {
        let mut csv = String::from("A,B,H\n");
        for s in &samples {
            let _ = writeln!(csv, "{},{},{}", fmt_list(&s.a.sym_coords()), fmt_list(&s.b.sym_coords()), fmt_f(s.value));
        }
        out.write("tables_bulk.csv", csv, &producer)?;
        let rep = verify_bulk_properties(&samples, ctx.cfg.p, None);
        let tol = r.property_tol;
        out.write_json("properties.json", &rep, format!("cell_problems::verify_bulk_properties {}", ctx.describe()))?;
        let finite = rep.fitted.values().all(|v| v.is_finite());
        ctx.check(
            "cell_problems",
            "relaxed bulk density properties",
            rep.passed(tol) && finite,
            format!("{:?}", rep.fitted),
        );
    }
    Ok(())
}

pub fn relax(ctx: &mut Ctx, out: &mut Artifacts) -> Result<(), CliError> {
    let (w, psi) = (ctx.cfg.bulk()?, ctx.cfg.surface()?);
    let sd = ctx.cfg.deformation(&ctx.base)?;
    let r = ctx.cfg.relaxation.clone();
    let tables = match &r.tables {
        Some(p) => Some(DensityTables::read(&ctx.base.join(p)).map_err(CliError::from_config)?),
        None => None,
    };
    let b =
        evaluate_Ip(&sd, &w, &psi, &r.options, ctx.seed, tables.as_ref()).map_err(CliError::compute("relaxation"))?;
    let mass = sd.g.cantor().map_or(0.0, |c| c.mass);
    let csv = format!(
        "bulk,jump,cantor,total,cantor_mass,interpolated\n{},{},{},{},{},{}\n",
        fmt_f(b.bulk),
        fmt_f(b.jump),
        fmt_f(b.cantor),
        fmt_f(b.total),
        fmt_f(mass),
        b.interpolated
    );
    out.write("relax.csv", csv, format!("relaxation::evaluate_Ip tables={} {}", tables.is_some(), ctx.describe()))?;
    if b.interpolated {
        ctx.warn("relaxation: some densities were interpolated from tables (upper-biased)");
    }
    let gg = decompose(&sd.g).gauss_green_residual;
    ctx.check("fields", "Gauss-Green identity of g", gg <= GAUSS_GREEN_TOL, format!("residual {gg:e}"));
    if mass != 0.0 && ctx.cfg.dim == 1 {
        let template = configure(ctx, CellProblemSpec::bulk(w, psi, ctx.cfg.p, Mat::zeros(1), Mat::zeros(1)));
        let h = recession_H(&template, &Mat::scalar(mass.signum()), &r.options.t_schedule)
            .map_err(CliError::compute("cell_problems"))?;
        let expect = h.estimate * mass.abs();
        let rel = (b.cantor - expect).abs() / expect.abs().max(f64::MIN_POSITIVE);
        ctx.check(
            "relaxation",
            "Cantor term equals recession times mass",
            rel <= CANTOR_REL_TOL,
            format!("{} vs {expect}", b.cantor),
        );
    }
    Ok(())
}

fn approx_csv_row(s: &mut String, d: &sdrelax::approximation::ApproxDiagnostics) {
    let _ = writeln!(
        s,
        "{},{},{},{},{},{},{},{},{},{}",
        d.n,
        d.resolution,
        fmt_f(d.strain_error),
        fmt_f(d.l1_error),
        fmt_f(d.total_variation),
        fmt_f(d.reference),
        fmt_f(d.ratio),
        fmt_f(d.constant),
        d.bound_ok,
        fmt_f(d.gauss_green_residual)
    );
}

pub fn approximate(ctx: &mut Ctx, out: &mut Artifacts) -> Result<(), CliError> {
    let sd = ctx.cfg.deformation(&ctx.base)?;
    let a = &ctx.cfg.approximation;
    if a.ns.is_empty() {
        return Err(CliError::config("empty spec: approximation.ns is empty"));
    }
    let mode = a.mode.unwrap_or_else(|| AlbertiMode::default_for(sd.dim()));
    let members: Vec<(BrokenField, _)> =
        a.ns.par_iter()
            .map(|&n| approximate_with(&sd, n, mode))
            .collect::<sdrelax::Result<_>>()
            .map_err(CliError::compute("approximation"))?;
    let producer = format!("approximation::approximate mode={mode:?} {}", ctx.describe());
    let mut csv = String::from(
        "n,resolution,strain_error,l1_error,total_variation,reference,ratio,constant,bound_ok,gauss_green\n",
    );
    for (u, d) in &members {
        approx_csv_row(&mut csv, d);
        if a.write_fields {
            let json = field_to_json(u).map_err(CliError::compute("fields"))?;
            out.write(&format!("u_{}.json", d.n), json + "\n", format!("{producer} n={}", d.n))?;
        }
    }
    out.write("approximate.csv", csv, &producer)?;

    let diags: Vec<_> = members.iter().map(|(_, d)| d).collect();
    let strain = diags.iter().map(|d| d.strain_error).fold(0.0, f64::max);
    ctx.check("approximation", "symmetrized gradient equals G", strain <= STRAIN_TOL, format!("max error {strain:e}"));
    let bound = diags.iter().all(|d| d.bound_ok);
    ctx.check(
        "approximation",
        "total variation bound",
        bound,
        format!("constants {:?}", diags.iter().map(|d| d.constant).collect::<Vec<_>>()),
    );
    let gg =
        members.iter().map(|(u, d)| d.gauss_green_residual.max(decompose(u).gauss_green_residual)).fold(0.0, f64::max);
    ctx.check("fields", "Gauss-Green identity of u_n", gg <= GAUSS_GREEN_TOL, format!("max residual {gg:e}"));

    for w in diags.windows(2) {
        if w[1].n == 2 * w[0].n && w[0].l1_error > 1e-14 {
            let r = w[0].l1_error / w[1].l1_error;
            if !(1.6..=2.4).contains(&r) {
                ctx.warn(format!("approximation: L1 error ratio {r:.3} from n = {} to {}", w[0].n, w[1].n));
            }
        }
    }
    if members.len() >= 3 {
        let seq: Vec<BrokenField> = members.iter().map(|(u, _)| u.clone()).collect();
        let ws = weakstar_diagnostics(&seq, &sd.g).map_err(CliError::compute("approximation"))?;
        let mut csv = String::from("n,gap\n");
        for (d, g) in diags.iter().zip(&ws.gaps) {
            let _ = writeln!(csv, "{},{}", d.n, fmt_f(*g));
        }
        out.write("weakstar.csv", csv, format!("approximation::weakstar_diagnostics {}", ctx.describe()))?;
        if !ws.decreasing {
            ctx.warn("approximation: weak-* pairing gaps are not decreasing");
        }
    }
    Ok(())
}

fn nonsimple(ctx: &Ctx) -> Result<NonsimpleConfig, CliError> {
    let l = ctx.cfg.linearization.clone();
    let delta = *l.deltas.first().ok_or_else(|| CliError::config("empty spec: linearization.deltas is empty"))?;
    let dim = ctx.cfg.dim;
    NonsimpleConfig::new(
        delta,
        l.beta,
        l.gamma,
        ctx.cfg.nonlinear()?,
        ctx.cfg.surface()?,
        SurfaceDensity::psi1_matrix(dim),
    )
    .map_err(CliError::from_config)
}

pub fn gamma(ctx: &mut Ctx, out: &mut Artifacts) -> Result<(), CliError> {
    let cfg = nonsimple(ctx)?;
    let sd = ctx.cfg.deformation(&ctx.base)?;
    let l = ctx.cfg.linearization.clone();
    let ropts = RecoveryOptions { cells_per_delta: l.cells_per_delta, max_resolution: l.max_resolution };
    let relax = &ctx.cfg.relaxation.options.clone();
    let rep = gamma_gap(&sd, &l.deltas, &cfg, relax, ctx.seed, &ropts).map_err(CliError::compute("linearization"))?;
    let producer = format!(
        "linearization::gamma_gap V={} beta={} gamma={} {}",
        ctx.cfg.densities.nonlinear,
        l.beta,
        l.gamma,
        ctx.describe()
    );
    out.write("gamma.csv", gamma_csv(&rep), &producer)?;
    out.write_json("gamma.json", &rep, &producer)?;
    let infinite = rep.rows.iter().filter(|r| !r.f_dis.is_finite()).count();
    ctx.check("linearization", "finite recovery energies", infinite == 0, format!("{infinite} infinite"));
    if !rep.decreasing {
        ctx.warn("linearization: Γ-gap is not decreasing along the δ schedule");
    }
    if !rep.higher_order_vanishing {
        ctx.warn("linearization: second-gradient and gradient-jump terms do not vanish");
    }

    let fam = recovery_sequence(&sd, &l.deltas, &cfg, &ropts).map_err(CliError::compute("linearization"))?;
    let fam: Vec<(f64, BrokenField)> = fam.into_iter().map(|m| (m.delta, m.u)).collect();
    let gg = fam.iter().map(|(_, u)| decompose(u).gauss_green_residual).fold(0.0, f64::max);
    ctx.check(
        "fields",
        "Gauss-Green identity of recovery fields",
        gg <= GAUSS_GREEN_TOL,
        format!("max residual {gg:e}"),
    );
    let ropt = RigidityOptions { offsets: l.rigidity_offsets, energy_bound: None };
    let rig = rigidity_diagnostics(&fam, &cfg, &ropt).map_err(CliError::compute("linearization"))?;
    let mut csv = String::from("delta,energy,spacing,offset,s_volume,perimeter,l1_norm,gradient_bound,strain_l2\n");
    for r in &rig.reports {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            fmt_f(r.delta),
            fmt_f(r.energy),
            fmt_f(r.spacing),
            fmt_f(r.offset),
            fmt_f(r.s_volume),
            fmt_f(r.perimeter),
            fmt_f(r.l1_norm),
            fmt_f(r.gradient_bound),
            fmt_f(r.strain_l2)
        );
    }
    let producer = format!("linearization::rigidity_diagnostics offsets={} {}", l.rigidity_offsets, ctx.describe());
    out.write("rigidity.csv", csv, &producer)?;
    out.write_json("rigidity.json", &rig, &producer)?;
    if !rig.bounded() {
        ctx.warn(format!("linearization: rigidity quantities not bounded along the family {:?}", rig.constants));
    }
    if !rig.perimeter_decreasing {
        ctx.warn("linearization: perimeter of the exceptional set does not decrease");
    }
    Ok(())
}

pub fn oracle(ctx: &mut Ctx, out: &mut Artifacts) -> Result<(), CliError> {
    if ctx.cfg.dim != 1 {
        return Err(CliError::config("oracle is one-dimensional"));
    }
    let (w, psi) = (ctx.cfg.bulk()?, ctx.cfg.surface()?);
    let k = ctx.cfg.cell_problems.oracle_jumps;
    let grid = OracleGrid::default();
    let values: Vec<(f64, f64, f64)> = lattice(ctx)?
        .into_par_iter()
        .map(|(a, b)| {
            let (a, b) = (a.get(0, 0), b.get(0, 0));
            oracle_1d_H(&w, &psi, 0.5, a, b, k, &grid).map(|v| (a, b, v))
        })
        .collect::<sdrelax::Result<_>>()
        .map_err(CliError::compute("cell_problems"))?;
    let mut csv = String::from("A,B,oracle\n");
    for (a, b, v) in values {
        let _ = writeln!(csv, "{},{},{}", fmt_f(a), fmt_f(b), fmt_f(v));
    }
    out.write("oracle.csv", csv, format!("cell_problems::oracle_1d_H k_max={k} {}", ctx.describe()))?;
    Ok(())
}
