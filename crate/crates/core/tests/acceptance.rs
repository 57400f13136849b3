//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero when any
//! criterion fails.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use sdrelax::approximation::{approximate, weakstar_diagnostics};
use sdrelax::cell_problems::{
    oracle_1d_H, recession_H, results_csv, solve_H, solve_h_critical, solve_h_supercritical, verify_bulk_properties,
    verify_surface_properties, BcMode, CellProblemResult, CellProblemSpec, HSample, OracleGrid,
};
use sdrelax::densities::{BulkDensity, NonlinearDensity, SurfaceDensity};
use sdrelax::fields::{decompose, BrokenField, CantorDescriptor, CellData, Mesh};
use sdrelax::linearization::{
    gamma_csv, gamma_gap, recovery_sequence, rigidity_diagnostics, NonsimpleConfig, RecoveryOptions, RigidityOptions,
};
use sdrelax::relaxation::{evaluate_Ip, RelaxOptions, StructuredDeformation};
use sdrelax::{Mat, Result, Vector};

/// A bulk density with its solved lattice.
type Table = (BulkDensity, Vec<(CellProblemSpec, CellProblemResult)>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn lattice() -> Vec<f64> {
    (-3..=3).map(|i| i as f64).collect()
}

fn bulk_spec(w: &BulkDensity, a: f64, b: f64) -> CellProblemSpec {
    CellProblemSpec::bulk(w.clone(), SurfaceDensity::psi1(1), 2.0, Mat::scalar(a), Mat::scalar(b)).with_n(64)
}

/// Solves the 7×7 lattice for one bulk density.
fn solve_lattice(w: &BulkDensity) -> Result<Vec<(CellProblemSpec, CellProblemResult)>> {
    let pts: Vec<(f64, f64)> = lattice().iter().flat_map(|&a| lattice().into_iter().map(move |b| (a, b))).collect();
    pts.par_iter()
        .map(|&(a, b)| {
            let s = bulk_spec(w, a, b);
            let r = solve_H(&s)?;
            Ok((s, r))
        })
        .collect()
}

fn criterion_1(tables: &[Table], secs: f64) -> Result<Outcome> {
    let grid = OracleGrid::default();
    let psi = SurfaceDensity::psi1(1);
    let mut worst: f64 = 0.0;
    for (w, rows) in tables {
        for (s, r) in rows {
            let o = oracle_1d_H(w, &psi, 0.5, s.a.get(0, 0), s.b.get(0, 0), 3, &grid)?;
            worst = worst.max((r.value - o).abs());
        }
    }
    Ok(outcome(worst <= 1e-4 && secs < 60.0, format!("max |solve_H − oracle| = {worst:.3e}, solve time {secs:.1} s")))
}

fn criterion_2(tables: &[Table]) -> Result<Outcome> {
    let grid = OracleGrid::default();
    let psi = SurfaceDensity::psi1(1);
    let (w2, rows) = &tables[0];
    let mut bulk: f64 = 0.0;
    for (s, r) in rows {
        let (a, b) = (s.a.get(0, 0), s.b.get(0, 0));
        let closed = b * b + (a - b).abs();
        let o = oracle_1d_H(w2, &psi, 0.5, a, b, 3, &grid)?;
        bulk = bulk.max((r.value - closed).abs()).max((o - closed).abs());
    }
    let mut surf: f64 = 0.0;
    for l in [-2.0, -0.5, 1.0, 3.0] {
        let s = CellProblemSpec::surface(
            BulkDensity::w2(1),
            SurfaceDensity::psi1(1),
            2.0,
            Vector::scalar(l),
            Vector::scalar(1.0),
        );
        surf = surf.max((solve_h_supercritical(&s)?.value - l.abs()).abs());
    }
    for (l, nu) in [(Vector::new2(1.0, 0.5), Vector::new2(0.6, 0.8)), (Vector::new2(-0.4, 0.2), Vector::new2(1.0, 0.0))]
    {
        let s = CellProblemSpec::surface(BulkDensity::w2(2), SurfaceDensity::psi1(2), 2.0, l, nu).with_n(6);
        surf = surf.max((solve_h_supercritical(&s)?.value - l.norm()).abs());
    }
    Ok(outcome(bulk <= 1e-4 && surf <= 1e-4, format!("H₂ closed-form gap {bulk:.3e}, h₂ = |λ| gap {surf:.3e}")))
}

fn criterion_3(tables: &[Table]) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    for (w, rows) in tables {
        let samples: Vec<HSample> = rows.iter().map(|(s, r)| HSample { a: s.a, b: s.b, value: r.value }).collect();
        let rep = verify_bulk_properties(&samples, 2.0, None);
        for c in &rep.checks {
            worst = worst.max(c.worst_violation);
        }
        let lip = rep.fitted.values().all(|v| v.is_finite());
        if !lip {
            worst = f64::INFINITY;
        }
        notes.push(format!("{}: {} checks", w.id(), rep.checks.len()));
    }
    let samples_1d: Vec<(Vector, Vector)> =
        [-2.0, -1.0, 0.0, 0.5, 1.5].iter().map(|&l| (Vector::scalar(l), Vector::scalar(1.0))).collect();
    let rep = verify_surface_properties(&samples_1d, 2.0, |l, n| {
        let s = CellProblemSpec::surface(BulkDensity::w2(1), SurfaceDensity::psi_aniso(1, 1.0)?, 2.0, *l, *n);
        Ok(solve_h_supercritical(&s)?.value)
    })?;
    worst = rep.checks.iter().fold(worst, |m, c| m.max(c.worst_violation));
    let nu = Vector::new2(0.6, 0.8);
    let samples_2d: Vec<(Vector, Vector)> = [Vector::new2(1.0, 0.0), Vector::new2(0.0, 0.5), Vector::new2(-0.3, 0.4)]
        .into_iter()
        .map(|l| (l, nu))
        .collect();
    let rep = verify_surface_properties(&samples_2d, 2.0, |l, n| {
        let s = CellProblemSpec::surface(BulkDensity::w2(2), SurfaceDensity::psi_aniso(2, 0.5)?, 2.0, *l, *n).with_n(6);
        Ok(solve_h_supercritical(&s)?.value)
    })?;
    worst = rep.checks.iter().fold(worst, |m, c| m.max(c.worst_violation));
    notes.push(format!("h₂ fitted c = {:.4}, C = {:.4}", rep.fitted["c_linear"], rep.fitted["C_linear"]));
    Ok(outcome(worst <= 1e-3, format!("worst violation {worst:.3e}; {}", notes.join("; "))))
}

fn approximation_corpus() -> Result<Vec<(&'static str, StructuredDeformation)>> {
    let m1 = Arc::new(Mesh::unit(1, 2)?);
    let m2 = Arc::new(Mesh::unit(2, 2)?);
    let step = |h: f64, z: f64| {
        BrokenField::from_fn(m1.clone(), move |c, x| {
            CellData::affine(Vector::scalar(z * x.get(0) + h * c as f64), Mat::scalar(z))
        })
    };
    let jump2 = BrokenField::from_fn(m2.clone(), |c, x| {
        let side = (c % 2) as f64;
        CellData::affine(Vector::new2(0.2 * x.get(0), side), Mat::new2(0.2, 0.0, 0.0, 0.0))
    })?;
    Ok(vec![
        ("1D (x, 0)", StructuredDeformation::uniform(step(0.0, 1.0)?, Mat::zeros(1), 2.0)?),
        ("1D (step, 1/2)", StructuredDeformation::uniform(step(1.0, 0.0)?, Mat::scalar(0.5), 2.0)?),
        ("1D (x/2 + step, −1/4)", StructuredDeformation::uniform(step(1.0, 0.5)?, Mat::scalar(-0.25), 2.0)?),
        ("1D (0, ±1)", StructuredDeformation::new(step(0.0, 0.0)?, vec![Mat::scalar(1.0), Mat::scalar(-1.0)], 2.0)?),
        (
            "2D (affine, 0)",
            StructuredDeformation::uniform(
                BrokenField::affine(m2.clone(), &Mat::sym2(1.0, 0.5, 0.25), &Vector::zeros(2)),
                Mat::zeros(2),
                2.0,
            )?,
        ),
        ("2D (jump, G)", StructuredDeformation::uniform(jump2, Mat::sym2(0.0, 0.3, 0.1), 2.0)?),
    ])
}

fn criterion_4_and_5(tables: &[Table]) -> Result<(Outcome, Outcome)> {
    let mut gg: f64 = 0.0;
    let mut fields = 0;
    for (_, rows) in tables {
        for (_, r) in rows {
            gg = gg.max(r.gauss_green_residual);
            fields += 1;
        }
    }
    let mut strain: f64 = 0.0;
    let mut bound_ok = true;
    let mut halving_ok = true;
    let mut weak_ok = true;
    let mut worst_ratio = (f64::INFINITY, 0.0_f64);
    for (_, sd) in approximation_corpus()? {
        let mut l1 = Vec::new();
        for n in [4, 8, 16, 32, 64] {
            let (u, d) = approximate(&sd, n)?;
            gg = gg.max(d.gauss_green_residual).max(decompose(&u).gauss_green_residual);
            fields += 1;
            strain = strain.max(d.strain_error);
            bound_ok &= d.bound_ok;
            l1.push(d.l1_error);
        }
        for w in l1.windows(2) {
            if w[0] > 1e-14 {
                let r = w[0] / w[1];
                worst_ratio = (worst_ratio.0.min(r), worst_ratio.1.max(r));
                halving_ok &= (1.6..=2.4).contains(&r);
            }
        }
        let seq: Vec<BrokenField> =
            [4, 16, 64].iter().map(|&n| approximate(&sd, n).map(|p| p.0)).collect::<Result<_>>()?;
        weak_ok &= weakstar_diagnostics(&seq, &sd.g)?.decreasing;
    }
    let c4 = outcome(gg <= 1e-10, format!("max Gauss-Green residual {gg:.3e} over {fields} fields"));
    let c5 = outcome(
        strain <= 1e-12 && bound_ok && halving_ok && weak_ok,
        format!(
            "strain error {strain:.1e}, bound {bound_ok}, L¹ ratios in [{:.3}, {:.3}], weak-* decreasing {weak_ok}",
            worst_ratio.0, worst_ratio.1
        ),
    );
    Ok((c4, c5))
}

fn criterion_6() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut spread: f64 = 0.0;
    for l in [0.5, 1.0, -2.0] {
        let s = CellProblemSpec::surface(
            BulkDensity::wsqrt(1),
            SurfaceDensity::psi1(1),
            1.0,
            Vector::scalar(l),
            Vector::scalar(1.0),
        )
        .with_eps_schedule(vec![1e-1, 1e-2, 1e-3]);
        let r = solve_h_critical(&s)?;
        worst = worst.max(r.recession_discrepancy().unwrap_or(f64::INFINITY));
        spread = spread.max(r.tail_spread);
    }
    Ok(outcome(
        worst <= 1e-3 && spread < 1e-3,
        format!("max |h₁ − recession form| = {worst:.3e}, tail spread {spread:.3e}"),
    ))
}

fn criterion_7() -> Result<Outcome> {
    let w = BulkDensity::w2(1);
    let psi = SurfaceDensity::psi1(1);
    let template =
        CellProblemSpec::bulk(w.clone(), psi.clone(), 2.0, Mat::zeros(1), Mat::zeros(1)).with_bc(BcMode::Hard);
    let h_inf = recession_H(&template, &Mat::scalar(1.0), &[10.0, 100.0, 1000.0])?.estimate;
    let mesh = Arc::new(Mesh::unit(1, 8)?);
    let mut worst: f64 = 0.0;
    for m in [0.5, 1.0, 2.0] {
        let g = BrokenField::zero(mesh.clone()).with_cantor(CantorDescriptor::new(6, m)?)?;
        let sd = StructuredDeformation::uniform(g, Mat::zeros(1), 2.0)?;
        let b = evaluate_Ip(&sd, &w, &psi, &RelaxOptions::default(), 0, None)?;
        worst = worst.max((b.cantor - m * h_inf).abs() / (m * h_inf));
    }
    Ok(outcome(worst < 0.01, format!("H^∞(1,0) = {h_inf:.6}, max relative error {worst:.3e}")))
}

fn linear_config() -> Result<NonsimpleConfig> {
    NonsimpleConfig::new(
        0.1,
        0.7,
        0.68,
        NonlinearDensity::v_dw(),
        SurfaceDensity::psi1(1),
        SurfaceDensity::psi1_matrix(1),
    )
}

fn gamma_corpus() -> Result<Vec<(&'static str, StructuredDeformation)>> {
    let mesh = Arc::new(Mesh::unit(1, 2)?);
    let g = |z: f64, h: f64| {
        BrokenField::from_fn(mesh.clone(), move |c, x| {
            CellData::affine(Vector::scalar(z * x.get(0) + h * c as f64), Mat::scalar(z))
        })
    };
    Ok(vec![
        ("affine", StructuredDeformation::uniform(g(0.5, 0.0)?, Mat::scalar(0.5), 2.0)?),
        ("step", StructuredDeformation::uniform(g(0.0, 1.0)?, Mat::zeros(1), 2.0)?),
        ("affine+step", StructuredDeformation::new(g(0.5, 1.0)?, vec![Mat::scalar(0.25), Mat::scalar(-0.25)], 2.0)?),
    ])
}

const DELTAS: [f64; 3] = [1e-1, 1e-2, 1e-3];

fn gamma_relax() -> RelaxOptions {
    RelaxOptions { n_bulk: Some(64), n_surface: Some(16), ..RelaxOptions::default() }
}

fn criterion_8() -> Result<(Outcome, Vec<String>)> {
    let cfg = linear_config()?;
    let mut pass = true;
    let mut notes = Vec::new();
    let mut csvs = Vec::new();
    for (name, sd) in gamma_corpus()? {
        let t = Instant::now();
        let r = gamma_gap(&sd, &DELTAS, &cfg, &gamma_relax(), 0, &RecoveryOptions::default())?;
        let secs = t.elapsed().as_secs_f64();
        let last = r.rows.last().expect("rows");
        let ok = last.rel_gap < 0.05 && last.n == 1 << 12 && secs < 300.0 && r.higher_order_vanishing;
        pass &= ok;
        notes.push(format!(
            "{name}: gap {:.2e} ({:.2}%), sg {:.1e}, Ψ {:.1e}, {secs:.1} s",
            last.gap,
            100.0 * last.rel_gap,
            last.second_gradient,
            last.gradient_jump
        ));
        csvs.push(gamma_csv(&r));
    }
    Ok((outcome(pass, notes.join("; ")), csvs))
}

fn criterion_9() -> Result<Outcome> {
    let cfg = linear_config()?;
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, sd) in gamma_corpus()? {
        let fam = recovery_sequence(&sd, &DELTAS, &cfg, &RecoveryOptions::default())?;
        let fam: Vec<(f64, BrokenField)> = fam.into_iter().map(|m| (m.delta, m.u)).collect();
        let r = rigidity_diagnostics(&fam, &cfg, &RigidityOptions::default())?;
        let ok = r.bounded() && r.perimeter_decreasing;
        pass &= ok;
        let per: Vec<String> = r.reports.iter().map(|x| format!("{:.0}", x.perimeter)).collect();
        notes.push(format!(
            "{name}: perimeters [{}], constants [{:.2e}, {:.2e}, {:.2e}]",
            per.join(", "),
            r.constants[0],
            r.constants[1],
            r.constants[2]
        ));
    }
    Ok(outcome(pass, notes.join("; ")))
}

fn determinism_run() -> Result<Vec<String>> {
    let mut out = Vec::new();
    let rows = solve_lattice(&BulkDensity::w2(1))?;
    out.push(results_csv(&rows));
    out.extend(criterion_8()?.1);
    Ok(out)
}

fn criterion_10(first: &[String]) -> Result<Outcome> {
    let second = determinism_run()?;
    let same = first.len() == second.len() && first.iter().zip(&second).all(|(a, b)| a == b);
    let bytes: usize = first.iter().map(|s| s.len()).sum();
    Ok(outcome(same, format!("{} CSVs, {bytes} bytes compared", first.len())))
}

fn report(id: usize, name: &str, r: Result<Outcome>, failures: &mut usize) {
    let o = r.unwrap_or_else(|e| outcome(false, format!("error: {e}")));
    if !o.pass {
        *failures += 1;
    }
    println!("criterion {id:>2} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

fn main() {
    let mut failures = 0;
    let t = Instant::now();
    let tables: Result<Vec<Table>> =
        [BulkDensity::w2(1), BulkDensity::w1abs(1)].into_iter().map(|w| solve_lattice(&w).map(|r| (w, r))).collect();
    let secs = t.elapsed().as_secs_f64();
    let tables = match tables {
        Ok(t) => t,
        Err(e) => {
            println!("lattice solve failed: {e}");
            std::process::exit(1);
        }
    };
    report(1, "1D bulk oracle equivalence", criterion_1(&tables, secs), &mut failures);
    report(2, "closed-form spot checks", criterion_2(&tables), &mut failures);
    report(3, "relaxed density properties", criterion_3(&tables), &mut failures);
    let (c4, c5) = match criterion_4_and_5(&tables) {
        Ok((a, b)) => (Ok(a), Ok(b)),
        Err(e) => (Err(sdrelax::Error::InvalidInput(e.to_string())), Err(e)),
    };
    report(4, "Gauss-Green identity", c4, &mut failures);
    report(5, "approximation theorem", c5, &mut failures);
    report(6, "recession consistency", criterion_6(), &mut failures);
    report(7, "Cantor term", criterion_7(), &mut failures);
    let (c8, csvs) = match criterion_8() {
        Ok((o, c)) => (Ok(o), c),
        Err(e) => (Err(e), Vec::new()),
    };
    report(8, "Γ-gap of recovery families", c8, &mut failures);
    report(9, "rigidity diagnostics", criterion_9(), &mut failures);
    let first = solve_lattice(&BulkDensity::w2(1)).map(|rows| {
        let mut v = vec![results_csv(&rows)];
        v.extend(csvs);
        v
    });
    report(10, "determinism", first.and_then(|f| criterion_10(&f)), &mut failures);
    println!("{} of 10 criteria passed in {:.1} s", 10 - failures, t.elapsed().as_secs_f64());
    if failures > 0 {
        std::process::exit(1);
    }
}
