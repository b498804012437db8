use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use grushin_core::convergence::{fit_order, is_decreasing, successive_orders};
use grushin_core::error::{Error, Result};
use grushin_core::fields::ScalarField;
use grushin_core::geometry::Grid;
use grushin_core::pohozaev::{whole_space_study, IdentityReport, Problem, WholeSpaceRow};
use grushin_core::solver::{picard_solve_with, PicardTrace};
use grushin_core::variation::{
    control_ball, control_bump, stationarity_check, Cutoff, VariationMap,
};
use serde::Serialize;

use crate::config::Run;

/// The identity selector of `verify`, axes 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    TranslateX(usize),
    TranslateY(usize),
    ScaleLocal,
    ScaleGlobal,
}

pub enum Outcome {
    Ok,
    /// The residual bar was missed.
    AboveThreshold(String),
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Config(format!("cannot write {}: {e}", path.display()))
}

/// Output directory with file helpers.
pub struct Out {
    dir: PathBuf,
}

impl Out {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write_with<F>(&self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| io_err(&path, e))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).expect("serializable");
        self.write_with(name, |w| writeln!(w, "{text}"))
    }

    /// A CSV file written row by row, flushed after each row so that an
    /// aborted study leaves its finished rows behind.
    fn table(&self, name: &str, header: &str) -> Result<Table> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut t = Table {
            w: BufWriter::new(file),
            path,
        };
        t.row(header)?;
        Ok(t)
    }
}

struct Table {
    w: BufWriter<File>,
    path: PathBuf,
}

impl Table {
    fn row(&mut self, line: &str) -> Result<()> {
        writeln!(self.w, "{line}")
            .and_then(|_| self.w.flush())
            .map_err(|e| io_err(&self.path, e))
    }
}

fn solve(run: &Run, grid: &Grid) -> Result<(ScalarField, PicardTrace)> {
    let boundary = run.boundary(grid)?;
    let (u, trace) = picard_solve_with(
        run.source.as_ref(),
        &run.geo,
        grid,
        &run.cfg.solver,
        boundary.as_ref(),
    )?;
    if !trace.converged {
        let last = trace.steps.last().map(|s| s.change).unwrap_or(f64::NAN);
        return Err(Error::NotConverged(format!(
            "picard iteration stopped after {} steps with change {last:e}",
            trace.steps.len()
        )));
    }
    Ok((u, trace))
}

#[derive(Serialize)]
struct SolveSummary {
    nodes_per_axis: Vec<usize>,
    h: Vec<f64>,
    picard_steps: usize,
    iterations: usize,
    energy: f64,
    grad_norm: f64,
    tol_grad: f64,
    max_abs: f64,
}

pub fn cmd_solve(run: &Run, out: &Out) -> Result<Outcome> {
    let grid = run.grid(0)?;
    let (u, trace) = solve(run, &grid)?;
    out.write_with("solution.csv", |w| u.write_csv(w))?;
    out.write_with("trace.csv", |w| {
        writeln!(w, "picard,iteration,energy,grad_norm,step")?;
        for s in &trace.steps {
            for r in &s.inner.trace {
                writeln!(
                    w,
                    "{},{},{:e},{:e},{:e}",
                    s.iteration, r.iteration, r.energy, r.grad_norm, r.step
                )?;
            }
        }
        Ok(())
    })?;
    let last = &trace.steps.last().expect("at least one step").inner;
    let summary = SolveSummary {
        nodes_per_axis: grid.nodes_per_axis().to_vec(),
        h: grid.spacing().to_vec(),
        picard_steps: trace.steps.len(),
        iterations: trace.steps.iter().map(|s| s.inner.iterations).sum(),
        energy: last.energy,
        grad_norm: last.grad_norm,
        tol_grad: last.tol_grad,
        max_abs: u.max_abs(),
    };
    out.json("solve.json", &summary)?;
    println!(
        "converged: {} picard step(s), {} iterations, energy {:e}",
        summary.picard_steps, summary.iterations, summary.energy
    );
    Ok(Outcome::Ok)
}

fn slug(kind: &str) -> String {
    kind.chars()
        .filter(|c| c.is_ascii_alphanumeric() || *c == '-')
        .collect()
}

/// The selected report followed by companions (the auxiliary identity for
/// `scale-local`).
fn reports(run: &Run, which: Which, u: &ScalarField, grid: &Grid) -> Result<Vec<IdentityReport>> {
    let prob = Problem::new(
        u,
        run.source.as_ref(),
        &run.geo,
        run.cfg.solver.eps_w_for(&run.geo),
    )?;
    Ok(match which {
        Which::TranslateX(i) => vec![prob.translate_x(&run.require_subdomain(grid)?, i)?],
        Which::TranslateY(j) => vec![prob.translate_y(&run.require_subdomain(grid)?, j)?],
        Which::ScaleLocal => {
            let d = run.require_subdomain(grid)?;
            vec![prob.scale_local(&d)?, prob.auxiliary(&d)?]
        }
        Which::ScaleGlobal => vec![prob.scale_global()?],
    })
}

fn check_which(run: &Run, which: Which) -> Result<()> {
    let (n_x, n_y) = (run.geo.n_x, run.geo.n_y);
    match which {
        Which::TranslateX(i) if i >= n_x => Err(Error::Config(format!(
            "translate-x {}: axis out of range 1..={n_x}",
            i + 1
        ))),
        Which::TranslateY(j) if j >= n_y => Err(Error::Config(format!(
            "translate-y {}: axis out of range 1..={n_y}",
            j + 1
        ))),
        _ => Ok(()),
    }
}

#[derive(Serialize)]
struct OrderSummary {
    kind: String,
    h: Vec<f64>,
    relative_residual: Vec<f64>,
    fitted_order: Option<f64>,
    successive_orders: Vec<f64>,
}

fn order_summary(kind: String, h: Vec<f64>, r: Vec<f64>) -> OrderSummary {
    OrderSummary {
        kind,
        fitted_order: fit_order(&h, &r),
        successive_orders: successive_orders(&h, &r),
        h,
        relative_residual: r,
    }
}

const REFINEMENT_HEADER: &str = "level,nodes,h,kind,lhs,rhs,residual,relative_residual";

fn refinement_row(level: u32, grid: &Grid, r: &IdentityReport) -> String {
    format!(
        "{level},{},{},{},{:e},{:e},{:e},{:e}",
        grid.nodes_per_axis()
            .iter()
            .map(|m| m.to_string())
            .collect::<Vec<_>>()
            .join("x"),
        r.h(),
        r.kind,
        r.lhs,
        r.rhs,
        r.residual,
        r.relative_residual
    )
}

pub fn cmd_verify(
    run: &Run,
    which: Which,
    out: &Out,
    threshold: f64,
    levels: Option<u32>,
) -> Result<Outcome> {
    check_which(run, which)?;
    let levels = levels.unwrap_or(1).max(1);
    let mut table = None;
    let mut series: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut last = Vec::new();
    for level in 0..levels {
        let grid = run.grid(level)?;
        // reject bad subdomains before paying for the solve
        if which != Which::ScaleGlobal {
            run.require_subdomain(&grid)?;
        }
        let (u, _) = solve(run, &grid)?;
        let rs = reports(run, which, &u, &grid)?;
        if levels > 1 {
            let name = format!("verify-{}-refinement.csv", slug(&rs[0].kind.to_string()));
            if table.is_none() {
                table = Some(out.table(&name, REFINEMENT_HEADER)?);
            }
            let t = table.as_mut().expect("opened above");
            for r in &rs {
                t.row(&refinement_row(level, &grid, r))?;
                let e = series.entry(r.kind.to_string()).or_default();
                e.0.push(r.h());
                e.1.push(r.relative_residual);
            }
        }
        last = rs;
    }
    let main = &last[0];
    let stem = format!("verify-{}", slug(&main.kind.to_string()));
    out.write_with(&format!("{stem}.json"), |w| {
        writeln!(w, "{}", main.to_json())
    })?;
    for extra in &last[1..] {
        let name = format!("verify-{}.json", slug(&extra.kind.to_string()));
        out.write_with(&name, |w| writeln!(w, "{}", extra.to_json()))?;
    }
    if levels > 1 {
        let orders: Vec<OrderSummary> = series
            .into_iter()
            .map(|(k, (h, r))| order_summary(k, h, r))
            .collect();
        out.json(&format!("{stem}-orders.json"), &orders)?;
        for o in &orders {
            match o.fitted_order {
                Some(q) => println!("{}: fitted order {q:.3}", o.kind),
                None => println!("{}: fitted order undefined", o.kind),
            }
        }
    }
    println!("{}", main.to_json());
    if main.relative_residual <= threshold {
        Ok(Outcome::Ok)
    } else {
        Ok(Outcome::AboveThreshold(format!(
            "{}: relative residual {:e} exceeds threshold {threshold:e}",
            main.kind, main.relative_residual
        )))
    }
}

pub fn cmd_study_refinement(run: &Run, out: &Out, levels: u32) -> Result<Outcome> {
    if levels < 2 {
        return Err(Error::Config(
            "a refinement study needs at least 2 levels".into(),
        ));
    }
    let mut whichs: Vec<Which> = Vec::new();
    if run.cfg.subdomain.is_some() {
        whichs.extend((0..run.geo.n_x).map(Which::TranslateX));
        whichs.extend((0..run.geo.n_y).map(Which::TranslateY));
        whichs.push(Which::ScaleLocal);
    }
    whichs.push(Which::ScaleGlobal);
    let mut table = out.table("refinement.csv", REFINEMENT_HEADER)?;
    let mut series: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for level in 0..levels {
        let grid = run.grid(level)?;
        run.subdomain(&grid)?;
        let (u, _) = solve(run, &grid)?;
        for &w in &whichs {
            for r in reports(run, w, &u, &grid)? {
                table.row(&refinement_row(level, &grid, &r))?;
                let e = series.entry(r.kind.to_string()).or_default();
                e.0.push(r.h());
                e.1.push(r.relative_residual);
            }
        }
    }
    let orders: Vec<OrderSummary> = series
        .into_iter()
        .map(|(k, (h, r))| order_summary(k, h, r))
        .collect();
    out.json("refinement-orders.json", &orders)?;
    for o in &orders {
        match o.fitted_order {
            Some(q) => println!("{}: fitted order {q:.3}", o.kind),
            None => println!("{}: fitted order undefined", o.kind),
        }
    }
    Ok(Outcome::Ok)
}

#[derive(Serialize)]
struct WholeSpaceSummary {
    rows: Vec<WholeSpaceRow>,
    boundary_term_decreasing: bool,
    whole_space_residual_decreasing: bool,
}

pub fn cmd_study_whole_space(run: &Run, out: &Out) -> Result<Outcome> {
    if run.cfg.forcing_support.is_none() {
        return Err(Error::Config(
            "the whole-space study needs a compactly supported forcing ('forcing_support')".into(),
        ));
    }
    let radii = &run.cfg.study.radii;
    if radii.is_empty() || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(
            "study.radii must be a non-empty increasing list".into(),
        ));
    }
    let h = run
        .cfg
        .study
        .spacing
        .ok_or_else(|| Error::Config("the whole-space study needs study.spacing".into()))?;
    let mut table = out.table("whole_space.csv", WholeSpaceRow::CSV_HEADER)?;
    let mut write_err = None;
    let rows = whole_space_study(
        run.source.as_ref(),
        &run.geo,
        radii,
        h,
        &run.cfg.solver,
        |row| {
            if write_err.is_none() {
                write_err = table.row(&row.csv_row()).err();
            }
        },
    )?;
    if let Some(e) = write_err {
        return Err(e);
    }
    let b: Vec<f64> = rows.iter().map(|r| r.boundary_term.abs()).collect();
    let res: Vec<f64> = rows.iter().map(|r| r.whole_space_residual.abs()).collect();
    let summary = WholeSpaceSummary {
        boundary_term_decreasing: is_decreasing(&b),
        whole_space_residual_decreasing: is_decreasing(&res),
        rows,
    };
    out.json("whole_space.json", &summary)?;
    println!(
        "boundary term decreasing: {}, whole-space residual decreasing: {}",
        summary.boundary_term_decreasing, summary.whole_space_residual_decreasing
    );
    Ok(Outcome::Ok)
}

#[derive(Serialize)]
struct StationaritySeries {
    map: String,
    h: Vec<f64>,
    slope: Vec<f64>,
    control_slope: Vec<f64>,
    slope_decreasing: bool,
    min_control_ratio: f64,
}

pub fn cmd_study_stationarity(run: &Run, out: &Out, levels: u32) -> Result<Outcome> {
    if levels < 1 {
        return Err(Error::Config(
            "the stationarity study needs at least 1 level".into(),
        ));
    }
    let st = &run.cfg.study;
    let eps_w = run.cfg.solver.eps_w_for(&run.geo);
    let mut table = out.table("stationarity.csv", "level,nodes,h,map,slope,control_slope")?;
    let mut samples = out.table("stationarity_samples.csv", "level,map,t,energy")?;
    let mut series: Vec<StationaritySeries> = run
        .maps
        .iter()
        .map(|m| StationaritySeries {
            map: m.to_string(),
            h: Vec::new(),
            slope: Vec::new(),
            control_slope: Vec::new(),
            slope_decreasing: false,
            min_control_ratio: f64::INFINITY,
        })
        .collect();
    for level in 0..levels {
        let grid = run.grid(level)?;
        let d = run.require_subdomain(&grid)?;
        let cutoff = Cutoff::new(&grid, &run.geo, &d, st.delta)?;
        let (u, _) = solve(run, &grid)?;
        let (center, radius) = control_ball(&d.aabb(&grid));
        let bump = control_bump(&grid, &center, radius, st.control_amplitude * u.max_abs());
        let w = u.lin_comb(1.0, &bump, 1.0);
        for (k, &kind) in run.maps.iter().enumerate() {
            let map = VariationMap::new(kind, cutoff.clone(), &grid)?;
            let good =
                stationarity_check(&u, run.source.as_ref(), &run.geo, eps_w, &map, st.t0, 3)?;
            let bad = stationarity_check(&w, run.source.as_ref(), &run.geo, eps_w, &map, st.t0, 3)?;
            table.row(&format!(
                "{level},{},{},{kind},{:e},{:e}",
                grid.nodes_per_axis()
                    .iter()
                    .map(|m| m.to_string())
                    .collect::<Vec<_>>()
                    .join("x"),
                good.h,
                good.slope,
                bad.slope
            ))?;
            for s in &good.samples {
                samples.row(&format!("{level},{kind},{:e},{:e}", s.t, s.energy))?;
            }
            let s = &mut series[k];
            s.h.push(good.h);
            s.slope.push(good.slope);
            s.control_slope.push(bad.slope);
        }
    }
    for s in &mut series {
        let abs: Vec<f64> = s.slope.iter().map(|v| v.abs()).collect();
        s.slope_decreasing = is_decreasing(&abs);
        s.min_control_ratio = s
            .slope
            .iter()
            .zip(&s.control_slope)
            .map(|(g, b)| b.abs() / g.abs())
            .fold(f64::INFINITY, f64::min);
        println!(
            "{}: slope decreasing {}, min control ratio {:.1}",
            s.map, s.slope_decreasing, s.min_control_ratio
        );
    }
    out.json("stationarity.json", &series)?;
    Ok(Outcome::Ok)
}
