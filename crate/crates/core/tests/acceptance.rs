//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the verdict lines are always shown.
//! The process fails when a criterion outside `KNOWN_RED` fails; the known
//! failures and their analysis are listed in the README.

use std::collections::BTreeMap;
use std::time::Instant;

use grushin_core::convergence::{fit_order, is_decreasing};
use grushin_core::fields::ScalarField;
use grushin_core::geometry::{anisotropic_distance, Aabb, Grid, GrushinGeometry, SubBox};
use grushin_core::nonlinearity::{CompactForcing, Nonlinearity, Source};
use grushin_core::pohozaev::{whole_space_study, IdentityReport, Problem};
use grushin_core::solver::{
    energy, energy_gradient, picard_solve_with, InitialGuess, SolverConfig, TorsionOracle,
};
use grushin_core::variation::{
    control_ball, control_bump, stationarity_check, Cutoff, MapKind, VariationMap,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// bars
const GRAD_REL_TOL: f64 = 1e-5;
const GRAD_FIELDS: usize = 20;
const GRAD_MAX_SECONDS: f64 = 60.0;
const ORACLE_ORDER_P2: f64 = 1.5;
const ORACLE_ORDER_P3: f64 = 1.0;
const CLASSICAL_ORDER: f64 = 0.8;
const LOCAL_FINEST_MAX: f64 = 0.1;
const LOCAL_ORDER: f64 = 0.8;
const GLOBAL_ORDER: f64 = 0.6;
const COLLAPSE_TOL: f64 = 1e-10;
const CONTROL_RATIO: f64 = 10.0;
const JACOBIAN_TOL: f64 = 1e-6;
const JACOBIAN_SAMPLES: usize = 1000;
const UNIQUENESS_FACTOR: f64 = 10.0;

/// Criteria expected to fail; see the README for the analysis.
const KNOWN_RED: &[u32] = &[2, 4];

/// Nodes per axis on `[-1, 1]^3` for the oracle checks.
const LEVELS: [usize; 3] = [9, 17, 33];
/// Nodes per axis for the gamma = 1 problems. The identity subdomains span
/// only two or three cells at m = 9, so these start one level finer.
const GRUSHIN_LEVELS: [usize; 3] = [17, 33, 65];

/// Subdomain of the local identities (off-centre so no term vanishes by
/// symmetry).
const D_IDENTITY: ([f64; 3], [f64; 3]) = ([0.25, -0.5, -0.25], [0.75, 0.25, 0.5]);
/// Subdomain of the stationarity check, with room for its shell; not
/// symmetric in any y axis, so no slope vanishes identically.
const D_VARIATION: ([f64; 3], [f64; 3]) = ([0.25, -0.25, 0.0], [0.5, 0.0, 0.5]);
const CUTOFF_DELTA: f64 = 0.25;
const T0: f64 = 0.2;

struct Verdict {
    id: u32,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn cube(m: usize) -> Grid {
    Grid::cube(3, -1.0, 1.0, m).unwrap()
}

fn subbox(grid: &Grid, (lo, hi): ([f64; 3], [f64; 3])) -> SubBox {
    SubBox::covering(
        grid,
        &Aabb {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
        },
    )
    .unwrap()
}

fn fmt_seq(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn fmt_order(o: Option<f64>) -> String {
    o.map(|q| format!("{q:.2}"))
        .unwrap_or_else(|| "undefined".into())
}

/// Strictly decreasing with a fitted order at or above `bar`.
fn converges(h: &[f64], e: &[f64], bar: f64) -> bool {
    is_decreasing(e) && fit_order(h, e).is_some_and(|q| q >= bar)
}

fn h_of(grid: &Grid) -> f64 {
    grid.max_spacing()
}

struct Solved {
    u: ScalarField,
    tol: f64,
}

fn solve<S: Source + ?Sized>(
    source: &S,
    geo: &GrushinGeometry,
    grid: &Grid,
    boundary: Option<&ScalarField>,
    init: InitialGuess,
) -> Solved {
    let cfg = SolverConfig {
        init,
        ..SolverConfig::default()
    };
    let (u, trace) = picard_solve_with(source, geo, grid, &cfg, boundary).expect("solve");
    assert!(trace.converged);
    Solved {
        u,
        tol: cfg.tol_grad_for(grid),
    }
}

// --- 1 ---------------------------------------------------------------

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let grid = Grid::new(&[(-1.0, 1.0), (-0.5, 1.0), (0.0, 1.0)], &[6, 5, 5]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut worst_at = (0.0, 0.0);
    for p in [1.5, 2.0, 3.0, 4.0] {
        for gamma in [0.0, 0.5, 1.0, 2.0] {
            let geo = GrushinGeometry::new(1, 2, gamma, p).unwrap();
            let eps_w = SolverConfig::default().eps_w_for(&geo);
            for _ in 0..GRAD_FIELDS {
                let n = grid.node_count();
                let mut u = ScalarField::from_values(
                    &grid,
                    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                )
                .unwrap();
                u.enforce_dirichlet();
                let g = ScalarField::from_values(
                    &grid,
                    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                )
                .unwrap();
                let grad = energy_gradient(&u, &g, &geo, eps_w).unwrap();
                let mut err: f64 = 0.0;
                let mut scale: f64 = 0.0;
                for i in 0..grid.node_count() {
                    if grid.is_boundary(i) {
                        continue;
                    }
                    let step = 1e-6;
                    let mut up = u.clone();
                    up.values_mut()[i] += step;
                    let mut um = u.clone();
                    um.values_mut()[i] -= step;
                    let fd = (energy(&up, &g, &geo, eps_w).unwrap()
                        - energy(&um, &g, &geo, eps_w).unwrap())
                        / (2.0 * step);
                    err = err.max((fd - grad.values()[i]).abs());
                    scale = scale.max(grad.values()[i].abs());
                }
                let rel = err / scale;
                if rel > worst {
                    worst = rel;
                    worst_at = (p, gamma);
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict {
        id: 1,
        title: "energy gradient vs central differences",
        pass: worst <= GRAD_REL_TOL && secs < GRAD_MAX_SECONDS,
        detail: format!(
            "worst relative error {worst:.2e} at (p, gamma) = {worst_at:?} over 16 x {GRAD_FIELDS} fields, \
             bar {GRAD_REL_TOL:.0e}; {secs:.1} s (bar {GRAD_MAX_SECONDS} s)"
        ),
    }
}

// --- 2 ---------------------------------------------------------------

fn oracle_errors(p: f64) -> (Vec<f64>, Vec<f64>) {
    let geo = GrushinGeometry::new(1, 2, 0.0, p).unwrap();
    let oracle = TorsionOracle::new(&geo, 1.0).unwrap();
    let one = Nonlinearity::parse("1", 1, 2).unwrap();
    let mut hs = Vec::new();
    let mut errs = Vec::new();
    for m in LEVELS {
        let grid = cube(m);
        let lift = oracle.field(&grid);
        let s = solve(&one, &geo, &grid, Some(&lift), InitialGuess::Zeros);
        let mut err: f64 = 0.0;
        for i in 0..grid.node_count() {
            let z = grid.point(i);
            if z.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                err = err.max((s.u.values()[i] - oracle.value(&z)).abs());
            }
        }
        hs.push(h_of(&grid));
        errs.push(err);
    }
    (hs, errs)
}

fn criterion_2() -> Verdict {
    let (h, e2) = oracle_errors(2.0);
    let (_, e3) = oracle_errors(3.0);
    let ok2 = converges(&h, &e2, ORACLE_ORDER_P2);
    let ok3 = converges(&h, &e3, ORACLE_ORDER_P3);
    Verdict {
        id: 2,
        title: "torsion oracle solves",
        pass: ok2 && ok3,
        detail: format!(
            "p=2 max errors {} order {} (bar {ORACLE_ORDER_P2}) {}; p=3 max errors {} order {} (bar {ORACLE_ORDER_P3}) {}",
            fmt_seq(&e2),
            fmt_order(fit_order(&h, &e2)),
            if ok2 { "ok" } else { "missed" },
            fmt_seq(&e3),
            fmt_order(fit_order(&h, &e3)),
            if ok3 { "ok" } else { "missed" },
        ),
    }
}

// --- 3 ---------------------------------------------------------------

/// 3-point Gauss-Legendre on `[a, b]`.
fn gauss3(a: f64, b: f64) -> [(f64, f64); 3] {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let x = (0.6f64).sqrt();
    [
        (c - r * x, r * 5.0 / 9.0),
        (c, r * 8.0 / 9.0),
        (c + r * x, r * 5.0 / 9.0),
    ]
}

/// Closed-form terms of the local scaling identity for `u = (1 - r^2) / 6`
/// (p = 2, gamma = 0, f = 1, n = 3) on the cube `[-a, a]^3`. Every integrand
/// is a polynomial of degree at most 4 per axis, so 3-point Gauss rules are
/// exact.
fn classical_reference(a: f64) -> BTreeMap<String, f64> {
    let u = |z: &[f64; 3]| (1.0 - z.iter().map(|v| v * v).sum::<f64>()) / 6.0;
    let du = |z: &[f64; 3]| [-z[0] / 3.0, -z[1] / 3.0, -z[2] / 3.0];
    let q = gauss3(-a, a);
    let mut vol = 0.0;
    for &(x, wx) in &q {
        for &(y, wy) in &q {
            for &(z, wz) in &q {
                vol += wx * wy * wz * u(&[x, y, z]);
            }
        }
    }
    let (mut s_udn, mut s_grad2, mut s_zdu_dn, mut s_uzn) = (0.0, 0.0, 0.0, 0.0);
    for axis in 0..3 {
        for sign in [-1.0, 1.0] {
            for &(s, ws) in &q {
                for &(t, wt) in &q {
                    let mut z = [0.0; 3];
                    z[axis] = sign * a;
                    z[(axis + 1) % 3] = s;
                    z[(axis + 2) % 3] = t;
                    let w = ws * wt;
                    let g = du(&z);
                    let dn = sign * g[axis];
                    let zn = sign * z[axis];
                    let g2 = g.iter().map(|v| v * v).sum::<f64>();
                    let zg = (0..3).map(|k| z[k] * g[k]).sum::<f64>();
                    s_udn += w * u(&z) * dn;
                    s_grad2 += w * g2 * zn;
                    s_zdu_dn += w * zg * dn;
                    s_uzn += w * u(&z) * zn;
                }
            }
        }
    }
    let c = 1.0 - 3.0 / 2.0;
    BTreeMap::from([
        ("lhs.t1".to_string(), c * vol),
        ("lhs.t2".to_string(), c * s_udn),
        ("lhs.t3".to_string(), 0.5 * s_grad2),
        ("lhs.t4".to_string(), -s_zdu_dn),
        ("lhs.t5".to_string(), 0.0),
        ("rhs.t1".to_string(), s_uzn),
        ("rhs.t2".to_string(), -3.0 * vol),
        ("rhs.t3".to_string(), 0.0),
    ])
}

/// Both sides of the classical scaling identity on the unit ball for the
/// torsion solution, `(1/2) oint (x.nu) |grad u|^2` and
/// `c int u f + N int F` with `c = (2 - N)/2`.
fn classical_ball(c: f64) -> (f64, f64) {
    let pi = std::f64::consts::PI;
    let lhs = 0.5 * (1.0f64 / 3.0).powi(2) * 4.0 * pi;
    let int_u = 4.0 * pi / 6.0 * (1.0 / 3.0 - 1.0 / 5.0);
    (lhs, c * int_u + 3.0 * int_u)
}

fn criterion_3() -> Verdict {
    let geo = GrushinGeometry::new(1, 2, 0.0, 2.0).unwrap();
    let oracle = TorsionOracle::new(&geo, 1.0).unwrap();
    let one = Nonlinearity::parse("1", 1, 2).unwrap();
    let a = 0.5;
    let reference = classical_reference(a);
    let ref_lhs: f64 = reference
        .iter()
        .filter(|(k, _)| k.starts_with("lhs"))
        .map(|(_, v)| v)
        .sum();
    let ref_rhs: f64 = reference
        .iter()
        .filter(|(k, _)| k.starts_with("rhs"))
        .map(|(_, v)| v)
        .sum();
    let ref_closed = (ref_lhs - ref_rhs).abs() <= 1e-13 * ref_lhs.abs().max(ref_rhs.abs());
    let (ball_l, ball_r) = classical_ball(-0.5);
    let ball_closed = (ball_l - ball_r).abs() <= 1e-14;
    let mut h = Vec::new();
    let mut res = Vec::new();
    let mut term_err = Vec::new();
    for m in LEVELS {
        let grid = cube(m);
        let lift = oracle.field(&grid);
        let s = solve(&one, &geo, &grid, Some(&lift), InitialGuess::Zeros);
        let d = subbox(&grid, ([-a; 3], [a; 3]));
        let r = Problem::new(&s.u, &one, &geo, 0.0)
            .unwrap()
            .scale_local(&d)
            .unwrap();
        h.push(h_of(&grid));
        res.push(r.relative_residual);
        let e = reference
            .iter()
            .map(|(k, v)| (r.term(k) - v).abs())
            .fold(0.0, f64::max);
        term_err.push(e);
    }
    let pass = ref_closed
        && ball_closed
        && converges(&h, &res, CLASSICAL_ORDER)
        && is_decreasing(&term_err);
    Verdict {
        id: 3,
        title: "classical scaling reduction (p=2, gamma=0)",
        pass,
        detail: format!(
            "relative residuals {} order {} (bar {CLASSICAL_ORDER}); max term error vs closed form {}; \
             closed form closes: {ref_closed}; ball identity with (2-N)/2 closes: {ball_closed}",
            fmt_seq(&res),
            fmt_order(fit_order(&h, &res)),
            fmt_seq(&term_err),
        ),
    }
}

// --- 4, 5, 6, 8, 10 share these solves ---------------------------------

struct GrushinRun {
    p: f64,
    geo: GrushinGeometry,
    grids: Vec<Grid>,
    solved: Vec<Solved>,
}

fn grushin_runs() -> Vec<GrushinRun> {
    let one = Nonlinearity::parse("1", 1, 2).unwrap();
    [2.0, 3.0]
        .into_iter()
        .map(|p| {
            let geo = GrushinGeometry::new(1, 2, 1.0, p).unwrap();
            let grids: Vec<Grid> = GRUSHIN_LEVELS.iter().map(|&m| cube(m)).collect();
            let solved = grids
                .iter()
                .map(|g| solve(&one, &geo, g, None, InitialGuess::Zeros))
                .collect();
            GrushinRun {
                p,
                geo,
                grids,
                solved,
            }
        })
        .collect()
}

fn local_reports(run: &GrushinRun) -> Vec<Vec<IdentityReport>> {
    let one = Nonlinearity::parse("1", 1, 2).unwrap();
    run.grids
        .iter()
        .zip(&run.solved)
        .map(|(grid, s)| {
            let prob = Problem::new(&s.u, &one, &run.geo, 0.0).unwrap();
            let d = subbox(grid, D_IDENTITY);
            vec![
                prob.translate_x(&d, 0).unwrap(),
                prob.translate_y(&d, 0).unwrap(),
                prob.translate_y(&d, 1).unwrap(),
                prob.scale_local(&d).unwrap(),
                prob.auxiliary(&d).unwrap(),
            ]
        })
        .collect()
}

/// Checks identities `which` (indices into a level's report list) against
/// the finest-level bar and the order bar.
fn local_verdict(
    runs: &[GrushinRun],
    reports: &[Vec<Vec<IdentityReport>>],
    which: &[usize],
) -> (bool, String) {
    let mut pass = true;
    let mut lines = Vec::new();
    for (run, rep) in runs.iter().zip(reports) {
        let h: Vec<f64> = run.grids.iter().map(h_of).collect();
        for &k in which {
            let res: Vec<f64> = rep.iter().map(|level| level[k].relative_residual).collect();
            let ok = converges(&h, &res, LOCAL_ORDER) && *res.last().unwrap() <= LOCAL_FINEST_MAX;
            pass &= ok;
            lines.push(format!(
                "p={} {} {} order {}{}",
                run.p,
                rep[0][k].kind,
                fmt_seq(&res),
                fmt_order(fit_order(&h, &res)),
                if ok { "" } else { " MISSED" }
            ));
        }
    }
    (pass, lines.join("; "))
}

fn criterion_4(runs: &[GrushinRun], reports: &[Vec<Vec<IdentityReport>>]) -> Verdict {
    let (pass, detail) = local_verdict(runs, reports, &[0, 1, 2]);
    Verdict {
        id: 4,
        title: "translating identities (gamma=1, p=2 and 3)",
        pass,
        detail: format!("{detail} (bars: finest <= {LOCAL_FINEST_MAX}, strictly decreasing, order >= {LOCAL_ORDER})"),
    }
}

fn criterion_5(runs: &[GrushinRun], reports: &[Vec<Vec<IdentityReport>>]) -> Verdict {
    let (pass, detail) = local_verdict(runs, reports, &[3, 4]);
    Verdict {
        id: 5,
        title: "local scaling and auxiliary identities",
        pass,
        detail: format!("{detail} (bars: finest <= {LOCAL_FINEST_MAX}, strictly decreasing, order >= {LOCAL_ORDER})"),
    }
}

fn criterion_6(runs: &[GrushinRun]) -> Verdict {
    let one = Nonlinearity::parse("1", 1, 2).unwrap();
    let mut pass = true;
    let mut lines = Vec::new();
    for run in runs {
        let h: Vec<f64> = run.grids.iter().map(h_of).collect();
        let mut res = Vec::new();
        let mut collapse: f64 = 0.0;
        for s in &run.solved {
            let prob = Problem::new(&s.u, &one, &run.geo, 0.0).unwrap();
            res.push(prob.scale_global().unwrap().relative_residual);
            let c = prob.collapse_check();
            let scale = c.collapsed.abs().max(1.0);
            collapse = collapse
                .max(c.max_nodal_difference)
                .max((c.full - c.collapsed).abs() / scale);
        }
        let ok = converges(&h, &res, GLOBAL_ORDER) && collapse <= COLLAPSE_TOL;
        pass &= ok;
        lines.push(format!(
            "p={} residuals {} order {}; collapse defect {collapse:.1e}{}",
            run.p,
            fmt_seq(&res),
            fmt_order(fit_order(&h, &res)),
            if ok { "" } else { " MISSED" }
        ));
    }
    Verdict {
        id: 6,
        title: "global scaling identity and boundary collapse",
        pass,
        detail: format!(
            "{} (bars: order >= {GLOBAL_ORDER}, collapse <= {COLLAPSE_TOL:.0e})",
            lines.join("; ")
        ),
    }
}

// --- 7 ---------------------------------------------------------------

fn compact_forcing() -> CompactForcing<Nonlinearity> {
    CompactForcing::new(
        Nonlinearity::parse("1", 1, 2).unwrap(),
        vec![0.0; 3],
        vec![0.5; 3],
    )
    .unwrap()
}

fn criterion_7() -> Verdict {
    let geo = GrushinGeometry::new(1, 2, 1.0, 2.0).unwrap();
    let rows = whole_space_study(
        &compact_forcing(),
        &geo,
        &[1.0, 1.5, 2.0],
        0.125,
        &SolverConfig::default(),
        |_| {},
    )
    .expect("whole-space study");
    let b: Vec<f64> = rows.iter().map(|r| r.boundary_term.abs()).collect();
    let r: Vec<f64> = rows.iter().map(|r| r.whole_space_residual.abs()).collect();
    Verdict {
        id: 7,
        title: "whole-space study (compact forcing, radii 1, 1.5, 2)",
        pass: is_decreasing(&b) && is_decreasing(&r),
        detail: format!(
            "|boundary term| {}; |boundary-free residual| {}",
            fmt_seq(&b),
            fmt_seq(&r)
        ),
    }
}

// --- 8 ---------------------------------------------------------------

fn criterion_8(runs: &[GrushinRun]) -> Verdict {
    let one = Nonlinearity::parse("1", 1, 2).unwrap();
    let run = &runs[0];
    let kinds = [
        MapKind::Translate(0),
        MapKind::Translate(1),
        MapKind::Translate(2),
        MapKind::Scale,
    ];
    let mut slopes: Vec<Vec<f64>> = vec![Vec::new(); kinds.len()];
    let mut ratios: Vec<f64> = vec![0.0; kinds.len()];
    for (grid, s) in run.grids.iter().zip(&run.solved) {
        let d = subbox(grid, D_VARIATION);
        let cutoff = Cutoff::new(grid, &run.geo, &d, CUTOFF_DELTA).unwrap();
        let (center, radius) = control_ball(&d.aabb(grid));
        let w = s.u.lin_comb(
            1.0,
            &control_bump(grid, &center, radius, 0.25 * s.u.max_abs()),
            1.0,
        );
        for (k, &kind) in kinds.iter().enumerate() {
            let map = VariationMap::new(kind, cutoff.clone(), grid).unwrap();
            let good = stationarity_check(&s.u, &one, &run.geo, 0.0, &map, T0, 3).unwrap();
            let bad = stationarity_check(&w, &one, &run.geo, 0.0, &map, T0, 3).unwrap();
            slopes[k].push(good.slope.abs());
            ratios[k] = bad.slope.abs() / good.slope.abs();
        }
    }
    let mut pass = true;
    let mut lines = Vec::new();
    for (k, kind) in kinds.iter().enumerate() {
        let ok = is_decreasing(&slopes[k]) && ratios[k] >= CONTROL_RATIO;
        pass &= ok;
        lines.push(format!(
            "{kind} |slope| {} control ratio {:.1}{}",
            fmt_seq(&slopes[k]),
            ratios[k],
            if ok { "" } else { " MISSED" }
        ));
    }
    Verdict {
        id: 8,
        title: "stationarity of I(u o Phi_t) (gamma=1, p=2)",
        pass,
        detail: format!(
            "{} (bar: decreasing, control ratio >= {CONTROL_RATIO} on the finest grid)",
            lines.join("; ")
        ),
    }
}

// --- 9 ---------------------------------------------------------------

fn diff4<F: Fn(f64) -> Vec<f64>>(f: F, h: f64) -> Vec<f64> {
    let (a, b, c, d) = (f(2.0 * h), f(h), f(-h), f(-2.0 * h));
    (0..a.len())
        .map(|r| (-a[r] + 8.0 * b[r] - 8.0 * c[r] + d[r]) / (12.0 * h))
        .collect()
}

fn fd_jacobian_det<F: Fn(&[f64]) -> Vec<f64>>(f: F, z: &[f64], h: f64) -> f64 {
    let n = z.len();
    let mut jac = DMatrix::zeros(n, n);
    for k in 0..n {
        let col = diff4(
            |s| {
                let mut w = z.to_vec();
                w[k] += s;
                f(&w)
            },
            h,
        );
        for r in 0..n {
            jac[(r, k)] = col[r];
        }
    }
    jac.determinant()
}

fn forward(map: &VariationMap, t: f64, z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    map.apply_unchecked(t, z, &mut out);
    out
}

/// `Phi_t^-1(z)` by fixed-point iteration on `w = z - t phi(w) e_j` or
/// `w = z / (1 + t phi(w))`.
fn inverse(map: &VariationMap, t: f64, z: &[f64]) -> Vec<f64> {
    let mut w = z.to_vec();
    for _ in 0..500 {
        let phi = map.cutoff.value(&w);
        let next: Vec<f64> = match map.kind {
            MapKind::Translate(j) => {
                let mut v = z.to_vec();
                v[j] -= t * phi;
                v
            }
            MapKind::Scale => z.iter().map(|v| v / (1.0 + t * phi)).collect(),
        };
        let done = next.iter().zip(&w).all(|(a, b)| a == b);
        w = next;
        if done {
            break;
        }
    }
    w
}

/// Samples keep this far from the planes where phi is only C^1; the nested
/// differences reach about 2e-3 across.
const MARGIN: f64 = 1e-2;

fn criterion_9() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let grid = cube(33);
    let gammas = [0.0, 0.5, 1.0, 2.0];
    // worst error: translate det, its inverse t-derivative, then the same for scale
    let mut worst = [0.0f64; 4];
    for (gi, &gamma) in gammas.iter().enumerate() {
        let geo = GrushinGeometry::new(1, 2, gamma, 2.0).unwrap();
        let d = subbox(&grid, ([0.25, -0.25, 0.0], [0.5, 0.25, 0.375]));
        let cutoff = Cutoff::new(&grid, &geo, &d, 0.3).unwrap();
        let per =
            JACOBIAN_SAMPLES / gammas.len() + usize::from(gi < JACOBIAN_SAMPLES % gammas.len());
        let mut taken = 0;
        while taken < per {
            let z: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.2..0.8)).collect();
            let dist = anisotropic_distance(&geo, &z, cutoff.target());
            // skip the thin layers where phi is only C^1
            let near_face = (0..3).any(|k| {
                (z[k] - cutoff.target().lo[k]).abs() < MARGIN
                    || (z[k] - cutoff.target().hi[k]).abs() < MARGIN
            });
            if near_face
                || (dist > 0.0 && dist < 0.05)
                || (dist - cutoff.delta()).abs() < 2.0 * MARGIN
            {
                continue;
            }
            taken += 1;
            let t = rng.gen_range(-0.1..0.1);
            let axis = rng.gen_range(0..3);
            let tr = VariationMap::new(MapKind::Translate(axis), cutoff.clone(), &grid).unwrap();
            let sc = VariationMap::new(MapKind::Scale, cutoff.clone(), &grid).unwrap();
            for (slot, map) in [(0, &tr), (2, &sc)] {
                let fd = fd_jacobian_det(|w| forward(map, t, w), &z, 1e-5);
                worst[slot] = worst[slot].max((map.jacobian_det(t, &z) - fd).abs());
                let fd_dt = diff4(
                    |s| vec![fd_jacobian_det(|w| inverse(map, s, w), &z, 1e-5)],
                    2e-4,
                )[0];
                worst[slot + 1] = worst[slot + 1].max((map.ddet_dt_at_zero(&z) - fd_dt).abs());
            }
        }
    }
    Verdict {
        id: 9,
        title: "Jacobian closed forms vs finite differences",
        pass: worst.iter().all(|&w| w <= JACOBIAN_TOL),
        detail: format!(
            "{JACOBIAN_SAMPLES} samples over gamma in {gammas:?}; worst |error| translate det {:.1e}, \
             translate d/dt det inverse {:.1e}, scale det {:.1e}, scale d/dt det inverse {:.1e} (bar {JACOBIAN_TOL:.0e})",
            worst[0], worst[1], worst[2], worst[3]
        ),
    }
}

// --- 10 --------------------------------------------------------------

fn criterion_10(runs: &[GrushinRun]) -> Verdict {
    let mut lines = Vec::new();
    let mut pass = true;
    let mut check = |name: String, a: &Solved, b: &Solved| {
        let diff = a.u.max_abs_diff(&b.u);
        let bar = UNIQUENESS_FACTOR * a.tol;
        let ok = diff <= bar;
        pass &= ok;
        lines.push(format!(
            "{name} {diff:.1e} (bar {bar:.1e}){}",
            if ok { "" } else { " MISSED" }
        ));
    };
    let random = InitialGuess::Random { seed: 77 };
    let one = Nonlinearity::parse("1", 1, 2).unwrap();
    // torsion oracle configurations
    for p in [2.0, 3.0] {
        let geo = GrushinGeometry::new(1, 2, 0.0, p).unwrap();
        let lift = TorsionOracle::new(&geo, 1.0).unwrap().field(&cube(17));
        let grid = cube(17);
        let a = solve(&one, &geo, &grid, Some(&lift), InitialGuess::Zeros);
        let b = solve(&one, &geo, &grid, Some(&lift), random);
        check(format!("torsion p={p}"), &a, &b);
    }
    // gamma = 1 configurations, every level
    for run in runs {
        for (grid, a) in run.grids.iter().zip(&run.solved) {
            let b = solve(&one, &run.geo, grid, None, random);
            check(
                format!("gamma=1 p={} m={}", run.p, grid.nodes_per_axis()[0]),
                a,
                &b,
            );
        }
    }
    // compact forcing on the whole-space boxes
    let geo = GrushinGeometry::new(1, 2, 1.0, 2.0).unwrap();
    let f = compact_forcing();
    for (r, m) in [(1.0, 17), (1.5, 25), (2.0, 33)] {
        let grid = Grid::cube(3, -r, r, m).unwrap();
        let a = solve(&f, &geo, &grid, None, InitialGuess::Zeros);
        let b = solve(&f, &geo, &grid, None, random);
        check(format!("compact R={r}"), &a, &b);
    }
    Verdict {
        id: 10,
        title: "two initializations agree (uniqueness surrogate)",
        pass,
        detail: lines.join("; "),
    }
}

fn main() {
    let start = Instant::now();
    let mut verdicts = vec![criterion_1(), criterion_2(), criterion_3()];
    let runs = grushin_runs();
    let reports: Vec<_> = runs.iter().map(local_reports).collect();
    verdicts.push(criterion_4(&runs, &reports));
    verdicts.push(criterion_5(&runs, &reports));
    verdicts.push(criterion_6(&runs));
    verdicts.push(criterion_7());
    verdicts.push(criterion_8(&runs));
    verdicts.push(criterion_9());
    verdicts.push(criterion_10(&runs));

    let mut unexpected = Vec::new();
    for v in &verdicts {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        let note = if !v.pass && KNOWN_RED.contains(&v.id) {
            " [known]"
        } else {
            ""
        };
        println!(
            "criterion {:>2} {tag}{note}: {}: {}",
            v.id, v.title, v.detail
        );
        if !v.pass && !KNOWN_RED.contains(&v.id) {
            unexpected.push(v.id);
        }
    }
    println!(
        "acceptance: {}/{} pass in {:.0} s",
        verdicts.iter().filter(|v| v.pass).count(),
        verdicts.len(),
        start.elapsed().as_secs_f64()
    );
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
