//! Term-by-term assembly of the local translating and scaling identities,
//! the global scaling identity on the whole grid, and the growing-domain
//! study behind the whole-space identity.
//!
//! Notation: `a = grad_gamma u`, `A = (|a|^2 + eps_w^2)^((p-2)/2)`,
//! `n = N + l`, `nu` the outward box normal and `nu_gamma = (nu_x, |x|^gamma
//! nu_y)`, so that `<a, nu_gamma> = u_x . nu_x + |x|^(2 gamma) u_y . nu_y`.
//!
//! Volume integrands use centered differences; surface integrands use
//! differences restricted to the subdomain, one-sided on its faces. Terms are
//! named `lhs.t1, lhs.t2, ...` and `rhs.t1, ...` in the reading order of each
//! identity.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fields::{region_gradient_at, ScalarField};
use crate::geometry::{Face, Grid, GrushinGeometry, SubBox, MAX_DIM};
use crate::nonlinearity::Source;
use crate::par;
use crate::quadrature::{surface_integral_fn, volume_integral};
use crate::solver::{picard_solve, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentityKind {
    /// Translation along `x_i` (0-based axis).
    TranslateX(usize),
    /// Translation along `y_j` (0-based within the y block).
    TranslateY(usize),
    ScaleLocal,
    /// `int_D |a|^p = int_D f u + oint A u <a, nu_gamma>`.
    Auxiliary,
    ScaleGlobal,
    /// The global identity with its boundary term dropped.
    WholeSpace,
}

impl fmt::Display for IdentityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TranslateX(i) => write!(f, "translate-x({})", i + 1),
            Self::TranslateY(j) => write!(f, "translate-y({})", j + 1),
            Self::ScaleLocal => f.write_str("scale-local"),
            Self::Auxiliary => f.write_str("auxiliary"),
            Self::ScaleGlobal => f.write_str("scale-global"),
            Self::WholeSpace => f.write_str("whole-space"),
        }
    }
}

impl Serialize for IdentityKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridInfo {
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub kind: IdentityKind,
    pub grid: GridInfo,
    pub terms: BTreeMap<String, f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub relative_residual: f64,
}

impl IdentityReport {
    fn new(kind: IdentityKind, grid: &Grid, lhs: &[f64], rhs: &[f64]) -> Self {
        let mut terms = BTreeMap::new();
        for (side, vals) in [("lhs", lhs), ("rhs", rhs)] {
            for (k, v) in vals.iter().enumerate() {
                // + 0.0 turns -0.0 into 0.0
                terms.insert(format!("{side}.t{}", k + 1), *v + 0.0);
            }
        }
        let l = par::pairwise_sum(lhs);
        let r = par::pairwise_sum(rhs);
        let scale = par::pairwise_sum(&lhs.iter().chain(rhs).map(|v| v.abs()).collect::<Vec<_>>());
        let residual = l - r;
        Self {
            kind,
            grid: GridInfo {
                h: grid.spacing().to_vec(),
            },
            terms,
            lhs: l,
            rhs: r,
            residual,
            relative_residual: if scale == 0.0 {
                0.0
            } else {
                residual.abs() / scale
            },
        }
    }

    pub fn term(&self, name: &str) -> f64 {
        self.terms.get(name).copied().unwrap_or(0.0)
    }

    /// Terms of one side (`"lhs"` or `"rhs"`) in reading order.
    pub fn side(&self, side: &str) -> Vec<f64> {
        let prefix = format!("{side}.t");
        let mut v: Vec<(usize, f64)> = self
            .terms
            .iter()
            .filter_map(|(k, &x)| k.strip_prefix(&prefix).map(|i| (i.parse().unwrap_or(0), x)))
            .collect();
        v.sort_by_key(|e| e.0);
        v.into_iter().map(|e| e.1).collect()
    }

    /// Largest spacing, the `h` of convergence tables.
    pub fn h(&self) -> f64 {
        self.grid.h.iter().cloned().fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn csv_header(&self) -> String {
        let names: Vec<&str> = self.terms.keys().map(|s| s.as_str()).collect();
        format!(
            "kind,h,{},lhs,rhs,residual,relative_residual",
            names.join(",")
        )
    }

    pub fn csv_row(&self) -> String {
        let vals: Vec<String> = self.terms.values().map(|v| format!("{v:e}")).collect();
        format!(
            "{},{},{},{:e},{:e},{:e},{:e}",
            self.kind,
            self.h(),
            vals.join(","),
            self.lhs,
            self.rhs,
            self.residual,
            self.relative_residual
        )
    }
}

/// A solved field with everything the identities need.
pub struct Problem<'a, S: Source + ?Sized> {
    pub u: &'a ScalarField,
    pub source: &'a S,
    pub geo: &'a GrushinGeometry,
    /// Regularization of `A`; 0 unless `p < 2`.
    pub eps_w: f64,
}

/// Pointwise quantities at one node.
struct Local {
    z: [f64; MAX_DIM],
    /// Euclidean gradient.
    du: [f64; MAX_DIM],
    u: f64,
    /// `|x|^gamma`.
    w: f64,
    /// `|a|^2`.
    s: f64,
    /// `|nabla_y u|^2`.
    dy2: f64,
}

impl<S: Source + ?Sized> Problem<'_, S> {
    pub fn new<'a>(
        u: &'a ScalarField,
        source: &'a S,
        geo: &'a GrushinGeometry,
        eps_w: f64,
    ) -> Result<Problem<'a, S>> {
        let d = u.grid().dim();
        if d != geo.dim() || source.dim() != d {
            return Err(Error::Dimension {
                expected: geo.dim(),
                found: if d != geo.dim() { d } else { source.dim() },
            });
        }
        if !(eps_w >= 0.0) {
            return Err(Error::Config(format!("eps_w must be >= 0, got {eps_w}")));
        }
        Ok(Problem {
            u,
            source,
            geo,
            eps_w,
        })
    }

    fn grid(&self) -> &Grid {
        self.u.grid()
    }

    fn dim(&self) -> usize {
        self.geo.dim()
    }

    fn local(&self, idx: usize, region: &SubBox) -> Local {
        let grid = self.grid();
        let d = self.dim();
        let mut z = [0.0; MAX_DIM];
        let mut du = [0.0; MAX_DIM];
        grid.point_into(idx, &mut z);
        region_gradient_at(grid, region, self.u.values(), idx, &mut du);
        let w = self.geo.weight_at(&z[..d]);
        let dx2: f64 = du[..self.geo.n_x].iter().map(|v| v * v).sum();
        let dy2: f64 = du[self.geo.n_x..d].iter().map(|v| v * v).sum();
        Local {
            z,
            du,
            u: self.u.values()[idx],
            w,
            s: dx2 + w * w * dy2,
            dy2,
        }
    }

    /// `A = (|a|^2 + eps_w^2)^((p-2)/2)`.
    fn coef(&self, s: f64) -> f64 {
        let p = self.geo.p;
        if p == 2.0 {
            1.0
        } else {
            (s + self.eps_w * self.eps_w).powf(0.5 * (p - 2.0))
        }
    }

    /// `|a|^p`.
    fn apow(&self, s: f64) -> f64 {
        if self.geo.p == 2.0 {
            s
        } else {
            s.powf(0.5 * self.geo.p)
        }
    }

    /// `<a, nu_gamma>` on `face`.
    fn flux(&self, l: &Local, face: Face) -> f64 {
        let c = face.sign() * l.du[face.axis];
        if self.geo.is_x_axis(face.axis) {
            c
        } else {
            l.w * l.w * c
        }
    }

    fn volume<F>(&self, d: &SubBox, f: F) -> f64
    where
        F: Fn(&Local) -> f64 + Sync + Send,
    {
        let grid = self.grid();
        let whole = SubBox::whole(grid);
        volume_integral(grid, d, |idx| f(&self.local(idx, &whole))).value
    }

    fn surface<F>(&self, d: &SubBox, f: F) -> f64
    where
        F: Fn(&Local, Face) -> f64 + Sync + Send,
    {
        let grid = self.grid();
        surface_integral_fn(grid, d, |face, idx| f(&self.local(idx, d), face))
    }

    fn f_at(&self, l: &Local) -> f64 {
        self.source.f(&l.z[..self.dim()], l.u)
    }

    fn big_f_at(&self, l: &Local) -> f64 {
        self.source.antiderivative(&l.z[..self.dim()], l.u)
    }

    fn grad_z_big_f(&self, l: &Local, out: &mut [f64]) {
        self.source
            .grad_z_antiderivative(&l.z[..self.dim()], l.u, out)
    }

    fn check_box(&self, d: &SubBox) -> Result<()> {
        let grid = self.grid();
        if d.dim() != grid.dim() {
            return Err(Error::Dimension {
                expected: grid.dim(),
                found: d.dim(),
            });
        }
        if d.extent().iter().any(|&e| e < 3) {
            return Err(Error::SubBox(
                "identities need at least 3 nodes per axis in the subdomain".into(),
            ));
        }
        if !d.is_interior(grid) {
            return Err(Error::SubBox(
                "local identities need the subdomain strictly inside the grid".into(),
            ));
        }
        Ok(())
    }

    /// Rejects subdomains reaching into `|x| < h` when `0 < gamma < 1`,
    /// where `|x|^(2 (gamma - 1))` is unbounded.
    fn check_slab(&self, d: &SubBox) -> Result<()> {
        let g = self.geo.gamma;
        if !(g > 0.0 && g < 1.0) {
            return Ok(());
        }
        let grid = self.grid();
        let aabb = d.aabb(grid);
        let mut dist2 = 0.0;
        let mut clearance: f64 = 0.0;
        for k in 0..self.geo.n_x {
            let c = 0.0f64.clamp(aabb.lo[k], aabb.hi[k]);
            dist2 += c * c;
            clearance = clearance.max(grid.spacing()[k]);
        }
        let min_abs_x = dist2.sqrt();
        if min_abs_x < clearance {
            return Err(Error::SingularSlab {
                gamma: g,
                min_abs_x,
                clearance,
            });
        }
        Ok(())
    }

    /// Translation along `x_i` (0-based, `i < N`).
    pub fn translate_x(&self, d: &SubBox, i: usize) -> Result<IdentityReport> {
        if i >= self.geo.n_x {
            return Err(Error::Range(format!(
                "x axis {} out of range 1..={}",
                i + 1,
                self.geo.n_x
            )));
        }
        self.check_box(d)?;
        self.check_slab(d)?;
        Ok(self.translate(d, i, IdentityKind::TranslateX(i)))
    }

    /// Translation along `y_j` (0-based, `j < l`).
    pub fn translate_y(&self, d: &SubBox, j: usize) -> Result<IdentityReport> {
        if j >= self.geo.n_y {
            return Err(Error::Range(format!(
                "y axis {} out of range 1..={}",
                j + 1,
                self.geo.n_y
            )));
        }
        self.check_box(d)?;
        Ok(self.translate(d, self.geo.n_x + j, IdentityKind::TranslateY(j)))
    }

    fn translate(&self, d: &SubBox, axis: usize, kind: IdentityKind) -> IdentityReport {
        let p = self.geo.p;
        let g = self.geo.gamma;
        let normal = |face: Face| if face.axis == axis { face.sign() } else { 0.0 };
        let t1 = self.surface(d, |l, face| self.apow(l.s) * normal(face) / p);
        let t2 = -self.surface(d, |l, face| {
            self.coef(l.s) * l.du[axis] * self.flux(l, face)
        });
        let mut lhs = vec![t1, t2];
        if let IdentityKind::TranslateX(_) = kind {
            // the gamma factor makes this term vanish identically at gamma = 0
            let t3 = if g == 0.0 {
                0.0
            } else {
                -self.volume(d, |l| {
                    let x = self.geo.x_norm(&l.z);
                    self.coef(l.s) * g * x.powf(2.0 * (g - 1.0)) * l.z[axis] * l.dy2
                })
            };
            lhs.push(t3);
        }
        let r1 = self.surface(d, |l, face| self.big_f_at(l) * normal(face));
        let r2 = -self.volume(d, |l| {
            let mut grad = [0.0; MAX_DIM];
            self.grad_z_big_f(l, &mut grad);
            grad[axis]
        });
        IdentityReport::new(kind, self.grid(), &lhs, &[r1, r2])
    }

    fn z_dot_nu(l: &Local, face: Face) -> f64 {
        face.sign() * l.z[face.axis]
    }

    fn gamma_volume(&self, d: &SubBox) -> f64 {
        let g = self.geo.gamma;
        if g == 0.0 {
            return 0.0;
        }
        -self.volume(d, |l| self.coef(l.s) * g * l.w * l.w * l.dy2)
    }

    fn scaling_rhs_volume(&self, d: &SubBox) -> (f64, f64) {
        let n = self.dim();
        let big_f = -(n as f64) * self.volume(d, |l| self.big_f_at(l));
        let z_grad = -self.volume(d, |l| {
            let mut grad = [0.0; MAX_DIM];
            self.grad_z_big_f(l, &mut grad);
            (0..n).map(|k| grad[k] * l.z[k]).sum()
        });
        (big_f, z_grad)
    }

    /// The local scaling identity on `d`.
    pub fn scale_local(&self, d: &SubBox) -> Result<IdentityReport> {
        self.check_box(d)?;
        let p = self.geo.p;
        let n = self.dim();
        let c = 1.0 - n as f64 / p;
        let t1 = c * self.volume(d, |l| self.f_at(l) * l.u);
        let t2 = c * self.surface(d, |l, face| self.coef(l.s) * l.u * self.flux(l, face));
        let t3 = self.surface(d, |l, face| self.apow(l.s) * Self::z_dot_nu(l, face) / p);
        let t4 = -self.surface(d, |l, face| {
            let dz: f64 = (0..n).map(|k| l.du[k] * l.z[k]).sum();
            self.coef(l.s) * dz * self.flux(l, face)
        });
        let t5 = self.gamma_volume(d);
        let r1 = self.surface(d, |l, face| self.big_f_at(l) * Self::z_dot_nu(l, face));
        let (r2, r3) = self.scaling_rhs_volume(d);
        Ok(IdentityReport::new(
            IdentityKind::ScaleLocal,
            self.grid(),
            &[t1, t2, t3, t4, t5],
            &[r1, r2, r3],
        ))
    }

    /// `int_D |a|^p = int_D f u + oint A u <a, nu_gamma>`.
    pub fn auxiliary(&self, d: &SubBox) -> Result<IdentityReport> {
        self.check_box(d)?;
        let t1 = self.volume(d, |l| self.apow(l.s));
        let r1 = self.volume(d, |l| self.f_at(l) * l.u);
        let r2 = self.surface(d, |l, face| self.coef(l.s) * l.u * self.flux(l, face));
        Ok(IdentityReport::new(
            IdentityKind::Auxiliary,
            self.grid(),
            &[t1],
            &[r1, r2],
        ))
    }

    /// The global scaling identity on the whole grid, with the boundary term
    /// in its collapsed form `(1/p - 1) oint |a|^p <z, nu>`.
    pub fn scale_global(&self) -> Result<IdentityReport> {
        let whole = SubBox::whole(self.grid());
        let p = self.geo.p;
        let n = self.dim();
        let t1 = (1.0 - n as f64 / p) * self.volume(&whole, |l| self.f_at(l) * l.u);
        let t2 = (1.0 / p - 1.0)
            * self.surface(&whole, |l, face| self.apow(l.s) * Self::z_dot_nu(l, face));
        let t3 = self.gamma_volume(&whole);
        let (r1, r2) = self.scaling_rhs_volume(&whole);
        Ok(IdentityReport::new(
            IdentityKind::ScaleGlobal,
            self.grid(),
            &[t1, t2, t3],
            &[r1, r2],
        ))
    }

    /// The global identity without its boundary term.
    pub fn whole_space(&self) -> Result<IdentityReport> {
        let g = self.scale_global()?;
        Ok(IdentityReport::new(
            IdentityKind::WholeSpace,
            self.grid(),
            &[g.term("lhs.t1"), g.term("lhs.t3")],
            &g.side("rhs"),
        ))
    }

    /// Both sides of the boundary collapse on the outer boundary, node by
    /// node: `A <grad u, z> <a, nu_gamma>` and `|a|^p <z, nu>`. Returns the
    /// integrated pair and the largest nodal difference.
    pub fn collapse_check(&self) -> CollapseCheck {
        let grid = self.grid();
        let whole = SubBox::whole(grid);
        let n = self.dim();
        let full = |l: &Local, face: Face| {
            let dz: f64 = (0..n).map(|k| l.du[k] * l.z[k]).sum();
            self.coef(l.s) * dz * self.flux(l, face)
        };
        let collapsed = |l: &Local, face: Face| self.apow(l.s) * Self::z_dot_nu(l, face);
        let mut max_diff: f64 = 0.0;
        for face in whole.faces() {
            for i in 0..whole.face_node_count(face) {
                let l = self.local(whole.face_node_at(grid, face, i), &whole);
                max_diff = max_diff.max((full(&l, face) - collapsed(&l, face)).abs());
            }
        }
        CollapseCheck {
            full: self.surface(&whole, full),
            collapsed: self.surface(&whole, collapsed),
            max_nodal_difference: max_diff,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollapseCheck {
    pub full: f64,
    pub collapsed: f64,
    pub max_nodal_difference: f64,
}

/// One row of the growing-domain study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WholeSpaceRow {
    pub radius: f64,
    pub nodes_per_axis: usize,
    /// `(1/p - 1) oint |a|^p <z, nu>` on the outer boundary.
    pub boundary_term: f64,
    pub global_residual: f64,
    /// Residual of the identity with the boundary term dropped.
    pub whole_space_residual: f64,
    pub whole_space_relative: f64,
    pub iterations: usize,
}

impl WholeSpaceRow {
    pub const CSV_HEADER: &'static str =
        "radius,nodes_per_axis,boundary_term,global_residual,whole_space_residual,whole_space_relative,iterations";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:e},{:e},{}",
            self.radius,
            self.nodes_per_axis,
            self.boundary_term,
            self.global_residual,
            self.whole_space_residual,
            self.whole_space_relative,
            self.iterations
        )
    }
}

/// Solves on `[-R, R]^n` for each radius at the fixed spacing `h` and
/// reports the global boundary term and the boundary-free residual.
///
/// `on_row` sees each row as soon as it is computed, so callers can persist
/// partial results. A failed solve aborts the study.
pub fn whole_space_study<S, F>(
    source: &S,
    geo: &GrushinGeometry,
    radii: &[f64],
    h: f64,
    cfg: &SolverConfig,
    mut on_row: F,
) -> Result<Vec<WholeSpaceRow>>
where
    S: Source + ?Sized,
    F: FnMut(&WholeSpaceRow),
{
    if !(h > 0.0) {
        return Err(Error::Config(format!("spacing must be positive, got {h}")));
    }
    let mut rows = Vec::with_capacity(radii.len());
    for &radius in radii {
        let cells = (2.0 * radius / h).round();
        if !(radius > 0.0) || (cells * h - 2.0 * radius).abs() > 1e-9 * radius {
            return Err(Error::Config(format!(
                "radius {radius} is not a positive multiple of h/2 = {}",
                h / 2.0
            )));
        }
        let m = cells as usize + 1;
        let grid = Grid::cube(geo.dim(), -radius, radius, m)?;
        let (u, trace) = picard_solve(source, geo, &grid, cfg)?;
        let last = trace.steps.last().expect("at least one step");
        if !trace.converged || !last.inner.converged {
            return Err(Error::NotConverged(format!(
                "solve on radius {radius} did not converge"
            )));
        }
        let prob = Problem::new(&u, source, geo, cfg.eps_w_for(geo))?;
        let global = prob.scale_global()?;
        let ws = prob.whole_space()?;
        let row = WholeSpaceRow {
            radius,
            nodes_per_axis: m,
            boundary_term: global.term("lhs.t2"),
            global_residual: global.residual,
            whole_space_residual: ws.residual,
            whole_space_relative: ws.relative_residual,
            iterations: trace.steps.iter().map(|s| s.inner.iterations).sum(),
        };
        on_row(&row);
        rows.push(row);
    }
    Ok(rows)
}

/// Writes reports as a CSV table (header from the first report).
pub fn write_reports_csv<W: Write>(reports: &[IdentityReport], mut out: W) -> std::io::Result<()> {
    if let Some(first) = reports.first() {
        writeln!(out, "{}", first.csv_header())?;
    }
    for r in reports {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}
