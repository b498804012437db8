//! Discrete energy, its exact gradient, and the minimizer that produces weak
//! solutions.
//!
//! The energy `(1/p) int |grad_gamma u|^p - int g u` is discretized cell by
//! cell. Inside a cell every corner gets its own one-sided gradient, built
//! from the cell edges that meet at that corner, with the y-components
//! weighted by `|x|^gamma` at that corner. The cell contributes the average
//! of the `2^n` corner densities times its volume. The source term uses the
//! nodal trapezoid rule.
//!
//! Unlike a one-point (midpoint) gradient per cell, the corner average has no
//! zero-energy checkerboard modes. For `p = 2`, `gamma = 0` it reproduces
//! the standard `2n + 1`-point Laplacian.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{nodal_weights, ScalarField};
use crate::geometry::{Grid, GrushinGeometry, MAX_DIM};
use crate::nonlinearity::Source;
use crate::par;

/// Starting point of the descent on the free nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    Zeros,
    /// Independent uniform values in `[-1, 1]` from a ChaCha8 stream.
    Random {
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Stop once the l2 norm of the mass-lumped residual drops below this.
    /// `None` means `1e-8 * sqrt(node count)`.
    pub tol_grad: Option<f64>,
    pub max_iter: usize,
    /// Regularization of `|grad u|^(p-2)`. `None` means `1e-8` for `p < 2`
    /// and `0` otherwise.
    pub eps_w: Option<f64>,
    pub picard_max: usize,
    pub picard_tol: f64,
    pub init: InitialGuess,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_grad: None,
            max_iter: 200_000,
            eps_w: None,
            picard_max: 50,
            picard_tol: 1e-7,
            init: InitialGuess::Zeros,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.tol_grad {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("tol_grad must be positive, got {t}")));
            }
        }
        if let Some(e) = self.eps_w {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(Error::Config(format!("eps_w must be >= 0, got {e}")));
            }
        }
        if !(self.picard_tol > 0.0 && self.picard_tol.is_finite()) {
            return Err(Error::Config(format!(
                "picard_tol must be positive, got {}",
                self.picard_tol
            )));
        }
        if self.max_iter == 0 || self.picard_max == 0 {
            return Err(Error::Config(
                "max_iter and picard_max must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn tol_grad_for(&self, grid: &Grid) -> f64 {
        self.tol_grad
            .unwrap_or_else(|| 1e-8 * (grid.node_count() as f64).sqrt())
    }

    pub fn eps_w_for(&self, geo: &GrushinGeometry) -> f64 {
        self.eps_w.unwrap_or(if geo.p < 2.0 { 1e-8 } else { 0.0 })
    }
}

/// One accepted descent step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// Energy after the step, accumulated from per-step differences.
    pub energy: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub energy: f64,
    pub grad_norm: f64,
    pub tol_grad: f64,
    pub iterations: usize,
    pub backtracks: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

impl EnergyReport {
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,energy,grad_norm,step")?;
        for r in &self.trace {
            writeln!(
                out,
                "{},{:e},{:e},{:e}",
                r.iteration, r.energy, r.grad_norm, r.step
            )?;
        }
        Ok(())
    }
}

/// Exponents with a closed form cheaper than `powf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Exponent {
    Two,
    Three,
    Four,
    General,
}

impl Exponent {
    fn of(p: f64) -> Self {
        match p {
            2.0 => Self::Two,
            3.0 => Self::Three,
            4.0 => Self::Four,
            _ => Self::General,
        }
    }
}

/// The discrete energy on one grid and its exact derivative.
#[derive(Debug, Clone)]
pub struct DiscreteEnergy {
    grid: Grid,
    geo: GrushinGeometry,
    eps_w: f64,
    kind: Exponent,
    weight: Vec<f64>,
    trap: Vec<f64>,
    offsets: Vec<usize>,
    cell_strides: Vec<usize>,
    cell_bases: Vec<usize>,
    inv_h: Vec<f64>,
    factor: f64,
}

impl DiscreteEnergy {
    pub fn new(grid: &Grid, geo: &GrushinGeometry, eps_w: f64) -> Result<Self> {
        if grid.dim() != geo.dim() {
            return Err(Error::Dimension {
                expected: geo.dim(),
                found: grid.dim(),
            });
        }
        if !(eps_w >= 0.0 && eps_w.is_finite()) {
            return Err(Error::Config(format!("eps_w must be >= 0, got {eps_w}")));
        }
        let n = grid.dim();
        let offsets = (0..1usize << n)
            .map(|c| {
                (0..n)
                    .filter(|k| c >> k & 1 == 1)
                    .map(|k| grid.strides()[k])
                    .sum()
            })
            .collect();
        let mut cell_strides = vec![1; n];
        for k in (0..n - 1).rev() {
            cell_strides[k] = cell_strides[k + 1] * (grid.nodes_per_axis()[k + 1] - 1);
        }
        let trap = par::map_collect(grid.node_count(), |i| grid.trapezoid_weight(i));
        Ok(Self {
            grid: grid.clone(),
            geo: *geo,
            eps_w,
            kind: Exponent::of(geo.p),
            weight: nodal_weights(grid, geo),
            trap,
            offsets,
            cell_strides,
            cell_bases: par::map_collect(grid.cell_count(), |c| grid.cell_base(c)),
            inv_h: grid.spacing().iter().map(|h| 1.0 / h).collect(),
            factor: grid.cell_volume() / (1usize << n) as f64,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn geometry(&self) -> &GrushinGeometry {
        &self.geo
    }

    pub fn eps_w(&self) -> f64 {
        self.eps_w
    }

    /// Nodal trapezoid weights (the lumped mass).
    pub fn mass(&self) -> &[f64] {
        &self.trap
    }

    /// `b^(p/2)`.
    fn pow_half_p(&self, b: f64) -> f64 {
        match self.kind {
            Exponent::Two => b,
            Exponent::Three => b * b.sqrt(),
            Exponent::Four => b * b,
            Exponent::General => b.powf(0.5 * self.geo.p),
        }
    }

    /// `(1 + x)^(p/2) - 1` for `x >= -1`, accurate for small `x`.
    fn growth(&self, x: f64) -> f64 {
        match self.kind {
            Exponent::Two => x,
            Exponent::Three => {
                let a = (1.0 + x).sqrt();
                x * (2.0 + x + a) / (1.0 + a)
            }
            Exponent::Four => x * (2.0 + x),
            Exponent::General => (0.5 * self.geo.p * x.ln_1p()).exp_m1(),
        }
    }

    fn density(&self, s: f64) -> f64 {
        let p = self.geo.p;
        if self.eps_w == 0.0 {
            self.pow_half_p(s) / p
        } else {
            let e2 = self.eps_w * self.eps_w;
            (self.pow_half_p(s + e2) - self.pow_half_p(e2)) / p
        }
    }

    /// `density(s + ds) - density(s)` without cancellation.
    fn density_delta(&self, s: f64, ds: f64) -> f64 {
        let p = self.geo.p;
        let base = s + self.eps_w * self.eps_w;
        if base == 0.0 {
            return self.pow_half_p(ds.max(0.0)) / p;
        }
        self.pow_half_p(base) * self.growth((ds / base).max(-1.0)) / p
    }

    /// Derivative of the density with respect to `a`, divided by `a`:
    /// `(|a|^2 + eps_w^2)^((p-2)/2)`.
    fn coefficient(&self, s: f64) -> f64 {
        let b = s + self.eps_w * self.eps_w;
        match self.kind {
            Exponent::Two => 1.0,
            Exponent::Three => b.sqrt(),
            Exponent::Four => b,
            Exponent::General => b.powf(0.5 * (self.geo.p - 2.0)),
        }
    }

    /// Corner gradient of corner `c` of the cell at `base`; returns `|a|^2`.
    #[inline]
    fn corner_gradient(&self, uc: &[f64], base: usize, c: usize, a: &mut [f64]) -> f64 {
        let w = self.weight[base + self.offsets[c]];
        let mut s = 0.0;
        for k in 0..self.grid.dim() {
            let bit = 1 << k;
            let mut v = (uc[c | bit] - uc[c & !bit]) * self.inv_h[k];
            if !self.geo.is_x_axis(k) {
                v *= w;
            }
            a[k] = v;
            s += v * v;
        }
        s
    }

    fn load_corners(&self, u: &[f64], base: usize, uc: &mut [f64]) {
        for (c, off) in self.offsets.iter().enumerate() {
            uc[c] = u[base + off];
        }
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.grid.node_count() {
            return Err(Error::Dimension {
                expected: self.grid.node_count(),
                found: v.len(),
            });
        }
        Ok(())
    }

    /// `(1/p) int |grad_gamma u|^p` alone.
    pub fn gradient_energy(&self, u: &[f64]) -> f64 {
        let nc = self.offsets.len();
        let d = self.grid.dim();
        par::sum_by_with(
            self.grid.cell_count(),
            || (vec![0.0; nc], [0.0; MAX_DIM]),
            |(uc, a), cell| {
                let base = self.cell_bases[cell];
                self.load_corners(u, base, uc);
                let mut acc = 0.0;
                for c in 0..nc {
                    let s = self.corner_gradient(uc, base, c, &mut a[..d]);
                    acc += self.density(s);
                }
                acc * self.factor
            },
        )
    }

    /// `int g u` with the trapezoid rule.
    pub fn source_work(&self, u: &[f64], g: &[f64]) -> f64 {
        par::sum_by(u.len(), |i| self.trap[i] * g[i] * u[i])
    }

    pub fn energy(&self, u: &[f64], g: &[f64]) -> Result<f64> {
        self.check_len(u)?;
        self.check_len(g)?;
        Ok(self.gradient_energy(u) - self.source_work(u, g))
    }

    /// `I(u + t v) - I(u)`, summed cell by cell from cancellation-free
    /// differences so that it stays accurate when it is tiny compared to
    /// `I(u)`.
    pub fn energy_delta(&self, u: &[f64], v: &[f64], t: f64, g: &[f64]) -> f64 {
        let nc = self.offsets.len();
        let d = self.grid.dim();
        let cells = par::sum_by_with(
            self.grid.cell_count(),
            || (vec![0.0; nc], vec![0.0; nc], [0.0; MAX_DIM], [0.0; MAX_DIM]),
            |(uc, vc, a, b), cell| {
                let base = self.cell_bases[cell];
                self.load_corners(u, base, uc);
                self.load_corners(v, base, vc);
                let mut acc = 0.0;
                for c in 0..nc {
                    let s = self.corner_gradient(uc, base, c, &mut a[..d]);
                    let bb = self.corner_gradient(vc, base, c, &mut b[..d]);
                    let ab: f64 = a[..d].iter().zip(&b[..d]).map(|(x, y)| x * y).sum();
                    acc += self.density_delta(s, t * (2.0 * ab + t * bb));
                }
                acc * self.factor
            },
        );
        cells - t * self.source_work(v, g)
    }

    /// Exact derivative of [`energy`](Self::energy) with respect to every
    /// nodal value, boundary nodes included.
    ///
    /// With `p < 2` and `eps_w = 0` the derivative is still defined but the
    /// coefficient `|grad u|^(p-2)` is not; a vanishing corner gradient is
    /// then reported as [`Error::SingularWeight`].
    pub fn gradient(&self, u: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u)?;
        self.check_len(g)?;
        let nc = self.offsets.len();
        let d = self.grid.dim();
        let singular = self.geo.p < 2.0 && self.eps_w == 0.0;
        let bad = AtomicUsize::new(usize::MAX);
        let mut contrib = vec![0.0; self.grid.cell_count() * nc];
        par::fill_blocks_with(
            &mut contrib,
            nc,
            || (vec![0.0; nc], [0.0; MAX_DIM]),
            |(uc, a), cell, out| {
                let base = self.cell_bases[cell];
                self.load_corners(u, base, uc);
                for c in 0..nc {
                    let s = self.corner_gradient(uc, base, c, &mut a[..d]);
                    if singular && s == 0.0 {
                        bad.fetch_min(base + self.offsets[c], Ordering::Relaxed);
                        continue;
                    }
                    let coef = self.factor * self.coefficient(s);
                    let w = self.weight[base + self.offsets[c]];
                    for k in 0..d {
                        let bit = 1 << k;
                        let chain = if self.geo.is_x_axis(k) { 1.0 } else { w };
                        let q = coef * a[k] * chain * self.inv_h[k];
                        out[c | bit] += q;
                        out[c & !bit] -= q;
                    }
                }
            },
        );
        let node = bad.load(Ordering::Relaxed);
        if node != usize::MAX {
            return Err(Error::SingularWeight {
                p: self.geo.p,
                node,
            });
        }
        let mut grad = vec![0.0; self.grid.node_count()];
        par::fill(&mut grad, |idx| {
            let mut mi = [0usize; MAX_DIM];
            self.grid.multi_index_into(idx, &mut mi);
            let mut acc = 0.0;
            'corners: for c in 0..nc {
                let mut cell = 0;
                for k in 0..d {
                    let b = c >> k & 1;
                    if mi[k] < b || mi[k] - b + 1 >= self.grid.nodes_per_axis()[k] {
                        continue 'corners;
                    }
                    cell += (mi[k] - b) * self.cell_strides[k];
                }
                acc += contrib[cell * nc + c];
            }
            acc - self.trap[idx] * g[idx]
        });
        Ok(grad)
    }

    /// `gradient / mass`: a nodal approximation of `-Delta_gamma^p u - g`.
    pub fn residual(&self, grad: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; grad.len()];
        par::fill(&mut r, |i| grad[i] / self.trap[i]);
        r
    }
}

/// `I(u)` for Dirichlet data; see the module docs for the discretization.
pub fn energy(u: &ScalarField, g: &ScalarField, geo: &GrushinGeometry, eps_w: f64) -> Result<f64> {
    DiscreteEnergy::new(u.grid(), geo, eps_w)?.energy(u.values(), g.values())
}

/// Exact gradient of [`energy`] with respect to the free (interior) nodal
/// values; zero on the outer boundary.
pub fn energy_gradient(
    u: &ScalarField,
    g: &ScalarField,
    geo: &GrushinGeometry,
    eps_w: f64,
) -> Result<ScalarField> {
    let grid = u.grid();
    let mut grad = DiscreteEnergy::new(grid, geo, eps_w)?.gradient(u.values(), g.values())?;
    for (i, v) in grad.iter_mut().enumerate() {
        if grid.is_boundary(i) {
            *v = 0.0;
        }
    }
    ScalarField::from_values(grid, grad)
}

/// Optional inputs to [`minimize_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Start<'a> {
    /// Values imposed on the outer boundary (zero when absent).
    pub boundary: Option<&'a ScalarField>,
    /// Interior starting values, overriding the configured initial guess.
    pub guess: Option<&'a ScalarField>,
}

/// Minimizes `I` with zero boundary values.
pub fn minimize(
    g: &ScalarField,
    geo: &GrushinGeometry,
    cfg: &SolverConfig,
) -> Result<(ScalarField, EnergyReport)> {
    minimize_with(g, geo, cfg, Start::default())
}

/// Gradient descent along the mass-lumped residual with Barzilai-Borwein
/// step seeding and monotone Armijo backtracking (`c = 1e-4`, halving).
pub fn minimize_with(
    g: &ScalarField,
    geo: &GrushinGeometry,
    cfg: &SolverConfig,
    start: Start<'_>,
) -> Result<(ScalarField, EnergyReport)> {
    const ARMIJO: f64 = 1e-4;
    const MAX_HALVINGS: usize = 60;
    cfg.validate()?;
    let grid = g.grid();
    if g.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Range("source g is not finite everywhere".into()));
    }
    let eps_w = cfg.eps_w_for(geo);
    let tol = cfg.tol_grad_for(grid);
    let e = DiscreteEnergy::new(grid, geo, eps_w)?;
    let free: Vec<bool> = (0..grid.node_count())
        .map(|i| !grid.is_boundary(i))
        .collect();

    let mut u = initial_values(grid, cfg.init, start)?;
    let gv = g.values();
    let mut grad = e.gradient(&u, gv)?;
    let mut r = masked_residual(&e, &grad, &free);
    let mut gnorm = norm(&r);
    let mut energy = e.energy(&u, gv)?;
    let mut trace = Vec::new();
    let mut backtracks = 0;
    let mut iterations = 0;
    let h_min = grid.spacing().iter().cloned().fold(f64::INFINITY, f64::min);
    let mut alpha = h_min * h_min / (2.0 * grid.dim() as f64);
    let mut dir = vec![0.0; u.len()];
    let mut stalled = false;

    while gnorm > tol && iterations < cfg.max_iter {
        par::fill(&mut dir, |i| -r[i]);
        let slope = -par::sum_by(u.len(), |i| grad[i] * r[i]);
        let mut step = alpha;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let de = e.energy_delta(&u, &dir, step, gv);
            if de <= ARMIJO * step * slope {
                accepted = Some(de);
                break;
            }
            step *= 0.5;
            backtracks += 1;
        }
        let Some(de) = accepted else {
            stalled = true;
            break;
        };
        let u_new: Vec<f64> = par::map_collect(u.len(), |i| u[i] + step * dir[i]);
        let grad_new = e.gradient(&u_new, gv)?;
        let r_new = masked_residual(&e, &grad_new, &free);
        let ss = step * step * par::sum_by(u.len(), |i| dir[i] * dir[i]);
        let sy = step * par::sum_by(u.len(), |i| dir[i] * (r_new[i] - r[i]));
        let yy = par::sum_by(u.len(), |i| (r_new[i] - r[i]).powi(2));
        // adaptive choice between the long and the short BB step
        alpha = if sy > 0.0 {
            let (long, short) = (ss / sy, sy / yy);
            if short < 0.5 * long {
                short
            } else {
                long
            }
        } else {
            2.0 * step
        };
        u = u_new;
        grad = grad_new;
        r = r_new;
        gnorm = norm(&r);
        energy += de;
        iterations += 1;
        trace.push(TraceRow {
            iteration: iterations,
            energy,
            grad_norm: gnorm,
            step,
        });
    }
    let converged = gnorm <= tol && !stalled;
    let report = EnergyReport {
        energy: e.energy(&u, gv)?,
        grad_norm: gnorm,
        tol_grad: tol,
        iterations,
        backtracks,
        converged,
        trace,
    };
    let mut field = ScalarField::from_values(grid, u)?;
    if start.boundary.is_none() {
        field.enforce_dirichlet();
    }
    Ok((field, report))
}

fn initial_values(grid: &Grid, init: InitialGuess, start: Start<'_>) -> Result<Vec<f64>> {
    for f in [start.boundary, start.guess].into_iter().flatten() {
        if f.grid() != grid {
            return Err(Error::Grid(
                "starting field lives on a different grid".into(),
            ));
        }
    }
    let mut u = match (start.guess, init) {
        (Some(f), _) => f.values().to_vec(),
        (None, InitialGuess::Zeros) => vec![0.0; grid.node_count()],
        (None, InitialGuess::Random { seed }) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..grid.node_count())
                .map(|_| rng.gen_range(-1.0..=1.0))
                .collect()
        }
    };
    for (i, v) in u.iter_mut().enumerate() {
        if grid.is_boundary(i) {
            *v = start.boundary.map_or(0.0, |b| b.values()[i]);
        }
    }
    Ok(u)
}

fn masked_residual(e: &DiscreteEnergy, grad: &[f64], free: &[bool]) -> Vec<f64> {
    let mut r = e.residual(grad);
    for (v, &f) in r.iter_mut().zip(free) {
        if !f {
            *v = 0.0;
        }
    }
    r
}

fn norm(v: &[f64]) -> f64 {
    par::sum_by(v.len(), |i| v[i] * v[i]).sqrt()
}

/// Samples `f(z, u(z))` at every node.
pub fn sample_source<S: Source + ?Sized>(source: &S, u: &ScalarField) -> ScalarField {
    let grid = u.grid();
    let d = grid.dim();
    let uv = u.values();
    ScalarField::from_values(grid, {
        let mut out = vec![0.0; grid.node_count()];
        par::fill(&mut out, |i| {
            let mut z = [0.0; MAX_DIM];
            grid.point_into(i, &mut z);
            source.f(&z[..d], uv[i])
        });
        out
    })
    .expect("same grid")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PicardStep {
    pub iteration: usize,
    /// Max-norm change of the iterate.
    pub change: f64,
    pub inner: EnergyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PicardTrace {
    pub steps: Vec<PicardStep>,
    pub converged: bool,
}

/// Freezes `g_k = f(z, u_k)` and re-minimizes until the iterates settle.
///
/// A source without `u` dependence takes exactly one minimization. The
/// iteration aborts with [`Error::PicardDiverged`] once the change has grown
/// three times in a row, and with [`Error::NotConverged`] when an inner
/// minimization fails.
pub fn picard_solve<S: Source + ?Sized>(
    source: &S,
    geo: &GrushinGeometry,
    grid: &Grid,
    cfg: &SolverConfig,
) -> Result<(ScalarField, PicardTrace)> {
    picard_solve_with(source, geo, grid, cfg, None)
}

pub fn picard_solve_with<S: Source + ?Sized>(
    source: &S,
    geo: &GrushinGeometry,
    grid: &Grid,
    cfg: &SolverConfig,
    boundary: Option<&ScalarField>,
) -> Result<(ScalarField, PicardTrace)> {
    cfg.validate()?;
    if source.dim() != grid.dim() {
        return Err(Error::Dimension {
            expected: grid.dim(),
            found: source.dim(),
        });
    }
    let mut u = match boundary {
        Some(b) => b.clone(),
        None => ScalarField::zeros(grid),
    };
    let mut steps: Vec<PicardStep> = Vec::new();
    let mut growth = 0;
    for it in 1..=cfg.picard_max {
        let g = sample_source(source, &u);
        let start = Start {
            boundary,
            guess: if it == 1 { None } else { Some(&u) },
        };
        let (next, inner) = minimize_with(&g, geo, cfg, start)?;
        if !inner.converged {
            return Err(Error::NotConverged(format!(
                "inner minimization {it} stopped at residual {:e} > {:e} after {} iterations",
                inner.grad_norm, inner.tol_grad, inner.iterations
            )));
        }
        let change = next.max_abs_diff(&u);
        if let Some(last) = steps.last() {
            growth = if change > last.change { growth + 1 } else { 0 };
        }
        u = next;
        steps.push(PicardStep {
            iteration: it,
            change,
            inner,
        });
        if !source.depends_on_u() || change <= cfg.picard_tol {
            return Ok((
                u,
                PicardTrace {
                    steps,
                    converged: true,
                },
            ));
        }
        if growth >= 3 {
            return Err(Error::PicardDiverged {
                iterations: it,
                last_change: change,
            });
        }
    }
    Ok((
        u,
        PicardTrace {
            steps,
            converged: false,
        },
    ))
}

/// `int |u|^p / int |grad_gamma u|^p`, both with the discretization of the
/// energy.
pub fn poincare_ratio(u: &ScalarField, geo: &GrushinGeometry) -> Result<f64> {
    let grid = u.grid();
    let e = DiscreteEnergy::new(grid, geo, 0.0)?;
    let v = u.values();
    let num = par::sum_by(v.len(), |i| e.trap[i] * v[i].abs().powf(geo.p));
    let den = geo.p * e.gradient_energy(v);
    if num == 0.0 || den == 0.0 {
        return Err(Error::UndefinedRatio(
            "the field vanishes identically (or has no gradient)".into(),
        ));
    }
    Ok(num / den)
}

/// Largest [`poincare_ratio`] over `samples` random Dirichlet fields.
pub fn poincare_sample(
    grid: &Grid,
    geo: &GrushinGeometry,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let vals: Vec<f64> = (0..grid.node_count())
            .map(|_| rng.gen_range(-1.0..=1.0))
            .collect();
        let mut u = ScalarField::from_values(grid, vals)?;
        u.enforce_dirichlet();
        best = best.max(poincare_ratio(&u, geo)?);
    }
    Ok(best)
}

/// Radial solution of `-Delta_p u = 1` in `R^n` vanishing on `|z| = R`:
/// `u(r) = ((p-1)/p) n^(-1/(p-1)) (R^(p/(p-1)) - r^(p/(p-1)))`.
///
/// The formula solves the equation at every `r > 0`, so it also serves as
/// Dirichlet data outside the ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorsionOracle {
    pub dim: usize,
    pub radius: f64,
    pub p: f64,
    pub center: [f64; MAX_DIM],
}

impl TorsionOracle {
    pub fn new(geo: &GrushinGeometry, radius: f64) -> Result<Self> {
        if geo.gamma != 0.0 {
            return Err(Error::Oracle(format!(
                "the torsion oracle needs gamma = 0, got {}",
                geo.gamma
            )));
        }
        if !(radius > 0.0) {
            return Err(Error::Oracle(format!(
                "radius must be positive, got {radius}"
            )));
        }
        Ok(Self {
            dim: geo.dim(),
            radius,
            p: geo.p,
            center: [0.0; MAX_DIM],
        })
    }

    fn r(&self, z: &[f64]) -> f64 {
        (0..self.dim)
            .map(|k| (z[k] - self.center[k]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn scale(&self) -> f64 {
        (self.dim as f64).powf(-1.0 / (self.p - 1.0))
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let q = self.p / (self.p - 1.0);
        (self.p - 1.0) / self.p * self.scale() * (self.radius.powf(q) - self.r(z).powf(q))
    }

    /// Euclidean gradient: `-n^(-1/(p-1)) r^(1/(p-1)) z/r`.
    pub fn gradient(&self, z: &[f64], out: &mut [f64]) {
        let r = self.r(z);
        if r == 0.0 {
            out[..self.dim].iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let m = -self.scale() * r.powf(1.0 / (self.p - 1.0)) / r;
        for k in 0..self.dim {
            out[k] = m * (z[k] - self.center[k]);
        }
    }

    pub fn field(&self, grid: &Grid) -> ScalarField {
        ScalarField::from_fn(grid, |z| self.value(z))
    }
}
