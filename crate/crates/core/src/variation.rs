//! Domain variations `Phi_t`, their Jacobians, the cutoff `phi`, and a direct
//! check that `t -> I(u o Phi_t)` is stationary at `t = 0`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::geometry::{
    anisotropic_distance, delta_shell, Aabb, Grid, GrushinGeometry, SubBox, MAX_DIM,
};
use crate::nonlinearity::Source;
use crate::par;
use crate::solver::DiscreteEnergy;

/// `B(s) = 1 - 3 s^2 + 2 s^3` on `[0, 1]`, 1 below and 0 above.
fn blend(s: f64) -> (f64, f64) {
    if s <= 0.0 {
        (1.0, 0.0)
    } else if s >= 1.0 {
        (0.0, 0.0)
    } else {
        (1.0 - s * s * (3.0 - 2.0 * s), 6.0 * s * (s - 1.0))
    }
}

/// `phi = B(d(z, D) / delta)`: 1 on `D`, 0 once the anisotropic distance
/// reaches `delta`.
///
/// `phi` is C^1 across `dD` only for `gamma < 1`; for larger `gamma` its
/// y-derivatives blow up as `d -> 0` from outside.
#[derive(Debug, Clone)]
pub struct Cutoff {
    geo: GrushinGeometry,
    target: Aabb,
    delta: f64,
    shell: SubBox,
}

impl Cutoff {
    /// Fails when the shell `D_delta` reaches the outer boundary.
    pub fn new(grid: &Grid, geo: &GrushinGeometry, d: &SubBox, delta: f64) -> Result<Self> {
        let shell = delta_shell(grid, geo, d, delta)?;
        if !shell.is_interior(grid) {
            return Err(Error::Range(format!(
                "delta = {delta}: the shell around the subdomain touches the outer boundary"
            )));
        }
        Ok(Self {
            geo: *geo,
            target: d.aabb(grid),
            delta,
            shell,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn target(&self) -> &Aabb {
        &self.target
    }

    /// The grid shell holding the support.
    pub fn shell(&self) -> &SubBox {
        &self.shell
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        blend(anisotropic_distance(&self.geo, z, &self.target) / self.delta).0
    }

    /// `phi(z)` and its gradient.
    pub fn value_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.geo.dim();
        grad[..n].iter_mut().for_each(|g| *g = 0.0);
        let dist = anisotropic_distance(&self.geo, z, &self.target);
        let (b, db) = blend(dist / self.delta);
        if db == 0.0 {
            return b;
        }
        // d = a^(1/e), a = |x - xb|^e / (1+g)^2 + |y - yb|^2
        let g = self.geo.gamma;
        let e = 2.0 + 2.0 * g;
        let mut diff = [0.0; MAX_DIM];
        let mut dx2 = 0.0;
        for k in 0..n {
            diff[k] = z[k] - z[k].clamp(self.target.lo[k], self.target.hi[k]);
            if self.geo.is_x_axis(k) {
                dx2 += diff[k] * diff[k];
            }
        }
        let a = dist.powf(e);
        let outer = db / self.delta * dist / (e * a);
        let cx = e * dx2.sqrt().powf(e - 2.0) / ((1.0 + g) * (1.0 + g));
        for k in 0..n {
            let da = if self.geo.is_x_axis(k) {
                cx * diff[k]
            } else {
                2.0 * diff[k]
            };
            grad[k] = outer * da;
        }
        b
    }

    /// Nodal values on `grid`.
    pub fn nodal(&self, grid: &Grid) -> ScalarField {
        ScalarField::from_fn(grid, |z| self.value(z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    /// `Phi_t(z) = z + t phi(z) e_j` (0-based axis over all of `z`).
    Translate(usize),
    /// `Phi_t(z) = (1 + t phi(z)) z`.
    Scale,
}

impl fmt::Display for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Translate(j) => write!(f, "translate({})", j + 1),
            Self::Scale => f.write_str("scale"),
        }
    }
}

impl FromStr for MapKind {
    type Err = Error;

    /// `"scale"` or `"translate(k)"` with `k` 1-based over all coordinates.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t == "scale" {
            return Ok(Self::Scale);
        }
        t.strip_prefix("translate(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|k| k.trim().parse::<usize>().ok())
            .filter(|&k| k >= 1)
            .map(|k| Self::Translate(k - 1))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown map '{s}': expected 'scale' or 'translate(k)' with k >= 1"
                ))
            })
    }
}

impl Serialize for MapKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone)]
pub struct VariationMap {
    pub kind: MapKind,
    pub cutoff: Cutoff,
    /// The outer domain the image has to stay in.
    pub domain: Aabb,
}

impl VariationMap {
    pub fn new(kind: MapKind, cutoff: Cutoff, grid: &Grid) -> Result<Self> {
        if let MapKind::Translate(j) = kind {
            if j >= grid.dim() {
                return Err(Error::Range(format!(
                    "translation axis {} out of range 1..={}",
                    j + 1,
                    grid.dim()
                )));
            }
        }
        Ok(Self {
            kind,
            cutoff,
            domain: grid.aabb(),
        })
    }

    fn dim(&self) -> usize {
        self.cutoff.geo.dim()
    }

    /// `Phi_t(z)` without the range check.
    pub fn apply_unchecked(&self, t: f64, z: &[f64], out: &mut [f64]) {
        let n = self.dim();
        out[..n].copy_from_slice(&z[..n]);
        let phi = self.cutoff.value(z);
        if phi == 0.0 {
            return;
        }
        match self.kind {
            MapKind::Translate(j) => out[j] += t * phi,
            MapKind::Scale => out[..n].iter_mut().for_each(|v| *v *= 1.0 + t * phi),
        }
    }

    /// `Phi_t(z)`; errors when the image leaves the domain.
    pub fn apply(&self, t: f64, z: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.apply_unchecked(t, z, &mut out);
        if !self.domain.contains(&out) {
            return Err(Error::Range(format!(
                "Phi_t({z:?}) = {out:?} leaves the domain at t = {t}"
            )));
        }
        Ok(out)
    }

    /// `det Jac Phi_t(z)` in closed form.
    pub fn jacobian_det(&self, t: f64, z: &[f64]) -> f64 {
        let n = self.dim();
        let mut grad = [0.0; MAX_DIM];
        let phi = self.cutoff.value_grad(z, &mut grad);
        match self.kind {
            MapKind::Translate(j) => 1.0 + t * grad[j],
            MapKind::Scale => {
                let s = 1.0 + t * phi;
                let zg: f64 = (0..n).map(|k| z[k] * grad[k]).sum();
                s.powi(n as i32) + s.powi(n as i32 - 1) * t * zg
            }
        }
    }

    /// `d/dt det Jac (Phi_t^-1)(z)` at `t = 0`.
    pub fn ddet_dt_at_zero(&self, z: &[f64]) -> f64 {
        let n = self.dim();
        let mut grad = [0.0; MAX_DIM];
        let phi = self.cutoff.value_grad(z, &mut grad);
        match self.kind {
            MapKind::Translate(j) => -grad[j],
            MapKind::Scale => {
                let zg: f64 = (0..n).map(|k| z[k] * grad[k]).sum();
                -(n as f64 * phi + zg)
            }
        }
    }

    /// Nodal samples of `u o Phi_t`, by multilinear interpolation.
    pub fn compose(&self, u: &ScalarField, t: f64) -> Result<ScalarField> {
        let grid = u.grid();
        let n = grid.dim();
        let src = u.values();
        let bad = std::sync::atomic::AtomicBool::new(false);
        let mut out = vec![0.0; grid.node_count()];
        par::fill(&mut out, |i| {
            let mut z = [0.0; MAX_DIM];
            let mut w = [0.0; MAX_DIM];
            grid.point_into(i, &mut z);
            if t == 0.0 || self.cutoff.value(&z[..n]) == 0.0 {
                return src[i];
            }
            self.apply_unchecked(t, &z[..n], &mut w);
            match interpolate(grid, src, &w[..n]) {
                Some(v) => v,
                None => {
                    bad.store(true, std::sync::atomic::Ordering::Relaxed);
                    0.0
                }
            }
        });
        if bad.into_inner() {
            return Err(Error::Range(format!(
                "t = {t}: the variation maps grid nodes outside the domain"
            )));
        }
        ScalarField::from_values(grid, out)
    }
}

/// Multilinear interpolation of nodal data at `z`; `None` outside the grid.
pub fn interpolate(grid: &Grid, v: &[f64], z: &[f64]) -> Option<f64> {
    let n = grid.dim();
    let mut base = 0;
    let mut frac = [0.0; MAX_DIM];
    for k in 0..n {
        let h = grid.spacing()[k];
        let s = (z[k] - grid.lower()[k]) / h;
        let cells = grid.nodes_per_axis()[k] - 1;
        if !(s >= -1e-12 && s <= cells as f64 + 1e-12) {
            return None;
        }
        let c = (s.floor().max(0.0) as usize).min(cells - 1);
        frac[k] = (s - c as f64).clamp(0.0, 1.0);
        base += c * grid.strides()[k];
    }
    let mut acc = 0.0;
    for corner in 0..1usize << n {
        let mut w = 1.0;
        let mut idx = base;
        for k in 0..n {
            if corner >> k & 1 == 1 {
                w *= frac[k];
                idx += grid.strides()[k];
            } else {
                w *= 1.0 - frac[k];
            }
        }
        if w != 0.0 {
            acc += w * v[idx];
        }
    }
    Some(acc)
}

/// `I(v) = (1/p) int |grad_gamma v|^p - int F(z, v)` with the discrete
/// gradient energy and trapezoid weights.
pub fn functional<S: Source + ?Sized>(energy: &DiscreteEnergy, source: &S, v: &ScalarField) -> f64 {
    let grid = energy.grid();
    let n = grid.dim();
    let vals = v.values();
    let mass = energy.mass();
    let work = par::sum_by(vals.len(), |i| {
        let mut z = [0.0; MAX_DIM];
        grid.point_into(i, &mut z);
        mass[i] * source.antiderivative(&z[..n], vals[i])
    });
    energy.gradient_energy(vals) - work
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaritySample {
    pub t: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityReport {
    pub kind: MapKind,
    pub h: f64,
    pub samples: Vec<StationaritySample>,
    /// Central differences `(I(t) - I(-t)) / 2t`, largest `t` first.
    pub central: Vec<f64>,
    /// Richardson extrapolation of `central` to `t = 0`.
    pub slope: f64,
}

impl StationarityReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,energy")?;
        for s in &self.samples {
            writeln!(out, "{:e},{:e}", s.t, s.energy)?;
        }
        Ok(())
    }
}

/// Evaluates `I(u o Phi_t)` at `t = +-t0, +-t0/2, ..., +-t0/2^(levels-1)` and
/// extrapolates the central-difference slope to `t = 0`.
pub fn stationarity_check<S: Source + ?Sized>(
    u: &ScalarField,
    source: &S,
    geo: &GrushinGeometry,
    eps_w: f64,
    map: &VariationMap,
    t0: f64,
    levels: usize,
) -> Result<StationarityReport> {
    if !(t0 > 0.0) || levels == 0 {
        return Err(Error::Config(format!(
            "need t0 > 0 and at least one level, got t0 = {t0}, levels = {levels}"
        )));
    }
    let grid = u.grid();
    let energy = DiscreteEnergy::new(grid, geo, eps_w)?;
    let mut samples = Vec::with_capacity(2 * levels + 1);
    let mut central = Vec::with_capacity(levels);
    let mut tau = t0;
    for _ in 0..levels {
        let plus = functional(&energy, source, &map.compose(u, tau)?);
        let minus = functional(&energy, source, &map.compose(u, -tau)?);
        samples.push(StationaritySample {
            t: -tau,
            energy: minus,
        });
        samples.push(StationaritySample {
            t: tau,
            energy: plus,
        });
        central.push((plus - minus) / (2.0 * tau));
        tau *= 0.5;
    }
    samples.push(StationaritySample {
        t: 0.0,
        energy: functional(&energy, source, u),
    });
    samples.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(StationarityReport {
        kind: map.kind,
        h: grid.max_spacing(),
        samples,
        slope: richardson(&central),
        central,
    })
}

/// `amplitude (1 - |z - center|^2 / radius^2)^2`, zero outside the ball;
/// the perturbation of the stationarity control.
pub fn control_bump(grid: &Grid, center: &[f64], radius: f64, amplitude: f64) -> ScalarField {
    ScalarField::from_fn(grid, |z| {
        let r2: f64 = z.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
        amplitude * (1.0 - r2 / (radius * radius)).max(0.0).powi(2)
    })
}

/// Ball through the corners of `target`, where the control bump goes. It
/// spills into the cutoff shell, so every map family feels it.
pub fn control_ball(target: &Aabb) -> (Vec<f64>, f64) {
    let center = target
        .lo
        .iter()
        .zip(&target.hi)
        .map(|(l, h)| 0.5 * (l + h))
        .collect();
    let radius = target
        .lo
        .iter()
        .zip(&target.hi)
        .map(|(l, h)| 0.25 * (h - l) * (h - l))
        .sum::<f64>()
        .sqrt();
    (center, radius)
}

/// Richardson table for a sequence with halving steps and an even error
/// expansion; returns the last diagonal entry.
pub fn richardson(seq: &[f64]) -> f64 {
    let mut row = seq.to_vec();
    let mut factor = 4.0;
    while row.len() > 1 {
        row = row
            .windows(2)
            .map(|w| (factor * w[1] - w[0]) / (factor - 1.0))
            .collect();
        factor *= 4.0;
    }
    row.first().copied().unwrap_or(f64::NAN)
}
