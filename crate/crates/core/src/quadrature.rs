//! Tensor-trapezoid volume integrals over sub-boxes and surface integrals
//! over their faces.
//!
//! Both rules are exact on functions that are multilinear inside each cell,
//! in particular on constants, and second order for smooth integrands.
//! Summation goes through [`par::sum_by`], so values do not depend on the
//! worker count.

use crate::error::{Error, Result};
use crate::geometry::{Face, Grid, SubBox};
use crate::par;

/// A volume integral together with the empty-domain flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    /// Set when the subdomain has zero extent on some axis; `value` is 0.
    pub empty: bool,
}

fn axis_weight(i: usize, lo: usize, hi: usize, h: f64) -> f64 {
    if i == lo || i == hi {
        0.5 * h
    } else {
        h
    }
}

/// Trapezoid weight of grid node `idx` inside `d` (0 outside).
pub fn volume_weight(grid: &Grid, d: &SubBox, idx: usize) -> f64 {
    if !d.contains_node(grid, idx) || d.is_empty() {
        return 0.0;
    }
    (0..grid.dim())
        .map(|k| {
            axis_weight(
                grid.axis_index(idx, k),
                d.lo()[k],
                d.hi()[k],
                grid.spacing()[k],
            )
        })
        .product()
}

/// Trapezoid weight of grid node `idx` on `face` of `d`.
pub fn face_weight(grid: &Grid, d: &SubBox, face: Face, idx: usize) -> f64 {
    (0..grid.dim())
        .filter(|&k| k != face.axis)
        .map(|k| {
            axis_weight(
                grid.axis_index(idx, k),
                d.lo()[k],
                d.hi()[k],
                grid.spacing()[k],
            )
        })
        .product()
}

/// `int_D f dz` where `f` is given per grid node index.
pub fn volume_integral<F>(grid: &Grid, d: &SubBox, f: F) -> Integral
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    if d.is_empty() {
        return Integral {
            value: 0.0,
            empty: true,
        };
    }
    let value = par::sum_by(d.node_count(), |i| {
        let idx = d.node_at(grid, i);
        volume_weight(grid, d, idx) * f(idx)
    });
    Integral {
        value,
        empty: false,
    }
}

/// `int_D v dz` for nodal data `v` on `grid`.
pub fn volume_integral_values(grid: &Grid, d: &SubBox, v: &[f64]) -> Integral {
    volume_integral(grid, d, |idx| v[idx])
}

/// Values of a surface integrand on one face, in [`SubBox::face_node_at`]
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceValues {
    pub face: Face,
    pub values: Vec<f64>,
}

/// `oint_{dD} f dS` from per-face node values. Every face of `d` must be
/// present exactly once.
pub fn surface_integral(grid: &Grid, d: &SubBox, data: &[FaceValues]) -> Result<f64> {
    let mut partials = Vec::with_capacity(2 * d.dim());
    for face in d.faces() {
        let fv = data
            .iter()
            .find(|fv| fv.face == face)
            .ok_or_else(|| Error::MissingFace(face.to_string()))?;
        let n = d.face_node_count(face);
        if fv.values.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: fv.values.len(),
            });
        }
        partials.push(par::sum_by(n, |i| {
            face_weight(grid, d, face, d.face_node_at(grid, face, i)) * fv.values[i]
        }));
    }
    Ok(par::pairwise_sum(&partials))
}

/// Samples `f(face, grid index)` on every face of `d`.
pub fn sample_faces<F>(grid: &Grid, d: &SubBox, f: F) -> Vec<FaceValues>
where
    F: Fn(Face, usize) -> f64 + Sync + Send,
{
    d.faces()
        .into_iter()
        .map(|face| {
            let values = par::map_collect(d.face_node_count(face), |i| {
                f(face, d.face_node_at(grid, face, i))
            });
            FaceValues { face, values }
        })
        .collect()
}

/// `oint_{dD} f dS` with the integrand evaluated on the fly.
pub fn surface_integral_fn<F>(grid: &Grid, d: &SubBox, f: F) -> f64
where
    F: Fn(Face, usize) -> f64 + Sync + Send,
{
    let data = sample_faces(grid, d, f);
    surface_integral(grid, d, &data).expect("sampled faces are complete")
}
