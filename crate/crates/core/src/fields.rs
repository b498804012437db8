//! Nodal scalar and vector fields on a [`Grid`] and the discrete Grushin
//! gradient, divergence and p-sub-Laplacian.
//!
//! Derivatives use centered differences at interior nodes and second-order
//! one-sided differences on the outer boundary. The weight `|x|^gamma` is
//! evaluated at nodes; nodes with `x = 0` get weight 0 when `gamma > 0`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::{Grid, GrushinGeometry, SubBox, MAX_DIM};
use crate::par;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
    dirichlet: bool,
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![0.0; grid.node_count()],
            dirichlet: true,
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::Dimension {
                expected: grid.node_count(),
                found: values.len(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            values,
            dirichlet: false,
        })
    }

    /// Samples `f` at every node.
    pub fn from_fn<F>(grid: &Grid, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        let d = grid.dim();
        let mut values = vec![0.0; grid.node_count()];
        par::fill(&mut values, |i| {
            let mut z = [0.0; MAX_DIM];
            grid.point_into(i, &mut z);
            f(&z[..d])
        });
        Self {
            grid: grid.clone(),
            values,
            dirichlet: false,
        }
    }

    /// Samples `f` and forces zero on the outer boundary.
    pub fn dirichlet_from_fn<F>(grid: &Grid, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        let mut s = Self::from_fn(grid, f);
        s.enforce_dirichlet();
        s
    }

    /// Zeroes every outer-boundary node and marks the field as Dirichlet.
    pub fn enforce_dirichlet(&mut self) {
        for i in 0..self.values.len() {
            if self.grid.is_boundary(i) {
                self.values[i] = 0.0;
            }
        }
        self.dirichlet = true;
    }

    /// Whether the field is flagged as vanishing on the outer boundary.
    pub fn is_dirichlet(&self) -> bool {
        self.dirichlet
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access; clears the Dirichlet flag since the boundary may change.
    pub fn values_mut(&mut self) -> &mut [f64] {
        self.dirichlet = false;
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        par::max_by(self.values.len(), |i| self.values[i].abs()).max(0.0)
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        par::max_by(self.values.len(), |i| {
            (self.values[i] - other.values[i]).abs()
        })
        .max(0.0)
    }

    /// `a * self + b * other`, node by node.
    pub fn lin_comb(&self, a: f64, other: &ScalarField, b: f64) -> ScalarField {
        let mut values = vec![0.0; self.values.len()];
        par::fill(&mut values, |i| a * self.values[i] + b * other.values[i]);
        ScalarField {
            grid: self.grid.clone(),
            values,
            dirichlet: self.dirichlet && other.dirichlet,
        }
    }

    pub fn scaled(&self, c: f64) -> ScalarField {
        let mut s = self.clone();
        s.values.iter_mut().for_each(|v| *v *= c);
        s
    }

    /// Euclidean inner product of nodal values.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        par::sum_by(self.values.len(), |i| self.values[i] * other.values[i])
    }

    /// One CSV row per node: coordinates, then value.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let d = self.grid.dim();
        let header: Vec<String> = (1..=d).map(|k| format!("z{k}")).collect();
        writeln!(out, "{},value", header.join(","))?;
        let mut z = [0.0; MAX_DIM];
        for (i, v) in self.values.iter().enumerate() {
            self.grid.point_into(i, &mut z);
            for c in &z[..d] {
                write!(out, "{c},")?;
            }
            writeln!(out, "{v}")?;
        }
        Ok(())
    }
}

/// A `dim`-vector per node, stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    values: Vec<f64>,
}

impl VectorField {
    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        let expected = grid.node_count() * grid.dim();
        if values.len() != expected {
            return Err(Error::Dimension {
                expected,
                found: values.len(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn from_fn<F>(grid: &Grid, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Sync + Send,
    {
        let d = grid.dim();
        let mut values = vec![0.0; grid.node_count() * d];
        par::fill_blocks(&mut values, d, |i, out| {
            let mut z = [0.0; MAX_DIM];
            grid.point_into(i, &mut z);
            f(&z[..d], out)
        });
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn at(&self, node: usize) -> &[f64] {
        let d = self.dim();
        &self.values[node * d..(node + 1) * d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Euclidean inner product over all nodes and components.
    pub fn dot(&self, other: &VectorField) -> f64 {
        par::sum_by(self.values.len(), |i| self.values[i] * other.values[i])
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let d = self.dim();
        let coords: Vec<String> = (1..=d).map(|k| format!("z{k}")).collect();
        let comps: Vec<String> = (1..=d).map(|k| format!("v{k}")).collect();
        writeln!(out, "{},{}", coords.join(","), comps.join(","))?;
        let mut z = [0.0; MAX_DIM];
        for i in 0..self.grid.node_count() {
            self.grid.point_into(i, &mut z);
            let row: Vec<String> = z[..d]
                .iter()
                .chain(self.at(i))
                .map(|v| v.to_string())
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn check_dims(grid: &Grid, geo: &GrushinGeometry) -> Result<()> {
    if grid.dim() != geo.dim() {
        return Err(Error::Dimension {
            expected: geo.dim(),
            found: grid.dim(),
        });
    }
    Ok(())
}

/// `|x|^gamma` at every node.
pub fn nodal_weights(grid: &Grid, geo: &GrushinGeometry) -> Vec<f64> {
    let d = grid.dim();
    let mut w = vec![0.0; grid.node_count()];
    par::fill(&mut w, |i| {
        let mut z = [0.0; MAX_DIM];
        grid.point_into(i, &mut z);
        geo.weight_at(&z[..d])
    });
    w
}

/// Derivative of nodal data along `axis` at node `idx`, using only nodes
/// with axis index in `lo ..= hi`: centered inside the range, second-order
/// one-sided at its ends. The range must hold at least three nodes.
#[inline]
pub(crate) fn axis_derivative(
    data: &[f64],
    stride: usize,
    h: f64,
    idx: usize,
    i: usize,
    lo: usize,
    hi: usize,
    comp: impl Fn(usize) -> usize,
) -> f64 {
    let at = |j: usize| data[comp(j)];
    if i > lo && i < hi {
        (at(idx + stride) - at(idx - stride)) / (2.0 * h)
    } else if i == lo {
        (-3.0 * at(idx) + 4.0 * at(idx + stride) - at(idx + 2 * stride)) / (2.0 * h)
    } else {
        (3.0 * at(idx) - 4.0 * at(idx - stride) + at(idx - 2 * stride)) / (2.0 * h)
    }
}

/// Euclidean gradient of nodal `u` at `idx` restricted to `region`, written
/// into `out`. Nodes on the region's faces get one-sided differences pointing
/// into the region.
pub(crate) fn region_gradient_at(
    grid: &Grid,
    region: &SubBox,
    u: &[f64],
    idx: usize,
    out: &mut [f64],
) {
    for k in 0..grid.dim() {
        let i = grid.axis_index(idx, k);
        out[k] = axis_derivative(
            u,
            grid.strides()[k],
            grid.spacing()[k],
            idx,
            i,
            region.lo()[k],
            region.hi()[k],
            |j| j,
        );
    }
}

/// Euclidean gradient of `u` at every node (one-sided on the outer boundary).
pub fn euclidean_gradient(u: &ScalarField) -> VectorField {
    let grid = u.grid();
    let whole = SubBox::whole(grid);
    let d = grid.dim();
    let mut values = vec![0.0; grid.node_count() * d];
    par::fill_blocks(&mut values, d, |i, out| {
        region_gradient_at(grid, &whole, u.values(), i, out)
    });
    VectorField {
        grid: grid.clone(),
        values,
    }
}

/// `grad_gamma u = (grad_x u, |x|^gamma grad_y u)`.
pub fn grushin_gradient(u: &ScalarField, geo: &GrushinGeometry) -> Result<VectorField> {
    check_dims(u.grid(), geo)?;
    let grid = u.grid();
    let whole = SubBox::whole(grid);
    let d = grid.dim();
    let mut values = vec![0.0; grid.node_count() * d];
    par::fill_blocks(&mut values, d, |i, out| {
        region_gradient_at(grid, &whole, u.values(), i, out);
        let mut z = [0.0; MAX_DIM];
        grid.point_into(i, &mut z);
        let w = geo.weight_at(&z[..d]);
        for v in &mut out[geo.n_x..d] {
            *v *= w;
        }
    });
    Ok(VectorField {
        grid: grid.clone(),
        values,
    })
}

/// `div_gamma P = sum_i d p_i / d x_i + |x|^gamma sum_j d q_j / d y_j`.
pub fn grushin_divergence(field: &VectorField, geo: &GrushinGeometry) -> Result<ScalarField> {
    check_dims(field.grid(), geo)?;
    let grid = field.grid();
    let d = grid.dim();
    let data = field.values();
    let mut values = vec![0.0; grid.node_count()];
    par::fill(&mut values, |idx| {
        let mut z = [0.0; MAX_DIM];
        grid.point_into(idx, &mut z);
        let w = geo.weight_at(&z[..d]);
        let (mut sx, mut sy) = (0.0, 0.0);
        for k in 0..d {
            let i = grid.axis_index(idx, k);
            let dk = axis_derivative(
                data,
                grid.strides()[k],
                grid.spacing()[k],
                idx,
                i,
                0,
                grid.nodes_per_axis()[k] - 1,
                |j| j * d + k,
            );
            if geo.is_x_axis(k) {
                sx += dk;
            } else {
                sy += dk;
            }
        }
        sx + w * sy
    });
    Ok(ScalarField {
        grid: grid.clone(),
        values,
        dirichlet: false,
    })
}

/// `div_gamma(w grad_gamma u)` with `w = (|grad_gamma u|^2 + eps_w^2)^((p-2)/2)`.
///
/// Fails with [`Error::SingularWeight`] when `p < 2`, `eps_w = 0` and the
/// gradient vanishes at some node.
pub fn p_sublaplacian(u: &ScalarField, geo: &GrushinGeometry, eps_w: f64) -> Result<ScalarField> {
    let grad = grushin_gradient(u, geo)?;
    let d = grad.dim();
    let p = geo.p;
    if p < 2.0 && eps_w == 0.0 {
        if let Some(node) =
            (0..u.grid().node_count()).find(|&i| grad.at(i).iter().all(|&c| c == 0.0))
        {
            return Err(Error::SingularWeight { p, node });
        }
    }
    let mut flux = grad.values;
    par::fill_blocks(&mut flux, d, |_, a| {
        let s2: f64 = a.iter().map(|v| v * v).sum::<f64>() + eps_w * eps_w;
        let w = if p == 2.0 {
            1.0
        } else {
            s2.powf(0.5 * (p - 2.0))
        };
        a.iter_mut().for_each(|v| *v *= w);
    });
    let flux = VectorField {
        grid: u.grid().clone(),
        values: flux,
    };
    grushin_divergence(&flux, geo)
}
