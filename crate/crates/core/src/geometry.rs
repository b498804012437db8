//! Box domains, tensor grids, axis-aligned subdomains and the anisotropic
//! distance used to build cutoffs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Largest number of coordinate axes a grid may carry.
pub const MAX_DIM: usize = 8;

/// The operator family: `n_x` coordinates `x`, `n_y` coordinates `y`, the
/// degeneracy exponent `gamma` and the integrability exponent `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrushinGeometry {
    pub n_x: usize,
    pub n_y: usize,
    pub gamma: f64,
    pub p: f64,
}

impl GrushinGeometry {
    pub fn new(n_x: usize, n_y: usize, gamma: f64, p: f64) -> Result<Self> {
        if n_x < 1 || n_y < 1 {
            return Err(Error::Geometry(format!(
                "need at least one x and one y coordinate, got N = {n_x}, l = {n_y}"
            )));
        }
        if n_x + n_y < 3 {
            return Err(Error::Geometry(format!(
                "N + l must be at least 3, got {}",
                n_x + n_y
            )));
        }
        if n_x + n_y > MAX_DIM {
            return Err(Error::Geometry(format!(
                "N + l = {} exceeds the supported maximum {MAX_DIM}",
                n_x + n_y
            )));
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::Geometry(format!(
                "gamma must be finite and >= 0, got {gamma}"
            )));
        }
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::Geometry(format!(
                "p must be finite and > 1, got {p}"
            )));
        }
        Ok(Self { n_x, n_y, gamma, p })
    }

    /// `N + l`.
    pub fn dim(&self) -> usize {
        self.n_x + self.n_y
    }

    pub fn is_x_axis(&self, axis: usize) -> bool {
        axis < self.n_x
    }

    /// Euclidean norm of the `x` block of `z`.
    pub fn x_norm(&self, z: &[f64]) -> f64 {
        z[..self.n_x].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `|x|^gamma`, with `0^0 = 1`.
    pub fn weight(&self, x_norm: f64) -> f64 {
        if self.gamma == 0.0 {
            1.0
        } else {
            x_norm.powf(self.gamma)
        }
    }

    /// `|x|^gamma` at the point `z`.
    pub fn weight_at(&self, z: &[f64]) -> f64 {
        self.weight(self.x_norm(z))
    }
}

/// Uniform tensor grid over the box `prod [lower_k, upper_k]`.
///
/// Nodes are stored in row-major order (last axis fastest); the coordinate of
/// node `i` on axis `k` is exactly `lower_k + i * h_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    nodes: Vec<usize>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(bounds: &[(f64, f64)], nodes: &[usize]) -> Result<Self> {
        if bounds.len() != nodes.len() {
            return Err(Error::Grid(format!(
                "{} bounds but {} node counts",
                bounds.len(),
                nodes.len()
            )));
        }
        if bounds.is_empty() || bounds.len() > MAX_DIM {
            return Err(Error::Grid(format!(
                "grid must have between 1 and {MAX_DIM} axes, got {}",
                bounds.len()
            )));
        }
        for (k, (&(a, b), &m)) in bounds.iter().zip(nodes).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::Grid(format!("axis {k}: bad interval [{a}, {b}]")));
            }
            if m < 3 {
                return Err(Error::Grid(format!(
                    "axis {k}: need at least 3 nodes, got {m}"
                )));
            }
        }
        let dim = nodes.len();
        let mut strides = vec![1; dim];
        for k in (0..dim - 1).rev() {
            strides[k] = strides[k + 1] * nodes[k + 1];
        }
        Ok(Self {
            lower: bounds.iter().map(|b| b.0).collect(),
            upper: bounds.iter().map(|b| b.1).collect(),
            spacing: bounds
                .iter()
                .zip(nodes)
                .map(|(&(a, b), &m)| (b - a) / (m - 1) as f64)
                .collect(),
            nodes: nodes.to_vec(),
            strides,
        })
    }

    /// `[a, b]^dim` with `m` nodes per axis.
    pub fn cube(dim: usize, a: f64, b: f64, m: usize) -> Result<Self> {
        Self::new(&vec![(a, b); dim], &vec![m; dim])
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes_per_axis(&self) -> &[usize] {
        &self.nodes
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn cell_count(&self) -> usize {
        self.nodes.iter().map(|m| m - 1).product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.lower[axis] + i as f64 * self.spacing[axis]
    }

    /// Per-axis index of node `idx`, written into `out[..dim]`.
    pub fn multi_index_into(&self, idx: usize, out: &mut [usize]) {
        let mut rem = idx;
        for k in 0..self.dim() {
            out[k] = rem / self.strides[k];
            rem %= self.strides[k];
        }
    }

    pub fn index_of(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Index of node `idx` along `axis` only.
    pub fn axis_index(&self, idx: usize, axis: usize) -> usize {
        (idx / self.strides[axis]) % self.nodes[axis]
    }

    /// Coordinates of node `idx`, written into `out[..dim]`.
    pub fn point_into(&self, idx: usize, out: &mut [f64]) {
        for k in 0..self.dim() {
            out[k] = self.coord(k, self.axis_index(idx, k));
        }
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        let mut z = vec![0.0; self.dim()];
        self.point_into(idx, &mut z);
        z
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        (0..self.dim()).any(|k| {
            let i = self.axis_index(idx, k);
            i == 0 || i + 1 == self.nodes[k]
        })
    }

    /// Node index of the lower corner of cell `cell`.
    pub fn cell_base(&self, cell: usize) -> usize {
        let mut rem = cell;
        let mut base = 0;
        for k in (0..self.dim()).rev() {
            let m = self.nodes[k] - 1;
            base += (rem % m) * self.strides[k];
            rem /= m;
        }
        base
    }

    /// Tensor-trapezoid weight of node `idx` over the whole box.
    pub fn trapezoid_weight(&self, idx: usize) -> f64 {
        let mut w = 1.0;
        for k in 0..self.dim() {
            let i = self.axis_index(idx, k);
            let h = self.spacing[k];
            w *= if i == 0 || i + 1 == self.nodes[k] {
                0.5 * h
            } else {
                h
            };
        }
        w
    }

    pub fn contains_point(&self, z: &[f64]) -> bool {
        z.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&a, &b))| v >= a && v <= b)
    }

    /// Physical box spanned by the grid.
    pub fn aabb(&self) -> Aabb {
        Aabb {
            lo: self.lower.clone(),
            hi: self.upper.clone(),
        }
    }

    /// Coordinates of every node, flattened node-major.
    pub fn all_points(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; self.node_count() * d];
        par::fill_blocks(&mut out, d, |i, z| self.point_into(i, z));
        out
    }
}

/// Physical axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Aabb {
    /// Euclidean projection of `z` onto the closed box.
    pub fn clamp_into(&self, z: &[f64], out: &mut [f64]) {
        for k in 0..z.len() {
            out[k] = z[k].clamp(self.lo[k], self.hi[k]);
        }
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        (0..z.len()).all(|k| z[k] >= self.lo[k] && z[k] <= self.hi[k])
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn surface_area(&self) -> f64 {
        let d = self.lo.len();
        let ext: Vec<f64> = self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).collect();
        (0..d)
            .map(|k| 2.0 * (0..d).filter(|&m| m != k).map(|m| ext[m]).product::<f64>())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Lower,
    Upper,
}

/// One face of a [`SubBox`]: all its nodes share index `lo[axis]` (lower
/// side) or `hi[axis]` (upper side).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Face {
    pub axis: usize,
    pub side: Side,
}

impl Face {
    pub fn sign(&self) -> f64 {
        match self.side {
            Side::Lower => -1.0,
            Side::Upper => 1.0,
        }
    }
}

impl std::fmt::Display for Face {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self.side {
            Side::Lower => '-',
            Side::Upper => '+',
        };
        write!(f, "{s}z{}", self.axis + 1)
    }
}

/// Unit outward normal of `face` in `R^dim`: `+-e_axis`.
pub fn outward_normal(face: Face, dim: usize) -> Vec<f64> {
    let mut nu = vec![0.0; dim];
    nu[face.axis] = face.sign();
    nu
}

/// The weighted normal `(nu_x, |x|^gamma nu_y)` at `z`.
pub fn grushin_normal(geo: &GrushinGeometry, nu: &[f64], z: &[f64]) -> Vec<f64> {
    let w = geo.weight_at(z);
    nu.iter()
        .enumerate()
        .map(|(k, &v)| if geo.is_x_axis(k) { v } else { w * v })
        .collect()
}

/// Axis-aligned block of grid nodes `lo[k] ..= hi[k]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubBox {
    lo: Vec<usize>,
    hi: Vec<usize>,
}

impl SubBox {
    /// A subdomain compactly inside the grid: at least one node layer
    /// separates it from the outer boundary on every side.
    pub fn new(grid: &Grid, lo: &[usize], hi: &[usize]) -> Result<Self> {
        Self::check_shape(grid, lo, hi)?;
        for k in 0..grid.dim() {
            if lo[k] < 1 || hi[k] + 2 > grid.nodes_per_axis()[k] {
                return Err(Error::SubBox(format!(
                    "axis {k}: node range {}..={} touches the outer boundary (needs 1..={})",
                    lo[k],
                    hi[k],
                    grid.nodes_per_axis()[k] - 2
                )));
            }
        }
        Ok(Self {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
        })
    }

    /// The whole grid, outer boundary included.
    pub fn whole(grid: &Grid) -> Self {
        Self {
            lo: vec![0; grid.dim()],
            hi: grid.nodes_per_axis().iter().map(|m| m - 1).collect(),
        }
    }

    /// Smallest subdomain containing the physical box `aabb` (snapped outward
    /// to grid nodes).
    pub fn covering(grid: &Grid, aabb: &Aabb) -> Result<Self> {
        let mut lo = vec![0; grid.dim()];
        let mut hi = vec![0; grid.dim()];
        for k in 0..grid.dim() {
            let h = grid.spacing()[k];
            let a = ((aabb.lo[k] - grid.lower()[k]) / h + 1e-9).floor();
            let b = ((aabb.hi[k] - grid.lower()[k]) / h - 1e-9).ceil();
            if a < 0.0 || b > (grid.nodes_per_axis()[k] - 1) as f64 {
                return Err(Error::SubBox(format!(
                    "axis {k}: box lies outside the grid"
                )));
            }
            lo[k] = a as usize;
            hi[k] = b as usize;
        }
        Self::new(grid, &lo, &hi)
    }

    fn check_shape(grid: &Grid, lo: &[usize], hi: &[usize]) -> Result<()> {
        if lo.len() != grid.dim() || hi.len() != grid.dim() {
            return Err(Error::Dimension {
                expected: grid.dim(),
                found: lo.len().min(hi.len()),
            });
        }
        for k in 0..grid.dim() {
            if lo[k] > hi[k] {
                return Err(Error::SubBox(format!(
                    "axis {k}: lo {} > hi {}",
                    lo[k], hi[k]
                )));
            }
        }
        Ok(())
    }

    pub fn lo(&self) -> &[usize] {
        &self.lo
    }

    pub fn hi(&self) -> &[usize] {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(a, b)| a == b)
    }

    /// Whether the box keeps at least one node layer from the grid boundary.
    pub fn is_interior(&self, grid: &Grid) -> bool {
        (0..grid.dim()).all(|k| self.lo[k] >= 1 && self.hi[k] + 2 <= grid.nodes_per_axis()[k])
    }

    pub fn contains_subbox(&self, other: &SubBox) -> bool {
        (0..self.dim()).all(|k| self.lo[k] <= other.lo[k] && other.hi[k] <= self.hi[k])
    }

    pub fn contains_node(&self, grid: &Grid, idx: usize) -> bool {
        (0..grid.dim()).all(|k| {
            let i = grid.axis_index(idx, k);
            i >= self.lo[k] && i <= self.hi[k]
        })
    }

    /// Number of nodes along each axis.
    pub fn extent(&self) -> Vec<usize> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| b - a + 1)
            .collect()
    }

    pub fn node_count(&self) -> usize {
        self.extent().iter().product()
    }

    /// Grid index of the `i`-th node of the box (row-major within the box).
    pub fn node_at(&self, grid: &Grid, mut i: usize) -> usize {
        let ext = self.extent();
        let mut idx = 0;
        for k in (0..self.dim()).rev() {
            idx += (self.lo[k] + i % ext[k]) * grid.strides()[k];
            i /= ext[k];
        }
        idx
    }

    pub fn aabb(&self, grid: &Grid) -> Aabb {
        Aabb {
            lo: (0..grid.dim()).map(|k| grid.coord(k, self.lo[k])).collect(),
            hi: (0..grid.dim()).map(|k| grid.coord(k, self.hi[k])).collect(),
        }
    }

    /// The `2 * dim` faces, ordered by axis then lower before upper.
    pub fn faces(&self) -> Vec<Face> {
        (0..self.dim())
            .flat_map(|axis| {
                [Side::Lower, Side::Upper]
                    .into_iter()
                    .map(move |side| Face { axis, side })
            })
            .collect()
    }

    /// Node index on `face.axis` where the face sits.
    pub fn face_slab(&self, face: Face) -> usize {
        match face.side {
            Side::Lower => self.lo[face.axis],
            Side::Upper => self.hi[face.axis],
        }
    }

    /// Node count of a face.
    pub fn face_node_count(&self, face: Face) -> usize {
        self.extent()
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != face.axis)
            .map(|(_, e)| e)
            .product()
    }

    /// Grid index of the `i`-th node of `face` (row-major over the
    /// remaining axes).
    pub fn face_node_at(&self, grid: &Grid, face: Face, mut i: usize) -> usize {
        let ext = self.extent();
        let mut idx = self.face_slab(face) * grid.strides()[face.axis];
        for k in (0..self.dim()).rev() {
            if k == face.axis {
                continue;
            }
            idx += (self.lo[k] + i % ext[k]) * grid.strides()[k];
            i /= ext[k];
        }
        idx
    }
}

/// Anisotropic distance from `z` to the closed box `target`:
/// `(|x - xb|^(2+2g) / (1+g)^2 + |y - yb|^2)^(1/(2+2g))` where `(xb, yb)` is
/// the Euclidean projection of `z` onto the box.
pub fn anisotropic_distance(geo: &GrushinGeometry, z: &[f64], target: &Aabb) -> f64 {
    let g = geo.gamma;
    let (mut dx2, mut dy2) = (0.0, 0.0);
    for k in 0..geo.dim() {
        let c = z[k].clamp(target.lo[k], target.hi[k]);
        let d = z[k] - c;
        if geo.is_x_axis(k) {
            dx2 += d * d;
        } else {
            dy2 += d * d;
        }
    }
    if dx2 == 0.0 && dy2 == 0.0 {
        return 0.0;
    }
    let e = 2.0 + 2.0 * g;
    let a = dx2.sqrt().powf(e) / ((1.0 + g) * (1.0 + g)) + dy2;
    a.powf(1.0 / e)
}

/// The shell `D_delta`: smallest subdomain holding every node whose
/// anisotropic distance to `d` is at most `delta`.
///
/// Nodes at distance exactly `delta` are included, so that `delta = h` with
/// `gamma = 0` grows `d` by one node layer. Errors when the shell would reach
/// the outer boundary.
pub fn delta_shell(grid: &Grid, geo: &GrushinGeometry, d: &SubBox, delta: f64) -> Result<SubBox> {
    if !(delta > 0.0) {
        return Err(Error::Range(format!("delta must be positive, got {delta}")));
    }
    let target = d.aabb(grid);
    let dim = grid.dim();
    let slack = delta * (1.0 + 1e-12);
    let mut lo = d.lo().to_vec();
    let mut hi = d.hi().to_vec();
    let mut z = [0.0; MAX_DIM];
    let mut mi = [0usize; MAX_DIM];
    for idx in 0..grid.node_count() {
        grid.point_into(idx, &mut z);
        if anisotropic_distance(geo, &z[..dim], &target) <= slack {
            grid.multi_index_into(idx, &mut mi);
            for k in 0..dim {
                lo[k] = lo[k].min(mi[k]);
                hi[k] = hi[k].max(mi[k]);
            }
        }
    }
    SubBox::new(grid, &lo, &hi).map_err(|_| {
        Error::Range(format!(
            "delta = {delta} is too large: the shell around the subdomain reaches the outer boundary"
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geo(n_x: usize, n_y: usize, gamma: f64) -> GrushinGeometry {
        GrushinGeometry::new(n_x, n_y, gamma, 2.0).unwrap()
    }

    #[test]
    fn covering_snaps_outward_and_keeps_aligned_corners() {
        let g = Grid::cube(3, -1.0, 1.0, 9).unwrap();
        let aligned = Aabb {
            lo: vec![0.25, -0.5, -0.25],
            hi: vec![0.75, 0.25, 0.5],
        };
        let d = SubBox::covering(&g, &aligned).unwrap();
        assert_eq!(d.lo(), &[5, 2, 3]);
        assert_eq!(d.hi(), &[7, 5, 6]);
        let loose = Aabb {
            lo: vec![0.3, -0.5, -0.25],
            hi: vec![0.7, 0.3, 0.5],
        };
        let d = SubBox::covering(&g, &loose).unwrap();
        assert_eq!(d.lo(), &[5, 2, 3]);
        assert_eq!(d.hi(), &[7, 6, 6]);
    }

    #[test]
    fn geometry_validation() {
        assert!(GrushinGeometry::new(1, 1, 0.0, 2.0).is_err());
        assert!(GrushinGeometry::new(0, 3, 0.0, 2.0).is_err());
        assert!(GrushinGeometry::new(1, 2, -0.1, 2.0).is_err());
        assert!(GrushinGeometry::new(1, 2, 0.0, 1.0).is_err());
        assert!(GrushinGeometry::new(1, 2, 0.5, 1.5).is_ok());
    }

    #[test]
    fn grid_addressing() {
        let g = Grid::new(&[(-1.0, 1.0), (0.0, 2.0), (0.0, 1.0)], &[5, 3, 9]).unwrap();
        assert_eq!(g.node_count(), 135);
        assert_eq!(g.cell_count(), 4 * 2 * 8);
        let idx = g.index_of(&[3, 1, 7]);
        let mut mi = [0; MAX_DIM];
        g.multi_index_into(idx, &mut mi);
        assert_eq!(&mi[..3], &[3, 1, 7]);
        assert_eq!(g.point(idx), vec![0.5, 1.0, 0.875]);
        assert!(!g.is_boundary(idx));
        assert!(g.is_boundary(g.index_of(&[0, 1, 4])));
        assert_eq!(g.cell_base(0), 0);
        assert_eq!(g.cell_base(g.cell_count() - 1), g.index_of(&[3, 1, 7]));
        let total: f64 = (0..g.node_count()).map(|i| g.trapezoid_weight(i)).sum();
        assert!((total - 4.0).abs() < 1e-14);
        assert!(Grid::new(&[(0.0, 1.0)], &[2]).is_err());
    }

    #[test]
    fn normals() {
        assert_eq!(
            outward_normal(
                Face {
                    axis: 0,
                    side: Side::Upper
                },
                3
            ),
            vec![1.0, 0.0, 0.0]
        );
        assert_eq!(
            outward_normal(
                Face {
                    axis: 2,
                    side: Side::Lower
                },
                3
            ),
            vec![0.0, 0.0, -1.0]
        );
        let a = outward_normal(
            Face {
                axis: 1,
                side: Side::Upper,
            },
            3,
        );
        let b = outward_normal(
            Face {
                axis: 1,
                side: Side::Lower,
            },
            3,
        );
        assert!(a.iter().zip(&b).all(|(x, y)| x + y == 0.0));

        let g0 = geo(1, 2, 0.0);
        let nu = [0.0, 0.6, 0.8];
        assert_eq!(grushin_normal(&g0, &nu, &[3.0, 1.0, 1.0]), nu.to_vec());
        let g1 = geo(1, 2, 1.0);
        assert_eq!(
            grushin_normal(&g1, &[1.0, 0.0, 0.0], &[5.0, 1.0, 1.0]),
            vec![1.0, 0.0, 0.0]
        );
        assert_eq!(
            grushin_normal(&g1, &[0.0, 1.0, 0.0], &[2.0, 0.0, 0.0]),
            vec![0.0, 2.0, 0.0]
        );
    }

    #[test]
    fn subbox_faces_and_clearance() {
        let g = Grid::cube(3, 0.0, 1.0, 9).unwrap();
        assert!(SubBox::new(&g, &[0, 2, 2], &[4, 4, 4]).is_err());
        assert!(SubBox::new(&g, &[1, 2, 2], &[8, 4, 4]).is_err());
        let d = SubBox::new(&g, &[1, 2, 3], &[5, 4, 7]).unwrap();
        assert_eq!(d.faces().len(), 6);
        let area: f64 = d
            .faces()
            .iter()
            .map(|&f| {
                (0..3)
                    .filter(|&k| k != f.axis)
                    .map(|k| (d.hi()[k] - d.lo()[k]) as f64 * g.spacing()[k])
                    .product::<f64>()
            })
            .sum();
        assert!((area - d.aabb(&g).surface_area()).abs() < 1e-14);
        let face = Face {
            axis: 1,
            side: Side::Upper,
        };
        for i in 0..d.face_node_count(face) {
            let idx = d.face_node_at(&g, face, i);
            assert_eq!(g.axis_index(idx, 1), 4);
            assert!(d.contains_node(&g, idx));
        }
    }

    #[test]
    fn distance_examples() {
        let g = GrushinGeometry::new(1, 2, 0.0, 2.0).unwrap();
        let boxd = Aabb {
            lo: vec![0.0, 0.0, 0.0],
            hi: vec![1.0, 1.0, 1.0],
        };
        assert_eq!(anisotropic_distance(&g, &[0.5, 0.5, 0.5], &boxd), 0.0);
        let d = anisotropic_distance(&g, &[2.0, 3.0, 0.5], &boxd);
        assert!((d - 5.0f64.sqrt()).abs() < 1e-15);

        // gamma = 1, one x and one y axis (the remaining y axis sits inside the box)
        let g = GrushinGeometry::new(1, 2, 1.0, 2.0).unwrap();
        let origin = Aabb {
            lo: vec![0.0, 0.0, -1.0],
            hi: vec![0.0, 0.0, 1.0],
        };
        let d = anisotropic_distance(&g, &[2.0, 0.0, 0.0], &origin);
        // independent evaluation: (2^4 / 4)^(1/4)
        let expected = (16.0f64 / 4.0).powf(0.25);
        assert!((d - expected).abs() < 1e-15);
        assert!((d - 2.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn shell_examples() {
        let grid = Grid::cube(3, -1.0, 1.0, 17).unwrap();
        let g0 = geo(1, 2, 0.0);
        let d = SubBox::new(&grid, &[5, 6, 7], &[10, 10, 9]).unwrap();
        assert_eq!(delta_shell(&grid, &g0, &d, 1e-9).unwrap(), d);
        let h = grid.spacing()[0];
        let s = delta_shell(&grid, &g0, &d, h).unwrap();
        assert_eq!(s.lo(), &[4, 5, 6]);
        assert_eq!(s.hi(), &[11, 11, 10]);
        let g1 = geo(1, 2, 1.0);
        let a = delta_shell(&grid, &g1, &d, 0.1).unwrap();
        let b = delta_shell(&grid, &g1, &d, 0.3).unwrap();
        assert!(a.contains_subbox(&d));
        assert!(b.contains_subbox(&a));
        assert!(matches!(
            delta_shell(&grid, &g1, &d, 2.0),
            Err(Error::Range(_))
        ));
    }
}
