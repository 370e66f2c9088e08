//! Uniform finite-difference grids over a box domain.
//!
//! Unknowns live on interior nodes only; the boundary layer carries the
//! homogeneous Dirichlet condition. Every node carries the same quadrature
//! weight `h_x * h_y` (or `h` in 1D), so the injection `B` from the control
//! patch and the restriction `B*` back onto it are exact transposes of each
//! other under the weighted inner products defined here.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

static NEXT_GRID_ID: AtomicU64 = AtomicU64::new(1);

/// Closed real interval `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub const UNIT: Interval = Interval { lower: 0.0, upper: 1.0 };

    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    fn contains(&self, other: &Interval) -> bool {
        other.lower >= self.lower && other.upper <= self.upper
    }
}

/// A uniform grid over a 1D or 2D box with a marked control patch.
#[derive(Debug, Clone)]
pub struct Grid {
    id: u64,
    dim: usize,
    nodes_per_axis: Vec<usize>,
    spacing: Vec<f64>,
    domain_bounds: Vec<Interval>,
    control_bounds: Vec<Interval>,
    control_mask: Vec<usize>,
    node_weight: f64,
}

impl Grid {
    /// Builds a grid with `nodes_per_axis[a]` nodes (boundary included) along
    /// axis `a`. The control patch is every interior node whose coordinates
    /// fall inside `control_bounds`.
    pub fn build(
        dim: usize,
        nodes_per_axis: &[usize],
        domain_bounds: &[Interval],
        control_bounds: &[Interval],
    ) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if nodes_per_axis.len() != dim || domain_bounds.len() != dim || control_bounds.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "expected {dim} entries per axis argument, got {}/{}/{}",
                nodes_per_axis.len(),
                domain_bounds.len(),
                control_bounds.len()
            )));
        }
        if let Some(&n) = nodes_per_axis.iter().find(|&&n| n < 3) {
            return Err(Error::InvalidGrid(format!("need at least 3 nodes per axis, got {n}")));
        }
        for (domain, control) in domain_bounds.iter().zip(control_bounds) {
            if !(domain.length() > 0.0) || !domain.lower.is_finite() || !domain.upper.is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "degenerate domain interval [{}, {}]",
                    domain.lower, domain.upper
                )));
            }
            if control.lower > control.upper || !domain.contains(control) {
                return Err(Error::InvalidGrid(format!(
                    "control interval [{}, {}] is not nested in [{}, {}]",
                    control.lower, control.upper, domain.lower, domain.upper
                )));
            }
        }

        let spacing: Vec<f64> = nodes_per_axis
            .iter()
            .zip(domain_bounds)
            .map(|(&n, b)| b.length() / (n - 1) as f64)
            .collect();

        // Patch membership per axis, with a rounding allowance so that
        // nodes sitting on the patch boundary are kept.
        let axis_members: Vec<Vec<bool>> = (0..dim)
            .map(|a| {
                let slack = 1e-10 * spacing[a];
                (1..nodes_per_axis[a] - 1)
                    .map(|k| {
                        let x = domain_bounds[a].lower + k as f64 * spacing[a];
                        x >= control_bounds[a].lower - slack && x <= control_bounds[a].upper + slack
                    })
                    .collect()
            })
            .collect();

        let interior: Vec<usize> = nodes_per_axis.iter().map(|n| n - 2).collect();
        let mut control_mask = Vec::new();
        match dim {
            1 => control_mask.extend((0..interior[0]).filter(|&i| axis_members[0][i])),
            _ => {
                for j in 0..interior[1] {
                    for i in 0..interior[0] {
                        if axis_members[0][i] && axis_members[1][j] {
                            control_mask.push(i + interior[0] * j);
                        }
                    }
                }
            }
        }
        if control_mask.is_empty() {
            return Err(Error::InvalidGrid("control patch contains no interior node".into()));
        }

        Ok(Self {
            id: NEXT_GRID_ID.fetch_add(1, Ordering::Relaxed),
            dim,
            nodes_per_axis: nodes_per_axis.to_vec(),
            node_weight: spacing.iter().product(),
            spacing,
            domain_bounds: domain_bounds.to_vec(),
            control_bounds: control_bounds.to_vec(),
            control_mask,
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes_per_axis(&self) -> &[usize] {
        &self.nodes_per_axis
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn domain_bounds(&self) -> &[Interval] {
        &self.domain_bounds
    }

    pub fn control_bounds(&self) -> &[Interval] {
        &self.control_bounds
    }

    /// Interior nodes per axis.
    pub fn interior_shape(&self) -> Vec<usize> {
        self.nodes_per_axis.iter().map(|n| n - 2).collect()
    }

    pub fn interior_node_count(&self) -> usize {
        self.nodes_per_axis.iter().map(|n| n - 2).product()
    }

    /// Interior node indices (x fastest) belonging to the control patch.
    pub fn control_mask(&self) -> &[usize] {
        &self.control_mask
    }

    pub fn control_len(&self) -> usize {
        self.control_mask.len()
    }

    /// Quadrature weight carried by every node.
    pub fn node_weight(&self) -> f64 {
        self.node_weight
    }

    /// Physical coordinates of interior node `index`.
    pub fn coordinates(&self, index: usize) -> Vec<f64> {
        let shape = self.interior_shape();
        let mut rest = index;
        (0..self.dim)
            .map(|a| {
                let k = rest % shape[a];
                rest /= shape[a];
                self.domain_bounds[a].lower + (k + 1) as f64 * self.spacing[a]
            })
            .collect()
    }

    pub fn zeros(&self) -> SpatialField {
        SpatialField { grid_id: self.id, values: vec![0.0; self.interior_node_count()] }
    }

    pub fn control_zeros(&self) -> ControlSlice {
        ControlSlice { grid_id: self.id, values: vec![0.0; self.control_len()] }
    }

    /// Wraps raw interior values into a field on this grid.
    pub fn field(&self, values: Vec<f64>) -> Result<SpatialField> {
        check_len(self.interior_node_count(), values.len())?;
        Ok(SpatialField { grid_id: self.id, values })
    }

    /// Samples `f` at every interior node.
    pub fn field_from_fn(&self, f: impl Fn(&[f64]) -> f64) -> SpatialField {
        let values = (0..self.interior_node_count()).map(|i| f(&self.coordinates(i))).collect();
        SpatialField { grid_id: self.id, values }
    }

    pub fn control_slice(&self, values: Vec<f64>) -> Result<ControlSlice> {
        check_len(self.control_len(), values.len())?;
        Ok(ControlSlice { grid_id: self.id, values })
    }

    pub(crate) fn check(&self, grid_id: u64) -> Result<()> {
        if grid_id == self.id {
            Ok(())
        } else {
            Err(Error::GridMismatch { expected: self.id, found: grid_id })
        }
    }

    /// Central-difference Laplacian with zero boundary values.
    pub fn laplacian_apply(&self, u: &SpatialField) -> Result<SpatialField> {
        self.check(u.grid_id)?;
        let mut out = vec![0.0; u.values.len()];
        self.laplacian_into(&u.values, &mut out);
        Ok(SpatialField { grid_id: self.id, values: out })
    }

    pub(crate) fn laplacian_into(&self, u: &[f64], out: &mut [f64]) {
        match self.dim {
            1 => {
                let n = u.len();
                let s = 1.0 / (self.spacing[0] * self.spacing[0]);
                for i in 0..n {
                    let left = if i > 0 { u[i - 1] } else { 0.0 };
                    let right = if i + 1 < n { u[i + 1] } else { 0.0 };
                    out[i] = s * (left - 2.0 * u[i] + right);
                }
            }
            _ => {
                let nx = self.nodes_per_axis[0] - 2;
                let ny = self.nodes_per_axis[1] - 2;
                let sx = 1.0 / (self.spacing[0] * self.spacing[0]);
                let sy = 1.0 / (self.spacing[1] * self.spacing[1]);
                for j in 0..ny {
                    for i in 0..nx {
                        let k = i + nx * j;
                        let c = u[k];
                        let west = if i > 0 { u[k - 1] } else { 0.0 };
                        let east = if i + 1 < nx { u[k + 1] } else { 0.0 };
                        let south = if j > 0 { u[k - nx] } else { 0.0 };
                        let north = if j + 1 < ny { u[k + nx] } else { 0.0 };
                        out[k] = sx * (west - 2.0 * c + east) + sy * (south - 2.0 * c + north);
                    }
                }
            }
        }
    }

    /// Operator `B`: extends a control slice by zero outside the patch.
    pub fn inject(&self, c: &ControlSlice) -> Result<SpatialField> {
        self.check(c.grid_id)?;
        let mut field = self.zeros();
        self.inject_add(&c.values, 1.0, &mut field.values);
        Ok(field)
    }

    /// `out += scale * B c`
    pub(crate) fn inject_add(&self, c: &[f64], scale: f64, out: &mut [f64]) {
        for (&node, &value) in self.control_mask.iter().zip(c) {
            out[node] += scale * value;
        }
    }

    /// Operator `B*`: samples a field on the control patch.
    pub fn restrict(&self, u: &SpatialField) -> Result<ControlSlice> {
        self.check(u.grid_id)?;
        let values = self.control_mask.iter().map(|&node| u.values[node]).collect();
        Ok(ControlSlice { grid_id: self.id, values })
    }

    pub fn inner_omega(&self, u: &SpatialField, w: &SpatialField) -> Result<f64> {
        self.check(u.grid_id)?;
        self.check(w.grid_id)?;
        Ok(self.node_weight * dot(&u.values, &w.values))
    }

    pub fn inner_control(&self, c: &ControlSlice, d: &ControlSlice) -> Result<f64> {
        self.check(c.grid_id)?;
        self.check(d.grid_id)?;
        Ok(self.node_weight * dot(&c.values, &d.values))
    }

    pub fn norm_omega(&self, u: &SpatialField) -> Result<f64> {
        Ok(self.inner_omega(u, u)?.sqrt())
    }

    pub fn norm_control(&self, c: &ControlSlice) -> Result<f64> {
        Ok(self.inner_control(c, c)?.sqrt())
    }
}

/// Free function form of [`Grid::build`].
pub fn build_grid(
    dim: usize,
    nodes_per_axis: &[usize],
    domain_bounds: &[Interval],
    control_bounds: &[Interval],
) -> Result<Grid> {
    Grid::build(dim, nodes_per_axis, domain_bounds, control_bounds)
}

/// Values on the interior nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialField {
    grid_id: u64,
    values: Vec<f64>,
}

impl SpatialField {
    pub fn grid_id(&self) -> u64 {
        self.grid_id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `self - other`, element-wise.
    pub fn sub(&self, other: &SpatialField) -> Result<SpatialField> {
        if self.grid_id != other.grid_id {
            return Err(Error::GridMismatch { expected: self.grid_id, found: other.grid_id });
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(SpatialField { grid_id: self.grid_id, values })
    }

    /// `self += scale * other`
    pub fn axpy(&mut self, scale: f64, other: &SpatialField) -> Result<()> {
        if self.grid_id != other.grid_id {
            return Err(Error::GridMismatch { expected: self.grid_id, found: other.grid_id });
        }
        axpy(scale, &other.values, &mut self.values);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Values on the control patch at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSlice {
    grid_id: u64,
    values: Vec<f64>,
}

impl ControlSlice {
    pub fn grid_id(&self) -> u64 {
        self.grid_id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, found })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(scale: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += scale * xi;
    }
}
