//! Discretized survival-probability fields on tensor grids over
//! [tau, T] x [0, x_max]^2, with the interpolation rules every consumer
//! shares: bilinear in space, linear in time, and zero extension outside
//! the positive quadrant (ruin absorbs).

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Provenance carried with a field: which parameter set produced it and
/// the terminal horizon of the problem it discretizes.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMetadata {
    pub params_hash: String,
    pub horizon: f64,
}

impl FieldMetadata {
    pub fn new(params: &ModelParams, horizon: f64) -> Self {
        Self {
            params_hash: params.digest(),
            horizon,
        }
    }
}

fn check_strictly_increasing(name: &str, nodes: &[f64]) -> Result<()> {
    if nodes.is_empty() {
        return Err(Error::Grid(format!("{name} must not be empty")));
    }
    if nodes.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Grid(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

/// Locate `v` within `nodes`, returning the lower cell index and the
/// interpolation fraction in [0, 1]. Errors outside the node range.
fn locate(nodes: &[f64], v: f64, label: &str) -> Result<(usize, f64)> {
    let n = nodes.len();
    if v < nodes[0] || v > nodes[n - 1] {
        return Err(Error::Domain(format!(
            "{label} = {v} outside grid range [{}, {}]",
            nodes[0],
            nodes[n - 1]
        )));
    }
    if n == 1 {
        return Ok((0, 0.0));
    }
    // partition_point gives the first node strictly greater than v.
    let hi = nodes.partition_point(|&x| x <= v).min(n - 1).max(1);
    let lo = hi - 1;
    let frac = (v - nodes[lo]) / (nodes[hi] - nodes[lo]);
    Ok((lo, frac.clamp(0.0, 1.0)))
}

/// Find the index of a node equal to `v` up to rounding.
fn find_node(nodes: &[f64], v: f64) -> Option<usize> {
    let tol = 1e-9 * v.abs().max(1.0);
    let hi = nodes.partition_point(|&x| x < v - tol);
    if hi < nodes.len() && (nodes[hi] - v).abs() <= tol {
        Some(hi)
    } else {
        None
    }
}

/// A time-dependent field on a tensor grid, indexed (t, x1, x2).
#[derive(Debug, Clone)]
pub struct Field {
    t_nodes: Vec<f64>,
    x1_nodes: Vec<f64>,
    x2_nodes: Vec<f64>,
    values: Array3<f64>,
    pub metadata: FieldMetadata,
}

impl Field {
    pub fn new(
        t_nodes: Vec<f64>,
        x1_nodes: Vec<f64>,
        x2_nodes: Vec<f64>,
        values: Array3<f64>,
        metadata: FieldMetadata,
    ) -> Result<Self> {
        check_strictly_increasing("t_nodes", &t_nodes)?;
        check_strictly_increasing("x1_nodes", &x1_nodes)?;
        check_strictly_increasing("x2_nodes", &x2_nodes)?;
        if x1_nodes[0] != 0.0 || x2_nodes[0] != 0.0 {
            return Err(Error::Grid("x nodes must start at 0".into()));
        }
        if values.dim() != (t_nodes.len(), x1_nodes.len(), x2_nodes.len()) {
            return Err(Error::Grid(format!(
                "value tensor shape {:?} does not match grid ({}, {}, {})",
                values.dim(),
                t_nodes.len(),
                x1_nodes.len(),
                x2_nodes.len()
            )));
        }
        Ok(Self {
            t_nodes,
            x1_nodes,
            x2_nodes,
            values,
            metadata,
        })
    }

    /// Build by evaluating `f(t, x1, x2)` at every node.
    pub fn from_fn<F: Fn(f64, f64, f64) -> f64>(
        t_nodes: Vec<f64>,
        x1_nodes: Vec<f64>,
        x2_nodes: Vec<f64>,
        metadata: FieldMetadata,
        f: F,
    ) -> Result<Self> {
        let shape = (t_nodes.len(), x1_nodes.len(), x2_nodes.len());
        let values = Array3::from_shape_fn(shape, |(it, i1, i2)| {
            f(t_nodes[it], x1_nodes[i1], x2_nodes[i2])
        });
        Self::new(t_nodes, x1_nodes, x2_nodes, values, metadata)
    }

    pub fn t_nodes(&self) -> &[f64] {
        &self.t_nodes
    }

    pub fn x1_nodes(&self) -> &[f64] {
        &self.x1_nodes
    }

    pub fn x2_nodes(&self) -> &[f64] {
        &self.x2_nodes
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn value(&self, it: usize, i1: usize, i2: usize) -> f64 {
        self.values[(it, i1, i2)]
    }

    /// Resolve a point to exact node indices, or fail: finite-difference
    /// stencils are only defined on the grid itself.
    pub fn node_index(&self, t: f64, x: [f64; 2]) -> Result<(usize, usize, usize)> {
        let it = find_node(&self.t_nodes, t)
            .ok_or_else(|| Error::Domain(format!("t = {t} is not a grid node")))?;
        let i1 = find_node(&self.x1_nodes, x[0])
            .ok_or_else(|| Error::Domain(format!("x1 = {} is not a grid node", x[0])))?;
        let i2 = find_node(&self.x2_nodes, x[1])
            .ok_or_else(|| Error::Domain(format!("x2 = {} is not a grid node", x[1])))?;
        Ok((it, i1, i2))
    }

    /// Interpolated value: linear in t, bilinear in x. Exact at nodes,
    /// no extrapolation.
    pub fn query(&self, t: f64, x: [f64; 2]) -> Result<f64> {
        let (it, ft) = locate(&self.t_nodes, t, "t")?;
        let (i1, f1) = locate(&self.x1_nodes, x[0], "x1")?;
        let (i2, f2) = locate(&self.x2_nodes, x[1], "x2")?;
        let plane = |it: usize| -> f64 {
            let j1 = (i1 + 1).min(self.x1_nodes.len() - 1);
            let j2 = (i2 + 1).min(self.x2_nodes.len() - 1);
            let v00 = self.values[(it, i1, i2)];
            let v01 = self.values[(it, i1, j2)];
            let v10 = self.values[(it, j1, i2)];
            let v11 = self.values[(it, j1, j2)];
            v00 * (1.0 - f1) * (1.0 - f2)
                + v10 * f1 * (1.0 - f2)
                + v01 * (1.0 - f1) * f2
                + v11 * f1 * f2
        };
        if ft == 0.0 || self.t_nodes.len() == 1 {
            Ok(plane(it))
        } else {
            let jt = (it + 1).min(self.t_nodes.len() - 1);
            Ok(plane(it) * (1.0 - ft) + plane(jt) * ft)
        }
    }

    /// Bilinear interpolation at a fixed time node with zero extension:
    /// the value is 0 whenever a coordinate is at or below zero (ruin
    /// absorbs past the axes).
    pub fn interp_space_zero_ext(&self, it: usize, y: [f64; 2]) -> f64 {
        if y[0] <= 0.0 || y[1] <= 0.0 {
            return 0.0;
        }
        let (i1, f1) = match locate(&self.x1_nodes, y[0], "x1") {
            Ok(v) => v,
            Err(_) => return 0.0,
        };
        let (i2, f2) = match locate(&self.x2_nodes, y[1], "x2") {
            Ok(v) => v,
            Err(_) => return 0.0,
        };
        let j1 = (i1 + 1).min(self.x1_nodes.len() - 1);
        let j2 = (i2 + 1).min(self.x2_nodes.len() - 1);
        self.values[(it, i1, i2)] * (1.0 - f1) * (1.0 - f2)
            + self.values[(it, j1, i2)] * f1 * (1.0 - f2)
            + self.values[(it, i1, j2)] * (1.0 - f1) * f2
            + self.values[(it, j1, j2)] * f1 * f2
    }

    /// Linear interpolation along axis 1 at a fixed (time, x2) node pair,
    /// with zero extension below the axis.
    pub fn interp_x1_zero_ext(&self, it: usize, y1: f64, i2: usize) -> f64 {
        if y1 <= 0.0 {
            return 0.0;
        }
        match locate(&self.x1_nodes, y1, "x1") {
            Ok((i1, f1)) => {
                let j1 = (i1 + 1).min(self.x1_nodes.len() - 1);
                self.values[(it, i1, i2)] * (1.0 - f1) + self.values[(it, j1, i2)] * f1
            }
            Err(_) => 0.0,
        }
    }

    /// Linear interpolation along axis 2 at a fixed (time, x1) node pair,
    /// with zero extension below the axis.
    pub fn interp_x2_zero_ext(&self, it: usize, i1: usize, y2: f64) -> f64 {
        if y2 <= 0.0 {
            return 0.0;
        }
        match locate(&self.x2_nodes, y2, "x2") {
            Ok((i2, f2)) => {
                let j2 = (i2 + 1).min(self.x2_nodes.len() - 1);
                self.values[(it, i1, i2)] * (1.0 - f2) + self.values[(it, i1, j2)] * f2
            }
            Err(_) => 0.0,
        }
    }

    /// Check that every stored value lies in [-tol, 1 + tol].
    pub fn validate_probability_bounds(&self, tol: f64) -> Result<()> {
        let (min, max) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if min < -tol || max > 1.0 + tol {
            return Err(Error::Grid(format!(
                "field values escape [0, 1] beyond tolerance: min={min}, max={max}"
            )));
        }
        Ok(())
    }
}

/// A stationary (time-independent) field on an x-grid, for the ultimate
/// survival residual.
#[derive(Debug, Clone)]
pub struct Field2d {
    x1_nodes: Vec<f64>,
    x2_nodes: Vec<f64>,
    values: Array2<f64>,
}

impl Field2d {
    pub fn new(x1_nodes: Vec<f64>, x2_nodes: Vec<f64>, values: Array2<f64>) -> Result<Self> {
        check_strictly_increasing("x1_nodes", &x1_nodes)?;
        check_strictly_increasing("x2_nodes", &x2_nodes)?;
        if x1_nodes[0] != 0.0 || x2_nodes[0] != 0.0 {
            return Err(Error::Grid("x nodes must start at 0".into()));
        }
        if values.dim() != (x1_nodes.len(), x2_nodes.len()) {
            return Err(Error::Grid("value matrix shape does not match grid".into()));
        }
        Ok(Self {
            x1_nodes,
            x2_nodes,
            values,
        })
    }

    pub fn from_fn<F: Fn(f64, f64) -> f64>(
        x1_nodes: Vec<f64>,
        x2_nodes: Vec<f64>,
        f: F,
    ) -> Result<Self> {
        let shape = (x1_nodes.len(), x2_nodes.len());
        let values = Array2::from_shape_fn(shape, |(i1, i2)| f(x1_nodes[i1], x2_nodes[i2]));
        Self::new(x1_nodes, x2_nodes, values)
    }

    pub fn x1_nodes(&self) -> &[f64] {
        &self.x1_nodes
    }

    pub fn x2_nodes(&self) -> &[f64] {
        &self.x2_nodes
    }

    pub fn value(&self, i1: usize, i2: usize) -> f64 {
        self.values[(i1, i2)]
    }

    pub fn node_index(&self, x: [f64; 2]) -> Result<(usize, usize)> {
        let i1 = find_node(&self.x1_nodes, x[0])
            .ok_or_else(|| Error::Domain(format!("x1 = {} is not a grid node", x[0])))?;
        let i2 = find_node(&self.x2_nodes, x[1])
            .ok_or_else(|| Error::Domain(format!("x2 = {} is not a grid node", x[1])))?;
        Ok((i1, i2))
    }

    /// Bilinear interpolation with zero extension outside the quadrant.
    pub fn interp_zero_ext(&self, y: [f64; 2]) -> f64 {
        if y[0] <= 0.0 || y[1] <= 0.0 {
            return 0.0;
        }
        let (i1, f1) = match locate(&self.x1_nodes, y[0], "x1") {
            Ok(v) => v,
            Err(_) => return 0.0,
        };
        let (i2, f2) = match locate(&self.x2_nodes, y[1], "x2") {
            Ok(v) => v,
            Err(_) => return 0.0,
        };
        let j1 = (i1 + 1).min(self.x1_nodes.len() - 1);
        let j2 = (i2 + 1).min(self.x2_nodes.len() - 1);
        self.values[(i1, i2)] * (1.0 - f1) * (1.0 - f2)
            + self.values[(j1, i2)] * f1 * (1.0 - f2)
            + self.values[(i1, j2)] * (1.0 - f1) * f2
            + self.values[(j1, j2)] * f1 * f2
    }
}

/// Evenly spaced nodes from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && b > a);
    let h = (b - a) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { b } else { a + i as f64 * h })
        .collect()
}
