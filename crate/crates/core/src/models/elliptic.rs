//! One-dimensional steady flow `-(f h')' = g` on `[0, 1]` with `h(0) = 0`
//! and `h'(1) = 0`, discretized with cell-centred fluxes between nodes.

use alloc::vec;
use alloc::vec::Vec;

use libm::exp;
use nalgebra::DVector;

use super::{ForwardModel, KlField};
use crate::error::{invalid, Result};

/// Uniform-grid solver returning heads at a fixed set of sensor nodes.
#[derive(Debug, Clone)]
pub struct Elliptic1d {
    nodes: usize,
    sensors: Vec<usize>,
    source: f64,
}

impl Elliptic1d {
    pub fn new(nodes: usize, sensors: Vec<usize>) -> Result<Self> {
        if nodes < 3 {
            return Err(invalid!("elliptic grid needs at least 3 nodes, got {nodes}"));
        }
        if let Some(s) = sensors.iter().find(|s| **s >= nodes) {
            return Err(invalid!("sensor index {s} outside a {nodes}-node grid"));
        }
        Ok(Self { nodes, sensors, source: 1.0 })
    }

    pub fn with_source(mut self, source: f64) -> Self {
        self.source = source;
        self
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn sensors(&self) -> &[usize] {
        &self.sensors
    }

    /// Node coordinates `i / (nodes - 1)`.
    pub fn grid(&self) -> Vec<f64> {
        let h = 1.0 / (self.nodes - 1) as f64;
        (0..self.nodes).map(|i| i as f64 * h).collect()
    }

    /// Head at every node for the nodal log-permeability `log_f`.
    pub fn solve(&self, log_f: &[f64]) -> Result<Vec<f64>> {
        let n = self.nodes;
        if log_f.len() != n {
            return Err(invalid!("log-permeability has {} values, grid has {n} nodes", log_f.len()));
        }
        if log_f.iter().any(|v| !v.is_finite()) {
            return Err(invalid!("log-permeability has non-finite values"));
        }
        let f: Vec<f64> = log_f.iter().map(|v| exp(*v)).collect();
        // face conductivity between nodes i and i+1
        let k: Vec<f64> = (0..n - 1).map(|i| 2.0 * f[i] * f[i + 1] / (f[i] + f[i + 1])).collect();
        let dx = 1.0 / (n - 1) as f64;
        let rhs_full = self.source * dx * dx;

        // unknowns are nodes 1..n-1; row m corresponds to node m+1
        let size = n - 1;
        let mut lower = vec![0.0; size];
        let mut diag = vec![0.0; size];
        let mut upper = vec![0.0; size];
        let mut rhs = vec![rhs_full; size];
        for m in 0..size {
            let node = m + 1;
            if node < n - 1 {
                diag[m] = k[node - 1] + k[node];
                upper[m] = -k[node];
            } else {
                diag[m] = k[node - 1];
                rhs[m] = 0.5 * rhs_full;
            }
            if m > 0 {
                lower[m] = -k[node - 1];
            }
        }
        let interior = thomas(&lower, &diag, &upper, &rhs);
        let mut h = Vec::with_capacity(n);
        h.push(0.0);
        h.extend(interior);
        Ok(h)
    }

    /// Heads at the sensor nodes.
    pub fn heads_at_sensors(&self, log_f: &[f64]) -> Result<DVector<f64>> {
        let h = self.solve(log_f)?;
        Ok(DVector::from_iterator(self.sensors.len(), self.sensors.iter().map(|s| h[*s])))
    }
}

/// Convenience form of [`Elliptic1d::heads_at_sensors`] with unit source.
pub fn elliptic1d_forward(log_f: &[f64], sensors: &[usize]) -> Result<DVector<f64>> {
    Elliptic1d::new(log_f.len(), sensors.to_vec())?.heads_at_sensors(log_f)
}

/// Tridiagonal solve; `lower[0]` and `upper[last]` are ignored.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / denom;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// KL coefficients to sensor heads: `x -> mean + KL(x) -> h(sensors)`.
#[derive(Debug, Clone)]
pub struct EllipticKlModel {
    solver: Elliptic1d,
    field: KlField,
    mean_log_f: f64,
}

impl EllipticKlModel {
    pub fn new(solver: Elliptic1d, field: KlField, mean_log_f: f64) -> Result<Self> {
        if field.grid_len() != solver.nodes() {
            return Err(invalid!("field has {} points, solver grid has {}", field.grid_len(), solver.nodes()));
        }
        Ok(Self { solver, field, mean_log_f })
    }

    pub fn solver(&self) -> &Elliptic1d {
        &self.solver
    }

    pub fn field(&self) -> &KlField {
        &self.field
    }

    pub fn log_field(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.field.realize(x)?.add_scalar(self.mean_log_f))
    }
}

impl ForwardModel for EllipticKlModel {
    fn n_in(&self) -> usize {
        self.field.n_modes()
    }

    fn n_out(&self) -> usize {
        self.solver.sensors().len()
    }

    fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let log_f = self.log_field(x)?;
        self.solver.heads_at_sensors(log_f.as_slice())
    }
}
