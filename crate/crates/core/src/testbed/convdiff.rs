use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::mesh::{AssemblyMap, Mesh};
use super::{uniform_steps, FeProblem, Step, Symmetry};
use crate::error::{Error, Result};

/// Rotating-pulse source: `10 exp(-50 (x^2 + y^2 - 1/2)^2)` inside the unit circle.
pub fn source_term_pulse(x: f64, y: f64) -> f64 {
    let r2 = x * x + y * y;
    if r2.sqrt() < 1.0 {
        10.0 * (-50.0 * (r2 - 0.5) * (r2 - 0.5)).exp()
    } else {
        0.0
    }
}

/// Maps a thermal diffusivity `k / (rho c_p)` in m^2/s onto the unit-square
/// problem's dimensionless diffusion coefficient.
pub const DIFFUSIVITY_SCALE: f64 = 1e5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub name: String,
    /// kg/m^3
    pub density: f64,
    /// W/(m K)
    pub conductivity: f64,
    /// J/(kg K)
    pub specific_heat: f64,
}

impl Material {
    pub fn new(name: &str, density: f64, conductivity: f64, specific_heat: f64) -> Self {
        Self {
            name: name.to_owned(),
            density,
            conductivity,
            specific_heat,
        }
    }

    pub fn ethylene_glycol() -> Self {
        Self::new("ethylene-glycol", 1110.0, 0.253, 2412.0)
    }

    pub fn sae30_oil() -> Self {
        Self::new("sae30-oil", 875.0, 0.15, 2092.0)
    }

    pub fn glycerol() -> Self {
        Self::new("glycerol", 1260.0, 0.286, 2430.0)
    }

    pub fn diffusion_coefficient(&self) -> f64 {
        DIFFUSIVITY_SCALE * self.conductivity / (self.density * self.specific_heat)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseSpec {
    /// Squares per side; the mesh has `2 * cells^2` triangles.
    pub cells: usize,
    /// s
    pub dt: f64,
    /// s
    pub final_time: f64,
    pub supg: bool,
}

impl Default for PulseSpec {
    fn default() -> Self {
        Self {
            cells: 24,
            dt: 0.1,
            final_time: 5.0,
            supg: true,
        }
    }
}

#[derive(Debug, Clone)]
struct Triangle {
    area: f64,
    // Constant shape-function gradients.
    grad: [[f64; 2]; 3],
    // Edge midpoints, the quadrature points.
    points: [[f64; 2]; 3],
    h: f64,
}

// Shape-function values at the three edge-midpoint quadrature points.
const MIDPOINT_SHAPES: [[f64; 3]; 3] = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];

/// Transient convection-diffusion `u_t + a . grad u - div(eps grad u) = s`
/// on the unit square with `a = (-y, x)`, P1 triangles, backward Euler and
/// SUPG stabilization. The parameter is `mu = [eps]`.
#[derive(Debug, Clone)]
pub struct RotatingPulse {
    spec: PulseSpec,
    mesh: Mesh,
    assembly: AssemblyMap,
    steps: Vec<Step>,
    triangles: Vec<Triangle>,
}

struct ElementOperators {
    // Transient (Galerkin + SUPG), acting on (u - u_ref) / dt.
    mass: [[f64; 3]; 3],
    // Convection + diffusion (+ SUPG convection).
    stiffness: [[f64; 3]; 3],
    load: [f64; 3],
}

impl RotatingPulse {
    pub fn new(spec: PulseSpec) -> Result<Self> {
        if spec.cells < 2 {
            return Err(Error::Configuration("rotating pulse needs at least 2 cells per side".into()));
        }
        if !(spec.dt > 0.0) || !(spec.final_time >= spec.dt) {
            return Err(Error::Configuration(format!(
                "invalid time grid dt = {}, final time = {}",
                spec.dt, spec.final_time
            )));
        }
        let mesh = Mesh::unit_square(spec.cells);
        mesh.validate()?;
        let assembly = AssemblyMap::new(&mesh);
        let count = (spec.final_time / spec.dt).round() as usize;
        let steps = uniform_steps(count, spec.dt);
        let triangles = (0..mesh.element_count())
            .map(|e| {
                let p: Vec<[f64; 2]> = mesh.elements[e]
                    .iter()
                    .map(|&n| [mesh.node_coords[n][0], mesh.node_coords[n][1]])
                    .collect();
                let area = mesh.element_measure(e);
                let mut grad = [[0.0; 2]; 3];
                for a in 0..3 {
                    let (b, c) = ((a + 1) % 3, (a + 2) % 3);
                    grad[a] = [
                        (p[b][1] - p[c][1]) / (2.0 * area),
                        (p[c][0] - p[b][0]) / (2.0 * area),
                    ];
                }
                let mid = |a: usize, b: usize| [0.5 * (p[a][0] + p[b][0]), 0.5 * (p[a][1] + p[b][1])];
                Triangle {
                    area,
                    grad,
                    points: [mid(0, 1), mid(1, 2), mid(2, 0)],
                    h: (2.0 * area).sqrt(),
                }
            })
            .collect();
        Ok(Self { spec, mesh, assembly, steps, triangles })
    }

    pub fn spec(&self) -> &PulseSpec {
        &self.spec
    }

    fn operators(&self, e: usize, dt: f64, eps: f64) -> ElementOperators {
        let tri = &self.triangles[e];
        let w = tri.area / 3.0;
        let mut mass = [[0.0; 3]; 3];
        let mut stiffness = [[0.0; 3]; 3];
        let mut load = [0.0; 3];
        for (q, x) in tri.points.iter().enumerate() {
            let n = MIDPOINT_SHAPES[q];
            let vel = [-x[1], x[0]];
            let speed = (vel[0] * vel[0] + vel[1] * vel[1]).sqrt();
            let s = source_term_pulse(x[0], x[1]);
            let adv: Vec<f64> = (0..3)
                .map(|a| vel[0] * tri.grad[a][0] + vel[1] * tri.grad[a][1])
                .collect();
            let tau = if self.spec.supg {
                let diff = 4.0 * eps / (tri.h * tri.h);
                ((2.0 / dt).powi(2) + (2.0 * speed / tri.h).powi(2) + diff * diff).powf(-0.5)
            } else {
                0.0
            };
            for a in 0..3 {
                let test = n[a] + tau * adv[a];
                load[a] += w * test * s;
                for b in 0..3 {
                    mass[a][b] += w * test * n[b];
                    stiffness[a][b] += w * test * adv[b];
                }
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                let g = tri.grad[a][0] * tri.grad[b][0] + tri.grad[a][1] * tri.grad[b][1];
                stiffness[a][b] += eps * tri.area * g;
            }
        }
        ElementOperators { mass, stiffness, load }
    }

    fn check(&self, mu: &[f64], step: &Step) -> Result<f64> {
        let eps = mu[0];
        if !(eps > 0.0) || !(step.dt > 0.0) {
            return Err(Error::InvalidInput(format!(
                "diffusion coefficient {eps} and step {} must be positive",
                step.dt
            )));
        }
        Ok(eps)
    }
}

impl FeProblem for RotatingPulse {
    fn name(&self) -> &str {
        "rotating-pulse"
    }

    fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    fn assembly(&self) -> &AssemblyMap {
        &self.assembly
    }

    fn symmetry(&self) -> Symmetry {
        Symmetry::General
    }

    fn steps(&self) -> &[Step] {
        &self.steps
    }

    fn parameter_dim(&self) -> usize {
        1
    }

    fn element_residual(
        &self,
        e: usize,
        u: &[f64],
        u_ref: &[f64],
        step: &Step,
        mu: &[f64],
    ) -> Result<DVector<f64>> {
        let eps = self.check(mu, step)?;
        let ops = self.operators(e, step.dt, eps);
        Ok(DVector::from_fn(3, |a, _| {
            let mut r = -ops.load[a];
            for b in 0..3 {
                r += ops.mass[a][b] * (u[b] - u_ref[b]) / step.dt + ops.stiffness[a][b] * u[b];
            }
            r
        }))
    }

    fn element_jacobian(
        &self,
        e: usize,
        _u: &[f64],
        _u_ref: &[f64],
        step: &Step,
        mu: &[f64],
    ) -> Result<DMatrix<f64>> {
        let eps = self.check(mu, step)?;
        let ops = self.operators(e, step.dt, eps);
        Ok(DMatrix::from_fn(3, 3, |a, b| ops.mass[a][b] / step.dt + ops.stiffness[a][b]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testbed::{assemble_jacobian, Frame};

    #[test]
    fn source_values() {
        let r = 0.5f64.sqrt();
        assert!((source_term_pulse(r, 0.0) - 10.0).abs() < 1e-12);
        assert!((source_term_pulse(0.0, 0.0) - 10.0 * (-12.5f64).exp()).abs() < 1e-18);
        assert!((source_term_pulse(0.0, 0.0) - 3.7267e-5).abs() < 1e-9);
        assert_eq!(source_term_pulse(1.0, 0.0), 0.0);
        assert_eq!(source_term_pulse(0.8, 0.8), 0.0);
    }

    #[test]
    fn material_coefficients_order() {
        let eg = Material::ethylene_glycol().diffusion_coefficient();
        let oil = Material::sae30_oil().diffusion_coefficient();
        let gly = Material::glycerol().diffusion_coefficient();
        assert!((eg - 0.253 / (1110.0 * 2412.0) * 1e5).abs() < 1e-15);
        assert!(oil < gly && gly < eg);
    }

    #[test]
    fn constant_field_has_no_diffusion_flux() {
        let p = RotatingPulse::new(PulseSpec { supg: false, ..PulseSpec::default() }).unwrap();
        let ops_a = p.operators(500, 0.1, 0.01);
        let ops_b = p.operators(500, 0.1, 0.5);
        // Rows of the diffusion matrix sum to zero.
        for a in 0..3 {
            let diff: f64 = (0..3).map(|b| ops_b.stiffness[a][b] - ops_a.stiffness[a][b]).sum();
            assert!(diff.abs() < 1e-14);
        }
    }

    #[test]
    fn jacobian_is_state_independent_and_nonsymmetric() {
        let p = RotatingPulse::new(PulseSpec { cells: 6, ..PulseSpec::default() }).unwrap();
        let n = p.assembly().free_dofs();
        let zero = DVector::zeros(n);
        let u = DVector::from_fn(n, |i, _| (i as f64).sin());
        let mu = [Material::glycerol().diffusion_coefficient()];
        let frame = Frame { u_ref: &zero, step: p.steps()[0], mu: &mu };
        let j0 = assemble_jacobian(&p, &zero, &frame).unwrap();
        let j1 = assemble_jacobian(&p, &u, &frame).unwrap();
        assert_eq!(j0, j1);
        assert!((&j0 - j0.transpose()).norm() > 0.0);
    }

    #[test]
    fn time_grid() {
        let p = RotatingPulse::new(PulseSpec::default()).unwrap();
        assert_eq!(p.steps().len(), 50);
        assert!((p.steps()[49].time - 5.0).abs() < 1e-12);
        assert!(RotatingPulse::new(PulseSpec { dt: 0.0, ..PulseSpec::default() }).is_err());
    }
}
