use nalgebra::{DMatrix, DVector};

use super::mesh::{AssemblyMap, Mesh};
use super::{FeProblem, Step, Symmetry};
use crate::error::Result;

/// Single unconstrained element with one DOF and residual `u^2 - 4`.
#[derive(Debug, Clone)]
pub struct QuadraticToy {
    mesh: Mesh,
    assembly: AssemblyMap,
    steps: Vec<Step>,
}

impl QuadraticToy {
    pub fn new() -> Self {
        let mesh = Mesh {
            node_coords: vec![vec![0.0]],
            elements: vec![vec![0]],
            dirichlet_dofs: Default::default(),
        };
        let assembly = AssemblyMap::new(&mesh);
        Self {
            mesh,
            assembly,
            steps: vec![Step { index: 0, time: 1.0, dt: 1.0 }],
        }
    }
}

impl Default for QuadraticToy {
    fn default() -> Self {
        Self::new()
    }
}

impl FeProblem for QuadraticToy {
    fn name(&self) -> &str {
        "quadratic-toy"
    }

    fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    fn assembly(&self) -> &AssemblyMap {
        &self.assembly
    }

    fn symmetry(&self) -> Symmetry {
        Symmetry::Symmetric
    }

    fn steps(&self) -> &[Step] {
        &self.steps
    }

    fn parameter_dim(&self) -> usize {
        0
    }

    fn element_residual(&self, _e: usize, u: &[f64], _: &[f64], _: &Step, _: &[f64]) -> Result<DVector<f64>> {
        Ok(DVector::from_element(1, u[0] * u[0] - 4.0))
    }

    fn element_jacobian(&self, _e: usize, u: &[f64], _: &[f64], _: &Step, _: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_element(1, 1, 2.0 * u[0]))
    }
}
