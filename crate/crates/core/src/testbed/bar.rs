use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::mesh::{AssemblyMap, Mesh};
use super::{uniform_steps, FeProblem, Step, Symmetry};
use crate::error::{Error, Result};

/// Tip load for load parameter `alpha`: `P = c * sqrt(alpha)`.
pub fn load_scaling(alpha: f64, c: f64) -> Result<f64> {
    if !(alpha >= 0.0) || !c.is_finite() {
        return Err(Error::InvalidInput(format!(
            "load parameter alpha = {alpha} must be finite and nonnegative"
        )));
    }
    Ok(c * alpha.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BarSpec {
    pub elements: usize,
    /// m
    pub length: f64,
    /// m^2
    pub area: f64,
    /// Pa
    pub young_modulus: f64,
    /// Winkler foundation stiffness per unit length, N/m^2. The default is
    /// `EA / L^2`.
    pub foundation_stiffness: f64,
    /// The constant `c` of the tip load, N.
    pub load_magnitude: f64,
    pub load_steps: usize,
}

impl Default for BarSpec {
    fn default() -> Self {
        Self {
            elements: 64,
            length: 1.0,
            area: 1e-3,
            young_modulus: 206.9e9,
            foundation_stiffness: 2.069e8,
            load_magnitude: 2.0e7,
            load_steps: 10,
        }
    }
}

/// Clamped 1D Saint-Venant-Kirchhoff bar on an elastic foundation, pulled
/// by a tip load ramped over pseudo-time load steps.
///
/// Strain energy per element is `EA h / 2 * E^2` with Green strain
/// `E = u' + u'^2 / 2`, plus `k_s / 2 * int u^2` from the foundation. The
/// parameter is `mu = [alpha]` and the load at step time `t` is
/// `t * c * sqrt(alpha)`, applied in the last element.
#[derive(Debug, Clone)]
pub struct SaintVenantBar {
    spec: BarSpec,
    mesh: Mesh,
    assembly: AssemblyMap,
    steps: Vec<Step>,
    h: f64,
}

impl SaintVenantBar {
    pub fn new(spec: BarSpec) -> Result<Self> {
        if spec.elements == 0 || spec.load_steps == 0 {
            return Err(Error::Configuration(
                "bar needs at least one element and one load step".into(),
            ));
        }
        let positive = [spec.length, spec.area, spec.young_modulus];
        if !positive.iter().all(|v| v.is_finite() && *v > 0.0)
            || !(spec.foundation_stiffness >= 0.0)
            || !spec.load_magnitude.is_finite()
        {
            return Err(Error::Configuration(format!("invalid bar properties {spec:?}")));
        }
        let mesh = Mesh::interval(spec.elements, spec.length);
        mesh.validate()?;
        let assembly = AssemblyMap::new(&mesh);
        let steps = uniform_steps(spec.load_steps, 1.0 / spec.load_steps as f64);
        let h = spec.length / spec.elements as f64;
        Ok(Self { spec, mesh, assembly, steps, h })
    }

    pub fn spec(&self) -> &BarSpec {
        &self.spec
    }

    fn stiffness(&self) -> f64 {
        self.spec.young_modulus * self.spec.area
    }

    fn strain(&self, u: &[f64]) -> f64 {
        (u[1] - u[0]) / self.h
    }

    fn tip_load(&self, e: usize, step: &Step, mu: &[f64]) -> Result<f64> {
        if e + 1 != self.spec.elements {
            return Ok(0.0);
        }
        Ok(step.time * load_scaling(mu[0], self.spec.load_magnitude)?)
    }

    fn foundation(&self) -> [[f64; 2]; 2] {
        let m = self.spec.foundation_stiffness * self.h;
        [[m / 3.0, m / 6.0], [m / 6.0, m / 3.0]]
    }
}

impl FeProblem for SaintVenantBar {
    fn name(&self) -> &str {
        "saint-venant-bar"
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
        1
    }

    fn element_residual(
        &self,
        e: usize,
        u: &[f64],
        _u_ref: &[f64],
        step: &Step,
        mu: &[f64],
    ) -> Result<DVector<f64>> {
        let eps = self.strain(u);
        let green = eps + 0.5 * eps * eps;
        let axial = self.stiffness() * green * (1.0 + eps);
        let k = self.foundation();
        let mut r = DVector::from_vec(vec![
            -axial + k[0][0] * u[0] + k[0][1] * u[1],
            axial + k[1][0] * u[0] + k[1][1] * u[1],
        ]);
        r[1] -= self.tip_load(e, step, mu)?;
        Ok(r)
    }

    fn element_jacobian(
        &self,
        _e: usize,
        u: &[f64],
        _u_ref: &[f64],
        _step: &Step,
        _mu: &[f64],
    ) -> Result<DMatrix<f64>> {
        let eps = self.strain(u);
        let green = eps + 0.5 * eps * eps;
        let kt = self.stiffness() / self.h * ((1.0 + eps) * (1.0 + eps) + green);
        let k = self.foundation();
        Ok(DMatrix::from_row_slice(
            2,
            2,
            &[kt + k[0][0], -kt + k[0][1], -kt + k[1][0], kt + k[1][1]],
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testbed::{assemble_jacobian, assemble_residual, Frame};

    #[test]
    fn load_scaling_values() {
        assert_eq!(load_scaling(1.0, 5.0).unwrap(), 5.0);
        assert_eq!(load_scaling(4.0, 5.0).unwrap(), 10.0);
        assert_eq!(load_scaling(0.0, 5.0).unwrap(), 0.0);
        assert!(load_scaling(-1.0, 5.0).is_err());
    }

    #[test]
    fn unloaded_equilibrium_has_zero_residual() {
        let bar = SaintVenantBar::new(BarSpec::default()).unwrap();
        let zero = [0.0, 0.0];
        for e in 0..bar.mesh().element_count() {
            let r = bar.element_residual(e, &zero, &zero, &bar.steps()[0], &[0.0]).unwrap();
            assert_eq!(r.as_slice(), &[0.0, 0.0]);
        }
    }

    #[test]
    fn linear_regime_recovers_elastic_stiffness() {
        let spec = BarSpec { foundation_stiffness: 0.0, ..BarSpec::default() };
        let bar = SaintVenantBar::new(spec.clone()).unwrap();
        let zero = [0.0, 0.0];
        let j = bar.element_jacobian(3, &zero, &zero, &bar.steps()[0], &[1.0]).unwrap();
        let k = spec.young_modulus * spec.area * spec.elements as f64 / spec.length;
        let expected = DMatrix::from_row_slice(2, 2, &[k, -k, -k, k]);
        assert!((j - expected).amax() <= 1e-12 * k);
    }

    #[test]
    fn global_jacobian_is_exactly_symmetric() {
        let bar = SaintVenantBar::new(BarSpec::default()).unwrap();
        let n = bar.assembly().free_dofs();
        let u = DVector::from_fn(n, |i, _| 1e-3 * (i as f64).sqrt() * (1.0 + (i as f64).sin()));
        let u_ref = DVector::zeros(n);
        let frame = Frame { u_ref: &u_ref, step: bar.steps()[4], mu: &[1.3] };
        let j = assemble_jacobian(&bar, &u, &frame).unwrap();
        assert_eq!((&j - j.transpose()).amax(), 0.0);
        assert_eq!(assemble_residual(&bar, &u, &frame).unwrap().len(), n);
    }

    #[test]
    fn rejects_bad_spec() {
        assert!(SaintVenantBar::new(BarSpec { elements: 0, ..BarSpec::default() }).is_err());
        assert!(SaintVenantBar::new(BarSpec { area: -1.0, ..BarSpec::default() }).is_err());
    }
}
