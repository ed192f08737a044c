use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nodes, connectivity and constrained DOFs. One DOF per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mesh {
    pub node_coords: Vec<Vec<f64>>,
    pub elements: Vec<Vec<usize>>,
    pub dirichlet_dofs: BTreeSet<usize>,
}

impl Mesh {
    /// Uniform 1D chain on `[0, length]` with the node at `x = 0` clamped.
    pub fn interval(elements: usize, length: f64) -> Self {
        let h = length / elements as f64;
        Self {
            node_coords: (0..=elements).map(|i| vec![i as f64 * h]).collect(),
            elements: (0..elements).map(|e| vec![e, e + 1]).collect(),
            dirichlet_dofs: BTreeSet::from([0]),
        }
    }

    /// Unit square split into `2 * cells^2` counter-clockwise triangles with
    /// every boundary node constrained.
    pub fn unit_square(cells: usize) -> Self {
        let n = cells;
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut node_coords = Vec::with_capacity((n + 1) * (n + 1));
        let mut dirichlet = BTreeSet::new();
        for j in 0..=n {
            for i in 0..=n {
                node_coords.push(vec![i as f64 / n as f64, j as f64 / n as f64]);
                if i == 0 || j == 0 || i == n || j == n {
                    dirichlet.insert(id(i, j));
                }
            }
        }
        let mut elements = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                elements.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                elements.push(vec![id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        Self {
            node_coords,
            elements,
            dirichlet_dofs: dirichlet,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_coords.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    /// Length (2-node) or signed area (3-node) of an element.
    pub fn element_measure(&self, e: usize) -> f64 {
        let nodes = &self.elements[e];
        let p = |k: usize| &self.node_coords[nodes[k]];
        match nodes.len() {
            1 => 1.0,
            2 => (p(1)[0] - p(0)[0]).abs(),
            3 => {
                let (a, b, c) = (p(0), p(1), p(2));
                0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
            }
            _ => f64::NAN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nn = self.node_count();
        for (e, nodes) in self.elements.iter().enumerate() {
            if nodes.is_empty() || nodes.len() > 3 {
                return Err(Error::Assembly {
                    element: e,
                    reason: format!("unsupported element with {} nodes", nodes.len()),
                });
            }
            if let Some(&bad) = nodes.iter().find(|&&n| n >= nn) {
                return Err(Error::Assembly {
                    element: e,
                    reason: format!("node {bad} out of range ({nn} nodes)"),
                });
            }
            let measure = self.element_measure(e);
            if !(measure > 0.0) {
                return Err(Error::Assembly {
                    element: e,
                    reason: format!("degenerate geometry (measure {measure})"),
                });
            }
        }
        if let Some(&bad) = self.dirichlet_dofs.iter().find(|&&d| d >= nn) {
            return Err(Error::InvalidInput(format!(
                "dirichlet dof {bad} outside the {nn} global dofs"
            )));
        }
        Ok(())
    }
}

/// Per-element maps from local DOFs to free global DOFs (`None` if constrained).
#[derive(Debug, Clone, PartialEq)]
pub struct AssemblyMap {
    element_dofs: Vec<Vec<Option<usize>>>,
    free_count: usize,
}

impl AssemblyMap {
    pub fn new(mesh: &Mesh) -> Self {
        let mut numbering = vec![None; mesh.node_count()];
        let mut free_count = 0;
        for (node, slot) in numbering.iter_mut().enumerate() {
            if !mesh.dirichlet_dofs.contains(&node) {
                *slot = Some(free_count);
                free_count += 1;
            }
        }
        let element_dofs = mesh
            .elements
            .iter()
            .map(|nodes| nodes.iter().map(|&n| numbering[n]).collect())
            .collect();
        Self {
            element_dofs,
            free_count,
        }
    }

    pub fn free_dofs(&self) -> usize {
        self.free_count
    }

    pub fn element_count(&self) -> usize {
        self.element_dofs.len()
    }

    pub fn dofs(&self, e: usize) -> &[Option<usize>] {
        &self.element_dofs[e]
    }

    /// `L^e v`: entries of a free-DOF vector at element `e`, zero where constrained.
    pub fn gather(&self, e: usize, v: &[f64]) -> Vec<f64> {
        self.element_dofs[e]
            .iter()
            .map(|d| d.map_or(0.0, |i| v[i]))
            .collect()
    }

    /// `out += L^{eT} local`.
    pub fn scatter_add(&self, e: usize, local: &[f64], out: &mut [f64]) {
        for (d, v) in self.element_dofs[e].iter().zip(local) {
            if let Some(i) = d {
                out[*i] += v;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementPatch {
    pub element: usize,
    /// Sorted ids of all elements sharing a node with `element`, itself included.
    pub patch: Vec<usize>,
}

pub fn element_patches(mesh: &Mesh) -> Vec<ElementPatch> {
    let mut node_elements: Vec<Vec<usize>> = vec![Vec::new(); mesh.node_count()];
    for (e, nodes) in mesh.elements.iter().enumerate() {
        for &n in nodes {
            node_elements[n].push(e);
        }
    }
    mesh.elements
        .iter()
        .enumerate()
        .map(|(e, nodes)| {
            let patch: BTreeSet<usize> = nodes
                .iter()
                .flat_map(|&n| node_elements[n].iter().copied())
                .collect();
            ElementPatch {
                element: e,
                patch: patch.into_iter().collect(),
            }
        })
        .collect()
}
