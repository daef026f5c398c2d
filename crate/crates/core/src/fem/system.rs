use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::assembly::{assemble_advection, assemble_mass, assemble_stiffness, Coefficient, Velocity};
use super::{Edge, Mesh};
use crate::error::{check_dim, Error, Result};
use crate::linop::Field;
use crate::sparse::{BandedLu, SparseMatrix};

/// Constant Dirichlet value on a set of edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletCondition {
    pub edges: Vec<Edge>,
    pub value: f64,
}

/// Dirichlet data; edges not listed carry zero-flux Neumann conditions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub dirichlet: Vec<DirichletCondition>,
}

impl BoundarySpec {
    /// Pure Neumann.
    pub fn neumann() -> Self {
        Self::default()
    }

    pub fn with_dirichlet(mut self, edges: &[Edge], value: f64) -> Self {
        self.dirichlet.push(DirichletCondition {
            edges: edges.to_vec(),
            value,
        });
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &self.dirichlet {
            if !c.value.is_finite() {
                return Err(Error::InvalidArgument("Dirichlet value is not finite".into()));
            }
            for e in &c.edges {
                if !seen.insert(*e) {
                    return Err(Error::InvalidArgument(format!(
                        "edge {e:?} appears in more than one Dirichlet set"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Same constraint set with all values set to zero.
    pub fn homogeneous(&self) -> Self {
        Self {
            dirichlet: self
                .dirichlet
                .iter()
                .map(|c| DirichletCondition {
                    edges: c.edges.clone(),
                    value: 0.0,
                })
                .collect(),
        }
    }

    /// Constrained nodes with their values; a corner shared by two sets takes
    /// the value of the first set listed.
    pub fn constrained_nodes(&self, mesh: &Mesh) -> Vec<(usize, f64)> {
        let mut value = vec![None; mesh.num_nodes()];
        for c in &self.dirichlet {
            for &e in &c.edges {
                for k in mesh.edge_nodes(e) {
                    value[k].get_or_insert(c.value);
                }
            }
        }
        value
            .into_iter()
            .enumerate()
            .filter_map(|(k, v)| v.map(|v| (k, v)))
            .collect()
    }
}

/// Coefficients of `−∇·(κ∇u) + v·∇u + r u`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticOperator {
    pub diffusion: Coefficient,
    pub velocity: Velocity,
    pub reaction: f64,
}

impl EllipticOperator {
    pub fn diffusion(kappa: Coefficient) -> Self {
        Self {
            diffusion: kappa,
            velocity: Velocity::Zero,
            reaction: 0.0,
        }
    }

    pub fn assemble(&self, mesh: &Mesh) -> Result<SparseMatrix> {
        if self.diffusion.min_value() <= 0.0 {
            return Err(Error::InvalidArgument("diffusion must be positive".into()));
        }
        let mut a = assemble_stiffness(mesh, &self.diffusion)?;
        if self.velocity != Velocity::Zero {
            a = a.add_scaled(1.0, &assemble_advection(mesh, &self.velocity)?);
        }
        if self.reaction != 0.0 {
            a = a.add_scaled(self.reaction, &assemble_mass(mesh));
        }
        Ok(a)
    }
}

/// Right-hand side of an elliptic solve.
#[derive(Debug, Clone)]
pub enum Rhs {
    /// Nodal source `f`; the load is `M f`.
    Nodal(Field),
    /// Assembled load vector `ℓ_i = ℓ(φ_i)`.
    Functional(Field),
}

/// Matrix with Dirichlet rows and columns eliminated and the free block
/// factorized. Counts every solve performed through it.
#[derive(Debug)]
pub struct AssembledSystem {
    matrix: SparseMatrix,
    free: Vec<usize>,
    constrained: Vec<(usize, f64)>,
    coupling: SparseMatrix,
    lu: BandedLu,
    solves: AtomicUsize,
}

impl AssembledSystem {
    pub fn new(mesh: &Mesh, matrix: SparseMatrix, bcs: &BoundarySpec) -> Result<Self> {
        bcs.validate()?;
        check_dim(mesh.num_nodes(), matrix.nrows())?;
        let constrained = bcs.constrained_nodes(mesh);
        let mut is_free = vec![true; mesh.num_nodes()];
        for &(k, _) in &constrained {
            is_free[k] = false;
        }
        let free: Vec<usize> = (0..mesh.num_nodes()).filter(|&k| is_free[k]).collect();
        let fixed: Vec<usize> = constrained.iter().map(|&(k, _)| k).collect();
        let lu = BandedLu::factor(&matrix.submatrix(&free, &free)).map_err(|e| match e {
            Error::SingularSystem { row, .. } => Error::SingularSystem {
                context: format!("elliptic system with {} constrained nodes", constrained.len()),
                row: free.get(row).copied().unwrap_or(row),
            },
            other => other,
        })?;
        let coupling = matrix.submatrix(&free, &fixed);
        Ok(Self {
            matrix,
            free,
            constrained,
            coupling,
            lu,
            solves: AtomicUsize::new(0),
        })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn constrained(&self) -> &[(usize, f64)] {
        &self.constrained
    }

    pub fn solve_count(&self) -> usize {
        self.solves.load(Ordering::SeqCst)
    }

    pub fn reset_count(&self) {
        self.solves.store(0, Ordering::SeqCst);
    }

    fn restrict(&self, v: &Field) -> Field {
        Field::from_iterator(self.free.len(), self.free.iter().map(|&k| v[k]))
    }

    fn extend(&self, x: &Field, with_data: bool) -> Field {
        let mut out = Field::zeros(self.matrix.nrows());
        for (i, &k) in self.free.iter().enumerate() {
            out[k] = x[i];
        }
        if with_data {
            for &(k, v) in &self.constrained {
                out[k] = v;
            }
        }
        out
    }

    /// Solution with the Dirichlet data imposed, for load vector `load`.
    pub fn solve(&self, load: &Field) -> Result<Field> {
        check_dim(self.matrix.nrows(), load.len())?;
        self.solves.fetch_add(1, Ordering::SeqCst);
        let data = Field::from_iterator(self.constrained.len(), self.constrained.iter().map(|&(_, v)| v));
        let rhs = self.restrict(load) - self.coupling.mul_vec(&data);
        Ok(self.extend(&self.lu.solve(&rhs), true))
    }

    /// Solution with zero Dirichlet data.
    pub fn solve_homogeneous(&self, load: &Field) -> Result<Field> {
        check_dim(self.matrix.nrows(), load.len())?;
        self.solves.fetch_add(1, Ordering::SeqCst);
        Ok(self.extend(&self.lu.solve(&self.restrict(load)), false))
    }

    /// Transposed solve with zero Dirichlet data (adjoint equations).
    pub fn solve_transpose_homogeneous(&self, load: &Field) -> Result<Field> {
        check_dim(self.matrix.nrows(), load.len())?;
        self.solves.fetch_add(1, Ordering::SeqCst);
        Ok(self.extend(&self.lu.solve_transpose(&self.restrict(load)), false))
    }
}

/// Galerkin solution of `−∇·(κ∇u) + v·∇u + r u = rhs` with boundary data `bcs`.
pub fn solve_elliptic(mesh: &Mesh, op: &EllipticOperator, rhs: &Rhs, bcs: &BoundarySpec) -> Result<Field> {
    if bcs.dirichlet.iter().all(|c| c.edges.is_empty()) && op.reaction <= 0.0 {
        return Err(Error::InvalidArgument(
            "pure Neumann problem needs a positive reaction term".into(),
        ));
    }
    let system = AssembledSystem::new(mesh, op.assemble(mesh)?, bcs)?;
    let load = match rhs {
        Rhs::Nodal(f) => {
            check_dim(mesh.num_nodes(), f.len())?;
            assemble_mass(mesh).mul_vec(f)
        }
        Rhs::Functional(l) => l.clone(),
    };
    system.solve(&load)
}
