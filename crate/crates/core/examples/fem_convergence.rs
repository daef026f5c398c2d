//! P1 Poisson solve against a manufactured solution on refined meshes.

use std::f64::consts::PI;

use goed::fem::{assemble_mass, solve_elliptic, BoundarySpec, Coefficient, Edge, EllipticOperator, Mesh, Rhs};

fn main() -> goed::Result<()> {
    let exact = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
    let op = EllipticOperator::diffusion(Coefficient::Constant(1.0));
    let bcs = BoundarySpec::neumann().with_dirichlet(&Edge::ALL, 0.0);
    let mut prev: Option<f64> = None;
    for n in [9, 17, 33, 65] {
        let mesh = Mesh::new(n)?;
        let f = mesh.interpolate(|x, y| 2.0 * PI * PI * exact(x, y));
        let u = solve_elliptic(&mesh, &op, &Rhs::Nodal(f), &bcs)?;
        let e = u - mesh.interpolate(exact);
        let err = assemble_mass(&mesh).mul_vec(&e).dot(&e).sqrt();
        match prev {
            Some(p) => println!("n = {n:>3}  L2 error {err:.3e}  rate {:.2}", (p / err).log2()),
            None => println!("n = {n:>3}  L2 error {err:.3e}"),
        }
        prev = Some(err);
    }
    Ok(())
}
