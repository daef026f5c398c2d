use super::Mesh;
use crate::error::{check_dim, Result};
use crate::linop::Field;
use crate::sparse::{SparseMatrix, TripletBuilder};

/// Uniform `s × s` sensor grid at cell centers `((i + ½)/s, (j + ½)/s)`,
/// ordered x fastest.
pub fn sensor_grid(s: usize) -> Vec<[f64; 2]> {
    let h = 1.0 / s as f64;
    (0..s * s)
        .map(|k| [((k % s) as f64 + 0.5) * h, ((k / s) as f64 + 0.5) * h])
        .collect()
}

/// Pointwise evaluation `B`: row `i` holds the barycentric weights of sensor `i`.
pub fn observation_matrix(mesh: &Mesh, sensors: &[[f64; 2]]) -> Result<SparseMatrix> {
    let mut tb = TripletBuilder::new(sensors.len(), mesh.num_nodes());
    for (i, s) in sensors.iter().enumerate() {
        let (e, w) = mesh.locate(s[0], s[1])?;
        for (a, &v) in mesh.elements()[e].iter().enumerate() {
            if w[a] != 0.0 {
                tb.add(i, v, w[a]);
            }
        }
    }
    Ok(tb.build())
}

/// Values of the piecewise linear field `state` at the sensors.
pub fn apply_observation(mesh: &Mesh, sensors: &[[f64; 2]], state: &Field) -> Result<Field> {
    check_dim(mesh.num_nodes(), state.len())?;
    Ok(observation_matrix(mesh, sensors)?.mul_vec(state))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_sensor_reads_nodal_value() {
        let mesh = Mesh::new(5).unwrap();
        let u = mesh.interpolate(|x, y| (x * 7.0).sin() + y * y);
        let k = 3 * 5 + 2;
        let p = mesh.nodes()[k];
        let v = apply_observation(&mesh, &[p], &u).unwrap();
        assert!((v[0] - u[k]).abs() < 1e-14);
    }

    #[test]
    fn linear_fields_are_reproduced() {
        let mesh = Mesh::new(6).unwrap();
        let u = mesh.interpolate(|x, y| x + 2.0 * y);
        let pts: Vec<[f64; 2]> = (0..mesh.elements().len()).map(|e| mesh.centroid(e)).collect();
        let v = apply_observation(&mesh, &pts, &u).unwrap();
        for (p, val) in pts.iter().zip(v.iter()) {
            assert!((val - (p[0] + 2.0 * p[1])).abs() < 1e-13);
        }
    }

    #[test]
    fn fifteen_squared_grid() {
        let mesh = Mesh::new(30).unwrap();
        let b = observation_matrix(&mesh, &sensor_grid(15)).unwrap();
        assert_eq!(b.nrows(), 225);
        for i in 0..225 {
            assert!(b.row(i).count() <= 3);
            let s: f64 = b.row(i).map(|(_, v)| v).sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn outside_points_are_rejected() {
        let mesh = Mesh::new(4).unwrap();
        assert!(observation_matrix(&mesh, &[[1.2, 0.5]]).is_err());
        assert!(observation_matrix(&mesh, &[[0.5, f64::NAN]]).is_err());
    }
}
