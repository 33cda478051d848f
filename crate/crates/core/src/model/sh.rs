use crate::error::{MfnError, Result};
use crate::linalg::RMat;

/// Representation size `(L + 1)²` for `L ≤ 1`.
pub fn rep_dim(l_max: usize) -> Result<usize> {
    match l_max {
        0 => Ok(1),
        1 => Ok(4),
        _ => Err(MfnError::Unsupported(format!("L = {l_max} (only L <= 1)"))),
    }
}

/// Real spherical harmonics up to `l = 1` of a non-zero displacement,
/// component-normalised, with the `l = 1` part ordered `(y, z, x)`.
pub fn spherical_harmonics(d: [f64; 3]) -> Result<[f64; 4]> {
    let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if !(r > 0.0) || !r.is_finite() {
        return Err(MfnError::DegenerateGeometry(format!("zero-length edge {d:?}")));
    }
    let s = 3f64.sqrt() / r;
    Ok([1.0, s * d[1], s * d[2], s * d[0]])
}

// (y, z, x) ordering: component k of the l = 1 block is Cartesian axis PERM[k]
const PERM: [usize; 3] = [1, 2, 0];

fn orthogonal_residual(r: &[[f64; 3]; 3]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot - target).abs());
        }
    }
    worst
}

pub(crate) fn det3(r: &[[f64; 3]; 3]) -> f64 {
    r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
}

fn block(q: &[[f64; 3]; 3], l_max: usize) -> Result<RMat> {
    let m = rep_dim(l_max)?;
    let mut out = RMat::identity(m);
    if l_max == 1 {
        for a in 0..3 {
            for b in 0..3 {
                out[(1 + a, 1 + b)] = q[PERM[a]][PERM[b]];
            }
        }
    }
    Ok(out)
}

/// `diag(1, D¹(R))` for a proper rotation, with `D¹` the rotation
/// expressed in the `(y, z, x)` ordering.
pub fn wigner_block(r: &[[f64; 3]; 3], l_max: usize) -> Result<RMat> {
    if orthogonal_residual(r) > 1e-10 || (det3(r) - 1.0).abs() > 1e-10 {
        return Err(MfnError::Precondition("not a proper rotation".into()));
    }
    block(r, l_max)
}

/// Representation of an orthogonal map with `det = ±1`. The `l = 1`
/// components transform as a polar vector, so reflections act through
/// the same conjugated matrix.
pub fn o3_block(q: &[[f64; 3]; 3], l_max: usize) -> Result<RMat> {
    if orthogonal_residual(q) > 1e-10 {
        return Err(MfnError::Precondition("not an orthogonal matrix".into()));
    }
    block(q, l_max)
}

/// Uniformly distributed rotation from three uniforms in `[0, 1)`.
pub fn rotation_from_uniform(u: [f64; 3]) -> [[f64; 3]; 3] {
    // unit quaternion by Shoemake's method
    let (a, b) = ((1.0 - u[0]).sqrt(), u[0].sqrt());
    let tau = std::f64::consts::TAU;
    let (w, x, y, z) = (
        a * (tau * u[1]).sin(),
        a * (tau * u[1]).cos(),
        b * (tau * u[2]).sin(),
        b * (tau * u[2]).cos(),
    );
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ]
}
