//! Boundary representation of `F_2` at exponent `1/2`, paired with the
//! constant function, via the uniform measure on reduced infinite words.

use crate::error::{Error, Result};
use crate::groups::{Elem, GroupBackend};

/// `nu(E_k)` for `k = 0..=|g|`, where `E_k` is the set of boundary points whose
/// common prefix with `g^{-1}` has length exactly `k` (`E_{|g|}`: at least `|g|`).
pub fn boundary_masses(group: &GroupBackend, g: &Elem) -> Result<Vec<f64>> {
    if group.is_free() != Some(2) {
        return Err(Error::Domain("the boundary computation is for the free group of rank 2".into()));
    }
    group.validate(g)?;
    let n = group.length(g);
    if n == 0 {
        return Ok(vec![1.0]);
    }
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.75);
    for k in 1..n {
        out.push(0.25 * 3f64.powi(1 - k as i32) * (2.0 / 3.0));
    }
    out.push(0.25 * 3f64.powi(1 - n as i32));
    Ok(out)
}

/// `<pi_{1/2}(g) 1, 1> = sum_k c(g, .)^{1/2} nu(E_k)`, with the Busemann
/// factor `c^{1/2} = 3^{-(|g| - 2k)/2}` on `E_k`.
pub fn boundary_coefficient(group: &GroupBackend, g: &Elem) -> Result<f64> {
    let masses = boundary_masses(group, g)?;
    let n = masses.len() as i32 - 1;
    Ok(masses.iter().enumerate().map(|(k, m)| 3f64.powf(-((n - 2 * k as i32) as f64) / 2.0) * m).sum())
}
