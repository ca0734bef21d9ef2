//! Closed-form least-squares fit of a single color transform.

use super::StylePair;
use crate::color::{quadratic_basis, ColorTransform, Lab, BASIS_LEN};
use crate::error::{Error, Result};

const NAMES: [&str; BASIS_LEN] = ["L^2", "a^2", "b^2", "L*a", "L*b", "a*b", "L", "a", "b", "1"];

/// Relative pivot size below which the scaled Gram matrix is treated as
/// singular. The scaled matrix has a unit diagonal.
const PIVOT_TOLERANCE: f64 = 1e-12;

/// The transform minimizing the summed squared Lab error over every pixel of
/// every pair.
pub fn fit_global_transform(pairs: &[StylePair]) -> Result<ColorTransform> {
    fit_transform(
        pairs
            .iter()
            .flat_map(|p| p.input.pixels().iter().copied().zip(p.target.pixels().iter().copied())),
    )
}

/// Least-squares transform over arbitrary `(input, target)` color samples.
///
/// Basis columns are scaled to unit RMS before forming the normal
/// equations, which are solved by Gaussian elimination with partial
/// pivoting; the result is returned in raw Lab units.
pub fn fit_transform(samples: impl IntoIterator<Item = (Lab, Lab)>) -> Result<ColorTransform> {
    let rows: Vec<([f64; BASIS_LEN], [f64; 3])> = samples
        .into_iter()
        .map(|(x, y)| (quadratic_basis(x).0, y.to_array()))
        .collect();
    if rows.len() < BASIS_LEN {
        return Err(Error::RankDeficient(format!(
            "{} color samples cannot determine {BASIS_LEN} coefficients",
            rows.len()
        )));
    }

    let mut scale = [0.0; BASIS_LEN];
    for (b, _) in &rows {
        for k in 0..BASIS_LEN {
            scale[k] += b[k] * b[k];
        }
    }
    for (k, s) in scale.iter_mut().enumerate() {
        *s = (*s / rows.len() as f64).sqrt();
        if *s == 0.0 {
            return Err(Error::RankDeficient(format!("basis column {} is identically zero", NAMES[k])));
        }
    }

    let mut gram = [[0.0; BASIS_LEN]; BASIS_LEN];
    let mut rhs = [[0.0; 3]; BASIS_LEN];
    for (b, y) in &rows {
        let u: [f64; BASIS_LEN] = std::array::from_fn(|k| b[k] / scale[k]);
        for i in 0..BASIS_LEN {
            for j in i..BASIS_LEN {
                gram[i][j] += u[i] * u[j];
            }
            for c in 0..3 {
                rhs[i][c] += u[i] * y[c];
            }
        }
    }
    for i in 0..BASIS_LEN {
        for j in 0..i {
            gram[i][j] = gram[j][i];
        }
    }

    let solution = solve(gram, rhs)?;
    let mut t = ColorTransform::zero();
    for (r, row) in t.m.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = solution[k][r] / scale[k];
        }
    }
    Ok(t)
}

/// Solves `A X = B` for a 10x10 system with three right-hand sides.
fn solve(mut a: [[f64; BASIS_LEN]; BASIS_LEN], mut b: [[f64; 3]; BASIS_LEN]) -> Result<[[f64; 3]; BASIS_LEN]> {
    let n = BASIS_LEN;
    let norm = (0..n).map(|i| a[i][i].abs()).fold(0.0, f64::max);
    let mut order: [usize; BASIS_LEN] = std::array::from_fn(|i| i);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        if !(a[pivot][col].abs() > PIVOT_TOLERANCE * norm) {
            return Err(Error::RankDeficient(format!(
                "no usable pivot for basis column {} (the input colors do not span the quadratic basis)",
                NAMES[order[col]]
            )));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        order.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            for c in 0..3 {
                b[row][c] -= f * b[col][c];
            }
        }
    }
    let mut x = [[0.0; 3]; BASIS_LEN];
    for row in (0..n).rev() {
        for c in 0..3 {
            let mut acc = b[row][c];
            for k in row + 1..n {
                acc -= a[row][k] * x[k][c];
            }
            x[row][c] = acc / a[row][row];
        }
    }
    Ok(x)
}
