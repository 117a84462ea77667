//! Small dense float helpers: LU with partial pivoting for the mass-matrix
//! solves and determinants. Systems here are m x m with m rarely above ten,
//! so a straightforward O(n^3) factorization is the right tool.

/// LU factorization with partial pivoting. Returns (lu, perm, sign) or None
/// if a pivot is exactly zero (structurally singular input).
fn lu_factor(a: &[Vec<f64>]) -> Option<(Vec<Vec<f64>>, Vec<usize>, f64)> {
    let n = a.len();
    let mut lu: Vec<Vec<f64>> = a.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;
    for col in 0..n {
        let mut piv = col;
        let mut best = lu[col][col].abs();
        for r in (col + 1)..n {
            let v = lu[r][col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return None;
        }
        if piv != col {
            lu.swap(piv, col);
            perm.swap(piv, col);
            sign = -sign;
        }
        let d = lu[col][col];
        for r in (col + 1)..n {
            let f = lu[r][col] / d;
            lu[r][col] = f;
            for c in (col + 1)..n {
                lu[r][c] -= f * lu[col][c];
            }
        }
    }
    Some((lu, perm, sign))
}

/// Solve a x = b by LU with partial pivoting. None when a pivot vanishes.
pub fn lu_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = a.len();
    assert_eq!(b.len(), n, "dimension mismatch");
    if n == 0 {
        return Some(Vec::new());
    }
    let (lu, perm, _) = lu_factor(a)?;
    let mut x: Vec<f64> = perm.iter().map(|&p| b[p]).collect();
    for i in 1..n {
        for j in 0..i {
            x[i] -= lu[i][j] * x[j];
        }
    }
    for i in (0..n).rev() {
        for j in (i + 1)..n {
            x[i] -= lu[i][j] * x[j];
        }
        x[i] /= lu[i][i];
    }
    Some(x)
}

/// Determinant via the same factorization (0.0 when a pivot vanishes).
pub fn det(a: &[Vec<f64>]) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    match lu_factor(a) {
        Some((lu, _, sign)) => {
            let mut d = sign;
            for (i, row) in lu.iter().enumerate() {
                d *= row[i];
            }
            d
        }
        None => 0.0,
    }
}

pub fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum()).collect()
}

/// Max-norm of a vector.
pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
