//! Small dense, tridiagonal, and banded linear solvers.
//!
//! The Newton systems assembled by the solvers are banded (tridiagonal for a
//! single component, pentadiagonal-with-interleaving for two components)
//! bordered by a few dense rows and columns from the mass constraints and the
//! multiplier unknowns. The bordered system is solved by factoring the banded
//! core with partial pivoting and forming the small Schur complement on the
//! border block.

use crate::error::SolverError;
use crate::Result;

/// Solves a tridiagonal system in place (Thomas algorithm, no pivoting).
/// Suitable for diagonally dominant systems such as shifted Laplacians.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    assert_eq!(lower.len(), n - 1);
    assert_eq!(upper.len(), n - 1);
    assert_eq!(rhs.len(), n);
    let mut c = vec![0.0; n - 1];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom.abs() < f64::MIN_POSITIVE {
        return Err(SolverError::SingularJacobian("tridiagonal pivot = 0".into()));
    }
    c[0] = upper[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i - 1] * c[i - 1];
        if denom.abs() < 1e-300 {
            return Err(SolverError::SingularJacobian(format!(
                "tridiagonal pivot ~ 0 at row {i}"
            )));
        }
        if i < n - 1 {
            c[i] = upper[i] / denom;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Ok(x)
}

/// Band matrix with `kl` subdiagonals and `ku` superdiagonals, stored row-wise
/// with room for the fill-in produced by partial pivoting.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// Working row width `kl + (ku + kl) + 1`.
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> Option<usize> {
        if j >= self.n || i >= self.n {
            return None;
        }
        let d = j as isize - i as isize + self.kl as isize;
        if d < 0 || d as usize >= self.width {
            return None;
        }
        Some(i * self.width + d as usize)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.idx(i, j).map(|k| self.data[k]).unwrap_or(0.0)
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .idx(i, j)
            .unwrap_or_else(|| panic!("({i},{j}) outside band kl={} ku={}", self.kl, self.ku));
        self.data[k] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .idx(i, j)
            .unwrap_or_else(|| panic!("({i},{j}) outside band kl={} ku={}", self.kl, self.ku));
        self.data[k] += v;
    }

    /// LU factorization with partial pivoting; consumes the matrix.
    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let kl = self.kl;
        let upper_w = self.kl + self.ku; // widest fill after pivoting
        let mut pivots = vec![0usize; n];
        for j in 0..n {
            // pivot search in column j among rows j..=j+kl
            let last = (j + kl).min(n - 1);
            let mut p = j;
            let mut best = self.get(j, j).abs();
            for i in j + 1..=last {
                let v = self.get(i, j).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best < 1e-300 {
                return Err(SolverError::SingularJacobian(format!(
                    "banded pivot ~ 0 in column {j}"
                )));
            }
            pivots[j] = p;
            if p != j {
                let hi = (j + upper_w).min(n - 1);
                for c in j..=hi {
                    let a = self.get(j, c);
                    let b = self.get(p, c);
                    self.set(j, c, b);
                    self.set(p, c, a);
                }
            }
            let pivot = self.get(j, j);
            let hi = (j + upper_w).min(n - 1);
            for i in j + 1..=last {
                let m = self.get(i, j) / pivot;
                self.set(i, j, m); // store multiplier in place
                if m != 0.0 {
                    for c in j + 1..=hi {
                        let v = self.get(j, c);
                        if v != 0.0 {
                            self.add(i, c, -m * v);
                        }
                    }
                }
            }
        }
        Ok(BandLu {
            mat: self,
            pivots,
        })
    }
}

/// Factored banded matrix plus pivot sequence.
#[derive(Debug, Clone)]
pub struct BandLu {
    mat: BandMatrix,
    pivots: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.mat.n;
        let kl = self.mat.kl;
        let upper_w = self.mat.kl + self.mat.ku;
        let mut x = rhs.to_vec();
        // forward: apply pivots and multipliers
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                x.swap(j, p);
            }
            let last = (j + kl).min(n - 1);
            for i in j + 1..=last {
                let m = self.mat.get(i, j);
                if m != 0.0 {
                    x[i] -= m * x[j];
                }
            }
        }
        // back substitution
        for i in (0..n).rev() {
            let hi = (i + upper_w).min(n - 1);
            let mut s = x[i];
            for c in i + 1..=hi {
                s -= self.mat.get(i, c) * x[c];
            }
            x[i] = s / self.mat.get(i, i);
        }
        x
    }
}

/// Solves the bordered system
/// `[A  C; D  E] [x; y] = [f; g]`
/// with `A` banded (already factored), `C` column border, `D` row border,
/// `E` a small dense block. `m = y.len()` is expected to be tiny (1-4).
pub fn solve_bordered(
    lu: &BandLu,
    columns: &[Vec<f64>],
    rows: &[Vec<f64>],
    corner: &[Vec<f64>],
    f: &[f64],
    g: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = g.len();
    assert_eq!(columns.len(), m);
    assert_eq!(rows.len(), m);
    assert_eq!(corner.len(), m);
    let w = lu.solve(f);
    let z: Vec<Vec<f64>> = columns.iter().map(|c| lu.solve(c)).collect();
    // Schur complement S = E - D Z and reduced RHS g - D w.
    let mut s = vec![vec![0.0; m]; m];
    let mut rhs = vec![0.0; m];
    for i in 0..m {
        for j in 0..m {
            let dz: f64 = rows[i].iter().zip(&z[j]).map(|(a, b)| a * b).sum();
            s[i][j] = corner[i][j] - dz;
        }
        let dw: f64 = rows[i].iter().zip(&w).map(|(a, b)| a * b).sum();
        rhs[i] = g[i] - dw;
    }
    let y = solve_dense_small(&mut s, &mut rhs)?;
    let mut x = w;
    for (j, zj) in z.iter().enumerate() {
        for (xi, zi) in x.iter_mut().zip(zj) {
            *xi -= zi * y[j];
        }
    }
    Ok((x, y))
}

/// Gaussian elimination with partial pivoting for tiny dense systems.
pub fn solve_dense_small(a: &mut [Vec<f64>], b: &mut [f64]) -> Result<Vec<f64>> {
    let n = b.len();
    for j in 0..n {
        let mut p = j;
        for i in j + 1..n {
            if a[i][j].abs() > a[p][j].abs() {
                p = i;
            }
        }
        if a[p][j].abs() < 1e-300 {
            return Err(SolverError::SingularJacobian(
                "singular Schur complement".into(),
            ));
        }
        a.swap(j, p);
        b.swap(j, p);
        for i in j + 1..n {
            let m = a[i][j] / a[j][j];
            if m != 0.0 {
                for c in j..n {
                    let v = a[j][c];
                    a[i][c] -= m * v;
                }
                b[i] -= m * b[j];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for c in i + 1..n {
            s -= a[i][c] * x[c];
        }
        x[i] = s / a[i][i];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let mut a: Vec<Vec<f64>> = a.to_vec();
        let mut b = b.to_vec();
        solve_dense_small(&mut a, &mut b).unwrap()
    }

    #[test]
    fn thomas_matches_dense() {
        let n = 12;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let lower: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let upper: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let diag: Vec<f64> = (0..n).map(|_| rng.gen_range(3.0..4.0)).collect();
        let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = diag[i];
            if i + 1 < n {
                a[i + 1][i] = lower[i];
                a[i][i + 1] = upper[i];
            }
        }
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        let xd = dense_solve(&a, &rhs);
        for (u, v) in x.iter().zip(&xd) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn banded_lu_matches_dense_with_pivoting_stress() {
        let n = 40;
        let (kl, ku) = (2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut band = BandMatrix::zeros(n, kl, ku);
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                // occasional tiny diagonal forces pivoting
                let v = if i == j && i % 7 == 3 {
                    1e-12
                } else {
                    rng.gen_range(-1.0..1.0)
                };
                band.set(i, j, v);
                dense[i][j] = v;
            }
        }
        let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lu = band.factor().unwrap();
        let x = lu.solve(&rhs);
        // residual check against the dense matrix
        for i in 0..n {
            let ax: f64 = (0..n).map(|j| dense[i][j] * x[j]).sum();
            assert!(
                (ax - rhs[i]).abs() < 1e-8,
                "row {i} residual {}",
                (ax - rhs[i]).abs()
            );
        }
    }

    #[test]
    fn bordered_solve_matches_dense() {
        let n = 25;
        let m = 2;
        let (kl, ku) = (2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut band = BandMatrix::zeros(n, kl, ku);
        let mut dense = vec![vec![0.0; n + m]; n + m];
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                let v = rng.gen_range(-1.0..1.0) + if i == j { 4.0 } else { 0.0 };
                band.set(i, j, v);
                dense[i][j] = v;
            }
        }
        let mut columns = vec![vec![0.0; n]; m];
        let mut rows = vec![vec![0.0; n]; m];
        let mut corner = vec![vec![0.0; m]; m];
        for k in 0..m {
            for i in 0..n {
                columns[k][i] = rng.gen_range(-1.0..1.0);
                rows[k][i] = rng.gen_range(-1.0..1.0);
                dense[i][n + k] = columns[k][i];
                dense[n + k][i] = rows[k][i];
            }
            for l in 0..m {
                corner[k][l] = rng.gen_range(-1.0..1.0) + if k == l { 2.0 } else { 0.0 };
                dense[n + k][n + l] = corner[k][l];
            }
        }
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lu = band.factor().unwrap();
        let (x, y) = solve_bordered(&lu, &columns, &rows, &corner, &f, &g).unwrap();
        let mut full_rhs = f.clone();
        full_rhs.extend_from_slice(&g);
        let full = dense_solve(&dense, &full_rhs);
        for i in 0..n {
            assert!((x[i] - full[i]).abs() < 1e-10, "x[{i}]");
        }
        for k in 0..m {
            assert!((y[k] - full[n + k]).abs() < 1e-10, "y[{k}]");
        }
    }
}
