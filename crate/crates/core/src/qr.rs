//! Householder QR for the small, tall designs used by the regressions.

use crate::error::{CcmError, Result};

/// Relative threshold on `|R_kk| / ||x_k||` below which column `k` is treated
/// as lying in the span of the preceding columns.
const RANK_TOLERANCE: f64 = 1e-10;

/// Column-major design matrix with column labels.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    nrows: usize,
    names: Vec<String>,
    data: Vec<f64>,
}

impl DesignMatrix {
    pub fn from_columns(names: &[&str], columns: Vec<Vec<f64>>) -> Self {
        assert_eq!(names.len(), columns.len(), "one name per column");
        let nrows = columns.first().map_or(0, Vec::len);
        assert!(columns.iter().all(|c| c.len() == nrows), "ragged design");
        Self {
            nrows,
            names: names.iter().map(|s| s.to_string()).collect(),
            data: columns.concat(),
        }
    }

    pub fn from_rows(names: &[&str], rows: &[Vec<f64>]) -> Self {
        let p = names.len();
        let columns = (0..p).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Self::from_columns(names, columns)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.nrows + i]
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }
}

/// Compact Householder factorization `X = QR`.
#[derive(Debug, Clone)]
pub struct Qr {
    nrows: usize,
    ncols: usize,
    /// Householder vectors below the diagonal, R on and above it.
    packed: Vec<f64>,
    /// `v_k[k]` for each reflector (the part overwritten by `R_kk`).
    v_head: Vec<f64>,
    /// `2 / (v_k' v_k)`, zero when the reflector is the identity.
    beta: Vec<f64>,
}

impl Qr {
    /// Factors `design`, failing if it is not of full column rank.
    pub fn factor(design: &DesignMatrix) -> Result<Qr> {
        let (n, p) = (design.nrows(), design.ncols());
        if n < p {
            return Err(CcmError::Singular {
                columns: design.names()[n..].to_vec(),
                arm: None,
            });
        }
        let mut a = design.data.clone();
        let col_norms: Vec<f64> = (0..p).map(|j| norm(design.column(j))).collect();
        let mut v_head = vec![0.0; p];
        let mut beta = vec![0.0; p];

        for k in 0..p {
            let (done, rest) = a.split_at_mut((k + 1) * n);
            let col = &mut done[k * n..];
            let sub = &mut col[k..];
            let sigma = norm(sub);
            if sigma <= RANK_TOLERANCE * col_norms[k] || col_norms[k] == 0.0 {
                return Err(CcmError::Singular {
                    columns: vec![design.names()[k].clone()],
                    arm: None,
                });
            }
            let alpha = if sub[0] > 0.0 { -sigma } else { sigma };
            sub[0] -= alpha;
            let vtv: f64 = sub.iter().map(|x| x * x).sum();
            let b = 2.0 / vtv;
            // Apply the reflector to the remaining columns.
            for j in 0..(p - k - 1) {
                let target = &mut rest[j * n + k..(j + 1) * n];
                let dot: f64 = sub.iter().zip(target.iter()).map(|(v, x)| v * x).sum();
                let s = b * dot;
                for (x, v) in target.iter_mut().zip(sub.iter()) {
                    *x -= s * v;
                }
            }
            v_head[k] = sub[0];
            beta[k] = b;
            sub[0] = alpha;
        }
        Ok(Qr {
            nrows: n,
            ncols: p,
            packed: a,
            v_head,
            beta,
        })
    }

    #[inline]
    fn r(&self, i: usize, j: usize) -> f64 {
        self.packed[j * self.nrows + i]
    }

    /// Overwrites `y` with `Q' y`.
    fn apply_qt(&self, y: &mut [f64]) {
        let n = self.nrows;
        for k in 0..self.ncols {
            let v = &self.packed[k * n + k + 1..(k + 1) * n];
            let tail = &y[k + 1..];
            let dot = self.v_head[k] * y[k]
                + v.iter().zip(tail).map(|(a, b)| a * b).sum::<f64>();
            let s = self.beta[k] * dot;
            y[k] -= s * self.v_head[k];
            for (yi, vi) in y[k + 1..].iter_mut().zip(v) {
                *yi -= s * vi;
            }
        }
    }

    /// Least-squares coefficients and residual sum of squares for `response`.
    pub fn solve(&self, response: &[f64]) -> (Vec<f64>, f64) {
        assert_eq!(response.len(), self.nrows);
        let mut qty = response.to_vec();
        self.apply_qt(&mut qty);
        let rss = qty[self.ncols..].iter().map(|x| x * x).sum();
        let coef = self.back_substitute(&qty[..self.ncols]);
        (coef, rss)
    }

    fn back_substitute(&self, rhs: &[f64]) -> Vec<f64> {
        let p = self.ncols;
        let mut x = rhs.to_vec();
        for i in (0..p).rev() {
            let mut s = x[i];
            for j in i + 1..p {
                s -= self.r(i, j) * x[j];
            }
            x[i] = s / self.r(i, i);
        }
        x
    }

    /// `R^{-1}` as a dense row-major upper-triangular matrix.
    fn r_inverse(&self) -> Vec<f64> {
        let p = self.ncols;
        let mut inv = vec![0.0; p * p];
        for col in 0..p {
            for i in (0..=col).rev() {
                let mut s = if i == col { 1.0 } else { 0.0 };
                for j in i + 1..=col {
                    s -= self.r(i, j) * inv[j * p + col];
                }
                inv[i * p + col] = s / self.r(i, i);
            }
        }
        inv
    }

    /// `(X'X)^{-1} = R^{-1} R^{-T}`, row-major `p x p`.
    pub fn xtx_inverse(&self) -> Vec<f64> {
        let p = self.ncols;
        let ri = self.r_inverse();
        let mut out = vec![0.0; p * p];
        for i in 0..p {
            for j in i..p {
                let s: f64 = (j..p).map(|k| ri[i * p + k] * ri[j * p + k]).sum();
                out[i * p + j] = s;
                out[j * p + i] = s;
            }
        }
        out
    }

    /// Leverages `h_ii = x_i' (X'X)^{-1} x_i` for every row of `design`.
    pub fn leverages(&self, design: &DesignMatrix) -> Vec<f64> {
        let p = self.ncols;
        let ri = self.r_inverse();
        (0..design.nrows())
            .map(|i| {
                // z = R^{-T} x_i, h = ||z||^2
                (0..p)
                    .map(|k| {
                        let z: f64 = (0..=k).map(|j| ri[j * p + k] * design.get(i, j)).sum();
                        z * z
                    })
                    .sum()
            })
            .collect()
    }
}

fn norm(x: &[f64]) -> f64 {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * x.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt()
}

/// Unique minimizer of `||response - design * b||^2`.
pub fn solve_least_squares(design: &DesignMatrix, response: &[f64]) -> Result<Vec<f64>> {
    if response.len() != design.nrows() {
        return Err(CcmError::InvalidArgument(format!(
            "response has {} rows, design has {}",
            response.len(),
            design.nrows()
        )));
    }
    Ok(Qr::factor(design)?.solve(response).0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn identity_design() {
        let x = DesignMatrix::from_rows(
            &["a", "b", "c"],
            &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        );
        let b = solve_least_squares(&x, &[1.0, 2.0, 3.0]).unwrap();
        assert!(close(&b, &[1.0, 2.0, 3.0], 1e-14));
    }

    #[test]
    fn intercept_only_gives_mean() {
        let x = DesignMatrix::from_columns(&["intercept"], vec![vec![1.0; 3]]);
        let b = solve_least_squares(&x, &[2.0, 4.0, 6.0]).unwrap();
        assert!(close(&b, &[4.0], 1e-14));
    }

    #[test]
    fn f1_mediator_design_gives_group_means() {
        let t1 = [0., 0., 0., 1., 1., 1., 0., 0., 0.];
        let t2 = [0., 0., 0., 0., 0., 0., 1., 1., 1.];
        let m = [0., 0., 1., 1., 0., 1., 1., 1., 1.];
        let x = DesignMatrix::from_columns(
            &["intercept", "t1", "t2"],
            vec![vec![1.0; 9], t1.to_vec(), t2.to_vec()],
        );
        let b = solve_least_squares(&x, &m).unwrap();
        assert!(close(&b, &[1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0], 1e-14));
    }

    #[test]
    fn rank_deficiency_names_column() {
        let x = DesignMatrix::from_columns(
            &["intercept", "t1", "dup"],
            vec![vec![1.0; 4], vec![0., 1., 0., 1.], vec![2.0; 4]],
        );
        let err = solve_least_squares(&x, &[1.0, 2.0, 3.0, 4.0]).unwrap_err();
        assert_eq!(
            err,
            CcmError::Singular {
                columns: vec!["dup".into()],
                arm: None
            }
        );
    }

    #[test]
    fn zero_column_is_singular() {
        let x = DesignMatrix::from_columns(&["intercept", "t2"], vec![vec![1.0; 3], vec![0.0; 3]]);
        assert!(solve_least_squares(&x, &[1.0, 2.0, 3.0]).unwrap_err().is_singular());
    }

    #[test]
    fn xtx_inverse_and_leverages() {
        // Simple regression on x = 0,1,2,3: (X'X) = [[4,6],[6,14]].
        let x = DesignMatrix::from_columns(&["1", "x"], vec![vec![1.0; 4], vec![0., 1., 2., 3.]]);
        let qr = Qr::factor(&x).unwrap();
        let inv = qr.xtx_inverse();
        let det = 4.0 * 14.0 - 36.0;
        assert!(close(&inv, &[14.0 / det, -6.0 / det, -6.0 / det, 4.0 / det], 1e-13));
        let h = qr.leverages(&x);
        let expected: Vec<f64> = (0..4)
            .map(|i| {
                let xi = i as f64;
                (14.0 - 12.0 * xi + 4.0 * xi * xi) / det
            })
            .collect();
        assert!(close(&h, &expected, 1e-13));
        assert!((h.iter().sum::<f64>() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn residual_sum_of_squares() {
        let x = DesignMatrix::from_columns(&["1", "x"], vec![vec![1.0; 4], vec![0., 1., 2., 3.]]);
        let (b, rss) = Qr::factor(&x).unwrap().solve(&[0.0, 1.0, 1.0, 3.0]);
        let fitted: Vec<f64> = (0..4).map(|i| b[0] + b[1] * i as f64).collect();
        let direct: f64 = [0.0, 1.0, 1.0, 3.0]
            .iter()
            .zip(&fitted)
            .map(|(y, f)| (y - f).powi(2))
            .sum();
        assert!((rss - direct).abs() < 1e-13);
    }
}
