use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Largest matrix the determinant routines accept.
pub const MAX_DET_DIM: usize = 8;

/// LU factorization with partial pivoting, `P·M = L·U` packed in one matrix.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
    sign: f64,
    singular: bool,
}

impl Lu {
    pub fn new(m: &Matrix) -> Result<Lu> {
        let n = m.rows();
        if n != m.cols() {
            return Err(Error::shape("lu", format!("not square: {:?}", m.shape())));
        }
        let mut lu = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let mut singular = false;
        let tiny = n as f64 * f64::EPSILON * m.max_abs();
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
                sign = -sign;
            }
            if pmax <= tiny {
                singular = true;
                continue;
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        let v = lu[(k, j)];
                        lu[(i, j)] -= f * v;
                    }
                }
            }
        }
        Ok(Lu {
            lu,
            perm,
            sign,
            singular,
        })
    }

    pub fn det(&self) -> f64 {
        (0..self.lu.rows()).fold(self.sign, |acc, i| acc * self.lu[(i, i)])
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    /// Solves `M x = b` for one right-hand side.
    pub fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        if self.singular {
            return None;
        }
        let n = self.lu.rows();
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[(i, j)] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[(i, j)] * x[j];
            }
            x[i] /= self.lu[(i, i)];
        }
        Some(x)
    }
}

pub fn determinant(m: &Matrix) -> Result<f64> {
    if m.rows() == 0 && m.cols() == 0 {
        return Ok(1.0);
    }
    Ok(Lu::new(m)?.det())
}

pub fn inverse(m: &Matrix) -> Result<Option<Matrix>> {
    let lu = Lu::new(m)?;
    let n = m.rows();
    let mut inv = Matrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        let Some(col) = lu.solve(&e) else {
            return Ok(None);
        };
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    Ok(Some(inv))
}

fn minor(m: &Matrix, skip_r: usize, skip_c: usize) -> Matrix {
    let n = m.rows();
    Matrix::from_fn(n - 1, n - 1, |i, j| {
        m[(if i < skip_r { i } else { i + 1 }, if j < skip_c { j } else { j + 1 })]
    })
}

/// Cofactor matrix `C` with `C_ij = (-1)^(i+j) det(minor_ij)`; equals `adj(M)ᵀ`.
fn cofactors(m: &Matrix) -> Result<Matrix> {
    let n = m.rows();
    if n == 1 {
        return Ok(Matrix::scalar(1.0));
    }
    let mut c = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let s = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            c[(i, j)] = s * determinant(&minor(m, i, j))?;
        }
    }
    Ok(c)
}

/// Determinant and its gradient `∂det/∂M`.
///
/// The gradient is `det(M)·M⁻ᵀ` for well-conditioned input and the cofactor
/// matrix otherwise, so singular matrices still get the exact derivative.
pub fn det_with_grad(m: &Matrix) -> Result<(f64, Matrix)> {
    let n = m.rows();
    if n != m.cols() {
        return Err(Error::shape("det_with_grad", format!("not square: {:?}", m.shape())));
    }
    if n > MAX_DET_DIM {
        return Err(Error::Contract(format!(
            "determinant limited to {MAX_DET_DIM}x{MAX_DET_DIM}, got {n}x{n}"
        )));
    }
    if n == 0 {
        return Ok((1.0, Matrix::zeros(0, 0)));
    }
    let lu = Lu::new(m)?;
    let det = lu.det();
    // condition guard: fall back to cofactors when pivots are tiny
    let well_conditioned = !lu.is_singular() && det.abs() > 1e-8 * m.max_abs().powi(n as i32);
    if well_conditioned {
        if let Some(inv) = inverse(m)? {
            return Ok((det, inv.transpose().scale(det)));
        }
    }
    Ok((det, cofactors(m)?))
}
