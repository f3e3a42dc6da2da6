//! Small dense reference routines, deliberately unrelated to the Cholesky
//! code they are used to check.

/// LU with partial pivoting; returns `ln|det A|`, or `None` if singular.
pub fn logdet(dim: usize, a: &[f64]) -> Option<f64> {
    let mut m = a.to_vec();
    let mut acc = 0.0;
    for col in 0..dim {
        let pivot = (col..dim).max_by(|&i, &j| m[i * dim + col].abs().total_cmp(&m[j * dim + col].abs()))?;
        let p = m[pivot * dim + col];
        if p == 0.0 {
            return None;
        }
        if pivot != col {
            for k in 0..dim {
                m.swap(pivot * dim + k, col * dim + k);
            }
        }
        acc += p.abs().ln();
        for row in col + 1..dim {
            let f = m[row * dim + col] / p;
            if f != 0.0 {
                for k in col..dim {
                    m[row * dim + k] -= f * m[col * dim + k];
                }
            }
        }
    }
    Some(acc)
}

/// Gauss-Jordan solve of `A x = rhs`.
pub fn solve(dim: usize, a: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut x = rhs.to_vec();
    for col in 0..dim {
        let pivot = (col..dim).max_by(|&i, &j| m[i * dim + col].abs().total_cmp(&m[j * dim + col].abs()))?;
        if m[pivot * dim + col] == 0.0 {
            return None;
        }
        for k in 0..dim {
            m.swap(pivot * dim + k, col * dim + k);
        }
        x.swap(pivot, col);
        let p = m[col * dim + col];
        for row in 0..dim {
            if row == col {
                continue;
            }
            let f = m[row * dim + col] / p;
            if f != 0.0 {
                for k in 0..dim {
                    m[row * dim + k] -= f * m[col * dim + k];
                }
                x[row] -= f * x[col];
            }
        }
    }
    Some((0..dim).map(|i| x[i] / m[i * dim + i]).collect())
}

pub fn add_outer(dim: usize, a: &mut [f64], g: &[f64]) {
    for i in 0..dim {
        for j in 0..dim {
            a[i * dim + j] += g[i] * g[j];
        }
    }
}

pub fn frobenius_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logdet_and_solve_on_a_small_matrix() {
        // det = 2·3 − 1·4 = 2
        let a = [2.0, 1.0, 4.0, 3.0];
        assert!((logdet(2, &a).unwrap() - 2f64.ln()).abs() < 1e-15);
        let x = solve(2, &a, &[3.0, 7.0]).unwrap();
        assert!(max_abs_diff(&x, &[1.0, 1.0]) < 1e-15);
        assert!(logdet(2, &[1.0, 2.0, 2.0, 4.0]).is_none());
    }
}
