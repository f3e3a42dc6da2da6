//! Symmetric positive-definite matrices held as Cholesky factors.
//!
//! `SpdMatrix` stores the lower-triangular factor `L` (row-major, upper
//! triangle kept at zero) of `M = L·Lᵀ` together with a cached
//! `logdet = 2·Σ ln L_kk`. Inverses are never formed; solves go through two
//! triangular substitutions.

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    dim: usize,
    chol: Vec<f64>,
    logdet: f64,
}

impl SpdMatrix {
    /// `λI` with `logdet = dim·ln λ`.
    pub fn identity(dim: usize, lambda: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("spd_identity: dim must be >= 1"));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "spd_identity: lambda must be positive and finite, got {lambda}"
            )));
        }
        let mut chol = vec![0.0; dim * dim];
        let root = lambda.sqrt();
        for k in 0..dim {
            chol[k * dim + k] = root;
        }
        Ok(Self {
            dim,
            chol,
            logdet: dim as f64 * lambda.ln(),
        })
    }

    /// Factorizes a dense symmetric matrix (row-major). Only the lower
    /// triangle is read.
    pub fn from_dense(dim: usize, dense: &[f64]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("from_dense: dim must be >= 1"));
        }
        check_len("from_dense", dense.len(), dim * dim)?;
        let mut l = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                let mut sum = dense[i * dim + j];
                for k in 0..j {
                    sum -= l[i * dim + k] * l[j * dim + k];
                }
                if i == j {
                    if !(sum > 0.0 && sum.is_finite()) {
                        return Err(Error::breakdown(format!(
                            "from_dense: matrix is not positive definite (pivot {i} = {sum})"
                        )));
                    }
                    l[i * dim + i] = sum.sqrt();
                } else {
                    l[i * dim + j] = sum / l[j * dim + j];
                }
            }
        }
        let logdet = diag_logdet(dim, &l);
        Ok(Self {
            dim,
            chol: l,
            logdet,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// Row-major lower-triangular factor.
    pub fn factor(&self) -> &[f64] {
        &self.chol
    }

    /// Reconstructs `L·Lᵀ` as a dense row-major matrix.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = 0.0;
                for k in 0..=j {
                    sum += self.chol[i * n + k] * self.chol[j * n + k];
                }
                out[i * n + j] = sum;
                out[j * n + i] = sum;
            }
        }
        out
    }

    /// Returns the factorization of `M + g·gᵀ`; `self` is left untouched.
    pub fn rank1_update(&self, g: &[f64]) -> Result<Self> {
        let mut next = self.clone();
        next.rank1_update_in_place(g)?;
        Ok(next)
    }

    /// In-place `M ← M + g·gᵀ` in O(dim²).
    ///
    /// On breakdown the matrix is left unchanged.
    pub fn rank1_update_in_place(&mut self, g: &[f64]) -> Result<()> {
        let n = self.dim;
        check_len("rank1_update", g.len(), n)?;
        let mut l = self.chol.clone();
        let mut v = g.to_vec();
        for j in 0..n {
            let ljj = l[j * n + j];
            let vj = v[j];
            if vj == 0.0 {
                continue;
            }
            let r = ljj.hypot(vj);
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::breakdown(format!(
                    "rank1_update: lost positivity at pivot {j} (r = {r})"
                )));
            }
            let c = r / ljj;
            let s = vj / ljj;
            l[j * n + j] = r;
            for i in (j + 1)..n {
                let lij = (l[i * n + j] + s * v[i]) / c;
                l[i * n + j] = lij;
                v[i] = c * v[i] - s * lij;
            }
        }
        self.logdet = diag_logdet(n, &l);
        self.chol = l;
        Ok(())
    }

    /// Solves `L·y = rhs` (forward substitution).
    pub fn forward_solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim;
        check_len("forward_solve", rhs.len(), n)?;
        let mut y = rhs.to_vec();
        for i in 0..n {
            let row = &self.chol[i * n..i * n + i];
            let dot: f64 = row.iter().zip(&y[..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - dot) / self.chol[i * n + i];
        }
        Ok(y)
    }

    /// Solves `M·x = rhs` via two triangular solves.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim;
        let mut x = self.forward_solve(rhs)?;
        for i in (0..n).rev() {
            let tail: f64 = ((i + 1)..n).map(|k| self.chol[k * n + i] * x[k]).sum();
            x[i] = (x[i] - tail) / self.chol[i * n + i];
        }
        Ok(x)
    }

    /// `gᵀ·M⁻¹·g`, computed as `‖y‖²` with `L·y = g`.
    pub fn quad_form_inv(&self, g: &[f64]) -> Result<f64> {
        let y = self.forward_solve(g)?;
        Ok(y.iter().map(|v| v * v).sum())
    }

    /// `M·x` without materializing `M`.
    pub fn multiply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim;
        check_len("multiply", x.len(), n)?;
        // u = Lᵀx, then L·u
        let u: Vec<f64> = (0..n)
            .map(|k| (k..n).map(|i| self.chol[i * n + k] * x[i]).sum())
            .collect();
        let mut out = vec![0.0; n];
        for i in 0..n {
            out[i] = self.chol[i * n..i * n + i + 1]
                .iter()
                .zip(&u[..=i])
                .map(|(a, b)| a * b)
                .sum();
        }
        Ok(out)
    }
}

fn diag_logdet(n: usize, l: &[f64]) -> f64 {
    2.0 * (0..n).map(|k| l[k * n + k].ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let a: Vec<f64> = (0..dim * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                let mut s = 0.0;
                for k in 0..dim {
                    s += a[i * dim + k] * a[j * dim + k];
                }
                m[i * dim + j] = s + if i == j { dim as f64 } else { 0.0 };
            }
        }
        m
    }

    // Gauss-Jordan inverse, independent of the Cholesky path.
    fn dense_inverse(dim: usize, m: &[f64]) -> Vec<f64> {
        let w = 2 * dim;
        let mut aug = vec![0.0; dim * w];
        for i in 0..dim {
            aug[i * w..i * w + dim].copy_from_slice(&m[i * dim..(i + 1) * dim]);
            aug[i * w + dim + i] = 1.0;
        }
        for c in 0..dim {
            let p = (c..dim)
                .max_by(|&a, &b| aug[a * w + c].abs().total_cmp(&aug[b * w + c].abs()))
                .unwrap();
            for k in 0..w {
                aug.swap(c * w + k, p * w + k);
            }
            let piv = aug[c * w + c];
            for k in 0..w {
                aug[c * w + k] /= piv;
            }
            for r in 0..dim {
                if r != c {
                    let f = aug[r * w + c];
                    for k in 0..w {
                        aug[r * w + k] -= f * aug[c * w + k];
                    }
                }
            }
        }
        let mut inv = vec![0.0; dim * dim];
        for i in 0..dim {
            inv[i * dim..(i + 1) * dim].copy_from_slice(&aug[i * w + dim..(i + 1) * w]);
        }
        inv
    }

    #[test]
    fn identity_logdet() {
        let m = SpdMatrix::identity(3, 2.0).unwrap();
        assert!((m.logdet() - 3.0 * 2f64.ln()).abs() < 1e-12);
        assert!((m.logdet() - 2.0794415416798357).abs() < 1e-12);
        assert_eq!(SpdMatrix::identity(1, 1.0).unwrap().logdet(), 0.0);

        let lambda = (20.0f64 * 100.0).sqrt();
        let m = SpdMatrix::identity(201, lambda).unwrap();
        assert!((m.logdet() - 201.0 * 2000f64.sqrt().ln()).abs() < 1e-9);
    }

    #[test]
    fn identity_rejects_bad_args() {
        assert!(matches!(
            SpdMatrix::identity(0, 1.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(SpdMatrix::identity(2, 0.0).is_err());
        assert!(SpdMatrix::identity(2, -1.0).is_err());
        assert!(SpdMatrix::identity(2, f64::NAN).is_err());
    }

    #[test]
    fn rank1_on_identity() {
        let m = SpdMatrix::identity(2, 1.0).unwrap();
        let u = m.rank1_update(&[1.0, 0.0]).unwrap();
        for (a, b) in u.to_dense().iter().zip([2.0, 0.0, 0.0, 1.0]) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((u.logdet() - m.logdet() - 2f64.ln()).abs() < 1e-14);
        // value semantics
        assert_eq!(m.to_dense(), vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn rank1_zero_vector_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = SpdMatrix::from_dense(5, &random_spd(5, &mut rng)).unwrap();
        let u = m.rank1_update(&[0.0; 5]).unwrap();
        assert_eq!(u, m);
    }

    #[test]
    fn rank1_dimension_mismatch() {
        let m = SpdMatrix::identity(3, 1.0).unwrap();
        assert!(matches!(
            m.rank1_update(&[1.0, 2.0]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(m.solve(&[1.0]).is_err());
        assert!(m.quad_form_inv(&[1.0; 4]).is_err());
    }

    #[test]
    fn rank1_matches_refactorization_50() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dim = 50;
        let dense = random_spd(dim, &mut rng);
        let g: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let m = SpdMatrix::from_dense(dim, &dense).unwrap();
        let updated = m.rank1_update(&g).unwrap();

        let mut target = dense.clone();
        for i in 0..dim {
            for j in 0..dim {
                target[i * dim + j] += g[i] * g[j];
            }
        }
        let refac = SpdMatrix::from_dense(dim, &target).unwrap();
        let frob: f64 = updated
            .factor()
            .iter()
            .zip(refac.factor())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(frob < 1e-8, "frobenius distance {frob}");
        assert!((updated.logdet() - refac.logdet()).abs() < 1e-8);
    }

    #[test]
    fn solve_examples() {
        let m = SpdMatrix::identity(3, 4.0).unwrap();
        let x = m.solve(&[4.0, 8.0, -2.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0, -0.5]);

        let d = SpdMatrix::from_dense(2, &[2.0, 0.0, 0.0, 1.0]).unwrap();
        let x = d.solve(&[4.0, 3.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-15 && (x[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn solve_matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dim in [1, 2, 5, 12] {
            let dense = random_spd(dim, &mut rng);
            let rhs: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let inv = dense_inverse(dim, &dense);
            let expected: Vec<f64> = (0..dim)
                .map(|i| (0..dim).map(|j| inv[i * dim + j] * rhs[j]).sum())
                .collect();
            let got = SpdMatrix::from_dense(dim, &dense).unwrap().solve(&rhs).unwrap();
            for (a, b) in got.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn quad_form_examples() {
        let m = SpdMatrix::identity(3, 2.0).unwrap();
        let q = m.quad_form_inv(&[1.0, 2.0, 2.0]).unwrap();
        assert!((q - 9.0 / 2.0).abs() < 1e-15);
        assert_eq!(m.quad_form_inv(&[0.0; 3]).unwrap(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dense = random_spd(8, &mut rng);
        let g: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = SpdMatrix::from_dense(8, &dense).unwrap();
        let x = m.solve(&g).unwrap();
        let oracle: f64 = x.iter().zip(&g).map(|(a, b)| a * b).sum();
        assert!((m.quad_form_inv(&g).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn from_dense_rejects_indefinite() {
        assert!(matches!(
            SpdMatrix::from_dense(2, &[1.0, 2.0, 2.0, 1.0]),
            Err(Error::NumericBreakdown(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn determinant_lemma(seed in any::<u64>(), dim in 1usize..24) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = SpdMatrix::from_dense(dim, &random_spd(dim, &mut rng)).unwrap();
            let g: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let q = m.quad_form_inv(&g).unwrap();
            let u = m.rank1_update(&g).unwrap();
            prop_assert!((u.logdet() - m.logdet() - q.ln_1p()).abs() < 1e-10);
        }

        #[test]
        fn solve_inverts_multiply(seed in any::<u64>(), dim in 1usize..24) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = SpdMatrix::from_dense(dim, &random_spd(dim, &mut rng)).unwrap();
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let back = m.solve(&m.multiply(&x).unwrap()).unwrap();
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a - b).abs() <= 1e-8 * norm);
            }
        }

        #[test]
        fn cached_logdet_matches_diagonal(seed in any::<u64>(), dim in 1usize..16, steps in 0usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = SpdMatrix::identity(dim, rng.random_range(0.1..10.0)).unwrap();
            for _ in 0..steps {
                let g: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
                m.rank1_update_in_place(&g).unwrap();
            }
            let direct = 2.0 * (0..dim).map(|k| m.factor()[k * dim + k].ln()).sum::<f64>();
            prop_assert!((m.logdet() - direct).abs() <= 1e-12 * direct.abs().max(1.0));
            for k in 0..dim {
                prop_assert!(m.factor()[k * dim + k] > 0.0);
            }
        }
    }
}
