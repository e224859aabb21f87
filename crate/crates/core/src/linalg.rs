//! Small sparse toolkit for the Newton systems: CSR storage, ILU(0) and
//! preconditioned Krylov solvers.

#[derive(Clone, Debug, Default)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Empty matrix to be filled row by row with [`Self::push`] / [`Self::finish_row`].
    pub fn with_capacity(n: usize, nnz: usize) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        Self {
            n,
            row_ptr,
            cols: Vec::with_capacity(nnz),
            vals: Vec::with_capacity(nnz),
        }
    }

    /// Appends an entry to the current row. Columns must be pushed in increasing order.
    pub fn push(&mut self, col: usize, val: f64) {
        debug_assert!(col < self.n);
        debug_assert!(self.cols.len() == *self.row_ptr.last().unwrap() || *self.cols.last().unwrap() < col);
        self.cols.push(col);
        self.vals.push(val);
    }

    pub fn finish_row(&mut self) {
        self.row_ptr.push(self.cols.len());
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&j).map(|p| v[p]).unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Copy with the rows of `pinned` nodes replaced by identity rows and all
    /// columns pointing at pinned nodes dropped.
    pub fn reduce(&self, pinned: &[bool]) -> CsrMatrix {
        let mut m = CsrMatrix::with_capacity(self.n, self.nnz());
        for i in 0..self.n {
            if pinned[i] {
                m.push(i, 1.0);
            } else {
                let (c, v) = self.row(i);
                for (&j, &x) in c.iter().zip(v) {
                    if !pinned[j] {
                        m.push(j, x);
                    }
                }
            }
            m.finish_row();
        }
        m
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut acc = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[p] * x[self.cols[p]];
            }
            *yi = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }
}

/// Incomplete LU factorization with the sparsity pattern of the matrix.
pub struct Ilu0 {
    lu: CsrMatrix,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Self {
        let mut lu = a.clone();
        let n = lu.n;
        let mut diag_pos = vec![usize::MAX; n];
        for (i, dp) in diag_pos.iter_mut().enumerate() {
            for p in lu.row_ptr[i]..lu.row_ptr[i + 1] {
                if lu.cols[p] == i {
                    *dp = p;
                }
            }
            assert!(*dp != usize::MAX, "ILU(0) needs a stored diagonal in row {i}");
        }
        // position lookup for the current row
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for p in start..end {
                pos[lu.cols[p]] = p;
            }
            for p in start..end {
                let k = lu.cols[p];
                if k >= i {
                    break;
                }
                let lik = lu.vals[p] / lu.vals[diag_pos[k]];
                lu.vals[p] = lik;
                for q in diag_pos[k] + 1..lu.row_ptr[k + 1] {
                    let j = lu.cols[q];
                    let pj = pos[j];
                    if pj != usize::MAX {
                        lu.vals[pj] -= lik * lu.vals[q];
                    }
                }
            }
            for p in start..end {
                pos[lu.cols[p]] = usize::MAX;
            }
        }
        Self { lu, diag_pos }
    }

    pub fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        let lu = &self.lu;
        for i in 0..lu.n {
            let mut acc = b[i];
            for p in lu.row_ptr[i]..self.diag_pos[i] {
                acc -= lu.vals[p] * x[lu.cols[p]];
            }
            x[i] = acc;
        }
        for i in (0..lu.n).rev() {
            let mut acc = x[i];
            for p in self.diag_pos[i] + 1..lu.row_ptr[i + 1] {
                acc -= lu.vals[p] * x[lu.cols[p]];
            }
            x[i] = acc / lu.vals[self.diag_pos[i]];
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrylovOutcome {
    pub iterations: usize,
    /// Final `||b - A x|| / ||b||`.
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Right-preconditioned BiCGSTAB with ILU(0). `x` holds the initial guess on entry.
pub fn bicgstab(a: &CsrMatrix, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> KrylovOutcome {
    let n = a.n();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return KrylovOutcome {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let pre = Ilu0::new(a);
    let mut r = a.mul_vec(x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut rel = norm(&r) / bnorm;
    if rel <= tol {
        return KrylovOutcome {
            iterations: 0,
            relative_residual: rel,
            converged: true,
        };
    }
    let mut r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut restarts = 0;
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-300 || omega == 0.0 {
            // breakdown: restart with the current residual as shadow vector
            if restarts > 5 {
                return KrylovOutcome {
                    iterations: it,
                    relative_residual: rel,
                    converged: false,
                };
            }
            restarts += 1;
            r_hat.copy_from_slice(&r);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            v.iter_mut().for_each(|z| *z = 0.0);
            p.iter_mut().for_each(|z| *z = 0.0);
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        pre.solve_into(&p, &mut p_hat);
        a.mul_vec_into(&p_hat, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / bnorm <= tol {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            let mut res = a.mul_vec(x);
            for i in 0..n {
                res[i] = b[i] - res[i];
            }
            rel = norm(&res) / bnorm;
            if rel <= tol * 10.0 {
                return KrylovOutcome {
                    iterations: it,
                    relative_residual: rel,
                    converged: true,
                };
            }
            r = res;
            continue;
        }
        pre.solve_into(&s, &mut s_hat);
        a.mul_vec_into(&s_hat, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        rel = norm(&r) / bnorm;
        if rel <= tol {
            // confirm against the true residual
            let mut res = a.mul_vec(x);
            for i in 0..n {
                res[i] = b[i] - res[i];
            }
            rel = norm(&res) / bnorm;
            if rel <= tol * 10.0 {
                return KrylovOutcome {
                    iterations: it,
                    relative_residual: rel,
                    converged: true,
                };
            }
            r = res;
        }
    }
    KrylovOutcome {
        iterations: max_iter,
        relative_residual: rel,
        converged: false,
    }
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive definite `a`.
pub fn conjugate_gradient(a: &CsrMatrix, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> KrylovOutcome {
    let n = a.n();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return KrylovOutcome {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
    let mut r = a.mul_vec(x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = norm(&r) / bnorm;
    for it in 0..max_iter {
        if rel <= tol {
            return KrylovOutcome {
                iterations: it,
                relative_residual: rel,
                converged: true,
            };
        }
        a.mul_vec_into(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = norm(&r) / bnorm;
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    KrylovOutcome {
        iterations: max_iter,
        relative_residual: rel,
        converged: rel <= tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_2d(n: usize, shift: f64, skew: f64) -> CsrMatrix {
        let mut a = CsrMatrix::with_capacity(n * n, 5 * n * n);
        for i in 0..n {
            for j in 0..n {
                let idx = i * n + j;
                if i > 0 {
                    a.push(idx - n, -1.0 - skew);
                }
                if j > 0 {
                    a.push(idx - 1, -1.0);
                }
                a.push(idx, 4.0 + shift);
                if j + 1 < n {
                    a.push(idx + 1, -1.0);
                }
                if i + 1 < n {
                    a.push(idx + n, -1.0 + skew);
                }
                a.finish_row();
            }
        }
        a
    }

    #[test]
    fn ilu_is_exact_on_tridiagonal() {
        let n = 50;
        let mut a = CsrMatrix::with_capacity(n, 3 * n);
        for i in 0..n {
            if i > 0 {
                a.push(i - 1, -1.0);
            }
            a.push(i, 2.5);
            if i + 1 < n {
                a.push(i + 1, -1.2);
            }
            a.finish_row();
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let b = a.mul_vec(&x_true);
        let mut x = vec![0.0; n];
        Ilu0::new(&a).solve_into(&b, &mut x);
        for (p, q) in x.iter().zip(&x_true) {
            assert!((p - q).abs() < 1e-13);
        }
    }

    #[test]
    fn bicgstab_solves_nonsymmetric_system() {
        let a = laplace_2d(30, 0.01, 0.3);
        let x_true: Vec<f64> = (0..900).map(|i| ((i * 7 % 13) as f64) - 6.0).collect();
        let b = a.mul_vec(&x_true);
        let mut x = vec![0.0; 900];
        let out = bicgstab(&a, &b, &mut x, 1e-12, 500);
        assert!(out.converged, "{out:?}");
        let err = x.iter().zip(&x_true).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn cg_solves_spd_system() {
        let a = laplace_2d(20, 0.1, 0.0);
        let x_true: Vec<f64> = (0..400).map(|i| (i as f64 * 0.1).cos()).collect();
        let b = a.mul_vec(&x_true);
        let mut x = vec![0.0; 400];
        let out = conjugate_gradient(&a, &b, &mut x, 1e-12, 1000);
        assert!(out.converged);
        let err = x.iter().zip(&x_true).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = laplace_2d(4, 0.0, 0.0);
        let mut x = vec![1.0; 16];
        assert!(bicgstab(&a, &[0.0; 16], &mut x, 1e-10, 10).converged);
        assert!(x.iter().all(|&v| v == 0.0));
    }
}
