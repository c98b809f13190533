//! Small dense LU with partial pivoting and compensated iterative refinement.

/// Pivots below this magnitude are treated as numerically singular.
pub(crate) const PIVOT_FLOOR: f64 = 1e-12;

/// `a * b` as an unevaluated sum `p + e`.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let z = s - a;
    (s, (a - (s - z)) + (b - z))
}

/// Dot product evaluated in roughly twice working precision.
pub(crate) fn dot2(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let (p, pe) = two_prod(x, y);
        let (t, se) = two_sum(s, p);
        s = t;
        c += pe + se;
    }
    s + c
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SmallPivot {
    pub index: usize,
    pub value: f64,
}

/// Row-major square matrix.
#[derive(Debug, Clone)]
pub(crate) struct Matrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Lu, SmallPivot> {
        let n = a.n;
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pmax) =
                (k..n)
                    .map(|i| (i, lu[i * n + k].abs()))
                    .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            if pmax < PIVOT_FLOOR {
                return Err(SmallPivot { index: k, value: pmax });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in (k + 1)..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                for j in (k + 1)..n {
                    lu[i * n + j] -= f * lu[k * n + j];
                }
            }
        }
        Ok(Lu { n, lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                y[i] -= self.lu[i * n + j] * y[j];
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                y[i] -= self.lu[i * n + j] * y[j];
            }
            y[i] /= self.lu[i * n + i];
        }
        y
    }

    /// Solve `a x = b`, then refine with residuals computed by [`dot2`].
    pub fn solve_refined(&self, a: &Matrix, b: &[f64], rounds: usize) -> Vec<f64> {
        let mut x = self.solve(b);
        let mut row = vec![0.0; self.n + 1];
        let mut rhs = vec![0.0; self.n + 1];
        for _ in 0..rounds {
            let r: Vec<f64> = (0..self.n)
                .map(|i| {
                    // b_i - a_i . x as one compensated dot product
                    row[..self.n].copy_from_slice(a.row(i));
                    row[self.n] = b[i];
                    rhs[..self.n].iter_mut().zip(&x).for_each(|(d, &s)| *d = -s);
                    rhs[self.n] = 1.0;
                    dot2(&row, &rhs)
                })
                .collect();
            if r.iter().all(|&v| v == 0.0) {
                break;
            }
            let d = self.solve(&r);
            x.iter_mut().zip(&d).for_each(|(xi, di)| *xi += di);
        }
        x
    }
}
