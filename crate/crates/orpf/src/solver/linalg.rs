//! Dense symmetric indefinite factorization `P A P^T = L D L^T` with
//! Bunch-Kaufman partial pivoting. `D` has 1x1 and 2x2 blocks, which gives the
//! inertia of `A` for free. The matrix is symmetrically equilibrated first,
//! which leaves the inertia unchanged and makes the zero-pivot test
//! meaningful when diagonal entries span many orders of magnitude.

use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

#[derive(Debug, Clone)]
enum Block {
    One(f64),
    Two([f64; 3]),
}

#[derive(Debug, Clone)]
pub struct Ldlt {
    n: usize,
    /// Unit lower triangular factor, strictly-lower part used.
    l: DMatrix<f64>,
    /// Block start index and block.
    blocks: Vec<(usize, Block)>,
    perm: Vec<usize>,
    /// Symmetric scaling: the factored matrix is `diag(scale) A diag(scale)`.
    scale: Vec<f64>,
    pub inertia: Inertia,
}

/// Ruiz equilibration: returns `d` such that every row of `diag(d) A diag(d)`
/// has infinity norm close to one. Zero rows keep a unit scale.
fn equilibrate(a: &mut DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut d = vec![1.0; n];
    for _ in 0..20 {
        let r: Vec<f64> = (0..n)
            .map(|i| {
                let m = a.row(i).amax();
                if m > 0.0 && m.is_finite() { 1.0 / m.sqrt() } else { 1.0 }
            })
            .collect();
        for j in 0..n {
            for i in 0..n {
                a[(i, j)] *= r[i] * r[j];
            }
        }
        for i in 0..n {
            d[i] *= r[i];
        }
        if r.iter().all(|v| (1.0 - v).abs() < 1e-3) {
            break;
        }
    }
    d
}

const ALPHA: f64 = 0.640_388_203_202_208; // (1 + sqrt(17)) / 8

fn swap_sym(a: &mut DMatrix<f64>, l: &mut DMatrix<f64>, perm: &mut [usize], i: usize, j: usize, k: usize) {
    if i == j {
        return;
    }
    a.swap_rows(i, j);
    a.swap_columns(i, j);
    // rows of the already computed columns of L follow the permutation
    for c in 0..k {
        let t = l[(i, c)];
        l[(i, c)] = l[(j, c)];
        l[(j, c)] = t;
    }
    perm.swap(i, j);
}

impl Ldlt {
    /// Factorizes the symmetric matrix `a`; only symmetry of the input is
    /// assumed, both triangles must be filled.
    pub fn factor(mut a: DMatrix<f64>) -> Ldlt {
        let n = a.nrows();
        let scale = equilibrate(&mut a);
        let tiny = 1e-14 * a.amax().max(1.0);
        let mut l = DMatrix::identity(n, n);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut blocks = Vec::new();
        let mut inertia = Inertia::default();
        let mut k = 0;
        while k < n {
            let absakk = a[(k, k)].abs();
            let (imax, colmax) = ((k + 1)..n)
                .map(|i| (i, a[(i, k)].abs()))
                .fold((k, 0.0), |best, c| if c.1 > best.1 { c } else { best });
            if absakk.max(colmax) <= tiny {
                blocks.push((k, Block::One(0.0)));
                inertia.zero += 1;
                // column is negligible; eliminate nothing
                for i in (k + 1)..n {
                    l[(i, k)] = 0.0;
                }
                k += 1;
                continue;
            }
            let mut two = false;
            let mut kp = k;
            if absakk < ALPHA * colmax {
                let rowmax = (k..n)
                    .filter(|&j| j != imax)
                    .map(|j| a[(imax, j)].abs())
                    .fold(0.0, f64::max);
                if absakk * rowmax >= ALPHA * colmax * colmax {
                    kp = k;
                } else if a[(imax, imax)].abs() >= ALPHA * rowmax {
                    kp = imax;
                } else {
                    kp = imax;
                    two = true;
                }
            }
            if !two {
                swap_sym(&mut a, &mut l, &mut perm, k, kp, k);
                let d = a[(k, k)];
                if d.abs() <= tiny {
                    inertia.zero += 1;
                } else if d > 0.0 {
                    inertia.positive += 1;
                } else {
                    inertia.negative += 1;
                }
                blocks.push((k, Block::One(d)));
                if d != 0.0 {
                    for i in (k + 1)..n {
                        l[(i, k)] = a[(i, k)] / d;
                    }
                    for j in (k + 1)..n {
                        let ljk = a[(j, k)];
                        if ljk == 0.0 {
                            continue;
                        }
                        for i in j..n {
                            let v = a[(i, j)] - l[(i, k)] * ljk;
                            a[(i, j)] = v;
                            a[(j, i)] = v;
                        }
                    }
                }
                k += 1;
            } else {
                swap_sym(&mut a, &mut l, &mut perm, k + 1, kp, k);
                let (d11, d21, d22) = (a[(k, k)], a[(k + 1, k)], a[(k + 1, k + 1)]);
                let det = d11 * d22 - d21 * d21;
                if det < 0.0 {
                    inertia.positive += 1;
                    inertia.negative += 1;
                } else if d11 + d22 > 0.0 {
                    inertia.positive += 2;
                } else {
                    inertia.negative += 2;
                }
                blocks.push((k, Block::Two([d11, d21, d22])));
                for i in (k + 2)..n {
                    let (w1, w2) = (a[(i, k)], a[(i, k + 1)]);
                    l[(i, k)] = (d22 * w1 - d21 * w2) / det;
                    l[(i, k + 1)] = (d11 * w2 - d21 * w1) / det;
                }
                for j in (k + 2)..n {
                    let (w1, w2) = (a[(j, k)], a[(j, k + 1)]);
                    for i in j..n {
                        let v = a[(i, j)] - l[(i, k)] * w1 - l[(i, k + 1)] * w2;
                        a[(i, j)] = v;
                        a[(j, i)] = v;
                    }
                }
                k += 2;
            }
        }
        Ldlt {
            n,
            l,
            blocks,
            perm,
            scale,
            inertia,
        }
    }

    pub fn is_singular(&self) -> bool {
        self.inertia.zero > 0
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| self.scale[p] * b[p]).collect();
        for c in 0..n {
            let yc = y[c];
            if yc != 0.0 {
                for r in (c + 1)..n {
                    y[r] -= self.l[(r, c)] * yc;
                }
            }
        }
        for (k, blk) in &self.blocks {
            match blk {
                Block::One(d) => {
                    y[*k] = if *d == 0.0 { 0.0 } else { y[*k] / d };
                }
                Block::Two([a, b, c]) => {
                    let det = a * c - b * b;
                    let (u, v) = (y[*k], y[k + 1]);
                    y[*k] = (c * u - b * v) / det;
                    y[k + 1] = (a * v - b * u) / det;
                }
            }
        }
        for c in (0..n).rev() {
            let mut s = y[c];
            for r in (c + 1)..n {
                s -= self.l[(r, c)] * y[r];
            }
            y[c] = s;
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = self.scale[p] * y[i];
        }
        x
    }
}
