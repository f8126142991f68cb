//! Dense eigensolver for small complex Hermitian matrices.
//!
//! Cyclic Jacobi: each step reduces a 2x2 Hermitian block to real symmetric
//! form with a diagonal phase and annihilates it with a plane rotation. For
//! the coil counts seen here (up to a few dozen) this converges in a handful
//! of sweeps to full double precision.

use num_complex::Complex64;

const MAX_SWEEPS: usize = 64;

/// Eigenpairs of a Hermitian matrix, eigenvalues sorted descending.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub n: usize,
    pub values: Vec<f64>,
    /// Column-major: eigenvector `k` is `vectors[k * n..(k + 1) * n]`.
    pub vectors: Vec<Complex64>,
}

impl HermitianEigen {
    pub fn vector(&self, k: usize) -> &[Complex64] {
        &self.vectors[k * self.n..(k + 1) * self.n]
    }
}

/// Decomposes the row-major `n x n` Hermitian matrix `a`. Only the upper
/// triangle is read; `a` is overwritten.
pub fn hermitian_eigen(a: &mut [Complex64], n: usize) -> HermitianEigen {
    assert_eq!(a.len(), n * n);
    for i in 0..n {
        for j in 0..i {
            a[i * n + j] = a[j * n + i].conj();
        }
        a[i * n + i].im = 0.0;
    }
    let mut v = vec![Complex64::default(); n * n];
    for i in 0..n {
        v[i * n + i] = Complex64::new(1.0, 0.0);
    }

    let scale: f64 = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if scale > 0.0 {
        for _ in 0..MAX_SWEEPS {
            let off: f64 = (0..n)
                .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
                .map(|(p, q)| a[p * n + q].norm_sqr())
                .sum::<f64>()
                .sqrt();
            if off <= 1e-15 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    rotate(a, &mut v, n, p, q);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].re.total_cmp(&a[i * n + i].re));
    let values = order.iter().map(|&i| a[i * n + i].re).collect();
    let mut vectors = Vec::with_capacity(n * n);
    for &k in &order {
        vectors.extend((0..n).map(|r| v[r * n + k]));
    }
    HermitianEigen { n, values, vectors }
}

fn rotate(a: &mut [Complex64], v: &mut [Complex64], n: usize, p: usize, q: usize) {
    let apq = a[p * n + q];
    let m = apq.norm();
    if m == 0.0 {
        return;
    }
    let app = a[p * n + p].re;
    let aqq = a[q * n + q].re;
    if m < 1e-300 || m <= f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
        a[p * n + q] = Complex64::default();
        a[q * n + p] = Complex64::default();
        return;
    }
    let phase = apq / m;
    let tau = (aqq - app) / (2.0 * m);
    let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
    let t = if tau == 0.0 { 1.0 } else { t };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    // U = diag(1, conj(phase)) * [[c, s], [-s, c]]
    let upp = Complex64::new(c, 0.0);
    let upq = Complex64::new(s, 0.0);
    let uqp = -phase.conj() * s;
    let uqq = phase.conj() * c;

    for k in 0..n {
        let (akp, akq) = (a[k * n + p], a[k * n + q]);
        a[k * n + p] = akp * upp + akq * uqp;
        a[k * n + q] = akp * upq + akq * uqq;
        let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
        v[k * n + p] = vkp * upp + vkq * uqp;
        v[k * n + q] = vkp * upq + vkq * uqq;
    }
    for k in 0..n {
        let (apk, aqk) = (a[p * n + k], a[q * n + k]);
        a[p * n + k] = upp.conj() * apk + uqp.conj() * aqk;
        a[q * n + k] = upq.conj() * apk + uqq.conj() * aqk;
    }
    a[p * n + q] = Complex64::default();
    a[q * n + p] = Complex64::default();
    a[p * n + p].im = 0.0;
    a[q * n + q].im = 0.0;
}
