//! Operator matrices, the symmetric-definite generalized eigenproblem, Rayleigh-quotient
//! variations and the polynomial to density-matrix map.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::basis::{degree_of, Basis};
use crate::error::{Error, Result};

/// Relative floor of the smallest equilibrated metric eigenvalue.
pub const METRIC_FLOOR: f64 = 1e-12;
/// Relative eigenvalue spread below which a spectrum is declared flat.
pub const FLAT_SPECTRUM: f64 = 1e-9;

/// `⟨Q_j|f|Q_k⟩` from the moments `⟨Q_m f⟩`, `j, k < dim`.
pub fn build_operator(basis: &Basis, moments: &[f64], dim: usize) -> DMatrix<f64> {
    basis.operator_matrix(moments, dim)
}

/// `⟨a|A|b⟩`; vectors may be shorter than the matrix.
pub fn form(a: &DVector<f64>, m: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    let n = m.nrows().min(a.len()).min(b.len());
    let mut s = 0.0;
    for j in 0..n {
        let aj = a[j];
        if aj == 0.0 {
            continue;
        }
        let mut r = 0.0;
        for k in 0..n {
            r += m[(j, k)] * b[k];
        }
        s += aj * r;
    }
    s
}

/// Eigenpairs of a pencil, eigenvalues ascending, eigenvectors orthonormal in the metric.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: Vec<DVector<f64>>,
    /// Dimension retained by the conditioning guard.
    pub n_eff: usize,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn lowest(&self) -> (f64, &DVector<f64>) {
        (self.values[0], &self.vectors[0])
    }

    pub fn highest(&self) -> (f64, &DVector<f64>) {
        let i = self.values.len() - 1;
        (self.values[i], &self.vectors[i])
    }

    /// `λ_max - λ_min < FLAT_SPECTRUM·(1 + |λ_max|)`.
    pub fn is_flat(&self) -> bool {
        let lo = self.values[0];
        let hi = self.values[self.values.len() - 1];
        hi - lo < FLAT_SPECTRUM * (1.0 + hi.abs())
    }

    /// Flips signs so that `ψ(x0) ≥ 0`, given `q0 = Q(x0)`.
    pub fn orient(&mut self, q0: &[f64]) {
        for v in self.vectors.iter_mut() {
            orient(v, q0);
        }
    }
}

/// Sign convention: `ψ(x0) > 0`, or the first significant coefficient positive when
/// `ψ(x0)` vanishes to rounding.
pub fn orient(v: &mut DVector<f64>, q0: &[f64]) {
    let mut at = 0.0;
    let mut mag = 0.0;
    for (c, q) in v.iter().zip(q0) {
        at += c * q;
        mag += (c * q).abs();
    }
    let flip = if at.abs() > 1e-12 * mag {
        at < 0.0
    } else {
        first_sign_negative(v)
    };
    if flip {
        v.neg_mut();
    }
}

fn first_sign_negative(v: &DVector<f64>) -> bool {
    let max = v.amax();
    v.iter()
        .find(|c| c.abs() > 1e-10 * max)
        .is_some_and(|&c| c < 0.0)
}

/// Whitening factor of a metric `B`: `Wᵀ B W = 1` on the retained leading block.
#[derive(Clone, Debug)]
pub struct Whitener {
    n: usize,
    n_eff: usize,
    w: DMatrix<f64>,
    min_eig: f64,
}

impl Whitener {
    /// Factorizes `B`, dropping trailing basis functions while the diagonally equilibrated
    /// metric has an eigenvalue below `METRIC_FLOOR` times its mean eigenvalue.
    pub fn new(b: &DMatrix<f64>) -> Result<Self> {
        let n = b.nrows();
        if b.ncols() != n || n == 0 {
            return Err(Error::Dimension(format!("metric is {}x{}", n, b.ncols())));
        }
        let mut dim = n;
        let mut last_min = f64::NAN;
        while dim > 0 {
            let diag: Vec<f64> = (0..dim).map(|k| b[(k, k)]).collect();
            if let Some(bad) = diag.iter().position(|&d| !(d > 0.0 && d.is_finite())) {
                last_min = diag[bad];
                dim = bad;
                continue;
            }
            let s: Vec<f64> = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
            let eq = DMatrix::from_fn(dim, dim, |j, k| b[(j, k)] * s[j] * s[k]);
            let eig = SymmetricEigen::new(eq);
            let min = eig.eigenvalues.min();
            last_min = min;
            if min > METRIC_FLOOR && min.is_finite() {
                let mut w = eig.eigenvectors;
                for (c, lam) in eig.eigenvalues.iter().enumerate() {
                    let f = 1.0 / lam.sqrt();
                    for r in 0..dim {
                        w[(r, c)] *= f * s[r];
                    }
                }
                return Ok(Self {
                    n,
                    n_eff: dim,
                    w,
                    min_eig: min,
                });
            }
            dim -= 1;
        }
        Err(Error::IndefiniteMetric(last_min))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_eff(&self) -> usize {
        self.n_eff
    }

    /// Smallest eigenvalue of the retained equilibrated metric.
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eig
    }

    /// Full spectrum of `(A, B)`; eigenvectors are padded with zeros to length `n`.
    pub fn solve(&self, a: &DMatrix<f64>) -> Spectrum {
        let d = self.n_eff;
        let a = a.view((0, 0), (d, d));
        let c = self.w.transpose() * a * &self.w;
        let c = (&c + c.transpose()) * 0.5;
        let eig = SymmetricEigen::new(c);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let mut values = Vec::with_capacity(d);
        let mut vectors = Vec::with_capacity(d);
        for i in order {
            values.push(eig.eigenvalues[i]);
            let alpha = &self.w * eig.eigenvectors.column(i);
            let mut v = DVector::zeros(self.n);
            v.rows_mut(0, d).copy_from(&alpha);
            if first_sign_negative(&v) {
                v.neg_mut();
            }
            vectors.push(v);
        }
        Spectrum {
            values,
            vectors,
            n_eff: d,
        }
    }

    /// `B⁻¹ x` on the retained block, zero-padded.
    pub fn solve_metric(&self, x: &DVector<f64>) -> DVector<f64> {
        let d = self.n_eff;
        let y = &self.w * (self.w.transpose() * x.rows(0, d));
        let mut out = DVector::zeros(self.n);
        out.rows_mut(0, d).copy_from(&y);
        out
    }
}

/// Generalized eigenproblem `A α = λ B α` with the conditioning guard on `B`.
pub fn solve_gev(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Spectrum> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "pencil {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(Whitener::new(b)?.solve(a))
}

/// Zeroth, first and second variations of `⟨ψ|A|ψ⟩/⟨ψ|B|ψ⟩` along `δψ`.
pub fn rayleigh_variations(
    psi: &DVector<f64>,
    dpsi: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<(f64, f64, f64)> {
    let norm = form(psi, b, psi);
    if !(norm > 0.0) {
        return Err(Error::Numeric(format!("state norm {norm}")));
    }
    let d0 = form(psi, a, psi) / norm;
    let b1 = form(psi, b, dpsi) / norm;
    let d1 = 2.0 * (form(psi, a, dpsi) / norm - d0 * b1);
    let d2 = form(dpsi, a, dpsi) / norm - d0 * form(dpsi, b, dpsi) / norm - 2.0 * b1 * d1;
    Ok((d0, d1, d2))
}

/// Mixture `ρ = Σ λ_i |ψ_i⟩⟨ψ_i|` with weights of any sign.
#[derive(Clone, Debug, Default)]
pub struct DensityMatrix {
    pub weights: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

impl DensityMatrix {
    pub fn pure(state: DVector<f64>) -> Self {
        Self {
            weights: vec![1.0],
            states: vec![state],
        }
    }

    /// Coefficient matrix `Σ λ_i α_i α_iᵀ`.
    pub fn matrix(&self, dim: usize) -> DMatrix<f64> {
        let mut r = DMatrix::zeros(dim, dim);
        for (w, s) in self.weights.iter().zip(&self.states) {
            let s = s.rows(0, dim);
            r += s * s.transpose() * *w;
        }
        r
    }

    /// `ρ(x, x)` given `Q_0(x) .. Q_{n-1}(x)`.
    pub fn diagonal_at(&self, q: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(&self.states)
            .map(|(w, s)| {
                let v: f64 = s.iter().zip(q).map(|(a, b)| a * b).sum();
                w * v * v
            })
            .sum()
    }
}

/// `Σ λ_i ⟨ψ_i|F|ψ_i⟩`.
pub fn density_average(rho: &DensityMatrix, f: &DMatrix<f64>) -> f64 {
    rho.weights
        .iter()
        .zip(&rho.states)
        .map(|(w, s)| w * form(s, f, s))
        .sum()
}

/// Positive-weight and negative-weight parts; zero weights are dropped.
pub fn split_density_sign(rho: &DensityMatrix) -> (DensityMatrix, DensityMatrix) {
    let mut pos = DensityMatrix::default();
    let mut neg = DensityMatrix::default();
    for (w, s) in rho.weights.iter().zip(&rho.states) {
        let side = if *w > 0.0 {
            &mut pos
        } else if *w < 0.0 {
            &mut neg
        } else {
            continue;
        };
        side.weights.push(*w);
        side.states.push(s.clone());
    }
    (pos, neg)
}

/// The density matrix with `ρ(x, x) = P(x)` of least Frobenius norm in metric-orthonormal
/// coordinates; states are `G`-orthonormal.
///
/// A polynomial of degree `2n - 2` has `2n - 1` coefficients while a symmetric `n × n` operator
/// has `n(n+1)/2` entries, so `ρ(x, x) = P(x)` leaves freedom. The least-norm choice is the
/// linear, basis-independent representative; any other differs by an operator whose average
/// vanishes against every moment-built matrix, so all averages coincide.
pub fn poly_to_density(basis: &Basis, p: &[f64], g: &DMatrix<f64>) -> Result<DensityMatrix> {
    let n = g.nrows();
    let m = 2 * n - 1;
    if let Some(d) = degree_of(p) {
        if d >= m {
            return Err(Error::DegreeOverflow {
                degree: d,
                bound: m - 1,
            });
        }
    }
    if n > basis.n() {
        return Err(Error::Dimension(format!(
            "metric dimension {n} exceeds basis dimension {}",
            basis.n()
        )));
    }
    let eig = SymmetricEigen::new(g.clone());
    if eig.eigenvalues.min() <= 0.0 {
        return Err(Error::IndefiniteMetric(eig.eigenvalues.min()));
    }
    let u = &eig.eigenvectors;
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let winv = u * inv_sqrt * u.transpose();

    // Ĉ_m = W⁻¹ C_m W⁻¹ with (C_m)_jk the Q_m coefficient of Q_j Q_k.
    let mut cm = vec![DMatrix::<f64>::zeros(n, n); m];
    for j in 0..n {
        for k in 0..n {
            let (lo, c) = basis.product(j, k);
            for (i, v) in c.iter().enumerate() {
                if lo + i < m {
                    cm[lo + i][(j, k)] = *v;
                }
            }
        }
    }
    let ch: Vec<DMatrix<f64>> = cm.iter().map(|c| &winv * c * &winv).collect();
    let h = DMatrix::from_fn(m, m, |a, b| ch[a].dot(&ch[b]));
    let mut rhs = DVector::zeros(m);
    for (i, v) in p.iter().enumerate().take(m) {
        rhs[i] = *v;
    }
    let y = match h.clone().cholesky() {
        Some(c) => c.solve(&rhs),
        None => h
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .map_err(|e| Error::Numeric(e.to_string()))?,
    };
    let mut rt = DMatrix::zeros(n, n);
    for (c, yi) in ch.iter().zip(y.iter()) {
        rt += c * *yi;
    }
    let rt = (&rt + rt.transpose()) * 0.5;
    let e = SymmetricEigen::new(rt);
    let max = e.eigenvalues.amax();
    let mut rho = DensityMatrix::default();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    for i in order {
        let lam = e.eigenvalues[i];
        if lam.abs() <= 1e-14 * max {
            continue;
        }
        let mut s = &winv * e.eigenvectors.column(i);
        if first_sign_negative(&s) {
            s.neg_mut();
        }
        rho.weights.push(lam);
        rho.states.push(s);
    }
    Ok(rho)
}
