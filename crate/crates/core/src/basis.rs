//! Polynomial bases on the exponential-decay measure.
//!
//! Every basis lives on the same measure `ω(t) = exp(-(t_now - t)/τ)`. The kinds differ only in
//! the abscissa map `x(t)` and the polynomial family. All three families obey a three-term
//! recurrence `Q_{k+1} = (α_k x + β_k) Q_k - γ_k Q_{k-1}`, and every operator below is assembled
//! from it, so coefficient vectors never pass through the monomial representation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Shifts larger than this many time constants wipe the history (`e^{-745}` underflows).
const MAX_SHIFT: f64 = 700.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BasisKind {
    /// `Q_k = P*_k(x)`, `x = exp(-(t_now - t)/τ)` on `(0, 1]`, `x0 = 1`.
    ShiftedLegendre,
    /// `Q_k = L_k(x)`, `x = (t_now - t)/τ` on `[0, ∞)`, `x0 = 0`.
    Laguerre,
    /// `Q_k = x^k`, `x = (t - t_now)/τ` on `(-∞, 0]`, `x0 = 0`.
    Monomials,
}

impl BasisKind {
    pub const ALL: [BasisKind; 3] = [
        BasisKind::ShiftedLegendre,
        BasisKind::Laguerre,
        BasisKind::Monomials,
    ];

    pub fn measure_token(self) -> &'static str {
        match self {
            BasisKind::ShiftedLegendre => "ScalpedMaxIProjectionLegendreShifted",
            BasisKind::Laguerre => "ScalpedMaxIProjectionLaguerre",
            BasisKind::Monomials => "ScalpedMaxIProjectionMonomials",
        }
    }

    /// Accepts the measure tokens as well as the bare kind names.
    pub fn from_token(s: &str) -> Option<Self> {
        match s {
            "ScalpedMaxIProjectionLegendreShifted" | "ShiftedLegendre" => {
                Some(BasisKind::ShiftedLegendre)
            }
            "ScalpedMaxIProjectionLaguerre" | "Laguerre" => Some(BasisKind::Laguerre),
            "ScalpedMaxIProjectionMonomials" | "Monomials" => Some(BasisKind::Monomials),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            BasisKind::ShiftedLegendre => "ShiftedLegendre",
            BasisKind::Laguerre => "Laguerre",
            BasisKind::Monomials => "Monomials",
        }
    }

    /// Abscissa at the anchor, `x(t_now)`.
    pub fn x0(self) -> f64 {
        match self {
            BasisKind::ShiftedLegendre => 1.0,
            BasisKind::Laguerre | BasisKind::Monomials => 0.0,
        }
    }

    /// Abscissa of the instant `u` time constants before the anchor.
    pub fn abscissa(self, u: f64) -> f64 {
        match self {
            BasisKind::ShiftedLegendre => (-u).exp(),
            BasisKind::Laguerre => u,
            BasisKind::Monomials => -u,
        }
    }

    /// `(α_k, β_k, γ_k)` of the recurrence producing `Q_{k+1}`.
    fn recurrence(self, k: usize) -> (f64, f64, f64) {
        let kf = k as f64;
        match self {
            BasisKind::ShiftedLegendre => {
                let d = kf + 1.0;
                (2.0 * (2.0 * kf + 1.0) / d, -(2.0 * kf + 1.0) / d, kf / d)
            }
            BasisKind::Laguerre => {
                let d = kf + 1.0;
                (-1.0 / d, (2.0 * kf + 1.0) / d, kf / d)
            }
            BasisKind::Monomials => (1.0, 0.0, 0.0),
        }
    }

    /// `(κ1, κ0)` with `dx/dt = (κ1 x + κ0)/τ`.
    fn velocity(self) -> (f64, f64) {
        match self {
            BasisKind::ShiftedLegendre => (1.0, 0.0),
            BasisKind::Laguerre => (0.0, -1.0),
            BasisKind::Monomials => (0.0, 1.0),
        }
    }

    /// `(a, b)` with `x_new = a x_old + b` after the anchor moves forward by `δ` time constants.
    fn shift_map(self, delta: f64) -> (f64, f64) {
        match self {
            BasisKind::ShiftedLegendre => ((-delta).exp(), 0.0),
            BasisKind::Laguerre => (1.0, delta),
            BasisKind::Monomials => (1.0, -delta),
        }
    }

    /// Closed range of abscissae covered by the past, `t ≤ t_now`.
    pub fn data_domain(self) -> (f64, f64) {
        match self {
            BasisKind::ShiftedLegendre => (0.0, 1.0),
            BasisKind::Laguerre => (0.0, f64::INFINITY),
            BasisKind::Monomials => (f64::NEG_INFINITY, 0.0),
        }
    }

    /// Domain on which basis functions may be evaluated.
    pub fn natural_domain(self) -> (f64, f64) {
        match self {
            BasisKind::Monomials => (f64::NEG_INFINITY, f64::INFINITY),
            k => k.data_domain(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasureConfig {
    pub kind: BasisKind,
    pub n: usize,
    /// Decay time in seconds.
    pub tau: f64,
}

impl MeasureConfig {
    pub const MIN_N: usize = 2;
    pub const MAX_N: usize = 24;

    pub fn new(kind: BasisKind, n: usize, tau: f64) -> Result<Self> {
        if !(Self::MIN_N..=Self::MAX_N).contains(&n) {
            return Err(Error::Config(format!(
                "n = {n} outside {}..={}",
                Self::MIN_N,
                Self::MAX_N
            )));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::Config(format!("tau = {tau} must be positive")));
        }
        Ok(Self { kind, n, tau })
    }

    /// Number of moments `2n - 1`.
    pub fn moment_count(&self) -> usize {
        2 * self.n - 1
    }
}

/// Coefficients of a polynomial in the `Q_k` basis.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisPoly {
    pub coeffs: Vec<f64>,
}

impl BasisPoly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    /// The single basis function `Q_k`.
    pub fn unit(k: usize) -> Self {
        let mut coeffs = vec![0.0; k + 1];
        coeffs[k] = 1.0;
        Self { coeffs }
    }

    /// Index of the last nonzero coefficient.
    pub fn degree(&self) -> Option<usize> {
        degree_of(&self.coeffs)
    }
}

pub(crate) fn degree_of(c: &[f64]) -> Option<usize> {
    c.iter().rposition(|&v| v != 0.0)
}

/// Precomputed operators of one `MeasureConfig`.
#[derive(Clone, Debug)]
pub struct Basis {
    cfg: MeasureConfig,
    rec: Vec<(f64, f64, f64)>,
    xmul: Vec<(f64, f64, f64)>,
    dshift: DMatrix<f64>,
    jmat: DMatrix<f64>,
    q0: DVector<f64>,
    j0: DVector<f64>,
    products: Vec<(usize, Vec<f64>)>,
    gauss: (Vec<f64>, Vec<f64>),
}

impl Basis {
    pub fn new(cfg: MeasureConfig) -> Self {
        let m = cfg.moment_count();
        let kind = cfg.kind;
        let rec: Vec<_> = (0..m).map(|k| kind.recurrence(k)).collect();
        let xmul = rec
            .iter()
            .map(|&(a, b, g)| (g / a, -b / a, 1.0 / a))
            .collect();
        let mut basis = Basis {
            cfg,
            rec,
            xmul,
            dshift: DMatrix::zeros(m, m),
            jmat: DMatrix::zeros(m, m),
            q0: DVector::zeros(m),
            j0: DVector::zeros(m),
            products: Vec::new(),
            gauss: gauss_legendre(m + 16),
        };

        let deriv = basis.derivative_matrix();
        let (k1, k0) = kind.velocity();
        let mut dshift = DMatrix::zeros(m, m);
        for k in 0..m {
            let col: Vec<f64> = deriv.column(k).iter().copied().collect();
            let mut xc = vec![0.0; m];
            basis.xmul_into(&col, &mut xc);
            for r in 0..m {
                dshift[(r, k)] = (k1 * xc[r] + k0 * col[r]) / cfg.tau;
            }
        }
        basis.dshift = dshift;

        // (1 + τD) J = τ p, upper triangular in degree.
        let mut lhs = &basis.dshift * cfg.tau;
        for k in 0..m {
            lhs[(k, k)] += 1.0;
        }
        let rhs = DMatrix::identity(m, m) * cfg.tau;
        basis.jmat = lhs
            .solve_upper_triangular(&rhs)
            .expect("time-shift operator has a nonzero diagonal");

        basis.q0 = DVector::from_vec(basis.eval_all(kind.x0(), m));
        basis.j0 = basis.jmat.tr_mul(&basis.q0);

        let n = cfg.n;
        let mut products = Vec::with_capacity(n * (n + 1) / 2);
        for j in 0..n {
            for k in j..n {
                let c = basis
                    .multiply_raw(&unit_vec(j, m), &unit_vec(k, m))
                    .expect("products of degree < n fit 2n - 1 moments");
                let lo = c.iter().position(|&v| v != 0.0).unwrap_or(0);
                let hi = degree_of(&c).map_or(lo, |d| d + 1);
                products.push((lo, c[lo..hi.max(lo)].to_vec()));
            }
        }
        basis.products = products;
        basis
    }

    pub fn config(&self) -> &MeasureConfig {
        &self.cfg
    }

    pub fn kind(&self) -> BasisKind {
        self.cfg.kind
    }

    pub fn n(&self) -> usize {
        self.cfg.n
    }

    pub fn tau(&self) -> f64 {
        self.cfg.tau
    }

    /// Number of moments `2n - 1`.
    pub fn m(&self) -> usize {
        self.cfg.moment_count()
    }

    pub fn x0(&self) -> f64 {
        self.cfg.kind.x0()
    }

    /// `Q_k(x0)` for `k < 2n - 1`.
    pub fn q0(&self) -> &DVector<f64> {
        &self.q0
    }

    /// `J(Q_k)(x0)`, which equals the time moment `⟨Q_k⟩` at any anchor.
    pub fn j0(&self) -> &DVector<f64> {
        &self.j0
    }

    /// Column `k` holds the coefficients of `J(Q_k)`.
    pub fn jmat(&self) -> &DMatrix<f64> {
        &self.jmat
    }

    /// Column `k` holds the coefficients of `D(Q_k)`.
    pub fn dshift_matrix(&self) -> &DMatrix<f64> {
        &self.dshift
    }

    /// `Q_k(x)` by the recurrence, with range and domain checks.
    pub fn eval(&self, k: usize, x: f64) -> Result<f64> {
        let max = self.m() - 1;
        if k > max {
            return Err(Error::IndexOutOfRange { index: k, max });
        }
        self.check_domain(x)?;
        Ok(self.eval_all(x, k + 1)[k])
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        let (lo, hi) = self.kind().natural_domain();
        if x.is_nan() || x < lo || x > hi {
            return Err(Error::Domain {
                x,
                basis: self.kind().name(),
            });
        }
        Ok(())
    }

    /// `Q_0(x) .. Q_{len-1}(x)` without domain checks.
    pub fn eval_all(&self, x: f64, len: usize) -> Vec<f64> {
        let mut q = vec![0.0; len];
        self.eval_into(x, &mut q);
        q
    }

    fn eval_into(&self, x: f64, q: &mut [f64]) {
        if q.is_empty() {
            return;
        }
        q[0] = 1.0;
        for k in 0..q.len() - 1 {
            let (a, b, g) = self.rec[k];
            let prev = if k > 0 { q[k - 1] } else { 0.0 };
            q[k + 1] = (a * x + b) * q[k] - g * prev;
        }
    }

    /// `p(x)` for coefficients `c`.
    pub fn eval_poly(&self, c: &[f64], x: f64) -> f64 {
        self.eval_poly_with_derivative(c, x).0
    }

    /// `(p(x), p'(x))`, derivative with respect to `x`.
    pub fn eval_poly_with_derivative(&self, c: &[f64], x: f64) -> (f64, f64) {
        if c.is_empty() {
            return (0.0, 0.0);
        }
        let (mut q_prev, mut q) = (0.0, 1.0);
        let (mut d_prev, mut d) = (0.0, 0.0);
        let mut val = c[0];
        let mut der = 0.0;
        for (k, &ck) in c.iter().enumerate().skip(1) {
            let (a, b, g) = self.rec[k - 1];
            let q_next = (a * x + b) * q - g * q_prev;
            let d_next = a * q + (a * x + b) * d - g * d_prev;
            q_prev = q;
            q = q_next;
            d_prev = d;
            d = d_next;
            val += ck * q;
            der += ck * d;
        }
        (val, der)
    }

    /// Column `k` holds `dQ_k/dx`, from `Q'_{k+1} = α_k Q_k + (α_k x + β_k) Q'_k - γ_k Q'_{k-1}`.
    fn derivative_matrix(&self) -> DMatrix<f64> {
        let m = self.m();
        let mut d = DMatrix::zeros(m, m);
        let mut prev = vec![0.0; m];
        let mut cur = vec![0.0; m];
        let mut xc = vec![0.0; m];
        for k in 0..m - 1 {
            let (a, b, g) = self.rec[k];
            self.xmul_into(&cur, &mut xc);
            let mut next = vec![0.0; m];
            for i in 0..m {
                next[i] = a * xc[i] + b * cur[i] - g * prev[i];
            }
            next[k] += a;
            for i in 0..m {
                d[(i, k + 1)] = next[i];
            }
            prev = std::mem::replace(&mut cur, next);
        }
        d
    }

    /// `out = x · v` in coefficients; the top coefficient of `v` must be zero.
    fn xmul_into(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let len = v.len();
        for (k, &vk) in v.iter().enumerate() {
            if vk == 0.0 {
                continue;
            }
            let (lo, di, up) = self.xmul[k];
            debug_assert!(k + 1 < len || up == 0.0 || vk == 0.0);
            if k > 0 {
                out[k - 1] += lo * vk;
            }
            out[k] += di * vk;
            if k + 1 < len {
                out[k + 1] += up * vk;
            }
        }
    }

    /// Product in a fixed-length (`2n - 1`) buffer.
    fn multiply_raw(&self, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        let m = self.m();
        let da = degree_of(a);
        let db = degree_of(b);
        let (da, db) = match (da, db) {
            (Some(da), Some(db)) => (da, db),
            _ => return Ok(vec![0.0; m]),
        };
        if da + db > m - 1 {
            return Err(Error::DegreeOverflow {
                degree: da + db,
                bound: m - 1,
            });
        }
        let mut out = vec![0.0; m];
        let mut prev = vec![0.0; m];
        let mut cur = vec![0.0; m];
        cur[..=db].copy_from_slice(&b[..=db]);
        let mut xc = vec![0.0; m];
        for j in 0..=da {
            if a[j] != 0.0 {
                for (o, c) in out.iter_mut().zip(&cur) {
                    *o += a[j] * c;
                }
            }
            if j == da {
                break;
            }
            let (al, be, ga) = self.rec[j];
            self.xmul_into(&cur, &mut xc);
            for i in 0..m {
                let next = al * xc[i] + be * cur[i] - ga * prev[i];
                prev[i] = cur[i];
                cur[i] = next;
            }
        }
        Ok(out)
    }

    /// `a · b`, exact up to rounding; errors when the degree exceeds `2n - 2`.
    pub fn multiply(&self, a: &BasisPoly, b: &BasisPoly) -> Result<BasisPoly> {
        let a = self.padded(&a.coeffs)?;
        let b = self.padded(&b.coeffs)?;
        Ok(BasisPoly::new(self.multiply_raw(&a, &b)?))
    }

    fn padded(&self, c: &[f64]) -> Result<Vec<f64>> {
        let m = self.m();
        if let Some(d) = degree_of(c) {
            if d >= m {
                return Err(Error::DegreeOverflow {
                    degree: d,
                    bound: m - 1,
                });
            }
        }
        let mut v = vec![0.0; m];
        let len = c.len().min(m);
        v[..len].copy_from_slice(&c[..len]);
        Ok(v)
    }

    /// `Q_j Q_k` for `j, k < n` as `(first index, coefficients)`.
    pub fn product(&self, j: usize, k: usize) -> (usize, &[f64]) {
        let (j, k) = if j <= k { (j, k) } else { (k, j) };
        let n = self.n();
        let idx = j * n - j * (j + 1) / 2 + k;
        let (lo, ref c) = self.products[idx];
        (lo, c)
    }

    /// `Σ_{jk} a_j b_k Q_j Q_k` for vectors of length `≤ n`, as `2n - 1` coefficients.
    pub fn product_of_states(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m()];
        for (j, &aj) in a.iter().enumerate() {
            if aj == 0.0 {
                continue;
            }
            for (k, &bk) in b.iter().enumerate() {
                let w = aj * bk;
                if w == 0.0 {
                    continue;
                }
                let (lo, c) = self.product(j, k);
                for (o, cv) in out[lo..lo + c.len()].iter_mut().zip(c) {
                    *o += w * cv;
                }
            }
        }
        out
    }

    /// Matrix `⟨Q_j|f|Q_k⟩ = Σ_m c^{jk}_m ⟨Q_m f⟩` for `j, k < dim`.
    pub fn operator_matrix(&self, moments: &[f64], dim: usize) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            for k in j..dim {
                let (lo, c) = self.product(j, k);
                let v: f64 = c.iter().zip(&moments[lo..]).map(|(x, y)| x * y).sum();
                a[(j, k)] = v;
                a[(k, j)] = v;
            }
        }
        a
    }

    /// Chain-rule time derivative: `d/dt p(x(t)) = D(p)(x(t))`.
    pub fn timeshift_d(&self, p: &BasisPoly) -> Result<BasisPoly> {
        let n = self.n();
        if let Some(d) = p.degree() {
            if d >= n {
                return Err(Error::DegreeOverflow {
                    degree: d,
                    bound: n - 1,
                });
            }
        }
        let v = self.padded(&p.coeffs)?;
        let mut out = &self.dshift * DVector::from_vec(v);
        for x in out.iter_mut().skip(n) {
            *x = 0.0;
        }
        Ok(BasisPoly::new(out.as_slice()[..n].to_vec()))
    }

    /// `D` restricted to states of dimension `dim ≤ n`; it never raises the degree.
    pub fn dshift_block(&self, dim: usize) -> DMatrix<f64> {
        self.dshift.view((0, 0), (dim, dim)).into_owned()
    }

    /// The measure-consistent shift `D + 1/(2τ)`, for which
    /// `⟨Dψ|φ⟩ + ⟨ψ|Dφ⟩ = ψ(x0)φ(x0)` holds exactly.
    pub fn measure_shift_block(&self, dim: usize) -> DMatrix<f64> {
        let mut d = self.dshift_block(dim);
        let h = 0.5 / self.tau();
        for k in 0..dim {
            d[(k, k)] += h;
        }
        d
    }

    /// `J(p)` with `∫_{-∞}^{t} p(x(t'))ω(t')dt' = ω(t) J(p)(x(t))`.
    pub fn integrate_j(&self, p: &BasisPoly) -> Result<BasisPoly> {
        let v = self.padded(&p.coeffs)?;
        let out = &self.jmat * DVector::from_vec(v);
        Ok(BasisPoly::new(out.as_slice().to_vec()))
    }

    /// Re-anchoring operator for a forward move of `dt` seconds.
    pub fn anchor_shift(&self, dt: f64) -> AnchorShift {
        let m = self.m();
        let delta = dt / self.tau();
        if delta <= 0.0 {
            return AnchorShift {
                decay: 1.0,
                matrix: None,
                interval: DVector::zeros(m),
            };
        }
        if delta > MAX_SHIFT {
            return AnchorShift {
                decay: 0.0,
                matrix: Some(DMatrix::zeros(m, m)),
                interval: self.j0.clone(),
            };
        }
        let (a, b) = self.kind().shift_map(delta);
        let decay = (-delta).exp();
        // Row k holds Q_k(a x + b) in the Q(x) basis.
        let mut s = DMatrix::zeros(m, m);
        s[(0, 0)] = 1.0;
        let mut prev = vec![0.0; m];
        let mut cur = unit_vec(0, m);
        let mut xc = vec![0.0; m];
        for k in 0..m - 1 {
            let (al, be, ga) = self.rec[k];
            self.xmul_into(&cur, &mut xc);
            for i in 0..m {
                let next = al * (a * xc[i] + b * cur[i]) + be * cur[i] - ga * prev[i];
                prev[i] = cur[i];
                cur[i] = next;
            }
            for i in 0..m {
                s[(k + 1, i)] = cur[i];
            }
        }
        let interval = if delta <= 2.0 * m as f64 {
            self.interval_quadrature(delta)
        } else {
            let y = a * self.x0() + b;
            let qy = DVector::from_vec(self.eval_all(y, m));
            &self.j0 - self.jmat.tr_mul(&qy) * decay
        };
        s *= decay;
        AnchorShift {
            decay,
            matrix: Some(s),
            interval,
        }
    }

    /// `τ ∫_0^δ Q(x(u)) e^{-u} du` by Gauss-Legendre on unit pieces. Subtracting the tail from
    /// `j0` loses everything for short gaps when `j0` grows like `k!`.
    fn interval_quadrature(&self, delta: f64) -> DVector<f64> {
        let m = self.m();
        let kind = self.kind();
        let (nodes, weights) = &self.gauss;
        let pieces = delta.ceil().max(1.0);
        let h = delta / pieces;
        let mut out = DVector::zeros(m);
        let mut q = vec![0.0; m];
        for p in 0..pieces as usize {
            let lo = p as f64 * h;
            for (s, w) in nodes.iter().zip(weights) {
                let u = lo + 0.5 * h * (s + 1.0);
                self.eval_into(kind.abscissa(u), &mut q);
                let f = 0.5 * h * w * (-u).exp() * self.tau();
                for (o, v) in out.iter_mut().zip(&q) {
                    *o += f * v;
                }
            }
        }
        out
    }

    /// Real roots of `p` in the natural domain, ascending.
    pub fn find_real_roots(&self, p: &BasisPoly) -> Result<Vec<f64>> {
        let c = self.padded(&p.coeffs)?;
        let d = degree_of(&c).ok_or(Error::ZeroPolynomial)?;
        if d == 0 {
            return Ok(Vec::new());
        }
        let lead = c[d];
        let mut a = DMatrix::zeros(d, d);
        for k in 0..d {
            let (lo, di, up) = self.xmul[k];
            if k > 0 {
                a[(k, k - 1)] = lo;
            }
            a[(k, k)] = di;
            if k + 1 < d {
                a[(k, k + 1)] = up;
            } else {
                for j in 0..d {
                    a[(k, j)] -= up * c[j] / lead;
                }
            }
        }
        balance(&mut a);
        let eig = a.complex_eigenvalues();
        let scale = c.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let (lo, hi) = self.kind().natural_domain();
        let slack = 1e-10;
        let mut roots = Vec::new();
        for z in eig.iter() {
            if z.im.abs() > 1e-8 * (1.0 + z.re.abs()) {
                continue;
            }
            let mut x = z.re;
            for _ in 0..8 {
                let (v, dv) = self.eval_poly_with_derivative(&c, x);
                if dv == 0.0 || v == 0.0 {
                    break;
                }
                let step = v / dv;
                let next = x - step;
                if !next.is_finite() {
                    break;
                }
                x = next;
                if step.abs() <= 1e-16 * (1.0 + x.abs()) {
                    break;
                }
            }
            if x < lo - slack * (1.0 + lo.abs()) || x > hi + slack * (1.0 + hi.abs()) {
                continue;
            }
            let x = x.clamp(lo, hi);
            if self.eval_poly(&c, x).abs() <= 1e-10 * scale {
                roots.push(x);
            }
        }
        roots.sort_by(f64::total_cmp);
        Ok(roots)
    }

    /// Monomial coefficients in `x` of a `Q` expansion.
    pub fn to_monomial(&self, c: &[f64]) -> Vec<f64> {
        let len = c.len();
        let mut out = vec![0.0; len];
        let mut prev = vec![0.0; len + 1];
        let mut cur = vec![0.0; len + 1];
        if len == 0 {
            return out;
        }
        cur[0] = 1.0;
        for (k, &ck) in c.iter().enumerate() {
            for i in 0..len {
                out[i] += ck * cur[i];
            }
            if k + 1 == len {
                break;
            }
            let (a, b, g) = self.rec[k];
            let mut next = vec![0.0; len + 1];
            for i in 0..=k {
                next[i + 1] += a * cur[i];
                next[i] += b * cur[i] - g * prev[i];
            }
            prev = std::mem::replace(&mut cur, next);
        }
        out
    }

    /// Inverse of [`Basis::to_monomial`].
    pub fn from_monomial(&self, mono: &[f64]) -> Vec<f64> {
        let len = mono.len();
        // Column k of T holds the monomial expansion of Q_k; T is upper triangular.
        let mut t = DMatrix::zeros(len, len);
        for k in 0..len {
            let col = self.to_monomial(&unit_vec(k, len));
            for i in 0..len {
                t[(i, k)] = col[i];
            }
        }
        t.solve_upper_triangular(&DVector::from_column_slice(mono))
            .map(|v| v.as_slice().to_vec())
            .unwrap_or_else(|| vec![f64::NAN; len])
    }
}

/// Lower-triangular re-anchoring operator with the measure decay folded in.
#[derive(Clone, Debug)]
pub struct AnchorShift {
    decay: f64,
    matrix: Option<DMatrix<f64>>,
    interval: DVector<f64>,
}

impl AnchorShift {
    /// `exp(-Δ/τ)`.
    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn is_identity(&self) -> bool {
        self.matrix.is_none()
    }

    /// Re-anchors a moment vector in place.
    pub fn apply(&self, v: &mut [f64]) {
        let Some(s) = &self.matrix else { return };
        let m = v.len();
        for k in (0..m).rev() {
            let mut acc = 0.0;
            for j in 0..=k {
                acc += s[(k, j)] * v[j];
            }
            v[k] = acc;
        }
    }

    /// `∫ Q_k(x(t))ω(t)dt` over the interval the anchor just moved across.
    pub fn interval(&self) -> &[f64] {
        self.interval.as_slice()
    }
}

/// Nodes and weights on `[-1, 1]` from the Jacobi matrix.
fn gauss_legendre(k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut t = DMatrix::zeros(k, k);
    for j in 1..k {
        let b = j as f64 / ((4 * j * j - 1) as f64).sqrt();
        t[(j, j - 1)] = b;
        t[(j - 1, j)] = b;
    }
    let eig = t.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..k)
        .map(|j| (eig.eigenvalues[j], 2.0 * eig.eigenvectors[(0, j)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn unit_vec(k: usize, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[k] = 1.0;
    v
}

/// Parlett-Reinsch diagonal balancing with power-of-two scalings.
fn balance(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    let radix = 2.0f64;
    let mut done = false;
    let mut sweeps = 0;
    while !done && sweeps < 100 {
        done = true;
        sweeps += 1;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut cc = c;
            let g = r / radix;
            while cc < g {
                f *= radix;
                cc *= radix * radix;
            }
            let g = r * radix;
            while cc > g {
                f /= radix;
                cc /= radix * radix;
            }
            if (cc + r / f) / f < 0.95 * s {
                done = false;
                for j in 0..n {
                    a[(i, j)] /= f;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(kind: BasisKind, n: usize, tau: f64) -> Basis {
        Basis::new(MeasureConfig::new(kind, n, tau).unwrap())
    }

    #[test]
    fn shifted_legendre_values() {
        let b = basis(BasisKind::ShiftedLegendre, 4, 1.0);
        assert_eq!(b.eval(0, 0.3).unwrap(), 1.0);
        assert_eq!(b.eval(1, 1.0).unwrap(), 1.0);
        let x = 0.3;
        let p2 = 6.0 * x * x - 6.0 * x + 1.0;
        assert!((b.eval(2, x).unwrap() - p2).abs() < 1e-15);
        assert!(b.eval(1, 1.5).is_err());
        assert!(b.eval(7, 0.5).is_err());
    }

    #[test]
    fn monomial_and_laguerre_values() {
        let m = basis(BasisKind::Monomials, 4, 1.0);
        assert_eq!(m.eval(3, 0.5).unwrap(), 0.125);
        let l = basis(BasisKind::Laguerre, 4, 1.0);
        let x = 0.7;
        let l2 = 0.5 * (x * x - 4.0 * x + 2.0);
        assert!((l.eval(2, x).unwrap() - l2).abs() < 1e-15);
        assert!(l.eval(1, -0.1).is_err());
    }

    #[test]
    fn legendre_square_of_first() {
        let b = basis(BasisKind::ShiftedLegendre, 3, 1.0);
        let c = b
            .multiply(&BasisPoly::unit(1), &BasisPoly::unit(1))
            .unwrap();
        assert!((c.coeffs[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!(c.coeffs[1].abs() < 1e-15);
        assert!((c.coeffs[2] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn monomial_product_and_overflow() {
        let b = basis(BasisKind::Monomials, 4, 1.0);
        let c = b
            .multiply(&BasisPoly::unit(2), &BasisPoly::unit(3))
            .unwrap();
        assert_eq!(c.coeffs[5], 1.0);
        assert_eq!(c.coeffs.iter().filter(|&&v| v != 0.0).count(), 1);
        assert!(matches!(
            b.multiply(&BasisPoly::unit(4), &BasisPoly::unit(3)),
            Err(Error::DegreeOverflow { .. })
        ));
        let one = b
            .multiply(&BasisPoly::unit(0), &BasisPoly::unit(0))
            .unwrap();
        assert_eq!(one.coeffs[0], 1.0);
    }

    #[test]
    fn shift_operator_examples() {
        let tau = 3.0;
        let m = basis(BasisKind::Monomials, 4, tau);
        let d = m.timeshift_d(&BasisPoly::unit(1)).unwrap();
        assert!((d.coeffs[0] - 1.0 / tau).abs() < 1e-15);
        assert!(d.coeffs[1..].iter().all(|&v| v == 0.0));
        let l = basis(BasisKind::ShiftedLegendre, 4, tau);
        assert!(l
            .timeshift_d(&BasisPoly::unit(0))
            .unwrap()
            .coeffs
            .iter()
            .all(|&v| v == 0.0));
        // x = (Q_0 + Q_1)/2, so D(x) = x/τ has the same coefficients scaled by 1/τ.
        let x = BasisPoly::new(vec![0.5, 0.5]);
        let dx = l.timeshift_d(&x).unwrap();
        assert!((dx.coeffs[0] - 0.5 / tau).abs() < 1e-15);
        assert!((dx.coeffs[1] - 0.5 / tau).abs() < 1e-15);
    }

    #[test]
    fn j_of_constant() {
        let tau = 2.5;
        for kind in BasisKind::ALL {
            let b = basis(kind, 4, tau);
            let j = b.integrate_j(&BasisPoly::unit(0)).unwrap();
            assert!((j.coeffs[0] - tau).abs() < 1e-14);
            assert!(j.coeffs[1..].iter().all(|v| v.abs() < 1e-14));
            let z = b.integrate_j(&BasisPoly::zero()).unwrap();
            assert!(z.coeffs.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn legendre_gram_is_diagonal() {
        let tau = 4.0;
        let b = basis(BasisKind::ShiftedLegendre, 5, tau);
        for k in 0..b.m() {
            let want = if k == 0 { tau } else { 0.0 };
            assert!((b.j0()[k] - want).abs() < 1e-13 * tau, "k={k}");
        }
        let g = b.operator_matrix(b.j0().as_slice(), 5);
        for j in 0..5 {
            for k in 0..5 {
                let want = if j == k {
                    tau / (2.0 * j as f64 + 1.0)
                } else {
                    0.0
                };
                assert!((g[(j, k)] - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn laguerre_gram_is_scaled_identity() {
        let tau = 1.5;
        let b = basis(BasisKind::Laguerre, 5, tau);
        let g = b.operator_matrix(b.j0().as_slice(), 5);
        for j in 0..5 {
            for k in 0..5 {
                let want = if j == k { tau } else { 0.0 };
                assert!((g[(j, k)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn roots_examples() {
        let m = basis(BasisKind::Monomials, 3, 1.0);
        let r = m
            .find_real_roots(&BasisPoly::new(vec![-1.0, 0.0, 1.0]))
            .unwrap();
        assert_eq!(r.len(), 2);
        assert!((r[0] + 1.0).abs() < 1e-14 && (r[1] - 1.0).abs() < 1e-14);
        let l = basis(BasisKind::ShiftedLegendre, 3, 1.0);
        let r = l.find_real_roots(&BasisPoly::unit(1)).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r[0] - 0.5).abs() < 1e-15);
        assert!(matches!(
            l.find_real_roots(&BasisPoly::zero()),
            Err(Error::ZeroPolynomial)
        ));
    }

    #[test]
    fn monomial_round_trip() {
        for kind in BasisKind::ALL {
            let b = basis(kind, 4, 1.0);
            let c = vec![0.3, -1.2, 0.7, 2.0, -0.4];
            let back = b.from_monomial(&b.to_monomial(&c));
            for (x, y) in c.iter().zip(&back) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn anchor_shift_composes() {
        for kind in BasisKind::ALL {
            let b = basis(kind, 4, 2.0);
            let mut v: Vec<f64> = (0..b.m()).map(|k| 1.0 / (k as f64 + 1.0)).collect();
            let mut w = v.clone();
            b.anchor_shift(0.7).apply(&mut v);
            b.anchor_shift(0.4).apply(&mut v);
            b.anchor_shift(1.1).apply(&mut w);
            let scale = w.iter().fold(0.0f64, |s, x| s.max(x.abs()));
            for (x, y) in v.iter().zip(&w) {
                assert!((x - y).abs() <= 1e-12 * scale, "{kind:?}");
            }
        }
    }
}
