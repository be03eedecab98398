//! Market states built from the operator matrices: the "now" state, the execution-flow
//! spectrum, state prices, Radon-Nikodym interpolation, the aggregated `V/t` state and the
//! constrained `I → max` solvers.

use nalgebra::{DMatrix, DVector};

use crate::basis::{Basis, BasisPoly};
use crate::error::{Error, Result};
use crate::moments::{MomentSet, Observable};
use crate::operators::{form, Spectrum, Whitener};

/// Operator matrices of one moment snapshot, truncated to the effective dimension.
/// Prices are relative to the set's offset.
#[derive(Clone, Debug)]
pub struct Operators {
    pub g: DMatrix<f64>,
    pub i: DMatrix<f64>,
    pub pi: DMatrix<f64>,
    pub p2i: DMatrix<f64>,
    pub p3i: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub dpdt: DMatrix<f64>,
    pub v0: DMatrix<f64>,
    pub v1: DMatrix<f64>,
    pub t0: DMatrix<f64>,
    pub t1: DMatrix<f64>,
    pub p_offset: f64,
    /// Last price relative to the offset.
    pub p_last: f64,
}

impl Operators {
    pub fn build(ms: &MomentSet, dim: usize) -> Self {
        let b = ms.basis();
        let op = |f: Observable| b.operator_matrix(ms.moments(f), dim);
        let agg = ms.aggregated();
        Self {
            g: op(Observable::One),
            i: op(Observable::Flow(0)),
            pi: op(Observable::Flow(1)),
            p2i: op(Observable::Flow(2)),
            p3i: op(Observable::Flow(3)),
            p: op(Observable::Price(1)),
            dpdt: op(Observable::DpDt),
            v0: b.operator_matrix(&agg.v0, dim),
            v1: b.operator_matrix(&agg.v1, dim),
            t0: b.operator_matrix(&agg.t0, dim),
            t1: b.operator_matrix(&agg.t1, dim),
            p_offset: ms.p_offset(),
            p_last: ms.p_last() - ms.p_offset(),
        }
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }
}

/// `ψ_y = G⁻¹Q(y)/sqrt(Q(y)ᵀG⁻¹Q(y))`, the state localized at `y`.
pub fn localized_state(w: &Whitener, q_y: &[f64]) -> Result<DVector<f64>> {
    let n = w.n();
    let q = DVector::from_iterator(n, q_y.iter().copied().chain(std::iter::repeat(0.0)).take(n));
    let a = w.solve_metric(&q);
    let k = a.dot(&q);
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Numeric(format!(
            "Christoffel kernel {k} at the point"
        )));
    }
    Ok(a / k.sqrt())
}

/// The "now" state `ψ₀`, localized at `x0`.
pub fn psi_now(w: &Whitener, basis: &Basis) -> Result<DVector<f64>> {
    localized_state(w, basis.q0().as_slice())
}

/// `ψ(x)` for a state's coefficients.
pub fn state_value(basis: &Basis, psi: &DVector<f64>, x: f64) -> f64 {
    basis.eval_poly(psi.as_slice(), x)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExecutionFlowSummary {
    pub s_l: f64,
    pub s_h: f64,
    pub s0: f64,
    pub w_l: f64,
    pub w_h: f64,
    pub gamma0: f64,
    /// The spectrum was flat and `ψ_IH` was set to `ψ₀`.
    pub flat: bool,
}

impl ExecutionFlowSummary {
    pub fn w_l_squared(&self) -> f64 {
        (self.w_l * self.w_l).min(1.0)
    }

    pub fn w_h_squared(&self) -> f64 {
        (self.w_h * self.w_h).min(1.0)
    }
}

/// Execution-flow spectrum with the extreme states picked out.
#[derive(Clone, Debug)]
pub struct FlowSpectrum {
    pub spectrum: Spectrum,
    pub summary: ExecutionFlowSummary,
    pub psi_ih: DVector<f64>,
    pub psi_il: DVector<f64>,
    pub lambda_ih: f64,
}

/// Solves `‖I‖ψ = λ‖1‖ψ` and summarizes it against `ψ₀`.
pub fn flow_summary(
    w: &Whitener,
    basis: &Basis,
    ops: &Operators,
    psi0: &DVector<f64>,
) -> FlowSpectrum {
    let mut spectrum = w.solve(&ops.i);
    spectrum.orient(basis.q0().as_slice());
    let (s_l, psi_il) = spectrum.lowest();
    let (s_h, psi_ih) = spectrum.highest();
    let (s_l, s_h) = (s_l, s_h);
    let s0 = form(psi0, &ops.i, psi0);
    let flat = spectrum.is_flat();
    let (psi_ih, psi_il, w_l, w_h, gamma0) = if flat {
        (psi0.clone(), psi_il.clone(), 0.0, 1.0, 0.0)
    } else {
        let w_l = form(psi_il, &ops.g, psi0);
        let w_h = form(psi_ih, &ops.g, psi0);
        let gamma0 = (2.0 * s0 - s_l - s_h) / (s_l - s_h);
        (psi_ih.clone(), psi_il.clone(), w_l, w_h, gamma0)
    };
    FlowSpectrum {
        summary: ExecutionFlowSummary {
            s_l,
            s_h,
            s0,
            w_l,
            w_h,
            gamma0,
            flat,
        },
        lambda_ih: s_h,
        psi_ih,
        psi_il,
        spectrum,
    }
}

/// Volume-, time-, aggregated-volume- and aggregated-time-weighted prices of a state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StatePrices {
    pub p_v: f64,
    pub p_t: f64,
    pub p_big_v: f64,
    pub p_big_t: f64,
}

fn ratio(num: f64, den: f64, offset: f64) -> f64 {
    if den > 0.0 && den.is_finite() {
        num / den + offset
    } else {
        f64::NAN
    }
}

pub fn state_prices(psi: &DVector<f64>, ops: &Operators) -> StatePrices {
    let off = ops.p_offset;
    StatePrices {
        p_v: ratio(form(psi, &ops.pi, psi), form(psi, &ops.i, psi), off),
        p_t: ratio(form(psi, &ops.p, psi), form(psi, &ops.g, psi), off),
        p_big_v: ratio(form(psi, &ops.v1, psi), form(psi, &ops.v0, psi), off),
        p_big_t: ratio(form(psi, &ops.t1, psi), form(psi, &ops.t0, psi), off),
    }
}

#[derive(Clone, Debug)]
pub struct RnInterpolation {
    pub i: f64,
    pub p_t: f64,
    pub p_v: f64,
    /// `⟨ψ_y|ψ_I^[i]⟩²` for every execution-flow eigenstate.
    pub projections: Vec<f64>,
}

/// Radon-Nikodym interpolation at `y`.
pub fn interpolate_rn(
    y: f64,
    basis: &Basis,
    w: &Whitener,
    ops: &Operators,
    flow: &Spectrum,
) -> Result<RnInterpolation> {
    let (lo, hi) = basis.kind().natural_domain();
    if !(y >= lo && y <= hi) {
        return Err(Error::Domain {
            x: y,
            basis: "interpolation",
        });
    }
    let q = basis.eval_all(y, ops.dim());
    let psi = localized_state(w, &q)?;
    let prices = state_prices(&psi, ops);
    let projections = flow
        .vectors
        .iter()
        .map(|v| {
            let c = form(v, &ops.g, &psi);
            c * c
        })
        .collect();
    Ok(RnInterpolation {
        i: form(&psi, &ops.i, &psi),
        p_t: prices.p_t,
        p_v: prices.p_v,
        projections,
    })
}

/// Spectrum of the aggregated pencil `‖V₀‖ψ = λ‖T₀‖ψ` with identity diagnostics.
#[derive(Clone, Debug)]
pub struct AggregatedFlow {
    pub spectrum: Spectrum,
    /// `max_i |λ_i - ⟨ψ_i|I|ψ_i⟩/⟨ψ_i|ψ_i⟩|`.
    pub lambda_eq_residual: f64,
    /// Largest `|⟨ψ_i|T₀|ψ_i⟩ - 1|`.
    pub norm_residual: f64,
    /// Second variation of the `V/t` quotient in the maximal state along `δψ = Dψ`.
    pub d2_vt: f64,
    /// First variation of the `I` quotient in the same state and direction.
    pub d1_i: f64,
    /// `|D2_VT·⟨ψ|T₀|ψ⟩ - D1_I·⟨ψ|ψ⟩/2|`.
    pub variation_residual: f64,
}

pub fn aggregated_flow_state(basis: &Basis, ops: &Operators) -> Result<AggregatedFlow> {
    let w = Whitener::new(&ops.t0)?;
    let mut spectrum = w.solve(&ops.v0);
    spectrum.orient(basis.q0().as_slice());
    let mut lambda_eq_residual: f64 = 0.0;
    let mut norm_residual: f64 = 0.0;
    for (lam, v) in spectrum.values.iter().zip(&spectrum.vectors) {
        let local = form(v, &ops.i, v) / form(v, &ops.g, v);
        lambda_eq_residual = lambda_eq_residual.max((lam - local).abs());
        norm_residual = norm_residual.max((form(v, &ops.t0, v) - 1.0).abs());
    }
    let (lam, psi) = spectrum.highest();
    let dim = ops.dim();
    let d = basis.measure_shift_block(dim);
    let dpsi = &d * psi.rows(0, dim);
    let tn = form(psi, &ops.t0, psi);
    let d2_vt = (form(&dpsi, &ops.v0, &dpsi) - lam * form(&dpsi, &ops.t0, &dpsi)) / tn;
    let (_, d1_i, _) = crate::operators::rayleigh_variations(psi, &dpsi, &ops.i, &ops.g)?;
    let variation_residual = (d2_vt * tn - 0.5 * d1_i * form(psi, &ops.g, psi)).abs();
    Ok(AggregatedFlow {
        spectrum,
        lambda_eq_residual,
        norm_residual,
        d2_vt,
        d1_i,
        variation_residual,
    })
}

/// Constraint operators for the constrained `I → max` problems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConstraintOption {
    /// `(p - P_last) I`: the state's volume-weighted price equals the last price.
    PriceEqLast,
    /// `V₁ - P_last V₀`: the aggregated moving-average price equals the last price.
    MovingAverageEqLast,
    /// `d/dt [(p - P_last) I]`, boundary zero since the bracket vanishes at `t_now`.
    PriceFlowChange,
    /// `dp/dt`: a price extremum.
    PriceExtremum,
    /// `d²p/dt²`, boundary zero: a `dp/dt` extremum.
    DpExtremum,
}

pub fn constraint_matrix(option: ConstraintOption, basis: &Basis, ops: &Operators) -> DMatrix<f64> {
    let pl = ops.p_last;
    let c = match option {
        ConstraintOption::PriceEqLast => &ops.pi - &ops.i * pl,
        ConstraintOption::MovingAverageEqLast => &ops.v1 - &ops.v0 * pl,
        ConstraintOption::PriceFlowChange => {
            crate::moments::didt_operator(basis, &(&ops.pi - &ops.i * pl), 0.0)
        }
        ConstraintOption::PriceExtremum => ops.dpdt.clone(),
        ConstraintOption::DpExtremum => crate::moments::didt_operator(basis, &ops.dpdt, 0.0),
    };
    (&c + c.transpose()) * 0.5
}

#[derive(Clone, Debug)]
pub struct ConstrainedSolution {
    pub psi: DVector<f64>,
    pub mu: f64,
    pub i_m: f64,
    pub wr0: f64,
    pub exists: bool,
    pub iterations: usize,
    /// Localization point of the localized solver.
    pub y: Option<f64>,
    /// Real roots of the localized constraint polynomial.
    pub n_roots: usize,
    /// The localized constraint polynomial vanished identically.
    pub degenerate: bool,
}

impl ConstrainedSolution {
    fn none(n: usize) -> Self {
        Self {
            psi: DVector::zeros(n),
            mu: f64::NAN,
            i_m: f64::NAN,
            wr0: f64::NAN,
            exists: false,
            iterations: 0,
            y: None,
            n_roots: 0,
            degenerate: false,
        }
    }

    /// `|⟨ψ|C|ψ⟩| / (‖C‖·⟨ψ|ψ⟩)` with `‖C‖` the largest entry magnitude.
    pub fn residual(&self, g: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
        let cn = c.amax();
        if cn == 0.0 {
            return 0.0;
        }
        form(&self.psi, c, &self.psi).abs() / (cn * form(&self.psi, g, &self.psi))
    }
}

const GLOBAL_ITERATIONS: usize = 10;
const RESIDUAL_TOL: f64 = 1e-8;

/// Maximizes `⟨ψ|I|ψ⟩` over `⟨ψ|ψ⟩ = 1, ⟨ψ|C|ψ⟩ = 0` by the Lagrange iteration started from
/// the unconstrained maximal state, then by minimizing the top eigenvalue of `I + μC` over `μ`.
/// `iterations` counts the former.
pub fn constrained_global(
    g: &DMatrix<f64>,
    i: &DMatrix<f64>,
    c: &DMatrix<f64>,
    psi0: Option<&DVector<f64>>,
) -> Result<ConstrainedSolution> {
    let n = g.nrows();
    let w = Whitener::new(g)?;
    let cs = w.solve(c);
    let cscale = cs.values.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let tiny = 1e-12 * cscale;
    if cscale == 0.0 || cs.values[0] >= -tiny || cs.values[cs.len() - 1] <= tiny {
        return Ok(ConstrainedSolution::none(n));
    }
    let cn = c.amax();
    let rayleigh = |v: &DVector<f64>| form(v, i, v) / form(v, g, v);
    let residual = |v: &DVector<f64>| form(v, c, v).abs() / (cn * form(v, g, v));
    let normalize = |v: DVector<f64>| {
        let nrm = form(&v, g, &v).sqrt();
        v / nrm
    };
    // Ket C|ψ⟩ in coefficients is G⁻¹Cψ.
    let adjust = |psi: &DVector<f64>| -> Option<DVector<f64>> {
        let b = w.solve_metric(&(c * psi));
        let a2 = form(&b, c, &b);
        let a1 = form(psi, c, &b);
        let a0 = form(psi, c, psi);
        let roots: Vec<f64> = if a2.abs() <= 1e-14 * (a1.abs() + a0.abs()) {
            if a1 == 0.0 {
                return None;
            }
            vec![-a0 / (2.0 * a1)]
        } else {
            let disc = a1 * a1 - a2 * a0;
            if disc < 0.0 {
                return None;
            }
            let q = -(a1 + a1.signum() * disc.sqrt());
            if q == 0.0 {
                vec![0.0]
            } else {
                vec![q / a2, a0 / q]
            }
        };
        roots
            .into_iter()
            .map(|al| psi + &b * al)
            .filter(|v| form(v, g, v) > 0.0)
            .map(normalize)
            .max_by(|x, y| rayleigh(x).total_cmp(&rayleigh(y)))
    };

    let spec = w.solve(i);
    let mut psi = spec.highest().1.clone();
    let mut mu = f64::NAN;
    let mut stall = 0;
    let mut iterations = 0;
    let mut adjusted = None;
    let mut failed = false;
    for it in 0..GLOBAL_ITERATIONS {
        iterations = it + 1;
        let Some(pt) = adjust(&psi) else {
            failed = true;
            break;
        };
        let cp = c * &pt;
        let den = cp.dot(&w.solve_metric(&cp));
        let num = cp.dot(&w.solve_metric(&(i * &pt)));
        let mu_next = if den > 0.0 { -num / den } else { 0.0 };
        let res = residual(&psi);
        if (mu_next - mu).abs() <= 1e-12 * (1.0 + mu_next.abs()) {
            if res <= RESIDUAL_TOL {
                adjusted = Some(pt);
                mu = mu_next;
                break;
            }
            stall += 1;
            if stall >= 3 {
                failed = true;
                break;
            }
        } else {
            stall = 0;
        }
        mu = mu_next;
        adjusted = Some(pt);
        let spec = w.solve(&(i + c * mu));
        psi = spec
            .vectors
            .iter()
            .max_by(|x, y| rayleigh(x).total_cmp(&rayleigh(y)))
            .expect("nonempty spectrum")
            .clone();
    }
    let looped = if failed {
        None
    } else {
        match adjust(&psi) {
            Some(v) if residual(&v) <= RESIDUAL_TOL => Some(v),
            _ => adjusted.filter(|v| residual(v) <= RESIDUAL_TOL),
        }
    };
    // The loop stops at any stationary point, or not at all. The dual problem over the same
    // pencil reaches the maximum; keep whichever feasible state is higher.
    let dual = dual_maximum(&w, g, i, c).filter(|(v, _)| residual(v) <= RESIDUAL_TOL);
    let best = match (looped, dual) {
        (Some(a), Some((b, mu_b))) => {
            if rayleigh(&b) > rayleigh(&a) {
                Some((b, mu_b))
            } else {
                Some((a, mu))
            }
        }
        (Some(a), None) => Some((a, mu)),
        (None, d) => d,
    };
    match best {
        Some((v, mu)) => Ok(finish(v, mu, iterations, g, i, psi0)),
        None => Ok(ConstrainedSolution {
            iterations,
            ..ConstrainedSolution::none(n)
        }),
    }
}

/// `min_μ λ_max(I + μC, G)`: the top eigenvalue is convex in `μ` with slope `⟨ψ|C|ψ⟩`, so the
/// slope changes sign at the constrained maximum. Bisection on the slope, then the exact
/// two-state solution in the span of the bracketing eigenvectors.
fn dual_maximum(
    w: &Whitener,
    g: &DMatrix<f64>,
    i: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Option<(DVector<f64>, f64)> {
    let top = |mu: f64| -> (f64, DVector<f64>) {
        let spec = w.solve(&(i + c * mu));
        let v = spec.highest().1.clone();
        (form(&v, c, &v), v)
    };
    let (h0, v0) = top(0.0);
    if h0 == 0.0 {
        return Some((v0, 0.0));
    }
    let dir = -h0.signum();
    let mut step = {
        let ci = c.amax();
        if ci > 0.0 {
            i.amax().max(f64::MIN_POSITIVE) / ci
        } else {
            return None;
        }
    };
    let (mut lo, mut vlo, mut hi, mut vhi) = (0.0, v0.clone(), f64::NAN, v0);
    for _ in 0..200 {
        let mu = dir * step;
        let (h, v) = top(mu);
        if h.signum() != h0.signum() || h == 0.0 {
            hi = mu;
            vhi = v;
            break;
        }
        lo = mu;
        vlo = v;
        step *= 2.0;
    }
    if !hi.is_finite() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let (h, v) = top(mid);
        if h == 0.0 {
            return Some((v, mid));
        }
        if h.signum() == h0.signum() {
            lo = mid;
            vlo = v;
        } else {
            hi = mid;
            vhi = v;
        }
    }
    let mu = 0.5 * (lo + hi);
    two_state_constrained(&vlo, &vhi, g, i, c).map(|v| (v, mu))
}

/// Best `ψ ∈ span{a, b}` with `⟨ψ|C|ψ⟩ = 0`, normalized in `G`.
fn two_state_constrained(
    a: &DVector<f64>,
    b: &DVector<f64>,
    g: &DMatrix<f64>,
    i: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Option<DVector<f64>> {
    let na = form(a, g, a).sqrt();
    let e1 = a / na;
    let b_perp = b - &e1 * form(&e1, g, b);
    let nb = form(&b_perp, g, &b_perp);
    let ca = form(&e1, c, &e1);
    if !(nb > 1e-20) {
        return (ca.abs() <= RESIDUAL_TOL * c.amax()).then_some(e1);
    }
    let e2 = b_perp / nb.sqrt();
    let (c11, c12, c22) = (ca, form(&e1, c, &e2), form(&e2, c, &e2));
    // cosθ e1 + sinθ e2 with t = tanθ: c22 t² + 2 c12 t + c11 = 0.
    let mut cands = Vec::new();
    if c22.abs() <= 1e-300 {
        if c12 != 0.0 {
            cands.push(e1.clone() * 1.0 + &e2 * (-c11 / (2.0 * c12)));
        }
        if c11.abs() <= 1e-300 {
            cands.push(e2.clone());
        }
    } else {
        let disc = c12 * c12 - c11 * c22;
        if disc < 0.0 {
            return None;
        }
        let q = -(c12 + c12.signum() * disc.sqrt());
        let q = if q == 0.0 { -disc.sqrt() } else { q };
        for t in [q / c22, c11 / q] {
            if t.is_finite() {
                cands.push(&e1 + &e2 * t);
            }
        }
    }
    cands
        .into_iter()
        .map(|v| {
            let nv = form(&v, g, &v).sqrt();
            v / nv
        })
        .max_by(|x, y| form(x, i, x).total_cmp(&form(y, i, y)))
}

fn finish(
    psi: DVector<f64>,
    mu: f64,
    iterations: usize,
    g: &DMatrix<f64>,
    i: &DMatrix<f64>,
    psi0: Option<&DVector<f64>>,
) -> ConstrainedSolution {
    let i_m = form(&psi, i, &psi);
    let wr0 = psi0.map_or(f64::NAN, |p0| {
        let c = form(&psi, g, p0);
        c * c
    });
    ConstrainedSolution {
        psi,
        mu,
        i_m,
        wr0,
        exists: true,
        iterations,
        y: None,
        n_roots: 0,
        degenerate: false,
    }
}

/// Grid size of the fallback search when the constraint polynomial vanishes identically.
const FALLBACK_GRID: usize = 512;

/// Maximizes `I` over localized states `ψ_y` whose `y` solves `⟨ψ_y|C|ψ_y⟩ = 0`.
pub fn constrained_localized(
    basis: &Basis,
    g: &DMatrix<f64>,
    i: &DMatrix<f64>,
    c: &DMatrix<f64>,
    psi0: Option<&DVector<f64>>,
) -> Result<ConstrainedSolution> {
    let n = g.nrows();
    let w = Whitener::new(g)?;
    let d = w.n_eff();
    let mut ginv = DMatrix::zeros(n, n);
    for k in 0..d {
        let col = w.solve_metric(&DVector::from_fn(n, |j, _| if j == k { 1.0 } else { 0.0 }));
        ginv.set_column(k, &col);
    }
    let m = &ginv * c * &ginv;
    let mut poly = vec![0.0; 2 * n - 1];
    for j in 0..n {
        for k in 0..n {
            let v = m[(j, k)];
            if v == 0.0 {
                continue;
            }
            let (lo, cf) = basis.product(j, k);
            for (o, x) in poly[lo..lo + cf.len()].iter_mut().zip(cf) {
                *o += v * x;
            }
        }
    }
    let scale = ginv.amax().powi(2) * c.amax();
    let pmax = poly.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let (lo, hi) = basis.kind().data_domain();
    let objective = |y: f64| -> Option<(f64, DVector<f64>)> {
        let q = basis.eval_all(y, n);
        let psi = localized_state(&w, &q).ok()?;
        Some((form(&psi, i, &psi), psi))
    };
    let pick = |ys: &[f64]| {
        ys.iter()
            .filter_map(|&y| objective(y).map(|(v, p)| (y, v, p)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
    };

    if pmax <= 1e-12 * scale {
        let span = 4.0 * n as f64;
        let ys: Vec<f64> = (0..FALLBACK_GRID)
            .map(|k| {
                let f = k as f64 / (FALLBACK_GRID - 1) as f64;
                match basis.kind() {
                    crate::basis::BasisKind::ShiftedLegendre => f,
                    kind => kind.abscissa(f * span),
                }
            })
            .collect();
        let Some((y, _, psi)) = pick(&ys) else {
            return Ok(ConstrainedSolution::none(n));
        };
        let mut s = finish(psi, f64::NAN, 0, g, i, psi0);
        s.y = Some(y);
        s.degenerate = true;
        return Ok(s);
    }
    let roots: Vec<f64> = basis
        .find_real_roots(&BasisPoly::new(poly))?
        .into_iter()
        .filter(|&y| y >= lo && y <= hi)
        .collect();
    let n_roots = roots.len();
    match pick(&roots) {
        Some((y, _, psi)) => {
            let mut s = finish(psi, f64::NAN, 0, g, i, psi0);
            s.y = Some(y);
            s.n_roots = n_roots;
            Ok(s)
        }
        None => Ok(ConstrainedSolution {
            n_roots,
            ..ConstrainedSolution::none(n)
        }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EigenselectPencil {
    /// `‖pI‖ψ = λ‖I‖ψ`: eigenstates with a sharp volume-weighted price.
    PiVsI,
    /// `‖V₁‖ψ = λ‖V₀‖ψ`: eigenstates with a sharp aggregated price.
    V1VsV0,
}

/// The eigenvector of the chosen price pencil with maximal `⟨ψ|I|ψ⟩/⟨ψ|ψ⟩`.
pub fn constrained_eigenselect(
    ops: &Operators,
    pencil: EigenselectPencil,
    psi0: Option<&DVector<f64>>,
) -> Result<(ConstrainedSolution, Spectrum)> {
    let (a, b) = match pencil {
        EigenselectPencil::PiVsI => (&ops.pi, &ops.i),
        EigenselectPencil::V1VsV0 => (&ops.v1, &ops.v0),
    };
    let spec = Whitener::new(b)?.solve(a);
    let mut best: Option<(f64, usize)> = None;
    for (k, v) in spec.vectors.iter().enumerate() {
        let nrm = form(v, &ops.g, v);
        if !(nrm > 0.0) {
            continue;
        }
        let q = form(v, &ops.i, v) / nrm;
        let better = match best {
            None => true,
            Some((bq, _)) => q >= bq - 1e-12 * bq.abs().max(f64::MIN_POSITIVE),
        };
        if better {
            best = Some((q.max(best.map_or(q, |b| b.0)), k));
        }
    }
    let Some((_, k)) = best else {
        return Ok((ConstrainedSolution::none(ops.dim()), spec));
    };
    let v = &spec.vectors[k];
    let psi = v / form(v, &ops.g, v).sqrt();
    let mut sol = finish(psi, spec.values[k], 0, &ops.g, &ops.i, psi0);
    sol.mu = spec.values[k] + ops.p_offset;
    Ok((sol, spec))
}
