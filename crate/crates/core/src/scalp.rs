//! Directional attributes `𝓕_l`, the scalp-function, scalp-moments and the indicators read
//! from them.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::basis::{AnchorShift, Basis};
use crate::error::{Error, Result};
use crate::flow::{ExecutionFlowSummary, Operators};
use crate::operators::form;

/// `⟨ψ_IH|ψ₀⟩²`, the scalp-function. A flat spectrum gives 1.
pub fn scalp_function(summary: &ExecutionFlowSummary) -> f64 {
    if summary.flat {
        1.0
    } else {
        summary.w_h_squared()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FlKind {
    SampleDpNoScalp,
    SampleDpScalp,
    Dpdt0Scalp,
    PiPt0Scalp,
    DpdtIhScalp,
    VarPiIh,
    VarPiIhDpi,
    VarPiIh00,
    P0PihScalp,
    SkewnessScalp,
    SkewnessPl2d,
    Probcorr2dScalp,
    NonlocalPih,
}

impl FlKind {
    pub const ALL: [FlKind; 13] = [
        FlKind::SampleDpNoScalp,
        FlKind::SampleDpScalp,
        FlKind::Dpdt0Scalp,
        FlKind::PiPt0Scalp,
        FlKind::DpdtIhScalp,
        FlKind::VarPiIh,
        FlKind::VarPiIhDpi,
        FlKind::VarPiIh00,
        FlKind::P0PihScalp,
        FlKind::SkewnessScalp,
        FlKind::SkewnessPl2d,
        FlKind::Probcorr2dScalp,
        FlKind::NonlocalPih,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FlKind::SampleDpNoScalp => "SAMPLE_DP_NOSCALP",
            FlKind::SampleDpScalp => "SAMPLE_DP_SCALP",
            FlKind::Dpdt0Scalp => "DPDT0_SCALP",
            FlKind::PiPt0Scalp => "PIPT0_SCALP",
            FlKind::DpdtIhScalp => "DPDT_IH_SCALP",
            FlKind::VarPiIh => "VAR_PI_IH",
            FlKind::VarPiIhDpi => "VAR_PI_IH_DPI",
            FlKind::VarPiIh00 => "VAR_PI_IH_00",
            FlKind::P0PihScalp => "P0_PIH_SCALP",
            FlKind::SkewnessScalp => "SKEWNESS_SCALP",
            FlKind::SkewnessPl2d => "SKEWNESS_PL_2D",
            FlKind::Probcorr2dScalp => "PROBCORR_2D_SCALP",
            FlKind::NonlocalPih => "NONLOCAL_PIH",
        }
    }

    /// Accepts the variant names and the historical `F_...` tokens.
    pub fn from_token(s: &str) -> Option<Self> {
        let s = s.trim();
        if let Some(k) = Self::ALL.iter().find(|k| k.name().eq_ignore_ascii_case(s)) {
            return Some(*k);
        }
        Some(match s {
            "F_SAMPLE_DP_NOSCALP" => FlKind::SampleDpNoScalp,
            "F_SAMPLE_DP_SCALP" => FlKind::SampleDpScalp,
            "F_dpdt0_SCALP" => FlKind::Dpdt0Scalp,
            "F_varpIH_0_divI_SCALP" => FlKind::VarPiIh00,
            "F_SKEWNESS_at_Pl_SCALP" => FlKind::SkewnessPl2d,
            "F_PROBABILITYCORRELATION_SCALP" => FlKind::Probcorr2dScalp,
            _ => return None,
        })
    }

    /// Variants built from the last two ticks rather than from the moments.
    pub fn is_tick_difference(self) -> bool {
        matches!(
            self,
            FlKind::SampleDpNoScalp | FlKind::SampleDpScalp | FlKind::NonlocalPih
        )
    }

    pub fn uses_pencil(self) -> bool {
        matches!(self, FlKind::SkewnessPl2d | FlKind::Probcorr2dScalp)
    }

    pub fn default_z(self) -> Option<ZKind> {
        if self.uses_pencil() {
            Some(ZKind::EigenGap)
        } else if self == FlKind::NonlocalPih {
            Some(ZKind::Unit)
        } else {
            None
        }
    }

    pub fn accepts(self, z: ZKind) -> bool {
        if self.uses_pencil() {
            matches!(
                z,
                ZKind::Unit | ZKind::AbsDpDt | ZKind::DvDt | ZKind::EigenGap
            )
        } else if self == FlKind::NonlocalPih {
            matches!(z, ZKind::Unit | ZKind::ScalpDv | ZKind::ScalpDLambda)
        } else {
            false
        }
    }
}

impl fmt::Display for FlKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Weight `z` of the two-state and non-local variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ZKind {
    Unit,
    /// `|p_l - p_{l-1}| / (t_l - t_{l-1})`.
    AbsDpDt,
    /// `(V_l - V_{l-1}) / (t_l - t_{l-1})`.
    DvDt,
    /// `λ_p*^[1] - λ_p*^[0]`.
    EigenGap,
    /// `𝒮 (V_l - V_{l-1})`.
    ScalpDv,
    /// `(t_l - t_{l-1}) 𝒮 (λ_IH(t_l) - λ_IH(t_{l-1}))`.
    ScalpDLambda,
}

impl ZKind {
    pub const ALL: [ZKind; 6] = [
        ZKind::Unit,
        ZKind::AbsDpDt,
        ZKind::DvDt,
        ZKind::EigenGap,
        ZKind::ScalpDv,
        ZKind::ScalpDLambda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ZKind::Unit => "unit",
            ZKind::AbsDpDt => "abs_dp_dt",
            ZKind::DvDt => "dV_dt",
            ZKind::EigenGap => "eigen_gap",
            ZKind::ScalpDv => "scalp_dV",
            ZKind::ScalpDLambda => "scalp_dLambda",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|z| z.name().eq_ignore_ascii_case(s.trim()))
    }
}

/// A directional attribute with its weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FlVariant {
    pub kind: FlKind,
    pub z: Option<ZKind>,
}

impl Default for FlVariant {
    fn default() -> Self {
        Self::new(FlKind::Probcorr2dScalp, None).expect("default variant")
    }
}

impl FlVariant {
    /// `z` defaults per kind; a `z` on a kind without one, or an unsupported pairing, is a
    /// configuration error.
    pub fn new(kind: FlKind, z: Option<ZKind>) -> Result<Self> {
        match (kind.default_z(), z) {
            (None, None) => Ok(Self { kind, z: None }),
            (None, Some(z)) => Err(Error::Config(format!(
                "{kind} takes no z weight, got {}",
                z.name()
            ))),
            (Some(d), None) => Ok(Self { kind, z: Some(d) }),
            (Some(_), Some(z)) if kind.accepts(z) => Ok(Self { kind, z: Some(z) }),
            (Some(_), Some(z)) => Err(Error::Config(format!(
                "z weight {} does not apply to {kind}",
                z.name()
            ))),
        }
    }
}

/// Two-point Gauss quadrature of a positive measure given by `π₀..π₃`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoPointQuadrature {
    pub p_min: f64,
    pub p_max: f64,
    pub w_min: f64,
    pub w_max: f64,
    /// `(2p̄ - p_min - p_max)/(p_min - p_max)`, `p̄ = π₁/π₀`.
    pub gamma: f64,
    pub degenerate: bool,
}

pub fn skewness_quadrature(pi: [f64; 4]) -> Result<TwoPointQuadrature> {
    let [p0, p1, p2, p3] = pi;
    if !(p0 > 0.0 && p0.is_finite()) {
        return Err(Error::Numeric(format!("quadrature weight π₀ = {p0}")));
    }
    let mean = p1 / p0;
    let m2 = p2 / p0 - mean * mean;
    let m3 = p3 / p0 - 3.0 * mean * (p2 / p0) + 2.0 * mean * mean * mean;
    if !(m2 > 1e-13 * (p2 / p0).abs()) || !m3.is_finite() {
        return Ok(TwoPointQuadrature {
            p_min: mean,
            p_max: mean,
            w_min: p0,
            w_max: 0.0,
            gamma: 0.0,
            degenerate: true,
        });
    }
    // Central nodes solve `μ₂y² - μ₃y - μ₂² = 0`.
    let disc = (m3 * m3 + 4.0 * m2 * m2 * m2).sqrt();
    let q = 0.5 * (m3 + m3.signum() * disc);
    let (a, b) = if q == 0.0 {
        let r = m2.sqrt();
        (-r, r)
    } else {
        let y1 = q / m2;
        let y2 = -m2 * m2 / q;
        (y1.min(y2), y1.max(y2))
    };
    let w_min = p0 * b / (b - a);
    let w_max = p0 - w_min;
    Ok(TwoPointQuadrature {
        p_min: mean + a,
        p_max: mean + b,
        w_min,
        w_max,
        gamma: (w_min - w_max) / p0,
        degenerate: false,
    })
}

/// Eigenpairs of the price pencil restricted to `span{ψ₀, ψ_IH}`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoStatePencil {
    /// Ascending, relative to the price offset.
    pub lambda: [f64; 2],
    /// Coefficients of `φ^[k] = α₀ψ₀ + α₁ψ_IH`, `⟨φ|I|φ⟩ = 1`.
    pub alpha: [[f64; 2]; 2],
    pub phi_at_x0: [f64; 2],
}

/// Projection above which `ψ₀` and `ψ_IH` count as the same state.
pub const COLINEAR: f64 = 1.0 - 1e-10;

/// `None` when the two states are colinear or carry no execution flow. `ψ₀` must be the now
/// state: values at `x0` come from `f(x0) = ψ₀(x0)⟨f|ψ₀⟩/⟨ψ₀|ψ₀⟩`.
pub fn two_state_pencil(
    basis: &Basis,
    psi0: &DVector<f64>,
    psi_ih: &DVector<f64>,
    ops: &Operators,
) -> Option<TwoStatePencil> {
    let n0 = form(psi0, &ops.g, psi0);
    let n1 = form(psi_ih, &ops.g, psi_ih);
    if !(n0 > 0.0 && n1 > 0.0) {
        return None;
    }
    // Metric-orthonormal e1 = ψ_IH, e2 ∝ ψ₀ - c·e1. Working in this pair keeps the pencil
    // well conditioned as the two states approach each other.
    let e1 = psi_ih / n1.sqrt();
    let mut c = form(&e1, &ops.g, psi0);
    let mut perp = psi0 - &e1 * c;
    let c2 = form(&e1, &ops.g, &perp);
    perp -= &e1 * c2;
    c += c2;
    let np = form(&perp, &ops.g, &perp);
    if !(np > (1.0 - COLINEAR) * n0) {
        return None;
    }
    let e2 = perp / np.sqrt();
    let states = [&e1, &e2];
    let a = DMatrix::from_fn(2, 2, |j, k| form(states[j], &ops.pi, states[k]));
    let b = DMatrix::from_fn(2, 2, |j, k| form(states[j], &ops.i, states[k]));
    let l00 = b[(0, 0)].sqrt();
    if !(l00 > 0.0) {
        return None;
    }
    let l10 = b[(1, 0)] / l00;
    let d = b[(1, 1)] - l10 * l10;
    if !(d > 1e-14 * b[(1, 1)]) {
        return None;
    }
    let l11 = d.sqrt();
    // C = L⁻¹ A L⁻ᵀ.
    let linv = DMatrix::from_row_slice(2, 2, &[1.0 / l00, 0.0, -l10 / (l00 * l11), 1.0 / l11]);
    let cm = &linv * &a * linv.transpose();
    let (c00, c01, c11) = (cm[(0, 0)], 0.5 * (cm[(0, 1)] + cm[(1, 0)]), cm[(1, 1)]);
    let mid = 0.5 * (c00 + c11);
    let rad = (0.25 * (c00 - c11).powi(2) + c01 * c01).sqrt();
    let lambda = [mid - rad, mid + rad];
    let v0 = basis.eval_poly(psi0.as_slice(), basis.x0());
    let at_x0 = [v0 * c / n0, v0 * np.sqrt() / n0];
    let mut alpha = [[0.0; 2]; 2];
    let mut phi_at_x0 = [0.0; 2];
    for (k, &lam) in lambda.iter().enumerate() {
        // Eigenvector of the 2x2 symmetric C, taken from the better conditioned row.
        let (u0, u1) = if (c00 - lam).abs() >= (c11 - lam).abs() {
            (-c01, c00 - lam)
        } else {
            (c11 - lam, -c01)
        };
        let (u0, u1) = if u0 == 0.0 && u1 == 0.0 {
            if k == 0 {
                (1.0, 0.0)
            } else {
                (0.0, 1.0)
            }
        } else {
            (u0, u1)
        };
        let nrm = (u0 * u0 + u1 * u1).sqrt();
        let u = DVector::from_vec(vec![u0 / nrm, u1 / nrm]);
        let be = linv.tr_mul(&u);
        // φ = β₁e1 + β₂e2 in terms of ψ₀ and ψ_IH.
        let s = be[1] / np.sqrt();
        alpha[k] = [s, (be[0] - s * c) / n1.sqrt()];
        phi_at_x0[k] = be[0] * at_x0[0] + be[1] * at_x0[1];
    }
    Some(TwoStatePencil {
        lambda,
        alpha,
        phi_at_x0,
    })
}

impl TwoStatePencil {
    /// `(2p_l - λ₀ - λ₁)/(λ₀ - λ₁)`, `p_l` relative to the same offset.
    pub fn skewness_at(&self, p_l: f64) -> f64 {
        let [l0, l1] = self.lambda;
        if l0 == l1 {
            return 0.0;
        }
        (2.0 * p_l - l0 - l1) / (l0 - l1)
    }

    /// `(φ₁²(x0) - φ₀²(x0)) / (φ₁²(x0) + φ₀²(x0))`.
    pub fn probability_correlation(&self) -> f64 {
        let a = self.phi_at_x0[0].powi(2);
        let b = self.phi_at_x0[1].powi(2);
        if a + b == 0.0 {
            0.0
        } else {
            (b - a) / (b + a)
        }
    }

    pub fn gap(&self) -> f64 {
        self.lambda[1] - self.lambda[0]
    }
}

/// Changes of the execution-flow maximum between consecutive ticks.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NonlocalStep {
    /// `λ_IH(t_l) - λ_IH(t_{l-1})`.
    pub d_ih: f64,
    /// `p^[IH](t_l) - p^[IH](t_{l-1})`.
    pub dp_ih: f64,
    /// 1 when `λ_IH` did not decrease.
    pub theta: f64,
}

/// `prev` and `cur` are `(λ_IH, p^[IH])`; the first tick has no change.
pub fn nonlocal_series(prev: Option<(f64, f64)>, cur: (f64, f64)) -> NonlocalStep {
    match prev {
        None => NonlocalStep::default(),
        Some((l0, p0)) => NonlocalStep {
            d_ih: cur.0 - l0,
            dp_ih: cur.1 - p0,
            theta: if cur.0 >= l0 { 1.0 } else { 0.0 },
        },
    }
}

/// Everything a variant may read at one tick.
pub struct FlContext<'a> {
    pub basis: &'a Basis,
    pub ops: &'a Operators,
    pub psi0: &'a DVector<f64>,
    pub psi_ih: &'a DVector<f64>,
    pub summary: &'a ExecutionFlowSummary,
    pub pencil: Option<&'a TwoStatePencil>,
    /// `p_l - p_{l-1}`.
    pub dp: f64,
    /// `t_l - t_{l-1}` in seconds.
    pub dt: f64,
    /// Shares traded at `t_l`.
    pub volume: f64,
    pub nonlocal: NonlocalStep,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlValue {
    /// `(t_l - t_{l-1}) 𝓕_l`; non-finite values are replaced by 0.
    pub fdt: f64,
    /// `𝓕_l` for the variants computed from the moments, NaN otherwise.
    pub regular: f64,
    /// The two-state pencil was needed and unavailable.
    pub degenerate: bool,
}

/// `(t_l - t_{l-1}) 𝓕_l` and `𝓕_l` for the chosen variant.
pub fn compute_fl(variant: FlVariant, ctx: &FlContext) -> FlValue {
    let s = scalp_function(ctx.summary);
    let ops = ctx.ops;
    let dim = ops.dim();
    let x0 = ctx.basis.x0();
    let psi0_x0 = ctx.basis.eval_poly(ctx.psi0.as_slice(), x0);
    let lambda_ih = ctx.summary.s_h;
    let price = |psi: &DVector<f64>, num: &DMatrix<f64>, den: &DMatrix<f64>| {
        form(psi, num, psi) / form(psi, den, psi)
    };
    let d_ih = || {
        let d = ctx.basis.measure_shift_block(dim);
        &d * ctx.psi_ih.rows(0, dim)
    };
    let mut degenerate = false;
    // Rate of the moment variants, or the tick-difference `Δt 𝓕`.
    enum Out {
        Rate(f64),
        Step(f64),
    }
    let out = match variant.kind {
        FlKind::SampleDpNoScalp => Out::Step(ctx.dp),
        FlKind::SampleDpScalp => Out::Step(ctx.dp * s),
        FlKind::Dpdt0Scalp => Out::Rate(form(ctx.psi0, &ops.dpdt, ctx.psi0) * s),
        FlKind::PiPt0Scalp => Out::Rate(
            psi0_x0
                * psi0_x0
                * (price(ctx.psi0, &ops.pi, &ops.i) - price(ctx.psi0, &ops.p, &ops.g))
                * s,
        ),
        FlKind::DpdtIhScalp => Out::Rate(form(ctx.psi_ih, &ops.dpdt, ctx.psi_ih) * s),
        FlKind::VarPiIh => {
            let psi = ctx.psi_ih;
            let dpsi = d_ih();
            Out::Rate(
                2.0 * (form(psi, &ops.pi, &dpsi)
                    - form(psi, &ops.pi, psi) * form(psi, &ops.g, &dpsi)),
            )
        }
        FlKind::VarPiIhDpi => {
            let psi = ctx.psi_ih;
            let dpsi = d_ih();
            Out::Rate(
                2.0 * (ops.p_last * lambda_ih * form(psi, &ops.g, &dpsi)
                    - form(psi, &ops.pi, &dpsi)),
            )
        }
        FlKind::VarPiIh00 => {
            let psi = ctx.psi_ih;
            let w = form(psi, &ops.g, ctx.psi0);
            Out::Rate(
                2.0 * (form(psi, &ops.pi, ctx.psi0) - form(psi, &ops.pi, psi) * w) * w / lambda_ih,
            )
        }
        FlKind::P0PihScalp => Out::Rate(
            psi0_x0
                * psi0_x0
                * (price(ctx.psi0, &ops.pi, &ops.i) - price(ctx.psi_ih, &ops.pi, &ops.i))
                * s,
        ),
        FlKind::SkewnessScalp => {
            let p = ctx.psi0;
            let pi = [
                form(p, &ops.i, p),
                form(p, &ops.pi, p),
                form(p, &ops.p2i, p),
                form(p, &ops.p3i, p),
            ];
            match skewness_quadrature(pi) {
                Ok(q) => Out::Rate((q.p_max - q.p_min) * q.gamma * s),
                Err(_) => Out::Rate(f64::NAN),
            }
        }
        FlKind::SkewnessPl2d | FlKind::Probcorr2dScalp => match ctx.pencil {
            None => {
                degenerate = true;
                Out::Rate(0.0)
            }
            Some(pen) => {
                let d = if variant.kind == FlKind::SkewnessPl2d {
                    -pen.skewness_at(ops.p_last)
                } else {
                    pen.probability_correlation()
                };
                match variant.z.unwrap_or(ZKind::EigenGap) {
                    ZKind::EigenGap => Out::Rate(pen.gap() * d * s),
                    ZKind::Unit => Out::Rate(d * s),
                    // Rate weights: the `Δt` of `Δt 𝓕` cancels the rate's denominator.
                    ZKind::AbsDpDt => Out::Step(ctx.dp.abs() * d * s),
                    ZKind::DvDt => Out::Step(ctx.volume * d * s),
                    ZKind::ScalpDv | ZKind::ScalpDLambda => Out::Rate(f64::NAN),
                }
            }
        },
        FlKind::NonlocalPih => {
            let nl = ctx.nonlocal;
            let z = match variant.z.unwrap_or(ZKind::Unit) {
                ZKind::ScalpDv => s * ctx.volume,
                ZKind::ScalpDLambda => ctx.dt * s * nl.d_ih,
                _ => 1.0,
            };
            Out::Step(if nl.theta > 0.0 { z * nl.dp_ih } else { 0.0 })
        }
    };
    let (fdt, regular) = match out {
        Out::Rate(f) => {
            let regular = if variant.kind.is_tick_difference() {
                f64::NAN
            } else {
                f
            };
            (ctx.dt * f, regular)
        }
        Out::Step(fdt) => {
            let regular = if variant.kind.is_tick_difference() || !(ctx.dt > 0.0) {
                f64::NAN
            } else {
                fdt / ctx.dt
            };
            (fdt, regular)
        }
    };
    FlValue {
        fdt: if fdt.is_finite() { fdt } else { 0.0 },
        regular,
        degenerate,
    }
}

/// Scalp-moments `⟨Q_m 𝓕⟩`, `⟨Q_m |𝓕|⟩` and the scalp-price `𝒫 = Σ (t_l - t_{l-1})𝓕_l`.
#[derive(Clone, Debug)]
pub struct ScalpAccumulator {
    basis: Arc<Basis>,
    anchor: Option<i64>,
    f: Vec<f64>,
    abs_f: Vec<f64>,
    sum_fdt: f64,
    prev: Option<(f64, f64)>,
}

impl ScalpAccumulator {
    pub fn new(basis: Arc<Basis>) -> Self {
        let m = basis.m();
        Self {
            basis,
            anchor: None,
            f: vec![0.0; m],
            abs_f: vec![0.0; m],
            sum_fdt: 0.0,
            prev: None,
        }
    }

    pub fn anchor(&self) -> Option<i64> {
        self.anchor
    }

    pub fn scalp_moments(&self) -> &[f64] {
        &self.f
    }

    pub fn abs_scalp_moments(&self) -> &[f64] {
        &self.abs_f
    }

    /// `Σ (t_l - t_{l-1})𝓕_l`, defined up to a constant.
    pub fn scalp_price(&self) -> f64 {
        self.sum_fdt
    }

    /// `(λ_IH, p^[IH])` of the previous tick.
    pub fn previous(&self) -> Option<(f64, f64)> {
        self.prev
    }

    pub fn remember(&mut self, lambda_ih: f64, p_ih: f64) {
        self.prev = Some((lambda_ih, p_ih));
    }

    /// Moves the anchor to `t` and adds `fdt` at the new anchor.
    pub fn accumulate(&mut self, t: i64, fdt: f64) -> Result<()> {
        let shift = match self.anchor {
            Some(a) if t < a => return Err(Error::TimeBackwards { t, anchor: a }),
            Some(a) => self
                .basis
                .anchor_shift(crate::moments::seconds_between(a, t)),
            None => self.basis.anchor_shift(0.0),
        };
        self.accumulate_with(&shift, t, fdt)
    }

    /// Same as [`accumulate`](Self::accumulate) with a shift built for `t - anchor`.
    pub fn accumulate_with(&mut self, shift: &AnchorShift, t: i64, fdt: f64) -> Result<()> {
        if let Some(a) = self.anchor {
            if t < a {
                return Err(Error::TimeBackwards { t, anchor: a });
            }
        }
        shift.apply(&mut self.f);
        shift.apply(&mut self.abs_f);
        let q0 = self.basis.q0().as_slice();
        if fdt != 0.0 {
            let a = fdt.abs();
            for ((m, am), q) in self.f.iter_mut().zip(self.abs_f.iter_mut()).zip(q0) {
                *m += fdt * q;
                *am += a * q;
            }
        }
        self.sum_fdt += fdt;
        self.anchor = Some(t);
        Ok(())
    }

    fn check_anchor(&self, anchor: i64) -> Result<()> {
        match self.anchor {
            Some(a) if a == anchor => Ok(()),
            Some(a) => Err(Error::AnchorMismatch {
                left: a,
                right: anchor,
            }),
            None => Ok(()),
        }
    }

    /// `DIR = 𝒫_last - ⟨ψ|𝒫|ψ⟩` and `aDIR`, its `|𝓕|` counterpart, for a normalized `ψ`
    /// anchored at `anchor`.
    pub fn directional(&self, psi: &DVector<f64>, anchor: i64) -> Result<(f64, f64)> {
        self.check_anchor(anchor)?;
        // `∫ d𝒫(s) ∫_{-∞}^s ψ²ω dt`, the inner integral being `ω J(ψ²)`.
        let sq = self.basis.product_of_states(psi.as_slice(), psi.as_slice());
        let w = self.basis.jmat() * DVector::from_vec(sq);
        let dot = |v: &[f64]| w.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        Ok((dot(&self.f), dot(&self.abs_f)))
    }

    /// `⟨ψ|𝓕|ψ⟩` from the scalp-moments.
    pub fn local_attribute(&self, psi: &DVector<f64>, anchor: i64) -> Result<f64> {
        self.check_anchor(anchor)?;
        let sq = self.basis.product_of_states(psi.as_slice(), psi.as_slice());
        Ok(sq.iter().zip(&self.f).map(|(a, b)| a * b).sum())
    }
}

/// `⟨ψ|(p - p^[ψ])² I|ψ⟩` for a normalized `ψ`: the P&L of buying below the state's
/// volume-weighted price and selling above it. Strategy evaluation stops here; the integral
/// `dS` form is not evaluated.
pub fn pnl_local(psi: &DVector<f64>, ops: &Operators) -> f64 {
    let i = form(psi, &ops.i, psi);
    if !(i > 0.0) {
        return 0.0;
    }
    let pi = form(psi, &ops.pi, psi);
    (form(psi, &ops.p2i, psi) - pi * pi / i).max(0.0)
}
