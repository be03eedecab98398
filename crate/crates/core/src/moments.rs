//! Streaming generalized moments of a tick stream.
//!
//! Prices form a right-continuous step path (the last traded price holds until the next trade,
//! and the first price extends into the infinite past). Time-weighted moments `⟨Q_m p^s⟩` are the
//! exact integrals of that path against the measure. Execution-flow moments `⟨Q_m p^s I⟩` treat
//! every trade as a point mass of its volume, and `⟨Q_m dp/dt⟩` as a point mass of its price
//! change. Both conventions make the integration-by-parts identities exact, which the aggregated
//! `V`/`T` moments and the directional indicators rely on.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::basis::{AnchorShift, Basis};
use crate::error::{Error, Result};

/// One trade: time in nanoseconds since midnight, execution price, shares traded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tick {
    pub t: i64,
    pub p: f64,
    pub v: f64,
}

impl Tick {
    pub fn new(t: i64, p: f64, v: f64) -> Self {
        Self { t, p, v }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p.is_finite() && self.p > 0.0) {
            return Err(Error::InvalidTick(format!(
                "price {} at t={}",
                self.p, self.t
            )));
        }
        if !(self.v.is_finite() && self.v >= 0.0) {
            return Err(Error::InvalidTick(format!(
                "volume {} at t={}",
                self.v, self.t
            )));
        }
        Ok(())
    }
}

/// Seconds between two nanosecond timestamps.
pub fn seconds_between(from: i64, to: i64) -> f64 {
    (to - from) as f64 * 1e-9
}

/// Observables with a moment vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Observable {
    /// `1`, the time measure; the moments form the Gram matrix.
    One,
    /// `p^s` for `s = 1..=3`, time weighted.
    Price(u8),
    /// `p^s I` for `s = 0..=3`.
    Flow(u8),
    DpDt,
}

/// Aggregated moments obtained by integration by parts.
#[derive(Clone, Debug)]
pub struct AggregatedMoments {
    /// `⟨Q_m V₀⟩`, `V₀(t) = V(t_now) - V(t)`.
    pub v0: Vec<f64>,
    /// `⟨Q_m V₁⟩`, `V₁(t) = ∫_t^{t_now} p dV`.
    pub v1: Vec<f64>,
    /// `⟨Q_m T₀⟩`, `T₀(t) = t_now - t` in seconds.
    pub t0: Vec<f64>,
    /// `⟨Q_m T₁⟩`, `T₁(t) = ∫_t^{t_now} p dt`.
    pub t1: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MomentSet {
    basis: Arc<Basis>,
    anchor: Option<i64>,
    p_offset: f64,
    p_last: f64,
    v_now: f64,
    ticks: usize,
    price: [Vec<f64>; 3],
    flow: [Vec<f64>; 4],
    dp: Vec<f64>,
}

impl MomentSet {
    pub fn new(basis: Arc<Basis>) -> Self {
        let m = basis.m();
        Self {
            basis,
            anchor: None,
            p_offset: f64::NAN,
            p_last: f64::NAN,
            v_now: 0.0,
            ticks: 0,
            price: std::array::from_fn(|_| vec![0.0; m]),
            flow: std::array::from_fn(|_| vec![0.0; m]),
            dp: vec![0.0; m],
        }
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn anchor(&self) -> Option<i64> {
        self.anchor
    }

    pub fn p_offset(&self) -> f64 {
        self.p_offset
    }

    /// Last raw price.
    pub fn p_last(&self) -> f64 {
        self.p_last
    }

    /// Cumulative volume.
    pub fn v_now(&self) -> f64 {
        self.v_now
    }

    pub fn tick_count(&self) -> usize {
        self.ticks
    }

    /// Shift operator that moves this set's anchor to `t`.
    pub fn shift_to(&self, t: i64) -> Result<AnchorShift> {
        match self.anchor {
            Some(anchor) if t < anchor => Err(Error::TimeBackwards { t, anchor }),
            Some(anchor) => Ok(self.basis.anchor_shift(seconds_between(anchor, t))),
            None => Ok(self.basis.anchor_shift(0.0)),
        }
    }

    pub fn ingest(&mut self, tick: Tick) -> Result<()> {
        let shift = self.shift_to(tick.t)?;
        self.ingest_with(&shift, tick)
    }

    /// Ingests `tick` with a shift already built for `tick.t - anchor`.
    pub fn ingest_with(&mut self, shift: &AnchorShift, tick: Tick) -> Result<()> {
        tick.validate()?;
        if let Some(anchor) = self.anchor {
            if tick.t < anchor {
                return Err(Error::TimeBackwards { t: tick.t, anchor });
            }
        }
        let q0 = self.basis.q0().as_slice();
        if self.anchor.is_none() {
            self.p_offset = tick.p;
        } else {
            let held = self.p_last - self.p_offset;
            let interval = shift.interval();
            let mut pw = 1.0;
            for fam in self.price.iter_mut() {
                pw *= held;
                shift.apply(fam);
                for (m, iv) in fam.iter_mut().zip(interval) {
                    *m += pw * iv;
                }
            }
            for fam in self.flow.iter_mut() {
                shift.apply(fam);
            }
            shift.apply(&mut self.dp);
            let dp = tick.p - self.p_last;
            if dp != 0.0 {
                for (m, q) in self.dp.iter_mut().zip(q0) {
                    *m += dp * q;
                }
            }
        }
        let rel = tick.p - self.p_offset;
        let mut w = tick.v;
        for fam in self.flow.iter_mut() {
            if w != 0.0 {
                for (m, q) in fam.iter_mut().zip(q0) {
                    *m += w * q;
                }
            }
            w *= rel;
        }
        self.anchor = Some(tick.t);
        self.p_last = tick.p;
        self.v_now += tick.v;
        self.ticks += 1;
        Ok(())
    }

    /// Moment vector `⟨Q_m f⟩`, `m = 0..2n-1`; prices are relative to `p_offset`.
    pub fn moments(&self, f: Observable) -> &[f64] {
        match f {
            Observable::One => self.basis.j0().as_slice(),
            Observable::Price(s) => {
                assert!((1..=3).contains(&s), "price power {s} not tracked");
                &self.price[s as usize - 1]
            }
            Observable::Flow(s) => {
                assert!(s <= 3, "flow power {s} not tracked");
                &self.flow[s as usize]
            }
            Observable::DpDt => &self.dp,
        }
    }

    /// `⟨Q_m V₀⟩, ⟨Q_m V₁⟩, ⟨Q_m T₀⟩, ⟨Q_m T₁⟩` through `⟨Q_m F⟩ = ⟨J(Q_m) dF/dt⟩`-type
    /// identities; the boundary terms vanish because every aggregate is zero at `t_now`.
    pub fn aggregated(&self) -> AggregatedMoments {
        let j = self.basis.jmat();
        let apply = |v: &[f64]| -> Vec<f64> {
            j.tr_mul(&DVector::from_column_slice(v)).as_slice().to_vec()
        };
        AggregatedMoments {
            v0: apply(&self.flow[0]),
            v1: apply(&self.flow[1]),
            t0: apply(self.basis.j0().as_slice()),
            t1: apply(&self.price[0]),
        }
    }
}

/// Boundary value `I^f` closing the integration by parts that yields `dI/dt` matrix elements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Boundary {
    /// `I^f = λ_IH`, so `⟨ψ_IH|dI/dt|ψ_IH⟩ = 0`.
    LambdaIH,
    /// `I^f = 2⟨ψ₀|I|Dψ₀⟩/ψ₀²(x0)`, so `⟨ψ₀|dI/dt|ψ₀⟩ = 0`.
    ZeroDIPsi0,
    /// `I^f = ⟨ψ₀|I|ψ₀⟩`.
    I0,
    Zero,
}

/// Resolves `I^f`. `lambda_ih` is required for `LambdaIH`, `psi0` for the two `ψ₀` options.
pub fn boundary_value(
    boundary: Boundary,
    basis: &Basis,
    i_matrix: &DMatrix<f64>,
    psi0: Option<&DVector<f64>>,
    lambda_ih: Option<f64>,
) -> Result<f64> {
    let need_psi0 = || psi0.ok_or_else(|| Error::Numeric("boundary needs the now state".into()));
    match boundary {
        Boundary::Zero => Ok(0.0),
        Boundary::LambdaIH => lambda_ih
            .filter(|l| l.is_finite())
            .ok_or_else(|| Error::Numeric("boundary needs a resolved IH eigenvalue".into())),
        Boundary::I0 => {
            let p = need_psi0()?;
            Ok(crate::operators::form(p, i_matrix, p))
        }
        Boundary::ZeroDIPsi0 => {
            let p = need_psi0()?;
            let dim = i_matrix.nrows();
            let d = basis.measure_shift_block(dim);
            let dp = &d * p.rows(0, dim);
            let at: f64 = p.iter().zip(basis.q0().iter()).map(|(a, q)| a * q).sum();
            if at == 0.0 {
                return Err(Error::Numeric("now state vanishes at the anchor".into()));
            }
            Ok(2.0 * crate::operators::form(p, i_matrix, &dp) / (at * at))
        }
    }
}

/// `⟨Q_j|dF/dt|Q_k⟩ = F^f Q_j(x0)Q_k(x0) - ⟨DQ_j|F|Q_k⟩ - ⟨Q_j|F|DQ_k⟩` with the
/// measure-consistent shift, which makes the integration by parts exact.
pub fn didt_operator(basis: &Basis, f: &DMatrix<f64>, f_boundary: f64) -> DMatrix<f64> {
    let dim = f.nrows();
    let d = basis.measure_shift_block(dim);
    let q = basis.q0().rows(0, dim);
    let fd = f * &d;
    let mut out = q * q.transpose() * f_boundary - &fd - fd.transpose();
    out = (&out + out.transpose()) * 0.5;
    out
}
