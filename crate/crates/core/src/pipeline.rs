//! Per-tick indicator engine.

use std::sync::Arc;

use nalgebra::DVector;

use crate::basis::{Basis, MeasureConfig};
use crate::error::{Error, Result};
use crate::flow::{self, FlowSpectrum, Operators};
use crate::moments::{seconds_between, MomentSet, Observable, Tick};
use crate::operators::{form, Whitener};
use crate::scalp::{
    self, FlContext, FlKind, FlVariant, NonlocalStep, ScalpAccumulator, TwoStatePencil,
};

/// Output columns, in file order.
pub const FIELD_NAMES: [&str; 34] = [
    "T",
    "shares",
    "P_last",
    "p_offset",
    "pi_average",
    "pt_average",
    "I.s0",
    "I.sL",
    "I.wL_squared",
    "I.sH",
    "I.wH_squared",
    "I.Gamma0",
    "p_0",
    "pt_0",
    "dpdt_0",
    "p_IH",
    "pt_IH",
    "pV_IH",
    "pT_IH",
    "var1pI_IH",
    "var1pI_IH_00",
    "pmin_0_IH",
    "pmax_0_IH",
    "Skewness_0_IH",
    "ProbabilityCorrelation_0_IH",
    "I.wH",
    "getFlFromRegularMoments",
    "getSumFdt",
    "dIH",
    "dp_IH",
    "F_IH",
    "DIR",
    "aDIR",
    "n_eff",
];

pub const FIELD_COUNT: usize = FIELD_NAMES.len();

/// Column index of a field name.
pub fn field_index(name: &str) -> Result<usize> {
    FIELD_NAMES
        .iter()
        .position(|f| *f == name)
        .ok_or_else(|| Error::UnknownField(name.to_string()))
}

macro_rules! fields {
    ($($name:ident = $idx:expr),* $(,)?) => {
        $(pub const $name: usize = $idx;)*
    };
}

/// Column indices.
pub mod col {
    fields!(
        T = 0,
        SHARES = 1,
        P_LAST = 2,
        P_OFFSET = 3,
        PI_AVERAGE = 4,
        PT_AVERAGE = 5,
        S0 = 6,
        SL = 7,
        WL_SQUARED = 8,
        SH = 9,
        WH_SQUARED = 10,
        GAMMA0 = 11,
        P_0 = 12,
        PT_0 = 13,
        DPDT_0 = 14,
        P_IH = 15,
        PT_IH = 16,
        PV_IH = 17,
        PT_BIG_IH = 18,
        VAR1PI_IH = 19,
        VAR1PI_IH_00 = 20,
        PMIN_0_IH = 21,
        PMAX_0_IH = 22,
        SKEWNESS_0_IH = 23,
        PROBCORR_0_IH = 24,
        WH = 25,
        FL_REGULAR = 26,
        SUM_FDT = 27,
        D_IH = 28,
        DP_IH = 29,
        F_IH = 30,
        DIR = 31,
        ADIR = 32,
        N_EFF = 33,
    );
}

/// One output line.
#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorRecord {
    pub values: [f64; FIELD_COUNT],
}

impl IndicatorRecord {
    fn undefined() -> Self {
        Self {
            values: [f64::NAN; FIELD_COUNT],
        }
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        Ok(self.values[field_index(name)?])
    }

    pub fn time(&self) -> i64 {
        self.values[col::T] as i64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EngineConfig {
    pub measure: MeasureConfig,
    pub variant: FlVariant,
}

/// Intermediate results of the latest tick, kept for inspection.
#[derive(Clone, Debug)]
pub struct TickState {
    pub ops: Operators,
    pub flow: FlowSpectrum,
    pub pencil: Option<TwoStatePencil>,
    pub nonlocal: NonlocalStep,
    pub fdt: f64,
}

/// Folds ticks into moments and emits one record per tick.
pub struct Engine {
    cfg: EngineConfig,
    basis: Arc<Basis>,
    moments: MomentSet,
    acc: ScalpAccumulator,
    metric: Whitener,
    psi0: DVector<f64>,
    last_tick: Option<Tick>,
    state: Option<TickState>,
}

impl Engine {
    pub fn new(cfg: EngineConfig) -> Result<Self> {
        let basis = Arc::new(Basis::new(cfg.measure));
        let g = basis.operator_matrix(basis.j0().as_slice(), basis.n());
        let metric = Whitener::new(&g)?;
        let dim = metric.n_eff();
        let metric = if dim < basis.n() {
            let g = basis.operator_matrix(basis.j0().as_slice(), dim);
            Whitener::new(&g)?
        } else {
            metric
        };
        let psi0 = flow::psi_now(&metric, &basis)?;
        Ok(Self {
            cfg,
            moments: MomentSet::new(basis.clone()),
            acc: ScalpAccumulator::new(basis.clone()),
            basis,
            metric,
            psi0,
            last_tick: None,
            state: None,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn moments(&self) -> &MomentSet {
        &self.moments
    }

    pub fn accumulator(&self) -> &ScalpAccumulator {
        &self.acc
    }

    /// Dimension kept by the conditioning guard on the Gram matrix.
    pub fn n_eff(&self) -> usize {
        self.metric.n_eff()
    }

    pub fn metric(&self) -> &Whitener {
        &self.metric
    }

    /// The "now" state; it depends on the measure only.
    pub fn psi0(&self) -> &DVector<f64> {
        &self.psi0
    }

    /// Results of the latest tick, `None` when it was quarantined.
    pub fn state(&self) -> Option<&TickState> {
        self.state.as_ref()
    }

    /// Processes one tick. Invalid ticks and backward time are errors; numerical failures
    /// yield a record of undefined values and leave the moments intact.
    pub fn step(&mut self, tick: Tick) -> Result<IndicatorRecord> {
        tick.validate()?;
        let shift = self.moments.shift_to(tick.t)?;
        self.moments.ingest_with(&shift, tick)?;
        let (dp, dt) = match self.last_tick {
            Some(prev) => (tick.p - prev.p, seconds_between(prev.t, tick.t)),
            None => (0.0, 0.0),
        };
        self.last_tick = Some(tick);

        let mut rec = IndicatorRecord::undefined();
        let v = &mut rec.values;
        v[col::T] = tick.t as f64;
        v[col::SHARES] = tick.v;
        v[col::P_LAST] = tick.p;
        let off = self.moments.p_offset();
        v[col::P_OFFSET] = off;
        v[col::N_EFF] = self.n_eff() as f64;

        let state = self.compute(tick, dp, dt, &mut rec);
        let fdt = state.as_ref().map_or(0.0, |s| s.fdt);
        self.acc.accumulate_with(&shift, tick.t, fdt)?;
        let v = &mut rec.values;
        v[col::SUM_FDT] = self.acc.scalp_price();
        if let Some(st) = &state {
            let psi = &st.flow.psi_ih;
            let (dir, adir) = self.acc.directional(psi, tick.t)?;
            v[col::F_IH] = self.acc.local_attribute(psi, tick.t)?;
            v[col::DIR] = dir;
            v[col::ADIR] = adir;
            v[col::D_IH] = st.nonlocal.d_ih;
            v[col::DP_IH] = st.nonlocal.dp_ih;
            self.acc.remember(st.flow.lambda_ih, v[col::P_IH]);
        }
        self.state = state;
        Ok(rec)
    }

    fn compute(
        &self,
        tick: Tick,
        dp: f64,
        dt: f64,
        rec: &mut IndicatorRecord,
    ) -> Option<TickState> {
        let basis = self.basis.clone();
        let ms = &self.moments;
        let ops = Operators::build(ms, self.n_eff());
        let finite = |m: &nalgebra::DMatrix<f64>| m.iter().all(|x| x.is_finite());
        if ![&ops.i, &ops.pi, &ops.p2i, &ops.p3i, &ops.p, &ops.dpdt]
            .iter()
            .all(|m| finite(m))
        {
            return None;
        }
        let psi0 = &self.psi0;
        let flow = flow::flow_summary(&self.metric, &basis, &ops, psi0);
        let sm = flow.summary;
        let off = ops.p_offset;
        let v = &mut rec.values;

        let i0 = ms.moments(Observable::Flow(0))[0];
        v[col::PI_AVERAGE] = if i0 > 0.0 {
            ms.moments(Observable::Flow(1))[0] / i0 + off
        } else {
            f64::NAN
        };
        v[col::PT_AVERAGE] = ms.moments(Observable::Price(1))[0] / basis.j0()[0] + off;
        v[col::S0] = sm.s0;
        v[col::SL] = sm.s_l;
        v[col::WL_SQUARED] = sm.w_l_squared();
        v[col::SH] = sm.s_h;
        v[col::WH_SQUARED] = scalp::scalp_function(&sm);
        v[col::GAMMA0] = sm.gamma0;
        v[col::WH] = sm.w_h;

        let p0 = flow::state_prices(psi0, &ops);
        v[col::P_0] = p0.p_v;
        v[col::PT_0] = p0.p_t;
        v[col::DPDT_0] = form(psi0, &ops.dpdt, psi0);
        let pih = flow::state_prices(&flow.psi_ih, &ops);
        v[col::P_IH] = pih.p_v;
        v[col::PT_IH] = pih.p_t;
        v[col::PV_IH] = pih.p_big_v;
        v[col::PT_BIG_IH] = pih.p_big_t;

        let pencil = scalp::two_state_pencil(&basis, psi0, &flow.psi_ih, &ops);
        if let Some(pen) = &pencil {
            v[col::PMIN_0_IH] = pen.lambda[0] + off;
            v[col::PMAX_0_IH] = pen.lambda[1] + off;
            v[col::SKEWNESS_0_IH] = pen.skewness_at(ops.p_last);
            v[col::PROBCORR_0_IH] = pen.probability_correlation();
        }

        let nonlocal = scalp::nonlocal_series(self.acc.previous(), (flow.lambda_ih, pih.p_v));
        let ctx = FlContext {
            basis: &basis,
            ops: &ops,
            psi0,
            psi_ih: &flow.psi_ih,
            summary: &sm,
            pencil: pencil.as_ref(),
            dp,
            dt,
            volume: tick.v,
            nonlocal,
        };
        let regular = |kind| scalp::compute_fl(FlVariant { kind, z: None }, &ctx).regular;
        v[col::VAR1PI_IH] = regular(FlKind::VarPiIh);
        v[col::VAR1PI_IH_00] = regular(FlKind::VarPiIh00);
        let fl = scalp::compute_fl(self.cfg.variant, &ctx);
        v[col::FL_REGULAR] = fl.regular;

        Some(TickState {
            ops,
            flow,
            pencil,
            nonlocal,
            fdt: fl.fdt,
        })
    }
}

/// Runs `ticks` through a fresh engine.
pub fn process_stream<I>(cfg: EngineConfig, ticks: I) -> Result<Vec<IndicatorRecord>>
where
    I: IntoIterator<Item = Tick>,
{
    let mut engine = Engine::new(cfg)?;
    ticks.into_iter().map(|t| engine.step(t)).collect()
}
