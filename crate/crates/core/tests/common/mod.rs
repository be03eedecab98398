//! Synthetic streams and independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scalp_core::basis::{BasisKind, MeasureConfig};
use scalp_core::moments::Tick;
use scalp_core::pipeline::EngineConfig;
use scalp_core::scalp::{FlKind, FlVariant};

pub const OPEN_NS: i64 = 34_200_000_000_000;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn engine_config(kind: BasisKind, n: usize, tau: f64, fl: FlKind) -> EngineConfig {
    EngineConfig {
        measure: MeasureConfig::new(kind, n, tau).unwrap(),
        variant: FlVariant::new(fl, None).unwrap(),
    }
}

fn exp_gap(r: &mut ChaCha8Rng, mean_s: f64) -> i64 {
    let u: f64 = r.gen_range(f64::EPSILON..1.0);
    ((-u.ln() * mean_s * 1e9) as i64).max(1)
}

fn step_price(r: &mut ChaCha8Rng, p: f64, move_prob: f64) -> f64 {
    if r.gen_bool(move_prob) {
        let d = if r.gen_bool(0.5) { 0.01 } else { -0.01 };
        ((p + d) * 100.0).round() / 100.0
    } else {
        p
    }
}

/// Poisson trades whose rate switches between random regimes every few hundred ticks.
pub fn random_stream(seed: u64, len: usize) -> Vec<Tick> {
    let mut r = rng(seed);
    let mut t = OPEN_NS + r.gen_range(0..1_000_000_000);
    let mut p = 20.0 + r.gen_range(0.0..100.0f64);
    p = (p * 100.0).round() / 100.0;
    let mut mean = 1.0;
    let mut out = Vec::with_capacity(len);
    for k in 0..len {
        if k % 250 == 0 {
            mean = 10f64.powf(r.gen_range(-2.0..0.5));
        }
        t += exp_gap(&mut r, mean);
        p = step_price(&mut r, p, 0.3);
        let v = 100.0 * r.gen_range(1..=10) as f64;
        out.push(Tick::new(t, p, v));
    }
    out
}

/// Trades every `dt_s` seconds at a fixed price and size.
pub fn constant_stream(len: usize, dt_s: f64, p: f64, v: f64) -> Vec<Tick> {
    (0..len)
        .map(|k| Tick::new(OPEN_NS + (k as f64 * dt_s * 1e9) as i64, p, v))
        .collect()
}

/// Steady trading at `base_s` mean spacing with a burst of `factor`× the rate over the last
/// `burst_s` seconds.
pub fn burst_at_now(seed: u64, base_s: f64, span_s: f64, burst_s: f64, factor: f64) -> Vec<Tick> {
    let mut r = rng(seed);
    let mut t = OPEN_NS;
    let end = OPEN_NS + (span_s * 1e9) as i64;
    let start_burst = end - (burst_s * 1e9) as i64;
    let mut p = 50.0;
    let mut out = Vec::new();
    while t < end {
        let mean = if t >= start_burst {
            base_s / factor
        } else {
            base_s
        };
        t += exp_gap(&mut r, mean);
        p = step_price(&mut r, p, 0.3);
        out.push(Tick::new(t, p, 100.0));
    }
    out
}

/// A burst of `factor`× the rate between `burst_from_s` and `burst_to_s`, steady otherwise.
pub fn burst_between(
    seed: u64,
    base_s: f64,
    span_s: f64,
    burst_from_s: f64,
    burst_to_s: f64,
    factor: f64,
) -> Vec<Tick> {
    let mut r = rng(seed);
    let mut t = OPEN_NS;
    let end = OPEN_NS + (span_s * 1e9) as i64;
    let (b0, b1) = (
        OPEN_NS + (burst_from_s * 1e9) as i64,
        OPEN_NS + (burst_to_s * 1e9) as i64,
    );
    let mut p = 50.0;
    let mut out = Vec::new();
    while t < end {
        let mean = if t >= b0 && t < b1 {
            base_s / factor
        } else {
            base_s
        };
        t += exp_gap(&mut r, mean);
        p = step_price(&mut r, p, 0.3);
        out.push(Tick::new(t, p, 100.0));
    }
    out
}

/// Quiet half then bursty half. Quiet: one trade per `quiet_s` on average at a fixed size.
/// Bursty: the same background with bursts of `factor`× the rate lasting `burst_s` every
/// `period_s`; prices move more often inside bursts. Returns the ticks and, per tick, whether
/// it lies in the quiet half, inside a burst, or neither.
pub fn two_regime(
    seed: u64,
    half_s: f64,
    quiet_s: f64,
    period_s: f64,
    burst_s: f64,
    factor: f64,
) -> (Vec<Tick>, Vec<Regime>) {
    let mut r = rng(seed);
    let mut t = OPEN_NS;
    let half = (half_s * 1e9) as i64;
    let mut p = 40.0;
    let mut ticks = Vec::new();
    let mut tags = Vec::new();
    while t < OPEN_NS + 2 * half {
        let since = t - OPEN_NS;
        let (mean, tag, mv) = if since < half {
            (quiet_s, Regime::Quiet, 0.3)
        } else {
            let phase = ((since - half) as f64 * 1e-9) % period_s;
            if phase < burst_s {
                (quiet_s / factor, Regime::Burst, 0.5)
            } else {
                (quiet_s, Regime::Between, 0.3)
            }
        };
        t += exp_gap(&mut r, mean);
        p = step_price(&mut r, p, mv);
        ticks.push(Tick::new(t, p, 100.0));
        tags.push(tag);
    }
    (ticks, tags)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    Quiet,
    Burst,
    Between,
}

/// Mirrors prices about the first one.
pub fn mirrored(ticks: &[Tick]) -> Vec<Tick> {
    let p0 = ticks[0].p;
    ticks
        .iter()
        .map(|t| Tick::new(t.t, 2.0 * p0 - t.p, t.v))
        .collect()
}

// ---------------------------------------------------------------------------------------------
// Oracles

/// `Q_0(x) .. Q_{m-1}(x)` from the textbook recurrences.
pub fn q_values(kind: BasisKind, x: f64, m: usize) -> Vec<f64> {
    let mut q = vec![0.0; m];
    match kind {
        BasisKind::ShiftedLegendre => {
            let y = 2.0 * x - 1.0;
            q[0] = 1.0;
            if m > 1 {
                q[1] = y;
            }
            for k in 1..m.saturating_sub(1) {
                let kf = k as f64;
                q[k + 1] = ((2.0 * kf + 1.0) * y * q[k] - kf * q[k - 1]) / (kf + 1.0);
            }
        }
        BasisKind::Laguerre => {
            q[0] = 1.0;
            if m > 1 {
                q[1] = 1.0 - x;
            }
            for k in 1..m.saturating_sub(1) {
                let kf = k as f64;
                q[k + 1] = ((2.0 * kf + 1.0 - x) * q[k] - kf * q[k - 1]) / (kf + 1.0);
            }
        }
        BasisKind::Monomials => {
            let mut v = 1.0;
            for slot in q.iter_mut() {
                *slot = v;
                v *= x;
            }
        }
    }
    q
}

/// Abscissa of a point `u = (t_now - t)/τ` in the past.
pub fn abscissa(kind: BasisKind, u: f64) -> f64 {
    match kind {
        BasisKind::ShiftedLegendre => (-u).exp(),
        BasisKind::Laguerre => u,
        BasisKind::Monomials => -u,
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; k];
    let mut ws = vec![0.0; k];
    for i in 0..k {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=k {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = k as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        xs[i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

/// Moments computed from scratch at the last tick's time.
#[derive(Clone, Debug)]
pub struct DirectMoments {
    pub one: Vec<f64>,
    pub price: [Vec<f64>; 3],
    pub flow: [Vec<f64>; 4],
    pub dp: Vec<f64>,
    pub v0: Vec<f64>,
    pub v1: Vec<f64>,
    pub t0: Vec<f64>,
    pub t1: Vec<f64>,
}

/// Piecewise Gauss-Legendre over the step price path for the time-weighted families, direct
/// sums for the point masses.
pub fn direct_moments(kind: BasisKind, n: usize, tau: f64, ticks: &[Tick]) -> DirectMoments {
    let m = 2 * n - 1;
    let now = ticks.last().unwrap().t;
    let p0 = ticks[0].p;
    let u_of = |t: i64| (now - t) as f64 * 1e-9 / tau;
    let (gx, gw) = gauss_legendre(16);
    let mut d = DirectMoments {
        one: vec![0.0; m],
        price: std::array::from_fn(|_| vec![0.0; m]),
        flow: std::array::from_fn(|_| vec![0.0; m]),
        dp: vec![0.0; m],
        v0: vec![0.0; m],
        v1: vec![0.0; m],
        t0: vec![0.0; m],
        t1: vec![0.0; m],
    };
    // Suffix sums: volume and capital traded strictly after each tick.
    let len = ticks.len();
    let mut vol_after = vec![0.0; len + 1];
    let mut cap_after = vec![0.0; len + 1];
    for l in (0..len).rev() {
        vol_after[l] = vol_after[l + 1] + ticks[l].v;
        cap_after[l] = cap_after[l + 1] + ticks[l].v * (ticks[l].p - p0);
    }
    // Time-weighted price integral from t to now, in seconds·price.
    let add_interval =
        |d: &mut DirectMoments, ua: f64, ub: f64, pr: f64, va: f64, ca: f64, t1_at_ua: f64| {
            if ub <= ua {
                return;
            }
            let pieces = ((ub - ua) / 0.02).ceil().max(1.0) as usize;
            let h = (ub - ua) / pieces as f64;
            for k in 0..pieces {
                let a = ua + k as f64 * h;
                for (x, w) in gx.iter().zip(&gw) {
                    let u = a + 0.5 * h * (x + 1.0);
                    let wt = 0.5 * h * w * tau * (-u).exp();
                    let q = q_values(kind, abscissa(kind, u), m);
                    let t0 = u * tau;
                    let t1 = t1_at_ua + pr * (u - ua) * tau;
                    for j in 0..m {
                        let f = wt * q[j];
                        d.one[j] += f;
                        d.price[0][j] += f * pr;
                        d.price[1][j] += f * pr * pr;
                        d.price[2][j] += f * pr * pr * pr;
                        d.v0[j] += f * va;
                        d.v1[j] += f * ca;
                        d.t0[j] += f * t0;
                        d.t1[j] += f * t1;
                    }
                }
            }
        };
    // Walk intervals backwards from now; `t1_acc` is ∫ p dt from the interval's right end.
    let mut t1_acc = 0.0;
    for l in (0..len).rev() {
        let ua = u_of(if l + 1 < len { ticks[l + 1].t } else { now });
        let ub = u_of(ticks[l].t);
        let pr = ticks[l].p - p0;
        add_interval(
            &mut d,
            ua,
            ub,
            pr,
            vol_after[l + 1],
            cap_after[l + 1],
            t1_acc,
        );
        t1_acc += pr * (ub - ua) * tau;
    }
    let u_first = u_of(ticks[0].t);
    let u_max = match kind {
        BasisKind::ShiftedLegendre => u_first + 60.0,
        _ => u_first + 200.0,
    };
    add_interval(
        &mut d,
        u_first,
        u_max,
        0.0,
        vol_after[0],
        cap_after[0],
        t1_acc,
    );

    for (l, tk) in ticks.iter().enumerate() {
        let u = u_of(tk.t);
        let w = (-u).exp();
        let q = q_values(kind, abscissa(kind, u), m);
        let pr = tk.p - p0;
        let dp = if l > 0 { tk.p - ticks[l - 1].p } else { 0.0 };
        for j in 0..m {
            let mut f = tk.v * w * q[j];
            for s in 0..4 {
                d.flow[s][j] += f;
                f *= pr;
            }
            d.dp[j] += dp * w * q[j];
        }
    }
    d
}

/// `max|a - b| / max|b|`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    let diff = a
        .iter()
        .zip(b)
        .fold(0.0f64, |s, (x, y)| s.max((x - y).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Cholesky factor `L` of an SPD matrix stored row-major.
pub fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let norm: f64 = a.iter().flatten().map(|x| x * x).sum();
        if off <= 1e-30 * norm {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Generalized eigenvalues of `(A, B)` through `L⁻¹ A L⁻ᵀ` and Jacobi.
pub fn gev_oracle(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let l = cholesky(b).expect("SPD metric");
    // Solve L X = A, then L Y = Xᵀ, so Y = L⁻¹ A L⁻ᵀ.
    let fwd = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        let mut x = vec![vec![0.0; n]; n];
        for c in 0..n {
            for i in 0..n {
                let mut s = m[i][c];
                for k in 0..i {
                    s -= l[i][k] * x[k][c];
                }
                x[i][c] = s / l[i][i];
            }
        }
        x
    };
    let x = fwd(&a.to_vec());
    let xt: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| x[j][i]).collect()).collect();
    let y = fwd(&xt);
    let sym: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (y[i][j] + y[j][i])).collect())
        .collect();
    jacobi_eigenvalues(sym)
}

/// Like [`two_regime`], but the quiet half relaxes after the open: its trade rate decays as
/// `exp(-t/decay_s)` from `1/quiet_s`, and the bursty half trades on the final quiet rate.
pub fn relaxing_two_regime(
    seed: u64,
    half_s: f64,
    quiet_s: f64,
    decay_s: f64,
    period_s: f64,
    burst_s: f64,
    factor: f64,
) -> (Vec<Tick>, Vec<Regime>) {
    let mut r = rng(seed);
    let mut t = OPEN_NS;
    let half = (half_s * 1e9) as i64;
    let floor_s = quiet_s * (half_s / decay_s).exp();
    let mut p = 40.0;
    let mut ticks = Vec::new();
    let mut tags = Vec::new();
    while t < OPEN_NS + 2 * half {
        let since = t - OPEN_NS;
        let (mean, tag, mv) = if since < half {
            (
                quiet_s * (since as f64 * 1e-9 / decay_s).exp(),
                Regime::Quiet,
                0.3,
            )
        } else {
            let phase = ((since - half) as f64 * 1e-9) % period_s;
            if phase < burst_s {
                (floor_s / factor, Regime::Burst, 0.5)
            } else {
                (floor_s, Regime::Between, 0.3)
            }
        };
        t += exp_gap(&mut r, mean);
        p = step_price(&mut r, p, mv);
        ticks.push(Tick::new(t, p, 100.0));
        tags.push(tag);
    }
    (ticks, tags)
}

/// Eigenpairs of a symmetric matrix by cyclic Jacobi; values ascending, vectors as rows.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let norm: f64 = a.iter().flatten().map(|x| x * x).sum();
        if off <= 1e-30 * norm {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (x, y) = (row[p], row[q]);
                    row[p] = c * x - s * y;
                    row[q] = s * x + c * y;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&x, &y| a[x][x].total_cmp(&a[y][y]));
    let values = idx.iter().map(|&k| a[k][k]).collect();
    let vectors = idx
        .iter()
        .map(|&k| (0..n).map(|i| v[i][k]).collect())
        .collect();
    (values, vectors)
}

/// `L⁻¹ A L⁻ᵀ` for the Cholesky factor `L` of `b`.
pub fn whiten(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let l = cholesky(b).expect("SPD metric");
    let fwd = |m: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let mut x = vec![vec![0.0; n]; n];
        for c in 0..n {
            for i in 0..n {
                let mut s = m[i][c];
                for k in 0..i {
                    s -= l[i][k] * x[k][c];
                }
                x[i][c] = s / l[i][i];
            }
        }
        x
    };
    let x = fwd(a);
    let xt: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| x[j][i]).collect()).collect();
    let y = fwd(&xt);
    (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (y[i][j] + y[j][i])).collect())
        .collect()
}

fn sphere_point(k: usize, ang: &[f64]) -> Vec<f64> {
    match k {
        1 => vec![1.0],
        2 => vec![ang[0].cos(), ang[0].sin()],
        3 => vec![
            ang[0].sin() * ang[1].cos(),
            ang[0].sin() * ang[1].sin(),
            ang[0].cos(),
        ],
        _ => unreachable!("sphere of dimension {k}"),
    }
}

/// Maximum of `⟨ψ|I|ψ⟩/⟨ψ|G|ψ⟩` over `⟨ψ|C|ψ⟩ = 0` for `n = 4`, by a grid over the
/// two-dimensional constraint manifold and pattern-search refinement. `None` when `C` is
/// semidefinite in the metric.
pub fn constrained_brute_force(g: &[Vec<f64>], i: &[Vec<f64>], c: &[Vec<f64>]) -> Option<f64> {
    let n = g.len();
    assert_eq!(n, 4);
    let cw = whiten(c, g);
    let iw = whiten(i, g);
    let (lam, vecs) = jacobi_eigen(cw);
    let scale = lam.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    let pos: Vec<usize> = (0..n).filter(|&k| lam[k] > 1e-12 * scale).collect();
    let neg: Vec<usize> = (0..n).filter(|&k| lam[k] < -1e-12 * scale).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    assert_eq!(pos.len() + neg.len(), n, "singular constraint");
    let (kp, kn) = (pos.len(), neg.len());
    let objective = |ang: &[f64; 2]| -> f64 {
        let (ap, an) = match (kp, kn) {
            (1, 3) => (&ang[..0], &ang[..]),
            (3, 1) => (&ang[..], &ang[..0]),
            _ => (&ang[..1], &ang[1..]),
        };
        let s = sphere_point(kp, ap);
        let t = sphere_point(kn, an);
        let mut phi = vec![0.0; n];
        for (j, &k) in pos.iter().enumerate() {
            for r in 0..n {
                phi[r] += s[j] * vecs[k][r] / lam[k].sqrt();
            }
        }
        for (j, &k) in neg.iter().enumerate() {
            for r in 0..n {
                phi[r] += t[j] * vecs[k][r] / (-lam[k]).sqrt();
            }
        }
        let num: f64 = (0..n)
            .map(|a| (0..n).map(|b| phi[a] * iw[a][b] * phi[b]).sum::<f64>())
            .sum();
        let den: f64 = phi.iter().map(|x| x * x).sum();
        num / den
    };
    let steps = 360;
    let h = std::f64::consts::PI / steps as f64;
    let mut seeds: Vec<(f64, [f64; 2])> = Vec::new();
    for a in 0..2 * steps {
        for b in 0..2 * steps {
            let ang = [a as f64 * h, b as f64 * h];
            seeds.push((objective(&ang), ang));
        }
    }
    seeds.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut best = f64::NEG_INFINITY;
    for &(mut f, mut ang) in seeds.iter().take(8) {
        let mut step = h;
        while step > 1e-12 {
            let mut moved = false;
            for d in [[step, 0.0], [-step, 0.0], [0.0, step], [0.0, -step]] {
                let cand = [ang[0] + d[0], ang[1] + d[1]];
                let fc = objective(&cand);
                if fc > f {
                    f = fc;
                    ang = cand;
                    moved = true;
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        best = best.max(f);
    }
    Some(best)
}

/// Random symmetric positive definite matrix with eigenvalues in about `[lo, lo + n]`.
pub fn random_spd(r: &mut ChaCha8Rng, n: usize, lo: f64) -> Vec<Vec<f64>> {
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| r.gen_range(-1.0..1.0)).collect())
        .collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let s: f64 = (0..n).map(|k| x[i][k] * x[j][k]).sum();
                    s + if i == j { lo } else { 0.0 }
                })
                .collect()
        })
        .collect()
}

pub fn random_symmetric(r: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let v = r.gen_range(-1.0..1.0);
            a[i][j] = v;
            a[j][i] = v;
        }
    }
    a
}

pub fn to_matrix(a: &[Vec<f64>]) -> nalgebra::DMatrix<f64> {
    let n = a.len();
    nalgebra::DMatrix::from_fn(n, n, |i, j| a[i][j])
}

fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    x
}

fn quad(a: &[f64], m: &[Vec<f64>]) -> f64 {
    (0..a.len())
        .map(|i| (0..a.len()).map(|j| a[i] * m[i][j] * a[j]).sum::<f64>())
        .sum()
}

/// Largest `⟨ψ_y|I|ψ_y⟩` over the roots of `y ↦ ⟨ψ_y|C|ψ_y⟩` on `[0, 1]`, for the shifted
/// Legendre localized states `ψ_y ∝ G⁻¹Q(y)`; roots by a fine sign scan and bisection.
pub fn localized_scan_oracle(g: &[Vec<f64>], i: &[Vec<f64>], c: &[Vec<f64>]) -> Option<f64> {
    let n = g.len();
    let l = cholesky(g).expect("SPD metric");
    let state = |y: f64| {
        let q = q_values(BasisKind::ShiftedLegendre, y, n);
        let x = cholesky_solve(&l, &q);
        let nrm = quad(&x, g).sqrt();
        x.into_iter().map(|v| v / nrm).collect::<Vec<f64>>()
    };
    let cval = |y: f64| quad(&state(y), c);
    let steps = 20_000;
    let mut best: Option<f64> = None;
    let mut prev = (0.0, cval(0.0));
    for k in 1..=steps {
        let y = k as f64 / steps as f64;
        let cur = (y, cval(y));
        let root = if cur.1 == 0.0 {
            Some(y)
        } else if prev.1.signum() != cur.1.signum() && prev.1 != 0.0 {
            let (mut a, mut b) = (prev, cur);
            for _ in 0..80 {
                let m = 0.5 * (a.0 + b.0);
                let fm = cval(m);
                if fm.signum() == a.1.signum() {
                    a = (m, fm);
                } else {
                    b = (m, fm);
                }
            }
            Some(0.5 * (a.0 + b.0))
        } else {
            None
        };
        if let Some(r) = root {
            let v = quad(&state(r), i);
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
        prev = cur;
    }
    best
}

pub fn to_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
