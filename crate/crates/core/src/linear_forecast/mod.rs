//! AR / MA / ARIMA models: differencing, conditional-sum-of-squares fitting,
//! recursive multi-step forecasting and RMSE grid search over `(p, d, q)`.
//!
//! On the `d`-times differenced series `y` with training mean `mu`, a model
//! predicts
//!
//! ```text
//! y(t) = mu + c + sum_i ar[i] * (y(t-i) - mu) + sum_j ma[j] * e(t-j)
//! ```
//!
//! where `e` are one-step residuals. Pre-sample residuals are taken as zero.

mod linalg;

use std::collections::VecDeque;
use std::io::Write;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::metrics::rmse;

/// Extra observations required beyond `max(p, q) + d`.
pub const MIN_EXTRA_SAMPLES: usize = 10;
const MAX_ITERATIONS: usize = 100;
const REL_TOLERANCE: f64 = 1e-10;

/// `d`-th order pairwise differences; the result is `d` shorter.
pub fn difference(series: &[f64], d: usize) -> Result<Vec<f64>> {
    if series.len() <= d {
        return Err(Error::invalid(format!(
            "cannot difference {} values {d} times",
            series.len()
        )));
    }
    let mut cur = series.to_vec();
    for _ in 0..d {
        cur = cur.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(cur)
}

/// First value of each differencing level `0..d`, which together with the
/// `d`-th differences determine the original series.
pub fn integration_seeds(series: &[f64], d: usize) -> Result<Vec<f64>> {
    let mut seeds = Vec::with_capacity(d);
    for k in 0..d {
        seeds.push(difference(series, k)?[0]);
    }
    if series.len() <= d {
        return Err(Error::invalid("series too short for seeds"));
    }
    Ok(seeds)
}

/// Inverse of [`difference`] given the seeds from [`integration_seeds`].
pub fn integrate(diffs: &[f64], seeds: &[f64]) -> Vec<f64> {
    let mut cur = diffs.to_vec();
    for &seed in seeds.iter().rev() {
        let mut next = Vec::with_capacity(cur.len() + 1);
        next.push(seed);
        let mut acc = seed;
        for v in &cur {
            acc += v;
            next.push(acc);
        }
        cur = next;
    }
    cur
}

/// True when every root of `1 - a1 z - ... - ap z^p` lies outside the unit
/// circle, checked by stepping down through the reflection coefficients.
pub fn is_stationary(ar: &[f64]) -> bool {
    let mut a = ar.to_vec();
    while let Some(&k) = a.last() {
        if !k.is_finite() || k.abs() >= 1.0 {
            return false;
        }
        let m = a.len() - 1;
        let den = 1.0 - k * k;
        a = (0..m).map(|j| (a[j] + k * a[m - 1 - j]) / den).collect();
    }
    true
}

/// True when the MA polynomial `1 + b1 z + ... + bq z^q` has every root
/// outside the unit circle.
pub fn is_invertible(ma: &[f64]) -> bool {
    is_stationary(&ma.iter().map(|b| -b).collect::<Vec<_>>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    /// Conditional sum of squared one-step residuals at the solution.
    pub css: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub constant: f64,
    pub mean: f64,
    /// Most recent last.
    residual_history: VecDeque<f64>,
    /// Last `p` differenced observations, most recent last.
    obs_history: VecDeque<f64>,
    /// Latest value of each differencing level `0..d`.
    anchors: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

impl ArimaModel {
    /// Builds a model from explicit coefficients, primed with `history`
    /// (raw, undifferenced observations).
    pub fn from_parts(
        d: usize,
        ar: Vec<f64>,
        ma: Vec<f64>,
        constant: f64,
        mean: f64,
        history: &[f64],
    ) -> Result<Self> {
        let mut m = Self {
            p: ar.len(),
            d,
            q: ma.len(),
            ar,
            ma,
            constant,
            mean,
            residual_history: VecDeque::new(),
            obs_history: VecDeque::new(),
            anchors: Vec::new(),
            diagnostics: FitDiagnostics {
                converged: true,
                iterations: 0,
                css: 0.0,
                note: Some("constructed".into()),
            },
        };
        if history.len() <= d {
            return Err(Error::invalid("history must be longer than d"));
        }
        m.anchors = (0..d)
            .map(|k| *difference(history, k).expect("len > d").last().expect("non-empty"))
            .collect();
        let y = difference(history, d)?;
        m.obs_history = y.iter().rev().take(m.p).rev().copied().collect();
        m.residual_history = std::iter::repeat_n(0.0, m.q).collect();
        Ok(m)
    }

    /// Stationary AR part and invertible MA part.
    pub fn is_stable(&self) -> bool {
        is_stationary(&self.ar) && is_invertible(&self.ma)
    }

    /// Forecasts every step as the last observation: AR(1) with unit
    /// coefficient and no constant.
    pub fn persistence(last: f64) -> Self {
        Self::from_parts(0, vec![1.0], vec![], 0.0, 0.0, &[last]).expect("one observation")
    }

    fn one_step(&self, obs: &VecDeque<f64>, res: &VecDeque<f64>) -> f64 {
        let mut v = self.mean + self.constant;
        for (i, a) in self.ar.iter().enumerate() {
            if let Some(y) = obs.get(obs.len().wrapping_sub(1 + i)) {
                v += a * (y - self.mean);
            }
        }
        for (j, b) in self.ma.iter().enumerate() {
            if let Some(e) = res.get(res.len().wrapping_sub(1 + j)) {
                v += b * e;
            }
        }
        v
    }

    /// Recursive forecast with future residuals set to zero, re-integrated
    /// `d` times.
    pub fn forecast(&self, horizon: usize) -> Vec<f64> {
        let mut obs = self.obs_history.clone();
        let mut res = self.residual_history.clone();
        let mut anchors = self.anchors.clone();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let w = self.one_step(&obs, &res);
            push_bounded(&mut obs, w, self.p);
            push_bounded(&mut res, 0.0, self.q);
            let mut v = w;
            for k in (0..self.d).rev() {
                v += anchors[k];
                anchors[k] = v;
            }
            out.push(v);
        }
        out
    }

    /// Feeds one new raw observation, updating residual and lag state.
    pub fn observe(&mut self, x: f64) {
        let mut v = x;
        for k in 0..self.d {
            let prev = self.anchors[k];
            self.anchors[k] = v;
            v -= prev;
        }
        let pred = self.one_step(&self.obs_history, &self.residual_history);
        let e = v - pred;
        push_bounded(&mut self.obs_history, v, self.p);
        push_bounded(&mut self.residual_history, e, self.q);
    }

    /// One-step-ahead predictions for each value of `actuals`, observing the
    /// true value after each prediction. The model itself is unchanged.
    pub fn rolling_one_step(&self, actuals: &[f64]) -> Vec<f64> {
        let mut m = self.clone();
        actuals
            .iter()
            .map(|&x| {
                let f = m.forecast(1)[0];
                m.observe(x);
                f
            })
            .collect()
    }

    /// Rolling forecasts `horizon` steps ahead: entry `i` predicts
    /// `actuals[i]` from data up to `i - horizon`.
    pub fn rolling_h_step(&self, actuals: &[f64], horizon: usize) -> Vec<f64> {
        assert!(horizon >= 1);
        let mut m = self.clone();
        let mut out = Vec::with_capacity(actuals.len());
        for i in 0..actuals.len() {
            if i + 1 >= horizon {
                // model has seen actuals[..i + 1 - horizon]
                out.push(*m.forecast(horizon).last().expect("horizon >= 1"));
                m.observe(actuals[i + 1 - horizon]);
            } else {
                out.push(m.forecast(i + 1)[i]);
            }
        }
        out
    }
}

fn push_bounded(buf: &mut VecDeque<f64>, v: f64, cap: usize) {
    if cap == 0 {
        return;
    }
    if buf.len() == cap {
        buf.pop_front();
    }
    buf.push_back(v);
}

/// Residuals (and optionally their Jacobian) of the demeaned differenced
/// series `z` under `theta = [c, ar.., ma..]`, for `t in p..len`.
fn css_pass(z: &[f64], p: usize, q: usize, theta: &[f64], jac: Option<&mut Vec<f64>>) -> (Vec<f64>, f64) {
    let k = 1 + p + q;
    let n = z.len() - p;
    let mut res = vec![0.0; n];
    let mut css = 0.0;
    let beta = &theta[1 + p..];
    let want_jac = jac.is_some();
    let mut jbuf = if want_jac { vec![0.0; n * k] } else { Vec::new() };
    let mut x = vec![0.0; k];
    for r in 0..n {
        let t = r + p;
        x[0] = 1.0;
        for i in 0..p {
            x[1 + i] = z[t - 1 - i];
        }
        for j in 0..q {
            x[1 + p + j] = if r > j { res[r - 1 - j] } else { 0.0 };
        }
        let pred: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
        let e = z[t] - pred;
        res[r] = e;
        css += e * e;
        if want_jac {
            for c in 0..k {
                let mut dv = -x[c];
                for (j, b) in beta.iter().enumerate() {
                    if r > j {
                        dv -= b * jbuf[(r - 1 - j) * k + c];
                    }
                }
                jbuf[r * k + c] = dv;
            }
        }
        if !e.is_finite() {
            css = f64::INFINITY;
            break;
        }
    }
    if let Some(j) = jac {
        *j = jbuf;
    }
    (res, css)
}

fn initial_guess(z: &[f64], p: usize, q: usize) -> Vec<f64> {
    let k = 1 + p + q;
    let lagged_rows = |series: &[f64], lags: usize, extra: Option<(&[f64], usize, usize)>| {
        let start = lags.max(extra.map_or(0, |e| e.2));
        let mut rows = Vec::new();
        let mut ys = Vec::new();
        for t in start..series.len() {
            let mut row = vec![1.0];
            row.extend((1..=lags).map(|i| series[t - i]));
            if let Some((e, el, _)) = extra {
                row.extend((1..=el).map(|j| e[t - j]));
            }
            rows.push(row);
            ys.push(series[t]);
        }
        (rows, ys)
    };
    if q == 0 {
        let (rows, ys) = lagged_rows(z, p, None);
        return linalg::least_squares(&rows, &ys).unwrap_or_else(|| vec![0.0; k]);
    }
    // Hannan-Rissanen: residuals of a long AR stand in for the innovations.
    let long = (p.max(q) + 5).min(z.len() / 5).max(1);
    let (rows, ys) = lagged_rows(z, long, None);
    let Some(coef) = linalg::least_squares(&rows, &ys) else {
        return vec![0.0; k];
    };
    let mut innov = vec![0.0; z.len()];
    for t in long..z.len() {
        let pred: f64 = coef[0] + (1..=long).map(|i| coef[i] * z[t - i]).sum::<f64>();
        innov[t] = z[t] - pred;
    }
    let (rows, ys) = lagged_rows(z, p, Some((&innov, q, long + q)));
    linalg::least_squares(&rows, &ys)
        .filter(|c| c.iter().all(|v| v.is_finite()))
        .map(|mut c| {
            // keep the start inside the invertible region
            for b in &mut c[1 + p..] {
                *b = b.clamp(-0.9, 0.9);
            }
            c
        })
        .unwrap_or_else(|| vec![0.0; k])
}

/// Fits ARIMA(p, d, q) by conditional least squares on the differenced
/// series: ordinary least squares when `q == 0`, otherwise
/// Levenberg-Marquardt iterations from a Hannan-Rissanen start.
pub fn fit_arima(train: &[f64], p: usize, d: usize, q: usize) -> Result<ArimaModel> {
    let need = p.max(q) + d + MIN_EXTRA_SAMPLES;
    if train.len() < need {
        return Err(Error::FitFailed(format!(
            "ARIMA({p},{d},{q}) needs at least {need} observations, got {}",
            train.len()
        )));
    }
    if train.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitFailed("training data contains non-finite values".into()));
    }
    let y = difference(train, d)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let spread = y.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    if spread <= 1e-12 * mean.abs().max(1.0) {
        let mut m = ArimaModel::from_parts(d, vec![0.0; p], vec![0.0; q], 0.0, y[0], train)?;
        m.diagnostics = FitDiagnostics {
            converged: true,
            iterations: 0,
            css: 0.0,
            note: Some("constant series".into()),
        };
        return Ok(m);
    }
    let z: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let k = 1 + p + q;

    let mut theta = initial_guess(&z, p, q);
    let mut jac = Vec::new();
    let (mut res, mut css) = css_pass(&z, p, q, &theta, Some(&mut jac));
    if !css.is_finite() {
        theta = vec![0.0; k];
        (res, css) = css_pass(&z, p, q, &theta, Some(&mut jac));
    }
    let mut iterations = 0;
    let mut converged = q == 0;
    if q > 0 {
        let mut lambda = 1e-3;
        'outer: while iterations < MAX_ITERATIONS {
            iterations += 1;
            let n = res.len();
            let mut jtj = vec![0.0; k * k];
            let mut jtr = vec![0.0; k];
            for r in 0..n {
                let row = &jac[r * k..(r + 1) * k];
                for a in 0..k {
                    jtr[a] -= row[a] * res[r];
                    for b in 0..=a {
                        jtj[a * k + b] += row[a] * row[b];
                    }
                }
            }
            for a in 0..k {
                for b in 0..a {
                    jtj[b * k + a] = jtj[a * k + b];
                }
            }
            loop {
                let mut damped = jtj.clone();
                for a in 0..k {
                    damped[a * k + a] += lambda * jtj[a * k + a].max(1e-12);
                }
                let Some(step) = linalg::solve_spd(&damped, &jtr, k) else {
                    lambda *= 10.0;
                    if lambda > 1e12 {
                        break 'outer;
                    }
                    continue;
                };
                let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, b)| a + b).collect();
                let mut cand_jac = Vec::new();
                let (cand_res, cand_css) = css_pass(&z, p, q, &cand, Some(&mut cand_jac));
                if cand_css.is_finite() && cand_css <= css {
                    let improvement = css - cand_css;
                    theta = cand;
                    res = cand_res;
                    jac = cand_jac;
                    css = cand_css;
                    lambda = (lambda / 10.0).max(1e-12);
                    if improvement <= REL_TOLERANCE * css.max(1e-300) {
                        converged = true;
                        break 'outer;
                    }
                    break;
                }
                lambda *= 10.0;
                if lambda > 1e12 {
                    // no descent direction left: at a (local) minimum
                    converged = true;
                    break 'outer;
                }
            }
        }
    }

    let residual_history: VecDeque<f64> = res.iter().rev().take(q).rev().copied().collect();
    let mut residual_history = residual_history;
    while residual_history.len() < q {
        residual_history.push_front(0.0);
    }
    let anchors = (0..d)
        .map(|lvl| *difference(train, lvl).expect("long enough").last().expect("non-empty"))
        .collect();
    Ok(ArimaModel {
        p,
        d,
        q,
        constant: theta[0],
        ar: theta[1..1 + p].to_vec(),
        ma: theta[1 + p..].to_vec(),
        mean,
        residual_history,
        obs_history: y.iter().rev().take(p).rev().copied().collect(),
        anchors,
        diagnostics: FitDiagnostics {
            converged,
            iterations,
            css,
            note: (!converged).then(|| format!("stopped after {iterations} iterations")),
        },
    })
}

/// One-step residuals of `model`'s fit replayed over `train` (for diagnostics).
pub fn training_residuals(model: &ArimaModel, train: &[f64]) -> Result<Vec<f64>> {
    let y = difference(train, model.d)?;
    let z: Vec<f64> = y.iter().map(|v| v - model.mean).collect();
    if z.len() <= model.p {
        return Err(Error::invalid("series shorter than AR order"));
    }
    let mut theta = vec![model.constant];
    theta.extend(&model.ar);
    theta.extend(&model.ma);
    Ok(css_pass(&z, model.p, model.q, &theta, None).0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    /// NaN when the fit failed.
    pub rmse: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub best: (usize, usize, usize),
    pub best_rmse: f64,
    pub table: Vec<GridRow>,
}

/// Fits every order in the grid on `train` and scores it by rolling one-step
/// RMSE over `validation`. Fits that are not stationary and invertible are
/// skipped. Ties go to the smallest `p + d + q`, then the
/// smallest `p`.
pub fn grid_search(
    train: &[f64],
    validation: &[f64],
    p_range: RangeInclusive<usize>,
    d_range: RangeInclusive<usize>,
    q_range: RangeInclusive<usize>,
) -> Result<GridResult> {
    if p_range.is_empty() || d_range.is_empty() || q_range.is_empty() {
        return Err(Error::invalid("grid ranges must be non-empty"));
    }
    if validation.is_empty() {
        return Err(Error::invalid("validation slice is empty"));
    }
    let mut table = Vec::new();
    let mut failures = Vec::new();
    for p in p_range.clone() {
        for d in d_range.clone() {
            for q in q_range.clone() {
                match fit_arima(train, p, d, q).and_then(|m| {
                    if m.is_stable() {
                        Ok(m)
                    } else {
                        Err(Error::FitFailed("not stationary and invertible".into()))
                    }
                }) {
                    Ok(m) => {
                        let preds = m.rolling_one_step(validation);
                        let score = rmse(&preds, validation).unwrap_or(f64::NAN);
                        table.push(GridRow {
                            p,
                            d,
                            q,
                            rmse: score,
                            converged: m.diagnostics.converged,
                        });
                    }
                    Err(e) => {
                        failures.push(format!("({p},{d},{q}): {e}"));
                        table.push(GridRow {
                            p,
                            d,
                            q,
                            rmse: f64::NAN,
                            converged: false,
                        });
                    }
                }
            }
        }
    }
    let best = table
        .iter()
        .filter(|r| r.rmse.is_finite())
        .min_by(|a, b| {
            a.rmse
                .total_cmp(&b.rmse)
                .then((a.p + a.d + a.q).cmp(&(b.p + b.d + b.q)))
                .then(a.p.cmp(&b.p))
        })
        .ok_or_else(|| Error::FitFailed(format!("every grid point failed: {}", failures.join("; "))))?;
    Ok(GridResult {
        best: (best.p, best.d, best.q),
        best_rmse: best.rmse,
        table,
    })
}

impl GridResult {
    /// Scored orders, best first, with the same tie-breaking as `best`.
    pub fn ranked(&self) -> Vec<(usize, usize, usize)> {
        let mut rows: Vec<&GridRow> = self.table.iter().filter(|r| r.rmse.is_finite()).collect();
        rows.sort_by(|a, b| {
            a.rmse
                .total_cmp(&b.rmse)
                .then((a.p + a.d + a.q).cmp(&(b.p + b.d + b.q)))
                .then(a.p.cmp(&b.p))
        });
        rows.into_iter().map(|r| (r.p, r.d, r.q)).collect()
    }

    /// Refits the ranked orders on `train` and returns the first stable fit.
    pub fn refit_stable(&self, train: &[f64]) -> Result<ArimaModel> {
        for (p, d, q) in self.ranked() {
            if let Ok(m) = fit_arima(train, p, d, q) {
                if m.is_stable() {
                    return Ok(m);
                }
            }
        }
        Err(Error::FitFailed("no grid order gives a stable fit on the full training data".into()))
    }
}

pub fn write_rmse_table_csv<W: Write>(w: &mut W, table: &[GridRow]) -> std::io::Result<()> {
    writeln!(w, "p,d,q,rmse,converged")?;
    for r in table {
        writeln!(w, "{},{},{},{},{}", r.p, r.d, r.q, r.rmse, r.converged)?;
    }
    Ok(())
}
