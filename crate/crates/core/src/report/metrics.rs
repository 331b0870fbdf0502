use crate::error::{Error, Result};
use crate::sim::SimReport;

fn check_pair(predictions: &[f64], truths: &[f64]) -> Result<()> {
    if predictions.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            context: "rmse",
            expected: truths.len(),
            got: predictions.len(),
        });
    }
    if truths.is_empty() {
        return Err(Error::invalid("rmse of an empty sequence"));
    }
    Ok(())
}

pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    check_pair(predictions, truths)?;
    let sse: f64 = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sse / truths.len() as f64).sqrt())
}

/// RMSE divided by the mean of the truths; `None` when that mean is not
/// positive.
pub fn relative_rmse(predictions: &[f64], truths: &[f64]) -> Result<Option<f64>> {
    let r = rmse(predictions, truths)?;
    let mean = truths.iter().sum::<f64>() / truths.len() as f64;
    Ok((mean > 0.0).then(|| r / mean))
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Empirical delay CDF at each grid point (ms). Undelivered packets count
/// in the denominator only, as delays beyond every grid point.
pub fn delay_cdf(report: &SimReport, grid_ms: &[f64]) -> Result<Vec<f64>> {
    let n = report.packets.len() as u64 + report.total_undelivered();
    if n == 0 {
        return Err(Error::invalid("no packets to build a delay CDF from"));
    }
    let mut delays: Vec<u64> = report.packets.iter().map(|p| p.delay_ms).collect();
    delays.sort_unstable();
    Ok(grid_ms
        .iter()
        .map(|&g| delays.partition_point(|&d| d as f64 <= g) as f64 / n as f64)
        .collect())
}

/// Median of the delivered packets' delays in ms.
pub fn median_delay(report: &SimReport) -> Result<f64> {
    let mut d: Vec<u64> = report.packets.iter().map(|p| p.delay_ms).collect();
    if d.is_empty() {
        return Err(Error::invalid("no delivered packets"));
    }
    d.sort_unstable();
    let m = d.len() / 2;
    Ok(if d.len() % 2 == 1 {
        d[m] as f64
    } else {
        (d[m - 1] + d[m]) as f64 / 2.0
    })
}

pub fn mean_delay(report: &SimReport) -> Result<f64> {
    if report.packets.is_empty() {
        return Err(Error::invalid("no delivered packets"));
    }
    Ok(report.packets.iter().map(|p| p.delay_ms as f64).sum::<f64>() / report.packets.len() as f64)
}

/// Average power in mW of every UE over the run, and their mean.
pub fn average_power(report: &SimReport) -> Result<(Vec<f64>, f64)> {
    let secs = report.config.duration_s();
    if !(secs > 0.0) {
        return Err(Error::invalid("run duration must be positive"));
    }
    let per: Vec<f64> = report.ues.iter().map(|u| u.energy_mj / secs).collect();
    let fleet = mean(&per);
    Ok((per, fleet))
}
