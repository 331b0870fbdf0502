use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::metrics::{mean, std_dev};

pub const METRIC_HEADER: &str = "scheme,axis,value,metric,mean,std,n";

/// Mean and sample standard deviation of one metric over `n` repetitions
/// at one (scheme, axis value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub scheme: String,
    pub axis: String,
    pub value: f64,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
}

fn check_field(s: &str) -> Result<()> {
    if s.is_empty() || s.contains([',', '"', '\n', '\r']) {
        return Err(Error::invalid(format!("metric table field `{s}` must be non-empty plain text")));
    }
    Ok(())
}

impl MetricTable {
    /// Appends a row summarizing `samples`; nothing is added when there
    /// are none.
    pub fn push_samples(&mut self, scheme: &str, axis: &str, value: f64, metric: &str, samples: &[f64]) -> Result<()> {
        for f in [scheme, axis, metric] {
            check_field(f)?;
        }
        if samples.is_empty() {
            return Ok(());
        }
        self.rows.push(MetricRow {
            scheme: scheme.into(),
            axis: axis.into(),
            value,
            metric: metric.into(),
            mean: mean(samples),
            std: std_dev(samples),
            n: samples.len(),
        });
        Ok(())
    }

    pub fn get(&self, scheme: &str, axis: &str, value: f64, metric: &str) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && r.axis == axis && r.value == value && r.metric == metric)
    }

    /// Mean of `metric` for `scheme` along `axis`, in row order.
    pub fn series(&self, scheme: &str, axis: &str, metric: &str) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.scheme == scheme && r.axis == axis && r.metric == metric)
            .map(|r| (r.value, r.mean))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        wr.write_record(METRIC_HEADER.split(','))?;
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush().map_err(|e| Error::io("metric table", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        if header.join(",") != METRIC_HEADER {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `{METRIC_HEADER}`"),
            });
        }
        let rows = rd.deserialize().collect::<std::result::Result<Vec<MetricRow>, _>>()?;
        Ok(Self { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn summary_and_lookup() {
        let mut t = MetricTable::default();
        t.push_samples("arima", "tau", 10.0, "rmse", &[1.0, 2.0, 3.0]).unwrap();
        t.push_samples("arima", "tau", 30.0, "rmse", &[]).unwrap();
        let r = t.get("arima", "tau", 10.0, "rmse").unwrap();
        assert_eq!((r.mean, r.std, r.n), (2.0, 1.0, 3));
        assert_eq!(t.rows.len(), 1);
        assert!(t.push_samples("a,b", "tau", 1.0, "rmse", &[1.0]).is_err());
    }

    #[test]
    fn header_is_checked() {
        assert!(MetricTable::read_csv("a,b\n1,2\n".as_bytes()).is_err());
        let t = MetricTable::read_csv(format!("{METRIC_HEADER}\n").as_bytes()).unwrap();
        assert!(t.rows.is_empty());
    }

    proptest! {
        #[test]
        fn csv_round_trip(rows in prop::collection::vec(
            ("[a-z_]{1,8}", "[a-z_]{1,8}", -1e6f64..1e6, "[a-z_]{1,8}", prop::collection::vec(-1e9f64..1e9, 1..6)),
            0..10,
        )) {
            let mut t = MetricTable::default();
            for (s, a, v, m, samples) in &rows {
                t.push_samples(s, a, *v, m, samples).unwrap();
            }
            let mut buf = Vec::new();
            t.write_csv(&mut buf).unwrap();
            prop_assert_eq!(MetricTable::read_csv(buf.as_slice()).unwrap(), t);
        }
    }
}
