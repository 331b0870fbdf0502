//! Fixed-interval binning of packet traces into per-bin feature vectors,
//! the six feature-set masks, experiment splits and z-score normalization.

use std::fmt;
use std::io::{Read, Write};
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace_io::{AppClass, Direction, Protocol, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Feature {
    NumUl = 0,
    NumDl = 1,
    SizeUl = 2,
    SizeDl = 3,
    UlDlRatio = 4,
    UdpFraction = 5,
}

impl Feature {
    pub const ALL: [Feature; 6] = [
        Feature::NumUl,
        Feature::NumDl,
        Feature::SizeUl,
        Feature::SizeDl,
        Feature::UlDlRatio,
        Feature::UdpFraction,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn column(self) -> &'static str {
        match self {
            Feature::NumUl => "num_ul",
            Feature::NumDl => "num_dl",
            Feature::SizeUl => "size_ul",
            Feature::SizeDl => "size_dl",
            Feature::UlDlRatio => "ratio",
            Feature::UdpFraction => "udp_fraction",
        }
    }
}

/// Traffic statistics of one bin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub num_ul: u64,
    pub num_dl: u64,
    pub size_ul: u64,
    pub size_dl: u64,
    /// `(num_ul + 1) / (num_dl + 1)`.
    pub ul_dl_ratio: f64,
    /// UDP packets over all packets; 0 for an empty bin.
    pub udp_fraction: f64,
}

impl FeatureVector {
    pub fn from_counts(num_ul: u64, num_dl: u64, size_ul: u64, size_dl: u64, udp: u64) -> Self {
        let total = num_ul + num_dl;
        Self {
            num_ul,
            num_dl,
            size_ul,
            size_dl,
            ul_dl_ratio: (num_ul as f64 + 1.0) / (num_dl as f64 + 1.0),
            udp_fraction: udp as f64 / total.max(1) as f64,
        }
    }

    pub fn get(&self, f: Feature) -> f64 {
        match f {
            Feature::NumUl => self.num_ul as f64,
            Feature::NumDl => self.num_dl as f64,
            Feature::SizeUl => self.size_ul as f64,
            Feature::SizeDl => self.size_dl as f64,
            Feature::UlDlRatio => self.ul_dl_ratio,
            Feature::UdpFraction => self.udp_fraction,
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        Feature::ALL.map(|f| self.get(f))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureSet {
    Fs1,
    Fs2,
    Fs3,
    Fs4,
    Fs5,
    Fs6,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 6] = [
        FeatureSet::Fs1,
        FeatureSet::Fs2,
        FeatureSet::Fs3,
        FeatureSet::Fs4,
        FeatureSet::Fs5,
        FeatureSet::Fs6,
    ];

    pub fn features(self) -> &'static [Feature] {
        use Feature::*;
        match self {
            FeatureSet::Fs1 => &[NumUl, NumDl, SizeUl, SizeDl, UlDlRatio],
            FeatureSet::Fs2 => &[NumUl, UlDlRatio],
            FeatureSet::Fs3 => &[NumUl],
            FeatureSet::Fs4 => &[NumUl, NumDl, UlDlRatio],
            FeatureSet::Fs5 => &[NumUl, NumDl],
            FeatureSet::Fs6 => &[NumUl, NumDl, UdpFraction],
        }
    }

    pub fn mask(self) -> FeatureSetMask {
        let mut included = [false; 6];
        for f in self.features() {
            included[f.index()] = true;
        }
        FeatureSetMask {
            id: Some(self),
            included,
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FS-{}", *self as usize + 1)
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s
            .trim()
            .trim_start_matches(|c: char| c.is_ascii_alphabetic() || c == '-');
        match digits.parse::<usize>() {
            Ok(n @ 1..=6) => Ok(FeatureSet::ALL[n - 1]),
            _ => Err(Error::invalid(format!("unknown feature set `{s}` (FS-1..FS-6)"))),
        }
    }
}

/// Which `FeatureVector` fields a learner sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSetMask {
    pub id: Option<FeatureSet>,
    pub included: [bool; 6],
}

impl FeatureSetMask {
    pub fn all() -> Self {
        Self {
            id: None,
            included: [true; 6],
        }
    }

    pub fn custom(included: [bool; 6]) -> Result<Self> {
        let m = Self { id: None, included };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.included.iter().any(|&b| b) {
            return Err(Error::invalid("feature mask selects no features"));
        }
        Ok(())
    }

    pub fn features(&self) -> Vec<Feature> {
        Feature::ALL
            .into_iter()
            .filter(|f| self.included[f.index()])
            .collect()
    }

    pub fn width(&self) -> usize {
        self.included.iter().filter(|&&b| b).count()
    }

    pub fn contains(&self, f: Feature) -> bool {
        self.included[f.index()]
    }

    pub fn select(&self, v: &FeatureVector) -> Vec<f64> {
        Feature::ALL
            .into_iter()
            .filter(|f| self.included[f.index()])
            .map(|f| v.get(f))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeries {
    pub tau: f64,
    pub bins: Vec<FeatureVector>,
    pub mask: FeatureSetMask,
    pub target: Feature,
    /// Per-bin application label for labeled traces.
    pub labels: Option<Vec<AppClass>>,
}

impl FeatureSeries {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Row-major matrix of the masked features.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.bins.iter().map(|b| self.mask.select(b)).collect()
    }

    pub fn target_values(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.get(self.target)).collect()
    }

    /// Column of the target inside `matrix()`, if the mask includes it.
    pub fn target_column(&self) -> Option<usize> {
        self.mask.features().iter().position(|&f| f == self.target)
    }

    pub fn slice(&self, range: Range<usize>) -> FeatureSeries {
        FeatureSeries {
            tau: self.tau,
            bins: self.bins[range.clone()].to_vec(),
            mask: self.mask,
            target: self.target,
            labels: self.labels.as_ref().map(|l| l[range].to_vec()),
        }
    }

    pub fn with_target(mut self, target: Feature) -> Result<Self> {
        if target != Feature::NumUl && !self.mask.contains(target) {
            return Err(Error::invalid(format!(
                "target `{}` is not in the feature mask",
                target.column()
            )));
        }
        self.target = target;
        Ok(self)
    }
}

/// Bins `trace` into `[k*tau, (k+1)*tau)` intervals, `ceil(duration/tau)` of them.
pub fn bin_trace(trace: &Trace, tau: f64) -> Result<FeatureSeries> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::invalid(format!("tau must be > 0 s, got {tau}")));
    }
    let mut n = (trace.duration / tau).ceil() as usize;
    if n == 0 && !trace.records.is_empty() {
        n = 1;
    }
    // num_ul, num_dl, size_ul, size_dl, udp
    let mut acc = vec![[0u64; 5]; n];
    let mut votes = trace.labeled.then(|| vec![[0u32; AppClass::COUNT]; n]);
    for r in &trace.records {
        let k = ((r.timestamp / tau).floor() as usize).min(n - 1);
        let a = &mut acc[k];
        match r.direction {
            Direction::Ul => {
                a[0] += 1;
                a[2] += r.size as u64;
            }
            Direction::Dl => {
                a[1] += 1;
                a[3] += r.size as u64;
            }
        }
        if r.protocol == Protocol::Udp {
            a[4] += 1;
        }
        if let (Some(v), Some(app)) = (votes.as_mut(), r.app) {
            v[k][app.index()] += 1;
        }
    }
    let bins = acc
        .iter()
        .map(|a| FeatureVector::from_counts(a[0], a[1], a[2], a[3], a[4]))
        .collect();
    Ok(FeatureSeries {
        tau,
        bins,
        mask: FeatureSetMask::all(),
        target: Feature::NumUl,
        labels: votes.map(|v| majority_labels(&v)),
    })
}

/// Majority packet label per bin; empty bins inherit the previous label
/// (or the first non-empty one at the start).
fn majority_labels(votes: &[[u32; AppClass::COUNT]]) -> Vec<AppClass> {
    let raw: Vec<Option<AppClass>> = votes
        .iter()
        .map(|v| {
            let (best, &count) = v
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .expect("four classes");
            (count > 0).then(|| AppClass::from_index(best).expect("class index"))
        })
        .collect();
    let first = raw.iter().flatten().next().copied().unwrap_or(AppClass::Surf);
    let mut last = first;
    raw.into_iter()
        .map(|l| {
            if let Some(l) = l {
                last = l;
            }
            last
        })
        .collect()
}

pub fn apply_mask(series: &FeatureSeries, mask: FeatureSetMask) -> Result<FeatureSeries> {
    mask.validate()?;
    if series.target != Feature::NumUl && !mask.contains(series.target) {
        return Err(Error::invalid(format!(
            "mask drops the prediction target `{}`",
            series.target.column()
        )));
    }
    Ok(FeatureSeries {
        mask,
        ..series.clone()
    })
}

/// Contiguous train then test slices starting at bin `start`.
pub fn split_experiment(
    series: &FeatureSeries,
    train_len: usize,
    test_len: usize,
    start: usize,
) -> Result<(FeatureSeries, FeatureSeries)> {
    let end = start
        .checked_add(train_len)
        .and_then(|v| v.checked_add(test_len))
        .ok_or_else(|| Error::invalid("split length overflow"))?;
    if end > series.len() {
        return Err(Error::invalid(format!(
            "split [{start}, {end}) exceeds series of {} bins",
            series.len()
        )));
    }
    let mid = start + train_len;
    Ok((series.slice(start..mid), series.slice(mid..end)))
}

/// Per-column z-score constants, fitted on training data only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(width: usize) -> Self {
        Self {
            mean: vec![0.0; width],
            std: vec![1.0; width],
        }
    }

    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::invalid("cannot fit normalizer on no rows"))?;
        let n = rows.len() as f64;
        let mut mean = vec![0.0; width];
        for r in rows {
            if r.len() != width {
                return Err(Error::DimensionMismatch {
                    context: "normalizer rows",
                    expected: width,
                    got: r.len(),
                });
            }
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; width];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn apply_col(&self, col: usize, v: f64) -> f64 {
        (v - self.mean[col]) / self.std[col]
    }

    pub fn invert_col(&self, col: usize, z: f64) -> f64 {
        z * self.std[col] + self.mean[col]
    }
}

const CSV_COLUMNS: &str = "bin_index,num_ul,num_dl,size_ul,size_dl,ratio,udp_fraction";

pub fn write_series_csv<W: Write>(w: &mut W, series: &FeatureSeries) -> std::io::Result<()> {
    write!(w, "{CSV_COLUMNS}")?;
    if series.labels.is_some() {
        write!(w, ",label")?;
    }
    writeln!(w)?;
    for (i, b) in series.bins.iter().enumerate() {
        write!(
            w,
            "{i},{},{},{},{},{},{}",
            b.num_ul, b.num_dl, b.size_ul, b.size_dl, b.ul_dl_ratio, b.udp_fraction
        )?;
        if let Some(labels) = &series.labels {
            write!(w, ",{}", labels[i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_series_csv<R: Read>(r: R, tau: f64) -> Result<FeatureSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let labeled = header.len() == 8 && header[7] == "label";
    if header[..7.min(header.len())].join(",") != CSV_COLUMNS {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected feature header `{}`", header.join(",")),
        });
    }
    let mut bins = Vec::new();
    let mut labels = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let bad = |m: &str| Error::Parse {
            line,
            message: m.to_string(),
        };
        let u = |i: usize| row[i].parse::<u64>().map_err(|_| bad("invalid count"));
        let f = |i: usize| row[i].parse::<f64>().map_err(|_| bad("invalid value"));
        bins.push(FeatureVector {
            num_ul: u(1)?,
            num_dl: u(2)?,
            size_ul: u(3)?,
            size_dl: u(4)?,
            ul_dl_ratio: f(5)?,
            udp_fraction: f(6)?,
        });
        if labeled {
            labels.push(row[7].parse::<AppClass>()?);
        }
    }
    Ok(FeatureSeries {
        tau,
        bins,
        mask: FeatureSetMask::all(),
        target: Feature::NumUl,
        labels: labeled.then_some(labels),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace_io::{PacketRecord, SynthDefaults};
    use proptest::prelude::*;

    fn rec(t: f64, d: Direction, p: Protocol) -> PacketRecord {
        PacketRecord {
            timestamp: t,
            direction: d,
            size: 100,
            protocol: p,
            app: None,
        }
    }

    #[test]
    fn counts_and_ratio() {
        let trace = Trace::new(
            vec![
                rec(0.5, Direction::Ul, Protocol::Tcp),
                rec(1.0, Direction::Ul, Protocol::Tcp),
                rec(2.0, Direction::Dl, Protocol::Tcp),
                rec(9.9, Direction::Ul, Protocol::Tcp),
            ],
            10.0,
        );
        let s = bin_trace(&trace, 10.0).unwrap();
        assert_eq!(s.len(), 1);
        let b = s.bins[0];
        assert_eq!((b.num_ul, b.num_dl), (3, 1));
        assert_eq!(b.ul_dl_ratio, 2.0);
        assert_eq!(b.size_ul, 300);
        assert_eq!(b.udp_fraction, 0.0);
    }

    #[test]
    fn udp_and_empty_bins() {
        let trace = Trace::new(
            vec![
                rec(0.1, Direction::Ul, Protocol::Udp),
                rec(0.2, Direction::Dl, Protocol::Udp),
            ],
            2.0,
        );
        let s = bin_trace(&trace, 1.0).unwrap();
        assert_eq!(s.bins[0].udp_fraction, 1.0);
        let empty = s.bins[1];
        assert_eq!((empty.num_ul, empty.num_dl), (0, 0));
        assert_eq!(empty.ul_dl_ratio, 1.0);
        assert_eq!(empty.udp_fraction, 0.0);
    }

    #[test]
    fn empty_trace_gives_zero_bins_over_duration() {
        let s = bin_trace(&Trace::new(vec![], 25.0), 10.0).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.bins.iter().all(|b| b.num_ul == 0 && b.num_dl == 0));
        assert!(bin_trace(&Trace::new(vec![], 1.0), 0.0).is_err());
    }

    #[test]
    fn mask_widths() {
        let s = bin_trace(&Trace::new(vec![], 10.0), 1.0).unwrap();
        let fs3 = apply_mask(&s, FeatureSet::Fs3.mask()).unwrap();
        assert_eq!(fs3.matrix()[0].len(), 1);
        let fs1 = apply_mask(&s, FeatureSet::Fs1.mask()).unwrap();
        assert_eq!(fs1.matrix()[0].len(), 5);
        assert!(FeatureSetMask::custom([false; 6]).is_err());
        let zero = FeatureSetMask {
            id: None,
            included: [false; 6],
        };
        assert!(apply_mask(&s, zero).is_err());
    }

    #[test]
    fn table_columns() {
        use Feature::*;
        assert_eq!(FeatureSet::Fs4.features(), &[NumUl, NumDl, UlDlRatio]);
        assert_eq!(FeatureSet::Fs6.features(), &[NumUl, NumDl, UdpFraction]);
        assert_eq!(FeatureSet::Fs2.features(), &[NumUl, UlDlRatio]);
        assert_eq!("FS-5".parse::<FeatureSet>().unwrap(), FeatureSet::Fs5);
        assert!("FS-7".parse::<FeatureSet>().is_err());
    }

    #[test]
    fn mask_must_keep_non_default_target() {
        let s = bin_trace(&Trace::new(vec![], 10.0), 1.0)
            .unwrap()
            .with_target(Feature::NumDl)
            .unwrap();
        assert!(apply_mask(&s, FeatureSet::Fs3.mask()).is_err());
        assert!(apply_mask(&s, FeatureSet::Fs5.mask()).is_ok());
    }

    #[test]
    fn splits() {
        let s = bin_trace(&Trace::new(vec![], 10_000.0), 1.0).unwrap();
        let (tr, te) = split_experiment(&s, 8000, 2000, 0).unwrap();
        assert_eq!((tr.len(), te.len()), (8000, 2000));
        let (tr, te) = split_experiment(&s, 0, 10, 5).unwrap();
        assert_eq!((tr.len(), te.len()), (0, 10));
        assert!(split_experiment(&s, 1, 1, 10_000).is_err());
        assert!(split_experiment(&s, 8001, 2000, 0).is_err());
    }

    #[test]
    fn normalizer_centers_and_inverts() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let n = Normalizer::fit(&rows).unwrap();
        assert_eq!(n.apply(&[1.0, 5.0]), vec![-1.0, 0.0]);
        assert_eq!(n.invert_col(0, 1.0), 3.0);
    }

    #[test]
    fn labeled_bins_and_csv_round_trip() {
        let d = SynthDefaults::builtin();
        let trace = crate::trace_io::synthesize_labeled_session(
            &d,
            &[AppClass::VoiceCall, AppClass::VideoStream],
            10.0,
            4,
        )
        .unwrap();
        let s = bin_trace(&trace, 1.0).unwrap();
        let labels = s.labels.as_ref().unwrap();
        assert_eq!(labels[2], AppClass::VoiceCall);
        assert_eq!(labels[15], AppClass::VideoStream);
        let mut buf = Vec::new();
        write_series_csv(&mut buf, &s).unwrap();
        let back = read_series_csv(buf.as_slice(), 1.0).unwrap();
        assert_eq!(back, s);
    }

    fn arb_trace() -> impl Strategy<Value = Trace> {
        prop::collection::vec((0.0f64..100.0, any::<bool>(), any::<bool>()), 0..300).prop_map(|v| {
            let mut recs: Vec<PacketRecord> = v
                .into_iter()
                .map(|(t, ul, udp)| {
                    rec(
                        t,
                        if ul { Direction::Ul } else { Direction::Dl },
                        if udp { Protocol::Udp } else { Protocol::Tcp },
                    )
                })
                .collect();
            recs.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
            Trace::new(recs, 100.0)
        })
    }

    proptest! {
        #[test]
        fn ul_count_conserved(trace in arb_trace(), tau in 0.5f64..30.0) {
            let s = bin_trace(&trace, tau).unwrap();
            let total: u64 = s.bins.iter().map(|b| b.num_ul).sum();
            prop_assert_eq!(total as usize, trace.count(Direction::Ul));
            prop_assert!(s.bins.iter().all(|b| (0.0..=1.0).contains(&b.udp_fraction)));
        }

        #[test]
        fn halving_tau(trace in arb_trace(), tau in 0.5f64..30.0) {
            let a = bin_trace(&trace, tau).unwrap();
            let b = bin_trace(&trace, tau / 2.0).unwrap();
            prop_assert!(b.len() <= 2 * a.len());
            let sum = |s: &FeatureSeries| s.bins.iter().map(|x| x.num_ul + x.num_dl).sum::<u64>();
            prop_assert_eq!(sum(&a), sum(&b));
        }

        #[test]
        fn mask_idempotent(trace in arb_trace(), fs in 0usize..6) {
            let s = bin_trace(&trace, 5.0).unwrap();
            let m = FeatureSet::ALL[fs].mask();
            let once = apply_mask(&s, m).unwrap();
            prop_assert_eq!(apply_mask(&once, m).unwrap(), once);
        }
    }
}
