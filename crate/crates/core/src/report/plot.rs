//! Plot scripts: a plotting-library-neutral description of each figure,
//! read by any external plotting tool.
//!
//! ```text
//! figure <id>
//! title <text>
//! data <csv file, relative to the script>
//! kind line | step | bar
//! x <column>
//! y <column>
//! group <column>          (optional; one series per distinct value)
//! where <column> = <value> (optional, repeatable; rows kept when equal)
//! xlabel <text>
//! ylabel <text>
//! end
//! ```
//!
//! Blank lines and `#` comments are ignored. A file may hold several
//! figures.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Line,
    Step,
    Bar,
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlotKind::Line => "line",
            PlotKind::Step => "step",
            PlotKind::Bar => "bar",
        })
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "line" => Ok(PlotKind::Line),
            "step" => Ok(PlotKind::Step),
            "bar" => Ok(PlotKind::Bar),
            other => Err(Error::Config(format!("unknown plot kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub id: String,
    pub title: String,
    pub data: String,
    pub kind: PlotKind,
    pub x: String,
    pub y: String,
    pub group: Option<String>,
    pub filters: Vec<(String, String)>,
    pub xlabel: String,
    pub ylabel: String,
}

impl PlotSpec {
    pub fn new(id: &str, title: &str, data: &str, kind: PlotKind, (x, y): (&str, &str), (xlabel, ylabel): (&str, &str)) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            data: data.into(),
            kind,
            x: x.into(),
            y: y.into(),
            group: None,
            filters: Vec::new(),
            xlabel: xlabel.into(),
            ylabel: ylabel.into(),
        }
    }

    pub fn group(mut self, column: &str) -> Self {
        self.group = Some(column.into());
        self
    }

    pub fn filter(mut self, column: &str, value: &str) -> Self {
        self.filters.push((column.into(), value.into()));
        self
    }

    pub fn to_script(&self) -> String {
        let mut s = format!(
            "figure {}\ntitle {}\ndata {}\nkind {}\nx {}\ny {}\n",
            self.id, self.title, self.data, self.kind, self.x, self.y
        );
        if let Some(g) = &self.group {
            s += &format!("group {g}\n");
        }
        for (c, v) in &self.filters {
            s += &format!("where {c} = {v}\n");
        }
        s += &format!("xlabel {}\nylabel {}\nend\n", self.xlabel, self.ylabel);
        s
    }
}

pub fn parse_scripts(text: &str) -> Result<Vec<PlotSpec>> {
    let mut out = Vec::new();
    let mut cur: Option<PlotSpec> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse { line: i + 1, message };
        let (key, rest) = line.split_once(' ').map_or((line, ""), |(k, r)| (k, r.trim()));
        if key == "figure" {
            if cur.is_some() {
                return Err(err("figure without end".into()));
            }
            cur = Some(PlotSpec::new(rest, "", "", PlotKind::Line, ("", ""), ("", "")));
            continue;
        }
        let spec = cur.as_mut().ok_or_else(|| err(format!("`{key}` outside a figure")))?;
        match key {
            "title" => spec.title = rest.into(),
            "data" => spec.data = rest.into(),
            "kind" => spec.kind = rest.parse().map_err(|e: Error| err(e.to_string()))?,
            "x" => spec.x = rest.into(),
            "y" => spec.y = rest.into(),
            "group" => spec.group = Some(rest.into()),
            "where" => {
                let (c, v) = rest.split_once('=').ok_or_else(|| err("expected `where column = value`".into()))?;
                spec.filters.push((c.trim().into(), v.trim().into()));
            }
            "xlabel" => spec.xlabel = rest.into(),
            "ylabel" => spec.ylabel = rest.into(),
            "end" => out.push(cur.take().expect("inside a figure")),
            other => return Err(err(format!("unknown directive `{other}`"))),
        }
    }
    if cur.is_some() {
        return Err(Error::invalid("last figure has no end"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_round_trip() {
        let specs = vec![
            PlotSpec::new("delay_cdf", "Delay CDF", "delay_cdf.csv", PlotKind::Step, ("delay_ms", "cdf"), ("delay (ms)", "CDF")).group("scheme"),
            PlotSpec::new("rmse_by_tau", "RMSE vs tau", "metrics.csv", PlotKind::Line, ("value", "mean"), ("tau (s)", "RMSE"))
                .group("scheme")
                .filter("axis", "tau")
                .filter("metric", "rmse"),
        ];
        let text: String = specs.iter().map(PlotSpec::to_script).collect();
        assert_eq!(parse_scripts(&text).unwrap(), specs);
    }

    #[test]
    fn malformed_scripts() {
        assert!(parse_scripts("title x\n").is_err());
        assert!(parse_scripts("figure a\nkind pie\nend\n").is_err());
        assert!(parse_scripts("figure a\n").is_err());
    }
}
