//! Per-step series and histograms of trace fields.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::denoiser::{RunTrace, StepRecord};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HistField {
    Metric,
    M,
    Mg,
}

impl HistField {
    pub fn name(self) -> &'static str {
        match self {
            HistField::Metric => "metric",
            HistField::M => "m",
            HistField::Mg => "mg",
        }
    }

    fn get(self, r: &StepRecord) -> Option<f64> {
        match self {
            HistField::Metric => r.metric,
            HistField::M => r.m,
            HistField::Mg => r.mg,
        }
    }
}

impl FromStr for HistField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "metric" => Ok(Self::Metric),
            "m" => Ok(Self::M),
            "mg" => Ok(Self::Mg),
            _ => Err(Error::arg(format!(
                "unknown trace field `{s}` (metric|m|mg)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub field: HistField,
    /// `(step, value, bin index)` for every record carrying the field.
    pub series: Vec<(usize, f64, usize)>,
    pub bins: Vec<Bin>,
}

/// Bins `field` over `[min, max]` with `bins` equal-width bins, the last one
/// closed on the right. A constant series collapses to one zero-width bin.
pub fn export_histogram(trace: &RunTrace, field: HistField, bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::arg("histogram needs at least one bin"));
    }
    let values: Vec<(usize, f64)> = trace
        .records
        .iter()
        .filter_map(|r| field.get(r).map(|v| (r.step, v)))
        .collect();
    let Some(lo) = values.iter().map(|v| v.1).reduce(f64::min) else {
        return Ok(Histogram {
            field,
            series: Vec::new(),
            bins: Vec::new(),
        });
    };
    let hi = values.iter().map(|v| v.1).fold(lo, f64::max);
    let mut edges: Vec<Bin> = if hi > lo {
        let width = (hi - lo) / bins as f64;
        (0..bins)
            .map(|i| Bin {
                lo: lo + width * i as f64,
                hi: if i + 1 == bins {
                    hi
                } else {
                    lo + width * (i + 1) as f64
                },
                count: 0,
            })
            .collect()
    } else {
        vec![Bin { lo, hi, count: 0 }]
    };
    let n_bins = edges.len();
    let series = values
        .into_iter()
        .map(|(step, v)| {
            let idx = if n_bins == 1 {
                0
            } else {
                (((v - lo) / (hi - lo) * n_bins as f64) as usize).min(n_bins - 1)
            };
            edges[idx].count += 1;
            (step, v, idx)
        })
        .collect();
    Ok(Histogram {
        field,
        series,
        bins: edges,
    })
}

impl Histogram {
    /// `step,<field>,bin,bin_lo,bin_hi`, one row per series entry.
    pub fn series_csv(&self) -> String {
        let mut out = format!("step,{},bin,bin_lo,bin_hi\n", self.field.name());
        for &(step, v, b) in &self.series {
            let bin = &self.bins[b];
            writeln!(out, "{step},{v},{b},{},{}", bin.lo, bin.hi).unwrap();
        }
        out
    }

    /// `bin,lo,hi,count`, one row per bin.
    pub fn bins_csv(&self) -> String {
        let mut out = String::from("bin,lo,hi,count\n");
        for (i, b) in self.bins.iter().enumerate() {
            writeln!(out, "{i},{},{},{}", b.lo, b.hi, b.count).unwrap();
        }
        out
    }
}
