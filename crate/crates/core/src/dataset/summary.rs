use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;

use super::{Column, Dataset, VariableKind};

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousSummary {
    pub code: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelFrequency {
    pub label: String,
    pub frequency: usize,
    pub percent: f64,
    pub cumulative: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalSummary {
    pub code: String,
    pub n: usize,
    pub levels: Vec<LevelFrequency>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub n_rows: usize,
    pub continuous: Vec<ContinuousSummary>,
    pub categorical: Vec<CategoricalSummary>,
}

/// Descriptive statistics over observed cells. Percentages are fractions of
/// the observed count. Binary indicators are summarized like continuous
/// variables.
pub fn summarize(d: &Dataset) -> DatasetSummary {
    let mut continuous = Vec::new();
    let mut categorical = Vec::new();
    for (j, spec) in d.schema().variables().iter().enumerate() {
        let mask = &d.mask()[j];
        match d.column(j) {
            Column::Numeric(v) => {
                let obs: Vec<f64> = v
                    .iter()
                    .zip(mask)
                    .filter(|(_, m)| !**m)
                    .map(|(x, _)| *x)
                    .collect();
                let n = obs.len();
                let (mean, sd, min, max) = if n == 0 {
                    (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
                } else {
                    let mean = obs.iter().sum::<f64>() / n as f64;
                    let sd = if n > 1 {
                        (obs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64)
                            .sqrt()
                    } else {
                        0.0
                    };
                    let min = obs.iter().copied().fold(f64::INFINITY, f64::min);
                    let max = obs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    (mean, sd, min, max)
                };
                debug_assert!(spec.kind != VariableKind::Categorical);
                continuous.push(ContinuousSummary {
                    code: spec.code.clone(),
                    n,
                    mean,
                    sd,
                    min,
                    max,
                });
            }
            Column::Categorical(levels) => {
                let mut counts = alloc::vec![0usize; spec.categories.len()];
                for (l, m) in levels.iter().zip(mask) {
                    if !*m {
                        counts[*l as usize] += 1;
                    }
                }
                let n: usize = counts.iter().sum();
                let mut cum = 0usize;
                let levels = spec
                    .categories
                    .iter()
                    .zip(&counts)
                    .map(|(label, &c)| {
                        cum += c;
                        let denom = if n == 0 { f64::NAN } else { n as f64 };
                        LevelFrequency {
                            label: label.clone(),
                            frequency: c,
                            percent: c as f64 / denom,
                            cumulative: cum as f64 / denom,
                        }
                    })
                    .collect();
                categorical.push(CategoricalSummary {
                    code: spec.code.clone(),
                    n,
                    levels,
                });
            }
        }
    }
    DatasetSummary {
        n_rows: d.n_rows(),
        continuous,
        categorical,
    }
}
