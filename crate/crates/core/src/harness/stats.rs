use serde::{Deserialize, Serialize};

/// Mean and sample standard deviation; a single value has deviation 0.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Aggregate {
    pub fn of(metric: &str, xs: &[f64]) -> Self {
        let (mean, std) = mean_std(xs);
        Self { metric: metric.into(), mean, std, n: xs.len() }
    }
}

/// Aggregated results of a multi-seed training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub label: String,
    /// Seeds whose outputs were found and aggregated.
    pub completed_seeds: Vec<u64>,
    pub failed_seeds: Vec<u64>,
    pub aggregates: Vec<Aggregate>,
}

impl Report {
    pub fn get(&self, metric: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.metric == metric)
    }

    pub fn to_csv(&self) -> crate::Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for a in &self.aggregates {
            w.serialize(a)?;
        }
        let bytes = w.into_inner().map_err(|e| crate::Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
