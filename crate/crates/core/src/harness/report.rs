use std::io::Write;

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::error::Result;

/// One statistic of one experiment at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    pub n: usize,
    pub k: usize,
    #[serde(rename = "M")]
    pub replications: usize,
    pub stat: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub target: Option<f64>,
    pub tol: Option<f64>,
    pub pass: Option<bool>,
    /// Value predicted by theory; becomes the target when a tolerance
    /// without explicit target applies.
    #[serde(skip)]
    pub reference: Option<f64>,
}

impl Row {
    pub fn new(stat: &str, n: usize, k: usize, value: f64) -> Self {
        Self {
            experiment: String::new(),
            n,
            k,
            replications: 0,
            stat: stat.to_string(),
            value,
            stderr: None,
            target: None,
            tol: None,
            pass: None,
            reference: None,
        }
    }

    pub fn se(mut self, stderr: f64) -> Self {
        self.stderr = Some(stderr);
        self
    }

    pub fn reference(mut self, reference: f64) -> Self {
        self.reference = Some(reference);
        self
    }

    /// Indicator row: `1` when `holds`, checked against target `1`.
    pub fn indicator(stat: &str, n: usize, k: usize, holds: bool) -> Self {
        Self::new(stat, n, k, if holds { 1.0 } else { 0.0 }).reference(1.0)
    }

    pub fn recompute_pass(&self) -> Option<bool> {
        match (self.target, self.tol) {
            (Some(t), Some(tol)) => Some((self.value - t).abs() <= tol),
            _ => None,
        }
    }
}

const HEADER: [&str; 10] = [
    "experiment", "n", "k", "M", "stat", "value", "stderr", "target", "tol", "pass",
];

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub rows: Vec<Row>,
    pub all_pass: bool,
    pub runtime_secs: f64,
}

impl ExperimentReport {
    /// Attach targets and tolerances from the configuration and evaluate
    /// every applicable check.
    pub fn new(config: ExperimentConfig, mut rows: Vec<Row>, runtime_secs: f64) -> Self {
        let name = match &config.label {
            Some(label) => format!("{}:{label}", config.experiment),
            None => config.experiment.to_string(),
        };
        for row in &mut rows {
            row.experiment = name.clone();
            row.replications = config.replications;
            row.target = row.reference;
            if let Some(tol) = config.tolerances.get(&row.stat) {
                if tol.n.is_none_or(|n| n == row.n) {
                    if let Some((target, t)) = tol.resolve(row.reference) {
                        row.target = Some(target);
                        row.tol = Some(t);
                    }
                }
            }
            row.pass = row.recompute_pass();
        }
        let all_pass = rows.iter().all(|r| r.pass != Some(false));
        Self {
            seed: config.seed,
            config,
            rows,
            all_pass,
            runtime_secs,
        }
    }

    pub fn checks(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(|r| r.pass.is_some())
    }

    pub fn row(&self, stat: &str, n: usize) -> Option<&Row> {
        self.rows.iter().find(|r| r.stat == stat && r.n == n)
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

/// CSV with columns `experiment,n,k,M,stat,value,stderr,target,tol,pass`.
pub fn write_csv<W: Write>(reports: &[ExperimentReport], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(HEADER)?;
    for report in reports {
        for row in &report.rows {
            w.serialize(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(reports: &[ExperimentReport]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(reports, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{ExperimentId, Tolerance};

    #[test]
    fn tolerances_attach_to_matching_rows() {
        let mut cfg = ExperimentConfig::defaults(ExperimentId::Expansion).remove(0);
        cfg.tolerances.insert("x".into(), Tolerance::rel(0.1).at(1024));
        let rows = vec![
            Row::new("x", 256, 8, 1.05).reference(1.0),
            Row::new("x", 1024, 10, 1.2).reference(1.0).se(0.01),
            Row::new("y", 1024, 10, 3.0),
        ];
        let report = ExperimentReport::new(cfg, rows, 0.0);
        assert_eq!(report.rows[0].pass, None);
        assert_eq!(report.rows[0].target, Some(1.0));
        assert_eq!(report.rows[1].pass, Some(false));
        assert_eq!(report.rows[2].pass, None);
        assert!(!report.all_pass);
        let csv = csv_string(&[report]).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("experiment,n,k,M,stat,value,stderr,target,tol,pass"));
        assert_eq!(lines.next(), Some("expansion,256,8,2000,x,1.05,,1.0,,"));
        assert_eq!(lines.next(), Some("expansion,1024,10,2000,x,1.2,0.01,1.0,0.1,false"));
    }
}
