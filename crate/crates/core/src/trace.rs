//! Per-iteration records and their CSV / JSON serializations.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::errctl::ErrorCertificate;
use crate::error::{Error, Result};
use crate::spectral::SpectralReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Damped,
    Quadratic,
    FirstOrder,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Damped => "damped",
            Phase::Quadratic => "quadratic",
            Phase::FirstOrder => "first-order",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    IterationCap,
}

/// One primal step: the iterate `x^k` and the step taken from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub f: f64,
    pub h: f64,
    pub lambda_tilde: f64,
    pub theta: f64,
    /// Zero on the final record when the run stopped without stepping.
    pub stepsize: f64,
    pub phase: Phase,
    pub dual_iters: usize,
    pub consensus_rounds: usize,
    pub summation_rounds: usize,
    pub min_slack: f64,
    pub feas_residual: f64,
    pub certificate: Option<ErrorCertificate>,
    pub x: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub method: String,
    pub mu: f64,
    pub scale: f64,
    pub termination: Termination,
    pub dual_graph: Option<SpectralReport>,
    pub records: Vec<IterationRecord>,
}

impl Trace {
    /// Newton steps actually taken (nonzero stepsize). Price updates of the
    /// first-order methods are counted through `dual_iters` only.
    pub fn primal_steps(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.stepsize > 0.0 && r.phase != Phase::FirstOrder)
            .count()
    }

    pub fn total_dual_iters(&self) -> usize {
        self.records.iter().map(|r| r.dual_iters).sum()
    }

    /// Primal steps plus cumulative dual iterations.
    pub fn counted_iterations(&self) -> usize {
        self.primal_steps() + self.total_dual_iters()
    }

    pub fn total_consensus_rounds(&self) -> usize {
        self.records.iter().map(|r| r.consensus_rounds).sum()
    }

    pub fn total_summation_rounds(&self) -> usize {
        self.records.iter().map(|r| r.summation_rounds).sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record([
            "k",
            "f",
            "h",
            "lambda_tilde",
            "theta",
            "stepsize",
            "phase",
            "dual_iters",
            "consensus_rounds",
            "min_slack",
            "feas_residual",
        ])
        .map_err(csv_err)?;
        for r in &self.records {
            w.write_record([
                r.k.to_string(),
                fmt(r.f),
                fmt(r.h),
                fmt(r.lambda_tilde),
                fmt(r.theta),
                fmt(r.stepsize),
                r.phase.as_str().to_string(),
                r.dual_iters.to_string(),
                r.consensus_rounds.to_string(),
                fmt(r.min_slack),
                fmt(r.feas_residual),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

/// Shortest round-trip representation.
fn fmt(v: f64) -> String {
    format!("{v:e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(k: usize, dual: usize, step: f64) -> IterationRecord {
        IterationRecord {
            k,
            f: -1.5,
            h: 2.0,
            lambda_tilde: 0.1,
            theta: 0.1,
            stepsize: step,
            phase: Phase::Quadratic,
            dual_iters: dual,
            consensus_rounds: 4,
            summation_rounds: 2,
            min_slack: 0.25,
            feas_residual: 0.0,
            certificate: None,
            x: vec![1.0],
        }
    }

    #[test]
    fn counting_convention() {
        let t = Trace {
            method: "newton".into(),
            mu: 1.0,
            scale: 1.0,
            termination: Termination::Converged,
            dual_graph: None,
            records: vec![record(0, 5, 1.0), record(1, 3, 1.0), record(2, 2, 0.0)],
        };
        assert_eq!(t.primal_steps(), 2);
        assert_eq!(t.counted_iterations(), 12);
        let csv = t.to_csv_string();
        assert!(csv.starts_with("k,f,h,lambda_tilde,theta,stepsize,phase,dual_iters,consensus_rounds,min_slack,feas_residual\n"));
        assert!(csv.contains(",quadratic,"));
        let back: Trace = serde_json::from_str(&t.to_json_string()).unwrap();
        assert_eq!(back, t);
    }
}
