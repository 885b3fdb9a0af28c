//! Message-level bookkeeping derived from a trace.

use serde::{Deserialize, Serialize};

use crate::model::Network;
use crate::trace::Trace;

/// Message counts of one primal iteration (or one price update for the
/// first-order methods).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepMessages {
    /// Source to route pushes: one per link on the route per dual round.
    pub pushes: usize,
    /// Route to source feedbacks: one aggregate per source per dual round.
    pub feedbacks: usize,
    pub dual_rounds: usize,
    pub consensus_rounds: usize,
    pub summation_rounds: usize,
}

impl std::ops::AddAssign for StepMessages {
    fn add_assign(&mut self, o: Self) {
        self.pushes += o.pushes;
        self.feedbacks += o.feedbacks;
        self.dual_rounds += o.dual_rounds;
        self.consensus_rounds += o.consensus_rounds;
        self.summation_rounds += o.summation_rounds;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageMetrics {
    pub per_step: Vec<StepMessages>,
    pub totals: StepMessages,
}

impl MessageMetrics {
    pub fn from_trace(network: &Network, trace: &Trace) -> Self {
        let route_len: usize = network.routes().iter().map(Vec::len).sum();
        let s = network.num_sources();
        let mut m = MessageMetrics::default();
        for r in &trace.records {
            let step = StepMessages {
                pushes: r.dual_iters * route_len,
                feedbacks: r.dual_iters * s,
                dual_rounds: r.dual_iters,
                consensus_rounds: r.consensus_rounds,
                summation_rounds: r.summation_rounds,
            };
            m.totals += step;
            m.per_step.push(step);
        }
        m
    }

    /// Feedback messages per dual round; equals the number of sources.
    pub fn feedbacks_per_round(&self) -> Option<f64> {
        (self.totals.dual_rounds > 0)
            .then(|| self.totals.feedbacks as f64 / self.totals.dual_rounds as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BarrierProblem;
    use crate::model::Utility;
    use crate::solver::{newton_solve, SolverConfig};

    #[test]
    fn conservation_on_fig1() {
        let n = Network::new(
            vec![vec![0, 2, 3], vec![1, 2, 4]],
            vec![1.0; 5],
            vec![Utility::log(1.0), Utility::log(1.0)],
        )
        .unwrap();
        let p = BarrierProblem::new(&n, 1.0, 1.0).unwrap();
        let (_, t) = newton_solve(&p, &SolverConfig::default()).unwrap();
        let m = MessageMetrics::from_trace(&n, &t);
        assert_eq!(m.feedbacks_per_round(), Some(2.0));
        assert_eq!(m.totals.dual_rounds, t.total_dual_iters());
        assert_eq!(m.totals.pushes, 6 * t.total_dual_iters());
        let certified: usize = t
            .records
            .iter()
            .map(|r| r.certificate.as_ref().unwrap().dual_iters)
            .sum();
        assert_eq!(m.totals.dual_rounds, certified);
    }
}
