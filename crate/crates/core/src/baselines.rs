//! First-order dual price methods used for comparison: plain projected
//! subgradient and a diagonally scaled variant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{eval_h, Network};
use crate::trace::{IterationRecord, Phase, Termination, Trace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FirstOrderConfig {
    pub stepsize: f64,
    pub max_iters: usize,
    /// Upper clamp on source rates; defaults to the largest capacity.
    pub rate_cap: Option<f64>,
    /// Reference `h*`; enables the band stopping rule.
    pub reference_h: Option<f64>,
    /// Relative half-width of the band around `h*`.
    pub band: f64,
    /// Consecutive in-band iterations required to stop.
    pub hold: usize,
    /// Lower clamp on the per-link curvature of the scaled method.
    pub curvature_floor: f64,
    pub initial_price: f64,
    /// When set, an iterate only counts as in-band if its largest capacity
    /// violation relative to the largest capacity is at most this value.
    pub feasibility_tol: Option<f64>,
}

impl Default for FirstOrderConfig {
    fn default() -> Self {
        FirstOrderConfig {
            stepsize: 1e-2,
            max_iters: 200_000,
            rate_cap: None,
            reference_h: None,
            band: 0.05,
            hold: 50,
            curvature_floor: 1e-6,
            initial_price: 0.0,
            feasibility_tol: None,
        }
    }
}

/// How the price step is scaled per link.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scaling {
    /// `w <- max(0, w + a g)`
    Identity,
    /// `w_l <- max(0, w_l + a g_l / kappa_l)` with
    /// `kappa_l = sum_{i in S(l)} 1 / |U_i''(s_i)|`.
    Diagonal,
}

#[derive(Clone, Debug)]
pub struct FirstOrderResult {
    pub rates: Vec<f64>,
    pub prices: Vec<f64>,
    pub trace: Trace,
    /// Price updates done when the final stay in the band began.
    pub band_entry: Option<usize>,
}

impl FirstOrderResult {
    pub fn converged(&self) -> bool {
        self.trace.termination == Termination::Converged
    }
}

fn best_responses(network: &Network, w: &[f64], cap: f64) -> Vec<f64> {
    network
        .routes()
        .iter()
        .zip(network.utilities())
        .map(|(r, u)| u.best_response(r.iter().map(|&l| w[l]).sum(), cap))
        .collect()
}

/// Shared dual iteration; each loop pass is one counted iteration.
pub fn dual_price_method(
    network: &Network,
    cfg: &FirstOrderConfig,
    scaling: Scaling,
) -> Result<FirstOrderResult> {
    if !(cfg.stepsize > 0.0 && cfg.stepsize.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "stepsize must be positive, got {}",
            cfg.stepsize
        )));
    }
    if !(cfg.band > 0.0) || cfg.hold == 0 {
        return Err(Error::InvalidConfig(
            "band and hold must be positive".into(),
        ));
    }
    let caps = network.capacities();
    let max_cap = caps.iter().cloned().fold(0.0, f64::max);
    let cap = cfg.rate_cap.unwrap_or(max_cap);
    let mut w = vec![cfg.initial_price.max(0.0); network.num_links()];
    let mut records = Vec::new();
    let mut in_band = 0usize;
    let mut band_entry = None;
    let mut termination = Termination::IterationCap;
    let mut rates = best_responses(network, &w, cap);
    for k in 0..cfg.max_iters {
        let loads = network.link_loads(&rates);
        let h = eval_h(network, &rates);
        let slack: Vec<f64> = caps.iter().zip(&loads).map(|(c, l)| c - l).collect();
        let min_slack = slack.iter().cloned().fold(f64::INFINITY, f64::min);
        let violation = slack.iter().map(|s| (-s).max(0.0)).fold(0.0, f64::max) / max_cap;
        let mut x = rates.clone();
        x.extend(&slack);
        records.push(IterationRecord {
            k,
            f: h,
            h,
            lambda_tilde: 0.0,
            theta: 0.0,
            stepsize: cfg.stepsize,
            phase: Phase::FirstOrder,
            dual_iters: 1,
            consensus_rounds: 0,
            summation_rounds: 0,
            min_slack,
            feas_residual: violation,
            certificate: None,
            x,
        });
        if let Some(href) = cfg.reference_h {
            let feasible = cfg.feasibility_tol.is_none_or(|t| violation <= t);
            if feasible && (h - href).abs() <= cfg.band * href.abs() {
                if in_band == 0 {
                    band_entry = Some(k);
                }
                in_band += 1;
                if in_band >= cfg.hold {
                    termination = Termination::Converged;
                    break;
                }
            } else {
                in_band = 0;
                band_entry = None;
            }
        }
        for l in 0..w.len() {
            let g = loads[l] - caps[l];
            let kappa = match scaling {
                Scaling::Identity => 1.0,
                Scaling::Diagonal => network
                    .users(l)
                    .iter()
                    .map(|&i| 1.0 / network.utilities()[i].d2(rates[i].max(1e-12)).abs())
                    .sum::<f64>()
                    .max(cfg.curvature_floor),
            };
            w[l] = (w[l] + cfg.stepsize * g / kappa).max(0.0);
        }
        if w.iter().any(|v| !v.is_finite() || *v > 1e12) {
            return Err(Error::Divergence(k));
        }
        rates = best_responses(network, &w, cap);
    }
    let method = match scaling {
        Scaling::Identity => "subgradient",
        Scaling::Diagonal => "diagonal-scaled",
    };
    Ok(FirstOrderResult {
        rates,
        prices: w,
        trace: Trace {
            method: method.into(),
            mu: 0.0,
            scale: 1.0,
            termination,
            dual_graph: None,
            records,
        },
        band_entry,
    })
}

pub fn subgradient_solve(network: &Network, cfg: &FirstOrderConfig) -> Result<FirstOrderResult> {
    dual_price_method(network, cfg, Scaling::Identity)
}

pub fn diagonal_scaled_solve(
    network: &Network,
    cfg: &FirstOrderConfig,
) -> Result<FirstOrderResult> {
    dual_price_method(network, cfg, Scaling::Diagonal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Utility;

    fn single(weight: f64, c: f64) -> Network {
        Network::new(vec![vec![0]], vec![c], vec![Utility::log(weight)]).unwrap()
    }

    #[test]
    fn single_link_fixed_point() {
        let n = single(1.0, 1.0);
        let cfg = FirstOrderConfig {
            stepsize: 0.2,
            max_iters: 2000,
            rate_cap: Some(10.0),
            ..Default::default()
        };
        let r = subgradient_solve(&n, &cfg).unwrap();
        assert!((r.prices[0] - 1.0).abs() < 1e-9);
        assert!((r.rates[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_price_uses_cap() {
        let n = single(1.0, 2.0);
        let cfg = FirstOrderConfig {
            max_iters: 1,
            ..Default::default()
        };
        let r = subgradient_solve(&n, &cfg).unwrap();
        assert_eq!(r.trace.records[0].x[0], 2.0);
    }

    #[test]
    fn scaling_speeds_up_single_link() {
        // optimum w* = 4, s* = 1; plain contraction 0.875, scaled 0.5
        let n = single(4.0, 1.0);
        let cfg = FirstOrderConfig {
            stepsize: 0.5,
            max_iters: 500,
            initial_price: 1.0,
            rate_cap: Some(10.0),
            ..Default::default()
        };
        let plain = subgradient_solve(&n, &cfg).unwrap();
        let scaled = diagonal_scaled_solve(&n, &cfg).unwrap();
        let to_tol = |r: &FirstOrderResult| {
            r.trace
                .records
                .iter()
                .position(|x| (x.x[0] - 1.0).abs() < 1e-8)
                .unwrap()
        };
        assert!(to_tol(&scaled) < to_tol(&plain));
        assert!((plain.prices[0] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn unit_curvature_matches_plain() {
        // quadratic utility with curvature 1 gives kappa = 1 on a private link
        let n = Network::new(vec![vec![0]], vec![3.0], vec![Utility::quadratic(5.0, 1.0)]).unwrap();
        let cfg = FirstOrderConfig {
            stepsize: 0.3,
            max_iters: 300,
            ..Default::default()
        };
        let a = subgradient_solve(&n, &cfg).unwrap();
        let b = diagonal_scaled_solve(&n, &cfg).unwrap();
        assert_eq!(a.prices, b.prices);
        assert_eq!(a.trace.records.len(), b.trace.records.len());
    }
}
