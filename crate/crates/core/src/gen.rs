//! Seeded random instances with Bernoulli routing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Network, Utility};

pub const REDRAW_CAP: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub links: usize,
    pub sources: usize,
    pub prob: f64,
    #[serde(default = "default_weights")]
    pub weight_range: (f64, f64),
    #[serde(default = "default_capacities")]
    pub capacity_range: (f64, f64),
}

fn default_weights() -> (f64, f64) {
    (5.0, 15.0)
}

fn default_capacities() -> (f64, f64) {
    (20.0, 50.0)
}

impl GenSpec {
    pub fn new(links: usize, sources: usize, prob: f64) -> Self {
        GenSpec {
            links,
            sources,
            prob,
            weight_range: default_weights(),
            capacity_range: default_capacities(),
        }
    }
}

/// Draws an `L x S` 0/1 matrix; `None` when a row or column is empty.
fn draw_routing(
    rng: &mut ChaCha8Rng,
    links: usize,
    sources: usize,
    prob: f64,
) -> Option<Vec<Vec<u8>>> {
    let rows: Vec<Vec<u8>> = (0..links)
        .map(|_| (0..sources).map(|_| u8::from(rng.gen_bool(prob))).collect())
        .collect();
    let row_ok = rows.iter().all(|r| r.contains(&1));
    let col_ok = (0..sources).all(|j| rows.iter().any(|r| r[j] == 1));
    (row_ok && col_ok).then_some(rows)
}

/// Random network; whole routing matrices are redrawn until every link and
/// source is used and the instance is connected.
pub fn random_network_with(spec: &GenSpec, seed: u64) -> Result<Network> {
    if spec.links == 0 || spec.sources == 0 || !(spec.prob > 0.0 && spec.prob <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "need positive sizes and probability in (0, 1], got {spec:?}"
        )));
    }
    let (wl, wh) = spec.weight_range;
    let (cl, ch) = spec.capacity_range;
    if !(1.0 <= wl && wl <= wh && 0.0 < cl && cl <= ch) {
        return Err(Error::InvalidConfig(format!(
            "bad parameter ranges in {spec:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..REDRAW_CAP {
        let Some(rows) = draw_routing(&mut rng, spec.links, spec.sources, spec.prob) else {
            continue;
        };
        let caps: Vec<f64> = (0..spec.links).map(|_| uniform(&mut rng, cl, ch)).collect();
        let utils: Vec<Utility> = (0..spec.sources)
            .map(|_| Utility::log(uniform(&mut rng, wl, wh)))
            .collect();
        match Network::from_routing(&rows, caps, utils) {
            Ok(n) => return Ok(n),
            Err(Error::Disconnected(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::RedrawCap(REDRAW_CAP))
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

pub fn random_network(links: usize, sources: usize, prob: f64, seed: u64) -> Result<Network> {
    random_network_with(&GenSpec::new(links, sources, prob), seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let a = random_network(15, 8, 0.5, 7).unwrap();
        let b = random_network(15, 8, 0.5, 7).unwrap();
        assert_eq!(a.to_toml_string(), b.to_toml_string());
        assert_ne!(a, random_network(15, 8, 0.5, 8).unwrap());
    }

    #[test]
    fn full_routing() {
        let n = random_network(4, 3, 1.0, 1).unwrap();
        assert!((0..3).all(|i| n.route(i) == [0, 1, 2, 3]));
    }

    #[test]
    fn ranges_respected() {
        let n = random_network(15, 8, 0.5, 3).unwrap();
        assert!(n.capacities().iter().all(|&c| (20.0..50.0).contains(&c)));
        for u in n.utilities() {
            match u {
                Utility::Log { weight, .. } => assert!((5.0..15.0).contains(weight)),
                _ => panic!("unexpected family"),
            }
        }
    }

    #[test]
    fn rejects_bad_spec() {
        assert!(random_network(0, 3, 0.5, 1).is_err());
        assert!(random_network(3, 3, 0.0, 1).is_err());
    }
}
