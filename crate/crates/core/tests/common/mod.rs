//! Shared oracles for the integration and acceptance tests.
#![allow(dead_code)]

use distcausal::ot::{Distribution1d, LevelGrid, QuantileCurve, StepCdf};
use distcausal::rng::rng_from_seed;
use rand::Rng;

/// Mass unit of the discrete corpus: every weight is a multiple of `1/UNITS`.
pub const UNITS: usize = 60;

/// Discrete measure with at most six atoms on `[0, 1]` and integer masses.
#[derive(Clone, Debug)]
pub struct Atoms {
    pub points: Vec<f64>,
    pub mass: Vec<usize>,
}

impl Atoms {
    pub fn step_cdf(&self) -> StepCdf {
        let w = self.mass.iter().map(|&m| m as f64 / UNITS as f64).collect();
        StepCdf::new(self.points.clone(), w).unwrap()
    }

    /// Quantile curve on the `UNITS`-level grid. Each cell of that grid lies
    /// inside one atom's mass interval, so the midpoint rule is exact.
    pub fn curve(&self) -> QuantileCurve {
        let g = LevelGrid::new(UNITS).unwrap();
        let cdf = self.step_cdf();
        let vals = g.levels().iter().map(|&u| cdf.quantile(u)).collect();
        QuantileCurve::new(g, vals, (0.0, 1.0)).unwrap()
    }
}

/// Fixed corpus of small discrete measures.
pub fn corpus() -> Vec<Atoms> {
    let mut rng = rng_from_seed(0xC0FFEE);
    (0..24)
        .map(|i| {
            let k = 1 + i % 6;
            let mut points: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
            points.sort_by(f64::total_cmp);
            points.dedup();
            let k = points.len();
            // positive integer masses summing to UNITS
            let mut cuts: Vec<usize> = (0..k - 1).map(|_| rng.random_range(1..UNITS)).collect();
            cuts.sort();
            cuts.dedup();
            while cuts.len() < k - 1 {
                let c = rng.random_range(1..UNITS);
                if !cuts.contains(&c) {
                    cuts.push(c);
                    cuts.sort();
                }
            }
            let mut mass = Vec::with_capacity(k);
            let mut prev = 0;
            for &c in cuts.iter().chain(std::iter::once(&UNITS)) {
                mass.push(c - prev);
                prev = c;
            }
            Atoms { points, mass }
        })
        .collect()
}

/// Squared W2 by min-cost flow on the bipartite transport graph: successive
/// shortest paths, one unit of mass at a time, Bellman-Ford on the residual.
pub fn w2_squared_by_flow(a: &Atoms, b: &Atoms) -> f64 {
    let (na, nb) = (a.points.len(), b.points.len());
    let source = na + nb;
    let sink = source + 1;
    let nodes = sink + 1;
    // edges: (to, capacity, cost, reverse index)
    let mut graph: Vec<Vec<(usize, i64, f64, usize)>> = vec![Vec::new(); nodes];
    let add = |g: &mut Vec<Vec<(usize, i64, f64, usize)>>, u: usize, v: usize, cap: i64, cost: f64| {
        let ru = g[v].len();
        let rv = g[u].len();
        g[u].push((v, cap, cost, ru));
        g[v].push((u, 0, -cost, rv));
    };
    for i in 0..na {
        add(&mut graph, source, i, a.mass[i] as i64, 0.0);
        for j in 0..nb {
            let d = a.points[i] - b.points[j];
            add(&mut graph, i, na + j, UNITS as i64, d * d);
        }
    }
    for j in 0..nb {
        add(&mut graph, na + j, sink, b.mass[j] as i64, 0.0);
    }
    let mut total = 0.0;
    for _ in 0..UNITS {
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; nodes];
        dist[source] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if dist[u].is_infinite() {
                    continue;
                }
                for (e, &(v, cap, cost, _)) in graph[u].iter().enumerate() {
                    if cap > 0 && dist[u] + cost < dist[v] - 1e-15 {
                        dist[v] = dist[u] + cost;
                        prev[v] = Some((u, e));
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        assert!(dist[sink].is_finite(), "flow must saturate");
        let mut v = sink;
        while let Some((u, e)) = prev[v] {
            graph[u][e].1 -= 1;
            let r = graph[u][e].3;
            graph[v][r].1 += 1;
            v = u;
        }
        total += dist[sink];
    }
    total / UNITS as f64
}

#[allow(unused_imports)]
pub use sim::*;

mod sim {
    use distcausal::nuisance::{FnOutcome, FnPropensity, OutcomeModel, PropensityModel};
    use distcausal::ot::{LevelGrid, DEFAULT_LEVELS};
    use distcausal::simlab::{dgp_sample, Scenario, SimSubject};
    use std::f64::consts::PI;

    pub fn grid() -> LevelGrid {
        LevelGrid::new(DEFAULT_LEVELS).unwrap()
    }

    pub fn sample(n: usize, scenario: Scenario, seed: u64) -> Vec<SimSubject> {
        dgp_sample(n, 1001, scenario, &grid(), seed).unwrap()
    }

    /// True conditional mean curve `E[Y^{-1} | A = a, X = x]`.
    pub fn oracle_outcome(scenario: Scenario) -> impl OutcomeModel {
        let ea = scenario.treated_share();
        let g = grid();
        FnOutcome(move |a: u8, x: &[f64]| {
            let c = -ea + a as f64 + scenario.signal(x[0]);
            g.levels().iter().map(|&u| c * (PI * u).sin() / 8.0 + u).collect()
        })
    }

    pub fn oracle_propensity(scenario: Scenario) -> impl PropensityModel {
        FnPropensity(move |x: &[f64]| scenario.propensity(x[0]))
    }
}
