//! The full solver: geometric filter, pictorial scoring, cycle search,
//! aggregation and the final spring relaxation.

use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate_all, resolve};
use crate::corpus::Puzzle;
use crate::cycles::{
    find_cycles, prune_graph, rank_and_cut, score_cycles, Cycle, DEFAULT_ALPHA, DEFAULT_MAX_MATINGS,
    DEFAULT_TAU,
};
use crate::error::{Error, Result};
use crate::evaluation::Solution;
use crate::geometry::Polygon;
use crate::mating_graph::{Mating, MatingGraph};
use crate::pictorial::{score_all, ExtrapolatorContract, DEFAULT_GRID_WIDTH, DEFAULT_THRESHOLD};
use crate::spring::{relax, SimConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    /// Grid width `w` in pixels.
    pub grid_width: usize,
    pub tau: f64,
    pub alpha: f64,
    pub pictorial_threshold: f64,
    pub max_matings: usize,
    /// Assumed noise level; the bundle's own level when absent.
    pub xi: Option<f64>,
    pub extrapolator: ExtrapolatorContract,
    /// Final relaxation of the whole puzzle.
    pub sim: SimConfig,
    /// Trial relaxations that score candidate cycles.
    pub cycle_sim: SimConfig,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            grid_width: DEFAULT_GRID_WIDTH,
            tau: DEFAULT_TAU,
            alpha: DEFAULT_ALPHA,
            pictorial_threshold: DEFAULT_THRESHOLD,
            max_matings: DEFAULT_MAX_MATINGS,
            xi: None,
            extrapolator: ExtrapolatorContract::default(),
            sim: SimConfig::default(),
            cycle_sim: SimConfig {
                phase1_max_steps: 5000,
                phase2_max_steps: 2000,
                phase1_kinetic_tol: 1e-8,
                ..SimConfig::default()
            },
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidParameter(what));
        if self.grid_width == 0 {
            return bad("grid width must be positive".into());
        }
        if !(self.tau >= 0.0) {
            return bad(format!("tau {}", self.tau));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha {} outside [0, 1]", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.pictorial_threshold) {
            return bad(format!("pictorial threshold {} outside [0, 1]", self.pictorial_threshold));
        }
        if self.max_matings < 3 {
            return bad(format!("max matings {} below 3", self.max_matings));
        }
        if let Some(xi) = self.xi {
            if !(xi >= 0.0 && xi.is_finite()) {
                return bad(format!("xi {xi}"));
            }
        }
        if self.extrapolator.band_width_px == 0 {
            return bad("band width must be positive".into());
        }
        self.sim.validate()?;
        self.cycle_sim.validate()
    }
}

/// Stage-by-stage counts of one solve.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_pieces: usize,
    pub epsilon: f64,
    pub links_initial: usize,
    pub links_geometric: usize,
    pub links_pictorial: usize,
    pub cycles_found: usize,
    pub cycles_kept: usize,
    pub individuals: usize,
    pub links_pruned: usize,
    pub aggregates: usize,
    pub final_matings: usize,
    pub anchor: usize,
    pub energy: f64,
    pub overlap_area: f64,
    pub phase1_steps: usize,
    pub phase2_steps: usize,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct SolveOutput {
    pub solution: Solution,
    pub diagnostics: Diagnostics,
    /// Kept cycles in rank order.
    pub cycles: Vec<Cycle>,
    pub final_graph: MatingGraph,
}

pub fn solve(puzzle: &Puzzle, config: &SolveConfig) -> Result<SolveOutput> {
    config.validate()?;
    puzzle.validate()?;
    let pieces = &puzzle.pieces;
    let polys: Vec<Polygon> = pieces.iter().map(|p| p.polygon.clone()).collect();
    let epsilon = config.xi.map_or(puzzle.meta.noise.epsilon, |xi| xi * puzzle.meta.diameter);
    let mut d = Diagnostics {
        n_pieces: pieces.len(),
        epsilon,
        ..Default::default()
    };

    let g = MatingGraph::build(pieces);
    d.links_initial = g.n_mating_links();
    let g = g.geometric_filter(epsilon);
    d.links_geometric = g.n_mating_links();
    let g = score_all(&g, pieces, &config.extrapolator, config.grid_width, config.pictorial_threshold)?;
    d.links_pictorial = g.n_mating_links();
    log::debug!(
        "{}: links {} -> {} (geometric) -> {} (pictorial)",
        puzzle.meta.name,
        d.links_initial,
        d.links_geometric,
        d.links_pictorial
    );

    let found = find_cycles(&g, config.max_matings);
    d.cycles_found = found.len();
    let scored = score_cycles(&found, &polys, config.alpha, &config.cycle_sim)?;
    let ranked = rank_and_cut(scored, pieces.len(), config.tau);
    d.cycles_kept = ranked.cycles.len();
    d.individuals = ranked.individuals.len();
    let pruned = prune_graph(&g, &ranked);
    d.links_pruned = pruned.n_mating_links();

    let aggregation = aggregate_all(&ranked, &pruned);
    d.aggregates = aggregation.aggregates.len();
    let final_graph = resolve(&aggregation.aggregates, &pruned);
    d.final_matings = final_graph.n_mating_links();
    log::debug!(
        "{}: {} cycles ({} kept), {} aggregates, {} final matings",
        puzzle.meta.name,
        d.cycles_found,
        d.cycles_kept,
        d.aggregates,
        d.final_matings
    );

    let matings: Vec<Mating> = final_graph.matings().collect();
    let r = relax(&polys, &matings, &config.sim)?;
    d.anchor = r.anchor;
    d.energy = r.energy;
    d.overlap_area = r.overlap_area;
    d.phase1_steps = r.phase1_steps;
    d.phase2_steps = r.phase2_steps;
    d.converged = r.converged;

    Ok(SolveOutput {
        solution: Solution {
            transforms: r.transforms,
            matings: matings.into_iter().collect(),
            anchor: r.anchor,
        },
        diagnostics: d,
        cycles: ranked.cycles,
        final_graph,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    use crate::corpus::{synthesize, synthetic_image, SynthSpec};

    fn puzzle(xi: f64) -> Puzzle {
        let img = synthetic_image(200, 150, 5);
        let spec = SynthSpec {
            min_pieces: 6,
            max_pieces: 9,
            xis: vec![xi],
            ..SynthSpec::default()
        };
        synthesize(&img, &spec, 5).unwrap().remove(0)
    }

    #[test]
    fn default_config_is_valid() {
        SolveConfig::default().validate().unwrap();
    }

    #[test]
    fn bad_parameters_are_rejected() {
        let d = SolveConfig::default();
        let bad = [
            SolveConfig { alpha: -0.1, ..d.clone() },
            SolveConfig { xi: Some(-1.0), ..d.clone() },
            SolveConfig { grid_width: 0, ..d.clone() },
            SolveConfig {
                cycle_sim: SimConfig { damping: 0.0, ..d.cycle_sim.clone() },
                ..d.clone()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn epsilon_defaults_to_the_bundle_noise() {
        let p = puzzle(0.0025);
        let out = solve(&p, &SolveConfig::default()).unwrap();
        assert_eq!(out.diagnostics.epsilon, p.meta.noise.epsilon);
        let c = SolveConfig {
            xi: Some(0.001),
            ..SolveConfig::default()
        };
        let out = solve(&p, &c).unwrap();
        assert_eq!(out.diagnostics.epsilon, 0.001 * p.meta.diameter);
    }

    #[test]
    fn solution_matches_final_graph() {
        let p = puzzle(0.0);
        let out = solve(&p, &SolveConfig::default()).unwrap();
        let graph: BTreeSet<Mating> = out.final_graph.matings().collect();
        assert_eq!(out.solution.matings, graph);
        assert_eq!(out.diagnostics.final_matings, graph.len());
        assert_eq!(out.solution.anchor, out.diagnostics.anchor);
        assert_eq!(out.solution.transforms.len(), p.pieces.len());
    }

    #[test]
    fn solving_is_deterministic() {
        let p = puzzle(0.001);
        let a = solve(&p, &SolveConfig::default()).unwrap();
        let b = solve(&p, &SolveConfig::default()).unwrap();
        assert_eq!(a.solution, b.solution);
        assert_eq!(a.diagnostics, b.diagnostics);
    }
}
