use cpuzzle_core::corpus::{read_bundle, synthesize, synthetic_image, write_bundle, Puzzle, SynthSpec};
use cpuzzle_core::evaluation::{evaluate, prf, truth_matings, AlignMode, Solution};
use cpuzzle_core::mating_graph::MatingGraph;
use cpuzzle_core::pipeline::{solve, SolveConfig};
use cpuzzle_core::ErrorKind;

fn family(seed: u64) -> Vec<Puzzle> {
    let img = synthetic_image(240, 180, seed);
    let spec = SynthSpec {
        min_pieces: 6,
        max_pieces: 12,
        ..SynthSpec::default()
    };
    synthesize(&img, &spec, seed).unwrap()
}

#[test]
fn noiseless_solve_is_exact() {
    for seed in 0..3 {
        let p = family(seed).remove(0);
        let out = solve(&p, &SolveConfig::default()).unwrap();
        let r = evaluate(&p, &out.solution, AlignMode::Anchor).unwrap();
        assert_eq!(r.precision, 1.0, "seed {seed}");
        assert!(r.recall >= 0.6, "seed {seed}: recall {}", r.recall);
        assert!(out.solution.is_monogamous());
        assert!(out.final_graph.is_monogamous());
        assert!(out.diagnostics.converged);
        assert!(r.q_pos > 0.9, "seed {seed}: q_pos {}", r.q_pos);
    }
}

#[test]
fn noisy_solves_stay_monogamous_and_bounded() {
    for p in family(7).into_iter().skip(1) {
        let out = solve(&p, &SolveConfig::default()).unwrap();
        let r = evaluate(&p, &out.solution, AlignMode::Best).unwrap();
        assert!(out.solution.is_monogamous());
        assert!((0.0..=1.0).contains(&r.f1));
        assert!((0.0..=1.0).contains(&r.q_pos));
        let d = &out.diagnostics;
        assert!(d.links_geometric <= d.links_initial);
        assert!(d.links_pictorial <= d.links_geometric);
        assert!(d.cycles_kept <= d.cycles_found);
    }
}

#[test]
fn geometric_filter_keeps_truth_at_every_noise_level() {
    for p in family(11) {
        let kept = MatingGraph::build(&p.pieces).geometric_filter(p.meta.noise.epsilon);
        for m in &p.ground_truth.matings {
            assert!(kept.has_link(m), "xi {}: lost {m}", p.meta.noise.xi);
        }
    }
}

#[test]
fn bundle_round_trip_preserves_solution_quality() {
    let dir = tempfile::tempdir().unwrap();
    let p = family(2).remove(0);
    write_bundle(dir.path(), &p).unwrap();
    let back = read_bundle(dir.path()).unwrap();
    assert_eq!(back.pieces.len(), p.pieces.len());
    assert_eq!(truth_matings(&back), truth_matings(&p));
    let a = solve(&p, &SolveConfig::default()).unwrap();
    let b = solve(&back, &SolveConfig::default()).unwrap();
    assert_eq!(a.solution.matings, b.solution.matings);
}

#[test]
fn ground_truth_scores_perfectly() {
    for p in family(4) {
        let gt = Solution::ground_truth(&p);
        let r = evaluate(&p, &gt, AlignMode::Anchor).unwrap();
        assert_eq!((r.precision, r.recall, r.f1, r.q_pos), (1.0, 1.0, 1.0, 1.0));
        let s = prf(&gt.matings, &truth_matings(&p));
        assert_eq!(s.f1, 1.0);
    }
}

#[test]
fn solution_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = family(5).remove(0);
    let out = solve(&p, &SolveConfig::default()).unwrap();
    let path = dir.path().join("solution.toml");
    out.solution.write(&path).unwrap();
    assert_eq!(Solution::read(&path).unwrap(), out.solution);
}

#[test]
fn invalid_configuration_is_rejected() {
    let p = family(1).remove(0);
    let config = SolveConfig {
        alpha: 1.5,
        ..SolveConfig::default()
    };
    let err = solve(&p, &config).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Validation);
}

#[test]
fn missing_bundle_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = read_bundle(&dir.path().join("absent")).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Io);
}
