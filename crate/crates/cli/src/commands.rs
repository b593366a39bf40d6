use std::fs;
use std::path::{Path, PathBuf};

use cpuzzle_core::corpus::{read_bundle, synthesize, synthetic_image, write_bundle, MANIFEST_FILE};
use cpuzzle_core::cycles::cycle_report;
use cpuzzle_core::evaluation::{degradation_report, evaluate, AlignMode, DegradationTable, EvalReport, Solution, SOLUTION_FILE};
use cpuzzle_core::pipeline::{solve, Diagnostics, SolveConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{EvalConfig, GenerateConfig, Layout, RenderConfig, RunConfig, MAX_SEED};
use crate::error::{CliError, Result};
use crate::render::{layout_poses, render, Rendering};

pub const DIAGNOSTICS_FILE: &str = "diagnostics.toml";
pub const CYCLES_FILE: &str = "cycles.toml";
pub const EVAL_FILE: &str = "eval.toml";
pub const REPORTS_FILE: &str = "reports.toml";
pub const DEGRADATION_FILE: &str = "degradation.toml";
pub const DEGRADATION_TABLE_FILE: &str = "degradation.txt";

fn to_toml<T: Serialize>(value: &T, what: &'static str) -> Result<String> {
    toml::to_string(value).map_err(|e| CliError::Serialize {
        what,
        message: e.to_string(),
    })
}

fn check_seed(seed: u64) -> Result<()> {
    if seed > MAX_SEED {
        return Err(CliError::Usage(format!("seed {seed} exceeds {MAX_SEED}")));
    }
    Ok(())
}

/// Directory name of the bundle for puzzle `index` at noise level `xi`.
pub fn bundle_name(index: usize, xi: f64) -> String {
    format!("p{index:03}_xi{:.2}", xi * 100.0)
}

/// Synthesizes `config.count` puzzles, one bundle per puzzle and noise
/// level, into `out`. Returns the bundle directories in creation order.
pub fn cmd_generate(out: &Path, config: &GenerateConfig) -> Result<Vec<PathBuf>> {
    check_seed(config.seed)?;
    let source = match &config.image {
        Some(path) => {
            if !path.is_file() {
                return Err(cpuzzle_core::Error::MissingFile(path.clone()).into());
            }
            Some(image::open(path)?.to_rgb8())
        }
        None => None,
    };
    let families = (0..config.count)
        .into_par_iter()
        .map(|i| {
            let seed = config.seed.wrapping_add(i as u64);
            let img = match &source {
                Some(img) => img.clone(),
                None => synthetic_image(config.synthetic_width, config.synthetic_height, seed),
            };
            synthesize(&img, &config.synth, seed)
        })
        .collect::<cpuzzle_core::Result<Vec<_>>>()?;
    let mut dirs = Vec::new();
    for (i, family) in families.into_iter().enumerate() {
        for mut puzzle in family {
            let name = bundle_name(i, puzzle.meta.noise.xi);
            puzzle.meta.name = name.clone();
            let dir = out.join(&name);
            write_bundle(&dir, &puzzle)?;
            dirs.push(dir);
        }
    }
    let mut rc = RunConfig::new("generate", &[]);
    if let Some(p) = &config.image {
        rc.inputs.push(p.clone());
    }
    rc.generate = Some(config.clone());
    rc.write_into(out)?;
    log::info!("wrote {} bundles to {}", dirs.len(), out.display());
    Ok(dirs)
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub solution: Solution,
    pub diagnostics: Diagnostics,
    pub solution_path: PathBuf,
}

/// Solves the bundle in `bundle` and writes the solution, diagnostics, the
/// kept cycles and the run configuration into `out`. A solve whose final
/// relaxation did not converge still writes everything.
pub fn cmd_solve(bundle: &Path, out: &Path, config: &SolveConfig) -> Result<SolveResult> {
    check_seed(config.sim.rng_seed)?;
    check_seed(config.cycle_sim.rng_seed)?;
    let puzzle = read_bundle(bundle)?;
    let output = solve(&puzzle, config)?;
    fs::create_dir_all(out)?;
    let solution_path = out.join(SOLUTION_FILE);
    output.solution.write(&solution_path)?;
    fs::write(out.join(DIAGNOSTICS_FILE), to_toml(&output.diagnostics, "diagnostics")?)?;
    fs::write(out.join(CYCLES_FILE), cycle_report(&output.cycles))?;
    let mut rc = RunConfig::new("solve", &[bundle]);
    rc.solve = Some(config.clone());
    rc.write_into(out)?;
    Ok(SolveResult {
        solution: output.solution,
        diagnostics: output.diagnostics,
        solution_path,
    })
}

/// Evaluates `solution` against the bundle's ground truth and writes the
/// report to `out` with the run configuration beside it.
pub fn cmd_eval(bundle: &Path, solution: &Path, align: AlignMode, out: &Path) -> Result<EvalReport> {
    let puzzle = read_bundle(bundle)?;
    let sol = Solution::read(solution)?;
    let report = evaluate(&puzzle, &sol, align)?;
    let dir = out.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    fs::write(out, report.to_toml()?)?;
    let mut rc = RunConfig::new("eval", &[bundle, solution]);
    rc.eval = Some(EvalConfig { align });
    rc.write_into(dir)?;
    Ok(report)
}

/// Renders the bundle's pieces in `config.layout` to the PNG file `out`.
pub fn cmd_render(bundle: &Path, config: &RenderConfig, out: &Path) -> Result<Rendering> {
    let puzzle = read_bundle(bundle)?;
    let solution = config.solution.as_deref().map(Solution::read).transpose()?;
    let layout = match (config.layout, &solution) {
        (Layout::Gt, Some(_)) => Layout::Solution,
        (l, _) => l,
    };
    let poses = layout_poses(&puzzle, layout, solution.as_ref())?;
    let r = render(&puzzle, &poses, config.outlines);
    let dir = out.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    r.image.save_with_format(out, image::ImageFormat::Png)?;
    let mut inputs: Vec<&Path> = vec![bundle];
    if let Some(s) = &config.solution {
        inputs.push(s);
    }
    let mut rc = RunConfig::new("render", &inputs);
    rc.render = Some(RenderConfig {
        layout,
        ..config.clone()
    });
    rc.write_into(dir)?;
    Ok(r)
}

/// Bundle directories directly under `corpus`, sorted by name.
pub fn find_bundles(corpus: &Path) -> Result<Vec<PathBuf>> {
    if !corpus.is_dir() {
        return Err(cpuzzle_core::Error::MissingFile(corpus.to_path_buf()).into());
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(corpus)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::EmptyCorpus(corpus.to_path_buf()));
    }
    Ok(dirs)
}

#[derive(Clone, Debug)]
pub struct BatchEntry {
    pub bundle: PathBuf,
    pub report: EvalReport,
    pub diagnostics: Diagnostics,
    pub monogamous: bool,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct BatchResult {
    pub entries: Vec<BatchEntry>,
    pub table: DegradationTable,
}

#[derive(Serialize)]
struct ReportsFile<'a> {
    report: Vec<&'a EvalReport>,
}

/// Solves and evaluates every bundle under `corpus`, writing per-bundle
/// outputs to `out/<bundle>/` and the per-noise-level summary to `out`.
pub fn cmd_batch(corpus: &Path, out: &Path, config: &SolveConfig, align: AlignMode) -> Result<BatchResult> {
    let bundles = find_bundles(corpus)?;
    let entries = bundles
        .par_iter()
        .map(|bundle| {
            let name = bundle.file_name().map(PathBuf::from).unwrap_or_default();
            let dir = out.join(name);
            let start = std::time::Instant::now();
            let solved = cmd_solve(bundle, &dir, config)?;
            let seconds = start.elapsed().as_secs_f64();
            let report = cmd_eval(bundle, &solved.solution_path, align, &dir.join(EVAL_FILE))?;
            log::info!(
                "{}: P {:.3} R {:.3} F1 {:.3} Q_pos {:.3} ({seconds:.1} s)",
                bundle.display(),
                report.precision,
                report.recall,
                report.f1,
                report.q_pos
            );
            Ok(BatchEntry {
                bundle: bundle.clone(),
                monogamous: solved.solution.is_monogamous(),
                report,
                diagnostics: solved.diagnostics,
                seconds,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<EvalReport> = entries.iter().map(|e| e.report.clone()).collect();
    let table = degradation_report(&reports);
    fs::create_dir_all(out)?;
    fs::write(out.join(REPORTS_FILE), to_toml(&ReportsFile { report: reports.iter().collect() }, "reports")?)?;
    fs::write(out.join(DEGRADATION_FILE), table.to_toml()?)?;
    fs::write(out.join(DEGRADATION_TABLE_FILE), table.to_string())?;
    let inputs: Vec<&Path> = vec![corpus];
    let mut rc = RunConfig::new("batch", &inputs);
    rc.solve = Some(config.clone());
    rc.eval = Some(EvalConfig { align });
    rc.write_into(out)?;
    Ok(BatchResult { entries, table })
}
