//! Config-driven scenario runner behind the `discs` binary.
//!
//! A run validates its JSON config, executes a chain of stages, and writes
//! `results.json` plus per-object CSV/JSON files. Once a stage fails the
//! remaining stages are listed as skipped. Nothing touches the disk until the
//! config has been validated, and every file is written through a temporary
//! name and renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bishop::{self, BishopOptions, BishopSolution, GraphManifold};
use crate::boundary::BoundaryGrid;
use crate::conjugation;
use crate::frames::{self, FrameLoop, StructuredFrame};
use crate::globevnik::{self, AttachmentTarget, DiscParameters, FixedCenterFamily};
use crate::report::Report;
use crate::twist;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioName {
    #[value(name = "bishop-solve")]
    BishopSolve,
    #[value(name = "reference-disc")]
    ReferenceDisc,
    #[value(name = "r1-indices")]
    R1Indices,
    #[value(name = "twist-indices")]
    TwistIndices,
    #[value(name = "globevnik-family")]
    GlobevnikFamily,
    #[value(name = "step4-verify")]
    Step4Verify,
    #[value(name = "full-pipeline")]
    FullPipeline,
}

impl ScenarioName {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::BishopSolve => "bishop-solve",
            Self::ReferenceDisc => "reference-disc",
            Self::R1Indices => "r1-indices",
            Self::TwistIndices => "twist-indices",
            Self::GlobevnikFamily => "globevnik-family",
            Self::Step4Verify => "step4-verify",
            Self::FullPipeline => "full-pipeline",
        }
    }
}

/// Command line of the `discs` binary.
#[derive(Debug, Clone, Parser)]
#[command(name = "discs", version, about = "Analytic disc experiments driven by a JSON config")]
pub struct Args {
    pub scenario: ScenarioName,
    pub config: PathBuf,
    /// Output directory for results.json and the CSV files.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides `grid_size`.
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// Overrides `tolerances.solver`.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub solver: f64,
    pub holomorphy: f64,
    /// Relative singular-value cutoff.
    pub rank: f64,
    pub center: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            solver: 1e-10,
            holomorphy: 1e-10,
            rank: 1e-8,
            center: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TargetConfig {
    Linear,
    Quadratic { strength: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FamilyConfig {
    /// Half-width of the parameter box swept by the family checks.
    pub radius: f64,
    /// Sample points per parameter axis.
    pub points: usize,
    /// Radius of the derivative check.
    pub rho: f64,
    /// Angles sampled by the derivative and foliation checks.
    pub angles: usize,
    pub target: TargetConfig,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self {
            radius: 0.01,
            points: 5,
            rho: 0.1,
            angles: 16,
            target: TargetConfig::Linear,
        }
    }
}

fn default_rho0() -> f64 {
    0.1
}

fn default_grid() -> usize {
    256
}

fn default_eps() -> f64 {
    twist::INDEX_EPS
}

fn default_rho_eps() -> f64 {
    0.05
}

/// Experiment configuration; every field but `manifold` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub manifold: Value,
    #[serde(default = "default_rho0")]
    pub rho0: f64,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    /// Real initial value for `bishop-solve`; zero by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
    /// Twist orders; `(1, 2, …, 2)` by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ells: Option<Vec<u32>>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_rho_eps")]
    pub rho_eps: f64,
    #[serde(default)]
    pub family: FamilyConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// A config that passed validation.
#[derive(Debug, Clone)]
pub struct Plan {
    pub config: Config,
    pub manifold: GraphManifold,
    pub grid: BoundaryGrid,
    pub y0: Vec<f64>,
    pub ells: Vec<u32>,
}

fn require(ok: bool, msg: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg()))
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    require(v.is_finite() && v > 0.0, || format!("{name} must be positive and finite, got {v}"))
}

impl Plan {
    pub fn new(config: Config) -> Result<Self, CliError> {
        let manifold = GraphManifold::from_value(&config.manifold).map_err(|e| CliError::Config(format!("manifold: {e}")))?;
        let grid = BoundaryGrid::new(config.grid_size).map_err(|e| CliError::Config(format!("grid_size: {e}")))?;
        require(config.grid_size >= 64, || "grid_size must be at least 64".into())?;
        positive("rho0", config.rho0)?;
        positive("eps", config.eps)?;
        require(config.eps < std::f64::consts::TAU, || "eps must be below 2π".into())?;
        positive("rho_eps", config.rho_eps)?;
        require(config.rho_eps < 1.0, || "rho_eps must be below 1".into())?;
        let f = &config.family;
        positive("family.radius", f.radius)?;
        positive("family.rho", f.rho)?;
        require(f.rho < 1.0, || "family.rho must be below 1".into())?;
        require(f.points >= 2 && f.points <= 16, || "family.points must lie in 2..=16".into())?;
        require(f.angles >= 1 && f.angles <= 4096, || "family.angles must lie in 1..=4096".into())?;
        if let TargetConfig::Quadratic { strength } = f.target {
            require(strength.is_finite(), || "family.target.strength must be finite".into())?;
        }
        let t = &config.tolerances;
        for (name, v) in [("solver", t.solver), ("holomorphy", t.holomorphy), ("rank", t.rank), ("center", t.center)] {
            positive(&format!("tolerances.{name}"), v)?;
        }
        let (m, n) = (manifold.m(), manifold.n());
        let y0 = config.y0.clone().unwrap_or_else(|| vec![0.0; n]);
        require(y0.len() == n && y0.iter().all(|v| v.is_finite()), || format!("y0 needs {n} finite entries"))?;
        let dim = m + n;
        let ells = config.ells.clone().unwrap_or_else(|| {
            let mut e = vec![2; dim];
            e[0] = 1;
            e
        });
        require(ells.len() == dim, || format!("ells needs {dim} entries"))?;
        require(ells.iter().all(|&l| l <= 16), || "twist orders above 16 are not supported".into())?;
        Ok(Self {
            config,
            manifold,
            grid,
            y0,
            ells,
        })
    }

    pub fn dim(&self) -> usize {
        self.manifold.dim()
    }

    fn angles(&self) -> Vec<f64> {
        let k = self.config.family.angles;
        (0..k).map(|i| i as f64 * std::f64::consts::TAU / k as f64).collect()
    }

    fn axis(&self) -> Vec<f64> {
        let (r, p) = (self.config.family.radius, self.config.family.points);
        (0..p).map(|i| -r + 2.0 * r * i as f64 / (p - 1) as f64).collect()
    }
}

/// Reads the config file and applies command-line overrides.
pub fn load_plan(path: &Path, grid_size: Option<usize>, tol: Option<f64>) -> Result<Plan, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut config = Config::from_json(&text)?;
    if let Some(g) = grid_size {
        config.grid_size = g;
    }
    if let Some(t) = tol {
        config.tolerances.solver = t;
    }
    Plan::new(config)
}

/// Everything a run produces, before it is written to disk.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub checks: Vec<Report>,
    pub skipped: Vec<String>,
    pub failed_stage: Option<String>,
    /// `(file name, contents)`, excluding results.json.
    pub artifacts: Vec<(String, String)>,
}

impl RunOutput {
    pub fn pass(&self) -> bool {
        self.failed_stage.is_none() && self.checks.iter().all(|c| c.pass)
    }

    fn stage<I, T>(
        &mut self,
        name: &str,
        input: Option<I>,
        f: impl FnOnce(I, &mut Vec<(String, String)>) -> crate::Result<(Report, T)>,
    ) -> Option<T> {
        let Some(input) = input.filter(|_| self.failed_stage.is_none()) else {
            self.skipped.push(name.to_owned());
            return None;
        };
        match f(input, &mut self.artifacts) {
            Ok((report, out)) => {
                let pass = report.pass;
                self.checks.push(report);
                if pass {
                    Some(out)
                } else {
                    self.failed_stage = Some(name.to_owned());
                    None
                }
            }
            Err(e) => {
                self.checks.push(Report::new(name).value("error", e.to_string()).pass_if(false));
                self.failed_stage = Some(name.to_owned());
                None
            }
        }
    }

    pub fn results_json(&self, scenario: ScenarioName, config: &Config) -> String {
        #[derive(Serialize)]
        struct Results<'a> {
            scenario: &'a str,
            pass: bool,
            failed_stage: &'a Option<String>,
            skipped: &'a [String],
            checks: &'a [Report],
            config: &'a Config,
        }
        let r = Results {
            scenario: scenario.as_str(),
            pass: self.pass(),
            failed_stage: &self.failed_stage,
            skipped: &self.skipped,
            checks: &self.checks,
            config,
        };
        let mut s = serde_json::to_string_pretty(&r).expect("plain data serializes");
        s.push('\n');
        s
    }
}

fn pairs(v: &[C64]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn max_mass(b: &crate::BoundaryFunction) -> f64 {
    conjugation::negative_spectrum_mass_per_component(b)
        .into_iter()
        .fold(0.0, f64::max)
}

fn solution_report(check: &str, plan: &Plan, sol: &BishopSolution) -> Report {
    let tol = &plan.config.tolerances;
    let residual = sol.attachment_residual(&plan.manifold);
    let mass = max_mass(sol.disc.boundary());
    Report::new(check)
        .value("attachment_residual", residual)
        .value("fixed_point_residual", sol.residual)
        .value("iterations", sol.iterations)
        .value("holomorphy_mass", mass)
        .value("center", pairs(sol.disc.center_value()))
        .tolerance("solver", tol.solver)
        .tolerance("holomorphy", tol.holomorphy)
        .pass_if(residual < tol.solver && mass < tol.holomorphy)
}

fn bishop_solve(plan: &Plan, out: &mut Vec<(String, String)>) -> crate::Result<(Report, ())> {
    let w = bishop::reference_w(plan.manifold.m(), plan.config.rho0, plan.grid);
    let sol = bishop::solve_bishop(&plan.manifold, &w, &plan.y0, BishopOptions::default())?;
    out.push(("bishop_disc.csv".into(), sol.disc.boundary().to_csv_string()));
    Ok((solution_report("bishop_solve", plan, &sol).value("y0", &plan.y0), ()))
}

fn reference_stage(plan: &Plan, out: &mut Vec<(String, String)>) -> crate::Result<(Report, BishopSolution)> {
    let sol = bishop::reference_disc(&plan.manifold, plan.config.rho0, plan.grid, BishopOptions::default())?;
    out.push(("reference_disc.csv".into(), sol.disc.boundary().to_csv_string()));
    Ok((solution_report("reference_disc", plan, &sol).value("rho0", plan.config.rho0), sol))
}

fn r1_frame(plan: &Plan, sol: &BishopSolution, out: &mut Vec<(String, String)>) -> crate::Result<FrameLoop> {
    let frame = bishop::build_r1_frame(&plan.manifold, sol, BishopOptions::default())?;
    out.push(("r1_frame.json".into(), frame.to_json()));
    Ok(frame)
}

fn r1_stage(plan: &Plan, sol: &BishopSolution, out: &mut Vec<(String, String)>) -> crate::Result<(Report, FrameLoop)> {
    let frame = r1_frame(plan, sol, out)?;
    let profile = frames::partial_indices(&frame)?;
    let total = frames::total_index(&frame)?;
    let mut expected = vec![0i64; plan.dim()];
    expected[0] = 2;
    let pass = profile.partial == expected && total == 2;
    let report = Report::new("r1_indices")
        .value("partial", &profile.partial)
        .value("expected", &expected)
        .value("total", total)
        .value("certificate", &profile.certificate)
        .pass_if(pass);
    Ok((report, frame))
}

fn twist_stage(plan: &Plan, frame: &FrameLoop) -> crate::Result<(Report, StructuredFrame)> {
    let theta = StructuredFrame::from_r1(frame)?;
    let twisted = twist::twist_frame(frame, &theta, &plan.ells, plan.config.eps)?;
    let profile = frames::partial_indices(&twisted)?;
    let total = frames::total_index(&twisted)?;
    let mut expected: Vec<i64> = plan.ells.iter().map(|&l| 2 * i64::from(l)).collect();
    expected[0] += 2;
    expected.sort_by(|a, b| b.cmp(a));
    let want_total: i64 = expected.iter().sum();
    let report = Report::new("twist_indices")
        .value("ells", &plan.ells)
        .value("eps", plan.config.eps)
        .value("grid_size", twisted.grid().size())
        .value("partial", &profile.partial)
        .value("expected", &expected)
        .value("total", total)
        .value("certificate", &profile.certificate)
        .pass_if(profile.partial == expected && total == want_total);
    Ok((report, twist::twist_structured(&theta, &plan.ells, plan.config.eps)?))
}

fn structured_stage(plan: &Plan, frame: &FrameLoop) -> crate::Result<(Report, StructuredFrame)> {
    let theta = StructuredFrame::from_r1(frame)?;
    let tw = twist::twist_structured(&theta, &plan.ells, plan.config.eps)?;
    let report = Report::new("twisted_frame")
        .value("ells", &plan.ells)
        .value("eps", plan.config.eps)
        .value("grid_size", tw.grid().size())
        .value("indices", &tw.indices().partial);
    Ok((report, tw))
}

fn target_for(plan: &Plan, tw: &StructuredFrame) -> crate::Result<AttachmentTarget> {
    let frame = tw.frame()?;
    match plan.config.family.target {
        TargetConfig::Linear => AttachmentTarget::linear(&frame),
        TargetConfig::Quadratic { strength } => AttachmentTarget::quadratic(&frame, strength),
    }
}

fn family_stage(plan: &Plan, sol: &BishopSolution, tw: &StructuredFrame) -> crate::Result<(Report, FixedCenterFamily)> {
    let target = target_for(plan, tw)?;
    let family = FixedCenterFamily::new(target, &sol.disc, tw, plan.config.tolerances.solver)?;
    let a = family.first_order_coefficients()?;
    let report = Report::new("fixed_center_family")
        .value("free_parameters", family.free_dim())
        .value("a", pairs(&a))
        .value("rotation_direction", family.rotation_direction()?);
    Ok((report, family))
}

fn fixed_center_stage(plan: &Plan, family: &FixedCenterFamily, out: &mut Vec<(String, String)>) -> crate::Result<(Report, ())> {
    let tol = &plan.config.tolerances;
    let axis = plan.axis();
    let d = family.free_dim();
    let count = axis.len().pow(d as u32);
    let mut csv = String::from("index");
    for i in 1..=d {
        let _ = write!(csv, ",t_{i}");
    }
    csv.push_str(",center_shift,residual,holomorphy_mass\n");
    let (mut shift, mut residual, mut mass) = (0.0f64, 0.0f64, 0.0f64);
    for idx in 0..count {
        let mut rest = idx;
        let t: Vec<f64> = (0..d)
            .map(|_| {
                let v = axis[rest % axis.len()];
                rest /= axis.len();
                v
            })
            .collect();
        let disc = family.disc(&t)?;
        let s = disc
            .disc
            .center_value()
            .iter()
            .zip(family.center())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let m = max_mass(disc.disc.boundary());
        shift = shift.max(s);
        residual = residual.max(disc.residual);
        mass = mass.max(m);
        let _ = write!(csv, "{idx}");
        for v in &t {
            let _ = write!(csv, ",{v:e}");
        }
        let _ = writeln!(csv, ",{s:e},{:e},{m:e}", disc.residual);
    }
    out.push(("fixed_center_sweep.csv".into(), csv));
    let report = Report::new("fixed_center")
        .value("discs", count)
        .value("radius", plan.config.family.radius)
        .value("max_center_shift", shift)
        .value("max_residual", residual)
        .value("max_holomorphy_mass", mass)
        .tolerance("center", tol.center)
        .tolerance("solver", tol.solver)
        .tolerance("holomorphy", tol.holomorphy)
        .pass_if(shift < tol.center && residual < tol.solver && mass < tol.holomorphy);
    Ok((report, ()))
}

fn parameter_family_stage(
    plan: &Plan,
    sol: &BishopSolution,
    tw: &StructuredFrame,
    out: &mut Vec<(String, String)>,
) -> crate::Result<(Report, ())> {
    let tol = &plan.config.tolerances;
    let target = target_for(plan, tw)?;
    let kappas: Vec<u32> = tw.powers().iter().map(|m| 2 * m).collect();
    let dim = globevnik::param_space_dim(&tw.indices())?;
    let rank = globevnik::parameter_rank(&target, &sol.disc, tw, tol.solver)?;
    let base_center = sol.disc.center_value();
    let mut csv = String::from("param,t,center_shift,residual,holomorphy_mass\n");
    let (mut residual, mut mass) = (0.0f64, 0.0f64);
    for i in 0..dim {
        for &t in &plan.axis() {
            let mut v = vec![0.0; dim];
            v[i] = t;
            let params = DiscParameters::new(kappas.clone(), v)?;
            let d = globevnik::nearby_disc(&target, &sol.disc, tw, &params, tol.solver)?;
            let shift = d
                .disc
                .center_value()
                .iter()
                .zip(base_center)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let m = max_mass(d.disc.boundary());
            residual = residual.max(d.residual);
            mass = mass.max(m);
            let _ = writeln!(csv, "{i},{t:e},{shift:e},{:e},{m:e}", d.residual);
        }
    }
    out.push(("family_sweep.csv".into(), csv));
    let report = Report::new("parameter_family")
        .value("kappas", &kappas)
        .value("param_space_dim", dim)
        .value("jacobian_rank", rank)
        .value("max_residual", residual)
        .value("max_holomorphy_mass", mass)
        .tolerance("solver", tol.solver)
        .tolerance("holomorphy", tol.holomorphy)
        .pass_if(rank == dim && residual < tol.solver && mass < tol.holomorphy);
    Ok((report, ()))
}

/// Runs a scenario in memory.
pub fn execute(scenario: ScenarioName, plan: &Plan) -> RunOutput {
    use ScenarioName::*;
    let mut run = RunOutput::default();
    if scenario == BishopSolve {
        run.stage("bishop_solve", Some(()), |_, out| bishop_solve(plan, out));
        return run;
    }
    let sol = run.stage("reference_disc", Some(()), |_, out| reference_stage(plan, out));
    if scenario == ReferenceDisc {
        return run;
    }
    if scenario == Step4Verify {
        let frame = run.stage("r1_frame", sol.as_ref(), |s, out| {
            let f = r1_frame(plan, s, out)?;
            Ok((Report::new("r1_frame").value("grid_size", f.grid().size()), f))
        });
        let tw = run.stage("twisted_frame", frame.as_ref(), |f, _| structured_stage(plan, f));
        family_stages(&mut run, plan, sol.as_ref(), tw.as_ref());
        return run;
    }
    let frame = run.stage("r1_indices", sol.as_ref(), |s, out| r1_stage(plan, s, out));
    if scenario == R1Indices {
        return run;
    }
    let tw = run.stage("twist_indices", frame.as_ref(), |f, _| twist_stage(plan, f));
    match scenario {
        TwistIndices => {}
        GlobevnikFamily => {
            let input = sol.as_ref().zip(tw.as_ref());
            run.stage("parameter_family", input, |(s, t), out| parameter_family_stage(plan, s, t, out));
        }
        _ => family_stages(&mut run, plan, sol.as_ref(), tw.as_ref()),
    }
    run
}

fn family_stages(run: &mut RunOutput, plan: &Plan, sol: Option<&BishopSolution>, tw: Option<&StructuredFrame>) {
    let family = run.stage("fixed_center_family", sol.zip(tw), |(s, t), _| family_stage(plan, s, t));
    let family = family.as_ref();
    run.stage("fixed_center", family, |f, out| fixed_center_stage(plan, f, out));
    run.stage("derivative_leading_order", family, |f, _| {
        Ok((globevnik::derivative_check(f, plan.config.family.rho, &plan.angles())?, ()))
    });
    run.stage("foliation_rank", family, |f, _| {
        let r = globevnik::foliation_rank(f, plan.config.rho_eps, &plan.angles(), None, plan.config.tolerances.rank)?;
        Ok((r, ()))
    });
}

fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let dest = dir.join(name);
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| CliError::Io { path, source }
    };
    fs::write(&tmp, contents).map_err(io(&tmp))?;
    fs::rename(&tmp, &dest).map_err(io(&dest))
}

/// Writes the artifacts of a run, results.json last.
pub fn write_output(dir: &Path, scenario: ScenarioName, plan: &Plan, run: &RunOutput) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_owned(),
        source,
    })?;
    for (name, contents) in &run.artifacts {
        write_atomic(dir, name, contents)?;
    }
    write_atomic(dir, "results.json", &run.results_json(scenario, &plan.config))?;
    Ok(dir.join("results.json"))
}

/// Loads, runs and writes one scenario; `Ok(true)` iff every check passed.
pub fn run(args: &Args) -> Result<bool, CliError> {
    let plan = load_plan(&args.config, args.grid_size, args.tol)?;
    let output = execute(args.scenario, &plan);
    write_output(&args.out, args.scenario, &plan, &output)?;
    for c in &output.checks {
        println!("{:<26} {}", c.check, if c.pass { "pass" } else { "FAIL" });
    }
    for s in &output.skipped {
        println!("{s:<26} skipped");
    }
    Ok(output.pass())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(extra: &str) -> Config {
        Config::from_json(&format!(r#"{{"manifold": {{"m": 1, "n": 1, "terms": []}}{extra}}}"#)).unwrap()
    }

    #[test]
    fn defaults_fill_in() {
        let c = flat("");
        assert_eq!(c.grid_size, 256);
        assert_eq!(c.tolerances, Tolerances::default());
        let p = Plan::new(c).unwrap();
        assert_eq!(p.ells, vec![1, 2]);
        assert_eq!(p.y0, vec![0.0]);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(Config::from_json(r#"{"manifold": {"m": 1, "n": 1, "terms": []}, "bogus": 1}"#).is_err());
        assert!(Config::from_json("{").is_err());
        for extra in [
            r#", "grid_size": 100"#,
            r#", "rho0": -1"#,
            r#", "ells": [1]"#,
            r#", "y0": [0, 0]"#,
            r#", "tolerances": {"solver": 0}"#,
            r#", "family": {"points": 1}"#,
        ] {
            assert!(Plan::new(flat(extra)).is_err(), "{extra}");
        }
        let bad = Config::from_json(r#"{"manifold": {"m": 0, "n": 1, "terms": []}}"#).unwrap();
        assert!(Plan::new(bad).is_err());
    }

    #[test]
    fn bishop_solve_flat_is_exact() {
        let plan = Plan::new(flat(r#", "y0": [0.3]"#)).unwrap();
        let run = execute(ScenarioName::BishopSolve, &plan);
        assert!(run.pass());
        assert_eq!(run.checks[0].get_f64("attachment_residual"), Some(0.0));
    }

    #[test]
    fn failure_skips_later_stages() {
        // (1, 1) twists do not give (4, 4), so the family cannot be built
        let plan = Plan::new(flat(r#", "ells": [1, 1]"#)).unwrap();
        let run = execute(ScenarioName::Step4Verify, &plan);
        assert!(!run.pass());
        assert_eq!(run.failed_stage.as_deref(), Some("fixed_center_family"));
        assert_eq!(run.skipped, ["fixed_center", "derivative_leading_order", "foliation_rank"]);
    }
}
