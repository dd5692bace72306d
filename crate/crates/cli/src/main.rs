//! `hullscope`: command-line driver for the hidden-disc pipeline.
//!
//! Exit codes: 0 on success, 2 when the input is invalid (bad scene, bad
//! fixture, a sequence failing the requested check), 3 on a numerical
//! failure. Numerical failures name the body pair on stderr.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hullscope_core::arrangement::{self, build_with_crossings, verify_with};
use hullscope_core::discs::{all_crossings, general_position, read_fixture, write_fixture, DiscError, PerturbPolicy};
use hullscope_core::ds::{self, lambda_brute, lambda_closed, LabelSequence, Lambda};
use hullscope_core::pipeline::{
    analyze_body, hull_feature_report, load_scene, pair_curve, pair_disc, random_scene, scaling_experiment,
    AnalysisOptions, ExperimentConfig, FamilyParams, PipelineError, Scene,
};
use hullscope_core::preseam::TracePolicy;
use hullscope_core::Exec;

#[derive(Parser)]
#[command(name = "hullscope", version, about = "Hidden discs, arrangements and hull feature counts for scenes of convex bodies")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Seed for perturbations and random scenes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Tolerance on the face-area sum of an arrangement (steradians).
    #[arg(long, global = true, default_value_t = arrangement::AREA_TOLERANCE)]
    tol_area: f64,
    /// Maximum tangent turn between consecutive curve samples (radians).
    #[arg(long, global = true, default_value_t = TracePolicy::default().max_turn)]
    tol_turn: f64,
    /// Initial number of meridians per traced curve.
    #[arg(long, global = true, default_value_t = TracePolicy::default().initial)]
    samples: usize,
    /// Run every loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Trace the pre-seam of one body pair as a table.
    Trace {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        body: usize,
        #[arg(long)]
        other: usize,
    },
    /// Write the hidden discs of one body as a fixture, one record per line.
    Discs {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        body: usize,
        /// Also write the pairwise boundary crossings to this table.
        #[arg(long)]
        crossings: Option<PathBuf>,
    },
    /// Build, verify and report the arrangement of a disc fixture.
    Arrange {
        #[arg(long)]
        fixture: PathBuf,
    },
    /// Check label sequences, or tabulate the maximum sequence lengths.
    Ds {
        /// One sequence per line: letters, or integers separated by commas or spaces.
        #[arg(long, required_unless_present = "table")]
        file: Option<PathBuf>,
        /// Read sequences cyclically.
        #[arg(long)]
        cyclic: bool,
        /// Fail unless every sequence has order at most this.
        #[arg(long)]
        order: Option<usize>,
        /// Tabulate lengths for n ≤ max-n and s ≤ max-s.
        #[arg(long)]
        table: bool,
        #[arg(long, default_value_t = 6)]
        max_n: usize,
        #[arg(long, default_value_t = 4)]
        max_s: usize,
    },
    /// Per-body hull feature report of a scene.
    Analyze {
        #[arg(long, required_unless_present = "random")]
        scene: Option<PathBuf>,
        /// Generate a random scene of this many bodies instead.
        #[arg(long, conflicts_with = "scene")]
        random: Option<usize>,
        #[arg(long, value_enum, default_value_t = FamilyArg::Ellipsoids)]
        family: FamilyArg,
        /// Save the generated scene here.
        #[arg(long, requires = "random")]
        save_scene: Option<PathBuf>,
        /// Report only this body.
        #[arg(long)]
        body: Option<usize>,
    },
    /// Feature counts over random scenes of growing size.
    Experiment {
        #[arg(long, value_enum, default_value_t = FamilyArg::Ellipsoids)]
        family: FamilyArg,
        #[arg(long, value_delimiter = ',', default_values_t = [4, 8, 16])]
        ns: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        trials: usize,
        /// Wall-time table, kept apart so the main table is reproducible.
        #[arg(long)]
        timings: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Spheres,
    Ellipsoids,
}

impl FamilyArg {
    fn params(self) -> FamilyParams {
        match self {
            FamilyArg::Spheres => FamilyParams::spheres(),
            FamilyArg::Ellipsoids => FamilyParams::ellipsoids(),
        }
    }
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

impl From<DiscError> for Failure {
    fn from(e: DiscError) -> Self {
        match e {
            DiscError::Record(_) => Failure::Validation(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Validation(format!("io error: {e}"))
    }
}

impl Common {
    fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }

    fn trace(&self) -> TracePolicy {
        TracePolicy { initial: self.samples, max_turn: self.tol_turn, ..TracePolicy::default() }.with_exec(self.exec())
    }

    fn options(&self) -> AnalysisOptions {
        AnalysisOptions { trace: self.trace(), area_tolerance: self.tol_area, seed: self.seed, ..AnalysisOptions::default() }
            .with_exec(self.exec())
    }

    fn check(&self) -> Result<(), Failure> {
        if !(self.tol_area > 0.0) || !(self.tol_turn > 0.0) {
            return Err(Failure::Validation("tolerances must be positive".into()));
        }
        if self.samples < 8 {
            return Err(Failure::Validation("--samples must be at least 8".into()));
        }
        Ok(())
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: serde::Serialize>(path: &Option<PathBuf>, value: &T) -> Result<(), Failure> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::Validation(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn body_index(scene: &Scene, i: usize) -> Result<(), Failure> {
    if i >= scene.len() {
        return Err(Failure::Validation(format!("body {i} out of range (scene has {} bodies)", scene.len())));
    }
    Ok(())
}

fn trace(common: &Common, scene: &Path, body: usize, other: usize) -> Result<(), Failure> {
    let scene = load_scene(scene)?;
    body_index(&scene, body)?;
    body_index(&scene, other)?;
    if body == other {
        return Err(Failure::Validation("--body and --other must differ".into()));
    }
    let curve = pair_curve(&scene, body, other, &common.trace())?;
    let mut w = output(&common.out)?;
    curve.write_table(&mut w)?;
    w.flush()?;
    Ok(())
}

fn discs(common: &Common, scene: &Path, body: usize, crossings: &Option<PathBuf>) -> Result<(), Failure> {
    let scene = load_scene(scene)?;
    body_index(&scene, body)?;
    let policy = common.trace();
    let others: Vec<usize> = (0..scene.len()).filter(|&j| j != body).collect();
    let discs = common.exec().try_map(&others, |&j| pair_disc(&scene, body, j, &policy))?;
    let mut w = output(&common.out)?;
    write_fixture(&discs, &mut w)?;
    w.flush()?;
    if let Some(path) = crossings {
        let pairs = all_crossings(&discs, common.exec())?;
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "a,b,x,y,z,param_a,param_b,angle,sign")?;
        for ((a, b), points) in &pairs {
            for c in points {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{}",
                    discs[*a].label,
                    discs[*b].label,
                    c.position.x,
                    c.position.y,
                    c.position.z,
                    c.params.0,
                    c.params.1,
                    c.angle,
                    c.sign
                )?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

fn arrange(common: &Common, fixture: &Path) -> Result<(), Failure> {
    let records = read_fixture(BufReader::new(File::open(fixture)?))?;
    let policy = common.trace();
    let discs = common.exec().try_map(&records, |r| r.to_disc(&policy))?;
    let gp = general_position(&discs, common.seed, PerturbPolicy::WhenNeeded, common.exec())?;
    let arr = build_with_crossings(&gp.discs, &gp.crossings).map_err(|e| Failure::Numerical(e.to_string()))?;
    verify_with(&arr, common.tol_area).map_err(|e| Failure::Numerical(e.to_string()))?;
    write_json(&common.out, &arrangement::report(&arr))
}

fn parse_sequence(line: &str, cyclic: bool) -> Result<LabelSequence, String> {
    let t = line.trim();
    let seq = if t.chars().all(|c| c.is_ascii_alphabetic()) {
        LabelSequence::from_letters(t, cyclic)
    } else {
        let symbols = t
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<usize>().map_err(|e| format!("{s:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        LabelSequence::new(symbols, cyclic)
    };
    seq.map_err(|e| e.to_string())
}

fn ds_check(common: &Common, file: &Path, cyclic: bool, order: Option<usize>) -> Result<(), Failure> {
    let text = fs::read_to_string(file)?;
    let mut w = output(&common.out)?;
    writeln!(w, "line,length,symbols,max_alternation,minimal_order,ok")?;
    let mut failed = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let seq = parse_sequence(line, cyclic).map_err(|e| Failure::Validation(format!("line {}: {e}", k + 1)))?;
        let ok = order.is_none_or(|s| ds::is_davenport_schinzel(&seq, s));
        if !ok {
            failed.push(k + 1);
        }
        writeln!(
            w,
            "{},{},{},{},{},{}",
            k + 1,
            seq.len(),
            seq.alphabet().len(),
            ds::max_alternation(&seq),
            ds::minimal_order(&seq),
            ok
        )?;
    }
    w.flush()?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Validation(format!("sequences exceed order {} on lines {failed:?}", order.unwrap_or(0))))
    }
}

fn ds_table(common: &Common, max_n: usize, max_s: usize) -> Result<(), Failure> {
    let mut w = output(&common.out)?;
    writeln!(w, "n,s,brute,closed_kind,closed_value,closed_estimate")?;
    for s in 1..=max_s {
        for n in 0..=max_n {
            let brute = match lambda_brute(n, s) {
                Ok(v) => v.to_string(),
                Err(_) => String::new(),
            };
            let (kind, value, estimate) = match lambda_closed(n as u64, s as u64) {
                Lambda::Exact { value } => ("exact", value, String::new()),
                Lambda::UpperBound { bound, estimate } => ("upper-bound", bound, estimate.to_string()),
            };
            writeln!(w, "{n},{s},{brute},{kind},{value},{estimate}")?;
        }
    }
    w.flush()?;
    Ok(())
}

fn analyze(
    common: &Common,
    scene: &Option<PathBuf>,
    random: Option<usize>,
    family: FamilyArg,
    save_scene: &Option<PathBuf>,
    body: Option<usize>,
) -> Result<(), Failure> {
    let scene = match (scene, random) {
        (Some(path), _) => load_scene(path)?,
        (None, Some(n)) => random_scene(n, &family.params(), common.seed),
        (None, None) => return Err(Failure::Validation("either --scene or --random is required".into())),
    };
    if let Some(path) = save_scene {
        fs::write(path, scene.to_json())?;
    }
    let options = common.options();
    match body {
        Some(i) => {
            body_index(&scene, i)?;
            write_json(&common.out, &analyze_body(&scene, i, &options)?)
        }
        None => write_json(&common.out, &hull_feature_report(&scene, &options)?),
    }
}

fn experiment(
    common: &Common,
    family: FamilyArg,
    ns: &[usize],
    trials: usize,
    timings: &Option<PathBuf>,
) -> Result<(), Failure> {
    if ns.is_empty() || ns.contains(&0) || trials == 0 {
        return Err(Failure::Validation("--ns must be positive sizes and --trials at least 1".into()));
    }
    let config = ExperimentConfig {
        ns: ns.to_vec(),
        trials,
        seed: common.seed,
        family: family.params(),
        options: common.options(),
    };
    let (table, times) = scaling_experiment(&config)?;
    let mut w = output(&common.out)?;
    table.write_csv(&mut w)?;
    w.flush()?;
    if let Some(path) = timings {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "n,trial,seconds")?;
        for t in &times {
            writeln!(w, "{},{},{}", t.n, t.trial, t.seconds)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let common = &cli.common;
    common.check()?;
    match &cli.command {
        Command::Trace { scene, body, other } => trace(common, scene, *body, *other),
        Command::Discs { scene, body, crossings } => discs(common, scene, *body, crossings),
        Command::Arrange { fixture } => arrange(common, fixture),
        Command::Ds { table: true, max_n, max_s, .. } => ds_table(common, *max_n, *max_s),
        Command::Ds { file, cyclic, order, .. } => match file {
            Some(f) => ds_check(common, f, *cyclic, *order),
            None => Err(Failure::Validation("--file is required without --table".into())),
        },
        Command::Analyze { scene, random, family, save_scene, body } => {
            analyze(common, scene, *random, *family, save_scene, *body)
        }
        Command::Experiment { family, ns, trials, timings } => experiment(common, *family, ns, *trials, timings),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Validation(m) => eprintln!("hullscope: invalid input: {m}"),
                Failure::Numerical(m) => eprintln!("hullscope: numerical failure: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequences_parse_from_letters_and_numbers() {
        assert_eq!(parse_sequence("abca", false).unwrap().symbols(), &[0, 1, 2, 0]);
        assert_eq!(parse_sequence("3, 1 4", false).unwrap().symbols(), &[3, 1, 4]);
        assert!(parse_sequence("aab", false).is_err());
        assert!(parse_sequence("1,x", false).is_err());
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn pipeline_errors_map_to_exit_codes() {
        assert_eq!(Failure::from(PipelineError::Version(9)).code(), 2);
        assert_eq!(Failure::from(PipelineError::Separation { a: 0, b: 1 }).code(), 3);
        assert_eq!(Failure::from(DiscError::Record("x".into())).code(), 2);
        assert_eq!(Failure::from(DiscError::GiveUp { attempts: 1 }).code(), 3);
    }
}
