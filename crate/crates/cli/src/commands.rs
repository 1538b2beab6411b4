//! `tighten`, `run` and `selftest`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use ucmpc::model::Unmatched;
use ucmpc::mpc::{rpi_outer_box, MpcConfig, RpiSet, Variant};
use ucmpc::sim::{prepare_variant, run_closed_loop, verdict, TrajectoryLog, Verdict};
use ucmpc::tightening::{run_algorithm1, TighteningResult};

use crate::plot;
use crate::report::{expected_checks, summary_table, tighten_report, EntryCheck, SummaryRow};
use crate::scenario::{Resolved, Scenario};
use crate::selftest as checks;

/// Tolerance of the induced-norm integrals behind the invariant box.
const RPI_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

/// Writes through a temporary sibling so readers never see partial files.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// `--out` wins; otherwise the scenario's `output_dir` relative to the file,
/// otherwise `out/<name>` next to it.
fn output_dir(config: &Path, scenario: &Scenario, out: Option<&Path>) -> Result<PathBuf> {
    let dir = match out {
        Some(dir) => dir.to_path_buf(),
        None => {
            let base = config.parent().unwrap_or(Path::new("."));
            match &scenario.output_dir {
                Some(d) if d.is_absolute() => d.clone(),
                Some(d) => base.join(d),
                None => base.join("out").join(&scenario.name),
            }
        }
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn design(scenario: &Scenario, resolved: &Resolved) -> Result<TighteningResult> {
    run_algorithm1(&resolved.plant, &resolved.uncertainty, &resolved.l1, &scenario.tightening)
        .with_context(|| format!("constraint tightening for scenario {}", scenario.name))
}

#[derive(Debug, Serialize)]
struct TightenFile<'a> {
    scenario: &'a str,
    #[serde(flatten)]
    result: &'a TighteningResult,
    expected_checks: &'a [EntryCheck],
}

pub struct TightenOutput {
    pub result: TighteningResult,
    pub checks: Vec<EntryCheck>,
    pub report: String,
    pub outcome: Outcome,
}

pub fn tighten(config: &Path, out: Option<&Path>) -> Result<TightenOutput> {
    let scenario = Scenario::load(config)?;
    let resolved = scenario.resolve()?;
    let result = design(&scenario, &resolved)?;
    let checks = scenario
        .expected
        .as_ref()
        .map(|e| expected_checks(&result, e))
        .unwrap_or_default();
    let report = tighten_report(&scenario.name, &result, &checks);
    let dir = output_dir(config, &scenario, out)?;
    write_json(
        &dir.join("tightening.json"),
        &TightenFile {
            scenario: &scenario.name,
            result: &result,
            expected_checks: &checks,
        },
    )?;
    write_atomic(&dir.join("tightening.txt"), report.as_bytes())?;
    let pass = checks.iter().all(|c| c.pass) && result.all_conditions_hold();
    Ok(TightenOutput {
        result,
        checks,
        report,
        outcome: Outcome::from_pass(pass),
    })
}

pub struct RunOptions<'a> {
    pub variants: &'a [Variant],
    pub no_unmatched: bool,
    pub out: Option<&'a Path>,
}

pub struct VariantRun {
    pub variant: Variant,
    pub log: TrajectoryLog,
    pub verdict: Verdict,
    pub row: SummaryRow,
}

pub struct RunOutput {
    pub dir: PathBuf,
    pub runs: Vec<VariantRun>,
    pub table: String,
    pub outcome: Outcome,
}

fn max_state_error(log: &TrajectoryLog) -> Vec<f64> {
    let n = log.records.first().map_or(0, |r| r.x.len());
    let mut out = vec![0.0f64; n];
    for r in &log.records {
        for (i, o) in out.iter_mut().enumerate() {
            *o = o.max((r.x[i] - r.x_n[i]).abs());
        }
    }
    out
}

struct Shared<'a> {
    resolved: &'a Resolved,
    mpc: &'a MpcConfig,
    design: &'a TighteningResult,
    rpi: Option<&'a RpiSet>,
    scenario: &'a Scenario,
    dir: &'a Path,
}

fn run_variant(s: &Shared<'_>, variant: Variant) -> Result<VariantRun> {
    let started = Instant::now();
    let r = s.resolved;
    let (controller, l1) = prepare_variant(&r.plant, variant, s.mpc, &r.l1, s.design, s.rpi, &r.sim)?;
    let log = run_closed_loop(&r.plant, &r.uncertainty, controller, l1, &r.sim).with_context(|| format!("{variant} run"))?;
    let bounds = (variant == Variant::Uc).then_some(s.design);
    let v = verdict(&log, bounds, &r.plant.x_set, &r.plant.u_set, &s.scenario.verdict);
    let elapsed = started.elapsed().as_secs_f64();
    let row = SummaryRow::new(variant, &v, s.design, max_state_error(&log), elapsed);
    let csv = log.to_csv_string();
    write_atomic(&s.dir.join(format!("{}.csv", variant.name())), csv.as_bytes())?;
    write_json(&s.dir.join(format!("{}_verdict.json", variant.name())), &v)?;
    Ok(VariantRun {
        variant,
        log,
        verdict: v,
        row,
    })
}

pub fn run(config: &Path, opts: &RunOptions<'_>) -> Result<RunOutput> {
    let mut scenario = Scenario::load(config)?;
    let variants = scenario.selected_variants(opts.variants);
    if variants.is_empty() {
        bail!("no variants selected: pass --variant uc|vanilla|tube or list them under `variants`");
    }
    if opts.no_unmatched {
        let channels = scenario.resolve()?.plant.unmatched_channels();
        scenario.uncertainty.unmatched = Some(Unmatched::Zero { channels });
    }
    scenario.variants = variants.clone();
    let resolved = scenario.resolve()?;
    let dir = output_dir(config, &scenario, opts.out)?;

    // The copy reproduces this run in place.
    let mut copy = scenario.clone();
    copy.output_dir = Some(PathBuf::from("."));
    write_atomic(&dir.join("resolved.toml"), copy.to_toml()?.as_bytes())?;

    let design = design(&scenario, &resolved)?;
    write_json(&dir.join("tightening.json"), &design)?;
    let rpi = if variants.contains(&Variant::Tube) {
        Some(rpi_outer_box(&resolved.plant, &resolved.uncertainty, RPI_TOL).context("invariant set for the tube variant")?)
    } else {
        None
    };
    let shared = Shared {
        resolved: &resolved,
        mpc: &scenario.mpc,
        design: &design,
        rpi: rpi.as_ref(),
        scenario: &scenario,
        dir: &dir,
    };
    let results: Vec<Result<VariantRun>> = std::thread::scope(|scope| {
        let handles: Vec<_> = variants.iter().map(|v| scope.spawn(|| run_variant(&shared, *v))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| bail!("variant worker panicked")))
            .collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;

    let rows: Vec<SummaryRow> = runs.iter().map(|r| r.row.clone()).collect();
    let table = summary_table(&scenario.name, &rows);
    write_atomic(&dir.join("summary.txt"), table.as_bytes())?;
    write_json(&dir.join("summary.json"), &rows)?;
    let b_pinv: Vec<Vec<f64>> = resolved
        .plant
        .b_pinv()
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    write_atomic(&dir.join("plot.py"), plot::script(&b_pinv).as_bytes())?;

    let pass = runs.iter().all(|r| r.verdict.pass);
    Ok(RunOutput {
        dir,
        runs,
        table,
        outcome: Outcome::from_pass(pass),
    })
}

pub fn selftest() -> (String, Outcome) {
    let mut text = String::new();
    let mut pass = true;
    for r in checks::run_all() {
        match &r.outcome {
            Ok(()) => text.push_str(&format!("PASS  {}\n", r.name)),
            Err(why) => {
                pass = false;
                text.push_str(&format!("FAIL  {}: {why}\n", r.name));
            }
        }
    }
    (text, Outcome::from_pass(pass))
}
