//! The `v2g-menu` command line.
//!
//! Every command resolves its inputs, writes its outputs into a staging
//! directory next to `--out`, and renames it into place when done. The run
//! directory holds the resolved `config.toml`, `scenario.json` and
//! `prices.csv`, so it can be re-run from its own contents, plus a
//! `manifest.json` listing every file with its SHA-256.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::{
    compare, compute_kpis, monte_carlo_profit, write_flow_profiles, write_improvements,
    write_kpi_table, write_profit_cdf, write_sweep, Kpis,
};
use crate::baselines::{tune_markups, write_grid_surface, BaselineTariff, Scheme, TuneResult};
use crate::config::{RunConfig, Seeds};
use crate::error::{Error, Result};
use crate::market_data::{load_price_csv, write_price_csv, PriceSeries};
use crate::mechanism::{run_day, DayResult};
use crate::milp::IndicatorMode;
use crate::optimizer::Optimizer;
use crate::scenario::{generate_fleet, load_scenario, save_scenario, FleetScenario};

#[derive(Debug, Parser)]
#[command(
    name = "v2g-menu",
    version,
    about = "Menu-based V2G pricing for a parking lot"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Fleet scenario JSON; generated from the config when absent.
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// `slot,price_per_kwh` CSV; synthetic prices when absent.
    #[arg(long, global = true)]
    pub prices: Option<PathBuf>,
    /// Comma-separated discharge options in kWh, e.g. `0,5,10`.
    #[arg(long, global = true)]
    pub menu: Option<String>,
    /// Seed for the synthetic fleet and prices.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "v2g-out")]
    pub out: PathBuf,
    /// Write every solved model as an LP file (default `<out>/models`).
    #[arg(long, global = true, num_args = 0..=1)]
    pub dump_model: Option<Option<PathBuf>>,
    /// Cap on concurrent solver instances.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub solver_mode: Option<SolverMode>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SolverMode {
    Indicator,
    Bigm,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Run the mechanism over one day.
    Run,
    /// Mechanism against the tuned tariff baselines and charge-only.
    Compare,
    /// One-dimensional sensitivity sweep.
    Sensitivity {
        #[arg(value_enum)]
        sweep: Sweep,
    },
    /// Grid-search the parameters of one tariff scheme.
    Tune {
        #[arg(long, value_enum)]
        scheme: SchemeArg,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sweep {
    Menu,
    Feeder,
    Fleet,
    Monthly,
    Noise,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeArg {
    AdjustedRt,
    Flat,
    Hybrid,
    ChargeOnly,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::AdjustedRt => Scheme::AdjustedRt,
            SchemeArg::Flat => Scheme::Flat,
            SchemeArg::Hybrid => Scheme::Hybrid,
            SchemeArg::ChargeOnly => Scheme::ChargeOnly,
        }
    }
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Argument(_)
        | Error::Format { .. }
        | Error::Parse { .. }
        | Error::Length { .. }
        | Error::Validation { .. } => 2,
        Error::Infeasible(_) => 3,
        Error::Solver(_) | Error::Invariant { .. } => 4,
        _ => 1,
    }
}

/// Entry point of the binary; returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    match execute(&cli) {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Fully resolved inputs of a command.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub config: RunConfig,
    pub scenario: FleetScenario,
    pub prices: PriceSeries,
    pub scenario_source: String,
    pub prices_source: String,
}

fn parse_menu(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            x.trim().parse::<f64>().map_err(|_| Error::Validation {
                field: "--menu".into(),
                message: format!("`{x}` is not a number"),
            })
        })
        .collect()
}

/// Loads the config, applies flag overrides and reads or generates the
/// scenario and prices. Config problems surface before anything is solved.
pub fn resolve(args: &CommonArgs) -> Result<Inputs> {
    let mut config = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = &args.menu {
        config.menu = parse_menu(m)?;
    }
    if let Some(s) = args.seed {
        config.seeds.fleet = s;
        config.seeds.prices = s;
    }
    if let Some(t) = args.threads {
        config.solver.threads = t;
    }
    if let Some(m) = args.solver_mode {
        config.solver.mode = match m {
            SolverMode::Indicator => IndicatorMode::Indicator,
            SolverMode::Bigm => IndicatorMode::Bigm,
        };
    }
    if let Some(p) = &args.scenario {
        config.paths.scenario = Some(p.clone());
    }
    if let Some(p) = &args.prices {
        config.paths.prices = Some(p.clone());
    }
    config.validate()?;
    let (scenario, scenario_source) = match &config.paths.scenario {
        Some(p) => (load_scenario(p)?, p.display().to_string()),
        None => (
            config.synthetic_fleet()?,
            format!("synthetic(seed={})", config.seeds.fleet),
        ),
    };
    let (prices, prices_source) = match &config.paths.prices {
        Some(p) => (
            load_price_csv(
                p,
                config.horizon_slots,
                config.slot_hours,
                config.import_adder,
            )?,
            p.display().to_string(),
        ),
        None => (
            config.synthetic_prices()?,
            format!("synthetic(seed={})", config.seeds.prices),
        ),
    };
    if scenario.horizon_slots != config.horizon_slots {
        return Err(Error::Validation {
            field: "horizon_slots".into(),
            message: format!("scenario has {} slots", scenario.horizon_slots),
        });
    }
    Ok(Inputs {
        config,
        scenario,
        prices,
        scenario_source,
        prices_source,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seeds: Seeds,
    pub scenario_source: String,
    pub prices_source: String,
    pub files: Vec<FileEntry>,
}

/// Output directory under construction; removed unless committed.
struct Staging {
    target: PathBuf,
    dir: PathBuf,
    done: bool,
}

impl Staging {
    fn begin(target: &Path) -> Result<Self> {
        if target.exists() {
            let replaceable = target.join("manifest.json").is_file()
                || fs::read_dir(target)
                    .map_err(|e| Error::io(target, e))?
                    .next()
                    .is_none();
            if !replaceable {
                return Err(Error::arg(format!(
                    "{} exists and is not a previous run directory",
                    target.display()
                )));
            }
        }
        let name = target
            .file_name()
            .ok_or_else(|| Error::arg("--out needs a directory name"))?
            .to_string_lossy();
        let dir = target.with_file_name(format!(".{name}.staging-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            target: target.to_path_buf(),
            dir,
            done: false,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn commit(mut self, command: &str, inputs: &Inputs) -> Result<PathBuf> {
        let mut files = Vec::new();
        collect_files(&self.dir, &self.dir, &mut files)?;
        files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            tool: "v2g-menu".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: stored_config(&inputs.config).hash(),
            seeds: inputs.config.seeds.clone(),
            scenario_source: inputs.scenario_source.clone(),
            prices_source: inputs.prices_source.clone(),
            files,
        };
        let path = self.path("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)?)
            .map_err(|e| Error::io(&path, e))?;
        if self.target.exists() {
            fs::remove_dir_all(&self.target).map_err(|e| Error::io(&self.target, e))?;
        }
        fs::rename(&self.dir, &self.target).map_err(|e| Error::io(&self.target, e))?;
        self.done = true;
        Ok(self.target.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.done {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<FileEntry>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            out.push(FileEntry {
                path: path
                    .strip_prefix(root)
                    .unwrap_or(&path)
                    .to_string_lossy()
                    .replace('\\', "/"),
                bytes: bytes.len() as u64,
                sha256: hex::encode(Sha256::digest(&bytes)),
            });
        }
    }
    Ok(())
}

/// The config as stored in a run directory: inputs point at the copies
/// written next to it.
fn stored_config(c: &RunConfig) -> RunConfig {
    let mut c = c.clone();
    c.paths.scenario = Some("scenario.json".into());
    c.paths.prices = Some("prices.csv".into());
    c
}

fn write_inputs(st: &Staging, inputs: &Inputs) -> Result<()> {
    let path = st.path("config.toml");
    fs::write(&path, stored_config(&inputs.config).to_toml()).map_err(|e| Error::io(&path, e))?;
    save_scenario(&inputs.scenario, &st.path("scenario.json"))?;
    write_price_csv(&inputs.prices, &st.path("prices.csv"))
}

fn optimizer_for(inputs: &Inputs, args: &CommonArgs, st: &Staging) -> Optimizer {
    let opt = inputs.config.optimizer();
    match &args.dump_model {
        Some(None) => opt.with_dump_dir(st.path("models")),
        Some(Some(p)) => opt.with_dump_dir(p.clone()),
        None => opt,
    }
}

/// Runs a parsed command and returns the finished output directory.
pub fn execute(cli: &Cli) -> Result<PathBuf> {
    let inputs = resolve(&cli.common)?;
    let threads = inputs.config.solver.threads;
    // Only the first call in a process can size the global pool.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    let st = Staging::begin(&cli.common.out)?;
    write_inputs(&st, &inputs)?;
    let opt = optimizer_for(&inputs, &cli.common, &st);
    let name = match &cli.command {
        Command::Run => {
            cmd_run(&inputs, &opt, &st)?;
            "run".to_string()
        }
        Command::Compare => {
            cmd_compare(&inputs, &opt, &st)?;
            "compare".to_string()
        }
        Command::Sensitivity { sweep } => {
            cmd_sensitivity(&inputs, &opt, *sweep, &st)?;
            format!("sensitivity {}", format!("{sweep:?}").to_lowercase())
        }
        Command::Tune { scheme } => {
            let scheme = Scheme::from(*scheme);
            cmd_tune(&inputs, &opt, scheme, &st)?;
            format!("tune --scheme {}", scheme.label())
        }
    };
    st.commit(&name, &inputs)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn cmd_run(inputs: &Inputs, opt: &Optimizer, st: &Staging) -> Result<()> {
    let r = run_day(
        &inputs.scenario,
        &inputs.prices,
        &inputs.config.mechanism(),
        opt,
    )?;
    r.write_json(&st.path("result.json"))?;
    r.write_csvs(&st.dir)?;
    let k = compute_kpis(&r, &inputs.scenario)?;
    write_kpi_table(&[("menu".into(), k.clone())], &st.path("kpis.csv"))?;
    write_flow_profiles(&[("menu".into(), &r)], &st.path("flows.csv"))?;
    println!(
        "accepted {}/{}  profit {:.2}  payments {:.2}  exported {:.1} kWh",
        k.accepted, k.arrivals, k.operator_profit, k.total_ev_payments, k.exported_kwh
    );
    Ok(())
}

/// Tuned schemes in comparison order.
pub const COMPARED_SCHEMES: [Scheme; 3] = [Scheme::AdjustedRt, Scheme::Flat, Scheme::Hybrid];

#[derive(Serialize)]
struct TunedEntry {
    scheme: Scheme,
    evaluated: usize,
    tariff: Option<BaselineTariff>,
}

fn tune(
    inputs: &Inputs,
    opt: &Optimizer,
    scheme: Scheme,
    scenario: &FleetScenario,
) -> Result<TuneResult> {
    let c = &inputs.config;
    tune_markups(
        scenario,
        &inputs.prices,
        scheme,
        &c.limits(),
        opt,
        c.tuning.step,
        c.solver.threads,
    )
}

/// Runs the mechanism, charge-only and the tuned baselines on one instance
/// and returns the labelled KPI rows, reference first.
pub fn comparison_rows(
    inputs: &Inputs,
    opt: &Optimizer,
    scenario: &FleetScenario,
) -> Result<(
    Vec<(String, Kpis)>,
    Vec<(String, DayResult)>,
    Vec<TuneResult>,
)> {
    let mech_cfg = inputs.config.mechanism();
    let mech = run_day(scenario, &inputs.prices, &mech_cfg, opt)?;
    let charge_only = run_day(
        scenario,
        &inputs.prices,
        &crate::mechanism::MechanismConfig {
            menu: vec![0.0],
            ..mech_cfg
        },
        opt,
    )?;
    let mut days = vec![("menu".to_string(), mech)];
    let mut tuned = Vec::new();
    for scheme in COMPARED_SCHEMES {
        let t = tune(inputs, opt, scheme, scenario)?;
        if let Some((_, d)) = &t.best {
            days.push((scheme.label().to_string(), d.clone()));
        } else {
            log::warn!("no viable tariff for {}", scheme.label());
        }
        tuned.push(t);
    }
    days.push(("charge_only".to_string(), charge_only));
    let mut rows = Vec::new();
    for (label, d) in &days {
        rows.push((label.clone(), compute_kpis(d, scenario)?));
    }
    // a scheme nobody accepts still gets a row, with zero flows and money
    for t in &tuned {
        if t.best.is_none() {
            rows.insert(
                rows.len() - 1,
                (t.scheme.label().to_string(), Kpis::default()),
            );
        }
    }
    Ok((rows, days, tuned))
}

fn cmd_compare(inputs: &Inputs, opt: &Optimizer, st: &Staging) -> Result<()> {
    let (rows, days, tuned) = comparison_rows(inputs, opt, &inputs.scenario)?;
    write_kpi_table(&rows, &st.path("kpis.csv"))?;
    let improvements = compare(&rows, "menu")?;
    write_improvements(&improvements, &st.path("improvements.csv"))?;
    write_json(&st.path("improvements.json"), &improvements)?;
    let refs: Vec<(String, &DayResult)> = days.iter().map(|(l, d)| (l.clone(), d)).collect();
    write_flow_profiles(&refs, &st.path("flows.csv"))?;
    let mut entries = Vec::new();
    for t in &tuned {
        write_grid_surface(
            &t.surface,
            &st.path(&format!("grid_surface_{}.csv", t.scheme.label())),
        )?;
        entries.push(TunedEntry {
            scheme: t.scheme,
            evaluated: t.evaluated,
            tariff: t.best.as_ref().map(|(b, _)| b.clone()),
        });
    }
    write_json(&st.path("tuned.json"), &entries)?;
    for r in &improvements {
        println!(
            "vs {:<12} export {:>8}  profit {:>8.2}%  payments {:>8.2}%",
            r.versus,
            r.export_change_pct
                .map_or("—".to_string(), |x| format!("{x:.2}%")),
            r.profit_change_pct,
            r.payment_reduction_pct
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepMeta<T: Serialize> {
    sweep: &'static str,
    parameter: &'static str,
    values: Vec<T>,
}

fn cmd_sensitivity(inputs: &Inputs, opt: &Optimizer, sweep: Sweep, st: &Staging) -> Result<()> {
    let c = &inputs.config;
    let mut points: Vec<(String, String, Kpis)> = Vec::new();
    let mut push = |v: String, scheme: &str, d: &DayResult, sc: &FleetScenario| -> Result<()> {
        points.push((v, scheme.to_string(), compute_kpis(d, sc)?));
        Ok(())
    };
    let with_menu = |menu: Vec<f64>| crate::mechanism::MechanismConfig {
        menu,
        ..c.mechanism()
    };
    let (parameter, meta) = match sweep {
        Sweep::Menu => {
            for (i, menu) in c.sweeps.menus.iter().enumerate() {
                let d = run_day(
                    &inputs.scenario,
                    &inputs.prices,
                    &with_menu(menu.clone()),
                    opt,
                )?;
                push((i + 1).to_string(), "menu", &d, &inputs.scenario)?;
            }
            let m = SweepMeta {
                sweep: "menu",
                parameter: "menu_index",
                values: c.sweeps.menus.clone(),
            };
            ("menu_index", serde_json::to_value(m)?)
        }
        Sweep::Feeder => {
            for &f in &c.sweeps.feeder_kw {
                let mut sub = inputs.clone();
                sub.config.feeder_kw = f;
                let (rows, _, _) = comparison_rows(&sub, opt, &inputs.scenario)?;
                for (label, k) in rows {
                    points.push((f.to_string(), label, k));
                }
            }
            let m = SweepMeta {
                sweep: "feeder",
                parameter: "feeder_kw",
                values: c.sweeps.feeder_kw.clone(),
            };
            ("feeder_kw", serde_json::to_value(m)?)
        }
        Sweep::Fleet => {
            for &n in &c.sweeps.fleet_sizes {
                let sc = if c.paths.scenario.is_some() {
                    inputs.scenario.truncated(n)
                } else {
                    let mut p = c.fleet_params();
                    p.n_evs = n;
                    generate_fleet(&p, c.seeds.fleet)?
                };
                let d = run_day(&sc, &inputs.prices, &c.mechanism(), opt)?;
                push(n.to_string(), "menu", &d, &sc)?;
                let d = run_day(&sc, &inputs.prices, &with_menu(vec![0.0]), opt)?;
                push(n.to_string(), "charge_only", &d, &sc)?;
            }
            let m = SweepMeta {
                sweep: "fleet",
                parameter: "n_evs",
                values: c.sweeps.fleet_sizes.clone(),
            };
            ("n_evs", serde_json::to_value(m)?)
        }
        Sweep::Monthly => {
            if c.paths.prices.is_some() {
                log::warn!("monthly sweep uses synthetic seasonal prices, not --prices");
            }
            for &month in &c.sweeps.months {
                let mut mc = c.clone();
                mc.prices.month = Some(month);
                let prices = mc.synthetic_prices()?;
                let d = run_day(&inputs.scenario, &prices, &c.mechanism(), opt)?;
                push(month.to_string(), "menu", &d, &inputs.scenario)?;
                let d = run_day(&inputs.scenario, &prices, &with_menu(vec![0.0]), opt)?;
                push(month.to_string(), "charge_only", &d, &inputs.scenario)?;
            }
            let m = SweepMeta {
                sweep: "monthly",
                parameter: "month",
                values: c.sweeps.months.clone(),
            };
            ("month", serde_json::to_value(m)?)
        }
        Sweep::Noise => {
            let d = run_day(&inputs.scenario, &inputs.prices, &c.mechanism(), opt)?;
            let mut summaries = Vec::new();
            for &sigma in &c.monte_carlo.noise_levels {
                let s = monte_carlo_profit(
                    &d,
                    &inputs.prices,
                    sigma,
                    c.monte_carlo.scenarios,
                    c.seeds.monte_carlo,
                )?;
                write_profit_cdf(&s, &st.path(&format!("cdf_sigma_{sigma:.2}.csv")))?;
                summaries.push(s);
            }
            let s = monte_carlo_profit(
                &d,
                &inputs.prices,
                c.monte_carlo.sigma,
                c.monte_carlo.scenarios,
                c.seeds.monte_carlo,
            )?;
            let mut w = csv::Writer::from_path(st.path("deviations.csv"))?;
            w.write_record(["scenario", "pct_deviation", "profit"])?;
            for (i, (dev, p)) in s
                .deviation_samples
                .iter()
                .zip(&s.profit_samples)
                .enumerate()
            {
                w.write_record([i.to_string(), dev.to_string(), p.to_string()])?;
            }
            w.flush()
                .map_err(|e| Error::io(st.path("deviations.csv"), e))?;
            summaries.push(s);
            let brief: Vec<serde_json::Value> = summaries
                .iter()
                .map(|s| {
                    serde_json::json!({
                        "sigma": s.sigma,
                        "n_scenarios": s.n_scenarios,
                        "base_profit": s.base_profit,
                        "mean_abs_pct_deviation": s.mean_abs_pct_deviation,
                        "mean_pct_deviation": s.mean_pct_deviation,
                        "prob_profit_drop_gt_5pct": s.prob_profit_drop_gt_5pct,
                        "median_profit": s.median_profit,
                        "deviation_iqr": s.deviation_iqr,
                    })
                })
                .collect();
            write_json(&st.path("mc_summary.json"), &brief)?;
            let m = SweepMeta {
                sweep: "noise",
                parameter: "sigma",
                values: c.monte_carlo.noise_levels.clone(),
            };
            ("sigma", serde_json::to_value(m)?)
        }
    };
    if sweep != Sweep::Noise {
        write_sweep(parameter, &points, &st.path("sweep.csv"))?;
    }
    write_json(&st.path("sweep.json"), &meta)
}

fn cmd_tune(inputs: &Inputs, opt: &Optimizer, scheme: Scheme, st: &Staging) -> Result<()> {
    let t = tune(inputs, opt, scheme, &inputs.scenario)?;
    write_grid_surface(&t.surface, &st.path("grid_surface.csv"))?;
    let best = match &t.best {
        Some((tariff, day)) => {
            day.write_json(&st.path("best_result.json"))?;
            let k = compute_kpis(day, &inputs.scenario)?;
            println!(
                "{}: best {:?} profit {:.2} payments {:.2}",
                scheme.label(),
                tariff.grid_coords(),
                k.operator_profit,
                k.total_ev_payments
            );
            serde_json::json!({ "viable": true, "tariff": tariff, "kpis": k })
        }
        None => {
            println!("{}: no viable tariff", scheme.label());
            serde_json::json!({ "viable": false, "evaluated": t.evaluated })
        }
    };
    write_json(&st.path("best.json"), &best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(dir: &Path) -> PathBuf {
        let p = dir.join("cfg.toml");
        fs::write(&p, "n_evs = 6\nmenu = [0.0, 10.0]\n[tuning]\nstep = 0.15\n").unwrap();
        p
    }

    fn cli(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("v2g-menu").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_parse() {
        let c = cli(&[
            "sensitivity",
            "noise",
            "--seed",
            "3",
            "--threads",
            "2",
            "--solver-mode",
            "bigm",
            "--dump-model",
        ]);
        assert!(matches!(
            c.command,
            Command::Sensitivity {
                sweep: Sweep::Noise
            }
        ));
        assert_eq!(c.common.seed, Some(3));
        assert_eq!(c.common.dump_model, Some(None));
        assert!(Cli::try_parse_from(["v2g-menu", "sensitivity", "weather"]).is_err());
        assert!(Cli::try_parse_from(["v2g-menu", "tune"]).is_err());
    }

    #[test]
    fn menu_flag() {
        assert_eq!(parse_menu("0, 5,10").unwrap(), vec![0.0, 5.0, 10.0]);
        let e = parse_menu("0,x").unwrap_err();
        assert_eq!(exit_code(&e), 2);
        let args = CommonArgs {
            menu: Some("5,10".into()),
            ..Default::default()
        };
        assert_eq!(exit_code(&resolve(&args).unwrap_err()), 2);
    }

    #[test]
    fn run_writes_a_reproducible_directory() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = small_config(tmp.path());
        let out = tmp.path().join("run");
        let c = cli(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        execute(&c).unwrap();
        let m: Manifest =
            serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        let names: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
        for f in [
            "config.toml",
            "scenario.json",
            "prices.csv",
            "result.json",
            "quotes.csv",
            "schedule.csv",
            "kpis.csv",
        ] {
            assert!(names.contains(&f), "{f} missing from {names:?}");
        }
        // re-run from the directory's own config, which points at its copies
        let again = tmp.path().join("again");
        let c2 = cli(&[
            "run",
            "--config",
            out.join("config.toml").to_str().unwrap(),
            "--out",
            again.to_str().unwrap(),
        ]);
        execute(&c2).unwrap();
        for f in [
            "quotes.csv",
            "contracts.csv",
            "schedule.csv",
            "kpis.csv",
            "prices.csv",
        ] {
            assert_eq!(
                fs::read(out.join(f)).unwrap(),
                fs::read(again.join(f)).unwrap(),
                "{f}"
            );
        }
        // same command again replaces the previous run
        execute(&c).unwrap();
        assert!(tmp.path().read_dir().unwrap().all(|e| !e
            .unwrap()
            .file_name()
            .to_string_lossy()
            .contains("staging")));
    }

    #[test]
    fn missing_prices_leave_no_output() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("run");
        let c = cli(&[
            "run",
            "--prices",
            tmp.path().join("nope.csv").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        let e = execute(&c).unwrap_err();
        assert_ne!(exit_code(&e), 0);
        assert!(!out.exists());
        assert_eq!(tmp.path().read_dir().unwrap().count(), 0);
    }

    #[test]
    fn bad_config_is_reported_with_its_field() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("bad.toml");
        fs::write(&p, "[solver]\nmode = \"fast\"\n").unwrap();
        let c = cli(&[
            "run",
            "--config",
            p.to_str().unwrap(),
            "--out",
            tmp.path().join("o").to_str().unwrap(),
        ]);
        let e = execute(&c).unwrap_err();
        assert_eq!(exit_code(&e), 2);
        assert!(e.to_string().contains("solver.mode"), "{e}");
    }

    #[test]
    fn refuses_to_replace_foreign_directories() {
        let tmp = tempfile::tempdir().unwrap();
        fs::write(tmp.path().join("keep.txt"), "x").unwrap();
        let cfg = small_config(tmp.path());
        let c = cli(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            tmp.path().to_str().unwrap(),
        ]);
        assert!(execute(&c).is_err());
        assert!(tmp.path().join("keep.txt").exists());
    }

    #[test]
    fn compare_has_four_comparator_rows() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = small_config(tmp.path());
        let out = tmp.path().join("cmp");
        execute(&cli(&[
            "compare",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]))
        .unwrap();
        let text = fs::read_to_string(out.join("improvements.csv")).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(
            text.lines().any(|l| l.starts_with("charge_only,—,")),
            "{text}"
        );
        let first = fs::read(out.join("kpis.csv")).unwrap();
        execute(&cli(&[
            "compare",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]))
        .unwrap();
        assert_eq!(first, fs::read(out.join("kpis.csv")).unwrap());
    }

    #[test]
    fn sweeps_emit_their_points() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = small_config(tmp.path());
        let out = tmp.path().join("menu");
        execute(&cli(&[
            "sensitivity",
            "menu",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]))
        .unwrap();
        assert_eq!(
            fs::read_to_string(out.join("sweep.csv"))
                .unwrap()
                .lines()
                .count(),
            1 + 7
        );
        let out = tmp.path().join("noise");
        fs::write(&cfg, "n_evs = 6\n[monte_carlo]\nscenarios = 50\n").unwrap();
        execute(&cli(&[
            "sensitivity",
            "noise",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]))
        .unwrap();
        let cdfs = fs::read_dir(&out)
            .unwrap()
            .filter(|e| {
                e.as_ref()
                    .unwrap()
                    .file_name()
                    .to_string_lossy()
                    .starts_with("cdf_")
            })
            .count();
        assert_eq!(cdfs, 5);
        let out = tmp.path().join("feeder");
        fs::write(
            &cfg,
            "n_evs = 4\n[tuning]\nstep = 0.3\n[sweeps]\nfeeder_kw = [100.0, 300.0]\n",
        )
        .unwrap();
        execute(&cli(&[
            "sensitivity",
            "feeder",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]))
        .unwrap();
        let meta = fs::read_to_string(out.join("sweep.json")).unwrap();
        assert!(meta.contains("100.0") && meta.contains("300.0"), "{meta}");
    }

    #[test]
    fn tune_writes_the_surface_and_dumps_models() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = small_config(tmp.path());
        let out = tmp.path().join("tune");
        execute(&cli(&[
            "tune",
            "--scheme",
            "charge-only",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--dump-model",
        ]))
        .unwrap();
        assert!(out.join("grid_surface.csv").exists() && out.join("best.json").exists());
        assert!(fs::read_dir(out.join("models")).unwrap().count() > 0);
    }
}
