use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coronary_cip::campaign::{run_config, run_from_hemo, CampaignOptions};
use coronary_cip::dataset::{build_dataset, config_hash, run_campaigns, CampaignPlan, Campaigns, Dataset, Split};
use coronary_cip::design::DesignPoint;
use coronary_cip::export::{read_cips, read_json, write_json};
use coronary_cip::hemo::{simulate, SimulationConfig};
use coronary_cip::lpm::{reference_parameters, PhysioState};
use coronary_cip::nn::{bundle, evaluate, kfold_scaling_search, Data, Report, Task, TrainConfig, INPUT_LENGTH};
use coronary_cip::pipeline::{
    cip_series, combine_records, model_figures, reproduce, train_task, Execution, ReproduceConfig, RunRecord,
};
use coronary_cip::plot::{line_plot, scatter_plot, write_svg, Axes};
use coronary_cip::vessel::VesselTree;
use coronary_cip::{Error, Result};
use serde::Serialize;

/// Output root used when `--out` is omitted.
const OUT_ENV: &str = "CORONARY_CIP_OUT";

#[derive(Parser)]
#[command(version, about = "Coronary contrast simulation and CMD index inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one run with contrast injection and write its series.
    Simulate(SimulateArgs),
    /// Run campaigns and build an IMR or CFR dataset.
    GenDataset(GenDatasetArgs),
    /// Combine a rest and a hyperemia run into per-vessel and averaged indices.
    ComputeIndices(ComputeIndicesArgs),
    /// Train a deep ensemble on a dataset directory.
    Train(TrainArgs),
    /// K-fold search over network width scaling factors.
    ArchSearch(ArchSearchArgs),
    /// Predict with uncertainty from profile CSVs.
    Predict(PredictArgs),
    /// Evaluate a model on a dataset's test split.
    Eval(EvalArgs),
    /// Draw profiles or an evaluation scatter as SVG.
    Plot(PlotArgs),
    /// Run the full chain from reference runs to evaluation figures.
    Reproduce(ReproduceArgs),
    /// Print reference parameters or the default vessel tree as JSON.
    Params(ParamsArgs),
}

#[derive(Args)]
struct OutArg {
    /// Output location; defaults to $CORONARY_CIP_OUT/<command>.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutArg {
    fn resolve(&self, command: &str) -> Result<PathBuf> {
        match (&self.out, std::env::var_os(OUT_ENV)) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(root)) => Ok(PathBuf::from(root).join(command)),
            (None, None) => Err(Error::InvalidParameter(format!("--out is required when {OUT_ENV} is unset"))),
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    state: PhysioState,
    /// Vessel tree JSON; defaults to the built-in tree.
    #[arg(long)]
    tree: Option<PathBuf>,
    /// Cardiac cycles; defaults to the injection protocol length.
    #[arg(long)]
    cycles: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    x1: f64,
    #[arg(long, default_value_t = 1.0)]
    x2: f64,
    #[arg(long, default_value_t = 1.0)]
    x3: f64,
    #[arg(long, default_value_t = 0.0)]
    x4: f64,
    /// Integration steps per exported sample.
    #[arg(long, default_value_t = 10)]
    stride: usize,
    /// Also write every transport snapshot.
    #[arg(long)]
    dump_field: bool,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct GenDatasetArgs {
    #[arg(long)]
    task: Task,
    #[arg(long, default_value_t = 600)]
    n_hyper: usize,
    #[arg(long, default_value_t = 100)]
    n_rest: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Campaign cache: loaded when present and matching, written otherwise.
    #[arg(long)]
    campaigns: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct ComputeIndicesArgs {
    /// `simulate` output directory of the resting run.
    #[arg(long)]
    rest: PathBuf,
    /// `simulate` output directory of the hyperemic run.
    #[arg(long)]
    hyper: PathBuf,
    /// JSON file; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    task: Task,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 5)]
    ensemble: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    factor: f64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct ArchSearchArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = coronary_cip::nn::SCALING_FACTORS)]
    factors: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    /// JSON report; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Profile CSVs. IMR uses every hyperemic row; CFR pairs the i-th
    /// resting row with the i-th hyperemic row.
    #[arg(long, num_args = 1.., required = true)]
    cip: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Report JSON; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for the scatter and training-curve figures.
    #[arg(long)]
    figures: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Profile CSVs to overlay.
    #[arg(long, num_args = 1.., conflicts_with = "report")]
    cip: Vec<PathBuf>,
    /// Evaluation report to draw as a scatter.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    title: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Small campaign and short training that still exercises every stage.
    #[arg(long)]
    quick: bool,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Run everything on one thread.
    #[arg(long)]
    strict_determinism: bool,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct ParamsArgs {
    #[arg(long, conflicts_with = "tree")]
    state: Option<PhysioState>,
    /// Print the default vessel tree instead.
    #[arg(long)]
    tree: bool,
}

fn print_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn load_tree(path: Option<&Path>) -> Result<VesselTree> {
    match path {
        Some(p) => VesselTree::load(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
        None => Ok(VesselTree::default_tree()),
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let out = a.out.resolve("simulate")?;
    let tree = load_tree(a.tree.as_deref())?;
    let point = DesignPoint::new(a.state, a.x1, a.x2, a.x3, a.x4);
    point.check_range()?;
    let mut cfg: SimulationConfig = run_config(&point, &reference_parameters(a.state), &tree)?;
    if let Some(n) = a.cycles {
        cfg.n_cycles = n;
    }
    let hemo = simulate(&cfg)?;
    let run = run_from_hemo(0, &point, &cfg, hemo, &CampaignOptions::default())?;
    let record = coronary_cip::pipeline::write_run(&out, &run, a.stride, a.dump_field)?;
    #[derive(Serialize)]
    struct RunManifest<'a> {
        command: &'static str,
        design: DesignPoint,
        n_cycles: usize,
        stride: usize,
        tree: serde_json::Value,
        config_hash: String,
        version: &'a str,
    }
    write_json(
        &out.join("manifest.json"),
        &RunManifest {
            command: "simulate",
            design: point,
            n_cycles: cfg.n_cycles,
            stride: a.stride,
            tree: serde_json::from_str(&tree.to_json())?,
            config_hash: config_hash(&(point, cfg.n_cycles, tree.to_json()))?,
            version: env!("CARGO_PKG_VERSION"),
        },
    )?;
    println!(
        "{}: Q {:.3} L/min, P {:.1}/{:.1} mmHg -> {}",
        a.state,
        record.hemodynamics.q_mean,
        record.hemodynamics.p_sys,
        record.hemodynamics.p_dia,
        out.display()
    );
    Ok(())
}

fn cmd_gen_dataset(a: &GenDatasetArgs) -> Result<()> {
    let out = a.out.resolve("dataset")?;
    let plan = CampaignPlan::new(a.n_hyper, a.n_rest, a.seed);
    let cached = match &a.campaigns {
        Some(p) if p.exists() => {
            let c = Campaigns::load(p)?;
            if c.plan != plan {
                return Err(Error::Mismatch(format!("{} was generated with a different plan", p.display())));
            }
            Some(c)
        }
        _ => None,
    };
    let campaigns = match cached {
        Some(c) => c,
        None => {
            let run_plan = CampaignPlan {
                options: CampaignOptions {
                    jobs: a.jobs,
                    ..plan.options
                },
                ..plan
            };
            let c = Campaigns {
                plan,
                ..run_campaigns(&run_plan, &VesselTree::default_tree())?
            };
            if let Some(p) = &a.campaigns {
                c.save(p)?;
            }
            c
        }
    };
    let ds = build_dataset(a.task, &campaigns)?;
    ds.save(&out)?;
    let c = ds.manifest.counts;
    println!(
        "{}: train {} val {} test {} ({} failed runs) -> {}",
        a.task,
        c.train,
        c.val,
        c.test,
        ds.manifest.failed_runs,
        out.display()
    );
    Ok(())
}

fn cmd_compute_indices(a: &ComputeIndicesArgs) -> Result<()> {
    let rest: RunRecord = read_json(&a.rest.join("summary.json"))?;
    let hyper: RunRecord = read_json(&a.hyper.join("summary.json"))?;
    print_json(&combine_records(&rest, &hyper)?, a.out.as_deref())
}

fn train_config(epochs: Option<usize>, patience: Option<usize>) -> TrainConfig {
    let d = TrainConfig::default();
    TrainConfig {
        max_epochs: epochs.unwrap_or(d.max_epochs),
        patience: patience.unwrap_or(d.patience),
        ..d
    }
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let out = a.out.resolve("model")?;
    let ds = Dataset::load(&a.dataset)?;
    if ds.manifest.task != a.task {
        return Err(Error::Mismatch(format!("dataset is for {}, not {}", ds.manifest.task, a.task)));
    }
    let cfg = train_config(a.epochs, a.patience);
    let model = train_task(&ds, a.task, a.factor, a.ensemble, &cfg, a.seed, a.jobs)?;
    bundle::save(&model, &out)?;
    for (k, h) in model.histories.iter().enumerate() {
        println!("member {k}: best epoch {} val MSE {:.4e}", h.best_epoch, h.best_val_mse);
    }
    println!("-> {}", out.display());
    Ok(())
}

fn cmd_arch_search(a: &ArchSearchArgs) -> Result<()> {
    let ds = Dataset::load(&a.dataset)?;
    let report = kfold_scaling_search(&ds.data(Split::Train), &a.factors, a.k, &train_config(a.epochs, None), a.seed)?;
    for e in &report.entries {
        eprintln!("factor {:>6}: {:>8} params, mean MSE {:.4e}", e.factor, e.param_count, e.mean_mse);
    }
    eprintln!("selected factor {}", report.selected);
    print_json(&report, a.out.as_deref())
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let model = bundle::load(&a.model)?;
    let mut rest = vec![];
    let mut hyper = vec![];
    for p in &a.cip {
        for c in read_cips(p)? {
            match c.state {
                PhysioState::Rest => rest.push(c),
                PhysioState::Hyperemia => hyper.push(c),
            }
        }
    }
    let to_f32 = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
    let mut data = Data::new(model.task.in_channels(), INPUT_LENGTH);
    match model.task {
        Task::Imr => {
            for h in &hyper {
                data.push(&to_f32(&h.values), 0.0)?;
            }
        }
        Task::Cfr => {
            if rest.len() != hyper.len() {
                return Err(Error::Mismatch(format!(
                    "{} resting and {} hyperemic profiles cannot be paired",
                    rest.len(),
                    hyper.len()
                )));
            }
            for (r, h) in rest.iter().zip(&hyper) {
                let mut input = to_f32(&r.values);
                input.extend(to_f32(&h.values));
                data.push(&input, 0.0)?;
            }
        }
    }
    if data.is_empty() {
        return Err(Error::EmptyInput("no profiles of the state the model needs".into()));
    }
    print_json(&model.predict(&data)?, a.out.as_deref())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let model = bundle::load(&a.model)?;
    let ds = Dataset::load(&a.dataset)?;
    let report = evaluate(&model, &ds.data(Split::Test))?;
    eprintln!(
        "{}: n {} MSE {:.4} R² {:.4} mean σ² {:.4} r(|err|, σ) {}",
        report.task,
        report.n,
        report.mse,
        report.r2,
        report.mean_epistemic_variance,
        report.pearson_abs_error_sigma.map_or("n/a".into(), |r| format!("{r:.3}"))
    );
    if let Some(dir) = &a.figures {
        model_figures(dir, &model, &report)?;
    }
    print_json(&report, a.out.as_deref())
}

fn cmd_plot(a: &PlotArgs) -> Result<()> {
    let svg = if let Some(p) = &a.report {
        let r: Report = read_json(p)?;
        let t: Vec<f64> = r.scatter.iter().map(|s| s.target).collect();
        let m: Vec<f64> = r.scatter.iter().map(|s| s.mean).collect();
        let e: Vec<f64> = r.scatter.iter().map(|s| 1.96 * s.sigma).collect();
        let title = a.title.clone().unwrap_or_else(|| format!("{} (R² {:.3})", r.task, r.r2));
        scatter_plot(&t, &m, &e, &Axes::new(&title, "simulated", "predicted (±95% epistemic)"))?
    } else {
        if a.cip.is_empty() {
            return Err(Error::InvalidParameter("give --cip files or --report".into()));
        }
        let mut series = vec![];
        for p in &a.cip {
            let stem = p.file_stem().map_or("profile".into(), |s| s.to_string_lossy().into_owned());
            let cips = read_cips(p)?;
            let n = cips.len();
            for (i, c) in cips.iter().enumerate() {
                let label = if n == 1 { stem.clone() } else { format!("{stem} {} #{i}", c.state) };
                series.push(cip_series(&label, c));
            }
        }
        let title = a.title.clone().unwrap_or_else(|| "Contrast intensity profiles".into());
        line_plot(&series, &Axes::new(&title, "time since injection (s)", "normalized area"))?
    };
    write_svg(&a.out, &svg)?;
    println!("-> {}", a.out.display());
    Ok(())
}

fn cmd_reproduce(a: &ReproduceArgs) -> Result<()> {
    let out = a.out.resolve("reproduce")?;
    let cfg = if a.quick {
        ReproduceConfig::quick(a.seed)
    } else {
        ReproduceConfig::full(a.seed)
    };
    let exec = Execution {
        jobs: a.jobs,
        strict_determinism: a.strict_determinism,
    };
    let s = reproduce(&cfg, exec, &out)?;
    let r = &s.reference;
    println!(
        "reference: Q {:.3}/{:.3} L/min, P_sys {:.1}/{:.1}, P_dia {:.1}/{:.1} mmHg, CO +{:.1}%, CFR {:.3}, IMR {:.2}",
        r.rest.q_mean,
        r.hyperemia.q_mean,
        r.rest.p_sys,
        r.hyperemia.p_sys,
        r.rest.p_dia,
        r.hyperemia.p_dia,
        r.co_increase,
        r.indices.cfr,
        r.indices.imr
    );
    for (task, m) in [("imr", &s.imr), ("cfr", &s.cfr)] {
        println!(
            "{task}: n {} MSE {:.4} R² {:.4} mean σ² {:.4} r(|err|, σ) {}",
            m.n,
            m.mse,
            m.r2,
            m.mean_epistemic_variance,
            m.pearson_abs_error_sigma.map_or("n/a".into(), |r| format!("{r:.3}"))
        );
    }
    println!("-> {}", out.display());
    Ok(())
}

fn cmd_params(a: &ParamsArgs) -> Result<()> {
    if a.tree {
        println!("{}", VesselTree::default_tree().to_json());
        return Ok(());
    }
    let states = match a.state {
        Some(s) => vec![s],
        None => vec![PhysioState::Rest, PhysioState::Hyperemia],
    };
    let sets: Vec<_> = states.into_iter().map(reference_parameters).collect();
    print_json(&sets, None)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::GenDataset(a) => cmd_gen_dataset(a),
        Command::ComputeIndices(a) => cmd_compute_indices(a),
        Command::Train(a) => cmd_train(a),
        Command::ArchSearch(a) => cmd_arch_search(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Plot(a) => cmd_plot(a),
        Command::Reproduce(a) => cmd_reproduce(a),
        Command::Params(a) => cmd_params(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = serde_json::json!({ "error": e.to_string(), "kind": format!("{e:?}").split(['(', ' ', '{']).next().unwrap_or("Error") });
            eprintln!("{msg}");
            ExitCode::from(1)
        }
    }
}
