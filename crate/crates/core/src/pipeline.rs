//! End-to-end runs over directories: reference study, stenosis study,
//! campaigns, datasets, ensembles, evaluation and figures.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::campaign::{run_point_full, CampaignOptions, RunDiagnostics, RunOutput};
use crate::cip::Cip;
use crate::dataset::{build_dataset, config_hash, derive_seed, run_campaigns, CampaignPlan, Campaigns, Dataset, Split};
use crate::design::DesignPoint;
use crate::error::{Error, Result};
use crate::export::{distal_table, field_table, read_json, simulation_table, write_cips, write_json};
use crate::hemo::{summarize_hemodynamics, HemoMetrics};
use crate::indices::{average_indices, distal_pressures, ffr, CmdIndices};
use crate::lpm::{reference_parameters, PhysioState};
use crate::nn::{bundle, evaluate, train_ensemble, EnsembleModel, NetworkSpec, Report, Task, TrainConfig};
use crate::plot::{line_plot, scatter_plot, write_svg, Axes, Series};
use crate::units::{pa_to_mmhg, BLOOD_VISCOSITY};
use crate::vessel::{BranchLabel, VesselTree};

/// Epoch cap for CFR members. The CFR training set is ~80× larger than the
/// IMR one, so each epoch costs proportionally more.
pub const CFR_MAX_EPOCHS: usize = 12;

/// Values the reference runs are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchors {
    /// L/min, rest then hyperemia.
    pub q_mean: [f64; 2],
    /// mmHg.
    pub p_sys: [f64; 2],
    pub p_dia: [f64; 2],
    /// Percent.
    pub co_increase: f64,
    pub cfr: f64,
}

pub const ANCHORS: Anchors = Anchors {
    q_mean: [4.982, 8.990],
    p_sys: [129.527, 125.045],
    p_dia: [81.070, 73.657],
    co_increase: 80.456,
    cfr: 3.097,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStudy {
    pub rest: HemoMetrics,
    pub hyperemia: HemoMetrics,
    /// Hyperemic over resting cardiac output, percent increase.
    pub co_increase: f64,
    pub indices: CmdIndices,
    /// Hyperemic FFR per outlet.
    pub ffr: BTreeMap<BranchLabel, f64>,
    pub anchors: Anchors,
}

/// Rest and hyperemia runs at the reference parameters.
pub fn reference_runs(tree: &VesselTree, opts: &CampaignOptions) -> Result<[RunOutput; 2]> {
    let run = |state| {
        run_point_full(0, &DesignPoint::identity(state), &reference_parameters(state), tree, opts)
    };
    Ok([run(PhysioState::Rest)?, run(PhysioState::Hyperemia)?])
}

pub fn reference_study(runs: &[RunOutput; 2]) -> Result<ReferenceStudy> {
    let [rest, hyper] = runs;
    let m_rest = summarize_hemodynamics(&rest.hemo)?;
    let m_hyper = summarize_hemodynamics(&hyper.hemo)?;
    let p_d = distal_pressures(&hyper.hemo)?;
    let ffr = BranchLabel::OUTLETS
        .iter()
        .map(|&b| Ok((b, ffr(&hyper.hemo, b)?)))
        .collect::<Result<_>>()?;
    Ok(ReferenceStudy {
        co_increase: 100.0 * (m_hyper.q_mean / m_rest.q_mean - 1.0),
        rest: m_rest,
        hyperemia: m_hyper,
        indices: average_indices(&rest.sample.t_mn, &hyper.sample.t_mn, &p_d)?,
        ffr,
        anchors: ANCHORS,
    })
}

/// Hyperemic comparison of a healthy run, the same run with a narrowed
/// LAD, and a microvascular-disease run with scaled distal resistance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StenosisStudy {
    pub area_reduction: f64,
    pub cmd_x2: f64,
    pub ffr_lad_healthy: f64,
    pub ffr_lad_stenosed: f64,
    pub ffr_lad_cmd: f64,
    /// Seconds from injection onset to half the peak, on the way down.
    pub half_decay_healthy: f64,
    pub half_decay_stenosed: f64,
    pub half_decay_cmd: f64,
    pub cips: [Cip; 3],
}

pub fn stenosis_study(tree: &VesselTree, area_reduction: f64, cmd_x2: f64, opts: &CampaignOptions) -> Result<StenosisStudy> {
    let state = PhysioState::Hyperemia;
    let base = reference_parameters(state);
    let healthy = DesignPoint::identity(state);
    let cmd = DesignPoint { x2: cmd_x2, ..healthy };
    cmd.check_range()?;
    let narrowed = tree.apply_stenosis("lad", area_reduction, BLOOD_VISCOSITY)?;
    let runs = [
        run_point_full(0, &healthy, &base, tree, opts)?,
        run_point_full(1, &healthy, &base, &narrowed, opts)?,
        run_point_full(2, &cmd, &base, tree, opts)?,
    ];
    let decay = |r: &RunOutput| {
        r.sample
            .cip
            .half_decay_time()
            .ok_or_else(|| Error::DegenerateSeries("profile never decays to half its peak".into()))
    };
    let lad = |r: &RunOutput| ffr(&r.hemo, BranchLabel::Lad);
    Ok(StenosisStudy {
        area_reduction,
        cmd_x2,
        ffr_lad_healthy: lad(&runs[0])?,
        ffr_lad_stenosed: lad(&runs[1])?,
        ffr_lad_cmd: lad(&runs[2])?,
        half_decay_healthy: decay(&runs[0])?,
        half_decay_stenosed: decay(&runs[1])?,
        half_decay_cmd: decay(&runs[2])?,
        cips: runs.map(|r| r.sample.cip),
    })
}

/// Per-run indices and hemodynamics, as written by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub design: DesignPoint,
    pub hemodynamics: HemoMetrics,
    /// Mean transit time per outlet, s.
    pub t_mn: BTreeMap<BranchLabel, f64>,
    /// Cycle-mean distal pressure per outlet, mmHg.
    pub p_d: BTreeMap<BranchLabel, f64>,
    pub ffr: BTreeMap<BranchLabel, f64>,
    pub imr: Option<f64>,
    pub diagnostics: RunDiagnostics,
}

pub fn run_record(run: &RunOutput) -> Result<RunRecord> {
    Ok(RunRecord {
        design: run.sample.design,
        hemodynamics: summarize_hemodynamics(&run.hemo)?,
        t_mn: run.sample.t_mn.clone(),
        p_d: distal_pressures(&run.hemo)?,
        ffr: BranchLabel::OUTLETS
            .iter()
            .map(|&b| Ok((b, ffr(&run.hemo, b)?)))
            .collect::<Result<_>>()?,
        imr: run.sample.imr,
        diagnostics: run.sample.diagnostics,
    })
}

/// Per-vessel and averaged indices of a (rest, hyperemia) record pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRecord {
    pub indices: CmdIndices,
    /// Hyperemic FFR per outlet.
    pub ffr: BTreeMap<BranchLabel, f64>,
}

pub fn combine_records(rest: &RunRecord, hyper: &RunRecord) -> Result<IndexRecord> {
    if rest.design.state != PhysioState::Rest || hyper.design.state != PhysioState::Hyperemia {
        return Err(Error::Mismatch(format!(
            "expected a rest and a hyperemia run, got {} and {}",
            rest.design.state, hyper.design.state
        )));
    }
    Ok(IndexRecord {
        indices: average_indices(&rest.t_mn, &hyper.t_mn, &hyper.p_d)?,
        ffr: hyper.ffr.clone(),
    })
}

/// Writes a run directory: downsampled series (CSV and binary), outlet
/// concentrations, the profile, the run record and optionally every
/// transport snapshot.
pub fn write_run(out: &Path, run: &RunOutput, stride: usize, dump_field: bool) -> Result<RunRecord> {
    let series = simulation_table(&run.hemo.downsample(stride.max(1)));
    series.write_csv(&out.join("series.csv"))?;
    series.write_binary(&out.join("series.bin"))?;
    distal_table(&run.field).write_csv(&out.join("distal.csv"))?;
    if dump_field {
        field_table(&run.field).write_binary(&out.join("field.bin"))?;
    }
    write_cips(&out.join("cip.csv"), std::slice::from_ref(&run.sample.cip))?;
    let record = run_record(run)?;
    write_json(&out.join("summary.json"), &record)?;
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReproduceConfig {
    pub seed: u64,
    pub n_hyper: usize,
    pub n_rest: usize,
    pub factor: f64,
    pub ensemble: usize,
    pub imr_train: TrainConfig,
    pub cfr_train: TrainConfig,
    pub stenosis_area_reduction: f64,
    pub stenosis_cmd_x2: f64,
}

impl ReproduceConfig {
    /// 600 hyperemic and 100 resting runs, five-member ensembles at unit width.
    pub fn full(seed: u64) -> Self {
        ReproduceConfig {
            seed,
            n_hyper: 600,
            n_rest: 100,
            factor: 1.0,
            ensemble: 5,
            imr_train: TrainConfig::default(),
            cfr_train: TrainConfig {
                max_epochs: CFR_MAX_EPOCHS,
                ..TrainConfig::default()
            },
            stenosis_area_reduction: 0.9,
            stenosis_cmd_x2: 3.0,
        }
    }

    /// A few-minute smoke configuration exercising every stage.
    pub fn quick(seed: u64) -> Self {
        let short = TrainConfig {
            max_epochs: 3,
            ..TrainConfig::default()
        };
        ReproduceConfig {
            n_hyper: 40,
            n_rest: 20,
            factor: 0.125,
            ensemble: 2,
            imr_train: short,
            cfr_train: short,
            ..Self::full(seed)
        }
    }

    pub fn train_config(&self, task: Task) -> TrainConfig {
        match task {
            Task::Imr => self.imr_train,
            Task::Cfr => self.cfr_train,
        }
    }
}

/// Scheduling knobs; they never change results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Execution {
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    /// Run everything on one thread.
    pub strict_determinism: bool,
}

impl Execution {
    pub fn threads(&self) -> usize {
        if self.strict_determinism {
            1
        } else {
            self.jobs
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub crate_version: String,
    pub config: ReproduceConfig,
    pub config_hash: String,
    /// sha256 of every artifact, keyed by path relative to the output root.
    pub artifacts: BTreeMap<String, String>,
}

/// Headline metrics of one ensemble, without the per-sample scatter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub n: usize,
    pub mse: f64,
    pub r2: f64,
    pub mean_epistemic_variance: f64,
    pub pearson_abs_error_sigma: Option<f64>,
}

impl From<&Report> for MetricsRow {
    fn from(r: &Report) -> Self {
        MetricsRow {
            n: r.n,
            mse: r.mse,
            r2: r.r2,
            mean_epistemic_variance: r.mean_epistemic_variance,
            pearson_abs_error_sigma: r.pearson_abs_error_sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub reference: ReferenceStudy,
    pub stenosis: StenosisStudy,
    pub failed_runs: usize,
    pub imr: MetricsRow,
    pub cfr: MetricsRow,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn files_under(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            files_under(root, &p, out)?;
        } else {
            out.push(p.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

const UNHASHED: [&str; 2] = ["manifest.json", "timings.json"];

/// sha256 of every file under `root` except the manifest and timings.
pub fn digest_tree(root: &Path) -> Result<BTreeMap<String, String>> {
    let mut files = vec![];
    files_under(root, root, &mut files)?;
    files
        .into_iter()
        .filter(|p| !UNHASHED.iter().any(|u| p == Path::new(u)))
        .map(|p| {
            let full = root.join(&p);
            let bytes = fs::read(&full).map_err(|e| Error::io(&full, e))?;
            Ok((p.to_string_lossy().replace('\\', "/"), sha256_hex(&bytes)))
        })
        .collect()
}

/// Checks every artifact listed in `root/manifest.json` against its digest.
pub fn verify(root: &Path) -> Result<Manifest> {
    let m: Manifest = read_json(&root.join("manifest.json"))?;
    let now = digest_tree(root)?;
    if now != m.artifacts {
        return Err(Error::Mismatch(format!("artifacts under {} differ from the manifest", root.display())));
    }
    Ok(m)
}

pub fn cip_series(label: &str, c: &Cip) -> Series {
    let t = c.times().iter().map(|t| t - c.window_start).collect();
    Series::new(label, t, c.values.clone())
}

fn reference_figures(out: &Path, runs: &[RunOutput; 2], stenosis: &StenosisStudy) -> Result<()> {
    let [rest, hyper] = runs;
    let svg = line_plot(
        &[cip_series("rest", &rest.sample.cip), cip_series("hyperemia", &hyper.sample.cip)],
        &Axes::new("Reference contrast intensity profiles", "time since injection (s)", "normalized area"),
    )?;
    write_svg(&out.join("figures/cip_reference.svg"), &svg)?;
    let pressure = |label: &str, r: &RunOutput| -> Result<Series> {
        let h = r.hemo.downsample(10);
        let range = h.final_cycle()?;
        let t0 = h.t[range.start];
        Ok(Series::new(
            label,
            h.t[range.clone()].iter().map(|t| t - t0).collect(),
            h.p_ao[range].iter().map(|&p| pa_to_mmhg(p)).collect(),
        ))
    };
    let svg = line_plot(
        &[pressure("rest", rest)?, pressure("hyperemia", hyper)?],
        &Axes::new("Aortic pressure, final cycle", "time in cycle (s)", "pressure (mmHg)"),
    )?;
    write_svg(&out.join("figures/aortic_pressure_reference.svg"), &svg)?;
    let [h, s, c] = &stenosis.cips;
    let svg = line_plot(
        &[
            cip_series("healthy", h),
            cip_series(&format!("{:.0}% LAD stenosis", 100.0 * stenosis.area_reduction), s),
            cip_series(&format!("distal resistance ×{}", stenosis.cmd_x2), c),
        ],
        &Axes::new("Hyperemic profiles: epicardial vs microvascular disease", "time since injection (s)", "normalized area"),
    )?;
    write_svg(&out.join("figures/cip_stenosis.svg"), &svg)
}

/// Scatter and validation-curve SVGs written into `dir`.
pub fn model_figures(dir: &Path, model: &EnsembleModel, report: &Report) -> Result<()> {
    let task = model.task;
    let truth: Vec<f64> = report.scatter.iter().map(|p| p.target).collect();
    let mean: Vec<f64> = report.scatter.iter().map(|p| p.mean).collect();
    let err: Vec<f64> = report.scatter.iter().map(|p| 1.96 * p.sigma).collect();
    let svg = scatter_plot(
        &truth,
        &mean,
        &err,
        &Axes::new(
            &format!("{task}: ensemble prediction vs simulation (R² {:.3})", report.r2),
            "simulated",
            "predicted (±95% epistemic)",
        ),
    )?;
    write_svg(&dir.join(format!("{task}_scatter.svg")), &svg)?;
    let curves: Vec<Series> = model
        .histories
        .iter()
        .enumerate()
        .map(|(k, h)| {
            Series::new(
                format!("member {k}"),
                (0..h.val_mse.len()).map(|e| e as f64).collect(),
                h.val_mse.iter().map(|v| v.log10()).collect(),
            )
        })
        .collect();
    let svg = line_plot(&curves, &Axes::new(&format!("{task}: validation loss"), "epoch", "log10 MSE"))?;
    write_svg(&dir.join(format!("{task}_training.svg")), &svg)
}

/// Trains one ensemble on a dataset directory's train/val splits.
pub fn train_task(ds: &Dataset, task: Task, factor: f64, members: usize, cfg: &TrainConfig, seed: u64, jobs: usize) -> Result<EnsembleModel> {
    let spec = NetworkSpec::for_task(task, factor)?;
    train_ensemble(task, &spec, &ds.data(Split::Train), &ds.data(Split::Val), cfg, members, seed, jobs)
}

/// Runs the whole chain into `out` and writes `manifest.json` last. Every
/// artifact except `timings.json` is a pure function of `cfg`.
pub fn reproduce(cfg: &ReproduceConfig, exec: Execution, out: &Path) -> Result<Summary> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let threads = exec.threads();
    let tree = VesselTree::default_tree();
    let opts = CampaignOptions {
        jobs: threads,
        ..CampaignOptions::default()
    };
    let mut timings: BTreeMap<String, f64> = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str| {
        let s = clock.elapsed().as_secs_f64();
        log::info!("{name}: {s:.1} s");
        timings.insert(name.into(), s);
        clock = Instant::now();
    };

    let runs = reference_runs(&tree, &opts)?;
    let reference = reference_study(&runs)?;
    write_json(&out.join("reference/report.json"), &reference)?;
    write_cips(
        &out.join("reference/cips.csv"),
        &[runs[0].sample.cip.clone(), runs[1].sample.cip.clone()],
    )?;
    let stenosis = stenosis_study(&tree, cfg.stenosis_area_reduction, cfg.stenosis_cmd_x2, &opts)?;
    write_json(&out.join("reports/stenosis.json"), &stenosis)?;
    reference_figures(out, &runs, &stenosis)?;
    drop(runs);
    lap("reference");

    let plan = CampaignPlan {
        options: opts,
        ..CampaignPlan::new(cfg.n_hyper, cfg.n_rest, cfg.seed)
    };
    let campaigns = run_campaigns(&plan, &tree)?;
    // Scheduling is not part of the result.
    let stored = Campaigns {
        plan: CampaignPlan {
            options: CampaignOptions {
                jobs: 0,
                ..plan.options
            },
            ..plan
        },
        ..campaigns
    };
    stored.save(&out.join("campaigns.json"))?;
    lap("campaigns");

    let mut rows = BTreeMap::new();
    for task in [Task::Imr, Task::Cfr] {
        let ds = build_dataset(task, &stored)?;
        ds.save(&out.join(format!("datasets/{task}")))?;
        lap(&format!("{task}_dataset"));
        let model = train_task(
            &ds,
            task,
            cfg.factor,
            cfg.ensemble,
            &cfg.train_config(task),
            derive_seed(cfg.seed, &format!("{task}-ensemble")),
            threads,
        )?;
        bundle::save(&model, &out.join(format!("models/{task}")))?;
        lap(&format!("{task}_training"));
        let report = evaluate(&model, &ds.data(Split::Test))?;
        write_json(&out.join(format!("reports/{task}_eval.json")), &report)?;
        model_figures(&out.join("figures"), &model, &report)?;
        rows.insert(task, MetricsRow::from(&report));
        lap(&format!("{task}_eval"));
    }

    let summary = Summary {
        reference,
        stenosis,
        failed_runs: stored.failed_runs(),
        imr: rows[&Task::Imr].clone(),
        cfr: rows[&Task::Cfr].clone(),
    };
    write_json(&out.join("reports/summary.json"), &summary)?;
    let manifest = Manifest {
        crate_version: env!("CARGO_PKG_VERSION").into(),
        config: *cfg,
        config_hash: config_hash(cfg)?,
        artifacts: digest_tree(out)?,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    let total: f64 = timings.values().sum();
    timings.insert("total".into(), total);
    #[derive(Serialize)]
    struct Timings<'a> {
        execution: Execution,
        seconds: &'a BTreeMap<String, f64>,
    }
    write_json(
        &out.join("timings.json"),
        &Timings {
            execution: exec,
            seconds: &timings,
        },
    )?;
    Ok(summary)
}
