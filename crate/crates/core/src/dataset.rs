//! Training datasets built from campaign samples: the single-profile IMR
//! set, the paired rest/hyperemia CFR set, CSV persistence and manifests.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::campaign::{run_campaign, CampaignOptions, CampaignReport, Sample};
use crate::cip::{format_value, parse_value, value_columns, CIP_LENGTH};
use crate::design::lhs_sample;
use crate::error::{Error, Result};
use crate::export::{read_json, write_json};
use crate::indices::averaged_cfr;
use crate::lpm::{reference_parameters, PhysioState};
use crate::nn::{Data, Task};
use crate::vessel::VesselTree;

/// Largest CFR kept in the paired dataset.
pub const CFR_CAP: f64 = 4.0;

/// Sub-seed for one pipeline stage: the first eight bytes of
/// `sha256(seed_le ‖ tag)`.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

/// Lowercase hex SHA-256 of a serializable value's JSON form.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let d = Sha256::digest(serde_json::to_vec(value)?);
    Ok(d.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// One training example. For CFR rows `ids` is `[hyper, rest]`, `design`
/// holds the hyperemic then resting design variables, and `input` the
/// resting then hyperemic profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub ids: Vec<usize>,
    pub design: Vec<f64>,
    pub input: Vec<f32>,
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub task: Task,
    pub seed: u64,
    pub counts: SplitCounts,
    pub n_hyper_runs: usize,
    pub n_rest_runs: usize,
    /// CFR only: cross-product size before filtering, and how many were
    /// removed for exceeding the cap.
    pub pre_filter_pairs: Option<usize>,
    pub excluded_pairs: Option<usize>,
    pub holdout_hyper: Option<usize>,
    pub holdout_rest: Option<usize>,
    pub cfr_cap: Option<f64>,
    pub failed_runs: usize,
    pub target_units: String,
    pub campaign_hash: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub train: Vec<Row>,
    pub val: Vec<Row>,
    pub test: Vec<Row>,
}

impl Dataset {
    pub fn split(&self, s: Split) -> &[Row] {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// Network-ready copy of one split.
    pub fn data(&self, s: Split) -> Data {
        let mut d = Data::new(self.manifest.task.in_channels(), CIP_LENGTH);
        for r in self.split(s) {
            d.inputs.extend_from_slice(&r.input);
            d.targets.push(r.target);
        }
        d
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for s in Split::ALL {
            write_rows(&dir.join(format!("{}.csv", s.as_str())), self.manifest.task, self.split(s))?;
        }
        write_json(&dir.join("manifest.json"), &self.manifest)
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let manifest: DatasetManifest = read_json(&dir.join("manifest.json"))?;
        let mut rows: Vec<Vec<Row>> = Split::ALL
            .iter()
            .map(|s| read_rows(&dir.join(format!("{}.csv", s.as_str())), manifest.task))
            .collect::<Result<_>>()?;
        let test = rows.pop().unwrap_or_default();
        let val = rows.pop().unwrap_or_default();
        let train = rows.pop().unwrap_or_default();
        let ds = Dataset {
            manifest,
            train,
            val,
            test,
        };
        let c = ds.manifest.counts;
        if (ds.train.len(), ds.val.len(), ds.test.len()) != (c.train, c.val, c.test) {
            return Err(Error::Parse(format!(
                "{}: split sizes {}/{}/{} differ from manifest {}/{}/{}",
                dir.display(),
                ds.train.len(),
                ds.val.len(),
                ds.test.len(),
                c.train,
                c.val,
                c.test
            )));
        }
        Ok(ds)
    }
}

/// Column layout of a split file.
pub fn csv_header(task: Task) -> Vec<String> {
    let mut h: Vec<String> = vec![];
    match task {
        Task::Imr => {
            h.push("run_id".into());
            h.extend((1..=4).map(|i| format!("x{i}")));
            h.extend(value_columns(""));
        }
        Task::Cfr => {
            h.push("hyper_run".into());
            h.push("rest_run".into());
            h.extend((1..=4).map(|i| format!("h_x{i}")));
            h.extend((1..=4).map(|i| format!("r_x{i}")));
            h.extend(value_columns("rest_"));
            h.extend(value_columns("hyper_"));
        }
    }
    h.push("target".into());
    h
}

fn id_count(task: Task) -> usize {
    match task {
        Task::Imr => 1,
        Task::Cfr => 2,
    }
}

fn write_rows(path: &Path, task: Task, rows: &[Row]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(csv_header(task))?;
    let mut rec: Vec<String> = vec![];
    for r in rows {
        rec.clear();
        rec.extend(r.ids.iter().map(|i| i.to_string()));
        rec.extend(r.design.iter().map(|x| x.to_string()));
        rec.extend(r.input.iter().map(|v| format_value(*v as f64)));
        rec.push(r.target.to_string());
        w.write_record(&rec)?;
    }
    w.into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .flush()
        .map_err(|e| Error::io(path, e))
}

fn read_rows(path: &Path, task: Task) -> Result<Vec<Row>> {
    let mut r = csv::Reader::from_path(path)?;
    let expected = csv_header(task);
    if r.headers()?.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Parse(format!("{}: unexpected header for {task}", path.display())));
    }
    let n_ids = id_count(task);
    let n_design = 4 * n_ids;
    let bad = |what: &str, e: &dyn std::fmt::Display| Error::Parse(format!("{}: {what}: {e}", path.display()));
    let mut rows = vec![];
    for rec in r.records() {
        let rec = rec?;
        let ids = (0..n_ids)
            .map(|i| rec[i].parse::<usize>().map_err(|e| bad("run id", &e)))
            .collect::<Result<_>>()?;
        let design = (n_ids..n_ids + n_design)
            .map(|i| rec[i].parse::<f64>().map_err(|e| bad("design variable", &e)))
            .collect::<Result<_>>()?;
        let input = (n_ids + n_design..rec.len() - 1)
            .map(|i| parse_value(&rec[i]).map(|v| v as f32))
            .collect::<Result<_>>()?;
        let target = rec[rec.len() - 1].parse::<f64>().map_err(|e| bad("target", &e))?;
        rows.push(Row {
            ids,
            design,
            input,
            target,
        });
    }
    Ok(rows)
}

/// Split sizes for `n` samples: validation and test are floored, training
/// takes the remainder.
pub fn split_sizes(n: usize, val_fraction: f64, test_fraction: f64) -> SplitCounts {
    let val = (n as f64 * val_fraction + 1e-9).floor() as usize;
    let test = (n as f64 * test_fraction + 1e-9).floor() as usize;
    SplitCounts {
        train: n - val - test,
        val,
        test,
    }
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

fn cip_f32(s: &Sample) -> impl Iterator<Item = f32> + '_ {
    s.cip.values.iter().map(|&v| v as f32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImrSplitConfig {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for ImrSplitConfig {
    fn default() -> Self {
        ImrSplitConfig {
            train: 0.85,
            val: 0.05,
            test: 0.10,
        }
    }
}

/// Single-channel profiles with averaged IMR targets, shuffled into
/// train/val/test by `seed`.
pub fn build_imr_dataset(samples: &[Sample], split: ImrSplitConfig, seed: u64) -> Result<Dataset> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no hyperemic samples".into()));
    }
    if split.val < 0.0 || split.test < 0.0 || split.val + split.test >= 1.0 {
        return Err(Error::InvalidParameter(format!("split fractions {split:?}")));
    }
    let rows = samples
        .iter()
        .map(|s| {
            if s.design.state != PhysioState::Hyperemia {
                return Err(Error::InvalidParameter(format!("run {} is not hyperemic", s.run_id)));
            }
            let target = s
                .imr
                .ok_or_else(|| Error::InvalidParameter(format!("run {} has no IMR", s.run_id)))?;
            Ok(Row {
                ids: vec![s.run_id],
                design: s.design.values().to_vec(),
                input: cip_f32(s).collect(),
                target,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let counts = split_sizes(rows.len(), split.val, split.test);
    let order = shuffled(rows.len(), seed);
    let take = |r: std::ops::Range<usize>| order[r].iter().map(|&i| rows[i].clone()).collect::<Vec<_>>();
    let test = take(0..counts.test);
    let val = take(counts.test..counts.test + counts.val);
    let train = take(counts.test + counts.val..rows.len());
    Ok(Dataset {
        manifest: DatasetManifest {
            task: Task::Imr,
            seed,
            counts,
            n_hyper_runs: samples.len(),
            n_rest_runs: 0,
            pre_filter_pairs: None,
            excluded_pairs: None,
            holdout_hyper: None,
            holdout_rest: None,
            cfr_cap: None,
            failed_runs: 0,
            target_units: "mmHg·s".into(),
            campaign_hash: String::new(),
            config_hash: config_hash(&split)?,
        },
        train,
        val,
        test,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfrPairConfig {
    pub holdout_hyper: usize,
    pub holdout_rest: usize,
    pub cfr_cap: f64,
    /// Validation share of the non-holdout pairs.
    pub val_fraction: f64,
}

impl Default for CfrPairConfig {
    fn default() -> Self {
        CfrPairConfig {
            holdout_hyper: 60,
            holdout_rest: 10,
            cfr_cap: CFR_CAP,
            val_fraction: 0.1,
        }
    }
}

impl CfrPairConfig {
    /// Holds out a tenth of each campaign.
    pub fn for_counts(n_hyper: usize, n_rest: usize) -> Self {
        CfrPairConfig {
            holdout_hyper: n_hyper / 10,
            holdout_rest: n_rest / 10,
            ..Self::default()
        }
    }
}

fn pair_row(h: &Sample, r: &Sample) -> Result<Row> {
    let target = averaged_cfr(&r.t_mn, &h.t_mn)?;
    let mut design = h.design.values().to_vec();
    design.extend(r.design.values());
    Ok(Row {
        ids: vec![h.run_id, r.run_id],
        design,
        input: cip_f32(r).chain(cip_f32(h)).collect(),
        target,
    })
}

/// Cross product of `hyper × rest` with the cap applied; returns the kept
/// rows and the pre-filter count.
fn pairs(hyper: &[&Sample], rest: &[&Sample], cap: f64) -> Result<(Vec<Row>, usize)> {
    let mut out = vec![];
    for h in hyper {
        for r in rest {
            let row = pair_row(h, r)?;
            if row.target <= cap {
                out.push(row);
            }
        }
    }
    Ok((out, hyper.len() * rest.len()))
}

/// Seeded draw of `k` held-out samples; both parts keep run order.
fn partition(samples: &[Sample], k: usize, seed: u64) -> (Vec<&Sample>, Vec<&Sample>) {
    let order = shuffled(samples.len(), seed);
    let mut held = order[..k].to_vec();
    let mut kept = order[k..].to_vec();
    held.sort_unstable();
    kept.sort_unstable();
    (
        held.iter().map(|&i| &samples[i]).collect(),
        kept.iter().map(|&i| &samples[i]).collect(),
    )
}

/// Dual-channel (rest, hyperemia) profile pairs with averaged CFR targets.
/// A seeded draw holds out whole simulations for testing, so no holdout run
/// contributes to a training or validation pair.
pub fn build_cfr_dataset(hyper: &[Sample], rest: &[Sample], cfg: CfrPairConfig, seed: u64) -> Result<Dataset> {
    if hyper.iter().any(|s| s.design.state != PhysioState::Hyperemia)
        || rest.iter().any(|s| s.design.state != PhysioState::Rest)
    {
        return Err(Error::InvalidParameter("CFR pairing needs hyperemic and resting samples".into()));
    }
    if cfg.holdout_hyper >= hyper.len() || cfg.holdout_rest >= rest.len() {
        return Err(Error::InsufficientData(format!(
            "holdout {}/{} leaves no training runs from {}/{}",
            cfg.holdout_hyper,
            cfg.holdout_rest,
            hyper.len(),
            rest.len()
        )));
    }
    let (h_test, h_train) = partition(hyper, cfg.holdout_hyper, derive_seed(seed, "holdout-hyperemia"));
    let (r_test, r_train) = partition(rest, cfg.holdout_rest, derive_seed(seed, "holdout-rest"));

    let (kept, pre_filter) = pairs(&h_train, &r_train, cfg.cfr_cap)?;
    if kept.is_empty() {
        return Err(Error::EmptyAfterFilter(format!("all {pre_filter} pairs exceed CFR {}", cfg.cfr_cap)));
    }
    let excluded = pre_filter - kept.len();
    let n_val = (kept.len() as f64 * cfg.val_fraction + 1e-9).floor() as usize;
    let order = shuffled(kept.len(), derive_seed(seed, "pair-split"));
    let val = order[..n_val].iter().map(|&i| kept[i].clone()).collect::<Vec<_>>();
    let train = order[n_val..].iter().map(|&i| kept[i].clone()).collect::<Vec<_>>();
    let (test, _) = pairs(&h_test, &r_test, cfg.cfr_cap)?;
    Ok(Dataset {
        manifest: DatasetManifest {
            task: Task::Cfr,
            seed,
            counts: SplitCounts {
                train: train.len(),
                val: val.len(),
                test: test.len(),
            },
            n_hyper_runs: hyper.len(),
            n_rest_runs: rest.len(),
            pre_filter_pairs: Some(pre_filter),
            excluded_pairs: Some(excluded),
            holdout_hyper: Some(cfg.holdout_hyper),
            holdout_rest: Some(cfg.holdout_rest),
            cfr_cap: Some(cfg.cfr_cap),
            failed_runs: 0,
            target_units: "1".into(),
            campaign_hash: String::new(),
            config_hash: config_hash(&cfg)?,
        },
        train,
        val,
        test,
    })
}

/// Campaign sizes and options for dataset generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignPlan {
    pub n_hyper: usize,
    pub n_rest: usize,
    pub seed: u64,
    pub options: CampaignOptions,
}

impl CampaignPlan {
    pub fn new(n_hyper: usize, n_rest: usize, seed: u64) -> Self {
        CampaignPlan {
            n_hyper,
            n_rest,
            seed,
            options: CampaignOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaigns {
    pub plan: CampaignPlan,
    pub hyper: CampaignReport,
    pub rest: CampaignReport,
}

impl Campaigns {
    pub fn failed_runs(&self) -> usize {
        self.hyper.failures.len() + self.rest.failures.len()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Campaigns> {
        read_json(path)
    }
}

/// LHS designs for both states (seeds derived from `plan.seed`) run on the
/// reference parameter sets. `n_rest` may be zero.
pub fn run_campaigns(plan: &CampaignPlan, tree: &VesselTree) -> Result<Campaigns> {
    let run = |state: PhysioState, n: usize| -> Result<CampaignReport> {
        if n == 0 {
            return Ok(CampaignReport {
                samples: vec![],
                failures: vec![],
            });
        }
        let points = lhs_sample(n, state, derive_seed(plan.seed, &format!("lhs-{state}")));
        log::info!("running {n} {state} simulations");
        run_campaign(&points, &reference_parameters(state), tree, &plan.options)
    };
    Ok(Campaigns {
        plan: *plan,
        hyper: run(PhysioState::Hyperemia, plan.n_hyper)?,
        rest: run(PhysioState::Rest, plan.n_rest)?,
    })
}

/// Builds the dataset for `task` from finished campaigns and stamps the
/// manifest with campaign provenance.
pub fn build_dataset(task: Task, campaigns: &Campaigns) -> Result<Dataset> {
    let seed = campaigns.plan.seed;
    let mut ds = match task {
        Task::Imr => build_imr_dataset(&campaigns.hyper.samples, ImrSplitConfig::default(), derive_seed(seed, "imr-split"))?,
        Task::Cfr => build_cfr_dataset(
            &campaigns.hyper.samples,
            &campaigns.rest.samples,
            CfrPairConfig::for_counts(campaigns.plan.n_hyper, campaigns.plan.n_rest),
            derive_seed(seed, "cfr-split"),
        )?,
    };
    ds.manifest.seed = seed;
    ds.manifest.n_hyper_runs = campaigns.hyper.samples.len();
    ds.manifest.n_rest_runs = campaigns.rest.samples.len();
    ds.manifest.failed_runs = campaigns.failed_runs();
    ds.manifest.campaign_hash = config_hash(&campaigns.plan)?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_rounding() {
        assert_eq!(split_sizes(600, 0.05, 0.10), SplitCounts { train: 510, val: 30, test: 60 });
        assert_eq!(split_sizes(20, 0.05, 0.10), SplitCounts { train: 17, val: 1, test: 2 });
        assert_eq!(split_sizes(7, 0.05, 0.10), SplitCounts { train: 7, val: 0, test: 0 });
    }

    #[test]
    fn derived_seeds_differ_by_tag() {
        assert_eq!(derive_seed(42, "a"), derive_seed(42, "a"));
        assert_ne!(derive_seed(42, "a"), derive_seed(42, "b"));
        assert_ne!(derive_seed(42, "a"), derive_seed(43, "a"));
    }

    #[test]
    fn headers() {
        assert_eq!(csv_header(Task::Imr).len(), 1 + 4 + 256 + 1);
        let h = csv_header(Task::Cfr);
        assert_eq!(h.len(), 2 + 8 + 512 + 1);
        assert_eq!(h[10], "rest_c000");
        assert_eq!(h[266], "hyper_c000");
    }
}
