//! End-to-end runs that read inputs, fit, and write artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::estimate::{pairwise_coclustering, CoclusteringMatrix, ItemKind};
use crate::io::config::RunConfig;
use crate::io::tables::{
    fmt_f64, fmt_opt, load_clinical, load_platform, read_allocation, read_numeric_table, write_allocation,
    write_matrix, CsvOut,
};
use crate::mcmc::{run_stage1, DiagnosticRecord, Stage1Result};
use crate::model::{ClusterState, LatentCell, LatentMatrices, LatentMatrix, Matrix, TransformedDataset};
use crate::rng;
use crate::selection::{merge_clusters, run_stage2, MergedClusters, SelectionProblem, SelectionResult};
use crate::simulation::{
    generate_survival, generate_synthetic, run_replication_study, summarize, ReplicateResult,
};

pub const MANIFEST: &str = "manifest.jsonl";
pub const TIMINGS: &str = "timings.jsonl";

/// Load every configured platform and, when present, the clinical file.
/// All platforms must list the same patients in the same order.
pub fn load_dataset(config: &RunConfig) -> Result<TransformedDataset> {
    let mut platforms = Vec::with_capacity(config.platforms.len());
    let mut ids: Option<Vec<String>> = None;
    for (t, spec) in config.platforms.iter().enumerate() {
        let (m, these) = load_platform(&spec.path, t, spec.transform, spec.clip_eps)?;
        match &ids {
            None => ids = Some(these),
            Some(first) => {
                if first.len() != these.len() {
                    return Err(Error::Structural(format!(
                        "{} lists {} patients, the first platform {}",
                        spec.path.display(),
                        these.len(),
                        first.len()
                    )));
                }
                if let Some(i) = (0..first.len()).find(|&i| first[i] != these[i]) {
                    return Err(Error::Structural(format!(
                        "{}: patient `{}` on row {} where the first platform has `{}`",
                        spec.path.display(),
                        these[i],
                        i + 1,
                        first[i]
                    )));
                }
            }
        }
        platforms.push(m);
    }
    let ids = ids.ok_or_else(|| Error::Config("no platforms configured".into()))?;
    let clinical = match &config.clinical {
        Some(c) => Some(load_clinical(&c.path, &ids)?),
        None => None,
    };
    TransformedDataset::new(platforms, ids, clinical)
}

fn platform_file(out: &Path, t: usize, what: &str) -> PathBuf {
    out.join(format!("platform{}_{what}.csv", t + 1))
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

struct JsonLines {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonLines {
    fn create(path: PathBuf) -> Result<Self> {
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            out: BufWriter::new(file),
            path,
        })
    }

    fn line(&mut self, value: &impl Serialize) -> Result<()> {
        let text = serde_json::to_string(value).map_err(|e| Error::Structural(e.to_string()))?;
        writeln!(self.out, "{text}").map_err(|e| Error::io(&self.path, e))
    }

    fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn write_coclustering(path: &Path, names: &[String], pi: &CoclusteringMatrix) -> Result<()> {
    let n = pi.n_items();
    let m = Matrix::new(n, n, (0..n).flat_map(|a| pi.row(a).to_vec()).collect())?;
    write_matrix(path, "item", names, names, &m)
}

fn write_atoms(path: &Path, m: &LatentMatrix) -> Result<()> {
    let mut out = CsvOut::create(path)?;
    out.row(std::iter::once("row_cluster".to_string()).chain(labels("c", m.cols())))?;
    for h in 0..m.rows() {
        out.row(std::iter::once(format!("r{}", h + 1)).chain(m.row(h).iter().map(|c| c.atom.to_string())))?;
    }
    out.finish()
}

fn read_atoms(path: &Path) -> Result<Vec<Vec<u64>>> {
    let t = read_numeric_table(path)?;
    Ok((0..t.values.rows()).map(|h| t.values.row(h).iter().map(|&v| v as u64).collect()).collect())
}

/// Order items by cluster label, keeping file order within a cluster.
fn cluster_order(labels: &[usize]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..labels.len()).collect();
    idx.sort_by_key(|&i| (labels[i], i));
    idx
}

fn write_heatmap(path: &Path, data: &TransformedDataset, t: usize, state: &ClusterState) -> Result<()> {
    let p = &data.platforms[t];
    let rows = cluster_order(&state.rows);
    let cols = cluster_order(&state.columns[t]);
    let mut out = CsvOut::create(path)?;
    out.row(
        ["patient_id".to_string(), "row_cluster".to_string()]
            .into_iter()
            .chain(cols.iter().map(|&j| p.probe_names[j].clone())),
    )?;
    out.row(
        ["column_cluster".to_string(), String::new()]
            .into_iter()
            .chain(cols.iter().map(|&j| (state.columns[t][j] + 1).to_string())),
    )?;
    for &i in &rows {
        out.row(
            [data.patient_ids[i].clone(), (state.rows[i] + 1).to_string()]
                .into_iter()
                .chain(cols.iter().map(|&j| fmt_f64(p.values.get(i, j)))),
        )?;
    }
    out.finish()
}

fn write_diagnostics(path: &Path, diags: &[DiagnosticRecord], n_platforms: usize) -> Result<()> {
    let mut out = CsvOut::create(path)?;
    let mut header = vec!["stage".to_string(), "sweep".into(), "row_clusters".into()];
    for prefix in ["column_clusters", "sigma", "discount", "discount_acceptance"] {
        header.extend((1..=n_platforms).map(|t| format!("{prefix}_{t}")));
    }
    header.extend(["atoms".to_string(), "log_posterior".into()]);
    out.row(&header)?;
    for d in diags {
        let mut row = vec![d.stage.tag().to_string(), d.sweep.to_string(), d.row_clusters.to_string()];
        row.extend(d.column_clusters.iter().map(|k| k.to_string()));
        for v in [&d.sigma, &d.discount, &d.discount_acceptance] {
            row.extend(v.iter().map(|&x| fmt_f64(x)));
        }
        row.extend([d.atoms.to_string(), fmt_f64(d.log_posterior)]);
        out.row(&row)?;
    }
    out.finish()
}

fn write_selection(path: &Path, data: &TransformedDataset, merged: &MergedClusters, sel: &SelectionResult) -> Result<()> {
    let mut out = CsvOut::create(path)?;
    out.row([
        "cluster",
        "size",
        "members",
        "b_hat",
        "linear",
        "nonlinear",
        "selected",
        "representative_freq",
    ])?;
    for (k, c) in merged.clusters.iter().enumerate() {
        let name = |&(t, j): &(usize, usize)| format!("{}:{}", t + 1, data.platforms[t].probe_names[j]);
        let members: Vec<String> = c.members.iter().map(name).collect();
        let reps: Vec<String> = c
            .members
            .iter()
            .zip(&sel.representative_freq[k])
            .map(|(m, f)| format!("{}={}", name(m), fmt_f64(*f)))
            .collect();
        out.row([
            (k + 1).to_string(),
            c.size().to_string(),
            members.join(";"),
            fmt_f64(sel.inclusion[k]),
            fmt_f64(sel.linear[k]),
            fmt_f64(sel.nonlinear[k]),
            u8::from(sel.fdr.selected.contains(&k)).to_string(),
            reps.join(";"),
        ])?;
    }
    out.finish()
}

/// Write every Stage-1 artifact into `out`.
pub fn write_stage1(out: &Path, data: &TransformedDataset, result: &Stage1Result) -> Result<()> {
    let state = result.state();
    for (t, p) in data.platforms.iter().enumerate() {
        write_allocation(&platform_file(out, t, "column_allocation"), "probe", &p.probe_names, &state.columns[t])?;
        let samples: Vec<&[usize]> = result
            .trace_a
            .samples
            .iter()
            .map(|s| s.columns.as_ref().expect("1a records columns")[t].as_slice())
            .collect();
        let pi = pairwise_coclustering(&samples, ItemKind::Probe)?;
        write_coclustering(&platform_file(out, t, "column_coclustering"), &p.probe_names, &pi)?;
        let phi = &result.phi_mean[t];
        write_matrix(
            &platform_file(out, t, "phi"),
            "row_cluster",
            &labels("c", phi.cols()),
            &labels("r", phi.rows()),
            phi,
        )?;
        write_atoms(&platform_file(out, t, "atoms"), &result.final_chain.latents.platforms[t])?;
        write_heatmap(&platform_file(out, t, "heatmap"), data, t, state)?;
    }
    write_allocation(&out.join("row_allocation.csv"), "patient_id", &data.patient_ids, &state.rows)?;
    let rows: Vec<&[usize]> = result
        .trace_b
        .samples
        .iter()
        .map(|s| s.rows.as_deref().expect("1b records rows"))
        .collect();
    let pi = pairwise_coclustering(&rows, ItemKind::Subject)?;
    write_coclustering(&out.join("row_coclustering.csv"), &data.patient_ids, &pi)?;
    write_diagnostics(&out.join("diagnostics.csv"), &result.diagnostics, data.n_platforms())
}

/// Merge, select and write the selection report.
fn stage2(
    out: &Path,
    data: &TransformedDataset,
    merged: &MergedClusters,
    config: &RunConfig,
) -> Result<SelectionResult> {
    let problem = SelectionProblem::from_dataset(data, merged)?;
    let sel = run_stage2(&problem, &config.selection, config.seed)?;
    write_selection(&out.join("selection.csv"), data, merged, &sel)?;
    Ok(sel)
}

fn stage2_manifest(merged: &MergedClusters, sel: &SelectionResult) -> serde_json::Value {
    json!({
        "kind": "stage2",
        "merged_clusters": merged.k(),
        "samples": sel.samples.len(),
        "selected": sel.fdr.selected.iter().map(|k| k + 1).collect::<Vec<_>>(),
        "cutoff": sel.fdr.cutoff,
    })
}

fn run_header(command: &str, config: &RunConfig) -> [serde_json::Value; 2] {
    [
        json!({
            "kind": "run",
            "command": command,
            "package": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "seed": config.seed,
            "streams": {
                "stage1": rng::stream_id(rng::purpose::STAGE1, 0),
                "stage2": rng::stream_id(rng::purpose::STAGE2, 0),
            },
        }),
        json!({ "kind": "config", "config": config }),
    ]
}

fn create_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

/// Summary returned to the caller of a fit.
#[derive(Debug, Clone)]
pub struct FitSummary {
    pub stage1: Stage1Result,
    pub merged: Option<MergedClusters>,
    pub selection: Option<SelectionResult>,
}

/// Fit Stage 1, and Stage 2 when outcomes are configured, writing all
/// artifacts to `out`.
pub fn run_pipeline(config: &RunConfig, out: &Path) -> Result<FitSummary> {
    config.validate_inputs()?;
    create_out(out)?;
    let mut timings = JsonLines::create(out.join(TIMINGS))?;
    let clock = Instant::now();
    let data = load_dataset(config)?;
    timings.line(&json!({"step": "load", "seconds": clock.elapsed().as_secs_f64()}))?;

    let clock = Instant::now();
    let stage1 = run_stage1(&data, &config.mcmc, config.seed)?;
    timings.line(&json!({"step": "stage1", "seconds": clock.elapsed().as_secs_f64()}))?;
    let clock = Instant::now();
    write_stage1(out, &data, &stage1)?;
    timings.line(&json!({"step": "write_stage1", "seconds": clock.elapsed().as_secs_f64()}))?;

    let mut manifest = JsonLines::create(out.join(MANIFEST))?;
    for v in run_header("fit", config) {
        manifest.line(&v)?;
    }
    let state = stage1.state();
    manifest.line(&json!({
        "kind": "stage1",
        "patients": data.n(),
        "probes": data.platforms.iter().map(|p| p.p()).collect::<Vec<_>>(),
        "column_clusters": (0..data.n_platforms()).map(|t| state.k(t)).collect::<Vec<_>>(),
        "row_clusters": state.h(),
        "sigma": stage1.sigma,
        "column_ls_loss": stage1.column_ls_loss,
        "row_ls_loss": stage1.row_ls_loss,
        "samples": [stage1.trace_a.samples.len(), stage1.trace_b.samples.len(), stage1.trace_c.samples.len()],
    }))?;

    let (merged, selection) = if data.clinical.is_some() {
        let clock = Instant::now();
        let merged = merge_clusters(&stage1.final_chain.latents, state);
        let sel = stage2(out, &data, &merged, config)?;
        timings.line(&json!({"step": "stage2", "seconds": clock.elapsed().as_secs_f64()}))?;
        manifest.line(&stage2_manifest(&merged, &sel))?;
        (Some(merged), Some(sel))
    } else {
        log::info!("no clinical file configured; skipping variable selection");
        (None, None)
    };
    manifest.finish()?;
    timings.finish()?;
    Ok(FitSummary {
        stage1,
        merged,
        selection,
    })
}

/// Run Stage 2 on the allocations and atoms a previous fit wrote to `fit_dir`.
pub fn run_selection_from_fit(config: &RunConfig, fit_dir: &Path, out: &Path) -> Result<(MergedClusters, SelectionResult)> {
    config.validate_inputs()?;
    if config.clinical.is_none() {
        return Err(Error::Config("selection needs a [clinical] file".into()));
    }
    create_out(out)?;
    let data = load_dataset(config)?;
    let mut columns = Vec::with_capacity(data.n_platforms());
    let mut platforms = Vec::with_capacity(data.n_platforms());
    for (t, p) in data.platforms.iter().enumerate() {
        let (names, alloc) = read_allocation(&platform_file(fit_dir, t, "column_allocation"))?;
        if names != p.probe_names {
            return Err(Error::Structural(format!("fit allocation for platform {} lists different probes", t + 1)));
        }
        let atoms = read_atoms(&platform_file(fit_dir, t, "atoms"))?;
        let h = atoms.len();
        let k = atoms.first().map_or(0, Vec::len);
        let cells = atoms
            .into_iter()
            .flatten()
            .map(|atom| LatentCell {
                value: 0.0,
                atom,
                table: 0,
            })
            .collect();
        platforms.push(LatentMatrix::new(h, k, cells)?);
        columns.push(alloc);
    }
    let (ids, rows) = read_allocation(&fit_dir.join("row_allocation.csv"))?;
    if ids != data.patient_ids {
        return Err(Error::Structural("fit row allocation lists different patients".into()));
    }
    let state = ClusterState::new(columns, rows)?;
    let latents = LatentMatrices {
        noise_sd: vec![1.0; platforms.len()],
        platforms,
    };
    latents.check_dims(&state)?;
    let merged = merge_clusters(&latents, &state);
    let sel = stage2(out, &data, &merged, config)?;
    let mut manifest = JsonLines::create(out.join(MANIFEST))?;
    for v in run_header("select", config) {
        manifest.line(&v)?;
    }
    manifest.line(&stage2_manifest(&merged, &sel))?;
    manifest.finish()?;
    Ok((merged, sel))
}

/// Write a synthetic dataset, its truth, and a configuration that fits it.
/// With `survival`, also writes outcomes driven by a few probes.
pub fn run_simulate(config: &RunConfig, out: &Path, survival: bool) -> Result<RunConfig> {
    config.validate()?;
    create_out(out)?;
    let mut r = rng::stream(config.seed, rng::stream_id(rng::purpose::SIMULATE, 0));
    let (data, truth) = generate_synthetic(&config.simulation, &mut r)?;
    let mut fit = RunConfig {
        seed: config.seed,
        mcmc: config.mcmc.clone(),
        selection: config.selection.clone(),
        ..RunConfig::default()
    };
    fit.mcmc.hyper = config.simulation.fit_hyperparameters();
    for (t, p) in data.platforms.iter().enumerate() {
        let name = format!("platform{}.csv", t + 1);
        write_matrix(&out.join(&name), "patient_id", &p.probe_names, &data.patient_ids, &p.values)?;
        fit.platforms.push(crate::io::config::PlatformSpec {
            path: name.into(),
            transform: Default::default(),
            clip_eps: None,
        });
        write_allocation(&platform_file(out, t, "truth_columns"), "probe", &p.probe_names, &truth.columns[t])?;
        let phi = &truth.phi[t];
        write_matrix(
            &platform_file(out, t, "truth_phi"),
            "row_cluster",
            &labels("c", phi.cols()),
            &labels("r", phi.rows()),
            phi,
        )?;
    }
    write_allocation(&out.join("truth_rows.csv"), "patient_id", &data.patient_ids, &truth.rows)?;
    if survival {
        let s = generate_survival(&data, &config.survival, &mut r)?;
        let mut w = CsvOut::create(&out.join("clinical.csv"))?;
        w.row(["patient_id", "time", "event"])?;
        for (i, id) in data.patient_ids.iter().enumerate() {
            w.row([id.clone(), fmt_f64(s.outcomes.observed_time[i]), u8::from(s.outcomes.event[i]).to_string()])?;
        }
        w.finish()?;
        let mut w = CsvOut::create(&out.join("truth_predictors.csv"))?;
        w.row(["platform", "probe"])?;
        for (t, j) in s.predictors {
            w.row([(t + 1).to_string(), data.platforms[t].probe_names[j].clone()])?;
        }
        w.finish()?;
        fit.clinical = Some(crate::io::config::ClinicalSpec {
            path: "clinical.csv".into(),
        });
    }
    let path = out.join("config.toml");
    fs::write(&path, fit.to_toml()?).map_err(|e| Error::io(&path, e))?;
    Ok(fit)
}

/// Run the replication grid and write per-replicate rows and a summary.
/// Fits use the hyperparameters of the generating process.
pub fn run_replicate(config: &RunConfig, out: &Path) -> Result<Vec<ReplicateResult>> {
    config.validate()?;
    create_out(out)?;
    let rep = &config.replication;
    let mut fit = config.mcmc.clone();
    fit.hyper = config.simulation.fit_hyperparameters();
    let results = run_replication_study(&config.simulation, &fit, &rep.grid, rep.replicates, config.seed)?;
    let t = config.simulation.probes.len();
    let mut w = CsvOut::create(&out.join("replicates.csv"))?;
    let mut header = vec!["setup_h".to_string(), "setup_sigma".into(), "replicate".into()];
    header.extend((1..=t).map(|i| format!("kappa_{i}")));
    header.push("theta".into());
    header.extend((1..=t).map(|i| format!("r2_{i}")));
    header.extend(["seconds".to_string(), "error".into()]);
    w.row(&header)?;
    for r in &results {
        let mut row = vec![r.setup_h.to_string(), fmt_f64(r.setup_sigma), r.replicate.to_string()];
        row.extend((0..t).map(|i| r.kappa.get(i).map_or("NA".into(), |&k| fmt_f64(k))));
        row.push(fmt_f64(r.theta));
        row.extend((0..t).map(|i| fmt_opt(r.r2.get(i).copied().flatten())));
        row.push(fmt_f64(r.seconds));
        row.push(r.error.clone().unwrap_or_default());
        w.row(&row)?;
    }
    w.finish()?;
    let mut w = CsvOut::create(&out.join("summary.csv"))?;
    let mut header = vec!["setup_h".to_string(), "setup_sigma".into()];
    for i in 1..=t {
        header.extend([format!("kappa_{i}_mean"), format!("kappa_{i}_sd")]);
    }
    header.extend(["theta_mean".to_string(), "theta_sd".into()]);
    for i in 1..=t {
        header.extend([format!("r2_{i}_mean"), format!("r2_{i}_sd")]);
    }
    header.push("failures".into());
    w.row(&header)?;
    for c in summarize(&results) {
        let mut row = vec![c.setup_h.to_string(), fmt_f64(c.setup_sigma)];
        for i in 0..t {
            let m = c.kappa.get(i);
            row.extend([fmt_f64(m.map_or(f64::NAN, |m| m.mean)), fmt_f64(m.map_or(f64::NAN, |m| m.sd))]);
        }
        row.extend([fmt_f64(c.theta.mean), fmt_f64(c.theta.sd)]);
        for i in 0..t {
            let m = c.r2.get(i);
            row.extend([fmt_f64(m.map_or(f64::NAN, |m| m.mean)), fmt_f64(m.map_or(f64::NAN, |m| m.sd))]);
        }
        row.push(c.failures.to_string());
        w.row(&row)?;
    }
    w.finish()?;
    let mut manifest = JsonLines::create(out.join(MANIFEST))?;
    for v in run_header("replicate", config) {
        manifest.line(&v)?;
    }
    manifest.finish()?;
    Ok(results)
}

/// Human-readable summary of a run directory's manifest.
pub fn describe_run(dir: &Path) -> Result<String> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.clone(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        match v.get("kind").and_then(|k| k.as_str()) {
            Some("config") => continue,
            Some(kind) => {
                let mut fields = v.as_object().cloned().unwrap_or_default();
                fields.remove("kind");
                out.push_str(&format!("{kind}: {}\n", serde_json::Value::Object(fields)));
            }
            None => out.push_str(&format!("{v}\n")),
        }
    }
    Ok(out)
}
