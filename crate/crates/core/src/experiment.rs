//! Parameter sweeps over the prior grid, noise levels, exponents and
//! smoothing, with Monte Carlo repetitions.
//!
//! Work is grouped by `(ep, pm, noise, rep)`: the filter and smoother run
//! once per group and every `(alpha, smoothing)` combination is scored from
//! that single pass. The measurement seed depends only on the noise level and
//! repetition, so every cell at a given noise level and repetition sees the
//! same noisy data. Rows are always written in canonical cell order,
//! whatever the number of workers.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Timing};
use crate::error::{Error, Result};
use crate::pipeline::Scenario;
use crate::signal::ActiveSources;
use crate::smoother::SmoothedWeighting;

/// One sweep cell, without the repetition index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub ep_snr_db: f64,
    pub pm_snr_db: f64,
    pub noise_db: f64,
    pub alpha: f64,
    pub smoothing: bool,
}

impl Cell {
    /// Stable file-name fragment, e.g. `ep0_pm20_noise30_a1.25_smooth`.
    pub fn slug(&self) -> String {
        format!(
            "ep{}_pm{}_noise{}_a{}_{}",
            self.ep_snr_db,
            self.pm_snr_db,
            self.noise_db,
            self.alpha,
            if self.smoothing { "smooth" } else { "filter" }
        )
    }

    fn matches(&self, r: &ResultRecord) -> bool {
        self.ep_snr_db == r.ep_snr_db
            && self.pm_snr_db == r.pm_snr_db
            && self.noise_db == r.noise_db
            && self.alpha == r.alpha
            && self.smoothing == r.smoothing
    }
}

/// All cells in canonical order: EP outermost, then PM, noise, alpha and
/// smoothing.
pub fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    let s = &config.sweep;
    let mut out = Vec::new();
    for &ep_snr_db in &s.ep_snr_db {
        for &pm_snr_db in &s.pm_snr_db {
            for &noise_db in &s.noise_db {
                for &alpha in &s.alpha {
                    for &smoothing in &s.smoothing {
                        out.push(Cell { ep_snr_db, pm_snr_db, noise_db, alpha, smoothing });
                    }
                }
            }
        }
    }
    out
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `base_seed XOR splitmix64(bits(noise_db) XOR splitmix64(rep))`.
pub fn measurement_seed(base_seed: u64, noise_db: f64, rep: usize) -> u64 {
    base_seed ^ splitmix64(noise_db.to_bits() ^ splitmix64(rep as u64))
}

/// One row of `results.csv`. Column order is part of the output format;
/// new columns go at the end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub ep_snr_db: f64,
    pub pm_snr_db: f64,
    pub noise_db: f64,
    pub alpha: f64,
    pub smoothing: bool,
    pub rep: usize,
    pub seed: u64,
    pub base_seed: u64,
    pub timing: Timing,
    pub active: ActiveSources,
    pub smoothed_weighting: SmoothedWeighting,
    pub n_nodes: usize,
    pub n_electrodes: usize,
    pub node_spacing: f64,
    pub theta0: Option<f64>,
    pub tau_sq: Option<f64>,
    pub noise_std: Option<f64>,
    pub loc_err_deep_mm: Option<f64>,
    pub loc_err_sup_mm: Option<f64>,
    pub echo_ratio: Option<f64>,
    pub corr_deep: Option<f64>,
    pub corr_sup: Option<f64>,
    pub loc_err_deep_unstd_mm: Option<f64>,
    pub loc_err_sup_unstd_mm: Option<f64>,
    /// Whether smoothed estimates produced this row's metrics.
    pub smoother_invoked: bool,
    pub status: String,
    pub error: String,
    pub version: String,
}

impl ResultRecord {
    fn blank(scn: &Scenario, cell: &Cell, rep: usize) -> Self {
        let cfg = &scn.config;
        Self {
            ep_snr_db: cell.ep_snr_db,
            pm_snr_db: cell.pm_snr_db,
            noise_db: cell.noise_db,
            alpha: cell.alpha,
            smoothing: cell.smoothing,
            rep,
            seed: measurement_seed(cfg.sweep.base_seed, cell.noise_db, rep),
            base_seed: cfg.sweep.base_seed,
            timing: cfg.signal.timing,
            active: cfg.signal.active,
            smoothed_weighting: cfg.sweep.smoothed_weighting,
            n_nodes: scn.space.len(),
            n_electrodes: scn.electrodes.len(),
            node_spacing: cfg.geometry.node_spacing,
            theta0: None,
            tau_sq: None,
            noise_std: None,
            loc_err_deep_mm: None,
            loc_err_sup_mm: None,
            echo_ratio: None,
            corr_deep: None,
            corr_sup: None,
            loc_err_deep_unstd_mm: None,
            loc_err_sup_unstd_mm: None,
            smoother_invoked: false,
            status: "ok".into(),
            error: String::new(),
            version: crate::VERSION.into(),
        }
    }

    fn fail(mut self, err: &Error) -> Self {
        self.status = "failed".into();
        self.error = err.to_string();
        self
    }

    pub fn failed(&self) -> bool {
        self.status != "ok"
    }

    pub fn cell(&self) -> Cell {
        Cell {
            ep_snr_db: self.ep_snr_db,
            pm_snr_db: self.pm_snr_db,
            noise_db: self.noise_db,
            alpha: self.alpha,
            smoothing: self.smoothing,
        }
    }
}

/// Normalized time courses of one run, for the time-series plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub ep_snr_db: f64,
    pub pm_snr_db: f64,
    pub noise_db: f64,
    pub alpha: f64,
    pub smoothing: bool,
    pub rep: usize,
    pub step: usize,
    pub time_s: f64,
    pub true_deep: f64,
    pub true_sup: f64,
    pub recon_deep: f64,
    pub recon_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub ep_snr_db: f64,
    pub pm_snr_db: f64,
    pub noise_db: f64,
    pub alpha: f64,
    pub smoothing: bool,
    pub rep: usize,
    /// This row's scoring time plus an equal share of its group's filter
    /// and smoother time.
    pub seconds: f64,
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let peak = v.iter().cloned().fold(0.0, f64::max);
    if peak > 0.0 {
        v.iter().map(|x| x / peak).collect()
    } else {
        v.to_vec()
    }
}

fn series_rows(scn: &Scenario, cell: &Cell, rep: usize, deep: &[f64], sup: &[f64]) -> Vec<SeriesRow> {
    let (td, ts) = (normalized(&scn.waves.deep), normalized(&scn.waves.superficial));
    let (rd, rs) = (normalized(deep), normalized(sup));
    let dt = scn.config.signal.dt;
    (0..scn.n_steps())
        .map(|k| SeriesRow {
            ep_snr_db: cell.ep_snr_db,
            pm_snr_db: cell.pm_snr_db,
            noise_db: cell.noise_db,
            alpha: cell.alpha,
            smoothing: cell.smoothing,
            rep,
            step: k,
            time_s: k as f64 * dt,
            true_deep: td[k],
            true_sup: ts[k],
            recon_deep: rd[k],
            recon_sup: rs[k],
        })
        .collect()
}

struct CellOutput {
    record: ResultRecord,
    series: Vec<SeriesRow>,
    score_seconds: f64,
}

fn score_cell(
    scn: &Scenario,
    run: &std::result::Result<crate::pipeline::Reconstruction<'_>, Error>,
    cell: &Cell,
    rep: usize,
) -> CellOutput {
    let start = Instant::now();
    let mut record = ResultRecord::blank(scn, cell, rep);
    let mut series = Vec::new();
    match run {
        Err(e) => record = record.fail(e),
        Ok(run) => {
            record.theta0 = Some(run.prior.theta0);
            record.tau_sq = Some(run.prior.tau_i_sq);
            record.noise_std = Some(run.measurements.noise_std);
            match run.score(cell.alpha, cell.smoothing, scn.config.sweep.smoothed_weighting) {
                Err(e) => record = record.fail(&e),
                Ok(scored) => {
                    let m = scored.report;
                    record.loc_err_deep_mm = Some(m.loc_err_deep_mm);
                    record.loc_err_sup_mm = Some(m.loc_err_sup_mm);
                    record.echo_ratio = m.echo_ratio;
                    record.corr_deep = m.corr_deep;
                    record.corr_sup = m.corr_sup;
                    record.loc_err_deep_unstd_mm = Some(m.loc_err_deep_unstd_mm);
                    record.loc_err_sup_unstd_mm = Some(m.loc_err_sup_unstd_mm);
                    record.smoother_invoked = cell.smoothing;
                    if rep == 0 {
                        let (deep, sup) = scored.source_courses(scn);
                        series = series_rows(scn, cell, rep, &deep, &sup);
                    }
                }
            }
        }
    }
    CellOutput { record, series, score_seconds: start.elapsed().as_secs_f64() }
}

/// Run a single cell from scratch. The smoother only runs when `smoothing`
/// is set.
pub fn run_cell(scn: &Scenario, cell: &Cell, rep: usize) -> (ResultRecord, f64) {
    let start = Instant::now();
    let seed = measurement_seed(scn.config.sweep.base_seed, cell.noise_db, rep);
    let run = scn.reconstruct(cell.ep_snr_db, cell.pm_snr_db, cell.noise_db, seed, cell.smoothing);
    let out = score_cell(scn, &run, cell, rep);
    (out.record, start.elapsed().as_secs_f64())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub records: Vec<ResultRecord>,
    pub series: Vec<SeriesRow>,
    pub timings: Vec<TimingRow>,
}

impl SweepOutput {
    pub fn n_failed(&self) -> usize {
        self.records.iter().filter(|r| r.failed()).count()
    }
}

#[derive(Debug, Clone, Copy)]
struct GroupKey {
    ep: f64,
    pm: f64,
    noise: f64,
    rep: usize,
}

fn run_group(scn: &Scenario, key: &GroupKey, cells: &[Cell]) -> Vec<(CellOutput, f64)> {
    let start = Instant::now();
    let mine: Vec<&Cell> = cells
        .iter()
        .filter(|c| c.ep_snr_db == key.ep && c.pm_snr_db == key.pm && c.noise_db == key.noise)
        .collect();
    let smooth = mine.iter().any(|c| c.smoothing);
    let seed = measurement_seed(scn.config.sweep.base_seed, key.noise, key.rep);
    let run = scn.reconstruct(key.ep, key.pm, key.noise, seed, smooth);
    let shared = start.elapsed().as_secs_f64() / mine.len().max(1) as f64;
    mine.into_iter().map(|c| (score_cell(scn, &run, c, key.rep), shared)).collect()
}

fn map_groups<T, F>(keys: &[GroupKey], jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&GroupKey) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if jobs != 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
        return Ok(pool.install(|| keys.par_iter().map(&f).collect()));
    }
    let _ = jobs;
    Ok(keys.iter().map(f).collect())
}

/// Run every cell and repetition. `jobs = 0` uses all available cores and
/// `jobs = 1` runs on the calling thread.
pub fn run_sweep(config: &ExperimentConfig, jobs: usize) -> Result<SweepOutput> {
    let scn = Scenario::build(config)?;
    run_sweep_on(&scn, jobs)
}

pub fn run_sweep_on(scn: &Scenario, jobs: usize) -> Result<SweepOutput> {
    let s = &scn.config.sweep;
    let all_cells = cells(&scn.config);
    let mut keys = Vec::new();
    for &ep in &s.ep_snr_db {
        for &pm in &s.pm_snr_db {
            for &noise in &s.noise_db {
                for rep in 0..s.repetitions {
                    keys.push(GroupKey { ep, pm, noise, rep });
                }
            }
        }
    }
    let groups = map_groups(&keys, jobs, |k| run_group(scn, k, &all_cells))?;
    let mut by_cell: Vec<Vec<Option<(CellOutput, f64)>>> =
        (0..all_cells.len()).map(|_| (0..s.repetitions).map(|_| None).collect()).collect();
    for (key, outputs) in keys.iter().zip(groups) {
        for (out, shared) in outputs {
            let idx = all_cells
                .iter()
                .position(|c| c.matches(&out.record))
                .expect("scored cell belongs to the grid");
            by_cell[idx][key.rep] = Some((out, shared));
        }
    }
    let mut output = SweepOutput { records: Vec::new(), series: Vec::new(), timings: Vec::new() };
    for reps in by_cell {
        for (out, shared) in reps.into_iter().map(|o| o.expect("every cell and repetition scored")) {
            let r = &out.record;
            output.timings.push(TimingRow {
                ep_snr_db: r.ep_snr_db,
                pm_snr_db: r.pm_snr_db,
                noise_db: r.noise_db,
                alpha: r.alpha,
                smoothing: r.smoothing,
                rep: r.rep,
                seconds: out.score_seconds + shared,
            });
            output.series.extend(out.series);
            output.records.push(out.record);
        }
    }
    Ok(output)
}

/// Mean and sample standard deviation of one metric in one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n: usize,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        let n = v.len();
        if n == 0 {
            return Self { mean: None, std: None, n };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean: Some(mean), std: Some(std), n }
    }
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub ep_snr_db: f64,
    pub pm_snr_db: f64,
    pub noise_db: f64,
    pub alpha: f64,
    pub smoothing: bool,
    pub runs: usize,
    pub failed: usize,
    pub loc_err_deep_mm_mean: Option<f64>,
    pub loc_err_deep_mm_std: Option<f64>,
    pub loc_err_sup_mm_mean: Option<f64>,
    pub loc_err_sup_mm_std: Option<f64>,
    pub echo_ratio_mean: Option<f64>,
    pub echo_ratio_std: Option<f64>,
    pub echo_ratio_n: usize,
    pub corr_deep_mean: Option<f64>,
    pub corr_deep_std: Option<f64>,
    pub corr_sup_mean: Option<f64>,
    pub corr_sup_std: Option<f64>,
    pub loc_err_deep_unstd_mm_mean: Option<f64>,
    pub loc_err_sup_unstd_mm_mean: Option<f64>,
}

pub fn summarize(records: &[ResultRecord]) -> Vec<SummaryRow> {
    let mut order: Vec<Cell> = Vec::new();
    for r in records {
        if !order.iter().any(|c| c.matches(r)) {
            order.push(r.cell());
        }
    }
    order
        .into_iter()
        .map(|cell| {
            let rs: Vec<&ResultRecord> = records.iter().filter(|r| cell.matches(r)).collect();
            let stat = |f: fn(&ResultRecord) -> Option<f64>| Stat::of(rs.iter().filter_map(|r| f(r)));
            let (ld, ls, er) = (stat(|r| r.loc_err_deep_mm), stat(|r| r.loc_err_sup_mm), stat(|r| r.echo_ratio));
            let (cd, cs) = (stat(|r| r.corr_deep), stat(|r| r.corr_sup));
            SummaryRow {
                ep_snr_db: cell.ep_snr_db,
                pm_snr_db: cell.pm_snr_db,
                noise_db: cell.noise_db,
                alpha: cell.alpha,
                smoothing: cell.smoothing,
                runs: rs.len(),
                failed: rs.iter().filter(|r| r.failed()).count(),
                loc_err_deep_mm_mean: ld.mean,
                loc_err_deep_mm_std: ld.std,
                loc_err_sup_mm_mean: ls.mean,
                loc_err_sup_mm_std: ls.std,
                echo_ratio_mean: er.mean,
                echo_ratio_std: er.std,
                echo_ratio_n: er.n,
                corr_deep_mean: cd.mean,
                corr_deep_std: cd.std,
                corr_sup_mean: cs.mean,
                corr_sup_std: cs.std,
                loc_err_deep_unstd_mm_mean: stat(|r| r.loc_err_deep_unstd_mm).mean,
                loc_err_sup_unstd_mm_mean: stat(|r| r.loc_err_sup_unstd_mm).mean,
            }
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Write `results.csv`, `summary.csv`, `series.csv` and `timings.csv`.
/// Only `timings.csv` depends on the machine.
pub fn write_sweep(dir: &Path, out: &SweepOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(&dir.join("results.csv"), &out.records)?;
    write_csv(&dir.join("summary.csv"), &summarize(&out.records))?;
    write_csv(&dir.join("series.csv"), &out.series)?;
    write_csv(&dir.join("timings.csv"), &out.timings)?;
    Ok(())
}

/// The exponent comparison: smoothed reconstructions at 30 dB with EP 20,
/// PM 0 and exponents 1, 1.25 and 1.5. Everything else comes from `base`.
pub fn exponent_study_config(base: &ExperimentConfig) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.sweep.ep_snr_db = vec![20.0];
    cfg.sweep.pm_snr_db = vec![0.0];
    cfg.sweep.noise_db = vec![30.0];
    cfg.sweep.alpha = vec![1.0, 1.25, 1.5];
    cfg.sweep.smoothing = vec![true];
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_depends_on_noise_and_rep_only() {
        let a = measurement_seed(7, 10.0, 0);
        assert_eq!(a, measurement_seed(7, 10.0, 0));
        assert_ne!(a, measurement_seed(7, 20.0, 0));
        assert_ne!(a, measurement_seed(7, 10.0, 1));
        assert_ne!(a, measurement_seed(8, 10.0, 0));
        assert_eq!(a ^ 7, measurement_seed(0, 10.0, 0));
    }

    #[test]
    fn splitmix_reference() {
        // first output of the reference splitmix64 generator seeded with 0
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn cell_order_and_count() {
        let cfg = ExperimentConfig::default();
        let c = cells(&cfg);
        assert_eq!(c.len(), 2 * 2 * 3 * 4 * 2);
        assert_eq!(c[0], Cell { ep_snr_db: 0.0, pm_snr_db: 0.0, noise_db: 10.0, alpha: 0.5, smoothing: false });
        assert!(c[1].smoothing);
        assert_eq!(c[2].alpha, 1.0);
        assert_eq!(c.last().unwrap().ep_snr_db, 20.0);
    }

    #[test]
    fn stat_of_constant() {
        let s = Stat::of([3.5; 4]);
        assert_eq!(s.mean, Some(3.5));
        assert_eq!(s.std, Some(0.0));
        assert_eq!(Stat::of([]).mean, None);
        let s = Stat::of([1.0, 3.0]);
        assert!((s.std.unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn slug_format() {
        let c = Cell { ep_snr_db: 20.0, pm_snr_db: 0.0, noise_db: 30.0, alpha: 1.25, smoothing: true };
        assert_eq!(c.slug(), "ep20_pm0_noise30_a1.25_smooth");
    }
}
