//! Cell execution, result rows and CSV/JSON output.

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::diag;
use super::scenario::{ExperimentKind, Scenario};
use crate::control::{drc_ons_run, drc_ons_unknown_run, run_loop, DrcOnsParams, Knowledge, LinearSystem, RunReport};
use crate::error::{Error, Result};
use crate::numcore::{op_norm, Matrix, Rng};
use crate::ocoam::{MarkovOperator, RegretSummary};
use crate::tradeoff::{lambda_grid, run_learner, EpochAdversary, Learner};

/// RNG stream for the directions of injected Markov errors.
pub const PERTURB_STREAM: u64 = 0xde17a;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

/// One output line. Columns that do not apply to a kind are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub kind: String,
    pub seed: u64,
    pub horizon: usize,
    /// `ε` for sensitivity rows, `µ` for tradeoff rows.
    pub param: Option<f64>,
    pub m: Option<usize>,
    pub h: Option<usize>,
    pub memory_reg: Option<f64>,
    pub oco_reg: Option<f64>,
    pub control_reg: Option<f64>,
    pub euc_cost: Option<f64>,
    pub adap_cost: Option<f64>,
    pub eps_g: Option<f64>,
    pub regmu: Option<f64>,
    /// Kind-specific extra measurement, named here and valued in `value`.
    pub metric: String,
    pub value: Option<f64>,
    pub status: Status,
    pub reason: String,
}

pub const CSV_HEADER: &str = "scenario,kind,seed,horizon,param,m,h,memory_reg,oco_reg,control_reg,euc_cost,adap_cost,eps_g,regmu,metric,value,status,reason";

impl ResultRow {
    fn blank(cfg: &Scenario, cell: &Cell) -> Self {
        ResultRow {
            scenario: cfg.id.clone(),
            kind: cfg.kind.to_string(),
            seed: cell.seed,
            horizon: cell.horizon,
            param: cell.param,
            m: None,
            h: None,
            memory_reg: None,
            oco_reg: None,
            control_reg: None,
            euc_cost: None,
            adap_cost: None,
            eps_g: None,
            regmu: None,
            metric: String::new(),
            value: None,
            status: Status::Ok,
            reason: String::new(),
        }
    }

    fn with_summary(mut self, s: &RegretSummary) -> Self {
        self.memory_reg = Some(s.memory_reg);
        self.oco_reg = Some(s.oco_reg);
        self.euc_cost = Some(s.euc_cost);
        self.adap_cost = Some(s.adap_cost);
        self
    }

    fn with_metric(mut self, name: &str, value: f64) -> Self {
        self.metric = name.to_string();
        self.value = Some(value);
        self
    }

    fn numbers(&self) -> impl Iterator<Item = f64> + '_ {
        [
            self.param,
            self.memory_reg,
            self.oco_reg,
            self.control_reg,
            self.euc_cost,
            self.adap_cost,
            self.eps_g,
            self.regmu,
            self.value,
        ]
        .into_iter()
        .flatten()
    }
}

/// `|MemoryReg − OcoReg − ΣMoveDiff| / max(1, |ΣF_t|)`.
pub fn ledger_identity_gap(s: &RegretSummary) -> f64 {
    (s.memory_reg - s.oco_reg - s.move_diff).abs() / s.total_memory_loss.abs().max(1.0)
}

/// Largest ledger identity gap seen by any run that reports into it.
#[derive(Debug, Default)]
pub struct LedgerAudit {
    worst: Mutex<(f64, usize)>,
}

impl LedgerAudit {
    pub fn record(&self, s: &RegretSummary) {
        let gap = ledger_identity_gap(s);
        let mut w = self.worst.lock().unwrap_or_else(|e| e.into_inner());
        w.0 = if gap.is_nan() { f64::INFINITY } else { w.0.max(gap) };
        w.1 += 1;
    }

    /// `(largest gap, number of runs)`.
    pub fn worst(&self) -> (f64, usize) {
        *self.worst.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub seed: u64,
    pub horizon: usize,
    pub param: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub seed: u64,
    pub horizon: usize,
    pub param: Option<f64>,
    pub millis: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    /// Wall time per cell, in cell order.
    pub timings: Vec<CellTiming>,
}

impl RunOutput {
    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| r.status == Status::Failed).count()
    }
}

/// The cells of a scenario in output order: seeds, then horizons, then params.
pub fn cells(cfg: &Scenario) -> Vec<Cell> {
    let params: Vec<Option<f64>> = match cfg.kind {
        ExperimentKind::Tradeoff => cfg.params.mu.iter().map(|&m| Some(m)).collect(),
        _ => vec![None],
    };
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        for &horizon in &cfg.params.horizons {
            for &param in &params {
                out.push(Cell { seed, horizon, param });
            }
        }
    }
    out
}

/// Runs every cell on the current rayon pool. Failing cells yield one row
/// with status `failed`; the rest of the grid still runs.
pub fn run_scenario(cfg: &Scenario, audit: Option<&LedgerAudit>) -> Result<RunOutput> {
    cfg.validate()?;
    let per_cell: Vec<(Vec<ResultRow>, CellTiming)> = cells(cfg)
        .par_iter()
        .map(|cell| {
            let start = Instant::now();
            let rows = match run_cell(cfg, cell, audit) {
                Ok(rows) => rows,
                Err(e) => {
                    let mut row = ResultRow::blank(cfg, cell);
                    row.status = Status::Failed;
                    row.reason = e.to_string();
                    vec![row]
                }
            };
            let timing = CellTiming { seed: cell.seed, horizon: cell.horizon, param: cell.param, millis: start.elapsed().as_secs_f64() * 1e3 };
            (rows, timing)
        })
        .collect();
    let mut out = RunOutput::default();
    for (rows, timing) in per_cell {
        out.rows.extend(rows);
        out.timings.push(timing);
    }
    Ok(out)
}

/// [`run_scenario`] on a dedicated pool of `jobs` threads (0 = all cores).
pub fn run_scenario_with_jobs(cfg: &Scenario, jobs: usize, audit: Option<&LedgerAudit>) -> Result<RunOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_scenario(cfg, audit))
}

fn run_cell(cfg: &Scenario, cell: &Cell, audit: Option<&LedgerAudit>) -> Result<Vec<ResultRow>> {
    let mut rows = match cfg.kind {
        ExperimentKind::Known | ExperimentKind::Unknown | ExperimentKind::Sensitivity => control_cell(cfg, cell, audit)?,
        ExperimentKind::Tradeoff => tradeoff_cell(cfg, cell, audit)?,
        ExperimentKind::Diagnostics => diagnostics_cell(cfg, cell)?,
    };
    for row in &mut rows {
        let bad = row.numbers().find(|x| !x.is_finite());
        if let Some(bad) = bad {
            row.status = Status::Failed;
            row.reason = format!("non-finite result {bad}");
        }
    }
    Ok(rows)
}

struct Plant {
    sys: LinearSystem,
    losses: crate::control::LossSchedule,
    dist: crate::control::Disturbances,
    params: DrcOnsParams,
}

fn plant(cfg: &Scenario, cell: &Cell) -> Result<Plant> {
    let missing = |s: &str| Error::Config(format!("missing [{s}] section"));
    let sys = cfg.system.as_ref().ok_or_else(|| missing("system"))?.build(cell.seed)?;
    let dist = cfg.disturbance.as_ref().ok_or_else(|| missing("disturbance"))?.generator(cell.seed).realize(sys.dx(), sys.dy(), cell.horizon)?;
    let losses = cfg.loss.as_ref().ok_or_else(|| missing("loss"))?.build(sys.dy(), sys.du(), cell.seed)?;
    let p = &cfg.params;
    let m = p.m.unwrap_or_else(|| sys.default_memory(cell.horizon));
    let h = p.h.unwrap_or_else(|| sys.default_memory(cell.horizon));
    let params = DrcOnsParams { m, h, r_m: p.r_m, eta: p.eta, lambda: p.lambda };
    Ok(Plant { sys, losses, dist, params })
}

/// `⌈h²√T (dy + du)⌉`.
pub fn default_exploration(h: usize, horizon: usize, dy: usize, du: usize) -> usize {
    ((h * h) as f64 * (horizon as f64).sqrt() * (dy + du) as f64).ceil() as usize
}

fn report_row(cfg: &Scenario, cell: &Cell, rep: &RunReport, audit: Option<&LedgerAudit>) -> Result<ResultRow> {
    if let Some(a) = audit {
        a.record(&rep.summary);
    }
    let mut row = ResultRow::blank(cfg, cell).with_summary(&rep.summary);
    row.m = Some(rep.params.m);
    row.h = Some(rep.params.h);
    row.control_reg = Some(rep.control_regret(&[])?);
    row.eps_g = rep.eps_g;
    Ok(row)
}

fn control_cell(cfg: &Scenario, cell: &Cell, audit: Option<&LedgerAudit>) -> Result<Vec<ResultRow>> {
    let Plant { sys, losses, dist, params } = plant(cfg, cell)?;
    let t = cell.horizon;
    match cfg.kind {
        ExperimentKind::Known => {
            let rep = drc_ons_run(&sys, &losses, &dist, t, params)?;
            Ok(vec![report_row(cfg, cell, &rep, audit)?.with_metric("alg_cost", rep.alg_cost)])
        }
        ExperimentKind::Unknown => {
            let n = cfg.params.n_explore.unwrap_or_else(|| default_exploration(params.h, t, sys.dy(), sys.du()));
            let rep = drc_ons_unknown_run(&sys, &losses, &dist, t, params, n, cell.seed)?;
            Ok(vec![report_row(cfg, cell, &rep, audit)?.with_metric("markov_err", rep.markov_err)])
        }
        _ => {
            // Baseline ε = 0, then each ε; `value` is the excess MemoryReg.
            let g_true = sys.nominal_markov(params.h)?;
            let mut rng = Rng::with_stream(cell.seed, PERTURB_STREAM);
            let direction = unit_perturbation(&g_true, &mut rng)?;
            let mut rows = Vec::with_capacity(cfg.params.eps.len() + 1);
            let mut base = None;
            for eps in std::iter::once(0.0).chain(cfg.params.eps.iter().copied()) {
                let g_hat = add_scaled(&g_true, &direction, eps)?;
                let knowledge = Knowledge::Supplied { g_hat, eps_g: eps, v_noise: eps, seed: cell.seed, exact_recovery: true };
                let rep = run_loop(&sys, &losses, &dist, t, params, knowledge)?;
                let memreg = rep.summary.memory_reg;
                let base_reg = *base.get_or_insert(memreg);
                let sub = Cell { param: Some(eps), ..*cell };
                rows.push(report_row(cfg, &sub, &rep, audit)?.with_metric("excess_memory_reg", memreg - base_reg));
            }
            Ok(rows)
        }
    }
}

/// Random `Δ` on blocks `1..=h` with `Σ‖Δ^{[i]}‖_op = 1` and `Δ^{[0]} = 0`.
pub fn unit_perturbation(g: &MarkovOperator, rng: &mut Rng) -> Result<MarkovOperator> {
    let (rows, cols) = (g.out_dim(), g.in_dim());
    let weights: Vec<f64> = (1..g.blocks().len()).map(|_| rng.uniform_range(0.1, 1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut blocks = vec![Matrix::zeros(rows, cols)];
    for w in weights {
        let raw = rng.gaussian_matrix(rows, cols);
        let n = op_norm(&raw)?;
        blocks.push(raw * (w / (total * n)));
    }
    MarkovOperator::new(blocks)
}

/// `G + s·Δ`, blockwise.
pub fn add_scaled(g: &MarkovOperator, delta: &MarkovOperator, s: f64) -> Result<MarkovOperator> {
    if g.blocks().len() != delta.blocks().len() {
        return Err(Error::dim("add_scaled", g.blocks().len(), delta.blocks().len()));
    }
    MarkovOperator::new(g.blocks().iter().zip(delta.blocks()).map(|(a, b)| a + b * s).collect())
}

fn tradeoff_cell(cfg: &Scenario, cell: &Cell, audit: Option<&LedgerAudit>) -> Result<Vec<ResultRow>> {
    let mu = cell.param.ok_or_else(|| Error::Config("tradeoff cell without µ".into()))?;
    let adv = EpochAdversary::for_mu(cell.horizon, mu, cfg.params.epoch_const, cell.seed)?;
    let mut rows = Vec::new();
    let mut push = |learner: &str, lambda: Option<f64>, s: RegretSummary| {
        if let Some(a) = audit {
            a.record(&s);
        }
        let mut row = ResultRow::blank(cfg, cell).with_summary(&s);
        row.regmu = Some(s.regmu(mu));
        row.eps_g = None;
        row.metric = match lambda {
            Some(_) => format!("{learner}-lambda"),
            None => learner.to_string(),
        };
        row.value = lambda;
        rows.push(row);
    };
    for lambda in lambda_grid(adv.lipschitz(), cfg.params.lambda_grid) {
        push("ons", Some(lambda), run_learner(&adv, Learner::Ons, lambda)?);
    }
    push("ogd", None, run_learner(&adv, Learner::Ogd, 0.0)?);
    push("semi-ons", None, run_learner(&adv, Learner::SemiOns, 0.0)?);
    Ok(rows)
}

fn diagnostics_cell(cfg: &Scenario, cell: &Cell) -> Result<Vec<ResultRow>> {
    let mut rng = Rng::new(cell.seed);
    let base = || ResultRow::blank(cfg, cell);
    let h = cfg.params.h.unwrap_or(diag::DEFAULT_DIAG_H);
    let kappa = diag::kappa_trial(&mut rng)?;
    let cov = diag::covariance_trial(&mut rng, cell.horizon, h)?;
    let grad = diag::gradcheck_trial(&mut rng)?;
    let proj = diag::projection_trial(&mut rng, diag::DEFAULT_GRID_STEP)?;
    Ok(vec![
        base().with_metric("kappa_margin", kappa.margin),
        base().with_metric("covariance_gap", cov.gap),
        base().with_metric("gradcheck_rel_err", grad),
        base().with_metric("projection_gap", proj.gap),
    ])
}

pub fn write_csv<W: std::io::Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(',')).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Io(format!("unexpected CSV header {:?}", header.join(","))));
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Self-describing run metadata. With CSV output it is the sidecar; with JSON
/// output it also carries the rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub scenario: Scenario,
    pub seed_override: Option<u64>,
    pub jobs: usize,
    pub cells: usize,
    pub rows: usize,
    pub failed: usize,
    pub timings: Vec<CellTiming>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub results: Option<Vec<ResultRow>>,
}

/// Writes `<base>.csv` plus `<base>.json`, or `<base>.json` alone for JSON
/// output. Returns the paths written.
pub fn write_outputs(base: &Path, format: OutputFormat, mut manifest: RunManifest, rows: &[ResultRow]) -> Result<Vec<PathBuf>> {
    if let Some(dir) = base.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let json_path = base.with_extension("json");
    let mut written = Vec::new();
    if format == OutputFormat::Csv {
        let csv_path = base.with_extension("csv");
        write_csv(rows, std::fs::File::create(&csv_path)?)?;
        written.push(csv_path);
    } else {
        manifest.results = Some(rows.to_vec());
    }
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(&json_path, text + "\n")?;
    written.push(json_path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn known(seeds: &str) -> Scenario {
        Scenario::from_toml(&format!(
            r#"
id = "unit"
kind = "known"
seeds = {seeds}
[system]
generator = "random"
[disturbance]
kind = "mixed"
w_max = 1.0
e_max = 0.1
[loss]
kind = "lqr"
[params]
horizons = [200]
lambda = 10.0
"#
        ))
        .unwrap()
    }

    #[test]
    fn empty_seed_list_gives_no_rows() {
        let out = run_scenario(&known("[]"), None).unwrap();
        assert!(out.rows.is_empty());
    }

    #[test]
    fn single_cell_passes_ledger_values_through() {
        let cfg = known("[3]");
        let out = run_scenario(&cfg, None).unwrap();
        assert_eq!(out.rows.len(), 1);
        let row = &out.rows[0];
        assert_eq!(row.status, Status::Ok, "{}", row.reason);
        let Plant { sys, losses, dist, params } = plant(&cfg, &cells(&cfg)[0]).unwrap();
        let rep = drc_ons_run(&sys, &losses, &dist, 200, params).unwrap();
        assert_eq!(row.memory_reg, Some(rep.summary.memory_reg));
        assert_eq!(row.oco_reg, Some(rep.summary.oco_reg));
    }

    #[test]
    fn csv_round_trips_and_is_deterministic() {
        let cfg = known("[1, 2]");
        let a = run_scenario(&cfg, None).unwrap();
        let b = run_scenario(&cfg, None).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        write_csv(&a.rows, &mut ca).unwrap();
        write_csv(&b.rows, &mut cb).unwrap();
        assert_eq!(ca, cb);
        assert!(String::from_utf8(ca.clone()).unwrap().starts_with(CSV_HEADER));
        assert_eq!(read_csv(&ca[..]).unwrap(), a.rows);
    }

    #[test]
    fn failures_become_rows() {
        let mut cfg = known("[1]");
        cfg.params.m = Some(3);
        cfg.params.h = Some(3);
        cfg.params.horizons = vec![50, 100];
        // An open-loop-unstable plant with target ρ far below reach fails to build.
        cfg.system.as_mut().unwrap().target_rho = 1e-9;
        let out = run_scenario(&cfg, None).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert!(out.rows.iter().all(|r| r.status == Status::Failed && !r.reason.is_empty()));
    }

    #[test]
    fn perturbation_has_the_requested_size() {
        let mut rng = Rng::new(4);
        let sys = LinearSystem::random(&mut rng, 3, 1, 2, 0.9, 0.5).unwrap();
        let g = sys.nominal_markov(6).unwrap();
        let d = unit_perturbation(&g, &mut rng).unwrap();
        assert!((d.l1_op_norm() - 1.0).abs() < 1e-9);
        assert_eq!(d.blocks()[0], Matrix::zeros(3, 1));
        let g2 = add_scaled(&g, &d, 0.25).unwrap();
        let diff = add_scaled(&g2, &g, -1.0).unwrap();
        assert!((diff.l1_op_norm() - 0.25).abs() < 1e-9);
    }

    #[test]
    fn ledger_audit_tracks_the_worst_gap() {
        let audit = LedgerAudit::default();
        run_scenario(&known("[1]"), Some(&audit)).unwrap();
        let (gap, n) = audit.worst();
        assert_eq!(n, 1);
        assert!(gap <= 1e-9, "{gap}");
    }
}
