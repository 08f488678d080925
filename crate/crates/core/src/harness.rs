//! Simulation scenarios: parameter sweeps with seeded replicates, an elbow
//! scan over the number of layer groups, and CSV / SVG output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alma::{alma_fit, objective, AlmaConfig};
use crate::cluster::KmeansConfig;
use crate::error::{Error, Result};
use crate::init::spectral_init;
use crate::model::{assemble_ground_truth, MmlsbmInstance};
use crate::pipeline::{run_alma, ClusteringErrors};
use crate::rng::{derive_key, substream};
use crate::synthgen::{sample_adjacency, sample_instance};
use crate::tensor::Tensor3;
use crate::twist::{run_twist, TwistConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Alma,
    Twist,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Alma => "alma",
            Method::Twist => "twist",
        }
    }

    /// Stream purpose index; fixed per method so filtering methods does not
    /// change any other method's draws.
    fn purpose(self) -> u64 {
        match self {
            Method::Alma => 1,
            Method::Twist => 2,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "alma" => Ok(Method::Alma),
            "twist" => Ok(Method::Twist),
            other => Err(Error::Contract(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "p_max")]
    PMax,
    #[serde(rename = "n")]
    N,
    #[serde(rename = "L")]
    L,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::PMax => "p_max",
            SweepAxis::N => "n",
            SweepAxis::L => "L",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: u32,
    pub n: usize,
    #[serde(rename = "L")]
    pub layers: usize,
    #[serde(rename = "M")]
    pub groups: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub alpha: f64,
    pub p_max: f64,
    pub sweep: SweepAxis,
    pub grid: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_eps")]
    pub eps_stop: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_restarts")]
    pub kmeans_restarts: usize,
    #[serde(default = "default_twist_r")]
    pub twist_r: usize,
    #[serde(default = "default_twist_iter_max")]
    pub twist_iter_max: usize,
}

fn default_replicates() -> usize {
    20
}
fn default_methods() -> Vec<Method> {
    vec![Method::Alma, Method::Twist]
}
fn default_eps() -> f64 {
    1e-4
}
fn default_max_iter() -> usize {
    100
}
fn default_restarts() -> usize {
    20
}
fn default_twist_r() -> usize {
    7
}
fn default_twist_iter_max() -> usize {
    50
}

/// `points` evenly spaced values from `lo` to `hi`, optionally rounded.
pub fn linspace(lo: f64, hi: f64, points: usize, round: bool) -> Vec<f64> {
    (0..points)
        .map(|i| {
            let v = if points == 1 { lo } else { lo + (hi - lo) * i as f64 / (points - 1) as f64 };
            if round {
                v.round()
            } else {
                // keep grid values printable, e.g. 0.3 rather than 0.30000000000000004
                (v * 1e12).round() / 1e12
            }
        })
        .collect()
}

pub const GRID_POINTS: usize = 8;

impl ScenarioConfig {
    /// The four simulation settings with their default sweeps.
    pub fn preset(id: u32) -> Result<Self> {
        let base = |n, layers, alpha, p_max, sweep, grid| ScenarioConfig {
            scenario: id,
            n,
            layers,
            groups: 3,
            k: 3,
            alpha,
            p_max,
            sweep,
            grid,
            replicates: default_replicates(),
            master_seed: 0,
            methods: default_methods(),
            eps_stop: default_eps(),
            max_iter: default_max_iter(),
            kmeans_restarts: default_restarts(),
            twist_r: default_twist_r(),
            twist_iter_max: default_twist_iter_max(),
        };
        match id {
            1 => Ok(base(100, 40, 0.9, 1.0, SweepAxis::PMax, linspace(0.3, 1.0, GRID_POINTS, false))),
            2 => Ok(base(100, 40, 0.9, 0.6, SweepAxis::N, linspace(30.0, 300.0, GRID_POINTS, true))),
            3 => Ok(base(40, 40, 0.8, 0.5, SweepAxis::L, linspace(40.0, 140.0, GRID_POINTS, true))),
            4 => Ok(base(100, 50, 0.9, 0.5, SweepAxis::L, linspace(50.0, 100.0, GRID_POINTS, true))),
            other => Err(Error::Contract(format!("no scenario {other}; choose 1 to 4"))),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Contract("replicates must be at least 1".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::Contract("empty sweep grid".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Contract("no methods selected".into()));
        }
        if self.twist_r < self.groups {
            return Err(Error::Contract(format!("twist r = {} below M = {}", self.twist_r, self.groups)));
        }
        for &v in &self.grid {
            let ok = match self.sweep {
                SweepAxis::PMax => v > 0.0 && v <= 1.0,
                SweepAxis::N | SweepAxis::L => v >= 1.0 && v.fract() == 0.0,
            };
            if !ok {
                return Err(Error::Contract(format!("grid value {v} invalid for {}", self.sweep.name())));
            }
        }
        Ok(())
    }

    /// `(n, L, p_max)` at one sweep value.
    pub fn point(&self, value: f64) -> (usize, usize, f64) {
        match self.sweep {
            SweepAxis::PMax => (self.n, self.layers, value),
            SweepAxis::N => (value as usize, self.layers, self.p_max),
            SweepAxis::L => (self.n, value as usize, self.p_max),
        }
    }

    fn alma_config(&self) -> AlmaConfig {
        AlmaConfig {
            eps_stop: self.eps_stop,
            max_iter: self.max_iter,
            ..AlmaConfig::default()
        }
    }

    fn twist_config(&self) -> TwistConfig {
        TwistConfig {
            iter_max: self.twist_iter_max,
            eps_stop: Some(self.eps_stop),
            ..TwistConfig::new(self.groups, self.twist_r)
        }
    }

    fn kmeans_config(&self) -> KmeansConfig {
        KmeansConfig {
            restarts: self.kmeans_restarts,
            ..KmeansConfig::new(self.groups)
        }
    }
}

/// One method on one replicate. Failed runs carry `NaN` rates and
/// `converged = false`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: u32,
    pub sweep_param: String,
    pub sweep_value: f64,
    pub replicate: usize,
    pub method: Method,
    #[serde(rename = "R_BL")]
    pub r_bl: f64,
    #[serde(rename = "R_WL")]
    pub r_wl: f64,
    pub iters: usize,
    pub converged: bool,
    pub seconds: f64,
    pub seed: u64,
}

impl RunRecord {
    pub fn failed(&self) -> bool {
        self.r_bl.is_nan() || self.r_wl.is_nan()
    }
}

struct Outcome {
    errors: ClusteringErrors,
    iters: usize,
    converged: bool,
}

fn run_method(
    method: Method,
    cfg: &ScenarioConfig,
    inst: &MmlsbmInstance,
    a: &Tensor3,
    rng: &mut impl Rng,
) -> Result<Outcome> {
    let kcfg = cfg.kmeans_config();
    match method {
        Method::Alma => {
            let run = run_alma(a, &inst.ranks, &cfg.alma_config(), &kcfg, rng)?;
            Ok(Outcome {
                errors: run.clustering.evaluate(inst)?,
                iters: run.fit.iters_used,
                converged: run.fit.converged,
            })
        }
        Method::Twist => {
            let run = run_twist(a, &inst.ranks, &cfg.twist_config(), &kcfg, rng)?;
            Ok(Outcome {
                errors: run.clustering.evaluate(inst)?,
                iters: run.fit.iters_used,
                converged: run.fit.converged,
            })
        }
    }
}

/// Seed identifying one replicate; the instance and every method draw from
/// streams keyed by it.
pub fn replicate_seed(master: u64, scenario: u32, grid_index: usize, replicate: usize) -> u64 {
    derive_key(&[master, scenario as u64, grid_index as u64, replicate as u64])
}

fn run_replicate(cfg: &ScenarioConfig, grid_index: usize, replicate: usize) -> Vec<RunRecord> {
    let value = cfg.grid[grid_index];
    let (n, layers, p_max) = cfg.point(value);
    let seed = replicate_seed(cfg.master_seed, cfg.scenario, grid_index, replicate);
    let data = (|| {
        let mut rng = substream(seed, &[0]);
        let inst = sample_instance(n, layers, cfg.groups, cfg.k, p_max, cfg.alpha, &mut rng)?;
        let a = sample_adjacency(&assemble_ground_truth(&inst)?, &mut rng);
        Ok::<_, Error>((inst, a))
    })();
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    methods
        .into_iter()
        .map(|method| {
            let start = Instant::now();
            let outcome = data.as_ref().map_err(|e| e.to_string()).and_then(|(inst, a)| {
                let mut rng = substream(seed, &[method.purpose()]);
                run_method(method, cfg, inst, a, &mut rng).map_err(|e| e.to_string())
            });
            let seconds = start.elapsed().as_secs_f64();
            let (r_bl, r_wl, iters, converged) = match outcome {
                Ok(o) => (o.errors.between_layer, o.errors.within_layer_avg, o.iters, o.converged),
                Err(_) => (f64::NAN, f64::NAN, 0, false),
            };
            RunRecord {
                scenario: cfg.scenario,
                sweep_param: cfg.sweep.name().to_string(),
                sweep_value: value,
                replicate,
                method,
                r_bl,
                r_wl,
                iters,
                converged,
                seconds,
                seed,
            }
        })
        .collect()
}

/// Runs every grid point and replicate on a pool of `threads` workers.
/// Records come back ordered by (grid point, replicate, method) whatever the
/// thread count.
pub fn run_scenario(cfg: &ScenarioConfig, threads: usize) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let tasks: Vec<(usize, usize)> = (0..cfg.grid.len())
        .flat_map(|g| (0..cfg.replicates).map(move |r| (g, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
    let records: Vec<RunRecord> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(g, r)| run_replicate(cfg, g, r))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    });
    for g in 0..cfg.grid.len() {
        let at: Vec<&RunRecord> = records.iter().filter(|r| r.sweep_value == cfg.grid[g]).collect();
        let failed = at.iter().filter(|r| r.failed()).count();
        if 2 * failed > at.len() {
            return Err(Error::TooManyFailures {
                grid_index: g,
                failed,
                total: at.len(),
            });
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: u32,
    pub sweep_param: String,
    pub sweep_value: f64,
    pub method: Method,
    pub runs: usize,
    pub failed: usize,
    #[serde(rename = "R_BL_mean")]
    pub r_bl_mean: f64,
    #[serde(rename = "R_BL_std")]
    pub r_bl_std: f64,
    #[serde(rename = "R_WL_mean")]
    pub r_wl_mean: f64,
    #[serde(rename = "R_WL_std")]
    pub r_wl_std: f64,
    pub iters_mean: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Means and sample standard deviations per sweep value and method, over
/// the runs that did not fail.
pub fn aggregate(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(u32, u64, Method), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        // total order on the sweep value via its bit pattern; values are
        // nonnegative so bit order matches numeric order
        groups.entry((r.scenario, r.sweep_value.to_bits(), r.method)).or_default().push(r);
    }
    groups
        .into_values()
        .map(|rows| {
            let ok: Vec<&&RunRecord> = rows.iter().filter(|r| !r.failed()).collect();
            let (r_bl_mean, r_bl_std) = mean_std(&ok.iter().map(|r| r.r_bl).collect::<Vec<_>>());
            let (r_wl_mean, r_wl_std) = mean_std(&ok.iter().map(|r| r.r_wl).collect::<Vec<_>>());
            let (iters_mean, _) = mean_std(&ok.iter().map(|r| r.iters as f64).collect::<Vec<_>>());
            SummaryRow {
                scenario: rows[0].scenario,
                sweep_param: rows[0].sweep_param.clone(),
                sweep_value: rows[0].sweep_value,
                method: rows[0].method,
                runs: rows.len(),
                failed: rows.len() - ok.len(),
                r_bl_mean,
                r_bl_std,
                r_wl_mean,
                r_wl_std,
                iters_mean,
            }
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_runs(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Emit {
    Csv,
    Svg,
}

impl std::str::FromStr for Emit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(Emit::Csv),
            "svg" => Ok(Emit::Svg),
            other => Err(Error::Contract(format!("unknown output format {other:?}"))),
        }
    }
}

/// Writes `runs.csv` and `summary.csv` and/or `chart.svg` into `dir`.
pub fn emit_results(records: &[RunRecord], dir: &Path, formats: &[Emit]) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::Contract("no records to write".into()));
    }
    std::fs::create_dir_all(dir)?;
    let summary = aggregate(records);
    let mut written = Vec::new();
    if formats.contains(&Emit::Csv) {
        let runs = dir.join("runs.csv");
        write_csv(&runs, records)?;
        let agg = dir.join("summary.csv");
        write_csv(&agg, &summary)?;
        written.extend([runs, agg]);
    }
    if formats.contains(&Emit::Svg) {
        let chart = dir.join("chart.svg");
        std::fs::write(&chart, render_svg(&summary))?;
        written.push(chart);
    }
    Ok(written)
}

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 260.0;
const MARGIN: f64 = 50.0;

fn color(method: Method) -> &'static str {
    match method {
        Method::Alma => "#1f77b4",
        Method::Twist => "#d62728",
    }
}

/// Two panels side by side: mean between-layer and mean within-layer error
/// against the sweep value, one line per method.
pub fn render_svg(summary: &[SummaryRow]) -> String {
    let width = 2.0 * (PANEL_W + 2.0 * MARGIN);
    let height = PANEL_H + 2.0 * MARGIN;
    let xs: Vec<f64> = summary.iter().map(|r| r.sweep_value).collect();
    let (x_lo, x_hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let span = if x_hi > x_lo { x_hi - x_lo } else { 1.0 };
    let param = summary.first().map(|r| r.sweep_param.as_str()).unwrap_or("");
    let mut methods: Vec<Method> = summary.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    for (panel, title) in ["between-layer error", "within-layer error"].iter().enumerate() {
        let ox = panel as f64 * (PANEL_W + 2.0 * MARGIN) + MARGIN;
        let oy = MARGIN;
        let _ = writeln!(s, r#"<g>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{title}</text>"#,
            ox + PANEL_W / 2.0,
            oy - 15.0
        );
        let _ = writeln!(
            s,
            r#"<rect x="{ox}" y="{oy}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="black"/>"#
        );
        for t in 0..=4 {
            let frac = t as f64 / 4.0;
            let y = oy + PANEL_H * (1.0 - frac);
            let x = ox + PANEL_W * frac;
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.2}</text>"#, ox - 5.0, y + 4.0, frac);
            let _ = writeln!(
                s,
                r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
                oy + PANEL_H + 15.0,
                format_tick(x_lo + span * frac)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{param}</text>"#,
            ox + PANEL_W / 2.0,
            oy + PANEL_H + 35.0
        );
        for (mi, &method) in methods.iter().enumerate() {
            let pts: Vec<String> = summary
                .iter()
                .filter(|r| r.method == method)
                .filter_map(|r| {
                    let v = if panel == 0 { r.r_bl_mean } else { r.r_wl_mean };
                    v.is_finite().then(|| {
                        let x = ox + PANEL_W * (r.sweep_value - x_lo) / span;
                        let y = oy + PANEL_H * (1.0 - v.clamp(0.0, 1.0));
                        format!("{x:.2},{y:.2}")
                    })
                })
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
                color(method),
                pts.join(" ")
            );
            let ly = oy + 15.0 + 15.0 * mi as f64;
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{ly}" fill="{}" text-anchor="end">{}</text>"#,
                ox + PANEL_W - 5.0,
                color(method),
                method.name()
            );
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

fn format_tick(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowRow {
    #[serde(rename = "M")]
    pub groups: usize,
    /// `||A - Q̂ ×₁ Ŵ||_F` at the returned pair; `None` when the fit failed.
    pub objective: Option<f64>,
    pub iters: Option<usize>,
    pub error: Option<String>,
}

/// Fits the alternating estimator for each `M` in `m_grid`, with ranks
/// `k_rule(M)`.
pub fn elbow_scan(
    a: &Tensor3,
    m_grid: &[usize],
    k_rule: impl Fn(usize) -> Vec<usize>,
    alma_cfg: &AlmaConfig,
    kmeans_cfg: &KmeansConfig,
    rng: &mut impl Rng,
) -> Result<Vec<ElbowRow>> {
    if m_grid.is_empty() || m_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Contract("M grid must be nonempty and strictly ascending".into()));
    }
    Ok(m_grid
        .iter()
        .map(|&m| {
            let fitted = spectral_init(a, m, &kmeans_cfg.with_k(m), rng).and_then(|init| {
                let fit = alma_fit(a, &k_rule(m), &init.w, alma_cfg)?;
                Ok((objective(a, &fit.q, &fit.w)?, fit.iters_used))
            });
            match fitted {
                Ok((obj, iters)) => ElbowRow {
                    groups: m,
                    objective: Some(obj),
                    iters: Some(iters),
                    error: None,
                },
                Err(e) => ElbowRow {
                    groups: m,
                    objective: None,
                    iters: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

/// Successive decreases `obj(M_{i-1}) - obj(M_i)`, keyed by `M_i`, over
/// consecutive rows that both have an objective.
pub fn elbow_drops(rows: &[ElbowRow]) -> Vec<(usize, f64)> {
    rows.windows(2)
        .filter_map(|w| match (w[0].objective, w[1].objective) {
            (Some(a), Some(b)) => Some((w[1].groups, a - b)),
            _ => None,
        })
        .collect()
}
