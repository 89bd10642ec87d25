//! Batch benchmark over generated instances with per-group aggregates.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use dcra_core::io::{check_schema_version, SCHEMA_VERSION};
use dcra_core::{certify, solve, Error, ProblemInstance, Result, SolverConfig, Termination};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{projected_subgradient_baseline, BaselineConfig};
use crate::generators::{gen_bcs, gen_random_l1, to_zero_one, zero_one_transform, BcsSpec};
use crate::oracle::{brute_force_oracle, DEFAULT_CAP};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dcra,
    Baseline,
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Dcra => "dcra",
            Method::Baseline => "baseline",
            Method::Oracle => "oracle",
        }
    }
}

/// Random ℓ1 problem with `rows` residuals and `cols` binary variables.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeSpec {
    pub rows: usize,
    pub cols: usize,
}

fn default_lambda() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BcsGrid {
    /// Signal dimension.
    #[serde(alias = "N")]
    pub n: usize,
    pub alphas: Vec<f64>,
    #[serde(alias = "rhos")]
    pub sparsity_rhos: Vec<f64>,
    pub mus: Vec<f64>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

/// Initial penalty for BCS instances, whose loss is far smaller in scale than
/// that of standard-normal random instances.
pub const BCS_RHO0: f64 = 0.02;

pub fn bcs_solver_default() -> SolverConfig {
    SolverConfig { rho0: BCS_RHO0, ..Default::default() }
}

fn default_version() -> String {
    SCHEMA_VERSION.into()
}

fn default_cap() -> usize {
    DEFAULT_CAP
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    #[serde(default = "default_version")]
    pub schema_version: String,
    #[serde(default)]
    pub sizes: Vec<SizeSpec>,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bcs_grid: Option<BcsGrid>,
    /// Solver settings for random instances.
    #[serde(default)]
    pub solver: SolverConfig,
    /// Solver settings for BCS instances; defaults to [`bcs_solver_default`].
    #[serde(default = "bcs_solver_default")]
    pub bcs_solver: SolverConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
    #[serde(default = "default_cap")]
    pub oracle_cap: usize,
}

impl SuiteSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SuiteSpec = serde_json::from_str(text).map_err(|e| {
            Error::Format(format!("suite JSON, line {} column {}: {e}", e.line(), e.column()))
        })?;
        check_schema_version(&spec.schema_version)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("suite lists no methods".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("suite lists no seeds".into()));
        }
        if self.sizes.is_empty() && self.bcs_grid.is_none() {
            return Err(Error::InvalidConfig("suite has neither sizes nor a bcs_grid".into()));
        }
        self.solver.validate()?;
        self.bcs_solver.validate()
    }

    /// Methods in canonical order without duplicates.
    fn method_list(&self) -> Vec<Method> {
        let mut m = self.methods.clone();
        m.sort();
        m.dedup();
        m
    }

    fn tasks(&self) -> Vec<Task> {
        let mut tasks = Vec::new();
        for size in &self.sizes {
            for &seed in &self.seeds {
                tasks.push(Task::Random { size: *size, seed });
            }
        }
        if let Some(grid) = &self.bcs_grid {
            for &alpha in &grid.alphas {
                for &rho in &grid.sparsity_rhos {
                    for &mu in &grid.mus {
                        for &seed in &self.seeds {
                            tasks.push(Task::Bcs(BcsSpec {
                                n: grid.n,
                                alpha,
                                sparsity_rho: rho,
                                mu,
                                lambda: grid.lambda,
                                seed,
                            }));
                        }
                    }
                }
            }
        }
        tasks
    }
}

#[derive(Clone, Debug)]
enum Task {
    Random { size: SizeSpec, seed: u64 },
    Bcs(BcsSpec),
}

/// One (instance, method) observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub family: String,
    pub group: String,
    pub label: String,
    pub rows: usize,
    pub cols: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparsity_rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    pub seed: u64,
    pub method: Method,
    /// `"ok"` or the error message.
    pub status: String,
    pub objective: Option<f64>,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hamming: Option<usize>,
    /// `(obj − obj*)/obj*` against the exhaustive optimum when it was computed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_gap_to_oracle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub termination: Option<Termination>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feas_gap: Option<f64>,
}

impl BenchRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

struct Prepared {
    instance: ProblemInstance,
    family: &'static str,
    group: String,
    alpha: Option<f64>,
    sparsity_rho: Option<f64>,
    mu: Option<f64>,
    seed: u64,
    offset: f64,
    truth: Option<Vec<f64>>,
}

fn prepare(task: &Task) -> Result<Prepared> {
    match task {
        Task::Random { size, seed } => Ok(Prepared {
            instance: gen_random_l1(size.rows, size.cols, *seed)?,
            family: "random",
            group: format!("random r={} n={}", size.rows, size.cols),
            alpha: None,
            sparsity_rho: None,
            mu: None,
            seed: *seed,
            offset: 0.0,
            truth: None,
        }),
        Task::Bcs(spec) => {
            let model = gen_bcs(spec)?;
            let signed = zero_one_transform(&model)?;
            Ok(Prepared {
                instance: signed.instance,
                family: "bcs",
                group: format!(
                    "bcs N={} alpha={} rho={} mu={}",
                    spec.n, spec.alpha, spec.sparsity_rho, spec.mu
                ),
                alpha: Some(spec.alpha),
                sparsity_rho: Some(spec.sparsity_rho),
                mu: Some(spec.mu),
                seed: spec.seed,
                offset: signed.offset,
                truth: Some(model.x0),
            })
        }
    }
}

struct MethodOutput {
    z: Vec<f64>,
    termination: Option<Termination>,
    feas_gap: Option<f64>,
}

fn run_method(
    method: Method,
    inst: &ProblemInstance,
    seed: u64,
    solver: &SolverConfig,
    suite: &SuiteSpec,
) -> Result<MethodOutput> {
    match method {
        Method::Dcra => {
            let cfg = SolverConfig { seed, ..solver.clone() };
            let out = solve(inst, &cfg)?;
            let cert = certify(inst, &out)?;
            Ok(MethodOutput {
                z: cert.z,
                termination: Some(out.trace.termination),
                feas_gap: Some(cert.feas_gap),
            })
        }
        Method::Baseline => {
            let cfg = BaselineConfig { seed, ..suite.baseline.clone() };
            let r = projected_subgradient_baseline(inst, &cfg)?;
            Ok(MethodOutput { z: r.z, termination: None, feas_gap: None })
        }
        Method::Oracle => {
            let r = brute_force_oracle(inst, suite.oracle_cap)?;
            Ok(MethodOutput { z: r.z, termination: None, feas_gap: None })
        }
    }
}

fn run_task(task: &Task, suite: &SuiteSpec, methods: &[Method]) -> Vec<BenchRow> {
    let (rows_dim, cols_dim, fallback_label) = match task {
        Task::Random { size, seed } => (size.rows, size.cols, format!("random-r{}-n{}-s{seed}", size.rows, size.cols)),
        Task::Bcs(spec) => (spec.measurements(), spec.n, spec.label()),
    };
    let prepared = match prepare(task) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("instance {fallback_label} failed to generate: {e}");
            return methods
                .iter()
                .map(|&method| BenchRow {
                    family: match task {
                        Task::Random { .. } => "random".into(),
                        Task::Bcs(_) => "bcs".into(),
                    },
                    group: fallback_label.clone(),
                    label: fallback_label.clone(),
                    rows: rows_dim,
                    cols: cols_dim,
                    alpha: None,
                    sparsity_rho: None,
                    mu: None,
                    seed: 0,
                    method,
                    status: format!("error: {e}"),
                    objective: None,
                    seconds: 0.0,
                    mse: None,
                    hamming: None,
                    rel_gap_to_oracle: None,
                    termination: None,
                    feas_gap: None,
                })
                .collect();
        }
    };
    let inst = &prepared.instance;
    let label = inst.label().unwrap_or(&fallback_label).to_owned();

    let mut rows: Vec<BenchRow> = methods
        .iter()
        .map(|&method| {
            let clock = Instant::now();
            let solver = match task {
                Task::Random { .. } => &suite.solver,
                Task::Bcs(_) => &suite.bcs_solver,
            };
            let result = run_method(method, inst, prepared.seed, solver, suite);
            let seconds = clock.elapsed().as_secs_f64();
            let mut row = BenchRow {
                family: prepared.family.into(),
                group: prepared.group.clone(),
                label: label.clone(),
                rows: rows_dim,
                cols: cols_dim,
                alpha: prepared.alpha,
                sparsity_rho: prepared.sparsity_rho,
                mu: prepared.mu,
                seed: prepared.seed,
                method,
                status: "ok".into(),
                objective: None,
                seconds,
                mse: None,
                hamming: None,
                rel_gap_to_oracle: None,
                termination: None,
                feas_gap: None,
            };
            match result.and_then(|out| {
                let obj = dcra_core::true_objective(inst, &out.z)? + prepared.offset;
                Ok((out, obj))
            }) {
                Ok((out, obj)) => {
                    row.objective = Some(obj);
                    row.termination = out.termination;
                    row.feas_gap = out.feas_gap;
                    if let Some(truth) = &prepared.truth {
                        let x = to_zero_one(&out.z);
                        let diff = x.iter().zip(truth).filter(|(a, b)| a != b).count();
                        row.hamming = Some(diff);
                        row.mse = Some(diff as f64 / truth.len() as f64);
                    }
                }
                Err(e) => {
                    log::warn!("{label}: {} failed: {e}", method.name());
                    row.status = format!("error: {e}");
                }
            }
            row
        })
        .collect();

    let oracle = rows
        .iter()
        .find(|r| r.method == Method::Oracle)
        .and_then(|r| r.objective);
    if let Some(opt) = oracle {
        for r in &mut rows {
            if let Some(obj) = r.objective {
                r.rel_gap_to_oracle = (opt != 0.0).then(|| (obj - opt) / opt);
            }
        }
    }
    rows
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub completed: usize,
    pub failed: usize,
    pub mean_objective: Option<f64>,
    pub mean_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_hamming: Option<f64>,
}

/// DCRA against one other method over the instances where both succeeded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub against: Method,
    pub paired: usize,
    /// Fraction of paired instances with a strictly smaller DCRA objective.
    pub win_rate: f64,
    /// Mean of `(obj_dcra − obj_other)/obj_other`, skipping zero denominators.
    pub mean_rel_diff: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub instances: usize,
    pub methods: Vec<MethodSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub dcra_vs: Vec<Comparison>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: String,
    pub suite: SuiteSpec,
    pub groups: Vec<GroupSummary>,
    pub rows: Vec<BenchRow>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut k) = (0.0, 0usize);
    for x in xs {
        s += x;
        k += 1;
    }
    (k > 0).then(|| s / k as f64)
}

/// Recompute the per-group aggregates from rows, grouping in first-seen order.
pub fn aggregate(rows: &[BenchRow], methods: &[Method]) -> Vec<GroupSummary> {
    let mut order: Vec<String> = Vec::new();
    let mut by_group: BTreeMap<String, Vec<&BenchRow>> = BTreeMap::new();
    for r in rows {
        if !by_group.contains_key(&r.group) {
            order.push(r.group.clone());
        }
        by_group.entry(r.group.clone()).or_default().push(r);
    }
    order
        .into_iter()
        .map(|group| {
            let members = &by_group[&group];
            let mut labels: Vec<&str> = members.iter().map(|r| r.label.as_str()).collect();
            labels.dedup();
            let summaries = methods
                .iter()
                .map(|&m| {
                    let rs: Vec<&&BenchRow> = members.iter().filter(|r| r.method == m).collect();
                    let ok: Vec<&&BenchRow> = rs.iter().copied().filter(|r| r.ok()).collect();
                    MethodSummary {
                        method: m,
                        completed: ok.len(),
                        failed: rs.len() - ok.len(),
                        mean_objective: mean(ok.iter().filter_map(|r| r.objective)),
                        mean_seconds: mean(rs.iter().map(|r| r.seconds)).unwrap_or(0.0),
                        mean_mse: mean(ok.iter().filter_map(|r| r.mse)),
                        mean_hamming: mean(ok.iter().filter_map(|r| r.hamming.map(|h| h as f64))),
                    }
                })
                .collect();

            let mut dcra_vs = Vec::new();
            if methods.contains(&Method::Dcra) {
                for &other in methods.iter().filter(|&&m| m != Method::Dcra) {
                    let mut pairs = Vec::new();
                    for r in members.iter().filter(|r| r.method == Method::Dcra) {
                        let partner = members
                            .iter()
                            .find(|o| o.method == other && o.label == r.label);
                        if let (Some(d), Some(o)) = (r.objective, partner.and_then(|o| o.objective)) {
                            pairs.push((d, o));
                        }
                    }
                    if pairs.is_empty() {
                        continue;
                    }
                    let wins = pairs.iter().filter(|(d, o)| d < o).count();
                    dcra_vs.push(Comparison {
                        against: other,
                        paired: pairs.len(),
                        win_rate: wins as f64 / pairs.len() as f64,
                        mean_rel_diff: mean(
                            pairs.iter().filter(|(_, o)| *o != 0.0).map(|(d, o)| (d - o) / o),
                        ),
                    });
                }
            }
            GroupSummary {
                group,
                instances: labels.len(),
                methods: summaries,
                dcra_vs,
            }
        })
        .collect()
}

/// Run every method on every instance of the suite with `jobs` worker threads.
///
/// Output is independent of `jobs`: tasks are isolated and collected in index order.
pub fn run_bench(suite: &SuiteSpec, jobs: usize) -> Result<BenchReport> {
    suite.validate()?;
    let methods = suite.method_list();
    let tasks = suite.tasks();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let rows: Vec<BenchRow> = pool.install(|| {
        tasks
            .par_iter()
            .map(|t| run_task(t, suite, &methods))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    });
    let groups = aggregate(&rows, &methods);
    Ok(BenchReport {
        schema_version: SCHEMA_VERSION.into(),
        suite: suite.clone(),
        groups,
        rows,
    })
}

impl BenchReport {
    /// Zero every timing field so the report is reproducible byte for byte.
    pub fn without_timing(mut self) -> Self {
        for r in &mut self.rows {
            r.seconds = 0.0;
        }
        for g in &mut self.groups {
            for m in &mut g.methods {
                m.mean_seconds = 0.0;
            }
        }
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: BenchReport = serde_json::from_str(text)
            .map_err(|e| Error::Format(format!("bench report JSON: {e}")))?;
        check_schema_version(&r.schema_version)?;
        Ok(r)
    }
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

pub const ROWS_CSV_HEADER: &str = "family,label,rows,cols,alpha,sparsity_rho,mu,seed,method,status,objective,seconds,mse,hamming,rel_gap_to_oracle,termination,feas_gap";

pub fn rows_csv(rows: &[BenchRow]) -> String {
    let mut out = format!("# dcra bench rows, schema {SCHEMA_VERSION}\n{ROWS_CSV_HEADER}\n");
    for r in rows {
        let term = r.termination.map(|t| {
            serde_json::to_value(t)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default()
        });
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.family,
            csv_field(&r.label),
            r.rows,
            r.cols,
            opt(&r.alpha),
            opt(&r.sparsity_rho),
            opt(&r.mu),
            r.seed,
            r.method.name(),
            csv_field(&r.status),
            opt(&r.objective),
            r.seconds,
            opt(&r.mse),
            opt(&r.hamming),
            opt(&r.rel_gap_to_oracle),
            opt(&term),
            opt(&r.feas_gap),
        )
        .unwrap();
    }
    out
}

pub const SWEEP_CSV_HEADER: &str = "alpha,sparsity_rho,mu,seed,method,objective,mse,hamming,seconds";

/// BCS phase-diagram sweep: one long-format row per (α, ρ, μ, seed, method).
/// `solver` is used for every DCRA run.
pub fn sweep_bcs(
    grid: &BcsGrid,
    seeds: &[u64],
    methods: &[Method],
    solver: &SolverConfig,
    baseline: &BaselineConfig,
    jobs: usize,
) -> Result<Vec<BenchRow>> {
    let suite = SuiteSpec {
        schema_version: SCHEMA_VERSION.into(),
        sizes: vec![],
        seeds: seeds.to_vec(),
        methods: methods.to_vec(),
        bcs_grid: Some(grid.clone()),
        solver: SolverConfig::default(),
        bcs_solver: solver.clone(),
        baseline: baseline.clone(),
        oracle_cap: DEFAULT_CAP,
    };
    Ok(run_bench(&suite, jobs)?.rows)
}

pub fn sweep_csv(rows: &[BenchRow], omit_timing: bool) -> String {
    let mut out = format!("# dcra bcs sweep, schema {SCHEMA_VERSION}\n{SWEEP_CSV_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            opt(&r.alpha),
            opt(&r.sparsity_rho),
            opt(&r.mu),
            r.seed,
            r.method.name(),
            opt(&r.objective),
            opt(&r.mse),
            opt(&r.hamming),
            if omit_timing { 0.0 } else { r.seconds },
        )
        .unwrap();
    }
    out
}
