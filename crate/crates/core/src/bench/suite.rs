//! Suites of random linear instances, their summaries and report formats.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::gen::{gen_linear, Dims};
use crate::reformulate::RelaxationScheme;
use crate::relaxation::{run_linear, RelaxationParams, TerminalReason};

fn de_schemes<'de, D: Deserializer<'de>>(
    d: D,
) -> std::result::Result<Vec<RelaxationScheme>, D::Error> {
    let names = Vec::<String>::deserialize(d)?;
    names
        .iter()
        .map(|s| s.parse().map_err(serde::de::Error::custom))
        .collect()
}

fn default_density() -> f64 {
    0.5
}

fn default_repeats() -> usize {
    1
}

fn default_schemes() -> Vec<RelaxationScheme> {
    RelaxationScheme::ALL.to_vec()
}

/// Parameters of [`run_suite`]; also the JSON config format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub dims: Vec<Dims>,
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_density")]
    pub density: f64,
    #[serde(default = "default_schemes", deserialize_with = "de_schemes")]
    pub schemes: Vec<RelaxationScheme>,
    #[serde(default)]
    pub params: RelaxationParams,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Worker threads; `None` uses every core.
    #[serde(default)]
    pub jobs: Option<usize>,
}

impl SuiteConfig {
    pub fn new(dims: Vec<Dims>, count: usize, seed: u64) -> Self {
        SuiteConfig {
            dims,
            count,
            seed,
            density: default_density(),
            schemes: default_schemes(),
            params: RelaxationParams::default(),
            repeats: default_repeats(),
            jobs: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::instance("dims", "at least one group is required"));
        }
        for (g, d) in self.dims.iter().enumerate() {
            if d.n == 0 || d.l == 0 || d.m == 0 || d.p == 0 {
                return Err(Error::instance(
                    format!("dims[{g}]"),
                    "every dimension must be at least 1",
                ));
            }
        }
        if self.count == 0 {
            return Err(Error::instance("count", "must be at least 1"));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::instance("density", "must lie in (0, 1]"));
        }
        if self.schemes.is_empty() {
            return Err(Error::instance(
                "schemes",
                "at least one scheme is required",
            ));
        }
        if self.repeats == 0 {
            return Err(Error::instance("repeats", "must be at least 1"));
        }
        if self.jobs == Some(0) {
            return Err(Error::instance("jobs", "must be at least 1"));
        }
        self.params
            .validate()
            .map_err(|e| Error::instance("params", e.to_string()))
    }

    /// Seed of instance `index` (0-based) in group `group`.
    pub fn instance_seed(&self, group: usize, index: usize) -> u64 {
        self.seed.wrapping_add((group * self.count + index) as u64)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SuiteConfig = crate::error::parse_json(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One `(instance, scheme)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    /// 0-based group index into [`SuiteConfig::dims`].
    pub group: usize,
    pub dims: Dims,
    /// 1-based instance number within the group.
    pub instance: usize,
    pub seed: u64,
    pub scheme: RelaxationScheme,
    pub objective: f64,
    pub infeasibility: f64,
    /// Mean wall time over the repeats, in seconds.
    pub time: f64,
    pub reason: Option<TerminalReason>,
    pub error: Option<String>,
}

impl SuiteRow {
    pub fn is_feasible(&self, feas_tol: f64) -> bool {
        self.error.is_none() && self.infeasibility < feas_tol && self.objective.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteTable {
    pub config: SuiteConfig,
    pub rows: Vec<SuiteRow>,
}

fn run_cell(cfg: &SuiteConfig, group: usize, index: usize, scheme: RelaxationScheme) -> SuiteRow {
    let dims = cfg.dims[group];
    let seed = cfg.instance_seed(group, index);
    let mut row = SuiteRow {
        group,
        dims,
        instance: index + 1,
        seed,
        scheme,
        objective: f64::NAN,
        infeasibility: f64::INFINITY,
        time: f64::NAN,
        reason: None,
        error: None,
    };
    let lin = match gen_linear(dims, cfg.density, seed) {
        Ok(l) => l,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    let mut total = 0.0;
    for rep in 0..cfg.repeats {
        let start = Instant::now();
        let out = run_linear(&lin, scheme, &cfg.params, None);
        total += start.elapsed().as_secs_f64();
        match out {
            Ok(r) if rep == 0 => {
                row.objective = r.objective;
                row.infeasibility = r.infeasibility.total;
                row.reason = Some(r.reason);
            }
            Ok(_) => {}
            Err(e) => {
                row.error = Some(e.to_string());
                total /= (rep + 1) as f64;
                row.time = total;
                return row;
            }
        }
    }
    row.time = total / cfg.repeats as f64;
    row
}

/// Runs every scheme on every generated instance. Cells run on a worker pool
/// and come back in `(group, instance, scheme)` order; a failing cell is
/// recorded in its row and never stops the suite.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteTable> {
    cfg.validate()?;
    let cells: Vec<(usize, usize, RelaxationScheme)> = (0..cfg.dims.len())
        .flat_map(|g| (0..cfg.count).flat_map(move |i| cfg.schemes.iter().map(move |&s| (g, i, s))))
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cfg.jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    let rows = pool.install(|| {
        cells
            .par_iter()
            .map(|&(g, i, s)| run_cell(cfg, g, i, s))
            .collect()
    });
    Ok(SuiteTable {
        config: cfg.clone(),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub group: usize,
    pub dims: Dims,
    pub scheme: RelaxationScheme,
    pub instances: usize,
    pub feasible: usize,
    pub dominant: usize,
    /// Mean of the per-row times, in seconds.
    pub avg_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub feas_tol: f64,
    pub obj_tol: f64,
    pub entries: Vec<SchemeSummary>,
}

pub const DEFAULT_FEAS_TOL: f64 = 1e-3;
pub const DEFAULT_OBJ_TOL: f64 = 1e-4;

/// Per group and scheme: rows with infeasibility below `feas_tol`, those
/// among them within `obj_tol` of the best feasible value on the same
/// instance, and the mean time.
pub fn summarize(table: &SuiteTable, feas_tol: f64, obj_tol: f64) -> Summary {
    let mut best: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for r in &table.rows {
        if r.is_feasible(feas_tol) {
            let e = best.entry((r.group, r.instance)).or_insert(f64::INFINITY);
            *e = e.min(r.objective);
        }
    }
    let mut order: Vec<(usize, RelaxationScheme)> = Vec::new();
    let mut acc: BTreeMap<(usize, usize), SchemeSummary> = BTreeMap::new();
    for r in &table.rows {
        let si = match order
            .iter()
            .position(|&(g, s)| g == r.group && s == r.scheme)
        {
            Some(k) => k,
            None => {
                order.push((r.group, r.scheme));
                order.len() - 1
            }
        };
        let e = acc.entry((r.group, si)).or_insert(SchemeSummary {
            group: r.group,
            dims: r.dims,
            scheme: r.scheme,
            instances: 0,
            feasible: 0,
            dominant: 0,
            avg_time: 0.0,
        });
        e.instances += 1;
        if r.time.is_finite() {
            e.avg_time += r.time;
        }
        if r.is_feasible(feas_tol) {
            e.feasible += 1;
            if r.objective <= best[&(r.group, r.instance)] + obj_tol {
                e.dominant += 1;
            }
        }
    }
    let mut entries: Vec<SchemeSummary> = acc.into_values().collect();
    entries.sort_by_key(|e| {
        (
            e.group,
            order
                .iter()
                .position(|&(g, s)| g == e.group && s == e.scheme)
                .unwrap_or(usize::MAX),
        )
    });
    for e in &mut entries {
        e.avg_time /= e.instances.max(1) as f64;
    }
    Summary {
        feas_tol,
        obj_tol,
        entries,
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

pub const CSV_HEADER: &str = "#,ObjVal,Infeasibility,Time";

impl SuiteTable {
    pub fn groups(&self) -> usize {
        self.config.dims.len()
    }

    pub fn rows_for(
        &self,
        group: usize,
        scheme: RelaxationScheme,
    ) -> impl Iterator<Item = &SuiteRow> {
        self.rows
            .iter()
            .filter(move |r| r.group == group && r.scheme == scheme)
    }

    /// Per-instance results of one group and scheme with the columns
    /// `#, ObjVal, Infeasibility, Time`.
    pub fn to_csv(&self, group: usize, scheme: RelaxationScheme) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in self.rows_for(group, scheme) {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                r.instance,
                fmt_num(r.objective),
                fmt_num(r.infeasibility),
                fmt_num(r.time)
            );
        }
        s
    }

    /// Aligned markdown with one per-instance table per group and scheme.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        for g in 0..self.groups() {
            let d = self.config.dims[g];
            for &scheme in &self.config.schemes {
                let _ = writeln!(
                    s,
                    "### {} (n={}, l={}, m={}, p={})\n",
                    scheme.label(),
                    d.n,
                    d.l,
                    d.m,
                    d.p
                );
                let body: Vec<[String; 4]> = self
                    .rows_for(g, scheme)
                    .map(|r| {
                        [
                            r.instance.to_string(),
                            if r.objective.is_finite() {
                                format!("{:.2}", r.objective)
                            } else {
                                fmt_num(r.objective)
                            },
                            if r.infeasibility.is_finite() {
                                format!("{:.2e}", r.infeasibility)
                            } else {
                                fmt_num(r.infeasibility)
                            },
                            format!("{:.4}", r.time),
                        ]
                    })
                    .collect();
                s.push_str(&aligned(&["#", "ObjVal", "Infeasibility", "Time"], &body));
                s.push('\n');
            }
        }
        s
    }
}

fn aligned<const N: usize>(header: &[&str; N], body: &[[String; N]]) -> String {
    let mut width = [0usize; N];
    for (k, h) in header.iter().enumerate() {
        width[k] = h.chars().count();
    }
    for row in body {
        for (k, c) in row.iter().enumerate() {
            width[k] = width[k].max(c.chars().count());
        }
    }
    let line = |cells: Vec<String>| {
        let padded: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(k, c)| format!("{c:>w$}", w = width[k]))
            .collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut s = line(header.iter().map(|h| h.to_string()).collect());
    let rule: Vec<String> = width
        .iter()
        .map(|w| format!("{}:", "-".repeat(w.saturating_sub(1).max(1))))
        .collect();
    s.push_str(&format!(
        "|{}|\n",
        rule.iter()
            .map(|r| format!(" {r} "))
            .collect::<Vec<_>>()
            .join("|")
    ));
    for row in body {
        s.push_str(&line(row.to_vec()));
    }
    s
}

impl Summary {
    fn groups(&self) -> Vec<(usize, Dims)> {
        let mut g: Vec<(usize, Dims)> = self.entries.iter().map(|e| (e.group, e.dims)).collect();
        g.dedup();
        g
    }

    fn schemes(&self) -> Vec<RelaxationScheme> {
        let mut out: Vec<RelaxationScheme> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.scheme) {
                out.push(e.scheme);
            }
        }
        out
    }

    fn entry(&self, group: usize, scheme: RelaxationScheme) -> Option<&SchemeSummary> {
        self.entries
            .iter()
            .find(|e| e.group == group && e.scheme == scheme)
    }

    /// Feasible counts and mean times per group, one column pair per scheme.
    pub fn feasible_table(&self) -> String {
        let schemes = self.schemes();
        let mut header = vec!["n".to_string(), "l".into(), "m".into(), "p".into()];
        for s in &schemes {
            header.push(format!("{} feasible", s.label()));
            header.push(format!("{} time", s.label()));
        }
        let body = self
            .groups()
            .into_iter()
            .map(|(g, d)| {
                let mut row = vec![
                    d.n.to_string(),
                    d.l.to_string(),
                    d.m.to_string(),
                    d.p.to_string(),
                ];
                for &s in &schemes {
                    match self.entry(g, s) {
                        Some(e) => {
                            row.push(e.feasible.to_string());
                            row.push(format!("{:.4}", e.avg_time));
                        }
                        None => {
                            row.push("-".into());
                            row.push("-".into());
                        }
                    }
                }
                row
            })
            .collect();
        dyn_aligned(header, body)
    }

    /// Dominant counts per group, one column per scheme.
    pub fn dominant_table(&self) -> String {
        let schemes = self.schemes();
        let mut header = vec!["n".to_string(), "l".into(), "m".into(), "p".into()];
        for s in &schemes {
            header.push(format!("{} dominant", s.label()));
        }
        let body = self
            .groups()
            .into_iter()
            .map(|(g, d)| {
                let mut row = vec![
                    d.n.to_string(),
                    d.l.to_string(),
                    d.m.to_string(),
                    d.p.to_string(),
                ];
                for &s in &schemes {
                    row.push(
                        self.entry(g, s)
                            .map_or("-".to_string(), |e| e.dominant.to_string()),
                    );
                }
                row
            })
            .collect();
        dyn_aligned(header, body)
    }

    pub fn to_markdown(&self) -> String {
        format!(
            "## Feasible cases (Infeasibility < {:e})\n\n{}\n## Dominant cases (within {:e} of the best feasible value)\n\n{}",
            self.feas_tol,
            self.feasible_table(),
            self.obj_tol,
            self.dominant_table()
        )
    }
}

fn dyn_aligned(header: Vec<String>, body: Vec<Vec<String>>) -> String {
    let n = header.len();
    let mut width = vec![0usize; n];
    for (k, h) in header.iter().enumerate() {
        width[k] = h.chars().count();
    }
    for row in &body {
        for (k, c) in row.iter().enumerate() {
            width[k] = width[k].max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(k, c)| format!("{c:>w$}", w = width[k]))
            .collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut s = line(&header);
    let rule: Vec<String> = width
        .iter()
        .map(|w| format!(" {}: ", "-".repeat(w.saturating_sub(1).max(1))))
        .collect();
    s.push_str(&format!("|{}|\n", rule.join("|")));
    for row in &body {
        s.push_str(&line(row));
    }
    s
}
