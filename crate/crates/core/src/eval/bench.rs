//! Benchmark driver: every encoder against one-hot coding under repeated
//! stratified cross-validation with a k-NN learner.
//!
//! Each seed index `s` gets the child seed `mix(master, s)`; the dataset
//! (when simulated), the fold plan and every per-cell random choice derive
//! from it, never from the method list, so adding methods leaves the
//! numbers of the others untouched.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::folds::{stratified_kfold, FoldPlan};
use super::knn::PreparedFold;
use super::stats::{mse, paired_t_test, percent_improvement};
use super::{predict_with_encoder, LearnerK};
use crate::data::{ColumnSchema, Dataset};
use crate::encoders::select::{argmin_first, cv_grid, select_k_by_cv};
use crate::encoders::{EncoderSpec, Method};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::rng;
use crate::sim::{simulate, SimConfig};

pub const BASELINE: &str = "onehot";

const SALT_INNER_K: u64 = 0x6b;
const SALT_INNER_LEARNER: u64 = 0x6c;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Csv { path: PathBuf, schema: ColumnSchema },
    Simulate(SimConfig),
}

/// One column of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEntry {
    pub name: String,
    #[serde(flatten)]
    pub spec: EncoderSpec,
    /// Choose the rank by inner cross-validation on each training fold.
    #[serde(default)]
    pub select_k: bool,
}

impl MethodEntry {
    pub fn new(method: Method) -> Self {
        MethodEntry {
            name: method.name().to_string(),
            spec: EncoderSpec::new(method),
            select_k: false,
        }
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn with_select_k(mut self) -> Self {
        self.select_k = true;
        self
    }
}

/// `method[:option...]` with options `k=<n>`, `k=cv`, `lambda=<x>`,
/// `lambda1=<x>`, `reg=<x>`, `seed=<n>`, `copies=<n>`; the whole string
/// becomes the entry name.
impl FromStr for MethodEntry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let method: Method = parts.next().unwrap_or_default().parse()?;
        let mut entry = MethodEntry::new(method).with_name(s);
        for opt in parts {
            let (key, value) = opt
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("method option '{opt}' is not key=value")))?;
            let bad = || Error::Config(format!("invalid value in method option '{opt}'"));
            match key {
                "k" if value == "cv" => entry.select_k = true,
                "k" => entry.spec.k = Some(value.parse().map_err(|_| bad())?),
                "lambda" => entry.spec.lambda = value.parse().map_err(|_| bad())?,
                "lambda1" => entry.spec.lambda1 = value.parse().map_err(|_| bad())?,
                "reg" => entry.spec.reg = value.parse().map_err(|_| bad())?,
                "seed" => entry.spec.seed = value.parse().map_err(|_| bad())?,
                "copies" => entry.spec.copies = Some(value.parse().map_err(|_| bad())?),
                _ => return Err(Error::Config(format!("unknown method option '{key}'"))),
            }
        }
        Ok(entry)
    }
}

fn default_folds() -> usize {
    4
}

fn default_seeds() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub source: DataSource,
    pub methods: Vec<MethodEntry>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Number of repetitions.
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    /// Master seed.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub learner: LearnerK,
    /// Folds of the inner cross-validation used for rank and k selection.
    #[serde(default = "default_folds")]
    pub inner_folds: usize,
}

impl BenchConfig {
    pub fn new(source: DataSource, methods: Vec<MethodEntry>) -> Self {
        BenchConfig {
            source,
            methods,
            folds: default_folds(),
            seeds: default_seeds(),
            seed: 0,
            learner: LearnerK::default(),
            inner_folds: default_folds(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 || self.inner_folds < 2 {
            return Err(Error::Config(
                "folds and inner folds must be >= 2".to_string(),
            ));
        }
        if self.seeds == 0 {
            return Err(Error::Config("at least one seed is needed".to_string()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods to benchmark".to_string()));
        }
        if let LearnerK::Fixed(0) = self.learner {
            return Err(Error::Config("learner k must be >= 1".to_string()));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].iter().any(|o| o.name == m.name) {
                return Err(Error::Config(format!("duplicate method name '{}'", m.name)));
            }
            if m.name == BASELINE && m.spec.method != Method::Onehot {
                return Err(Error::Config(format!(
                    "the name '{BASELINE}' is reserved for the baseline"
                )));
            }
            if m.select_k && !matches!(m.spec.method, Method::Lowrank | Method::Sparselowrank) {
                return Err(Error::Config(format!(
                    "rank selection requested for {}, which has no rank",
                    m.name
                )));
            }
        }
        if let DataSource::Simulate(sim) = &self.source {
            sim.validate()?;
        }
        Ok(())
    }
}

/// Per-method aggregate; improvements and the t-test use the cells where
/// both the method and the baseline succeeded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub name: String,
    pub method: Method,
    pub mean_mse: Option<f64>,
    /// Mean over cells of the percent improvement over one-hot.
    pub improvement: Option<f64>,
    /// Paired t on `mse_onehot − mse_method`; positive favours the method.
    pub t: Option<f64>,
    pub p: Option<f64>,
    pub cells: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRecord {
    pub method: String,
    pub seed_index: usize,
    pub seed: u64,
    pub fold: usize,
    pub n_test: usize,
    pub mse: Option<f64>,
    pub improvement: Option<f64>,
    pub selected_k: Option<usize>,
    pub learner_k: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub baseline: String,
    pub methods: Vec<MethodSummary>,
    pub cells: Vec<CellRecord>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl BenchReport {
    pub fn summary(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.name == name)
    }

    /// One row per method: mse, improvement, t, p.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,mse,improvement,t,p,cells,failed\n");
        for m in &self.methods {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                csv_field(&m.name),
                opt(m.mean_mse),
                opt(m.improvement),
                opt(m.t),
                opt(m.p),
                m.cells,
                m.failed
            ));
        }
        out
    }

    pub fn cells_to_csv(&self) -> String {
        let mut out = String::from(
            "method,seed_index,seed,fold,n_test,mse,improvement,selected_k,learner_k,error\n",
        );
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                csv_field(&c.method),
                c.seed_index,
                c.seed,
                c.fold,
                c.n_test,
                opt(c.mse),
                opt(c.improvement),
                c.selected_k.map(|k| k.to_string()).unwrap_or_default(),
                c.learner_k.map(|k| k.to_string()).unwrap_or_default(),
                csv_field(c.error.as_deref().unwrap_or(""))
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = self
            .methods
            .iter()
            .map(|m| m.name.len())
            .max()
            .unwrap_or(0)
            .max(24);
        writeln!(
            f,
            "{:<w$} {:>12} {:>12} {:>10} {:>10}",
            "method", "mse", "improve_%", "t", "p"
        )?;
        let num =
            |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |x| format!("{x:.prec$}"));
        for m in &self.methods {
            writeln!(
                f,
                "{:<w$} {:>12} {:>12} {:>10} {:>10}",
                m.name,
                num(m.mean_mse, 5),
                num(m.improvement, 2),
                num(m.t, 3),
                num(m.p, 4)
            )?;
        }
        Ok(())
    }
}

/// Result of one method in one cell.
#[derive(Debug, Clone)]
struct Outcome {
    mse: std::result::Result<f64, String>,
    selected_k: Option<usize>,
    learner_k: Option<usize>,
}

impl Outcome {
    fn failed(e: &Error) -> Self {
        Outcome {
            mse: Err(e.to_string()),
            selected_k: None,
            learner_k: None,
        }
    }
}

struct Cell<'a> {
    cfg: &'a BenchConfig,
    train: Dataset,
    test: Dataset,
    fold: PreparedFold,
    seed: u64,
}

impl Cell<'_> {
    fn run(&self, entry: &MethodEntry) -> Outcome {
        let mut selected_k = None;
        let mut learner_k = None;
        let mse = (|| -> Result<f64> {
            let mut spec = entry.spec.clone();
            spec.seed = rng::mix(self.seed, spec.seed);
            if entry.select_k {
                let sel = select_k_by_cv(
                    &self.train,
                    &spec,
                    self.cfg.inner_folds,
                    self.cfg.learner,
                    rng::mix(self.seed, SALT_INNER_K),
                    Execution::Sequential,
                )?;
                spec.k = Some(sel.k);
                selected_k = Some(sel.k);
            }
            let enc = spec.fit(&self.train)?;
            let k = match self.cfg.learner {
                LearnerK::InnerCv => {
                    let grid = LearnerK::grid(self.train.n());
                    let scores = cv_grid(
                        &self.train,
                        std::slice::from_ref(&spec),
                        &grid,
                        self.cfg.inner_folds,
                        rng::mix(self.seed, SALT_INNER_LEARNER),
                        Execution::Sequential,
                    )?;
                    let best = argmin_first(&scores[0]).ok_or_else(|| {
                        Error::Fit("no neighbour count could be scored".to_string())
                    })?;
                    grid[best]
                }
                other => other.resolve(self.train.n()),
            };
            learner_k = Some(k);
            let pred = predict_with_encoder(
                &self.fold,
                &enc,
                &self.train,
                &self.test,
                k,
                Execution::Sequential,
            )?;
            mse(&pred, self.test.y().expect("checked"))
        })();
        Outcome {
            mse: mse.map_err(|e| e.to_string()),
            selected_k,
            learner_k,
        }
    }
}

/// Baseline first, then every configured method.
fn run_cell(
    cfg: &BenchConfig,
    d: &Dataset,
    plan: &FoldPlan,
    seed: u64,
    fold: usize,
) -> Vec<Outcome> {
    let entries = cfg.methods.len() + 1;
    let setup = (|| -> Result<Cell<'_>> {
        let test_rows = plan.test_rows(fold);
        if test_rows.is_empty() {
            return Err(Error::Empty(format!("test fold {fold} is empty")));
        }
        let train = d.split_rows(&plan.train_rows(fold))?;
        let test = d.split_rows(&test_rows)?;
        let fold_data = PreparedFold::new(
            train.x(),
            train.y().expect("checked"),
            test.x(),
            Execution::Sequential,
        )?;
        Ok(Cell {
            cfg,
            train,
            test,
            fold: fold_data,
            seed: rng::mix(seed, fold as u64 + 1),
        })
    })();
    match setup {
        Err(e) => vec![Outcome::failed(&e); entries],
        Ok(cell) => {
            let mut out = Vec::with_capacity(entries);
            out.push(cell.run(&MethodEntry::new(Method::Onehot)));
            for entry in &cfg.methods {
                out.push(cell.run(entry));
            }
            out
        }
    }
}

fn load_source(cfg: &BenchConfig, seeds: &[u64], exec: Execution) -> Result<Vec<Dataset>> {
    let data = match &cfg.source {
        DataSource::Csv { path, schema } => vec![Dataset::load_csv(path, schema)?],
        DataSource::Simulate(sim) => exec
            .map(seeds, |&s| {
                simulate(&sim.clone().with_seed(s)).map(|o| o.dataset)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?,
    };
    if data.iter().any(|d| d.y().is_none()) {
        return Err(Error::Config(
            "benchmarking needs a response column".to_string(),
        ));
    }
    Ok(data)
}

pub fn run_benchmark(cfg: &BenchConfig, exec: Execution) -> Result<BenchReport> {
    cfg.validate()?;
    let seeds: Vec<u64> = (0..cfg.seeds)
        .map(|s| rng::mix(cfg.seed, s as u64))
        .collect();
    let data = load_source(cfg, &seeds, exec)?;
    let dataset = |s: usize| &data[s.min(data.len() - 1)];
    let plans = seeds
        .iter()
        .enumerate()
        .map(|(s, &seed)| stratified_kfold(dataset(s).g(), cfg.folds, &mut rng::stream(seed, 0)))
        .collect::<Result<Vec<_>>>()?;

    let cells: Vec<(usize, usize)> = (0..cfg.seeds)
        .flat_map(|s| (0..cfg.folds).map(move |f| (s, f)))
        .collect();
    let outcomes = exec.map(&cells, |&(s, f)| {
        let out = run_cell(cfg, dataset(s), &plans[s], seeds[s], f);
        log::debug!("seed {s} fold {f} done");
        out
    });
    log::info!("benchmark finished {} cells", cells.len());

    let mut names = vec![BASELINE.to_string()];
    let mut kinds = vec![Method::Onehot];
    for m in &cfg.methods {
        if m.name != BASELINE {
            names.push(m.name.clone());
            kinds.push(m.spec.method);
        }
    }
    // column of each reported method inside an outcome vector
    let column = |name: &str| -> usize {
        if name == BASELINE {
            return 0;
        }
        1 + cfg
            .methods
            .iter()
            .position(|m| m.name == name)
            .expect("listed")
    };

    let mut records = Vec::new();
    let mut summaries = Vec::new();
    for (name, kind) in names.iter().zip(kinds) {
        let col = column(name);
        let (mut ok_mse, mut impr, mut base_pair, mut meth_pair) = (vec![], vec![], vec![], vec![]);
        let mut failed = 0;
        for (&(s, f), out) in cells.iter().zip(&outcomes) {
            let o = &out[col];
            let base = out[0].mse.as_ref().ok().copied();
            let improvement = match (&o.mse, base) {
                (Ok(m), Some(b)) => percent_improvement(*m, b).ok(),
                _ => None,
            };
            match &o.mse {
                Ok(m) => {
                    ok_mse.push(*m);
                    if let Some(b) = base {
                        base_pair.push(b);
                        meth_pair.push(*m);
                    }
                }
                Err(_) => failed += 1,
            }
            if let Some(v) = improvement {
                impr.push(v);
            }
            records.push(CellRecord {
                method: name.clone(),
                seed_index: s,
                seed: seeds[s],
                fold: f,
                n_test: plans[s].test_rows(f).len(),
                mse: o.mse.as_ref().ok().copied(),
                improvement,
                selected_k: o.selected_k,
                learner_k: o.learner_k,
                error: o.mse.as_ref().err().cloned(),
            });
        }
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let test = paired_t_test(&base_pair, &meth_pair).ok();
        summaries.push(MethodSummary {
            name: name.clone(),
            method: kind,
            mean_mse: mean(&ok_mse),
            improvement: mean(&impr),
            t: test.map(|t| t.t),
            p: test.map(|t| t.p),
            cells: cells.len(),
            failed,
        });
    }
    Ok(BenchReport {
        config: cfg.clone(),
        baseline: BASELINE.to_string(),
        methods: summaries,
        cells: records,
    })
}
