//! Run configuration resolved from built-in defaults, an optional `key=value`
//! file and command-line flags, in increasing order of precedence.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use anyhow::Context;
use clap::Args;
use xvhash::dataset::parse_key_values;
use xvhash::eval::{Protocol, RelevanceJudge, Task, DEFAULT_R};
use xvhash::graph::SigmaPolicy;
use xvhash::linalg::RidgePolicy;
use xvhash::pipeline::TrainConfig;
use xvhash::solver::{QStep, SolverConfig};

use crate::UsageError;

/// Keys accepted in a config file, in echo order.
pub const KEYS: [&str; 18] = [
    "code-length",
    "beta",
    "gamma",
    "lambda",
    "u-large",
    "ridge",
    "q-step",
    "max-iter",
    "tol",
    "seed",
    "anchors",
    "k",
    "sigma",
    "itq-iters",
    "query-fraction",
    "R",
    "judge",
    "task",
];

/// Flags shared by `train`, `eval` and `sweep`. Each mirrors a config key.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// key=value file with defaults for the flags below
    #[arg(long, value_name = "FILE")]
    pub config: Option<std::path::PathBuf>,
    /// Bits per code
    #[arg(long)]
    pub code_length: Option<usize>,
    /// Comma-separated values form the `sweep` grid
    #[arg(long, value_delimiter = ',')]
    pub beta: Vec<f64>,
    /// Comma-separated values form the `sweep` grid
    #[arg(long, value_delimiter = ',')]
    pub gamma: Vec<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Label-fidelity weight on labeled samples
    #[arg(long)]
    pub u_large: Option<f64>,
    /// Ridge added to Gram matrices
    #[arg(long)]
    pub ridge: Option<f64>,
    /// joint | gauss-seidel
    #[arg(long)]
    pub q_step: Option<String>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Relative objective change that counts as converged
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Anchor count, or `auto`
    #[arg(long)]
    pub anchors: Option<String>,
    /// Nearest anchors per sample, or `auto`
    #[arg(long)]
    pub k: Option<String>,
    /// `auto` or `SIGMA1,SIGMA2`
    #[arg(long)]
    pub sigma: Option<String>,
    #[arg(long)]
    pub itq_iters: Option<usize>,
    /// Share of objects held out as queries
    #[arg(long)]
    pub query_fraction: Option<f64>,
    /// Ranking cutoff
    #[arg(long = "R", id = "R")]
    pub r_cut: Option<usize>,
    /// single | multi (default: from the dataset's label mode)
    #[arg(long)]
    pub judge: Option<String>,
    /// i2t | t2i | both
    #[arg(long)]
    pub task: Option<String>,
}

impl RunArgs {
    fn flag_values(&self) -> Vec<(&'static str, Option<String>)> {
        fn s<T: ToString>(v: &Option<T>) -> Option<String> {
            v.as_ref().map(ToString::to_string)
        }
        vec![
            ("code-length", s(&self.code_length)),
            ("beta", self.beta.first().map(ToString::to_string)),
            ("gamma", self.gamma.first().map(ToString::to_string)),
            ("lambda", s(&self.lambda)),
            ("u-large", s(&self.u_large)),
            ("ridge", s(&self.ridge)),
            ("q-step", s(&self.q_step)),
            ("max-iter", s(&self.max_iter)),
            ("tol", s(&self.tol)),
            ("seed", s(&self.seed)),
            ("anchors", s(&self.anchors)),
            ("k", s(&self.k)),
            ("sigma", s(&self.sigma)),
            ("itq-iters", s(&self.itq_iters)),
            ("query-fraction", s(&self.query_fraction)),
            ("R", s(&self.r_cut)),
            ("judge", s(&self.judge)),
            ("task", s(&self.task)),
        ]
    }

    /// Merges the config file (if any) under the flags.
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        for (name, v) in [("beta", &self.beta), ("gamma", &self.gamma)] {
            if v.len() > 1 {
                return Err(UsageError(format!("--{name} takes one value here; lists are only for `sweep`")).into());
            }
        }
        let mut kv = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                let kv = parse_key_values(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
                if let Some(k) = kv.keys().find(|k| !KEYS.contains(&k.as_str())) {
                    return Err(UsageError(format!("{}: unknown key '{k}'", path.display())).into());
                }
                kv
            }
            None => BTreeMap::new(),
        };
        for (k, v) in self.flag_values() {
            if let Some(v) = v {
                kv.insert(k.to_string(), v);
            }
        }
        RunConfig::from_map(&kv)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskSel {
    One(Task),
    Both,
}

impl TaskSel {
    pub fn tasks(&self) -> Vec<Task> {
        match self {
            TaskSel::One(t) => vec![*t],
            TaskSel::Both => Task::BOTH.to_vec(),
        }
    }

    fn as_str(&self) -> &'static str {
        match self {
            TaskSel::One(t) => t.as_str(),
            TaskSel::Both => "both",
        }
    }
}

impl FromStr for TaskSel {
    type Err = xvhash::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "both" {
            Ok(TaskSel::Both)
        } else {
            s.parse().map(TaskSel::One)
        }
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub protocol: Protocol,
    pub task: TaskSel,
}

fn get<T: FromStr>(kv: &BTreeMap<String, String>, key: &str, default: T) -> anyhow::Result<T>
where
    T::Err: std::fmt::Display,
{
    match kv.get(key) {
        Some(v) => v
            .parse()
            .map_err(|e| UsageError(format!("invalid value '{v}' for {key}: {e}")).into()),
        None => Ok(default),
    }
}

fn auto_or<T: FromStr>(kv: &BTreeMap<String, String>, key: &str) -> anyhow::Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match kv.get(key).map(String::as_str) {
        None | Some("auto") => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|e| UsageError(format!("invalid value '{v}' for {key}: {e}")).into()),
    }
}

fn parse_sigma(v: &str) -> Result<SigmaPolicy, UsageError> {
    if v == "auto" {
        return Ok(SigmaPolicy::Auto);
    }
    let bad = || UsageError(format!("sigma must be 'auto' or 'S1,S2', got '{v}'"));
    let (a, b) = v.split_once(',').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(a > 0.0 && b > 0.0) {
        return Err(bad());
    }
    Ok(SigmaPolicy::Fixed(a, b))
}

impl RunConfig {
    pub fn from_map(kv: &BTreeMap<String, String>) -> anyhow::Result<Self> {
        let d = SolverConfig::default();
        let ridge = get(kv, "ridge", d.ridge.epsilon)?;
        let solver = SolverConfig {
            r: get(kv, "code-length", d.r)?,
            beta: get(kv, "beta", d.beta)?,
            gamma: get(kv, "gamma", d.gamma)?,
            lambda: get(kv, "lambda", d.lambda)?,
            u_large: get(kv, "u-large", d.u_large)?,
            ridge: RidgePolicy::new(ridge).map_err(|e| UsageError(e.to_string()))?,
            q_step: get(kv, "q-step", QStep::default())?,
            max_iter: get(kv, "max-iter", d.max_iter)?,
            rel_tol: get(kv, "tol", d.rel_tol)?,
            seed: get(kv, "seed", d.seed)?,
        };
        solver.validate().map_err(|e| UsageError(e.to_string()))?;
        let t = TrainConfig::default();
        let train = TrainConfig {
            solver,
            m0: auto_or(kv, "anchors")?,
            k: auto_or(kv, "k")?,
            sigma: match kv.get("sigma") {
                Some(v) => parse_sigma(v)?,
                None => t.sigma,
            },
            itq_iters: get(kv, "itq-iters", t.itq_iters)?,
        };
        let query_fraction = get(kv, "query-fraction", 0.2)?;
        if !(query_fraction > 0.0 && query_fraction < 1.0) {
            return Err(UsageError(format!("query-fraction must lie in (0, 1), got {query_fraction}")).into());
        }
        let r_cut = get(kv, "R", DEFAULT_R)?;
        if r_cut == 0 {
            return Err(UsageError("R must be >= 1".into()).into());
        }
        let judge = match kv.get("judge").map(String::as_str) {
            None | Some("auto") => None,
            Some(v) => Some(v.parse::<RelevanceJudge>().map_err(|e| UsageError(e.to_string()))?),
        };
        Ok(RunConfig {
            protocol: Protocol {
                train,
                query_fraction,
                r_cut,
                judge,
            },
            task: get(kv, "task", TaskSel::Both)?,
        })
    }

    /// Effective configuration as `key=value` lines, one per key.
    pub fn echo(&self) -> String {
        let p = &self.protocol;
        let s = &p.train.solver;
        let opt = |v: Option<usize>| v.map_or("auto".to_string(), |v| v.to_string());
        let sigma = match p.train.sigma {
            SigmaPolicy::Auto => "auto".to_string(),
            SigmaPolicy::Fixed(a, b) => format!("{a},{b}"),
        };
        let values = [
            s.r.to_string(),
            s.beta.to_string(),
            s.gamma.to_string(),
            s.lambda.to_string(),
            s.u_large.to_string(),
            s.ridge.epsilon.to_string(),
            s.q_step.as_str().to_string(),
            s.max_iter.to_string(),
            s.rel_tol.to_string(),
            s.seed.to_string(),
            opt(p.train.m0),
            opt(p.train.k),
            sigma,
            p.train.itq_iters.to_string(),
            p.query_fraction.to_string(),
            p.r_cut.to_string(),
            p.judge.map_or("auto".to_string(), |j| j.as_str().to_string()),
            self.task.as_str().to_string(),
        ];
        let mut out = String::new();
        for (k, v) in KEYS.iter().zip(values) {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn write_echo(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join("config.txt");
        std::fs::write(&path, self.echo()).with_context(|| format!("writing {}", path.display()))
    }
}
