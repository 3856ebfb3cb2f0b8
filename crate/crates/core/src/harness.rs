//! Experiment plans, sweeps, CSV output, summaries and SVG charts.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::channel::{gen_channels, validate_geometry, ScenarioSpec};
use crate::error::{Error, Result};
use crate::fdlink::{evaluate, Metrics};
use crate::neural::{train_pipeline, ModelBundle, PipelineSizes, TrainHyper};
use crate::numerics::{mix_seed, Rng};
use crate::optim::{alternating_optimize, enumerate_oracle, oracle_size_for, random_search, AltOptions, Objective};
use crate::starris::{StarConfig, StarMode};

/// Header of every results CSV.
pub const CSV_HEADER: &str =
    "seed,method,mode,M,L,d_sr,objective,feasible,rate_dl,rate_ul,resid_si_db,sic_gain_db,iters,wall_ms,error";

const TRAIN_TAG: u64 = 0x0074_7261_696e;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepVar {
    Elements,
    Distance,
    Mode,
    PhaseLevels,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::Elements => "elements",
            SweepVar::Distance => "distance",
            SweepVar::Mode => "mode",
            SweepVar::PhaseLevels => "phase_levels",
        }
    }

    /// M ∈ {8,16,32,64}, d_sr ∈ {0.1,0.5}, both modes, L ∈ {0,4,8}.
    pub fn default_values(self) -> Vec<SweepValue> {
        match self {
            SweepVar::Elements => [8, 16, 32, 64].map(SweepValue::Count).to_vec(),
            SweepVar::Distance => [0.1, 0.5].map(SweepValue::Distance).to_vec(),
            SweepVar::Mode => [StarMode::Es, StarMode::Ms].map(SweepValue::Mode).to_vec(),
            SweepVar::PhaseLevels => [0, 4, 8].map(SweepValue::Count).to_vec(),
        }
    }

    pub fn parse_value(self, s: &str) -> std::result::Result<SweepValue, String> {
        let s = s.trim();
        match self {
            SweepVar::Elements | SweepVar::PhaseLevels => s
                .parse()
                .map(SweepValue::Count)
                .map_err(|_| format!("'{s}' is not a non-negative integer")),
            SweepVar::Distance => s
                .parse()
                .map(SweepValue::Distance)
                .map_err(|_| format!("'{s}' is not a number")),
            SweepVar::Mode => s.parse().map(SweepValue::Mode).map_err(|e: Error| e.to_string()),
        }
    }

    /// The base scenario with this variable set to `value`.
    pub fn apply(self, base: &ScenarioSpec, value: SweepValue) -> ScenarioSpec {
        let mut s = base.clone();
        match (self, value) {
            (SweepVar::Elements, SweepValue::Count(m)) => s.n_elems = m,
            (SweepVar::PhaseLevels, SweepValue::Count(l)) => s.phase_levels = l,
            (SweepVar::Distance, SweepValue::Distance(d)) => s.d_sr = d,
            (SweepVar::Mode, SweepValue::Mode(m)) => s.mode = m,
            _ => panic!("sweep value {value} does not fit variable {}", self.name()),
        }
        s
    }
}

impl FromStr for SweepVar {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "elements" | "M" => Ok(SweepVar::Elements),
            "distance" | "d_sr" => Ok(SweepVar::Distance),
            "mode" => Ok(SweepVar::Mode),
            "phase_levels" | "L" => Ok(SweepVar::PhaseLevels),
            other => Err(format!(
                "unknown sweep variable '{other}' (expected elements, distance, mode or phase_levels)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SweepValue {
    Count(usize),
    Distance(f64),
    Mode(StarMode),
}

impl fmt::Display for SweepValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepValue::Count(n) => write!(f, "{n}"),
            SweepValue::Distance(d) => write!(f, "{d:?}"),
            SweepValue::Mode(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Oracle,
    Random,
    Alternating,
    Neural,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Oracle => "oracle",
            Method::Random => "random",
            Method::Alternating => "alternating",
            Method::Neural => "neural",
        }
    }

    /// Seed-derivation tag.
    pub fn tag(self) -> u64 {
        match self {
            Method::Oracle => 1,
            Method::Random => 2,
            Method::Alternating => 3,
            Method::Neural => 4,
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "oracle" => Ok(Method::Oracle),
            "random" => Ok(Method::Random),
            "alternating" => Ok(Method::Alternating),
            "neural" => Ok(Method::Neural),
            other => Err(format!(
                "unknown method '{other}' (expected oracle, random, alternating or neural)"
            )),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Training settings for the neural method; `model` skips training.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralPlan {
    pub model: Option<PathBuf>,
    pub samples: usize,
    pub environments: usize,
    pub val_environments: usize,
    pub hidden: Vec<usize>,
    pub critic_epochs: usize,
    pub generator_epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub lambda: f64,
    pub margin: f64,
    pub seed: u64,
}

impl Default for NeuralPlan {
    fn default() -> Self {
        let sizes = PipelineSizes::default();
        NeuralPlan {
            model: None,
            samples: sizes.samples,
            environments: sizes.environments,
            val_environments: sizes.val_environments,
            hidden: sizes.generator.hidden.clone(),
            critic_epochs: sizes.critic.epochs,
            generator_epochs: sizes.generator.epochs,
            lr: sizes.generator.lr,
            batch: sizes.generator.batch,
            lambda: sizes.generator.lambda,
            margin: sizes.generator.margin,
            seed: 1,
        }
    }
}

impl NeuralPlan {
    pub fn sizes(&self) -> PipelineSizes {
        let base = TrainHyper {
            hidden: self.hidden.clone(),
            lr: self.lr,
            batch: self.batch,
            lambda: self.lambda,
            margin: self.margin,
            ..TrainHyper::default()
        };
        PipelineSizes {
            samples: self.samples,
            environments: self.environments,
            val_environments: self.val_environments,
            critic: TrainHyper {
                epochs: self.critic_epochs,
                ..base.clone()
            },
            generator: TrainHyper {
                epochs: self.generator_epochs,
                ..base
            },
        }
    }
}

/// Settings of the `oracle-check` comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleCheckPlan {
    pub instances: usize,
    pub seed: u64,
    /// Relative score gap tolerated for the alternating optimizer.
    pub alt_tol: f64,
    pub neural_tol: f64,
    /// Instances that must be within tolerance.
    pub alt_min: usize,
    pub neural_min: usize,
}

impl Default for OracleCheckPlan {
    fn default() -> Self {
        OracleCheckPlan {
            instances: 100,
            seed: 4242,
            alt_tol: 0.05,
            neural_tol: 0.15,
            alt_min: 90,
            neural_min: 70,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan {
    pub name: String,
    pub base: ScenarioSpec,
    pub sweep: SweepVar,
    pub values: Vec<SweepValue>,
    pub trials: usize,
    pub methods: Vec<Method>,
    pub objective: Objective,
    pub output: PathBuf,
    /// Record wall-clock times; off by default so CSVs are reproducible.
    pub timing: bool,
    pub random_budget: usize,
    pub alt: AltOptions,
    pub neural: NeuralPlan,
    pub oracle_check: OracleCheckPlan,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            name: String::new(),
            base: ScenarioSpec::default(),
            sweep: SweepVar::Elements,
            values: SweepVar::Elements.default_values(),
            trials: 20,
            methods: vec![Method::Alternating],
            objective: Objective::MinSiSubjectToRate { r_min: 2.0 },
            output: PathBuf::from("out"),
            timing: false,
            random_budget: 200,
            alt: AltOptions::default(),
            neural: NeuralPlan::default(),
            oracle_check: OracleCheckPlan::default(),
        }
    }
}

/// One problem found in a plan; `key` is `section.key`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanIssue {
    pub key: String,
    pub message: String,
}

impl ExperimentPlan {
    /// Scenario of sweep value `idx`.
    pub fn scenario(&self, idx: usize) -> ScenarioSpec {
        self.sweep.apply(&self.base, self.values[idx])
    }

    pub fn validate(&self) -> std::result::Result<(), Vec<PlanIssue>> {
        let mut out = Vec::new();
        let mut push = |key: &str, message: String| {
            out.push(PlanIssue {
                key: key.to_string(),
                message,
            })
        };
        if self.name.trim().is_empty() {
            push("plan.name", "name is required".into());
        }
        if self.trials == 0 {
            push("plan.trials", "trials must be at least 1".into());
        }
        if self.methods.is_empty() {
            push("plan.methods", "at least one method is required".into());
        }
        if self.values.is_empty() {
            push("plan.values", "sweep values must not be empty".into());
        }
        if let Err(e) = self.objective.validate() {
            push("plan.objective", e.to_string());
        }
        if self.random_budget == 0 {
            push("random.budget", "budget must be at least 1".into());
        }
        let a = &self.alt;
        for (key, ok) in [
            ("alternating.max_outer", a.max_outer >= 1),
            ("alternating.sweeps", a.sweeps >= 1),
            ("alternating.grid", a.grid >= 2),
            ("alternating.starts", a.starts >= 1),
            ("alternating.tol", a.tol >= 0.0 && a.tol.is_finite()),
        ] {
            if !ok {
                push(key, format!("{} is out of range", &key["alternating.".len()..]));
            }
        }
        let n = &self.neural;
        for (key, ok) in [
            ("neural.samples", n.samples >= 1),
            ("neural.environments", n.environments >= 1),
            ("neural.critic_epochs", n.critic_epochs >= 1),
            ("neural.generator_epochs", n.generator_epochs >= 1),
            ("neural.batch", n.batch >= 1),
            ("neural.lr", n.lr > 0.0 && n.lr.is_finite()),
            ("neural.lambda", n.lambda >= 0.0 && n.lambda.is_finite()),
            ("neural.margin", n.margin.is_finite()),
            ("neural.hidden", !n.hidden.is_empty() && n.hidden.iter().all(|&h| h > 0)),
        ] {
            if !ok {
                push(key, format!("{} is out of range", &key["neural.".len()..]));
            }
        }
        let o = &self.oracle_check;
        for (key, ok) in [
            ("oracle_check.instances", o.instances >= 1),
            ("oracle_check.alt_tol", o.alt_tol >= 0.0),
            ("oracle_check.neural_tol", o.neural_tol >= 0.0),
            ("oracle_check.alt_min", o.alt_min <= o.instances),
            ("oracle_check.neural_min", o.neural_min <= o.instances),
        ] {
            if !ok {
                push(key, format!("{} is out of range", &key["oracle_check.".len()..]));
            }
        }

        let base_errs = validate_geometry(&self.base).err().unwrap_or_default();
        for msg in &base_errs {
            push(&format!("scenario.{}", scenario_key_of(msg)), msg.clone());
        }
        if base_errs.is_empty() {
            for &v in &self.values {
                let fits = matches!(
                    (self.sweep, v),
                    (SweepVar::Elements | SweepVar::PhaseLevels, SweepValue::Count(_))
                        | (SweepVar::Distance, SweepValue::Distance(_))
                        | (SweepVar::Mode, SweepValue::Mode(_))
                );
                if !fits {
                    push(
                        "plan.values",
                        format!("value {v} does not fit sweep {}", self.sweep.name()),
                    );
                    continue;
                }
                let spec = self.sweep.apply(&self.base, v);
                if let Err(errs) = validate_geometry(&spec) {
                    for e in errs {
                        push("plan.values", format!("value {v}: {e}"));
                    }
                } else if self.methods.contains(&Method::Oracle) {
                    if let Err(e) = oracle_size_for(&spec) {
                        push("plan.methods", format!("oracle not allowed at value {v}: {e}"));
                    }
                }
            }
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }
}

/// Scenario key a geometry message refers to, from its first word.
fn scenario_key_of(msg: &str) -> &'static str {
    let first = msg.split_whitespace().next().unwrap_or("");
    SCENARIO_KEYS
        .iter()
        .copied()
        .find(|k| k.starts_with(first))
        .unwrap_or("")
}

const SCENARIO_KEYS: [&str; 19] = [
    "n_tx",
    "n_rx",
    "n_elems",
    "d_sr",
    "d_fb",
    "d_af",
    "p_fd",
    "p_alice",
    "noise_fd",
    "noise_bob",
    "rician_k",
    "pl0_db",
    "alpha_ris",
    "alpha_nlos",
    "si_leak_db",
    "phase_levels",
    "mode",
    "direct_fb_blocked",
    "residual_floor",
];

/// A config problem at a 1-based line (0 when no single line applies).
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            f.write_str(&self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

struct Entry<'a> {
    section: &'a str,
    key: &'a str,
    value: &'a str,
    line: usize,
}

struct ConfigReader {
    errs: Vec<ConfigError>,
}

impl ConfigReader {
    fn err(&mut self, line: usize, message: impl Into<String>) {
        self.errs.push(ConfigError {
            line,
            message: message.into(),
        });
    }

    fn parse<T: FromStr>(&mut self, e: &Entry<'_>, what: &str) -> Option<T> {
        match e.value.parse() {
            Ok(v) => Some(v),
            Err(_) => {
                self.err(e.line, format!("{} = '{}' is not {what}", e.key, e.value));
                None
            }
        }
    }

    fn set<T: FromStr>(&mut self, e: &Entry<'_>, what: &str, slot: &mut T) {
        if let Some(v) = self.parse(e, what) {
            *slot = v;
        }
    }

    fn real(&mut self, e: &Entry<'_>, slot: &mut f64) {
        self.set(e, "a number", slot)
    }

    fn count(&mut self, e: &Entry<'_>, slot: &mut usize) {
        self.set(e, "a non-negative integer", slot)
    }
}

/// Parses the line-oriented plan format:
///
/// ```text
/// # comment
/// name = fig7
/// sweep = elements
/// values = 8, 16, 32, 64
///
/// [scenario]
/// phase_levels = 4
/// ```
///
/// Keys before the first header belong to `[plan]`. Sections: `plan`,
/// `scenario`, `alternating`, `random`, `neural`, `oracle_check`. Missing
/// keys keep [`ExperimentPlan::default`] values; `values` defaults to the
/// sweep variable's default set. Unknown keys and sections are errors.
pub fn parse_config(text: &str) -> std::result::Result<ExperimentPlan, Vec<ConfigError>> {
    let mut rd = ConfigReader { errs: Vec::new() };
    let mut entries = Vec::new();
    let mut section = "plan";
    let mut seen: HashMap<(&str, &str), usize> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            match name.strip_suffix(']').map(str::trim) {
                Some(s @ ("plan" | "scenario" | "alternating" | "random" | "neural" | "oracle_check")) => section = s,
                Some(s) => {
                    rd.err(line, format!("unknown section [{s}]"));
                    section = "";
                }
                None => rd.err(line, format!("malformed section header '{body}'")),
            }
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            rd.err(line, format!("expected 'key = value', got '{body}'"));
            continue;
        };
        let (key, value) = (k.trim(), v.trim());
        if section.is_empty() {
            continue;
        }
        if let Some(prev) = seen.insert((section, key), line) {
            rd.err(line, format!("duplicate key '{key}' (first set on line {prev})"));
            continue;
        }
        entries.push(Entry {
            section,
            key,
            value,
            line,
        });
    }

    let mut plan = ExperimentPlan::default();
    let mut values_entry = None;
    let mut lines: HashMap<String, usize> = HashMap::new();
    let mut has_name = false;
    for e in &entries {
        lines.insert(format!("{}.{}", e.section, canonical_key(e.key)), e.line);
        let s = &mut plan.base;
        match (e.section, e.key) {
            ("plan", "name") => {
                plan.name = e.value.to_string();
                has_name = true;
            }
            ("plan", "sweep") => match e.value.parse() {
                Ok(v) => plan.sweep = v,
                Err(msg) => rd.err(e.line, msg),
            },
            ("plan", "values") => values_entry = Some(e),
            ("plan", "trials") => rd.count(e, &mut plan.trials),
            ("plan", "methods") => {
                let mut methods = Vec::new();
                for tok in list_items(e.value) {
                    match tok.parse::<Method>() {
                        Ok(m) if methods.contains(&m) => rd.err(e.line, format!("method '{m}' listed twice")),
                        Ok(m) => methods.push(m),
                        Err(msg) => rd.err(e.line, msg),
                    }
                }
                plan.methods = methods;
            }
            ("plan", "objective") => match e.value.parse() {
                Ok(o) => plan.objective = o,
                Err(err) => rd.err(e.line, Error::to_string(&err)),
            },
            ("plan", "output") => plan.output = PathBuf::from(e.value),
            ("plan", "timing") => rd.set(e, "true or false", &mut plan.timing),

            ("scenario", "n_tx") => rd.count(e, &mut s.n_tx),
            ("scenario", "n_rx") => rd.count(e, &mut s.n_rx),
            ("scenario", "n_elems") => rd.count(e, &mut s.n_elems),
            ("scenario", "d_sr") => rd.real(e, &mut s.d_sr),
            ("scenario", "d_fb") => rd.real(e, &mut s.d_fb),
            ("scenario", "d_af") => rd.real(e, &mut s.d_af),
            ("scenario", "p_fd") => rd.real(e, &mut s.p_fd),
            ("scenario", "p_alice") => rd.real(e, &mut s.p_alice),
            ("scenario", "noise_fd") => rd.real(e, &mut s.noise_fd),
            ("scenario", "noise_bob") => rd.real(e, &mut s.noise_bob),
            ("scenario", "noise_fd_dbm") => {
                if let Some(x) = rd.parse::<f64>(e, "a number") {
                    s.noise_fd = crate::numerics::dbm_to_watts(x);
                }
            }
            ("scenario", "noise_bob_dbm") => {
                if let Some(x) = rd.parse::<f64>(e, "a number") {
                    s.noise_bob = crate::numerics::dbm_to_watts(x);
                }
            }
            ("scenario", "rician_k") => rd.real(e, &mut s.rician_k),
            ("scenario", "rician_k_db") => {
                if let Some(x) = rd.parse::<f64>(e, "a number") {
                    s.rician_k = crate::numerics::db_to_lin(x);
                }
            }
            ("scenario", "pl0_db") => rd.real(e, &mut s.pl0_db),
            ("scenario", "alpha_ris") => rd.real(e, &mut s.alpha_ris),
            ("scenario", "alpha_nlos") => rd.real(e, &mut s.alpha_nlos),
            ("scenario", "si_leak_db") => rd.real(e, &mut s.si_leak_db),
            ("scenario", "phase_levels") => rd.count(e, &mut s.phase_levels),
            ("scenario", "mode") => match e.value.parse() {
                Ok(m) => s.mode = m,
                Err(err) => rd.err(e.line, Error::to_string(&err)),
            },
            ("scenario", "direct_fb_blocked") => rd.set(e, "true or false", &mut s.direct_fb_blocked),
            ("scenario", "residual_floor") => rd.real(e, &mut s.residual_floor),

            ("alternating", "max_outer") => rd.count(e, &mut plan.alt.max_outer),
            ("alternating", "tol") => rd.real(e, &mut plan.alt.tol),
            ("alternating", "sweeps") => rd.count(e, &mut plan.alt.sweeps),
            ("alternating", "grid") => rd.count(e, &mut plan.alt.grid),
            ("alternating", "starts") => rd.count(e, &mut plan.alt.starts),

            ("random", "budget") => rd.count(e, &mut plan.random_budget),

            ("neural", "model") => plan.neural.model = Some(PathBuf::from(e.value)),
            ("neural", "samples") => rd.count(e, &mut plan.neural.samples),
            ("neural", "environments") => rd.count(e, &mut plan.neural.environments),
            ("neural", "val_environments") => rd.count(e, &mut plan.neural.val_environments),
            ("neural", "hidden") => {
                let mut hidden = Vec::new();
                for tok in list_items(e.value) {
                    match tok.parse() {
                        Ok(h) => hidden.push(h),
                        Err(_) => rd.err(e.line, format!("hidden width '{tok}' is not an integer")),
                    }
                }
                plan.neural.hidden = hidden;
            }
            ("neural", "critic_epochs") => rd.count(e, &mut plan.neural.critic_epochs),
            ("neural", "generator_epochs") => rd.count(e, &mut plan.neural.generator_epochs),
            ("neural", "lr") => rd.real(e, &mut plan.neural.lr),
            ("neural", "batch") => rd.count(e, &mut plan.neural.batch),
            ("neural", "lambda") => rd.real(e, &mut plan.neural.lambda),
            ("neural", "margin") => rd.real(e, &mut plan.neural.margin),
            ("neural", "seed") => rd.set(e, "a non-negative integer", &mut plan.neural.seed),

            ("oracle_check", "instances") => rd.count(e, &mut plan.oracle_check.instances),
            ("oracle_check", "seed") => rd.set(e, "a non-negative integer", &mut plan.oracle_check.seed),
            ("oracle_check", "alt_tol") => rd.real(e, &mut plan.oracle_check.alt_tol),
            ("oracle_check", "neural_tol") => rd.real(e, &mut plan.oracle_check.neural_tol),
            ("oracle_check", "alt_min") => rd.count(e, &mut plan.oracle_check.alt_min),
            ("oracle_check", "neural_min") => rd.count(e, &mut plan.oracle_check.neural_min),

            (sec, key) => rd.err(e.line, format!("unknown key '{key}' in [{sec}]")),
        }
    }
    if !has_name {
        rd.err(0, "name is required");
    }
    plan.values = match values_entry {
        None => plan.sweep.default_values(),
        Some(e) => {
            let mut vals = Vec::new();
            for tok in list_items(e.value) {
                match plan.sweep.parse_value(tok) {
                    Ok(v) => vals.push(v),
                    Err(msg) => rd.err(e.line, format!("sweep value {msg}")),
                }
            }
            vals
        }
    };
    // Fields that failed to parse kept valid defaults, so semantic checks
    // still run and every problem is reported in one pass.
    if let Err(issues) = plan.validate() {
        for issue in issues {
            let line = lines.get(&issue.key).copied().unwrap_or(0);
            if !(issue.key == "plan.name" && !has_name) {
                rd.err(line, issue.message);
            }
        }
    }
    if rd.errs.is_empty() {
        Ok(plan)
    } else {
        rd.errs.sort_by_key(|e| e.line);
        Err(rd.errs)
    }
}

fn canonical_key(key: &str) -> &str {
    match key {
        "noise_fd_dbm" => "noise_fd",
        "noise_bob_dbm" => "noise_bob",
        "rician_k_db" => "rician_k",
        k => k,
    }
}

fn list_items(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|t| !t.is_empty())
}

/// Writes every plan field in the format read by [`parse_config`]; powers,
/// noise and the Rician factor are emitted in linear units so the text
/// reparses to an equal plan.
pub fn emit_config(plan: &ExperimentPlan) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let s = &plan.base;
    let join = |items: Vec<String>| items.join(", ");
    let _ = writeln!(out, "name = {}", plan.name);
    let _ = writeln!(out, "sweep = {}", plan.sweep.name());
    let _ = writeln!(
        out,
        "values = {}",
        join(plan.values.iter().map(|v| v.to_string()).collect())
    );
    let _ = writeln!(out, "trials = {}", plan.trials);
    let _ = writeln!(
        out,
        "methods = {}",
        join(plan.methods.iter().map(|m| m.to_string()).collect())
    );
    let _ = writeln!(out, "objective = {}", plan.objective);
    let _ = writeln!(out, "output = {}", plan.output.display());
    let _ = writeln!(out, "timing = {}", plan.timing);
    let _ = writeln!(out, "\n[scenario]");
    let _ = writeln!(out, "n_tx = {}\nn_rx = {}\nn_elems = {}", s.n_tx, s.n_rx, s.n_elems);
    for (k, v) in [
        ("d_sr", s.d_sr),
        ("d_fb", s.d_fb),
        ("d_af", s.d_af),
        ("p_fd", s.p_fd),
        ("p_alice", s.p_alice),
        ("noise_fd", s.noise_fd),
        ("noise_bob", s.noise_bob),
        ("rician_k", s.rician_k),
        ("pl0_db", s.pl0_db),
        ("alpha_ris", s.alpha_ris),
        ("alpha_nlos", s.alpha_nlos),
        ("si_leak_db", s.si_leak_db),
    ] {
        let _ = writeln!(out, "{k} = {v:?}");
    }
    let _ = writeln!(out, "phase_levels = {}\nmode = {}", s.phase_levels, s.mode);
    let _ = writeln!(out, "direct_fb_blocked = {}", s.direct_fb_blocked);
    let _ = writeln!(out, "residual_floor = {:?}", s.residual_floor);
    let a = &plan.alt;
    let _ = writeln!(out, "\n[alternating]");
    let _ = writeln!(
        out,
        "max_outer = {}\ntol = {:?}\nsweeps = {}\ngrid = {}\nstarts = {}",
        a.max_outer, a.tol, a.sweeps, a.grid, a.starts
    );
    let _ = writeln!(out, "\n[random]\nbudget = {}", plan.random_budget);
    let n = &plan.neural;
    let _ = writeln!(out, "\n[neural]");
    if let Some(m) = &n.model {
        let _ = writeln!(out, "model = {}", m.display());
    }
    let _ = writeln!(
        out,
        "samples = {}\nenvironments = {}\nval_environments = {}\nhidden = {}",
        n.samples,
        n.environments,
        n.val_environments,
        join(n.hidden.iter().map(|h| h.to_string()).collect())
    );
    let _ = writeln!(
        out,
        "critic_epochs = {}\ngenerator_epochs = {}\nlr = {:?}\nbatch = {}\nlambda = {:?}\nmargin = {:?}\nseed = {}",
        n.critic_epochs, n.generator_epochs, n.lr, n.batch, n.lambda, n.margin, n.seed
    );
    let o = &plan.oracle_check;
    let _ = writeln!(out, "\n[oracle_check]");
    let _ = writeln!(
        out,
        "instances = {}\nseed = {}\nalt_tol = {:?}\nneural_tol = {:?}\nalt_min = {}\nneural_min = {}",
        o.instances, o.seed, o.alt_tol, o.neural_tol, o.alt_min, o.neural_min
    );
    out
}

/// Outcome of one method on one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct RowResult {
    pub feasible: bool,
    pub metrics: Metrics,
    pub iters: usize,
    pub wall_ms: f64,
    pub config: StarConfig,
    /// Non-fatal note, e.g. a beamformer that could not be built.
    pub note: Option<String>,
}

/// One results-CSV row.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub seed: u64,
    pub method: Method,
    pub mode: StarMode,
    pub m: usize,
    pub l: usize,
    pub d_sr: f64,
    pub objective: Objective,
    pub result: std::result::Result<RowResult, String>,
}

impl Row {
    pub fn record(&self) -> Vec<String> {
        let mut rec = vec![
            self.seed.to_string(),
            self.method.to_string(),
            self.mode.to_string(),
            self.m.to_string(),
            self.l.to_string(),
            self.d_sr.to_string(),
            self.objective.to_string(),
        ];
        match &self.result {
            Ok(r) => {
                rec.push(r.feasible.to_string());
                for x in [
                    r.metrics.rate_dl,
                    r.metrics.rate_ul,
                    r.metrics.resid_si_db,
                    r.metrics.sic_gain_db,
                ] {
                    rec.push(fmt_metric(x));
                }
                rec.push(r.iters.to_string());
                rec.push(format!("{:.3}", r.wall_ms));
                rec.push(r.note.clone().unwrap_or_default());
            }
            Err(e) => {
                rec.push("false".into());
                rec.extend(std::iter::repeat_n(String::new(), 6));
                rec.push(e.clone());
            }
        }
        rec
    }
}

fn fmt_metric(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        let s = format!("{x:.6}");
        if s == "-0.000000" {
            "0.000000".into()
        } else {
            s
        }
    }
}

/// Runtime knobs that do not change results.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunOptions {
    /// Worker threads; `None` uses all cores.
    pub jobs: Option<usize>,
}

/// Seed of one (sweep value, trial, method) cell.
pub fn row_seed(master: u64, value_idx: usize, trial: usize, method: Method) -> u64 {
    mix_seed(master, &[value_idx as u64, trial as u64, method.tag()])
}

/// Runs every (sweep value × trial × method) cell. Rows come back in that
/// order whatever the thread count; per-row failures land in the error
/// column.
pub fn run_plan(plan: &ExperimentPlan, master_seed: u64, opts: RunOptions) -> Result<Vec<Row>> {
    plan.validate().map_err(|issues| {
        Error::Config(
            issues
                .iter()
                .map(|i| format!("{}: {}", i.key, i.message))
                .collect::<Vec<_>>()
                .join("; "),
        )
    })?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = opts.jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_plan_inner(plan, master_seed))
}

fn run_plan_inner(plan: &ExperimentPlan, master: u64) -> Result<Vec<Row>> {
    let models: Vec<std::result::Result<ModelBundle, String>> = if plan.methods.contains(&Method::Neural) {
        match &plan.neural.model {
            Some(path) => {
                let loaded = ModelBundle::load(path).map_err(|e| format!("{}: {e}", path.display()));
                vec![loaded; plan.values.len()]
            }
            None => (0..plan.values.len())
                .map(|vi| {
                    train_pipeline(
                        &plan.scenario(vi),
                        plan.objective,
                        &plan.neural.sizes(),
                        mix_seed(master, &[vi as u64, TRAIN_TAG]),
                    )
                    .map(|(b, _, _)| b)
                    .map_err(|e| format!("training failed: {e}"))
                })
                .collect(),
        }
    } else {
        Vec::new()
    };

    let mut cells = Vec::new();
    for vi in 0..plan.values.len() {
        for trial in 0..plan.trials {
            for &method in &plan.methods {
                cells.push((vi, trial, method));
            }
        }
    }
    Ok(cells
        .par_iter()
        .map(|&(vi, trial, method)| {
            let seed = row_seed(master, vi, trial, method);
            let spec = ScenarioSpec {
                seed,
                ..plan.scenario(vi)
            };
            let result = run_cell(plan, &spec, method, models.get(vi)).map(|mut r| {
                if !plan.timing {
                    r.wall_ms = 0.0;
                }
                r
            });
            Row {
                seed,
                method,
                mode: spec.mode,
                m: spec.n_elems,
                l: spec.phase_levels,
                d_sr: spec.d_sr,
                objective: plan.objective,
                result,
            }
        })
        .collect())
}

fn run_cell(
    plan: &ExperimentPlan,
    spec: &ScenarioSpec,
    method: Method,
    model: Option<&std::result::Result<ModelBundle, String>>,
) -> std::result::Result<RowResult, String> {
    let ch = gen_channels(spec, &mut Rng::new(spec.seed)).map_err(|e| e.to_string())?;
    let obj = plan.objective;
    let res = match method {
        Method::Oracle => enumerate_oracle(spec, &ch, obj),
        Method::Random => random_search(spec, &ch, obj, plan.random_budget, &mut Rng::derive(spec.seed, &[1])),
        Method::Alternating => alternating_optimize(spec, &ch, obj, &plan.alt),
        Method::Neural => {
            let bundle = match model {
                Some(Ok(b)) => b,
                Some(Err(e)) => return Err(e.clone()),
                None => return Err("no model".into()),
            };
            let start = Instant::now();
            let (cfg, link) = bundle.infer(&ch).map_err(|e| e.to_string())?;
            let metrics = evaluate(spec, &ch, &cfg, &link).map_err(|e| e.to_string())?;
            return Ok(RowResult {
                feasible: obj.is_feasible(&metrics),
                metrics,
                iters: 0,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
                config: cfg,
                note: None,
            });
        }
    };
    let r = res.map_err(|e| e.to_string())?;
    Ok(RowResult {
        feasible: r.feasible,
        metrics: r.metrics,
        iters: r.iters,
        wall_ms: r.wall_ms,
        config: r.cfg,
        note: r.note,
    })
}

/// Serializes rows under [`CSV_HEADER`].
pub fn rows_to_csv(rows: &[Row]) -> String {
    let mut w = csv_writer();
    w.write_record(CSV_HEADER.split(',')).expect("in-memory write");
    for r in rows {
        w.write_record(r.record()).expect("in-memory write");
    }
    finish_csv(w)
}

/// Best-found surface configurations, one per row, in row order; rows that
/// failed are omitted.
pub fn configs_to_csv(rows: &[Row]) -> String {
    let mut out = String::from("row,seed,method,config\n");
    for (i, r) in rows.iter().enumerate() {
        if let Ok(res) = &r.result {
            out.push_str(&format!(
                "{i},{},{},\"{}\"\n",
                r.seed,
                r.method,
                res.config.to_csv_row()
            ));
        }
    }
    out
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Median and quartiles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Stat {
            median: quantile(&v, 0.5),
            q1: quantile(&v, 0.25),
            q3: quantile(&v, 0.75),
        }
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Linear-interpolation quantile of sorted data (`h = (n − 1) p`). For the
/// median this is the middle element for odd `n` and the mean of the two
/// middle elements for even `n`. NaN for empty input.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let (a, b) = (sorted[lo], sorted[hi]);
    if a == b || h == lo as f64 {
        a
    } else {
        a + (h - lo as f64) * (b - a)
    }
}

/// Summarized metric columns, in order.
pub const METRICS: [&str; 5] = ["rate_dl", "rate_ul", "resid_si_db", "sic_gain_db", "iters"];

/// Aggregates of one (method, mode, M, L, d_sr, objective) group.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub mode: String,
    pub m: usize,
    pub l: usize,
    pub d_sr: f64,
    pub objective: String,
    pub n: usize,
    pub feasible_frac: f64,
    /// One entry per [`METRICS`] column.
    pub stats: [Stat; 5],
}

impl SummaryRow {
    pub fn stat(&self, metric: &str) -> Option<Stat> {
        METRICS.iter().position(|m| *m == metric).map(|i| self.stats[i])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    /// Rows that could not be parsed.
    pub skipped: usize,
    /// Rows whose method reported an error and carry no metrics.
    pub failed: usize,
}

/// Groups a results CSV and computes per-group medians and quartiles.
/// Groups are ordered by (method, mode, objective, M, L, d_sr).
pub fn summarize(csv_text: &str) -> Result<Summary> {
    let mut rd = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(false)
        .from_reader(csv_text.as_bytes());
    let mut records = rd.records();
    match records.next() {
        Some(Ok(h)) if h.iter().collect::<Vec<_>>().join(",") == CSV_HEADER => {}
        _ => {
            return Err(Error::Config(format!(
                "results CSV must start with header '{CSV_HEADER}'"
            )))
        }
    }
    type Key = (String, String, String, usize, usize, u64);
    let mut groups: Vec<(Key, Vec<[f64; 5]>, usize)> = Vec::new();
    let (mut skipped, mut failed) = (0, 0);
    for rec in records {
        let Ok(rec) = rec else {
            skipped += 1;
            continue;
        };
        if rec.len() != 15 {
            skipped += 1;
            continue;
        }
        if rec[8].is_empty() && !rec[14].is_empty() {
            failed += 1;
            continue;
        }
        let parsed = (|| {
            let m: usize = rec[3].parse().ok()?;
            let l: usize = rec[4].parse().ok()?;
            let d: f64 = rec[5].parse().ok()?;
            let feasible: bool = rec[7].parse().ok()?;
            let mut vals = [0.0; 5];
            for (k, col) in [8, 9, 10, 11, 12].into_iter().enumerate() {
                vals[k] = rec[col].parse().ok()?;
            }
            rec[13].parse::<f64>().ok()?;
            if rec[1].is_empty() || !(d >= 0.0) {
                return None;
            }
            let key = (
                rec[1].to_string(),
                rec[2].to_string(),
                rec[6].to_string(),
                m,
                l,
                d.to_bits(),
            );
            Some((key, vals, feasible))
        })();
        let Some((key, vals, feasible)) = parsed else {
            skipped += 1;
            continue;
        };
        match groups.iter_mut().find(|g| g.0 == key) {
            Some(g) => {
                g.1.push(vals);
                g.2 += usize::from(feasible);
            }
            None => groups.push((key, vec![vals], usize::from(feasible))),
        }
    }
    groups.sort_by(|a, b| {
        let (ka, kb) = (&a.0, &b.0);
        (&ka.0, &ka.1, &ka.2, ka.3, ka.4)
            .cmp(&(&kb.0, &kb.1, &kb.2, kb.3, kb.4))
            .then(f64::from_bits(ka.5).total_cmp(&f64::from_bits(kb.5)))
    });
    let rows = groups
        .into_iter()
        .map(|(k, vals, n_feas)| {
            let stats = std::array::from_fn(|i| Stat::of(&vals.iter().map(|v| v[i]).collect::<Vec<_>>()));
            SummaryRow {
                method: k.0,
                mode: k.1,
                objective: k.2,
                m: k.3,
                l: k.4,
                d_sr: f64::from_bits(k.5),
                n: vals.len(),
                feasible_frac: n_feas as f64 / vals.len() as f64,
                stats,
            }
        })
        .collect();
    Ok(Summary { rows, skipped, failed })
}

fn summary_header() -> String {
    let mut cols: Vec<String> = ["method", "mode", "M", "L", "d_sr", "objective", "n", "feasible_frac"]
        .map(String::from)
        .to_vec();
    for m in METRICS {
        for s in ["median", "q1", "q3"] {
            cols.push(format!("{m}_{s}"));
        }
    }
    cols.join(",")
}

impl Summary {
    pub fn to_csv(&self) -> String {
        let mut w = csv_writer();
        w.write_record(summary_header().split(',')).expect("in-memory write");
        for r in &self.rows {
            let mut rec = vec![
                r.method.clone(),
                r.mode.clone(),
                r.m.to_string(),
                r.l.to_string(),
                r.d_sr.to_string(),
                r.objective.clone(),
                r.n.to_string(),
                fmt_metric(r.feasible_frac),
            ];
            for s in &r.stats {
                rec.extend([fmt_metric(s.median), fmt_metric(s.q1), fmt_metric(s.q3)]);
            }
            w.write_record(rec).expect("in-memory write");
        }
        finish_csv(w)
    }

    pub fn from_csv(text: &str) -> Result<Summary> {
        let mut rd = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(text.as_bytes());
        let mut records = rd.records();
        let bad = |what: &str| Error::Config(format!("summary CSV: {what}"));
        match records.next() {
            Some(Ok(h)) if h.iter().collect::<Vec<_>>().join(",") == summary_header() => {}
            _ => return Err(bad("unexpected header")),
        }
        let mut rows = Vec::new();
        for (i, rec) in records.enumerate() {
            let rec = rec.map_err(|e| bad(&e.to_string()))?;
            let num = |k: usize| -> Result<f64> {
                rec[k]
                    .parse()
                    .map_err(|_| bad(&format!("row {}: column {} is not a number", i + 1, k + 1)))
            };
            let int = |k: usize| -> Result<usize> {
                rec[k]
                    .parse()
                    .map_err(|_| bad(&format!("row {}: column {} is not an integer", i + 1, k + 1)))
            };
            let stats = (0..5)
                .map(|m| {
                    Ok(Stat {
                        median: num(8 + 3 * m)?,
                        q1: num(9 + 3 * m)?,
                        q3: num(10 + 3 * m)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(SummaryRow {
                method: rec[0].to_string(),
                mode: rec[1].to_string(),
                m: int(2)?,
                l: int(3)?,
                d_sr: num(4)?,
                objective: rec[5].to_string(),
                n: int(6)?,
                feasible_frac: num(7)?,
                stats: stats.try_into().expect("five metrics"),
            });
        }
        Ok(Summary {
            rows,
            skipped: 0,
            failed: 0,
        })
    }

    /// Fixed-width text table of medians with interquartile ranges.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<12}{:<5}{:>5}{:>4}{:>7}{:>5}{:>7}  {:>20}{:>20}{:>22}{:>22}\n",
            "method",
            "mode",
            "M",
            "L",
            "d_sr",
            "n",
            "feas",
            "rate_dl [IQR]",
            "rate_ul [IQR]",
            "resid_si_db [IQR]",
            "sic_gain_db [IQR]"
        );
        for r in &self.rows {
            let cell = |s: Stat| format!("{:.3} [{:.3}]", s.median, s.iqr());
            out.push_str(&format!(
                "{:<12}{:<5}{:>5}{:>4}{:>7}{:>5}{:>7.2}  {:>20}{:>20}{:>22}{:>22}\n",
                r.method,
                r.mode,
                r.m,
                r.l,
                r.d_sr,
                r.n,
                r.feasible_frac,
                cell(r.stats[0]),
                cell(r.stats[1]),
                cell(r.stats[2]),
                cell(r.stats[3]),
            ));
        }
        out.push_str(&format!(
            "skipped rows: {}, failed rows: {}\n",
            self.skipped, self.failed
        ));
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum XAxis {
    Elements,
    PhaseLevels,
    Distance,
}

impl FromStr for XAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "M" | "elements" => Ok(XAxis::Elements),
            "L" | "phase_levels" => Ok(XAxis::PhaseLevels),
            "d_sr" | "distance" => Ok(XAxis::Distance),
            other => Err(Error::Config(format!(
                "unknown x axis '{other}' (expected M, L or d_sr)"
            ))),
        }
    }
}

impl XAxis {
    fn label(self) -> &'static str {
        match self {
            XAxis::Elements => "M (elements)",
            XAxis::PhaseLevels => "L (phase levels)",
            XAxis::Distance => "d_sr (m)",
        }
    }

    fn of(self, r: &SummaryRow) -> f64 {
        match self {
            XAxis::Elements => r.m as f64,
            XAxis::PhaseLevels => r.l as f64,
            XAxis::Distance => r.d_sr,
        }
    }
}

/// Chart axes: x column and the metric whose median is plotted.
#[derive(Clone, Debug, PartialEq)]
pub struct Axes {
    pub x: XAxis,
    pub y: String,
}

impl Axes {
    pub fn new(x: &str, y: &str) -> Result<Axes> {
        let x = x.parse()?;
        if !METRICS.contains(&y) {
            return Err(Error::Config(format!(
                "unknown y metric '{y}' (expected one of {})",
                METRICS.join(", ")
            )));
        }
        Ok(Axes { x, y: y.to_string() })
    }

    fn y_label(&self) -> String {
        let unit = match self.y.as_str() {
            "rate_dl" | "rate_ul" => "bps/Hz",
            "iters" => "iterations",
            _ => "dB",
        };
        format!("{} ({unit})", self.y)
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Line chart of group medians, one polyline per (method, mode) series.
pub fn plot_svg(summary: &[SummaryRow], axes: &Axes) -> Result<String> {
    if summary.is_empty() {
        return Err(Error::Config("cannot plot an empty summary".into()));
    }
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in summary {
        let name = format!("{} {}", r.method, r.mode);
        let y = r.stat(&axes.y).expect("validated metric").median;
        let x = axes.x.of(r);
        if !x.is_finite() || !y.is_finite() {
            continue;
        }
        match series.iter_mut().find(|s| s.0 == name) {
            Some(s) => s.1.push((x, y)),
            None => series.push((name, vec![(x, y)])),
        }
    }
    if series.is_empty() {
        return Err(Error::Config(format!("no finite {} values to plot", axes.y)));
    }
    for s in &mut series {
        s.1.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let pts = series.iter().flat_map(|s| s.1.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 - x0 < 1e-12 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    let pad = ((y1 - y0) * 0.05).max(1e-9);
    let (y0, y1) = (y0 - pad, y1 + pad);

    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 470.0, 20.0, 360.0);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (right - left);
    let sy = |y: f64| bottom - (y - y0) / (y1 - y0) * (bottom - top);

    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    out.push_str(&format!("<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"));
    out.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{bottom}\" x2=\"{right}\" y2=\"{bottom}\" stroke=\"black\"/>\n\
         <line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{bottom}\" stroke=\"black\"/>\n"
    ));
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        out.push_str(&format!(
            "<line x1=\"{px:.2}\" y1=\"{bottom}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n\
             <text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n\
             <line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{left}\" y2=\"{py:.2}\" stroke=\"black\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
            bottom + 5.0,
            bottom + 18.0,
            tick(xv),
            left - 5.0,
            left - 8.0,
            py + 4.0,
            tick(yv),
        ));
    }
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
        (left + right) / 2.0,
        bottom + 40.0,
        axes.x.label()
    ));
    out.push_str(&format!(
        "<text x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.2})\">{}</text>\n",
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        axes.y_label()
    ));
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            coords.join(" ")
        ));
        for &(x, y) in pts {
            out.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                sx(x),
                sy(y)
            ));
        }
        let ly = top + 10.0 + 18.0 * k as f64;
        out.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\">{}</text>\n",
            right + 20.0,
            right + 45.0,
            right + 50.0,
            ly + 4.0,
            xml_escape(name)
        ));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Per-instance comparison of the optimizers against the exhaustive oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleCheckReport {
    pub instances: usize,
    pub oracle_feasible: usize,
    pub alt_within: usize,
    /// `None` when the plan does not list the neural method.
    pub neural_within: Option<usize>,
    pub alt_min: usize,
    pub neural_min: usize,
}

impl OracleCheckReport {
    pub fn passed(&self) -> bool {
        self.alt_within >= self.alt_min && self.neural_within.is_none_or(|n| n >= self.neural_min)
    }
}

/// True when `score` is within `tol` (relative) of the oracle's score.
pub fn within_tolerance(score: f64, oracle: f64, tol: f64) -> bool {
    score >= oracle - tol * oracle.abs()
}

/// Runs the oracle, the alternating optimizer and, if listed, the neural
/// method on `plan.oracle_check.instances` seeded instances of the plan's
/// first sweep point. Without a `model` path the neural pair is trained
/// first with `plan.neural.seed`.
pub fn oracle_check(plan: &ExperimentPlan) -> Result<OracleCheckReport> {
    plan.validate()
        .map_err(|issues| Error::Config(issues[0].message.clone()))?;
    let family = plan.scenario(0);
    oracle_size_for(&family)?;
    let oc = &plan.oracle_check;
    let bundle = if plan.methods.contains(&Method::Neural) {
        Some(match &plan.neural.model {
            Some(p) => ModelBundle::load(p)?,
            None => train_pipeline(&family, plan.objective, &plan.neural.sizes(), plan.neural.seed)?.0,
        })
    } else {
        None
    };
    let obj = plan.objective;
    let outcomes = (0..oc.instances as u64)
        .into_par_iter()
        .map(|i| {
            let spec = ScenarioSpec {
                seed: mix_seed(oc.seed, &[i]),
                ..family.clone()
            };
            let ch = gen_channels(&spec, &mut Rng::new(spec.seed))?;
            let oracle = enumerate_oracle(&spec, &ch, obj)?;
            let so = oracle.score(&obj);
            let alt = alternating_optimize(&spec, &ch, obj, &plan.alt)?;
            let alt_ok = within_tolerance(alt.score(&obj), so, oc.alt_tol);
            let nn_ok = match &bundle {
                Some(b) => {
                    let (cfg, link) = b.infer(&ch)?;
                    let m = evaluate(&spec, &ch, &cfg, &link)?;
                    Some(within_tolerance(obj.score(&m), so, oc.neural_tol))
                }
                None => None,
            };
            Ok((oracle.feasible, alt_ok, nn_ok))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OracleCheckReport {
        instances: oc.instances,
        oracle_feasible: outcomes.iter().filter(|o| o.0).count(),
        alt_within: outcomes.iter().filter(|o| o.1).count(),
        neural_within: bundle
            .as_ref()
            .map(|_| outcomes.iter().filter(|o| o.2 == Some(true)).count()),
        alt_min: oc.alt_min,
        neural_min: oc.neural_min,
    })
}

/// Trains a neural pair for the plan's first sweep point.
pub fn train_for_plan(plan: &ExperimentPlan) -> Result<ModelBundle> {
    plan.validate()
        .map_err(|issues| Error::Config(issues[0].message.clone()))?;
    Ok(train_pipeline(
        &plan.scenario(0),
        plan.objective,
        &plan.neural.sizes(),
        plan.neural.seed,
    )?
    .0)
}

/// Reads and parses a plan file.
pub fn load_plan(path: &Path) -> std::result::Result<ExperimentPlan, Vec<ConfigError>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        vec![ConfigError {
            line: 0,
            message: format!("{}: {e}", path.display()),
        }]
    })?;
    parse_config(&text)
}
