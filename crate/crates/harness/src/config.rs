//! Experiment configuration: TOML text with `[experiment]`, `[class]`,
//! `[oracle]`, `[env]` and `[output]` sections.
//!
//! Parsing never stops at the first problem: every unknown key, missing key,
//! type mismatch and out-of-range value is collected with its line number.
//! The full grammar is documented in `docs/config.md`.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;
use toml::{Table, Value};

use crate::classfile::{parse_class_table, ClassDef};

/// Experiment kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Ss,
    SsDis,
    SsM,
    Bandit,
    Bandit2q,
    Il,
    IlM,
    BcVsIl,
    Complexity,
}

impl Kind {
    pub const ALL: [(&'static str, Kind); 9] = [
        ("ss", Kind::Ss),
        ("ss-dis", Kind::SsDis),
        ("ss-m", Kind::SsM),
        ("bandit", Kind::Bandit),
        ("bandit-2q", Kind::Bandit2q),
        ("il", Kind::Il),
        ("il-m", Kind::IlM),
        ("bc-vs-il", Kind::BcVsIl),
        ("complexity", Kind::Complexity),
    ];

    pub fn name(self) -> &'static str {
        Kind::ALL.iter().find(|(_, k)| *k == self).map(|(n, _)| *n).expect("listed")
    }

    /// Kinds that run over a model class from `[class]`.
    pub fn needs_class(self) -> bool {
        matches!(self, Kind::Ss | Kind::SsDis | Kind::SsM | Kind::Bandit | Kind::Bandit2q | Kind::Complexity)
    }

    /// Kinds driven by an episodic environment.
    pub fn is_episodic(self) -> bool {
        matches!(self, Kind::Il | Kind::IlM | Kind::BcVsIl)
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkChoice {
    Identity,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleChoice {
    MarginWidth,
    Que,
    Always,
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggChoice {
    RandomMix,
    Majority,
    ConfidentMajority,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvChoice {
    Tree,
    BalanceChain,
}

/// `[oracle]`: link, learning rate and query-rule knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub link: LinkChoice,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    /// Oracle learning rate η; default `λ/(2(1+B)²)`.
    pub learning_rate: Option<f64>,
    /// `None` picks the kind's default (`que` for multi-expert kinds).
    pub rule: Option<RuleChoice>,
    pub resolution: f64,
    pub xi_threshold: Option<f64>,
    pub aggregator: AggChoice,
    pub rho: f64,
    pub lipschitz: Option<f64>,
    pub reference_widths: bool,
}

/// `[env]`: episodic environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub kind: EnvChoice,
    pub region_len: usize,
    pub members: usize,
    pub expert: usize,
    pub sampled_rewards: bool,
    /// Demonstrations per seed for `bc-vs-il`; defaults to `T`.
    pub demos: Option<usize>,
}

/// `[class]` after resolving an optional class file.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassConfig {
    pub def: ClassDef,
    /// Truth index per expert (`ss-m`).
    pub truths: Option<Vec<usize>>,
    pub file: Option<PathBuf>,
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub seed: u64,
    pub rounds: Option<usize>,
    pub horizon: Option<usize>,
    pub actions: Option<usize>,
    pub experts: Option<usize>,
    pub delta: f64,
    pub eps_grid: Vec<f64>,
    pub replicates: usize,
    pub beta: f64,
    pub zeta: f64,
    pub eps0: f64,
    pub beta0: f64,
    pub class: Option<ClassConfig>,
    pub oracle: OracleConfig,
    pub env: EnvConfig,
    pub output_dir: PathBuf,
    pub svg: bool,
}

/// One problem found while parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Every violation of a rejected configuration.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}", render(.0))]
pub struct ConfigError(pub Vec<Violation>);

fn render(v: &[Violation]) -> String {
    let lines: Vec<String> = v.iter().map(ToString::to_string).collect();
    lines.join("\n")
}

impl ConfigError {
    /// Whether some violation mentions `needle`.
    pub fn mentions(&self, needle: &str) -> bool {
        self.0.iter().any(|v| v.message.contains(needle))
    }
}

/// Line numbers of section headers and `key =` assignments.
#[derive(Debug, Default)]
pub(crate) struct LineMap {
    sections: HashMap<String, usize>,
    keys: HashMap<(String, String), usize>,
}

impl LineMap {
    pub(crate) fn scan(text: &str) -> Self {
        let mut map = LineMap::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if let Some(name) = header(line) {
                section = name.to_string();
                map.sections.entry(section.clone()).or_insert(i + 1);
            } else if let Some((key, _)) = line.split_once('=') {
                let key = key.trim().trim_matches('"');
                if !key.is_empty() && key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                    map.keys.entry((section.clone(), key.to_string())).or_insert(i + 1);
                }
            }
        }
        map
    }

    pub(crate) fn key(&self, section: &str, key: &str) -> Option<usize> {
        self.keys.get(&(section.to_string(), key.to_string())).copied().or_else(|| self.section(section))
    }

    pub(crate) fn section(&self, section: &str) -> Option<usize> {
        self.sections.get(section).copied()
    }
}

fn header(line: &str) -> Option<&str> {
    let line = line.split('#').next()?.trim();
    let name = line.strip_prefix('[')?.strip_suffix(']')?.trim();
    let ok = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.');
    ok.then_some(name)
}

/// Typed access to one section, recording violations as it goes.
pub(crate) struct Section<'a> {
    pub name: &'a str,
    pub table: Option<&'a Table>,
    pub lines: &'a LineMap,
    pub errors: &'a mut Vec<Violation>,
}

impl<'a> Section<'a> {
    pub(crate) fn error(&mut self, key: Option<&str>, message: String) {
        let line = match key {
            Some(k) => self.lines.key(self.name, k),
            None => self.lines.section(self.name),
        };
        self.errors.push(Violation { line, message });
    }

    pub(crate) fn has(&self, key: &str) -> bool {
        self.table.is_some_and(|t| t.contains_key(key))
    }

    pub(crate) fn reject_unknown(&mut self, known: &[&str]) {
        let Some(t) = self.table else { return };
        let mut unknown: Vec<&String> = t.keys().filter(|k| !known.contains(&k.as_str())).collect();
        unknown.sort_by_key(|k| self.lines.key(self.name, k));
        for k in unknown {
            self.error(Some(k), format!("unknown key `{k}` in [{}]", self.name));
        }
    }

    pub(crate) fn missing(&mut self, key: &str, why: &str) {
        self.error(None, format!("missing required key `{key}` in [{}] ({why})", self.name));
    }

    fn raw(&self, key: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn type_error(&mut self, key: &str, want: &str, got: &Value) {
        self.error(Some(key), format!("`{key}` must be {want}, found {}", got.type_str()));
    }

    pub(crate) fn str(&mut self, key: &str) -> Option<&'a str> {
        let v = self.raw(key)?;
        match v.as_str() {
            Some(s) => Some(s),
            None => {
                self.type_error(key, "a string", v);
                None
            }
        }
    }

    pub(crate) fn choice<T: Copy>(&mut self, key: &str, options: &[(&str, T)]) -> Option<T> {
        let s = self.str(key)?;
        match options.iter().find(|(n, _)| *n == s) {
            Some((_, v)) => Some(*v),
            None => {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.error(Some(key), format!("`{key}` = \"{s}\" is not one of {}", names.join(", ")));
                None
            }
        }
    }

    pub(crate) fn bool(&mut self, key: &str) -> Option<bool> {
        let v = self.raw(key)?;
        match v.as_bool() {
            Some(b) => Some(b),
            None => {
                self.type_error(key, "a boolean", v);
                None
            }
        }
    }

    /// Integer in `min..=max`.
    pub(crate) fn int(&mut self, key: &str, min: i64, max: i64) -> Option<i64> {
        let v = self.raw(key)?;
        let Some(i) = v.as_integer() else {
            self.type_error(key, "an integer", v);
            return None;
        };
        if i < min || i > max {
            let range = if max == i64::MAX { format!(">= {min}") } else { format!("in {min}..={max}") };
            self.error(Some(key), format!("`{key}` = {i} out of range (must be {range})"));
            return None;
        }
        Some(i)
    }

    pub(crate) fn usize(&mut self, key: &str, min: usize, max: usize) -> Option<usize> {
        self.int(key, min as i64, max.min(i64::MAX as usize) as i64).map(|i| i as usize)
    }

    fn number(&mut self, key: &str, v: &Value) -> Option<f64> {
        match v {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.type_error(key, "a number", v);
                None
            }
        }
    }

    /// Number satisfying `ok`, described by `range` in the error message.
    pub(crate) fn float(&mut self, key: &str, range: &str, ok: impl Fn(f64) -> bool) -> Option<f64> {
        let v = self.raw(key)?;
        let f = self.number(key, v)?;
        if !f.is_finite() || !ok(f) {
            self.error(Some(key), format!("`{key}` = {f} out of range (must be {range})"));
            return None;
        }
        Some(f)
    }

    pub(crate) fn array(&mut self, key: &str) -> Option<&'a Vec<Value>> {
        let v = self.raw(key)?;
        match v.as_array() {
            Some(a) => Some(a),
            None => {
                self.type_error(key, "an array", v);
                None
            }
        }
    }

    pub(crate) fn floats(&mut self, key: &str, range: &str, ok: impl Fn(f64) -> bool) -> Option<Vec<f64>> {
        let arr = self.array(key)?;
        let mut out = Vec::with_capacity(arr.len());
        for v in arr {
            let f = self.number(key, v)?;
            if !f.is_finite() || !ok(f) {
                self.error(Some(key), format!("`{key}` entry {f} out of range (must be {range})"));
                return None;
            }
            out.push(f);
        }
        Some(out)
    }

    pub(crate) fn indices(&mut self, key: &str) -> Option<Vec<usize>> {
        let arr = self.array(key)?;
        let mut out = Vec::with_capacity(arr.len());
        for v in arr {
            match v.as_integer() {
                Some(i) if i >= 0 => out.push(i as usize),
                _ => {
                    self.error(Some(key), format!("`{key}` entries must be nonnegative integers"));
                    return None;
                }
            }
        }
        Some(out)
    }

    /// Nested numeric array of depth `depth` (1 = `[f64]`).
    pub(crate) fn nested(&mut self, key: &str, depth: usize) -> Option<Value> {
        let v = self.raw(key)?;
        if nested_ok(v, depth) {
            Some(v.clone())
        } else {
            self.error(Some(key), format!("`{key}` must be a {depth}-level nested array of numbers"));
            None
        }
    }
}

fn nested_ok(v: &Value, depth: usize) -> bool {
    match (v, depth) {
        (Value::Float(f), 0) => f.is_finite(),
        (Value::Integer(_), 0) => true,
        (Value::Array(a), d) if d > 0 => a.iter().all(|x| nested_ok(x, d - 1)),
        _ => false,
    }
}

const SECTIONS: [&str; 5] = ["experiment", "class", "oracle", "env", "output"];
const EXPERIMENT_KEYS: [&str; 15] = [
    "kind",
    "seed",
    "T",
    "H",
    "K",
    "M",
    "delta",
    "eps_grid",
    "replicates",
    "beta",
    "zeta",
    "eps0",
    "beta0",
    "description",
    "name",
];
const ORACLE_KEYS: [&str; 11] = [
    "link",
    "lambda",
    "gamma",
    "learning_rate",
    "rule",
    "resolution",
    "xi_threshold",
    "aggregator",
    "rho",
    "lipschitz",
    "width_mode",
];
const ENV_KEYS: [&str; 6] = ["kind", "region_len", "members", "expert", "sampled_rewards", "demos"];
const OUTPUT_KEYS: [&str; 2] = ["dir", "svg"];

pub const DEFAULT_EPS_GRID: [f64; 4] = [0.05, 0.1, 0.2, 0.4];

/// Parse and validate configuration text; a `[class] file` is resolved
/// against the current directory.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    parse_config_in(text, Path::new("."))
}

/// Read and validate a configuration file; a class file is resolved against
/// the configuration's directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(vec![Violation { line: None, message: format!("cannot read {}: {e}", path.display()) }]))?;
    parse_config_in(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Parse with relative class-file paths resolved against `base`.
pub fn parse_config_in(text: &str, base: &Path) -> Result<ExperimentConfig, ConfigError> {
    let root: Table = toml::from_str(text).map_err(|e| ConfigError(vec![syntax_violation(&e, text)]))?;
    let lines = LineMap::scan(text);
    let mut errors = Vec::new();

    let mut sections: Vec<&String> = root.keys().collect();
    sections.sort_by_key(|k| lines.section(k));
    for name in sections {
        match root.get(name.as_str()) {
            Some(Value::Table(_)) if SECTIONS.contains(&name.as_str()) => {}
            Some(Value::Table(_)) => {
                errors.push(Violation { line: lines.section(name), message: format!("unknown section [{name}]") })
            }
            _ => errors.push(Violation { line: lines.key("", name), message: format!("key `{name}` outside any section") }),
        }
    }
    let table = |name: &str| root.get(name).and_then(Value::as_table);

    // [experiment]
    let mut ex = Section { name: "experiment", table: table("experiment"), lines: &lines, errors: &mut errors };
    if ex.table.is_none() {
        ex.errors.push(Violation { line: None, message: "missing section [experiment]".into() });
    }
    ex.reject_unknown(&EXPERIMENT_KEYS);
    let kind_names: Vec<(&str, Kind)> = Kind::ALL.to_vec();
    let kind = ex.choice("kind", &kind_names);
    if ex.table.is_some() && !ex.has("kind") {
        ex.missing("kind", "every experiment");
    }
    let seed = ex.int("seed", 0, i64::MAX).map(|s| s as u64);
    if ex.table.is_some() && !ex.has("seed") {
        ex.missing("seed", "every experiment");
    }
    let rounds = ex.usize("T", 1, 100_000_000);
    let horizon = ex.usize("H", 1, 64);
    let actions = ex.usize("K", 1, 1 << 16);
    let experts = ex.usize("M", 1, 1 << 10);
    let delta = ex.float("delta", "in (0, 1)", |d| d > 0.0 && d < 1.0).unwrap_or(0.1);
    let eps_grid = ex.floats("eps_grid", "positive", |e| e > 0.0).unwrap_or_else(|| DEFAULT_EPS_GRID.to_vec());
    if ex.has("eps_grid") && eps_grid.is_empty() {
        ex.error(Some("eps_grid"), "`eps_grid` must not be empty".into());
    }
    let replicates = ex.usize("replicates", 1, 100_000).unwrap_or(1);
    let beta = ex.float("beta", "positive", |b| b > 0.0).unwrap_or(0.1);
    let zeta = ex.float("zeta", "positive", |z| z > 0.0).unwrap_or(0.5);
    let eps0 = ex.float("eps0", "nonnegative", |e| e >= 0.0).unwrap_or(0.1);
    let beta0 = ex.float("beta0", "nonnegative", |b| b >= 0.0).unwrap_or(0.1);
    ex.str("description");
    ex.str("name");
    if let Some(k) = kind {
        let needs_t = k != Kind::Complexity;
        if needs_t && !ex.has("T") && ex.table.is_some() {
            ex.missing("T", &format!("kind {k}"));
        }
        if needs_t {
            if let Some(t) = rounds.filter(|&t| t < 3) {
                ex.error(Some("T"), format!("`T` = {t} out of range (budgets need T >= 3)"));
            }
        }
        if k.is_episodic() && !ex.has("H") {
            ex.missing("H", &format!("kind {k}"));
        }
        if k == Kind::SsM && !ex.has("M") {
            ex.missing("M", "kind ss-m");
        }
        if matches!(k, Kind::Il | Kind::BcVsIl) {
            if let Some(h) = horizon.filter(|&h| !(2..=ail_core::classes::MAX_TREE_HORIZON).contains(&h)) {
                ex.error(Some("H"), format!("`H` = {h} out of range for the tree MDP (must be in 2..=20)"));
            }
        }
    }

    // [oracle]
    let mut or = Section { name: "oracle", table: table("oracle"), lines: &lines, errors: &mut errors };
    or.reject_unknown(&ORACLE_KEYS);
    let link = or
        .choice("link", &[("identity", LinkChoice::Identity), ("softmax", LinkChoice::Softmax)])
        .unwrap_or(LinkChoice::Identity);
    let lambda = or.float("lambda", "positive", |l| l > 0.0);
    let gamma = or.float("gamma", "positive", |g| g > 0.0);
    if let (Some(l), Some(g)) = (lambda, gamma) {
        if l > g {
            or.error(Some("lambda"), format!("`lambda` = {l} exceeds `gamma` = {g}"));
        }
    }
    if link == LinkChoice::Identity && (lambda.is_some_and(|l| l != 1.0) || gamma.is_some_and(|g| g != 1.0)) {
        or.error(Some(if or.has("lambda") { "lambda" } else { "gamma" }), "the identity link requires lambda = gamma = 1".into());
    }
    let learning_rate = or.float("learning_rate", "positive", |e| e > 0.0);
    let rule = or.choice(
        "rule",
        &[
            ("margin-width", RuleChoice::MarginWidth),
            ("que", RuleChoice::Que),
            ("always", RuleChoice::Always),
            ("never", RuleChoice::Never),
        ],
    );
    let resolution =
        or.float("resolution", "in (0, 1]", |r| r > 0.0 && r <= 1.0).unwrap_or(ail_core::selsamp::DEFAULT_QUE_RESOLUTION);
    let xi_threshold = or.float("xi_threshold", "nonnegative", |x| x >= 0.0);
    let aggregator = or
        .choice(
            "aggregator",
            &[
                ("random-mix", AggChoice::RandomMix),
                ("majority", AggChoice::Majority),
                ("confident-majority", AggChoice::ConfidentMajority),
            ],
        )
        .unwrap_or(AggChoice::ConfidentMajority);
    let rho = or.float("rho", "in [0, 1]", |r| (0.0..=1.0).contains(&r)).unwrap_or(0.2);
    let lipschitz = or.float("lipschitz", "positive", |e| e > 0.0);
    let reference_widths = or.choice("width_mode", &[("cached", false), ("reference", true)]).unwrap_or(false);
    if matches!(kind, Some(Kind::Bandit | Kind::Bandit2q)) && link != LinkChoice::Identity {
        or.error(Some("link"), "bandit kinds require link = \"identity\"".into());
    }
    if xi_threshold.is_some() && kind.is_some_and(|k| k != Kind::Bandit) {
        or.error(Some("xi_threshold"), "`xi_threshold` only applies to kind bandit".into());
    }

    // [env]
    let mut en = Section { name: "env", table: table("env"), lines: &lines, errors: &mut errors };
    en.reject_unknown(&ENV_KEYS);
    let default_env = if kind == Some(Kind::IlM) { EnvChoice::BalanceChain } else { EnvChoice::Tree };
    let env_kind =
        en.choice("kind", &[("tree", EnvChoice::Tree), ("balance-chain", EnvChoice::BalanceChain)]).unwrap_or(default_env);
    let region_len = en.usize("region_len", 2, 1 << 16).unwrap_or(8);
    let members = en.usize("members", 1, 1 << 12).unwrap_or(8);
    let expert = en.usize("expert", 0, 2).unwrap_or(0);
    let sampled_rewards = en.bool("sampled_rewards").unwrap_or(false);
    let demos = en.usize("demos", 0, 100_000_000);
    match kind {
        Some(Kind::IlM) if env_kind != EnvChoice::BalanceChain => {
            en.error(Some("kind"), "kind il-m needs the multi-expert environment (env kind = \"balance-chain\")".into())
        }
        Some(Kind::BcVsIl) if env_kind != EnvChoice::Tree => {
            en.error(Some("kind"), "kind bc-vs-il runs on the tree MDP (env kind = \"tree\")".into())
        }
        _ => {}
    }
    if sampled_rewards && env_kind != EnvChoice::Tree {
        en.error(Some("sampled_rewards"), "`sampled_rewards` only applies to the tree MDP".into());
    }
    if kind == Some(Kind::IlM) {
        if let Some(m) = experts.filter(|&m| m != 3) {
            let line = lines.key("experiment", "M");
            errors.push(Violation { line, message: format!("`M` = {m} but the balance chain has 3 experts") });
        }
    }

    // [output]
    let mut out = Section { name: "output", table: table("output"), lines: &lines, errors: &mut errors };
    out.reject_unknown(&OUTPUT_KEYS);
    let output_dir = out.str("dir").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"));
    let svg = out.bool("svg").unwrap_or(true);

    // [class]
    let mut cl = Section { name: "class", table: table("class"), lines: &lines, errors: &mut errors };
    let class = if cl.table.is_some() {
        parse_class_section(&mut cl, base)
    } else {
        if kind.is_some_and(Kind::needs_class) {
            cl.errors.push(Violation { line: None, message: format!("missing section [class] (kind {})", kind.unwrap()) });
        }
        None
    };
    if let (Some(c), Some(k)) = (&class, kind) {
        check_class_against(&c.def, k, actions, experts, c.truths.as_deref(), &lines, &mut errors);
    }

    if !errors.is_empty() {
        errors.sort_by_key(|v| v.line.unwrap_or(0));
        return Err(ConfigError(errors));
    }
    Ok(ExperimentConfig {
        kind: kind.expect("validated"),
        seed: seed.expect("validated"),
        rounds,
        horizon,
        actions,
        experts,
        delta,
        eps_grid,
        replicates,
        beta,
        zeta,
        eps0,
        beta0,
        class,
        oracle: OracleConfig {
            link,
            lambda,
            gamma,
            learning_rate,
            rule,
            resolution,
            xi_threshold,
            aggregator,
            rho,
            lipschitz,
            reference_widths,
        },
        env: EnvConfig { kind: env_kind, region_len, members, expert, sampled_rewards, demos },
        output_dir,
        svg,
    })
}

fn syntax_violation(e: &toml::de::Error, text: &str) -> Violation {
    let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    let msg = e.message().trim().to_string();
    Violation { line, message: format!("syntax error: {msg}") }
}

fn parse_class_section(cl: &mut Section<'_>, base: &Path) -> Option<ClassConfig> {
    let truths = cl.indices("truths");
    if let Some(path) = cl.str("file") {
        let others: Vec<String> = cl.table.expect("present").keys().filter(|k| *k != "file" && *k != "truths").cloned().collect();
        for k in others {
            cl.error(Some(&k), format!("`{k}` cannot be combined with `file` in [class]"));
        }
        let full = base.join(path);
        let text = match std::fs::read_to_string(&full) {
            Ok(t) => t,
            Err(e) => {
                cl.error(Some("file"), format!("cannot read class file {}: {e}", full.display()));
                return None;
            }
        };
        return match crate::classfile::parse_class_file(&text) {
            Ok(def) => Some(ClassConfig { def, truths, file: Some(full) }),
            Err(ConfigError(v)) => {
                let line = cl.lines.key("class", "file");
                for e in v {
                    cl.errors.push(Violation { line, message: format!("class file {}: {e}", full.display()) });
                }
                None
            }
        };
    }
    let def = parse_class_table(cl, &["truths"])?;
    Some(ClassConfig { def, truths, file: None })
}

fn check_class_against(
    def: &ClassDef,
    kind: Kind,
    actions: Option<usize>,
    experts: Option<usize>,
    truths: Option<&[usize]>,
    lines: &LineMap,
    errors: &mut Vec<Violation>,
) {
    if let Some(k) = actions.filter(|&k| k != def.actions()) {
        errors.push(Violation {
            line: lines.key("experiment", "K"),
            message: format!("`K` = {k} but the class has {} actions", def.actions()),
        });
    }
    if let Some(t) = truths {
        let line = lines.key("class", "truths");
        if kind != Kind::SsM {
            errors.push(Violation { line, message: "`truths` only applies to kind ss-m".into() });
        } else if experts.is_some_and(|m| m != t.len()) {
            errors.push(Violation { line, message: format!("`truths` lists {} experts but M = {}", t.len(), experts.unwrap()) });
        }
        match def.size() {
            Some(n) if t.iter().any(|&i| i >= n) => {
                errors.push(Violation { line, message: format!("`truths` entries must be below the class size {n}") })
            }
            None => errors.push(Violation { line, message: "`truths` needs a finite class".into() }),
            _ => {}
        }
    }
    if kind == Kind::SsM && def.size().is_none() {
        errors.push(Violation { line: lines.section("class"), message: "kind ss-m needs a finite class".into() });
    }
    if kind == Kind::Complexity && def.size().is_none() {
        errors.push(Violation { line: lines.section("class"), message: "kind complexity needs a finite class".into() });
    }
}
