//! Model-class documents: explicit finite tables, linear families, or seeded
//! generators. The same keys are accepted inline under `[class]` and at the
//! top level of a standalone class file.

use ail_core::classes::ModelClass;
use ail_core::rng::RngStream;
use toml::{Table, Value};

use crate::config::{ConfigError, LineMap, Section, Violation};
use crate::presets;

/// A model class as written in a configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassDef {
    /// `members[m][x]` score vectors.
    Finite { actions: usize, members: Vec<Vec<Vec<f64>>>, truth: usize, score_bound: f64 },
    /// `f_W(x)[k] = ⟨W_k, features[x]⟩`.
    Linear { actions: usize, features: Vec<Vec<f64>>, weight_bound: f64, truth_weights: Vec<Vec<f64>>, score_bound: f64 },
    /// Uniform random distributions on the simplex, drawn from the run seed.
    Random { actions: usize, size: usize, contexts: usize, truth: usize },
    /// Binary instance whose truth is `confidence`-sure everywhere.
    HardMargin { size: usize, contexts: usize, confidence: f64 },
}

impl ClassDef {
    pub fn actions(&self) -> usize {
        match self {
            ClassDef::Finite { actions, .. } | ClassDef::Linear { actions, .. } | ClassDef::Random { actions, .. } => *actions,
            ClassDef::HardMargin { .. } => 2,
        }
    }

    /// Number of members of a finite class.
    pub fn size(&self) -> Option<usize> {
        match self {
            ClassDef::Finite { members, .. } => Some(members.len()),
            ClassDef::Random { size, .. } | ClassDef::HardMargin { size, .. } => Some(*size),
            ClassDef::Linear { .. } => None,
        }
    }

    /// Materialise the class; generated kinds draw from `rng`'s instance substream.
    pub fn build(&self, rng: &RngStream) -> ail_core::Result<ModelClass> {
        match self {
            ClassDef::Finite { actions, members, truth, score_bound } => {
                ModelClass::finite(*actions, members.clone(), *truth, *score_bound)
            }
            ClassDef::Linear { actions, features, weight_bound, truth_weights, score_bound } => {
                ModelClass::linear(*actions, features.clone(), *weight_bound, truth_weights.clone(), *score_bound)
            }
            ClassDef::Random { actions, size, contexts, truth } => presets::random_class(rng, *actions, *size, *contexts, *truth),
            ClassDef::HardMargin { size, contexts, confidence } => presets::hard_margin_class(rng, *size, *contexts, *confidence),
        }
    }
}

const CLASS_KEYS: [&str; 12] = [
    "kind",
    "K",
    "truth",
    "score_bound",
    "members",
    "features",
    "weight_bound",
    "truth_weights",
    "size",
    "contexts",
    "confidence",
    "file",
];

/// Parse a standalone class file (same keys as `[class]`, no section header).
pub fn parse_class_file(text: &str) -> Result<ClassDef, ConfigError> {
    let table: Table = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        ConfigError(vec![Violation { line, message: format!("syntax error: {}", e.message().trim()) }])
    })?;
    let lines = LineMap::scan(text);
    let mut errors = Vec::new();
    let mut s = Section { name: "", table: Some(&table), lines: &lines, errors: &mut errors };
    if s.has("file") {
        s.error(Some("file"), "a class file cannot reference another class file".into());
    }
    let def = parse_class_table(&mut s, &[]);
    match def {
        Some(d) if errors.is_empty() => Ok(d),
        _ => Err(ConfigError(errors)),
    }
}

fn matrix(v: &Value) -> Vec<Vec<f64>> {
    v.as_array().map(|rows| rows.iter().map(vector).collect()).unwrap_or_default()
}

fn vector(v: &Value) -> Vec<f64> {
    v.as_array()
        .map(|xs| xs.iter().map(|x| x.as_float().or_else(|| x.as_integer().map(|i| i as f64)).unwrap_or(f64::NAN)).collect())
        .unwrap_or_default()
}

/// Parse class keys from `s`; `extra` lists additional keys allowed in the table.
pub(crate) fn parse_class_table(s: &mut Section<'_>, extra: &[&str]) -> Option<ClassDef> {
    let known: Vec<&str> = CLASS_KEYS.iter().chain(extra).copied().collect();
    s.reject_unknown(&known);
    let where_ = if s.name.is_empty() { "class file".to_string() } else { format!("[{}]", s.name) };
    if !s.has("kind") {
        s.error(None, format!("missing required key `kind` in {where_}"));
        return None;
    }
    let kind = s.choice("kind", &[("finite", 0), ("linear", 1), ("random", 2), ("hard-margin", 3)])?;
    let score_bound = s.float("score_bound", "positive", |b| b > 0.0).unwrap_or(1.0);
    let truth = s.usize("truth", 0, usize::MAX).unwrap_or(0);
    let require = |s: &mut Section<'_>, keys: &[&str]| {
        let mut ok = true;
        for k in keys {
            if !s.has(k) {
                s.error(
                    None,
                    format!(
                        "missing required key `{k}` in {where_} (class kind {})",
                        ["finite", "linear", "random", "hard-margin"][kind]
                    ),
                );
                ok = false;
            }
        }
        ok
    };
    let applicable: &[&str] = match kind {
        0 => &["K", "members", "truth", "score_bound"],
        1 => &["K", "features", "weight_bound", "truth_weights", "score_bound"],
        2 => &["K", "size", "contexts", "truth"],
        _ => &["K", "size", "contexts", "confidence"],
    };
    for k in
        ["K", "truth", "score_bound", "members", "features", "weight_bound", "truth_weights", "size", "contexts", "confidence"]
    {
        if s.has(k) && !applicable.contains(&k) {
            s.error(
                Some(k),
                format!("`{k}` does not apply to class kind {}", ["finite", "linear", "random", "hard-margin"][kind]),
            );
        }
    }
    match kind {
        0 => {
            let ok = require(s, &["K", "members"]);
            let k = s.usize("K", 1, 1 << 16);
            let members = s.nested("members", 3).map(|v| v.as_array().unwrap().iter().map(matrix).collect::<Vec<_>>());
            let (k, members) = (k?, members?);
            if !ok {
                return None;
            }
            let mut bad = None;
            if members.is_empty() {
                bad = Some("`members` must list at least one member".to_string());
            } else if truth >= members.len() {
                bad = Some(format!("`truth` = {truth} but the class has {} members", members.len()));
            } else {
                let n = members[0].len();
                for (m, table) in members.iter().enumerate() {
                    if table.len() != n || n == 0 {
                        bad = Some(format!("member {m} lists {} contexts, expected {n} (nonzero)", table.len()));
                        break;
                    }
                    if let Some(x) = table.iter().position(|v| v.len() != k) {
                        bad = Some(format!("member {m} context {x} has {} scores, expected K = {k}", table[x].len()));
                        break;
                    }
                }
            }
            if let Some(msg) = bad {
                s.error(Some("members"), msg);
                return None;
            }
            Some(ClassDef::Finite { actions: k, members, truth, score_bound })
        }
        1 => {
            let ok = require(s, &["K", "features", "weight_bound", "truth_weights"]);
            let k = s.usize("K", 1, 1 << 16);
            let features = s.nested("features", 2).map(|v| matrix(&v));
            let weight_bound = s.float("weight_bound", "positive", |w| w > 0.0);
            let truth_weights = s.nested("truth_weights", 2).map(|v| matrix(&v));
            if !ok {
                return None;
            }
            let (k, features, weight_bound, truth_weights) = (k?, features?, weight_bound?, truth_weights?);
            if truth_weights.len() != k {
                s.error(Some("truth_weights"), format!("`truth_weights` needs K = {k} rows, found {}", truth_weights.len()));
                return None;
            }
            Some(ClassDef::Linear { actions: k, features, weight_bound, truth_weights, score_bound })
        }
        2 => {
            let ok = require(s, &["K", "size", "contexts"]);
            let k = s.usize("K", 1, 1 << 10);
            let size = s.usize("size", 1, 1 << 16);
            let contexts = s.usize("contexts", 1, 1 << 16);
            if !ok {
                return None;
            }
            let (actions, size, contexts) = (k?, size?, contexts?);
            if truth >= size {
                s.error(Some("truth"), format!("`truth` = {truth} but the class has {size} members"));
                return None;
            }
            Some(ClassDef::Random { actions, size, contexts, truth })
        }
        _ => {
            let ok = require(s, &["size", "contexts"]);
            if s.has("K") && s.usize("K", 2, 2).is_none() {
                return None;
            }
            let size = s.usize("size", 2, 1 << 16);
            let contexts = s.usize("contexts", 1, 1 << 16);
            let confidence = s.float("confidence", "in (0.5, 1]", |c| c > 0.5 && c <= 1.0).unwrap_or(0.95);
            if !ok {
                return None;
            }
            Some(ClassDef::HardMargin { size: size?, contexts: contexts?, confidence })
        }
    }
}
