//! Experiment execution and artifact emission.
//!
//! A run is computed fully in memory as a [`Bundle`] of named text files and
//! only then written out, so the bytes depend on nothing but the config and
//! the seed. Summaries are derived from the same rows the CSVs print.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use ail_core::bandit::{multiquery_bandit_run, sage_bandit_run, BanditOptions};
use ail_core::classes::{
    bivariate_eluder, disagreement_estimate, eluder_dimension, normed_star_number, star_number, ComplexityQuery, ModelClass,
    SearchCap, WidthMode,
};
use ail_core::imitation::{
    behavior_cloning, noisy_expert_demos, ravioli_m_run, ravioli_run, recovers_comparator, tree_mdp, BalanceChain, EpisodicEnv,
    ILRunLog,
};
use ail_core::link::{LinkKind, LinkSpec};
use ail_core::numfmt::g17;
use ail_core::oracles::BudgetFlavor;
use ail_core::rng::RngStream;
use ail_core::selsamp::{dis_run, sage_run, sagem_run, Aggregator, QueryRule, RunLog, SageOptions};
use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;

use crate::config::{AggChoice, EnvChoice, ExperimentConfig, Kind, LinkChoice, RuleChoice};
use crate::presets::{budget, uniform_contexts};
use crate::svg::{line_chart, Series};

pub const RUNLOG_HEADER: &str = "t,context,action,queried,label,width,truth_margin,inst_regret,cum_regret,cum_queries";
pub const BANDIT_EXTRA: &str = ",width_w,candidates,xi";
pub const IL_HEADER: &str = "t,h,state,action,queried,label,width,inst_reward,comparator_reward,cum_regret,cum_queries";
pub const SEPARATION_HEADER: &str = "seed,il_recovered,bc_recovered,il_queries,bc_coverage";

/// Named output files, in emission order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Bundle {
    pub files: Vec<(String, String)>,
}

impl Bundle {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }

    fn push(&mut self, name: impl Into<String>, content: String) {
        self.files.push((name.into(), content));
    }

    /// Write every file below `dir`, creating directories as needed.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        for (name, content) in &self.files {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)
                    .with_context(|| format!("cannot create output directory {}", parent.display()))?;
            }
            std::fs::write(&path, content).with_context(|| format!("cannot write {}", path.display()))?;
        }
        Ok(())
    }
}

/// Worker pool capped by `AIL_THREADS` when set.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var("AIL_THREADS").ok().and_then(|s| s.trim().parse::<usize>().ok()).filter(|&n| n > 0) {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| anyhow!("cannot start worker pool: {e}"))
}

/// Run `cfg` and collect its artifacts. With `replicates > 1` each seed
/// `seed, seed+1, …` is an independent cell written under `seed-<s>/`
/// (`bc-vs-il` instead pairs all seeds in one table).
pub fn run_experiment(cfg: &ExperimentConfig, progress: &(dyn Fn(&str) + Sync)) -> Result<Bundle> {
    if cfg.kind == Kind::BcVsIl {
        return separation(cfg, progress);
    }
    let seeds: Vec<u64> = (0..cfg.replicates as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let cells: Vec<Result<Bundle>> = worker_pool()?.install(|| {
        seeds
            .par_iter()
            .map(|&s| {
                progress(&format!("{} seed {s}: running", cfg.kind));
                let b = run_cell(cfg, s).with_context(|| format!("kind {} seed {s}", cfg.kind));
                progress(&format!("{} seed {s}: done", cfg.kind));
                b
            })
            .collect()
    });
    let mut out = Bundle::default();
    for (s, cell) in seeds.iter().zip(cells) {
        let cell = cell?;
        for (name, content) in cell.files {
            let name = if seeds.len() > 1 { format!("seed-{s}/{name}") } else { name };
            out.push(name, content);
        }
    }
    Ok(out)
}

/// The link of the run, with optional λ/γ overrides.
pub fn link_for(cfg: &ExperimentConfig, class: &ModelClass) -> Result<LinkSpec> {
    let o = &cfg.oracle;
    Ok(match o.link {
        LinkChoice::Identity => LinkSpec::identity(),
        LinkChoice::Softmax => match (o.lambda, o.gamma) {
            (None, None) => LinkSpec::softmax(class.score_bound(), class.actions())?,
            (l, g) => {
                let auto = LinkSpec::softmax(class.score_bound(), class.actions())?;
                LinkSpec::with_moduli(LinkKind::Softmax, l.unwrap_or(auto.lambda), g.unwrap_or(auto.gamma), class.score_bound())?
            }
        },
    })
}

/// Selective-sampling knobs; `multi` selects the multi-expert default rule.
pub fn sage_options(cfg: &ExperimentConfig, multi: bool) -> SageOptions {
    let o = &cfg.oracle;
    let rule = match o.rule {
        Some(RuleChoice::MarginWidth) => QueryRule::MarginWidth,
        Some(RuleChoice::Que) => QueryRule::Que { resolution: o.resolution },
        Some(RuleChoice::Always) => QueryRule::Always,
        Some(RuleChoice::Never) => QueryRule::Never,
        None if multi => QueryRule::Que { resolution: o.resolution },
        None => QueryRule::MarginWidth,
    };
    SageOptions {
        rule,
        width_mode: if o.reference_widths { WidthMode::Reference } else { WidthMode::Cached },
        learning_rate: o.learning_rate,
        eps_grid: cfg.eps_grid.clone(),
    }
}

pub fn aggregator_for(cfg: &ExperimentConfig, experts: usize) -> Aggregator {
    let mut a = match cfg.oracle.aggregator {
        AggChoice::RandomMix => Aggregator::random_mix(experts),
        AggChoice::Majority => Aggregator::majority(),
        AggChoice::ConfidentMajority => Aggregator::confident_majority(cfg.oracle.rho),
    };
    if let Some(eta) = cfg.oracle.lipschitz {
        a.eta = Some(eta);
    }
    a
}

fn class_of(cfg: &ExperimentConfig, rng: &RngStream) -> Result<Arc<ModelClass>> {
    let def = &cfg.class.as_ref().ok_or_else(|| anyhow!("kind {} needs a [class]", cfg.kind))?.def;
    Ok(Arc::new(def.build(rng).context("building the model class")?))
}

fn rounds(cfg: &ExperimentConfig) -> Result<usize> {
    cfg.rounds.ok_or_else(|| anyhow!("kind {} needs T", cfg.kind))
}

fn horizon(cfg: &ExperimentConfig) -> Result<usize> {
    cfg.horizon.ok_or_else(|| anyhow!("kind {} needs H", cfg.kind))
}

fn run_cell(cfg: &ExperimentConfig, seed: u64) -> Result<Bundle> {
    let rng = RngStream::new(seed);
    match cfg.kind {
        Kind::Ss | Kind::SsDis | Kind::SsM | Kind::Bandit | Kind::Bandit2q => {
            let class = class_of(cfg, &rng)?;
            let link = link_for(cfg, &class)?;
            let t = rounds(cfg)?;
            let contexts = uniform_contexts(&rng, class.num_contexts(), t);
            let lr = cfg.oracle.learning_rate;
            let log = match cfg.kind {
                Kind::Ss | Kind::SsDis => {
                    let psi = budget(&class, &link, lr, BudgetFlavor::FullFeedback, t, cfg.delta)?;
                    let opts = sage_options(cfg, false);
                    if cfg.kind == Kind::Ss {
                        sage_run(&class, &link, psi, &contexts, &rng, &opts)?
                    } else {
                        dis_run(&class, &link, psi, &contexts, &rng, &opts)?
                    }
                }
                Kind::SsM => {
                    let m = cfg.experts.ok_or_else(|| anyhow!("kind ss-m needs M"))?;
                    let n = class.num_members().ok_or_else(|| anyhow!("kind ss-m needs a finite class"))?;
                    let base = class.truth_index().unwrap_or(0);
                    let truths = cfg
                        .class
                        .as_ref()
                        .and_then(|c| c.truths.clone())
                        .unwrap_or_else(|| (0..m).map(|i| (base + i) % n).collect());
                    let classes =
                        truths.iter().map(|&i| class.with_truth(i).map(Arc::new)).collect::<ail_core::Result<Vec<_>>>()?;
                    let psis = classes
                        .iter()
                        .map(|c| budget(c, &link, lr, BudgetFlavor::PerExpert { experts: m }, t, cfg.delta))
                        .collect::<ail_core::Result<Vec<_>>>()?;
                    sagem_run(&classes, &link, &psis, &aggregator_for(cfg, m), &contexts, &rng, &sage_options(cfg, true))?
                }
                _ => {
                    let opts = BanditOptions {
                        learning_rate: lr,
                        xi_threshold: cfg.oracle.xi_threshold,
                        width_mode: if cfg.oracle.reference_widths { WidthMode::Reference } else { WidthMode::Cached },
                    };
                    if cfg.kind == Kind::Bandit {
                        let psi = budget(&class, &link, lr, BudgetFlavor::Bandit, t, cfg.delta)?;
                        sage_bandit_run(&class, &link, psi, &contexts, &rng, &opts)?
                    } else {
                        let psi = budget(&class, &link, lr, BudgetFlavor::TwoQuery { actions: class.actions() }, t, cfg.delta)?;
                        multiquery_bandit_run(&class, &link, psi, &contexts, &rng, &opts)?
                    }
                }
            };
            Ok(runlog_bundle(cfg, seed, &log))
        }
        Kind::Il | Kind::IlM => {
            let (log, env_name) = il_run(cfg, &rng)?;
            Ok(il_bundle(cfg, seed, &log, env_name))
        }
        Kind::Complexity => complexity(cfg, &rng),
        Kind::BcVsIl => unreachable!("handled by separation"),
    }
}

fn il_run(cfg: &ExperimentConfig, rng: &RngStream) -> Result<(ILRunLog, &'static str)> {
    let h = horizon(cfg)?;
    let t = rounds(cfg)?;
    let lr = cfg.oracle.learning_rate;
    let seed = rng.seed();
    let (env, classes, name): (Box<dyn EpisodicEnv>, Vec<Vec<Arc<ModelClass>>>, _) = match cfg.env.kind {
        EnvChoice::Tree => {
            let mut env = tree_mdp(h, seed)?;
            env.sampled_rewards = cfg.env.sampled_rewards;
            let classes = env.classes()?.into_iter().map(|c| vec![c]).collect();
            (Box::new(env), classes, "tree")
        }
        EnvChoice::BalanceChain => {
            let env = BalanceChain::new(cfg.env.region_len, h, seed)?;
            let experts = env.expert_classes(cfg.env.members)?;
            let per_step = if cfg.kind == Kind::IlM { experts } else { vec![experts[cfg.env.expert].clone()] };
            (Box::new(env), vec![per_step; h], "balance-chain")
        }
    };
    let link = link_for(cfg, &classes[0][0])?;
    if cfg.kind == Kind::Il {
        let flat: Vec<Arc<ModelClass>> = classes.into_iter().map(|mut v| v.remove(0)).collect();
        let psis = flat
            .iter()
            .map(|c| budget(c, &link, lr, BudgetFlavor::PerStep { horizon: h }, t, cfg.delta))
            .collect::<ail_core::Result<Vec<_>>>()?;
        Ok((ravioli_run(&flat, &link, &psis, env.as_ref(), t, rng, &sage_options(cfg, false))?, name))
    } else {
        let m = classes[0].len();
        let psis = classes
            .iter()
            .map(|row| {
                row.iter()
                    .map(|c| budget(c, &link, lr, BudgetFlavor::PerExpertStep { experts: m, horizon: h }, t, cfg.delta))
                    .collect()
            })
            .collect::<ail_core::Result<Vec<Vec<f64>>>>()?;
        let agg = aggregator_for(cfg, m);
        Ok((ravioli_m_run(&classes, &link, &psis, &agg, env.as_ref(), t, rng, &sage_options(cfg, true))?, name))
    }
}

fn list(v: impl IntoIterator<Item = String>) -> String {
    format!("[{}]", v.into_iter().collect::<Vec<_>>().join(", "))
}

fn floats(v: &[f64]) -> String {
    list(v.iter().map(|&x| g17(x)))
}

fn counts(v: &[usize]) -> String {
    list(v.iter().map(ToString::to_string))
}

fn labels(l: &[ail_core::link::ActionLabel]) -> String {
    l.iter().map(|a| a.one_based().to_string()).collect::<Vec<_>>().join(";")
}

/// Accumulates CSV rows in memory.
struct Table(csv::Writer<Vec<u8>>);

impl Table {
    fn new(header: &str) -> Self {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(header.split(',')).expect("in-memory write");
        Self(w)
    }

    fn row(&mut self, fields: &[String]) {
        self.0.write_record(fields).expect("in-memory write");
    }

    fn finish(self) -> String {
        String::from_utf8(self.0.into_inner().expect("in-memory flush")).expect("UTF-8 fields")
    }
}

fn widths(w: &[f64]) -> String {
    w.iter().map(|&x| g17(x)).collect::<Vec<_>>().join(";")
}

/// RunLog CSV plus running totals `(t, cum_regret, cum_queries)`.
pub fn runlog_csv(log: &RunLog) -> (String, Vec<(usize, f64, usize)>) {
    let bandit = log.records.iter().any(|r| r.bandit.is_some());
    let mut table = Table::new(&if bandit { format!("{RUNLOG_HEADER}{BANDIT_EXTRA}") } else { RUNLOG_HEADER.to_string() });
    let (mut reg, mut q) = (0.0, 0usize);
    let mut totals = Vec::with_capacity(log.records.len());
    for r in &log.records {
        reg += r.inst_regret;
        q += r.queried as usize;
        let mut fields = vec![
            r.t.to_string(),
            r.context.to_string(),
            r.action.one_based().to_string(),
            (r.queried as u8).to_string(),
            labels(&r.labels),
            widths(&r.widths),
            g17(r.truth_margin),
            g17(r.inst_regret),
            g17(reg),
            q.to_string(),
        ];
        if bandit {
            let b = r.bandit.expect("bandit rows");
            fields.extend([g17(b.width_w), b.candidates.to_string(), (b.xi as u8).to_string()]);
        }
        table.row(&fields);
        totals.push((r.t, reg, q));
    }
    (table.finish(), totals)
}

fn header(cfg: &ExperimentConfig, seed: u64) -> String {
    let mut s = format!("kind = \"{}\"\nseed = {seed}\n", cfg.kind);
    if let Some(t) = cfg.rounds {
        let _ = writeln!(s, "T = {t}");
    }
    if let Some(h) = cfg.horizon {
        let _ = writeln!(s, "H = {h}");
    }
    let _ = writeln!(s, "delta = {}", g17(cfg.delta));
    s
}

fn charts(cfg: &ExperimentConfig, out: &mut Bundle, x_label: &str, totals: &[(usize, f64, usize)]) {
    if !cfg.svg {
        return;
    }
    let regret = Series { name: "cumulative regret", points: totals.iter().map(|&(t, r, _)| (t as f64, r)).collect() };
    let queries = Series { name: "cumulative queries", points: totals.iter().map(|&(t, _, q)| (t as f64, q as f64)).collect() };
    out.push("regret.svg", line_chart(&format!("{}: cumulative regret", cfg.kind), x_label, "regret", &[regret]));
    out.push("queries.svg", line_chart(&format!("{}: cumulative queries", cfg.kind), x_label, "queries", &[queries]));
}

fn runlog_bundle(cfg: &ExperimentConfig, seed: u64, log: &RunLog) -> Bundle {
    let (csv, totals) = runlog_csv(log);
    let (reg, q) = totals.last().map_or((0.0, 0), |&(_, r, q)| (r, q));
    let mut summary = header(cfg, seed);
    let _ = writeln!(summary, "Reg_T = {}", g17(reg));
    let _ = writeln!(summary, "N_T = {q}");
    let _ = writeln!(summary, "eps_grid = {}", floats(&log.eps_grid));
    let _ = writeln!(summary, "T_eps = {}", counts(&log.t_eps));
    let _ = writeln!(summary, "psi = {}", floats(&log.psi));
    let _ = writeln!(summary, "anomalies = {}", log.anomalies.len());
    let mut out = Bundle::default();
    out.push("runlog.csv", csv);
    out.push("summary.toml", summary);
    charts(cfg, &mut out, "round t", &totals);
    out
}

/// ILRunLog CSV plus per-episode running totals.
pub fn il_csv(log: &ILRunLog) -> (String, Vec<(usize, f64, usize)>) {
    let mut table = Table::new(IL_HEADER);
    let (mut reg, mut q) = (0.0, 0usize);
    let mut totals: Vec<(usize, f64, usize)> = Vec::new();
    for s in &log.steps {
        let r = &s.record;
        reg += s.comparator_reward - s.inst_reward;
        q += r.queried as usize;
        table.row(&[
            r.t.to_string(),
            s.h.to_string(),
            r.context.to_string(),
            r.action.one_based().to_string(),
            (r.queried as u8).to_string(),
            labels(&r.labels),
            widths(&r.widths),
            g17(s.inst_reward),
            g17(s.comparator_reward),
            g17(reg),
            q.to_string(),
        ]);
        match totals.last_mut() {
            Some(last) if last.0 == r.t => *last = (r.t, reg, q),
            _ => totals.push((r.t, reg, q)),
        }
    }
    (table.finish(), totals)
}

fn il_bundle(cfg: &ExperimentConfig, seed: u64, log: &ILRunLog, env: &str) -> Bundle {
    let (csv, totals) = il_csv(log);
    let (reg, q) = totals.last().map_or((0.0, 0), |&(_, r, q)| (r, q));
    let mut summary = header(cfg, seed);
    let _ = writeln!(summary, "env = \"{env}\"");
    let _ = writeln!(summary, "Reg_T = {}", g17(reg));
    let _ = writeln!(summary, "N_T = {q}");
    let _ = writeln!(summary, "eps_grid = {}", floats(&log.eps_grid));
    let _ = writeln!(summary, "T_eps = {}", list(log.t_eps.iter().map(|v| counts(v))));
    let _ = writeln!(summary, "psi = {}", list(log.psi.iter().map(|v| floats(v))));
    let _ = writeln!(summary, "anomalies = {}", log.anomalies.iter().map(Vec::len).sum::<usize>());
    let _ = writeln!(summary, "final_path_match = {}", log.final_path_match);
    let mut out = Bundle::default();
    out.push("il_runlog.csv", csv);
    out.push("summary.toml", summary);
    charts(cfg, &mut out, "episode t", &totals);
    out
}

/// Outcome of one `bc-vs-il` seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeparationCell {
    pub seed: u64,
    pub il_recovered: bool,
    pub bc_recovered: bool,
    pub il_queries: usize,
    pub bc_coverage: usize,
}

/// RAVIOLI for `episodes` episodes against behaviour cloning on `demos`
/// noisy-expert demonstrations, both on the depth-`h` tree built from `seed`.
///
/// The interactive learner recovers `π*` when its final greedy policy matches
/// the comparator path; BC recovers it when its lookup table does.
pub fn separation_cell(
    h: usize,
    episodes: usize,
    demos: usize,
    seed: u64,
    delta: f64,
    opts: &SageOptions,
    learning_rate: Option<f64>,
) -> Result<SeparationCell> {
    let rng = RngStream::new(seed);
    let env = tree_mdp(h, seed)?;
    let classes = env.classes()?;
    let link = LinkSpec::identity();
    let psis = classes
        .iter()
        .map(|c| budget(c, &link, learning_rate, BudgetFlavor::PerStep { horizon: h }, episodes.max(3), delta))
        .collect::<ail_core::Result<Vec<_>>>()?;
    let log = ravioli_run(&classes, &link, &psis, &env, episodes, &rng, opts)?;
    let data = noisy_expert_demos(&env, &classes, &link, demos, &rng.child(1))?;
    let policy = behavior_cloning(&data, h, 2)?;
    let bc_recovered = recovers_comparator(&env, &classes, &link, episodes + 1, &rng, |hh, x| policy.act(hh, x));
    Ok(SeparationCell {
        seed,
        il_recovered: log.final_path_match,
        bc_recovered,
        il_queries: log.queries,
        bc_coverage: policy.coverage(),
    })
}

/// Recovery rate of each side.
pub fn recovery_rates(cells: &[SeparationCell]) -> (f64, f64) {
    let n = cells.len().max(1) as f64;
    let il = cells.iter().filter(|c| c.il_recovered).count() as f64 / n;
    let bc = cells.iter().filter(|c| c.bc_recovered).count() as f64 / n;
    (il, bc)
}

fn separation(cfg: &ExperimentConfig, progress: &(dyn Fn(&str) + Sync)) -> Result<Bundle> {
    let h = horizon(cfg)?;
    let t = rounds(cfg)?;
    let demos = cfg.env.demos.unwrap_or(t);
    let opts = sage_options(cfg, false);
    let seeds: Vec<u64> = (0..cfg.replicates as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let cells: Vec<Result<SeparationCell>> = worker_pool()?.install(|| {
        seeds
            .par_iter()
            .map(|&s| {
                let c = separation_cell(h, t, demos, s, cfg.delta, &opts, cfg.oracle.learning_rate)
                    .with_context(|| format!("bc-vs-il seed {s}"));
                progress(&format!("bc-vs-il seed {s}: done"));
                c
            })
            .collect()
    });
    let cells = cells.into_iter().collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(SEPARATION_HEADER);
    for c in &cells {
        table.row(&[
            c.seed.to_string(),
            (c.il_recovered as u8).to_string(),
            (c.bc_recovered as u8).to_string(),
            c.il_queries.to_string(),
            c.bc_coverage.to_string(),
        ]);
    }
    let (il, bc) = recovery_rates(&cells);
    let mut summary = header(cfg, cfg.seed);
    let _ = writeln!(summary, "seeds = {}", cells.len());
    let _ = writeln!(summary, "demos = {demos}");
    let _ = writeln!(summary, "il_recovery_rate = {}", g17(il));
    let _ = writeln!(summary, "bc_recovery_rate = {}", g17(bc));
    let _ = writeln!(summary, "il_queries = {}", cells.iter().map(|c| c.il_queries).sum::<usize>());
    let mut out = Bundle::default();
    out.push("separation.csv", table.finish());
    out.push("summary.toml", summary);
    Ok(out)
}

/// Complexity measures of the configured class around its truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexityReport {
    pub eluder: usize,
    pub bivariate_eluder: usize,
    pub normed_star: usize,
    /// Scalar classes only.
    pub star: Option<usize>,
    /// Under the uniform context distribution.
    pub disagreement: f64,
}

pub fn complexity_report(class: &ModelClass, beta: f64, zeta: f64, eps0: f64, beta0: f64) -> Result<ComplexityReport> {
    let truth = class.truth_index().ok_or_else(|| anyhow!("complexity measures need a finite class"))?;
    let cap = SearchCap::default();
    let q = ComplexityQuery { beta, zeta, truth };
    let mu = vec![1.0 / class.num_contexts() as f64; class.num_contexts()];
    Ok(ComplexityReport {
        eluder: eluder_dimension(class, &q, &cap)?,
        bivariate_eluder: bivariate_eluder(class, &q, &cap)?,
        normed_star: normed_star_number(class, &q, &cap)?,
        star: if class.actions() == 1 && beta < zeta / 2.0 { Some(star_number(class, &q, &cap)?) } else { None },
        disagreement: disagreement_estimate(class, truth, eps0, beta0, &mu)?,
    })
}

fn complexity(cfg: &ExperimentConfig, rng: &RngStream) -> Result<Bundle> {
    let class = class_of(cfg, rng)?;
    let r = complexity_report(&class, cfg.beta, cfg.zeta, cfg.eps0, cfg.beta0)?;
    let mut s = format!("kind = \"complexity\"\nseed = {}\n", rng.seed());
    let _ = writeln!(s, "members = {}", class.num_members().unwrap_or(0));
    let _ = writeln!(s, "contexts = {}", class.num_contexts());
    let _ = writeln!(s, "K = {}", class.actions());
    let _ =
        writeln!(s, "beta = {}\nzeta = {}\neps0 = {}\nbeta0 = {}", g17(cfg.beta), g17(cfg.zeta), g17(cfg.eps0), g17(cfg.beta0));
    let _ = writeln!(s, "eluder = {}", r.eluder);
    let _ = writeln!(s, "bivariate_eluder = {}", r.bivariate_eluder);
    let _ = writeln!(s, "normed_star = {}", r.normed_star);
    if let Some(star) = r.star {
        let _ = writeln!(s, "star = {star}");
    }
    let _ = writeln!(s, "disagreement = {}", g17(r.disagreement));
    let mut out = Bundle::default();
    out.push("summary.toml", s);
    Ok(out)
}
