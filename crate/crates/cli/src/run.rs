use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rqe::envlib::{
    cliff_world, default_parameters, matching_pennies, random_markov_game, random_matrix_game,
    BenchmarkId, CliffOverrides, CliffVariant, MarkovDims,
};
use rqe::estimation::{run_experiment, ExperimentConfig};
use rqe::formats::{self, Game};
use rqe::markov::{
    backward_induction, evaluate_policy, markov_rqe_gap, stage_tractability, MarkovParameters,
    RecursionMode,
};
use rqe::solver::{Initialization, TractabilityRecord, UpdateRule};
use rqe::{Error, MatrixGameSpec, RationalitySpec, RiskMode, RiskSpec, SolverConfig};

use crate::args::*;
use crate::manifest::RunManifest;

/// Outcome of a command that finished without an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    GapAboveTolerance,
    Intractable,
}

pub type Result<T> = std::result::Result<T, Error>;

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}

fn per_player(v: &[f64], n: usize, name: &str) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; n]),
        k if k == n => Ok(v.to_vec()),
        k => invalid(format!("--{name} needs 1 or {n} values, got {k}")),
    }
}

fn risk_of(kind: RiskKind, w: f64) -> RiskSpec {
    match kind {
        RiskKind::Kl => RiskSpec::kl(w),
        RiskKind::Rkl => RiskSpec::reverse_kl(w),
        RiskKind::Tv => RiskSpec::total_variation(w),
    }
}

fn kind_of(r: &RiskSpec) -> (RiskKind, f64) {
    match *r {
        RiskSpec::Kl { tau } => (RiskKind::Kl, tau),
        RiskSpec::ReverseKl { tau } => (RiskKind::Rkl, tau),
        RiskSpec::TotalVariation { lambda } => (RiskKind::Tv, lambda),
    }
}

fn reg_of(kind: RegKind, eps: f64) -> RationalitySpec {
    match kind {
        RegKind::Logbarrier => RationalitySpec::log_barrier(eps),
        RegKind::Negentropy => RationalitySpec::neg_entropy(eps),
    }
}

fn reg_kind(r: &RationalitySpec) -> RegKind {
    match r.kind {
        rqe::Regularizer::LogBarrier => RegKind::Logbarrier,
        rqe::Regularizer::NegEntropy => RegKind::Negentropy,
    }
}

/// Applies the flags that were given to a list of risk specs.
fn override_risk(
    base: &[RiskSpec],
    kind: Option<RiskKind>,
    w: Option<&Vec<f64>>,
    name: &str,
) -> Result<Vec<RiskSpec>> {
    let n = base.len();
    let ws = match w {
        Some(w) => per_player(w, n, name)?,
        None => base.iter().map(|r| kind_of(r).1).collect(),
    };
    Ok(base
        .iter()
        .zip(ws)
        .map(|(r, w)| risk_of(kind.unwrap_or(kind_of(r).0), w))
        .collect())
}

fn override_rationality(base: &[RationalitySpec], o: &GameOpts) -> Result<Vec<RationalitySpec>> {
    let n = base.len();
    let eps = match &o.epsilon {
        Some(e) => per_player(e, n, "epsilon")?,
        None => base.iter().map(|r| r.epsilon).collect(),
    };
    Ok(base
        .iter()
        .zip(eps)
        .map(|(r, e)| reg_of(o.reg.unwrap_or(reg_kind(r)), e))
        .collect())
}

fn override_matrix(game: MatrixGameSpec, o: &GameOpts) -> Result<MatrixGameSpec> {
    let risk = override_risk(game.risk(), o.risk, o.tau.as_ref(), "tau")?;
    let rat = override_rationality(game.rationality(), o)?;
    let mode = match o.risk_mode {
        Some(ModeKind::Aggregate) => RiskMode::Aggregate,
        Some(ModeKind::ActionDependent) => RiskMode::ActionDependent,
        None => game.risk_mode(),
    };
    Ok(game.with_parameters(risk, rat)?.with_risk_mode(mode))
}

fn override_markov_params(p: &MarkovParameters, o: &GameOpts) -> Result<MarkovParameters> {
    let pol_risk = override_risk(&p.pol_risk, o.risk, o.tau.as_ref(), "tau")?;
    // the environment follows the policy risk aversion unless set on its own
    let env_w = o.env_tau.as_ref().or(o.tau.as_ref());
    let env_risk = override_risk(&p.env_risk, o.env_risk, env_w, "env-tau")?;
    Ok(MarkovParameters {
        env_risk,
        pol_risk,
        rationality: override_rationality(&p.rationality, o)?,
        risk_mode: match o.risk_mode {
            Some(ModeKind::Aggregate) => RiskMode::Aggregate,
            Some(ModeKind::ActionDependent) => RiskMode::ActionDependent,
            None => p.risk_mode,
        },
        recursion_mode: match o.recursion_mode {
            Some(RecursionKind::Utility) => RecursionMode::UtilityConsistent,
            Some(RecursionKind::Literal) => RecursionMode::PaperLiteral,
            None => p.recursion_mode,
        },
    })
}

fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidInput(format!("--grid expects WxH, got {s:?}"));
    let (w, h) = s
        .to_ascii_lowercase()
        .split_once('x')
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .ok_or_else(bad)?;
    Ok((
        w.trim().parse().map_err(|_| bad())?,
        h.trim().parse().map_err(|_| bad())?,
    ))
}

/// Default risk and rationality of the built-in games other than the cliff
/// walks.
fn base_params(n: usize) -> (Vec<RiskSpec>, Vec<RationalitySpec>) {
    (
        vec![RiskSpec::kl(1.0); n],
        vec![RationalitySpec::log_barrier(1.0); n],
    )
}

fn bench_game(id: &BenchmarkId, o: &GameOpts) -> Result<Game> {
    Ok(match id {
        BenchmarkId::Ghp(_) | BenchmarkId::Sc(_) => {
            let (r, e) = base_params(2);
            let g = matching_pennies(id, [r[0], r[1]], [e[0], e[1]])?;
            Game::Matrix(override_matrix(g, o)?)
        }
        BenchmarkId::RandomMatrix => {
            let actions = o.actions.clone().unwrap_or_else(|| vec![3, 3]);
            let (r, e) = base_params(actions.len());
            let g = random_matrix_game(&actions, o.game_seed.unwrap_or(0), r, e)?;
            Game::Matrix(override_matrix(g, o)?)
        }
        BenchmarkId::RandomMarkov => {
            let dims = MarkovDims {
                states: o.states.unwrap_or(3),
                action_counts: o.actions.clone().unwrap_or_else(|| vec![2, 2]),
                horizon: o.horizon.unwrap_or(3),
            };
            let n = dims.action_counts.len();
            let base = MarkovParameters::uniform(
                n,
                RiskSpec::total_variation(0.5),
                RiskSpec::kl(1.0),
                RationalitySpec::log_barrier(1.0),
            );
            let params = random_markov_params(&base, o)?;
            Game::Markov(random_markov_game(&dims, o.game_seed.unwrap_or(0), params)?)
        }
        BenchmarkId::CliffKl | BenchmarkId::CliffL1 => {
            let variant = if *id == BenchmarkId::CliffKl {
                CliffVariant::Kl
            } else {
                CliffVariant::L1
            };
            let (width, height) = match &o.grid {
                Some(g) => parse_grid(g).map(|(w, h)| (Some(w), Some(h)))?,
                None => (None, None),
            };
            let params = override_markov_params(&default_parameters(variant), o)?;
            let overrides = CliffOverrides {
                width,
                height,
                horizon: o.horizon,
                params: Some(params),
                ..Default::default()
            };
            Game::Markov(cliff_world(variant, &overrides)?.1)
        }
    })
}

fn random_markov_params(base: &MarkovParameters, o: &GameOpts) -> Result<MarkovParameters> {
    // --tau alone does not move the total-variation weight of this game
    let mut o = o.clone();
    if o.env_tau.is_none() && o.env_risk.is_none() {
        o.env_tau = Some(base.env_risk.iter().map(|r| kind_of(r).1).collect());
    }
    override_markov_params(base, &o)
}

/// Loads `bench:<name>` or a game file and applies the parameter flags.
pub fn load_game(spec: &str, o: &GameOpts) -> Result<Game> {
    if spec.starts_with("bench:") {
        return bench_game(&spec.parse()?, o);
    }
    match formats::read_game(Path::new(spec))? {
        Game::Matrix(g) => Ok(Game::Matrix(override_matrix(g, o)?)),
        Game::Markov(g) => {
            let p = override_markov_params(g.params(), o)?;
            Ok(Game::Markov(g.with_params(p)?))
        }
    }
}

pub fn solver_config(o: &SolverOpts) -> Result<SolverConfig> {
    let mut cfg = match &o.config {
        Some(p) => formats::parse_versioned::<SolverConfig>(
            &fs::read_to_string(p)?,
            &p.display().to_string(),
        )?,
        None => SolverConfig::default(),
    };
    if let Some(v) = o.iterations {
        cfg.learner.iterations = v;
    }
    if let Some(v) = o.step {
        cfg.learner.step_size = v;
    }
    if let Some(v) = o.seed {
        cfg.learner.seed = v;
    }
    if let Some(u) = o.update {
        cfg.learner.update = match u {
            UpdateKind::Proximal => UpdateRule::Proximal,
            UpdateKind::Projected => UpdateRule::Projected,
        };
    }
    if let Some(i) = o.init {
        cfg.learner.init = match i {
            InitKind::Uniform => Initialization::Uniform,
            InitKind::Random => Initialization::Random,
        };
    }
    Ok(cfg)
}

/// Output directory: `--out`, else `RQE_OUT_DIR`, else `rqe-out`.
pub fn output_dir(flag: Option<&PathBuf>) -> PathBuf {
    flag.cloned()
        .or_else(|| std::env::var_os("RQE_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("rqe-out"))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn csv_file(dir: &Path, name: &str, f: impl FnOnce(fs::File) -> Result<()>) -> Result<()> {
    f(fs::File::create(dir.join(name))?)
}

fn print_tractability(t: &TractabilityRecord) {
    println!(
        "tractability: {} ({:?})",
        if t.holds { "holds" } else { "fails" },
        t.condition
    );
    let margins: Vec<String> = t.margins.iter().map(|m| format!("{m:.6}")).collect();
    println!("margins: [{}]", margins.join(", "));
    if let Some(note) = &t.note {
        println!("note: {note}");
    }
}

#[derive(Serialize)]
struct MatrixReport<'a> {
    kind: &'static str,
    game: &'a str,
    gap_tolerance: f64,
    within_tolerance: bool,
    #[serde(flatten)]
    report: &'a rqe::SolveReport,
}

pub fn solve_matrix(a: &SolveArgs, manifest: &RunManifest) -> Result<Status> {
    let Game::Matrix(game) = load_game(&a.game, &a.game_opts)? else {
        return invalid(format!("{} is a Markov game; use solve-markov", a.game));
    };
    let cfg = solver_config(&a.solver)?;
    let tract = rqe::solver::tractability_record(&game);
    if a.strict && !tract.holds {
        print_tractability(&tract);
        return Ok(Status::Intractable);
    }
    let dir = manifest.prepare()?;
    let mut report = rqe::solver::solve_rqe_with(&game, &cfg, tract)?;
    report.trajectory = None;
    let ok = report.max_gap <= a.gap_tol;
    let doc = MatrixReport {
        kind: "matrix_solve",
        game: &a.game,
        gap_tolerance: a.gap_tol,
        within_tolerance: ok,
        report: &report,
    };
    write(&dir, "report.json", &formats::to_versioned_json(&doc)?)?;
    csv_file(&dir, "strategy.csv", |f| {
        formats::write_strategy_csv(f, &report.strategy)
    })?;
    for (i, s) in report.strategy.iter().enumerate() {
        let p: Vec<String> = s.probs().iter().map(|p| format!("{p:.6}")).collect();
        println!("player {i}: [{}]  gap {:.3e}", p.join(", "), report.gaps[i]);
    }
    println!(
        "max gap {:.3e} (tolerance {:.1e})",
        report.max_gap, a.gap_tol
    );
    print_tractability(&report.tractability);
    println!("wrote {}", dir.display());
    Ok(if ok {
        Status::Ok
    } else {
        Status::GapAboveTolerance
    })
}

#[derive(Serialize)]
struct MarkovReport<'a> {
    kind: &'static str,
    game: &'a str,
    horizon: usize,
    states: usize,
    recursion_mode: RecursionMode,
    gap_tolerance: f64,
    max_gap: f64,
    within_tolerance: bool,
    max_attempts: usize,
    /// `V_{i,0}` at the initial state.
    initial_values: Vec<f64>,
    initial_values_eps: Vec<f64>,
    tractability: &'a TractabilityRecord,
}

pub fn solve_markov(a: &SolveArgs, manifest: &RunManifest) -> Result<Status> {
    let Game::Markov(game) = load_game(&a.game, &a.game_opts)? else {
        return invalid(format!("{} is a matrix game; use solve-matrix", a.game));
    };
    let cfg = solver_config(&a.solver)?;
    let tract = stage_tractability(&game)?;
    if a.strict && !tract.holds {
        print_tractability(&tract);
        return Ok(Status::Intractable);
    }
    let dir = manifest.prepare()?;
    log::info!(
        "solving {} stage games ({} states, horizon {})",
        game.states() * game.horizon(),
        game.states(),
        game.horizon()
    );
    let rep = backward_induction(&game, &cfg)?;
    let max_gap = rep.stage_gaps.iter().flatten().copied().fold(0.0, f64::max);
    let s0 = game.initial_state();
    let ok = max_gap <= a.gap_tol;
    let doc = MarkovReport {
        kind: "markov_solve",
        game: &a.game,
        horizon: game.horizon(),
        states: game.states(),
        recursion_mode: game.recursion_mode(),
        gap_tolerance: a.gap_tol,
        max_gap,
        within_tolerance: ok,
        max_attempts: rep.max_attempts,
        initial_values: rep.values.v.iter().map(|v| v[0][s0]).collect(),
        initial_values_eps: rep.values.v_eps.iter().map(|v| v[0][s0]).collect(),
        tractability: &rep.tractability,
    };
    write(&dir, "report.json", &formats::to_versioned_json(&doc)?)?;
    write(
        &dir,
        "policy.json",
        &formats::to_versioned_json(&formats::PolicyFile::new(&game, &rep.policy))?,
    )?;
    csv_file(&dir, "policy.csv", |f| {
        formats::write_policy_csv(f, &rep.policy)
    })?;
    csv_file(&dir, "values.csv", |f| {
        formats::write_values_csv(f, &rep.values)
    })?;
    csv_file(&dir, "stage_gaps.csv", |f| {
        write_stage_gaps(f, &rep.stage_gaps)
    })?;
    println!("max stage gap {max_gap:.3e} (tolerance {:.1e})", a.gap_tol);
    for (i, v) in doc.initial_values.iter().enumerate() {
        println!("player {i}: loss-to-go at the initial state {v:.6}");
    }
    print_tractability(&rep.tractability);
    println!("wrote {}", dir.display());
    Ok(if ok {
        Status::Ok
    } else {
        Status::GapAboveTolerance
    })
}

fn write_stage_gaps(f: fs::File, gaps: &[Vec<f64>]) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(f);
    writeln!(w, "h,s,gap")?;
    for (h, row) in gaps.iter().enumerate() {
        for (s, g) in row.iter().enumerate() {
            writeln!(w, "{h},{s},{g:.16e}")?;
        }
    }
    Ok(())
}

pub fn eval_markov(a: &EvalArgs, manifest: &RunManifest) -> Result<Status> {
    let Game::Markov(game) = load_game(&a.game, &a.game_opts)? else {
        return invalid(format!("{} is a matrix game", a.game));
    };
    let cfg = solver_config(&a.solver)?;
    let text = fs::read_to_string(&a.policy)?;
    let policy = formats::read_policy_csv(&text, &a.policy.display().to_string(), &game)?;
    let dir = manifest.prepare()?;
    let values = evaluate_policy(&game, &policy)?;
    let gaps = markov_rqe_gap(&game, &policy, &cfg)?;
    csv_file(&dir, "gaps.csv", |f| formats::write_gaps_csv(f, &gaps))?;
    csv_file(&dir, "values.csv", |f| {
        formats::write_values_csv(f, &values)
    })?;
    let max = gaps.max();
    println!("max gap {max:.3e} (tolerance {:.1e})", a.gap_tol);
    println!("wrote {}", dir.display());
    Ok(if max <= a.gap_tol {
        Status::Ok
    } else {
        Status::GapAboveTolerance
    })
}

/// Settings of `estimate`. A relative game path is resolved against the
/// manifest's directory.
#[derive(Debug, Serialize, Deserialize)]
pub struct EstimateManifest {
    pub game: String,
    #[serde(default)]
    pub dims: Option<MarkovDims>,
    #[serde(default)]
    pub game_seed: u64,
    #[serde(default)]
    pub params: Option<MarkovParameters>,
    #[serde(flatten)]
    pub experiment: ExperimentConfig,
}

pub fn estimate(a: &EstimateArgs, manifest: &RunManifest) -> Result<Status> {
    let src = a.manifest.display().to_string();
    let m: EstimateManifest = formats::parse_versioned(&fs::read_to_string(&a.manifest)?, &src)?;
    let game = if m.game == "bench:random-markov" {
        let dims = m.dims.clone().unwrap_or(MarkovDims {
            states: 3,
            action_counts: vec![2, 2],
            horizon: 3,
        });
        let params = m.params.clone().unwrap_or_else(|| {
            MarkovParameters::uniform(
                dims.action_counts.len(),
                RiskSpec::total_variation(0.5),
                RiskSpec::kl(1.0),
                RationalitySpec::log_barrier(1.0),
            )
        });
        random_markov_game(&dims, m.game_seed, params)?
    } else {
        let path = if m.game.starts_with("bench:") {
            return match load_game(&m.game, &GameOpts::default())? {
                Game::Markov(g) => run_estimate(&g, &m, manifest),
                Game::Matrix(_) => invalid("estimation needs a Markov game"),
            };
        } else {
            let p = PathBuf::from(&m.game);
            if p.is_relative() {
                a.manifest.parent().unwrap_or(Path::new(".")).join(p)
            } else {
                p
            }
        };
        match formats::read_game(&path)? {
            Game::Markov(g) => match &m.params {
                Some(p) => g.with_params(p.clone())?,
                None => g,
            },
            Game::Matrix(_) => return invalid("estimation needs a Markov game"),
        }
    };
    run_estimate(&game, &m, manifest)
}

fn run_estimate(
    game: &rqe::markov::MarkovGameSpec,
    m: &EstimateManifest,
    manifest: &RunManifest,
) -> Result<Status> {
    let dir = manifest.prepare()?;
    let result = run_experiment(game, &m.experiment)?;
    csv_file(&dir, "results.csv", |f| {
        formats::write_experiment_csv(f, &result)
    })?;
    write(
        &dir,
        "summary.json",
        &formats::to_versioned_json(&result.summary)?,
    )?;
    for (n, e) in &result.summary.mean_excess {
        println!("N = {n}: mean excess gap {e:.3e}");
    }
    println!("log-log slope {:.3}", result.summary.slope);
    println!("wrote {}", dir.display());
    Ok(Status::Ok)
}

pub fn check(a: &CheckArgs) -> Result<Status> {
    let t = match load_game(&a.game, &a.game_opts)? {
        Game::Matrix(g) => rqe::solver::tractability_record(&g),
        Game::Markov(g) => stage_tractability(&g)?,
    };
    print_tractability(&t);
    Ok(if a.strict && !t.holds {
        Status::Intractable
    } else {
        Status::Ok
    })
}

pub fn bench_make(a: &MakeArgs) -> Result<Status> {
    let id: BenchmarkId = a.id.parse()?;
    let game = bench_game(&id, &a.game_opts)?;
    let path = match &a.out {
        Some(p) => p.clone(),
        None => {
            let dir = output_dir(None);
            fs::create_dir_all(&dir)?;
            dir.join(format!("{id}.json"))
        }
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&path, formats::game_to_json(&game)?)?;
    println!("wrote {}", path.display());
    Ok(Status::Ok)
}

pub fn bench_list() -> Result<Status> {
    use std::io::Write;
    let mut names: Vec<String> = rqe::envlib::all_tables()
        .iter()
        .map(ToString::to_string)
        .collect();
    names.extend(["cliff-kl", "cliff-l1", "random-matrix", "random-markov"].map(String::from));
    let mut out = std::io::stdout().lock();
    for name in names {
        // a closed pipe (e.g. `| head`) is not an error
        if writeln!(out, "bench:{name}").is_err() {
            break;
        }
    }
    Ok(Status::Ok)
}
