//! Versioned JSON game and policy files, and the CSV tables written by the
//! command-line tool.
//!
//! Every JSON document carries `schema_version`; documents of any other
//! version are rejected. Floats in CSV files are written with 17 significant
//! digits, and JSON uses the shortest representation that round-trips, so
//! reading a file back reproduces every value exactly.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::ExperimentResult;
use crate::markov::{
    GapTable, MarkovDynamics, MarkovGameSpec, MarkovParameters, PolicyProfile, ValueTables,
};
use crate::matrix::{MatrixGameSpec, PayoffTensor, RationalitySpec, RiskMode};
use crate::risk::RiskSpec;
use crate::simplex::MixedStrategy;

pub const SCHEMA_VERSION: u32 = 1;

/// A normal-form game. `payoffs[i]` is player `i`'s payoff tensor, flattened
/// row-major over `action_counts`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixGameFile {
    pub action_counts: Vec<usize>,
    pub payoffs: Vec<Vec<f64>>,
    pub risk: Vec<RiskSpec>,
    pub rationality: Vec<RationalitySpec>,
    #[serde(default)]
    pub risk_mode: RiskMode,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarkovGameFile {
    pub dynamics: MarkovDynamics,
    pub params: MarkovParameters,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GameDocument {
    Matrix(MatrixGameFile),
    Markov(MarkovGameFile),
}

#[derive(Serialize)]
struct Versioned<T> {
    schema_version: u32,
    #[serde(flatten)]
    body: T,
}

/// A validated game of either kind.
#[derive(Clone, Debug)]
pub enum Game {
    Matrix(MatrixGameSpec),
    Markov(MarkovGameSpec),
}

impl MatrixGameFile {
    pub fn from_spec(game: &MatrixGameSpec) -> Self {
        Self {
            action_counts: game.action_counts().to_vec(),
            payoffs: game.payoffs().iter().map(|t| t.data().to_vec()).collect(),
            risk: game.risk().to_vec(),
            rationality: game.rationality().to_vec(),
            risk_mode: game.risk_mode(),
        }
    }

    pub fn into_spec(self) -> Result<MatrixGameSpec> {
        let tensors = self
            .payoffs
            .into_iter()
            .map(|d| PayoffTensor::new(self.action_counts.clone(), d))
            .collect::<Result<Vec<_>>>()?;
        MatrixGameSpec::new(
            self.action_counts,
            tensors,
            self.risk,
            self.rationality,
            self.risk_mode,
        )
    }
}

impl GameDocument {
    pub fn from_game(game: &Game) -> Self {
        match game {
            Game::Matrix(g) => Self::Matrix(MatrixGameFile::from_spec(g)),
            Game::Markov(g) => Self::Markov(MarkovGameFile {
                dynamics: g.dynamics().clone(),
                params: g.params().clone(),
            }),
        }
    }

    pub fn into_game(self) -> Result<Game> {
        Ok(match self {
            Self::Matrix(m) => Game::Matrix(m.into_spec()?),
            Self::Markov(m) => Game::Markov(MarkovGameSpec::new(m.dynamics, m.params)?),
        })
    }
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        message: message.into(),
    }
}

/// Parses a versioned JSON document. Errors name the offending field and
/// the line and column where parsing stopped. Keys that `T` does not know
/// are rejected, apart from `schema_version` and `kind` at the top level.
pub fn parse_versioned<T: DeserializeOwned>(text: &str, source: &str) -> Result<T> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| schema(source, format!("malformed JSON: {e}")))?;
    match value.get("schema_version") {
        None => return Err(schema(format!("{source}: schema_version"), "missing field")),
        Some(v) if v.as_u64() != Some(SCHEMA_VERSION as u64) => {
            return Err(schema(
                format!("{source}: schema_version"),
                format!("unsupported version {v}, this build reads version {SCHEMA_VERSION}"),
            ))
        }
        Some(_) => {}
    }
    let mut unknown = Vec::new();
    let mut de = serde_json::Deserializer::from_str(text);
    let body: T = {
        let mut track = |path: serde_ignored::Path| {
            let p = path.to_string();
            if p != "schema_version" && p != "kind" {
                unknown.push(p);
            }
        };
        let ignored = serde_ignored::Deserializer::new(&mut de, &mut track);
        serde_path_to_error::deserialize(ignored).map_err(|e| {
            let path = e.path().to_string();
            schema(format!("{source}: {path}"), e.into_inner().to_string())
        })?
    };
    if let Some(p) = unknown.first() {
        return Err(schema(format!("{source}: {p}"), "unknown field"));
    }
    Ok(body)
}

/// Pretty JSON for `body` with the current schema version.
pub fn to_versioned_json<T: Serialize>(body: &T) -> Result<String> {
    let doc = Versioned {
        schema_version: SCHEMA_VERSION,
        body,
    };
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

pub fn parse_game(text: &str, source: &str) -> Result<Game> {
    let kind = serde_json::from_str::<serde_json::Value>(text)
        .ok()
        .and_then(|v| v.get("kind").and_then(|k| k.as_str().map(str::to_owned)));
    let doc = match kind.as_deref() {
        Some("matrix") => GameDocument::Matrix(parse_versioned(text, source)?),
        Some("markov") => GameDocument::Markov(parse_versioned(text, source)?),
        Some(k) => {
            return Err(schema(
                format!("{source}: kind"),
                format!("unknown game kind {k:?}"),
            ))
        }
        None => {
            parse_versioned::<serde_json::Value>(text, source)?;
            return Err(schema(
                format!("{source}: kind"),
                "missing field, expected \"matrix\" or \"markov\"",
            ));
        }
    };
    doc.into_game().map_err(|e| schema(source, e.to_string()))
}

pub fn game_to_json(game: &Game) -> Result<String> {
    to_versioned_json(&GameDocument::from_game(game))
}

pub fn read_game(path: &Path) -> Result<Game> {
    let text = std::fs::read_to_string(path)?;
    parse_game(&text, &path.display().to_string())
}

/// A Markov policy as `policy[h][s][i]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolicyFile {
    pub horizon: usize,
    pub states: usize,
    pub action_counts: Vec<usize>,
    pub policy: Vec<Vec<Vec<MixedStrategy>>>,
}

impl PolicyFile {
    pub fn new(game: &MarkovGameSpec, policy: &PolicyProfile) -> Self {
        Self {
            horizon: game.horizon(),
            states: game.states(),
            action_counts: game.action_counts().to_vec(),
            policy: policy.steps().to_vec(),
        }
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(out)
}

/// `h,s,player,action,prob`.
pub fn write_policy_csv<W: Write>(out: W, policy: &PolicyProfile) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["h", "s", "player", "action", "prob"])?;
    for (h, step) in policy.steps().iter().enumerate() {
        for (s, profile) in step.iter().enumerate() {
            for (i, pi) in profile.iter().enumerate() {
                for (a, &p) in pi.probs().iter().enumerate() {
                    w.write_record([
                        h.to_string(),
                        s.to_string(),
                        i.to_string(),
                        a.to_string(),
                        fmt_f(p),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a policy written by [`write_policy_csv`] and checks it against the
/// game's dimensions.
pub fn read_policy_csv(text: &str, source: &str, game: &MarkovGameSpec) -> Result<PolicyProfile> {
    let (hz, ns, n) = (game.horizon(), game.states(), game.players());
    let mut probs: Vec<Vec<Vec<Vec<Option<f64>>>>> = (0..hz)
        .map(|_| {
            (0..ns)
                .map(|_| {
                    game.action_counts()
                        .iter()
                        .map(|&a| vec![None; a])
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["h", "s", "player", "action", "prob"] {
        return Err(schema(
            format!("{source}: header"),
            "expected columns h,s,player,action,prob",
        ));
    }
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let field = |c: usize, name: &str| -> Result<&str> {
            rec.get(c)
                .ok_or_else(|| schema(format!("{source}: line {line}, {name}"), "missing value"))
        };
        let idx = |c: usize, name: &str, bound: usize| -> Result<usize> {
            let v: usize = field(c, name)?.trim().parse().map_err(|_| {
                schema(
                    format!("{source}: line {line}, {name}"),
                    "expected a nonnegative integer",
                )
            })?;
            if v >= bound {
                return Err(schema(
                    format!("{source}: line {line}, {name}"),
                    format!("{v} out of range 0..{bound}"),
                ));
            }
            Ok(v)
        };
        let h = idx(0, "h", hz)?;
        let s = idx(1, "s", ns)?;
        let i = idx(2, "player", n)?;
        let a = idx(3, "action", game.action_counts()[i])?;
        let p: f64 = field(4, "prob")?
            .trim()
            .parse()
            .map_err(|_| schema(format!("{source}: line {line}, prob"), "expected a number"))?;
        probs[h][s][i][a] = Some(p);
    }
    let mut steps = Vec::with_capacity(hz);
    for (h, step) in probs.into_iter().enumerate() {
        let mut row = Vec::with_capacity(ns);
        for (s, profile) in step.into_iter().enumerate() {
            let mut out = Vec::with_capacity(n);
            for (i, pi) in profile.into_iter().enumerate() {
                let v: Option<Vec<f64>> = pi.into_iter().collect();
                let v = v.ok_or_else(|| {
                    schema(
                        format!("{source}: h={h}, s={s}, player={i}"),
                        "missing probabilities",
                    )
                })?;
                out.push(MixedStrategy::new(v).map_err(|e| {
                    schema(format!("{source}: h={h}, s={s}, player={i}"), e.to_string())
                })?);
            }
            row.push(out);
        }
        steps.push(row);
    }
    Ok(PolicyProfile::new(steps))
}

/// `h,s,player,v,v_eps` for steps `0..H`.
pub fn write_values_csv<W: Write>(out: W, values: &ValueTables) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["h", "s", "player", "v", "v_eps"])?;
    let hz = values.v_eps.first().map_or(0, Vec::len);
    for h in 0..hz {
        for s in 0..values.v[0][h].len() {
            for i in 0..values.v.len() {
                w.write_record([
                    h.to_string(),
                    s.to_string(),
                    i.to_string(),
                    fmt_f(values.v[i][h][s]),
                    fmt_f(values.v_eps[i][h][s]),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `h,s,player,gap`.
pub fn write_gaps_csv<W: Write>(out: W, gaps: &GapTable) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["h", "s", "player", "gap"])?;
    let hz = gaps.gaps.first().map_or(0, Vec::len);
    for h in 0..hz {
        for s in 0..gaps.gaps[0][h].len() {
            for (i, g) in gaps.gaps.iter().enumerate() {
                w.write_record([h.to_string(), s.to_string(), i.to_string(), fmt_f(g[h][s])])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `player,action,prob`.
pub fn write_strategy_csv<W: Write>(out: W, strategy: &[MixedStrategy]) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["player", "action", "prob"])?;
    for (i, pi) in strategy.iter().enumerate() {
        for (a, &p) in pi.probs().iter().enumerate() {
            w.write_record([i.to_string(), a.to_string(), fmt_f(p)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per `(seed, N)` with columns
/// `seed,n,max_l1_error,true_gap,empirical_gap,excess_gap,runtime_ms`,
/// then a `mean` row per `N` holding the mean excess gap and a final
/// `slope` row holding the log-log slope in the `excess_gap` column.
pub fn write_experiment_csv<W: Write>(out: W, result: &ExperimentResult) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record([
        "seed",
        "n",
        "max_l1_error",
        "true_gap",
        "empirical_gap",
        "excess_gap",
        "runtime_ms",
    ])?;
    for r in &result.rows {
        w.write_record([
            r.seed.to_string(),
            r.n.to_string(),
            fmt_f(r.max_l1_error),
            fmt_f(r.true_gap),
            fmt_f(r.empirical_gap),
            fmt_f(r.excess_gap),
            fmt_f(r.runtime_ms),
        ])?;
    }
    for (n, m) in &result.summary.mean_excess {
        w.write_record(["mean", &n.to_string(), "", "", "", &fmt_f(*m), ""])?;
    }
    w.write_record(["slope", "", "", "", "", &fmt_f(result.summary.slope), ""])?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envlib::{all_tables, cliff_walk, matching_pennies, CliffOverrides, CliffVariant};
    use crate::markov::tests::chain;

    fn mp() -> MatrixGameSpec {
        matching_pennies(
            &all_tables()[0],
            [RiskSpec::kl(2.0), RiskSpec::reverse_kl(0.5)],
            [
                RationalitySpec::log_barrier(1.0),
                RationalitySpec::neg_entropy(0.25),
            ],
        )
        .unwrap()
    }

    #[test]
    fn matrix_round_trip() {
        let g = mp();
        let json = game_to_json(&Game::Matrix(g.clone())).unwrap();
        let Game::Matrix(back) = parse_game(&json, "mem").unwrap() else {
            panic!("kind changed")
        };
        assert_eq!(
            MatrixGameFile::from_spec(&back),
            MatrixGameFile::from_spec(&g)
        );
        assert_eq!(json, game_to_json(&Game::Matrix(back)).unwrap());
    }

    #[test]
    fn markov_round_trip() {
        let o = CliffOverrides {
            width: Some(3),
            height: Some(3),
            horizon: Some(4),
            ..Default::default()
        };
        for g in [chain(3), cliff_walk(CliffVariant::L1, &o).unwrap()] {
            let json = game_to_json(&Game::Markov(g.clone())).unwrap();
            let Game::Markov(back) = parse_game(&json, "mem").unwrap() else {
                panic!("kind changed")
            };
            assert_eq!(back.max_l1_distance(&g), 0.0);
            assert_eq!(json, game_to_json(&Game::Markov(back)).unwrap());
        }
    }

    #[test]
    fn version_is_checked() {
        let json = game_to_json(&Game::Matrix(mp())).unwrap();
        let v2 = json.replace("\"schema_version\": 1", "\"schema_version\": 2");
        let err = parse_game(&v2, "g.json").unwrap_err().to_string();
        assert!(
            err.contains("schema_version") && err.contains("unsupported version 2"),
            "{err}"
        );
        let none = json.replace("\"schema_version\": 1,", "");
        assert!(parse_game(&none, "g.json")
            .unwrap_err()
            .to_string()
            .contains("missing field"));
    }

    #[test]
    fn errors_name_the_field() {
        let json = game_to_json(&Game::Matrix(mp())).unwrap();
        let bad = json.replacen("\"tau\": 2.0", "\"tau\": \"two\"", 1);
        let err = parse_game(&bad, "g.json").unwrap_err().to_string();
        assert!(err.contains("risk[0]") && err.contains("line"), "{err}");
        let unknown = json.replace("\"risk_mode\"", "\"risk_mood\"");
        let err = parse_game(&unknown, "g.json").unwrap_err().to_string();
        assert!(
            err.contains("risk_mood") && err.contains("unknown field"),
            "{err}"
        );
        let shape = json.replacen(
            "\"action_counts\": [\n    2,",
            "\"action_counts\": [\n    3,",
            1,
        );
        let err = parse_game(&shape, "g.json").unwrap_err().to_string();
        assert!(err.contains("dimension mismatch"), "{err}");
    }

    #[test]
    fn policy_csv_round_trip() {
        let g = chain(2);
        let mut p = PolicyProfile::uniform(&g);
        p.set(
            1,
            0,
            vec![
                MixedStrategy::new(vec![0.1, 0.9]).unwrap(),
                MixedStrategy::new(vec![1.0 / 3.0, 2.0 / 3.0]).unwrap(),
            ],
        );
        let mut buf = Vec::new();
        write_policy_csv(&mut buf, &p).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let back = read_policy_csv(&text, "p.csv", &g).unwrap();
        assert_eq!(back, p);
        let short: String = text.lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(read_policy_csv(&short, "p.csv", &g)
            .unwrap_err()
            .to_string()
            .contains("missing"));
        let bad = text.replacen("\n0,0,0,0,", "\n0,9,0,0,", 1);
        assert!(read_policy_csv(&bad, "p.csv", &g)
            .unwrap_err()
            .to_string()
            .contains("line 2"));
    }
}
