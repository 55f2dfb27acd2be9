use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::numerics::RngStream;

use super::behavior::{expert_action, replay_action, scripted_action, REPLAY_LEVELS};
use super::reference_scores;
use super::tasks::{EnvKind, EnvState, Tier};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub sp: Vec<f64>,
    pub done: bool,
    /// Source tier inside a mixed dataset.
    pub source: Option<Tier>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OfflineDataset {
    pub env: EnvKind,
    pub tier: Tier,
    pub seed: u64,
    pub score_random: f64,
    pub score_expert: f64,
    pub transitions: Vec<Transition>,
}

/// Rolls out `act` from fresh resets until `n` transitions are recorded.
/// The last transition is marked `done` so segments never run into each other.
fn collect<F>(kind: EnvKind, n: usize, source: Option<Tier>, rng: &mut RngStream, mut act: F) -> Result<Vec<Transition>>
where
    F: FnMut(&EnvState, &mut RngStream) -> Result<Vec<f64>>,
{
    let mut out = Vec::with_capacity(n);
    let mut state = kind.reset(rng);
    while out.len() < n {
        let a = act(&state, rng)?;
        let step = state.step(&a)?;
        out.push(Transition {
            s: state.observation(),
            a,
            r: step.reward,
            sp: step.next.observation(),
            done: step.done || out.len() + 1 == n,
            source,
        });
        state = if step.done { kind.reset(rng) } else { step.next };
    }
    Ok(out)
}

pub fn generate_dataset(kind: EnvKind, tier: Tier, n: usize, seed: u64) -> Result<OfflineDataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("dataset needs at least one transition".into()));
    }
    let root = RngStream::new(seed);
    let transitions = match tier {
        Tier::Random | Tier::Medium | Tier::Expert => {
            collect(kind, n, None, &mut root.fork(0), |s, rng| scripted_action(tier, s, rng))?
        }
        Tier::MediumExpert => {
            let half = n / 2;
            let mut t = Vec::with_capacity(n);
            if half > 0 {
                t.extend(collect(kind, half, Some(Tier::Medium), &mut root.fork(0), |s, rng| {
                    scripted_action(Tier::Medium, s, rng)
                })?);
            }
            t.extend(collect(kind, n - half, Some(Tier::Expert), &mut root.fork(1), |s, _| {
                Ok(vec![expert_action(s)])
            })?);
            t
        }
        Tier::MediumReplay => {
            let mut t = Vec::with_capacity(n);
            let parts = REPLAY_LEVELS.len();
            for (i, &level) in REPLAY_LEVELS.iter().enumerate() {
                let quota = n * (i + 1) / parts - n * i / parts;
                if quota > 0 {
                    t.extend(collect(kind, quota, None, &mut root.fork(i as u64), |s, rng| {
                        Ok(vec![replay_action(s, level, rng)])
                    })?);
                }
            }
            t
        }
    };
    let (score_random, score_expert) = reference_scores(kind);
    let ds = OfflineDataset {
        env: kind,
        tier,
        seed,
        score_random,
        score_expert,
        transitions,
    };
    ds.validate()?;
    Ok(ds)
}

fn push_floats(out: &mut String, v: &[f64]) {
    out.push('[');
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        push_float(out, *x);
    }
    out.push(']');
}

fn push_float(out: &mut String, x: f64) {
    write!(out, "{x:.16e}").unwrap();
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaLine {
    env_id: String,
    tier: Tier,
    seed: u64,
    n: usize,
    dim_s: usize,
    dim_a: usize,
    score_random: f64,
    score_expert: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionLine {
    s: Vec<f64>,
    a: Vec<f64>,
    r: f64,
    sp: Vec<f64>,
    d: bool,
    #[serde(default)]
    src: Option<Tier>,
}

impl OfflineDataset {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.env.state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.env.action_dim()
    }

    /// Normalized score `100·(raw − random)/(expert − random)`.
    pub fn normalize(&self, raw: f64) -> f64 {
        100.0 * (raw - self.score_random) / (self.score_expert - self.score_random)
    }

    /// Structural checks every dataset must pass.
    pub fn validate(&self) -> Result<()> {
        if self.transitions.is_empty() {
            return Err(Error::InvalidArgument("dataset has no transitions".into()));
        }
        if !(self.score_expert > self.score_random) {
            return Err(Error::InvalidArgument(format!(
                "expert score {} not above random score {}",
                self.score_expert, self.score_random
            )));
        }
        let (ds, da) = (self.state_dim(), self.action_dim());
        for (i, t) in self.transitions.iter().enumerate() {
            if t.s.len() != ds || t.sp.len() != ds || t.a.len() != da {
                return Err(Error::Shape(format!(
                    "transition {i}: dims s={} a={} sp={}, expected s={ds} a={da}",
                    t.s.len(),
                    t.a.len(),
                    t.sp.len()
                )));
            }
            if let Some(a) = t.a.iter().find(|a| !(a.abs() <= 1.0)) {
                return Err(Error::InvalidArgument(format!("transition {i}: action {a} outside [-1, 1]")));
            }
            if !t.r.is_finite() || !t.s.iter().chain(&t.sp).all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("transition {i}")));
            }
            if !t.done {
                match self.transitions.get(i + 1) {
                    Some(next) if next.s != t.sp => {
                        return Err(Error::InvalidArgument(format!(
                            "transition {} does not continue the episode of transition {i}",
                            i + 1
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::with_capacity(96 * (self.transitions.len() + 1));
        write!(
            out,
            "{{\"env_id\":\"{}\",\"tier\":\"{}\",\"seed\":{},\"n\":{},\"dim_s\":{},\"dim_a\":{},\"score_random\":",
            self.env.id(),
            self.tier,
            self.seed,
            self.transitions.len(),
            self.state_dim(),
            self.action_dim()
        )
        .unwrap();
        push_float(&mut out, self.score_random);
        out.push_str(",\"score_expert\":");
        push_float(&mut out, self.score_expert);
        out.push_str("}\n");
        for t in &self.transitions {
            out.push_str("{\"s\":");
            push_floats(&mut out, &t.s);
            out.push_str(",\"a\":");
            push_floats(&mut out, &t.a);
            out.push_str(",\"r\":");
            push_float(&mut out, t.r);
            out.push_str(",\"sp\":");
            push_floats(&mut out, &t.sp);
            write!(out, ",\"d\":{}", t.done).unwrap();
            if let Some(src) = t.source {
                write!(out, ",\"src\":\"{src}\"").unwrap();
            }
            out.push_str("}\n");
        }
        out
    }

    /// Parses the JSONL form; `path` only labels errors.
    pub fn from_jsonl(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, first) = lines.next().ok_or_else(|| err(1, "empty file, expected a metadata line".into()))?;
        let meta: MetaLine = serde_json::from_str(first).map_err(|e| err(1, format!("bad metadata: {e}")))?;
        let (env, tier) = match super::parse_env_id(&meta.env_id) {
            Ok((env, None)) => (env, meta.tier),
            Ok((env, Some(t))) if t == meta.tier => (env, t),
            Ok(_) => return Err(err(1, format!("env_id {} disagrees with tier {}", meta.env_id, meta.tier))),
            Err(e) => return Err(err(1, e.to_string())),
        };
        if meta.dim_s != env.state_dim() || meta.dim_a != env.action_dim() {
            return Err(err(
                1,
                format!(
                    "dims s={} a={} do not match {} (s={} a={})",
                    meta.dim_s,
                    meta.dim_a,
                    env,
                    env.state_dim(),
                    env.action_dim()
                ),
            ));
        }
        let mut transitions = Vec::with_capacity(meta.n);
        let mut last_good = 1;
        for (no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let t: TransitionLine = serde_json::from_str(line)
                .map_err(|e| err(no, format!("malformed transition ({e}); last good line {last_good}")))?;
            if t.s.len() != meta.dim_s || t.sp.len() != meta.dim_s || t.a.len() != meta.dim_a {
                return Err(err(no, format!("transition dims disagree with metadata (dim_s={}, dim_a={})", meta.dim_s, meta.dim_a)));
            }
            transitions.push(Transition {
                s: t.s,
                a: t.a,
                r: t.r,
                sp: t.sp,
                done: t.d,
                source: t.src,
            });
            last_good = no;
        }
        if transitions.is_empty() {
            return Err(err(last_good, "no transitions after the metadata line".into()));
        }
        if transitions.len() != meta.n {
            return Err(err(
                last_good,
                format!("metadata promises {} transitions, found {}; last good line {last_good}", meta.n, transitions.len()),
            ));
        }
        let ds = OfflineDataset {
            env,
            tier,
            seed: meta.seed,
            score_random: meta.score_random,
            score_expert: meta.score_expert,
            transitions,
        };
        ds.validate().map_err(|e| err(last_good, e.to_string()))?;
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text, path)
    }
}
