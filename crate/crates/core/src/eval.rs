//! Policy evaluation, trust-regime comparison and the interactive demo.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::env::{
    episode_seed, ActionId, Env, EnvError, EpisodeSummary, Observation, Reactive, ACTION_COUNT,
    TAU_BUCKETS,
};
use crate::guidance::{symbols_to_string, DirectionalSymbol};
use crate::lang2sym::Lang2Sym;
use crate::logging::{JsonlWriter, LogError};
use crate::net::{greedy_action, MlpParams};
use crate::ppo::{Checkpoint, TrainError};
use crate::world::{Event, Heading};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Checkpoint(#[from] TrainError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("episode count must be at least 1")]
    NoEpisodes,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind {
    Learned(PathBuf),
    Random,
    Gullible,
    Skeptical,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Learned(_) => "learned",
            PolicyKind::Random => "random",
            PolicyKind::Gullible => "gullible",
            PolicyKind::Skeptical => "skeptical",
        }
    }
}

const TOP_BUCKET: usize = TAU_BUCKETS - 1;

/// Trusts everything: asks when it has nothing to follow, then follows every
/// symbol. Without guidance it keeps straight on, turning by the fixed wall
/// rule when straight ahead is walled off.
pub fn gullible_policy(obs: &Observation) -> ActionId {
    if obs.d_h && obs.cursor_symbol().is_none() {
        return ActionId::from_parts(Reactive::I, TOP_BUCKET);
    }
    let symbol = match (obs.at_gateway, obs.cursor_symbol()) {
        (true, Some((symbol, _))) => symbol,
        (true, None) => first_open(obs, STRAIGHT_FIRST),
        (false, _) => DirectionalSymbol::U,
    };
    ActionId::from_parts(Reactive::from_symbol(symbol), TOP_BUCKET)
}

/// Exploration order shared by the scripted personalities: straight on,
/// otherwise right, otherwise left, turning back only at a dead end. On an
/// open grid this follows the outer wall once it reaches it, whereas always
/// preferring the right turn circles a single interior block forever.
///
/// Both personalities explore the same way so that they differ only in how
/// they treat guidance.
const STRAIGHT_FIRST: [DirectionalSymbol; 4] = [
    DirectionalSymbol::U,
    DirectionalSymbol::R,
    DirectionalSymbol::L,
    DirectionalSymbol::D,
];

/// First open exit in `order`; straight on when the gateway reports none.
fn first_open(obs: &Observation, order: [DirectionalSymbol; 4]) -> DirectionalSymbol {
    order
        .into_iter()
        .find(|s| obs.exit_open(*s))
        .unwrap_or(DirectionalSymbol::U)
}

/// Asks everyone, follows only near-certain symbols, otherwise explores by
/// the fixed wall rule.
pub fn skeptical_policy(obs: &Observation, threshold: f64) -> ActionId {
    let act = |r| ActionId::from_parts(r, 0);
    if obs.d_h {
        return act(Reactive::I);
    }
    if !obs.at_gateway {
        return act(Reactive::U);
    }
    if let Some((symbol, confidence)) = obs.cursor_symbol() {
        if confidence >= threshold {
            return act(Reactive::from_symbol(symbol));
        }
    }
    act(Reactive::from_symbol(first_open(obs, STRAIGHT_FIRST)))
}

/// A ready-to-run policy.
#[derive(Debug, Clone)]
pub enum Policy {
    Learned(MlpParams),
    Random(ChaCha8Rng),
    Gullible,
    Skeptical { threshold: f64 },
}

impl Policy {
    pub fn load(kind: &PolicyKind, config: &Config) -> Result<Self, EvalError> {
        Ok(match kind {
            PolicyKind::Learned(path) => Policy::Learned(Checkpoint::load(path)?.params),
            PolicyKind::Random => Policy::Random(ChaCha8Rng::seed_from_u64(0)),
            PolicyKind::Gullible => Policy::Gullible,
            PolicyKind::Skeptical => Policy::Skeptical {
                threshold: config.eval.skeptical_threshold,
            },
        })
    }

    /// Re-seeds stochastic policies so episode `seed` plays out the same
    /// regardless of what ran before it.
    pub fn begin_episode(&mut self, seed: u64) {
        if let Policy::Random(rng) = self {
            *rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0005_EED0_FA11_u64);
        }
    }

    pub fn act(&mut self, obs: &Observation) -> ActionId {
        match self {
            Policy::Learned(params) => greedy_action(&params.forward(&obs.encode())),
            Policy::Random(rng) => ActionId::new(rng.gen_range(0..ACTION_COUNT)),
            Policy::Gullible => gullible_policy(obs),
            Policy::Skeptical { threshold } => skeptical_policy(obs, *threshold),
        }
    }
}

/// One line of `report.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub seed: u64,
    pub success: bool,
    pub gateways: usize,
    pub interactions: usize,
    pub elapsed: f64,
    pub reward: f64,
    pub mean_tau_r: f64,
}

impl EpisodeRecord {
    fn new(episode: usize, s: &EpisodeSummary) -> Self {
        Self {
            episode,
            seed: s.seed,
            success: s.success,
            gateways: s.gateways,
            interactions: s.interactions,
            elapsed: s.elapsed,
            reward: s.reward,
            mean_tau_r: s.mean_tau_r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_gateways: f64,
    pub mean_interactions: f64,
    pub mean_elapsed: f64,
    pub mean_reward: f64,
    pub mean_tau_r: f64,
}

impl EvalReport {
    pub fn from_records(records: &[EpisodeRecord]) -> Self {
        let n = records.len() as f64;
        let mean = |f: &dyn Fn(&EpisodeRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
        Self {
            episodes: records.len(),
            success_rate: records.iter().filter(|r| r.success).count() as f64 / n,
            mean_gateways: mean(&|r| r.gateways as f64),
            mean_interactions: mean(&|r| r.interactions as f64),
            mean_elapsed: mean(&|r| r.elapsed),
            mean_reward: mean(&|r| r.reward),
            mean_tau_r: mean(&|r| r.mean_tau_r),
        }
    }
}

/// Plays `episodes` seeded episodes (`episode_seed(seed, i)`) with `policy`.
pub fn run_episodes(
    config: &Config,
    policy: &mut Policy,
    episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeRecord>, EvalError> {
    if episodes == 0 {
        return Err(EvalError::NoEpisodes);
    }
    let mut env = Env::new(config)?;
    (0..episodes)
        .map(|i| {
            let s = episode_seed(seed, i as u64);
            policy.begin_episode(s);
            let mut obs = env.reset(s)?;
            while !env.is_done() {
                obs = env.step(policy.act(&obs)).observation;
            }
            Ok(EpisodeRecord::new(i, &env.summary()))
        })
        .collect()
}

/// Evaluates a policy and optionally writes one record per episode to `report`.
pub fn run_eval(
    config: &Config,
    kind: &PolicyKind,
    episodes: usize,
    seed: u64,
    report: Option<&Path>,
) -> Result<(EvalReport, Vec<EpisodeRecord>), EvalError> {
    let mut policy = Policy::load(kind, config)?;
    let records = run_episodes(config, &mut policy, episodes, seed)?;
    if let Some(path) = report {
        let mut w = JsonlWriter::create(path)?;
        for r in &records {
            w.write(r)?;
        }
    }
    Ok((EvalReport::from_records(&records), records))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    HighTrust,
    LowTrust,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::HighTrust => "high",
            Regime::LowTrust => "low",
        }
    }

    /// `config` with the trust spread set for this regime.
    pub fn apply(self, config: &Config) -> Config {
        let mut c = config.clone();
        let factor = match self {
            Regime::HighTrust => config.eval.high_trust_sigma_factor,
            Regime::LowTrust => config.eval.low_trust_sigma_factor,
        };
        c.env.sigma = Some(factor * config.env.world_diagonal());
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub policy: String,
    pub regime: String,
    pub report: EvalReport,
}

fn report_columns(r: &EvalReport) -> [f64; 6] {
    [
        r.success_rate,
        r.mean_gateways,
        r.mean_interactions,
        r.mean_elapsed,
        r.mean_reward,
        r.mean_tau_r,
    ]
}

/// Every policy in every regime on matched seeds.
pub fn compare_regimes(
    config: &Config,
    policies: &[PolicyKind],
    regimes: &[Regime],
    episodes: usize,
    seed: u64,
) -> Result<Vec<GridCell>, EvalError> {
    let mut cells = Vec::new();
    for kind in policies {
        for regime in regimes {
            let (report, _) = run_eval(&regime.apply(config), kind, episodes, seed, None)?;
            cells.push(GridCell {
                policy: kind.name().to_string(),
                regime: regime.name().to_string(),
                report,
            });
        }
    }
    Ok(cells)
}

/// CSV with one row per cell plus, per policy, a `high-low` difference row
/// when both regimes are present.
pub fn grid_csv(cells: &[GridCell]) -> String {
    let mut out = String::from(
        "policy,regime,episodes,success_rate,mean_gateways,mean_interactions,mean_elapsed,mean_reward,mean_tau_r\n",
    );
    let row = |out: &mut String, policy: &str, regime: &str, episodes: usize, cols: [f64; 6]| {
        let _ = write!(out, "{policy},{regime},{episodes}");
        for c in cols {
            let _ = write!(out, ",{c:.6}");
        }
        out.push('\n');
    };
    for c in cells {
        row(
            &mut out,
            &c.policy,
            &c.regime,
            c.report.episodes,
            report_columns(&c.report),
        );
    }
    let mut seen = Vec::new();
    for c in cells {
        if seen.contains(&c.policy) {
            continue;
        }
        seen.push(c.policy.clone());
        let find = |r: Regime| {
            cells
                .iter()
                .find(|x| x.policy == c.policy && x.regime == r.name())
        };
        if let (Some(h), Some(l)) = (find(Regime::HighTrust), find(Regime::LowTrust)) {
            let (a, b) = (report_columns(&h.report), report_columns(&l.report));
            let delta: [f64; 6] = std::array::from_fn(|i| a[i] - b[i]);
            row(&mut out, &c.policy, "high-low", h.report.episodes, delta);
        }
    }
    out
}

/// Character map of the world: `+` gateways, `-`/`|` corridors, `G` goal,
/// `h` humans, and the robot as an arrow pointing along its heading.
pub fn render(env: &Env) -> String {
    let w = env.world();
    let (sx, sy) = (4.0 / w.cell_size, 2.0 / w.cell_size);
    let cols = (w.width * sx).round() as usize + 1;
    let rows = (w.height * sy).round() as usize + 1;
    let mut grid = vec![vec![' '; cols]; rows];
    let cell = |x: f64, y: f64| {
        let c = ((x * sx).round() as usize).min(cols - 1);
        let r = (((w.height - y) * sy).round() as usize).min(rows - 1);
        (r, c)
    };
    for e in &w.edges {
        let (a, b) = (w.position(e.a), w.position(e.b));
        let (ra, ca) = cell(a.0, a.1);
        let (rb, cb) = cell(b.0, b.1);
        for r in ra.min(rb)..=ra.max(rb) {
            for c in ca.min(cb)..=ca.max(cb) {
                grid[r][c] = if ra == rb { '-' } else { '|' };
            }
        }
    }
    for g in &w.gateways {
        let (r, c) = cell(g.x, g.y);
        grid[r][c] = '+';
    }
    for h in env.humans() {
        let (x, y) = h.position(w);
        let (r, c) = cell(x, y);
        grid[r][c] = 'h';
    }
    let (gx, gy) = w.position(w.goal);
    let (r, c) = cell(gx, gy);
    grid[r][c] = 'G';
    let robot = env.navigator().robot;
    let (r, c) = cell(robot.x, robot.y);
    grid[r][c] = match robot.heading {
        Heading::N => '^',
        Heading::E => '>',
        Heading::S => 'v',
        Heading::W => '<',
    };
    grid.into_iter()
        .map(|row| row.into_iter().collect::<String>().trim_end().to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

fn describe(event: Event) -> String {
    match event {
        Event::GatewayReached(g) => format!("reached gateway {g}"),
        Event::HumanDetected(h) => format!("human {h} nearby"),
        Event::TargetReached => "goal reached".into(),
        Event::EpisodeTimeout => "out of time".into(),
    }
}

/// Most probable action within one reactive group.
fn best_in_group(params: &MlpParams, obs: &Observation, reactive: Reactive) -> ActionId {
    let out = params.forward(&obs.encode());
    (0..TAU_BUCKETS)
        .map(|k| ActionId::from_parts(reactive, k))
        .max_by(|a, b| {
            out.probs[a.index()]
                .total_cmp(&out.probs[b.index()])
                .then(b.cmp(a))
        })
        .expect("non-empty")
}

/// Most probable action outside the interaction group.
fn best_autonomous(params: &MlpParams, obs: &Observation) -> ActionId {
    let out = params.forward(&obs.encode());
    ActionId::all()
        .filter(|a| a.reactive() != Reactive::I)
        .max_by(|a, b| {
            out.probs[a.index()]
                .total_cmp(&out.probs[b.index()])
                .then(b.cmp(a))
        })
        .expect("non-empty")
}

/// Plays one episode where the user speaks for every human the robot meets.
///
/// Each line the user types is parsed into scored guidance and handed to
/// the robot; the learned policy then decides at every gateway whether to
/// follow it and with how much trust. Everything shown is also copied to
/// `transcript`.
pub fn demo_repl<R: BufRead, W: Write, T: Write>(
    config: &Config,
    params: &MlpParams,
    seed: u64,
    input: &mut R,
    output: &mut W,
    transcript: &mut T,
) -> Result<EpisodeSummary, EvalError> {
    let parser = Lang2Sym::from_config(config);
    let mut env = Env::new(config)?;
    let mut obs = env.reset(seed)?;
    let mut say = |text: &str, shown: bool| -> io::Result<()> {
        if shown {
            writeln!(output, "{text}")?;
            output.flush()?;
        }
        writeln!(transcript, "{text}")
    };
    let io_err = |source| EvalError::Io {
        path: PathBuf::from("<terminal>"),
        source,
    };
    say("Robot navigation demo. Type directions when a person is met; an empty line lets the robot carry on.", true)
        .map_err(io_err)?;
    while !env.is_done() {
        say(
            &format!(
                "\n{}\nstep {}: {}",
                render(&env),
                env.steps(),
                describe(env.event())
            ),
            true,
        )
        .map_err(io_err)?;
        let (action, guidance) = if obs.d_h {
            say("guidance> ", true).map_err(io_err)?;
            let mut line = String::new();
            input.read_line(&mut line).map_err(io_err)?;
            let line = line.trim();
            say(line, false).map_err(io_err)?;
            let parsed = parser.parse(line);
            if line.is_empty() {
                say("(no guidance given; continuing autonomously)", true).map_err(io_err)?;
                (best_autonomous(params, &obs), None)
            } else if !parsed.has_direction() {
                say("no directional content", true).map_err(io_err)?;
                (best_autonomous(params, &obs), None)
            } else {
                let g = parsed.guidance;
                let conf: Vec<String> = g.confidences().iter().map(|c| format!("{c:.2}")).collect();
                say(
                    &format!(
                        "parsed [{}] confidence [{}] tau_h {:.2}",
                        symbols_to_string(g.symbols()),
                        conf.join(","),
                        g.tau_h()
                    ),
                    true,
                )
                .map_err(io_err)?;
                (best_in_group(params, &obs, Reactive::I), Some(g))
            }
        } else {
            (greedy_action(&params.forward(&obs.encode())), None)
        };
        let expected = obs.cursor_symbol();
        let t = env.step_with_guidance(action, guidance);
        let mut note = format!(
            "action {} (tau_r {:.2})",
            action.reactive().as_char(),
            action.tau_r()
        );
        if let (Some((want, conf)), Some(sym)) = (expected, action.reactive().symbol()) {
            if matches!(t.info.prior_event, Event::GatewayReached(_)) {
                if want == sym {
                    note.push_str(&format!(", followed {want} (confidence {conf:.2})"));
                } else {
                    note.push_str(&format!(", overrode {want} (confidence {conf:.2})"));
                }
            }
        }
        say(&note, true).map_err(io_err)?;
        obs = t.observation;
    }
    let s = env.summary();
    say(
        &format!(
            "\n{}\n{} after {} steps: {} gateways, {} interactions, {:.1} s, reward {:.1}",
            render(&env),
            if s.success {
                "goal reached"
            } else {
                "out of time"
            },
            s.steps,
            s.gateways,
            s.interactions,
            s.elapsed,
            s.reward
        ),
        true,
    )
    .map_err(io_err)?;
    Ok(s)
}
