//! The event-triggered navigation MDP.
//!
//! A timestep happens whenever the robot reaches a gateway or detects a
//! human. The agent picks one of 50 actions: a reactive command
//! (`L`, `R`, `U`, `D` or interact `I`) paired with one of ten robot-trust
//! buckets. Observations are 14 numbers: the remaining instruction symbols
//! and their confidences (5 slots each), interaction and gateway counts,
//! and the human/target detection flags.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Config, EnvConfig, RewardConfig};
use crate::guidance::{DirectionalSymbol, ScoredGuidance};
use crate::human::{sample_population, HumanError, PopulationParams, SimHuman};
use crate::world::{
    apply_reactive, generate_world, shortest_gateway_count, DetectionParams, Event, GatewayId,
    Navigator, WorldError, WorldMap, WorldSpec,
};

/// Instruction slots in the observation; caps the guidance length.
pub const SYMBOL_SLOTS: usize = 5;
/// Length of the encoded observation.
pub const OBS_DIM: usize = 2 * SYMBOL_SLOTS + 4;
pub const TAU_BUCKETS: usize = 10;
pub const ACTION_COUNT: usize = Reactive::ALL.len() * TAU_BUCKETS;
/// Robot trust within this distance of human trust counts as equal.
pub const TRUST_MATCH_TOLERANCE: f64 = 0.5 / TAU_BUCKETS as f64;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Human(#[from] HumanError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Reactive {
    L,
    R,
    U,
    D,
    I,
}

impl Reactive {
    /// Order of the reactive groups within the action index.
    pub const ALL: [Reactive; 5] = [
        Reactive::L,
        Reactive::R,
        Reactive::U,
        Reactive::D,
        Reactive::I,
    ];

    pub fn symbol(self) -> Option<DirectionalSymbol> {
        match self {
            Reactive::L => Some(DirectionalSymbol::L),
            Reactive::R => Some(DirectionalSymbol::R),
            Reactive::U => Some(DirectionalSymbol::U),
            Reactive::D => Some(DirectionalSymbol::D),
            Reactive::I => None,
        }
    }

    pub fn from_symbol(symbol: DirectionalSymbol) -> Self {
        match symbol {
            DirectionalSymbol::L => Reactive::L,
            DirectionalSymbol::R => Reactive::R,
            DirectionalSymbol::U => Reactive::U,
            DirectionalSymbol::D => Reactive::D,
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|r| *r == self).expect("listed")
    }

    pub fn as_char(self) -> char {
        match self {
            Reactive::L => 'L',
            Reactive::R => 'R',
            Reactive::U => 'U',
            Reactive::D => 'D',
            Reactive::I => 'I',
        }
    }
}

/// Flat action index in `0..50`: `reactive_index * 10 + trust_bucket`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionId(usize);

impl ActionId {
    /// Panics when `id >= 50`.
    pub fn new(id: usize) -> Self {
        assert!(
            id < ACTION_COUNT,
            "action id {id} out of range 0..{ACTION_COUNT}"
        );
        Self(id)
    }

    pub fn from_parts(reactive: Reactive, bucket: usize) -> Self {
        assert!(bucket < TAU_BUCKETS, "trust bucket {bucket} out of range");
        Self(reactive.index() * TAU_BUCKETS + bucket)
    }

    pub fn index(self) -> usize {
        self.0
    }

    pub fn reactive(self) -> Reactive {
        Reactive::ALL[self.0 / TAU_BUCKETS]
    }

    pub fn bucket(self) -> usize {
        self.0 % TAU_BUCKETS
    }

    /// Bucket midpoint.
    pub fn tau_r(self) -> f64 {
        (self.bucket() as f64 + 0.5) / TAU_BUCKETS as f64
    }

    pub fn all() -> impl Iterator<Item = ActionId> {
        (0..ACTION_COUNT).map(ActionId)
    }
}

/// Seed of episode `index` in a stream rooted at `base` (SplitMix64 finalizer).
pub fn episode_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn decode_action(id: usize) -> (Reactive, f64) {
    let a = ActionId::new(id);
    (a.reactive(), a.tau_r())
}

/// Instruction currently held by the robot and the index of the next symbol to follow.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InstructionCursor {
    guidance: ScoredGuidance,
    t: usize,
}

impl InstructionCursor {
    pub fn new(guidance: ScoredGuidance) -> Self {
        Self { guidance, t: 0 }
    }

    pub fn guidance(&self) -> &ScoredGuidance {
        &self.guidance
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn is_live(&self) -> bool {
        self.t < self.guidance.len()
    }

    /// The symbol to follow next and its confidence.
    pub fn current(&self) -> Option<(DirectionalSymbol, f64)> {
        self.is_live().then(|| {
            (
                self.guidance.symbols()[self.t],
                self.guidance.confidences()[self.t],
            )
        })
    }

    pub fn remaining(&self) -> (&[DirectionalSymbol], &[f64]) {
        (
            &self.guidance.symbols()[self.t..],
            &self.guidance.confidences()[self.t..],
        )
    }

    fn advance(&mut self) {
        self.t = (self.t + 1).min(self.guidance.len());
    }

    fn abandon(&mut self) {
        self.t = self.guidance.len();
    }
}

/// What the agent sees, plus gateway perception used by scripted policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Remaining symbol codes (U=1, D=2, L=3, R=4), zero-padded.
    pub symbols: [u8; SYMBOL_SLOTS],
    /// Confidences of the remaining symbols, zero-padded.
    pub confidences: [f64; SYMBOL_SLOTS],
    pub n_i: usize,
    pub n_g: usize,
    pub d_h: bool,
    pub d_t: bool,
    pub episode_cap: usize,
    /// The event is a gateway decision.
    pub at_gateway: bool,
    /// Open corridors at the gateway, egocentric order `[U, D, L, R]`.
    pub exits: [bool; 4],
}

impl Observation {
    /// Layout: 5 symbol codes / 4, 5 confidences, `N_I / cap`, `N_G / cap`, `D_h`, `D_t`.
    pub fn encode(&self) -> [f64; OBS_DIM] {
        let mut v = [0.0; OBS_DIM];
        let cap = self.episode_cap as f64;
        for i in 0..SYMBOL_SLOTS {
            v[i] = f64::from(self.symbols[i]) / 4.0;
            v[SYMBOL_SLOTS + i] = self.confidences[i];
        }
        v[2 * SYMBOL_SLOTS] = (self.n_i as f64 / cap).min(1.0);
        v[2 * SYMBOL_SLOTS + 1] = (self.n_g as f64 / cap).min(1.0);
        v[2 * SYMBOL_SLOTS + 2] = f64::from(u8::from(self.d_h));
        v[2 * SYMBOL_SLOTS + 3] = f64::from(u8::from(self.d_t));
        v
    }

    pub fn cursor_symbol(&self) -> Option<(DirectionalSymbol, f64)> {
        DirectionalSymbol::from_code(self.symbols[0]).map(|s| (s, self.confidences[0]))
    }

    pub fn exit_open(&self, symbol: DirectionalSymbol) -> bool {
        let i = match symbol {
            DirectionalSymbol::U => 0,
            DirectionalSymbol::D => 1,
            DirectionalSymbol::L => 2,
            DirectionalSymbol::R => 3,
        };
        self.exits[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_i: f64,
    pub r_t: f64,
    pub r_g: f64,
    pub r_s: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(r_i: f64, r_t: f64, r_g: f64, r_s: f64) -> Self {
        Self {
            r_i,
            r_t,
            r_g,
            r_s,
            total: r_i + r_t + r_g + r_s,
        }
    }
}

/// Everything the reward depends on: the state before the action, the
/// action, and the outcome of the transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardContext {
    pub d_h: bool,
    pub n_i: usize,
    pub at_gateway: bool,
    /// `(S[t], tau_h[t])` when the cursor is live.
    pub expected: Option<(DirectionalSymbol, f64)>,
    pub reactive: Reactive,
    pub tau_r: f64,
    pub reached: bool,
    pub episode_over: bool,
    /// Gateway count after the transition.
    pub n_g: usize,
    pub n_gmin: usize,
}

/// Trust term paid on a followed symbol.
pub fn trust_reward(tau_h: f64, tau_r: f64, rewards: &RewardConfig) -> f64 {
    let gap = (tau_h - tau_r).abs();
    if gap <= TRUST_MATCH_TOLERANCE + 1e-12 {
        rewards.r_optimal
    } else {
        -rewards.w_o * gap
    }
}

pub fn compute_reward(ctx: &RewardContext, rewards: &RewardConfig) -> RewardBreakdown {
    let r_i = if ctx.d_h && ctx.n_i < rewards.i_min as usize && ctx.reactive != Reactive::I {
        rewards.r_nointer
    } else if !ctx.d_h && ctx.reactive == Reactive::I {
        rewards.r_wronginter
    } else {
        0.0
    };
    let r_t = if ctx.reached { rewards.r_reached } else { 0.0 };
    let r_g = if !ctx.episode_over {
        0.0
    } else if ctx.reached && ctx.n_g == ctx.n_gmin {
        rewards.r_gmin
    } else if ctx.n_g > ctx.n_gmin {
        -rewards.w_n * (ctx.n_g - ctx.n_gmin) as f64
    } else {
        0.0
    };
    let r_s = match (ctx.at_gateway, ctx.expected, ctx.reactive.symbol()) {
        (true, Some((expected, tau_h)), Some(chosen)) if expected == chosen => {
            rewards.r_follow + trust_reward(tau_h, ctx.tau_r, rewards)
        }
        _ => 0.0,
    };
    RewardBreakdown::new(r_i, r_t, r_g, r_s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub reactive: Reactive,
    pub tau_r: f64,
    /// The event the action answered.
    pub prior_event: Event,
    /// The event that triggered the new state.
    pub event: Event,
    pub interacted: bool,
    pub followed: bool,
    /// A directional action named a direction with no corridor.
    pub blocked_turn: bool,
    pub dead_end: bool,
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub observation: Observation,
    pub reward: RewardBreakdown,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub success: bool,
    pub gateways: usize,
    pub interactions: usize,
    pub steps: usize,
    pub elapsed: f64,
    pub reward: f64,
    pub mean_tau_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Env {
    config: EnvConfig,
    rewards: RewardConfig,
    world: WorldMap,
    n_gmin: usize,
    rng: ChaCha8Rng,
    seed: u64,
    nav: Navigator,
    humans: Vec<SimHuman>,
    cursor: InstructionCursor,
    event: Event,
    last_gateway: Option<GatewayId>,
    n_i: usize,
    n_g: usize,
    steps: usize,
    reached: bool,
    done: bool,
    episode_reward: f64,
    tau_r_sum: f64,
}

impl Env {
    pub fn new(config: &Config) -> Result<Self, EnvError> {
        Self::from_parts(&config.env, &config.rewards)
    }

    /// Builds the world; call [`Env::reset`] before stepping.
    pub fn from_parts(env: &EnvConfig, rewards: &RewardConfig) -> Result<Self, EnvError> {
        let world = generate_world(&WorldSpec::from(env))?;
        let n_gmin = shortest_gateway_count(&world, world.spawn, world.goal)?;
        let nav = Navigator::spawn(&world);
        Ok(Self {
            config: env.clone(),
            rewards: rewards.clone(),
            n_gmin,
            rng: ChaCha8Rng::seed_from_u64(0),
            seed: 0,
            nav,
            humans: Vec::new(),
            cursor: InstructionCursor::default(),
            event: Event::GatewayReached(world.spawn),
            last_gateway: Some(world.spawn),
            world,
            n_i: 0,
            n_g: 0,
            steps: 0,
            reached: false,
            done: true,
            episode_reward: 0.0,
            tau_r_sum: 0.0,
        })
    }

    pub fn world(&self) -> &WorldMap {
        &self.world
    }

    pub fn humans(&self) -> &[SimHuman] {
        &self.humans
    }

    pub fn navigator(&self) -> &Navigator {
        &self.nav
    }

    pub fn cursor(&self) -> &InstructionCursor {
        &self.cursor
    }

    pub fn event(&self) -> Event {
        self.event
    }

    pub fn n_gmin(&self) -> usize {
        self.n_gmin
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    fn params(&self) -> DetectionParams {
        DetectionParams::from(&self.config)
    }

    /// Starts an episode: new humans from `seed`, robot at spawn, counters
    /// cleared, simulation advanced to the first event.
    pub fn reset(&mut self, seed: u64) -> Result<Observation, EnvError> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.seed = seed;
        let pop = PopulationParams::from(&self.config);
        let n = self.rng.gen_range(pop.h_min..=pop.h_max);
        self.humans = sample_population(&self.world, n, &pop, &mut self.rng)?;
        self.nav = Navigator::spawn(&self.world);
        self.cursor = InstructionCursor::default();
        self.last_gateway = Some(self.world.spawn);
        self.n_i = 0;
        self.n_g = 0;
        self.steps = 0;
        self.reached = false;
        self.done = false;
        self.episode_reward = 0.0;
        self.tau_r_sum = 0.0;
        self.advance();
        Ok(self.observation())
    }

    fn advance(&mut self) -> bool {
        let params = self.params();
        let adv = self
            .nav
            .advance_until_event(&self.world, &mut self.humans, &params);
        self.event = adv.event;
        let arrived = match adv.event {
            Event::GatewayReached(g) => Some(g),
            Event::TargetReached => Some(self.world.goal),
            _ => None,
        };
        if let Some(g) = arrived {
            if self.last_gateway != Some(g) {
                self.n_g += 1;
            }
            self.last_gateway = Some(g);
        }
        if adv.event == Event::TargetReached {
            self.reached = true;
        }
        adv.dead_end
    }

    pub fn observation(&self) -> Observation {
        let mut symbols = [0u8; SYMBOL_SLOTS];
        let mut confidences = [0.0; SYMBOL_SLOTS];
        let (rest, conf) = self.cursor.remaining();
        for (i, (s, c)) in rest.iter().zip(conf).take(SYMBOL_SLOTS).enumerate() {
            symbols[i] = s.code();
            confidences[i] = *c;
        }
        let at = match self.event {
            Event::GatewayReached(g) => Some(g),
            _ => None,
        };
        let exits = match at {
            Some(g) => {
                let h = self.nav.robot.heading;
                [
                    DirectionalSymbol::U,
                    DirectionalSymbol::D,
                    DirectionalSymbol::L,
                    DirectionalSymbol::R,
                ]
                .map(|s| self.world.neighbor(g, h.turned(s)).is_some())
            }
            None => [false; 4],
        };
        Observation {
            symbols,
            confidences,
            n_i: self.n_i,
            n_g: self.n_g,
            d_h: matches!(self.event, Event::HumanDetected(_)),
            d_t: self.event == Event::TargetReached,
            episode_cap: self.config.episode_cap,
            at_gateway: at.is_some(),
            exits,
        }
    }

    pub fn step(&mut self, action: ActionId) -> Transition {
        self.step_with_guidance(action, None)
    }

    /// Like [`Env::step`], but an interaction hands over `guidance`
    /// instead of the simulated human's own directions.
    ///
    /// Panics when the episode is over.
    pub fn step_with_guidance(
        &mut self,
        action: ActionId,
        guidance: Option<ScoredGuidance>,
    ) -> Transition {
        assert!(!self.done, "step called on a finished episode; call reset");
        let reactive = action.reactive();
        let tau_r = action.tau_r();
        let prior_event = self.event;
        let d_h = matches!(prior_event, Event::HumanDetected(_));
        let gateway = match prior_event {
            Event::GatewayReached(g) => Some(g),
            _ => None,
        };
        let expected = self.cursor.current();
        let n_i_before = self.n_i;

        let mut interacted = false;
        let mut followed = false;
        let mut blocked_turn = false;
        match (reactive.symbol(), prior_event) {
            (None, Event::HumanDetected(h)) => {
                let heading = self.nav.robot.heading;
                let from = self.nav.upcoming_gateway(&self.world);
                let given = match guidance {
                    Some(g) => g.truncated(self.config.l_max),
                    None => self.humans[h]
                        .guidance_for(&self.world, from, heading, self.config.l_max, &mut self.rng)
                        .expect("mental maps are connected"),
                };
                self.cursor = InstructionCursor::new(given);
                self.n_i += 1;
                interacted = true;
                let params = self.params();
                self.nav.wait(
                    &self.world,
                    &mut self.humans,
                    params.interaction_cost,
                    &params,
                );
            }
            (Some(symbol), Event::GatewayReached(g)) => {
                if let Some((want, _)) = expected {
                    if want == symbol {
                        self.cursor.advance();
                        followed = true;
                    } else {
                        self.cursor.abandon();
                    }
                }
                let out = apply_reactive(&self.world, &self.nav.robot, g, symbol);
                blocked_turn = !out.applied;
                self.nav.set_heading(out.state.heading);
            }
            _ => {}
        }

        self.steps += 1;
        let dead_end = self.advance();
        self.done = self.reached || self.steps >= self.config.episode_cap;

        let reward = compute_reward(
            &RewardContext {
                d_h,
                n_i: n_i_before,
                at_gateway: gateway.is_some(),
                expected,
                reactive,
                tau_r,
                reached: self.reached,
                episode_over: self.done,
                n_g: self.n_g,
                n_gmin: self.n_gmin,
            },
            &self.rewards,
        );
        self.episode_reward += reward.total;
        self.tau_r_sum += tau_r;

        Transition {
            observation: self.observation(),
            reward,
            done: self.done,
            info: StepInfo {
                reactive,
                tau_r,
                prior_event,
                event: self.event,
                interacted,
                followed,
                blocked_turn,
                dead_end,
                elapsed: self.nav.robot.elapsed,
            },
        }
    }

    pub fn summary(&self) -> EpisodeSummary {
        EpisodeSummary {
            seed: self.seed,
            success: self.reached,
            gateways: self.n_g,
            interactions: self.n_i,
            steps: self.steps,
            elapsed: self.nav.robot.elapsed,
            reward: self.episode_reward,
            mean_tau_r: if self.steps == 0 {
                0.0
            } else {
                self.tau_r_sum / self.steps as f64
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use DirectionalSymbol::*;

    fn env_with(f: impl FnOnce(&mut Config)) -> Env {
        let mut c = Config::default();
        f(&mut c);
        Env::new(&c).unwrap()
    }

    #[test]
    fn action_decoding() {
        assert_eq!(decode_action(0), (Reactive::L, 0.05));
        assert_eq!(decode_action(49), (Reactive::I, 0.95));
        let (r, t) = decode_action(25);
        assert_eq!(r, Reactive::U);
        assert!((t - 0.55).abs() < 1e-15);
        for id in 0..ACTION_COUNT {
            let a = ActionId::new(id);
            assert_eq!(ActionId::from_parts(a.reactive(), a.bucket()), a);
        }
    }

    #[test]
    #[should_panic]
    fn action_out_of_range() {
        ActionId::new(50);
    }

    #[test]
    fn observation_encoding() {
        let obs = Observation {
            symbols: [1, 4, 0, 0, 0],
            confidences: [1.0, 0.5, 0.0, 0.0, 0.0],
            n_i: 3,
            n_g: 6,
            d_h: true,
            d_t: false,
            episode_cap: 15,
            at_gateway: false,
            exits: [false; 4],
        };
        let v = obs.encode();
        assert_eq!(&v[..5], &[0.25, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(&v[5..10], &[1.0, 0.5, 0.0, 0.0, 0.0]);
        assert_eq!(&v[10..], &[0.2, 0.4, 1.0, 0.0]);
    }

    fn ctx() -> RewardContext {
        RewardContext {
            d_h: false,
            n_i: 0,
            at_gateway: true,
            expected: None,
            reactive: Reactive::U,
            tau_r: 0.55,
            reached: false,
            episode_over: false,
            n_g: 1,
            n_gmin: 2,
        }
    }

    #[test]
    fn reward_branches() {
        let r = RewardConfig::default();
        let follow = |tau_h, tau_r| {
            compute_reward(
                &RewardContext {
                    expected: Some((U, tau_h)),
                    tau_r,
                    ..ctx()
                },
                &r,
            )
        };
        assert_eq!(follow(0.55, 0.55).r_s, r.r_follow + r.r_optimal);
        assert!((follow(0.85, 0.55).r_s - (r.r_follow - 3.0)).abs() < 1e-12);

        let no_inter = compute_reward(
            &RewardContext {
                d_h: true,
                at_gateway: false,
                ..ctx()
            },
            &r,
        );
        assert_eq!(no_inter.r_i, r.r_nointer);
        let wrong = compute_reward(
            &RewardContext {
                reactive: Reactive::I,
                ..ctx()
            },
            &r,
        );
        assert_eq!(wrong.r_i, r.r_wronginter);
        let enough = compute_reward(
            &RewardContext {
                d_h: true,
                n_i: 1,
                ..ctx()
            },
            &r,
        );
        assert_eq!(enough.r_i, 0.0);

        let reached = compute_reward(
            &RewardContext {
                reached: true,
                episode_over: true,
                n_g: 2,
                ..ctx()
            },
            &r,
        );
        assert_eq!((reached.r_t, reached.r_g), (r.r_reached, r.r_gmin));
        let long = compute_reward(
            &RewardContext {
                reached: true,
                episode_over: true,
                n_g: 5,
                ..ctx()
            },
            &r,
        );
        assert_eq!(long.r_g, -3.0 * r.w_n);
        let mid = compute_reward(&RewardContext { n_g: 5, ..ctx() }, &r);
        assert_eq!(mid.r_g, 0.0);
        // mismatched symbol pays nothing
        let miss = compute_reward(
            &RewardContext {
                expected: Some((L, 0.9)),
                ..ctx()
            },
            &r,
        );
        assert_eq!(miss.r_s, 0.0);
    }

    #[test]
    fn reset_is_empty_and_deterministic() {
        let mut env = env_with(|_| {});
        let a = env.reset(3).unwrap();
        assert_eq!(a.symbols, [0; 5]);
        assert_eq!(a.confidences, [0.0; 5]);
        assert_eq!((a.n_i, a.n_g), (0, 0));
        assert!(!a.d_t);
        assert!(a.encode()[..10].iter().all(|v| *v == 0.0));
        let mut other = env_with(|_| {});
        assert_eq!(other.reset(3).unwrap(), a);
        assert_eq!(env, other);
    }

    #[test]
    fn wrong_interaction_penalized() {
        let mut env = env_with(|c| {
            c.env.h_min = 0;
            c.env.h_max = 0;
        });
        let obs = env.reset(1).unwrap();
        assert!(!obs.d_h);
        let t = env.step(ActionId::from_parts(Reactive::I, 3));
        assert_eq!(t.reward.r_i, RewardConfig::default().r_wronginter);
        assert!(!t.info.interacted);
    }

    #[test]
    fn timeout_after_cap() {
        let mut env = env_with(|c| {
            c.env.h_min = 0;
            c.env.h_max = 0;
        });
        env.reset(1).unwrap();
        // reversing at every gateway oscillates between two gateways
        let mut steps = 0;
        loop {
            let t = env.step(ActionId::from_parts(Reactive::D, 0));
            steps += 1;
            if t.done {
                assert!(!t.observation.d_t);
                break;
            }
        }
        assert_eq!(steps, 15);
        assert!(!env.summary().success);
    }

    /// Shortest route actions, computed with the true map.
    fn greedy_route(env: &Env) -> ActionId {
        let w = env.world();
        let Event::GatewayReached(g) = env.event() else {
            return ActionId::from_parts(Reactive::U, 5);
        };
        let dist = crate::world::bfs_distances(&w.adjacency, w.goal);
        let h = env.navigator().robot.heading;
        let best = DirectionalSymbol::ALL
            .into_iter()
            .filter_map(|s| w.neighbor(g, h.turned(s)).map(|n| (dist[n].unwrap(), s)))
            .min_by_key(|(d, _)| *d)
            .unwrap();
        ActionId::from_parts(Reactive::from_symbol(best.1), 5)
    }

    #[test]
    fn shortest_route_reaches_goal_with_bonus() {
        let mut env = env_with(|c| {
            c.env.h_min = 0;
            c.env.h_max = 0;
        });
        env.reset(4).unwrap();
        let mut last = None;
        while !env.is_done() {
            last = Some(env.step(greedy_route(&env)));
        }
        let t = last.unwrap();
        assert!(t.observation.d_t);
        assert_eq!(t.reward.r_t, 100.0);
        assert_eq!(t.reward.r_g, 20.0);
        assert_eq!(env.summary().gateways, env.n_gmin());
        assert_eq!(env.summary().steps, env.n_gmin());
    }

    #[test]
    fn interaction_loads_cursor_and_costs_time() {
        let mut found = false;
        for seed in 0..200 {
            let mut env = env_with(|_| {});
            let mut obs = env.reset(seed).unwrap();
            while !env.is_done() && !obs.d_h {
                obs = env.step(greedy_route(&env)).observation;
            }
            if env.is_done() {
                continue;
            }
            let before = env.navigator().robot.elapsed;
            let t = env.step(ActionId::from_parts(Reactive::I, 9));
            assert!(t.info.interacted);
            assert_eq!(t.reward.r_i, 0.0);
            assert_eq!(t.observation.n_i, 1);
            assert!(t.info.elapsed >= before + 10.0);
            let g = env.cursor().guidance().clone();
            assert!(!g.is_empty());
            // observation mirrors the unconsumed tail of the cursor
            let (rest, _) = env.cursor().remaining();
            for (i, s) in rest.iter().enumerate() {
                assert_eq!(t.observation.symbols[i], s.code());
            }
            found = true;
            break;
        }
        assert!(found);
    }

    #[test]
    fn following_pays_and_deviation_abandons() {
        let mut env = env_with(|c| {
            c.env.h_min = 0;
            c.env.h_max = 0;
        });
        env.reset(2).unwrap();
        let Event::GatewayReached(_) = env.event() else {
            panic!()
        };
        let route = greedy_route(&env);
        let sym = route.reactive().symbol().unwrap();
        env.cursor = InstructionCursor::new(ScoredGuidance::uniform(vec![sym, L], 0.55));
        let t = env.step(ActionId::from_parts(route.reactive(), 5));
        assert!(t.info.followed);
        assert_eq!(t.reward.r_s, 15.0);
        assert_eq!(env.cursor().t(), 1);
        while !matches!(env.event(), Event::GatewayReached(_)) {
            env.step(ActionId::from_parts(Reactive::U, 0));
        }
        let t = env.step(ActionId::from_parts(Reactive::R, 0));
        assert_eq!(t.reward.r_s, 0.0);
        assert!(!env.cursor().is_live());
        assert_eq!(env.observation().symbols, [0; 5]);
    }

    #[test]
    fn totals_add_up() {
        let mut env = env_with(|_| {});
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..50 {
            env.reset(seed).unwrap();
            let mut sum = 0.0;
            while !env.is_done() {
                let t = env.step(ActionId::new(rng.gen_range(0..ACTION_COUNT)));
                let r = t.reward;
                assert_eq!(r.total, r.r_i + r.r_t + r.r_g + r.r_s);
                assert!(
                    !(r.r_i == RewardConfig::default().r_nointer
                        && r.r_i == RewardConfig::default().r_wronginter)
                );
                assert!(t
                    .observation
                    .encode()
                    .iter()
                    .all(|v| (0.0..=1.0).contains(v)));
                sum += r.total;
            }
            assert_eq!(env.summary().reward, sum);
        }
    }

    #[test]
    #[should_panic(expected = "finished episode")]
    fn step_after_done_panics() {
        let mut env = env_with(|_| {});
        env.step(ActionId::new(0));
    }
}
