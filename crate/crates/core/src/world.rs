//! Corridor worlds, robot kinematics and detection events.
//!
//! A world is a `rows x cols` lattice of gateways (corridor intersections)
//! spaced `cell_size` meters apart, joined by axis-aligned corridors. The
//! robot moves forward along its heading between decisions; humans walk
//! back and forth along one corridor each. [`Navigator::advance_until_event`]
//! integrates both until the robot reaches a gateway or comes within
//! `human_radius` of a human it has not yet seen on this pass.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::EnvConfig;
use crate::guidance::DirectionalSymbol;

pub type GatewayId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("invalid world spec: {0}")]
    InvalidSpec(String),
    #[error("gateway {to} is unreachable from {from}")]
    Unreachable { from: GatewayId, to: GatewayId },
    #[error("unknown gateway {0}")]
    UnknownGateway(GatewayId),
}

/// Compass heading. North is +y, east is +x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Heading {
    N,
    E,
    S,
    W,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::N, Heading::E, Heading::S, Heading::W];

    pub fn index(self) -> usize {
        match self {
            Heading::N => 0,
            Heading::E => 1,
            Heading::S => 2,
            Heading::W => 3,
        }
    }

    fn from_index(i: usize) -> Self {
        Self::ALL[i % 4]
    }

    pub fn left(self) -> Self {
        Self::from_index(self.index() + 3)
    }

    pub fn right(self) -> Self {
        Self::from_index(self.index() + 1)
    }

    pub fn reverse(self) -> Self {
        Self::from_index(self.index() + 2)
    }

    pub fn unit(self) -> (f64, f64) {
        match self {
            Heading::N => (0.0, 1.0),
            Heading::E => (1.0, 0.0),
            Heading::S => (0.0, -1.0),
            Heading::W => (-1.0, 0.0),
        }
    }

    /// Heading after an egocentric command.
    pub fn turned(self, symbol: DirectionalSymbol) -> Self {
        match symbol {
            DirectionalSymbol::U => self,
            DirectionalSymbol::D => self.reverse(),
            DirectionalSymbol::L => self.left(),
            DirectionalSymbol::R => self.right(),
        }
    }

    /// The egocentric command that turns `self` into `target`.
    pub fn relative(self, target: Heading) -> DirectionalSymbol {
        match (target.index() + 4 - self.index()) % 4 {
            0 => DirectionalSymbol::U,
            1 => DirectionalSymbol::R,
            2 => DirectionalSymbol::D,
            _ => DirectionalSymbol::L,
        }
    }
}

impl fmt::Display for Heading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Heading::N => 'N',
            Heading::E => 'E',
            Heading::S => 'S',
            Heading::W => 'W',
        };
        write!(f, "{c}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gateway {
    pub id: GatewayId,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    Horizontal,
    Vertical,
}

/// An axis-aligned corridor rectangle whose centerline runs from `start` to `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corridor {
    pub id: usize,
    pub axis: Axis,
    /// Fixed coordinate of the centerline (y for horizontal, x for vertical).
    pub line: f64,
    pub start: f64,
    pub end: f64,
    pub half_width: f64,
}

impl Corridor {
    pub fn point_at(&self, s: f64) -> (f64, f64) {
        match self.axis {
            Axis::Horizontal => (s, self.line),
            Axis::Vertical => (self.line, s),
        }
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    /// Bounds `(x0, y0, x1, y1)` of the corridor rectangle.
    pub fn rect(&self) -> (f64, f64, f64, f64) {
        let hw = self.half_width;
        match self.axis {
            Axis::Horizontal => (
                self.start - hw,
                self.line - hw,
                self.end + hw,
                self.line + hw,
            ),
            Axis::Vertical => (
                self.line - hw,
                self.start - hw,
                self.line + hw,
                self.end + hw,
            ),
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (x0, y0, x1, y1) = self.rect();
        let eps = 1e-9;
        x >= x0 - eps && x <= x1 + eps && y >= y0 - eps && y <= y1 + eps
    }
}

/// Undirected gateway edge; `direction` is the heading from `a` to `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub a: GatewayId,
    pub b: GatewayId,
    pub direction: Heading,
}

/// Gateway neighbors indexed by [`Heading::index`].
pub type Adjacency = Vec<[Option<GatewayId>; 4]>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldMap {
    pub rows: usize,
    pub cols: usize,
    pub cell_size: f64,
    pub width: f64,
    pub height: f64,
    pub gateways: Vec<Gateway>,
    pub corridors: Vec<Corridor>,
    pub edges: Vec<Edge>,
    pub adjacency: Adjacency,
    pub spawn: GatewayId,
    pub spawn_heading: Heading,
    pub goal: GatewayId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldSpec {
    pub rows: usize,
    pub cols: usize,
    pub cell_size: f64,
    pub corridor_width: f64,
    pub seed: u64,
}

impl From<&EnvConfig> for WorldSpec {
    fn from(c: &EnvConfig) -> Self {
        Self {
            rows: c.rows,
            cols: c.cols,
            cell_size: c.cell_size,
            corridor_width: c.corridor_width,
            seed: c.world_seed,
        }
    }
}

/// Builds the gateway lattice.
///
/// The seed picks the spawn corner and a spawn heading along one of the
/// corner's two corridors. The goal sits on the far column, in the middle
/// row, so spawn and goal are fixed for a given seed.
pub fn generate_world(spec: &WorldSpec) -> Result<WorldMap, WorldError> {
    let WorldSpec {
        rows,
        cols,
        cell_size,
        corridor_width,
        seed,
    } = *spec;
    if rows < 2 || cols < 2 {
        return Err(WorldError::InvalidSpec(format!(
            "need at least 2 rows and 2 cols, got {rows}x{cols}"
        )));
    }
    if !(cell_size.is_finite() && cell_size > 0.0)
        || !(corridor_width > 0.0 && corridor_width < cell_size)
    {
        return Err(WorldError::InvalidSpec(format!(
            "cell size {cell_size} / corridor width {corridor_width} out of range"
        )));
    }

    let id = |r: usize, c: usize| r * cols + c;
    let gateways: Vec<Gateway> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .map(|(r, c)| Gateway {
            id: id(r, c),
            x: c as f64 * cell_size,
            y: r as f64 * cell_size,
        })
        .collect();

    let mut adjacency: Adjacency = vec![[None; 4]; rows * cols];
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push(Edge {
                    a: id(r, c),
                    b: id(r, c + 1),
                    direction: Heading::E,
                });
            }
            if r + 1 < rows {
                edges.push(Edge {
                    a: id(r, c),
                    b: id(r + 1, c),
                    direction: Heading::N,
                });
            }
        }
    }
    for e in &edges {
        adjacency[e.a][e.direction.index()] = Some(e.b);
        adjacency[e.b][e.direction.reverse().index()] = Some(e.a);
    }

    let width = (cols - 1) as f64 * cell_size;
    let height = (rows - 1) as f64 * cell_size;
    let half_width = corridor_width / 2.0;
    let mut corridors = Vec::new();
    for r in 0..rows {
        corridors.push(Corridor {
            id: corridors.len(),
            axis: Axis::Horizontal,
            line: r as f64 * cell_size,
            start: 0.0,
            end: width,
            half_width,
        });
    }
    for c in 0..cols {
        corridors.push(Corridor {
            id: corridors.len(),
            axis: Axis::Vertical,
            line: c as f64 * cell_size,
            start: 0.0,
            end: height,
            half_width,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let east = rng.gen_bool(0.5);
    let north = rng.gen_bool(0.5);
    let along_row = rng.gen_bool(0.5);
    let spawn_col = if east { cols - 1 } else { 0 };
    let spawn_row = if north { rows - 1 } else { 0 };
    let goal_col = cols - 1 - spawn_col;
    let goal_row = rows / 2;
    let spawn = id(spawn_row, spawn_col);
    let goal = id(goal_row, goal_col);
    let spawn_heading = match (along_row, east, north) {
        (true, true, _) => Heading::W,
        (true, false, _) => Heading::E,
        (false, _, true) => Heading::S,
        (false, _, false) => Heading::N,
    };

    let world = WorldMap {
        rows,
        cols,
        cell_size,
        width,
        height,
        gateways,
        corridors,
        edges,
        adjacency,
        spawn,
        spawn_heading,
        goal,
    };
    debug_assert!(world.neighbor(spawn, spawn_heading).is_some());
    debug_assert_ne!(spawn, goal);
    Ok(world)
}

impl WorldMap {
    pub fn gateway(&self, id: GatewayId) -> &Gateway {
        &self.gateways[id]
    }

    pub fn position(&self, id: GatewayId) -> (f64, f64) {
        let g = &self.gateways[id];
        (g.x, g.y)
    }

    pub fn neighbor(&self, id: GatewayId, heading: Heading) -> Option<GatewayId> {
        self.adjacency[id][heading.index()]
    }

    pub fn neighbors(&self, id: GatewayId) -> impl Iterator<Item = GatewayId> + '_ {
        self.adjacency[id].iter().flatten().copied()
    }

    pub fn diagonal(&self) -> f64 {
        self.width.hypot(self.height)
    }

    /// Closest gateway to a point; ties go to the lower id.
    pub fn nearest_gateway(&self, x: f64, y: f64) -> GatewayId {
        let mut best = (f64::INFINITY, 0);
        for g in &self.gateways {
            let d = (g.x - x).hypot(g.y - y);
            if d < best.0 {
                best = (d, g.id);
            }
        }
        best.1
    }

    pub fn gateway_at(&self, x: f64, y: f64, radius: f64) -> Option<GatewayId> {
        let g = self.nearest_gateway(x, y);
        let (gx, gy) = self.position(g);
        ((gx - x).hypot(gy - y) <= radius).then_some(g)
    }

    pub fn on_corridor(&self, x: f64, y: f64) -> bool {
        self.corridors.iter().any(|c| c.contains(x, y))
    }

    /// One JSON object per gateway (id, position, neighbors by heading, role).
    pub fn dump_lines(&self) -> Vec<String> {
        self.gateways
            .iter()
            .map(|g| {
                let neighbors: serde_json::Map<String, serde_json::Value> = Heading::ALL
                    .iter()
                    .filter_map(|h| self.neighbor(g.id, *h).map(|n| (h.to_string(), n.into())))
                    .collect();
                let role = if g.id == self.goal {
                    "goal"
                } else if g.id == self.spawn {
                    "spawn"
                } else {
                    "gateway"
                };
                serde_json::json!({
                    "id": g.id,
                    "x": g.x,
                    "y": g.y,
                    "role": role,
                    "neighbors": neighbors,
                })
                .to_string()
            })
            .collect()
    }
}

/// Breadth-first hop distances from `from` to every gateway (`None` = unreachable).
pub fn bfs_distances(adjacency: &Adjacency, from: GatewayId) -> Vec<Option<usize>> {
    let mut dist = vec![None; adjacency.len()];
    let mut queue = VecDeque::new();
    dist[from] = Some(0);
    queue.push_back(from);
    while let Some(u) = queue.pop_front() {
        let d = dist[u].expect("queued nodes have a distance");
        for v in adjacency[u].iter().flatten() {
            if dist[*v].is_none() {
                dist[*v] = Some(d + 1);
                queue.push_back(*v);
            }
        }
    }
    dist
}

/// Minimum number of gateway hops between two gateways.
pub fn shortest_gateway_count(
    world: &WorldMap,
    from: GatewayId,
    to: GatewayId,
) -> Result<usize, WorldError> {
    let n = world.gateways.len();
    for g in [from, to] {
        if g >= n {
            return Err(WorldError::UnknownGateway(g));
        }
    }
    bfs_distances(&world.adjacency, from)[to].ok_or(WorldError::Unreachable { from, to })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub heading: Heading,
    /// Simulated seconds since the episode started.
    pub elapsed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactiveOutcome {
    pub state: RobotState,
    /// False when the commanded direction has no corridor; the heading is kept.
    pub applied: bool,
}

/// Turns the robot at gateway `at` by an egocentric command.
pub fn apply_reactive(
    world: &WorldMap,
    robot: &RobotState,
    at: GatewayId,
    symbol: DirectionalSymbol,
) -> ReactiveOutcome {
    let heading = robot.heading.turned(symbol);
    let applied = world.neighbor(at, heading).is_some();
    ReactiveOutcome {
        state: RobotState {
            heading: if applied { heading } else { robot.heading },
            ..*robot
        },
        applied,
    }
}

/// A human walking back and forth along one corridor at constant speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pedestrian {
    pub corridor: usize,
    /// Position along the corridor centerline.
    pub s: f64,
    pub speed: f64,
    /// +1 toward `end`, -1 toward `start`.
    pub direction: f64,
}

impl Pedestrian {
    pub fn position(&self, world: &WorldMap) -> (f64, f64) {
        world.corridors[self.corridor].point_at(self.s)
    }

    pub fn step(&mut self, world: &WorldMap, dt: f64) {
        let c = &world.corridors[self.corridor];
        let len = c.length();
        if len <= 0.0 {
            return;
        }
        let mut travel = self.speed * dt;
        while travel > 0.0 {
            let room = if self.direction > 0.0 {
                c.end - self.s
            } else {
                self.s - c.start
            };
            if travel < room {
                self.s += self.direction * travel;
                break;
            }
            self.s = if self.direction > 0.0 { c.end } else { c.start };
            travel -= room;
            self.direction = -self.direction;
        }
    }
}

/// Anything the simulator can move and detect.
pub trait Walker {
    fn pedestrian(&self) -> &Pedestrian;
    fn pedestrian_mut(&mut self) -> &mut Pedestrian;
}

impl Walker for Pedestrian {
    fn pedestrian(&self) -> &Pedestrian {
        self
    }
    fn pedestrian_mut(&mut self) -> &mut Pedestrian {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Event {
    GatewayReached(GatewayId),
    HumanDetected(usize),
    TargetReached,
    EpisodeTimeout,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionParams {
    pub human_radius: f64,
    pub gateway_radius: f64,
    pub robot_speed: f64,
    pub interaction_cost: f64,
    pub dead_end_wait: f64,
    pub dt: f64,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self::from(&EnvConfig::default())
    }
}

impl From<&EnvConfig> for DetectionParams {
    fn from(c: &EnvConfig) -> Self {
        Self {
            human_radius: c.human_radius,
            gateway_radius: c.gateway_radius,
            robot_speed: c.robot_speed,
            interaction_cost: c.interaction_cost,
            dead_end_wait: c.dead_end_wait,
            dt: c.sim_dt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Advance {
    pub event: Event,
    /// The robot faced a wall and was handed back the gateway it stood on.
    pub dead_end: bool,
}

/// The robot plus the bookkeeping needed to emit each detection once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Navigator {
    pub robot: RobotState,
    /// Gateway the robot stands on (until it moves off).
    at_gateway: Option<GatewayId>,
    /// Gateway reached in the same tick as a human; reported on the next call.
    pending_arrival: Option<GatewayId>,
    /// Gateway being travelled to.
    target: Option<GatewayId>,
    /// Humans already reported during the current encounter. An encounter
    /// ends at the first gateway arrival where the human is out of range, so
    /// a pedestrian pacing back and forth past a waiting robot is reported
    /// once rather than on every re-entry.
    suppressed: BTreeSet<usize>,
}

impl Navigator {
    /// Robot standing on the spawn gateway; the first advance reports it.
    pub fn spawn(world: &WorldMap) -> Self {
        let (x, y) = world.position(world.spawn);
        Self {
            robot: RobotState {
                x,
                y,
                heading: world.spawn_heading,
                elapsed: 0.0,
            },
            at_gateway: Some(world.spawn),
            pending_arrival: Some(world.spawn),
            target: None,
            suppressed: BTreeSet::new(),
        }
    }

    /// The gateway where the robot takes its next decision.
    pub fn upcoming_gateway(&self, world: &WorldMap) -> GatewayId {
        if let Some(g) = self.pending_arrival.or(self.target) {
            return g;
        }
        match self.at_gateway {
            Some(g) => world.neighbor(g, self.robot.heading).unwrap_or(g),
            None => world.nearest_gateway(self.robot.x, self.robot.y),
        }
    }

    /// Gateway the robot is standing on, if any.
    pub fn at_gateway(&self) -> Option<GatewayId> {
        self.pending_arrival.or(self.at_gateway)
    }

    pub fn set_heading(&mut self, heading: Heading) {
        self.robot.heading = heading;
    }

    /// Lets `seconds` pass with the robot standing still (no detection).
    pub fn wait<W: Walker>(
        &mut self,
        world: &WorldMap,
        humans: &mut [W],
        seconds: f64,
        params: &DetectionParams,
    ) {
        let ticks = (seconds / params.dt).ceil().max(1.0) as usize;
        let start = self.robot.elapsed;
        let mut prev = 0.0;
        for k in 1..=ticks {
            let t = (k as f64 * params.dt).min(seconds);
            for h in humans.iter_mut() {
                h.pedestrian_mut().step(world, t - prev);
            }
            prev = t;
        }
        self.robot.elapsed = start + seconds;
    }

    fn detect<W: Walker>(&mut self, world: &WorldMap, humans: &[W], radius: f64) -> Option<usize> {
        let (rx, ry) = (self.robot.x, self.robot.y);
        let mut best: Option<(f64, usize)> = None;
        for (i, h) in humans.iter().enumerate() {
            let (hx, hy) = h.pedestrian().position(world);
            let d = (hx - rx).hypot(hy - ry);
            if d <= radius && !self.suppressed.contains(&i) && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        let (_, i) = best?;
        self.suppressed.insert(i);
        Some(i)
    }

    /// Ends the encounter with every reported human now out of range.
    fn end_encounters<W: Walker>(&mut self, world: &WorldMap, humans: &[W], radius: f64) {
        let (rx, ry) = (self.robot.x, self.robot.y);
        self.suppressed.retain(|&i| {
            let (hx, hy) = humans[i].pedestrian().position(world);
            (hx - rx).hypot(hy - ry) <= radius
        });
    }

    fn arrival(world: &WorldMap, g: GatewayId) -> Event {
        if g == world.goal {
            Event::TargetReached
        } else {
            Event::GatewayReached(g)
        }
    }

    /// Moves robot and humans forward until the next detection event.
    ///
    /// A human and a gateway detected in the same tick yield the human
    /// first; the gateway follows on the next call at no extra time.
    pub fn advance_until_event<W: Walker>(
        &mut self,
        world: &WorldMap,
        humans: &mut [W],
        params: &DetectionParams,
    ) -> Advance {
        let event = |event| Advance {
            event,
            dead_end: false,
        };
        if let Some(h) = self.detect(world, humans, params.human_radius) {
            return event(Event::HumanDetected(h));
        }
        if let Some(g) = self.pending_arrival.take() {
            self.at_gateway = Some(g);
            self.end_encounters(world, humans, params.human_radius);
            return event(Self::arrival(world, g));
        }

        let target = self.target.or_else(|| {
            self.at_gateway
                .and_then(|g| world.neighbor(g, self.robot.heading))
        });
        let Some(target) = target else {
            // facing a wall: wait in place, watching for humans
            let here = self
                .at_gateway
                .unwrap_or_else(|| world.nearest_gateway(self.robot.x, self.robot.y));
            let start = self.robot.elapsed;
            let ticks = (params.dead_end_wait / params.dt).ceil().max(1.0) as usize;
            let mut prev = 0.0;
            for k in 1..=ticks {
                let t = (k as f64 * params.dt).min(params.dead_end_wait);
                for h in humans.iter_mut() {
                    h.pedestrian_mut().step(world, t - prev);
                }
                prev = t;
                self.robot.elapsed = start + t;
                if let Some(h) = self.detect(world, humans, params.human_radius) {
                    return event(Event::HumanDetected(h));
                }
            }
            self.at_gateway = Some(here);
            self.end_encounters(world, humans, params.human_radius);
            return Advance {
                event: Self::arrival(world, here),
                dead_end: true,
            };
        };

        self.target = Some(target);
        self.at_gateway = None;
        let (x0, y0) = (self.robot.x, self.robot.y);
        let (tx, ty) = world.position(target);
        let distance = (tx - x0).hypot(ty - y0);
        let travel_time = distance / params.robot_speed;
        let (ux, uy) = if distance > 0.0 {
            ((tx - x0) / distance, (ty - y0) / distance)
        } else {
            (0.0, 0.0)
        };
        let start = self.robot.elapsed;
        let mut prev = 0.0;
        let mut k = 0usize;
        loop {
            k += 1;
            let t = (k as f64 * params.dt).min(travel_time);
            for h in humans.iter_mut() {
                h.pedestrian_mut().step(world, t - prev);
            }
            prev = t;
            let arrived = t >= travel_time;
            if arrived {
                self.robot.x = tx;
                self.robot.y = ty;
            } else {
                let d = params.robot_speed * t;
                self.robot.x = x0 + ux * d;
                self.robot.y = y0 + uy * d;
            }
            self.robot.elapsed = start + t;
            let human = self.detect(world, humans, params.human_radius);
            if arrived {
                self.target = None;
                if let Some(h) = human {
                    self.pending_arrival = Some(target);
                    return event(Event::HumanDetected(h));
                }
                self.at_gateway = Some(target);
                self.end_encounters(world, humans, params.human_radius);
                return event(Self::arrival(world, target));
            }
            if let Some(h) = human {
                return event(Event::HumanDetected(h));
            }
        }
    }
}
