//! Simulated human guides.
//!
//! Each guide holds a mental map of the gateway graph whose goal may be
//! misremembered as a neighbor of the true goal, a trust value that decays
//! with distance from the goal, and directions produced by sampling a
//! shortest path in that mental map.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::EnvConfig;
use crate::guidance::{DirectionalSymbol, ScoredGuidance};
use crate::world::{
    bfs_distances, Adjacency, GatewayId, Heading, Pedestrian, Walker, WorldError, WorldMap,
};

#[derive(Debug, Error, PartialEq)]
pub enum HumanError {
    #[error("invalid population spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    World(#[from] WorldError),
}

/// Gaussian competence field centered on the goal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustField {
    pub x_g: f64,
    pub y_g: f64,
    pub sigma: f64,
}

impl TrustField {
    pub fn new(x_g: f64, y_g: f64, sigma: f64) -> Result<Self, HumanError> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(HumanError::InvalidSpec(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self { x_g, y_g, sigma })
    }

    pub fn around_goal(world: &WorldMap, sigma: f64) -> Result<Self, HumanError> {
        let (x, y) = world.position(world.goal);
        Self::new(x, y, sigma)
    }
}

/// Peak-normalized Gaussian: 1 at the goal, `exp(-1/2)` one sigma away.
pub fn gaussian_trust(x: f64, y: f64, field: &TrustField) -> f64 {
    let d2 = (x - field.x_g).powi(2) + (y - field.y_g).powi(2);
    (-d2 / (2.0 * field.sigma * field.sigma)).exp()
}

/// A human's picture of the building.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentalMap {
    pub adjacency: Adjacency,
    pub believed_goal: GatewayId,
}

/// The true goal with probability `trust`, else a uniformly chosen neighbor of it.
pub fn perturb_goal<R: Rng + ?Sized>(
    adjacency: &Adjacency,
    true_goal: GatewayId,
    trust: f64,
    rng: &mut R,
) -> GatewayId {
    if rng.gen::<f64>() < trust {
        return true_goal;
    }
    let neighbors: Vec<GatewayId> = adjacency[true_goal].iter().flatten().copied().collect();
    if neighbors.is_empty() {
        return true_goal;
    }
    neighbors[rng.gen_range(0..neighbors.len())]
}

/// One shortest path from `from` to `to`, drawn uniformly among all of them.
///
/// Path counts toward `to` are computed over the BFS layers; each hop then
/// picks a successor with probability proportional to its count.
pub fn sample_shortest_path<R: Rng + ?Sized>(
    adjacency: &Adjacency,
    from: GatewayId,
    to: GatewayId,
    rng: &mut R,
) -> Result<Vec<GatewayId>, WorldError> {
    let n = adjacency.len();
    for g in [from, to] {
        if g >= n {
            return Err(WorldError::UnknownGateway(g));
        }
    }
    let dist = &bfs_distances(adjacency, to);
    let Some(d_from) = dist[from] else {
        return Err(WorldError::Unreachable { from, to });
    };

    let mut order: Vec<GatewayId> = (0..n).filter(|g| dist[*g].is_some()).collect();
    order.sort_by_key(|g| dist[*g]);
    let mut count = vec![0.0f64; n];
    count[to] = 1.0;
    let successors = |g: GatewayId| {
        let d = dist[g];
        adjacency[g]
            .iter()
            .flatten()
            .copied()
            .filter(move |m| d.is_some_and(|d| dist[*m] == Some(d.wrapping_sub(1))))
    };
    for &g in &order {
        if g != to {
            count[g] = successors(g).map(|m| count[m]).sum();
        }
    }

    let mut path = Vec::with_capacity(d_from + 1);
    path.push(from);
    let mut here = from;
    while here != to {
        let mut pick = rng.gen::<f64>() * count[here];
        let options: Vec<GatewayId> = successors(here).collect();
        let mut next = *options
            .last()
            .expect("non-goal nodes on a shortest path have successors");
        for m in options {
            if pick < count[m] {
                next = m;
                break;
            }
            pick -= count[m];
        }
        path.push(next);
        here = next;
    }
    Ok(path)
}

/// Egocentric symbols that drive a robot facing `heading` along `path`.
///
/// Each symbol is relative to the heading left by the previous one.
pub fn path_symbols(
    world: &WorldMap,
    path: &[GatewayId],
    mut heading: Heading,
) -> Vec<DirectionalSymbol> {
    path.windows(2)
        .map(|hop| {
            let dir = Heading::ALL
                .into_iter()
                .find(|h| world.neighbor(hop[0], *h) == Some(hop[1]))
                .expect("consecutive path nodes are adjacent");
            let symbol = heading.relative(dir);
            heading = dir;
            symbol
        })
        .collect()
}

/// Directions from gateway `from` to the believed goal for a robot facing
/// `heading`, every symbol carrying the human's `trust`.
///
/// Standing on the believed goal already yields the single symbol `U`.
pub fn generate_guidance<R: Rng + ?Sized>(
    world: &WorldMap,
    map: &MentalMap,
    from: GatewayId,
    heading: Heading,
    trust: f64,
    l_max: usize,
    rng: &mut R,
) -> Result<ScoredGuidance, WorldError> {
    let confidence = trust.clamp(f64::MIN_POSITIVE, 1.0);
    if from == map.believed_goal {
        return Ok(ScoredGuidance::uniform(
            vec![DirectionalSymbol::U],
            confidence,
        ));
    }
    let path = sample_shortest_path(&map.adjacency, from, map.believed_goal, rng)?;
    let symbols = path_symbols(world, &path, heading);
    Ok(ScoredGuidance::uniform(symbols, confidence).truncated(l_max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimHuman {
    pub id: usize,
    pub walker: Pedestrian,
    pub mental_map: MentalMap,
    /// Trust drawn from the field at the spawn position; fixed for the episode.
    pub trust: f64,
    /// Directions from the nearest gateway, for a robot with the spawn heading.
    pub guidance: ScoredGuidance,
}

impl SimHuman {
    pub fn position(&self, world: &WorldMap) -> (f64, f64) {
        self.walker.position(world)
    }

    /// Directions as this human would give them to a robot about to decide at `from`.
    pub fn guidance_for<R: Rng + ?Sized>(
        &self,
        world: &WorldMap,
        from: GatewayId,
        heading: Heading,
        l_max: usize,
        rng: &mut R,
    ) -> Result<ScoredGuidance, WorldError> {
        generate_guidance(
            world,
            &self.mental_map,
            from,
            heading,
            self.trust,
            l_max,
            rng,
        )
    }
}

impl Walker for SimHuman {
    fn pedestrian(&self) -> &Pedestrian {
        &self.walker
    }
    fn pedestrian_mut(&mut self) -> &mut Pedestrian {
        &mut self.walker
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationParams {
    pub h_min: usize,
    pub h_max: usize,
    pub sigma: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub l_max: usize,
}

impl From<&EnvConfig> for PopulationParams {
    fn from(c: &EnvConfig) -> Self {
        Self {
            h_min: c.h_min,
            h_max: c.h_max,
            sigma: c.effective_sigma(),
            speed_min: c.human_speed_min,
            speed_max: c.human_speed_max,
            l_max: c.l_max,
        }
    }
}

/// Draws `n` humans: corridor uniform, position uniform along it, speed
/// uniform in the configured band, direction of travel a fair coin.
pub fn sample_population<R: Rng + ?Sized>(
    world: &WorldMap,
    n: usize,
    params: &PopulationParams,
    rng: &mut R,
) -> Result<Vec<SimHuman>, HumanError> {
    if n < params.h_min || n > params.h_max {
        return Err(HumanError::InvalidSpec(format!(
            "population size {n} outside [{}, {}]",
            params.h_min, params.h_max
        )));
    }
    let field = TrustField::around_goal(world, params.sigma)?;
    (0..n)
        .map(|id| {
            let corridor = rng.gen_range(0..world.corridors.len());
            let c = &world.corridors[corridor];
            let s = rng.gen_range(c.start..=c.end);
            let speed = rng.gen_range(params.speed_min..=params.speed_max);
            let direction = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let walker = Pedestrian {
                corridor,
                s,
                speed,
                direction,
            };
            let (x, y) = walker.position(world);
            let trust = gaussian_trust(x, y, &field);
            let mental_map = MentalMap {
                adjacency: world.adjacency.clone(),
                believed_goal: perturb_goal(&world.adjacency, world.goal, trust, rng),
            };
            let from = world.nearest_gateway(x, y);
            let guidance = generate_guidance(
                world,
                &mental_map,
                from,
                world.spawn_heading,
                trust,
                params.l_max,
                rng,
            )?;
            Ok(SimHuman {
                id,
                walker,
                mental_map,
                trust,
                guidance,
            })
        })
        .collect()
}
