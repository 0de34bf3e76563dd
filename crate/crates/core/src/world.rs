//! Road-network search world: map, terrain multipliers, switching-mode
//! target dynamics, robot motion, the conical sensor and the reward.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};
use core::fmt;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::geometry::{ConvexPolygon, Point2};
use crate::math;
use crate::rng::{normal, standard_normal, uniform};
use crate::sketch::QueryAction;

pub const CAPTURE_RADIUS: f64 = 75.0;
pub const EPISODE_LIMIT_S: f64 = 600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    OnRoad,
    OffRoad,
}

impl Mode {
    pub fn other(self) -> Mode {
        match self {
            Mode::OnRoad => Mode::OffRoad,
            Mode::OffRoad => Mode::OnRoad,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorldError {
    Disconnected,
    NodeOutOfBounds(usize),
    BadEdge(usize),
    IllegalMove { from: usize, to: usize },
}

impl fmt::Display for WorldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorldError::Disconnected => f.write_str("road network is not connected"),
            WorldError::NodeOutOfBounds(i) => write!(f, "node {i} lies outside the map"),
            WorldError::BadEdge(i) => write!(f, "edge {i} references a missing node or is a self-loop"),
            WorldError::IllegalMove { from, to } => write!(f, "node {to} is not within two hops of node {from}"),
        }
    }
}

impl core::error::Error for WorldError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub name: String,
    pub centroid: Point2,
    /// Characteristic size used when sketching around it.
    pub radius: f64,
    /// True terrain speed multiplier inside the landmark footprint.
    pub terrain: f64,
}

impl Landmark {
    /// Octagonal footprint used to stamp the true terrain grid.
    pub fn footprint(&self) -> ConvexPolygon {
        ConvexPolygon::regular(self.centroid, self.radius, 8, PI / 8.0).expect("positive landmark radius")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

impl Edge {
    pub fn other(&self, node: usize) -> usize {
        if node == self.a {
            self.b
        } else {
            self.a
        }
    }
}

/// Undirected road graph inside a rectangular map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadNetwork {
    nodes: Vec<Point2>,
    edges: Vec<Edge>,
    /// `(neighbour, edge index)` per node.
    adjacency: Vec<Vec<(usize, usize)>>,
    landmarks: Vec<Landmark>,
    width: f64,
    height: f64,
    total_length: f64,
}

impl RoadNetwork {
    pub fn new(
        nodes: Vec<Point2>,
        edge_pairs: &[(usize, usize)],
        landmarks: Vec<Landmark>,
        width: f64,
        height: f64,
    ) -> Result<Self, WorldError> {
        for (i, p) in nodes.iter().enumerate() {
            if !(p.x >= 0.0 && p.x <= width && p.y >= 0.0 && p.y <= height) {
                return Err(WorldError::NodeOutOfBounds(i));
            }
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut edges = Vec::with_capacity(edge_pairs.len());
        for (k, &(a, b)) in edge_pairs.iter().enumerate() {
            if a >= nodes.len() || b >= nodes.len() || a == b {
                return Err(WorldError::BadEdge(k));
            }
            let length = nodes[a].distance(nodes[b]);
            if !(length > 0.0) {
                return Err(WorldError::BadEdge(k));
            }
            adjacency[a].push((b, k));
            adjacency[b].push((a, k));
            edges.push(Edge { a, b, length });
        }
        if nodes.is_empty() {
            return Err(WorldError::Disconnected);
        }
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(n) = stack.pop() {
            for &(m, _) in &adjacency[n] {
                if !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        if seen.iter().any(|s| !s) || edges.is_empty() {
            return Err(WorldError::Disconnected);
        }
        let total_length = edges.iter().map(|e| e.length).sum();
        Ok(RoadNetwork { nodes, edges, adjacency, landmarks, width, height, total_length })
    }

    pub fn nodes(&self) -> &[Point2] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> Point2 {
        self.nodes[i]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, i: usize) -> &Edge {
        &self.edges[i]
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[node]
    }

    pub fn landmarks(&self) -> &[Landmark] {
        &self.landmarks
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn clamp(&self, p: Point2) -> Point2 {
        Point2::new(p.x.clamp(0.0, self.width), p.y.clamp(0.0, self.height))
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency[a].iter().find(|(n, _)| *n == b).map(|(_, e)| *e)
    }

    /// The current node, its neighbours and their neighbours, sorted.
    pub fn movement_options(&self, node: usize) -> Vec<usize> {
        let mut out = vec![node];
        for &(n, _) in &self.adjacency[node] {
            out.push(n);
            for &(m, _) in &self.adjacency[n] {
                out.push(m);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Waypoints from `from` to `to` (excluding `from`), through the shorter
    /// intermediate node for two-hop moves.
    pub fn route(&self, from: usize, to: usize) -> Result<Vec<usize>, WorldError> {
        if from == to {
            return Ok(Vec::new());
        }
        if self.edge_between(from, to).is_some() {
            return Ok(vec![to]);
        }
        let mut best: Option<(f64, usize)> = None;
        for &(mid, e1) in &self.adjacency[from] {
            if let Some(e2) = self.edge_between(mid, to) {
                let len = self.edges[e1].length + self.edges[e2].length;
                if best.map_or(true, |(l, _)| len < l) {
                    best = Some((len, mid));
                }
            }
        }
        best.map(|(_, mid)| vec![mid, to]).ok_or(WorldError::IllegalMove { from, to })
    }

    pub fn route_length(&self, from: usize, route: &[usize]) -> f64 {
        let mut prev = self.nodes[from];
        let mut len = 0.0;
        for n in route {
            len += prev.distance(self.nodes[*n]);
            prev = self.nodes[*n];
        }
        len
    }

    /// Closest point on any road; returns `(edge, offset from edge.a, point)`.
    pub fn nearest_road_point(&self, p: Point2) -> (usize, f64, Point2) {
        let mut best = (0, 0.0, self.nodes[self.edges[0].a], f64::INFINITY);
        for (k, e) in self.edges.iter().enumerate() {
            let a = self.nodes[e.a];
            let d = self.nodes[e.b] - a;
            let t = ((p - a).dot(d) / (e.length * e.length)).clamp(0.0, 1.0);
            let q = a + d * t;
            let dist = q.distance(p);
            if dist < best.3 {
                best = (k, t * e.length, q, dist);
            }
        }
        (best.0, best.1, best.2)
    }

    pub fn nearest_node(&self, p: Point2) -> usize {
        let mut best = 0;
        let mut bd = f64::INFINITY;
        for (i, n) in self.nodes.iter().enumerate() {
            let d = n.distance(p);
            if d < bd {
                bd = d;
                best = i;
            }
        }
        best
    }

    /// Uniform position on the road network, travelling in a random direction.
    pub fn sample_road_position<R: RngCore + ?Sized>(&self, rng: &mut R) -> RoadPosition {
        let mut u = uniform(rng) * self.total_length;
        let mut edge = self.edges.len() - 1;
        for (k, e) in self.edges.iter().enumerate() {
            if u < e.length {
                edge = k;
                break;
            }
            u -= e.length;
        }
        let e = &self.edges[edge];
        let offset = uniform(rng) * e.length;
        if rng.random::<bool>() {
            RoadPosition { edge, from: e.a, offset }
        } else {
            RoadPosition { edge, from: e.b, offset: e.length - offset }
        }
    }

    pub fn road_point(&self, r: &RoadPosition) -> Point2 {
        let e = &self.edges[r.edge];
        let a = self.nodes[r.from];
        let b = self.nodes[e.other(r.from)];
        a + (b - a) * (r.offset / e.length).clamp(0.0, 1.0)
    }

    /// Default map: a 6x6 jittered grid of intersections over 1000 m x 1000 m
    /// with eight named landmarks set between the roads.
    pub fn default_map() -> RoadNetwork {
        let mut rng = crate::rng::stream(0x5EED_0F_0AD5, 0);
        let n = 6;
        let spacing = 170.0;
        let origin = 75.0;
        let mut nodes = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let jx = (uniform(&mut rng) - 0.5) * 40.0;
                let jy = (uniform(&mut rng) - 0.5) * 40.0;
                nodes.push(Point2::new(origin + spacing * i as f64 + jx, origin + spacing * j as f64 + jy));
            }
        }
        let mut edges = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let k = j * n + i;
                if i + 1 < n {
                    edges.push((k, k + 1));
                }
                if j + 1 < n {
                    edges.push((k, k + n));
                }
            }
        }
        let specs: [(&str, usize, usize, f64, f64); 8] = [
            ("Pond", 0, 3, 50.0, 0.5),
            ("Farm", 3, 4, 50.0, 1.0),
            ("Trees", 1, 1, 50.0, 0.5),
            ("Barn", 4, 1, 45.0, 1.0),
            ("Quarry", 2, 2, 50.0, 1.5),
            ("Church", 1, 4, 40.0, 1.0),
            ("Field", 4, 3, 50.0, 1.5),
            ("Bridge", 2, 0, 45.0, 1.0),
        ];
        let landmarks = specs
            .iter()
            .map(|&(name, ci, cj, radius, terrain)| {
                let a = nodes[cj * n + ci];
                let b = nodes[(cj + 1) * n + ci + 1];
                Landmark { name: name.into(), centroid: (a + b) * 0.5, radius, terrain }
            })
            .collect();
        RoadNetwork::new(nodes, &edges, landmarks, 1000.0, 1000.0).expect("default map is valid")
    }
}

/// Position along an edge, measured from the node the target came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadPosition {
    pub edge: usize,
    pub from: usize,
    pub offset: f64,
}

/// Grid of transition multipliers `alpha(s)` over the map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainGrid {
    cell: f64,
    cols: usize,
    rows: usize,
    alpha: Vec<f64>,
}

impl TerrainGrid {
    pub fn new(width: f64, height: f64, cell: f64) -> Self {
        let cols = math::floor(width / cell).max(1.0) as usize + usize::from(width % cell > 0.0);
        let rows = math::floor(height / cell).max(1.0) as usize + usize::from(height % cell > 0.0);
        TerrainGrid { cell, cols, rows, alpha: vec![1.0; cols * rows] }
    }

    pub fn for_map(net: &RoadNetwork) -> Self {
        TerrainGrid::new(net.width(), net.height(), 10.0)
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.cols, self.rows)
    }

    pub fn values(&self) -> &[f64] {
        &self.alpha
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Point2 {
        Point2::new((col as f64 + 0.5) * self.cell, (row as f64 + 0.5) * self.cell)
    }

    pub fn at(&self, p: Point2) -> f64 {
        let c = (math::floor(p.x / self.cell).max(0.0) as usize).min(self.cols - 1);
        let r = (math::floor(p.y / self.cell).max(0.0) as usize).min(self.rows - 1);
        self.alpha[r * self.cols + c]
    }

    /// Sets every cell whose centre lies in `poly` to `delta`. Returns the
    /// number of cells written.
    pub fn apply_polygon(&mut self, poly: &ConvexPolygon, delta: f64) -> usize {
        assert!(delta > 0.0, "terrain multipliers must stay positive");
        let (lo, hi) = poly.bounding_box();
        let c0 = (math::floor(lo.x / self.cell).max(0.0) as usize).min(self.cols - 1);
        let c1 = (math::floor(hi.x / self.cell).max(0.0) as usize).min(self.cols - 1);
        let r0 = (math::floor(lo.y / self.cell).max(0.0) as usize).min(self.rows - 1);
        let r1 = (math::floor(hi.y / self.cell).max(0.0) as usize).min(self.rows - 1);
        let mut count = 0;
        for r in r0..=r1 {
            for c in c0..=c1 {
                if poly.contains(self.cell_center(c, r)) {
                    self.alpha[r * self.cols + c] = delta;
                    count += 1;
                }
            }
        }
        count
    }

    /// Stamps a sketch's terrain tag; sketches without one leave the grid alone.
    pub fn apply_sketch(&mut self, polygon: &ConvexPolygon, delta: Option<f64>) -> usize {
        match delta {
            Some(d) => self.apply_polygon(polygon, d),
            None => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDynamics {
    pub road_speed: f64,
    pub road_speed_sd: f64,
    pub offroad_speed: f64,
    pub offroad_speed_sd: f64,
    /// Probability of keeping the current mode over one second.
    pub stay_on_road: f64,
    pub stay_off_road: f64,
    /// Heading random-walk intensity off road, rad/sqrt(s).
    pub heading_sd: f64,
}

impl Default for TargetDynamics {
    fn default() -> Self {
        TargetDynamics {
            road_speed: 20.0,
            road_speed_sd: 5.0,
            offroad_speed: 5.0,
            offroad_speed_sd: 1.0,
            stay_on_road: 0.95,
            stay_off_road: 0.95,
            heading_sd: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub position: Point2,
    pub mode: Mode,
    /// Direction of travel; only meaningful off road.
    pub heading: f64,
    /// Set exactly when `mode == OnRoad`.
    pub road: Option<RoadPosition>,
}

impl TargetState {
    pub fn on_road(net: &RoadNetwork, road: RoadPosition) -> Self {
        TargetState { position: net.road_point(&road), mode: Mode::OnRoad, heading: 0.0, road: Some(road) }
    }

    pub fn off_road(position: Point2, heading: f64) -> Self {
        TargetState { position, mode: Mode::OffRoad, heading, road: None }
    }
}

/// Advances the target by `dt` seconds. Shared verbatim by the ground-truth
/// world, the particle filter and the planner's generative model.
pub fn step_target<R: RngCore + ?Sized>(
    t: &TargetState,
    dt: f64,
    dyn_: &TargetDynamics,
    net: &RoadNetwork,
    grid: &TerrainGrid,
    rng: &mut R,
) -> TargetState {
    if !(dt > 0.0) {
        return *t;
    }
    let mut next = *t;
    let stay = match t.mode {
        Mode::OnRoad => dyn_.stay_on_road,
        Mode::OffRoad => dyn_.stay_off_road,
    };
    if uniform(rng) >= math::powf(stay, dt) {
        next = switch_mode(&next, net, rng);
    }
    let (speed, sd) = match next.mode {
        Mode::OnRoad => (dyn_.road_speed, dyn_.road_speed_sd),
        Mode::OffRoad => (dyn_.offroad_speed, dyn_.offroad_speed_sd),
    };
    let distance = normal(rng, speed * dt, sd * dt).max(0.0) * grid.at(next.position);
    match next.mode {
        Mode::OnRoad => {
            let mut road = next.road.expect("on-road target carries a road position");
            advance_on_road(&mut road, distance, net, rng);
            next.road = Some(road);
            next.position = net.road_point(&road);
        }
        Mode::OffRoad => {
            next.heading = math::wrap_two_pi(next.heading + dyn_.heading_sd * math::sqrt(dt) * standard_normal(rng));
            let mut p = next.position + Point2::from_polar(distance, next.heading);
            if p.x < 0.0 || p.x > net.width() {
                next.heading = math::wrap_two_pi(PI - next.heading);
            }
            if p.y < 0.0 || p.y > net.height() {
                next.heading = math::wrap_two_pi(-next.heading);
            }
            p = net.clamp(p);
            next.position = p;
        }
    }
    next
}

fn switch_mode<R: RngCore + ?Sized>(t: &TargetState, net: &RoadNetwork, rng: &mut R) -> TargetState {
    match t.mode {
        Mode::OnRoad => TargetState::off_road(t.position, uniform(rng) * TAU),
        Mode::OffRoad => {
            let (edge, offset_a, _) = net.nearest_road_point(t.position);
            let e = *net.edge(edge);
            let road = if rng.random::<bool>() {
                RoadPosition { edge, from: e.a, offset: offset_a }
            } else {
                RoadPosition { edge, from: e.b, offset: e.length - offset_a }
            };
            TargetState::on_road(net, road)
        }
    }
}

fn advance_on_road<R: RngCore + ?Sized>(road: &mut RoadPosition, mut distance: f64, net: &RoadNetwork, rng: &mut R) {
    loop {
        let e = *net.edge(road.edge);
        let remaining = e.length - road.offset;
        if distance < remaining {
            road.offset += distance;
            return;
        }
        distance -= remaining;
        let at = e.other(road.from);
        let options = net.neighbors(at);
        let continuing = options.iter().filter(|(_, k)| *k != road.edge).count();
        let (_, next_edge) = if continuing == 0 {
            options[0]
        } else {
            let pick = rng.random_range(0..continuing);
            *options.iter().filter(|(_, k)| *k != road.edge).nth(pick).expect("pick within range")
        };
        *road = RoadPosition { edge: next_edge, from: at, offset: 0.0 };
        if distance <= 0.0 {
            return;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotDynamics {
    pub speed: f64,
    pub speed_sd: f64,
    /// Duration of a stay-in-place action.
    pub hover_s: f64,
}

impl Default for RobotDynamics {
    fn default() -> Self {
        RobotDynamics { speed: 15.0, speed_sd: 1.0, hover_s: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub position: Point2,
    /// Viewcone axis, radians counter-clockwise from east.
    pub heading: f64,
    /// Last node reached.
    pub node: usize,
}

impl RobotState {
    pub fn at_node(net: &RoadNetwork, node: usize, heading: f64) -> Self {
        RobotState { position: net.node(node), heading, node }
    }
}

/// An in-progress movement action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotMotion {
    pub target: usize,
    pub waypoints: Vec<usize>,
    pub speed: f64,
    /// Remaining hover time for a stay-in-place action.
    pub hover_left: f64,
}

impl RobotMotion {
    pub fn start<R: RngCore + ?Sized>(
        r: &RobotState,
        target: usize,
        net: &RoadNetwork,
        dyn_: &RobotDynamics,
        rng: &mut R,
    ) -> Result<Self, WorldError> {
        if !net.movement_options(r.node).contains(&target) {
            return Err(WorldError::IllegalMove { from: r.node, to: target });
        }
        let waypoints = net.route(r.node, target)?;
        let speed = normal(rng, dyn_.speed, dyn_.speed_sd).max(1.0);
        let hover_left = if waypoints.is_empty() { dyn_.hover_s } else { 0.0 };
        Ok(RobotMotion { target, waypoints, speed, hover_left })
    }

    pub fn is_done(&self) -> bool {
        self.waypoints.is_empty() && self.hover_left <= 0.0
    }
}

/// Moves the robot along its current action for `dt` seconds.
pub fn step_robot(r: &RobotState, motion: &mut RobotMotion, dt: f64, net: &RoadNetwork) -> RobotState {
    let mut next = *r;
    if motion.waypoints.is_empty() {
        motion.hover_left -= dt;
        return next;
    }
    let mut budget = motion.speed * dt;
    while budget > 0.0 && !motion.waypoints.is_empty() {
        let goal = net.node(motion.waypoints[0]);
        let to_goal = goal - next.position;
        let d = to_goal.norm();
        if d > 0.0 {
            next.heading = to_goal.angle();
        }
        if d <= budget {
            budget -= d;
            next.position = goal;
            next.node = motion.waypoints.remove(0);
        } else {
            next.position = next.position + to_goal * (budget / d);
            budget = 0.0;
        }
    }
    next
}

/// Expected time to finish a movement to `target` at the nominal speed.
pub fn expected_duration(net: &RoadNetwork, from: usize, target: usize, dyn_: &RobotDynamics) -> f64 {
    match net.route(from, target) {
        Ok(route) if route.is_empty() => dyn_.hover_s,
        Ok(route) => net.route_length(from, &route) / dyn_.speed,
        Err(_) => f64::INFINITY,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RobotObservation {
    None,
    Detected,
    Captured,
}

impl RobotObservation {
    pub const ALL: [RobotObservation; 3] = [RobotObservation::None, RobotObservation::Detected, RobotObservation::Captured];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        RobotObservation::ALL[i.min(2)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    /// Full cone angle, radians.
    pub cone: f64,
    pub capture_radius: f64,
    pub accuracy: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel { cone: 30.0 * PI / 180.0, capture_radius: CAPTURE_RADIUS, accuracy: 0.98 }
    }
}

impl SensorModel {
    pub fn in_cone(&self, robot: Point2, heading: f64, target: Point2) -> bool {
        let d = target - robot;
        if d.norm() <= 1e-9 {
            return true;
        }
        math::wrap_pi(d.angle() - heading).abs() <= 0.5 * self.cone + 1e-12
    }

    /// `[p(None), p(Detected), p(Captured)]` for the given geometry.
    pub fn likelihood(&self, robot: Point2, heading: f64, target: Point2) -> [f64; 3] {
        if !self.in_cone(robot, heading, target) {
            return [1.0, 0.0, 0.0];
        }
        let d = robot.distance(target);
        let band = if d <= self.capture_radius {
            2
        } else if d <= 2.0 * self.capture_radius {
            1
        } else {
            0
        };
        let miss = 0.5 * (1.0 - self.accuracy);
        let mut out = [miss; 3];
        out[band] = self.accuracy;
        out
    }

    pub fn sense<R: RngCore + ?Sized>(&self, r: &RobotState, t: &TargetState, rng: &mut R) -> RobotObservation {
        let p = self.likelihood(r.position, r.heading, t.position);
        RobotObservation::from_index(crate::rng::categorical(rng, &p))
    }
}

/// Capture pays 100, asking the human costs 1, everything else 0.
pub fn reward(target: Point2, robot: Point2, query: QueryAction, capture_radius: f64) -> f64 {
    if target.distance(robot) <= capture_radius {
        100.0
    } else if query.is_null() {
        0.0
    } else {
        -1.0
    }
}

/// Periodic noisy sightings of the target, standing in for camera feeds.
#[derive(Debug, Clone, PartialEq)]
pub struct GlimpseSource {
    pub period: f64,
    pub noise: f64,
    next_at: f64,
}

impl GlimpseSource {
    pub fn new(period: f64, noise: f64) -> Self {
        GlimpseSource { period, noise, next_at: period }
    }

    /// Emits a sighting when `clock` has reached the next period boundary.
    pub fn poll<R: RngCore + ?Sized>(&mut self, clock: f64, t: &TargetState, rng: &mut R) -> Option<Point2> {
        if !self.period.is_finite() || !(self.period > 0.0) || clock + 1e-9 < self.next_at {
            return None;
        }
        self.next_at += self.period;
        Some(oracle_glimpse(t, self.noise, rng))
    }
}

pub fn oracle_glimpse<R: RngCore + ?Sized>(t: &TargetState, noise: f64, rng: &mut R) -> Point2 {
    if noise <= 0.0 {
        return t.position;
    }
    t.position + Point2::new(noise * standard_normal(rng), noise * standard_normal(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn line_map() -> RoadNetwork {
        let nodes = vec![Point2::new(100.0, 500.0), Point2::new(250.0, 500.0), Point2::new(400.0, 500.0), Point2::new(400.0, 650.0)];
        RoadNetwork::new(nodes, &[(0, 1), (1, 2), (2, 3)], Vec::new(), 1000.0, 1000.0).unwrap()
    }

    #[test]
    fn default_map_is_valid() {
        let m = RoadNetwork::default_map();
        assert_eq!(m.nodes().len(), 36);
        assert_eq!(m.landmarks().len(), 8);
        for l in m.landmarks() {
            let (_, _, q) = m.nearest_road_point(l.centroid);
            assert!(q.distance(l.centroid) > l.radius, "{} overlaps a road", l.name);
        }
    }

    #[test]
    fn disconnected_rejected() {
        let nodes = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(2.0, 0.0), Point2::new(3.0, 0.0)];
        assert_eq!(RoadNetwork::new(nodes, &[(0, 1), (2, 3)], Vec::new(), 10.0, 10.0), Err(WorldError::Disconnected));
    }

    #[test]
    fn movement_options_two_hops() {
        let m = line_map();
        assert_eq!(m.movement_options(0), vec![0, 1, 2]);
        assert_eq!(m.movement_options(1), vec![0, 1, 2, 3]);
        assert_eq!(m.route(0, 2).unwrap(), vec![1, 2]);
        assert!(m.route(0, 3).is_err());
    }

    #[test]
    fn robot_reaches_adjacent_node() {
        let m = line_map();
        let mut rng = stream(1, 1);
        let dyn_ = RobotDynamics { speed_sd: 0.0, ..RobotDynamics::default() };
        let mut r = RobotState::at_node(&m, 0, 0.0);
        let mut motion = RobotMotion::start(&r, 1, &m, &dyn_, &mut rng).unwrap();
        let mut t = 0;
        while !motion.is_done() {
            r = step_robot(&r, &mut motion, 1.0, &m);
            t += 1;
        }
        assert_eq!(t, 10);
        assert_eq!(r.node, 1);
        assert!(r.heading.abs() < 1e-12);
        assert!((expected_duration(&m, 0, 1, &dyn_) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn illegal_move_rejected() {
        let m = line_map();
        let mut rng = stream(1, 1);
        let r = RobotState::at_node(&m, 0, 0.0);
        assert_eq!(
            RobotMotion::start(&r, 3, &m, &RobotDynamics::default(), &mut rng),
            Err(WorldError::IllegalMove { from: 0, to: 3 })
        );
    }

    #[test]
    fn hover_keeps_position() {
        let m = line_map();
        let mut rng = stream(1, 1);
        let r = RobotState::at_node(&m, 1, 0.3);
        let mut motion = RobotMotion::start(&r, 1, &m, &RobotDynamics::default(), &mut rng).unwrap();
        let r2 = step_robot(&r, &mut motion, 1.0, &m);
        assert_eq!(r2, r);
    }

    #[test]
    fn zero_dt_target_unchanged() {
        let m = RoadNetwork::default_map();
        let g = TerrainGrid::for_map(&m);
        let mut rng = stream(3, 3);
        let t = TargetState::on_road(&m, m.sample_road_position(&mut rng));
        assert_eq!(step_target(&t, 0.0, &TargetDynamics::default(), &m, &g, &mut rng), t);
    }

    #[test]
    fn on_road_invariant_holds() {
        let m = RoadNetwork::default_map();
        let g = TerrainGrid::for_map(&m);
        let mut rng = stream(4, 4);
        let mut t = TargetState::on_road(&m, m.sample_road_position(&mut rng));
        let d = TargetDynamics::default();
        for _ in 0..5000 {
            t = step_target(&t, 1.0, &d, &m, &g, &mut rng);
            assert!(t.position.x >= 0.0 && t.position.x <= 1000.0 && t.position.y >= 0.0 && t.position.y <= 1000.0);
            if t.mode == Mode::OnRoad {
                let r = t.road.unwrap();
                let e = m.edge(r.edge);
                assert!(r.offset >= 0.0 && r.offset <= e.length + 1e-9);
                let (_, _, q) = m.nearest_road_point(t.position);
                assert!(q.distance(t.position) < 1.0);
            } else {
                assert!(t.road.is_none());
            }
        }
    }

    #[test]
    fn sensor_bands() {
        let s = SensorModel::default();
        let r = Point2::new(0.0, 0.0);
        let close = |a: [f64; 3], b: [f64; 3]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12);
        assert!(close(s.likelihood(r, 0.0, Point2::new(50.0, 0.0)), [0.01, 0.01, 0.98]));
        assert!(close(s.likelihood(r, 0.0, Point2::new(100.0, 0.0)), [0.01, 0.98, 0.01]));
        assert!(close(s.likelihood(r, 0.0, Point2::new(300.0, 0.0)), [0.98, 0.01, 0.01]));
        assert_eq!(s.likelihood(r, 0.0, Point2::new(-50.0, 0.0)), [1.0, 0.0, 0.0]);
        assert_eq!(s.likelihood(r, 0.0, Point2::new(50.0, 20.0)), [1.0, 0.0, 0.0]);
        for p in [Point2::new(10.0, 1.0), Point2::new(120.0, 5.0), Point2::new(-3.0, 9.0)] {
            let l = s.likelihood(r, 0.3, p);
            assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn terrain_last_writer_wins() {
        let mut g = TerrainGrid::new(1000.0, 1000.0, 10.0);
        let a = ConvexPolygon::rectangle(Point2::new(100.0, 100.0), Point2::new(200.0, 200.0)).unwrap();
        let b = ConvexPolygon::rectangle(Point2::new(150.0, 150.0), Point2::new(250.0, 250.0)).unwrap();
        assert_eq!(g.apply_polygon(&a, 0.5), 100);
        g.apply_polygon(&b, 1.5);
        assert_eq!(g.at(Point2::new(175.0, 175.0)), 1.5);
        assert_eq!(g.at(Point2::new(115.0, 115.0)), 0.5);
        assert_eq!(g.at(Point2::new(500.0, 500.0)), 1.0);
        let before = g.clone();
        g.apply_sketch(&a, None);
        assert_eq!(g, before);
    }

    #[test]
    fn glimpse_schedule() {
        let m = line_map();
        let t = TargetState::on_road(&m, RoadPosition { edge: 0, from: 0, offset: 30.0 });
        let mut rng = stream(9, 9);
        let mut never = GlimpseSource::new(f64::INFINITY, 0.0);
        assert!((0..100).all(|c| never.poll(c as f64, &t, &mut rng).is_none()));
        let mut g = GlimpseSource::new(10.0, 0.0);
        let hits: Vec<_> = (0..=30).filter_map(|c| g.poll(c as f64, &t, &mut rng)).collect();
        assert_eq!(hits.len(), 3);
        assert_eq!(hits[0], t.position);
    }
}
