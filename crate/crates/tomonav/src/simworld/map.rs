//! Road map generation and route planning.
//!
//! Maps are built on a jittered grid: a serpentine spine visits every
//! grid node (one long connected road), then extra grid edges are
//! attached until the requested number of junction nodes (degree >= 3)
//! exists. Segments serialize as maximal polyline chains between
//! non-degree-2 nodes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::navigation::{Directive, RoutePlan, TerminalAction, Turn};
use crate::simworld::DronePose;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JunctionNode {
    pub position: [f64; 2],
    pub arms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadMap {
    /// Centerline polylines in meters; endpoints meeting at identical
    /// coordinates are connected.
    pub segments: Vec<Vec<[f64; 2]>>,
    pub road_half_width: f64,
    pub junction_nodes: Vec<JunctionNode>,
    /// World is the square [0, world_extent]^2.
    pub world_extent: f64,
    pub texture_seed: u64,
}

impl RoadMap {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("road map serializes")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let map: RoadMap = serde_json::from_str(json)?;
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidInput("road map has no segments".into()));
        }
        if !(self.road_half_width > 0.0) {
            return Err(Error::InvalidInput("road half width must be positive".into()));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.len() < 2 {
                return Err(Error::InvalidInput(format!("segment {i} has fewer than 2 points")));
            }
            for p in seg {
                if !(0.0..=self.world_extent).contains(&p[0])
                    || !(0.0..=self.world_extent).contains(&p[1])
                {
                    return Err(Error::InvalidInput(format!(
                        "segment {i} leaves the world extent"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0.0..=self.world_extent).contains(&p[0]) && (0.0..=self.world_extent).contains(&p[1])
    }

    /// Distance from a point to the nearest road centerline.
    pub fn distance_to_road(&self, p: [f64; 2]) -> f64 {
        let mut best = f64::INFINITY;
        for seg in &self.segments {
            for pair in seg.windows(2) {
                best = best.min(point_segment_distance(p, pair[0], pair[1]));
            }
        }
        best
    }

    pub fn distance_to_junction(&self, p: [f64; 2]) -> f64 {
        self.junction_nodes
            .iter()
            .map(|j| dist(p, j.position))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapParams {
    pub extent: f64,
    pub grid_pitch: f64,
    pub jitter: f64,
    pub target_junctions: usize,
    pub road_half_width: f64,
}

impl Default for MapParams {
    fn default() -> Self {
        Self {
            extent: 400.0,
            grid_pitch: 60.0,
            jitter: 6.0,
            target_junctions: 4,
            road_half_width: 3.0,
        }
    }
}

impl MapParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.extent > 0.0) || !(self.grid_pitch > 0.0) {
            return Err(Error::InvalidInput("degenerate world extent or pitch".into()));
        }
        if self.extent < 2.0 * self.grid_pitch {
            return Err(Error::InvalidInput(
                "extent must cover at least a 3x3 node grid (extent >= 2*pitch)".into(),
            ));
        }
        if self.jitter < 0.0 || self.jitter > self.grid_pitch / 4.0 {
            return Err(Error::InvalidInput("jitter must be within a quarter pitch".into()));
        }
        if !(self.road_half_width > 0.0) || self.road_half_width > self.grid_pitch / 6.0 {
            return Err(Error::InvalidInput("road half width out of range".into()));
        }
        Ok(())
    }
}

/// Deterministic random road graph; the same seed yields an identical
/// map.
pub fn generate_map(seed: u64, params: &MapParams) -> Result<RoadMap> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let nx = (params.extent / params.grid_pitch).floor() as usize + 1;
    let ny = nx;
    let margin = (params.extent - (nx - 1) as f64 * params.grid_pitch) / 2.0;
    let clamp_lo = params.road_half_width + 1.0;
    let clamp_hi = params.extent - params.road_half_width - 1.0;
    let mut nodes = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let x = margin + i as f64 * params.grid_pitch
                + rng.random_range(-params.jitter..=params.jitter);
            let y = margin + j as f64 * params.grid_pitch
                + rng.random_range(-params.jitter..=params.jitter);
            nodes.push([x.clamp(clamp_lo, clamp_hi), y.clamp(clamp_lo, clamp_hi)]);
        }
    }
    let id = |i: usize, j: usize| j * nx + i;

    // Serpentine spine through every node.
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for j in 0..ny {
        for i in 0..nx - 1 {
            let (a, b) = if j % 2 == 0 { (i, i + 1) } else { (nx - 1 - i, nx - 2 - i) };
            edges.push((id(a, j), id(b, j)));
        }
        if j + 1 < ny {
            let i = if j % 2 == 0 { nx - 1 } else { 0 };
            edges.push((id(i, j), id(i, j + 1)));
        }
    }

    let mut degree = vec![0usize; nodes.len()];
    for &(a, b) in &edges {
        degree[a] += 1;
        degree[b] += 1;
    }

    if params.target_junctions > 0 {
        // Candidate extras: vertical grid edges not on the spine.
        let mut candidates = Vec::new();
        for j in 0..ny - 1 {
            for i in 0..nx {
                let e = (id(i, j), id(i, j + 1));
                if !edges.contains(&e) && !edges.contains(&(e.1, e.0)) {
                    candidates.push(e);
                }
            }
        }
        // Deterministic shuffle via seeded index draws.
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        for k in (1..order.len()).rev() {
            let swap = rng.random_range(0..=k);
            order.swap(k, swap);
        }
        let mut junctions = degree.iter().filter(|&&d| d >= 3).count();
        for &ci in &order {
            if junctions >= params.target_junctions {
                break;
            }
            let (a, b) = candidates[ci];
            edges.push((a, b));
            for n in [a, b] {
                degree[n] += 1;
                if degree[n] == 3 {
                    junctions += 1;
                }
            }
        }
        if junctions < params.target_junctions {
            return Err(Error::InvalidInput(format!(
                "grid too small for {} junctions (reached {junctions})",
                params.target_junctions
            )));
        }
    }

    // Maximal chains between non-degree-2 nodes become polylines;
    // their interior corners are filleted so roads bend with a turning
    // radius instead of kinking 90 degrees in a point. Sharp bends
    // read as junction-like blobs in the reconstructions and are
    // impossible to track at speed; junction nodes themselves stay
    // sharp so real junctions keep their multi-arm appearance.
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for (ei, &(a, b)) in edges.iter().enumerate() {
        adj[a].push(ei);
        adj[b].push(ei);
    }
    let mut visited = vec![false; edges.len()];
    let mut segments: Vec<Vec<[f64; 2]>> = Vec::new();
    let other = |ei: usize, n: usize| {
        let (a, b) = edges[ei];
        if a == n {
            b
        } else {
            a
        }
    };
    for start in 0..nodes.len() {
        if degree[start] == 2 {
            continue;
        }
        for &e0 in &adj[start] {
            if visited[e0] {
                continue;
            }
            let mut chain = vec![nodes[start]];
            let mut node = start;
            let mut edge = e0;
            loop {
                visited[edge] = true;
                node = other(edge, node);
                chain.push(nodes[node]);
                if degree[node] != 2 {
                    break;
                }
                let next = adj[node].iter().copied().find(|&e| !visited[e]);
                match next {
                    Some(e) => edge = e,
                    None => break,
                }
            }
            segments.push(fillet_polyline(&chain, 10.0, 4));
        }
    }
    // Pure cycles (all degree 2) would be missed above; the serpentine
    // construction never produces them, but guard anyway.
    if visited.iter().any(|v| !v) {
        return Err(Error::InvalidInput("map generation left disconnected cycles".into()));
    }

    let junction_nodes = (0..nodes.len())
        .filter(|&n| degree[n] >= 3)
        .map(|n| JunctionNode { position: nodes[n], arms: degree[n] })
        .collect();

    let map = RoadMap {
        segments,
        road_half_width: params.road_half_width,
        junction_nodes,
        world_extent: params.extent,
        texture_seed: seed,
    };
    map.validate()?;
    Ok(map)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Round interior corners with quadratic arcs of roughly `radius`
/// meters, keeping the endpoints exact. Each corner vertex becomes
/// `samples + 1` points along the Bezier through its cut points.
fn fillet_polyline(poly: &[[f64; 2]], radius: f64, samples: usize) -> Vec<[f64; 2]> {
    if poly.len() <= 2 {
        return poly.to_vec();
    }
    let mut out = vec![poly[0]];
    for i in 1..poly.len() - 1 {
        let a = poly[i - 1];
        let b = poly[i];
        let c = poly[i + 1];
        let dab = dist(a, b);
        let dbc = dist(b, c);
        // Leave straight stretches between consecutive fillets.
        let r = radius.min(dab / 2.5).min(dbc / 2.5);
        if r < 1e-6 {
            out.push(b);
            continue;
        }
        let p1 = [b[0] - (b[0] - a[0]) / dab * r, b[1] - (b[1] - a[1]) / dab * r];
        let p2 = [b[0] + (c[0] - b[0]) / dbc * r, b[1] + (c[1] - b[1]) / dbc * r];
        out.push(p1);
        for s in 1..samples {
            let t = s as f64 / samples as f64;
            let mt = 1.0 - t;
            out.push([
                mt * mt * p1[0] + 2.0 * t * mt * b[0] + t * t * p2[0],
                mt * mt * p1[1] + 2.0 * t * mt * b[1] + t * t * p2[1],
            ]);
        }
        out.push(p2);
    }
    out.push(*poly.last().unwrap());
    out
}

pub(crate) fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0);
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

/// Graph view over a road map: nodes are polyline endpoints, edges are
/// whole polylines.
#[derive(Debug, Clone)]
pub struct RoadGraph {
    pub nodes: Vec<[f64; 2]>,
    /// (node_a, node_b, polyline a->b).
    pub edges: Vec<(usize, usize, Vec<[f64; 2]>)>,
    pub adjacency: Vec<Vec<usize>>,
}

impl RoadGraph {
    pub fn from_map(map: &RoadMap) -> Self {
        let mut nodes: Vec<[f64; 2]> = Vec::new();
        let mut lookup = std::collections::HashMap::new();
        let mut intern = |p: [f64; 2], nodes: &mut Vec<[f64; 2]>| -> usize {
            let key = (p[0].to_bits(), p[1].to_bits());
            *lookup.entry(key).or_insert_with(|| {
                nodes.push(p);
                nodes.len() - 1
            })
        };
        let mut edges = Vec::new();
        for seg in &map.segments {
            let a = intern(seg[0], &mut nodes);
            let b = intern(*seg.last().unwrap(), &mut nodes);
            edges.push((a, b, seg.clone()));
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (ei, &(a, b, _)) in edges.iter().enumerate() {
            adjacency[a].push(ei);
            adjacency[b].push(ei);
        }
        Self { nodes, edges, adjacency }
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    /// Polyline of `edge` walked away from `from_node`.
    fn walk_edge(&self, edge: usize, from_node: usize) -> Vec<[f64; 2]> {
        let (a, _, ref poly) = self.edges[edge];
        if a == from_node {
            poly.clone()
        } else {
            let mut rev = poly.clone();
            rev.reverse();
            rev
        }
    }

    fn far_node(&self, edge: usize, from_node: usize) -> usize {
        let (a, b, _) = self.edges[edge];
        if a == from_node {
            b
        } else {
            a
        }
    }
}

/// A concrete drive through the map: dense centerline geometry, the
/// junction ordinals passed (with their arclengths), and the matching
/// turn program.
#[derive(Debug, Clone)]
pub struct RoutePath {
    pub polyline: Vec<[f64; 2]>,
    cumulative: Vec<f64>,
    pub length: f64,
    pub plan: RoutePlan,
    pub junction_count: usize,
    /// Arclength at each junction passage, route order.
    pub junction_arclengths: Vec<f64>,
}

impl RoutePath {
    fn from_polyline(
        polyline: Vec<[f64; 2]>,
        plan: RoutePlan,
        junction_arclengths: Vec<f64>,
    ) -> Self {
        let mut cumulative = Vec::with_capacity(polyline.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for pair in polyline.windows(2) {
            acc += dist(pair[0], pair[1]);
            cumulative.push(acc);
        }
        let junction_count = junction_arclengths.len();
        Self { polyline, cumulative, length: acc, plan, junction_count, junction_arclengths }
    }

    /// Restrict the path to the arclength window [u0, u1].
    fn trimmed(&self, u0: f64, u1: f64) -> RoutePath {
        let u0 = u0.clamp(0.0, self.length);
        let u1 = u1.clamp(u0, self.length);
        let mut polyline = vec![self.point_at(u0)];
        for (i, p) in self.polyline.iter().enumerate() {
            if self.cumulative[i] > u0 && self.cumulative[i] < u1 {
                polyline.push(*p);
            }
        }
        polyline.push(self.point_at(u1));
        polyline.dedup_by(|a, b| dist(*a, *b) < 1e-9);
        let arcs = self
            .junction_arclengths
            .iter()
            .filter(|&&u| u >= u0 && u <= u1)
            .map(|u| u - u0)
            .collect();
        RoutePath::from_polyline(polyline, self.plan.clone(), arcs)
    }

    pub fn start_pose(&self) -> DronePose {
        let a = self.polyline[0];
        let b = self.polyline[1];
        DronePose::new(a[0], a[1], (b[1] - a[1]).atan2(b[0] - a[0]))
    }

    /// Arclength of the closest point on the path plus the lateral
    /// distance to it.
    pub fn closest_point(&self, p: [f64; 2]) -> (f64, f64) {
        let mut best = (0.0, f64::INFINITY);
        for (i, pair) in self.polyline.windows(2).enumerate() {
            let (a, b) = (pair[0], pair[1]);
            let ab = [b[0] - a[0], b[1] - a[1]];
            let len2 = ab[0] * ab[0] + ab[1] * ab[1];
            let t = if len2 == 0.0 {
                0.0
            } else {
                (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
            };
            let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
            let d = dist(p, q);
            if d < best.1 {
                best = (self.cumulative[i] + t * len2.sqrt(), d);
            }
        }
        best
    }

    /// Point at arclength `u`, clamped to the ends.
    pub fn point_at(&self, u: f64) -> [f64; 2] {
        if u <= 0.0 {
            return self.polyline[0];
        }
        if u >= self.length {
            return *self.polyline.last().unwrap();
        }
        let i = match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&u).unwrap())
        {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        let seg_len = self.cumulative[i + 1] - self.cumulative[i];
        let t = if seg_len == 0.0 { 0.0 } else { (u - self.cumulative[i]) / seg_len };
        let a = self.polyline[i];
        let b = self.polyline[i + 1];
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    /// Lateral unit normal (left of travel) at arclength `u`.
    pub fn normal_at(&self, u: f64) -> [f64; 2] {
        let ahead = self.point_at((u + 0.5).min(self.length));
        let behind = self.point_at((u - 0.5).max(0.0));
        let d = [ahead[0] - behind[0], ahead[1] - behind[1]];
        let len = (d[0] * d[0] + d[1] * d[1]).sqrt().max(1e-12);
        [-d[1] / len, d[0] / len]
    }
}

fn signed_angle(from: [f64; 2], to: [f64; 2]) -> f64 {
    (from[0] * to[1] - from[1] * to[0]).atan2(from[0] * to[0] + from[1] * to[1])
}

/// Walk the graph from `start_edge` (leaving `start_node`), applying
/// `turns` in order at each junction node (degree >= 3). Ends one edge
/// past the final turn, or at a dead end after the turns are spent.
/// Routes must be simple paths: revisiting a node would make the
/// closest-point guidance ambiguous, so such walks are rejected.
pub fn plan_route(
    graph: &RoadGraph,
    start_node: usize,
    start_edge: usize,
    turns: &[Turn],
) -> Result<RoutePath> {
    let mut polyline: Vec<[f64; 2]> = Vec::new();
    let mut walked_len = 0.0f64;
    let mut node = start_node;
    let mut edge = start_edge;
    let mut turn_idx = 0usize;
    let mut directives = Vec::new();
    let mut junction_arcs = Vec::new();
    let mut visited_nodes = vec![start_node];

    loop {
        let walked = graph.walk_edge(edge, node);
        let from = if polyline.is_empty() { 0 } else { 1 };
        for pair in walked.windows(2) {
            walked_len += dist(pair[0], pair[1]);
        }
        polyline.extend_from_slice(&walked[from..]);
        let arrived = graph.far_node(edge, node);
        if visited_nodes.contains(&arrived) {
            return Err(Error::InvalidRoute(format!("route revisits node {arrived}")));
        }
        visited_nodes.push(arrived);
        let incoming_dir = {
            let n = walked.len();
            let a = walked[n - 2];
            let b = walked[n - 1];
            [b[0] - a[0], b[1] - a[1]]
        };

        let deg = graph.degree(arrived);
        if turn_idx >= turns.len() {
            // One edge past the last turn (or the start edge when no
            // turns were requested) ends the walk.
            break;
        }

        match deg {
            1 => {
                return Err(Error::InvalidRoute(format!(
                    "dead end at node {arrived} with {} turns unconsumed",
                    turns.len() - turn_idx
                )))
            }
            2 => {
                let next = graph.adjacency[arrived]
                    .iter()
                    .copied()
                    .find(|&e| e != edge)
                    .expect("degree-2 node has another edge");
                node = arrived;
                edge = next;
            }
            _ => {
                let turn = turns[turn_idx];
                turn_idx += 1;
                directives.push(Directive { junction: turn_idx as u32, turn });
                junction_arcs.push(walked_len);
                // Choose the outgoing edge by relative angle.
                let mut best: Option<(usize, f64)> = None;
                for &cand in &graph.adjacency[arrived] {
                    if cand == edge {
                        continue;
                    }
                    let out = graph.walk_edge(cand, arrived);
                    let dir = [out[1][0] - out[0][0], out[1][1] - out[0][1]];
                    let rel = signed_angle(incoming_dir, dir);
                    let score = match turn {
                        Turn::Left => -rel,           // most counter-clockwise wins
                        Turn::Right => rel,           // most clockwise wins
                        Turn::Straight => rel.abs(),  // smallest deviation wins
                    };
                    if best.map_or(true, |(_, s)| score < s) {
                        best = Some((cand, score));
                    }
                }
                let (next, _) = best.expect("junction has an outgoing edge");
                node = arrived;
                edge = next;
            }
        }
    }

    if turn_idx < turns.len() {
        return Err(Error::InvalidRoute("route ended before all turns were applied".into()));
    }
    if polyline.len() < 2 {
        return Err(Error::InvalidRoute("route too short".into()));
    }
    let plan = RoutePlan { directives, terminal: TerminalAction::Halt };
    plan.validate()?;
    Ok(RoutePath::from_polyline(polyline, plan, junction_arcs))
}

/// Bounds for the trimmed drive around its junctions.
const ROUTE_LEAD_IN_M: f64 = 35.0;
const ROUTE_TAIL_M: f64 = 40.0;
/// Minimum gap kept between the route end and any junction node so the
/// terminal region carries no junction flags.
const ROUTE_END_CLEARANCE_M: f64 = 10.0;

/// Deterministically search for a simple route passing `min_junctions`
/// junctions with length in [min_length, max_length]: seeded turn
/// sequences over seeded starts, trimmed to a bounded window around
/// the junctions so lead-in and tail chains stay short.
pub fn find_route(
    map: &RoadMap,
    min_junctions: usize,
    min_length: f64,
    max_length: f64,
    seed: u64,
) -> Result<RoutePath> {
    let graph = RoadGraph::from_map(map);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _attempt in 0..400 {
        let turns: Vec<Turn> = (0..min_junctions)
            .map(|_| match rng.random_range(0..3u32) {
                0 => Turn::Left,
                1 => Turn::Right,
                _ => Turn::Straight,
            })
            .collect();
        let edge = rng.random_range(0..graph.edges.len());
        let start_node = if rng.random::<bool>() { graph.edges[edge].0 } else { graph.edges[edge].1 };
        let Ok(route) = plan_route(&graph, start_node, edge, &turns) else {
            continue;
        };
        let trimmed = if route.junction_arclengths.is_empty() {
            route.trimmed(0.0, min_length.max(ROUTE_LEAD_IN_M + ROUTE_TAIL_M))
        } else {
            let first = route.junction_arclengths[0];
            let last = *route.junction_arclengths.last().unwrap();
            let mut end = (last + ROUTE_TAIL_M).min(route.length);
            // Keep the route end clear of the map's junction nodes so
            // terminal frames carry no junction flags.
            while end > last + ROUTE_END_CLEARANCE_M
                && map.distance_to_junction(route.point_at(end)) < ROUTE_END_CLEARANCE_M
            {
                end -= 5.0;
            }
            route.trimmed((first - ROUTE_LEAD_IN_M).max(0.0), end)
        };
        if trimmed.length >= min_length
            && trimmed.length <= max_length
            && trimmed.junction_count >= min_junctions
            && trimmed.polyline.len() >= 2
            && map.distance_to_junction(trimmed.polyline[0]) > ROUTE_END_CLEARANCE_M
            && map.distance_to_junction(*trimmed.polyline.last().unwrap()) > ROUTE_END_CLEARANCE_M
        {
            return Ok(trimmed);
        }
    }
    Err(Error::InvalidRoute(format!(
        "no route with {min_junctions}+ junctions in [{min_length}, {max_length}] m found"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_map() {
        let params = MapParams::default();
        let a = generate_map(1, &params).unwrap();
        let b = generate_map(1, &params).unwrap();
        assert_eq!(a, b);
        let c = generate_map(2, &params).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_junctions_gives_single_polyline() {
        let params = MapParams { target_junctions: 0, ..Default::default() };
        let map = generate_map(3, &params).unwrap();
        assert_eq!(map.segments.len(), 1);
        assert!(map.junction_nodes.is_empty());
    }

    #[test]
    fn requested_junctions_exist() {
        let params = MapParams { target_junctions: 3, ..Default::default() };
        let map = generate_map(5, &params).unwrap();
        assert!(map.junction_nodes.len() >= 3);
        for j in &map.junction_nodes {
            assert!(j.arms >= 3);
        }
    }

    #[test]
    fn degenerate_extent_is_rejected() {
        let params = MapParams { extent: 50.0, grid_pitch: 60.0, ..Default::default() };
        assert!(generate_map(1, &params).is_err());
    }

    #[test]
    fn map_json_round_trip() {
        let map = generate_map(7, &MapParams::default()).unwrap();
        let back = RoadMap::from_json(&map.to_json()).unwrap();
        assert_eq!(map, back);
    }

    #[test]
    fn graph_reconstruction_connects_segments() {
        let map = generate_map(9, &MapParams::default()).unwrap();
        let graph = RoadGraph::from_map(&map);
        assert_eq!(graph.edges.len(), map.segments.len());
        // Junction nodes appear as graph nodes with matching degree.
        for j in &map.junction_nodes {
            let found = graph
                .nodes
                .iter()
                .position(|n| n == &j.position)
                .expect("junction node present in graph");
            assert_eq!(graph.degree(found), j.arms);
        }
    }

    #[test]
    fn find_route_meets_requirements() {
        let map = generate_map(11, &MapParams { target_junctions: 8, ..Default::default() }).unwrap();
        let route = find_route(&map, 3, 350.0, 700.0, 0).unwrap();
        assert!(route.length >= 350.0);
        assert!(route.junction_count >= 3);
        assert_eq!(route.plan.directives.len(), 3);
        // Directives are the consecutive junction ordinals.
        for (i, d) in route.plan.directives.iter().enumerate() {
            assert_eq!(d.junction, i as u32 + 1);
        }
    }

    #[test]
    fn route_geometry_queries() {
        let map = generate_map(13, &MapParams { target_junctions: 8, ..Default::default() }).unwrap();
        let route = find_route(&map, 2, 200.0, 700.0, 1).unwrap();
        let (u0, lat0) = route.closest_point(route.polyline[0]);
        assert!(u0.abs() < 1e-9);
        assert!(lat0 < 1e-9);
        let mid = route.point_at(route.length / 2.0);
        let (u_mid, lat_mid) = route.closest_point(mid);
        assert!((u_mid - route.length / 2.0).abs() < 1e-6);
        assert!(lat_mid < 1e-9);
        let n = route.normal_at(route.length / 2.0);
        assert!((n[0] * n[0] + n[1] * n[1] - 1.0).abs() < 1e-9);
    }
}
