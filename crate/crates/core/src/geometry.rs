//! Koch pre-fractal curves, the snowflake domain with its fiber layer, the
//! weight field and boundary quadratures.
//!
//! The base triangle is A=(0,0), B=(1,0), C=(1/2,-sqrt(3)/2), traversed
//! A -> B -> C (clockwise). Each side is the image of the unit segment under
//! `z -> start + z * (end - start)`, so bumps and fiber cells lie to the left
//! of travel, i.e. outside the triangle.

use crate::error::{Error, Result};
use crate::vec2::{closest_on_segment, segment_crossing, Vec2};

pub const TRIANGLE: [Vec2; 3] = [
    Vec2::new(0.0, 0.0),
    Vec2::new(1.0, 0.0),
    Vec2::new(0.5, -0.866_025_403_784_438_6),
];

/// Rotation angle of the two middle maps of the family.
pub fn koch_angle(alpha: f64) -> f64 {
    ((alpha * (4.0 - alpha)).sqrt() / 2.0).asin()
}

/// Largest fiber apex parameter for which cells satisfy the open set condition.
pub fn max_fiber_b(alpha: f64) -> f64 {
    (koch_angle(alpha) / 2.0).tan()
}

/// Hausdorff dimension log 4 / log alpha of the limit curve.
pub fn fractal_dimension(alpha: f64) -> f64 {
    4f64.ln() / alpha.ln()
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 2.0 && alpha < 4.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("alpha = {alpha} must lie in (2, 4)")))
    }
}

/// Orientation preserving similitude `z -> scale * e^{i rotation} z + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IfsSimilitude {
    pub scale: f64,
    pub rotation: f64,
    pub translation: Vec2,
}

impl IfsSimilitude {
    fn multiplier(&self) -> Vec2 {
        Vec2::from_polar(self.scale, self.rotation)
    }

    pub fn apply(&self, z: Vec2) -> Vec2 {
        self.multiplier().cmul(z) + self.translation
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &IfsSimilitude) -> IfsSimilitude {
        IfsSimilitude {
            scale: self.scale * inner.scale,
            rotation: self.rotation + inner.rotation,
            translation: self.apply(inner.translation),
        }
    }
}

/// The four maps generating the Koch curve with contraction 1/alpha.
pub fn build_similitudes(alpha: f64) -> Result<[IfsSimilitude; 4]> {
    check_alpha(alpha)?;
    let theta = koch_angle(alpha);
    let s = 1.0 / alpha;
    let peak_height = (1.0 / alpha - 0.25).sqrt();
    Ok([
        IfsSimilitude {
            scale: s,
            rotation: 0.0,
            translation: Vec2::ZERO,
        },
        IfsSimilitude {
            scale: s,
            rotation: theta,
            translation: Vec2::new(s, 0.0),
        },
        IfsSimilitude {
            scale: s,
            rotation: -theta,
            translation: Vec2::new(0.5, peak_height),
        },
        IfsSimilitude {
            scale: s,
            rotation: 0.0,
            translation: Vec2::new(1.0 - s, 0.0),
        },
    ])
}

/// Level-n polygonal approximation of the snowflake boundary.
#[derive(Debug, Clone)]
pub struct PrefractalBoundary {
    pub level: u32,
    pub alpha: f64,
    /// Vertices of one side in unit coordinates, from (0,0) to (1,0).
    pub unit_side: Vec<Vec2>,
    /// World vertices of each side, `4^level + 1` per side, endpoints included.
    pub sides: [Vec<Vec2>; 3],
}

impl PrefractalBoundary {
    pub fn initial(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let unit_side = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)];
        let sides = place_sides(&unit_side);
        Ok(PrefractalBoundary {
            level: 0,
            alpha,
            unit_side,
            sides,
        })
    }

    pub fn at_level(alpha: f64, level: u32) -> Result<Self> {
        if level > 12 {
            return Err(Error::Parameter(format!(
                "level {level} too large to store as a polyline (max 12)"
            )));
        }
        let mut c = Self::initial(alpha)?;
        for _ in 0..level {
            c = c.refine();
        }
        Ok(c)
    }

    /// One application of the four maps: `K^{n+1} = ⋃ ψ_i(K^n)`.
    pub fn refine(&self) -> Self {
        let maps = build_similitudes(self.alpha).expect("alpha validated at construction");
        let m = self.unit_side.len();
        let mut unit = Vec::with_capacity(4 * (m - 1) + 1);
        for (k, map) in maps.iter().enumerate() {
            let skip_first = k > 0;
            for (j, z) in self.unit_side.iter().enumerate() {
                if skip_first && j == 0 {
                    continue;
                }
                unit.push(map.apply(*z));
            }
        }
        let sides = place_sides(&unit);
        PrefractalBoundary {
            level: self.level + 1,
            alpha: self.alpha,
            unit_side: unit,
            sides,
        }
    }

    pub fn segments_per_side(&self) -> usize {
        self.unit_side.len() - 1
    }

    pub fn segment_count(&self) -> usize {
        3 * self.segments_per_side()
    }

    /// Nominal segment length alpha^{-n}.
    pub fn segment_length(&self) -> f64 {
        self.alpha.powi(-(self.level as i32))
    }

    /// Closed clockwise ring of all vertices (first vertex not repeated).
    pub fn ring(&self) -> Vec<Vec2> {
        let mut out = Vec::with_capacity(self.segment_count());
        for side in &self.sides {
            out.extend_from_slice(&side[..side.len() - 1]);
        }
        out
    }

    pub fn arclength(&self) -> f64 {
        self.sides
            .iter()
            .flat_map(|s| s.windows(2).map(|w| (w[1] - w[0]).norm()))
            .sum()
    }

    /// Address word (digits 1..4, most significant first) of segment `index` on a side.
    pub fn address(&self, index: usize) -> String {
        segment_address(index, self.level)
    }
}

/// Address word of a segment on a side at the given level.
pub fn segment_address(index: usize, level: u32) -> String {
    let mut digits = vec![b'1'; level as usize];
    let mut i = index;
    for k in (0..level as usize).rev() {
        digits[k] = b'1' + (i % 4) as u8;
        i /= 4;
    }
    String::from_utf8(digits).expect("ascii digits")
}

fn place_sides(unit: &[Vec2]) -> [Vec<Vec2>; 3] {
    let place = |start: Vec2, end: Vec2| -> Vec<Vec2> {
        let d = end - start;
        unit.iter().map(|z| start + d.cmul(*z)).collect()
    };
    [
        place(TRIANGLE[0], TRIANGLE[1]),
        place(TRIANGLE[1], TRIANGLE[2]),
        place(TRIANGLE[2], TRIANGLE[0]),
    ]
}

/// Triangular fiber cell standing on one boundary segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberCell {
    pub side: usize,
    pub index: usize,
    pub base: [Vec2; 2],
    pub apex: Vec2,
}

impl FiberCell {
    pub fn vertices(&self) -> [Vec2; 3] {
        [self.base[0], self.base[1], self.apex]
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let [a, b, c] = self.vertices();
        // vertices are counter-clockwise: base runs left to right with apex on the left
        (b - a).cross(p - a) >= 0.0 && (c - b).cross(p - b) >= 0.0 && (a - c).cross(p - c) >= 0.0
    }

    pub fn height(&self) -> f64 {
        let (foot, _) = closest_on_segment(self.apex, self.base[0], self.base[1]);
        (self.apex - foot).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Region {
    InteriorOmega,
    Fiber,
    Outside,
    OnInterface,
    OnOuterBoundary,
}

/// Result of projecting a point onto the pre-fractal interface.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub foot: Vec2,
    /// Index into the closed ring of interface segments.
    pub segment: usize,
    pub side: usize,
    pub address: String,
    pub distance: f64,
    /// Position of the foot along the segment, in [0, 1].
    pub param: f64,
}

/// Edges are numbered with interface segments first, then roof edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeClass {
    Interface(usize),
    Roof(usize),
}

/// Uniform grid over the domain bounding box, storing edges and cells per grid square.
#[derive(Debug, Clone)]
struct GridIndex {
    origin: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    edge_start: Vec<u32>,
    edge_ids: Vec<u32>,
    tri_start: Vec<u32>,
    tri_ids: Vec<u32>,
}

impl GridIndex {
    fn build(lo: Vec2, hi: Vec2, cell: f64, edges: &[(Vec2, Vec2)], tris: &[[Vec2; 3]]) -> Self {
        let pad = cell * 0.5;
        let origin = Vec2::new(lo.x - pad, lo.y - pad);
        let nx = (((hi.x - lo.x) + 2.0 * pad) / cell).ceil() as usize + 1;
        let ny = (((hi.y - lo.y) + 2.0 * pad) / cell).ceil() as usize + 1;
        let mut g = GridIndex {
            origin,
            cell,
            nx,
            ny,
            edge_start: Vec::new(),
            edge_ids: Vec::new(),
            tri_start: Vec::new(),
            tri_ids: Vec::new(),
        };
        let edge_boxes: Vec<(Vec2, Vec2)> = edges.iter().map(|(a, b)| bbox(&[*a, *b])).collect();
        let tri_boxes: Vec<(Vec2, Vec2)> = tris.iter().map(|t| bbox(t)).collect();
        let (s, ids) = g.bucket(&edge_boxes);
        g.edge_start = s;
        g.edge_ids = ids;
        let (s, ids) = g.bucket(&tri_boxes);
        g.tri_start = s;
        g.tri_ids = ids;
        g
    }

    fn bucket(&self, boxes: &[(Vec2, Vec2)]) -> (Vec<u32>, Vec<u32>) {
        let n = self.nx * self.ny;
        let mut counts = vec![0u32; n + 1];
        let eps = self.cell * 1e-9;
        for (lo, hi) in boxes {
            let (i0, j0) = self.cell_of(Vec2::new(lo.x - eps, lo.y - eps));
            let (i1, j1) = self.cell_of(Vec2::new(hi.x + eps, hi.y + eps));
            for j in j0..=j1 {
                for i in i0..=i1 {
                    counts[j * self.nx + i + 1] += 1;
                }
            }
        }
        for k in 0..n {
            counts[k + 1] += counts[k];
        }
        let mut fill = counts.clone();
        let mut ids = vec![0u32; counts[n] as usize];
        for (id, (lo, hi)) in boxes.iter().enumerate() {
            let (i0, j0) = self.cell_of(Vec2::new(lo.x - eps, lo.y - eps));
            let (i1, j1) = self.cell_of(Vec2::new(hi.x + eps, hi.y + eps));
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let c = j * self.nx + i;
                    ids[fill[c] as usize] = id as u32;
                    fill[c] += 1;
                }
            }
        }
        (counts, ids)
    }

    #[inline]
    fn cell_of(&self, p: Vec2) -> (usize, usize) {
        let fx = ((p.x - self.origin.x) / self.cell).floor();
        let fy = ((p.y - self.origin.y) / self.cell).floor();
        let i = fx.clamp(0.0, (self.nx - 1) as f64) as usize;
        let j = fy.clamp(0.0, (self.ny - 1) as f64) as usize;
        (i, j)
    }

    fn inside(&self, p: Vec2) -> bool {
        let x = (p.x - self.origin.x) / self.cell;
        let y = (p.y - self.origin.y) / self.cell;
        x >= 0.0 && y >= 0.0 && x < self.nx as f64 && y < self.ny as f64
    }

    #[inline]
    fn edges_in(&self, i: usize, j: usize) -> &[u32] {
        let c = j * self.nx + i;
        &self.edge_ids[self.edge_start[c] as usize..self.edge_start[c + 1] as usize]
    }

    #[inline]
    fn tris_in(&self, i: usize, j: usize) -> &[u32] {
        let c = j * self.nx + i;
        &self.tri_ids[self.tri_start[c] as usize..self.tri_start[c + 1] as usize]
    }
}

fn bbox(pts: &[Vec2]) -> (Vec2, Vec2) {
    let mut lo = pts[0];
    let mut hi = pts[0];
    for p in &pts[1..] {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    (lo, hi)
}

/// Snowflake domain, fiber layer and the composite domain with its outer polyline.
#[derive(Debug, Clone)]
pub struct DomainModel {
    pub boundary: PrefractalBoundary,
    pub b: f64,
    pub sigma_n: f64,
    /// Interface vertices as a closed clockwise ring.
    pub ring: Vec<Vec2>,
    /// Apex of the fiber cell on ring segment i.
    pub apexes: Vec<Vec2>,
    grid: GridIndex,
    lo: Vec2,
    hi: Vec2,
}

impl DomainModel {
    pub fn build(alpha: f64, level: u32, b: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if level < 1 {
            return Err(Error::Parameter("level must be at least 1".into()));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::Parameter(format!("fiber parameter b = {b} must be positive")));
        }
        let boundary = PrefractalBoundary::at_level(alpha, level)?;
        let ring = boundary.ring();
        let m = ring.len();
        let apexes: Vec<Vec2> = (0..m)
            .map(|i| {
                let a = ring[i];
                let d = ring[(i + 1) % m] - a;
                a + d * 0.5 + d.perp() * (b / 2.0)
            })
            .collect();
        let bmax = max_fiber_b(alpha);
        if b > bmax * (1.0 + 1e-12) {
            let detail = match first_overlapping_pair(&ring, &apexes, 1e-9 * boundary.segment_length()) {
                Some((i, j)) => format!(
                    "cells {} and {} overlap",
                    describe_segment(&boundary, i),
                    describe_segment(&boundary, j)
                ),
                None => "no cell pair overlaps at this level yet".to_string(),
            };
            return Err(Error::Geometry(format!(
                "b = {b} exceeds the open-set bound {bmax}: {detail}"
            )));
        }

        let mut edges: Vec<(Vec2, Vec2)> = Vec::with_capacity(3 * m);
        for i in 0..m {
            edges.push((ring[i], ring[(i + 1) % m]));
        }
        for i in 0..m {
            edges.push((ring[i], apexes[i]));
            edges.push((apexes[i], ring[(i + 1) % m]));
        }
        let tris: Vec<[Vec2; 3]> = (0..m).map(|i| [ring[i], ring[(i + 1) % m], apexes[i]]).collect();
        let mut all = ring.clone();
        all.extend_from_slice(&apexes);
        let (lo, hi) = bbox(&all);
        let extent = (hi.x - lo.x).max(hi.y - lo.y);
        let cell = boundary.segment_length().max(extent / 512.0);
        let grid = GridIndex::build(lo, hi, cell, &edges, &tris);
        let sigma_n = (alpha / 4.0).powi(level as i32);
        Ok(DomainModel {
            boundary,
            b,
            sigma_n,
            ring,
            apexes,
            grid,
            lo,
            hi,
        })
    }

    pub fn level(&self) -> u32 {
        self.boundary.level
    }

    pub fn alpha(&self) -> f64 {
        self.boundary.alpha
    }

    pub fn segment_count(&self) -> usize {
        self.ring.len()
    }

    pub fn segment_length(&self) -> f64 {
        self.boundary.segment_length()
    }

    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        (self.lo, self.hi)
    }

    /// Largest weight attained on the fiber layer.
    pub fn max_weight(&self) -> f64 {
        3.0 * (self.b / 2.0) * self.segment_length() / (3.0 + self.b * self.b)
    }

    pub fn fiber_cells(&self) -> Vec<FiberCell> {
        (0..self.ring.len()).map(|i| self.cell(i)).collect()
    }

    pub fn cell(&self, i: usize) -> FiberCell {
        let per_side = self.boundary.segments_per_side();
        FiberCell {
            side: i / per_side,
            index: i % per_side,
            base: [self.ring[i], self.ring[(i + 1) % self.ring.len()]],
            apex: self.apexes[i],
        }
    }

    /// Endpoints of interface segment i.
    #[inline]
    pub fn interface_segment(&self, i: usize) -> (Vec2, Vec2) {
        (self.ring[i], self.ring[(i + 1) % self.ring.len()])
    }

    /// Endpoints of roof edge j (two per cell).
    #[inline]
    pub fn roof_edge(&self, j: usize) -> (Vec2, Vec2) {
        let i = j / 2;
        if j % 2 == 0 {
            (self.ring[i], self.apexes[i])
        } else {
            (self.apexes[i], self.ring[(i + 1) % self.ring.len()])
        }
    }

    #[inline]
    pub fn edge(&self, id: usize) -> (Vec2, Vec2) {
        match self.edge_class(id) {
            EdgeClass::Interface(i) => self.interface_segment(i),
            EdgeClass::Roof(j) => self.roof_edge(j),
        }
    }

    #[inline]
    pub fn edge_class(&self, id: usize) -> EdgeClass {
        let m = self.ring.len();
        if id < m {
            EdgeClass::Interface(id)
        } else {
            EdgeClass::Roof(id - m)
        }
    }

    /// Outer boundary of the composite domain as a closed ring.
    pub fn outer_ring(&self) -> Vec<Vec2> {
        let mut out = Vec::with_capacity(2 * self.ring.len());
        for i in 0..self.ring.len() {
            out.push(self.ring[i]);
            out.push(self.apexes[i]);
        }
        out
    }

    /// Weight on the fiber at parameter s along interface segment i.
    #[inline]
    pub fn fiber_weight_at_param(&self, s: f64) -> f64 {
        let height = self.segment_length() * self.b * s.min(1.0 - s).max(0.0);
        3.0 * height / (3.0 + self.b * self.b)
    }

    /// Containment in the closed snowflake polygon by winding number
    /// (half-open edge rule).
    pub fn in_omega(&self, p: Vec2) -> bool {
        winding_number(&self.ring, p) != 0
    }

    /// Index of a fiber cell containing p, lowest index on shared edges.
    pub fn fiber_cell_at(&self, p: Vec2) -> Option<usize> {
        if !self.grid.inside(p) {
            return None;
        }
        let (i, j) = self.grid.cell_of(p);
        self.grid
            .tris_in(i, j)
            .iter()
            .map(|&t| t as usize)
            .filter(|&t| self.cell(t).contains(p))
            .min()
    }

    /// Nearest edge among those accepted by `keep`, searching no farther than `cap`.
    /// Returns (distance, edge id, param along edge).
    fn nearest_edge(&self, p: Vec2, cap: f64, keep: impl Fn(usize) -> bool) -> Option<(f64, usize, f64)> {
        let mut best: Option<(f64, usize, f64)> = None;
        let consider = |id: usize, best: &mut Option<(f64, usize, f64)>| {
            if !keep(id) {
                return;
            }
            let (a, b) = self.edge(id);
            let (foot, s) = closest_on_segment(p, a, b);
            let d = (p - foot).norm();
            match best {
                Some((bd, bid, _)) if d > *bd || (d == *bd && id >= *bid) => {}
                _ => *best = Some((d, id, s)),
            }
        };
        if !self.grid.inside(p) {
            for id in 0..3 * self.ring.len() {
                consider(id, &mut best);
            }
            return best.filter(|b| b.0 <= cap || cap.is_infinite());
        }
        let g = &self.grid;
        let (ci, cj) = g.cell_of(p);
        let max_k = g.nx.max(g.ny);
        for k in 0..=max_k {
            let i0 = ci as isize - k as isize;
            let i1 = ci as isize + k as isize;
            let j0 = cj as isize - k as isize;
            let j1 = cj as isize + k as isize;
            if i0 < 0 && j0 < 0 && i1 >= g.nx as isize && j1 >= g.ny as isize {
                break;
            }
            for j in j0.max(0)..=j1.min(g.ny as isize - 1) {
                let on_row_edge = j == j0 || j == j1;
                let mut i = i0.max(0);
                while i <= i1.min(g.nx as isize - 1) {
                    if on_row_edge || i == i0 || i == i1 {
                        for &id in g.edges_in(i as usize, j as usize) {
                            consider(id as usize, &mut best);
                        }
                    }
                    if !on_row_edge && i == i0 {
                        i = i1;
                    } else {
                        i += 1;
                    }
                }
            }
            let reach = k as f64 * g.cell;
            if let Some((d, _, _)) = best {
                if d <= reach {
                    break;
                }
            }
            if reach >= cap {
                break;
            }
        }
        best.filter(|b| b.0 <= cap || cap.is_infinite())
    }

    /// Nearest point of the pre-fractal interface; ties go to the lowest segment index.
    pub fn project_to_interface(&self, p: Vec2) -> Projection {
        let m = self.ring.len();
        let (d, id, s) = self
            .nearest_edge(p, f64::INFINITY, |id| id < m)
            .expect("interface is non-empty");
        let (a, b) = self.interface_segment(id);
        let per_side = self.boundary.segments_per_side();
        Projection {
            foot: a + (b - a) * s,
            segment: id,
            side: id / per_side,
            address: self.boundary.address(id % per_side),
            distance: d,
            param: s,
        }
    }

    /// Distance to the interface if it is at most `cap`, with segment index and param.
    #[inline]
    pub fn interface_distance(&self, p: Vec2, cap: f64) -> Option<(f64, usize, f64)> {
        let m = self.ring.len();
        self.nearest_edge(p, cap, |id| id < m)
    }

    /// Distance to the outer roof polyline if at most `cap`.
    #[inline]
    pub fn roof_distance(&self, p: Vec2, cap: f64) -> Option<(f64, usize, f64)> {
        let m = self.ring.len();
        self.nearest_edge(p, cap, |id| id >= m).map(|(d, id, s)| (d, id - m, s))
    }

    /// Distance to the nearest edge of any kind, saturated at `cap`.
    #[inline]
    pub fn clearance(&self, p: Vec2, cap: f64) -> f64 {
        self.nearest_edge(p, cap, |_| true).map_or(cap, |b| b.0.min(cap))
    }

    /// First edge crossed by the segment p -> q, ignoring `skip` and crossings
    /// closer to p than `min_len`. Returns (param along p->q, edge id).
    pub fn first_crossing(&self, p: Vec2, q: Vec2, skip: Option<usize>, min_len: f64) -> Option<(f64, usize)> {
        let g = &self.grid;
        let (lo, hi) = bbox(&[p, q]);
        let (i0, j0) = g.cell_of(lo);
        let (i1, j1) = g.cell_of(hi);
        let len = (q - p).norm();
        if len == 0.0 {
            return None;
        }
        let tmin = min_len / len;
        let mut best: Option<(f64, usize)> = None;
        for j in j0..=j1 {
            for i in i0..=i1 {
                for &id in g.edges_in(i, j) {
                    let id = id as usize;
                    if Some(id) == skip {
                        continue;
                    }
                    let (a, b) = self.edge(id);
                    if let Some(t) = segment_crossing(p, q, a, b) {
                        if t < tmin {
                            continue;
                        }
                        match best {
                            Some((bt, bid)) if t > bt || (t == bt && id >= bid) => {}
                            _ => best = Some((t, id)),
                        }
                    }
                }
            }
        }
        best
    }

    pub fn classify(&self, p: Vec2, tol: f64) -> Result<Region> {
        if !(tol > 0.0) {
            return Err(Error::Parameter(format!("tolerance {tol} must be positive")));
        }
        if !p.is_finite() {
            return Err(Error::Parameter("non-finite coordinates".into()));
        }
        if self.interface_distance(p, tol).is_some_and(|(d, _, _)| d < tol) {
            return Ok(Region::OnInterface);
        }
        if self.roof_distance(p, tol).is_some_and(|(d, _, _)| d < tol) {
            return Ok(Region::OnOuterBoundary);
        }
        if self.in_omega(p) {
            Ok(Region::InteriorOmega)
        } else if self.fiber_cell_at(p).is_some() {
            Ok(Region::Fiber)
        } else {
            Ok(Region::Outside)
        }
    }

    /// Whether p lies in the closed composite domain.
    pub fn in_composite(&self, p: Vec2) -> bool {
        self.in_omega(p) || self.fiber_cell_at(p).is_some() || self.interface_distance(p, 1e-12).is_some()
    }

    /// Conductivity weight: 1 on the closed snowflake, proportional to the local
    /// cell thickness on the fiber.
    pub fn weight_at(&self, x: Vec2) -> Result<f64> {
        let tol = 1e-12 * self.segment_length();
        if self.interface_distance(x, tol).is_some() || self.in_omega(x) {
            return Ok(1.0);
        }
        match self.fiber_cell_at(x) {
            Some(i) => {
                let (a, b) = self.interface_segment(i);
                let (_, s) = closest_on_segment(x, a, b);
                Ok(self.fiber_weight_at_param(s))
            }
            None => Err(Error::Domain(format!("({}, {}) is not in the composite domain", x.x, x.y))),
        }
    }

    /// Midpoint rule for `sigma_n * ∫ g ds` over the interface.
    pub fn arclength_quadrature(&self, g: impl Fn(Vec2) -> f64) -> f64 {
        // sigma_n * alpha^{-n} = 4^{-n}, a power of two
        let w = 0.25f64.powi(self.level() as i32);
        let sum: f64 = (0..self.ring.len())
            .map(|i| {
                let (a, b) = self.interface_segment(i);
                g((a + b) * 0.5)
            })
            .sum();
        w * sum
    }
}

fn describe_segment(boundary: &PrefractalBoundary, i: usize) -> String {
    let per_side = boundary.segments_per_side();
    format!("side {} address {}", i / per_side + 1, boundary.address(i % per_side))
}

fn winding_number(ring: &[Vec2], p: Vec2) -> i32 {
    let mut wn = 0;
    let n = ring.len();
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        if a.y <= p.y {
            if b.y > p.y && (b - a).cross(p - a) > 0.0 {
                wn += 1;
            }
        } else if b.y <= p.y && (b - a).cross(p - a) < 0.0 {
            wn -= 1;
        }
    }
    wn
}

/// Whether two triangles overlap with positive area, up to `tol` (separating axis test).
pub fn triangles_overlap(t1: &[Vec2; 3], t2: &[Vec2; 3], tol: f64) -> bool {
    for tri in [t1, t2] {
        for k in 0..3 {
            let e = tri[(k + 1) % 3] - tri[k];
            let n = e.perp();
            let len = n.norm();
            if len == 0.0 {
                continue;
            }
            let n = n * (1.0 / len);
            let proj = |t: &[Vec2; 3]| {
                let v = t.map(|p| p.dot(n));
                (v[0].min(v[1]).min(v[2]), v[0].max(v[1]).max(v[2]))
            };
            let (a0, a1) = proj(t1);
            let (b0, b1) = proj(t2);
            if a1 <= b0 + tol || b1 <= a0 + tol {
                return false;
            }
        }
    }
    true
}

fn first_overlapping_pair(ring: &[Vec2], apexes: &[Vec2], tol: f64) -> Option<(usize, usize)> {
    let m = ring.len();
    let tris: Vec<[Vec2; 3]> = (0..m).map(|i| [ring[i], ring[(i + 1) % m], apexes[i]]).collect();
    let boxes: Vec<(Vec2, Vec2)> = tris.iter().map(|t| bbox(t)).collect();
    for i in 0..m {
        for j in i + 1..m {
            let (l1, h1) = boxes[i];
            let (l2, h2) = boxes[j];
            if h1.x <= l2.x || h2.x <= l1.x || h1.y <= l2.y || h2.y <= l1.y {
                continue;
            }
            if triangles_overlap(&tris[i], &tris[j], tol) {
                return Some((i, j));
            }
        }
    }
    None
}

/// All pairs of fiber cells whose interiors intersect (exhaustive with bbox pruning).
pub fn overlapping_cells(domain: &DomainModel) -> Vec<(usize, usize)> {
    let tol = 1e-9 * domain.segment_length();
    let m = domain.ring.len();
    let tris: Vec<[Vec2; 3]> = (0..m).map(|i| domain.cell(i).vertices()).collect();
    let boxes: Vec<(Vec2, Vec2)> = tris.iter().map(|t| bbox(t)).collect();
    let mut out = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            let (l1, h1) = boxes[i];
            let (l2, h2) = boxes[j];
            if h1.x <= l2.x || h2.x <= l1.x || h1.y <= l2.y || h2.y <= l1.y {
                continue;
            }
            if triangles_overlap(&tris[i], &tris[j], tol) {
                out.push((i, j));
            }
        }
    }
    out
}

/// `Σ 4^{-N} g(cell base midpoint)` over all 3·4^N addresses: the self-similar
/// measure with mass 1 per side.
pub fn selfsimilar_quadrature(alpha: f64, level: u32, g: &(impl Fn(Vec2) -> f64 + Sync)) -> Result<f64> {
    if level < 1 {
        return Err(Error::Parameter("self-similar quadrature level must be at least 1".into()));
    }
    let maps = build_similitudes(alpha)?;
    let mut total = 0.0;
    for k in 0..3 {
        let start = TRIANGLE[k];
        let end = TRIANGLE[(k + 1) % 3];
        let d = end - start;
        let side_map = IfsSimilitude {
            scale: d.norm(),
            rotation: d.y.atan2(d.x),
            translation: start,
        };
        total += selfsimilar_side(&maps, &side_map, level, g);
    }
    Ok(total)
}

fn selfsimilar_side(maps: &[IfsSimilitude; 4], map: &IfsSimilitude, depth: u32, g: &impl Fn(Vec2) -> f64) -> f64 {
    if depth == 0 {
        return g(map.apply(Vec2::new(0.5, 0.0)));
    }
    let mut s = 0.0;
    for m in maps {
        s += selfsimilar_side(maps, &map.compose(m), depth - 1, g);
    }
    0.25 * s
}
