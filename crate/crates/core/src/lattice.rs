//! Honeycomb torus, oriented cell structure, dual paths, regions and tails.
//!
//! Indexing, for unit cell `(x, y)` with `c = x + lx·y`:
//! * vertices `A(x,y) = 2c`, `B(x,y) = 2c + 1`;
//! * edges `3c + t`, all directed A → B: `t = 0` to `B(x,y)`, `t = 1` to `B(x−1,y)`,
//!   `t = 2` to `B(x,y−1)`;
//! * plaquette `c` with counterclockwise corners
//!   `A(x,y), B(x,y−1), A(x+1,y−1), B(x+1,y−1), A(x+1,y), B(x,y)`.
//!
//! Operators do not act on the torus directly but on a [`Graph`]: a list of faces
//! given as corner cycles. A plain torus gives hexagons; tails split one side of
//! their plaquette and add a dangling edge pointing into the puncture.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::AbelianGroup;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub tail: usize,
    /// `None` for a dangling edge (a plaquette tail or an open patch leg).
    pub head: Option<usize>,
}

/// Corner of a face. `leg` is the edge at `vertex` that is not a side of the face.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Corner {
    pub vertex: usize,
    pub leg: usize,
    /// Leg directed away from `vertex`.
    pub leg_out: bool,
    /// The leg is this face's own tail (it lies inside the face).
    pub tail: bool,
}

/// Side `k` of a face runs from corner `k` to corner `k + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Side {
    pub edge: usize,
    /// Edge orientation agrees with the counterclockwise traversal.
    pub ccw: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Face {
    pub corners: Vec<Corner>,
    pub sides: Vec<Side>,
}

impl Face {
    pub fn len(&self) -> usize {
        self.corners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corners.is_empty()
    }

    /// Position of the tail corner, if the face is tailed.
    pub fn tail_corner(&self) -> Option<usize> {
        self.corners.iter().position(|c| c.tail)
    }

    pub fn side_position(&self, edge: usize) -> Option<usize> {
        self.sides.iter().position(|s| s.edge == edge)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plaquette {
    pub verts: [usize; 6],
    pub sides: [usize; 6],
    pub ccw: [bool; 6],
    pub legs: [usize; 6],
    pub leg_out: [bool; 6],
}

#[derive(Clone, Debug)]
pub struct HoneycombTorus {
    pub lx: usize,
    pub ly: usize,
    pub edges: Vec<Edge>,
    /// Incident edges of each vertex with an "outgoing" flag.
    pub vertices: Vec<[(usize, bool); 3]>,
    pub plaquettes: Vec<Plaquette>,
    /// Plaquette on the left of each edge (the one traversing it counterclockwise).
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

/// One step of a dual path: the crossed edge and whether the crossing goes from
/// the edge's left plaquette to its right plaquette.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crossing {
    pub edge: usize,
    pub left_to_right: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DualPath {
    pub plaquettes: Vec<usize>,
    pub crossings: Vec<Crossing>,
}

impl DualPath {
    pub fn start(&self) -> usize {
        self.plaquettes[0]
    }

    pub fn end(&self) -> usize {
        *self.plaquettes.last().unwrap()
    }

    pub fn edges(&self) -> Vec<usize> {
        self.crossings.iter().map(|c| c.edge).collect()
    }
}

impl HoneycombTorus {
    pub fn build(lx: usize, ly: usize) -> Result<Self> {
        if lx < 2 || ly < 2 {
            return Err(Error::InvalidArgument(format!("torus must be at least 2x2, got {lx}x{ly}")));
        }
        let cell = |x: isize, y: isize| -> usize {
            let x = x.rem_euclid(lx as isize) as usize;
            let y = y.rem_euclid(ly as isize) as usize;
            x + lx * y
        };
        let va = |x: isize, y: isize| 2 * cell(x, y);
        let vb = |x: isize, y: isize| 2 * cell(x, y) + 1;
        let ed = |x: isize, y: isize, t: usize| 3 * cell(x, y) + t;

        let n = lx * ly;
        let mut edges = vec![Edge { tail: 0, head: None }; 3 * n];
        for y in 0..ly as isize {
            for x in 0..lx as isize {
                let a = va(x, y);
                edges[ed(x, y, 0)] = Edge { tail: a, head: Some(vb(x, y)) };
                edges[ed(x, y, 1)] = Edge { tail: a, head: Some(vb(x - 1, y)) };
                edges[ed(x, y, 2)] = Edge { tail: a, head: Some(vb(x, y - 1)) };
            }
        }
        let mut inc: Vec<Vec<(usize, bool)>> = vec![Vec::new(); 2 * n];
        for (i, e) in edges.iter().enumerate() {
            inc[e.tail].push((i, true));
            inc[e.head.unwrap()].push((i, false));
        }
        let vertices: Vec<[(usize, bool); 3]> = inc
            .into_iter()
            .map(|v| {
                assert_eq!(v.len(), 3, "honeycomb vertex must be trivalent");
                [v[0], v[1], v[2]]
            })
            .collect();

        let mut plaquettes = Vec::with_capacity(n);
        for y in 0..ly as isize {
            for x in 0..lx as isize {
                let verts = [va(x, y), vb(x, y - 1), va(x + 1, y - 1), vb(x + 1, y - 1), va(x + 1, y), vb(x, y)];
                let sides = [ed(x, y, 2), ed(x + 1, y - 1, 1), ed(x + 1, y - 1, 0), ed(x + 1, y, 2), ed(x + 1, y, 1), ed(x, y, 0)];
                let mut ccw = [false; 6];
                let mut legs = [0; 6];
                let mut leg_out = [false; 6];
                for k in 0..6 {
                    let e = edges[sides[k]];
                    let (from, to) = (verts[k], verts[(k + 1) % 6]);
                    debug_assert!(
                        (e.tail == from && e.head == Some(to)) || (e.tail == to && e.head == Some(from)),
                        "side {k} of plaquette ({x},{y}) does not join its corners"
                    );
                    ccw[k] = e.tail == from;
                    let prev = sides[(k + 5) % 6];
                    let (leg, out) = vertices[verts[k]]
                        .iter()
                        .copied()
                        .find(|&(ei, _)| ei != sides[k] && ei != prev)
                        .expect("third edge at corner");
                    legs[k] = leg;
                    leg_out[k] = out;
                }
                plaquettes.push(Plaquette { verts, sides, ccw, legs, leg_out });
            }
        }
        let mut left = vec![usize::MAX; 3 * n];
        let mut right = vec![usize::MAX; 3 * n];
        for (p, pl) in plaquettes.iter().enumerate() {
            for k in 0..6 {
                if pl.ccw[k] {
                    left[pl.sides[k]] = p;
                } else {
                    right[pl.sides[k]] = p;
                }
            }
        }
        assert!(left.iter().chain(right.iter()).all(|&p| p != usize::MAX), "edge without two faces");
        Ok(Self { lx, ly, edges, vertices, plaquettes, left, right })
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_plaquettes(&self) -> usize {
        self.plaquettes.len()
    }

    pub fn euler_characteristic(&self) -> isize {
        self.num_vertices() as isize - self.num_edges() as isize + self.num_plaquettes() as isize
    }

    pub fn plaquette_at(&self, x: isize, y: isize) -> usize {
        let x = x.rem_euclid(self.lx as isize) as usize;
        let y = y.rem_euclid(self.ly as isize) as usize;
        x + self.lx * y
    }

    pub fn coords(&self, p: usize) -> (usize, usize) {
        (p % self.lx, p / self.lx)
    }

    /// Dual neighbours of `p` as `(neighbour, shared edge)`, sorted.
    pub fn dual_neighbours(&self, p: usize) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self.plaquettes[p]
            .sides
            .iter()
            .map(|&e| (if self.left[e] == p { self.right[e] } else { self.left[e] }, e))
            .collect();
        out.sort_unstable();
        out
    }

    fn crossing(&self, from: usize, edge: usize) -> Crossing {
        Crossing { edge, left_to_right: self.left[edge] == from }
    }

    /// Shortest dual path by breadth-first search, lowest index first.
    pub fn dual_path(&self, p: usize, q: usize) -> DualPath {
        let n = self.num_plaquettes();
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([p]);
        seen[p] = true;
        while let Some(u) = queue.pop_front() {
            if u == q {
                break;
            }
            for (w, e) in self.dual_neighbours(u) {
                if !seen[w] {
                    seen[w] = true;
                    prev[w] = Some((u, e));
                    queue.push_back(w);
                }
            }
        }
        let mut plaqs = vec![q];
        let mut steps = Vec::new();
        let mut cur = q;
        while cur != p {
            let (u, e) = prev[cur].expect("torus dual graph is connected");
            steps.push((u, e));
            plaqs.push(u);
            cur = u;
        }
        plaqs.reverse();
        steps.reverse();
        let crossings = steps.into_iter().map(|(u, e)| self.crossing(u, e)).collect();
        DualPath { plaquettes: plaqs, crossings }
    }

    /// Dual path through the given plaquette sequence; consecutive entries must be
    /// adjacent. Where two plaquettes share several edges the lowest index is used.
    pub fn path_through(&self, plaqs: &[usize]) -> Result<DualPath> {
        if plaqs.is_empty() {
            return Err(Error::InvalidArgument("empty plaquette sequence".into()));
        }
        let n = self.num_plaquettes();
        if let Some(&bad) = plaqs.iter().find(|&&p| p >= n) {
            return Err(Error::InvalidArgument(format!("plaquette {bad} out of range")));
        }
        let mut crossings = Vec::new();
        for w in plaqs.windows(2) {
            let e = self
                .dual_neighbours(w[0])
                .into_iter()
                .find(|&(q, _)| q == w[1])
                .map(|(_, e)| e)
                .ok_or_else(|| Error::InvalidArgument(format!("plaquettes {} and {} are not adjacent", w[0], w[1])))?;
            crossings.push(self.crossing(w[0], e));
        }
        Ok(DualPath { plaquettes: plaqs.to_vec(), crossings })
    }

    /// Parses `"x0:y0,x1:y1,..."` into a dual path; a pair of points is joined by
    /// a shortest path, longer lists must list adjacent plaquettes.
    pub fn parse_path(&self, spec: &str) -> Result<DualPath> {
        let mut plaqs = Vec::new();
        for tok in spec.split(',') {
            let (xs, ys) = tok
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::InvalidArgument(format!("bad path coordinate `{tok}`, expected x:y")))?;
            let x: usize = xs.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad x in `{tok}`")))?;
            let y: usize = ys.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad y in `{tok}`")))?;
            if x >= self.lx || y >= self.ly {
                return Err(Error::InvalidArgument(format!("coordinate {x}:{y} outside the lattice")));
            }
            plaqs.push(self.plaquette_at(x as isize, y as isize));
        }
        if plaqs.len() == 2 {
            Ok(self.dual_path(plaqs[0], plaqs[1]))
        } else {
            self.path_through(&plaqs)
        }
    }

    /// Faces of the bare torus.
    pub fn graph(&self) -> Graph {
        let faces = self
            .plaquettes
            .iter()
            .map(|pl| Face {
                corners: (0..6)
                    .map(|k| Corner { vertex: pl.verts[k], leg: pl.legs[k], leg_out: pl.leg_out[k], tail: false })
                    .collect(),
                sides: (0..6).map(|k| Side { edge: pl.sides[k], ccw: pl.ccw[k] }).collect(),
            })
            .collect();
        Graph {
            edges: self.edges.clone(),
            num_vertices: self.num_vertices(),
            faces,
            tails: BTreeMap::new(),
        }
    }

    /// Torus graph with tails on the listed plaquettes (deduplicated, sorted).
    pub fn graph_with_tails(&self, tailed: &[usize]) -> Graph {
        let mut g = self.graph();
        let set: BTreeSet<usize> = tailed.iter().copied().collect();
        for p in set {
            g.add_tail(p, 5);
        }
        g
    }
}

/// Registers created when a tail is attached.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TailInfo {
    /// Edge whose side was split; it keeps the segment entering the tail vertex.
    pub split_edge: usize,
    /// New segment leaving the tail vertex.
    pub segment: usize,
    /// Dangling edge from the tail vertex into the puncture.
    pub tail: usize,
    pub vertex: usize,
}

/// Cell structure seen by the operators.
#[derive(Clone, Debug)]
pub struct Graph {
    pub edges: Vec<Edge>,
    pub num_vertices: usize,
    pub faces: Vec<Face>,
    /// Tailed faces.
    pub tails: BTreeMap<usize, TailInfo>,
}

impl Graph {
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// A single hexagon with six dangling legs: the smallest patch on which the
    /// plaquette algebra can be checked densely. Sides `0..6`, legs `6..12`.
    pub fn hexagon_patch(ccw: [bool; 6], leg_out: [bool; 6]) -> Graph {
        let mut edges = Vec::with_capacity(12);
        for k in 0..6 {
            let (a, b) = (k, (k + 1) % 6);
            edges.push(if ccw[k] { Edge { tail: a, head: Some(b) } } else { Edge { tail: b, head: Some(a) } });
        }
        // Dangling legs keep their corner in `tail`; direction is `leg_out`.
        for k in 0..6 {
            edges.push(Edge { tail: k, head: None });
        }
        let face = Face {
            corners: (0..6).map(|k| Corner { vertex: k, leg: 6 + k, leg_out: leg_out[k], tail: false }).collect(),
            sides: (0..6).map(|k| Side { edge: k, ccw: ccw[k] }).collect(),
        };
        Graph { edges, num_vertices: 6, faces: vec![face], tails: BTreeMap::new() }
    }

    /// Incident `(edge, outgoing)` pairs of every vertex, read off the faces.
    pub fn vertex_stars(&self) -> Vec<Vec<(usize, bool)>> {
        let mut stars: Vec<BTreeSet<(usize, bool)>> = vec![BTreeSet::new(); self.num_vertices];
        for f in &self.faces {
            let n = f.len();
            for k in 0..n {
                let c = f.corners[k];
                let out_side = f.sides[k];
                let in_side = f.sides[(k + n - 1) % n];
                stars[c.vertex].insert((out_side.edge, out_side.ccw));
                stars[c.vertex].insert((in_side.edge, !in_side.ccw));
                stars[c.vertex].insert((c.leg, c.leg_out));
            }
        }
        stars.into_iter().map(|s| s.into_iter().collect()).collect()
    }

    /// Left and right face of every edge (`None` for dangling or boundary edges).
    pub fn edge_faces(&self) -> Vec<(Option<usize>, Option<usize>)> {
        let mut out = vec![(None, None); self.num_edges()];
        for (fi, f) in self.faces.iter().enumerate() {
            for s in &f.sides {
                if s.ccw {
                    out[s.edge].0 = Some(fi);
                } else {
                    out[s.edge].1 = Some(fi);
                }
            }
        }
        out
    }

    /// Attaches a tail to face `p`, splitting side `side`. The split edge keeps the
    /// segment between corner `side` and the new tail vertex.
    pub fn add_tail(&mut self, p: usize, side: usize) -> TailInfo {
        assert!(!self.tails.contains_key(&p), "face {p} already tailed");
        let face = self.faces[p].clone();
        let n = face.len();
        let s = face.sides[side];
        let from = face.corners[side].vertex;
        let to = face.corners[(side + 1) % n].vertex;
        let t = self.num_vertices;
        self.num_vertices += 1;
        let old = self.edges[s.edge];
        let seg = self.edges.len();
        let tail = seg + 1;
        // Split: the original register covers `from–t`, the new one `t–to`,
        // both keeping the original direction.
        if s.ccw {
            self.edges[s.edge] = Edge { tail: from, head: Some(t) };
            self.edges.push(Edge { tail: t, head: Some(to) });
        } else {
            debug_assert_eq!(old.tail, to);
            self.edges[s.edge] = Edge { tail: t, head: Some(from) };
            self.edges.push(Edge { tail: to, head: Some(t) });
        }
        self.edges.push(Edge { tail: t, head: None });

        // Corners elsewhere whose leg was the split edge now see one segment.
        for f in self.faces.iter_mut() {
            for c in f.corners.iter_mut() {
                if c.leg == s.edge && c.vertex == to {
                    c.leg = seg;
                }
            }
        }
        for (fi, f) in self.faces.iter_mut().enumerate() {
            if let Some(k) = f.side_position(s.edge) {
                let ccw = f.sides[k].ccw;
                if fi == p {
                    // from → t (original register) then t → to (segment).
                    f.sides[k] = Side { edge: s.edge, ccw };
                    f.sides.insert(k + 1, Side { edge: seg, ccw });
                    f.corners.insert(k + 1, Corner { vertex: t, leg: tail, leg_out: true, tail: true });
                } else {
                    // Traversed to → from: segment first, then original register.
                    f.sides[k] = Side { edge: seg, ccw };
                    f.sides.insert(k + 1, Side { edge: s.edge, ccw });
                    f.corners.insert(k + 1, Corner { vertex: t, leg: tail, leg_out: true, tail: false });
                }
            }
        }
        let info = TailInfo { split_edge: s.edge, segment: seg, tail, vertex: t };
        self.tails.insert(p, info);
        info
    }
}

/// Connected set of plaquettes with the vertices and edges they cover.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    pub plaquettes: BTreeSet<usize>,
    pub vertices: BTreeSet<usize>,
    pub edges: BTreeSet<usize>,
    /// Edges bordering exactly one region plaquette.
    pub boundary: BTreeSet<usize>,
}

impl Region {
    /// Connected region; simple connectivity is not required.
    pub fn connected(lat: &HoneycombTorus, plaqs: &[usize]) -> Result<Self> {
        let set: BTreeSet<usize> = plaqs.iter().copied().collect();
        if let Some(&bad) = set.iter().find(|&&p| p >= lat.num_plaquettes()) {
            return Err(Error::InvalidArgument(format!("plaquette {bad} out of range")));
        }
        let mut vertices = BTreeSet::new();
        let mut edges = BTreeSet::new();
        let mut count: BTreeMap<usize, usize> = BTreeMap::new();
        for &p in &set {
            let pl = &lat.plaquettes[p];
            vertices.extend(pl.verts);
            edges.extend(pl.sides);
            for e in pl.sides {
                *count.entry(e).or_default() += 1;
            }
        }
        let boundary = count.into_iter().filter(|&(_, c)| c == 1).map(|(e, _)| e).collect();
        if let Some(&first) = set.iter().next() {
            let mut seen = BTreeSet::from([first]);
            let mut stack = vec![first];
            while let Some(u) = stack.pop() {
                for (w, _) in lat.dual_neighbours(u) {
                    if set.contains(&w) && seen.insert(w) {
                        stack.push(w);
                    }
                }
            }
            if seen.len() != set.len() {
                return Err(Error::InvalidArgument("region is not connected".into()));
            }
        }
        Ok(Self { plaquettes: set, vertices, edges, boundary })
    }

    /// Connected and simply connected (Euler characteristic 1).
    pub fn new(lat: &HoneycombTorus, plaqs: &[usize]) -> Result<Self> {
        let r = Self::connected(lat, plaqs)?;
        if !r.plaquettes.is_empty() && r.euler_characteristic() != 1 {
            return Err(Error::InvalidArgument(format!(
                "region is not simply connected (V-E+F = {})",
                r.euler_characteristic()
            )));
        }
        Ok(r)
    }

    pub fn empty() -> Self {
        Self { plaquettes: BTreeSet::new(), vertices: BTreeSet::new(), edges: BTreeSet::new(), boundary: BTreeSet::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.plaquettes.is_empty()
    }

    pub fn euler_characteristic(&self) -> isize {
        self.vertices.len() as isize - self.edges.len() as isize + self.plaquettes.len() as isize
    }

    /// Parses `"x:y,x:y,..."`.
    pub fn parse(lat: &HoneycombTorus, spec: &str) -> Result<Self> {
        let mut plaqs = Vec::new();
        for tok in spec.split(',').filter(|t| !t.trim().is_empty()) {
            let (xs, ys) = tok
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::InvalidArgument(format!("bad region coordinate `{tok}`")))?;
            let x: usize = xs.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad x in `{tok}`")))?;
            let y: usize = ys.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad y in `{tok}`")))?;
            if x >= lat.lx || y >= lat.ly {
                return Err(Error::InvalidArgument(format!("coordinate {x}:{y} outside the lattice")));
            }
            plaqs.push(lat.plaquette_at(x as isize, y as isize));
        }
        Self::new(lat, &plaqs)
    }
}

/// Rooted spanning tree: `parent[v] = (parent vertex, connecting edge)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpanningTree {
    pub root: usize,
    pub parent: BTreeMap<usize, (usize, usize)>,
    /// Vertices in discovery order, root first.
    pub order: Vec<usize>,
}

/// Breadth-first tree over the region's vertices using region edges, growing from
/// the lowest vertex and scanning edges in index order.
pub fn spanning_tree(lat: &HoneycombTorus, region: &Region) -> SpanningTree {
    match region.vertices.iter().next() {
        Some(&root) => spanning_tree_from(lat, region, root),
        None => SpanningTree { root: 0, parent: BTreeMap::new(), order: vec![] },
    }
}

/// Same as [`spanning_tree`] with an explicit root, which must be a region vertex.
pub fn spanning_tree_from(lat: &HoneycombTorus, region: &Region, root: usize) -> SpanningTree {
    let mut parent = BTreeMap::new();
    let mut order = vec![root];
    let mut seen = BTreeSet::from([root]);
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        let mut star: Vec<(usize, bool)> = lat.vertices[u].to_vec();
        star.sort_unstable();
        for (e, _) in star {
            if !region.edges.contains(&e) {
                continue;
            }
            let ed = lat.edges[e];
            let w = if ed.tail == u { ed.head.unwrap() } else { ed.tail };
            if region.vertices.contains(&w) && seen.insert(w) {
                parent.insert(w, (u, e));
                order.push(w);
                queue.push_back(w);
            }
        }
    }
    SpanningTree { root, parent, order }
}

/// Group-valued 0-chain (vertex coefficients).
pub type Chain0 = BTreeMap<usize, usize>;

/// Group-valued 1-chain on edges, written multiplicatively.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Chain1 {
    pub coeffs: BTreeMap<usize, usize>,
}

fn add_at(g: &AbelianGroup, m: &mut BTreeMap<usize, usize>, k: usize, x: usize) {
    let cur = m.get(&k).copied().unwrap_or(g.identity);
    let v = g.op(cur, x);
    if v == g.identity {
        m.remove(&k);
    } else {
        m.insert(k, v);
    }
}

impl Chain1 {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, g: &AbelianGroup, e: usize, x: usize) {
        add_at(g, &mut self.coeffs, e, x);
    }

    /// `∂(x·e) = x·head − x·tail`.
    pub fn boundary(&self, g: &AbelianGroup, lat: &HoneycombTorus) -> Chain0 {
        let mut out = BTreeMap::new();
        for (&e, &x) in &self.coeffs {
            let ed = lat.edges[e];
            add_at(g, &mut out, ed.head.unwrap(), x);
            add_at(g, &mut out, ed.tail, g.inverse(x));
        }
        out
    }

    /// Chain carried by a dual path is not a primal chain; this helper builds the
    /// primal chain along a vertex path instead.
    pub fn along(g: &AbelianGroup, lat: &HoneycombTorus, path: &[(usize, usize)], x: usize) -> Self {
        let mut c = Self::new();
        for &(from, e) in path {
            let ed = lat.edges[e];
            c.add(g, e, if ed.tail == from { x } else { g.inverse(x) });
        }
        c
    }
}

/// Group-valued 2-chain on plaquettes.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Chain2 {
    pub coeffs: BTreeMap<usize, usize>,
}

impl Chain2 {
    /// Counterclockwise boundary.
    pub fn boundary(&self, g: &AbelianGroup, lat: &HoneycombTorus) -> Chain1 {
        let mut c = Chain1::new();
        for (&p, &x) in &self.coeffs {
            let pl = &lat.plaquettes[p];
            for k in 0..6 {
                c.add(g, pl.sides[k], if pl.ccw[k] { x } else { g.inverse(x) });
            }
        }
        c
    }
}

/// Vertex path between two vertices inside a region, following tree edges.
pub fn tree_path(tree: &SpanningTree, lat: &HoneycombTorus, a: usize, b: usize) -> Vec<(usize, usize)> {
    let up = |mut v: usize| {
        let mut chain = vec![v];
        while let Some(&(p, _)) = tree.parent.get(&v) {
            v = p;
            chain.push(v);
        }
        chain
    };
    let ca = up(a);
    let cb = up(b);
    let sb: BTreeSet<usize> = cb.iter().copied().collect();
    let meet = *ca.iter().find(|v| sb.contains(v)).expect("vertices in one tree");
    let mut steps = Vec::new();
    let mut v = a;
    while v != meet {
        let (p, e) = tree.parent[&v];
        steps.push((v, e));
        v = p;
    }
    let mut back = Vec::new();
    let mut v = b;
    while v != meet {
        let (p, e) = tree.parent[&v];
        back.push((p, e));
        v = p;
    }
    back.reverse();
    steps.extend(back);
    let _ = lat;
    steps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::make_cyclic;

    #[test]
    fn counts_and_euler() {
        for (lx, ly) in [(2, 2), (2, 3), (3, 3), (4, 2)] {
            let t = HoneycombTorus::build(lx, ly).unwrap();
            assert_eq!(t.num_edges(), 3 * lx * ly);
            assert_eq!(t.num_vertices(), 2 * lx * ly);
            assert_eq!(t.num_plaquettes(), lx * ly);
            assert_eq!(t.euler_characteristic(), 0);
        }
        assert!(HoneycombTorus::build(1, 3).is_err());
    }

    #[test]
    fn every_edge_borders_two_plaquettes() {
        let t = HoneycombTorus::build(2, 2).unwrap();
        let mut seen = vec![0; t.num_edges()];
        for pl in &t.plaquettes {
            let uniq: BTreeSet<_> = pl.sides.iter().collect();
            assert_eq!(uniq.len(), 6);
            let legs: BTreeSet<_> = pl.legs.iter().collect();
            assert!(legs.is_disjoint(&uniq.iter().copied().collect()));
            for e in pl.sides {
                seen[e] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 2));
        for e in 0..t.num_edges() {
            assert_ne!(t.left[e], t.right[e]);
        }
    }

    #[test]
    fn dual_paths() {
        let t = HoneycombTorus::build(3, 3).unwrap();
        assert!(t.dual_path(4, 4).crossings.is_empty());
        for p in 0..9 {
            for (q, e) in t.dual_neighbours(p) {
                let path = t.dual_path(p, q);
                assert_eq!(path.crossings.len(), 1);
                assert_eq!(path.plaquettes, vec![p, q]);
                let _ = e;
            }
        }
        let path = t.dual_path(0, 8);
        assert_eq!(path.start(), 0);
        assert_eq!(path.end(), 8);
        for (w, c) in path.plaquettes.windows(2).zip(&path.crossings) {
            let (from, to) = if c.left_to_right { (t.left[c.edge], t.right[c.edge]) } else { (t.right[c.edge], t.left[c.edge]) };
            assert_eq!((from, to), (w[0], w[1]));
        }
    }

    #[test]
    fn boundary_of_boundary_vanishes() {
        let t = HoneycombTorus::build(3, 2).unwrap();
        for n in [2, 3, 6] {
            let g = make_cyclic(n).unwrap();
            let mut c2 = Chain2::default();
            for p in 0..t.num_plaquettes() {
                c2.coeffs.insert(p, (p * 7 + 1) % n);
            }
            c2.coeffs.retain(|_, v| *v != 0);
            let c1 = c2.boundary(&g, &t);
            assert!(c1.boundary(&g, &t).is_empty());
        }
    }

    #[test]
    fn regions() {
        let t = HoneycombTorus::build(3, 3).unwrap();
        let r = Region::new(&t, &[0]).unwrap();
        assert_eq!(r.vertices.len(), 6);
        assert_eq!(r.boundary.len(), 6);
        let r2 = Region::new(&t, &[0, 1]).unwrap();
        assert_eq!(r2.euler_characteristic(), 1);
        assert!(Region::new(&t, &[0, 4, 8]).is_err() || Region::new(&t, &[0, 4, 8]).is_ok());
        let all_but_one: Vec<usize> = (1..9).collect();
        assert!(Region::new(&t, &all_but_one).is_err());
        let conn = Region::connected(&t, &all_but_one).unwrap();
        let tree = spanning_tree(&t, &conn);
        assert_eq!(tree.order.len(), conn.vertices.len());
        assert_eq!(tree, spanning_tree(&t, &conn));
        let single = spanning_tree(&t, &r);
        assert_eq!(single.order.len(), 6);
    }

    #[test]
    fn tails_split_a_side() {
        let t = HoneycombTorus::build(2, 2).unwrap();
        let g = t.graph_with_tails(&[0, 3]);
        assert_eq!(g.num_edges(), 12 + 4);
        assert_eq!(g.faces[0].len(), 7);
        assert!(g.faces[0].tail_corner().is_some());
        let stars = g.vertex_stars();
        for (v, s) in stars.iter().enumerate() {
            assert_eq!(s.len(), 3, "vertex {v} star {s:?}");
        }
        // Every bulk edge still borders two faces.
        let ef = g.edge_faces();
        for (e, (l, r)) in ef.iter().enumerate() {
            let dangling = g.tails.values().any(|ti| ti.tail == e);
            assert_eq!(l.is_some() && r.is_some(), !dangling, "edge {e}");
        }
    }
}
