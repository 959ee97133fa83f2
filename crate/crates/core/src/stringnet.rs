//! Levin–Wen vertex and plaquette operators on a [`Graph`].
//!
//! Register `e` of a configuration holds the label of edge `e` in its own
//! orientation; registers past the last edge (ancillas) are ignored here.
//!
//! Plaquette matrix element. Walk a face counterclockwise; side `k` carries the
//! frame label `i_k` (the label, or its dual when the edge points clockwise) and
//! corner `k` sits between sides `k−1` and `k` with outward leg label `e_k`. Fusing
//! a loop `s` maps `i_k → i'_k` with amplitude
//!
//! `Π_k conj([F^{s i_k e_k}_{i'_{k−1}}]_{i'_k, i_{k−1}})`.
//!
//! The √d factors from completing and closing the loop cancel corner by corner.
//! A tail corner (a dangling edge pointing into the face) replaces its factor by
//! the tube vertex pair `(s, r → q)`, `(q → p, s)`:
//!
//! `√(d_s d_r / d_q) · conj([F^{s r i_b}_{i'_a}]_{q, i_a}) · [F^{p s i_b}_{i'_a}]_{q, i'_b}`.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::fusion::FusionCategory;
use crate::groups::AbelianGroup;
use crate::lattice::{DualPath, Graph};
use crate::state::{Config, Layout, Register, SparseState};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Labels of a tube `𝒯^s_{pqr}`: loop `s`, inner tail `p`, junction `q`, outer tail `r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TubeLabels {
    pub s: usize,
    pub p: usize,
    pub q: usize,
    pub r: usize,
}

/// Category plus cell structure; all operators are pure functions of this.
#[derive(Clone, Debug)]
pub struct StringNet {
    pub cat: FusionCategory,
    pub graph: Graph,
    stars: Vec<Vec<(usize, bool)>>,
}

impl StringNet {
    pub fn new(cat: FusionCategory, graph: Graph) -> Self {
        let stars = graph.vertex_stars();
        Self { cat, graph, stars }
    }

    pub fn num_edges(&self) -> usize {
        self.graph.num_edges()
    }

    pub fn num_faces(&self) -> usize {
        self.graph.faces.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.graph.num_vertices
    }

    /// One register per edge, named `e<i>` (`tail<p>` / `seg<p>` for tail registers).
    pub fn layout(&self) -> Layout {
        let n = self.cat.rank();
        let mut regs: Vec<Register> = (0..self.num_edges()).map(|e| Register { name: format!("e{e}"), dim: n }).collect();
        for (p, t) in &self.graph.tails {
            regs[t.tail].name = format!("tail{p}");
            regs[t.segment].name = format!("seg{p}");
        }
        Layout::new(regs)
    }

    pub fn vacuum(&self) -> SparseState {
        SparseState::basis(self.layout(), vec![0; self.num_edges()]).expect("vacuum fits layout")
    }

    #[inline]
    fn oriented(&self, label: u8, forward: bool) -> usize {
        if forward {
            label as usize
        } else {
            self.cat.dual[label as usize]
        }
    }

    /// Fusion constraint at vertex `v`, reading all edges as outgoing.
    pub fn vertex_ok(&self, c: &[u8], v: usize) -> bool {
        let st = &self.stars[v];
        if st.len() != 3 {
            return true;
        }
        let a = self.oriented(c[st[0].0], st[0].1);
        let b = self.oriented(c[st[1].0], st[1].1);
        let x = self.oriented(c[st[2].0], st[2].1);
        self.cat.n(a, b, self.cat.dual[x])
    }

    pub fn all_vertices_ok(&self, c: &[u8]) -> bool {
        (0..self.num_vertices()).all(|v| self.vertex_ok(c, v))
    }

    pub fn apply_av(&self, state: &SparseState, v: usize) -> SparseState {
        state.map_diag(|c| if self.vertex_ok(c, v) { ONE } else { ZERO })
    }

    /// Projector onto configurations satisfying every vertex constraint.
    pub fn apply_all_av(&self, state: &SparseState) -> SparseState {
        state.map_diag(|c| if self.all_vertices_ok(c) { ONE } else { ZERO })
    }

    fn face_vertices_ok(&self, c: &[u8], f: usize) -> bool {
        self.graph.faces[f].corners.iter().all(|k| self.vertex_ok(c, k.vertex))
    }

    /// Terms of a loop `s` fused into face `f`; `tube` is required on tailed faces.
    pub(crate) fn loop_terms(&self, c: &[u8], f: usize, s: usize, tube: Option<TubeLabels>, out: &mut Vec<(Config, Complex64)>) {
        let face = &self.graph.faces[f];
        let n = face.len();
        let cat = &self.cat;
        let tail_pos = face.tail_corner();
        if let Some(t) = tube {
            let tc = tail_pos.expect("tube on an untailed face");
            if c[face.corners[tc].leg] as usize != t.r {
                return;
            }
        }
        if !self.face_vertices_ok(c, f) {
            return;
        }
        let frame: Vec<usize> = face.sides.iter().map(|sd| self.oriented(c[sd.edge], sd.ccw)).collect();
        let legs: Vec<usize> = face.corners.iter().map(|k| self.oriented(c[k.leg], k.leg_out)).collect();
        let choices: Vec<Vec<usize>> = frame.iter().map(|&i| cat.fuse(s, i).collect()).collect();

        let corner = |k: usize, prime_prev: usize, prime_here: usize| -> Complex64 {
            let i_prev = frame[(k + n - 1) % n];
            let i_here = frame[k];
            if Some(k) == tail_pos {
                let t = tube.expect("tube labels");
                let w = (cat.qdim[s] * cat.qdim[t.r] / cat.qdim[t.q]).sqrt();
                w * cat.f(s, t.r, i_here, prime_prev, t.q, i_prev).conj() * cat.f(t.p, s, i_here, prime_prev, t.q, prime_here)
            } else {
                cat.f(s, i_here, legs[k], prime_prev, prime_here, i_prev).conj()
            }
        };

        let mut primes = vec![0usize; n];
        // Depth-first over the new side labels, closing corner 0 at the end.
        fn walk(
            k: usize,
            n: usize,
            amp: Complex64,
            primes: &mut Vec<usize>,
            choices: &[Vec<usize>],
            corner: &dyn Fn(usize, usize, usize) -> Complex64,
            emit: &mut dyn FnMut(&[usize], Complex64),
        ) {
            if k == n {
                let a = amp * corner(0, primes[n - 1], primes[0]);
                if a.norm() > 1e-15 {
                    emit(primes, a);
                }
                return;
            }
            for &x in &choices[k] {
                primes[k] = x;
                let a = if k == 0 { amp } else { amp * corner(k, primes[k - 1], x) };
                if a.norm() > 1e-15 {
                    walk(k + 1, n, a, primes, choices, corner, emit);
                }
            }
        }
        let mut emit = |pr: &[usize], a: Complex64| {
            let mut nc = c.to_vec();
            for (k, sd) in face.sides.iter().enumerate() {
                nc[sd.edge] = self.oriented(pr[k] as u8, sd.ccw) as u8;
            }
            if let (Some(tc), Some(t)) = (tail_pos, tube) {
                nc[face.corners[tc].leg] = t.p as u8;
            }
            out.push((nc, a));
        };
        walk(0, n, ONE, &mut primes, &choices, &corner, &mut emit);
    }

    fn check_face(&self, f: usize) -> Result<()> {
        if f >= self.num_faces() {
            return Err(Error::InvalidArgument(format!("plaquette {f} out of range")));
        }
        Ok(())
    }

    /// `B_p^s`. On a tailed face this is the tube `𝒯^s_{r s r}` summed over the
    /// admissible junction labels, which is the plain loop when the tail is trivial.
    pub fn apply_bp_a(&self, state: &SparseState, f: usize, s: usize) -> Result<SparseState> {
        self.check_face(f)?;
        if s >= self.cat.rank() {
            return Err(Error::InvalidArgument(format!("object {s} out of range")));
        }
        let tailed = self.graph.faces[f].tail_corner();
        Ok(state.map(|c, out| match tailed {
            None => self.loop_terms(c, f, s, None, out),
            Some(tc) => {
                let r = c[self.graph.faces[f].corners[tc].leg] as usize;
                for q in self.cat.fuse(s, r) {
                    self.loop_terms(c, f, s, Some(TubeLabels { s, p: r, q, r }), out);
                }
            }
        }))
    }

    /// Like [`Self::apply_bp_a`] but fails on configurations that break a vertex
    /// constraint around the face.
    pub fn apply_bp_a_checked(&self, state: &SparseState, f: usize, s: usize) -> Result<SparseState> {
        self.check_face(f)?;
        if let Some(c) = state.amps.keys().find(|c| !self.face_vertices_ok(c, f)) {
            return Err(Error::Consistency(format!("vertex constraint violated around plaquette {f} in {c:?}")));
        }
        self.apply_bp_a(state, f, s)
    }

    /// Tube `𝒯^s_{pqr}` on a tailed face.
    pub fn apply_tube(&self, state: &SparseState, f: usize, t: TubeLabels) -> Result<SparseState> {
        self.check_face(f)?;
        if self.graph.faces[f].tail_corner().is_none() {
            return Err(Error::InvalidArgument(format!("plaquette {f} has no tail")));
        }
        let cat = &self.cat;
        if !(cat.n(t.s, t.r, t.q) && cat.n(t.p, t.s, t.q)) {
            return Err(Error::InvalidArgument(format!("tube labels {t:?} are not admissible")));
        }
        Ok(state.map(|c, out| self.loop_terms(c, f, t.s, Some(t), out)))
    }

    /// `(1/𝒟_i²) Σ_{a ∈ 𝒞^{(i)}_g} d_a B_p^a` for level `i ≥ 1`.
    pub fn apply_bp_g(&self, state: &SparseState, f: usize, level: usize, g: usize) -> Result<SparseState> {
        let lv = self.level(level)?;
        if g >= lv.group.order {
            return Err(Error::InvalidArgument(format!("group element {g} outside level {level}")));
        }
        let norm = self.cat.level_trivial_dim_sq(level);
        let mut acc = SparseState::zero(state.layout.clone());
        for a in lv.sector(g) {
            let term = self.apply_bp_a(state, f, a)?;
            acc = acc.axpy(Complex64::new(self.cat.qdim[a] / norm, 0.0), &term)?;
        }
        Ok(acc)
    }

    /// Level-`i` vacuum projector `B_p^{1}` of the identity sector.
    pub fn apply_bp_identity(&self, state: &SparseState, f: usize, level: usize) -> Result<SparseState> {
        let id = self.level(level)?.group.identity;
        self.apply_bp_g(state, f, level, id)
    }

    /// Full plaquette projector `Σ_a (d_a/𝒟²) B_p^a` of the whole category.
    pub fn apply_bp(&self, state: &SparseState, f: usize) -> Result<SparseState> {
        let mut acc = SparseState::zero(state.layout.clone());
        for a in 0..self.cat.rank() {
            let term = self.apply_bp_a(state, f, a)?;
            acc = acc.axpy(Complex64::new(self.cat.qdim[a] / self.cat.total_dim_sq, 0.0), &term)?;
        }
        Ok(acc)
    }

    /// Plaquette projector of the level-`i` subcategory, `Σ_{a ∈ 𝒞^{(i)}} (d_a/𝒟_i²) B_p^a`.
    pub fn apply_bp_level(&self, state: &SparseState, f: usize, level: usize) -> Result<SparseState> {
        let objects = &self
            .cat
            .series
            .levels
            .get(level)
            .ok_or_else(|| Error::InvalidArgument(format!("level {level} outside the grading series")))?
            .objects;
        let dsq: f64 = objects.iter().map(|&a| self.cat.qdim[a] * self.cat.qdim[a]).sum();
        let mut acc = SparseState::zero(state.layout.clone());
        for &a in objects {
            let term = self.apply_bp_a(state, f, a)?;
            acc = acc.axpy(Complex64::new(self.cat.qdim[a] / dsq, 0.0), &term)?;
        }
        Ok(acc)
    }

    pub fn level(&self, i: usize) -> Result<&crate::fusion::Level> {
        if i == 0 || i >= self.cat.series.levels.len() {
            return Err(Error::InvalidArgument(format!("level {i} outside 1..={}", self.cat.series.len())));
        }
        Ok(&self.cat.series.levels[i])
    }

    /// Character string along a dual path: each crossed edge contributes
    /// `χ(grade(label))`, conjugated when the path crosses from right to left.
    pub fn apply_char_string(&self, state: &SparseState, level: usize, chi: usize, path: &DualPath) -> Result<SparseState> {
        let lv = self.level(level)?;
        if chi >= lv.group.order {
            return Err(Error::InvalidArgument(format!("character {chi} outside level {level}")));
        }
        let g: &AbelianGroup = &lv.group;
        let grade = lv.grade.clone();
        Ok(state.map_diag(|c| {
            let mut amp = ONE;
            for cr in &path.crossings {
                let Some(h) = grade[c[cr.edge] as usize] else { return ZERO };
                let v = g.char_value(chi, h);
                amp *= if cr.left_to_right { v } else { v.conj() };
            }
            amp
        }))
    }

    /// Normalized `Π_p (Σ_a d_a B_p^a)|0…0⟩`.
    pub fn ground_state_direct(&self) -> Result<SparseState> {
        let mut s = self.vacuum();
        for f in 0..self.num_faces() {
            s = self.apply_bp(&s, f)?;
        }
        s.normalized()
    }

    /// Every vertex-valid configuration of the graph, in lexicographic order.
    pub fn valid_configs(&self, limit: usize) -> Result<Vec<Config>> {
        let ne = self.num_edges();
        let n = self.cat.rank();
        // Vertices become checkable once their highest edge is assigned.
        let mut ready: Vec<Vec<usize>> = vec![Vec::new(); ne];
        for (v, st) in self.stars.iter().enumerate() {
            if st.len() == 3 {
                let last = st.iter().map(|x| x.0).max().unwrap();
                ready[last].push(v);
            }
        }
        let mut out = Vec::new();
        let mut cfg = vec![0u8; ne];
        fn rec(sn: &StringNet, k: usize, ne: usize, n: usize, cfg: &mut Vec<u8>, ready: &[Vec<usize>], out: &mut Vec<Config>, limit: usize) -> bool {
            if k == ne {
                out.push(cfg.clone());
                return out.len() <= limit;
            }
            for x in 0..n {
                cfg[k] = x as u8;
                if ready[k].iter().all(|&v| sn.vertex_ok(cfg, v)) && !rec(sn, k + 1, ne, n, cfg, ready, out, limit) {
                    return false;
                }
            }
            true
        }
        if !rec(self, 0, ne, n, &mut cfg, &ready, &mut out, limit) {
            return Err(Error::ResourceGuard(format!("more than {limit} vertex-valid configurations")));
        }
        Ok(out)
    }

    /// Uniformly random vertex-valid state (for operator checks).
    pub fn random_valid_state(&self, seed: u64, terms: usize) -> Result<SparseState> {
        use rand::Rng;
        let all = self.valid_configs(2_000_000)?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut s = SparseState::zero(self.layout());
        for _ in 0..terms {
            let c = all[rng.gen_range(0..all.len())].clone();
            *s.amps.entry(c).or_default() += Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
        }
        s.normalized()
    }
}
