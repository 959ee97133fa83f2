//! Ungauging and regauging a global Abelian symmetry on a simply connected region.
//!
//! Demonstrated on the `Vec_G` string-net, whose closed-string ground states are
//! symmetric under the 1-form symmetry `U(z) = Π_e U_e(z_e)`, `U_e(χ)` shifting the
//! label of `e` by `χ` along its orientation (`Ĝ` is identified with `G` through
//! the canonical character indexing). Vertex ancillas carry `ℂ[G]` with
//! `U_v(χ)|h⟩ = χ(h)|h⟩` and `L_v(g)|h⟩ = |gh⟩` (left multiplication).
//!
//! For `e: v → v'` the Gauss-law projector is
//! `Π_e(g) = (1/|G|) Σ_χ χ(g) U_v(χ)† U_e(χ) U_{v'}(χ)`, and
//! `L_v(g) Π_e(h) = Π_e(gh) L_v(g)`, `L_{v'}(g) Π_e(h) = Π_e(g⁻¹h) L_{v'}(g)`, so the
//! outcomes are `g_e = g_v g_{v'}⁻¹` for a potential `g_V` and the byproduct is
//! `Π_v L_v(g_v)`.
//!
//! Vertex registers store the character basis: value `k` means `|χ_k⟩`. There
//! `U_v(χ_j)` shifts `k → k·j`, `L_v(g)` is the phase `χ̄_k(g)` and `|+⟩ = |χ_0⟩`.
//! In the group basis the ancillas smear every edge label and the support of
//! the ungauged state grows by `|G|` per measured edge; in this basis it stays
//! within `|G|^{|V_R|}` times that of the input.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FusionCategory;
use crate::groups::AbelianGroup;
use crate::lattice::{spanning_tree, tree_path, Chain0, Chain1, HoneycombTorus, Region, SpanningTree};
use crate::state::{Config, MeasurementRecord, SparseState};

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Outcome of [`ungauge_region`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UngaugeOutcome {
    /// `g_e` per region edge, in edge order.
    pub edge_outcomes: BTreeMap<usize, usize>,
    pub probabilities: Vec<f64>,
    /// Solved potential `g_V`, identity at the tree root.
    pub potential: BTreeMap<usize, usize>,
    /// Vertices where a nontrivial `L_v` was applied.
    pub byproduct: Vec<usize>,
}

/// An ungauged region: group data, spanning tree and vertex registers.
#[derive(Clone, Debug)]
pub struct Window {
    pub lat: HoneycombTorus,
    pub region: Region,
    pub tree: SpanningTree,
    pub group: AbelianGroup,
    /// `obj_of[g]` is the object graded by `g`; `elem_of` is its inverse.
    pub obj_of: Vec<usize>,
    pub elem_of: Vec<usize>,
    /// Register position of each region vertex's ancilla.
    pub registers: BTreeMap<usize, usize>,
}

impl Window {
    /// Group data of a pointed category graded faithfully by its top group.
    pub fn new(cat: &FusionCategory, lat: &HoneycombTorus, region: Region) -> Result<Self> {
        let top = cat
            .series
            .levels
            .last()
            .ok_or_else(|| Error::Structural(format!("{} has no grading", cat.name)))?;
        let group = top.group.clone();
        if cat.rank() != group.order || cat.qdim.iter().any(|&d| (d - 1.0).abs() > 1e-12) {
            return Err(Error::InvalidArgument(format!("{} is not a group category Vec_G", cat.name)));
        }
        let mut obj_of = vec![usize::MAX; group.order];
        let mut elem_of = vec![0; cat.rank()];
        for a in 0..cat.rank() {
            let g = top.grade[a].ok_or_else(|| Error::Structural(format!("object {a} ungraded")))?;
            obj_of[g] = a;
            elem_of[a] = g;
        }
        if obj_of.contains(&usize::MAX) {
            return Err(Error::InvalidArgument("grading is not a bijection".into()));
        }
        let tree = spanning_tree(lat, &region);
        Ok(Self { lat: lat.clone(), region, tree, group, obj_of, elem_of, registers: BTreeMap::new() })
    }

    fn chi(&self, k: usize, g: usize) -> Complex64 {
        self.group.char_value(k, g)
    }

    /// Shifts edge `e` of `c` by `x` along the edge orientation.
    fn shift(&self, c: &mut [u8], e: usize, x: usize) {
        let g = self.elem_of[c[e] as usize];
        c[e] = self.obj_of[self.group.op(g, x)] as u8;
    }

    fn ends(&self, e: usize) -> (usize, usize) {
        let ed = self.lat.edges[e];
        (ed.tail, ed.head.expect("torus edges have two ends"))
    }

    /// `U_E(c)` for a 1-chain, or its inverse.
    pub fn apply_chain(&self, state: &SparseState, chain: &Chain1, inverse: bool) -> SparseState {
        state.map(|c, out| {
            let mut nc = c.to_vec();
            for (&e, &x) in &chain.coeffs {
                self.shift(&mut nc, e, if inverse { self.group.inverse(x) } else { x });
            }
            out.push((nc, ONE));
        })
    }

    /// `Π_e(g)` on the current registers.
    pub fn gauss_projector(&self, state: &SparseState, e: usize, g: usize) -> SparseState {
        let (v, w) = self.ends(e);
        let (rv, rw) = (self.registers[&v], self.registers[&w]);
        let n = self.group.order as f64;
        let grp = &self.group;
        state.map(|c, out| {
            for k in 0..grp.order {
                let mut nc = c.to_vec();
                nc[rv] = grp.op(grp.inverse(k), c[rv] as usize) as u8;
                nc[rw] = grp.op(k, c[rw] as usize) as u8;
                self.shift(&mut nc, e, k);
                out.push((nc, self.chi(k, g) / n));
            }
        })
    }

    /// `Π_{v ∈ R} L_v(g)` on every vertex register.
    pub fn global_l(&self, state: &SparseState, g: usize) -> SparseState {
        state.map_diag(|c| self.registers.values().map(|&r| self.chi(c[r] as usize, g).conj()).product())
    }

    /// Symmetric clock pair `U_a(χ)† U_b(χ)` on two region vertices.
    pub fn clock_pair(&self, state: &SparseState, a: usize, b: usize, k: usize) -> Result<SparseState> {
        let (ra, rb) = match (self.registers.get(&a), self.registers.get(&b)) {
            (Some(&x), Some(&y)) => (x, y),
            _ => return Err(Error::InvalidArgument(format!("vertices {a}, {b} are not in the window"))),
        };
        let grp = &self.group;
        Ok(state.map(|c, out| {
            let mut nc = c.to_vec();
            nc[ra] = grp.op(grp.inverse(k), nc[ra] as usize) as u8;
            nc[rb] = grp.op(k, nc[rb] as usize) as u8;
            out.push((nc, ONE));
        }))
    }

    /// Vertex path from `a` to `b` along the spanning tree.
    pub fn path(&self, a: usize, b: usize) -> Vec<(usize, usize)> {
        tree_path(&self.tree, &self.lat, a, b)
    }
}

/// Attaches `|+⟩` vertex ancillas, measures every `Π_e` and removes the byproduct.
pub fn ungauge_region<R: Rng>(
    cat: &FusionCategory,
    lat: &HoneycombTorus,
    state: &SparseState,
    region: &Region,
    rng: &mut R,
) -> Result<(SparseState, Window, UngaugeOutcome)> {
    let mut win = Window::new(cat, lat, region.clone())?;
    let grp = win.group.clone();
    let n = grp.order;
    let mut st = state.clone();
    for &v in &region.vertices {
        win.registers.insert(v, st.layout.len());
        st = st.add_basis_register(&format!("v{v}"), n, 0);
    }
    let mut out = UngaugeOutcome::default();
    for &e in &region.edges {
        let projs: Vec<Box<dyn Fn(&SparseState) -> SparseState + Sync + '_>> = (0..n)
            .map(|g| {
                let w = &win;
                Box::new(move |s: &SparseState| w.gauss_projector(s, e, g)) as Box<dyn Fn(&SparseState) -> SparseState + Sync>
            })
            .collect();
        let refs: Vec<&(dyn Fn(&SparseState) -> SparseState + Sync)> = projs.iter().map(|b| b.as_ref()).collect();
        let m = st.measure_projectors(&refs, rng)?;
        drop(refs);
        drop(projs);
        st = m.state;
        out.edge_outcomes.insert(e, m.outcome);
        out.probabilities.push(m.probability);
    }
    // Trivial holonomy around every region face.
    for &p in &region.plaquettes {
        let pl = &lat.plaquettes[p];
        let mut hol = grp.identity;
        for k in 0..6 {
            let g = out.edge_outcomes[&pl.sides[k]];
            hol = grp.op(hol, if pl.ccw[k] { g } else { grp.inverse(g) });
        }
        if hol != grp.identity {
            return Err(Error::ProtocolViolation(format!("edge outcomes have holonomy {hol} around plaquette {p}")));
        }
    }
    // g_e = g_tail g_head⁻¹, solved outward from the root.
    if !region.is_empty() {
        out.potential.insert(win.tree.root, grp.identity);
    }
    for &w in win.tree.order.iter().skip(1) {
        let (u, e) = win.tree.parent[&w];
        let gu = out.potential[&u];
        let ge = out.edge_outcomes[&e];
        let gw = if lat.edges[e].tail == u { grp.op(grp.inverse(ge), gu) } else { grp.op(ge, gu) };
        out.potential.insert(w, gw);
    }
    for (&e, &ge) in &out.edge_outcomes {
        let (v, w) = win.ends(e);
        if grp.op(out.potential[&v], grp.inverse(out.potential[&w])) != ge {
            return Err(Error::ProtocolViolation(format!("edge outcome on {e} is not a coboundary")));
        }
    }
    // Undo B(g_V) = Π L_v(g_v).
    let fix: Vec<(usize, usize)> = out
        .potential
        .iter()
        .filter(|(_, &g)| g != grp.identity)
        .map(|(&v, &g)| (win.registers[&v], grp.inverse(g)))
        .collect();
    out.byproduct = out.potential.iter().filter(|(_, &g)| g != grp.identity).map(|(&v, _)| v).collect();
    let st = st.map_diag(|c| fix.iter().map(|&(r, g)| grp.char_value(c[r] as usize, g).conj()).product());
    Ok((st.normalized()?, win, out))
}

/// Measures the vertex ancillas in the character basis, removes them and undoes
/// `U_E(c')` for a chain with `∂c' = χ_V`.
pub fn regauge_region<R: Rng>(win: &Window, state: &SparseState, rng: &mut R) -> Result<(SparseState, MeasurementRecord)> {
    let grp = &win.group;
    let n = grp.order;
    // Registers already hold the character basis.
    let basis: Vec<Vec<Complex64>> = (0..n)
        .map(|k| (0..n).map(|j| if j == k { ONE } else { Complex64::new(0.0, 0.0) }).collect())
        .collect();
    let mut st = state.clone();
    let mut charges: Chain0 = BTreeMap::new();
    let mut record = MeasurementRecord::default();
    let mut total = grp.identity;
    // Registers were appended in vertex order; each removal shifts the rest down.
    for (i, (&v, &r)) in win.registers.iter().enumerate() {
        let pos = r - i;
        let m = st.measure_register(pos, &basis, rng)?;
        st = m.state.project_out(pos, &basis[m.outcome])?;
        record.outcomes.push((v, m.outcome));
        record.probabilities.push(m.probability);
        total = grp.op(total, m.outcome);
        if m.outcome != grp.identity {
            charges.insert(v, m.outcome);
        }
    }
    if total != grp.identity {
        return Err(Error::ProtocolViolation(format!("vertex charges multiply to {total}")));
    }
    let mut chain = Chain1::new();
    for (&v, &x) in &charges {
        if v == win.tree.root {
            continue;
        }
        let c = Chain1::along(grp, &win.lat, &win.path(win.tree.root, v), x);
        for (&e, &y) in &c.coeffs {
            chain.add(grp, e, y);
        }
    }
    debug_assert_eq!(chain.boundary(grp, &win.lat), charges);
    record.corrections.push(chain.coeffs.keys().copied().collect());
    let st = win.apply_chain(&st, &chain, true);
    Ok((st.normalized()?, record))
}

/// Applies `op` between ungauging and regauging after checking that it commutes
/// with the residual global symmetry on the state and on a few of its basis
/// configurations.
pub fn apply_symmetric_in_window<F>(win: &Window, state: &SparseState, op: F) -> Result<SparseState>
where
    F: Fn(&SparseState) -> Result<SparseState>,
{
    let mut probes = vec![state.clone()];
    for c in state.amps.keys().take(8) {
        probes.push(SparseState::basis(state.layout.clone(), c.clone())?);
    }
    for probe in &probes {
        for g in 0..win.group.order {
            let a = win.global_l(&op(probe)?, g);
            let b = op(&win.global_l(probe, g))?;
            let d = a.axpy(Complex64::new(-1.0, 0.0), &b)?.norm();
            if d > 1e-10 * probe.norm().max(1.0) {
                return Err(Error::InvalidArgument(format!("operator does not commute with L({g}): residual {d:e}")));
            }
        }
    }
    op(state)
}

/// The clean ungauged state `Π_e Π_e(1) |+⟩_V |Ψ⟩`, built without measurements.
pub fn clean_ungauged(win: &mut Window, state: &SparseState) -> Result<SparseState> {
    let n = win.group.order;
    let mut st = state.clone();
    win.registers.clear();
    for &v in &win.region.vertices.clone() {
        win.registers.insert(v, st.layout.len());
        st = st.add_basis_register(&format!("v{v}"), n, 0);
    }
    for &e in &win.region.edges.clone() {
        st = win.gauss_projector(&st, e, win.group.identity);
    }
    st.normalized()
}

/// Configurations of `state` restricted to edge registers.
pub fn edge_part(state: &SparseState, edges: usize) -> Vec<Config> {
    state.amps.keys().map(|c| c[..edges].to_vec()).collect()
}
