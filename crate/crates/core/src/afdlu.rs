//! Adaptive preparation: plaquette ancillas, controlled plaquette operators,
//! character-basis measurements and feedforward by character strings.
//!
//! A round at level `i` gauges the grading group `G = G^{(i)}` of `𝒞^{(i)}`:
//!
//! `|Ψ_(i)⟩ ∝ ⟨+|_P Π_p CB_p |+⟩_P |Ψ_(i−1)⟩`, with `CB_p |g⟩|Ψ⟩ = |g⟩ B_p^g|Ψ⟩`.
//!
//! Measuring the ancilla of `p` in the character basis `|χ⟩ = |G|^{-1/2} Σ_g χ(g)|g⟩`
//! leaves `(1/|G|) Σ_g χ̄(g) B_p^g`, the projector on the sector where `B_p^g = χ(g)`.
//! A character string with character `κ` leaving `p` multiplies that eigenvalue
//! by `κ̄` and the one at its far end by `κ`, so charges are cleared pairwise.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fusion::FusionCategory;
use crate::groups::{character_product, AbelianGroup};
use crate::lattice::HoneycombTorus;
use crate::state::{MeasurementRecord, SparseState};
use crate::stringnet::StringNet;

/// Which extension of `CB_p` to use off the level-`(i−1)` vacuum sector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CbMode {
    /// `B^{s_g} B^1 / d_{s_g} + (1 − B^1)`: unitary on the whole edge space.
    Extended,
    /// `B_p^g = (1/𝒟²) Σ_{a ∈ 𝒞_g} d_a B^a`: only invertible on the `B^1 = 1` sector.
    Raw,
}

/// Static data of one gauging round.
#[derive(Clone, Debug)]
pub struct GaugingRound {
    pub level: usize,
    pub group: AbelianGroup,
    /// Register positions of the plaquette ancillas, one per face in face order.
    pub ancillas: Vec<usize>,
    /// Rows are the character vectors `|χ_k⟩`.
    pub basis: Vec<Vec<Complex64>>,
}

impl GaugingRound {
    pub fn new(sn: &StringNet, level: usize) -> Result<Self> {
        let group = sn.level(level)?.group.clone();
        let n = group.order as f64;
        let basis = (0..group.order)
            .map(|k| (0..group.order).map(|g| group.char_value(k, g) / n.sqrt()).collect())
            .collect();
        Ok(Self { level, group, ancillas: Vec::new(), basis })
    }

    pub fn plus(&self) -> Vec<Complex64> {
        self.basis[0].clone()
    }
}

/// Appends one `|+⟩` ancilla per face; returns their register positions.
pub fn attach_plus(sn: &StringNet, state: &SparseState, round: &mut GaugingRound) -> SparseState {
    let plus = round.plus();
    let mut st = state.clone();
    round.ancillas.clear();
    for f in 0..sn.num_faces() {
        round.ancillas.push(st.layout.len());
        st = st.add_register(&format!("anc{}_{f}", round.level), &plus);
    }
    st
}

/// Lowest-index object of sector `g`, used as the representative loop.
fn representative(sn: &StringNet, level: usize, g: usize) -> Result<usize> {
    sn.level(level)?
        .sector(g)
        .first()
        .copied()
        .ok_or_else(|| Error::Structural(format!("empty sector {g} at level {level}")))
}

/// `CB_p` controlled by register `anc` holding a level-`level` group element.
pub fn controlled_bp(sn: &StringNet, state: &SparseState, face: usize, anc: usize, level: usize, mode: CbMode) -> Result<SparseState> {
    if anc >= state.layout.len() {
        return Err(Error::InvalidArgument(format!("ancilla register {anc} missing")));
    }
    let order = sn.level(level)?.group.order;
    if state.layout.dim(anc) != order {
        return Err(Error::DimensionMismatch { expected: order, got: state.layout.dim(anc) });
    }
    let mut acc = SparseState::zero(state.layout.clone());
    for g in 0..order {
        let part = state.map_diag(|c| if c[anc] as usize == g { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) });
        if part.is_empty() {
            continue;
        }
        let out = match mode {
            CbMode::Raw => sn.apply_bp_g(&part, face, level, g)?,
            CbMode::Extended => {
                let b1 = sn.apply_bp_identity(&part, face, level)?;
                let s = representative(sn, level, g)?;
                let moved = sn.apply_bp_a(&b1, face, s)?.scaled(Complex64::new(1.0 / sn.cat.qdim[s], 0.0));
                moved.axpy(Complex64::new(1.0, 0.0), &part)?.axpy(Complex64::new(-1.0, 0.0), &b1)?
            }
        };
        acc = acc.axpy(Complex64::new(1.0, 0.0), &out)?;
    }
    Ok(acc)
}

/// `Π_p CB_p` on fresh `|+⟩` ancillas, without measuring: the symmetry-enriched state.
pub fn set_entangler(sn: &StringNet, state: &SparseState, level: usize) -> Result<(SparseState, GaugingRound)> {
    let mut round = GaugingRound::new(sn, level)?;
    let mut st = attach_plus(sn, state, &mut round);
    for f in 0..sn.num_faces() {
        st = controlled_bp(sn, &st, f, round.ancillas[f], level, CbMode::Extended)?;
    }
    Ok((st, round))
}

/// Global symmetry `Π_p L_p(g)`, left multiplication on every ancilla of `round`.
pub fn global_symmetry(state: &SparseState, round: &GaugingRound, g: usize) -> SparseState {
    let grp = &round.group;
    state.map(|c, out| {
        let mut nc = c.to_vec();
        for &r in &round.ancillas {
            nc[r] = grp.op(g, c[r] as usize) as u8;
        }
        out.push((nc, Complex64::new(1.0, 0.0)));
    })
}

/// Clears plaquette charges pairwise with character strings.
///
/// Greedy matching: the lowest-index charged face sends its charge to the
/// nearest other charged face (ties to the lower index). Returns the corrected
/// state and the crossed edges of every string applied.
pub fn pair_charges(
    sn: &StringNet,
    lat: &HoneycombTorus,
    state: &SparseState,
    level: usize,
    charges: &BTreeMap<usize, usize>,
) -> Result<(SparseState, Vec<Vec<usize>>)> {
    let grp = sn.level(level)?.group.clone();
    let mut open: BTreeMap<usize, usize> = charges.iter().filter(|(_, &k)| k != 0).map(|(&p, &k)| (p, k)).collect();
    let mut st = state.clone();
    let mut strings = Vec::new();
    while let Some((&p, &k)) = open.iter().next() {
        open.remove(&p);
        let Some((&q, _)) = open
            .iter()
            .min_by_key(|(&q, _)| (lat.dual_path(p, q).crossings.len(), q))
        else {
            return Err(Error::ProtocolViolation(format!("unpaired charge {k} left at plaquette {p}")));
        };
        let path = lat.dual_path(p, q);
        st = sn.apply_char_string(&st, level, k, &path)?;
        strings.push(path.edges());
        let merged = character_product(&grp, open[&q], k);
        if merged == 0 {
            open.remove(&q);
        } else {
            open.insert(q, merged);
        }
    }
    Ok((st, strings))
}

/// One gauging round with measurement and feedforward.
pub fn kw_round<R: Rng>(
    sn: &StringNet,
    lat: &HoneycombTorus,
    state: &SparseState,
    level: usize,
    rng: &mut R,
) -> Result<(SparseState, MeasurementRecord)> {
    let (mut st, round) = set_entangler(sn, state, level)?;
    let mut record = MeasurementRecord { round: level, ..Default::default() };
    let mut charges = BTreeMap::new();
    // Ancillas are measured in face order; each is retired right away, which
    // shifts the later registers down by one.
    for f in 0..sn.num_faces() {
        let r = round.ancillas[f] - f;
        let m = st.measure_register(r, &round.basis, rng)?;
        st = m.state.project_out(r, &round.basis[m.outcome])?;
        record.outcomes.push((f, m.outcome));
        record.probabilities.push(m.probability);
        charges.insert(f, m.outcome);
    }
    let (st, strings) = pair_charges(sn, lat, &st, level, &charges)?;
    record.corrections = strings;
    Ok((st.normalized()?, record))
}

/// Circuit map `⟨χ|_a Π CB_p |+⟩_a` for a single face.
pub fn outcome_map(sn: &StringNet, state: &SparseState, face: usize, level: usize, chi: usize, mode: CbMode) -> Result<SparseState> {
    let round = GaugingRound::new(sn, level)?;
    let anc = state.layout.len();
    let st = state.add_register("anc", &round.plus());
    let st = controlled_bp(sn, &st, face, anc, level, mode)?;
    st.project_out(anc, &round.basis[chi])
}

/// Everything needed to replay a preparation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTranscript {
    pub category: String,
    pub lx: usize,
    pub ly: usize,
    pub seed: u64,
    pub rounds: Vec<MeasurementRecord>,
    /// Earlier attempts that ended with an unpairable total charge.
    #[serde(default)]
    pub discarded: Vec<Vec<MeasurementRecord>>,
    /// SHA-256 of the final state, see [`state_checksum`].
    pub checksum: String,
}

/// SHA-256 over configurations and amplitudes printed to 10 significant digits.
pub fn state_checksum(state: &SparseState) -> String {
    let mut h = Sha256::new();
    for r in &state.layout.registers {
        h.update(format!("{}:{};", r.name, r.dim));
    }
    for (c, a) in &state.amps {
        h.update(c);
        // `+ 0.0` folds negative zero into zero.
        h.update(format!("{:+.9e},{:+.9e};", a.re + 0.0, a.im + 0.0));
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Attempts `prepare` makes before giving up.
pub const MAX_ATTEMPTS: usize = 32;

/// Runs every round of the grading series from the vacuum.
///
/// On the torus the level-`i` ground state reached from the vacuum need not be
/// symmetric under the next round's global symmetry, so a round can end with
/// a total charge that no string pairs away. That attempt is discarded and the
/// preparation restarts from the vacuum with the same RNG stream.
pub fn prepare(cat: &FusionCategory, lat: &HoneycombTorus, seed: u64) -> Result<(SparseState, ProtocolTranscript)> {
    let report = cat.verify_grading();
    if !report.ok {
        return Err(Error::Structural(report.diagnostics.join("; ")));
    }
    let levels = cat.series.len();
    if levels == 0 {
        return Err(Error::Structural(format!("{} has no grading series", cat.name)));
    }
    let sn = StringNet::new(cat.clone(), lat.graph());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut discarded = Vec::new();
    'attempt: for _ in 0..MAX_ATTEMPTS {
        let mut st = sn.vacuum();
        let mut rounds = Vec::new();
        for level in 1..=levels {
            match kw_round(&sn, lat, &st, level, &mut rng) {
                Ok((next, mut rec)) => {
                    rec.seed = seed;
                    rounds.push(rec);
                    st = next;
                }
                Err(Error::ProtocolViolation(_)) => {
                    discarded.push(rounds);
                    continue 'attempt;
                }
                Err(e) => return Err(e),
            }
        }
        let checksum = state_checksum(&st);
        let tr = ProtocolTranscript { category: cat.name.clone(), lx: lat.lx, ly: lat.ly, seed, rounds, discarded, checksum };
        return Ok((st, tr));
    }
    Err(Error::ProtocolViolation(format!("no attempt out of {MAX_ATTEMPTS} paired every charge")))
}

/// Largest `‖P ψ − ψ‖` over every `A_v` and every level-`level` plaquette projector.
pub fn projector_residual(sn: &StringNet, state: &SparseState, level: usize) -> Result<f64> {
    let mut worst = (sn.apply_all_av(state).axpy(Complex64::new(-1.0, 0.0), state)?).norm();
    for f in 0..sn.num_faces() {
        let p = sn.apply_bp_level(state, f, level)?;
        worst = worst.max(p.axpy(Complex64::new(-1.0, 0.0), state)?.norm());
    }
    Ok(worst)
}
