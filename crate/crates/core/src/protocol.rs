//! Label-level Monte Carlo of long string operators built from short pairs.
//!
//! A string of length `n` lives on sites `0..=n`. Moving an anyon `x` from site
//! `i` to the far end `n` creates one `x̄ x` pair per segment and measures the
//! fusion `x ⊗ x̄` at every junction it passes. Non-vacuum outcomes are the
//! residuals of the next round. Fusion channels are drawn with the
//! quantum-dimension Born rule `N_{ab}^c d_c / (d_a d_b)`; this weighting is an
//! assumption, not derived from lattice amplitudes.
//!
//! The far end absorbs every delivered label. Its new charge is drawn from the
//! conditional distribution that keeps the total charge of (residuals, far end)
//! equal to the string label, so a completed string always ends on `a`.
//!
//! Labels in a non-trivial bottom level of the grading series are moved by
//! condensation: a branch measurement picks a descendant in the child theory,
//! the child string is run to completion, and the parent label is delivered
//! after regauging.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::Digest;

use crate::error::{Error, Result};
use crate::fusion::{group_from_factors, Level, LevelFile};
use crate::groups::{direct_product, make_cyclic, AbelianGroup};

const DIM_TOL: f64 = 1e-10;

/// Descendants of one label under condensation, with branching weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Condensation {
    pub child: Box<AnyonTheory>,
    /// `map[a]` lists `(descendant, weight)`; empty for confined labels.
    pub map: Vec<Vec<(usize, f64)>>,
}

/// Fusion data of an anyon theory without F- or R-symbols.
#[derive(Clone, Debug, PartialEq)]
pub struct AnyonTheory {
    pub name: String,
    pub labels: Vec<String>,
    pub dual: Vec<usize>,
    /// `fusion[a][b][c] = N_{ab}^c`.
    pub fusion: Vec<Vec<Vec<u32>>>,
    pub dims: Vec<f64>,
    /// `levels[0]` is the core; the theory is nilpotent when the core is `{1}`.
    pub levels: Vec<Level>,
    pub condensation: Option<Condensation>,
}

impl AnyonTheory {
    pub fn rank(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, name: &str) -> Result<usize> {
        self.labels.iter().position(|l| l == name).ok_or_else(|| Error::UnknownName(name.into()))
    }

    pub fn n(&self, a: usize, b: usize, c: usize) -> u32 {
        self.fusion[a][b][c]
    }

    /// Channels `c` with `N_{ab}^c > 0`.
    pub fn fuse(&self, a: usize, b: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.rank()).filter(move |&c| self.fusion[a][b][c] > 0)
    }

    pub fn is_invertible(&self, a: usize) -> bool {
        (self.dims[a] - 1.0).abs() < DIM_TOL
    }

    pub fn is_nilpotent(&self) -> bool {
        self.levels.first().is_some_and(|l| l.objects == [0])
    }

    /// Lowest series level containing `a`.
    pub fn level_of(&self, a: usize) -> usize {
        self.levels.iter().position(|l| l.contains(a)).unwrap_or(self.levels.len())
    }

    /// Probability of each channel of `a ⊗ b`.
    pub fn channel_probs(&self, a: usize, b: usize) -> Vec<(usize, f64)> {
        let norm = self.dims[a] * self.dims[b];
        self.fuse(a, b).map(|c| (c, self.n(a, b, c) as f64 * self.dims[c] / norm)).collect()
    }

    /// Checks the unit, duals, `Σ_c N d_c = d_a d_b`, the grading series and the condensation map.
    pub fn validate(&self) -> Result<()> {
        let n = self.rank();
        let bad = |m: String| Err(Error::Structural(format!("{}: {m}", self.name)));
        if n == 0 || self.dual.len() != n || self.dims.len() != n || self.fusion.len() != n {
            return bad("label, dual, dim and fusion tables disagree in size".into());
        }
        if self.fusion.iter().any(|r| r.len() != n || r.iter().any(|c| c.len() != n)) {
            return bad("fusion table is not n×n×n".into());
        }
        for a in 0..n {
            if self.dims[a] < 1.0 - DIM_TOL {
                return bad(format!("d_{} < 1", self.labels[a]));
            }
            if self.dual[a] >= n || self.dual[self.dual[a]] != a {
                return bad(format!("dual of {} is not an involution", self.labels[a]));
            }
            if self.fusion[0][a][a] != 1 || self.fusion[a][0][a] != 1 || self.fuse(0, a).count() != 1 {
                return bad("label 0 is not the unit".into());
            }
            if self.n(a, self.dual[a], 0) != 1 {
                return bad(format!("{} ⊗ dual does not contain the unit once", self.labels[a]));
            }
            for b in 0..n {
                let s: f64 = (0..n).map(|c| self.n(a, b, c) as f64 * self.dims[c]).sum();
                if (s - self.dims[a] * self.dims[b]).abs() > DIM_TOL {
                    return bad(format!("Σ N d ≠ d d for ({}, {})", self.labels[a], self.labels[b]));
                }
                if self.fusion[a][b] != self.fusion[b][a] {
                    return bad("fusion is not commutative".into());
                }
            }
        }
        self.validate_levels()?;
        if let Some(cond) = &self.condensation {
            self.validate_condensation(cond)?;
        }
        Ok(())
    }

    fn validate_levels(&self) -> Result<()> {
        let n = self.rank();
        let bad = |m: String| Err(Error::Structural(format!("{}: {m}", self.name)));
        let Some(top) = self.levels.last() else {
            return bad("empty grading series".into());
        };
        if top.objects.len() != n {
            return bad("top level does not contain every label".into());
        }
        for (i, lv) in self.levels.iter().enumerate() {
            for &a in &lv.objects {
                let ga = lv.grade[a].unwrap();
                for &b in &lv.objects {
                    let gb = lv.grade[b].unwrap();
                    for c in self.fuse(a, b) {
                        if lv.grade[c] != Some(lv.group.op(ga, gb)) {
                            return bad(format!("level {i}: {}⊗{} breaks the grading", self.labels[a], self.labels[b]));
                        }
                    }
                }
            }
            if i > 0 && lv.sector(lv.group.identity) != self.levels[i - 1].objects {
                return bad(format!("level {i}: trivial sector differs from level {}", i - 1));
            }
        }
        if !self.levels[0].group.is_trivial() {
            return bad("core level must carry the trivial group".into());
        }
        Ok(())
    }

    fn validate_condensation(&self, cond: &Condensation) -> Result<()> {
        let child = &cond.child;
        child.validate()?;
        if cond.map.len() != self.rank() {
            return Err(Error::Structural("condensation map does not cover every label".into()));
        }
        for (a, desc) in cond.map.iter().enumerate() {
            if desc.is_empty() {
                if self.levels[0].contains(a) {
                    return Err(Error::Structural(format!("core label {} has no descendants", self.labels[a])));
                }
                continue;
            }
            let w: f64 = desc.iter().map(|d| d.1).sum();
            if (w - 1.0).abs() > 1e-9 || desc.iter().any(|d| d.1 < 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "branching weights of {} are not normalized (Σ = {w})",
                    self.labels[a]
                )));
            }
            if desc.iter().any(|d| d.0 >= child.rank()) {
                return Err(Error::Structural("descendant out of range".into()));
            }
            let mut mine: Vec<usize> = desc.iter().map(|d| child.dual[d.0]).collect();
            let mut theirs: Vec<usize> = cond.map[self.dual[a]].iter().map(|d| d.0).collect();
            mine.sort_unstable();
            theirs.sort_unstable();
            if mine != theirs {
                return Err(Error::Structural(format!("descendants of {} are not dual-closed", self.labels[a])));
            }
        }
        if cond.map[0].iter().all(|d| d.0 != 0) {
            return Err(Error::Structural("the unit must condense to the child unit".into()));
        }
        Ok(())
    }

    /// Number of fusion paths `f ⊗ rest[0] ⊗ … → target`, with multiplicity.
    fn paths(&self, f: usize, rest: &[usize], target: usize) -> f64 {
        let n = self.rank();
        let mut v = vec![0.0; n];
        v[f] = 1.0;
        for &r in rest {
            let mut w = vec![0.0; n];
            for (b, &x) in v.iter().enumerate() {
                if x != 0.0 {
                    for c in self.fuse(b, r) {
                        w[c] += x * self.n(b, r, c) as f64;
                    }
                }
            }
            v = w;
        }
        v[target]
    }
}

/// Samples a channel of `a ⊗ b` with probability `N_{ab}^c d_c / (d_a d_b)`.
pub fn fuse_sample<R: Rng + ?Sized>(theory: &AnyonTheory, a: usize, b: usize, rng: &mut R) -> usize {
    let probs = theory.channel_probs(a, b);
    if probs.len() == 1 {
        return probs[0].0;
    }
    let dist = WeightedIndex::new(probs.iter().map(|p| p.1)).expect("channel weights are positive");
    probs[dist.sample(rng)].0
}

// ---------------------------------------------------------------------------
// transcripts

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fusion {
    pub site: usize,
    pub label: usize,
    pub outcome: usize,
    /// Grade of the outcome at the series level of `label`.
    pub grade: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub site: usize,
    pub label: usize,
    pub descendant: usize,
    pub child: FusionTranscript,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Round {
    /// Labels moved to the far end this round, with their start sites.
    pub moved: Vec<(usize, usize)>,
    pub fusions: Vec<Fusion>,
    pub branches: Vec<Branch>,
    /// Non-vacuum outcomes left on the chain.
    pub residuals: Vec<(usize, usize)>,
    pub far_end: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionTranscript {
    pub theory: String,
    pub anyon: usize,
    pub length: usize,
    pub left_end: usize,
    pub far_end: usize,
    pub rounds: Vec<Round>,
    /// Rounds that moved at least one label by condensation.
    pub condensation_rounds: usize,
}

impl FusionTranscript {
    pub fn terminated(&self) -> bool {
        self.rounds.last().is_some_and(|r| r.residuals.is_empty())
    }

    /// Every junction outcome is trivially graded at the level of the label
    /// that produced it, and the far end carries the string label.
    pub fn check_bookkeeping(&self, theory: &AnyonTheory) -> Result<()> {
        for (k, round) in self.rounds.iter().enumerate() {
            for f in &round.fusions {
                let lv = &theory.levels[theory.level_of(f.label)];
                if f.grade != lv.group.identity {
                    return Err(Error::ProtocolViolation(format!("round {k}: outcome grade {} ≠ identity", f.grade)));
                }
            }
            if let Some(cond) = &theory.condensation {
                for b in &round.branches {
                    b.child.check_bookkeeping(&cond.child)?;
                }
            }
        }
        self.check_charge(theory)
    }

    /// The created labels fuse back to vacuum: `left ⊗ residuals ⊗ far ∋ 1`.
    pub fn check_charge(&self, theory: &AnyonTheory) -> Result<()> {
        let mut rest = vec![self.far_end];
        if let Some(r) = self.rounds.last() {
            rest.extend(r.residuals.iter().map(|x| x.1));
        }
        if theory.paths(self.left_end, &rest, 0) == 0.0 {
            return Err(Error::ProtocolViolation("total charge is not vacuum".into()));
        }
        if self.terminated() && self.far_end != self.anyon {
            return Err(Error::ProtocolViolation(format!(
                "far end {} ≠ {}",
                theory.labels[self.far_end], theory.labels[self.anyon]
            )));
        }
        Ok(())
    }
}

struct Chain<'t, R: Rng> {
    theory: &'t AnyonTheory,
    n: usize,
    target: usize,
    far: usize,
    rng: &'t mut R,
}

impl<R: Rng> Chain<'_, R> {
    fn deliver(&mut self, x: usize, rest: &[usize]) -> usize {
        let t = self.theory;
        let opts: Vec<(usize, f64)> = t
            .fuse(self.far, x)
            .map(|c| (c, t.n(self.far, x, c) as f64 * t.paths(c, rest, self.target)))
            .filter(|o| o.1 > 0.0)
            .collect();
        self.far = if opts.len() == 1 {
            opts[0].0
        } else {
            let d = WeightedIndex::new(opts.iter().map(|o| o.1)).expect("conservation leaves a channel");
            opts[d.sample(self.rng)].0
        };
        self.far
    }

    /// Moves every label in `moves` to the far end, round after round.
    fn run(mut self, mut moves: Vec<(usize, usize, bool)>) -> Result<(Vec<Round>, usize, usize)> {
        let t = self.theory;
        let max_rounds = t.levels.len() + 1;
        let mut rounds = Vec::new();
        let mut cond_rounds = 0;
        while !moves.is_empty() {
            if rounds.len() >= max_rounds {
                return Err(Error::ProtocolViolation(format!("no termination after {max_rounds} rounds")));
            }
            let mut round = Round {
                moved: moves.iter().map(|m| (m.0, m.1)).collect(),
                fusions: Vec::new(),
                branches: Vec::new(),
                residuals: Vec::new(),
                far_end: self.far,
            };
            for k in 0..moves.len() {
                let (site, x, source) = moves[k];
                if t.level_of(x) == 0 && x != 0 {
                    let cond = t.condensation.as_ref().ok_or_else(|| {
                        Error::ProtocolViolation(format!("{} needs a condensation map", t.labels[x]))
                    })?;
                    let desc = &cond.map[x];
                    let pick = WeightedIndex::new(desc.iter().map(|d| d.1))
                        .map_err(|_| Error::ProtocolViolation(format!("{} is confined", t.labels[x])))?;
                    let d = desc[pick.sample(self.rng)].0;
                    let child = run_string(&cond.child, d, self.n, site, source, self.rng)?;
                    round.branches.push(Branch { site, label: x, descendant: d, child });
                } else {
                    let lv = &t.levels[t.level_of(x)];
                    let first = if source { site } else { site + 1 };
                    for s in first..self.n {
                        let c = fuse_sample(t, x, t.dual[x], self.rng);
                        round.fusions.push(Fusion { site: s, label: x, outcome: c, grade: lv.grade[c].unwrap() });
                        if c != 0 {
                            round.residuals.push((s, c));
                        }
                    }
                }
                let mut rest: Vec<usize> = moves[k + 1..].iter().map(|m| m.1).collect();
                rest.extend(round.residuals.iter().map(|r| r.1));
                self.deliver(x, &rest);
            }
            if !round.branches.is_empty() {
                cond_rounds += 1;
            }
            round.far_end = self.far;
            moves = round.residuals.iter().map(|&(s, c)| (s, c, true)).collect();
            rounds.push(round);
        }
        Ok((rounds, self.far, cond_rounds))
    }
}

fn run_string<R: Rng>(
    theory: &AnyonTheory,
    a: usize,
    n: usize,
    site: usize,
    source: bool,
    rng: &mut R,
) -> Result<FusionTranscript> {
    if a >= theory.rank() {
        return Err(Error::InvalidArgument(format!("label {a} out of range")));
    }
    if n == 0 || site >= n {
        return Err(Error::InvalidArgument(format!("string from site {site} of a length-{n} chain")));
    }
    let chain = Chain { theory, n, target: a, far: 0, rng };
    let (rounds, far_end, condensation_rounds) = chain.run(vec![(site, a, source)])?;
    Ok(FusionTranscript {
        theory: theory.name.clone(),
        anyon: a,
        length: n,
        left_end: theory.dual[a],
        far_end,
        rounds,
        condensation_rounds,
    })
}

/// Sequential-fusion string of label `a` and length `n` in a nilpotent theory.
pub fn nilpotent_string_sim<R: Rng>(theory: &AnyonTheory, a: usize, n: usize, rng: &mut R) -> Result<FusionTranscript> {
    if !theory.is_nilpotent() {
        return Err(Error::InvalidArgument(format!("{} is not nilpotent", theory.name)));
    }
    run_string(theory, a, n, 0, false, rng)
}

/// Fusion-and-condensation string: bottom-level labels are moved through the
/// child theory of the condensation map.
pub fn solvable_string_sim<R: Rng>(theory: &AnyonTheory, a: usize, n: usize, rng: &mut R) -> Result<FusionTranscript> {
    if let Some(c) = &theory.condensation {
        theory.validate_condensation(c)?;
    } else if !theory.is_nilpotent() {
        return Err(Error::InvalidArgument(format!("{} has no condensation map", theory.name)));
    }
    run_string(theory, a, n, 0, false, rng)
}

/// RNG for trial `trial` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Runs `trials` independent trials in parallel; the output order is the trial order.
pub fn run_trials<T: Send>(seed: u64, trials: usize, f: impl Fn(&mut ChaCha20Rng) -> T + Sync) -> Vec<T> {
    (0..trials).into_par_iter().map(|k| f(&mut trial_rng(seed, k as u64))).collect()
}

// ---------------------------------------------------------------------------
// naive cyclic strings

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessCurve {
    pub theory: String,
    pub anyon: String,
    pub trials: usize,
    /// Probability that a round leaves a non-invertible residual.
    pub p_cyclic: f64,
    pub overridden: bool,
    /// `success[d−1]` is the fraction of trials done within `d` rounds.
    pub success: Vec<f64>,
    /// `1 − p^d`.
    pub expected: Vec<f64>,
    /// Binomial standard error of each expected value.
    pub sigma: Vec<f64>,
}

impl SuccessCurve {
    /// Largest deviation from the expected curve in units of σ (0 where σ = 0).
    pub fn max_z(&self) -> f64 {
        self.success
            .iter()
            .zip(&self.expected)
            .zip(&self.sigma)
            .map(|((s, e), sg)| if *sg > 0.0 { (s - e).abs() / sg } else if (s - e).abs() > 0.0 { f64::INFINITY } else { 0.0 })
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["depth", "success", "expected", "sigma"]).map_err(csv_err)?;
        for d in 0..self.success.len() {
            w.write_record([
                (d + 1).to_string(),
                format!("{:.6}", self.success[d]),
                format!("{:.6}", self.expected[d]),
                format!("{:.6}", self.sigma[d]),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

/// Naive strategy for a cyclic label: keep re-fusing the residual for up to
/// `depth` rounds. A round succeeds when its outcome is invertible.
/// `p_override` replaces the sampled failure probability by a fixed one.
pub fn naive_cyclic_sim(
    theory: &AnyonTheory,
    a: usize,
    depth: usize,
    trials: usize,
    seed: u64,
    p_override: Option<f64>,
) -> Result<SuccessCurve> {
    if theory.n(a, theory.dual[a], a) == 0 {
        return Err(Error::InvalidArgument(format!("{} is not cyclic", theory.labels[a])));
    }
    if let Some(p) = p_override {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
        }
    }
    let p_cyclic = p_override.unwrap_or_else(|| {
        theory.channel_probs(a, theory.dual[a]).iter().filter(|c| !theory.is_invertible(c.0)).map(|c| c.1).sum()
    });
    let done_at: Vec<Option<usize>> = run_trials(seed, trials, |rng| {
        let mut x = a;
        for d in 1..=depth {
            let failed = match p_override {
                Some(p) => rng.gen_bool(p),
                None => {
                    x = fuse_sample(theory, x, theory.dual[x], rng);
                    !theory.is_invertible(x)
                }
            };
            if !failed {
                return Some(d);
            }
        }
        None
    });
    let mut success = vec![0.0; depth];
    for d in done_at.into_iter().flatten() {
        for s in &mut success[d - 1..] {
            *s += 1.0;
        }
    }
    let t = trials.max(1) as f64;
    success.iter_mut().for_each(|s| *s /= t);
    let expected: Vec<f64> = (1..=depth).map(|d| 1.0 - p_cyclic.powi(d as i32)).collect();
    let sigma = expected.iter().map(|e| (e * (1.0 - e) / t).sqrt()).collect();
    Ok(SuccessCurve {
        theory: theory.name.clone(),
        anyon: theory.labels[a].clone(),
        trials,
        p_cyclic,
        overridden: p_override.is_some(),
        success,
        expected,
        sigma,
    })
}

// ---------------------------------------------------------------------------
// builtins

fn level(n: usize, objects: Vec<usize>, group: AbelianGroup, grades: Vec<usize>) -> Level {
    let mut grade = vec![None; n];
    for (&a, &g) in objects.iter().zip(&grades) {
        grade[a] = Some(g);
    }
    Level { objects, group, grade }
}

fn trivial_group() -> AbelianGroup {
    make_cyclic(1).unwrap()
}

fn table(n: usize, rule: impl Fn(usize, usize) -> Vec<usize>) -> Vec<Vec<Vec<u32>>> {
    let mut f = vec![vec![vec![0; n]; n]; n];
    for a in 0..n {
        for b in 0..n {
            for c in rule(a, b) {
                f[a][b][c] += 1;
            }
        }
    }
    f
}

/// `D(ℤ_3)`: label `e^i m^j` has index `i + 3j`.
pub fn dz3() -> AnyonTheory {
    let n = 9;
    let add = |a: usize, b: usize| (a % 3 + b % 3) % 3 + 3 * ((a / 3 + b / 3) % 3);
    let labels = (0..n)
        .map(|k| {
            let pow = |s: &str, p: usize| match p {
                0 => String::new(),
                1 => s.to_string(),
                _ => format!("{s}*"),
            };
            let l = format!("{}{}", pow("e", k % 3), pow("m", k / 3));
            if l.is_empty() { "1".into() } else { l }
        })
        .collect();
    let g = direct_product(&make_cyclic(3).unwrap(), &make_cyclic(3).unwrap());
    AnyonTheory {
        name: "dz3".into(),
        labels,
        dual: (0..n).map(|k| (3 - k % 3) % 3 + 3 * ((3 - k / 3) % 3)).collect(),
        fusion: table(n, |a, b| vec![add(a, b)]),
        dims: vec![1.0; n],
        levels: vec![level(n, vec![0], trivial_group(), vec![0]), level(n, (0..n).collect(), g, (0..n).collect())],
        condensation: None,
    }
}

/// Doubled Ising: label `(x, y)` has index `x + 3y` with `0 = 1, 1 = σ, 2 = ψ`.
pub fn doubled_ising() -> AnyonTheory {
    let ising = |a: usize, b: usize| -> Vec<usize> {
        match (a, b) {
            (0, x) | (x, 0) => vec![x],
            (1, 1) => vec![0, 2],
            (1, 2) | (2, 1) => vec![1],
            _ => vec![0],
        }
    };
    let n = 9;
    let names = ["1", "σ", "ψ"];
    let labels = (0..n)
        .map(|k| match (k % 3, k / 3) {
            (0, 0) => "1".to_string(),
            (x, 0) => names[x].to_string(),
            (0, y) => format!("{}̄", names[y]),
            (x, y) => format!("{}{}̄", names[x], names[y]),
        })
        .collect();
    let fusion = table(n, |a, b| {
        let mut out = Vec::new();
        for x in ising(a % 3, b % 3) {
            for y in ising(a / 3, b / 3) {
                out.push(x + 3 * y);
            }
        }
        out
    });
    let d = [1.0, std::f64::consts::SQRT_2, 1.0];
    let v4 = || direct_product(&make_cyclic(2).unwrap(), &make_cyclic(2).unwrap());
    let abelian = vec![0, 2, 6, 8];
    let mid = level(n, abelian.clone(), v4(), abelian.iter().map(|&k| (k % 3 == 2) as usize + 2 * (k / 3 == 2) as usize).collect());
    let top = level(n, (0..n).collect(), v4(), (0..n).map(|k| (k % 3 == 1) as usize + 2 * (k / 3 == 1) as usize).collect());
    AnyonTheory {
        name: "doubled_ising".into(),
        labels,
        dual: (0..n).collect(),
        fusion,
        dims: (0..n).map(|k| d[k % 3] * d[k / 3]).collect(),
        levels: vec![level(n, vec![0], trivial_group(), vec![0]), mid, top],
        condensation: None,
    }
}

/// The `{1, z, σ₊, σ₋, Φ}` sector of `Z(TY(ℤ₃))`, with `Φ → {em*, e*m}` under
/// condensation of `z` into `D(ℤ₃)`.
pub fn zty3() -> AnyonTheory {
    let (one, z, sp, sm, phi) = (0, 1, 2, 3, 4);
    let n = 5;
    let fusion = table(n, |a, b| match (a.min(b), a.max(b)) {
        (0, x) => vec![x],
        (1, 1) => vec![one],
        (1, 2) => vec![sm],
        (1, 3) => vec![sp],
        (1, 4) => vec![phi],
        (2, 2) | (3, 3) => vec![one, phi],
        (2, 3) => vec![z, phi],
        (2, 4) | (3, 4) => vec![sp, sm],
        _ => vec![one, z, phi],
    });
    let s3 = 3f64.sqrt();
    let child = dz3();
    let (em_, e_m) = (child.label("em*").unwrap(), child.label("e*m").unwrap());
    let map = vec![vec![(0, 1.0)], vec![(0, 1.0)], vec![], vec![], vec![(em_, 0.5), (e_m, 0.5)]];
    AnyonTheory {
        name: "zty3".into(),
        labels: ["1", "z", "σ+", "σ-", "Φ"].map(String::from).to_vec(),
        dual: (0..n).collect(),
        fusion,
        dims: vec![1.0, 1.0, s3, s3, 2.0],
        levels: vec![
            level(n, vec![one, z, phi], trivial_group(), vec![0, 0, 0]),
            level(n, (0..n).collect(), make_cyclic(2).unwrap(), vec![0, 0, 1, 1, 0]),
        ],
        condensation: Some(Condensation { child: Box::new(child), map }),
    }
}

/// `dz3`, `doubled_ising`, `zty3`.
pub fn builtin_theory(name: &str) -> Result<AnyonTheory> {
    match name.trim().to_ascii_lowercase().as_str() {
        "dz3" | "d_z3" => Ok(dz3()),
        "doubled_ising" | "ising" => Ok(doubled_ising()),
        "zty3" | "z_ty_z3" => Ok(zty3()),
        _ => Err(Error::UnknownName(name.into())),
    }
}

// ---------------------------------------------------------------------------
// file format

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CondensationFile {
    pub child: Box<TheoryFile>,
    /// Per label, `(descendant, weight)`; a missing weight means `d`-proportional.
    pub map: Vec<Vec<(usize, Option<f64>)>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TheoryFile {
    pub name: String,
    pub labels: Vec<String>,
    pub duals: Vec<usize>,
    pub dims: Vec<f64>,
    /// `(a, b, c, N_{ab}^c)` for every nonzero entry.
    pub fusion: Vec<[usize; 4]>,
    pub series: Vec<LevelFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condensation: Option<CondensationFile>,
}

impl AnyonTheory {
    pub fn to_file(&self) -> TheoryFile {
        let n = self.rank();
        let mut fusion = Vec::new();
        for a in 0..n {
            for b in 0..n {
                for c in self.fuse(a, b) {
                    fusion.push([a, b, c, self.n(a, b, c) as usize]);
                }
            }
        }
        TheoryFile {
            name: self.name.clone(),
            labels: self.labels.clone(),
            duals: self.dual.clone(),
            dims: self.dims.clone(),
            fusion,
            series: self
                .levels
                .iter()
                .map(|l| LevelFile {
                    objects: l.objects.clone(),
                    group: l.group.factors.clone(),
                    grading: l.objects.iter().map(|&a| l.grade[a].unwrap()).collect(),
                })
                .collect(),
            condensation: self.condensation.as_ref().map(|c| CondensationFile {
                child: Box::new(c.child.to_file()),
                map: c.map.iter().map(|d| d.iter().map(|&(x, w)| (x, Some(w))).collect()).collect(),
            }),
        }
    }

    /// Builds and validates a theory from its file form.
    pub fn from_file(file: &TheoryFile) -> Result<Self> {
        let n = file.labels.len();
        let mut fusion = vec![vec![vec![0u32; n]; n]; n];
        for &[a, b, c, m] in &file.fusion {
            if a >= n || b >= n || c >= n {
                return Err(Error::Structural(format!("fusion entry ({a},{b},{c}) out of range")));
            }
            fusion[a][b][c] = m as u32;
        }
        let mut levels = Vec::new();
        for lf in &file.series {
            let g = group_from_factors(&lf.group)?;
            if lf.objects.len() != lf.grading.len()
                || lf.objects.iter().any(|&a| a >= n)
                || lf.grading.iter().any(|&x| x >= g.order)
            {
                return Err(Error::Structural("malformed series level".into()));
            }
            levels.push(level(n, lf.objects.clone(), g, lf.grading.clone()));
        }
        let condensation = match &file.condensation {
            None => None,
            Some(cf) => {
                let child = AnyonTheory::from_file(&cf.child)?;
                let mut map = Vec::new();
                for desc in &cf.map {
                    if desc.iter().any(|d| d.0 >= child.rank()) {
                        return Err(Error::Structural("descendant out of range".into()));
                    }
                    let total: f64 = desc.iter().map(|d| child.dims[d.0]).sum();
                    map.push(desc.iter().map(|&(x, w)| (x, w.unwrap_or(child.dims[x] / total))).collect());
                }
                Some(Condensation { child: Box::new(child), map })
            }
        };
        let t = AnyonTheory {
            name: file.name.clone(),
            labels: file.labels.clone(),
            dual: file.duals.clone(),
            fusion,
            dims: file.dims.clone(),
            levels,
            condensation,
        };
        t.validate()?;
        Ok(t)
    }

    /// SHA-256 of the serialized theory file.
    pub fn checksum(&self) -> String {
        let s = serde_json::to_string(&self.to_file()).expect("theory serializes");
        sha2::Sha256::digest(s.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Reads a theory from a JSON file.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_file(&serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate() {
        for t in [dz3(), doubled_ising(), zty3()] {
            t.validate().unwrap();
        }
        assert!(doubled_ising().is_nilpotent());
        assert!(!zty3().is_nilpotent());
        assert_eq!(doubled_ising().levels.len() - 1, 2);
    }

    #[test]
    fn phi_channel_probabilities() {
        let t = zty3();
        let phi = t.label("Φ").unwrap();
        let p = t.channel_probs(phi, phi);
        assert_eq!(p, vec![(0, 0.25), (1, 0.25), (phi, 0.5)]);
        // Empirical check of the sampler itself.
        let mut rng = trial_rng(3, 0);
        let mut counts = [0usize; 5];
        for _ in 0..20000 {
            counts[fuse_sample(&t, phi, phi, &mut rng)] += 1;
        }
        assert!((counts[phi] as f64 / 20000.0 - 0.5).abs() < 0.02);
        assert!((counts[1] as f64 / 20000.0 - 0.25).abs() < 0.02);
    }

    #[test]
    fn vacuum_channel_has_inverse_square_dimension() {
        for t in [doubled_ising(), zty3()] {
            for a in 0..t.rank() {
                let p0 = t.channel_probs(a, t.dual[a]).iter().find(|c| c.0 == 0).unwrap().1;
                assert!((p0 - 1.0 / (t.dims[a] * t.dims[a])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn abelian_fusion_is_deterministic() {
        let t = dz3();
        let mut rng = trial_rng(0, 0);
        for a in 0..9 {
            for b in 0..9 {
                let c = fuse_sample(&t, a, b, &mut rng);
                assert_eq!(t.fuse(a, b).collect::<Vec<_>>(), vec![c]);
            }
        }
    }

    #[test]
    fn abelian_strings_finish_in_one_round() {
        let t = dz3();
        for a in 1..9 {
            let tr = nilpotent_string_sim(&t, a, 6, &mut trial_rng(1, a as u64)).unwrap();
            assert_eq!(tr.rounds.len(), 1);
            assert_eq!(tr.far_end, a);
            tr.check_bookkeeping(&t).unwrap();
        }
    }

    #[test]
    fn doubled_ising_string_needs_at_most_two_rounds() {
        let t = doubled_ising();
        let a = t.label("σσ̄").unwrap();
        let out = run_trials(11, 1000, |rng| nilpotent_string_sim(&t, a, 8, rng).unwrap());
        assert!(out.iter().all(|tr| tr.rounds.len() <= 2 && tr.terminated() && tr.far_end == a));
        assert!(out.iter().any(|tr| tr.rounds.len() == 2));
        for tr in &out {
            tr.check_bookkeeping(&t).unwrap();
        }
    }

    #[test]
    fn nilpotent_sim_rejects_cyclic_theories() {
        let t = zty3();
        assert!(nilpotent_string_sim(&t, 4, 4, &mut trial_rng(0, 0)).is_err());
    }

    #[test]
    fn sigma_strings_hit_the_core_and_condense() {
        let t = zty3();
        let sp = t.label("σ+").unwrap();
        let out = run_trials(5, 300, |rng| solvable_string_sim(&t, sp, 5, rng).unwrap());
        for tr in &out {
            assert_eq!(tr.far_end, sp);
            assert!(tr.rounds.len() <= 2);
            tr.check_bookkeeping(&t).unwrap();
        }
        assert!(out.iter().any(|tr| tr.condensation_rounds == 1));
    }

    #[test]
    fn phi_string_condenses_once() {
        let t = zty3();
        let phi = t.label("Φ").unwrap();
        let out = run_trials(2, 2000, |rng| solvable_string_sim(&t, phi, 6, rng).unwrap());
        let mut em = 0;
        for tr in &out {
            assert_eq!((tr.rounds.len(), tr.condensation_rounds, tr.far_end), (1, 1, phi));
            let b = &tr.rounds[0].branches[0];
            assert_eq!(b.child.rounds.len(), 1);
            em += (b.descendant == 7) as usize;
            tr.check_bookkeeping(&t).unwrap();
        }
        // Equal branching into em* and e*m.
        assert!((em as f64 / 2000.0 - 0.5).abs() < 4.0 * (0.25f64 / 2000.0).sqrt());
    }

    #[test]
    fn solvable_sim_without_condensation_is_the_nilpotent_sim() {
        let t = doubled_ising();
        let a = t.label("σσ̄").unwrap();
        for k in 0..50 {
            let x = nilpotent_string_sim(&t, a, 7, &mut trial_rng(9, k)).unwrap();
            let y = solvable_string_sim(&t, a, 7, &mut trial_rng(9, k)).unwrap();
            assert_eq!(x, y);
        }
    }

    #[test]
    fn unnormalized_branching_is_rejected() {
        let mut t = zty3();
        t.condensation.as_mut().unwrap().map[4] = vec![(7, 0.5), (5, 0.4)];
        assert!(matches!(solvable_string_sim(&t, 4, 3, &mut trial_rng(0, 0)), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn naive_phi_curve() {
        let t = zty3();
        let c = naive_cyclic_sim(&t, 4, 6, 10_000, 1, None).unwrap();
        assert_eq!(c.p_cyclic, 0.5);
        assert!(c.max_z() < 3.0, "{c:?}");
        assert!((c.expected[0] - 0.5).abs() < 1e-15);
        let c = naive_cyclic_sim(&t, 4, 6, 10_000, 1, Some(2.0 / 3.0)).unwrap();
        assert!(c.max_z() < 3.0, "{c:?}");
        assert!((c.expected[2] - (1.0 - (2.0f64 / 3.0).powi(3))).abs() < 1e-15);
        assert!(c.to_csv().unwrap().starts_with("depth,success,expected,sigma\n1,"));
        assert!(naive_cyclic_sim(&t, 2, 3, 10, 0, None).is_err());
    }

    #[test]
    fn trials_do_not_depend_on_thread_count() {
        let t = zty3();
        let a = naive_cyclic_sim(&t, 4, 5, 2000, 42, None).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| naive_cyclic_sim(&t, 4, 5, 2000, 42, None).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn theory_files_round_trip() {
        for t in [dz3(), doubled_ising(), zty3()] {
            let json = serde_json::to_string(&t.to_file()).unwrap();
            let back = AnyonTheory::from_file(&serde_json::from_str(&json).unwrap()).unwrap();
            assert_eq!(back, t);
        }
        let mut f = zty3().to_file();
        f.condensation.as_mut().unwrap().map[4] = vec![(7, None), (5, None)];
        let t = AnyonTheory::from_file(&f).unwrap();
        assert_eq!(t.condensation.unwrap().map[4], vec![(7, 0.5), (5, 0.5)]);
        let mut f = dz3().to_file();
        f.fusion.retain(|e| e[..2] != [1, 1]);
        assert!(AnyonTheory::from_file(&f).is_err());
    }
}
