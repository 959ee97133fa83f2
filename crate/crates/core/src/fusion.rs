//! Multiplicity-free fusion categories with nested Abelian gradings.
//!
//! F-symbols follow the splitting-tree convention
//! `((a b)_e c)_d = Σ_f [F^{abc}_d]_{ef} (a (b c)_f)_d` and are addressed as the
//! six-tuple `(a, b, c, d, e, f)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::groups::{make_cyclic, AbelianGroup};

pub const DEFAULT_TOL: f64 = 1e-10;

/// One level of a grading series: the objects of `𝒞^{(i)}` graded by `G^{(i)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Level {
    pub objects: Vec<usize>,
    pub group: AbelianGroup,
    /// `grade[a]` is the group element of object `a`, or `None` if `a ∉ 𝒞^{(i)}`.
    pub grade: Vec<Option<usize>>,
}

impl Level {
    pub fn contains(&self, a: usize) -> bool {
        self.grade[a].is_some()
    }

    /// Objects of the sector `g`.
    pub fn sector(&self, g: usize) -> Vec<usize> {
        self.objects.iter().copied().filter(|&a| self.grade[a] == Some(g)).collect()
    }
}

/// `levels[0]` is `{unit}` with the trivial group; the top level holds every object.
#[derive(Clone, Debug, PartialEq)]
pub struct GradingSeries {
    pub levels: Vec<Level>,
}

impl GradingSeries {
    /// Number of extension steps.
    pub fn len(&self) -> usize {
        self.levels.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug)]
pub struct FusionCategory {
    pub name: String,
    pub names: Vec<String>,
    pub dual: Vec<usize>,
    /// `fusion[a][b][c] = N_{ab}^c`.
    pub fusion: Vec<Vec<Vec<u8>>>,
    pub qdim: Vec<f64>,
    pub total_dim_sq: f64,
    /// Grading in the top group of the series.
    pub grading: Vec<usize>,
    pub series: GradingSeries,
    ftab: Vec<Complex64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PentagonReport {
    pub max_residual: f64,
    pub checked: usize,
    pub violations: Vec<([usize; 9], f64)>,
    pub structural: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradingReport {
    pub ok: bool,
    pub diagnostics: Vec<String>,
}

impl FusionCategory {
    pub fn rank(&self) -> usize {
        self.names.len()
    }

    #[inline]
    pub fn n(&self, a: usize, b: usize, c: usize) -> bool {
        self.fusion[a][b][c] != 0
    }

    /// Objects `c` with `N_{ab}^c ≠ 0`.
    pub fn fuse(&self, a: usize, b: usize) -> impl Iterator<Item = usize> + '_ {
        let row = &self.fusion[a][b];
        (0..row.len()).filter(move |&c| row[c] != 0)
    }

    #[inline]
    fn idx(&self, t: [usize; 6]) -> usize {
        let n = self.rank();
        t.iter().fold(0, |acc, &x| acc * n + x)
    }

    /// `[F^{abc}_d]_{ef}`; zero on non-admissible tuples.
    #[inline]
    pub fn f(&self, a: usize, b: usize, c: usize, d: usize, e: usize, f: usize) -> Complex64 {
        self.ftab[self.idx([a, b, c, d, e, f])]
    }

    pub fn admissible(&self, t: [usize; 6]) -> bool {
        let [a, b, c, d, e, f] = t;
        self.n(a, b, e) && self.n(e, c, d) && self.n(b, c, f) && self.n(a, f, d)
    }

    /// Index of an object by display name.
    pub fn object(&self, name: &str) -> Result<usize> {
        self.names.iter().position(|n| n == name).ok_or_else(|| Error::UnknownName(name.into()))
    }

    pub fn top(&self) -> &Level {
        self.series.levels.last().expect("series has a top level")
    }

    /// Sum of `d_a²` over the trivially graded sector of level `i`.
    pub fn level_trivial_dim_sq(&self, i: usize) -> f64 {
        let lv = &self.series.levels[i];
        lv.sector(lv.group.identity).iter().map(|&a| self.qdim[a] * self.qdim[a]).sum()
    }

    /// All admissible tuples, in lexicographic order.
    pub fn admissible_tuples(&self) -> Vec<[usize; 6]> {
        let n = self.rank();
        let mut out = Vec::new();
        for a in 0..n {
            for b in 0..n {
                for e in self.fuse(a, b) {
                    for c in 0..n {
                        for d in self.fuse(e, c) {
                            for f in self.fuse(b, c) {
                                if self.n(a, f, d) {
                                    out.push([a, b, c, d, e, f]);
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Residual of every pentagon instance
    /// `F^{fcd}_{e;gl} F^{abl}_{e;fk} = Σ_h F^{abc}_{g;fh} F^{ahd}_{e;gk} F^{bcd}_{k;hl}`.
    pub fn pentagon_check(&self, tol: f64) -> PentagonReport {
        let n = self.rank();
        let mut rep = PentagonReport { max_residual: 0.0, checked: 0, violations: vec![], structural: vec![] };
        for t in self.admissible_tuples() {
            if self.f(t[0], t[1], t[2], t[3], t[4], t[5]).norm() == 0.0 {
                rep.structural.push(format!("missing F entry on admissible tuple {t:?}"));
            }
        }
        for a in 0..n {
            for b in 0..n {
                for f in self.fuse(a, b) {
                    for c in 0..n {
                        for g in self.fuse(f, c) {
                            for d in 0..n {
                                for e in self.fuse(g, d) {
                                    for l in self.fuse(c, d) {
                                        for k in self.fuse(b, l) {
                                            if !self.n(a, k, e) {
                                                continue;
                                            }
                                            let lhs = self.f(f, c, d, e, g, l) * self.f(a, b, l, e, f, k);
                                            let rhs: Complex64 = (0..n)
                                                .map(|h| {
                                                    self.f(a, b, c, g, f, h)
                                                        * self.f(a, h, d, e, g, k)
                                                        * self.f(b, c, d, k, h, l)
                                                })
                                                .sum();
                                            let r = (lhs - rhs).norm();
                                            rep.checked += 1;
                                            rep.max_residual = rep.max_residual.max(r);
                                            if r > tol {
                                                rep.violations.push(([a, b, c, d, e, f, g, k, l], r));
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        rep
    }

    /// Largest deviation from unitarity over all blocks `[F^{abc}_d]`.
    pub fn unitarity_residual(&self) -> f64 {
        let n = self.rank();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let es: Vec<usize> = self.fuse(a, b).filter(|&e| self.n(e, c, d)).collect();
                        let fs: Vec<usize> = self.fuse(b, c).filter(|&f| self.n(a, f, d)).collect();
                        if es.len() != fs.len() {
                            worst = worst.max(1.0);
                            continue;
                        }
                        for &e1 in &es {
                            for &e2 in &es {
                                let s: Complex64 =
                                    fs.iter().map(|&f| self.f(a, b, c, d, e1, f) * self.f(a, b, c, d, e2, f).conj()).sum();
                                let want = if e1 == e2 { 1.0 } else { 0.0 };
                                worst = worst.max((s - want).norm());
                            }
                        }
                    }
                }
            }
        }
        worst
    }

    /// Largest `|d_a d_b − Σ_c N_{ab}^c d_c|`.
    pub fn dimension_residual(&self) -> f64 {
        let n = self.rank();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                let s: f64 = self.fuse(a, b).map(|c| self.qdim[c]).sum();
                worst = worst.max((s - self.qdim[a] * self.qdim[b]).abs());
            }
        }
        worst
    }

    pub fn verify_grading(&self) -> GradingReport {
        let mut diag = Vec::new();
        let n = self.rank();
        let levels = &self.series.levels;
        if levels.is_empty() {
            diag.push("empty grading series".to_string());
        } else {
            let l0 = &levels[0];
            if l0.objects != vec![0] || !l0.group.is_trivial() {
                diag.push("level 0 must be the unit object with trivial group".into());
            }
            if levels.last().unwrap().objects.len() != n {
                diag.push("top level does not contain every object".into());
            }
        }
        for (i, lv) in levels.iter().enumerate() {
            for &a in &lv.objects {
                let ga = lv.grade[a].unwrap();
                let gd = lv.grade[self.dual[a]];
                if gd != Some(lv.group.inverse(ga)) {
                    diag.push(format!("level {i}: dual of {} not in inverse sector", self.names[a]));
                }
                for &b in &lv.objects {
                    let gb = lv.grade[b].unwrap();
                    for c in self.fuse(a, b) {
                        match lv.grade[c] {
                            Some(gc) if gc == lv.group.op(ga, gb) => {}
                            _ => diag.push(format!(
                                "level {i}: {}⊗{}∋{} breaks the grading",
                                self.names[a], self.names[b], self.names[c]
                            )),
                        }
                    }
                }
            }
            if i > 0 {
                let triv = lv.sector(lv.group.identity);
                if triv != levels[i - 1].objects {
                    diag.push(format!("level {i}: trivial sector differs from level {}", i - 1));
                }
                for g in 0..lv.group.order {
                    if lv.sector(g).is_empty() {
                        diag.push(format!("level {i}: sector {g} is empty"));
                    }
                }
            }
        }
        GradingReport { ok: diag.is_empty(), diagnostics: diag }
    }

    /// Number of nontrivial extension steps in the grading series.
    pub fn nilpotency_class(&self) -> usize {
        self.series.levels.iter().skip(1).filter(|l| !l.group.is_trivial()).count()
    }

    /// Runs every invariant check; errors if any exceeds `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let n = self.rank();
        if self.dual.len() != n || self.qdim.len() != n || self.fusion.len() != n {
            return Err(Error::Structural("table sizes disagree with object count".into()));
        }
        for a in 0..n {
            if self.dual[self.dual[a]] != a || !self.n(a, self.dual[a], 0) {
                return Err(Error::Structural(format!("bad dual for {}", self.names[a])));
            }
            if !(self.qdim[a] > 0.0) {
                return Err(Error::Structural(format!("nonpositive dimension for {}", self.names[a])));
            }
            for b in 0..n {
                for c in 0..n {
                    if self.fusion[a][b][c] > 1 {
                        return Err(Error::Structural("fusion multiplicity above 1".into()));
                    }
                }
            }
        }
        let dsq: f64 = self.qdim.iter().map(|d| d * d).sum();
        if (dsq - self.total_dim_sq).abs() > tol {
            return Err(Error::Consistency("total dimension mismatch".into()));
        }
        let r = self.dimension_residual();
        if r > tol {
            return Err(Error::Consistency(format!("dimension rule residual {r:e}")));
        }
        let p = self.pentagon_check(tol);
        if !p.structural.is_empty() {
            return Err(Error::Structural(p.structural[0].clone()));
        }
        if p.max_residual > tol {
            return Err(Error::Consistency(format!("pentagon residual {:e}", p.max_residual)));
        }
        let u = self.unitarity_residual();
        if u > tol {
            return Err(Error::Consistency(format!("F-block unitarity residual {u:e}")));
        }
        let g = self.verify_grading();
        if !g.ok {
            return Err(Error::Consistency(g.diagnostics.join("; ")));
        }
        Ok(())
    }

    /// Stable SHA-256 of the serialized category file.
    pub fn checksum(&self) -> String {
        let s = serde_json::to_string(&self.to_file()).expect("category serializes");
        let digest = Sha256::digest(s.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Overwrites one F entry. Used to build perturbed categories in tests.
    pub fn set_f(&mut self, t: [usize; 6], v: Complex64) {
        let i = self.idx(t);
        self.ftab[i] = v;
    }
}

// ---------------------------------------------------------------------------
// construction

struct Raw {
    name: String,
    names: Vec<String>,
    dual: Vec<usize>,
    fusion: Vec<Vec<Vec<u8>>>,
    qdim: Vec<f64>,
    levels: Vec<(Vec<usize>, AbelianGroup, Vec<usize>)>,
}

fn assemble(raw: Raw, fval: impl Fn([usize; 6]) -> Complex64) -> FusionCategory {
    let n = raw.names.len();
    let levels: Vec<Level> = raw
        .levels
        .into_iter()
        .map(|(objects, group, grades)| {
            let mut grade = vec![None; n];
            for (&a, &g) in objects.iter().zip(grades.iter()) {
                grade[a] = Some(g);
            }
            Level { objects, group, grade }
        })
        .collect();
    let top = levels.last().unwrap();
    let grading = (0..n).map(|a| top.grade[a].unwrap_or(top.group.identity)).collect();
    let total_dim_sq = raw.qdim.iter().map(|d| d * d).sum();
    let mut cat = FusionCategory {
        name: raw.name,
        names: raw.names,
        dual: raw.dual,
        fusion: raw.fusion,
        qdim: raw.qdim,
        total_dim_sq,
        grading,
        series: GradingSeries { levels },
        ftab: vec![Complex64::new(0.0, 0.0); n.pow(6)],
    };
    for t in cat.admissible_tuples() {
        let v = fval(t);
        cat.set_f(t, v);
    }
    cat
}

fn unit_level() -> (Vec<usize>, AbelianGroup, Vec<usize>) {
    (vec![0], make_cyclic(1).unwrap(), vec![0])
}

fn omega_pow(k: i64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * (k.rem_euclid(3) as f64) / 3.0)
}

/// `Vec_{ℤ_n}` with trivial associator.
pub fn vec_zn(n: usize) -> Result<FusionCategory> {
    let g = make_cyclic(n)?;
    let mut fusion = vec![vec![vec![0u8; n]; n]; n];
    for a in 0..n {
        for b in 0..n {
            fusion[a][b][(a + b) % n] = 1;
        }
    }
    let raw = Raw {
        name: format!("vec_z{n}"),
        names: (0..n).map(|a| a.to_string()).collect(),
        dual: (0..n).map(|a| (n - a) % n).collect(),
        fusion,
        qdim: vec![1.0; n],
        levels: vec![unit_level(), ((0..n).collect(), g, (0..n).collect())],
    };
    Ok(assemble(raw, |_| Complex64::new(1.0, 0.0)))
}

/// Ising: objects `1, psi, sigma`.
pub fn ising() -> FusionCategory {
    let mut fusion = vec![vec![vec![0u8; 3]; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            match (a, b) {
                (2, 2) => {
                    fusion[a][b][0] = 1;
                    fusion[a][b][1] = 1;
                }
                (2, _) | (_, 2) => fusion[a][b][2] = 1,
                _ => fusion[a][b][(a + b) % 2] = 1,
            }
        }
    }
    let z2 = make_cyclic(2).unwrap();
    let raw = Raw {
        name: "ising".into(),
        names: vec!["1".into(), "psi".into(), "sigma".into()],
        dual: vec![0, 1, 2],
        fusion,
        qdim: vec![1.0, 1.0, SQRT_2],
        levels: vec![unit_level(), (vec![0, 1], z2.clone(), vec![0, 1]), (vec![0, 1, 2], z2, vec![0, 0, 1])],
    };
    assemble(raw, |t| match t {
        [2, 2, 2, 2, e, f] => {
            let s = if e == 1 && f == 1 { -1.0 } else { 1.0 };
            Complex64::new(s / SQRT_2, 0.0)
        }
        [2, 1, 2, 1, _, _] | [1, 2, 1, 2, _, _] => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(1.0, 0.0),
    })
}

/// Tambara–Yamagami for ℤ3 with bicharacter `ω^{ab}` and positive sign.
/// Objects `0, 1, 2, sigma`.
pub fn ty_z3() -> FusionCategory {
    const S: usize = 3;
    let mut fusion = vec![vec![vec![0u8; 4]; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            match (a, b) {
                (S, S) => (0..3).for_each(|c| fusion[a][b][c] = 1),
                (S, _) | (_, S) => fusion[a][b][S] = 1,
                _ => fusion[a][b][(a + b) % 3] = 1,
            }
        }
    }
    let z3 = make_cyclic(3).unwrap();
    let z2 = make_cyclic(2).unwrap();
    let raw = Raw {
        name: "ty_z3".into(),
        names: vec!["0".into(), "1".into(), "2".into(), "sigma".into()],
        dual: vec![0, 2, 1, 3],
        fusion,
        qdim: vec![1.0, 1.0, 1.0, 3f64.sqrt()],
        levels: vec![unit_level(), (vec![0, 1, 2], z3, vec![0, 1, 2]), (vec![0, 1, 2, 3], z2, vec![0, 0, 0, 1])],
    };
    let tau = 1.0 / 3f64.sqrt();
    assemble(raw, move |t| {
        let [a, b, c, d, e, f] = t;
        match (a == S, b == S, c == S, d == S) {
            (false, true, false, true) => omega_pow((a * c) as i64),
            (true, false, true, false) => omega_pow((b * d) as i64),
            (true, true, true, true) => tau * omega_pow(-((e * f) as i64)),
            _ => Complex64::new(1.0, 0.0),
        }
    })
}

/// Looks up a built-in by name: `vec_z<n>`, `vec_zn(<n>)`, `ising`, `ty_z3`.
pub fn builtin(name: &str) -> Result<FusionCategory> {
    let lower = name.trim().to_ascii_lowercase();
    if lower == "ising" {
        return Ok(ising());
    }
    if lower == "ty_z3" || lower == "ty(z3)" {
        return Ok(ty_z3());
    }
    let digits = lower
        .strip_prefix("vec_zn(")
        .and_then(|s| s.strip_suffix(')'))
        .or_else(|| lower.strip_prefix("vec_z"));
    if let Some(d) = digits {
        if let Ok(n) = d.parse::<usize>() {
            return vec_zn(n);
        }
    }
    Err(Error::UnknownName(name.into()))
}

// ---------------------------------------------------------------------------
// file format

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LevelFile {
    pub objects: Vec<usize>,
    /// Cyclic factor orders of the level's grading group.
    pub group: Vec<usize>,
    pub grading: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CategoryFile {
    pub name: String,
    pub objects: Vec<String>,
    pub duals: Vec<usize>,
    pub qdims: Vec<f64>,
    pub grading: Vec<usize>,
    pub series: Vec<LevelFile>,
    pub fusion: Vec<[usize; 3]>,
    /// `(a, b, c, d, e, f, re, im)`.
    pub fsymbols: Vec<(usize, usize, usize, usize, usize, usize, f64, f64)>,
}

pub fn group_from_factors(factors: &[usize]) -> Result<AbelianGroup> {
    let mut g = make_cyclic(1)?;
    for &n in factors {
        let c = make_cyclic(n)?;
        g = if g.is_trivial() { c } else { crate::groups::direct_product(&g, &c) };
    }
    if factors.is_empty() || factors.iter().all(|&n| n == 1) {
        g.factors = vec![1];
    }
    Ok(g)
}

impl FusionCategory {
    pub fn to_file(&self) -> CategoryFile {
        let n = self.rank();
        let mut fusion = Vec::new();
        for a in 0..n {
            for b in 0..n {
                for c in self.fuse(a, b) {
                    fusion.push([a, b, c]);
                }
            }
        }
        let fsymbols = self
            .admissible_tuples()
            .into_iter()
            .map(|[a, b, c, d, e, f]| {
                let v = self.f(a, b, c, d, e, f);
                (a, b, c, d, e, f, v.re, v.im)
            })
            .collect();
        CategoryFile {
            name: self.name.clone(),
            objects: self.names.clone(),
            duals: self.dual.clone(),
            qdims: self.qdim.clone(),
            grading: self.grading.clone(),
            series: self
                .series
                .levels
                .iter()
                .map(|l| LevelFile {
                    objects: l.objects.clone(),
                    group: l.group.factors.clone(),
                    grading: l.objects.iter().map(|&a| l.grade[a].unwrap()).collect(),
                })
                .collect(),
            fusion,
            fsymbols,
        }
    }

    /// Builds and re-validates a category from its file form.
    pub fn from_file(file: &CategoryFile, tol: f64) -> Result<Self> {
        let n = file.objects.len();
        if n == 0 {
            return Err(Error::Structural("no objects".into()));
        }
        let mut fusion = vec![vec![vec![0u8; n]; n]; n];
        for &[a, b, c] in &file.fusion {
            if a >= n || b >= n || c >= n {
                return Err(Error::Structural(format!("fusion triple ({a},{b},{c}) out of range")));
            }
            fusion[a][b][c] = 1;
        }
        let mut levels = Vec::new();
        for lf in &file.series {
            if lf.objects.len() != lf.grading.len() {
                return Err(Error::Structural("level grading length mismatch".into()));
            }
            let g = group_from_factors(&lf.group)?;
            if lf.grading.iter().any(|&x| x >= g.order) || lf.objects.iter().any(|&a| a >= n) {
                return Err(Error::Structural("level entry out of range".into()));
            }
            levels.push((lf.objects.clone(), g, lf.grading.clone()));
        }
        if levels.is_empty() {
            return Err(Error::Structural("grading series missing".into()));
        }
        let raw = Raw {
            name: file.name.clone(),
            names: file.objects.clone(),
            dual: file.duals.clone(),
            fusion,
            qdim: file.qdims.clone(),
            levels,
        };
        if raw.dual.len() != n || raw.qdim.len() != n {
            return Err(Error::Structural("duals/qdims length mismatch".into()));
        }
        let mut cat = assemble(raw, |_| Complex64::new(0.0, 0.0));
        for &(a, b, c, d, e, f, re, im) in &file.fsymbols {
            let t = [a, b, c, d, e, f];
            if t.iter().any(|&x| x >= n) || !cat.admissible(t) {
                return Err(Error::Structural(format!("F entry on non-admissible tuple {t:?}")));
            }
            cat.set_f(t, Complex64::new(re, im));
        }
        cat.validate(tol)?;
        Ok(cat)
    }

    pub fn load(path: &std::path::Path, tol: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: CategoryFile = serde_json::from_str(&text)?;
        Self::from_file(&file, tol)
    }
}
