//! Sparse state vectors over mixed-radix registers.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Config = Vec<u8>;

/// Amplitudes with modulus below this are dropped after every operation.
pub const DEFAULT_PRUNE: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Register {
    pub name: String,
    pub dim: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub registers: Vec<Register>,
}

impl Layout {
    pub fn new(registers: Vec<Register>) -> Self {
        Self { registers }
    }

    pub fn len(&self) -> usize {
        self.registers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.registers.is_empty()
    }

    pub fn dim(&self, r: usize) -> usize {
        self.registers[r].dim
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.registers.iter().position(|r| r.name == name)
    }

    fn check_config(&self, c: &[u8]) -> Result<()> {
        if c.len() != self.len() {
            return Err(Error::LayoutMismatch(format!("config of length {} for {} registers", c.len(), self.len())));
        }
        for (i, (&v, r)) in c.iter().zip(&self.registers).enumerate() {
            if v as usize >= r.dim {
                return Err(Error::InvalidArgument(format!("label {v} outside alphabet of register {i} ({})", r.name)));
            }
        }
        Ok(())
    }
}

/// Dense local operator on a register list; row-major `dim × dim`, with the
/// first support register most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    pub dim: usize,
    pub data: Vec<Complex64>,
}

impl Kernel {
    pub fn new(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: data.len() });
        }
        Ok(Self { dim, data })
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        Self { dim, data }
    }

    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseState {
    pub layout: Layout,
    pub amps: BTreeMap<Config, Complex64>,
    pub prune: f64,
}

/// Born-rule measurement outcome.
#[derive(Clone, Debug)]
pub struct Measured {
    pub outcome: usize,
    pub state: SparseState,
    pub probability: f64,
}

/// One adaptive round: what was measured, what came out, what was corrected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub round: usize,
    pub seed: u64,
    /// `(register or site id, outcome index)` in measurement order.
    pub outcomes: Vec<(usize, usize)>,
    pub probabilities: Vec<f64>,
    /// Edge lists of correction operators applied after the measurements.
    pub corrections: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct StateDump {
    layout: Layout,
    entries: Vec<(Config, f64, f64)>,
}

impl SparseState {
    pub fn zero(layout: Layout) -> Self {
        Self { layout, amps: BTreeMap::new(), prune: DEFAULT_PRUNE }
    }

    pub fn basis(layout: Layout, config: Config) -> Result<Self> {
        layout.check_config(&config)?;
        let mut s = Self::zero(layout);
        s.amps.insert(config, Complex64::new(1.0, 0.0));
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn amplitude(&self, c: &[u8]) -> Complex64 {
        self.amps.get(c).copied().unwrap_or_default()
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        for a in self.amps.values_mut() {
            *a /= n;
        }
        Ok(self)
    }

    pub fn scaled(mut self, k: Complex64) -> Self {
        for a in self.amps.values_mut() {
            *a *= k;
        }
        self.pruned()
    }

    fn pruned(mut self) -> Self {
        let tol = self.prune;
        self.amps.retain(|_, a| a.norm() >= tol);
        self
    }

    fn same_layout(&self, other: &Self) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch("states use different register layouts".into()));
        }
        Ok(())
    }

    /// `self + k·other`.
    pub fn axpy(mut self, k: Complex64, other: &Self) -> Result<Self> {
        self.same_layout(other)?;
        for (c, a) in &other.amps {
            *self.amps.entry(c.clone()).or_default() += k * a;
        }
        Ok(self.pruned())
    }

    /// Applies a linear map given by its action on basis configurations.
    /// Configurations are processed in parallel; contributions are summed in the
    /// fixed lexicographic order of the input, so the result does not depend on
    /// the number of worker threads.
    pub fn map<F>(&self, f: F) -> Self
    where
        F: Fn(&[u8], &mut Vec<(Config, Complex64)>) + Sync,
    {
        let entries: Vec<(&Config, &Complex64)> = self.amps.iter().collect();
        let parts: Vec<Vec<(Config, Complex64)>> = entries
            .par_iter()
            .map(|(c, a)| {
                let mut out = Vec::new();
                f(c, &mut out);
                for t in out.iter_mut() {
                    t.1 *= **a;
                }
                out
            })
            .collect();
        let mut amps: BTreeMap<Config, Complex64> = BTreeMap::new();
        for part in parts {
            for (c, a) in part {
                *amps.entry(c).or_default() += a;
            }
        }
        Self { layout: self.layout.clone(), amps, prune: self.prune }.pruned()
    }

    /// Diagonal map.
    pub fn map_diag<F>(&self, f: F) -> Self
    where
        F: Fn(&[u8]) -> Complex64 + Sync,
    {
        self.map(|c, out| {
            let v = f(c);
            if v != Complex64::new(0.0, 0.0) {
                out.push((c.to_vec(), v));
            }
        })
    }

    /// Applies `kernel` on `support`.
    pub fn apply_local(&self, support: &[usize], kernel: &Kernel) -> Result<Self> {
        let dims: Vec<usize> = support
            .iter()
            .map(|&r| {
                if r >= self.layout.len() {
                    Err(Error::InvalidArgument(format!("register {r} out of range")))
                } else {
                    Ok(self.layout.dim(r))
                }
            })
            .collect::<Result<_>>()?;
        let total: usize = dims.iter().product();
        if kernel.dim != total {
            return Err(Error::DimensionMismatch { expected: total, got: kernel.dim });
        }
        Ok(self.map(|c, out| {
            let col = support.iter().zip(&dims).fold(0, |acc, (&r, &d)| acc * d + c[r] as usize);
            for row in 0..total {
                let k = kernel.at(row, col);
                if k == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let mut nc = c.to_vec();
                let mut rem = row;
                for (i, &r) in support.iter().enumerate().rev() {
                    nc[r] = (rem % dims[i]) as u8;
                    rem /= dims[i];
                }
                out.push((nc, k));
            }
        }))
    }

    /// Appends a register holding the normalized-or-not vector `v`.
    pub fn add_register(&self, name: &str, v: &[Complex64]) -> Self {
        let mut layout = self.layout.clone();
        layout.registers.push(Register { name: name.into(), dim: v.len() });
        let mut amps = BTreeMap::new();
        for (c, a) in &self.amps {
            for (x, vx) in v.iter().enumerate() {
                if vx.norm() == 0.0 {
                    continue;
                }
                let mut nc = c.clone();
                nc.push(x as u8);
                amps.insert(nc, a * vx);
            }
        }
        Self { layout, amps, prune: self.prune }.pruned()
    }

    /// Appends a register in basis state `x`.
    pub fn add_basis_register(&self, name: &str, dim: usize, x: usize) -> Self {
        let mut v = vec![Complex64::new(0.0, 0.0); dim];
        v[x] = Complex64::new(1.0, 0.0);
        self.add_register(name, &v)
    }

    /// Contracts register `r` with `⟨v|` and removes it from the layout.
    pub fn project_out(&self, r: usize, v: &[Complex64]) -> Result<Self> {
        if v.len() != self.layout.dim(r) {
            return Err(Error::DimensionMismatch { expected: self.layout.dim(r), got: v.len() });
        }
        let mut layout = self.layout.clone();
        layout.registers.remove(r);
        let mut amps: BTreeMap<Config, Complex64> = BTreeMap::new();
        for (c, a) in &self.amps {
            let k = v[c[r] as usize].conj();
            if k.norm() == 0.0 {
                continue;
            }
            let mut nc = c.clone();
            nc.remove(r);
            *amps.entry(nc).or_default() += k * a;
        }
        Ok(Self { layout, amps, prune: self.prune }.pruned())
    }

    /// Measures register `r` in an orthonormal basis (rows of `basis`). The
    /// collapsed state keeps the register, projected on the outcome vector.
    pub fn measure_register<R: Rng>(&self, r: usize, basis: &[Vec<Complex64>], rng: &mut R) -> Result<Measured> {
        let d = self.layout.dim(r);
        if basis.len() != d || basis.iter().any(|b| b.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: basis.len() });
        }
        let projectors: Vec<Box<dyn Fn(&SparseState) -> SparseState + Sync + '_>> = basis
            .iter()
            .map(|b| {
                let b = b.clone();
                Box::new(move |s: &SparseState| {
                    s.map(|c, out| {
                        let ov = b[c[r] as usize].conj();
                        if ov.norm() == 0.0 {
                            return;
                        }
                        for (x, bx) in b.iter().enumerate() {
                            if bx.norm() == 0.0 {
                                continue;
                            }
                            let mut nc = c.to_vec();
                            nc[r] = x as u8;
                            out.push((nc, bx * ov));
                        }
                    })
                }) as Box<dyn Fn(&SparseState) -> SparseState + Sync>
            })
            .collect();
        let refs: Vec<&(dyn Fn(&SparseState) -> SparseState + Sync)> = projectors.iter().map(|b| b.as_ref()).collect();
        self.measure_projectors(&refs, rng)
    }

    /// Born-rule sampling over a complete family of orthogonal projectors.
    pub fn measure_projectors<R: Rng>(
        &self,
        projectors: &[&(dyn Fn(&SparseState) -> SparseState + Sync)],
        rng: &mut R,
    ) -> Result<Measured> {
        let total = self.norm_sq();
        if total == 0.0 {
            return Err(Error::ZeroNorm);
        }
        let branches: Vec<SparseState> = projectors.iter().map(|p| p(self)).collect();
        let probs: Vec<f64> = branches.iter().map(|b| b.norm_sq() / total).collect();
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &p) in probs.iter().enumerate() {
            acc += p;
            if p > 0.0 && u < acc {
                pick = Some(i);
                break;
            }
        }
        // Rounding can leave `u` just above the final cumulative sum.
        let outcome = pick.unwrap_or_else(|| probs.iter().rposition(|&p| p > 0.0).unwrap_or(0));
        let state = branches.into_iter().nth(outcome).unwrap().normalized()?;
        Ok(Measured { outcome, state, probability: probs[outcome] })
    }

    pub fn dump(&self) -> Result<String> {
        let d = StateDump {
            layout: self.layout.clone(),
            entries: self.amps.iter().map(|(c, a)| (c.clone(), a.re, a.im)).collect(),
        };
        Ok(serde_json::to_string_pretty(&d)?)
    }

    pub fn load_str(text: &str) -> Result<Self> {
        let d: StateDump = serde_json::from_str(text)?;
        let mut s = Self::zero(d.layout);
        for (c, re, im) in d.entries {
            s.layout.check_config(&c)?;
            *s.amps.entry(c).or_default() += Complex64::new(re, im);
        }
        s.pruned().normalized()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.dump()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::load_str(&std::fs::read_to_string(path)?)
    }
}

/// `⟨a|b⟩`.
pub fn inner(a: &SparseState, b: &SparseState) -> Result<Complex64> {
    a.same_layout(b)?;
    let (small, large, conj_small) = if a.len() <= b.len() { (a, b, true) } else { (b, a, false) };
    let mut acc = Complex64::new(0.0, 0.0);
    for (c, x) in &small.amps {
        if let Some(y) = large.amps.get(c) {
            acc += if conj_small { x.conj() * y } else { y.conj() * x };
        }
    }
    Ok(acc)
}
