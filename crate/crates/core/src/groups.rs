//! Finite Abelian groups as explicit multiplication tables, with their
//! characters and 0/1-cochain helpers.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// A finite Abelian group stored as a multiplication table.
///
/// Elements are `0..order`. `factors` records the cyclic orders the group was
/// built from (`[n]` for ℤ_n, concatenated for direct products); element
/// indices are mixed-radix over those factors with the first factor fastest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbelianGroup {
    pub order: usize,
    pub factors: Vec<usize>,
    pub mul: Vec<Vec<usize>>,
    pub inv: Vec<usize>,
    pub identity: usize,
}

impl AbelianGroup {
    /// Builds a group from a raw table, checking the group axioms and commutativity.
    pub fn from_table(mul: Vec<Vec<usize>>, factors: Vec<usize>) -> Result<Self> {
        let n = mul.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty group table".into()));
        }
        if mul.iter().any(|row| row.len() != n || row.iter().any(|&x| x >= n)) {
            return Err(Error::Structural("multiplication table is not total".into()));
        }
        let identity = (0..n)
            .find(|&e| (0..n).all(|g| mul[e][g] == g && mul[g][e] == g))
            .ok_or_else(|| Error::Structural("no identity element".into()))?;
        let mut inv = vec![usize::MAX; n];
        for g in 0..n {
            inv[g] = (0..n)
                .find(|&h| mul[g][h] == identity)
                .ok_or_else(|| Error::Structural(format!("element {g} has no inverse")))?;
        }
        for a in 0..n {
            for b in 0..n {
                if mul[a][b] != mul[b][a] {
                    return Err(Error::Structural(format!("{a}·{b} ≠ {b}·{a}")));
                }
                for c in 0..n {
                    if mul[mul[a][b]][c] != mul[a][mul[b][c]] {
                        return Err(Error::Structural(format!("associativity fails at ({a},{b},{c})")));
                    }
                }
            }
        }
        Ok(Self { order: n, factors, mul, inv, identity })
    }

    #[inline]
    pub fn op(&self, a: usize, b: usize) -> usize {
        self.mul[a][b]
    }

    #[inline]
    pub fn inverse(&self, a: usize) -> usize {
        self.inv[a]
    }

    /// Order of an element.
    pub fn element_order(&self, g: usize) -> usize {
        let mut x = g;
        let mut k = 1;
        while x != self.identity {
            x = self.mul[x][g];
            k += 1;
        }
        k
    }

    /// Mixed-radix digits of an element over `factors`.
    pub fn digits(&self, g: usize) -> Vec<usize> {
        let mut rem = g;
        self.factors
            .iter()
            .map(|&n| {
                let d = rem % n;
                rem /= n;
                d
            })
            .collect()
    }

    pub fn is_trivial(&self) -> bool {
        self.order == 1
    }

    /// Value of character `k` at element `g` (canonical indexing, see [`characters`]).
    pub fn char_value(&self, k: usize, g: usize) -> Complex64 {
        let kd = self.digits(k);
        let gd = self.digits(g);
        let phase: f64 = self
            .factors
            .iter()
            .zip(kd.iter().zip(gd.iter()))
            .map(|(&n, (&a, &b))| (a * b % n) as f64 / n as f64)
            .sum();
        Complex64::from_polar(1.0, 2.0 * PI * phase)
    }
}

/// ℤ_n with addition mod n.
pub fn make_cyclic(n: usize) -> Result<AbelianGroup> {
    if n == 0 {
        return Err(Error::InvalidArgument("cyclic group order must be ≥ 1".into()));
    }
    let mul = (0..n).map(|a| (0..n).map(|b| (a + b) % n).collect()).collect();
    AbelianGroup::from_table(mul, vec![n])
}

/// Componentwise product. Element `(a, b)` has index `a + |A|·b`.
pub fn direct_product(a: &AbelianGroup, b: &AbelianGroup) -> AbelianGroup {
    let (na, nb) = (a.order, b.order);
    let n = na * nb;
    let mut mul = vec![vec![0; n]; n];
    for x in 0..n {
        for y in 0..n {
            let (xa, xb) = (x % na, x / na);
            let (ya, yb) = (y % na, y / na);
            mul[x][y] = a.mul[xa][ya] + na * b.mul[xb][yb];
        }
    }
    let identity = a.identity + na * b.identity;
    let inv = (0..n).map(|x| a.inv[x % na] + na * b.inv[x / na]).collect();
    let mut factors = a.factors.clone();
    factors.extend_from_slice(&b.factors);
    AbelianGroup { order: n, factors, mul, inv, identity }
}

/// A one-dimensional representation of an Abelian group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Character {
    pub index: usize,
    pub values: Vec<Complex64>,
}

impl Character {
    #[inline]
    pub fn at(&self, g: usize) -> Complex64 {
        self.values[g]
    }

    pub fn is_trivial(&self) -> bool {
        self.index == 0
    }
}

/// All characters of `g`, indexed canonically: for ℤ_n, χ_k(x) = exp(2πi·kx/n);
/// for products, the index is mixed-radix over the factors and the value is
/// the product of the factor characters.
pub fn characters(g: &AbelianGroup) -> Vec<Character> {
    (0..g.order)
        .map(|k| Character { index: k, values: (0..g.order).map(|x| g.char_value(k, x)).collect() })
        .collect()
}

/// Index of the pointwise product character χ_j·χ_k.
pub fn character_product(g: &AbelianGroup, j: usize, k: usize) -> usize {
    g.op(j, k)
}

/// Index of the complex-conjugate character.
pub fn character_dual(g: &AbelianGroup, k: usize) -> usize {
    g.inverse(k)
}
