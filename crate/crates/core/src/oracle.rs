//! Brute-force checks that do not share code paths with the protocol engine.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fusion::FusionCategory;
use crate::lattice::{Graph, HoneycombTorus};
use crate::state::{inner, SparseState};
use crate::stringnet::StringNet;

/// Hard cap on the number of configurations an oracle may enumerate.
pub const CONFIG_GUARD: usize = 531_441;

/// `|⟨a|b⟩| / (‖a‖‖b‖)`.
pub fn fidelity(a: &SparseState, b: &SparseState) -> Result<f64> {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(inner(a, b)?.norm() / (na * nb))
}

/// `tr(Π_v A_v Π_p B_p)` summed over vertex-valid configurations.
///
/// Each diagonal element is evaluated as `⟨B_2 B_1 c | B_3 B_4 c⟩`, splitting the
/// commuting Hermitian plaquette projectors into two halves so that neither
/// half has to be expanded over all plaquettes.
pub fn ground_space_dim(cat: &FusionCategory, lat: &HoneycombTorus) -> Result<f64> {
    let sn = StringNet::new(cat.clone(), lat.graph());
    let configs = sn.valid_configs(CONFIG_GUARD)?;
    let nf = sn.num_faces();
    let half = nf / 2;
    let layout = sn.layout();
    let terms: Vec<Result<f64>> = configs
        .par_iter()
        .map(|c| {
            let base = SparseState::basis(layout.clone(), c.clone())?;
            let mut left = base.clone();
            for f in (0..half).rev() {
                left = sn.apply_bp(&left, f)?;
            }
            let mut right = base;
            for f in (half..nf).rev() {
                right = sn.apply_bp(&right, f)?;
            }
            Ok(inner(&left, &right)?.re)
        })
        .collect();
    let mut total = 0.0;
    for t in terms {
        total += t?;
    }
    Ok(total)
}

/// Dense matrix of `op` on the vertex-valid configurations of a small patch.
pub fn dense_block<F>(sn: &StringNet, op: F) -> Result<(Vec<crate::state::Config>, Vec<Vec<Complex64>>)>
where
    F: Fn(&SparseState) -> Result<SparseState> + Sync,
{
    let basis = sn.valid_configs(4096)?;
    let layout = sn.layout();
    let cols: Vec<Result<SparseState>> = basis
        .par_iter()
        .map(|c| op(&SparseState::basis(layout.clone(), c.clone())?))
        .collect();
    let n = basis.len();
    let mut m = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for (j, col) in cols.into_iter().enumerate() {
        let col = col?;
        for (i, c) in basis.iter().enumerate() {
            m[i][j] = col.amplitude(c);
        }
    }
    Ok((basis, m))
}

pub fn mat_mul(a: &[Vec<Complex64>], b: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    let n = a.len();
    let k = b.len();
    let m = if k == 0 { 0 } else { b[0].len() };
    let mut out = vec![vec![Complex64::new(0.0, 0.0); m]; n];
    for i in 0..n {
        for l in 0..k {
            let x = a[i][l];
            if x.norm() == 0.0 {
                continue;
            }
            for j in 0..m {
                out[i][j] += x * b[l][j];
            }
        }
    }
    out
}

pub fn mat_adjoint(a: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    let n = a.len();
    let m = if n == 0 { 0 } else { a[0].len() };
    (0..m).map(|j| (0..n).map(|i| a[i][j].conj()).collect()).collect()
}

/// Largest entrywise difference.
pub fn mat_dist(a: &[Vec<Complex64>], b: &[Vec<Complex64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y).norm()))
        .fold(0.0, f64::max)
}

/// Patch used by dense checks: one hexagon, the torus convention for orientations.
pub fn hexagon(cat: &FusionCategory) -> StringNet {
    let lat = HoneycombTorus::build(2, 2).expect("2x2 torus");
    let pl = &lat.plaquettes[0];
    StringNet::new(cat.clone(), Graph::hexagon_patch(pl.ccw, pl.leg_out))
}

/// Gluing-point formula for TY(ℤ3) loop terms.
///
/// Fix loop labels `s_p` on every plaquette with σ on one or two of them and ℤ3
/// labels (heights) elsewhere. The term `Π_p B_p^{s_p}|0⟩` is predicted in closed
/// form: edges between outside plaquettes carry `h_left − h_right`, edges on the
/// σ-region boundary carry σ, and a shared edge of a two-plaquette region carries
/// any `b ∈ ℤ3`. A single σ-loop has amplitude one. For `{p1, p2}` each shared
/// edge `e` (label `b_e` read in the frame of `p2`) gives `3^{-1/2}` and a phase
/// `ω^{b_e(h_after − h_before)}`, where `h_before`/`h_after` are the heights of the
/// plaquettes met across the sides of `p2` preceding and following `e`. In other
/// words each gluing point carries `g_v = ω^{∓k b}`, with the sign fixed by which
/// end of `e` the vertex sits at.
pub mod gluing {
    use super::*;
    use crate::state::Config;
    use std::collections::BTreeMap;

    pub const SIGMA: u8 = 3;

    fn omega(k: i64) -> Complex64 {
        Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (k.rem_euclid(3) as f64) / 3.0)
    }

    fn other(lat: &HoneycombTorus, e: usize, p: usize) -> usize {
        if lat.left[e] == p {
            lat.right[e]
        } else {
            lat.left[e]
        }
    }

    /// Closed-form expansion of `Π_p B_p^{s_p}|0⟩`. `None` unless one or two
    /// entries of `loops` are σ and the σ plaquettes are adjacent when two.
    pub fn predicted(lat: &HoneycombTorus, loops: &[u8]) -> Option<BTreeMap<Config, Complex64>> {
        let sig: Vec<usize> = (0..loops.len()).filter(|&p| loops[p] == SIGMA).collect();
        let inside = |p: usize| loops[p] == SIGMA;
        let ne = lat.num_edges();
        let mut base = vec![0u8; ne];
        let mut shared = Vec::new();
        for e in 0..ne {
            let (l, r) = (lat.left[e], lat.right[e]);
            base[e] = match (inside(l), inside(r)) {
                (false, false) => (loops[l] as i64 - loops[r] as i64).rem_euclid(3) as u8,
                (true, true) => {
                    shared.push(e);
                    0
                }
                _ => SIGMA,
            };
        }
        let mut out = BTreeMap::new();
        match sig.len() {
            1 if shared.is_empty() => {
                out.insert(base, Complex64::new(1.0, 0.0));
            }
            2 if !shared.is_empty() => {
                let p2 = sig[1];
                let pl = &lat.plaquettes[p2];
                let m = shared.len();
                // Per shared edge: side index in p2, heights before and after.
                let mut glue = Vec::new();
                for &e in &shared {
                    let k = pl.sides.iter().position(|&x| x == e)?;
                    let hb = loops[other(lat, pl.sides[(k + 5) % 6], p2)];
                    let ha = loops[other(lat, pl.sides[(k + 1) % 6], p2)];
                    if hb == SIGMA || ha == SIGMA {
                        return None;
                    }
                    glue.push((e, pl.ccw[k], ha as i64 - hb as i64));
                }
                for code in 0..3usize.pow(m as u32) {
                    let mut c = base.clone();
                    let mut amp = Complex64::new(3f64.powf(-(m as f64) / 2.0), 0.0);
                    let mut rest = code;
                    for &(e, ccw, dh) in &glue {
                        let b = (rest % 3) as i64;
                        rest /= 3;
                        c[e] = b as u8;
                        let framed = if ccw { b } else { -b };
                        amp *= omega(framed * dh);
                    }
                    out.insert(c, amp);
                }
            }
            _ => return None,
        }
        Some(out)
    }

    /// Same term built by composing single-plaquette loop operators on the vacuum.
    pub fn expanded(sn: &StringNet, loops: &[u8]) -> Result<SparseState> {
        let mut st = sn.vacuum();
        for (p, &s) in loops.iter().enumerate() {
            st = sn.apply_bp_a(&st, p, s as usize)?;
        }
        Ok(st)
    }

    /// Largest entrywise deviation between [`predicted`] and [`expanded`] over every
    /// loop assignment with one or two adjacent σ plaquettes. Returns the
    /// deviation and the number of assignments compared.
    pub fn max_deviation(lat: &HoneycombTorus) -> Result<(f64, usize)> {
        let cat = crate::fusion::builtin("ty_z3")?;
        let sn = StringNet::new(cat, lat.graph());
        let np = lat.num_plaquettes();
        let mut assignments = Vec::new();
        for code in 0..4usize.pow(np as u32) {
            let loops: Vec<u8> = (0..np).map(|p| ((code / 4usize.pow(p as u32)) % 4) as u8).collect();
            if let Some(pred) = predicted(lat, &loops) {
                assignments.push((loops, pred));
            }
        }
        let devs: Vec<Result<f64>> = assignments
            .par_iter()
            .map(|(loops, pred)| {
                let got = expanded(&sn, loops)?;
                let mut worst = 0.0f64;
                for (c, a) in &got.amps {
                    let want = pred.get(c).copied().unwrap_or_default();
                    worst = worst.max((a - want).norm());
                }
                for (c, want) in pred {
                    worst = worst.max((got.amplitude(c) - want).norm());
                }
                Ok(worst)
            })
            .collect();
        let mut worst = 0.0f64;
        for d in devs {
            worst = worst.max(d?);
        }
        Ok((worst, assignments.len()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::builtin;

    #[test]
    fn gsd_small() {
        let lat = HoneycombTorus::build(2, 2).unwrap();
        for (name, want) in [("vec_z2", 4.0), ("vec_z3", 9.0), ("ising", 9.0), ("ty_z3", 15.0)] {
            let t = std::time::Instant::now();
            let d = ground_space_dim(&builtin(name).unwrap(), &lat).unwrap();
            eprintln!("{name}: {d} in {:?}", t.elapsed());
            assert!((d - want).abs() < 1e-6, "{name}: {d}");
        }
    }

    #[test]
    fn gluing_formula_matches_loop_expansion() {
        let lat = HoneycombTorus::build(2, 2).unwrap();
        let (dev, n) = gluing::max_deviation(&lat).unwrap();
        assert!(n > 0);
        assert!(dev < 1e-10, "{dev} over {n}");
        let lat = HoneycombTorus::build(3, 3).unwrap();
        let sn = StringNet::new(builtin("ty_z3").unwrap(), lat.graph());
        let mut loops = vec![0u8; 9];
        loops[0] = 3;
        loops[1] = 3;
        loops[3] = 1;
        loops[4] = 2;
        let pred = gluing::predicted(&lat, &loops).unwrap();
        let got = gluing::expanded(&sn, &loops).unwrap();
        for (c, a) in &pred {
            assert!((got.amplitude(c) - a).norm() < 1e-10);
        }
        assert_eq!(got.amps.len(), pred.len());
    }
}
