//! Fixtures shared by the criterion benches.

use afdlu_core::{builtin, HoneycombTorus, SparseState, StringNet};

/// String-net on an `lx × ly` torus together with its ground state.
pub fn ground_state(category: &str, lx: usize, ly: usize) -> (StringNet, HoneycombTorus, SparseState) {
    let lat = HoneycombTorus::build(lx, ly).expect("lattice");
    let sn = StringNet::new(builtin(category).expect("builtin category"), lat.graph());
    let gs = sn.ground_state_direct().expect("ground state");
    (sn, lat, gs)
}
