//! Synthetic test systems shipped with the crate.
//!
//! All parameters here are made up to be plausible; none are taken from a
//! published benchmark. The JSON copies under `fixtures/` at the repository
//! root are generated from these constructors and kept in sync by tests.

use crate::grid::{GridCase, Line};

fn line(from: usize, to: usize, b: f64, fmax: f64) -> Line {
    Line { from, to, b, fmax }
}

/// Three generators (costs 1, 2, 3, unit capacities) behind ample lines: an
/// electrically trivial chain that behaves like one bus with three machines.
/// The cost curve over total load has slopes {1, 2, 3} with breakpoints at
/// loads 1 and 2.
pub fn single_bus() -> GridCase {
    GridCase {
        n: 3,
        lines: vec![line(0, 1, 1.0, 10.0), line(1, 2, 1.0, 10.0)],
        c: vec![1.0, 2.0, 3.0],
        xmax: vec![1.0, 1.0, 1.0],
        load_nominal: vec![1.5, 0.0, 0.0],
    }
}

/// Cheap bus feeding an expensive bus over one congestible line. The line is
/// listed from bus 1 to bus 0, so `a_tilde = (1, -1)^T` and power moving
/// toward bus 1 shows up as negative flow.
pub fn two_bus() -> GridCase {
    GridCase {
        n: 2,
        lines: vec![line(1, 0, 1.0, 2.0)],
        c: vec![1.0, 3.0],
        xmax: vec![5.0, 5.0],
        load_nominal: vec![0.5, 2.5],
    }
}

/// Three buses in a cycle with tight uniform line limits; congestion moves
/// around the ring as the load pattern changes. Susceptances are deliberately
/// unequal so the flow split is asymmetric and optima stay unique away from
/// breakpoints.
pub fn triangle() -> GridCase {
    GridCase {
        n: 3,
        lines: vec![
            line(0, 1, 1.0, 0.4),
            line(1, 2, 2.0, 0.4),
            line(2, 0, 4.0, 0.4),
        ],
        c: vec![1.0, 2.0, 3.0],
        xmax: vec![1.0, 1.0, 1.0],
        load_nominal: vec![0.3, 0.5, 0.4],
    }
}

/// A 14-bus meshed system with the shape of the classic mid-size test
/// network: a few large cheap generators, small expensive units elsewhere,
/// and a couple of tight corridors so load variation moves the binding set.
pub fn synthetic_14bus() -> GridCase {
    let lines = vec![
        line(0, 1, 8.0, 6.0),
        line(0, 4, 4.0, 3.0),
        line(1, 2, 5.0, 3.0),
        line(1, 3, 6.0, 3.0),
        line(1, 4, 6.0, 3.0),
        line(2, 3, 5.0, 2.5),
        line(3, 4, 9.0, 4.0),
        line(3, 6, 5.0, 1.2),
        line(3, 8, 9.0, 0.6),
        line(4, 5, 4.0, 1.1),
        line(5, 10, 3.0, 1.5),
        line(5, 11, 3.0, 1.0),
        line(5, 12, 3.0, 1.5),
        line(6, 7, 6.0, 2.0),
        line(6, 8, 6.0, 2.0),
        line(8, 9, 4.0, 1.5),
        line(8, 13, 3.0, 1.0),
        line(9, 10, 3.0, 1.0),
        line(11, 12, 2.0, 0.8),
        line(12, 13, 2.0, 0.8),
    ];
    GridCase {
        n: 14,
        lines,
        c: vec![
            1.0, 1.5, 2.0, 4.0, 2.5, 3.0, 4.5, 2.2, 3.6, 5.0, 4.8, 5.2, 4.6, 5.4,
        ],
        xmax: vec![
            2.0, 1.2, 1.0, 0.4, 0.8, 0.7, 0.4, 0.9, 0.4, 0.3, 0.3, 0.3, 0.4, 0.3,
        ],
        load_nominal: vec![
            0.2, 0.55, 1.3, 0.75, 0.25, 0.35, 0.3, 0.25, 0.6, 0.3, 0.25, 0.3, 0.45, 0.45,
        ],
    }
}

/// Four generators on a chain with ample lines: total load sweeps through
/// four price bands (costs 1, 2, 3, 4). Used by the unseen-region experiment,
/// which trains on some bands and tests on a held-out one.
pub fn four_band_chain() -> GridCase {
    GridCase {
        n: 4,
        lines: vec![
            line(0, 1, 1.0, 10.0),
            line(1, 2, 1.0, 10.0),
            line(2, 3, 1.0, 10.0),
        ],
        c: vec![1.0, 2.0, 3.0, 4.0],
        xmax: vec![1.0, 1.0, 1.0, 1.0],
        load_nominal: vec![0.75, 0.75, 0.0, 0.0],
    }
}

/// Fixture registry for the command line: name -> constructor.
pub fn by_name(name: &str) -> Option<GridCase> {
    match name {
        "single_bus" => Some(single_bus()),
        "two_bus" => Some(two_bus()),
        "triangle" => Some(triangle()),
        "synthetic_14bus" => Some(synthetic_14bus()),
        "four_band_chain" => Some(four_band_chain()),
        _ => None,
    }
}

pub const FIXTURE_NAMES: &[&str] = &[
    "single_bus",
    "two_bus",
    "triangle",
    "synthetic_14bus",
    "four_band_chain",
];
