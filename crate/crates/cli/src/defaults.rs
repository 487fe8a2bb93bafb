//! Every default used by the command-line front end.
//!
//! | setting                  | default                          |
//! |--------------------------|----------------------------------|
//! | grid (problem file)      | `-5:5:1001`                      |
//! | grid (builtin)           | the builtin's own grid           |
//! | control grid size `K`    | builtin's own, else 41           |
//! | Howard `max_iter`, `tol` | 200, 1e-9                        |
//! | paths `M`                | 20000                            |
//! | time step `dt`           | 1e-3                             |
//! | horizon `T`              | smallest multiple of `dt` with tail bound <= `tail_tol`; 20 for unbounded cost |
//! | tail tolerance           | 1e-4                             |
//! | exit radius `R`          | 50                               |
//! | seed                     | 2024                             |
//! | start points `x0`        | 0, 0.25, 0.5, 1, 1.5 (advertising); 0 otherwise |
//! | challengers              | 5 constants + 10 random schedules |
//! | moment exponent          | 2                                |
//! | necessary-check paths    | 4 per start point                |
//! | box widening             | 1.5                              |

use diffctl_core::builtin::GridSpec;

pub const FILE_GRID: GridSpec = GridSpec { x_lo: -5.0, x_hi: 5.0, nodes: 1001 };
pub const CONTROLS: usize = 41;
pub const PATHS: usize = 20_000;
pub const DT: f64 = 1e-3;
pub const TAIL_TOL: f64 = 1e-4;
pub const UNBOUNDED_HORIZON: f64 = 20.0;
pub const RADIUS: f64 = 50.0;
pub const SEED: u64 = 2024;
pub const ADVERTISING_X0S: [f64; 5] = [0.0, 0.25, 0.5, 1.0, 1.5];
pub const X0S: [f64; 1] = [0.0];
pub const CHALLENGER_CONSTANTS: usize = 5;
pub const CHALLENGER_RANDOM: usize = 10;
pub const MOMENT_M: f64 = 2.0;
pub const NECESSARY_PATHS: usize = 4;
pub const BOX_WIDENING: f64 = 1.5;
