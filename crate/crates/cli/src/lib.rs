//! Library side of the `strategic-usage` command: configuration files,
//! single runs and sweeps.

pub mod config;
pub mod run;
pub mod sweep;

/// Builtin scenario names accepted by `[scenario] builtin`, with a short
/// description of each.
pub fn scenario_list() -> Vec<(&'static str, &'static str)> {
    vec![
        (
            "five_point",
            "five users in the plane, two affine services; oscillates without memory",
        ),
        (
            "threshold_line:<n>",
            "n positive users spaced 0.7 apart, one threshold service; converges in n steps",
        ),
        (
            "threshold_services:<m>",
            "one negative user, m threshold services; converges in m steps",
        ),
    ]
}
