//! Shared fixtures for the benchmarks.

use rismask_core::channel::{effective_channels, tx_ris_channel, RowChannels, ScenarioGeometry};
use rismask_core::io::ScenarioFile;
use rismask_core::sim::{run_scenario, Scenario, SimOutput};

/// Effective row channels of the built-in geometry.
pub fn default_rows() -> RowChannels {
    let g = ScenarioGeometry::default_scenario();
    effective_channels(&g, &tx_ris_channel(&g).expect("default geometry is valid")).expect("default geometry is valid")
}

/// The bundled gesture scenario, shortened to `seconds`, with its simulated output.
pub fn gesture(seconds: f64) -> (Scenario, SimOutput) {
    let mut file = ScenarioFile::from_toml_str(include_str!("../../../scenarios/default.toml")).expect("bundled scenario parses");
    file.sim.duration = seconds;
    let scenario = file.build(None, None).expect("bundled scenario builds").0;
    let out = run_scenario(&scenario).expect("bundled scenario runs");
    (scenario, out)
}
