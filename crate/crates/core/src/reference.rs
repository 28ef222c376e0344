//! The five-converter reference network and its single-converter counterpart.

use crate::network::{Branch, DeviceSpec, GridSpec, System};
use crate::smallsignal::vsc::DeviceModel;
use crate::Result;

/// Printed grounding reactance of bus 5.
pub const B50_PRINTED: f64 = 0.2;
/// Grounding reactance of bus 5 that reproduces the published spectrum.
pub const B50_FITTED: f64 = 0.08;

pub const P_B: [f64; 5] = [0.8, 0.7, 0.9, 1.0, 0.5];
pub const S_B: [f64; 5] = [1.5, 2.0, 1.0, 1.8, 1.5];

/// Branch reactances; `x50` is the bus-5 grounding branch.
pub fn grid(x50: f64) -> GridSpec {
    let r = Branch::reactance;
    GridSpec::new(
        &["1", "2", "3", "4", "5"],
        vec![
            r("1", "0", 0.2),
            r("1", "2", 0.15),
            r("1", "3", 0.1),
            r("1", "4", 0.06),
            r("1", "5", 0.09),
            r("2", "0", 0.15),
            r("2", "3", 0.18),
            r("2", "4", 0.2),
            r("2", "5", 0.21),
            r("3", "0", 0.25),
            r("3", "4", 0.07),
            r("3", "5", 0.05),
            r("4", "0", 0.1),
            r("4", "5", 0.11),
            r("5", "0", x50),
        ],
    )
}

pub fn devices(model: &DeviceModel) -> Vec<DeviceSpec> {
    (0..5).map(|i| DeviceSpec::new(&(i + 1).to_string(), S_B[i], P_B[i], model.clone())).collect()
}

pub fn five_vsc(model: &DeviceModel, x50: f64) -> Result<System> {
    System::new(grid(x50), devices(model))
}

/// One rated converter behind a single reactance `1/scr`.
pub fn single_vsc(model: &DeviceModel, scr: f64) -> Result<System> {
    let g = GridSpec::new(&["1"], vec![Branch::reactance("1", "0", 1.0 / scr)]);
    System::new(g, vec![DeviceSpec::new("1", 1.0, 1.0, model.clone())])
}

/// `n` rated converters, every pair connected by reactance `x_line` and every
/// bus grounded through `x_ground`.
pub fn complete_graph(model: &DeviceModel, n: usize, x_line: f64, x_ground: f64) -> Result<System> {
    let names: Vec<String> = (1..=n).map(|i| i.to_string()).collect();
    let mut branches = Vec::new();
    for i in 0..n {
        branches.push(Branch::reactance(&names[i], crate::network::GROUND, x_ground));
        for j in 0..i {
            branches.push(Branch::reactance(&names[i], &names[j], x_line));
        }
    }
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let devices = names.iter().map(|b| DeviceSpec::new(b, 1.0, 1.0, model.clone())).collect();
    System::new(GridSpec::new(&refs, branches), devices)
}
