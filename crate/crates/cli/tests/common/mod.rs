#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use vesselreg::data::{save_pgm, GrayImage};
use vesselreg::grid_graph::GridShape;
use vesselreg::segnet::{init_params, NetworkSpec, ParamSet};

pub fn vesselreg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vesselreg"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn vesselreg")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Parameters whose output is `sigmoid(gain * x - gain / 2)` of the input
/// pixel: one identity channel through the first encoder and the last decoder
/// level via the skip connection, every other path zeroed.
pub fn passthrough_params(spec: &NetworkSpec, gain: f32) -> ParamSet<f32> {
    let mut p = init_params::<f32>(spec, 0);
    p.values_mut().for_each(|v| *v = 0.0);
    let mut set = |name: &str, index: usize, value: f32| {
        p.get_mut(name).unwrap().data[index] = value;
    };
    // output channel 0, centre tap of input channel `cin`
    let center = |cin: usize| cin * 9 + 4;
    set("enc0.conv1.weight", center(0), 1.0);
    set("enc0.conv2.weight", center(0), 1.0);
    // decoder input is [upsampled, skip]
    set("dec0.conv1.weight", center(spec.channels(1)), 1.0);
    set("dec0.conv2.weight", center(0), 1.0);
    set("head.weight", 0, gain);
    set("head.bias", 0, -gain / 2.0);
    p
}

pub fn write_pgm(path: &Path, rows: usize, cols: usize, pixels: &[f64]) {
    let img = GrayImage::new(GridShape::new(rows, cols).unwrap(), pixels.to_vec()).unwrap();
    save_pgm(path, &img).unwrap();
}

/// Trapezoid area under an `fpr,tpr` CSV.
pub fn integrate_roc_csv(text: &str) -> f64 {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("fpr,tpr"));
    let pts: Vec<(f64, f64)> = lines
        .map(|l| {
            let (x, y) = l.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect();
    pts.windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}
