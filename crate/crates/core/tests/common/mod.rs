#![allow(dead_code)]

use delaystab::models::{oscillator_model, OscillatorParams, REFERENCE_DESIGN_ORDER};
use delaystab::{GeneratorMatrix, HybridModel, InitialSegment, ModeIndex, StateVector};

pub fn switching() -> GeneratorMatrix {
    GeneratorMatrix::new(&[vec![-1.0, 1.0], vec![2.0, -2.0]]).unwrap()
}

pub fn single_mode() -> GeneratorMatrix {
    GeneratorMatrix::new(&[vec![0.0]]).unwrap()
}

pub fn reference_params() -> OscillatorParams {
    OscillatorParams::reference(REFERENCE_DESIGN_ORDER).unwrap()
}

pub fn oscillator() -> HybridModel {
    oscillator_model(&reference_params()).unwrap()
}

/// `x = (1, 2)` in the first mode, held constant over `delay_steps` steps.
pub fn oscillator_start(delay_steps: usize, step: f64) -> InitialSegment {
    let x0 = StateVector::new(vec![1.0, 2.0]).unwrap();
    if delay_steps == 0 {
        InitialSegment::point(x0, ModeIndex::new(0))
    } else {
        InitialSegment::constant(x0, delay_steps, step, ModeIndex::new(0)).unwrap()
    }
}

pub fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Half a unit in the `digits`-th significant digit of `expected`.
pub fn agrees_to_digits(value: f64, expected: f64, digits: i32) -> bool {
    let unit = 10f64.powi(expected.abs().log10().floor() as i32 - (digits - 1));
    (value - expected).abs() <= 0.5 * unit
}
