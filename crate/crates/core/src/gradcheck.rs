//! Central finite-difference checks of tape gradients.
//!
//! Used by the test suites; exposed so that downstream harnesses can run the
//! same checks on their own compositions.

use crate::error::Result;
use crate::model::Model;
use crate::partition::TrainingSample;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::train::{sample_gradients, total_loss, LossWeights};

/// Default finite-difference step.
pub const STEP: f64 = 1e-4;

/// A step is divided by ten, at most this many times, while either
/// perturbation changes the rectifier activation pattern: a central
/// difference straddling a kink measures neither one-sided derivative.
pub const MAX_REFINEMENTS: usize = 4;

/// Gradients smaller than this are compared in absolute rather than relative
/// terms: `|a - n| / max(|a|, |n|, FLOOR)`.
pub const FLOOR: f64 = 1e-6;

/// Worst discrepancy between analytic and numerical gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    /// `name[index]` of the worst element.
    pub worst: String,
    pub checked: usize,
    /// Elements whose step had to shrink to stay on one smooth piece.
    pub refined: usize,
}

impl GradCheck {
    fn new() -> Self {
        Self {
            max_rel_err: 0.0,
            worst: String::new(),
            checked: 0,
            refined: 0,
        }
    }

    fn record(&mut self, name: &str, index: usize, analytic: f64, numeric: f64) {
        let err = relative_error(analytic, numeric);
        self.checked += 1;
        if err > self.max_rel_err || !err.is_finite() {
            self.max_rel_err = err;
            self.worst = format!("{name}[{index}] analytic={analytic:e} numeric={numeric:e}");
        }
    }

    fn merge(&mut self, other: GradCheck) {
        if other.max_rel_err > self.max_rel_err || !other.max_rel_err.is_finite() {
            self.max_rel_err = other.max_rel_err;
            self.worst = other.worst;
        }
        self.checked += other.checked;
        self.refined += other.refined;
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Central difference of `eval` around `x0`, shrinking the step while a
/// perturbation leaves the smooth piece of the base point.
fn central_difference(
    x0: f64,
    h: f64,
    base: &[bool],
    mut eval: impl FnMut(f64) -> Result<(f64, Vec<bool>)>,
) -> Result<(f64, bool)> {
    let mut step = h;
    for attempt in 0..=MAX_REFINEMENTS {
        let (plus, pp) = eval(x0 + step)?;
        let (minus, pm) = eval(x0 - step)?;
        if (pp == base && pm == base) || attempt == MAX_REFINEMENTS {
            return Ok(((plus - minus) / (2.0 * step), attempt > 0));
        }
        step /= 10.0;
    }
    unreachable!("loop returns on the last attempt")
}

/// Checks `d f / d inputs` for a scalar-valued composition `f` built on a
/// fresh tape from leaves holding `inputs`.
pub fn check_function(
    inputs: &[Tensor<f64>],
    h: f64,
    f: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
) -> Result<GradCheck> {
    let eval = |values: &[Tensor<f64>]| -> Result<(f64, Vec<bool>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok((tape.value(out).data()[0], tape.relu_pattern()))
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone().with_grad())).collect();
    let out = f(&mut tape, &vars)?;
    let base = tape.relu_pattern();
    tape.backward(out)?;
    let mut report = GradCheck::new();
    let mut work = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = tape.grad(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[k].numel()]);
        for (i, &a) in analytic.iter().enumerate() {
            let x0 = inputs[k].data()[i];
            let (numeric, refined) = central_difference(x0, h, &base, |x| {
                work[k].data_mut()[i] = x;
                eval(&work)
            })?;
            work[k].data_mut()[i] = x0;
            report.refined += usize::from(refined);
            report.record(&format!("input{k}"), i, a, numeric);
        }
    }
    Ok(report)
}

/// Value of the training objective for one sample.
pub fn loss_value(model: &Model<f64>, sample: &TrainingSample<f64>, weights: LossWeights) -> Result<f64> {
    Ok(loss_and_pattern(model, sample, weights)?.0)
}

fn loss_and_pattern(
    model: &Model<f64>,
    sample: &TrainingSample<f64>,
    weights: LossWeights,
) -> Result<(f64, Vec<bool>)> {
    let mut tape = Tape::new();
    let vars = model.register(&mut tape, false);
    let out = model.record(&mut tape, &vars, sample, None, false)?;
    let (loss, _) = total_loss(&mut tape, &out, sample, weights)?;
    Ok((tape.value(loss).data()[0], tape.relu_pattern()))
}

/// Checks every parameter gradient of the training objective.
pub fn check_model(
    model: &Model<f64>,
    sample: &TrainingSample<f64>,
    weights: LossWeights,
    h: f64,
) -> Result<GradCheck> {
    let (_, grads) = sample_gradients(model, sample, weights)?;
    let (_, base) = loss_and_pattern(model, sample, weights)?;
    let names = model.params.names();
    let mut report = GradCheck::new();
    let mut work = model.clone();
    for (k, (name, g)) in names.iter().zip(&grads).enumerate() {
        let mut part = GradCheck::new();
        for (i, &a) in g.iter().enumerate() {
            let x0 = set_param(&mut work, k, i, None);
            let (numeric, refined) = central_difference(x0, h, &base, |x| {
                set_param(&mut work, k, i, Some(x));
                loss_and_pattern(&work, sample, weights)
            })?;
            set_param(&mut work, k, i, Some(x0));
            part.refined += usize::from(refined);
            part.record(name, i, a, numeric);
        }
        report.merge(part);
    }
    Ok(report)
}

/// Returns element `i` of the `k`-th parameter in canonical order, replacing
/// it with `value` when given.
fn set_param(model: &mut Model<f64>, k: usize, i: usize, value: Option<f64>) -> f64 {
    let mut idx = 0;
    let mut old = f64::NAN;
    model.params.visit_mut("", &mut |_, t| {
        if idx == k {
            old = t.data()[i];
            if let Some(v) = value {
                t.data_mut()[i] = v;
            }
        }
        idx += 1;
    });
    old
}
