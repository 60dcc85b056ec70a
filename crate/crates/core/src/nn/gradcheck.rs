//! Central finite-difference check of the analytic BPTT gradients.

use super::model::{bptt_gradients, mean_loss, Freeze, Model};
use crate::error::Result;
use crate::sampling::LabeledString;

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor so that components near zero are judged absolutely.
pub const REL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// `name[index]` of the worst component.
    pub worst: String,
    pub checked: usize,
}

/// Compares every analytic gradient component against
/// `(L(θ+h) − L(θ−h)) / 2h` with `h = 1e-5`.
pub fn check_gradients(model: &Model<f64>, batch: &[LabeledString]) -> Result<GradCheck> {
    let analytic = bptt_gradients(model, batch, Freeze::None)?;
    let names: Vec<String> = model.tensors().into_iter().map(|(n, _)| n).collect();
    let mut probe = model.clone();
    let mut out = GradCheck {
        max_relative_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    for (ti, (_, g)) in analytic.tensors().into_iter().enumerate() {
        for i in 0..g.len() {
            let orig = probe.tensors_mut()[ti].data()[i];
            probe.tensors_mut()[ti].data_mut()[i] = orig + FD_STEP;
            let up = mean_loss(&probe, batch)?;
            probe.tensors_mut()[ti].data_mut()[i] = orig - FD_STEP;
            let down = mean_loss(&probe, batch)?;
            probe.tensors_mut()[ti].data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * FD_STEP);
            let a = g.data()[i];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(REL_FLOOR);
            if rel > out.max_relative_error {
                out.max_relative_error = rel;
                out.worst = format!("{}[{i}]", names[ti]);
            }
            out.checked += 1;
        }
    }
    Ok(out)
}
