use crate::error::Result;

use super::params::{Gradients, ParamId, ParamSet};
use super::tape::{Tape, Var};

/// Outcome of comparing reverse-mode gradients against central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct FdReport {
    pub max_rel_error: f64,
    /// Parameter and flat offset of the worst entry.
    pub worst: Option<(ParamId, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub entries_checked: usize,
    pub tolerance: f64,
}

impl FdReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// `|a - b| / max(1e-8, |a| + |b|)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

/// Checks every parameter entry of `params` against `(L(θ+h) - L(θ-h)) / 2h`.
///
/// `forward` must record a scalar loss on the tape it is given and be a pure
/// function of the parameters.
pub fn fd_check<F>(forward: F, params: &ParamSet, h: f64, tolerance: f64) -> Result<FdReport>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    let analytic = {
        let mut tape = Tape::new(params);
        let loss = forward(&mut tape)?;
        tape.backward(loss)?
    };
    compare_with_differences(&analytic, &forward, params, h, tolerance)
}

/// Same as [`fd_check`] but against caller-supplied gradients.
pub fn compare_with_differences<F>(
    analytic: &Gradients,
    forward: &F,
    params: &ParamSet,
    h: f64,
    tolerance: f64,
) -> Result<FdReport>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    let eval = |p: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new(p);
        let loss = forward(&mut tape)?;
        Ok(tape.scalar(loss))
    };

    let mut probe = params.clone();
    let mut report = FdReport {
        max_rel_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        entries_checked: 0,
        tolerance,
    };
    for id in params.ids() {
        for k in 0..params.get(id).len() {
            let orig = params.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = orig + h;
            let up = eval(&probe)?;
            probe.get_mut(id).data_mut()[k] = orig - h;
            let down = eval(&probe)?;
            probe.get_mut(id).data_mut()[k] = orig;

            let numeric = (up - down) / (2.0 * h);
            let a = analytic.get(id).data()[k];
            let err = relative_error(a, numeric);
            report.entries_checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                if err >= report.max_rel_error {
                    report.worst = Some((id, k));
                    report.analytic = a;
                    report.numeric = numeric;
                }
            }
        }
    }
    Ok(report)
}
