use alloc::string::String;

use super::{ParamStore, Tape, TensorError, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// Number of scalar entries compared.
    pub checked: usize,
}

/// Step for checks of whole-model losses. With a loss of order one the
/// rounding error of a central difference is about `1e-16 / step`; at this
/// step it stays well under `1e-4` of the `1e-8` denominator floor.
pub const FD_STEP: f64 = 1e-4;

/// Compare analytic gradients against central finite differences.
///
/// `loss` must be deterministic: any sampled noise has to be fixed by the
/// caller. Relative error is `|a - n| / max(|a|, |n|, 1e-8)`. Frozen
/// parameters are skipped.
pub fn grad_check<E, F>(store: &mut ParamStore<f64>, epsilon: f64, mut loss: F) -> Result<GradCheckReport, E>
where
    E: From<TensorError>,
    F: FnMut(&ParamStore<f64>, &mut Tape<f64>) -> Result<Var, E>,
{
    store.zero_grad();
    let mut tape = Tape::new();
    let out = loss(store, &mut tape)?;
    let base = tape.scalar_value(out);
    if !base.is_finite() {
        return Err(TensorError::NonFinite(base).into());
    }
    tape.backward(out, store)?;
    drop(tape);

    let mut eval = |store: &ParamStore<f64>| -> Result<f64, E> {
        let mut tape = Tape::new();
        let out = loss(store, &mut tape)?;
        let v = tape.scalar_value(out);
        if !v.is_finite() {
            return Err(TensorError::NonFinite(v).into());
        }
        Ok(v)
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let ids: alloc::vec::Vec<_> = store.iter().filter(|(_, p)| !p.frozen).map(|(id, _)| id).collect();
    for id in ids {
        for k in 0..store.value(id).numel() {
            let original = store.value(id).data()[k];
            store.get_mut(id).value.data_mut()[k] = original + epsilon;
            let plus = eval(store)?;
            store.get_mut(id).value.data_mut()[k] = original - epsilon;
            let minus = eval(store)?;
            store.get_mut(id).value.data_mut()[k] = original;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let analytic = store.grad(id).data()[k];
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            let rel = (analytic - numeric).abs() / denom;
            report.checked += 1;
            if rel > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = rel;
                report.worst_param = store.get(id).name.clone();
                report.worst_index = k;
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
