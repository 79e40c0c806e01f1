//! Finite-difference verification of reverse-mode gradients.

use super::{BoundParams, DiffError, ParamStore, Tape, Var};

/// Compares analytic gradients against central finite differences.
///
/// `build` records a scalar loss for the given parameters on a fresh tape;
/// it is invoked once for the analytic pass and twice per parameter
/// coordinate for the numeric pass. Returns the maximum over coordinates of
///
/// ```text
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
/// ```
///
/// Fails with [`DiffError::NonFinite`] if any evaluation or gradient is not
/// finite.
pub fn grad_check<F>(mut build: F, params: &ParamStore, eps: f64) -> Result<f64, DiffError>
where
    F: FnMut(&mut Tape, &BoundParams) -> Result<Var, DiffError>,
{
    // Analytic pass.
    let mut tape = Tape::new();
    let bound = tape.bind_params(params);
    let loss = build(&mut tape, &bound)?;
    let loss_value = scalar_value(&tape, loss)?;
    if !loss_value.is_finite() {
        return Err(DiffError::NonFinite {
            context: "loss".to_string(),
            value: loss_value,
        });
    }
    tape.backward(loss)?;
    let analytic = tape.param_gradients(&bound);
    drop(tape);

    let mut work = params.clone();
    let mut worst: f64 = 0.0;
    for pi in 0..work.len() {
        let coords = work.value_at(pi).len();
        for ci in 0..coords {
            let name = analytic.names().nth(pi).unwrap_or("?").to_string();
            let a = analytic.value_at(pi).data()[ci];
            if !a.is_finite() {
                return Err(DiffError::NonFinite {
                    context: format!("analytic gradient of {name}[{ci}]"),
                    value: a,
                });
            }
            let orig = work.value_at(pi).data()[ci];
            work.value_at_mut(pi).data_mut()[ci] = orig + eps;
            let f_plus = eval_loss(&mut build, &work)?;
            work.value_at_mut(pi).data_mut()[ci] = orig - eps;
            let f_minus = eval_loss(&mut build, &work)?;
            work.value_at_mut(pi).data_mut()[ci] = orig;
            if !f_plus.is_finite() || !f_minus.is_finite() {
                return Err(DiffError::NonFinite {
                    context: format!("perturbed loss at {name}[{ci}]"),
                    value: if f_plus.is_finite() { f_minus } else { f_plus },
                });
            }
            let numeric = (f_plus - f_minus) / (2.0 * eps);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}

fn eval_loss<F>(build: &mut F, params: &ParamStore) -> Result<f64, DiffError>
where
    F: FnMut(&mut Tape, &BoundParams) -> Result<Var, DiffError>,
{
    let mut tape = Tape::new();
    let bound = tape.bind_params(params);
    let loss = build(&mut tape, &bound)?;
    scalar_value(&tape, loss)
}

fn scalar_value(tape: &Tape, v: Var) -> Result<f64, DiffError> {
    let t = tape.value(v);
    if t.len() != 1 {
        return Err(DiffError::NonScalarLoss {
            shape: t.shape().to_vec(),
        });
    }
    Ok(t.item())
}
