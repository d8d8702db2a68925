//! Central-finite-difference verification of tape gradients.
//!
//! Used by the unit and acceptance tests: the analytic route is the tape's
//! backward pass, the independent route is f(θ+h) − f(θ−h) over 2h.

use super::tape::Tape;
use super::tensor::Tensor;

/// Result of checking one coordinate.
#[derive(Debug)]
pub struct GradCheckFailure {
    pub input: usize,
    pub coord: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// Compare analytic gradients against central differences.
///
/// `build` receives a fresh tape and the current input tensors and must
/// return the scalar loss node together with the vars bound to each input
/// (so the analytic gradients can be read back). Coordinates where both
/// routes are below `abs_floor` are treated as matching.
pub fn check_gradients<F>(
    inputs: &[Tensor],
    step: f64,
    rel_tol: f64,
    abs_floor: f64,
    build: F,
) -> Result<(), GradCheckFailure>
where
    F: Fn(&mut Tape, &[Tensor]) -> (super::tape::Var, Vec<super::tape::Var>),
{
    let eval = |ins: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let (loss, _) = build(&mut tape, ins);
        tape.value(loss).item()
    };

    // Analytic pass.
    let mut tape = Tape::new();
    let (loss, vars) = build(&mut tape, inputs);
    assert_eq!(vars.len(), inputs.len(), "one var per input tensor");
    let grads = tape.backward(loss);

    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.of(vars[i], input);
        for c in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[c] += step;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[c] -= step;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * step);
            let a = analytic.data()[c];
            if a.abs() < abs_floor && numeric.abs() < abs_floor {
                continue;
            }
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(abs_floor);
            if rel > rel_tol {
                return Err(GradCheckFailure {
                    input: i,
                    coord: c,
                    analytic: a,
                    numeric,
                    rel_error: rel,
                });
            }
        }
    }
    Ok(())
}

/// True when `x` is within `margin` of zero — used to skip points near the
/// hinge or an L1 kink where the subgradient is not unique.
pub fn near_kink(x: f64, margin: f64) -> bool {
    x.abs() < margin
}
