//! Central finite-difference gradient checking.

use crate::autodiff::graph::{Graph, NodeId};
use crate::autodiff::Tensor;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub rel_err: f64,
    pub max_abs_err: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.rel_err <= tol
    }
}

/// Compare tape gradients of a scalar function against central differences
/// at perturbation `eps`.
///
/// The relative error is norm-based, ‖a − n‖₂ / max(‖a‖₂, ‖n‖₂), so that
/// float32 round-off on individual near-zero components does not dominate;
/// a wrong VJP still shows up because it perturbs the whole vector.
pub fn check_gradients(
    f: impl Fn(&mut Graph, NodeId) -> Result<NodeId>,
    input: &Tensor,
    eps: f32,
) -> Result<GradCheckReport> {
    let mut g = Graph::new();
    let x = g.leaf(input.clone());
    let loss = f(&mut g, x)?;
    let grads = g.backward(loss)?;
    let analytic = grads.of(x).cloned().unwrap_or_else(|| Tensor::zeros(input.shape));

    let mut max_abs: f64 = 0.0;
    let mut err_sq: f64 = 0.0;
    let mut a_sq: f64 = 0.0;
    let mut n_sq: f64 = 0.0;
    for i in 0..input.numel() {
        let numeric = {
            let mut plus = input.clone();
            plus.data[i] += eps;
            let mut gp = Graph::new();
            let xp = gp.leaf(plus.clone());
            let lp = f(&mut gp, xp)?;
            let vp = gp.value_f64(lp);

            let mut minus = input.clone();
            minus.data[i] -= eps;
            let mut gm = Graph::new();
            let xm = gm.leaf(minus.clone());
            let lm = f(&mut gm, xm)?;
            let vm = gm.value_f64(lm);
            // divide by the step actually applied after f32 rounding, not
            // the nominal eps
            let applied = plus.data[i] as f64 - minus.data[i] as f64;
            (vp - vm) / applied
        };
        let a = analytic.data[i] as f64;
        let abs = (a - numeric).abs();
        max_abs = max_abs.max(abs);
        err_sq += abs * abs;
        a_sq += a * a;
        n_sq += numeric * numeric;
    }
    let denom = a_sq.sqrt().max(n_sq.sqrt()).max(1e-6);
    Ok(GradCheckReport {
        rel_err: err_sq.sqrt() / denom,
        max_abs_err: max_abs,
        checked: input.numel(),
    })
}
