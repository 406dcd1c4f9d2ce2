use super::graph::{Graph, Var};
use super::params::ParameterStore;
use crate::error::Result;

/// Denominator floor for the relative error, so that parameters whose true gradient
/// is (numerically) zero are judged on absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat element index of the worst disagreement.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares backward-pass gradients against central differences with step `h`
/// on every scalar of every parameter in `store`.
///
/// `loss_fn` must build a deterministic scalar loss from the current parameter
/// values (no stochastic dropout).
pub fn grad_check<F>(store: &mut ParameterStore, h: f64, mut loss_fn: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &ParameterStore) -> Result<Var>,
{
    grad_check_with(store, h, |g, s| loss_fn(g, s), |_| {})
}

/// Like [`grad_check`] but lets the caller configure the graph used for the
/// analytic pass (e.g. to inject faults).
pub fn grad_check_with<F, C>(
    store: &mut ParameterStore,
    h: f64,
    mut loss_fn: F,
    configure: C,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &ParameterStore) -> Result<Var>,
    C: FnOnce(&mut Graph),
{
    store.zero_grads();
    let mut g = Graph::new(0);
    configure(&mut g);
    let loss = loss_fn(&mut g, store)?;
    g.backward(loss, store)?;
    let analytic: Vec<Vec<f64>> = store.ids().map(|id| store.grad(id).data().to_vec()).collect();
    store.zero_grads();

    let mut eval = |s: &ParameterStore| -> Result<f64> {
        let mut g = Graph::new(0);
        let l = loss_fn(&mut g, s)?;
        Ok(g.scalar(l))
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let n = store.value(id).data().len();
        for i in 0..n {
            let orig = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = orig + h;
            let plus = eval(store)?;
            store.value_mut(id).data_mut()[i] = orig - h;
            let minus = eval(store)?;
            store.value_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(analytic[id.index()][i], numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((store.name(id).to_string(), i));
            }
        }
    }
    Ok(report)
}
