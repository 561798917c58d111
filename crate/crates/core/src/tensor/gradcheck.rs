//! Finite-difference verification of analytic gradients.

use super::{Graph, TensorId, Value};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct GradCheckEntry {
    pub name: String,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub tolerance: f64,
    pub max_rel_err: f64,
    pub pass: bool,
}

/// Relative error with an absolute-scale floor: gradients below the floor are
/// judged on absolute error, which keeps central-difference rounding noise
/// from dominating near-zero entries.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-2)
}

/// Compare analytic gradients of `f` against central finite differences at
/// the given evaluation point.
///
/// `f` must produce a scalar from the leaf tensors it is handed; it is
/// re-evaluated 2x per parameter element for the numeric side.
pub fn grad_check<T, F>(
    f: F,
    params: &[(&str, Value<T>)],
    epsilon: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    T: Real,
    F: Fn(&mut Graph<T>, &[TensorId]) -> Result<TensorId>,
{
    let eval = |values: &[Value<T>]| -> Result<f64> {
        let mut g = Graph::new();
        let ids: Vec<TensorId> = values.iter().map(|v| g.leaf(v.clone(), true)).collect();
        let out = f(&mut g, &ids)?;
        if g.numel(out) != 1 {
            return Err(Error::Contract(
                "grad_check requires a scalar-valued function".into(),
            ));
        }
        let v = g.value(out)[0].as_f64();
        if !v.is_finite() {
            return Err(Error::Numeric(format!("non-finite function value {v}")));
        }
        Ok(v)
    };

    // Analytic pass.
    let mut graph = Graph::new();
    let ids: Vec<TensorId> = params
        .iter()
        .map(|(_, v)| graph.leaf(v.clone(), true))
        .collect();
    let loss = f(&mut graph, &ids)?;
    graph.backward(loss)?;
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .map(|id| {
            graph
                .grad(*id)
                .map(|g| g.iter().map(|v| v.as_f64()).collect())
                .unwrap_or_else(|| vec![0.0; graph.numel(*id)])
        })
        .collect();

    // Numeric pass.
    let base: Vec<Value<T>> = params.iter().map(|(_, v)| v.clone()).collect();
    let mut entries = Vec::with_capacity(params.len());
    let mut max_rel = 0.0f64;
    for (pi, (name, _)) in params.iter().enumerate() {
        let mut worst = 0.0f64;
        for ei in 0..base[pi].numel() {
            let mut plus = base.clone();
            plus[pi].data[ei] += T::of(epsilon);
            let mut minus = base.clone();
            minus[pi].data[ei] -= T::of(epsilon);
            let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * epsilon);
            worst = worst.max(rel_err(analytic[pi][ei], numeric));
        }
        max_rel = max_rel.max(worst);
        entries.push(GradCheckEntry {
            name: (*name).to_string(),
            max_rel_err: worst,
        });
    }
    Ok(GradCheckReport {
        entries,
        tolerance,
        max_rel_err: max_rel,
        pass: max_rel < tolerance,
    })
}
