//! Central finite-difference gradient checking against [`Graph::backward`].

use crate::error::Result;
use crate::tensor::{Float, Graph, ParamId, ParamStore, Var};

/// Denominator floor for relative error, so that coordinates whose true
/// gradient is ~0 are judged on absolute error.
pub const REL_ERR_FLOOR: f64 = 1e-7;

/// Finite-difference stencil used as the reference derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stencil {
    /// `(L(p+h) - L(p-h)) / 2h`, error O(h^2).
    #[default]
    Central,
    /// `(-L(p+2h) + 8L(p+h) - 8L(p-h) + L(p-2h)) / 12h`, error O(h^4).
    /// Lets `h` be large enough that roundoff stays well below tiny
    /// gradients.
    Central4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub coords: usize,
    pub max_rel_err: f64,
    /// Fraction of coordinates with relative error ≤ 1e-4.
    pub frac_within_1e4: f64,
    /// (parameter name, flat index, analytic, numeric) of the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compares analytic gradients of the scalar built by `loss` with central
/// differences `(L(p+ε) - L(p-ε)) / 2ε` for every trainable coordinate.
pub fn check_gradients<F>(store: &mut ParamStore, eps: Float, loss: F) -> Result<GradCheck>
where
    F: for<'a> Fn(&mut Graph<'a>) -> Result<Var>,
{
    let ids: Vec<ParamId> = store
        .iter()
        .filter(|(_, _, t)| t.requires_grad())
        .map(|(id, _, _)| id)
        .collect();
    check_params(store, eps, Stencil::Central, &ids, loss)
}

/// [`check_gradients`] with an explicit stencil.
pub fn check_gradients_with<F>(
    store: &mut ParamStore,
    eps: Float,
    stencil: Stencil,
    loss: F,
) -> Result<GradCheck>
where
    F: for<'a> Fn(&mut Graph<'a>) -> Result<Var>,
{
    let ids: Vec<ParamId> = store
        .iter()
        .filter(|(_, _, t)| t.requires_grad())
        .map(|(id, _, _)| id)
        .collect();
    check_params(store, eps, stencil, &ids, loss)
}

/// As [`check_gradients`], restricted to `ids`.
pub fn check_params<F>(
    store: &mut ParamStore,
    eps: Float,
    stencil: Stencil,
    ids: &[ParamId],
    loss: F,
) -> Result<GradCheck>
where
    F: for<'a> Fn(&mut Graph<'a>) -> Result<Var>,
{
    let analytic = {
        let mut g = Graph::new(store);
        let l = loss(&mut g)?;
        g.backward(l)?
    };
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new(store);
        let l = loss(&mut g)?;
        Ok(g.scalar(l) as f64)
    };

    let mut coords = 0;
    let mut within = 0;
    let mut max_rel = 0.0f64;
    let mut worst = None;
    for &id in ids {
        let n = store.get(id).numel();
        for i in 0..n {
            let orig = store.get(id).data()[i];
            let mut at = |k: Float| -> Result<f64> {
                store.get_mut(id).data_mut()[i] = orig + k * eps;
                eval(store)
            };
            let h = eps as f64;
            let numeric = match stencil {
                Stencil::Central => (at(1.0)? - at(-1.0)?) / (2.0 * h),
                Stencil::Central4 => {
                    (-at(2.0)? + 8.0 * at(1.0)? - 8.0 * at(-1.0)? + at(-2.0)?) / (12.0 * h)
                }
            };
            store.get_mut(id).data_mut()[i] = orig;
            let a = analytic.get(id).map_or(0.0, |g| g[i] as f64);
            let rel = relative_error(a, numeric);
            coords += 1;
            if rel <= 1e-4 {
                within += 1;
            }
            if rel > max_rel || worst.is_none() {
                max_rel = max_rel.max(rel);
                worst = Some((store.name(id).to_string(), i, a, numeric));
            }
        }
    }
    Ok(GradCheck {
        coords,
        max_rel_err: max_rel,
        frac_within_1e4: if coords == 0 {
            1.0
        } else {
            within as f64 / coords as f64
        },
        worst,
    })
}
