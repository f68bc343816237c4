use crate::nn::{Ctx, ParamSet};
use crate::tensor::{Graph, Tensor, Var};
use crate::{Error, Result};

/// Denominator floor so coordinates with near-zero gradient are judged on
/// absolute error.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Relative error `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compare an analytic gradient against central differences of `value`.
/// The stencil reaches `2 * eps` on each side.
/// Returns the largest relative error over all coordinates.
pub fn grad_check(mut value: impl FnMut(&[f64]) -> f64, analytic: &[f64], point: &[f64], eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {eps}")));
    }
    assert_eq!(analytic.len(), point.len(), "gradient and point sizes differ");
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        let mut at = |offset: f64| {
            x[i] = orig + offset;
            value(&x)
        };
        // fourth-order central stencil
        let numeric = (8.0 * (at(eps) - at(-eps)) - (at(2.0 * eps) - at(-2.0 * eps))) / (12.0 * eps);
        x[i] = orig;
        worst = worst.max(relative_error(analytic[i], numeric, REL_ERROR_FLOOR));
    }
    Ok(worst)
}

/// Gradient check of a graph-built scalar function of several inputs. The
/// analytic gradient comes from the tape.
pub fn grad_check_graph(
    build: impl Fn(&mut Graph<f64>, &[Var]) -> Var,
    inputs: &[Tensor<f64>],
    eps: f64,
) -> Result<f64> {
    let eval = |xs: &[Tensor<f64>], grad: bool| {
        let mut g = Graph::new();
        let vars: Vec<Var> =
            xs.iter().map(|t| if grad { g.variable(t.clone()) } else { g.constant(t.clone()) }).collect();
        let out = build(&mut g, &vars);
        assert_eq!(g.value(out).numel(), 1, "gradient check needs a scalar output");
        let v = g.value(out).item();
        let grads = grad.then(|| {
            let mut gr = g.backward(out);
            vars.iter()
                .zip(xs)
                .map(|(&var, t)| gr.take(var).unwrap_or_else(|| Tensor::zeros(t.shape())).into_vec())
                .collect::<Vec<_>>()
        });
        (v, grads)
    };
    let (_, analytic) = eval(inputs, true);
    let analytic: Vec<f64> = analytic.expect("requested").concat();
    let point: Vec<f64> = inputs.iter().flat_map(|t| t.data().iter().copied()).collect();
    let shapes: Vec<Vec<usize>> = inputs.iter().map(|t| t.shape().to_vec()).collect();
    let unflatten = |flat: &[f64]| {
        let mut off = 0;
        shapes
            .iter()
            .map(|s| {
                let n: usize = s.iter().product();
                let t = Tensor::from_vec(s, flat[off..off + n].to_vec());
                off += n;
                t
            })
            .collect::<Vec<_>>()
    };
    grad_check(|x| eval(&unflatten(x), false).0, &analytic, &point, eps)
}

/// Gradient check of a scalar function with respect to every parameter in
/// `params`.
pub fn grad_check_params(params: &ParamSet<f64>, build: impl Fn(&mut Ctx<'_, f64>) -> Var, eps: f64) -> Result<f64> {
    let mut ctx = Ctx::new(params, true);
    let out = build(&mut ctx);
    assert_eq!(ctx.g.value(out).numel(), 1, "gradient check needs a scalar output");
    let mut grads = ctx.g.backward(out);
    let analytic: Vec<f64> = ctx
        .param_grads(&mut grads)
        .into_iter()
        .zip(params.iter())
        .flat_map(|(g, (_, _, t))| g.map_or_else(|| vec![0.0; t.numel()], Tensor::into_vec))
        .collect();
    let mut scratch = params.clone();
    grad_check(
        |flat| {
            scratch.assign_flat(flat);
            let mut ctx = Ctx::new(&scratch, false);
            let out = build(&mut ctx);
            ctx.g.value(out).item()
        },
        &analytic,
        &params.flatten(),
        eps,
    )
}
