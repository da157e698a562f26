#![allow(dead_code)]

use prefrl_core::autodiff::{Graph, ModelParams, Tensor};
use prefrl_core::rng::{self, StreamRng};
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> StreamRng {
    rng::from_seed(seed)
}

pub fn uniform(r: &mut StreamRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| r.random_range(lo..hi)).collect()
}

/// `||a - n|| / (||a|| + ||n||)`, zero when both vanish.
pub fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(n).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt() + n.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `f` with respect to every entry of every input.
pub fn numeric_grad(inputs: &[Tensor], f: &dyn Fn(&[Tensor]) -> f64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..inputs.len() {
        let mut g = vec![0.0; inputs[i].len()];
        for j in 0..inputs[i].len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= FD_STEP;
            g[j] = (f(&plus) - f(&minus)) / (2.0 * FD_STEP);
        }
        out.push(g);
    }
    out
}

/// Same for a parameter set.
pub fn numeric_param_grad(params: &ModelParams, f: &dyn Fn(&ModelParams) -> f64) -> Vec<(String, Vec<f64>)> {
    let names: Vec<String> = params.iter().map(|(n, _)| n.clone()).collect();
    let mut out = Vec::new();
    for name in names {
        let len = params.tensor(&name).unwrap().len();
        let mut g = vec![0.0; len];
        for j in 0..len {
            let mut plus = params.clone();
            plus.get_mut(&name).unwrap().tensor.data_mut()[j] += FD_STEP;
            let mut minus = params.clone();
            minus.get_mut(&name).unwrap().tensor.data_mut()[j] -= FD_STEP;
            g[j] = (f(&plus) - f(&minus)) / (2.0 * FD_STEP);
        }
        out.push((name, g));
    }
    out
}

/// Builds `inputs` as named leaves `x0, x1, ...`, applies `op`, and reduces
/// the output to a scalar with fixed weights. Returns the loss and the
/// analytic gradient of every input.
pub fn analytic(
    inputs: &[Tensor],
    weights: &[f64],
    op: &dyn Fn(&mut Graph, &[prefrl_core::autodiff::Var]) -> prefrl_core::autodiff::Var,
) -> (f64, Vec<Vec<f64>>) {
    let mut g = Graph::new();
    let vars: Vec<_> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| g.param(&format!("x{i}"), t.clone(), true))
        .collect();
    let out = op(&mut g, &vars);
    let loss = weighted_sum(&mut g, out, weights);
    let value = g.value(loss).item();
    let grads = g.backward(loss).unwrap();
    let per = (0..inputs.len())
        .map(|i| grads.get(&format!("x{i}")).unwrap().data().to_vec())
        .collect();
    (value, per)
}

pub fn weighted_sum(g: &mut Graph, out: prefrl_core::autodiff::Var, weights: &[f64]) -> prefrl_core::autodiff::Var {
    let shape = g.value(out).shape().to_vec();
    let w = g.constant(Tensor::new(shape, weights[..g.value(out).len()].to_vec()).unwrap());
    let prod = g.mul(out, w).unwrap();
    g.sum(prod).unwrap()
}

pub fn forward(
    inputs: &[Tensor],
    weights: &[f64],
    op: &dyn Fn(&mut Graph, &[prefrl_core::autodiff::Var]) -> prefrl_core::autodiff::Var,
) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<_> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = op(&mut g, &vars);
    let loss = weighted_sum(&mut g, out, weights);
    g.value(loss).item()
}
