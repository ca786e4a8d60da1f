//! Forward pass and backpropagation through time.

use super::{check_width, Layout, ModelParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Activations of one layer at one timestep, all `batch x H` except `gates`
/// (`batch x 4H`, post-activation, ordered i, f, g, o).
#[derive(Debug, Clone)]
struct StepCache {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Intermediate values recorded by [`forward`] for use by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    /// `inputs[layer][t]`: the `batch x in_dim` input seen by `layer` at step `t`.
    inputs: Vec<Vec<Vec<f64>>>,
    steps: Vec<Vec<StepCache>>,
    top_h: Vec<f64>,
    probs: Matrix,
}

impl ForwardCache {
    /// Softmax probabilities of the forward pass.
    pub fn probs(&self) -> &Matrix {
        &self.probs
    }
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean cross-entropy of softmax probabilities against class labels.
pub fn cross_entropy(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    check_labels(labels, probs.rows(), probs.cols())?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(r, &y)| -probs.get(r, y).max(f64::MIN_POSITIVE).ln())
        .sum();
    Ok(total / labels.len() as f64)
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::Shape {
            expected: format!("{rows} labels"),
            got: format!("{} labels", labels.len()),
        });
    }
    if let Some(&label) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Label { label, classes });
    }
    Ok(())
}

/// Runs the network on `batch` (one row per sample, `seq_len` consecutive
/// blocks of `input_dim` features) and returns the logits.
pub fn forward(params: &ModelParams, batch: &Matrix) -> Result<(Matrix, ForwardCache)> {
    check_width(params, batch)?;
    let arch = *params.arch();
    let layout = params.layout();
    let w = params.as_slice();
    let n = batch.rows();
    let h = arch.hidden_units;
    let steps_n = arch.seq_len;

    let first: Vec<Vec<f64>> = (0..steps_n)
        .map(|t| {
            let lo = t * arch.input_dim;
            let mut x = Vec::with_capacity(n * arch.input_dim);
            for r in 0..n {
                x.extend_from_slice(&batch.row(r)[lo..lo + arch.input_dim]);
            }
            x
        })
        .collect();

    let mut inputs = Vec::with_capacity(arch.hidden_layers);
    let mut steps = Vec::with_capacity(arch.hidden_layers);
    let mut layer_in = first;
    for l in &layout.layers {
        let wx = &w[l.wx..l.wh];
        let wh = &w[l.wh..l.b];
        let bias = &w[l.b..l.b + 4 * h];
        let mut h_prev = vec![0.0; n * h];
        let mut c_prev = vec![0.0; n * h];
        let mut layer_steps = Vec::with_capacity(steps_n);
        let mut layer_out = Vec::with_capacity(steps_n);
        for (t, x) in layer_in.iter().enumerate() {
            let mut gates = vec![0.0; n * 4 * h];
            let mut c = vec![0.0; n * h];
            let mut tanh_c = vec![0.0; n * h];
            let mut h_new = vec![0.0; n * h];
            for r in 0..n {
                let xr = &x[r * l.in_dim..(r + 1) * l.in_dim];
                let hr = &h_prev[r * h..(r + 1) * h];
                let g = &mut gates[r * 4 * h..(r + 1) * 4 * h];
                for (k, gk) in g.iter_mut().enumerate() {
                    let mut s = bias[k] + dot(&wx[k * l.in_dim..(k + 1) * l.in_dim], xr);
                    if t > 0 {
                        s += dot(&wh[k * h..(k + 1) * h], hr);
                    }
                    *gk = s;
                }
                for j in 0..h {
                    let i_g = sigmoid(g[j]);
                    let f_g = sigmoid(g[h + j]);
                    let c_g = g[2 * h + j].tanh();
                    let o_g = sigmoid(g[3 * h + j]);
                    g[j] = i_g;
                    g[h + j] = f_g;
                    g[2 * h + j] = c_g;
                    g[3 * h + j] = o_g;
                    let cv = f_g * c_prev[r * h + j] + i_g * c_g;
                    let tc = cv.tanh();
                    c[r * h + j] = cv;
                    tanh_c[r * h + j] = tc;
                    h_new[r * h + j] = o_g * tc;
                }
            }
            layer_steps.push(StepCache {
                h_prev: std::mem::replace(&mut h_prev, h_new.clone()),
                c_prev: std::mem::replace(&mut c_prev, c),
                gates,
                tanh_c,
            });
            layer_out.push(h_new);
        }
        steps.push(layer_steps);
        inputs.push(std::mem::replace(&mut layer_in, layer_out));
    }
    // layer_in now holds the top layer's outputs per timestep.
    let top_h = layer_in.pop().unwrap_or_default();

    let out_w = &w[layout.out_w..layout.out_b];
    let out_b = &w[layout.out_b..layout.total];
    let mut logits = Matrix::zeros(n, arch.output_dim);
    for r in 0..n {
        let hr = &top_h[r * h..(r + 1) * h];
        for (o, z) in logits.row_mut(r).iter_mut().enumerate() {
            *z = out_b[o] + dot(&out_w[o * h..(o + 1) * h], hr);
        }
    }
    let probs = softmax_rows(&logits);
    Ok((
        logits,
        ForwardCache {
            batch: n,
            inputs,
            steps,
            top_h,
            probs,
        },
    ))
}

/// Gradient of the mean cross-entropy over the batch with respect to every
/// parameter, returned in the parameter layout.
pub fn backward(
    params: &ModelParams,
    cache: &ForwardCache,
    labels: &[usize],
) -> Result<ModelParams> {
    let arch = *params.arch();
    let n = cache.batch;
    if cache.probs.cols() != arch.output_dim || cache.steps.len() != arch.hidden_layers {
        return Err(Error::Shape {
            expected: "cache produced by forward on these parameters".into(),
            got: "cache from a different architecture".into(),
        });
    }
    check_labels(labels, n, arch.output_dim)?;
    let layout: Layout = params.layout();
    let w = params.as_slice();
    let h = arch.hidden_units;
    let o_dim = arch.output_dim;
    let mut grad = ModelParams::zeros(arch)?;
    if n == 0 {
        return Ok(grad);
    }
    let g = grad.as_mut_slice();
    let inv_n = 1.0 / n as f64;

    // Output layer.
    let mut dlogits = cache.probs.clone();
    for (r, &y) in labels.iter().enumerate() {
        let row = dlogits.row_mut(r);
        row[y] -= 1.0;
        for v in row.iter_mut() {
            *v *= inv_n;
        }
    }
    let out_w = &w[layout.out_w..layout.out_b];
    let mut dh_top = vec![0.0; n * h];
    for r in 0..n {
        let dz = dlogits.row(r);
        let hr = &cache.top_h[r * h..(r + 1) * h];
        for o in 0..o_dim {
            g[layout.out_b + o] += dz[o];
            let gw = &mut g[layout.out_w + o * h..layout.out_w + (o + 1) * h];
            for j in 0..h {
                gw[j] += dz[o] * hr[j];
                dh_top[r * h + j] += dz[o] * out_w[o * h + j];
            }
        }
    }

    let steps_n = arch.seq_len;
    let mut above: Vec<Vec<f64>> = vec![vec![0.0; n * h]; steps_n];
    above[steps_n - 1] = dh_top;

    for (li, l) in layout.layers.iter().enumerate().rev() {
        let wx = &w[l.wx..l.wh];
        let wh = &w[l.wh..l.b];
        let need_dx = li > 0;
        let mut below: Vec<Vec<f64>> = if need_dx {
            vec![vec![0.0; n * l.in_dim]; steps_n]
        } else {
            Vec::new()
        };
        let mut dh_next = vec![0.0; n * h];
        let mut dc_next = vec![0.0; n * h];
        for t in (0..steps_n).rev() {
            let st = &cache.steps[li][t];
            let x = &cache.inputs[li][t];
            let mut da = vec![0.0; n * 4 * h];
            for r in 0..n {
                let gr = &st.gates[r * 4 * h..(r + 1) * 4 * h];
                for j in 0..h {
                    let idx = r * h + j;
                    let (i_g, f_g, c_g, o_g) = (gr[j], gr[h + j], gr[2 * h + j], gr[3 * h + j]);
                    let tc = st.tanh_c[idx];
                    let dh = above[t][idx] + dh_next[idx];
                    let d_o = dh * tc;
                    let dc = dh * o_g * (1.0 - tc * tc) + dc_next[idx];
                    let d_i = dc * c_g;
                    let d_c = dc * i_g;
                    let d_f = dc * st.c_prev[idx];
                    dc_next[idx] = dc * f_g;
                    let dar = &mut da[r * 4 * h..(r + 1) * 4 * h];
                    dar[j] = d_i * i_g * (1.0 - i_g);
                    dar[h + j] = d_f * f_g * (1.0 - f_g);
                    dar[2 * h + j] = d_c * (1.0 - c_g * c_g);
                    dar[3 * h + j] = d_o * o_g * (1.0 - o_g);
                }
            }
            for r in 0..n {
                let dar = &da[r * 4 * h..(r + 1) * 4 * h];
                let xr = &x[r * l.in_dim..(r + 1) * l.in_dim];
                let hr = &st.h_prev[r * h..(r + 1) * h];
                for (k, &dk) in dar.iter().enumerate() {
                    if dk == 0.0 {
                        continue;
                    }
                    g[l.b + k] += dk;
                    let gwx = &mut g[l.wx + k * l.in_dim..l.wx + (k + 1) * l.in_dim];
                    for (gv, &xv) in gwx.iter_mut().zip(xr) {
                        *gv += dk * xv;
                    }
                    if t > 0 {
                        let gwh = &mut g[l.wh + k * h..l.wh + (k + 1) * h];
                        for (gv, &hv) in gwh.iter_mut().zip(hr) {
                            *gv += dk * hv;
                        }
                    }
                }
                if need_dx {
                    let dx = &mut below[t][r * l.in_dim..(r + 1) * l.in_dim];
                    for (k, &dk) in dar.iter().enumerate() {
                        for (dv, &wv) in dx.iter_mut().zip(&wx[k * l.in_dim..(k + 1) * l.in_dim]) {
                            *dv += dk * wv;
                        }
                    }
                }
                let dh_prev = &mut dh_next[r * h..(r + 1) * h];
                dh_prev.iter_mut().for_each(|v| *v = 0.0);
                if t > 0 {
                    for (k, &dk) in dar.iter().enumerate() {
                        for (dv, &wv) in dh_prev.iter_mut().zip(&wh[k * h..(k + 1) * h]) {
                            *dv += dk * wv;
                        }
                    }
                }
            }
        }
        above = below;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, ModelArch};
    use crate::seed::Seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn arch(input: usize, layers: usize, units: usize, out: usize, seq: usize) -> ModelArch {
        ModelArch {
            input_dim: input,
            hidden_layers: layers,
            hidden_units: units,
            output_dim: out,
            seq_len: seq,
        }
    }

    fn loss(p: &ModelParams, x: &Matrix, y: &[usize]) -> f64 {
        let (_, cache) = forward(p, x).unwrap();
        cross_entropy(cache.probs(), y).unwrap()
    }

    /// Largest relative error between analytic and central-difference gradients.
    fn max_rel_error(p: &ModelParams, x: &Matrix, y: &[usize]) -> f64 {
        let (_, cache) = forward(p, x).unwrap();
        let g = backward(p, &cache, y).unwrap();
        let step = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..p.len() {
            let mut plus = p.clone();
            plus.as_mut_slice()[k] += step;
            let mut minus = p.clone();
            minus.as_mut_slice()[k] -= step;
            let num = (loss(&plus, x, y) - loss(&minus, x, y)) / (2.0 * step);
            let ana = g.as_slice()[k];
            // Floor keeps round-off on near-zero components from dominating.
            let denom = ana.abs().max(num.abs()).max(1e-6);
            worst = worst.max((ana - num).abs() / denom);
        }
        worst
    }

    fn random_case(seed: u64, a: ModelArch, n: usize) -> (ModelParams, Matrix, Vec<usize>) {
        let s = Seed::new(seed);
        let mut p = init_params(a, s).unwrap();
        let mut rng = s.child("case").rng();
        // Perturb biases too so every path carries gradient.
        for v in p.as_mut_slice() {
            *v += rng.random_range(-0.3..0.3);
        }
        let data: Vec<f64> = (0..n * a.row_width())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let x = Matrix::from_vec(n, a.row_width(), data).unwrap();
        let y = (0..n).map(|_| rng.random_range(0..a.output_dim)).collect();
        (p, x, y)
    }

    #[test]
    fn zero_network_gives_uniform_probabilities() {
        let a = arch(3, 2, 4, 6, 2);
        let p = ModelParams::zeros(a).unwrap();
        let x = Matrix::from_vec(5, 6, (0..30).map(|v| v as f64 * 0.1).collect()).unwrap();
        let (logits, cache) = forward(&p, &x).unwrap();
        assert_eq!((logits.rows(), logits.cols()), (5, 6));
        assert!(logits.as_slice().iter().all(|&v| v == 0.0));
        for &pr in cache.probs().as_slice() {
            assert!((pr - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_unit_cell_matches_hand_evaluation() {
        // One input, one unit, two classes.
        let a = arch(1, 1, 1, 2, 1);
        // Layout: wx[i,f,g,o], wh[i,f,g,o], b[i,f,g,o], out_w[2], out_b[2]
        let values = vec![
            0.5, -0.3, 0.8, 1.2, // wx
            0.0, 0.0, 0.0, 0.0, // wh
            0.1, 1.0, -0.2, 0.05, // b
            1.5, -0.7, // out_w
            0.2, -0.1, // out_b
        ];
        let p = ModelParams::unflatten(a, values).unwrap();
        let x = 0.7_f64;
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = sig(0.5 * x + 0.1);
        let g = (0.8 * x - 0.2).tanh();
        let o = sig(1.2 * x + 0.05);
        let c = i * g; // previous cell state is zero
        let h = o * c.tanh();
        let expected = [1.5 * h + 0.2, -0.7 * h - 0.1];
        let (logits, _) = forward(&p, &Matrix::from_rows(&[[x]]).unwrap()).unwrap();
        assert!((logits.get(0, 0) - expected[0]).abs() < 1e-14);
        assert!((logits.get(0, 1) - expected[1]).abs() < 1e-14);
    }

    #[test]
    fn two_step_sequence_matches_hand_evaluation() {
        let a = arch(1, 1, 1, 2, 2);
        let values = vec![
            0.5, -0.3, 0.8, 1.2, // wx
            0.4, 0.6, -0.5, 0.9, // wh
            0.1, 1.0, -0.2, 0.05, // b
            1.5, -0.7, // out_w
            0.2, -0.1, // out_b
        ];
        let p = ModelParams::unflatten(a, values).unwrap();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let (x1, x2) = (0.7, -0.4);
        let i1 = sig(0.5 * x1 + 0.1);
        let g1 = (0.8 * x1 - 0.2).tanh();
        let o1 = sig(1.2 * x1 + 0.05);
        let c1 = i1 * g1;
        let h1 = o1 * c1.tanh();
        let i2 = sig(0.5 * x2 + 0.4 * h1 + 0.1);
        let f2 = sig(-0.3 * x2 + 0.6 * h1 + 1.0);
        let g2 = (0.8 * x2 - 0.5 * h1 - 0.2).tanh();
        let o2 = sig(1.2 * x2 + 0.9 * h1 + 0.05);
        let c2 = f2 * c1 + i2 * g2;
        let h2 = o2 * c2.tanh();
        let (logits, _) = forward(&p, &Matrix::from_rows(&[[x1, x2]]).unwrap()).unwrap();
        assert!((logits.get(0, 0) - (1.5 * h2 + 0.2)).abs() < 1e-14);
        assert!((logits.get(0, 1) - (-0.7 * h2 - 0.1)).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (p, x, y) = random_case(11, arch(3, 2, 3, 3, 3), 4);
        assert!(p.len() <= 200);
        let err = max_rel_error(&p, &x, &y);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn output_bias_gradient_vanishes_at_one_hot_optimum() {
        let a = arch(2, 1, 2, 3, 1);
        let mut p = ModelParams::zeros(a).unwrap();
        // Huge output bias on class 2 drives its probability to exactly 1.
        let nb = p.len();
        p.as_mut_slice()[nb - 1] = 1e3;
        let x = Matrix::from_rows(&[[0.1, 0.2], [0.5, -0.5]]).unwrap();
        let (_, cache) = forward(&p, &x).unwrap();
        let g = backward(&p, &cache, &[2, 2]).unwrap();
        assert!(g.output_bias().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_batch_gives_identical_gradient() {
        let (p, x, y) = random_case(5, arch(2, 2, 3, 2, 2), 3);
        let (_, c1) = forward(&p, &x).unwrap();
        let g1 = backward(&p, &c1, &y).unwrap();
        let x2 = Matrix::vstack(&[&x, &x]).unwrap();
        let y2: Vec<usize> = y.iter().chain(&y).copied().collect();
        let (_, c2) = forward(&p, &x2).unwrap();
        let g2 = backward(&p, &c2, &y2).unwrap();
        for (a, b) in g1.as_slice().iter().zip(g2.as_slice()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn label_out_of_range_rejected() {
        let (p, x, _) = random_case(1, arch(2, 1, 2, 2, 1), 2);
        let (_, c) = forward(&p, &x).unwrap();
        assert!(matches!(
            backward(&p, &c, &[0, 2]),
            Err(Error::Label {
                label: 2,
                classes: 2
            })
        ));
    }

    #[test]
    fn forward_rejects_bad_width() {
        let p = ModelParams::zeros(arch(2, 1, 2, 2, 2)).unwrap();
        assert!(forward(&p, &Matrix::zeros(1, 2)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn finite_differences_agree_on_random_tiny_nets(
            seed in 0u64..1_000_000,
            input in 1usize..4,
            layers in 1usize..3,
            units in 1usize..4,
            out in 2usize..4,
            seq in 1usize..4,
        ) {
            let a = arch(input, layers, units, out, seq);
            prop_assume!(a.param_count() <= 200);
            let (p, x, y) = random_case(seed, a, 3);
            let err = max_rel_error(&p, &x, &y);
            prop_assert!(err < 1e-4, "max relative error {} for {:?}", err, a);
        }

        #[test]
        fn softmax_rows_sum_to_one(vals in proptest::collection::vec(-50.0f64..50.0, 12)) {
            let m = Matrix::from_vec(3, 4, vals).unwrap();
            let s = softmax_rows(&m);
            for r in 0..3 {
                let sum: f64 = s.row(r).iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn flatten_unflatten_round_trips(vals in proptest::collection::vec(-1e6f64..1e6, 80)) {
            let a = arch(2, 1, 3, 2, 1);
            let p = ModelParams::unflatten(a, vals.clone()).unwrap();
            let back = ModelParams::unflatten(a, p.flatten()).unwrap();
            prop_assert_eq!(back.flatten(), vals);
        }
    }
}
