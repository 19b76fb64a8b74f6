use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::Vector;
use crate::scalar::Real;

use super::{check_theta, Batch, Dataset, Partition, Problem};

fn batch_rows<'a, T: Real>(data: &'a Dataset<T>, batch: &'a Batch) -> Result<&'a [usize]> {
    let rows = match batch {
        Batch::Full | Batch::Ticket(_) => data.partition(Partition::Train),
        Batch::Rows(rows) => rows.as_slice(),
    };
    data.check_rows(rows)?;
    Ok(rows)
}

/// `ln(1 + eˣ)` without overflow.
fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Binary logistic regression with an optional `l2/2 · ‖w‖²` penalty on the
/// weights (not the bias). Parameters are `[w_1, …, w_p, b]`.
#[derive(Debug, Clone)]
pub struct Logistic<T> {
    data: Arc<Dataset<T>>,
    l2: T,
}

pub fn logistic_problem<T: Real>(data: Arc<Dataset<T>>, l2: T) -> Result<Logistic<T>> {
    if data.n_classes() != 2 {
        return Err(Error::InvalidArgument(format!(
            "logistic regression needs 2 classes, dataset has {}",
            data.n_classes()
        )));
    }
    if !(l2 >= T::zero() && l2.is_finite()) {
        return Err(Error::InvalidArgument("l2 must be finite and >= 0".into()));
    }
    Ok(Logistic { data, l2 })
}

impl<T: Real> Logistic<T> {
    fn logit(&self, theta: &Vector<T>, row: usize) -> T {
        let p = self.data.n_features();
        let w = &theta.as_slice()[..p];
        let x = self.data.row(row);
        w.iter().zip(x).map(|(&a, &b)| a * b).sum::<T>() + theta[p]
    }

    fn penalty(&self, theta: &Vector<T>) -> T {
        let p = self.data.n_features();
        let sq: T = theta.as_slice()[..p].iter().map(|&w| w * w).sum();
        T::lit(0.5) * self.l2 * sq
    }
}

impl<T: Real> Problem<T> for Logistic<T> {
    fn dim(&self) -> usize {
        self.data.n_features() + 1
    }

    fn loss(&self, theta: &Vector<T>, batch: &Batch) -> Result<T> {
        check_theta(self.dim(), theta)?;
        let rows = batch_rows(&self.data, batch)?;
        let total: T = rows
            .iter()
            .map(|&r| {
                let z = self.logit(theta, r);
                let y = T::lit(self.data.label(r) as f64);
                softplus(z) - y * z
            })
            .sum();
        Ok(total / T::lit(rows.len() as f64) + self.penalty(theta))
    }

    fn grad(&self, theta: &Vector<T>, batch: &Batch) -> Result<Vector<T>> {
        check_theta(self.dim(), theta)?;
        let rows = batch_rows(&self.data, batch)?;
        let p = self.data.n_features();
        let mut g = vec![T::zero(); p + 1];
        for &r in rows {
            let y = T::lit(self.data.label(r) as f64);
            let residual = sigmoid(self.logit(theta, r)) - y;
            for (gj, &xj) in g.iter_mut().zip(self.data.row(r)) {
                *gj = *gj + residual * xj;
            }
            g[p] = g[p] + residual;
        }
        let scale = T::one() / T::lit(rows.len() as f64);
        for (j, gj) in g.iter_mut().enumerate() {
            *gj = *gj * scale;
            if j < p {
                *gj = *gj + self.l2 * theta[j];
            }
        }
        Vector::new(g)
    }

    fn dataset(&self) -> Option<&Dataset<T>> {
        Some(&self.data)
    }

    fn predict(&self, theta: &Vector<T>, row: usize) -> Result<usize> {
        check_theta(self.dim(), theta)?;
        // z = 0 is a tie and resolves to class 0
        Ok(usize::from(self.logit(theta, row) > T::zero()))
    }
}

/// Fully connected classifier: tanh hidden layers, softmax cross-entropy output.
///
/// Parameter layout, layer by layer from input to output: the weight matrix
/// in row-major order (`out × in`, row `j` holds the weights into unit `j`)
/// followed by the `out` biases. With no hidden layers this is multinomial
/// logistic regression.
#[derive(Debug, Clone)]
pub struct Mlp<T> {
    data: Arc<Dataset<T>>,
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    dim: usize,
}

pub fn mlp_problem<T: Real>(data: Arc<Dataset<T>>, hidden: &[usize]) -> Result<Mlp<T>> {
    if hidden.contains(&0) {
        return Err(Error::InvalidArgument("hidden layer widths must be >= 1".into()));
    }
    if data.n_classes() < 2 {
        return Err(Error::InvalidArgument(format!(
            "classifier needs at least 2 classes, dataset has {}",
            data.n_classes()
        )));
    }
    let mut sizes = vec![data.n_features()];
    sizes.extend_from_slice(hidden);
    sizes.push(data.n_classes());
    let mut offsets = Vec::with_capacity(sizes.len());
    let mut dim = 0;
    for w in sizes.windows(2) {
        offsets.push(dim);
        dim += w[1] * w[0] + w[1];
    }
    Ok(Mlp {
        data,
        sizes,
        offsets,
        dim,
    })
}

impl<T: Real> Mlp<T> {
    /// Layer widths including input and output.
    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Weight and bias slices of layer `l`.
    fn layer<'a>(&self, params: &'a [T], l: usize) -> (&'a [T], &'a [T]) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let start = self.offsets[l];
        let w_end = start + n_in * n_out;
        (&params[start..w_end], &params[w_end..w_end + n_out])
    }

    /// Activations of every layer; the last entry holds the logits.
    fn forward(&self, params: &[T], x: &[T]) -> Vec<Vec<T>> {
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(params, l);
            let input = &acts[l];
            let n_in = self.sizes[l];
            let last = l + 1 == self.n_layers();
            let out: Vec<T> = b
                .iter()
                .enumerate()
                .map(|(j, &bj)| {
                    let row = &w[j * n_in..(j + 1) * n_in];
                    let z = row.iter().zip(input).map(|(&a, &b)| a * b).sum::<T>() + bj;
                    if last {
                        z
                    } else {
                        z.tanh()
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    fn log_softmax_at(logits: &[T], class: usize) -> T {
        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln() + max;
        logits[class] - lse
    }
}

impl<T: Real> Problem<T> for Mlp<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn loss(&self, theta: &Vector<T>, batch: &Batch) -> Result<T> {
        check_theta(self.dim, theta)?;
        let rows = batch_rows(&self.data, batch)?;
        let params = theta.as_slice();
        let total: T = rows
            .iter()
            .map(|&r| {
                let acts = self.forward(params, self.data.row(r));
                -Self::log_softmax_at(acts.last().expect("output layer"), self.data.label(r))
            })
            .sum();
        Ok(total / T::lit(rows.len() as f64))
    }

    fn grad(&self, theta: &Vector<T>, batch: &Batch) -> Result<Vector<T>> {
        check_theta(self.dim, theta)?;
        let rows = batch_rows(&self.data, batch)?;
        let params = theta.as_slice();
        let mut g = vec![T::zero(); self.dim];
        for &r in rows {
            let acts = self.forward(params, self.data.row(r));
            let logits = acts.last().expect("output layer");
            let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
            let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
            let norm: T = exps.iter().copied().sum();
            // dL/dz at the output: softmax − one-hot
            let mut delta: Vec<T> = exps.iter().map(|&e| e / norm).collect();
            delta[self.data.label(r)] = delta[self.data.label(r)] - T::one();

            for l in (0..self.n_layers()).rev() {
                let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
                let start = self.offsets[l];
                let input = &acts[l];
                for j in 0..n_out {
                    let row = start + j * n_in;
                    for i in 0..n_in {
                        g[row + i] = g[row + i] + delta[j] * input[i];
                    }
                    let bias = start + n_in * n_out + j;
                    g[bias] = g[bias] + delta[j];
                }
                if l > 0 {
                    let (w, _) = self.layer(params, l);
                    delta = (0..n_in)
                        .map(|i| {
                            let back: T = (0..n_out).map(|j| w[j * n_in + i] * delta[j]).sum();
                            back * (T::one() - input[i] * input[i])
                        })
                        .collect();
                }
            }
        }
        let scale = T::one() / T::lit(rows.len() as f64);
        Vector::new(g.into_iter().map(|v| v * scale).collect())
    }

    fn dataset(&self) -> Option<&Dataset<T>> {
        Some(&self.data)
    }

    fn predict(&self, theta: &Vector<T>, row: usize) -> Result<usize> {
        check_theta(self.dim, theta)?;
        let acts = self.forward(theta.as_slice(), self.data.row(row));
        let logits = acts.last().expect("output layer");
        let mut best = 0;
        for (k, &z) in logits.iter().enumerate().skip(1) {
            if z > logits[best] {
                best = k;
            }
        }
        Ok(best)
    }

    /// Glorot-uniform weights, zero biases.
    fn initial_point(&self, seed: u64) -> Vector<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![T::zero(); self.dim];
        for l in 0..self.n_layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            let start = self.offsets[l];
            for p in &mut params[start..start + n_in * n_out] {
                *p = T::lit(rng.random_range(-limit..limit));
            }
        }
        Vector::new(params).expect("finite initialisation")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{accuracy, gradient_check, two_moons};

    fn symmetric_binary() -> Arc<Dataset<f64>> {
        // each class holds both x and −x, so Σ (½ − y) x vanishes
        let rows = vec![vec![1.0, 2.0], vec![-1.0, -2.0], vec![0.5, -3.0], vec![-0.5, 3.0]];
        Arc::new(Dataset::new(rows, vec![0, 0, 1, 1], None).unwrap())
    }

    #[test]
    fn logistic_uniform_predictor() {
        let p = logistic_problem(symmetric_binary(), 0.0).unwrap();
        let zero = Vector::zeros(3);
        let l = p.loss(&zero, &Batch::Full).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn logistic_symmetric_gradient_vanishes() {
        let p = logistic_problem(symmetric_binary(), 0.0).unwrap();
        let g = p.grad(&Vector::zeros(3), &Batch::Full).unwrap();
        assert!(g.norm() < 1e-15, "{g:?}");
    }

    #[test]
    fn logistic_rejects_multiclass() {
        let d = Arc::new(Dataset::new(vec![vec![1.0]; 3], vec![0, 1, 2], None).unwrap());
        assert!(logistic_problem(d, 0.0).is_err());
    }

    #[test]
    fn logistic_gradcheck_with_l2() {
        let d = Arc::new(two_moons::<f64>(60, 0.2, 2).unwrap());
        let p = logistic_problem(d, 0.3).unwrap();
        assert!(gradient_check(&p, 20, 11, 1e-5).unwrap() < 1e-5);
    }

    #[test]
    fn logistic_zero_theta_accuracy_half_on_balanced() {
        let p = logistic_problem(symmetric_binary(), 0.0).unwrap();
        let acc = accuracy(&p, &Vector::zeros(3), Partition::Train).unwrap();
        assert_eq!(acc, 0.5);
    }

    #[test]
    fn mlp_layout_and_dim() {
        let d = Arc::new(two_moons::<f64>(20, 0.1, 0).unwrap());
        let m = mlp_problem(d.clone(), &[4]).unwrap();
        assert_eq!(m.dim(), 2 * 4 + 4 + 4 * 2 + 2);
        assert_eq!(m.layer_sizes(), &[2, 4, 2]);
        let lin = mlp_problem(d, &[]).unwrap();
        assert_eq!(lin.dim(), 2 * 2 + 2);
        assert!(mlp_problem(Arc::new(two_moons::<f64>(20, 0.1, 0).unwrap()), &[3, 0]).is_err());
    }

    #[test]
    fn mlp_zero_params_uniform_loss() {
        let rows = vec![vec![1.0], vec![2.0], vec![3.0]];
        let d = Arc::new(Dataset::new(rows, vec![0, 1, 2], None).unwrap());
        let m = mlp_problem(d, &[5, 3]).unwrap();
        let l = m.loss(&Vector::zeros(m.dim()), &Batch::Full).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-15);
        // argmax tie resolves to class 0
        assert_eq!(m.predict(&Vector::zeros(m.dim()), 1).unwrap(), 0);
    }

    #[test]
    fn mlp_gradcheck_2_4_2() {
        let d = Arc::new(two_moons::<f64>(40, 0.2, 5).unwrap());
        let m = mlp_problem(d, &[4]).unwrap();
        assert!(gradient_check(&m, 20, 3, 1e-5).unwrap() < 1e-5);
    }

    #[test]
    fn mlp_gradcheck_deep_multiclass() {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 * 0.1, (i % 3) as f64 - 1.0, 0.5]).collect();
        let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let d = Arc::new(Dataset::new(rows, labels, None).unwrap());
        let m = mlp_problem(d, &[3, 4]).unwrap();
        assert!(gradient_check(&m, 20, 8, 1e-5).unwrap() < 1e-5);
    }

    #[test]
    fn mlp_memorizes_single_example() {
        let d = Arc::new(Dataset::new(vec![vec![0.3, -0.8]], vec![1], Some(2)).unwrap());
        let m = mlp_problem(d, &[4]).unwrap();
        let mut theta = m.initial_point(1);
        for _ in 0..10_000 {
            let g = m.grad(&theta, &Batch::Full).unwrap();
            theta = crate::math::axpy(-0.1, &g, &theta).unwrap();
        }
        assert!(m.full_eval(&theta).unwrap() < 1e-3);
    }

    #[test]
    fn glorot_init_is_seeded_and_bounded() {
        let d = Arc::new(two_moons::<f64>(20, 0.1, 0).unwrap());
        let m = mlp_problem(d, &[16]).unwrap();
        let a = m.initial_point(4);
        assert_eq!(a, m.initial_point(4));
        assert_ne!(a, m.initial_point(5));
        let limit = (6.0f64 / 18.0).sqrt();
        // first layer weights then 16 zero biases
        assert!(a.as_slice()[..32].iter().all(|w| w.abs() <= limit));
        assert!(a.as_slice()[32..48].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn rows_batch_out_of_bounds_is_error() {
        let d = Arc::new(two_moons::<f64>(20, 0.1, 0).unwrap());
        let m = mlp_problem(d, &[2]).unwrap();
        assert!(m.loss(&Vector::zeros(m.dim()), &Batch::Rows(vec![20])).is_err());
        assert!(m.loss(&Vector::zeros(m.dim()), &Batch::Rows(vec![])).is_err());
    }
}
