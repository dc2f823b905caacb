//! Dense `f64` tensors with a tape-based reverse-mode differentiator.
//!
//! All model math in this crate is expressed as [`Graph`] operations. A graph
//! lives for one forward/backward pass; parameters stay in a [`ParamSet`] and
//! are referenced from the graph without copying.

mod graph;
mod params;
mod tensor;

pub use graph::{GradBuf, Gradients, Graph, Var};
pub use params::{ParamId, ParamSet};
pub use tensor::Tensor;


use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("expected a single-element tensor, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("unsupported tensor rank for shape {0:?}")]
    UnsupportedRank(Vec<usize>),
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn matmul_identity_and_hand_product() {
        let mut g = Graph::new();
        let i2 = g.leaf(&Tensor::identity(2));
        let v = g.leaf(&Tensor::vector(vec![3.0, -4.0]));
        let out = g.matmul(i2, v).unwrap();
        assert_eq!(g.value(out), &[3.0, -4.0]);

        let a = g.leaf(&Tensor::matrix(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let ones = g.leaf(&Tensor::matrix(&[vec![1.0], vec![1.0]]).unwrap());
        let out = g.matmul(a, ones).unwrap();
        assert_eq!(g.shape(out), &[2, 1]);
        assert_eq!(g.value(out), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let mut g = Graph::new();
        let a = g.leaf(&Tensor::zeros(&[2, 3]));
        let b = g.leaf(&Tensor::zeros(&[2, 3]));
        assert!(matches!(
            g.matmul(a, b),
            Err(TensorError::ShapeMismatch { op: "matmul", .. })
        ));
    }

    #[test]
    fn softmax_examples() {
        let mut g = Graph::new();
        let z = g.leaf(&Tensor::vector(vec![0.0; 3]));
        let s = g.softmax(z).unwrap();
        assert!(close(g.value(s), &[1.0 / 3.0; 3], 1e-15));

        let x = g.leaf(&Tensor::vector(vec![1f64.ln(), 2f64.ln(), 3f64.ln()]));
        let s = g.softmax(x).unwrap();
        assert!(close(g.value(s), &[1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0], 1e-15));

        let big = g.leaf(&Tensor::vector(vec![1000.0, 0.0]));
        let s = g.softmax(big).unwrap();
        assert!(close(g.value(s), &[1.0, 0.0], 1e-12));
    }

    #[test]
    fn elementwise_examples() {
        let mut g = Graph::new();
        let z = g.leaf(&Tensor::scalar(0.0));
        let s = g.sigmoid(z).unwrap();
        let t = g.tanh(z).unwrap();
        assert_eq!(g.scalar(s), 0.5);
        assert_eq!(g.scalar(t), 0.0);
        let a = g.leaf(&Tensor::vector(vec![1.0; 3]));
        let b = g.leaf(&Tensor::vector(vec![2.0; 4]));
        let c = g.concat(&[a, b]).unwrap();
        assert_eq!(g.shape(c), &[7]);
        assert!(g.add(a, b).is_err());
        assert!(g.mul(a, b).is_err());
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::new();
        let w = g.leaf(&Tensor::vector(vec![1.0, 2.0]).with_requires_grad(true));
        let sq = g.mul(w, w).unwrap();
        let loss = g.sum(sq).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.wrt(w).unwrap(), vec![2.0, 4.0]);
    }

    #[test]
    fn constant_loss_has_no_gradients() {
        let mut g = Graph::new();
        let w = g.leaf(&Tensor::vector(vec![1.0, 2.0]));
        let loss = g.sum(w).unwrap();
        let grads = g.backward(loss).unwrap();
        assert!(grads.wrt(w).is_none());
    }

    #[test]
    fn backward_needs_scalar() {
        let mut g = Graph::new();
        let w = g.leaf(&Tensor::vector(vec![1.0, 2.0]).with_requires_grad(true));
        assert!(matches!(g.backward(w), Err(TensorError::NotScalar(_))));
    }

    #[test]
    fn log_of_zero_is_an_error() {
        let mut g = Graph::new();
        let z = g.leaf(&Tensor::scalar(0.0));
        assert_eq!(g.log(z), Err(TensorError::NonFinite("log")));
    }

    #[test]
    fn param_gradients_accumulate_until_zeroed() {
        let mut ps = ParamSet::new();
        let id = ps.add("w", Tensor::vector(vec![1.0, -1.0]));
        for _ in 0..2 {
            let grads = {
                let mut g = Graph::with_params(&ps);
                let w = g.param(id);
                let sq = g.mul(w, w).unwrap();
                let loss = g.sum(sq).unwrap();
                g.backward(loss).unwrap()
            };
            ps.accumulate(&grads);
        }
        assert_eq!(ps.get(id).grad().unwrap(), &[4.0, -4.0]);
        ps.zero_grad();
        assert_eq!(ps.get(id).grad().unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn gather_produces_row_sparse_param_grads() {
        let mut ps = ParamSet::new();
        let id = ps.add("emb", Tensor::from_fn(&[5, 2], |i| i as f64));
        let grads = {
            let mut g = Graph::with_params(&ps);
            let e = g.param(id);
            let rows = g.gather_rows(e, &[3, 1, 3]).unwrap();
            let loss = g.sum(rows).unwrap();
            g.backward(loss).unwrap()
        };
        let (_, buf) = grads.params().next().unwrap();
        match buf {
            GradBuf::Rows { rows, .. } => {
                assert_eq!(rows.keys().copied().collect::<Vec<_>>(), vec![1, 3]);
                assert_eq!(rows[&3], vec![2.0, 2.0]);
            }
            GradBuf::Dense(_) => panic!("expected row-sparse gradient"),
        }
        ps.accumulate(&grads);
        assert_eq!(
            ps.get(id).grad().unwrap(),
            &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 2.0, 2.0, 0.0, 0.0]
        );
    }

    #[test]
    fn inference_graph_records_no_param_grads() {
        let mut ps = ParamSet::new();
        let id = ps.add("w", Tensor::vector(vec![1.0]));
        let mut g = Graph::inference(&ps);
        let w = g.param(id);
        let loss = g.sum(w).unwrap();
        assert!(g.backward(loss).unwrap().param(id).is_none());
    }

    #[test]
    fn grad_clip_bounds_global_norm() {
        let mut ps = ParamSet::new();
        let a = ps.add("a", Tensor::vector(vec![0.0; 2]));
        let b = ps.add("b", Tensor::vector(vec![0.0; 1]));
        ps.get_mut(a).accumulate_grad(&[30.0, 40.0]);
        ps.get_mut(b).accumulate_grad(&[0.0]);
        let before = ps.clip_grad_norm(5.0);
        assert!((before - 50.0).abs() < 1e-12);
        assert!(ps.grad_norm() <= 5.0 + 1e-12);
    }

    // Random composite graphs over the whole op set, checked against
    // central finite differences.
    fn random_composite(g: &mut Graph, x: Var, m: Var, seed: u64) -> Result<Var, TensorError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = x; // [4]
        for _ in 0..rng.gen_range(2..6) {
            v = match rng.gen_range(0..9) {
                0 => g.tanh(v)?,
                1 => g.sigmoid(v)?,
                2 => {
                    let h = g.matmul(m, v)?; // [4x4]·[4]
                    g.add(h, v)?
                }
                3 => g.softmax(v)?,
                4 => g.mul(v, v)?,
                5 => {
                    let a = g.slice(v, 0, 2)?;
                    let b = g.slice(v, 2, 2)?;
                    g.concat(&[b, a])?
                }
                6 => {
                    let s = g.pick(v, 1)?;
                    let t = g.sigmoid(s)?;
                    g.mul_scalar(v, t)?
                }
                7 => {
                    let st = g.stack_rows(&[v, v])?;
                    let mt = g.transpose(m)?;
                    let p = g.matmul(st, mt)?;
                    let r = g.row(p, 1)?;
                    g.scale(r, 0.5)?
                }
                _ => {
                    let sc = g.scatter_add(v, &[0, 2, 2, 5], 6)?;
                    let pd = g.pad(v, 6)?;
                    let s = g.add(sc, pd)?;
                    let om = g.one_minus(s)?;
                    g.slice(om, 1, 4)?
                }
            };
        }
        let sq = g.mul(v, v)?;
        let sm = g.softmax(sq)?;
        let p = g.pick(sm, 0)?;
        let lg = g.log(p)?;
        let s = g.sum(v)?;
        g.sub(lg, s)
    }

    fn eval(xv: &[f64], mv: &[f64], seed: u64) -> f64 {
        let mut g = Graph::new();
        let x = g.leaf(&Tensor::vector(xv.to_vec()));
        let m = g.leaf(&Tensor::new(vec![4, 4], mv.to_vec()).unwrap());
        let out = random_composite(&mut g, x, m, seed).unwrap();
        g.scalar(out)
    }

    fn rel_err(a: f64, n: f64) -> f64 {
        (a - n).abs() / (a.abs() + n.abs()).max(1e-6)
    }

    #[test]
    fn random_graphs_match_central_differences() {
        let h = 1e-5;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let xv: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mv: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut g = Graph::new();
            let x = g.leaf(&Tensor::vector(xv.clone()).with_requires_grad(true));
            let m = g.leaf(&Tensor::new(vec![4, 4], mv.clone()).unwrap().with_requires_grad(true));
            let out = random_composite(&mut g, x, m, seed).unwrap();
            let grads = g.backward(out).unwrap();
            let gx = grads.wrt(x).unwrap_or(vec![0.0; 4]);
            let gm = grads.wrt(m).unwrap_or(vec![0.0; 16]);
            for i in 0..4 {
                let (mut p, mut q) = (xv.clone(), xv.clone());
                p[i] += h;
                q[i] -= h;
                let num = (eval(&p, &mv, seed) - eval(&q, &mv, seed)) / (2.0 * h);
                assert!(rel_err(gx[i], num) < 1e-4, "seed {seed} x[{i}]: {} vs {num}", gx[i]);
            }
            for i in 0..16 {
                let (mut p, mut q) = (mv.clone(), mv.clone());
                p[i] += h;
                q[i] -= h;
                let num = (eval(&xv, &p, seed) - eval(&xv, &q, seed)) / (2.0 * h);
                assert!(rel_err(gm[i], num) < 1e-4, "seed {seed} m[{i}]: {} vs {num}", gm[i]);
            }
        }
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(xs in prop::collection::vec(-500.0f64..500.0, 1..40)) {
            let mut g = Graph::new();
            let x = g.leaf(&Tensor::vector(xs));
            let s = g.softmax(x).unwrap();
            let total: f64 = g.value(s).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(g.value(s).iter().all(|v| *v >= 0.0));
        }
    }
}
