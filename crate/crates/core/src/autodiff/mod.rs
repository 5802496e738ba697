//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! The engine is deliberately small: a define-by-run [`Graph`] records each
//! operation as it executes, and [`Graph::backward`] replays the records in
//! reverse to accumulate gradients into [`Tensor`] handles. Everything a
//! miniature transformer needs is covered — matrix products, broadcasted
//! elementwise arithmetic, row softmax, embedding lookup, layer norm,
//! inverted dropout and a fused softmax/NLL loss — and nothing else.

mod check;
mod graph;
mod tensor;

pub use check::finite_diff_check;
pub use graph::Graph;
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], values: &[f64]) -> Tensor {
        Tensor::new(shape, values.to_vec(), true).unwrap()
    }

    #[test]
    fn matmul_small_product() {
        let mut g = Graph::new();
        let a = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t(&[2, 1], &[5.0, 6.0]);
        let c = g.matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), vec![2, 1]);
        assert_eq!(c.values(), vec![17.0, 39.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let mut g = Graph::new();
        let a = t(&[2, 3], &[0.0; 6]);
        let b = t(&[2, 2], &[0.0; 4]);
        let err = g.matmul(&a, &b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[2, 2]"), "{err}");
    }

    #[test]
    fn matmul_backward_matches_manual_jacobian() {
        let mut g = Graph::new();
        let a = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t(&[2, 2], &[5.0, 6.0, 7.0, 8.0]);
        let c = g.matmul(&a, &b).unwrap();
        let loss = g.sum(&c);
        g.backward(&loss).unwrap();
        // dA = 1 * B^T summed over output columns, dB = A^T * 1.
        assert_eq!(a.grad().unwrap(), vec![11.0, 15.0, 11.0, 15.0]);
        assert_eq!(b.grad().unwrap(), vec![4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn softmax_rows_match_hand_values() {
        let mut g = Graph::new();
        let x = t(&[1, 2], &[2.0f64.ln(), 1.0f64.ln()]);
        let y = g.softmax_rows(&x).unwrap();
        let v = y.values();
        assert!((v[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((v[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_survive_saturation() {
        let mut g = Graph::new();
        let x = t(&[1, 2], &[1000.0, 1000.0]);
        let y = g.softmax_rows(&x).unwrap();
        assert_eq!(y.values(), vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let x = Tensor::randn(&[4, 9], 3.0, &mut rng, false);
            let mut g = Graph::new();
            let y = g.softmax_rows(&x).unwrap();
            let v = y.values();
            for row in v.chunks(9) {
                let s: f64 = row.iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|&p| p >= 0.0));
            }
        }
    }

    #[test]
    fn gather_rows_selects_and_scatter_adds() {
        let mut g = Graph::new();
        let table = t(&[3, 2], &[0.0, 1.0, 10.0, 11.0, 20.0, 21.0]);
        let out = g.gather_rows(&table, &[2, 0, 2]).unwrap();
        assert_eq!(out.values(), vec![20.0, 21.0, 0.0, 1.0, 20.0, 21.0]);
        let loss = g.sum(&out);
        g.backward(&loss).unwrap();
        // Row 2 was gathered twice, row 1 never.
        assert_eq!(table.grad().unwrap(), vec![1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
    }

    #[test]
    fn gather_rows_rejects_out_of_range_id() {
        let mut g = Graph::new();
        let table = t(&[3, 2], &[0.0; 6]);
        let err = g.gather_rows(&table, &[3]).unwrap_err().to_string();
        assert!(err.contains('3') && err.contains("3 rows"), "{err}");
    }

    #[test]
    fn gather_rows_empty_ids_yield_empty_output() {
        let mut g = Graph::new();
        let table = t(&[3, 2], &[0.0; 6]);
        let out = g.gather_rows(&table, &[]).unwrap();
        assert_eq!(out.shape(), vec![0, 2]);
        assert!(out.values().is_empty());
    }

    #[test]
    fn layer_norm_standardizes_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::randn(&[2, 16], 2.0, &mut rng, false);
        let gain = Tensor::new(&[16], vec![1.0; 16], false).unwrap();
        let bias = Tensor::zeros(&[16], false);
        let mut g = Graph::new();
        let y = g.layer_norm(&x, &gain, &bias, 1e-5).unwrap();
        for row in y.values().chunks(16) {
            let mean: f64 = row.iter().sum::<f64>() / 16.0;
            let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-12, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "var {var}");
        }
    }

    #[test]
    fn dropout_is_identity_in_eval_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut g = Graph::new();
        let y = g.dropout(&x, 0.1, false, &mut rng).unwrap();
        assert!(y.same_storage(&x));
        let y0 = g.dropout(&x, 0.0, true, &mut rng).unwrap();
        assert!(y0.same_storage(&x));
    }

    #[test]
    fn dropout_preserves_mean_at_half_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let x = Tensor::new(&[1, n], vec![1.0; n], false).unwrap();
        let mut g = Graph::new();
        let y = g.dropout(&x, 0.5, true, &mut rng).unwrap();
        let mean: f64 = y.values().iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn dropout_rejects_bad_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = t(&[1, 2], &[1.0, 2.0]);
        let mut g = Graph::new();
        assert!(g.dropout(&x, 1.0, true, &mut rng).is_err());
        assert!(g.dropout(&x, -0.1, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_backward_is_the_saved_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::new(&[1, 64], vec![1.0; 64], true).unwrap();
        let mut g = Graph::new();
        let y = g.dropout(&x, 0.25, true, &mut rng).unwrap();
        let loss = g.sum(&y);
        g.backward(&loss).unwrap();
        // d(sum(mask .* x))/dx = mask, whose entries are 0 or 1/(1-rate).
        let grad = x.grad().unwrap();
        assert_eq!(grad, y.values());
        assert!(grad.iter().all(|&v| v == 0.0 || (v - 4.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn nll_matches_independent_log_sum_exp() {
        let mut g = Graph::new();
        let logits = t(&[2, 2], &[1.0, 2.0, 3.0, 0.0]);
        let loss = g.nll_from_logits(&logits, &[1, 0]).unwrap();
        // Frozen from the numeric oracle: mean of ln(1+e^-1) and ln(1+e^-3).
        assert!((loss.item() - 0.18092451954598254).abs() < 1e-12);
        // Cross-check with an in-test implementation that does not share code.
        let rows = [[1.0f64, 2.0], [3.0, 0.0]];
        let labels = [1usize, 0];
        let expect: f64 = rows
            .iter()
            .zip(labels)
            .map(|(r, y)| {
                let m = r[0].max(r[1]);
                m + ((r[0] - m).exp() + (r[1] - m).exp()).ln() - r[y]
            })
            .sum::<f64>()
            / 2.0;
        assert!((loss.item() - expect).abs() < 1e-15);
    }

    #[test]
    fn nll_rejects_bad_labels_and_shapes() {
        let mut g = Graph::new();
        let logits = t(&[2, 2], &[0.0; 4]);
        let err = g.nll_from_logits(&logits, &[0, 2]).unwrap_err().to_string();
        assert!(err.contains("label 2"), "{err}");
        assert!(g.nll_from_logits(&logits, &[0]).is_err());
    }

    #[test]
    fn tanh_gradient_at_half() {
        let x = t(&[1], &[0.5]);
        let mut g = Graph::new();
        let y = g.tanh(&x);
        let loss = g.sum(&y);
        g.backward(&loss).unwrap();
        assert!((x.grad().unwrap()[0] - 0.7864477329659274).abs() < 1e-12);
    }

    #[test]
    fn gelu_reference_points() {
        let x = t(&[2], &[0.0, 1.0]);
        let mut g = Graph::new();
        let y = g.gelu(&x);
        let v = y.values();
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 0.8411919906082768).abs() < 1e-12);
    }

    #[test]
    fn broadcast_add_column_sums_vector_gradient() {
        let mut g = Graph::new();
        let m = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let v = t(&[3], &[10.0, 20.0, 30.0]);
        let y = g.add(&m, &v).unwrap();
        assert_eq!(y.values(), vec![11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
        let loss = g.sum(&y);
        g.backward(&loss).unwrap();
        assert_eq!(v.grad().unwrap(), vec![2.0, 2.0, 2.0]);
        assert_eq!(m.grad().unwrap(), vec![1.0; 6]);
    }

    #[test]
    fn broadcast_mul_gradients() {
        let mut g = Graph::new();
        let m = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let v = t(&[2], &[5.0, 7.0]);
        let y = g.mul(&v, &m).unwrap(); // argument order is normalized
        assert_eq!(y.values(), vec![5.0, 14.0, 15.0, 28.0]);
        let loss = g.sum(&y);
        g.backward(&loss).unwrap();
        assert_eq!(v.grad().unwrap(), vec![4.0, 6.0]);
        assert_eq!(m.grad().unwrap(), vec![5.0, 7.0, 5.0, 7.0]);
    }

    #[test]
    fn concat_rows_and_cols_roundtrip_gradients() {
        let mut g = Graph::new();
        let a = t(&[1, 2], &[1.0, 2.0]);
        let b = t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]);
        let rows = g.concat_rows(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(rows.shape(), vec![3, 2]);
        assert_eq!(rows.values(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let doubled = g.scale(&rows, 2.0);
        let loss = g.sum(&doubled);
        g.backward(&loss).unwrap();
        assert_eq!(a.grad().unwrap(), vec![2.0, 2.0]);
        assert_eq!(b.grad().unwrap(), vec![2.0; 4]);

        let mut g2 = Graph::new();
        let c = t(&[2, 1], &[1.0, 2.0]);
        let d = t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]);
        let cols = g2.concat_cols(&[c.clone(), d.clone()]).unwrap();
        assert_eq!(cols.shape(), vec![2, 3]);
        assert_eq!(cols.values(), vec![1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let loss2 = g2.sum(&cols);
        g2.backward(&loss2).unwrap();
        assert_eq!(c.grad().unwrap(), vec![1.0, 1.0]);
        assert_eq!(d.grad().unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn transpose_backward_transposes_gradient() {
        let mut g = Graph::new();
        let a = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let at = g.transpose(&a).unwrap();
        assert_eq!(at.shape(), vec![3, 2]);
        assert_eq!(at.values(), vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let weights = t(&[3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let weighted = g.mul(&at, &weights).unwrap();
        let loss = g.sum(&weighted);
        g.backward(&loss).unwrap();
        assert_eq!(a.grad().unwrap(), vec![1.0, 3.0, 5.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn repeated_backward_accumulates_until_zeroed() {
        let x = t(&[1], &[3.0]);
        let mut g = Graph::new();
        let y = g.mul(&x, &x).unwrap();
        let loss = g.sum(&y);
        g.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![6.0]);
        g.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![12.0]);
        x.zero_grad();
        assert!(x.grad().is_none());
        g.backward(&loss).unwrap();
        assert_eq!(x.grad().unwrap(), vec![6.0]);
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let x = t(&[1, 2], &[1.0, 2.0]);
        let mut g = Graph::new();
        let y = g.scale(&x, 2.0);
        let err = g.backward(&y).unwrap_err().to_string();
        assert!(err.contains("scalar"), "{err}");
    }

    #[test]
    fn quadratic_gradient_matches_finite_difference() {
        let x = t(&[1], &[2.0]);
        let params = [x.clone()];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = finite_diff_check(
            &params,
            |g| {
                let y = g.mul(&x, &x)?;
                Ok(g.sum(&y))
            },
            1e-5,
            10,
            &mut rng,
        )
        .unwrap();
        assert!(err <= 1e-8, "rel err {err}");
    }

    #[test]
    fn identical_seeds_give_bit_identical_values_and_grads() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let x = Tensor::randn(&[4, 4], 1.0, &mut rng, true);
            let w = Tensor::randn(&[4, 2], 1.0, &mut rng, true);
            let mut g = Graph::new();
            let h = g.matmul(&x, &w).unwrap();
            let s = g.softmax_rows(&h).unwrap();
            let loss = g.sum(&s);
            g.backward(&loss).unwrap();
            (
                loss.item().to_bits(),
                x.grad().unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                w.grad().unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            )
        };
        assert_eq!(run(), run());
    }
}
