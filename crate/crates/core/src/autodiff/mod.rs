//! Minimal reverse-mode differentiation engine.
//!
//! All trainable objectives in the crate are built from the ops in
//! [`tape::Tape`]; gradients come from one reverse sweep and are verified
//! against central finite differences in the test suites.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{check_gradients, near_kink, GradCheckFailure};
pub use params::{
    glorot_init, normalize_rows, uniform_init, unit_rows_init, ParamId, ParamSlot, ParamStore,
};
pub use tape::{Gradients, NeighborIndex, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::rc::Rc;

    fn rand_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        uniform_init(rng, rows, cols, 1.0)
    }

    #[test]
    fn add_sub_mul_scale_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inputs = vec![rand_tensor(&mut rng, 1, 5), rand_tensor(&mut rng, 1, 5)];
        check_gradients(&inputs, 1e-6, 1e-6, 1e-12, |t, ins| {
            let a = t.leaf(ins[0].clone());
            let b = t.leaf(ins[1].clone());
            let s = t.add(a, b);
            let d = t.sub(s, b);
            let m = t.mul(d, b);
            let sc = t.scale(m, 0.7);
            let loss = t.dot(sc, sc);
            (loss, vec![a, b])
        })
        .unwrap();
    }

    #[test]
    fn broadcast_scalar_ops_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inputs = vec![rand_tensor(&mut rng, 1, 4), Tensor::scalar(0.9)];
        check_gradients(&inputs, 1e-6, 1e-6, 1e-12, |t, ins| {
            let v = t.leaf(ins[0].clone());
            let s = t.leaf(ins[1].clone());
            let a = t.smul(s, v);
            let b = t.sdiv(a, s);
            let c = t.smul(s, b);
            let loss = t.dot(c, c);
            (loss, vec![v, s])
        })
        .unwrap();
    }

    #[test]
    fn norms_and_relu_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // Keep coordinates away from kinks.
        let mut v = rand_tensor(&mut rng, 1, 6);
        for x in v.data_mut() {
            if x.abs() < 0.1 {
                *x += 0.3;
            }
        }
        let inputs = vec![v];
        check_gradients(&inputs, 1e-6, 1e-5, 1e-12, |t, ins| {
            let v = t.leaf(ins[0].clone());
            let r = t.relu(v);
            let l1 = t.l1_norm(v);
            let l2 = t.l2_norm(r);
            let loss_parts = t.stack_scalars(vec![l1, l2]);
            let loss = t.l1_norm(loss_parts);
            (loss, vec![v])
        })
        .unwrap();
    }

    #[test]
    fn softmax_logsumexp_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inputs = vec![rand_tensor(&mut rng, 3, 5), rand_tensor(&mut rng, 1, 5)];
        check_gradients(&inputs, 1e-6, 1e-6, 1e-12, |t, ins| {
            let m = t.leaf(ins[0].clone());
            let w = t.leaf(ins[1].clone());
            let sm = t.row_softmax(m);
            let pick = t.matvec(sm, w);
            let lse = t.logsumexp(pick);
            (lse, vec![m, w])
        })
        .unwrap();
    }

    #[test]
    fn cross_entropy_and_bce_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inputs = vec![rand_tensor(&mut rng, 4, 7), Tensor::scalar(0.4)];
        check_gradients(&inputs, 1e-6, 1e-6, 1e-12, |t, ins| {
            let logits = t.leaf(ins[0].clone());
            let z = t.leaf(ins[1].clone());
            let ce = t.mean_cross_entropy_rows(logits, vec![0, 3, 6, 2]);
            let bce = t.sigmoid_bce(z, 1.0);
            let sp = t.softplus_neg(z);
            let stack = t.stack_scalars(vec![ce, bce, sp]);
            let loss = t.l1_norm(stack);
            (loss, vec![logits, z])
        })
        .unwrap();
    }

    #[test]
    fn matrix_op_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let inputs = vec![
            rand_tensor(&mut rng, 3, 4),
            rand_tensor(&mut rng, 4, 2),
            rand_tensor(&mut rng, 5, 4),
            rand_tensor(&mut rng, 1, 4),
            rand_tensor(&mut rng, 1, 3),
        ];
        check_gradients(&inputs, 1e-6, 1e-6, 1e-12, |t, ins| {
            let a = t.leaf(ins[0].clone());
            let b = t.leaf(ins[1].clone());
            let c = t.leaf(ins[2].clone());
            let bias = t.leaf(ins[3].clone());
            let w = t.leaf(ins[4].clone());
            let nn = t.matmul_nn(a, b); // 3×2
            let nt = t.matmul_nt(a, c); // 3×5
            let ab = t.add_row_broadcast(a, bias); // 3×4
            let mv = t.matvec(ab, bias); // 3
            let vm = t.vecmat(w, nt); // 5
            let parts = vec![
                t.l1_norm(nn),
                t.l1_norm(mv),
                t.l1_norm(vm),
            ];
            let stack = t.stack_scalars(parts);
            let loss = t.dot(stack, stack);
            (loss, vec![a, b, c, bias, w])
        })
        .unwrap();
    }

    #[test]
    fn gather_pool_concat_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let inputs = vec![rand_tensor(&mut rng, 6, 3)];
        check_gradients(&inputs, 1e-6, 1e-6, 1e-12, |t, ins| {
            let table = t.leaf(ins[0].clone());
            let picked = t.rows(table, vec![0, 2, 2, 5]);
            let pooled = t.mean_rows(picked, 1, 3);
            let single = t.row(table, 4);
            let cat = t.concat_vecs(vec![pooled, single]);
            let loss = t.dot(cat, cat);
            (loss, vec![table])
        })
        .unwrap();
    }

    #[test]
    fn layer_norm_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let inputs = vec![rand_tensor(&mut rng, 3, 6)];
        let probe = rand_tensor(&mut rng, 3, 6);
        check_gradients(&inputs, 1e-6, 1e-5, 1e-10, move |t, ins| {
            let x = t.leaf(ins[0].clone());
            let ln = t.layer_norm_rows(x, 1e-5);
            let w = t.leaf(probe.clone());
            let loss = t.dot(ln, w);
            (loss, vec![x])
        })
        .unwrap();
    }

    #[test]
    fn gcn_neighbor_sum_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let index: NeighborIndex = vec![vec![(1, 0), (2, 1)], vec![(0, 0)], vec![]];
        let inputs = vec![rand_tensor(&mut rng, 3, 4), rand_tensor(&mut rng, 2, 4)];
        let index = Rc::new(index);
        check_gradients(&inputs, 1e-6, 1e-6, 1e-12, |t, ins| {
            let e = t.leaf(ins[0].clone());
            let r = t.leaf(ins[1].clone());
            let agg = t.gcn_neighbor_sum(e, r, index.clone());
            let sq = t.mul(agg, agg);
            let loss = t.l1_norm(sq);
            (loss, vec![e, r])
        })
        .unwrap();
    }

    #[test]
    fn repeated_use_of_a_node_accumulates() {
        // loss = dot(v, v) + dot(v, v) → grad = 4v
        let v = Tensor::from_vec(vec![1.0, -2.0, 3.0]);
        let mut tape = Tape::new();
        let leaf = tape.leaf(v.clone());
        let d1 = tape.dot(leaf, leaf);
        let d2 = tape.dot(leaf, leaf);
        let loss = tape.sum_nodes(vec![d1, d2]);
        let grads = tape.backward(loss);
        let g = grads.of(leaf, &v);
        assert_eq!(g.data(), &[4.0, -8.0, 12.0]);
    }
}
