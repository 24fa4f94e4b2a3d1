//! Central finite-difference checks for every tape operator. Each case
//! funnels the operator's output through an MSE head so the analytic
//! gradient of every parameter entry can be compared against
//! (f(x+h) - f(x-h)) / 2h with h = 1e-5 at relative error < 1e-4.

use catechol::autodiff::{Mat, NodeId, ParamStore, Tape};
use std::sync::Arc;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn det_mat(rows: usize, cols: usize, salt: u64) -> Mat {
    // smooth deterministic values in about (-1, 1), away from relu kinks
    let data = (0..rows * cols)
        .map(|i| (((i as f64) * 0.73 + salt as f64 * 1.31).sin()) * 0.8 + 0.05)
        .collect();
    Mat::from_vec(rows, cols, data)
}

/// Run the loss builder against the store and return the scalar value.
fn eval<F>(f: &F, store: &ParamStore) -> f64
where
    F: Fn(&mut Tape, &ParamStore) -> NodeId,
{
    let mut tape = Tape::new(42);
    tape.training = true;
    let loss = f(&mut tape, store);
    tape.value(loss).data[0]
}

fn check<F>(label: &str, store: &mut ParamStore, f: F)
where
    F: Fn(&mut Tape, &ParamStore) -> NodeId,
{
    store.zero_grads();
    let mut tape = Tape::new(42);
    tape.training = true;
    let loss = f(&mut tape, store);
    assert!(tape.value(loss).is_scalar(), "{label}: loss must be scalar");
    tape.backward(loss, store).unwrap();
    let analytic: Vec<Mat> = (0..store.len()).map(|i| store.grad(i).clone()).collect();

    for (id, grads) in analytic.iter().enumerate() {
        for k in 0..store.value(id).data.len() {
            let orig = store.value(id).data[k];
            store.value_mut(id).data[k] = orig + H;
            let up = eval(&f, store);
            store.value_mut(id).data[k] = orig - H;
            let down = eval(&f, store);
            store.value_mut(id).data[k] = orig;
            let numeric = (up - down) / (2.0 * H);
            let exact = grads.data[k];
            let denom = numeric.abs().max(exact.abs()).max(1e-6);
            let rel = (numeric - exact).abs() / denom;
            assert!(
                rel < TOL,
                "{label}: param {id} entry {k}: analytic {exact} vs numeric {numeric} (rel {rel:.2e})"
            );
        }
    }
    store.zero_grads();
}

fn store_with(shapes: &[(usize, usize)]) -> ParamStore {
    let mut store = ParamStore::new();
    for (i, &(r, c)) in shapes.iter().enumerate() {
        store.add(&format!("p{i}"), det_mat(r, c, i as u64 + 1));
    }
    store
}

fn head(tape: &mut Tape, y: NodeId, salt: u64) -> NodeId {
    let (r, c) = tape.shape(y);
    let target = det_mat(r, c, 900 + salt);
    tape.mse_loss(y, &target).unwrap()
}

#[test]
fn matmul() {
    let mut s = store_with(&[(3, 4), (4, 2)]);
    check("matmul", &mut s, |t, s| {
        let a = t.param(s, 0);
        let b = t.param(s, 1);
        let y = t.matmul(a, b).unwrap();
        head(t, y, 0)
    });
}

#[test]
fn add_and_scale() {
    let mut s = store_with(&[(3, 3), (3, 3)]);
    check("add+scale", &mut s, |t, s| {
        let a = t.param(s, 0);
        let b = t.param(s, 1);
        let y = t.add(a, b).unwrap();
        let y = t.scale(y, 1.7);
        head(t, y, 1)
    });
}

#[test]
fn add_bias() {
    let mut s = store_with(&[(4, 3), (1, 3)]);
    check("add_bias", &mut s, |t, s| {
        let a = t.param(s, 0);
        let b = t.param(s, 1);
        let y = t.add_bias(a, b).unwrap();
        head(t, y, 2)
    });
}

#[test]
fn elementwise_mul() {
    let mut s = store_with(&[(3, 4), (3, 4)]);
    check("mul", &mut s, |t, s| {
        let a = t.param(s, 0);
        let b = t.param(s, 1);
        let y = t.mul(a, b).unwrap();
        head(t, y, 3)
    });
}

#[test]
fn mul_colvec() {
    let mut s = store_with(&[(4, 3), (4, 1)]);
    check("mul_colvec", &mut s, |t, s| {
        let a = t.param(s, 0);
        let c = t.param(s, 1);
        let y = t.mul_colvec(a, c).unwrap();
        head(t, y, 4)
    });
}

#[test]
fn rowdot() {
    let mut s = store_with(&[(5, 3), (5, 3)]);
    check("rowdot", &mut s, |t, s| {
        let a = t.param(s, 0);
        let b = t.param(s, 1);
        let y = t.rowdot(a, b).unwrap();
        head(t, y, 5)
    });
}

#[test]
fn concat_and_slice() {
    let mut s = store_with(&[(3, 2), (3, 4)]);
    check("concat_cols+slice_cols", &mut s, |t, s| {
        let a = t.param(s, 0);
        let b = t.param(s, 1);
        let y = t.concat_cols(&[a, b]).unwrap();
        let y = t.slice_cols(y, 1, 4).unwrap();
        head(t, y, 6)
    });
}

#[test]
fn sigmoid_silu() {
    let mut s = store_with(&[(4, 4)]);
    check("sigmoid", &mut s, |t, s| {
        let a = t.param(s, 0);
        let y = t.sigmoid(a);
        head(t, y, 7)
    });
    check("silu", &mut s, |t, s| {
        let a = t.param(s, 0);
        let y = t.silu(a);
        head(t, y, 8)
    });
}

#[test]
fn exp_log() {
    let mut s = store_with(&[(3, 3)]);
    check("exp", &mut s, |t, s| {
        let a = t.param(s, 0);
        let y = t.exp(a);
        head(t, y, 9)
    });
    // log over strictly positive values via exp composition
    check("log", &mut s, |t, s| {
        let a = t.param(s, 0);
        let pos = t.exp(a);
        let y = t.log(pos);
        head(t, y, 10)
    });
}

#[test]
fn leaky_relu() {
    let mut s = store_with(&[(4, 5)]);
    check("leaky_relu", &mut s, |t, s| {
        let a = t.param(s, 0);
        let y = t.leaky_relu(a, 0.2);
        head(t, y, 11)
    });
}

#[test]
fn dropout_training_mask_is_differentiable() {
    // the counter-based mask depends only on (seed, layer, step, index),
    // so it is constant across the finite-difference evaluations
    let mut s = store_with(&[(6, 6)]);
    check("dropout", &mut s, |t, s| {
        let a = t.param(s, 0);
        let y = t.dropout(a, 0.4, 3);
        head(t, y, 12)
    });
}

#[test]
fn softmax_segments() {
    let mut s = store_with(&[(6, 2)]);
    let seg = Arc::new(vec![0usize, 0, 1, 1, 1, 2]);
    check("softmax_segments", &mut s, move |t, s| {
        let a = t.param(s, 0);
        let y = t.softmax_segments(a, seg.clone(), 3).unwrap();
        head(t, y, 13)
    });
}

#[test]
fn segment_reductions() {
    let seg = Arc::new(vec![0usize, 0, 1, 2, 2, 2]);
    let mut s = store_with(&[(6, 3)]);
    {
        let seg = seg.clone();
        check("segment_sum", &mut s, move |t, s| {
            let a = t.param(s, 0);
            let y = t.segment_sum(a, seg.clone(), 3).unwrap();
            head(t, y, 14)
        });
    }
    {
        let seg = seg.clone();
        check("segment_mean", &mut s, move |t, s| {
            let a = t.param(s, 0);
            let y = t.segment_mean(a, seg.clone(), 3).unwrap();
            head(t, y, 15)
        });
    }
    check("segment_max", &mut s, move |t, s| {
        let a = t.param(s, 0);
        let y = t.segment_max(a, seg.clone(), 3).unwrap();
        head(t, y, 16)
    });
}

#[test]
fn gather_rows() {
    let mut s = store_with(&[(4, 3)]);
    let idx = Arc::new(vec![2usize, 0, 2, 3, 1]);
    check("gather_rows", &mut s, move |t, s| {
        let a = t.param(s, 0);
        let y = t.gather_rows(a, idx.clone()).unwrap();
        head(t, y, 17)
    });
}

#[test]
fn reshape() {
    let mut s = store_with(&[(2, 6)]);
    check("reshape", &mut s, |t, s| {
        let a = t.param(s, 0);
        let y = t.reshape(a, 4, 3).unwrap();
        head(t, y, 18)
    });
}

#[test]
fn composed_network() {
    // a small end-to-end composition touching most ops at once
    let mut s = store_with(&[(5, 4), (4, 6), (1, 6), (6, 2)]);
    check("composition", &mut s, |t, s| {
        let x = t.param(s, 0);
        let w1 = t.param(s, 1);
        let b1 = t.param(s, 2);
        let w2 = t.param(s, 3);
        let h1 = t.matmul(x, w1).unwrap();
        let h1 = t.add_bias(h1, b1).unwrap();
        let h1 = t.silu(h1);
        let y = t.matmul(h1, w2).unwrap();
        let y = t.sigmoid(y);
        head(t, y, 19)
    });
}
