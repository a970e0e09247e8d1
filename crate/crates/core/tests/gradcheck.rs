//! Analytic gradients against central finite differences.

mod common;

use cmert::attention::{tdu_forward, TduParams};
use cmert::gradcheck::{check_function, check_model, GradCheck, STEP};
use cmert::tape::Var;
use cmert::train::LossWeights;
use cmert::{AttentionMask, MaskKind, Result, Tape, Tensor};
use common::{full_sample, random_tensor, tiny_model};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-3;
const SEEDS: u64 = 20;

/// Reduces `out` to a scalar through fixed random weights, so that every
/// output element gets a distinct adjoint.
fn weighted_sum(tape: &mut Tape, out: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = random_tensor(&mut rng, tape.shape(out));
    let w = tape.constant(w);
    let p = tape.mul(out, w)?;
    tape.sum(p)
}

fn assert_ok(what: &str, seed: u64, r: GradCheck) {
    assert!(r.checked > 0, "{what}: nothing checked");
    assert!(r.max_rel_err < TOL, "{what} seed {seed}: rel err {:e} at {}", r.max_rel_err, r.worst);
}

/// Runs `f` on inputs of the given shapes for every seed.
fn check_primitive(what: &str, shapes: &[&[usize]], f: impl Fn(&mut Tape, &[Var], u64) -> Result<Var>) {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<Tensor> = shapes.iter().map(|s| random_tensor(&mut rng, s)).collect();
        let r = check_function(&inputs, STEP, |t, v| {
            let out = f(t, v, seed)?;
            weighted_sum(t, out, seed)
        })
        .unwrap();
        assert_ok(what, seed, r);
    }
}

#[test]
fn matmul_of_sum_matches_finite_differences() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = [random_tensor(&mut rng, &[4, 5]), random_tensor(&mut rng, &[5, 3])];
        let r = check_function(&inputs, STEP, |t, v| {
            let y = t.matmul(v[0], v[1])?;
            t.sum(y)
        })
        .unwrap();
        assert!(r.max_rel_err < 1e-4, "seed {seed}: {}", r.worst);
    }
}

#[test]
fn elementwise_primitives() {
    check_primitive("add", &[&[3, 4], &[3, 4]], |t, v, _| t.add(v[0], v[1]));
    check_primitive("mul", &[&[3, 4], &[3, 4]], |t, v, _| t.mul(v[0], v[1]));
    check_primitive("add_bias", &[&[3, 4], &[4]], |t, v, _| t.add_bias(v[0], v[1]));
    check_primitive("scale", &[&[3, 4]], |t, v, _| t.scale(v[0], -1.7));
    check_primitive("transpose", &[&[3, 4]], |t, v, _| t.transpose(v[0]));
    check_primitive("matmul", &[&[2, 5], &[5, 3]], |t, v, _| t.matmul(v[0], v[1]));
}

#[test]
fn relu_away_from_the_kink() {
    check_primitive("relu", &[&[4, 5]], |t, v, _| {
        // Shift magnitudes away from zero so that no finite-difference step
        // crosses the kink.
        let x = t.value(v[0]).clone();
        let shift: Vec<f64> = x.data().iter().map(|&a| if a >= 0.0 { 0.2 } else { -0.2 }).collect();
        let shift = t.constant(Tensor::new(x.shape().to_vec(), shift)?);
        let y = t.add(v[0], shift)?;
        t.relu(y)
    });
}

#[test]
fn log_of_positive_inputs() {
    check_primitive("log", &[&[3, 3]], |t, v, _| {
        let sq = t.mul(v[0], v[0])?;
        let one = t.constant(Tensor::full(&[3, 3], 0.5));
        let pos = t.add(sq, one)?;
        t.log(pos)
    });
}

#[test]
fn reductions_and_gather() {
    check_primitive("sum", &[&[3, 4]], |t, v, _| {
        let s = t.sum(v[0])?;
        t.mul(s, s)
    });
    check_primitive("mean", &[&[3, 4]], |t, v, _| {
        let s = t.mean(v[0])?;
        t.mul(s, s)
    });
    check_primitive("gather", &[&[3, 4]], |t, v, _| t.gather(v[0], &[0, 5, 5, 11, 2]));
}

#[test]
fn concat_and_slice_along_both_axes() {
    check_primitive("concat time", &[&[2, 3], &[4, 3]], |t, v, _| t.concat(&[v[0], v[1]], 0));
    check_primitive("concat feature", &[&[3, 2], &[3, 1]], |t, v, _| t.concat(&[v[0], v[1]], 1));
    check_primitive("slice time", &[&[5, 3]], |t, v, _| t.slice(v[0], 0, 1, 4));
    check_primitive("slice feature", &[&[3, 5]], |t, v, _| t.slice(v[0], 1, 2, 5));
}

#[test]
fn softmax_family() {
    check_primitive("softmax", &[&[3, 5]], |t, v, _| t.softmax_rows(v[0], None));
    let mask = AttentionMask::from_fn(3, 5, MaskKind::Custom, |i, j| (i + j) % 3 != 1).unwrap();
    check_primitive("masked softmax", &[&[3, 5]], |t, v, _| t.softmax_rows(v[0], Some(&mask)));
    check_primitive("log_softmax", &[&[3, 5]], |t, v, _| t.log_softmax_rows(v[0]));
}

#[test]
fn layer_norm_gradients() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = [
            random_tensor(&mut rng, &[3, 4]),
            random_tensor(&mut rng, &[4]),
            random_tensor(&mut rng, &[4]),
        ];
        let r = check_function(&inputs, STEP, |t, v| {
            let y = t.layer_norm(v[0], v[1], v[2])?;
            weighted_sum(t, y, seed)
        })
        .unwrap();
        assert!(r.max_rel_err < 1e-4, "seed {seed}: {}", r.worst);
    }
}

/// Parameters of one decoder unit flattened into leaves after `q` and `kv`.
fn tdu_inputs(seed: u64, lq: usize, lk: usize, d: usize) -> (Vec<Tensor>, TduParams<()>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = TduParams::<Tensor>::init(d, 2 * d, &mut rng);
    let mut inputs = vec![random_tensor(&mut rng, &[lq, d]), random_tensor(&mut rng, &[lk, d])];
    // Perturb norms and biases away from their initial constants so every
    // parameter has a generic gradient.
    params.visit("", &mut |_, t| {
        let noise = random_tensor(&mut rng, t.shape());
        let v: Vec<f64> = t.data().iter().zip(noise.data()).map(|(a, b)| a + 0.1 * b).collect();
        inputs.push(Tensor::new(t.shape().to_vec(), v).unwrap());
    });
    (inputs, params.map("", &mut |_, _| ()))
}

#[test]
fn decoder_unit_gradients_on_two_frames() {
    for seed in 0..SEEDS {
        let (inputs, layout) = tdu_inputs(seed, 2, 3, 4);
        let self_mask = AttentionMask::causal(2);
        let r = check_function(&inputs, STEP, |t, v| {
            let mut idx = 2;
            let p = layout.map("", &mut |_, _| {
                idx += 1;
                v[idx - 1]
            });
            let y = tdu_forward(t, v[0], v[1], v[1], Some(&self_mask), None, &p, 2)?;
            weighted_sum(t, y, seed)
        })
        .unwrap();
        assert_ok("tdu", seed, r);
    }
}

#[test]
fn full_model_gradients_on_tiny_config() {
    let weights = LossWeights {
        lambda1: 0.2,
        lambda2: 0.5,
    };
    for seed in 0..SEEDS {
        let model = tiny_model(seed);
        let sample = full_sample(&model, 100 + seed);
        let r = check_model(&model, &sample, weights, STEP).unwrap();
        assert_eq!(r.checked, model.num_parameters());
        assert_ok("model", seed, r);
    }
}
