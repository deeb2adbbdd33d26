//! Central finite-difference checks of the registered backward rules.
//!
//! Each check builds a small graph over random inputs, reduces its output to
//! a scalar with a fixed random projection, and compares the analytic input
//! gradients with `(f(x + ε) − f(x − ε)) / 2ε`. The reported error is
//! `max |analytic − numeric| / max(‖analytic‖∞, ‖numeric‖∞)`, which is
//! scale-free and stays meaningful for entries that are close to zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::Tensor;
use crate::wavelet::Family;

use super::{Graph, NodeId};

pub const FD_EPSILON: f64 = 1e-5;
/// Tolerance for individual ops.
pub const OP_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Builds `f` over variables holding `inputs`, projects its output onto fixed
/// random weights and returns the analytic and numeric gradients w.r.t. every
/// input, concatenated.
pub fn gradients<F>(inputs: &[Tensor], seed: u64, eps: f64, f: &F) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let probe = {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &ids)?;
        g.value(out).shape().to_vec()
    };
    let n: usize = probe.iter().product();
    let weights = Tensor::from_parts(probe, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());

    let eval = |ins: &[Tensor], want_grad: bool| -> Result<(f64, Vec<f64>)> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = ins
            .iter()
            .map(|t| {
                if want_grad {
                    g.variable(t.clone())
                } else {
                    g.constant(t.clone())
                }
            })
            .collect();
        let out = f(&mut g, &ids)?;
        let w = g.constant(weights.clone());
        let prod = g.mul(out, w)?;
        let loss = g.sum(prod)?;
        let value = g.value(loss).item();
        let mut grads = Vec::new();
        if want_grad {
            g.backward(loss)?;
            for (&id, t) in ids.iter().zip(ins) {
                match g.grad(id) {
                    Some(gr) => grads.extend_from_slice(gr.data()),
                    None => grads.extend(std::iter::repeat_n(0.0, t.len())),
                }
            }
        }
        Ok((value, grads))
    };

    let (_, analytic) = eval(inputs, true)?;
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut work = inputs.to_vec();
    for i in 0..work.len() {
        for j in 0..work[i].len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + eps;
            let (plus, _) = eval(&work, false)?;
            work[i].data_mut()[j] = orig - eps;
            let (minus, _) = eval(&work, false)?;
            work[i].data_mut()[j] = orig;
            numeric.push((plus - minus) / (2.0 * eps));
        }
    }
    Ok((analytic, numeric))
}

/// Random tensor with entries uniform in `±scale`, with magnitudes kept at
/// least `floor` so kinks at zero are avoided.
pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], scale: f64, floor: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let mag = rng.gen_range(floor..scale);
            if rng.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Tensor::from_parts(shape.to_vec(), data)
}

type Builder = Box<dyn Fn(&mut Graph, &[NodeId]) -> Result<NodeId>>;

pub struct OpCase {
    pub name: &'static str,
    pub inputs: Vec<Tensor>,
    pub build: Builder,
}

/// Names of every differentiable op in the vocabulary, in suite order.
pub const REGISTERED_OPS: &[&str] = &[
    "add",
    "sub",
    "mul",
    "mul_scalar_broadcast",
    "neg",
    "abs",
    "square",
    "sigmoid",
    "tanh",
    "leaky_relu",
    "log",
    "clamp",
    "scale",
    "powi",
    "sum",
    "conv2d",
    "conv2d_stride2",
    "conv2d_transpose",
    "avg_pool2",
    "upsample_nearest2",
    "global_avg_pool",
    "concat",
    "slice",
    "reshape",
    "frames_to_channels",
    "dwt_spatial_haar",
    "dwt_spatial_db4",
    "dwt_temporal",
    "conv_lstm_step_x2",
];

/// One randomized case per registered op.
pub fn op_cases(seed: u64) -> Vec<OpCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = |shape: &[usize]| random_tensor(&mut rng, shape, 1.0, 0.05);
    let positive = |t: Tensor| t.map(|v| v.abs() + 0.1);
    macro_rules! case {
        ($name:expr, [$($input:expr),*], $build:expr) => {
            OpCase { name: $name, inputs: vec![$($input),*], build: Box::new($build) }
        };
    }
    vec![
        case!("add", [r(&[3, 4]), r(&[3, 4])], |g, x| g.add(x[0], x[1])),
        case!("sub", [r(&[3, 4]), r(&[3, 4])], |g, x| g.sub(x[0], x[1])),
        case!("mul", [r(&[2, 3, 2]), r(&[2, 3, 2])], |g, x| g.mul(x[0], x[1])),
        case!("mul_scalar_broadcast", [r(&[4, 3]), r(&[1])], |g, x| g.mul(x[0], x[1])),
        case!("neg", [r(&[5])], |g, x| g.neg(x[0])),
        case!("abs", [r(&[6])], |g, x| g.abs(x[0])),
        case!("square", [r(&[6])], |g, x| g.square(x[0])),
        case!("sigmoid", [r(&[2, 5])], |g, x| g.sigmoid(x[0])),
        case!("tanh", [r(&[2, 5])], |g, x| g.tanh(x[0])),
        case!("leaky_relu", [r(&[8])], |g, x| g.leaky_relu(x[0], 0.2)),
        case!("log", [positive(r(&[6]))], |g, x| g.log(x[0])),
        case!("clamp", [r(&[8])], |g, x| g.clamp(x[0], -0.5, 0.5)),
        case!("scale", [r(&[4])], |g, x| g.scale(x[0], -1.7)),
        case!("powi", [r(&[5])], |g, x| g.powi(x[0], 3)),
        case!("sum", [r(&[3, 3])], |g, x| g.sum(x[0])),
        case!("conv2d", [r(&[5, 5, 2]), r(&[3, 3, 2, 3]), r(&[3])], |g, x| {
            g.conv2d(x[0], x[1], Some(x[2]), 1, 1)
        }),
        case!("conv2d_stride2", [r(&[6, 5, 2]), r(&[3, 3, 2, 2])], |g, x| {
            g.conv2d(x[0], x[1], None, 2, 1)
        }),
        case!("conv2d_transpose", [r(&[3, 3, 2]), r(&[3, 3, 3, 2]), r(&[3])], |g, x| {
            g.conv2d_transpose(x[0], x[1], Some(x[2]), 2, 1, (6, 6))
        }),
        case!("avg_pool2", [r(&[4, 6, 2])], |g, x| g.avg_pool2(x[0])),
        case!("upsample_nearest2", [r(&[2, 3, 2])], |g, x| g.upsample_nearest2(x[0])),
        case!("global_avg_pool", [r(&[3, 4, 2])], |g, x| g.global_avg_pool(x[0])),
        case!("concat", [r(&[2, 2, 1]), r(&[2, 2, 3])], |g, x| g.concat(&[x[0], x[1]], 2)),
        case!("slice", [r(&[3, 4, 2])], |g, x| g.slice(x[0], 1, 1, 2)),
        case!("reshape", [r(&[2, 6])], |g, x| g.reshape(x[0], &[3, 4])),
        case!("frames_to_channels", [r(&[3, 2, 2, 2])], |g, x| g.frames_to_channels(x[0])),
        case!("dwt_spatial_haar", [r(&[4, 6, 2])], |g, x| g.dwt_spatial(x[0], Family::Haar)),
        case!("dwt_spatial_db4", [r(&[4, 4, 1])], |g, x| g.dwt_spatial(x[0], Family::Db4)),
        case!("dwt_temporal", [r(&[6, 2, 2, 1])], |g, x| g.dwt_temporal(x[0], Family::Haar)),
        case!(
            "conv_lstm_step_x2",
            [
                r(&[4, 4, 2]),
                r(&[4, 4, 2]),
                r(&[4, 4, 3]),
                r(&[4, 4, 3]),
                r(&[3, 3, 5, 12]),
                r(&[12])
            ],
            |g, x| {
                let cell = super::lstm::ConvLstmCell { kernel: x[4], bias: x[5] };
                let (h0, c0) = (x[2], x[3]);
                let (h1, c1) = cell.step(g, x[0], h0, c0)?;
                let (h2, c2) = cell.step(g, x[1], h1, c1)?;
                g.concat(&[h2, c2], 2)
            }
        ),
    ]
}

/// Runs every op case. `corrupt` names an op whose analytic gradient is
/// scaled by 1.5 before comparison; it exists so the failure path can be
/// exercised.
pub fn run_op_suite(seed: u64, corrupt: Option<&str>) -> Result<Vec<CheckResult>> {
    op_cases(seed)
        .into_iter()
        .map(|case| {
            let (mut analytic, numeric) = gradients(&case.inputs, seed, FD_EPSILON, &case.build)?;
            if corrupt == Some(case.name) {
                analytic.iter_mut().for_each(|v| *v *= 1.5);
            }
            Ok(CheckResult {
                name: case.name.to_string(),
                max_rel_error: max_rel_error(&analytic, &numeric),
                tolerance: OP_TOLERANCE,
            })
        })
        .collect()
}
