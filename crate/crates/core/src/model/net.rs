//! Generic forward and backward passes of the per-frame network, so the
//! same code runs in `f32` for training and `f64` for gradient checks.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, LinalgScalar};
use num_traits::Float;

use super::Architecture;

pub(crate) trait Scalar:
    LinalgScalar + Float + std::iter::Sum + std::ops::AddAssign + Send + Sync
{
}
impl<T: LinalgScalar + Float + std::iter::Sum + std::ops::AddAssign + Send + Sync> Scalar for T {}

/// Named views into the flat parameter vector `[W1, b1, W2, b2]`.
pub(crate) struct Weights<'a, T> {
    pub w1: ArrayView2<'a, T>,
    pub b1: ArrayView1<'a, T>,
    pub w2: ArrayView2<'a, T>,
    pub b2: ArrayView1<'a, T>,
}

impl Architecture {
    pub(crate) fn offsets(&self) -> [usize; 4] {
        let (d, h, p) = (self.input_width(), self.hidden, self.pitches);
        let w1 = 0;
        let b1 = w1 + d * h;
        let w2 = b1 + h;
        let b2 = w2 + h * p;
        [w1, b1, w2, b2]
    }

    pub(crate) fn weights<'a, T>(&self, params: &'a [T]) -> Weights<'a, T> {
        let (d, h, p) = (self.input_width(), self.hidden, self.pitches);
        let [w1, b1, w2, b2] = self.offsets();
        Weights {
            w1: ArrayView2::from_shape((d, h), &params[w1..b1]).unwrap(),
            b1: ArrayView1::from(&params[b1..w2]),
            w2: ArrayView2::from_shape((h, p), &params[w2..b2]).unwrap(),
            b2: ArrayView1::from(&params[b2..b2 + p]),
        }
    }
}

pub(crate) struct Activations<T> {
    /// Hidden pre-activations, `N × H`.
    pub pre: Array2<T>,
    /// Rectified hidden units, `N × H`.
    pub hidden: Array2<T>,
    /// Logistic outputs, `N × P`.
    pub out: Array2<T>,
}

pub(crate) fn sigmoid<T: Float>(a: T) -> T {
    T::one() / (T::one() + (-a).exp())
}

pub(crate) fn forward<T: Scalar>(arch: &Architecture, params: &[T], x: ArrayView2<T>) -> Activations<T> {
    let w = arch.weights(params);
    let mut pre = x.dot(&w.w1);
    pre += &w.b1;
    let hidden = pre.mapv(|v| v.max(T::zero()));
    let mut out = hidden.dot(&w.w2);
    out += &w.b2;
    out.mapv_inplace(sigmoid);
    Activations { pre, hidden, out }
}

/// Parameter gradient given `dL/dlogits` (`N × P`).
pub(crate) fn backward<T: Scalar>(
    arch: &Architecture,
    params: &[T],
    x: ArrayView2<T>,
    act: &Activations<T>,
    dlogit: ArrayView2<T>,
) -> Vec<T> {
    let w = arch.weights(params);
    let mut grad = vec![T::zero(); arch.param_count()];
    let [o_w1, o_b1, o_w2, o_b2] = arch.offsets();
    let (d, h, p) = (arch.input_width(), arch.hidden, arch.pitches);

    let dw2 = act.hidden.t().dot(&dlogit);
    let db2: Array1<T> = dlogit.sum_axis(Axis(0));
    let mut dh = dlogit.dot(&w.w2.t());
    ndarray::Zip::from(&mut dh).and(&act.pre).for_each(|g, &a| {
        if a <= T::zero() {
            *g = T::zero();
        }
    });
    let dw1 = x.t().dot(&dh);
    let db1: Array1<T> = dh.sum_axis(Axis(0));

    let mut put = |offset: usize, len: usize, src: ndarray::ArrayViewD<T>| {
        for (g, v) in grad[offset..offset + len].iter_mut().zip(src.iter()) {
            *g = *v;
        }
    };
    put(o_w1, d * h, dw1.view().into_dyn());
    put(o_b1, h, db1.view().into_dyn());
    put(o_w2, h * p, dw2.view().into_dyn());
    put(o_b2, p, db2.view().into_dyn());
    grad
}

/// `[x_{t-C}, …, x_{t+C}]` for each requested frame, zero outside the track.
pub(crate) fn context_rows<T: Scalar>(
    features: ArrayView2<f32>,
    frames: impl ExactSizeIterator<Item = usize>,
    context: usize,
    convert: impl Fn(f32) -> T,
) -> Array2<T> {
    let (total, width) = features.dim();
    let mut x = Array2::zeros((frames.len(), (2 * context + 1) * width));
    for (row, t) in frames.enumerate() {
        for c in 0..=2 * context {
            let src = t as isize + c as isize - context as isize;
            if src < 0 || src as usize >= total {
                continue;
            }
            let mut dst = x.slice_mut(s![row, c * width..(c + 1) * width]);
            for (d, &v) in dst.iter_mut().zip(features.row(src as usize)) {
                *d = convert(v);
            }
        }
    }
    x
}
