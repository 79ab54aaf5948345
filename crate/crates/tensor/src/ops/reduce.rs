//! Full-tensor reductions. Both produce a single-element tensor.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

impl<T: Scalar> Tensor<T> {
    pub fn sum(&self) -> Tensor<T> {
        let mut s = T::zero();
        for &v in self.data() {
            s += v;
        }
        let n = self.numel();
        Tensor::from_op(vec![s], vec![1], vec![self.clone()], move || {
            Box::new(move |g: &[T]| vec![Some(vec![g[0]; n])])
        })
    }

    pub fn mean(&self) -> Tensor<T> {
        let n = self.numel();
        let inv = T::one() / T::from_f64(n as f64);
        let mut s = T::zero();
        for &v in self.data() {
            s += v;
        }
        Tensor::from_op(vec![s * inv], vec![1], vec![self.clone()], move || {
            Box::new(move |g: &[T]| vec![Some(vec![g[0] * inv; n])])
        })
    }
}
