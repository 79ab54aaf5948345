//! Pointwise ops: arithmetic, activations, log/exp.

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn check_same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

impl<T: Scalar> Tensor<T> {
    pub fn add(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        check_same_shape("add", self, rhs)?;
        let data = self
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            vec![self.clone(), rhs.clone()],
            || Box::new(|g: &[T]| vec![Some(g.to_vec()), Some(g.to_vec())]),
        ))
    }

    pub fn sub(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        check_same_shape("sub", self, rhs)?;
        let data = self
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            vec![self.clone(), rhs.clone()],
            || Box::new(|g: &[T]| vec![Some(g.to_vec()), Some(g.iter().map(|&v| -v).collect())]),
        ))
    }

    pub fn mul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        check_same_shape("mul", self, rhs)?;
        let data = self
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(&a, &b)| a * b)
            .collect();
        let a = self.data_rc();
        let b = rhs.data_rc();
        Ok(Tensor::from_op(
            data,
            self.shape().to_vec(),
            vec![self.clone(), rhs.clone()],
            move || {
                Box::new(move |g: &[T]| {
                    let da = g.iter().zip(b.iter()).map(|(&g, &b)| g * b).collect();
                    let db = g.iter().zip(a.iter()).map(|(&g, &a)| g * a).collect();
                    vec![Some(da), Some(db)]
                })
            },
        ))
    }

    pub fn neg(&self) -> Tensor<T> {
        let data = self.data().iter().map(|&v| -v).collect();
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone()], || {
            Box::new(|g: &[T]| vec![Some(g.iter().map(|&v| -v).collect())])
        })
    }

    pub fn scale(&self, c: T) -> Tensor<T> {
        let data = self.data().iter().map(|&v| v * c).collect();
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone()], move || {
            Box::new(move |g: &[T]| vec![Some(g.iter().map(|&v| v * c).collect())])
        })
    }

    pub fn add_scalar(&self, c: T) -> Tensor<T> {
        let data = self.data().iter().map(|&v| v + c).collect();
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone()], || {
            Box::new(|g: &[T]| vec![Some(g.to_vec())])
        })
    }

    /// Natural log. Callers guard the argument away from zero themselves
    /// (the losses use `add_scalar(eps)` first).
    pub fn ln(&self) -> Tensor<T> {
        let data = self.data().iter().map(|&v| v.ln()).collect();
        let x = self.data_rc();
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone()], move || {
            Box::new(move |g: &[T]| {
                vec![Some(g.iter().zip(x.iter()).map(|(&g, &x)| g / x).collect())]
            })
        })
    }

    pub fn exp(&self) -> Tensor<T> {
        let data: Vec<T> = self.data().iter().map(|&v| v.exp()).collect();
        let y = std::rc::Rc::new(data.clone());
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone()], move || {
            Box::new(move |g: &[T]| {
                vec![Some(g.iter().zip(y.iter()).map(|(&g, &y)| g * y).collect())]
            })
        })
    }

    pub fn tanh(&self) -> Tensor<T> {
        let data: Vec<T> = self.data().iter().map(|&v| v.tanh()).collect();
        let y = std::rc::Rc::new(data.clone());
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone()], move || {
            Box::new(move |g: &[T]| {
                vec![Some(
                    g.iter()
                        .zip(y.iter())
                        .map(|(&g, &y)| g * (T::one() - y * y))
                        .collect(),
                )]
            })
        })
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        let data: Vec<T> = self
            .data()
            .iter()
            .map(|&v| T::one() / (T::one() + (-v).exp()))
            .collect();
        let y = std::rc::Rc::new(data.clone());
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone()], move || {
            Box::new(move |g: &[T]| {
                vec![Some(
                    g.iter()
                        .zip(y.iter())
                        .map(|(&g, &y)| g * y * (T::one() - y))
                        .collect(),
                )]
            })
        })
    }

    /// leaky_relu(x) = x for x ≥ 0, slope·x otherwise. Slope 0 is plain ReLU.
    pub fn leaky_relu(&self, slope: T) -> Tensor<T> {
        let data = self
            .data()
            .iter()
            .map(|&v| if v >= T::zero() { v } else { v * slope })
            .collect();
        let x = self.data_rc();
        Tensor::from_op(data, self.shape().to_vec(), vec![self.clone()], move || {
            Box::new(move |g: &[T]| {
                vec![Some(
                    g.iter()
                        .zip(x.iter())
                        .map(|(&g, &x)| if x >= T::zero() { g } else { g * slope })
                        .collect(),
                )]
            })
        })
    }
}
