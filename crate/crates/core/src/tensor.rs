use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major n-dimensional array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::InvalidShape {
                shape,
                reason: "dimensions must be positive".into(),
            });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidShape {
                shape,
                reason: format!("holds {expected} elements but {} were given", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Flat offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &d)| {
            debug_assert!(i < d);
            acc * d + i
        })
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn expect_shape(&self, expected: &[usize]) -> Result<()> {
        if self.shape != expected {
            return Err(Error::ShapeMismatch {
                expected: expected.to_vec(),
                actual: self.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T: Copy> Tensor<T> {
    pub fn filled(shape: Vec<usize>, value: T) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape, vec![value; n])
    }

    pub fn get(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: T) {
        let o = self.offset(index);
        self.data[o] = value;
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        Self::filled(shape, T::zero())
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self {
            shape: other.shape.clone(),
            data: vec![T::zero(); other.data.len()],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        self.map(|&v| U::lit(v.as_f64()))
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }
}

/// Stacks equally-shaped `f32` images into a `B x H x W x C` batch of `T`.
pub fn stack_images<'a, T: Scalar>(
    images: impl IntoIterator<Item = &'a Tensor<f32>>,
) -> Result<Tensor<T>> {
    let mut shape: Option<Vec<usize>> = None;
    let mut data = Vec::new();
    let mut count = 0;
    for img in images {
        match &shape {
            None => shape = Some(img.shape().to_vec()),
            Some(s) => img.expect_shape(s)?,
        }
        data.extend(img.data().iter().map(|&v| T::from_f32_px(v)));
        count += 1;
    }
    let shape = shape.ok_or_else(|| Error::InvalidShape {
        shape: vec![0],
        reason: "cannot stack an empty batch".into(),
    })?;
    let mut full = vec![count];
    full.extend(shape);
    Tensor::new(full, data)
}
