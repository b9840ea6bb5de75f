use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major n-dimensional array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!("shape {:?} needs {} elements, got {}", shape, expected, data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![T::zero(); n] }
    }

    pub fn filled(shape: Vec<usize>, value: T) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![value; n] }
    }

    pub fn from_fn(shape: Vec<usize>, f: impl FnMut(usize) -> T) -> Self {
        let n = shape.iter().product();
        Self { shape, data: (0..n).map(f).collect() }
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

    /// Size of the leading (batch) axis.
    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Shape without the leading axis.
    pub fn sample_shape(&self) -> &[usize] {
        self.shape.get(1..).unwrap_or(&[])
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape().iter().product()
    }

    pub fn sample(&self, i: usize) -> &[T] {
        let n = self.sample_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(Error::Shape(format!("cannot reshape {:?} into {:?}", self.shape, shape)));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Gathers the listed samples along the leading axis into a new batch.
    pub fn select(&self, indices: &[usize]) -> Self {
        let n = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Self { shape, data }
    }

    /// Contiguous batch slice `[start, end)` along the leading axis.
    pub fn slice_batch(&self, start: usize, end: usize) -> Self {
        let n = self.sample_len();
        let mut shape = self.shape.clone();
        shape[0] = end - start;
        Self { shape, data: self.data[start * n..end * n].to_vec() }
    }

    /// Concatenates tensors with equal sample shapes along the leading axis.
    pub fn concat(parts: &[&Self]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let sample = first.sample_shape().to_vec();
        let mut data = Vec::new();
        let mut batch = 0;
        for p in parts {
            if p.sample_shape() != sample.as_slice() {
                return Err(Error::Shape(format!("concat sample shape {:?} vs {:?}", p.sample_shape(), sample)));
            }
            batch += p.batch();
            data.extend_from_slice(&p.data);
        }
        let mut shape = vec![batch];
        shape.extend(sample);
        Ok(Self { shape, data })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
        }
    }

    /// Index of the largest entry in each sample.
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.batch())
            .map(|i| {
                let row = self.sample(i);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_shape() {
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn select_and_slice() {
        let t = Tensor::<f64>::from_fn(vec![3, 2], |i| i as f64);
        assert_eq!(t.select(&[2, 0]).data(), &[4.0, 5.0, 0.0, 1.0]);
        assert_eq!(t.slice_batch(1, 3).data(), &[2.0, 3.0, 4.0, 5.0]);
        assert_eq!(t.slice_batch(1, 3).shape(), &[2, 2]);
    }

    #[test]
    fn concat_checks_sample_shape() {
        let a = Tensor::<f32>::zeros(vec![1, 4]);
        let b = Tensor::<f32>::zeros(vec![2, 4]);
        let c = Tensor::<f32>::zeros(vec![1, 3]);
        assert_eq!(Tensor::concat(&[&a, &b]).unwrap().shape(), &[3, 4]);
        assert!(Tensor::concat(&[&a, &c]).is_err());
    }

    #[test]
    fn argmax_takes_first_maximum() {
        let t = Tensor::<f32>::new(vec![2, 3], vec![0.1, 0.7, 0.7, 0.5, 0.2, 0.3]).unwrap();
        assert_eq!(t.argmax_rows(), vec![1, 0]);
    }
}
