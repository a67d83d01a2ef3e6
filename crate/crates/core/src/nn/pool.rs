use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Argmax rows recorded by [`maxpool1d`].
#[derive(Debug, Clone)]
pub struct MaxPoolCache {
    input_shape: Vec<usize>,
    /// `argmax[j * F + f]` is the input row that won window `j` for feature `f`.
    argmax: Vec<usize>,
}

impl MaxPoolCache {
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }

    /// Routes each upstream value to its window's winning row.
    pub fn backward(&self, grad_out: &Tensor) -> Result<Tensor> {
        let features = self.input_shape[1];
        if grad_out.len() != self.argmax.len() || grad_out.row_len() != features {
            return Err(Error::shape(
                "maxpool backward",
                format!("upstream {:?} for {} pooled values", grad_out.shape(), self.argmax.len()),
            ));
        }
        let mut gx = Tensor::zeros(&self.input_shape);
        let data = gx.data_mut();
        for (i, (&row, &g)) in self.argmax.iter().zip(grad_out.data()).enumerate() {
            data[row * features + i % features] += g;
        }
        Ok(gx)
    }
}

/// Non-overlapping max pooling along rows of a `T × F` input with stride
/// equal to `window`; a trailing remainder shorter than `window` is dropped.
/// Ties go to the earliest row.
pub fn maxpool1d(x: &Tensor, window: usize) -> Result<(Tensor, MaxPoolCache)> {
    if x.rank() != 2 || window == 0 {
        return Err(Error::shape("maxpool", format!("input {:?}, window {window}", x.shape())));
    }
    let (rows, features) = (x.rows(), x.row_len());
    if rows < window {
        return Err(Error::shape(
            "maxpool",
            format!("{rows} rows cannot fill a window of {window}"),
        ));
    }
    let pooled = rows / window;
    let mut out = Tensor::zeros(&[pooled, features]);
    let mut argmax = vec![0; pooled * features];
    for j in 0..pooled {
        for f in 0..features {
            let start = j * window;
            let mut best = start;
            for r in start + 1..start + window {
                if x.row(r)[f] > x.row(best)[f] {
                    best = r;
                }
            }
            out.row_mut(j)[f] = x.row(best)[f];
            argmax[j * features + f] = best;
        }
    }
    Ok((
        out,
        MaxPoolCache {
            input_shape: x.shape().to_vec(),
            argmax,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(values: &[f64]) -> Tensor {
        Tensor::new(vec![values.len(), 1], values.to_vec()).unwrap()
    }

    #[test]
    fn pools_pairs() {
        let (out, cache) = maxpool1d(&column(&[1.0, 3.0, 2.0, 5.0]), 2).unwrap();
        assert_eq!(out.data(), &[3.0, 5.0]);
        assert_eq!(cache.argmax(), &[1, 3]);
    }

    #[test]
    fn remainder_is_dropped() {
        let (out, _) = maxpool1d(&column(&[1.0, 2.0, 3.0, 4.0, 9.0]), 2).unwrap();
        assert_eq!(out.shape(), &[2, 1]);
        assert_eq!(out.data(), &[2.0, 4.0]);
    }

    #[test]
    fn tie_routes_to_first() {
        let (out, cache) = maxpool1d(&column(&[2.0, 2.0]), 2).unwrap();
        assert_eq!(out.data(), &[2.0]);
        let g = cache.backward(&column(&[1.0])).unwrap();
        assert_eq!(g.data(), &[1.0, 0.0]);
    }

    #[test]
    fn too_short_is_an_error() {
        assert!(maxpool1d(&column(&[1.0]), 2).is_err());
    }

    #[test]
    fn backward_is_sparse_per_window() {
        let x = Tensor::new(vec![6, 2], vec![0.1, 0.9, 0.4, 0.2, -1.0, 3.0, 2.0, 3.0, 0.0, 0.0, 5.0, -5.0]).unwrap();
        let (out, cache) = maxpool1d(&x, 3).unwrap();
        assert_eq!(out.data(), &[0.4, 3.0, 5.0, 3.0]);
        let g = cache.backward(&Tensor::new(vec![2, 2], vec![1.0; 4]).unwrap()).unwrap();
        for j in 0..2 {
            for f in 0..2 {
                let nonzero = (j * 3..j * 3 + 3).filter(|&r| g.row(r)[f] != 0.0).count();
                assert!(nonzero <= 1);
            }
        }
    }
}
