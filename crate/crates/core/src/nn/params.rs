use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A named, fixed-shape collection of parameter tensors.
///
/// Gradients use the same type as the parameters they belong to, so
/// `params()` and `params_mut()` must list tensors in a stable order.
pub trait Params {
    fn params(&self) -> Vec<(String, &Tensor)>;
    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)>;

    fn num_scalars(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    /// All scalars concatenated in `params()` order.
    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for (_, t) in self.params() {
            out.extend_from_slice(t.data());
        }
        out
    }

    fn assign_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_scalars() {
            return Err(Error::shape(
                "assign_flat",
                format!("{} values for {} parameters", values.len(), self.num_scalars()),
            ));
        }
        let mut offset = 0;
        for (_, t) in self.params_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    fn zero(&mut self) {
        for (_, t) in self.params_mut() {
            t.fill(0.0);
        }
    }

    fn zeroed(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        z.zero();
        z
    }

    /// `self += other`, tensor by tensor in listing order.
    fn accumulate(&mut self, other: &Self) -> Result<()>
    where
        Self: Sized,
    {
        let theirs = other.params();
        for ((_, mine), (_, t)) in self.params_mut().into_iter().zip(theirs) {
            mine.add_assign(t)?;
        }
        Ok(())
    }
}
