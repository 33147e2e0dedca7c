use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::ComplexSeries;

/// `1/(K B) * sum_b sum_k ||x_ref_b - x_k_b||^2` over a batch, where
/// `iterates[b]` holds the K block outputs of sample `b`.
pub fn deep_supervision_loss<T: Scalar>(iterates: &[&[ComplexSeries<T>]], refs: &[&ComplexSeries<T>]) -> Result<T> {
    if iterates.is_empty() || iterates.len() != refs.len() {
        return Err(Error::Shape(format!("{} outputs for {} references", iterates.len(), refs.len())));
    }
    let k = iterates[0].len();
    if k == 0 {
        return Err(Error::invalid("iterates", "need at least one iterate"));
    }
    let mut total = T::zero();
    for (its, r) in iterates.iter().zip(refs) {
        if its.len() != k {
            return Err(Error::Shape("ragged iterate lists".into()));
        }
        for x in its.iter() {
            if x.shape() != r.shape() {
                return Err(Error::Shape(format!("{:?} vs reference {:?}", x.shape(), r.shape())));
            }
            total += x.values().iter().zip(r.values()).map(|(a, b)| (*a - *b).norm_sqr()).sum::<T>();
        }
    }
    Ok(total / T::of_usize(k * iterates.len()))
}
