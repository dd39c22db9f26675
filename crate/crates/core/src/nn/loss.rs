//! Loss functions returning `(loss, dLoss/dPrediction)`.

use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};

fn same_shape(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!(
            "prediction {:?} vs target {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Mean squared error over all elements.
pub fn mse(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    same_shape(&pred, &target)?;
    let count = pred.len() as f64;
    let diff = &pred - &target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / count;
    Ok((loss, diff * (2.0 / count)))
}

/// Squared reconstruction error summed over features, averaged over rows.
pub fn reconstruction(
    pred: ArrayView2<f64>,
    target: ArrayView2<f64>,
) -> Result<(f64, Array2<f64>)> {
    same_shape(&pred, &target)?;
    let rows = pred.nrows() as f64;
    let diff = &pred - &target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / rows;
    Ok((loss, diff * (2.0 / rows)))
}

/// Binary cross-entropy on raw logits, averaged over all elements, in the
/// `max(x, 0) - x t + ln(1 + e^{-|x|})` form.
pub fn bce_with_logits(
    logits: ArrayView2<f64>,
    targets: ArrayView2<f64>,
) -> Result<(f64, Array2<f64>)> {
    same_shape(&logits, &targets)?;
    let count = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(logits.dim());
    Zip::from(&mut grad)
        .and(&logits)
        .and(&targets)
        .for_each(|g, &x, &t| {
            loss += x.max(0.0) - x * t + (-x.abs()).exp().ln_1p();
            *g = (super::sigmoid(x) - t) / count;
        });
    Ok((loss / count, grad))
}

/// [`bce_with_logits`] against a constant label.
pub fn bce_with_logits_const(logits: ArrayView2<f64>, target: f64) -> Result<(f64, Array2<f64>)> {
    let targets = Array2::from_elem(logits.dim(), target);
    bce_with_logits(logits, targets.view())
}
