use rand::seq::SliceRandom;
use rand::Rng;

use super::data::Dataset;
use super::model::{sample_loss_grad, Model};
use crate::error::{Error, Result};

/// `J` steps of `theta <- theta - eta * mean gradient` over mini-batches of
/// the device's local samples. Batches are drawn without replacement and
/// the local data is reshuffled whenever it runs out.
#[allow(clippy::too_many_arguments)]
pub fn local_sgd<R: Rng + ?Sized>(
    model: &Model,
    theta_start: &[f64],
    data: &Dataset,
    local: &[usize],
    iterations: usize,
    batch_size: usize,
    eta: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if iterations == 0 || batch_size == 0 || batch_size > local.len() || !(eta >= 0.0) {
        return Err(Error::Config(format!(
            "local SGD needs J >= 1, 1 <= batch <= {} and eta >= 0 (got J = {iterations}, batch = {batch_size}, eta = {eta})",
            local.len()
        )));
    }
    let mut theta = theta_start.to_vec();
    let mut order = local.to_vec();
    let mut pos = order.len();
    for _ in 0..iterations {
        if pos + batch_size > order.len() {
            order.shuffle(rng);
            pos = 0;
        }
        let batch = &order[pos..pos + batch_size];
        pos += batch_size;
        let (_, grad) = sample_loss_grad(model, &theta, data, batch)?;
        theta.iter_mut().zip(&grad).for_each(|(t, g)| *t -= eta * g);
    }
    Ok(theta)
}
