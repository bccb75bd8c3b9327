//! Central finite-difference gradient verification.

use rand::Rng;

/// Compare an analytic gradient against central finite differences of `f`
/// at `probes` random coordinates. Returns the max relative error observed.
///
/// `f` must evaluate the scalar function at an arbitrary parameter vector;
/// `theta` is the point the analytic gradient was computed at. If `probes`
/// covers the whole vector, every coordinate is checked instead of sampling.
///
/// Relative errors are floored at one thousandth of the overall gradient
/// scale: coordinates whose true gradient sits near zero carry only
/// finite-difference rounding noise and would otherwise report spurious
/// mismatches.
pub fn grad_check(
    mut f: impl FnMut(&[f64]) -> f64,
    theta: &[f64],
    analytic: &[f64],
    probes: usize,
    h: f64,
    rng: &mut impl Rng,
) -> f64 {
    assert_eq!(theta.len(), analytic.len());
    assert!(h > 0.0);
    let coords = pick_coords(theta.len(), probes, rng);

    let grad_scale = analytic.iter().fold(0.0f64, |acc, g| acc.max(g.abs()));
    let floor = (1e-3 * grad_scale).max(1e-8);

    let mut scratch = theta.to_vec();
    let mut max_rel = 0.0f64;
    for &i in &coords {
        let (fd, an) = fd_at(&mut f, &mut scratch, i, h, analytic);
        if fd.abs() < floor && an.abs() < floor {
            continue;
        }
        let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(floor);
        max_rel = max_rel.max(rel);
    }
    max_rel
}

/// Max deviation between finite differences and the analytic gradient over
/// probed coordinates, normalized by the largest gradient magnitude in the
/// block. Suited to verifying one parameter block of a larger model, where
/// individual coordinates may sit below the finite-difference noise floor
/// but any mis-scaled backward path still shifts the dominant coordinates.
pub fn grad_check_block(
    mut f: impl FnMut(&[f64]) -> f64,
    theta: &[f64],
    analytic: &[f64],
    probes: usize,
    h: f64,
    rng: &mut impl Rng,
) -> f64 {
    assert_eq!(theta.len(), analytic.len());
    assert!(h > 0.0);
    let coords = pick_coords(theta.len(), probes, rng);
    let scale = analytic
        .iter()
        .fold(0.0f64, |acc, g| acc.max(g.abs()))
        .max(1e-8);

    let mut scratch = theta.to_vec();
    let mut max_dev = 0.0f64;
    for &i in &coords {
        let (fd, an) = fd_at(&mut f, &mut scratch, i, h, analytic);
        max_dev = max_dev.max((fd - an).abs() / scale);
    }
    max_dev
}

fn pick_coords(len: usize, probes: usize, rng: &mut impl Rng) -> Vec<usize> {
    if probes >= len {
        (0..len).collect()
    } else {
        (0..probes).map(|_| rng.random_range(0..len)).collect()
    }
}

fn fd_at(
    f: &mut impl FnMut(&[f64]) -> f64,
    scratch: &mut [f64],
    i: usize,
    h: f64,
    analytic: &[f64],
) -> (f64, f64) {
    let orig = scratch[i];
    scratch[i] = orig + h;
    let fp = f(scratch);
    scratch[i] = orig - h;
    let fm = f(scratch);
    scratch[i] = orig;
    ((fp - fm) / (2.0 * h), analytic[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LinearLayer;

    #[test]
    fn linear_layer_passes() {
        let mut rng = crate::rng::stream(41, "test-gradcheck", 0);
        let layer = LinearLayer::new(4, 6, &mut rng);
        let x = crate::rng::normal_vec(&mut rng, 6);

        // loss = sum(y^2)
        let (y, cache) = layer.forward(&x).unwrap();
        let dy: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let (grads, _) = layer.backward(&cache, &dy).unwrap();

        let mut theta = layer.w.values.clone();
        theta.extend_from_slice(&layer.bias);
        let mut analytic = grads.dw.values.clone();
        analytic.extend_from_slice(&grads.dbias);

        let f = |t: &[f64]| -> f64 {
            let mut l = layer.clone();
            let w_len = l.w.values.len();
            l.w.values.copy_from_slice(&t[..w_len]);
            l.bias.copy_from_slice(&t[w_len..]);
            let (y, _) = l.forward(&x).unwrap();
            y.iter().map(|v| v * v).sum()
        };
        let err = grad_check(f, &theta, &analytic, theta.len(), 1e-5, &mut rng);
        assert!(err < 1e-6, "linear layer gradcheck failed: {err}");
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let mut rng = crate::rng::stream(42, "test-gradcheck", 1);
        let layer = LinearLayer::new(3, 3, &mut rng);
        let x = crate::rng::normal_vec(&mut rng, 3);
        let (y, cache) = layer.forward(&x).unwrap();
        let dy: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let (grads, _) = layer.backward(&cache, &dy).unwrap();

        let theta = layer.w.values.clone();
        let mut corrupted = grads.dw.values.clone();
        for v in corrupted.iter_mut() {
            *v *= 1.37; // deliberate bug
        }
        let f = |t: &[f64]| -> f64 {
            let mut l = layer.clone();
            l.w.values.copy_from_slice(t);
            let (y, _) = l.forward(&x).unwrap();
            y.iter().map(|v| v * v).sum()
        };
        let err = grad_check(f, &theta, &corrupted, theta.len(), 1e-5, &mut rng);
        assert!(err > 1e-2, "corruption went undetected: {err}");
    }
}
