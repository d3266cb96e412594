//! Float helpers routed through `libm` so the crate stays `no_std`.

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

#[inline]
pub(crate) fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub(crate) fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub(crate) fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub(crate) fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// Dot product with four independent accumulators so the loop vectorizes
/// while keeping a fixed summation order.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}


/// Largest-remainder apportionment of `total` units in proportion to
/// `weights`. Ties go to the lower index. All-zero weights yield all zeros
/// unless `total` is zero.
pub(crate) fn apportion(total: usize, weights: &[f64]) -> alloc::vec::Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let mut out = alloc::vec![0usize; weights.len()];
    if total == 0 || !(sum > 0.0) {
        return out;
    }
    let mut rema: alloc::vec::Vec<(usize, f64)> = alloc::vec::Vec::with_capacity(weights.len());
    let mut assigned = 0;
    for (i, w) in weights.iter().enumerate() {
        let exact = total as f64 * w / sum;
        let base = floor(exact + 1e-9) as usize;
        out[i] = base;
        assigned += base;
        rema.push((i, exact - base as f64));
    }
    rema.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut k = 0;
    while assigned < total {
        let idx = rema[k % rema.len()].0;
        if weights[idx] > 0.0 {
            out[idx] += 1;
            assigned += 1;
        }
        k += 1;
    }
    while assigned > total {
        // float slop can over-assign by one; take back from the smallest remainder
        let idx = rema[rema.len() - 1 - (k % rema.len())].0;
        if out[idx] > 0 {
            out[idx] -= 1;
            assigned -= 1;
        }
        k += 1;
    }
    out
}
