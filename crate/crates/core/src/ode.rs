//! Fixed-step third-order Bogacki-Shampine integration.

use crate::error::{Error, Result};

/// One Bogacki-Shampine step for an autonomous field `f` over `dt`:
///
/// ```text
/// k1 = f(y)
/// k2 = f(y + dt/2 k1)
/// k3 = f(y + 3dt/4 k2)
/// y+ = y + dt (2 k1 + 3 k2 + 4 k3) / 9
/// ```
///
/// Inputs that drive `f` are held constant over the step. A non-finite stage
/// or result is reported as [`Error::NonFinite`] with `time` set to NaN; the
/// caller fills in the simulation time.
pub fn rk3_step<const N: usize, F>(y: &[f64; N], dt: f64, mut f: F) -> Result<[f64; N]>
where
    F: FnMut(&[f64; N]) -> [f64; N],
{
    let k1 = f(y);
    let k2 = f(&axpy(y, 0.5 * dt, &k1));
    let k3 = f(&axpy(y, 0.75 * dt, &k2));
    let mut out = *y;
    for i in 0..N {
        out[i] += dt * (2.0 * k1[i] + 3.0 * k2[i] + 4.0 * k3[i]) / 9.0;
        if !out[i].is_finite() {
            return Err(Error::NonFinite { time: f64::NAN });
        }
    }
    Ok(out)
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, k: &[f64; N]) -> [f64; N] {
    let mut out = *y;
    for (o, k) in out.iter_mut().zip(k) {
        *o += h * k;
    }
    out
}
