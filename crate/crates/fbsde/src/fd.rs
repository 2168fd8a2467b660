//! Central finite differences used as the fallback when symbolic
//! derivative callbacks are not supplied.

/// Step for first derivatives: eps^(1/3) scaled by the coordinate magnitude.
pub(crate) fn step_first(x: f64) -> f64 {
    f64::EPSILON.powf(1.0 / 3.0) * x.abs().max(1.0)
}

/// Step for second derivatives: eps^(1/4). The cube-root step is optimal
/// for first differences only; squaring it in the denominator of a second
/// difference would let rounding noise through at the 1e-5 level.
pub(crate) fn step_second(x: f64) -> f64 {
    f64::EPSILON.powf(1.0 / 4.0) * x.abs().max(1.0)
}

/// d/dt of a scalar field.
pub(crate) fn ddt(g: impl Fn(f64, &[f64]) -> f64, t: f64, x: &[f64]) -> f64 {
    let h = step_first(t);
    (g(t + h, x) - g(t - h, x)) / (2.0 * h)
}

/// d/dx_k of a scalar field.
pub(crate) fn ddx(g: impl Fn(f64, &[f64]) -> f64, t: f64, x: &[f64], k: usize) -> f64 {
    let h = step_first(x[k]);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[k] += h;
    xm[k] -= h;
    (g(t, &xp) - g(t, &xm)) / (2.0 * h)
}

/// d²/dx_k dx_l of a scalar field.
pub(crate) fn d2dx(g: impl Fn(f64, &[f64]) -> f64, t: f64, x: &[f64], k: usize, l: usize) -> f64 {
    if k == l {
        let h = step_second(x[k]);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] += h;
        xm[k] -= h;
        (g(t, &xp) - 2.0 * g(t, x) + g(t, &xm)) / (h * h)
    } else {
        let hk = step_second(x[k]);
        let hl = step_second(x[l]);
        let mut xpp = x.to_vec();
        let mut xpm = x.to_vec();
        let mut xmp = x.to_vec();
        let mut xmm = x.to_vec();
        xpp[k] += hk;
        xpp[l] += hl;
        xpm[k] += hk;
        xpm[l] -= hl;
        xmp[k] -= hk;
        xmp[l] += hl;
        xmm[k] -= hk;
        xmm[l] -= hl;
        (g(t, &xpp) - g(t, &xpm) - g(t, &xmp) + g(t, &xmm)) / (4.0 * hk * hl)
    }
}
