//! Exact minimization of the objective along a line.
//!
//! Along `alpha + t d` the objective is
//! `(1/m) sum_i max(0, z_i - t s_i) + sum_c Lambda_c |alpha_c + t d_c|` plus a
//! constant, a convex piecewise-linear function of `t`. Its minimizer sits at a
//! kink, found by sorting the kinks and accumulating slope jumps.

use std::cmp::Ordering;

/// One kink: location and the slope increase across it.
#[derive(Clone, Copy, Debug)]
struct Kink {
    at: f64,
    jump: f64,
}

/// Minimizes `(1/m) sum_i max(0, z_i - t s_i) + sum (lambda |a + t d|)` over `t`.
///
/// `hinge` yields `(z_i, s_i)` and `l1` yields `(a, d, lambda)`. Among all
/// minimizers the one closest to zero is returned; if the function is
/// unbounded below the last kink is returned.
pub(crate) fn minimize_piecewise_linear(
    hinge: impl Iterator<Item = (f64, f64)>,
    l1: impl Iterator<Item = (f64, f64, f64)>,
    inv_m: f64,
) -> f64 {
    let mut slope = 0.0;
    let mut kinks = Vec::new();
    for (z, s) in hinge {
        if s != 0.0 {
            // Left of the kink the term is active with slope -s when s > 0.
            if s > 0.0 {
                slope -= s * inv_m;
            }
            kinks.push(Kink {
                at: z / s,
                jump: s.abs() * inv_m,
            });
        }
    }
    for (a, d, lam) in l1 {
        if d != 0.0 && lam > 0.0 {
            let w = lam * d.abs();
            slope -= w;
            kinks.push(Kink { at: -a / d, jump: 2.0 * w });
        }
    }
    if kinks.is_empty() {
        return 0.0;
    }
    kinks.sort_by(|x, y| x.at.partial_cmp(&y.at).unwrap_or(Ordering::Equal));

    if slope >= 0.0 {
        return 0.0f64.min(kinks[0].at);
    }
    let mut t = 0;
    while t < kinks.len() {
        let at = kinks[t].at;
        while t < kinks.len() && kinks[t].at == at {
            slope += kinks[t].jump;
            t += 1;
        }
        if slope > 0.0 {
            return at;
        }
        if slope == 0.0 {
            let next = kinks.get(t).map_or(f64::INFINITY, |k| k.at);
            return 0.0f64.clamp(at, next);
        }
    }
    kinks[kinks.len() - 1].at
}
