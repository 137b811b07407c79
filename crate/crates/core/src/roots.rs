//! Bracketing root finders: uniform sign-change scan plus bisection.

/// A root located by [`scan_roots`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScannedRoot {
    pub x: f64,
    /// True when the root was found as a near-zero minimum of |g| with no
    /// sign change (a tangency).
    pub tangent: bool,
}

/// Bisects `f` on `[a, b]` until the bracket is narrower than `width`.
/// `f(a)` and `f(b)` must not have the same strict sign.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, width: f64) -> f64 {
    let mut fa = f(a);
    if fa == 0.0 {
        return a;
    }
    if f(b) == 0.0 {
        return b;
    }
    for _ in 0..200 {
        if (b - a).abs() <= width {
            break;
        }
        let m = 0.5 * (a + b);
        if m <= a.min(b) || m >= a.max(b) {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Golden-section minimisation of `f` on `[a, b]`.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, width: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > width {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Finds every root of `g` on `[lo, hi]` by scanning `n` uniform intervals
/// for sign changes, bisecting each to `width`. Local minima of |g| below
/// `tangent_tol` without a sign change are reported as tangent roots.
pub fn scan_roots<F: Fn(f64) -> f64>(
    g: F,
    lo: f64,
    hi: f64,
    n: usize,
    width: f64,
    tangent_tol: f64,
) -> Vec<ScannedRoot> {
    let h = (hi - lo) / n as f64;
    let xs: Vec<f64> = (0..=n).map(|i| if i == n { hi } else { lo + h * i as f64 }).collect();
    let gs: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
    let mut roots: Vec<ScannedRoot> = Vec::new();
    let push = |x: f64, tangent: bool, roots: &mut Vec<ScannedRoot>| {
        if roots.last().is_none_or(|r| (x - r.x).abs() > 4.0 * width) {
            roots.push(ScannedRoot { x, tangent });
        }
    };
    for i in 0..=n {
        if gs[i] == 0.0 {
            push(xs[i], false, &mut roots);
            continue;
        }
        if i < n && gs[i + 1] != 0.0 && (gs[i] < 0.0) != (gs[i + 1] < 0.0) {
            push(bisect(&g, xs[i], xs[i + 1], width), false, &mut roots);
            continue;
        }
        if i > 0 && i < n {
            let (a, b, c) = (gs[i - 1].abs(), gs[i].abs(), gs[i + 1].abs());
            let same_sign = (gs[i - 1] < 0.0) == (gs[i] < 0.0) && (gs[i] < 0.0) == (gs[i + 1] < 0.0);
            if same_sign && b <= a && b <= c && gs[i - 1] != 0.0 && gs[i + 1] != 0.0 {
                let (x, v) = golden_min(|x| g(x).abs(), xs[i - 1], xs[i + 1], width);
                if v < tangent_tol {
                    push(x, true, &mut roots);
                }
            }
        }
    }
    roots
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_roots() {
        let g = |x: f64| (x - 0.1) * (x - 0.5) * (x - 0.9);
        let r = scan_roots(g, 0.0, 1.0, 100, 1e-13, 1e-12);
        let xs: Vec<f64> = r.iter().map(|r| r.x).collect();
        assert_eq!(xs.len(), 3);
        for (x, e) in xs.iter().zip([0.1, 0.5, 0.9]) {
            assert!((x - e).abs() < 1e-12);
        }
    }

    #[test]
    fn tangent_root_reported_once() {
        let g = |x: f64| (x - 0.3337).powi(2);
        let r = scan_roots(g, 0.0, 1.0, 100, 1e-13, 1e-10);
        assert_eq!(r.len(), 1);
        assert!(r[0].tangent);
        assert!((r[0].x - 0.3337).abs() < 1e-5);
    }

    #[test]
    fn bisect_linear() {
        let x = bisect(|x| 2.0 * x - 1.0, 0.0, 3.0, 1e-14);
        assert!((x - 0.5).abs() < 1e-13);
    }
}
