//! Real Schur decomposition by Hessenberg reduction and Francis double-shift
//! QR with deflation and exceptional shifts. 2x2 diagonal blocks of the
//! result always hold a complex-conjugate pair and have equal diagonals.

use nalgebra::Hessenberg;

use crate::matrix::RealMatrix;

const EXCEPTIONAL_EVERY: usize = 10;
const EXC_DAT1: f64 = 0.75;
const EXC_DAT2: f64 = -0.4375;

/// `a = q·t·qᵀ` with `q` orthogonal and `t` quasi upper triangular, or `None`
/// when an eigenvalue fails to deflate within the iteration budget.
pub(crate) fn schur(a: &RealMatrix) -> Option<(RealMatrix, RealMatrix)> {
    let n = a.nrows();
    if n == 0 {
        return Some((RealMatrix::zeros(0, 0), RealMatrix::zeros(0, 0)));
    }
    let (mut z, mut h) = Hessenberg::new(a.clone()).unpack();
    for j in 0..n {
        for i in j + 2..n {
            h[(i, j)] = 0.0;
        }
    }
    hqr(&mut h, &mut z)?;
    for j in 0..n {
        for i in j + 2..n {
            h[(i, j)] = 0.0;
        }
    }
    Some((z, h))
}

fn sign(a: f64, b: f64) -> f64 {
    a.abs().copysign(b)
}

/// Householder reflector `(I − τ·v·vᵀ)·x = β·e₁` with `v₀ = 1`; overwrites
/// `x[0]` with β and `x[1..]` with `v[1..]`.
fn reflector(x: &mut [f64]) -> f64 {
    let alpha = x[0];
    let xnorm = x[1..].iter().fold(0.0f64, |acc, v| acc.hypot(*v));
    if xnorm == 0.0 {
        return 0.0;
    }
    let beta = -sign(alpha.hypot(xnorm), alpha);
    let tau = (beta - alpha) / beta;
    let scale = 1.0 / (alpha - beta);
    for v in &mut x[1..] {
        *v *= scale;
    }
    x[0] = beta;
    tau
}

/// Plane rotation applied to two equal-length strided sequences.
fn rotate(
    m: &mut RealMatrix,
    p: [(usize, usize); 2],
    step: (usize, usize),
    len: usize,
    cs: f64,
    sn: f64,
) {
    let [(mut r1, mut c1), (mut r2, mut c2)] = p;
    for _ in 0..len {
        let x = m[(r1, c1)];
        let y = m[(r2, c2)];
        m[(r1, c1)] = cs * x + sn * y;
        m[(r2, c2)] = cs * y - sn * x;
        r1 += step.0;
        c1 += step.1;
        r2 += step.0;
        c2 += step.1;
    }
}

/// Standardises the 2x2 block `[a b; c d]` in place and returns the rotation
/// `(cs, sn)` that does it. Real eigenvalues end up upper triangular; complex
/// ones as `[p b; c p]` with `b·c < 0`.
fn standardize_2x2(a: &mut f64, b: &mut f64, c: &mut f64, d: &mut f64) -> (f64, f64) {
    const MULTPL: f64 = 4.0;
    let (mut cs, mut sn);
    if *c == 0.0 {
        cs = 1.0;
        sn = 0.0;
    } else if *b == 0.0 {
        cs = 0.0;
        sn = 1.0;
        std::mem::swap(a, d);
        *b = -*c;
        *c = 0.0;
    } else if *a - *d == 0.0 && sign(1.0, *b) != sign(1.0, *c) {
        cs = 1.0;
        sn = 0.0;
    } else {
        let temp = *a - *d;
        let mut p = 0.5 * temp;
        let bcmax = b.abs().max(c.abs());
        let bcmis = b.abs().min(c.abs()) * sign(1.0, *b) * sign(1.0, *c);
        let scale = p.abs().max(bcmax);
        let mut z = (p / scale) * p + (bcmax / scale) * bcmis;
        if z >= MULTPL * f64::EPSILON {
            z = p + sign(scale.sqrt() * z.sqrt(), p);
            *a = *d + z;
            *d -= (bcmax / z) * bcmis;
            let tau = c.hypot(z);
            cs = z / tau;
            sn = *c / tau;
            *b -= *c;
            *c = 0.0;
        } else {
            let sigma = *b + *c;
            let tau = sigma.hypot(temp);
            cs = (0.5 * (1.0 + sigma.abs() / tau)).sqrt();
            sn = -(p / (tau * cs)) * sign(1.0, sigma);

            let aa = *a * cs + *b * sn;
            let bb = -*a * sn + *b * cs;
            let cc = *c * cs + *d * sn;
            let dd = -*c * sn + *d * cs;
            *a = aa * cs + cc * sn;
            *b = bb * cs + dd * sn;
            *c = -aa * sn + cc * cs;
            *d = -bb * sn + dd * cs;

            let mid = 0.5 * (*a + *d);
            *a = mid;
            *d = mid;
            if *c != 0.0 {
                if *b != 0.0 {
                    if sign(1.0, *b) == sign(1.0, *c) {
                        let sab = b.abs().sqrt();
                        let sac = c.abs().sqrt();
                        p = sign(sab * sac, *c);
                        let tau = 1.0 / (*b + *c).abs().sqrt();
                        *a = mid + p;
                        *d = mid - p;
                        *b -= *c;
                        *c = 0.0;
                        let cs1 = sab * tau;
                        let sn1 = sac * tau;
                        let t = cs * cs1 - sn * sn1;
                        sn = cs * sn1 + sn * cs1;
                        cs = t;
                    }
                } else {
                    *b = -*c;
                    *c = 0.0;
                    let t = cs;
                    cs = -sn;
                    sn = t;
                }
            }
        }
    }
    (cs, sn)
}

/// Double-shift QR on the upper Hessenberg `h`, accumulating into `z`.
fn hqr(h: &mut RealMatrix, z: &mut RealMatrix) -> Option<()> {
    let n = h.nrows();
    if n == 1 {
        return Some(());
    }
    let ulp = f64::EPSILON;
    let smlnum = f64::MIN_POSITIVE * (n as f64 / ulp);
    let itmax = 30 * n.max(10);
    let mut kdefl = 0usize;

    // Active block is rows/cols l..=i.
    let mut i = n - 1;
    loop {
        let mut l = 0usize;
        let mut converged = false;
        for _ in 0..=itmax {
            let mut k = i;
            while k > l {
                let sub = h[(k, k - 1)].abs();
                if sub <= smlnum {
                    break;
                }
                let mut tst = h[(k - 1, k - 1)].abs() + h[(k, k)].abs();
                if tst == 0.0 {
                    if k >= l + 2 {
                        tst += h[(k - 1, k - 2)].abs();
                    }
                    if k + 1 < n {
                        tst += h[(k + 1, k)].abs();
                    }
                }
                if sub <= ulp * tst {
                    let ab = sub.max(h[(k - 1, k)].abs());
                    let ba = sub.min(h[(k - 1, k)].abs());
                    let diff = (h[(k - 1, k - 1)] - h[(k, k)]).abs();
                    let aa = h[(k, k)].abs().max(diff);
                    let bb = h[(k, k)].abs().min(diff);
                    let s = aa + ab;
                    if ba * (ab / s) <= smlnum.max(ulp * (bb * (aa / s))) {
                        break;
                    }
                }
                k -= 1;
            }
            l = k;
            if l > 0 {
                h[(l, l - 1)] = 0.0;
            }
            if l + 1 >= i {
                converged = true;
                break;
            }
            kdefl += 1;

            let (h11, h12, h21, h22) = if kdefl.is_multiple_of(2 * EXCEPTIONAL_EVERY) {
                let s = h[(i, i - 1)].abs() + h[(i - 1, i - 2)].abs();
                let h11 = EXC_DAT1 * s + h[(i, i)];
                (h11, EXC_DAT2 * s, s, h11)
            } else if kdefl.is_multiple_of(EXCEPTIONAL_EVERY) {
                let s = h[(l + 1, l)].abs() + h[(l + 2, l + 1)].abs();
                let h11 = EXC_DAT1 * s + h[(l, l)];
                (h11, EXC_DAT2 * s, s, h11)
            } else {
                (h[(i - 1, i - 1)], h[(i - 1, i)], h[(i, i - 1)], h[(i, i)])
            };

            let s = h11.abs() + h12.abs() + h21.abs() + h22.abs();
            let (rt1r, rt1i, rt2r, rt2i) = if s == 0.0 {
                (0.0, 0.0, 0.0, 0.0)
            } else {
                let (h11, h12, h21, h22) = (h11 / s, h12 / s, h21 / s, h22 / s);
                let tr = (h11 + h22) / 2.0;
                let det = (h11 - tr) * (h22 - tr) - h12 * h21;
                let rtdisc = det.abs().sqrt();
                if det >= 0.0 {
                    (tr * s, rtdisc * s, tr * s, -rtdisc * s)
                } else {
                    let r1 = tr + rtdisc;
                    let r2 = tr - rtdisc;
                    let r = if (r1 - h22).abs() <= (r2 - h22).abs() {
                        r1 * s
                    } else {
                        r2 * s
                    };
                    (r, 0.0, r, 0.0)
                }
            };

            let mut v = [0.0f64; 3];
            let mut m = i - 2;
            loop {
                let s = (h[(m, m)] - rt2r).abs() + rt2i.abs() + h[(m + 1, m)].abs();
                let h21s = h[(m + 1, m)] / s;
                v[0] = h21s * h[(m, m + 1)] + (h[(m, m)] - rt1r) * ((h[(m, m)] - rt2r) / s)
                    - rt1i * (rt2i / s);
                v[1] = h21s * (h[(m, m)] + h[(m + 1, m + 1)] - rt1r - rt2r);
                v[2] = h21s * h[(m + 2, m + 1)];
                let s = v[0].abs() + v[1].abs() + v[2].abs();
                for x in &mut v {
                    *x /= s;
                }
                if m == l {
                    break;
                }
                let h00 = h[(m, m - 1)].abs() * (v[1].abs() + v[2].abs());
                let h01 = v[0].abs()
                    * (h[(m - 1, m - 1)].abs() + h[(m, m)].abs() + h[(m + 1, m + 1)].abs());
                if h00 <= ulp * h01 {
                    break;
                }
                m -= 1;
            }

            for k in m..i {
                let nr = 3.min(i - k + 1);
                if k > m {
                    for r in 0..nr {
                        v[r] = h[(k + r, k - 1)];
                    }
                }
                let t1 = reflector(&mut v[..nr]);
                if k > m {
                    h[(k, k - 1)] = v[0];
                    h[(k + 1, k - 1)] = 0.0;
                    if k + 2 < i + 1 {
                        h[(k + 2, k - 1)] = 0.0;
                    }
                } else if m > l {
                    h[(k, k - 1)] *= 1.0 - t1;
                }
                let v2 = v[1];
                let t2 = t1 * v2;
                if nr == 3 {
                    let v3 = v[2];
                    let t3 = t1 * v3;
                    for j in k..n {
                        let sum = h[(k, j)] + v2 * h[(k + 1, j)] + v3 * h[(k + 2, j)];
                        h[(k, j)] -= sum * t1;
                        h[(k + 1, j)] -= sum * t2;
                        h[(k + 2, j)] -= sum * t3;
                    }
                    for j in 0..=(k + 3).min(i) {
                        let sum = h[(j, k)] + v2 * h[(j, k + 1)] + v3 * h[(j, k + 2)];
                        h[(j, k)] -= sum * t1;
                        h[(j, k + 1)] -= sum * t2;
                        h[(j, k + 2)] -= sum * t3;
                    }
                    for j in 0..n {
                        let sum = z[(j, k)] + v2 * z[(j, k + 1)] + v3 * z[(j, k + 2)];
                        z[(j, k)] -= sum * t1;
                        z[(j, k + 1)] -= sum * t2;
                        z[(j, k + 2)] -= sum * t3;
                    }
                } else {
                    for j in k..n {
                        let sum = h[(k, j)] + v2 * h[(k + 1, j)];
                        h[(k, j)] -= sum * t1;
                        h[(k + 1, j)] -= sum * t2;
                    }
                    for j in 0..=i {
                        let sum = h[(j, k)] + v2 * h[(j, k + 1)];
                        h[(j, k)] -= sum * t1;
                        h[(j, k + 1)] -= sum * t2;
                    }
                    for j in 0..n {
                        let sum = z[(j, k)] + v2 * z[(j, k + 1)];
                        z[(j, k)] -= sum * t1;
                        z[(j, k + 1)] -= sum * t2;
                    }
                }
            }
        }
        if !converged {
            return None;
        }

        if l + 1 == i {
            let (mut a, mut b, mut c, mut d) =
                (h[(i - 1, i - 1)], h[(i - 1, i)], h[(i, i - 1)], h[(i, i)]);
            let (cs, sn) = standardize_2x2(&mut a, &mut b, &mut c, &mut d);
            h[(i - 1, i - 1)] = a;
            h[(i - 1, i)] = b;
            h[(i, i - 1)] = c;
            h[(i, i)] = d;
            if i + 1 < n {
                rotate(h, [(i - 1, i + 1), (i, i + 1)], (0, 1), n - i - 1, cs, sn);
            }
            if i >= 1 {
                rotate(h, [(0, i - 1), (0, i)], (1, 0), i - 1, cs, sn);
            }
            rotate(z, [(0, i - 1), (0, i)], (1, 0), n, cs, sn);
        }
        kdefl = 0;
        if l == 0 {
            return Some(());
        }
        i = l - 1;
        if i == 0 {
            return Some(());
        }
    }
}
