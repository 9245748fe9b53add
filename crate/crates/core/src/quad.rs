//! Small quadrature toolkit: Gauss–Legendre panels and the Hurwitz zeta
//! function used for lattice tail sums.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * p - pm) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss–Legendre over `[a, b]` split into `panels` equal pieces.
pub struct Composite {
    x: Vec<f64>,
    w: Vec<f64>,
}

impl Composite {
    pub fn new(order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        Composite { x, w }
    }

    pub fn integrate(&self, a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
        let h = (b - a) / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let lo = a + p as f64 * h;
            let mid = lo + 0.5 * h;
            let mut s = 0.0;
            for (xi, wi) in self.x.iter().zip(&self.w) {
                s += wi * f(mid + 0.5 * h * xi);
            }
            total += 0.5 * h * s;
        }
        total
    }
}

const BERNOULLI_2K: [f64; 8] = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0, -691.0 / 2730.0, 7.0 / 6.0, -3617.0 / 510.0];

/// Hurwitz zeta `ζ(s, q) = Σ_{k≥0} (q+k)^{-s}` for `s > 1`, `q > 0`,
/// by Euler–Maclaurin after `shift` explicit terms.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    let shift = if q < 20.0 { (20.0 - q).ceil() as usize } else { 0 };
    let mut head = 0.0;
    for k in 0..shift {
        head += (q + k as f64).powf(-s);
    }
    let a = q + shift as f64;
    let mut sum = a.powf(1.0 - s) / (s - 1.0) + 0.5 * a.powf(-s);
    // rising factorial s(s+1)...(s+2j-2) / (2j)!
    let mut fact = s / 2.0;
    let mut pow = a.powf(-s - 1.0);
    for (j, b) in BERNOULLI_2K.iter().enumerate() {
        let term = b * fact * pow;
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
        let k = 2.0 * (j as f64 + 1.0);
        fact *= (s + k - 1.0) * (s + k) / ((k + 1.0) * (k + 2.0));
        pow /= a * a;
    }
    head + sum
}
