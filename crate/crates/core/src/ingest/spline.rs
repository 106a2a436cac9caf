//! Interpolating cubic spline on strictly increasing knots.
//!
//! Natural end conditions (zero second derivative at both ends); with two
//! knots this degenerates to a straight line. Affine data is reproduced
//! exactly.

#[derive(Debug, Clone)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    /// Panics if fewer than two knots are given or lengths differ.
    pub fn new(xs: &[f64], ys: &[f64]) -> Self {
        assert!(xs.len() >= 2 && xs.len() == ys.len());
        let m = if xs.len() == 2 {
            vec![0.0; 2]
        } else {
            natural_second_derivatives(xs, ys)
        };
        Self {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            m,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        // Segment index k such that xs[k] <= x <= xs[k+1], clamped to the ends.
        let k = match self.xs.partition_point(|&knot| knot <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        self.eval_segment(k, x)
    }

    fn eval_segment(&self, k: usize, x: f64) -> f64 {
        let h = self.xs[k + 1] - self.xs[k];
        let a = (self.xs[k + 1] - x) / h;
        let b = (x - self.xs[k]) / h;
        a * self.ys[k]
            + b * self.ys[k + 1]
            + ((a * a * a - a) * self.m[k] + (b * b * b - b) * self.m[k + 1]) * h * h / 6.0
    }

    /// Evaluates at many sorted abscissae in one forward sweep.
    pub fn eval_sorted(&self, xs: impl IntoIterator<Item = f64>) -> Vec<f64> {
        let n = self.xs.len();
        let mut k = 0;
        xs.into_iter()
            .map(|x| {
                while k + 2 < n && x > self.xs[k + 1] {
                    k += 1;
                }
                self.eval_segment(k, x)
            })
            .collect()
    }
}

fn slopes(xs: &[f64], ys: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let d: Vec<f64> = ys
        .windows(2)
        .zip(&h)
        .map(|(w, &hk)| (w[1] - w[0]) / hk)
        .collect();
    (h, d)
}

fn natural_second_derivatives(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let (h, d) = slopes(xs, ys);
    let interior = n - 2;
    let mut sub = vec![0.0; interior];
    let mut diag = vec![0.0; interior];
    let mut sup = vec![0.0; interior];
    let mut rhs = vec![0.0; interior];
    for r in 0..interior {
        let i = r + 1;
        sub[r] = h[i - 1];
        diag[r] = 2.0 * (h[i - 1] + h[i]);
        sup[r] = h[i];
        rhs[r] = 6.0 * (d[i] - d[i - 1]);
    }
    let inner = solve_tridiagonal(&sub, &diag, &sup, &rhs);
    let mut m = vec![0.0; n];
    m[1..n - 1].copy_from_slice(&inner);
    m
}

/// Thomas algorithm. `sub[0]` and `sup[n-1]` are ignored.
fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut r = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    r[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - sub[i] * c[i - 1];
        c[i] = if i + 1 < n { sup[i] / denom } else { 0.0 };
        r[i] = (rhs[i] - sub[i] * r[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = r[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = r[i] - c[i] * x[i + 1];
    }
    x
}
