//! Square banded matrices with an in-place LU factorisation.
//!
//! No pivoting: callers only hand in diagonally dominant M-matrices, for which
//! Gaussian elimination is stable without row exchanges.

#[derive(Debug, Clone)]
pub(crate) struct BandMatrix {
    n: usize,
    half: usize,
    /// Row-major, `2 * half + 1` entries per row; entry `(i, j)` lives at
    /// `i * width + (j + half - i)`.
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, half: usize) -> Self {
        Self {
            n,
            half,
            data: vec![0.0; n * (2 * half + 1)],
        }
    }

    #[inline]
    fn width(&self) -> usize {
        2 * self.half + 1
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.half >= i && j <= i + self.half);
        i * self.width() + (j + self.half - i)
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        let w = self.width();
        for i in 0..self.n {
            let lo = i.saturating_sub(self.half);
            let hi = (i + self.half).min(self.n - 1);
            let row = &self.data[i * w..(i + 1) * w];
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += row[j + self.half - i] * x[j];
            }
            out[i] = acc;
        }
    }

    /// Overwrites `self` with its LU factors (unit lower triangle implied).
    pub fn factor(mut self) -> BandLu {
        let (n, h, w) = (self.n, self.half, self.width());
        for k in 0..n {
            let pivot = self.data[k * w + h];
            let last = (k + h).min(n - 1);
            for m in k + 1..=last {
                let mk = m * w + (k + h - m);
                let l = self.data[mk] / pivot;
                if l == 0.0 {
                    continue;
                }
                self.data[mk] = l;
                for c in k + 1..=last {
                    let kc = k * w + (c + h - k);
                    let mc = m * w + (c + h - m);
                    self.data[mc] -= l * self.data[kc];
                }
            }
        }
        BandLu { m: self }
    }
}

pub(crate) struct BandLu {
    m: BandMatrix,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, h, w) = (self.m.n, self.m.half, self.m.width());
        let d = &self.m.data;
        for i in 0..n {
            let lo = i.saturating_sub(h);
            let mut acc = b[i];
            for j in lo..i {
                acc -= d[i * w + (j + h - i)] * b[j];
            }
            b[i] = acc;
        }
        for i in (0..n).rev() {
            let hi = (i + h).min(n - 1);
            let mut acc = b[i];
            for j in i + 1..=hi {
                acc -= d[i * w + (j + h - i)] * b[j];
            }
            b[i] = acc / d[i * w + h];
        }
    }
}
