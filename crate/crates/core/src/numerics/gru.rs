//! Gated recurrent unit, batched over rows.
//!
//! Gate layout in the `3H`-wide weight blocks is `[update | reset | candidate]`:
//!
//! ```text
//! u  = σ(x·Wx_u + h·Wh_u + b_u)
//! r  = σ(x·Wx_r + h·Wh_r + b_r)
//! n  = tanh(x·Wx_n + b_n + r ⊙ (h·Wh_n))
//! h' = (1 − u) ⊙ n + u ⊙ h
//! ```

use super::layers::sigmoid;
use super::tensor::{gemm, Tensor2};
use crate::error::{Error, Result};

/// Borrowed GRU weights: `wx` is `in × 3H`, `wh` is `H × 3H`, `b` is `1 × 3H`.
#[derive(Debug, Clone, Copy)]
pub struct GruWeights<'a> {
    pub wx: &'a Tensor2,
    pub wh: &'a Tensor2,
    pub b: &'a Tensor2,
}

impl GruWeights<'_> {
    pub fn hidden(&self) -> usize {
        self.wh.rows()
    }

    fn check(&self, x: &Tensor2, h: &Tensor2) -> Result<()> {
        let hd = self.hidden();
        if self.wh.cols() != 3 * hd || self.wx.cols() != 3 * hd || self.b.shape() != (1, 3 * hd) {
            return Err(Error::Dimension {
                op: "gru weights",
                left: self.wx.shape(),
                right: self.wh.shape(),
            });
        }
        if x.cols() != self.wx.rows() || x.rows() != h.rows() {
            return Err(Error::Dimension {
                op: "gru_step input",
                left: x.shape(),
                right: self.wx.shape(),
            });
        }
        if h.cols() != hd {
            return Err(Error::Dimension {
                op: "gru_step hidden",
                left: h.shape(),
                right: self.wh.shape(),
            });
        }
        Ok(())
    }
}

/// Intermediates recorded by [`gru_step`] for the backward pass.
#[derive(Debug, Clone)]
pub struct GruCache {
    pub x: Tensor2,
    pub h_prev: Tensor2,
    u: Tensor2,
    r: Tensor2,
    n: Tensor2,
    /// `h_prev · Wh_n`
    hn: Tensor2,
}

/// Gradient accumulators for GRU weights.
#[derive(Debug, Clone)]
pub struct GruGrads {
    pub wx: Tensor2,
    pub wh: Tensor2,
    pub b: Tensor2,
}

impl GruGrads {
    pub fn zeros_for(w: &GruWeights<'_>) -> Self {
        GruGrads {
            wx: Tensor2::zeros(w.wx.rows(), w.wx.cols()),
            wh: Tensor2::zeros(w.wh.rows(), w.wh.cols()),
            b: Tensor2::zeros(1, w.b.cols()),
        }
    }
}

/// One GRU step for a batch of rows. Returns the next hidden state and the
/// cache needed by [`gru_step_backward`].
pub fn gru_step(x: &Tensor2, h_prev: &Tensor2, w: GruWeights<'_>) -> Result<(Tensor2, GruCache)> {
    w.check(x, h_prev)?;
    let hd = w.hidden();
    let rows = x.rows();

    let mut gx = x.matmul(w.wx)?;
    gx.add_row_broadcast(w.b)?;
    let gh = h_prev.matmul(w.wh)?;

    let mut u = Tensor2::zeros(rows, hd);
    let mut r = Tensor2::zeros(rows, hd);
    let mut n = Tensor2::zeros(rows, hd);
    let mut hn = Tensor2::zeros(rows, hd);
    let mut h_next = Tensor2::zeros(rows, hd);
    for i in 0..rows {
        let gxr = gx.row(i);
        let ghr = gh.row(i);
        let hp = h_prev.row(i);
        for j in 0..hd {
            let uj = sigmoid(gxr[j] + ghr[j]);
            let rj = sigmoid(gxr[hd + j] + ghr[hd + j]);
            let hnj = ghr[2 * hd + j];
            let nj = (gxr[2 * hd + j] + rj * hnj).tanh();
            u.row_mut(i)[j] = uj;
            r.row_mut(i)[j] = rj;
            n.row_mut(i)[j] = nj;
            hn.row_mut(i)[j] = hnj;
            h_next.row_mut(i)[j] = (1.0 - uj) * nj + uj * hp[j];
        }
    }
    let cache = GruCache {
        x: x.clone(),
        h_prev: h_prev.clone(),
        u,
        r,
        n,
        hn,
    };
    Ok((h_next, cache))
}

/// Backward pass of one step. Weight gradients are accumulated into
/// `grads`; returns `(dx, dh_prev)`.
pub fn gru_step_backward(
    cache: &GruCache,
    w: GruWeights<'_>,
    dh_next: &Tensor2,
    grads: &mut GruGrads,
) -> Result<(Tensor2, Tensor2)> {
    let hd = w.hidden();
    let rows = cache.x.rows();
    if dh_next.shape() != (rows, hd) {
        return Err(Error::Dimension {
            op: "gru_step_backward",
            left: dh_next.shape(),
            right: (rows, hd),
        });
    }
    let mut dgx = Tensor2::zeros(rows, 3 * hd);
    let mut dgh = Tensor2::zeros(rows, 3 * hd);
    let mut dh_prev = Tensor2::zeros(rows, hd);
    for i in 0..rows {
        let dh = dh_next.row(i);
        let hp = cache.h_prev.row(i);
        let (u, r, n, hn) = (
            cache.u.row(i),
            cache.r.row(i),
            cache.n.row(i),
            cache.hn.row(i),
        );
        let dgx_row = dgx.row_mut(i);
        for j in 0..hd {
            let du = dh[j] * (hp[j] - n[j]);
            let dn = dh[j] * (1.0 - u[j]);
            let dn_pre = dn * (1.0 - n[j] * n[j]);
            let dr = dn_pre * hn[j];
            dgx_row[j] = du * u[j] * (1.0 - u[j]);
            dgx_row[hd + j] = dr * r[j] * (1.0 - r[j]);
            dgx_row[2 * hd + j] = dn_pre;
        }
        let dgh_row = dgh.row_mut(i);
        for j in 0..hd {
            dgh_row[j] = dgx.row(i)[j];
            dgh_row[hd + j] = dgx.row(i)[hd + j];
            dgh_row[2 * hd + j] = dgx.row(i)[2 * hd + j] * r[j];
        }
        let dhp = dh_prev.row_mut(i);
        for j in 0..hd {
            dhp[j] = dh[j] * u[j];
        }
    }
    gemm(1.0, &cache.x, true, &dgx, false, 1.0, &mut grads.wx, "gru dwx")?;
    gemm(1.0, &cache.h_prev, true, &dgh, false, 1.0, &mut grads.wh, "gru dwh")?;
    grads.b.add_scaled(&dgx.sum_rows(), 1.0)?;
    let dx = dgx.matmul_t(w.wx)?;
    gemm(1.0, &dgh, false, w.wh, true, 1.0, &mut dh_prev, "gru dh")?;
    Ok((dx, dh_prev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::grad_check;
    use crate::numerics::rng::SeededRng;

    #[test]
    fn zero_params_halve_the_state() {
        let wx = Tensor2::zeros(3, 6);
        let wh = Tensor2::zeros(2, 6);
        let b = Tensor2::zeros(1, 6);
        let w = GruWeights {
            wx: &wx,
            wh: &wh,
            b: &b,
        };
        let h = Tensor2::from_rows(&[[0.4, -0.8]]).unwrap();
        let x = Tensor2::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        let (h1, _) = gru_step(&x, &h, w).unwrap();
        assert!((h1.get(0, 0) - 0.2).abs() < 1e-15);
        assert!((h1.get(0, 1) + 0.4).abs() < 1e-15);
    }

    #[test]
    fn zero_input_zero_state_is_fixed_point() {
        let mut rng = SeededRng::new(5, "gru");
        let wx = rng.gaussian(3, 6);
        let wh = rng.gaussian(2, 6);
        let b = Tensor2::zeros(1, 6);
        let w = GruWeights {
            wx: &wx,
            wh: &wh,
            b: &b,
        };
        let (h1, _) = gru_step(&Tensor2::zeros(1, 3), &Tensor2::zeros(1, 2), w).unwrap();
        assert!(h1.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn state_stays_in_open_unit_interval() {
        let mut rng = SeededRng::new(6, "gru");
        let wx = rng.gaussian(4, 15);
        let wh = rng.gaussian(5, 15);
        let b = rng.gaussian(1, 15);
        let w = GruWeights {
            wx: &wx,
            wh: &wh,
            b: &b,
        };
        let mut h = Tensor2::zeros(8, 5);
        for _ in 0..20 {
            let x = rng.gaussian(8, 4);
            h = gru_step(&x, &h, w).unwrap().0;
            assert!(h.data().iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn dimension_errors() {
        let wx = Tensor2::zeros(3, 6);
        let wh = Tensor2::zeros(2, 6);
        let b = Tensor2::zeros(1, 6);
        let w = GruWeights {
            wx: &wx,
            wh: &wh,
            b: &b,
        };
        assert!(gru_step(&Tensor2::zeros(1, 2), &Tensor2::zeros(1, 2), w).is_err());
        assert!(gru_step(&Tensor2::zeros(1, 3), &Tensor2::zeros(1, 3), w).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (rows, inp, hd) = (2, 3, 4);
        let mut rng = SeededRng::new(99, "gru-fd");
        let shapes = [(rows, inp), (rows, hd), (inp, 3 * hd), (hd, 3 * hd), (1, 3 * hd)];
        let sizes: Vec<usize> = shapes.iter().map(|(r, c)| r * c).collect();
        let c = rng.gaussian(rows, hd);
        let p0: Vec<f64> = (0..sizes.iter().sum::<usize>())
            .map(|_| 0.5 * rng.normal())
            .collect();
        let loss = |p: &[f64]| {
            let mut off = 0;
            let mut ts = Vec::new();
            for (&(r, cc), &n) in shapes.iter().zip(&sizes) {
                ts.push(Tensor2::from_vec(r, cc, p[off..off + n].to_vec()).unwrap());
                off += n;
            }
            let w = GruWeights {
                wx: &ts[2],
                wh: &ts[3],
                b: &ts[4],
            };
            let (h1, cache) = gru_step(&ts[0], &ts[1], w).unwrap();
            let l: f64 = h1.data().iter().zip(c.data()).map(|(a, b)| a * b).sum();
            let mut g = GruGrads::zeros_for(&w);
            let (dx, dh) = gru_step_backward(&cache, w, &c, &mut g).unwrap();
            let mut grad = dx.into_data();
            grad.extend(dh.into_data());
            grad.extend(g.wx.into_data());
            grad.extend(g.wh.into_data());
            grad.extend(g.b.into_data());
            (l, grad)
        };
        let err = grad_check(loss, &p0, 1e-6);
        assert!(err <= 1e-5, "rel err {err}");
    }
}
