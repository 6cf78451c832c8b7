use crate::error::Result;
use crate::measures::DensityComponent;

/// Running value of `I(t) = ∫_0^t c e^{−θ(t−u)} g(u) du` for `g` piecewise
/// linear on the mesh, advanced in O(1) per step:
///
/// `I(t + h) = e^{−θh} I(t) + w_new g(t + h) + w_old g(t)`,
///
/// where `w_new = m0 − m1/h`, `w_old = m1/h` and `(m0, m1)` are the moments
/// of `c e^{−θs}` on `[0, h]`.
#[derive(Debug, Clone)]
pub struct ExpConvolution {
    component: DensityComponent,
    rate: f64,
    value: f64,
    cached_h: f64,
    decay: f64,
    w_new: f64,
    w_old: f64,
}

impl ExpConvolution {
    pub fn new(rate: f64, scale: f64) -> Result<Self> {
        Ok(Self {
            component: DensityComponent::exponential(rate, scale)?,
            rate,
            value: 0.0,
            cached_h: f64::NAN,
            decay: 1.0,
            w_new: 0.0,
            w_old: 0.0,
        })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// `(e^{−θh}, w_new, w_old)`.
    pub fn weights(&mut self, h: f64) -> (f64, f64, f64) {
        if h != self.cached_h {
            let (m0, m1) = self.component.moments(0.0, h);
            self.cached_h = h;
            self.decay = (-self.rate * h).exp();
            self.w_old = m1 / h;
            self.w_new = m0 - self.w_old;
        }
        (self.decay, self.w_new, self.w_old)
    }

    /// The value one step of length `h` ahead, without committing it.
    pub fn peek(&mut self, h: f64, g_old: f64, g_new: f64) -> f64 {
        let (d, wn, wo) = self.weights(h);
        d * self.value + wn * g_new + wo * g_old
    }

    pub fn advance(&mut self, h: f64, g_old: f64, g_new: f64) -> f64 {
        self.value = self.peek(h, g_old, g_new);
        self.value
    }
}
