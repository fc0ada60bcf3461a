#![allow(dead_code)]

//! Straight-line reference transcription of the plastic network, written
//! against the documented genome layout and sharing no code with the crate.

pub struct RefLayer {
    pub w: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub mod_w: Vec<f64>,
    pub mod_b: f64,
    pub trace: Vec<Vec<f64>>,
}

pub struct RefNet {
    pub layers: Vec<RefLayer>,
    pub omega: f64,
    pub tanh: bool,
}

impl RefNet {
    /// Parses a plastic, biased genome for layer widths `sizes`.
    pub fn from_genome(sizes: &[usize], theta: &[f64], omega: f64, tanh: bool) -> RefNet {
        let mut pos = 0;
        let mut next = || {
            let v = theta[pos];
            pos += 1;
            v
        };
        let mut layers = Vec::new();
        for k in 0..sizes.len() - 1 {
            let (n_in, n_out) = (sizes[k], sizes[k + 1]);
            let mut w = vec![vec![0.0; n_in]; n_out];
            for row in w.iter_mut() {
                for x in row.iter_mut() {
                    *x = next();
                }
            }
            let mut alpha = vec![vec![0.0; n_in]; n_out];
            for row in alpha.iter_mut() {
                for x in row.iter_mut() {
                    *x = next();
                }
            }
            let bias: Vec<f64> = (0..n_out).map(|_| next()).collect();
            let mod_w: Vec<f64> = (0..n_out).map(|_| next()).collect();
            let mod_b = next();
            layers.push(RefLayer {
                w,
                alpha,
                bias,
                mod_w,
                mod_b,
                trace: vec![vec![0.0; n_in]; n_out],
            });
        }
        assert_eq!(pos, theta.len(), "genome length");
        RefNet {
            layers,
            omega,
            tanh,
        }
    }

    pub fn step(&mut self, obs: &[f64]) -> Vec<f64> {
        let mut x_prev = obs.to_vec();
        for l in &mut self.layers {
            // x_t = phi((w + alpha H) x_prev + b)
            let mut x_t = Vec::new();
            for i in 0..l.w.len() {
                let mut s = l.bias[i];
                for j in 0..x_prev.len() {
                    s += (l.w[i][j] + l.alpha[i][j] * l.trace[i][j]) * x_prev[j];
                }
                x_t.push(if self.tanh { s.tanh() } else { s });
            }
            // H <- clip(H + M(x_t) x_t x_prev^T)
            let mut z = l.mod_b;
            for i in 0..x_t.len() {
                z += l.mod_w[i] * x_t[i];
            }
            let m = z.tanh();
            for i in 0..x_t.len() {
                for j in 0..x_prev.len() {
                    let h = l.trace[i][j] + m * x_t[i] * x_prev[j];
                    l.trace[i][j] = h.max(-self.omega).min(self.omega);
                }
            }
            x_prev = x_t;
        }
        x_prev
    }
}

/// `|a - b| <= tol * max(1, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}
