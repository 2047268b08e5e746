//! Brute-force steady state: integrate the amplitude equations from the
//! empty state with an adaptive Dormand–Prince 5(4) pair until the time
//! derivative vanishes. Used to cross-check the closed form in
//! [`crate::response::steady_amplitudes`].

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::response::{SteadyAmplitudes, TwoModeModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Give up after this much physical time (s).
    pub t_max: f64,
    /// Stop once ‖d(b, d)/dt‖ < tol·λ_b.
    pub tol: f64,
    /// Relative local error tolerance of the step controller.
    pub rtol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            t_max: 1e-3,
            tol: 1e-9,
            rtol: 1e-10,
        }
    }
}

type State = [f64; 4];

// Dormand–Prince coefficients.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Rates rescaled by `scale` so that time is dimensionless.
struct Scaled {
    omega_b: f64,
    omega_d: f64,
    j: f64,
    lambda: f64,
    gamma_b: f64,
    gamma_d: f64,
}

impl Scaled {
    fn rhs(&self, y: &State) -> State {
        let b = Complex64::new(y[0], y[1]);
        let d = Complex64::new(y[2], y[3]);
        let i = Complex64::i();
        let db = -i * self.omega_b * b - i * self.j * d - i * self.lambda - self.gamma_b * b;
        let dd = -i * self.omega_d * d - i * self.j * b - self.gamma_d * d;
        [db.re, db.im, dd.re, dd.im]
    }
}

fn axpy(y: &State, terms: &[(f64, &State)], h: f64) -> State {
    let mut out = *y;
    for (coef, k) in terms {
        for n in 0..4 {
            out[n] += h * coef * k[n];
        }
    }
    out
}

fn norm(v: &State) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn integrate_to_steady(m: &TwoModeModel, t_max: f64, tol: f64) -> Result<SteadyAmplitudes> {
    integrate_to_steady_with(
        m,
        &OracleOptions {
            t_max,
            tol,
            ..OracleOptions::default()
        },
    )
}

pub fn integrate_to_steady_with(m: &TwoModeModel, opts: &OracleOptions) -> Result<SteadyAmplitudes> {
    m.check()?;
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("tol", "must be > 0"));
    }
    if !(opts.rtol > 0.0) {
        return Err(Error::invalid("rtol", "must be > 0"));
    }
    if !(opts.t_max > 0.0) {
        return Err(Error::invalid("t_max", "must be > 0"));
    }

    let scale = [m.omega_b, m.omega_d, m.j, m.lambda_b, m.gamma_b, m.gamma_d]
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let sys = Scaled {
        omega_b: m.omega_b / scale,
        omega_d: m.omega_d / scale,
        j: m.j / scale,
        lambda: m.lambda_b / scale,
        gamma_b: m.gamma_b / scale,
        gamma_d: m.gamma_d / scale,
    };
    let tau_max = opts.t_max * scale;
    // physical ‖ẏ‖ = scale·‖ẏ_τ‖ must drop below tol·λ_b
    let threshold = opts.tol * sys.lambda;
    // the local error floor sets the smallest reachable ‖ẏ‖
    let rtol = opts.rtol.min(0.1 * opts.tol).max(1e-15);
    // amplitudes are of order λ/Γ ≥ λ/scale
    let atol = rtol * sys.lambda.max(f64::MIN_POSITIVE);

    let mut y: State = [0.0; 4];
    let mut k1 = sys.rhs(&y);
    if norm(&k1) <= threshold {
        return Ok(SteadyAmplitudes::from_amplitudes(
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ));
    }

    let mut tau = 0.0;
    let mut h = 1e-3 / sys.gamma_b.max(sys.gamma_d).max(1e-12).min(1.0);
    h = h.min(0.01);
    let mut steps = 0usize;
    while tau < tau_max {
        steps += 1;
        if steps > 50_000_000 {
            break;
        }
        let k2 = sys.rhs(&axpy(&y, &[(A21, &k1)], h));
        let k3 = sys.rhs(&axpy(&y, &[(A31, &k1), (A32, &k2)], h));
        let k4 = sys.rhs(&axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h));
        let k5 = sys.rhs(&axpy(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h));
        let k6 = sys.rhs(&axpy(
            &y,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            h,
        ));
        let y_new = axpy(&y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], h);
        let k7 = sys.rhs(&y_new);

        let mut err = 0.0_f64;
        for n in 0..4 {
            let e = h * (E1 * k1[n] + E3 * k3[n] + E4 * k4[n] + E5 * k5[n] + E6 * k6[n] + E7 * k7[n]);
            let sc = atol + rtol * y[n].abs().max(y_new[n].abs());
            err = err.max((e / sc).abs());
        }

        if err <= 1.0 {
            tau += h;
            y = y_new;
            k1 = k7;
            if norm(&k1) < threshold {
                let b = Complex64::new(y[0], y[1]);
                let d = Complex64::new(y[2], y[3]);
                return Ok(SteadyAmplitudes::from_amplitudes(b, d));
            }
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
        h = h.min(tau_max - tau).max(f64::EPSILON);
    }

    Err(Error::NotConverged {
        t: tau / scale,
        residual: norm(&k1) * scale,
    })
}
