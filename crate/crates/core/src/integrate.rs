//! Classical fixed-step fourth-order Runge-Kutta.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// RK4 stepper that owns its stage buffers, so repeated steps allocate
/// nothing.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self { k1: vec![0.0; dim], k2: vec![0.0; dim], k3: vec![0.0; dim], k4: vec![0.0; dim], tmp: vec![0.0; dim] }
    }

    /// Advances `state` from `t` to `t + dt` in place.
    ///
    /// `f(x, dx)` writes the derivative at `x` into `dx`. The update is
    /// evaluated in a fixed order, so identical inputs give bit-identical
    /// outputs.
    pub fn step<F>(&mut self, f: &mut F, t: f64, state: &mut [f64], dt: f64) -> Result<()>
    where
        F: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        let n = state.len();
        debug_assert_eq!(n, self.k1.len());
        f(state, &mut self.k1)?;
        for i in 0..n {
            self.tmp[i] = state[i] + 0.5 * dt * self.k1[i];
        }
        f(&self.tmp, &mut self.k2)?;
        for i in 0..n {
            self.tmp[i] = state[i] + 0.5 * dt * self.k2[i];
        }
        f(&self.tmp, &mut self.k3)?;
        for i in 0..n {
            self.tmp[i] = state[i] + dt * self.k3[i];
        }
        f(&self.tmp, &mut self.k4)?;
        let h6 = dt / 6.0;
        for i in 0..n {
            state[i] += h6 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        if let Some(component) = state.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteState { time: t + dt, component });
        }
        Ok(())
    }
}

/// One RK4 step returning the new state.
pub fn step_rk4<F>(mut f: F, state: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let mut next = state.to_vec();
    Rk4::new(state.len()).step(&mut f, 0.0, &mut next, dt)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_keeps_state() {
        let x = [1.5, -2.0, 3.25];
        let next = step_rk4(|_, dx| {
            dx.fill(0.0);
            Ok(())
        }, &x, 0.1)
        .unwrap();
        assert_eq!(next, x);
    }

    #[test]
    fn exponential_growth() {
        let next = step_rk4(|x, dx| {
            dx[0] = x[0];
            Ok(())
        }, &[1.0], 0.1)
        .unwrap();
        // fourth-order Taylor polynomial of e^0.1
        let taylor = 1.0 + 0.1 + 0.01 / 2.0 + 0.001 / 6.0 + 0.0001 / 24.0;
        assert!((next[0] - taylor).abs() < 1e-15);
        // remaining gap to exp is the fifth-order term
        let gap = libm::exp(0.1) - next[0];
        assert!((gap / (1e-5 / 120.0) - 1.0).abs() < 0.05);
    }

    #[test]
    fn blow_up_is_reported() {
        let err = step_rk4(|_, dx| {
            dx[0] = 0.0;
            dx[1] = f64::INFINITY;
            Ok(())
        }, &[0.0, 0.0], 0.1)
        .unwrap_err();
        assert_eq!(err, Error::NonFiniteState { time: 0.1, component: 1 });
    }
}
