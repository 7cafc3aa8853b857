//! Temporally correlated isotropic Rayleigh channel.
//!
//! The channel vector evolves as a first-order Gauss–Markov process
//!
//!   h' = ρ·h + √(1−ρ²)·w,   w ~ CN(0, I),
//!
//! with ρ = J₀(2π f_D T_c), the one-slot value of Clarke's autocorrelation.
//! The recursion keeps h stationary with i.i.d. CN(0, 1) entries, so the
//! power g = ‖h‖² is Gamma(L, 1) and the shape s = h/‖h‖ is isotropic.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::complex_normal;
use crate::special::bessel_j0;

const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub h: Vec<Complex64>,
    /// Channel power ‖h‖².
    pub g: f64,
    /// Channel shape h/‖h‖.
    pub s: Vec<Complex64>,
}

impl ChannelState {
    pub fn from_h(h: Vec<Complex64>) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::InvalidDimension("channel needs at least one antenna".into()));
        }
        let g = norm_sqr(&h);
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::InvalidParameter(format!("channel power must be positive and finite, got {g}")));
        }
        let inv = 1.0 / g.sqrt();
        let s = h.iter().map(|x| x * inv).collect();
        Ok(Self { h, g, s })
    }

    pub fn antennas(&self) -> usize {
        self.h.len()
    }

    /// One Gauss–Markov step, reusing the allocations of `self`.
    pub fn evolve_in_place<R: Rng + ?Sized>(&mut self, params: &FadingParams, rng: &mut R) {
        let rho = params.rho;
        if rho == 1.0 {
            return;
        }
        let innovation = (1.0 - rho * rho).max(0.0).sqrt();
        let mut g = 0.0;
        for x in self.h.iter_mut() {
            *x = *x * rho + complex_normal(rng) * innovation;
            g += x.norm_sqr();
        }
        // A zero draw has probability zero; keep the previous shape if it happens.
        if g > 0.0 {
            self.g = g;
            let inv = 1.0 / g.sqrt();
            for (s, x) in self.s.iter_mut().zip(&self.h) {
                *s = x * inv;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingParams {
    pub antennas: usize,
    /// Normalized Doppler f_D·T_c in cycles per slot.
    pub doppler_slot: f64,
    /// One-slot correlation J₀(2π f_D T_c).
    pub rho: f64,
}

impl FadingParams {
    pub fn new(antennas: usize, doppler_slot: f64) -> Result<Self> {
        if antennas == 0 {
            return Err(Error::InvalidDimension("antenna count must be at least 1".into()));
        }
        if !doppler_slot.is_finite() || doppler_slot < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "normalized Doppler must be finite and nonnegative, got {doppler_slot}"
            )));
        }
        let rho = if doppler_slot == 0.0 { 1.0 } else { bessel_j0(2.0 * std::f64::consts::PI * doppler_slot)? };
        Ok(Self { antennas, doppler_slot, rho })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Beamformer {
    pub f: Vec<Complex64>,
}

impl Beamformer {
    pub fn new(f: Vec<Complex64>) -> Result<Self> {
        if f.is_empty() {
            return Err(Error::InvalidDimension("beamformer needs at least one antenna".into()));
        }
        let n = norm_sqr(&f);
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidParameter(format!("beamformer must be unit norm, |f|^2 = {n}")));
        }
        Ok(Self { f })
    }

    /// Beamformer matched to a channel shape (perfect CSI).
    pub fn matched(state: &ChannelState) -> Self {
        Self { f: state.s.clone() }
    }
}

pub fn sample_isotropic_channel<R: Rng + ?Sized>(antennas: usize, rng: &mut R) -> Result<ChannelState> {
    if antennas == 0 {
        return Err(Error::InvalidDimension("antenna count must be at least 1".into()));
    }
    loop {
        let h: Vec<Complex64> = (0..antennas).map(|_| complex_normal(rng)).collect();
        if norm_sqr(&h) > 0.0 {
            return ChannelState::from_h(h);
        }
    }
}

pub fn evolve_channel<R: Rng + ?Sized>(
    state: &ChannelState,
    params: &FadingParams,
    rng: &mut R,
) -> Result<ChannelState> {
    if state.antennas() != params.antennas {
        return Err(Error::DimensionMismatch { expected: params.antennas, found: state.antennas() });
    }
    let mut next = state.clone();
    next.evolve_in_place(params, rng);
    Ok(next)
}

/// z = |s†f|².
pub fn alignment(s: &[Complex64], f: &[Complex64]) -> Result<f64> {
    if s.len() != f.len() {
        return Err(Error::DimensionMismatch { expected: s.len(), found: f.len() });
    }
    Ok(alignment_unchecked(s, f))
}

#[inline]
pub(crate) fn alignment_unchecked(s: &[Complex64], f: &[Complex64]) -> f64 {
    inner(s, f).norm_sqr().min(1.0)
}

/// s†f
#[inline]
pub(crate) fn inner(s: &[Complex64], f: &[Complex64]) -> Complex64 {
    s.iter().zip(f).map(|(a, b)| a.conj() * b).sum()
}

#[inline]
pub(crate) fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// Isotropically distributed unit vector.
pub fn random_unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<Complex64> {
    loop {
        let v: Vec<Complex64> = (0..dim).map(|_| complex_normal(rng)).collect();
        let n = norm_sqr(&v);
        if n > 0.0 {
            let inv = 1.0 / n.sqrt();
            return v.into_iter().map(|x| x * inv).collect();
        }
    }
}

/// Unit vector f with |s†f|² = z whose component orthogonal to s is isotropic.
///
/// For a single antenna every unit vector is a phase rotation of s, so the
/// result is s and the requested alignment is ignored.
pub fn unit_vector_with_alignment<R: Rng + ?Sized>(s: &[Complex64], z: f64, rng: &mut R) -> Vec<Complex64> {
    let dim = s.len();
    if dim == 1 {
        return s.to_vec();
    }
    let z = z.clamp(0.0, 1.0);
    let u = loop {
        let v: Vec<Complex64> = (0..dim).map(|_| complex_normal(rng)).collect();
        let proj = inner(s, &v);
        let u: Vec<Complex64> = v.iter().zip(s).map(|(x, si)| x - si * proj).collect();
        let n = norm_sqr(&u);
        if n > 1e-24 {
            let inv = 1.0 / n.sqrt();
            break u.into_iter().map(|x| x * inv).collect::<Vec<_>>();
        }
    };
    let a = z.sqrt();
    let b = (1.0 - z).sqrt();
    s.iter().zip(&u).map(|(si, ui)| si * a + ui * b).collect()
}
