//! 2D discrete Fourier analysis and Gaussian low-pass filtering.
//!
//! The forward transform is an unnormalized radix-2 Cooley-Tukey FFT shifted
//! to a DC-centered layout; the inverse applies the 1/(H*W) factor. The mask
//! is an isotropic Gaussian over normalized frequency coordinates
//! [-0.5, 0.5)^2 with the DC bin at (0, 0), so a given sigma means the same
//! cutoff at every feature-map resolution.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Sigma at or above this value means "no filtering": the mask is exactly
/// all-ones, giving tests and callers an exact identity path.
pub const ALL_PASS_SIGMA: f64 = 10.0;

/// Complex 2D frequency-domain array with the zero frequency at
/// (H/2, W/2) (DC-centered layout), row-major.
#[derive(Clone, Debug)]
pub struct Spectrum<T> {
    pub height: usize,
    pub width: usize,
    pub values: Vec<Complex<T>>,
}

/// Parameters of the centered Gaussian low-pass mask.
///
/// `center` is in normalized frequency coordinates (full spectrum width =
/// 1.0) relative to the DC bin; `(0.0, 0.0)` is the spectrum center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianMaskSpec {
    pub center: (f64, f64),
    pub sigma: f64,
}

impl GaussianMaskSpec {
    pub fn centered(sigma: f64) -> Self {
        Self {
            center: (0.0, 0.0),
            sigma,
        }
    }
}

fn require_pow2(h: usize, w: usize) -> Result<()> {
    if h == 0 || w == 0 || !h.is_power_of_two() || !w.is_power_of_two() {
        return Err(Error::Dimension(format!(
            "FFT dimensions must be powers of two, got {h}x{w}"
        )));
    }
    Ok(())
}

/// In-place radix-2 Cooley-Tukey on a power-of-two-length buffer.
/// `sign` is -1 for the forward transform, +1 for the inverse (unnormalized).
fn fft1d<T: Real>(buf: &mut [Complex<T>], sign: f64) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    // bit-reversal permutation
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = (i.reverse_bits() >> (usize::BITS - bits)) as usize;
        if j > i {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * std::f64::consts::PI / len as f64;
        let wlen = Complex::new(T::of(ang.cos()), T::of(ang.sin()));
        for chunk in buf.chunks_mut(len) {
            let mut w = Complex::new(T::one(), T::zero());
            let half = len / 2;
            for i in 0..half {
                let u = chunk[i];
                let v = chunk[i + half] * w;
                chunk[i] = u + v;
                chunk[i + half] = u - v;
                w = w * wlen;
            }
        }
        len <<= 1;
    }
}

/// Unnormalized 2D FFT over rows then columns, no shift.
fn fft2_raw<T: Real>(values: &mut [Complex<T>], h: usize, w: usize, sign: f64) {
    for row in values.chunks_mut(w) {
        fft1d(row, sign);
    }
    let mut col = vec![Complex::new(T::zero(), T::zero()); h];
    for j in 0..w {
        for i in 0..h {
            col[i] = values[i * w + j];
        }
        fft1d(&mut col, sign);
        for i in 0..h {
            values[i * w + j] = col[i];
        }
    }
}

/// Move the DC bin from index 0 to (H/2, W/2); its own inverse for even dims.
fn shift<T: Copy>(values: &[T], h: usize, w: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h {
        let si = (i + h / 2) % h;
        for j in 0..w {
            let sj = (j + w / 2) % w;
            out.push(values[si * w + sj]);
        }
    }
    out
}

/// Forward 2D FFT of a real image into a DC-centered [`Spectrum`].
pub fn fft2<T: Real>(image: &[T], h: usize, w: usize) -> Result<Spectrum<T>> {
    require_pow2(h, w)?;
    if image.len() != h * w {
        return Err(Error::Dimension(format!(
            "image length {} != {h}x{w}",
            image.len()
        )));
    }
    let mut values: Vec<Complex<T>> = image
        .iter()
        .map(|v| Complex::new(*v, T::zero()))
        .collect();
    fft2_raw(&mut values, h, w, -1.0);
    Ok(Spectrum {
        height: h,
        width: w,
        values: shift(&values, h, w),
    })
}

/// Inverse 2D FFT back to a real image. The imaginary residue is asserted
/// below `tol * (1 + max|re|)` and discarded; a larger residue means a
/// non-conjugate-symmetric spectrum was passed where a real image was
/// expected.
pub fn ifft2<T: Real>(spectrum: &Spectrum<T>) -> Result<Vec<T>> {
    let (h, w) = (spectrum.height, spectrum.width);
    require_pow2(h, w)?;
    let mut values = shift(&spectrum.values, h, w);
    fft2_raw(&mut values, h, w, 1.0);
    let norm = T::of(1.0 / (h * w) as f64);
    let mut max_re = T::zero();
    let mut max_im = T::zero();
    for v in &mut values {
        *v = *v * norm;
        max_re = max_re.max(v.re.abs());
        max_im = max_im.max(v.im.abs());
    }
    let tol = T::of((T::epsilon().as_f64() * 16384.0).max(1e-9));
    if max_im > tol * (T::one() + max_re) {
        return Err(Error::Numeric(format!(
            "ifft2: imaginary residue {max_im} exceeds threshold (max |re| = {max_re})"
        )));
    }
    Ok(values.into_iter().map(|v| v.re).collect())
}

/// Evaluate the Gaussian low-pass mask on an HxW centered grid.
///
/// mask(u,v) = exp(-((u_hat - u_c)^2 + (v_hat - v_c)^2) / (2 sigma^2)) with
/// pixel (i,j) mapped to (u_hat, v_hat) = ((i - H/2)/H, (j - W/2)/W).
pub fn gaussian_mask<T: Real>(spec: &GaussianMaskSpec, h: usize, w: usize) -> Result<Vec<T>> {
    if spec.sigma <= 0.0 {
        return Err(Error::Parameter(format!(
            "gaussian mask sigma must be > 0, got {}",
            spec.sigma
        )));
    }
    if spec.sigma >= ALL_PASS_SIGMA {
        return Ok(vec![T::one(); h * w]);
    }
    let inv = 1.0 / (2.0 * spec.sigma * spec.sigma);
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h {
        let u = (i as f64 - (h / 2) as f64) / h as f64 - spec.center.0;
        for j in 0..w {
            let v = (j as f64 - (w / 2) as f64) / w as f64 - spec.center.1;
            out.push(T::of((-(u * u + v * v) * inv).exp()));
        }
    }
    Ok(out)
}

/// Low-frequency reconstruction: ifft2(fft2(image) * mask). Linear in the
/// image; energy never increases (|mask| <= 1).
pub fn lowpass_reconstruct<T: Real>(
    image: &[T],
    h: usize,
    w: usize,
    spec: &GaussianMaskSpec,
) -> Result<Vec<T>> {
    let mask = gaussian_mask::<T>(spec, h, w)?;
    let mut spectrum = fft2(image, h, w)?;
    for (s, m) in spectrum.values.iter_mut().zip(&mask) {
        *s = Complex::new(s.re * *m, s.im * *m);
    }
    ifft2(&spectrum)
}

/// Low-pass reconstruction for arbitrary dimensions: zero-pads to the next
/// power of two (image centered in the canvas) and center-crops after
/// inversion. Power-of-two inputs take the direct path.
pub fn lowpass_reconstruct_padded<T: Real>(
    image: &[T],
    h: usize,
    w: usize,
    spec: &GaussianMaskSpec,
) -> Result<Vec<T>> {
    if h.is_power_of_two() && w.is_power_of_two() {
        return lowpass_reconstruct(image, h, w, spec);
    }
    let ph = h.next_power_of_two();
    let pw = w.next_power_of_two();
    let (oy, ox) = ((ph - h) / 2, (pw - w) / 2);
    let mut canvas = vec![T::zero(); ph * pw];
    for i in 0..h {
        canvas[(i + oy) * pw + ox..(i + oy) * pw + ox + w]
            .copy_from_slice(&image[i * w..(i + 1) * w]);
    }
    let filtered = lowpass_reconstruct(&canvas, ph, pw, spec)?;
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h {
        out.extend_from_slice(&filtered[(i + oy) * pw + ox..(i + oy) * pw + ox + w]);
    }
    Ok(out)
}

/// Adjoint of [`lowpass_reconstruct_padded`] as a linear map: zero-pad, apply
/// the (self-adjoint) filter, crop. Used by the autodiff backward pass of the
/// dual-path layer.
pub fn lowpass_adjoint_padded<T: Real>(
    grad: &[T],
    h: usize,
    w: usize,
    spec: &GaussianMaskSpec,
) -> Result<Vec<T>> {
    // The centered mask grid is symmetric under frequency negation, so the
    // spatial map is circular convolution with a real even kernel: the filter
    // itself is self-adjoint. Pad and crop are adjoints of each other, and the
    // padded forward is crop . filter . pad, whose adjoint has the same form.
    lowpass_reconstruct_padded(grad, h, w, spec)
}
