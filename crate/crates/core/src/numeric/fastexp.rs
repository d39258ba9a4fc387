//! Branch-free `exp` for non-positive arguments, written so that loops over
//! slices auto-vectorise. Every Gaussian bump in the crate goes through it so
//! fitted and evaluated models agree bit for bit.

const LOG2E: f64 = std::f64::consts::LOG2_E;
const LN2_HI: f64 = 6.931_471_803_691_238e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
/// 1.5 · 2^52: adding it rounds to the nearest integer and leaves that
/// integer in the low mantissa bits.
const SHIFTER: f64 = 6_755_399_441_055_744.0;
/// Below this the result would be subnormal; it is returned as zero.
pub const EXP_NEG_CUTOFF: f64 = -708.0;

/// `e^x` for `x <= 0`, within a few ulp of `f64::exp`; returns `0.0` for
/// `x < -708`. Positive inputs are clamped to 0.
#[inline(always)]
pub fn exp_neg(x: f64) -> f64 {
    let xc = x.clamp(EXP_NEG_CUTOFF, 0.0);
    let t = xc * LOG2E + SHIFTER;
    let n = t - SHIFTER;
    let r = (xc - n * LN2_HI) - n * LN2_LO;
    // Taylor series of e^r on |r| <= ln2/2, degree 12
    let mut p = 1.0 / 479_001_600.0;
    p = p * r + 1.0 / 39_916_800.0;
    p = p * r + 1.0 / 3_628_800.0;
    p = p * r + 1.0 / 362_880.0;
    p = p * r + 1.0 / 40_320.0;
    p = p * r + 1.0 / 5_040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    // bits(t) = bits(SHIFTER) + n, so the biased exponent n + 1023 is an
    // integer difference
    let biased = t
        .to_bits()
        .wrapping_sub(SHIFTER.to_bits())
        .wrapping_add(1023);
    let scale = f64::from_bits(biased << 52);
    let v = p * scale;
    if x < EXP_NEG_CUTOFF {
        0.0
    } else {
        v
    }
}

/// `out[i] = exp(-(z[i] - center)² / 2)`, the Gaussian bump at `center`.
///
/// Uses AVX2 when the CPU has it. Neither path fuses multiply-adds, so both
/// produce identical bits.
pub fn gaussian_bump_into(out: &mut [f64], z: &[f64], center: f64) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the required CPU feature was detected at runtime.
            unsafe { bump_avx2(out, z, center) };
            return;
        }
    }
    bump_kernel(out, z, center);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn bump_avx2(out: &mut [f64], z: &[f64], center: f64) {
    bump_kernel(out, z, center);
}

#[inline(always)]
fn bump_kernel(out: &mut [f64], z: &[f64], center: f64) {
    for (o, &zi) in out.iter_mut().zip(z) {
        let u = zi - center;
        *o = exp_neg(-0.5 * u * u);
    }
}
