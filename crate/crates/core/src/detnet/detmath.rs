//! Deterministic binary32 transcendentals.
//!
//! Platform `expf`/`logf` differ across libm implementations, which would
//! break bit-exact replay. These use only IEEE-754 basic operations (add,
//! sub, mul, div, round-to-integral) in a fixed order, so they return
//! identical bits everywhere.
//!
//! `det_exp`: `k = round(x * log2(e))`, `r = (x - k*LN2_HI) - k*LN2_LO`
//! (Cody-Waite), degree-7 Taylor polynomial in Horner form on
//! `|r| <= ln(2)/2`, then an exact scaling by `2^k` through the exponent bits.
//!
//! `det_ln`: split `x = 2^e * f` with `f` in `[sqrt(1/2), sqrt(2))`,
//! `s = (f-1)/(f+1)`, `ln f = 2 (s + s^3/3 + ... + s^9/9)`, `ln x = e*ln 2 + ln f`.

const LOG2E: f32 = core::f32::consts::LOG2_E;
// ln 2 split so that k * LN2_HI is exact for |k| < 2^9.
const LN2_HI: f32 = 0.693_145_75;
const LN2_LO: f32 = 1.428_606_8e-6;
const LN2: f32 = core::f32::consts::LN_2;

/// `2^k` for k in the normal range.
#[inline]
fn pow2i(k: i32) -> f32 {
    debug_assert!((-126..=127).contains(&k));
    f32::from_bits(((k + 127) as u32) << 23)
}

pub fn det_exp(x: f32) -> f32 {
    if x.is_nan() {
        return x;
    }
    if x > 88.722_84 {
        return f32::INFINITY;
    }
    if x < -103.972_08 {
        return 0.0;
    }
    let k = (x * LOG2E).round();
    let r = (x - k * LN2_HI) - k * LN2_LO;
    let p = 1.0
        + r * (1.0
            + r * (0.5
                + r * (1.0 / 6.0 + r * (1.0 / 24.0 + r * (1.0 / 120.0 + r * (1.0 / 720.0 + r * (1.0 / 5040.0)))))));
    let k = k as i32;
    if k > 127 {
        p * pow2i(127) * pow2i(k - 127)
    } else if k < -126 {
        // two steps so the intermediate stays normal; the final multiply
        // rounds once into the subnormal range
        p * pow2i(k + 126) * pow2i(-126)
    } else {
        p * pow2i(k)
    }
}

pub fn det_ln(x: f32) -> f32 {
    if x.is_nan() || x < 0.0 {
        return f32::NAN;
    }
    if x == 0.0 {
        return f32::NEG_INFINITY;
    }
    if x.is_infinite() {
        return f32::INFINITY;
    }
    let mut bits = x.to_bits();
    let mut e: i32 = 0;
    if bits < 0x0080_0000 {
        // subnormal: scale by 2^25 exactly
        bits = (x * 33_554_432.0).to_bits();
        e -= 25;
    }
    e += ((bits >> 23) & 0xff) as i32 - 127;
    let mut f = f32::from_bits((bits & 0x007f_ffff) | 0x3f80_0000);
    if f > core::f32::consts::SQRT_2 {
        f *= 0.5;
        e += 1;
    }
    let s = (f - 1.0) / (f + 1.0);
    let s2 = s * s;
    let series = s * (2.0 + s2 * (2.0 / 3.0 + s2 * (2.0 / 5.0 + s2 * (2.0 / 7.0 + s2 * (2.0 / 9.0)))));
    e as f32 * LN2 + series
}

/// `base^exp` by binary exponentiation in binary32, fixed operation order.
pub fn det_powu(base: f32, mut exp: u64) -> f32 {
    let mut acc = 1.0f32;
    let mut b = base;
    while exp > 0 {
        if exp & 1 == 1 {
            acc *= b;
        }
        exp >>= 1;
        if exp > 0 {
            b *= b;
        }
    }
    acc
}
