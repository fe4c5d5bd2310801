//! Elementwise activations and their derivatives.

/// Logistic function. Branch-free; the argument of the exponential is
/// clamped, so extreme inputs saturate instead of overflowing.
#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + exp_fast(-x))
}

#[inline]
pub fn silu(x: f32) -> f32 {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad(x: f32) -> f32 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// `ln(1 + e^x)`, linear above 20 to avoid overflow.
#[inline]
pub fn softplus(x: f32) -> f32 {
    if x > 20.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of [`softplus`].
#[inline]
pub fn softplus_grad(x: f32) -> f32 {
    if x > 20.0 {
        1.0
    } else {
        sigmoid(x)
    }
}

/// `e^x` via range reduction and a degree-6 polynomial (about 1 ulp), written
/// without branches so loops over it vectorize. Inputs are clamped to
/// `[-87, 88]`.
#[inline(always)]
pub fn exp_fast(x: f32) -> f32 {
    const LOG2E: f32 = std::f32::consts::LOG2_E;
    const LN2_HI: f32 = 0.693_359_4;
    const LN2_LO: f32 = -2.121_944_4e-4;
    const ROUND: f32 = 12_582_912.0;
    let x = x.clamp(-87.0, 88.0);
    // Adding ROUND leaves round(x log2 e) in the low mantissa bits of `z`.
    let z = x * LOG2E + ROUND;
    let k = z - ROUND;
    let r = x - k * LN2_HI - k * LN2_LO;
    let mut p = 1.987_569_1e-4;
    p = p * r + 1.398_199_9e-3;
    p = p * r + 8.333_452e-3;
    p = p * r + 4.166_579_6e-2;
    p = p * r + 1.666_666_5e-1;
    p = p * r + 5.000_000_3e-1;
    let y = p * r * r + r + 1.0;
    let ki = z.to_bits().wrapping_sub(ROUND.to_bits());
    y * f32::from_bits(ki.wrapping_add(127) << 23)
}

/// Sum of `xs` accumulated in eight interleaved lanes (fixed order, so the
/// result is reproducible).
#[inline(always)]
pub fn lane_sum(xs: &[f32]) -> f32 {
    let mut lanes = [0.0f32; 8];
    let mut chunks = xs.chunks_exact(8);
    for c in &mut chunks {
        for (l, &v) in lanes.iter_mut().zip(c) {
            *l += v;
        }
    }
    for (l, &v) in lanes.iter_mut().zip(chunks.remainder()) {
        *l += v;
    }
    ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5])) + ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]))
}

pub fn silu_inplace(xs: &mut [f32]) {
    for v in xs {
        *v = silu(*v);
    }
}

/// `dx = dy * silu'(x)`
pub fn silu_backward(x: &[f32], dy: &[f32]) -> Vec<f32> {
    x.iter().zip(dy).map(|(&x, &d)| d * silu_grad(x)).collect()
}

/// `dx = dy * s (1 - s)` given the forward output `s`.
pub fn sigmoid_backward(s: &[f32], dy: &[f32]) -> Vec<f32> {
    s.iter().zip(dy).map(|(&s, &d)| d * s * (1.0 - s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_fast_is_accurate() {
        let mut x = -90.0f32;
        while x < 80.0 {
            let (a, b) = (exp_fast(x) as f64, (x as f64).exp());
            if x > -87.0 {
                assert!((a - b).abs() <= 4e-7 * b, "x {x}: {a} vs {b}");
            }
            x += 0.0137;
        }
        assert_eq!(exp_fast(0.0), 1.0);
    }

    #[test]
    fn lane_sum_matches_plain_sum() {
        let xs: Vec<f32> = (0..37).map(|i| i as f32 * 0.5).collect();
        assert_eq!(lane_sum(&xs), xs.iter().sum::<f32>());
        assert_eq!(lane_sum(&[]), 0.0);
    }

    #[test]
    fn known_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(silu(0.0), 0.0);
        assert!((softplus(0.0) - std::f32::consts::LN_2).abs() < 1e-7);
        assert_eq!(softplus(50.0), 50.0);
        assert!(sigmoid(-100.0) >= 0.0 && sigmoid(100.0) <= 1.0);
    }

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-3f64;
        for i in -20..=20 {
            let x = i as f64 * 0.3;
            let fd = |f: fn(f32) -> f32| (f((x + h) as f32) as f64 - f((x - h) as f32) as f64) / (2.0 * h);
            assert!((fd(silu) - silu_grad(x as f32) as f64).abs() < 2e-3, "silu at {x}");
            assert!((fd(softplus) - softplus_grad(x as f32) as f64).abs() < 2e-3, "softplus at {x}");
            let s = sigmoid(x as f32);
            assert!((fd(sigmoid) - (s * (1.0 - s)) as f64).abs() < 2e-3, "sigmoid at {x}");
        }
    }
}
