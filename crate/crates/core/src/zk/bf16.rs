//! Brain floating point: f32 with the low 16 mantissa bits dropped.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bf16(pub u16);

/// Round-to-nearest-even on the low 16 bits. Values past the largest finite
/// BF16 round to infinity.
pub fn quantize_bf16(x: f32) -> Bf16 {
    let bits = x.to_bits();
    if x.is_nan() {
        return Bf16(((bits >> 16) as u16) | 0x0040);
    }
    let lsb = (bits >> 16) & 1;
    Bf16((bits.wrapping_add(0x7FFF + lsb) >> 16) as u16)
}

impl Bf16 {
    pub fn to_f32(self) -> f32 {
        f32::from_bits((self.0 as u32) << 16)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    #[allow(clippy::excessive_precision)]
    fn nearest_even_reference_values() {
        // nearest neighbours computed with exact rational distances
        let cases: [(f32, u16); 10] = [
            (0.1, 0x3dcd),
            (1.0, 0x3f80),
            (-2.5, 0xc020),
            (std::f32::consts::PI, 0x4049),
            (1.00390625, 0x3f80),
            (1.01171875, 0x3f82),
            (-0.0078125, 0xbc00),
            (65504.0, 0x4780),
            (1e-3, 0x3a83),
            (0.3333333, 0x3eab),
        ];
        for (x, want) in cases {
            assert_eq!(quantize_bf16(x), Bf16(want), "{x}");
        }
        assert_eq!(quantize_bf16(0.1).to_f32(), 0.10009765625);
    }

    #[test]
    fn representable_values_are_fixed() {
        for h in (0u16..0x7f80).step_by(97) {
            let b = Bf16(h);
            assert_eq!(quantize_bf16(b.to_f32()), b);
            assert_eq!(quantize_bf16(-b.to_f32()), Bf16(h | 0x8000));
        }
    }

    #[test]
    fn infinities_saturate() {
        assert_eq!(quantize_bf16(f32::INFINITY).to_f32(), f32::INFINITY);
        assert_eq!(quantize_bf16(f32::NEG_INFINITY).to_f32(), f32::NEG_INFINITY);
        assert_eq!(quantize_bf16(f32::MAX).to_f32(), f32::INFINITY);
        assert!(quantize_bf16(f32::NAN).to_f32().is_nan());
    }
}
