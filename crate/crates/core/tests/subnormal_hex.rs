use ataflow_core::snapshot::{from_hex_float, to_hex_float};

#[test]
fn subnormal_hex_roundtrip() {
    for bits in [
        1u64,
        0xf_ffff_ffff_ffff,
        0x8_0000_0000_0000,
        12345,
        0x7_1234_5678_9abc,
    ] {
        let v = f64::from_bits(bits);
        let s = to_hex_float(v);
        let back = from_hex_float(&s).unwrap();
        assert_eq!(back.to_bits(), bits, "{v:e} -> {s} -> {back:e}");
    }
}
