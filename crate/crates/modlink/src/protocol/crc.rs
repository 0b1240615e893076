//! Frame checksum: CRC-8, polynomial 0x07, init 0x00, MSB first,
//! no reflection, no final XOR.

const POLY: u8 = 0x07;

const TABLE: [u8; 256] = build_table();

const fn build_table() -> [u8; 256] {
    let mut table = [0u8; 256];
    let mut i = 0usize;
    while i < 256 {
        let mut crc = i as u8;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 0x80 != 0 {
                (crc << 1) ^ POLY
            } else {
                crc << 1
            };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

/// CRC-8 over `data`, table-driven.
pub fn crc8(data: &[u8]) -> u8 {
    let mut crc = 0u8;
    for &byte in data {
        crc = TABLE[(crc ^ byte) as usize];
    }
    crc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_is_init_value() {
        assert_eq!(crc8(&[]), 0x00);
    }

    #[test]
    fn zero_byte_stays_zero() {
        // A zero byte through a zero-init MSB-first CRC never sets the top
        // bit, so the polynomial is never applied.
        assert_eq!(crc8(&[0x00]), 0x00);
    }

    #[test]
    fn standard_check_vector() {
        // Catalog check value for CRC-8 poly=0x07 init=0 refin=refout=false
        // xorout=0, frozen from the bitwise reference below.
        assert_eq!(crc8(b"123456789"), 0xF4);
    }

    #[test]
    fn matches_bitwise_reference() {
        fn crc8_bitwise(data: &[u8]) -> u8 {
            let mut crc = 0u8;
            for &byte in data {
                crc ^= byte;
                for _ in 0..8 {
                    crc = if crc & 0x80 != 0 {
                        (crc << 1) ^ 0x07
                    } else {
                        crc << 1
                    };
                }
            }
            crc
        }
        for len in 0..32 {
            let data: Vec<u8> = (0..len).map(|i| (i * 37 + 11) as u8).collect();
            assert_eq!(crc8(&data), crc8_bitwise(&data));
        }
    }
}
