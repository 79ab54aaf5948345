//! Netpbm codec: PBM (P1/P4) and PGM (P2/P5).
//!
//! Hand-rolled because the error contract wants byte offsets on corrupt
//! input and the image crate's PNM support drags in formats this tool
//! never reads. Parse errors carry the offset of the failing byte; the
//! caller attaches the path.

/// Raw decoded pixels, before intensity mapping.
#[derive(Debug)]
pub enum PnmPixels {
    /// P2/P5 samples, each in 0..=maxval.
    Gray { maxval: u16, samples: Vec<u16> },
    /// P1/P4 flags, 1 = black.
    Bits(Vec<u8>),
}

#[derive(Debug)]
pub struct Pnm {
    pub width: usize,
    pub height: usize,
    pub pixels: PnmPixels,
}

pub type PnmError = (usize, String);

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn fail<T>(&self, msg: impl Into<String>) -> Result<T, PnmError> {
        Err((self.pos, msg.into()))
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    /// Skips whitespace and `#` comments (which run to end of line).
    fn skip_separators(&mut self) {
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(b) = self.peek() {
                    self.pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn read_uint(&mut self, what: &str, max: u64) -> Result<u64, PnmError> {
        self.skip_separators();
        let start = self.pos;
        let mut value: u64 = 0;
        while let Some(b) = self.peek() {
            if !b.is_ascii_digit() {
                break;
            }
            value = value * 10 + (b - b'0') as u64;
            if value > max {
                return self.fail(format!("{} exceeds {}", what, max));
            }
            self.pos += 1;
        }
        if self.pos == start {
            return self.fail(format!("expected {}", what));
        }
        Ok(value)
    }

    /// The single whitespace byte that separates a binary header from its
    /// raster.
    fn expect_raster_separator(&mut self) -> Result<(), PnmError> {
        match self.peek() {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(())
            }
            _ => self.fail("expected whitespace before raster"),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], PnmError> {
        if self.pos + n > self.bytes.len() {
            return self.fail(format!(
                "truncated {}: need {} bytes, {} remain",
                what,
                n,
                self.bytes.len() - self.pos
            ));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }
}

pub fn parse(bytes: &[u8]) -> Result<Pnm, PnmError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(2, "magic")?;
    let kind = match magic {
        b"P1" | b"P2" | b"P4" | b"P5" => magic[1],
        _ => return Err((0, "not a P1/P2/P4/P5 file".to_string())),
    };
    let width = cur.read_uint("width", 1 << 20)? as usize;
    let height = cur.read_uint("height", 1 << 20)? as usize;
    if width == 0 || height == 0 {
        return cur.fail("zero dimension");
    }
    let count = width * height;

    let pixels = match kind {
        b'2' | b'5' => {
            let maxval = cur.read_uint("maxval", 65535)? as u16;
            if maxval == 0 {
                return cur.fail("maxval 0");
            }
            let samples = if kind == b'5' {
                cur.expect_raster_separator()?;
                if maxval <= 255 {
                    cur.take(count, "P5 raster")?
                        .iter()
                        .map(|&b| b as u16)
                        .collect()
                } else {
                    let raw = cur.take(2 * count, "P5 raster")?;
                    raw.chunks_exact(2)
                        .map(|p| u16::from_be_bytes([p[0], p[1]]))
                        .collect()
                }
            } else {
                let mut samples = Vec::with_capacity(count);
                for _ in 0..count {
                    samples.push(cur.read_uint("P2 sample", maxval as u64)? as u16);
                }
                samples
            };
            PnmPixels::Gray { maxval, samples }
        }
        b'1' => {
            let mut bits = Vec::with_capacity(count);
            while bits.len() < count {
                cur.skip_separators();
                match cur.peek() {
                    Some(b'0') => bits.push(0),
                    Some(b'1') => bits.push(1),
                    Some(_) => return cur.fail("P1 pixel must be 0 or 1"),
                    None => return cur.fail("truncated P1 raster"),
                }
                cur.pos += 1;
            }
            PnmPixels::Bits(bits)
        }
        b'4' => {
            cur.expect_raster_separator()?;
            let row_bytes = width.div_ceil(8);
            let raw = cur.take(row_bytes * height, "P4 raster")?;
            let mut bits = Vec::with_capacity(count);
            for row in raw.chunks_exact(row_bytes) {
                for x in 0..width {
                    bits.push((row[x / 8] >> (7 - x % 8)) & 1);
                }
            }
            PnmPixels::Bits(bits)
        }
        _ => unreachable!(),
    };
    Ok(Pnm {
        width,
        height,
        pixels,
    })
}

/// P5 with maxval 255.
pub fn write_p5(width: usize, height: usize, samples: &[u8]) -> Vec<u8> {
    debug_assert_eq!(samples.len(), width * height);
    let mut out = format!("P5\n{} {}\n255\n", width, height).into_bytes();
    out.extend_from_slice(samples);
    out
}

/// P4; `bits` holds one 0/1 flag per pixel, 1 = black.
pub fn write_p4(width: usize, height: usize, bits: &[u8]) -> Vec<u8> {
    debug_assert_eq!(bits.len(), width * height);
    let row_bytes = width.div_ceil(8);
    let mut out = format!("P4\n{} {}\n", width, height).into_bytes();
    for row in bits.chunks_exact(width) {
        let mut packed = vec![0u8; row_bytes];
        for (x, &b) in row.iter().enumerate() {
            packed[x / 8] |= (b & 1) << (7 - x % 8);
        }
        out.extend_from_slice(&packed);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p2_single_sample() {
        let pnm = parse(b"P2\n1 1\n255\n128\n").unwrap();
        assert_eq!((pnm.width, pnm.height), (1, 1));
        match pnm.pixels {
            PnmPixels::Gray { maxval, samples } => {
                assert_eq!(maxval, 255);
                assert_eq!(samples, vec![128]);
            }
            _ => panic!("wrong variant"),
        }
    }

    #[test]
    fn p5_round_trips_bit_exact() {
        let samples: Vec<u8> = (0..=255).collect();
        let bytes = write_p5(16, 16, &samples);
        let pnm = parse(&bytes).unwrap();
        match pnm.pixels {
            PnmPixels::Gray {
                maxval: 255,
                samples: got,
            } => {
                assert_eq!(got, samples.iter().map(|&b| b as u16).collect::<Vec<_>>());
            }
            _ => panic!("wrong variant"),
        }
        assert_eq!(write_p5(16, 16, &samples), bytes);
    }

    #[test]
    fn p5_two_byte_samples() {
        let mut bytes = b"P5\n2 1\n65535\n".to_vec();
        bytes.extend_from_slice(&[0x01, 0x00, 0xFF, 0xFF]);
        let pnm = parse(&bytes).unwrap();
        match pnm.pixels {
            PnmPixels::Gray {
                maxval: 65535,
                samples,
            } => assert_eq!(samples, vec![256, 65535]),
            _ => panic!("wrong variant"),
        }
    }

    #[test]
    fn p1_accepts_packed_digits() {
        let pnm = parse(b"P1\n# comment\n2 2\n0110").unwrap();
        match pnm.pixels {
            PnmPixels::Bits(bits) => assert_eq!(bits, vec![0, 1, 1, 0]),
            _ => panic!("wrong variant"),
        }
    }

    #[test]
    fn p4_rows_are_byte_padded() {
        // Width 10: each row takes 2 bytes; second byte has 6 dead bits.
        let bits: Vec<u8> = (0..20).map(|i| (i % 3 == 0) as u8).collect();
        let bytes = write_p4(10, 2, &bits);
        let pnm = parse(&bytes).unwrap();
        match pnm.pixels {
            PnmPixels::Bits(got) => assert_eq!(got, bits),
            _ => panic!("wrong variant"),
        }
    }

    #[test]
    fn truncated_p5_reports_byte_offset() {
        // Raster starts at byte 11; only 3 of 16 sample bytes are present.
        let bytes = b"P5\n4 4\n255\nabc";
        let (offset, msg) = parse(bytes).unwrap_err();
        assert_eq!(offset, 11, "{}", msg);
        assert!(msg.contains("truncated"));
    }

    #[test]
    fn oversized_p2_sample_is_an_error() {
        let err = parse(b"P2\n1 1\n15\n16\n").unwrap_err();
        assert!(err.1.contains("exceeds 15"));
    }

    #[test]
    fn bad_magic_is_an_error() {
        assert!(parse(b"P7\n1 1\n255\n\x00").is_err());
        assert!(parse(b"").is_err());
    }
}
