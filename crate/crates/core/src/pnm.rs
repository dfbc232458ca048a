//! Binary PPM (P6) frames and PGM (P5) masks.

use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::geom::{Frame, Mask};

#[derive(Debug, Error)]
pub enum PnmError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("expected magic {expected}, found {found:?}")]
    Magic {
        expected: &'static str,
        found: String,
    },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("only maxval 255 is supported, got {0}")]
    MaxVal(u32),
}

pub fn write_ppm<W: Write>(mut w: W, frame: &Frame) -> Result<(), PnmError> {
    write!(w, "P6\n{} {}\n255\n", frame.width(), frame.height())?;
    w.write_all(frame.pixels())?;
    Ok(())
}

pub fn encode_ppm(frame: &Frame) -> Vec<u8> {
    let mut out = Vec::with_capacity(frame.pixels().len() + 20);
    write_ppm(&mut out, frame).expect("writing to a Vec cannot fail");
    out
}

pub fn read_ppm<R: BufRead>(mut r: R) -> Result<Frame, PnmError> {
    let (width, height) = read_header(&mut r, "P6")?;
    let mut pixels = vec![0u8; width * height * 3];
    r.read_exact(&mut pixels)?;
    Frame::new(0, 0, 0, width, height, pixels).map_err(|e| PnmError::Header(e.to_string()))
}

/// Writes on-pixels as 255 and off-pixels as 0.
pub fn write_pgm<W: Write>(mut w: W, mask: &Mask) -> Result<(), PnmError> {
    write!(w, "P5\n{} {}\n255\n", mask.width(), mask.height())?;
    let bytes: Vec<u8> = mask
        .as_bytes()
        .iter()
        .map(|&v| if v != 0 { 255 } else { 0 })
        .collect();
    w.write_all(&bytes)?;
    Ok(())
}

/// Any non-zero grey value reads back as on.
pub fn read_pgm<R: BufRead>(mut r: R) -> Result<Mask, PnmError> {
    let (width, height) = read_header(&mut r, "P5")?;
    let mut data = vec![0u8; width * height];
    r.read_exact(&mut data)?;
    Ok(Mask::from_fn(width, height, |x, y| {
        data[y * width + x] != 0
    }))
}

fn read_header<R: BufRead>(r: &mut R, magic: &'static str) -> Result<(usize, usize), PnmError> {
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        let tok = next_token(r)?;
        if tok.is_empty() {
            return Err(PnmError::Header("unexpected end of header".into()));
        }
        tokens.push(tok);
    }
    if tokens[0] != magic {
        return Err(PnmError::Magic {
            expected: magic,
            found: tokens[0].clone(),
        });
    }
    let num = |s: &str| {
        s.parse::<u32>()
            .map_err(|_| PnmError::Header(format!("bad number `{s}`")))
    };
    let (w, h, max) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
    if max != 255 {
        return Err(PnmError::MaxVal(max));
    }
    Ok((w as usize, h as usize))
}

/// Reads one whitespace-delimited token, skipping `#` comments. Consumes exactly one
/// trailing whitespace byte, as the format requires before the raster.
fn next_token<R: BufRead>(r: &mut R) -> Result<String, PnmError> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Ok(tok);
        }
        let c = byte[0];
        if c == b'#' && tok.is_empty() {
            let mut skip = Vec::new();
            r.read_until(b'\n', &mut skip)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            return Ok(tok);
        }
        tok.push(c as char);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_with_comment() {
        let mut f = Frame::filled(0, 3, 2, [10, 20, 30]);
        f.set(2, 1, [255, 0, 7]);
        let mut bytes = encode_ppm(&f);
        bytes.splice(3..3, b"# made by hand\n".iter().copied());
        let back = read_ppm(&bytes[..]).unwrap();
        assert_eq!(back.pixels(), f.pixels());
        assert_eq!(back.dims(), (3, 2));
    }

    #[test]
    fn pgm_round_trip() {
        let m = Mask::from_fn(5, 3, |x, y| x == y);
        let mut bytes = Vec::new();
        write_pgm(&mut bytes, &m).unwrap();
        assert_eq!(read_pgm(&bytes[..]).unwrap(), m);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let m = Mask::new(2, 2);
        let mut bytes = Vec::new();
        write_pgm(&mut bytes, &m).unwrap();
        assert!(matches!(read_ppm(&bytes[..]), Err(PnmError::Magic { .. })));
    }
}
