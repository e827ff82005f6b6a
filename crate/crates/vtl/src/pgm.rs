//! Binary 8-bit PGM (P5).

use vtl_core::corpus::Raster;

/// Parse a P5 file. Values are rescaled to 0..=255 when maxval is below 255.
pub fn decode(bytes: &[u8]) -> Result<Raster, String> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| "non-ASCII header")?.to_string());
    }
    if fields[0] != "P5" {
        return Err(format!("magic {:?} is not P5", fields[0]));
    }
    let num = |s: &str, what: &str| s.parse::<usize>().map_err(|_| format!("bad {what} {s:?}"));
    let width = num(&fields[1], "width")?;
    let height = num(&fields[2], "height")?;
    let maxval = num(&fields[3], "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(format!("maxval {maxval} is not an 8-bit value"));
    }
    pos += 1;
    let n = width * height;
    let data = bytes.get(pos..pos + n).ok_or_else(|| format!("expected {n} pixel bytes"))?;
    let data: Vec<u8> = if maxval == 255 {
        data.to_vec()
    } else {
        data.iter().map(|&v| ((v.min(maxval as u8) as usize * 255 + maxval / 2) / maxval) as u8).collect()
    };
    Raster::from_data(height, width, 1, data).map_err(|e| e.to_string())
}

pub fn encode(r: &Raster) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", r.width, r.height).into_bytes();
    if r.channels == 1 {
        out.extend_from_slice(&r.data);
    } else {
        out.extend(r.data.chunks(r.channels).map(|px| (px.iter().map(|&v| v as usize).sum::<usize>() / px.len()) as u8));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let r = Raster::from_data(2, 3, 1, vec![0, 10, 20, 30, 40, 255]).unwrap();
        assert_eq!(decode(&encode(&r)).unwrap(), r);
    }

    #[test]
    fn comments_and_maxval() {
        let mut b = b"P5 # made by hand\n2 1\n# c\n15\n".to_vec();
        b.extend([0, 15]);
        let r = decode(&b).unwrap();
        assert_eq!(r.data, vec![0, 255]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(decode(b"P2\n1 1\n255\n\0").is_err());
        assert!(decode(b"P5\n2 2\n255\n\0").is_err());
        assert!(decode(b"P5\n2").is_err());
    }
}
