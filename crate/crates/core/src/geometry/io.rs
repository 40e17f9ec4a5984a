//! Cloud persistence.
//!
//! CSV: a header line `dim=N,count=n` followed by one comma-separated point
//! per row. Values are written in shortest round-trip form, so CSV reloads
//! are exact.
//!
//! Binary: 8-byte magic `ATCLOUD1`, little-endian `u32` dim, `u32` count,
//! then `count * dim` little-endian `f64` values.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::PointCloud;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"ATCLOUD1";
const HEADER_LEN: usize = 16;

pub fn to_csv_string(cloud: &PointCloud) -> String {
    let mut out = format!("dim={},count={}\n", cloud.dim(), cloud.len());
    for p in cloud.points() {
        let row: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn from_csv_str(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::format("empty cloud CSV"))?;
    let (dim, count) = parse_header(header)?;
    let mut data = Vec::with_capacity(dim * count);
    let mut rows = 0;
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::format(format!("row {}: bad number {field:?}", lineno + 1)))?;
            data.push(v);
        }
        if data.len() - before != dim {
            return Err(Error::format(format!(
                "row {} has {} values, header says dim={dim}",
                lineno + 1,
                data.len() - before
            )));
        }
        rows += 1;
    }
    if rows != count {
        return Err(Error::format(format!("header says count={count}, found {rows} rows")));
    }
    PointCloud::new(dim, data).map_err(|e| Error::format(e.to_string()))
}

fn parse_header(header: &str) -> Result<(usize, usize)> {
    let bad = || Error::format(format!("bad cloud CSV header {header:?}, expected \"dim=N,count=n\""));
    let mut parts = header.trim().split(',');
    let dim = parts
        .next()
        .and_then(|s| s.trim().strip_prefix("dim="))
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(bad)?;
    let count = parts
        .next()
        .and_then(|s| s.trim().strip_prefix("count="))
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(bad)?;
    if parts.next().is_some() || dim == 0 {
        return Err(bad());
    }
    Ok((dim, count))
}

pub fn to_bytes(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * cloud.as_flat().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(cloud.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(cloud.len() as u32).to_le_bytes());
    for v in cloud.as_flat() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(format!("binary cloud truncated: {} header bytes", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::format("binary cloud magic mismatch"));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if dim == 0 {
        return Err(Error::format("binary cloud with dim=0"));
    }
    let expected = HEADER_LEN + 8 * dim * count;
    if bytes.len() != expected {
        return Err(Error::format(format!(
            "binary cloud has {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    PointCloud::new(dim, data).map_err(|e| Error::format(e.to_string()))
}

pub fn save_csv(path: &Path, cloud: &PointCloud) -> Result<()> {
    fs::File::create(path)?.write_all(to_csv_string(cloud).as_bytes())?;
    Ok(())
}

pub fn save_bin(path: &Path, cloud: &PointCloud) -> Result<()> {
    fs::write(path, to_bytes(cloud))?;
    Ok(())
}

/// Load a cloud, detecting the binary format by its magic bytes.
pub fn load(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        from_bytes(&bytes)
    } else {
        let text = std::str::from_utf8(&bytes).map_err(|_| Error::format("cloud file is neither binary nor UTF-8 CSV"))?;
        from_csv_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn truncated_and_corrupt() {
        let c = PointCloud::from_rows(&[[1.0, 2.0], [3.0, 4.5]]).unwrap();
        let bytes = to_bytes(&c);
        assert_eq!(&bytes[..8], b"ATCLOUD1");
        assert_eq!(bytes.len(), 16 + 32);
        assert!(matches!(from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        assert!(matches!(from_bytes(&bytes[..10]), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(from_bytes(&bad), Err(Error::Format(_))));

        assert!(matches!(from_csv_str("dim=2,count=3\n1,2\n3,4\n"), Err(Error::Format(_))));
        assert!(matches!(from_csv_str("dims=2\n1,2\n"), Err(Error::Format(_))));
        assert!(matches!(from_csv_str("dim=2,count=1\n1,x\n"), Err(Error::Format(_))));
    }

    #[test]
    fn csv_header() {
        let c = PointCloud::from_rows(&[[0.1, -2.0, 1e-300]]).unwrap();
        let s = to_csv_string(&c);
        assert!(s.starts_with("dim=3,count=1\n"));
    }

    proptest! {
        #[test]
        fn both_formats_reload_exactly(vals in proptest::collection::vec(-1e6f64..1e6, 1..60), dim in 1usize..4) {
            let n = vals.len() / dim;
            prop_assume!(n > 0);
            let c = PointCloud::new(dim, vals[..n * dim].to_vec()).unwrap();
            let b = from_bytes(&to_bytes(&c)).unwrap();
            let t = from_csv_str(&to_csv_string(&c)).unwrap();
            prop_assert_eq!(b.as_flat(), c.as_flat());
            prop_assert_eq!(t.as_flat(), c.as_flat());
        }
    }
}
